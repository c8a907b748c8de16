//! Nested-dissection ordering on the symmetrised pattern.
//!
//! Vertices with identical closed neighbourhoods (the unknowns sharing a mesh
//! vertex) are merged into supervariables first, the quotient graph is
//! dissected with level-set separators, and each supervariable is expanded
//! back into consecutive positions.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::SparseMatrix;
use crate::math;

const LEAF: usize = 8;

/// Fill-reducing symmetric permutation: `order[k]` is the k-th eliminated
/// unknown. Rows denser than `max(16, 10 sqrt(n))` go last.
pub fn nested_dissection(a: &SparseMatrix) -> Vec<usize> {
    let n = a.nrows();
    let at = a.transpose();
    let mut adj: Vec<Vec<usize>> = (0..n)
        .map(|r| {
            let mut l: Vec<usize> = a
                .row(r)
                .0
                .iter()
                .chain(at.row(r).0)
                .copied()
                .filter(|&c| c != r)
                .collect();
            l.sort_unstable();
            l.dedup();
            l
        })
        .collect();
    let dense_limit = 16usize.max((10.0 * math::sqrt(n as f64)) as usize);
    let dense: Vec<bool> = adj.iter().map(|l| l.len() > dense_limit).collect();
    for list in &mut adj {
        list.retain(|&c| !dense[c]);
    }
    let sparse: Vec<usize> = (0..n).filter(|&v| !dense[v]).collect();

    // supervariables: equal closed neighbourhoods
    let closed = |v: usize| -> Vec<usize> {
        let mut l = adj[v].clone();
        let at = l.partition_point(|&c| c < v);
        l.insert(at, v);
        l
    };
    let mut keyed: Vec<(Vec<usize>, usize)> = sparse.iter().map(|&v| (closed(v), v)).collect();
    keyed.sort_unstable();
    let mut super_of = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (k, (key, v)) in keyed.iter().enumerate() {
        if k == 0 || *key != keyed[k - 1].0 {
            members.push(Vec::new());
        }
        super_of[*v] = members.len() - 1;
        members.last_mut().expect("pushed").push(*v);
    }
    for m in &mut members {
        m.sort_unstable();
    }
    let m = members.len();
    let qadj: Vec<Vec<usize>> = members
        .iter()
        .enumerate()
        .map(|(s, mem)| {
            let mut l: Vec<usize> = adj[mem[0]]
                .iter()
                .map(|&c| super_of[c])
                .filter(|&t| t != s)
                .collect();
            l.sort_unstable();
            l.dedup();
            l
        })
        .collect();

    // dissect components in order of their smallest supervariable
    let mut nd = Dissector {
        adj: &qadj,
        label: vec![0; m],
        next_label: 1,
        dist: vec![usize::MAX; m],
    };
    let mut qorder = Vec::with_capacity(m);
    nd.dissect((0..m).collect(), &mut qorder);

    let mut order = Vec::with_capacity(n);
    for s in qorder {
        order.extend_from_slice(&members[s]);
    }
    order.extend((0..n).filter(|&v| dense[v]));
    order
}

struct Dissector<'a> {
    adj: &'a [Vec<usize>],
    label: Vec<usize>,
    next_label: usize,
    dist: Vec<usize>,
}

impl Dissector<'_> {
    fn relabel(&mut self, set: &[usize]) -> usize {
        let l = self.next_label;
        self.next_label += 1;
        for &v in set {
            self.label[v] = l;
        }
        l
    }

    /// BFS inside the vertices labelled `l`; returns the visit order and the
    /// offsets of its level sets (with a final sentinel).
    fn bfs(&mut self, start: usize, l: usize) -> (Vec<usize>, Vec<usize>) {
        let mut visit = vec![start];
        self.dist[start] = 0;
        let mut head = 0;
        while head < visit.len() {
            let v = visit[head];
            head += 1;
            let d = self.dist[v];
            for &w in &self.adj[v] {
                if self.label[w] == l && self.dist[w] == usize::MAX {
                    self.dist[w] = d + 1;
                    visit.push(w);
                }
            }
        }
        let mut levels = vec![0];
        for k in 1..visit.len() {
            if self.dist[visit[k]] != self.dist[visit[k - 1]] {
                levels.push(k);
            }
        }
        levels.push(visit.len());
        for &v in &visit {
            self.dist[v] = usize::MAX;
        }
        (visit, levels)
    }

    fn dissect(&mut self, set: Vec<usize>, order: &mut Vec<usize>) {
        if set.len() <= LEAF {
            order.extend_from_slice(&set);
            return;
        }
        let l = self.relabel(&set);
        let mut queue: VecDeque<usize> = set.iter().copied().collect();
        while let Some(s) = queue.pop_front() {
            if self.label[s] != l {
                continue;
            }
            let (mut visit, mut levels) = self.bfs(s, l);
            // move towards a pseudo-peripheral start
            for _ in 0..4 {
                let far = *visit.last().expect("nonempty");
                let (v2, l2) = self.bfs(far, l);
                if l2.len() <= levels.len() {
                    break;
                }
                visit = v2;
                levels = l2;
            }
            self.relabel(&visit);
            let nlevels = levels.len() - 1;
            if visit.len() <= LEAF || nlevels < 3 {
                order.extend_from_slice(&visit);
                continue;
            }
            // smallest level set near the middle of the vertex count
            let half = visit.len() / 2;
            let mid = (1..nlevels - 1)
                .find(|&k| levels[k + 1] > half)
                .unwrap_or(nlevels - 2);
            let width = |k: usize| levels[k + 1] - levels[k];
            let lo = mid.saturating_sub(nlevels / 8).max(1);
            let hi = (mid + nlevels / 8).min(nlevels - 2);
            let sep = (lo..=hi)
                .min_by_key(|&k| (width(k), k.abs_diff(mid)))
                .unwrap_or(mid);
            let left = visit[..levels[sep]].to_vec();
            let separator = visit[levels[sep]..levels[sep + 1]].to_vec();
            let right = visit[levels[sep + 1]..].to_vec();
            self.dissect(left, order);
            self.dissect(right, order);
            order.extend_from_slice(&separator);
        }
    }
}
