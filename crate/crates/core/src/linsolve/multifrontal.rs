//! Multifrontal LU with threshold partial pivoting and delayed pivots.
//!
//! The symbolic phase works on the symmetrised pattern in the given order:
//! elimination tree, fundamental supernodes and their row structures. Each
//! supernode owns a dense frontal matrix assembled from the original entries
//! and its children's contribution blocks. Pivots are searched among the
//! fully summed rows; a column without an acceptable pivot is handed to the
//! parent front together with one fully summed row.

use alloc::vec;
use alloc::vec::Vec;

use super::SparseMatrix;
use crate::math;
use crate::{Error, Result};

/// Relative threshold a pivot must reach against its column maximum.
const PIVOT_TOL: f64 = 0.01;
const NONE: usize = usize::MAX;

/// Factor statistics reported alongside Newton steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LuStats {
    pub dim: usize,
    pub nnz_l: usize,
    pub nnz_u: usize,
    pub min_pivot: f64,
    pub max_pivot: f64,
    /// Pivots taken off the diagonal of the permuted matrix.
    pub off_diagonal_pivots: usize,
    /// Columns passed on to an ancestor front.
    pub delayed_pivots: usize,
    /// Columns left without a pivot in a rank-deficient factorisation.
    pub null_pivots: usize,
    pub supernodes: usize,
    /// Largest frontal matrix dimension.
    pub max_front: usize,
}

/// Elimination tree and supernode structure of a pattern under an order.
#[derive(Debug, Clone)]
struct Symbolic {
    n: usize,
    /// Position -> original index.
    order: Vec<usize>,
    /// Original index -> position.
    pos: Vec<usize>,
    /// Supernode `s` covers positions `first[s]..first[s + 1]`.
    first: Vec<usize>,
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
    /// Positions below each supernode, ascending.
    below: Vec<Vec<usize>>,
}

impl Symbolic {
    fn new(a: &SparseMatrix, at: &SparseMatrix, order: &[usize]) -> Result<Self> {
        let n = a.nrows();
        let mut pos = vec![NONE; n];
        for (p, &v) in order.iter().enumerate() {
            if v >= n || pos[v] != NONE {
                return Err(Error::InvalidSparsity(
                    "elimination order is not a permutation".into(),
                ));
            }
            pos[v] = p;
        }
        // higher neighbours of each position in the symmetrised pattern
        let upper: Vec<Vec<usize>> = (0..n)
            .map(|p| {
                let v = order[p];
                let mut l: Vec<usize> = a
                    .row(v)
                    .0
                    .iter()
                    .chain(at.row(v).0)
                    .map(|&c| pos[c])
                    .filter(|&q| q > p)
                    .collect();
                l.sort_unstable();
                l.dedup();
                l
            })
            .collect();
        // column structures by merging children, collapsed into supernodes
        let mut col_parent = vec![NONE; n];
        let mut col_children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut pending: Vec<Option<Vec<usize>>> = vec![None; n];
        let mut first = Vec::new();
        let mut below: Vec<Vec<usize>> = Vec::new();
        let mut snode_of = vec![NONE; n];
        for p in 0..n {
            let mut s = upper[p].clone();
            for &c in &col_children[p] {
                let child = pending[c].take().expect("child structure pending");
                s = merge_without(&s, &child, p);
            }
            let joins = p > 0
                && col_parent[p - 1] == p
                && col_children[p].len() == 1
                && below.last().map(|b| b.len()) == Some(s.len() + 1);
            if joins {
                let sn = first.len() - 1;
                snode_of[p] = sn;
                below[sn] = s.clone();
            } else {
                first.push(p);
                snode_of[p] = first.len() - 1;
                below.push(s.clone());
            }
            if let Some(&q) = s.first() {
                col_parent[p] = q;
                col_children[q].push(p);
            }
            pending[p] = Some(s);
        }
        first.push(n);
        let ns = first.len() - 1;
        let mut parent = vec![NONE; ns];
        let mut children = vec![Vec::new(); ns];
        for s in 0..ns {
            let last = first[s + 1] - 1;
            if col_parent[last] != NONE {
                let ps = snode_of[col_parent[last]];
                parent[s] = ps;
                children[ps].push(s);
            }
        }
        Ok(Self {
            n,
            order: order.to_vec(),
            pos,
            first,
            parent,
            children,
            below,
        })
    }
}

/// Sorted union of `a` and `b` with `skip` removed.
fn merge_without(a: &[usize], b: &[usize], skip: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let v = if j == b.len() || (i < a.len() && a[i] < b[j]) {
            i += 1;
            a[i - 1]
        } else if i == a.len() || b[j] < a[i] {
            j += 1;
            b[j - 1]
        } else {
            i += 1;
            j += 1;
            a[i - 1]
        };
        if v != skip {
            out.push(v);
        }
    }
    out
}

/// Factor block of one front: `npiv` pivots, the rows and columns that
/// remain afterwards, and dense `L11\U11`, `L21`, `U12`.
#[derive(Debug, Clone)]
struct FrontFactor {
    npiv: usize,
    piv_rows: Vec<usize>,
    piv_cols: Vec<usize>,
    rest_rows: Vec<usize>,
    rest_cols: Vec<usize>,
    /// `npiv x npiv`, unit lower `L11` below the diagonal, `U11` on and above.
    lu11: Vec<f64>,
    /// `rest_rows x npiv`.
    l21: Vec<f64>,
    /// `npiv x rest_cols`.
    u12: Vec<f64>,
}

/// Contribution block handed to the parent front.
#[derive(Debug)]
struct Contribution {
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// Number of leading rows/columns that are delayed fully summed ones.
    delayed: usize,
    values: Vec<f64>,
}

/// `P A Q = L U` stored front by front.
#[derive(Debug, Clone)]
pub struct LuFactors {
    sym: Symbolic,
    fronts: Vec<FrontFactor>,
    stats: LuStats,
}

impl LuFactors {
    /// Factors `a` with the symmetric elimination order `order`; a
    /// numerically zero pivot is an error.
    pub fn factor(a: &SparseMatrix, order: &[usize]) -> Result<Self> {
        Self::factor_impl(a, order, false)
    }

    /// Like [`LuFactors::factor`], but columns whose remaining entries are
    /// all numerically zero at the root are skipped. Solves then set those
    /// unknowns to zero and ignore one dependent equation each.
    pub fn factor_rank_deficient(a: &SparseMatrix, order: &[usize]) -> Result<Self> {
        Self::factor_impl(a, order, true)
    }

    fn factor_impl(a: &SparseMatrix, order: &[usize], allow_null: bool) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.ncols(),
            });
        }
        if order.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: order.len(),
            });
        }
        let at = a.transpose();
        let sym = Symbolic::new(a, &at, order)?;
        let scale = a.max_abs();
        let tiny = 64.0 * f64::EPSILON * scale;
        let nsn = sym.first.len() - 1;
        let mut stats = LuStats {
            dim: n,
            min_pivot: f64::INFINITY,
            supernodes: nsn,
            ..LuStats::default()
        };
        let mut contributions: Vec<Option<Contribution>> = (0..nsn).map(|_| None).collect();
        let mut fronts = Vec::with_capacity(nsn);
        let mut row_map = vec![NONE; n];
        let mut col_map = vec![NONE; n];
        for s in 0..nsn {
            let kids: Vec<Contribution> = sym.children[s]
                .iter()
                .map(|&c| contributions[c].take().expect("child factored"))
                .collect();
            // index lists: delayed, own, below
            let mut rows: Vec<usize> = Vec::new();
            let mut cols: Vec<usize> = Vec::new();
            for k in &kids {
                rows.extend_from_slice(&k.rows[..k.delayed]);
                cols.extend_from_slice(&k.cols[..k.delayed]);
            }
            let own = sym.first[s]..sym.first[s + 1];
            rows.extend(own.clone());
            cols.extend(own.clone());
            let nf = rows.len();
            rows.extend_from_slice(&sym.below[s]);
            cols.extend_from_slice(&sym.below[s]);
            let m = rows.len();
            stats.max_front = stats.max_front.max(m);
            for (i, &r) in rows.iter().enumerate() {
                row_map[r] = i;
            }
            for (j, &c) in cols.iter().enumerate() {
                col_map[c] = j;
            }
            let mut f = vec![0.0; m * m];
            // original entries: rows of own positions from the diagonal on,
            // columns of own positions strictly below the supernode
            let last = sym.first[s + 1];
            for p in own.clone() {
                let v = sym.order[p];
                let (c, x) = a.row(v);
                for (&c, &x) in c.iter().zip(x) {
                    let q = sym.pos[c];
                    if q >= sym.first[s] {
                        f[row_map[p] * m + col_map[q]] += x;
                    }
                }
                let (r, x) = at.row(v);
                for (&r, &x) in r.iter().zip(x) {
                    let q = sym.pos[r];
                    if q >= last {
                        f[row_map[q] * m + col_map[p]] += x;
                    }
                }
            }
            for k in kids {
                let w = k.cols.len();
                let cmap: Vec<usize> = k.cols.iter().map(|&c| col_map[c]).collect();
                for (i, &r) in k.rows.iter().enumerate() {
                    let base = row_map[r] * m;
                    let src = &k.values[i * w..(i + 1) * w];
                    for (&j, &x) in cmap.iter().zip(src) {
                        f[base + j] += x;
                    }
                }
            }
            let npiv = partial_factor(&mut f, m, nf, &mut rows, &mut cols, tiny, &mut stats);
            let is_root = sym.parent[s] == NONE;
            if npiv < nf && is_root && allow_null {
                stats.null_pivots += nf - npiv;
            } else if npiv < nf && is_root {
                let col = sym.order[cols[npiv]];
                let pivot = (npiv..m)
                    .map(|i| math::abs(f[i * m + npiv]))
                    .fold(0.0, f64::max);
                return Err(Error::SingularMatrix {
                    column: col,
                    pivot,
                    scale,
                });
            }
            if !is_root {
                stats.delayed_pivots += nf - npiv;
            }
            let front = extract(&f, m, npiv, &rows, &cols);
            stats.nnz_l += npiv * (npiv + 1) / 2 + front.l21.len();
            stats.nnz_u += npiv * (npiv + 1) / 2 + front.u12.len();
            if !is_root {
                let w = m - npiv;
                let mut values = vec![0.0; w * w];
                for i in 0..w {
                    values[i * w..(i + 1) * w]
                        .copy_from_slice(&f[(npiv + i) * m + npiv..(npiv + i + 1) * m]);
                }
                contributions[s] = Some(Contribution {
                    rows: rows[npiv..].to_vec(),
                    cols: cols[npiv..].to_vec(),
                    delayed: nf - npiv,
                    values,
                });
            }
            for &r in &rows {
                row_map[r] = NONE;
            }
            for &c in &cols {
                col_map[c] = NONE;
            }
            fronts.push(front);
        }
        Ok(Self { sym, fronts, stats })
    }

    pub fn stats(&self) -> LuStats {
        self.stats
    }

    pub fn dim(&self) -> usize {
        self.sym.n
    }

    /// Solves `A x = b` with the stored factors.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.sym.n;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut w = vec![0.0; n];
        for (i, &bi) in b.iter().enumerate() {
            w[self.sym.pos[i]] = bi;
        }
        // forward: L y = P b, y stored per front
        let mut ys: Vec<Vec<f64>> = Vec::with_capacity(self.fronts.len());
        for fr in &self.fronts {
            let np = fr.npiv;
            let mut y: Vec<f64> = fr.piv_rows.iter().map(|&r| w[r]).collect();
            for k in 0..np {
                let row = &fr.lu11[k * np..k * np + k];
                let s: f64 = row.iter().zip(&y[..k]).map(|(l, y)| l * y).sum();
                y[k] -= s;
            }
            for (i, &r) in fr.rest_rows.iter().enumerate() {
                let row = &fr.l21[i * np..(i + 1) * np];
                let s: f64 = row.iter().zip(&y).map(|(l, y)| l * y).sum();
                w[r] -= s;
            }
            ys.push(y);
        }
        // backward: U x = y
        let mut x = vec![0.0; n];
        for (fr, mut y) in self.fronts.iter().zip(ys).rev() {
            let np = fr.npiv;
            let nr = fr.rest_cols.len();
            let xr: Vec<f64> = fr.rest_cols.iter().map(|&c| x[c]).collect();
            for k in 0..np {
                let row = &fr.u12[k * nr..(k + 1) * nr];
                y[k] -= row.iter().zip(&xr).map(|(u, x)| u * x).sum::<f64>();
            }
            for k in (0..np).rev() {
                let row = &fr.lu11[k * np..(k + 1) * np];
                let s: f64 = row[k + 1..]
                    .iter()
                    .zip(&y[k + 1..])
                    .map(|(u, y)| u * y)
                    .sum();
                y[k] = (y[k] - s) / row[k];
            }
            for (k, &c) in fr.piv_cols.iter().enumerate() {
                x[c] = y[k];
            }
        }
        let mut out = vec![0.0; n];
        for (p, &v) in self.sym.order.iter().enumerate() {
            out[v] = x[p];
        }
        Ok(out)
    }
}

/// Columns eliminated per block before the trailing update.
const BLOCK: usize = 32;

/// Eliminates up to `nf` pivots of the row-major `m x m` front, restricted
/// to the leading `nf` rows and columns. Returns the number of pivots;
/// afterwards the trailing block holds the Schur complement.
fn partial_factor(
    f: &mut [f64],
    m: usize,
    nf: usize,
    rows: &mut [usize],
    cols: &mut [usize],
    tiny: f64,
    stats: &mut LuStats,
) -> usize {
    let mut k = 0;
    let mut cand = nf;
    let mut pack = Packing::default();
    while k < cand {
        let k0 = k;
        let k1 = (k0 + BLOCK).min(cand);
        // failed columns collect at the end of the block
        let mut bend = k1;
        while k < bend {
            let mut cmax: f64 = 0.0;
            for i in k..m {
                cmax = cmax.max(math::abs(f[i * m + k]));
            }
            let mut best = NONE;
            let mut bval = 0.0;
            for i in k..nf {
                let v = math::abs(f[i * m + k]);
                if v > bval {
                    bval = v;
                    best = i;
                }
            }
            let diag = (k..nf).find(|&i| rows[i] == cols[k]);
            let ok = |v: f64| v > tiny && v >= PIVOT_TOL * cmax;
            let prow = match diag {
                Some(d) if ok(math::abs(f[d * m + k])) => d,
                _ if best != NONE && ok(bval) => best,
                _ => {
                    bend -= 1;
                    if k != bend {
                        swap_cols(f, m, k, bend);
                        cols.swap(k, bend);
                    }
                    continue;
                }
            };
            if prow != k {
                swap_rows(f, m, k, prow);
                rows.swap(k, prow);
            }
            if rows[k] != cols[k] {
                stats.off_diagonal_pivots += 1;
            }
            let piv = f[k * m + k];
            stats.min_pivot = stats.min_pivot.min(math::abs(piv));
            stats.max_pivot = stats.max_pivot.max(math::abs(piv));
            let inv = 1.0 / piv;
            let (head, tail) = f.split_at_mut((k + 1) * m);
            let urow = &head[k * m + k + 1..k * m + k1];
            for r in tail.chunks_exact_mut(m) {
                let l = r[k] * inv;
                r[k] = l;
                if l != 0.0 {
                    for (x, &u) in r[k + 1..k1].iter_mut().zip(urow) {
                        *x -= l * u;
                    }
                }
            }
            k += 1;
        }
        // pivot rows k0..k of the columns right of the block
        if k > k0 && k1 < m {
            for p in k0 + 1..k {
                let (head, tail) = f.split_at_mut(p * m);
                let r = &mut tail[..m];
                for q in k0..p {
                    let l = r[q];
                    if l != 0.0 {
                        for (x, &u) in r[k1..].iter_mut().zip(&head[q * m + k1..(q + 1) * m]) {
                            *x -= l * u;
                        }
                    }
                }
            }
            pack.update(f, m, k0, k, k1);
        }
        // move the failed columns behind the remaining candidates
        let failed = k1 - k;
        if failed > 0 {
            if k1 < cand {
                for r in f.chunks_exact_mut(m) {
                    r[k..cand].rotate_left(failed);
                }
                cols[k..cand].rotate_left(failed);
            }
            cand -= failed;
        }
    }
    k
}

/// Packed operands of the trailing update `C -= L U`.
#[derive(Default)]
struct Packing {
    l: Vec<f64>,
    u: Vec<f64>,
}

const MR: usize = 4;
const NR: usize = 4;

impl Packing {
    /// Rows `p1..m`, columns `c0..m` of `f` minus the product of their
    /// columns `p0..p1` with rows `p0..p1`.
    fn update(&mut self, f: &mut [f64], m: usize, p0: usize, p1: usize, c0: usize) {
        let kb = p1 - p0;
        let nr = m - p1;
        let nc = m - c0;
        let rpanels = nr.div_ceil(MR);
        let cpanels = nc.div_ceil(NR);
        self.l.clear();
        self.l.resize(rpanels * MR * kb, 0.0);
        for i in 0..nr {
            let (pi, ii) = (i / MR, i % MR);
            let row = &f[(p1 + i) * m + p0..(p1 + i) * m + p1];
            for (p, &x) in row.iter().enumerate() {
                self.l[(pi * kb + p) * MR + ii] = x;
            }
        }
        self.u.clear();
        self.u.resize(cpanels * NR * kb, 0.0);
        for p in 0..kb {
            let row = &f[(p0 + p) * m + c0..(p0 + p + 1) * m];
            for (j, &x) in row.iter().enumerate() {
                self.u[((j / NR) * kb + p) * NR + j % NR] = x;
            }
        }
        let c = &mut f[p1 * m..];
        for pi in 0..rpanels {
            let lp = &self.l[pi * kb * MR..(pi + 1) * kb * MR];
            let i0 = pi * MR;
            let ir = MR.min(nr - i0);
            for pj in 0..cpanels {
                let up = &self.u[pj * kb * NR..(pj + 1) * kb * NR];
                let mut acc = [[0.0f64; NR]; MR];
                for (a, b) in lp.chunks_exact(MR).zip(up.chunks_exact(NR)) {
                    for ii in 0..MR {
                        for jj in 0..NR {
                            acc[ii][jj] += a[ii] * b[jj];
                        }
                    }
                }
                let j0 = c0 + pj * NR;
                let jr = NR.min(m - j0);
                for ii in 0..ir {
                    let row = &mut c[(i0 + ii) * m + j0..(i0 + ii) * m + j0 + jr];
                    for (x, a) in row.iter_mut().zip(&acc[ii]) {
                        *x -= a;
                    }
                }
            }
        }
    }
}

fn swap_rows(f: &mut [f64], m: usize, a: usize, b: usize) {
    let (lo, hi) = (a.min(b), a.max(b));
    let (head, tail) = f.split_at_mut(hi * m);
    head[lo * m..(lo + 1) * m].swap_with_slice(&mut tail[..m]);
}

fn swap_cols(f: &mut [f64], m: usize, a: usize, b: usize) {
    for i in 0..m {
        f.swap(i * m + a, i * m + b);
    }
}

fn extract(f: &[f64], m: usize, npiv: usize, rows: &[usize], cols: &[usize]) -> FrontFactor {
    let mut lu11 = vec![0.0; npiv * npiv];
    for i in 0..npiv {
        lu11[i * npiv..(i + 1) * npiv].copy_from_slice(&f[i * m..i * m + npiv]);
    }
    let nr = m - npiv;
    let mut l21 = vec![0.0; nr * npiv];
    for i in 0..nr {
        l21[i * npiv..(i + 1) * npiv].copy_from_slice(&f[(npiv + i) * m..(npiv + i) * m + npiv]);
    }
    let mut u12 = vec![0.0; npiv * nr];
    for i in 0..npiv {
        u12[i * nr..(i + 1) * nr].copy_from_slice(&f[i * m + npiv..(i + 1) * m]);
    }
    FrontFactor {
        npiv,
        piv_rows: rows[..npiv].to_vec(),
        piv_cols: cols[..npiv].to_vec(),
        rest_rows: rows[npiv..].to_vec(),
        rest_cols: cols[npiv..].to_vec(),
        lu11,
        l21,
        u12,
    }
}
