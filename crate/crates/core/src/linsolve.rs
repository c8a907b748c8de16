//! Compressed sparse row matrices and a sparse direct LU solver.
//!
//! The factorisation is a multifrontal LU with threshold partial pivoting
//! that prefers the diagonal and delays unacceptable pivots to the parent
//! front. Unknowns are taken in a fill-reducing nested-dissection order of
//! the symmetrised pattern. Dense rows (Lagrange multipliers) are ordered
//! last. Every step is deterministic.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::InvalidSparsity(alloc::format!(
                    "entry ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|p| (cols[p], vals[p])));
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in &row {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// A zero-valued matrix with the given pattern. Column indices must be
    /// sorted and unique within each row.
    pub fn from_pattern(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1 || row_ptr[0] != 0 || row_ptr[nrows] != col_idx.len() {
            return Err(Error::InvalidSparsity(
                "row pointer array is inconsistent".into(),
            ));
        }
        for r in 0..nrows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::InvalidSparsity(alloc::format!(
                    "row pointer decreases at row {r}"
                )));
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= ncols) {
                return Err(Error::InvalidSparsity(alloc::format!(
                    "row {r} has unsorted, duplicate or out-of-range columns"
                )));
            }
        }
        let nnz = col_idx.len();
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// Index into [`values`](Self::values) of entry `(r, c)`, if stored.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (cols, _) = self.row(r);
        cols.binary_search(&c).ok().map(|k| self.row_ptr[r] + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |p| self.values[p])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for (r, yr) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *yr = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[p];
                col_idx[next[c]] = r;
                values[next[c]] = self.values[p];
                next[c] += 1;
            }
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr: counts,
            col_idx,
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(math::abs(*v)))
    }
}

mod multifrontal;
mod ordering;

pub use multifrontal::{LuFactors, LuStats};
pub use ordering::nested_dissection;

/// Outcome of [`solve_with_order`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub lu: LuStats,
    /// `|A x - b| / |b|` after refinement (0 for `b = 0`).
    pub relative_residual: f64,
    pub refinement_steps: usize,
}

fn norm(v: &[f64]) -> f64 {
    math::sqrt(v.iter().map(|x| x * x).sum())
}

/// Relative residual the solver refines towards.
pub const TARGET_RELATIVE_RESIDUAL: f64 = 1e-13;

/// Relative residual a rank-deficient solve must reach to count as consistent.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-12;

/// Factors and solves `A x = b` in the given column order, followed by up to
/// three steps of iterative refinement.
pub fn solve_with_order(
    a: &SparseMatrix,
    b: &[f64],
    order: &[usize],
) -> Result<(Vec<f64>, SolveReport)> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    refine(a, b, &LuFactors::factor(a, order)?)
}

/// Solves a singular but consistent system: unknowns without a pivot are set
/// to zero. Fails with [`Error::InconsistentSystem`] when the refined
/// residual stays above [`CONSISTENCY_TOLERANCE`].
pub fn solve_consistent_with_order(
    a: &SparseMatrix,
    b: &[f64],
    order: &[usize],
) -> Result<(Vec<f64>, SolveReport)> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    let (x, report) = refine(a, b, &LuFactors::factor_rank_deficient(a, order)?)?;
    if report.relative_residual > CONSISTENCY_TOLERANCE {
        return Err(Error::InconsistentSystem {
            relative_residual: report.relative_residual,
            null_pivots: report.lu.null_pivots,
        });
    }
    Ok((x, report))
}

fn refine(a: &SparseMatrix, b: &[f64], lu: &LuFactors) -> Result<(Vec<f64>, SolveReport)> {
    let mut x = lu.solve(b)?;
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveReport {
                lu: lu.stats(),
                relative_residual: 0.0,
                refinement_steps: 0,
            },
        ));
    }
    let residual =
        |x: &[f64]| -> Vec<f64> { a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect() };
    let mut r = residual(&x);
    let mut rel = norm(&r) / bnorm;
    let mut steps = 0;
    while rel > TARGET_RELATIVE_RESIDUAL && steps < 3 {
        let dx = lu.solve(&r)?;
        let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
        let rt = residual(&trial);
        let rel_t = norm(&rt) / bnorm;
        steps += 1;
        if rel_t >= rel {
            break;
        }
        x = trial;
        r = rt;
        rel = rel_t;
    }
    Ok((
        x,
        SolveReport {
            lu: lu.stats(),
            relative_residual: rel,
            refinement_steps: steps,
        },
    ))
}

/// Solves `A x = b` with an automatically computed nested-dissection order.
pub fn solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let order = nested_dissection(a);
    solve_with_order(a, b, &order).map(|(x, _)| x)
}
