//! Uniform triangulations of the unit square identified with the 2-torus.
//!
//! Vertex `(i, j)` sits at `(i/n, j/n)` and has DOF index `j * n + i`.
//! Every grid square is cut along its lower-left to upper-right diagonal;
//! square `(i, j)` owns cell `2 * (j * n + i)` (below the diagonal) and
//! cell `2 * (j * n + i) + 1` (above it). Vertex indices wrap modulo `n`,
//! while [`PeriodicMesh::cell_coords`] returns the unwrapped corner
//! positions so that element geometry never sees the seam.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Grid offsets of the three corners of the lower and upper triangle of a
/// square, counter-clockwise.
const LOWER: [(usize, usize); 3] = [(0, 0), (1, 0), (1, 1)];
const UPPER: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicMesh {
    n: usize,
    level: u32,
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
}

impl PeriodicMesh {
    /// Builds the `n x n` periodic triangulation. Rejects `n < 2`.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSubdivision(n));
        }
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                for pattern in [LOWER, UPPER] {
                    let tri = pattern.map(|(di, dj)| ((j + dj) % n) * n + (i + di) % n);
                    cells.push(tri);
                }
            }
        }
        Ok(Self {
            n,
            level: 0,
            vertices,
            cells,
        })
    }

    /// Subdivisions per side.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing `1/n`, the `h` of the pressure stabilisation.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of uniform refinements applied since construction.
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn num_dofs(&self) -> usize {
        self.n * self.n
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn vertex_index(&self, i: usize, j: usize) -> usize {
        (j % self.n) * self.n + i % self.n
    }

    /// Unwrapped corner coordinates of a cell, counter-clockwise.
    pub fn cell_coords(&self, cell: usize) -> [[f64; 2]; 3] {
        let square = cell / 2;
        let (i, j) = (square % self.n, square / self.n);
        let pattern = if cell % 2 == 0 { LOWER } else { UPPER };
        let h = self.h();
        pattern.map(|(di, dj)| [(i + di) as f64 * h, (j + dj) as f64 * h])
    }

    /// Signed area of a cell from its unwrapped coordinates.
    pub fn cell_area(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cell_coords(cell);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Sorted, deduplicated vertex neighbourhoods including the vertex itself.
    pub fn vertex_neighbours(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::with_capacity(7); self.num_dofs()];
        for tri in &self.cells {
            for &a in tri {
                nb[a].extend_from_slice(tri);
            }
        }
        for list in &mut nb {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    /// Uniform refinement by a factor of two together with the nesting map.
    pub fn refine_uniform(&self) -> (PeriodicMesh, NestingMap) {
        let mut fine = PeriodicMesh::new(2 * self.n).expect("2n >= 4");
        fine.level = self.level + 1;
        let n = self.n;
        let nf = fine.n;
        let vertex_map = (0..n * n)
            .map(|v| {
                let (i, j) = (v % n, v / n);
                (2 * j) * nf + 2 * i
            })
            .collect();
        // Children in fine-square offsets: (dx, dy, upper?).
        const LOWER_CHILDREN: [(usize, usize, usize); 4] =
            [(0, 0, 0), (1, 0, 0), (1, 0, 1), (1, 1, 0)];
        const UPPER_CHILDREN: [(usize, usize, usize); 4] =
            [(0, 0, 1), (0, 1, 0), (0, 1, 1), (1, 1, 1)];
        let cell_children = (0..self.num_cells())
            .map(|c| {
                let square = c / 2;
                let (i, j) = (square % n, square / n);
                let children = if c % 2 == 0 {
                    LOWER_CHILDREN
                } else {
                    UPPER_CHILDREN
                };
                children.map(|(dx, dy, up)| 2 * ((2 * j + dy) * nf + 2 * i + dx) + up)
            })
            .collect();
        let map = NestingMap {
            coarse_n: n,
            fine_n: nf,
            vertex_map,
            cell_children,
        };
        (fine, map)
    }
}

/// Parent/child relation between a mesh and its uniform refinement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestingMap {
    coarse_n: usize,
    fine_n: usize,
    vertex_map: Vec<usize>,
    cell_children: Vec<[usize; 4]>,
}

impl NestingMap {
    /// Builds the map between meshes with `coarse_n` and `2 * coarse_n`
    /// subdivisions.
    pub fn between(coarse: &PeriodicMesh, fine: &PeriodicMesh) -> Result<Self> {
        if fine.n() != 2 * coarse.n() {
            return Err(Error::NotNested {
                coarse: coarse.n(),
                fine: fine.n(),
            });
        }
        Ok(coarse.refine_uniform().1)
    }

    pub fn coarse_n(&self) -> usize {
        self.coarse_n
    }

    pub fn fine_n(&self) -> usize {
        self.fine_n
    }

    /// Fine DOF coinciding with each coarse DOF.
    pub fn vertex_map(&self) -> &[usize] {
        &self.vertex_map
    }

    /// The four fine cells covering each coarse cell.
    pub fn cell_children(&self) -> &[[usize; 4]] {
        &self.cell_children
    }

    /// Exact representation of a coarse P1 function on the fine mesh.
    ///
    /// Fine vertices on coarse vertices copy the value, fine vertices on
    /// coarse edge midpoints take the mean of the edge's endpoints.
    pub fn prolong(&self, coarse: &[f64]) -> Result<Vec<f64>> {
        let n = self.coarse_n;
        if coarse.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: coarse.len(),
            });
        }
        let nf = self.fine_n;
        let at = |i: usize, j: usize| coarse[(j % n) * n + i % n];
        let mut fine = vec![0.0; nf * nf];
        for jf in 0..nf {
            for i_f in 0..nf {
                let (i, j) = (i_f / 2, jf / 2);
                fine[jf * nf + i_f] = match (i_f % 2, jf % 2) {
                    (0, 0) => at(i, j),
                    (1, 0) => 0.5 * (at(i, j) + at(i + 1, j)),
                    (0, 1) => 0.5 * (at(i, j) + at(i, j + 1)),
                    _ => 0.5 * (at(i, j) + at(i + 1, j + 1)),
                };
            }
        }
        Ok(fine)
    }
}
