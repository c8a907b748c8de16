//! Legacy ASCII VTK snapshots.
//!
//! The periodic mesh is written with its seam duplicated: `(n + 1)^2`
//! points, each copy carrying the value of the periodic vertex it images.

use std::io::{self, Write};

use chnst_core::fem::{FemSpace, ScalarField};
use chnst_core::scheme::State;

const VTK_TRIANGLE: u8 = 5;

/// Seam-duplicated point index of an unwrapped corner.
fn point_index(n: usize, h: f64, p: [f64; 2]) -> usize {
    let i = (p[0] / h).round() as usize;
    let j = (p[1] / h).round() as usize;
    j * (n + 1) + i
}

/// Periodic vertex shown at seam point `(i, j)`.
fn source_vertex(n: usize, i: usize, j: usize) -> usize {
    (j % n) * n + (i % n)
}

fn scalars<W: Write>(w: &mut W, name: &str, n: usize, f: &ScalarField) -> io::Result<()> {
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for j in 0..=n {
        for i in 0..=n {
            writeln!(w, "{:e}", f.dofs()[source_vertex(n, i, j)])?;
        }
    }
    Ok(())
}

/// Writes `state` as an unstructured grid of triangles.
pub fn write_snapshot<W: Write>(
    w: &mut W,
    space: &FemSpace,
    state: &State,
    title: &str,
) -> io::Result<()> {
    let mesh = space.mesh();
    let n = mesh.n();
    let h = mesh.h();
    let points = (n + 1) * (n + 1);
    let cells = space.elements();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.replace('\n', " "))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {points} double")?;
    for j in 0..=n {
        for i in 0..=n {
            writeln!(w, "{:e} {:e} 0", i as f64 * h, j as f64 * h)?;
        }
    }
    writeln!(w, "CELLS {} {}", cells.len(), 4 * cells.len())?;
    for el in cells {
        let [a, b, c] = el.coords.map(|p| point_index(n, h, p));
        writeln!(w, "3 {a} {b} {c}")?;
    }
    writeln!(w, "CELL_TYPES {}", cells.len())?;
    for _ in cells {
        writeln!(w, "{VTK_TRIANGLE}")?;
    }
    writeln!(w, "POINT_DATA {points}")?;
    scalars(w, "phi", n, &state.phi)?;
    scalars(w, "mu", n, &state.mu)?;
    scalars(w, "theta", n, &state.theta)?;
    scalars(w, "pi", n, &state.pi)?;
    writeln!(w, "VECTORS u double")?;
    for j in 0..=n {
        for i in 0..=n {
            let v = source_vertex(n, i, j);
            writeln!(
                w,
                "{:e} {:e} 0",
                state.u.component(0).dofs()[v],
                state.u.component(1).dofs()[v]
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chnst_core::harness::{preset_initial_state, Preset};
    use chnst_core::mesh::PeriodicMesh;
    use chnst_core::model::ModelParams;

    #[test]
    fn layout_and_seam_values() {
        let space = FemSpace::new(PeriodicMesh::new(4).unwrap());
        let state =
            preset_initial_state(Preset::Convergence, &space, &ModelParams::default()).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &space, &state, "t = 0").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert!(text.contains("POINTS 25 double"));
        assert!(text.contains("CELLS 32 128"));
        assert!(text.contains("POINT_DATA 25"));
        // every cell references seam points that tile the unit square
        let start = lines.iter().position(|l| l.starts_with("CELLS")).unwrap() + 1;
        for l in &lines[start..start + 32] {
            let ids: Vec<usize> = l.split(' ').map(|s| s.parse().unwrap()).collect();
            assert_eq!(ids[0], 3);
            assert!(ids[1..].iter().all(|&i| i < 25));
        }
        // phi on the right seam column repeats the left column
        let phi = lines
            .iter()
            .position(|l| *l == "SCALARS phi double 1")
            .unwrap()
            + 2;
        let vals: Vec<f64> = lines[phi..phi + 25]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        for j in 0..5 {
            assert_eq!(vals[j * 5], vals[j * 5 + 4]);
        }
        for i in 0..5 {
            assert_eq!(vals[i], vals[20 + i]);
        }
    }
}
