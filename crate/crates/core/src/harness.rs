//! Convergence study on nested periodic grids.
//!
//! Level `k` uses `h = 2^-k`. Its error row compares the solution on `h`
//! with the one on `h/2`, so a table over levels `k0..=k1` needs runs up to
//! `k1 + 1`. Errors are squared norms; the order between consecutive rows is
//! `log2(e_{k-1} / e_k)`.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::fem::{self, ErrorNorms, FemSpace, FieldSet, ScalarField, VectorField};
use crate::math;
use crate::mesh::{NestingMap, PeriodicMesh};
use crate::model::ModelParams;
use crate::scheme::{Scheme, State, StepConfig};
use crate::{Error, Result};

/// Named initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `phi = 0.4 + 0.2 S`, `theta = 1 + 0.2 S` with
    /// `S = sin(2 pi x) sin(2 pi y)`, and
    /// `u = 1e-2 (-sin(pi x)^2 sin(2 pi y), sin(2 pi x) sin(pi y)^2)`.
    Convergence,
    /// `phi = 0.4`, `theta = 1`, `u = 0`.
    Constant,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::Convergence, Preset::Constant];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Convergence => "convergence",
            Preset::Constant => "constant",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::UnknownPreset(String::from(name)))
    }

    /// Nodal values of `(phi, theta, u_x, u_y)` at `(x, y)`.
    pub fn fields(self, x: f64, y: f64) -> [f64; 4] {
        match self {
            Preset::Convergence => {
                let s = sin(2.0 * PI * x) * sin(2.0 * PI * y);
                let sx = sin(PI * x);
                let sy = sin(PI * y);
                [
                    0.4 + 0.2 * s,
                    1.0 + 0.2 * s,
                    -1e-2 * sx * sx * sin(2.0 * PI * y),
                    1e-2 * sin(2.0 * PI * x) * sy * sy,
                ]
            }
            Preset::Constant => [0.4, 1.0, 0.0, 0.0],
        }
    }
}

fn sin(x: f64) -> f64 {
    math::sin(x)
}

/// Interpolated preset with `mu` from the initialisation solve and `pi = 0`.
pub fn preset_initial_state(
    preset: Preset,
    space: &FemSpace,
    params: &ModelParams,
) -> Result<State> {
    params.validate()?;
    let field = |c: usize| space.interpolate(|x, y| preset.fields(x, y)[c]);
    let phi = field(0)?;
    let theta = field(1)?;
    let u = VectorField::new(field(2)?, field(3)?)?;
    let mu = crate::scheme::initial_chemical_potential(space, &phi, &theta, params)?;
    Ok(State {
        phi,
        mu,
        theta,
        u,
        pi: ScalarField::zeros(space.mesh()),
        t: 0.0,
    })
}

/// Runs `preset` on `h = 2^-level` up to `final_time` and returns the final
/// state.
pub fn solve_level(
    level: u32,
    preset: Preset,
    params: &ModelParams,
    cfg: &StepConfig,
    final_time: f64,
) -> Result<State> {
    let tag = |e: Error| Error::LevelFailed {
        level,
        source: Box::new(e),
    };
    validate_levels(&[level]).map_err(tag)?;
    let space = FemSpace::new(PeriodicMesh::new(1 << level).map_err(tag)?);
    let initial = preset_initial_state(preset, &space, params).map_err(tag)?;
    solve_to_final_time(&space, params, cfg, &initial, final_time).map_err(tag)
}

/// Advances `initial` to `final_time` without recording diagnostics.
pub fn solve_to_final_time(
    space: &FemSpace,
    params: &ModelParams,
    cfg: &StepConfig,
    initial: &State,
    final_time: f64,
) -> Result<State> {
    let scheme = Scheme::new(space, *params, *cfg)?;
    let steps = crate::scheme::step_count(final_time, cfg.tau)?;
    let mut state = initial.clone();
    for step in 1..=steps {
        state = scheme
            .advance(&state)
            .map_err(|e| Error::StepFailed {
                step,
                source: Box::new(e),
            })?
            .0;
    }
    Ok(state)
}

/// `log2(previous / current)`, absent unless positive and finite.
pub fn eoc(previous: f64, current: f64) -> Option<f64> {
    let r = math::log2(previous / current);
    (r.is_finite() && r > 0.0 && previous > 0.0 && current > 0.0).then_some(r)
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub level: u32,
    pub h: f64,
    pub errors: ErrorNorms,
    /// Orders for `e_a, e_b, e_mu, e_u, e_theta`, relative to the previous row.
    pub eoc: [Option<f64>; 5],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

fn field_set(s: &State) -> FieldSet<'_> {
    FieldSet {
        phi: &s.phi,
        mu: &s.mu,
        theta: &s.theta,
        u: &s.u,
    }
}

fn columns(e: &ErrorNorms) -> [f64; 5] {
    [e.e_a, e.e_b, e.e_mu, e.e_u, e.e_theta]
}

/// Checks that `levels` is a nonempty run of consecutive integers `>= 1`.
pub fn validate_levels(levels: &[u32]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidLevels("no levels given".into()));
    }
    if levels[0] == 0 || levels.iter().any(|&k| k > 12) {
        return Err(Error::InvalidLevels("levels must lie in 1..=12".into()));
    }
    if levels.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::InvalidLevels(
            "levels must be consecutive and increasing".into(),
        ));
    }
    Ok(())
}

/// Levels whose solutions a table over `levels` needs.
pub fn required_solves(levels: &[u32]) -> Result<Vec<u32>> {
    validate_levels(levels)?;
    let last = *levels.last().expect("nonempty");
    Ok(levels
        .iter()
        .copied()
        .chain(core::iter::once(last + 1))
        .collect())
}

impl ConvergenceTable {
    /// Builds the table from final states, where `solutions[i]` lives on
    /// level `required_solves(levels)[i]`.
    pub fn from_solutions(levels: &[u32], solutions: &[State]) -> Result<Self> {
        let needed = required_solves(levels)?;
        if solutions.len() != needed.len() {
            return Err(Error::DimensionMismatch {
                expected: needed.len(),
                found: solutions.len(),
            });
        }
        let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
        for (i, &k) in levels.iter().enumerate() {
            let coarse_mesh = PeriodicMesh::new(1usize << k)?;
            let fine_mesh = PeriodicMesh::new(1usize << (k + 1))?;
            let map = NestingMap::between(&coarse_mesh, &fine_mesh)?;
            let fine_space = FemSpace::new(fine_mesh);
            let errors = fem::two_grid_error_norms(
                &fine_space,
                field_set(&solutions[i + 1]),
                field_set(&solutions[i]),
                &map,
            )
            .map_err(|e| Error::LevelFailed {
                level: k,
                source: Box::new(e),
            })?;
            let eoc = match rows.last() {
                Some(prev) => {
                    let (p, c) = (columns(&prev.errors), columns(&errors));
                    core::array::from_fn(|j| eoc(p[j], c[j]))
                }
                None => [None; 5],
            };
            rows.push(ConvergenceRow {
                level: k,
                h: coarse_mesh.h(),
                errors,
                eoc,
            });
        }
        Ok(Self { rows })
    }
}

/// Sequential convergence study over `levels`.
pub fn run_convergence(
    levels: &[u32],
    preset: Preset,
    params: &ModelParams,
    cfg: &StepConfig,
    final_time: f64,
) -> Result<ConvergenceTable> {
    crate::scheme::step_count(final_time, cfg.tau)?;
    let solutions = required_solves(levels)?
        .into_iter()
        .map(|k| solve_level(k, preset, params, cfg, final_time))
        .collect::<Result<Vec<_>>>()?;
    ConvergenceTable::from_solutions(levels, &solutions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics;

    #[test]
    fn table_one_convention() {
        let r = eoc(3.02e-1, 9.76e-2).unwrap();
        assert!((r - 1.63).abs() < 5e-3, "{r}");
        assert!((eoc(4e-2, 1e-2).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(eoc(0.0, 0.0), None);
        assert_eq!(eoc(1.0, 0.0), None);
        assert_eq!(eoc(1.0, 2.0), None);
        assert_eq!(eoc(f64::NAN, 1.0), None);
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(Preset::from_name(p.name()).unwrap(), p);
        }
        assert!(matches!(
            Preset::from_name("nope"),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn convergence_preset_values() {
        let space = FemSpace::new(PeriodicMesh::new(8).unwrap());
        let params = ModelParams::default();
        let st = preset_initial_state(Preset::Convergence, &space, &params).unwrap();
        let mass = diagnostics::conserved_quantities(&space, &st, &params)
            .unwrap()
            .mass;
        assert!((mass - 0.4).abs() < 1e-13);
        assert!((st.theta.min() - 0.8).abs() < 1e-14);
        assert!((st.theta.max() - 1.2).abs() < 1e-14);
        for i in 0..space.num_dofs() {
            let (a, b) = (st.u.component(0).dofs()[i], st.u.component(1).dofs()[i]);
            assert!((a * a + b * b).sqrt() <= 1e-2 * (1.0 + 1e-12));
        }
        assert!(st.pi.dofs().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn level_validation() {
        assert!(validate_levels(&[2, 3, 4]).is_ok());
        assert!(validate_levels(&[]).is_err());
        assert!(validate_levels(&[0, 1]).is_err());
        assert!(validate_levels(&[2, 4]).is_err());
        assert!(validate_levels(&[3, 2]).is_err());
        assert_eq!(required_solves(&[2, 3]).unwrap(), [2, 3, 4]);
    }

    #[test]
    fn identical_solutions_give_zero_error_and_no_order() {
        // prolonging a coarse solution and comparing it with itself
        let params = ModelParams::default();
        let coarse_space = FemSpace::new(PeriodicMesh::new(4).unwrap());
        let coarse = preset_initial_state(Preset::Convergence, &coarse_space, &params).unwrap();
        let (fine_mesh, map) = coarse_space.mesh().refine_uniform();
        let up = |f: &ScalarField| f.prolong(&map).unwrap();
        let fine = State {
            phi: up(&coarse.phi),
            mu: up(&coarse.mu),
            theta: up(&coarse.theta),
            u: coarse.u.prolong(&map).unwrap(),
            pi: up(&coarse.pi),
            t: 0.0,
        };
        let finer_space = FemSpace::new(fine_mesh.refine_uniform().0);
        let (_, map2) = fine_mesh.refine_uniform();
        let up2 = |f: &ScalarField| f.prolong(&map2).unwrap();
        let finer = State {
            phi: up2(&fine.phi),
            mu: up2(&fine.mu),
            theta: up2(&fine.theta),
            u: fine.u.prolong(&map2).unwrap(),
            pi: up2(&fine.pi),
            t: 0.0,
        };
        let table = ConvergenceTable::from_solutions(&[2, 3], &[coarse, fine, finer]).unwrap();
        assert_eq!(finer_space.mesh().n(), 16);
        for row in &table.rows {
            assert!(columns(&row.errors).iter().all(|&e| e.abs() < 1e-28));
            assert_eq!(row.eoc, [None; 5]);
        }
    }

    #[test]
    fn small_study_orders_are_positive() {
        let params = ModelParams::default();
        let cfg = StepConfig::default();
        let table = run_convergence(&[1, 2], Preset::Convergence, &params, &cfg, 2e-3).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].eoc, [None; 5]);
        assert!((table.rows[1].h - 0.25).abs() < 1e-16);
        assert!(table
            .rows
            .iter()
            .all(|r| columns(&r.errors).iter().all(|&e| e > 0.0)));
    }

    #[test]
    fn constant_preset_is_steady() {
        let params = ModelParams::default();
        let cfg = StepConfig::default();
        let state = solve_level(2, Preset::Constant, &params, &cfg, 5e-3).unwrap();
        assert!(state.phi.dofs().iter().all(|&p| (p - 0.4).abs() < 1e-12));
        assert!(state.theta.dofs().iter().all(|&t| (t - 1.0).abs() < 1e-12));
    }

    #[test]
    fn failures_carry_the_level() {
        let params = ModelParams::default();
        let cfg = StepConfig::default();
        let err = solve_level(2, Preset::Convergence, &params, &cfg, 1.5e-3).unwrap_err();
        assert!(matches!(err, Error::LevelFailed { level: 2, .. }));
    }
}
