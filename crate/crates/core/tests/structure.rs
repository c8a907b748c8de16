use std::f64::consts::PI as PI_F;

use chnst_core::diagnostics::{conserved_quantities, StructureBounds, StructureSummary};
use chnst_core::fem::{FemSpace, ScalarField, VectorField};
use chnst_core::mesh::PeriodicMesh;
use chnst_core::model::ModelParams;
use chnst_core::scheme::{Scheme, StarMode, State, StepConfig};
use proptest::prelude::*;

fn nodal(space: &FemSpace, f: impl Fn(f64, f64) -> f64) -> ScalarField {
    let dofs = space
        .mesh()
        .vertices()
        .iter()
        .map(|&[x, y]| f(x, y))
        .collect();
    ScalarField::new(space.mesh(), dofs).unwrap()
}

/// Smooth data with random amplitudes and wave numbers. μ is left at zero;
/// the first step makes it consistent.
fn initial(space: &FemSpace, a: [f64; 4], k: [f64; 2]) -> State {
    let s = |x: f64, y: f64| (2.0 * PI_F * k[0] * x).sin() * (2.0 * PI_F * k[1] * y).sin();
    let c = |x: f64, y: f64| (2.0 * PI_F * k[1] * x).cos() * (2.0 * PI_F * k[0] * y).cos();
    State {
        phi: nodal(space, |x, y| 0.5 + a[0] * s(x, y)),
        mu: ScalarField::zeros(space.mesh()),
        theta: nodal(space, |x, y| 1.0 + a[1] * c(x, y)),
        u: VectorField::new(
            nodal(space, |x, y| a[2] * c(x, y)),
            nodal(space, |x, y| a[3] * s(x, y)),
        )
        .unwrap(),
        pi: ScalarField::zeros(space.mesh()),
        t: 0.0,
    }
}

fn run(
    space: &FemSpace,
    params: ModelParams,
    star_mode: StarMode,
    start: &State,
    steps: usize,
) -> StructureSummary {
    let cfg = StepConfig {
        star_mode,
        ..StepConfig::default()
    };
    let scheme = Scheme::new(space, params, cfg).unwrap();
    let trajectory = scheme
        .run(start, steps as f64 * cfg.tau, &mut |_, _| {})
        .unwrap();
    StructureSummary::from_records(&trajectory.records)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_smooth_data_keeps_the_structure(
        a in prop::array::uniform4(-0.2f64..0.2),
        k in prop::array::uniform2(1.0f64..3.0),
        implicit in any::<bool>(),
    ) {
        let space = FemSpace::new(PeriodicMesh::new(8).unwrap());
        let k = [k[0].floor(), k[1].floor()];
        let star = if implicit { StarMode::Implicit } else { StarMode::Explicit };
        let summary = run(&space, ModelParams::default(), star, &initial(&space, a, k), 5);
        prop_assert_eq!(summary.steps, 5);
        for check in summary.checks(&StructureBounds::default()) {
            prop_assert!(check.pass, "{} = {:e}", check.name, check.value);
        }
        prop_assert!(summary.min_graddiv >= 0.0 && summary.min_pressure >= 0.0);
    }
}

#[test]
fn uniform_state_is_stationary() {
    let space = FemSpace::new(PeriodicMesh::new(4).unwrap());
    let params = ModelParams::default();
    let mut start = initial(&space, [0.0; 4], [1.0, 1.0]);
    start.phi = ScalarField::constant(space.mesh(), 0.3);
    let scheme = Scheme::new(&space, params, StepConfig::default()).unwrap();
    let (first, _) = scheme.advance(&start).unwrap();
    let (second, _) = scheme.advance(&first).unwrap();
    for (a, b) in first.mu.dofs().iter().zip(second.mu.dofs()) {
        assert!((a - b).abs() <= 1e-13);
    }
    assert!(second
        .u
        .component(0)
        .dofs()
        .iter()
        .chain(second.u.component(1).dofs())
        .all(|v| v.abs() <= 1e-13));
    let before = conserved_quantities(&space, &first, &params).unwrap();
    let after = conserved_quantities(&space, &second, &params).unwrap();
    assert!((before.total - after.total).abs() <= 1e-13);
    assert!((before.entropy - after.entropy).abs() <= 1e-13);
}
