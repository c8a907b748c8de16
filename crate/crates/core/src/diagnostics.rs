//! Conserved quantities, entropy, physical dissipation and the per-step
//! entropy ledger.

use crate::fem::{FemSpace, ScalarField, VectorField};
use crate::math;
use crate::model::{self, ModelParams};
use crate::scheme::{Scheme, StarMode, State, StepReport};
use crate::{Error, Result};

/// Integrals of one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Conserved {
    /// `<phi, 1>`
    pub mass: f64,
    /// `<|u|^2 / 2, 1>`
    pub kinetic: f64,
    /// `<e(phi, theta), 1>`
    pub internal: f64,
    /// `kinetic + internal`
    pub total: f64,
    /// `<s(phi, theta, grad phi), 1>`
    pub entropy: f64,
}

/// Rejects `theta <= 0` at any quadrature point.
fn check_quadrature_temperature(space: &FemSpace, theta: &ScalarField) -> Result<()> {
    let mut lowest = f64::INFINITY;
    space.integrate(|q| {
        lowest = lowest.min(q.value(theta));
        0.0
    });
    if lowest > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveTemperature(lowest))
    }
}

/// Mass, kinetic, internal and total energy, and entropy of `state`.
pub fn conserved_quantities(
    space: &FemSpace,
    state: &State,
    params: &ModelParams,
) -> Result<Conserved> {
    state.check_on(space)?;
    check_quadrature_temperature(space, &state.theta)?;
    let mass = space.integrate(|q| q.value(&state.phi));
    let kinetic = space.integrate(|q| {
        let u = q.vector(&state.u);
        0.5 * (u[0] * u[0] + u[1] * u[1])
    });
    let internal = space
        .integrate(|q| model::internal_energy_generic(q.value(&state.phi), q.value(&state.theta)));
    let entropy = space.integrate(|q| {
        let g = q.grad(&state.phi);
        model::entropy_generic(
            q.value(&state.phi),
            q.value(&state.theta),
            g[0] * g[0] + g[1] * g[1],
            params.gamma,
        )
    });
    Ok(Conserved {
        mass,
        kinetic,
        internal,
        total: kinetic + internal,
        entropy,
    })
}

/// `<eta* theta |D u_mid|^2, 1> + <(grad mu, grad theta) . L (grad mu, grad theta), 1>`
/// with `eta*` evaluated from `phi_star`, `theta_star`.
pub fn physical_dissipation(
    space: &FemSpace,
    new: &State,
    u_mid: &VectorField,
    phi_star: &ScalarField,
    theta_star: &ScalarField,
    params: &ModelParams,
) -> Result<f64> {
    new.check_on(space)?;
    space.check_vector(u_mid)?;
    space.check(phi_star)?;
    space.check(theta_star)?;
    check_quadrature_temperature(space, &new.theta)?;
    Ok(space.integrate(|q| {
        let t = q.value(&new.theta);
        let g = q.vector_grad(u_mid);
        let d12 = 0.5 * (g[0][1] + g[1][0]);
        let du2 = g[0][0] * g[0][0] + 2.0 * d12 * d12 + g[1][1] * g[1][1];
        let eta = model::viscosity(&params.viscosity, q.value(phi_star), q.value(theta_star));
        let gm = q.grad(&new.mu);
        let gt = q.grad(&new.theta);
        let mm = gm[0] * gm[0] + gm[1] * gm[1];
        let mt = gm[0] * gt[0] + gm[1] * gt[1];
        let tt = gt[0] * gt[0] + gt[1] * gt[1];
        eta * t * du2 + params.l11 * mm - 2.0 * params.l12 * mt + params.l22 * tt
    }))
}

/// Entropy balance of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EntropyLedger {
    /// `S^{n+1} - S^n`
    pub delta_entropy: f64,
    /// `tau * D_phys`
    pub tau_dphys: f64,
    /// `tau eps |sqrt(theta) div u_mid|^2`
    pub graddiv: f64,
    /// `tau delta |h sqrt(theta) grad pi|^2`
    pub pressure: f64,
    /// `delta_entropy - tau_dphys - graddiv - pressure`
    pub residual: f64,
}

/// Splits the entropy increment of the step `old -> new` into physical
/// dissipation, the two stabilisation contributions and the remainder.
pub fn entropy_ledger(
    space: &FemSpace,
    old: &State,
    new: &State,
    params: &ModelParams,
    tau: f64,
    star_mode: StarMode,
) -> Result<EntropyLedger> {
    let s_old = conserved_quantities(space, old, params)?.entropy;
    let s_new = conserved_quantities(space, new, params)?.entropy;
    let u_mid = new.u.midpoint(&old.u)?;
    let star = match star_mode {
        StarMode::Explicit => old,
        StarMode::Implicit => new,
    };
    let dphys = physical_dissipation(space, new, &u_mid, &star.phi, &star.theta, params)?;
    let h = space.mesh().h();
    let graddiv = tau
        * params.epsilon
        * space.integrate(|q| {
            let g = q.vector_grad(&u_mid);
            let d = g[0][0] + g[1][1];
            q.value(&new.theta) * d * d
        });
    let pressure = tau
        * params.delta
        * h
        * h
        * space.integrate(|q| {
            let g = q.grad(&new.pi);
            q.value(&new.theta) * (g[0] * g[0] + g[1] * g[1])
        });
    let delta_entropy = s_new - s_old;
    let tau_dphys = tau * dphys;
    Ok(EntropyLedger {
        delta_entropy,
        tau_dphys,
        graddiv,
        pressure,
        residual: delta_entropy - tau_dphys - graddiv - pressure,
    })
}

/// One row of the per-step diagnostics series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub kinetic: f64,
    pub internal: f64,
    pub total_energy: f64,
    pub entropy: f64,
    pub tau_dphys: f64,
    pub dnum_residual: f64,
    pub dnum_graddiv: f64,
    pub dnum_pressure: f64,
    pub newton_iters: usize,
    /// Final Newton residual norm.
    pub residual: f64,
    pub damping_events: usize,
}

impl DiagnosticsRecord {
    /// Record of an initial state: ledger entries and Newton stats are zero.
    pub fn initial(space: &FemSpace, state: &State, params: &ModelParams) -> Result<Self> {
        let c = conserved_quantities(space, state, params)?;
        Ok(Self {
            time: state.t,
            mass: c.mass,
            kinetic: c.kinetic,
            internal: c.internal,
            total_energy: c.total,
            entropy: c.entropy,
            ..Self::default()
        })
    }
}

/// Diagnostics of step `step`, mapping `old` to `new`.
pub fn record_step(
    scheme: &Scheme<'_>,
    step: usize,
    old: &State,
    new: &State,
    report: &StepReport,
) -> Result<DiagnosticsRecord> {
    let space = scheme.space();
    let params = scheme.params();
    let cfg = scheme.config();
    let c = conserved_quantities(space, new, params)?;
    let ledger = entropy_ledger(space, old, new, params, cfg.tau, cfg.star_mode)?;
    Ok(DiagnosticsRecord {
        step,
        time: new.t,
        mass: c.mass,
        kinetic: c.kinetic,
        internal: c.internal,
        total_energy: c.total,
        entropy: c.entropy,
        tau_dphys: ledger.tau_dphys,
        dnum_residual: ledger.residual,
        dnum_graddiv: ledger.graddiv,
        dnum_pressure: ledger.pressure,
        newton_iters: report.iterations,
        residual: report.residual,
        damping_events: report.damping_events,
    })
}

/// Bounds of the structure checks on a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureBounds {
    /// Largest admissible mass change in one step.
    pub mass_step: f64,
    /// Largest admissible total-energy change over the trajectory.
    pub energy_total: f64,
    /// Most negative admissible entropy increment.
    pub entropy_increment: f64,
    /// Most negative admissible unexplained entropy production.
    pub dnum_residual: f64,
}

impl Default for StructureBounds {
    fn default() -> Self {
        Self {
            mass_step: 1e-10,
            energy_total: 1e-8,
            entropy_increment: -1e-12,
            dnum_residual: -1e-12,
        }
    }
}

/// Worst-case structure quantities of a diagnostics series.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StructureSummary {
    pub steps: usize,
    pub max_mass_step: f64,
    pub max_energy_drift: f64,
    pub min_entropy_increment: f64,
    pub min_dnum_residual: f64,
    pub min_graddiv: f64,
    pub max_graddiv: f64,
    pub min_pressure: f64,
    pub max_pressure: f64,
    pub max_newton_residual: f64,
}

/// One named check of a [`StructureSummary`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureCheck {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl StructureSummary {
    /// Summarises `records`, whose first entry is the initial state.
    pub fn from_records(records: &[DiagnosticsRecord]) -> Self {
        let Some(first) = records.first() else {
            return Self::default();
        };
        let mut s = Self {
            min_entropy_increment: f64::INFINITY,
            min_dnum_residual: f64::INFINITY,
            min_graddiv: f64::INFINITY,
            min_pressure: f64::INFINITY,
            ..Self::default()
        };
        for w in records.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            s.steps += 1;
            s.max_mass_step = s.max_mass_step.max(math::abs(b.mass - a.mass));
            s.max_energy_drift = s
                .max_energy_drift
                .max(math::abs(b.total_energy - first.total_energy));
            s.min_entropy_increment = s.min_entropy_increment.min(b.entropy - a.entropy);
            s.min_dnum_residual = s.min_dnum_residual.min(b.dnum_residual);
            s.min_graddiv = s.min_graddiv.min(b.dnum_graddiv);
            s.max_graddiv = s.max_graddiv.max(b.dnum_graddiv);
            s.min_pressure = s.min_pressure.min(b.dnum_pressure);
            s.max_pressure = s.max_pressure.max(b.dnum_pressure);
            s.max_newton_residual = s.max_newton_residual.max(b.residual);
        }
        if s.steps == 0 {
            return Self::default();
        }
        s
    }

    /// Mass, energy, entropy and entropy-production checks.
    pub fn checks(&self, bounds: &StructureBounds) -> [StructureCheck; 4] {
        [
            StructureCheck {
                name: "mass drift per step",
                value: self.max_mass_step,
                bound: bounds.mass_step,
                pass: self.max_mass_step <= bounds.mass_step,
            },
            StructureCheck {
                name: "total energy drift",
                value: self.max_energy_drift,
                bound: bounds.energy_total,
                pass: self.max_energy_drift <= bounds.energy_total,
            },
            StructureCheck {
                name: "entropy increment",
                value: self.min_entropy_increment,
                bound: bounds.entropy_increment,
                pass: self.min_entropy_increment >= bounds.entropy_increment,
            },
            StructureCheck {
                name: "Dnum residual",
                value: self.min_dnum_residual,
                bound: bounds.dnum_residual,
                pass: self.min_dnum_residual >= bounds.dnum_residual,
            },
        ]
    }
}
