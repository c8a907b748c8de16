//! The fully discrete coupled system, its Newton solver and time stepping.
//!
//! Unknowns per vertex are `(phi, mu, theta, u_x, u_y, pi)`, interleaved as
//! `6 * dof + field`. One extra unknown, a Lagrange multiplier, enforces the
//! zero mean of the stabilised pressure. The residual rows use the same
//! interleaving: phase equation, chemical potential, internal energy, the two
//! momentum components and the stabilised divergence constraint.
//!
//! One step, with midpoint `u_m = (u^{n+1} + u^n)/2`, starred quantities at
//! the old level ([`StarMode::Explicit`]) or the new level
//! ([`StarMode::Implicit`]) and `theta`, `mu`, `pi` at the new level:
//!
//! ```text
//! <d_t phi, psi> - <phi* u_m, grad psi> + <L11 grad mu - L12 grad theta, grad psi> = 0
//! <mu, xi> - gamma <grad phi, grad xi> - <dPsi(phi^{n+1}, phi^n, theta), xi> = 0
//! <d_t e, w> + <L12 grad mu - L22 grad theta, grad w>
//!     - <eta* |D u_m|^2 + eps |div u_m|^2 + delta h^2 |grad pi|^2, w>
//!     - <sigma* u_m, grad w> - <phi*/theta grad mu - sigma* grad theta / theta, u_m w>
//!     - <(s* + phi* mu*) u_m, (theta grad w - w grad theta) / theta*^2> = 0
//! <d_t u, v> + c_skw(u*, u_m, v) + <eta* D u_m, D v> + eps <div u_m, div v> - <pi, div v>
//!     + <phi*/theta grad mu - sigma* grad theta / theta - (s* + phi* mu*) grad theta / theta*^2, v> = 0
//! <div u_m, q> + delta h^2 <grad pi, grad q> + lambda <1, q> = 0,     <pi, 1> = 0
//! ```
//!
//! The element residual is written once over [`Real`]; the Jacobian is the
//! same code evaluated on dual numbers.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::ad::{Dual, Real};
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::fem::{Element, FemSpace, ScalarField, VectorField};
use crate::linsolve::{self, SolveReport, SparseMatrix};
use crate::math;
use crate::model::{self, ModelParams};
use crate::{Error, Result};

/// Fields per vertex.
pub const FIELDS: usize = 6;
const LOCAL: usize = 3 * FIELDS;

pub const PHI: usize = 0;
pub const MU: usize = 1;
pub const THETA: usize = 2;
pub const UX: usize = 3;
pub const UY: usize = 4;
pub const PI: usize = 5;

/// Time level at which the starred coefficients are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StarMode {
    /// `g* = g^n`
    #[default]
    Explicit,
    /// `g* = g^{n+1}`
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub tau: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    /// Smallest admissible damping factor before the step is abandoned.
    pub min_damping: f64,
    pub star_mode: StarMode,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            newton_tol: 1e-12,
            newton_max: 50,
            min_damping: 1.0 / (1u64 << 20) as f64,
            star_mode: StarMode::Explicit,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "time step must be positive, got {}",
                self.tau
            )));
        }
        if !(self.newton_tol > 0.0) || self.newton_max == 0 {
            return Err(Error::InvalidParameter(
                "Newton tolerance and iteration cap must be positive".into(),
            ));
        }
        if !(self.min_damping > 0.0 && self.min_damping <= 1.0) {
            return Err(Error::InvalidParameter(
                "minimum damping factor must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// The discrete solution at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub phi: ScalarField,
    pub mu: ScalarField,
    pub theta: ScalarField,
    pub u: VectorField,
    pub pi: ScalarField,
    pub t: f64,
}

impl State {
    pub fn check_on(&self, space: &FemSpace) -> Result<()> {
        space.check(&self.phi)?;
        space.check(&self.mu)?;
        space.check(&self.theta)?;
        space.check_vector(&self.u)?;
        space.check(&self.pi)
    }

    fn field(&self, f: usize) -> &ScalarField {
        match f {
            PHI => &self.phi,
            MU => &self.mu,
            THETA => &self.theta,
            UX => self.u.component(0),
            UY => self.u.component(1),
            _ => &self.pi,
        }
    }

    fn field_mut(&mut self, f: usize) -> &mut ScalarField {
        match f {
            PHI => &mut self.phi,
            MU => &mut self.mu,
            THETA => &mut self.theta,
            UX => self.u.component_mut(0),
            UY => self.u.component_mut(1),
            _ => &mut self.pi,
        }
    }

    /// Interleaved coefficient vector plus a zero multiplier slot.
    fn pack(&self) -> Vec<f64> {
        let n = self.phi.len();
        let mut x = vec![0.0; FIELDS * n + 1];
        for f in 0..FIELDS {
            for (i, &v) in self.field(f).dofs().iter().enumerate() {
                x[FIELDS * i + f] = v;
            }
        }
        x
    }

    fn unpack(&mut self, x: &[f64]) {
        for f in 0..FIELDS {
            for (i, v) in self.field_mut(f).dofs_mut().iter_mut().enumerate() {
                *v = x[FIELDS * i + f];
            }
        }
    }
}

/// Newton statistics of one time step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub iterations: usize,
    /// Euclidean norm of the final residual.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// Number of halvings of the Newton update.
    pub damping_events: usize,
    /// Linear solve of the last Newton iteration.
    pub linear: Option<SolveReport>,
    /// Largest relative linear residual over the step.
    pub max_linear_residual: f64,
}

/// The discretisation of one problem: mesh, parameters and step settings,
/// plus the cached Jacobian structure and fill-reducing order.
#[derive(Debug, Clone)]
pub struct Scheme<'a> {
    space: &'a FemSpace,
    params: ModelParams,
    cfg: StepConfig,
    h: f64,
    pattern: SparseMatrix,
    /// For each cell and local pair `(a, b)`, the slot of vertex `b` in the
    /// sorted neighbourhood of vertex `a`.
    slots: Vec<[[usize; 3]; 3]>,
    order: Vec<usize>,
    basis_integrals: Vec<f64>,
}

impl<'a> Scheme<'a> {
    pub fn new(space: &'a FemSpace, params: ModelParams, cfg: StepConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let mesh = space.mesh();
        let n = mesh.num_dofs();
        let nb = mesh.vertex_neighbours();
        let dim = FIELDS * n + 1;
        let lambda = FIELDS * n;
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for list in &nb {
            for eq in 0..FIELDS {
                for &j in list {
                    col_idx.extend((0..FIELDS).map(|f| FIELDS * j + f));
                }
                if eq == PI {
                    col_idx.push(lambda);
                }
                row_ptr.push(col_idx.len());
            }
        }
        col_idx.extend((0..n).map(|j| FIELDS * j + PI));
        col_idx.push(lambda);
        row_ptr.push(col_idx.len());
        let pattern = SparseMatrix::from_pattern(dim, dim, row_ptr, col_idx)?;
        let slots = space
            .elements()
            .iter()
            .map(|el| {
                let mut s = [[0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        s[a][b] = nb[el.dofs[a]]
                            .binary_search(&el.dofs[b])
                            .expect("cell vertices are neighbours");
                    }
                }
                s
            })
            .collect();
        let order = linsolve::nested_dissection(&pattern);
        Ok(Self {
            space,
            params,
            cfg,
            h: mesh.h(),
            pattern,
            slots,
            order,
            basis_integrals: space.basis_integrals(),
        })
    }

    pub fn space(&self) -> &'a FemSpace {
        self.space
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    /// Size of the coupled system including the multiplier row.
    pub fn dim(&self) -> usize {
        self.pattern.nrows()
    }

    /// Builds an initial state from nodal `phi`, `theta` and `u`: `mu` from
    /// the chemical-potential equation, `pi = 0`.
    pub fn initial_state(
        &self,
        phi: ScalarField,
        theta: ScalarField,
        u: VectorField,
    ) -> Result<State> {
        let mu = initial_chemical_potential(self.space, &phi, &theta, &self.params)?;
        let state = State {
            pi: ScalarField::zeros(self.space.mesh()),
            phi,
            mu,
            theta,
            u,
            t: 0.0,
        };
        state.check_on(self.space)?;
        self.check_positive(&state.theta)?;
        Ok(state)
    }

    fn check_positive(&self, theta: &ScalarField) -> Result<()> {
        let tmin = self.params.theta_min;
        for (cell, el) in self.space.elements().iter().enumerate() {
            for &d in &el.dofs {
                let v = theta.dofs()[d];
                if !(v >= tmin) {
                    return Err(Error::PositivityViolation {
                        cell,
                        value: v,
                        theta_min: tmin,
                    });
                }
            }
        }
        Ok(())
    }

    /// Weak residual of the step `old -> new`, tested against every basis
    /// function. The multiplier is taken as zero; the last entry is the
    /// pressure mean.
    pub fn residual(&self, new: &State, old: &State) -> Result<Vec<f64>> {
        new.check_on(self.space)?;
        old.check_on(self.space)?;
        self.residual_vec(&new.pack(), &old.pack())
    }

    /// Exact Jacobian of [`residual`](Self::residual) with respect to the new
    /// coefficients and the multiplier.
    pub fn jacobian(&self, new: &State, old: &State) -> Result<SparseMatrix> {
        new.check_on(self.space)?;
        old.check_on(self.space)?;
        self.jacobian_mat(&new.pack(), &old.pack())
    }

    fn gather<T: Copy>(el: &Element, x: &[T]) -> [T; LOCAL] {
        core::array::from_fn(|k| x[FIELDS * el.dofs[k / FIELDS] + k % FIELDS])
    }

    fn residual_vec(&self, x: &[f64], x_old: &[f64]) -> Result<Vec<f64>> {
        let mut r = vec![0.0; self.dim()];
        for (cell, el) in self.space.elements().iter().enumerate() {
            let new: [f64; LOCAL] = Self::gather(el, x);
            let old: [f64; LOCAL] = Self::gather(el, x_old);
            let mut out = [0.0; LOCAL];
            self.cell_residual(cell, el, &new, &old, &mut out)?;
            for (k, v) in out.iter().enumerate() {
                r[FIELDS * el.dofs[k / FIELDS] + k % FIELDS] += v;
            }
        }
        self.add_multiplier_terms(x, &mut r);
        Ok(r)
    }

    fn add_multiplier_terms(&self, x: &[f64], r: &mut [f64]) {
        let lambda = x[self.dim() - 1];
        let mut mean = 0.0;
        for (i, &m) in self.basis_integrals.iter().enumerate() {
            r[FIELDS * i + PI] += lambda * m;
            mean += m * x[FIELDS * i + PI];
        }
        r[self.dim() - 1] = mean;
    }

    fn jacobian_mat(&self, x: &[f64], x_old: &[f64]) -> Result<SparseMatrix> {
        let mut jac = self.pattern.clone();
        let row_ptr = jac.row_ptr().to_vec();
        let values = jac.values_mut();
        for (cell, el) in self.space.elements().iter().enumerate() {
            let xv: [f64; LOCAL] = Self::gather(el, x);
            let new: [Dual<LOCAL>; LOCAL] = core::array::from_fn(|k| Dual::var(xv[k], k));
            let old: [f64; LOCAL] = Self::gather(el, x_old);
            let mut out = [Dual::cst(0.0); LOCAL];
            self.cell_residual(cell, el, &new, &old, &mut out)?;
            let slots = &self.slots[cell];
            for a in 0..3 {
                for eq in 0..FIELDS {
                    let start = row_ptr[FIELDS * el.dofs[a] + eq];
                    let d = &out[FIELDS * a + eq].d;
                    for b in 0..3 {
                        let base = start + FIELDS * slots[a][b];
                        for f in 0..FIELDS {
                            values[base + f] += d[FIELDS * b + f];
                        }
                    }
                }
            }
        }
        let last = self.dim() - 1;
        for (i, &m) in self.basis_integrals.iter().enumerate() {
            let row = FIELDS * i + PI;
            // the multiplier column is the last entry of each pressure row
            values[row_ptr[row + 1] - 1] += m;
            values[row_ptr[last] + i] += m;
        }
        Ok(jac)
    }

    /// Element residual; `new` holds the 18 local unknowns
    /// `FIELDS * vertex + field`, `old` the previous level.
    fn cell_residual<T: Real>(
        &self,
        cell: usize,
        el: &Element,
        new: &[T; LOCAL],
        old: &[f64; LOCAL],
        out: &mut [T; LOCAL],
    ) -> Result<()> {
        let p = &self.params;
        let tau = self.cfg.tau;
        let inv_tau = 1.0 / tau;
        let stab_p = p.delta * self.h * self.h;
        let eps = p.epsilon;
        let gamma = p.gamma;
        let implicit = self.cfg.star_mode == StarMode::Implicit;
        let g = &el.grads;

        let grad = |f: usize| -> [T; 2] {
            [
                new[f] * g[0][0] + new[FIELDS + f] * g[1][0] + new[2 * FIELDS + f] * g[2][0],
                new[f] * g[0][1] + new[FIELDS + f] * g[1][1] + new[2 * FIELDS + f] * g[2][1],
            ]
        };
        let grad_old = |f: usize| -> [f64; 2] {
            [
                old[f] * g[0][0] + old[FIELDS + f] * g[1][0] + old[2 * FIELDS + f] * g[2][0],
                old[f] * g[0][1] + old[FIELDS + f] * g[1][1] + old[2 * FIELDS + f] * g[2][1],
            ]
        };

        let gphi = grad(PHI);
        let gmu = grad(MU);
        let gth = grad(THETA);
        let gpi = grad(PI);
        let gu = [grad(UX), grad(UY)];
        let gun = [grad_old(UX), grad_old(UY)];
        // midpoint velocity gradient, row = component
        let gum: [[T; 2]; 2] =
            core::array::from_fn(|c| core::array::from_fn(|d| (gu[c][d] + gun[c][d]) * 0.5));
        let d12 = (gum[0][1] + gum[1][0]) * 0.5;
        let sym: [[T; 2]; 2] = [[gum[0][0], d12], [d12, gum[1][1]]];
        let du2 = gum[0][0].sq() + d12.sq() * 2.0 + gum[1][1].sq();
        let divm = gum[0][0] + gum[1][1];
        let gpi2 = gpi[0].sq() + gpi[1].sq();
        let gphis: [T; 2] = if implicit {
            gphi
        } else {
            grad_old(PHI).map(T::cst)
        };
        let gphis2 = gphis[0].sq() + gphis[1].sq();
        let gps_gth = gphis[0] * gth[0] + gphis[1] * gth[1];

        let rule = self.space.rule();
        let zero = T::cst(0.0);
        *out = [zero; LOCAL];
        for (bary, &wq) in rule.points().iter().zip(rule.weights()) {
            let w = wq * el.area;
            let val = |f: usize| {
                new[f] * bary[0] + new[FIELDS + f] * bary[1] + new[2 * FIELDS + f] * bary[2]
            };
            let val_old = |f: usize| {
                old[f] * bary[0] + old[FIELDS + f] * bary[1] + old[2 * FIELDS + f] * bary[2]
            };
            let (phi, mu, th, pi) = (val(PHI), val(MU), val(THETA), val(PI));
            let u = [val(UX), val(UY)];
            let (phin, mun, thn) = (val_old(PHI), val_old(MU), val_old(THETA));
            let un = [val_old(UX), val_old(UY)];
            if !(th.val() >= p.theta_min) {
                return Err(Error::PositivityViolation {
                    cell,
                    value: th.val(),
                    theta_min: p.theta_min,
                });
            }
            if !(thn >= p.theta_min) {
                return Err(Error::PositivityViolation {
                    cell,
                    value: thn,
                    theta_min: p.theta_min,
                });
            }
            let um = [(u[0] + un[0]) * 0.5, (u[1] + un[1]) * 0.5];
            let (phis, mus, ths, us) = if implicit {
                (phi, mu, th, u)
            } else {
                (T::cst(phin), T::cst(mun), T::cst(thn), un.map(T::cst))
            };

            let e = model::internal_energy_generic(phi, th);
            let en = model::internal_energy_generic(phin, thn);
            let dpsi = model::dphi_psi_split_generic(phi, T::cst(phin), th, p.c_split);
            let etas = model::eta_generic(&p.viscosity, phis, ths);
            let ss = model::entropy_generic(phis, ths, gphis2, gamma);
            let inv_th = th.recip();
            let inv_ths2 = (ths * ths).recip();
            let kap = ths.recip() * gamma;
            let coup = ss + phis * mus;
            let gps_um = gphis[0] * um[0] + gphis[1] * um[1];
            let gmu_um = gmu[0] * um[0] + gmu[1] * um[1];
            let um_gth = um[0] * gth[0] + um[1] * gth[1];
            let phis_inv_th = phis * inv_th;
            let korteweg_pull = kap * gps_gth * inv_th;
            let coup_w = coup * inv_ths2;

            // coefficients of psi_a and of grad psi_a per equation
            let n_phi = (phi - phin) * inv_tau;
            let g_phi = [
                gmu[0] * p.l11 - gth[0] * p.l12 - phis * um[0],
                gmu[1] * p.l11 - gth[1] * p.l12 - phis * um[1],
            ];
            let n_mu = mu - dpsi;
            let g_mu = [gphi[0] * (-gamma), gphi[1] * (-gamma)];
            let n_th = (e - en) * inv_tau
                - etas * du2
                - divm.sq() * eps
                - gpi2 * stab_p
                - (phis_inv_th * gmu_um - korteweg_pull * gps_um)
                + coup_w * um_gth;
            let g_th: [T; 2] = core::array::from_fn(|d| {
                gmu[d] * p.l12 - gth[d] * p.l22 - kap * gps_um * gphis[d] - coup_w * th * um[d]
            });
            let force: [T; 2] = core::array::from_fn(|c| {
                phis_inv_th * gmu[c] - korteweg_pull * gphis[c] - coup_w * gth[c]
            });
            let n_u: [T; 2] = core::array::from_fn(|c| {
                (u[c] - un[c]) * inv_tau + (us[0] * gum[c][0] + us[1] * gum[c][1]) * 0.5 + force[c]
            });
            let press = divm * eps - pi;
            let g_u: [[T; 2]; 2] = core::array::from_fn(|c| {
                core::array::from_fn(|d| {
                    let diag = if c == d { press } else { zero };
                    etas * sym[c][d] - us[d] * um[c] * 0.5 + diag
                })
            });
            let n_pi = divm;
            let g_pi = [gpi[0] * stab_p, gpi[1] * stab_p];

            for a in 0..3 {
                let na = bary[a] * w;
                let ga = [g[a][0] * w, g[a][1] * w];
                let o = &mut out[FIELDS * a..FIELDS * (a + 1)];
                o[PHI] = o[PHI] + n_phi * na + g_phi[0] * ga[0] + g_phi[1] * ga[1];
                o[MU] = o[MU] + n_mu * na + g_mu[0] * ga[0] + g_mu[1] * ga[1];
                o[THETA] = o[THETA] + n_th * na + g_th[0] * ga[0] + g_th[1] * ga[1];
                o[UX] = o[UX] + n_u[0] * na + g_u[0][0] * ga[0] + g_u[0][1] * ga[1];
                o[UY] = o[UY] + n_u[1] * na + g_u[1][0] * ga[0] + g_u[1][1] * ga[1];
                o[PI] = o[PI] + n_pi * na + g_pi[0] * ga[0] + g_pi[1] * ga[1];
            }
        }
        Ok(())
    }

    fn min_theta(x: &[f64]) -> f64 {
        x.chunks_exact(FIELDS)
            .map(|c| c[THETA])
            .fold(f64::INFINITY, f64::min)
    }

    /// One time step by damped Newton from the previous state.
    pub fn advance(&self, old: &State) -> Result<(State, StepReport)> {
        old.check_on(self.space)?;
        let x_old = old.pack();
        let mut x = x_old.clone();
        let mut r = self.residual_vec(&x, &x_old)?;
        let mut rn = norm(&r);
        let mut report = StepReport {
            residual: rn,
            residual_history: vec![rn],
            ..StepReport::default()
        };
        let tmin = self.params.theta_min;
        while rn > self.cfg.newton_tol {
            if report.iterations >= self.cfg.newton_max {
                return Err(Error::NewtonNotConverged {
                    report: Box::new(report),
                });
            }
            let jac = self.jacobian_mat(&x, &x_old)?;
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            // without pressure stabilisation the equal-order pair leaves
            // spurious pressure modes in the kernel
            let (dx, lin) = if self.params.delta == 0.0 {
                linsolve::solve_consistent_with_order(&jac, &rhs, &self.order)?
            } else {
                linsolve::solve_with_order(&jac, &rhs, &self.order)?
            };
            report.max_linear_residual = report.max_linear_residual.max(lin.relative_residual);
            report.linear = Some(lin);
            let mut alpha = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
                if Self::min_theta(&trial) >= tmin {
                    if let Ok(rt) = self.residual_vec(&trial, &x_old) {
                        let rtn = norm(&rt);
                        if rtn < rn {
                            x = trial;
                            r = rt;
                            rn = rtn;
                            break;
                        }
                    }
                }
                alpha *= 0.5;
                report.damping_events += 1;
                if alpha < self.cfg.min_damping {
                    report.residual = rn;
                    return Err(Error::DampingUnderflow {
                        report: Box::new(report),
                    });
                }
            }
            report.iterations += 1;
            report.residual = rn;
            report.residual_history.push(rn);
        }
        let mut new = old.clone();
        new.unpack(&x);
        new.t = old.t + self.cfg.tau;
        Ok((new, report))
    }

    /// Advances `initial` to `final_time`, calling `observer` with the
    /// diagnostics record of the initial state and of every step.
    pub fn run(
        &self,
        initial: &State,
        final_time: f64,
        observer: &mut dyn FnMut(&DiagnosticsRecord, &State),
    ) -> Result<Trajectory> {
        let steps = step_count(final_time, self.cfg.tau)?;
        initial.check_on(self.space)?;
        let mut records = Vec::with_capacity(steps + 1);
        let first = DiagnosticsRecord::initial(self.space, initial, &self.params)?;
        observer(&first, initial);
        records.push(first);
        let mut state = initial.clone();
        for step in 1..=steps {
            let (next, report) = self.advance(&state).map_err(|e| Error::StepFailed {
                step,
                source: alloc::boxed::Box::new(e),
            })?;
            let record =
                diagnostics::record_step(self, step, &state, &next, &report).map_err(|e| {
                    Error::StepFailed {
                        step,
                        source: alloc::boxed::Box::new(e),
                    }
                })?;
            observer(&record, &next);
            records.push(record);
            state = next;
        }
        Ok(Trajectory {
            final_state: state,
            records,
        })
    }
}

/// Number of steps of size `tau` in `final_time`; rejects non-multiples.
pub fn step_count(final_time: f64, tau: f64) -> Result<usize> {
    if !(final_time >= 0.0) || !(tau > 0.0) {
        return Err(Error::IncommensurateFinalTime { final_time, tau });
    }
    let steps = libm::round(final_time / tau);
    if math::abs(steps * tau - final_time) > 1e-12 {
        return Err(Error::IncommensurateFinalTime { final_time, tau });
    }
    Ok(steps as usize)
}

/// Final state and per-step diagnostics of [`Scheme::run`]; `records[0]`
/// describes the initial state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: State,
    pub records: Vec<DiagnosticsRecord>,
}

fn norm(v: &[f64]) -> f64 {
    math::sqrt(v.iter().map(|x| x * x).sum())
}

/// Solves the chemical-potential equation once for given `phi`, `theta`:
/// `<mu, xi> = gamma <grad phi, grad xi> + <d_phi Psi(phi, theta), xi>`.
pub fn initial_chemical_potential(
    space: &FemSpace,
    phi: &ScalarField,
    theta: &ScalarField,
    params: &ModelParams,
) -> Result<ScalarField> {
    space.check(phi)?;
    space.check(theta)?;
    if let Some(&t) = theta.dofs().iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::NonPositiveTemperature(t));
    }
    let mass = space.mass_matrix();
    let stiff = space.stiffness_matrix();
    let kphi = stiff.mul_vec(phi.dofs());
    let load = space.load_vector(|q| {
        let (p, t) = (q.value(phi), q.value(theta));
        model::dphi_psi_split_generic(p, p, t, params.c_split)
    });
    let rhs: Vec<f64> = kphi
        .iter()
        .zip(&load)
        .map(|(k, l)| params.gamma * k + l)
        .collect();
    let mu = linsolve::solve(&mass, &rhs)?;
    ScalarField::new(space.mesh(), mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::PeriodicMesh;
    use core::f64::consts::PI as PI_F;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::vec::Vec;

    fn space(n: usize) -> FemSpace {
        FemSpace::new(PeriodicMesh::new(n).unwrap())
    }

    fn constant_state(s: &FemSpace, params: &ModelParams) -> State {
        let mesh = s.mesh();
        let phi = ScalarField::constant(mesh, 0.4);
        let theta = ScalarField::constant(mesh, 1.0);
        let mu = model::dphi_psi_split(0.4, 0.4, 1.0, params.c_split).unwrap();
        State {
            phi,
            mu: ScalarField::constant(mesh, mu),
            theta,
            u: VectorField::zeros(mesh),
            pi: ScalarField::zeros(mesh),
            t: 0.0,
        }
    }

    fn random_state(s: &FemSpace, rng: &mut StdRng) -> State {
        let mesh = s.mesh();
        let mut f = |lo: f64, hi: f64| {
            let d = (0..s.num_dofs()).map(|_| rng.gen_range(lo..hi)).collect();
            ScalarField::new(mesh, d).unwrap()
        };
        let phi = f(0.1, 0.9);
        let mu = f(-0.5, 0.5);
        let theta = f(0.7, 1.3);
        let u = VectorField::new(f(-0.1, 0.1), f(-0.1, 0.1)).unwrap();
        let pi = f(-0.2, 0.2);
        State {
            phi,
            mu,
            theta,
            u,
            pi,
            t: 0.0,
        }
    }

    fn norm_inf(v: &[f64]) -> f64 {
        v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    #[test]
    fn constant_state_is_a_discrete_steady_state() {
        let s = space(4);
        let params = ModelParams::default();
        let sch = Scheme::new(&s, params, StepConfig::default()).unwrap();
        let st = constant_state(&s, &params);
        let r = sch.residual(&st, &st).unwrap();
        assert!(norm(&r) <= 1e-13, "{}", norm(&r));
    }

    #[test]
    fn phase_block_matches_matrix_assembly() {
        // u = 0, L12 = 0: phase residual = M (phi - phi_old)/tau + L11 K mu
        let s = space(5);
        let params = ModelParams {
            l12: 0.0,
            ..Default::default()
        };
        let cfg = StepConfig::default();
        let sch = Scheme::new(&s, params, cfg).unwrap();
        let mut rng = StdRng::seed_from_u64(1);
        let mut new = random_state(&s, &mut rng);
        let mut old = random_state(&s, &mut rng);
        new.u = VectorField::zeros(s.mesh());
        old.u = VectorField::zeros(s.mesh());
        let r = sch.residual(&new, &old).unwrap();
        let dphi: Vec<f64> = new
            .phi
            .dofs()
            .iter()
            .zip(old.phi.dofs())
            .map(|(a, b)| (a - b) / cfg.tau)
            .collect();
        let m = s.mass_matrix().mul_vec(&dphi);
        let k = s.stiffness_matrix().mul_vec(new.mu.dofs());
        for i in 0..s.num_dofs() {
            let expect = m[i] + params.l11 * k[i];
            assert!((r[FIELDS * i + PHI] - expect).abs() < 1e-13, "{i}");
        }
    }

    fn fd_check(star_mode: StarMode, params: ModelParams) {
        let s = space(4);
        let cfg = StepConfig {
            star_mode,
            ..Default::default()
        };
        let sch = Scheme::new(&s, params, cfg).unwrap();
        let mut rng = StdRng::seed_from_u64(99);
        let new = random_state(&s, &mut rng);
        let old = random_state(&s, &mut rng);
        let mut x = new.pack();
        x[sch.dim() - 1] = 0.3;
        let xo = old.pack();
        let jac = sch.jacobian_mat(&x, &xo).unwrap();
        let mut worst: f64 = 0.0;
        for col in 0..sch.dim() {
            let h = 1e-7 * x[col].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += h;
            xm[col] -= h;
            let rp = sch.residual_vec(&xp, &xo).unwrap();
            let rm = sch.residual_vec(&xm, &xo).unwrap();
            let fd: Vec<f64> = rp
                .iter()
                .zip(&rm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            let exact: Vec<f64> = (0..sch.dim()).map(|r| jac.get(r, col)).collect();
            let diff: Vec<f64> = fd.iter().zip(&exact).map(|(a, b)| a - b).collect();
            let scale = norm_inf(&exact).max(1e-300);
            worst = worst.max(norm_inf(&diff) / scale);
        }
        assert!(worst <= 1e-6, "max relative column error {worst:e}");
    }

    #[test]
    fn jacobian_matches_finite_differences_explicit() {
        let params = ModelParams {
            l12: 2e-3,
            ..Default::default()
        };
        fd_check(StarMode::Explicit, params);
    }

    #[test]
    fn jacobian_matches_finite_differences_implicit() {
        let params = ModelParams {
            l12: 2e-3,
            ..Default::default()
        };
        fd_check(StarMode::Implicit, params);
    }

    #[test]
    fn viscous_block_is_symmetric_when_decoupled() {
        let s = space(4);
        let params = ModelParams {
            l12: 0.0,
            epsilon: 0.0,
            delta: 0.0,
            ..Default::default()
        };
        let sch = Scheme::new(&s, params, StepConfig::default()).unwrap();
        let mut rng = StdRng::seed_from_u64(4);
        let mut st = random_state(&s, &mut rng);
        st.u = VectorField::zeros(s.mesh());
        let old = st.clone();
        let jac = sch.jacobian(&st, &old).unwrap();
        let n = s.num_dofs();
        for i in 0..n {
            for j in 0..n {
                for c in [UX, UY] {
                    for d in [UX, UY] {
                        let a = jac.get(FIELDS * i + c, FIELDS * j + d);
                        let b = jac.get(FIELDS * j + d, FIELDS * i + c);
                        assert!((a - b).abs() <= 1e-13, "({i},{c}) ({j},{d}): {a} {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn steady_state_jacobian_is_nonsingular_and_advance_is_fixed_point() {
        let s = space(4);
        let params = ModelParams::default();
        let sch = Scheme::new(&s, params, StepConfig::default()).unwrap();
        let st = constant_state(&s, &params);
        let jac = sch.jacobian(&st, &st).unwrap();
        let b = vec![1.0; sch.dim()];
        assert!(linsolve::solve(&jac, &b).is_ok());
        let (next, report) = sch.advance(&st).unwrap();
        for f in 0..FIELDS {
            for (a, b) in next.field(f).dofs().iter().zip(st.field(f).dofs()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        assert!(report.residual <= 1e-12);
        assert!((next.t - 1e-3).abs() < 1e-18);
    }

    fn convergence_initial(sch: &Scheme<'_>) -> State {
        let s = sch.space();
        let sw = |x: f64, y: f64| (2.0 * PI_F * x).sin() * (2.0 * PI_F * y).sin();
        let phi = s.interpolate(|x, y| 0.4 + 0.2 * sw(x, y)).unwrap();
        let theta = s.interpolate(|x, y| 1.0 + 0.2 * sw(x, y)).unwrap();
        let ux = s
            .interpolate(|x, y| -1e-2 * (PI_F * x).sin().powi(2) * (2.0 * PI_F * y).sin())
            .unwrap();
        let uy = s
            .interpolate(|x, y| 1e-2 * (2.0 * PI_F * x).sin() * (PI_F * y).sin().powi(2))
            .unwrap();
        sch.initial_state(phi, theta, VectorField::new(ux, uy).unwrap())
            .unwrap()
    }

    #[test]
    fn one_step_conserves_mass_and_energy() {
        let s = space(8);
        let params = ModelParams::default();
        let sch = Scheme::new(&s, params, StepConfig::default()).unwrap();
        let st = convergence_initial(&sch);
        let (next, report) = sch.advance(&st).unwrap();
        assert!(report.residual <= 1e-12);
        assert!(report.iterations >= 1);
        // converged state has (near) zero residual
        let r = sch.residual(&next, &st).unwrap();
        assert!(norm(&r) <= 1e-12);
        let c0 = diagnostics::conserved_quantities(&s, &st, &params).unwrap();
        let c1 = diagnostics::conserved_quantities(&s, &next, &params).unwrap();
        assert!((c1.mass - c0.mass).abs() <= 1e-12);
        assert!((c1.total - c0.total).abs() <= 1e-10);
        assert!(c1.entropy - c0.entropy >= -1e-12);
    }

    #[test]
    fn pressure_constraint_and_divergence_mean() {
        let s = space(8);
        let params = ModelParams::default();
        let sch = Scheme::new(&s, params, StepConfig::default()).unwrap();
        let st = convergence_initial(&sch);
        let (next, _) = sch.advance(&st).unwrap();
        let mean = s.integrate(|q| q.value(&next.pi));
        assert!(mean.abs() < 1e-13);
        let um = next.u.midpoint(&st.u).unwrap();
        let div_mean = s.integrate(|q| {
            let g = q.vector_grad(&um);
            g[0][0] + g[1][1]
        });
        assert!(div_mean.abs() < 1e-13);
    }

    #[test]
    fn residual_rejects_foreign_and_nonpositive_states() {
        let s = space(4);
        let params = ModelParams::default();
        let sch = Scheme::new(&s, params, StepConfig::default()).unwrap();
        let st = constant_state(&s, &params);
        let other = constant_state(&space(3), &params);
        assert!(matches!(
            sch.residual(&other, &st),
            Err(Error::MeshMismatch { .. })
        ));
        let mut cold = st.clone();
        cold.theta.dofs_mut()[3] = -1.0;
        assert!(matches!(
            sch.residual(&cold, &st),
            Err(Error::PositivityViolation { .. })
        ));
        assert!(matches!(
            sch.advance(&cold),
            Err(Error::PositivityViolation { .. })
        ));
    }

    #[test]
    fn newton_cap_is_reported() {
        let s = space(4);
        let params = ModelParams::default();
        let cfg = StepConfig {
            newton_max: 1,
            newton_tol: 1e-30,
            ..Default::default()
        };
        let sch = Scheme::new(&s, params, cfg).unwrap();
        let mut rng = StdRng::seed_from_u64(8);
        let st = random_state(&s, &mut rng);
        match sch.advance(&st) {
            Err(Error::NewtonNotConverged { report }) | Err(Error::DampingUnderflow { report }) => {
                assert!(report.iterations <= 1);
                assert!(!report.residual_history.is_empty());
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let s = space(3);
        let bad = StepConfig {
            tau: 0.0,
            ..Default::default()
        };
        assert!(Scheme::new(&s, ModelParams::default(), bad).is_err());
        let bad = StepConfig {
            newton_tol: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(step_count(0.1, 1e-3).unwrap() == 100);
        assert!(step_count(0.0, 1e-3).unwrap() == 0);
        assert!(step_count(0.1005, 1e-3).is_err());
    }

    #[test]
    fn zero_final_time_returns_initial_state() {
        let s = space(4);
        let params = ModelParams::default();
        let sch = Scheme::new(&s, params, StepConfig::default()).unwrap();
        let st = convergence_initial(&sch);
        let mut seen = 0;
        let traj = sch.run(&st, 0.0, &mut |_, _| seen += 1).unwrap();
        assert_eq!(traj.final_state, st);
        assert_eq!(traj.records.len(), 1);
        assert_eq!(seen, 1);
    }
}
