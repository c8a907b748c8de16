//! Pointwise thermodynamic closures in the inverse temperature `theta`.
//!
//! The free energy is `Psi~ = Psi(phi, theta) + gamma/2 |grad phi|^2` with
//! the bulk potential
//!
//! ```text
//! Psi(phi, theta) = ln(theta) + (2 theta - 1) W(phi),   W(phi) = phi^2 (1 - phi)^2
//! ```
//!
//! from which internal energy `e = d_theta Psi~ = 1/theta + 2 W` and entropy
//! `s = theta e - Psi~ = 1 - ln(theta) + W - gamma/2 |grad phi|^2` follow.
//!
//! The phase derivative is split into convex and concave parts with a
//! quadratic shift `c/2 phi^2`: `W_c = W + c/2 phi^2` (convex for `c >= 1`)
//! and `W_e = c/2 phi^2`. With `a = 2 theta - 1`:
//!
//! * `a > 0`: `Psi_vex = ln(theta) + a W_c`, `Psi_cav = -a W_e`
//! * `a <= 0`: `Psi_vex = ln(theta) - a W_e`, `Psi_cav = a W_c`
//!
//! The convex part is evaluated at the new phase field, the concave part at
//! the old one.

use alloc::format;

use crate::ad::Real;
use crate::{Error, Result};

/// Bulk potential family. Only the quartic double well with logarithmic
/// temperature dependence is provided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Potential {
    #[default]
    QuarticLog,
}

/// Viscosity law `eta(phi, theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Viscosity {
    /// `base + slope * (phi + 1)^2`
    PhaseQuadratic {
        base: f64,
        slope: f64,
    },
    Constant(f64),
}

impl Default for Viscosity {
    fn default() -> Self {
        Viscosity::PhaseQuadratic {
            base: 1e-3,
            slope: 1.0 / 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Interface coefficient `gamma > 0`.
    pub gamma: f64,
    /// Grad-div stabilisation weight.
    pub epsilon: f64,
    /// Pressure (Brezzi-Pitkaranta) stabilisation weight.
    pub delta: f64,
    pub l11: f64,
    pub l12: f64,
    pub l22: f64,
    pub viscosity: Viscosity,
    pub potential: Potential,
    /// Convexity shift of the phase split, `>= 1`.
    pub c_split: f64,
    /// Positivity safeguard for the inverse temperature.
    pub theta_min: f64,
}

impl Default for ModelParams {
    /// The two-dimensional convergence-test parameters.
    fn default() -> Self {
        Self {
            gamma: 1e-3,
            epsilon: 10.0,
            delta: 1.0,
            l11: 1e-2,
            l12: 0.0,
            l22: 1e-2,
            viscosity: Viscosity::default(),
            potential: Potential::QuarticLog,
            c_split: 1.0,
            theta_min: 1e-6,
        }
    }
}

fn invalid(msg: alloc::string::String) -> Error {
    Error::InvalidParameter(msg)
}

impl ModelParams {
    /// Checks positivity of `gamma` (A1), of the viscosity (A2), positive
    /// definiteness of the diffusion matrix (A3) and the split/safeguard
    /// settings.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.gamma,
            self.epsilon,
            self.delta,
            self.l11,
            self.l12,
            self.l22,
            self.c_split,
            self.theta_min,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(invalid("all model parameters must be finite".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(invalid(format!(
                "(A1) interface parameter gamma must be positive, got {}",
                self.gamma
            )));
        }
        match self.viscosity {
            Viscosity::PhaseQuadratic { base, slope } => {
                if !(base > 0.0) || !(slope >= 0.0) || !slope.is_finite() {
                    return Err(invalid(format!(
                        "(A2) viscosity base + slope (phi+1)^2 needs base > 0 and slope >= 0, got {base}, {slope}"
                    )));
                }
            }
            Viscosity::Constant(eta) => {
                if !(eta > 0.0) || !eta.is_finite() {
                    return Err(invalid(format!(
                        "(A2) viscosity must be positive, got {eta}"
                    )));
                }
            }
        }
        if !(self.l11 > 0.0) || !(self.l22 > 0.0) || !(self.l11 * self.l22 > self.l12 * self.l12) {
            return Err(invalid(format!(
                "(A3) diffusion matrix [[L11, -L12], [-L12, L22]] must be positive definite \
                 (L11 > 0, L22 > 0, L11*L22 > L12^2), got L11={}, L12={}, L22={}",
                self.l11, self.l12, self.l22
            )));
        }
        if self.epsilon < 0.0 || self.delta < 0.0 {
            return Err(invalid(format!(
                "stabilisation weights must be non-negative, got epsilon={}, delta={}",
                self.epsilon, self.delta
            )));
        }
        if !(self.c_split >= 1.0) {
            return Err(invalid(format!(
                "(A4) split shift c_split must be >= 1, got {}",
                self.c_split
            )));
        }
        if !(self.theta_min > 0.0) {
            return Err(invalid(format!(
                "theta_min must be positive, got {}",
                self.theta_min
            )));
        }
        Ok(())
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    /// `eta(phi, theta)`.
    pub fn viscosity(&self, phi: f64, theta: f64) -> f64 {
        eta(&self.viscosity, phi, theta)
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTemperature(theta))
    }
}

/// Double well `W(phi) = phi^2 (1 - phi)^2`.
#[inline]
pub(crate) fn well<T: Real>(phi: T) -> T {
    let q = phi * (T::cst(1.0) - phi);
    q * q
}

#[inline]
fn well_prime<T: Real>(phi: T) -> T {
    // W' = 2 phi (1 - phi)(1 - 2 phi)
    phi * (T::cst(1.0) - phi) * (T::cst(1.0) - phi * 2.0) * 2.0
}

#[inline]
pub(crate) fn psi_generic<T: Real>(phi: T, theta: T) -> T {
    theta.ln() + (theta * 2.0 - 1.0) * well(phi)
}

#[inline]
pub(crate) fn dphi_psi_split_generic<T: Real>(phi_new: T, phi_old: T, theta_new: T, c: f64) -> T {
    let a = theta_new * 2.0 - 1.0;
    if a.val() > 0.0 {
        // a W_c'(phi_new) - a W_e'(phi_old)
        a * (well_prime(phi_new) + phi_new * c - phi_old * c)
    } else {
        // -a W_e'(phi_new) + a W_c'(phi_old)
        a * (well_prime(phi_old) + phi_old * c - phi_new * c)
    }
}

#[inline]
pub(crate) fn internal_energy_generic<T: Real>(phi: T, theta: T) -> T {
    theta.recip() + well(phi) * 2.0
}

#[inline]
pub(crate) fn entropy_generic<T: Real>(phi: T, theta: T, grad_sq: T, gamma: f64) -> T {
    T::cst(1.0) - theta.ln() + well(phi) - grad_sq * (0.5 * gamma)
}

#[inline]
pub(crate) fn eta_generic<T: Real>(law: &Viscosity, phi: T, _theta: T) -> T {
    match *law {
        Viscosity::PhaseQuadratic { base, slope } => {
            let p = phi + 1.0;
            p * p * slope + base
        }
        Viscosity::Constant(v) => T::cst(v),
    }
}

fn eta(law: &Viscosity, phi: f64, theta: f64) -> f64 {
    eta_generic(law, phi, theta)
}

/// Bulk potential `ln(theta) + (2 theta - 1) phi^2 (1 - phi)^2`.
pub fn psi(phi: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(psi_generic(phi, theta))
}

/// Convex part `Psi_vex(phi, theta)` of the split.
pub fn psi_convex(phi: f64, theta: f64, c_split: f64) -> Result<f64> {
    check_theta(theta)?;
    let a = 2.0 * theta - 1.0;
    let w = well(phi);
    let e = 0.5 * c_split * phi * phi;
    Ok(crate::math::ln(theta) + if a > 0.0 { a * (w + e) } else { -a * e })
}

/// Concave part `Psi_cav(phi, theta)` of the split.
pub fn psi_concave(phi: f64, theta: f64, c_split: f64) -> Result<f64> {
    check_theta(theta)?;
    let a = 2.0 * theta - 1.0;
    let w = well(phi);
    let e = 0.5 * c_split * phi * phi;
    Ok(if a > 0.0 { -a * e } else { a * (w + e) })
}

/// Split phase derivative `d_phi Psi_vex(phi_new, theta) + d_phi Psi_cav(phi_old, theta)`.
pub fn dphi_psi_split(phi_new: f64, phi_old: f64, theta_new: f64, c_split: f64) -> Result<f64> {
    check_theta(theta_new)?;
    Ok(dphi_psi_split_generic(phi_new, phi_old, theta_new, c_split))
}

/// Unsplit `d_phi Psi(phi, theta) = (2 theta - 1) W'(phi)`.
pub fn dphi_psi(phi: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok((2.0 * theta - 1.0) * well_prime(phi))
}

/// `d_theta_theta Psi = -1 / theta^2`.
pub fn dtheta2_psi(_phi: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(-1.0 / (theta * theta))
}

/// Internal energy `e = 1/theta + 2 phi^2 (1 - phi)^2`.
pub fn internal_energy(phi: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(internal_energy_generic(phi, theta))
}

/// Entropy density `1 - ln(theta) + phi^2 (1 - phi)^2 - gamma/2 |grad phi|^2`.
pub fn entropy_pointwise(phi: f64, theta: f64, grad_phi: [f64; 2], gamma: f64) -> Result<f64> {
    check_theta(theta)?;
    let g2 = grad_phi[0] * grad_phi[0] + grad_phi[1] * grad_phi[1];
    Ok(entropy_generic(phi, theta, g2, gamma))
}

/// Korteweg stress `(gamma / theta) grad phi (x) grad phi`.
pub fn korteweg_stress(grad_phi: [f64; 2], theta: f64, gamma: f64) -> Result<[[f64; 2]; 2]> {
    check_theta(theta)?;
    let k = gamma / theta;
    let [gx, gy] = grad_phi;
    let off = k * gx * gy;
    Ok([[k * gx * gx, off], [off, k * gy * gy]])
}

/// Viscosity for the given law.
pub fn viscosity(law: &Viscosity, phi: f64, theta: f64) -> f64 {
    eta(law, phi, theta)
}
