//! P1 finite elements on [`PeriodicMesh`].
//!
//! Every integral in the crate goes through [`FemSpace::integrate`] with the
//! space's single [`QuadratureRule`]. The discrete conservation identities
//! cancel at quadrature-point level, so all weak-form terms must share it.
//! Nonlinear compositions are evaluated pointwise from the P1 values at the
//! quadrature points, never re-interpolated.

use alloc::vec;
use alloc::vec::Vec;

use crate::linsolve::SparseMatrix;
use crate::math;
use crate::mesh::{NestingMap, PeriodicMesh};
use crate::{Error, Result};

/// Barycentric quadrature on the reference triangle, weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    degree: u32,
}

impl QuadratureRule {
    /// Builds a rule from barycentric points and weights.
    pub fn new(points: Vec<[f64; 3]>, weights: Vec<f64>, degree: u32) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::InvalidParameter(
                "quadrature points and weights differ in length".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w > 0.0)) || math::abs(total - 1.0) > 1e-14 {
            return Err(Error::InvalidParameter(
                "quadrature weights must be positive and sum to 1".into(),
            ));
        }
        Ok(Self {
            points,
            weights,
            degree,
        })
    }

    /// The symmetric six-point rule, exact for polynomials of degree 4.
    pub fn degree4() -> Self {
        let s10 = math::sqrt(10.0);
        let r = math::sqrt(38.0 - 44.0 * math::sqrt(0.4));
        let a1 = (8.0 - s10 + r) / 18.0;
        let a2 = (8.0 - s10 - r) / 18.0;
        let q = math::sqrt(213125.0 - 53320.0 * s10);
        let w1 = (620.0 + q) / 3720.0;
        let w2 = (620.0 - q) / 3720.0;
        let mut points = Vec::with_capacity(6);
        let mut weights = Vec::with_capacity(6);
        for (a, w) in [(a1, w1), (a2, w2)] {
            let b = 1.0 - 2.0 * a;
            points.extend_from_slice(&[[b, a, a], [a, b, a], [a, a, b]]);
            weights.extend_from_slice(&[w, w, w]);
        }
        Self {
            points,
            weights,
            degree: 4,
        }
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Nodal P1 coefficients over the periodic DOFs of an `n x n` mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    n: usize,
    dofs: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh: &PeriodicMesh, dofs: Vec<f64>) -> Result<Self> {
        if dofs.len() != mesh.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_dofs(),
                found: dofs.len(),
            });
        }
        if let Some(index) = dofs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { n: mesh.n(), dofs })
    }

    pub fn constant(mesh: &PeriodicMesh, value: f64) -> Self {
        Self {
            n: mesh.n(),
            dofs: vec![value; mesh.num_dofs()],
        }
    }

    pub fn zeros(mesh: &PeriodicMesh) -> Self {
        Self::constant(mesh, 0.0)
    }

    /// Subdivision count of the mesh the field lives on.
    pub fn mesh_n(&self) -> usize {
        self.n
    }

    pub fn dofs(&self) -> &[f64] {
        &self.dofs
    }

    pub fn dofs_mut(&mut self) -> &mut [f64] {
        &mut self.dofs
    }

    pub fn into_dofs(self) -> Vec<f64> {
        self.dofs
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.dofs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.dofs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise `self - other`.
    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        if self.n != other.n {
            return Err(Error::MeshMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let dofs = self
            .dofs
            .iter()
            .zip(&other.dofs)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ScalarField { n: self.n, dofs })
    }

    /// Exact representation on the refined mesh.
    pub fn prolong(&self, map: &NestingMap) -> Result<ScalarField> {
        if self.n != map.coarse_n() {
            return Err(Error::MeshMismatch {
                expected: map.coarse_n(),
                found: self.n,
            });
        }
        Ok(ScalarField {
            n: map.fine_n(),
            dofs: map.prolong(&self.dofs)?,
        })
    }
}

/// Two P1 components on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    x: ScalarField,
    y: ScalarField,
}

impl VectorField {
    pub fn new(x: ScalarField, y: ScalarField) -> Result<Self> {
        if x.n != y.n {
            return Err(Error::MeshMismatch {
                expected: x.n,
                found: y.n,
            });
        }
        Ok(Self { x, y })
    }

    pub fn zeros(mesh: &PeriodicMesh) -> Self {
        Self {
            x: ScalarField::zeros(mesh),
            y: ScalarField::zeros(mesh),
        }
    }

    pub fn mesh_n(&self) -> usize {
        self.x.n
    }

    pub fn component(&self, c: usize) -> &ScalarField {
        match c {
            0 => &self.x,
            1 => &self.y,
            _ => panic!("2D vector field has no component {c}"),
        }
    }

    pub fn component_mut(&mut self, c: usize) -> &mut ScalarField {
        match c {
            0 => &mut self.x,
            1 => &mut self.y,
            _ => panic!("2D vector field has no component {c}"),
        }
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        VectorField::new(self.x.sub(&other.x)?, self.y.sub(&other.y)?)
    }

    pub fn prolong(&self, map: &NestingMap) -> Result<VectorField> {
        VectorField::new(self.x.prolong(map)?, self.y.prolong(map)?)
    }

    /// Midpoint `(self + other) / 2`.
    pub fn midpoint(&self, other: &VectorField) -> Result<VectorField> {
        let avg = |a: &ScalarField, b: &ScalarField| -> Result<ScalarField> {
            if a.n != b.n {
                return Err(Error::MeshMismatch {
                    expected: a.n,
                    found: b.n,
                });
            }
            let dofs = a
                .dofs
                .iter()
                .zip(&b.dofs)
                .map(|(p, q)| 0.5 * (p + q))
                .collect();
            Ok(ScalarField { n: a.n, dofs })
        };
        VectorField::new(avg(&self.x, &other.x)?, avg(&self.y, &other.y)?)
    }
}

/// Per-cell P1 geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub dofs: [usize; 3],
    pub area: f64,
    /// Gradients of the three barycentric basis functions.
    pub grads: [[f64; 2]; 3],
    /// Unwrapped corner coordinates.
    pub coords: [[f64; 2]; 3],
}

impl Element {
    fn new(dofs: [usize; 3], coords: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = coords;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let inv = 1.0 / det;
        let grads = [
            [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
            [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
            [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
        ];
        Self {
            dofs,
            area: 0.5 * det,
            grads,
            coords,
        }
    }

    /// Cellwise-constant gradient of a P1 field given its three local values.
    #[inline]
    pub fn gradient(&self, local: [f64; 3]) -> [f64; 2] {
        let g = &self.grads;
        [
            local[0] * g[0][0] + local[1] * g[1][0] + local[2] * g[2][0],
            local[0] * g[0][1] + local[1] * g[1][1] + local[2] * g[2][1],
        ]
    }

    #[inline]
    pub fn gather(&self, dofs: &[f64]) -> [f64; 3] {
        self.dofs.map(|d| dofs[d])
    }
}

/// A quadrature point handed to integrands.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint<'a> {
    pub cell: usize,
    pub element: &'a Element,
    pub bary: [f64; 3],
    /// Physical coordinates, unwrapped.
    pub x: [f64; 2],
}

impl QuadPoint<'_> {
    #[inline]
    pub fn value(&self, f: &ScalarField) -> f64 {
        let v = self.element.gather(&f.dofs);
        self.bary[0] * v[0] + self.bary[1] * v[1] + self.bary[2] * v[2]
    }

    #[inline]
    pub fn grad(&self, f: &ScalarField) -> [f64; 2] {
        self.element.gradient(self.element.gather(&f.dofs))
    }

    #[inline]
    pub fn vector(&self, u: &VectorField) -> [f64; 2] {
        [self.value(&u.x), self.value(&u.y)]
    }

    /// `[[du_x/dx, du_x/dy], [du_y/dx, du_y/dy]]`.
    #[inline]
    pub fn vector_grad(&self, u: &VectorField) -> [[f64; 2]; 2] {
        [self.grad(&u.x), self.grad(&u.y)]
    }
}

/// P1 space on a periodic mesh with its shared quadrature rule.
#[derive(Debug, Clone)]
pub struct FemSpace {
    mesh: PeriodicMesh,
    rule: QuadratureRule,
    elements: Vec<Element>,
}

impl FemSpace {
    pub fn new(mesh: PeriodicMesh) -> Self {
        Self::with_rule(mesh, QuadratureRule::degree4())
    }

    pub fn with_rule(mesh: PeriodicMesh, rule: QuadratureRule) -> Self {
        let elements = (0..mesh.num_cells())
            .map(|c| Element::new(mesh.cells()[c], mesh.cell_coords(c)))
            .collect();
        Self {
            mesh,
            rule,
            elements,
        }
    }

    pub fn mesh(&self) -> &PeriodicMesh {
        &self.mesh
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_dofs()
    }

    /// Mesh-membership check for a field.
    pub fn check(&self, f: &ScalarField) -> Result<()> {
        if f.n != self.mesh.n() || f.dofs.len() != self.num_dofs() {
            return Err(Error::MeshMismatch {
                expected: self.mesh.n(),
                found: f.n,
            });
        }
        Ok(())
    }

    pub fn check_vector(&self, u: &VectorField) -> Result<()> {
        self.check(&u.x)?;
        self.check(&u.y)
    }

    /// Nodal interpolation `dofs[i] = f(vertex_i)`.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        let dofs: Vec<f64> = self.mesh.vertices().iter().map(|&[x, y]| f(x, y)).collect();
        ScalarField::new(&self.mesh, dofs)
    }

    /// `sum_K |K| sum_q w_q f(x_q)`, cells and points in fixed order.
    pub fn integrate(&self, mut f: impl FnMut(&QuadPoint<'_>) -> f64) -> f64 {
        let mut total = 0.0;
        for (cell, element) in self.elements.iter().enumerate() {
            let mut local = 0.0;
            for (bary, &w) in self.rule.points.iter().zip(&self.rule.weights) {
                let q = QuadPoint {
                    cell,
                    element,
                    bary: *bary,
                    x: physical(element, bary),
                };
                local += w * f(&q);
            }
            total += element.area * local;
        }
        total
    }

    /// `b_i = integral of f * psi_i`.
    pub fn load_vector(&self, mut f: impl FnMut(&QuadPoint<'_>) -> f64) -> Vec<f64> {
        let mut b = vec![0.0; self.num_dofs()];
        for (cell, element) in self.elements.iter().enumerate() {
            let mut local = [0.0; 3];
            for (bary, &w) in self.rule.points.iter().zip(&self.rule.weights) {
                let q = QuadPoint {
                    cell,
                    element,
                    bary: *bary,
                    x: physical(element, bary),
                };
                let v = w * f(&q);
                for a in 0..3 {
                    local[a] += v * bary[a];
                }
            }
            for a in 0..3 {
                b[element.dofs[a]] += element.area * local[a];
            }
        }
        b
    }

    /// `integral of psi_i`, the lumped mass.
    pub fn basis_integrals(&self) -> Vec<f64> {
        self.load_vector(|_| 1.0)
    }

    /// Consistent mass matrix `M_ij = <psi_j, psi_i>`.
    pub fn mass_matrix(&self) -> SparseMatrix {
        self.assemble_bilinear(|el, bary, a, b| {
            let _ = el;
            bary[a] * bary[b]
        })
    }

    /// Stiffness matrix `K_ij = <grad psi_j, grad psi_i>`.
    pub fn stiffness_matrix(&self) -> SparseMatrix {
        self.assemble_bilinear(|el, _, a, b| {
            el.grads[a][0] * el.grads[b][0] + el.grads[a][1] * el.grads[b][1]
        })
    }

    fn assemble_bilinear(
        &self,
        kernel: impl Fn(&Element, &[f64; 3], usize, usize) -> f64,
    ) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(9 * self.elements.len());
        for el in &self.elements {
            let mut local = [[0.0; 3]; 3];
            for (bary, &w) in self.rule.points.iter().zip(&self.rule.weights) {
                for (a, row) in local.iter_mut().enumerate() {
                    for (b, entry) in row.iter_mut().enumerate() {
                        *entry += w * kernel(el, bary, a, b);
                    }
                }
            }
            for a in 0..3 {
                for b in 0..3 {
                    triplets.push((el.dofs[a], el.dofs[b], el.area * local[a][b]));
                }
            }
        }
        let n = self.num_dofs();
        SparseMatrix::from_triplets(n, n, &triplets).expect("indices are in range")
    }

    pub fn l2_norm_sq(&self, f: &ScalarField) -> Result<f64> {
        self.check(f)?;
        Ok(self.integrate(|q| q.value(f) * q.value(f)))
    }

    pub fn h1_seminorm_sq(&self, f: &ScalarField) -> Result<f64> {
        self.check(f)?;
        Ok(self.integrate(|q| {
            let g = q.grad(f);
            g[0] * g[0] + g[1] * g[1]
        }))
    }

    /// Full `H^1` norm squared: `L^2` part plus seminorm.
    pub fn h1_norm_sq(&self, f: &ScalarField) -> Result<f64> {
        Ok(self.l2_norm_sq(f)? + self.h1_seminorm_sq(f)?)
    }

    pub fn l2_norm_sq_vector(&self, u: &VectorField) -> Result<f64> {
        Ok(self.l2_norm_sq(&u.x)? + self.l2_norm_sq(&u.y)?)
    }

    pub fn h1_norm_sq_vector(&self, u: &VectorField) -> Result<f64> {
        Ok(self.h1_norm_sq(&u.x)? + self.h1_norm_sq(&u.y)?)
    }

    /// Trilinear convection form `c(u, v, w) = <(u . grad) v, w>`.
    pub fn convection(&self, u: &VectorField, v: &VectorField, w: &VectorField) -> Result<f64> {
        self.check_vector(u)?;
        self.check_vector(v)?;
        self.check_vector(w)?;
        Ok(self.integrate(|q| {
            let uq = q.vector(u);
            let gv = q.vector_grad(v);
            let wq = q.vector(w);
            (0..2)
                .map(|c| (uq[0] * gv[c][0] + uq[1] * gv[c][1]) * wq[c])
                .sum::<f64>()
        }))
    }

    /// Skew-symmetric convection `c(u,v,w)/2 - c(u,w,v)/2`, evaluated
    /// pointwise so that `c_skw(u, v, v)` vanishes at every quadrature point.
    pub fn c_skw(&self, u: &VectorField, v: &VectorField, w: &VectorField) -> Result<f64> {
        self.check_vector(u)?;
        self.check_vector(v)?;
        self.check_vector(w)?;
        Ok(self.integrate(|q| {
            let uq = q.vector(u);
            let (vq, gv) = (q.vector(v), q.vector_grad(v));
            let (wq, gw) = (q.vector(w), q.vector_grad(w));
            let mut s = 0.0;
            for c in 0..2 {
                let dv = uq[0] * gv[c][0] + uq[1] * gv[c][1];
                let dw = uq[0] * gw[c][0] + uq[1] * gw[c][1];
                s += 0.5 * (dv * wq[c] - dw * vq[c]);
            }
            s
        }))
    }
}

#[inline]
fn physical(el: &Element, bary: &[f64; 3]) -> [f64; 2] {
    let c = &el.coords;
    [
        bary[0] * c[0][0] + bary[1] * c[1][0] + bary[2] * c[2][0],
        bary[0] * c[0][1] + bary[1] * c[1][1] + bary[2] * c[2][1],
    ]
}

/// The field components compared by the two-grid error norms.
#[derive(Debug, Clone, Copy)]
pub struct FieldSet<'a> {
    pub phi: &'a ScalarField,
    pub mu: &'a ScalarField,
    pub theta: &'a ScalarField,
    pub u: &'a VectorField,
}

/// Squared error quantities between a solution and its refined-grid twin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorNorms {
    /// `|phi|_H1^2 + |u|_L2^2 + |theta|_L2^2`
    pub e_a: f64,
    /// `|mu|_H1^2 + |u|_H1^2 + |theta|_H1^2`
    pub e_b: f64,
    pub e_mu: f64,
    pub e_u: f64,
    pub e_theta: f64,
}

/// Prolongs `coarse` onto `fine_space` through `map` and measures the
/// squared norms of the differences with fine-mesh quadrature.
pub fn two_grid_error_norms(
    fine_space: &FemSpace,
    fine: FieldSet<'_>,
    coarse: FieldSet<'_>,
    map: &NestingMap,
) -> Result<ErrorNorms> {
    if map.fine_n() != fine_space.mesh().n() {
        return Err(Error::NotNested {
            coarse: map.coarse_n(),
            fine: fine_space.mesh().n(),
        });
    }
    let dphi = fine.phi.sub(&coarse.phi.prolong(map)?)?;
    let dmu = fine.mu.sub(&coarse.mu.prolong(map)?)?;
    let dtheta = fine.theta.sub(&coarse.theta.prolong(map)?)?;
    let du = fine.u.sub(&coarse.u.prolong(map)?)?;
    error_norms_of_differences(fine_space, &dphi, &dmu, &dtheta, &du)
}

/// Same quantities for fields already living on one mesh.
pub fn error_norms(space: &FemSpace, a: FieldSet<'_>, b: FieldSet<'_>) -> Result<ErrorNorms> {
    let dphi = a.phi.sub(b.phi)?;
    let dmu = a.mu.sub(b.mu)?;
    let dtheta = a.theta.sub(b.theta)?;
    let du = a.u.sub(b.u)?;
    error_norms_of_differences(space, &dphi, &dmu, &dtheta, &du)
}

fn error_norms_of_differences(
    space: &FemSpace,
    dphi: &ScalarField,
    dmu: &ScalarField,
    dtheta: &ScalarField,
    du: &VectorField,
) -> Result<ErrorNorms> {
    let e_mu = space.h1_norm_sq(dmu)?;
    let e_u = space.h1_norm_sq_vector(du)?;
    let e_theta = space.h1_norm_sq(dtheta)?;
    let e_a = space.h1_norm_sq(dphi)? + space.l2_norm_sq_vector(du)? + space.l2_norm_sq(dtheta)?;
    Ok(ErrorNorms {
        e_a,
        e_b: e_mu + e_u + e_theta,
        e_mu,
        e_u,
        e_theta,
    })
}
