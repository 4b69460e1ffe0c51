//! The Allen-Cahn energy on discrete fields, its first and second variations,
//! and the equipartition discrepancy.
//!
//! With `K` the stiffness matrix, `M` the lumped mass, and `W` the double
//! well, the energy of a field `u` at interface width `eps` is
//! `(eps/2) u^T K u + eps^{-1} sum_i M_i W(u_i)`. The gradient and Hessian
//! follow by differentiating that expression, so the three are consistent to
//! machine precision rather than to discretization order.

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::potential::Potential;
use crate::surface::operators::{vertex_gradient_sq, DiscreteOperators};
use crate::surface::SurfaceMesh;
use std::io::{BufRead, Write};

/// Per-vertex scalar state at a fixed interface width.
#[derive(Debug, Clone)]
pub struct Field {
    values: Vec<f64>,
    epsilon: f64,
    mesh_ref: String,
}

/// Fields are physically meaningful in `[-1, 1]`; overshoot beyond this slack
/// is logged but tolerated (Newton iterates pass through such states).
const OVERSHOOT_SLACK: f64 = 1e-6;

impl Field {
    pub fn new(mesh: &SurfaceMesh, epsilon: f64, values: Vec<f64>) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Validation(format!(
                "interface width must be a positive number, got {epsilon}"
            )));
        }
        if values.len() != mesh.vertex_count() {
            return Err(Error::Validation(format!(
                "field has {} values but mesh {} has {} vertices",
                values.len(),
                mesh.ref_id(),
                mesh.vertex_count()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("field contains non-finite value {bad}")));
        }
        let overshoot = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if overshoot > 1.0 + OVERSHOOT_SLACK {
            log::warn!("field overshoots the wells: max |u| = {overshoot:.6}");
        }
        Ok(Field {
            values,
            epsilon,
            mesh_ref: mesh.ref_id(),
        })
    }

    pub fn constant(mesh: &SurfaceMesh, epsilon: f64, value: f64) -> Result<Self> {
        Field::new(mesh, epsilon, vec![value; mesh.vertex_count()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mesh_ref(&self) -> &str {
        &self.mesh_ref
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_mesh(&self, ops: &DiscreteOperators) -> Result<()> {
        if self.values.len() != ops.vertex_count() {
            return Err(Error::Validation(format!(
                "field on {} has {} values but the operators act on {} vertices",
                self.mesh_ref,
                self.values.len(),
                ops.vertex_count()
            )));
        }
        Ok(())
    }

    /// CSV export, one `vertex_id,value` row per vertex.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "vertex_id,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{v:.17e}")?;
        }
        Ok(())
    }

    /// CSV import; rows may arrive in any order but must cover every vertex
    /// exactly once.
    pub fn read_csv<R: BufRead>(mesh: &SurfaceMesh, epsilon: f64, r: R) -> Result<Self> {
        let n = mesh.vertex_count();
        let mut values = vec![f64::NAN; n];
        let mut seen = vec![false; n];
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("vertex_id")) {
                continue;
            }
            let mut parts = line.split(',');
            let id: usize = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Validation(format!("bad vertex id on line {}", lineno + 1)))?;
            let value: f64 = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Validation(format!("bad value on line {}", lineno + 1)))?;
            if id >= n {
                return Err(Error::Validation(format!(
                    "vertex id {id} out of range for mesh {} ({n} vertices)",
                    mesh.ref_id()
                )));
            }
            if seen[id] {
                return Err(Error::Validation(format!("vertex id {id} appears twice")));
            }
            seen[id] = true;
            values[id] = value;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!("vertex id {missing} missing from field file")));
        }
        Field::new(mesh, epsilon, values)
    }
}

/// `(eps/2) u^T K u + eps^{-1} sum_i M_i W(u_i)`.
pub fn energy(u: &Field, ops: &DiscreteOperators, p: &Potential) -> Result<f64> {
    u.check_mesh(ops)?;
    let eps = u.epsilon;
    let dirichlet = 0.5 * eps * ops.stiffness.quadratic_form(&u.values);
    let potential: f64 = u
        .values
        .iter()
        .zip(&ops.mass)
        .map(|(&v, &m)| m * p.w(v))
        .sum();
    Ok(dirichlet + potential / eps)
}

/// First variation `eps K u + eps^{-1} M W'(u)` as a per-vertex covector.
pub fn gradient(u: &Field, ops: &DiscreteOperators, p: &Potential) -> Result<Vec<f64>> {
    u.check_mesh(ops)?;
    let eps = u.epsilon;
    let mut g = ops.stiffness.mul_vec_alloc(&u.values);
    for (gi, (&v, &m)) in g.iter_mut().zip(u.values.iter().zip(&ops.mass)) {
        *gi = eps * *gi + m * p.dw(v) / eps;
    }
    Ok(g)
}

/// Second variation `eps K + eps^{-1} M diag(W''(u))` as a sparse symmetric
/// matrix.
pub fn hessian(u: &Field, ops: &DiscreteOperators, p: &Potential) -> Result<CsrMatrix> {
    u.check_mesh(ops)?;
    let eps = u.epsilon;
    let shifts: Vec<f64> = u
        .values
        .iter()
        .zip(&ops.mass)
        .map(|(&v, &m)| m * p.ddw(v) / eps)
        .collect();
    Ok(ops.stiffness.scaled(eps).add_diag(&shifts))
}

/// Mass-inverse norm of the gradient: `sqrt(sum_i g_i^2 / M_i)`. This is the
/// natural residual for the discrete Euler-Lagrange equation and is mesh
/// refinement stable, unlike the raw Euclidean norm of the covector.
pub fn residual_norm(gradient: &[f64], ops: &DiscreteOperators) -> f64 {
    gradient
        .iter()
        .zip(&ops.mass)
        .map(|(&g, &m)| g * g / m)
        .sum::<f64>()
        .sqrt()
}

/// Pointwise equipartition defect and its integral norm.
#[derive(Debug, Clone)]
pub struct DiscrepancyField {
    pub xi_values: Vec<f64>,
    pub l1_norm: f64,
}

/// Per-vertex `xi = (eps/2)|grad u|^2 - W(u)/eps` with the recovered vertex
/// gradient, integrated with lumped mass. The recovery preserves total
/// Dirichlet energy, so `integral of xi = eps u^T K u / 2 + ... ` is exactly
/// consistent with [`energy`].
pub fn discrepancy_xi(
    u: &Field,
    mesh: &SurfaceMesh,
    ops: &DiscreteOperators,
    p: &Potential,
) -> Result<DiscrepancyField> {
    u.check_mesh(ops)?;
    let eps = u.epsilon;
    let gsq = vertex_gradient_sq(mesh, ops, &u.values);
    let xi_values: Vec<f64> = u
        .values
        .iter()
        .zip(&gsq)
        .map(|(&v, &g)| 0.5 * eps * g - p.w(v) / eps)
        .collect();
    let l1_norm = xi_values
        .iter()
        .zip(&ops.mass)
        .map(|(&x, &m)| m * x.abs())
        .sum();
    Ok(DiscrepancyField { xi_values, l1_norm })
}
