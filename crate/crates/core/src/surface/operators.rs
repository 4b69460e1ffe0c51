//! Lumped mass and cotangent stiffness on a surface mesh, plus per-triangle
//! and recovered per-vertex gradients of piecewise linear fields.

use super::SurfaceMesh;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use nalgebra::Vector3;

/// Triangles with an angle below this are rejected: their cotangent weights
/// overflow any useful scale.
const MIN_ANGLE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    /// Cotangent stiffness on logical vertices. Row sums vanish, so constants
    /// are in its kernel exactly.
    pub stiffness: CsrMatrix,
    /// Lumped mass: a third of the incident triangle areas per vertex.
    pub mass: Vec<f64>,
}

impl DiscreteOperators {
    pub fn vertex_count(&self) -> usize {
        self.mass.len()
    }

    pub fn total_area(&self) -> f64 {
        self.mass.iter().sum()
    }
}

pub fn assemble_operators(mesh: &SurfaceMesh) -> Result<DiscreteOperators> {
    let n = mesh.vertex_count();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.triangle_count() * 12);
    let mut mass = vec![0.0_f64; n];

    for t in 0..mesh.triangle_count() {
        let p = mesh.corner_positions(t);
        let l = mesh.corner_logical(t);

        let area = 0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
        check_angles(t, &p)?;

        for k in 0..3 {
            mass[l[k]] += area / 3.0;
            // Weight for the edge opposite corner k.
            let i = (k + 1) % 3;
            let j = (k + 2) % 3;
            let e1 = p[i] - p[k];
            let e2 = p[j] - p[k];
            let cross = e1.cross(&e2).norm();
            let cot = e1.dot(&e2) / cross;
            let w = 0.5 * cot;
            triplets.push((l[i], l[j], -w));
            triplets.push((l[j], l[i], -w));
            triplets.push((l[i], l[i], w));
            triplets.push((l[j], l[j], w));
        }
    }

    Ok(DiscreteOperators {
        stiffness: CsrMatrix::from_triplets(n, &triplets),
        mass,
    })
}

fn check_angles(t: usize, p: &[Vector3<f64>; 3]) -> Result<()> {
    for k in 0..3 {
        let a = p[(k + 1) % 3] - p[k];
        let b = p[(k + 2) % 3] - p[k];
        let denom = a.norm() * b.norm();
        if denom == 0.0 {
            return Err(Error::Mesh(format!("triangle {t} has a zero-length edge")));
        }
        let cosv = (a.dot(&b) / denom).clamp(-1.0, 1.0);
        let angle = cosv.acos();
        if angle < MIN_ANGLE {
            return Err(Error::Mesh(format!(
                "triangle {t} is near-degenerate: corner angle {angle:.3e} rad"
            )));
        }
    }
    Ok(())
}

/// In-plane gradient of the linear interpolant of `u` on triangle `t`,
/// together with the triangle area.
pub fn triangle_gradient(mesh: &SurfaceMesh, t: usize, u: &[f64]) -> (Vector3<f64>, f64) {
    let p = mesh.corner_positions(t);
    let l = mesh.corner_logical(t);
    let normal = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let area2 = normal.norm();
    let unit = normal / area2;
    // grad phi_k = n x (opposite edge) / (2 area).
    let mut g = Vector3::zeros();
    for k in 0..3 {
        let i = (k + 1) % 3;
        let j = (k + 2) % 3;
        let opp = p[j] - p[i];
        g += u[l[k]] * unit.cross(&opp) / area2;
    }
    (g, 0.5 * area2)
}

/// Area-weighted vertex average of the squared triangle gradients. The
/// weights are the lumped-mass thirds, so
/// `sum_i mass_i * out_i = u^T K u` holds exactly as assembled.
pub fn vertex_gradient_sq(mesh: &SurfaceMesh, ops: &DiscreteOperators, u: &[f64]) -> Vec<f64> {
    let n = mesh.vertex_count();
    let mut acc = vec![0.0_f64; n];
    for t in 0..mesh.triangle_count() {
        let (g, area) = triangle_gradient(mesh, t, u);
        let gsq = g.norm_squared();
        for &l in &mesh.corner_logical(t) {
            acc[l] += area / 3.0 * gsq;
        }
    }
    for i in 0..n {
        acc[i] /= ops.mass[i];
    }
    acc
}

/// Area-weighted vertex average of the triangle gradient vectors.
pub fn vertex_gradients(mesh: &SurfaceMesh, ops: &DiscreteOperators, u: &[f64]) -> Vec<Vector3<f64>> {
    let n = mesh.vertex_count();
    let mut acc = vec![Vector3::zeros(); n];
    for t in 0..mesh.triangle_count() {
        let (g, area) = triangle_gradient(mesh, t, u);
        for &l in &mesh.corner_logical(t) {
            acc[l] += area / 3.0 * g;
        }
    }
    for i in 0..n {
        acc[i] /= ops.mass[i];
    }
    acc
}
