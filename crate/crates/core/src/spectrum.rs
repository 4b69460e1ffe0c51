//! Morse index and nullity of discrete critical points from the generalized
//! symmetric eigenproblem `H v = lambda M v`, with `H` the second variation.
//!
//! On meshes with boundary the form is restricted to interior vertices, i.e.
//! to the span of test functions vanishing at the boundary; on closed meshes
//! every vertex participates.

use crate::energy::{hessian, Field};
use crate::error::{Error, Result};
use crate::linalg::{smallest_eigenpairs, CsrMatrix, EigenMethod};
use crate::potential::Potential;
use crate::surface::operators::DiscreteOperators;
use crate::surface::SurfaceMesh;
use serde::Serialize;
use std::io::Write;

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    pub index: usize,
    pub nullity: usize,
    pub lowest_eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenfields: Vec<Vec<f64>>,
    pub tol: f64,
    /// True when all requested eigenvalues lie strictly below the zero band,
    /// i.e. the reported index may be a truncation of a larger one.
    pub truncated: bool,
    #[serde(skip)]
    pub method: EigenMethod,
}

impl SpectralSummary {
    /// Eigenfields as CSV: header then one row `vertex_id,v0,v1,...` per
    /// vertex.
    pub fn write_eigenfields_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "vertex_id")?;
        for k in 0..self.eigenfields.len() {
            write!(w, ",mode{k}")?;
        }
        writeln!(w)?;
        let n = self.eigenfields.first().map_or(0, Vec::len);
        for i in 0..n {
            write!(w, "{i}")?;
            for f in &self.eigenfields {
                write!(w, ",{:.17e}", f[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Morse index of a critical point: the number of generalized eigenvalues
/// below `-tol`, with nullity counted in `[-tol, tol]`. Pass `tol = None` for
/// the default threshold `1e-8` times the scale of the Hessian diagonal.
pub fn morse_index(
    u: &Field,
    mesh: &SurfaceMesh,
    ops: &DiscreteOperators,
    p: &Potential,
    q: usize,
    tol: Option<f64>,
    seed: u64,
) -> Result<SpectralSummary> {
    if q < 3 {
        return Err(Error::Validation(format!(
            "at least 3 eigenvalues are needed for a useful summary, got q = {q}"
        )));
    }
    let h = hessian(u, ops, p)?;
    let interior = mesh.interior_vertices();
    let closed = mesh.is_closed();

    let (h_eff, m_eff): (_, Vec<f64>) = if closed {
        (h, ops.mass.clone())
    } else {
        // Dirichlet restriction: test functions vanish on the boundary.
        let h_int = h.restrict(&interior);
        let m_int: Vec<f64> = interior.iter().map(|&i| ops.mass[i]).collect();
        (h_int, m_int)
    };

    let mut summary = restricted_morse_index(&h_eff, &m_eff, q, tol, seed)?;

    // Scatter restricted eigenvectors back to the full vertex set so callers
    // can visualize them; boundary entries are zero by construction.
    if !closed {
        summary.eigenfields = summary
            .eigenfields
            .iter()
            .map(|v| {
                let mut full = vec![0.0; mesh.vertex_count()];
                for (k, &i) in interior.iter().enumerate() {
                    full[i] = v[k];
                }
                full
            })
            .collect();
    }
    Ok(summary)
}

/// Index and nullity of the already-restricted pencil `(H, diag(mass))`.
///
/// Callers that probe subdomains (Dirichlet conditions on a vertex subset)
/// restrict the Hessian themselves and hand the principal submatrix here;
/// eigenvalue interlacing then makes the reported index monotone under
/// growing the kept vertex set. Eigenfields are returned in the restricted
/// indexing.
pub fn restricted_morse_index(
    h: &CsrMatrix,
    mass: &[f64],
    q: usize,
    tol: Option<f64>,
    seed: u64,
) -> Result<SpectralSummary> {
    if q < 3 {
        return Err(Error::Validation(format!(
            "at least 3 eigenvalues are needed for a useful summary, got q = {q}"
        )));
    }
    let n = mass.len();
    if n == 0 {
        return Err(Error::Validation("no interior vertices to test on".into()));
    }
    if h.n() != n {
        return Err(Error::Validation(format!(
            "Hessian size {} does not match mass vector length {n}",
            h.n()
        )));
    }
    let q_eff = q.min(n);

    let diag_scale = h
        .diag()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let tol = tol.unwrap_or(1e-8 * diag_scale);

    let pairs = smallest_eigenpairs(h, mass, q_eff, 1e-6, seed)?;
    if let Some((k, r)) = pairs
        .residuals
        .iter()
        .enumerate()
        .find(|(_, r)| !r.is_finite())
    {
        return Err(Error::Eigen(format!(
            "eigenpair {k} has non-finite residual {r}"
        )));
    }

    let index = pairs.values.iter().filter(|&&v| v < -tol).count();
    let nullity = pairs
        .values
        .iter()
        .filter(|&&v| v.abs() <= tol)
        .count();
    let truncated = pairs.values.last().is_some_and(|&v| v < -tol);

    Ok(SpectralSummary {
        index,
        nullity,
        lowest_eigenvalues: pairs.values,
        eigenfields: pairs.vectors,
        tol,
        truncated,
        method: pairs.method,
    })
}
