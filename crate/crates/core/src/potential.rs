//! Double-well potentials and the hypotheses the rest of the workspace relies on.
//!
//! A potential `W` is admissible when
//!
//! * (H1) `W >= 0` and `W(t) = 0` exactly at `t = -1` and `t = +1`,
//! * (H2) `t W'(t) < 0` for `0 < |t| < 1` and `W''(0) != 0`,
//! * (H3) `W''(t) >= kappa > 0` on the well neighborhoods `|t| > 1 - alpha`,
//! * (H4) `W` is even.
//!
//! [`validate_potential`] checks the four hypotheses by sampling;
//! [`interface_constants`] produces the line tension `sigma = integral of
//! sqrt(2 W)` over `[-1, 1]` by adaptive quadrature.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Sampling window for hypothesis checks. Wells sit at +-1; checking a margin
/// beyond them exercises H3 outside the wells.
const SAMPLE_LIMIT: f64 = 1.5;

/// Maximum recursion depth of the adaptive quadrature before giving up.
const MAX_QUAD_DEPTH: u32 = 48;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PotentialForm {
    /// `W(t) = (1 - t^2)^2 / 4`.
    Quartic,
    /// `W(t) = sum_i coeffs[i] t^i`.
    Polynomial { coeffs: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Potential {
    name: String,
    form: PotentialForm,
    /// Well-neighborhood half-width: H3 is required on `|t| > 1 - alpha`.
    pub alpha: f64,
    /// Convexity lower bound on the well neighborhoods.
    pub kappa: f64,
}

impl Potential {
    /// The standard quartic `W(t) = (1 - t^2)^2 / 4`. `W''(t) = 3 t^2 - 1`, so
    /// on `|t| > 0.7` convexity holds with margin: `W'' >= 0.47 > 0.4`.
    pub fn quartic() -> Self {
        Potential {
            name: "quartic".to_string(),
            form: PotentialForm::Quartic,
            alpha: 0.3,
            kappa: 0.4,
        }
    }

    pub fn polynomial(name: &str, coeffs: Vec<f64>, alpha: f64, kappa: f64) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation(
                "polynomial potential needs finite coefficients".into(),
            ));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if kappa <= 0.0 {
            return Err(Error::Validation(format!(
                "kappa must be positive, got {kappa}"
            )));
        }
        Ok(Potential {
            name: name.to_string(),
            form: PotentialForm::Polynomial { coeffs },
            alpha,
            kappa,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `W(t)`.
    pub fn w(&self, t: f64) -> f64 {
        match &self.form {
            PotentialForm::Quartic => {
                let q = 1.0 - t * t;
                0.25 * q * q
            }
            PotentialForm::Polynomial { coeffs } => horner(coeffs, t),
        }
    }

    /// `W'(t)`.
    pub fn dw(&self, t: f64) -> f64 {
        match &self.form {
            PotentialForm::Quartic => t * t * t - t,
            PotentialForm::Polynomial { coeffs } => horner_derived(coeffs, t, 1),
        }
    }

    /// `W''(t)`.
    pub fn ddw(&self, t: f64) -> f64 {
        match &self.form {
            PotentialForm::Quartic => 3.0 * t * t - 1.0,
            PotentialForm::Polynomial { coeffs } => horner_derived(coeffs, t, 2),
        }
    }
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Evaluates the `order`-th derivative of the polynomial.
fn horner_derived(coeffs: &[f64], t: f64, order: u32) -> f64 {
    let mut acc = 0.0;
    for (i, c) in coeffs.iter().enumerate().rev() {
        if (i as u32) < order {
            break;
        }
        let mut factor = 1.0;
        for k in 0..order {
            factor *= (i as u32 - k) as f64;
        }
        acc = acc * t + factor * c;
    }
    acc
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub pass: bool,
    /// Signed margin of the worst sampled point; positive means violated.
    pub worst_violation: f64,
    /// Sample location of the worst margin.
    pub worst_t: f64,
}

impl HypothesisCheck {
    fn from_worst(worst_violation: f64, worst_t: f64, tol: f64) -> Self {
        HypothesisCheck {
            pass: worst_violation <= tol,
            worst_violation,
            worst_t,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub name: String,
    pub grid_resolution: usize,
    pub tol: f64,
    /// All sampled values of W, W', W'' are finite.
    pub finite: bool,
    pub h1: HypothesisCheck,
    pub h2: HypothesisCheck,
    pub h3: HypothesisCheck,
    pub h4: HypothesisCheck,
    pub pass: bool,
}

/// Samples the four double-well hypotheses on a uniform grid over
/// `[-1.5, 1.5]` (the exact points `-1, 0, 1` are always included).
pub fn validate_potential(p: &Potential, grid_resolution: usize, tol: f64) -> Result<ValidationReport> {
    if grid_resolution < 16 {
        return Err(Error::Validation(format!(
            "grid_resolution must be at least 16, got {grid_resolution}"
        )));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Validation(format!("tol must be positive, got {tol}")));
    }

    let n = grid_resolution;
    let mut ts: Vec<f64> = (0..=n)
        .map(|i| -SAMPLE_LIMIT + 2.0 * SAMPLE_LIMIT * (i as f64) / (n as f64))
        .collect();
    ts.extend_from_slice(&[-1.0, 0.0, 1.0]);
    let spacing = 2.0 * SAMPLE_LIMIT / (n as f64);

    let mut finite = true;
    // Worst signed margins; violation when margin > tol.
    let (mut w1, mut t1) = (f64::NEG_INFINITY, 0.0);
    let (mut w2, mut t2) = (f64::NEG_INFINITY, 0.0);
    let (mut w3, mut t3) = (f64::NEG_INFINITY, 0.0);
    let (mut w4, mut t4) = (f64::NEG_INFINITY, 0.0);

    for &t in &ts {
        let w = p.w(t);
        let dw = p.dw(t);
        let ddw = p.ddw(t);
        if !(w.is_finite() && dw.is_finite() && ddw.is_finite()) {
            finite = false;
            continue;
        }

        // H1a: nonnegativity everywhere sampled.
        if -w > w1 {
            w1 = -w;
            t1 = t;
        }
        // H1b: zero exactly at the wells, positive elsewhere. The sample set
        // contains +-1 exactly; samples within half a cell of a well are
        // exempt from both sides (W is quadratically small there).
        let dist_to_well = (t.abs() - 1.0).abs();
        if dist_to_well == 0.0 {
            if w - tol > w1 {
                w1 = w - tol;
                t1 = t;
            }
        } else if dist_to_well >= 0.5 * spacing && tol - w > w1 {
            // Violated when W <= tol away from the wells (extra interior zero).
            w1 = tol - w;
            t1 = t;
        }

        // H2: t W'(t) < 0 strictly between the wells.
        if t.abs() > 0.5 * spacing && t.abs() < 1.0 - 0.5 * spacing {
            let m = t * dw;
            if m > w2 {
                w2 = m;
                t2 = t;
            }
        }

        // H3: convexity on the well neighborhoods.
        if t.abs() > 1.0 - p.alpha {
            let m = p.kappa - ddw;
            if m > w3 {
                w3 = m;
                t3 = t;
            }
        }

        // H4: evenness.
        let m = (w - p.w(-t)).abs() - tol * w.abs().max(1.0);
        if m > w4 {
            w4 = m;
            t4 = t;
        }
    }

    // H2 also requires a nondegenerate origin.
    let ddw0 = p.ddw(0.0);
    if ddw0.is_finite() {
        let m = tol - ddw0.abs();
        if m > w2 {
            w2 = m;
            t2 = 0.0;
        }
    } else {
        finite = false;
    }

    let h1 = HypothesisCheck::from_worst(w1, t1, tol);
    let h2 = HypothesisCheck::from_worst(w2, t2, tol);
    let h3 = HypothesisCheck::from_worst(w3, t3, tol);
    let h4 = HypothesisCheck::from_worst(w4, t4, 0.0);
    let pass = finite && h1.pass && h2.pass && h3.pass && h4.pass;

    Ok(ValidationReport {
        name: p.name().to_string(),
        grid_resolution,
        tol,
        finite,
        h1,
        h2,
        h3,
        h4,
        pass,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct InterfaceConstants {
    /// Line tension `sigma = integral over [-1,1] of sqrt(2 W)`.
    pub sigma: f64,
    /// `h0 = (1/sqrt 2) integral of sqrt W = sigma / 2`, exactly.
    pub h0: f64,
    /// Accumulated error estimate of the adaptive quadrature.
    pub quadrature_error: f64,
}

/// Default grid for the internal validation run inside [`interface_constants`].
const VALIDATE_RESOLUTION: usize = 1024;
const VALIDATE_TOL: f64 = 1e-12;

/// Line tension of an admissible potential by adaptive Simpson quadrature of
/// `sqrt(2 W)` over `[-1, 1]` to absolute tolerance `quad_tol`.
pub fn interface_constants(p: &Potential, quad_tol: f64) -> Result<InterfaceConstants> {
    if !(quad_tol > 0.0 && quad_tol.is_finite()) {
        return Err(Error::Validation(format!(
            "quad_tol must be positive, got {quad_tol}"
        )));
    }
    let report = validate_potential(p, VALIDATE_RESOLUTION, VALIDATE_TOL)?;
    if !report.pass {
        return Err(Error::Validation(format!(
            "potential '{}' fails the double-well hypotheses (h1 {}, h2 {}, h3 {}, h4 {})",
            p.name(),
            report.h1.pass,
            report.h2.pass,
            report.h3.pass,
            report.h4.pass
        )));
    }

    // W can dip a few ulps below zero at the wells; clamp before the root.
    let f = |t: f64| (2.0 * p.w(t)).max(0.0).sqrt();
    let (sigma, err) = adaptive_simpson(&f, -1.0, 1.0, quad_tol)?;
    Ok(InterfaceConstants {
        sigma,
        h0: 0.5 * sigma,
        quadrature_error: err,
    })
}

/// Adaptive Simpson with the classical |S2 - S1| / 15 refinement estimate.
/// Returns the integral and the accumulated error estimate.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }

    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        err_acc: &mut f64,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol || (b - a) < 1e-14 {
            *err_acc += delta.abs() / 15.0;
            return Ok(left + right + delta / 15.0);
        }
        if depth >= MAX_QUAD_DEPTH {
            return Err(Error::Quadrature {
                achieved: delta.abs() / 15.0,
                tol,
            });
        }
        let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, err_acc)?;
        let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, err_acc)?;
        Ok(l + r)
    }

    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    if !(fa.is_finite() && fm.is_finite() && fb.is_finite()) {
        return Err(Error::Validation("integrand not finite".into()));
    }
    let whole = simpson(fa, fm, fb, b - a);
    let mut err_acc = 0.0;
    let value = recurse(f, a, b, fa, fm, fb, whole, tol, 0, &mut err_acc)?;
    Ok((value, err_acc))
}
