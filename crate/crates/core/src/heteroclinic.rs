//! The one-dimensional transition profile `H` connecting the two wells.
//!
//! `H` solves `H' = sqrt(2 W(H))` with `H(0) = 0`, increasing from -1 to +1.
//! Both halves are integrated outward from 0 with RK4 on a uniform grid; once
//! `H` is within [`WELL_SWITCH_MARGIN`] of a well the remaining grid points
//! follow the linearized well dynamics `H' = sqrt(W''(+-1)) (1 - |H|)`, whose
//! solution is an exact exponential. At that distance the linearization error
//! is quadratic in the remaining gap and therefore below profile accuracy.
//!
//! `H'` is stored as `sqrt(2 W(H))` at every grid point, so the equipartition
//! identity `H'^2 / 2 = W(H)` holds at the samples by construction.

use crate::error::{Error, Result};
use crate::potential::{validate_potential, Potential};

pub const DEFAULT_HALF_WIDTH: f64 = 12.0;
pub const DEFAULT_STEP: f64 = 0.005;

/// Remaining gap to the well at which integration switches to the linearized
/// exponential tail.
const WELL_SWITCH_MARGIN: f64 = 1e-6;

/// Internal RK4 substeps per recorded grid step.
const SUBSTEPS: usize = 4;

#[derive(Debug, Clone)]
pub struct HeteroclinicProfile {
    half_width: f64,
    step: f64,
    s: Vec<f64>,
    h: Vec<f64>,
    hp: Vec<f64>,
    tail_rate: f64,
}

pub fn solve_heteroclinic(
    p: &Potential,
    half_width: f64,
    step: f64,
) -> Result<HeteroclinicProfile> {
    if !(half_width >= 5.0 && half_width.is_finite()) {
        return Err(Error::Validation(format!(
            "half_width must be at least 5, got {half_width}"
        )));
    }
    if !(step > 0.0 && step <= 0.01) {
        return Err(Error::Validation(format!(
            "step must lie in (0, 0.01], got {step}"
        )));
    }
    let report = validate_potential(p, 1024, 1e-12)?;
    if !report.pass {
        return Err(Error::Validation(format!(
            "potential '{}' fails the double-well hypotheses; profile undefined",
            p.name()
        )));
    }

    let n_side = (half_width / step).ceil() as usize;
    let center = n_side;
    let total = 2 * n_side + 1;
    let s: Vec<f64> = (0..total).map(|i| (i as f64 - center as f64) * step).collect();

    // Speed field, clamped to the physical branch |H| < 1.
    let f = |h: f64| -> f64 {
        if h.abs() >= 1.0 {
            0.0
        } else {
            (2.0 * p.w(h)).max(0.0).sqrt()
        }
    };

    let mut h = vec![0.0_f64; total];
    march_side(&mut h, center, step, 1.0, &f, p)?;
    march_side(&mut h, center, step, -1.0, &f, p)?;

    // Well approach check: an interior zero of W would stall the march.
    let end_gap_plus = 1.0 - h[total - 1];
    let end_gap_minus = 1.0 + h[0];
    if end_gap_plus > p.alpha || end_gap_minus > p.alpha {
        return Err(Error::Solver(format!(
            "profile failed to reach the wells (gaps {end_gap_plus:.3e}, {end_gap_minus:.3e}); \
             W may vanish between the wells or half_width is too small"
        )));
    }

    let hp: Vec<f64> = h.iter().map(|&v| (2.0 * p.w(v)).max(0.0).sqrt()).collect();

    // Fit the decay rate of 1 - H on the positive side over the well
    // neighborhood. ln(1 - H) is asymptotically affine in s.
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut m = 0.0;
    // Fit only over the outer quarter of the grid with the gap well clear of
    // both the roundoff floor and the nonlinear core: closer in, the
    // correction to pure exponential decay is O(gap) and biases the slope.
    let fit_start = 0.75 * half_width;
    for i in center..total {
        let gap = 1.0 - h[i];
        if s[i] < fit_start || gap < 1e-12 || gap > 0.05 {
            continue;
        }
        let x = s[i];
        let y = gap.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        m += 1.0;
    }
    if m < 8.0 {
        return Err(Error::Solver(
            "too few tail samples to fit a decay rate; increase half_width".into(),
        ));
    }
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let tail_rate = -slope;
    if !(tail_rate > 0.0 && tail_rate.is_finite()) {
        return Err(Error::Solver(format!(
            "fitted tail rate {tail_rate} is not a positive number"
        )));
    }

    Ok(HeteroclinicProfile {
        half_width,
        step,
        s,
        h,
        hp,
        tail_rate,
    })
}

/// RK4 march from the center toward one well, switching to the exact
/// linearized exponential once the remaining gap drops below the margin.
fn march_side(
    h: &mut [f64],
    center: usize,
    step: f64,
    direction: f64,
    f: &dyn Fn(f64) -> f64,
    p: &Potential,
) -> Result<()> {
    let total = h.len();
    let steps_on_side = if direction > 0.0 {
        total - 1 - center
    } else {
        center
    };
    let dt = direction * step / SUBSTEPS as f64;
    let well = direction; // +1 or -1
    let lin_rate = p.ddw(well).max(0.0).sqrt();
    if lin_rate <= 0.0 {
        return Err(Error::Solver(
            "W''(+-1) must be positive to define the well dynamics".into(),
        ));
    }

    let mut value = h[center];
    let mut switched: Option<f64> = None; // gap at the switch point
    let mut since_switch = 0usize;

    for k in 1..=steps_on_side {
        let idx = if direction > 0.0 { center + k } else { center - k };
        if let Some(gap0) = switched {
            since_switch += 1;
            let gap = gap0 * (-lin_rate * step * since_switch as f64).exp();
            h[idx] = well - direction * gap;
            continue;
        }
        for _ in 0..SUBSTEPS {
            let k1 = f(value);
            let k2 = f(value + 0.5 * dt * k1);
            let k3 = f(value + 0.5 * dt * k2);
            let k4 = f(value + dt * k3);
            value += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        h[idx] = value;
        let gap = (well - value) * direction;
        if gap <= WELL_SWITCH_MARGIN {
            switched = Some(gap);
            since_switch = 0;
        }
    }
    Ok(())
}

impl HeteroclinicProfile {
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Fitted exponential decay rate of `1 - |H|` near the wells.
    pub fn tail_rate(&self) -> f64 {
        self.tail_rate
    }

    pub fn grid(&self) -> &[f64] {
        &self.s
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.hp
    }

    /// `H(s)`: cubic Hermite interpolation inside the grid, exponential well
    /// approach beyond it, matched continuously at the grid ends.
    pub fn eval(&self, s: f64) -> f64 {
        let last = self.s.len() - 1;
        if s >= self.s[last] {
            let gap = 1.0 - self.h[last];
            return 1.0 - gap * (-self.tail_rate * (s - self.s[last])).exp();
        }
        if s <= self.s[0] {
            let gap = 1.0 + self.h[0];
            return -1.0 + gap * (self.tail_rate * (s - self.s[0])).exp();
        }
        let (i, t) = self.locate(s);
        let (h00, h10, h01, h11) = hermite_basis(t);
        self.h[i] * h00
            + self.step * self.hp[i] * h10
            + self.h[i + 1] * h01
            + self.step * self.hp[i + 1] * h11
    }

    /// `H'(s)` under the same interpolation scheme as [`eval`](Self::eval).
    pub fn eval_derivative(&self, s: f64) -> f64 {
        let last = self.s.len() - 1;
        if s >= self.s[last] {
            let gap = 1.0 - self.h[last];
            return self.tail_rate * gap * (-self.tail_rate * (s - self.s[last])).exp();
        }
        if s <= self.s[0] {
            let gap = 1.0 + self.h[0];
            return self.tail_rate * gap * (self.tail_rate * (s - self.s[0])).exp();
        }
        let (i, t) = self.locate(s);
        let (d00, d10, d01, d11) = hermite_basis_derivative(t);
        (self.h[i] * d00 + self.h[i + 1] * d01) / self.step
            + self.hp[i] * d10
            + self.hp[i + 1] * d11
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let x = (s - self.s[0]) / self.step;
        let mut i = x.floor() as usize;
        if i >= self.s.len() - 1 {
            i = self.s.len() - 2;
        }
        (i, x - i as f64)
    }

    /// `integral of H'^2`: composite trapezoid over the grid plus the
    /// analytic tail mass `H'(+-S)^2 / (2 rate)` on each side. For smooth
    /// exponentially decaying integrands the trapezoid rule on a uniform grid
    /// is accurate far beyond its generic order.
    pub fn sigma_from_profile(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.hp.len() - 1 {
            acc += 0.5 * (self.hp[i] * self.hp[i] + self.hp[i + 1] * self.hp[i + 1]) * self.step;
        }
        let last = self.hp.len() - 1;
        acc += self.hp[last] * self.hp[last] / (2.0 * self.tail_rate);
        acc += self.hp[0] * self.hp[0] / (2.0 * self.tail_rate);
        acc
    }
}

/// Cubic Hermite basis on [0, 1].
fn hermite_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

fn hermite_basis_derivative(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    (
        6.0 * t2 - 6.0 * t,
        3.0 * t2 - 4.0 * t + 1.0,
        -6.0 * t2 + 6.0 * t,
        3.0 * t2 - 2.0 * t,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::interface_constants;

    fn quartic_profile() -> HeteroclinicProfile {
        solve_heteroclinic(&Potential::quartic(), DEFAULT_HALF_WIDTH, DEFAULT_STEP).unwrap()
    }

    /// For the quartic the profile is tanh(s / sqrt 2) in closed form.
    #[test]
    fn matches_tanh_on_core_window() {
        let profile = quartic_profile();
        let mut worst = 0.0_f64;
        let mut i = -1000;
        while i <= 1000 {
            let s = i as f64 * 0.01;
            let err = (profile.eval(s) - (s / f64::sqrt(2.0)).tanh()).abs();
            worst = worst.max(err);
            i += 1;
        }
        assert!(worst <= 1e-8, "sup error {worst:.3e}");
    }

    #[test]
    fn equipartition_at_every_sample() {
        let p = Potential::quartic();
        let profile = quartic_profile();
        for (&h, &hp) in profile.values().iter().zip(profile.derivatives()) {
            let gap = (0.5 * hp * hp - p.w(h)).abs();
            assert!(gap <= 1e-10, "equipartition violated by {gap:.3e} at H = {h}");
        }
    }

    #[test]
    fn profile_is_odd() {
        let profile = quartic_profile();
        let n = profile.values().len();
        for i in 0..n {
            let sum = profile.values()[i] + profile.values()[n - 1 - i];
            assert!(sum.abs() <= 1e-9);
        }
    }

    #[test]
    fn strictly_increasing_and_inside_wells() {
        let profile = quartic_profile();
        let h = profile.values();
        for i in 0..h.len() {
            assert!(h[i].abs() < 1.0);
            if i > 0 {
                assert!(h[i] > h[i - 1], "not increasing at index {i}");
            }
        }
    }

    #[test]
    fn tail_rate_close_to_linearized() {
        let profile = quartic_profile();
        // sqrt(W''(1)) = sqrt 2 for the quartic.
        assert!((profile.tail_rate() - f64::sqrt(2.0)).abs() < 1e-3);
    }

    #[test]
    fn sigma_from_profile_matches_quadrature() {
        let profile = quartic_profile();
        let c = interface_constants(&Potential::quartic(), 1e-12).unwrap();
        assert!(
            (profile.sigma_from_profile() - c.sigma).abs() <= 1e-6,
            "trapezoid {} vs quadrature {}",
            profile.sigma_from_profile(),
            c.sigma
        );
    }

    #[test]
    fn evaluation_beyond_grid_is_continuous() {
        let profile = quartic_profile();
        let s_end = profile.half_width();
        let inner = profile.eval(s_end - 1e-9);
        let outer = profile.eval(s_end + 1e-9);
        assert!((inner - outer).abs() < 1e-8);
        // At s = 20 the gap is ~1e-12: representable, strictly inside (-1,1).
        assert!(profile.eval(20.0) < 1.0);
        assert!(profile.eval(20.0) > 1.0 - 1e-11);
        assert!(profile.eval(-20.0) > -1.0);
        // Far out the gap underflows the distance to the next float below 1.
        assert!(profile.eval(50.0) <= 1.0);
        assert!((profile.eval(50.0) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let profile = quartic_profile();
        for &s in &[-3.7, -0.21, 0.0, 0.43, 1.9, 11.0, 14.0] {
            let fd = (profile.eval(s + 1e-6) - profile.eval(s - 1e-6)) / 2e-6;
            assert!(
                (profile.eval_derivative(s) - fd).abs() < 1e-7,
                "derivative mismatch at s = {s}"
            );
        }
    }

    #[test]
    fn rejects_bad_grid_parameters() {
        let p = Potential::quartic();
        assert!(solve_heteroclinic(&p, 3.0, 0.005).is_err());
        assert!(solve_heteroclinic(&p, 12.0, 0.05).is_err());
        assert!(solve_heteroclinic(&p, 12.0, 0.0).is_err());
    }

    #[test]
    fn rejects_potential_with_interior_zero() {
        // W = t^2 (1 - t^2)^2 vanishes at 0, so no transition profile exists.
        let coeffs = vec![0.0, 0.0, 1.0, 0.0, -2.0, 0.0, 1.0];
        let p = Potential::polynomial("pitchfork", coeffs, 0.3, 0.1).unwrap();
        assert!(matches!(
            solve_heteroclinic(&p, 12.0, 0.005),
            Err(Error::Validation(_))
        ));
    }
}
