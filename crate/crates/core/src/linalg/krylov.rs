//! Krylov solvers for the symmetric systems that show up in Newton steps and
//! shift-inverted eigeniterations. CG requires positive definiteness; MINRES
//! only symmetry, which is what an indefinite Hessian at a saddle needs.

use crate::error::{Error, Result};
use crate::linalg::sparse::CsrMatrix;

/// Abstract symmetric operator, so shifted and scaled variants need no copies.
pub trait LinOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinOp for CsrMatrix {
    fn dim(&self) -> usize {
        self.n()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec(x, y);
    }
}

/// `(A - shift I) x`.
pub struct ShiftedOp<'a, T: LinOp> {
    pub inner: &'a T,
    pub shift: f64,
}

impl<T: LinOp> LinOp for ShiftedOp<'_, T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.inner.apply(x, y);
        for i in 0..x.len() {
            y[i] -= self.shift * x[i];
        }
    }
}

/// `D A D` with diagonal `D`, applied without forming the product.
pub struct DiagScaledOp<'a, T: LinOp> {
    pub inner: &'a T,
    pub scale: &'a [f64],
}

impl<T: LinOp> LinOp for DiagScaledOp<'_, T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = x.len();
        let mut tmp = vec![0.0; n];
        for i in 0..n {
            tmp[i] = self.scale[i] * x[i];
        }
        self.inner.apply(&tmp, y);
        for i in 0..n {
            y[i] *= self.scale[i];
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate gradients for SPD systems. Errors if the operator reveals a
/// nonpositive curvature direction.
pub fn cg(
    op: &dyn LinOp,
    b: &[f64],
    tol_rel: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = op.dim();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rs = dot(&r, &r);
    for k in 0..max_iter {
        op.apply(&p, &mut ap);
        let p_ap = dot(&p, &ap);
        if p_ap <= 0.0 {
            return Err(Error::Solver(format!(
                "cg found nonpositive curvature ({p_ap:.3e}); operator is not positive definite"
            )));
        }
        let alpha = rs / p_ap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        if rs_new.sqrt() <= tol_rel * b_norm {
            return Ok((
                x,
                SolveStats {
                    iterations: k + 1,
                    relative_residual: rs_new.sqrt() / b_norm,
                },
            ));
        }
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!(
        "cg did not converge in {max_iter} iterations (residual {:.3e})",
        rs.sqrt() / b_norm
    )))
}

/// MINRES for symmetric (possibly indefinite) systems.
pub fn minres(
    op: &dyn LinOp,
    b: &[f64],
    tol_rel: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = op.dim();
    let beta1 = norm(b);
    let mut x = vec![0.0; n];
    if beta1 == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }

    // Lanczos vectors r1, r2 and the current iterate direction updates w, w1, w2.
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut y = b.to_vec();
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];

    let mut oldb = 0.0_f64;
    let mut beta = beta1;
    let mut dbar = 0.0_f64;
    let mut epsln = 0.0_f64;
    let mut phibar = beta1;
    let mut cs = -1.0_f64;
    let mut sn = 0.0_f64;

    let mut v = vec![0.0; n];

    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        let mut ynew = vec![0.0; n];
        op.apply(&v, &mut ynew);
        if itn >= 2 {
            let c = beta / oldb;
            for i in 0..n {
                ynew[i] -= c * r1[i];
            }
        }
        let alfa = dot(&v, &ynew);
        let c = alfa / beta;
        for i in 0..n {
            ynew[i] -= c * r2[i];
        }
        r1 = std::mem::take(&mut r2);
        r2 = ynew;
        y = r2.clone();
        oldb = beta;
        beta = norm(&r2);

        // Previous rotation applied to the new tridiagonal column.
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;

        // Next rotation.
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        let w1 = std::mem::take(&mut w2);
        w2 = std::mem::take(&mut w);
        w = vec![0.0; n];
        for i in 0..n {
            w[i] = denom * (v[i] - oldeps * w1[i] - delta * w2[i]);
            x[i] += phi * w[i];
        }

        if phibar <= tol_rel * beta1 {
            return Ok((
                x,
                SolveStats {
                    iterations: itn,
                    relative_residual: phibar / beta1,
                },
            ));
        }
    }
    Err(Error::Solver(format!(
        "minres did not converge in {max_iter} iterations (residual {:.3e}); \
         the system may be singular, consider damping or regularization",
        phibar / beta1
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64, spd: bool) -> (CsrMatrix, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.random::<f64>() - 0.5;
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
        }
        if spd {
            // Diagonal dominance makes it positive definite.
            for i in 0..n {
                dense[(i, i)] += n as f64;
            }
        } else {
            // Push eigenvalues to both signs.
            for i in 0..n {
                dense[(i, i)] += if i % 2 == 0 { 3.0 } else { -3.0 };
            }
        }
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if dense[(i, j)] != 0.0 {
                    triplets.push((i, j, dense[(i, j)]));
                }
            }
        }
        (CsrMatrix::from_triplets(n, &triplets), dense)
    }

    #[test]
    fn cg_solves_spd_system() {
        let (a, dense) = random_symmetric(40, 1, true);
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let (x, stats) = cg(&a, &b, 1e-12, 1000).unwrap();
        let exact = dense
            .clone()
            .lu()
            .solve(&DVector::from_column_slice(&b))
            .unwrap();
        for i in 0..40 {
            assert!((x[i] - exact[i]).abs() < 1e-9);
        }
        assert!(stats.iterations <= 40 + 5);
    }

    #[test]
    fn cg_rejects_indefinite_system() {
        let (a, _) = random_symmetric(30, 2, false);
        let b = vec![1.0; 30];
        assert!(cg(&a, &b, 1e-10, 1000).is_err());
    }

    #[test]
    fn minres_solves_indefinite_system() {
        let (a, dense) = random_symmetric(50, 3, false);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.71).cos()).collect();
        let (x, _) = minres(&a, &b, 1e-12, 5000).unwrap();
        let exact = dense
            .clone()
            .lu()
            .solve(&DVector::from_column_slice(&b))
            .unwrap();
        for i in 0..50 {
            assert!((x[i] - exact[i]).abs() < 1e-8, "component {i}");
        }
    }

    #[test]
    fn shifted_operator_applies_shift() {
        let (a, _) = random_symmetric(10, 4, true);
        let op = ShiftedOp {
            inner: &a,
            shift: 2.5,
        };
        let x = vec![1.0; 10];
        let mut direct = vec![0.0; 10];
        a.mul_vec(&x, &mut direct);
        let mut shifted = vec![0.0; 10];
        op.apply(&x, &mut shifted);
        for i in 0..10 {
            assert!((shifted[i] - (direct[i] - 2.5)).abs() < 1e-14);
        }
    }
}
