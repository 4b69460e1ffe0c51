//! Minimal CSR storage for the symmetric operators assembled on meshes.

use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n x n` matrix from (row, col, value) triplets, summing
    /// duplicates. Triplet order does not affect the result.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                row_ptr[r + 1] += 1;
                cols.push(c);
                vals.push(v);
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
    }

    pub fn mul_vec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut row_acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                row_acc += v * x[*c];
            }
            acc += x[i] * row_acc;
        }
        acc
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *c == i {
                    d[i] += v;
                }
            }
        }
        d
    }

    /// Returns `A + diag(d)`. Rows missing an explicit diagonal entry get one.
    #[must_use]
    pub fn add_diag(&self, d: &[f64]) -> CsrMatrix {
        assert_eq!(d.len(), self.n);
        let mut triplets = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                triplets.push((i, *c, *v));
            }
            triplets.push((i, i, d[i]));
        }
        CsrMatrix::from_triplets(self.n, &triplets)
    }

    /// Scales every entry: `A_ij -> s_i A_ij s_j`.
    pub fn scale_symmetric(&self, s: &[f64]) -> CsrMatrix {
        assert_eq!(s.len(), self.n);
        let mut out = self.clone();
        for i in 0..self.n {
            let lo = out.row_ptr[i];
            let hi = out.row_ptr[i + 1];
            for k in lo..hi {
                out.vals[k] *= s[i] * s[out.cols[k]];
            }
        }
        out
    }

    /// Multiplies every entry by a scalar.
    pub fn scaled(&self, factor: f64) -> CsrMatrix {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= factor;
        }
        out
    }

    /// Principal submatrix on the kept indices, in their given order.
    pub fn restrict(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut triplets = Vec::new();
        for (new_r, &old_r) in keep.iter().enumerate() {
            let (cols, vals) = self.row(old_r);
            for (c, v) in cols.iter().zip(vals) {
                let new_c = map[*c];
                if new_c != usize::MAX {
                    triplets.push((new_r, new_c, *v));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), &triplets)
    }

    /// Largest absolute asymmetry `|A_ij - A_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let mirror = self.get(*c, i);
                worst = worst.max((v - mirror).abs());
            }
        }
        worst
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                m[(i, *c)] += v;
            }
        }
        m
    }

    /// Lower Gershgorin bound: `min_i (A_ii - sum_{j != i} |A_ij|)`.
    pub fn gershgorin_lower(&self) -> f64 {
        let mut bound = f64::INFINITY;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut diag = 0.0;
            let mut off = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                if *c == i {
                    diag += v;
                } else {
                    off += v.abs();
                }
            }
            bound = bound.min(diag - off);
        }
        bound
    }

    /// Iterates stored entries as (row, col, value).
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .map(move |(c, v)| (i, *c, *v))
                .collect::<Vec<_>>()
        })
    }
}
