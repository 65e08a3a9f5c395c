//! Small dense linear algebra: Cholesky with leading-minor reporting, jitter
//! retries and triangular solves. Matrices are row-major `Vec<f64>`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

/// Lower-triangular Cholesky factor.
#[derive(Debug, Clone)]
pub struct Cholesky {
    pub n: usize,
    pub l: Vec<f64>,
    /// Diagonal jitter that was needed for the factorization to succeed.
    pub jitter: f64,
}

/// Plain Cholesky. On failure returns the (0-based) index of the first
/// non-positive leading minor.
fn factor(a: &SymMatrix, jitter: f64) -> std::result::Result<Vec<f64>, usize> {
    let n = a.n;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let row_j = j * n;
        let mut d = a.get(j, j) + jitter;
        for k in 0..j {
            d -= l[row_j + k] * l[row_j + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(j);
        }
        let djj = d.sqrt();
        l[row_j + j] = djj;
        for i in (j + 1)..n {
            let row_i = i * n;
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[row_i + k] * l[row_j + k];
            }
            l[row_i + j] = s / djj;
        }
    }
    Ok(l)
}

impl Cholesky {
    /// Factorizes `a`, retrying with diagonal jitter `1e-12 * trace / n`
    /// escalated tenfold up to three times.
    pub fn new(a: &SymMatrix) -> Result<Self> {
        let n = a.n;
        if n == 0 {
            return Ok(Self {
                n,
                l: Vec::new(),
                jitter: 0.0,
            });
        }
        let base = 1e-12 * a.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
        let mut last_index = 0;
        for attempt in 0..=3 {
            let jitter = if attempt == 0 {
                0.0
            } else {
                base * 10f64.powi(attempt - 1)
            };
            match factor(a, jitter) {
                Ok(l) => return Ok(Self { n, l, jitter }),
                Err(idx) => last_index = idx,
            }
        }
        Err(Error::Factorization {
            index: last_index,
            retries: 3,
        })
    }

    /// Factor of a positive semidefinite matrix: columns whose pivot falls
    /// below `tol * max diag` are zeroed instead of failing.
    pub fn semidefinite(a: &SymMatrix, tol: f64) -> Self {
        let n = a.n;
        let scale = (0..n).map(|i| a.get(i, i)).fold(0.0_f64, f64::max);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= tol * scale {
                continue;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Self { n, l, jitter: 0.0 }
    }

    /// `L z`.
    pub fn mul_lower(&self, z: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i + 1];
            out[i] = row.iter().zip(&z[..=i]).map(|(a, b)| a * b).sum();
        }
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `L^T x = y` in place.
    pub fn backward(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }
}
