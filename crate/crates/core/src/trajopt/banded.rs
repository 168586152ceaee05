//! Symmetric banded matrices and an unpivoted `LDLᵀ` factorization.
//!
//! Used for quasi-definite KKT systems ordered stage by stage, where no
//! pivoting is needed and the band stays narrow.

use crate::error::{Error, Result};

/// Lower band of a symmetric `n × n` matrix with half-bandwidth `bw`.
#[derive(Debug, Clone)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    a: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedSym { n, bw, a: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entries `(i, j)` and `(j, i)` (once on the diagonal).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        let k = self.idx(i, j);
        self.a[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.a[self.idx(i, j)]
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            for j in j0..i {
                let v = self.a[self.idx(i, j)];
                y[i] += v * x[j];
                y[j] += v * x[i];
            }
            y[i] += self.a[self.idx(i, i)] * x[i];
        }
        y
    }

    pub fn factor(&self) -> Result<BandedLdl> {
        let (n, bw) = (self.n, self.bw);
        let mut l = self.a.clone();
        let mut d = vec![0.0; n];
        let w = bw + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..i {
                // L_ij d_j = a_ij − Σ_k L_ik L_jk d_k
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = l[i * w + (j + bw - i)];
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)] * d[k];
                }
                l[i * w + (j + bw - i)] = s / d[j];
            }
            let mut s = l[i * w + bw];
            for k in j0..i {
                let lik = l[i * w + (k + bw - i)];
                s -= lik * lik * d[k];
            }
            if !(s.abs() > 1e-300) || !s.is_finite() {
                return Err(Error::Numerical(format!("zero pivot {s} at row {i} of banded LDLᵀ")));
            }
            d[i] = s;
            l[i * w + bw] = 1.0;
        }
        Ok(BandedLdl { n, bw, l, d })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLdl {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandedLdl {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let mut s = b[i];
            for j in j0..i {
                s -= self.l[i * w + (j + bw - i)] * b[j];
            }
            b[i] = s;
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let j0 = i.saturating_sub(bw);
            let bi = b[i];
            for j in j0..i {
                b[j] -= self.l[i * w + (j + bw - i)] * bi;
            }
        }
    }

    /// Number of negative pivots (the inertia's negative count).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|v| **v < 0.0).count()
    }
}
