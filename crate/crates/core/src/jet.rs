//! Second-order jets of complex functions on `R^n`: value, gradient and
//! Hessian carried together through products, holomorphic compositions and
//! linear changes of variables.

use nalgebra::DMatrix;
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub n: usize,
    pub value: Complex64,
    pub grad: Vec<Complex64>,
    /// Row-major `n x n`.
    pub hess: Vec<Complex64>,
}

impl Jet2 {
    pub fn constant(n: usize, c: Complex64) -> Self {
        Self {
            n,
            value: c,
            grad: vec![Complex64::default(); n],
            hess: vec![Complex64::default(); n * n],
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::constant(n, Complex64::default())
    }

    /// The coordinate function `v -> v_i` at a point where it equals `value`.
    pub fn coordinate(n: usize, i: usize, value: f64) -> Self {
        let mut j = Self::constant(n, value.into());
        j.grad[i] = 1.0.into();
        j
    }

    #[inline]
    pub fn h(&self, a: usize, b: usize) -> Complex64 {
        self.hess[a * self.n + b]
    }

    pub fn add_assign(&mut self, o: &Jet2) {
        self.value += o.value;
        for (a, b) in self.grad.iter_mut().zip(&o.grad) {
            *a += b;
        }
        for (a, b) in self.hess.iter_mut().zip(&o.hess) {
            *a += b;
        }
    }

    pub fn add_scaled(&mut self, c: Complex64, o: &Jet2) {
        self.value += c * o.value;
        for (a, b) in self.grad.iter_mut().zip(&o.grad) {
            *a += c * b;
        }
        for (a, b) in self.hess.iter_mut().zip(&o.hess) {
            *a += c * b;
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            n: self.n,
            value: c * self.value,
            grad: self.grad.iter().map(|g| c * g).collect(),
            hess: self.hess.iter().map(|h| c * h).collect(),
        }
    }

    pub fn mul(&self, o: &Jet2) -> Self {
        let n = self.n;
        let mut hess = vec![Complex64::default(); n * n];
        for a in 0..n {
            for b in 0..n {
                hess[a * n + b] = self.value * o.h(a, b)
                    + o.value * self.h(a, b)
                    + self.grad[a] * o.grad[b]
                    + o.grad[a] * self.grad[b];
            }
        }
        Self {
            n,
            value: self.value * o.value,
            grad: self
                .grad
                .iter()
                .zip(&o.grad)
                .map(|(g, h)| self.value * h + o.value * g)
                .collect(),
            hess,
        }
    }

    /// `h(self)` for a holomorphic (or real) `h` given as `(h, h', h'')` at
    /// `self.value`.
    pub fn compose(&self, h0: Complex64, h1: Complex64, h2: Complex64) -> Self {
        let n = self.n;
        let mut hess = vec![Complex64::default(); n * n];
        for a in 0..n {
            for b in 0..n {
                hess[a * n + b] = h1 * self.h(a, b) + h2 * self.grad[a] * self.grad[b];
            }
        }
        Self {
            n,
            value: h0,
            grad: self.grad.iter().map(|g| h1 * g).collect(),
            hess,
        }
    }

    pub fn powi(&self, p: u32) -> Self {
        if p == 0 {
            return Self::constant(self.n, 1.0.into());
        }
        let w = self.value;
        let pf = p as f64;
        let h2 = if p >= 2 {
            w.powu(p - 2) * (pf * (pf - 1.0))
        } else {
            Complex64::default()
        };
        self.compose(w.powu(p), w.powu(p - 1) * pf, h2)
    }

    /// Given the jet of `f` at `M v`, returns the jet of `v -> f(M v)` at `v`.
    pub fn pullback(&self, m: &DMatrix<f64>) -> Self {
        let n = m.ncols();
        let rows = m.nrows();
        debug_assert_eq!(rows, self.n);
        let mut grad = vec![Complex64::default(); n];
        for (j, g) in grad.iter_mut().enumerate() {
            for i in 0..rows {
                let mij = m[(i, j)];
                if mij != 0.0 {
                    *g += self.grad[i] * mij;
                }
            }
        }
        // M^T H M
        let mut hm = vec![Complex64::default(); rows * n];
        for i in 0..rows {
            for j in 0..n {
                let mut acc = Complex64::default();
                for l in 0..rows {
                    let mlj = m[(l, j)];
                    if mlj != 0.0 {
                        acc += self.h(i, l) * mlj;
                    }
                }
                hm[i * n + j] = acc;
            }
        }
        let mut hess = vec![Complex64::default(); n * n];
        for a in 0..n {
            for b in 0..n {
                let mut acc = Complex64::default();
                for i in 0..rows {
                    let mia = m[(i, a)];
                    if mia != 0.0 {
                        acc += hm[i * n + b] * mia;
                    }
                }
                hess[a * n + b] = acc;
            }
        }
        Self {
            n,
            value: self.value,
            grad,
            hess,
        }
    }

    /// Flat positive Laplacian `-sum_a ∂_a^2`.
    pub fn flat_laplacian(&self) -> Complex64 {
        -(0..self.n).map(|a| self.h(a, a)).sum::<Complex64>()
    }
}
