//! Fourier decomposition under the torus action and the mode-wise
//! intertwining operator between the Laplacians of two bracket metrics.
//!
//! With `f_Z(x, u) = (2π)^{-k} ∫ f(x, R_σ u) e^{-i Z·σ} dσ` (so `f_Z` already
//! carries the factor `e^{i Z·θ}`), the operator is
//! `(Q f)(x, u) = sum_Z f_Z(A_Z x, u)` where `A_Z` is orthogonal with
//! `A_Z^T j_2(Z) A_Z = j_1(Z)`. Then `Δ_{g1} Q = Q Δ_{g2}`. Angle integrals
//! use the `M = 2N + 1` point trapezoid rule per circle, exact on modes with
//! `|Z_p| <= N`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bracket::{check_isospectral, conjugator, forced_conjugator, Bracket, DEFAULT_ISOSPECTRAL_SAMPLES};
use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::metric::{bump, CutoffProfile};
use crate::oracle::{metric_jet, BracketMetricField, FDScheme, MetricField};

/// All integer frequency vectors in `[-n, n]^k`, lexicographic.
pub fn modes(n: i32, k: usize) -> Vec<Vec<i32>> {
    let side = (2 * n + 1) as usize;
    (0..side.pow(k as u32))
        .map(|mut idx| {
            let mut z = vec![0; k];
            for slot in z.iter_mut().rev() {
                *slot = (idx % side) as i32 - n;
                idx /= side;
            }
            z
        })
        .collect()
}

/// Uniform angle grid `2π j / M`, one vector per node of `[0, 2π)^k`.
pub fn angle_grid(grid: usize, k: usize) -> Vec<Vec<f64>> {
    (0..grid.pow(k as u32))
        .map(|mut idx| {
            let mut t = vec![0.0; k];
            for slot in t.iter_mut().rev() {
                *slot = 2.0 * PI * (idx % grid) as f64 / grid as f64;
                idx /= grid;
            }
            t
        })
        .collect()
}

fn phase(z: &[i32], theta: &[f64]) -> Complex64 {
    let a: f64 = z.iter().zip(theta).map(|(&zp, &t)| zp as f64 * t).sum();
    Complex64::from_polar(1.0, a)
}

/// Fourier coefficients `f_Z` over `|Z_p| <= n` of a function of the angles.
#[derive(Debug, Clone)]
pub struct FourierField {
    pub n: i32,
    pub k: usize,
    pub coefficients: BTreeMap<Vec<i32>, Complex64>,
}

impl FourierField {
    pub fn coefficient(&self, z: &[i32]) -> Complex64 {
        self.coefficients.get(z).copied().unwrap_or_default()
    }

    pub fn reconstruct(&self, theta: &[f64]) -> Complex64 {
        self.coefficients.iter().map(|(z, c)| c * phase(z, theta)).sum()
    }

    /// `sum_Z |f_Z|^2`.
    pub fn energy(&self) -> f64 {
        self.coefficients.values().map(|c| c.norm_sqr()).sum()
    }

    /// Largest `|f_Z|` over modes outside `declared`.
    pub fn tail(&self, declared: &[Vec<i32>]) -> f64 {
        self.coefficients
            .iter()
            .filter(|(z, _)| !declared.contains(z))
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max)
    }
}

/// Trapezoid-rule Fourier coefficients of `f` (a function of the `k` angles).
pub fn fourier_decompose(f: &dyn Fn(&[f64]) -> Complex64, k: usize, n: i32, grid: usize) -> Result<FourierField> {
    if grid < (2 * n + 1) as usize {
        return Err(Error::InvalidArgument(format!(
            "grid size {grid} cannot resolve modes up to {n}"
        )));
    }
    let nodes = angle_grid(grid, k);
    let samples: Vec<Complex64> = nodes.iter().map(|t| f(t)).collect();
    Ok(project(&nodes, &samples, n, k))
}

fn project(nodes: &[Vec<f64>], samples: &[Complex64], n: i32, k: usize) -> FourierField {
    let norm = 1.0 / nodes.len() as f64;
    let coefficients = modes(n, k)
        .into_iter()
        .map(|z| {
            let c: Complex64 = nodes
                .iter()
                .zip(samples)
                .map(|(t, s)| s * phase(&z, t).conj())
                .sum();
            (z, c * norm)
        })
        .collect();
    FourierField { n, k, coefficients }
}

/// `R_θ` acting blockwise on `R^{2k}`.
pub fn rotate(u: &[f64], theta: &[f64]) -> Vec<f64> {
    let mut out = u.to_vec();
    for (q, &t) in theta.iter().enumerate() {
        let (s, c) = t.sin_cos();
        out[2 * q] = c * u[2 * q] - s * u[2 * q + 1];
        out[2 * q + 1] = s * u[2 * q] + c * u[2 * q + 1];
    }
    out
}

/// A smooth complex function on `R^{m+2k}` with analytic second-order jets.
pub trait JetFunction: Sync {
    fn dim(&self) -> usize;
    fn jet(&self, v: &[f64]) -> Jet2;
    fn value(&self, v: &[f64]) -> Complex64 {
        self.jet(v).value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Envelope {
    /// `b(|x|^2 / r1sq) b(|u|^2 / r2sq)` with the metric's bump `b`.
    Bump { r1sq: f64, r2sq: f64 },
    /// `exp(-(|x|^2 + |u|^2) / 2)`.
    Gaussian,
}

/// `c0 + sum_i c_i x_i + sum_{ij} c_ij x_i x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub c0: Complex64,
    pub lin: Vec<Complex64>,
    /// Row-major `m x m`.
    pub quad: Vec<Complex64>,
}

impl Quadratic {
    fn jet(&self, x: &[f64], n: usize) -> Jet2 {
        let m = x.len();
        let mut j = Jet2::constant(n, self.c0);
        for i in 0..m {
            j.value += self.lin[i] * x[i];
            j.grad[i] += self.lin[i];
            for l in 0..m {
                let c = self.quad[i * m + l];
                j.value += c * x[i] * x[l];
                j.grad[i] += c * x[l];
                j.grad[l] += c * x[i];
                j.hess[i * n + l] += c;
                j.hess[l * n + i] += c;
            }
        }
        j
    }
}

/// `envelope * sum_t P_t(x) prod_p (u_p1 ± i u_p2)^{|Z_tp|}`: each term lies in
/// the mode `Z_t`, so the function is band-limited with declared modes.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub m: usize,
    pub k: usize,
    pub envelope: Envelope,
    pub terms: Vec<(Vec<i32>, Quadratic)>,
}

impl TestFunction {
    pub fn declared_modes(&self) -> Vec<Vec<i32>> {
        let mut z: Vec<Vec<i32>> = self.terms.iter().map(|t| t.0.clone()).collect();
        z.sort();
        z.dedup();
        z
    }

    pub fn band_limit(&self) -> i32 {
        self.terms
            .iter()
            .flat_map(|t| t.0.iter().map(|z| z.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Random functions with `1..=2` terms and modes in `[-n, n]^k`.
    pub fn random_set(m: usize, k: usize, count: usize, n: i32, envelope: Envelope, seed: u64) -> Vec<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cplx = |rng: &mut ChaCha8Rng, scale: f64| {
            Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
        };
        (0..count)
            .map(|_| {
                let n_terms = rng.random_range(1..=2);
                let terms = (0..n_terms)
                    .map(|_| {
                        let z: Vec<i32> = (0..k).map(|_| rng.random_range(-n..=n)).collect();
                        let q = Quadratic {
                            c0: cplx(&mut rng, 1.0),
                            lin: (0..m).map(|_| cplx(&mut rng, 1.0)).collect(),
                            quad: (0..m * m).map(|_| cplx(&mut rng, 0.5)).collect(),
                        };
                        (z, q)
                    })
                    .collect();
                Self {
                    m,
                    k,
                    envelope,
                    terms,
                }
            })
            .collect()
    }

    fn envelope_jet(&self, v: &[f64]) -> Jet2 {
        let n = v.len();
        let m = self.m;
        let sq = |range: std::ops::Range<usize>, scale: f64| {
            let mut t = Jet2::zero(n);
            for i in range {
                t.value += v[i] * v[i] * scale;
                t.grad[i] = (2.0 * v[i] * scale).into();
                t.hess[i * n + i] = (2.0 * scale).into();
            }
            t
        };
        match self.envelope {
            Envelope::Bump { r1sq, r2sq } => {
                let tx = sq(0..m, 1.0 / r1sq);
                let tu = sq(m..n, 1.0 / r2sq);
                let (a0, a1, a2) = bump(tx.value.re);
                let (b0, b1, b2) = bump(tu.value.re);
                tx.compose(a0.into(), a1.into(), a2.into())
                    .mul(&tu.compose(b0.into(), b1.into(), b2.into()))
            }
            Envelope::Gaussian => {
                let t = sq(0..n, -0.5);
                let e = t.value.exp();
                t.compose(e, e, e)
            }
        }
    }

    fn mode_jet(&self, z: &[i32], v: &[f64]) -> Jet2 {
        let n = v.len();
        let mut out = Jet2::constant(n, 1.0.into());
        for (p, &zp) in z.iter().enumerate() {
            if zp == 0 {
                continue;
            }
            let (i1, i2) = (self.m + 2 * p, self.m + 2 * p + 1);
            let sign = if zp > 0 { 1.0 } else { -1.0 };
            let mut w = Jet2::constant(n, Complex64::new(v[i1], sign * v[i2]));
            w.grad[i1] = 1.0.into();
            w.grad[i2] = Complex64::new(0.0, sign);
            out = out.mul(&w.powi(zp.unsigned_abs()));
        }
        out
    }
}

impl JetFunction for TestFunction {
    fn dim(&self) -> usize {
        self.m + 2 * self.k
    }

    fn value(&self, v: &[f64]) -> Complex64 {
        let m = self.m;
        let tx: f64 = v[..m].iter().map(|a| a * a).sum();
        let tu: f64 = v[m..].iter().map(|a| a * a).sum();
        let env = match self.envelope {
            Envelope::Bump { r1sq, r2sq } => bump(tx / r1sq).0 * bump(tu / r2sq).0,
            Envelope::Gaussian => (-(tx + tu) / 2.0).exp(),
        };
        if env == 0.0 {
            return Complex64::default();
        }
        let body: Complex64 = self
            .terms
            .iter()
            .map(|(z, q)| {
                let poly = q.jet(&v[..m], m).value;
                let angular: Complex64 = z
                    .iter()
                    .enumerate()
                    .map(|(p, &zp)| {
                        let sign = if zp >= 0 { 1.0 } else { -1.0 };
                        Complex64::new(v[m + 2 * p], sign * v[m + 2 * p + 1]).powu(zp.unsigned_abs())
                    })
                    .product();
                poly * angular
            })
            .sum();
        env * body
    }

    fn jet(&self, v: &[f64]) -> Jet2 {
        let n = v.len();
        let env = self.envelope_jet(v);
        if env.value == Complex64::default()
            && env.grad.iter().all(|g| *g == Complex64::default())
        {
            return Jet2::zero(n);
        }
        let mut body = Jet2::zero(n);
        for (z, q) in &self.terms {
            body.add_assign(&q.jet(&v[..self.m], n).mul(&self.mode_jet(z, v)));
        }
        env.mul(&body)
    }
}

/// `Δf = -sum_{μν} (∂_μ G^{μν} ∂_ν f + G^{μν} ∂_μ ∂_ν f)`, the positive
/// Laplacian for a metric of unit determinant. Metric derivatives come from
/// the finite-difference scheme, those of `f` from its jet.
pub fn laplacian_field(field: &dyn MetricField, f: &dyn JetFunction, v: &[f64], scheme: &FDScheme) -> Result<Complex64> {
    let jet = metric_jet(field, v, scheme, false)?;
    let fj = f.jet(v);
    let n = v.len();
    let mut div = vec![0.0; n];
    for mu in 0..n {
        let d = jet.dginv(mu);
        for (nu, dv) in div.iter_mut().enumerate() {
            *dv += d[(mu, nu)];
        }
    }
    let mut acc = Complex64::default();
    for nu in 0..n {
        acc += fj.grad[nu] * div[nu];
        for mu in 0..n {
            acc += fj.h(mu, nu) * jet.ginv[(mu, nu)];
        }
    }
    Ok(-acc)
}

pub fn laplacian(
    b: &Bracket,
    profile: &CutoffProfile,
    f: &dyn JetFunction,
    v: &[f64],
    scheme: &FDScheme,
) -> Result<Complex64> {
    laplacian_field(&BracketMetricField { bracket: b, profile }, f, v, scheme)
}

/// Mode-wise composition with the conjugators `A_Z`.
#[derive(Debug, Clone)]
pub struct IntertwiningOperator {
    pub m: usize,
    pub k: usize,
    pub n: i32,
    /// `A_Z` for every `Z` in `[-n, n]^k`, read-only after construction.
    pub conjugators: BTreeMap<Vec<i32>, DMatrix<f64>>,
}

/// Spectral tolerance used when building `A_Z`.
pub const CONJUGATOR_TOL: f64 = 1e-9;

impl IntertwiningOperator {
    fn build(
        b1: &Bracket,
        b2: &Bracket,
        n: i32,
        mut make: impl FnMut(&[f64]) -> Result<DMatrix<f64>>,
    ) -> Result<Self> {
        if b1.m() != b2.m() || b1.k() != b2.k() {
            return Err(Error::DimensionMismatch {
                what: "bracket pair",
                expected: b1.m() * b1.k(),
                found: b2.m() * b2.k(),
            });
        }
        let (m, k) = (b1.m(), b1.k());
        let mut conjugators = BTreeMap::new();
        for z in modes(n, k) {
            let a = if z.iter().all(|&v| v == 0) {
                DMatrix::identity(m, m)
            } else {
                let zr: Vec<f64> = z.iter().map(|&v| v as f64).collect();
                make(&zr)?
            };
            conjugators.insert(z, a);
        }
        Ok(Self {
            m,
            k,
            n,
            conjugators,
        })
    }

    /// `Δ_{g1} Q = Q Δ_{g2}`; requires isospectral brackets.
    pub fn new(b1: &Bracket, b2: &Bracket, n: i32) -> Result<Self> {
        let rep = check_isospectral(b1, b2, DEFAULT_ISOSPECTRAL_SAMPLES, CONJUGATOR_TOL, 0)?;
        if !rep.isospectral {
            return Err(Error::SpectraMismatch {
                deviation: rep.max_deviation,
                tol: CONJUGATOR_TOL,
            });
        }
        // A^T j2 A = j1
        Self::build(b1, b2, n, |z| Ok(conjugator(b2, b1, z, CONJUGATOR_TOL)?.a))
    }

    /// Same construction without the spectral check, for negative controls.
    pub fn forced(b1: &Bracket, b2: &Bracket, n: i32) -> Result<Self> {
        Self::build(b1, b2, n, |z| Ok(forced_conjugator(b2, b1, z)?.a))
    }

    /// `A_Z = I` for every mode.
    pub fn identity(b: &Bracket, n: i32) -> Self {
        let m = b.m();
        Self::build(b, b, n, |_| Ok(DMatrix::identity(m, m))).expect("identity build cannot fail")
    }

    pub fn grid(&self) -> usize {
        (2 * self.n + 1) as usize
    }

    fn a(&self, z: &[i32]) -> Result<&DMatrix<f64>> {
        self.conjugators.get(z).ok_or_else(|| {
            Error::InvalidArgument(format!("mode {z:?} exceeds the band limit {}", self.n))
        })
    }

    fn change_of_variables(&self, a: &DMatrix<f64>, theta: &[f64]) -> DMatrix<f64> {
        let (m, k) = (self.m, self.k);
        let mut l = DMatrix::zeros(m + 2 * k, m + 2 * k);
        l.view_mut((0, 0), (m, m)).copy_from(a);
        for (q, &t) in theta.iter().enumerate() {
            let (s, c) = t.sin_cos();
            let o = m + 2 * q;
            l[(o, o)] = c;
            l[(o, o + 1)] = -s;
            l[(o + 1, o)] = s;
            l[(o + 1, o + 1)] = c;
        }
        l
    }

    /// Jet of `Q f` at `v`, summing over `modes` (the declared modes of a
    /// band-limited `f`; all other coefficients vanish).
    pub fn apply_jet(&self, f: &dyn JetFunction, modes_in: &[Vec<i32>], v: &[f64]) -> Result<Jet2> {
        let grid = angle_grid(self.grid(), self.k);
        let norm = 1.0 / grid.len() as f64;
        let mut out = Jet2::zero(v.len());
        for z in modes_in {
            let a = self.a(z)?;
            for t in &grid {
                let l = self.change_of_variables(a, t);
                let w: Vec<f64> = (0..v.len())
                    .map(|i| (0..v.len()).map(|j| l[(i, j)] * v[j]).sum())
                    .collect();
                let pulled = f.jet(&w).pullback(&l);
                out.add_scaled(phase(z, t).conj() * norm, &pulled);
            }
        }
        Ok(out)
    }

    pub fn apply(&self, f: &dyn JetFunction, modes_in: &[Vec<i32>], v: &[f64]) -> Result<Complex64> {
        let m = self.m;
        let grid = angle_grid(self.grid(), self.k);
        let norm = 1.0 / grid.len() as f64;
        let mut out = Complex64::default();
        for z in modes_in {
            let a = self.a(z)?;
            let ax: Vec<f64> = (0..m).map(|i| (0..m).map(|j| a[(i, j)] * v[j]).sum()).collect();
            for t in &grid {
                let mut w = ax.clone();
                w.extend(rotate(&v[m..], t));
                out += phase(z, t).conj() * norm * f.value(&w);
            }
        }
        Ok(out)
    }

    /// `(Q F)(v)` for a scalar `F` known only through samples: for every
    /// declared `Z` the full mode decomposition of `F(A_Z x, R_τ u)` is formed,
    /// its `Z` coefficient is kept and the largest undeclared one is
    /// returned as the truncation tail.
    pub fn apply_sampled(
        &self,
        f: &(dyn Fn(&[f64]) -> Result<Complex64> + Sync),
        declared: &[Vec<i32>],
        v: &[f64],
    ) -> Result<(Complex64, f64)> {
        let m = self.m;
        let grid = angle_grid(self.grid(), self.k);
        let mut total = Complex64::default();
        let mut tail = 0.0_f64;
        for z in declared {
            let a = self.a(z)?;
            let ax: Vec<f64> = (0..m).map(|i| (0..m).map(|j| a[(i, j)] * v[j]).sum()).collect();
            let samples: Vec<Complex64> = grid
                .iter()
                .map(|t| {
                    let mut w = ax.clone();
                    w.extend(rotate(&v[m..], t));
                    f(&w)
                })
                .collect::<Result<_>>()?;
            let field = project(&grid, &samples, self.n, self.k);
            total += field.coefficient(z);
            tail = tail.max(field.tail(declared));
        }
        Ok((total, tail))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntertwineReport {
    pub n: i32,
    pub n_functions: usize,
    pub n_points: usize,
    pub max_residual: f64,
    pub truncation_tail: f64,
}

/// `max |Δ_{g1}(Q f)(p) - Q(Δ_{g2} f)(p)| / (1 + |Q(Δ_{g2} f)(p)|)`.
pub fn intertwine_residual(
    b1: &Bracket,
    b2: &Bracket,
    profile: &CutoffProfile,
    q: &IntertwiningOperator,
    tests: &[TestFunction],
    points: &[Vec<f64>],
    scheme: &FDScheme,
) -> Result<IntertwineReport> {
    for f in tests {
        if f.band_limit() > q.n {
            return Err(Error::InvalidArgument(format!(
                "test function band limit {} exceeds {}",
                f.band_limit(),
                q.n
            )));
        }
    }
    let g1 = BracketMetricField { bracket: b1, profile };
    let pairs: Vec<(usize, usize)> = (0..tests.len())
        .flat_map(|i| (0..points.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let f = &tests[i];
            let v = &points[j];
            let declared = f.declared_modes();
            let qf = QfJet { q, f, modes: &declared };
            let lhs = laplacian_field(&g1, &qf, v, scheme)?;
            let delta2 = |w: &[f64]| laplacian(b2, profile, f, w, scheme);
            let (rhs, tail) = q.apply_sampled(&delta2, &declared, v)?;
            Ok(((lhs - rhs).norm() / (1.0 + rhs.norm()), tail))
        })
        .collect::<Result<_>>()?;
    Ok(IntertwineReport {
        n: q.n,
        n_functions: tests.len(),
        n_points: points.len(),
        max_residual: results.iter().map(|r| r.0).fold(0.0, f64::max),
        truncation_tail: results.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}

struct QfJet<'a> {
    q: &'a IntertwiningOperator,
    f: &'a TestFunction,
    modes: &'a [Vec<i32>],
}

impl JetFunction for QfJet<'_> {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn jet(&self, v: &[f64]) -> Jet2 {
        self.q
            .apply_jet(self.f, self.modes, v)
            .expect("modes were checked against the band limit")
    }
}

/// Random points with `|x|^2 < frac * r1sq` and `|u|^2 < frac * r2sq / s^2`.
pub fn interior_points(m: usize, k: usize, profile: &CutoffProfile, count: usize, frac: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r1 = (frac * profile.r1sq).sqrt();
    let r2 = (frac * profile.r2sq).sqrt() / profile.s;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-r1..r1)).collect();
        let u: Vec<f64> = (0..2 * k).map(|_| rng.random_range(-r2..r2)).collect();
        let tx: f64 = x.iter().map(|a| a * a).sum();
        let tu: f64 = u.iter().map(|a| a * a).sum();
        if tx < r1 * r1 && tu < r2 * r2 {
            out.push(x.into_iter().chain(u).collect());
        }
    }
    out
}
