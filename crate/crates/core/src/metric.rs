//! The torus-invariant metric on `R^{m+2k}` built from a bracket and a cutoff.
//!
//! At `(x, u)` the vertical space `{0} + R^{2k}` keeps the Euclidean inner
//! product and the horizontal lift of `Y in R^m` is `(Y, psi K Y)` with
//! `K Y = [x, Y]*_u`. Writing a tangent vector as `(Y, W)` gives
//! `|(Y, W)|^2 = |Y|^2 + |W - psi K Y|^2`, i.e.
//!
//! ```text
//! G = [[I + psi^2 K^T K, -psi K^T],
//!      [-psi K,           I       ]]
//! ```
//!
//! which has unit determinant.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bracket::Bracket;
use crate::error::{Error, Result};

/// The smooth bump `b(t) = exp(1 - 1/(1 - t))` on `[0, 1)`, zero for `t >= 1`.
/// Returns `(b, b', b'')`.
#[inline]
pub fn bump(t: f64) -> (f64, f64, f64) {
    if t >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let w = 1.0 - t;
    let b = (1.0 - 1.0 / w).exp();
    let w2 = w * w;
    (b, -b / w2, b * (2.0 * t - 1.0) / (w2 * w2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CutoffKind {
    /// `amplitude * b(t1 / r1sq) * b(t2 / r2sq)`
    BumpProduct,
}

/// Smooth compactly supported `phi(t1, t2)` together with the scale `s`
/// that turns it into `phi_s(t1, t2) = phi(t1, s^2 t2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffProfile {
    pub kind: CutoffKind,
    pub r1sq: f64,
    pub r2sq: f64,
    pub amplitude: f64,
    pub s: f64,
}

/// Value and partial derivatives of `phi_s` in its two scalar arguments.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhiJet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d11: f64,
    pub d12: f64,
    pub d22: f64,
}

impl CutoffProfile {
    pub fn new(r1sq: f64, r2sq: f64, amplitude: f64) -> Result<Self> {
        let p = Self {
            kind: CutoffKind::BumpProduct,
            r1sq,
            r2sq,
            amplitude,
            s: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// `R1sq = R2sq = 1`, unit amplitude, `s = 1`.
    pub fn reference() -> Self {
        Self::new(1.0, 1.0, 1.0).expect("reference profile is valid")
    }

    pub fn with_scale(&self, s: f64) -> Result<Self> {
        let p = Self { s, ..*self };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let radius_ok = |v: f64| v.is_finite() && v > 0.0;
        if !radius_ok(self.r1sq) || !radius_ok(self.r2sq) {
            return Err(Error::InvalidProfile(format!(
                "support radii must be finite and positive (r1sq = {}, r2sq = {})",
                self.r1sq, self.r2sq
            )));
        }
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(Error::InvalidProfile(format!(
                "amplitude must be finite and nonnegative, got {}",
                self.amplitude
            )));
        }
        if !self.s.is_finite() || self.s <= 0.0 {
            return Err(Error::InvalidProfile(format!(
                "scale s must be finite and positive, got {}",
                self.s
            )));
        }
        Ok(())
    }

    /// Largest support radius, `max(R1, R2)`.
    pub fn radius_scale(&self) -> f64 {
        self.r1sq.max(self.r2sq).sqrt()
    }

    /// Whether `(t1, t2) = (|x|^2, |u|^2)` lies in the open support of `phi_s`.
    #[inline]
    pub fn in_support(&self, t1: f64, t2: f64) -> bool {
        self.amplitude != 0.0 && t1 < self.r1sq && self.s * self.s * t2 < self.r2sq
    }

    /// `phi_s` and its partials at `(t1, t2)`.
    pub fn phi(&self, t1: f64, t2: f64) -> PhiJet {
        if !self.in_support(t1, t2) {
            return PhiJet::default();
        }
        let s2 = self.s * self.s;
        let (b1, db1, ddb1) = bump(t1 / self.r1sq);
        let (b2, db2, ddb2) = bump(s2 * t2 / self.r2sq);
        let a = self.amplitude;
        let c1 = 1.0 / self.r1sq;
        let c2 = s2 / self.r2sq;
        PhiJet {
            value: a * b1 * b2,
            d1: a * db1 * c1 * b2,
            d2: a * b1 * db2 * c2,
            d11: a * ddb1 * c1 * c1 * b2,
            d12: a * db1 * c1 * db2 * c2,
            d22: a * b1 * ddb2 * c2 * c2,
        }
    }
}

/// A point `(x, u)` of `R^m x R^{2k}`; plane `p` of `u` is `(u[2p], u[2p+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl Point {
    pub fn new(x: Vec<f64>, u: Vec<f64>) -> Self {
        assert!(u.len() % 2 == 0, "u must have even length");
        Self { x, u }
    }

    pub fn from_polar(x: Vec<f64>, r: &[f64], theta: &[f64]) -> Self {
        let u = r
            .iter()
            .zip(theta)
            .flat_map(|(&rp, &tp)| [rp * tp.cos(), rp * tp.sin()])
            .collect();
        Self { x, u }
    }

    /// Concatenation `(x, u)` as a vector of `R^{m+2k}`.
    pub fn from_flat(v: &[f64], m: usize) -> Self {
        Self::new(v[..m].to_vec(), v[m..].to_vec())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.x.iter().chain(&self.u).copied().collect()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.u.chunks(2).map(|c| c[0].hypot(c[1])).collect()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.u.chunks(2).map(|c| c[1].atan2(c[0])).collect()
    }

    pub fn x_norm_sq(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum()
    }

    pub fn u_norm_sq(&self) -> f64 {
        self.u.iter().map(|v| v * v).sum()
    }
}

/// `psi(x, u) = phi_s(|x|^2, |u|^2)` with partials in the two squared norms.
pub fn psi(profile: &CutoffProfile, x: &[f64], u: &[f64]) -> PhiJet {
    let t1 = x.iter().map(|v| v * v).sum();
    let t2 = u.iter().map(|v| v * v).sum();
    profile.phi(t1, t2)
}

/// `Z*_u`: blockwise `Z_p J u_p` with `J = [[0, -1], [1, 0]]`.
pub fn vertical_field(z: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != 2 * z.len() {
        return Err(Error::DimensionMismatch {
            what: "vertical field u",
            expected: 2 * z.len(),
            found: u.len(),
        });
    }
    Ok(z.iter()
        .zip(u.chunks(2))
        .flat_map(|(&zp, c)| [-zp * c[1], zp * c[0]])
        .collect())
}

/// The `2k x m` matrix `K` with `K Y = [x, Y]*_u`.
pub fn connection_matrix(b: &Bracket, x: &[f64], u: &[f64]) -> DMatrix<f64> {
    let (m, k) = (b.m(), b.k());
    let mut kmat = DMatrix::zeros(2 * k, m);
    for p in 0..k {
        let (u0, u1) = (u[2 * p], u[2 * p + 1]);
        for i in 0..m {
            // <[x, e_i], Z_p>
            let mut l = 0.0;
            for (j, &xj) in x.iter().enumerate() {
                l += xj * b.lambda(p, j, i);
            }
            kmat[(2 * p, i)] = -l * u1;
            kmat[(2 * p + 1, i)] = l * u0;
        }
    }
    kmat
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    pub g: DMatrix<f64>,
}

impl MetricMatrix {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn determinant(&self) -> f64 {
        self.g.clone().lu().determinant()
    }

    /// Largest absolute entry of `G - I`.
    pub fn deviation_from_identity(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (self.g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self) -> bool {
        self.g == self.g.transpose()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.g.clone().cholesky().is_some()
    }

    /// `|Y|_G^2` for a tangent vector `v`.
    pub fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.g * v))
    }
}

fn check_point(b: &Bracket, p: &Point) -> Result<()> {
    if p.x.len() != b.m() {
        return Err(Error::DimensionMismatch {
            what: "point x",
            expected: b.m(),
            found: p.x.len(),
        });
    }
    if p.u.len() != 2 * b.k() {
        return Err(Error::DimensionMismatch {
            what: "point u",
            expected: 2 * b.k(),
            found: p.u.len(),
        });
    }
    Ok(())
}

pub fn metric_at(b: &Bracket, profile: &CutoffProfile, p: &Point) -> Result<MetricMatrix> {
    check_point(b, p)?;
    Ok(MetricMatrix {
        g: metric_matrix_unchecked(b, profile, &p.x, &p.u),
    })
}

pub(crate) fn metric_matrix_unchecked(
    b: &Bracket,
    profile: &CutoffProfile,
    x: &[f64],
    u: &[f64],
) -> DMatrix<f64> {
    let (m, k) = (b.m(), b.k());
    let n = m + 2 * k;
    let mut g = DMatrix::identity(n, n);
    let ps = psi(profile, x, u).value;
    if ps == 0.0 {
        return g;
    }
    let kmat = connection_matrix(b, x, u) * ps;
    let ktk = kmat.transpose() * &kmat;
    for i in 0..m {
        for j in 0..m {
            g[(i, j)] += ktk[(i, j)];
        }
        for a in 0..2 * k {
            g[(i, m + a)] = -kmat[(a, i)];
            g[(m + a, i)] = -kmat[(a, i)];
        }
    }
    g
}

/// Samples points with `(|x|^2, |u|^2)` outside the support of `phi_s` and
/// checks that the metric is exactly the identity there.
pub fn is_euclidean_outside(
    b: &Bracket,
    profile: &CutoffProfile,
    n_samples: usize,
    seed: u64,
) -> Result<bool> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, k) = (b.m(), b.k());
    let r1 = profile.r1sq.sqrt();
    let r2 = (profile.r2sq / (profile.s * profile.s)).sqrt();
    for i in 0..n_samples {
        // alternate between leaving the support through x and through u
        let (x_scale, u_scale) = if i % 2 == 0 {
            (r1 * rng.random_range(1.0..3.0), r2 * rng.random_range(0.0..3.0))
        } else {
            (r1 * rng.random_range(0.0..3.0), r2 * rng.random_range(1.0..3.0))
        };
        let x = random_direction(&mut rng, m, x_scale);
        let u = random_direction(&mut rng, 2 * k, u_scale);
        let p = Point::new(x, u);
        if profile.in_support(p.x_norm_sq(), p.u_norm_sq()) {
            continue;
        }
        if metric_at(b, profile, &p)?.deviation_from_identity() != 0.0 {
            return Ok(false);
        }
    }
    Ok(true)
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
    v.into_iter().map(|a| a * radius / norm).collect()
}
