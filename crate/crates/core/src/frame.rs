//! Analytic curvature of the bracket metric in its orthonormal polar frame.
//!
//! On the dense set where every `r_p > 0` the frame is
//! `E = (x̂_1..x̂_m, r̂_1..r̂_k, θ̂_1..θ̂_k)` with
//! `x̂_i = e_i + sum_q a_iq ∂θ_q`, `r̂_q = ∂r_q`, `θ̂_q = (1/r_q) ∂θ_q` and
//! `a_ip(x, r) = phi_s(|x|^2, |r|^2) <[x, e_i], Z_p>`.
//!
//! Every quantity here is θ-independent, so the frame derivative along `x̂_i`
//! is `∂/∂x_i`, along `r̂_q` it is `∂/∂r_q`, and along `θ̂_q` it vanishes. The
//! engine differentiates `a` analytically (no finite differences), forms the
//! structure constants `[E_α, E_β] = c^γ_αβ E_γ`, the Levi-Civita symbols
//! `∇_{E_β} E_α = Γ^γ_αβ E_γ`, and the curvature
//! `R_αβγδ = g(R(E_γ, E_δ) E_β, E_α)` with `Ric_αβ = sum_γ R_αγβγ`.
//!
//! Tensor storage is dense and row-major with the upper index first:
//! `c[γ][α][β]`, `Γ[γ][α][β]`, `dΓ[γ][α][β][δ] = E_δ(Γ^γ_αβ)`, `R[α][β][γ][δ]`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::bracket::Bracket;
use crate::error::{Error, Result};
use crate::metric::CutoffProfile;

/// Polar frame evaluations require `r_p > R_MIN_FACTOR * R2`.
pub const R_MIN_FACTOR: f64 = 1e-6;

/// `r_min` for a profile: `1e-6 * R2` with `R2 = sqrt(r2sq) / s`.
pub fn r_min(profile: &CutoffProfile) -> f64 {
    R_MIN_FACTOR * profile.r2sq.sqrt() / profile.s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FrameBlock {
    /// `I1`: the horizontal lifts `x̂_i`.
    Horizontal,
    /// `I2`: the radial fields `r̂_p`.
    Radial,
    /// `I3`: the unit angular fields `θ̂_p`.
    Angular,
}

/// Index bookkeeping for the three frame blocks (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameIndexSets {
    pub m: usize,
    pub k: usize,
}

impl FrameIndexSets {
    pub fn new(m: usize, k: usize) -> Self {
        Self { m, k }
    }

    pub fn n(&self) -> usize {
        self.m + 2 * self.k
    }

    #[inline]
    pub fn x(&self, i: usize) -> usize {
        i
    }

    #[inline]
    pub fn r(&self, p: usize) -> usize {
        self.m + p
    }

    #[inline]
    pub fn theta(&self, p: usize) -> usize {
        self.m + self.k + p
    }

    pub fn block(&self, alpha: usize) -> FrameBlock {
        if alpha < self.m {
            FrameBlock::Horizontal
        } else if alpha < self.m + self.k {
            FrameBlock::Radial
        } else {
            FrameBlock::Angular
        }
    }
}

/// `a_ip` and its analytic partials in `(x, r)` up to second order.
#[derive(Debug, Clone)]
pub struct ACoeffs {
    m: usize,
    k: usize,
    pub r_min: f64,
    a: Vec<f64>,
    da_dx: Vec<f64>,
    da_dr: Vec<f64>,
    d2a_xx: Vec<f64>,
    d2a_xr: Vec<f64>,
    d2a_rr: Vec<f64>,
}

impl ACoeffs {
    #[inline]
    pub fn a(&self, i: usize, p: usize) -> f64 {
        self.a[i * self.k + p]
    }

    /// `∂a_ip/∂x_j`
    #[inline]
    pub fn dx(&self, i: usize, p: usize, j: usize) -> f64 {
        self.da_dx[(i * self.k + p) * self.m + j]
    }

    /// `∂a_ip/∂r_q`
    #[inline]
    pub fn dr(&self, i: usize, p: usize, q: usize) -> f64 {
        self.da_dr[(i * self.k + p) * self.k + q]
    }

    /// `∂²a_ip/∂x_j∂x_l`
    #[inline]
    pub fn dxx(&self, i: usize, p: usize, j: usize, l: usize) -> f64 {
        self.d2a_xx[((i * self.k + p) * self.m + j) * self.m + l]
    }

    /// `∂²a_ip/∂x_j∂r_q`
    #[inline]
    pub fn dxr(&self, i: usize, p: usize, j: usize, q: usize) -> f64 {
        self.d2a_xr[((i * self.k + p) * self.m + j) * self.k + q]
    }

    /// `∂²a_ip/∂r_q∂r_t`
    #[inline]
    pub fn drr(&self, i: usize, p: usize, q: usize, t: usize) -> f64 {
        self.d2a_rr[((i * self.k + p) * self.k + q) * self.k + t]
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().all(|&v| v == 0.0)
    }
}

pub fn a_coeffs(b: &Bracket, profile: &CutoffProfile, x: &[f64], r: &[f64]) -> Result<ACoeffs> {
    let (m, k) = (b.m(), b.k());
    if x.len() != m {
        return Err(Error::DimensionMismatch {
            what: "frame point x",
            expected: m,
            found: x.len(),
        });
    }
    if r.len() != k {
        return Err(Error::DimensionMismatch {
            what: "frame point r",
            expected: k,
            found: r.len(),
        });
    }
    let t1: f64 = x.iter().map(|v| v * v).sum();
    let t2: f64 = r.iter().map(|v| v * v).sum();
    let phi = profile.phi(t1, t2);
    let mut ac = ACoeffs {
        m,
        k,
        r_min: r_min(profile),
        a: vec![0.0; m * k],
        da_dx: vec![0.0; m * k * m],
        da_dr: vec![0.0; m * k * k],
        d2a_xx: vec![0.0; m * k * m * m],
        d2a_xr: vec![0.0; m * k * m * k],
        d2a_rr: vec![0.0; m * k * k * k],
    };
    if phi.value == 0.0 && phi.d1 == 0.0 && phi.d2 == 0.0 {
        return Ok(ac);
    }
    for i in 0..m {
        for p in 0..k {
            // L = <[x, e_i], Z_p>, ∂L/∂x_j = lambda[p][j][i]
            let dl: Vec<f64> = (0..m).map(|j| b.lambda(p, j, i)).collect();
            let l: f64 = x.iter().zip(&dl).map(|(a, c)| a * c).sum();
            let ip = i * k + p;
            ac.a[ip] = phi.value * l;
            for j in 0..m {
                ac.da_dx[ip * m + j] = 2.0 * x[j] * phi.d1 * l + phi.value * dl[j];
                for n in 0..m {
                    let delta = if j == n { 1.0 } else { 0.0 };
                    ac.d2a_xx[(ip * m + j) * m + n] = (2.0 * delta * phi.d1
                        + 4.0 * x[j] * x[n] * phi.d11)
                        * l
                        + 2.0 * x[j] * phi.d1 * dl[n]
                        + 2.0 * x[n] * phi.d1 * dl[j];
                }
                for q in 0..k {
                    ac.d2a_xr[(ip * m + j) * k + q] =
                        4.0 * x[j] * r[q] * phi.d12 * l + 2.0 * r[q] * phi.d2 * dl[j];
                }
            }
            for q in 0..k {
                ac.da_dr[ip * k + q] = 2.0 * r[q] * phi.d2 * l;
                for t in 0..k {
                    let delta = if q == t { 1.0 } else { 0.0 };
                    ac.d2a_rr[(ip * k + q) * k + t] =
                        (2.0 * delta * phi.d2 + 4.0 * r[q] * r[t] * phi.d22) * l;
                }
            }
        }
    }
    Ok(ac)
}

/// Dense rank-3 tensor indexed `[a][b][c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.n + b) * self.n + c]
    }

    #[inline]
    fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.n + b) * self.n + c] = v;
    }
}

/// Dense rank-4 tensor indexed `[a][b][c][d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n * n],
        }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.data[((a * self.n + b) * self.n + c) * self.n + d]
    }

    #[inline]
    fn idx(&self, a: usize, b: usize, c: usize, d: usize) -> usize {
        ((a * self.n + b) * self.n + c) * self.n + d
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Structure constants `c[γ][α][β]` and their frame derivatives
/// `dc[γ][α][β][δ] = E_δ(c^γ_αβ)`.
#[derive(Debug, Clone)]
pub struct StructureConstants {
    pub c: Tensor3,
    pub dc: Tensor4,
}

/// Nonzero entries:
/// `c[θ̂_q; x̂_i, x̂_j] = (∂_{x_i} a_jq - ∂_{x_j} a_iq) r_q`,
/// `c[θ̂_q; r̂_p, x̂_i] = (∂_{r_p} a_iq) r_q`, and the flat polar term
/// `c[θ̂_q; r̂_q, θ̂_q] = -1/r_q`, with their antisymmetric partners.
pub fn structure_constants(ac: &ACoeffs, r: &[f64]) -> Result<StructureConstants> {
    let (m, k) = (ac.m, ac.k);
    let idx = FrameIndexSets::new(m, k);
    let n = idx.n();
    if r.len() != k {
        return Err(Error::DimensionMismatch {
            what: "frame point r",
            expected: k,
            found: r.len(),
        });
    }
    if let Some(&bad) = r.iter().find(|&&v| !(v > ac.r_min)) {
        return Err(Error::DegeneratePoint {
            r: bad,
            r_min: ac.r_min,
        });
    }
    let mut c = Tensor3::zeros(n);
    let mut dc = Tensor4::zeros(n);
    let put = |c: &mut Tensor3, g: usize, a: usize, b: usize, v: f64| {
        c.set(g, a, b, v);
        c.set(g, b, a, -v);
    };
    for q in 0..k {
        let tq = idx.theta(q);
        let rq = r[q];
        for i in 0..m {
            for j in (i + 1)..m {
                let base = ac.dx(j, q, i) - ac.dx(i, q, j);
                put(&mut c, tq, i, j, base * rq);
                for l in 0..m {
                    let dv = (ac.dxx(j, q, i, l) - ac.dxx(i, q, j, l)) * rq;
                    let e = dc.idx(tq, i, j, l);
                    dc.data[e] = dv;
                    let e = dc.idx(tq, j, i, l);
                    dc.data[e] = -dv;
                }
                for p in 0..k {
                    let mut dv = (ac.dxr(j, q, i, p) - ac.dxr(i, q, j, p)) * rq;
                    if p == q {
                        dv += base;
                    }
                    let e = dc.idx(tq, i, j, idx.r(p));
                    dc.data[e] = dv;
                    let e = dc.idx(tq, j, i, idx.r(p));
                    dc.data[e] = -dv;
                }
            }
        }
        for p in 0..k {
            let rp = idx.r(p);
            for i in 0..m {
                let base = ac.dr(i, q, p);
                put(&mut c, tq, rp, i, base * rq);
                for l in 0..m {
                    let dv = ac.dxr(i, q, l, p) * rq;
                    let e = dc.idx(tq, rp, i, l);
                    dc.data[e] = dv;
                    let e = dc.idx(tq, i, rp, l);
                    dc.data[e] = -dv;
                }
                for t in 0..k {
                    let mut dv = ac.drr(i, q, p, t) * rq;
                    if t == q {
                        dv += base;
                    }
                    let e = dc.idx(tq, rp, i, idx.r(t));
                    dc.data[e] = dv;
                    let e = dc.idx(tq, i, rp, idx.r(t));
                    dc.data[e] = -dv;
                }
            }
        }
        // [r̂_q, θ̂_q] = -(1/r_q) θ̂_q
        let rqi = idx.r(q);
        put(&mut c, tq, rqi, tq, -1.0 / rq);
        let e = dc.idx(tq, rqi, tq, rqi);
        dc.data[e] = 1.0 / (rq * rq);
        let e = dc.idx(tq, tq, rqi, rqi);
        dc.data[e] = -1.0 / (rq * rq);
    }
    Ok(StructureConstants { c, dc })
}

/// `Γ[γ][α][β] = ½ (c[γ][β][α] + c[β][γ][α] + c[α][γ][β])`.
pub fn christoffels(c: &Tensor3) -> Tensor3 {
    let n = c.n;
    let mut g = Tensor3::zeros(n);
    for gam in 0..n {
        for a in 0..n {
            for b in 0..n {
                let v = 0.5 * (c.get(gam, b, a) + c.get(b, gam, a) + c.get(a, gam, b));
                if v != 0.0 {
                    g.set(gam, a, b, v);
                }
            }
        }
    }
    g
}

/// `dΓ[γ][α][β][δ] = E_δ(Γ^γ_αβ)`, the same linear combination applied to `dc`.
pub fn christoffel_derivatives(dc: &Tensor4) -> Tensor4 {
    let n = dc.n;
    let mut out = Tensor4::zeros(n);
    for gam in 0..n {
        for a in 0..n {
            for b in 0..n {
                for d in 0..n {
                    let v = 0.5 * (dc.get(gam, b, a, d) + dc.get(b, gam, a, d) + dc.get(a, gam, b, d));
                    if v != 0.0 {
                        let e = out.idx(gam, a, b, d);
                        out.data[e] = v;
                    }
                }
            }
        }
    }
    out
}

/// Riemann tensor, Ricci tensor and scalar curvature at one point.
#[derive(Debug, Clone)]
pub struct Curvature {
    pub riem: Tensor4,
    /// Row-major `n x n`.
    pub ric: Vec<f64>,
    pub tau: f64,
}

/// `R_αβγδ = Γ^α_μγ Γ^μ_βδ - Γ^α_μδ Γ^μ_βγ - c^μ_γδ Γ^α_βμ + Γ^α_βδ,γ - Γ^α_βγ,δ`.
pub fn riemann(gamma: &Tensor3, dgamma: &Tensor4, c: &Tensor3) -> Curvature {
    let n = gamma.n;
    // nonzero Γ^μ_βδ grouped by upper index μ, and Γ^α_βμ grouped by last index μ
    let mut by_upper: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
    let mut by_last: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
    for mu in 0..n {
        for b in 0..n {
            for d in 0..n {
                let v = gamma.get(mu, b, d);
                if v != 0.0 {
                    by_upper[mu].push((b, d, v));
                    by_last[d].push((mu, b, v));
                }
            }
        }
    }
    // t[α][β][γ][δ] = sum_μ Γ^α_μγ Γ^μ_βδ + Γ^α_βδ,γ
    let mut t = Tensor4::zeros(n);
    for a in 0..n {
        for mu in 0..n {
            for gm in 0..n {
                let g1 = gamma.get(a, mu, gm);
                if g1 == 0.0 {
                    continue;
                }
                for &(b, d, g2) in &by_upper[mu] {
                    let e = t.idx(a, b, gm, d);
                    t.data[e] += g1 * g2;
                }
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            for d in 0..n {
                for gm in 0..n {
                    let e = t.idx(a, b, gm, d);
                    t.data[e] += dgamma.get(a, b, d, gm);
                }
            }
        }
    }
    let mut riem = Tensor4::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for gm in 0..n {
                for d in 0..n {
                    let e = riem.idx(a, b, gm, d);
                    riem.data[e] = t.get(a, b, gm, d) - t.get(a, b, d, gm);
                }
            }
        }
    }
    for gm in 0..n {
        for d in 0..n {
            for mu in 0..n {
                let cv = c.get(mu, gm, d);
                if cv == 0.0 {
                    continue;
                }
                for &(a, b, gv) in &by_last[mu] {
                    let e = riem.idx(a, b, gm, d);
                    riem.data[e] -= cv * gv;
                }
            }
        }
    }
    let mut ric = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            ric[a * n + b] = (0..n).map(|g| riem.get(a, g, b, g)).sum();
        }
    }
    let tau = (0..n).map(|a| ric[a * n + a]).sum();
    Curvature { riem, ric, tau }
}

/// `(4π)^{-n/2} / 360`.
pub fn a2_prefactor(n: usize) -> f64 {
    (4.0 * PI).powf(-(n as f64) / 2.0) / 360.0
}

/// Everything the frame engine computes at one point `(x, r)`.
#[derive(Debug, Clone)]
pub struct FrameCurvature {
    pub index: FrameIndexSets,
    pub sc: StructureConstants,
    pub gamma: Tensor3,
    pub dgamma: Tensor4,
    pub curvature: Curvature,
    pub norm_ric_sq: f64,
    pub norm_riem_sq: f64,
    pub a2_integrand: f64,
}

/// Which frame quantity to differentiate in [`frame_derivative`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameQuantity {
    StructureConstant(usize, usize, usize),
    Christoffel(usize, usize, usize),
}

impl FrameCurvature {
    pub fn compute(b: &Bracket, profile: &CutoffProfile, x: &[f64], r: &[f64]) -> Result<Self> {
        let ac = a_coeffs(b, profile, x, r)?;
        let sc = structure_constants(&ac, r)?;
        let gamma = christoffels(&sc.c);
        let dgamma = christoffel_derivatives(&sc.dc);
        let curvature = riemann(&gamma, &dgamma, &sc.c);
        let n = gamma.n;
        let norm_ric_sq = curvature.ric.iter().map(|v| v * v).sum();
        let norm_riem_sq = curvature.riem.norm_sq();
        let a2_integrand = a2_prefactor(n)
            * (5.0 * curvature.tau * curvature.tau - 2.0 * norm_ric_sq + 2.0 * norm_riem_sq);
        Ok(Self {
            index: FrameIndexSets::new(b.m(), b.k()),
            sc,
            gamma,
            dgamma,
            curvature,
            norm_ric_sq,
            norm_riem_sq,
            a2_integrand,
        })
    }

    pub fn riem(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.curvature.riem.get(a, b, c, d)
    }

    pub fn ric(&self, a: usize, b: usize) -> f64 {
        self.curvature.ric[a * self.index.n() + b]
    }

    pub fn tau(&self) -> f64 {
        self.curvature.tau
    }

    /// Largest violations of the algebraic curvature identities, relative to
    /// `max |R|` (absolute when the tensor vanishes):
    /// `(R_αβγδ + R_βαγδ, R_αβγδ + R_αβδγ, R_αβγδ - R_γδαβ, first Bianchi)`.
    pub fn symmetry_defects(&self) -> [f64; 4] {
        let n = self.index.n();
        let r = &self.curvature.riem;
        let scale = r.max_abs().max(1.0e-300);
        let scale = if r.max_abs() == 0.0 { 1.0 } else { scale };
        let mut out = [0.0_f64; 4];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let v = r.get(a, b, c, d);
                        out[0] = out[0].max((v + r.get(b, a, c, d)).abs());
                        out[1] = out[1].max((v + r.get(a, b, d, c)).abs());
                        out[2] = out[2].max((v - r.get(c, d, a, b)).abs());
                        out[3] = out[3].max((v + r.get(a, c, d, b) + r.get(a, d, b, c)).abs());
                    }
                }
            }
        }
        out.map(|v| v / scale)
    }
}

/// `E_δ` applied to a structure constant or Christoffel symbol, read from
/// the analytic second partials of `a`. Zero for `δ` in the angular block.
pub fn frame_derivative(fc: &FrameCurvature, quantity: FrameQuantity, delta: usize) -> f64 {
    match quantity {
        FrameQuantity::StructureConstant(g, a, b) => fc.sc.dc.get(g, a, b, delta),
        FrameQuantity::Christoffel(g, a, b) => fc.dgamma.get(g, a, b, delta),
    }
}

/// `((4π)^{-n/2}/360)(5τ² - 2|Ric|² + 2|R|²)` at `(x, r)`.
pub fn a2_integrand(b: &Bracket, profile: &CutoffProfile, x: &[f64], r: &[f64]) -> Result<f64> {
    let rmin = r_min(profile);
    if let Some(&bad) = r.iter().find(|&&v| !(v > rmin)) {
        return Err(Error::DegeneratePoint { r: bad, r_min: rmin });
    }
    let t1: f64 = x.iter().map(|v| v * v).sum();
    let t2: f64 = r.iter().map(|v| v * v).sum();
    // flat outside the open support, where phi vanishes to infinite order
    if b.is_zero() || !profile.in_support(t1, t2) {
        return Ok(0.0);
    }
    Ok(FrameCurvature::compute(b, profile, x, r)?.a2_integrand)
}

/// Least-squares estimate of the degree `d` in `f^s(x, r) = s^d f^1(x, s r)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DegreeFit {
    pub degree: f64,
    pub intercept: f64,
    /// Root-mean-square deviation of the log-log fit.
    pub residual: f64,
    pub samples: usize,
}

/// Fits `log|f^s(x, r)| - log|f^1(x, s r)|` against `log s`.
pub fn degree_probe(
    family: impl Fn(f64, &[f64], &[f64]) -> Result<f64>,
    x: &[f64],
    r: &[f64],
    s_list: &[f64],
) -> Result<DegreeFit> {
    let mut pts = Vec::new();
    for &s in s_list {
        let scaled: Vec<f64> = r.iter().map(|v| v * s).collect();
        let fs = family(s, x, r)?;
        let f1 = family(1.0, x, &scaled)?;
        if fs == 0.0 || f1 == 0.0 {
            continue;
        }
        pts.push((s.ln(), fs.abs().ln() - f1.abs().ln()));
    }
    if pts.is_empty() {
        return Err(Error::AllZeroSamples);
    }
    let npts = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / npts;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / npts;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "degree probe needs at least two distinct scales".into(),
        ));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let degree = sxy / sxx;
    let intercept = my - degree * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - degree * p.0).powi(2))
        .sum::<f64>()
        / npts)
        .sqrt();
    Ok(DegreeFit {
        degree,
        intercept,
        residual,
        samples: pts.len(),
    })
}

/// Splits `s -> f^s(x, rho / s)` into homogeneous parts: if
/// `f^s = sum_d f_d^s` with `f_d^s(x, r) = s^d f_d^1(x, s r)`, then
/// `f^s(x, rho / s) = sum_d s^d f_d^1(x, rho)`, a Laurent polynomial in `s`.
/// Returns the least-squares coefficients for `exponents` and the largest
/// absolute residual.
pub fn homogeneous_parts(
    family: impl Fn(f64, &[f64], &[f64]) -> Result<f64>,
    x: &[f64],
    rho: &[f64],
    exponents: &[i32],
    s_list: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let mut rows = Vec::with_capacity(s_list.len());
    let mut rhs = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let r: Vec<f64> = rho.iter().map(|v| v / s).collect();
        rhs.push(family(s, x, &r)?);
        rows.push(exponents.iter().map(|&d| s.powi(d)).collect::<Vec<_>>());
    }
    let fit = crate::fit::least_squares(&rows, &rhs)?;
    Ok((fit.coefficients, fit.max_abs_residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bracket::{example_bracket, ExampleBracket};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interior(seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-0.5..0.5)).collect();
            let r: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..0.55)).collect();
            let t1: f64 = x.iter().map(|v| v * v).sum();
            let t2: f64 = r.iter().map(|v| v * v).sum();
            if t1 < 0.8 && t2 < 0.8 {
                return (x, r);
            }
        }
    }

    #[test]
    fn a_vanishes_at_origin_but_not_its_gradient() {
        let b = example_bracket(ExampleBracket::Cross1);
        let ac = a_coeffs(&b, &CutoffProfile::reference(), &[0.0; 6], &[0.3, 0.2, 0.1]).unwrap();
        assert!(ac.is_zero());
        // ∂a_{1,3}/∂x_0 = phi * lambda[2][0][1] = phi
        assert!(ac.dx(1, 2, 0).abs() > 0.1);
    }

    #[test]
    fn a_partials_match_symbolic_oracle() {
        // Cross1, i = 1 (e_2), p = 2 (Z_3): <[x, e_2], Z_3> = x_1 (first coordinate).
        // With the reference profile, phi = b(t1) b(t2), so a = b(t1) b(t2) x_1 and
        // ∂²a/∂r_0² = x_1 b(t1) (2 b'(t2) + 4 r_0² b''(t2)).
        let b = example_bracket(ExampleBracket::Cross1);
        let prof = CutoffProfile::reference();
        let x = [0.21, -0.13, 0.3, 0.05, -0.2, 0.1];
        let r = [0.25, 0.4, 0.15];
        let ac = a_coeffs(&b, &prof, &x, &r).unwrap();
        let t1: f64 = x.iter().map(|v| v * v).sum();
        let t2: f64 = r.iter().map(|v| v * v).sum();
        let w1 = 1.0 - t1;
        let w2 = 1.0 - t2;
        let b1 = (1.0 - 1.0 / w1).exp();
        let b2 = (1.0 - 1.0 / w2).exp();
        let db2 = -b2 / (w2 * w2);
        let ddb2 = b2 * (2.0 * t2 - 1.0) / w2.powi(4);
        let db1 = -b1 / (w1 * w1);
        assert_relative_eq!(ac.a(1, 2), b1 * b2 * x[0], max_relative = 1e-12);
        assert_relative_eq!(
            ac.drr(1, 2, 0, 0),
            x[0] * b1 * (2.0 * db2 + 4.0 * r[0] * r[0] * ddb2),
            max_relative = 1e-12
        );
        // ∂a/∂x_0 = 2 x_0 b1' b2 x_0 + b1 b2
        assert_relative_eq!(
            ac.dx(1, 2, 0),
            2.0 * x[0] * db1 * b2 * x[0] + b1 * b2,
            max_relative = 1e-12
        );
        // ∂²a/∂x_0∂r_1 = 2 r_1 b2' (2 x_0² b1' + b1)
        assert_relative_eq!(
            ac.dxr(1, 2, 0, 1),
            2.0 * r[1] * db2 * (2.0 * x[0] * x[0] * db1 + b1),
            max_relative = 1e-12
        );
    }

    #[test]
    fn a_partials_match_finite_differences() {
        let b = example_bracket(ExampleBracket::Quaternion);
        let prof = CutoffProfile::new(1.2, 0.9, 1.5).unwrap().with_scale(1.3).unwrap();
        let (x, r) = interior(2);
        let ac = a_coeffs(&b, &prof, &x, &r).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            for p in 0..3 {
                for j in 0..6 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let ap = a_coeffs(&b, &prof, &xp, &r).unwrap();
                    let am = a_coeffs(&b, &prof, &xm, &r).unwrap();
                    let fd = (ap.a(i, p) - am.a(i, p)) / (2.0 * h);
                    assert!((fd - ac.dx(i, p, j)).abs() < 1e-7);
                    for l in 0..6 {
                        let fd2 = (ap.dx(i, p, l) - am.dx(i, p, l)) / (2.0 * h);
                        assert!((fd2 - ac.dxx(i, p, l, j)).abs() < 1e-6);
                    }
                    for q in 0..3 {
                        let fd2 = (ap.dr(i, p, q) - am.dr(i, p, q)) / (2.0 * h);
                        assert!((fd2 - ac.dxr(i, p, j, q)).abs() < 1e-6);
                    }
                }
                for q in 0..3 {
                    let mut rp = r.clone();
                    let mut rm = r.clone();
                    rp[q] += h;
                    rm[q] -= h;
                    let ap = a_coeffs(&b, &prof, &x, &rp).unwrap();
                    let am = a_coeffs(&b, &prof, &x, &rm).unwrap();
                    assert!(((ap.a(i, p) - am.a(i, p)) / (2.0 * h) - ac.dr(i, p, q)).abs() < 1e-7);
                    for t in 0..3 {
                        let fd2 = (ap.dr(i, p, t) - am.dr(i, p, t)) / (2.0 * h);
                        assert!((fd2 - ac.drr(i, p, t, q)).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_bracket_has_only_flat_polar_constants_and_no_curvature() {
        let b = Bracket::zero(6, 3);
        let prof = CutoffProfile::reference();
        let (x, r) = interior(5);
        let fc = FrameCurvature::compute(&b, &prof, &x, &r).unwrap();
        let idx = fc.index;
        for g in 0..12 {
            for a in 0..12 {
                for bb in 0..12 {
                    let v = fc.sc.c.get(g, a, bb);
                    let expect = (0..3)
                        .map(|q| {
                            if g == idx.theta(q) && a == idx.r(q) && bb == idx.theta(q) {
                                -1.0 / r[q]
                            } else if g == idx.theta(q) && a == idx.theta(q) && bb == idx.r(q) {
                                1.0 / r[q]
                            } else {
                                0.0
                            }
                        })
                        .sum::<f64>();
                    assert_eq!(v, expect);
                }
            }
        }
        assert!(fc.curvature.riem.max_abs() < 1e-10);
        assert_eq!(a2_integrand(&b, &prof, &x, &r).unwrap(), 0.0);
    }

    #[test]
    fn frame_tensor_identities() {
        let b = example_bracket(ExampleBracket::Cross2);
        let prof = CutoffProfile::new(1.0, 1.0, 2.0).unwrap();
        for seed in 0..10 {
            let (x, r) = interior(seed);
            let fc = FrameCurvature::compute(&b, &prof, &x, &r).unwrap();
            let n = 12;
            let (c, g) = (&fc.sc.c, &fc.gamma);
            for a in 0..n {
                for bb in 0..n {
                    for gm in 0..n {
                        assert_eq!(c.get(gm, a, bb), -c.get(gm, bb, a));
                        assert!((g.get(gm, a, bb) + g.get(a, gm, bb)).abs() < 1e-14);
                        // torsion-free: Γ^γ_αβ - Γ^γ_βα = c^γ_βα
                        assert!((g.get(gm, a, bb) - g.get(gm, bb, a) - c.get(gm, bb, a)).abs() < 1e-14);
                    }
                }
            }
            for d in fc.symmetry_defects() {
                assert!(d < 1e-9, "{:?}", fc.symmetry_defects());
            }
        }
    }

    #[test]
    fn structure_constant_scaling_laws() {
        // c^s[θ̂; x̂, x̂](x, r) = s^{-1} c^1(x, s r) and c^s[θ̂; r̂, x̂](x, r) = c^1(x, s r)
        let b = example_bracket(ExampleBracket::Quaternion);
        let base = CutoffProfile::reference();
        let (x, r) = interior(7);
        let idx = FrameIndexSets::new(6, 3);
        for &s in &[0.5, 1.5, 2.0] {
            let ps = base.with_scale(s).unwrap();
            let rs: Vec<f64> = r.iter().map(|v| v * s).collect();
            let cs = structure_constants(&a_coeffs(&b, &ps, &x, &r).unwrap(), &r).unwrap().c;
            let c1 = structure_constants(&a_coeffs(&b, &base, &x, &rs).unwrap(), &rs).unwrap().c;
            for q in 0..3 {
                for i in 0..6 {
                    for j in 0..6 {
                        let lhs = cs.get(idx.theta(q), i, j);
                        let rhs = c1.get(idx.theta(q), i, j) / s;
                        assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-300) + 1e-300 || (lhs - rhs).abs() < 1e-14);
                    }
                    for p in 0..3 {
                        let lhs = cs.get(idx.theta(q), idx.r(p), i);
                        let rhs = c1.get(idx.theta(q), idx.r(p), i);
                        assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs() + 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn frame_derivatives_match_finite_differences() {
        let b = example_bracket(ExampleBracket::Cross1);
        let prof = CutoffProfile::new(1.0, 1.0, 1.3).unwrap();
        let (x, r) = interior(11);
        let fc = FrameCurvature::compute(&b, &prof, &x, &r).unwrap();
        let idx = fc.index;
        let h = 1e-5;
        let mut worst = 0.0_f64;
        for delta in 0..(6 + 3) {
            let (mut xp, mut xm, mut rp, mut rm) = (x.clone(), x.clone(), r.clone(), r.clone());
            if delta < 6 {
                xp[delta] += h;
                xm[delta] -= h;
            } else {
                rp[delta - 6] += h;
                rm[delta - 6] -= h;
            }
            let fp = FrameCurvature::compute(&b, &prof, &xp, &rp).unwrap();
            let fm = FrameCurvature::compute(&b, &prof, &xm, &rm).unwrap();
            for g in 0..12 {
                for a in 0..12 {
                    for bb in 0..12 {
                        let fd = (fp.gamma.get(g, a, bb) - fm.gamma.get(g, a, bb)) / (2.0 * h);
                        let an = frame_derivative(&fc, FrameQuantity::Christoffel(g, a, bb), delta);
                        worst = worst.max((fd - an).abs() / (1.0 + an.abs()));
                        let fd = (fp.sc.c.get(g, a, bb) - fm.sc.c.get(g, a, bb)) / (2.0 * h);
                        let an = frame_derivative(&fc, FrameQuantity::StructureConstant(g, a, bb), delta);
                        worst = worst.max((fd - an).abs() / (1.0 + an.abs()));
                    }
                }
            }
        }
        assert!(worst < 1e-6, "worst relative FD mismatch {worst:e}");
        for q in 0..3 {
            let any = FrameQuantity::Christoffel(idx.theta(0), 0, 1);
            assert_eq!(frame_derivative(&fc, any, idx.theta(q)), 0.0);
        }
    }

    #[test]
    fn degenerate_points_are_rejected() {
        let b = example_bracket(ExampleBracket::Cross1);
        let prof = CutoffProfile::reference();
        let err = FrameCurvature::compute(&b, &prof, &[0.1; 6], &[0.2, 0.0, 0.3]).unwrap_err();
        assert!(matches!(err, Error::DegeneratePoint { .. }));
        assert!(a2_integrand(&b, &prof, &[0.1; 6], &[1e-9, 0.2, 0.3]).is_err());
    }

    #[test]
    fn integrand_is_zero_outside_support_and_for_zero_bracket() {
        let b = example_bracket(ExampleBracket::Cross1);
        let prof = CutoffProfile::reference();
        assert_eq!(a2_integrand(&b, &prof, &[0.5, 0.5, 0.5, 0.5, 0.0, 0.0], &[0.1, 0.1, 0.1]).unwrap(), 0.0);
        let (x, r) = interior(1);
        assert_eq!(a2_integrand(&Bracket::zero(6, 3), &prof, &x, &r).unwrap(), 0.0);
        assert!(a2_integrand(&b, &prof, &x, &r).unwrap() != 0.0);
    }

    #[test]
    fn degree_probe_recovers_known_degrees() {
        let b = example_bracket(ExampleBracket::Cross1);
        let base = CutoffProfile::reference();
        let (x, r) = interior(3);
        let idx = FrameIndexSets::new(6, 3);
        let s_list = [0.5, 0.8, 1.25, 2.0];
        let a_fam = |s: f64, x: &[f64], r: &[f64]| -> Result<f64> {
            Ok(a_coeffs(&b, &base.with_scale(s)?, x, r)?.a(1, 2))
        };
        let fit = degree_probe(a_fam, &x, &r, &s_list).unwrap();
        assert!(fit.degree.abs() < 1e-8 && fit.residual < 1e-8, "{fit:?}");
        let c_fam = |s: f64, x: &[f64], r: &[f64]| -> Result<f64> {
            let ac = a_coeffs(&b, &base.with_scale(s)?, x, r)?;
            Ok(structure_constants(&ac, r)?.c.get(idx.theta(2), 0, 1))
        };
        let fit = degree_probe(c_fam, &x, &r, &s_list).unwrap();
        assert!((fit.degree + 1.0).abs() < 1e-8, "{fit:?}");
        let zero = |_: f64, _: &[f64], _: &[f64]| -> Result<f64> { Ok(0.0) };
        assert!(matches!(degree_probe(zero, &x, &r, &s_list), Err(Error::AllZeroSamples)));
    }

    #[test]
    fn scalars_are_independent_of_angles() {
        // the engine never sees θ, so check the claim on the Cartesian metric
        use crate::metric::Point;
        use crate::oracle::{scalar_invariants_fd, FDScheme};
        let b = example_bracket(ExampleBracket::Quaternion);
        let prof = CutoffProfile::reference();
        let (x, r) = interior(4);
        let at = |theta: &[f64]| {
            let p = Point::from_polar(x.clone(), &r, theta);
            scalar_invariants_fd(&b, &prof, &p, &FDScheme::default()).unwrap()
        };
        let (s0, s1) = (at(&[0.0, 0.0, 0.0]), at(&[1.3, -2.1, 0.4]));
        let frame = a2_integrand(&b, &prof, &x, &r).unwrap();
        assert!((s0.tau - s1.tau).abs() < 1e-6 * s0.tau.abs().max(1.0));
        assert!((s0.a2_integrand - s1.a2_integrand).abs() < 1e-4 * frame.abs());
        assert!((s1.a2_integrand - frame).abs() < 1e-4 * frame.abs());
    }
}
