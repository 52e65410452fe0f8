//! Slow, independent curvature in Cartesian coordinates by finite differences
//! of the metric matrix. Works at points where the polar frame degenerates
//! and serves as the reference for the frame engine's sign conventions.
//!
//! Conventions: `Γ^λ_μν = ½ G^λσ (∂_μ G_σν + ∂_ν G_σμ - ∂_σ G_μν)`,
//! `R^λ_σμν = ∂_μ Γ^λ_νσ - ∂_ν Γ^λ_μσ + Γ^λ_μκ Γ^κ_νσ - Γ^λ_νκ Γ^κ_μσ`, so that
//! `R_ρσμν = g(R(∂_μ, ∂_ν) ∂_σ, ∂_ρ)` and `Ric_σν = R^μ_σμν`. Round spheres
//! have positive scalar curvature.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bracket::Bracket;
use crate::error::{Error, Result};
use crate::frame::{a2_prefactor, Tensor3};
use crate::metric::{metric_matrix_unchecked, CutoffProfile, Point};

/// A smooth field of symmetric positive-definite matrices on `R^n`.
pub trait MetricField {
    fn dim(&self) -> usize;
    fn matrix(&self, v: &[f64]) -> DMatrix<f64>;
}

/// The bracket metric as a field on `R^{m+2k}` with coordinates `(x, u)`.
pub struct BracketMetricField<'a> {
    pub bracket: &'a Bracket,
    pub profile: &'a CutoffProfile,
}

impl MetricField for BracketMetricField<'_> {
    fn dim(&self) -> usize {
        self.bracket.m() + 2 * self.bracket.k()
    }

    fn matrix(&self, v: &[f64]) -> DMatrix<f64> {
        let m = self.bracket.m();
        metric_matrix_unchecked(self.bracket, self.profile, &v[..m], &v[m..])
    }
}

/// `e^{2 f} I` on `R^2` with `f = amplitude |x|^2 beta(|x|^2)`, where the
/// smooth step `beta` is 1 for `|x| <= 1` and 0 for `|x| >= 2`.
#[derive(Debug, Clone, Copy)]
pub struct ConformalTestField {
    pub amplitude: f64,
}

fn smooth_step_down(t: f64) -> f64 {
    let h = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let (a, b) = (h(4.0 - t), h(t - 1.0));
    a / (a + b)
}

impl ConformalTestField {
    pub fn f(&self, v: &[f64]) -> f64 {
        let t = v[0] * v[0] + v[1] * v[1];
        self.amplitude * t * smooth_step_down(t)
    }

    /// `-2 e^{-2f} Δf`, valid where `beta = 1` (`Δf = 4 amplitude` there).
    pub fn plateau_scalar_curvature(&self, v: &[f64]) -> f64 {
        -8.0 * self.amplitude * (-2.0 * self.f(v)).exp()
    }
}

impl MetricField for ConformalTestField {
    fn dim(&self) -> usize {
        2
    }

    fn matrix(&self, v: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * (2.0 * self.f(v)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FdOrder {
    Second,
    Fourth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FDScheme {
    pub h: f64,
    pub richardson: bool,
    pub order: FdOrder,
}

impl Default for FDScheme {
    fn default() -> Self {
        Self {
            h: 1e-3,
            richardson: true,
            order: FdOrder::Fourth,
        }
    }
}

impl FDScheme {
    /// Order 4 with Richardson and `h = 1e-3 * max(R1, R2)`.
    pub fn for_profile(profile: &CutoffProfile) -> Self {
        Self {
            h: 1e-3 * profile.radius_scale(),
            ..Self::default()
        }
    }

    /// `h` must sit within `[1e-6, 1e-2]` of the length scale.
    pub fn validate(&self, scale: f64) -> Result<()> {
        if !(self.h >= 1e-6 * scale && self.h <= 1e-2 * scale) {
            return Err(Error::InvalidArgument(format!(
                "finite-difference step {} outside [1e-6, 1e-2] x {scale}",
                self.h
            )));
        }
        Ok(())
    }

    fn stencil_order(&self) -> i32 {
        match self.order {
            FdOrder::Second => 2,
            FdOrder::Fourth => 4,
        }
    }
}

fn shifted(v: &[f64], dir: usize, by: f64) -> Vec<f64> {
    let mut w = v.to_vec();
    w[dir] += by;
    w
}

fn central(f: &dyn Fn(&[f64]) -> DMatrix<f64>, v: &[f64], dir: usize, h: f64, order: FdOrder) -> DMatrix<f64> {
    match order {
        FdOrder::Second => (f(&shifted(v, dir, h)) - f(&shifted(v, dir, -h))) / (2.0 * h),
        FdOrder::Fourth => {
            let p1 = f(&shifted(v, dir, h));
            let m1 = f(&shifted(v, dir, -h));
            let p2 = f(&shifted(v, dir, 2.0 * h));
            let m2 = f(&shifted(v, dir, -2.0 * h));
            ((p1 - m1) * 8.0 - (p2 - m2)) / (12.0 * h)
        }
    }
}

/// `∂f/∂v_dir` by the scheme.
pub fn fd_derivative(
    f: &dyn Fn(&[f64]) -> DMatrix<f64>,
    v: &[f64],
    dir: usize,
    scheme: &FDScheme,
) -> DMatrix<f64> {
    let d1 = central(f, v, dir, scheme.h, scheme.order);
    if !scheme.richardson {
        return d1;
    }
    let d2 = central(f, v, dir, 0.5 * scheme.h, scheme.order);
    let w = 2f64.powi(scheme.stencil_order());
    (d2 * w - d1) / (w - 1.0)
}

/// `G`, `G^{-1}`, `∂G` and optionally `∂∂G` at one point.
pub struct MetricJet {
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    pub dg: Vec<DMatrix<f64>>,
    /// `d2g[a * n + b] = ∂_a ∂_b G`; empty for first-order jets.
    pub d2g: Vec<DMatrix<f64>>,
}

impl MetricJet {
    /// `∂_a G^{-1} = -G^{-1} (∂_a G) G^{-1}`.
    pub fn dginv(&self, a: usize) -> DMatrix<f64> {
        -(&self.ginv * &self.dg[a] * &self.ginv)
    }
}

fn invert(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lu = g.clone().lu();
    let det = lu.determinant();
    let scale = g.amax().powi(g.nrows() as i32);
    if !(det.abs() > 1e-12 * scale) {
        return Err(Error::IllConditioned(format!("det G = {det:e}")));
    }
    lu.try_inverse()
        .ok_or_else(|| Error::IllConditioned("G is singular".into()))
}

pub fn metric_jet(field: &dyn MetricField, v: &[f64], scheme: &FDScheme, second: bool) -> Result<MetricJet> {
    let n = field.dim();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            what: "oracle point",
            expected: n,
            found: v.len(),
        });
    }
    let g = field.matrix(v);
    let ginv = invert(&g)?;
    let f = |w: &[f64]| field.matrix(w);
    let dg: Vec<DMatrix<f64>> = (0..n).map(|a| fd_derivative(&f, v, a, scheme)).collect();
    let mut d2g = Vec::new();
    if second {
        d2g = vec![DMatrix::zeros(n, n); n * n];
        for a in 0..n {
            for b in a..n {
                let inner = |w: &[f64]| fd_derivative(&f, w, b, scheme);
                let d = fd_derivative(&inner, v, a, scheme);
                let sym = (&d + d.transpose()) * 0.5;
                d2g[a * n + b] = sym.clone();
                d2g[b * n + a] = sym;
            }
        }
    }
    Ok(MetricJet { g, ginv, dg, d2g })
}

/// Coordinate curvature data at one point. Rank-3 and rank-4 arrays are
/// dense row-major over `n`.
#[derive(Debug, Clone)]
pub struct CoordCurvature {
    pub n: usize,
    /// `Γ^λ_μν` at `[λ][μ][ν]`.
    pub gamma: Vec<f64>,
    /// `R_ρσμν` at `[ρ][σ][μ][ν]`.
    pub riem: Vec<f64>,
    /// `Ric_σν`.
    pub ric: Vec<f64>,
    pub invariants: ScalarInvariants,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarInvariants {
    pub tau: f64,
    pub norm_ric_sq: f64,
    pub norm_riem_sq: f64,
    pub a2_integrand: f64,
}

fn lowered_christoffels(jet: &MetricJet, d: Option<usize>) -> Vec<f64> {
    // Γ_σμν = ½(∂_μ G_σν + ∂_ν G_σμ - ∂_σ G_μν), or its ∂_d derivative
    let n = jet.g.nrows();
    let dd = |a: usize| -> &DMatrix<f64> {
        match d {
            None => &jet.dg[a],
            Some(d) => &jet.d2g[d * n + a],
        }
    };
    let mut out = vec![0.0; n * n * n];
    for s in 0..n {
        for mu in 0..n {
            for nu in 0..n {
                out[(s * n + mu) * n + nu] =
                    0.5 * (dd(mu)[(s, nu)] + dd(nu)[(s, mu)] - dd(s)[(mu, nu)]);
            }
        }
    }
    out
}

/// Contracts `ginv` into the first slot of a dense tensor of any rank.
fn raise_first(ginv: &DMatrix<f64>, low: &[f64]) -> Vec<f64> {
    let n = ginv.nrows();
    let nn = low.len() / n;
    let mut out = vec![0.0; low.len()];
    for l in 0..n {
        for s in 0..n {
            let gi = ginv[(l, s)];
            if gi == 0.0 {
                continue;
            }
            for t in 0..nn {
                out[l * nn + t] += gi * low[s * nn + t];
            }
        }
    }
    out
}

pub fn coord_christoffels(jet: &MetricJet) -> Vec<f64> {
    raise_first(&jet.ginv, &lowered_christoffels(jet, None))
}

pub fn coord_curvature(field: &dyn MetricField, v: &[f64], scheme: &FDScheme) -> Result<CoordCurvature> {
    let jet = metric_jet(field, v, scheme, true)?;
    let n = jet.g.nrows();
    let n3 = n * n * n;
    let low = lowered_christoffels(&jet, None);
    let gamma = raise_first(&jet.ginv, &low);
    // dgamma[d][λ][μ][ν] = ∂_d Γ^λ_μν
    let mut dgamma = vec![0.0; n * n3];
    for d in 0..n {
        let dlow = lowered_christoffels(&jet, Some(d));
        let a = raise_first(&jet.ginv, &dlow);
        let b = raise_first(&jet.dginv(d), &low);
        for t in 0..n3 {
            dgamma[d * n3 + t] = a[t] + b[t];
        }
    }
    let gi = |l: usize, mu: usize, nu: usize| gamma[(l * n + mu) * n + nu];
    let dgi = |d: usize, l: usize, mu: usize, nu: usize| dgamma[d * n3 + (l * n + mu) * n + nu];
    // R^λ_σμν
    let mut up = vec![0.0; n * n3];
    for l in 0..n {
        for s in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    let mut v = dgi(mu, l, nu, s) - dgi(nu, l, mu, s);
                    for kk in 0..n {
                        v += gi(l, mu, kk) * gi(kk, nu, s) - gi(l, nu, kk) * gi(kk, mu, s);
                    }
                    up[((l * n + s) * n + mu) * n + nu] = v;
                }
            }
        }
    }
    let riem = raise_first(&jet.g, &up);
    let mut ric = vec![0.0; n * n];
    for s in 0..n {
        for nu in 0..n {
            ric[s * n + nu] = (0..n).map(|mu| up[((mu * n + s) * n + mu) * n + nu]).sum();
        }
    }
    let gv = |a: usize, b: usize| jet.ginv[(a, b)];
    let tau: f64 = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .map(|(a, b)| gv(a, b) * ric[a * n + b])
        .sum();
    // Ric^a_b then |Ric|^2 = Ric^a_b Ric^b_a
    let ric_m = DMatrix::from_row_slice(n, n, &ric);
    let mixed = &jet.ginv * &ric_m;
    let norm_ric_sq = (&mixed * &mixed).trace();
    // raise all four indices of R_ρσμν one slot at a time
    let mut all_up = riem.clone();
    for slot in 0..4 {
        all_up = raise_slot(&jet.ginv, &all_up, slot);
    }
    let norm_riem_sq: f64 = riem.iter().zip(&all_up).map(|(a, b)| a * b).sum();
    let a2_integrand =
        a2_prefactor(n) * (5.0 * tau * tau - 2.0 * norm_ric_sq + 2.0 * norm_riem_sq);
    Ok(CoordCurvature {
        n,
        gamma,
        riem,
        ric,
        invariants: ScalarInvariants {
            tau,
            norm_ric_sq,
            norm_riem_sq,
            a2_integrand,
        },
    })
}

/// Contracts `ginv[(a, b)]` against slot `slot` of a rank-4 tensor.
fn raise_slot(ginv: &DMatrix<f64>, t: &[f64], slot: usize) -> Vec<f64> {
    let n = ginv.nrows();
    let stride = n.pow(3 - slot as u32);
    let mut out = vec![0.0; t.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let a = (idx / stride) % n;
        let base = idx - a * stride;
        let mut acc = 0.0;
        for b in 0..n {
            acc += ginv[(a, b)] * t[base + b * stride];
        }
        *o = acc;
    }
    out
}

fn bracket_point(b: &Bracket, p: &Point) -> Result<Vec<f64>> {
    if p.x.len() != b.m() || p.u.len() != 2 * b.k() {
        return Err(Error::DimensionMismatch {
            what: "oracle point",
            expected: b.m() + 2 * b.k(),
            found: p.x.len() + p.u.len(),
        });
    }
    Ok(p.flat())
}

/// Coordinate Christoffel symbols `Γ^λ_μν` at `[λ][μ][ν]`.
pub fn christoffel_fd(b: &Bracket, profile: &CutoffProfile, p: &Point, scheme: &FDScheme) -> Result<Vec<f64>> {
    let field = BracketMetricField { bracket: b, profile };
    let jet = metric_jet(&field, &bracket_point(b, p)?, scheme, false)?;
    Ok(coord_christoffels(&jet))
}

pub fn scalar_invariants_fd(
    b: &Bracket,
    profile: &CutoffProfile,
    p: &Point,
    scheme: &FDScheme,
) -> Result<ScalarInvariants> {
    let field = BracketMetricField { bracket: b, profile };
    Ok(coord_curvature(&field, &bracket_point(b, p)?, scheme)?.invariants)
}

/// Cartesian components of the polar frame `(x̂, r̂, θ̂)` as matrix columns:
/// `x̂_i = (e_i, psi K e_i)`, `r̂_q = (0, u_q / r_q)`, `θ̂_q = (0, J u_q / r_q)`.
pub fn frame_vectors(b: &Bracket, profile: &CutoffProfile, v: &[f64]) -> DMatrix<f64> {
    let (m, k) = (b.m(), b.k());
    let n = m + 2 * k;
    let (x, u) = v.split_at(m);
    let ps = crate::metric::psi(profile, x, u).value;
    let kmat = crate::metric::connection_matrix(b, x, u) * ps;
    let mut e = DMatrix::zeros(n, n);
    for i in 0..m {
        e[(i, i)] = 1.0;
        for a in 0..2 * k {
            e[(m + a, i)] = kmat[(a, i)];
        }
    }
    for q in 0..k {
        let (u0, u1) = (u[2 * q], u[2 * q + 1]);
        let rq = u0.hypot(u1);
        e[(m + 2 * q, m + q)] = u0 / rq;
        e[(m + 2 * q + 1, m + q)] = u1 / rq;
        e[(m + 2 * q, m + k + q)] = -u1 / rq;
        e[(m + 2 * q + 1, m + k + q)] = u0 / rq;
    }
    e
}

/// Frame Christoffels `Γ^γ_αβ = g(∇_{E_β} E_α, E_γ)` transported from the
/// coordinate oracle; frame-vector derivatives are taken by the same scheme.
pub fn frame_christoffels_fd(
    b: &Bracket,
    profile: &CutoffProfile,
    p: &Point,
    scheme: &FDScheme,
) -> Result<Tensor3> {
    let v = bracket_point(b, p)?;
    let n = v.len();
    let field = BracketMetricField { bracket: b, profile };
    let jet = metric_jet(&field, &v, scheme, false)?;
    let gamma = coord_christoffels(&jet);
    let e = frame_vectors(b, profile, &v);
    let ef = |w: &[f64]| frame_vectors(b, profile, w);
    let de: Vec<DMatrix<f64>> = (0..n).map(|mu| fd_derivative(&ef, &v, mu, scheme)).collect();
    let ge = &jet.g * &e;
    let mut out = Tensor3::zeros(n);
    for beta in 0..n {
        for alpha in 0..n {
            // ∇_{E_β} E_α in coordinates
            let mut w = vec![0.0; n];
            for (l, wl) in w.iter_mut().enumerate() {
                let mut acc = 0.0;
                for mu in 0..n {
                    let eb = e[(mu, beta)];
                    if eb == 0.0 {
                        continue;
                    }
                    let mut t = de[mu][(l, alpha)];
                    for nu in 0..n {
                        t += gamma[(l * n + mu) * n + nu] * e[(nu, alpha)];
                    }
                    acc += eb * t;
                }
                *wl = acc;
            }
            for gm in 0..n {
                let val: f64 = (0..n).map(|l| w[l] * ge[(l, gm)]).sum();
                out.data[(gm * n + alpha) * n + beta] = val;
            }
        }
    }
    Ok(out)
}

/// Frame components `R(E_α, E_β, E_γ, E_δ)` of the coordinate Riemann tensor.
pub fn frame_riemann_fd(
    b: &Bracket,
    profile: &CutoffProfile,
    p: &Point,
    scheme: &FDScheme,
) -> Result<Vec<f64>> {
    let v = bracket_point(b, p)?;
    let field = BracketMetricField { bracket: b, profile };
    let coord = coord_curvature(&field, &v, scheme)?;
    let et = frame_vectors(b, profile, &v).transpose();
    let mut t = coord.riem;
    for slot in 0..4 {
        t = raise_slot(&et, &t, slot);
    }
    Ok(t)
}

#[derive(Debug, Clone, Serialize)]
pub struct KnownCurvatureReport {
    pub points: usize,
    /// Largest `|τ_fd - τ_exact|` over plateau points, `f` and `-f`.
    pub max_error: f64,
    pub tau_at_origin: f64,
    pub tau_at_origin_flipped: f64,
    pub passed: bool,
}

/// Tolerance of the conformal self-test.
pub const KNOWN_CURVATURE_TOL: f64 = 1e-5;

/// Runs the oracle on `e^{±2f} I` in two dimensions, where the scalar
/// curvature is `-2 e^{-2f} Δf`, and checks the sign at the origin.
pub fn validate_known(scheme: &FDScheme) -> Result<KnownCurvatureReport> {
    scheme.validate(1.0)?;
    let pts: Vec<[f64; 2]> = {
        let mut v = vec![[0.0, 0.0]];
        for i in 0..12 {
            let ang = 0.7 + i as f64 * 0.5;
            let rad = 0.07 * (i + 1) as f64;
            v.push([rad * ang.cos(), rad * ang.sin()]);
        }
        v
    };
    let mut max_error = 0.0_f64;
    let mut origin = [0.0; 2];
    for (slot, amp) in [1.0, -1.0].into_iter().enumerate() {
        let field = ConformalTestField { amplitude: amp };
        for p in &pts {
            let tau = coord_curvature(&field, p, scheme)?.invariants.tau;
            max_error = max_error.max((tau - field.plateau_scalar_curvature(p)).abs());
            if p == &[0.0, 0.0] {
                origin[slot] = tau;
            }
        }
    }
    let flat = ConformalTestField { amplitude: 0.0 };
    max_error = max_error.max(coord_curvature(&flat, &[0.3, 0.2], scheme)?.invariants.tau.abs());
    if !(origin[0] < 0.0 && origin[1] > 0.0) {
        return Err(Error::ConventionMismatch(format!(
            "expected tau(0) = -8 for f = |x|^2 and +8 for -f, got {} and {}",
            origin[0], origin[1]
        )));
    }
    Ok(KnownCurvatureReport {
        points: 2 * pts.len() + 1,
        max_error,
        tau_at_origin: origin[0],
        tau_at_origin_flipped: origin[1],
        passed: max_error <= KNOWN_CURVATURE_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bracket::{example_bracket, ExampleBracket};
    use crate::frame::FrameCurvature;

    fn polar_point(x: &[f64], r: &[f64], theta: &[f64]) -> Point {
        Point::from_polar(x.to_vec(), r, theta)
    }

    /// Round sphere of radius `a` in stereographic coordinates:
    /// `G = 4 a^2 / (1 + |x|^2)^2 I`, so `τ = n (n - 1) / a^2`.
    struct Sphere {
        n: usize,
        a: f64,
    }

    impl MetricField for Sphere {
        fn dim(&self) -> usize {
            self.n
        }
        fn matrix(&self, v: &[f64]) -> DMatrix<f64> {
            let t: f64 = v.iter().map(|x| x * x).sum();
            DMatrix::identity(self.n, self.n) * (4.0 * self.a * self.a / (1.0 + t).powi(2))
        }
    }

    #[test]
    fn sphere_has_positive_constant_curvature() {
        let s = Sphere { n: 3, a: 1.5 };
        let c = coord_curvature(&s, &[0.2, -0.1, 0.3], &FDScheme::default()).unwrap();
        let n = 3.0;
        let a2 = 1.5f64 * 1.5;
        assert!((c.invariants.tau - n * (n - 1.0) / a2).abs() < 1e-7);
        // constant curvature K: |Ric|^2 = n (n-1)^2 K^2, |R|^2 = 2 n (n-1) K^2
        let k = 1.0 / a2;
        assert!((c.invariants.norm_ric_sq - n * (n - 1.0).powi(2) * k * k).abs() < 1e-7);
        assert!((c.invariants.norm_riem_sq - 2.0 * n * (n - 1.0) * k * k).abs() < 1e-7);
    }

    #[test]
    fn known_conformal_metric_passes() {
        let rep = validate_known(&FDScheme::default()).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!((rep.tau_at_origin + 8.0).abs() < 1e-6);
        assert!((rep.tau_at_origin_flipped - 8.0).abs() < 1e-6);
    }

    #[test]
    fn euclidean_region_has_zero_christoffels() {
        let b = example_bracket(ExampleBracket::Cross1);
        let prof = CutoffProfile::reference();
        let p = Point::new(vec![1.2, 0.0, 0.1, 0.0, 0.0, 0.3], vec![0.1; 6]);
        let g = christoffel_fd(&b, &prof, &p, &FDScheme::default()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-10));
        let s = scalar_invariants_fd(&b, &prof, &p, &FDScheme::default()).unwrap();
        assert_eq!(s.a2_integrand, 0.0);
    }

    #[test]
    fn christoffels_are_symmetric_in_lower_indices() {
        let b = example_bracket(ExampleBracket::Quaternion);
        let prof = CutoffProfile::reference();
        let p = Point::new(vec![0.2, 0.1, -0.3, 0.1, 0.05, 0.2], vec![0.2, 0.1, -0.1, 0.3, 0.1, 0.2]);
        let g = christoffel_fd(&b, &prof, &p, &FDScheme::default()).unwrap();
        let n = 12;
        for l in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    assert!((g[(l * n + mu) * n + nu] - g[(l * n + nu) * n + mu]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn polar_frame_is_orthonormal() {
        let b = example_bracket(ExampleBracket::Cross2);
        let prof = CutoffProfile::reference();
        let p = polar_point(&[0.2, 0.1, -0.3, 0.1, 0.05, 0.2], &[0.3, 0.2, 0.4], &[0.4, 2.0, -1.0]);
        let v = p.flat();
        let e = frame_vectors(&b, &prof, &v);
        let g = BracketMetricField { bracket: &b, profile: &prof }.matrix(&v);
        let gram = e.transpose() * g * &e;
        assert!((gram - DMatrix::<f64>::identity(12, 12)).amax() < 1e-13);
    }

    #[test]
    fn frame_engine_christoffels_match_transported_oracle() {
        let b = example_bracket(ExampleBracket::Cross1);
        let prof = CutoffProfile::reference();
        let x = [0.2, 0.1, -0.3, 0.1, 0.05, 0.2];
        let r = [0.3, 0.2, 0.4];
        let p = polar_point(&x, &r, &[0.4, 2.0, -1.0]);
        let oracle = frame_christoffels_fd(&b, &prof, &p, &FDScheme::default()).unwrap();
        let fc = FrameCurvature::compute(&b, &prof, &x, &r).unwrap();
        let worst = oracle
            .data
            .iter()
            .zip(&fc.gamma.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-5, "max |Γ_frame - Γ_oracle| = {worst:e}");
    }

    #[test]
    fn frame_engine_scalars_match_oracle() {
        let b = example_bracket(ExampleBracket::Cross1);
        let prof = CutoffProfile::reference();
        let x = [0.25, -0.1, 0.2, 0.15, -0.05, 0.1];
        let r = [0.2, 0.35, 0.25];
        let p = polar_point(&x, &r, &[1.0, -0.3, 2.2]);
        let o = scalar_invariants_fd(&b, &prof, &p, &FDScheme::default()).unwrap();
        let fc = FrameCurvature::compute(&b, &prof, &x, &r).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
        assert!(rel(o.tau, fc.tau()) < 1e-4, "{} vs {}", o.tau, fc.tau());
        assert!(rel(o.norm_ric_sq, fc.norm_ric_sq) < 1e-4);
        assert!(rel(o.norm_riem_sq, fc.norm_riem_sq) < 1e-4);
        assert!(rel(o.a2_integrand, fc.a2_integrand) < 1e-4);
    }

    #[test]
    fn oracle_is_continuous_across_polar_axis() {
        let b = example_bracket(ExampleBracket::Cross1);
        let prof = CutoffProfile::reference();
        let x = vec![0.2, 0.1, -0.1, 0.1, 0.05, 0.1];
        let at = |eps: f64| {
            let p = Point::new(x.clone(), vec![eps, 0.0, 0.2, 0.1, 0.1, 0.2]);
            scalar_invariants_fd(&b, &prof, &p, &FDScheme::default()).unwrap().tau
        };
        let (t0, t1) = (at(0.0), at(1e-4));
        assert!(t0.is_finite());
        assert!((t0 - t1).abs() < 1e-3 * t0.abs().max(1.0));
    }

    #[test]
    fn scheme_validation() {
        assert!(FDScheme::default().validate(1.0).is_ok());
        let bad = FDScheme { h: 0.5, ..FDScheme::default() };
        assert!(bad.validate(1.0).is_err());
    }
}
