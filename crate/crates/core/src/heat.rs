//! Quadrature for the heat invariant `a2(g)` and its dependence on the scale
//! parameter `s`.
//!
//! The integrand is torus-invariant, so the angles are integrated out exactly
//! and the remaining integral runs over the box `x in [-R1, R1]^m`,
//! `r in (0, R2/s]^k` with weight `(2π)^k prod_p r_p` (the metric has unit
//! determinant, so its volume form is Lebesgue measure). Nodes are generated
//! in the unit cube and mapped by `x = R1 (2v - 1)`, `r = R2 v / s`, so runs
//! at different `s` with the same seed share nodes in the rescaled radius
//! `rho = s r`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bracket::Bracket;
use crate::error::{Error, Result};
use crate::fit::least_squares;
use crate::frame::{a2_integrand, r_min};
use crate::metric::{metric_matrix_unchecked, CutoffProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QuadratureMethod {
    /// Randomly shifted Kronecker lattice with a tent transform.
    Qmc,
    Mc,
    /// Tensor Gauss-Legendre; the error estimate is the change from one
    /// fewer node per axis.
    TensorGauss,
}

impl QuadratureMethod {
    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "qmc" => Some(Self::Qmc),
            "mc" => Some(Self::Mc),
            "tensorgauss" | "tensor_gauss" | "gauss" => Some(Self::TensorGauss),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureSpec {
    pub method: QuadratureMethod,
    /// Nodes per replicate (an upper bound for `TensorGauss`).
    pub n_nodes: usize,
    pub n_replicates: usize,
    pub seed: u64,
}

pub const DEFAULT_REPLICATES: usize = 8;

impl QuadratureSpec {
    pub fn qmc(n_nodes: usize, seed: u64) -> Self {
        Self {
            method: QuadratureMethod::Qmc,
            n_nodes,
            n_replicates: DEFAULT_REPLICATES,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
        }
        if self.method != QuadratureMethod::TensorGauss && self.n_replicates < 2 {
            return Err(Error::InvalidArgument(
                "an error estimate needs at least two replicates".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub std_error: f64,
    pub n_nodes: usize,
    pub n_replicates: usize,
    pub seed: u64,
    pub replicate_values: Vec<f64>,
    /// Nodes inside the support of the cutoff, summed over replicates.
    pub in_support: usize,
    pub degenerate: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Nodes closer than `r_min` to a polar axis are skipped; more than this
/// fraction of them is an error.
pub const MAX_DEGENERATE_FRACTION: f64 = 1e-3;

/// Relative tolerance of the torus-invariance preflight.
pub const THETA_PREFLIGHT_TOL: f64 = 1e-8;

/// Fraction of the integration box covered by the support:
/// `vol(B^m) / 2^m` times `vol(B^k) / 2^k`.
pub fn support_volume_fraction(m: usize, k: usize) -> f64 {
    unit_ball_volume(m) / 2f64.powi(m as i32) * unit_ball_volume(k) / 2f64.powi(k as i32)
}

fn unit_ball_volume(d: usize) -> f64 {
    // V_0 = 1, V_1 = 2, V_d = 2π/d V_{d-2}
    let mut v = [1.0, 2.0];
    for j in 2..=d {
        v[j % 2] *= 2.0 * PI / j as f64;
    }
    v[d % 2]
}

/// Pairwise summation in index order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Generalized golden-ratio increments for a `dim`-dimensional Kronecker sequence.
fn kronecker_alpha(dim: usize) -> Vec<f64> {
    // unique positive root of x^{d+1} = x + 1
    let mut g = 2.0_f64;
    for _ in 0..64 {
        g = (1.0 + g).powf(1.0 / (dim as f64 + 1.0));
    }
    (1..=dim).map(|i| (1.0 / g.powi(i as i32)).fract()).collect()
}

fn tent(u: f64) -> f64 {
    1.0 - (2.0 * u - 1.0).abs()
}

/// Unit-cube nodes for one replicate, row-major `n x dim`.
fn unit_nodes(spec: &QuadratureSpec, replicate: usize, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(replicate as u64 + 1);
    let n = spec.n_nodes;
    let mut out = Vec::with_capacity(n * dim);
    match spec.method {
        QuadratureMethod::Qmc => {
            let alpha = kronecker_alpha(dim);
            let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            for i in 0..n {
                for d in 0..dim {
                    let u = (shift[d] + (i as f64 + 1.0) * alpha[d]).fract();
                    out.push(tent(u));
                }
            }
        }
        QuadratureMethod::Mc => {
            for _ in 0..n * dim {
                out.push(rng.random::<f64>());
            }
        }
        QuadratureMethod::TensorGauss => unreachable!("tensor rules do not use random nodes"),
    }
    out
}

struct NodeEval {
    value: f64,
    in_support: bool,
    degenerate: bool,
}

/// `f(x, r) prod r_p` at a unit-cube node, zero outside the support.
fn eval_node(b: &Bracket, profile: &CutoffProfile, v: &[f64], rmin: f64) -> Result<NodeEval> {
    let (m, k) = (b.m(), b.k());
    let r1 = profile.r1sq.sqrt();
    let r2 = profile.r2sq.sqrt() / profile.s;
    let x: Vec<f64> = v[..m].iter().map(|u| r1 * (2.0 * u - 1.0)).collect();
    let r: Vec<f64> = v[m..m + k].iter().map(|u| r2 * u).collect();
    let t1: f64 = x.iter().map(|a| a * a).sum();
    let t2: f64 = r.iter().map(|a| a * a).sum();
    if !profile.in_support(t1, t2) {
        return Ok(NodeEval {
            value: 0.0,
            in_support: false,
            degenerate: false,
        });
    }
    if r.iter().any(|&rp| !(rp > rmin)) {
        return Ok(NodeEval {
            value: 0.0,
            in_support: true,
            degenerate: true,
        });
    }
    let w: f64 = r.iter().product();
    Ok(NodeEval {
        value: a2_integrand(b, profile, &x, &r)? * w,
        in_support: true,
        degenerate: false,
    })
}

fn box_weight(profile: &CutoffProfile, m: usize, k: usize) -> f64 {
    let r1 = profile.r1sq.sqrt();
    let r2 = profile.r2sq.sqrt() / profile.s;
    (2.0 * r1).powi(m as i32) * r2.powi(k as i32) * (2.0 * PI).powi(k as i32)
}

/// Checks that `G(x, R_θ u) = D G(x, u) D^T` with `D = diag(I, R_θ)` at
/// 8 base points and 32 rotations each; every frame scalar is then
/// independent of the angles. Returns the largest relative deviation.
pub fn theta_preflight(b: &Bracket, profile: &CutoffProfile, seed: u64) -> Result<f64> {
    let (m, k) = (b.m(), b.k());
    let n = m + 2 * k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7468_6574_61);
    let r1 = profile.r1sq.sqrt();
    let r2 = profile.r2sq.sqrt() / profile.s;
    let mut worst = 0.0_f64;
    for _ in 0..8 {
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5) * r1 / (m as f64).sqrt()).collect();
        let u: Vec<f64> = (0..2 * k)
            .map(|_| rng.random_range(-0.5..0.5) * r2 / (k as f64).sqrt())
            .collect();
        let g0 = metric_matrix_unchecked(b, profile, &x, &u);
        let scale = g0.amax();
        for _ in 0..32 {
            let mut d = DMatrix::<f64>::identity(n, n);
            let mut ur = u.clone();
            for q in 0..k {
                let (sn, cs) = rng.random_range(0.0..2.0 * PI).sin_cos();
                let o = m + 2 * q;
                d[(o, o)] = cs;
                d[(o, o + 1)] = -sn;
                d[(o + 1, o)] = sn;
                d[(o + 1, o + 1)] = cs;
                ur[2 * q] = cs * u[2 * q] - sn * u[2 * q + 1];
                ur[2 * q + 1] = sn * u[2 * q] + cs * u[2 * q + 1];
            }
            let g1 = metric_matrix_unchecked(b, profile, &x, &ur);
            let dev = (g1 - &d * &g0 * d.transpose()).amax() / scale;
            worst = worst.max(dev);
        }
    }
    if !(worst < THETA_PREFLIGHT_TOL) {
        return Err(Error::ThetaDependenceDetected { deviation: worst });
    }
    Ok(worst)
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `a2(g)` for the bracket metric with the given profile.
pub fn integrate_a2(b: &Bracket, profile: &CutoffProfile, spec: &QuadratureSpec) -> Result<QuadratureResult> {
    profile.validate()?;
    spec.validate()?;
    let start = Instant::now();
    theta_preflight(b, profile, spec.seed)?;
    let (m, k) = (b.m(), b.k());
    let dim = m + k;
    let rmin = r_min(profile);
    let weight = box_weight(profile, m, k);

    if spec.method == QuadratureMethod::TensorGauss {
        return tensor_gauss(b, profile, spec, start);
    }

    let mut replicate_values = Vec::with_capacity(spec.n_replicates);
    let mut in_support = 0;
    let mut degenerate = 0;
    for rep in 0..spec.n_replicates {
        let nodes = unit_nodes(spec, rep, dim);
        let evals: Vec<NodeEval> = nodes
            .par_chunks(dim)
            .map(|v| eval_node(b, profile, v, rmin))
            .collect::<Result<_>>()?;
        in_support += evals.iter().filter(|e| e.in_support).count();
        degenerate += evals.iter().filter(|e| e.degenerate).count();
        let vals: Vec<f64> = evals.iter().map(|e| e.value).collect();
        replicate_values.push(weight * pairwise_sum(&vals) / spec.n_nodes as f64);
    }
    let total = spec.n_nodes * spec.n_replicates;
    if degenerate as f64 > MAX_DEGENERATE_FRACTION * total as f64 {
        return Err(Error::DegenerateNodes {
            degenerate,
            total,
        });
    }
    let (value, std_error) = mean_and_stderr(&replicate_values);
    Ok(QuadratureResult {
        value,
        std_error,
        n_nodes: spec.n_nodes,
        n_replicates: spec.n_replicates,
        seed: spec.seed,
        replicate_values,
        in_support,
        degenerate,
        wall_time: start.elapsed(),
    })
}

/// Gauss-Legendre nodes and weights on `[0, 1]` (Golub-Welsch).
pub fn gauss_legendre_unit(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(q, q);
    for i in 1..q {
        let b = i as f64 / ((4 * i * i - 1) as f64).sqrt();
        jac[(i, i - 1)] = b;
        jac[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..q)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (0.5 * (eig.eigenvalues[i] + 1.0), v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn tensor_rule(b: &Bracket, profile: &CutoffProfile, q: usize, rmin: f64) -> Result<(f64, usize, usize)> {
    let dim = b.m() + b.k();
    let (nodes, weights) = gauss_legendre_unit(q);
    let total = q.pow(dim as u32);
    let evals: Vec<(f64, bool, bool)> = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut v = vec![0.0; dim];
            let mut w = 1.0;
            for slot in v.iter_mut() {
                let d = idx % q;
                idx /= q;
                *slot = nodes[d];
                w *= weights[d];
            }
            let e = eval_node(b, profile, &v, rmin)?;
            Ok((w * e.value, e.in_support, e.degenerate))
        })
        .collect::<Result<_>>()?;
    let vals: Vec<f64> = evals.iter().map(|e| e.0).collect();
    let weight = box_weight(profile, b.m(), b.k());
    Ok((
        weight * pairwise_sum(&vals),
        evals.iter().filter(|e| e.1).count(),
        evals.iter().filter(|e| e.2).count(),
    ))
}

fn tensor_gauss(
    b: &Bracket,
    profile: &CutoffProfile,
    spec: &QuadratureSpec,
    start: Instant,
) -> Result<QuadratureResult> {
    let dim = b.m() + b.k();
    let mut q = (spec.n_nodes as f64).powf(1.0 / dim as f64).floor() as usize;
    while q.pow(dim as u32) > spec.n_nodes {
        q -= 1;
    }
    while (q + 1).pow(dim as u32) <= spec.n_nodes {
        q += 1;
    }
    if q < 2 {
        return Err(Error::InvalidArgument(format!(
            "tensor Gauss rule needs at least 2^{dim} nodes"
        )));
    }
    let rmin = r_min(profile);
    let (fine, in_support, degenerate) = tensor_rule(b, profile, q, rmin)?;
    let (coarse, _, _) = tensor_rule(b, profile, q - 1, rmin)?;
    let total = q.pow(dim as u32);
    if degenerate as f64 > MAX_DEGENERATE_FRACTION * total as f64 {
        return Err(Error::DegenerateNodes { degenerate, total });
    }
    Ok(QuadratureResult {
        value: fine,
        std_error: (fine - coarse).abs(),
        n_nodes: total,
        n_replicates: 1,
        seed: spec.seed,
        replicate_values: vec![fine],
        in_support,
        degenerate,
        wall_time: start.elapsed(),
    })
}

/// Homogeneous degrees present in the integrand; `a2(g^s)` is a combination
/// of `s^{d - 2k}` over these.
pub const DEFAULT_DEGREES: [i32; 4] = [2, 0, -2, -4];

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub s: f64,
    pub a2: f64,
    pub stderr: f64,
    pub n_nodes: usize,
    pub seed: u64,
    pub replicate_values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepFit {
    /// Degrees `d`; the fitted powers of `s` are `d - 2k`.
    pub degrees: Vec<i32>,
    pub coefficients: Vec<f64>,
    /// Standard errors from the spread of per-replicate fits.
    pub std_errors: Vec<f64>,
    /// `max |fit - a2| / max |a2|` over the sweep, on the scaled rows.
    pub relative_residual: f64,
    /// Coefficient of the largest degree (the `s -> infinity` term).
    pub leading: f64,
    pub leading_std_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub fit: SweepFit,
}

/// Fits `sum_d c_d s^{d-2k}` with each row scaled by `s^{2k - d_max}`, so
/// every scale carries comparable weight.
fn fit_expansion(s_list: &[f64], values: &[f64], degrees: &[i32], k: usize) -> Result<(Vec<f64>, f64)> {
    let dmax = *degrees.iter().max().expect("nonempty degree list");
    let two_k = 2 * k as i32;
    let rows: Vec<Vec<f64>> = s_list
        .iter()
        .map(|&s| degrees.iter().map(|&d| s.powi(d - dmax)).collect())
        .collect();
    let rhs: Vec<f64> = s_list
        .iter()
        .zip(values)
        .map(|(&s, &v)| v * s.powi(two_k - dmax))
        .collect();
    let fit = least_squares(&rows, &rhs)?;
    let scale = rhs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let rel = if scale > 0.0 { fit.max_abs_residual / scale } else { 0.0 };
    Ok((fit.coefficients, rel))
}

/// `a2(g^s)` over `s_list` and the fitted scaling expansion.
pub fn sweep_s(
    b: &Bracket,
    profile: &CutoffProfile,
    s_list: &[f64],
    spec: &QuadratureSpec,
    degrees: &[i32],
) -> Result<SweepReport> {
    let mut distinct = s_list.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 5 || distinct[distinct.len() - 1] < 4.0 * distinct[0] {
        return Err(Error::FitIllConditioned(
            "need at least 5 distinct scales spanning a factor of 4".into(),
        ));
    }
    if degrees.is_empty() || degrees.len() > s_list.len() {
        return Err(Error::FitIllConditioned(format!(
            "{} degrees for {} scales",
            degrees.len(),
            s_list.len()
        )));
    }
    let mut rows = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let res = integrate_a2(b, &profile.with_scale(s)?, spec)?;
        rows.push(SweepRow {
            s,
            a2: res.value,
            stderr: res.std_error,
            n_nodes: res.n_nodes,
            seed: res.seed,
            replicate_values: res.replicate_values,
        });
    }
    let fit = fit_sweep(&rows, degrees, b.k())?;
    Ok(SweepReport { rows, fit })
}

/// Fits the expansion to existing sweep rows; uncertainties come from
/// refitting each replicate separately.
pub fn fit_sweep(rows: &[SweepRow], degrees: &[i32], k: usize) -> Result<SweepFit> {
    if degrees.is_empty() || degrees.len() > rows.len() {
        return Err(Error::FitIllConditioned(format!(
            "{} degrees for {} scales",
            degrees.len(),
            rows.len()
        )));
    }
    let s_list: Vec<f64> = rows.iter().map(|r| r.s).collect();
    let values: Vec<f64> = rows.iter().map(|r| r.a2).collect();
    let (coefficients, relative_residual) = fit_expansion(&s_list, &values, degrees, k)?;
    let n_rep = rows.iter().map(|r| r.replicate_values.len()).min().unwrap_or(0);
    let mut std_errors = vec![f64::NAN; degrees.len()];
    if n_rep >= 2 {
        let mut rep_coeffs: Vec<Vec<f64>> = Vec::with_capacity(n_rep);
        for j in 0..n_rep {
            let v: Vec<f64> = rows.iter().map(|r| r.replicate_values[j]).collect();
            rep_coeffs.push(fit_expansion(&s_list, &v, degrees, k)?.0);
        }
        for (d, se) in std_errors.iter_mut().enumerate() {
            let c: Vec<f64> = rep_coeffs.iter().map(|r| r[d]).collect();
            *se = mean_and_stderr(&c).1;
        }
    }
    let lead = degrees
        .iter()
        .enumerate()
        .max_by_key(|(_, &d)| d)
        .map(|(i, _)| i)
        .expect("nonempty degree list");
    Ok(SweepFit {
        degrees: degrees.to_vec(),
        leading: coefficients[lead],
        leading_std_error: std_errors[lead],
        coefficients,
        std_errors,
        relative_residual,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub a2_first: f64,
    pub a2_second: f64,
    pub difference: f64,
    pub combined_std_error: f64,
    pub consistent: bool,
}

/// Compares `a2` of two bracket metrics; isophasal pairs share heat invariants.
pub fn isophasal_consistency(
    b1: &Bracket,
    b2: &Bracket,
    profile: &CutoffProfile,
    spec: &QuadratureSpec,
) -> Result<ConsistencyReport> {
    let r1 = integrate_a2(b1, profile, spec)?;
    let r2 = integrate_a2(b2, profile, spec)?;
    let difference = r1.value - r2.value;
    let combined = r1.std_error.hypot(r2.std_error);
    Ok(ConsistencyReport {
        a2_first: r1.value,
        a2_second: r2.value,
        difference,
        combined_std_error: combined,
        consistent: difference.abs() <= 3.0 * combined,
    })
}
