//! Skew-symmetric bilinear maps `[., .] : R^m x R^m -> R^k` and their j-maps.
//!
//! A bracket is stored as the 3-tensor `lambda[p][i][j] = <[e_i, e_j], Z_p>`.
//! The dual j-map is the linear map `Z -> j(Z)` into `so(m)` characterised by
//! `<[x, y], Z> = <j(Z) x, y>`, so that `j(Z) e_i = sum_j <[e_i, e_j], Z> e_j`.
//!
//! Two brackets are isospectral when `j(Z)` and `j'(Z)` share eigenvalues for
//! every `Z`. For skew matrices this is the same as equal singular values, and
//! it is equivalent to the existence of an orthogonal `A_Z` with
//! `A_Z^T j(Z) A_Z = j'(Z)`, which [`conjugator`] constructs through the real
//! canonical block form.

use std::cmp::Ordering;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for every nullity computation.
pub const RANK_TOL: f64 = 1e-10;

/// Default number of random unit vectors used by [`check_isospectral`].
pub const DEFAULT_ISOSPECTRAL_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    m: usize,
    k: usize,
    lambda: Vec<f64>,
}

impl Bracket {
    pub fn zero(m: usize, k: usize) -> Self {
        assert!(m > 0 && k > 0, "bracket dimensions must be positive");
        Self {
            m,
            k,
            lambda: vec![0.0; k * m * m],
        }
    }

    /// Builds a bracket from its strictly upper-triangular entries; the lower
    /// triangle is filled by negation and the diagonal is zero.
    pub fn from_fn(m: usize, k: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut b = Self::zero(m, k);
        for p in 0..k {
            for i in 0..m {
                for j in (i + 1)..m {
                    b.set(p, i, j, f(p, i, j));
                }
            }
        }
        b
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    fn idx(&self, p: usize, i: usize, j: usize) -> usize {
        (p * self.m + i) * self.m + j
    }

    /// `<[e_i, e_j], Z_p>`.
    #[inline]
    pub fn lambda(&self, p: usize, i: usize, j: usize) -> f64 {
        self.lambda[self.idx(p, i, j)]
    }

    /// Sets `<[e_i, e_j], Z_p> = value` and its skew partner. Diagonal
    /// entries are forced to zero.
    pub fn set(&mut self, p: usize, i: usize, j: usize, value: f64) {
        if i == j {
            return;
        }
        let a = self.idx(p, i, j);
        let b = self.idx(p, j, i);
        self.lambda[a] = value;
        self.lambda[b] = -value;
    }

    pub fn is_zero(&self) -> bool {
        self.lambda.iter().all(|&v| v == 0.0)
    }

    /// `[x, y]` as a vector in `R^k`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_len("bracket argument", self.m, x.len())?;
        check_len("bracket argument", self.m, y.len())?;
        let mut out = vec![0.0; self.k];
        for (p, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..self.m {
                if x[i] == 0.0 {
                    continue;
                }
                for j in 0..self.m {
                    acc += x[i] * y[j] * self.lambda(p, i, j);
                }
            }
            *slot = acc;
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            m: self.m,
            k: self.k,
            lambda: self.lambda.iter().map(|v| v * factor).collect(),
        }
    }

    /// The bracket `[x, y]' = [A x, A y]`, whose j-map is `A j(Z) A^T`.
    pub fn pulled_back(&self, a: &DMatrix<f64>) -> Result<Self> {
        check_len("orthogonal matrix", self.m, a.nrows())?;
        check_len("orthogonal matrix", self.m, a.ncols())?;
        let mut out = Self::zero(self.m, self.k);
        for p in 0..self.k {
            let lp = self.slice(p);
            let conj = a.transpose() * lp * a;
            for i in 0..self.m {
                for j in (i + 1)..self.m {
                    out.set(p, i, j, 0.5 * (conj[(i, j)] - conj[(j, i)]));
                }
            }
        }
        Ok(out)
    }

    /// Matrix `L_p[i][j] = lambda[p][i][j]`.
    fn slice(&self, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, j| self.lambda(p, i, j))
    }

    /// Serialises to the plain-text tensor format: a header `m k`, then one
    /// `p i j value` line per nonzero entry with 1-based indices and `i < j`.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.m, self.k);
        for p in 0..self.k {
            for i in 0..self.m {
                for j in (i + 1)..self.m {
                    let v = self.lambda(p, i, j);
                    if v != 0.0 {
                        let _ = writeln!(out, "{} {} {} {}", p + 1, i + 1, j + 1, v);
                    }
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing `m k` header".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: hline,
                message: format!("bad header: {e}"),
            })?;
        if dims.len() != 2 || dims[0] == 0 || dims[1] == 0 {
            return Err(Error::Parse {
                line: hline,
                message: "header must be two positive integers `m k`".into(),
            });
        }
        let (m, k) = (dims[0], dims[1]);
        let mut b = Self::zero(m, k);
        for (line, body) in lines {
            let toks: Vec<&str> = body.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(Error::Parse {
                    line,
                    message: "expected `p i j value`".into(),
                });
            }
            let parse_idx = |t: &str, max: usize| -> Result<usize> {
                let v: usize = t.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad index `{t}`"),
                })?;
                if v == 0 || v > max {
                    return Err(Error::Parse {
                        line,
                        message: format!("index {v} out of range 1..={max}"),
                    });
                }
                Ok(v - 1)
            };
            let p = parse_idx(toks[0], k)?;
            let i = parse_idx(toks[1], m)?;
            let j = parse_idx(toks[2], m)?;
            let v: f64 = toks[3].parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad value `{}`", toks[3]),
            })?;
            if i >= j {
                return Err(Error::Parse {
                    line,
                    message: "entries must satisfy i < j".into(),
                });
            }
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: "value must be finite".into(),
                });
            }
            b.set(p, i, j, v);
        }
        Ok(b)
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// `j(Z)` as an `m x m` skew matrix acting on column vectors.
pub fn jmap(b: &Bracket, z: &[f64]) -> Result<DMatrix<f64>> {
    check_len("j-map argument Z", b.k, z.len())?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("Z must be finite".into()));
    }
    let m = b.m;
    let mut j = DMatrix::zeros(m, m);
    for (p, &zp) in z.iter().enumerate() {
        if zp == 0.0 {
            continue;
        }
        for i in 0..m {
            for c in 0..m {
                // column c is j(Z) e_c = sum_r <[e_c, e_r], Z> e_r
                j[(i, c)] += zp * b.lambda(p, c, i);
            }
        }
    }
    Ok(j)
}

/// Singular values of `j(Z)`, sorted descending. Eigenvalues are `+-i mu`.
pub fn spectrum(b: &Bracket, z: &[f64]) -> Result<Vec<f64>> {
    Ok(skew_spectrum(&jmap(b, z)?))
}

fn skew_spectrum(s: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = s.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    sv
}

fn max_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct IsospectralReport {
    pub isospectral: bool,
    pub max_deviation: f64,
    pub n_tested: usize,
}

/// Compares spectra on the `k` coordinate axes plus `n_samples` unit vectors
/// drawn uniformly from the sphere (deterministic in `seed`).
pub fn check_isospectral(
    b1: &Bracket,
    b2: &Bracket,
    n_samples: usize,
    tol: f64,
    seed: u64,
) -> Result<IsospectralReport> {
    check_len("bracket m", b1.m, b2.m)?;
    check_len("bracket k", b1.k, b2.k)?;
    let k = b1.k;
    let mut worst = 0.0_f64;
    let mut n_tested = 0;
    let mut test = |z: &[f64]| -> Result<()> {
        let d = max_deviation(&spectrum(b1, z)?, &spectrum(b2, z)?);
        worst = worst.max(d);
        n_tested += 1;
        Ok(())
    };
    for p in 0..k {
        let mut z = vec![0.0; k];
        z[p] = 1.0;
        test(&z)?;
    }
    for z in unit_sphere_samples(k, n_samples, seed) {
        test(&z)?;
    }
    Ok(IsospectralReport {
        isospectral: worst <= tol,
        max_deviation: worst,
        n_tested,
    })
}

/// Uniform samples on the unit sphere of `R^k`.
pub fn unit_sphere_samples(k: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            out.push(z.into_iter().map(|v| v / norm).collect());
        }
    }
    out
}

/// Real canonical form of a skew matrix: `basis^T S basis` is block diagonal
/// with blocks `[[0, -mu], [mu, 0]]` in descending `mu`, then a zero block.
#[derive(Debug, Clone)]
pub struct CanonicalForm {
    pub basis: DMatrix<f64>,
    pub mus: Vec<f64>,
}

impl CanonicalForm {
    /// The block-diagonal matrix `basis^T S basis` predicted by `mus`.
    pub fn block_matrix(&self) -> DMatrix<f64> {
        let n = self.basis.nrows();
        let mut c = DMatrix::zeros(n, n);
        for (b, &mu) in self.mus.iter().enumerate() {
            c[(2 * b + 1, 2 * b)] = mu;
            c[(2 * b, 2 * b + 1)] = -mu;
        }
        c
    }
}

fn orthogonalize(v: &mut DVector<f64>, against: &[DVector<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for a in against {
            let d = a.dot(v);
            v.axpy(-d, a, 1.0);
        }
    }
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Reduces a skew matrix to real canonical block form by an orthogonal change
/// of basis built from the eigenspaces of `S^T S = -S^2`.
pub fn canonical_form(s: &DMatrix<f64>) -> CanonicalForm {
    let n = s.nrows();
    let sts = s.transpose() * s;
    let eig = SymmetricEigen::new(sts);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(Ordering::Equal)
    });
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let mu_max = lam_max.max(0.0).sqrt();
    // eigenvalues of S^T S carry O(eps * lam_max) rounding, so mu below
    // ~1e-6 mu_max is indistinguishable from zero
    let zero_lam_tol = 1e-12 * lam_max.max(f64::MIN_POSITIVE);
    let cluster_tol = 1e-8 * lam_max.max(f64::MIN_POSITIVE);

    let mut chosen: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut pairs: Vec<(f64, DVector<f64>, DVector<f64>)> = Vec::new();
    let mut zeros: Vec<DVector<f64>> = Vec::new();

    let mut start = 0;
    while start < n {
        let lam0 = eig.eigenvalues[order[start]];
        let mut end = start + 1;
        while end < n && (lam0 - eig.eigenvalues[order[end]]).abs() <= cluster_tol {
            end += 1;
        }
        let cluster: Vec<DVector<f64>> = order[start..end]
            .iter()
            .map(|&c| eig.eigenvectors.column(c).into_owned())
            .collect();
        let is_zero = lam0 <= zero_lam_tol;
        let mut filled = 0;
        while filled < cluster.len() {
            // take the candidate with the largest component outside the span
            let best = cluster
                .iter()
                .map(|u| {
                    let mut v = u.clone();
                    orthogonalize(&mut v, &chosen);
                    v
                })
                .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap_or(Ordering::Equal));
            let Some(mut v) = best else { break };
            if v.norm() < 0.5 {
                break;
            }
            v.normalize_mut();
            if is_zero || chosen.len() + 2 > n {
                chosen.push(v.clone());
                zeros.push(v);
                filled += 1;
                continue;
            }
            let sv = s * &v;
            let mu = sv.norm();
            let mut w = sv / mu;
            orthogonalize(&mut w, &chosen);
            let vv = [v.clone()];
            orthogonalize(&mut w, &vv);
            w.normalize_mut();
            chosen.push(v.clone());
            chosen.push(w.clone());
            pairs.push((mu, v, w));
            filled += 2;
        }
        start = end;
    }

    // descending mu; ties broken lexicographically on the reducing vector
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i + 1;
        while j < pairs.len() && (pairs[i].0 - pairs[j].0).abs() <= 1e-9 * mu_max.max(1.0) {
            j += 1;
        }
        pairs[i..j].sort_by(|a, b| lex_cmp(&b.1, &a.1));
        i = j;
    }
    zeros.sort_by(|a, b| lex_cmp(b, a));

    let mut basis = DMatrix::zeros(n, n);
    let mut col = 0;
    let mut mus = Vec::with_capacity(pairs.len());
    for (mu, v, w) in &pairs {
        basis.set_column(col, v);
        basis.set_column(col + 1, w);
        col += 2;
        mus.push(*mu);
    }
    for z in &zeros {
        basis.set_column(col, z);
        col += 1;
    }
    debug_assert_eq!(col, n, "canonical basis incomplete");
    CanonicalForm { basis, mus }
}

#[derive(Debug, Clone)]
pub struct ConjugatorReport {
    /// Orthogonal `A` with `A^T j1(Z) A = j2(Z)`.
    pub a: DMatrix<f64>,
    pub residual_conj: f64,
    pub residual_orth: f64,
}

/// Orthogonal `A_Z` with `A^T j1(Z) A = j2(Z)`, i.e. `<[x,y]_2, Z> = <[Ax, Ay]_1, Z>`.
pub fn conjugator(b1: &Bracket, b2: &Bracket, z: &[f64], tol: f64) -> Result<ConjugatorReport> {
    check_len("bracket m", b1.m, b2.m)?;
    check_len("bracket k", b1.k, b2.k)?;
    let j1 = jmap(b1, z)?;
    let j2 = jmap(b2, z)?;
    let deviation = max_deviation(&skew_spectrum(&j1), &skew_spectrum(&j2));
    if deviation > tol {
        return Err(Error::SpectraMismatch { deviation, tol });
    }
    Ok(compose_conjugator(&j1, &j2))
}

/// Composes the two canonical reductions without checking spectra. Used for
/// negative controls where no true conjugator exists.
pub fn forced_conjugator(b1: &Bracket, b2: &Bracket, z: &[f64]) -> Result<ConjugatorReport> {
    check_len("bracket m", b1.m, b2.m)?;
    Ok(compose_conjugator(&jmap(b1, z)?, &jmap(b2, z)?))
}

fn compose_conjugator(j1: &DMatrix<f64>, j2: &DMatrix<f64>) -> ConjugatorReport {
    let p1 = canonical_form(j1).basis;
    let p2 = canonical_form(j2).basis;
    let a = &p1 * p2.transpose();
    let residual_conj = (a.transpose() * j1 * &a - j2).norm();
    let n = a.nrows();
    let residual_orth = (a.transpose() * &a - DMatrix::<f64>::identity(n, n)).norm();
    ConjugatorReport {
        a,
        residual_conj,
        residual_orth,
    }
}

/// Dimension of the commutant of `{j(Z_1), ..., j(Z_k)}` inside `so(m)`.
pub fn centralizer_dim(b: &Bracket) -> usize {
    let m = b.m;
    let k = b.k;
    let gens: Vec<DMatrix<f64>> = (0..k)
        .map(|p| {
            let mut z = vec![0.0; k];
            z[p] = 1.0;
            jmap(b, &z).expect("axis has length k")
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| ((a + 1)..m).map(move |c| (a, c)))
        .collect();
    let dim_so = pairs.len();
    if dim_so == 0 {
        return 0;
    }
    let rows = k * m * m;
    let mut map = DMatrix::zeros(rows, dim_so);
    for (col, &(a, c)) in pairs.iter().enumerate() {
        let mut basis = DMatrix::zeros(m, m);
        basis[(a, c)] = 1.0;
        basis[(c, a)] = -1.0;
        for (p, j) in gens.iter().enumerate() {
            let comm = &basis * j - j * &basis;
            for (e, v) in comm.iter().enumerate() {
                map[(p * m * m + e, col)] = *v;
            }
        }
    }
    nullity(&map)
}

/// Number of columns minus numerical rank, with [`RANK_TOL`] relative cutoff.
pub(crate) fn nullity(map: &DMatrix<f64>) -> usize {
    let cols = map.ncols();
    let sv = map.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return cols;
    }
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * smax).count();
    cols - rank
}

/// Lower bound `m(m-1)/2 - [m/2]([m/2]+2)` on the dimension of isospectral,
/// inequivalent deformation families for `k = 2`.
pub fn gw_dimension_bound(m: i64) -> i64 {
    let h = m / 2;
    m * (m - 1) / 2 - h * (h + 2)
}

/// The three mutually isospectral brackets `R^6 x R^6 -> R^3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExampleBracket {
    /// `[(x,y),(x',y')] = x × x' + y × y'`
    Cross1,
    /// `[(x,y),(x',y')] = x × x' - y × y'`
    Cross2,
    /// `H x R^2` with `j(z) q = z q` (left quaternion multiplication).
    Quaternion,
}

impl ExampleBracket {
    pub const ALL: [ExampleBracket; 3] = [Self::Cross1, Self::Cross2, Self::Quaternion];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cross1 => "cross1",
            Self::Cross2 => "cross2",
            Self::Quaternion => "quaternion",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "cross1" => Some(Self::Cross1),
            "cross2" => Some(Self::Cross2),
            "quaternion" | "quat" => Some(Self::Quaternion),
            _ => None,
        }
    }
}

fn levi_civita(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Hamilton product with components `(1, i, j, k)`.
pub fn quaternion_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

pub fn example_bracket(which: ExampleBracket) -> Bracket {
    match which {
        ExampleBracket::Cross1 | ExampleBracket::Cross2 => {
            let sign = if which == ExampleBracket::Cross1 { 1.0 } else { -1.0 };
            Bracket::from_fn(6, 3, |p, i, j| {
                if i < 3 && j < 3 {
                    levi_civita(i, j, p)
                } else if i >= 3 && j >= 3 {
                    sign * levi_civita(i - 3, j - 3, p)
                } else {
                    0.0
                }
            })
        }
        ExampleBracket::Quaternion => Bracket::from_fn(6, 3, |p, i, j| {
            // <[e_i, e_j], Z_p> = <Z_p e_i, e_j> on the H factor
            if i >= 4 || j >= 4 {
                return 0.0;
            }
            let mut unit = [0.0; 4];
            unit[p + 1] = 1.0;
            let mut ei = [0.0; 4];
            ei[i] = 1.0;
            quaternion_mul(unit, ei)[j]
        }),
    }
}

/// Necessary-condition fingerprint for bracket equivalence under
/// `(A, C)` with `A` orthogonal and `C` a signed coordinate permutation.
///
/// Layout: `[centralizer_dim, tr(M), tr(M^2), tr(M^3), tr(M^4), spectra...]`
/// where `M = sum_p j(Z_p)^2` and the spectra block lists, for each grid
/// vector, the lexicographically sorted spectra of all its signed
/// permutations.
pub fn equivalence_invariants(b: &Bracket, grid: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = b.k;
    let m = b.m;
    let mut out = vec![centralizer_dim(b) as f64];
    let mut sum_sq = DMatrix::zeros(m, m);
    for p in 0..k {
        let mut z = vec![0.0; k];
        z[p] = 1.0;
        let j = jmap(b, &z)?;
        sum_sq += &j * &j;
    }
    let mut power = DMatrix::<f64>::identity(m, m);
    for _ in 0..4 {
        power = &power * &sum_sq;
        out.push(power.trace());
    }
    let perms = permutations(k);
    for z in grid {
        check_len("grid vector", k, z.len())?;
        let mut spectra: Vec<Vec<f64>> = Vec::new();
        for perm in &perms {
            for signs in 0..(1usize << k) {
                let cz: Vec<f64> = (0..k)
                    .map(|i| {
                        let s = if signs >> i & 1 == 1 { -1.0 } else { 1.0 };
                        s * z[perm[i]]
                    })
                    .collect();
                spectra.push(spectrum(b, &cz)?);
            }
        }
        spectra.sort_by(|a, c| {
            a.iter()
                .zip(c)
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        });
        out.extend(spectra.into_iter().flatten());
    }
    Ok(out)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}
