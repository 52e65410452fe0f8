//! The pipelines behind each subcommand. Every command returns its records
//! and whether all asserted tolerances held; nothing here prints.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use isophasal_core::bracket::{
    centralizer_dim, check_isospectral, equivalence_invariants, example_bracket, gw_dimension_bound,
    unit_sphere_samples, Bracket, ExampleBracket, DEFAULT_ISOSPECTRAL_SAMPLES,
};
use isophasal_core::frame::FrameCurvature;
use isophasal_core::heat::{integrate_a2, sweep_s};
use isophasal_core::intertwine::{interior_points, intertwine_residual, Envelope, IntertwiningOperator, TestFunction};
use isophasal_core::metric::{is_euclidean_outside, metric_at, CutoffProfile, Point};
use isophasal_core::oracle::{scalar_invariants_fd, validate_known, FDScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{NamedBracket, RunConfig};
use crate::Command;

/// Spectra of isospectral brackets agree to this.
pub const SPECTRUM_TOL: f64 = 1e-10;
/// `|a2| / stderr` above which `a2` counts as nonvanishing.
pub const A2_SIGNIFICANCE: f64 = 5.0;
/// Heat invariants of an isospectral pair agree within this many combined
/// standard errors.
pub const A2_AGREEMENT_SIGMAS: f64 = 3.0;
pub const SWEEP_MAX_RELATIVE_RESIDUAL: f64 = 0.05;
pub const SWEEP_LEADING_SIGMAS: f64 = 3.0;
pub const DET_TOL: f64 = 1e-12;
pub const FLAT_TOL: f64 = 1e-9;
pub const FRAME_ORACLE_REL_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] isophasal_core::Error),
}

impl CommandError {
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, CommandError>;

#[derive(Debug, Default)]
pub struct Outcome {
    pub records: Vec<Value>,
    pub csv: Option<String>,
    pub passed: bool,
    pub config_hash: String,
    pub seed: u64,
}

impl Outcome {
    fn new(config: &RunConfig, seed: u64) -> Self {
        Self {
            passed: true,
            config_hash: config.hash(),
            seed,
            ..Self::default()
        }
    }

    fn push(&mut self, record: &str, mut body: Value, passed: bool) {
        if let Value::Object(map) = &mut body {
            map.insert("record".into(), record.into());
            map.insert("config_hash".into(), self.config_hash.clone().into());
            map.insert("seed".into(), self.seed.into());
            map.insert("passed".into(), passed.into());
        }
        self.passed &= passed;
        self.records.push(body);
    }

    pub fn jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(out, "{r}");
        }
        out
    }

    /// Prints the records and, with an output directory, writes
    /// `<command>.jsonl` and the sweep CSV there.
    pub fn emit(&self, command: Command, out_dir: Option<&Path>) -> std::io::Result<()> {
        let text = self.jsonl();
        std::io::stdout().write_all(text.as_bytes())?;
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            let name = format!("{command:?}").to_ascii_lowercase();
            std::fs::write(dir.join(format!("{name}.jsonl")), &text)?;
            if let Some(csv) = &self.csv {
                std::fs::write(dir.join(format!("{name}.csv")), csv)?;
            }
        }
        Ok(())
    }
}

pub fn run(command: Command, config: &RunConfig) -> Result<Outcome> {
    match command {
        Command::Brackets => brackets(config),
        Command::A2 => a2(config),
        Command::Sweep => sweep(config),
        Command::Intertwine => intertwine(config),
        Command::Validate => validate(config),
    }
}

fn fingerprint(b: &Bracket, seed: u64) -> Result<Vec<f64>> {
    let grid = unit_sphere_samples(b.k(), 3, seed);
    Ok(equivalence_invariants(b, &grid)?)
}

fn brackets(config: &RunConfig) -> Result<Outcome> {
    let seed = config.quadrature.seed;
    let mut out = Outcome::new(config, seed);
    let list: Vec<NamedBracket> = match &config.second {
        Some(b2) => vec![config.first.clone(), b2.clone()],
        None => ExampleBracket::ALL
            .iter()
            .map(|&e| NamedBracket {
                name: e.name().into(),
                bracket: example_bracket(e),
            })
            .collect(),
    };
    let mut prints = Vec::with_capacity(list.len());
    for nb in &list {
        let b = &nb.bracket;
        let fp = fingerprint(b, seed)?;
        out.push(
            "bracket",
            json!({
                "name": nb.name,
                "m": b.m(),
                "k": b.k(),
                "centralizer_dim": centralizer_dim(b),
                "gw_dimension_bound": gw_dimension_bound(b.m() as i64),
                "fingerprint_head": &fp[..fp.len().min(5)],
            }),
            true,
        );
        prints.push(fp);
    }
    for i in 0..list.len() {
        for j in i + 1..list.len() {
            let rep = check_isospectral(
                &list[i].bracket,
                &list[j].bracket,
                DEFAULT_ISOSPECTRAL_SAMPLES,
                SPECTRUM_TOL,
                seed,
            )?;
            let distance = if prints[i].len() == prints[j].len() {
                prints[i]
                    .iter()
                    .zip(&prints[j])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            } else {
                f64::INFINITY
            };
            out.push(
                "pair",
                json!({
                    "first": list[i].name,
                    "second": list[j].name,
                    "isospectral": rep.isospectral,
                    "max_deviation": rep.max_deviation,
                    "n_tested": rep.n_tested,
                    "fingerprint_distance": distance,
                }),
                rep.isospectral,
            );
        }
    }
    Ok(out)
}

fn a2(config: &RunConfig) -> Result<Outcome> {
    let mut out = Outcome::new(config, config.quadrature.seed);
    let mut results = Vec::new();
    for nb in std::iter::once(&config.first).chain(&config.second) {
        let res = integrate_a2(&nb.bracket, &config.profile, &config.quadrature)?;
        let significance = res.value.abs() / res.std_error;
        let mut body = serde_json::to_value(&res).expect("plain data serializes");
        body["bracket"] = nb.name.clone().into();
        body["significance"] = significance.into();
        out.push("a2", body, significance > A2_SIGNIFICANCE);
        results.push(res);
    }
    if let [r1, r2] = &results[..] {
        let combined = r1.std_error.hypot(r2.std_error);
        let difference = r1.value - r2.value;
        out.push(
            "a2_agreement",
            json!({
                "difference": difference,
                "combined_std_error": combined,
                "sigmas": difference.abs() / combined,
            }),
            difference.abs() <= A2_AGREEMENT_SIGMAS * combined,
        );
    }
    Ok(out)
}

fn sweep(config: &RunConfig) -> Result<Outcome> {
    let mut out = Outcome::new(config, config.quadrature.seed);
    let rep = sweep_s(
        &config.first.bracket,
        &config.profile,
        &config.s_list,
        &config.quadrature,
        &config.degrees,
    )?;
    let mut csv = String::from("s,a2,stderr,n_nodes,seed\n");
    for row in &rep.rows {
        let _ = writeln!(csv, "{},{:e},{:e},{},{}", row.s, row.a2, row.stderr, row.n_nodes, row.seed);
        out.push(
            "sweep_row",
            serde_json::to_value(row).expect("plain data serializes"),
            true,
        );
    }
    let f = &rep.fit;
    let ok = f.relative_residual < SWEEP_MAX_RELATIVE_RESIDUAL
        && f.leading > 0.0
        && f.leading > SWEEP_LEADING_SIGMAS * f.leading_std_error;
    let mut body = serde_json::to_value(f).expect("plain data serializes");
    body["bracket"] = config.first.name.clone().into();
    out.push("sweep_fit", body, ok);
    out.csv = Some(csv);
    Ok(out)
}

fn test_envelope(profile: &CutoffProfile) -> Envelope {
    Envelope::Bump {
        r1sq: 1.5 * profile.r1sq,
        r2sq: 1.5 * profile.r2sq / (profile.s * profile.s),
    }
}

fn intertwine(config: &RunConfig) -> Result<Outcome> {
    let ic = &config.intertwine;
    let mut out = Outcome::new(config, ic.seed);
    let b2 = config
        .second
        .as_ref()
        .ok_or_else(|| CommandError::Config("intertwine needs `pair.builtin` or `pair.file`".into()))?;
    let b1 = &config.first;
    let (m, k) = (b1.bracket.m(), b1.bracket.k());
    let q = IntertwiningOperator::new(&b1.bracket, &b2.bracket, ic.modes)?;
    let tests = TestFunction::random_set(m, k, ic.functions, ic.modes, test_envelope(&config.profile), ic.seed);
    let points = interior_points(m, k, &config.profile, ic.points, 0.8, ic.seed.wrapping_add(1));
    let scheme = FDScheme {
        h: ic.h,
        ..FDScheme::default()
    };
    let rep = intertwine_residual(&b1.bracket, &b2.bracket, &config.profile, &q, &tests, &points, &scheme)?;
    let passed = rep.max_residual <= ic.tolerance;
    out.push(
        "intertwine",
        json!({
            "pair": [b1.name, b2.name],
            "N": rep.n,
            "n_functions": rep.n_functions,
            "n_points": rep.n_points,
            "max_residual": rep.max_residual,
            "truncation_tail": rep.truncation_tail,
            "tolerance": ic.tolerance,
        }),
        passed,
    );
    Ok(out)
}

/// Points with `|x|^2 < frac * R1^2`, every `r_p` at least a tenth of the
/// `u` radius, and `|r|^2 < frac * R2^2 / s^2`.
fn polar_samples(m: usize, k: usize, profile: &CutoffProfile, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frac: f64 = 0.8;
    let r1 = (frac * profile.r1sq).sqrt();
    let r2 = (frac * profile.r2sq).sqrt() / profile.s;
    let lo = 0.1 * r2 / (k as f64).sqrt();
    let hi = r2 / (k as f64).sqrt();
    (0..count)
        .map(|_| {
            let x: Vec<f64> = loop {
                let x: Vec<f64> = (0..m).map(|_| rng.random_range(-r1..r1)).collect();
                if x.iter().map(|a| a * a).sum::<f64>() < r1 * r1 {
                    break x;
                }
            };
            let r = (0..k).map(|_| rng.random_range(lo..hi)).collect();
            let theta = (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            (x, r, theta)
        })
        .collect()
}

fn validate(config: &RunConfig) -> Result<Outcome> {
    let seed = config.quadrature.seed;
    let mut out = Outcome::new(config, seed);
    let profile = &config.profile;

    let known = validate_known(&FDScheme::default())?;
    let passed = known.passed;
    out.push(
        "oracle_self_test",
        serde_json::to_value(&known).expect("plain data serializes"),
        passed,
    );

    let scheme = FDScheme::for_profile(profile);
    for nb in std::iter::once(&config.first).chain(&config.second) {
        let b = &nb.bracket;
        let (m, k) = (b.m(), b.k());

        let mut det_err = 0.0_f64;
        for (x, r, theta) in polar_samples(m, k, profile, 1000, seed) {
            let g = metric_at(b, profile, &Point::from_polar(x, &r, &theta))?;
            det_err = det_err.max((g.determinant() - 1.0).abs());
        }
        let outside = is_euclidean_outside(b, profile, 1000, seed)?;
        out.push(
            "metric",
            json!({"bracket": nb.name, "max_det_error": det_err, "identity_outside_support": outside}),
            det_err <= DET_TOL && outside,
        );

        let mut worst = [0.0_f64; 3];
        let mut worst_symmetry = 0.0_f64;
        for (x, r, theta) in polar_samples(m, k, profile, 20, seed.wrapping_add(1)) {
            let fc = FrameCurvature::compute(b, profile, &x, &r)?;
            let o = scalar_invariants_fd(b, profile, &Point::from_polar(x, &r, &theta), &scheme)?;
            let rel = |a: f64, c: f64| (a - c).abs() / c.abs().max(1e-12);
            worst[0] = worst[0].max(rel(fc.tau(), o.tau));
            worst[1] = worst[1].max(rel(fc.norm_ric_sq, o.norm_ric_sq));
            worst[2] = worst[2].max(rel(fc.norm_riem_sq, o.norm_riem_sq));
            let scale = fc.curvature.riem.max_abs().max(1.0);
            for d in fc.symmetry_defects() {
                worst_symmetry = worst_symmetry.max(d / scale);
            }
        }
        out.push(
            "frame_vs_oracle",
            json!({
                "bracket": nb.name,
                "points": 20,
                "tau_rel": worst[0],
                "ric_sq_rel": worst[1],
                "riem_sq_rel": worst[2],
                "symmetry_defect": worst_symmetry,
            }),
            worst.iter().all(|w| *w <= FRAME_ORACLE_REL_TOL) && worst_symmetry <= FLAT_TOL,
        );
    }

    let first = &config.first.bracket;
    let zero = Bracket::zero(first.m(), first.k());
    let mut flat = 0.0_f64;
    for (x, r, _) in polar_samples(first.m(), first.k(), profile, 100, seed.wrapping_add(2)) {
        flat = flat.max(FrameCurvature::compute(&zero, profile, &x, &r)?.curvature.riem.max_abs());
    }
    out.push("flatness", json!({"points": 100, "max_riemann": flat}), flat <= FLAT_TOL);
    Ok(out)
}
