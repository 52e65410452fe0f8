//! Flat `section.key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use isophasal_core::bracket::{example_bracket, Bracket, ExampleBracket};
use isophasal_core::heat::{QuadratureMethod, QuadratureSpec, DEFAULT_DEGREES, DEFAULT_REPLICATES};
use isophasal_core::metric::CutoffProfile;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: line {line}: {message}")]
    Line { path: String, line: usize, message: String },
    #[error("{field}: {message}")]
    Field { field: &'static str, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BracketSource {
    Builtin(ExampleBracket),
    File(PathBuf),
}

impl BracketSource {
    pub fn label(&self) -> String {
        match self {
            Self::Builtin(b) => b.name().to_string(),
            Self::File(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedBracket {
    pub name: String,
    pub bracket: Bracket,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntertwineConfig {
    pub modes: i32,
    pub functions: usize,
    pub points: usize,
    pub seed: u64,
    pub h: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub first: NamedBracket,
    pub second: Option<NamedBracket>,
    pub profile: CutoffProfile,
    pub quadrature: QuadratureSpec,
    pub s_list: Vec<f64>,
    pub degrees: Vec<i32>,
    pub intertwine: IntertwineConfig,
    pub out_dir: Option<PathBuf>,
}

/// Command-line overrides applied after the file is read.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub nodes: Option<usize>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub s_list: Option<Vec<f64>>,
    pub out_dir: Option<PathBuf>,
}

struct Raw {
    path: String,
    entries: Vec<(usize, String, String)>,
}

const KEYS: &[&str] = &[
    "bracket.builtin",
    "bracket.file",
    "bracket.m",
    "bracket.k",
    "pair.builtin",
    "pair.file",
    "cutoff.kind",
    "cutoff.r1sq",
    "cutoff.r2sq",
    "cutoff.amplitude",
    "cutoff.s",
    "quadrature.method",
    "quadrature.nodes",
    "quadrature.replicates",
    "quadrature.seed",
    "sweep.s_list",
    "sweep.degrees",
    "intertwine.modes",
    "intertwine.functions",
    "intertwine.points",
    "intertwine.seed",
    "intertwine.h",
    "intertwine.tolerance",
    "output.dir",
];

impl Raw {
    fn parse(path: &str, text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError::Line {
                path: path.to_string(),
                line: i + 1,
                message,
            };
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(err(format!("`{key}` has no value")));
            }
            if let Some((first, _, _)) = entries.iter().find(|e| e.1 == key) {
                return Err(err(format!("`{key}` already set on line {first}")));
            }
            entries.push((i + 1, key.to_string(), value.to_string()));
        }
        Ok(Self {
            path: path.to_string(),
            entries,
        })
    }

    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.entries
            .iter()
            .find(|e| e.1 == key)
            .map(|e| (e.0, e.2.as_str()))
    }

    fn err(&self, line: usize, message: String) -> ConfigError {
        ConfigError::Line {
            path: self.path.clone(),
            line,
            message,
        }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse()
                .map_err(|e| self.err(line, format!("`{key}`: cannot parse `{v}`: {e}"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let Some((line, v)) = self.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|e| self.err(line, format!("`{key}`: cannot parse `{}`: {e}", t.trim())))
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    fn source(&self, section: &str, base: &Path) -> Result<Option<(usize, BracketSource)>, ConfigError> {
        let builtin = self.get(&format!("{section}.builtin"));
        let file = self.get(&format!("{section}.file"));
        match (builtin, file) {
            (Some((l, _)), Some(_)) => Err(self.err(
                l,
                format!("set only one of `{section}.builtin` and `{section}.file`"),
            )),
            (Some((l, name)), None) => ExampleBracket::from_name(name)
                .map(|b| Some((l, BracketSource::Builtin(b))))
                .ok_or_else(|| self.err(l, format!("unknown builtin bracket `{name}`"))),
            (None, Some((l, p))) => Ok(Some((l, BracketSource::File(base.join(p))))),
            (None, None) => Ok(None),
        }
    }

    fn load(&self, line: usize, source: &BracketSource) -> Result<NamedBracket, ConfigError> {
        let bracket = match source {
            BracketSource::Builtin(b) => example_bracket(*b),
            BracketSource::File(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    self.err(line, format!("cannot read bracket file {}: {e}", p.display()))
                })?;
                Bracket::from_text(&text)
                    .map_err(|e| self.err(line, format!("bracket file {}: {e}", p.display())))?
            }
        };
        Ok(NamedBracket {
            name: source.label(),
            bracket,
        })
    }
}

impl RunConfig {
    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&path.display().to_string(), &text, base, overrides)
    }

    pub fn from_text(path: &str, text: &str, base: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let raw = Raw::parse(path, text)?;

        let (line1, src1) = raw
            .source("bracket", base)?
            .unwrap_or((0, BracketSource::Builtin(ExampleBracket::Cross1)));
        let first = raw.load(line1, &src1)?;
        let second = match raw.source("pair", base)? {
            Some((l, src)) => Some((l, raw.load(l, &src)?)),
            None => None,
        };
        for (key, actual) in [("bracket.m", first.bracket.m()), ("bracket.k", first.bracket.k())] {
            if let Some((line, v)) = raw.get(key) {
                let declared: usize = raw.parsed(key, 0)?;
                if declared != actual {
                    return Err(raw.err(
                        line,
                        format!("`{key}` = {v} but bracket `{}` has {actual}", first.name),
                    ));
                }
            }
        }
        if let Some((line, b2)) = &second {
            let (m1, k1) = (first.bracket.m(), first.bracket.k());
            let (m2, k2) = (b2.bracket.m(), b2.bracket.k());
            if (m1, k1) != (m2, k2) {
                return Err(raw.err(
                    *line,
                    format!(
                        "pair bracket `{}` is (m, k) = ({m2}, {k2}) but `{}` is ({m1}, {k1})",
                        b2.name, first.name
                    ),
                ));
            }
        }

        if let Some((line, kind)) = raw.get("cutoff.kind") {
            if kind != "bump" {
                return Err(raw.err(line, format!("unsupported cutoff kind `{kind}`")));
            }
        }
        let reference = CutoffProfile::reference();
        let s = raw.parsed("cutoff.s", 1.0)?;
        let profile = CutoffProfile::new(
            raw.parsed("cutoff.r1sq", reference.r1sq)?,
            raw.parsed("cutoff.r2sq", reference.r2sq)?,
            raw.parsed("cutoff.amplitude", reference.amplitude)?,
        )
        .and_then(|p| p.with_scale(s))
        .map_err(|e| ConfigError::Field {
            field: "cutoff",
            message: e.to_string(),
        })?;

        let method = match raw.get("quadrature.method") {
            None => QuadratureMethod::Qmc,
            Some((line, name)) => QuadratureMethod::from_name(name)
                .ok_or_else(|| raw.err(line, format!("unknown quadrature method `{name}`")))?,
        };
        let quadrature = QuadratureSpec {
            method,
            n_nodes: overrides
                .nodes
                .map_or_else(|| raw.parsed("quadrature.nodes", 100_000), Ok)?,
            n_replicates: overrides
                .replicates
                .map_or_else(|| raw.parsed("quadrature.replicates", DEFAULT_REPLICATES), Ok)?,
            seed: overrides.seed.map_or_else(|| raw.parsed("quadrature.seed", 0), Ok)?,
        };
        quadrature.validate().map_err(|e| ConfigError::Field {
            field: "quadrature",
            message: e.to_string(),
        })?;

        let s_list = match &overrides.s_list {
            Some(s) => s.clone(),
            None => raw
                .list("sweep.s_list")?
                .unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0, 16.0]),
        };
        check_s_list(&s_list)?;
        let degrees = raw
            .list("sweep.degrees")?
            .unwrap_or_else(|| DEFAULT_DEGREES.to_vec());
        if degrees.is_empty() || degrees.len() >= s_list.len() {
            return Err(ConfigError::Field {
                field: "sweep.degrees",
                message: format!("{} degrees for {} scales", degrees.len(), s_list.len()),
            });
        }

        let intertwine = IntertwineConfig {
            modes: raw.parsed("intertwine.modes", 2)?,
            functions: raw.parsed("intertwine.functions", 8)?,
            points: raw.parsed("intertwine.points", 40)?,
            seed: overrides.seed.map_or_else(|| raw.parsed("intertwine.seed", 0), Ok)?,
            h: raw.parsed("intertwine.h", 1e-3)?,
            tolerance: raw.parsed("intertwine.tolerance", 1e-4)?,
        };
        if intertwine.modes < 0 || intertwine.functions == 0 || intertwine.points == 0 {
            return Err(ConfigError::Field {
                field: "intertwine",
                message: "modes must be nonnegative, functions and points positive".into(),
            });
        }

        let out_dir = overrides.out_dir.clone().or_else(|| {
            raw.get("output.dir").map(|(_, d)| base.join(d))
        });

        Ok(Self {
            first,
            second: second.map(|s| s.1),
            profile,
            quadrature,
            s_list,
            degrees,
            intertwine,
            out_dir,
        })
    }

    /// Every resolved setting in a fixed order; the provenance hash is taken
    /// over this text, so comments and key order in the file do not matter.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("bracket.first", self.first.name.clone());
        kv("bracket.first.tensor", digest(self.first.bracket.to_text().as_bytes()));
        if let Some(b) = &self.second {
            kv("bracket.second", b.name.clone());
            kv("bracket.second.tensor", digest(b.bracket.to_text().as_bytes()));
        }
        let p = &self.profile;
        kv("cutoff", format!("bump {:e} {:e} {:e} {:e}", p.r1sq, p.r2sq, p.amplitude, p.s));
        let q = &self.quadrature;
        kv(
            "quadrature",
            format!("{:?} {} {} {}", q.method, q.n_nodes, q.n_replicates, q.seed),
        );
        kv("sweep.s_list", join(&self.s_list));
        kv("sweep.degrees", join(&self.degrees));
        let i = &self.intertwine;
        kv(
            "intertwine",
            format!("{} {} {} {} {:e} {:e}", i.modes, i.functions, i.points, i.seed, i.h, i.tolerance),
        );
        out
    }

    pub fn hash(&self) -> String {
        digest(self.canonical().as_bytes())
    }
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn check_s_list(s: &[f64]) -> Result<(), ConfigError> {
    let err = |message: String| ConfigError::Field {
        field: "sweep.s_list",
        message,
    };
    if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(err("scales must be positive".into()));
    }
    let mut d = s.to_vec();
    d.sort_by(f64::total_cmp);
    d.dedup();
    if d.len() < 5 || d[d.len() - 1] < 4.0 * d[0] {
        return Err(err("need at least 5 distinct scales spanning a factor of 4".into()));
    }
    Ok(())
}
