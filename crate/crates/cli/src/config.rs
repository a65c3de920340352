//! Experiment configuration, read from a single TOML file. The schema is
//! documented in `docs/config.md`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use dioph_core::funcdsl::{parse, Expr, ParseError, Params};
use dioph_core::rationals::{parse_rational, Interval};
use dioph_core::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Count,
    Cover,
    Mild,
    Pfaff,
    Holo,
    Comb,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Count => "count",
            Kind::Cover => "cover",
            Kind::Mild => "mild",
            Kind::Pfaff => "pfaff",
            Kind::Holo => "holo",
            Kind::Comb => "comb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    #[serde(default)]
    pub seed: u64,
    pub precision: Option<u32>,
    pub output: Option<OutputConfig>,
    pub set: Option<SetConfig>,
    pub count: Option<CountConfig>,
    pub cover: Option<CoverConfig>,
    pub mild: Option<MildConfig>,
    pub pfaff: Option<PfaffConfig>,
    pub holo: Option<HoloConfig>,
    pub comb: Option<CombConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub csv: bool,
}

fn yes() -> bool {
    true
}

/// A definable set: either the graph `x_n = f(x_1..x_{n−1})` or the common
/// zero set of `equations`, cut to a closed box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetConfig {
    pub dim: usize,
    pub graph: Option<String>,
    #[serde(default)]
    pub equations: Vec<String>,
    #[serde(rename = "box")]
    pub bounds: Vec<[String; 2]>,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountConfig {
    pub heights: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    #[default]
    Greedy,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverConfig {
    pub heights: Vec<u64>,
    /// Dimension of the parameter space, for the default degree.
    #[serde(default = "one")]
    pub m: usize,
    pub degree: Option<u32>,
    #[serde(default)]
    pub strategy: StrategyName,
    /// Starting grid radius; halved on failure down to `floor`.
    pub radius: Option<String>,
    pub floor: Option<String>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderSpec {
    Finite(u32),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertSpec {
    pub a: String,
    pub c: String,
    pub order: OrderSpec,
    #[serde(default)]
    pub weak: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MildFunction {
    pub name: String,
    pub expr: String,
    pub m: usize,
    pub cert: CertSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum MildDerive {
    Rescale { of: String, r: u32 },
    Substitute { of: String, l: Vec<u32>, r: u32 },
    Compose { f: String, g: String, r: OrderSpec },
    Root { of: String, eps: String, ell: u32, partial: Option<usize> },
    Monomial { mu: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MildConfig {
    /// Grid points per axis inside `(0,1)^m`.
    #[serde(default = "default_grid")]
    pub grid: u32,
    /// Extra uniformly random rational grid points, drawn from the seed.
    #[serde(default)]
    pub random_points: usize,
    #[serde(default = "default_order")]
    pub max_order: u32,
    #[serde(default)]
    pub functions: Vec<MildFunction>,
    #[serde(default)]
    pub derive: Vec<MildDerive>,
}

fn default_grid() -> u32 {
    20
}

fn default_order() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfaffOp {
    pub op: String,
    pub d: Option<u32>,
    pub inputs: Vec<[u32; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfaffBound {
    pub cx: [u32; 3],
    pub d: u32,
    pub c6: String,
    pub c7: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfaffChain {
    pub name: String,
    pub n: usize,
    pub degree: u32,
    /// `g[i][j]`: the derivative of `f_j` in `x_i`, in terms of `x` and `f`.
    pub g: Vec<Vec<String>>,
    pub solutions: Vec<String>,
    /// Random sample points in `(0, 1)^n`, drawn from the seed.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfaffConfig {
    #[serde(default)]
    pub ops: Vec<PfaffOp>,
    #[serde(default)]
    pub bounds: Vec<PfaffBound>,
    #[serde(default)]
    pub chains: Vec<PfaffChain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TGrid {
    pub lo: String,
    pub hi: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoloConfig {
    pub generator: String,
    pub m: usize,
    pub radius: String,
    pub bound: String,
    #[serde(default = "default_truncation")]
    pub truncation: u32,
    #[serde(default = "default_param")]
    pub param: String,
    pub t_grid: TGrid,
    /// Lattice size for the ε search; the search is skipped when absent.
    pub proof_steps: Option<usize>,
    /// `(r, r0)` for `B_Λ(r)`.
    pub b_lambda: Option<[String; 2]>,
    pub normalize_to: Option<String>,
}

fn default_truncation() -> u32 {
    dioph_core::holofam::DEFAULT_TRUNCATION
}

fn default_param() -> String {
    "t".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombConfig {
    #[serde(default)]
    pub triples: Vec<[u64; 3]>,
    #[serde(default = "default_k")]
    pub k_max: usize,
    #[serde(default = "default_delta")]
    pub delta_max: u64,
    pub companion_n: Option<usize>,
    pub companion_nu: Option<u32>,
}

fn default_k() -> usize {
    3
}

fn default_delta() -> u64 {
    10
}

/// A configuration problem, reported with exit code 2.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Syntax(String),
    #[error("{field}: {error}")]
    Parse { field: String, error: ParseError },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("missing section [{0}]")]
    Missing(&'static str),
    #[error("config kind {config} does not match subcommand {command}")]
    KindMismatch { config: &'static str, command: &'static str },
}

pub(crate) fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

pub(crate) fn expr(field: &str, text: &str) -> Result<Expr, ConfigError> {
    parse(text).map_err(|error| ConfigError::Parse {
        field: field.into(),
        error,
    })
}

pub(crate) fn rational(field: &str, text: &str) -> Result<Rational, ConfigError> {
    parse_rational(text).map_err(|e| invalid(field, e.to_string()))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that every expression parses, every rational is well formed and
    /// every height is at least 1.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(set) = &self.set {
            set.resolve()?;
        }
        if let Some(c) = &self.count {
            check_heights("count.heights", &c.heights)?;
        }
        if let Some(c) = &self.cover {
            check_heights("cover.heights", &c.heights)?;
            for (f, v) in [("cover.radius", &c.radius), ("cover.floor", &c.floor)] {
                if let Some(v) = v {
                    rational(f, v)?;
                }
            }
        }
        if let Some(m) = &self.mild {
            for (i, f) in m.functions.iter().enumerate() {
                expr(&format!("mild.functions[{i}].expr"), &f.expr)?;
                rational(&format!("mild.functions[{i}].cert.a"), &f.cert.a)?;
                rational(&format!("mild.functions[{i}].cert.c"), &f.cert.c)?;
            }
        }
        if let Some(p) = &self.pfaff {
            for (i, b) in p.bounds.iter().enumerate() {
                expr(&format!("pfaff.bounds[{i}].c6"), &b.c6)?;
                expr(&format!("pfaff.bounds[{i}].c7"), &b.c7)?;
            }
            for (i, c) in p.chains.iter().enumerate() {
                for (a, row) in c.g.iter().enumerate() {
                    for (b, g) in row.iter().enumerate() {
                        expr(&format!("pfaff.chains[{i}].g[{a}][{b}]"), g)?;
                    }
                }
                for (a, s) in c.solutions.iter().enumerate() {
                    expr(&format!("pfaff.chains[{i}].solutions[{a}]"), s)?;
                }
            }
        }
        if let Some(h) = &self.holo {
            expr("holo.generator", &h.generator)?;
            rational("holo.radius", &h.radius)?;
            rational("holo.bound", &h.bound)?;
            rational("holo.t_grid.lo", &h.t_grid.lo)?;
            rational("holo.t_grid.hi", &h.t_grid.hi)?;
        }
        Ok(())
    }
}

fn check_heights(field: &str, hs: &[u64]) -> Result<(), ConfigError> {
    if hs.contains(&0) {
        return Err(invalid(field, "heights must be at least 1"));
    }
    Ok(())
}

/// A parsed [`SetConfig`].
#[derive(Debug, Clone)]
pub struct ResolvedSet {
    pub dim: usize,
    pub graph: Option<Expr>,
    pub equations: Vec<Expr>,
    pub bounds: Vec<Interval>,
    pub params: Params,
}

impl SetConfig {
    pub fn resolve(&self) -> Result<ResolvedSet, ConfigError> {
        if self.dim == 0 {
            return Err(invalid("set.dim", "dimension must be positive"));
        }
        if self.graph.is_some() == !self.equations.is_empty() {
            return Err(invalid("set", "give exactly one of graph or equations"));
        }
        if self.bounds.len() != self.dim {
            return Err(invalid("set.box", format!("{} intervals for dimension {}", self.bounds.len(), self.dim)));
        }
        let graph = self.graph.as_deref().map(|g| expr("set.graph", g)).transpose()?;
        let equations = self
            .equations
            .iter()
            .enumerate()
            .map(|(i, e)| expr(&format!("set.equations[{i}]"), e))
            .collect::<Result<Vec<_>, _>>()?;
        let bounds = self
            .bounds
            .iter()
            .enumerate()
            .map(|(i, [lo, hi])| Ok((rational(&format!("set.box[{i}]"), lo)?, rational(&format!("set.box[{i}]"), hi)?)))
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let params = self
            .params
            .iter()
            .map(|(k, v)| Ok((k.clone(), rational(&format!("set.params.{k}"), v)?)))
            .collect::<Result<Params, ConfigError>>()?;
        Ok(ResolvedSet {
            dim: self.dim,
            graph,
            equations,
            bounds,
            params,
        })
    }
}
