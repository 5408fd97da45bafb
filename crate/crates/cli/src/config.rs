//! Experiment configuration: flat `key = value` files with command-line
//! overrides on top (CLI > file > defaults).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dweuler::ic::{KHConfig, VortexConfig};
use dweuler::{GasParams, Scheme, SchemeConfig};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Largest ladder level accepted (n_x = 2^11).
pub const MAX_LEVEL: u32 = 6;

/// Keys with these prefixes are informational (manifest output) and ignored
/// when a file is loaded as a configuration.
const INFO_PREFIXES: [&str; 2] = ["run.", "tool."];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    KelvinHelmholtz,
    Vortex,
    Constant,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::KelvinHelmholtz => "kh",
            Problem::Vortex => "vortex",
            Problem::Constant => "constant",
        }
    }
}

impl std::str::FromStr for Problem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kh" => Ok(Problem::KelvinHelmholtz),
            "vortex" => Ok(Problem::Vortex),
            "constant" => Ok(Problem::Constant),
            other => Err(format!("unknown problem {other:?} (expected kh, vortex or constant)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub scheme: SchemeConfig,
    pub gamma: f64,
    pub kh: KHConfig,
    pub vortex: VortexConfig,
    /// Primitive state `(ρ, u₁, u₂, p)` for the constant problem.
    pub constant: [f64; 4],
    pub n_lo: u32,
    pub n_hi: u32,
    pub out: PathBuf,
    /// Dump every k-th step; 0 dumps only the final state.
    pub snapshot_every: usize,
    /// Accumulate weak-form residuals during `run`.
    pub consistency: bool,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: Problem::KelvinHelmholtz,
            scheme: SchemeConfig {
                t_end: 2.0,
                ..SchemeConfig::default()
            },
            gamma: 1.4,
            kh: KHConfig::default(),
            vortex: VortexConfig::default(),
            constant: [1.0, 0.0, 0.0, 1.0],
            n_lo: 1,
            n_hi: 3,
            out: PathBuf::from("dweuler-out"),
            snapshot_every: 0,
            consistency: true,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_list<const K: usize>(key: &str, value: &str) -> Result<[f64; K], CliError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != K {
        return Err(CliError::Config(format!(
            "{key}: expected {K} comma-separated numbers, got {value:?}"
        )));
    }
    let mut out = [0.0; K];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_num(key, p)?;
    }
    Ok(out)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn join<const K: usize>(v: [f64; K]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

/// Splits `key = value` lines; `#` starts a comment line.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected `key = value`, got {line:?}", lineno + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "problem" => self.problem = value.parse().map_err(CliError::Config)?,
            "scheme" => {
                self.scheme.scheme = value
                    .parse::<Scheme>()
                    .map_err(|e| CliError::Config(e.to_string()))?
            }
            "gamma" => self.gamma = parse_num(key, value)?,
            "cfl" => self.scheme.cfl = parse_num(key, value)?,
            "t_end" => self.scheme.t_end = parse_num(key, value)?,
            "alpha_u" => self.scheme.vfv_alpha_velocity = parse_num(key, value)?,
            "alpha_rho" => self.scheme.vfv_alpha_density = parse_num(key, value)?,
            "global_lambda" => self.scheme.global_lambda = parse_bool(key, value)?,
            "max_retries" => self.scheme.max_retries = parse_num(key, value)?,
            "n_lo" => self.n_lo = parse_num(key, value)?,
            "n_hi" => self.n_hi = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "snapshot_every" => self.snapshot_every = parse_num(key, value)?,
            "workers" => self.workers = parse_num(key, value)?,
            "consistency" => self.consistency = parse_bool(key, value)?,
            "seed" => self.kh.seed = parse_num(key, value)?,
            "kh.j1" => self.kh.j1 = parse_num(key, value)?,
            "kh.j2" => self.kh.j2 = parse_num(key, value)?,
            "kh.eps" => self.kh.eps = parse_num(key, value)?,
            "kh.modes" => self.kh.modes = parse_num(key, value)?,
            "kh.inner" => self.kh.inner_state = parse_list(key, value)?,
            "kh.outer" => self.kh.outer_state = parse_list(key, value)?,
            "vortex.center" => self.vortex.center = parse_list(key, value)?,
            "vortex.radius" => self.vortex.radius = parse_num(key, value)?,
            "vortex.strength" => self.vortex.strength = parse_num(key, value)?,
            "vortex.velocity" => self.vortex.velocity = parse_list(key, value)?,
            "constant.state" => self.constant = parse_list(key, value)?,
            _ if INFO_PREFIXES.iter().any(|p| key.starts_with(p)) => {}
            _ => return Err(CliError::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn gas(&self) -> Result<GasParams, CliError> {
        GasParams::new(self.gamma).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<u32> {
        self.n_lo..=self.n_hi
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let gas = self.gas()?;
        let wrap = |e: dweuler::Error| CliError::Config(e.to_string());
        self.scheme.validate().map_err(wrap)?;
        if self.n_lo < 1 || self.n_hi > MAX_LEVEL || self.n_lo > self.n_hi {
            return Err(CliError::Config(format!(
                "resolution range {}..{} must satisfy 1 ≤ n_lo ≤ n_hi ≤ {MAX_LEVEL}",
                self.n_lo, self.n_hi
            )));
        }
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        match self.problem {
            Problem::KelvinHelmholtz => self.kh.validate().map_err(wrap)?,
            Problem::Vortex => self.vortex.validate(&gas).map_err(wrap)?,
            Problem::Constant => {
                let [rho, _, _, p] = self.constant;
                if !(rho > 0.0 && p > 0.0) {
                    return Err(CliError::Config(format!(
                        "constant.state needs positive density and pressure, got {rho}, {p}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every setting that influences computed results, in a fixed order.
    /// Output location and worker count are excluded: they never change the
    /// numbers.
    pub fn canonical(&self) -> BTreeMap<&'static str, String> {
        let s = &self.scheme;
        let mut m = BTreeMap::new();
        m.insert("problem", self.problem.name().to_string());
        m.insert("scheme", s.scheme.to_string());
        m.insert("gamma", format!("{:?}", self.gamma));
        m.insert("cfl", format!("{:?}", s.cfl));
        m.insert("t_end", format!("{:?}", s.t_end));
        m.insert("alpha_u", format!("{:?}", s.vfv_alpha_velocity));
        m.insert("alpha_rho", format!("{:?}", s.vfv_alpha_density));
        m.insert("global_lambda", s.global_lambda.to_string());
        m.insert("max_retries", s.max_retries.to_string());
        m.insert("n_lo", self.n_lo.to_string());
        m.insert("n_hi", self.n_hi.to_string());
        m.insert("snapshot_every", self.snapshot_every.to_string());
        m.insert("consistency", self.consistency.to_string());
        m.insert("seed", self.kh.seed.to_string());
        m.insert("kh.j1", format!("{:?}", self.kh.j1));
        m.insert("kh.j2", format!("{:?}", self.kh.j2));
        m.insert("kh.eps", format!("{:?}", self.kh.eps));
        m.insert("kh.modes", self.kh.modes.to_string());
        m.insert("kh.inner", join(self.kh.inner_state));
        m.insert("kh.outer", join(self.kh.outer_state));
        m.insert("vortex.center", join(self.vortex.center));
        m.insert("vortex.radius", format!("{:?}", self.vortex.radius));
        m.insert("vortex.strength", format!("{:?}", self.vortex.strength));
        m.insert("vortex.velocity", join(self.vortex.velocity));
        m.insert("constant.state", join(self.constant));
        m
    }

    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.canonical() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of [`Self::canonical_text`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}
