use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cohflux::battery::AlphaProfile;
use cohflux::coupling::{canonical_coupling, explicit_coupling, Coupling, CouplingEntry, GridMode};
use cohflux::error::Error;
use cohflux::protocol::WindowSpec;
use cohflux::state::DiagonalState;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Conditions,
    IntegralFt,
    SecondLaw,
    ThirdLaw,
    Jarzynski,
    TailBound,
    Crooks,
    Overlap,
    Oracle,
    RenyiCatalytic,
    EntropyVsMajorisation,
    Mixtures,
}

const CHECK_NAMES: [(Check, &str); 12] = [
    (Check::Conditions, "conditions"),
    (Check::IntegralFt, "integral_ft"),
    (Check::SecondLaw, "second_law"),
    (Check::ThirdLaw, "third_law"),
    (Check::Jarzynski, "jarzynski"),
    (Check::TailBound, "tail_bound"),
    (Check::Crooks, "crooks"),
    (Check::Overlap, "overlap"),
    (Check::Oracle, "oracle"),
    (Check::RenyiCatalytic, "renyi_catalytic"),
    (Check::EntropyVsMajorisation, "entropy_vs_majorisation"),
    (Check::Mixtures, "mixtures"),
];

impl Check {
    pub fn name(self) -> &'static str {
        CHECK_NAMES.iter().find(|(c, _)| *c == self).map(|(_, n)| *n).unwrap()
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        CHECK_NAMES
            .iter()
            .find(|(_, n)| *n == s.trim())
            .map(|(c, _)| *c)
            .ok_or_else(|| {
                let known: Vec<&str> = CHECK_NAMES.iter().map(|(_, n)| *n).collect();
                CliError::Config(format!("checks: unknown check {s:?}; known: {}", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    UniformWindow,
    TruncatedGaussian { sigma: f64 },
}

impl ProfileSpec {
    /// Battery profile centred on the levels `[lo, hi]`.
    pub fn on(self, lo: usize, hi: usize) -> AlphaProfile {
        match self {
            ProfileSpec::UniformWindow => AlphaProfile::UniformWindow { lo, hi },
            ProfileSpec::TruncatedGaussian { sigma } => AlphaProfile::TruncatedGaussian {
                center: (lo + hi) as f64 / 2.0,
                sigma,
                lo,
                hi,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    #[default]
    Canonical,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    #[serde(default)]
    pub mode: CouplingMode,
    #[serde(default = "exact_grid")]
    pub grid: GridMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<CouplingEntry>>,
}

fn exact_grid() -> GridMode {
    GridMode::ExactGrid
}

impl Default for CouplingSpec {
    fn default() -> Self {
        Self { mode: CouplingMode::Canonical, grid: GridMode::ExactGrid, table: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepSpec {
    /// `[start, stop, step]`, inclusive.
    N([usize; 3]),
    Sigma(Vec<f64>),
}

/// Configuration as written in the JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub u: u32,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "uniform_profile")]
    pub alpha_profile: ProfileSpec,
    #[serde(default)]
    pub coupling: CouplingSpec,
    #[serde(default)]
    pub checks: Option<Vec<Check>>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default = "default_tail_offsets")]
    pub tail_r: Vec<f64>,
    #[serde(default = "default_mixtures")]
    pub mixtures: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<Vec<f64>>,
}

fn uniform_profile() -> ProfileSpec {
    ProfileSpec::UniformWindow
}

fn default_tail_offsets() -> Vec<f64> {
    vec![0.1, 0.5, 1.0, 2.0]
}

fn default_mixtures() -> usize {
    100
}

/// Validated configuration with defaults applied.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub raw: RawConfig,
    pub p: DiagonalState,
    pub q: DiagonalState,
    pub coupling: Coupling,
    pub window: WindowSpec,
    pub checks: Vec<Check>,
    pub default_tolerance: f64,
}

impl Experiment {
    pub fn n(&self) -> usize {
        self.window.n
    }

    pub fn tolerance(&self, check: Check) -> f64 {
        self.raw.tolerances.get(check.name()).copied().unwrap_or(self.default_tolerance)
    }

    pub fn wants(&self, check: Check) -> bool {
        self.checks.contains(&check)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.raw.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn field(name: &str, e: Error) -> CliError {
    let msg = match e {
        Error::Validation(m) => m,
        other => other.to_string(),
    };
    CliError::Config(format!("{name}: {msg}"))
}

pub fn parse_config(path: &Path) -> CliResult<Experiment> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let raw: RawConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config: {e}")))?;
    validate(raw)
}

pub fn validate(mut raw: RawConfig) -> CliResult<Experiment> {
    let p = DiagonalState::new(raw.p.clone()).map_err(|e| field("p", e))?;
    let q = DiagonalState::new(raw.q.clone()).map_err(|e| field("q", e))?;
    if p.dim() != q.dim() {
        return Err(CliError::Config(format!(
            "q: length {} differs from p length {}",
            q.dim(),
            p.dim()
        )));
    }
    if raw.u < 2 {
        return Err(CliError::Config(format!("u: {} < 2", raw.u)));
    }
    if let ProfileSpec::TruncatedGaussian { sigma } = raw.alpha_profile {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(CliError::Config(format!("alpha_profile.sigma: must be positive, got {sigma}")));
        }
    }

    let coupling = match raw.coupling.mode {
        CouplingMode::Canonical => {
            if raw.coupling.table.is_some() {
                return Err(CliError::Config("coupling.table: only allowed with mode \"explicit\"".into()));
            }
            canonical_coupling(&p, &q, raw.u, raw.coupling.grid).map_err(|e| field("coupling", e))?
        }
        CouplingMode::Explicit => {
            let Some(table) = &raw.coupling.table else {
                return Err(CliError::Config("coupling.table: required with mode \"explicit\"".into()));
            };
            for (k, e) in table.iter().enumerate() {
                if !(e.value >= 0.0 && e.value.is_finite()) {
                    return Err(CliError::Config(format!(
                        "coupling.table[{k}].value: must be finite and nonnegative, got {}",
                        e.value
                    )));
                }
                if e.i >= p.dim() || e.j >= p.dim() {
                    return Err(CliError::Config(format!(
                        "coupling.table[{k}]: index ({}, {}) outside dimension {}",
                        e.i,
                        e.j,
                        p.dim()
                    )));
                }
            }
            explicit_coupling(&p, &q, table, raw.u, raw.coupling.grid).map_err(|e| field("coupling", e))?
        }
    };

    let f_max = coupling.f_max() as usize;
    let n = raw.n.unwrap_or(4 * f_max + 3);
    let window = WindowSpec::new(n, f_max).map_err(|e| field("n", e))?;
    raw.n = Some(n);

    let mut default_tolerance = DEFAULT_TOLERANCE;
    for (key, &tol) in &raw.tolerances {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(CliError::Config(format!("tolerances.{key}: must be positive, got {tol}")));
        }
        if key == "default" {
            default_tolerance = tol;
        } else {
            key.parse::<Check>()
                .map_err(|_| CliError::Config(format!("tolerances.{key}: not a known check")))?;
        }
    }
    for &r in &raw.tail_r {
        if !(r > 0.0 && r.is_finite()) {
            return Err(CliError::Config(format!("tail_r: offsets must be positive, got {r}")));
        }
    }
    if let Some(grid) = &raw.alpha_grid {
        if grid.iter().any(|a| !a.is_finite() || *a == 0.0 || *a == 1.0) {
            return Err(CliError::Config("alpha_grid: orders must be finite and differ from 0 and 1".into()));
        }
    }
    match &raw.sweep {
        Some(SweepSpec::N([start, stop, step])) if *step == 0 || start > stop => {
            return Err(CliError::Config(format!(
                "sweep.n: need start <= stop and step > 0, got [{start}, {stop}, {step}]"
            )));
        }
        Some(SweepSpec::Sigma(s)) if s.is_empty() || s.iter().any(|v| !(*v > 0.0 && v.is_finite())) => {
            return Err(CliError::Config("sweep.sigma: need a nonempty list of positive values".into()));
        }
        _ => {}
    }

    let checks = match &raw.checks {
        Some(list) => dedup(list.clone()),
        None => default_checks(&coupling),
    };
    raw.checks = Some(checks.clone());
    Ok(Experiment { raw, p, q, coupling, window, checks, default_tolerance })
}

fn dedup(mut checks: Vec<Check>) -> Vec<Check> {
    checks.sort();
    checks.dedup();
    checks
}

/// Everything whose preconditions the coupling meets.
fn default_checks(c: &Coupling) -> Vec<Check> {
    let mut checks = vec![Check::Conditions, Check::SecondLaw, Check::ThirdLaw, Check::Overlap];
    if c.mode() == GridMode::ExactGrid {
        checks.push(Check::IntegralFt);
    }
    if c.q().is_uniform_on_support(1e-12) {
        checks.extend([Check::Jarzynski, Check::TailBound, Check::Crooks]);
    }
    dedup(checks)
}

/// Replaces the configured checks with a comma-separated list.
pub fn override_checks(exp: &mut Experiment, list: &str) -> CliResult<()> {
    let checks = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<CliResult<Vec<Check>>>()?;
    if checks.is_empty() {
        return Err(CliError::Config("checks: empty list".into()));
    }
    exp.checks = dedup(checks);
    exp.raw.checks = Some(exp.checks.clone());
    Ok(())
}
