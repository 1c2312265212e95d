use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use survint::shapiq::ApproxMethod;
use survint::simulate::ScenarioId;
use survint::validation::Suite;
use survint::PredictionTarget;

use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "SURVINT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "survint-out";
pub const MANIFEST_FILE: &str = "run-manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Simulate,
    Explain,
    Validate,
    Benchmark,
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Explain => "explain",
            CommandKind::Validate => "validate",
            CommandKind::Benchmark => "benchmark",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// The simulation's ground-truth hazard.
    #[default]
    Truth,
    /// A Cox model fitted to the data.
    Cox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ImputerKind {
    #[default]
    Marginal,
    /// Gaussian conditional imputation.
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MethodKind {
    #[default]
    Exact,
    Approx(ApproxMethod),
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodKind::Exact => f.write_str("exact"),
            MethodKind::Approx(m) => f.write_str(m.as_str()),
        }
    }
}

impl From<MethodKind> for String {
    fn from(m: MethodKind) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for MethodKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("exact") {
            return Ok(MethodKind::Exact);
        }
        s.parse::<ApproxMethod>()
            .map(MethodKind::Approx)
            .map_err(|_| format!("unknown method {s:?}; expected exact, mc, perm or regression"))
    }
}

/// An instance given as a row index into the data or as explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSpec {
    Index(usize),
    Values(Vec<f64>),
}

impl FromStr for InstanceSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if !s.contains(',') {
            if let Ok(i) = s.parse::<usize>() {
                return Ok(InstanceSpec::Index(i));
            }
        }
        s.trim_matches(|c| c == '[' || c == ']')
            .split(',')
            .map(|v| v.trim().replace('\u{2212}', "-").parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map(InstanceSpec::Values)
            .map_err(|e| format!("instance must be a row index or comma-separated values: {e}"))
    }
}

/// Every setting of a run. Fields not used by a subcommand keep their
/// defaults; `None` means the subcommand picks its own default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: Option<CommandKind>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub scenario: Option<ScenarioId>,
    pub seed: Option<u64>,
    pub n: usize,
    pub rho: Option<f64>,
    pub split: bool,
    pub n_train: Option<usize>,
    pub data: Option<PathBuf>,
    pub model: ModelKind,
    pub model_file: Option<PathBuf>,
    pub features: Option<usize>,
    pub instance: Option<InstanceSpec>,
    pub target: Option<PredictionTarget>,
    pub order: Option<usize>,
    pub method: MethodKind,
    pub budget: Option<usize>,
    pub resample_per_timepoint: bool,
    pub imputer: ImputerKind,
    pub conditional_samples: usize,
    pub background: Option<usize>,
    pub timepoints: usize,
    pub smooth: bool,
    pub savgol_window: usize,
    pub savgol_order: usize,
    pub svg: bool,
    pub only: Vec<Suite>,
    pub tolerance_scale: f64,
    pub cox_seeds: usize,
    pub survival_draws: usize,
    pub budgets: Vec<usize>,
    pub methods: Vec<ApproxMethod>,
    pub runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let validation = survint::validation::ValidationConfig::default();
        RunConfig {
            command: None,
            out_dir: None,
            threads: None,
            scenario: None,
            seed: None,
            n: 1000,
            rho: None,
            split: false,
            n_train: None,
            data: None,
            model: ModelKind::Truth,
            model_file: None,
            features: None,
            instance: None,
            target: None,
            order: None,
            method: MethodKind::Exact,
            budget: None,
            resample_per_timepoint: false,
            imputer: ImputerKind::Marginal,
            conditional_samples: 1000,
            background: None,
            timepoints: 41,
            smooth: false,
            savgol_window: survint::metrics::DEFAULT_SAVGOL_WINDOW,
            savgol_order: survint::metrics::DEFAULT_SAVGOL_ORDER,
            svg: false,
            only: Vec::new(),
            tolerance_scale: 1.0,
            cox_seeds: validation.cox_seeds,
            survival_draws: validation.survival_draws,
            budgets: vec![64, 128, 256, 512],
            methods: ApproxMethod::ALL.to_vec(),
            runs: 30,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Fills `out_dir` from the environment or the built-in default.
    pub fn resolve_out_dir(&mut self) {
        if self.out_dir.is_none() {
            let dir = std::env::var_os(OUT_DIR_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
            self.out_dir = Some(dir);
        }
    }

    pub fn out_dir(&self) -> &Path {
        self.out_dir.as_deref().unwrap_or(Path::new(DEFAULT_OUT_DIR))
    }

    /// Checks everything that can be checked without computing.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.threads == Some(0) {
            return usage("--threads must be positive".into());
        }
        if self.n < 2 {
            return usage(format!("--n must be at least 2, got {}", self.n));
        }
        if let Some(r) = self.rho {
            if !(r > -1.0 && r < 1.0) {
                return usage(format!("--rho must lie in (-1, 1), got {r}"));
            }
        }
        if let Some(t) = self.n_train {
            if t == 0 || t >= self.n {
                return usage(format!("--n-train must be in 1..{}, got {t}", self.n));
            }
        }
        if self.timepoints < 2 {
            return usage(format!("--timepoints must be at least 2, got {}", self.timepoints));
        }
        if self.order == Some(0) {
            return usage("--order must be at least 1".into());
        }
        if let Some(p) = self.features {
            if !(3..=survint::MAX_EXACT_PLAYERS).contains(&p) {
                return usage(format!("--features must be in 3..={}, got {p}", survint::MAX_EXACT_PLAYERS));
            }
        }
        if self.savgol_window % 2 == 0 || self.savgol_order >= self.savgol_window {
            return usage(format!(
                "Savitzky-Golay window must be odd and exceed the order, got window {} order {}",
                self.savgol_window, self.savgol_order
            ));
        }
        if self.smooth && self.savgol_window > self.timepoints {
            return usage(format!(
                "Savitzky-Golay window {} exceeds {} timepoints",
                self.savgol_window, self.timepoints
            ));
        }
        if !(self.tolerance_scale >= 0.0 && self.tolerance_scale.is_finite()) {
            return usage(format!("--tolerance-scale must be non-negative, got {}", self.tolerance_scale));
        }
        if self.conditional_samples == 0 || self.runs == 0 || self.cox_seeds == 0 || self.survival_draws == 0 {
            return usage("sample counts must be positive".into());
        }
        if self.budget == Some(0) || self.budgets.contains(&0) {
            return usage("budgets must be positive".into());
        }
        if self.model == ModelKind::Cox && self.features.is_some_and(|p| p != 3) {
            return usage("--model cox needs data with the simulated three features".into());
        }
        if self.model == ModelKind::Cox && self.target.is_some_and(|t| t != PredictionTarget::Survival) {
            return usage("--model cox supports --target survival only".into());
        }
        Ok(())
    }
}

/// The run manifest: the resolved configuration plus version information.
/// It can be passed back with `--config` to repeat the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub config: RunConfig,
    pub version: String,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(config: &RunConfig, outputs: Vec<String>) -> Self {
        Manifest {
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(survint::Error::from)?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
