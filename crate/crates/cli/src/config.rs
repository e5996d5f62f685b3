//! Layered run configuration: a TOML file whose sections mirror the
//! simulation, training, and heuristic structs, with command-line flags
//! taking precedence over file values. The zero-config defaults are the
//! reference experiment settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nsp_core::agent::TrainingConfig;
use nsp_core::p2c::P2cConfig;
use nsp_core::sim::{AgentKind, SimConfig, SliceClass};

/// Errors in configuration are distinguished from runtime failures so the
/// process can exit with a dedicated status code.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}
impl std::error::Error for ConfigError {}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// `[sim]` section of the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Target offered load.
    pub rho: f64,
    /// Arrivals per training phase.
    pub phase_size: usize,
    /// Number of phases to run.
    pub phases: usize,
    pub seed: u64,
    /// One of "heu", "drl", "hadrl".
    pub agent: String,
    /// Heuristic-modifier exponent used when `agent = "hadrl"`.
    pub beta: f64,
    /// Optional substrate file; the built-in reference topology otherwise.
    pub topology: Option<PathBuf>,
    /// Keep the heuristic modifier active when evaluating a checkpoint.
    pub heu_at_eval: bool,
    /// Verify the resource-conservation identity after every event.
    pub check_conservation: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            rho: 0.5,
            phase_size: 1000,
            phases: 25,
            seed: 1,
            agent: "hadrl".into(),
            beta: 1.0,
            topology: None,
            heu_at_eval: true,
            check_conservation: false,
        }
    }
}

/// `[training]` section; field-for-field the core training controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub alpha: f64,
    pub alpha_critic: f64,
    pub phi: f64,
    pub gamma: f64,
    pub beta: f64,
    pub xi: f64,
    pub eta: f64,
    pub reward_min: f64,
    pub reward_max: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainingConfig::default();
        TrainSection {
            alpha: t.alpha,
            alpha_critic: t.alpha_critic,
            phi: t.phi,
            gamma: t.gamma,
            beta: t.beta,
            xi: t.xi,
            eta: t.eta,
            reward_min: t.reward_min,
            reward_max: t.reward_max,
        }
    }
}

/// `[p2c]` section; the heuristic's knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct P2cSection {
    pub candidate_count: usize,
    pub w_bw: f64,
    pub w_lb: f64,
    pub w_congestion: f64,
    pub retry_budget: usize,
}

impl Default for P2cSection {
    fn default() -> Self {
        let p = P2cConfig::default();
        P2cSection {
            candidate_count: p.candidate_count,
            w_bw: p.w_bw,
            w_lb: p.w_lb,
            w_congestion: p.w_congestion,
            retry_budget: p.retry_budget,
        }
    }
}

/// The whole config file. Every field has a reference-experiment default,
/// so an empty (or absent) file is a valid configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub sim: SimSection,
    pub training: TrainSection,
    pub p2c: P2cSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }
}

/// Flag values shared by the experiment commands. `None` means "not given
/// on the command line"; given flags override the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Config file (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Placement agent: heu, drl, or hadrl.
    #[arg(long)]
    pub agent: Option<String>,
    /// Heuristic-modifier exponent for the hadrl agent.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Heuristic-modifier gain (0 disables the modifier).
    #[arg(long)]
    pub xi: Option<f64>,
    /// Heuristic-modifier offset.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Target offered load.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Number of phases to run.
    #[arg(long)]
    pub phases: Option<usize>,
    /// Base RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Substrate topology file; built-in reference topology when omitted.
    #[arg(long)]
    pub topology: Option<PathBuf>,
    /// Directory for CSVs, checkpoints, and the run manifest.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Network checkpoint to load (validate) or write (train).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Turn the heuristic modifier off during evaluation runs.
    #[arg(long)]
    pub disable_heu_at_eval: bool,
}

/// The fully resolved configuration a command runs with; echoed verbatim
/// into the run manifest so a run can be reproduced from its artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub file: FileConfig,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

impl Resolved {
    /// Loads the file (if any) and applies flag overrides.
    pub fn from_flags(flags: &Overrides) -> Result<Self, ConfigError> {
        let mut file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        if let Some(a) = &flags.agent {
            file.sim.agent = a.clone();
        }
        if let Some(b) = flags.beta {
            file.sim.beta = b;
        }
        if let Some(x) = flags.xi {
            file.training.xi = x;
        }
        if let Some(e) = flags.eta {
            file.training.eta = e;
        }
        if let Some(r) = flags.rho {
            file.sim.rho = r;
        }
        if let Some(p) = flags.phases {
            file.sim.phases = p;
        }
        if let Some(s) = flags.seed {
            file.sim.seed = s;
        }
        if let Some(t) = &flags.topology {
            file.sim.topology = Some(t.clone());
        }
        if flags.disable_heu_at_eval {
            file.sim.heu_at_eval = false;
        }
        // Fail fast on a dangling topology path so no partial artifacts
        // are produced.
        if let Some(t) = &file.sim.topology {
            if !t.is_file() {
                return cfg_err(format!("topology file {} does not exist", t.display()));
            }
        }
        let resolved = Resolved {
            file,
            out_dir: flags.out_dir.clone(),
            checkpoint: flags.checkpoint.clone(),
        };
        resolved.agent_kind()?;
        resolved.sim_config()?.validate().map_err(ConfigError)?;
        Ok(resolved)
    }

    pub fn agent_kind(&self) -> Result<AgentKind, ConfigError> {
        match self.file.sim.agent.as_str() {
            "heu" => Ok(AgentKind::Heu),
            "drl" => Ok(AgentKind::Drl),
            "hadrl" => Ok(AgentKind::HaDrl {
                beta: self.file.sim.beta,
            }),
            other => cfg_err(format!(
                "unknown agent {other:?}; expected heu, drl, or hadrl"
            )),
        }
    }

    pub fn training_config(&self) -> TrainingConfig {
        let t = &self.file.training;
        TrainingConfig {
            alpha: t.alpha,
            alpha_critic: t.alpha_critic,
            phi: t.phi,
            gamma: t.gamma,
            beta: t.beta,
            xi: t.xi,
            eta: t.eta,
            reward_min: t.reward_min,
            reward_max: t.reward_max,
        }
    }

    pub fn p2c_config(&self) -> P2cConfig {
        let p = &self.file.p2c;
        P2cConfig {
            candidate_count: p.candidate_count,
            w_bw: p.w_bw,
            w_lb: p.w_lb,
            w_congestion: p.w_congestion,
            retry_budget: p.retry_budget,
        }
    }

    /// The simulation config implied by the file + overrides.
    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let agent = self.agent_kind()?;
        Ok(SimConfig {
            rho: self.file.sim.rho,
            classes: vec![SliceClass::embb()],
            phase_size: self.file.sim.phase_size,
            total_arrivals: self.file.sim.phases * self.file.sim.phase_size,
            seed: self.file.sim.seed,
            agent,
            training: self.training_config(),
            p2c: self.p2c_config(),
            train: !matches!(agent, AgentKind::Heu),
            heu_at_eval: self.file.sim.heu_at_eval,
            check_conservation: self.file.sim.check_conservation,
        })
    }
}
