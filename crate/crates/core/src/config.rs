//! Declarative run configuration: a single TOML file with a versioned
//! schema. Unknown keys are errors, and every numeric range is checked
//! before any compute starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ambench::{build_case, load_labeled_window, AmBenchError, CaseId};
use crate::loss::{CollocationCounts, LossWeights, SamplingStrategy};
use crate::optimizer::TrainConfig;
use crate::problem::{DataSet, PinnProblem, ProblemError};
use crate::stefan::{build_pinn_problem, SolidificationProblem};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field {field}: {msg}")]
    Field { field: &'static str, msg: String },
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
    #[error(transparent)]
    AmBench(#[from] AmBenchError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemSelector {
    Stefan,
    AmbenchA,
    AmbenchB,
    AmbenchC,
    Mms,
}

impl ProblemSelector {
    pub fn is_ambench(&self) -> bool {
        matches!(self, ProblemSelector::AmbenchA | ProblemSelector::AmbenchB | ProblemSelector::AmbenchC)
    }

    pub fn case_id(&self) -> Option<CaseId> {
        match self {
            ProblemSelector::AmbenchA => Some(CaseId::A),
            ProblemSelector::AmbenchB => Some(CaseId::B),
            ProblemSelector::AmbenchC => Some(CaseId::C),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub layer_sizes: Vec<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_interior: usize,
    pub seed: u64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_decay_factor")]
    pub lr_decay_factor: f64,
    /// Epoch interval between decays; 0 disables; omitted means a decay
    /// every quarter of the run.
    #[serde(default)]
    pub lr_decay_every: Option<usize>,
    #[serde(default)]
    pub checkpoint_interval: usize,
}

fn default_lr() -> f64 {
    1e-3
}

fn default_decay_factor() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcMode {
    Hard,
    Soft,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(default = "default_lambda")]
    pub lambda_pde1: f64,
    #[serde(default = "default_lambda")]
    pub lambda_pde2: f64,
    #[serde(default = "default_lambda_bc")]
    pub lambda_bc: f64,
    #[serde(default = "default_bc_mode")]
    pub bc_mode: BcMode,
}

fn default_lambda() -> f64 {
    1.0 / 3.0
}

fn default_lambda_bc() -> f64 {
    1.0
}

fn default_bc_mode() -> BcMode {
    BcMode::Hard
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            lambda_pde1: default_lambda(),
            lambda_pde2: default_lambda(),
            lambda_bc: default_lambda_bc(),
            bc_mode: default_bc_mode(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollocationSection {
    #[serde(default = "default_strategy")]
    pub strategy: SamplingStrategy,
    /// Labeled/initial-condition samples (problem-dependent).
    #[serde(default = "default_n_data")]
    pub n_data: usize,
    #[serde(default = "default_n_dirichlet")]
    pub n_dirichlet: usize,
    #[serde(default)]
    pub n_traction: usize,
    #[serde(default)]
    pub n_flux: usize,
}

fn default_strategy() -> SamplingStrategy {
    SamplingStrategy::LatinHypercube
}

fn default_n_data() -> usize {
    256
}

fn default_n_dirichlet() -> usize {
    128
}

impl Default for CollocationSection {
    fn default() -> Self {
        Self {
            strategy: default_strategy(),
            n_data: default_n_data(),
            n_dirichlet: default_n_dirichlet(),
            n_traction: 0,
            n_flux: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbenchSection {
    /// CSV of labeled samples (header t,x,y,z,u,v,w,p,T).
    #[serde(default)]
    pub labeled_data: Option<PathBuf>,
    /// Time window of labeled samples to ingest, seconds.
    #[serde(default = "default_window")]
    pub window: [f64; 2],
}

fn default_window() -> [f64; 2] {
    [1.2e-3, 1.5e-3]
}

/// Declarative material override, keyed by the conventional property
/// names. Applies to the single-substrate problems (the laser cases and
/// the manufactured-solution problem).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    pub density_solid: f64,
    pub density_liquid: f64,
    pub viscosity_solid: f64,
    pub viscosity_liquid: f64,
    pub specific_heat_solid: crate::physics::PropertyFn,
    pub specific_heat_liquid: crate::physics::PropertyFn,
    pub conductivity_solid: crate::physics::PropertyFn,
    pub conductivity_liquid: crate::physics::PropertyFn,
    pub solidus_temperature: f64,
    pub liquidus_temperature: f64,
    pub latent_heat: f64,
    #[serde(default)]
    pub marangoni_coefficient: f64,
    #[serde(default = "default_gravity")]
    pub gravity: Vec<f64>,
    #[serde(default = "default_t_ref")]
    pub reference_temperature: f64,
}

fn default_gravity() -> Vec<f64> {
    vec![0.0, 0.0, -9.81]
}

fn default_t_ref() -> f64 {
    295.0
}

impl MaterialSection {
    pub fn to_props(&self) -> crate::physics::MaterialPhaseProps {
        crate::physics::MaterialPhaseProps {
            rho_l: self.density_liquid,
            rho_s: self.density_solid,
            mu_l: self.viscosity_liquid,
            mu_s: self.viscosity_solid,
            cp_l: self.specific_heat_liquid,
            cp_s: self.specific_heat_solid,
            kappa_l: self.conductivity_liquid,
            kappa_s: self.conductivity_solid,
            t_solidus: self.solidus_temperature,
            t_liquidus: self.liquidus_temperature,
            latent_heat: self.latent_heat,
            dsigma_dt: self.marangoni_coefficient,
            gravity: self.gravity.clone(),
            t_ref: self.reference_temperature,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub problem: ProblemSelector,
    pub network: NetworkSection,
    pub train: TrainSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub collocation: CollocationSection,
    pub output: OutputSection,
    #[serde(default)]
    pub ambench: Option<AmbenchSection>,
    #[serde(default)]
    pub material: Option<MaterialSection>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let cfg: RunConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok((cfg, text))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Field {
                field: "schema_version",
                msg: format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            });
        }
        if self.network.layer_sizes.len() < 2 {
            return Err(ConfigError::Field {
                field: "network.layer_sizes",
                msg: "need at least input and output layers".into(),
            });
        }
        if self.network.layer_sizes.iter().any(|&s| s == 0) {
            return Err(ConfigError::Field { field: "network.layer_sizes", msg: "layer sizes must be >= 1".into() });
        }
        if self.train.epochs == 0 {
            return Err(ConfigError::Field { field: "train.epochs", msg: "must be > 0".into() });
        }
        if self.train.batch_interior == 0 {
            return Err(ConfigError::Field { field: "train.batch_interior", msg: "must be > 0".into() });
        }
        if !(self.train.lr > 0.0) {
            return Err(ConfigError::Field { field: "train.lr", msg: format!("must be > 0, got {}", self.train.lr) });
        }
        if !(self.train.lr_decay_factor > 0.0 && self.train.lr_decay_factor <= 1.0) {
            return Err(ConfigError::Field {
                field: "train.lr_decay_factor",
                msg: format!("must be in (0, 1], got {}", self.train.lr_decay_factor),
            });
        }
        for (field, v) in [
            ("loss.lambda_pde1", self.loss.lambda_pde1),
            ("loss.lambda_pde2", self.loss.lambda_pde2),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::Field { field, msg: format!("must be in [0, 1], got {v}") });
            }
        }
        if self.loss.lambda_pde1 + self.loss.lambda_pde2 > 1.0 {
            return Err(ConfigError::Field {
                field: "loss.lambda_pde1",
                msg: format!(
                    "lambda_pde1 + lambda_pde2 = {} must not exceed 1",
                    self.loss.lambda_pde1 + self.loss.lambda_pde2
                ),
            });
        }
        if self.loss.lambda_bc < 0.0 {
            return Err(ConfigError::Field {
                field: "loss.lambda_bc",
                msg: format!("must be >= 0, got {}", self.loss.lambda_bc),
            });
        }
        if let Some(m) = &self.material {
            if self.problem == ProblemSelector::Stefan {
                return Err(ConfigError::Field {
                    field: "material",
                    msg: "material override applies to single-substrate problems only".into(),
                });
            }
            m.to_props().validate().map_err(|e| ConfigError::Field { field: "material", msg: e.to_string() })?;
        }
        if let Some(am) = &self.ambench {
            if !(am.window[0] < am.window[1]) {
                return Err(ConfigError::Field {
                    field: "ambench.window",
                    msg: format!("window [{}, {}] is empty", am.window[0], am.window[1]),
                });
            }
            if let Some(p) = &am.labeled_data {
                if !p.exists() {
                    return Err(ConfigError::MissingFile(p.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_pde1: self.loss.lambda_pde1,
            lambda_pde2: self.loss.lambda_pde2,
            lambda_bc: self.loss.lambda_bc,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let (n_traction, n_flux) = self.effective_counts();
        TrainConfig {
            epochs: self.train.epochs,
            counts: CollocationCounts {
                interior: self.train.batch_interior,
                traction: n_traction,
                flux: n_flux,
                dirichlet: self.collocation.n_dirichlet,
            },
            seed: self.train.seed,
            lr: self.train.lr,
            lr_decay_factor: self.train.lr_decay_factor,
            lr_decay_every: self.train.lr_decay_every.unwrap_or((self.train.epochs / 4).max(1)),
            checkpoint_interval: self.train.checkpoint_interval,
            weights: self.weights(),
            hard_bc: self.loss.bc_mode == BcMode::Hard,
            strategy: self.collocation.strategy,
        }
    }

    /// Assemble the problem instance the config names.
    pub fn build_problem(&self) -> Result<PinnProblem, ConfigError> {
        let override_props = self.material.as_ref().map(|m| m.to_props());
        let problem = match self.problem {
            ProblemSelector::Stefan => {
                build_pinn_problem(&SolidificationProblem::default(), self.collocation.n_data, self.train.seed)
            }
            ProblemSelector::Mms => {
                crate::ambench::mms_problem_with(override_props, self.collocation.n_data, self.train.seed)?
            }
            _ => {
                let mut case = build_case(self.problem.case_id().expect("ambench selector"));
                if let Some(props) = override_props {
                    case.material = props;
                }
                let data = match self.ambench.as_ref().and_then(|a| a.labeled_data.as_ref()) {
                    Some(path) => {
                        let w = self.ambench.as_ref().map(|a| a.window).unwrap_or(default_window());
                        load_labeled_window(path, w[0], w[1])?
                    }
                    None => DataSet::default(),
                };
                case.pinn_problem(data)
            }
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Neumann collocation counts, with nonzero defaults for problems
    /// that carry Neumann faces.
    pub fn effective_counts(&self) -> (usize, usize) {
        if self.problem.is_ambench() {
            (
                if self.collocation.n_traction == 0 { 256 } else { self.collocation.n_traction },
                if self.collocation.n_flux == 0 { 256 } else { self.collocation.n_flux },
            )
        } else {
            (self.collocation.n_traction, self.collocation.n_flux)
        }
    }
}

/// Hex SHA-256 of the raw config text, for run manifests.
pub fn config_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}
