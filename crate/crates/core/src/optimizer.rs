//! Adam optimization and the training loop: seeded resampling of the
//! interior batch each epoch, fixed boundary/data sets, loss history,
//! and interval checkpointing.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::loss::{
    loss_and_grad, sample_collocation, soft_bc_loss, CollocationBatch, CollocationCounts, LossError,
    LossWeights, SamplingStrategy,
};
use crate::network::{save_checkpoint, NetworkError, NetworkParams};
use crate::problem::{PinnProblem, ProblemError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite gradient at parameter slot {slot} ({desc})")]
    NonFiniteGrad { slot: usize, desc: String },
    #[error("gradient length {got} does not match parameter count {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}: loss is not finite (last good checkpoint retained)")]
    Diverged { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// First/second-moment state of Adam with the fixed hyperparameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self { m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }
}

/// One Adam update with bias-corrected moments. Deterministic; rejects
/// non-finite gradient entries naming the offending slot.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TrainError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(TrainError::ShapeMismatch { expected: params.len(), got: grads.len() });
    }
    if let Some(slot) = grads.iter().position(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGrad { slot, desc: format!("flat index {slot}") });
    }
    state.step += 1;
    let c1 = 1.0 - state.beta1.powi(state.step as i32);
    let c2 = 1.0 - state.beta2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Training configuration. `counts.interior` is the per-epoch interior
/// batch (resampled fresh every epoch); the other sets are sampled once
/// and kept fixed.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub counts: CollocationCounts,
    pub seed: u64,
    pub lr: f64,
    /// Multiplicative step decay; 1.0 disables.
    pub lr_decay_factor: f64,
    /// Epoch interval between decays; 0 disables.
    pub lr_decay_every: usize,
    /// Epoch interval between checkpoints; 0 disables.
    pub checkpoint_interval: usize,
    pub weights: LossWeights,
    pub hard_bc: bool,
    pub strategy: SamplingStrategy,
}

impl TrainConfig {
    /// Defaults: lr 1e-3 with x0.5 step decay every quarter of the run,
    /// hard BCs, latin-hypercube sampling.
    pub fn with_defaults(epochs: usize, batch_interior: usize, seed: u64) -> Self {
        Self {
            epochs,
            counts: CollocationCounts { interior: batch_interior, traction: 0, flux: 0, dirichlet: 128 },
            seed,
            lr: 1e-3,
            lr_decay_factor: 0.5,
            lr_decay_every: (epochs / 4).max(1),
            checkpoint_interval: 0,
            weights: LossWeights::default(),
            hard_bc: true,
            strategy: SamplingStrategy::LatinHypercube,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be > 0".into()));
        }
        if self.counts.interior == 0 {
            return Err(TrainError::InvalidConfig("interior batch size must be > 0".into()));
        }
        if !(self.lr > 0.0) {
            return Err(TrainError::InvalidConfig(format!("learning rate must be > 0, got {}", self.lr)));
        }
        self.weights.validate()?;
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.lr_decay_every == 0 || self.lr_decay_factor == 1.0 {
            self.lr
        } else {
            self.lr * self.lr_decay_factor.powi((epoch / self.lr_decay_every) as i32)
        }
    }
}

/// Loss components of one epoch, plus the boundary mismatch (always 0
/// in hard mode, by construction).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_data: f64,
    pub l_pde1: f64,
    pub l_pde2: f64,
    pub total: f64,
    pub lr: f64,
    pub bc_mismatch: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: NetworkParams,
    pub history: Vec<EpochRecord>,
}

/// Minimize the weighted loss over the problem. Checkpoints are written
/// to `ckpt_dir` at the configured interval; on divergence the last
/// written checkpoint stays on disk and an error is returned.
pub fn train(
    problem: &PinnProblem,
    params: NetworkParams,
    cfg: &TrainConfig,
    ckpt_dir: Option<&Path>,
) -> Result<TrainResult, TrainError> {
    cfg.validate()?;
    problem.validate()?;
    let mut model = problem.make_model(params, cfg.hard_bc)?;

    // fixed boundary sets from the base seed; the interior stream is a
    // separate deterministic sequence
    let fixed = sample_collocation(
        problem,
        &CollocationCounts { interior: 0, ..cfg.counts },
        cfg.seed,
        cfg.strategy,
    )?;
    let mut interior_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x1d));

    let mut adam = AdamState::new(model.params.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let interior =
            crate::loss::sample_interior(&problem.domain, cfg.counts.interior, cfg.strategy, &mut interior_rng);
        let batch = CollocationBatch {
            interior,
            traction: fixed.traction.clone(),
            flux: fixed.flux.clone(),
            dirichlet: fixed.dirichlet.clone(),
            data: problem.data.clone(),
        };
        let (comps, grad) = loss_and_grad(&model, problem, &batch, &cfg.weights)?;
        if !comps.total.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let bc_mismatch = if model.bc.is_some() {
            soft_bc_loss(&model, &batch.dirichlet, &problem.bc.values)?
        } else {
            comps.bc
        };
        match adam_step(model.params.flat_mut(), &grad, &mut adam, lr) {
            Ok(()) => {}
            Err(TrainError::NonFiniteGrad { slot, .. }) => {
                let desc = model.params.describe_slot(slot);
                return Err(TrainError::NonFiniteGrad { slot, desc });
            }
            Err(e) => return Err(e),
        }
        history.push(EpochRecord {
            epoch,
            l_data: comps.data,
            l_pde1: comps.pde1,
            l_pde2: comps.pde2,
            total: comps.total,
            lr,
            bc_mismatch,
        });
        if cfg.checkpoint_interval > 0 && (epoch + 1) % cfg.checkpoint_interval == 0 {
            if let Some(dir) = ckpt_dir {
                save_checkpoint(&model.params, &dir.join(format!("checkpoint_epoch{:06}.bin", epoch + 1)))?;
            }
        }
    }
    Ok(TrainResult { params: model.params, history })
}

/// Train twice from the same initial parameters and seeds: once with the
/// hard Dirichlet wrapper, once in soft (penalty) mode.
pub fn run_hard_vs_soft(
    problem: &PinnProblem,
    params: NetworkParams,
    cfg: &TrainConfig,
) -> Result<(TrainResult, TrainResult), TrainError> {
    let mut hard_cfg = cfg.clone();
    hard_cfg.hard_bc = true;
    let mut soft_cfg = cfg.clone();
    soft_cfg.hard_bc = false;
    let hard = train(problem, params.clone(), &hard_cfg, None)?;
    let soft = train(problem, params, &soft_cfg, None)?;
    Ok((hard, soft))
}
