//! Loss assembly over sampled collocation batches: the labeled-data
//! term, interior PDE-residual term, Neumann-boundary term, and the
//! weighted total, plus the penalty used by soft boundary-condition
//! mode.
//!
//! The training entry point [`loss_and_grad`] records everything on
//! tapes chunk by chunk (fixed chunk size, fixed reduction order, so
//! results are bitwise deterministic regardless of thread count) and
//! returns the loss components together with the parameter gradient.

mod sample;

pub use sample::{sample_collocation, sample_face, sample_interior, CollocationCounts, SamplingStrategy};

use std::borrow::Cow;

use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{Scalar, Tape, TapeCell, TVar};
use crate::network::{BcValue, NetworkError, OutputDual, PinnModel};
use crate::physics::{
    marangoni_traction, residual_continuity, residual_energy, residual_momentum, FieldState,
    MaterialPhaseProps, PhysicsError,
};
use crate::problem::{
    DataSet, DomainBox, FluxTarget, GravitySource, OutputLayout, PinnProblem, PointST, ProblemError,
    TractionTarget,
};

/// Points per tape chunk. Fixed so the reduction order (and therefore
/// the result bits) cannot depend on the number of worker threads.
const CHUNK: usize = 32;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("interior collocation set is empty")]
    EmptyInterior,
    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),
    #[error("collocation point outside the domain: t = {t}, x = {x:?}")]
    PointOutsideDomain { t: f64, x: Vec<f64> },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
}

/// PDE-constraint weights of the total loss. The data term carries the
/// remaining weight 1 - lambda_pde1 - lambda_pde2; lambda_bc only
/// applies in soft boundary-condition mode.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub lambda_pde1: f64,
    pub lambda_pde2: f64,
    pub lambda_bc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_pde1: 1.0 / 3.0, lambda_pde2: 1.0 / 3.0, lambda_bc: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        for (name, v) in [("lambda_pde1", self.lambda_pde1), ("lambda_pde2", self.lambda_pde2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(LossError::InvalidWeights(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.data_weight() < 0.0 {
            return Err(LossError::InvalidWeights(format!(
                "lambda_pde1 + lambda_pde2 = {} exceeds 1 (data weight would be negative)",
                self.lambda_pde1 + self.lambda_pde2
            )));
        }
        if self.lambda_bc < 0.0 {
            return Err(LossError::InvalidWeights(format!("lambda_bc must be >= 0, got {}", self.lambda_bc)));
        }
        Ok(())
    }

    pub fn data_weight(&self) -> f64 {
        1.0 - self.lambda_pde1 - self.lambda_pde2
    }
}

/// A Neumann collocation point with its outward unit normal and the
/// index of the Neumann face it was sampled from.
#[derive(Clone, Debug)]
pub struct BoundaryPoint {
    pub point: PointST,
    pub normal: Vec<f64>,
    pub face_idx: usize,
}

/// Sampled space-time points partitioned into the sets the loss needs.
#[derive(Clone, Debug, Default)]
pub struct CollocationBatch {
    pub interior: Vec<PointST>,
    pub traction: Vec<BoundaryPoint>,
    pub flux: Vec<BoundaryPoint>,
    /// Points on the Dirichlet boundary (soft-mode penalty and boundary
    /// mismatch reporting).
    pub dirichlet: Vec<PointST>,
    pub data: DataSet,
}

impl CollocationBatch {
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn validate(&self, domain: &DomainBox) -> Result<(), LossError> {
        let check = |p: &PointST| -> Result<(), LossError> {
            if domain.contains(p) {
                Ok(())
            } else {
                Err(LossError::PointOutsideDomain { t: p.t, x: p.x.clone() })
            }
        };
        self.interior.iter().try_for_each(check)?;
        self.traction.iter().map(|b| &b.point).try_for_each(check)?;
        self.flux.iter().map(|b| &b.point).try_for_each(check)?;
        self.dirichlet.iter().try_for_each(check)?;
        self.data.u.iter().map(|(p, _)| p).try_for_each(check)?;
        self.data.p.iter().map(|(p, _)| p).try_for_each(check)?;
        self.data.temp.iter().map(|(p, _)| p).try_for_each(check)?;
        Ok(())
    }
}

/// Loss components per evaluation. `bc` is the boundary mismatch (zero
/// by construction in hard mode).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub data: f64,
    pub pde1: f64,
    pub pde2: f64,
    pub bc: f64,
    pub total: f64,
}

/// Weighted total: (1 - l1 - l2) L_data + l1 L_pde1 + l2 L_pde2.
pub fn total_loss(weights: &LossWeights, l_data: f64, l_pde1: f64, l_pde2: f64) -> Result<f64, LossError> {
    weights.validate()?;
    Ok(weights.data_weight() * l_data + weights.lambda_pde1 * l_pde1 + weights.lambda_pde2 * l_pde2)
}

/// Mean squared deviation against the labeled data, averaged per field.
pub fn loss_data(model: &PinnModel, data: &DataSet, layout: OutputLayout) -> Result<f64, LossError> {
    let d = model.space_dim();
    let temp_idx = layout.temp_index(d);
    let mut out = 0.0;
    if !data.u.is_empty() {
        let mut s = 0.0;
        for (p, lab) in &data.u {
            let pred = model.predict(p.t, &p.x)?;
            s += lab.iter().enumerate().map(|(i, &l)| (pred[i] - l) * (pred[i] - l)).sum::<f64>();
        }
        out += s / data.u.len() as f64;
    }
    if !data.p.is_empty() {
        let mut s = 0.0;
        for (p, lab) in &data.p {
            let pred = model.predict(p.t, &p.x)?;
            s += (pred[d] - lab) * (pred[d] - lab);
        }
        out += s / data.p.len() as f64;
    }
    if !data.temp.is_empty() {
        let mut s = 0.0;
        for (p, lab) in &data.temp {
            let pred = model.predict(p.t, &p.x)?;
            s += (pred[temp_idx] - lab) * (pred[temp_idx] - lab);
        }
        out += s / data.temp.len() as f64;
    }
    Ok(out)
}

/// Mean squared mismatch of the model outputs against the prescribed
/// Dirichlet values on boundary collocation points. With the hard
/// wrapper active this is zero by construction.
pub fn soft_bc_loss(model: &PinnModel, points: &[PointST], values: &[BcValue]) -> Result<f64, LossError> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for p in points {
        let pred = model.predict(p.t, &p.x)?;
        for (o, v) in values.iter().enumerate() {
            if let Some(vb) = bc_value_at(v, &p.x) {
                s += (pred[o] - vb) * (pred[o] - vb);
            }
        }
    }
    Ok(s / points.len() as f64)
}

fn bc_value_at(v: &BcValue, x: &[f64]) -> Option<f64> {
    match *v {
        BcValue::Unconstrained => None,
        BcValue::Constant(c) => Some(c),
        BcValue::AxisRamp { axis, x0, x1, v0, v1 } => Some(v0 + (v1 - v0) / (x1 - x0) * (x[axis] - x0)),
    }
}

/// Interior PDE loss on plain numbers: mean over points of the scaled
/// squared residuals (momentum components + continuity + energy, as the
/// problem activates them).
pub fn loss_pde_interior(
    model: &PinnModel,
    problem: &PinnProblem,
    points: &[PointST],
) -> Result<f64, LossError> {
    if points.is_empty() {
        return Err(LossError::EmptyInterior);
    }
    let mut s = 0.0;
    for p in points {
        let state = model_state_f64(model, problem.layout, p.t, &p.x)?;
        s += interior_point_sq_f64(problem, &state, p.t, &p.x)?;
    }
    Ok(s / points.len() as f64)
}

/// Neumann loss on plain numbers: mean squared traction mismatch plus
/// mean squared flux mismatch. Empty sets contribute zero.
pub fn loss_pde_neumann(
    model: &PinnModel,
    problem: &PinnProblem,
    traction: &[BoundaryPoint],
    flux: &[BoundaryPoint],
) -> Result<f64, LossError> {
    let mut out = 0.0;
    if !traction.is_empty() {
        let mut s = 0.0;
        for bp in traction {
            let state = model_state_f64(model, problem.layout, bp.point.t, &bp.point.x)?;
            let m = traction_mismatch_f64(problem, &state, bp)?;
            s += m.iter().map(|v| v * v).sum::<f64>();
        }
        out += s / traction.len() as f64;
    }
    if !flux.is_empty() {
        let mut s = 0.0;
        for bp in flux {
            let state = model_state_f64(model, problem.layout, bp.point.t, &bp.point.x)?;
            let m = flux_mismatch_f64(problem, &state, bp)?;
            s += m * m;
        }
        out += s / flux.len() as f64;
    }
    Ok(out)
}

/// All loss components on plain numbers (no gradient).
pub fn loss_components(
    model: &PinnModel,
    problem: &PinnProblem,
    batch: &CollocationBatch,
    weights: &LossWeights,
) -> Result<LossComponents, LossError> {
    weights.validate()?;
    let data = loss_data(model, &batch.data, problem.layout)?;
    let pde1 = loss_pde_interior(model, problem, &batch.interior)?;
    let pde2 = loss_pde_neumann(model, problem, &batch.traction, &batch.flux)?;
    let bc = soft_bc_loss(model, &batch.dirichlet, &problem.bc.values)?;
    let soft = model.bc.is_none();
    let mut total = total_loss(weights, data, pde1, pde2)?;
    if soft {
        total += weights.lambda_bc * bc;
    }
    Ok(LossComponents { data, pde1, pde2, bc, total })
}

// ---------------------------------------------------------------------
// f64 state assembly and residual helpers
// ---------------------------------------------------------------------

fn model_state_f64(
    model: &PinnModel,
    layout: OutputLayout,
    t: f64,
    x: &[f64],
) -> Result<FieldState<f64>, LossError> {
    let mut tape = Tape::new();
    tape.register_params(model.params.flat())?;
    let outs = model.eval_on_tape(&mut tape, t, x, false)?;
    let read = |o: &OutputDual| {
        (
            tape.value(o.val),
            o.grad.iter().map(|&g| tape.value(g)).collect::<Vec<_>>(),
            o.hess.iter().map(|&h| tape.value(h)).sum::<f64>(),
        )
    };
    let d = x.len();
    Ok(match layout {
        OutputLayout::Thermal => {
            let (v, g, lap) = read(&outs[0]);
            FieldState {
                vel: vec![0.0; d],
                p: 0.0,
                temp: v,
                vel_t: vec![0.0; d],
                vel_grad: vec![vec![0.0; d]; d],
                vel_lap: vec![0.0; d],
                p_grad: vec![0.0; d],
                temp_t: g[0],
                temp_grad: g[1..].to_vec(),
                temp_lap: lap,
            }
        }
        OutputLayout::ThermalFluid => {
            let vels: Vec<_> = (0..d).map(|i| read(&outs[i])).collect();
            let (pv, pg, _) = read(&outs[d]);
            let (tv, tg, tlap) = read(&outs[d + 1]);
            FieldState {
                vel: vels.iter().map(|v| v.0).collect(),
                p: pv,
                temp: tv,
                vel_t: vels.iter().map(|v| v.1[0]).collect(),
                vel_grad: vels.iter().map(|v| v.1[1..].to_vec()).collect(),
                vel_lap: vels.iter().map(|v| v.2).collect(),
                p_grad: pg[1..].to_vec(),
                temp_t: tg[0],
                temp_grad: tg[1..].to_vec(),
                temp_lap: tlap,
            }
        }
    })
}

fn props_with_gravity<'a>(
    problem: &'a PinnProblem,
    t: f64,
    x: &[f64],
) -> Cow<'a, MaterialPhaseProps> {
    let props = problem.material.at(x);
    match &problem.gravity {
        GravitySource::FromMaterial => Cow::Borrowed(props),
        GravitySource::Manufactured(m) => {
            let mut c = props.clone();
            c.gravity = m.momentum_forcing(t, x);
            Cow::Owned(c)
        }
    }
}

fn interior_point_sq_f64(
    problem: &PinnProblem,
    state: &FieldState<f64>,
    t: f64,
    x: &[f64],
) -> Result<f64, LossError> {
    let props = props_with_gravity(problem, t, x);
    let sc = &problem.scales;
    let mut sq = 0.0;
    if problem.residuals.momentum {
        for r in residual_momentum(state, &props)? {
            let v = r / sc.momentum;
            sq += v * v;
        }
    }
    if problem.residuals.continuity {
        let v = residual_continuity(state)? / sc.continuity;
        sq += v * v;
    }
    if problem.residuals.energy {
        let v = residual_energy(state, &props, problem.heat_source.at(t, x))? / sc.energy;
        sq += v * v;
    }
    Ok(sq)
}

fn traction_mismatch_f64(
    problem: &PinnProblem,
    state: &FieldState<f64>,
    bp: &BoundaryPoint,
) -> Result<Vec<f64>, LossError> {
    let d = state.space_dim();
    let props = problem.material.at(&bp.point.x);
    let face = &problem.bc.neumann[bp.face_idx];
    let target = face.traction.as_ref().ok_or_else(|| {
        LossError::Physics(PhysicsError::ContractViolation("traction point on a face without traction data".into()))
    })?;
    let f_l = crate::physics::liquid_fraction(state.temp, props.t_solidus, props.t_liquidus)?;
    let mu = f_l * props.mu_l + (1.0 - f_l) * props.mu_s;
    let tau: Vec<f64> = match target {
        TractionTarget::Prescribed(v) => v.clone(),
        TractionTarget::Marangoni => marangoni_traction(&state.temp_grad, &bp.normal, props.dsigma_dt)?,
    };
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let mut visc = 0.0;
        for j in 0..d {
            visc += (state.vel_grad[i][j] + state.vel_grad[j][i]) * bp.normal[j];
        }
        out.push((-state.p * bp.normal[i] + mu * visc - tau[i]) / problem.scales.traction);
    }
    Ok(out)
}

fn flux_mismatch_f64(
    problem: &PinnProblem,
    state: &FieldState<f64>,
    bp: &BoundaryPoint,
) -> Result<f64, LossError> {
    let props = problem.material.at(&bp.point.x);
    let face = &problem.bc.neumann[bp.face_idx];
    let target = face.flux.as_ref().ok_or_else(|| {
        LossError::Physics(PhysicsError::ContractViolation("flux point on a face without flux data".into()))
    })?;
    let f_l = crate::physics::liquid_fraction(state.temp, props.t_solidus, props.t_liquidus)?;
    let kappa = f_l * props.kappa_l.eval(state.temp) + (1.0 - f_l) * props.kappa_s.eval(state.temp);
    let gn: f64 = state.temp_grad.iter().zip(&bp.normal).map(|(g, n)| g * n).sum();
    let q = match target {
        FluxTarget::Prescribed(q) => *q,
        FluxTarget::Laser(l) => {
            crate::physics::laser_flux(bp.point.x[0], bp.point.x.get(1).copied().unwrap_or(0.0), bp.point.t, l)
        }
    };
    Ok((kappa * gn - q) / problem.scales.flux)
}

// ---------------------------------------------------------------------
// Training path: recorded loss with parameter gradient
// ---------------------------------------------------------------------

enum Item<'a> {
    Interior(&'a PointST),
    Traction(&'a BoundaryPoint),
    Flux(&'a BoundaryPoint),
    DataU(&'a PointST, &'a [f64]),
    DataP(&'a PointST, f64),
    DataT(&'a PointST, f64),
    SoftBc(&'a PointST),
}

#[derive(Clone, Copy, Default)]
struct Sums {
    interior: f64,
    traction: f64,
    flux: f64,
    data_u: f64,
    data_p: f64,
    data_t: f64,
    bc: f64,
}

struct Coefs {
    interior: f64,
    traction: f64,
    flux: f64,
    data_u: f64,
    data_p: f64,
    data_t: f64,
    bc: f64,
}

/// Loss components and the exact parameter gradient of the weighted
/// total over the batch. Deterministic: fixed chunking, fixed-order
/// reduction.
pub fn loss_and_grad(
    model: &PinnModel,
    problem: &PinnProblem,
    batch: &CollocationBatch,
    weights: &LossWeights,
) -> Result<(LossComponents, Vec<f64>), LossError> {
    weights.validate()?;
    if batch.interior.is_empty() {
        return Err(LossError::EmptyInterior);
    }
    let soft = model.bc.is_none();
    let (n_u, n_p, n_t) = batch.data.counts();
    let coefs = Coefs {
        interior: weights.lambda_pde1 / batch.interior.len() as f64,
        traction: if batch.traction.is_empty() { 0.0 } else { weights.lambda_pde2 / batch.traction.len() as f64 },
        flux: if batch.flux.is_empty() { 0.0 } else { weights.lambda_pde2 / batch.flux.len() as f64 },
        data_u: if n_u == 0 { 0.0 } else { weights.data_weight() / n_u as f64 },
        data_p: if n_p == 0 { 0.0 } else { weights.data_weight() / n_p as f64 },
        data_t: if n_t == 0 { 0.0 } else { weights.data_weight() / n_t as f64 },
        bc: if soft && !batch.dirichlet.is_empty() { weights.lambda_bc / batch.dirichlet.len() as f64 } else { 0.0 },
    };

    let mut items: Vec<Item> = Vec::new();
    items.extend(batch.interior.iter().map(Item::Interior));
    items.extend(batch.traction.iter().map(Item::Traction));
    items.extend(batch.flux.iter().map(Item::Flux));
    items.extend(batch.data.u.iter().map(|(p, v)| Item::DataU(p, v)));
    items.extend(batch.data.p.iter().map(|(p, v)| Item::DataP(p, *v)));
    items.extend(batch.data.temp.iter().map(|(p, v)| Item::DataT(p, *v)));
    if soft {
        items.extend(batch.dirichlet.iter().map(Item::SoftBc));
    }

    let results: Vec<(Sums, Vec<f64>)> = items
        .par_chunks(CHUNK)
        .map(|chunk| process_chunk(model, problem, chunk, &coefs))
        .collect::<Result<_, LossError>>()?;

    let n_params = model.params.len();
    let mut grad = vec![0.0; n_params];
    let mut sums = Sums::default();
    for (s, g) in &results {
        sums.interior += s.interior;
        sums.traction += s.traction;
        sums.flux += s.flux;
        sums.data_u += s.data_u;
        sums.data_p += s.data_p;
        sums.data_t += s.data_t;
        sums.bc += s.bc;
        for (gi, ci) in grad.iter_mut().zip(g) {
            *gi += ci;
        }
    }

    let pde1 = sums.interior / batch.interior.len() as f64;
    let pde2 = if batch.traction.is_empty() { 0.0 } else { sums.traction / batch.traction.len() as f64 }
        + if batch.flux.is_empty() { 0.0 } else { sums.flux / batch.flux.len() as f64 };
    let data = if n_u == 0 { 0.0 } else { sums.data_u / n_u as f64 }
        + if n_p == 0 { 0.0 } else { sums.data_p / n_p as f64 }
        + if n_t == 0 { 0.0 } else { sums.data_t / n_t as f64 };
    let bc = if soft && !batch.dirichlet.is_empty() { sums.bc / batch.dirichlet.len() as f64 } else { 0.0 };
    let mut total = total_loss(weights, data, pde1, pde2)?;
    if soft {
        total += weights.lambda_bc * bc;
    }
    Ok((LossComponents { data, pde1, pde2, bc, total }, grad))
}

fn tvar_state<'t>(
    cell: &'t TapeCell,
    outs: &[OutputDual],
    layout: OutputLayout,
    d: usize,
    zero: TVar<'t>,
) -> FieldState<TVar<'t>> {
    let v = |i: crate::autodiff::Var| cell.var(i);
    let lap = |o: &OutputDual| {
        let mut acc = v(o.hess[0]);
        for &h in &o.hess[1..] {
            acc = acc + v(h);
        }
        acc
    };
    match layout {
        OutputLayout::Thermal => FieldState {
            vel: vec![zero; d],
            p: zero,
            temp: v(outs[0].val),
            vel_t: vec![zero; d],
            vel_grad: vec![vec![zero; d]; d],
            vel_lap: vec![zero; d],
            p_grad: vec![zero; d],
            temp_t: v(outs[0].grad[0]),
            temp_grad: outs[0].grad[1..].iter().map(|&g| v(g)).collect(),
            temp_lap: lap(&outs[0]),
        },
        OutputLayout::ThermalFluid => FieldState {
            vel: (0..d).map(|i| v(outs[i].val)).collect(),
            p: v(outs[d].val),
            temp: v(outs[d + 1].val),
            vel_t: (0..d).map(|i| v(outs[i].grad[0])).collect(),
            vel_grad: (0..d).map(|i| outs[i].grad[1..].iter().map(|&g| v(g)).collect()).collect(),
            vel_lap: (0..d).map(|i| lap(&outs[i])).collect(),
            p_grad: outs[d].grad[1..].iter().map(|&g| v(g)).collect(),
            temp_t: v(outs[d + 1].grad[0]),
            temp_grad: outs[d + 1].grad[1..].iter().map(|&g| v(g)).collect(),
            temp_lap: lap(&outs[d + 1]),
        },
    }
}

fn process_chunk(
    model: &PinnModel,
    problem: &PinnProblem,
    items: &[Item],
    coefs: &Coefs,
) -> Result<(Sums, Vec<f64>), LossError> {
    let d = problem.space_dim();
    let temp_idx = problem.layout.temp_index(d);
    let cell = TapeCell::from_tape({
        let mut t = Tape::new();
        t.register_params(model.params.flat())?;
        t
    });
    let zero = cell.constant(0.0);
    let mut acc_interior: Option<TVar> = None;
    let mut acc_traction: Option<TVar> = None;
    let mut acc_flux: Option<TVar> = None;
    let mut acc_data_u: Option<TVar> = None;
    let mut acc_data_p: Option<TVar> = None;
    let mut acc_data_t: Option<TVar> = None;
    let mut acc_bc: Option<TVar> = None;
    fn push<'t>(acc: &mut Option<TVar<'t>>, v: TVar<'t>) {
        *acc = Some(match *acc {
            Some(a) => a + v,
            None => v,
        });
    }

    for item in items {
        match item {
            Item::Interior(p) => {
                let outs = cell.with(|t| model.eval_on_tape(t, p.t, &p.x, false))?;
                let state = tvar_state(&cell, &outs, problem.layout, d, zero);
                let props = props_with_gravity(problem, p.t, &p.x);
                let sc = &problem.scales;
                let mut sq: Option<TVar> = None;
                if problem.residuals.momentum {
                    for r in residual_momentum(&state, &props)? {
                        let v = r / sc.momentum;
                        push(&mut sq, v * v);
                    }
                }
                if problem.residuals.continuity {
                    let v = residual_continuity(&state)? / sc.continuity;
                    push(&mut sq, v * v);
                }
                if problem.residuals.energy {
                    let q = problem.heat_source.at(p.t, &p.x);
                    let qv = if q == 0.0 { zero } else { cell.constant(q) };
                    let v = residual_energy(&state, &props, qv)? / sc.energy;
                    push(&mut sq, v * v);
                }
                if let Some(sq) = sq {
                    push(&mut acc_interior, sq);
                }
            }
            Item::Traction(bp) => {
                let outs = cell.with(|t| model.eval_on_tape(t, bp.point.t, &bp.point.x, false))?;
                let state = tvar_state(&cell, &outs, problem.layout, d, zero);
                let props = problem.material.at(&bp.point.x);
                let face = &problem.bc.neumann[bp.face_idx];
                let target = face.traction.as_ref().ok_or_else(|| {
                    LossError::Physics(PhysicsError::ContractViolation(
                        "traction point on a face without traction data".into(),
                    ))
                })?;
                let f_l = crate::physics::liquid_fraction(state.temp, props.t_solidus, props.t_liquidus)?;
                let mu = f_l * props.mu_l + (-f_l + 1.0) * props.mu_s;
                let tau: Vec<TVar> = match target {
                    TractionTarget::Prescribed(v) => v.iter().map(|&c| cell.constant(c)).collect(),
                    TractionTarget::Marangoni => {
                        marangoni_traction(&state.temp_grad, &bp.normal, props.dsigma_dt)?
                    }
                };
                let mut sq: Option<TVar> = None;
                for i in 0..d {
                    let mut visc = (state.vel_grad[i][0] + state.vel_grad[0][i]) * bp.normal[0];
                    for j in 1..d {
                        visc = visc + (state.vel_grad[i][j] + state.vel_grad[j][i]) * bp.normal[j];
                    }
                    let m = (-state.p * bp.normal[i] + mu * visc - tau[i]) / problem.scales.traction;
                    push(&mut sq, m * m);
                }
                if let Some(sq) = sq {
                    push(&mut acc_traction, sq);
                }
            }
            Item::Flux(bp) => {
                let outs = cell.with(|t| model.eval_on_tape(t, bp.point.t, &bp.point.x, false))?;
                let state = tvar_state(&cell, &outs, problem.layout, d, zero);
                let props = problem.material.at(&bp.point.x);
                let face = &problem.bc.neumann[bp.face_idx];
                let target = face.flux.as_ref().ok_or_else(|| {
                    LossError::Physics(PhysicsError::ContractViolation(
                        "flux point on a face without flux data".into(),
                    ))
                })?;
                let f_l = crate::physics::liquid_fraction(state.temp, props.t_solidus, props.t_liquidus)?;
                let kappa =
                    f_l * props.kappa_l.eval(state.temp) + (-f_l + 1.0) * props.kappa_s.eval(state.temp);
                let mut gn = state.temp_grad[0] * bp.normal[0];
                for j in 1..d {
                    gn = gn + state.temp_grad[j] * bp.normal[j];
                }
                let q = match target {
                    FluxTarget::Prescribed(q) => *q,
                    FluxTarget::Laser(l) => crate::physics::laser_flux(
                        bp.point.x[0],
                        bp.point.x.get(1).copied().unwrap_or(0.0),
                        bp.point.t,
                        l,
                    ),
                };
                let m = (kappa * gn - q) / problem.scales.flux;
                push(&mut acc_flux, m * m);
            }
            Item::DataU(p, lab) => {
                let vals = cell.with(|t| model.eval_values_on_tape(t, p.t, &p.x))?;
                let mut sq: Option<TVar> = None;
                for (i, &l) in lab.iter().enumerate() {
                    let e = cell.var(vals[i]) - l;
                    push(&mut sq, e * e);
                }
                if let Some(sq) = sq {
                    push(&mut acc_data_u, sq);
                }
            }
            Item::DataP(p, lab) => {
                let vals = cell.with(|t| model.eval_values_on_tape(t, p.t, &p.x))?;
                let e = cell.var(vals[d]) - *lab;
                push(&mut acc_data_p, e * e);
            }
            Item::DataT(p, lab) => {
                let vals = cell.with(|t| model.eval_values_on_tape(t, p.t, &p.x))?;
                let e = cell.var(vals[temp_idx]) - *lab;
                push(&mut acc_data_t, e * e);
            }
            Item::SoftBc(p) => {
                let vals = cell.with(|t| model.eval_values_on_tape(t, p.t, &p.x))?;
                let mut sq: Option<TVar> = None;
                for (o, v) in problem.bc.values.iter().enumerate() {
                    if let Some(vb) = bc_value_at(v, &p.x) {
                        let e = cell.var(vals[o]) - vb;
                        push(&mut sq, e * e);
                    }
                }
                if let Some(sq) = sq {
                    push(&mut acc_bc, sq);
                }
            }
        }
    }

    // weighted chunk root; the reverse sweep yields this chunk's
    // contribution to the full gradient
    let mut root: Option<TVar> = None;
    for (acc, coef) in [
        (acc_interior, coefs.interior),
        (acc_traction, coefs.traction),
        (acc_flux, coefs.flux),
        (acc_data_u, coefs.data_u),
        (acc_data_p, coefs.data_p),
        (acc_data_t, coefs.data_t),
        (acc_bc, coefs.bc),
    ] {
        if let Some(a) = acc {
            let term = a * coef;
            root = Some(match root {
                Some(r) => r + term,
                None => term,
            });
        }
    }

    fn opt_value(acc: &Option<TVar>) -> f64 {
        acc.map_or(0.0, |a| a.value())
    }
    let sums = Sums {
        interior: opt_value(&acc_interior),
        traction: opt_value(&acc_traction),
        flux: opt_value(&acc_flux),
        data_u: opt_value(&acc_data_u),
        data_p: opt_value(&acc_data_p),
        data_t: opt_value(&acc_data_t),
        bc: opt_value(&acc_bc),
    };
    let grad = match root {
        Some(r) => cell.with(|t| t.grad(r.index()))?,
        None => vec![0.0; model.params.len()],
    };
    Ok((sums, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{BcValue, Face, NetworkParams};
    use crate::physics::{MaterialPhaseProps, PropertyFn};
    use crate::problem::{
        DomainBox, GravitySource, HeatSource, MaterialLayout, PinnProblem, ProblemBc, ResidualScales,
        ResidualSet,
    };

    fn toy_material() -> MaterialPhaseProps {
        MaterialPhaseProps {
            rho_l: 1000.0,
            rho_s: 1000.0,
            mu_l: 1.0,
            mu_s: 1.0,
            cp_l: PropertyFn::Constant(500.0),
            cp_s: PropertyFn::Constant(500.0),
            kappa_l: PropertyFn::Constant(10.0),
            kappa_s: PropertyFn::Constant(10.0),
            t_solidus: 5000.0,
            t_liquidus: 5001.0,
            latent_heat: 0.0,
            dsigma_dt: 0.0,
            gravity: vec![0.0],
            t_ref: 300.0,
        }
    }

    fn toy_problem() -> PinnProblem {
        PinnProblem {
            name: "toy".into(),
            domain: DomainBox { t: (0.0, 1.0), x: vec![(0.0, 1.0)] },
            layout: OutputLayout::Thermal,
            material: MaterialLayout::Uniform(toy_material()),
            gravity: GravitySource::FromMaterial,
            heat_source: HeatSource::Zero,
            bc: ProblemBc {
                dirichlet_faces: vec![Face { axis: 0, hi: false }, Face { axis: 0, hi: true }],
                eps: 0.02,
                values: vec![BcValue::Constant(350.0)],
                neumann: vec![],
            },
            scales: ResidualScales::identity(),
            residuals: ResidualSet::thermal_only(),
            data: DataSet::default(),
            output_ranges: vec![(300.0, 400.0)],
            allow_density_contrast: false,
        }
    }

    fn toy_model(problem: &PinnProblem, hard: bool, seed: u64) -> crate::network::PinnModel {
        let params = NetworkParams::init(&[2, 8, 8, 1], seed).unwrap();
        problem.make_model(params, hard).unwrap()
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights { lambda_pde1: 0.7, lambda_pde2: 0.5, lambda_bc: 1.0 }.validate().is_err());
        assert!(LossWeights { lambda_pde1: -0.1, lambda_pde2: 0.0, lambda_bc: 1.0 }.validate().is_err());
        assert!(LossWeights { lambda_pde1: 0.3, lambda_pde2: 0.3, lambda_bc: -1.0 }.validate().is_err());
        assert!(LossWeights::default().validate().is_ok());
    }

    #[test]
    fn total_loss_reference_cases() {
        let w0 = LossWeights { lambda_pde1: 0.0, lambda_pde2: 0.0, lambda_bc: 0.0 };
        assert_eq!(total_loss(&w0, 7.0, 100.0, 50.0).unwrap(), 7.0);
        let w1 = LossWeights { lambda_pde1: 1.0, lambda_pde2: 0.0, lambda_bc: 0.0 };
        assert_eq!(total_loss(&w1, 7.0, 100.0, 50.0).unwrap(), 100.0);
        let thirds = LossWeights { lambda_pde1: 1.0 / 3.0, lambda_pde2: 1.0 / 3.0, lambda_bc: 0.0 };
        assert!((total_loss(&thirds, 3.0, 3.0, 3.0).unwrap() - 3.0).abs() < 1e-12);
        let bad = LossWeights { lambda_pde1: 0.9, lambda_pde2: 0.9, lambda_bc: 0.0 };
        assert!(total_loss(&bad, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn data_loss_reference_cases() {
        let problem = toy_problem();
        let model = toy_model(&problem, true, 1);
        // empty data contributes zero
        assert_eq!(loss_data(&model, &DataSet::default(), problem.layout).unwrap(), 0.0);
        // labels equal to predictions: zero
        let p1 = PointST { t: 0.5, x: vec![0.5] };
        let pred = model.predict(p1.t, &p1.x).unwrap()[0];
        let exact = DataSet { u: vec![], p: vec![], temp: vec![(p1.clone(), pred)] };
        assert_eq!(loss_data(&model, &exact, problem.layout).unwrap(), 0.0);
        // one temperature sample with a 2 K error: MSD = 4
        let off = DataSet { u: vec![], p: vec![], temp: vec![(p1, pred + 2.0)] };
        assert!((loss_data(&model, &off, problem.layout).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn data_loss_matches_independent_two_pass() {
        let problem = toy_problem();
        let model = toy_model(&problem, true, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        use rand::{Rng, SeedableRng};
        let data = DataSet {
            u: vec![],
            p: vec![],
            temp: (0..40)
                .map(|_| {
                    let p = PointST { t: rng.gen_range(0.0..1.0), x: vec![rng.gen_range(0.0..1.0)] };
                    let lab = rng.gen_range(290.0..410.0);
                    (p, lab)
                })
                .collect(),
        };
        let got = loss_data(&model, &data, problem.layout).unwrap();
        // independent accumulation: collect residuals first, then average
        let residuals: Vec<f64> = data
            .temp
            .iter()
            .map(|(p, lab)| model.predict(p.t, &p.x).unwrap()[0] - lab)
            .collect();
        let want = residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64;
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn soft_bc_reference_cases() {
        let problem = toy_problem();
        // hard-wrapped model: boundary mismatch is zero by construction
        let hard = toy_model(&problem, true, 2);
        let pts: Vec<PointST> = (0..9)
            .map(|k| PointST { t: 0.1 * (k as f64 + 1.0), x: vec![if k % 2 == 0 { 0.0 } else { 1.0 }] })
            .collect();
        assert_eq!(soft_bc_loss(&hard, &pts, &problem.bc.values).unwrap(), 0.0);
        // constant-offset predictions: c^2
        let soft = toy_model(&problem, false, 2);
        let c: f64 = soft.predict(pts[0].t, &pts[0].x).unwrap()[0] - 350.0;
        let one = soft_bc_loss(&soft, &pts[..1], &problem.bc.values).unwrap();
        assert!((one - c * c).abs() < 1e-10);
        // empty point set contributes zero
        assert_eq!(soft_bc_loss(&soft, &[], &problem.bc.values).unwrap(), 0.0);
    }

    #[test]
    fn interior_loss_contract_and_scaling() {
        let problem = toy_problem();
        let model = toy_model(&problem, true, 4);
        assert!(matches!(loss_pde_interior(&model, &problem, &[]), Err(LossError::EmptyInterior)));
        let pts: Vec<PointST> =
            (0..8).map(|k| PointST { t: 0.1 * k as f64 + 0.05, x: vec![0.1 * k as f64 + 0.1] }).collect();
        let base = loss_pde_interior(&model, &problem, &pts).unwrap();
        assert!(base > 0.0);
        // halving the residual scale quadruples the squared loss
        let mut scaled = problem.clone();
        scaled.scales.energy = 0.5;
        let quad = loss_pde_interior(&model, &scaled, &pts).unwrap();
        assert!((quad - 4.0 * base).abs() <= 1e-9 * quad.abs());
    }

    #[test]
    fn neumann_empty_sets_are_zero() {
        let problem = toy_problem();
        let model = toy_model(&problem, true, 6);
        assert_eq!(loss_pde_neumann(&model, &problem, &[], &[]).unwrap(), 0.0);
    }

    #[test]
    fn batch_split_consistency() {
        // splitting a batch in two and recombining with count weights
        // reproduces the full-batch loss
        let problem = toy_problem();
        let model = toy_model(&problem, true, 8);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        use rand::{Rng, SeedableRng};
        let pts: Vec<PointST> =
            (0..30).map(|_| PointST { t: rng.gen_range(0.0..1.0), x: vec![rng.gen_range(0.0..1.0)] }).collect();
        let full = loss_pde_interior(&model, &problem, &pts).unwrap();
        let (a, b) = pts.split_at(13);
        let la = loss_pde_interior(&model, &problem, a).unwrap();
        let lb = loss_pde_interior(&model, &problem, b).unwrap();
        let recombined = (la * a.len() as f64 + lb * b.len() as f64) / pts.len() as f64;
        assert!((full - recombined).abs() <= 1e-12 * full.abs().max(1e-12), "{full} vs {recombined}");
    }

    #[test]
    fn gradient_matches_value_path_and_finite_differences() {
        let problem = toy_problem();
        let params = NetworkParams::init(&[2, 8, 8, 1], 10).unwrap();
        let model = problem.make_model(params.clone(), true).unwrap();
        let weights = LossWeights::default();
        let batch = sample_collocation(
            &problem,
            &CollocationCounts { interior: 12, traction: 0, flux: 0, dirichlet: 6 },
            2,
            SamplingStrategy::UniformRandom,
        )
        .unwrap();
        let mut batch = batch;
        batch.data = DataSet {
            u: vec![],
            p: vec![],
            temp: vec![(PointST { t: 0.3, x: vec![0.4] }, 360.0)],
        };
        let (comps, grad) = loss_and_grad(&model, &problem, &batch, &weights).unwrap();
        let value_path = loss_components(&model, &problem, &batch, &weights).unwrap();
        assert!((comps.total - value_path.total).abs() <= 1e-10 * comps.total.abs().max(1.0));
        assert!((comps.pde1 - value_path.pde1).abs() <= 1e-10 * comps.pde1.abs().max(1e-12));

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::{Rng, SeedableRng};
        for _ in 0..6 {
            let slot = rng.gen_range(0..params.len());
            let h = 1e-6;
            let mut pp = params.clone();
            pp.flat_mut()[slot] += h;
            let lp = loss_components(&problem.make_model(pp.clone(), true).unwrap(), &problem, &batch, &weights)
                .unwrap()
                .total;
            pp.flat_mut()[slot] -= 2.0 * h;
            let lm = loss_components(&problem.make_model(pp, true).unwrap(), &problem, &batch, &weights)
                .unwrap()
                .total;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad[slot] - fd).abs() / grad[slot].abs().max(1e-8);
            assert!(rel < 1e-5, "slot {slot}: ad {} vs fd {fd}", grad[slot]);
        }
    }

    #[test]
    fn soft_mode_total_includes_bc_penalty() {
        let problem = toy_problem();
        let model = toy_model(&problem, false, 12);
        let batch = sample_collocation(
            &problem,
            &CollocationCounts { interior: 8, traction: 0, flux: 0, dirichlet: 8 },
            4,
            SamplingStrategy::LatinHypercube,
        )
        .unwrap();
        let weights = LossWeights { lambda_pde1: 0.25, lambda_pde2: 0.25, lambda_bc: 2.0 };
        let comps = loss_components(&model, &problem, &batch, &weights).unwrap();
        assert!(comps.bc > 0.0);
        let base = total_loss(&weights, comps.data, comps.pde1, comps.pde2).unwrap();
        assert!((comps.total - (base + 2.0 * comps.bc)).abs() < 1e-12 * comps.total.abs());
    }
}
