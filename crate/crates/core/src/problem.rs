//! Problem wiring: space-time domain, material layout, boundary
//! conditions, residual scaling, and labeled data. Benchmark builders
//! produce a [`PinnProblem`]; the loss and training loop consume it.

use thiserror::Error;

use crate::mms::ManufacturedSolution;
use crate::network::{
    BcValue, BoundaryDistance, Face, HardBcWrapper, InputNormalizer, NetworkParams, OutputScaler, PinnModel,
};
use crate::physics::{LaserSpec, MaterialPhaseProps, PhysicsError};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

/// One space-time sample; `x` has the problem's space dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct PointST {
    pub t: f64,
    pub x: Vec<f64>,
}

/// Axis-aligned space-time box.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBox {
    pub t: (f64, f64),
    pub x: Vec<(f64, f64)>,
}

impl DomainBox {
    pub fn space_dim(&self) -> usize {
        self.x.len()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if !(self.t.0 < self.t.1) {
            return Err(ProblemError::DegenerateDomain(format!(
                "time window [{}, {}] is empty",
                self.t.0, self.t.1
            )));
        }
        for (i, &(lo, hi)) in self.x.iter().enumerate() {
            if !(lo < hi) {
                return Err(ProblemError::DegenerateDomain(format!("axis {i}: [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    /// Boundaries included.
    pub fn contains(&self, p: &PointST) -> bool {
        p.t >= self.t.0
            && p.t <= self.t.1
            && p.x.len() == self.x.len()
            && p.x.iter().zip(&self.x).all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }

    pub fn shortest_edge(&self) -> f64 {
        self.x.iter().map(|&(lo, hi)| hi - lo).fold(f64::INFINITY, f64::min)
    }
}

/// Which fields the network predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputLayout {
    /// Temperature only.
    Thermal,
    /// Velocity components, pressure, temperature: [u_1..u_d, p, T].
    ThermalFluid,
}

impl OutputLayout {
    pub fn n_outputs(&self, space_dim: usize) -> usize {
        match self {
            OutputLayout::Thermal => 1,
            OutputLayout::ThermalFluid => space_dim + 2,
        }
    }

    pub fn temp_index(&self, space_dim: usize) -> usize {
        match self {
            OutputLayout::Thermal => 0,
            OutputLayout::ThermalFluid => space_dim + 1,
        }
    }
}

/// Spatial material assignment.
#[derive(Clone, Debug)]
pub enum MaterialLayout {
    Uniform(MaterialPhaseProps),
    /// Two materials split on axis 0 (left: x <= split).
    TwoRegion1D { split: f64, left: MaterialPhaseProps, right: MaterialPhaseProps },
}

impl MaterialLayout {
    pub fn at(&self, x: &[f64]) -> &MaterialPhaseProps {
        match self {
            MaterialLayout::Uniform(m) => m,
            MaterialLayout::TwoRegion1D { split, left, right } => {
                if x[0] <= *split {
                    left
                } else {
                    right
                }
            }
        }
    }

    pub fn validate(&self, allow_density_contrast: bool) -> Result<(), ProblemError> {
        let check = |m: &MaterialPhaseProps| -> Result<(), ProblemError> {
            m.validate()?;
            if !allow_density_contrast && m.rho_l != m.rho_s {
                return Err(ProblemError::Invalid(format!(
                    "phase density contrast (rho_l = {}, rho_s = {}) requires allow_density_contrast",
                    m.rho_l, m.rho_s
                )));
            }
            Ok(())
        };
        match self {
            MaterialLayout::Uniform(m) => check(m),
            MaterialLayout::TwoRegion1D { left, right, .. } => {
                check(left)?;
                check(right)
            }
        }
    }
}

/// Prescribed Neumann heat flux.
#[derive(Clone, Debug)]
pub enum FluxTarget {
    Prescribed(f64),
    /// Moving Gaussian laser flux; in-plane coordinates are axes 0 and 1.
    Laser(LaserSpec),
}

impl FluxTarget {
    pub fn at(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            FluxTarget::Prescribed(q) => *q,
            FluxTarget::Laser(l) => crate::physics::laser_flux(x[0], x.get(1).copied().unwrap_or(0.0), t, l),
        }
    }
}

/// Prescribed Neumann traction.
#[derive(Clone, Debug)]
pub enum TractionTarget {
    Prescribed(Vec<f64>),
    /// Marangoni shear computed from the predicted temperature gradient
    /// with the material's d(sigma)/dT.
    Marangoni,
}

/// Neumann data carried by one face.
#[derive(Clone, Debug)]
pub struct NeumannFace {
    pub face: Face,
    pub traction: Option<TractionTarget>,
    pub flux: Option<FluxTarget>,
}

/// Boundary-condition wiring for a problem.
#[derive(Clone, Debug)]
pub struct ProblemBc {
    pub dirichlet_faces: Vec<Face>,
    /// Ramp width of the hard wrapper (length units).
    pub eps: f64,
    /// Per-output prescribed Dirichlet values.
    pub values: Vec<BcValue>,
    pub neumann: Vec<NeumannFace>,
}

/// Gravity field entering the momentum residual.
#[derive(Clone, Debug)]
pub enum GravitySource {
    FromMaterial,
    /// Manufactured forcing folded into g.
    Manufactured(ManufacturedSolution),
}

/// Volumetric heat source Q_T.
#[derive(Clone, Debug)]
pub enum HeatSource {
    Zero,
    /// Manufactured forcing folded into Q_T.
    Manufactured(ManufacturedSolution),
}

impl HeatSource {
    pub fn at(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            HeatSource::Zero => 0.0,
            HeatSource::Manufactured(m) => m.energy_forcing(t, x),
        }
    }
}

/// Characteristic magnitudes dividing each residual before squaring, so
/// the loss terms are comparable across equations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualScales {
    pub momentum: f64,
    pub continuity: f64,
    pub energy: f64,
    pub traction: f64,
    pub flux: f64,
}

impl ResidualScales {
    pub fn identity() -> Self {
        Self { momentum: 1.0, continuity: 1.0, energy: 1.0, traction: 1.0, flux: 1.0 }
    }
}

/// Which residuals the problem penalizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResidualSet {
    pub momentum: bool,
    pub continuity: bool,
    pub energy: bool,
}

impl ResidualSet {
    pub fn thermal_only() -> Self {
        Self { momentum: false, continuity: false, energy: true }
    }

    pub fn full() -> Self {
        Self { momentum: true, continuity: true, energy: true }
    }
}

/// Labeled samples per field.
#[derive(Clone, Debug, Default)]
pub struct DataSet {
    pub u: Vec<(PointST, Vec<f64>)>,
    pub p: Vec<(PointST, f64)>,
    pub temp: Vec<(PointST, f64)>,
}

impl DataSet {
    pub fn is_empty(&self) -> bool {
        self.u.is_empty() && self.p.is_empty() && self.temp.is_empty()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.u.len(), self.p.len(), self.temp.len())
    }
}

/// A fully wired problem instance.
#[derive(Clone, Debug)]
pub struct PinnProblem {
    pub name: String,
    pub domain: DomainBox,
    pub layout: OutputLayout,
    pub material: MaterialLayout,
    pub gravity: GravitySource,
    pub heat_source: HeatSource,
    pub bc: ProblemBc,
    pub scales: ResidualScales,
    pub residuals: ResidualSet,
    /// Fixed labeled data (initial-condition samples or ingested files).
    pub data: DataSet,
    /// Physical (lo, hi) range per output, driving output scaling.
    pub output_ranges: Vec<(f64, f64)>,
    pub allow_density_contrast: bool,
}

impl PinnProblem {
    pub fn validate(&self) -> Result<(), ProblemError> {
        self.domain.validate()?;
        self.material.validate(self.allow_density_contrast)?;
        let n_out = self.layout.n_outputs(self.domain.space_dim());
        if self.bc.values.len() != n_out {
            return Err(ProblemError::Invalid(format!(
                "boundary value list covers {} outputs, problem has {}",
                self.bc.values.len(),
                n_out
            )));
        }
        if self.output_ranges.len() != n_out {
            return Err(ProblemError::Invalid(format!(
                "output_ranges covers {} outputs, problem has {}",
                self.output_ranges.len(),
                n_out
            )));
        }
        if !(self.bc.eps > 0.0) {
            return Err(ProblemError::Invalid(format!("bc ramp width must be > 0, got {}", self.bc.eps)));
        }
        Ok(())
    }

    pub fn space_dim(&self) -> usize {
        self.domain.space_dim()
    }

    pub fn n_outputs(&self) -> usize {
        self.layout.n_outputs(self.space_dim())
    }

    /// Expected network layer endpoints: inputs = 1 + space_dim.
    pub fn n_inputs(&self) -> usize {
        1 + self.space_dim()
    }

    pub fn normalizer(&self) -> InputNormalizer {
        InputNormalizer { t: self.domain.t, x: self.domain.x.clone() }
    }

    pub fn output_scaler(&self) -> OutputScaler {
        OutputScaler {
            per_output: self
                .output_ranges
                .iter()
                .map(|&(lo, hi)| (0.5 * (lo + hi), 0.5 * (hi - lo)))
                .collect(),
        }
    }

    pub fn hard_wrapper(&self) -> HardBcWrapper {
        HardBcWrapper {
            eps: self.bc.eps,
            distance: BoundaryDistance {
                bounds: self.domain.x.clone(),
                faces: self.bc.dirichlet_faces.clone(),
            },
            values: self.bc.values.clone(),
        }
    }

    /// Assemble the evaluation pipeline for a parameter vector.
    pub fn make_model(&self, params: NetworkParams, hard_bc: bool) -> Result<PinnModel, ProblemError> {
        if params.n_inputs() != self.n_inputs() || params.n_outputs() != self.n_outputs() {
            return Err(ProblemError::Invalid(format!(
                "network maps {} -> {}, problem needs {} -> {}",
                params.n_inputs(),
                params.n_outputs(),
                self.n_inputs(),
                self.n_outputs()
            )));
        }
        Ok(PinnModel {
            params,
            norm: self.normalizer(),
            out_scale: self.output_scaler(),
            bc: hard_bc.then(|| self.hard_wrapper()),
        })
    }

    /// Gravity vector at a point (material constant or manufactured).
    pub fn gravity_at(&self, t: f64, x: &[f64]) -> Vec<f64> {
        match &self.gravity {
            GravitySource::FromMaterial => self.material.at(x).gravity.clone(),
            GravitySource::Manufactured(m) => m.momentum_forcing(t, x),
        }
    }
}
