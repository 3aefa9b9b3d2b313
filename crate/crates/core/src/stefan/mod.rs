//! One-dimensional solidification benchmark: liquid aluminum over a
//! graphite mold, with the closed-form similarity solution as oracle, a
//! linear-FEM baseline, and the error metrics for refinement studies.
//!
//! Setup: the mold occupies x in [-0.4, 0] m at 298.15 K, aluminum
//! occupies (0, 0.4] m at 973.15 K (above its 933.15 K melting point);
//! heat flows into the mold and the solidification front moves right.

mod fem;
mod metrics;

pub use fem::{fem_solve_1d, total_enthalpy, Fem1DResult, FemBc, FemInit};
pub use metrics::{extract_interface, l2_error, Slab};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::loss::{sample_interior, SamplingStrategy};
use crate::network::{BcValue, Face};
use crate::physics::{MaterialPhaseProps, PropertyFn};
use crate::problem::{
    DataSet, DomainBox, GravitySource, HeatSource, MaterialLayout, OutputLayout, PinnProblem, PointST,
    ProblemBc, ResidualScales, ResidualSet,
};

#[derive(Debug, Error)]
pub enum StefanError {
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("temperature field never crosses the melting point")]
    NoInterfaceCrossing,
    #[error("inconsistent field: {0}")]
    BadField(String),
    #[error("Newton failed to converge at t = {t} after {iters} iterations (residual {residual:.3e})")]
    NewtonDiverged { t: f64, iters: usize, residual: f64 },
    #[error("invalid FEM setup: {0}")]
    BadSetup(String),
}

pub const T_LOW: f64 = 298.15;
pub const T_HIGH: f64 = 973.15;
pub const T_MELT: f64 = 933.15;
pub const X_MIN: f64 = -0.4;
pub const X_MAX: f64 = 0.4;
pub const T_WINDOW: (f64, f64) = (5.0, 10.0);

/// Graphite mold: single phase; the mushy band is placed far above any
/// temperature reached here and the latent heat is zero, so the phase
/// machinery is inert.
pub fn graphite() -> MaterialPhaseProps {
    MaterialPhaseProps {
        rho_l: 2200.0,
        rho_s: 2200.0,
        mu_l: 1.0,
        mu_s: 1.0,
        cp_l: PropertyFn::Constant(1700.0),
        cp_s: PropertyFn::Constant(1700.0),
        kappa_l: PropertyFn::Constant(100.0),
        kappa_s: PropertyFn::Constant(100.0),
        t_solidus: 5000.0,
        t_liquidus: 5001.0,
        latent_heat: 0.0,
        dsigma_dt: 0.0,
        gravity: vec![0.0],
        t_ref: T_LOW,
    }
}

/// Aluminum with a 1 K mushy band straddling the 933.15 K melting
/// point: the sharp-interface latent heat release is regularized onto
/// the ramp.
pub fn aluminum() -> MaterialPhaseProps {
    MaterialPhaseProps {
        rho_l: 2555.0,
        rho_s: 2555.0,
        mu_l: 1.0,
        mu_s: 1.0,
        cp_l: PropertyFn::Constant(1190.0),
        cp_s: PropertyFn::Constant(1190.0),
        kappa_l: PropertyFn::Constant(91.0),
        kappa_s: PropertyFn::Constant(211.0),
        t_solidus: T_MELT - 0.5,
        t_liquidus: T_MELT + 0.5,
        latent_heat: 398_000.0,
        dsigma_dt: 0.0,
        gravity: vec![0.0],
        t_ref: T_LOW,
    }
}

/// The benchmark setup: domain split, region temperatures, materials,
/// prediction window.
#[derive(Clone, Debug)]
pub struct SolidificationProblem {
    pub domain_x: (f64, f64),
    pub window: (f64, f64),
    pub t_low: f64,
    pub t_high: f64,
    pub t_melt: f64,
    pub mold: MaterialPhaseProps,
    pub metal: MaterialPhaseProps,
}

impl Default for SolidificationProblem {
    fn default() -> Self {
        Self {
            domain_x: (X_MIN, X_MAX),
            window: T_WINDOW,
            t_low: T_LOW,
            t_high: T_HIGH,
            t_melt: T_MELT,
            mold: graphite(),
            metal: aluminum(),
        }
    }
}

impl SolidificationProblem {
    pub fn validate(&self) -> Result<(), StefanError> {
        if !(self.t_low < self.t_melt && self.t_melt < self.t_high) {
            return Err(StefanError::BadSetup(format!(
                "region temperatures must bracket the melting point: {} < {} < {}",
                self.t_low, self.t_melt, self.t_high
            )));
        }
        Ok(())
    }
}

/// Interface position x*(t) = 7.095e-3 sqrt(t), meters.
pub fn analytic_interface(t: f64) -> Result<f64, StefanError> {
    if !(t > 0.0) {
        return Err(StefanError::NonPositiveTime(t));
    }
    Ok(7.095e-3 * t.sqrt())
}

/// Closed-form temperature: mold branch for x <= 0, solid-aluminum
/// branch up to the interface, liquid branch beyond.
pub fn analytic_temperature(x: f64, t: f64) -> Result<f64, StefanError> {
    let xs = analytic_interface(t)?;
    let rt = t.sqrt();
    Ok(if x <= 0.0 {
        769.95 + 471.8 * libm::erf(96.69 * x / rt)
    } else if x <= xs {
        769.95 + 360.2 * libm::erf(60.02 * x / rt)
    } else {
        973.15 - 111.4 * libm::erfc(91.39 * x / rt)
    })
}

/// Wire the PINN problem: thermal-only residual over the two-material
/// domain, hard Dirichlet ends at the far-field temperatures, and the
/// initial profile at the window start as the labeled-data constraint.
pub fn build_pinn_problem(setup: &SolidificationProblem, n_ic: usize, seed: u64) -> PinnProblem {
    let domain = DomainBox { t: setup.window, x: vec![setup.domain_x] };
    let (x0, x1) = setup.domain_x;
    let l_ref = x1 - x0;
    let u_ref = l_ref / (setup.window.1 - setup.window.0);
    let dt_range = setup.t_high - setup.t_low;
    let rho_c = setup.metal.rho_s * 1190.0;

    // initial-condition samples at the window start, labeled by the
    // analytic solution
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ic_domain = DomainBox { t: (setup.window.0, setup.window.0 + 1e-9), x: vec![setup.domain_x] };
    let temp: Vec<(PointST, f64)> = sample_interior(&ic_domain, n_ic, SamplingStrategy::LatinHypercube, &mut rng)
        .into_iter()
        .map(|mut p| {
            p.t = setup.window.0;
            let label = analytic_temperature(p.x[0], p.t).expect("window start is positive");
            (p, label)
        })
        .collect();

    PinnProblem {
        name: "stefan".into(),
        domain,
        layout: OutputLayout::Thermal,
        material: MaterialLayout::TwoRegion1D { split: 0.0, left: setup.mold.clone(), right: setup.metal.clone() },
        gravity: GravitySource::FromMaterial,
        heat_source: HeatSource::Zero,
        bc: ProblemBc {
            dirichlet_faces: vec![Face { axis: 0, hi: false }, Face { axis: 0, hi: true }],
            eps: 0.02 * l_ref,
            values: vec![BcValue::AxisRamp { axis: 0, x0, x1, v0: setup.t_low, v1: setup.t_high }],
            neumann: vec![],
        },
        scales: ResidualScales {
            momentum: 1.0,
            continuity: 1.0,
            energy: rho_c * dt_range * u_ref / l_ref,
            traction: 1.0,
            flux: 1.0,
        },
        residuals: ResidualSet::thermal_only(),
        data: DataSet { u: vec![], p: vec![], temp },
        output_ranges: vec![(setup.t_low, setup.t_high)],
        allow_density_contrast: false,
    }
}

/// Solidification-benchmark quality metrics for a trained model.
#[derive(Clone, Copy, Debug)]
pub struct StefanPinnMetrics {
    /// Relative L2 temperature error over the space-time slab.
    pub l2: f64,
    /// Worst relative interface-position error over the sampled times.
    pub max_interface_rel: f64,
}

/// Compare a model against the closed-form solution: slab L2 error on a
/// tensor grid plus the interface trajectory extracted from fine spatial
/// scans at half-second intervals.
pub fn pinn_metrics(
    model: &crate::network::PinnModel,
    setup: &SolidificationProblem,
) -> Result<StefanPinnMetrics, StefanError> {
    use rayon::prelude::*;
    let (t0, t1) = setup.window;
    let (x0, x1) = setup.domain_x;
    let (n_t, n_x) = (51, 121);
    let rows: Vec<(f64, f64)> = (0..n_t)
        .into_par_iter()
        .map(|i| {
            let t = t0 + (t1 - t0) * i as f64 / (n_t - 1) as f64;
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..n_x {
                let x = x0 + (x1 - x0) * j as f64 / (n_x - 1) as f64;
                let pred = model.predict(t, &[x]).expect("dimensions fixed")[0];
                let oracle = analytic_temperature(x, t).expect("t > 0");
                num += (pred - oracle) * (pred - oracle);
                den += oracle * oracle;
            }
            (num, den)
        })
        .collect();
    let (num, den) = rows.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let l2 = (num / den).sqrt();

    let times: Vec<f64> = (0..=10).map(|k| t0 + (t1 - t0) * k as f64 / 10.0).collect();
    let n_scan = 1601;
    let worst = times
        .par_iter()
        .map(|&t| {
            let xs: Vec<f64> =
                (0..n_scan).map(|j| x0 + (x1 - x0) * j as f64 / (n_scan - 1) as f64).collect();
            let temps: Vec<f64> =
                xs.iter().map(|&x| model.predict(t, &[x]).expect("dimensions fixed")[0]).collect();
            let got = extract_interface(&xs, &temps, setup.t_melt)?;
            let want = analytic_interface(t)?;
            Ok(((got - want) / want).abs())
        })
        .collect::<Result<Vec<f64>, StefanError>>()?
        .into_iter()
        .fold(0.0f64, f64::max);

    Ok(StefanPinnMetrics { l2, max_interface_rel: worst })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interface_reference_values() {
        assert!((analytic_interface(1.0).unwrap() - 7.095e-3).abs() < 1e-18);
        assert!((analytic_interface(4.0).unwrap() - 1.419e-2).abs() < 1e-17);
        let x10 = analytic_interface(10.0).unwrap();
        assert!((x10 - 7.095e-3 * 10f64.sqrt()).abs() < 1e-18);
        assert!((x10 - 2.2436e-2).abs() < 5e-7);
        assert!(analytic_interface(0.0).is_err());
        assert!(analytic_interface(-1.0).is_err());
    }

    #[test]
    fn temperature_reference_values() {
        // contact point holds the constant interface temperature
        for &t in &[1.0, 5.0, 10.0] {
            assert!((analytic_temperature(0.0, t).unwrap() - 769.95).abs() < 1e-12);
        }
        // far ends are saturated to the region temperatures
        assert!((analytic_temperature(-0.4, 5.0).unwrap() - 298.15).abs() < 1e-6);
        assert!((analytic_temperature(0.4, 5.0).unwrap() - 973.15).abs() < 1e-6);
    }

    #[test]
    fn solid_branch_hits_melting_point_at_interface() {
        for &t in &[5.0, 7.5, 10.0] {
            let xs = analytic_interface(t).unwrap();
            let solid_side = 769.95 + 360.2 * libm::erf(60.02 * xs / t.sqrt());
            assert!((solid_side - T_MELT).abs() < 0.2, "t = {t}: {solid_side}");
        }
    }

    #[test]
    fn branch_continuity_at_interface() {
        // the solid and liquid branches meet near T_melt
        for &t in &[5.0, 6.0, 7.5, 9.0, 10.0] {
            let xs = analytic_interface(t).unwrap();
            let below = analytic_temperature(xs * (1.0 - 1e-12), t).unwrap();
            let above = analytic_temperature(xs * (1.0 + 1e-12), t).unwrap();
            assert!((below - above).abs() < 0.5, "t = {t}: {below} vs {above}");
        }
    }

    #[test]
    fn mold_branch_satisfies_the_heat_equation() {
        // alpha = kappa/(rho c_p) for graphite makes 96.69 = 1/(2 sqrt(alpha)):
        // the mold branch is an exact similarity solution, so the energy
        // residual on analytic derivatives is at rounding level.
        let alpha: f64 = 100.0 / (2200.0 * 1700.0);
        assert!((96.69 - 0.5 / alpha.sqrt()).abs() < 0.01);
        let scale = 2200.0 * 1700.0 * (T_HIGH - T_LOW); // rho c dT / 1 s
        for &(x, t) in &[(-0.05, 5.0), (-0.1, 7.0), (-0.2, 9.0)] {
            let (b, c) = (471.8, 96.69);
            let rt = f64::sqrt(t);
            let arg = c * x / rt;
            let de = (-arg * arg).exp() * 2.0 / std::f64::consts::PI.sqrt();
            let t_xx = b * de * (-2.0 * arg * c / rt) * c / rt;
            let t_t = b * de * (-0.5 * c * x / (rt * t));
            let residual = 2200.0 * 1700.0 * t_t - 100.0 * t_xx;
            assert!(
                (residual / scale).abs() < 2e-4,
                "x = {x}, t = {t}: scaled residual {}",
                residual / scale
            );
        }
    }

    #[test]
    fn pinn_problem_is_well_formed() {
        let p = build_pinn_problem(&SolidificationProblem::default(), 64, 5);
        p.validate().unwrap();
        assert_eq!(p.data.temp.len(), 64);
        assert!(p.data.temp.iter().all(|(pt, _)| pt.t == 5.0));
        assert!(p.data.temp.iter().all(|(pt, lab)| {
            let want = analytic_temperature(pt.x[0], 5.0).unwrap();
            (lab - want).abs() < 1e-12
        }));
        assert_eq!(p.n_inputs(), 2);
        assert_eq!(p.n_outputs(), 1);
        assert!((p.bc.eps - 0.016).abs() < 1e-15);
    }
}



