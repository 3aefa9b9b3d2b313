//! Manufactured-solution verification of the 3D residual stack.
//!
//! The fields are smooth trigonometric products: a divergence-free
//! velocity pair, a pressure, and a temperature that sweeps through the
//! solid, mushy, and liquid ranges so the full phase chain rule is
//! exercised. The forcings that make the residuals vanish are written
//! out here in closed form, substituting the per-phase property
//! polynomials directly — deliberately not calling the production
//! property-blend code, so the two derivations stay independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::physics::{
    residual_continuity, residual_energy, residual_momentum, FieldState, MaterialPhaseProps, PhysicsError,
    PropertyFn,
};
use crate::problem::{DomainBox, ResidualScales};

/// Closed-form space-time fields with all constants baked in.
#[derive(Clone, Debug)]
pub struct ManufacturedSolution {
    lo: [f64; 3],
    t0: f64,
    k: [f64; 3],
    omega: f64,
    u0: f64,
    u1_amp: f64,
    p0: f64,
    pub t_mid: f64,
    pub t_amp: f64,
    // material constants for the energy forcing
    rho: f64,
    mu: f64,
    latent: f64,
    t_s: f64,
    t_l: f64,
    cp_s_a: f64,
    cp_s_b: f64,
    cp_l: f64,
    k_s_a: f64,
    k_s_b: f64,
    k_s_c: f64,
    k_l: f64,
}

impl ManufacturedSolution {
    /// Build fields spanning the given box and the material's phase
    /// range. Requires equal phase densities and viscosities, a linear
    /// solid c_p, constant liquid c_p, quadratic solid conductivity and
    /// constant liquid conductivity (the IN625 shapes).
    pub fn new(domain: &DomainBox, props: &MaterialPhaseProps) -> Result<Self, PhysicsError> {
        if domain.space_dim() != 3 {
            return Err(PhysicsError::ContractViolation(format!(
                "manufactured fields are three-dimensional, domain has {} axes",
                domain.space_dim()
            )));
        }
        if props.rho_l != props.rho_s || props.mu_l != props.mu_s {
            return Err(PhysicsError::ContractViolation(
                "manufactured forcing assumes equal phase density and viscosity".into(),
            ));
        }
        let (cp_s_a, cp_s_b) = match props.cp_s {
            PropertyFn::Linear { a, b } => (a, b),
            PropertyFn::Constant(c) => (0.0, c),
            _ => return Err(PhysicsError::ContractViolation("unsupported solid c_p shape".into())),
        };
        let cp_l = match props.cp_l {
            PropertyFn::Constant(c) => c,
            _ => return Err(PhysicsError::ContractViolation("liquid c_p must be constant".into())),
        };
        let (k_s_a, k_s_b, k_s_c) = match props.kappa_s {
            PropertyFn::Quadratic { a, b, c } => (a, b, c),
            PropertyFn::Linear { a, b } => (0.0, a, b),
            PropertyFn::Constant(c) => (0.0, 0.0, c),
        };
        let k_l = match props.kappa_l {
            PropertyFn::Constant(c) => c,
            _ => return Err(PhysicsError::ContractViolation("liquid conductivity must be constant".into())),
        };
        let pi = std::f64::consts::PI;
        let k = [
            pi / (domain.x[0].1 - domain.x[0].0),
            pi / (domain.x[1].1 - domain.x[1].0),
            pi / (domain.x[2].1 - domain.x[2].0),
        ];
        let u0 = 1.5;
        let band = props.t_liquidus - props.t_solidus;
        Ok(Self {
            lo: [domain.x[0].0, domain.x[1].0, domain.x[2].0],
            t0: domain.t.0,
            k,
            omega: pi / (domain.t.1 - domain.t.0),
            u0,
            u1_amp: u0 * k[0] / k[1],
            p0: props.rho_l * u0 * u0,
            t_mid: 0.5 * (props.t_solidus + props.t_liquidus),
            t_amp: 5.0 * band,
            rho: props.rho_l,
            mu: props.mu_l,
            latent: props.latent_heat,
            t_s: props.t_solidus,
            t_l: props.t_liquidus,
            cp_s_a,
            cp_s_b,
            cp_l,
            k_s_a,
            k_s_b,
            k_s_c,
            k_l,
        })
    }

    fn trig(&self, t: f64, x: &[f64]) -> Trig {
        let a0 = self.k[0] * (x[0] - self.lo[0]);
        let a1 = self.k[1] * (x[1] - self.lo[1]);
        let a2 = self.k[2] * (x[2] - self.lo[2]);
        let at = self.omega * (t - self.t0);
        Trig {
            s: [a0.sin(), a1.sin(), a2.sin()],
            c: [a0.cos(), a1.cos(), a2.cos()],
            g: at.cos(),
            gp: -self.omega * at.sin(),
        }
    }

    /// All field values and derivatives at one point, exactly the shape
    /// the residuals consume.
    pub fn field_state(&self, t: f64, x: &[f64]) -> FieldState<f64> {
        let w = self.trig(t, x);
        let (s, c, g, gp) = (&w.s, &w.c, w.g, w.gp);
        let [kx, ky, kz] = self.k;
        let ksq = kx * kx + ky * ky + kz * kz;

        let u1 = self.u0 * s[0] * c[1] * c[2];
        let u2 = -self.u1_amp * c[0] * s[1] * c[2];
        let vel = vec![u1 * g, u2 * g, 0.0];
        let vel_t = vec![u1 * gp, u2 * gp, 0.0];
        let vel_grad = vec![
            vec![
                self.u0 * kx * c[0] * c[1] * c[2] * g,
                -self.u0 * ky * s[0] * s[1] * c[2] * g,
                -self.u0 * kz * s[0] * c[1] * s[2] * g,
            ],
            vec![
                self.u1_amp * kx * s[0] * s[1] * c[2] * g,
                -self.u1_amp * ky * c[0] * c[1] * c[2] * g,
                self.u1_amp * kz * c[0] * s[1] * s[2] * g,
            ],
            vec![0.0, 0.0, 0.0],
        ];
        let vel_lap = vec![-ksq * u1 * g, -ksq * u2 * g, 0.0];

        let trip = c[0] * c[1] * c[2];
        let p = self.p0 * trip * g;
        let p_grad = vec![
            -self.p0 * kx * s[0] * c[1] * c[2] * g,
            -self.p0 * ky * c[0] * s[1] * c[2] * g,
            -self.p0 * kz * c[0] * c[1] * s[2] * g,
        ];

        let temp = self.t_mid + self.t_amp * trip * g;
        let temp_t = self.t_amp * trip * gp;
        let temp_grad = vec![
            -self.t_amp * kx * s[0] * c[1] * c[2] * g,
            -self.t_amp * ky * c[0] * s[1] * c[2] * g,
            -self.t_amp * kz * c[0] * c[1] * s[2] * g,
        ];
        let temp_lap = -ksq * self.t_amp * trip * g;

        FieldState { vel, p, temp, vel_t, vel_grad, vel_lap, p_grad, temp_t, temp_grad, temp_lap }
    }

    /// Gravity that zeroes the momentum residual:
    /// g_i = u_i,t + (u . grad) u_i + p_,i / rho - (2 mu / rho) lap u_i.
    pub fn momentum_forcing(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let st = self.field_state(t, x);
        (0..3)
            .map(|i| {
                let conv: f64 = (0..3).map(|j| st.vel[j] * st.vel_grad[i][j]).sum();
                st.vel_t[i] + conv + st.p_grad[i] / self.rho - 2.0 * self.mu / self.rho * st.vel_lap[i]
            })
            .collect()
    }

    /// Volumetric source that zeroes the energy residual, with the
    /// per-phase property polynomials substituted directly:
    /// Q_T = [rho (c_p + c_p' T) + rho L f_L'] (T_t + u . grad T)
    ///       - kappa(T) lap T.
    pub fn energy_forcing(&self, t: f64, x: &[f64]) -> f64 {
        let st = self.field_state(t, x);
        let temp = st.temp;
        let adv: f64 = (0..3).map(|j| st.vel[j] * st.temp_grad[j]).sum();
        let sub = temp - self.t_s;
        let band = self.t_l - self.t_s;

        let (phi_p, lat, kappa) = if temp < self.t_s {
            let phi_p = self.rho * (2.0 * self.cp_s_a * temp + self.cp_s_b);
            let kappa = self.k_s_a * temp * temp + self.k_s_b * temp + self.k_s_c;
            (phi_p, 0.0, kappa)
        } else if temp > self.t_l {
            (self.rho * self.cp_l, 0.0, self.k_l)
        } else {
            let f = sub / band;
            let fp = 1.0 / band;
            let cp_solid = self.cp_s_a * temp + self.cp_s_b;
            let cp = f * self.cp_l + (1.0 - f) * cp_solid;
            let cp_p = fp * (self.cp_l - cp_solid) + (1.0 - f) * self.cp_s_a;
            let phi_p = self.rho * (cp + cp_p * temp);
            let lat = self.rho * self.latent * fp;
            let k_solid = self.k_s_a * temp * temp + self.k_s_b * temp + self.k_s_c;
            let kappa = f * self.k_l + (1.0 - f) * k_solid;
            (phi_p, lat, kappa)
        };
        (phi_p + lat) * (st.temp_t + adv) - kappa * st.temp_lap
    }

    /// Residual scales matched to the field magnitudes.
    pub fn scales(&self, domain: &DomainBox) -> ResidualScales {
        let l_ref = domain.shortest_edge();
        let dt = 2.0 * self.t_amp;
        ResidualScales {
            momentum: self.rho * self.u0 * self.u0 / l_ref,
            continuity: self.u0 / l_ref,
            energy: self.rho * self.cp_l * dt * self.u0 / l_ref,
            traction: self.rho * self.u0 * self.u0,
            flux: self.k_l * dt / l_ref,
        }
    }
}

struct Trig {
    s: [f64; 3],
    c: [f64; 3],
    g: f64,
    gp: f64,
}

/// Evaluate the three scaled residuals of the implementation on the
/// manufactured state at one point.
pub fn mms_residuals_at(
    sol: &ManufacturedSolution,
    props: &MaterialPhaseProps,
    scales: &ResidualScales,
    t: f64,
    x: &[f64],
) -> Result<f64, PhysicsError> {
    let state = sol.field_state(t, x);
    let mut props_local = props.clone();
    props_local.gravity = sol.momentum_forcing(t, x);
    let r_m = residual_momentum(&state, &props_local)?;
    let r_c = residual_continuity(&state)?;
    let r_t = residual_energy(&state, &props_local, sol.energy_forcing(t, x))?;
    let mut worst: f64 = 0.0;
    for rm in r_m {
        worst = worst.max((rm / scales.momentum).abs());
    }
    worst = worst.max((r_c / scales.continuity).abs());
    worst = worst.max((r_t / scales.energy).abs());
    Ok(worst)
}

/// Max scaled residual of the full 3D stack over `n` random points.
pub fn mms_verify(
    domain: &DomainBox,
    props: &MaterialPhaseProps,
    n: usize,
    seed: u64,
) -> Result<f64, PhysicsError> {
    let sol = ManufacturedSolution::new(domain, props)?;
    let scales = sol.scales(domain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let t = rng.gen_range(domain.t.0..domain.t.1);
        let x: Vec<f64> = domain.x.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
        worst = worst.max(mms_residuals_at(&sol, props, &scales, t, &x)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::in625_material;

    fn test_domain() -> DomainBox {
        DomainBox { t: (0.0, 2.0e-3), x: vec![(0.0, 1.0e-3), (-0.2e-3, 0.2e-3), (-0.3e-3, 0.0)] }
    }

    #[test]
    fn residuals_vanish_on_manufactured_fields() {
        let worst = mms_verify(&test_domain(), &in625_material(), 2000, 7).unwrap();
        assert!(worst < 1e-8, "max scaled residual {worst}");
    }

    #[test]
    fn corrupted_forcing_is_detected() {
        let domain = test_domain();
        let props = in625_material();
        let sol = ManufacturedSolution::new(&domain, &props).unwrap();
        let scales = sol.scales(&domain);
        let (t, x) = (1.0e-3, [0.4e-3, 0.05e-3, -0.1e-3]);
        let state = sol.field_state(t, &x);
        let mut plocal = props.clone();
        plocal.gravity = sol.momentum_forcing(t, &x);
        // shift Q_T by one scale unit: the scaled energy residual moves to ~1
        let q_bad = sol.energy_forcing(t, &x) + scales.energy;
        let r_t = crate::physics::residual_energy(&state, &plocal, q_bad).unwrap();
        let scaled = (r_t / scales.energy).abs();
        assert!((scaled - 1.0).abs() < 1e-6, "scaled corrupted residual {scaled}");
    }

    #[test]
    fn residual_magnitude_is_sample_count_independent() {
        let domain = test_domain();
        let props = in625_material();
        let small = mms_verify(&domain, &props, 100, 3).unwrap();
        let large = mms_verify(&domain, &props, 5000, 3).unwrap();
        // point-wise exact: more samples must not grow the error beyond
        // noise level
        assert!(small < 1e-8 && large < 1e-8, "small {small}, large {large}");
    }

    #[test]
    fn temperature_sweeps_all_phases() {
        let domain = test_domain();
        let props = in625_material();
        let sol = ManufacturedSolution::new(&domain, &props).unwrap();
        let mut saw = [false; 3];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        use rand::Rng;
        for _ in 0..500 {
            let t = rng.gen_range(domain.t.0..domain.t.1);
            let x: Vec<f64> = domain.x.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
            let temp = sol.field_state(t, &x).temp;
            if temp < props.t_solidus {
                saw[0] = true;
            } else if temp > props.t_liquidus {
                saw[2] = true;
            } else {
                saw[1] = true;
            }
        }
        assert!(saw.iter().all(|&s| s), "phases visited: {saw:?}");
    }
}
