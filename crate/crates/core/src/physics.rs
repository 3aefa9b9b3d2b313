//! Continuous-physics formulas: liquid fraction, phase-interpolated
//! properties, PDE residuals, laser flux, Marangoni traction, the IN625
//! property fits, and the cooling-rate relation.
//!
//! Everything is a pure function, generic over [`Scalar`] where the
//! training path needs the expression recorded on the tape. Branch
//! decisions (phase selection) use the primal value; at the mushy-zone
//! kinks the ramp-side one-sided derivative is used.

use thiserror::Error;

use crate::autodiff::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("liquid fraction requires T_s < T_l (got T_s = {ts}, T_l = {tl})")]
    BadMushyRange { ts: f64, tl: f64 },
    #[error("liquid fraction must lie in [0, 1], got {0}")]
    FractionOutOfRange(f64),
    #[error("missing derivative fields: {0}")]
    MissingDerivatives(String),
    #[error("boundary normal must be unit length, |n| = {0}")]
    NonUnitNormal(f64),
    #[error("invalid laser spec: {0}")]
    InvalidLaser(String),
    #[error("{0}")]
    ContractViolation(String),
}

/// Temperature-dependent property model: constant or a low-order
/// polynomial fit in T.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropertyFn {
    Constant(f64),
    /// a*T + b
    Linear { a: f64, b: f64 },
    /// a*T^2 + b*T + c
    Quadratic { a: f64, b: f64, c: f64 },
}

impl PropertyFn {
    pub fn eval<S: Scalar>(&self, t: S) -> S {
        match *self {
            PropertyFn::Constant(c) => t * 0.0 + c,
            PropertyFn::Linear { a, b } => t * a + b,
            PropertyFn::Quadratic { a, b, c } => (t * a + b) * t + c,
        }
    }

    /// d(property)/dT.
    pub fn deriv<S: Scalar>(&self, t: S) -> S {
        match *self {
            PropertyFn::Constant(_) => t * 0.0,
            PropertyFn::Linear { .. } => t * 0.0 + self.deriv_const().unwrap(),
            PropertyFn::Quadratic { a, b, .. } => t * (2.0 * a) + b,
        }
    }

    fn deriv_const(&self) -> Option<f64> {
        match *self {
            PropertyFn::Constant(_) => Some(0.0),
            PropertyFn::Linear { a, .. } => Some(a),
            PropertyFn::Quadratic { .. } => None,
        }
    }
}

/// Two-phase material record: per-phase density, viscosity, specific
/// heat, conductivity, the mushy band, latent heat, and the boundary
/// coefficients that travel with the material.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct MaterialPhaseProps {
    pub rho_l: f64,
    pub rho_s: f64,
    pub mu_l: f64,
    pub mu_s: f64,
    pub cp_l: PropertyFn,
    pub cp_s: PropertyFn,
    pub kappa_l: PropertyFn,
    pub kappa_s: PropertyFn,
    /// Solidus temperature (K).
    pub t_solidus: f64,
    /// Liquidus temperature (K).
    pub t_liquidus: f64,
    /// Latent heat of fusion (J/kg).
    pub latent_heat: f64,
    /// Marangoni coefficient d(sigma)/dT (N/(m K)).
    pub dsigma_dt: f64,
    /// Gravity vector (m/s^2), length >= the problem's space dimension.
    pub gravity: Vec<f64>,
    /// Reference temperature (K).
    pub t_ref: f64,
}

impl MaterialPhaseProps {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.t_solidus < self.t_liquidus) {
            return Err(PhysicsError::BadMushyRange { ts: self.t_solidus, tl: self.t_liquidus });
        }
        for (name, v) in [("rho_l", self.rho_l), ("rho_s", self.rho_s), ("mu_l", self.mu_l), ("mu_s", self.mu_s)] {
            if !(v > 0.0) {
                return Err(PhysicsError::InvalidMaterial(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.latent_heat < 0.0 {
            return Err(PhysicsError::InvalidMaterial(format!(
                "latent heat must be >= 0, got {}",
                self.latent_heat
            )));
        }
        Ok(())
    }
}

/// Liquid fraction: 0 below the solidus, 1 above the liquidus, linear in
/// between; continuous.
pub fn liquid_fraction<S: Scalar>(t: S, t_s: f64, t_l: f64) -> Result<S, PhysicsError> {
    if !(t_s < t_l) {
        return Err(PhysicsError::BadMushyRange { ts: t_s, tl: t_l });
    }
    let tv = t.value();
    Ok(if tv < t_s {
        t * 0.0
    } else if tv > t_l {
        t * 0.0 + 1.0
    } else {
        (t - t_s) * (1.0 / (t_l - t_s))
    })
}

/// d(f_L)/dT: 1/(T_l - T_s) inside the mushy band (boundary points take
/// the ramp-side value), 0 outside.
pub fn liquid_fraction_deriv(t: f64, t_s: f64, t_l: f64) -> f64 {
    if (t_s..=t_l).contains(&t) {
        1.0 / (t_l - t_s)
    } else {
        0.0
    }
}

/// Convex phase blend: psi = f_L psi_L + (1 - f_L) psi_S.
pub fn interp_property<S: Scalar>(f_l: S, psi_l: S, psi_s: S) -> Result<S, PhysicsError> {
    let v = f_l.value();
    if !(0.0..=1.0).contains(&v) {
        return Err(PhysicsError::FractionOutOfRange(v));
    }
    Ok(f_l * psi_l + (-f_l + 1.0) * psi_s)
}

/// Field values and derivatives at one space-time point, as produced by
/// the derivative engine. For conduction-only problems the velocity
/// entries are zeros of the right dimension.
#[derive(Clone, Debug)]
pub struct FieldState<S> {
    pub vel: Vec<S>,
    pub p: S,
    pub temp: S,
    pub vel_t: Vec<S>,
    /// vel_grad[i][j] = d(u_i)/d(x_j)
    pub vel_grad: Vec<Vec<S>>,
    pub vel_lap: Vec<S>,
    pub p_grad: Vec<S>,
    pub temp_t: S,
    pub temp_grad: Vec<S>,
    pub temp_lap: S,
}

impl<S> FieldState<S> {
    pub fn space_dim(&self) -> usize {
        self.temp_grad.len()
    }
}

fn require(cond: bool, what: &str) -> Result<(), PhysicsError> {
    if cond {
        Ok(())
    } else {
        Err(PhysicsError::MissingDerivatives(what.to_string()))
    }
}

/// Momentum residual: rho (u_t + u . grad u - g) + grad p - 2 mu lap u,
/// with rho and mu phase-blended at the local temperature.
pub fn residual_momentum<S: Scalar>(
    state: &FieldState<S>,
    props: &MaterialPhaseProps,
) -> Result<Vec<S>, PhysicsError> {
    let d = state.space_dim();
    require(state.vel.len() == d, "velocity components")?;
    require(state.vel_t.len() == d, "velocity time derivatives")?;
    require(state.vel_grad.len() == d && state.vel_grad.iter().all(|g| g.len() == d), "velocity gradient")?;
    require(state.vel_lap.len() == d, "velocity Laplacian")?;
    require(state.p_grad.len() == d, "pressure gradient")?;
    require(props.gravity.len() >= d, "gravity vector length")?;

    let f_l = liquid_fraction(state.temp, props.t_solidus, props.t_liquidus)?;
    let rho = interp_property(f_l, f_l * 0.0 + props.rho_l, f_l * 0.0 + props.rho_s)?;
    let mu = interp_property(f_l, f_l * 0.0 + props.mu_l, f_l * 0.0 + props.mu_s)?;

    let mut r = Vec::with_capacity(d);
    for i in 0..d {
        let mut conv = state.vel[0] * state.vel_grad[i][0];
        for j in 1..d {
            conv = conv + state.vel[j] * state.vel_grad[i][j];
        }
        let accel = state.vel_t[i] + conv - props.gravity[i];
        r.push(rho * accel + state.p_grad[i] - mu * state.vel_lap[i] * 2.0);
    }
    Ok(r)
}

/// Continuity residual: divergence of the velocity field.
pub fn residual_continuity<S: Scalar>(state: &FieldState<S>) -> Result<S, PhysicsError> {
    let d = state.vel_grad.len();
    require(d > 0 && state.vel_grad.iter().all(|g| g.len() == d), "velocity gradient")?;
    let mut div = state.vel_grad[0][0];
    for i in 1..d {
        div = div + state.vel_grad[i][i];
    }
    Ok(div)
}

/// Energy residual:
/// (rho c_p T)_t + u . grad(rho c_p T) + (rho L f_L)_t + u . (rho L grad f_L)
///   - kappa lap T - Q_T
/// with every temperature dependence chained through f_L and the
/// per-phase property fits. The conduction term uses kappa(T) * lap T,
/// the non-conservative form.
pub fn residual_energy<S: Scalar>(
    state: &FieldState<S>,
    props: &MaterialPhaseProps,
    q_volumetric: S,
) -> Result<S, PhysicsError> {
    let d = state.space_dim();
    require(state.vel.len() == d, "velocity components")?;
    require(state.temp_grad.len() == d, "temperature gradient")?;

    let t = state.temp;
    let f_l = liquid_fraction(t, props.t_solidus, props.t_liquidus)?;
    let dfl = liquid_fraction_deriv(t.value(), props.t_solidus, props.t_liquidus);

    let rho = interp_property(f_l, f_l * 0.0 + props.rho_l, f_l * 0.0 + props.rho_s)?;
    let drho = dfl * (props.rho_l - props.rho_s);

    let cp_l = props.cp_l.eval(t);
    let cp_s = props.cp_s.eval(t);
    let cp = interp_property(f_l, cp_l, cp_s)?;
    let dcp = (cp_l - cp_s) * dfl + f_l * props.cp_l.deriv(t) + (-f_l + 1.0) * props.cp_s.deriv(t);

    let kappa = interp_property(f_l, props.kappa_l.eval(t), props.kappa_s.eval(t))?;

    // d/dT [rho(T) c_p(T) T] = rho' c_p T + rho (c_p + c_p' T)
    let phi_p = cp * t * drho + rho * (cp + dcp * t);

    let mut adv = state.vel[0] * state.temp_grad[0];
    for j in 1..d {
        adv = adv + state.vel[j] * state.temp_grad[j];
    }

    // (rho L f_L)_t = L (rho' f_L + rho f_L') T_t
    let lat_time = (f_l * drho + rho * dfl) * props.latent_heat;
    // u . (rho L grad f_L) = rho L f_L' (u . grad T)
    let lat_adv = rho * (props.latent_heat * dfl);

    Ok(phi_p * (state.temp_t + adv) + lat_time * state.temp_t + lat_adv * adv
        - kappa * state.temp_lap
        - q_volumetric)
}

/// Gaussian moving laser heat flux (W/m^2): the beam center travels
/// along +x at the scan speed.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LaserSpec {
    /// Laser power Q (W).
    pub power: f64,
    /// Absorptivity eta (dimensionless, in (0, 1]).
    pub absorptivity: f64,
    /// Beam radius r_b (m).
    pub beam_radius: f64,
    /// Scan speed V_s (m/s).
    pub scan_speed: f64,
}

impl LaserSpec {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.power > 0.0) {
            return Err(PhysicsError::InvalidLaser(format!("power must be > 0, got {}", self.power)));
        }
        if !(self.absorptivity > 0.0 && self.absorptivity <= 1.0) {
            return Err(PhysicsError::InvalidLaser(format!(
                "absorptivity must be in (0, 1], got {}",
                self.absorptivity
            )));
        }
        if !(self.beam_radius > 0.0) {
            return Err(PhysicsError::InvalidLaser(format!(
                "beam radius must be > 0, got {}",
                self.beam_radius
            )));
        }
        if self.scan_speed < 0.0 {
            return Err(PhysicsError::InvalidLaser(format!(
                "scan speed must be >= 0, got {}",
                self.scan_speed
            )));
        }
        Ok(())
    }
}

/// q = 2 Q eta / (pi r_b^2) * exp(-2 ((x - V_s t)^2 + y^2) / r_b^2)
pub fn laser_flux(x: f64, y: f64, t: f64, laser: &LaserSpec) -> f64 {
    let rb2 = laser.beam_radius * laser.beam_radius;
    let dx = x - laser.scan_speed * t;
    let peak = 2.0 * laser.power * laser.absorptivity / (std::f64::consts::PI * rb2);
    peak * (-2.0 * (dx * dx + y * y) / rb2).exp()
}

/// Marangoni traction: tau = d(sigma)/dT * [grad T - (grad T . n) n].
/// Tangential by construction: tau . n = 0.
pub fn marangoni_traction<S: Scalar>(
    grad_t: &[S],
    normal: &[f64],
    dsigma_dt: f64,
) -> Result<Vec<S>, PhysicsError> {
    if grad_t.len() != normal.len() {
        return Err(PhysicsError::MissingDerivatives("temperature gradient / normal length".into()));
    }
    let n2: f64 = normal.iter().map(|v| v * v).sum();
    if (n2.sqrt() - 1.0).abs() > 1e-9 {
        return Err(PhysicsError::NonUnitNormal(n2.sqrt()));
    }
    let mut gn = grad_t[0] * normal[0];
    for i in 1..grad_t.len() {
        gn = gn + grad_t[i] * normal[i];
    }
    Ok(grad_t.iter().zip(normal).map(|(&g, &ni)| (g - gn * ni) * dsigma_dt).collect())
}

/// The IN625 per-phase specific heat and conductivity fits evaluated at T.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct In625PropsAt {
    pub cp_s: f64,
    pub cp_l: f64,
    pub kappa_s: f64,
    pub kappa_l: f64,
}

/// c_ps = 0.2441 T + 338.39 ; kappa_s = 3.0e-5 T^2 - 0.0366 T + 18.588 ;
/// c_pl = 709.25 ; kappa_l = 30.078.
pub fn in625_props(t: f64) -> In625PropsAt {
    In625PropsAt {
        cp_s: 0.2441 * t + 338.39,
        cp_l: 709.25,
        kappa_s: 3.0e-5 * t * t - 0.0366 * t + 18.588,
        kappa_l: 30.078,
    }
}

/// The full IN625 substrate material record.
pub fn in625_material() -> MaterialPhaseProps {
    MaterialPhaseProps {
        rho_l: 8440.0,
        rho_s: 8440.0,
        mu_l: 7.0e-3,
        mu_s: 7.0e-3,
        cp_l: PropertyFn::Constant(709.25),
        cp_s: PropertyFn::Linear { a: 0.2441, b: 338.39 },
        kappa_l: PropertyFn::Constant(30.078),
        kappa_s: PropertyFn::Quadratic { a: 3.0e-5, b: -0.0366, c: 18.588 },
        t_solidus: 1563.0,
        t_liquidus: 1623.0,
        latent_heat: 2.9e5,
        dsigma_dt: -2.0e-5,
        gravity: vec![0.0, 0.0, -9.81],
        t_ref: 295.0,
    }
}

/// Cooling rate: R_c = (T_s - 1273.15) / t_c with
/// t_c = (D_s - D_1273) / V_s.
pub fn cooling_rate(d_s: f64, d_1273: f64, v_s: f64, t_solidus: f64) -> Result<f64, PhysicsError> {
    if !(v_s > 0.0) {
        return Err(PhysicsError::ContractViolation(format!("scan speed must be > 0, got {v_s}")));
    }
    if d_s == d_1273 {
        return Err(PhysicsError::ContractViolation(
            "cooling distance is zero (D_s == D_1273)".into(),
        ));
    }
    let t_c = (d_s - d_1273) / v_s;
    Ok((t_solidus - 1273.15) / t_c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_state(d: usize) -> FieldState<f64> {
        FieldState {
            vel: vec![0.0; d],
            p: 0.0,
            temp: 300.0,
            vel_t: vec![0.0; d],
            vel_grad: vec![vec![0.0; d]; d],
            vel_lap: vec![0.0; d],
            p_grad: vec![0.0; d],
            temp_t: 0.0,
            temp_grad: vec![0.0; d],
            temp_lap: 0.0,
        }
    }

    #[test]
    fn liquid_fraction_branches() {
        // IN625 band
        assert_eq!(liquid_fraction(1500.0, 1563.0, 1623.0).unwrap(), 0.0);
        assert!((liquid_fraction(1593.0, 1563.0, 1623.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(liquid_fraction(1700.0, 1563.0, 1623.0).unwrap(), 1.0);
        assert!(liquid_fraction(1600.0, 1623.0, 1563.0).is_err());
        // ramp-side derivative at the kinks
        assert_eq!(liquid_fraction_deriv(1563.0, 1563.0, 1623.0), 1.0 / 60.0);
        assert_eq!(liquid_fraction_deriv(1623.0, 1563.0, 1623.0), 1.0 / 60.0);
        assert_eq!(liquid_fraction_deriv(1562.9, 1563.0, 1623.0), 0.0);
    }

    #[test]
    fn interp_endpoints_and_blend() {
        assert_eq!(interp_property(0.0, 91.0, 211.0).unwrap(), 211.0);
        assert_eq!(interp_property(1.0, 91.0, 211.0).unwrap(), 91.0);
        // aluminum conductivity blend at f_L = 0.25
        assert!((interp_property(0.25, 91.0, 211.0).unwrap() - 181.0).abs() < 1e-12);
        assert!(interp_property(1.5, 0.0, 1.0).is_err());
        assert!(interp_property(-0.1, 0.0, 1.0).is_err());
    }

    fn test_props() -> MaterialPhaseProps {
        let mut m = in625_material();
        m.gravity = vec![0.0, 0.0, -9.8];
        m
    }

    #[test]
    fn momentum_hydrostatic_balance_is_zero() {
        // u = 0, grad p = rho g: residual vanishes identically.
        let props = test_props();
        let mut s = zero_state(3);
        s.p_grad = vec![0.0, 0.0, 8440.0 * -9.8];
        let r = residual_momentum(&s, &props).unwrap();
        for ri in r {
            assert_eq!(ri, 0.0);
        }
    }

    #[test]
    fn momentum_gravity_only() {
        let props = test_props();
        let s = zero_state(3);
        let r = residual_momentum(&s, &props).unwrap();
        assert_eq!(r[0], 0.0);
        assert_eq!(r[1], 0.0);
        assert!((r[2] - 82712.0).abs() < 1e-9);
    }

    #[test]
    fn momentum_missing_fields_error() {
        let props = test_props();
        let mut s = zero_state(3);
        s.vel_lap = vec![0.0; 2];
        assert!(matches!(residual_momentum(&s, &props), Err(PhysicsError::MissingDerivatives(_))));
    }

    #[test]
    fn continuity_examples() {
        // u = (x, -y, 0): divergence-free
        let mut s = zero_state(3);
        s.vel_grad[0][0] = 1.0;
        s.vel_grad[1][1] = -1.0;
        assert_eq!(residual_continuity(&s).unwrap(), 0.0);
        // u = (x, y, z): divergence 3
        let mut s = zero_state(3);
        for i in 0..3 {
            s.vel_grad[i][i] = 1.0;
        }
        assert_eq!(residual_continuity(&s).unwrap(), 3.0);
    }

    #[test]
    fn energy_constant_single_phase_is_zero() {
        let props = test_props();
        let s = zero_state(3);
        assert_eq!(residual_energy(&s, &props, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn energy_linear_advection() {
        // T linear in x with slope G, u = (U, 0, 0), single phase,
        // constant rho and c_p: r_T = rho c_p U G.
        let mut props = test_props();
        props.cp_s = PropertyFn::Constant(500.0);
        props.cp_l = PropertyFn::Constant(500.0);
        let (u, g) = (0.8, 120.0);
        let mut s = zero_state(3);
        s.temp = 600.0; // solid
        s.vel[0] = u;
        s.temp_grad[0] = g;
        let r = residual_energy(&s, &props, 0.0).unwrap();
        let want = 8440.0 * 500.0 * u * g;
        assert!((r - want).abs() < want.abs() * 1e-12, "r = {r}, want {want}");
    }

    #[test]
    fn energy_with_temperature_dependent_cp() {
        // Single phase, u = 0: r_T = rho (c_p + c_p' T) T_t.
        let props = test_props();
        let mut s = zero_state(3);
        s.temp = 800.0;
        s.temp_t = 3.0;
        let r = residual_energy(&s, &props, 0.0).unwrap();
        let cp = 0.2441 * 800.0 + 338.39;
        let want = 8440.0 * (cp + 0.2441 * 800.0) * 3.0;
        assert!((r - want).abs() < want.abs() * 1e-12);
    }

    #[test]
    fn laser_flux_values() {
        let laser = LaserSpec { power: 195.0, absorptivity: 0.43, beam_radius: 50e-6, scan_speed: 0.8 };
        // beam center
        let q0 = laser_flux(0.8 * 1e-3, 0.0, 1e-3, &laser);
        let want = 2.0 * 195.0 * 0.43 / (std::f64::consts::PI * 2.5e-9);
        assert!((q0 - want).abs() < want * 1e-12);
        assert!((want - 2.135e10).abs() < 0.001e10);
        // far away
        assert!(laser_flux(1.0, 1.0, 0.0, &laser) < 1e-300);
    }

    #[test]
    fn laser_flux_plane_integral_is_absorbed_power() {
        // integral over the plane = Q eta; midpoint quadrature over a
        // +-6 r_b window captures it to well under 0.1%.
        let laser = LaserSpec { power: 195.0, absorptivity: 0.43, beam_radius: 50e-6, scan_speed: 0.8 };
        let t = 1.3e-3;
        let xc = laser.scan_speed * t;
        let r = 6.0 * laser.beam_radius;
        let n = 400;
        let h = 2.0 * r / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = xc - r + (i as f64 + 0.5) * h;
                let y = -r + (j as f64 + 0.5) * h;
                total += laser_flux(x, y, t, &laser) * h * h;
            }
        }
        let want = 195.0 * 0.43;
        assert!((total - want).abs() / want < 1e-3, "integral {total} vs {want}");
    }

    #[test]
    fn marangoni_reference_cases() {
        // gradient parallel to the normal: no tangential part
        let tau = marangoni_traction(&[0.0, 0.0, 5.0], &[0.0, 0.0, 1.0], -2e-5).unwrap();
        assert_eq!(tau, vec![0.0, 0.0, 0.0]);
        // worked case
        let tau = marangoni_traction(&[1000.0, 0.0, 0.0], &[0.0, 0.0, 1.0], -2e-5).unwrap();
        assert!((tau[0] + 0.02).abs() < 1e-15);
        assert_eq!(tau[1], 0.0);
        assert_eq!(tau[2], 0.0);
        // normal component vanishes for any gradient
        let tau = marangoni_traction(&[3.0, -7.0, 11.0], &[0.0, 0.0, 1.0], -2e-5).unwrap();
        assert_eq!(tau[2], 0.0);
        // non-unit normal rejected
        assert!(matches!(
            marangoni_traction(&[1.0, 0.0, 0.0], &[0.0, 0.0, 2.0], -2e-5),
            Err(PhysicsError::NonUnitNormal(_))
        ));
    }

    #[test]
    fn in625_fits() {
        let p = in625_props(1000.0);
        assert!((p.cp_s - 582.49).abs() < 1e-10);
        let p = in625_props(298.15);
        assert!((p.kappa_s - 10.342512675).abs() < 1e-9);
        assert_eq!(p.kappa_l, 30.078);
        assert_eq!(in625_props(2000.0).kappa_l, 30.078);
    }

    #[test]
    fn cooling_rate_cases() {
        // worked example: 250 um at 0.8 m/s from T_s = 1563 K
        let r = cooling_rate(250e-6, 0.0, 0.8, 1563.0).unwrap();
        assert!((r - 9.2752e5).abs() / 9.2752e5 < 1e-4);
        assert!((r - 289.85 / 3.125e-4).abs() < 1e-6);
        // doubling the distance halves the rate
        let r2 = cooling_rate(500e-6, 0.0, 0.8, 1563.0).unwrap();
        assert!((r2 - r / 2.0).abs() < 1e-9);
        // T_s at the threshold: zero rate
        assert_eq!(cooling_rate(250e-6, 0.0, 0.8, 1273.15).unwrap(), 0.0);
        // contract violations
        assert!(cooling_rate(250e-6, 0.0, 0.0, 1563.0).is_err());
        assert!(cooling_rate(250e-6, 250e-6, 0.8, 1563.0).is_err());
    }

    #[test]
    fn residuals_work_on_tape_variables() {
        // The same formulas must be recordable; check values match the
        // f64 path and gradients flow to the temperature input.
        use crate::autodiff::{TapeCell, Tape};
        let props = test_props();
        let tape = TapeCell::from_tape({
            let mut t = Tape::new();
            t.register_params(&[1600.0]).unwrap(); // temperature as the parameter
            t
        });
        let tv = tape.var(0);
        let c0 = tape.constant(0.0);
        let s = FieldState {
            vel: vec![c0; 3],
            p: c0,
            temp: tv,
            vel_t: vec![c0; 3],
            vel_grad: vec![vec![c0; 3]; 3],
            vel_lap: vec![c0; 3],
            p_grad: vec![c0; 3],
            temp_t: tape.constant(2.0),
            temp_grad: vec![c0; 3],
            temp_lap: tape.constant(10.0),
        };
        let q = tape.constant(0.0);
        let r = residual_energy(&s, &props, q).unwrap();
        // mushy at 1600 K: compare against the f64 evaluation
        let s64 = FieldState {
            vel: vec![0.0; 3],
            p: 0.0,
            temp: 1600.0,
            vel_t: vec![0.0; 3],
            vel_grad: vec![vec![0.0; 3]; 3],
            vel_lap: vec![0.0; 3],
            p_grad: vec![0.0; 3],
            temp_t: 2.0,
            temp_grad: vec![0.0; 3],
            temp_lap: 10.0,
        };
        let want = residual_energy(&s64, &props, 0.0).unwrap();
        let got = crate::autodiff::Scalar::value(r);
        assert!((got - want).abs() <= want.abs() * 1e-12, "{got} vs {want}");
        // the reverse sweep reaches the temperature slot
        let g = tape.with(|t| t.grad(r.index())).unwrap();
        assert!(g[0].is_finite() && g[0] != 0.0);
    }
}
