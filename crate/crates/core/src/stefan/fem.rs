//! Linear-element Galerkin baseline for the two-material conduction
//! problem with latent heat: enthalpy form, implicit backward Euler,
//! Newton on the enthalpy nonlinearity with a tridiagonal Jacobian.

use crate::physics::{liquid_fraction, liquid_fraction_deriv, MaterialPhaseProps, PropertyFn};

use super::{SolidificationProblem, StefanError};

/// 2-point Gauss rule on [0, 1]: exact for cubics, which covers every
/// integrand once the element is segmented at the mushy-band crossings
/// (the enthalpy is then polynomial on each segment).
const GAUSS2_S: [f64; 2] = [0.21132486540518713, 0.7886751345948129];
const GAUSS2_W: [f64; 2] = [0.5, 0.5];

const NEWTON_MAX_ITERS: usize = 50;
const NEWTON_REL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FemBc {
    /// Fixed temperatures at both ends.
    FixedEnds { left: f64, right: f64 },
    /// Natural (zero-flux) ends: used for the conservation check.
    Adiabatic,
}

/// Nodal temperature history on a fixed grid.
#[derive(Clone, Debug)]
pub struct Fem1DResult {
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    pub temps: Vec<Vec<f64>>,
}

impl Fem1DResult {
    pub fn last(&self) -> &[f64] {
        self.temps.last().expect("at least one recorded step")
    }

    /// Linear interpolation in space and time over the recorded history.
    pub fn sample(&self, x: f64, t: f64) -> f64 {
        let ti = match self.times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.interp_x(&self.temps[i], x),
            Err(i) => i,
        };
        if ti == 0 {
            return self.interp_x(&self.temps[0], x);
        }
        if ti >= self.times.len() {
            return self.interp_x(self.last(), x);
        }
        let (t0, t1) = (self.times[ti - 1], self.times[ti]);
        let w = (t - t0) / (t1 - t0);
        let a = self.interp_x(&self.temps[ti - 1], x);
        let b = self.interp_x(&self.temps[ti], x);
        a + w * (b - a)
    }

    fn interp_x(&self, temps: &[f64], x: f64) -> f64 {
        let n = self.x.len();
        if x <= self.x[0] {
            return temps[0];
        }
        if x >= self.x[n - 1] {
            return temps[n - 1];
        }
        let h = (self.x[n - 1] - self.x[0]) / (n - 1) as f64;
        let i = (((x - self.x[0]) / h).floor() as usize).min(n - 2);
        let w = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
        temps[i] + w * (temps[i + 1] - temps[i])
    }
}

fn const_prop(p: &PropertyFn, what: &str) -> Result<f64, StefanError> {
    match p {
        PropertyFn::Constant(c) => Ok(*c),
        _ => Err(StefanError::BadSetup(format!("{what} must be constant for the enthalpy baseline"))),
    }
}

struct Mat {
    rho: f64,
    cp: f64,
    kappa_s: f64,
    kappa_l: f64,
    latent: f64,
    t_s: f64,
    t_l: f64,
}

impl Mat {
    fn new(m: &MaterialPhaseProps) -> Result<Self, StefanError> {
        Ok(Self {
            rho: m.rho_s,
            cp: const_prop(&m.cp_s, "specific heat")?,
            kappa_s: const_prop(&m.kappa_s, "conductivity")?,
            kappa_l: const_prop(&m.kappa_l, "conductivity")?,
            latent: m.latent_heat,
            t_s: m.t_solidus,
            t_l: m.t_liquidus,
        })
    }

    /// Volumetric enthalpy rho (c_p T + L f_L).
    fn enthalpy(&self, t: f64) -> f64 {
        let f = liquid_fraction(t, self.t_s, self.t_l).expect("validated band");
        self.rho * (self.cp * t + self.latent * f)
    }

    fn enthalpy_deriv(&self, t: f64) -> f64 {
        self.rho * (self.cp + self.latent * liquid_fraction_deriv(t, self.t_s, self.t_l))
    }

    fn kappa(&self, t: f64) -> f64 {
        let f = liquid_fraction(t, self.t_s, self.t_l).expect("validated band");
        f * self.kappa_l + (1.0 - f) * self.kappa_s
    }
}

struct Tridiag {
    lo: Vec<f64>,
    diag: Vec<f64>,
    hi: Vec<f64>,
}

impl Tridiag {
    fn zeros(n: usize) -> Self {
        Self { lo: vec![0.0; n], diag: vec![0.0; n], hi: vec![0.0; n] }
    }

    /// Thomas algorithm; consumes the matrix.
    fn solve(mut self, mut rhs: Vec<f64>) -> Vec<f64> {
        let n = rhs.len();
        for i in 1..n {
            let w = self.lo[i] / self.diag[i - 1];
            self.diag[i] -= w * self.hi[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut x = vec![0.0; n];
        x[n - 1] = rhs[n - 1] / self.diag[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (rhs[i] - self.hi[i] * x[i + 1]) / self.diag[i];
        }
        x
    }
}

/// Parametric positions in (0, 1) where a nodally linear field crosses
/// the mushy-band edges, for both the current and previous temperature
/// fields. Segmenting the element here makes every capacity integrand a
/// polynomial per segment.
fn mushy_breakpoints(m: &Mat, t_new: (f64, f64), t_old: (f64, f64), out: &mut Vec<f64>) {
    out.clear();
    out.push(0.0);
    let mut add = |pair: (f64, f64)| {
        let (a, b) = pair;
        if a != b {
            for thr in [m.t_s, m.t_l] {
                let s = (thr - a) / (b - a);
                if s > 0.0 && s < 1.0 {
                    out.push(s);
                }
            }
        }
    };
    add(t_new);
    add(t_old);
    out.push(1.0);
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup();
}

/// Residual of the backward-Euler step and its tridiagonal Jacobian.
/// The enthalpy ramp is far narrower than an element on the coarse
/// grids, so both the residual and the Jacobian capacity terms are
/// integrated exactly by splitting the element at the band crossings.
fn assemble(
    x: &[f64],
    temps: &[f64],
    old: &[f64],
    dt: f64,
    mats: &[&Mat],
    bc: &FemBc,
) -> (Vec<f64>, Tridiag) {
    let n = x.len();
    let mut res = vec![0.0; n];
    let mut jac = Tridiag::zeros(n);
    let mut brk = Vec::with_capacity(6);
    for e in 0..n - 1 {
        let h = x[e + 1] - x[e];
        let m = mats[e];
        mushy_breakpoints(m, (temps[e], temps[e + 1]), (old[e], old[e + 1]), &mut brk);
        let grad = temps[e + 1] - temps[e];
        for seg in brk.windows(2) {
            let (s0, s1) = (seg[0], seg[1]);
            let len = s1 - s0;
            if len <= 0.0 {
                continue;
            }
            for (gs, gw) in GAUSS2_S.iter().zip(GAUSS2_W) {
                let s = s0 + len * gs;
                let phi = [1.0 - s, s];
                let t_g = phi[0] * temps[e] + phi[1] * temps[e + 1];
                let t_old = phi[0] * old[e] + phi[1] * old[e + 1];
                let dh = (m.enthalpy(t_g) - m.enthalpy(t_old)) / dt;
                let dq = m.enthalpy_deriv(t_g) / dt;
                let kappa = m.kappa(t_g) / (h * h);
                let wj = gw * len * h;
                res[e] += wj * phi[0] * dh;
                res[e + 1] += wj * phi[1] * dh;
                jac.diag[e] += wj * phi[0] * phi[0] * dq;
                jac.diag[e + 1] += wj * phi[1] * phi[1] * dq;
                jac.hi[e] += wj * phi[0] * phi[1] * dq;
                jac.lo[e + 1] += wj * phi[1] * phi[0] * dq;
                // conduction on the same segmentation (kappa ramps with
                // the liquid fraction inside the band)
                res[e] -= wj * kappa * grad;
                res[e + 1] += wj * kappa * grad;
                jac.diag[e] += wj * kappa;
                jac.diag[e + 1] += wj * kappa;
                jac.hi[e] -= wj * kappa;
                jac.lo[e + 1] -= wj * kappa;
            }
        }
    }
    if let FemBc::FixedEnds { .. } = bc {
        for i in [0, n - 1] {
            res[i] = 0.0;
            jac.diag[i] = 1.0;
            jac.hi[i] = 0.0;
            jac.lo[i] = 0.0;
        }
    }
    (res, jac)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Initial nodal profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FemInit {
    /// The raw step: mold region at T_low, metal at T_high. Leaves an
    /// O(h) front offset because the first metal element is initialized
    /// partially below the solidus.
    StepRegions,
    /// Sample the closed-form solution at a positive start time, so the
    /// front is resolved from the first step. The march then runs over
    /// [t0, t_end].
    AnalyticAt(f64),
}

/// Implicit enthalpy-method solve of the solidification problem.
/// Records the nodal history for t >= `record_from` (always including
/// the final step).
pub fn fem_solve_1d(
    n_elems: usize,
    dt: f64,
    t_end: f64,
    problem: &SolidificationProblem,
    bc: FemBc,
    init: FemInit,
    record_from: f64,
) -> Result<Fem1DResult, StefanError> {
    if n_elems < 2 {
        return Err(StefanError::BadSetup(format!("need at least 2 elements, got {n_elems}")));
    }
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(StefanError::BadSetup(format!("dt = {dt} and t_end = {t_end} must be positive")));
    }
    let t_start = match init {
        FemInit::StepRegions => 0.0,
        FemInit::AnalyticAt(t0) => {
            if !(t0 > 0.0 && t0 < t_end) {
                return Err(StefanError::BadSetup(format!(
                    "analytic start time {t0} must lie in (0, {t_end})"
                )));
            }
            t0
        }
    };
    problem.validate()?;
    let mold = Mat::new(&problem.mold)?;
    let metal = Mat::new(&problem.metal)?;

    let (x0, x1) = problem.domain_x;
    let n = n_elems + 1;
    let h = (x1 - x0) / n_elems as f64;
    let x: Vec<f64> = (0..n).map(|i| x0 + i as f64 * h).collect();
    // element material by midpoint
    let mats: Vec<&Mat> =
        (0..n_elems).map(|e| if x[e] + 0.5 * h <= 0.0 { &mold } else { &metal }).collect();

    let mut temps: Vec<f64> = match init {
        FemInit::StepRegions => x
            .iter()
            .map(|&xi| {
                if xi < 0.0 {
                    problem.t_low
                } else if xi > 0.0 {
                    problem.t_high
                } else {
                    0.5 * (problem.t_low + problem.t_high)
                }
            })
            .collect(),
        FemInit::AnalyticAt(t0) => {
            x.iter().map(|&xi| super::analytic_temperature(xi, t0)).collect::<Result<_, _>>()?
        }
    };
    if let FemBc::FixedEnds { left, right } = bc {
        temps[0] = left;
        temps[n - 1] = right;
    }
    // Nodal sampling misstates the latent content of the front element;
    // because the scheme conserves enthalpy, that error would persist as
    // a permanent front offset. Correct the front node so the discrete
    // enthalpy integral matches the initial profile's exactly.
    let init_target = match init {
        FemInit::StepRegions => {
            // step profile: uniform regions, metal fully liquid
            let (x0d, x1d) = problem.domain_x;
            mold.enthalpy(problem.t_low) * (0.0 - x0d) + metal.enthalpy(problem.t_high) * (x1d - 0.0)
        }
        FemInit::AnalyticAt(t0) => analytic_total_enthalpy(problem, &mold, &metal, t0)?,
    };
    enthalpy_consistent_init(&x, &mut temps, problem, &metal, init_target)?;

    let n_steps = ((t_end - t_start) / dt).round() as usize;
    let mut out = Fem1DResult { x: x.clone(), times: Vec::new(), temps: Vec::new() };
    let t_char = problem.t_high - problem.t_low;

    for step in 1..=n_steps {
        let t_now = t_start + step as f64 * dt;
        let old = temps.clone();
        let mut iters = 0;
        loop {
            let (res, jac) = assemble(&x, &temps, &old, dt, &mats, &bc);
            // scale-free convergence measure: Newton update per characteristic
            // temperature
            let delta = jac.solve(res.clone());
            let rel = norm2(&delta) / (t_char * (n as f64).sqrt());
            let mut damp = 1.0;
            let base_norm = norm2(&res);
            loop {
                let trial: Vec<f64> =
                    temps.iter().zip(&delta).map(|(t, d)| t - damp * d).collect();
                let (res_t, _) = assemble(&x, &trial, &old, dt, &mats, &bc);
                if norm2(&res_t) <= base_norm || damp < 1.0 / 64.0 {
                    temps = trial;
                    break;
                }
                damp *= 0.5;
            }
            iters += 1;
            if rel < NEWTON_REL_TOL {
                break;
            }
            if iters >= NEWTON_MAX_ITERS {
                return Err(StefanError::NewtonDiverged { t: t_now, iters, residual: rel });
            }
        }
        if t_now + 1e-12 >= record_from || step == n_steps {
            out.times.push(t_now);
            out.temps.push(temps.clone());
        }
    }
    Ok(out)
}

/// Enthalpy integral of the closed-form profile at `t0`, with local
/// refinement around the front where the liquid fraction ramps.
fn analytic_total_enthalpy(
    problem: &SolidificationProblem,
    mold: &Mat,
    metal: &Mat,
    t0: f64,
) -> Result<f64, StefanError> {
    let (x0, x1) = problem.domain_x;
    let xs = super::analytic_interface(t0)?;
    let w = 5e-3;
    let spans: [(f64, f64, usize, &Mat); 4] = [
        (x0, 0.0, 4000, mold),
        (0.0, (xs - w).max(0.0), 4000, metal),
        ((xs - w).max(0.0), (xs + w).min(x1), 40000, metal),
        ((xs + w).min(x1), x1, 4000, metal),
    ];
    let mut total = 0.0;
    for (a, b, n, m) in spans {
        if b <= a {
            continue;
        }
        let h = (b - a) / n as f64;
        let mut acc = 0.5
            * (m.enthalpy(super::analytic_temperature(a, t0)?)
                + m.enthalpy(super::analytic_temperature(b, t0)?));
        for i in 1..n {
            acc += m.enthalpy(super::analytic_temperature(a + i as f64 * h, t0)?);
        }
        total += acc * h;
    }
    Ok(total)
}

/// Adjust the front node (first node above the metal solidus) so the
/// discrete enthalpy integral equals `target`. Monotone in the nodal
/// temperature, solved by bisection.
fn enthalpy_consistent_init(
    x: &[f64],
    temps: &mut [f64],
    problem: &SolidificationProblem,
    metal: &Mat,
    target: f64,
) -> Result<(), StefanError> {
    let n = x.len();
    let k = match temps.iter().position(|&t| t > metal.t_s) {
        Some(k) if k > 0 && k < n - 1 => k,
        _ => return Ok(()), // no adjustable interior front node
    };
    let mut lo = problem.t_low;
    let mut hi = problem.t_high;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        temps[k] = mid;
        let h = total_enthalpy(x, temps, problem)?;
        if h < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) < 1e-11 * (problem.t_high - problem.t_low) {
            break;
        }
    }
    Ok(())
}

/// Total enthalpy integral over the domain, segmented exactly like the
/// solver's capacity term. Conserved under adiabatic ends.
pub fn total_enthalpy(x: &[f64], temps: &[f64], problem: &SolidificationProblem) -> Result<f64, StefanError> {
    let mold = Mat::new(&problem.mold)?;
    let metal = Mat::new(&problem.metal)?;
    let mut total = 0.0;
    let mut brk = Vec::with_capacity(6);
    for e in 0..x.len() - 1 {
        let h = x[e + 1] - x[e];
        let m = if x[e] + 0.5 * h <= 0.0 { &mold } else { &metal };
        mushy_breakpoints(m, (temps[e], temps[e + 1]), (temps[e], temps[e + 1]), &mut brk);
        for seg in brk.windows(2) {
            let len = seg[1] - seg[0];
            for (gs, gw) in GAUSS2_S.iter().zip(GAUSS2_W) {
                let s = seg[0] + len * gs;
                let t_g = (1.0 - s) * temps[e] + s * temps[e + 1];
                total += gw * len * h * m.enthalpy(t_g);
            }
        }
    }
    Ok(total)
}
