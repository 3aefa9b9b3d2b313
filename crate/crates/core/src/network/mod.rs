//! Fully connected network with swish activation and the hard
//! Dirichlet-BC output wrapper.
//!
//! Parameters are stored flat as `[W_1 row-major, b_1, W_2, b_2, ...]` so
//! the same layout doubles as the tape's parameter-slot registry and as
//! the optimizer's state shape.

mod checkpoint;
mod eval;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use eval::{forward_with_input_derivs, grad_wrt_params, InputNormalizer, OutputDual, OutputScaler, PinnModel};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::Scalar;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid layer sizes: {0}")]
    InvalidLayerSizes(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite parameter at flat index {0}")]
    NonFiniteParam(usize),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
}

/// Span of one layer's weights and bias inside the flat parameter vector.
#[derive(Clone, Copy, Debug)]
pub struct LayerSpan {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    layer_sizes: Vec<usize>,
    data: Vec<f64>,
}

fn layer_spans(layer_sizes: &[usize]) -> Vec<LayerSpan> {
    let mut spans = Vec::with_capacity(layer_sizes.len().saturating_sub(1));
    let mut off = 0;
    for l in 0..layer_sizes.len().saturating_sub(1) {
        let n_in = layer_sizes[l];
        let n_out = layer_sizes[l + 1];
        spans.push(LayerSpan { w: off, b: off + n_in * n_out, n_in, n_out });
        off += n_in * n_out + n_out;
    }
    spans
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<(), NetworkError> {
    if layer_sizes.len() < 2 {
        return Err(NetworkError::InvalidLayerSizes(format!(
            "need at least an input and an output layer, got {} entries",
            layer_sizes.len()
        )));
    }
    if let Some(pos) = layer_sizes.iter().position(|&s| s == 0) {
        return Err(NetworkError::InvalidLayerSizes(format!("layer {pos} has size 0")));
    }
    Ok(())
}

impl NetworkParams {
    /// Glorot-uniform weights, zero biases, reproducible from `seed`.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self, NetworkError> {
        validate_sizes(layer_sizes)?;
        let spans = layer_spans(layer_sizes);
        let total = spans.last().map_or(0, |s| s.b + s.n_out);
        let mut data = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &spans {
            let limit = (6.0 / (s.n_in + s.n_out) as f64).sqrt();
            for w in &mut data[s.w..s.w + s.n_in * s.n_out] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(Self { layer_sizes: layer_sizes.to_vec(), data })
    }

    pub fn from_flat(layer_sizes: Vec<usize>, data: Vec<f64>) -> Result<Self, NetworkError> {
        validate_sizes(&layer_sizes)?;
        let spans = layer_spans(&layer_sizes);
        let total = spans.last().map_or(0, |s| s.b + s.n_out);
        if data.len() != total {
            return Err(NetworkError::DimensionMismatch { expected: total, got: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(NetworkError::NonFiniteParam(i));
        }
        Ok(Self { layer_sizes, data })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn spans(&self) -> Vec<LayerSpan> {
        layer_spans(&self.layer_sizes)
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Human-readable description of a flat parameter slot, for error
    /// messages that must name the offending parameter.
    pub fn describe_slot(&self, flat_index: usize) -> String {
        for (l, s) in self.spans().iter().enumerate() {
            if flat_index < s.b {
                let local = flat_index - s.w;
                return format!("layer {} weight [{}][{}]", l, local / s.n_in, local % s.n_in);
            }
            if flat_index < s.b + s.n_out {
                return format!("layer {} bias [{}]", l, flat_index - s.b);
            }
        }
        format!("flat index {flat_index} (out of range)")
    }
}

/// swish(x) = x * sigmoid(x), numerically stable for large |x|: the
/// exponent is never positive in either branch.
pub fn swish(x: f64) -> f64 {
    swish_scalar(x)
}

pub(crate) fn swish_scalar<S: Scalar>(x: S) -> S {
    if x.value() >= 0.0 {
        let s = ((-x).exp() + 1.0).recip();
        x * s
    } else {
        let e = x.exp();
        x * (e / (e + 1.0))
    }
}

/// Plain forward pass: hidden layers apply swish, the output layer is
/// affine. Generic over the scalar type so the same code runs on `f64`
/// and on forward-mode duals.
pub fn forward_generic<S: Scalar>(params: &NetworkParams, input: &[S]) -> Result<Vec<S>, NetworkError> {
    if input.len() != params.n_inputs() {
        return Err(NetworkError::DimensionMismatch { expected: params.n_inputs(), got: input.len() });
    }
    let spans = params.spans();
    let data = params.flat();
    let mut z: Vec<S> = input.to_vec();
    for (l, s) in spans.iter().enumerate() {
        let last = l + 1 == spans.len();
        let mut out = Vec::with_capacity(s.n_out);
        for r in 0..s.n_out {
            let row = &data[s.w + r * s.n_in..s.w + (r + 1) * s.n_in];
            let mut acc = z[0] * row[0];
            for j in 1..s.n_in {
                acc = acc + z[j] * row[j];
            }
            acc = acc + data[s.b + r];
            out.push(if last { acc } else { swish_scalar(acc) });
        }
        z = out;
    }
    Ok(z)
}

/// Forward pass on plain numbers.
pub fn forward(params: &NetworkParams, input: &[f64]) -> Result<Vec<f64>, NetworkError> {
    forward_generic(params, input)
}

// ---------------------------------------------------------------------
// Hard Dirichlet boundary-condition wrapper
// ---------------------------------------------------------------------

/// One face of an axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub axis: usize,
    /// false = lower bound of the axis, true = upper bound.
    pub hi: bool,
}

/// Prescribed Dirichlet value for one output component.
#[derive(Clone, Debug)]
pub enum BcValue {
    /// Component is not constrained; the raw output passes through.
    Unconstrained,
    Constant(f64),
    /// Linear ramp along one axis: `v0` at `x0`, `v1` at `x1`.
    AxisRamp { axis: usize, x0: f64, x1: f64, v0: f64, v1: f64 },
}

impl BcValue {
    /// Value, spatial gradient and spatial pure second derivatives at `x`.
    fn eval(&self, x: &[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        match *self {
            BcValue::Unconstrained => None,
            BcValue::Constant(v) => Some((v, vec![0.0; x.len()], vec![0.0; x.len()])),
            BcValue::AxisRamp { axis, x0, x1, v0, v1 } => {
                let slope = (v1 - v0) / (x1 - x0);
                let mut g = vec![0.0; x.len()];
                g[axis] = slope;
                Some((v0 + slope * (x[axis] - x0), g, vec![0.0; x.len()]))
            }
        }
    }
}

/// Distance to the union of Dirichlet faces of a box domain. Purely
/// spatial; zero exactly on the Dirichlet boundary.
#[derive(Clone, Debug)]
pub struct BoundaryDistance {
    pub bounds: Vec<(f64, f64)>,
    pub faces: Vec<Face>,
}

impl BoundaryDistance {
    /// d(x), its spatial gradient and pure second derivatives. The
    /// distance is piecewise linear, so the second derivatives vanish;
    /// at ties between faces the first face in declaration order wins.
    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut best = f64::INFINITY;
        let mut grad = vec![0.0; x.len()];
        for f in &self.faces {
            let (d, g) = if f.hi {
                (self.bounds[f.axis].1 - x[f.axis], -1.0)
            } else {
                (x[f.axis] - self.bounds[f.axis].0, 1.0)
            };
            if d < best {
                best = d;
                grad.iter_mut().for_each(|v| *v = 0.0);
                grad[f.axis] = g;
            }
        }
        (best, grad)
    }
}

/// Hard Dirichlet wrapper: output = v_bc * (1 - H_eps) + raw * H_eps,
/// where H_eps ramps smoothly from 0 on the boundary to 1 at distance
/// eps and is identically 1 beyond.
#[derive(Clone, Debug)]
pub struct HardBcWrapper {
    pub eps: f64,
    pub distance: BoundaryDistance,
    pub values: Vec<BcValue>,
}

/// Regularized Heaviside ramp: 0 at d=0, 1 at d>=eps, C^1 across d=eps.
pub fn heaviside_ramp(d: f64, eps: f64) -> f64 {
    if d >= eps {
        1.0
    } else {
        0.5 * (1.0 - (d * std::f64::consts::PI / eps).cos())
    }
}

fn heaviside_ramp_derivs(d: f64, eps: f64) -> (f64, f64, f64) {
    if d >= eps {
        (1.0, 0.0, 0.0)
    } else {
        let k = std::f64::consts::PI / eps;
        let u = d * k;
        (0.5 * (1.0 - u.cos()), 0.5 * k * u.sin(), 0.5 * k * k * u.cos())
    }
}

/// Per-point data the wrapper needs: the ramp value with its spatial
/// derivatives (chained through the distance function) and the
/// prescribed value with its derivatives, per constrained output.
#[derive(Clone, Debug)]
pub struct BcPointData {
    pub h: f64,
    pub h_grad: Vec<f64>,
    pub h_hess: Vec<f64>,
    /// Per output: None when unconstrained.
    pub values: Vec<Option<(f64, Vec<f64>, Vec<f64>)>>,
}

impl HardBcWrapper {
    pub fn at(&self, x: &[f64]) -> BcPointData {
        let (d, d_grad) = self.distance.eval(x);
        let (h, h1, h2) = heaviside_ramp_derivs(d, self.eps);
        let h_grad: Vec<f64> = d_grad.iter().map(|g| h1 * g).collect();
        // d is piecewise linear: d_ii = 0, so H_ii = H''(d) * d_i^2.
        let h_hess: Vec<f64> = d_grad.iter().map(|g| h2 * g * g).collect();
        let values = self.values.iter().map(|v| v.eval(x)).collect();
        BcPointData { h, h_grad, h_hess, values }
    }
}

/// Constrained outputs: v_bc*(1-H) + raw*H; unconstrained pass through.
pub fn apply_hard_bc(raw: &[f64], wrapper: &HardBcWrapper, x: &[f64]) -> Vec<f64> {
    let data = wrapper.at(x);
    raw.iter()
        .enumerate()
        .map(|(i, &r)| match data.values.get(i).and_then(|v| v.as_ref()) {
            Some((vb, _, _)) => vb * (1.0 - data.h) + r * data.h,
            None => r,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_reproducible_and_shaped() {
        let a = NetworkParams::init(&[2, 16, 16, 1], 42).unwrap();
        let b = NetworkParams::init(&[2, 16, 16, 1], 42).unwrap();
        assert_eq!(a, b);
        let c = NetworkParams::init(&[2, 16, 16, 1], 43).unwrap();
        assert_ne!(a, c);
        // chained spans: 2*16+16 + 16*16+16 + 16*1+1
        assert_eq!(a.len(), 48 + 272 + 17);
        assert!(a.flat().iter().all(|v| v.is_finite()));
        // Glorot bound for the first layer
        let lim = (6.0 / 18.0f64).sqrt();
        assert!(a.flat()[..32].iter().all(|w| w.abs() < lim));
        // biases zero
        assert!(a.flat()[32..48].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_builds_the_benchmark_architectures() {
        // 5 hidden layers x 200 neurons (solidification network)
        let p = NetworkParams::init(&[1, 200, 200, 200, 200, 200, 1], 0).unwrap();
        assert_eq!(p.layer_sizes(), &[1, 200, 200, 200, 200, 200, 1]);
        // 5 hidden layers x 250 neurons, 4 inputs, 5 outputs
        let p = NetworkParams::init(&[4, 250, 250, 250, 250, 250, 5], 0).unwrap();
        assert_eq!(p.n_inputs(), 4);
        assert_eq!(p.n_outputs(), 5);
    }

    #[test]
    fn invalid_sizes_rejected() {
        assert!(NetworkParams::init(&[3], 0).is_err());
        assert!(NetworkParams::init(&[], 0).is_err());
        assert!(NetworkParams::init(&[2, 0, 1], 0).is_err());
    }

    #[test]
    fn swish_reference_values() {
        assert_eq!(swish(0.0), 0.0);
        assert!((swish(10.0) - 9.999546021312976).abs() < 1e-12);
        assert!((swish(-10.0) - (-4.5397868702434395e-4)).abs() < 1e-12);
        // no overflow at extreme inputs
        assert!(swish(1e4).is_finite());
        assert!(swish(-1e4).abs() < 1e-300 || swish(-1e4) == 0.0);
    }

    #[test]
    fn forward_zero_params_is_zero() {
        let p = NetworkParams::from_flat(vec![2, 3, 2], vec![0.0; 2 * 3 + 3 + 3 * 2 + 2]).unwrap();
        let y = forward(&p, &[0.3, -0.7]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_single_affine_layer() {
        // W = [[2]], b = [1]: 3 -> 7
        let p = NetworkParams::from_flat(vec![1, 1], vec![2.0, 1.0]).unwrap();
        assert_eq!(forward(&p, &[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn forward_matches_hand_rolled_two_layer() {
        // Independent re-implementation with explicit matrix arithmetic.
        let sizes = vec![2usize, 4, 3];
        let p = NetworkParams::init(&sizes, 7).unwrap();
        let x = [0.37, -1.2];
        let d = p.flat();
        // layer 0: W (4x2) at 0..8, b at 8..12
        let mut h = [0.0f64; 4];
        for r in 0..4 {
            let pre = d[2 * r] * x[0] + d[2 * r + 1] * x[1] + d[8 + r];
            h[r] = pre / (1.0 + (-pre).exp());
        }
        // layer 1: W (3x4) at 12..24, b at 24..27
        let mut y = [0.0f64; 3];
        for r in 0..3 {
            let mut acc = d[24 + r];
            for j in 0..4 {
                acc += d[12 + 4 * r + j] * h[j];
            }
            y[r] = acc;
        }
        let got = forward(&p, &x).unwrap();
        for r in 0..3 {
            assert!((got[r] - y[r]).abs() < 1e-14, "output {r}: {} vs {}", got[r], y[r]);
        }
    }

    #[test]
    fn forward_dimension_mismatch_errors() {
        let p = NetworkParams::init(&[2, 3, 1], 0).unwrap();
        assert!(matches!(
            forward(&p, &[1.0]),
            Err(NetworkError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    fn interval_wrapper(eps: f64) -> HardBcWrapper {
        HardBcWrapper {
            eps,
            distance: BoundaryDistance {
                bounds: vec![(-0.4, 0.4)],
                faces: vec![Face { axis: 0, hi: false }, Face { axis: 0, hi: true }],
            },
            values: vec![BcValue::AxisRamp { axis: 0, x0: -0.4, x1: 0.4, v0: 298.15, v1: 973.15 }],
        }
    }

    #[test]
    fn hard_bc_exact_on_boundary_and_beyond_ramp() {
        let w = interval_wrapper(0.016);
        // on boundary: exactly the prescribed value regardless of raw
        let out = apply_hard_bc(&[123456.789], &w, &[-0.4]);
        assert_eq!(out[0], 298.15);
        let out = apply_hard_bc(&[-1.0], &w, &[0.4]);
        assert_eq!(out[0], 973.15);
        // d >= eps: exactly the raw value
        let out = apply_hard_bc(&[555.5], &w, &[0.0]);
        assert_eq!(out[0], 555.5);
    }

    #[test]
    fn hard_bc_midramp_value() {
        // d = eps/2, v_bc = 0, raw = 2 -> H = 1/2 -> output 1.0
        let w = HardBcWrapper {
            eps: 0.2,
            distance: BoundaryDistance {
                bounds: vec![(0.0, 10.0)],
                faces: vec![Face { axis: 0, hi: false }],
            },
            values: vec![BcValue::Constant(0.0)],
        };
        let out = apply_hard_bc(&[2.0], &w, &[0.1]);
        assert!((out[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn heaviside_ramp_is_c1_at_eps() {
        let eps = 0.3;
        let h = 1e-6;
        // value continuity
        let inside = heaviside_ramp(eps - 1e-12, eps);
        assert!((inside - 1.0).abs() < 1e-12);
        // slope continuity: slope just inside eps tends to 0
        let s_in = (heaviside_ramp(eps - h, eps) - heaviside_ramp(eps - 2.0 * h, eps)) / h;
        assert!(s_in.abs() < 1e-4, "slope inside = {s_in}");
    }

    #[test]
    fn unconstrained_components_pass_through() {
        let w = HardBcWrapper {
            eps: 0.1,
            distance: BoundaryDistance {
                bounds: vec![(0.0, 1.0)],
                faces: vec![Face { axis: 0, hi: false }],
            },
            values: vec![BcValue::Constant(5.0), BcValue::Unconstrained],
        };
        let out = apply_hard_bc(&[9.0, 3.25], &w, &[0.0]);
        assert_eq!(out, vec![5.0, 3.25]);
    }

    #[test]
    fn describe_slot_names_layer_and_kind() {
        let p = NetworkParams::init(&[2, 3, 1], 0).unwrap();
        assert_eq!(p.describe_slot(0), "layer 0 weight [0][0]");
        assert_eq!(p.describe_slot(6), "layer 0 bias [0]");
        assert_eq!(p.describe_slot(9), "layer 1 weight [0][0]");
        assert_eq!(p.describe_slot(12), "layer 1 bias [0]");
    }
}
