//! Tape evaluation of the network with forward-propagated input
//! derivatives.
//!
//! Each layer's activations are laid out as contiguous blocks of tape
//! variables per derivative component (value, one gradient block per
//! input axis, one pure-second-derivative block per requested axis), so
//! the matrix-vector work becomes fused `dot`/`affine` range nodes over
//! contiguous runs. Parameter gradients of anything built on top —
//! including PDE residuals that consume the derivative components — come
//! from the tape's reverse sweep, which differentiates through the whole
//! propagation.

use crate::autodiff::{DualValue, Tape, Var};

use super::{apply_hard_bc, forward, HardBcWrapper, NetworkError, NetworkParams};

/// Affine map of physical inputs onto the network's [-1, 1] box.
#[derive(Clone, Debug)]
pub struct InputNormalizer {
    pub t: (f64, f64),
    pub x: Vec<(f64, f64)>,
}

impl InputNormalizer {
    /// No-op normalizer for `dim` raw inputs (first one playing the time
    /// slot).
    pub fn identity(space_dim: usize) -> Self {
        Self { t: (-1.0, 1.0), x: vec![(-1.0, 1.0); space_dim] }
    }

    pub fn n_inputs(&self) -> usize {
        1 + self.x.len()
    }

    fn center_half(lo: f64, hi: f64) -> (f64, f64) {
        (0.5 * (lo + hi), 0.5 * (hi - lo))
    }

    pub fn normalize(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_inputs());
        let (c, h) = Self::center_half(self.t.0, self.t.1);
        out.push((t - c) / h);
        for (i, &(lo, hi)) in self.x.iter().enumerate() {
            let (c, h) = Self::center_half(lo, hi);
            out.push((x[i] - c) / h);
        }
        out
    }

    /// d(normalized_i)/d(physical_i) per input axis.
    pub fn seeds(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.n_inputs());
        s.push(1.0 / Self::center_half(self.t.0, self.t.1).1);
        for &(lo, hi) in &self.x {
            s.push(1.0 / Self::center_half(lo, hi).1);
        }
        s
    }
}

/// Affine map from raw network outputs to physical fields:
/// physical = offset + scale * raw.
#[derive(Clone, Debug)]
pub struct OutputScaler {
    pub per_output: Vec<(f64, f64)>,
}

impl OutputScaler {
    pub fn identity(n: usize) -> Self {
        Self { per_output: vec![(0.0, 1.0); n] }
    }
}

/// One output's tape variables: value, first derivatives per input axis
/// (time first), and pure second derivatives for the requested axes.
#[derive(Clone, Debug)]
pub struct OutputDual {
    pub val: Var,
    pub grad: Vec<Var>,
    pub hess: Vec<Var>,
}

struct Blk {
    n: usize,
    val: Var,
    grad: Vec<Var>,
    hess: Vec<Var>,
}

#[inline]
fn emit_block(tape: &mut Tape, n: usize, mut f: impl FnMut(&mut Tape, usize) -> Var) -> Var {
    let mut start = 0;
    for r in 0..n {
        let v = f(tape, r);
        if r == 0 {
            start = v;
        }
    }
    start
}

/// Propagate dual blocks through the network. The tape must already hold
/// the flat parameter vector as its registered slots.
pub(crate) fn eval_network_dual(
    tape: &mut Tape,
    params: &NetworkParams,
    normalized_input: &[f64],
    grad_seeds: &[f64],
    hess_axes: &[usize],
) -> Result<Vec<OutputDual>, NetworkError> {
    let dim = params.n_inputs();
    if normalized_input.len() != dim {
        return Err(NetworkError::DimensionMismatch { expected: dim, got: normalized_input.len() });
    }
    if grad_seeds.len() != dim {
        return Err(NetworkError::DimensionMismatch { expected: dim, got: grad_seeds.len() });
    }
    if tape.n_params() != params.len() {
        return Err(NetworkError::DimensionMismatch { expected: params.len(), got: tape.n_params() });
    }

    // Input blocks: values, unit-seeded gradients, zero second derivatives.
    let val = emit_block(tape, dim, |t, i| t.constant(normalized_input[i]));
    let grad: Vec<Var> = (0..dim)
        .map(|j| emit_block(tape, dim, |t, i| t.constant(if i == j { grad_seeds[j] } else { 0.0 })))
        .collect();
    let hess: Vec<Var> = hess_axes.iter().map(|_| emit_block(tape, dim, |t, _| t.constant(0.0))).collect();
    let mut blk = Blk { n: dim, val, grad, hess };

    let spans = params.spans();
    for (l, s) in spans.iter().enumerate() {
        let last = l + 1 == spans.len();
        let wrow = |r: usize| (s.w + r * s.n_in) as Var;
        let pre_val = emit_block(tape, s.n_out, |t, r| t.affine(wrow(r), blk.val, s.n_in, (s.b + r) as Var));
        let pre_grad: Vec<Var> = blk
            .grad
            .iter()
            .map(|&g| emit_block(tape, s.n_out, |t, r| t.dot(wrow(r), g, s.n_in)))
            .collect();
        let pre_hess: Vec<Var> = blk
            .hess
            .iter()
            .map(|&h| emit_block(tape, s.n_out, |t, r| t.dot(wrow(r), h, s.n_in)))
            .collect();

        blk = if last {
            Blk { n: s.n_out, val: pre_val, grad: pre_grad, hess: pre_hess }
        } else {
            let f0 = emit_block(tape, s.n_out, |t, r| t.swish(pre_val + r as Var));
            let f1 = emit_block(tape, s.n_out, |t, r| t.swish_d1(pre_val + r as Var));
            let f2 = if pre_hess.is_empty() {
                0
            } else {
                emit_block(tape, s.n_out, |t, r| t.swish_d2(pre_val + r as Var))
            };
            let out_grad: Vec<Var> = pre_grad
                .iter()
                .map(|&g| emit_block(tape, s.n_out, |t, r| t.mul(f1 + r as Var, g + r as Var)))
                .collect();
            // chain rule for pure seconds: f''(z) g_a^2 + f'(z) h_a
            let out_hess: Vec<Var> = hess_axes
                .iter()
                .zip(pre_hess.iter())
                .map(|(&axis, &h)| {
                    let g = pre_grad[axis];
                    let gsq = emit_block(tape, s.n_out, |t, r| t.mul(g + r as Var, g + r as Var));
                    let t2 = emit_block(tape, s.n_out, |t, r| t.mul(f2 + r as Var, gsq + r as Var));
                    emit_block(tape, s.n_out, |t, r| t.fma(f1 + r as Var, h + r as Var, t2 + r as Var))
                })
                .collect();
            Blk { n: s.n_out, val: f0, grad: out_grad, hess: out_hess }
        };
    }

    Ok((0..blk.n)
        .map(|r| OutputDual {
            val: blk.val + r as Var,
            grad: blk.grad.iter().map(|&g| g + r as Var).collect(),
            hess: blk.hess.iter().map(|&h| h + r as Var).collect(),
        })
        .collect())
}

/// Value-only pass on the tape (no derivative blocks): used for points
/// where the loss needs just the outputs.
pub(crate) fn eval_network_values(
    tape: &mut Tape,
    params: &NetworkParams,
    normalized_input: &[f64],
) -> Result<Vec<Var>, NetworkError> {
    let dim = params.n_inputs();
    if normalized_input.len() != dim {
        return Err(NetworkError::DimensionMismatch { expected: dim, got: normalized_input.len() });
    }
    if tape.n_params() != params.len() {
        return Err(NetworkError::DimensionMismatch { expected: params.len(), got: tape.n_params() });
    }
    let mut val = emit_block(tape, dim, |t, i| t.constant(normalized_input[i]));
    let spans = params.spans();
    for (l, s) in spans.iter().enumerate() {
        let last = l + 1 == spans.len();
        let wrow = |r: usize| (s.w + r * s.n_in) as Var;
        let pre = emit_block(tape, s.n_out, |t, r| t.affine(wrow(r), val, s.n_in, (s.b + r) as Var));
        val = if last { pre } else { emit_block(tape, s.n_out, |t, r| t.swish(pre + r as Var)) };
    }
    Ok((0..params.n_outputs()).map(|r| val + r as Var).collect())
}

/// Value, all first derivatives, and all pure second derivatives of each
/// output with respect to each input coordinate. Exact for the composed
/// network function.
pub fn forward_with_input_derivs(params: &NetworkParams, x: &[f64]) -> Result<Vec<DualValue>, NetworkError> {
    let dim = params.n_inputs();
    if x.len() != dim {
        return Err(NetworkError::DimensionMismatch { expected: dim, got: x.len() });
    }
    let mut tape = Tape::new();
    tape.register_params(params.flat())?;
    let seeds = vec![1.0; dim];
    let hess_axes: Vec<usize> = (0..dim).collect();
    let outs = eval_network_dual(&mut tape, params, x, &seeds, &hess_axes)?;
    Ok(outs
        .into_iter()
        .map(|o| DualValue {
            value: tape.value(o.val),
            input_grad: o.grad.iter().map(|&g| tape.value(g)).collect(),
            input_hess_diag: o.hess.iter().map(|&h| tape.value(h)).collect(),
        })
        .collect())
}

/// Gradient of a tape-recorded scalar with respect to the network
/// parameters, in the parameters' flat layout.
pub fn grad_wrt_params(tape: &Tape, loss: Var, params: &NetworkParams) -> Result<Vec<f64>, NetworkError> {
    if tape.n_params() != params.len() {
        return Err(NetworkError::DimensionMismatch { expected: params.len(), got: tape.n_params() });
    }
    Ok(tape.grad(loss)?)
}

/// A network together with its input/output scaling and the optional
/// hard Dirichlet wrapper. This is the object the loss evaluates.
#[derive(Clone, Debug)]
pub struct PinnModel {
    pub params: NetworkParams,
    pub norm: InputNormalizer,
    pub out_scale: OutputScaler,
    pub bc: Option<HardBcWrapper>,
}

impl PinnModel {
    pub fn n_outputs(&self) -> usize {
        self.params.n_outputs()
    }

    pub fn space_dim(&self) -> usize {
        self.norm.x.len()
    }

    /// Physical outputs at (t, x): normalized forward pass, output
    /// de-scaling, then the hard-BC wrapper when present.
    pub fn predict(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        let zin = self.norm.normalize(t, x);
        let raw = forward(&self.params, &zin)?;
        let phys: Vec<f64> =
            raw.iter().zip(&self.out_scale.per_output).map(|(&r, &(off, sc))| off + sc * r).collect();
        Ok(match &self.bc {
            Some(w) => apply_hard_bc(&phys, w, x),
            None => phys,
        })
    }

    /// Record the full evaluation pipeline on a tape: dual blocks through
    /// the network, output de-scaling, and the wrapper with its spatial
    /// chain-rule terms. Gradients are carried for every input axis; pure
    /// seconds for the spatial axes (plus time when `with_time_hess`).
    ///
    /// Returned `hess` slots follow the axis order produced by
    /// `hess_axes(with_time_hess)`.
    pub fn eval_on_tape(
        &self,
        tape: &mut Tape,
        t: f64,
        x: &[f64],
        with_time_hess: bool,
    ) -> Result<Vec<OutputDual>, NetworkError> {
        let dim = self.norm.n_inputs();
        if x.len() != self.space_dim() {
            return Err(NetworkError::DimensionMismatch { expected: self.space_dim(), got: x.len() });
        }
        let zin = self.norm.normalize(t, x);
        let seeds = self.norm.seeds();
        let axes = self.hess_axes(with_time_hess);
        let raw = eval_network_dual(tape, &self.params, &zin, &seeds, &axes)?;

        let bcd = self.bc.as_ref().map(|w| w.at(x));
        let mut out = Vec::with_capacity(raw.len());
        for (o, od) in raw.iter().enumerate() {
            let (off, sc) = self.out_scale.per_output[o];
            let val = tape.lin1(od.val, sc, off);
            let grad: Vec<Var> = od.grad.iter().map(|&g| tape.mul_const(g, sc)).collect();
            let hess: Vec<Var> = od.hess.iter().map(|&h| tape.mul_const(h, sc)).collect();

            let constrained = bcd.as_ref().and_then(|d| d.values[o].as_ref());
            if let (Some(d), Some((vb, vb_g, vb_h))) = (&bcd, constrained) {
                // wrapped = v_bc(x) (1-H) + T H, differentiated in space;
                // H and v_bc are time-independent.
                let one_m_h = 1.0 - d.h;
                let w_val = tape.lin1(val, d.h, vb * one_m_h);
                let w_grad: Vec<Var> = (0..dim)
                    .map(|j| {
                        if j == 0 {
                            tape.mul_const(grad[0], d.h)
                        } else {
                            let a = j - 1;
                            let c0 = vb_g[a] * one_m_h - vb * d.h_grad[a];
                            tape.lin2(grad[j], d.h, val, d.h_grad[a], c0)
                        }
                    })
                    .collect();
                let w_hess: Vec<Var> = axes
                    .iter()
                    .zip(hess.iter())
                    .map(|(&axis, &hh)| {
                        if axis == 0 {
                            tape.mul_const(hh, d.h)
                        } else {
                            let a = axis - 1;
                            let c0 = vb_h[a] * one_m_h - 2.0 * vb_g[a] * d.h_grad[a] - vb * d.h_hess[a];
                            tape.lin3(hh, d.h, grad[axis], 2.0 * d.h_grad[a], val, d.h_hess[a], c0)
                        }
                    })
                    .collect();
                out.push(OutputDual { val: w_val, grad: w_grad, hess: w_hess });
            } else {
                out.push(OutputDual { val, grad, hess });
            }
        }
        Ok(out)
    }

    /// Physical output values as tape variables (value-only pipeline:
    /// forward pass, de-scaling, wrapper).
    pub fn eval_values_on_tape(&self, tape: &mut Tape, t: f64, x: &[f64]) -> Result<Vec<Var>, NetworkError> {
        if x.len() != self.space_dim() {
            return Err(NetworkError::DimensionMismatch { expected: self.space_dim(), got: x.len() });
        }
        let zin = self.norm.normalize(t, x);
        let raw = eval_network_values(tape, &self.params, &zin)?;
        let bcd = self.bc.as_ref().map(|w| w.at(x));
        Ok(raw
            .iter()
            .enumerate()
            .map(|(o, &rv)| {
                let (off, sc) = self.out_scale.per_output[o];
                let val = tape.lin1(rv, sc, off);
                match bcd.as_ref().and_then(|d| d.values[o].as_ref().map(|v| (d.h, v.0))) {
                    Some((h, vb)) => tape.lin1(val, h, vb * (1.0 - h)),
                    None => val,
                }
            })
            .collect())
    }

    /// Input axes carrying pure second derivatives, in slot order.
    pub fn hess_axes(&self, with_time_hess: bool) -> Vec<usize> {
        let dim = self.norm.n_inputs();
        if with_time_hess {
            (0..dim).collect()
        } else {
            (1..dim).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_diff_check, finite_diff_check_hess, F1};
    use crate::network::{forward_generic, BcValue, BoundaryDistance, Face};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_net_has_constant_derivative() {
        // f(x) = 3x: f' = 3, f'' = 0 everywhere
        let p = NetworkParams::from_flat(vec![1, 1], vec![3.0, 0.0]).unwrap();
        for &x in &[-2.0, 0.0, 0.37, 5.0] {
            let d = &forward_with_input_derivs(&p, &[x]).unwrap()[0];
            assert!((d.value - 3.0 * x).abs() < 1e-15);
            assert!((d.input_grad[0] - 3.0).abs() < 1e-15);
            assert_eq!(d.input_hess_diag[0], 0.0);
        }
    }

    #[test]
    fn swish_node_derivatives_at_zero() {
        // identity weights through one hidden neuron: f = swish(x)
        let p = NetworkParams::from_flat(vec![1, 1, 1], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let d = &forward_with_input_derivs(&p, &[0.0]).unwrap()[0];
        assert_eq!(d.value, 0.0);
        assert!((d.input_grad[0] - 0.5).abs() < 1e-15);
        assert!((d.input_hess_diag[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn random_net_matches_finite_differences() {
        let p = NetworkParams::init(&[2, 16, 16, 1], 3).unwrap();
        let x = [0.21, -0.55];
        let d = &forward_with_input_derivs(&p, &x).unwrap()[0];
        let f = |q: &[f64]| forward(&p, q).unwrap()[0];
        let e1 = finite_diff_check(f, &d.input_grad, &x, 1e-4).unwrap();
        assert!(e1 < 1e-6, "first-derivative error {e1}");
        let e2 = finite_diff_check_hess(f, &d.input_hess_diag, &x, 1e-4).unwrap();
        assert!(e2 < 1e-4, "second-derivative error {e2}");
    }

    #[test]
    fn nested_forward_mode_agrees_with_tape_seconds() {
        // Independent oracle: nested first-order duals through the plain
        // generic forward pass.
        let p = NetworkParams::init(&[2, 12, 12, 2], 11).unwrap();
        let x = [0.4, -0.9];
        let duals = forward_with_input_derivs(&p, &x).unwrap();
        for axis in 0..2 {
            let input: Vec<F1<F1<f64, 2>, 2>> =
                (0..2).map(|i| F1::variable2(x[i], i)).collect();
            let outs = forward_generic(&p, &input).unwrap();
            for (o, d) in duals.iter().enumerate() {
                let ref_first = outs[o].d[axis].v;
                let ref_second = outs[o].d[axis].d[axis];
                let rel1 = (d.input_grad[axis] - ref_first).abs() / ref_first.abs().max(1e-12);
                let rel2 = (d.input_hess_diag[axis] - ref_second).abs() / ref_second.abs().max(1e-12);
                assert!(rel1 < 1e-10, "first deriv, output {o} axis {axis}: {rel1}");
                assert!(rel2 < 1e-10, "second deriv, output {o} axis {axis}: {rel2}");
            }
        }
    }

    #[test]
    fn derivatives_are_bitwise_deterministic() {
        let p = NetworkParams::init(&[2, 8, 1], 5).unwrap();
        let run = || {
            let d = &forward_with_input_derivs(&p, &[0.1, 0.9]).unwrap()[0];
            (d.value.to_bits(), d.input_grad[0].to_bits(), d.input_hess_diag[1].to_bits())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn parameter_gradient_through_input_derivatives() {
        // loss = (df/dx)^2 at a point: gradient w.r.t. params must
        // differentiate through the forward derivative propagation.
        let p = NetworkParams::init(&[1, 6, 1], 9).unwrap();
        let x = [0.3];
        let loss_of = |params: &NetworkParams| {
            let d = &forward_with_input_derivs(params, &x).unwrap()[0];
            d.input_grad[0] * d.input_grad[0]
        };
        let mut tape = Tape::new();
        tape.register_params(p.flat()).unwrap();
        let outs = eval_network_dual(&mut tape, &p, &x, &[1.0], &[0]).unwrap();
        let g = outs[0].grad[0];
        let loss = tape.mul(g, g);
        let grads = grad_wrt_params(&tape, loss, &p).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..8 {
            let slot = rng.gen_range(0..p.len());
            let h = 1e-6;
            let mut pp = p.clone();
            pp.flat_mut()[slot] += h;
            let lp = loss_of(&pp);
            pp.flat_mut()[slot] -= 2.0 * h;
            let lm = loss_of(&pp);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grads[slot] - fd).abs() / grads[slot].abs().max(1e-10);
            assert!(rel < 1e-5, "slot {slot}: ad={} fd={fd} rel={rel}", grads[slot]);
        }
    }

    #[test]
    fn zero_network_bias_gradient_of_msd_is_zero() {
        // All-zero net: output == 0 == label; d(loss)/d(output bias) = 0.
        let p = NetworkParams::from_flat(vec![1, 2, 1], vec![0.0; 2 + 2 + 2 + 1]).unwrap();
        let mut tape = Tape::new();
        tape.register_params(p.flat()).unwrap();
        let outs = eval_network_dual(&mut tape, &p, &[0.5], &[1.0], &[]).unwrap();
        let label = tape.constant(0.0);
        let diff = tape.sub(outs[0].val, label);
        let loss = tape.mul(diff, diff);
        let g = grad_wrt_params(&tape, loss, &p).unwrap();
        let bias_out = p.len() - 1;
        assert_eq!(g[bias_out], 0.0);
    }

    fn stefan_like_model(bc: bool) -> PinnModel {
        let params = NetworkParams::init(&[2, 10, 10, 1], 21).unwrap();
        PinnModel {
            params,
            norm: InputNormalizer { t: (5.0, 10.0), x: vec![(-0.4, 0.4)] },
            out_scale: OutputScaler { per_output: vec![(298.15, 675.0)] },
            bc: bc.then(|| HardBcWrapper {
                eps: 0.016,
                distance: BoundaryDistance {
                    bounds: vec![(-0.4, 0.4)],
                    faces: vec![Face { axis: 0, hi: false }, Face { axis: 0, hi: true }],
                },
                values: vec![BcValue::AxisRamp { axis: 0, x0: -0.4, x1: 0.4, v0: 298.15, v1: 973.15 }],
            }),
        }
    }

    #[test]
    fn predict_and_tape_values_agree() {
        for bc in [false, true] {
            let m = stefan_like_model(bc);
            for &(t, x) in &[(5.0, -0.4), (7.0, -0.395), (6.0, 0.1), (10.0, 0.4)] {
                let v = m.predict(t, &[x]).unwrap()[0];
                let mut tape = Tape::new();
                tape.register_params(m.params.flat()).unwrap();
                let o = m.eval_on_tape(&mut tape, t, &[x], false).unwrap();
                let tv = tape.value(o[0].val);
                assert!((v - tv).abs() <= 1e-12 * v.abs().max(1.0), "bc={bc} t={t} x={x}: {v} vs {tv}");
            }
        }
    }

    #[test]
    fn wrapped_boundary_values_are_exact() {
        let m = stefan_like_model(true);
        for &t in &[5.0, 7.5, 10.0] {
            assert_eq!(m.predict(t, &[-0.4]).unwrap()[0], 298.15);
            assert_eq!(m.predict(t, &[0.4]).unwrap()[0], 973.15);
        }
    }

    #[test]
    fn wrapped_derivatives_match_finite_differences_inside_ramp() {
        // Probe a point inside the ramp region where all wrapper chain
        // terms are active.
        let m = stefan_like_model(true);
        let (t0, x0) = (6.3, -0.392);
        let mut tape = Tape::new();
        tape.register_params(m.params.flat()).unwrap();
        let o = &m.eval_on_tape(&mut tape, t0, &[x0], true).unwrap()[0];
        let grad = [tape.value(o.grad[0]), tape.value(o.grad[1])];
        let hess = [tape.value(o.hess[0]), tape.value(o.hess[1])];
        let f = |p: &[f64]| m.predict(p[0], &[p[1]]).unwrap()[0];
        let e1 = finite_diff_check(f, &grad, &[t0, x0], 1e-5).unwrap();
        assert!(e1 < 1e-5, "wrapped gradient error {e1}");
        let e2 = finite_diff_check_hess(f, &hess, &[t0, x0], 2e-4).unwrap();
        assert!(e2 < 1e-3, "wrapped second-derivative error {e2}");
    }
}
