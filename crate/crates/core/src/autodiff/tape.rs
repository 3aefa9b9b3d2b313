//! Wengert tape: an ordered record of scalar primitives.
//!
//! Recording computes the forward value immediately; `replay` re-executes
//! the same primitive sequence through the same code path, so the recorded
//! values are reproduced bit-for-bit. The reverse sweep visits nodes in
//! reverse topological (= recording) order exactly once, which fixes the
//! accumulation order and makes gradients deterministic.

use super::AutodiffError;

/// Index of a recorded value on the tape.
pub type Var = u32;

/// Registered parameter slots. Parameters always occupy vars `0..len`.
#[derive(Clone, Copy, Debug)]
pub struct ParamSlots {
    len: usize,
}

impl ParamSlots {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn var(&self, slot: usize) -> Result<Var, AutodiffError> {
        if slot < self.len {
            Ok(slot as Var)
        } else {
            Err(AutodiffError::UnregisteredParam { slot })
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Param,
    Const { c: u32 },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Div { a: Var, b: Var },
    Neg { a: Var },
    Recip { a: Var },
    Exp { a: Var },
    /// a*b + c
    Fma { a: Var, b: Var, add: Var },
    Swish { a: Var },
    SwishD1 { a: Var },
    SwishD2 { a: Var },
    /// Dot product of two contiguous runs: sum_k vals[w+k]*vals[x+k].
    Dot { w: Var, x: Var, len: u32 },
    /// Dot plus a bias term.
    Affine { w: Var, x: Var, len: u32, bias: Var },
    /// consts[c]*a + consts[c+1]
    Lin1 { a: Var, c: u32 },
    /// consts[c]*a + consts[c+1]*b + consts[c+2]
    Lin2 { a: Var, b: Var, c: u32 },
    /// consts[c]*a + consts[c+1]*b + consts[c+2]*d + consts[c+3]
    Lin3 { a: Var, b: Var, d: Var, c: u32 },
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    // Both branches keep the exponent non-positive: no overflow for any x.
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// swish(x) = x*sigmoid(x) and its first three derivatives.
#[inline]
pub fn swish_derivs(x: f64) -> (f64, f64, f64, f64) {
    let s = sigmoid(x);
    let s1 = s * (1.0 - s);
    let s2 = s1 * (1.0 - 2.0 * s);
    let s3 = s2 * (1.0 - 2.0 * s) - 2.0 * s1 * s1;
    (x * s, s + x * s1, 2.0 * s1 + x * s2, 3.0 * s2 + x * s3)
}

/// Dot of two equal-length slices with a fixed 4-way accumulation order.
///
/// The association is part of the tape's deterministic contract: record,
/// replay and the reverse sweep all use this exact routine.
#[inline]
fn fixed_dot(w: &[f64], x: &[f64]) -> f64 {
    let n = w.len();
    let mut acc0 = 0.0;
    let mut acc1 = 0.0;
    let mut acc2 = 0.0;
    let mut acc3 = 0.0;
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc0 += w[i] * x[i];
        acc1 += w[i + 1] * x[i + 1];
        acc2 += w[i + 2] * x[i + 2];
        acc3 += w[i + 3] * x[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += w[i] * x[i];
    }
    ((acc0 + acc1) + (acc2 + acc3)) + tail
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<f64>,
    consts: Vec<f64>,
    n_params: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            ops: Vec::with_capacity(nodes),
            vals: Vec::with_capacity(nodes),
            consts: Vec::with_capacity(nodes / 4),
            n_params: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn value(&self, v: Var) -> f64 {
        self.vals[v as usize]
    }

    /// Register the parameter vector. Must be the first thing recorded:
    /// parameter slots are the tape prefix so gradient extraction is a
    /// plain slice copy.
    pub fn register_params(&mut self, values: &[f64]) -> Result<ParamSlots, AutodiffError> {
        if !self.ops.is_empty() {
            return Err(AutodiffError::ParamsNotFirst);
        }
        self.ops.resize(values.len(), Op::Param);
        self.vals.extend_from_slice(values);
        self.n_params = values.len();
        Ok(ParamSlots { len: values.len() })
    }

    fn push(&mut self, op: Op) -> Var {
        let v = self.eval_op(op);
        self.ops.push(op);
        self.vals.push(v);
        (self.vals.len() - 1) as Var
    }

    fn push_const_data(&mut self, data: &[f64]) -> u32 {
        let at = self.consts.len() as u32;
        self.consts.extend_from_slice(data);
        at
    }

    /// Forward evaluation of one primitive. Shared between recording and
    /// replay so replayed values are bit-identical.
    fn eval_op(&self, op: Op) -> f64 {
        let v = &self.vals;
        match op {
            Op::Param => unreachable!("params are seeded, not evaluated"),
            Op::Const { c } => self.consts[c as usize],
            Op::Add { a, b } => v[a as usize] + v[b as usize],
            Op::Sub { a, b } => v[a as usize] - v[b as usize],
            Op::Mul { a, b } => v[a as usize] * v[b as usize],
            Op::Div { a, b } => v[a as usize] / v[b as usize],
            Op::Neg { a } => -v[a as usize],
            Op::Recip { a } => 1.0 / v[a as usize],
            Op::Exp { a } => v[a as usize].exp(),
            Op::Fma { a, b, add } => v[a as usize] * v[b as usize] + v[add as usize],
            Op::Swish { a } => swish_derivs(v[a as usize]).0,
            Op::SwishD1 { a } => swish_derivs(v[a as usize]).1,
            Op::SwishD2 { a } => swish_derivs(v[a as usize]).2,
            Op::Dot { w, x, len } => {
                let (w, x, n) = (w as usize, x as usize, len as usize);
                fixed_dot(&v[w..w + n], &v[x..x + n])
            }
            Op::Affine { w, x, len, bias } => {
                let (w, x, n) = (w as usize, x as usize, len as usize);
                fixed_dot(&v[w..w + n], &v[x..x + n]) + v[bias as usize]
            }
            Op::Lin1 { a, c } => {
                let c = c as usize;
                self.consts[c] * v[a as usize] + self.consts[c + 1]
            }
            Op::Lin2 { a, b, c } => {
                let c = c as usize;
                self.consts[c] * v[a as usize] + self.consts[c + 1] * v[b as usize] + self.consts[c + 2]
            }
            Op::Lin3 { a, b, d, c } => {
                let c = c as usize;
                self.consts[c] * v[a as usize]
                    + self.consts[c + 1] * v[b as usize]
                    + self.consts[c + 2] * v[d as usize]
                    + self.consts[c + 3]
            }
        }
    }

    pub fn constant(&mut self, value: f64) -> Var {
        let c = self.push_const_data(&[value]);
        self.push(Op::Const { c })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Mul { a, b })
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Div { a, b })
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.push(Op::Neg { a })
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.push(Op::Recip { a })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.push(Op::Exp { a })
    }

    pub fn fma(&mut self, a: Var, b: Var, add: Var) -> Var {
        self.push(Op::Fma { a, b, add })
    }

    pub fn swish(&mut self, a: Var) -> Var {
        self.push(Op::Swish { a })
    }

    pub fn swish_d1(&mut self, a: Var) -> Var {
        self.push(Op::SwishD1 { a })
    }

    pub fn swish_d2(&mut self, a: Var) -> Var {
        self.push(Op::SwishD2 { a })
    }

    /// sum_k vals[w+k]*vals[x+k] over two contiguous runs.
    pub fn dot(&mut self, w: Var, x: Var, len: usize) -> Var {
        self.push(Op::Dot { w, x, len: len as u32 })
    }

    /// Dot plus bias.
    pub fn affine(&mut self, w: Var, x: Var, len: usize, bias: Var) -> Var {
        self.push(Op::Affine { w, x, len: len as u32, bias })
    }

    /// ca*a + c0
    pub fn lin1(&mut self, a: Var, ca: f64, c0: f64) -> Var {
        let c = self.push_const_data(&[ca, c0]);
        self.push(Op::Lin1 { a, c })
    }

    /// ca*a + cb*b + c0
    pub fn lin2(&mut self, a: Var, ca: f64, b: Var, cb: f64, c0: f64) -> Var {
        let c = self.push_const_data(&[ca, cb, c0]);
        self.push(Op::Lin2 { a, b, c })
    }

    /// ca*a + cb*b + cd*d + c0
    pub fn lin3(&mut self, a: Var, ca: f64, b: Var, cb: f64, d: Var, cd: f64, c0: f64) -> Var {
        let c = self.push_const_data(&[ca, cb, cd, c0]);
        self.push(Op::Lin3 { a, b, d, c })
    }

    pub fn add_const(&mut self, a: Var, c0: f64) -> Var {
        self.lin1(a, 1.0, c0)
    }

    pub fn mul_const(&mut self, a: Var, ca: f64) -> Var {
        self.lin1(a, ca, 0.0)
    }

    /// Re-execute every recorded primitive (parameters keep their seeded
    /// values) and return the recomputed value vector.
    pub fn replay(&self) -> Vec<f64> {
        let mut out = Tape {
            ops: Vec::new(),
            vals: Vec::with_capacity(self.vals.len()),
            consts: self.consts.clone(),
            n_params: self.n_params,
        };
        for (i, &op) in self.ops.iter().enumerate() {
            let v = match op {
                Op::Param => self.vals[i],
                _ => out.eval_op(op),
            };
            out.vals.push(v);
        }
        out.vals
    }

    /// Adjoints of every tape variable with respect to `root`, seeded with
    /// d(root)/d(root) = 1. Reverse topological order, each node visited
    /// exactly once.
    pub fn adjoints(&self, root: Var) -> Result<Vec<f64>, AutodiffError> {
        let n = self.vals.len();
        if root as usize >= n {
            return Err(AutodiffError::VarOutOfRange { var: root, len: n });
        }
        let mut adj = vec![0.0; n];
        adj[root as usize] = 1.0;
        let v = &self.vals;
        for i in (0..self.ops.len()).rev() {
            let dz = adj[i];
            if dz == 0.0 {
                continue;
            }
            match self.ops[i] {
                Op::Param | Op::Const { .. } => {}
                Op::Add { a, b } => {
                    adj[a as usize] += dz;
                    adj[b as usize] += dz;
                }
                Op::Sub { a, b } => {
                    adj[a as usize] += dz;
                    adj[b as usize] -= dz;
                }
                Op::Mul { a, b } => {
                    adj[a as usize] += dz * v[b as usize];
                    adj[b as usize] += dz * v[a as usize];
                }
                Op::Div { a, b } => {
                    let vb = v[b as usize];
                    adj[a as usize] += dz / vb;
                    adj[b as usize] -= dz * v[a as usize] / (vb * vb);
                }
                Op::Neg { a } => adj[a as usize] -= dz,
                Op::Recip { a } => {
                    let va = v[a as usize];
                    adj[a as usize] -= dz / (va * va);
                }
                Op::Exp { a } => adj[a as usize] += dz * v[i],
                Op::Fma { a, b, add } => {
                    adj[a as usize] += dz * v[b as usize];
                    adj[b as usize] += dz * v[a as usize];
                    adj[add as usize] += dz;
                }
                Op::Swish { a } => {
                    adj[a as usize] += dz * swish_derivs(v[a as usize]).1;
                }
                Op::SwishD1 { a } => {
                    adj[a as usize] += dz * swish_derivs(v[a as usize]).2;
                }
                Op::SwishD2 { a } => {
                    adj[a as usize] += dz * swish_derivs(v[a as usize]).3;
                }
                Op::Dot { w, x, len } | Op::Affine { w, x, len, .. } => {
                    if let Op::Affine { bias, .. } = self.ops[i] {
                        adj[bias as usize] += dz;
                    }
                    let (w, x, n) = (w as usize, x as usize, len as usize);
                    // The two runs never overlap in practice (weights vs
                    // activations), so split the borrows via index math.
                    for k in 0..n {
                        adj[w + k] += dz * v[x + k];
                    }
                    for k in 0..n {
                        adj[x + k] += dz * v[w + k];
                    }
                }
                Op::Lin1 { a, c } => {
                    adj[a as usize] += dz * self.consts[c as usize];
                }
                Op::Lin2 { a, b, c } => {
                    let c = c as usize;
                    adj[a as usize] += dz * self.consts[c];
                    adj[b as usize] += dz * self.consts[c + 1];
                }
                Op::Lin3 { a, b, d, c } => {
                    let c = c as usize;
                    adj[a as usize] += dz * self.consts[c];
                    adj[b as usize] += dz * self.consts[c + 1];
                    adj[d as usize] += dz * self.consts[c + 2];
                }
            }
        }
        Ok(adj)
    }

    /// Gradient of `root` with respect to the registered parameter slots.
    pub fn grad(&self, root: Var) -> Result<Vec<f64>, AutodiffError> {
        let mut adj = self.adjoints(root)?;
        adj.truncate(self.n_params);
        Ok(adj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_and_replays_bit_for_bit() {
        let mut t = Tape::new();
        let p = t.register_params(&[2.0, -3.5, 0.25]).unwrap();
        let a = p.var(0).unwrap();
        let b = p.var(1).unwrap();
        let c = p.var(2).unwrap();
        let ab = t.mul(a, b);
        let s = t.swish(ab);
        let e = t.exp(c);
        let q = t.div(s, e);
        let r = t.lin2(q, 1.75, ab, -0.5, 3.0);
        let _ = t.fma(r, q, s);
        let replayed = t.replay();
        assert_eq!(replayed.len(), t.vals.len());
        for (i, rv) in replayed.iter().enumerate() {
            assert_eq!(rv.to_bits(), t.vals[i].to_bits(), "value {i} differs");
        }
    }

    #[test]
    fn constant_has_zero_gradient() {
        let mut t = Tape::new();
        let p = t.register_params(&[1.5]).unwrap();
        let x = p.var(0).unwrap();
        let c = t.constant(4.0);
        let y = t.mul(x, c);
        let g = t.grad(y).unwrap();
        assert_eq!(g, vec![4.0]);
        let adj = t.adjoints(y).unwrap();
        assert_eq!(adj[c as usize], 1.5);
    }

    #[test]
    fn quadratic_gradient_is_two_w() {
        // loss = sum of squared params
        let w = [0.5, -1.25, 3.0, 0.0];
        let mut t = Tape::new();
        let p = t.register_params(&w).unwrap();
        let mut total = t.constant(0.0);
        for i in 0..w.len() {
            let v = p.var(i).unwrap();
            let sq = t.mul(v, v);
            total = t.add(total, sq);
        }
        let g = t.grad(total).unwrap();
        for i in 0..w.len() {
            assert_eq!(g[i], 2.0 * w[i]);
        }
    }

    #[test]
    fn dot_matches_manual_and_gradients() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0];
        let x = [0.5, -0.5, 1.5, -1.5, 2.5];
        let mut t = Tape::new();
        let all: Vec<f64> = w.iter().chain(x.iter()).copied().collect();
        let p = t.register_params(&all).unwrap();
        let d = t.dot(p.var(0).unwrap(), p.var(5).unwrap(), 5);
        let expect: f64 = w.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        assert!((t.value(d) - expect).abs() < 1e-15);
        let g = t.grad(d).unwrap();
        for k in 0..5 {
            assert_eq!(g[k], x[k]);
            assert_eq!(g[5 + k], w[k]);
        }
    }

    #[test]
    fn params_must_come_first() {
        let mut t = Tape::new();
        let _ = t.constant(1.0);
        assert_eq!(t.register_params(&[1.0]).unwrap_err(), AutodiffError::ParamsNotFirst);
    }

    #[test]
    fn unregistered_slot_is_an_error() {
        let mut t = Tape::new();
        let p = t.register_params(&[1.0, 2.0]).unwrap();
        assert!(p.var(1).is_ok());
        assert_eq!(p.var(2).unwrap_err(), AutodiffError::UnregisteredParam { slot: 2 });
    }

    #[test]
    fn swish_derivative_chain_is_consistent() {
        // Check swish_d1/d2 against finite differences of swish itself.
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.0, 10.0] {
            let h = 1e-5;
            let (f, d1, d2, _) = swish_derivs(x);
            let (fp, ..) = swish_derivs(x + h);
            let (fm, ..) = swish_derivs(x - h);
            assert!(((fp - fm) / (2.0 * h) - d1).abs() < 1e-8, "d1 at {x}");
            assert!(((fp - 2.0 * f + fm) / (h * h) - d2).abs() < 1e-5, "d2 at {x}");
        }
        // swish(0) = 0, swish'(0) = 1/2, swish''(0) = 1/2
        let (f, d1, d2, _) = swish_derivs(0.0);
        assert_eq!(f, 0.0);
        assert!((d1 - 0.5).abs() < 1e-15);
        assert!((d2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn swish_third_derivative_matches_fd() {
        for &x in &[-2.0, -0.3, 0.0, 1.1, 4.0] {
            let h = 1e-5;
            let (.., d2p) = (swish_derivs(x + h).2, swish_derivs(x + h).3);
            let _ = d2p;
            let d2 = |x: f64| swish_derivs(x).2;
            let fd3 = (d2(x + h) - d2(x - h)) / (2.0 * h);
            assert!((fd3 - swish_derivs(x).3).abs() < 1e-7, "d3 at {x}");
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut t = Tape::new();
            let p = t.register_params(&[0.3, 0.7, -1.1]).unwrap();
            let a = p.var(0).unwrap();
            let b = p.var(1).unwrap();
            let c = p.var(2).unwrap();
            let m = t.mul(a, b);
            let s = t.swish(m);
            let d = t.dot(a, b, 2);
            let r = t.fma(s, d, c);
            let g = t.grad(r).unwrap();
            (t.value(r).to_bits(), g.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        };
        assert_eq!(run(), run());
    }
}
