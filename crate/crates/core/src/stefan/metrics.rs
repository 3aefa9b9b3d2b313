//! Interface extraction and slab-normalized L2 error.

use super::StefanError;

/// First crossing of the melting isotherm scanning from the mold side,
/// linearly interpolated between the bracketing nodes.
pub fn extract_interface(x: &[f64], temps: &[f64], t_melt: f64) -> Result<f64, StefanError> {
    if x.len() != temps.len() || x.len() < 2 {
        return Err(StefanError::BadField(format!(
            "grid/temperature length mismatch: {} vs {}",
            x.len(),
            temps.len()
        )));
    }
    if x.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StefanError::BadField("grid must be strictly increasing".into()));
    }
    for i in 0..x.len() - 1 {
        let a = temps[i] - t_melt;
        let b = temps[i + 1] - t_melt;
        if a == 0.0 {
            return Ok(x[i]);
        }
        if a * b < 0.0 {
            return Ok(x[i] + (x[i + 1] - x[i]) * (t_melt - temps[i]) / (temps[i + 1] - temps[i]));
        }
    }
    if *temps.last().unwrap() == t_melt {
        return Ok(*x.last().unwrap());
    }
    Err(StefanError::NoInterfaceCrossing)
}

/// Space-time rectangle for error norms.
#[derive(Clone, Copy, Debug)]
pub struct Slab {
    pub t: (f64, f64),
    pub x: (f64, f64),
}

/// Relative L2 error over a tensor grid of the slab: RMS(pred - oracle)
/// normalized by RMS(oracle).
pub fn l2_error(
    pred: &dyn Fn(f64, f64) -> f64,
    oracle: &dyn Fn(f64, f64) -> f64,
    slab: Slab,
    n_t: usize,
    n_x: usize,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n_t {
        let t = if n_t == 1 {
            slab.t.0
        } else {
            slab.t.0 + (slab.t.1 - slab.t.0) * i as f64 / (n_t - 1) as f64
        };
        for j in 0..n_x {
            let x = if n_x == 1 {
                slab.x.0
            } else {
                slab.x.0 + (slab.x.1 - slab.x.0) * j as f64 / (n_x - 1) as f64
            };
            let o = oracle(x, t);
            let d = pred(x, t) - o;
            num += d * d;
            den += o * o;
        }
    }
    (num / den).sqrt()
}
