//! Collocation sampling: uniform-random or latin-hypercube, over the
//! space-time interior and on boundary faces, reproducible from a seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::network::Face;
use crate::problem::{DomainBox, PinnProblem, PointST};

use super::{BoundaryPoint, CollocationBatch, LossError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingStrategy {
    UniformRandom,
    LatinHypercube,
}

/// How many points each collocation set receives. The interior count is
/// the per-evaluation batch; the boundary sets are sampled once and kept
/// fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CollocationCounts {
    pub interior: usize,
    pub traction: usize,
    pub flux: usize,
    pub dirichlet: usize,
}

/// Axis ranges as (lo, hi) pairs; time is axis 0.
fn axis_ranges(domain: &DomainBox, fixed: Option<(usize, f64)>) -> Vec<(f64, f64)> {
    let mut axes = Vec::with_capacity(1 + domain.x.len());
    axes.push(domain.t);
    axes.extend(domain.x.iter().copied());
    if let Some((spatial_axis, v)) = fixed {
        axes[1 + spatial_axis] = (v, v);
    }
    axes
}

fn sample_box(axes: &[(f64, f64)], n: usize, strategy: SamplingStrategy, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    match strategy {
        SamplingStrategy::UniformRandom => (0..n)
            .map(|_| {
                axes.iter()
                    .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..hi) })
                    .collect()
            })
            .collect(),
        SamplingStrategy::LatinHypercube => {
            // one point per 1/n stratum of every axis
            let mut cols: Vec<Vec<f64>> = Vec::with_capacity(axes.len());
            for &(lo, hi) in axes {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(rng);
                let col: Vec<f64> = idx
                    .into_iter()
                    .map(|k| {
                        if lo == hi {
                            lo
                        } else {
                            lo + (hi - lo) * ((k as f64 + rng.gen_range(0.0..1.0)) / n as f64)
                        }
                    })
                    .collect();
                cols.push(col);
            }
            (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
        }
    }
}

fn to_points(rows: Vec<Vec<f64>>) -> Vec<PointST> {
    rows.into_iter()
        .map(|mut r| {
            let x = r.split_off(1);
            PointST { t: r[0], x }
        })
        .collect()
}

/// Interior space-time samples.
pub fn sample_interior(
    domain: &DomainBox,
    n: usize,
    strategy: SamplingStrategy,
    rng: &mut ChaCha8Rng,
) -> Vec<PointST> {
    to_points(sample_box(&axis_ranges(domain, None), n, strategy, rng))
}

/// Samples on one spatial face (time still varies).
pub fn sample_face(
    domain: &DomainBox,
    face: &Face,
    n: usize,
    strategy: SamplingStrategy,
    rng: &mut ChaCha8Rng,
) -> Vec<PointST> {
    let bound = if face.hi { domain.x[face.axis].1 } else { domain.x[face.axis].0 };
    to_points(sample_box(&axis_ranges(domain, Some((face.axis, bound))), n, strategy, rng))
}

fn outward_normal(face: &Face, dim: usize) -> Vec<f64> {
    let mut n = vec![0.0; dim];
    n[face.axis] = if face.hi { 1.0 } else { -1.0 };
    n
}

fn split_evenly(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

/// Sample a full collocation batch: interior points, Neumann points on
/// their faces, Dirichlet boundary points, and the problem's fixed
/// labeled data. Reproducible from the seed.
pub fn sample_collocation(
    problem: &PinnProblem,
    counts: &CollocationCounts,
    seed: u64,
    strategy: SamplingStrategy,
) -> Result<CollocationBatch, LossError> {
    problem.domain.validate()?;
    let dim = problem.space_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let interior = sample_interior(&problem.domain, counts.interior, strategy, &mut rng);

    let mut traction = Vec::new();
    let traction_faces: Vec<usize> = problem
        .bc
        .neumann
        .iter()
        .enumerate()
        .filter(|(_, f)| f.traction.is_some())
        .map(|(i, _)| i)
        .collect();
    if counts.traction > 0 && !traction_faces.is_empty() {
        for (share, &fi) in split_evenly(counts.traction, traction_faces.len()).iter().zip(&traction_faces) {
            let face = problem.bc.neumann[fi].face;
            for p in sample_face(&problem.domain, &face, *share, strategy, &mut rng) {
                traction.push(BoundaryPoint { point: p, normal: outward_normal(&face, dim), face_idx: fi });
            }
        }
    }

    let mut flux = Vec::new();
    let flux_faces: Vec<usize> = problem
        .bc
        .neumann
        .iter()
        .enumerate()
        .filter(|(_, f)| f.flux.is_some())
        .map(|(i, _)| i)
        .collect();
    if counts.flux > 0 && !flux_faces.is_empty() {
        for (share, &fi) in split_evenly(counts.flux, flux_faces.len()).iter().zip(&flux_faces) {
            let face = problem.bc.neumann[fi].face;
            for p in sample_face(&problem.domain, &face, *share, strategy, &mut rng) {
                flux.push(BoundaryPoint { point: p, normal: outward_normal(&face, dim), face_idx: fi });
            }
        }
    }

    let mut dirichlet = Vec::new();
    if counts.dirichlet > 0 && !problem.bc.dirichlet_faces.is_empty() {
        let shares = split_evenly(counts.dirichlet, problem.bc.dirichlet_faces.len());
        for (share, face) in shares.iter().zip(&problem.bc.dirichlet_faces) {
            dirichlet.extend(sample_face(&problem.domain, face, *share, strategy, &mut rng));
        }
    }

    let batch = CollocationBatch { interior, traction, flux, dirichlet, data: problem.data.clone() };
    batch.validate(&problem.domain)?;
    Ok(batch)
}
