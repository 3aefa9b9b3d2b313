//! Property tests for the spec-level invariants.

use proptest::prelude::*;

use meltpinn::loss::{total_loss, LossWeights};
use meltpinn::network::{apply_hard_bc, BcValue, BoundaryDistance, Face, HardBcWrapper, NetworkParams};
use meltpinn::physics::{interp_property, liquid_fraction, marangoni_traction};

proptest! {
    #[test]
    fn liquid_fraction_is_monotone_bounded_lipschitz(
        a in 200.0..2000.0f64,
        b in 200.0..2000.0f64,
        ts in 800.0..1000.0f64,
        band in 0.5..100.0f64,
    ) {
        let tl = ts + band;
        let fa = liquid_fraction(a, ts, tl).unwrap();
        let fb = liquid_fraction(b, ts, tl).unwrap();
        prop_assert!((0.0..=1.0).contains(&fa));
        prop_assert!((0.0..=1.0).contains(&fb));
        // monotone
        if a <= b {
            prop_assert!(fa <= fb);
        } else {
            prop_assert!(fb <= fa);
        }
        // Lipschitz with constant 1/(tl - ts)
        prop_assert!((fa - fb).abs() <= (a - b).abs() / band + 1e-12);
    }

    #[test]
    fn interp_stays_within_the_phase_values(
        f in 0.0..=1.0f64,
        lo in -1e3..1e3f64,
        hi in -1e3..1e3f64,
    ) {
        let v = interp_property(f, lo, hi).unwrap();
        let (mn, mx) = (lo.min(hi), lo.max(hi));
        prop_assert!(v >= mn - 1e-9 * mx.abs().max(1.0) && v <= mx + 1e-9 * mx.abs().max(1.0));
    }

    #[test]
    fn marangoni_traction_is_tangential(
        gx in -1e4..1e4f64,
        gy in -1e4..1e4f64,
        gz in -1e4..1e4f64,
        nx in -1.0..1.0f64,
        ny in -1.0..1.0f64,
        nz in 0.1..1.0f64,
    ) {
        let norm = (nx * nx + ny * ny + nz * nz).sqrt();
        let n = [nx / norm, ny / norm, nz / norm];
        let tau = marangoni_traction(&[gx, gy, gz], &n, -2e-5).unwrap();
        let dot: f64 = tau.iter().zip(&n).map(|(a, b)| a * b).sum();
        let scale = tau.iter().map(|v| v.abs()).fold(1e-9, f64::max);
        prop_assert!(dot.abs() <= 1e-12 * scale.max(1.0), "dot = {dot}, scale = {scale}");
    }

    #[test]
    fn hard_bc_is_exact_on_the_boundary_for_any_params(seed in 0u64..1000) {
        let wrapper = HardBcWrapper {
            eps: 0.016,
            distance: BoundaryDistance {
                bounds: vec![(-0.4, 0.4)],
                faces: vec![Face { axis: 0, hi: false }, Face { axis: 0, hi: true }],
            },
            values: vec![BcValue::AxisRamp { axis: 0, x0: -0.4, x1: 0.4, v0: 298.15, v1: 973.15 }],
        };
        let p = NetworkParams::init(&[1, 6, 1], seed).unwrap();
        let raw = meltpinn::network::forward(&p, &[0.37]).unwrap();
        let lo = apply_hard_bc(&raw, &wrapper, &[-0.4]);
        let hi = apply_hard_bc(&raw, &wrapper, &[0.4]);
        prop_assert_eq!(lo[0], 298.15);
        prop_assert_eq!(hi[0], 973.15);
    }

    #[test]
    fn total_loss_is_nonnegative_and_zero_only_at_zero(
        d in 0.0..10.0f64,
        p1 in 0.0..10.0f64,
        p2 in 0.0..10.0f64,
    ) {
        let w = LossWeights { lambda_pde1: 0.25, lambda_pde2: 0.25, lambda_bc: 0.0 };
        let t = total_loss(&w, d, p1, p2).unwrap();
        prop_assert!(t >= 0.0);
        if d > 0.0 && p1 > 0.0 && p2 > 0.0 {
            prop_assert!(t > 0.0);
        }
        prop_assert_eq!(total_loss(&w, 0.0, 0.0, 0.0).unwrap(), 0.0);
    }
}
