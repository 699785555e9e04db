use curvex_core::field::stencil_curvature;
use curvex_core::hybrid::{blend, DEFAULT_HK_LOW, DEFAULT_HK_UP};
use curvex_core::neural::{Corrector, ErrorNet};
use curvex_core::packet::{DataPacket, Sample};
use proptest::prelude::*;

const H: f64 = 1.0 / 64.0;

fn packet() -> impl Strategy<Value = DataPacket> {
    (
        prop::array::uniform9(-2.0 * H..2.0 * H),
        prop::array::uniform9(-std::f64::consts::PI..std::f64::consts::PI),
        -0.6..0.6f64,
    )
        .prop_map(|(phi, angles, hk)| DataPacket {
            phi,
            normal: angles.map(|a| [a.cos(), a.sin()]),
            hk,
        })
}

proptest! {
    #[test]
    fn reflect_is_an_involution(p in packet()) {
        prop_assert_eq!(p.reflect().reflect(), p);
    }

    #[test]
    fn reflect_keeps_orientation(p in packet()) {
        let q = p.reorient();
        prop_assert!(q.reflect().is_oriented());
    }

    #[test]
    fn reorient_lands_in_first_quadrant(p in packet()) {
        let [nx, ny] = p.reorient().center_normal();
        let angle = ny.atan2(nx);
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&angle));
    }

    #[test]
    fn four_quarter_turns_are_identity(p in packet()) {
        prop_assert_eq!(p.rotate(4), p);
        prop_assert_eq!(p.rotate(1).rotate(-1), p);
    }

    #[test]
    fn stencil_curvature_is_odd(p in packet()) {
        let neg = p.negate();
        prop_assert_eq!(stencil_curvature(&neg.phi, H), -stencil_curvature(&p.phi, H));
    }

    #[test]
    fn standard_form_is_negative_and_oriented(p in packet(), target in -0.6..0.6f64) {
        let s = Sample::standardize(p, target);
        prop_assert!(s.target <= 0.0);
        prop_assert!(s.packet.is_oriented());
        prop_assert_eq!(s.target.abs(), target.abs());
    }

    #[test]
    fn blend_stays_between_inputs(
        mag in DEFAULT_HK_LOW..DEFAULT_HK_UP,
        sign in prop::bool::ANY,
        avg in -0.01..0.0f64,
    ) {
        let hk = if sign { mag } else { -mag };
        let out = blend(hk, avg, DEFAULT_HK_LOW, DEFAULT_HK_UP);
        let (lo, hi) = (mag.min(-avg), mag.max(-avg));
        prop_assert!(out.abs() >= lo - 1e-15 && out.abs() <= hi + 1e-15);
        prop_assert_eq!(out.signum(), hk.signum());
    }

    #[test]
    fn blend_above_the_band_is_the_network(hk in 0.0071..0.6f64, avg in -0.6..0.0f64) {
        prop_assert_eq!(blend(-hk, avg, DEFAULT_HK_LOW, DEFAULT_HK_UP), avg);
        prop_assert_eq!(blend(hk, avg, DEFAULT_HK_LOW, DEFAULT_HK_UP), -avg);
    }

    #[test]
    fn blend_is_continuous_at_the_gate(avg in -0.7..0.7f64) {
        let out = blend(-DEFAULT_HK_LOW, avg, DEFAULT_HK_LOW, DEFAULT_HK_UP);
        prop_assert!((out + DEFAULT_HK_LOW).abs() < 1e-15);
    }

    #[test]
    fn batch_predictions_follow_row_permutation(seed in 0u64..1000, shift in 1usize..7) {
        let net = ErrorNet::new(4, [6; 4], 6, seed);
        let rows = 8;
        let x: Vec<f64> = (0..rows * 4).map(|k| ((k as f64 + seed as f64) * 0.37).sin()).collect();
        let hk: Vec<f64> = (0..rows).map(|k| -0.01 * (k + 1) as f64).collect();
        let perm: Vec<usize> = (0..rows).map(|k| (k + shift) % rows).collect();
        let xp: Vec<f64> = perm.iter().flat_map(|&r| x[r * 4..r * 4 + 4].to_vec()).collect();
        let hkp: Vec<f64> = perm.iter().map(|&r| hk[r]).collect();
        let (a, b) = (net.predict(&x, &hk).unwrap(), net.predict(&xp, &hkp).unwrap());
        for (k, &r) in perm.iter().enumerate() {
            prop_assert_eq!(b[k], a[r]);
        }
    }
}
