//! Property-based invariants across modules.

use proptest::prelude::*;

use lvae_core::datagen::{sample_mask, MaskConfig};
use lvae_core::eval::binary_accuracy;
use lvae_core::field::{binarize, concat_pair, total_variation, volume};
use lvae_core::io::{decode_pgm, decode_raw, encode_pgm, encode_raw};
use lvae_core::litho::{litho_forward, LithoParams};
use lvae_core::morphology::enclosed_void_count;
use lvae_core::optim::{lbfgsb_minimize, LbfgsbConfig};
use lvae_core::{BinaryImage, Field2D};

fn field_strategy(max: usize) -> impl Strategy<Value = Field2D> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..=1.0, w * h).prop_map(move |d| Field2D::new(w, h, d).unwrap())
    })
}

fn binary_pair(max: usize) -> impl Strategy<Value = (BinaryImage, BinaryImage)> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        (
            prop::collection::vec(0u8..=1, w * h),
            prop::collection::vec(0u8..=1, w * h),
        )
            .prop_map(move |(a, b)| (BinaryImage::new(w, h, a).unwrap(), BinaryImage::new(w, h, b).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raw_round_trip_is_exact(f in field_strategy(12), n in 1usize..5) {
        // Records are stored as f32, so start from f32-representable values.
        let fields: Vec<Field2D> = (0..n).map(|k| f.map(|v| (v * k as f64) as f32 as f64)).collect();
        let bytes = encode_raw(&fields).unwrap();
        prop_assert_eq!(decode_raw(&bytes).unwrap(), fields);
    }

    #[test]
    fn pgm_round_trip_of_binarized_fields(f in field_strategy(16)) {
        let b = binarize(&f, 0.5).to_field();
        prop_assert_eq!(decode_pgm(&encode_pgm(&b)).unwrap(), b);
    }

    #[test]
    fn accuracy_symmetric_and_complement_invariant((a, b) in binary_pair(10)) {
        let ab = binary_accuracy(&a, &b).unwrap().accuracy;
        prop_assert_eq!(ab, binary_accuracy(&b, &a).unwrap().accuracy);
        prop_assert_eq!(ab, binary_accuracy(&a.complement(), &b.complement()).unwrap().accuracy);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(binary_accuracy(&a, &a).unwrap().accuracy, 1.0);
    }

    #[test]
    fn tv_and_volume_are_mirror_invariant(f in field_strategy(10)) {
        let tv = total_variation(&f);
        prop_assert!((total_variation(&f.mirror_horizontal()) - tv).abs() < 1e-9);
        prop_assert!((total_variation(&f.mirror_vertical()) - tv).abs() < 1e-9);
        prop_assert!((volume(&f.mirror_horizontal()) - volume(&f)).abs() < 1e-9);
        prop_assert!(tv >= 0.0);
    }

    #[test]
    fn pair_split_inverts_concat(a in field_strategy(8)) {
        let b = a.map(|v| 1.0 - v);
        let pair = concat_pair(&a, &b).unwrap();
        prop_assert_eq!(pair.split(), (a, b));
    }

    #[test]
    fn complement_of_solid_with_holes_has_no_new_voids((a, _) in binary_pair(8)) {
        // Enclosed voids never exceed the total void pixel count.
        let voids = a.len() - a.count_ones();
        prop_assert!(enclosed_void_count(&a) <= voids);
    }

    #[test]
    fn optimizer_stays_in_box(
        c in prop::collection::vec(-5.0f64..5.0, 1..6),
        bound in 0.1f64..3.0,
    ) {
        let n = c.len();
        let cc = c.clone();
        let f = move |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..x.len() {
                let d = x[i] - cc[i];
                v += d * d + 0.1 * d.powi(4);
                g[i] = 2.0 * d + 0.4 * d.powi(3);
            }
            v
        };
        let r = lbfgsb_minimize(f, &vec![0.0; n], &vec![-bound; n], &vec![bound; n], &LbfgsbConfig::default());
        for (i, x) in r.x.iter().enumerate() {
            prop_assert!(x.abs() <= bound);
            // Separable convex objective: the box minimizer is the clamp.
            prop_assert!((x - c[i].clamp(-bound, bound)).abs() < 1e-5, "{x} vs {}", c[i]);
        }
        prop_assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn masks_are_symmetric_and_deterministic(seed in 0u64..1000) {
        let cfg = MaskConfig::for_size(32);
        let m = sample_mask(seed, &cfg).unwrap();
        prop_assert_eq!(&m, &m.mirror_horizontal());
        prop_assert_eq!(&m, &m.mirror_vertical());
        prop_assert_eq!(&m, &sample_mask(seed, &cfg).unwrap());
        let printed = litho_forward(&m.to_field(), &LithoParams::for_width(32)).unwrap();
        prop_assert_eq!(&printed, &printed.mirror_horizontal());
    }
}
