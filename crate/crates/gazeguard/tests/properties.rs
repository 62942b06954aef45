//! Property tests over the pipeline's structural invariants.

use gazeguard::detector::{softmax_probs, DebouncedStream};
use gazeguard::gradcore::Tensor;
use gazeguard::pretext::{augment, nt_xent_loss, AugmentationSpec, ContrastiveBatch};
use gazeguard::synthcam::{
    gaze_to_vector, label_sample, render_eye_image, vector_to_gaze, GazeAngles, HeadPose,
    ScreenHit, SessionConfig,
};
use proptest::prelude::*;

fn angle() -> impl Strategy<Value = f64> {
    -1.5f64..1.5f64
}

proptest! {
    #[test]
    fn gaze_vectors_are_unit_and_invertible(yaw in angle(), pitch in angle()) {
        let a = GazeAngles { yaw, pitch };
        let v = gaze_to_vector(a);
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        prop_assert!(v[2] < 0.0);
        let b = vector_to_gaze(v);
        prop_assert!((a.yaw - b.yaw).abs() < 1e-9);
        prop_assert!((a.pitch - b.pitch).abs() < 1e-9);
    }

    #[test]
    fn shrinking_the_margin_never_turns_abnormal_into_normal(
        x in -0.8f64..0.8,
        y in -0.6f64..0.6,
        margin in 0.0f64..0.15,
        shrink in 0.0f64..1.0,
    ) {
        let hit = ScreenHit::Hit { x_m: x, y_m: y };
        let mut wide = SessionConfig::default();
        wide.margin_m = margin;
        let mut narrow = wide.clone();
        narrow.margin_m = margin * shrink;
        prop_assert!(label_sample(hit, &narrow) <= label_sample(hit, &wide));
    }

    #[test]
    fn softmax_rows_sum_to_one_for_any_finite_logits(
        a in -1e4f64..1e4,
        b in -1e4f64..1e4,
        c in -1e4f64..1e4,
        d in -1e4f64..1e4,
    ) {
        let logits = Tensor::from_vec(&[2, 2], vec![a, b, c, d]).unwrap();
        let p = softmax_probs(&logits);
        for row in p.data().chunks(2) {
            prop_assert!((row[0] + row[1] - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn augmentation_preserves_shape_and_unit_range(
        yaw in -0.5f64..0.5,
        pitch in -0.5f64..0.5,
        seed in 0u64..1000,
    ) {
        let img = render_eye_image(
            GazeAngles { yaw, pitch },
            HeadPose { yaw: 0.0, pitch: 0.0 },
            seed,
        )
        .unwrap();
        let out = augment(&img, &AugmentationSpec::default(), seed ^ 0xabcd).unwrap();
        prop_assert_eq!(out.pixels.len(), img.pixels.len());
        prop_assert!(out.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn contrastive_loss_ignores_positive_rescaling(
        seed in 0u64..500,
        scale in 0.01f64..50.0,
        which in 0usize..6,
    ) {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..6 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pairing: Vec<usize> = (0..6).map(|i| i ^ 1).collect();
        let base = ContrastiveBatch::new(
            Tensor::from_vec(&[6, 3], data.clone()).unwrap(),
            pairing.clone(),
            0.5,
        )
        .unwrap();
        let (l0, _) = nt_xent_loss(&base).unwrap();

        let mut scaled = data;
        for v in &mut scaled[which * 3..(which + 1) * 3] {
            *v *= scale;
        }
        let rescaled = ContrastiveBatch::new(
            Tensor::from_vec(&[6, 3], scaled).unwrap(),
            pairing,
            0.5,
        )
        .unwrap();
        let (l1, _) = nt_xent_loss(&rescaled).unwrap();
        prop_assert!((l0 - l1).abs() < 1e-9);
    }

    #[test]
    fn debounced_state_flips_at_most_once_per_k(
        labels in proptest::collection::vec(0u8..2, 1..500),
        k in 1u32..10,
    ) {
        let mut stream = DebouncedStream::new(k);
        let mut last_flip: Option<usize> = None;
        let mut prev: Option<u8> = None;
        for (i, &l) in labels.iter().enumerate() {
            let stable = stream.push(l);
            if let Some(p) = prev {
                if stable != p {
                    if let Some(lf) = last_flip {
                        prop_assert!(i - lf >= k as usize);
                    }
                    last_flip = Some(i);
                }
            }
            prev = Some(stable);
        }
    }
}
