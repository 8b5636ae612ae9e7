mod common;

use duca::data::stream::build_sequential;
use duca::eval::{
    accuracy, average_accuracy, corrupt, plasticity, prediction_histogram, recency_bias, stability, AccuracyMatrix,
    Corruption, CorruptionSpec, PredictionLog, CORRUPTIONS,
};
use duca::nn::{build_classifier, ArchitectureSpec};
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook RGB → HSV → RGB with the value channel shifted by `delta`.
fn hsv_brightness_oracle(rgb: [f64; 3], delta: f64) -> [f64; 3] {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let v = max;
    let s = if max > 0.0 { (max - min) / max } else { 0.0 };
    let h = if max == min {
        0.0
    } else if max == r {
        ((g - b) / (max - min)).rem_euclid(6.0)
    } else if max == g {
        (b - r) / (max - min) + 2.0
    } else {
        (r - g) / (max - min) + 4.0
    };
    let v = (v + delta).clamp(0.0, 1.0);
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let m = v - c;
    let (r1, g1, b1) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r1 + m, g1 + m, b1 + m]
}

#[test]
fn brightness_matches_hsv_oracle() {
    let gray = Array4::<f32>::from_elem((1, 3, 4, 4), 0.5);
    let out = corrupt(&gray, CorruptionSpec::new(Corruption::Brightness, 3).unwrap(), 0).unwrap();
    assert!(out.iter().all(|&v| (v - 0.65).abs() < 1e-6));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Array4::from_shape_fn((2, 3, 5, 5), |_| rng.random::<f32>());
    for sev in 1..=5u8 {
        let out = corrupt(&x, CorruptionSpec::new(Corruption::Brightness, sev).unwrap(), 0).unwrap();
        let delta = [0.05, 0.1, 0.15, 0.2, 0.3][sev as usize - 1];
        for n in 0..2 {
            for y in 0..5 {
                for xx in 0..5 {
                    let px = [0, 1, 2].map(|c| x[[n, c, y, xx]] as f64);
                    let want = hsv_brightness_oracle(px, delta);
                    for c in 0..3 {
                        assert!((out[[n, c, y, xx]] as f64 - want[c]).abs() < 1e-5);
                    }
                }
            }
        }
    }
}

#[test]
fn corruptions_are_pure_bounded_and_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Array4::from_shape_fn((2, 3, 16, 16), |_| rng.random::<f32>());
    let before = x.clone();
    for &c in CORRUPTIONS.iter() {
        for sev in 1..=5 {
            let spec = CorruptionSpec::new(c, sev).unwrap();
            let a = corrupt(&x, spec, 7).unwrap();
            assert_eq!(a.dim(), x.dim());
            assert!(a.iter().all(|v| (0.0..=1.0).contains(v)), "{c} {sev}");
            assert_eq!(a, corrupt(&x, spec, 7).unwrap(), "{c} {sev} not deterministic");
        }
        assert_eq!(corrupt(&x, CorruptionSpec::new(c, 0).unwrap(), 7).unwrap(), x);
    }
    assert_eq!(x, before);
    assert!(CorruptionSpec::new(Corruption::Fog, 6).is_err());
}

#[test]
fn gaussian_noise_grows_with_severity() {
    let x = Array4::<f32>::from_elem((4, 3, 16, 16), 0.5);
    let std_of = |sev| {
        let y = corrupt(&x, CorruptionSpec::new(Corruption::GaussianNoise, sev).unwrap(), 3).unwrap();
        let n = y.len() as f64;
        (y.iter().map(|&v| (v as f64 - 0.5).powi(2)).sum::<f64>() / n).sqrt()
    };
    let stds: Vec<f64> = (1..=5).map(std_of).collect();
    assert!(stds.windows(2).all(|w| w[0] < w[1]), "{stds:?}");
}

#[test]
fn random_model_is_at_chance() {
    let (ds, _) = common::mnist();
    let net = build_classifier::<f32>(&ArchitectureSpec::mlp((1, 28, 28)), 10, 42).unwrap();
    let acc = accuracy(&net, &ds.test, None);
    assert!((acc - 10.0).abs() <= 2.0, "random model accuracy {acc}");
    assert_eq!(prediction_histogram(&net, &ds.test).iter().sum::<usize>(), ds.test.len());
}

#[test]
fn uniform_predictor_has_flat_recency() {
    let classes: Vec<Vec<usize>> = (0..5).map(|t| vec![2 * t, 2 * t + 1]).collect();
    let n = 50;
    let log = PredictionLog { labels: (0..n).map(|i| i % 10).collect(), tasks: (0..n).map(|i| (i % 10) / 2).collect(), probs: vec![vec![0.1; 10]; n] };
    let r = recency_bias(&log, &classes).unwrap();
    assert_eq!(r.len(), 5);
    assert!(r.iter().all(|v| (v - 0.2).abs() < 1e-6), "{r:?}");
}

#[test]
fn recency_of_trained_model_is_a_distribution() {
    let ds = duca::data::loaders::synthetic_blobs(4, 3, 3, (1, 4, 4), 0.1, 1);
    let stream = build_sequential(&ds, 2, None).unwrap();
    let net = build_classifier::<f32>(&ArchitectureSpec::mlp((1, 4, 4)), 4, 1).unwrap();
    let log = PredictionLog::collect(&net, &stream);
    let r = recency_bias(&log, &stream.class_lists()).unwrap();
    assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

#[test]
fn plasticity_stability_by_hand() {
    let m = AccuracyMatrix::from_rows(vec![vec![90.0, 0.0], vec![40.0, 85.0]]).unwrap();
    assert_eq!(plasticity(&m).unwrap(), 87.5);
    assert_eq!(stability(&m).unwrap(), 40.0);
    let m3 = AccuracyMatrix::from_rows(vec![vec![80.0, 5.0, 1.0], vec![60.0, 70.0, 2.0], vec![30.0, 50.0, 90.0]]).unwrap();
    assert!((plasticity(&m3).unwrap() - 80.0).abs() < 1e-12);
    assert!((stability(&m3).unwrap() - 40.0).abs() < 1e-12);
    assert!((average_accuracy(&m3).unwrap() - 170.0 / 3.0).abs() < 1e-12);
}
