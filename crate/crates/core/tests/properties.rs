mod common;

use duca::buffer::ReservoirBuffer;
use duca::data::augment::Augment;
use duca::nn::{build_classifier, ArchKind, ArchitectureSpec};
use duca::shape::{extract_shape, ShapeConfig};
use duca::trainer::losses::cross_entropy;
use duca::trainer::{Duca, DucaConfig, Learner, LossBreakdown};
use ndarray::{s, Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn reservoir_inclusion_is_uniform() {
    let p = common::reservoir_chi2_pvalue(2, 100, 20_000);
    assert!(p > 0.01, "χ² p-value {p}");
}

#[test]
fn reservoir_sampling_frequency_is_uniform() {
    let mut buf = ReservoirBuffer::new(10, 1);
    for i in 0..10 {
        buf.insert(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut hits = [0u64; 10];
    let draws = 50_000;
    for i in buf.sample_indices(draws, &mut rng).unwrap() {
        hits[i] += 1;
    }
    for h in hits {
        assert!(common::within_binomial_4sigma(h, draws as u64, 0.1), "{hits:?}");
    }
}

#[test]
fn reservoir_membership_ignores_item_identity() {
    // Same seed, different item values: the kept positions are identical.
    let keep = |offset: usize| {
        let mut buf = ReservoirBuffer::new(5, 77);
        for i in 0..300 {
            buf.insert(i + offset);
        }
        buf.entries().iter().map(|v| v - offset).collect::<Vec<_>>()
    };
    assert_eq!(keep(0), keep(1000));
}

fn step_edge() -> Array2<f64> {
    Array2::from_shape_fn((8, 8), |(_, x)| if x >= 4 { 1.0 } else { 0.0 })
}

#[test]
fn shape_matches_brute_force_oracle() {
    let cfg = ShapeConfig { upsample_factor: 1, output_channels: 1, ..ShapeConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let random = Array2::from_shape_fn((8, 8), |_| rng.random::<f64>());
    for plane in [step_edge(), random] {
        let x = plane.clone().into_shape_with_order((1, 1, 8, 8)).unwrap();
        let got = extract_shape(&x, &cfg).unwrap();
        let want = common::shape_oracle(&plane);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn step_edge_response_is_confined_to_the_edge() {
    let x = step_edge().into_shape_with_order((1, 1, 8, 8)).unwrap();
    let y = extract_shape(&x, &ShapeConfig { output_channels: 1, ..ShapeConfig::default() }).unwrap();
    let plane: Array2<f64> = y.slice(s![0, 0, .., ..]).to_owned();
    for r in 0..8 {
        assert!(plane[[r, 0]].abs() < 1e-12 && plane[[r, 7]].abs() < 1e-12);
        assert!(plane[[r, 3]] > 0.5 && plane[[r, 4]] > 0.5);
        // mirror symmetry about the edge
        for c in 0..4 {
            assert!((plane[[r, c]] - plane[[r, 7 - c]]).abs() < 1e-12);
        }
    }
}

#[test]
fn shape_zero_on_constant_and_flip_equivariant() {
    let cfg = ShapeConfig::default();
    let flat = Array4::<f64>::from_elem((1, 3, 16, 16), 0.37);
    assert!(extract_shape(&flat, &cfg).unwrap().iter().all(|v| v.abs() < 1e-5));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Array4::from_shape_fn((2, 3, 16, 16), |_| rng.random::<f64>());
    let flipped = x.slice(s![.., .., .., ..;-1]).to_owned();
    let a = extract_shape(&x, &cfg).unwrap();
    let b = extract_shape(&flipped, &cfg).unwrap();
    let b_back = b.slice(s![.., .., .., ..;-1]);
    for (p, q) in a.iter().zip(b_back.iter()) {
        assert!((p - q).abs() < 1e-5);
    }
    let vflip = x.slice(s![.., .., ..;-1, ..]).to_owned();
    let c = extract_shape(&vflip, &cfg).unwrap();
    for (p, q) in a.iter().zip(c.slice(s![.., .., ..;-1, ..]).iter()) {
        assert!((p - q).abs() < 1e-5);
    }
}

fn tiny_spec() -> ArchitectureSpec {
    ArchitectureSpec { name: ArchKind::Mlp, input_shape: (1, 4, 4), width: 8, depth: 1 }
}

#[test]
fn blend_is_a_convex_combination_and_composes() {
    let a = build_classifier::<f64>(&tiny_spec(), 3, 1).unwrap();
    let b = build_classifier::<f64>(&tiny_spec(), 3, 2).unwrap();
    let d = 0.9;
    let mut once = a.clone();
    once.blend_from(&b, d).unwrap();
    for ((x, y), z) in a.flat_state().iter().zip(b.flat_state()).zip(once.flat_state()) {
        assert!((z - (d * x + (1.0 - d) * y)).abs() < 1e-12);
        assert!(z >= x.min(y) - 1e-12 && z <= x.max(y) + 1e-12);
    }
    let mut twice = once.clone();
    twice.blend_from(&b, d).unwrap();
    let mut squared = a.clone();
    squared.blend_from(&b, d * d).unwrap();
    for (p, q) in twice.flat_state().iter().zip(squared.flat_state()) {
        assert!((p - q).abs() < 1e-6);
    }
    let mut bad = a.clone();
    assert!(bad.blend_from(&b, 1.5).is_err());
}

fn duca_tiny(cfg: DucaConfig, seed: u64) -> Duca {
    let cfg = DucaConfig {
        augment: Augment::None,
        shape: ShapeConfig { output_channels: 1, ..ShapeConfig::default() },
        batch_size: 4,
        ..cfg
    };
    Duca::new(&tiny_spec(), 3, cfg, seed).unwrap()
}

fn batch(rng: &mut ChaCha8Rng) -> (Array4<f32>, Vec<usize>) {
    let x = Array4::from_shape_fn((4, 1, 4, 4), |_| rng.random::<f32>());
    let y = (0..4).map(|_| rng.random_range(0..3)).collect();
    (x, y)
}

#[test]
fn smu_frequency_is_binomial() {
    let r = 0.3;
    let mut duca = duca_tiny(DucaConfig { smu_rate: r, buffer_capacity: 8, ..DucaConfig::default() }, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 3000;
    for _ in 0..n {
        let (x, y) = batch(&mut rng);
        duca.train_step(&x, &y).unwrap();
    }
    assert!(common::within_binomial_4sigma(duca.blends, n, r), "{} blends in {n} steps", duca.blends);
}

#[test]
fn cross_entropy_of_uniform_is_ln_k() {
    for k in [2usize, 10, 100] {
        let z = Array2::<f64>::from_elem((5, k), 0.25);
        let (l, _) = cross_entropy(z.view(), &[0, 1, 0, 1, k - 1]).unwrap();
        assert!((l - (k as f64).ln()).abs() < 1e-6);
        assert!((common::ce_oracle(&z, &[0, 1, 0, 1, k - 1]) - l).abs() < 1e-12);
    }
}

#[test]
fn cross_entropy_matches_oracle_on_random_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let z = Array2::from_shape_fn((7, 5), |_| rng.random_range(-4.0..4.0));
    let y = [0, 4, 2, 2, 1, 3, 0];
    let (l, _) = cross_entropy(z.view(), &y).unwrap();
    assert!((l - common::ce_oracle(&z, &y)).abs() < 1e-12);
}

#[test]
fn loss_breakdown_satisfies_identity() {
    let cfg = DucaConfig { lambda: 0.3, gamma: 0.05, buffer_capacity: 16, ..DucaConfig::default() };
    let mut duca = duca_tiny(cfg.clone(), 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut seen: Vec<LossBreakdown> = Vec::new();
    for _ in 0..20 {
        let (x, y) = batch(&mut rng);
        seen.push(duca.train_step(&x, &y).unwrap());
    }
    assert!(seen[0].ks_wm.is_none(), "first step has no replay");
    assert!(seen[19].ks_wm.is_some());
    for l in &seen {
        assert!(l.identity_error(cfg.lambda, cfg.gamma) < 1e-9);
        let wm = l.sup_wm + cfg.lambda * (l.biks + l.ks_wm.unwrap_or(0.0));
        assert!((wm - l.total_wm).abs() < 1e-9);
    }
}

#[test]
fn gradients_match_finite_differences() {
    let g = common::grad::duca_gradient_check(21, 25);
    assert_eq!(g.coordinates, 50);
    assert!(g.max_rel_fd < 1e-5, "finite-difference relative error {}", g.max_rel_fd);
    assert!(g.max_update_err < 1e-3, "training step deviates from the f64 gradient: {}", g.max_update_err);
}
