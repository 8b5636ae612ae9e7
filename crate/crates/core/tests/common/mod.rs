//! Independent oracles shared by the integration suites and the acceptance
//! target. Nothing here calls the library routine it is used to check.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use duca::buffer::ReservoirBuffer;
use duca::data::loaders::{load_mnist, load_pixel_csv, split_per_class};
use duca::data::LabeledDataset;
use ndarray::Array2;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// MNIST from `$DUCA_DATA_ROOT/mnist` when present, else the bundled
/// 5000-image subset split 4000/1000.
pub fn mnist() -> (LabeledDataset, &'static str) {
    if let Some(root) = std::env::var_os("DUCA_DATA_ROOT") {
        if let Ok(ds) = load_mnist(&Path::new(&root).join("mnist")) {
            return (ds, "MNIST");
        }
    }
    let all = load_pixel_csv(&data_dir().join("mnist_5k.csv.gz"), (1, 28, 28)).expect("bundled MNIST subset");
    let (train, test) = split_per_class(&all, 10, 0.2);
    (LabeledDataset { name: "mnist-5k".into(), train, test, num_classes: 10 }, "bundled 5k subset")
}

/// Inclusion counts of a capacity-`k` reservoir over a stream of `n` items,
/// repeated `trials` times with distinct seeds; returns the χ² p-value of
/// the uniform-inclusion hypothesis (expected k/n per item).
pub fn reservoir_chi2_pvalue(k: usize, n: usize, trials: u64) -> f64 {
    let mut counts = vec![0u64; n];
    for t in 0..trials {
        let mut buf = ReservoirBuffer::new(k, 0x5eed_0000 + t);
        for i in 0..n {
            buf.insert(i);
        }
        for &i in buf.entries() {
            counts[i] += 1;
        }
    }
    let expected = trials as f64 * k as f64 / n as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(chi2)
}

fn mirror(i: isize, n: usize) -> usize {
    // reflect without repeating the edge: -1 → 1, n → n-2
    let n = n as isize;
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
    }
    i as usize
}

fn conv3(p: &Array2<f64>, k: [[f64; 3]; 3]) -> Array2<f64> {
    let (h, w) = p.dim();
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (dy, row) in k.iter().enumerate() {
                for (dx, &kv) in row.iter().enumerate() {
                    acc += kv * p[[mirror(y as isize + dy as isize - 1, h), mirror(x as isize + dx as isize - 1, w)]];
                }
            }
            out[[y, x]] = acc;
        }
    }
    out
}

/// Brute-force edge magnitude without resampling: 3×3 binomial blur,
/// Sobel x/y, Euclidean magnitude, divided by the peak.
pub fn shape_oracle(plane: &Array2<f64>) -> Array2<f64> {
    let g = [[1.0 / 16.0, 2.0 / 16.0, 1.0 / 16.0], [2.0 / 16.0, 4.0 / 16.0, 2.0 / 16.0], [1.0 / 16.0, 2.0 / 16.0, 1.0 / 16.0]];
    let blurred = conv3(plane, g);
    let gx = conv3(&blurred, [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]);
    let gy = conv3(&blurred, [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]);
    let mut mag = Array2::from_shape_fn(plane.dim(), |(y, x)| (gx[[y, x]].powi(2) + gy[[y, x]].powi(2)).sqrt());
    let peak = mag.iter().copied().fold(0.0, f64::max);
    if peak > 1e-4 {
        mag.mapv_inplace(|v| v / peak);
    } else {
        mag.fill(0.0);
    }
    mag
}

/// Mean cross-entropy by the textbook formula, in f64.
pub fn ce_oracle(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.outer_iter().zip(labels) {
        let sum: f64 = row.iter().map(|z| z.exp()).sum();
        total += -(row[y].exp() / sum).ln();
    }
    total / labels.len() as f64
}

/// Mean squared difference, in f64.
pub fn mse_oracle(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// `|successes − n·p| ≤ 4·sqrt(n·p·(1−p))`.
pub fn within_binomial_4sigma(successes: u64, n: u64, p: f64) -> bool {
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (successes as f64 - mean).abs() <= 4.0 * sd
}

pub mod grad {
    use duca::buffer::BufferEntry;
    use duca::data::augment::Augment;
    use duca::nn::{build_classifier, ArchKind, ArchitectureSpec, Classifier};
    use duca::shape::{extract_shape, ShapeConfig};
    use duca::trainer::losses::{cross_entropy, mse};
    use duca::trainer::{derive_seed, Duca, DucaConfig, Learner, STREAM_SAMPLING};
    use ndarray::{concatenate, s, Array2, Array3, Array4, Axis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::{ce_oracle, mse_oracle, rel_err};

    pub struct GradCheck {
        /// Worst relative error of the assembled f64 gradient against
        /// central differences of the oracle loss.
        pub max_rel_fd: f64,
        /// Worst error of the f32 training step's implied gradient
        /// `(θ_before − θ_after)/lr` against the f64 gradient, relative to
        /// max(|g|, 1e-3).
        pub max_update_err: f64,
        pub coordinates: usize,
    }

    fn to_f64(net: &Classifier<f32>) -> Classifier<f64> {
        let mut out = build_classifier::<f64>(net.spec(), net.num_classes(), 0).unwrap();
        let src: Vec<_> = net.state().into_iter().map(|(_, t)| t.mapv(|v| v as f64)).collect();
        for (d, s) in out.state_mut().into_iter().zip(src) {
            *d = s;
        }
        out
    }

    fn flat_grads(net: &mut Classifier<f64>) -> Vec<f64> {
        let mut g = Vec::new();
        net.visit_params_mut(&mut |p| g.extend(p.grad.iter().copied()));
        g
    }

    fn set_coord(net: &mut Classifier<f64>, mut i: usize, delta: f64) {
        for t in net.state_mut() {
            if i < t.len() {
                *t.iter_mut().nth(i).unwrap() += delta;
                return;
            }
            i -= t.len();
        }
        panic!("coordinate out of range");
    }

    /// Oracle loss of one network: CE(current) + CE(replay) + w·(MSE(z, peer)
    /// + MSE(z_replay, memory)).
    fn oracle_loss(z: &Array2<f64>, y: &[usize], yb: &[usize], peer: &Array2<f64>, mem: &Array2<f64>, w: f64) -> f64 {
        let nc = y.len();
        ce_oracle(&z.slice(s![..nc, ..]).to_owned(), y)
            + ce_oracle(&z.slice(s![nc.., ..]).to_owned(), yb)
            + w * (mse_oracle(z, peer) + mse_oracle(&z.slice(s![nc.., ..]).to_owned(), mem))
    }

    fn analytic(net: &mut Classifier<f64>, x: &Array4<f64>, nc: usize, y: &[usize], yb: &[usize], peer: &Array2<f64>, mem: &Array2<f64>, w: f64) -> Vec<f64> {
        net.zero_grad();
        let z = net.forward_train(x);
        let mut g = Array2::zeros(z.raw_dim());
        g.slice_mut(s![..nc, ..]).assign(&cross_entropy(z.slice(s![..nc, ..]), y).unwrap().1);
        g.slice_mut(s![nc.., ..]).assign(&cross_entropy(z.slice(s![nc.., ..]), yb).unwrap().1);
        g.scaled_add(w, &mse(z.view(), peer.view()).unwrap().1);
        g.slice_mut(s![nc.., ..]).scaled_add(w, &mse(z.slice(s![nc.., ..]), mem.view()).unwrap().1);
        net.backward(&g);
        flat_grads(net)
    }

    pub fn duca_gradient_check(seed: u64, per_net: usize) -> GradCheck {
        let spec = ArchitectureSpec { name: ArchKind::Mlp, input_shape: (1, 4, 4), width: 6, depth: 1 };
        let k = 3;
        let cfg = DucaConfig {
            lr: 0.01,
            batch_size: 4,
            buffer_batch_size: Some(3),
            buffer_capacity: 6,
            smu_rate: 0.0,
            lambda: 0.3,
            gamma: 0.2,
            augment: Augment::None,
            shape: ShapeConfig { output_channels: 1, ..ShapeConfig::default() },
            ..DucaConfig::default()
        };
        let mut duca = Duca::new(&spec, k, cfg.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
        for i in 0..6 {
            let image = Array3::from_shape_fn((1, 4, 4), |_| rng.random::<f32>());
            duca.buffer.insert(BufferEntry { image, label: i % k, aux: None });
        }
        let other = build_classifier::<f32>(&spec, k, seed + 99).unwrap();
        duca.sm.blend_from(&other, 0.5).unwrap();
        let x = Array4::from_shape_fn((4, 1, 4, 4), |_| rng.random::<f32>());
        let y = vec![0, 1, 2, 1];

        let mut srng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SAMPLING));
        let idx = duca.buffer.sample_indices(3, &mut srng).unwrap();
        let views: Vec<_> = idx.iter().map(|&i| duca.buffer.entries()[i].image.view().insert_axis(Axis(0))).collect();
        let xb = concatenate(Axis(0), &views).unwrap().mapv(|v| v as f64);
        let yb: Vec<usize> = idx.iter().map(|&i| duca.buffer.entries()[i].label).collect();
        let x_all = concatenate(Axis(0), &[x.mapv(|v| v as f64).view(), xb.view()]).unwrap();
        let s_all = extract_shape(&x_all, &cfg.shape).unwrap();

        let mut wm = to_f64(&duca.wm);
        let mut ibl = to_f64(&duca.ibl);
        let sm = to_f64(&duca.sm);
        let z_wm0 = wm.predict(&x_all);
        let z_ibl0 = ibl.predict(&s_all);
        let z_sm = sm.predict(&xb);
        let before_wm = duca.wm.flat_state();
        let before_ibl = duca.ibl.flat_state();
        duca.train_step(&x, &y).unwrap();
        let after_wm = duca.wm.flat_state();
        let after_ibl = duca.ibl.flat_state();

        let mut max_rel_fd: f64 = 0.0;
        let mut max_update_err: f64 = 0.0;
        let mut coordinates = 0;
        let h = 1e-5;
        let cases = [
            (&mut wm, &x_all, &z_ibl0, cfg.lambda, &before_wm, &after_wm),
            (&mut ibl, &s_all, &z_wm0, cfg.gamma, &before_ibl, &after_ibl),
        ];
        for (net, input, peer, w, before, after) in cases {
            let g = analytic(net, input, y.len(), &y, &yb, peer, &z_sm, w);
            assert_eq!(g.len(), before.len(), "parameter and state traversal differ");
            for (i, &gi) in g.iter().enumerate() {
                let implied = (before[i] - after[i]) as f64 / cfg.lr;
                max_update_err = max_update_err.max((implied - gi).abs() / gi.abs().max(1e-3));
            }
            let loss_at = |net: &Classifier<f64>| oracle_loss(&net.predict(input), &y, &yb, peer, &z_sm, w);
            for _ in 0..per_net {
                let i = rng.random_range(0..g.len());
                let mut plus = net.clone();
                set_coord(&mut plus, i, h);
                let mut minus = net.clone();
                set_coord(&mut minus, i, -h);
                let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let err = if g[i].abs().max(fd.abs()) < 1e-4 { (g[i] - fd).abs() / 1e-4 } else { rel_err(g[i], fd) };
                max_rel_fd = max_rel_fd.max(err);
                coordinates += 1;
            }
        }
        GradCheck { max_rel_fd, max_update_err, coordinates }
    }
}

pub mod degenerate {
    use duca::data::augment::Augment;
    use duca::nn::{build_classifier, ArchKind, ArchitectureSpec, Sgd};
    use duca::shape::{extract_shape, ShapeConfig};
    use duca::trainer::losses::cross_entropy;
    use duca::trainer::{
        derive_seed, Baseline, Duca, DucaConfig, Learner, Method, STREAM_IBL_INIT, STREAM_SAMPLING, STREAM_WM_INIT,
    };
    use ndarray::Array4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn spec() -> ArchitectureSpec {
        ArchitectureSpec { name: ArchKind::SmallCnn, input_shape: (3, 8, 8), width: 4, depth: 2 }
    }

    pub fn config() -> DucaConfig {
        DucaConfig {
            lr: 0.05,
            momentum: 0.9,
            batch_size: 6,
            buffer_capacity: 0,
            augment: Augment::crop_flip(),
            shape: ShapeConfig::default(),
            ..DucaConfig::default()
        }
    }

    pub fn batches(n: usize, seed: u64) -> Vec<(Array4<f32>, Vec<usize>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = Array4::from_shape_fn((6, 3, 8, 8), |_| rng.random::<f32>());
                (x, (0..6).map(|_| rng.random_range(0..4)).collect())
            })
            .collect()
    }

    /// λ = γ = 0 with no buffer against two hand-driven CE learners built
    /// from the same derived seeds; parameters must agree bit for bit
    /// after every step.
    pub fn duca_vs_two_ce_learners(steps: usize, seed: u64) -> Result<(), String> {
        let cfg = DucaConfig { lambda: 0.0, gamma: 0.0, ..config() };
        let mut duca = Duca::new(&spec(), 4, cfg.clone(), seed).map_err(|e| e.to_string())?;
        let mut wm = build_classifier::<f32>(&spec(), 4, derive_seed(seed, STREAM_WM_INIT)).unwrap();
        let mut ibl = build_classifier::<f32>(&spec(), 4, derive_seed(seed, STREAM_IBL_INIT)).unwrap();
        let mut opt_wm = Sgd::new(cfg.sgd());
        let mut opt_ibl = Sgd::new(cfg.sgd());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SAMPLING));
        for (step, (x, y)) in batches(steps, seed + 1).iter().enumerate() {
            duca.train_step(x, y).map_err(|e| e.to_string())?;
            let xc = cfg.augment.apply(x, &mut rng);
            let shapes = extract_shape(&xc, &cfg.shape).unwrap();
            for (net, opt, input) in [(&mut wm, &mut opt_wm, &xc), (&mut ibl, &mut opt_ibl, &shapes)] {
                let z = net.forward_train(input);
                let (_, g) = cross_entropy(z.view(), y).unwrap();
                net.backward(&g);
                opt.step(net);
            }
            if duca.wm.flat_state() != wm.flat_state() {
                return Err(format!("working model diverged from the oracle at step {step}"));
            }
            if duca.ibl.flat_state() != ibl.flat_state() {
                return Err(format!("shape learner diverged from the oracle at step {step}"));
            }
        }
        Ok(())
    }

    /// DER++ (α = β = 0), ER and SGD with an empty buffer are the same
    /// learner; also DER++ (α = β = 0) with a non-empty buffer equals SGD.
    pub fn baselines_coincide(steps: usize, seed: u64) -> Result<(), String> {
        let base = config();
        let zero = DucaConfig { alpha: 0.0, beta: 0.0, ..base.clone() };
        let mk = |m, c: &DucaConfig| Baseline::new(m, &spec(), 4, c.clone(), seed).unwrap();
        let mut learners = [
            ("sgd", mk(Method::Sgd, &base)),
            ("er", mk(Method::Er, &base)),
            ("derpp", mk(Method::Derpp, &zero)),
            ("derpp+buffer", mk(Method::Derpp, &DucaConfig { buffer_capacity: 50, ..zero.clone() })),
        ];
        for (step, (x, y)) in batches(steps, seed + 2).iter().enumerate() {
            for (_, l) in learners.iter_mut() {
                l.train_step(x, y).map_err(|e| e.to_string())?;
            }
            let reference = learners[0].1.net.flat_state();
            for (name, l) in &learners[1..] {
                if l.net.flat_state() != reference {
                    return Err(format!("{name} differs from sgd at step {step}"));
                }
            }
        }
        if learners[3].1.buffer.len() == 0 {
            return Err("DER++ buffer stayed empty".into());
        }
        Ok(())
    }

    /// r = 0 keeps the memory fixed; r = 1, d = 0 makes it track the
    /// working model exactly.
    pub fn smu_extremes(steps: usize, seed: u64) -> Result<(), String> {
        let frozen_cfg = DucaConfig { smu_rate: 0.0, buffer_capacity: 20, ..config() };
        let mut frozen = Duca::new(&spec(), 4, frozen_cfg, seed).unwrap();
        let start = frozen.sm.flat_state();
        let track_cfg = DucaConfig { smu_rate: 1.0, decay: 0.0, buffer_capacity: 20, ..config() };
        let mut track = Duca::new(&spec(), 4, track_cfg, seed).unwrap();
        for (step, (x, y)) in batches(steps, seed + 3).iter().enumerate() {
            frozen.train_step(x, y).map_err(|e| e.to_string())?;
            track.train_step(x, y).map_err(|e| e.to_string())?;
            if frozen.sm.flat_state() != start {
                return Err(format!("memory moved with r = 0 at step {step}"));
            }
            if track.sm.flat_state() != track.wm.flat_state() {
                return Err(format!("memory differs from the working model with r = 1, d = 0 at step {step}"));
            }
        }
        if frozen.blends != 0 || track.blends != steps as u64 {
            return Err(format!("blend counts {} / {}", frozen.blends, track.blends));
        }
        Ok(())
    }
}

pub mod dn4il {
    use std::path::Path;

    use duca::dn4il::{ClassTable, DOMAINS};

    /// Number of empty files for one (domain, class) pair. Deliberately
    /// uneven, with a few nearly empty pairs the balancer must route around.
    pub fn pair_count(di: usize, ci: usize) -> usize {
        if (ci + di) % 37 == 0 {
            12
        } else {
            130 + (ci * 7 + di * 13) % 90
        }
    }

    /// Writes `<root>/<domain>/<class>/<n>.jpg` for every pair and returns the
    /// number of files.
    pub fn write_tree(root: &Path, table: &ClassTable) -> usize {
        let mut n = 0;
        for (di, d) in DOMAINS.iter().enumerate() {
            for (ci, c) in table.class_names().iter().enumerate() {
                let dir = root.join(d).join(c);
                std::fs::create_dir_all(&dir).unwrap();
                for k in 0..pair_count(di, ci) {
                    std::fs::File::create(dir.join(format!("{d}_{ci:03}_{k:06}.jpg"))).unwrap();
                    n += 1;
                }
            }
        }
        n
    }
}
