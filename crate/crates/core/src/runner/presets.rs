//! Named experiment presets: `<benchmark>-<method>[-b<buffer>]`, e.g.
//! `seq-cifar10-duca-b200`, `gcil-cifar100-derpp-b500`, `dn4il-joint`.

use super::{ArchConfig, DatasetSpec, ExperimentConfig, StreamSpec};
use crate::data::augment::Augment;
use crate::data::stream::{GcilConfig, Setting};
use crate::nn::ArchKind;
use crate::shape::ShapeConfig;
use crate::trainer::{DucaConfig, Method};

const BENCHMARKS: [&str; 5] = ["seq-cifar10", "seq-cifar100", "gcil-cifar100", "dn4il", "rmnist"];
const BUFFERS: [usize; 2] = [200, 500];

/// DUCA (r, λ, γ) per benchmark and buffer size.
fn duca_params(bench: &str, buffer: usize) -> (f64, f64, f64) {
    match (bench, buffer) {
        ("seq-cifar10", _) => (0.2, 0.1, 0.1),
        ("seq-cifar100", 200) => (0.1, 0.1, 0.01),
        ("seq-cifar100", _) => (0.06, 0.1, 0.01),
        ("gcil-cifar100", _) => (0.09, 0.1, 0.01),
        ("dn4il", 200) => (0.06, 0.1, 0.01),
        ("dn4il", _) => (0.08, 0.1, 0.01),
        // MNIST-scale MLP; chosen on the desk-scale rotated stream.
        _ => (RMNIST_SMU_RATE, 0.1, 0.1),
    }
}

pub(crate) const RMNIST_SMU_RATE: f64 = 0.5;

/// DER++ (α, β) per benchmark and buffer size.
fn derpp_params(bench: &str, buffer: usize) -> (f64, f64) {
    match (bench, buffer) {
        ("gcil-cifar100", 200) => (0.5, 0.1),
        ("gcil-cifar100", _) => (0.2, 0.1),
        ("dn4il", 200) => (0.1, 1.0),
        ("dn4il", _) => (0.5, 0.1),
        _ => (0.1, 0.5),
    }
}

fn base(bench: &str) -> Option<(DatasetSpec, StreamSpec, ArchConfig)> {
    let stream = |setting, num_tasks| StreamSpec {
        setting,
        num_tasks,
        shuffle_seed: None,
        gcil: GcilConfig::default(),
        gcil_seed: 0,
        rotation_span: 180.0,
        train_per_class: None,
    };
    let resnet = ArchConfig { name: ArchKind::Resnet18, width: None, depth: None };
    Some(match bench {
        "seq-cifar10" => (DatasetSpec::Cifar10 { path: super::default_cifar10() }, stream(Setting::ClassIl, Some(5)), resnet),
        "seq-cifar100" => {
            (DatasetSpec::Cifar100 { path: super::default_cifar100() }, stream(Setting::ClassIl, Some(5)), resnet)
        }
        "gcil-cifar100" => (DatasetSpec::Cifar100 { path: super::default_cifar100() }, stream(Setting::Gcil, None), resnet),
        "dn4il" => (
            DatasetSpec::Manifest {
                path: "dn4il/manifest.tsv".into(),
                images: Some("domainnet".into()),
                shape: (3, 64, 64),
                num_classes: 100,
            },
            stream(Setting::DomainIl, None),
            resnet,
        ),
        "rmnist" => (
            DatasetSpec::Mnist { path: super::default_mnist() },
            stream(Setting::DomainIl, Some(20)),
            ArchConfig { name: ArchKind::Mlp, width: None, depth: None },
        ),
        _ => return None,
    })
}

/// Resolves a preset name.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let bench = BENCHMARKS.iter().find(|b| name.strip_prefix(**b).is_some_and(|r| r.starts_with('-')))?;
    let rest = &name[bench.len() + 1..];
    let (method, buffer) = match rest.split_once("-b") {
        Some((m, b)) => (m.parse::<Method>().ok()?, Some(b.parse::<usize>().ok()?)),
        None => (rest.parse::<Method>().ok()?, None),
    };
    let buffered = matches!(method, Method::Duca | Method::Er | Method::Derpp);
    if buffered != buffer.is_some() || buffer.is_some_and(|b| !BUFFERS.contains(&b)) {
        return None;
    }
    let (dataset, stream, arch) = base(bench)?;
    let mut train = DucaConfig { buffer_capacity: buffer.unwrap_or(0), ..DucaConfig::default() };
    match method {
        Method::Duca => {
            let (r, l, g) = duca_params(bench, buffer?);
            (train.smu_rate, train.lambda, train.gamma) = (r, l, g);
        }
        Method::Er => train.lr = 0.1,
        Method::Derpp => (train.alpha, train.beta) = derpp_params(bench, buffer?),
        Method::Sgd | Method::Joint => {}
    }
    if *bench == "rmnist" {
        train.epochs_per_task = 1;
        train.augment = Augment::None;
        train.shape = ShapeConfig { output_channels: 1, ..ShapeConfig::default() };
    }
    Some(ExperimentConfig {
        name: name.to_string(),
        method,
        seeds: super::default_seeds(),
        data_root: None,
        output_dir: super::default_output(),
        dataset,
        stream,
        arch,
        train,
        save_checkpoints: false,
    })
}

pub fn preset_names() -> Vec<String> {
    let mut out = Vec::new();
    for bench in BENCHMARKS {
        for m in ["duca", "er", "derpp"] {
            for b in BUFFERS {
                out.push(format!("{bench}-{m}-b{b}"));
            }
        }
        out.push(format!("{bench}-sgd"));
        out.push(format!("{bench}-joint"));
    }
    out
}
