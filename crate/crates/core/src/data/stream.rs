//! Task streams for the four incremental settings.
//!
//! * class / task incremental: contiguous class groups of a base dataset
//! * GCIL: tasks with a random, possibly recurring class subset and
//!   uniform or long-tailed per-class sample counts
//! * domain incremental: one task per domain over a shared label space
//!   (manifest-backed image folders, or rotated digits)

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array4, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loaders::load_image;
use super::manifest::{DomainManifest, Split};
use super::{ImageSet, LabeledDataset};
use crate::error::{Error, Result};
use crate::imgproc::rotate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    ClassIl,
    TaskIl,
    DomainIl,
    Gcil,
}

#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub task_id: usize,
    /// Sorted class ids this task draws from.
    pub classes: Vec<usize>,
    pub train: ImageSet,
    pub test: ImageSet,
}

#[derive(Debug, Clone)]
pub struct TaskStream {
    pub name: String,
    pub setting: Setting,
    pub num_classes: usize,
    pub tasks: Vec<TaskDataset>,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn class_lists(&self) -> Vec<Vec<usize>> {
        self.tasks.iter().map(|t| t.classes.clone()).collect()
    }

    pub fn image_shape(&self) -> (usize, usize, usize) {
        self.tasks.first().map(|t| t.train.image_shape()).unwrap_or((0, 0, 0))
    }

    /// All training data of the stream as one set (the joint upper bound).
    pub fn joint_train(&self) -> Result<ImageSet> {
        let parts: Vec<&ImageSet> = self.tasks.iter().map(|t| &t.train).collect();
        ImageSet::concat(&parts)
    }

    /// Same tasks evaluated with the task id available at inference.
    pub fn as_task_il(mut self) -> Self {
        if self.setting == Setting::ClassIl {
            self.setting = Setting::TaskIl;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::structural("stream has no tasks"));
        }
        let shape = self.image_shape();
        for t in &self.tasks {
            if t.train.image_shape() != shape || t.test.image_shape() != shape {
                return Err(Error::structural(format!("task {} image shape differs", t.task_id)));
            }
            if t.classes.iter().any(|&c| c >= self.num_classes) {
                return Err(Error::structural(format!("task {} lists a class outside 0..{}", t.task_id, self.num_classes)));
            }
            for set in [&t.train, &t.test] {
                if let Some(l) = set.labels.iter().find(|l| t.classes.binary_search(l).is_err()) {
                    return Err(Error::structural(format!("task {} holds label {l} outside its class list", t.task_id)));
                }
            }
        }
        match self.setting {
            Setting::ClassIl | Setting::TaskIl => {
                let mut seen = BTreeSet::new();
                for t in &self.tasks {
                    for &c in &t.classes {
                        if !seen.insert(c) {
                            return Err(Error::structural(format!("class {c} appears in more than one task")));
                        }
                    }
                }
                if seen.len() != self.num_classes {
                    return Err(Error::structural("task classes do not cover the class universe"));
                }
            }
            Setting::DomainIl => {
                let first = &self.tasks[0].classes;
                if self.tasks.iter().any(|t| &t.classes != first) {
                    return Err(Error::structural("domain tasks must share one class set"));
                }
            }
            Setting::Gcil => {}
        }
        Ok(())
    }
}

/// Splits the classes into `num_tasks` contiguous equal groups, in natural
/// label order or after a seeded shuffle of the class order.
pub fn build_sequential(ds: &LabeledDataset, num_tasks: usize, shuffle_seed: Option<u64>) -> Result<TaskStream> {
    let k = ds.num_classes;
    if num_tasks == 0 || k % num_tasks != 0 {
        return Err(Error::config(format!("{k} classes cannot be split into {num_tasks} equal tasks")));
    }
    let mut order: Vec<usize> = (0..k).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let per = k / num_tasks;
    let tasks = order
        .chunks(per)
        .enumerate()
        .map(|(task_id, group)| {
            let mut classes = group.to_vec();
            classes.sort_unstable();
            TaskDataset {
                task_id,
                train: ds.train.filter_classes(&classes),
                test: ds.test.filter_classes(&classes),
                classes,
            }
        })
        .collect();
    let stream = TaskStream { name: format!("seq-{}", ds.name), setting: Setting::ClassIl, num_classes: k, tasks };
    stream.validate()?;
    Ok(stream)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GcilVariant {
    Uniform,
    Longtail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GcilConfig {
    pub num_tasks: usize,
    pub min_classes: usize,
    pub max_classes: usize,
    pub samples_per_task: usize,
    pub variant: GcilVariant,
    /// Longtail only: frequency ratio between the most and least favoured
    /// class of the (seeded) global class ranking.
    pub longtail_ratio: f64,
}

impl Default for GcilConfig {
    fn default() -> Self {
        Self {
            num_tasks: 20,
            min_classes: 10,
            max_classes: 50,
            samples_per_task: 1000,
            variant: GcilVariant::Uniform,
            longtail_ratio: 10.0,
        }
    }
}

impl GcilConfig {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.num_tasks == 0 {
            return Err(Error::config("GCIL needs at least one task"));
        }
        if self.min_classes == 0 || self.min_classes > self.max_classes {
            return Err(Error::config("GCIL requires 1 <= min_classes <= max_classes"));
        }
        if self.max_classes > num_classes {
            return Err(Error::config(format!(
                "max_classes {} exceeds the {num_classes} available classes",
                self.max_classes
            )));
        }
        if self.samples_per_task < self.max_classes {
            return Err(Error::config("samples_per_task must be at least max_classes"));
        }
        if self.variant == GcilVariant::Longtail && !(self.longtail_ratio >= 1.0 && self.longtail_ratio.is_finite()) {
            return Err(Error::config("longtail_ratio must be a finite value >= 1"));
        }
        Ok(())
    }
}

/// Task sizes in `[min, max]` whose total is a multiple of `k` whenever the
/// bounds allow it, so consecutive class permutations are used up exactly.
fn gcil_task_sizes(cfg: &GcilConfig, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut sizes: Vec<usize> = (0..cfg.num_tasks).map(|_| rng.random_range(cfg.min_classes..=cfg.max_classes)).collect();
    let total: usize = sizes.iter().sum();
    if total < k {
        return sizes;
    }
    let down = total % k;
    let up = (k - down) % k;
    let (mut need, step_down) = if down <= up { (down, true) } else { (up, false) };
    let fits = |s: usize| if step_down { s > cfg.min_classes } else { s < cfg.max_classes };
    if sizes.iter().map(|&s| if step_down { s - cfg.min_classes } else { cfg.max_classes - s }).sum::<usize>() < need {
        return sizes;
    }
    let mut i = 0;
    while need > 0 {
        if fits(sizes[i]) {
            if step_down {
                sizes[i] -= 1;
            } else {
                sizes[i] += 1;
            }
            need -= 1;
        }
        i = (i + 1) % sizes.len();
    }
    sizes
}

/// Draws the class subsets for the uniform variant from a sequence of
/// concatenated permutations. A class repeated within one task is swapped
/// with a later element, which keeps the per-class appearance counts.
fn gcil_uniform_subsets(sizes: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let total: usize = sizes.iter().sum();
    let mut seq = Vec::with_capacity(total + k);
    while seq.len() < total {
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(rng);
        seq.extend(perm);
    }
    let mut pos = 0;
    let mut subsets = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut chosen = BTreeSet::new();
        for j in pos..pos + n {
            if chosen.contains(&seq[j]) {
                let swap = (j + 1..seq.len()).find(|&q| !chosen.contains(&seq[q]));
                if let Some(q) = swap {
                    seq.swap(j, q);
                }
            }
            chosen.insert(seq[j]);
        }
        pos += n;
        subsets.push(chosen.into_iter().collect());
    }
    subsets
}

/// Largest-remainder apportionment of `total` by `weights`, at least 1 each.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let n = weights.len();
    let spare = total - n;
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * spare as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rest = spare - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    for &i in &order {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts.iter().map(|c| c + 1).collect()
}

pub fn build_gcil(ds: &LabeledDataset, cfg: &GcilConfig, seed: u64) -> Result<TaskStream> {
    let k = ds.num_classes;
    cfg.validate(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = gcil_task_sizes(cfg, k, &mut rng);

    // per-class pools, consumed without replacement across the stream
    let mut pools: Vec<Vec<usize>> = (0..k)
        .map(|c| {
            let mut idx = ds.train.indices_of_class(c);
            idx.shuffle(&mut rng);
            idx
        })
        .collect();

    let (subsets, counts): (Vec<Vec<usize>>, Vec<Vec<usize>>) = match cfg.variant {
        GcilVariant::Uniform => {
            let per_class = cfg.samples_per_task / cfg.max_classes;
            let subsets = gcil_uniform_subsets(&sizes, k, &mut rng);
            let counts = subsets.iter().map(|s| vec![per_class; s.len()]).collect();
            (subsets, counts)
        }
        GcilVariant::Longtail => {
            let mut ranking: Vec<usize> = (0..k).collect();
            ranking.shuffle(&mut rng);
            let mut rank = vec![0usize; k];
            for (r, &c) in ranking.iter().enumerate() {
                rank[c] = r;
            }
            let denom = (k - 1).max(1) as f64;
            let mut subsets = Vec::new();
            let mut counts = Vec::new();
            for &n in &sizes {
                let mut all: Vec<usize> = (0..k).collect();
                all.shuffle(&mut rng);
                let mut subset = all[..n].to_vec();
                subset.sort_unstable();
                let weights: Vec<f64> =
                    subset.iter().map(|&c| cfg.longtail_ratio.powf(-(rank[c] as f64) / denom)).collect();
                counts.push(apportion(cfg.samples_per_task, &weights));
                subsets.push(subset);
            }
            (subsets, counts)
        }
    };

    let mut tasks = Vec::with_capacity(subsets.len());
    for (task_id, (classes, counts)) in subsets.into_iter().zip(counts).enumerate() {
        let mut picked = Vec::new();
        for (&c, &n) in classes.iter().zip(&counts) {
            let pool = &mut pools[c];
            if pool.len() < n {
                return Err(Error::config(format!(
                    "GCIL task {task_id} needs {n} samples of class {c}, only {} left",
                    pool.len()
                )));
            }
            picked.extend(pool.drain(pool.len() - n..));
        }
        picked.sort_unstable();
        tasks.push(TaskDataset {
            task_id,
            train: ds.train.select(&picked),
            test: ds.test.filter_classes(&classes),
            classes,
        });
    }
    let stream = TaskStream { name: format!("gcil-{}", ds.name), setting: Setting::Gcil, num_classes: k, tasks };
    stream.validate()?;
    Ok(stream)
}

#[derive(Debug, Clone)]
pub struct Domain {
    pub name: String,
    pub train: ImageSet,
    pub test: ImageSet,
}

/// In-memory counterpart of a domain manifest: named domains over one
/// label space.
#[derive(Debug, Clone)]
pub struct DomainSet {
    pub name: String,
    pub num_classes: usize,
    pub domains: Vec<Domain>,
}

impl DomainSet {
    /// Reads every image listed in the manifest, resized to `shape`.
    /// Class ids must lie in `0..num_classes`.
    pub fn from_manifest(
        manifest: &DomainManifest,
        root: &Path,
        shape: (usize, usize, usize),
        num_classes: usize,
    ) -> Result<Self> {
        manifest.check_shared_classes()?;
        if let Some(r) = manifest.rows.iter().find(|r| r.class >= num_classes) {
            return Err(Error::Manifest(format!("row `{}` has class {} outside 0..{num_classes}", r.path, r.class)));
        }
        let mut domains = Vec::new();
        for name in manifest.domains() {
            let load = |split: Split| -> Result<ImageSet> {
                let rows: Vec<_> = manifest.rows.iter().filter(|r| r.domain == name && r.split == split).collect();
                let mut images = Array4::<f32>::zeros((rows.len(), shape.0, shape.1, shape.2));
                for (i, r) in rows.iter().enumerate() {
                    images.index_axis_mut(Axis(0), i).assign(&load_image(&root.join(&r.path), shape)?);
                }
                ImageSet::new(images, rows.iter().map(|r| r.class).collect())
            };
            let train = load(Split::Train)?;
            let test = load(Split::Test)?;
            domains.push(Domain { name, train, test });
        }
        Ok(Self { name: "manifest".into(), num_classes, domains })
    }
}

/// One task per domain, in domain order, over the shared class set.
pub fn build_domain_stream(set: &DomainSet) -> Result<TaskStream> {
    let class_set = |d: &Domain| -> BTreeSet<usize> { d.train.labels.iter().chain(&d.test.labels).copied().collect() };
    let first = set.domains.first().ok_or_else(|| Error::Manifest("no domains".into()))?;
    let shared = class_set(first);
    for d in &set.domains[1..] {
        if class_set(d) != shared {
            return Err(Error::Manifest(format!("domain `{}` class set differs from `{}`", d.name, first.name)));
        }
    }
    let classes: Vec<usize> = shared.into_iter().collect();
    let tasks = set
        .domains
        .iter()
        .enumerate()
        .map(|(task_id, d)| TaskDataset { task_id, classes: classes.clone(), train: d.train.clone(), test: d.test.clone() })
        .collect();
    let stream = TaskStream { name: set.name.clone(), setting: Setting::DomainIl, num_classes: set.num_classes, tasks };
    stream.validate().map_err(|e| Error::Manifest(e.to_string()))?;
    Ok(stream)
}

/// `n` angles evenly spaced over `[0, span)` degrees.
pub fn rotation_angles(n: usize, span: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * span / n as f64).collect()
}

fn rotate_set(set: &ImageSet, degrees: f64) -> ImageSet {
    let mut images = set.images.clone();
    if degrees.rem_euclid(360.0) != 0.0 {
        for mut img in images.outer_iter_mut() {
            for mut plane in img.outer_iter_mut() {
                let rotated = rotate(&plane.to_owned(), degrees);
                plane.assign(&rotated);
            }
        }
    }
    ImageSet { images, labels: set.labels.clone() }
}

/// One domain per angle, each holding the full train and test sets rotated
/// counter-clockwise by that angle.
pub fn rotate_mnist(ds: &LabeledDataset, angles: &[f64]) -> Result<DomainSet> {
    if angles.is_empty() {
        return Err(Error::config("at least one rotation angle is required"));
    }
    let domains = angles
        .iter()
        .map(|&a| Domain { name: format!("rot{a}"), train: rotate_set(&ds.train, a), test: rotate_set(&ds.test, a) })
        .collect();
    Ok(DomainSet { name: format!("rotated-{}", ds.name), num_classes: ds.num_classes, domains })
}
