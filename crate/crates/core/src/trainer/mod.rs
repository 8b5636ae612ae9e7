//! Learners and the task-stream training loop.
//!
//! [`Duca`] trains a working model on RGB batches and a shape learner on
//! edge-magnitude images of the same views. Both share a supervised term on
//! current and replayed samples, a mutual logit-agreement term, and a
//! distillation term toward a memory network that only ever moves by
//! stochastic EMA blends of the working model. The memory network is the
//! one evaluated.
//!
//! Baselines ([`Sgd`](Method::Sgd), [`Er`](Method::Er), [`DerPP`](Method::Derpp),
//! joint training) share the same harness.

pub mod losses;

use ndarray::{concatenate, s, Array2, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::{BufferEntry, ReservoirBuffer};
use crate::data::augment::Augment;
use crate::data::stream::{Setting, TaskStream};
use crate::error::{Error, Result};
use crate::eval::{evaluate_stream, AccuracyMatrix};
use crate::nn::{build_classifier, ArchitectureSpec, Classifier, Sgd, SgdConfig};
use crate::shape::{extract_shape, ShapeConfig};

use losses::{cross_entropy, mse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Duca,
    Er,
    Derpp,
    Sgd,
    Joint,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "duca" => Ok(Method::Duca),
            "er" => Ok(Method::Er),
            "derpp" | "der++" => Ok(Method::Derpp),
            "sgd" => Ok(Method::Sgd),
            "joint" => Ok(Method::Joint),
            other => Err(Error::config(format!("unknown method `{other}`"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Duca => "duca",
            Method::Er => "er",
            Method::Derpp => "derpp",
            Method::Sgd => "sgd",
            Method::Joint => "joint",
        })
    }
}

/// How the logit-agreement gradient is routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BiksMode {
    /// The working model receives `λ·∂/∂z_wm`, the shape learner `γ·∂/∂z_ibl`
    /// (same as treating the other network as a constant teacher).
    #[default]
    Split,
    /// Both networks receive the gradient of `(λ+γ)·MSE`.
    Summed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DucaConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Replay batch size; defaults to `batch_size`.
    pub buffer_batch_size: Option<usize>,
    pub epochs_per_task: usize,
    pub buffer_capacity: usize,
    /// Probability `r` of an EMA blend per step.
    pub smu_rate: f64,
    /// EMA decay `d`.
    pub decay: f64,
    /// Use `min(d, 1 − 1/(n+2))` for the n-th blend so an early memory is not
    /// dominated by its random initialization.
    pub ema_warmup: bool,
    pub lambda: f64,
    pub gamma: f64,
    pub biks_mode: BiksMode,
    pub augment: Augment,
    pub shape: ShapeConfig,
    /// DER++ logit-replay weight.
    pub alpha: f64,
    /// DER++ label-replay weight.
    pub beta: f64,
}

impl Default for DucaConfig {
    fn default() -> Self {
        Self {
            lr: 0.03,
            momentum: 0.0,
            weight_decay: 0.0,
            batch_size: 32,
            buffer_batch_size: None,
            epochs_per_task: 50,
            buffer_capacity: 200,
            smu_rate: 0.2,
            decay: 0.999,
            ema_warmup: false,
            lambda: 0.1,
            gamma: 0.1,
            biks_mode: BiksMode::Split,
            augment: Augment::crop_flip(),
            shape: ShapeConfig::default(),
            alpha: 0.1,
            beta: 0.5,
        }
    }
}

impl DucaConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("lr must be positive"));
        }
        if !finite_nonneg(self.momentum) || self.momentum >= 1.0 || !finite_nonneg(self.weight_decay) {
            return Err(Error::config("momentum must be in [0, 1) and weight_decay non-negative"));
        }
        if self.batch_size == 0 || self.buffer_batch_size == Some(0) {
            return Err(Error::config("batch sizes must be positive"));
        }
        if self.epochs_per_task == 0 {
            return Err(Error::config("epochs_per_task must be positive"));
        }
        if !(0.0..=1.0).contains(&self.smu_rate) || !(0.0..=1.0).contains(&self.decay) {
            return Err(Error::config("smu_rate and decay must lie in [0, 1]"));
        }
        for (name, v) in [("lambda", self.lambda), ("gamma", self.gamma), ("alpha", self.alpha), ("beta", self.beta)] {
            if !finite_nonneg(v) {
                return Err(Error::config(format!("{name} must be finite and non-negative")));
            }
        }
        self.shape.validate()
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig { lr: self.lr, momentum: self.momentum, weight_decay: self.weight_decay }
    }

    pub fn replay_batch(&self) -> usize {
        self.buffer_batch_size.unwrap_or(self.batch_size)
    }
}

/// Per-step loss values. Replay-dependent terms are `None` while the buffer
/// is empty. Baselines fill `sup_wm`/`total_wm` (plus their replay terms).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub sup_wm: f64,
    pub sup_ibl: f64,
    pub biks: f64,
    pub ks_wm: Option<f64>,
    pub ks_ibl: Option<f64>,
    pub total_wm: f64,
    pub total_ibl: f64,
    /// DER++: MSE to stored logits.
    pub logit_replay: Option<f64>,
    /// DER++: CE on the second replay batch.
    pub label_replay: Option<f64>,
}

impl LossBreakdown {
    fn values(&self) -> [f64; 7] {
        [self.sup_wm, self.sup_ibl, self.biks, self.ks_wm.unwrap_or(0.0), self.ks_ibl.unwrap_or(0.0), self.total_wm, self.total_ibl]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
            && self.logit_replay.is_none_or(f64::is_finite)
            && self.label_replay.is_none_or(f64::is_finite)
    }

    /// Largest deviation from `total = sup + w·(biks + ks)` for both networks.
    pub fn identity_error(&self, lambda: f64, gamma: f64) -> f64 {
        let wm = self.sup_wm + lambda * (self.biks + self.ks_wm.unwrap_or(0.0));
        let ibl = self.sup_ibl + gamma * (self.biks + self.ks_ibl.unwrap_or(0.0));
        (self.total_wm - wm).abs().max((self.total_ibl - ibl).abs())
    }

    /// Element-wise mean; optional terms average over the steps that have them.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let n = items.len().max(1) as f64;
        let avg = |f: &dyn Fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        let avg_opt = |f: &dyn Fn(&LossBreakdown) -> Option<f64>| {
            let v: Vec<f64> = items.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        LossBreakdown {
            sup_wm: avg(&|l| l.sup_wm),
            sup_ibl: avg(&|l| l.sup_ibl),
            biks: avg(&|l| l.biks),
            ks_wm: avg_opt(&|l| l.ks_wm),
            ks_ibl: avg_opt(&|l| l.ks_ibl),
            total_wm: avg(&|l| l.total_wm),
            total_ibl: avg(&|l| l.total_ibl),
            logit_replay: avg_opt(&|l| l.logit_replay),
            label_replay: avg_opt(&|l| l.label_replay),
        }
    }
}

/// Independent generator streams derived from one run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const STREAM_WM_INIT: u64 = 1;
pub const STREAM_IBL_INIT: u64 = 2;
pub const STREAM_SAMPLING: u64 = 3;
pub const STREAM_SMU: u64 = 4;
pub const STREAM_RESERVOIR: u64 = 5;
pub const STREAM_DATA: u64 = 6;

/// Something that learns from a stream one mini-batch at a time.
pub trait Learner {
    fn method(&self) -> Method;

    /// Called before the first step of each task.
    fn begin_task(&mut self, _task: usize) {}

    /// One optimization step on a raw (un-augmented) current batch.
    fn train_step(&mut self, x: &Array4<f32>, y: &[usize]) -> Result<LossBreakdown>;

    /// The network used for inference.
    fn eval_net(&self) -> &Classifier;

    fn buffer(&self) -> Option<&ReservoirBuffer<BufferEntry>> {
        None
    }
}

fn gather(buffer: &ReservoirBuffer<BufferEntry>, idx: &[usize]) -> (Array4<f32>, Vec<usize>) {
    let entries = buffer.entries();
    let views: Vec<_> = idx.iter().map(|&i| entries[i].image.view().insert_axis(Axis(0))).collect();
    let x = concatenate(Axis(0), &views).expect("buffer images share a shape");
    (x, idx.iter().map(|&i| entries[i].label).collect())
}

fn cat(parts: &[&Array4<f32>]) -> Array4<f32> {
    if parts.len() == 1 {
        return parts[0].clone();
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(0), &views).expect("batch shapes agree")
}

fn divergence(task: usize, step: usize, what: &str, loss: &LossBreakdown) -> Error {
    Error::Divergence { task, step, detail: format!("non-finite {what} loss: {loss:?}") }
}

/// Position inside the stream, for diagnostics.
#[derive(Debug, Clone, Copy, Default)]
struct Position {
    task: usize,
    step: usize,
}

/// Working model, EMA memory and shape learner with their optimizers,
/// replay buffer and generators.
#[derive(Debug, Clone)]
pub struct Duca {
    pub config: DucaConfig,
    pub wm: Classifier,
    pub sm: Classifier,
    pub ibl: Classifier,
    opt_wm: Sgd<f32>,
    opt_ibl: Sgd<f32>,
    pub buffer: ReservoirBuffer<BufferEntry>,
    rng: ChaCha8Rng,
    smu_rng: ChaCha8Rng,
    pub blends: u64,
    pos: Position,
}

impl Duca {
    pub fn new(spec: &ArchitectureSpec, num_classes: usize, config: DucaConfig, seed: u64) -> Result<Self> {
        let wm = build_classifier(spec, num_classes, derive_seed(seed, STREAM_WM_INIT))?;
        let ibl = build_classifier(spec, num_classes, derive_seed(seed, STREAM_IBL_INIT))?;
        Self::from_parts(wm, ibl, config, seed)
    }

    /// Starts from given networks; the memory begins as a copy of `wm`.
    pub fn from_parts(wm: Classifier, ibl: Classifier, config: DucaConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut sm = ibl.clone();
        sm.copy_from(&wm)?;
        let (c, _, _) = wm.spec().input_shape;
        if c != 1 && c != 3 {
            return Err(Error::config("the shape learner needs 1- or 3-channel inputs"));
        }
        if config.shape.output_channels != c {
            return Err(Error::config(format!(
                "shape output_channels ({}) must match the network input channels ({c})",
                config.shape.output_channels
            )));
        }
        Ok(Self {
            opt_wm: Sgd::new(config.sgd()),
            opt_ibl: Sgd::new(config.sgd()),
            buffer: ReservoirBuffer::new(config.buffer_capacity, derive_seed(seed, STREAM_RESERVOIR)),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SAMPLING)),
            smu_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SMU)),
            config,
            wm,
            sm,
            ibl,
            blends: 0,
            pos: Position::default(),
        })
    }

    fn smu(&mut self) -> Result<bool> {
        let s: f64 = self.smu_rng.random();
        if s < self.config.smu_rate {
            let d = if self.config.ema_warmup {
                self.config.decay.min(1.0 - 1.0 / (self.blends as f64 + 2.0))
            } else {
                self.config.decay
            };
            self.sm.blend_from(&self.wm, d as f32)?;
            self.blends += 1;
            return Ok(true);
        }
        Ok(false)
    }
}

impl Learner for Duca {
    fn method(&self) -> Method {
        Method::Duca
    }

    fn begin_task(&mut self, task: usize) {
        self.pos.task = task;
    }

    fn train_step(&mut self, x: &Array4<f32>, y: &[usize]) -> Result<LossBreakdown> {
        let cfg = &self.config;
        let nc = y.len();
        let xc = cfg.augment.apply(x, &mut self.rng);
        let replay = if self.buffer.is_empty() {
            None
        } else {
            let idx = self.buffer.sample_indices(cfg.replay_batch(), &mut self.rng)?;
            let (xb, yb) = gather(&self.buffer, &idx);
            Some((cfg.augment.apply(&xb, &mut self.rng), yb))
        };

        let x_all = match &replay {
            Some((xb, _)) => cat(&[&xc, xb]),
            None => xc,
        };
        let s_all = extract_shape(&x_all, &cfg.shape)?;
        let z_wm = self.wm.forward_train(&x_all);
        let z_ibl = self.ibl.forward_train(&s_all);
        let k = z_wm.ncols();

        let mut g_wm = Array2::<f32>::zeros(z_wm.raw_dim());
        let mut g_ibl = Array2::<f32>::zeros(z_ibl.raw_dim());
        let mut loss = LossBreakdown::default();

        // supervised: CE on current rows, CE on replay rows
        let (l, g) = cross_entropy(z_wm.slice(s![..nc, ..]), y)?;
        loss.sup_wm += l as f64;
        g_wm.slice_mut(s![..nc, ..]).assign(&g);
        let (l, g) = cross_entropy(z_ibl.slice(s![..nc, ..]), y)?;
        loss.sup_ibl += l as f64;
        g_ibl.slice_mut(s![..nc, ..]).assign(&g);
        if let Some((_, yb)) = &replay {
            let (l, g) = cross_entropy(z_wm.slice(s![nc.., ..]), yb)?;
            loss.sup_wm += l as f64;
            g_wm.slice_mut(s![nc.., ..]).assign(&g);
            let (l, g) = cross_entropy(z_ibl.slice(s![nc.., ..]), yb)?;
            loss.sup_ibl += l as f64;
            g_ibl.slice_mut(s![nc.., ..]).assign(&g);
        }

        // agreement between RGB and shape logits over all rows
        let (biks, g_b) = mse(z_wm.view(), z_ibl.view())?;
        loss.biks = biks as f64;
        let (w_to_wm, w_to_ibl) = match cfg.biks_mode {
            BiksMode::Split => (cfg.lambda, cfg.gamma),
            BiksMode::Summed => (cfg.lambda + cfg.gamma, cfg.lambda + cfg.gamma),
        };
        if w_to_wm != 0.0 {
            g_wm.scaled_add(w_to_wm as f32, &g_b);
        }
        if w_to_ibl != 0.0 {
            g_ibl.scaled_add(-(w_to_ibl as f32), &g_b);
        }

        // distillation toward the memory on replay rows
        if let Some((xb, _)) = &replay {
            let z_sm = self.sm.predict(xb);
            let (l, g) = mse(z_wm.slice(s![nc.., ..]), z_sm.view())?;
            loss.ks_wm = Some(l as f64);
            if cfg.lambda != 0.0 {
                g_wm.slice_mut(s![nc.., ..]).scaled_add(cfg.lambda as f32, &g);
            }
            let (l, g) = mse(z_ibl.slice(s![nc.., ..]), z_sm.view())?;
            loss.ks_ibl = Some(l as f64);
            if cfg.gamma != 0.0 {
                g_ibl.slice_mut(s![nc.., ..]).scaled_add(cfg.gamma as f32, &g);
            }
        }
        loss.total_wm = loss.sup_wm + cfg.lambda * (loss.biks + loss.ks_wm.unwrap_or(0.0));
        loss.total_ibl = loss.sup_ibl + cfg.gamma * (loss.biks + loss.ks_ibl.unwrap_or(0.0));
        debug_assert_eq!(g_wm.ncols(), k);
        if !loss.is_finite() || g_wm.iter().chain(g_ibl.iter()).any(|v| !v.is_finite()) {
            return Err(divergence(self.pos.task, self.pos.step, "DUCA", &loss));
        }

        self.wm.backward(&g_wm);
        self.ibl.backward(&g_ibl);
        self.opt_wm.step(&mut self.wm);
        self.opt_ibl.step(&mut self.ibl);
        self.smu()?;
        for (img, &label) in x.outer_iter().zip(y) {
            self.buffer.insert(BufferEntry { image: img.to_owned(), label, aux: None });
        }
        self.pos.step += 1;
        Ok(loss)
    }

    fn eval_net(&self) -> &Classifier {
        &self.sm
    }

    fn buffer(&self) -> Option<&ReservoirBuffer<BufferEntry>> {
        Some(&self.buffer)
    }
}

/// Single-network learner: plain SGD, experience replay, or DER++.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub method: Method,
    pub config: DucaConfig,
    pub net: Classifier,
    opt: Sgd<f32>,
    pub buffer: ReservoirBuffer<BufferEntry>,
    rng: ChaCha8Rng,
    pos: Position,
}

impl Baseline {
    pub fn new(method: Method, spec: &ArchitectureSpec, num_classes: usize, config: DucaConfig, seed: u64) -> Result<Self> {
        let net = build_classifier(spec, num_classes, derive_seed(seed, STREAM_WM_INIT))?;
        Self::from_net(method, net, config, seed)
    }

    pub fn from_net(method: Method, net: Classifier, config: DucaConfig, seed: u64) -> Result<Self> {
        if method == Method::Duca {
            return Err(Error::config("use Duca for the dual-network learner"));
        }
        config.validate()?;
        let capacity = if matches!(method, Method::Er | Method::Derpp) { config.buffer_capacity } else { 0 };
        Ok(Self {
            method,
            opt: Sgd::new(config.sgd()),
            buffer: ReservoirBuffer::new(capacity, derive_seed(seed, STREAM_RESERVOIR)),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SAMPLING)),
            config,
            net,
            pos: Position::default(),
        })
    }

    fn sample_replay(&mut self) -> Result<Option<(Array4<f32>, Vec<usize>, Vec<usize>)>> {
        if self.buffer.is_empty() {
            return Ok(None);
        }
        let idx = self.buffer.sample_indices(self.config.replay_batch(), &mut self.rng)?;
        let (x, y) = gather(&self.buffer, &idx);
        Ok(Some((self.config.augment.apply(&x, &mut self.rng), y, idx)))
    }
}

impl Learner for Baseline {
    fn method(&self) -> Method {
        self.method
    }

    fn begin_task(&mut self, task: usize) {
        self.pos.task = task;
    }

    fn train_step(&mut self, x: &Array4<f32>, y: &[usize]) -> Result<LossBreakdown> {
        let nc = y.len();
        let xc = self.config.augment.apply(x, &mut self.rng);
        let mut loss = LossBreakdown::default();
        let mut stored_logits = None;
        let (z, g) = match self.method {
            Method::Sgd | Method::Joint => {
                let z = self.net.forward_train(&xc);
                let (l, g) = cross_entropy(z.view(), y)?;
                loss.sup_wm = l as f64;
                (z, g)
            }
            Method::Er => {
                let replay = self.sample_replay()?;
                let x_all = match &replay {
                    Some((xb, _, _)) => cat(&[&xc, xb]),
                    None => xc,
                };
                let z = self.net.forward_train(&x_all);
                let mut g = Array2::zeros(z.raw_dim());
                let (l, gc) = cross_entropy(z.slice(s![..nc, ..]), y)?;
                loss.sup_wm = l as f64;
                g.slice_mut(s![..nc, ..]).assign(&gc);
                if let Some((_, yb, _)) = &replay {
                    let (l, gb) = cross_entropy(z.slice(s![nc.., ..]), yb)?;
                    loss.sup_wm += l as f64;
                    g.slice_mut(s![nc.., ..]).assign(&gb);
                }
                (z, g)
            }
            Method::Derpp => {
                let (alpha, beta) = (self.config.alpha, self.config.beta);
                let first = if alpha != 0.0 { self.sample_replay()? } else { None };
                let second = if beta != 0.0 { self.sample_replay()? } else { None };
                let mut parts = vec![&xc];
                if let Some((xb, _, _)) = &first {
                    parts.push(xb);
                }
                if let Some((xb, _, _)) = &second {
                    parts.push(xb);
                }
                let x_all = cat(&parts);
                let z = self.net.forward_train(&x_all);
                let mut g = Array2::zeros(z.raw_dim());
                let (l, gc) = cross_entropy(z.slice(s![..nc, ..]), y)?;
                loss.sup_wm = l as f64;
                g.slice_mut(s![..nc, ..]).assign(&gc);
                let mut off = nc;
                if let Some((xb, _, idx)) = &first {
                    let n = xb.dim().0;
                    let k = z.ncols();
                    let target = Array2::from_shape_fn((n, k), |(r, c)| {
                        self.buffer.entries()[idx[r]].aux.as_ref().map_or(0.0, |a| a[c])
                    });
                    let (l, gl) = mse(z.slice(s![off..off + n, ..]), target.view())?;
                    loss.logit_replay = Some(l as f64);
                    g.slice_mut(s![off..off + n, ..]).scaled_add(alpha as f32, &gl);
                    off += n;
                }
                if let Some((xb, yb, _)) = &second {
                    let n = xb.dim().0;
                    let (l, gl) = cross_entropy(z.slice(s![off..off + n, ..]), yb)?;
                    loss.label_replay = Some(l as f64);
                    g.slice_mut(s![off..off + n, ..]).scaled_add(beta as f32, &gl);
                }
                stored_logits = Some(z.slice(s![..nc, ..]).to_owned());
                (z, g)
            }
            Method::Duca => unreachable!("rejected in constructor"),
        };
        loss.total_wm = loss.sup_wm
            + self.config.alpha * loss.logit_replay.unwrap_or(0.0)
            + self.config.beta * loss.label_replay.unwrap_or(0.0);
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(divergence(self.pos.task, self.pos.step, &self.method.to_string(), &loss));
        }
        debug_assert_eq!(z.nrows(), g.nrows());
        self.net.backward(&g);
        self.opt.step(&mut self.net);
        if self.buffer.capacity() > 0 {
            for (i, (img, &label)) in x.outer_iter().zip(y).enumerate() {
                let aux = stored_logits.as_ref().map(|z| z.row(i).to_vec());
                self.buffer.insert(BufferEntry { image: img.to_owned(), label, aux });
            }
        }
        self.pos.step += 1;
        Ok(loss)
    }

    fn eval_net(&self) -> &Classifier {
        &self.net
    }

    fn buffer(&self) -> Option<&ReservoirBuffer<BufferEntry>> {
        (self.buffer.capacity() > 0).then_some(&self.buffer)
    }
}

pub fn build_learner(
    method: Method,
    spec: &ArchitectureSpec,
    num_classes: usize,
    config: &DucaConfig,
    seed: u64,
) -> Result<Box<dyn Learner>> {
    Ok(match method {
        Method::Duca => Box::new(Duca::new(spec, num_classes, config.clone(), seed)?),
        m => Box::new(Baseline::new(m, spec, num_classes, config.clone(), seed)?),
    })
}

/// Observer for training progress.
pub trait Hooks {
    fn on_epoch(&mut self, _task: usize, _epoch: usize, _mean: &LossBreakdown) {}
    fn on_task_end(&mut self, _task: usize, _row: &[f64]) {}
}

pub struct NoHooks;
impl Hooks for NoHooks {}

/// Records every epoch's mean losses.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct Telemetry {
    pub epochs: Vec<(usize, usize, LossBreakdown)>,
}

impl Hooks for Telemetry {
    fn on_epoch(&mut self, task: usize, epoch: usize, mean: &LossBreakdown) {
        self.epochs.push((task, epoch, *mean));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Unmasked accuracy (class-, domain- or generalized-incremental).
    pub accuracy: AccuracyMatrix,
    /// Accuracy with logits restricted to each task's classes; present for
    /// class-/task-incremental streams.
    pub task_il: Option<AccuracyMatrix>,
    pub steps: usize,
}

fn run_epochs(
    learner: &mut dyn Learner,
    set: &crate::data::ImageSet,
    task: usize,
    config: &DucaConfig,
    data_rng: &mut ChaCha8Rng,
    hooks: &mut dyn Hooks,
) -> Result<usize> {
    use rand::seq::SliceRandom;
    let mut steps = 0;
    learner.begin_task(task);
    for epoch in 0..config.epochs_per_task {
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(data_rng);
        let mut losses = Vec::with_capacity(order.len().div_ceil(config.batch_size));
        for chunk in order.chunks(config.batch_size) {
            let batch = set.select(chunk);
            losses.push(learner.train_step(&batch.images, &batch.labels)?);
            steps += 1;
        }
        let mean = LossBreakdown::mean(&losses);
        log::debug!("task {task} epoch {epoch}: wm {:.4} ibl {:.4}", mean.total_wm, mean.total_ibl);
        hooks.on_epoch(task, epoch, &mean);
    }
    Ok(steps)
}

/// Trains on each task in order and evaluates the learner's inference
/// network on every task after each one. A joint learner trains once on the
/// union of all tasks and yields a single row.
pub fn train_stream(
    learner: &mut dyn Learner,
    stream: &TaskStream,
    config: &DucaConfig,
    seed: u64,
    hooks: &mut dyn Hooks,
) -> Result<TrainOutcome> {
    stream.validate()?;
    config.validate()?;
    let t = stream.len();
    let with_mask = matches!(stream.setting, Setting::ClassIl | Setting::TaskIl);
    let mut acc = AccuracyMatrix::new(t);
    let mut task_il = with_mask.then(|| AccuracyMatrix::new(t));
    let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_DATA));
    let mut steps = 0;

    let mut finish_row = |learner: &dyn Learner, task: usize, hooks: &mut dyn Hooks| -> Result<()> {
        let net = learner.eval_net();
        let row = evaluate_stream(net, stream, false);
        hooks.on_task_end(task, &row);
        log::info!("after task {task}: {}", row.iter().map(|a| format!("{a:.1}")).collect::<Vec<_>>().join(" "));
        acc.push_row(row)?;
        if let Some(m) = task_il.as_mut() {
            m.push_row(evaluate_stream(net, stream, true))?;
        }
        Ok(())
    };

    if learner.method() == Method::Joint {
        let joint = stream.joint_train()?;
        steps += run_epochs(learner, &joint, 0, config, &mut data_rng, hooks)?;
        finish_row(learner, t - 1, hooks)?;
    } else {
        for (i, task) in stream.tasks.iter().enumerate() {
            steps += run_epochs(learner, &task.train, i, config, &mut data_rng, hooks)?;
            finish_row(learner, i, hooks)?;
        }
    }
    Ok(TrainOutcome { accuracy: acc, task_il, steps })
}
