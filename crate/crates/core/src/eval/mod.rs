//! Accuracy matrices and the analyses built on them, prediction logs for
//! task-recency bias, and the common-corruptions harness.

pub mod corruption;

use ndarray::{s, Array2, Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::data::stream::TaskStream;
use crate::data::ImageSet;
use crate::error::{Error, Result};
use crate::nn::Classifier;

pub use corruption::{corrupt, corruption_curve, Corruption, CorruptionSpec, CORRUPTIONS};

/// `rows[i][j]`: accuracy (%) on task `j`'s test set after training task `i`.
/// A joint run has a single row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub num_tasks: usize,
    pub rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new(num_tasks: usize) -> Self {
        Self { num_tasks, rows: Vec::new() }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_tasks = rows.first().map_or(0, Vec::len);
        let m = Self { num_tasks, rows };
        m.validate()?;
        Ok(m)
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.num_tasks {
            return Err(Error::structural(format!("row has {} entries, expected {}", row.len(), self.num_tasks)));
        }
        self.rows.push(row);
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.iter().any(|r| r.len() != self.num_tasks) {
            return Err(Error::structural("ragged accuracy matrix"));
        }
        if self.rows.len() > self.num_tasks {
            return Err(Error::structural("more rows than tasks"));
        }
        if self.rows.iter().flatten().any(|v| !(0.0..=100.0).contains(v)) {
            return Err(Error::structural("accuracy outside [0, 100]"));
        }
        Ok(())
    }

    fn last_row(&self) -> Result<&Vec<f64>> {
        self.rows.last().ok_or_else(|| Error::Undefined("empty accuracy matrix".into()))
    }

    fn square(&self) -> Result<()> {
        if self.rows.len() != self.num_tasks || self.num_tasks == 0 {
            return Err(Error::Undefined(format!(
                "needs a complete {0}×{0} matrix, have {1} rows",
                self.num_tasks,
                self.rows.len()
            )));
        }
        Ok(())
    }
}

/// Mean of the final row.
pub fn average_accuracy(m: &AccuracyMatrix) -> Result<f64> {
    let row = m.last_row()?;
    Ok(row.iter().sum::<f64>() / row.len() as f64)
}

/// Mean accuracy of each task right after it was learned (the diagonal).
pub fn plasticity(m: &AccuracyMatrix) -> Result<f64> {
    m.square()?;
    Ok((0..m.num_tasks).map(|i| m.rows[i][i]).sum::<f64>() / m.num_tasks as f64)
}

/// Mean final accuracy over all tasks except the last one.
pub fn stability(m: &AccuracyMatrix) -> Result<f64> {
    m.square()?;
    let t = m.num_tasks;
    if t < 2 {
        return Err(Error::Undefined("stability needs at least two tasks".into()));
    }
    Ok(m.rows[t - 1][..t - 1].iter().sum::<f64>() / (t - 1) as f64)
}

const EVAL_CHUNK: usize = 256;

/// Logits of `net` over a whole set, evaluated in chunks.
pub fn predict_set(net: &Classifier, set: &ImageSet) -> Array2<f32> {
    let n = set.len();
    let mut out = Array2::zeros((n, net.num_classes()));
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let x: Array4<f32> = set.images.slice(s![start..end, .., .., ..]).to_owned();
        out.slice_mut(s![start..end, ..]).assign(&net.predict(&x));
        start = end;
    }
    out
}

/// Arg-max over the permitted classes (all when `mask` is `None`).
pub fn argmax_masked(logits: ndarray::ArrayView1<'_, f32>, mask: Option<&[usize]>) -> usize {
    let best = |it: &mut dyn Iterator<Item = usize>| {
        it.fold(None::<(usize, f32)>, |acc, c| match acc {
            Some((_, v)) if v >= logits[c] => acc,
            _ => Some((c, logits[c])),
        })
        .map_or(0, |(c, _)| c)
    };
    match mask {
        Some(classes) => best(&mut classes.iter().copied()),
        None => best(&mut (0..logits.len())),
    }
}

/// Top-1 accuracy in percent; with `mask` the prediction is restricted to
/// the listed classes (task-incremental evaluation). An empty set scores 0.
pub fn accuracy(net: &Classifier, set: &ImageSet, mask: Option<&[usize]>) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let logits = predict_set(net, set);
    let correct = logits
        .outer_iter()
        .zip(&set.labels)
        .filter(|(row, &y)| argmax_masked(row.view(), mask) == y)
        .count();
    100.0 * correct as f64 / set.len() as f64
}

/// Per-sample softmax outputs over every task's test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLog {
    pub labels: Vec<usize>,
    pub tasks: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
}

pub fn softmax(row: ndarray::ArrayView1<'_, f32>) -> Vec<f64> {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let e: Vec<f64> = row.iter().map(|&z| (z as f64 - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

impl PredictionLog {
    pub fn collect(net: &Classifier, stream: &TaskStream) -> Self {
        let mut log = Self { labels: Vec::new(), tasks: Vec::new(), probs: Vec::new() };
        for (t, task) in stream.tasks.iter().enumerate() {
            let logits = predict_set(net, &task.test);
            for (row, &y) in logits.outer_iter().zip(&task.test.labels) {
                log.labels.push(y);
                log.tasks.push(t);
                log.probs.push(softmax(row));
            }
        }
        log
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.probs.len() || self.tasks.len() != self.probs.len() {
            return Err(Error::structural("prediction log columns differ in length"));
        }
        for p in &self.probs {
            if p.iter().any(|&v| !(v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-5 {
                return Err(Error::structural("probability vector is not a distribution"));
            }
        }
        Ok(())
    }
}

/// Average softmax mass assigned to each task's class set.
pub fn recency_bias(log: &PredictionLog, task_classes: &[Vec<usize>]) -> Result<Vec<f64>> {
    log.validate()?;
    if log.probs.is_empty() {
        return Err(Error::Undefined("empty prediction log".into()));
    }
    let mut out = vec![0.0; task_classes.len()];
    for p in &log.probs {
        for (o, classes) in out.iter_mut().zip(task_classes) {
            for &c in classes {
                *o += *p.get(c).ok_or_else(|| Error::structural(format!("class {c} outside probability vector")))?;
            }
        }
    }
    let n = log.probs.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// Accuracy row of `net` over every task in the stream.
pub fn evaluate_stream(net: &Classifier, stream: &TaskStream, masked: bool) -> Vec<f64> {
    stream
        .tasks
        .iter()
        .map(|t| accuracy(net, &t.test, masked.then_some(t.classes.as_slice())))
        .collect()
}

/// Predicted-class histogram, handy for checking a chance-level model.
pub fn prediction_histogram(net: &Classifier, set: &ImageSet) -> Vec<usize> {
    let logits = predict_set(net, set);
    let mut h = vec![0; net.num_classes()];
    for row in logits.axis_iter(Axis(0)) {
        h[argmax_masked(row, None)] += 1;
    }
    h
}
