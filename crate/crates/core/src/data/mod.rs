//! Labeled image sets, dataset readers, augmentation, and the builders that
//! arrange them into continual-learning task streams.

pub mod augment;
pub mod loaders;
pub mod manifest;
pub mod stream;

use ndarray::{Array4, Axis};

use crate::error::{Error, Result};

/// A batch of `N×C×H×W` images in `[0, 1]` with one class id each.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub images: Array4<f32>,
    pub labels: Vec<usize>,
}

impl ImageSet {
    pub fn new(images: Array4<f32>, labels: Vec<usize>) -> Result<Self> {
        if images.dim().0 != labels.len() {
            return Err(Error::data(format!(
                "{} images but {} labels",
                images.dim().0,
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn empty(shape: (usize, usize, usize)) -> Self {
        Self { images: Array4::zeros((0, shape.0, shape.1, shape.2)), labels: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(C, H, W)` of each image.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        let (_, c, h, w) = self.images.dim();
        (c, h, w)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == class).map(|(i, _)| i).collect()
    }

    pub fn filter_classes(&self, classes: &[usize]) -> Self {
        let idx: Vec<usize> = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| classes.contains(l))
            .map(|(i, _)| i)
            .collect();
        self.select(&idx)
    }

    pub fn concat(parts: &[&ImageSet]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::data("nothing to concatenate"))?;
        let shape = first.image_shape();
        if parts.iter().any(|p| p.image_shape() != shape) {
            return Err(Error::structural("image shapes differ"));
        }
        let views: Vec<_> = parts.iter().map(|p| p.images.view()).collect();
        let images = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::structural(e.to_string()))?;
        let labels = parts.iter().flat_map(|p| p.labels.iter().copied()).collect();
        Ok(Self { images, labels })
    }
}

/// A base dataset with its native train/test split.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub name: String,
    pub train: ImageSet,
    pub test: ImageSet,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn validate(&self) -> Result<()> {
        for (split, set) in [("train", &self.train), ("test", &self.test)] {
            if let Some(&bad) = set.labels.iter().find(|&&l| l >= self.num_classes) {
                return Err(Error::data(format!(
                    "{} {split} label {bad} outside 0..{}",
                    self.name, self.num_classes
                )));
            }
        }
        if self.train.image_shape() != self.test.image_shape() {
            return Err(Error::structural("train and test image shapes differ"));
        }
        Ok(())
    }
}
