use ndarray::{Array2, Array4, ArrayD, Ix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    seq_backward, seq_forward, seq_infer, BasicBlock, BatchNorm2d, Conv2d, Flatten, GlobalAvgPool, Layer,
    Linear, MaxPool2, Relu,
};
use super::{Param, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchKind {
    Mlp,
    SmallCnn,
    Resnet18,
}

impl std::str::FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(ArchKind::Mlp),
            "small-cnn" => Ok(ArchKind::SmallCnn),
            "resnet18" => Ok(ArchKind::Resnet18),
            other => Err(Error::config(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Architecture family plus the knobs that size it.
///
/// * `mlp`: `depth` hidden layers of `width` units (defaults 2 × 100).
/// * `small-cnn`: `depth` conv/BN/ReLU/max-pool blocks starting at `width`
///   channels and doubling, then a linear head (defaults 3 blocks, 32).
/// * `resnet18`: CIFAR-style stem (3×3 conv, stride 1, no max-pool), four
///   stages of two basic blocks with `width`·{1,2,4,8} channels, global
///   average pooling, linear head (default width 64). `depth` is unused.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub name: ArchKind,
    pub input_shape: (usize, usize, usize),
    pub width: usize,
    pub depth: usize,
}

const MAX_DIM: usize = 1024;
const MAX_WIDTH: usize = 1024;
const MAX_CLASSES: usize = 100_000;

impl ArchitectureSpec {
    pub fn mlp(input_shape: (usize, usize, usize)) -> Self {
        Self { name: ArchKind::Mlp, input_shape, width: 100, depth: 2 }
    }

    pub fn small_cnn(input_shape: (usize, usize, usize)) -> Self {
        Self { name: ArchKind::SmallCnn, input_shape, width: 32, depth: 3 }
    }

    pub fn resnet18(input_shape: (usize, usize, usize)) -> Self {
        Self { name: ArchKind::Resnet18, input_shape, width: 64, depth: 4 }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.input_shape;
        if c == 0 || h == 0 || w == 0 || c > 16 || h > MAX_DIM || w > MAX_DIM {
            return Err(Error::config(format!("invalid input shape {:?}", self.input_shape)));
        }
        if self.width == 0 || self.width > MAX_WIDTH {
            return Err(Error::config(format!("width {} out of range 1..={MAX_WIDTH}", self.width)));
        }
        match self.name {
            ArchKind::Mlp => {
                if self.depth > 16 {
                    return Err(Error::config("mlp depth must be at most 16"));
                }
                if c * h * w > 1 << 20 {
                    return Err(Error::config("mlp input too large"));
                }
            }
            ArchKind::SmallCnn => {
                if self.depth == 0 || self.depth > 6 {
                    return Err(Error::config("small-cnn depth must be in 1..=6"));
                }
                if self.width << (self.depth - 1) > MAX_WIDTH {
                    return Err(Error::config("small-cnn channel count too large"));
                }
                let div = 1usize << self.depth;
                if h < div || w < div {
                    return Err(Error::config(format!(
                        "small-cnn with {} blocks needs inputs of at least {div}×{div}",
                        self.depth
                    )));
                }
            }
            ArchKind::Resnet18 => {
                if h < 8 || w < 8 {
                    return Err(Error::config("resnet18 needs inputs of at least 8×8"));
                }
                if self.width > 128 {
                    return Err(Error::config("resnet18 width must be at most 128"));
                }
            }
        }
        Ok(())
    }
}

/// Encoder plus linear head producing unnormalized class scores.
#[derive(Debug, Clone)]
pub struct Classifier<F: Real = f32> {
    spec: ArchitectureSpec,
    num_classes: usize,
    layers: Vec<Layer<F>>,
}

pub fn build_classifier<F: Real>(spec: &ArchitectureSpec, num_classes: usize, seed: u64) -> Result<Classifier<F>> {
    spec.validate()?;
    if !(2..=MAX_CLASSES).contains(&num_classes) {
        return Err(Error::config(format!("num_classes must be in 2..={MAX_CLASSES}, got {num_classes}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w) = spec.input_shape;
    let mut layers = Vec::new();
    match spec.name {
        ArchKind::Mlp => {
            layers.push(Layer::Flatten(Flatten::default()));
            let mut fan_in = c * h * w;
            for _ in 0..spec.depth {
                layers.push(Layer::Linear(Linear::new(fan_in, spec.width, &mut rng)));
                layers.push(Layer::Relu(Relu::default()));
                fan_in = spec.width;
            }
            layers.push(Layer::Linear(Linear::new(fan_in, num_classes, &mut rng)));
        }
        ArchKind::SmallCnn => {
            let (mut ch, mut hh, mut ww) = (c, h, w);
            for i in 0..spec.depth {
                let out = spec.width << i;
                layers.push(Layer::Conv(Conv2d::new(ch, out, 3, 1, 1, true, &mut rng)));
                layers.push(Layer::BatchNorm(BatchNorm2d::new(out)));
                layers.push(Layer::Relu(Relu::default()));
                layers.push(Layer::MaxPool(MaxPool2::default()));
                ch = out;
                hh /= 2;
                ww /= 2;
            }
            layers.push(Layer::Flatten(Flatten::default()));
            layers.push(Layer::Linear(Linear::new(ch * hh * ww, num_classes, &mut rng)));
        }
        ArchKind::Resnet18 => {
            let nf = spec.width;
            layers.push(Layer::Conv(Conv2d::new(c, nf, 3, 1, 1, false, &mut rng)));
            layers.push(Layer::BatchNorm(BatchNorm2d::new(nf)));
            layers.push(Layer::Relu(Relu::default()));
            let mut cin = nf;
            for (stage, mult) in [1usize, 2, 4, 8].into_iter().enumerate() {
                let cout = nf * mult;
                for block in 0..2 {
                    let stride = if stage > 0 && block == 0 { 2 } else { 1 };
                    layers.push(Layer::Block(Box::new(BasicBlock::new(cin, cout, stride, &mut rng))));
                    cin = cout;
                }
            }
            layers.push(Layer::AvgPool(GlobalAvgPool::default()));
            layers.push(Layer::Linear(Linear::new(cin, num_classes, &mut rng)));
        }
    }
    Ok(Classifier { spec: spec.clone(), num_classes, layers })
}

impl<F: Real> Classifier<F> {
    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn check_input(&self, x: &Array4<F>) {
        let (_, c, h, w) = x.dim();
        assert_eq!((c, h, w), self.spec.input_shape, "input shape does not match architecture");
    }

    /// Evaluation-mode forward pass. Pure in (parameters, input); normalization
    /// layers use their running statistics.
    pub fn predict(&self, x: &Array4<F>) -> Array2<F> {
        self.check_input(x);
        let out = seq_infer(&self.layers, x.clone().into_dyn());
        out.into_dimensionality::<Ix2>().expect("logits are rank 2")
    }

    /// Training-mode forward pass; caches activations for [`Self::backward`]
    /// and updates normalization running statistics.
    pub fn forward_train(&mut self, x: &Array4<F>) -> Array2<F> {
        self.check_input(x);
        let out = seq_forward(&mut self.layers, x.clone().into_dyn());
        out.into_dimensionality::<Ix2>().expect("logits are rank 2")
    }

    /// Back-propagates d(loss)/d(logits) from the last `forward_train`,
    /// accumulating into parameter gradients.
    pub fn backward(&mut self, grad_logits: &Array2<F>) {
        seq_backward(&mut self.layers, grad_logits.clone().into_dyn());
    }

    pub fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |p| p.zero_grad());
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        for l in &mut self.layers {
            l.visit_params_mut(f);
        }
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        let mut this = self.clone();
        this.visit_params_mut(&mut |p| n += p.value.len());
        n
    }

    /// Named state tensors: learnable parameters and normalization statistics.
    pub fn state(&self) -> Vec<(String, &ArrayD<F>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            l.visit_state(&format!("layers.{i}"), &mut |name, t| out.push((name, t)));
        }
        out
    }

    pub fn state_mut(&mut self) -> Vec<&mut ArrayD<F>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            l.visit_state_mut(&mut |t| out.push(t));
        }
        out
    }

    fn check_compatible(&self, other: &Classifier<F>) -> Result<()> {
        if self.spec != other.spec || self.num_classes != other.num_classes {
            return Err(Error::structural(format!(
                "architectures differ: {:?}/{} vs {:?}/{}",
                self.spec, self.num_classes, other.spec, other.num_classes
            )));
        }
        let a = self.state();
        let b = other.state();
        if a.len() != b.len() || a.iter().zip(&b).any(|((_, x), (_, y))| x.shape() != y.shape()) {
            return Err(Error::structural("state tensor shapes differ"));
        }
        Ok(())
    }

    /// `self ← d·self + (1−d)·source` over every state tensor.
    pub fn blend_from(&mut self, source: &Classifier<F>, decay: F) -> Result<()> {
        if !(decay >= F::zero() && decay <= F::one()) {
            return Err(Error::config(format!("blend factor {decay} outside [0, 1]")));
        }
        self.check_compatible(source)?;
        let src: Vec<ArrayD<F>> = source.state().into_iter().map(|(_, t)| t.clone()).collect();
        let one_minus = F::one() - decay;
        for (dst, s) in self.state_mut().into_iter().zip(&src) {
            dst.zip_mut_with(s, |p, &q| *p = decay * *p + one_minus * q);
        }
        Ok(())
    }

    pub fn copy_from(&mut self, source: &Classifier<F>) -> Result<()> {
        self.check_compatible(source)?;
        let src: Vec<ArrayD<F>> = source.state().into_iter().map(|(_, t)| t.clone()).collect();
        for (dst, s) in self.state_mut().into_iter().zip(src) {
            *dst = s;
        }
        Ok(())
    }

    /// Flat copy of every state tensor in traversal order.
    pub fn flat_state(&self) -> Vec<F> {
        self.state().into_iter().flat_map(|(_, t)| t.iter().copied().collect::<Vec<_>>()).collect()
    }
}

/// Stochastic-momentum style blend: `target ← d·target + (1−d)·source`.
pub fn blend_parameters<F: Real>(target: &mut Classifier<F>, source: &Classifier<F>, d: F) -> Result<()> {
    target.blend_from(source, d)
}

pub fn copy_parameters<F: Real>(target: &mut Classifier<F>, source: &Classifier<F>) -> Result<()> {
    target.copy_from(source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn input(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f32> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn(shape, |_| rng.random::<f32>())
    }

    #[test]
    fn small_cnn_is_deterministic_per_seed() {
        let spec = ArchitectureSpec::small_cnn((3, 32, 32));
        let a: Classifier<f32> = build_classifier(&spec, 10, 0).unwrap();
        let b: Classifier<f32> = build_classifier(&spec, 10, 0).unwrap();
        let (fa, fb) = (a.flat_state(), b.flat_state());
        assert!(fa.iter().zip(&fb).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c: Classifier<f32> = build_classifier(&spec, 10, 1).unwrap();
        assert_ne!(fa, c.flat_state());
    }

    #[test]
    fn resnet18_has_requested_head() {
        let mut spec = ArchitectureSpec::resnet18((3, 64, 64));
        spec.width = 4;
        let net: Classifier<f32> = build_classifier(&spec, 100, 1).unwrap();
        let y = net.predict(&input((2, 3, 64, 64), 0));
        assert_eq!(y.dim(), (2, 100));
    }

    #[test]
    fn full_width_resnet18_parameter_count() {
        let net: Classifier<f32> = build_classifier(&ArchitectureSpec::resnet18((3, 32, 32)), 10, 0).unwrap();
        // Reference count for the CIFAR ResNet-18 with a 10-way head.
        assert_eq!(net.num_parameters(), 11_173_962);
    }

    #[test]
    fn mlp_flattens_mnist_input() {
        let net: Classifier<f32> = build_classifier(&ArchitectureSpec::mlp((1, 28, 28)), 10, 2).unwrap();
        let y = net.predict(&input((5, 1, 28, 28), 3));
        assert_eq!(y.dim(), (5, 10));
        let mut first = net.clone();
        let mut w = None;
        first.visit_params_mut(&mut |p| {
            if w.is_none() {
                w = Some(p.value.shape().to_vec());
            }
        });
        assert_eq!(w.unwrap(), vec![100, 784]);
    }

    #[test]
    fn invalid_specs_are_configuration_errors() {
        let spec = ArchitectureSpec::small_cnn((3, 4, 4));
        assert!(matches!(build_classifier::<f32>(&spec, 10, 0), Err(Error::Config(_))));
        let spec = ArchitectureSpec::mlp((1, 28, 28));
        assert!(matches!(build_classifier::<f32>(&spec, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn blend_edge_cases() {
        let spec = ArchitectureSpec::mlp((1, 4, 4));
        let mut target: Classifier<f64> = build_classifier(&spec, 3, 0).unwrap();
        let source: Classifier<f64> = build_classifier(&spec, 3, 1).unwrap();
        let before = target.flat_state();
        target.blend_from(&source, 1.0).unwrap();
        assert_eq!(target.flat_state(), before);
        target.blend_from(&source, 0.0).unwrap();
        assert_eq!(target.flat_state(), source.flat_state());

        for t in target.state_mut() {
            t.fill(0.0);
        }
        let mut ones = source.clone();
        for t in ones.state_mut() {
            t.fill(1.0);
        }
        target.blend_from(&ones, 0.999).unwrap();
        assert!(target.flat_state().iter().all(|v| (v - 0.001).abs() < 1e-12));
    }

    #[test]
    fn copy_then_blend_is_fixed_point() {
        let spec = ArchitectureSpec::small_cnn((3, 8, 8));
        let mut target: Classifier<f32> = build_classifier(&spec, 4, 0).unwrap();
        let source: Classifier<f32> = build_classifier(&spec, 4, 9).unwrap();
        copy_parameters(&mut target, &source).unwrap();
        let x = input((3, 3, 8, 8), 1);
        assert_eq!(target.predict(&x), source.predict(&x));
        let before = target.flat_state();
        blend_parameters(&mut target, &source, 0.5).unwrap();
        assert_eq!(target.flat_state(), before);
    }

    #[test]
    fn copy_between_architectures_fails() {
        let mut a: Classifier<f32> = build_classifier(&ArchitectureSpec::mlp((1, 4, 4)), 3, 0).unwrap();
        let b: Classifier<f32> = build_classifier(&ArchitectureSpec::small_cnn((1, 8, 8)), 3, 0).unwrap();
        assert!(matches!(copy_parameters(&mut a, &b), Err(Error::Structural(_))));
        assert!(matches!(a.blend_from(&b, 0.5), Err(Error::Structural(_))));
    }
}
