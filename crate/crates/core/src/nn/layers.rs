use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array4, ArrayD, ArrayView2, Axis, Ix1, Ix2, Ix4, IxDyn};
use rand::Rng;

use super::{Param, Real};

fn uniform_init<F: Real, R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> ArrayD<F> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| F::lit(rng.random_range(-bound..bound)))
        .collect::<Vec<_>>();
    ArrayD::from_shape_vec(IxDyn(shape), data).expect("shape matches length")
}

fn as2<F: Real>(a: &ArrayD<F>) -> ArrayView2<'_, F> {
    a.view().into_dimensionality::<Ix2>().expect("rank-2 tensor")
}

/// Fully connected layer, `y = x Wᵀ + b`.
#[derive(Debug, Clone)]
pub struct Linear<F: Real> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    cache: Option<Array2<F>>,
}

impl<F: Real> Linear<F> {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: Param::new(uniform_init(&[outputs, inputs], bound, rng)),
            bias: Param::new(uniform_init(&[outputs], bound, rng)),
            cache: None,
        }
    }

    fn compute(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let mut y = x.dot(&as2(&self.weight.value).t());
        let b = self.bias.value.view().into_dimensionality::<Ix1>().expect("rank-1 bias");
        y += &b;
        y
    }

    fn infer(&self, x: ArrayD<F>) -> ArrayD<F> {
        let x = x.into_dimensionality::<Ix2>().expect("linear input must be rank 2");
        self.compute(x.view()).into_dyn()
    }

    fn forward(&mut self, x: ArrayD<F>) -> ArrayD<F> {
        let x = x.into_dimensionality::<Ix2>().expect("linear input must be rank 2");
        let y = self.compute(x.view());
        self.cache = Some(x);
        y.into_dyn()
    }

    fn backward(&mut self, gy: ArrayD<F>) -> ArrayD<F> {
        let x = self.cache.take().expect("backward without forward");
        let gy = gy.into_dimensionality::<Ix2>().expect("rank-2 gradient");
        {
            let mut gw = self.weight.grad.view_mut().into_dimensionality::<Ix2>().unwrap();
            general_mat_mul(F::one(), &gy.t(), &x, F::one(), &mut gw);
        }
        self.bias.grad += &gy.sum_axis(Axis(0)).into_dyn();
        gy.dot(&as2(&self.weight.value)).into_dyn()
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeometry {
    fn im2col<F: Real>(&self, x: &[F], cols: &mut [F]) {
        let (k, hw_out) = (self.k, self.ho * self.wo);
        for c in 0..self.cin {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let out = &mut cols[row * hw_out..(row + 1) * hw_out];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        let line = &mut out[oy * self.wo..(oy + 1) * self.wo];
                        if iy < 0 || iy >= self.h as isize {
                            line.fill(F::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, dst) in line.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            *dst = if ix < 0 || ix >= self.w as isize { F::zero() } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im<F: Real>(&self, cols: &[F], gx: &mut [F]) {
        let (k, hw_out) = (self.k, self.ho * self.wo);
        for c in 0..self.cin {
            let plane = &mut gx[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &cols[row * hw_out..(row + 1) * hw_out];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += src[oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2-D convolution (cross-correlation) over NCHW input, square kernel.
#[derive(Debug, Clone)]
pub struct Conv2d<F: Real> {
    pub weight: Param<F>,
    pub bias: Option<Param<F>>,
    pub stride: usize,
    pub padding: usize,
    cache: Option<Array4<F>>,
}

impl<F: Real> Conv2d<F> {
    pub fn new<R: Rng>(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = cin * kernel * kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Param::new(uniform_init(&[cout, cin, kernel, kernel], bound, rng));
        let bias = bias.then(|| Param::new(uniform_init(&[cout], bound, rng)));
        Self { weight, bias, stride, padding, cache: None }
    }

    fn geometry(&self, x: &Array4<F>) -> ConvGeometry {
        let s = self.weight.value.shape();
        let (cin, k) = (s[1], s[2]);
        let (_, c, h, w) = x.dim();
        assert_eq!(c, cin, "conv input channels");
        assert!(h + 2 * self.padding >= k && w + 2 * self.padding >= k, "conv input smaller than kernel");
        ConvGeometry {
            cin,
            h,
            w,
            k,
            stride: self.stride,
            pad: self.padding,
            ho: (h + 2 * self.padding - k) / self.stride + 1,
            wo: (w + 2 * self.padding - k) / self.stride + 1,
        }
    }

    fn kernel_matrix(&self) -> ArrayView2<'_, F> {
        let s = self.weight.value.shape();
        let cols = s[1] * s[2] * s[3];
        self.weight
            .value
            .view()
            .into_shape_with_order((s[0], cols))
            .expect("contiguous kernel")
    }

    fn compute(&self, x: &Array4<F>) -> Array4<F> {
        let g = self.geometry(x);
        let n = x.dim().0;
        let cout = self.weight.value.shape()[0];
        let wmat = self.kernel_matrix();
        let hw = g.ho * g.wo;
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut out = Array4::<F>::zeros((n, cout, g.ho, g.wo));
        let mut cols = Array2::<F>::zeros((g.cin * g.k * g.k, hw));
        let in_sz = g.cin * g.h * g.w;
        for (i, mut out_n) in out.outer_iter_mut().enumerate() {
            g.im2col(&xs[i * in_sz..(i + 1) * in_sz], cols.as_slice_mut().unwrap());
            let mut out2 = out_n.view_mut().into_shape_with_order((cout, hw)).unwrap();
            general_mat_mul(F::one(), &wmat, &cols, F::zero(), &mut out2);
            if let Some(b) = &self.bias {
                for (mut row, &bv) in out2.outer_iter_mut().zip(b.value.iter()) {
                    row.mapv_inplace(|v| v + bv);
                }
            }
        }
        out
    }

    fn infer(&self, x: ArrayD<F>) -> ArrayD<F> {
        let x = x.into_dimensionality::<Ix4>().expect("conv input must be NCHW");
        self.compute(&x).into_dyn()
    }

    fn forward(&mut self, x: ArrayD<F>) -> ArrayD<F> {
        let x = x
            .into_dimensionality::<Ix4>()
            .expect("conv input must be NCHW")
            .as_standard_layout()
            .into_owned();
        let y = self.compute(&x);
        self.cache = Some(x);
        y.into_dyn()
    }

    fn backward(&mut self, gy: ArrayD<F>) -> ArrayD<F> {
        let x = self.cache.take().expect("backward without forward");
        let gy = gy.into_dimensionality::<Ix4>().unwrap().as_standard_layout().into_owned();
        let g = self.geometry(&x);
        let cout = self.weight.value.shape()[0];
        let hw = g.ho * g.wo;
        let in_sz = g.cin * g.h * g.w;
        let xs = x.as_slice().unwrap();
        let mut gx = Array4::<F>::zeros(x.raw_dim());
        let mut cols = Array2::<F>::zeros((g.cin * g.k * g.k, hw));
        let mut dcols = Array2::<F>::zeros((g.cin * g.k * g.k, hw));
        let wmat = self.kernel_matrix().to_owned();
        let kshape = self.weight.value.shape().to_vec();
        let mut gw = Array2::<F>::zeros((cout, g.cin * g.k * g.k));
        let gxs = gx.as_slice_mut().unwrap();
        for (i, gy_n) in gy.outer_iter().enumerate() {
            let gy2 = gy_n.into_shape_with_order((cout, hw)).unwrap();
            g.im2col(&xs[i * in_sz..(i + 1) * in_sz], cols.as_slice_mut().unwrap());
            general_mat_mul(F::one(), &gy2, &cols.t(), F::one(), &mut gw);
            general_mat_mul(F::one(), &wmat.t(), &gy2, F::zero(), &mut dcols);
            g.col2im(dcols.as_slice().unwrap(), &mut gxs[i * in_sz..(i + 1) * in_sz]);
            if let Some(b) = &mut self.bias {
                for (gb, row) in b.grad.iter_mut().zip(gy2.outer_iter()) {
                    *gb += row.sum();
                }
            }
        }
        self.weight.grad += &gw.into_shape_with_order(IxDyn(&kshape)).unwrap();
        gx.into_dyn()
    }
}

/// Per-channel batch normalization over NCHW input.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<F: Real> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: ArrayD<F>,
    pub running_var: ArrayD<F>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache<F>>,
}

#[derive(Debug, Clone)]
struct BnCache<F> {
    xhat: Array4<F>,
    inv_std: Vec<F>,
}

impl<F: Real> BatchNorm2d<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(ArrayD::ones(IxDyn(&[channels]))),
            beta: Param::new(ArrayD::zeros(IxDyn(&[channels]))),
            running_mean: ArrayD::zeros(IxDyn(&[channels])),
            running_var: ArrayD::ones(IxDyn(&[channels])),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    fn infer(&self, x: ArrayD<F>) -> ArrayD<F> {
        let mut x = x.into_dimensionality::<Ix4>().expect("batch norm input must be NCHW");
        let eps = F::lit(self.eps);
        for c in 0..x.dim().1 {
            let scale = self.gamma.value[c] / (self.running_var[c] + eps).sqrt();
            let shift = self.beta.value[c] - self.running_mean[c] * scale;
            x.index_axis_mut(Axis(1), c).mapv_inplace(|v| v * scale + shift);
        }
        x.into_dyn()
    }

    fn forward(&mut self, x: ArrayD<F>) -> ArrayD<F> {
        let mut x = x.into_dimensionality::<Ix4>().expect("batch norm input must be NCHW");
        let (n, ch, h, w) = x.dim();
        let m = n * h * w;
        let mf = F::from_usize(m).unwrap();
        let eps = F::lit(self.eps);
        let mom = F::lit(self.momentum);
        let mut inv_std = Vec::with_capacity(ch);
        let mut y = x.clone();
        for c in 0..ch {
            let mut plane = x.index_axis_mut(Axis(1), c);
            let mean = plane.iter().copied().sum::<F>() / mf;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / mf;
            let istd = F::one() / (var + eps).sqrt();
            plane.mapv_inplace(|v| (v - mean) * istd);
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            y.index_axis_mut(Axis(1), c).zip_mut_with(&plane, |o, &xh| *o = g * xh + b);
            let unbiased = if m > 1 { var * mf / (mf - F::one()) } else { var };
            self.running_mean[c] = (F::one() - mom) * self.running_mean[c] + mom * mean;
            self.running_var[c] = (F::one() - mom) * self.running_var[c] + mom * unbiased;
            inv_std.push(istd);
        }
        self.cache = Some(BnCache { xhat: x, inv_std });
        y.into_dyn()
    }

    fn backward(&mut self, gy: ArrayD<F>) -> ArrayD<F> {
        let BnCache { xhat, inv_std } = self.cache.take().expect("backward without forward");
        let gy = gy.into_dimensionality::<Ix4>().unwrap();
        let (n, ch, h, w) = gy.dim();
        let mf = F::from_usize(n * h * w).unwrap();
        let mut gx = Array4::<F>::zeros(gy.raw_dim());
        for c in 0..ch {
            let gyc = gy.index_axis(Axis(1), c);
            let xh = xhat.index_axis(Axis(1), c);
            let sum_gy = gyc.sum();
            let sum_gy_xh = ndarray::Zip::from(&gyc).and(&xh).fold(F::zero(), |acc, &a, &b| acc + a * b);
            self.beta.grad[c] += sum_gy;
            self.gamma.grad[c] += sum_gy_xh;
            let g = self.gamma.value[c];
            let k = g * inv_std[c] / mf;
            ndarray::Zip::from(gx.index_axis_mut(Axis(1), c))
                .and(&gyc)
                .and(&xh)
                .for_each(|o, &dy, &x| *o = k * (mf * dy - sum_gy - x * sum_gy_xh));
        }
        gx.into_dyn()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu<F: Real> {
    cache: Option<ArrayD<F>>,
}

impl<F: Real> Relu<F> {
    fn infer(&self, x: ArrayD<F>) -> ArrayD<F> {
        x.mapv_into(|v| if v > F::zero() { v } else { F::zero() })
    }

    fn forward(&mut self, x: ArrayD<F>) -> ArrayD<F> {
        let y = self.infer(x);
        self.cache = Some(y.clone());
        y
    }

    fn backward(&mut self, mut gy: ArrayD<F>) -> ArrayD<F> {
        let y = self.cache.take().expect("backward without forward");
        gy.zip_mut_with(&y, |g, &o| {
            if o <= F::zero() {
                *g = F::zero();
            }
        });
        gy
    }
}

/// 2×2 max pooling with stride 2 (odd trailing rows/columns are dropped).
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2 {
    fn compute<F: Real>(x: &ArrayD<F>) -> (Array4<F>, Vec<usize>) {
        let x = x.view().into_dimensionality::<Ix4>().expect("pool input must be NCHW");
        let (n, c, h, w) = x.dim();
        let (ho, wo) = (h / 2, w / 2);
        let mut out = Array4::<F>::zeros((n, c, ho, wo));
        let mut arg = Vec::with_capacity(n * c * ho * wo);
        for ((i, j, oy, ox), o) in out.indexed_iter_mut() {
            let mut best = (F::neg_infinity(), 0usize);
            for dy in 0..2 {
                for dx in 0..2 {
                    let (y, xx) = (oy * 2 + dy, ox * 2 + dx);
                    let v = x[[i, j, y, xx]];
                    if v > best.0 || best.0 == F::neg_infinity() && v == F::neg_infinity() {
                        best = (v, ((i * c + j) * h + y) * w + xx);
                    }
                }
            }
            *o = best.0;
            arg.push(best.1);
        }
        (out, arg)
    }

    fn infer<F: Real>(&self, x: ArrayD<F>) -> ArrayD<F> {
        Self::compute(&x).0.into_dyn()
    }

    fn forward<F: Real>(&mut self, x: ArrayD<F>) -> ArrayD<F> {
        let (y, arg) = Self::compute(&x);
        self.cache = Some((arg, x.shape().to_vec()));
        y.into_dyn()
    }

    fn backward<F: Real>(&mut self, gy: ArrayD<F>) -> ArrayD<F> {
        let (arg, shape) = self.cache.take().expect("backward without forward");
        let mut gx = vec![F::zero(); shape.iter().product()];
        for (&idx, &g) in arg.iter().zip(gy.as_standard_layout().iter()) {
            gx[idx] += g;
        }
        ArrayD::from_shape_vec(IxDyn(&shape), gx).unwrap()
    }
}

/// Mean over the spatial dimensions: NCHW → NC.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    cache: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    fn infer<F: Real>(&self, x: ArrayD<F>) -> ArrayD<F> {
        let x = x.into_dimensionality::<Ix4>().expect("pool input must be NCHW");
        let (n, c, h, w) = x.dim();
        let x = x.as_standard_layout().into_owned().into_shape_with_order((n, c, h * w)).unwrap();
        x.mean_axis(Axis(2)).unwrap().into_dyn()
    }

    fn forward<F: Real>(&mut self, x: ArrayD<F>) -> ArrayD<F> {
        self.cache = Some(x.shape().to_vec());
        self.infer(x)
    }

    fn backward<F: Real>(&mut self, gy: ArrayD<F>) -> ArrayD<F> {
        let shape = self.cache.take().expect("backward without forward");
        let hw = F::from_usize(shape[2] * shape[3]).unwrap();
        let gy = gy.into_dimensionality::<Ix2>().unwrap();
        let mut gx = Array4::<F>::zeros((shape[0], shape[1], shape[2], shape[3]));
        for ((i, j, _, _), g) in gx.indexed_iter_mut() {
            *g = gy[[i, j]] / hw;
        }
        gx.into_dyn()
    }
}

/// NCHW → N×(CHW).
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

impl Flatten {
    fn infer<F: Real>(&self, x: ArrayD<F>) -> ArrayD<F> {
        let n = x.shape()[0];
        let rest = x.len() / n.max(1);
        x.as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(&[n, rest]))
            .unwrap()
    }

    fn forward<F: Real>(&mut self, x: ArrayD<F>) -> ArrayD<F> {
        self.cache = Some(x.shape().to_vec());
        self.infer(x)
    }

    fn backward<F: Real>(&mut self, gy: ArrayD<F>) -> ArrayD<F> {
        let shape = self.cache.take().expect("backward without forward");
        gy.as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(&shape))
            .unwrap()
    }
}

/// ResNet basic block: two 3×3 conv/BN pairs plus identity or projection
/// shortcut, followed by ReLU.
#[derive(Debug, Clone)]
pub struct BasicBlock<F: Real> {
    pub main: Vec<Layer<F>>,
    pub shortcut: Vec<Layer<F>>,
    out_relu: Relu<F>,
}

impl<F: Real> BasicBlock<F> {
    pub fn new<R: Rng>(cin: usize, cout: usize, stride: usize, rng: &mut R) -> Self {
        let main = vec![
            Layer::Conv(Conv2d::new(cin, cout, 3, stride, 1, false, rng)),
            Layer::BatchNorm(BatchNorm2d::new(cout)),
            Layer::Relu(Relu::default()),
            Layer::Conv(Conv2d::new(cout, cout, 3, 1, 1, false, rng)),
            Layer::BatchNorm(BatchNorm2d::new(cout)),
        ];
        let shortcut = if stride != 1 || cin != cout {
            vec![
                Layer::Conv(Conv2d::new(cin, cout, 1, stride, 0, false, rng)),
                Layer::BatchNorm(BatchNorm2d::new(cout)),
            ]
        } else {
            Vec::new()
        };
        Self { main, shortcut, out_relu: Relu::default() }
    }

    fn infer(&self, x: ArrayD<F>) -> ArrayD<F> {
        let skip = seq_infer(&self.shortcut, x.clone());
        let mut h = seq_infer(&self.main, x);
        h += &skip;
        self.out_relu.infer(h)
    }

    fn forward(&mut self, x: ArrayD<F>) -> ArrayD<F> {
        let skip = seq_forward(&mut self.shortcut, x.clone());
        let mut h = seq_forward(&mut self.main, x);
        h += &skip;
        self.out_relu.forward(h)
    }

    fn backward(&mut self, gy: ArrayD<F>) -> ArrayD<F> {
        let g = self.out_relu.backward(gy);
        let gskip = seq_backward(&mut self.shortcut, g.clone());
        let mut gx = seq_backward(&mut self.main, g);
        gx += &gskip;
        gx
    }
}

#[derive(Debug, Clone)]
pub enum Layer<F: Real> {
    Linear(Linear<F>),
    Conv(Conv2d<F>),
    BatchNorm(BatchNorm2d<F>),
    Relu(Relu<F>),
    MaxPool(MaxPool2),
    AvgPool(GlobalAvgPool),
    Flatten(Flatten),
    Block(Box<BasicBlock<F>>),
}

impl<F: Real> Layer<F> {
    pub fn infer(&self, x: ArrayD<F>) -> ArrayD<F> {
        match self {
            Layer::Linear(l) => l.infer(x),
            Layer::Conv(l) => l.infer(x),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::Relu(l) => l.infer(x),
            Layer::MaxPool(l) => l.infer(x),
            Layer::AvgPool(l) => l.infer(x),
            Layer::Flatten(l) => l.infer(x),
            Layer::Block(l) => l.infer(x),
        }
    }

    pub fn forward(&mut self, x: ArrayD<F>) -> ArrayD<F> {
        match self {
            Layer::Linear(l) => l.forward(x),
            Layer::Conv(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x),
            Layer::Relu(l) => l.forward(x),
            Layer::MaxPool(l) => l.forward(x),
            Layer::AvgPool(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
            Layer::Block(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, gy: ArrayD<F>) -> ArrayD<F> {
        match self {
            Layer::Linear(l) => l.backward(gy),
            Layer::Conv(l) => l.backward(gy),
            Layer::BatchNorm(l) => l.backward(gy),
            Layer::Relu(l) => l.backward(gy),
            Layer::MaxPool(l) => l.backward(gy),
            Layer::AvgPool(l) => l.backward(gy),
            Layer::Flatten(l) => l.backward(gy),
            Layer::Block(l) => l.backward(gy),
        }
    }

    /// Learnable parameters in a fixed traversal order.
    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        match self {
            Layer::Linear(l) => {
                f(&mut l.weight);
                f(&mut l.bias);
            }
            Layer::Conv(l) => {
                f(&mut l.weight);
                if let Some(b) = &mut l.bias {
                    f(b);
                }
            }
            Layer::BatchNorm(l) => {
                f(&mut l.gamma);
                f(&mut l.beta);
            }
            Layer::Block(b) => {
                for l in b.main.iter_mut().chain(b.shortcut.iter_mut()) {
                    l.visit_params_mut(f);
                }
            }
            Layer::Relu(_) | Layer::MaxPool(_) | Layer::AvgPool(_) | Layer::Flatten(_) => {}
        }
    }

    /// Every state tensor (parameters and normalization statistics) with a
    /// stable dotted name.
    pub fn visit_state<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a ArrayD<F>)) {
        match self {
            Layer::Linear(l) => {
                f(format!("{prefix}.weight"), &l.weight.value);
                f(format!("{prefix}.bias"), &l.bias.value);
            }
            Layer::Conv(l) => {
                f(format!("{prefix}.weight"), &l.weight.value);
                if let Some(b) = &l.bias {
                    f(format!("{prefix}.bias"), &b.value);
                }
            }
            Layer::BatchNorm(l) => {
                f(format!("{prefix}.weight"), &l.gamma.value);
                f(format!("{prefix}.bias"), &l.beta.value);
                f(format!("{prefix}.running_mean"), &l.running_mean);
                f(format!("{prefix}.running_var"), &l.running_var);
            }
            Layer::Block(b) => {
                for (i, l) in b.main.iter().enumerate() {
                    l.visit_state(&format!("{prefix}.main.{i}"), f);
                }
                for (i, l) in b.shortcut.iter().enumerate() {
                    l.visit_state(&format!("{prefix}.shortcut.{i}"), f);
                }
            }
            Layer::Relu(_) | Layer::MaxPool(_) | Layer::AvgPool(_) | Layer::Flatten(_) => {}
        }
    }

    pub fn visit_state_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut ArrayD<F>)) {
        match self {
            Layer::Linear(Linear { weight, bias, .. }) => {
                f(&mut weight.value);
                f(&mut bias.value);
            }
            Layer::Conv(Conv2d { weight, bias, .. }) => {
                f(&mut weight.value);
                if let Some(b) = bias {
                    f(&mut b.value);
                }
            }
            Layer::BatchNorm(BatchNorm2d { gamma, beta, running_mean, running_var, .. }) => {
                f(&mut gamma.value);
                f(&mut beta.value);
                f(running_mean);
                f(running_var);
            }
            Layer::Block(b) => {
                let BasicBlock { main, shortcut, .. } = &mut **b;
                for l in main.iter_mut().chain(shortcut.iter_mut()) {
                    l.visit_state_mut(f);
                }
            }
            Layer::Relu(_) | Layer::MaxPool(_) | Layer::AvgPool(_) | Layer::Flatten(_) => {}
        }
    }
}

pub fn seq_infer<F: Real>(layers: &[Layer<F>], mut x: ArrayD<F>) -> ArrayD<F> {
    for l in layers {
        x = l.infer(x);
    }
    x
}

pub fn seq_forward<F: Real>(layers: &mut [Layer<F>], mut x: ArrayD<F>) -> ArrayD<F> {
    for l in layers.iter_mut() {
        x = l.forward(x);
    }
    x
}

pub fn seq_backward<F: Real>(layers: &mut [Layer<F>], mut g: ArrayD<F>) -> ArrayD<F> {
    for l in layers.iter_mut().rev() {
        g = l.backward(g);
    }
    g
}
