//! Dense NCHW tensors and the handful of forward primitives the pipeline
//! is built from: dilated stride-1 convolution, inference-mode batch
//! normalization, and elementwise helpers.
//!
//! Convolution is cross-correlation (no kernel flip). All arithmetic is f32.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rank-4 `(batch, channels, height, width)` array of `f32`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: [usize; 4], value: f32) -> Result<Self> {
        Self::new(shape, vec![value; shape.iter().product()])
    }

    pub fn zeros(shape: [usize; 4]) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    /// Builds a tensor by evaluating `f(b, c, y, x)` at every position.
    pub fn from_fn(
        shape: [usize; 4],
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(b, ch, y, x));
                    }
                }
            }
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    /// The `height × width` plane of channel `c` in batch item `b`.
    pub fn plane(&self, b: usize, c: usize) -> &[f32] {
        let len = self.plane_len();
        let start = (b * self.shape[1] + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [f32] {
        let len = self.plane_len();
        let start = (b * self.shape[1] + c) * len;
        &mut self.data[start..start + len]
    }

    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f32 {
        let [_, ch, h, w] = self.shape;
        self.data[((b * ch + c) * h + y) * w + x]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn ensure_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{what}: shapes differ, {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub(crate) fn ensure_rgb(&self, what: &str) -> Result<()> {
        if self.shape[1] != 3 {
            return Err(Error::Shape(format!(
                "{what}: expected 3 channels, got {}",
                self.shape[1]
            )));
        }
        Ok(())
    }
}

/// Elementwise sum of two equally shaped tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.ensure_same_shape(b, "add")?;
    Ok(Tensor {
        shape: a.shape,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
    })
}

pub fn scale(a: &Tensor, s: f32) -> Tensor {
    a.map(|v| v * s)
}

pub fn clamp01(a: &Tensor) -> Tensor {
    a.map(|v| v.clamp(0.0, 1.0))
}

/// Stride-1 convolution parameters. `weight` is `(out, in, kh, kw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dParams {
    pub weight: Tensor,
    pub bias: Vec<f32>,
    pub dilation: (usize, usize),
    pub padding: (usize, usize),
}

impl Conv2dParams {
    pub fn new(
        weight: Tensor,
        bias: Vec<f32>,
        dilation: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Self> {
        if bias.len() != weight.shape[0] {
            return Err(Error::Config(format!(
                "conv bias has {} entries for {} output channels",
                bias.len(),
                weight.shape[0]
            )));
        }
        if dilation.0 == 0 || dilation.1 == 0 {
            return Err(Error::Config("dilation must be >= 1".into()));
        }
        Ok(Self {
            weight,
            bias,
            dilation,
            padding,
        })
    }

    /// Convolution without bias.
    pub fn no_bias(weight: Tensor, dilation: (usize, usize), padding: (usize, usize)) -> Result<Self> {
        let out = weight.shape[0];
        Self::new(weight, vec![0.0; out], dilation, padding)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape[2], self.weight.shape[3])
    }

    /// Output spatial size for an `h × w` input, if positive.
    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (kh, kw) = self.kernel();
        let oh = (h + 2 * self.padding.0) as isize - (self.dilation.0 * (kh - 1)) as isize;
        let ow = (w + 2 * self.padding.1) as isize - (self.dilation.1 * (kw - 1)) as isize;
        (oh >= 1 && ow >= 1).then_some((oh as usize, ow as usize))
    }
}

/// Dilated, zero-padded, stride-1 cross-correlation.
pub fn conv2d(input: &Tensor, params: &Conv2dParams) -> Result<Tensor> {
    let [n, cin, h, w] = input.shape;
    if cin != params.in_channels() {
        return Err(Error::Config(format!(
            "conv2d expects {} input channels, got {cin}",
            params.in_channels()
        )));
    }
    let (oh, ow) = params.output_size(h, w).ok_or_else(|| {
        Error::Shape(format!(
            "conv2d output would be empty for {h}x{w} input with kernel {:?}",
            params.kernel()
        ))
    })?;
    let cout = params.out_channels();
    let (kh, kw) = params.kernel();
    let (dh, dw) = params.dilation;
    let (ph, pw) = params.padding;

    let mut out = Tensor::zeros([n, cout, oh, ow])?;
    let weights = params.weight.data();
    // one output plane per task; planes are independent
    out.data.par_chunks_mut(oh * ow).enumerate().for_each(|(plane, dst)| {
        let (b, oc) = (plane / cout, plane % cout);
        dst.fill(params.bias[oc]);
        for ic in 0..cin {
            let src = input.plane(b, ic);
            for ky in 0..kh {
                // output rows whose tap `ky` lands inside the input
                let off_y = (ky * dh) as isize - ph as isize;
                let y0 = (-off_y).max(0) as usize;
                let y1 = ((h as isize - off_y).min(oh as isize)).max(0) as usize;
                for kx in 0..kw {
                    let wv = weights[((oc * cin + ic) * kh + ky) * kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let off_x = (kx * dw) as isize - pw as isize;
                    let x0 = (-off_x).max(0) as usize;
                    let x1 = ((w as isize - off_x).min(ow as isize)).max(0) as usize;
                    if x0 >= x1 {
                        continue;
                    }
                    for oy in y0..y1 {
                        let iy = (oy as isize + off_y) as usize;
                        let ix0 = (x0 as isize + off_x) as usize;
                        let src_row = &src[iy * w + ix0..iy * w + ix0 + (x1 - x0)];
                        let dst_row = &mut dst[oy * ow + x0..oy * ow + x1];
                        for (d, s) in dst_row.iter_mut().zip(src_row) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Inference-mode batch normalization statistics and affine parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
}

pub const DEFAULT_BN_EPS: f32 = 1e-5;

impl BatchNormParams {
    pub fn new(
        gamma: Vec<f32>,
        beta: Vec<f32>,
        running_mean: Vec<f32>,
        running_var: Vec<f32>,
        eps: f32,
    ) -> Result<Self> {
        let c = gamma.len();
        if beta.len() != c || running_mean.len() != c || running_var.len() != c {
            return Err(Error::Config("batch norm parameter lengths differ".into()));
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::Config(format!("batch norm eps must be > 0, got {eps}")));
        }
        if running_var.iter().any(|&v| v.is_nan() || v < 0.0) {
            return Err(Error::Config("batch norm running_var must be >= 0".into()));
        }
        Ok(Self {
            gamma,
            beta,
            running_mean,
            running_var,
            eps,
        })
    }

    /// gamma=1, beta=0, mean=0, var=1.
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: DEFAULT_BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

pub fn batchnorm_infer(input: &Tensor, params: &BatchNormParams) -> Result<Tensor> {
    if input.channels() != params.channels() {
        return Err(Error::Config(format!(
            "batch norm has {} channels, input has {}",
            params.channels(),
            input.channels()
        )));
    }
    let mut out = input.clone();
    for b in 0..input.batch() {
        for c in 0..input.channels() {
            let std = (params.running_var[c] + params.eps).sqrt();
            let (g, m, beta) = (params.gamma[c], params.running_mean[c], params.beta[c]);
            for v in out.plane_mut(b, c) {
                *v = g * (*v - m) / std + beta;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4], lo: f32, hi: f32) -> Tensor {
        Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(lo..hi)).unwrap()
    }

    /// Direct sliding-window definition with explicit padding checks.
    fn conv_oracle(x: &Tensor, p: &Conv2dParams) -> Vec<f32> {
        let [n, cin, h, w] = x.shape();
        let (kh, kw) = p.kernel();
        let (oh, ow) = p.output_size(h, w).unwrap();
        let mut out = Vec::new();
        for b in 0..n {
            for oc in 0..p.out_channels() {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = p.bias[oc] as f64;
                        for ic in 0..cin {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy + ky * p.dilation.0) as isize - p.padding.0 as isize;
                                    let ix = (ox + kx * p.dilation.1) as isize - p.padding.1 as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += p.weight.at(oc, ic, ky, kx) as f64
                                        * x.at(b, ic, iy as usize, ix as usize) as f64;
                                }
                            }
                        }
                        out.push(acc as f32);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn tensor_rejects_bad_lengths() {
        assert!(matches!(Tensor::new([1, 1, 2, 2], vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::new([1, 0, 2, 2], vec![]), Err(Error::Shape(_))));
    }

    #[test]
    fn identity_1x1_kernel() {
        let x = Tensor::filled([1, 1, 3, 3], 1.0).unwrap();
        let p = Conv2dParams::new(Tensor::filled([1, 1, 1, 1], 1.0).unwrap(), vec![0.0], (1, 1), (0, 0))
            .unwrap();
        assert_eq!(conv2d(&x, &p).unwrap(), x);
    }

    #[test]
    fn delta_input_scatters_dilated_kernel() {
        let x = Tensor::from_fn([1, 1, 5, 5], |_, _, y, x| if y == 2 && x == 2 { 1.0 } else { 0.0 })
            .unwrap();
        let k: Vec<f32> = (1..=9).map(|v| v as f32).collect();
        let p = Conv2dParams::no_bias(Tensor::new([1, 1, 3, 3], k.clone()).unwrap(), (2, 2), (2, 2))
            .unwrap();
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.shape(), [1, 1, 5, 5]);
        // cross-correlation of a delta reproduces the flipped kernel on the dilated grid
        for ky in 0..3 {
            for kx in 0..3 {
                let (oy, ox) = (4 - 2 * ky, 4 - 2 * kx);
                assert_eq!(y.at(0, 0, oy, ox), k[ky * 3 + kx]);
            }
        }
        let nonzero = y.data().iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 9);
        assert_eq!(y.data(), conv_oracle(&x, &p).as_slice());
    }

    #[test]
    fn dilated_3x3_preserves_size() {
        let x = Tensor::zeros([1, 2, 7, 11]).unwrap();
        let p = Conv2dParams::no_bias(Tensor::zeros([4, 2, 3, 3]).unwrap(), (2, 2), (2, 2)).unwrap();
        assert_eq!(conv2d(&x, &p).unwrap().shape(), [1, 4, 7, 11]);
    }

    #[test]
    fn conv_errors() {
        let x = Tensor::zeros([1, 2, 3, 3]).unwrap();
        let p = Conv2dParams::no_bias(Tensor::zeros([1, 3, 1, 1]).unwrap(), (1, 1), (0, 0)).unwrap();
        assert!(matches!(conv2d(&x, &p), Err(Error::Config(_))));
        let p = Conv2dParams::no_bias(Tensor::zeros([1, 2, 5, 5]).unwrap(), (1, 1), (0, 0)).unwrap();
        assert!(matches!(conv2d(&x, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn conv_matches_sliding_window_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(kh, kw, dh, dw, ph, pw) in &[
            (3, 3, 2, 2, 2, 2),
            (2, 2, 2, 2, 1, 1),
            (3, 2, 2, 2, 2, 1),
            (2, 3, 2, 2, 1, 2),
            (5, 5, 1, 1, 2, 2),
            (3, 3, 1, 1, 0, 0),
        ] {
            let x = random_tensor(&mut rng, [2, 3, 9, 6], 0.0, 1.0);
            let wt = random_tensor(&mut rng, [4, 3, kh, kw], -1.0, 1.0);
            let bias = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = Conv2dParams::new(wt, bias, (dh, dw), (ph, pw)).unwrap();
            let got = conv2d(&x, &p).unwrap();
            for (a, b) in got.data().iter().zip(conv_oracle(&x, &p)) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn batchnorm_examples() {
        let x = Tensor::filled([1, 1, 2, 2], 0.3).unwrap();
        let mut id = BatchNormParams::identity(1);
        id.eps = 1e-12;
        let y = batchnorm_infer(&x, &id).unwrap();
        assert!(y.data().iter().all(|v| (v - 0.3).abs() < 1e-6));

        // eps must be positive, so use the smallest normal float for the "eps = 0" case
        let bn = BatchNormParams::new(vec![2.0], vec![1.0], vec![0.5], vec![0.25], f32::MIN_POSITIVE)
            .unwrap();
        let y = batchnorm_infer(&Tensor::filled([1, 1, 1, 1], 1.0).unwrap(), &bn).unwrap();
        assert!((y.data()[0] - 3.0).abs() < 1e-6);

        let bn = BatchNormParams::new(vec![1.7, 0.2], vec![0.4, -0.9], vec![0.6, 0.1], vec![2.0, 0.5], 1e-5)
            .unwrap();
        let x = Tensor::from_fn([1, 2, 2, 2], |_, c, _, _| [0.6, 0.1][c]).unwrap();
        let y = batchnorm_infer(&x, &bn).unwrap();
        assert!(y.plane(0, 0).iter().all(|v| (v - 0.4).abs() < 1e-7));
        assert!(y.plane(0, 1).iter().all(|v| (v + 0.9).abs() < 1e-7));

        assert!(matches!(batchnorm_infer(&x, &BatchNormParams::identity(3)), Err(Error::Config(_))));
        assert!(BatchNormParams::new(vec![1.0], vec![0.0], vec![0.0], vec![-1.0], 1e-5).is_err());
        assert!(BatchNormParams::new(vec![1.0], vec![0.0], vec![0.0], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn elementwise_helpers() {
        let x = Tensor::new([1, 1, 1, 3], vec![1.2, -0.1, 0.5]).unwrap();
        assert_eq!(add(&x, &Tensor::zeros([1, 1, 1, 3]).unwrap()).unwrap(), x);
        assert_eq!(scale(&x, 1.0), x);
        assert_eq!(clamp01(&x).data(), &[1.0, 0.0, 0.5]);
        assert!(matches!(add(&x, &Tensor::zeros([1, 1, 3, 1]).unwrap()), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn zero_kernel_gives_zero(seed in any::<u64>(), h in 1usize..8, w in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_tensor(&mut rng, [1, 2, h, w], -5.0, 5.0);
            let p = Conv2dParams::no_bias(Tensor::zeros([3, 2, 3, 3]).unwrap(), (2, 2), (2, 2)).unwrap();
            let y = conv2d(&x, &p).unwrap();
            prop_assert!(y.data().iter().all(|v| *v == 0.0));
        }

        #[test]
        fn conv_is_linear(seed in any::<u64>(), a in -2.0f32..2.0, b in -2.0f32..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_tensor(&mut rng, [1, 3, 6, 7], -1.0, 1.0);
            let y = random_tensor(&mut rng, [1, 3, 6, 7], -1.0, 1.0);
            let wt = random_tensor(&mut rng, [2, 3, 3, 3], -1.0, 1.0);
            let p = Conv2dParams::no_bias(wt, (2, 2), (2, 2)).unwrap();
            let lhs = conv2d(&add(&scale(&x, a), &scale(&y, b)).unwrap(), &p).unwrap();
            let rhs = add(&scale(&conv2d(&x, &p).unwrap(), a), &scale(&conv2d(&y, &p).unwrap(), b)).unwrap();
            for (l, r) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((l - r).abs() < 1e-5 * 8.0, "{} vs {}", l, r);
            }
        }

        #[test]
        fn batchnorm_inverts(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = 3;
            let gamma: Vec<f32> = (0..c).map(|_| rng.gen_range(0.5..2.0) * if rng.gen() { 1.0 } else { -1.0 }).collect();
            let beta: Vec<f32> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean: Vec<f32> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let var: Vec<f32> = (0..c).map(|_| rng.gen_range(0.1..2.0)).collect();
            let bn = BatchNormParams::new(gamma.clone(), beta.clone(), mean.clone(), var.clone(), 1e-5).unwrap();
            let x = random_tensor(&mut rng, [1, c, 4, 4], 0.0, 1.0);
            let y = batchnorm_infer(&x, &bn).unwrap();
            for ch in 0..c {
                let std = (var[ch] + 1e-5).sqrt();
                for (yv, xv) in y.plane(0, ch).iter().zip(x.plane(0, ch)) {
                    let back = (yv - beta[ch]) * std / gamma[ch] + mean[ch];
                    prop_assert!((back - xv).abs() < 1e-5);
                }
            }
        }
    }
}
