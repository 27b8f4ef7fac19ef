//! Multi-branch re-parameterized dilated convolution.
//!
//! In training form the layer runs five parallel dilated branches, each a
//! bias-free convolution followed by batch norm, sums them, and projects the
//! sum with a 1×1 fusion convolution. Every branch is linear, so the whole
//! layer collapses into one dense 5×5 convolution:
//!
//! 1. fold each branch's batch norm into its kernel and bias,
//! 2. scatter each folded kernel into a zero 5×5 grid at the taps that
//!    reproduce its alignment under padding 2, and sum the grids,
//! 3. absorb the 1×1 fusion by mixing channels of the summed kernel.
//!
//! Branch geometry (kernel, dilation, padding), all shape-preserving:
//!
//! | branch | kernel | dilation | padding | 5×5 rows | 5×5 cols |
//! |--------|--------|----------|---------|----------|----------|
//! | s3     | 3×3    | (2, 2)   | (2, 2)  | 0, 2, 4  | 0, 2, 4  |
//! | s2     | 2×2    | (2, 2)   | (1, 1)  | 1, 3     | 1, 3     |
//! | s1     | 1×1    | (1, 1)   | (0, 0)  | 2        | 2        |
//! | v      | 3×2    | (2, 2)   | (2, 1)  | 0, 2, 4  | 1, 3     |
//! | h      | 2×3    | (2, 2)   | (1, 2)  | 1, 3     | 0, 2, 4  |

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{add, batchnorm_infer, conv2d, BatchNormParams, Conv2dParams, Tensor, DEFAULT_BN_EPS};

pub const FUSED_KERNEL: usize = 5;
pub const FUSED_PADDING: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchKind {
    S3,
    S2,
    S1,
    V,
    H,
}

impl BranchKind {
    pub const ALL: [BranchKind; 5] = [
        BranchKind::S3,
        BranchKind::S2,
        BranchKind::S1,
        BranchKind::V,
        BranchKind::H,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BranchKind::S3 => "s3",
            BranchKind::S2 => "s2",
            BranchKind::S1 => "s1",
            BranchKind::V => "v",
            BranchKind::H => "h",
        }
    }

    pub fn kernel(self) -> (usize, usize) {
        match self {
            BranchKind::S3 => (3, 3),
            BranchKind::S2 => (2, 2),
            BranchKind::S1 => (1, 1),
            BranchKind::V => (3, 2),
            BranchKind::H => (2, 3),
        }
    }

    pub fn dilation(self) -> (usize, usize) {
        match self {
            BranchKind::S1 => (1, 1),
            _ => (2, 2),
        }
    }

    pub fn padding(self) -> (usize, usize) {
        match self {
            BranchKind::S3 => (2, 2),
            BranchKind::S2 => (1, 1),
            BranchKind::S1 => (0, 0),
            BranchKind::V => (2, 1),
            BranchKind::H => (1, 2),
        }
    }

    /// Offset of the first tap inside the 5×5 grid; taps then step by the dilation.
    fn grid_origin(self) -> (usize, usize) {
        let (ph, pw) = self.padding();
        (FUSED_PADDING - ph, FUSED_PADDING - pw)
    }

    /// Number of weights in one `(out, in)` slice of this branch's kernel.
    pub fn taps(self) -> usize {
        let (kh, kw) = self.kernel();
        kh * kw
    }
}

/// One training-form branch: bias-free convolution followed by batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub kind: BranchKind,
    pub conv: Conv2dParams,
    pub bn: BatchNormParams,
}

/// Training-form layer weights. Branches are stored in [`BranchKind::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct MrdConvTrainWeights {
    in_channels: usize,
    out_channels: usize,
    rep_scale: usize,
    branches: Vec<Branch>,
    fusion: Conv2dParams,
}

/// Value ranges used by [`MrdConvTrainWeights::random`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomInit {
    pub weight: (f32, f32),
    pub gamma: (f32, f32),
    pub beta: (f32, f32),
    pub mean: (f32, f32),
    pub var: (f32, f32),
}

impl RandomInit {
    /// Everything uniform in `[-1, 1]`, variances in `[0.1, 2]`.
    pub fn wide() -> Self {
        Self {
            weight: (-1.0, 1.0),
            gamma: (-1.0, 1.0),
            beta: (-1.0, 1.0),
            mean: (-1.0, 1.0),
            var: (0.1, 2.0),
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, n: usize, (lo, hi): (f32, f32)) -> Vec<f32> {
    (0..n).map(|_| if lo < hi { rng.gen_range(lo..hi) } else { lo }).collect()
}

impl MrdConvTrainWeights {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        rep_scale: usize,
        branches: Vec<Branch>,
        fusion: Conv2dParams,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || rep_scale == 0 {
            return Err(Error::Config("channels and rep_scale must be >= 1".into()));
        }
        let mid = out_channels * rep_scale;
        if branches.len() != BranchKind::ALL.len() {
            return Err(Error::Config(format!("expected 5 branches, got {}", branches.len())));
        }
        for (branch, kind) in branches.iter().zip(BranchKind::ALL) {
            if branch.kind != kind {
                return Err(Error::Config(format!(
                    "branch {} found where {} expected",
                    branch.kind.name(),
                    kind.name()
                )));
            }
            check_branch_geometry(&branch.conv, kind)?;
            if branch.conv.in_channels() != in_channels || branch.conv.out_channels() != mid {
                return Err(Error::Config(format!(
                    "branch {} maps {}->{}, expected {in_channels}->{mid}",
                    kind.name(),
                    branch.conv.in_channels(),
                    branch.conv.out_channels()
                )));
            }
            if branch.bn.channels() != mid {
                return Err(Error::Config(format!(
                    "branch {} batch norm has {} channels, expected {mid}",
                    kind.name(),
                    branch.bn.channels()
                )));
            }
        }
        if fusion.kernel() != (1, 1)
            || fusion.in_channels() != mid
            || fusion.out_channels() != out_channels
            || fusion.padding != (0, 0)
        {
            return Err(Error::Config(format!(
                "fusion must be a 1x1 {mid}->{out_channels} convolution without padding"
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            rep_scale,
            branches,
            fusion,
        })
    }

    /// All kernels zero, identity batch norms with `beta = 0`, zero fusion.
    pub fn zeros(in_channels: usize, out_channels: usize, rep_scale: usize) -> Result<Self> {
        let mid = out_channels * rep_scale;
        let branches = BranchKind::ALL
            .iter()
            .map(|&kind| {
                let (kh, kw) = kind.kernel();
                Ok(Branch {
                    kind,
                    conv: Conv2dParams::no_bias(
                        Tensor::zeros([mid, in_channels, kh, kw])?,
                        kind.dilation(),
                        kind.padding(),
                    )?,
                    bn: BatchNormParams::identity(mid),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let fusion = Conv2dParams::no_bias(Tensor::zeros([out_channels, mid, 1, 1])?, (1, 1), (0, 0))?;
        Self::new(in_channels, out_channels, rep_scale, branches, fusion)
    }

    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        rep_scale: usize,
        init: &RandomInit,
    ) -> Result<Self> {
        let mid = out_channels * rep_scale;
        let mut branches = Vec::with_capacity(5);
        for kind in BranchKind::ALL {
            let (kh, kw) = kind.kernel();
            let w = uniform(rng, mid * in_channels * kh * kw, init.weight);
            let conv = Conv2dParams::no_bias(
                Tensor::new([mid, in_channels, kh, kw], w)?,
                kind.dilation(),
                kind.padding(),
            )?;
            let bn = BatchNormParams::new(
                uniform(rng, mid, init.gamma),
                uniform(rng, mid, init.beta),
                uniform(rng, mid, init.mean),
                uniform(rng, mid, init.var),
                DEFAULT_BN_EPS,
            )?;
            branches.push(Branch { kind, conv, bn });
        }
        let fw = uniform(rng, out_channels * mid, init.weight);
        let fb = uniform(rng, out_channels, init.weight);
        let fusion = Conv2dParams::new(Tensor::new([out_channels, mid, 1, 1], fw)?, fb, (1, 1), (0, 0))?;
        Self::new(in_channels, out_channels, rep_scale, branches, fusion)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn rep_scale(&self) -> usize {
        self.rep_scale
    }

    pub fn mid_channels(&self) -> usize {
        self.out_channels * self.rep_scale
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branches_mut(&mut self) -> &mut [Branch] {
        &mut self.branches
    }

    pub fn branch(&self, kind: BranchKind) -> &Branch {
        &self.branches[BranchKind::ALL.iter().position(|&k| k == kind).unwrap()]
    }

    pub fn fusion(&self) -> &Conv2dParams {
        &self.fusion
    }

    pub fn fusion_mut(&mut self) -> &mut Conv2dParams {
        &mut self.fusion
    }

    /// Learnable parameters: branch kernels, batch-norm affine terms, and
    /// the fusion layer. Running statistics are buffers and not counted.
    pub fn param_count(&self) -> usize {
        train_param_count(self.in_channels, self.out_channels, self.rep_scale)
    }
}

/// Closed-form learnable parameter count of a training-form layer.
pub fn train_param_count(in_channels: usize, out_channels: usize, rep_scale: usize) -> usize {
    let mid = out_channels * rep_scale;
    let taps: usize = BranchKind::ALL.iter().map(|k| k.taps()).sum();
    taps * in_channels * mid + BranchKind::ALL.len() * 2 * mid + out_channels * (mid + 1)
}

/// Closed-form parameter count of the collapsed 5×5 layer.
pub fn infer_param_count(in_channels: usize, out_channels: usize) -> usize {
    out_channels * (FUSED_KERNEL * FUSED_KERNEL * in_channels + 1)
}

fn check_branch_geometry(conv: &Conv2dParams, kind: BranchKind) -> Result<()> {
    if conv.kernel() != kind.kernel() || conv.dilation != kind.dilation() || conv.padding != kind.padding() {
        return Err(Error::Config(format!(
            "convolution (kernel {:?}, dilation {:?}, padding {:?}) does not match branch {}",
            conv.kernel(),
            conv.dilation,
            conv.padding,
            kind.name()
        )));
    }
    Ok(())
}

/// Collapsed single-convolution layer: 5×5 kernel, dilation 1, padding 2.
#[derive(Debug, Clone, PartialEq)]
pub struct MrdConvInferWeights {
    conv: Conv2dParams,
}

impl MrdConvInferWeights {
    pub fn new(conv: Conv2dParams) -> Result<Self> {
        if conv.kernel() != (FUSED_KERNEL, FUSED_KERNEL)
            || conv.dilation != (1, 1)
            || conv.padding != (FUSED_PADDING, FUSED_PADDING)
        {
            return Err(Error::Config(
                "inference weights must be a 5x5 convolution with dilation 1 and padding 2".into(),
            ));
        }
        Ok(Self { conv })
    }

    pub fn conv(&self) -> &Conv2dParams {
        &self.conv
    }

    pub fn in_channels(&self) -> usize {
        self.conv.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels()
    }

    pub fn param_count(&self) -> usize {
        infer_param_count(self.in_channels(), self.out_channels())
    }
}

/// `fusion(Σ_i BN_i(conv_i(x)))`.
pub fn forward_train(x: &Tensor, w: &MrdConvTrainWeights) -> Result<Tensor> {
    if x.channels() != w.in_channels {
        return Err(Error::Config(format!(
            "layer expects {} input channels, got {}",
            w.in_channels,
            x.channels()
        )));
    }
    let mut sum: Option<Tensor> = None;
    for branch in &w.branches {
        let y = batchnorm_infer(&conv2d(x, &branch.conv)?, &branch.bn)?;
        if (y.height(), y.width()) != (x.height(), x.width()) {
            return Err(Error::Shape(format!(
                "internal geometry error: branch {} produced {}x{} from {}x{}",
                branch.kind.name(),
                y.height(),
                y.width(),
                x.height(),
                x.width()
            )));
        }
        sum = Some(match sum {
            None => y,
            Some(acc) => add(&acc, &y)?,
        });
    }
    conv2d(&sum.expect("five branches"), &w.fusion)
}

/// Folds inference batch norm into the preceding convolution:
/// `W' = W·γ/√(σ²+ε)`, `b' = β + (b − μ)·γ/√(σ²+ε)`.
pub fn fuse_conv_bn(conv: &Conv2dParams, bn: &BatchNormParams) -> Result<Conv2dParams> {
    if conv.out_channels() != bn.channels() {
        return Err(Error::Config(format!(
            "cannot fuse {}-channel batch norm into {}-channel convolution",
            bn.channels(),
            conv.out_channels()
        )));
    }
    let per_out = conv.in_channels() * conv.kernel().0 * conv.kernel().1;
    let mut weight = conv.weight.clone();
    let mut bias = Vec::with_capacity(conv.out_channels());
    for (oc, slice) in weight.data_mut().chunks_mut(per_out).enumerate() {
        let s = bn.gamma[oc] as f64 / (bn.running_var[oc] as f64 + bn.eps as f64).sqrt();
        for v in slice {
            *v = (*v as f64 * s) as f32;
        }
        bias.push((bn.beta[oc] as f64 + (conv.bias[oc] as f64 - bn.running_mean[oc] as f64) * s) as f32);
    }
    Conv2dParams::new(weight, bias, conv.dilation, conv.padding)
}

/// Scatters a branch-shaped kernel into a zero `(out, in, 5, 5)` kernel.
pub fn embed_to_5x5(fused: &Conv2dParams, kind: BranchKind) -> Result<Tensor> {
    check_branch_geometry(fused, kind)?;
    let (kh, kw) = kind.kernel();
    let (dh, dw) = kind.dilation();
    let (r0, c0) = kind.grid_origin();
    let (cout, cin) = (fused.out_channels(), fused.in_channels());
    let mut out = Tensor::zeros([cout, cin, FUSED_KERNEL, FUSED_KERNEL])?;
    let src = fused.weight.data();
    let dst = out.data_mut();
    for oc in 0..cout {
        for ic in 0..cin {
            for ky in 0..kh {
                for kx in 0..kw {
                    let (gy, gx) = (r0 + ky * dh, c0 + kx * dw);
                    dst[((oc * cin + ic) * FUSED_KERNEL + gy) * FUSED_KERNEL + gx] =
                        src[((oc * cin + ic) * kh + ky) * kw + kx];
                }
            }
        }
    }
    Ok(out)
}

/// Collapses a training-form layer into its equivalent 5×5 convolution.
pub fn reparameterize(w: &MrdConvTrainWeights) -> Result<MrdConvInferWeights> {
    let mid = w.mid_channels();
    let (cin, cout) = (w.in_channels, w.out_channels);
    let k = FUSED_KERNEL * FUSED_KERNEL;

    let mut kernel_sum = vec![0.0f64; mid * cin * k];
    let mut bias_sum = vec![0.0f64; mid];
    for branch in &w.branches {
        let fused = fuse_conv_bn(&branch.conv, &branch.bn)?;
        let embedded = embed_to_5x5(&fused, branch.kind)?;
        for (acc, v) in kernel_sum.iter_mut().zip(embedded.data()) {
            *acc += *v as f64;
        }
        for (acc, v) in bias_sum.iter_mut().zip(&fused.bias) {
            *acc += *v as f64;
        }
    }

    // W_final[o] = Σ_m W_f[o, m] · K_sum[m];  b_final[o] = Σ_m W_f[o, m] · b_sum[m] + b_f[o]
    let wf = w.fusion.weight.data();
    let slice = cin * k;
    let mut weight = vec![0.0f64; cout * slice];
    let mut bias = Vec::with_capacity(cout);
    for o in 0..cout {
        let dst = &mut weight[o * slice..(o + 1) * slice];
        let mut b = w.fusion.bias[o] as f64;
        for m in 0..mid {
            let f = wf[o * mid + m] as f64;
            b += f * bias_sum[m];
            for (d, s) in dst.iter_mut().zip(&kernel_sum[m * slice..(m + 1) * slice]) {
                *d += f * s;
            }
        }
        bias.push(b as f32);
    }
    let weight = Tensor::new(
        [cout, cin, FUSED_KERNEL, FUSED_KERNEL],
        weight.into_iter().map(|v| v as f32).collect(),
    )?;
    MrdConvInferWeights::new(Conv2dParams::new(
        weight,
        bias,
        (1, 1),
        (FUSED_PADDING, FUSED_PADDING),
    )?)
}

pub fn forward_infer(x: &Tensor, w: &MrdConvInferWeights) -> Result<Tensor> {
    conv2d(x, &w.conv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_input(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_fn([1, c, h, w], |_, _, _, _| rng.gen()).unwrap()
    }

    fn max_abs(a: &Tensor, b: &Tensor) -> f32 {
        assert_eq!(a.shape(), b.shape());
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
    }

    /// Per-branch conv + BN + sum + 1×1 projection written out pixel by pixel in f64.
    fn naive_train_forward(x: &Tensor, w: &MrdConvTrainWeights) -> Vec<f64> {
        let (h, wd) = (x.height(), x.width());
        let mid = w.mid_channels();
        let mut sum = vec![0.0f64; mid * h * wd];
        for br in w.branches() {
            let (kh, kw) = br.kind.kernel();
            let (dh, dw) = br.kind.dilation();
            let (ph, pw) = br.kind.padding();
            for m in 0..mid {
                let s = br.bn.gamma[m] as f64 / (br.bn.running_var[m] as f64 + br.bn.eps as f64).sqrt();
                for y in 0..h {
                    for xx in 0..wd {
                        let mut acc = 0.0f64;
                        for ic in 0..w.in_channels() {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (y + ky * dh) as isize - ph as isize;
                                    let ix = (xx + kx * dw) as isize - pw as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += br.conv.weight.at(m, ic, ky, kx) as f64
                                            * x.at(0, ic, iy as usize, ix as usize) as f64;
                                    }
                                }
                            }
                        }
                        sum[(m * h + y) * wd + xx] +=
                            (acc - br.bn.running_mean[m] as f64) * s + br.bn.beta[m] as f64;
                    }
                }
            }
        }
        let mut out = Vec::new();
        for o in 0..w.out_channels() {
            for p in 0..h * wd {
                let mut v = w.fusion().bias[o] as f64;
                for m in 0..mid {
                    v += w.fusion().weight.at(o, m, 0, 0) as f64 * sum[m * h * wd + p];
                }
                out.push(v);
            }
        }
        out
    }

    #[test]
    fn every_branch_preserves_size() {
        for kind in BranchKind::ALL {
            let (kh, kw) = kind.kernel();
            let conv = Conv2dParams::no_bias(Tensor::zeros([1, 1, kh, kw]).unwrap(), kind.dilation(), kind.padding())
                .unwrap();
            assert_eq!(conv.output_size(7, 9), Some((7, 9)), "{}", kind.name());
        }
    }

    #[test]
    fn zero_network_outputs_fusion_bias() {
        let mut w = MrdConvTrainWeights::zeros(3, 2, 4).unwrap();
        w.fusion_mut().bias = vec![0.25, -0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = forward_train(&random_input(&mut rng, 3, 6, 5), &w).unwrap();
        assert!(y.plane(0, 0).iter().all(|v| *v == 0.25));
        assert!(y.plane(0, 1).iter().all(|v| *v == -0.5));

        let inf = reparameterize(&w).unwrap();
        assert!(inf.conv().weight.data().iter().all(|v| *v == 0.0));
        assert_eq!(inf.conv().bias, vec![0.25, -0.5]);
    }

    #[test]
    fn single_s1_branch_chain() {
        // one input channel, rep_scale 2: s1 replicates x into both mid
        // channels, fusion sums them with weights (1, 0.5) -> 1.5·x
        let mut w = MrdConvTrainWeights::zeros(1, 1, 2).unwrap();
        for br in w.branches_mut() {
            if br.kind == BranchKind::S1 {
                br.conv.weight = Tensor::filled([2, 1, 1, 1], 1.0).unwrap();
                br.bn.eps = 1e-12;
            }
        }
        w.fusion_mut().weight = Tensor::new([1, 2, 1, 1], vec![1.0, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_input(&mut rng, 1, 4, 4);
        let y = forward_train(&x, &w).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - 1.5 * b).abs() < 1e-6);
        }
    }

    #[test]
    fn train_forward_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(cin, cout, r) in &[(1, 1, 1), (3, 2, 4), (2, 3, 2)] {
            let w = MrdConvTrainWeights::random(&mut rng, cin, cout, r, &RandomInit::wide()).unwrap();
            let x = random_input(&mut rng, cin, 4, 4);
            let y = forward_train(&x, &w).unwrap();
            for (a, b) in y.data().iter().zip(naive_train_forward(&x, &w)) {
                assert!((*a as f64 - b).abs() < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn fuse_identity_and_hand_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let wt = Tensor::from_fn([2, 2, 3, 3], |_, _, _, _| rng.gen_range(-1.0..1.0)).unwrap();
        let conv = Conv2dParams::no_bias(wt.clone(), (2, 2), (2, 2)).unwrap();

        let eps = 1e-5;
        let bn = BatchNormParams::new(vec![1.0; 2], vec![0.0; 2], vec![0.0; 2], vec![1.0 - eps; 2], eps).unwrap();
        let fused = fuse_conv_bn(&conv, &bn).unwrap();
        for (a, b) in fused.weight.data().iter().zip(wt.data()) {
            assert!((a - b).abs() < 1e-7);
        }
        assert!(fused.bias.iter().all(|b| b.abs() < 1e-7));

        let bn = BatchNormParams::new(vec![2.0; 2], vec![0.5; 2], vec![1.0; 2], vec![3.0; 2], 1.0).unwrap();
        let fused = fuse_conv_bn(&conv, &bn).unwrap();
        assert_eq!(fused.weight, wt);
        assert_eq!(fused.bias, vec![-0.5, -0.5]);

        assert!(fuse_conv_bn(&conv, &BatchNormParams::identity(3)).is_err());
    }

    #[test]
    fn fuse_matches_conv_then_bn() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for kind in BranchKind::ALL {
            let w = MrdConvTrainWeights::random(&mut rng, 3, 2, 2, &RandomInit::wide()).unwrap();
            let br = w.branch(kind);
            let x = random_input(&mut rng, 3, 9, 7);
            let reference = batchnorm_infer(&conv2d(&x, &br.conv).unwrap(), &br.bn).unwrap();
            let fused = conv2d(&x, &fuse_conv_bn(&br.conv, &br.bn).unwrap()).unwrap();
            assert!(max_abs(&reference, &fused) < 1e-5);
        }
    }

    #[test]
    fn embedding_positions() {
        let s1 = Conv2dParams::no_bias(Tensor::filled([1, 1, 1, 1], 0.7).unwrap(), (1, 1), (0, 0)).unwrap();
        let k = embed_to_5x5(&s1, BranchKind::S1).unwrap();
        for (i, v) in k.data().iter().enumerate() {
            assert_eq!(*v, if i == 12 { 0.7 } else { 0.0 });
        }

        let s3 = Conv2dParams::no_bias(Tensor::filled([1, 1, 3, 3], 1.0).unwrap(), (2, 2), (2, 2)).unwrap();
        let k = embed_to_5x5(&s3, BranchKind::S3).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                let expect = if y % 2 == 0 && x % 2 == 0 { 1.0 } else { 0.0 };
                assert_eq!(k.at(0, 0, y, x), expect);
            }
        }
        assert_eq!(k.data().iter().filter(|v| **v == 0.0).count(), 16);

        let expected: [(BranchKind, &[usize], &[usize]); 3] = [
            (BranchKind::S2, &[1, 3], &[1, 3]),
            (BranchKind::V, &[0, 2, 4], &[1, 3]),
            (BranchKind::H, &[1, 3], &[0, 2, 4]),
        ];
        for (kind, rows, cols) in expected {
            let (kh, kw) = kind.kernel();
            let conv = Conv2dParams::no_bias(Tensor::filled([1, 1, kh, kw], 1.0).unwrap(), kind.dilation(), kind.padding())
                .unwrap();
            let k = embed_to_5x5(&conv, kind).unwrap();
            for y in 0..5 {
                for x in 0..5 {
                    let expect = if rows.contains(&y) && cols.contains(&x) { 1.0 } else { 0.0 };
                    assert_eq!(k.at(0, 0, y, x), expect, "{} at ({y},{x})", kind.name());
                }
            }
        }

        assert!(matches!(embed_to_5x5(&s3, BranchKind::S2), Err(Error::Config(_))));
    }

    #[test]
    fn embedded_kernel_reproduces_each_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for kind in BranchKind::ALL {
            let (kh, kw) = kind.kernel();
            let wt = Tensor::from_fn([3, 2, kh, kw], |_, _, _, _| rng.gen_range(-1.0..1.0)).unwrap();
            let bias = vec![0.1, -0.2, 0.3];
            let conv = Conv2dParams::new(wt, bias.clone(), kind.dilation(), kind.padding()).unwrap();
            let dense = Conv2dParams::new(embed_to_5x5(&conv, kind).unwrap(), bias, (1, 1), (2, 2)).unwrap();
            for (h, w) in [(1, 1), (2, 3), (8, 8), (13, 6)] {
                let x = random_input(&mut rng, 2, h, w);
                let d = max_abs(&conv2d(&x, &conv).unwrap(), &conv2d(&x, &dense).unwrap());
                assert!(d < 1e-5, "{} {h}x{w}: {d}", kind.name());
            }
        }
    }

    #[test]
    fn pass_through_fusion_keeps_kernel_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut w = MrdConvTrainWeights::random(&mut rng, 2, 1, 1, &RandomInit::wide()).unwrap();
        w.fusion_mut().weight = Tensor::filled([1, 1, 1, 1], 1.0).unwrap();
        w.fusion_mut().bias = vec![0.0];
        let mut expected = vec![0.0f64; 2 * 25];
        for br in w.branches() {
            let emb = embed_to_5x5(&fuse_conv_bn(&br.conv, &br.bn).unwrap(), br.kind).unwrap();
            for (e, v) in expected.iter_mut().zip(emb.data()) {
                *e += *v as f64;
            }
        }
        let inf = reparameterize(&w).unwrap();
        for (a, b) in inf.conv().weight.data().iter().zip(expected) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }

    #[test]
    fn collapsed_layer_matches_training_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for &(cin, cout, r) in &[(1, 1, 1), (3, 8, 4), (8, 3, 1), (8, 8, 4)] {
            let w = MrdConvTrainWeights::random(&mut rng, cin, cout, r, &RandomInit::wide()).unwrap();
            let inf = reparameterize(&w).unwrap();
            assert_eq!(inf.param_count(), cout * (25 * cin + 1));
            assert!(inf.param_count() < w.param_count());
            let x = random_input(&mut rng, cin, 32, 32);
            let d = max_abs(&forward_train(&x, &w).unwrap(), &forward_infer(&x, &inf).unwrap());
            assert!(d < 1e-4, "({cin},{cout},{r}): {d}");
        }
    }

    #[test]
    fn forward_infer_examples() {
        let mut center = Tensor::zeros([1, 1, 5, 5]).unwrap();
        center.data_mut()[12] = 1.0;
        let id = MrdConvInferWeights::new(Conv2dParams::no_bias(center, (1, 1), (2, 2)).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = random_input(&mut rng, 1, 6, 6);
        assert_eq!(forward_infer(&x, &id).unwrap(), x);

        let k: Vec<f32> = (0..25).map(|v| v as f32).collect();
        let w = MrdConvInferWeights::new(
            Conv2dParams::no_bias(Tensor::new([1, 1, 5, 5], k.clone()).unwrap(), (1, 1), (2, 2)).unwrap(),
        )
        .unwrap();
        let delta = Tensor::from_fn([1, 1, 5, 5], |_, _, y, x| (y == 2 && x == 2) as u8 as f32).unwrap();
        let y = forward_infer(&delta, &w).unwrap();
        for i in 0..25 {
            assert_eq!(y.data()[i], k[24 - i]);
        }

        assert!(matches!(forward_infer(&random_input(&mut rng, 2, 4, 4), &w), Err(Error::Config(_))));
        let bad = Conv2dParams::no_bias(Tensor::zeros([1, 1, 3, 3]).unwrap(), (1, 1), (1, 1)).unwrap();
        assert!(MrdConvInferWeights::new(bad).is_err());
    }
}
