//! The full enhancement model: channel compensation, a stack of MRDConv
//! layers, and the global color adjustment, plus parameter and operation
//! accounting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::awcc::{awcc_forward, AwccParams};
use crate::error::{Error, Result};
use crate::mrdconv::{
    self, forward_infer, forward_train, reparameterize, MrdConvInferWeights, MrdConvTrainWeights, RandomInit,
    FUSED_KERNEL,
};
use crate::sgca::{self, sgca_forward, SgcaParams};
use crate::tensor::{add, clamp01, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f32 },
    None,
}

impl Activation {
    fn apply(self, t: &Tensor) -> Tensor {
        match self {
            Activation::Relu => t.map(|v| v.max(0.0)),
            Activation::LeakyRelu { slope } => t.map(|v| if v >= 0.0 { v } else { slope * v }),
            Activation::None => t.clone(),
        }
    }
}

/// Backbone layout and the few architectural switches left open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// `(in_channels, out_channels)` per MRDConv layer.
    pub layers: Vec<(usize, usize)>,
    pub rep_scale: usize,
    /// Applied after every backbone layer except the last.
    pub activation: Activation,
    /// Add the compensated input to the backbone output.
    pub residual: bool,
    pub sgca_hidden: usize,
}

impl Default for ModelConfig {
    /// `3→7→7→7→3`, rep-scale 4, leaky ReLU (0.05), residual on, 16 hidden
    /// units: 3,785 inference parameters.
    fn default() -> Self {
        Self {
            layers: vec![(3, 7), (7, 7), (7, 7), (7, 3)],
            rep_scale: 4,
            activation: Activation::LeakyRelu { slope: 0.05 },
            residual: true,
            sgca_hidden: sgca::DEFAULT_HIDDEN,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rep_scale == 0 {
            return Err(Error::Config("rep_scale must be >= 1".into()));
        }
        if self.sgca_hidden == 0 {
            return Err(Error::Config("sgca hidden width must be >= 1".into()));
        }
        if let (Some(first), Some(last)) = (self.layers.first(), self.layers.last()) {
            if first.0 != 3 || last.1 != 3 {
                return Err(Error::Config("backbone must map 3 channels to 3 channels".into()));
            }
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].1 != pair[1].0 {
                return Err(Error::Config(format!(
                    "layer {i} outputs {} channels but layer {} expects {}",
                    pair[0].1,
                    i + 1,
                    pair[1].0
                )));
            }
        }
        if self.layers.iter().any(|&(i, o)| i == 0 || o == 0) {
            return Err(Error::Config("layer channel counts must be >= 1".into()));
        }
        Ok(())
    }

    /// Learnable parameters of the training-form model.
    pub fn train_param_count(&self) -> usize {
        let backbone: usize = self
            .layers
            .iter()
            .map(|&(i, o)| mrdconv::train_param_count(i, o, self.rep_scale))
            .sum();
        2 + backbone + sgca::param_count(self.sgca_hidden)
    }

    /// `Σ C_out·(25·C_in + 1) + 2 + sgca`.
    pub fn inference_param_count(&self) -> usize {
        let backbone: usize = self.layers.iter().map(|&(i, o)| mrdconv::infer_param_count(i, o)).sum();
        2 + backbone + sgca::param_count(self.sgca_hidden)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Inference,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Train => "train",
            Mode::Inference => "inference",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backbone {
    Train(Vec<MrdConvTrainWeights>),
    Inference(Vec<MrdConvInferWeights>),
}

impl Backbone {
    pub fn mode(&self) -> Mode {
        match self {
            Backbone::Train(_) => Mode::Train,
            Backbone::Inference(_) => Mode::Inference,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Backbone::Train(l) => l.len(),
            Backbone::Inference(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn layer_channels(&self, i: usize) -> (usize, usize) {
        match self {
            Backbone::Train(l) => (l[i].in_channels(), l[i].out_channels()),
            Backbone::Inference(l) => (l[i].in_channels(), l[i].out_channels()),
        }
    }

    fn forward_layer(&self, i: usize, x: &Tensor) -> Result<Tensor> {
        match self {
            Backbone::Train(l) => forward_train(x, &l[i]),
            Backbone::Inference(l) => forward_infer(x, &l[i]),
        }
    }
}

/// Every learnable of the model, in one of the two backbone forms.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    config: ModelConfig,
    pub awcc: AwccParams,
    backbone: Backbone,
    pub sgca: SgcaParams,
}

impl ModelWeights {
    pub fn new(config: ModelConfig, awcc: AwccParams, backbone: Backbone, sgca: SgcaParams) -> Result<Self> {
        config.validate()?;
        if backbone.len() != config.layers.len() {
            return Err(Error::Config(format!(
                "config lists {} layers, weights hold {}",
                config.layers.len(),
                backbone.len()
            )));
        }
        for (i, &expected) in config.layers.iter().enumerate() {
            let found = backbone.layer_channels(i);
            if found != expected {
                return Err(Error::Config(format!(
                    "layer {i}: config says {expected:?}, weights are {found:?}"
                )));
            }
        }
        if let Backbone::Train(layers) = &backbone {
            if let Some(l) = layers.iter().find(|l| l.rep_scale() != config.rep_scale) {
                return Err(Error::Config(format!(
                    "layer rep_scale {} differs from config rep_scale {}",
                    l.rep_scale(),
                    config.rep_scale
                )));
            }
        }
        if sgca.hidden_width() != config.sgca_hidden {
            return Err(Error::Config(format!(
                "sgca hidden width {} differs from config {}",
                sgca.hidden_width(),
                config.sgca_hidden
            )));
        }
        Ok(Self {
            config,
            awcc,
            backbone,
            sgca,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn mode(&self) -> Mode {
        self.backbone.mode()
    }

    /// Zero backbone, zero color perceptron, compensation disabled.
    /// With the residual on, [`enhance`] reduces to gray-world correction.
    pub fn passthrough(config: ModelConfig) -> Result<Self> {
        let layers = config
            .layers
            .iter()
            .map(|&(i, o)| MrdConvTrainWeights::zeros(i, o, config.rep_scale))
            .collect::<Result<Vec<_>>>()?;
        let sgca = SgcaParams::zeros(config.sgca_hidden);
        Self::new(config, AwccParams::disabled(), Backbone::Train(layers), sgca)
    }

    /// Seeded random training-form weights with small, well-conditioned values.
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = RandomInit {
            weight: (-0.1, 0.1),
            gamma: (0.5, 1.5),
            beta: (-0.05, 0.05),
            mean: (-0.05, 0.05),
            var: (0.5, 1.5),
        };
        let layers = config
            .layers
            .iter()
            .map(|&(i, o)| MrdConvTrainWeights::random(&mut rng, i, o, config.rep_scale, &init))
            .collect::<Result<Vec<_>>>()?;
        let sgca = SgcaParams::random(&mut rng, config.sgca_hidden, 0.1);
        Self::new(config, AwccParams::unit(), Backbone::Train(layers), sgca)
    }

    /// Learnable parameters actually held by these weights.
    pub fn param_count(&self) -> usize {
        let backbone: usize = match &self.backbone {
            Backbone::Train(l) => l.iter().map(|w| w.param_count()).sum(),
            Backbone::Inference(l) => l.iter().map(|w| w.param_count()).sum(),
        };
        2 + backbone + self.sgca.param_count()
    }
}

/// Runs the full model on a `1×3×H×W` image in `[0, 1]`.
pub fn enhance(image: &Tensor, weights: &ModelWeights) -> Result<Tensor> {
    let compensated = awcc_forward(image, &weights.awcc)?;
    let n = weights.backbone.len();
    let mut x = compensated.clone();
    for i in 0..n {
        x = weights.backbone.forward_layer(i, &x)?;
        if i + 1 < n {
            x = weights.config.activation.apply(&x);
        }
    }
    if weights.config.residual && n > 0 {
        x = add(&x, &compensated)?;
    }
    sgca_forward(&clamp01(&x), &weights.sgca)
}

/// Collapses every backbone layer; the other modules are copied unchanged.
pub fn convert_to_inference(weights: &ModelWeights) -> Result<ModelWeights> {
    let Backbone::Train(layers) = &weights.backbone else {
        return Err(Error::Mode("weights are already in inference form".into()));
    };
    let collapsed = layers.iter().map(reparameterize).collect::<Result<Vec<_>>>()?;
    ModelWeights::new(
        weights.config.clone(),
        weights.awcc,
        Backbone::Inference(collapsed),
        weights.sgca.clone(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamReport {
    pub train: usize,
    pub inference: usize,
}

pub fn count_params(config: &ModelConfig) -> ParamReport {
    ParamReport {
        train: config.train_param_count(),
        inference: config.inference_param_count(),
    }
}

/// Per-image operation count of the deployed (collapsed) model.
///
/// One multiply-accumulate counts as one operation, the convention most
/// model profilers use when they print "FLOPs". Terms, for `P = H·W`:
///
/// * `conv_macs = Σ_layers P · C_out · C_in · 25`
/// * `elementwise = P · (11 + Σ_layers C_out + Σ_{hidden layers} C_out + 6 + 29) + mlp`
///   where 11 covers compensation and gray world, the layer terms cover bias
///   adds and activations, 6 the residual add and clamp, 29 the statistics
///   and color adjustment, and `mlp` the perceptron's multiply-accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlopReport {
    pub conv_macs: u64,
    pub elementwise: u64,
    pub flops: u64,
}

pub fn count_flops(config: &ModelConfig, height: usize, width: usize) -> FlopReport {
    let pixels = (height * width) as u64;
    let taps = (FUSED_KERNEL * FUSED_KERNEL) as u64;
    let conv_macs: u64 = config
        .layers
        .iter()
        .map(|&(i, o)| pixels * (i as u64) * (o as u64) * taps)
        .sum();
    let n = config.layers.len();
    let bias: u64 = config.layers.iter().map(|&(_, o)| o as u64).sum();
    let act: u64 = config.layers.iter().take(n.saturating_sub(1)).map(|&(_, o)| o as u64).sum();
    let mlp = sgca::param_count(config.sgca_hidden) as u64;
    let elementwise = pixels * (11 + bias + act + 6 + 29) + mlp;
    FlopReport {
        conv_macs,
        elementwise,
        flops: conv_macs + elementwise,
    }
}
