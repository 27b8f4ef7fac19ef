//! The `UIEW` weight container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic, ASCII "UIEW"
//! 4       4     version, u32 little-endian (currently 1)
//! 8       8     manifest length L, u64 little-endian
//! 16      L     UTF-8 JSON manifest
//! 16+L    ...   tensor payload: f32 little-endian values
//! ```
//!
//! The manifest is `{"mode", "config", "tensors": [{"name", "shape",
//! "byte_offset"}]}` with tensors in declaration order and `byte_offset`
//! measured from the start of the payload. The writer packs tensors
//! back to back, so saving the same weights twice yields identical bytes.
//!
//! Tensor names:
//!
//! ```text
//! awcc.alpha_r, awcc.alpha_b                              [1]
//! backbone.{i}.{s3|s2|s1|v|h}.conv.weight                 [mid, in, kh, kw]   (train)
//! backbone.{i}.{branch}.bn.{gamma|beta|running_mean|running_var}  [mid]       (train)
//! backbone.{i}.{branch}.bn.eps                            [1]                 (train)
//! backbone.{i}.fusion.weight, backbone.{i}.fusion.bias    [out, mid, 1, 1], [out]  (train)
//! backbone.{i}.conv.weight, backbone.{i}.conv.bias        [out, in, 5, 5], [out]   (inference)
//! sgca.mlp.0.weight, sgca.mlp.0.bias                      [hidden, 12], [hidden]
//! sgca.mlp.1.weight, sgca.mlp.1.bias                      [3, hidden], [3]
//! sgca.lambda_t, sgca.lambda_s                            [1]
//! ```

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::awcc::AwccParams;
use crate::error::{Error, FormatError, Result};
use crate::mrdconv::{Branch, BranchKind, MrdConvInferWeights, MrdConvTrainWeights, FUSED_KERNEL, FUSED_PADDING};
use crate::pipeline::{Backbone, Mode, ModelConfig, ModelWeights};
use crate::sgca::{DenseLayer, SgcaParams, STAT_DIM};
use crate::tensor::{BatchNormParams, Conv2dParams, Tensor};

pub const MAGIC: &[u8; 4] = b"UIEW";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub byte_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: Mode,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

/// Names and shapes every file of this mode and config must declare, in order.
pub fn expected_layout(mode: Mode, config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut out: Vec<(String, Vec<usize>)> = vec![
        ("awcc.alpha_r".into(), vec![1]),
        ("awcc.alpha_b".into(), vec![1]),
    ];
    for (i, &(cin, cout)) in config.layers.iter().enumerate() {
        match mode {
            Mode::Train => {
                let mid = cout * config.rep_scale;
                for kind in BranchKind::ALL {
                    let p = format!("backbone.{i}.{}", kind.name());
                    let (kh, kw) = kind.kernel();
                    out.push((format!("{p}.conv.weight"), vec![mid, cin, kh, kw]));
                    for stat in ["gamma", "beta", "running_mean", "running_var"] {
                        out.push((format!("{p}.bn.{stat}"), vec![mid]));
                    }
                    out.push((format!("{p}.bn.eps"), vec![1]));
                }
                out.push((format!("backbone.{i}.fusion.weight"), vec![cout, mid, 1, 1]));
                out.push((format!("backbone.{i}.fusion.bias"), vec![cout]));
            }
            Mode::Inference => {
                out.push((format!("backbone.{i}.conv.weight"), vec![cout, cin, FUSED_KERNEL, FUSED_KERNEL]));
                out.push((format!("backbone.{i}.conv.bias"), vec![cout]));
            }
        }
    }
    let h = config.sgca_hidden;
    out.push(("sgca.mlp.0.weight".into(), vec![h, STAT_DIM]));
    out.push(("sgca.mlp.0.bias".into(), vec![h]));
    out.push(("sgca.mlp.1.weight".into(), vec![3, h]));
    out.push(("sgca.mlp.1.bias".into(), vec![3]));
    out.push(("sgca.lambda_t".into(), vec![1]));
    out.push(("sgca.lambda_s".into(), vec![1]));
    out
}

/// Tensor payloads in [`expected_layout`] order.
fn flatten(weights: &ModelWeights) -> Vec<Vec<f32>> {
    let mut out = vec![vec![weights.awcc.alpha_r], vec![weights.awcc.alpha_b]];
    match weights.backbone() {
        Backbone::Train(layers) => {
            for layer in layers {
                for br in layer.branches() {
                    out.push(br.conv.weight.data().to_vec());
                    out.push(br.bn.gamma.clone());
                    out.push(br.bn.beta.clone());
                    out.push(br.bn.running_mean.clone());
                    out.push(br.bn.running_var.clone());
                    out.push(vec![br.bn.eps]);
                }
                out.push(layer.fusion().weight.data().to_vec());
                out.push(layer.fusion().bias.clone());
            }
        }
        Backbone::Inference(layers) => {
            for layer in layers {
                out.push(layer.conv().weight.data().to_vec());
                out.push(layer.conv().bias.clone());
            }
        }
    }
    let s = &weights.sgca;
    out.push(s.hidden.weight.clone());
    out.push(s.hidden.bias.clone());
    out.push(s.output.weight.clone());
    out.push(s.output.bias.clone());
    out.push(vec![s.lambda_t]);
    out.push(vec![s.lambda_s]);
    out
}

pub fn encode(weights: &ModelWeights) -> Vec<u8> {
    let layout = expected_layout(weights.mode(), weights.config());
    let payloads = flatten(weights);
    debug_assert_eq!(layout.len(), payloads.len());

    let mut offset = 0u64;
    let tensors = layout
        .into_iter()
        .zip(&payloads)
        .map(|((name, shape), data)| {
            debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "{name}");
            let entry = TensorEntry {
                name,
                shape,
                byte_offset: offset,
            };
            offset += 4 * data.len() as u64;
            entry
        })
        .collect();
    let manifest = Manifest {
        mode: weights.mode(),
        config: weights.config().clone(),
        tensors,
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");

    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for data in &payloads {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses the fixed header and manifest, returning the manifest and payload.
pub fn read_manifest(bytes: &[u8]) -> Result<(Manifest, &[u8])> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic { expected: "UIEW" }.into());
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated("header shorter than 16 bytes".into()).into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let end = (HEADER_LEN as u64)
        .checked_add(len)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| FormatError::Truncated(format!("manifest declares {len} bytes")))? as usize;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[HEADER_LEN..end]).map_err(|e| FormatError::Manifest(e.to_string()))?;
    Ok((manifest, &bytes[end..]))
}

pub fn decode(bytes: &[u8]) -> Result<ModelWeights> {
    let (manifest, payload) = read_manifest(bytes)?;
    manifest
        .config
        .validate()
        .map_err(|e| FormatError::Manifest(format!("config: {e}")))?;
    let layout = expected_layout(manifest.mode, &manifest.config);
    if manifest.tensors.len() != layout.len() {
        return Err(FormatError::Manifest(format!(
            "{} tensors declared, {} expected for this config",
            manifest.tensors.len(),
            layout.len()
        ))
        .into());
    }

    let mut store = HashMap::with_capacity(layout.len());
    for (entry, (name, shape)) in manifest.tensors.iter().zip(&layout) {
        if &entry.name != name {
            return Err(FormatError::Manifest(format!("expected tensor `{name}`, found `{}`", entry.name)).into());
        }
        if &entry.shape != shape {
            return Err(FormatError::Tensor {
                name: name.clone(),
                detail: format!("declared shape {:?}, config requires {shape:?}", entry.shape),
            }
            .into());
        }
        let count: usize = shape.iter().product();
        let start = entry.byte_offset;
        let stop = start.checked_add(4 * count as u64).filter(|&s| s <= payload.len() as u64);
        let Some(stop) = stop else {
            return Err(FormatError::Truncated(format!(
                "tensor `{name}` runs past the end of the payload"
            ))
            .into());
        };
        let data: Vec<f32> = payload[start as usize..stop as usize]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        store.insert(name.clone(), data);
    }
    build(manifest.mode, manifest.config, store)
}

struct Store(HashMap<String, Vec<f32>>);

impl Store {
    fn take(&mut self, name: &str) -> Vec<f32> {
        self.0.remove(name).unwrap_or_else(|| panic!("layout lists `{name}`"))
    }

    fn scalar(&mut self, name: &str) -> f32 {
        self.take(name)[0]
    }

    fn tensor(&mut self, name: &str, shape: [usize; 4]) -> Result<Tensor> {
        Tensor::new(shape, self.take(name))
    }
}

fn build(mode: Mode, config: ModelConfig, store: HashMap<String, Vec<f32>>) -> Result<ModelWeights> {
    let mut s = Store(store);
    let awcc = AwccParams::new(s.scalar("awcc.alpha_r"), s.scalar("awcc.alpha_b"));
    if !awcc.in_operating_range() {
        log::warn!(
            "awcc weights ({}, {}) outside the recommended [0, 2] range",
            awcc.alpha_r,
            awcc.alpha_b
        );
    }
    let backbone = match mode {
        Mode::Train => {
            let mut layers = Vec::with_capacity(config.layers.len());
            for (i, &(cin, cout)) in config.layers.iter().enumerate() {
                let mid = cout * config.rep_scale;
                let mut branches = Vec::with_capacity(5);
                for kind in BranchKind::ALL {
                    let p = format!("backbone.{i}.{}", kind.name());
                    let (kh, kw) = kind.kernel();
                    let weight = s.tensor(&format!("{p}.conv.weight"), [mid, cin, kh, kw])?;
                    let conv = Conv2dParams::no_bias(weight, kind.dilation(), kind.padding())?;
                    let bn = BatchNormParams::new(
                        s.take(&format!("{p}.bn.gamma")),
                        s.take(&format!("{p}.bn.beta")),
                        s.take(&format!("{p}.bn.running_mean")),
                        s.take(&format!("{p}.bn.running_var")),
                        s.scalar(&format!("{p}.bn.eps")),
                    )
                    .map_err(|e| FormatError::Tensor {
                        name: format!("{p}.bn"),
                        detail: e.to_string(),
                    })?;
                    branches.push(Branch { kind, conv, bn });
                }
                let fusion = Conv2dParams::new(
                    s.tensor(&format!("backbone.{i}.fusion.weight"), [cout, mid, 1, 1])?,
                    s.take(&format!("backbone.{i}.fusion.bias")),
                    (1, 1),
                    (0, 0),
                )?;
                layers.push(MrdConvTrainWeights::new(cin, cout, config.rep_scale, branches, fusion)?);
            }
            Backbone::Train(layers)
        }
        Mode::Inference => {
            let mut layers = Vec::with_capacity(config.layers.len());
            for (i, &(cin, cout)) in config.layers.iter().enumerate() {
                let conv = Conv2dParams::new(
                    s.tensor(&format!("backbone.{i}.conv.weight"), [cout, cin, FUSED_KERNEL, FUSED_KERNEL])?,
                    s.take(&format!("backbone.{i}.conv.bias")),
                    (1, 1),
                    (FUSED_PADDING, FUSED_PADDING),
                )?;
                layers.push(MrdConvInferWeights::new(conv)?);
            }
            Backbone::Inference(layers)
        }
    };
    let h = config.sgca_hidden;
    let hidden = DenseLayer::new(STAT_DIM, h, s.take("sgca.mlp.0.weight"), s.take("sgca.mlp.0.bias"))?;
    let output = DenseLayer::new(h, 3, s.take("sgca.mlp.1.weight"), s.take("sgca.mlp.1.bias"))?;
    let mut sgca = SgcaParams::new(hidden, output)?;
    sgca.lambda_t = s.scalar("sgca.lambda_t");
    sgca.lambda_s = s.scalar("sgca.lambda_s");
    ModelWeights::new(config, awcc, backbone, sgca)
}

pub fn save_weights(weights: &ModelWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(weights)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
