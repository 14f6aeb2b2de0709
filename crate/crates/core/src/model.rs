//! Encoder + fusion head as one trainable model, with checkpoints.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encoder::{prepare, Encoder, EncoderConfig, EncoderError, EncoderInput};
use crate::fusion::{FusionConfig, FusionError, FusionHead};
use crate::molecule::Molecule;
use crate::nn::ParamStore;
use crate::target::TargetProperty;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Geometry only.
    #[default]
    Base,
    /// Geometry gated with the physics embedding.
    Fused,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Base, Variant::Fused];

    pub fn key(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Fused => "fused",
        }
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.key())
    }
}

impl core::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Variant::Base),
            "fused" | "ours" => Ok(Variant::Fused),
            other => Err(format!("unknown variant `{other}` (expected base or fused)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[default]
    L1,
    Mse,
}

impl Loss {
    /// Loss value and derivative with respect to the prediction.
    pub fn eval(self, pred: f64, target: f64) -> (f64, f64) {
        let e = pred - target;
        match self {
            Loss::L1 => {
                let g = if e > 0.0 {
                    1.0
                } else if e < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                (e.abs(), g)
            }
            Loss::Mse => (e * e, 2.0 * e),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub fusion: FusionConfig,
    pub variant: Variant,
}

impl ModelConfig {
    /// FNV-1a over the canonical JSON form, as 16 hex digits.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("checkpoint was written for configuration {found}, pipeline expects {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("checkpoint tensor {name}: {reason}")]
    Tensor { name: String, reason: String },
    #[error("molecule {id} has no {target} label")]
    MissingLabel { id: String, target: TargetProperty },
}

/// A molecule ready for the model: cached geometry features, optional
/// physics embedding and its label in target units.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub input: EncoderInput,
    pub text: Option<Vec<f64>>,
    pub label: f64,
}

impl Sample {
    pub fn from_molecule(
        molecule: &Molecule,
        target: TargetProperty,
        config: &EncoderConfig,
        text: Option<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let label = molecule
            .target(target)
            .ok_or_else(|| ModelError::MissingLabel { id: molecule.id.clone(), target })?;
        Ok(Self { id: molecule.id.clone(), input: prepare(molecule, config)?, text, label })
    }
}

/// Label standardization fitted on training labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Default for Scaler {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl Scaler {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = libm::sqrt(var);
        Self { mean, std: if std > 1e-12 { std } else { 1.0 } }
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn restore(&self, z: f64) -> f64 {
        self.mean + self.std * z
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: Encoder,
    pub head: FusionHead,
}

impl Model {
    /// Builds the parameter layout without drawing values.
    pub fn layout(config: ModelConfig) -> Result<Self, ModelError> {
        let mut params = ParamStore::new();
        let encoder = Encoder::register(&mut params, config.encoder.clone(), "encoder.")?;
        let head = FusionHead::register(
            &mut params,
            config.fusion.clone(),
            config.encoder.hidden,
            config.variant == Variant::Fused,
            "fusion.",
        )?;
        Ok(Self { config, params, encoder, head })
    }

    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let mut m = Self::layout(config)?;
        m.params.initialize(seed);
        Ok(m)
    }

    /// Prediction on the standardized scale.
    pub fn forward(&self, sample: &Sample) -> Result<f64, ModelError> {
        let g = self.encoder.encode(&self.params, &sample.input);
        Ok(self.head.forward(&self.params, &g, sample.text.as_deref())?.y)
    }

    /// Adds `∂loss/∂θ` into `grads` and returns the loss, both against the
    /// standardized label `target`.
    pub fn loss_grad(&self, sample: &Sample, target: f64, loss: Loss, grads: &mut [f64]) -> Result<f64, ModelError> {
        let enc = self.encoder.forward(&self.params, &sample.input);
        let tr = self.head.forward(&self.params, &enc.g, sample.text.as_deref())?;
        let (l, dy) = loss.eval(tr.y, target);
        let dg = self.head.backward(&self.params, &tr, dy, grads);
        self.encoder.backward(&self.params, &sample.input, &enc, &dg, grads);
        Ok(l)
    }

    pub fn checkpoint(&self, scaler: Scaler) -> Checkpoint {
        let tensors = self
            .params
            .specs()
            .iter()
            .map(|s| NamedTensor { name: s.name.clone(), shape: s.shape.clone(), values: self.params.values[s.range()].to_vec() })
            .collect();
        Checkpoint { config_hash: self.config.hash(), config: self.config.clone(), scaler, tensors }
    }

    /// Restores a checkpoint, refusing one written for another configuration.
    pub fn from_checkpoint(ckpt: &Checkpoint, expected: &ModelConfig) -> Result<Self, ModelError> {
        let want = expected.hash();
        if ckpt.config_hash != want || ckpt.config.hash() != want {
            return Err(ModelError::ConfigMismatch { expected: want, found: ckpt.config_hash.clone() });
        }
        let mut m = Self::layout(expected.clone())?;
        if ckpt.tensors.len() != m.params.specs().len() {
            return Err(ModelError::Tensor {
                name: String::from("*"),
                reason: format!("{} tensors, expected {}", ckpt.tensors.len(), m.params.specs().len()),
            });
        }
        for (i, t) in ckpt.tensors.iter().enumerate() {
            let spec = m.params.specs()[i].clone();
            if t.name != spec.name || t.shape != spec.shape || t.values.len() != spec.len() {
                return Err(ModelError::Tensor { name: t.name.clone(), reason: format!("expected {} {:?}", spec.name, spec.shape) });
            }
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Tensor { name: t.name.clone(), reason: String::from("non-finite values") });
            }
            m.params.values[spec.range()].copy_from_slice(&t.values);
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub config: ModelConfig,
    pub scaler: Scaler,
    pub tensors: Vec<NamedTensor>,
}
