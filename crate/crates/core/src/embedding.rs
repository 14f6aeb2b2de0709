//! Physics-vetted text embedding: the weighted sum of frozen descriptor
//! embeddings over an accepted selection.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorKind;
use crate::dialogue::AcceptedSelection;

/// Output dimension of the frozen text encoder.
pub const EMBED_DIM: usize = 768;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorEmbedding {
    pub descriptor: DescriptorKind,
    /// Content hash of the embedded string.
    pub text_hash: String,
    pub vector: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("no embedding for selected descriptor {0}")]
    Missing(DescriptorKind),
    #[error("embedding for {descriptor} has {got} dimensions, expected {EMBED_DIM}")]
    Dimension { descriptor: DescriptorKind, got: usize },
    #[error("embedding for {0} has non-finite entries")]
    NonFinite(DescriptorKind),
    #[error("{weights} weights for {subset} descriptors")]
    WeightCount { subset: usize, weights: usize },
}

impl DescriptorEmbedding {
    pub fn check(&self) -> Result<(), EmbeddingError> {
        if self.vector.len() != EMBED_DIM {
            return Err(EmbeddingError::Dimension { descriptor: self.descriptor, got: self.vector.len() });
        }
        if self.vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite(self.descriptor));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicsEmbedding {
    pub vector: Vec<f64>,
    pub subset: Vec<DescriptorKind>,
    pub weights: Vec<f64>,
}

/// Σ_j w_j φ_{k_j} over `subset`; no further normalization.
pub fn weighted_sum(
    subset: &[DescriptorKind],
    weights: &[f64],
    bank: &BTreeMap<DescriptorKind, DescriptorEmbedding>,
) -> Result<Vec<f64>, EmbeddingError> {
    if subset.len() != weights.len() {
        return Err(EmbeddingError::WeightCount { subset: subset.len(), weights: weights.len() });
    }
    let mut out = alloc::vec![0.0f64; EMBED_DIM];
    for (kind, &w) in subset.iter().zip(weights) {
        let e = bank.get(kind).ok_or(EmbeddingError::Missing(*kind))?;
        e.check()?;
        for (acc, &x) in out.iter_mut().zip(&e.vector) {
            *acc += w * f64::from(x);
        }
    }
    Ok(out)
}

pub fn physics_embedding(
    selection: &AcceptedSelection,
    bank: &BTreeMap<DescriptorKind, DescriptorEmbedding>,
) -> Result<PhysicsEmbedding, EmbeddingError> {
    let vector = weighted_sum(&selection.subset, &selection.weights, bank)?;
    Ok(PhysicsEmbedding { vector, subset: selection.subset.clone(), weights: selection.weights.clone() })
}
