use rayon::prelude::*;
use xchem_core::model::{Loss, Model, ModelError, Sample};
use xchem_core::train::{chunk_gradient, reduce_chunks, GradientEngine, GRAD_CHUNK};

/// Computes chunk gradients on the rayon pool and reduces them in chunk
/// order, so results are bitwise identical to [`xchem_core::train::SerialEngine`].
#[derive(Clone, Copy, Debug, Default)]
pub struct RayonEngine;

impl GradientEngine for RayonEngine {
    fn batch_gradient(
        &self,
        model: &Model,
        samples: &[Sample],
        targets: &[f64],
        batch: &[usize],
        loss: Loss,
        grads: &mut [f64],
    ) -> Result<f64, ModelError> {
        let parts = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| chunk_gradient(model, samples, targets, chunk, loss))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(reduce_chunks(parts, grads))
    }
}
