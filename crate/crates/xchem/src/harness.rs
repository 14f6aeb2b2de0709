//! k-fold training and evaluation over the canonical dataset.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use xchem_core::embedding::physics_embedding;
use xchem_core::metrics::fold_mean;
use xchem_core::model::{Checkpoint, Model, ModelConfig, Sample, Variant};
use xchem_core::train::{evaluate, train, validation_split, EpochStats, TrainConfig};
use xchem_core::{make_folds, Entry, TargetProperty};

use crate::config::{PipelineConfig, Workspace};
use crate::embed::EmbeddingService;
use crate::engine::RayonEngine;
use crate::fsutil::write_atomic;
use crate::select::{read_selections, SelectionCache};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub best_epoch: usize,
    /// Test MAE in target units.
    pub mae: f64,
    pub curve: Vec<EpochStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub config_hash: String,
    pub folds: Vec<FoldResult>,
    pub mean_mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub backbone: String,
    pub config: PipelineConfig,
    /// target → variant → result.
    pub results: BTreeMap<TargetProperty, BTreeMap<Variant, VariantResult>>,
}

impl MetricsFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                bail!("metrics file {} not found; run the `train` phase first", path.display())
            }
            Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
        };
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

/// Per-molecule physics embeddings for one target, keyed by molecule id.
pub fn text_features(
    entries: &[Entry],
    target: TargetProperty,
    selections: &SelectionCache,
    embeddings: &EmbeddingService,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for e in entries {
        let sel = selections
            .get(&(e.id().to_string(), target))
            .with_context(|| format!("no selection for {} / {target} (run `xchem select` first)", e.id()))?;
        let bank = embeddings.bank(e)?;
        out.insert(e.id().to_string(), physics_embedding(sel, &bank)?.vector);
    }
    Ok(out)
}

pub fn build_samples(
    entries: &[Entry],
    target: TargetProperty,
    config: &ModelConfig,
    text: Option<&BTreeMap<String, Vec<f64>>>,
) -> Result<Vec<Sample>> {
    entries
        .iter()
        .map(|e| {
            let t = match text {
                Some(map) => Some(map.get(e.id()).with_context(|| format!("no physics embedding for {}", e.id()))?.clone()),
                None => None,
            };
            Ok(Sample::from_molecule(&e.molecule, target, &config.encoder, t)?)
        })
        .collect()
}

/// Train and test positions for each fold, and the validation carve-out
/// of the training positions.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldPlan {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn fold_plans(ids: &[&str], cfg: &TrainConfig) -> Result<Vec<FoldPlan>> {
    let split = make_folds(ids, cfg.folds, cfg.seed)?;
    Ok((0..cfg.folds)
        .map(|fold| {
            let (rest, test) = split.partition(ids, fold);
            let (tr, va) = validation_split(rest.len(), cfg.val_fraction, cfg.seed.wrapping_add(fold as u64));
            FoldPlan { train: tr.iter().map(|&i| rest[i]).collect(), val: va.iter().map(|&i| rest[i]).collect(), test }
        })
        .collect())
}

fn pick(samples: &[Sample], idx: &[usize]) -> Vec<Sample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

pub fn checkpoint_path(dir: &Path, target: TargetProperty, variant: Variant, fold: usize) -> PathBuf {
    dir.join(format!("{}_{}_fold{fold}.json", target.key(), variant.key()))
}

/// Runs every fold for one (target, variant) and saves the best-epoch checkpoints.
pub fn run_folds(
    samples: &[Sample],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    checkpoints: Option<(&Path, TargetProperty)>,
) -> Result<VariantResult> {
    let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    let mut folds = Vec::new();
    for (fold, plan) in fold_plans(&ids, train_cfg)?.into_iter().enumerate() {
        let cfg = TrainConfig { seed: train_cfg.seed.wrapping_add(fold as u64), ..train_cfg.clone() };
        let (tr, va, te) = (pick(samples, &plan.train), pick(samples, &plan.val), pick(samples, &plan.test));
        let out = train(model_cfg, &tr, &va, &cfg, &RayonEngine)?;
        let mae = evaluate(&out.model, &out.scaler, &te)?;
        log::info!("{} fold {fold}: best epoch {}, test MAE {mae:.6}", model_cfg.variant, out.best_epoch);
        if let Some((dir, target)) = checkpoints {
            let ckpt = out.model.checkpoint(out.scaler);
            write_atomic(&checkpoint_path(dir, target, model_cfg.variant, fold), serde_json::to_string(&ckpt)?.as_bytes())?;
        }
        folds.push(FoldResult {
            fold,
            n_train: tr.len(),
            n_val: va.len(),
            n_test: te.len(),
            best_epoch: out.best_epoch,
            mae,
            curve: out.curve,
        });
    }
    let maes: Vec<f64> = folds.iter().map(|f| f.mae).collect();
    Ok(VariantResult { config_hash: model_cfg.hash(), mean_mae: fold_mean(&maes)?, folds })
}

fn embedding_service(ws: &Workspace) -> Result<EmbeddingService> {
    crate::embed::service_for(ws)
}

/// Trains the requested targets and variants and merges the results into
/// the metrics file.
pub fn run_train(ws: &Workspace, entries: &[Entry], targets: &[TargetProperty], variants: &[Variant]) -> Result<MetricsFile> {
    let cfg = &ws.config;
    let selections = if variants.contains(&Variant::Fused) { read_selections(&ws.selections())? } else { SelectionCache::new() };
    let embeddings = embedding_service(ws)?;
    let metrics_path = ws.metrics();
    let mut metrics = match MetricsFile::read(&metrics_path) {
        Ok(m) if m.config == *cfg => m,
        _ => MetricsFile { backbone: cfg.backbone.clone(), config: cfg.clone(), results: BTreeMap::new() },
    };
    let train_cfg = TrainConfig { seed: cfg.seed, ..cfg.train.clone() };
    for &target in targets {
        for &variant in variants {
            let model_cfg = cfg.model_config(variant);
            let text = match variant {
                Variant::Fused => Some(text_features(entries, target, &selections, &embeddings)?),
                Variant::Base => None,
            };
            let samples = build_samples(entries, target, &model_cfg, text.as_ref())?;
            log::info!("training {target} / {variant} on {} molecules", samples.len());
            let result = run_folds(&samples, &model_cfg, &train_cfg, Some((&ws.checkpoints(), target)))?;
            println!("{target}\t{variant}\tmean MAE {:.6} {}", result.mean_mae, target.unit());
            metrics.results.entry(target).or_default().insert(variant, result);
        }
    }
    metrics.write(&metrics_path)?;
    Ok(metrics)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub target: TargetProperty,
    pub variant: Variant,
    pub fold_mae: Vec<f64>,
    pub mean_mae: f64,
}

/// Reloads saved checkpoints and scores them on their test folds.
pub fn run_evaluate(ws: &Workspace, entries: &[Entry], targets: &[TargetProperty], variants: &[Variant]) -> Result<Vec<Evaluation>> {
    let cfg = &ws.config;
    let selections = if variants.contains(&Variant::Fused) { read_selections(&ws.selections())? } else { SelectionCache::new() };
    let embeddings = embedding_service(ws)?;
    let train_cfg = TrainConfig { seed: cfg.seed, ..cfg.train.clone() };
    let mut out = Vec::new();
    for &target in targets {
        for &variant in variants {
            let model_cfg = cfg.model_config(variant);
            let text = match variant {
                Variant::Fused => Some(text_features(entries, target, &selections, &embeddings)?),
                Variant::Base => None,
            };
            let samples = build_samples(entries, target, &model_cfg, text.as_ref())?;
            let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
            let mut fold_mae = Vec::new();
            for (fold, plan) in fold_plans(&ids, &train_cfg)?.into_iter().enumerate() {
                let path = checkpoint_path(&ws.checkpoints(), target, variant, fold);
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading checkpoint {} (run `xchem train` first)", path.display()))?;
                let ckpt: Checkpoint = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                let model = Model::from_checkpoint(&ckpt, &model_cfg).with_context(|| format!("loading {}", path.display()))?;
                fold_mae.push(evaluate(&model, &ckpt.scaler, &pick(&samples, &plan.test))?);
            }
            let mean_mae = fold_mean(&fold_mae)?;
            out.push(Evaluation { target, variant, fold_mae, mean_mae });
        }
    }
    Ok(out)
}
