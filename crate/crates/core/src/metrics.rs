//! Error summaries and descriptor-selection tallies.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::descriptor::{DescriptorKind, BANK_SIZE};
use crate::dialogue::AcceptedSelection;
use crate::target::TargetProperty;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("percent change is undefined for a baseline MAE of zero")]
    ZeroBaseline,
    #[error("baseline MAE must be positive and finite")]
    InvalidBaseline,
    #[error("no values to average")]
    Empty,
}

/// `100·(fused − base)/base`; negative means the fused model is better.
pub fn percent_change(base_mae: f64, fused_mae: f64) -> Result<f64, MetricsError> {
    if base_mae == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    if !(base_mae.is_finite() && base_mae > 0.0) {
        return Err(MetricsError::InvalidBaseline);
    }
    Ok(100.0 * (fused_mae - base_mae) / base_mae)
}

pub fn fold_mean(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Test MAE per backbone and variant, laid out target by target.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaeTable {
    pub backbones: Vec<String>,
    pub rows: Vec<MaeRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaeRow {
    pub target: TargetProperty,
    /// One `[base, fused]` pair per backbone.
    pub values: Vec<[Option<f64>; 2]>,
}

impl MaeTable {
    pub fn percent_changes(&self) -> Vec<(TargetProperty, String, Option<f64>)> {
        let mut out = Vec::new();
        for row in &self.rows {
            for (bb, [base, fused]) in self.backbones.iter().zip(&row.values) {
                let pc = match (base, fused) {
                    (Some(b), Some(f)) => percent_change(*b, *f).ok(),
                    _ => None,
                };
                out.push((row.target, bb.clone(), pc));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("target,unit");
        for bb in &self.backbones {
            let _ = write!(s, ",{bb} base,{bb} fused");
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{},{}", row.target.key(), row.target.unit());
            for pair in &row.values {
                for v in pair {
                    match v {
                        Some(x) => {
                            let _ = write!(s, ",{x:.6}");
                        }
                        None => s.push(','),
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Per-target tallies of how often each descriptor was chosen and the
/// weight it carried when chosen.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub counts: BTreeMap<TargetProperty, [u64; BANK_SIZE]>,
    pub weight_sums: BTreeMap<TargetProperty, [f64; BANK_SIZE]>,
}

impl SelectionStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, target: TargetProperty, subset: &[DescriptorKind], weights: &[f64]) {
        let counts = self.counts.entry(target).or_insert([0; BANK_SIZE]);
        let sums = self.weight_sums.entry(target).or_insert([0.0; BANK_SIZE]);
        for (k, w) in subset.iter().zip(weights) {
            counts[k.index()] += 1;
            sums[k.index()] += w;
        }
    }

    /// Tallies accepted selections; fallback selections are not counted.
    pub fn from_selections<'a>(selections: impl IntoIterator<Item = &'a AcceptedSelection>) -> Self {
        let mut s = Self::new();
        for sel in selections {
            if !sel.fallback_used {
                s.record(sel.target, &sel.subset, &sel.weights);
            }
        }
        s
    }

    pub fn count(&self, target: TargetProperty, kind: DescriptorKind) -> u64 {
        self.counts.get(&target).map_or(0, |c| c[kind.index()])
    }

    /// Mean weight over the selections that included `kind`; zero if none did.
    pub fn importance(&self, target: TargetProperty, kind: DescriptorKind) -> f64 {
        let n = self.count(target, kind);
        if n == 0 {
            return 0.0;
        }
        self.weight_sums[&target][kind.index()] / n as f64
    }

    /// Two rows per target: selection counts, then mean importances.
    pub fn to_csv(&self, targets: &[TargetProperty]) -> String {
        let mut s = String::from("target,metric");
        for k in DescriptorKind::ALL {
            let _ = write!(s, ",{}", k.display_name());
        }
        s.push('\n');
        for &t in targets {
            s.push_str(t.key());
            s.push_str(",Selection Count");
            for k in DescriptorKind::ALL {
                let _ = write!(s, ",{}", self.count(t, k));
            }
            s.push('\n');
            s.push_str(t.key());
            s.push_str(",Normalized Importance");
            for k in DescriptorKind::ALL {
                s.push_str(&format!(",{:.4}", self.importance(t, k)));
            }
            s.push('\n');
        }
        s
    }
}
