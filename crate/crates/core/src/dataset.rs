//! Dataset records, completeness filtering and k-fold assignment.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::descriptor::{DescriptorKind, DescriptorRecord};
use crate::molecule::Molecule;

/// A molecule joined with its descriptor metadata; one line of the
/// canonical dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    #[serde(flatten)]
    pub molecule: Molecule,
    #[serde(serialize_with = "ser_descriptors", deserialize_with = "de_descriptors")]
    pub descriptors: Vec<DescriptorRecord>,
}

fn ser_descriptors<S: Serializer>(records: &[DescriptorRecord], s: S) -> Result<S::Ok, S::Error> {
    let map: BTreeMap<DescriptorKind, &str> = records.iter().map(|r| (r.kind, r.text.as_str())).collect();
    map.serialize(s)
}

fn de_descriptors<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DescriptorRecord>, D::Error> {
    let map = BTreeMap::<DescriptorKind, String>::deserialize(d)?;
    Ok(map.into_iter().map(|(kind, text)| DescriptorRecord { kind, text }).collect())
}

impl Entry {
    pub fn new(molecule: Molecule, descriptors: Vec<DescriptorRecord>) -> Self {
        Self { molecule, descriptors }
    }

    pub fn id(&self) -> &str {
        &self.molecule.id
    }

    pub fn descriptor(&self, kind: DescriptorKind) -> Option<&DescriptorRecord> {
        self.descriptors.iter().find(|r| r.kind == kind && r.is_usable())
    }

    /// True when every bank descriptor is present and usable.
    pub fn is_complete(&self) -> bool {
        DescriptorKind::ALL.iter().all(|k| self.descriptor(*k).is_some())
    }
}

/// Keeps the entries carrying all nine descriptors, in input order.
///
/// Present-but-unparseable numeric values count as missing.
pub fn filter_complete(entries: Vec<Entry>) -> Vec<Entry> {
    entries.into_iter().filter(Entry::is_complete).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FoldError {
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{k} folds requested for {n} ids")]
    MoreFoldsThanIds { k: usize, n: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub seed: u64,
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = alloc::vec![0; self.k];
        for f in self.assignments.values() {
            sizes[*f] += 1;
        }
        sizes
    }

    /// Positions in `ids` belonging to `fold` (test) and to every other fold
    /// (train), each in `ids` order. Ids without an assignment are ignored.
    pub fn partition(&self, ids: &[&str], fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, id) in ids.iter().enumerate() {
            match self.fold_of(id) {
                Some(f) if f == fold => test.push(i),
                Some(_) => train.push(i),
                None => {}
            }
        }
        (train, test)
    }
}

/// Deterministic, balanced assignment of ids to `k` folds.
///
/// Ids are shuffled with a ChaCha8 stream seeded by `seed`; the i-th
/// shuffled id goes to fold `i % k`, so fold sizes differ by at most one.
pub fn make_folds<S: AsRef<str>>(ids: &[S], k: usize, seed: u64) -> Result<FoldSplit, FoldError> {
    if k < 2 {
        return Err(FoldError::TooFewFolds(k));
    }
    if k > ids.len() {
        return Err(FoldError::MoreFoldsThanIds { k, n: ids.len() });
    }
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.as_ref()) {
            return Err(FoldError::DuplicateId(id.as_ref().into()));
        }
    }

    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignments = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| (String::from(ids[i].as_ref()), pos % k))
        .collect();
    Ok(FoldSplit { seed, k, assignments })
}
