//! Deterministic physics rules applied to descriptor proposals before any
//! validator model is consulted.
//!
//! Rules work on raw descriptor names so that malformed proposals (unknown
//! names, duplicates) can be reported rather than rejected at parse time.
//! A name is known when it is a key of the registry's signature table.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorKind;
use crate::target::TargetProperty;

/// Allowed deviation of a weight vector's sum from one.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-3;
pub const MIN_SUBSET: usize = 3;
pub const MAX_SUBSET: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseDimension {
    Mass,
    Length,
    Time,
    Charge,
    Amount,
    Temperature,
}

/// Physical dimension of a descriptor value.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DimensionSignature {
    pub exponents: BTreeMap<BaseDimension, i32>,
    /// Purely linguistic value (names, formulas); carries no exponents.
    pub textual: bool,
}

impl DimensionSignature {
    pub fn textual() -> Self {
        Self { exponents: BTreeMap::new(), textual: true }
    }

    pub fn dimensionless() -> Self {
        Self::default()
    }

    pub fn of(exponents: &[(BaseDimension, i32)]) -> Self {
        Self {
            exponents: exponents.iter().copied().filter(|(_, e)| *e != 0).collect(),
            textual: false,
        }
    }

    pub fn is_dimensionless(&self) -> bool {
        !self.textual && self.exponents.is_empty()
    }
}

impl Serialize for DimensionSignature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.textual {
            s.serialize_str("textual")
        } else if self.exponents.is_empty() {
            s.serialize_str("dimensionless")
        } else {
            self.exponents.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for DimensionSignature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Word(String),
            Exponents(BTreeMap<BaseDimension, i32>),
        }
        match Repr::deserialize(d)? {
            Repr::Word(w) if w == "textual" => Ok(Self::textual()),
            Repr::Word(w) if w == "dimensionless" => Ok(Self::dimensionless()),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "signature must be `textual`, `dimensionless` or an exponent table, got `{w}`"
            ))),
            Repr::Exponents(e) => Ok(Self { exponents: e.into_iter().filter(|(_, v)| *v != 0).collect(), textual: false }),
        }
    }
}

/// Descriptors favored for a target by a known scaling relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRule {
    pub target: TargetProperty,
    pub favored: Vec<String>,
    pub note: String,
}

/// A group of descriptors whose joint selection in a small subset carries
/// overlapping evidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedundancyRule {
    pub descriptors: Vec<String>,
    /// The advisory fires only for subsets of exactly this size.
    pub subset_size: usize,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub version: u32,
    pub signatures: BTreeMap<String, DimensionSignature>,
    #[serde(default)]
    pub scaling: Vec<ScalingRule>,
    #[serde(default)]
    pub redundancy: Vec<RedundancyRule>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("registry signature `{0}` is not a bank descriptor")]
    UnknownSignature(String),
    #[error("bank descriptor `{0}` has no signature")]
    MissingSignature(String),
    #[error("rule references unknown descriptor `{0}`")]
    UnknownReference(String),
}

impl Default for Registry {
    fn default() -> Self {
        use BaseDimension::*;
        let mut signatures = BTreeMap::new();
        for kind in DescriptorKind::ALL {
            let sig = match kind {
                DescriptorKind::MolecularWeight => DimensionSignature::of(&[(Mass, 1), (Amount, -1)]),
                DescriptorKind::Psa => DimensionSignature::of(&[(Length, 2)]),
                DescriptorKind::Iupac | DescriptorKind::Formula | DescriptorKind::Synonyms => {
                    DimensionSignature::textual()
                }
                _ => DimensionSignature::dimensionless(),
            };
            signatures.insert(kind.key().to_string(), sig);
        }
        let koopmans = |target| ScalingRule {
            target,
            favored: alloc::vec!["Formula".into(), "XLogP".into()],
            note: "Koopmans-type relation: frontier orbital energies track composition and electronic character"
                .into(),
        };
        Registry {
            version: 1,
            signatures,
            scaling: alloc::vec![
                koopmans(TargetProperty::Homo),
                koopmans(TargetProperty::Lumo),
                koopmans(TargetProperty::Gap),
            ],
            redundancy: alloc::vec![RedundancyRule {
                descriptors: alloc::vec!["HBondDonors".into(), "HBondAcceptors".into(), "PSA".into()],
                subset_size: 3,
                note: "donor/acceptor counts and polar surface area carry overlapping polarity evidence".into(),
            }],
        }
    }
}

impl Registry {
    /// Checks that the signature table covers exactly the bank and that
    /// every rule references known descriptors.
    pub fn validate(&self) -> Result<(), RegistryError> {
        for name in self.signatures.keys() {
            if !DescriptorKind::ALL.iter().any(|k| k.key() == name) {
                return Err(RegistryError::UnknownSignature(name.clone()));
            }
        }
        for kind in DescriptorKind::ALL {
            if !self.signatures.contains_key(kind.key()) {
                return Err(RegistryError::MissingSignature(kind.key().into()));
            }
        }
        let referenced = self
            .scaling
            .iter()
            .flat_map(|r| r.favored.iter())
            .chain(self.redundancy.iter().flat_map(|r| r.descriptors.iter()));
        for name in referenced {
            if !self.signatures.contains_key(name) {
                return Err(RegistryError::UnknownReference(name.clone()));
            }
        }
        Ok(())
    }

    pub fn signature(&self, name: &str) -> Option<&DimensionSignature> {
        self.signatures.get(name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Fatal,
    Advisory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    Cardinality,
    WeightCount,
    NegativeWeight,
    WeightSum,
    Duplicate,
    UnknownDescriptor,
    AllTextual,
    WeakRelevance,
    Scaling,
    OverlappingEvidence,
}

impl ViolationCode {
    pub fn severity(self) -> Severity {
        match self {
            ViolationCode::WeakRelevance | ViolationCode::Scaling | ViolationCode::OverlappingEvidence => {
                Severity::Advisory
            }
            _ => Severity::Fatal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::Cardinality => "cardinality",
            ViolationCode::WeightCount => "weight_count",
            ViolationCode::NegativeWeight => "negative_weight",
            ViolationCode::WeightSum => "weight_sum",
            ViolationCode::Duplicate => "duplicate",
            ViolationCode::UnknownDescriptor => "unknown_descriptor",
            ViolationCode::AllTextual => "all_textual",
            ViolationCode::WeakRelevance => "weak_relevance",
            ViolationCode::Scaling => "scaling",
            ViolationCode::OverlappingEvidence => "overlapping_evidence",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One rule finding: a machine code, an optional subject (descriptor or
/// target key) and a sentence suitable for a critique.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub severity: Severity,
    pub subject: Option<String>,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, subject: Option<&str>, message: String) -> Self {
        Self { code, severity: code.severity(), subject: subject.map(Into::into), message }
    }

    pub fn is_fatal(&self) -> bool {
        self.severity == Severity::Fatal
    }

    /// Identity used for de-duplication and multiset comparison.
    pub fn key(&self) -> (ViolationCode, Option<&str>) {
        (self.code, self.subject.as_deref())
    }
}

fn sorted(mut v: Vec<Violation>) -> Vec<Violation> {
    v.sort();
    v
}

/// Names appearing more than once, each reported once.
fn duplicated<'a, S: AsRef<str>>(names: &'a [S]) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::new();
    let mut dup = BTreeSet::new();
    for n in names {
        if !seen.insert(n.as_ref()) {
            dup.insert(n.as_ref());
        }
    }
    dup
}

fn duplicate_violations<S: AsRef<str>>(names: &[S]) -> Vec<Violation> {
    duplicated(names)
        .into_iter()
        .map(|n| Violation::new(ViolationCode::Duplicate, Some(n), format!("{n} is selected more than once.")))
        .collect()
}

/// Subset size, simplex membership of the weights and name distinctness.
pub fn check_cardinality_and_simplex<S: AsRef<str>>(names: &[S], weights: &[f64]) -> Vec<Violation> {
    let mut out = Vec::new();
    let p = names.len();
    if !(MIN_SUBSET..=MAX_SUBSET).contains(&p) {
        out.push(Violation::new(
            ViolationCode::Cardinality,
            None,
            format!("The subset has {p} descriptors; between {MIN_SUBSET} and {MAX_SUBSET} are required."),
        ));
    }
    if weights.len() != p {
        out.push(Violation::new(
            ViolationCode::WeightCount,
            None,
            format!("{} weights were given for {p} descriptors.", weights.len()),
        ));
    }
    if weights.iter().any(|w| *w < 0.0) {
        out.push(Violation::new(
            ViolationCode::NegativeWeight,
            None,
            "Weights must be non-negative.".into(),
        ));
    }
    let sum: f64 = weights.iter().sum();
    if !((sum - 1.0).abs() <= WEIGHT_SUM_TOLERANCE) {
        out.push(Violation::new(
            ViolationCode::WeightSum,
            None,
            format!("The weights sum to {sum:.4}; they must sum to 1."),
        ));
    }
    out.extend(duplicate_violations(names));
    sorted(out)
}

/// Unit consistency between each descriptor and the target.
///
/// Textual descriptors are advisories unless every descriptor is textual,
/// in which case a single fatal violation replaces them.
pub fn check_units<S: AsRef<str>>(registry: &Registry, names: &[S], target: TargetProperty) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut textual = BTreeSet::new();
    let mut all_textual = !names.is_empty();
    let mut unknown = BTreeSet::new();
    for n in names {
        let n = n.as_ref();
        match registry.signature(n) {
            None => {
                unknown.insert(n);
                all_textual = false;
            }
            Some(sig) if sig.textual => {
                textual.insert(n);
            }
            Some(_) => all_textual = false,
        }
    }
    for n in unknown {
        out.push(Violation::new(
            ViolationCode::UnknownDescriptor,
            Some(n),
            format!("{n} is not a descriptor in the bank."),
        ));
    }
    if all_textual {
        out.push(Violation::new(
            ViolationCode::AllTextual,
            None,
            format!(
                "Every selected descriptor is purely textual; none carries a physical quantity related to {}.",
                target.label()
            ),
        ));
    } else {
        for n in textual {
            out.push(Violation::new(
                ViolationCode::WeakRelevance,
                Some(n),
                format!("{n} is textual metadata with no physical unit; its relevance to {} is weak.", target.label()),
            ));
        }
    }
    sorted(out)
}

/// Scaling-relation advisories (never fatal).
pub fn check_scaling<S: AsRef<str>>(registry: &Registry, names: &[S], target: TargetProperty) -> Vec<Violation> {
    let mut out = Vec::new();
    for rule in registry.scaling.iter().filter(|r| r.target == target) {
        let present = rule.favored.iter().any(|f| names.iter().any(|n| n.as_ref() == f));
        if !present {
            out.push(Violation::new(
                ViolationCode::Scaling,
                Some(target.key()),
                format!(
                    "For {} none of [{}] is selected ({}).",
                    target.label(),
                    rule.favored.join(", "),
                    rule.note
                ),
            ));
        }
    }
    sorted(out)
}

/// Duplicate names (fatal) and overlapping-evidence groups (advisory).
pub fn check_redundancy<S: AsRef<str>>(registry: &Registry, names: &[S]) -> Vec<Violation> {
    let mut out = duplicate_violations(names);
    for rule in &registry.redundancy {
        let all_present = rule.descriptors.iter().all(|d| names.iter().any(|n| n.as_ref() == d));
        if all_present && names.len() == rule.subset_size {
            out.push(Violation::new(
                ViolationCode::OverlappingEvidence,
                Some(&rule.descriptors.join("+")),
                format!("[{}] together: {}.", rule.descriptors.join(", "), rule.note),
            ));
        }
    }
    sorted(out)
}

/// Combined outcome of every rule for one proposal.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    pub violations: Vec<Violation>,
}

impl RuleReport {
    pub fn is_fatal(&self) -> bool {
        self.violations.iter().any(Violation::is_fatal)
    }

    pub fn fatal(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.is_fatal())
    }

    pub fn advisories(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| !v.is_fatal())
    }

    /// Critique text built from the fatal findings.
    pub fn critique(&self) -> String {
        let reasons: Vec<&str> = self.fatal().map(|v| v.message.as_str()).collect();
        format!("Rejected by rule checks: {}", reasons.join(" "))
    }
}

/// Runs all rules; findings reported by more than one rule appear once.
pub fn evaluate<S: AsRef<str>>(registry: &Registry, names: &[S], weights: &[f64], target: TargetProperty) -> RuleReport {
    let mut all = check_cardinality_and_simplex(names, weights);
    all.extend(check_units(registry, names, target));
    all.extend(check_scaling(registry, names, target));
    all.extend(check_redundancy(registry, names));
    all.sort();
    all.dedup_by(|a, b| a.key() == b.key());
    RuleReport { violations: all }
}
