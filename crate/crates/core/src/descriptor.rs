//! The closed bank of nine textual descriptors attached to each molecule.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of descriptor kinds in the bank.
pub const BANK_SIZE: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DescriptorKind {
    #[serde(rename = "IUPAC")]
    Iupac,
    Formula,
    MolecularWeight,
    XLogP,
    HBondDonors,
    HBondAcceptors,
    RotatableBonds,
    #[serde(rename = "PSA")]
    Psa,
    Synonyms,
}

impl DescriptorKind {
    /// Bank order; also the column order of selection-statistics tables.
    pub const ALL: [DescriptorKind; BANK_SIZE] = [
        DescriptorKind::Iupac,
        DescriptorKind::Formula,
        DescriptorKind::MolecularWeight,
        DescriptorKind::XLogP,
        DescriptorKind::HBondDonors,
        DescriptorKind::HBondAcceptors,
        DescriptorKind::RotatableBonds,
        DescriptorKind::Psa,
        DescriptorKind::Synonyms,
    ];

    /// Machine key used in metadata files and agent wire messages.
    pub fn key(self) -> &'static str {
        match self {
            DescriptorKind::Iupac => "IUPAC",
            DescriptorKind::Formula => "Formula",
            DescriptorKind::MolecularWeight => "MolecularWeight",
            DescriptorKind::XLogP => "XLogP",
            DescriptorKind::HBondDonors => "HBondDonors",
            DescriptorKind::HBondAcceptors => "HBondAcceptors",
            DescriptorKind::RotatableBonds => "RotatableBonds",
            DescriptorKind::Psa => "PSA",
            DescriptorKind::Synonyms => "Synonyms",
        }
    }

    /// Column header used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            DescriptorKind::Iupac => "IUPAC",
            DescriptorKind::Formula => "Formula",
            DescriptorKind::MolecularWeight => "Molecular Weight",
            DescriptorKind::XLogP => "XLogP",
            DescriptorKind::HBondDonors => "H-Bond Donors",
            DescriptorKind::HBondAcceptors => "H-Bond Acceptors",
            DescriptorKind::RotatableBonds => "Rotatable Bonds",
            DescriptorKind::Psa => "PSA",
            DescriptorKind::Synonyms => "Synonyms",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            DescriptorKind::Iupac => "systematic IUPAC name",
            DescriptorKind::Formula => "molecular formula (elemental composition)",
            DescriptorKind::MolecularWeight => "molecular mass in g/mol",
            DescriptorKind::XLogP => "computed octanol-water partition coefficient (lipophilicity)",
            DescriptorKind::HBondDonors => "count of hydrogen-bond donors",
            DescriptorKind::HBondAcceptors => "count of hydrogen-bond acceptors",
            DescriptorKind::RotatableBonds => "count of rotatable bonds",
            DescriptorKind::Psa => "topological polar surface area in square angstrom",
            DescriptorKind::Synonyms => "common names and registry synonyms",
        }
    }

    /// Unit suffix appended to the value when the descriptor is embedded.
    pub fn unit_suffix(self) -> Option<&'static str> {
        match self {
            DescriptorKind::MolecularWeight => Some("g/mol"),
            DescriptorKind::Psa => Some("Å²"),
            _ => None,
        }
    }

    /// Numeric descriptors must parse as finite numbers to count as present.
    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            DescriptorKind::MolecularWeight
                | DescriptorKind::XLogP
                | DescriptorKind::HBondDonors
                | DescriptorKind::HBondAcceptors
                | DescriptorKind::RotatableBonds
                | DescriptorKind::Psa
        )
    }

    pub fn is_count(self) -> bool {
        matches!(
            self,
            DescriptorKind::HBondDonors | DescriptorKind::HBondAcceptors | DescriptorKind::RotatableBonds
        )
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown descriptor `{0}`")]
pub struct UnknownDescriptor(pub String);

impl FromStr for DescriptorKind {
    type Err = UnknownDescriptor;

    /// Accepts the machine key, the display name, or either with spaces,
    /// hyphens and case differences removed.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        DescriptorKind::ALL
            .into_iter()
            .find(|k| {
                let key: String = k.key().chars().map(|c| c.to_ascii_lowercase()).collect();
                key == folded
            })
            .ok_or_else(|| UnknownDescriptor(s.into()))
    }
}

/// One descriptor value attached to a molecule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorRecord {
    pub kind: DescriptorKind,
    pub text: String,
}

impl DescriptorRecord {
    pub fn new(kind: DescriptorKind, text: impl Into<String>) -> Self {
        Self { kind, text: text.into() }
    }

    /// A record is usable when its text is non-empty and, for numeric kinds,
    /// parses as a finite number (non-negative integer for counts).
    pub fn is_usable(&self) -> bool {
        let text = self.text.trim();
        if text.is_empty() {
            return false;
        }
        if !self.kind.is_numeric() {
            return true;
        }
        match numeric_value(text) {
            Some(v) if self.kind.is_count() => v >= 0.0 && v == libm::floor(v),
            Some(_) => true,
            None => false,
        }
    }

    /// String handed to the text encoder, e.g. `Molecular Weight: 46.07 g/mol`.
    pub fn embedding_text(&self) -> String {
        let value = self.text.trim();
        match self.kind.unit_suffix() {
            Some(unit) if !value.ends_with(unit) => format!("{}: {} {}", self.kind.display_name(), value, unit),
            _ => format!("{}: {}", self.kind.display_name(), value),
        }
    }
}

/// Parses the leading numeric token of a descriptor value ("46.07 g/mol" → 46.07).
pub fn numeric_value(text: &str) -> Option<f64> {
    let token = text.split_whitespace().next()?;
    let v: f64 = token.parse().ok()?;
    v.is_finite().then_some(v)
}
