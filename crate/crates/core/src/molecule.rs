use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::target::TargetProperty;

/// Element symbols indexed by atomic number minus one (H through Kr).
const SYMBOLS: [&str; 36] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr",
];

pub fn atomic_number(symbol: &str) -> Option<u8> {
    SYMBOLS
        .iter()
        .position(|s| s.eq_ignore_ascii_case(symbol))
        .map(|i| (i + 1) as u8)
}

pub fn element_symbol(z: u8) -> Option<&'static str> {
    SYMBOLS.get(usize::from(z).checked_sub(1)?).copied()
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MoleculeError {
    #[error("{positions} positions for {atoms} atomic numbers")]
    LengthMismatch { atoms: usize, positions: usize },
    #[error("atomic number must be >= 1")]
    ZeroAtomicNumber,
    #[error("non-finite coordinate on atom {0}")]
    NonFinitePosition(usize),
    #[error("target {0} is not finite")]
    NonFiniteTarget(TargetProperty),
}

/// A molecular geometry with its regression labels.
///
/// Positions are in Ångström; targets are in pipeline units (energies in eV).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub id: String,
    pub atomic_numbers: Vec<u8>,
    pub positions: Vec<[f64; 3]>,
    #[serde(default)]
    pub targets: BTreeMap<TargetProperty, f64>,
}

impl Molecule {
    pub fn new(
        id: impl Into<String>,
        atomic_numbers: Vec<u8>,
        positions: Vec<[f64; 3]>,
        targets: BTreeMap<TargetProperty, f64>,
    ) -> Result<Self, MoleculeError> {
        let m = Self { id: id.into(), atomic_numbers, positions, targets };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), MoleculeError> {
        if self.atomic_numbers.len() != self.positions.len() {
            return Err(MoleculeError::LengthMismatch {
                atoms: self.atomic_numbers.len(),
                positions: self.positions.len(),
            });
        }
        if self.atomic_numbers.contains(&0) {
            return Err(MoleculeError::ZeroAtomicNumber);
        }
        if let Some(i) = self.positions.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(MoleculeError::NonFinitePosition(i));
        }
        if let Some((t, _)) = self.targets.iter().find(|(_, v)| !v.is_finite()) {
            return Err(MoleculeError::NonFiniteTarget(*t));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.atomic_numbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atomic_numbers.is_empty()
    }

    pub fn target(&self, t: TargetProperty) -> Option<f64> {
        self.targets.get(&t).copied()
    }

    /// Trailing integer of the id, used as the metadata join key.
    pub fn index(&self) -> Option<u64> {
        record_index(&self.id)
    }
}

/// Extracts the trailing run of digits from an identifier (`gdb_123` → 123).
pub fn record_index(id: &str) -> Option<u64> {
    let digits: String = id
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}
