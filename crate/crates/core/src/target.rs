//! Regression targets carried by QM9-style records.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Hartree to electron-volt conversion applied once at ingestion.
pub const HARTREE_TO_EV: f64 = 27.211386245988;

/// Scalar molecular property predicted by the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetProperty {
    /// Dipole moment, D.
    Mu,
    /// Isotropic polarizability.
    Alpha,
    /// HOMO energy, eV.
    Homo,
    /// LUMO energy, eV.
    Lumo,
    /// HOMO-LUMO gap, eV.
    Gap,
    /// Electronic spatial extent, bohr².
    R2,
    /// Zero-point vibrational energy, eV.
    Zpve,
    /// Internal energy at 0 K, eV.
    U0,
    /// Internal energy at 298.15 K, eV.
    U298,
}

impl TargetProperty {
    pub const ALL: [TargetProperty; 9] = [
        TargetProperty::Mu,
        TargetProperty::Alpha,
        TargetProperty::Homo,
        TargetProperty::Lumo,
        TargetProperty::Gap,
        TargetProperty::R2,
        TargetProperty::Zpve,
        TargetProperty::U0,
        TargetProperty::U298,
    ];

    /// Stable lowercase key used in files and on the command line.
    pub fn key(self) -> &'static str {
        match self {
            TargetProperty::Mu => "mu",
            TargetProperty::Alpha => "alpha",
            TargetProperty::Homo => "homo",
            TargetProperty::Lumo => "lumo",
            TargetProperty::Gap => "gap",
            TargetProperty::R2 => "r2",
            TargetProperty::Zpve => "zpve",
            TargetProperty::U0 => "u0",
            TargetProperty::U298 => "u298",
        }
    }

    /// Human-readable label used in prompts and report headers.
    pub fn label(self) -> &'static str {
        match self {
            TargetProperty::Mu => "dipole moment (mu)",
            TargetProperty::Alpha => "isotropic polarizability (alpha)",
            TargetProperty::Homo => "HOMO energy (epsilon_H)",
            TargetProperty::Lumo => "LUMO energy (epsilon_L)",
            TargetProperty::Gap => "HOMO-LUMO gap (delta epsilon)",
            TargetProperty::R2 => "electronic spatial extent (<R^2>)",
            TargetProperty::Zpve => "zero-point vibrational energy (ZPVE)",
            TargetProperty::U0 => "internal energy at 0 K (U_0)",
            TargetProperty::U298 => "internal energy at 298 K (U_298)",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            TargetProperty::Mu => "D",
            TargetProperty::Alpha => "a0^3",
            TargetProperty::R2 => "bohr^2",
            _ => "eV",
        }
    }

    /// True for quantities stored in Hartree in raw QM9 records.
    pub fn is_hartree_valued(self) -> bool {
        matches!(
            self,
            TargetProperty::Homo
                | TargetProperty::Lumo
                | TargetProperty::Gap
                | TargetProperty::Zpve
                | TargetProperty::U0
                | TargetProperty::U298
        )
    }

    /// True for frontier-orbital targets.
    pub fn is_frontier_orbital(self) -> bool {
        matches!(self, TargetProperty::Homo | TargetProperty::Lumo | TargetProperty::Gap)
    }
}

impl fmt::Display for TargetProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown target property `{0}`")]
pub struct UnknownTarget(pub alloc::string::String);

impl FromStr for TargetProperty {
    type Err = UnknownTarget;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let found = match lower.as_str() {
            "mu" => TargetProperty::Mu,
            "alpha" => TargetProperty::Alpha,
            "homo" | "eps_h" => TargetProperty::Homo,
            "lumo" | "eps_l" => TargetProperty::Lumo,
            "gap" | "delta_eps" => TargetProperty::Gap,
            "r2" => TargetProperty::R2,
            "zpve" => TargetProperty::Zpve,
            "u0" => TargetProperty::U0,
            "u298" | "u" => TargetProperty::U298,
            _ => return Err(UnknownTarget(s.into())),
        };
        Ok(found)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_round_trip() {
        for t in TargetProperty::ALL {
            assert_eq!(t.key().parse::<TargetProperty>().unwrap(), t);
        }
        assert!("enthalpy".parse::<TargetProperty>().is_err());
    }

    #[test]
    fn hartree_targets_report_ev() {
        for t in TargetProperty::ALL {
            if t.is_hartree_valued() {
                assert_eq!(t.unit(), "eV");
            }
        }
    }
}
