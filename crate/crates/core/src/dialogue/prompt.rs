use alloc::format;
use alloc::string::String;
use core::fmt::Write;

use crate::descriptor::{DescriptorKind, DescriptorRecord};
use crate::rules::Violation;
use crate::target::TargetProperty;

use super::SelectionProposal;

pub const SELECTOR_SYSTEM: &str = "You are a computational chemist choosing textual molecular descriptors \
that will be embedded and fused with a 3D graph neural network to predict a quantum-chemical property. \
Choose between 3 and 5 distinct descriptors from the bank that carry the most physically relevant evidence \
for the target, and give each a non-negative importance weight; the weights must sum to 1. \
Prefer complementary descriptors over redundant ones. \
Reply with a single JSON object and nothing else: \
{\"features\": [names], \"weights\": [numbers], \"reasoning\": \"short justification\"}.";

pub const VALIDATOR_SYSTEM: &str = "You are a physical chemist auditing a descriptor selection for a molecular \
property model. Check (i) unit consistency between each descriptor and the target property, \
(ii) adherence to known scaling relations (for example Koopmans' theorem for HOMO/LUMO energies), and \
(iii) sparsity and complementarity, rejecting redundant or uninformative combinations. \
Reply with a single JSON object and nothing else: \
{\"validated\": true or false, \"critique\": \"reasoning; required when rejecting\"}.";

pub fn selector_request(target: TargetProperty, bank: &[DescriptorKind], molecule: Option<&[DescriptorRecord]>) -> String {
    let mut s = format!("Target property: {} [{}], unit {}.\nDescriptor bank:\n", target.label(), target.key(), target.unit());
    for kind in bank {
        let _ = writeln!(s, "- {}: {}", kind.key(), kind.description());
    }
    if let Some(records) = molecule {
        s.push_str("Descriptor values for this molecule:\n");
        for r in records {
            let _ = writeln!(s, "- {}", r.embedding_text());
        }
    }
    s.push_str("Return your selection as JSON.");
    s
}

pub fn selector_revision(critique: &str) -> String {
    format!("The validator rejected the previous selection: {critique}\nPropose a revised selection as JSON.")
}

pub fn repair(reason: &str, schema: &str) -> String {
    format!("Your previous reply could not be used ({reason}). Reply again with only a JSON object of the form {schema}.")
}

pub const PROPOSAL_SCHEMA: &str = r#"{"features": [3-5 descriptor names from the bank], "weights": [non-negative numbers summing to 1], "reasoning": "..."}"#;
pub const VERDICT_SCHEMA: &str = r#"{"validated": true|false, "critique": "..."}"#;

pub fn validator_request(proposal: &SelectionProposal, target: TargetProperty, advisories: &[&Violation]) -> String {
    let mut s = format!("Target property: {} [{}], unit {}.\nProposed selection:\n", target.label(), target.key(), target.unit());
    for (kind, w) in proposal.subset.iter().zip(&proposal.weights) {
        let _ = writeln!(s, "- {} (weight {:.3}): {}", kind.key(), w, kind.description());
    }
    let _ = writeln!(s, "Selector rationale: {}", proposal.rationale);
    if !advisories.is_empty() {
        s.push_str("Automated rule advisories:\n");
        for v in advisories {
            let _ = writeln!(s, "- [{}] {}", v.code, v.message);
        }
    }
    s.push_str("Give your verdict as JSON.");
    s
}
