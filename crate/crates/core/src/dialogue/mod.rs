//! Selector/Validator dialogue.
//!
//! The selector proposes a weighted subset of the descriptor bank for a
//! target; the validator runs the deterministic rule layer and, when no
//! rule is fatal, asks its chat backend for a verdict. Rejections feed the
//! critique back to the selector for at most `max_rounds` rounds. If every
//! round is rejected the last usable proposal is kept and flagged as a
//! fallback.

pub mod prompt;
pub mod stub;
pub mod wire;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::descriptor::{DescriptorKind, DescriptorRecord};
use crate::rules::{self, Registry, Violation};
use crate::target::TargetProperty;

pub const DEFAULT_MAX_ROUNDS: usize = 3;

/// Weight sums inside this band are renormalized; outside it the proposal
/// is rejected locally.
pub const RENORMALIZE_BAND: (f64, f64) = (0.9, 1.1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Network or server failure; the caller may retry.
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("backend configuration error: {0}")]
    Config(String),
}

/// A chat model reachable by request/response. Implementations hold the
/// endpoint, model name and decoding settings.
pub trait ChatBackend {
    fn chat(&mut self, messages: &[ChatMessage]) -> Result<String, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &mut B {
    fn chat(&mut self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        (**self).chat(messages)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionProposal {
    pub subset: Vec<DescriptorKind>,
    pub weights: Vec<f64>,
    pub rationale: String,
}

impl SelectionProposal {
    pub fn names(&self) -> Vec<&'static str> {
        self.subset.iter().map(|k| k.key()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub accept: bool,
    pub critique: String,
}

impl Verdict {
    pub fn reject(critique: impl Into<String>) -> Self {
        let critique = critique.into();
        let critique = if critique.trim().is_empty() { "rejected without critique".into() } else { critique };
        Self { accept: false, critique }
    }

    pub fn accept(critique: impl Into<String>) -> Self {
        Self { accept: true, critique: critique.into() }
    }
}

/// One select/validate exchange.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueRound {
    /// One-based round number.
    pub round: usize,
    /// `None` when the selector produced no usable proposal this round.
    pub proposal: Option<SelectionProposal>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptedSelection {
    pub target: TargetProperty,
    pub subset: Vec<DescriptorKind>,
    pub weights: Vec<f64>,
    pub rounds_used: usize,
    pub fallback_used: bool,
    pub transcript: Vec<DialogueRound>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DialogueError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("max_rounds must be at least 1")]
    NoRounds,
    #[error("no round produced a usable proposal")]
    NoProposal,
    #[error("transcript has {0} rounds, more than the limit of {1}")]
    TooManyRounds(usize, usize),
}

impl AcceptedSelection {
    /// Rebuilds the final selection from a transcript: the first accepted
    /// round wins; otherwise the last round with a proposal is used as a
    /// fallback once `max_rounds` rounds have been spent.
    pub fn from_transcript(
        target: TargetProperty,
        transcript: Vec<DialogueRound>,
        max_rounds: usize,
    ) -> Result<Self, DialogueError> {
        if transcript.len() > max_rounds {
            return Err(DialogueError::TooManyRounds(transcript.len(), max_rounds));
        }
        let accepted = transcript
            .iter()
            .position(|r| r.verdict.accept && r.proposal.is_some());
        let (chosen, fallback_used) = match accepted {
            Some(i) => (i, false),
            None => {
                let last = transcript
                    .iter()
                    .rposition(|r| r.proposal.is_some())
                    .ok_or(DialogueError::NoProposal)?;
                (last, true)
            }
        };
        let mut transcript = transcript;
        if !fallback_used {
            transcript.truncate(chosen + 1);
        }
        let p = transcript[chosen].proposal.as_ref().expect("chosen round has a proposal");
        Ok(Self {
            target,
            subset: p.subset.clone(),
            weights: normalized(&p.weights),
            rounds_used: transcript.len(),
            fallback_used,
            transcript,
        })
    }
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter().map(|x| x / total).collect()
    } else {
        w.to_vec()
    }
}

/// Whether the selector sees only the target and bank, or also the
/// molecule's own descriptor values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorMode {
    #[default]
    TargetOnly,
    WithMolecule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueConfig {
    pub max_rounds: usize,
    pub selector_mode: SelectorMode,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        Self { max_rounds: DEFAULT_MAX_ROUNDS, selector_mode: SelectorMode::TargetOnly }
    }
}

/// Result of one selector turn.
#[derive(Clone, Debug, PartialEq)]
pub enum SelectOutcome {
    Proposal(SelectionProposal),
    /// Two attempts produced nothing usable; the reason becomes the
    /// round's automatic critique.
    Failed(String),
}

/// Converts a parsed reply into a proposal, renormalizing weights whose
/// sum lies in [`RENORMALIZE_BAND`].
pub fn local_check(raw: wire::RawProposal, bank: &[DescriptorKind]) -> Result<SelectionProposal, String> {
    let p = raw.features.len();
    if !(rules::MIN_SUBSET..=rules::MAX_SUBSET).contains(&p) {
        return Err(format!(
            "{p} features selected; between {} and {} are required",
            rules::MIN_SUBSET,
            rules::MAX_SUBSET
        ));
    }
    if raw.weights.len() != p {
        return Err(format!("{} weights given for {p} features", raw.weights.len()));
    }
    let mut subset = Vec::with_capacity(p);
    for name in &raw.features {
        let kind: DescriptorKind = name
            .parse()
            .map_err(|_| format!("`{name}` is not a descriptor in the bank"))?;
        if !bank.contains(&kind) {
            return Err(format!("`{name}` is not a descriptor in the bank"));
        }
        subset.push(kind);
    }
    if raw.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err("weights must be finite and non-negative".into());
    }
    let total: f64 = raw.weights.iter().sum();
    if !(RENORMALIZE_BAND.0..=RENORMALIZE_BAND.1).contains(&total) {
        return Err(format!("weights sum to {total:.3}; they must sum to 1"));
    }
    Ok(SelectionProposal {
        subset,
        weights: raw.weights.iter().map(|w| w / total).collect(),
        rationale: raw.reasoning,
    })
}

/// One selector turn: request, parse, locally validate, and re-request
/// once on failure.
pub fn select<B: ChatBackend + ?Sized>(
    target: TargetProperty,
    bank: &[DescriptorKind],
    history: &[DialogueRound],
    molecule: Option<&[DescriptorRecord]>,
    backend: &mut B,
) -> Result<SelectOutcome, BackendError> {
    let mut messages = alloc::vec![
        ChatMessage::system(prompt::SELECTOR_SYSTEM),
        ChatMessage::user(prompt::selector_request(target, bank, molecule)),
    ];
    for round in history {
        if let Some(p) = &round.proposal {
            messages.push(ChatMessage::assistant(proposal_json(p)));
        }
        if !round.verdict.accept {
            messages.push(ChatMessage::user(prompt::selector_revision(&round.verdict.critique)));
        }
    }

    let mut last_reason = String::new();
    for attempt in 0..2 {
        let reply = backend.chat(&messages)?;
        let checked = wire::parse_proposal(&reply).and_then(|raw| local_check(raw, bank));
        match checked {
            Ok(p) => return Ok(SelectOutcome::Proposal(p)),
            Err(reason) => {
                last_reason = reason;
                if attempt == 0 {
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(prompt::repair(&last_reason, prompt::PROPOSAL_SCHEMA)));
                }
            }
        }
    }
    Ok(SelectOutcome::Failed(format!("selector output unusable: {last_reason}")))
}

/// Serializes a proposal in the agent wire format.
pub fn proposal_json(p: &SelectionProposal) -> String {
    let value = serde_json::json!({
        "features": p.names(),
        "weights": p.weights,
        "reasoning": p.rationale,
    });
    value.to_string()
}

/// Validator decision plus the rule findings that informed it.
#[derive(Clone, Debug, PartialEq)]
pub struct Validation {
    pub verdict: Verdict,
    pub violations: Vec<Violation>,
    /// False when a fatal rule decided without consulting the backend.
    pub backend_consulted: bool,
}

pub fn validate<B: ChatBackend + ?Sized>(
    proposal: &SelectionProposal,
    target: TargetProperty,
    registry: &Registry,
    backend: &mut B,
) -> Result<Validation, BackendError> {
    let report = rules::evaluate(registry, &proposal.names(), &proposal.weights, target);
    if report.is_fatal() {
        return Ok(Validation {
            verdict: Verdict::reject(report.critique()),
            violations: report.violations,
            backend_consulted: false,
        });
    }

    let advisories: Vec<&Violation> = report.advisories().collect();
    let mut messages = alloc::vec![
        ChatMessage::system(prompt::VALIDATOR_SYSTEM),
        ChatMessage::user(prompt::validator_request(proposal, target, &advisories)),
    ];
    let mut verdict = None;
    for attempt in 0..2 {
        let reply = backend.chat(&messages)?;
        match wire::parse_verdict(&reply) {
            Ok(raw) => {
                verdict = Some(if raw.validated { Verdict::accept(raw.critique) } else { Verdict::reject(raw.critique) });
                break;
            }
            Err(reason) if attempt == 0 => {
                messages.push(ChatMessage::assistant(reply));
                messages.push(ChatMessage::user(prompt::repair(&reason, prompt::VERDICT_SCHEMA)));
            }
            Err(_) => {}
        }
    }
    Ok(Validation {
        verdict: verdict.unwrap_or_else(|| Verdict::reject("validator output unparseable")),
        violations: report.violations,
        backend_consulted: true,
    })
}

/// Runs the bounded select/validate loop for one molecule and target.
#[allow(clippy::too_many_arguments)]
pub fn run_dialogue<S, V>(
    target: TargetProperty,
    config: &DialogueConfig,
    registry: &Registry,
    molecule: Option<&[DescriptorRecord]>,
    selector: &mut S,
    validator: &mut V,
) -> Result<AcceptedSelection, DialogueError>
where
    S: ChatBackend + ?Sized,
    V: ChatBackend + ?Sized,
{
    if config.max_rounds == 0 {
        return Err(DialogueError::NoRounds);
    }
    let bank = DescriptorKind::ALL;
    let context = match config.selector_mode {
        SelectorMode::TargetOnly => None,
        SelectorMode::WithMolecule => molecule,
    };
    let mut transcript: Vec<DialogueRound> = Vec::with_capacity(config.max_rounds);
    for round in 1..=config.max_rounds {
        let record = match select(target, &bank, &transcript, context, selector)? {
            SelectOutcome::Proposal(p) => {
                let v = validate(&p, target, registry, validator)?;
                DialogueRound { round, proposal: Some(p), verdict: v.verdict, violations: v.violations }
            }
            SelectOutcome::Failed(reason) => DialogueRound {
                round,
                proposal: None,
                verdict: Verdict::reject(reason),
                violations: Vec::new(),
            },
        };
        let accepted = record.verdict.accept;
        transcript.push(record);
        if accepted {
            break;
        }
    }
    AcceptedSelection::from_transcript(target, transcript, config.max_rounds)
}

impl core::fmt::Display for SelectionProposal {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let parts: Vec<String> = self
            .subset
            .iter()
            .zip(&self.weights)
            .map(|(k, w)| format!("{}={w:.3}", k.key()))
            .collect();
        f.write_str(&parts.join(", "))
    }
}

impl Verdict {
    pub fn summary(&self) -> String {
        if self.accept { "accept".to_string() } else { format!("reject: {}", self.critique) }
    }
}
