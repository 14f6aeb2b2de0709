//! Offline chat backends for tests and runs without a model server.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{proposal_json, BackendError, ChatBackend, ChatMessage, SelectionProposal};
use crate::descriptor::DescriptorKind;
use crate::prior::prior_for;
use crate::target::TargetProperty;

/// Proposes the three most frequently selected descriptors for its target,
/// weighted by their mean importance. Every call returns the same reply.
#[derive(Clone, Debug)]
pub struct PriorSelector {
    target: TargetProperty,
}

impl PriorSelector {
    pub fn new(target: TargetProperty) -> Self {
        Self { target }
    }

    pub fn proposal(&self) -> SelectionProposal {
        let row = prior_for(self.target);
        let subset = row.top(3);
        let weights = row.weights_for(&subset);
        SelectionProposal {
            rationale: format!(
                "Most frequently useful descriptors for {}, weighted by their typical importance.",
                self.target.label()
            ),
            subset,
            weights,
        }
    }
}

impl ChatBackend for PriorSelector {
    fn chat(&mut self, _messages: &[ChatMessage]) -> Result<String, BackendError> {
        Ok(proposal_json(&self.proposal()))
    }
}

/// Samples subsets of size 3-5 with probability proportional to the
/// selection counts for its target, weighted by mean importance.
#[derive(Clone, Debug)]
pub struct SampledPriorSelector {
    target: TargetProperty,
    rng: ChaCha8Rng,
}

impl SampledPriorSelector {
    pub fn new(target: TargetProperty, seed: u64) -> Self {
        Self { target, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn sample(&mut self) -> SelectionProposal {
        let row = prior_for(self.target);
        let p = self.rng.random_range(3..=5usize);
        let mut remaining: Vec<usize> = (0..9).collect();
        let mut subset = Vec::with_capacity(p);
        for _ in 0..p {
            let total: u64 = remaining.iter().map(|&i| u64::from(row.counts[i])).sum();
            let mut ticket = self.rng.random_range(0..total);
            let pos = remaining
                .iter()
                .position(|&i| {
                    let c = u64::from(row.counts[i]);
                    if ticket < c {
                        true
                    } else {
                        ticket -= c;
                        false
                    }
                })
                .expect("ticket falls inside the total");
            subset.push(DescriptorKind::ALL[remaining.remove(pos)]);
        }
        let weights = row.weights_for(&subset);
        SelectionProposal { subset, weights, rationale: "sampled from the selection prior".into() }
    }
}

impl ChatBackend for SampledPriorSelector {
    fn chat(&mut self, _messages: &[ChatMessage]) -> Result<String, BackendError> {
        Ok(proposal_json(&self.sample()))
    }
}

/// Verdict policy of [`PolicyValidator`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValidatorPolicy {
    AcceptAll,
    RejectAll,
    /// Verdicts in call order; the last one repeats once exhausted.
    Script(Vec<bool>),
}

impl ValidatorPolicy {
    pub fn reject_then_accept() -> Self {
        ValidatorPolicy::Script(alloc::vec![false, true])
    }
}

#[derive(Clone, Debug)]
pub struct PolicyValidator {
    policy: ValidatorPolicy,
    calls: usize,
}

impl PolicyValidator {
    pub fn new(policy: ValidatorPolicy) -> Self {
        Self { policy, calls: 0 }
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl ChatBackend for PolicyValidator {
    fn chat(&mut self, _messages: &[ChatMessage]) -> Result<String, BackendError> {
        let accept = match &self.policy {
            ValidatorPolicy::AcceptAll => true,
            ValidatorPolicy::RejectAll => false,
            ValidatorPolicy::Script(s) => *s.get(self.calls).or(s.last()).unwrap_or(&true),
        };
        self.calls += 1;
        let critique = if accept {
            "Units and scaling relations are consistent with the target."
        } else {
            "Selection lacks complementary evidence; revise the weighting."
        };
        Ok(serde_json::json!({ "validated": accept, "critique": critique }).to_string())
    }
}

/// Replays canned replies in order, repeating the last one, and records
/// every request it receives.
#[derive(Clone, Debug, Default)]
pub struct ScriptedBackend {
    replies: Vec<Result<String, BackendError>>,
    pub requests: Vec<Vec<ChatMessage>>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self { replies: replies.into_iter().map(|s| Ok(s.into())).collect(), requests: Vec::new() }
    }

    pub fn with_results(replies: Vec<Result<String, BackendError>>) -> Self {
        Self { replies, requests: Vec::new() }
    }

    pub fn calls(&self) -> usize {
        self.requests.len()
    }
}

impl ChatBackend for ScriptedBackend {
    fn chat(&mut self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let i = self.requests.len().min(self.replies.len().saturating_sub(1));
        self.requests.push(messages.to_vec());
        self.replies
            .get(i)
            .cloned()
            .unwrap_or_else(|| Err(BackendError::Config("scripted backend has no replies".into())))
    }
}
