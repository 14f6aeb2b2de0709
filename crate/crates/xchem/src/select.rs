//! The select phase: one Selector/Validator dialogue per (molecule, target),
//! cached so interrupted runs resume where they stopped.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xchem_core::dialogue::stub::{PolicyValidator, PriorSelector, SampledPriorSelector, ValidatorPolicy};
use xchem_core::dialogue::{DialogueRound, SelectionProposal};
use xchem_core::rules::{Registry, Violation};
use xchem_core::{run_dialogue, AcceptedSelection, ChatBackend, Entry, TargetProperty, Verdict};

use crate::chat::HttpChat;
use crate::config::{BackendKind, StubSelector, StubValidator, Workspace};
use crate::embed::sha256_hex;
use crate::fsutil::{append_lines, write_atomic};

/// Dialogues run concurrently within a chunk; results are written in input order.
const CHUNK: usize = 64;

/// Reads a TOML (by extension) or JSON rule registry; the built-in table otherwise.
pub fn load_registry(path: Option<&Path>) -> Result<Registry> {
    let registry = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading rule registry {}", p.display()))?;
            let parsed = if p.extension().is_some_and(|e| e == "toml") {
                toml::from_str(&text).map_err(anyhow::Error::from)
            } else {
                serde_json::from_str(&text).map_err(anyhow::Error::from)
            };
            parsed.with_context(|| format!("parsing rule registry {}", p.display()))?
        }
        None => Registry::default(),
    };
    registry.validate()?;
    Ok(registry)
}

pub fn registry_hash(registry: &Registry) -> String {
    sha256_hex(serde_json::to_string(registry).expect("registry serializes").as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CachedSelection {
    pub molecule_id: String,
    pub selection: AcceptedSelection,
}

/// One dialogue round as written to the transcript log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRow {
    pub molecule_id: String,
    pub target: TargetProperty,
    pub round: usize,
    pub proposal: Option<SelectionProposal>,
    pub verdict: Verdict,
    pub violations: Vec<Violation>,
    /// Seconds since the Unix epoch; omitted in deterministic mode.
    pub timestamp: Option<u64>,
    pub registry_hash: String,
}

impl TranscriptRow {
    fn from_round(molecule_id: &str, target: TargetProperty, r: &DialogueRound, timestamp: Option<u64>, registry_hash: &str) -> Self {
        Self {
            molecule_id: molecule_id.to_string(),
            target,
            round: r.round,
            proposal: r.proposal.clone(),
            verdict: r.verdict.clone(),
            violations: r.violations.clone(),
            timestamp,
            registry_hash: registry_hash.to_string(),
        }
    }
}

pub type SelectionCache = BTreeMap<(String, TargetProperty), AcceptedSelection>;

pub fn read_selections(path: &Path) -> Result<SelectionCache> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(SelectionCache::new()),
        Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
    };
    let mut out = SelectionCache::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let c: CachedSelection = serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        out.insert((c.molecule_id, c.selection.target), c.selection);
    }
    Ok(out)
}

fn write_selections(path: &Path, cache: &SelectionCache) -> Result<()> {
    let mut buf = String::new();
    for ((id, _), selection) in cache {
        buf.push_str(&serde_json::to_string(&CachedSelection { molecule_id: id.clone(), selection: selection.clone() })?);
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes())
}

/// Stub selector stream seed for one (molecule, target) pair.
pub fn stub_seed(seed: u64, molecule_index: u64, target: TargetProperty) -> u64 {
    let t = TargetProperty::ALL.iter().position(|x| *x == target).unwrap_or(0) as u64;
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ molecule_index.wrapping_mul(0xbf58_476d_1ce4_e5b9) ^ t.wrapping_mul(0x94d0_49bb_1331_11eb)
}

type Agent = Box<dyn ChatBackend + Send>;

fn agents(ws: &Workspace, entry: &Entry, target: TargetProperty) -> Result<(Agent, Agent)> {
    let b = &ws.config.backends;
    let timeout = Duration::from_secs(b.timeout_secs);
    let http = || -> Result<Agent> {
        let url = b.chat_url.clone().context("chat backend is http but no chat_url is set")?;
        Ok(Box::new(HttpChat::new(url, b.chat_model.clone(), b.temperature, timeout, b.retries)?))
    };
    if b.chat == BackendKind::Http {
        return Ok((http()?, http()?));
    }
    let selector: Agent = match b.stub_selector {
        StubSelector::Top => Box::new(PriorSelector::new(target)),
        StubSelector::Sampled => {
            let index = entry.molecule.index().unwrap_or(0);
            Box::new(SampledPriorSelector::new(target, stub_seed(ws.config.seed, index, target)))
        }
    };
    let policy = match b.stub_validator {
        StubValidator::AcceptAll => ValidatorPolicy::AcceptAll,
        StubValidator::RejectAll => ValidatorPolicy::RejectAll,
        StubValidator::RejectThenAccept => ValidatorPolicy::reject_then_accept(),
    };
    Ok((selector, Box::new(PolicyValidator::new(policy))))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SelectReport {
    pub cached: usize,
    pub completed: usize,
    pub rounds: usize,
    pub fallbacks: usize,
    /// `(molecule id, target, error)` for every dialogue that failed.
    pub failed: Vec<(String, TargetProperty, String)>,
}

pub fn run_select(ws: &Workspace, entries: &[Entry], targets: &[TargetProperty], force: bool) -> Result<SelectReport> {
    let registry = load_registry(ws.registry().as_deref())?;
    let reg_hash = registry_hash(&registry);
    let dialogue = ws.config.dialogue.to_config();
    let selections_path = ws.selections();
    let transcripts_path = ws.transcripts();

    let mut cache = read_selections(&selections_path)?;
    if force {
        cache.retain(|(_, t), _| !targets.contains(t));
        write_selections(&selections_path, &cache)?;
        drop_transcripts(&transcripts_path, targets)?;
    }

    let mut report = SelectReport::default();
    let mut pending = Vec::new();
    for target in targets {
        for e in entries {
            if cache.contains_key(&(e.id().to_string(), *target)) {
                report.cached += 1;
            } else {
                pending.push((e, *target));
            }
        }
    }

    for chunk in pending.chunks(CHUNK) {
        let results: Vec<Result<AcceptedSelection>> = chunk
            .par_iter()
            .map(|(entry, target)| {
                let (mut selector, mut validator) = agents(ws, entry, *target)?;
                let sel = run_dialogue(*target, &dialogue, &registry, Some(&entry.descriptors), &mut *selector, &mut *validator)?;
                Ok(sel)
            })
            .collect();
        let timestamp = (!ws.config.deterministic)
            .then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        let mut lines = Vec::new();
        for ((entry, target), res) in chunk.iter().zip(results) {
            match res {
                Ok(sel) => {
                    for r in &sel.transcript {
                        lines.push(serde_json::to_string(&TranscriptRow::from_round(entry.id(), *target, r, timestamp, &reg_hash))?);
                    }
                    report.completed += 1;
                    report.rounds += sel.rounds_used;
                    report.fallbacks += usize::from(sel.fallback_used);
                    cache.insert((entry.id().to_string(), *target), sel);
                }
                Err(e) => {
                    log::error!("dialogue for {} / {} failed: {e:#}", entry.id(), target);
                    report.failed.push((entry.id().to_string(), *target, format!("{e:#}")));
                }
            }
        }
        append_lines(&transcripts_path, &lines)?;
        write_selections(&selections_path, &cache)?;
    }
    Ok(report)
}

fn drop_transcripts(path: &Path, targets: &[TargetProperty]) -> Result<()> {
    let Ok(text) = fs::read_to_string(path) else { return Ok(()) };
    let mut kept = String::new();
    for line in text.lines() {
        let stale = serde_json::from_str::<TranscriptRow>(line).is_ok_and(|r| targets.contains(&r.target));
        if !stale {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    write_atomic(path, kept.as_bytes())
}

/// Transcript rows plus the number of unreadable lines that were skipped.
pub fn read_transcripts(path: &Path) -> Result<(Vec<TranscriptRow>, usize)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading transcripts {} (run `xchem select` first)", path.display()))?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        match serde_json::from_str(line) {
            Ok(r) => rows.push(r),
            Err(e) => {
                log::warn!("{}:{}: skipping malformed transcript line ({e})", path.display(), n + 1);
                skipped += 1;
            }
        }
    }
    Ok((rows, skipped))
}
