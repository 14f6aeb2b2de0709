//! Reading XYZ directories and descriptor metadata into the canonical
//! dataset file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde_json::Value;
use xchem_core::molecule::record_index;
use xchem_core::{filter_complete, parse_xyz, DescriptorKind, DescriptorRecord, Entry, Molecule};

use crate::fsutil::write_atomic;

pub fn xyz_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let listing = fs::read_dir(dir).with_context(|| format!("reading XYZ directory {}", dir.display()))?;
    let mut files = Vec::new();
    for e in listing {
        let p = e?.path();
        if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xyz")) {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no .xyz files in {}", dir.display());
    }
    Ok(files)
}

pub fn read_molecules(dir: &Path) -> Result<Vec<Molecule>> {
    xyz_files(dir)?
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_xyz(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

fn value_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(value_text).collect();
            Some(parts.join("; "))
        }
        _ => None,
    }
}

/// Descriptor records keyed by record index. Fields outside the bank
/// are ignored.
pub fn read_metadata(path: &Path) -> Result<BTreeMap<u64, Vec<DescriptorRecord>>> {
    let file = fs::File::open(path).with_context(|| format!("opening metadata {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Map<String, Value> = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: not a JSON object", path.display(), n + 1))?;
        let id = obj
            .get("id")
            .and_then(value_text)
            .with_context(|| format!("{}:{}: missing id", path.display(), n + 1))?;
        let index = record_index(&id).with_context(|| format!("{}:{}: id `{id}` carries no record index", path.display(), n + 1))?;
        let mut records = Vec::new();
        for (key, value) in &obj {
            if key == "id" {
                continue;
            }
            if let (Ok(kind), Some(text)) = (DescriptorKind::from_str(key), value_text(value)) {
                records.push(DescriptorRecord::new(kind, text));
            }
        }
        records.sort_by_key(|r| r.kind);
        out.insert(index, records);
    }
    Ok(out)
}

pub fn join(molecules: Vec<Molecule>, metadata: &BTreeMap<u64, Vec<DescriptorRecord>>) -> Vec<Entry> {
    molecules
        .into_iter()
        .map(|m| {
            let descriptors = m.index().and_then(|i| metadata.get(&i)).cloned().unwrap_or_default();
            Entry::new(m, descriptors)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct IngestOutcome {
    pub retained: Vec<Entry>,
    pub dropped: Vec<String>,
}

pub fn ingest(xyz_dir: &Path, metadata: &Path) -> Result<IngestOutcome> {
    let molecules = read_molecules(xyz_dir)?;
    let meta = read_metadata(metadata)?;
    let joined = join(molecules, &meta);
    let all_ids: Vec<String> = joined.iter().map(|e| e.id().to_string()).collect();
    let retained = filter_complete(joined);
    let kept: std::collections::BTreeSet<&str> = retained.iter().map(Entry::id).collect();
    let dropped = all_ids.iter().filter(|id| !kept.contains(id.as_str())).cloned().collect();
    Ok(IngestOutcome { retained, dropped })
}

pub fn write_dataset(path: &Path, entries: &[Entry]) -> Result<()> {
    let mut buf = String::new();
    for e in entries {
        buf.push_str(&serde_json::to_string(e)?);
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Vec<Entry>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading dataset {} (run `xchem ingest` first)", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), n + 1)))
        .collect()
}
