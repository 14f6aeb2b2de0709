//! Reader and writer for QM9-style XYZ records.
//!
//! A record is an atom-count line, a comment line and one line per atom
//! (`symbol x y z [charge]`). QM9 comment lines start with `gdb <index>`
//! followed by fifteen properties; raw QM9 floats may use Mathematica's
//! `*^` exponent marker. Anything after the atom block (frequencies,
//! SMILES, InChI) is ignored.
//!
//! Comment lines that do not start with `gdb` are read as whitespace
//! separated `key=value` pairs (`id=...` plus target keys in pipeline
//! units), or as a bare identifier.

use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::molecule::{atomic_number, element_symbol, Molecule};
use crate::target::{TargetProperty, HARTREE_TO_EV};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct XyzError {
    /// One-based line number.
    pub line: usize,
    pub kind: XyzErrorKind,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum XyzErrorKind {
    #[error("missing atom count")]
    MissingAtomCount,
    #[error("malformed atom count `{0}`")]
    BadAtomCount(String),
    #[error("record ends before atom {0}")]
    Truncated(usize),
    #[error("unknown element symbol `{0}`")]
    UnknownElement(String),
    #[error("expected element and three coordinates")]
    ShortAtomLine,
    #[error("malformed number `{0}`")]
    BadNumber(String),
    #[error("non-finite value `{0}`")]
    NonFinite(String),
    #[error("QM9 property line has {0} fields, expected 17")]
    ShortPropertyLine(usize),
    #[error("unknown comment key `{0}`")]
    UnknownKey(String),
}

fn err(line: usize, kind: XyzErrorKind) -> XyzError {
    XyzError { line, kind }
}

/// Parses a float, accepting the `*^` exponent marker used in raw QM9 files.
pub fn parse_float(token: &str) -> Option<f64> {
    let normalized: Cow<'_, str> = if token.contains("*^") {
        Cow::Owned(token.replace("*^", "e"))
    } else {
        Cow::Borrowed(token)
    };
    normalized.parse().ok()
}

fn finite_float(token: &str, line: usize) -> Result<f64, XyzError> {
    let v = parse_float(token).ok_or_else(|| err(line, XyzErrorKind::BadNumber(token.into())))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err(line, XyzErrorKind::NonFinite(token.into())))
    }
}

/// Order of the fifteen numeric fields after `gdb <index>`.
const QM9_FIELDS: [Option<TargetProperty>; 15] = [
    None, // A
    None, // B
    None, // C
    Some(TargetProperty::Mu),
    Some(TargetProperty::Alpha),
    Some(TargetProperty::Homo),
    Some(TargetProperty::Lumo),
    Some(TargetProperty::Gap),
    Some(TargetProperty::R2),
    Some(TargetProperty::Zpve),
    Some(TargetProperty::U0),
    Some(TargetProperty::U298),
    None, // H
    None, // G
    None, // Cv
];

pub fn parse_xyz(text: &str) -> Result<Molecule, XyzError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (count_line, count_text) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| err(1, XyzErrorKind::MissingAtomCount))?;
    let natoms: usize = count_text
        .trim()
        .parse()
        .map_err(|_| err(count_line, XyzErrorKind::BadAtomCount(count_text.trim().into())))?;

    let (comment_line, comment) = lines.next().unwrap_or((count_line + 1, ""));
    let (id, targets) = parse_comment(comment, comment_line)?;

    let mut atomic_numbers = Vec::with_capacity(natoms);
    let mut positions = Vec::with_capacity(natoms);
    for atom in 0..natoms {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| err(comment_line + atom + 1, XyzErrorKind::Truncated(atom + 1)))?;
        let mut fields = line.split_whitespace();
        let symbol = fields.next().ok_or_else(|| err(lineno, XyzErrorKind::ShortAtomLine))?;
        let z = atomic_number(symbol)
            .or_else(|| symbol.parse::<u8>().ok().filter(|z| element_symbol(*z).is_some()))
            .ok_or_else(|| err(lineno, XyzErrorKind::UnknownElement(symbol.into())))?;
        let mut xyz = [0.0; 3];
        for c in xyz.iter_mut() {
            let tok = fields.next().ok_or_else(|| err(lineno, XyzErrorKind::ShortAtomLine))?;
            *c = finite_float(tok, lineno)?;
        }
        atomic_numbers.push(z);
        positions.push(xyz);
    }

    Ok(Molecule { id, atomic_numbers, positions, targets })
}

fn parse_comment(comment: &str, line: usize) -> Result<(String, BTreeMap<TargetProperty, f64>), XyzError> {
    let tokens: Vec<&str> = comment.split_whitespace().collect();
    let mut targets = BTreeMap::new();

    if tokens.first() == Some(&"gdb") {
        if tokens.len() < 17 {
            return Err(err(line, XyzErrorKind::ShortPropertyLine(tokens.len())));
        }
        let index = tokens[1];
        if index.parse::<u64>().is_err() {
            return Err(err(line, XyzErrorKind::BadNumber(index.into())));
        }
        for (tok, field) in tokens[2..17].iter().zip(QM9_FIELDS) {
            let v = finite_float(tok, line)?;
            if let Some(t) = field {
                let v = if t.is_hartree_valued() { v * HARTREE_TO_EV } else { v };
                targets.insert(t, v);
            }
        }
        return Ok((format!("gdb_{index}"), targets));
    }

    if tokens.iter().any(|t| t.contains('=')) {
        let mut id = String::new();
        for tok in &tokens {
            let Some((key, value)) = tok.split_once('=') else {
                continue;
            };
            if key == "id" {
                id = value.to_string();
            } else {
                let t: TargetProperty = key
                    .parse()
                    .map_err(|_| err(line, XyzErrorKind::UnknownKey(key.into())))?;
                targets.insert(t, finite_float(value, line)?);
            }
        }
        return Ok((id, targets));
    }

    Ok((comment.trim().to_string(), targets))
}

/// Writes a record that [`parse_xyz`] reads back to the same molecule.
///
/// Molecules with a `gdb_<n>` id and all nine targets are written in the
/// QM9 layout (energies converted back to Hartree); everything else uses
/// `key=value` comments.
pub fn write_xyz(m: &Molecule) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", m.len());

    let qm9_index = m
        .id
        .strip_prefix("gdb_")
        .filter(|rest| rest.parse::<u64>().is_ok());
    let complete = TargetProperty::ALL.iter().all(|t| m.targets.contains_key(t));
    match qm9_index {
        Some(index) if complete => {
            out.push_str("gdb ");
            out.push_str(index);
            for field in QM9_FIELDS {
                let v = match field {
                    Some(t) => {
                        let v = m.targets[&t];
                        if t.is_hartree_valued() {
                            v / HARTREE_TO_EV
                        } else {
                            v
                        }
                    }
                    None => 0.0,
                };
                let _ = write!(out, "\t{v:?}");
            }
            out.push('\n');
        }
        _ => {
            let _ = write!(out, "id={}", m.id);
            for (t, v) in &m.targets {
                let _ = write!(out, " {}={v:?}", t.key());
            }
            out.push('\n');
        }
    }

    for (z, p) in m.atomic_numbers.iter().zip(&m.positions) {
        let symbol = element_symbol(*z).unwrap_or("X");
        let _ = writeln!(out, "{symbol}\t{:?}\t{:?}\t{:?}", p[0], p[1], p[2]);
    }
    out
}
