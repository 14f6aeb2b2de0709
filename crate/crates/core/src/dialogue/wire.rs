//! Agent wire format: one JSON object embedded anywhere in a chat reply.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::Value;

/// Returns the first balanced `{...}` span of `reply`, ignoring braces
/// inside JSON string literals.
pub fn first_json_object(reply: &str) -> Option<&str> {
    let start = reply.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, ch) in reply[start..].char_indices() {
        if in_string {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&reply[start..start + offset + ch.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Selector reply before any bank or simplex validation.
#[derive(Clone, Debug, PartialEq)]
pub struct RawProposal {
    pub features: Vec<String>,
    pub weights: Vec<f64>,
    pub reasoning: String,
}

/// Validator reply.
#[derive(Clone, Debug, PartialEq)]
pub struct RawVerdict {
    pub validated: bool,
    pub critique: String,
}

fn object(reply: &str) -> Result<serde_json::Map<String, Value>, String> {
    let span = first_json_object(reply).ok_or_else(|| "no JSON object found in reply".to_string())?;
    match serde_json::from_str::<Value>(span) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err("reply JSON is not an object".into()),
        Err(e) => Err(format!("reply JSON is malformed: {e}")),
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Parses `{features: [..], weights: [..], reasoning: ".."}`.
pub fn parse_proposal(reply: &str) -> Result<RawProposal, String> {
    let map = object(reply)?;
    let features = match map.get("features") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| "features must be strings".to_string()))
            .collect::<Result<Vec<_>, _>>()?,
        _ => return Err("missing `features` array".into()),
    };
    let weights = match map.get("weights") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| number(v).ok_or_else(|| "weights must be numbers".to_string()))
            .collect::<Result<Vec<_>, _>>()?,
        _ => return Err("missing `weights` array".into()),
    };
    let reasoning = map
        .get("reasoning")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    Ok(RawProposal { features, weights, reasoning })
}

/// Parses `{validated: bool, critique: ".."}`.
pub fn parse_verdict(reply: &str) -> Result<RawVerdict, String> {
    let map = object(reply)?;
    let validated = match map.get("validated") {
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) if s.eq_ignore_ascii_case("true") => true,
        Some(Value::String(s)) if s.eq_ignore_ascii_case("false") => false,
        _ => return Err("missing boolean `validated`".into()),
    };
    let critique = map
        .get("critique")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    Ok(RawVerdict { validated, critique })
}
