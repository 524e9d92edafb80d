//! Tolerant parsing of model output into stage structures. The parsers take
//! raw completion text and return a string describing the defect on failure,
//! which drives the format-retry loop.

use serde_json::Value;

use super::{Attribute, BehaviorDescription};
use crate::llm_client::extract_json;

/// A candidate as emitted by the model, before id validation.
#[derive(Debug, Clone)]
pub struct RawCandidate {
    pub technique: String,
    pub tactic: String,
    pub rationale: String,
    pub confidence: Option<f64>,
}

pub fn parse_behavior(content: &str) -> Result<BehaviorDescription, String> {
    let value = extract_json(content).map_err(|e| e.to_string())?;
    let obj = value.as_object().ok_or("expected a JSON object")?;
    let narrative = obj
        .get("narrative")
        .and_then(|n| n.as_str())
        .ok_or("missing string field `narrative`")?
        .trim()
        .to_string();
    if narrative.is_empty() {
        return Err("empty narrative".to_string());
    }
    let attributes = match obj.get("attributes") {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|item| {
                let o = item.as_object()?;
                Some(Attribute {
                    name: o.get("name")?.as_str()?.to_string(),
                    value: value_to_text(o.get("value")?),
                })
            })
            .collect(),
        // Also accept a flat {"name": value} map.
        Some(Value::Object(map)) => map
            .iter()
            .map(|(name, v)| Attribute {
                name: name.clone(),
                value: value_to_text(v),
            })
            .collect(),
        _ => Vec::new(),
    };
    Ok(BehaviorDescription {
        attributes,
        narrative,
    })
}

pub fn parse_intent(content: &str) -> Result<String, String> {
    if let Ok(value) = extract_json(content) {
        if let Some(intent) = value.get("intent").and_then(|i| i.as_str()) {
            let intent = intent.trim();
            if !intent.is_empty() {
                return Ok(intent.to_string());
            }
        }
    }
    // Plain-text intent is acceptable; strip code fences if any.
    let text = content
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string();
    if text.is_empty() {
        Err("empty intent".to_string())
    } else {
        Ok(text)
    }
}

/// Accepts a bare array or the common single-key wrappers models produce.
fn candidate_array(value: &Value) -> Result<&Vec<Value>, String> {
    if let Value::Array(items) = value {
        return Ok(items);
    }
    if let Value::Object(map) = value {
        for key in ["pairs", "candidates", "mappings", "techniques", "results"] {
            if let Some(Value::Array(items)) = map.get(key) {
                return Ok(items);
            }
        }
    }
    Err("expected a JSON array of tactic-technique entries".to_string())
}

pub fn parse_candidates(content: &str) -> Result<Vec<RawCandidate>, String> {
    let value = extract_json(content).map_err(|e| e.to_string())?;
    let items = candidate_array(&value)?;
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let Some(obj) = item.as_object() else {
            return Err("entry is not an object".to_string());
        };
        let technique = obj
            .get("technique")
            .or_else(|| obj.get("id"))
            .and_then(|t| t.as_str())
            .ok_or("entry missing `technique`")?
            .trim()
            .to_string();
        let tactic = obj
            .get("tactic")
            .and_then(|t| t.as_str())
            .unwrap_or("")
            .trim()
            .to_string();
        let rationale = obj
            .get("rationale")
            .or_else(|| obj.get("reason"))
            .and_then(|r| r.as_str())
            .unwrap_or("")
            .trim()
            .to_string();
        let confidence = obj
            .get("confidence")
            .or_else(|| obj.get("score"))
            .and_then(value_to_f64);
        out.push(RawCandidate {
            technique,
            tactic,
            rationale,
            confidence,
        });
    }
    Ok(out)
}

fn value_to_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn value_to_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
