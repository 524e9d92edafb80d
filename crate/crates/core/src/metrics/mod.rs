//! Evaluation metrics: top-K accuracy at technique and tactic level,
//! scenario-weighted accuracy, tactical-consistency mismatch rates, and
//! class-wise one-vs-rest F1 under the top-1/top-5 selection rule.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack_kb::{AttackCatalog, TacticId, TechniqueId};
use crate::pipeline::RankedMapping;

pub use report::{
    build_report, derive_truth_tactics, EvalReport, LevelAccuracy, ScenarioMetrics, StrategyReport,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty prediction set")]
    EmptyPredictionSet,
    #[error("scenario weights sum to {got}, expected {expected}")]
    WeightMismatch { got: usize, expected: usize },
}

/// One evaluated flow group: its scenario, truth sets, and the ranked
/// predictions a strategy produced for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredItem {
    pub scenario: String,
    pub truth_techniques: BTreeSet<TechniqueId>,
    pub truth_tactics: BTreeSet<TacticId>,
    pub ranked: Vec<RankedMapping>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub items: Vec<PredItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Technique,
    Tactic,
}

/// Technique match at technique level: equal base ids, so sub-technique
/// predictions count against parent-technique truth and vice versa.
fn technique_hit(truth: &BTreeSet<TechniqueId>, predicted: &TechniqueId) -> bool {
    truth.iter().any(|t| t.same_base(predicted))
}

/// Fraction of items whose truth set intersects the labels of the first K
/// ranked predictions.
pub fn top_k_accuracy(preds: &PredictionSet, k: usize, level: Level) -> Result<f64, MetricsError> {
    if preds.items.is_empty() {
        return Err(MetricsError::EmptyPredictionSet);
    }
    let hits = preds
        .items
        .iter()
        .filter(|item| {
            item.ranked.iter().take(k).any(|m| match level {
                Level::Technique => technique_hit(&item.truth_techniques, &m.technique),
                Level::Tactic => item.truth_tactics.contains(&m.tactic),
            })
        })
        .count();
    Ok(hits as f64 / preds.items.len() as f64)
}

/// Accuracy_weighted(K) = Σ_s (n_s / n) · Accuracy(K)_s.
pub fn weighted_accuracy(
    per_scenario: &BTreeMap<String, (usize, f64)>,
    n: usize,
) -> Result<f64, MetricsError> {
    let got: usize = per_scenario.values().map(|(n_s, _)| n_s).sum();
    if got != n || n == 0 {
        return Err(MetricsError::WeightMismatch { got, expected: n });
    }
    Ok(per_scenario
        .values()
        .map(|(n_s, acc)| (*n_s as f64 / n as f64) * acc)
        .sum())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub correct: u64,
    pub mismatched: u64,
    pub rate: f64,
}

/// Among correctly-identified techniques within the top K, counts those
/// whose attached tactic is not a catalog tactic of that technique.
/// Rate is 0 when nothing was correct.
pub fn tactical_consistency(
    preds: &PredictionSet,
    catalog: &AttackCatalog,
    k: usize,
) -> ConsistencyReport {
    let mut correct = 0u64;
    let mut mismatched = 0u64;
    for item in &preds.items {
        for mapping in item.ranked.iter().take(k) {
            if !technique_hit(&item.truth_techniques, &mapping.technique) {
                continue;
            }
            correct += 1;
            let legal = catalog
                .tactic_consistent(&mapping.technique, &mapping.tactic)
                .unwrap_or(false);
            if !legal {
                mismatched += 1;
            }
        }
    }
    ConsistencyReport {
        correct,
        mismatched,
        rate: if correct == 0 {
            0.0
        } else {
            mismatched as f64 / correct as f64
        },
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionRule {
    /// The highest-scoring candidate is selected.
    Top1,
    /// The correct technique is selected if present among the top five
    /// candidates; otherwise the top candidate is retained.
    Top5,
}

/// One-vs-rest per-technique precision/recall/F1 at base-technique
/// granularity. Techniques never predicted and never true are absent.
pub fn class_wise_f1(preds: &PredictionSet, rule: SelectionRule) -> BTreeMap<String, Prf> {
    let mut tp: BTreeMap<String, u64> = BTreeMap::new();
    let mut fp: BTreeMap<String, u64> = BTreeMap::new();
    let mut fn_: BTreeMap<String, u64> = BTreeMap::new();

    for item in &preds.items {
        let truth: BTreeSet<String> = item
            .truth_techniques
            .iter()
            .map(|t| t.base().to_string())
            .collect();
        let selected: Option<String> = match rule {
            SelectionRule::Top1 => item.ranked.first().map(|m| m.technique.base().to_string()),
            SelectionRule::Top5 => item
                .ranked
                .iter()
                .take(5)
                .find(|m| technique_hit(&item.truth_techniques, &m.technique))
                .or_else(|| item.ranked.first())
                .map(|m| m.technique.base().to_string()),
        };
        match &selected {
            Some(sel) => {
                if truth.contains(sel) {
                    *tp.entry(sel.clone()).or_insert(0) += 1;
                } else {
                    *fp.entry(sel.clone()).or_insert(0) += 1;
                }
                // Any truth technique other than the selection went
                // unrecovered on this item.
                for t in truth.iter().filter(|t| *t != sel) {
                    *fn_.entry(t.clone()).or_insert(0) += 1;
                }
            }
            None => {
                for t in &truth {
                    *fn_.entry(t.clone()).or_insert(0) += 1;
                }
            }
        }
    }

    let mut classes: BTreeSet<String> = BTreeSet::new();
    classes.extend(tp.keys().cloned());
    classes.extend(fp.keys().cloned());
    classes.extend(fn_.keys().cloned());

    classes
        .into_iter()
        .map(|class| {
            let tp = *tp.get(&class).unwrap_or(&0) as f64;
            let fp = *fp.get(&class).unwrap_or(&0) as f64;
            let fn_ = *fn_.get(&class).unwrap_or(&0) as f64;
            let precision = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
            let recall = if tp + fn_ == 0.0 {
                0.0
            } else {
                tp / (tp + fn_)
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            (
                class,
                Prf {
                    precision,
                    recall,
                    f1,
                },
            )
        })
        .collect()
}
