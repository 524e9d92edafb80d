//! Aggregated evaluation report: JSON structure plus a markdown rendering
//! with one weighted-accuracy row per strategy and K.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    class_wise_f1, tactical_consistency, top_k_accuracy, weighted_accuracy, ConsistencyReport,
    Level, MetricsError, PredictionSet, Prf, SelectionRule,
};
use crate::attack_kb::{AttackCatalog, TacticId, TechniqueId};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelAccuracy {
    pub technique: BTreeMap<usize, f64>,
    pub tactic: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub n: usize,
    pub technique: BTreeMap<usize, f64>,
    pub tactic: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub items: usize,
    pub per_scenario: BTreeMap<String, ScenarioMetrics>,
    /// Accuracy_weighted(K) = Σ (n_s/n)·Accuracy(K)_s.
    pub weighted: LevelAccuracy,
    /// Plain mean over scenarios, reported alongside the weighted form.
    pub unweighted_scenario_mean: LevelAccuracy,
    pub consistency: BTreeMap<usize, ConsistencyReport>,
    pub class_f1_top1: BTreeMap<String, Prf>,
    pub class_f1_top5: BTreeMap<String, Prf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub catalog_version: String,
    pub ks: Vec<usize>,
    /// The tactic partition the mapping run used, when its metadata is
    /// available; results can be sensitive to the grouping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<Vec<String>>>,
    pub matched_items: usize,
    pub unmatched_results: usize,
    pub strategies: BTreeMap<String, StrategyReport>,
}

/// Tactic truth fallback: the union of catalog tactics over the truth
/// techniques, for ground-truth entries that list none explicitly.
pub fn derive_truth_tactics(
    catalog: &AttackCatalog,
    techniques: &BTreeSet<TechniqueId>,
) -> BTreeSet<TacticId> {
    techniques
        .iter()
        .filter_map(|t| catalog.resolve(t))
        .flat_map(|record| record.tactics.iter().cloned())
        .collect()
}

pub fn build_report(
    per_strategy: &BTreeMap<String, PredictionSet>,
    catalog: &AttackCatalog,
    ks: &[usize],
) -> Result<EvalReport, MetricsError> {
    let mut strategies = BTreeMap::new();
    let mut matched_items = 0;
    for (strategy, preds) in per_strategy {
        if preds.items.is_empty() {
            continue;
        }
        matched_items += preds.items.len();
        strategies.insert(strategy.clone(), strategy_report(preds, catalog, ks)?);
    }
    Ok(EvalReport {
        catalog_version: catalog.version.clone(),
        ks: ks.to_vec(),
        partition: None,
        matched_items,
        unmatched_results: 0,
        strategies,
    })
}

fn strategy_report(
    preds: &PredictionSet,
    catalog: &AttackCatalog,
    ks: &[usize],
) -> Result<StrategyReport, MetricsError> {
    let mut by_scenario: BTreeMap<String, PredictionSet> = BTreeMap::new();
    for item in &preds.items {
        by_scenario
            .entry(item.scenario.clone())
            .or_default()
            .items
            .push(item.clone());
    }
    let n = preds.items.len();

    let mut per_scenario: BTreeMap<String, ScenarioMetrics> = BTreeMap::new();
    for (scenario, set) in &by_scenario {
        let mut metrics = ScenarioMetrics {
            n: set.items.len(),
            ..Default::default()
        };
        for &k in ks {
            metrics
                .technique
                .insert(k, top_k_accuracy(set, k, Level::Technique)?);
            metrics
                .tactic
                .insert(k, top_k_accuracy(set, k, Level::Tactic)?);
        }
        per_scenario.insert(scenario.clone(), metrics);
    }

    let mut weighted = LevelAccuracy::default();
    let mut unweighted = LevelAccuracy::default();
    for &k in ks {
        for level in [Level::Technique, Level::Tactic] {
            let per: BTreeMap<String, (usize, f64)> = per_scenario
                .iter()
                .map(|(s, m)| {
                    let acc = match level {
                        Level::Technique => m.technique[&k],
                        Level::Tactic => m.tactic[&k],
                    };
                    (s.clone(), (m.n, acc))
                })
                .collect();
            let w = weighted_accuracy(&per, n)?;
            let mean = per.values().map(|(_, a)| a).sum::<f64>() / per.len() as f64;
            match level {
                Level::Technique => {
                    weighted.technique.insert(k, w);
                    unweighted.technique.insert(k, mean);
                }
                Level::Tactic => {
                    weighted.tactic.insert(k, w);
                    unweighted.tactic.insert(k, mean);
                }
            }
        }
    }

    let consistency = ks
        .iter()
        .map(|&k| (k, tactical_consistency(preds, catalog, k)))
        .collect();

    Ok(StrategyReport {
        items: n,
        per_scenario,
        weighted,
        unweighted_scenario_mean: unweighted,
        consistency,
        class_f1_top1: class_wise_f1(preds, SelectionRule::Top1),
        class_f1_top5: class_wise_f1(preds, SelectionRule::Top5),
    })
}

fn pct(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

impl EvalReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("# Evaluation report\n\n");
        out.push_str(&format!(
            "Catalog: {} — items matched to ground truth: {} (unmatched results: {})\n\n",
            self.catalog_version, self.matched_items, self.unmatched_results
        ));
        if let Some(partition) = &self.partition {
            out.push_str("Tactic partition used by the mapping run:\n");
            for (i, group) in partition.iter().enumerate() {
                out.push_str(&format!("- group {}: {}\n", i + 1, group.join(", ")));
            }
            out.push('\n');
        }

        // Summary: strategy rows × K columns, technique and tactic level.
        out.push_str("## Weighted accuracy\n\n");
        out.push_str("| Strategy | Level |");
        for k in &self.ks {
            out.push_str(&format!(" Top-{k} |"));
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---|".repeat(self.ks.len()));
        out.push('\n');
        for (strategy, report) in &self.strategies {
            for (level, accs) in [
                ("technique", &report.weighted.technique),
                ("tactic", &report.weighted.tactic),
            ] {
                out.push_str(&format!("| {strategy} | {level} |"));
                for k in &self.ks {
                    out.push_str(&format!(" {} |", pct(accs[k])));
                }
                out.push('\n');
            }
        }
        out.push('\n');

        for (strategy, report) in &self.strategies {
            out.push_str(&format!("## Strategy: {strategy}\n\n"));
            out.push_str(&format!("Items: {}\n\n", report.items));

            out.push_str("### Unweighted scenario mean\n\n| Level |");
            for k in &self.ks {
                out.push_str(&format!(" Top-{k} |"));
            }
            out.push_str("\n|---|");
            out.push_str(&"---|".repeat(self.ks.len()));
            out.push('\n');
            for (level, accs) in [
                ("technique", &report.unweighted_scenario_mean.technique),
                ("tactic", &report.unweighted_scenario_mean.tactic),
            ] {
                out.push_str(&format!("| {level} |"));
                for k in &self.ks {
                    out.push_str(&format!(" {} |", pct(accs[k])));
                }
                out.push('\n');
            }
            out.push('\n');

            out.push_str("### Per-scenario accuracy\n\n| Scenario | n |");
            for k in &self.ks {
                out.push_str(&format!(" tech@{k} |"));
            }
            for k in &self.ks {
                out.push_str(&format!(" tactic@{k} |"));
            }
            out.push_str("\n|---|---|");
            out.push_str(&"---|".repeat(self.ks.len() * 2));
            out.push('\n');
            for (scenario, metrics) in &report.per_scenario {
                out.push_str(&format!("| {scenario} | {} |", metrics.n));
                for k in &self.ks {
                    out.push_str(&format!(" {} |", pct(metrics.technique[k])));
                }
                for k in &self.ks {
                    out.push_str(&format!(" {} |", pct(metrics.tactic[k])));
                }
                out.push('\n');
            }
            out.push('\n');

            out.push_str(
                "### Tactical consistency\n\n| K | correct | mismatched | rate |\n|---|---|---|---|\n",
            );
            for (k, c) in &report.consistency {
                out.push_str(&format!(
                    "| {k} | {} | {} | {} |\n",
                    c.correct,
                    c.mismatched,
                    pct(c.rate)
                ));
            }
            out.push('\n');

            out.push_str("### Class-wise F1\n\n| Technique | P@1 | R@1 | F1@1 | P@5 | R@5 | F1@5 |\n|---|---|---|---|---|---|---|\n");
            let mut classes: BTreeSet<&String> = report.class_f1_top1.keys().collect();
            classes.extend(report.class_f1_top5.keys());
            for class in classes {
                let one = report.class_f1_top1.get(class).copied().unwrap_or_default();
                let five = report.class_f1_top5.get(class).copied().unwrap_or_default();
                out.push_str(&format!(
                    "| {class} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |\n",
                    one.precision, one.recall, one.f1, five.precision, five.recall, five.f1
                ));
            }
            out.push('\n');
        }
        out
    }
}
