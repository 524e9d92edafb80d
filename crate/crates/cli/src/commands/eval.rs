//! `rhino eval`: join results with ground truth and compute the metric
//! suite, writing a JSON report and a markdown rendering.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{anyhow, Context};

use rhino_core::attack_kb::AttackCatalog;
use rhino_core::ingest::load_ground_truth;
use rhino_core::metrics::{build_report, derive_truth_tactics, PredItem, PredictionSet};
use rhino_core::pipeline::GroupResult;

use super::{CmdResult, Failure, EXIT_NO_OVERLAP};
use crate::config::meta_path;

fn read_results(path: &Path) -> anyhow::Result<Vec<GroupResult>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut results = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let result: GroupResult = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: bad result line", path.display(), i + 1))?;
        results.push(result);
    }
    Ok(results)
}

pub fn run(
    results_path: &Path,
    truth_path: &Path,
    catalog_path: Option<&Path>,
    ks: &[usize],
    out: &Path,
) -> CmdResult {
    let catalog = match catalog_path {
        Some(path) => AttackCatalog::load_csv(path)
            .map_err(|e| Failure::from(anyhow!("loading catalog: {e}")))?,
        None => AttackCatalog::bundled(),
    };
    let truth = load_ground_truth(truth_path)
        .map_err(|e| Failure::from(anyhow!("loading ground truth: {e}")))?;
    let results = read_results(results_path).map_err(Failure::from)?;

    let mut per_strategy: BTreeMap<String, PredictionSet> = BTreeMap::new();
    let mut unmatched = 0usize;
    let mut matched = 0usize;
    for result in &results {
        let key = &result.flow_key;
        let entry = truth.lookup(
            &key.src_ip,
            &key.dst_ip,
            key.dst_port,
            &key.transport,
            key.app_service.as_deref(),
            &result.labels,
        );
        let Some(entry) = entry else {
            unmatched += 1;
            continue;
        };
        matched += 1;
        let truth_tactics = if entry.tactics.is_empty() {
            derive_truth_tactics(&catalog, &entry.techniques)
        } else {
            entry.tactics.clone()
        };
        per_strategy
            .entry(result.strategy.clone())
            .or_default()
            .items
            .push(PredItem {
                scenario: entry.scenario.clone(),
                truth_techniques: entry.techniques.clone(),
                truth_tactics,
                ranked: result.ranked_mappings.clone(),
            });
    }

    if matched == 0 {
        return Err(Failure::new(
            EXIT_NO_OVERLAP,
            anyhow!(
                "ground truth matches zero of {} results; check selectors and labels",
                results.len()
            ),
        ));
    }

    let mut report =
        build_report(&per_strategy, &catalog, ks).map_err(|e| Failure::from(anyhow!("{e}")))?;
    report.unmatched_results = unmatched;
    // Attach the mapping run's partition when its metadata survives next to
    // the results file.
    if let Ok(raw) = std::fs::read_to_string(meta_path(results_path)) {
        if let Ok(meta) = serde_json::from_str::<serde_json::Value>(&raw) {
            if let Some(partition) = meta.get("partition") {
                report.partition = serde_json::from_value(partition.clone()).ok();
            }
        }
    }

    let json_path = out.with_extension("json");
    let md_path = out.with_extension("md");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(|e| Failure::from(anyhow!(e)))?;
    std::fs::write(&md_path, report.to_markdown()).map_err(|e| Failure::from(anyhow!(e)))?;

    println!(
        "evaluated {matched} results ({unmatched} unmatched) across {} strategies",
        report.strategies.len()
    );
    for (strategy, sr) in &report.strategies {
        let fmt = |m: &BTreeMap<usize, f64>| {
            ks.iter()
                .map(|k| format!("@{k}={:.2}%", m[k] * 100.0))
                .collect::<Vec<_>>()
                .join(" ")
        };
        println!(
            "  {strategy}: technique {} | tactic {}",
            fmt(&sr.weighted.technique),
            fmt(&sr.weighted.tactic)
        );
    }
    println!("wrote {} and {}", json_path.display(), md_path.display());
    Ok(())
}
