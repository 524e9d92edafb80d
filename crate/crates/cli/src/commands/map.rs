//! `rhino map`: run a mapping strategy over compressed summaries, one result
//! JSON line per flow group. Resumable: flow keys already present in the
//! output file are skipped, and finished lines are flushed as soon as their
//! chunk completes.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, Context};
use serde::Serialize;

use rhino_core::attack_kb::{AttackCatalog, TacticPartition};
use rhino_core::llm_client::{
    Backend, HttpBackend, LlmClient, LlmError, MockBackend, ResponseCache,
};
use rhino_core::pipeline::{
    GroupResult, Pipeline, PipelineError, PipelineOptions, PromptTemplateSet, Strategy,
};
use rhino_core::preprocess::FlowSummary;

use super::{CmdResult, Failure, EXIT_AUTH};
use crate::config::{meta_path, RunConfig};

pub fn load_catalog(config: &RunConfig) -> anyhow::Result<AttackCatalog> {
    if config.kb.catalog.is_empty() {
        Ok(AttackCatalog::bundled())
    } else {
        AttackCatalog::load_csv(Path::new(&config.kb.catalog))
            .with_context(|| format!("loading catalog {}", config.kb.catalog))
    }
}

pub fn load_partition(
    config: &RunConfig,
    catalog: &AttackCatalog,
) -> anyhow::Result<TacticPartition> {
    match &config.partition.groups {
        Some(groups) => TacticPartition::from_spec(catalog, groups)
            .map_err(|e| anyhow!("partition override: {e}")),
        None => {
            let partition = TacticPartition::default_partition();
            partition.validate(catalog)?;
            Ok(partition)
        }
    }
}

fn build_client(config: &RunConfig) -> anyhow::Result<LlmClient> {
    let backend = match config.backend.kind.as_str() {
        "mock" => {
            if config.backend.fixtures_dir.is_empty() {
                return Err(anyhow!(
                    "backend.kind = \"mock\" requires backend.fixtures_dir"
                ));
            }
            Backend::Mock(
                MockBackend::from_dir(Path::new(&config.backend.fixtures_dir))
                    .map_err(|e| anyhow!("opening mock fixtures: {e}"))?,
            )
        }
        "http" => Backend::Http(HttpBackend::with_timeout(
            &config.backend.base_url,
            std::time::Duration::from_secs(config.backend.timeout_s),
        )),
        other => return Err(anyhow!("unknown backend kind {other:?}")),
    };
    let mut client = LlmClient::new(backend)
        .with_retry(config.backend.retry_policy())
        .with_max_in_flight(config.backend.max_in_flight);
    if !config.backend.cache_dir.is_empty() {
        let cache = ResponseCache::open(config.backend.cache_dir.clone().into())
            .map_err(|e| anyhow!("opening cache: {e}"))?;
        client = client.with_cache(cache);
    }
    Ok(client)
}

fn key_string(summary: &FlowSummary) -> String {
    serde_json::to_string(&summary.key).expect("flow keys serialize")
}

/// Scans an existing results file for completed flow keys. Lines that do not
/// parse (e.g. a line torn by a mid-write interruption) are dropped: the file
/// is rewritten with only the complete lines so appends stay well-formed.
fn done_keys(out: &Path) -> anyhow::Result<HashSet<String>> {
    let mut done = HashSet::new();
    if !out.exists() {
        return Ok(done);
    }
    let raw = std::fs::read_to_string(out)?;
    let mut kept: Vec<&str> = Vec::new();
    let mut torn = 0usize;
    for line in raw.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Option<rhino_core::preprocess::FlowKey> = serde_json::from_str(line)
            .ok()
            .and_then(|value: serde_json::Value| {
                serde_json::from_value(value.get("flow_key")?.clone()).ok()
            });
        match parsed {
            Some(key) => {
                // Normalize through FlowKey so the canonical form matches
                // key_string regardless of JSON object ordering.
                done.insert(serde_json::to_string(&key).expect("flow keys serialize"));
                kept.push(line);
            }
            None => torn += 1,
        }
    }
    if torn > 0 {
        eprintln!(
            "warning: dropping {torn} incomplete line(s) from {}",
            out.display()
        );
        let mut body = kept.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        std::fs::write(out, body).with_context(|| format!("rewriting {}", out.display()))?;
    }
    Ok(done)
}

#[derive(Serialize)]
struct RunMeta<'a> {
    strategy: &'a str,
    model: &'a str,
    seed: u64,
    partition: Vec<Vec<String>>,
}

fn auth_failure(error: &PipelineError) -> bool {
    matches!(
        error,
        PipelineError::Llm {
            source: LlmError::AuthError(_),
            ..
        }
    )
}

pub fn run(config: &RunConfig, summaries_path: &Path, out: &Path, seed: u64) -> CmdResult {
    let strategy_name = config.strategy.as_deref().unwrap_or("rhino");
    let strategy = Strategy::from_str(strategy_name).map_err(|e| Failure::from(anyhow!(e)))?;
    let catalog = load_catalog(config).map_err(Failure::from)?;
    let partition = load_partition(config, &catalog).map_err(Failure::from)?;
    let templates = if config.templates.dir.is_empty() {
        PromptTemplateSet::default()
    } else {
        PromptTemplateSet::load_dir(Path::new(&config.templates.dir))
            .map_err(|e| Failure::from(anyhow!("templates: {e}")))?
    };
    templates
        .validate()
        .map_err(|e| Failure::from(anyhow!("templates: {e}")))?;
    let client = build_client(config).map_err(Failure::from)?;
    let opts = PipelineOptions {
        model: config.backend.model.clone(),
        temperature: config.backend.temperature,
        tot_temperature: config.backend.tot_temperature,
        max_tokens: config.backend.max_tokens,
        format_retries: 2,
    };
    let pipeline = Pipeline::new(&client, &templates, &catalog, &partition, opts);

    let summaries = super::compress::read_summaries(summaries_path).map_err(Failure::from)?;
    let done = done_keys(out).map_err(Failure::from)?;
    let todo: Vec<&FlowSummary> = summaries
        .iter()
        .filter(|s| !done.contains(&key_string(s)))
        .collect();

    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .with_context(|| format!("opening {}", out.display()))
        .map_err(Failure::from)?;
    let mut writer = BufWriter::new(file);

    let chunk_size = config.backend.max_in_flight.max(1);
    let mut completed = 0usize;
    for chunk in todo.chunks(chunk_size) {
        let results: Vec<Result<GroupResult, PipelineError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|summary| scope.spawn(|| pipeline.run(strategy, summary)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        });
        for result in results {
            match result {
                Ok(group_result) => {
                    let line = serde_json::to_string(&group_result)
                        .context("serializing result")
                        .map_err(Failure::from)?;
                    writer
                        .write_all(line.as_bytes())
                        .and_then(|_| writer.write_all(b"\n"))
                        .map_err(|e| Failure::from(anyhow!(e)))?;
                    completed += 1;
                }
                Err(e) if auth_failure(&e) => {
                    writer.flush().ok();
                    return Err(Failure::new(EXIT_AUTH, anyhow!("{e}")));
                }
                Err(e) => {
                    writer.flush().ok();
                    return Err(Failure::from(anyhow!("{e}")));
                }
            }
        }
        // Partial progress survives interruption at chunk granularity.
        writer.flush().map_err(|e| Failure::from(anyhow!(e)))?;
    }

    let meta = RunMeta {
        strategy: strategy.as_str(),
        model: &config.backend.model,
        seed,
        partition: partition
            .groups()
            .iter()
            .map(|g| g.iter().map(|t| t.as_str().to_string()).collect())
            .collect(),
    };
    std::fs::write(
        meta_path(out),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )
    .map_err(|e| Failure::from(anyhow!(e)))?;

    println!(
        "mapped {completed} of {} summaries ({} skipped as already present) with strategy {}",
        summaries.len(),
        summaries.len() - todo.len(),
        strategy
    );
    Ok(())
}
