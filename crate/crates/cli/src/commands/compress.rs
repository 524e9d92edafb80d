//! `rhino compress`: parse raw flow logs, aggregate and filter, and write
//! one FlowSummary JSON per line plus a compression stats banner.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};

use rhino_core::ingest::{FlowCsvParser, FlowRecord, IngestError, ZeekConnParser};
use rhino_core::preprocess::compress_flows;

use super::{CmdResult, Failure, EXIT_PARSE_FATAL};
use crate::config::RunConfig;

fn fatal(e: IngestError, path: &Path) -> Failure {
    Failure::new(EXIT_PARSE_FATAL, anyhow!("{}: {e}", path.display()))
}

pub fn run(config: &RunConfig, inputs: &[PathBuf], out: &Path, seed: u64) -> CmdResult {
    let mut records: Vec<FlowRecord> = Vec::new();
    let mut skipped = 0u64;
    let mut soft = 0u64;
    for path in inputs {
        let file = File::open(path)
            .with_context(|| format!("opening {}", path.display()))
            .map_err(Failure::from)?;
        let reader = BufReader::new(file);
        match config.input.format.as_str() {
            "zeek" => {
                let mut parser = ZeekConnParser::new(reader);
                for item in &mut parser {
                    records.push(item.map_err(|e| fatal(e, path))?);
                }
                skipped += parser.diagnostics().skipped_lines;
                soft += parser.diagnostics().soft_warnings;
            }
            "csv" => {
                let mut parser = FlowCsvParser::new(reader, config.input.mapping.clone())
                    .map_err(|e| fatal(e, path))?;
                for item in &mut parser {
                    records.push(item.map_err(|e| fatal(e, path))?);
                }
                skipped += parser.diagnostics().skipped_lines;
                soft += parser.diagnostics().soft_warnings;
            }
            other => {
                return Err(Failure::from(anyhow!(
                    "unknown input format {other:?} (expected \"zeek\" or \"csv\")"
                )))
            }
        }
    }

    let params = config.preprocess.params(seed);
    let record_count = records.len();
    let (summaries, stats) = compress_flows(records, &params);

    let file = File::create(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(Failure::from)?;
    let mut writer = BufWriter::new(file);
    // The text rendering (the exact string the LLM sees) travels alongside
    // the JSONL form.
    let text_out = out.with_extension("txt");
    let mut text_writer = BufWriter::new(
        File::create(&text_out)
            .with_context(|| format!("creating {}", text_out.display()))
            .map_err(Failure::from)?,
    );
    for summary in &summaries {
        let line = serde_json::to_string(summary)
            .context("serializing summary")
            .map_err(Failure::from)?;
        writer
            .write_all(line.as_bytes())
            .map_err(|e| Failure::from(anyhow!(e)))?;
        writer
            .write_all(b"\n")
            .map_err(|e| Failure::from(anyhow!(e)))?;
        text_writer
            .write_all(summary.render_text().as_bytes())
            .and_then(|_| text_writer.write_all(b"\n"))
            .map_err(|e| Failure::from(anyhow!(e)))?;
    }
    writer.flush().map_err(|e| Failure::from(anyhow!(e)))?;
    text_writer.flush().map_err(|e| Failure::from(anyhow!(e)))?;

    println!("records: {record_count} (skipped lines: {skipped}, warnings: {soft})");
    println!(
        "groups: {} total, {} kept, {} dropped by scan filter ({} records dropped, {} scan sources)",
        stats.groups_total,
        stats.groups_kept,
        stats.groups_dropped,
        stats.records_dropped,
        stats.scan_sources
    );
    match stats.reduction() {
        Some(reduction) => println!(
            "tokens: raw {} -> summaries {} (reduction {:.1}%)",
            stats.raw_tokens,
            stats.summary_tokens,
            reduction * 100.0
        ),
        None => println!("tokens: raw 0 -> summaries 0 (reduction n/a)"),
    }
    println!("wrote {} and {}", out.display(), text_out.display());
    Ok(())
}

/// Reads a summaries JSONL file back.
pub fn read_summaries(path: &Path) -> anyhow::Result<Vec<rhino_core::preprocess::FlowSummary>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut summaries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let summary = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: bad summary", path.display(), i + 1))?;
        summaries.push(summary);
    }
    Ok(summaries)
}
