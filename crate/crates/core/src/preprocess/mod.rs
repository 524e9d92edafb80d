//! Flow compression: five-tuple grouping, statistical summarization, scan
//! source detection with isolation-forest filtering, binomial sampling of
//! application-layer fields, and token budgeting.

pub mod iforest;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::net::IpAddr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FlowRecord, TcpFlag, Transport};
use crate::util::subseed;

pub use iforest::{average_path_length, iforest_fit, iforest_score, IsolationForest};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("degenerate data: all points identical in every feature")]
    DegenerateData,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Grouping key: the five-tuple with ephemeral source ports excluded.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub dst_port: u16,
    pub transport: Transport,
    pub app_service: Option<String>,
}

impl FlowKey {
    pub fn of(record: &FlowRecord) -> Self {
        Self {
            src_ip: record.src_ip,
            dst_ip: record.dst_ip,
            dst_port: record.dst_port,
            transport: record.transport.clone(),
            app_service: record.app_service.clone(),
        }
    }

    pub fn render(&self) -> String {
        let service = self
            .app_service
            .as_deref()
            .map(|s| format!(" service={s}"))
            .unwrap_or_default();
        format!(
            "{} -> {}:{}/{}{}",
            self.src_ip, self.dst_ip, self.dst_port, self.transport, service
        )
    }
}

/// All records sharing one [`FlowKey`], in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedGroup {
    pub key: FlowKey,
    pub records: Vec<FlowRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InterArrivalStats {
    pub mean_s: f64,
    pub stddev_s: f64,
}

/// Compressed behavioral summary of one flow group; the unit fed to the LLM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub key: FlowKey,
    pub record_count: u64,
    pub first_ts: f64,
    pub last_ts: f64,
    pub total_duration_s: f64,
    pub fwd_packets: u64,
    pub bwd_packets: u64,
    pub fwd_bytes: u64,
    pub bwd_bytes: u64,
    pub tcp_flag_hist: BTreeMap<TcpFlag, u64>,
    pub inter_arrival_stats: InterArrivalStats,
    pub app_samples: BTreeMap<String, Vec<String>>,
    /// Dataset labels observed on the member records, carried for
    /// ground-truth selectors that match on labels.
    pub labels: BTreeSet<String>,
    pub filtered_note: Option<String>,
    pub est_tokens: u64,
}

impl FlowSummary {
    /// The text rendering sent to the LLM. `est_tokens` is computed over
    /// exactly this string.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("flow {}\n", self.key.render()));
        out.push_str(&format!(
            "records={} window={:.3}..{:.3} active={:.3}s\n",
            self.record_count, self.first_ts, self.last_ts, self.total_duration_s
        ));
        out.push_str(&format!(
            "packets fwd={} bwd={} bytes fwd={} bwd={}\n",
            self.fwd_packets, self.bwd_packets, self.fwd_bytes, self.bwd_bytes
        ));
        if !self.tcp_flag_hist.is_empty() {
            let flags = self
                .tcp_flag_hist
                .iter()
                .map(|(f, c)| format!("{}:{}", f.as_str(), c))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&format!("tcp_flags {flags}\n"));
        }
        out.push_str(&format!(
            "inter_arrival mean={:.3}s stddev={:.3}s\n",
            self.inter_arrival_stats.mean_s, self.inter_arrival_stats.stddev_s
        ));
        if !self.labels.is_empty() {
            let labels = self.labels.iter().cloned().collect::<Vec<_>>().join(", ");
            out.push_str(&format!("labels: {labels}\n"));
        }
        for (field, samples) in &self.app_samples {
            out.push_str(&format!("{field} samples: {}\n", samples.join(", ")));
        }
        if let Some(note) = &self.filtered_note {
            out.push_str(&format!("note: {note}\n"));
        }
        out
    }

    /// Attaches a scan-filter note, recomputing the token estimate.
    pub fn set_filtered_note(&mut self, note: String) {
        self.filtered_note = Some(note);
        self.est_tokens = estimate_tokens(&self.render_text());
    }
}

/// Raw one-line text rendering of a record, used for the raw-versus-summary
/// token accounting.
pub fn render_record_raw(record: &FlowRecord) -> String {
    let mut out = format!(
        "ts={:.3} {}:{} -> {}:{}/{}",
        record.ts, record.src_ip, record.src_port, record.dst_ip, record.dst_port, record.transport
    );
    if let Some(service) = &record.app_service {
        out.push_str(&format!(" service={service}"));
    }
    out.push_str(&format!(
        " duration={:.3}s fwd_pkts={} bwd_pkts={} fwd_bytes={} bwd_bytes={}",
        record.duration_s,
        record.fwd_packets,
        record.bwd_packets,
        record.fwd_bytes,
        record.bwd_bytes
    ));
    if !record.tcp_flags.is_empty() {
        out.push_str(&format!(" flags={}", record.tcp_flags_string()));
    }
    for (field, value) in &record.app_fields {
        out.push_str(&format!(" {field}={value}"));
    }
    if let Some(label) = &record.label {
        out.push_str(&format!(" label={label}"));
    }
    out
}

/// ceil(chars / 4); 0 for empty text.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Groups records by five-tuple. Output is canonically ordered by key;
/// records within a group keep input order. The groups partition the input.
pub fn group_flows(records: impl IntoIterator<Item = FlowRecord>) -> Vec<AggregatedGroup> {
    let mut groups: BTreeMap<FlowKey, Vec<FlowRecord>> = BTreeMap::new();
    for record in records {
        groups.entry(FlowKey::of(&record)).or_default().push(record);
    }
    groups
        .into_iter()
        .map(|(key, records)| AggregatedGroup { key, records })
        .collect()
}

/// Sources contacting strictly more than `threshold` distinct
/// (dst_ip, dst_port) destinations.
pub fn detect_scan_sources<'a>(
    records: impl IntoIterator<Item = &'a FlowRecord>,
    threshold: usize,
) -> BTreeSet<IpAddr> {
    let mut destinations: HashMap<IpAddr, HashSet<(IpAddr, u16)>> = HashMap::new();
    for record in records {
        destinations
            .entry(record.src_ip)
            .or_default()
            .insert((record.dst_ip, record.dst_port));
    }
    destinations
        .into_iter()
        .filter(|(_, dsts)| dsts.len() > threshold)
        .map(|(src, _)| src)
        .collect()
}

/// Binomial sampling of a multiset of field values: each distinct value with
/// multiplicity n keeps Binomial(n, p) examples clamped to [1, n], with
/// p = min(1, cap / total); the concatenation is truncated to `cap` while
/// preserving one example of as many distinct values as fit.
pub fn sample_app_field(values: &[String], cap: usize, seed: u64) -> Vec<String> {
    assert!(cap >= 1, "sample cap must be at least 1");
    if values.is_empty() {
        return Vec::new();
    }
    // Distinct values in first-appearance order.
    let mut order: Vec<&String> = Vec::new();
    let mut counts: HashMap<&String, u64> = HashMap::new();
    for v in values {
        if !counts.contains_key(v) {
            order.push(v);
        }
        *counts.entry(v).or_insert(0) += 1;
    }
    let total = values.len() as f64;
    let p = (cap as f64 / total).min(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keeps: Vec<(&String, u64)> = order
        .iter()
        .map(|v| {
            let n = counts[*v];
            let k = Binomial::new(n, p)
                .expect("valid binomial parameters")
                .sample(&mut rng)
                .clamp(1, n);
            (*v, k)
        })
        .collect();

    let mut result: Vec<String> = Vec::new();
    // One example of each distinct value, as many as fit.
    for (v, _) in &keeps {
        if result.len() >= cap {
            break;
        }
        result.push((*v).clone());
    }
    // Fill the remaining budget with the extra sampled copies.
    'outer: for (i, (v, k)) in keeps.iter().enumerate() {
        if i >= result.len() {
            break;
        }
        for _ in 1..*k {
            if result.len() >= cap {
                break 'outer;
            }
            result.push((*v).clone());
        }
    }
    result
}

/// Collapses a group into its statistical summary.
pub fn summarize(group: &AggregatedGroup, field_cap: usize, sampler_seed: u64) -> FlowSummary {
    assert!(!group.records.is_empty(), "groups are non-empty");
    let mut first_ts = f64::INFINITY;
    let mut last_ts = f64::NEG_INFINITY;
    let mut total_duration_s = 0.0;
    let (mut fwd_packets, mut bwd_packets, mut fwd_bytes, mut bwd_bytes) = (0u64, 0u64, 0u64, 0u64);
    let mut tcp_flag_hist: BTreeMap<TcpFlag, u64> = BTreeMap::new();
    let mut app_values: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut labels = BTreeSet::new();
    let mut timestamps: Vec<f64> = Vec::with_capacity(group.records.len());

    for record in &group.records {
        first_ts = first_ts.min(record.ts);
        last_ts = last_ts.max(record.ts);
        total_duration_s += record.duration_s;
        fwd_packets += record.fwd_packets;
        bwd_packets += record.bwd_packets;
        fwd_bytes += record.fwd_bytes;
        bwd_bytes += record.bwd_bytes;
        for (flag, count) in &record.tcp_flags {
            *tcp_flag_hist.entry(*flag).or_insert(0) += u64::from(*count);
        }
        for (field, value) in &record.app_fields {
            app_values
                .entry(field.clone())
                .or_default()
                .push(value.clone());
        }
        if let Some(label) = &record.label {
            labels.insert(label.clone());
        }
        timestamps.push(record.ts);
    }

    timestamps.sort_by(f64::total_cmp);
    let gaps: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    let inter_arrival_stats = if gaps.is_empty() {
        InterArrivalStats::default()
    } else {
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64;
        InterArrivalStats {
            mean_s: mean,
            stddev_s: var.sqrt(),
        }
    };

    let app_samples: BTreeMap<String, Vec<String>> = app_values
        .into_iter()
        .map(|(field, values)| {
            let field_seed = subseed(sampler_seed, &field);
            let samples = sample_app_field(&values, field_cap, field_seed);
            (field, samples)
        })
        .collect();

    let mut summary = FlowSummary {
        key: group.key.clone(),
        record_count: group.records.len() as u64,
        first_ts,
        last_ts,
        total_duration_s,
        fwd_packets,
        bwd_packets,
        fwd_bytes,
        bwd_bytes,
        tcp_flag_hist,
        inter_arrival_stats,
        app_samples,
        labels,
        filtered_note: None,
        est_tokens: 0,
    };
    summary.est_tokens = estimate_tokens(&summary.render_text());
    summary
}

/// Feature vector for scan filtering.
pub fn scan_features(group: &AggregatedGroup) -> Vec<f64> {
    let distinct_ports = group
        .records
        .iter()
        .map(|r| r.dst_port)
        .collect::<HashSet<_>>()
        .len();
    let mut fwd_packets = 0u64;
    let mut bwd_packets = 0u64;
    let mut fwd_bytes = 0u64;
    let mut bwd_bytes = 0u64;
    let mut duration = 0.0;
    for r in &group.records {
        fwd_packets += r.fwd_packets;
        bwd_packets += r.bwd_packets;
        fwd_bytes += r.fwd_bytes;
        bwd_bytes += r.bwd_bytes;
        duration += r.duration_s;
    }
    vec![
        (1.0 + fwd_packets as f64).ln(),
        (1.0 + bwd_packets as f64).ln(),
        (1.0 + fwd_bytes as f64).ln(),
        (1.0 + bwd_bytes as f64).ln(),
        duration,
        distinct_ports as f64,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanFilterOutcome {
    pub kept: Vec<AggregatedGroup>,
    pub dropped_groups: usize,
    pub dropped_records: u64,
}

/// Filters the groups of one flagged scan source: every group scoring at or
/// above `score_threshold` is kept, plus a deterministic sample of
/// ceil(keep_fraction * remainder) of the rest.
pub fn filter_scan_flows(
    groups: Vec<AggregatedGroup>,
    keep_fraction: f64,
    score_threshold: f64,
    psi: usize,
    n_trees: usize,
    seed: u64,
) -> ScanFilterOutcome {
    let total = groups.len();
    if total == 0 {
        return ScanFilterOutcome {
            kept: groups,
            dropped_groups: 0,
            dropped_records: 0,
        };
    }
    let points: Vec<Vec<f64>> = groups.iter().map(scan_features).collect();
    let scores: Vec<f64> = match iforest_fit(&points, psi, n_trees, seed) {
        Ok(forest) => points.iter().map(|p| iforest_score(&forest, p)).collect(),
        // All probe groups identical: nothing stands out, score uniformly.
        Err(PreprocessError::DegenerateData) => vec![0.5; total],
        Err(_) => vec![0.5; total],
    };

    let low_idx: Vec<usize> = (0..total)
        .filter(|&i| scores[i] < score_threshold)
        .collect();
    let keep_n = (keep_fraction * low_idx.len() as f64).ceil() as usize;
    let mut keep_flags = vec![true; total];
    if keep_n < low_idx.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sampled = rand::seq::index::sample(&mut rng, low_idx.len(), keep_n);
        let sampled: HashSet<usize> = sampled.into_iter().collect();
        for (pos, &idx) in low_idx.iter().enumerate() {
            keep_flags[idx] = sampled.contains(&pos);
        }
    }

    let mut kept = Vec::new();
    let mut dropped_groups = 0;
    let mut dropped_records = 0u64;
    for (group, keep) in groups.into_iter().zip(keep_flags) {
        if keep {
            kept.push(group);
        } else {
            dropped_groups += 1;
            dropped_records += group.records.len() as u64;
        }
    }
    ScanFilterOutcome {
        kept,
        dropped_groups,
        dropped_records,
    }
}

/// Tunables for the preprocessing stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessParams {
    pub scan_threshold: usize,
    pub psi: usize,
    pub trees: usize,
    pub score_threshold: f64,
    pub keep_fraction: f64,
    pub field_cap: usize,
    pub seed: u64,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self {
            scan_threshold: 50,
            psi: 256,
            trees: 100,
            score_threshold: 0.6,
            keep_fraction: 0.05,
            field_cap: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CompressionStats {
    pub records_in: u64,
    pub groups_total: usize,
    pub groups_kept: usize,
    pub groups_dropped: usize,
    pub records_dropped: u64,
    pub scan_sources: usize,
    pub raw_tokens: u64,
    pub summary_tokens: u64,
}

impl CompressionStats {
    /// Token reduction as a fraction of the raw rendering, if defined.
    pub fn reduction(&self) -> Option<f64> {
        if self.raw_tokens == 0 {
            None
        } else {
            Some(1.0 - self.summary_tokens as f64 / self.raw_tokens as f64)
        }
    }
}

/// End-to-end preprocessing: group, detect scan sources, filter their probe
/// groups, and summarize what remains. Deterministic for a fixed seed.
pub fn compress_flows(
    records: Vec<FlowRecord>,
    params: &PreprocessParams,
) -> (Vec<FlowSummary>, CompressionStats) {
    let mut stats = CompressionStats {
        records_in: records.len() as u64,
        ..Default::default()
    };
    stats.raw_tokens = records
        .iter()
        .map(|r| estimate_tokens(&render_record_raw(r)))
        .sum();

    let scan_sources = detect_scan_sources(records.iter(), params.scan_threshold);
    stats.scan_sources = scan_sources.len();
    let groups = group_flows(records);
    stats.groups_total = groups.len();

    let mut plain: Vec<AggregatedGroup> = Vec::new();
    let mut per_source: BTreeMap<IpAddr, Vec<AggregatedGroup>> = BTreeMap::new();
    for group in groups {
        if scan_sources.contains(&group.key.src_ip) {
            per_source.entry(group.key.src_ip).or_default().push(group);
        } else {
            plain.push(group);
        }
    }

    let mut notes: BTreeMap<IpAddr, String> = BTreeMap::new();
    let mut kept = plain;
    for (source, source_groups) in per_source {
        let total = source_groups.len();
        let outcome = filter_scan_flows(
            source_groups,
            params.keep_fraction,
            params.score_threshold,
            params.psi,
            params.trees,
            subseed(params.seed, &source.to_string()),
        );
        if outcome.dropped_groups > 0 {
            notes.insert(
                source,
                format!(
                    "scan filter: source {source} dropped {} of {total} groups ({} records)",
                    outcome.dropped_groups, outcome.dropped_records
                ),
            );
        }
        stats.groups_dropped += outcome.dropped_groups;
        stats.records_dropped += outcome.dropped_records;
        kept.extend(outcome.kept);
    }
    kept.sort_by(|a, b| a.key.cmp(&b.key));
    stats.groups_kept = kept.len();

    let mut summaries: Vec<FlowSummary> = kept
        .iter()
        .map(|g| summarize(g, params.field_cap, subseed(params.seed, &g.key.render())))
        .collect();
    // Attach each source's note to its first kept summary.
    for (source, note) in notes {
        if let Some(summary) = summaries.iter_mut().find(|s| s.key.src_ip == source) {
            summary.set_filtered_note(note);
        }
    }
    stats.summary_tokens = summaries.iter().map(|s| s.est_tokens).sum();
    (summaries, stats)
}
