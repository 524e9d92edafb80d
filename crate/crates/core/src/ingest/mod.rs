//! Parsers for the supported NIDS log families (Zeek conn.log TSV and
//! column-mapped flow CSVs) plus the ground-truth label file. All parsers are
//! streaming and single-pass: a line either becomes a [`FlowRecord`] or a
//! skipped-line warning, never both held in memory.

mod flow_csv;
mod ground_truth;
mod zeek;

use std::collections::BTreeMap;
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use flow_csv::{
    generic_mapping, write_generic_csv, ColumnMapping, DurationUnit, FlowCsvParser,
};
pub use ground_truth::{
    load_ground_truth, parse_ground_truth, FlowSelector, GroundTruthEntry, GroundTruthSet,
};
pub use zeek::ZeekConnParser;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("no #fields header line found before data")]
    MissingHeader,
    #[error("column {0:?} is mapped in the schema but absent from the header")]
    SchemaMismatch(String),
    #[error("invalid technique id {0:?}")]
    InvalidTechniqueId(String),
    #[error("duplicate scenario {0:?}")]
    DuplicateScenario(String),
    #[error("scenario {0:?} lists no techniques")]
    EmptyTechniques(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Transport protocol of a flow.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Transport {
    Tcp,
    Udp,
    Icmp,
    Other(String),
}

impl Transport {
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "tcp" | "6" => Transport::Tcp,
            "udp" | "17" => Transport::Udp,
            "icmp" | "icmp6" | "1" | "58" => Transport::Icmp,
            other => Transport::Other(other.to_string()),
        }
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transport::Tcp => f.write_str("tcp"),
            Transport::Udp => f.write_str("udp"),
            Transport::Icmp => f.write_str("icmp"),
            Transport::Other(s) => f.write_str(s),
        }
    }
}

impl Serialize for Transport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Transport {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(Transport::parse(&String::deserialize(deserializer)?))
    }
}

/// TCP flag symbols tracked per record as a multiset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TcpFlag {
    #[serde(rename = "SYN")]
    Syn,
    #[serde(rename = "ACK")]
    Ack,
    #[serde(rename = "FIN")]
    Fin,
    #[serde(rename = "RST")]
    Rst,
    #[serde(rename = "PSH")]
    Psh,
    #[serde(rename = "URG")]
    Urg,
}

impl TcpFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            TcpFlag::Syn => "SYN",
            TcpFlag::Ack => "ACK",
            TcpFlag::Fin => "FIN",
            TcpFlag::Rst => "RST",
            TcpFlag::Psh => "PSH",
            TcpFlag::Urg => "URG",
        }
    }
}

impl FromStr for TcpFlag {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SYN" => Ok(TcpFlag::Syn),
            "ACK" => Ok(TcpFlag::Ack),
            "FIN" => Ok(TcpFlag::Fin),
            "RST" => Ok(TcpFlag::Rst),
            "PSH" => Ok(TcpFlag::Psh),
            "URG" => Ok(TcpFlag::Urg),
            _ => Err(()),
        }
    }
}

/// One parsed NIDS log line in the uniform internal shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub ts: f64,
    pub src_ip: IpAddr,
    pub src_port: u16,
    pub dst_ip: IpAddr,
    pub dst_port: u16,
    pub transport: Transport,
    pub app_service: Option<String>,
    pub duration_s: f64,
    pub fwd_packets: u64,
    pub bwd_packets: u64,
    pub fwd_bytes: u64,
    pub bwd_bytes: u64,
    /// Multiset of flag symbols; empty unless `transport` is TCP.
    pub tcp_flags: BTreeMap<TcpFlag, u32>,
    pub app_fields: BTreeMap<String, String>,
    pub label: Option<String>,
}

impl FlowRecord {
    /// Encodes the flag multiset as `ACK:2|SYN:1` (sorted, stable).
    pub fn tcp_flags_string(&self) -> String {
        self.tcp_flags
            .iter()
            .map(|(flag, count)| format!("{}:{}", flag.as_str(), count))
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// Parses a `SYN:2|ACK:1` (or bare `SYN|ACK`) flag string.
pub fn parse_tcp_flags(s: &str) -> Option<BTreeMap<TcpFlag, u32>> {
    let mut flags = BTreeMap::new();
    for part in s.split('|').filter(|p| !p.trim().is_empty()) {
        let (sym, count) = match part.split_once(':') {
            Some((sym, count)) => (sym, count.trim().parse::<u32>().ok()?),
            None => (part, 1),
        };
        let flag = TcpFlag::from_str(sym).ok()?;
        *flags.entry(flag).or_insert(0) += count;
    }
    Some(flags)
}

/// A diagnostic attached to one input line. `skipped` is true when the line
/// could not be turned into a record at all; soft warnings (false) annotate
/// lines that still produced a record, e.g. an unset Zeek duration.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseWarning {
    pub line: u64,
    pub message: String,
    pub skipped: bool,
}

/// Running counts of parse outcomes. Only a bounded sample of warning details
/// is retained so parsing stays O(1) in file length.
#[derive(Debug, Default, Clone)]
pub struct ParseDiagnostics {
    pub records: u64,
    pub skipped_lines: u64,
    pub soft_warnings: u64,
    samples: Vec<ParseWarning>,
}

const WARNING_SAMPLE_CAP: usize = 20;

impl ParseDiagnostics {
    pub(crate) fn record(&mut self) {
        self.records += 1;
    }

    pub(crate) fn warn(&mut self, line: u64, message: impl Into<String>, skipped: bool) {
        if skipped {
            self.skipped_lines += 1;
        } else {
            self.soft_warnings += 1;
        }
        if self.samples.len() < WARNING_SAMPLE_CAP {
            self.samples.push(ParseWarning {
                line,
                message: message.into(),
                skipped,
            });
        }
    }

    /// Bounded sample of the warnings seen (first [`WARNING_SAMPLE_CAP`]).
    pub fn sample(&self) -> &[ParseWarning] {
        &self.samples
    }

    pub fn total_warnings(&self) -> u64 {
        self.skipped_lines + self.soft_warnings
    }
}
