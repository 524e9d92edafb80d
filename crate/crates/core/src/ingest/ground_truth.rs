//! Ground-truth label file: per-scenario flow selectors mapped to the
//! technique/tactic sets an analyst assigned to that attack variant.

use std::collections::BTreeSet;
use std::net::IpAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FlowRecord, IngestError, Transport};
use crate::attack_kb::{TacticId, TechniqueId};

/// Five-tuple pattern with wildcards (None) and optional label equality.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowSelector {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub src_ip: Option<IpAddr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dst_ip: Option<IpAddr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dst_port: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transport: Option<Transport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub app_service: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl FlowSelector {
    /// Matches key components plus the label set carried by a summary.
    pub fn matches_parts(
        &self,
        src_ip: &IpAddr,
        dst_ip: &IpAddr,
        dst_port: u16,
        transport: &Transport,
        app_service: Option<&str>,
        labels: &BTreeSet<String>,
    ) -> bool {
        if self.src_ip.is_some_and(|want| want != *src_ip) {
            return false;
        }
        if self.dst_ip.is_some_and(|want| want != *dst_ip) {
            return false;
        }
        if self.dst_port.is_some_and(|want| want != dst_port) {
            return false;
        }
        if self
            .transport
            .as_ref()
            .is_some_and(|want| want != transport)
        {
            return false;
        }
        if self
            .app_service
            .as_deref()
            .is_some_and(|want| Some(want) != app_service)
        {
            return false;
        }
        if self
            .label
            .as_deref()
            .is_some_and(|want| !labels.contains(want))
        {
            return false;
        }
        true
    }

    pub fn matches_record(&self, record: &FlowRecord) -> bool {
        let labels: BTreeSet<String> = record.label.iter().cloned().collect();
        self.matches_parts(
            &record.src_ip,
            &record.dst_ip,
            record.dst_port,
            &record.transport,
            record.app_service.as_deref(),
            &labels,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub scenario: String,
    pub selector: FlowSelector,
    pub techniques: BTreeSet<TechniqueId>,
    pub tactics: BTreeSet<TacticId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSet {
    pub entries: Vec<GroundTruthEntry>,
}

impl GroundTruthSet {
    /// First entry whose selector matches the given flow parts.
    pub fn lookup(
        &self,
        src_ip: &IpAddr,
        dst_ip: &IpAddr,
        dst_port: u16,
        transport: &Transport,
        app_service: Option<&str>,
        labels: &BTreeSet<String>,
    ) -> Option<&GroundTruthEntry> {
        self.entries.iter().find(|e| {
            e.selector
                .matches_parts(src_ip, dst_ip, dst_port, transport, app_service, labels)
        })
    }
}

#[derive(Debug, Deserialize)]
struct RawEntry {
    scenario: String,
    #[serde(default)]
    selector: FlowSelector,
    techniques: Vec<String>,
    #[serde(default)]
    tactics: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawFile {
    entries: Vec<RawEntry>,
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruthSet, IngestError> {
    let raw = std::fs::read_to_string(path)?;
    parse_ground_truth(&raw)
}

pub fn parse_ground_truth(raw: &str) -> Result<GroundTruthSet, IngestError> {
    let file: RawFile = serde_json::from_str(raw)?;
    let mut seen = BTreeSet::new();
    let mut entries = Vec::with_capacity(file.entries.len());
    for entry in file.entries {
        if !seen.insert(entry.scenario.clone()) {
            return Err(IngestError::DuplicateScenario(entry.scenario));
        }
        if entry.techniques.is_empty() {
            return Err(IngestError::EmptyTechniques(entry.scenario));
        }
        let techniques = entry
            .techniques
            .iter()
            .map(|t| TechniqueId::parse(t).map_err(|_| IngestError::InvalidTechniqueId(t.clone())))
            .collect::<Result<BTreeSet<_>, _>>()?;
        let tactics = entry.tactics.iter().map(|t| TacticId::new(t)).collect();
        entries.push(GroundTruthEntry {
            scenario: entry.scenario,
            selector: entry.selector,
            techniques,
            tactics,
        });
    }
    Ok(GroundTruthSet { entries })
}
