//! MITRE ATT&CK enterprise knowledge base: technique/tactic catalog loading
//! (STIX 2.1 bundle or compact CSV snapshot), technique-id validation,
//! technique-to-tactic membership checks, and the five-group tactic partition
//! used by the partitioned inference stage.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Compact snapshot of the enterprise catalog bundled with the crate so the
/// pipeline and its tests work without network access.
const BUNDLED_CATALOG_CSV: &str = include_str!("../../data/attack_catalog.csv");

#[derive(Debug, Error)]
pub enum KbError {
    #[error("invalid technique id {0:?}")]
    InvalidTechniqueId(String),
    #[error("unknown technique {0}")]
    UnknownTechnique(String),
    #[error("malformed STIX bundle: {0}")]
    MalformedBundle(String),
    #[error("catalog contains no techniques")]
    EmptyCatalog,
    #[error("bad tactic partition: {0}")]
    BadPartition(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn technique_id_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^T\d{4}(\.\d{3})?$").expect("valid regex"))
}

/// A MITRE technique identifier, `T####` or `T####.###`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TechniqueId(String);

impl TechniqueId {
    pub fn parse(s: &str) -> Result<Self, KbError> {
        let s = s.trim();
        if technique_id_regex().is_match(s) {
            Ok(Self(s.to_string()))
        } else {
            Err(KbError::InvalidTechniqueId(s.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The parent technique id (`T1110` for `T1110.001`); identity for
    /// techniques without a sub-technique suffix.
    pub fn base(&self) -> &str {
        self.0.split('.').next().unwrap_or(&self.0)
    }

    pub fn is_subtechnique(&self) -> bool {
        self.0.contains('.')
    }

    /// True when the two ids refer to the same base technique.
    pub fn same_base(&self, other: &TechniqueId) -> bool {
        self.base() == other.base()
    }
}

impl fmt::Display for TechniqueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for TechniqueId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for TechniqueId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        TechniqueId::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A tactic shortname such as `credential-access`. Construction normalizes
/// case and separators so model output like "Credential Access" compares
/// equal to the catalog form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TacticId(String);

impl TacticId {
    pub fn new(s: &str) -> Self {
        let normalized = s
            .trim()
            .to_ascii_lowercase()
            .replace([' ', '_'], "-")
            .replace("--", "-");
        Self(normalized)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TacticId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for TacticId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(TacticId::new(&String::deserialize(deserializer)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticInfo {
    pub shortname: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueRecord {
    pub id: TechniqueId,
    pub name: String,
    pub tactics: BTreeSet<TacticId>,
    pub description: String,
    pub revoked: bool,
}

/// The 14 enterprise tactics, kill-chain ordered.
pub fn enterprise_tactics() -> [(&'static str, &'static str); 14] {
    [
        ("reconnaissance", "Reconnaissance"),
        ("resource-development", "Resource Development"),
        ("initial-access", "Initial Access"),
        ("execution", "Execution"),
        ("persistence", "Persistence"),
        ("privilege-escalation", "Privilege Escalation"),
        ("defense-evasion", "Defense Evasion"),
        ("credential-access", "Credential Access"),
        ("discovery", "Discovery"),
        ("lateral-movement", "Lateral Movement"),
        ("collection", "Collection"),
        ("command-and-control", "Command and Control"),
        ("exfiltration", "Exfiltration"),
        ("impact", "Impact"),
    ]
}

fn canonical_tactic_map() -> BTreeMap<TacticId, TacticInfo> {
    enterprise_tactics()
        .iter()
        .map(|(short, name)| {
            (
                TacticId::new(short),
                TacticInfo {
                    shortname: (*short).to_string(),
                    name: (*name).to_string(),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackCatalog {
    pub techniques: BTreeMap<TechniqueId, TechniqueRecord>,
    pub tactics: BTreeMap<TacticId, TacticInfo>,
    pub version: String,
}

impl AttackCatalog {
    /// Loads the compact CSV snapshot shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_csv_str(BUNDLED_CATALOG_CSV, "bundled-snapshot")
            .expect("bundled catalog snapshot is valid")
    }

    /// Loads a STIX 2.1 enterprise-attack bundle.
    pub fn load_stix(path: &Path) -> Result<Self, KbError> {
        let raw = std::fs::read_to_string(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| KbError::MalformedBundle(e.to_string()))?;
        Self::from_stix_value(&value)
    }

    pub fn from_stix_value(value: &serde_json::Value) -> Result<Self, KbError> {
        let objects = value
            .get("objects")
            .and_then(|o| o.as_array())
            .ok_or_else(|| KbError::MalformedBundle("missing objects array".to_string()))?;
        if objects.is_empty() {
            return Err(KbError::EmptyCatalog);
        }

        let mut version = "unknown".to_string();
        let mut techniques = BTreeMap::new();
        for obj in objects {
            match obj.get("type").and_then(|t| t.as_str()) {
                Some("x-mitre-collection") => {
                    if let Some(v) = obj.get("x_mitre_version").and_then(|v| v.as_str()) {
                        version = v.to_string();
                    }
                }
                Some("attack-pattern") => {
                    if let Some(record) = technique_from_stix(obj)? {
                        techniques.insert(record.id.clone(), record);
                    }
                }
                _ => {}
            }
        }
        if techniques.is_empty() {
            return Err(KbError::EmptyCatalog);
        }
        Ok(Self {
            techniques,
            tactics: canonical_tactic_map(),
            version,
        })
    }

    /// Loads the compact CSV form: `id,name,tactics,revoked` with tactics
    /// pipe-separated.
    pub fn load_csv(path: &Path) -> Result<Self, KbError> {
        let raw = std::fs::read_to_string(path)?;
        Self::from_csv_str(&raw, "csv-snapshot")
    }

    pub fn from_csv_str(raw: &str, version: &str) -> Result<Self, KbError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(raw.as_bytes());
        let mut techniques = BTreeMap::new();
        for row in reader.records() {
            let row = row?;
            let id = TechniqueId::parse(row.get(0).unwrap_or_default())?;
            let name = row.get(1).unwrap_or_default().to_string();
            let tactics = row
                .get(2)
                .unwrap_or_default()
                .split('|')
                .filter(|t| !t.trim().is_empty())
                .map(TacticId::new)
                .collect();
            let revoked = row
                .get(3)
                .map(|v| v.eq_ignore_ascii_case("true"))
                .unwrap_or(false);
            techniques.insert(
                id.clone(),
                TechniqueRecord {
                    id,
                    name,
                    tactics,
                    description: String::new(),
                    revoked,
                },
            );
        }
        if techniques.is_empty() {
            return Err(KbError::EmptyCatalog);
        }
        Ok(Self {
            techniques,
            tactics: canonical_tactic_map(),
            version: version.to_string(),
        })
    }

    /// Serializes the catalog to the compact CSV snapshot format.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("id,name,tactics,revoked\n");
        for record in self.techniques.values() {
            let tactics = record
                .tactics
                .iter()
                .map(TacticId::as_str)
                .collect::<Vec<_>>()
                .join("|");
            let name = if record.name.contains(',') || record.name.contains('"') {
                format!("\"{}\"", record.name.replace('"', "\"\""))
            } else {
                record.name.clone()
            };
            out.push_str(&format!(
                "{},{},{},{}\n",
                record.id, name, tactics, record.revoked
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), KbError> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    fn valid_exact(&self, id: &TechniqueId) -> bool {
        self.techniques.get(id).is_some_and(|t| !t.revoked)
    }

    /// Total validation: true iff the string is a syntactically valid id that
    /// is present (itself, or its parent for sub-techniques) and not revoked.
    pub fn is_valid(&self, id: &str) -> bool {
        let Ok(id) = TechniqueId::parse(id) else {
            return false;
        };
        if self.valid_exact(&id) {
            return true;
        }
        if id.is_subtechnique() {
            if let Ok(base) = TechniqueId::parse(id.base()) {
                return self.valid_exact(&base);
            }
        }
        false
    }

    /// Resolves a technique to its record, falling back to the parent for
    /// sub-techniques not individually present in the snapshot.
    pub fn resolve(&self, id: &TechniqueId) -> Option<&TechniqueRecord> {
        if let Some(t) = self.techniques.get(id).filter(|t| !t.revoked) {
            return Some(t);
        }
        if id.is_subtechnique() {
            let base = TechniqueId::parse(id.base()).ok()?;
            return self.techniques.get(&base).filter(|t| !t.revoked);
        }
        None
    }

    /// True iff `tactic` is one of the catalog tactics of `technique`.
    pub fn tactic_consistent(
        &self,
        technique: &TechniqueId,
        tactic: &TacticId,
    ) -> Result<bool, KbError> {
        let record = self
            .resolve(technique)
            .ok_or_else(|| KbError::UnknownTechnique(technique.to_string()))?;
        Ok(record.tactics.contains(tactic))
    }

    /// Rendered official definition line for a technique, used by the
    /// refinement prompt.
    pub fn definition(&self, id: &TechniqueId) -> Option<String> {
        let record = self.resolve(id)?;
        if record.description.is_empty() {
            Some(format!("{} ({})", record.id, record.name))
        } else {
            Some(format!(
                "{} ({}): {}",
                record.id, record.name, record.description
            ))
        }
    }
}

fn technique_from_stix(obj: &serde_json::Value) -> Result<Option<TechniqueRecord>, KbError> {
    let Some(refs) = obj.get("external_references").and_then(|r| r.as_array()) else {
        return Ok(None);
    };
    let external_id = refs.iter().find_map(|r| {
        let source = r.get("source_name").and_then(|s| s.as_str())?;
        if source == "mitre-attack" {
            r.get("external_id").and_then(|e| e.as_str())
        } else {
            None
        }
    });
    let Some(external_id) = external_id else {
        return Ok(None);
    };
    let id = match TechniqueId::parse(external_id) {
        Ok(id) => id,
        // Bundles also carry tactic/mitigation ids under mitre-attack refs.
        Err(_) => return Ok(None),
    };
    let name = obj
        .get("name")
        .and_then(|n| n.as_str())
        .unwrap_or_default()
        .to_string();
    let description = obj
        .get("description")
        .and_then(|d| d.as_str())
        .unwrap_or_default()
        .to_string();
    let revoked = obj
        .get("revoked")
        .and_then(|r| r.as_bool())
        .unwrap_or(false)
        || obj
            .get("x_mitre_deprecated")
            .and_then(|r| r.as_bool())
            .unwrap_or(false);
    let tactics = obj
        .get("kill_chain_phases")
        .and_then(|p| p.as_array())
        .map(|phases| {
            phases
                .iter()
                .filter(|p| {
                    p.get("kill_chain_name")
                        .and_then(|n| n.as_str())
                        .is_some_and(|n| n.starts_with("mitre-attack"))
                })
                .filter_map(|p| p.get("phase_name").and_then(|n| n.as_str()))
                .map(TacticId::new)
                .collect::<BTreeSet<_>>()
        })
        .unwrap_or_default();
    Ok(Some(TechniqueRecord {
        id,
        name,
        tactics,
        description,
        revoked,
    }))
}

/// Five non-overlapping groups covering the 14 enterprise tactics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticPartition {
    groups: Vec<BTreeSet<TacticId>>,
}

impl TacticPartition {
    /// Kill-chain-ordered default grouping; overridable via [`Self::from_spec`].
    pub fn default_partition() -> Self {
        let groups: Vec<BTreeSet<TacticId>> = [
            vec!["reconnaissance", "resource-development", "initial-access"],
            vec!["execution", "persistence", "privilege-escalation"],
            vec!["defense-evasion", "credential-access"],
            vec!["discovery", "lateral-movement", "collection"],
            vec!["command-and-control", "exfiltration", "impact"],
        ]
        .iter()
        .map(|g| g.iter().map(|t| TacticId::new(t)).collect())
        .collect();
        Self { groups }
    }

    /// Builds a partition from an explicit grouping, validating it against
    /// the catalog's tactic set.
    pub fn from_spec(catalog: &AttackCatalog, spec: &[Vec<String>]) -> Result<Self, KbError> {
        let partition = Self {
            groups: spec
                .iter()
                .map(|g| g.iter().map(|t| TacticId::new(t)).collect())
                .collect(),
        };
        partition.validate(catalog)?;
        Ok(partition)
    }

    pub fn validate(&self, catalog: &AttackCatalog) -> Result<(), KbError> {
        if self.groups.len() != 5 {
            return Err(KbError::BadPartition(format!(
                "expected 5 groups, got {}",
                self.groups.len()
            )));
        }
        let mut seen: BTreeSet<&TacticId> = BTreeSet::new();
        for group in &self.groups {
            for tactic in group {
                if !catalog.tactics.contains_key(tactic) {
                    return Err(KbError::BadPartition(format!("unknown tactic {tactic:?}")));
                }
                if !seen.insert(tactic) {
                    return Err(KbError::BadPartition(format!(
                        "tactic {tactic} appears in more than one group"
                    )));
                }
            }
        }
        if seen.len() != catalog.tactics.len() {
            let missing: Vec<String> = catalog
                .tactics
                .keys()
                .filter(|t| !seen.contains(t))
                .map(|t| t.to_string())
                .collect();
            return Err(KbError::BadPartition(format!(
                "partition does not cover: {}",
                missing.join(", ")
            )));
        }
        Ok(())
    }

    pub fn groups(&self) -> &[BTreeSet<TacticId>] {
        &self.groups
    }
}
