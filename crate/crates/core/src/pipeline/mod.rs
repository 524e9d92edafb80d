//! The staged reasoning pipeline mapping one flow summary to ranked MITRE
//! ATT&CK tactic-technique pairs, plus the three baseline prompting
//! strategies behind the same interface.

mod baselines;
mod parse;
mod stages;
mod templates;

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack_kb::{AttackCatalog, TacticId, TacticPartition, TechniqueId};
use crate::llm_client::{ChatRequest, LlmClient, LlmError};
use crate::preprocess::{FlowKey, FlowSummary};

pub use templates::{PromptTemplate, PromptTemplateSet};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: model output unusable after format retries: {detail}")]
    Format { stage: &'static str, detail: String },
    #[error("{stage}: {source}")]
    Llm {
        stage: &'static str,
        #[source]
        source: LlmError,
    },
    #[error("all candidates failed catalog validation")]
    AllCandidatesInvalid,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("template error: {0}")]
    Template(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub value: String,
}

/// Dual abstraction output: structured attributes plus a free-form
/// behavioral narrative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorDescription {
    pub attributes: Vec<Attribute>,
    pub narrative: String,
}

impl BehaviorDescription {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.attributes.is_empty() {
            return Err(PipelineError::InvalidInput(
                "behavior has no attributes".into(),
            ));
        }
        if self.narrative.trim().is_empty() {
            return Err(PipelineError::InvalidInput(
                "behavior narrative is empty".into(),
            ));
        }
        Ok(())
    }

    /// Text form used inside downstream prompts.
    pub fn render(&self) -> String {
        let mut out = String::from("attributes:\n");
        for attr in &self.attributes {
            out.push_str(&format!("- {}: {}\n", attr.name, attr.value));
        }
        out.push_str(&format!("narrative: {}", self.narrative));
        out
    }
}

/// Candidate tactic-technique pair with its reasoning justification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTCandidate {
    pub technique: TechniqueId,
    pub tactic: TacticId,
    pub rationale: String,
}

/// Final refined mapping: candidate plus a confidence in [0, 1]. Result
/// lists are sorted non-increasing by confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMapping {
    pub technique: TechniqueId,
    pub tactic: TacticId,
    pub rationale: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Rhino,
    Vanilla,
    Cot,
    Tot,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Rhino => "rhino",
            Strategy::Vanilla => "vanilla",
            Strategy::Cot => "cot",
            Strategy::Tot => "tot",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rhino" => Ok(Strategy::Rhino),
            "vanilla" => Ok(Strategy::Vanilla),
            "cot" => Ok(Strategy::Cot),
            "tot" => Ok(Strategy::Tot),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

/// Counters surfaced per group in the results file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Diagnostics {
    /// Candidates dropped for invalid technique ids: unparseable ids at any
    /// stage, catalog-invalid ids at refinement phase 1.
    pub dropped_invalid: u32,
    /// Fused pairs that appeared in no partial list (kept, but counted).
    pub fusion_novel: u32,
    /// Format-reminder re-prompts issued.
    pub retries: u32,
    /// Tactic-group candidates whose tactic fell outside the group.
    pub dropped_out_of_group: u32,
    /// Confidence values clamped into [0, 1].
    pub clamped_confidences: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub calls: u32,
}

impl TokenUsage {
    fn add(&mut self, response: &crate::llm_client::ChatResponse) {
        self.prompt_tokens += response.prompt_tokens;
        self.completion_tokens += response.completion_tokens;
        self.calls += 1;
    }
}

/// Mutable per-group bookkeeping threaded through the stages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTrace {
    pub diagnostics: Diagnostics,
    pub token_usage: TokenUsage,
}

/// One line of the results JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub flow_key: FlowKey,
    #[serde(default)]
    pub labels: BTreeSet<String>,
    pub strategy: String,
    pub behavior: Option<BehaviorDescription>,
    pub intent: Option<String>,
    pub candidates: Vec<TTCandidate>,
    pub ranked_mappings: Vec<RankedMapping>,
    pub diagnostics: Diagnostics,
    pub token_usage: TokenUsage,
}

/// Per-call model parameters.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub model: String,
    pub temperature: f64,
    /// Temperature for the tree-of-thought reasoning paths.
    pub tot_temperature: f64,
    pub max_tokens: u32,
    /// Format-reminder re-prompts per stage before giving up.
    pub format_retries: u32,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            model: "gpt-4o".to_string(),
            temperature: 0.0,
            tot_temperature: 0.7,
            max_tokens: 1024,
            format_retries: 2,
        }
    }
}

pub struct Pipeline<'a> {
    pub client: &'a LlmClient,
    pub templates: &'a PromptTemplateSet,
    pub catalog: &'a AttackCatalog,
    pub partition: &'a TacticPartition,
    pub opts: PipelineOptions,
}

const FORMAT_REMINDER: &str =
    "\n\nReminder: respond with strict JSON exactly matching the requested schema, with no surrounding prose.";

impl<'a> Pipeline<'a> {
    pub fn new(
        client: &'a LlmClient,
        templates: &'a PromptTemplateSet,
        catalog: &'a AttackCatalog,
        partition: &'a TacticPartition,
        opts: PipelineOptions,
    ) -> Self {
        Self {
            client,
            templates,
            catalog,
            partition,
            opts,
        }
    }

    /// Runs one strategy over one flow summary.
    pub fn run(
        &self,
        strategy: Strategy,
        summary: &FlowSummary,
    ) -> Result<GroupResult, PipelineError> {
        match strategy {
            Strategy::Rhino => self.run_rhino(summary),
            Strategy::Vanilla | Strategy::Cot => self.run_single_shot(strategy, summary),
            Strategy::Tot => self.run_tot(summary),
        }
    }

    /// Issues one completion with bounded format retries: every parse
    /// failure re-sends the prompt with a format reminder appended.
    fn call_with_format_retry<T>(
        &self,
        stage: &'static str,
        base_prompt: &str,
        temperature: f64,
        trace: &mut StageTrace,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, PipelineError> {
        let mut prompt = base_prompt.to_string();
        let mut last_detail = String::new();
        for attempt in 0..=self.opts.format_retries {
            let request = ChatRequest::user(
                &self.opts.model,
                prompt.clone(),
                temperature,
                self.opts.max_tokens,
            );
            let response = self
                .client
                .complete(&request)
                .map_err(|source| PipelineError::Llm { stage, source })?;
            trace.token_usage.add(&response);
            match parse(&response.content) {
                Ok(value) => return Ok(value),
                Err(detail) => {
                    last_detail = detail;
                    if attempt < self.opts.format_retries {
                        trace.diagnostics.retries += 1;
                        prompt.push_str(FORMAT_REMINDER);
                    }
                }
            }
        }
        Err(PipelineError::Format {
            stage,
            detail: last_detail,
        })
    }
}
