//! Core library for the rhino pipeline: NIDS flow-log ingestion, behavior-preserving
//! compression, LLM-driven mapping of flow groups to MITRE ATT&CK tactic-technique
//! pairs, and the evaluation metrics used to score those mappings.

pub mod attack_kb;
pub mod ingest;
pub mod llm_client;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub(crate) mod util;

pub use attack_kb::{AttackCatalog, TacticId, TacticPartition, TechniqueId};
pub use ingest::{FlowRecord, GroundTruthSet, Transport};
pub use llm_client::{Backend, ChatRequest, ChatResponse, LlmClient, MockBackend};
pub use metrics::{EvalReport, PredictionSet};
pub use pipeline::{
    BehaviorDescription, GroupResult, Pipeline, PromptTemplateSet, RankedMapping, Strategy,
    TTCandidate,
};
pub use preprocess::{AggregatedGroup, FlowKey, FlowSummary, PreprocessParams};
