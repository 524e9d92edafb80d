//! The five reasoning stages: abstraction, intent, partitioned
//! tactic-group inference, fusion, and catalog-validated refinement.

use std::collections::BTreeSet;

use super::parse::{parse_behavior, parse_candidates, parse_intent, RawCandidate};
use super::{
    Attribute, BehaviorDescription, GroupResult, Pipeline, PipelineError, RankedMapping,
    StageTrace, Strategy, TTCandidate,
};
use crate::attack_kb::{TacticId, TechniqueId};
use crate::preprocess::FlowSummary;

impl Pipeline<'_> {
    /// Abstraction: flow summary → (attributes, narrative). The core
    /// five-tuple attributes are always present in the output, copied from
    /// the summary if the model omits them.
    pub fn abstract_behavior(
        &self,
        summary: &FlowSummary,
        trace: &mut StageTrace,
    ) -> Result<BehaviorDescription, PipelineError> {
        let prompt = self
            .templates
            .abstraction
            .render(&[("flow_summary", &summary.render_text())]);
        let mut behavior = self.call_with_format_retry(
            "abstract",
            &prompt,
            self.opts.temperature,
            trace,
            parse_behavior,
        )?;
        ensure_core_attributes(&mut behavior, summary);
        Ok(behavior)
    }

    /// Intent inference over a validated behavior description.
    pub fn infer_intent(
        &self,
        behavior: &BehaviorDescription,
        trace: &mut StageTrace,
    ) -> Result<String, PipelineError> {
        behavior.validate()?;
        let prompt = self
            .templates
            .intent
            .render(&[("behavior", &behavior.render())]);
        self.call_with_format_retry(
            "intent",
            &prompt,
            self.opts.temperature,
            trace,
            parse_intent,
        )
    }

    /// Technique inference restricted to one tactic group. Candidates whose
    /// tactic falls outside the group are dropped and counted; technique ids
    /// are syntax-checked only (catalog validation happens in refinement).
    pub fn infer_tt_group(
        &self,
        behavior: &BehaviorDescription,
        intent: &str,
        group: &BTreeSet<TacticId>,
        group_index: usize,
        trace: &mut StageTrace,
    ) -> Result<Vec<TTCandidate>, PipelineError> {
        let group_text = group
            .iter()
            .map(TacticId::as_str)
            .collect::<Vec<_>>()
            .join(", ");
        let prompt = self.templates.tt.render(&[
            ("behavior", behavior.render().as_str()),
            ("intent", intent),
            ("tactic_group", group_text.as_str()),
        ]);
        // Group index participates in the prompt so the five requests stay
        // distinguishable under digest-keyed mocks and caches.
        let prompt = format!("{prompt}\n\nTactic group {group_index} of 5.");
        let raw = self.call_with_format_retry(
            "tt_group",
            &prompt,
            self.opts.temperature,
            trace,
            parse_candidates,
        )?;
        Ok(self.screen_candidates(raw, Some(group), trace))
    }

    /// Fusion: consolidates the five partial lists into at most five
    /// deduplicated pairs. Pairs absent from every partial are kept but
    /// counted as fusion-novel.
    pub fn fuse(
        &self,
        behavior: &BehaviorDescription,
        intent: &str,
        partials: &[Vec<TTCandidate>],
        trace: &mut StageTrace,
    ) -> Result<Vec<TTCandidate>, PipelineError> {
        if partials.len() != 5 {
            return Err(PipelineError::InvalidInput(format!(
                "fusion expects exactly 5 partial lists, got {}",
                partials.len()
            )));
        }
        if partials.iter().all(|p| p.is_empty()) {
            return Ok(Vec::new());
        }
        let partials_text = serde_json::to_string_pretty(partials)
            .map_err(|e| PipelineError::InvalidInput(e.to_string()))?;
        let prompt = self.templates.fusion.render(&[
            ("behavior", behavior.render().as_str()),
            ("intent", intent),
            ("partials", partials_text.as_str()),
        ]);
        let raw = self.call_with_format_retry(
            "fusion",
            &prompt,
            self.opts.temperature,
            trace,
            parse_candidates,
        )?;
        let mut fused = self.screen_candidates(raw, None, trace);

        let known: BTreeSet<(TechniqueId, TacticId)> = partials
            .iter()
            .flatten()
            .map(|c| (c.technique.clone(), c.tactic.clone()))
            .collect();
        let mut seen = BTreeSet::new();
        fused.retain(|c| seen.insert((c.technique.clone(), c.tactic.clone())));
        fused.truncate(5);
        for c in &fused {
            if !known.contains(&(c.technique.clone(), c.tactic.clone())) {
                trace.diagnostics.fusion_novel += 1;
            }
        }
        Ok(fused)
    }

    /// Two-phase refinement: drop catalog-invalid candidates, then score the
    /// survivors against their official definitions and rank by confidence
    /// (ties broken by ascending technique id).
    pub fn refine(
        &self,
        candidates: &[TTCandidate],
        behavior: &BehaviorDescription,
        trace: &mut StageTrace,
    ) -> Result<Vec<RankedMapping>, PipelineError> {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let valid: Vec<&TTCandidate> = candidates
            .iter()
            .filter(|c| self.catalog.is_valid(c.technique.as_str()))
            .collect();
        trace.diagnostics.dropped_invalid += (candidates.len() - valid.len()) as u32;
        if valid.is_empty() {
            return Err(PipelineError::AllCandidatesInvalid);
        }

        let candidates_text = serde_json::to_string_pretty(&valid)
            .map_err(|e| PipelineError::InvalidInput(e.to_string()))?;
        let definitions = valid
            .iter()
            .filter_map(|c| self.catalog.definition(&c.technique))
            .map(|d| format!("- {d}"))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = self.templates.refine.render(&[
            ("behavior", behavior.render().as_str()),
            ("candidates", candidates_text.as_str()),
            ("definitions", definitions.as_str()),
        ]);
        let scored = self.call_with_format_retry(
            "refine",
            &prompt,
            self.opts.temperature,
            trace,
            parse_candidates,
        )?;

        let mut ranked: Vec<RankedMapping> = valid
            .iter()
            .map(|candidate| {
                let hit = scored
                    .iter()
                    .find(|s| {
                        s.technique == candidate.technique.as_str()
                            && TacticId::new(&s.tactic) == candidate.tactic
                    })
                    .or_else(|| {
                        scored
                            .iter()
                            .find(|s| s.technique == candidate.technique.as_str())
                    });
                let mut confidence = hit.and_then(|s| s.confidence).unwrap_or(0.0);
                if !(0.0..=1.0).contains(&confidence) {
                    trace.diagnostics.clamped_confidences += 1;
                    confidence = confidence.clamp(0.0, 1.0);
                }
                let rationale = hit
                    .map(|s| s.rationale.clone())
                    .filter(|r| !r.is_empty())
                    .unwrap_or_else(|| candidate.rationale.clone());
                RankedMapping {
                    technique: candidate.technique.clone(),
                    tactic: candidate.tactic.clone(),
                    rationale,
                    confidence,
                }
            })
            .collect();
        ranked.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then_with(|| a.technique.cmp(&b.technique))
        });
        Ok(ranked)
    }

    /// Syntax-checks raw candidates; optionally enforces tactic-group
    /// membership. Drops are counted in the trace.
    fn screen_candidates(
        &self,
        raw: Vec<RawCandidate>,
        group: Option<&BTreeSet<TacticId>>,
        trace: &mut StageTrace,
    ) -> Vec<TTCandidate> {
        let mut out = Vec::with_capacity(raw.len());
        for candidate in raw {
            let Ok(technique) = TechniqueId::parse(&candidate.technique) else {
                trace.diagnostics.dropped_invalid += 1;
                continue;
            };
            let tactic = TacticId::new(&candidate.tactic);
            if let Some(group) = group {
                if !group.contains(&tactic) {
                    trace.diagnostics.dropped_out_of_group += 1;
                    continue;
                }
            }
            let rationale = if candidate.rationale.is_empty() {
                "(no rationale given)".to_string()
            } else {
                candidate.rationale
            };
            out.push(TTCandidate {
                technique,
                tactic,
                rationale,
            });
        }
        out
    }

    pub(super) fn run_rhino(&self, summary: &FlowSummary) -> Result<GroupResult, PipelineError> {
        let mut trace = StageTrace::default();
        let behavior = self.abstract_behavior(summary, &mut trace)?;
        let intent = self.infer_intent(&behavior, &mut trace)?;
        let mut partials: Vec<Vec<TTCandidate>> = Vec::with_capacity(5);
        for (j, group) in self.partition.groups().iter().enumerate() {
            partials.push(self.infer_tt_group(&behavior, &intent, group, j + 1, &mut trace)?);
        }
        let candidates = self.fuse(&behavior, &intent, &partials, &mut trace)?;
        let ranked_mappings = if candidates.is_empty() {
            trace.diagnostics.note = Some("no-mapping".to_string());
            Vec::new()
        } else {
            match self.refine(&candidates, &behavior, &mut trace) {
                Ok(ranked) => ranked,
                Err(PipelineError::AllCandidatesInvalid) => {
                    trace.diagnostics.note =
                        Some("all candidates failed catalog validation".to_string());
                    Vec::new()
                }
                Err(e) => return Err(e),
            }
        };
        Ok(GroupResult {
            flow_key: summary.key.clone(),
            labels: summary.labels.clone(),
            strategy: Strategy::Rhino.as_str().to_string(),
            behavior: Some(behavior),
            intent: Some(intent),
            candidates,
            ranked_mappings,
            diagnostics: trace.diagnostics,
            token_usage: trace.token_usage,
        })
    }
}

fn ensure_core_attributes(behavior: &mut BehaviorDescription, summary: &FlowSummary) {
    let required = [
        ("src_ip", summary.key.src_ip.to_string()),
        ("dst_ip", summary.key.dst_ip.to_string()),
        ("dst_port", summary.key.dst_port.to_string()),
        ("protocol", summary.key.transport.to_string()),
    ];
    for (name, value) in required.into_iter().rev() {
        if !behavior.attributes.iter().any(|a| a.name == name) {
            behavior.attributes.insert(
                0,
                Attribute {
                    name: name.to_string(),
                    value,
                },
            );
        }
    }
}
