//! Baseline prompting strategies: vanilla single-shot, chain-of-thought,
//! and tree-of-thought with three paths and majority-vote aggregation.
//! Baseline output keeps the model's raw technique choices (no catalog
//! filtering); only unparseable ids are dropped.

use std::collections::BTreeMap;

use super::parse::{parse_candidates, RawCandidate};
use super::{
    GroupResult, Pipeline, PipelineError, RankedMapping, StageTrace, Strategy, TTCandidate,
};
use crate::attack_kb::{TacticId, TechniqueId};
use crate::preprocess::FlowSummary;

/// Ordinal confidences assigned to unranked baseline output by position.
const ORDINAL_CONFIDENCE: [f64; 5] = [1.0, 0.8, 0.6, 0.4, 0.2];

const TOT_PATHS: usize = 3;

impl Pipeline<'_> {
    pub(super) fn run_single_shot(
        &self,
        strategy: Strategy,
        summary: &FlowSummary,
    ) -> Result<GroupResult, PipelineError> {
        let template = match strategy {
            Strategy::Vanilla => &self.templates.vanilla,
            Strategy::Cot => &self.templates.cot,
            _ => unreachable!("single-shot covers vanilla and cot"),
        };
        let stage: &'static str = match strategy {
            Strategy::Vanilla => "vanilla",
            _ => "cot",
        };
        let mut trace = StageTrace::default();
        let prompt = template.render(&[("flow_summary", &summary.render_text())]);
        let raw = self.call_with_format_retry(
            stage,
            &prompt,
            self.opts.temperature,
            &mut trace,
            parse_candidates,
        )?;
        let candidates = syntax_screen(raw, &mut trace);
        let ranked_mappings = ordinal_rank(&candidates);
        Ok(GroupResult {
            flow_key: summary.key.clone(),
            labels: summary.labels.clone(),
            strategy: strategy.as_str().to_string(),
            behavior: None,
            intent: None,
            candidates,
            ranked_mappings,
            diagnostics: trace.diagnostics,
            token_usage: trace.token_usage,
        })
    }

    pub(super) fn run_tot(&self, summary: &FlowSummary) -> Result<GroupResult, PipelineError> {
        let mut trace = StageTrace::default();
        let base = self
            .templates
            .tot
            .render(&[("flow_summary", &summary.render_text())]);
        let mut paths: Vec<Vec<TTCandidate>> = Vec::with_capacity(TOT_PATHS);
        for path in 1..=TOT_PATHS {
            let prompt = format!("{base}\n\nReasoning path {path} of {TOT_PATHS}.");
            let raw = self.call_with_format_retry(
                "tot",
                &prompt,
                self.opts.tot_temperature,
                &mut trace,
                parse_candidates,
            )?;
            paths.push(syntax_screen(raw, &mut trace));
        }
        let winners = majority_vote(&paths);
        let ranked_mappings = ordinal_rank(&winners);
        Ok(GroupResult {
            flow_key: summary.key.clone(),
            labels: summary.labels.clone(),
            strategy: Strategy::Tot.as_str().to_string(),
            behavior: None,
            intent: None,
            candidates: winners,
            ranked_mappings,
            diagnostics: trace.diagnostics,
            token_usage: trace.token_usage,
        })
    }
}

/// Drops entries whose technique id does not even parse; keeps everything
/// else verbatim, capped at five.
fn syntax_screen(raw: Vec<RawCandidate>, trace: &mut StageTrace) -> Vec<TTCandidate> {
    let mut out = Vec::new();
    for candidate in raw {
        let Ok(technique) = TechniqueId::parse(&candidate.technique) else {
            trace.diagnostics.dropped_invalid += 1;
            continue;
        };
        if out.len() == 5 {
            break;
        }
        out.push(TTCandidate {
            technique,
            tactic: TacticId::new(&candidate.tactic),
            rationale: if candidate.rationale.is_empty() {
                "(no rationale given)".to_string()
            } else {
                candidate.rationale
            },
        });
    }
    out
}

fn ordinal_rank(candidates: &[TTCandidate]) -> Vec<RankedMapping> {
    candidates
        .iter()
        .take(5)
        .enumerate()
        .map(|(i, c)| RankedMapping {
            technique: c.technique.clone(),
            tactic: c.tactic.clone(),
            rationale: c.rationale.clone(),
            confidence: ORDINAL_CONFIDENCE[i],
        })
        .collect()
}

/// Majority vote over (technique, tactic) pairs across reasoning paths.
/// Ties break on total path rank (sum of positions where the pair appears),
/// then ascending technique id.
fn majority_vote(paths: &[Vec<TTCandidate>]) -> Vec<TTCandidate> {
    #[derive(Default)]
    struct Tally {
        votes: usize,
        rank_sum: usize,
        first: Option<TTCandidate>,
    }
    let mut tallies: BTreeMap<(TechniqueId, TacticId), Tally> = BTreeMap::new();
    for path in paths {
        let mut seen = std::collections::BTreeSet::new();
        for (position, candidate) in path.iter().enumerate() {
            let key = (candidate.technique.clone(), candidate.tactic.clone());
            if !seen.insert(key.clone()) {
                continue;
            }
            let tally = tallies.entry(key).or_default();
            tally.votes += 1;
            tally.rank_sum += position + 1;
            if tally.first.is_none() {
                tally.first = Some(candidate.clone());
            }
        }
    }
    let mut ordered: Vec<((TechniqueId, TacticId), Tally)> = tallies.into_iter().collect();
    ordered.sort_by(|a, b| {
        b.1.votes
            .cmp(&a.1.votes)
            .then(a.1.rank_sum.cmp(&b.1.rank_sum))
            .then_with(|| a.0.cmp(&b.0))
    });
    ordered
        .into_iter()
        .take(5)
        .filter_map(|(_, tally)| tally.first)
        .collect()
}
