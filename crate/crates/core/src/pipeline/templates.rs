//! Prompt templates with `{{placeholder}}` substitution. Defaults are
//! embedded; a template directory can override any of them by file name.

use std::collections::BTreeSet;
use std::path::Path;

use super::PipelineError;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: String) -> Self {
        Self { text }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn placeholders(&self) -> BTreeSet<String> {
        let mut found = BTreeSet::new();
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            match after.find("}}") {
                Some(end) => {
                    found.insert(after[..end].trim().to_string());
                    rest = &after[end + 2..];
                }
                None => break,
            }
        }
        found
    }

    pub fn render(&self, bindings: &[(&str, &str)]) -> String {
        let mut out = self.text.clone();
        for (name, value) in bindings {
            out = out.replace(&format!("{{{{{name}}}}}"), value);
        }
        out
    }
}

/// The eight stage templates: five reasoning stages plus three baseline
/// prompting strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplateSet {
    pub abstraction: PromptTemplate,
    pub intent: PromptTemplate,
    pub tt: PromptTemplate,
    pub fusion: PromptTemplate,
    pub refine: PromptTemplate,
    pub vanilla: PromptTemplate,
    pub cot: PromptTemplate,
    pub tot: PromptTemplate,
}

/// (template name, allowed placeholders) per stage.
const STAGE_BINDINGS: [(&str, &[&str]); 8] = [
    ("abstract", &["flow_summary"]),
    ("intent", &["behavior"]),
    ("tt_group", &["behavior", "intent", "tactic_group"]),
    ("fusion", &["behavior", "intent", "partials"]),
    ("refine", &["behavior", "candidates", "definitions"]),
    ("vanilla", &["flow_summary"]),
    ("cot", &["flow_summary"]),
    ("tot", &["flow_summary"]),
];

impl Default for PromptTemplateSet {
    fn default() -> Self {
        Self {
            abstraction: PromptTemplate::new(include_str!("../../templates/abstract.txt").into()),
            intent: PromptTemplate::new(include_str!("../../templates/intent.txt").into()),
            tt: PromptTemplate::new(include_str!("../../templates/tt_group.txt").into()),
            fusion: PromptTemplate::new(include_str!("../../templates/fusion.txt").into()),
            refine: PromptTemplate::new(include_str!("../../templates/refine.txt").into()),
            vanilla: PromptTemplate::new(include_str!("../../templates/vanilla.txt").into()),
            cot: PromptTemplate::new(include_str!("../../templates/cot.txt").into()),
            tot: PromptTemplate::new(include_str!("../../templates/tot.txt").into()),
        }
    }
}

impl PromptTemplateSet {
    /// Loads overrides from `<dir>/<stage>.txt`; stages without a file keep
    /// the embedded default. The result is validated.
    pub fn load_dir(dir: &Path) -> Result<Self, PipelineError> {
        let mut set = Self::default();
        for (name, _) in STAGE_BINDINGS {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| PipelineError::Template(format!("{}: {e}", path.display())))?;
                *set.slot_mut(name) = PromptTemplate::new(text);
            }
        }
        set.validate()?;
        Ok(set)
    }

    fn slot_mut(&mut self, name: &str) -> &mut PromptTemplate {
        match name {
            "abstract" => &mut self.abstraction,
            "intent" => &mut self.intent,
            "tt_group" => &mut self.tt,
            "fusion" => &mut self.fusion,
            "refine" => &mut self.refine,
            "vanilla" => &mut self.vanilla,
            "cot" => &mut self.cot,
            "tot" => &mut self.tot,
            _ => unreachable!("unknown template slot {name}"),
        }
    }

    fn slot(&self, name: &str) -> &PromptTemplate {
        match name {
            "abstract" => &self.abstraction,
            "intent" => &self.intent,
            "tt_group" => &self.tt,
            "fusion" => &self.fusion,
            "refine" => &self.refine,
            "vanilla" => &self.vanilla,
            "cot" => &self.cot,
            "tot" => &self.tot,
            _ => unreachable!("unknown template slot {name}"),
        }
    }

    /// Every template may only use the placeholders its stage binds.
    pub fn validate(&self) -> Result<(), PipelineError> {
        for (name, allowed) in STAGE_BINDINGS {
            let placeholders = self.slot(name).placeholders();
            for p in &placeholders {
                if !allowed.contains(&p.as_str()) {
                    return Err(PipelineError::Template(format!(
                        "template {name:?} uses placeholder {{{{{p}}}}} outside its bindings {allowed:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PromptTemplateSet::default().validate().unwrap();
    }

    #[test]
    fn render_replaces_placeholders() {
        let t = PromptTemplate::new("a {{x}} b {{y}} c {{x}}".into());
        assert_eq!(
            t.placeholders(),
            ["x".to_string(), "y".to_string()].into_iter().collect()
        );
        assert_eq!(t.render(&[("x", "1"), ("y", "2")]), "a 1 b 2 c 1");
    }

    #[test]
    fn foreign_placeholder_rejected() {
        let set = PromptTemplateSet {
            intent: PromptTemplate::new("{{tactic_group}}".into()),
            ..PromptTemplateSet::default()
        };
        assert!(matches!(set.validate(), Err(PipelineError::Template(_))));
    }

    #[test]
    fn dir_overrides_one_stage() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("intent.txt"), "custom {{behavior}}").unwrap();
        let set = PromptTemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.intent.text(), "custom {{behavior}}");
        assert_eq!(set.vanilla, PromptTemplateSet::default().vanilla);
    }
}
