use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bumped whenever the wording of a bundled template changes.
pub const TEMPLATE_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    SingleAction,
    ChunkEvaluation,
    ActionSynthesis,
    FinalSynthesis,
    ZeroShot,
    FewShot,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::SingleAction,
        TemplateId::ChunkEvaluation,
        TemplateId::ActionSynthesis,
        TemplateId::FinalSynthesis,
        TemplateId::ZeroShot,
        TemplateId::FewShot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::SingleAction => "single_action",
            TemplateId::ChunkEvaluation => "chunk_evaluation",
            TemplateId::ActionSynthesis => "action_synthesis",
            TemplateId::FinalSynthesis => "final_synthesis",
            TemplateId::ZeroShot => "zero_shot",
            TemplateId::FewShot => "few_shot",
        }
    }

    /// Placeholders a body for this template must use, no more and no fewer.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateId::SingleAction => &["action_desc", "action_id", "knowledge"],
            TemplateId::ChunkEvaluation => &["action_desc", "action_id"],
            TemplateId::ActionSynthesis => &["action_desc", "action_id", "chunk_evaluations", "knowledge"],
            TemplateId::FinalSynthesis => &["all_evaluations"],
            TemplateId::ZeroShot => &["class_list_str"],
            TemplateId::FewShot => &["class_list_str", "few_shot_examples"],
        }
    }

    fn builtin_body(self) -> &'static str {
        match self {
            TemplateId::SingleAction => include_str!("../../assets/prompts/single_action.txt"),
            TemplateId::ChunkEvaluation => include_str!("../../assets/prompts/chunk_evaluation.txt"),
            TemplateId::ActionSynthesis => include_str!("../../assets/prompts/action_synthesis.txt"),
            TemplateId::FinalSynthesis => include_str!("../../assets/prompts/final_synthesis.txt"),
            TemplateId::ZeroShot => include_str!("../../assets/prompts/zero_shot.txt"),
            TemplateId::FewShot => include_str!("../../assets/prompts/few_shot.txt"),
        }
    }
}

impl std::fmt::Display for TemplateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Segments of a template body: literal text and `{name}` placeholders.
#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Slot(String),
}

fn parse(body: &str) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut rest = body;
    let mut text = String::new();
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let name_len = after.find(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')).unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') && !after.starts_with(|c: char| c.is_ascii_digit()) {
            text.push_str(&rest[..open]);
            pieces.push(Piece::Text(std::mem::take(&mut text)));
            pieces.push(Piece::Slot(after[..name_len].to_string()));
            rest = &after[name_len + 1..];
        } else {
            text.push_str(&rest[..=open]);
            rest = after;
        }
    }
    text.push_str(rest);
    pieces.push(Piece::Text(text));
    pieces
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn new(id: TemplateId, body: &str) -> Result<Self> {
        let pieces = parse(body);
        let found: BTreeSet<&str> = pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.as_str()),
                Piece::Text(_) => None,
            })
            .collect();
        let expected: BTreeSet<&str> = id.placeholders().iter().copied().collect();
        if found != expected {
            return Err(Error::config(format!("template {id} uses placeholders {found:?}, expected {expected:?}")));
        }
        Ok(PromptTemplate { id, pieces })
    }

    /// Substitutes every placeholder in one pass; values are inserted verbatim and
    /// never re-scanned. A placeholder without a binding is an error.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String> {
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = bindings
                        .iter()
                        .find(|(k, _)| k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| Error::validation(format!("template {} rendered without `{{{name}}}`", self.id)))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    pub version: String,
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = TemplateId::ALL
            .into_iter()
            .map(|id| (id, PromptTemplate::new(id, id.builtin_body()).expect("bundled templates are valid")))
            .collect();
        TemplateSet { version: TEMPLATE_VERSION.to_string(), templates }
    }

    /// Bundled templates, overridden by any `<template_id>.txt` found in `dir`.
    pub fn with_overrides(dir: impl AsRef<Path>, version: &str) -> Result<Self> {
        let mut set = Self::builtin();
        set.version = version.to_string();
        for id in TemplateId::ALL {
            let path = dir.as_ref().join(format!("{id}.txt"));
            if path.exists() {
                let body = std::fs::read_to_string(&path).map_err(Error::at(&path))?;
                set.templates.insert(id, PromptTemplate::new(id, &body)?);
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render(&self, id: TemplateId, bindings: &[(&str, &str)]) -> Result<String> {
        self.get(id).render(bindings)
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

/// True when `text` still contains a `{placeholder}` of any bundled template.
pub fn has_unresolved_placeholder(text: &str) -> bool {
    TemplateId::ALL
        .iter()
        .flat_map(|id| id.placeholders())
        .any(|p| text.contains(&format!("{{{p}}}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_templates_load() {
        let set = TemplateSet::builtin();
        let s = set
            .render(TemplateId::SingleAction, &[("action_id", "4"), ("action_desc", "Touch the shoulder."), ("knowledge", "K")])
            .unwrap();
        assert!(s.contains("* Action Name: Action 4\n"));
        assert!(s.ends_with("# Reference knowledge\nK\n"));
        assert!(!has_unresolved_placeholder(&s));
    }

    #[test]
    fn single_pass_does_not_expand_values() {
        let t = PromptTemplate::new(TemplateId::FinalSynthesis, "A {all_evaluations} B").unwrap();
        assert_eq!(t.render(&[("all_evaluations", "{all_evaluations}")]).unwrap(), "A {all_evaluations} B");
    }

    #[test]
    fn missing_binding_and_undeclared_placeholder() {
        let t = PromptTemplate::new(TemplateId::ZeroShot, "{class_list_str}").unwrap();
        assert!(t.render(&[]).is_err());
        assert!(PromptTemplate::new(TemplateId::ZeroShot, "{class_list_str} {extra}").is_err());
        assert!(PromptTemplate::new(TemplateId::ZeroShot, "no slots").is_err());
        // Braces that are not identifiers are literal text.
        let t = PromptTemplate::new(TemplateId::ZeroShot, "{ json } {1} {class_list_str}").unwrap();
        assert_eq!(t.render(&[("class_list_str", "x")]).unwrap(), "{ json } {1} x");
    }
}
