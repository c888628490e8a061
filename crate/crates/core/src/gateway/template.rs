//! Prompt templates with named placeholders.
//!
//! Recognised placeholders are `{referring}`, `{caption}` and
//! `{category_list}`. Each template kind requires a fixed placeholder set,
//! and every required placeholder must appear exactly once. Templates are
//! checked when the set is built so a broken template fails at startup.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// Scene caption request (captioner).
    Caption,
    /// Phrase grounding over a caption (grounder).
    Ground,
    /// Referring-expression generation for one region (captioner with prompt).
    Describe,
    /// Referring segmentation (referrer).
    Refer,
    /// Validity check plus category assignment (classifier).
    Classify,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 5] = [
        TemplateKind::Caption,
        TemplateKind::Ground,
        TemplateKind::Describe,
        TemplateKind::Refer,
        TemplateKind::Classify,
    ];

    pub fn required(self) -> &'static [&'static str] {
        match self {
            TemplateKind::Caption => &[],
            TemplateKind::Ground => &["caption"],
            TemplateKind::Describe => &["referring", "caption"],
            TemplateKind::Refer => &["referring"],
            TemplateKind::Classify => &["referring", "category_list"],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {kind:?}: placeholder {{{name}}} appears {count} times, expected exactly once")]
    PlaceholderCount {
        kind: TemplateKind,
        name: String,
        count: usize,
    },
    #[error("template {kind:?}: placeholder {{{name}}} is not allowed here")]
    UnexpectedPlaceholder { kind: TemplateKind, name: String },
    #[error("template {kind:?}: unterminated placeholder")]
    Unterminated { kind: TemplateKind },
    #[error("template {0:?} missing")]
    Missing(TemplateKind),
    #[error("cannot read template file {path}: {detail}")]
    Load { path: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub kind: TemplateKind,
    pub text: String,
}

fn placeholders(kind: TemplateKind, text: &str) -> Result<Vec<&str>, TemplateError> {
    let mut found = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        let end = after.find('}').ok_or(TemplateError::Unterminated { kind })?;
        found.push(&after[..end]);
        rest = &after[end + 1..];
    }
    Ok(found)
}

impl PromptTemplate {
    pub fn new(kind: TemplateKind, text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        let names = placeholders(kind, &text)?;
        for name in &names {
            if !kind.required().contains(name) {
                return Err(TemplateError::UnexpectedPlaceholder {
                    kind,
                    name: name.to_string(),
                });
            }
        }
        for &name in kind.required() {
            let count = names.iter().filter(|&&n| n == name).count();
            if count != 1 {
                return Err(TemplateError::PlaceholderCount {
                    kind,
                    name: name.to_string(),
                    count,
                });
            }
        }
        Ok(Self { kind, text })
    }

    /// Substitute placeholders; values are inserted verbatim.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let after = &rest[start + 1..];
            let end = after.find('}').expect("validated on construction");
            let name = &after[..end];
            let value = vars
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .unwrap_or_default();
            out.push_str(value);
            rest = &after[end + 1..];
        }
        out.push_str(rest);
        out
    }
}

/// A complete, versioned set of templates, one per kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub version: String,
    templates: BTreeMap<TemplateKind, PromptTemplate>,
}

#[derive(Deserialize)]
struct TemplateFile {
    version: String,
    #[serde(flatten)]
    templates: BTreeMap<TemplateKind, String>,
}

impl TemplateSet {
    pub fn new(version: impl Into<String>, texts: BTreeMap<TemplateKind, String>) -> Result<Self, TemplateError> {
        let mut templates = BTreeMap::new();
        for kind in TemplateKind::ALL {
            let text = texts.get(&kind).ok_or(TemplateError::Missing(kind))?;
            templates.insert(kind, PromptTemplate::new(kind, text.clone())?);
        }
        Ok(Self {
            version: version.into(),
            templates,
        })
    }

    /// Load from a TOML file with a `version` key and one string per kind.
    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let load_err = |detail: String| TemplateError::Load {
            path: path.display().to_string(),
            detail,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let file: TemplateFile = toml::from_str(&raw).map_err(|e| load_err(e.to_string()))?;
        Self::new(file.version, file.templates)
    }

    pub fn get(&self, kind: TemplateKind) -> &PromptTemplate {
        &self.templates[&kind]
    }

    pub fn render(&self, kind: TemplateKind, vars: &[(&str, &str)]) -> String {
        self.get(kind).render(vars)
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        let texts = BTreeMap::from([
            (
                TemplateKind::Caption,
                "Describe this image in detail. Name every distinct object, \
                 region, and background area you can see."
                    .to_string(),
            ),
            (
                TemplateKind::Ground,
                "Locate each object phrase of this caption in the image: {caption}".to_string(),
            ),
            (
                TemplateKind::Describe,
                "Image caption: {caption}\n\
                 Write a single referring expression for the region labelled \"{referring}\" \
                 inside the given box. It must single out that region and no other: say \
                 where it sits relative to nearby things, what sets it apart from similar \
                 objects, and what surrounds it. Reply with the expression only."
                    .to_string(),
            ),
            (TemplateKind::Refer, "{referring}".to_string()),
            (
                TemplateKind::Classify,
                "Referring expression: \"{referring}\"\n\
                 Step 1: decide whether the expression correctly describes the highlighted mask.\n\
                 Step 2: classify the expression into one of: {category_list}.\n\
                 Answer with referring_correct (true or false) and category (one name)."
                    .to_string(),
            ),
        ]);
        Self::new("v1", texts).expect("built-in templates are valid")
    }
}
