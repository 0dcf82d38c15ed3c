use std::fmt;
use std::str::FromStr;

use ahakit_core::Role;
use serde::{Deserialize, Serialize};

use crate::CollectError;

pub const QUERY_PLACEHOLDER: &str = "{QUERY}";

const DEEPSEEK_TEMPLATE: &str = "<|begin_of_sentence|><|User|>{QUERY}<|Assistant|><think>\n";

const QWEN_TEMPLATE: &str = "<|im_start|>user\n{QUERY}<|im_end|>\n<|im_start|>assistant\n";

// Hugging Face default rendering without tools or a user system prompt.
const LLAMA_TEMPLATE: &str = "<|begin_of_text|><|start_header_id|>system<|end_header_id|>\n\n\
Cutting Knowledge Date: December 2023\nToday Date: 26 Jul 2024\n\n<|eot_id|>\
<|start_header_id|>user<|end_header_id|>\n\n{QUERY}<|eot_id|>\
<|start_header_id|>assistant<|end_header_id|>\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "deepseek-r1-distill")]
    DeepseekR1Distill,
    #[serde(rename = "qwen2.5-math-instruct")]
    Qwen25MathInstruct,
    #[serde(rename = "llama-3.1-instruct")]
    Llama31Instruct,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::DeepseekR1Distill, Family::Qwen25MathInstruct, Family::Llama31Instruct];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::DeepseekR1Distill => "deepseek-r1-distill",
            Family::Qwen25MathInstruct => "qwen2.5-math-instruct",
            Family::Llama31Instruct => "llama-3.1-instruct",
        }
    }

    pub fn template(self) -> &'static str {
        match self {
            Family::DeepseekR1Distill => DEEPSEEK_TEMPLATE,
            Family::Qwen25MathInstruct => QWEN_TEMPLATE,
            Family::Llama31Instruct => LLAMA_TEMPLATE,
        }
    }

    /// Only the R1 distills are reasoning ("aha") models.
    pub fn role(self) -> Role {
        match self {
            Family::DeepseekR1Distill => Role::Aha,
            Family::Qwen25MathInstruct | Family::Llama31Instruct => Role::NoAha,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = CollectError;

    /// Accepts the full family name or its first dash-separated word.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == lower || f.as_str().split(['-', '2', '.']).next() == Some(lower.as_str()))
            .ok_or_else(|| CollectError::UnknownFamily(s.to_string()))
    }
}

/// A chat template with exactly one `{QUERY}` slot and the role of the
/// models that use it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelProfile {
    pub family: Option<Family>,
    pub template: String,
    pub role: Role,
}

impl ModelProfile {
    pub fn for_family(family: Family) -> Self {
        Self { family: Some(family), template: family.template().to_string(), role: family.role() }
    }

    pub fn custom(template: impl Into<String>, role: Role) -> Result<Self, CollectError> {
        let template = template.into();
        let count = template.matches(QUERY_PLACEHOLDER).count();
        if count != 1 {
            return Err(CollectError::Template(format!(
                "template must contain exactly one {QUERY_PLACEHOLDER}, found {count}"
            )));
        }
        Ok(Self { family: None, template, role })
    }
}

impl FromStr for ModelProfile {
    type Err = CollectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Self::for_family(s.parse()?))
    }
}

/// Substitutes `query` into the profile's template verbatim.
pub fn render_prompt(profile: &ModelProfile, query: &str) -> Result<String, CollectError> {
    if query.is_empty() {
        return Err(CollectError::EmptyQuery);
    }
    let (head, tail) = profile
        .template
        .split_once(QUERY_PLACEHOLDER)
        .ok_or_else(|| CollectError::Template(format!("template lacks {QUERY_PLACEHOLDER}")))?;
    let mut out = String::with_capacity(head.len() + query.len() + tail.len());
    out.push_str(head);
    out.push_str(query);
    out.push_str(tail);
    Ok(out)
}
