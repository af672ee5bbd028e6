//! Prompt bundles for the long-form critic, the reranker and the abstractor.

use serde::{Deserialize, Serialize};

use super::truncate::{truncate_reviews, TokenCounter, WordCountEstimator};
use super::{GenerationConfig, LlmError};
use crate::corpus::Entity;
use crate::retrieval::ScoredSentence;

pub const RAG_SYSTEM_MESSAGE: &str =
    "You are an expert summarizer of user reviews for hotels and restaurants, specializing in travel!";

pub const CRITIC_SYSTEM_MESSAGE: &str = "You are an expert critical summarizer of user reviews for hotels and restaurants, specializing in travel. You provide in-depth evaluations divided into two explicit sections: 'pros' and 'cons', which are reliable summaries.";

const CRITIC_TASK: &str = "Read all of the user reviews below for a single hotel or restaurant and write a critical summary of it. \
The summary has two sections: 'pros', the strengths guests consistently report, and 'cons', the weaknesses guests consistently report.";

const CRITIC_CONSTRAINTS: &[&str] = &[
    "Base every statement only on what the reviews say.",
    "Each item is one short, self-contained sentence about a single aspect.",
    "Prefer aspects mentioned by many reviewers over one-off remarks.",
    "Do not repeat an aspect across items or across the two sections.",
    "Write in a neutral, factual register without addressing the reader.",
];

const STYLE_EXEMPLARS: &[&str] = &[
    "Rooftop pool with skyline views.",
    "Free Wi-Fi throughout the property.",
    "Short walk to the subway and several restaurants.",
    "Rooms are small and some furnishings look dated.",
    "Street-facing rooms can be noisy at night.",
];

const EXTRACTIVE_CONSTRAINTS: &[&str] = &[
    "Rerank the numbered sentences by how well they describe the query term.",
    "Choose exactly one sentence from the numbered list.",
    "Copy the chosen sentence verbatim; do not edit it.",
];

const ABSTRACTIVE_CONSTRAINTS: &[&str] = &[
    "Synthesize the opinions the sentences express about the query term into one sentence.",
    "Reflect the majority sentiment of the sentences; do not add facts they do not contain.",
    "Keep the sentence short, as in the examples.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RagMode {
    Extractive,
    Abstractive,
}

/// Required item counts for length-controlled critic summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthControl {
    pub pros: usize,
    pub cons: usize,
}

/// The parts of a prompt, rendered in a fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_message: String,
    pub task_description: String,
    pub constraints: Vec<String>,
    pub exemplars: Vec<String>,
    pub payload: String,
    pub format_instruction: String,
}

impl PromptBundle {
    /// User turn: task, constraints, exemplars, payload, output format.
    pub fn user_message(&self) -> String {
        let mut parts = vec![self.task_description.clone()];
        if !self.constraints.is_empty() {
            let list: Vec<String> = self.constraints.iter().map(|c| format!("- {c}")).collect();
            parts.push(format!("Constraints:\n{}", list.join("\n")));
        }
        if !self.exemplars.is_empty() {
            let list: Vec<String> = self.exemplars.iter().map(|e| format!("- {e}")).collect();
            parts.push(format!("Style examples:\n{}", list.join("\n")));
        }
        parts.push(self.payload.clone());
        parts.push(self.format_instruction.clone());
        parts.retain(|p| !p.is_empty());
        parts.join("\n\n")
    }

    /// System and user turns as one string; the cache key is derived from it.
    pub fn render(&self) -> String {
        format!("[system]\n{}\n\n[user]\n{}", self.system_message, self.user_message())
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn build_critic_prompt(
    entity: &Entity,
    length_control: Option<LengthControl>,
    config: &GenerationConfig,
) -> PromptBundle {
    build_critic_prompt_with(entity, length_control, config, &WordCountEstimator)
}

/// Critic prompt with the review payload cut to the context window.
///
/// The review budget is the context limit minus the tokens of everything
/// else in the prompt and minus the output allowance.
pub fn build_critic_prompt_with(
    entity: &Entity,
    length_control: Option<LengthControl>,
    config: &GenerationConfig,
    counter: &dyn TokenCounter,
) -> PromptBundle {
    let format_instruction = match length_control {
        Some(LengthControl { pros, cons }) => format!(
            "Write exactly {pros} pros and exactly {cons} cons. Return only a JSON object with exactly two keys, \
\"pros\" and \"cons\", each a list of strings: {{\"pros\": [\"...\"], \"cons\": [\"...\"]}}"
        ),
        None => "Decide how many pros and cons the reviews support. Return only a JSON object with exactly two keys, \
\"pros\" and \"cons\", each a list of strings: {\"pros\": [\"...\"], \"cons\": [\"...\"]}"
            .to_string(),
    };
    let mut bundle = PromptBundle {
        system_message: CRITIC_SYSTEM_MESSAGE.to_string(),
        task_description: format!("{CRITIC_TASK}\n\nEntity: {}", entity.name),
        constraints: strings(CRITIC_CONSTRAINTS),
        exemplars: strings(STYLE_EXEMPLARS),
        payload: String::new(),
        format_instruction,
    };
    let overhead = counter.count(&bundle.render()) + u64::from(config.max_tokens);
    let budget = config.context_limit_tokens.saturating_sub(overhead).max(1);
    let kept = truncate_reviews(&entity.reviews, budget, counter);
    let lines: Vec<String> = kept
        .reviews
        .iter()
        .enumerate()
        .map(|(i, r)| format!("Review {} ({}): {}", i + 1, r.date, r.text.trim()))
        .collect();
    bundle.payload = format!("User reviews:\n{}", lines.join("\n"));
    bundle
}

/// Reranker (extractive) or abstractor prompt for one query term.
pub fn build_rag_prompt(
    term: &str,
    evidence: &[ScoredSentence],
    mode: RagMode,
) -> Result<PromptBundle, LlmError> {
    let term = term.trim();
    if term.is_empty() {
        return Err(LlmError::Precondition("query term is empty".into()));
    }
    if evidence.is_empty() {
        return Err(LlmError::Precondition(format!("no evidence for term {term:?}")));
    }
    let numbered: Vec<String> = evidence
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.sentence.text.trim()))
        .collect();
    let payload = format!("Query term: {term}\n\nRetrieved sentences:\n{}", numbered.join("\n"));
    let bundle = match mode {
        RagMode::Extractive => PromptBundle {
            system_message: RAG_SYSTEM_MESSAGE.to_string(),
            task_description: format!(
                "The sentences below were retrieved from user reviews for the query term \"{term}\". \
Act as a reranker and select the single sentence that best summarizes what reviewers say about it."
            ),
            constraints: strings(EXTRACTIVE_CONSTRAINTS),
            exemplars: Vec::new(),
            payload,
            format_instruction: "Return only a JSON object: {\"index\": <number of the chosen sentence>, \"sentence\": \"<the chosen sentence>\"}".into(),
        },
        RagMode::Abstractive => PromptBundle {
            system_message: RAG_SYSTEM_MESSAGE.to_string(),
            task_description: format!(
                "The sentences below were retrieved from user reviews for the query term \"{term}\". \
Write one summary sentence about this aspect based on them."
            ),
            constraints: strings(ABSTRACTIVE_CONSTRAINTS),
            exemplars: strings(STYLE_EXEMPLARS),
            payload,
            format_instruction: "Return only a JSON object: {\"sentence\": \"<your summary sentence>\"}".into(),
        },
    };
    Ok(bundle)
}
