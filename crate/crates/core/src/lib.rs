//! Long-form opinion summarization: query-term extraction, exclusive
//! sentence retrieval, LLM prompting with structured-output recovery, and
//! reference-based and aspect-opinion-sentiment evaluation.

pub mod aoseval;
pub mod config;
pub mod corpus;
pub mod llm;
pub mod pipeline;
pub mod queryterms;
pub mod refeval;
pub mod retrieval;
pub mod sff;
pub mod text;
