//! Reference-free checks of RAG output against its evidence, built on
//! aspect-opinion-sentiment triplets.

mod metrics;
mod triplet;

pub use metrics::{
    aspect_relevance, aspects_match, opinion_faithfulness, sentiment_factuality, target_aspect,
    verify_rag, verify_units, AosError, VerificationReport, VerificationRow, VerificationUnit,
};
pub use triplet::{
    AosRequest, AosResponse, AosTriplet, ExtractError, HttpExtractor, LexiconExtractor, Sentiment,
    TripletExtractor,
};
