//! Core pipeline for computational news discovery over preprint archives.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`corpus`]: feed parsing, outlet text cleaning, the NDJSON corpus store.
//! - [`textfeat`]: tokenization, jargon profiles and model feature vectors.
//! - [`newsworthiness`]: news-value aggregation and the regression forest.
//! - [`relevance`]: embeddings, cosine similarity and outlet relevance.
//! - [`angles`]: prompt construction, completion parsing and redundancy flags.
//! - [`evalmetrics`]: precision@K, Spearman, Likert aggregation, ICC(3,1).
//! - [`query`]: filtering, ranking and pagination of scored articles.
//!
//! Batch entry points run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise. Results do not
//! depend on which path runs.

pub mod angles;
pub mod corpus;
pub mod evalmetrics;
pub mod newsworthiness;
pub mod par;
pub mod query;
pub mod relevance;
pub mod synth;
pub mod textfeat;

pub use angles::{AngleProvider, AngleSet, GenerationParams};
pub use corpus::{ArticleRecord, CorpusStore, OutletNewsItem, OutletProfile, OutletType};
pub use newsworthiness::{ForestModel, NewsValueRatings, TreeNode};
pub use query::{Page, QuerySpec, RankBy};
pub use relevance::{EmbeddingProvider, EmbeddingVector, RelevanceResult};
pub use textfeat::{FeatureSchema, FeatureVector, JargonTaxonomy};
