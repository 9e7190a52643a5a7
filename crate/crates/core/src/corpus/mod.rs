//! Preprint and outlet corpora.
//!
//! Articles come in through [`parse_preprint_feed`], outlet news items
//! through [`clean_news_text`] plus frequency-based boilerplate detection,
//! and both persist in a [`CorpusStore`] as newline-delimited JSON.

mod clean;
mod feed;
mod store;

pub use clean::{clean_news_text, detect_boilerplate, BoilerplateConfig};
pub use feed::{parse_preprint_feed, FeedError, FeedParse};
pub use store::{
    partition_by_date, read_ndjson, write_atomic, write_ndjson, CorpusError, CorpusStore, IngestReport, OutletItemRow,
    StoreLock, ANGLES_FILE, ARTICLES_FILE, FEATURES_FILE, OUTLETS_DIR, ROSTER_FILE, VECTORS_DIR,
};

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::angles::AngleSet;
use crate::relevance::EmbeddingVector;
use crate::textfeat::FeatureVector;

/// One preprint with its metadata and everything computed for it.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticleRecord {
    pub id: String,
    pub title: String,
    pub abstract_text: String,
    pub url: String,
    pub primary_category: String,
    pub categories: Vec<String>,
    pub published_date: NaiveDate,
    pub full_text: Option<String>,
    pub features: Option<FeatureVector>,
    pub newsworthiness: Option<f64>,
    pub angle_cache: Option<AngleSet>,
}

impl ArticleRecord {
    /// Checks the record invariants, returning every violation found.
    pub fn validate(&self) -> Result<(), InvalidRecord> {
        let mut problems = Vec::new();
        if self.id.trim().is_empty() {
            problems.push("id is empty".to_string());
        }
        if self.title.trim().is_empty() {
            problems.push("title is empty".to_string());
        }
        if self.abstract_text.trim().is_empty() {
            problems.push("abstract is empty".to_string());
        }
        if !is_absolute_url(&self.url) {
            problems.push(format!("url {:?} is not absolute", self.url));
        }
        if !self.categories.iter().any(|c| c == &self.primary_category) {
            problems.push(format!(
                "primary_category {:?} is not among categories",
                self.primary_category
            ));
        }
        if let Some(score) = self.newsworthiness {
            if !(0.0..=100.0).contains(&score) {
                problems.push(format!("newsworthiness {score} outside [0, 100]"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(InvalidRecord(problems))
        }
    }
}

/// Invariant violations found on a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidRecord(pub Vec<String>);

impl fmt::Display for InvalidRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("; "))
    }
}

impl std::error::Error for InvalidRecord {}

fn is_absolute_url(url: &str) -> bool {
    match url.split_once("://") {
        Some((scheme, rest)) => {
            !scheme.is_empty()
                && scheme
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
                && rest.split('/').next().is_some_and(|host| !host.is_empty())
                && !url.chars().any(char::is_whitespace)
        }
        None => false,
    }
}

/// A historical news item from one outlet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutletNewsItem {
    pub outlet_id: String,
    pub item_id: String,
    pub title: String,
    pub body: String,
    pub published_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutletType {
    GeneralNews,
    ScienceTechNews,
    TechNews,
}

impl OutletType {
    pub fn as_str(self) -> &'static str {
        match self {
            OutletType::GeneralNews => "general_news",
            OutletType::ScienceTechNews => "science_tech_news",
            OutletType::TechNews => "tech_news",
        }
    }
}

/// Roster entry for an outlet, as stored in `outlets.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutletInfo {
    pub outlet_id: String,
    pub name: String,
    pub url: String,
    pub outlet_type: OutletType,
}

/// An outlet together with the embeddings of its news items.
#[derive(Debug, Clone, PartialEq)]
pub struct OutletProfile {
    pub outlet_id: String,
    pub name: String,
    pub url: String,
    pub outlet_type: OutletType,
    pub item_vectors: Vec<EmbeddingVector>,
}

impl OutletProfile {
    pub fn new(info: OutletInfo, item_vectors: Vec<EmbeddingVector>) -> Result<Self, InvalidRecord> {
        if let Some(first) = item_vectors.first() {
            let dim = first.dim();
            if let Some(bad) = item_vectors.iter().position(|v| v.dim() != dim) {
                return Err(InvalidRecord(vec![format!(
                    "outlet {}: item vector {bad} has dim {} but expected {dim}",
                    info.outlet_id,
                    item_vectors[bad].dim()
                )]));
            }
        }
        Ok(OutletProfile {
            outlet_id: info.outlet_id,
            name: info.name,
            url: info.url,
            outlet_type: info.outlet_type,
            item_vectors,
        })
    }

    pub fn info(&self) -> OutletInfo {
        OutletInfo {
            outlet_id: self.outlet_id.clone(),
            name: self.name.clone(),
            url: self.url.clone(),
            outlet_type: self.outlet_type,
        }
    }
}

/// The outlet roster used for relevance scoring, in listing order.
pub fn default_outlet_roster() -> Vec<OutletInfo> {
    use OutletType::*;
    [
        ("arstechnica", "ArsTechnica", "https://arstechnica.com/", ScienceTechNews),
        ("futurism", "Futurism", "https://futurism.com/", ScienceTechNews),
        ("newscientist", "NewScientist", "https://www.newscientist.com/", ScienceTechNews),
        ("nytimes", "The New York Times", "https://www.nytimes.com/", GeneralNews),
        ("popsci", "Popular Science", "https://www.popsci.com/", ScienceTechNews),
        ("popularmechanics", "Popular Mechanics", "https://www.popularmechanics.com/", ScienceTechNews),
        ("qz", "Quartz", "https://qz.com/", GeneralNews),
        ("salon", "Salon", "https://www.salon.com/", GeneralNews),
        ("scienmag", "ScienMag", "https://scienmag.com/", ScienceTechNews),
        ("scientificamerican", "Scientific American", "https://www.scientificamerican.com/", ScienceTechNews),
        ("statnews", "Stat", "https://www.statnews.com/", ScienceTechNews),
        ("techcrunch", "TechCrunch", "https://techcrunch.com/", TechNews),
        ("technologyreview", "MIT Technology Review", "https://www.technologyreview.com/", ScienceTechNews),
        ("theconversation", "The Conversation", "https://theconversation.com/us", GeneralNews),
        ("venturebeat", "VentureBeat", "https://venturebeat.com/", TechNews),
        ("vice", "VICE", "https://www.vice.com/en", GeneralNews),
        ("vox", "Vox", "https://www.vox.com/", GeneralNews),
        ("washingtonpost", "The Washington Post", "https://www.washingtonpost.com/", GeneralNews),
        ("wired", "WIRED", "https://www.wired.com/", ScienceTechNews),
        ("theverge", "The Verge", "https://www.theverge.com/", ScienceTechNews),
    ]
    .into_iter()
    .map(|(id, name, url, outlet_type)| OutletInfo {
        outlet_id: id.to_string(),
        name: name.to_string(),
        url: url.to_string(),
        outlet_type,
    })
    .collect()
}

/// Collapses every whitespace run to a single space and trims the ends.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
