//! Filtering, ranking and pagination of scored articles.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ArticleRecord;

pub const MAX_PAGE_SIZE: usize = 200;
pub const DEFAULT_PAGE_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankBy {
    #[default]
    Newsworthiness,
    OutletRelevance,
}

impl RankBy {
    pub fn as_str(self) -> &'static str {
        match self {
            RankBy::Newsworthiness => "newsworthiness",
            RankBy::OutletRelevance => "outlet_relevance",
        }
    }
}

impl FromStr for RankBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "newsworthiness" => Ok(RankBy::Newsworthiness),
            "outlet_relevance" => Ok(RankBy::OutletRelevance),
            other => Err(format!("unknown rank_by {other:?}; expected newsworthiness or outlet_relevance")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("invalid query: {}", join(.0))]
    Invalid(Vec<FieldError>),
    #[error("missing outlet relevance for articles: {}", .0.join(", "))]
    MissingRelevance(Vec<String>),
}

fn join(errors: &[FieldError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A journalist's request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub date_from: Option<NaiveDate>,
    pub date_to: Option<NaiveDate>,
    pub min_newsworthiness: Option<f64>,
    pub max_newsworthiness: Option<f64>,
    pub rank_by: RankBy,
    pub outlet_ids: Vec<String>,
    pub page: usize,
    pub page_size: usize,
}

impl Default for QuerySpec {
    fn default() -> Self {
        QuerySpec {
            date_from: None,
            date_to: None,
            min_newsworthiness: None,
            max_newsworthiness: None,
            rank_by: RankBy::Newsworthiness,
            outlet_ids: Vec::new(),
            page: 1,
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

impl QuerySpec {
    /// Collects every violated constraint.
    pub fn validate(&self) -> Result<(), QueryError> {
        let mut errors = Vec::new();
        if let (Some(from), Some(to)) = (self.date_from, self.date_to) {
            if from > to {
                errors.push(FieldError::new("date_from", format!("{from} is after date_to {to}")));
            }
        }
        for (field, v) in [
            ("min_newsworthiness", self.min_newsworthiness),
            ("max_newsworthiness", self.max_newsworthiness),
        ] {
            if let Some(v) = v {
                if !(0.0..=100.0).contains(&v) {
                    errors.push(FieldError::new(field, format!("{v} outside [0, 100]")));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (self.min_newsworthiness, self.max_newsworthiness) {
            if lo > hi {
                errors.push(FieldError::new(
                    "min_newsworthiness",
                    format!("{lo} exceeds max_newsworthiness {hi}"),
                ));
            }
        }
        match self.rank_by {
            RankBy::OutletRelevance if self.outlet_ids.is_empty() => errors.push(FieldError::new(
                "outlet_ids",
                "at least one outlet is required when ranking by outlet_relevance",
            )),
            RankBy::Newsworthiness if !self.outlet_ids.is_empty() => errors.push(FieldError::new(
                "outlet_ids",
                "outlets may only be given when ranking by outlet_relevance",
            )),
            _ => {}
        }
        if self.outlet_ids.iter().any(|o| o.trim().is_empty()) {
            errors.push(FieldError::new("outlet_ids", "empty outlet id"));
        }
        if self.page < 1 {
            errors.push(FieldError::new("page", "must be >= 1"));
        }
        if !(1..=MAX_PAGE_SIZE).contains(&self.page_size) {
            errors.push(FieldError::new(
                "page_size",
                format!("{} outside [1, {MAX_PAGE_SIZE}]", self.page_size),
            ));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(QueryError::Invalid(errors))
        }
    }

    /// Whether a scored article satisfies every present predicate.
    pub fn matches(&self, article: &ArticleRecord) -> bool {
        let Some(score) = article.newsworthiness else {
            return false;
        };
        self.date_from.is_none_or(|d| article.published_date >= d)
            && self.date_to.is_none_or(|d| article.published_date <= d)
            && self.min_newsworthiness.is_none_or(|m| score >= m)
            && self.max_newsworthiness.is_none_or(|m| score <= m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered<'a> {
    pub articles: Vec<&'a ArticleRecord>,
    /// Articles left out because they have no newsworthiness score.
    pub skipped_unscored: usize,
}

/// Articles satisfying the query, in input order. Unscored articles are
/// excluded and counted.
pub fn filter_articles<'a>(
    articles: impl IntoIterator<Item = &'a ArticleRecord>,
    spec: &QuerySpec,
) -> Result<Filtered<'a>, QueryError> {
    spec.validate()?;
    let mut skipped_unscored = 0;
    let mut kept = Vec::new();
    for a in articles {
        if a.newsworthiness.is_none() {
            skipped_unscored += 1;
        } else if spec.matches(a) {
            kept.push(a);
        }
    }
    Ok(Filtered {
        articles: kept,
        skipped_unscored,
    })
}

/// An article paired with the score it is ranked and displayed by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked<'a> {
    pub article: &'a ArticleRecord,
    pub score: f64,
}

/// Score descending, then published date descending, then id ascending.
/// Zero and negative zero tie.
pub fn ranking_order(a: &Ranked<'_>, b: &Ranked<'_>) -> Ordering {
    let key = |x: f64| if x == 0.0 { 0.0 } else { x };
    key(b.score)
        .total_cmp(&key(a.score))
        .then_with(|| b.article.published_date.cmp(&a.article.published_date))
        .then_with(|| a.article.id.cmp(&b.article.id))
}

/// Orders articles by the score chosen in `spec.rank_by`. `relevance`
/// maps article id to its multi-outlet relevance for `spec.outlet_ids` and
/// is only consulted when ranking by relevance.
pub fn rank_articles<'a>(
    articles: &[&'a ArticleRecord],
    spec: &QuerySpec,
    relevance: &HashMap<String, f64>,
) -> Result<Vec<Ranked<'a>>, QueryError> {
    let mut missing = Vec::new();
    let mut ranked: Vec<Ranked<'a>> = Vec::with_capacity(articles.len());
    for &article in articles {
        let score = match spec.rank_by {
            RankBy::Newsworthiness => article.newsworthiness,
            RankBy::OutletRelevance => relevance.get(&article.id).copied(),
        };
        match score {
            Some(score) => ranked.push(Ranked { article, score }),
            None => missing.push(article.id.clone()),
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(QueryError::MissingRelevance(missing));
    }
    ranked.sort_by(ranking_order);
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub total_matches: usize,
    pub page: usize,
    pub page_size: usize,
}

/// Slice `[(page-1)*size, page*size)` of `ordered`. Pages past the end are
/// empty. `page` 0 is treated as 1.
pub fn paginate<T: Clone>(ordered: &[T], page: usize, page_size: usize) -> Page<T> {
    let start = page.saturating_sub(1).saturating_mul(page_size).min(ordered.len());
    let end = start.saturating_add(page_size).min(ordered.len());
    Page {
        items: ordered[start..end].to_vec(),
        total_matches: ordered.len(),
        page,
        page_size,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult<'a> {
    pub page: Page<Ranked<'a>>,
    pub skipped_unscored: usize,
}

/// filter, rank and paginate in one call.
pub fn run_query<'a>(
    articles: impl IntoIterator<Item = &'a ArticleRecord>,
    spec: &QuerySpec,
    relevance: &HashMap<String, f64>,
) -> Result<QueryResult<'a>, QueryError> {
    let filtered = filter_articles(articles, spec)?;
    let ranked = rank_articles(&filtered.articles, spec, relevance)?;
    Ok(QueryResult {
        page: paginate(&ranked, spec.page, spec.page_size),
        skipped_unscored: filtered.skipped_unscored,
    })
}
