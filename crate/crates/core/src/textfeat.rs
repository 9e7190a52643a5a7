//! Tokenization, jargon profiling and newsworthiness model features.
//!
//! A [`FeatureVector`] holds eight text statistics followed by one 0/1 flag
//! per configured category:
//!
//! | index | name                  | computed over |
//! |-------|-----------------------|---------------|
//! | 0     | `n_tokens`            | abstract      |
//! | 1     | `n_sentences`         | abstract      |
//! | 2     | `mean_word_length`    | abstract      |
//! | 3     | `frac_easy`           | abstract      |
//! | 4     | `frac_medium`         | abstract      |
//! | 5     | `frac_hard`           | abstract      |
//! | 6     | `frac_numeric_tokens` | abstract      |
//! | 7     | `title_token_count`   | title         |
//! | 8..   | `cat:<category>`      | categories    |

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ArticleRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("no tokens")]
    NoTokens,
    #[error("taxonomy line {line}: {message}")]
    TaxonomyLine { line: usize, message: String },
    #[error("taxonomy is empty")]
    EmptyTaxonomy,
    #[error("reading taxonomy {path}: {message}")]
    TaxonomyIo { path: String, message: String },
}

/// Lowercases `text` and returns its maximal runs of letters and digits.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Counts `.`, `!` and `?` that are followed by whitespace or end of text.
pub fn count_sentences(text: &str) -> usize {
    let mut chars = text.chars().peekable();
    let mut n = 0;
    while let Some(c) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|next| next.is_whitespace()) {
            n += 1;
        }
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Easy,
    Medium,
    Hard,
}

/// Word to readability tier map. Words missing from the map are hard.
#[derive(Debug, Clone, PartialEq)]
pub struct JargonTaxonomy {
    tiers: HashMap<String, Tier>,
}

impl JargonTaxonomy {
    pub fn new<I, S>(entries: I) -> Result<Self, FeatureError>
    where
        I: IntoIterator<Item = (S, Tier)>,
        S: AsRef<str>,
    {
        let tiers: HashMap<String, Tier> = entries
            .into_iter()
            .map(|(w, t)| (w.as_ref().to_lowercase(), t))
            .collect();
        if tiers.is_empty() {
            return Err(FeatureError::EmptyTaxonomy);
        }
        Ok(JargonTaxonomy { tiers })
    }

    /// Parses `word<TAB>easy|medium|hard` lines. Blank lines and lines
    /// starting with `#` are ignored; a repeated word keeps its last tier.
    pub fn from_tsv(text: &str) -> Result<Self, FeatureError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| FeatureError::TaxonomyLine { line: idx + 1, message };
            let (word, tier) = line
                .split_once('\t')
                .ok_or_else(|| err("expected word<TAB>tier".into()))?;
            let word = word.trim();
            if word.is_empty() {
                return Err(err("empty word".into()));
            }
            let tier = match tier.trim() {
                "easy" => Tier::Easy,
                "medium" => Tier::Medium,
                "hard" => Tier::Hard,
                other => return Err(err(format!("unknown tier {other:?}"))),
            };
            entries.push((word.to_string(), tier));
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let text = fs::read_to_string(path).map_err(|e| FeatureError::TaxonomyIo {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_tsv(&text)
    }

    pub fn tier(&self, word: &str) -> Tier {
        self.tiers.get(word).copied().unwrap_or(Tier::Hard)
    }

    pub fn len(&self) -> usize {
        self.tiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiers.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JargonProfile {
    pub frac_easy: f64,
    pub frac_medium: f64,
    pub frac_hard: f64,
}

/// Fraction of tokens in each tier.
pub fn jargon_profile<S: AsRef<str>>(tokens: &[S], taxonomy: &JargonTaxonomy) -> Result<JargonProfile, FeatureError> {
    if tokens.is_empty() {
        return Err(FeatureError::NoTokens);
    }
    let (mut easy, mut medium, mut hard) = (0usize, 0usize, 0usize);
    for t in tokens {
        match taxonomy.tier(t.as_ref()) {
            Tier::Easy => easy += 1,
            Tier::Medium => medium += 1,
            Tier::Hard => hard += 1,
        }
    }
    let n = tokens.len() as f64;
    Ok(JargonProfile {
        frac_easy: easy as f64 / n,
        frac_medium: medium as f64 / n,
        frac_hard: hard as f64 / n,
    })
}

/// The ordered feature layout: base statistics plus category flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    categories: Vec<String>,
}

pub const BASE_FEATURES: [&str; 8] = [
    "n_tokens",
    "n_sentences",
    "mean_word_length",
    "frac_easy",
    "frac_medium",
    "frac_hard",
    "frac_numeric_tokens",
    "title_token_count",
];

const SCHEMA_PREFIX: &str = "textfeat-v1";

/// arXiv computer science subject classes.
pub const CS_CATEGORIES: [&str; 40] = [
    "cs.AI", "cs.AR", "cs.CC", "cs.CE", "cs.CG", "cs.CL", "cs.CR", "cs.CV", "cs.CY", "cs.DB", "cs.DC", "cs.DL",
    "cs.DM", "cs.DS", "cs.ET", "cs.FL", "cs.GL", "cs.GR", "cs.GT", "cs.HC", "cs.IR", "cs.IT", "cs.LG", "cs.LO",
    "cs.MA", "cs.MM", "cs.MS", "cs.NA", "cs.NE", "cs.NI", "cs.OH", "cs.OS", "cs.PF", "cs.PL", "cs.RO", "cs.SC",
    "cs.SD", "cs.SE", "cs.SI", "cs.SY",
];

impl FeatureSchema {
    pub fn new<S: Into<String>>(categories: impl IntoIterator<Item = S>) -> Self {
        FeatureSchema {
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn arity(&self) -> usize {
        BASE_FEATURES.len() + self.categories.len()
    }

    pub fn names(&self) -> Vec<String> {
        BASE_FEATURES
            .iter()
            .map(|s| s.to_string())
            .chain(self.categories.iter().map(|c| format!("cat:{c}")))
            .collect()
    }

    /// Identifies this layout; models record it and refuse other layouts.
    pub fn version(&self) -> String {
        let joined = self.categories.join(",");
        let digest = xxhash_rust::xxh3::xxh3_64(joined.as_bytes());
        format!("{SCHEMA_PREFIX}:{}:{digest:016x}", self.categories.len())
    }
}

impl Default for FeatureSchema {
    fn default() -> Self {
        FeatureSchema::new(CS_CATEGORIES)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub schema_version: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn arity(&self) -> usize {
        self.values.len()
    }
    pub fn n_tokens(&self) -> f64 {
        self.values[0]
    }
    pub fn n_sentences(&self) -> f64 {
        self.values[1]
    }
    pub fn mean_word_length(&self) -> f64 {
        self.values[2]
    }
    pub fn frac_easy(&self) -> f64 {
        self.values[3]
    }
    pub fn frac_medium(&self) -> f64 {
        self.values[4]
    }
    pub fn frac_hard(&self) -> f64 {
        self.values[5]
    }
    pub fn frac_numeric_tokens(&self) -> f64 {
        self.values[6]
    }
    pub fn title_token_count(&self) -> f64 {
        self.values[7]
    }
    pub fn category_flags(&self) -> &[f64] {
        &self.values[BASE_FEATURES.len()..]
    }
}

/// Computes the feature vector of one article.
pub fn extract_features(
    article: &ArticleRecord,
    taxonomy: &JargonTaxonomy,
    schema: &FeatureSchema,
) -> Result<FeatureVector, FeatureError> {
    let tokens = tokenize(&article.abstract_text);
    let profile = jargon_profile(&tokens, taxonomy)?;
    let n = tokens.len() as f64;
    let total_chars: usize = tokens.iter().map(|t| t.chars().count()).sum();
    let numeric = tokens
        .iter()
        .filter(|t| t.chars().all(char::is_numeric))
        .count();

    let mut values = Vec::with_capacity(schema.arity());
    values.extend([
        n,
        count_sentences(&article.abstract_text) as f64,
        total_chars as f64 / n,
        profile.frac_easy,
        profile.frac_medium,
        profile.frac_hard,
        numeric as f64 / n,
        tokenize(&article.title).len() as f64,
    ]);
    values.extend(schema.categories.iter().map(|c| {
        if article.categories.contains(c) {
            1.0
        } else {
            0.0
        }
    }));
    Ok(FeatureVector {
        schema_version: schema.version(),
        values,
    })
}

/// [`extract_features`] over many articles, in input order.
pub fn extract_all(
    articles: &[ArticleRecord],
    taxonomy: &JargonTaxonomy,
    schema: &FeatureSchema,
) -> Vec<Result<FeatureVector, FeatureError>> {
    crate::par::map(articles, |a| extract_features(a, taxonomy, schema))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn toy_taxonomy() -> JargonTaxonomy {
        JargonTaxonomy::from_tsv("we\teasy\ntest\teasy\nfast\teasy\nlearn\teasy\nmodels\tmedium\nDeep\tmedium\ntasks\thard\n")
            .unwrap()
    }

    fn article(title: &str, abs: &str, cats: &[&str]) -> ArticleRecord {
        ArticleRecord {
            id: "x".into(),
            title: title.into(),
            abstract_text: abs.into(),
            url: "https://arxiv.org/abs/x".into(),
            primary_category: cats[0].into(),
            categories: cats.iter().map(|s| s.to_string()).collect(),
            published_date: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
            full_text: None,
            features: None,
            newsworthiness: None,
            angle_cache: None,
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("GPT-3 models, 2 tasks"), vec!["gpt", "3", "models", "2", "tasks"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("AAA AAA"), vec!["aaa", "aaa"]);
        assert_eq!(tokenize("Größe naïve_café"), vec!["größe", "naïve", "café"]);
    }

    #[test]
    fn sentence_terminators() {
        assert_eq!(count_sentences("One. Two! Three?"), 3);
        assert_eq!(count_sentences("Pi is 3.14 roughly"), 0);
        assert_eq!(count_sentences("Wait... what?\nYes."), 3);
        assert_eq!(count_sentences(""), 0);
    }

    #[test]
    fn jargon_examples() {
        let tax = JargonTaxonomy::from_tsv("a\teasy\nb\tmedium\nc\thard\n").unwrap();
        let p = jargon_profile(&["a", "a", "a", "a"], &tax).unwrap();
        assert_eq!((p.frac_easy, p.frac_medium, p.frac_hard), (1.0, 0.0, 0.0));
        let p = jargon_profile(&["a", "a", "b", "zzz"], &tax).unwrap();
        assert_eq!((p.frac_easy, p.frac_medium, p.frac_hard), (0.5, 0.25, 0.25));
        let p = jargon_profile(&["x", "y"], &tax).unwrap();
        assert_eq!((p.frac_easy, p.frac_medium, p.frac_hard), (0.0, 0.0, 1.0));
        assert_eq!(jargon_profile::<&str>(&[], &tax).unwrap_err(), FeatureError::NoTokens);
        assert_eq!(FeatureError::NoTokens.to_string(), "no tokens");
    }

    #[test]
    fn taxonomy_parsing() {
        assert_eq!(JargonTaxonomy::from_tsv("# only a comment\n\n"), Err(FeatureError::EmptyTaxonomy));
        assert!(matches!(
            JargonTaxonomy::from_tsv("ok\teasy\nbad line\n"),
            Err(FeatureError::TaxonomyLine { line: 2, .. })
        ));
        assert!(matches!(
            JargonTaxonomy::from_tsv("w\tsimple\n"),
            Err(FeatureError::TaxonomyLine { line: 1, .. })
        ));
        let t = JargonTaxonomy::from_tsv("Word\teasy\r\n").unwrap();
        assert_eq!(t.tier("word"), Tier::Easy);
        assert_eq!(t.tier("other"), Tier::Hard);
    }

    #[test]
    fn hand_computed_vector() {
        // deep models learn fast we test 3 models 2 tasks
        let a = article(
            "Fast Models",
            "Deep models learn fast. We test 3 models, 2 tasks!",
            &["cs.LG"],
        );
        let schema = FeatureSchema::new(["cs.CL", "cs.LG"]);
        let fv = extract_features(&a, &toy_taxonomy(), &schema).unwrap();
        assert_eq!(fv.values, vec![10.0, 2.0, 3.8, 0.4, 0.3, 0.3, 0.2, 2.0, 0.0, 1.0]);
        assert_eq!(fv.schema_version, schema.version());
        assert_eq!(fv.category_flags(), &[0.0, 1.0]);
        assert_eq!(schema.names().len(), fv.arity());
    }

    #[test]
    fn category_flags_follow_list_order() {
        let a = article("T", "Some words here.", &["cs.LG"]);
        let fv = extract_features(&a, &toy_taxonomy(), &FeatureSchema::new(["cs.CL", "cs.LG"])).unwrap();
        assert_eq!(fv.category_flags(), &[0.0, 1.0]);
    }

    #[test]
    fn identical_text_identical_vectors() {
        let mut a = article("Title", "Same abstract text.", &["cs.AI", "cs.LG"]);
        let b = a.clone();
        a.id = "other".into();
        let schema = FeatureSchema::default();
        assert_eq!(
            extract_features(&a, &toy_taxonomy(), &schema).unwrap(),
            extract_features(&b, &toy_taxonomy(), &schema).unwrap()
        );
    }

    #[test]
    fn empty_abstract_errors() {
        let a = article("Title", "— …", &["cs.AI"]);
        assert_eq!(
            extract_features(&a, &toy_taxonomy(), &FeatureSchema::default()),
            Err(FeatureError::NoTokens)
        );
    }

    #[test]
    fn schema_version_tracks_categories() {
        assert_ne!(FeatureSchema::new(["cs.AI"]).version(), FeatureSchema::new(["cs.CL"]).version());
        assert_eq!(FeatureSchema::default().arity(), 48);
        assert!(FeatureSchema::default().version().starts_with("textfeat-v1:40:"));
    }

    proptest! {
        #[test]
        fn tokenize_idempotent_under_rejoin(s in "\\PC{0,60}") {
            let toks = tokenize(&s);
            prop_assert_eq!(tokenize(&toks.join(" ")), toks.clone());
            prop_assert_eq!(tokenize(&s), toks);
        }

        #[test]
        fn jargon_fractions_sum_to_one(words in prop::collection::vec("[a-f]{1,2}", 1..40)) {
            let tax = JargonTaxonomy::from_tsv("a\teasy\nb\tmedium\nab\thard\nc\teasy\n").unwrap();
            let p = jargon_profile(&words, &tax).unwrap();
            for f in [p.frac_easy, p.frac_medium, p.frac_hard] {
                prop_assert!((0.0..=1.0).contains(&f));
            }
            prop_assert!((p.frac_easy + p.frac_medium + p.frac_hard - 1.0).abs() <= 1e-9);
        }
    }
}
