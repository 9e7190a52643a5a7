//! News angle generation: prompt construction, completion parsing and
//! redundancy flags.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ArticleRecord;
use crate::relevance::{cosine, EmbeddingProvider, RelevanceError};

pub const INSTRUCTION: &str = "List three newsworthy headlines for this abstract: ";
pub const DEFAULT_MODEL: &str = "text-davinci-002";
pub const DEFAULT_REDUNDANCY_THRESHOLD: f64 = 0.9;
pub const ANGLE_COUNT: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AngleError {
    #[error("incomplete generation: expected {ANGLE_COUNT} angles in {raw:?}")]
    Incomplete { raw: String },
    #[error("generation provider: {0}")]
    Provider(String),
    #[error("embedding for redundancy check failed: {0}")]
    Embedding(#[from] RelevanceError),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("redundancy threshold {0} must lie in (0, 1]")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub model_name: String,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.85,
            frequency_penalty: 0.85,
            presence_penalty: 0.85,
            model_name: DEFAULT_MODEL.to_string(),
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), AngleError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(AngleError::InvalidParams(format!("temperature {} < 0", self.temperature)));
        }
        for (name, v) in [
            ("frequency_penalty", self.frequency_penalty),
            ("presence_penalty", self.presence_penalty),
        ] {
            if !(-2.0..=2.0).contains(&v) {
                return Err(AngleError::InvalidParams(format!("{name} {v} outside [-2, 2]")));
            }
        }
        if self.model_name.trim().is_empty() {
            return Err(AngleError::InvalidParams("model_name is empty".into()));
        }
        Ok(())
    }
}

/// Three generated angles for one article, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSet {
    pub article_id: String,
    pub angles: Vec<String>,
    pub prompt_text: String,
    pub params: GenerationParams,
    pub redundant_flags: Vec<bool>,
    pub provider_meta: BTreeMap<String, String>,
}

impl AngleSet {
    pub fn validate(&self) -> Result<(), String> {
        if self.angles.len() != ANGLE_COUNT || self.redundant_flags.len() != ANGLE_COUNT {
            return Err(format!(
                "expected {ANGLE_COUNT} angles and flags, found {} and {}",
                self.angles.len(),
                self.redundant_flags.len()
            ));
        }
        if self.angles.iter().any(|a| a.trim().is_empty()) {
            return Err("empty angle".into());
        }
        Ok(())
    }
}

/// Completes a prompt with generated text.
pub trait AngleProvider: Send + Sync {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, AngleError>;

    fn name(&self) -> &str;
}

/// The generation prompt: instruction, then title and abstract joined by a
/// space.
pub fn build_prompt(article: &ArticleRecord) -> String {
    format!("{INSTRUCTION}{} {}", article.title, article.abstract_text)
        .trim_end()
        .to_string()
}

/// Enumeration styles understood by [`parse_angles`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerStyle {
    /// `1. `
    Dotted,
    /// `1) `
    Paren,
    /// `- `
    Dash,
    /// `• `
    Bullet,
}

impl MarkerStyle {
    pub const ALL: [MarkerStyle; 4] = [MarkerStyle::Dotted, MarkerStyle::Paren, MarkerStyle::Dash, MarkerStyle::Bullet];

    fn marker(self, index: usize) -> String {
        match self {
            MarkerStyle::Dotted => format!("{}. ", index + 1),
            MarkerStyle::Paren => format!("{}) ", index + 1),
            MarkerStyle::Dash => "- ".into(),
            MarkerStyle::Bullet => "• ".into(),
        }
    }
}

/// Renders angles one per line with the given enumeration markers.
pub fn serialize_angles<S: AsRef<str>>(angles: &[S], style: MarkerStyle) -> String {
    angles
        .iter()
        .enumerate()
        .map(|(i, a)| format!("{}{}", style.marker(i), a.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn strip_marker(line: &str) -> &str {
    let line = line.trim();
    let followed_by_space = |rest: &str| rest.is_empty() || rest.starts_with(char::is_whitespace);
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(after) = rest.strip_prefix(['.', ')']) {
            if followed_by_space(after) {
                return after.trim_start();
            }
        }
        return line;
    }
    for bullet in ['-', '•', '*'] {
        if let Some(after) = line.strip_prefix(bullet) {
            if followed_by_space(after) {
                return after.trim_start();
            }
        }
    }
    line
}

fn strip_quotes(s: &str) -> &str {
    const PAIRS: [(char, char); 4] = [('"', '"'), ('“', '”'), ('\'', '\''), ('‘', '’')];
    for (open, close) in PAIRS {
        if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
            return inner.trim();
        }
    }
    s
}

/// Extracts the first three nonempty lines of a completion, without
/// enumeration markers or surrounding quotes.
pub fn parse_angles(completion: &str) -> Result<Vec<String>, AngleError> {
    let angles: Vec<String> = completion
        .lines()
        .map(|l| strip_quotes(strip_marker(l)).to_string())
        .filter(|l| !l.is_empty())
        .take(ANGLE_COUNT)
        .collect();
    if angles.len() < ANGLE_COUNT {
        return Err(AngleError::Incomplete {
            raw: completion.to_string(),
        });
    }
    Ok(angles)
}

/// Flags angles that restate the abstract or repeat an earlier angle.
///
/// Angle `i` is flagged when its cosine to the abstract is at least
/// `threshold`, or when its cosine to some angle `j < i` is.
pub fn flag_redundant<S: AsRef<str>>(
    angles: &[S],
    abstract_text: &str,
    provider: &dyn EmbeddingProvider,
    threshold: f64,
) -> Result<Vec<bool>, AngleError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(AngleError::InvalidThreshold(threshold));
    }
    let mut texts: Vec<String> = angles.iter().map(|a| a.as_ref().to_string()).collect();
    texts.push(abstract_text.to_string());
    let vectors = provider.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(AngleError::Embedding(RelevanceError::Provider(format!(
            "expected {} vectors, got {}",
            texts.len(),
            vectors.len()
        ))));
    }
    let (angle_vecs, abstract_vec) = vectors.split_at(angles.len());
    let abstract_vec = &abstract_vec[0];
    let mut flags = Vec::with_capacity(angles.len());
    for (i, v) in angle_vecs.iter().enumerate() {
        let mut flagged = cosine(v, abstract_vec)? >= threshold;
        for earlier in &angle_vecs[..i] {
            if flagged {
                break;
            }
            flagged = cosine(v, earlier)? >= threshold;
        }
        flags.push(flagged);
    }
    Ok(flags)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    pub fresh: bool,
    pub threshold: f64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            fresh: false,
            threshold: DEFAULT_REDUNDANCY_THRESHOLD,
        }
    }
}

/// Returns the article's cached angles, or generates, flags and caches a
/// new set. `options.fresh` forces regeneration. On error the cache is left
/// untouched.
pub fn generate_angles(
    article: &mut ArticleRecord,
    provider: &dyn AngleProvider,
    embed: &dyn EmbeddingProvider,
    params: &GenerationParams,
    options: GenerateOptions,
) -> Result<AngleSet, AngleError> {
    if !options.fresh {
        if let Some(cached) = &article.angle_cache {
            return Ok(cached.clone());
        }
    }
    params.validate()?;
    let prompt = build_prompt(article);
    let completion = provider.complete(&prompt, params)?;
    let angles = parse_angles(&completion)?;
    let redundant_flags = flag_redundant(&angles, &article.abstract_text, embed, options.threshold)?;
    let provider_meta = BTreeMap::from([
        ("provider".to_string(), provider.name().to_string()),
        ("embedding_provider".to_string(), embed.name().to_string()),
        ("embedding_dim".to_string(), embed.dim().to_string()),
        ("redundancy_threshold".to_string(), options.threshold.to_string()),
    ]);
    let set = AngleSet {
        article_id: article.id.clone(),
        angles,
        prompt_text: prompt,
        params: params.clone(),
        redundant_flags,
        provider_meta,
    };
    article.angle_cache = Some(set.clone());
    Ok(set)
}

/// Offline provider that writes three headline-shaped lines derived from
/// the prompt. Output depends only on (prompt, params).
#[derive(Debug, Default)]
pub struct StubAngleProvider {
    calls: AtomicUsize,
}

impl StubAngleProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl AngleProvider for StubAngleProvider {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, AngleError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let content = prompt.strip_prefix(INSTRUCTION).unwrap_or(prompt);
        let words: Vec<&str> = content.split_whitespace().collect();
        if words.is_empty() {
            return Err(AngleError::Provider("empty prompt".into()));
        }
        let key = format!(
            "{prompt}\u{0}{}\u{0}{}\u{0}{}\u{0}{}",
            params.model_name, params.temperature, params.frequency_penalty, params.presence_penalty
        );
        let h = xxhash_rust::xxh3::xxh3_64(key.as_bytes());
        let lead: Vec<&str> = words.iter().take(8).copied().collect();
        let keyword = words
            .iter()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
            .filter(|w| !w.is_empty())
            .max_by_key(|w| w.chars().count())
            .unwrap_or(words[0]);
        let audiences = ["everyday users", "policy makers", "industry", "researchers", "privacy advocates"];
        let audience = audiences[(h % audiences.len() as u64) as usize];
        let tail = words.len().saturating_sub(6);
        let closing: Vec<&str> = words[tail..].to_vec();
        Ok(format!(
            "1. New research: {}\n2. What {keyword} could mean for {audience}\n3. \"{}\"",
            lead.join(" ").trim_end_matches(['.', ',', ';', ':']),
            closing.join(" ").trim_end_matches(['.', ',', ';', ':']),
        ))
    }

    fn name(&self) -> &str {
        "stub"
    }
}

/// Provider that always returns the same completion, counting calls.
#[derive(Debug)]
pub struct FixedAngleProvider {
    text: String,
    calls: AtomicUsize,
}

impl FixedAngleProvider {
    pub fn new(text: impl Into<String>) -> Self {
        FixedAngleProvider {
            text: text.into(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl AngleProvider for FixedAngleProvider {
    fn complete(&self, _prompt: &str, _params: &GenerationParams) -> Result<String, AngleError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.text.clone())
    }

    fn name(&self) -> &str {
        "fixed"
    }
}

/// Spaces calls at least `60 / per_minute` seconds apart.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(per_minute: u32) -> Self {
        RateLimiter {
            interval: Duration::from_secs(60) / per_minute.max(1),
            next: Mutex::new(None),
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Blocks until the caller may issue a request.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |t| t.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Wraps a provider so calls pass through a [`RateLimiter`].
pub struct RateLimited<P> {
    inner: P,
    limiter: RateLimiter,
}

impl<P: AngleProvider> RateLimited<P> {
    pub fn new(inner: P, per_minute: u32) -> Self {
        RateLimited {
            inner,
            limiter: RateLimiter::per_minute(per_minute),
        }
    }
}

impl<P: AngleProvider> AngleProvider for RateLimited<P> {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, AngleError> {
        self.limiter.acquire();
        self.inner.complete(prompt, params)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
