//! Operator pipeline steps behind the CLI subcommands. Each writing step
//! holds the data directory's store lock for its whole run.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use cnd_core::angles::{
    generate_angles, AngleProvider, AngleSet, GenerateOptions, GenerationParams, RateLimited, StubAngleProvider,
};
use cnd_core::corpus::{
    default_outlet_roster, parse_preprint_feed, partition_by_date, read_ndjson, write_atomic, BoilerplateConfig,
    CorpusStore, IngestReport, OutletItemRow, StoreLock, ARTICLES_FILE, ROSTER_FILE,
};
use cnd_core::evalmetrics::{
    icc_consistency, parse_ratings, precision_at_k, spearman, RankedList, RatingMatrix,
};
use cnd_core::newsworthiness::{aggregate_news_values, fit_forest, predict, ForestModel, ForestParams, NewsValueRatings};
use cnd_core::relevance::{item_text, write_vectors, EmbeddingProvider, StubEmbedder};
use cnd_core::textfeat::{extract_all, FeatureSchema, JargonTaxonomy};
use serde::{Deserialize, Serialize};

use crate::config::{Endpoints, ProviderMode, ENV_EMBED_URL, ENV_LLM_URL};
use crate::disclosure::{Disclosure, ABOUT_FILE};
use crate::providers::{HttpCompleter, HttpEmbedder};

/// Name of the article vector file under `vectors/`. Outlet ids never
/// start with an underscore.
pub const ARTICLE_VECTORS: &str = "_articles";
pub const EMBED_META_FILE: &str = "meta.json";
pub const MODEL_FILE: &str = "forest.json";
pub const DEFAULT_CHAR_BUDGET: usize = 2000;
pub const DEFAULT_STUB_DIM: usize = 256;

/// Records how the persisted vectors were produced, so later steps embed
/// queries the same way.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedMeta {
    pub provider: String,
    pub dim: usize,
    pub seed: Option<u64>,
    pub char_budget: usize,
}

impl EmbedMeta {
    pub fn load(data_dir: &Path) -> Result<Option<Self>> {
        let path = vectors_dir(data_dir).join(EMBED_META_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(
                serde_json::from_str(&text).with_context(|| format!("reading {}", path.display()))?,
            )),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
        }
    }
}

pub fn vectors_dir(data_dir: &Path) -> PathBuf {
    CorpusStore::new(data_dir).vectors_dir()
}

/// Embedding provider matching the persisted vectors. Stub settings come
/// from `vectors/meta.json` when present.
pub fn embedder_for(mode: ProviderMode, endpoints: &Endpoints, data_dir: &Path) -> Result<Arc<dyn EmbeddingProvider>> {
    let meta = EmbedMeta::load(data_dir)?;
    match mode {
        ProviderMode::Stub => {
            let (dim, seed) = match &meta {
                Some(m) if m.provider == "stub" => (m.dim, m.seed.unwrap_or(0)),
                _ => (DEFAULT_STUB_DIM, 0),
            };
            Ok(Arc::new(StubEmbedder { dim, seed }))
        }
        ProviderMode::Http => {
            let url = endpoints
                .embed_url
                .as_deref()
                .ok_or_else(|| anyhow!("{ENV_EMBED_URL} is not set"))?;
            let dim = meta
                .filter(|m| m.provider == "http")
                .map(|m| m.dim)
                .ok_or_else(|| anyhow!("no http embeddings recorded; run `cnd embed --provider http --dim N` first"))?;
            Ok(Arc::new(HttpEmbedder::new(url, endpoints.embed_key.clone(), dim).map_err(|e| anyhow!(e))?))
        }
    }
}

pub fn angle_provider_for(
    mode: ProviderMode,
    endpoints: &Endpoints,
    rate_per_minute: u32,
) -> Result<Arc<dyn AngleProvider>> {
    match mode {
        ProviderMode::Stub => Ok(Arc::new(StubAngleProvider::new())),
        ProviderMode::Http => {
            let url = endpoints
                .llm_url
                .as_deref()
                .ok_or_else(|| anyhow!("{ENV_LLM_URL} is not set"))?;
            let http = HttpCompleter::new(url, endpoints.llm_key.clone()).map_err(|e| anyhow!(e))?;
            if rate_per_minute == 0 {
                Ok(Arc::new(http))
            } else {
                Ok(Arc::new(RateLimited::new(http, rate_per_minute)))
            }
        }
    }
}

fn locked_store(data_dir: &Path) -> Result<(StoreLock, CorpusStore)> {
    let lock = StoreLock::acquire(data_dir)?;
    let store = CorpusStore::load(data_dir)?;
    Ok((lock, store))
}

/// Creates the data directory with the default roster, disclosure and an
/// empty corpus. Existing files are kept.
pub fn init(data_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(data_dir).with_context(|| format!("creating {}", data_dir.display()))?;
    let _lock = StoreLock::acquire(data_dir)?;
    let mut created = Vec::new();
    let roster = data_dir.join(ROSTER_FILE);
    if !roster.exists() {
        let mut json = serde_json::to_vec_pretty(&default_outlet_roster())?;
        json.push(b'\n');
        write_atomic(&roster, &json)?;
        created.push(roster);
    }
    let about = data_dir.join(ABOUT_FILE);
    if !about.exists() {
        let mut json = serde_json::to_vec_pretty(&Disclosure::default())?;
        json.push(b'\n');
        write_atomic(&about, &json)?;
        created.push(about);
    }
    let articles = data_dir.join(ARTICLES_FILE);
    if !articles.exists() {
        write_atomic(&articles, b"")?;
        created.push(articles);
    }
    Ok(created)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedIngest {
    pub report: IngestReport,
    /// Record elements the feed parser could not turn into articles.
    pub feed_skipped: usize,
}

pub fn ingest_arxiv(data_dir: &Path, input: &Path) -> Result<FeedIngest> {
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let parsed = parse_preprint_feed(&bytes).with_context(|| format!("parsing {}", input.display()))?;
    let feed_skipped = parsed.skipped;
    let (_lock, mut store) = locked_store(data_dir)?;
    let report = store.ingest_feed(parsed)?;
    store.save()?;
    Ok(FeedIngest { report, feed_skipped })
}

pub fn ingest_outlet(data_dir: &Path, outlet_id: &str, input: &Path, config: BoilerplateConfig) -> Result<IngestReport> {
    let rows: Vec<OutletItemRow> = read_ndjson(input)?.into_iter().map(|(_, r)| r).collect();
    let (_lock, mut store) = locked_store(data_dir)?;
    let report = store.ingest_outlet_items(outlet_id, rows, config)?;
    store.save()?;
    Ok(report)
}

pub const TRAIN_IDS_FILE: &str = "partition_before.ids";
pub const HOLDOUT_IDS_FILE: &str = "partition_after.ids";

/// Writes ids published before `cutoff` and on or after it to two files in
/// the data directory. Returns the two counts.
pub fn partition(data_dir: &Path, cutoff: NaiveDate) -> Result<(usize, usize)> {
    let store = CorpusStore::load(data_dir)?;
    let (before, after) = partition_by_date(&store, cutoff);
    let ids = |v: &[cnd_core::ArticleRecord]| v.iter().map(|a| format!("{}\n", a.id)).collect::<String>();
    write_atomic(&data_dir.join(TRAIN_IDS_FILE), ids(&before).as_bytes())?;
    write_atomic(&data_dir.join(HOLDOUT_IDS_FILE), ids(&after).as_bytes())?;
    Ok((before.len(), after.len()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureReport {
    pub computed: usize,
    /// Articles whose abstract yields no tokens.
    pub failed: Vec<String>,
    pub schema_version: String,
}

pub fn features(data_dir: &Path, taxonomy: &Path) -> Result<FeatureReport> {
    let taxonomy = JargonTaxonomy::load(taxonomy)?;
    let schema = FeatureSchema::default();
    let (_lock, mut store) = locked_store(data_dir)?;
    let articles: Vec<_> = store.articles().cloned().collect();
    let results = extract_all(&articles, &taxonomy, &schema);
    let mut report = FeatureReport {
        computed: 0,
        failed: Vec::new(),
        schema_version: schema.version(),
    };
    for (article, result) in articles.iter().zip(results) {
        let slot = store.article_mut(&article.id).expect("article present");
        match result {
            Ok(fv) => {
                slot.features = Some(fv);
                report.computed += 1;
            }
            Err(_) => {
                slot.features = None;
                report.failed.push(article.id.clone());
            }
        }
    }
    store.save()?;
    Ok(report)
}

/// One training label: either a direct score or the four news-value
/// ratings, which are averaged.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRow {
    pub id: String,
    #[serde(default)]
    pub newsworthiness: Option<f64>,
    #[serde(default)]
    pub actuality: Option<f64>,
    #[serde(default)]
    pub controversy: Option<f64>,
    #[serde(default)]
    pub impact_magnitude: Option<f64>,
    #[serde(default)]
    pub impact_valence: Option<f64>,
}

impl LabelRow {
    pub fn score(&self) -> Result<f64> {
        if let Some(s) = self.newsworthiness {
            if !(0.0..=100.0).contains(&s) {
                bail!("newsworthiness {s} outside [0, 100]");
            }
            return Ok(s);
        }
        match (self.actuality, self.controversy, self.impact_magnitude, self.impact_valence) {
            (Some(actuality), Some(controversy), Some(impact_magnitude), Some(impact_valence)) => {
                Ok(aggregate_news_values(&NewsValueRatings {
                    actuality,
                    controversy,
                    impact_magnitude,
                    impact_valence,
                })?)
            }
            _ => bail!("need newsworthiness or all four of actuality, controversy, impact_magnitude, impact_valence"),
        }
    }
}

pub fn train(data_dir: &Path, labels: &Path, params: &ForestParams, out: &Path) -> Result<ForestModel> {
    let store = CorpusStore::load(data_dir)?;
    let mut labeled = Vec::new();
    for (line, row) in read_ndjson::<LabelRow>(labels)? {
        let ctx = || format!("{}:{line}", labels.display());
        let score = row.score().with_context(ctx)?;
        let article = store
            .article(&row.id)
            .ok_or_else(|| anyhow!("unknown article {:?}", row.id))
            .with_context(ctx)?;
        let fv = article
            .features
            .clone()
            .ok_or_else(|| anyhow!("article {:?} has no features; run `cnd features` first", row.id))
            .with_context(ctx)?;
        labeled.push((fv, score));
    }
    let model = fit_forest(&labeled, params)?;
    model.save(out)?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreReport {
    pub scored: usize,
    pub skipped_no_features: usize,
}

pub fn score(data_dir: &Path, model: &Path) -> Result<ScoreReport> {
    let model = ForestModel::load(model)?;
    let (_lock, mut store) = locked_store(data_dir)?;
    let mut report = ScoreReport {
        scored: 0,
        skipped_no_features: 0,
    };
    for article in store.articles_mut() {
        match &article.features {
            Some(fv) => {
                let s = predict(&model, fv).with_context(|| format!("scoring {}", article.id))?;
                article.newsworthiness = Some(s);
                report.scored += 1;
            }
            None => report.skipped_no_features += 1,
        }
    }
    store.save()?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedReport {
    pub articles: usize,
    /// (outlet id, item count) for each outlet with items.
    pub outlets: Vec<(String, usize)>,
    pub dim: usize,
}

/// Embeds every article and every outlet's items and writes the vector
/// files plus `vectors/meta.json`.
pub fn embed(data_dir: &Path, provider: &dyn EmbeddingProvider, seed: Option<u64>, char_budget: usize) -> Result<EmbedReport> {
    let (_lock, store) = locked_store(data_dir)?;
    let dir = store.vectors_dir();
    let article_ids: Vec<String> = store.articles().map(|a| a.id.clone()).collect();
    let texts: Vec<String> = store.articles().map(article_text(char_budget)).collect();
    let vecs = provider.embed(&texts)?;
    write_vectors(&dir, ARTICLE_VECTORS, &article_ids, &vecs)?;

    let mut outlets = Vec::new();
    for info in store.roster() {
        let items = store.outlet_items(&info.outlet_id);
        if items.is_empty() {
            continue;
        }
        let ids: Vec<String> = items.iter().map(|i| i.item_id.clone()).collect();
        let texts: Vec<String> = items.iter().map(|i| item_text(&i.title, &i.body, char_budget)).collect();
        let vecs = provider
            .embed(&texts)
            .with_context(|| format!("embedding items of {}", info.outlet_id))?;
        write_vectors(&dir, &info.outlet_id, &ids, &vecs)?;
        outlets.push((info.outlet_id.clone(), ids.len()));
    }
    let meta = EmbedMeta {
        provider: provider.name().to_string(),
        dim: provider.dim(),
        seed,
        char_budget,
    };
    let mut json = serde_json::to_vec_pretty(&meta)?;
    json.push(b'\n');
    write_atomic(&dir.join(EMBED_META_FILE), &json)?;
    Ok(EmbedReport {
        articles: article_ids.len(),
        outlets,
        dim: provider.dim(),
    })
}

/// Text embedded for an article: title and abstract within the budget.
pub fn article_text(char_budget: usize) -> impl Fn(&cnd_core::ArticleRecord) -> String {
    move |a| item_text(&a.title, &a.abstract_text, char_budget)
}

/// Generates (or returns cached) angles for one article and persists the
/// angle cache.
pub fn angles(
    data_dir: &Path,
    article_id: &str,
    provider: &dyn AngleProvider,
    embedder: &dyn EmbeddingProvider,
    options: GenerateOptions,
) -> Result<AngleSet> {
    let (_lock, mut store) = locked_store(data_dir)?;
    let article = store
        .article_mut(article_id)
        .ok_or_else(|| anyhow!("unknown article {article_id:?}"))?;
    let set = generate_angles(article, provider, embedder, &GenerationParams::default(), options)?;
    store.save_angles()?;
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IccReport {
    pub icc: f64,
    pub targets: usize,
    pub raters: usize,
}

pub fn eval_icc(ratings: &Path) -> Result<IccReport> {
    let text = fs::read_to_string(ratings).with_context(|| format!("reading {}", ratings.display()))?;
    let rows = parse_ratings(&text).map_err(|(line, msg)| anyhow!("{}:{line}: {msg}", ratings.display()))?;
    let matrix = RatingMatrix::from_ratings(&rows)?;
    Ok(IccReport {
        icc: icc_consistency(&matrix)?,
        targets: matrix.n_targets(),
        raters: matrix.n_raters(),
    })
}

fn read_id_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

pub fn eval_pk(ranked: &Path, relevant: &Path, k: usize) -> Result<f64> {
    let ranked = RankedList::new(read_id_lines(ranked)?)?;
    let relevant: HashSet<String> = read_id_lines(relevant)?.into_iter().collect();
    Ok(precision_at_k(&ranked, &relevant, k)?)
}

/// Spearman correlation of two whitespace-separated numeric columns.
pub fn eval_spearman(pairs: &Path) -> Result<f64> {
    let text = fs::read_to_string(pairs).with_context(|| format!("reading {}", pairs.display()))?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [a, b] = cols[..] else {
            bail!("{}:{}: expected two columns", pairs.display(), i + 1);
        };
        let parse = |s: &str| s.parse::<f64>().with_context(|| format!("{}:{}: bad number {s:?}", pairs.display(), i + 1));
        x.push(parse(a)?);
        y.push(parse(b)?);
    }
    Ok(spearman(&x, &y)?)
}
