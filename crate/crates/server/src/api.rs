//! REST API over a corpus snapshot.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use cnd_core::angles::{generate_angles, AngleError, AngleProvider, AngleSet, GenerateOptions, GenerationParams};
use cnd_core::corpus::{CorpusError, CorpusStore, OutletProfile, StoreLock};
use cnd_core::query::{filter_articles, paginate, rank_articles, FieldError, QueryError, QuerySpec, RankBy};
use cnd_core::relevance::{
    multi_outlet_relevance, outlet_relevance, read_vectors, EmbeddingProvider, EmbeddingVector, RelevanceResult,
};
use cnd_core::{ArticleRecord, OutletType};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ApiConfig;
use crate::disclosure::Disclosure;
use crate::pipeline::{angle_provider_for, embedder_for, ARTICLE_VECTORS};
use crate::providers::redact;

/// Corpus, vectors and memoized relevance scores loaded at one point in
/// time. Only the angle caches inside the store change afterwards.
pub struct Snapshot {
    store: RwLock<CorpusStore>,
    article_vectors: HashMap<String, EmbeddingVector>,
    profiles: HashMap<String, OutletProfile>,
    memo: Mutex<HashMap<(String, String), Option<RelevanceResult>>>,
}

impl Snapshot {
    pub fn new(
        store: CorpusStore,
        article_vectors: HashMap<String, EmbeddingVector>,
        profiles: HashMap<String, OutletProfile>,
    ) -> Self {
        Snapshot {
            store: RwLock::new(store),
            article_vectors,
            profiles,
            memo: Mutex::new(HashMap::new()),
        }
    }

    /// Loads the corpus and every persisted vector file under `data_dir`.
    pub fn load(data_dir: &Path) -> anyhow::Result<Self> {
        let store = CorpusStore::load(data_dir)?;
        let dir = store.vectors_dir();
        let mut article_vectors = HashMap::new();
        if let Some((ids, vecs)) = read_vectors(&dir, ARTICLE_VECTORS)? {
            article_vectors.extend(ids.into_iter().zip(vecs));
        }
        let mut profiles = HashMap::new();
        for info in store.roster() {
            if let Some((_, vecs)) = read_vectors(&dir, &info.outlet_id)? {
                let profile = OutletProfile::new(info.clone(), vecs)
                    .with_context(|| format!("vectors of outlet {}", info.outlet_id))?;
                profiles.insert(info.outlet_id.clone(), profile);
            }
        }
        Ok(Snapshot::new(store, article_vectors, profiles))
    }

    pub fn store(&self) -> std::sync::RwLockReadGuard<'_, CorpusStore> {
        self.store.read().expect("store lock poisoned")
    }

    fn outlet_result(&self, article_id: &str, outlet_id: &str) -> Option<RelevanceResult> {
        let key = (article_id.to_string(), outlet_id.to_string());
        if let Some(hit) = self.memo.lock().expect("memo lock poisoned").get(&key) {
            return hit.clone();
        }
        let result = match (self.article_vectors.get(article_id), self.profiles.get(outlet_id)) {
            (Some(v), Some(p)) => outlet_relevance(article_id, v, p).ok(),
            _ => None,
        };
        self.memo.lock().expect("memo lock poisoned").insert(key, result.clone());
        result
    }

    /// Mean relevance of the article across `outlet_ids`, or `None` when
    /// any needed vector is missing.
    pub fn relevance(&self, article_id: &str, outlet_ids: &[String]) -> Option<f64> {
        let results = outlet_ids
            .iter()
            .map(|o| self.outlet_result(article_id, o))
            .collect::<Option<Vec<_>>>()?;
        multi_outlet_relevance(&results).ok()
    }
}

/// Generation and embedding providers used by the API.
#[derive(Clone)]
pub struct Providers {
    pub angles: Arc<dyn AngleProvider>,
    pub embed: Arc<dyn EmbeddingProvider>,
}

struct Inner {
    snapshot: RwLock<Arc<Snapshot>>,
    data_dir: PathBuf,
    providers: Providers,
    params: GenerationParams,
    in_flight: Mutex<HashSet<String>>,
    disclosure: Disclosure,
    secrets: Vec<String>,
    page_size_cap: usize,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(
        data_dir: impl Into<PathBuf>,
        snapshot: Snapshot,
        providers: Providers,
        disclosure: Disclosure,
        secrets: Vec<String>,
        page_size_cap: usize,
    ) -> Self {
        AppState(Arc::new(Inner {
            snapshot: RwLock::new(Arc::new(snapshot)),
            data_dir: data_dir.into(),
            providers,
            params: GenerationParams::default(),
            in_flight: Mutex::new(HashSet::new()),
            disclosure,
            secrets,
            page_size_cap,
        }))
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.0.snapshot.read().expect("snapshot lock poisoned").clone()
    }

    /// Reloads the corpus from disk and swaps it in.
    pub fn reload(&self) -> anyhow::Result<usize> {
        let fresh = Snapshot::load(&self.0.data_dir)?;
        let n = fresh.store().len();
        *self.0.snapshot.write().expect("snapshot lock poisoned") = Arc::new(fresh);
        Ok(n)
    }

    fn error(&self, status: StatusCode, message: impl AsRef<str>) -> ApiError {
        ApiError {
            status,
            body: json!({ "error": redact(message.as_ref(), &self.0.secrets) }),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn field_errors(errors: &[FieldError]) -> ApiError {
    ApiError {
        status: StatusCode::BAD_REQUEST,
        body: json!({ "error": "invalid query", "fields": errors }),
    }
}

/// Query-string names for [`QuerySpec`] fields.
fn param_name(field: &str) -> &str {
    match field {
        "min_newsworthiness" => "min_news",
        "max_newsworthiness" => "max_news",
        "outlet_ids" => "outlets",
        other => other,
    }
}

/// Parses `GET /articles` parameters, collecting every problem.
pub fn parse_query(params: &[(String, String)], page_size_cap: usize) -> Result<QuerySpec, Vec<FieldError>> {
    let mut spec = QuerySpec::default();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (key, value) in params {
        let value = value.trim();
        if key != "outlets" && !seen.insert(key.as_str()) {
            errors.push(FieldError::new(key.clone(), "given more than once"));
            continue;
        }
        let date = |errors: &mut Vec<FieldError>| match NaiveDate::parse_from_str(value, "%Y-%m-%d") {
            Ok(d) => Some(d),
            Err(_) => {
                errors.push(FieldError::new(key.clone(), format!("{value:?} is not a YYYY-MM-DD date")));
                None
            }
        };
        let number = |errors: &mut Vec<FieldError>| match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                errors.push(FieldError::new(key.clone(), format!("{value:?} is not a number")));
                None
            }
        };
        let count = |errors: &mut Vec<FieldError>| match value.parse::<usize>() {
            Ok(v) => Some(v),
            Err(_) => {
                errors.push(FieldError::new(key.clone(), format!("{value:?} is not a positive integer")));
                None
            }
        };
        match key.as_str() {
            "date_from" => spec.date_from = date(&mut errors),
            "date_to" => spec.date_to = date(&mut errors),
            "min_news" => spec.min_newsworthiness = number(&mut errors),
            "max_news" => spec.max_newsworthiness = number(&mut errors),
            "rank_by" => match value.parse::<RankBy>() {
                Ok(r) => spec.rank_by = r,
                Err(e) => errors.push(FieldError::new("rank_by", e)),
            },
            "outlets" => spec.outlet_ids.extend(
                value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string),
            ),
            "page" => spec.page = count(&mut errors).unwrap_or(1),
            "page_size" => spec.page_size = count(&mut errors).unwrap_or(spec.page_size),
            other => errors.push(FieldError::new(other, "unknown parameter")),
        }
    }
    if let Err(QueryError::Invalid(invalid)) = spec.validate() {
        errors.extend(
            invalid
                .into_iter()
                .map(|e| FieldError::new(param_name(&e.field), e.message)),
        );
    }
    if spec.page_size > page_size_cap {
        errors.push(FieldError::new("page_size", format!("exceeds the server cap {page_size_cap}")));
    }
    if errors.is_empty() {
        Ok(spec)
    } else {
        Err(errors)
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ArticleItem {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub url: String,
    pub published_date: NaiveDate,
    pub newsworthiness: Option<f64>,
    pub outlet_relevance: Option<f64>,
    pub angles: Option<Vec<String>>,
    pub redundant_flags: Option<Vec<bool>>,
}

impl ArticleItem {
    pub fn new(a: &ArticleRecord, outlet_relevance: Option<f64>) -> Self {
        ArticleItem {
            id: a.id.clone(),
            title: a.title.clone(),
            abstract_text: a.abstract_text.clone(),
            url: a.url.clone(),
            published_date: a.published_date,
            newsworthiness: a.newsworthiness,
            outlet_relevance,
            angles: a.angle_cache.as_ref().map(|s| s.angles.clone()),
            redundant_flags: a.angle_cache.as_ref().map(|s| s.redundant_flags.clone()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ArticlesPage {
    pub items: Vec<ArticleItem>,
    pub total_matches: usize,
    pub page: usize,
    pub page_size: usize,
    pub skipped_unscored: usize,
}

/// Runs a validated query against a snapshot.
pub fn query_snapshot(snapshot: &Snapshot, spec: &QuerySpec) -> Result<ArticlesPage, QueryError> {
    let store = snapshot.store();
    let filtered = filter_articles(store.articles(), spec)?;
    let relevance: HashMap<String, f64> = if spec.outlet_ids.is_empty() {
        HashMap::new()
    } else {
        filtered
            .articles
            .iter()
            .filter_map(|a| snapshot.relevance(&a.id, &spec.outlet_ids).map(|r| (a.id.clone(), r)))
            .collect()
    };
    let ranked = rank_articles(&filtered.articles, spec, &relevance)?;
    let page = paginate(&ranked, spec.page, spec.page_size);
    Ok(ArticlesPage {
        items: page
            .items
            .iter()
            .map(|r| ArticleItem::new(r.article, relevance.get(&r.article.id).copied()))
            .collect(),
        total_matches: page.total_matches,
        page: page.page,
        page_size: page.page_size,
        skipped_unscored: filtered.skipped_unscored,
    })
}

async fn get_articles(
    State(state): State<AppState>,
    Query(params): Query<Vec<(String, String)>>,
) -> Result<Json<ArticlesPage>, ApiError> {
    let spec = parse_query(&params, state.0.page_size_cap).map_err(|e| field_errors(&e))?;
    let snapshot = state.snapshot();
    let mut unknown = Vec::new();
    for o in &spec.outlet_ids {
        let known = snapshot.store().outlet(o).is_some();
        if !known {
            unknown.push(FieldError::new("outlets", format!("unknown outlet {o:?}")));
        } else if !snapshot.profiles.contains_key(o) {
            unknown.push(FieldError::new("outlets", format!("outlet {o:?} has no embedded news items")));
        }
    }
    if !unknown.is_empty() {
        return Err(field_errors(&unknown));
    }
    match query_snapshot(&snapshot, &spec) {
        Ok(page) => Ok(Json(page)),
        Err(QueryError::Invalid(e)) => Err(field_errors(&e)),
        Err(QueryError::MissingRelevance(ids)) => Err(state.error(
            StatusCode::SERVICE_UNAVAILABLE,
            format!(
                "outlet relevance unavailable for {} article(s) without embeddings (first: {}); run `cnd embed`",
                ids.len(),
                ids[0]
            ),
        )),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AngleRequest {
    #[serde(default)]
    fresh: bool,
    #[serde(default = "default_threshold")]
    threshold: f64,
}

fn default_threshold() -> f64 {
    cnd_core::angles::DEFAULT_REDUNDANCY_THRESHOLD
}

impl Default for AngleRequest {
    fn default() -> Self {
        AngleRequest {
            fresh: false,
            threshold: default_threshold(),
        }
    }
}

/// Marks an article id as having a generation in flight until dropped.
struct InFlight {
    state: AppState,
    id: String,
}

impl InFlight {
    fn claim(state: &AppState, id: &str) -> Option<Self> {
        let fresh = state.0.in_flight.lock().expect("in-flight lock poisoned").insert(id.to_string());
        fresh.then(|| InFlight {
            state: state.clone(),
            id: id.to_string(),
        })
    }
}

impl Drop for InFlight {
    fn drop(&mut self) {
        if let Ok(mut set) = self.state.0.in_flight.lock() {
            set.remove(&self.id);
        }
    }
}

enum GenerateFailure {
    Angle(AngleError),
    Store(CorpusError),
}

async fn post_angles(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<AngleSet>, ApiError> {
    let req: AngleRequest = if body.iter().all(u8::is_ascii_whitespace) {
        AngleRequest::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| state.error(StatusCode::BAD_REQUEST, format!("bad request body: {e}")))?
    };
    if !(req.threshold > 0.0 && req.threshold <= 1.0) {
        return Err(field_errors(&[FieldError::new("threshold", "must lie in (0, 1]")]));
    }
    let snapshot = state.snapshot();
    let article = snapshot
        .store()
        .article(&id)
        .cloned()
        .ok_or_else(|| state.error(StatusCode::NOT_FOUND, format!("unknown article {id:?}")))?;
    if !req.fresh {
        if let Some(cached) = article.angle_cache {
            return Ok(Json(cached));
        }
    }
    let guard = InFlight::claim(&state, &id).ok_or_else(|| {
        state.error(
            StatusCode::CONFLICT,
            format!("angle generation for {id:?} is already in progress"),
        )
    })?;

    let worker_state = state.clone();
    let options = GenerateOptions {
        fresh: req.fresh,
        threshold: req.threshold,
    };
    let outcome = tokio::task::spawn_blocking(move || {
        let inner = &worker_state.0;
        let mut article = article;
        let set = generate_angles(
            &mut article,
            inner.providers.angles.as_ref(),
            inner.providers.embed.as_ref(),
            &inner.params,
            options,
        )
        .map_err(GenerateFailure::Angle)?;
        let _lock = StoreLock::acquire(&inner.data_dir).map_err(GenerateFailure::Store)?;
        let mut store = snapshot.store.write().expect("store lock poisoned");
        if let Some(slot) = store.article_mut(&article.id) {
            slot.angle_cache = Some(set.clone());
        }
        store.save_angles().map_err(GenerateFailure::Store)?;
        Ok(set)
    })
    .await;
    drop(guard);

    match outcome {
        Ok(Ok(set)) => Ok(Json(set)),
        Ok(Err(GenerateFailure::Angle(e @ AngleError::InvalidParams(_)))) => {
            Err(state.error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
        }
        Ok(Err(GenerateFailure::Angle(e))) => Err(state.error(StatusCode::BAD_GATEWAY, e.to_string())),
        Ok(Err(GenerateFailure::Store(e @ CorpusError::Locked { .. }))) => {
            Err(state.error(StatusCode::SERVICE_UNAVAILABLE, e.to_string()))
        }
        Ok(Err(GenerateFailure::Store(e))) => Err(state.error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
        Err(e) => Err(state.error(StatusCode::INTERNAL_SERVER_ERROR, format!("generation task failed: {e}"))),
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct OutletSummary {
    pub outlet_id: String,
    pub name: String,
    pub url: String,
    pub outlet_type: OutletType,
    pub item_count: usize,
    pub embedded: bool,
    pub embedded_items: usize,
}

async fn get_outlets(State(state): State<AppState>) -> Json<Vec<OutletSummary>> {
    let snapshot = state.snapshot();
    let store = snapshot.store();
    let list = store
        .roster()
        .map(|o| {
            let embedded_items = snapshot.profiles.get(&o.outlet_id).map_or(0, |p| p.item_vectors.len());
            OutletSummary {
                outlet_id: o.outlet_id.clone(),
                name: o.name.clone(),
                url: o.url.clone(),
                outlet_type: o.outlet_type,
                item_count: store.outlet_items(&o.outlet_id).len(),
                embedded: embedded_items > 0,
                embedded_items,
            }
        })
        .collect();
    Json(list)
}

async fn get_about(State(state): State<AppState>) -> Json<Disclosure> {
    Json(state.0.disclosure.clone())
}

async fn post_reload(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let st = state.clone();
    match tokio::task::spawn_blocking(move || st.reload()).await {
        Ok(Ok(n)) => Ok(Json(json!({ "articles": n }))),
        Ok(Err(e)) => Err(state.error(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}"))),
        Err(e) => Err(state.error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        body: json!({ "error": "not found" }),
    }
}

pub fn router(state: AppState, ui_dir: Option<&Path>) -> Router {
    let mut app = Router::new()
        .route("/articles", get(get_articles))
        .route("/articles/{id}/angles", post(post_angles))
        .route("/outlets", get(get_outlets))
        .route("/about", get(get_about))
        .route("/admin/reload", post(post_reload));
    if let Some(dir) = ui_dir {
        app = app.nest_service("/ui", tower_http::services::ServeDir::new(dir));
    }
    app.fallback(not_found).with_state(state)
}

/// Builds the app state described by `config`.
pub fn build_state(config: &ApiConfig) -> anyhow::Result<AppState> {
    config.validate().map_err(anyhow::Error::msg)?;
    let providers = Providers {
        angles: angle_provider_for(config.providers, &config.endpoints, config.llm_rate_per_minute)?,
        embed: embedder_for(config.providers, &config.endpoints, &config.data_dir)?,
    };
    let snapshot = Snapshot::load(&config.data_dir)?;
    let disclosure = Disclosure::load(&config.data_dir).map_err(anyhow::Error::msg)?;
    Ok(AppState::new(
        &config.data_dir,
        snapshot,
        providers,
        disclosure,
        config.endpoints.secrets(),
        config.page_size_cap,
    ))
}

/// Serves until interrupted. Prints `listening on http://ADDR` once bound.
pub fn serve(config: &ApiConfig) -> anyhow::Result<()> {
    let state = build_state(config)?;
    let app = router(state.clone(), config.ui_dir.as_deref());
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let result = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(config.addr())
            .await
            .with_context(|| format!("binding {}", config.addr()))?;
        println!("listening on http://{}", listener.local_addr()?);
        use std::io::Write;
        std::io::stdout().flush()?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    });
    drop(runtime);
    // Blocking HTTP clients inside the providers must be dropped outside
    // the async runtime.
    drop(state);
    result
}
