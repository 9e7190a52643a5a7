#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use cnd_core::angles::AngleProvider;
use cnd_core::corpus::{default_outlet_roster, BoilerplateConfig, CorpusStore};
use cnd_core::relevance::StubEmbedder;
use cnd_core::synth::{synthetic_articles, synthetic_outlet_items};
use cnd_server::api::{router, AppState, Providers, Snapshot};
use cnd_server::disclosure::Disclosure;
use cnd_server::pipeline;
use tower::ServiceExt;

pub const DIM: usize = 64;
pub const SEED: u64 = 11;
pub const SECRET: &str = "sk-test-0123456789";

pub fn embedder() -> StubEmbedder {
    StubEmbedder { dim: DIM, seed: SEED }
}

/// A data directory with 60 synthetic articles (about 80% scored), the
/// default roster, items for `wired` and `vox`, and stub vectors.
pub fn seeded_dir(dir: &Path) {
    let mut store = CorpusStore::new(dir);
    store.set_roster(default_outlet_roster());
    for a in synthetic_articles(60, 5, 0.8) {
        store.upsert_article(a).unwrap();
    }
    for (outlet, n) in [("wired", 30), ("vox", 12)] {
        store
            .ingest_outlet_items(outlet, synthetic_outlet_items(outlet, n, 3), BoilerplateConfig::default())
            .unwrap();
    }
    store.save().unwrap();
    pipeline::embed(dir, &embedder(), Some(SEED), pipeline::DEFAULT_CHAR_BUDGET).unwrap();
}

pub fn state_with(dir: &Path, angles: Arc<dyn AngleProvider>) -> AppState {
    let snapshot = Snapshot::load(dir).unwrap();
    AppState::new(
        dir,
        snapshot,
        Providers {
            angles,
            embed: Arc::new(embedder()),
        },
        Disclosure::default(),
        vec![SECRET.to_string()],
        200,
    )
}

pub async fn send(app: &Router, method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, String) {
    send(app, "GET", uri, "").await
}

pub fn app(state: AppState) -> Router {
    router(state, None)
}
