//! Outlet relevance: how close an article sits to the part of an outlet's
//! past coverage it most resembles.
//!
//! The score for one (article, outlet) pair is the mean of the top decile
//! of cosine similarities between the article embedding and the outlet's
//! item embeddings, with `k = max(1, floor(n / 10))`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::OutletProfile;
use crate::textfeat::tokenize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelevanceError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("embedding must have dim >= 1 and finite values")]
    InvalidVector,
    #[error("no items for outlet {0}")]
    NoItems(String),
    #[error("no relevance results to combine")]
    NoResults,
    #[error("text has no tokens to embed")]
    NoTokens,
    #[error("embedding provider: {0}")]
    Provider(String),
    #[error("vector file {path}: {message}")]
    VectorFile { path: String, message: String },
}

/// A dense embedding with finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RelevanceError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(RelevanceError::InvalidVector);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = RelevanceError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        EmbeddingVector::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// Turns texts into embeddings of one fixed dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// One vector per input text, in order.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RelevanceError>;

    /// Short name recorded in provenance metadata.
    fn name(&self) -> &str;
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RelevanceError> {
    if a.dim() != b.dim() {
        return Err(RelevanceError::DimMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(RelevanceError::ZeroNorm);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Number of top similarities averaged for an outlet with `n_items` items.
pub fn top_decile_k(n_items: usize) -> usize {
    (n_items / 10).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceResult {
    pub article_id: String,
    pub outlet_id: String,
    pub score: f64,
    pub k_used: usize,
    pub n_items: usize,
}

/// Mean of the `k` largest values of `sims`, summed in descending order.
fn mean_of_top_k(sims: &mut [f64], k: usize) -> f64 {
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    if k < sims.len() {
        sims.select_nth_unstable_by(k - 1, desc);
    }
    let top = &mut sims[..k];
    top.sort_unstable_by(desc);
    top.iter().sum::<f64>() / k as f64
}

/// Relevance of one article embedding to one outlet.
pub fn outlet_relevance(
    article_id: &str,
    article_vec: &EmbeddingVector,
    outlet: &OutletProfile,
) -> Result<RelevanceResult, RelevanceError> {
    let n = outlet.item_vectors.len();
    if n == 0 {
        return Err(RelevanceError::NoItems(outlet.outlet_id.clone()));
    }
    let mut sims = outlet
        .item_vectors
        .iter()
        .map(|item| cosine(article_vec, item))
        .collect::<Result<Vec<_>, _>>()?;
    let k = top_decile_k(n);
    Ok(RelevanceResult {
        article_id: article_id.to_string(),
        outlet_id: outlet.outlet_id.clone(),
        score: mean_of_top_k(&mut sims, k),
        k_used: k,
        n_items: n,
    })
}

/// Unweighted mean of per-outlet scores for one article.
pub fn multi_outlet_relevance(results: &[RelevanceResult]) -> Result<f64, RelevanceError> {
    if results.is_empty() {
        return Err(RelevanceError::NoResults);
    }
    Ok(results.iter().map(|r| r.score).sum::<f64>() / results.len() as f64)
}

/// Relevance of every article against every outlet: one row per article,
/// one column per outlet, in input order.
pub fn relevance_matrix(
    articles: &[(String, EmbeddingVector)],
    outlets: &[OutletProfile],
) -> Result<Vec<Vec<RelevanceResult>>, RelevanceError> {
    crate::par::try_map(articles, |(id, vec)| {
        outlets.iter().map(|o| outlet_relevance(id, vec, o)).collect()
    })
}

fn token_hash(token: &str, seed: u64) -> u64 {
    xxhash_rust::xxh3::xxh3_64_with_seed(token.as_bytes(), seed)
}

/// Deterministic hashed bag-of-tokens embedding, L2-normalized.
///
/// Each token adds ±1 at an index chosen by a seeded hash; the sign comes
/// from the top hash bit. If the signed counts cancel to zero, the text's
/// full token sequence is hashed to a single index instead.
pub fn stub_embed(text: &str, dim: usize, seed: u64) -> Result<EmbeddingVector, RelevanceError> {
    if dim == 0 {
        return Err(RelevanceError::InvalidVector);
    }
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(RelevanceError::NoTokens);
    }
    let mut v = vec![0.0f64; dim];
    for t in &tokens {
        let h = token_hash(t, seed);
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    let mut norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        let h = token_hash(&tokens.join(" "), seed);
        v[(h % dim as u64) as usize] = 1.0;
        norm = 1.0;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    EmbeddingVector::new(v)
}

/// Offline provider backed by [`stub_embed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl EmbeddingProvider for StubEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RelevanceError> {
        crate::par::try_map(texts, |t| stub_embed(t, self.dim, self.seed))
    }

    fn name(&self) -> &str {
        "stub"
    }
}

/// Text embedded for an outlet item: title and body, cut to `char_budget`
/// characters.
pub fn item_text(title: &str, body: &str, char_budget: usize) -> String {
    let joined = if title.is_empty() {
        body.to_string()
    } else {
        format!("{title}\n{body}")
    };
    joined.chars().take(char_budget).collect()
}

/// Paths of the vector file and its id sidecar for `name` under `dir`.
pub fn vector_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.f32")), dir.join(format!("{name}.ids")))
}

/// Writes vectors as little-endian `u32 dim, u32 count, count*dim f32`,
/// plus a sidecar with one id per line.
pub fn write_vectors(dir: &Path, name: &str, ids: &[String], vectors: &[EmbeddingVector]) -> Result<(), RelevanceError> {
    let (vec_path, ids_path) = vector_paths(dir, name);
    let file_err = |path: &Path, message: String| RelevanceError::VectorFile {
        path: path.display().to_string(),
        message,
    };
    if ids.len() != vectors.len() {
        return Err(file_err(&vec_path, format!("{} ids for {} vectors", ids.len(), vectors.len())));
    }
    let dim = vectors.first().map_or(0, EmbeddingVector::dim);
    if vectors.iter().any(|v| v.dim() != dim) {
        return Err(file_err(&vec_path, "vectors differ in dimension".into()));
    }
    if let Some(bad) = ids.iter().find(|id| id.contains('\n') || id.is_empty()) {
        return Err(file_err(&ids_path, format!("id {bad:?} cannot be stored one per line")));
    }
    let mut buf = Vec::with_capacity(8 + 4 * dim * vectors.len());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
    for v in vectors {
        for x in v.values() {
            buf.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    let mut id_text = ids.join("\n");
    if !ids.is_empty() {
        id_text.push('\n');
    }
    fs::create_dir_all(dir).map_err(|e| file_err(dir, e.to_string()))?;
    crate::corpus::write_atomic(&vec_path, &buf).map_err(|e| file_err(&vec_path, e.to_string()))?;
    crate::corpus::write_atomic(&ids_path, id_text.as_bytes()).map_err(|e| file_err(&ids_path, e.to_string()))
}

/// Reads a vector file and its sidecar. Returns `Ok(None)` when the vector
/// file does not exist.
pub fn read_vectors(dir: &Path, name: &str) -> Result<Option<(Vec<String>, Vec<EmbeddingVector>)>, RelevanceError> {
    let (vec_path, ids_path) = vector_paths(dir, name);
    let file_err = |path: &Path, message: String| RelevanceError::VectorFile {
        path: path.display().to_string(),
        message,
    };
    let bytes = match fs::read(&vec_path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(file_err(&vec_path, e.to_string())),
    };
    if bytes.len() < 8 {
        return Err(file_err(&vec_path, "truncated header".into()));
    }
    let dim = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let expected = 8 + 4 * dim * count;
    if bytes.len() != expected {
        return Err(file_err(
            &vec_path,
            format!("expected {expected} bytes for {count} x {dim} floats, found {}", bytes.len()),
        ));
    }
    let floats: Vec<f64> = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let vectors = if dim == 0 {
        Vec::new()
    } else {
        floats
            .chunks_exact(dim)
            .map(|c| EmbeddingVector::new(c.to_vec()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| file_err(&vec_path, e.to_string()))?
    };
    let id_text = fs::read_to_string(&ids_path).map_err(|e| file_err(&ids_path, e.to_string()))?;
    let ids: Vec<String> = id_text.lines().map(str::to_string).collect();
    if ids.len() != count || vectors.len() != count {
        return Err(file_err(
            &ids_path,
            format!("{} ids for {count} vectors", ids.len()),
        ));
    }
    Ok(Some((ids, vectors)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{OutletInfo, OutletType};
    use proptest::prelude::*;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn outlet(items: Vec<EmbeddingVector>) -> OutletProfile {
        OutletProfile::new(
            OutletInfo {
                outlet_id: "o".into(),
                name: "O".into(),
                url: "https://o.example/".into(),
                outlet_type: OutletType::GeneralNews,
            },
            items,
        )
        .unwrap()
    }

    /// Unit vector in 2-D with the given cosine to (1, 0).
    fn at_cos(c: f64) -> EmbeddingVector {
        ev(&[c, (1.0 - c * c).max(0.0).sqrt()])
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&ev(&[3.0, 4.0]), &ev(&[3.0, 4.0])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&ev(&[1.0, 0.0]), &ev(&[0.0, 1.0])).unwrap(), 0.0);
        assert!((cosine(&ev(&[1.0, 2.0]), &ev(&[2.0, 1.0])).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(cosine(&ev(&[1.0]), &ev(&[1.0, 0.0])), Err(RelevanceError::DimMismatch(1, 2)));
        assert_eq!(cosine(&ev(&[0.0, 0.0]), &ev(&[1.0, 0.0])), Err(RelevanceError::ZeroNorm));
        assert!(EmbeddingVector::new(vec![]).is_err());
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn twenty_items_top_two() {
        let items = (1..=20).map(|i| at_cos(0.05 * i as f64)).collect();
        let r = outlet_relevance("a", &ev(&[1.0, 0.0]), &outlet(items)).unwrap();
        assert_eq!(r.k_used, 2);
        assert_eq!(r.n_items, 20);
        assert!((r.score - 0.975).abs() < 1e-12, "{}", r.score);
    }

    #[test]
    fn small_outlet_uses_max() {
        let items: Vec<_> = [0.1, 0.7, 0.3, 0.2, 0.5].iter().map(|&c| at_cos(c)).collect();
        let r = outlet_relevance("a", &ev(&[1.0, 0.0]), &outlet(items)).unwrap();
        assert_eq!(r.k_used, 1);
        assert!((r.score - 0.7).abs() < 1e-12);
    }

    #[test]
    fn identical_items_score_one() {
        let a = ev(&[0.3, -0.2, 0.9]);
        let r = outlet_relevance("a", &a, &outlet(vec![a.clone(); 37])).unwrap();
        assert!((r.score - 1.0).abs() < 1e-12);
        assert_eq!(r.k_used, 3);
    }

    #[test]
    fn empty_outlet_errors() {
        let err = outlet_relevance("a", &ev(&[1.0]), &outlet(vec![])).unwrap_err();
        assert_eq!(err.to_string(), "no items for outlet o");
    }

    #[test]
    fn k_formula() {
        assert_eq!(top_decile_k(1), 1);
        assert_eq!(top_decile_k(9), 1);
        assert_eq!(top_decile_k(10), 1);
        assert_eq!(top_decile_k(19), 1);
        assert_eq!(top_decile_k(20), 2);
        assert_eq!(top_decile_k(200), 20);
    }

    #[test]
    fn multi_outlet_examples() {
        let r = |s: f64| RelevanceResult {
            article_id: "a".into(),
            outlet_id: "o".into(),
            score: s,
            k_used: 1,
            n_items: 1,
        };
        assert!((multi_outlet_relevance(&[r(0.4), r(0.6)]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(multi_outlet_relevance(&[r(0.3)]).unwrap(), 0.3);
        assert!((multi_outlet_relevance(&[r(0.2), r(0.3), r(0.7)]).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(multi_outlet_relevance(&[]), Err(RelevanceError::NoResults));
    }

    #[test]
    fn stub_is_deterministic_and_normalized() {
        let a = stub_embed("Neural networks for protein folding", 64, 7).unwrap();
        assert_eq!(a, stub_embed("Neural networks for protein folding", 64, 7).unwrap());
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert_ne!(a, stub_embed("Neural networks for protein folding", 64, 8).unwrap());
        assert_eq!(stub_embed("", 8, 0), Err(RelevanceError::NoTokens));
        assert_eq!(stub_embed("x", 0, 0), Err(RelevanceError::InvalidVector));
        let tiny = stub_embed("a b c d e f", 1, 3).unwrap();
        assert!((tiny.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stub_disjoint_texts_are_dissimilar() {
        let texts = [
            "quantum error correction surface codes",
            "municipal budget vote delayed again",
            "transformer language models scale",
            "coral reef bleaching ocean heat",
        ];
        let vs: Vec<_> = texts.iter().map(|t| stub_embed(t, 1024, 42).unwrap()).collect();
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                assert!(cosine(&vs[i], &vs[j]).unwrap().abs() < 0.5);
            }
        }
    }

    #[test]
    fn vector_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        let vs = vec![ev(&[0.5, -0.25, 1.0]), ev(&[1.0, 2.0, 3.0])];
        write_vectors(dir.path(), "wired", &ids, &vs).unwrap();
        let bytes = fs::read(dir.path().join("wired.f32")).unwrap();
        assert_eq!(&bytes[0..8], &[3, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &0.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 8 + 4 * 6);
        assert_eq!(fs::read_to_string(dir.path().join("wired.ids")).unwrap(), "a\nb\n");
        let (rids, rvs) = read_vectors(dir.path(), "wired").unwrap().unwrap();
        assert_eq!(rids, ids);
        assert_eq!(rvs, vs);
        assert_eq!(read_vectors(dir.path(), "missing").unwrap(), None);

        fs::write(dir.path().join("wired.ids"), "a\n").unwrap();
        assert!(read_vectors(dir.path(), "wired").is_err());
    }

    fn oracle(article: &EmbeddingVector, items: &[EmbeddingVector]) -> f64 {
        let mut sims: Vec<f64> = items.iter().map(|i| cosine(article, i).unwrap()).collect();
        sims.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let k = std::cmp::max(1, items.len() / 10);
        sims[..k].iter().sum::<f64>() / k as f64
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = EmbeddingVector> {
        prop::collection::vec(-1.0f64..1.0, dim)
            .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
            .prop_map(EmbeddingVector)
    }

    proptest! {
        #[test]
        fn relevance_matches_oracle_and_ignores_order(
            (article, items) in (2usize..6).prop_flat_map(|d| (vec_strategy(d), prop::collection::vec(vec_strategy(d), 1..60))),
            rot in 0usize..60,
        ) {
            let r = outlet_relevance("a", &article, &outlet(items.clone())).unwrap();
            prop_assert!((r.score - oracle(&article, &items)).abs() <= 1e-9);
            let mut rotated = items.clone();
            let len = rotated.len();
            rotated.rotate_left(rot % len);
            rotated.reverse();
            let r2 = outlet_relevance("a", &article, &outlet(rotated)).unwrap();
            prop_assert!((r.score - r2.score).abs() <= 1e-12);
        }

        #[test]
        fn adding_low_item_keeps_selection(
            (article, items) in (2usize..5).prop_flat_map(|d| (vec_strategy(d), prop::collection::vec(vec_strategy(d), 1..40))),
        ) {
            let n = items.len();
            let k = top_decile_k(n);
            prop_assume!(top_decile_k(n + 1) == k);
            let mut sims: Vec<f64> = items.iter().map(|i| cosine(&article, i).unwrap()).collect();
            sims.sort_by(|a, b| b.total_cmp(a));
            // the negated article has cosine -1, below any k-th largest
            let low = EmbeddingVector(article.values().iter().map(|x| -x).collect());
            prop_assume!(sims[k - 1] > -1.0);
            let before = outlet_relevance("a", &article, &outlet(items.clone())).unwrap();
            let mut more = items;
            more.push(low);
            let after = outlet_relevance("a", &article, &outlet(more)).unwrap();
            prop_assert_eq!(before.k_used, after.k_used);
            prop_assert!((before.score - after.score).abs() <= 1e-12);
        }

        #[test]
        fn stub_norm_is_one(text in "[a-z]{1,8}( [a-z]{1,8}){0,10}", dim in 1usize..300, seed in any::<u64>()) {
            let v = stub_embed(&text, dim, seed).unwrap();
            prop_assert!((v.norm() - 1.0).abs() <= 1e-9);
        }
    }
}
