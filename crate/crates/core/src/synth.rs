//! Seeded synthetic corpora for tests, benchmarks and demos.

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ArticleRecord, OutletItemRow};
use crate::newsworthiness::{ForestModel, TreeNode};
use crate::textfeat::{FeatureError, JargonTaxonomy, CS_CATEGORIES};

/// Small word list with easy, medium and hard tiers.
pub const SAMPLE_TAXONOMY_TSV: &str = include_str!("../data/taxonomy.tsv");

pub fn sample_taxonomy() -> Result<JargonTaxonomy, FeatureError> {
    JargonTaxonomy::from_tsv(SAMPLE_TAXONOMY_TSV)
}

const WORDS: &[&str] = &[
    "we", "show", "new", "model", "models", "data", "learning", "neural", "network", "robots", "privacy",
    "language", "images", "training", "benchmark", "accuracy", "people", "study", "results", "fast",
    "stochastic", "gradient", "transformer", "attention", "latent", "graph", "sensor", "health", "climate",
    "energy", "speech", "vision", "security", "fairness", "bias", "search", "medical", "social", "media",
    "quantum", "chips", "cars", "drones", "games", "music", "students", "doctors", "cities", "water", "2",
    "10", "100",
];

fn sentence(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).expect("nonempty")).collect();
    let mut s = words.join(" ");
    if let Some(first) = s.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    s
}

fn paragraph(rng: &mut ChaCha8Rng, sentences: usize) -> String {
    (0..sentences)
        .map(|_| format!("{}.", sentence(rng, 5, 14)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn categories(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.gen_range(1..=3);
    let mut cats: Vec<String> = CS_CATEGORIES
        .choose_multiple(rng, n)
        .map(|c| c.to_string())
        .collect();
    cats.dedup();
    cats
}

/// `n` valid articles dated across 2022. About `scored_fraction` of them
/// carry a newsworthiness score; scores are rounded to one decimal so ties
/// occur.
pub fn synthetic_articles(n: usize, seed: u64, scored_fraction: f64) -> Vec<ArticleRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date");
    (0..n)
        .map(|i| {
            let id = format!("22{:02}.{:05}", i % 12 + 1, i);
            let cats = categories(&mut rng);
            let n_sentences = rng.gen_range(2..=6);
            let score = rng
                .gen_bool(scored_fraction.clamp(0.0, 1.0))
                .then(|| (rng.gen_range(0.0..100.0f64) * 10.0).round() / 10.0);
            ArticleRecord {
                url: format!("https://arxiv.org/abs/{id}"),
                id,
                title: sentence(&mut rng, 3, 10),
                abstract_text: paragraph(&mut rng, n_sentences),
                primary_category: cats[0].clone(),
                categories: cats,
                published_date: start + Duration::days(rng.gen_range(0..365)),
                full_text: None,
                features: None,
                newsworthiness: score,
                angle_cache: None,
            }
        })
        .collect()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// An OAI-PMH `ListRecords` document in arXiv metadata format.
pub fn feed_xml(articles: &[ArticleRecord]) -> String {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<OAI-PMH xmlns=\"http://www.openarchives.org/OAI/2.0/\">\n<ListRecords>\n",
    );
    for a in articles {
        out.push_str(&format!(
            "<record><header><identifier>oai:arXiv.org:{id}</identifier><datestamp>{date}</datestamp></header>\
<metadata><arXiv xmlns=\"http://arxiv.org/OAI/arXiv/\"><id>{id}</id><created>{date}</created>\
<title>{title}</title><categories>{cats}</categories><abstract>{abs}</abstract></arXiv></metadata></record>\n",
            id = xml_escape(&a.id),
            date = a.published_date,
            title = xml_escape(&a.title),
            cats = xml_escape(&a.categories.join(" ")),
            abs = xml_escape(&a.abstract_text),
        ));
    }
    out.push_str("</ListRecords>\n</OAI-PMH>\n");
    out
}

/// News items for one outlet; every body ends with the same two footer
/// lines so boilerplate detection has something to find.
pub fn synthetic_outlet_items(outlet_id: &str, n: usize, seed: u64) -> Vec<OutletItemRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ xxhash_rust::xxh3::xxh3_64(outlet_id.as_bytes()));
    let start = NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date");
    (0..n)
        .map(|i| OutletItemRow {
            item_id: format!("{outlet_id}-{i:04}"),
            title: sentence(&mut rng, 4, 9),
            body: format!(
                "{}\n\n{}\nSubscribe to our newsletter\nAll rights reserved {outlet_id}",
                paragraph(&mut rng, 3),
                paragraph(&mut rng, 2)
            ),
            published_date: Some(start + Duration::days(rng.gen_range(0..365))),
        })
        .collect()
}

fn random_tree(rng: &mut ChaCha8Rng, depth: usize, n_features: usize) -> TreeNode {
    if depth == 0 || rng.gen_bool(0.25) {
        return TreeNode::leaf(rng.gen_range(0.0..100.0));
    }
    TreeNode::split(
        rng.gen_range(0..n_features),
        rng.gen_range(-1.0..1.0),
        random_tree(rng, depth - 1, n_features),
        random_tree(rng, depth - 1, n_features),
    )
}

/// A forest of random trees with leaves in [0, 100) and thresholds in
/// [-1, 1).
pub fn random_forest(seed: u64, n_trees: usize, max_depth: usize, n_features: usize) -> ForestModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..n_trees.max(1))
        .map(|_| random_tree(&mut rng, max_depth, n_features))
        .collect();
    ForestModel::new("synthetic", n_features, trees).expect("random forest is well formed")
}

/// Random unit-cube-ish vectors in [-1, 1).
pub fn random_rows(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}
