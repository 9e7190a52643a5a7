//! On-disk corpus layout.
//!
//! ```text
//! <data_dir>/
//!   articles.ndjson          one article per line
//!   features.ndjson          {id, schema_version, values}
//!   angles.ndjson            cached angle sets
//!   outlets.json             outlet roster
//!   outlets/<outlet_id>.ndjson
//! ```
//!
//! Files are rewritten whole through a temp file and rename, so readers
//! never observe a half-written file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    clean_news_text, detect_boilerplate, ArticleRecord, BoilerplateConfig, FeedParse, InvalidRecord, OutletInfo,
    OutletNewsItem,
};
use crate::angles::AngleSet;
use crate::textfeat::FeatureVector;

pub const ARTICLES_FILE: &str = "articles.ndjson";
pub const FEATURES_FILE: &str = "features.ndjson";
pub const ANGLES_FILE: &str = "angles.ndjson";
pub const ROSTER_FILE: &str = "outlets.json";
pub const OUTLETS_DIR: &str = "outlets";
pub const VECTORS_DIR: &str = "vectors";
const LOCK_FILE: &str = ".cnd.lock";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Line { path: PathBuf, line: usize, message: String },
    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },
    #[error("invalid record {id:?}: {problems}")]
    Invalid { id: String, problems: InvalidRecord },
    #[error("unknown outlet {0:?}; add it to {ROSTER_FILE} first")]
    UnknownOutlet(String),
    #[error("data directory {} is locked by another writer ({})", dir.display(), LOCK_FILE)]
    Locked { dir: PathBuf },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Row layout of `articles.ndjson`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArticleRow {
    id: String,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
    url: String,
    primary_category: String,
    categories: Vec<String>,
    published_date: NaiveDate,
    #[serde(default)]
    full_text: Option<String>,
    #[serde(default)]
    newsworthiness: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureRow {
    id: String,
    #[serde(flatten)]
    features: FeatureVector,
}

/// Row layout of `outlets/<outlet_id>.ndjson`, also accepted as ingest input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutletItemRow {
    pub item_id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub published_date: Option<NaiveDate>,
}

/// Counts from one ingestion run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub added: usize,
    pub replaced: usize,
    pub skipped: usize,
}

/// In-memory view of a data directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusStore {
    data_dir: PathBuf,
    articles: BTreeMap<String, ArticleRecord>,
    roster: IndexMap<String, OutletInfo>,
    outlet_items: BTreeMap<String, IndexMap<String, OutletNewsItem>>,
}

impl CorpusStore {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        CorpusStore {
            data_dir: data_dir.into(),
            ..Default::default()
        }
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn vectors_dir(&self) -> PathBuf {
        self.data_dir.join(VECTORS_DIR)
    }

    /// Loads every corpus file present under `data_dir`. Missing files are
    /// treated as empty.
    pub fn load(data_dir: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let mut store = CorpusStore::new(data_dir);
        let dir = store.data_dir.clone();

        let roster_path = dir.join(ROSTER_FILE);
        if roster_path.exists() {
            let bytes = fs::read(&roster_path).map_err(io_err(&roster_path))?;
            let roster: Vec<OutletInfo> = serde_json::from_slice(&bytes).map_err(|e| CorpusError::File {
                path: roster_path.clone(),
                message: e.to_string(),
            })?;
            store.set_roster(roster);
        }

        for (line, row) in read_ndjson::<ArticleRow>(&dir.join(ARTICLES_FILE))? {
            let record = ArticleRecord {
                id: row.id,
                title: row.title,
                abstract_text: row.abstract_text,
                url: row.url,
                primary_category: row.primary_category,
                categories: row.categories,
                published_date: row.published_date,
                full_text: row.full_text,
                features: None,
                newsworthiness: row.newsworthiness,
                angle_cache: None,
            };
            record.validate().map_err(|problems| CorpusError::Line {
                path: dir.join(ARTICLES_FILE),
                line,
                message: problems.to_string(),
            })?;
            store.articles.insert(record.id.clone(), record);
        }

        let features_path = dir.join(FEATURES_FILE);
        for (line, row) in read_ndjson::<FeatureRow>(&features_path)? {
            let article = store.articles.get_mut(&row.id).ok_or_else(|| CorpusError::Line {
                path: features_path.clone(),
                line,
                message: format!("features for unknown article {:?}", row.id),
            })?;
            article.features = Some(row.features);
        }

        let angles_path = dir.join(ANGLES_FILE);
        for (line, set) in read_ndjson::<AngleSet>(&angles_path)? {
            set.validate().map_err(|message| CorpusError::Line {
                path: angles_path.clone(),
                line,
                message,
            })?;
            let article = store.articles.get_mut(&set.article_id).ok_or_else(|| CorpusError::Line {
                path: angles_path.clone(),
                line,
                message: format!("angles for unknown article {:?}", set.article_id),
            })?;
            article.angle_cache = Some(set);
        }

        let outlets_dir = dir.join(OUTLETS_DIR);
        if outlets_dir.is_dir() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&outlets_dir)
                .map_err(io_err(&outlets_dir))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
                .collect();
            paths.sort();
            for path in paths {
                let outlet_id = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default()
                    .to_string();
                let mut items = IndexMap::new();
                for (line, row) in read_ndjson::<OutletItemRow>(&path)? {
                    if row.item_id.is_empty() || row.body.trim().is_empty() {
                        return Err(CorpusError::Line {
                            path: path.clone(),
                            line,
                            message: "item_id and body must be nonempty".into(),
                        });
                    }
                    items.insert(
                        row.item_id.clone(),
                        OutletNewsItem {
                            outlet_id: outlet_id.clone(),
                            item_id: row.item_id,
                            title: row.title,
                            body: row.body,
                            published_date: row.published_date,
                        },
                    );
                }
                store.outlet_items.insert(outlet_id, items);
            }
        }
        Ok(store)
    }

    /// Writes every corpus file. Requires the caller to hold the store lock
    /// when other processes may write concurrently.
    pub fn save(&self) -> Result<(), CorpusError> {
        let dir = &self.data_dir;
        fs::create_dir_all(dir).map_err(io_err(dir))?;

        let roster: Vec<&OutletInfo> = self.roster.values().collect();
        let mut roster_json = serde_json::to_vec_pretty(&roster).expect("roster serializes");
        roster_json.push(b'\n');
        write_atomic(&dir.join(ROSTER_FILE), &roster_json)?;

        let rows = self.articles.values().map(|a| ArticleRow {
            id: a.id.clone(),
            title: a.title.clone(),
            abstract_text: a.abstract_text.clone(),
            url: a.url.clone(),
            primary_category: a.primary_category.clone(),
            categories: a.categories.clone(),
            published_date: a.published_date,
            full_text: a.full_text.clone(),
            newsworthiness: a.newsworthiness,
        });
        write_ndjson(&dir.join(ARTICLES_FILE), rows)?;

        let features = self.articles.values().filter_map(|a| {
            a.features.clone().map(|features| FeatureRow {
                id: a.id.clone(),
                features,
            })
        });
        write_ndjson(&dir.join(FEATURES_FILE), features)?;
        self.save_angles()?;

        let outlets_dir = dir.join(OUTLETS_DIR);
        fs::create_dir_all(&outlets_dir).map_err(io_err(&outlets_dir))?;
        for (outlet_id, items) in &self.outlet_items {
            let rows = items.values().map(|i| OutletItemRow {
                item_id: i.item_id.clone(),
                title: i.title.clone(),
                body: i.body.clone(),
                published_date: i.published_date,
            });
            write_ndjson(&outlets_dir.join(format!("{outlet_id}.ndjson")), rows)?;
        }
        Ok(())
    }

    /// Rewrites only `angles.ndjson`.
    pub fn save_angles(&self) -> Result<(), CorpusError> {
        let sets = self.articles.values().filter_map(|a| a.angle_cache.as_ref());
        write_ndjson(&self.data_dir.join(ANGLES_FILE), sets)
    }

    pub fn articles(&self) -> impl ExactSizeIterator<Item = &ArticleRecord> {
        self.articles.values()
    }

    pub fn articles_mut(&mut self) -> impl Iterator<Item = &mut ArticleRecord> {
        self.articles.values_mut()
    }

    pub fn article(&self, id: &str) -> Option<&ArticleRecord> {
        self.articles.get(id)
    }

    pub fn article_mut(&mut self, id: &str) -> Option<&mut ArticleRecord> {
        self.articles.get_mut(id)
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    /// Inserts or replaces an article; the latest record for an id wins.
    /// Returns true when an existing record was replaced.
    pub fn upsert_article(&mut self, record: ArticleRecord) -> Result<bool, CorpusError> {
        record.validate().map_err(|problems| CorpusError::Invalid {
            id: record.id.clone(),
            problems,
        })?;
        Ok(self.articles.insert(record.id.clone(), record).is_some())
    }

    /// Adds parsed feed records. A re-harvested id replaces the stored record
    /// but keeps any score, features and cached angles already computed
    /// when title and abstract are unchanged.
    pub fn ingest_feed(&mut self, parsed: FeedParse) -> Result<IngestReport, CorpusError> {
        let mut report = IngestReport {
            skipped: parsed.skipped,
            ..Default::default()
        };
        for mut record in parsed.records {
            if let Some(old) = self.articles.get(&record.id) {
                if old.title == record.title && old.abstract_text == record.abstract_text {
                    record.features = record.features.or_else(|| old.features.clone());
                    record.newsworthiness = record.newsworthiness.or(old.newsworthiness);
                    record.angle_cache = record.angle_cache.or_else(|| old.angle_cache.clone());
                }
            }
            if self.upsert_article(record)? {
                report.replaced += 1;
            } else {
                report.added += 1;
            }
        }
        Ok(report)
    }

    pub fn roster(&self) -> impl ExactSizeIterator<Item = &OutletInfo> {
        self.roster.values()
    }

    pub fn outlet(&self, outlet_id: &str) -> Option<&OutletInfo> {
        self.roster.get(outlet_id)
    }

    pub fn set_roster(&mut self, roster: Vec<OutletInfo>) {
        self.roster = roster.into_iter().map(|o| (o.outlet_id.clone(), o)).collect();
    }

    /// Items for one outlet in ingestion order.
    pub fn outlet_items(&self, outlet_id: &str) -> Vec<&OutletNewsItem> {
        self.outlet_items
            .get(outlet_id)
            .map(|m| m.values().collect())
            .unwrap_or_default()
    }

    /// Cleans and stores news items for a rostered outlet.
    ///
    /// Boilerplate lines are detected over the incoming batch. Items whose
    /// body is empty after cleaning, or that lack an item id, are skipped.
    pub fn ingest_outlet_items(
        &mut self,
        outlet_id: &str,
        rows: Vec<OutletItemRow>,
        config: BoilerplateConfig,
    ) -> Result<IngestReport, CorpusError> {
        if !self.roster.contains_key(outlet_id) {
            return Err(CorpusError::UnknownOutlet(outlet_id.to_string()));
        }
        let bodies: Vec<&str> = rows.iter().map(|r| r.body.as_str()).collect();
        let boilerplate = detect_boilerplate(&bodies, config);
        let items = self.outlet_items.entry(outlet_id.to_string()).or_default();
        let mut report = IngestReport::default();
        for row in rows {
            let body = clean_news_text(&row.body, &boilerplate);
            if row.item_id.trim().is_empty() || body.is_empty() {
                report.skipped += 1;
                continue;
            }
            let item = OutletNewsItem {
                outlet_id: outlet_id.to_string(),
                item_id: row.item_id.clone(),
                title: crate::corpus::collapse_whitespace(&row.title),
                body,
                published_date: row.published_date,
            };
            if items.insert(row.item_id, item).is_some() {
                report.replaced += 1;
            } else {
                report.added += 1;
            }
        }
        Ok(report)
    }
}

/// Splits the corpus into articles published strictly before `cutoff` and
/// the rest.
pub fn partition_by_date(store: &CorpusStore, cutoff: NaiveDate) -> (Vec<ArticleRecord>, Vec<ArticleRecord>) {
    store.articles().cloned().partition(|a| a.published_date < cutoff)
}

/// Exclusive writer lock on a data directory, released on drop.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl StoreLock {
    pub fn acquire(data_dir: &Path) -> Result<Self, CorpusError> {
        fs::create_dir_all(data_dir).map_err(io_err(data_dir))?;
        let path = data_dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(StoreLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(CorpusError::Locked {
                dir: data_dir.to_path_buf(),
            }),
            Err(e) => Err(CorpusError::Io { path, source: e }),
        }
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Reads a newline-delimited JSON file, returning (1-based line, value)
/// pairs. Blank lines are ignored; a missing file reads as empty.
pub fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, CorpusError> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| CorpusError::Line {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push((idx + 1, value));
    }
    Ok(out)
}

pub fn write_ndjson<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, &row).map_err(|e| CorpusError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}
