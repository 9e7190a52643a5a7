//! Transparency content served at `/about`.

use std::path::Path;

use serde::{Deserialize, Serialize};

pub const ABOUT_FILE: &str = "about.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disclosure {
    pub sections: Vec<Section>,
}

/// Keywords one section title must contain (case-insensitive) for each
/// required topic.
const REQUIRED_TOPICS: [&str; 4] = ["newsworthiness", "outlet relevance", "news angles", "data"];

impl Disclosure {
    /// Checks that the document has a section for each score, the angles
    /// and data provenance.
    pub fn validate(&self) -> Result<(), String> {
        let missing: Vec<&str> = REQUIRED_TOPICS
            .iter()
            .copied()
            .filter(|topic| {
                !self
                    .sections
                    .iter()
                    .any(|s| s.title.to_lowercase().contains(topic))
            })
            .collect();
        if !missing.is_empty() {
            return Err(format!("disclosure lacks sections for: {}", missing.join(", ")));
        }
        for s in &self.sections {
            if s.body.trim().is_empty() {
                return Err(format!("disclosure section {:?} has an empty body", s.title));
            }
            if let Some(bad) = s.references.iter().find(|r| !r.starts_with("http://") && !r.starts_with("https://")) {
                return Err(format!("section {:?}: reference {bad:?} is not a URL", s.title));
            }
        }
        Ok(())
    }

    /// Reads `about.json` from the data directory, falling back to the
    /// built-in document when the file is absent.
    pub fn load(data_dir: &Path) -> Result<Self, String> {
        let path = data_dir.join(ABOUT_FILE);
        let doc = match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Disclosure::default(),
            Err(e) => return Err(format!("{}: {e}", path.display())),
        };
        doc.validate().map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(doc)
    }
}

fn section(title: &str, body: &str, references: &[&str]) -> Section {
    Section {
        title: title.into(),
        body: body.into(),
        references: references.iter().map(|r| r.to_string()).collect(),
    }
}

impl Default for Disclosure {
    fn default() -> Self {
        Disclosure {
            sections: vec![
                section(
                    "Newsworthiness score",
                    "Each preprint gets a score from 0 to 100. Crowd workers rated a sample of abstracts on \
                     actuality, controversy, impact magnitude and impact valence; the mean of those four ratings \
                     is the training target. A random forest trained on text features of the abstract (length, \
                     sentence count, word length, share of easy, medium and hard vocabulary, share of numbers, \
                     title length and arXiv categories) predicts the score for new preprints. The score reflects \
                     how lay readers rated similar abstracts, not an editorial judgement, and can be wrong.",
                    &["https://en.wikipedia.org/wiki/Random_forest"],
                ),
                section(
                    "Outlet relevance score",
                    "For each selected outlet, the abstract is compared with that outlet's past news items using \
                     cosine similarity of sentence embeddings. The score is the mean of the top tenth of those \
                     similarities (at least one item), averaged across the selected outlets. It ranges from -1 to 1 \
                     and describes topical resemblance to past coverage only.",
                    &["https://en.wikipedia.org/wiki/Cosine_similarity"],
                ),
                section(
                    "News angles",
                    "Three candidate headlines are generated by a large language model prompted with \"List three \
                     newsworthy headlines for this abstract:\" followed by the title and abstract. Angles may be \
                     inaccurate or exaggerated and must be checked against the preprint itself. Angles that nearly \
                     repeat the abstract or an earlier angle are marked as redundant.",
                    &[],
                ),
                section(
                    "Data provenance",
                    "Preprint metadata (title, abstract, categories, date, link) is harvested from arXiv's public \
                     metadata interface. Outlet histories come from publicly available news items of the listed \
                     outlets, cleaned of repeated boilerplate lines. No personal data about readers is collected.",
                    &["https://info.arxiv.org/help/oa/index.html"],
                ),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_covers_required_topics() {
        Disclosure::default().validate().unwrap();
    }

    #[test]
    fn missing_section_rejected() {
        let mut d = Disclosure::default();
        d.sections.remove(2);
        assert!(d.validate().unwrap_err().contains("news angles"));
    }

    #[test]
    fn loads_from_file_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(Disclosure::load(dir.path()).unwrap(), Disclosure::default());
        let mut d = Disclosure::default();
        d.sections[0].body = "Custom text.".into();
        std::fs::write(dir.path().join(ABOUT_FILE), serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(Disclosure::load(dir.path()).unwrap(), d);
    }
}
