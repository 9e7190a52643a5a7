//! OAI-PMH harvest parsing (`arXiv` metadata format).
//!
//! Each `<record>` element becomes one [`ArticleRecord`]. Field elements are
//! matched by local name so namespace prefixes do not matter:
//!
//! | element        | used for                                        |
//! |----------------|-------------------------------------------------|
//! | `id`           | article id (falls back to header `identifier`)  |
//! | `title`        | title                                           |
//! | `abstract`     | abstract                                        |
//! | `categories`   | space-separated list, first entry is primary    |
//! | `created`      | publication date (falls back to `datestamp`)    |

use chrono::NaiveDate;
use quick_xml::escape::resolve_predefined_entity;
use quick_xml::events::Event;
use quick_xml::Reader;
use thiserror::Error;

use super::{collapse_whitespace, ArticleRecord};

const OAI_ID_PREFIX: &str = "oai:arXiv.org:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed feed at byte {offset}: {message}")]
pub struct FeedError {
    pub offset: u64,
    pub message: String,
}

/// Records parsed from one feed plus the number of record elements skipped
/// because they did not form a valid article.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeedParse {
    pub records: Vec<ArticleRecord>,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Id,
    Identifier,
    Title,
    Abstract,
    Categories,
    Created,
    Datestamp,
}

impl Field {
    fn from_local_name(name: &[u8]) -> Option<Field> {
        Some(match name {
            b"id" => Field::Id,
            b"identifier" => Field::Identifier,
            b"title" => Field::Title,
            b"abstract" => Field::Abstract,
            b"categories" => Field::Categories,
            b"created" => Field::Created,
            b"datestamp" => Field::Datestamp,
            _ => return None,
        })
    }
}

#[derive(Debug, Default)]
struct RawRecord {
    id: Option<String>,
    identifier: Option<String>,
    title: Option<String>,
    abstract_text: Option<String>,
    categories: Option<String>,
    created: Option<String>,
    datestamp: Option<String>,
    deleted: bool,
}

impl RawRecord {
    fn slot(&mut self, field: Field) -> &mut Option<String> {
        match field {
            Field::Id => &mut self.id,
            Field::Identifier => &mut self.identifier,
            Field::Title => &mut self.title,
            Field::Abstract => &mut self.abstract_text,
            Field::Categories => &mut self.categories,
            Field::Created => &mut self.created,
            Field::Datestamp => &mut self.datestamp,
        }
    }

    fn into_article(self) -> Option<ArticleRecord> {
        if self.deleted {
            return None;
        }
        let id = self
            .id
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .or_else(|| {
                self.identifier.map(|s| {
                    let s = s.trim();
                    s.strip_prefix(OAI_ID_PREFIX).unwrap_or(s).to_string()
                })
            })?;
        let title = collapse_whitespace(self.title.as_deref()?);
        let abstract_text = collapse_whitespace(self.abstract_text.as_deref()?);
        let categories: Vec<String> = self
            .categories
            .as_deref()?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let primary_category = categories.first()?.clone();
        let date_text = self.created.or(self.datestamp)?;
        let published_date = NaiveDate::parse_from_str(date_text.trim(), "%Y-%m-%d").ok()?;
        let article = ArticleRecord {
            url: format!("https://arxiv.org/abs/{id}"),
            id,
            title,
            abstract_text,
            primary_category,
            categories,
            published_date,
            full_text: None,
            features: None,
            newsworthiness: None,
            angle_cache: None,
        };
        article.validate().ok().map(|()| article)
    }
}

/// Parses an OAI-PMH response body into article records.
///
/// Records missing a mandatory field, or failing [`ArticleRecord::validate`],
/// are skipped and counted rather than failing the whole feed. Deleted
/// records (`<header status="deleted">`) count as skipped.
pub fn parse_preprint_feed(feed_bytes: &[u8]) -> Result<FeedParse, FeedError> {
    let text = std::str::from_utf8(feed_bytes).map_err(|e| FeedError {
        offset: e.valid_up_to() as u64,
        message: "invalid UTF-8".to_string(),
    })?;
    let mut reader = Reader::from_str(text);
    let mut out = FeedParse::default();

    let mut depth: usize = 0;
    let mut record: Option<(usize, RawRecord)> = None;
    // (field, depth at which the field element opened, accumulated text)
    let mut field: Option<(Field, usize, String)> = None;

    loop {
        let event = reader.read_event().map_err(|e| FeedError {
            offset: reader.error_position(),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(start) => {
                depth += 1;
                let local = start.local_name();
                let name = local.as_ref().as_bytes();
                match &mut record {
                    None if name == b"record" => record = Some((depth, RawRecord::default())),
                    Some((_, raw)) => {
                        if name == b"header" && is_deleted(&start) {
                            raw.deleted = true;
                        }
                        if field.is_none() {
                            if let Some(f) = Field::from_local_name(name) {
                                field = Some((f, depth, String::new()));
                            }
                        }
                    }
                    None => {}
                }
            }
            Event::Empty(start) => {
                if start.local_name().as_ref().as_bytes() == b"record" && record.is_none() {
                    out.skipped += 1;
                } else if let Some((_, raw)) = &mut record {
                    if start.local_name().as_ref().as_bytes() == b"header" && is_deleted(&start) {
                        raw.deleted = true;
                    }
                }
            }
            Event::End(_) => {
                if let Some((_, d, _)) = &field {
                    if *d == depth {
                        let (f, _, text) = field.take().expect("field is set");
                        if let Some((_, raw)) = &mut record {
                            raw.slot(f).get_or_insert(text);
                        }
                    }
                }
                if let Some((d, _)) = &record {
                    if *d == depth {
                        let (_, raw) = record.take().expect("record is set");
                        match raw.into_article() {
                            Some(article) => out.records.push(article),
                            None => out.skipped += 1,
                        }
                    }
                }
                depth = depth.checked_sub(1).ok_or_else(|| FeedError {
                    offset: reader.buffer_position(),
                    message: "unbalanced end tag".to_string(),
                })?;
            }
            Event::Text(t) => {
                if let Some((_, _, buf)) = &mut field {
                    buf.push_str(&t.xml10_content());
                }
            }
            Event::CData(t) => {
                if let Some((_, _, buf)) = &mut field {
                    buf.push_str(&t.xml10_content());
                }
            }
            Event::GeneralRef(r) => {
                let resolved = match r.resolve_char_ref() {
                    Ok(Some(c)) => c.to_string(),
                    Ok(None) => resolve_predefined_entity(&r)
                        .map(str::to_string)
                        .ok_or_else(|| FeedError {
                            offset: reader.buffer_position(),
                            message: format!("unknown entity &{};", &*r),
                        })?,
                    Err(e) => {
                        return Err(FeedError {
                            offset: reader.buffer_position(),
                            message: e.to_string(),
                        })
                    }
                };
                if let Some((_, _, buf)) = &mut field {
                    buf.push_str(&resolved);
                }
            }
            Event::Eof => {
                if depth != 0 {
                    return Err(FeedError {
                        offset: reader.buffer_position(),
                        message: format!("document ended with {depth} unclosed element(s)"),
                    });
                }
                break;
            }
            _ => {}
        }
    }
    Ok(out)
}

fn is_deleted(start: &quick_xml::events::BytesStart<'_>) -> bool {
    start.attributes().flatten().any(|a| {
        a.key.local_name().as_ref().as_bytes() == b"status" && a.value.as_ref().as_bytes() == b"deleted"
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oai(records: &str) -> String {
        format!(
            r#"<?xml version="1.0" encoding="UTF-8"?>
<OAI-PMH xmlns="http://www.openarchives.org/OAI/2.0/">
  <responseDate>2022-09-10T00:00:00Z</responseDate>
  <ListRecords>{records}</ListRecords>
</OAI-PMH>"#
        )
    }

    fn record(id: &str, title: &str, abs: Option<&str>, cats: &str, created: &str) -> String {
        let abs = abs.map(|a| format!("<abstract>{a}</abstract>")).unwrap_or_default();
        format!(
            r#"<record><header><identifier>oai:arXiv.org:{id}</identifier><datestamp>2022-01-05</datestamp><setSpec>cs</setSpec></header>
<metadata><arXiv xmlns="http://arxiv.org/OAI/arXiv/"><id>{id}</id><created>{created}</created>
<authors><author><keyname>Doe</keyname></author></authors>
<title>{title}</title><categories>{cats}</categories>{abs}</arXiv></metadata></record>"#
        )
    }

    #[test]
    fn one_record_fixture() {
        let feed = oai(&record("2201.00001", "T", Some("A"), "cs.LG", "2022-01-03"));
        let parsed = parse_preprint_feed(feed.as_bytes()).unwrap();
        assert_eq!(parsed.skipped, 0);
        assert_eq!(parsed.records.len(), 1);
        let a = &parsed.records[0];
        assert_eq!(a.id, "2201.00001");
        assert_eq!(a.title, "T");
        assert_eq!(a.abstract_text, "A");
        assert_eq!(a.primary_category, "cs.LG");
        assert_eq!(a.categories, vec!["cs.LG".to_string()]);
        assert_eq!(a.published_date, NaiveDate::from_ymd_opt(2022, 1, 3).unwrap());
        assert_eq!(a.url, "https://arxiv.org/abs/2201.00001");
        assert_eq!(a.full_text, None);
    }

    #[test]
    fn zero_records_is_empty() {
        let parsed = parse_preprint_feed(oai("").as_bytes()).unwrap();
        assert_eq!(parsed, FeedParse::default());
        assert_eq!(parse_preprint_feed(b"").unwrap(), FeedParse::default());
    }

    #[test]
    fn missing_abstract_is_skipped() {
        let feed = oai(&format!(
            "{}{}",
            record("2201.00001", "T", None, "cs.LG", "2022-01-03"),
            record("2201.00002", "U", Some("B"), "cs.CL cs.LG", "2022-01-04"),
        ));
        let parsed = parse_preprint_feed(feed.as_bytes()).unwrap();
        assert_eq!(parsed.skipped, 1);
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.records[0].id, "2201.00002");
        assert_eq!(parsed.records[0].categories, vec!["cs.CL", "cs.LG"]);
        assert_eq!(parsed.records[0].primary_category, "cs.CL");
    }

    #[test]
    fn whitespace_and_entities() {
        let feed = oai(&record(
            "2201.00003",
            "  Deep\n   nets &amp; <![CDATA[trees]]>  ",
            Some("Line one,\n\t line &#x41;&lt;2."),
            "cs.AI",
            "2022-02-01",
        ));
        let a = &parse_preprint_feed(feed.as_bytes()).unwrap().records[0];
        assert_eq!(a.title, "Deep nets & trees");
        assert_eq!(a.abstract_text, "Line one, line A<2.");
    }

    #[test]
    fn falls_back_to_header_identifier_and_datestamp() {
        let feed = oai(
            r#"<record><header><identifier>oai:arXiv.org:2203.1</identifier><datestamp>2022-03-02</datestamp></header>
            <metadata><arXiv><title>X</title><abstract>Y</abstract><categories>cs.CV</categories></arXiv></metadata></record>"#,
        );
        let a = &parse_preprint_feed(feed.as_bytes()).unwrap().records[0];
        assert_eq!(a.id, "2203.1");
        assert_eq!(a.published_date, NaiveDate::from_ymd_opt(2022, 3, 2).unwrap());
    }

    #[test]
    fn deleted_and_bad_dates_are_skipped() {
        let feed = oai(&format!(
            r#"<record><header status="deleted"><identifier>oai:arXiv.org:1</identifier></header></record>{}"#,
            record("2201.9", "T", Some("A"), "cs.LG", "2022-13-45")
        ));
        let parsed = parse_preprint_feed(feed.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 0);
        assert_eq!(parsed.skipped, 2);
    }

    #[test]
    fn malformed_xml_reports_offset() {
        let feed = "<OAI-PMH><ListRecords><record><title>x</abstract></record>";
        let err = parse_preprint_feed(feed.as_bytes()).unwrap_err();
        assert!(err.offset > 0 && err.offset <= feed.len() as u64, "{err}");

        let truncated = "<OAI-PMH><ListRecords><record>";
        let err = parse_preprint_feed(truncated.as_bytes()).unwrap_err();
        assert_eq!(err.offset, truncated.len() as u64);

        let err = parse_preprint_feed(b"<a>\xff</a>").unwrap_err();
        assert_eq!(err.offset, 3);
    }

    #[test]
    fn parsing_is_deterministic() {
        let feed = oai(&format!(
            "{}{}",
            record("1", "T1", Some("A1"), "cs.LG", "2022-01-03"),
            record("2", "T2", Some("A2"), "cs.LG", "2022-01-04"),
        ));
        assert_eq!(
            parse_preprint_feed(feed.as_bytes()).unwrap(),
            parse_preprint_feed(feed.as_bytes()).unwrap()
        );
    }
}
