use std::collections::{HashMap, HashSet};

/// Frequency-based boilerplate detection settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoilerplateConfig {
    /// A line is boilerplate when it appears in at least this fraction of an
    /// outlet's items.
    pub threshold: f64,
    /// Below this many items no line is treated as boilerplate.
    pub min_items: usize,
}

impl Default for BoilerplateConfig {
    fn default() -> Self {
        BoilerplateConfig {
            threshold: 0.5,
            min_items: 4,
        }
    }
}

/// Lines (trimmed, nonblank) occurring in at least `threshold` of `bodies`.
/// Each body counts a line at most once.
pub fn detect_boilerplate<S: AsRef<str>>(bodies: &[S], config: BoilerplateConfig) -> HashSet<String> {
    let n = bodies.len();
    if n == 0 || n < config.min_items {
        return HashSet::new();
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for body in bodies {
        let distinct: HashSet<&str> = body
            .as_ref()
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        for line in distinct {
            *counts.entry(line).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter(|&(_, c)| c as f64 >= config.threshold * n as f64)
        .map(|(l, _)| l.to_string())
        .collect()
}

/// Removes lines that exactly match (after trimming) an entry of
/// `boilerplate_lines`.
///
/// Lines are trimmed, leading and trailing blank lines dropped, and runs of
/// blank lines collapsed to one. The result may be empty.
pub fn clean_news_text(body: &str, boilerplate_lines: &HashSet<String>) -> String {
    let mut out: Vec<&str> = Vec::new();
    let mut pending_blank = false;
    for line in body.lines().map(str::trim) {
        if line.is_empty() {
            pending_blank = !out.is_empty();
            continue;
        }
        if boilerplate_lines.contains(line) {
            continue;
        }
        if pending_blank {
            out.push("");
            pending_blank = false;
        }
        out.push(line);
    }
    out.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(lines: &[&str]) -> HashSet<String> {
        lines.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn removes_exact_boilerplate_line() {
        let body = "first line\nSubscribe now!\nthird line";
        assert_eq!(clean_news_text(body, &set(&["Subscribe now!"])), "first line\nthird line");
    }

    #[test]
    fn empty_set_only_normalizes_whitespace() {
        let body = "\n  a  \n\n\n\n b\t\n\n";
        assert_eq!(clean_news_text(body, &HashSet::new()), "a\n\nb");
    }

    #[test]
    fn all_boilerplate_yields_empty() {
        let body = "Ad one\n\nAd two\n";
        assert_eq!(clean_news_text(body, &set(&["Ad one", "Ad two"])), "");
    }

    #[test]
    fn partial_matches_are_kept() {
        let body = "Subscribe now! Or not.\nSubscribe now!";
        assert_eq!(clean_news_text(body, &set(&["Subscribe now!"])), "Subscribe now! Or not.");
    }

    #[test]
    fn blank_run_collapses_across_removed_line() {
        let body = "a\n\nAD\n\nb";
        assert_eq!(clean_news_text(body, &set(&["AD"])), "a\n\nb");
    }

    #[test]
    fn detection_threshold_and_min_items() {
        let bodies = [
            "story one\nRead more at Example",
            "story two\nRead more at Example",
            "story three\nRead more at Example\nRead more at Example",
            "story four\nFollow us",
        ];
        let cfg = BoilerplateConfig::default();
        assert_eq!(detect_boilerplate(&bodies, cfg), set(&["Read more at Example"]));
        let strict = BoilerplateConfig { threshold: 0.8, ..cfg };
        assert!(detect_boilerplate(&bodies, strict).is_empty());
        let few = BoilerplateConfig { min_items: 5, ..cfg };
        assert!(detect_boilerplate(&bodies, few).is_empty());
        assert!(detect_boilerplate::<&str>(&[], cfg).is_empty());
    }

    proptest! {
        #[test]
        fn cleaning_is_idempotent(
            lines in prop::collection::vec("[ a-c]{0,4}", 0..12),
            bp in prop::collection::hash_set("[a-c]{1,3}", 0..4),
        ) {
            let body = lines.join("\n");
            let once = clean_news_text(&body, &bp);
            prop_assert_eq!(clean_news_text(&once, &bp), once.clone());
        }

        #[test]
        fn never_removes_non_boilerplate(
            lines in prop::collection::vec("[a-c]{1,4}", 0..12),
            bp in prop::collection::hash_set("[a-c]{1,3}", 0..4),
        ) {
            let body = lines.join("\n");
            let cleaned = clean_news_text(&body, &bp);
            let kept: Vec<&str> = lines.iter().map(String::as_str).filter(|l| !bp.contains(*l)).collect();
            let got: Vec<&str> = cleaned.lines().filter(|l| !l.is_empty()).collect();
            prop_assert_eq!(got, kept);
        }
    }
}
