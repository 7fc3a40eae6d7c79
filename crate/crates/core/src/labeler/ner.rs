//! Regex entity extraction with leftmost-longest overlap resolution.

use super::{Entity, EntityType};
use regex::Regex;
use std::sync::LazyLock;

struct Rule {
    kind: EntityType,
    re: Regex,
    /// Capture group holding the entity (0 = whole match).
    group: usize,
}

fn rule(kind: EntityType, pattern: &str, group: usize) -> Rule {
    Rule { kind, re: Regex::new(pattern).expect("ner rule compiles"), group }
}

static RULES: LazyLock<Vec<Rule>> = LazyLock::new(|| {
    use EntityType as E;
    vec![
        rule(
            E::DateTime,
            r"\b\d{4}-\d{2}-\d{2}[ T]\d{2}:\d{2}(?::\d{2}(?:[.,]\d+)?)?(?:Z|[+-]\d{2}:?\d{2})?|\b\d{2}/\d{2}/\d{2,4} \d{2}:\d{2}(?::\d{2})?|\b(?:Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Oct|Nov|Dec) +\d{1,2} \d{2}:\d{2}:\d{2}",
            0,
        ),
        rule(
            E::Level,
            r"\b(?:TRACE|DEBUG|INFO|NOTICE|WARN|WARNING|ERROR|SEVERE|CRITICAL|FATAL)\b",
            0,
        ),
        rule(
            E::ProcessID,
            r"(?i)\b(?:pid|tid|thread ?id|process ?id|process)\s*[-=:#]?\s*(\d+)\b",
            1,
        ),
        rule(
            E::ErrorCode,
            r"(?i)\b(?:error ?code|err|status(?: ?code)?|code|http)\s*[-=:#]?\s*(\d{3,5})\b",
            1,
        ),
        rule(E::Url, r#"\b[a-zA-Z][a-zA-Z0-9+.\-]*://[^\s\]\)>"'<]+"#, 0),
        rule(E::NVPair, r"\b[A-Za-z_][\w.\-]*=[^\s,;\]\)]+", 0),
        rule(E::FileOrDir, r"(?:^|[\s\[\(:=,])((?:~|\.{1,2})?/[\w.\-]+(?:/[\w.\-]*)*|[A-Za-z]:\\[\w.\-\\]+)", 1),
    ]
});

static SYMPTOM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:unable to|failed to|cannot|can't|could not|couldn't)(?:\s+[\w\-]+)+").unwrap()
});

static CAUSE_CUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:caused by|due to|because of)\s+").unwrap());

static CAUSE_PHRASE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^[\w\-]+(?:\s+[\w\-]+)*").unwrap());

static FAILURE_NOUN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b[A-Z][a-z]+ (?:failure|error|timeout)\b").unwrap());

const STOP_WORDS: &[&str] = &[
    "from", "for", "at", "in", "on", "with", "via", "due", "because", "caused", "after", "while",
    "when", "since", "by",
];

/// Cuts a word run at the first stop word, keeping at least `min_words`.
fn cut_at_stop(text: &str, min_words: usize) -> usize {
    let mut end = 0;
    let mut count = 0;
    let mut pos = 0;
    for w in text.split_whitespace() {
        let start = pos + text[pos..].find(w).unwrap_or(0);
        if count >= min_words && STOP_WORDS.contains(&w.to_ascii_lowercase().as_str()) {
            break;
        }
        end = start + w.len();
        pos = end;
        count += 1;
    }
    end
}

fn trim_trailing_punct(text: &str, start: usize, mut end: usize) -> usize {
    while end > start && text[..end].ends_with(['.', ',', ';', ':', '!', '?']) {
        end -= 1;
    }
    end
}

/// Extracts entities; spans never overlap and always slice back to `text`.
pub fn rule_based_entities(text: &str) -> Vec<Entity> {
    let mut cands: Vec<(usize, usize, EntityType)> = Vec::new();
    for r in RULES.iter() {
        for c in r.re.captures_iter(text) {
            let Some(m) = c.get(r.group) else { continue };
            let mut end = m.end();
            if matches!(r.kind, EntityType::Url | EntityType::NVPair | EntityType::FileOrDir) {
                end = trim_trailing_punct(text, m.start(), end);
            }
            if end > m.start() {
                cands.push((m.start(), end, r.kind));
            }
        }
    }

    let mut symptom_ends = Vec::new();
    for m in SYMPTOM.find_iter(text) {
        // keep the cue ("unable to") plus at least one word
        let end = m.start() + cut_at_stop(m.as_str(), 3);
        cands.push((m.start(), end, EntityType::Symptom));
        symptom_ends.push(end);
    }
    for m in CAUSE_CUE.find_iter(text) {
        if let Some(p) = CAUSE_PHRASE.find(&text[m.end()..]) {
            let len = cut_at_stop(p.as_str(), 1);
            if len > 0 {
                cands.push((m.end(), m.end() + len, EntityType::Cause));
            }
        }
    }
    if let Some(&after) = symptom_ends.first() {
        for m in FAILURE_NOUN.find_iter(&text[after..]) {
            cands.push((after + m.start(), after + m.end(), EntityType::Cause));
        }
    }

    cands.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
    let mut out: Vec<Entity> = Vec::new();
    let mut frontier = 0;
    for (start, end, kind) in cands {
        if start < frontier {
            continue;
        }
        out.push(Entity { entity_type: kind, start, end, text: text[start..end].to_owned() });
        frontier = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use EntityType as E;

    fn pairs(text: &str) -> Vec<(EntityType, String)> {
        rule_based_entities(text).into_iter().map(|e| (e.entity_type, e.text)).collect()
    }

    #[test]
    fn appendix_exemplar() {
        let line = "2024-10-20 14:30 ERROR [ErrorCode: 500] [ThreadID - 123] [Config: /db.json] \
                    Unable to fetch data from https://ABC.com/api/data. Connection failure for userID=6789";
        let got = pairs(line);
        let want = vec![
            (E::DateTime, "2024-10-20 14:30"),
            (E::Level, "ERROR"),
            (E::ErrorCode, "500"),
            (E::ProcessID, "123"),
            (E::FileOrDir, "/db.json"),
            (E::Symptom, "Unable to fetch data"),
            (E::Url, "https://ABC.com/api/data"),
            (E::Cause, "Connection failure"),
            (E::NVPair, "userID=6789"),
        ];
        let want: Vec<_> = want.into_iter().map(|(k, s)| (k, s.to_owned())).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn plain_words() {
        assert!(rule_based_entities("plain words").is_empty());
    }

    #[test]
    fn pid_overlap_resolved_leftmost_longest() {
        assert_eq!(
            pairs("pid=42 wrote /var/log/x.log"),
            vec![(E::NVPair, "pid=42".into()), (E::FileOrDir, "/var/log/x.log".into())]
        );
    }

    #[test]
    fn cause_after_cue() {
        assert_eq!(
            pairs("Service Failure caused by invalid argument for Host XX"),
            vec![(E::Cause, "invalid argument".into())]
        );
    }

    #[test]
    fn spans_slice_back() {
        let line = "Jan  5 10:00:00 host sshd[22]: failed to open ~/x due to permission denied";
        for e in rule_based_entities(line) {
            assert_eq!(&line[e.start..e.end], e.text);
        }
    }
}
