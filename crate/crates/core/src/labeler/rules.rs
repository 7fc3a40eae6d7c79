//! Keyword-table classifiers for golden signals and fault categories.
//!
//! Keywords match whole words, case-insensitively. Multi-word keywords allow
//! any run of whitespace between words, and a trailing `*` turns the last
//! word into a stem (`fail*` matches `failed`, `failure`).

use super::{FaultCategory, GoldenSignal, LabelerError};
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableRule {
    /// Regex tested against the raw (unmasked) line.
    pub pattern: String,
    pub golden: GoldenSignal,
}

/// Keyword tables, loadable from JSON or TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeywordTables {
    pub golden: BTreeMap<GoldenSignal, Vec<String>>,
    pub faults: BTreeMap<FaultCategory, Vec<String>>,
    /// Checked before the golden table; these look at variable values, so a
    /// backend using them is not template-pure.
    pub variable_rules: Vec<VariableRule>,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for KeywordTables {
    fn default() -> Self {
        use FaultCategory as C;
        use GoldenSignal as G;
        let golden = BTreeMap::from([
            (G::Error, words(&["error*", "exception*", "fatal", "fail*", "broken", "suspend*"])),
            (
                G::Availability,
                words(&[
                    "unavailable",
                    "not found",
                    "does not exist",
                    "unreachable",
                    "no route",
                    "refused",
                    "down",
                ]),
            ),
            (
                G::Saturation,
                words(&["full", "exceeded", "limit reached", "out of memory", "saturat*", "quota*"]),
            ),
            (G::Latency, words(&["timed out", "timeout*", "slow*", "latency", "took too long"])),
            (
                G::Traffic,
                words(&["requests per", "throughput", "rate limit*", "too many requests"]),
            ),
        ]);
        let faults = BTreeMap::from([
            (C::Memory, words(&["oom", "heap", "alloc*", "memory", "out of memory"])),
            (
                C::Network,
                words(&[
                    "connection*",
                    "socket*",
                    "dns",
                    "tcp",
                    "udp",
                    "network*",
                    "timeout*",
                    "timed out",
                    "unreachable",
                    "host",
                ]),
            ),
            (
                C::Authentication,
                words(&["auth*", "login*", "credential*", "token*", "denied", "password*"]),
            ),
            (C::Io, words(&["disk*", "file*", "read", "write", "io", "i/o"])),
            (C::Device, words(&["device*", "hardware", "driver*"])),
            (
                C::Application,
                words(&["exception*", "nullpointer*", "stack trace", "session*"]),
            ),
        ]);
        Self { golden, faults, variable_rules: Vec::new() }
    }
}

impl KeywordTables {
    pub fn from_path(path: &Path) -> Result<Self, LabelerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabelerError::Config(format!("{}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        if is_toml {
            toml::from_str(&text).map_err(|e| LabelerError::Config(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text)
                .map_err(|e| LabelerError::Config(format!("{}: {e}", path.display())))
        }
    }
}

fn keyword_regex(keywords: &[String]) -> Result<Option<Regex>, LabelerError> {
    let alts: Vec<String> = keywords
        .iter()
        .filter(|k| !k.trim().is_empty())
        .map(|k| {
            let (k, stem) = match k.strip_suffix('*') {
                Some(s) => (s, true),
                None => (k.as_str(), false),
            };
            let body = k.split_whitespace().map(regex::escape).collect::<Vec<_>>().join(r"\s+");
            let lead = if k.starts_with(|c: char| c.is_alphanumeric()) { r"\b" } else { "" };
            let tail = if stem {
                r"\w*"
            } else if k.ends_with(|c: char| c.is_alphanumeric()) {
                r"\b"
            } else {
                ""
            };
            format!("{lead}{body}{tail}")
        })
        .collect();
    if alts.is_empty() {
        return Ok(None);
    }
    RegexBuilder::new(&alts.join("|"))
        .case_insensitive(true)
        .build()
        .map(Some)
        .map_err(|e| LabelerError::Config(e.to_string()))
}

/// Compiled keyword tables.
#[derive(Debug, Clone)]
pub struct RuleSet {
    golden: Vec<(GoldenSignal, Regex)>,
    faults: Vec<(FaultCategory, Regex)>,
    variable: Vec<(Regex, GoldenSignal)>,
}

impl RuleSet {
    pub fn new(tables: &KeywordTables) -> Result<Self, LabelerError> {
        let mut golden = Vec::new();
        for g in GoldenSignal::PRIORITY {
            if let Some(re) = tables.golden.get(&g).map(|k| keyword_regex(k)).transpose()?.flatten() {
                golden.push((g, re));
            }
        }
        let mut faults = Vec::new();
        for (c, k) in &tables.faults {
            if *c == FaultCategory::Other {
                continue;
            }
            if let Some(re) = keyword_regex(k)? {
                faults.push((*c, re));
            }
        }
        let variable = tables
            .variable_rules
            .iter()
            .map(|r| {
                Regex::new(&r.pattern)
                    .map(|re| (re, r.golden))
                    .map_err(|e| LabelerError::Config(format!("variable rule: {e}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { golden, faults, variable })
    }

    pub fn golden(&self, text: &str) -> GoldenSignal {
        for (re, g) in &self.variable {
            if re.is_match(text) {
                return *g;
            }
        }
        self.golden
            .iter()
            .find(|(_, re)| re.is_match(text))
            .map_or(GoldenSignal::Information, |(g, _)| *g)
    }

    pub fn faults(&self, text: &str) -> BTreeSet<FaultCategory> {
        let mut out: BTreeSet<_> =
            self.faults.iter().filter(|(_, re)| re.is_match(text)).map(|(c, _)| *c).collect();
        if out.is_empty() {
            out.insert(FaultCategory::Other);
        }
        out
    }

    pub fn has_variable_rules(&self) -> bool {
        !self.variable.is_empty()
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        Self::new(&KeywordTables::default()).expect("default tables compile")
    }
}

/// Golden signal under the default keyword table.
pub fn rule_based_golden(text: &str) -> GoldenSignal {
    thread_local! {
        static RULES: RuleSet = RuleSet::default();
    }
    RULES.with(|r| r.golden(text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use FaultCategory as C;
    use GoldenSignal as G;

    #[test]
    fn golden_examples() {
        assert_eq!(rule_based_golden("Operation Timed out"), G::Latency);
        assert_eq!(rule_based_golden("Session ID XX does not exist"), G::Availability);
        assert_eq!(rule_based_golden("Connection Broken"), G::Error);
        assert_eq!(rule_based_golden("Session being suspended"), G::Error);
        assert_eq!(rule_based_golden("disk usage exceeded limit"), G::Saturation);
        assert_eq!(rule_based_golden(""), G::Information);
        assert_eq!(rule_based_golden("worker started"), G::Information);
    }

    #[test]
    fn priority_error_over_latency() {
        assert_eq!(rule_based_golden("request timed out with error"), G::Error);
    }

    #[test]
    fn whole_words_only() {
        assert_eq!(rule_based_golden("download successfully finished"), G::Information);
        assert_eq!(rule_based_golden("job failed"), G::Error);
        assert_eq!(rule_based_golden("Too   many requests"), G::Traffic);
    }

    #[test]
    fn fault_categories() {
        let r = RuleSet::default();
        assert_eq!(r.faults("Operation Timed out"), BTreeSet::from([C::Network]));
        assert_eq!(r.faults("Session ID XX does not exist"), BTreeSet::from([C::Application]));
        assert_eq!(r.faults("nothing to see"), BTreeSet::from([C::Other]));
        assert_eq!(
            r.faults("socket write failed on disk"),
            BTreeSet::from([C::Network, C::Io])
        );
        assert_eq!(r.faults("I/O stall"), BTreeSet::from([C::Io]));
    }

    #[test]
    fn variable_rules_come_first() {
        let tables = KeywordTables {
            variable_rules: vec![VariableRule {
                pattern: r"status 5\d\d".into(),
                golden: G::Error,
            }],
            ..Default::default()
        };
        let r = RuleSet::new(&tables).unwrap();
        assert_eq!(r.golden("request done status 503"), G::Error);
        assert_eq!(r.golden("request done status 200"), G::Information);
        assert!(r.has_variable_rules());
    }

    #[test]
    fn tables_roundtrip_json_and_toml() {
        let t = KeywordTables::default();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<KeywordTables>(&json).unwrap(), t);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kw.toml");
        std::fs::write(&p, "[golden]\nerror = [\"kaput\"]\n").unwrap();
        let t = KeywordTables::from_path(&p).unwrap();
        let r = RuleSet::new(&t).unwrap();
        assert_eq!(r.golden("engine kaput"), G::Error);
        assert_eq!(r.golden("engine failed"), G::Information);
    }
}
