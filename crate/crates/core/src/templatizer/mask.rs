use super::WILDCARD;
use regex::{Regex, RegexSet};

/// Integers and decimals, hex strings of at least 4 chars holding a digit,
/// IPv4 (optional port), UUIDs, `word_123` ids and long `key=value` values.
pub const DEFAULT_MASKS: &[&str] = &[
    r"[-+]?\d+(?:\.\d+)?",
    r"0x[0-9a-fA-F]+|[0-9a-fA-F]{3,}\d[0-9a-fA-F]*|[0-9a-fA-F]{2}\d[0-9a-fA-F]{1,}|[0-9a-fA-F]\d[0-9a-fA-F]{2,}|\d[0-9a-fA-F]{3,}",
    r"\d{1,3}(?:\.\d{1,3}){3}(?::\d+)?",
    r"[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}",
    r"[A-Za-z]+_\d+",
    r"[^=\s]+=(?P<v>\S{17,})",
];

#[derive(Debug, Clone)]
struct Rule {
    regex: Regex,
    /// Only this capture is replaced when present.
    partial: bool,
}

/// Compiled mask rules. A token is masked when it fully matches a rule;
/// rules with a named group `v` mask only that group.
#[derive(Debug, Clone)]
pub struct Masker {
    set: RegexSet,
    rules: Vec<Rule>,
}

impl Masker {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, regex::Error> {
        let anchored: Vec<String> =
            patterns.iter().map(|p| format!("^(?:{})$", p.as_ref())).collect();
        let set = RegexSet::new(&anchored)?;
        let rules = anchored
            .iter()
            .map(|p| {
                let regex = Regex::new(p)?;
                let partial = regex.capture_names().any(|n| n == Some("v"));
                Ok(Rule { regex, partial })
            })
            .collect::<Result<_, regex::Error>>()?;
        Ok(Self { set, rules })
    }

    pub fn mask_token(&self, tok: &str) -> String {
        let Some(i) = self.set.matches(tok).into_iter().next() else {
            return tok.to_owned();
        };
        let rule = &self.rules[i];
        if rule.partial {
            if let Some(m) = rule.regex.captures(tok).and_then(|c| c.name("v")) {
                let mut out = String::with_capacity(tok.len());
                out.push_str(&tok[..m.start()]);
                out.push_str(WILDCARD);
                out.push_str(&tok[m.end()..]);
                return out;
            }
        }
        WILDCARD.to_owned()
    }

    pub fn is_masked(&self, tok: &str) -> bool {
        self.set.is_match(tok)
    }
}

impl Default for Masker {
    fn default() -> Self {
        Self::new(DEFAULT_MASKS).expect("default masks compile")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rules() {
        let m = Masker::default();
        for t in ["0", "-12", "3.25", "7f3a", "0xDEAD", "deadbeef01", "10.0.0.1", "10.0.0.1:8080"] {
            assert_eq!(m.mask_token(t), WILDCARD, "{t}");
        }
        assert_eq!(m.mask_token("123e4567-e89b-12d3-a456-426614174000"), WILDCARD);
        assert_eq!(m.mask_token("blk_11"), WILDCARD);
        for t in ["dead", "face", "7f3", "block", "v1.2-beta", "a1"] {
            assert_eq!(m.mask_token(t), t, "{t}");
        }
    }

    #[test]
    fn key_value_masks_only_long_values() {
        let m = Masker::default();
        assert_eq!(m.mask_token("payload={\"a\":\"bcdefghijklm\"}"), "payload=<*>");
        assert_eq!(m.mask_token("user=bob"), "user=bob");
    }
}
