//! Fixed-depth parse tree template miner.
//!
//! Bodies are split on whitespace and masked, then routed by token count and
//! by their leading tokens to a leaf holding candidate templates. The most
//! similar candidate absorbs the line if it clears the threshold, otherwise a
//! new template is created.

mod mask;

pub use mask::{Masker, DEFAULT_MASKS};

use crate::ingest::MasterStream;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

pub const WILDCARD: &str = "<*>";

pub type TemplateId = usize;

#[derive(Debug, Error)]
pub enum TemplatizerError {
    #[error("invalid mask rule: {0}")]
    BadMask(#[from] regex::Error),
    #[error("invalid templatizer setting: {0}")]
    BadSetting(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentativeMode {
    #[default]
    FirstSeen,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplatizerConfig {
    pub depth: usize,
    pub sim_threshold: f64,
    pub max_children: usize,
    pub masks: Vec<String>,
    pub representative: RepresentativeMode,
    pub seed: u64,
}

impl Default for TemplatizerConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            sim_threshold: 0.4,
            max_children: 100,
            masks: DEFAULT_MASKS.iter().map(|s| s.to_string()).collect(),
            representative: RepresentativeMode::FirstSeen,
            seed: 0,
        }
    }
}

impl TemplatizerConfig {
    pub fn validate(&self) -> Result<(), TemplatizerError> {
        if self.depth < 2 {
            return Err(TemplatizerError::BadSetting(format!("depth {} < 2", self.depth)));
        }
        if !(0.0..=1.0).contains(&self.sim_threshold) {
            return Err(TemplatizerError::BadSetting(format!(
                "sim_threshold {} outside [0, 1]",
                self.sim_threshold
            )));
        }
        if self.max_children == 0 {
            return Err(TemplatizerError::BadSetting("max_children must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
}

impl TokenSeq {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogTemplate {
    pub template_id: TemplateId,
    pub tokens: Vec<String>,
    pub cluster_size: usize,
    pub representative_record_id: usize,
    pub first_seen_record_id: usize,
    /// The reserved template for blank bodies.
    pub blank: bool,
}

impl LogTemplate {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

pub fn tokenize(body: &str, masker: &Masker) -> TokenSeq {
    TokenSeq { tokens: body.split_whitespace().map(|t| masker.mask_token(t)).collect() }
}

/// Fraction of positions where `template` holds a literal equal to `seq`.
///
/// # Panics
/// If the lengths differ.
pub fn similarity<S: AsRef<str>, T: AsRef<str>>(seq: &[S], template: &[T]) -> f64 {
    assert_eq!(seq.len(), template.len(), "similarity on unequal lengths");
    if seq.is_empty() {
        return 1.0;
    }
    let same = seq
        .iter()
        .zip(template)
        .filter(|(s, t)| t.as_ref() != WILDCARD && s.as_ref() == t.as_ref())
        .count();
    same as f64 / seq.len() as f64
}

#[derive(Debug, Default, Clone)]
struct Node {
    children: HashMap<String, Node>,
    clusters: Vec<TemplateId>,
}

#[derive(Debug, Clone)]
pub struct TemplateStore {
    config: TemplatizerConfig,
    masker: Masker,
    by_length: HashMap<usize, Node>,
    templates: Vec<LogTemplate>,
    assignment: Vec<Option<TemplateId>>,
    blank: Option<TemplateId>,
}

impl TemplateStore {
    pub fn new(config: &TemplatizerConfig) -> Result<Self, TemplatizerError> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            masker: Masker::new(&config.masks)?,
            by_length: HashMap::new(),
            templates: Vec::new(),
            assignment: Vec::new(),
            blank: None,
        })
    }

    pub fn config(&self) -> &TemplatizerConfig {
        &self.config
    }

    pub fn masker(&self) -> &Masker {
        &self.masker
    }

    pub fn tokenize(&self, body: &str) -> TokenSeq {
        tokenize(body, &self.masker)
    }

    pub fn templates(&self) -> &[LogTemplate] {
        &self.templates
    }

    pub fn template(&self, id: TemplateId) -> &LogTemplate {
        &self.templates[id]
    }

    pub fn blank_template(&self) -> Option<TemplateId> {
        self.blank
    }

    pub fn template_of(&self, record_id: usize) -> Option<TemplateId> {
        self.assignment.get(record_id).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn insert_body(&mut self, body: &str, record_id: usize) -> (TemplateId, bool) {
        let seq = self.tokenize(body);
        self.match_or_insert(&seq, record_id)
    }

    pub fn match_or_insert(&mut self, seq: &TokenSeq, record_id: usize) -> (TemplateId, bool) {
        let (id, is_new) = if seq.is_empty() {
            self.insert_blank(record_id)
        } else {
            self.insert_tokens(&seq.tokens, record_id)
        };
        if self.assignment.len() <= record_id {
            self.assignment.resize(record_id + 1, None);
        }
        self.assignment[record_id] = Some(id);
        (id, is_new)
    }

    fn new_template(&mut self, tokens: Vec<String>, record_id: usize, blank: bool) -> TemplateId {
        let id = self.templates.len();
        self.templates.push(LogTemplate {
            template_id: id,
            tokens,
            cluster_size: 1,
            representative_record_id: record_id,
            first_seen_record_id: record_id,
            blank,
        });
        id
    }

    fn insert_blank(&mut self, record_id: usize) -> (TemplateId, bool) {
        match self.blank {
            Some(id) => {
                self.templates[id].cluster_size += 1;
                (id, false)
            }
            None => {
                let id = self.new_template(Vec::new(), record_id, true);
                self.blank = Some(id);
                (id, true)
            }
        }
    }

    fn insert_tokens(&mut self, tokens: &[String], record_id: usize) -> (TemplateId, bool) {
        // depth counts the root and length layers
        let levels = (self.config.depth - 2).min(tokens.len());
        let max_children = self.config.max_children;
        let mut node = self.by_length.entry(tokens.len()).or_default();
        for tok in &tokens[..levels] {
            let key = if tok.contains(WILDCARD) {
                WILDCARD
            } else if node.children.contains_key(tok.as_str())
                || node.children.len() < max_children
            {
                tok.as_str()
            } else {
                WILDCARD
            };
            node = node.children.entry(key.to_owned()).or_default();
        }

        // exact match wins outright so all-wildcard lines still cluster
        let mut best: Option<(TemplateId, f64)> = None;
        for &id in &node.clusters {
            let t = &self.templates[id].tokens;
            let score = if t.as_slice() == tokens { 2.0 } else { similarity(tokens, t) };
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((id, score));
            }
        }
        match best {
            Some((id, score)) if score >= self.config.sim_threshold => {
                let t = &mut self.templates[id];
                for (slot, tok) in t.tokens.iter_mut().zip(tokens) {
                    if slot != tok {
                        *slot = WILDCARD.to_owned();
                    }
                }
                t.cluster_size += 1;
                (id, false)
            }
            _ => {
                let id = self.templates.len();
                node.clusters.push(id);
                self.new_template(tokens.to_vec(), record_id, false);
                (id, true)
            }
        }
    }

    /// Record ids per template, in processing order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.templates.len()];
        for (rid, t) in self.assignment.iter().enumerate() {
            if let Some(t) = t {
                out[*t].push(rid);
            }
        }
        out
    }

    /// One record per template: the first member, or a seeded uniform draw.
    pub fn representative_set(&self) -> BTreeMap<TemplateId, usize> {
        match self.config.representative {
            RepresentativeMode::FirstSeen => self
                .templates
                .iter()
                .map(|t| (t.template_id, t.first_seen_record_id))
                .collect(),
            RepresentativeMode::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                self.members()
                    .into_iter()
                    .enumerate()
                    .map(|(id, m)| (id, m[rng.random_range(0..m.len())]))
                    .collect()
            }
        }
    }

    /// Fixes `representative_record_id` for every template per the
    /// configured mode.
    pub fn finalize(&mut self) {
        if self.config.representative == RepresentativeMode::FirstSeen {
            return;
        }
        for (id, rid) in self.representative_set() {
            self.templates[id].representative_record_id = rid;
        }
    }
}

/// Runs every record body of `stream` through a fresh store.
pub fn templatize(
    stream: &MasterStream,
    config: &TemplatizerConfig,
) -> Result<TemplateStore, TemplatizerError> {
    let mut store = TemplateStore::new(config)?;
    for r in &stream.records {
        store.insert_body(r.body(), r.record_id);
    }
    store.finalize();
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> TemplateStore {
        TemplateStore::new(&TemplatizerConfig::default()).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(str::to_owned).collect()
    }

    #[test]
    fn tokenize_examples() {
        let m = Masker::default();
        assert_eq!(
            tokenize("PacketResponder 0 for block blk_11 terminating", &m).tokens,
            toks("PacketResponder <*> for block <*> terminating")
        );
        assert!(tokenize("", &m).is_empty());
        assert_eq!(
            tokenize("Session ID 7f3a does not exist", &m).tokens,
            toks("Session ID <*> does not exist")
        );
    }

    #[test]
    fn packet_responder_cluster() {
        let mut s = store();
        let lines = [
            "PacketResponder 1 for block blk_38865049064139660 terminating",
            "PacketResponder 0 for block blk_-6952295868487656571 terminating",
            "PacketResponder 2 for block blk_8229193803249955061 terminating",
        ];
        let ids: Vec<_> = lines.iter().enumerate().map(|(i, l)| s.insert_body(l, i)).collect();
        assert_eq!(ids, [(0, true), (0, false), (0, false)]);
        assert_eq!(s.template(0).text(), "PacketResponder <*> for block <*> terminating");
        assert_eq!(s.template(0).cluster_size, 3);
    }

    #[test]
    fn identical_lines() {
        let mut s = store();
        assert_eq!(s.insert_body("disk full on sda", 0), (0, true));
        assert_eq!(s.insert_body("disk full on sda", 1), (0, false));
        assert_eq!(s.template(0).cluster_size, 2);
    }

    #[test]
    fn alpha_beta_merge() {
        let mut s = TemplateStore::new(&TemplatizerConfig {
            masks: vec![],
            ..Default::default()
        })
        .unwrap();
        s.insert_body("alpha beta 1", 0);
        assert_eq!(s.insert_body("alpha beta 2", 1), (0, false));
        assert_eq!(s.template(0).text(), "alpha beta <*>");
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity(&toks("a b c"), &toks("a b c")), 1.0);
        assert_eq!(similarity(&toks("a b c"), &toks("<*> <*> <*>")), 0.0);
        assert!((similarity(&toks("a b c"), &toks("a <*> c")) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    #[should_panic]
    fn similarity_length_mismatch() {
        similarity(&toks("a b"), &toks("a"));
    }

    #[test]
    fn blank_bodies_share_reserved_template() {
        let mut s = store();
        assert_eq!(s.insert_body("   ", 0), (0, true));
        assert_eq!(s.insert_body("", 1), (0, false));
        assert!(s.template(0).blank);
        assert_eq!(s.blank_template(), Some(0));
    }

    #[test]
    fn all_variable_lines_cluster() {
        let mut s = store();
        s.insert_body("12 34", 0);
        assert_eq!(s.insert_body("56 78", 1), (0, false));
    }

    #[test]
    fn dissimilar_lines_split() {
        let mut s = store();
        s.insert_body("user login ok now", 0);
        assert_eq!(s.insert_body("user logout failed badly", 1).1, true);
    }

    #[test]
    fn capacity_overflow_goes_to_wildcard_branch() {
        let mut s = TemplateStore::new(&TemplatizerConfig {
            max_children: 2,
            ..Default::default()
        })
        .unwrap();
        s.insert_body("aa x y z", 0);
        s.insert_body("bb x y z", 1);
        // third distinct first token lands under <*> and forms its own template
        assert_eq!(s.insert_body("cc q r s", 2), (2, true));
        assert_eq!(s.insert_body("dd q r s", 3), (2, false));
        assert_eq!(s.template(2).text(), "<*> q r s");
        assert_eq!(s.insert_body("aa x y w", 4), (0, false));
    }

    #[test]
    fn representative_modes() {
        let mut s = store();
        for i in 0..10 {
            s.insert_body(&format!("worker {i} started"), i);
        }
        assert_eq!(s.representative_set(), BTreeMap::from([(0, 0)]));

        let cfg = TemplatizerConfig {
            representative: RepresentativeMode::Random,
            seed: 7,
            ..Default::default()
        };
        let mut a = TemplateStore::new(&cfg).unwrap();
        for i in 0..10 {
            a.insert_body(&format!("worker {i} started"), i);
        }
        let first = a.representative_set();
        assert_eq!(first, a.representative_set());
        a.finalize();
        assert_eq!(a.template(0).representative_record_id, first[&0]);
    }

    #[test]
    fn rejects_bad_settings() {
        for cfg in [
            TemplatizerConfig { depth: 1, ..Default::default() },
            TemplatizerConfig { sim_threshold: 1.5, ..Default::default() },
            TemplatizerConfig { max_children: 0, ..Default::default() },
            TemplatizerConfig { masks: vec!["(".into()], ..Default::default() },
        ] {
            assert!(TemplateStore::new(&cfg).is_err());
        }
    }
}
