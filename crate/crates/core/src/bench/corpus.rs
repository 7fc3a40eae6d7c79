//! Seeded synthetic log corpora with per-line ground truth.

use crate::ingest::{assemble_text, consolidate, FormatTable, MasterStream, SourceFile, TimestampFormat};
use crate::labeler::{GoldenSignal, RuleSet, VariableRule};
use crate::templatizer::WILDCARD;
use chrono::{DateTime, SecondsFormat, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("need at least one template and one line per template ({templates} templates, {lines} lines)")]
    TooSmall { templates: usize, lines: usize },
    #[error("sensitive fraction {0} outside [0, 1)")]
    BadFraction(f64),
    #[error("{needed} sensitive lines requested but status-bearing templates only hold {available}")]
    Capacity { needed: usize, available: usize },
    #[error("could not draw {0} distinct patterns; lower the template count")]
    Exhausted(usize),
}

/// Variable kinds, all of which the default masks replace with `<*>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Int,
    Decimal,
    Hex,
    Ipv4,
    Uuid,
    Ident,
    /// HTTP-like status code; benign (2xx/3xx) unless the line is a
    /// sensitive trigger, then 5xx.
    Status,
}

const PLAIN_VARS: [VarKind; 6] =
    [VarKind::Int, VarKind::Decimal, VarKind::Hex, VarKind::Ipv4, VarKind::Uuid, VarKind::Ident];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Lit(String),
    Var(VarKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub id: usize,
    pub slots: Vec<Slot>,
    /// Golden signal of the pattern with benign variable values.
    pub golden: GoldenSignal,
}

impl Pattern {
    pub fn has_status(&self) -> bool {
        self.slots.contains(&Slot::Var(VarKind::Status))
    }

    /// The token sequence the templatizer should recover.
    pub fn template_text(&self) -> String {
        self.slots
            .iter()
            .map(|s| match s {
                Slot::Lit(w) => w.as_str(),
                Slot::Var(_) => WILDCARD,
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn render(&self, rng: &mut ChaCha8Rng, trigger: bool) -> String {
        let mut out = String::new();
        for (i, s) in self.slots.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match s {
                Slot::Lit(w) => out.push_str(w),
                Slot::Var(k) => out.push_str(&value(*k, rng, trigger)),
            }
        }
        out
    }
}

fn value(kind: VarKind, rng: &mut ChaCha8Rng, trigger: bool) -> String {
    match kind {
        VarKind::Int => rng.random_range(0..100_000u32).to_string(),
        VarKind::Decimal => format!("{:.2}", rng.random_range(0.0..1000.0f64)),
        VarKind::Hex => format!("0x{:08x}", rng.random::<u32>()),
        VarKind::Ipv4 => format!(
            "10.{}.{}.{}",
            rng.random_range(0..=255u8),
            rng.random_range(0..=255u8),
            rng.random_range(1..=254u8)
        ),
        VarKind::Uuid => {
            let v: u128 = rng.random();
            let h = format!("{v:032x}");
            format!("{}-{}-{}-{}-{}", &h[0..8], &h[8..12], &h[12..16], &h[16..20], &h[20..32])
        }
        VarKind::Ident => format!("req_{}", rng.random_range(0..10_000u32)),
        VarKind::Status if trigger => ["500", "502", "503", "504"][rng.random_range(0..4)].into(),
        VarKind::Status => ["200", "201", "204", "301", "304"][rng.random_range(0..5)].into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCorpusSpec {
    pub n_templates: usize,
    pub n_lines: usize,
    /// Template frequencies follow `1 / rank^s`.
    pub zipf_exponent: f64,
    /// Share of templates carrying a problematic keyword.
    pub problematic_share: f64,
    /// Share of information templates with a `status <code>` pair.
    pub status_share: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub start_ms: i64,
    pub cadence_ms: u64,
    pub seed: u64,
    /// Lines whose status code is turned to 5xx, as a share of all lines.
    pub sensitive_fraction: f64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            n_templates: 150,
            n_lines: 50_000,
            zipf_exponent: 1.0,
            problematic_share: 0.4,
            status_share: 0.5,
            min_tokens: 6,
            max_tokens: 12,
            start_ms: 1_704_067_200_000,
            cadence_ms: 100,
            seed: 7,
            sensitive_fraction: 0.0,
        }
    }
}

/// Ground truth for one generated line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineTruth {
    pub pattern: usize,
    pub golden: GoldenSignal,
    /// A 5xx status was drawn; only a variable-reading classifier sees it.
    pub trigger: bool,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub patterns: Vec<Pattern>,
    pub lines: Vec<String>,
    pub truth: Vec<LineTruth>,
    /// Patterns that received at least one trigger line.
    pub sensitive_patterns: BTreeSet<usize>,
}

/// The rule emulating a classifier that reads variable values.
pub fn sensitive_rule() -> VariableRule {
    VariableRule { pattern: r"\bstatus 5\d\d\b".into(), golden: GoldenSignal::Error }
}

const KEYWORDS: [(GoldenSignal, &[&str]); 5] = [
    (GoldenSignal::Error, &["error", "failed", "exception", "broken"]),
    (GoldenSignal::Availability, &["unavailable", "refused", "unreachable"]),
    (GoldenSignal::Saturation, &["exceeded", "full", "quota"]),
    (GoldenSignal::Latency, &["timeout", "slow", "latency"]),
    (GoldenSignal::Traffic, &["throughput"]),
];

fn word(rng: &mut ChaCha8Rng) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let n = rng.random_range(2..=4);
    let mut w = String::with_capacity(2 * n);
    for _ in 0..n {
        w.push(C[rng.random_range(0..C.len())] as char);
        w.push(V[rng.random_range(0..V.len())] as char);
    }
    w
}

fn literal_similarity(a: &Pattern, b: &Pattern) -> f64 {
    if a.slots.len() != b.slots.len() {
        return 0.0;
    }
    let same = a
        .slots
        .iter()
        .zip(&b.slots)
        .filter(|(x, y)| matches!((x, y), (Slot::Lit(p), Slot::Lit(q)) if p == q))
        .count();
    same as f64 / a.slots.len() as f64
}

fn draw_pattern(
    id: usize,
    golden: GoldenSignal,
    with_status: bool,
    spec: &SyntheticCorpusSpec,
    rng: &mut ChaCha8Rng,
) -> Pattern {
    let len = rng.random_range(spec.min_tokens.max(5)..=spec.max_tokens.max(spec.min_tokens.max(5)));
    let mut slots: Vec<Slot> = (0..3).map(|_| Slot::Lit(word(rng))).collect();
    let mut tail: Vec<Slot> = Vec::new();
    if let Some((_, kws)) = KEYWORDS.iter().find(|(g, _)| *g == golden) {
        tail.push(Slot::Lit(kws[rng.random_range(0..kws.len())].into()));
    }
    if with_status {
        tail.push(Slot::Lit("status".into()));
        tail.push(Slot::Var(VarKind::Status));
    }
    let n_vars = rng.random_range(1..=3).min(len.saturating_sub(3 + tail.len()));
    for _ in 0..n_vars {
        tail.push(Slot::Var(PLAIN_VARS[rng.random_range(0..PLAIN_VARS.len())]));
    }
    // fill with words, keeping the status pair adjacent
    while 3 + tail.len() < len {
        let at = rng.random_range(0..=tail.len());
        if at > 0 && tail[at - 1] == Slot::Lit("status".into()) {
            continue;
        }
        tail.insert(at, Slot::Lit(word(rng)));
    }
    slots.extend(tail);
    Pattern { id, slots, golden }
}

fn build_pool(spec: &SyntheticCorpusSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Pattern>, CorpusError> {
    let rules = RuleSet::default();
    let n = spec.n_templates;
    let n_problem = (spec.problematic_share * n as f64).round() as usize;
    let mut pool: Vec<Pattern> = Vec::with_capacity(n);
    let mut first_words = BTreeSet::new();
    let mut attempts = 0;
    while pool.len() < n {
        attempts += 1;
        if attempts > 200 * n + 1000 {
            return Err(CorpusError::Exhausted(n));
        }
        let id = pool.len();
        // interleave problematic templates across frequency ranks
        let golden = if n_problem > 0 && (id * n_problem) / n != ((id + 1) * n_problem) / n {
            KEYWORDS[rng.random_range(0..KEYWORDS.len())].0
        } else {
            GoldenSignal::Information
        };
        let with_status = golden == GoldenSignal::Information && rng.random_bool(spec.status_share);
        let p = draw_pattern(id, golden, with_status, spec, rng);
        let Slot::Lit(first) = &p.slots[0] else { unreachable!() };
        if first_words.contains(first) {
            continue;
        }
        let benign = p.render(rng, false);
        if rules.golden(&benign) != golden {
            continue;
        }
        if pool.iter().any(|q| literal_similarity(&p, q) >= 0.3) {
            continue;
        }
        first_words.insert(first.clone());
        pool.push(p);
    }
    Ok(pool)
}

pub fn generate(spec: &SyntheticCorpusSpec) -> Result<Corpus, CorpusError> {
    if spec.n_templates == 0 || spec.n_lines < spec.n_templates {
        return Err(CorpusError::TooSmall { templates: spec.n_templates, lines: spec.n_lines });
    }
    if !(0.0..1.0).contains(&spec.sensitive_fraction) {
        return Err(CorpusError::BadFraction(spec.sensitive_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let patterns = build_pool(spec, &mut rng)?;

    let weights: Vec<f64> =
        (1..=patterns.len()).map(|r| 1.0 / (r as f64).powf(spec.zipf_exponent)).collect();
    let dist = WeightedIndex::new(&weights).expect("positive weights");
    let mut assign: Vec<usize> = (0..spec.n_lines).map(|_| dist.sample(&mut rng)).collect();

    // every pattern appears at least once: unseen ones take over random
    // lines of patterns that can spare one
    let mut counts = vec![0usize; patterns.len()];
    for &a in &assign {
        counts[a] += 1;
    }
    for p in 0..patterns.len() {
        while counts[p] == 0 {
            let at = rng.random_range(0..assign.len());
            let q = assign[at];
            if counts[q] > 1 {
                counts[q] -= 1;
                counts[p] += 1;
                assign[at] = p;
            }
        }
    }

    // trigger lines: never the first occurrence, so the broadcast
    // representative stays benign
    let needed = (spec.sensitive_fraction * spec.n_lines as f64).round() as usize;
    let mut trigger = vec![false; spec.n_lines];
    let mut sensitive_patterns = BTreeSet::new();
    if needed > 0 {
        let mut by_freq: Vec<usize> = (0..patterns.len()).filter(|&p| patterns[p].has_status()).collect();
        by_freq.sort_by_key(|&p| (std::cmp::Reverse(counts[p]), p));
        let mut chosen = BTreeSet::new();
        let mut capacity = 0;
        for p in by_freq {
            if capacity >= needed {
                break;
            }
            chosen.insert(p);
            capacity += counts[p] - 1;
        }
        if capacity < needed {
            return Err(CorpusError::Capacity { needed, available: capacity });
        }
        let mut seen = vec![false; patterns.len()];
        let mut eligible = Vec::with_capacity(capacity);
        for (i, &a) in assign.iter().enumerate() {
            if std::mem::replace(&mut seen[a], true) && chosen.contains(&a) {
                eligible.push(i);
            }
        }
        for k in sample(&mut rng, eligible.len(), needed) {
            let line = eligible[k];
            trigger[line] = true;
            sensitive_patterns.insert(assign[line]);
        }
    }

    let mut lines = Vec::with_capacity(spec.n_lines);
    let mut truth = Vec::with_capacity(spec.n_lines);
    for (i, &a) in assign.iter().enumerate() {
        let ts = DateTime::<Utc>::from_timestamp_millis(spec.start_ms + (i as u64 * spec.cadence_ms) as i64)
            .expect("timestamp in range")
            .to_rfc3339_opts(SecondsFormat::Millis, true);
        let p = &patterns[a];
        lines.push(format!("{ts} {}", p.render(&mut rng, trigger[i])));
        truth.push(LineTruth {
            pattern: a,
            golden: if trigger[i] { GoldenSignal::Error } else { p.golden },
            trigger: trigger[i],
        });
    }
    Ok(Corpus { patterns, lines, truth, sensitive_patterns })
}

impl Corpus {
    pub fn text(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }

    /// The corpus as a single-file stream, one record per line.
    pub fn stream(&self) -> MasterStream {
        let text = self.text();
        let table = FormatTable::new(&[TimestampFormat::Iso8601], 1970);
        let a = assemble_text(&text, 0, &table);
        let file = SourceFile {
            path: "synthetic.log".into(),
            index: 0,
            byte_size: text.len() as u64,
            line_count: a.line_count,
        };
        consolidate(vec![file], vec![a.records])
    }

    pub fn trigger_count(&self) -> usize {
        self.truth.iter().filter(|t| t.trigger).count()
    }
}
