//! Call-count and agreement experiments on synthetic corpora.

mod corpus;

pub use corpus::{
    generate, sensitive_rule, Corpus, CorpusError, LineTruth, Pattern, Slot, SyntheticCorpusSpec,
    VarKind,
};

use crate::broadcast::{enrich_per_line, enrich_stream, BroadcastConfig};
use crate::labeler::{KeywordTables, Labeler, LabelerError, MaskedInput, RuleBackend, Task};
use crate::templatizer::{templatize, TemplateStore, TemplatizerConfig, TemplatizerError};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Templatizer(#[from] TemplatizerError),
    #[error(transparent)]
    Labeler(#[from] LabelerError),
    #[error("increments must be positive and strictly ascending, got {0:?}")]
    BadIncrements(Vec<usize>),
}

/// `step, 2·step, …` up to `n`, always ending at `n`.
pub fn increments(n: usize, step: usize) -> Vec<usize> {
    let step = step.max(1);
    let mut v: Vec<usize> = (1..).map(|k| k * step).take_while(|&x| x < n).collect();
    v.push(n);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq1Point {
    pub lines: usize,
    pub templates: usize,
    /// Cumulative lines sent to the classifier per task.
    pub lb_calls: usize,
    pub per_line_calls: usize,
    /// Templates first seen inside this increment.
    pub new_templates: usize,
    /// `calls × per_call_latency`, seconds.
    pub lb_inference_s: f64,
    pub per_line_inference_s: f64,
    /// Wall time actually spent here, seconds; zero when not measured.
    pub lb_measured_s: f64,
    pub per_line_measured_s: f64,
}

impl Rq1Point {
    pub fn lb_total_s(&self) -> f64 {
        self.lb_inference_s + self.lb_measured_s
    }

    pub fn per_line_total_s(&self) -> f64 {
        self.per_line_inference_s + self.per_line_measured_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq1Report {
    pub n_lines: usize,
    pub n_templates: usize,
    pub per_call_latency_ms: f64,
    pub points: Vec<Rq1Point>,
}

impl Rq1Report {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "lines,templates,new_templates,lb_calls,per_line_calls,lb_inference_s,per_line_inference_s,lb_total_s,per_line_total_s\n",
        );
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                p.lines,
                p.templates,
                p.new_templates,
                p.lb_calls,
                p.per_line_calls,
                p.lb_inference_s,
                p.per_line_inference_s,
                p.lb_total_s(),
                p.per_line_total_s()
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct Rq1Options {
    pub per_call_latency: Duration,
    /// Cumulative line counts at which to sample the curves.
    pub increments: Vec<usize>,
    /// Also run the per-line classifier to measure its wall time. Its call
    /// count is the line count either way.
    pub measure_per_line: bool,
}

/// Streams the corpus through an online broadcaster (a template is labeled
/// when first seen) and a per-line baseline, sampling cumulative call counts
/// and simulated inference time at each increment.
pub fn run_rq1(
    spec: &SyntheticCorpusSpec,
    labeler: &Labeler,
    opts: &Rq1Options,
) -> Result<Rq1Report, BenchError> {
    let inc = &opts.increments;
    if inc.is_empty() || inc[0] == 0 || inc.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::BadIncrements(inc.clone()));
    }
    let corpus = generate(spec)?;
    let stream = corpus.stream();
    let per_call = opts.per_call_latency.as_secs_f64();
    let mut store = TemplateStore::new(&TemplatizerConfig::default())?;

    let mut points = Vec::with_capacity(inc.len());
    let (mut lb_calls, mut templates, mut prev) = (0, 0, 0);
    let (mut lb_time, mut pl_time) = (Duration::ZERO, Duration::ZERO);
    for &end in inc {
        let end = end.min(stream.len());
        let chunk = &stream.records[prev.min(end)..end];

        let started = Instant::now();
        let mut new_templates = 0;
        for r in chunk {
            let (tid, is_new) = store.insert_body(r.body(), r.record_id);
            if is_new && !store.template(tid).blank {
                labeler.classify(&[r.body()]);
                new_templates += 1;
            }
        }
        lb_time += started.elapsed();
        lb_calls += new_templates;
        templates += new_templates;

        if opts.measure_per_line {
            let started = Instant::now();
            let bodies: Vec<&str> = chunk.iter().map(|r| r.body()).collect();
            labeler.classify(&bodies);
            pl_time += started.elapsed();
        }

        points.push(Rq1Point {
            lines: end,
            templates,
            lb_calls,
            per_line_calls: end,
            new_templates,
            lb_inference_s: lb_calls as f64 * per_call,
            per_line_inference_s: end as f64 * per_call,
            lb_measured_s: lb_time.as_secs_f64(),
            per_line_measured_s: pl_time.as_secs_f64(),
        });
        prev = end;
    }
    Ok(Rq1Report {
        n_lines: stream.len(),
        n_templates: spec.n_templates,
        per_call_latency_ms: per_call * 1000.0,
        points,
    })
}

/// Golden-signal agreement between broadcast and per-line labeling.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub lines: usize,
    pub identical: usize,
    pub differing: usize,
    pub both_wrong: usize,
    pub only_lb_correct: usize,
    pub only_per_line_correct: usize,
    /// Lines the generator built to diverge.
    pub expected_differing: usize,
    pub lb_calls: usize,
    pub per_line_calls: usize,
}

impl AgreementReport {
    pub fn differing_rate(&self) -> f64 {
        if self.lines == 0 {
            0.0
        } else {
            self.differing as f64 / self.lines as f64
        }
    }
}

/// Two rule labelers over the default tables, optionally with the
/// variable-reading rule, optionally fed masked text.
pub fn rq2_labelers(variable_rule: bool, template_pure: bool) -> Result<(Labeler, Labeler), BenchError> {
    let mut tables = KeywordTables::default();
    if variable_rule {
        tables.variable_rules.push(sensitive_rule());
    }
    let make = || -> Result<Labeler, BenchError> {
        let rule = RuleBackend::new(&tables)?;
        let fallback = rule.clone();
        Ok(if template_pure {
            let masker = TemplateStore::new(&TemplatizerConfig::default())?.masker().clone();
            Labeler::new(Arc::new(MaskedInput::new(rule, masker)), fallback)
        } else {
            Labeler::new(Arc::new(rule), fallback)
        })
    };
    Ok((make()?, make()?))
}

/// Labels the corpus once with broadcasting (`lb`) and once per line, then
/// compares golden signals record by record against the generator's truth.
pub fn run_rq2(
    spec: &SyntheticCorpusSpec,
    lb: &Labeler,
    per_line: &Labeler,
) -> Result<AgreementReport, BenchError> {
    let corpus = generate(spec)?;
    let stream = corpus.stream();
    let store = templatize(&stream, &TemplatizerConfig::default())?;
    let cfg = BroadcastConfig::default();
    let a = enrich_stream(&stream, &store, lb, &cfg);
    let b = enrich_per_line(&stream, &store, per_line, &cfg);

    let mut r = AgreementReport {
        lines: stream.len(),
        expected_differing: corpus.trigger_count(),
        lb_calls: a.stats.calls(Task::Gsc),
        per_line_calls: b.stats.calls(Task::Gsc),
        ..Default::default()
    };
    for ((x, y), truth) in a.records.iter().zip(&b.records).zip(&corpus.truth) {
        debug_assert_eq!(x.record.record_id, y.record.record_id);
        if x.labels.golden == y.labels.golden {
            r.identical += 1;
            continue;
        }
        r.differing += 1;
        match (x.labels.golden == truth.golden, y.labels.golden == truth.golden) {
            (true, _) => r.only_lb_correct += 1,
            (false, true) => r.only_per_line_correct += 1,
            (false, false) => r.both_wrong += 1,
        }
    }
    Ok(r)
}
