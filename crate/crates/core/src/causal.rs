//! Per-template count series and pairwise Granger causality.

use crate::broadcast::EnrichedRecord;
use crate::ingest::Timestamp;
use crate::labeler::GoldenSignal;
use crate::scalar::Scalar;
use crate::stats::{f_survival, ols_fit, variance, Design, OlsError};
use crate::templatizer::TemplateId;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CausalParams {
    /// Bucket width in seconds.
    pub interval: u64,
    pub max_lag: usize,
    pub alpha: f64,
    /// Test first differences instead of raw counts.
    pub difference: bool,
    /// Longer time spans skip the causal graph rather than allocate
    /// enormous series (a mis-dated file can stretch the span by decades).
    pub max_intervals: usize,
}

impl Default for CausalParams {
    fn default() -> Self {
        Self { interval: 60, max_lag: 3, alpha: 0.05, difference: false, max_intervals: 20_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesMatrix {
    pub interval: u64,
    pub start: Option<Timestamp>,
    pub end: Option<Timestamp>,
    pub n_intervals: usize,
    pub series: BTreeMap<TemplateId, Vec<u64>>,
    /// Constant series, left out of the tests.
    pub excluded: BTreeMap<TemplateId, Vec<u64>>,
    pub warnings: Vec<String>,
}

impl TimeSeriesMatrix {
    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Sum of every count, tested or excluded.
    pub fn total(&self) -> u64 {
        self.series.values().chain(self.excluded.values()).flatten().sum()
    }
}

/// Number of intervals [`build_matrix`] would allocate per series.
pub fn interval_count(enriched: &[EnrichedRecord<'_>], interval: u64, signals: &[GoldenSignal]) -> usize {
    let dated = enriched
        .iter()
        .filter(|e| signals.contains(&e.labels.golden))
        .filter_map(|e| e.record.effective_ts);
    match (dated.clone().min(), dated.max()) {
        (Some(a), Some(b)) => ((b - a).num_milliseconds() / (interval as i64 * 1000)) as usize + 1,
        _ => 0,
    }
}

/// Counts records per template per interval, for templates whose golden
/// signal is in `signals`. Buckets start at the earliest included record.
pub fn build_matrix(
    enriched: &[EnrichedRecord<'_>],
    interval: u64,
    signals: &[GoldenSignal],
) -> TimeSeriesMatrix {
    assert!(interval > 0, "interval must be positive");
    let included: Vec<(TemplateId, Timestamp)> = enriched
        .iter()
        .filter(|e| signals.contains(&e.labels.golden))
        .filter_map(|e| e.record.effective_ts.map(|t| (e.template_id, t)))
        .collect();
    let (Some(start), Some(last)) = (
        included.iter().map(|(_, t)| *t).min(),
        included.iter().map(|(_, t)| *t).max(),
    ) else {
        return TimeSeriesMatrix { interval, ..Default::default() };
    };
    let width = interval as i64 * 1000;
    let bucket = |t: Timestamp| ((t - start).num_milliseconds() / width) as usize;
    let n = bucket(last) + 1;

    let mut all: BTreeMap<TemplateId, Vec<u64>> = BTreeMap::new();
    for (tid, t) in included {
        all.entry(tid).or_insert_with(|| vec![0; n])[bucket(t)] += 1;
    }
    let mut m = TimeSeriesMatrix {
        interval,
        start: Some(start),
        end: Some(start + chrono::Duration::milliseconds(width * n as i64)),
        n_intervals: n,
        ..Default::default()
    };
    for (tid, s) in all {
        if s.iter().all(|&c| c == s[0]) {
            m.warnings.push(format!("template {tid}: constant series excluded from causal tests"));
            m.excluded.insert(tid, s);
        } else {
            m.series.insert(tid, s);
        }
    }
    m
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrangerError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("lag must be at least 1")]
    ZeroLag,
    #[error("{n} observations are too few for lag {lag}")]
    InsufficientData { n: usize, lag: usize },
    #[error("degenerate design: {0}")]
    Degenerate(#[from] OlsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrangerResult<F> {
    pub f_stat: F,
    pub p_value: F,
    pub lag: usize,
    pub df_num: usize,
    pub df_den: usize,
}

fn design<F: Scalar>(x: Option<&[F]>, y: &[F], lag: usize) -> Design<F> {
    let n = y.len();
    let cols = 1 + lag * if x.is_some() { 2 } else { 1 };
    let mut d = Design::zeros(n - lag, cols);
    for (row, t) in (lag..n).enumerate() {
        d.set(row, 0, F::one());
        for i in 1..=lag {
            d.set(row, i, y[t - i]);
            if let Some(x) = x {
                d.set(row, lag + i, x[t - i]);
            }
        }
    }
    d
}

/// Does `x` help predict `y`? Compares `y` on its own lags against `y` on
/// its own lags plus lags of `x`, with an F test.
pub fn granger_test<F: Scalar>(x: &[F], y: &[F], lag: usize) -> Result<GrangerResult<F>, GrangerError> {
    if x.len() != y.len() {
        return Err(GrangerError::LengthMismatch(x.len(), y.len()));
    }
    if lag == 0 {
        return Err(GrangerError::ZeroLag);
    }
    let n = y.len();
    if n < 3 * lag + 2 {
        return Err(GrangerError::InsufficientData { n, lag });
    }
    let target = &y[lag..];
    let restricted = ols_fit(&design(None, y, lag), target)?;
    let unrestricted = ols_fit(&design(Some(x), y, lag), target)?;
    let df_num = lag;
    let df_den = n - 3 * lag - 1;
    let delta = restricted.rss - unrestricted.rss;
    let (f_stat, p_value) = if delta <= F::zero() {
        (F::zero(), F::one())
    } else if unrestricted.rss <= F::zero() {
        (F::infinity(), F::zero())
    } else {
        let f = (delta / F::from_count(df_num)) / (unrestricted.rss / F::from_count(df_den));
        (f, f_survival(f, F::from_count(df_num), F::from_count(df_den)))
    };
    Ok(GrangerResult { f_stat, p_value, lag, df_num, df_den })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalNode {
    pub template_id: TemplateId,
    /// Representative line.
    pub text: String,
    pub golden: GoldenSignal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEdge<F> {
    pub from: TemplateId,
    pub to: TemplateId,
    pub lag: usize,
    #[serde(rename = "f")]
    pub f_stat: F,
    /// Bonferroni-adjusted p value.
    #[serde(rename = "p")]
    pub p_value: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct CausalGraph<F> {
    pub nodes: Vec<CausalNode>,
    pub edges: Vec<CausalEdge<F>>,
    pub params: CausalParams,
}

impl<F> CausalGraph<F> {
    pub fn empty(params: CausalParams) -> Self {
        Self { nodes: Vec::new(), edges: Vec::new(), params }
    }

    pub fn has_edge(&self, from: TemplateId, to: TemplateId) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to)
    }
}

fn prepare<F: Scalar>(s: &[u64], difference: bool) -> Vec<F> {
    let v: Vec<F> = s.iter().map(|&c| F::lit(c as f64)).collect();
    if difference {
        v.windows(2).map(|w| w[1] - w[0]).collect()
    } else {
        v
    }
}

#[derive(Debug, Clone)]
pub struct LagSearch<F> {
    /// The lag with the smallest p value.
    pub best: Option<GrangerResult<F>>,
    /// `best.p_value × max_lag`, capped at 1; 1 when nothing was testable.
    pub adjusted_p: F,
    /// Lags whose fit failed for reasons other than running out of data.
    pub errors: Vec<(usize, GrangerError)>,
}

/// Does `x` Granger-cause `y` at any lag in `1..=max_lag`? The smallest p
/// value is Bonferroni-corrected for the number of lags tried.
pub fn search_lags<F: Scalar>(x: &[F], y: &[F], max_lag: usize) -> LagSearch<F> {
    let mut best: Option<GrangerResult<F>> = None;
    let mut errors = Vec::new();
    for lag in 1..=max_lag {
        match granger_test(x, y, lag) {
            Ok(r) => {
                if best.is_none_or(|b| r.p_value < b.p_value) {
                    best = Some(r);
                }
            }
            Err(GrangerError::InsufficientData { .. }) => break,
            Err(e) => errors.push((lag, e)),
        }
    }
    let adjusted_p = best.map_or(F::one(), |b| (b.p_value * F::from_count(max_lag.max(1))).min(F::one()));
    LagSearch { best, adjusted_p, errors }
}

/// Tests every ordered pair of series at lags `1..=max_lag`. An edge is kept
/// when the smallest p value, times `max_lag`, is below `alpha`. Every
/// series becomes a node, connected or not.
pub fn build_graph<F: Scalar>(
    matrix: &TimeSeriesMatrix,
    params: &CausalParams,
    describe: impl Fn(TemplateId) -> (String, GoldenSignal),
) -> (CausalGraph<F>, Vec<String>) {
    let ids: Vec<TemplateId> = matrix.series.keys().copied().collect();
    let data: Vec<Vec<F>> =
        matrix.series.values().map(|s| prepare(s, params.difference)).collect();
    let nodes = ids
        .iter()
        .map(|&tid| {
            let (text, golden) = describe(tid);
            CausalNode { template_id: tid, text, golden }
        })
        .collect();

    let pairs: Vec<(usize, usize)> = (0..ids.len())
        .flat_map(|i| (0..ids.len()).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let alpha = F::lit(params.alpha);

    let results: Vec<(Option<CausalEdge<F>>, Vec<String>)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (x, y) = (&data[i], &data[j]);
            if variance(x) == F::zero() || variance(y) == F::zero() {
                return (None, Vec::new());
            }
            let search = search_lags(x, y, params.max_lag);
            let warnings = search
                .errors
                .iter()
                .map(|(lag, e)| format!("granger {} -> {} at lag {lag} skipped: {e}", ids[i], ids[j]))
                .collect();
            let edge = search.best.filter(|_| search.adjusted_p < alpha).map(|b| CausalEdge {
                from: ids[i],
                to: ids[j],
                lag: b.lag,
                f_stat: b.f_stat,
                p_value: search.adjusted_p,
            });
            (edge, warnings)
        })
        .collect();

    let mut edges = Vec::new();
    let mut warnings = Vec::new();
    for (e, w) in results {
        edges.extend(e);
        warnings.extend(w);
    }
    (CausalGraph { nodes, edges, params: params.clone() }, warnings)
}
