mod common;

use common::with_enriched;
use logan_core::bench::{generate, SyntheticCorpusSpec};
use logan_core::broadcast::{enrich_stream, BroadcastConfig};
use logan_core::causal::{build_matrix, CausalGraph, CausalEdge, CausalNode, CausalParams};
use logan_core::reports::{
    assemble_bundle, build_diagnosis, build_summary, build_temporal, reduction, BundleError,
    Counters, Meta, Palette,
};
use logan_core::templatizer::{templatize, TemplatizerConfig};
use logan_core::{GoldenSignal, Labeler};

const ERR3: &str = "2024-05-01 10:00:10 ERROR disk write failed\n\
                    2024-05-01 10:00:50 ERROR disk write failed\n\
                    2024-05-01 10:01:05 ERROR disk write failed\n";

#[test]
fn matrix_buckets_from_earliest_record() {
    // t, t+10s, t+70s
    let text = "2024-05-01 10:00:10 ERROR disk write failed\n\
                2024-05-01 10:00:20 ERROR disk write failed\n\
                2024-05-01 10:01:20 ERROR disk write failed\n";
    with_enriched(&[text], |_, _, recs| {
        let m = build_matrix(recs, 60, &GoldenSignal::PRIORITY);
        assert_eq!(m.series.values().collect::<Vec<_>>(), vec![&vec![2, 1]]);
        assert_eq!(m.total(), 3);
    });
}

#[test]
fn information_only_matrix_is_empty() {
    let text = "2024-05-01 10:00:10 worker started\n2024-05-01 10:03:10 worker started\n";
    with_enriched(&[text], |_, _, recs| {
        let m = build_matrix(recs, 60, &GoldenSignal::PRIORITY);
        assert!(m.is_empty() && m.excluded.is_empty());
    });
}

#[test]
fn constant_series_is_excluded() {
    let text = "2024-05-01 10:00:10 ERROR disk write failed\n\
                2024-05-01 10:01:10 ERROR disk write failed\n\
                2024-05-01 10:02:10 ERROR disk write failed\n";
    with_enriched(&[text], |_, _, recs| {
        let m = build_matrix(recs, 60, &GoldenSignal::PRIORITY);
        assert!(m.series.is_empty());
        assert_eq!(m.excluded.values().next().unwrap(), &vec![1, 1, 1]);
        assert_eq!(m.warnings.len(), 1);
    });
}

#[test]
fn temporal_hand_fixture() {
    with_enriched(&[ERR3], |_, _, recs| {
        let t = build_temporal(recs, 60);
        let errors: Vec<u64> = t.iter().map(|b| b.counts[&GoldenSignal::Error]).collect();
        assert_eq!(errors, vec![2, 1]);
        assert_eq!(t[0].bucket_start.to_rfc3339(), "2024-05-01T10:00:00+00:00");
        assert_eq!(t[1].bucket_start.to_rfc3339(), "2024-05-01T10:01:00+00:00");
        assert!(t.iter().all(|b| b.counts.len() == 6));
    });
    with_enriched(&[""], |_, _, recs| assert!(build_temporal(recs, 60).is_empty()));
}

#[test]
fn temporal_gaps_are_zero_filled() {
    let text = "2024-05-01 10:00:10 a\n2024-05-01 13:20:00 b\n";
    with_enriched(&[text], |_, _, recs| {
        let t = build_temporal(recs, 3600);
        assert_eq!(t.len(), 4);
        assert_eq!(t.iter().map(|b| b.total()).collect::<Vec<_>>(), vec![1, 0, 0, 1]);
    });
}

#[test]
fn diagnosis_examples() {
    let info = "2024-05-01 10:00:10 worker started\n2024-05-01 10:00:20 worker started\n";
    with_enriched(&[info], |_, store, recs| {
        assert!(build_diagnosis(recs, store.blank_template(), 60, 500).0.is_empty());
    });

    let one = "2024-05-01 10:00:10 worker started\n2024-05-01 10:00:20 ERROR disk write failed\n";
    with_enriched(&[one], |_, store, recs| {
        let (w, warn) = build_diagnosis(recs, store.blank_template(), 60, 500);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].record_ids, vec![0, 1]);
        assert!(w[0].trigger_signals.contains(&GoldenSignal::Error));
        assert!(warn.is_empty());
    });

    let apart = "2024-05-01 10:00:10 ERROR disk write failed\n2024-05-01 10:01:40 ERROR disk write failed\n";
    with_enriched(&[apart], |_, store, recs| {
        let (w, _) = build_diagnosis(recs, store.blank_template(), 60, 500);
        assert_eq!(w.len(), 2);
        assert!(w[0].window_start < w[1].window_start);
    });
}

#[test]
fn diagnosis_cap_marks_overflow() {
    let text: String = (0..10).map(|i| format!("2024-05-01 10:00:{i:02} ERROR disk write failed\n")).collect();
    with_enriched(&[&text], |_, store, recs| {
        let (w, _) = build_diagnosis(recs, store.blank_template(), 60, 4);
        assert_eq!(w[0].entries.len(), 4);
        assert_eq!(w[0].overflow, 6);
        assert_eq!(w[0].record_ids.len(), 10);
    });
}

#[test]
fn undated_problems_are_reported() {
    let text = "ERROR disk write failed before any clock\n2024-05-01 10:00:10 ok\n";
    let other = "nothing dated here\n";
    with_enriched(&[other, text], |_, store, recs| {
        // a head record borrows the first timestamp of its file
        let (w, warn) = build_diagnosis(recs, store.blank_template(), 60, 500);
        assert!(warn.is_empty(), "{warn:?}");
        assert_eq!(w.len(), 1);
    });
    with_enriched(&["ERROR disk write failed\n"], |_, store, recs| {
        let (w, warn) = build_diagnosis(recs, store.blank_template(), 60, 500);
        assert!(w.is_empty());
        assert_eq!(warn.len(), 1);
    });
}

#[test]
fn summary_of_thousand_lines_ten_templates() {
    let spec = SyntheticCorpusSpec { n_templates: 10, n_lines: 1000, ..Default::default() };
    let corpus = generate(&spec).unwrap();
    let stream = corpus.stream();
    let store = templatize(&stream, &TemplatizerConfig::default()).unwrap();
    let e = enrich_stream(&stream, &store, &Labeler::rule(), &BroadcastConfig::default());
    let rows = build_summary(&e.records, &stream, &store, &e.template_labels);
    assert_eq!(rows.len(), 10);
    assert!(rows.windows(2).all(|w| (w[0].frequency, w[0].template_id) < (w[1].frequency, w[1].template_id)));
    assert_eq!(rows.iter().map(|r| r.frequency).sum::<usize>(), 1000);
    assert_eq!(reduction(stream.len(), rows.len()), 0.99);
    for r in &rows {
        for en in &r.entities {
            assert_eq!(&r.representative_text[en.start..en.end], en.text);
        }
    }
}

#[test]
fn single_line_summary() {
    with_enriched(&["2024-05-01 10:00:10 hello\n"], |stream, store, recs| {
        let e = enrich_stream(stream, store, &Labeler::rule(), &BroadcastConfig::default());
        let rows = build_summary(recs, stream, store, &e.template_labels);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].frequency, 1);
    });
}

fn meta() -> Meta {
    Meta {
        schema_version: "1.0.0".into(),
        run_id: "0".repeat(64),
        generator: "test".into(),
        inputs: vec![],
        files: vec![],
        config_digest: "0".repeat(64),
        config: serde_json::json!({}),
        granularity: 60,
        temporal_bucket: 3600,
        window_cap: 500,
        counters: Counters::default(),
        palette: Palette::default(),
    }
}

#[test]
fn dangling_edge_is_fatal() {
    let mut g: CausalGraph<f64> = CausalGraph::empty(CausalParams::default());
    g.nodes.push(CausalNode { template_id: 0, text: "x".into(), golden: GoldenSignal::Error });
    g.edges.push(CausalEdge { from: 0, to: 9, lag: 1, f_stat: 3.0, p_value: 0.01 });
    let err = assemble_bundle(meta(), vec![], vec![], vec![], g, vec![]).unwrap_err();
    assert!(matches!(err, BundleError::CrossReference(_)));
}

#[test]
fn empty_bundle_warns() {
    let b = assemble_bundle(meta(), vec![], vec![], vec![], CausalGraph::empty(CausalParams::default()), vec![])
        .unwrap();
    assert_eq!(b.warnings.len(), 1);
    assert_eq!(b.meta.counters.summary_rows, 0);
}
