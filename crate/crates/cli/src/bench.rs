use crate::Failure;
use clap::{Args, Subcommand};
use logan_core::bench::{increments, rq2_labelers, run_rq1, run_rq2, BenchError, Rq1Options, SyntheticCorpusSpec};
use logan_core::Labeler;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Subcommand)]
pub enum BenchCmd {
    /// Classifier calls and simulated time as lines accumulate.
    Rq1(Rq1Args),
    /// Label agreement between broadcast and per-line classification.
    Rq2(Rq2Args),
}

#[derive(Args)]
pub struct Rq1Args {
    #[arg(long, default_value_t = 100_000)]
    lines: usize,
    #[arg(long, default_value_t = 200)]
    templates: usize,
    /// Lines per increment.
    #[arg(long, default_value_t = 10_000)]
    step: usize,
    /// Simulated classifier latency per call.
    #[arg(long, default_value_t = 20.0)]
    latency_ms: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Also time the per-line classifier (slow on large corpora).
    #[arg(long)]
    measure_per_line: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct Rq2Args {
    #[arg(long, default_value_t = 50_000)]
    lines: usize,
    #[arg(long, default_value_t = 150)]
    templates: usize,
    /// Share of lines whose label depends on a variable value.
    #[arg(long, default_value_t = 0.0937)]
    sensitive_fraction: f64,
    /// Feed both classifiers masked text, which removes the divergence.
    #[arg(long)]
    template_pure: bool,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn fail(e: BenchError) -> Failure {
    match e {
        BenchError::Corpus(_) | BenchError::BadIncrements(_) => Failure::Usage(e.to_string()),
        e => Failure::Runtime(e.to_string()),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
    Ok(p)
}

pub fn run(cmd: BenchCmd) -> Result<(), Failure> {
    match cmd {
        BenchCmd::Rq1(a) => {
            if !(a.latency_ms.is_finite() && a.latency_ms >= 0.0) {
                return Err(Failure::Usage("--latency-ms must be a non-negative number".into()));
            }
            let spec = SyntheticCorpusSpec { n_lines: a.lines, n_templates: a.templates, seed: a.seed, ..Default::default() };
            let opts = Rq1Options {
                per_call_latency: Duration::from_secs_f64(a.latency_ms / 1000.0),
                increments: increments(a.lines, a.step),
                measure_per_line: a.measure_per_line,
            };
            let r = run_rq1(&spec, &Labeler::rule(), &opts).map_err(fail)?;
            write(&a.out, "rq1.csv", &r.to_csv())?;
            let series = json!({
                "lines": r.points.iter().map(|p| p.lines).collect::<Vec<_>>(),
                "with_broadcast_s": r.points.iter().map(|p| p.lb_total_s()).collect::<Vec<_>>(),
                "per_line_s": r.points.iter().map(|p| p.per_line_total_s()).collect::<Vec<_>>(),
                "with_broadcast_calls": r.points.iter().map(|p| p.lb_calls).collect::<Vec<_>>(),
                "per_line_calls": r.points.iter().map(|p| p.per_line_calls).collect::<Vec<_>>(),
            });
            let doc = json!({ "report": r, "series": series });
            write(&a.out, "rq1.json", &serde_json::to_string_pretty(&doc).expect("json"))?;
            let last = r.points.last().expect("at least one increment");
            println!(
                "rq1: {} lines, {} templates; calls {} vs {} ({:.2}% fewer); simulated {:.2} s vs {:.2} s -> {}",
                last.lines,
                last.templates,
                last.lb_calls,
                last.per_line_calls,
                100.0 * (1.0 - last.lb_calls as f64 / last.per_line_calls.max(1) as f64),
                last.lb_inference_s,
                last.per_line_inference_s,
                a.out.display()
            );
        }
        BenchCmd::Rq2(a) => {
            let spec = SyntheticCorpusSpec {
                n_lines: a.lines,
                n_templates: a.templates,
                seed: a.seed,
                sensitive_fraction: a.sensitive_fraction,
                ..Default::default()
            };
            let (lb, pl) = rq2_labelers(true, a.template_pure).map_err(fail)?;
            let r = run_rq2(&spec, &lb, &pl).map_err(fail)?;
            let doc = json!({ "report": r, "differing_rate": r.differing_rate(), "template_pure": a.template_pure });
            write(&a.out, "rq2.json", &serde_json::to_string_pretty(&doc).expect("json"))?;
            let csv = format!(
                "category,count\nidentical,{}\ndiffering,{}\nboth_wrong,{}\nonly_lb_correct,{}\nonly_per_line_correct,{}\n",
                r.identical, r.differing, r.both_wrong, r.only_lb_correct, r.only_per_line_correct
            );
            write(&a.out, "rq2.csv", &csv)?;
            println!(
                "rq2: {} lines, {} identical, {} differing ({:.2}%), expected {} -> {}",
                r.lines,
                r.identical,
                r.differing,
                100.0 * r.differing_rate(),
                r.expected_differing,
                a.out.display()
            );
        }
    }
    Ok(())
}
