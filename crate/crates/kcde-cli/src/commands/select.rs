use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use kcde::{JointKdTree, SearchConfig, random_search, standardize};
use serde::Serialize;

use crate::MethodArgs;
use crate::csvio;
use crate::manifest::{self, RunManifest};

#[derive(Args, Debug)]
pub struct SelectArgs {
    /// Training data CSV (header row required).
    #[arg(long)]
    pub input: PathBuf,

    /// Response column, by header name or zero-based index; default last.
    #[arg(long)]
    pub y_col: Option<String>,

    #[command(flatten)]
    pub method: MethodArgs,

    /// Upper edge of the bandwidth sampling box.
    #[arg(long, default_value_t = 10.0)]
    pub h_max: f64,

    /// Number of random bandwidth candidates.
    #[arg(long, default_value_t = 300)]
    pub candidates: usize,

    /// kd-tree leaf size.
    #[arg(long, default_value_t = 16)]
    pub leaf_size: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct EffectiveBandwidth {
    column: String,
    value: f64,
}

#[derive(Serialize)]
struct TracePoint {
    h1: f64,
    h2: f64,
    /// Absent when the candidate diverged.
    score: Option<f64>,
}

#[derive(Serialize)]
struct SelectReport {
    method: String,
    h1: f64,
    h2: f64,
    score: f64,
    /// Raw-unit y bandwidth, `h1 * sigma_y`.
    effective_h1: f64,
    /// Raw-unit x bandwidths per predictor, `h2 * sigma_k`.
    effective_h2: Vec<EffectiveBandwidth>,
    candidates: usize,
    diverged_candidates: usize,
    trace: Vec<TracePoint>,
    manifest: RunManifest,
}

pub fn run(args: SelectArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let loaded = csvio::read_dataset(&args.input, args.y_col.as_deref())?;
    let parameters = serde_json::json!({
        "input": args.input.display().to_string(),
        "y_col": loaded.y_name,
        "h_max": args.h_max,
        "candidates": args.candidates,
        "leaf_size": args.leaf_size,
        "likelihood": args.method.parameters(),
    });
    let mut manifest = RunManifest::new("select", args.seed, parameters).with_dataset(
        manifest::fingerprint(&loaded.raw, &loaded.x_names, &loaded.y_name),
    );

    let std = standardize(&loaded.raw)?;
    let tree = JointKdTree::build(&std, args.leaf_size)?;
    let cfg = SearchConfig {
        h_max: args.h_max,
        candidates: args.candidates,
        seed: args.seed,
        method: args.method.to_search_method()?,
    };
    let outcome = random_search(&std, &tree, &cfg)?;

    let diverged = outcome.trace.iter().filter(|t| t.diverged).count();
    let report = SelectReport {
        method: args.method.method.clone(),
        h1: outcome.best.h1,
        h2: outcome.best.h2,
        score: outcome.best_score,
        effective_h1: outcome.best.h1 * std.sigma_y(),
        effective_h2: loaded
            .x_names
            .iter()
            .zip(std.sigma_x())
            .map(|(name, sigma)| EffectiveBandwidth {
                column: name.clone(),
                value: outcome.best.h2 * sigma,
            })
            .collect(),
        candidates: args.candidates,
        diverged_candidates: diverged,
        trace: outcome
            .trace
            .iter()
            .map(|t| TracePoint {
                h1: t.h.h1,
                h2: t.h.h2,
                score: (!t.diverged).then_some(t.score),
            })
            .collect(),
        manifest: manifest.deterministic(),
    };
    manifest::write_output(args.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    manifest.timing_seconds = Some(started.elapsed().as_secs_f64());
    manifest.emit(args.out.as_deref())
}
