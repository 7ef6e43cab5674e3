use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::Args;
use kcde::bandwidth::derive_seed;
use kcde::{BandwidthPair, ConditionalDensityModel, KcdeError, standardize};

use crate::csvio;
use crate::manifest::{self, RunManifest};

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Training data CSV the model is fitted on.
    #[arg(long)]
    pub train: PathBuf,

    /// Response column of the training data; default last.
    #[arg(long)]
    pub y_col: Option<String>,

    /// y-kernel bandwidth in standardized units (as reported by select).
    #[arg(long)]
    pub h1: f64,

    /// x-kernel bandwidth in standardized units (as reported by select).
    #[arg(long)]
    pub h2: f64,

    /// Query points CSV with one column per predictor.
    #[arg(long)]
    pub query: PathBuf,

    /// Output the conditional expectation per query row.
    #[arg(long, group = "mode")]
    pub expect: bool,

    /// Output a narrowest prediction interval at miss level alpha.
    #[arg(long, group = "mode", value_name = "ALPHA")]
    pub interval: Option<f64>,

    /// Output the conditional density at this response value.
    #[arg(long, group = "mode", value_name = "Y")]
    pub density: Option<f64>,

    /// Sample count per prediction interval.
    #[arg(long, default_value_t = 5000)]
    pub n_samples: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Write the output CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

enum Mode {
    Expect,
    Interval(f64),
    Density(f64),
}

pub fn run(args: PredictArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let mode = match (args.expect, args.interval, args.density) {
        (true, None, None) => Mode::Expect,
        (false, Some(alpha), None) => Mode::Interval(alpha),
        (false, None, Some(y)) => Mode::Density(y),
        _ => anyhow::bail!("choose exactly one of --expect, --interval, --density"),
    };
    let loaded = csvio::read_dataset(&args.train, args.y_col.as_deref())?;
    let queries = csvio::read_query(&args.query, loaded.raw.d())?;
    let parameters = serde_json::json!({
        "train": args.train.display().to_string(),
        "query": args.query.display().to_string(),
        "y_col": loaded.y_name,
        "h1": args.h1,
        "h2": args.h2,
        "mode": match mode {
            Mode::Expect => serde_json::json!("expect"),
            Mode::Interval(a) => serde_json::json!({"interval": a}),
            Mode::Density(y) => serde_json::json!({"density": y}),
        },
        "n_samples": args.n_samples,
    });
    let mut manifest = RunManifest::new("predict", args.seed, parameters).with_dataset(
        manifest::fingerprint(&loaded.raw, &loaded.x_names, &loaded.y_name),
    );

    let std = standardize(&loaded.raw)?;
    let model = ConditionalDensityModel::new(
        std,
        BandwidthPair {
            h1: args.h1,
            h2: args.h2,
        },
    )?;

    let mut out = String::new();
    match mode {
        Mode::Expect => out.push_str("row,expectation,supported\n"),
        Mode::Interval(_) => out.push_str("row,lo,hi,supported\n"),
        Mode::Density(_) => out.push_str("row,density,supported\n"),
    }
    for (row, x) in queries.iter().enumerate() {
        let line = match mode {
            Mode::Expect => render(row, model.expectation(x).map(|e| format!("{e}")), "")?,
            Mode::Density(y) => render(row, model.density(x, y).map(|d| format!("{d}")), "")?,
            Mode::Interval(alpha) => {
                let mut rng = kcde::seeded_rng(derive_seed(args.seed, row as u64));
                render(
                    row,
                    model
                        .prediction_interval(x, alpha, args.n_samples, &mut rng)
                        .map(|(lo, hi)| format!("{lo},{hi}")),
                    ",",
                )?
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    manifest::write_output(args.out.as_deref(), out.trim_end())?;
    manifest.timing_seconds = Some(started.elapsed().as_secs_f64());
    manifest.emit(args.out.as_deref())
}

/// Unsupported queries become flagged rows rather than run failures.
fn render(row: usize, value: kcde::Result<String>, blank: &str) -> anyhow::Result<String> {
    match value {
        Ok(v) => Ok(format!("{row},{v},true")),
        Err(KcdeError::UnsupportedQuery) => Ok(format!("{row},{blank},false")),
        Err(e) => Err(e).context(format!("query row {row}")),
    }
}
