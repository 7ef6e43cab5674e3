use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use kcde::SearchConfig;
use kcde::evalgen::{
    BimodalSineParams, CvConfig, DecaySeriesParams, FamilyConfig, MetricsReport, Selector,
    SyntheticSpec, cross_validate, generate,
};
use serde::Serialize;

use crate::MethodArgs;
use crate::csvio;
use crate::manifest::{self, RunManifest};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Synthetic family with known truth: bimodal_sine, uniform5d, decay_series.
    #[arg(long, group = "source", value_parser = ["bimodal_sine", "uniform5d", "decay_series"])]
    pub family: Option<String>,

    /// Evaluate a real dataset instead (no ISE; the truth is unknown).
    #[arg(long, group = "source")]
    pub input: Option<PathBuf>,

    /// Response column for --input; default last.
    #[arg(long)]
    pub y_col: Option<String>,

    /// Points to generate for a synthetic family.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub method: MethodArgs,

    #[arg(long, default_value_t = 10.0)]
    pub h_max: f64,

    #[arg(long, default_value_t = 300)]
    pub candidates: usize,

    #[arg(long, default_value_t = 16)]
    pub leaf_size: usize,

    /// Prediction-interval miss level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Samples per prediction interval.
    #[arg(long, default_value_t = 5000)]
    pub n_samples: usize,

    /// Also cross-validate with reference-rule bandwidths, side by side.
    #[arg(long)]
    pub compare_reference: bool,

    /// Metrics to report: auto, or a comma list of ise,mse,coverage,width.
    #[arg(long, default_value = "auto", value_delimiter = ',')]
    pub metrics: Vec<String>,

    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct MetricsJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    ise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_half_width_ratio: Option<f64>,
    excluded_points: usize,
    folds: usize,
}

#[derive(Serialize)]
struct EvalReport {
    source: serde_json::Value,
    n: usize,
    d: usize,
    alpha: f64,
    likelihood: MetricsJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<MetricsJson>,
    manifest: RunManifest,
}

struct MetricChoice {
    ise: bool,
    mse: bool,
    coverage: bool,
    width: bool,
}

fn parse_metrics(spec: &[String], truth_known: bool) -> anyhow::Result<MetricChoice> {
    if spec.len() == 1 && spec[0] == "auto" {
        return Ok(MetricChoice {
            ise: truth_known,
            mse: true,
            coverage: true,
            width: true,
        });
    }
    let mut choice = MetricChoice {
        ise: false,
        mse: false,
        coverage: false,
        width: false,
    };
    for m in spec {
        match m.as_str() {
            "ise" => {
                if !truth_known {
                    anyhow::bail!(
                        "unsupported metric: ise requires a synthetic family with known truth"
                    );
                }
                choice.ise = true;
            }
            "mse" => choice.mse = true,
            "coverage" => choice.coverage = true,
            "width" => choice.width = true,
            other => anyhow::bail!("unknown metric {other}"),
        }
    }
    Ok(choice)
}

fn to_json(report: &MetricsReport, choice: &MetricChoice) -> MetricsJson {
    MetricsJson {
        ise: if choice.ise { report.ise } else { None },
        mse: choice.mse.then_some(report.mse),
        coverage: choice.coverage.then_some(report.coverage),
        mean_half_width_ratio: choice.width.then_some(report.mean_half_width_ratio),
        excluded_points: report.excluded_points,
        folds: report.folds,
    }
}

pub fn run(args: EvalArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let (raw, truth, source, x_names, y_name) = match (&args.family, &args.input) {
        (Some(family), None) => {
            let config = match family.as_str() {
                "bimodal_sine" => FamilyConfig::BimodalSine(BimodalSineParams::default()),
                "uniform5d" => FamilyConfig::Uniform5d,
                "decay_series" => FamilyConfig::DecaySeries(DecaySeriesParams::default()),
                other => anyhow::bail!("unknown family {other}"),
            };
            let spec = SyntheticSpec {
                family: config,
                n: args.n,
                seed: args.seed,
            };
            let (raw, truth) = generate(&spec)?;
            let names: Vec<String> = (1..=raw.d()).map(|k| format!("x{k}")).collect();
            (
                raw,
                Some(truth),
                serde_json::json!({ "family": family, "n": args.n }),
                names,
                "y".to_string(),
            )
        }
        (None, Some(path)) => {
            let loaded = csvio::read_dataset(path, args.y_col.as_deref())?;
            (
                loaded.raw,
                None,
                serde_json::json!({ "input": path.display().to_string() }),
                loaded.x_names,
                loaded.y_name,
            )
        }
        _ => anyhow::bail!("provide exactly one of --family or --input"),
    };
    let choice = parse_metrics(&args.metrics, truth.is_some())?;

    let parameters = serde_json::json!({
        "source": source,
        "alpha": args.alpha,
        "n_samples": args.n_samples,
        "h_max": args.h_max,
        "candidates": args.candidates,
        "leaf_size": args.leaf_size,
        "compare_reference": args.compare_reference,
        "likelihood": args.method.parameters(),
    });
    let mut manifest = RunManifest::new("eval", args.seed, parameters)
        .with_dataset(manifest::fingerprint(&raw, &x_names, &y_name));

    let search = SearchConfig {
        h_max: args.h_max,
        candidates: args.candidates,
        seed: args.seed,
        method: args.method.to_search_method()?,
    };
    let cv = CvConfig {
        selector: Selector::Likelihood(search),
        alpha: args.alpha,
        interval_samples: args.n_samples,
        leaf_size: args.leaf_size,
        seed: args.seed,
    };
    let likelihood = cross_validate(&raw, truth.as_ref(), &cv)?;
    let reference = if args.compare_reference {
        let cv = CvConfig {
            selector: Selector::ReferenceRule,
            ..cv
        };
        Some(cross_validate(&raw, truth.as_ref(), &cv)?)
    } else {
        None
    };

    let report = EvalReport {
        source,
        n: raw.n(),
        d: raw.d(),
        alpha: args.alpha,
        likelihood: to_json(&likelihood, &choice),
        reference: reference.map(|r| to_json(&r, &choice)),
        manifest: manifest.deterministic(),
    };
    manifest::write_output(args.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    manifest.timing_seconds = Some(started.elapsed().as_secs_f64());
    manifest.emit(args.out.as_deref())
}
