use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::Args;
use kcde::evalgen::{BimodalSineParams, DecaySeriesParams, FamilyConfig, SyntheticSpec, generate};

use crate::csvio;
use crate::manifest::RunManifest;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Family: bimodal_sine, uniform5d, or decay_series.
    #[arg(long, value_parser = ["bimodal_sine", "uniform5d", "decay_series"])]
    pub family: String,

    #[arg(long)]
    pub n: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output CSV path; generator metadata goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,

    // bimodal_sine parameters
    #[arg(long, default_value_t = 0.0)]
    pub x_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub x_max: f64,
    #[arg(long, default_value_t = 5.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    pub frequency: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0.2)]
    pub flip_prob: f64,

    // decay_series parameters
    #[arg(long, default_value_t = 7)]
    pub lags: usize,
    #[arg(long, default_value_t = 0.5)]
    pub decay_base: f64,
    #[arg(long, default_value_t = 50)]
    pub burn_in: usize,
}

pub fn run(args: SynthArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let (family, family_params) = match args.family.as_str() {
        "bimodal_sine" => {
            let p = BimodalSineParams {
                x_min: args.x_min,
                x_max: args.x_max,
                amplitude: args.amplitude,
                frequency: args.frequency,
                noise_sd: args.noise_sd,
                flip_prob: args.flip_prob,
            };
            (
                FamilyConfig::BimodalSine(p),
                serde_json::json!({
                    "x_min": p.x_min,
                    "x_max": p.x_max,
                    "amplitude": p.amplitude,
                    "frequency": p.frequency,
                    "noise_sd": p.noise_sd,
                    "flip_prob": p.flip_prob,
                }),
            )
        }
        "uniform5d" => (
            FamilyConfig::Uniform5d,
            serde_json::json!({
                "widths": [2, 4, 8, 16, 32],
                "y_dimension": "widest (width 32), support [0, 32]",
            }),
        ),
        "decay_series" => {
            let p = DecaySeriesParams {
                lags: args.lags,
                decay_base: args.decay_base,
                burn_in: args.burn_in,
            };
            (
                FamilyConfig::DecaySeries(p),
                serde_json::json!({
                    "lags": p.lags,
                    "decay_base": p.decay_base,
                    "burn_in": p.burn_in,
                    "noise": "unit Gaussian",
                }),
            )
        }
        other => anyhow::bail!("unknown family {other}"),
    };

    let spec = SyntheticSpec {
        family,
        n: args.n,
        seed: args.seed,
    };
    let (raw, _truth) = generate(&spec)?;
    csvio::write_dataset(&args.out, &raw)?;

    let metadata = serde_json::json!({
        "family": args.family,
        "n": args.n,
        "seed": args.seed,
        "d": raw.d(),
        "columns": (1..=raw.d()).map(|k| format!("x{k}")).chain(["y".into()]).collect::<Vec<String>>(),
        "parameters": family_params,
    });
    let mut meta_path = args.out.as_os_str().to_owned();
    meta_path.push(".meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&metadata)?)
        .with_context(|| format!("writing metadata {meta_path:?}"))?;

    let mut manifest = RunManifest::new("synth", args.seed, metadata);
    manifest.timing_seconds = Some(started.elapsed().as_secs_f64());
    manifest.emit(Some(&args.out))
}
