//! Command-line front end: CSV ingestion, bandwidth selection, conditional
//! density queries, synthetic data generation, pipeline evaluation, and the
//! naive / deterministic / probabilistic benchmark harness.

mod commands;
mod csvio;
mod manifest;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "kcde",
    version,
    about = "Kernel conditional density estimation with fast bandwidth selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select bandwidths by random search over the cross-validated likelihood.
    Select(commands::select::SelectArgs),
    /// Evaluate density, expectation, or prediction intervals at query points.
    Predict(commands::predict::PredictArgs),
    /// Time and error-check the likelihood evaluators across dataset sizes.
    Bench(commands::bench::BenchArgs),
    /// Generate a synthetic dataset with a known true conditional density.
    Synth(commands::synth::SynthArgs),
    /// Cross-validate the full pipeline and report quality metrics.
    Eval(commands::eval::EvalArgs),
}

/// Evaluator tuning knobs shared by every likelihood-scoring command.
#[derive(Args, Debug, Clone, Copy)]
pub struct EvalParams {
    /// Absolute error tolerance for the dual-tree evaluators.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,

    /// Sample size per node pair for the probabilistic evaluator.
    #[arg(long, default_value_t = 25)]
    pub m: usize,

    /// Bootstrap resample count for the probabilistic evaluator.
    #[arg(long = "B", default_value_t = 10)]
    pub bootstrap: usize,

    /// Confidence multiplier for the probabilistic evaluator.
    #[arg(long, default_value_t = 1.5)]
    pub z: f64,
}

impl EvalParams {
    pub fn resolve(&self, method: &str) -> anyhow::Result<kcde::SearchMethod> {
        use kcde::{DetConfig, ProbConfig, SearchMethod};
        if self.epsilon <= 0.0 {
            anyhow::bail!("--epsilon must be positive");
        }
        Ok(match method {
            "naive" => SearchMethod::Naive,
            "det" => SearchMethod::Deterministic(DetConfig::new(self.epsilon)),
            "prob" => {
                if self.m < 2 {
                    anyhow::bail!("--m must be at least 2");
                }
                if self.bootstrap < 1 {
                    anyhow::bail!("--B must be at least 1");
                }
                SearchMethod::Probabilistic(ProbConfig {
                    epsilon: self.epsilon,
                    sample_size: self.m,
                    bootstrap_count: self.bootstrap,
                    z: self.z,
                    seed: 0,
                })
            }
            other => anyhow::bail!("unknown method {other}"),
        })
    }

    pub fn parameters(&self) -> serde_json::Value {
        serde_json::json!({
            "epsilon": self.epsilon,
            "m": self.m,
            "B": self.bootstrap,
            "z": self.z,
        })
    }
}

/// Evaluator choice plus its knobs, for single-method commands.
#[derive(Args, Debug, Clone)]
pub struct MethodArgs {
    /// Likelihood evaluator: naive, det, or prob.
    #[arg(long, default_value = "prob", value_parser = ["naive", "det", "prob"])]
    pub method: String,

    #[command(flatten)]
    pub params: EvalParams,
}

impl MethodArgs {
    pub fn to_search_method(&self) -> anyhow::Result<kcde::SearchMethod> {
        self.params.resolve(&self.method)
    }

    pub fn parameters(&self) -> serde_json::Value {
        let mut value = self.params.parameters();
        value["method"] = serde_json::json!(self.method);
        value
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Select(args) => commands::select::run(args),
        Command::Predict(args) => commands::predict::run(args),
        Command::Bench(args) => commands::bench::run(args),
        Command::Synth(args) => commands::synth::run(args),
        Command::Eval(args) => commands::eval::run(args),
    };
    if let Err(err) = result {
        eprintln!("{}", serde_json::json!({ "error": format!("{err:#}") }));
        std::process::exit(1);
    }
}
