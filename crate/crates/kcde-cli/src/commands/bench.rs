use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use kcde::bandwidth::{derive_seed, evaluate, random_search};
use kcde::{BandwidthPair, JointKdTree, RawDataset, SearchConfig, SearchMethod, standardize};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::EvalParams;
use crate::manifest::{self, RunManifest};

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Dataset sizes to benchmark.
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000")]
    pub sizes: Vec<usize>,

    /// Predictor dimension of the generated data.
    #[arg(long, default_value_t = 2)]
    pub dims: usize,

    /// Methods to time: any of naive, det, prob.
    #[arg(long, value_delimiter = ',', default_value = "naive,det,prob")]
    pub methods: Vec<String>,

    #[command(flatten)]
    pub params: EvalParams,

    /// Candidates per full bandwidth selection.
    #[arg(long, default_value_t = 100)]
    pub candidates: usize,

    /// Timed selection repeats per (size, method) cell.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,

    /// Random bandwidth pairs for the error-vs-naive measurement.
    #[arg(long, default_value_t = 100)]
    pub error_pairs: usize,

    /// Largest size at which the naive evaluator is timed directly; beyond
    /// it the naive baseline is a quadratic extrapolation, flagged in the
    /// output.
    #[arg(long, default_value_t = 4000)]
    pub naive_max_n: usize,

    #[arg(long, default_value_t = 10.0)]
    pub h_max: f64,

    #[arg(long, default_value_t = 16)]
    pub leaf_size: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Write the CSV table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Benchmark dataset: predictors drawn from a mixture of compact Gaussian
/// blobs (spatial structure comparable to real measured data), response a
/// smooth function of the predictors plus noise.
pub fn gen_clustered(n: usize, d: usize, seed: u64) -> RawDataset {
    let mut rng = kcde::seeded_rng(seed);
    let clusters = 10;
    let centers: Vec<f64> = (0..clusters * d)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    let normal = |rng: &mut ChaCha8Rng| -> f64 {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..clusters);
        let mut s = 0.0;
        for k in 0..d {
            let v = centers[c * d + k] + 0.15 * normal(&mut rng);
            x.push(v);
            s += v.sin();
        }
        y.push(s + 0.3 * normal(&mut rng));
    }
    RawDataset::new(x, y, d).expect("generated data is valid")
}

struct Cell {
    n: usize,
    method: String,
    mean_seconds: f64,
    /// None when naive was not measured at this size.
    error_vs_naive: Option<f64>,
    speedup_vs_naive: Option<f64>,
    extrapolated: bool,
}

pub fn run(args: BenchArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    if args.sizes.is_empty() {
        anyhow::bail!("--sizes must list at least one dataset size");
    }
    if args.repeats == 0 {
        anyhow::bail!("--repeats must be at least 1");
    }
    for m in &args.methods {
        if !["naive", "det", "prob"].contains(&m.as_str()) {
            anyhow::bail!("unknown method {m}");
        }
    }
    let parameters = serde_json::json!({
        "sizes": args.sizes,
        "dims": args.dims,
        "methods": args.methods,
        "candidates": args.candidates,
        "repeats": args.repeats,
        "error_pairs": args.error_pairs,
        "naive_max_n": args.naive_max_n,
        "h_max": args.h_max,
        "leaf_size": args.leaf_size,
        "likelihood": args.params.parameters(),
    });
    let mut manifest = RunManifest::new("bench", args.seed, parameters);

    let mut cells: Vec<Cell> = Vec::new();
    let mut naive_measured: Vec<(usize, f64)> = Vec::new();

    for &n in &args.sizes {
        let raw = gen_clustered(n, args.dims, derive_seed(args.seed, n as u64));
        let std = standardize(&raw)?;
        let tree = JointKdTree::build(&std, args.leaf_size)?;

        // Fixed bandwidth pairs for error measurement, shared across methods.
        let pairs: Vec<BandwidthPair> = {
            let mut rng = kcde::seeded_rng(derive_seed(args.seed, 7_000_000 + n as u64));
            (0..args.error_pairs)
                .map(|_| BandwidthPair {
                    h1: args.h_max * (1.0 - rng.random::<f64>()),
                    h2: args.h_max * (1.0 - rng.random::<f64>()),
                })
                .collect()
        };
        let naive_tractable = n <= args.naive_max_n;
        let naive_scores: Option<Vec<kcde::LikelihoodResult>> = naive_tractable.then(|| {
            pairs
                .iter()
                .map(|h| evaluate(&std, &tree, h, &SearchMethod::Naive, 0))
                .collect()
        });

        for method_name in &args.methods {
            let method = args.params.resolve(method_name)?;
            if matches!(method, SearchMethod::Naive) && !naive_tractable {
                // Filled from the quadratic extrapolation after all sizes.
                cells.push(Cell {
                    n,
                    method: method_name.clone(),
                    mean_seconds: f64::NAN,
                    error_vs_naive: None,
                    speedup_vs_naive: None,
                    extrapolated: true,
                });
                continue;
            }

            let error_vs_naive = match &naive_scores {
                None => None,
                Some(_) if matches!(method, SearchMethod::Naive) => Some(0.0),
                Some(naive) => {
                    let mut total = 0.0;
                    let mut count = 0usize;
                    for (i, (h, exact)) in pairs.iter().zip(naive).enumerate() {
                        let approx =
                            evaluate(&std, &tree, h, &method, derive_seed(args.seed, i as u64));
                        // Divergent evaluations are excluded from the error
                        // averages to avoid skewing them.
                        if !exact.diverged && !approx.diverged {
                            total += (exact.value - approx.value).abs();
                            count += 1;
                        }
                    }
                    (count > 0).then(|| total / count as f64)
                }
            };

            let mut times = Vec::with_capacity(args.repeats);
            for r in 0..args.repeats {
                let cfg = SearchConfig {
                    h_max: args.h_max,
                    candidates: args.candidates,
                    seed: derive_seed(args.seed, 9_000_000 + r as u64),
                    method,
                };
                let t0 = Instant::now();
                // Selection fails only if every candidate diverges.
                let _ = random_search(&std, &tree, &cfg)?;
                times.push(t0.elapsed().as_secs_f64());
            }
            let mean_seconds = times.iter().sum::<f64>() / times.len() as f64;
            if matches!(method, SearchMethod::Naive) {
                naive_measured.push((n, mean_seconds));
            }
            cells.push(Cell {
                n,
                method: method_name.clone(),
                mean_seconds,
                error_vs_naive,
                speedup_vs_naive: None,
                extrapolated: false,
            });
        }
    }

    // Naive baseline per size: measured when available, otherwise a
    // quadratic extrapolation from the largest measured naive run.
    let baseline = |n: usize| -> Option<(f64, bool)> {
        if let Some(&(_, t)) = naive_measured.iter().find(|&&(m, _)| m == n) {
            return Some((t, false));
        }
        naive_measured
            .iter()
            .max_by_key(|&&(m, _)| m)
            .map(|&(m, t)| (t * (n as f64 / m as f64).powi(2), true))
    };
    for cell in &mut cells {
        if let Some((naive_time, extrapolated)) = baseline(cell.n) {
            if cell.mean_seconds.is_nan() {
                cell.mean_seconds = naive_time;
            }
            cell.speedup_vs_naive = Some(naive_time / cell.mean_seconds);
            cell.extrapolated = cell.extrapolated || extrapolated;
        }
    }

    let mut out = String::from(
        "n,method,mean_seconds,mean_abs_error_vs_naive,speedup_vs_naive,naive_extrapolated\n",
    );
    for cell in &cells {
        let err = cell
            .error_vs_naive
            .map(|e| format!("{e}"))
            .unwrap_or_default();
        let speedup = cell
            .speedup_vs_naive
            .map(|s| format!("{s:.3}"))
            .unwrap_or_default();
        let secs = if cell.mean_seconds.is_nan() {
            String::new()
        } else {
            format!("{:.6}", cell.mean_seconds)
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            cell.n, cell.method, secs, err, speedup, cell.extrapolated
        ));
    }
    manifest::write_output(args.out.as_deref(), out.trim_end())?;
    manifest.timing_seconds = Some(started.elapsed().as_secs_f64());
    manifest.emit(args.out.as_deref())
}
