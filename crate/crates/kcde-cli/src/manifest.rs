//! Run manifests: every command records its resolved parameters, seeds, and
//! a dataset fingerprint. The manifest embedded in primary outputs carries no
//! wall-clock timing, so seeded reruns stay byte-identical; the copy emitted
//! on stderr (and the `<out>.manifest.json` sidecar) includes the timing.

use std::path::Path;

use anyhow::Context;
use serde::Serialize;

#[derive(Serialize, Clone, Debug)]
pub struct ColumnStat {
    pub name: String,
    pub sd: f64,
}

#[derive(Serialize, Clone, Debug)]
pub struct DatasetFingerprint {
    pub n: usize,
    pub d: usize,
    pub y_column: String,
    pub columns: Vec<ColumnStat>,
}

#[derive(Serialize, Clone, Debug)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub parameters: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetFingerprint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_seconds: Option<f64>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, parameters: serde_json::Value) -> Self {
        Self {
            tool: "kcde",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            parameters,
            dataset: None,
            timing_seconds: None,
        }
    }

    pub fn with_dataset(mut self, fingerprint: DatasetFingerprint) -> Self {
        self.dataset = Some(fingerprint);
        self
    }

    /// Copy without timing, for embedding in deterministic outputs.
    pub fn deterministic(&self) -> Self {
        let mut copy = self.clone();
        copy.timing_seconds = None;
        copy
    }

    /// Emit the manifest (with timing) to stderr and, when the primary
    /// output went to a file, to a `<out>.manifest.json` sidecar.
    pub fn emit(&self, out: Option<&Path>) -> anyhow::Result<()> {
        let line = serde_json::to_string(self)?;
        eprintln!("{line}");
        if let Some(out) = out {
            let mut sidecar = out.as_os_str().to_owned();
            sidecar.push(".manifest.json");
            let pretty = serde_json::to_string_pretty(self)?;
            std::fs::write(&sidecar, pretty)
                .with_context(|| format!("writing manifest sidecar {sidecar:?}"))?;
        }
        Ok(())
    }
}

/// Fingerprint of a loaded dataset: shape plus per-column sample sd.
pub fn fingerprint(raw: &kcde::RawDataset, x_names: &[String], y_name: &str) -> DatasetFingerprint {
    let mut columns = Vec::with_capacity(raw.d() + 1);
    for (k, name) in x_names.iter().enumerate() {
        let sd = sample_sd((0..raw.n()).map(|i| raw.x_row(i)[k]), raw.n());
        columns.push(ColumnStat {
            name: name.clone(),
            sd,
        });
    }
    columns.push(ColumnStat {
        name: y_name.to_string(),
        sd: sample_sd(raw.ys().iter().copied(), raw.n()),
    });
    DatasetFingerprint {
        n: raw.n(),
        d: raw.d(),
        y_column: y_name.to_string(),
        columns,
    }
}

fn sample_sd(values: impl Iterator<Item = f64> + Clone, n: usize) -> f64 {
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss = values.map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (ss / (n - 1) as f64).sqrt()
}

/// Write the primary output to `--out` or stdout.
pub fn write_output(out: Option<&Path>, payload: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, payload)
            .with_context(|| format!("writing output {}", path.display())),
        None => {
            println!("{payload}");
            Ok(())
        }
    }
}
