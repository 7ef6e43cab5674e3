//! The fitted conditional density model: density, expectation, sampling and
//! narrowest prediction intervals, all in raw (unstandardized) units.

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bandwidth::BandwidthPair;
use crate::dataset::StandardizedDataset;
use crate::error::{KcdeError, Result};
use crate::kernels::{CompiledKernel, KernelSpec, sample_epanechnikov};

/// Query surface shared by the real model and by test doubles in the
/// evaluation harness. All coordinates and densities are in raw units;
/// randomized queries take a seed so results are reproducible.
pub trait ConditionalEstimator {
    fn density(&self, x: &[f64], y: f64) -> Result<f64>;
    fn expectation(&self, x: &[f64]) -> Result<f64>;
    fn prediction_interval(
        &self,
        x: &[f64],
        alpha: f64,
        n_samples: usize,
        seed: u64,
    ) -> Result<(f64, f64)>;
}

/// Conditional density estimate: a mixture that weights each training
/// response by the x-proximity kernel of its predictor.
///
/// Immutable once fitted; concurrent queries are safe.
#[derive(Debug, Clone)]
pub struct ConditionalDensityModel {
    data: StandardizedDataset,
    h: BandwidthPair,
    ky: CompiledKernel,
    kx: CompiledKernel,
}

impl ConditionalDensityModel {
    pub fn new(data: StandardizedDataset, h: BandwidthPair) -> Result<Self> {
        if !(h.h1 > 0.0 && h.h2 > 0.0) {
            return Err(KcdeError::InvalidParameter(
                "bandwidths must be positive".into(),
            ));
        }
        let ky = CompiledKernel::new(&KernelSpec::new(1), h.h1);
        let kx = CompiledKernel::new(&KernelSpec::new(data.d()), h.h2);
        Ok(Self { data, h, ky, kx })
    }

    pub fn data(&self) -> &StandardizedDataset {
        &self.data
    }

    pub fn bandwidths(&self) -> BandwidthPair {
        self.h
    }

    /// Unnormalized x-kernel values at a standardized query point.
    fn kernel_row(&self, xq: &[f64]) -> Vec<f64> {
        let d = self.data.d();
        (0..self.data.n())
            .map(|i| {
                let xi = self.data.x_row(i);
                let mut dist_sq = 0.0;
                for k in 0..d {
                    let diff = xi[k] - xq[k];
                    dist_sq += diff * diff;
                }
                self.kx.value_sq(dist_sq)
            })
            .collect()
    }

    fn supported_row(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let xq = self.data.standardize_query(x)?;
        let row = self.kernel_row(&xq);
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            return Err(KcdeError::UnsupportedQuery);
        }
        Ok((row, total))
    }

    /// Conditional density at `(x, y)` in raw units.
    pub fn density(&self, x: &[f64], y: f64) -> Result<f64> {
        let (row, total) = self.supported_row(x)?;
        let yq = y / self.data.sigma_y();
        let mut numerator = 0.0;
        for (i, &w) in row.iter().enumerate() {
            if w > 0.0 {
                let dy = yq - self.data.y(i);
                numerator += w * self.ky.value_sq(dy * dy);
            }
        }
        Ok(numerator / total / self.data.sigma_y())
    }

    /// Mixture weights of the training responses at a query point; they sum
    /// to one by construction.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (mut row, total) = self.supported_row(x)?;
        for w in &mut row {
            *w /= total;
        }
        Ok(row)
    }

    /// Conditional expectation in raw units. Exact for this mixture: each
    /// component is symmetric about its training response.
    pub fn expectation(&self, x: &[f64]) -> Result<f64> {
        let (row, total) = self.supported_row(x)?;
        let mean_std: f64 = row
            .iter()
            .enumerate()
            .map(|(i, &w)| w * self.data.y(i))
            .sum::<f64>()
            / total;
        Ok(mean_std * self.data.sigma_y())
    }

    /// Draw `count` responses from the conditional density at `x`.
    pub fn sample_y<R: Rng>(&self, x: &[f64], count: usize, rng: &mut R) -> Result<Vec<f64>> {
        let (row, total) = self.supported_row(x)?;
        let mut cumulative = Vec::with_capacity(row.len());
        let mut acc = 0.0;
        for &w in &row {
            acc += w;
            cumulative.push(acc);
        }
        let draws = (0..count)
            .map(|_| {
                let target = rng.random::<f64>() * total;
                let i = cumulative.partition_point(|&c| c <= target);
                let i = i.min(row.len() - 1);
                let y_std = self.data.y(i) + self.h.h1 * sample_epanechnikov(rng);
                y_std * self.data.sigma_y()
            })
            .collect();
        Ok(draws)
    }

    /// Narrowest interval covering at least a `1 - alpha` fraction of
    /// `n_samples` draws from the conditional density: the window of
    /// `ceil((1 - alpha) * n_samples)` consecutive order statistics with the
    /// smallest width.
    pub fn prediction_interval<R: Rng>(
        &self,
        x: &[f64],
        alpha: f64,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<(f64, f64)> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(KcdeError::InvalidParameter(
                "alpha must lie in [0, 1)".into(),
            ));
        }
        if n_samples < 100 {
            return Err(KcdeError::InvalidParameter(
                "interval estimation needs at least 100 samples".into(),
            ));
        }
        let mut draws = self.sample_y(x, n_samples, rng)?;
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let window = ((1.0 - alpha) * n_samples as f64).ceil() as usize;
        let window = window.clamp(1, n_samples);
        let mut best = (draws[0], draws[window - 1]);
        let mut best_width = best.1 - best.0;
        for i in 1..=(n_samples - window) {
            let width = draws[i + window - 1] - draws[i];
            if width < best_width {
                best_width = width;
                best = (draws[i], draws[i + window - 1]);
            }
        }
        Ok(best)
    }
}

impl ConditionalEstimator for ConditionalDensityModel {
    fn density(&self, x: &[f64], y: f64) -> Result<f64> {
        ConditionalDensityModel::density(self, x, y)
    }

    fn expectation(&self, x: &[f64]) -> Result<f64> {
        ConditionalDensityModel::expectation(self, x)
    }

    fn prediction_interval(
        &self,
        x: &[f64],
        alpha: f64,
        n_samples: usize,
        seed: u64,
    ) -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ConditionalDensityModel::prediction_interval(self, x, alpha, n_samples, &mut rng)
    }
}
