//! Raw and standardized datasets, plus the per-dimension scale factors that
//! convert queries and densities between raw and standardized units.

use crate::error::{KcdeError, Result};

/// Predictor matrix (row-major, `n * d`) and response vector in raw units.
#[derive(Debug, Clone)]
pub struct RawDataset {
    x: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    d: usize,
}

impl RawDataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(KcdeError::InvalidParameter(
                "predictor dimension must be at least 1".into(),
            ));
        }
        let n = y.len();
        if n == 0 {
            return Err(KcdeError::EmptyDataset);
        }
        if n < 2 {
            return Err(KcdeError::TooFewPoints {
                required: 2,
                actual: n,
            });
        }
        if x.len() != n * d {
            return Err(KcdeError::InvalidParameter(format!(
                "expected {} predictor values for n={n}, d={d}, got {}",
                n * d,
                x.len()
            )));
        }
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(KcdeError::NonFiniteValue {
                    row: i,
                    column: "y".into(),
                });
            }
        }
        for (i, &v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(KcdeError::NonFiniteValue {
                    row: i / d,
                    column: format!("x{}", i % d + 1),
                });
            }
        }
        Ok(Self { x, y, n, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(rows.len() * self.d);
        let mut y = Vec::with_capacity(rows.len());
        for &r in rows {
            x.extend_from_slice(self.x_row(r));
            y.push(self.y[r]);
        }
        Self::new(x, y, self.d)
    }
}

/// Dataset with every column divided by its sample standard deviation
/// (denominator n - 1). No centering is applied; distances are translation
/// invariant so only the scale matters.
#[derive(Debug, Clone)]
pub struct StandardizedDataset {
    xs: Vec<f64>,
    ys: Vec<f64>,
    sigma_x: Vec<f64>,
    sigma_y: f64,
    n: usize,
    d: usize,
}

/// Scale each column of `raw` to unit sample standard deviation.
///
/// Fails on any zero-variance column: a constant column carries no
/// information and has no well-defined scale.
pub fn standardize(raw: &RawDataset) -> Result<StandardizedDataset> {
    let (n, d) = (raw.n(), raw.d());
    let mut sigma_x = Vec::with_capacity(d);
    for k in 0..d {
        let sd = sample_sd((0..n).map(|i| raw.x_row(i)[k]), n);
        if sd <= 0.0 {
            return Err(KcdeError::ZeroVariance {
                column: format!("x{}", k + 1),
            });
        }
        sigma_x.push(sd);
    }
    let sigma_y = sample_sd(raw.ys().iter().copied(), n);
    if sigma_y <= 0.0 {
        return Err(KcdeError::ZeroVariance { column: "y".into() });
    }
    let mut xs = Vec::with_capacity(n * d);
    for i in 0..n {
        for k in 0..d {
            xs.push(raw.x_row(i)[k] / sigma_x[k]);
        }
    }
    let ys = raw.ys().iter().map(|&v| v / sigma_y).collect();
    Ok(StandardizedDataset {
        xs,
        ys,
        sigma_x,
        sigma_y,
        n,
        d,
    })
}

impl StandardizedDataset {
    /// Wrap coordinates that are already in standardized units, with the
    /// scale factors recorded as given. Useful when a caller standardizes by
    /// other means; no unit-variance check is performed.
    pub fn from_parts(xs: Vec<f64>, ys: Vec<f64>, sigma_x: Vec<f64>, sigma_y: f64) -> Result<Self> {
        let d = sigma_x.len();
        if d == 0 {
            return Err(KcdeError::InvalidParameter(
                "predictor dimension must be at least 1".into(),
            ));
        }
        let n = ys.len();
        if n < 2 {
            return Err(KcdeError::TooFewPoints {
                required: 2,
                actual: n,
            });
        }
        if xs.len() != n * d {
            return Err(KcdeError::InvalidParameter(format!(
                "expected {} predictor values, got {}",
                n * d,
                xs.len()
            )));
        }
        let valid = |s: f64| s.is_finite() && s > 0.0;
        if !sigma_x.iter().copied().all(valid) || !valid(sigma_y) {
            return Err(KcdeError::InvalidParameter(
                "scale factors must be positive".into(),
            ));
        }
        Ok(Self {
            xs,
            ys,
            sigma_x,
            sigma_y,
            n,
            d,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn sigma_x(&self) -> &[f64] {
        &self.sigma_x
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    /// Response value of point `i` back in raw units.
    pub fn y_raw(&self, i: usize) -> f64 {
        self.ys[i] * self.sigma_y
    }

    /// Convert a raw-unit query point into standardized units.
    pub fn standardize_query(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(KcdeError::InvalidParameter(format!(
                "query has {} coordinates, training data has {}",
                x.len(),
                self.d
            )));
        }
        Ok(x.iter().zip(&self.sigma_x).map(|(v, s)| v / s).collect())
    }
}

fn sample_sd(values: impl Iterator<Item = f64> + Clone, n: usize) -> f64 {
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss = values.map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (ss / (n - 1) as f64).sqrt()
}
