//! The Epanechnikov kernel in radial multivariate form: bandwidth scaling,
//! monotone value bounds, and exact 1-d sampling.

use std::f64::consts::PI;

use rand::{Rng, RngExt};

/// Radial Epanechnikov kernel on the unit ball of a fixed dimension.
///
/// The profile is `c_d * (1 - u^2)` for radial argument `u < 1` and zero
/// otherwise, where `c_d = Gamma(d/2 + 1) * (d + 2) / (2 * pi^(d/2))` makes
/// the kernel integrate to one over `R^d`. For `d = 1` the constant is 3/4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    dim: usize,
    normalizer: f64,
}

impl KernelSpec {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "kernel dimension must be positive");
        Self {
            dim,
            normalizer: normalizer(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Kernel value at radial argument `u >= 0`, unit bandwidth.
    #[inline]
    pub fn profile(&self, u: f64) -> f64 {
        debug_assert!(u >= 0.0);
        if u < 1.0 {
            self.normalizer * (1.0 - u * u)
        } else {
            0.0
        }
    }

    /// Bandwidth-scaled kernel `h^(-d) * profile(distance / h)`.
    ///
    /// Zero whenever `distance >= h`.
    #[inline]
    pub fn scaled(&self, distance: f64, h: f64) -> f64 {
        assert!(h > 0.0, "bandwidth must be positive");
        self.profile(distance / h) / h.powi(self.dim as i32)
    }

    /// Lower and upper values of the scaled kernel over a distance interval.
    ///
    /// The profile is non-increasing in distance, so the value at `dist_max`
    /// bounds from below and the value at `dist_min` from above.
    pub fn bounds(&self, dist_min: f64, dist_max: f64, h: f64) -> (f64, f64) {
        debug_assert!(dist_min <= dist_max);
        (self.scaled(dist_max, h), self.scaled(dist_min, h))
    }
}

/// Kernel with a fixed bandwidth folded in, evaluated from squared distances
/// so hot loops avoid square roots.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CompiledKernel {
    amp: f64,
    inv_h_sq: f64,
}

impl CompiledKernel {
    pub(crate) fn new(spec: &KernelSpec, h: f64) -> Self {
        assert!(h > 0.0, "bandwidth must be positive");
        Self {
            amp: spec.normalizer() / h.powi(spec.dim() as i32),
            inv_h_sq: 1.0 / (h * h),
        }
    }

    #[inline(always)]
    pub(crate) fn value_sq(&self, dist_sq: f64) -> f64 {
        let t = dist_sq * self.inv_h_sq;
        if t < 1.0 { self.amp * (1.0 - t) } else { 0.0 }
    }

    #[cfg(test)]
    pub(crate) fn value(&self, dist: f64) -> f64 {
        self.value_sq(dist * dist)
    }
}

/// Draw from the 1-d Epanechnikov density on [-1, 1].
///
/// Order-statistic method: with U1, U2, U3 uniform on [-1, 1], return U2 if
/// |U3| >= max(|U1|, |U2|), else U3. Exact and rejection-free.
pub fn sample_epanechnikov<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random_range(-1.0..1.0);
    let u2: f64 = rng.random_range(-1.0..1.0);
    let u3: f64 = rng.random_range(-1.0..1.0);
    if u3.abs() >= u1.abs().max(u2.abs()) {
        u2
    } else {
        u3
    }
}

/// `Gamma(d/2 + 1) * (d + 2) / (2 * pi^(d/2))`, evaluated so the sqrt(pi)
/// factors of the half-integer gamma cancel exactly: the result is rational
/// for odd d (3/4 in one dimension) and rational over an integer power of pi
/// for even d (2/pi in two).
fn normalizer(dim: usize) -> f64 {
    if dim.is_multiple_of(2) {
        let mut g = 1.0; // (d/2)!
        for k in 2..=(dim / 2) {
            g *= k as f64;
        }
        g * (dim + 2) as f64 / (2.0 * PI.powi((dim / 2) as i32))
    } else {
        let mut g = 1.0; // Gamma((d + 2) / 2) / sqrt(pi)
        let mut m = dim + 2;
        while m > 1 {
            g *= m as f64 / 2.0 - 1.0;
            m -= 2;
        }
        g * (dim + 2) as f64 / (2.0 * PI.powi(((dim - 1) / 2) as i32))
    }
}
