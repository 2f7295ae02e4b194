//! Standard normal CDF and centi-binned Gaussian noise.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Noise is truncated at this many standard deviations on each side.
pub const TRUNCATION_SIGMAS: f64 = 6.0;

/// Upper limit on sigma (score units); keeps the binned support bounded.
pub const MAX_SIGMA: f64 = 1000.0;

/// Φ(x).
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// P(a < Z < b) for standard normal Z, computed on the tail that keeps
/// precision when both ends are far from zero.
pub fn std_normal_interval(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        0.5 * (libm::erfc(a / SQRT_2) - libm::erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b / SQRT_2) - libm::erfc(-a / SQRT_2))
    } else {
        1.0 - 0.5 * libm::erfc(-a / SQRT_2) - 0.5 * libm::erfc(b / SQRT_2)
    }
}

/// Zero-mean Gaussian noise with standard deviation `sigma` in score units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NoiseSpec {
    sigma: f64,
}

impl NoiseSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::NonPositiveSigma(sigma));
        }
        if sigma > MAX_SIGMA {
            return Err(Error::InvalidParameter(format!("sigma {sigma} exceeds the supported maximum {MAX_SIGMA}")));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(self) -> f64 {
        self.sigma
    }
}

/// Distribution of `round(c + ν, 2) - c` in centi-units for ν ~ N(0, σ)
/// and `c` on the centi grid, truncated to |offset| ≤ K where K = ⌈600σ⌉
/// and renormalized. The dropped tail is at most 2(1 − Φ(6)) < 2e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedGaussian {
    noise: NoiseSpec,
    half_width: i64,
    // masses[k + half_width] = P(offset = k)
    masses: Vec<f64>,
    truncated_mass: f64,
}

impl BinnedGaussian {
    pub fn new(noise: NoiseSpec) -> Self {
        let sigma_centi = noise.sigma * 100.0;
        let half_width = ((TRUNCATION_SIGMAS * sigma_centi).ceil() as i64).max(1);
        let mut masses: Vec<f64> = (-half_width..=half_width)
            .map(|k| std_normal_interval((k as f64 - 0.5) / sigma_centi, (k as f64 + 0.5) / sigma_centi))
            .collect();
        let kept: f64 = masses.iter().sum();
        for m in &mut masses {
            *m /= kept;
        }
        Self { noise, half_width, masses, truncated_mass: 1.0 - kept }
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    pub fn half_width(&self) -> i64 {
        self.half_width
    }

    /// Mass removed by truncation before renormalization.
    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    pub fn mass(&self, offset: i64) -> f64 {
        if offset.abs() > self.half_width {
            0.0
        } else {
            self.masses[(offset + self.half_width) as usize]
        }
    }

    /// `(offset, mass)` pairs in ascending offset order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        (-self.half_width..=self.half_width).zip(self.masses.iter().copied())
    }
}
