//! Utility of the noisy score and the privacy/utility trade-off.
//!
//! The noisy score adds Gaussian noise to the already rounded score and
//! rounds again, so `|L - NL|` lives on the centi grid and its distribution
//! does not depend on the genotype.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{BinnedGaussian, NoiseSpec};
use crate::inference::{exact_joint, Program};
use crate::population::PopulationTable;
use crate::programs::{ScoreValue, WeightConfig};

pub const DEFAULT_DELTAS: [f64; 3] = [0.1, 0.5, 1.0];
pub const DEFAULT_UTILITY_THRESHOLD: f64 = 0.9;
pub const DEFAULT_HDI_MASS: f64 = 0.94;

/// How the bin lying exactly at `|Δ| = δ` counts towards `p(|Δ| < δ)`.
///
/// On the centi grid the boundary bin carries the mass of a full 0.01-wide
/// slice of noise, which is not negligible for small σ. `Midpoint` counts
/// half of it, which matches the continuous `2Φ(δ/σ) - 1` to second order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    /// Exclude the boundary bin.
    Strict,
    /// Include the boundary bin.
    Inclusive,
    /// Count half of the boundary bin.
    #[default]
    Midpoint,
}

impl FromStr for BoundaryRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(BoundaryRule::Strict),
            "inclusive" => Ok(BoundaryRule::Inclusive),
            "midpoint" => Ok(BoundaryRule::Midpoint),
            _ => Err(Error::InvalidParameter(format!("unknown boundary rule {s:?}"))),
        }
    }
}

impl fmt::Display for BoundaryRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryRule::Strict => "strict",
            BoundaryRule::Inclusive => "inclusive",
            BoundaryRule::Midpoint => "midpoint",
        })
    }
}

/// Distribution of `|L - NL|` over centi bins 0, 1, 2, ...
#[derive(Debug, Clone, PartialEq)]
pub struct AbsDifferenceDistribution {
    noise: NoiseSpec,
    masses: Vec<f64>,
}

impl AbsDifferenceDistribution {
    /// Folded binned Gaussian: bin `k > 0` collects offsets `k` and `-k`.
    pub fn for_noise(noise: NoiseSpec) -> Self {
        let binned = BinnedGaussian::new(noise);
        let masses = (0..=binned.half_width())
            .map(|k| if k == 0 { binned.mass(0) } else { binned.mass(k) + binned.mass(-k) })
            .collect();
        Self { noise, masses }
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, diff: ScoreValue) -> f64 {
        usize::try_from(diff.centi()).ok().and_then(|k| self.masses.get(k)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ScoreValue, f64)> + '_ {
        self.masses.iter().enumerate().map(|(k, m)| (ScoreValue(k as i64), *m))
    }

    pub fn mode(&self) -> ScoreValue {
        let (k, _) =
            self.masses.iter().enumerate().fold((0, f64::MIN), |best, (k, &m)| if m > best.1 { (k, m) } else { best });
        ScoreValue(k as i64)
    }

    /// p(|L - NL| < δ) under `rule`.
    pub fn error_bound(&self, delta: f64, rule: BoundaryRule) -> Result<f64> {
        if delta.is_nan() || delta <= 0.0 {
            return Err(Error::NonPositiveDelta(delta));
        }
        let delta_centi = delta * 100.0;
        let nearest = delta_centi.round();
        // δ on the grid: the bin at exactly δ is the boundary bin.
        let on_grid = (delta_centi - nearest).abs() < 1e-6;
        let mut p = 0.0;
        for (k, m) in self.masses.iter().enumerate() {
            let k = k as f64;
            if on_grid && k == nearest {
                p += match rule {
                    BoundaryRule::Strict => 0.0,
                    BoundaryRule::Inclusive => *m,
                    BoundaryRule::Midpoint => 0.5 * m,
                };
            } else if k < delta_centi {
                p += m;
            }
        }
        Ok(p.min(1.0))
    }

    /// Smallest contiguous range of bins holding at least `mass` of the
    /// distribution, as inclusive `(low, high)` differences.
    pub fn hdi(&self, mass: f64) -> Result<(ScoreValue, ScoreValue)> {
        if !(mass > 0.0 && mass <= 1.0) {
            return Err(Error::InvalidParameter(format!("HDI mass must lie in (0, 1], got {mass}")));
        }
        let target = mass - 1e-12;
        let mut best: Option<(usize, usize)> = None;
        let (mut lo, mut acc) = (0usize, 0.0);
        for hi in 0..self.masses.len() {
            acc += self.masses[hi];
            while lo < hi && acc - self.masses[lo] >= target {
                acc -= self.masses[lo];
                lo += 1;
            }
            if acc >= target && best.is_none_or(|(l, h)| hi - lo < h - l) {
                best = Some((lo, hi));
            }
        }
        let (l, h) = best.unwrap_or((0, self.masses.len().saturating_sub(1)));
        Ok((ScoreValue(l as i64), ScoreValue(h as i64)))
    }
}

/// Distribution of `|L - NL|` as a mixture over all genotypes weighted by
/// the attacker prior.
pub fn abs_difference_distribution(
    weights: &WeightConfig,
    table: &PopulationTable,
    noise: NoiseSpec,
) -> AbsDifferenceDistribution {
    let folded = AbsDifferenceDistribution::for_noise(noise);
    let scores = exact_joint(table, &Program::LinearScore, Some(weights)).expect("weights supplied");
    let mut masses = vec![0.0; folded.masses.len()];
    for (_, cell) in scores.grid().iter() {
        let p: f64 = cell.iter().sum();
        for (acc, m) in masses.iter_mut().zip(&folded.masses) {
            *acc += p * m;
        }
    }
    AbsDifferenceDistribution { noise, masses }
}

/// p(|L - NL| < δ) with the default boundary rule.
pub fn error_bound_probability(noise: NoiseSpec, delta: f64) -> Result<f64> {
    AbsDifferenceDistribution::for_noise(noise).error_bound(delta, BoundaryRule::default())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBound {
    pub delta: f64,
    pub probability: f64,
    pub meets_threshold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityReport {
    pub sigma: f64,
    #[serde(skip)]
    pub distribution: AbsDifferenceDistribution,
    pub mode: ScoreValue,
    pub hdi_mass: f64,
    pub hdi: (ScoreValue, ScoreValue),
    pub error_bounds: Vec<ErrorBound>,
    pub bayes_vulnerability: Option<f64>,
}

impl UtilityReport {
    pub fn new(
        weights: &WeightConfig,
        table: &PopulationTable,
        noise: NoiseSpec,
        deltas: &[f64],
        settings: &UtilitySettings,
        bayes_vulnerability: Option<f64>,
    ) -> Result<Self> {
        let distribution = abs_difference_distribution(weights, table, noise);
        let error_bounds = deltas
            .iter()
            .map(|&delta| {
                let probability = distribution.error_bound(delta, settings.boundary)?;
                Ok(ErrorBound { delta, probability, meets_threshold: probability >= settings.utility_threshold })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sigma: noise.sigma(),
            mode: distribution.mode(),
            hdi_mass: settings.hdi_mass,
            hdi: distribution.hdi(settings.hdi_mass)?,
            error_bounds,
            bayes_vulnerability,
            distribution,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UtilitySettings {
    pub utility_threshold: f64,
    pub vulnerability_threshold: f64,
    pub hdi_mass: f64,
    pub boundary: BoundaryRule,
}

impl Default for UtilitySettings {
    fn default() -> Self {
        Self {
            utility_threshold: DEFAULT_UTILITY_THRESHOLD,
            vulnerability_threshold: crate::risk::DEFAULT_VULNERABILITY_THRESHOLD,
            hdi_mass: DEFAULT_HDI_MASS,
            boundary: BoundaryRule::default(),
        }
    }
}

/// A score program with its Bayes vulnerability: the noiseless score when
/// `sigma` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    pub program: String,
    pub sigma: Option<f64>,
    pub bayes_vulnerability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierRow {
    pub program: String,
    pub sigma: Option<f64>,
    pub delta: f64,
    pub bayes_vulnerability: f64,
    pub error_bound_probability: f64,
    pub meets_utility: bool,
    pub meets_privacy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub delta: f64,
    /// Utility-acceptable row with the lowest V, preferring rows that also
    /// meet the vulnerability threshold.
    pub recommended: Option<String>,
    /// Utility-acceptable noisy configuration with the lowest V.
    pub best_noisy: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frontier {
    pub rows: Vec<FrontierRow>,
    pub recommendations: Vec<Recommendation>,
}

/// Pairs each score program's Bayes vulnerability with its error-bound
/// probability for every δ, flags both thresholds, and picks the
/// recommended configuration per δ.
pub fn tradeoff_frontier(points: &[TradeoffPoint], deltas: &[f64], settings: &UtilitySettings) -> Result<Frontier> {
    let mut rows = Vec::with_capacity(points.len() * deltas.len());
    let mut recommendations = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        if delta.is_nan() || delta <= 0.0 {
            return Err(Error::NonPositiveDelta(delta));
        }
        let first = rows.len();
        for point in points {
            let probability = match point.sigma {
                None => 1.0,
                Some(sigma) => AbsDifferenceDistribution::for_noise(NoiseSpec::new(sigma)?)
                    .error_bound(delta, settings.boundary)?,
            };
            rows.push(FrontierRow {
                program: point.program.clone(),
                sigma: point.sigma,
                delta,
                bayes_vulnerability: point.bayes_vulnerability,
                error_bound_probability: probability,
                meets_utility: probability >= settings.utility_threshold,
                meets_privacy: point.bayes_vulnerability <= settings.vulnerability_threshold,
            });
        }
        let candidates: Vec<&FrontierRow> = rows[first..].iter().filter(|r| r.meets_utility).collect();
        let lowest_v = |rows: &mut dyn Iterator<Item = &&FrontierRow>| {
            rows.min_by(|a, b| {
                a.bayes_vulnerability
                    .total_cmp(&b.bayes_vulnerability)
                    .then(b.error_bound_probability.total_cmp(&a.error_bound_probability))
            })
            .map(|r| r.program.clone())
        };
        let recommended =
            lowest_v(&mut candidates.iter().filter(|r| r.meets_privacy)).or_else(|| lowest_v(&mut candidates.iter()));
        let best_noisy = lowest_v(&mut candidates.iter().filter(|r| r.sigma.is_some()));
        recommendations.push(Recommendation { delta, recommended, best_noisy });
    }
    Ok(Frontier { rows, recommendations })
}
