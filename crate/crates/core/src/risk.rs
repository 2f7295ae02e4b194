//! Privacy risk metrics over a joint p(E, O).
//!
//! Only outputs with p(O = v) > 0 take part: the conditional p(E | O = v)
//! is undefined elsewhere.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::EthnicityGrid;
use crate::inference::{condition_on_output, JointDistribution, Output, PosteriorSlice};
use crate::population::{EthnicityLabel, ETHNICITY_COUNT};

/// Default Bayes vulnerability above which a program is flagged.
pub const DEFAULT_VULNERABILITY_THRESHOLD: f64 = 0.35;

/// Ties within this distance all count as argmax witnesses.
const WITNESS_TOLERANCE: f64 = 1e-12;

/// Output privacy: p(E | O = v) for every observable output, ascending.
pub fn output_privacy_heatmap(joint: &JointDistribution) -> Vec<PosteriorSlice> {
    joint
        .outputs()
        .iter()
        .filter(|o| joint.output_probability(o) > 0.0)
        .map(|o| condition_on_output(joint, o).expect("output has positive probability"))
        .collect()
}

/// Program privacy: the joint itself, after checking it is a distribution.
pub fn program_privacy(joint: &JointDistribution) -> Result<&EthnicityGrid<Output>> {
    joint.check_normalized()?;
    Ok(joint.grid())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub ethnicity: EthnicityLabel,
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxOutputPrivacy {
    pub score: f64,
    pub witnesses: Vec<Witness>,
}

/// max over e and observable o of p(E = e | O = o), with every (e, o)
/// attaining it.
pub fn max_output_privacy(joint: &JointDistribution) -> MaxOutputPrivacy {
    let mut conditionals = Vec::new();
    for (o, cell) in joint.grid().iter() {
        let p_o: f64 = cell.iter().sum();
        if p_o > 0.0 {
            for e in EthnicityLabel::ALL {
                conditionals.push((e, *o, cell[e.index()] / p_o));
            }
        }
    }
    let score = conditionals.iter().map(|c| c.2).fold(0.0, f64::max);
    let witnesses = conditionals
        .into_iter()
        .filter(|c| score - c.2 <= WITNESS_TOLERANCE)
        .map(|(ethnicity, output, _)| Witness { ethnicity, output })
        .collect();
    MaxOutputPrivacy { score, witnesses }
}

/// V = Σ_o max_e p(E = e, O = o): the probability that an attacker guessing
/// the most likely ethnicity for the observed output is right.
pub fn bayes_vulnerability(joint: &JointDistribution) -> f64 {
    joint.grid().cells().iter().map(|cell| cell.iter().copied().fold(0.0, f64::max)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub program: String,
    pub sigma: Option<f64>,
    pub output_privacy: Vec<PosteriorSlice>,
    pub joint: JointDistribution,
    pub max_output_privacy: MaxOutputPrivacy,
    pub bayes_vulnerability: f64,
    pub exceeds_threshold: bool,
}

impl RiskReport {
    pub fn new(joint: JointDistribution, vulnerability_threshold: f64) -> Result<Self> {
        program_privacy(&joint)?;
        let bayes_vulnerability = bayes_vulnerability(&joint);
        let report = Self {
            program: joint.program_id().to_string(),
            sigma: joint.provenance().sigma,
            output_privacy: output_privacy_heatmap(&joint),
            max_output_privacy: max_output_privacy(&joint),
            bayes_vulnerability,
            exceeds_threshold: bayes_vulnerability > vulnerability_threshold,
            joint,
        };
        report.check()?;
        Ok(report)
    }

    /// 1/|E| ≤ V ≤ max output privacy ≤ 1.
    pub fn check(&self) -> Result<()> {
        let floor = 1.0 / ETHNICITY_COUNT as f64;
        let (v, m) = (self.bayes_vulnerability, self.max_output_privacy.score);
        let eps = 1e-12;
        if !(floor - eps <= v && v <= m + eps && m <= 1.0 + eps) {
            return Err(Error::Invariant(format!(
                "{}: expected {floor} <= V ({v}) <= max output privacy ({m}) <= 1",
                self.program
            )));
        }
        Ok(())
    }

    pub fn summary(&self) -> RiskSummary {
        RiskSummary {
            program: self.program.clone(),
            sigma: self.sigma,
            bayes_vulnerability: self.bayes_vulnerability,
            max_output_privacy: self.max_output_privacy.clone(),
            exceeds_vulnerability_threshold: self.exceeds_threshold,
            observable_outputs: self.output_privacy.len(),
        }
    }
}

/// Score-only view of a [`RiskReport`] for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskSummary {
    pub program: String,
    pub sigma: Option<f64>,
    pub bayes_vulnerability: f64,
    pub max_output_privacy: MaxOutputPrivacy,
    pub exceeds_vulnerability_threshold: bool,
    pub observable_outputs: usize,
}
