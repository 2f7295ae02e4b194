//! Pushing the attacker prior through a disclosure program.
//!
//! The state space is small (4 ethnicities × 36 TAS2R38 pairs × 6 TAS2R16
//! pairs), so the joint p(E, O) is computed by exhaustive enumeration. The
//! noisy score is handled analytically with centi-binned Gaussian masses. A
//! forward Monte Carlo sampler is provided as an independent cross-check.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{BinnedGaussian, NoiseSpec};
use crate::grid::EthnicityGrid;
use crate::population::{
    ethnicity_prior, CategoricalDistribution, EthnicityLabel, Genotype, Haplotype, Haplotype16, Haplotype38,
    HaplotypePair, PopulationTable, ETHNICITY_COUNT, NORMALIZATION_TOLERANCE,
};
use crate::programs::{
    linear_score, sample_noisy_score, taster_phenotype_r16, taster_phenotype_r38, PhenotypeLabel, ScoreValue,
    WeightConfig,
};

/// Number of independent random streams a Monte Carlo run is split into.
const MC_SHARDS: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgramKind {
    PhenotypeR38,
    PhenotypeR16,
    LinearScore,
    NoisyScore,
}

impl ProgramKind {
    pub const ALL: [ProgramKind; 4] =
        [ProgramKind::PhenotypeR38, ProgramKind::PhenotypeR16, ProgramKind::LinearScore, ProgramKind::NoisyScore];

    pub fn short_name(self) -> &'static str {
        match self {
            ProgramKind::PhenotypeR38 => "ph_r38",
            ProgramKind::PhenotypeR16 => "ph_r16",
            ProgramKind::LinearScore => "l_gs",
            ProgramKind::NoisyScore => "nl_gs",
        }
    }
}

impl FromStr for ProgramKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.short_name() == s).ok_or_else(|| {
            Error::InvalidParameter(format!("unknown program {s:?} (expected ph_r38, ph_r16, l_gs or nl_gs)"))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Program {
    PhenotypeR38,
    PhenotypeR16,
    LinearScore,
    NoisyScore(NoiseSpec),
}

impl Program {
    pub fn kind(&self) -> ProgramKind {
        match self {
            Program::PhenotypeR38 => ProgramKind::PhenotypeR38,
            Program::PhenotypeR16 => ProgramKind::PhenotypeR16,
            Program::LinearScore => ProgramKind::LinearScore,
            Program::NoisyScore(_) => ProgramKind::NoisyScore,
        }
    }

    /// Identifier used in reports, e.g. `l_gs` or `nl_gs_sigma_0.5`.
    pub fn id(&self) -> String {
        match self {
            Program::NoisyScore(n) => format!("nl_gs_sigma_{}", n.sigma()),
            other => other.kind().short_name().to_string(),
        }
    }

    pub fn noise(&self) -> Option<NoiseSpec> {
        match self {
            Program::NoisyScore(n) => Some(*n),
            _ => None,
        }
    }

    pub fn needs_weights(&self) -> bool {
        matches!(self, Program::LinearScore | Program::NoisyScore(_))
    }

    /// Output of a deterministic program; `None` for the noisy score.
    pub fn evaluate(&self, g: &Genotype, weights: Option<&WeightConfig>) -> Option<Output> {
        match self {
            Program::PhenotypeR38 => Some(Output::Phenotype(taster_phenotype_r38(g.r38))),
            Program::PhenotypeR16 => Some(Output::Phenotype(taster_phenotype_r16(g.r16))),
            Program::LinearScore => weights.map(|w| Output::Score(linear_score(g, w))),
            Program::NoisyScore(_) => None,
        }
    }

    fn require_weights<'a>(&self, weights: Option<&'a WeightConfig>) -> Result<Option<&'a WeightConfig>> {
        match (self.needs_weights(), weights) {
            (true, None) => Err(Error::MissingWeights(self.id())),
            (true, w) => Ok(w),
            (false, _) => Ok(None),
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// A value a disclosure program can release.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Output {
    Phenotype(PhenotypeLabel),
    Score(ScoreValue),
}

impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Output::Phenotype(p) => p.fmt(f),
            Output::Score(s) => s.fmt(f),
        }
    }
}

impl Serialize for Output {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Where a joint came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub program: String,
    pub weights_digest: Option<String>,
    pub sigma: Option<f64>,
    pub method: JointMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JointMethod {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

/// p(E = e, O = o) over the program's output alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    grid: EthnicityGrid<Output>,
    provenance: Provenance,
}

impl JointDistribution {
    pub fn new(grid: EthnicityGrid<Output>, provenance: Provenance) -> Self {
        Self { grid, provenance }
    }

    pub fn grid(&self) -> &EthnicityGrid<Output> {
        &self.grid
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn program_id(&self) -> &str {
        &self.provenance.program
    }

    pub fn outputs(&self) -> &[Output] {
        self.grid.columns()
    }

    pub fn mass(&self, e: EthnicityLabel, o: &Output) -> f64 {
        self.grid.get(e, o)
    }

    pub fn output_probability(&self, o: &Output) -> f64 {
        self.grid.column(o).map_or(0.0, |c| c.iter().sum())
    }

    pub fn ethnicity_marginals(&self) -> [f64; ETHNICITY_COUNT] {
        self.grid.row_sums()
    }

    pub fn total(&self) -> f64 {
        self.grid.total()
    }

    /// Non-negativity and total mass one.
    pub fn check_normalized(&self) -> Result<()> {
        for (o, cell) in self.grid.iter() {
            if let Some(m) = cell.iter().find(|m| !m.is_finite() || **m < 0.0) {
                return Err(Error::Invariant(format!("{}: negative or non-finite mass {m} at {o}", self.program_id())));
            }
        }
        let total = self.total();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Invariant(format!("{}: joint sums to {total}", self.program_id())));
        }
        Ok(())
    }

    /// Full check for exactly computed joints: normalized, and the ethnicity
    /// marginal reproduces the prior.
    pub fn validate(&self) -> Result<()> {
        self.check_normalized()?;
        let prior = ethnicity_prior();
        for (e, (m, p)) in self.ethnicity_marginals().iter().zip(prior.probs()).enumerate() {
            if (m - p).abs() > NORMALIZATION_TOLERANCE {
                let e = EthnicityLabel::ALL[e];
                return Err(Error::Invariant(format!("{}: marginal of {e} is {m}, prior is {p}", self.program_id())));
            }
        }
        Ok(())
    }
}

/// The attacker's belief about ethnicity after seeing one output.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSlice {
    pub output: Output,
    pub posterior: CategoricalDistribution<EthnicityLabel>,
    pub output_probability: f64,
}

fn enumerate_atoms(table: &PopulationTable) -> Vec<(EthnicityLabel, Genotype, f64)> {
    let prior = ethnicity_prior();
    let mut atoms = Vec::with_capacity(ETHNICITY_COUNT * 36 * 6);
    for (e, p_e) in prior.iter() {
        let d38 = table.pair_distribution::<Haplotype38>(*e);
        let d16 = table.pair_distribution::<Haplotype16>(*e);
        for (pair38, p38) in d38.iter() {
            for (pair16, p16) in d16.iter() {
                atoms.push((*e, Genotype::new(*pair38, *pair16), p_e * p38 * p16));
            }
        }
    }
    atoms
}

fn deterministic_grid(
    table: &PopulationTable,
    program: &Program,
    weights: Option<&WeightConfig>,
) -> EthnicityGrid<Output> {
    EthnicityGrid::from_entries(enumerate_atoms(table).into_iter().map(|(e, g, p)| {
        let mut mass = [0.0; ETHNICITY_COUNT];
        mass[e.index()] = p;
        let out = program.evaluate(&g, weights).expect("deterministic program with weights resolved");
        (out, mass)
    }))
}

/// Exact joint p(E, O) for `program` under the uniform ethnicity prior and
/// the population table.
pub fn exact_joint(
    table: &PopulationTable,
    program: &Program,
    weights: Option<&WeightConfig>,
) -> Result<JointDistribution> {
    let weights = program.require_weights(weights)?;
    let grid = match program {
        Program::NoisyScore(noise) => {
            let base = deterministic_grid(table, &Program::LinearScore, weights);
            spread_with_noise(&base, *noise)
        }
        _ => deterministic_grid(table, program, weights),
    };
    Ok(JointDistribution {
        grid,
        provenance: Provenance {
            program: program.id(),
            weights_digest: weights.map(WeightConfig::digest),
            sigma: program.noise().map(NoiseSpec::sigma),
            method: JointMethod::Exact,
        },
    })
}

/// Convolves each score column with the binned Gaussian.
fn spread_with_noise(base: &EthnicityGrid<Output>, noise: NoiseSpec) -> EthnicityGrid<Output> {
    let binned = BinnedGaussian::new(noise);
    let scores: Vec<(i64, [f64; ETHNICITY_COUNT])> = base
        .iter()
        .map(|(o, m)| match o {
            Output::Score(s) => (s.centi(), *m),
            Output::Phenotype(_) => unreachable!("linear score grid holds scores"),
        })
        .collect();
    let Some(lo) = scores.iter().map(|(c, _)| c - binned.half_width()).min() else {
        return EthnicityGrid::from_entries(Vec::new());
    };
    let hi = scores.iter().map(|(c, _)| c + binned.half_width()).max().unwrap_or(lo);
    let mut dense = vec![[0.0; ETHNICITY_COUNT]; (hi - lo + 1) as usize];
    for (center, mass) in &scores {
        for (k, m) in binned.iter() {
            let slot = &mut dense[(center + k - lo) as usize];
            for (acc, base_mass) in slot.iter_mut().zip(mass) {
                *acc += base_mass * m;
            }
        }
    }
    EthnicityGrid::from_entries(
        dense.into_iter().enumerate().map(|(i, m)| (Output::Score(ScoreValue(lo + i as i64)), m)),
    )
}

/// p(E | O = v).
pub fn condition_on_output(joint: &JointDistribution, v: &Output) -> Result<PosteriorSlice> {
    let column = joint.grid.column(v).ok_or_else(|| Error::UnobservableOutput(v.to_string()))?;
    let p_v: f64 = column.iter().sum();
    if p_v <= 0.0 {
        return Err(Error::UnobservableOutput(v.to_string()));
    }
    let posterior = CategoricalDistribution::from_weights(EthnicityLabel::ALL.to_vec(), column.to_vec())?;
    Ok(PosteriorSlice { output: *v, posterior, output_probability: p_v })
}

/// Empirical joint from forward sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalJoint {
    pub joint: JointDistribution,
    pub counts: EthnicityGrid<Output>,
    pub samples: u64,
}

impl EmpiricalJoint {
    /// √(p̂(1 − p̂)/N) for one cell.
    pub fn standard_error(&self, e: EthnicityLabel, o: &Output) -> f64 {
        let p = self.joint.mass(e, o);
        (p * (1.0 - p) / self.samples as f64).sqrt()
    }

    /// Largest per-cell deviation from `exact` in standard-error units.
    ///
    /// Each cell uses the larger of the empirical and the exact-probability
    /// standard error, so cells with no hits (p̂ = 0) or a single hit remain
    /// well defined.
    pub fn compare_to_exact(&self, exact: &JointDistribution) -> Result<Agreement> {
        if self.joint.program_id() != exact.program_id() {
            return Err(Error::InvalidParameter(format!(
                "program mismatch: Monte Carlo run is {}, exact joint is {}",
                self.joint.program_id(),
                exact.program_id()
            )));
        }
        let n = self.samples as f64;
        let mut outputs: Vec<Output> = exact.outputs().iter().chain(self.joint.outputs()).copied().collect();
        outputs.sort();
        outputs.dedup();
        let mut agreement = Agreement { max_se_units: 0.0, max_abs_diff: 0.0, worst: None, cells: 0 };
        for o in &outputs {
            for e in EthnicityLabel::ALL {
                let p = exact.mass(e, o);
                let p_hat = self.joint.mass(e, o);
                let se = (p_hat * (1.0 - p_hat) / n).sqrt().max((p * (1.0 - p) / n).sqrt());
                let diff = (p_hat - p).abs();
                let z = if diff == 0.0 {
                    0.0
                } else if se > 0.0 {
                    diff / se
                } else {
                    f64::INFINITY
                };
                agreement.cells += 1;
                agreement.max_abs_diff = agreement.max_abs_diff.max(diff);
                if z > agreement.max_se_units {
                    agreement.max_se_units = z;
                    agreement.worst = Some(WorstCell { ethnicity: e, output: *o, exact: p, empirical: p_hat });
                }
            }
        }
        Ok(agreement)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCell {
    pub ethnicity: EthnicityLabel,
    pub output: Output,
    pub exact: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Agreement {
    pub max_se_units: f64,
    pub max_abs_diff: f64,
    pub worst: Option<WorstCell>,
    pub cells: usize,
}

struct AncestralSampler {
    r38: Vec<WeightedIndex<f64>>,
    r16: Vec<WeightedIndex<f64>>,
}

impl AncestralSampler {
    fn new(table: &PopulationTable) -> Self {
        let build = |freq: &[f64]| WeightedIndex::new(freq.iter().copied()).expect("population rows are valid");
        Self {
            r38: EthnicityLabel::ALL.iter().map(|&e| build(table.frequencies::<Haplotype38>(e))).collect(),
            r16: EthnicityLabel::ALL.iter().map(|&e| build(table.frequencies::<Haplotype16>(e))).collect(),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> (EthnicityLabel, Genotype) {
        let e = EthnicityLabel::ALL[rng.random_range(0..ETHNICITY_COUNT)];
        let h38 = |rng: &mut R| Haplotype38::ALL[self.r38[e.index()].sample(rng)];
        let h16 = |rng: &mut R| Haplotype16::ALL[self.r16[e.index()].sample(rng)];
        let r38 = HaplotypePair::new(h38(rng), h38(rng));
        let r16 = HaplotypePair::new(h16(rng), h16(rng));
        (e, Genotype::new(r38, r16))
    }
}

/// Forward (ancestral) sampling estimate of the joint. The run is split into
/// fixed seed-derived streams, so the result depends only on `seed` and
/// `samples`, not on thread scheduling.
pub fn monte_carlo_joint(
    table: &PopulationTable,
    program: &Program,
    weights: Option<&WeightConfig>,
    samples: u64,
    seed: u64,
) -> Result<EmpiricalJoint> {
    if samples == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    let weights = program.require_weights(weights)?;
    let sampler = AncestralSampler::new(table);
    let shard_counts: Vec<BTreeMap<(Output, usize), u64>> = (0..MC_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let n = samples / MC_SHARDS + u64::from(shard < samples % MC_SHARDS);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard);
            let mut counts = BTreeMap::new();
            for _ in 0..n {
                let (e, g) = sampler.draw(&mut rng);
                let out = match program {
                    Program::NoisyScore(noise) => {
                        Output::Score(sample_noisy_score(&g, weights.expect("checked"), *noise, &mut rng))
                    }
                    deterministic => deterministic.evaluate(&g, weights).expect("checked"),
                };
                *counts.entry((out, e.index())).or_insert(0u64) += 1;
            }
            counts
        })
        .collect();

    let mut merged = BTreeMap::<Output, [u64; ETHNICITY_COUNT]>::new();
    for counts in shard_counts {
        for ((out, e), c) in counts {
            merged.entry(out).or_insert([0; ETHNICITY_COUNT])[e] += c;
        }
    }
    let n = samples as f64;
    let counts = EthnicityGrid::from_entries(merged.iter().map(|(o, c)| (*o, c.map(|x| x as f64))));
    let grid = EthnicityGrid::from_entries(merged.iter().map(|(o, c)| (*o, c.map(|x| x as f64 / n))));
    Ok(EmpiricalJoint {
        joint: JointDistribution {
            grid,
            provenance: Provenance {
                program: program.id(),
                weights_digest: weights.map(WeightConfig::digest),
                sigma: program.noise().map(NoiseSpec::sigma),
                method: JointMethod::MonteCarlo { samples, seed },
            },
        },
        counts,
        samples,
    })
}
