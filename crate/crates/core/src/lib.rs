//! Exact Bayesian privacy-risk and utility analysis of genetic data
//! disclosure programs.
//!
//! An attacker knows the haplotype frequencies of two taste receptor genes
//! in four ethnic populations and observes the output of a disclosure
//! program (a taster phenotype, a polygenic score, or a noisy polygenic
//! score). The crate computes the exact joint distribution of ethnicity and
//! program output, the attacker's posterior, privacy risk scores and the
//! utility cost of adding noise.

pub mod error;
pub mod gaussian;
pub mod grid;
pub mod inference;
pub mod population;
pub mod programs;
pub mod report;
pub mod risk;
pub mod utility;

pub use error::{Error, Result};
pub use gaussian::NoiseSpec;
pub use grid::EthnicityGrid;
pub use inference::{
    condition_on_output, exact_joint, monte_carlo_joint, JointDistribution, Output, Program, ProgramKind,
};
pub use population::{
    ethnicity_prior, EthnicityLabel, Genotype, Haplotype16, Haplotype38, HaplotypePair, PopulationTable,
};
pub use programs::{linear_score, PhenotypeLabel, ScoreValue, WeightConfig};
pub use risk::{bayes_vulnerability, max_output_privacy, output_privacy_heatmap, program_privacy, RiskReport};
pub use utility::{abs_difference_distribution, error_bound_probability, tradeoff_frontier};
