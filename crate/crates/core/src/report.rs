//! End-to-end analysis runs: configuration, report generation and the Monte
//! Carlo cross-check.
//!
//! All artifacts go into one flat directory. Every table is checked before
//! it is written, and `manifest.json` records a SHA-256 digest per file.
//! Output bytes depend only on the configuration and seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gaussian::NoiseSpec;
use crate::grid::EthnicityGrid;
use crate::inference::{exact_joint, monte_carlo_joint, Agreement, JointDistribution, Program, ProgramKind};
use crate::population::{
    EthnicityLabel, Haplotype, Haplotype16, Haplotype38, PopulationTable, NORMALIZATION_TOLERANCE,
};
use crate::programs::WeightConfig;
use crate::risk::{RiskReport, RiskSummary, DEFAULT_VULNERABILITY_THRESHOLD};
use crate::utility::{
    tradeoff_frontier, BoundaryRule, Frontier, TradeoffPoint, UtilityReport, UtilitySettings, DEFAULT_DELTAS,
    DEFAULT_HDI_MASS, DEFAULT_UTILITY_THRESHOLD,
};

pub const DEFAULT_SIGMAS: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];
pub const DEFAULT_UTILITY_SIGMAS: [f64; 1] = [10.0];
pub const DEFAULT_MC_SAMPLES: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 42;

/// Largest per-cell Monte Carlo deviation, in standard errors, that the
/// cross-check accepts.
pub const CROSSCHECK_SE_LIMIT: f64 = 4.0;

const BUILTIN: &str = "builtin";

/// Analysis configuration as written in a TOML file. Every field has a
/// default, so an empty document is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Population table path, or `"builtin"`.
    pub population: String,
    /// Weight config path, or `"builtin"`.
    pub weights: String,
    /// Noise levels analysed for privacy and utility.
    pub sigmas: Vec<f64>,
    /// Extra noise levels analysed for utility only.
    pub utility_sigmas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub vulnerability_threshold: f64,
    pub utility_threshold: f64,
    pub hdi_mass: f64,
    pub boundary: String,
    pub mc_samples: u64,
    pub seed: u64,
    /// Program kinds to analyse: `ph_r38`, `ph_r16`, `l_gs`, `nl_gs`.
    pub programs: Vec<String>,
    /// Not recorded in the manifest, so runs into different directories
    /// produce identical bytes.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            population: BUILTIN.into(),
            weights: BUILTIN.into(),
            sigmas: DEFAULT_SIGMAS.to_vec(),
            utility_sigmas: DEFAULT_UTILITY_SIGMAS.to_vec(),
            deltas: DEFAULT_DELTAS.to_vec(),
            vulnerability_threshold: DEFAULT_VULNERABILITY_THRESHOLD,
            utility_threshold: DEFAULT_UTILITY_THRESHOLD,
            hdi_mass: DEFAULT_HDI_MASS,
            boundary: BoundaryRule::default().to_string(),
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: DEFAULT_SEED,
            programs: ProgramKind::ALL.iter().map(|k| k.short_name().to_string()).collect(),
            output_dir: PathBuf::from("reports"),
            base_dir: PathBuf::new(),
        }
    }
}

impl AnalysisConfig {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::UnreadableConfig { path: path.into(), source })?;
        let mut cfg = Self::parse(&text, path)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { path: source.into(), message: e.message().to_string() })
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

/// A configuration that passed [`validate_config`], with its inputs loaded.
#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    pub table: PopulationTable,
    pub weights: WeightConfig,
    pub population_source: String,
    pub weights_source: String,
    /// Programs analysed for privacy, noisy variants expanded per σ.
    pub programs: Vec<Program>,
    /// Noise levels in the utility section, ascending and deduplicated.
    pub utility_noise: Vec<NoiseSpec>,
    pub deltas: Vec<f64>,
    pub settings: UtilitySettings,
    pub mc_samples: u64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub raw: AnalysisConfig,
}

fn in_unit_interval(x: f64) -> bool {
    x > 0.0 && x <= 1.0
}

/// Checks every field and loads the input tables, reporting all problems
/// at once as `field: message` lines.
pub fn validate_config(cfg: &AnalysisConfig) -> Result<ValidatedConfig> {
    let mut issues = Vec::new();

    let noise_list = |name: &str, values: &[f64], issues: &mut Vec<String>| -> Vec<NoiseSpec> {
        values
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| NoiseSpec::new(s).map_err(|e| issues.push(format!("{name}[{i}]: {e}"))).ok())
            .collect()
    };
    let sigmas = noise_list("sigmas", &cfg.sigmas, &mut issues);
    let utility_only = noise_list("utility_sigmas", &cfg.utility_sigmas, &mut issues);
    for (i, &d) in cfg.deltas.iter().enumerate() {
        if !(d > 0.0 && d.is_finite()) {
            issues.push(format!("deltas[{i}]: {}", Error::NonPositiveDelta(d)));
        }
    }
    for (name, value) in [
        ("vulnerability_threshold", cfg.vulnerability_threshold),
        ("utility_threshold", cfg.utility_threshold),
        ("hdi_mass", cfg.hdi_mass),
    ] {
        if !in_unit_interval(value) {
            issues.push(format!("{name}: must lie in (0, 1], got {value}"));
        }
    }
    if cfg.mc_samples == 0 {
        issues.push("mc_samples: must be at least 1".into());
    }
    let boundary = cfg.boundary.parse::<BoundaryRule>().map_err(|e| issues.push(format!("boundary: {e}"))).ok();
    let mut kinds = Vec::new();
    for (i, name) in cfg.programs.iter().enumerate() {
        match name.parse::<ProgramKind>() {
            Ok(k) if !kinds.contains(&k) => kinds.push(k),
            Ok(_) => {}
            Err(e) => issues.push(format!("programs[{i}]: {e}")),
        }
    }
    kinds.sort();

    let (table, population_source) = if cfg.population == BUILTIN {
        (Some(PopulationTable::builtin()), BUILTIN.to_string())
    } else {
        let path = cfg.resolve(Path::new(&cfg.population));
        let table = PopulationTable::load(&path).map_err(|e| issues.push(format!("population: {e}"))).ok();
        (table, path.display().to_string())
    };
    let (weights, weights_source) = if cfg.weights == BUILTIN {
        (Some(WeightConfig::builtin()), BUILTIN.to_string())
    } else {
        let path = cfg.resolve(Path::new(&cfg.weights));
        let weights = WeightConfig::load(&path).map_err(|e| issues.push(format!("weights: {e}"))).ok();
        (weights, path.display().to_string())
    };

    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    let (Some(table), Some(weights), Some(boundary)) = (table, weights, boundary) else {
        unreachable!("every missing value recorded an issue");
    };

    let mut noise = sigmas;
    noise.sort_by(|a, b| a.sigma().total_cmp(&b.sigma()));
    noise.dedup();
    let mut programs = Vec::new();
    for kind in &kinds {
        match kind {
            ProgramKind::PhenotypeR38 => programs.push(Program::PhenotypeR38),
            ProgramKind::PhenotypeR16 => programs.push(Program::PhenotypeR16),
            ProgramKind::LinearScore => programs.push(Program::LinearScore),
            ProgramKind::NoisyScore => programs.extend(noise.iter().map(|&n| Program::NoisyScore(n))),
        }
    }
    let mut utility_noise: Vec<NoiseSpec> = if kinds.contains(&ProgramKind::NoisyScore) {
        noise.iter().chain(&utility_only).copied().collect()
    } else {
        Vec::new()
    };
    utility_noise.sort_by(|a, b| a.sigma().total_cmp(&b.sigma()));
    utility_noise.dedup();
    let mut deltas = cfg.deltas.clone();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();

    Ok(ValidatedConfig {
        table,
        weights,
        population_source,
        weights_source,
        programs,
        utility_noise,
        deltas,
        settings: UtilitySettings {
            utility_threshold: cfg.utility_threshold,
            vulnerability_threshold: cfg.vulnerability_threshold,
            hdi_mass: cfg.hdi_mass,
            boundary,
        },
        mc_samples: cfg.mc_samples,
        seed: cfg.seed,
        output_dir: cfg.output_dir.clone(),
        raw: cfg.clone(),
    })
}

/// Results of a full run, before serialization.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub risks: Vec<RiskReport>,
    /// Empty when there are no noise levels or no δ values.
    pub utility: Vec<UtilityReport>,
    /// Present whenever δ values and score programs are configured.
    pub frontier: Option<Frontier>,
}

impl Analysis {
    pub fn risk(&self, program_id: &str) -> Option<&RiskReport> {
        self.risks.iter().find(|r| r.program == program_id)
    }
}

/// Computes every report. Program analyses run in parallel; results keep
/// the configured program order.
pub fn analyze(cfg: &ValidatedConfig) -> Result<Analysis> {
    let risks = cfg
        .programs
        .par_iter()
        .map(|p| {
            let joint = exact_joint(&cfg.table, p, Some(&cfg.weights))?;
            joint.validate()?;
            RiskReport::new(joint, cfg.settings.vulnerability_threshold)
        })
        .collect::<Result<Vec<_>>>()?;

    let with_utility = !cfg.deltas.is_empty() && !cfg.utility_noise.is_empty();
    let vulnerability_of = |sigma: f64| risks.iter().find(|r| r.sigma == Some(sigma)).map(|r| r.bayes_vulnerability);
    let utility = if with_utility {
        cfg.utility_noise
            .par_iter()
            .map(|&n| {
                UtilityReport::new(&cfg.weights, &cfg.table, n, &cfg.deltas, &cfg.settings, vulnerability_of(n.sigma()))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    for u in &utility {
        let total: f64 = u.distribution.masses().iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE
            || u.distribution.masses().iter().any(|m| m.is_nan() || *m < 0.0)
        {
            return Err(Error::Invariant(format!("|L - NL| distribution at sigma {} sums to {total}", u.sigma)));
        }
    }

    let points: Vec<TradeoffPoint> = risks
        .iter()
        .filter(|r| r.program == Program::LinearScore.id() || r.sigma.is_some())
        .map(|r| TradeoffPoint {
            program: r.program.clone(),
            sigma: r.sigma,
            bayes_vulnerability: r.bayes_vulnerability,
        })
        .collect();
    let frontier = if !cfg.deltas.is_empty() && !points.is_empty() {
        Some(tradeoff_frontier(&points, &cfg.deltas, &cfg.settings)?)
    } else {
        None
    };
    Ok(Analysis { risks, utility, frontier })
}

/// A named file in the report directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report types serialize");
    out.push(b'\n');
    out
}

fn ethnicity_header(first: &str) -> String {
    let mut h = first.to_string();
    for e in EthnicityLabel::ALL {
        h.push(',');
        h.push_str(e.name());
    }
    h.push('\n');
    h
}

fn check_grid<C: Ord + Clone>(name: &str, grid: &EthnicityGrid<C>) -> Result<()> {
    if grid.cells().iter().flatten().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(Error::Invariant(format!("{name}: negative or non-finite mass")));
    }
    let total = grid.total();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::Invariant(format!("{name}: table sums to {total}")));
    }
    Ok(())
}

fn grid_csv<C: Ord + Clone + std::fmt::Display>(first: &str, grid: &EthnicityGrid<C>) -> Vec<u8> {
    let mut s = ethnicity_header(first);
    for (c, cell) in grid.iter() {
        let _ = write!(s, "{c}");
        for m in cell {
            let _ = write!(s, ",{m:.6}");
        }
        s.push('\n');
    }
    s.into_bytes()
}

fn prior_artifact<H: Haplotype>(table: &PopulationTable) -> Result<Artifact> {
    let name = format!("prior_{}.csv", H::GENE.name());
    let grid = table.prior_joint_heatmap::<H>();
    check_grid(&name, &grid)?;
    Ok(Artifact { name, bytes: grid_csv("pair", &grid) })
}

#[derive(Serialize)]
struct JointDoc<'a> {
    provenance: &'a crate::inference::Provenance,
    ethnicities: Vec<&'static str>,
    /// Output value to per-ethnicity mass, in ethnicity order.
    cells: Vec<(String, [f64; 4])>,
}

fn joint_artifacts(joint: &JointDistribution) -> Vec<Artifact> {
    let id = joint.program_id();
    let doc = JointDoc {
        provenance: joint.provenance(),
        ethnicities: EthnicityLabel::ALL.iter().map(|e| e.name()).collect(),
        cells: joint.grid().iter().map(|(o, c)| (o.to_string(), *c)).collect(),
    };
    vec![
        Artifact { name: format!("joint_{id}.csv"), bytes: grid_csv("output", joint.grid()) },
        Artifact { name: format!("joint_{id}.json"), bytes: json_bytes(&doc) },
    ]
}

fn output_privacy_artifact(risk: &RiskReport) -> Result<Artifact> {
    let mut s = String::from("output,p_output");
    for e in EthnicityLabel::ALL {
        let _ = write!(s, ",{}", e.name());
    }
    s.push('\n');
    for slice in &risk.output_privacy {
        let sum = slice.posterior.sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Invariant(format!("{}: posterior at {} sums to {sum}", risk.program, slice.output)));
        }
        let _ = write!(s, "{},{:.6}", slice.output, slice.output_probability);
        for p in slice.posterior.probs() {
            let _ = write!(s, ",{p:.6}");
        }
        s.push('\n');
    }
    Ok(Artifact { name: format!("output_privacy_{}.csv", risk.program), bytes: s.into_bytes() })
}

fn utility_csv(u: &UtilityReport) -> Artifact {
    let mut s = String::from("abs_difference,probability\n");
    for (d, m) in u.distribution.iter() {
        let _ = writeln!(s, "{d},{m:.6}");
    }
    Artifact { name: format!("utility_abs_difference_sigma_{}.csv", u.sigma), bytes: s.into_bytes() }
}

fn tradeoff_csv(frontier: &Frontier) -> Artifact {
    let mut s =
        String::from("program,sigma,delta,bayes_vulnerability,error_bound_probability,meets_utility,meets_privacy\n");
    for r in &frontier.rows {
        let sigma = r.sigma.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{sigma},{},{:.6},{:.6},{},{}",
            r.program, r.delta, r.bayes_vulnerability, r.error_bound_probability, r.meets_utility, r.meets_privacy
        );
    }
    Artifact { name: "tradeoff.csv".into(), bytes: s.into_bytes() }
}

#[derive(Serialize)]
struct ScoresDoc<'a> {
    programs: std::collections::BTreeMap<&'a str, RiskSummary>,
}

/// Serializes an analysis into report files (without the manifest), in a
/// fixed order.
pub fn render(cfg: &ValidatedConfig, analysis: &Analysis) -> Result<Vec<Artifact>> {
    let mut out = vec![prior_artifact::<Haplotype38>(&cfg.table)?, prior_artifact::<Haplotype16>(&cfg.table)?];
    for risk in &analysis.risks {
        risk.joint.validate()?;
        risk.check()?;
        out.extend(joint_artifacts(&risk.joint));
        out.push(output_privacy_artifact(risk)?);
    }
    let scores = ScoresDoc { programs: analysis.risks.iter().map(|r| (r.program.as_str(), r.summary())).collect() };
    out.push(Artifact { name: "scores.json".into(), bytes: json_bytes(&scores) });
    if !analysis.utility.is_empty() {
        out.extend(analysis.utility.iter().map(utility_csv));
        out.push(Artifact { name: "utility.json".into(), bytes: json_bytes(&analysis.utility) });
    }
    if let Some(frontier) = &analysis.frontier {
        out.push(tradeoff_csv(frontier));
        out.push(Artifact { name: "tradeoff.json".into(), bytes: json_bytes(frontier) });
    }
    Ok(out)
}

/// Writes artifacts one at a time into a directory and records their
/// digests.
pub struct ArtifactWriter {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), entries: Vec::new() })
    }

    pub fn write(&mut self, artifact: &Artifact) -> Result<()> {
        let path = self.dir.join(&artifact.name);
        std::fs::write(&path, &artifact.bytes).map_err(|e| Error::io(&path, e))?;
        self.entries.push(ManifestEntry {
            name: artifact.name.clone(),
            sha256: sha256_hex(&artifact.bytes),
            bytes: artifact.bytes.len(),
        });
        Ok(())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a AnalysisConfig,
    population_source: &'a str,
    population_sha256: String,
    weights_source: &'a str,
    weights_digest: String,
    artifacts: &'a [ManifestEntry],
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub analysis: Analysis,
    pub artifacts: Vec<ManifestEntry>,
    pub output_dir: PathBuf,
}

/// Runs the analysis and writes all reports plus `manifest.json` into
/// `cfg.output_dir`.
pub fn run_full_analysis(cfg: &ValidatedConfig) -> Result<ReportBundle> {
    let analysis = analyze(cfg)?;
    let artifacts = render(cfg, &analysis)?;
    let mut writer = ArtifactWriter::create(&cfg.output_dir)?;
    for a in &artifacts {
        writer.write(a)?;
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg.raw,
        population_source: &cfg.population_source,
        population_sha256: sha256_hex(cfg.table.to_toml().as_bytes()),
        weights_source: &cfg.weights_source,
        weights_digest: cfg.weights.digest(),
        artifacts: writer.entries(),
    };
    let manifest = Artifact { name: "manifest.json".into(), bytes: json_bytes(&manifest) };
    writer.write(&manifest)?;
    Ok(ReportBundle { analysis, artifacts: writer.entries, output_dir: cfg.output_dir.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckEntry {
    pub program: String,
    #[serde(flatten)]
    pub agreement: Agreement,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckReport {
    pub samples: u64,
    pub seed: u64,
    pub se_limit: f64,
    pub programs: Vec<CrosscheckEntry>,
    pub passed: bool,
}

impl CrosscheckReport {
    /// Fails with an invariant error naming every program over the limit.
    pub fn ensure_passed(&self) -> Result<()> {
        let failed: Vec<String> = self
            .programs
            .iter()
            .filter(|p| !p.passed)
            .map(|p| format!("{} ({:.2} SE)", p.program, p.agreement.max_se_units))
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::Invariant(format!(
                "Monte Carlo disagrees with the exact joint beyond {} SE: {}",
                self.se_limit,
                failed.join(", ")
            )))
        }
    }

    pub fn artifact(&self) -> Artifact {
        Artifact { name: "crosscheck.json".into(), bytes: json_bytes(self) }
    }
}

/// Samples every configured program by forward simulation and compares
/// each cell with the exact joint.
pub fn crosscheck(cfg: &ValidatedConfig) -> Result<CrosscheckReport> {
    let programs = cfg
        .programs
        .iter()
        .map(|p| {
            let exact = exact_joint(&cfg.table, p, Some(&cfg.weights))?;
            let mc = monte_carlo_joint(&cfg.table, p, Some(&cfg.weights), cfg.mc_samples, cfg.seed)?;
            let agreement = mc.compare_to_exact(&exact)?;
            let passed = agreement.max_se_units <= CROSSCHECK_SE_LIMIT;
            Ok(CrosscheckEntry { program: p.id(), agreement, passed })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CrosscheckReport {
        samples: cfg.mc_samples,
        seed: cfg.seed,
        se_limit: CROSSCHECK_SE_LIMIT,
        passed: programs.iter().all(|p| p.passed),
        programs,
    })
}
