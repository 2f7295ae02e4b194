//! Ethnicities, haplotypes and the attacker's prior knowledge.
//!
//! The attacker believes every ethnicity is equally likely and knows, for
//! each ethnicity, the population frequency of every haplotype of the two
//! taste receptor genes. An individual carries two independently drawn
//! haplotypes per gene; since every disclosure program is symmetric in the
//! two, pairs are stored unordered.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::EthnicityGrid;

pub const ETHNICITY_COUNT: usize = 4;

/// Raw population rows must sum to a value within this distance of 1.
pub const ROW_SUM_TOLERANCE: f64 = 0.01;

/// Tolerance for "sums to one" checks on normalized distributions.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

const BUILTIN_POPULATION: &str = include_str!("../data/population.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EthnicityLabel {
    African,
    Asian,
    European,
    American,
}

impl EthnicityLabel {
    pub const ALL: [EthnicityLabel; ETHNICITY_COUNT] =
        [EthnicityLabel::African, EthnicityLabel::Asian, EthnicityLabel::European, EthnicityLabel::American];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EthnicityLabel::African => "African",
            EthnicityLabel::Asian => "Asian",
            EthnicityLabel::European => "European",
            EthnicityLabel::American => "American",
        }
    }
}

impl fmt::Display for EthnicityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl serde::Serialize for EthnicityLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl FromStr for EthnicityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown ethnicity {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gene {
    Tas2r38,
    Tas2r16,
}

impl Gene {
    pub const ALL: [Gene; 2] = [Gene::Tas2r38, Gene::Tas2r16];

    pub fn name(self) -> &'static str {
        match self {
            Gene::Tas2r38 => "TAS2R38",
            Gene::Tas2r16 => "TAS2R16",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn labels(self) -> Vec<&'static str> {
        match self {
            Gene::Tas2r38 => Haplotype38::ALL.iter().map(|h| h.label()).collect(),
            Gene::Tas2r16 => Haplotype16::ALL.iter().map(|h| h.label()).collect(),
        }
    }
}

impl fmt::Display for Gene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A haplotype of one gene, with a stable index into its gene's label list.
pub trait Haplotype: Copy + Eq + Ord + fmt::Debug + Send + Sync + 'static {
    const GENE: Gene;
    const ALL: &'static [Self];

    fn index(self) -> usize;
    fn label(self) -> &'static str;

    fn from_label(label: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|h| h.label() == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Haplotype38 {
    Pav,
    Avi,
    Aav,
    Avv,
    Pai,
    Pvi,
    Aai,
    Pvv,
}

impl Haplotype for Haplotype38 {
    const GENE: Gene = Gene::Tas2r38;
    const ALL: &'static [Self] = &[
        Haplotype38::Pav,
        Haplotype38::Avi,
        Haplotype38::Aav,
        Haplotype38::Avv,
        Haplotype38::Pai,
        Haplotype38::Pvi,
        Haplotype38::Aai,
        Haplotype38::Pvv,
    ];

    fn index(self) -> usize {
        self as usize
    }

    fn label(self) -> &'static str {
        match self {
            Haplotype38::Pav => "PAV",
            Haplotype38::Avi => "AVI",
            Haplotype38::Aav => "AAV",
            Haplotype38::Avv => "AVV",
            Haplotype38::Pai => "PAI",
            Haplotype38::Pvi => "PVI",
            Haplotype38::Aai => "AAI",
            Haplotype38::Pvv => "PVV",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Haplotype16 {
    HapCd,
    HapA,
    HapB,
}

impl Haplotype for Haplotype16 {
    const GENE: Gene = Gene::Tas2r16;
    const ALL: &'static [Self] = &[Haplotype16::HapCd, Haplotype16::HapA, Haplotype16::HapB];

    fn index(self) -> usize {
        self as usize
    }

    fn label(self) -> &'static str {
        match self {
            Haplotype16::HapCd => "HAP-CD",
            Haplotype16::HapA => "HAP-A",
            Haplotype16::HapB => "HAP-B",
        }
    }
}

/// Unordered pair of haplotypes of one gene, stored with the lower-indexed
/// haplotype first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HaplotypePair<H> {
    first: H,
    second: H,
}

impl<H: Haplotype> HaplotypePair<H> {
    pub fn new(a: H, b: H) -> Self {
        if a.index() <= b.index() {
            Self { first: a, second: b }
        } else {
            Self { first: b, second: a }
        }
    }

    pub fn first(self) -> H {
        self.first
    }

    pub fn second(self) -> H {
        self.second
    }

    pub fn is_homozygous(self) -> bool {
        self.first == self.second
    }

    pub fn both(self, h: H) -> bool {
        self.first == h && self.second == h
    }

    /// Every unordered pair, in canonical order.
    pub fn all() -> Vec<Self> {
        let all = H::ALL;
        let mut pairs = Vec::with_capacity(all.len() * (all.len() + 1) / 2);
        for (i, &a) in all.iter().enumerate() {
            for &b in &all[i..] {
                pairs.push(Self { first: a, second: b });
            }
        }
        pairs
    }
}

impl<H: Haplotype> fmt::Display for HaplotypePair<H> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.first.label(), self.second.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Genotype {
    pub r38: HaplotypePair<Haplotype38>,
    pub r16: HaplotypePair<Haplotype16>,
}

impl Genotype {
    pub fn new(r38: HaplotypePair<Haplotype38>, r16: HaplotypePair<Haplotype16>) -> Self {
        Self { r38, r16 }
    }
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.r38, self.r16)
    }
}

/// A finite distribution over labels, normalized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDistribution<L> {
    labels: Vec<L>,
    probs: Vec<f64>,
}

impl<L: PartialEq> CategoricalDistribution<L> {
    /// Normalizes non-negative `weights` into a distribution over `labels`.
    pub fn from_weights(labels: Vec<L>, weights: Vec<f64>) -> Result<Self> {
        if labels.len() != weights.len() {
            return Err(Error::InvalidDistribution(format!("{} labels but {} weights", labels.len(), weights.len())));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!("weight {w} is not a finite non-negative number")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { labels, probs })
    }

    pub fn uniform(labels: Vec<L>) -> Self {
        let p = 1.0 / labels.len() as f64;
        let probs = vec![p; labels.len()];
        Self { labels, probs }
    }

    pub fn labels(&self) -> &[L] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&L, f64)> {
        self.labels.iter().zip(self.probs.iter().copied())
    }

    pub fn prob(&self, label: &L) -> f64 {
        self.iter().find(|(l, _)| *l == label).map_or(0.0, |(_, p)| p)
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// All labels attaining the maximum probability (within 1e-12).
    pub fn argmax(&self) -> Vec<&L> {
        let max = self.max_prob();
        self.iter().filter(|(_, p)| max - p <= 1e-12).map(|(l, _)| l).collect()
    }
}

/// The attacker's prior over ethnicities: uniform.
pub fn ethnicity_prior() -> CategoricalDistribution<EthnicityLabel> {
    CategoricalDistribution::uniform(EthnicityLabel::ALL.to_vec())
}

/// Per-ethnicity haplotype frequencies for both genes.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTable {
    // [ethnicity][gene] -> frequencies in Haplotype::ALL order
    raw: [[Vec<f64>; 2]; ETHNICITY_COUNT],
    normalized: [[Vec<f64>; 2]; ETHNICITY_COUNT],
}

impl PopulationTable {
    /// The bundled table.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_POPULATION, "builtin").expect("bundled population table is valid")
    }

    pub fn builtin_source() -> &'static str {
        BUILTIN_POPULATION
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses a population document; `source` names it in error messages.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        parse_population(text)
            .map_err(|issues| Error::InvalidPopulation { path: source.to_string(), reason: issues.join("; ") })
    }

    /// Builds a table from in-memory rows (`[ethnicity] -> (r38 row, r16 row)`),
    /// applying the same validation as [`PopulationTable::parse`].
    pub fn from_rows(rows: [(Vec<f64>, Vec<f64>); ETHNICITY_COUNT]) -> Result<Self> {
        let mut issues = Vec::new();
        let raw = rows.map(|(r38, r16)| [r38, r16]);
        for e in EthnicityLabel::ALL {
            for gene in Gene::ALL {
                check_row(&raw[e.index()][gene.index()], e, gene, &mut issues);
            }
        }
        if !issues.is_empty() {
            return Err(Error::InvalidPopulation { path: "<rows>".into(), reason: issues.join("; ") });
        }
        Ok(Self::from_checked(raw))
    }

    fn from_checked(raw: [[Vec<f64>; 2]; ETHNICITY_COUNT]) -> Self {
        let normalized = raw.clone().map(|genes| {
            genes.map(|row| {
                let total: f64 = row.iter().sum();
                row.into_iter().map(|f| f / total).collect()
            })
        });
        Self { raw, normalized }
    }

    /// Normalized haplotype frequencies of gene `H` for ethnicity `e`.
    pub fn frequencies<H: Haplotype>(&self, e: EthnicityLabel) -> &[f64] {
        &self.normalized[e.index()][H::GENE.index()]
    }

    pub fn frequency<H: Haplotype>(&self, e: EthnicityLabel, h: H) -> f64 {
        self.frequencies::<H>(e)[h.index()]
    }

    /// Frequency as written in the source document, before renormalization.
    pub fn raw_frequency<H: Haplotype>(&self, e: EthnicityLabel, h: H) -> f64 {
        self.raw[e.index()][H::GENE.index()][h.index()]
    }

    pub fn haplotype_distribution<H: Haplotype>(&self, e: EthnicityLabel) -> CategoricalDistribution<H> {
        CategoricalDistribution { labels: H::ALL.to_vec(), probs: self.frequencies::<H>(e).to_vec() }
    }

    /// Distribution of the unordered haplotype pair of gene `H` given `e`,
    /// from two independent draws.
    pub fn pair_distribution<H: Haplotype>(&self, e: EthnicityLabel) -> CategoricalDistribution<HaplotypePair<H>> {
        let freq = self.frequencies::<H>(e);
        let labels = HaplotypePair::<H>::all();
        let probs = labels
            .iter()
            .map(|pair| {
                let p = freq[pair.first.index()] * freq[pair.second.index()];
                if pair.is_homozygous() {
                    p
                } else {
                    2.0 * p
                }
            })
            .collect();
        CategoricalDistribution { labels, probs }
    }

    /// Prior joint p(E = e, pair) for gene `H` under the uniform ethnicity prior.
    pub fn prior_joint_heatmap<H: Haplotype>(&self) -> EthnicityGrid<HaplotypePair<H>> {
        let prior = ethnicity_prior();
        let per_ethnicity: Vec<_> = EthnicityLabel::ALL.iter().map(|&e| self.pair_distribution::<H>(e)).collect();
        EthnicityGrid::from_entries(HaplotypePair::<H>::all().into_iter().enumerate().map(|(i, pair)| {
            let mut mass = [0.0; ETHNICITY_COUNT];
            for (e, dist) in per_ethnicity.iter().enumerate() {
                mass[e] = prior.probs()[e] * dist.probs()[i];
            }
            (pair, mass)
        }))
    }

    /// Serializes the (raw) table in the documented config format.
    pub fn to_toml(&self) -> String {
        let mut out = String::from("[haplotypes]\n");
        for gene in Gene::ALL {
            let labels: Vec<String> = gene.labels().iter().map(|l| format!("{l:?}")).collect();
            out.push_str(&format!("{} = [{}]\n", gene.name(), labels.join(", ")));
        }
        for e in EthnicityLabel::ALL {
            out.push_str(&format!("\n[{}]\n", e.name()));
            for gene in Gene::ALL {
                let row: Vec<String> = self.raw[e.index()][gene.index()].iter().map(|f| format!("{f:?}")).collect();
                out.push_str(&format!("{} = [{}]\n", gene.name(), row.join(", ")));
            }
        }
        out
    }
}

fn check_row(row: &[f64], e: EthnicityLabel, gene: Gene, issues: &mut Vec<String>) {
    let expected = gene.labels().len();
    if row.len() != expected {
        issues.push(format!("{e}.{gene}: expected {expected} entries, found {}", row.len()));
        return;
    }
    for (label, f) in gene.labels().iter().zip(row) {
        if !f.is_finite() || *f < 0.0 {
            issues.push(format!("{e}.{gene}.{label}: negative or non-finite entry {f}"));
        }
    }
    let sum: f64 = row.iter().sum();
    if !sum.is_finite() || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        issues.push(format!("{e}.{gene}: row sum out of tolerance ({sum:.4})"));
    }
}

fn parse_population(text: &str) -> std::result::Result<PopulationTable, Vec<String>> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| vec![e.message().to_string()])?;
    let mut issues = Vec::new();

    // Column order per gene: explicit header or the canonical order.
    let mut orders: [Vec<usize>; 2] = Gene::ALL.map(|g| (0..g.labels().len()).collect());
    if let Some(header) = doc.get("haplotypes") {
        match header.as_table() {
            Some(header) => {
                for key in header.keys() {
                    if !Gene::ALL.iter().any(|g| g.name() == key) {
                        issues.push(format!("haplotypes.{key}: unknown gene"));
                    }
                }
                for gene in Gene::ALL {
                    if let Some(value) = header.get(gene.name()) {
                        match column_order(value, gene) {
                            Ok(order) => orders[gene.index()] = order,
                            Err(msg) => issues.push(format!("haplotypes.{gene}: {msg}")),
                        }
                    }
                }
            }
            None => issues.push("haplotypes: expected a table".into()),
        }
    }

    for key in doc.keys() {
        if key != "haplotypes" && key.parse::<EthnicityLabel>().is_err() {
            issues.push(format!("{key}: unknown ethnicity"));
        }
    }

    let mut raw: [[Vec<f64>; 2]; ETHNICITY_COUNT] = Default::default();
    for e in EthnicityLabel::ALL {
        let Some(entry) = doc.iter().find(|(k, _)| k.parse::<EthnicityLabel>().ok() == Some(e)).map(|(_, v)| v) else {
            issues.push(format!("{e}: missing ethnicity"));
            continue;
        };
        let Some(entry) = entry.as_table() else {
            issues.push(format!("{e}: expected a table"));
            continue;
        };
        for key in entry.keys() {
            if !Gene::ALL.iter().any(|g| g.name() == key) {
                issues.push(format!("{e}.{key}: unknown gene"));
            }
        }
        for gene in Gene::ALL {
            let Some(value) = entry.get(gene.name()) else {
                issues.push(format!("{e}.{gene}: missing frequency vector"));
                continue;
            };
            let values = match number_array(value) {
                Ok(v) => v,
                Err(msg) => {
                    issues.push(format!("{e}.{gene}: {msg}"));
                    continue;
                }
            };
            let order = &orders[gene.index()];
            if values.len() != order.len() {
                issues.push(format!(
                    "{e}.{gene}: expected {} entries (one per haplotype), found {}",
                    order.len(),
                    values.len()
                ));
                continue;
            }
            let mut row = vec![0.0; order.len()];
            for (&slot, v) in order.iter().zip(values) {
                row[slot] = v;
            }
            check_row(&row, e, gene, &mut issues);
            raw[e.index()][gene.index()] = row;
        }
    }

    if issues.is_empty() {
        Ok(PopulationTable::from_checked(raw))
    } else {
        Err(issues)
    }
}

/// Maps header position -> canonical haplotype index.
fn column_order(value: &toml::Value, gene: Gene) -> std::result::Result<Vec<usize>, String> {
    let labels = gene.labels();
    let listed = value.as_array().ok_or("expected an array of haplotype labels")?;
    let mut order = Vec::with_capacity(listed.len());
    for item in listed {
        let name = item.as_str().ok_or("haplotype labels must be strings")?;
        let idx = labels.iter().position(|l| *l == name).ok_or_else(|| format!("unknown haplotype {name:?}"))?;
        if order.contains(&idx) {
            return Err(format!("duplicate haplotype {name:?}"));
        }
        order.push(idx);
    }
    if order.len() != labels.len() {
        let missing: Vec<_> = (0..labels.len()).filter(|i| !order.contains(i)).map(|i| labels[i]).collect();
        return Err(format!("missing haplotype(s) {}", missing.join(", ")));
    }
    Ok(order)
}

fn number_array(value: &toml::Value) -> std::result::Result<Vec<f64>, String> {
    let arr = value.as_array().ok_or("expected an array of numbers")?;
    arr.iter()
        .map(|v| match v {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as f64),
            other => Err(format!("expected a number, found {other}")),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn builtin_reproduces_published_frequencies() {
        let t = PopulationTable::builtin();
        assert_eq!(t.raw_frequency(EthnicityLabel::African, Haplotype38::Pav), 0.5076);
        assert_eq!(t.raw_frequency(EthnicityLabel::European, Haplotype38::Aav), 0.0);
        assert_eq!(t.raw_frequency(EthnicityLabel::Asian, Haplotype16::HapB), 0.3679);
        for e in EthnicityLabel::ALL {
            assert!(close(t.frequencies::<Haplotype38>(e).iter().sum(), 1.0, 1e-12));
            assert!(close(t.frequencies::<Haplotype16>(e).iter().sum(), 1.0, 1e-12));
        }
    }

    #[test]
    fn uniform_row_loads_unchanged() {
        let mut rows = builtin_rows();
        rows[0].0 = vec![0.125; 8];
        let t = PopulationTable::from_rows(rows).unwrap();
        for &h in Haplotype38::ALL {
            assert_eq!(t.frequency(EthnicityLabel::African, h), 0.125);
        }
    }

    fn builtin_rows() -> [(Vec<f64>, Vec<f64>); ETHNICITY_COUNT] {
        let t = PopulationTable::builtin();
        EthnicityLabel::ALL.map(|e| {
            (
                Haplotype38::ALL.iter().map(|&h| t.raw_frequency(e, h)).collect(),
                Haplotype16::ALL.iter().map(|&h| t.raw_frequency(e, h)).collect(),
            )
        })
    }

    #[test]
    fn rejects_bad_rows() {
        let mut rows = builtin_rows();
        rows[1].1 = vec![0.5, 0.3, 0.1];
        let err = PopulationTable::from_rows(rows).unwrap_err().to_string();
        assert!(err.contains("row sum out of tolerance"), "{err}");

        let mut rows = builtin_rows();
        rows[2].1 = vec![-0.1, 0.6, 0.5];
        let err = PopulationTable::from_rows(rows).unwrap_err().to_string();
        assert!(err.contains("negative"), "{err}");
    }

    #[test]
    fn parse_reports_missing_entries() {
        let text = PopulationTable::builtin_source().replace(
            "[American]\nTAS2R38 = [0.4566, 0.4922, 0.0356, 0.0049, 0.0032, 0.0003, 0.0055, 0.0017]\n",
            "[American]\n",
        );
        let err = PopulationTable::parse(&text, "t").unwrap_err().to_string();
        assert!(err.contains("American.TAS2R38: missing"), "{err}");

        let text = PopulationTable::builtin_source().replace("[Asian]", "[Martian]");
        let err = PopulationTable::parse(&text, "t").unwrap_err().to_string();
        assert!(err.contains("Martian: unknown ethnicity"), "{err}");
        assert!(err.contains("Asian: missing ethnicity"), "{err}");

        let text = PopulationTable::builtin_source().replace("\"HAP-B\"]", "\"HAP-X\"]");
        let err = PopulationTable::parse(&text, "t").unwrap_err().to_string();
        assert!(err.contains("unknown haplotype \"HAP-X\""), "{err}");
    }

    #[test]
    fn header_permutes_columns() {
        let text = "[haplotypes]\nTAS2R16 = [\"HAP-B\", \"HAP-A\", \"HAP-CD\"]\n".to_string()
            + &PopulationTable::builtin_source()
                .lines()
                .skip_while(|l| !l.starts_with("[African]"))
                .collect::<Vec<_>>()
                .join("\n");
        let t = PopulationTable::parse(&text, "t").unwrap();
        // First listed column (0.1511 for Africans) now means HAP-B.
        assert_eq!(t.raw_frequency(EthnicityLabel::African, Haplotype16::HapB), 0.1511);
        assert_eq!(t.raw_frequency(EthnicityLabel::African, Haplotype16::HapCd), 0.0133);
    }

    #[test]
    fn toml_round_trip() {
        let t = PopulationTable::builtin();
        assert_eq!(PopulationTable::parse(&t.to_toml(), "rt").unwrap(), t);
    }

    #[test]
    fn prior_is_uniform() {
        let prior = ethnicity_prior();
        assert_eq!(prior.prob(&EthnicityLabel::African), 0.25);
        assert!(close(prior.sum(), 1.0, 1e-15));
        assert_eq!(prior.argmax().len(), 4);
    }

    #[test]
    fn categorical_rejects_invalid_weights() {
        assert!(CategoricalDistribution::from_weights(vec![1, 2], vec![0.5, -0.1]).is_err());
        assert!(CategoricalDistribution::from_weights(vec![1, 2], vec![0.0, 0.0]).is_err());
        assert!(CategoricalDistribution::from_weights(vec![1, 2], vec![1.0]).is_err());
        let d = CategoricalDistribution::from_weights(vec!['a', 'b'], vec![1.0, 3.0]).unwrap();
        assert_eq!(d.prob(&'b'), 0.75);
        assert_eq!(d.argmax(), vec![&'b']);
    }

    #[test]
    fn pair_distribution_values() {
        let t = PopulationTable::builtin();
        let d = t.pair_distribution::<Haplotype38>(EthnicityLabel::African);
        let pav = HaplotypePair::new(Haplotype38::Pav, Haplotype38::Pav);
        assert!(close(d.prob(&pav), 0.25766, 1e-4));
        assert_eq!(d.len(), 36);
        let d16 = t.pair_distribution::<Haplotype16>(EthnicityLabel::European);
        assert_eq!(d16.prob(&HaplotypePair::new(Haplotype16::HapCd, Haplotype16::HapCd)), 0.0);
        assert_eq!(d16.len(), 6);
    }

    #[test]
    fn pair_distribution_matches_sampling() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        // Brute-force: draw two haplotypes by inverse CDF and count pairs.
        let t = PopulationTable::builtin();
        let e = EthnicityLabel::African;
        let freq = t.frequencies::<Haplotype38>(e).to_vec();
        let draw = |rng: &mut ChaCha8Rng| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, f) in freq.iter().enumerate() {
                acc += f;
                if u < acc {
                    return i;
                }
            }
            freq.len() - 1
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let hits = (0..n).filter(|_| draw(&mut rng) == 0 && draw(&mut rng) == 0).count();
        let p_hat = hits as f64 / n as f64;
        let se = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
        let exact = t.pair_distribution::<Haplotype38>(e).prob(&HaplotypePair::new(Haplotype38::Pav, Haplotype38::Pav));
        assert!((p_hat - exact).abs() < 4.0 * se, "{p_hat} vs {exact}");
    }

    #[test]
    fn prior_heatmap_values() {
        let t = PopulationTable::builtin();
        let h38 = t.prior_joint_heatmap::<Haplotype38>();
        let pav = HaplotypePair::new(Haplotype38::Pav, Haplotype38::Pav);
        assert!(close(h38.get(EthnicityLabel::African, &pav), 0.0644, 0.002));
        assert!(close(h38.total(), 1.0, 1e-9));
        for s in h38.row_sums() {
            assert!(close(s, 0.25, 1e-9));
        }
        let h16 = t.prior_joint_heatmap::<Haplotype16>();
        let cd = HaplotypePair::new(Haplotype16::HapCd, Haplotype16::HapCd);
        assert_eq!(h16.get(EthnicityLabel::European, &cd), 0.0);
        assert!(close(h16.total(), 1.0, 1e-9));
    }

    fn marginal_check<H: Haplotype>(t: &PopulationTable) {
        for e in EthnicityLabel::ALL {
            let d = t.pair_distribution::<H>(e);
            assert!(close(d.sum(), 1.0, NORMALIZATION_TOLERANCE));
            for &h in H::ALL {
                let m: f64 = d
                    .iter()
                    .map(|(pair, p)| {
                        let count = (pair.first() == h) as u32 + (pair.second() == h) as u32;
                        p * count as f64 / 2.0
                    })
                    .sum();
                assert!(close(m, t.frequency(e, h), 1e-9));
            }
        }
    }

    #[test]
    fn pairs_marginalize_to_frequencies() {
        let t = PopulationTable::builtin();
        marginal_check::<Haplotype38>(&t);
        marginal_check::<Haplotype16>(&t);
    }

    proptest! {
        #[test]
        fn canonical_pairs_are_order_free(a in 0usize..8, b in 0usize..8) {
            let (x, y) = (Haplotype38::ALL[a], Haplotype38::ALL[b]);
            let p = HaplotypePair::new(x, y);
            prop_assert_eq!(p, HaplotypePair::new(y, x));
            prop_assert_eq!(HaplotypePair::new(p.first(), p.second()), p);
        }

        #[test]
        fn random_tables_stay_normalized(
            r38 in proptest::collection::vec(0.0f64..1.0, 8),
            r16 in proptest::collection::vec(0.0f64..1.0, 3),
        ) {
            let s38: f64 = r38.iter().sum();
            let s16: f64 = r16.iter().sum();
            prop_assume!(s38 > 1e-3 && s16 > 1e-3);
            let r38: Vec<f64> = r38.iter().map(|x| x / s38).collect();
            let r16: Vec<f64> = r16.iter().map(|x| x / s16).collect();
            let rows = EthnicityLabel::ALL.map(|_| (r38.clone(), r16.clone()));
            let t = PopulationTable::from_rows(rows).unwrap();
            marginal_check::<Haplotype38>(&t);
            marginal_check::<Haplotype16>(&t);
        }
    }
}
