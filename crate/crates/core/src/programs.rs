//! The disclosure programs: binary taster phenotypes, the linear polygenic
//! score and its noise-perturbed variant.
//!
//! Scores are integer centi-units end to end. Haplotype weights are integer
//! milli-units and gene coefficients are exact rationals, so the linear
//! score is computed without floating point and rounded half away from zero.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gaussian::{BinnedGaussian, NoiseSpec};
use crate::population::{CategoricalDistribution, Gene, Genotype, Haplotype, Haplotype16, Haplotype38, HaplotypePair};

const BUILTIN_WEIGHTS: &str = include_str!("../data/weights.toml");

/// Bound on |weight| (milli-units) and on rational components; keeps all
/// intermediate products inside i128.
const MAX_MAGNITUDE: i64 = 1_000_000_000_000;

/// A score in centi-units: `ScoreValue(931)` is 9.31.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScoreValue(pub i64);

impl ScoreValue {
    pub fn centi(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for ScoreValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for ScoreValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("not a 2-decimal score: {s:?}"));
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() || frac.len() > 2 || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let int: i64 = int.parse().map_err(|_| bad())?;
        let frac: i64 = if frac.is_empty() { 0 } else { format!("{frac:0<2}").parse().map_err(|_| bad())? };
        let v = int.checked_mul(100).and_then(|v| v.checked_add(frac)).ok_or_else(bad)?;
        Ok(ScoreValue(if neg { -v } else { v }))
    }
}

impl Serialize for ScoreValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhenotypeLabel {
    Taster,
    NonTaster,
}

impl fmt::Display for PhenotypeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhenotypeLabel::Taster => "taster",
            PhenotypeLabel::NonTaster => "non-taster",
        })
    }
}

/// TAS2R38: AVI/AVI is the only non-taster pair.
pub fn taster_phenotype_r38(pair: HaplotypePair<Haplotype38>) -> PhenotypeLabel {
    if pair.both(Haplotype38::Avi) {
        PhenotypeLabel::NonTaster
    } else {
        PhenotypeLabel::Taster
    }
}

/// TAS2R16: HAP-CD/HAP-CD is the only non-taster pair.
pub fn taster_phenotype_r16(pair: HaplotypePair<Haplotype16>) -> PhenotypeLabel {
    if pair.both(Haplotype16::HapCd) {
        PhenotypeLabel::NonTaster
    } else {
        PhenotypeLabel::Taster
    }
}

/// Exact rational with positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    num: i64,
    den: i64,
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidParameter("zero denominator".into()));
        }
        if num.abs() > MAX_MAGNITUDE || den.abs() > MAX_MAGNITUDE {
            return Err(Error::InvalidParameter(format!("rational {num}/{den} out of range")));
        }
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i64;
        let sign = den.signum();
        Ok(Self { num: sign * num / g, den: sign * den / g })
    }

    pub fn integer(n: i64) -> Self {
        Self { num: n, den: 1 }
    }

    pub fn num(self) -> i64 {
        self.num
    }

    pub fn den(self) -> i64 {
        self.den
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Rational {
    type Err = Error;

    /// Accepts `"3"`, `"-3/2"` and `"1.25"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter(format!("not a rational number: {s:?}"));
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            return Rational::new(n, d);
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let den = 10i64.pow(frac.len() as u32);
            let neg = int.starts_with('-');
            let int: i64 = if int.is_empty() || int == "-" { 0 } else { int.parse().map_err(|_| bad())? };
            let frac: i64 = frac.parse().map_err(|_| bad())?;
            let mag = int.abs().checked_mul(den).and_then(|v| v.checked_add(frac)).ok_or_else(bad)?;
            return Rational::new(if neg { -mag } else { mag }, den);
        }
        s.parse::<i64>().map_err(|_| bad()).and_then(|n| Rational::new(n, 1))
    }
}

/// Weights of one gene: coefficient and per-haplotype milli-weights in
/// `Haplotype::ALL` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneWeights {
    pub alpha: Rational,
    pub milli: Vec<i64>,
}

impl GeneWeights {
    /// Genotype weight `w(h0) + w(h1)` in milli-units, before `alpha`.
    pub fn genotype_weight<H: Haplotype>(&self, pair: HaplotypePair<H>) -> i64 {
        self.milli[pair.first().index()] + self.milli[pair.second().index()]
    }
}

/// Polygenic score configuration for both genes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightConfig {
    pub r38: GeneWeights,
    pub r16: GeneWeights,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneDoc {
    alpha: Option<toml::Value>,
    weights: BTreeMap<String, i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsDoc {
    #[serde(rename = "TAS2R38")]
    r38: GeneDoc,
    #[serde(rename = "TAS2R16")]
    r16: GeneDoc,
}

impl WeightConfig {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_WEIGHTS, "builtin").expect("bundled weight config is valid")
    }

    pub fn builtin_source() -> &'static str {
        BUILTIN_WEIGHTS
    }

    /// Every weight zero, both coefficients one.
    pub fn zero() -> Self {
        Self {
            r38: GeneWeights { alpha: Rational::integer(1), milli: vec![0; Haplotype38::ALL.len()] },
            r16: GeneWeights { alpha: Rational::integer(1), milli: vec![0; Haplotype16::ALL.len()] },
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidWeights { path: source.to_string(), reason };
        let doc: WeightsDoc = toml::from_str(text).map_err(|e| invalid(e.message().to_string()))?;
        let mut issues = Vec::new();
        let r38 = gene_weights::<Haplotype38>(doc.r38, &mut issues);
        let r16 = gene_weights::<Haplotype16>(doc.r16, &mut issues);
        match (r38, r16) {
            (Some(r38), Some(r16)) if issues.is_empty() => Ok(Self { r38, r16 }),
            _ => Err(invalid(issues.join("; "))),
        }
    }

    pub fn gene(&self, gene: Gene) -> &GeneWeights {
        match gene {
            Gene::Tas2r38 => &self.r38,
            Gene::Tas2r16 => &self.r16,
        }
    }

    /// Short stable digest of the configuration, used for provenance.
    pub fn digest(&self) -> String {
        let mut canonical = String::new();
        for gene in Gene::ALL {
            let w = self.gene(gene);
            canonical.push_str(&format!("{}:{}:{:?};", gene.name(), w.alpha, w.milli));
        }
        let hash = Sha256::digest(canonical.as_bytes());
        hex::encode(&hash[..8])
    }

    /// The weighted sum in milli-units, as an exact fraction `(num, den)`.
    fn exact_milli(&self, g: &Genotype) -> (i128, i128) {
        let gt38 = self.r38.genotype_weight(g.r38) as i128;
        let gt16 = self.r16.genotype_weight(g.r16) as i128;
        let (a, b) = (self.r38.alpha, self.r16.alpha);
        let num = a.num as i128 * gt38 * b.den as i128 + b.num as i128 * gt16 * a.den as i128;
        (num, a.den as i128 * b.den as i128)
    }
}

fn gene_weights<H: Haplotype>(doc: GeneDoc, issues: &mut Vec<String>) -> Option<GeneWeights> {
    let gene = H::GENE;
    let alpha = match doc.alpha {
        None => Rational::integer(1),
        Some(v) => {
            let parsed = match &v {
                toml::Value::Integer(i) => Rational::new(*i, 1),
                toml::Value::String(s) => s.parse(),
                toml::Value::Float(f) => f.to_string().parse(),
                other => Err(Error::InvalidParameter(format!("unsupported alpha {other}"))),
            };
            match parsed {
                Ok(r) => r,
                Err(e) => {
                    issues.push(format!("{gene}.alpha: {e}"));
                    return None;
                }
            }
        }
    };
    for key in doc.weights.keys() {
        if H::from_label(key).is_none() {
            issues.push(format!("{gene}.weights.{key}: unknown haplotype"));
        }
    }
    let mut milli = Vec::with_capacity(H::ALL.len());
    for &h in H::ALL {
        match doc.weights.get(h.label()) {
            Some(&w) if w.abs() <= MAX_MAGNITUDE => milli.push(w),
            Some(&w) => issues.push(format!("{gene}.weights.{}: weight {w} out of range", h.label())),
            None => issues.push(format!("{gene}.weights.{}: missing weight", h.label())),
        }
    }
    (milli.len() == H::ALL.len()).then_some(GeneWeights { alpha, milli })
}

/// Rounds `num / den` half away from zero.
fn round_half_away(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let q = (2 * num.abs() + den) / (2 * den);
    if num < 0 {
        -q
    } else {
        q
    }
}

/// The polygenic score, rounded to 2 decimals.
pub fn linear_score(g: &Genotype, w: &WeightConfig) -> ScoreValue {
    let (num, den) = w.exact_milli(g);
    // milli -> centi
    ScoreValue(round_half_away(num, den * 10) as i64)
}

/// Exact output distribution of the noisy score for one genotype: the
/// rounded score plus centi-binned Gaussian noise.
pub fn noisy_score_density(g: &Genotype, w: &WeightConfig, noise: NoiseSpec) -> CategoricalDistribution<ScoreValue> {
    let center = linear_score(g, w);
    let binned = BinnedGaussian::new(noise);
    let (labels, weights) = binned.iter().map(|(k, m)| (ScoreValue(center.0 + k), m)).unzip();
    CategoricalDistribution::from_weights(labels, weights).expect("binned gaussian is a valid distribution")
}

/// One draw of the noisy score.
pub fn sample_noisy_score<R: Rng + ?Sized>(
    g: &Genotype,
    w: &WeightConfig,
    noise: NoiseSpec,
    rng: &mut R,
) -> ScoreValue {
    let center = linear_score(g, w);
    let normal = Normal::new(0.0, noise.sigma()).expect("sigma validated by NoiseSpec");
    let noisy_centi = center.0 as f64 + normal.sample(rng) * 100.0;
    // f64::round is half away from zero
    ScoreValue(noisy_centi.round() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::Haplotype16::*;
    use crate::population::Haplotype38::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn genotype(a: Haplotype38, b: Haplotype38, c: Haplotype16, d: Haplotype16) -> Genotype {
        Genotype::new(HaplotypePair::new(a, b), HaplotypePair::new(c, d))
    }

    #[test]
    fn phenotype_rules() {
        assert_eq!(taster_phenotype_r38(HaplotypePair::new(Avi, Avi)), PhenotypeLabel::NonTaster);
        assert_eq!(taster_phenotype_r38(HaplotypePair::new(Pav, Avi)), PhenotypeLabel::Taster);
        assert_eq!(taster_phenotype_r38(HaplotypePair::new(Pvv, Pvv)), PhenotypeLabel::Taster);
        assert_eq!(taster_phenotype_r16(HaplotypePair::new(HapCd, HapCd)), PhenotypeLabel::NonTaster);
        assert_eq!(taster_phenotype_r16(HaplotypePair::new(HapA, HapCd)), PhenotypeLabel::Taster);
        assert_eq!(taster_phenotype_r16(HaplotypePair::new(HapB, HapB)), PhenotypeLabel::Taster);
    }

    #[test]
    fn default_weights_hit_anchor_scores() {
        let w = WeightConfig::builtin();
        assert_eq!(linear_score(&genotype(Pav, Avi, HapA, HapA), &w).to_string(), "9.31");
        assert_eq!(linear_score(&genotype(Avi, Avi, HapA, HapA), &w).to_string(), "1.24");
        assert_eq!(linear_score(&genotype(Pav, Pav, HapA, HapA), &w).to_string(), "17.37");
        assert_eq!(linear_score(&genotype(Pav, Avi, HapA, HapA), &WeightConfig::zero()), ScoreValue(0));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round_half_away(9305, 10), 931);
        assert_eq!(round_half_away(9304, 10), 930);
        assert_eq!(round_half_away(-9305, 10), -931);
        assert_eq!(round_half_away(-9304, 10), -930);
        assert_eq!(round_half_away(1, 3), 0);
        assert_eq!(round_half_away(1, 2), 1);
    }

    #[test]
    fn rational_alpha_is_exact() {
        let mut w = WeightConfig::builtin();
        w.r38.alpha = "3/2".parse().unwrap();
        w.r16.alpha = "0.5".parse().unwrap();
        // 1.5 * 8065 + 0.5 * 1240 = 12717.5 milli -> 12.7175 -> 12.72
        assert_eq!(linear_score(&genotype(Pav, Avi, HapA, HapA), &w), ScoreValue(1272));
        w.r38.alpha = "-1".parse().unwrap();
        // -8065 + 620 = -7445 milli -> -7.445 -> -7.45
        assert_eq!(linear_score(&genotype(Pav, Avi, HapA, HapA), &w), ScoreValue(-745));
    }

    #[test]
    fn rational_parsing() {
        assert_eq!("6/4".parse::<Rational>().unwrap(), Rational::new(3, 2).unwrap());
        assert_eq!("-1.25".parse::<Rational>().unwrap(), Rational::new(-5, 4).unwrap());
        assert_eq!("2".parse::<Rational>().unwrap(), Rational::integer(2));
        assert_eq!("1/-2".parse::<Rational>().unwrap().to_string(), "-1/2");
        assert!("1/0".parse::<Rational>().is_err());
        assert!("abc".parse::<Rational>().is_err());
        assert!("1.".parse::<Rational>().is_err());
    }

    #[test]
    fn score_value_text() {
        assert_eq!(ScoreValue(-5).to_string(), "-0.05");
        assert_eq!(ScoreValue(1737).to_string(), "17.37");
        assert_eq!(ScoreValue(0).to_string(), "0.00");
        assert_eq!("17.37".parse::<ScoreValue>().unwrap(), ScoreValue(1737));
        assert_eq!("-0.5".parse::<ScoreValue>().unwrap(), ScoreValue(-50));
        assert_eq!("3".parse::<ScoreValue>().unwrap(), ScoreValue(300));
        assert!("1.234".parse::<ScoreValue>().is_err());
        assert!("".parse::<ScoreValue>().is_err());
    }

    #[test]
    fn weight_config_errors() {
        let missing = WeightConfig::builtin_source().replace("PVV = 0\n", "");
        let err = WeightConfig::parse(&missing, "w").unwrap_err().to_string();
        assert!(err.contains("TAS2R38.weights.PVV: missing weight"), "{err}");

        let unknown = WeightConfig::builtin_source().replace("HAP-B = 620", "HAP-B = 620\nHAP-Z = 1");
        let err = WeightConfig::parse(&unknown, "w").unwrap_err().to_string();
        assert!(err.contains("HAP-Z: unknown haplotype"), "{err}");

        let bad_alpha = WeightConfig::builtin_source().replacen("alpha = \"1\"", "alpha = \"x\"", 1);
        assert!(WeightConfig::parse(&bad_alpha, "w").is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = WeightConfig::builtin();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.r16.milli[2] = 621;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn noisy_density_center_bin() {
        let g = genotype(Pav, Avi, HapA, HapA);
        let d = noisy_score_density(&g, &WeightConfig::builtin(), NoiseSpec::new(0.5).unwrap());
        // Φ(0.01) − Φ(−0.01)
        assert!((d.prob(&ScoreValue(931)) - 0.007_978_712_629_263_2).abs() < 1e-9);
        assert!((d.sum() - 1.0).abs() < 1e-9);
        for k in 1..300 {
            assert!((d.prob(&ScoreValue(931 + k)) - d.prob(&ScoreValue(931 - k))).abs() < 1e-15);
        }
    }

    /// Simpson's rule on the normal density: independent of erfc.
    fn simpson_mass(a: f64, b: f64) -> f64 {
        let n = 2000;
        let h = (b - a) / n as f64;
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(a) + pdf(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(x);
        }
        s * h / 3.0
    }

    #[test]
    fn noisy_density_interval_mass_matches_quadrature() {
        let w = WeightConfig::builtin();
        let g = genotype(Pav, Pav, HapA, HapB);
        for sigma in [0.1, 0.5, 2.0] {
            let noise = NoiseSpec::new(sigma).unwrap();
            let d = noisy_score_density(&g, &w, noise);
            let s = linear_score(&g, &w).0;
            for (lo, hi) in [(-5i64, 5i64), (-40, 3), (10, 90), (-1, -1)] {
                let mass: f64 = (lo..=hi).map(|k| d.prob(&ScoreValue(s + k))).sum();
                let sc = sigma * 100.0;
                let oracle = simpson_mass((lo as f64 - 0.5) / sc, (hi as f64 + 0.5) / sc);
                assert!((mass - oracle).abs() < 1e-9, "sigma {sigma} [{lo},{hi}]: {mass} vs {oracle}");
            }
        }
    }

    #[test]
    fn noisy_variance_grows_with_sigma() {
        let w = WeightConfig::builtin();
        let g = genotype(Pav, Avi, HapCd, HapA);
        let mut last = -1.0;
        for sigma in [1e-6, 0.1, 0.5, 1.0, 2.0, 5.0] {
            let d = noisy_score_density(&g, &w, NoiseSpec::new(sigma).unwrap());
            let mean: f64 = d.iter().map(|(v, p)| v.as_f64() * p).sum();
            let var: f64 = d.iter().map(|(v, p)| (v.as_f64() - mean).powi(2) * p).sum();
            assert!(var >= last, "variance dropped at sigma {sigma}");
            last = var;
        }
    }

    #[test]
    fn sampler_is_deterministic_and_degenerates() {
        let w = WeightConfig::builtin();
        let g = genotype(Pav, Avi, HapA, HapA);
        let noise = NoiseSpec::new(0.5).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..32).map(|_| sample_noisy_score(&g, &w, noise, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
        let tiny = NoiseSpec::new(1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(sample_noisy_score(&g, &w, tiny, &mut rng), ScoreValue(931));
        }
    }

    #[test]
    fn sampler_matches_density() {
        let w = WeightConfig::builtin();
        let g = genotype(Pav, Avi, HapA, HapA);
        let noise = NoiseSpec::new(0.5).unwrap();
        let n = 1_000_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = BTreeMap::<ScoreValue, usize>::new();
        for _ in 0..n {
            *counts.entry(sample_noisy_score(&g, &w, noise, &mut rng)).or_default() += 1;
        }
        let d = noisy_score_density(&g, &w, noise);
        for (v, p) in d.iter() {
            let p_hat = counts.get(v).copied().unwrap_or(0) as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt().max(1.0 / n as f64);
            assert!((p_hat - p).abs() <= 4.0 * se, "bin {v}: {p_hat} vs {p}");
        }
        // No draws outside the truncated support.
        assert!(counts.keys().all(|v| d.prob(v) > 0.0));
    }

    proptest! {
        #[test]
        fn programs_ignore_haplotype_order(a in 0usize..8, b in 0usize..8, c in 0usize..3, d in 0usize..3) {
            let (a, b) = (Haplotype38::ALL[a], Haplotype38::ALL[b]);
            let (c, d) = (Haplotype16::ALL[c], Haplotype16::ALL[d]);
            let w = WeightConfig::builtin();
            let g1 = genotype(a, b, c, d);
            let g2 = genotype(b, a, d, c);
            prop_assert_eq!(linear_score(&g1, &w), linear_score(&g2, &w));
            prop_assert_eq!(taster_phenotype_r38(g1.r38), taster_phenotype_r38(g2.r38));
            prop_assert_eq!(taster_phenotype_r16(g1.r16), taster_phenotype_r16(g2.r16));
        }

        #[test]
        fn score_text_round_trips(v in -10_000_000i64..10_000_000) {
            let s = ScoreValue(v);
            prop_assert_eq!(s.to_string().parse::<ScoreValue>().unwrap(), s);
        }
    }
}
