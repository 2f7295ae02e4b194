//! Independent reference computations for integration tests.
//!
//! The joint is built by looping over ordered haplotype draws (8 x 8 for
//! TAS2R38, 3 x 3 for TAS2R16) instead of canonical unordered pairs, scores
//! are computed in floating point from the raw weights, and Gaussian bin
//! masses come from Simpson quadrature of the density rather than erfc.

#![allow(dead_code)]

use std::collections::BTreeMap;

use tasteleak::population::Haplotype;
use tasteleak::{EthnicityLabel, Haplotype16, Haplotype38, JointDistribution, PopulationTable, WeightConfig};

/// Output key: a phenotype label or a score in centi-units.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum OracleOutput {
    Phenotype(&'static str),
    Centi(i64),
}

impl OracleOutput {
    pub fn text(&self) -> String {
        match self {
            OracleOutput::Phenotype(p) => p.to_string(),
            OracleOutput::Centi(c) => centi_text(*c),
        }
    }
}

pub type OracleJoint = BTreeMap<OracleOutput, [f64; 4]>;

#[derive(Debug, Clone, Copy)]
pub enum OracleProgram {
    PhenotypeR38,
    PhenotypeR16,
    Score,
    NoisyScore(f64),
}

fn centi_text(c: i64) -> String {
    let sign = if c < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", c.abs() / 100, c.abs() % 100)
}

fn score_centi(w: &WeightConfig, r38: (usize, usize), r16: (usize, usize)) -> i64 {
    let a38 = w.r38.alpha.num() as f64 / w.r38.alpha.den() as f64;
    let a16 = w.r16.alpha.num() as f64 / w.r16.alpha.den() as f64;
    let milli =
        a38 * (w.r38.milli[r38.0] + w.r38.milli[r38.1]) as f64 + a16 * (w.r16.milli[r16.0] + w.r16.milli[r16.1]) as f64;
    (milli / 10.0).round() as i64
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Φ(x) by quadrature of the density from 0.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 + simpson(std_normal_pdf, 0.0, x, 2000)
}

/// Centi-bin masses of N(0, σ²), truncated at ±⌈600σ⌉ bins and renormalized.
pub fn noise_bins(sigma: f64) -> Vec<(i64, f64)> {
    let sc = 100.0 * sigma;
    let k = (600.0 * sigma).ceil() as i64;
    let mut bins: Vec<(i64, f64)> = (-k..=k)
        .map(|i| {
            let a = (i as f64 - 0.5) / sc;
            let b = (i as f64 + 0.5) / sc;
            (i, simpson(std_normal_pdf, a, b, 32))
        })
        .collect();
    let total: f64 = bins.iter().map(|b| b.1).sum();
    for b in &mut bins {
        b.1 /= total;
    }
    bins
}

/// Brute-force joint p(E, O). The noisy score spreads each atom over the
/// noise bins.
pub fn oracle_joint(table: &PopulationTable, w: &WeightConfig, program: OracleProgram) -> OracleJoint {
    let avi = |i: usize| Haplotype38::ALL[i] == Haplotype38::Avi;
    let cd = |i: usize| Haplotype16::ALL[i] == Haplotype16::HapCd;
    let bins = match program {
        OracleProgram::NoisyScore(sigma) => noise_bins(sigma),
        _ => vec![(0, 1.0)],
    };
    let mut joint = OracleJoint::new();
    // score atoms: centi value -> mass per ethnicity
    let mut atoms: BTreeMap<i64, [f64; 4]> = BTreeMap::new();
    for e in EthnicityLabel::ALL {
        let f38: Vec<f64> = Haplotype38::ALL.iter().map(|&h| table.frequency(e, h)).collect();
        let f16: Vec<f64> = Haplotype16::ALL.iter().map(|&h| table.frequency(e, h)).collect();
        for a in 0..f38.len() {
            for b in 0..f38.len() {
                for c in 0..f16.len() {
                    for d in 0..f16.len() {
                        let p = 0.25 * f38[a] * f38[b] * f16[c] * f16[d];
                        let label = |nt: bool| OracleOutput::Phenotype(if nt { "non-taster" } else { "taster" });
                        match program {
                            OracleProgram::PhenotypeR38 => {
                                joint.entry(label(avi(a) && avi(b))).or_insert([0.0; 4])[e.index()] += p;
                            }
                            OracleProgram::PhenotypeR16 => {
                                joint.entry(label(cd(c) && cd(d))).or_insert([0.0; 4])[e.index()] += p;
                            }
                            OracleProgram::Score | OracleProgram::NoisyScore(_) => {
                                let s = score_centi(w, (a, b), (c, d));
                                atoms.entry(s).or_insert([0.0; 4])[e.index()] += p;
                            }
                        }
                    }
                }
            }
        }
    }
    if atoms.is_empty() {
        return joint;
    }
    let k = bins.last().map_or(0, |b| b.0);
    let lo = atoms.keys().next().unwrap() - k;
    let hi = atoms.keys().next_back().unwrap() + k;
    let mut dense = vec![[0.0; 4]; (hi - lo + 1) as usize];
    for (s, mass) in &atoms {
        for &(off, m) in &bins {
            let slot = &mut dense[(s + off - lo) as usize];
            for e in 0..4 {
                slot[e] += mass[e] * m;
            }
        }
    }
    for (i, cell) in dense.into_iter().enumerate() {
        if cell.iter().any(|&m| m > 0.0) {
            joint.insert(OracleOutput::Centi(lo + i as i64), cell);
        }
    }
    joint
}

pub fn oracle_vulnerability(joint: &OracleJoint) -> f64 {
    joint.values().map(|c| c.iter().copied().fold(0.0, f64::max)).sum()
}

/// Largest absolute cell difference between a library joint and an oracle.
pub fn max_cell_diff(lib: &JointDistribution, oracle: &OracleJoint) -> f64 {
    let oracle: BTreeMap<String, [f64; 4]> = oracle.iter().map(|(o, c)| (o.text(), *c)).collect();
    let mut worst: f64 = 0.0;
    for (o, cell) in lib.grid().iter() {
        let other = oracle.get(&o.to_string()).copied().unwrap_or([0.0; 4]);
        for (x, y) in cell.iter().zip(other) {
            worst = worst.max((x - y).abs());
        }
    }
    let seen: std::collections::BTreeSet<String> = lib.outputs().iter().map(|o| o.to_string()).collect();
    for (o, cell) in &oracle {
        if !seen.contains(o) {
            worst = worst.max(cell.iter().copied().fold(0.0, f64::max));
        }
    }
    worst
}
