use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use tasteleak::report::{crosscheck, run_full_analysis, validate_config, AnalysisConfig, ArtifactWriter};
use tasteleak::{Error, Result};

/// Exact privacy-risk and utility analysis of taste-receptor genetic
/// disclosure programs.
#[derive(Debug, Parser)]
#[command(name = "tasteleak", version)]
struct Cli {
    /// TOML analysis config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Directory for reports.
    #[arg(long)]
    output_dir: Option<PathBuf>,

    /// Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Monte Carlo sample count.
    #[arg(long)]
    samples: Option<u64>,

    /// Compare Monte Carlo joints against the exact ones instead of
    /// writing the full report.
    #[arg(long)]
    crosscheck: bool,

    /// Comma-separated program kinds: ph_r38, ph_r16, l_gs, nl_gs.
    #[arg(long)]
    programs: Option<String>,

    /// Comma-separated noise levels; an empty string disables the noisy score.
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<String>,

    /// Comma-separated error tolerances; an empty string disables utility.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,

    /// Population table path.
    #[arg(long)]
    population: Option<PathBuf>,

    /// Weight config path.
    #[arg(long)]
    weights: Option<PathBuf>,
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

fn number_list(flag: &str, s: &str, issues: &mut Vec<String>) -> Vec<f64> {
    split_list(s)
        .filter_map(|x| x.parse::<f64>().map_err(|_| issues.push(format!("--{flag}: not a number: {x:?}"))).ok())
        .collect()
}

/// Applies command-line overrides. List parsing problems are returned
/// alongside the config so they can be reported with validation errors.
fn build_config(cli: &Cli) -> Result<(AnalysisConfig, Vec<String>)> {
    let mut cfg = match &cli.config {
        Some(path) => AnalysisConfig::load(path)?,
        None => AnalysisConfig::default(),
    };
    let mut issues = Vec::new();
    if let Some(s) = &cli.sigma {
        cfg.sigmas = number_list("sigma", s, &mut issues);
        cfg.utility_sigmas.clear();
    }
    if let Some(s) = &cli.delta {
        cfg.deltas = number_list("delta", s, &mut issues);
    }
    if let Some(s) = &cli.programs {
        cfg.programs = split_list(s).map(String::from).collect();
    }
    let cwd = std::env::current_dir().unwrap_or_default();
    if let Some(p) = &cli.population {
        cfg.population = cwd.join(p).display().to_string();
    }
    if let Some(p) = &cli.weights {
        cfg.weights = cwd.join(p).display().to_string();
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    } else if cfg.output_dir.is_relative() {
        cfg.output_dir = cfg.base_dir.join(&cfg.output_dir);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.samples {
        cfg.mc_samples = n;
    }
    Ok((cfg, issues))
}

fn run(cli: &Cli) -> Result<()> {
    let (cfg, mut issues) = build_config(cli)?;
    let cfg = match validate_config(&cfg) {
        Ok(cfg) if issues.is_empty() => cfg,
        Ok(_) => return Err(Error::Config(issues)),
        Err(Error::Config(more)) => {
            issues.extend(more);
            return Err(Error::Config(issues));
        }
        Err(e) => return Err(e),
    };
    if cli.crosscheck {
        let report = crosscheck(&cfg)?;
        let mut writer = ArtifactWriter::create(&cfg.output_dir)?;
        writer.write(&report.artifact())?;
        for p in &report.programs {
            println!(
                "{:<20} max {:>6.3} SE  max |diff| {:.2e}  {}",
                p.program,
                p.agreement.max_se_units,
                p.agreement.max_abs_diff,
                if p.passed { "ok" } else { "FAIL" }
            );
        }
        return report.ensure_passed();
    }

    let bundle = run_full_analysis(&cfg)?;
    println!("{:<20} {:>8} {:>8}  flag", "program", "V", "max OP");
    for r in &bundle.analysis.risks {
        println!(
            "{:<20} {:>8.4} {:>8.4}  {}",
            r.program,
            r.bayes_vulnerability,
            r.max_output_privacy.score,
            if r.exceeds_threshold { "above threshold" } else { "" }
        );
    }
    if let Some(frontier) = &bundle.analysis.frontier {
        for rec in &frontier.recommendations {
            println!(
                "delta {}: recommended {}, best noisy {}",
                rec.delta,
                rec.recommended.as_deref().unwrap_or("none"),
                rec.best_noisy.as_deref().unwrap_or("none")
            );
        }
    }
    println!("wrote {} files to {}", bundle.artifacts.len(), bundle.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
