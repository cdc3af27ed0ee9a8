//! `imagedim`: simulate fields, estimate dimensions, probe conditions and
//! verify dimension identities from the command line.
//!
//! Exit status is 0 when everything ran and passed, 1 when a verification
//! failed, 2 on usage or configuration errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use imagedim::fields::simulate;
use imagedim::harness::suite::{self, CheckOutcome, SUITE_SEED};
use imagedim::harness::{emit_plot_data, run_case, run_probe, write_case, CaseReport, ExperimentConfig};
use imagedim::profile::profile_curve_set;
use imagedim::sampling::Seed;
use imagedim::{Error, Result};

#[derive(Parser)]
#[command(name = "imagedim", version, about = "Dimensions of images of self-similar random fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one sample path of the configured field.
    Simulate(Common),
    /// Estimate box and local dimensions of the image, over all replicas.
    Dims(Common),
    /// Profile curve of the configured parameter set.
    Profile(Common),
    /// Run the configured condition probe.
    Probe(Common),
    /// Compare estimates with the closed-form prediction of a case.
    Verify(Common),
    /// Run the built-in verification suite.
    Suite(Common),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; each case writes into its own subdirectory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Registered case id (verify, suite).
    #[arg(long)]
    case: Option<String>,
    /// Wall-clock budget per case in seconds.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

impl Common {
    fn budget(&self) -> Result<Option<Duration>> {
        match self.budget {
            None => Ok(None),
            Some(b) if b.is_finite() && b >= 0.0 => Ok(Some(Duration::from_secs_f64(b))),
            Some(b) => Err(Error::Config(format!("--budget must be a non-negative number, got {b}"))),
        }
    }

    fn load(&self) -> Result<ExperimentConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    /// A configuration file, or a registered case when `--case` is given.
    fn load_or_case(&self) -> Result<ExperimentConfig> {
        match (&self.config, &self.case) {
            (Some(_), Some(_)) => Err(Error::Config("give either --config or --case, not both".into())),
            (None, Some(id)) => suite::case_config(id, self.seed.unwrap_or(SUITE_SEED)),
            _ => self.load(),
        }
    }

    fn case_dir(&self, case: &str) -> Result<PathBuf> {
        let dir = self.out.join(case);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn cmd_simulate(c: &Common) -> Result<bool> {
    let cfg = c.load()?;
    let path = simulate(cfg.field.clone(), Seed::new(cfg.seed))?;
    let dir = c.case_dir(&cfg.case)?;
    let file = match c.format {
        Format::Json => {
            let f = dir.join("path.json");
            write_json(&f, &path)?;
            f
        }
        Format::Csv => {
            let f = dir.join("path.csv");
            path.write_csv(std::io::BufWriter::new(fs::File::create(&f)?))?;
            f
        }
    };
    println!("{}: {} points in R^{} -> {}", cfg.case, path.len(), path.d(), file.display());
    Ok(true)
}

fn write_summary_csv(report: &CaseReport, path: &Path) -> Result<()> {
    let mut s = String::from("estimator,mean,std_error,replicas\n");
    for e in &report.summary {
        s.push_str(&format!("{},{},{},{}\n", e.estimator, e.mean, e.std_error, e.values.len()));
    }
    fs::write(path, s)?;
    Ok(())
}

fn write_verification_csv(report: &CaseReport, path: &Path) -> Result<()> {
    let mut s = String::from("case,tag,estimator,estimate,std_error,predicted,tolerance,pass\n");
    for v in &report.verification {
        let tag = serde_json::to_value(v.tag)?;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            v.case,
            tag.as_str().unwrap_or_default(),
            v.estimator,
            v.estimate,
            v.std_error,
            v.predicted,
            v.tolerance,
            v.pass
        ));
    }
    fs::write(path, s)?;
    Ok(())
}

fn print_summary(report: &CaseReport) {
    for e in &report.summary {
        println!("{}: {} = {:.4} +- {:.4}", report.case, e.estimator, e.mean, e.std_error);
    }
    if report.incomplete {
        println!(
            "{}: incomplete, {} of {} replicas within budget",
            report.case,
            report.replicas.len(),
            report.config.replication
        );
    }
}

fn cmd_dims(c: &Common) -> Result<bool> {
    let mut cfg = c.load()?;
    cfg.verify = None;
    let report = run_case(&cfg, c.budget()?)?;
    let dir = write_case(&report, &c.out)?;
    if c.format == Format::Csv {
        write_summary_csv(&report, &dir.join("summary.csv"))?;
    }
    print_summary(&report);
    Ok(true)
}

fn cmd_profile(c: &Common) -> Result<bool> {
    let cfg = c.load()?;
    let set = cfg.set.build(cfg.grid_level()?)?;
    let grid = cfg.estimators.profile_s.as_deref().filter(|g| !g.is_empty());
    let curve = profile_curve_set(&set, grid, &cfg.estimators.local, Seed::new(cfg.seed))?;
    let dir = c.case_dir(&cfg.case)?;
    match c.format {
        Format::Json => write_json(&dir.join("profile.json"), &curve)?,
        Format::Csv => curve.write_csv(std::io::BufWriter::new(fs::File::create(dir.join("profile.csv"))?))?,
    }
    for (s, v) in curve.s_grid.iter().zip(&curve.values) {
        println!("{s:.4} {v:.4}");
    }
    Ok(true)
}

fn cmd_probe(c: &Common) -> Result<bool> {
    let cfg = c.load()?;
    let report = run_probe(&cfg)?;
    let dir = c.case_dir(&cfg.case)?;
    match c.format {
        Format::Json => write_json(&dir.join("probe.json"), &report)?,
        Format::Csv => report.write_curve_csv(std::io::BufWriter::new(fs::File::create(dir.join("probe.csv"))?))?,
    }
    emit_plot_data(&report, &dir)?;
    println!(
        "{}: {:?} {:?}, {} of {} cells violated",
        cfg.case, report.condition, report.verdict, report.violations, report.total_probes
    );
    Ok(true)
}

fn cmd_verify(c: &Common) -> Result<bool> {
    let cfg = c.load_or_case()?;
    if cfg.verify.is_none() {
        return Err(Error::Config(format!("case `{}` has no [verify] section", cfg.case)));
    }
    let report = run_case(&cfg, c.budget()?)?;
    let dir = write_case(&report, &c.out)?;
    if c.format == Format::Csv {
        write_verification_csv(&report, &dir.join("verification.csv"))?;
    }
    for v in &report.verification {
        println!(
            "{} {}: {} = {:.4} vs predicted {:.4} +- {:.2}",
            if v.pass { "PASS" } else { "FAIL" },
            v.case,
            v.estimator,
            v.estimate,
            v.predicted,
            v.tolerance
        );
    }
    print_summary(&report);
    Ok(report.passed())
}

fn write_outcomes(outcomes: &[CheckOutcome], dir: &Path, format: Format) -> Result<()> {
    fs::create_dir_all(dir)?;
    match format {
        Format::Json => write_json(&dir.join("suite.json"), &outcomes),
        Format::Csv => {
            let mut s = String::from("id,pass,detail\n");
            for o in outcomes {
                s.push_str(&format!("{},{},\"{}\"\n", o.id, o.pass, o.detail.replace('"', "'")));
            }
            fs::write(dir.join("suite.csv"), s)?;
            Ok(())
        }
    }
}

fn cmd_suite(c: &Common) -> Result<bool> {
    let seed = c.seed.unwrap_or(SUITE_SEED);
    let budget = c.budget()?;
    let outcomes = match &c.case {
        Some(id) => {
            let report = suite::verify_theorem(id, seed, budget)?;
            write_case(&report, &c.out)?;
            let detail = report
                .verification
                .iter()
                .map(|v| format!("{} = {:.3} vs {:.3}", v.estimator, v.estimate, v.predicted))
                .collect::<Vec<_>>()
                .join("; ");
            vec![CheckOutcome {
                id: id.clone(),
                pass: report.passed(),
                detail,
            }]
        }
        None => suite::run_suite(seed, Some(&c.out), budget)?,
    };
    for o in &outcomes {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.detail);
    }
    write_outcomes(&outcomes, &c.out, c.format)?;
    Ok(outcomes.iter().all(|o| o.pass))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => cmd_simulate(c),
        Command::Dims(c) => cmd_dims(c),
        Command::Profile(c) => cmd_profile(c),
        Command::Probe(c) => cmd_probe(c),
        Command::Verify(c) => cmd_verify(c),
        Command::Suite(c) => cmd_suite(c),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
