//! `lmoopt run | sweep | certify | verify | reference`.
//!
//! Exit codes: 0 on success, 1 on runtime failure or a failed check, 2 on a
//! configuration error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::config::{parse_config, reference_document, ConfigDocument, ProblemSpec};
use crate::error::{CliError, Result};
use crate::harness::{
    certify, factory_from_spec, mean_std, rate_fit, run_seeds, RunConfig, DEFAULT_SLACK,
};
use crate::output::{
    self, slug, trace_csv, write_file, write_json, CertificateReport, MethodSummary,
    RateFitRecord, RateFitReport, SummaryRecord, SCHEMA_VERSION, TOOL_VERSION,
};
use crate::verify::{verify_suite, VerifyOptions};

pub const OUT_ENV: &str = "LMOOPT_OUT";
pub const DEFAULT_OUT: &str = "lmoopt-out";

#[derive(Debug, Parser)]
#[command(name = "lmoopt", version, about = "Stochastic LMO optimizers: runs, rate sweeps, bound certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every method of a config and write trace.csv and summary.json.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also certify the rate bound and embed the certificate.
        #[arg(long)]
        certify: bool,
    },
    /// Run over `run.horizons` and fit log-log rates into ratefit.json.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Compare average RSF against the evaluated rate bound.
    Certify {
        #[command(flatten)]
        common: Common,
    },
    /// Check the per-step lemmas numerically and write verify_report.json.
    Verify {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Monte-Carlo seeds for the martingale check.
        #[arg(long, default_value_t = 200)]
        seeds: u64,
        /// Fault injection: scale every iterate step by this factor.
        #[arg(long, hide = true)]
        tamper_step: Option<f64>,
    },
    /// Print the annotated config reference.
    Reference,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; falls back to `output.dir`, then $LMOOPT_OUT, then ./lmoopt-out.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `run.seeds`.
    #[arg(long)]
    pub seeds: Option<u64>,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Diagnostics go to stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("lmoopt: {e}");
            e.exit_code()
        }
    }
}

/// Returns whether all checks passed.
pub fn execute(cmd: &Command) -> Result<bool> {
    match cmd {
        Command::Run { common, certify } => cmd_run(common, *certify),
        Command::Sweep { common } => cmd_sweep(common),
        Command::Certify { common } => cmd_certify(common),
        Command::Verify {
            out,
            seeds,
            tamper_step,
        } => cmd_verify(out.clone(), *seeds, *tamper_step),
        Command::Reference => {
            print!("{}", reference_document());
            Ok(true)
        }
    }
}

struct Loaded {
    doc: ConfigDocument,
    out: PathBuf,
    seeds: u64,
}

fn load(common: &Common) -> Result<Loaded> {
    let text = fs::read_to_string(&common.config).map_err(CliError::io(&common.config))?;
    let doc = parse_config(&text)?;
    if common.seeds == Some(0) {
        return Err(CliError::Config {
            field: "--seeds".into(),
            message: "seeds must be at least 1".into(),
        });
    }
    let seeds = common.seeds.unwrap_or(doc.run.seeds);
    let out = resolve_out(common.out.clone(), &doc);
    Ok(Loaded { doc, out, seeds })
}

fn resolve_out(flag: Option<PathBuf>, doc: &ConfigDocument) -> PathBuf {
    flag.or_else(|| doc.output.as_ref().map(|o| PathBuf::from(&o.dir)))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn groups(spec: &ProblemSpec) -> usize {
    match spec {
        ProblemSpec::Grouped(g) => g.blocks.len(),
        _ => 1,
    }
}

/// One run config per method at `horizon`. Parameters are resolved eagerly
/// so that invalid combinations fail before anything runs.
pub fn build_runs(doc: &ConfigDocument, horizon: u64) -> Result<Vec<RunConfig>> {
    let n = groups(&doc.problem);
    let mut labels = Vec::new();
    doc.method
        .as_slice()
        .iter()
        .map(|m| {
            let method = m.resolve(n)?;
            if labels.contains(&method.label) {
                return Err(CliError::Config {
                    field: "method.label".into(),
                    message: format!("duplicate method label {:?}", method.label),
                });
            }
            labels.push(method.label.clone());
            let rc = RunConfig {
                problem: factory_from_spec(&doc.problem),
                method,
                horizon,
                seed: doc.run.seed,
                stride: doc.run.stride,
                timing: doc.run.timing,
            };
            rc.prepare()?;
            Ok(rc)
        })
        .collect()
}

fn slack(doc: &ConfigDocument) -> f64 {
    doc.run.slack.unwrap_or(DEFAULT_SLACK)
}

/// Runs `seeds` seeds of every config and aggregates them. The trace of the
/// base seed is written next to the summary.
fn summarize(
    runs: &[RunConfig],
    seeds: u64,
    out: &Path,
    write_traces: bool,
    cert_slack: Option<f64>,
) -> Result<Vec<MethodSummary>> {
    let single = runs.len() == 1;
    runs.iter()
        .map(|rc| {
            info!("{}: T = {}, {} seed(s)", rc.method.label, rc.horizon, seeds);
            let traces = run_seeds(rc, seeds)?;
            let avgs: Vec<f64> = traces.iter().map(|t| t.avg_rsf).collect();
            let losses: Vec<f64> = traces.iter().map(|t| t.final_loss).collect();
            let (am, asd) = mean_std(&avgs);
            let (lm, lsd) = mean_std(&losses);
            let first = &traces[0];
            let trace = if write_traces {
                let name = if single {
                    "trace.csv".to_string()
                } else {
                    format!("trace-{}.csv", slug(&rc.method.label))
                };
                write_file(&out.join(&name), &trace_csv(&first.rows)?)?;
                Some(name)
            } else {
                None
            };
            let certificate = match cert_slack {
                Some(s) => Some(certify(rc, seeds, s)?),
                None => None,
            };
            Ok(MethodSummary {
                label: rc.method.label.clone(),
                class: rc.method.class.name().into(),
                schedule: rc.method.schedule_name().map(String::from),
                params: first.params.into(),
                diameter: first.diameter,
                constants: first.constants.into(),
                avg_rsf_mean: am,
                avg_rsf_std: asd,
                final_loss_mean: lm,
                final_loss_std: lsd,
                grad_evals: first.grad_evals,
                trace,
                certificate,
            })
        })
        .collect()
}

fn summary(command: &str, doc: &ConfigDocument, horizon: u64, seeds: u64, methods: Vec<MethodSummary>) -> SummaryRecord {
    SummaryRecord {
        schema_version: SCHEMA_VERSION,
        tool: "lmoopt".into(),
        tool_version: TOOL_VERSION.into(),
        command: command.into(),
        horizon,
        seed: doc.run.seed,
        seeds,
        config: doc.clone(),
        methods,
    }
}

fn cmd_run(common: &Common, with_cert: bool) -> Result<bool> {
    let l = load(common)?;
    let runs = build_runs(&l.doc, l.doc.run.horizon)?;
    let cert_slack = with_cert.then(|| slack(&l.doc));
    let methods = summarize(&runs, l.seeds, &l.out, true, cert_slack)?;
    let pass = methods
        .iter()
        .all(|m| m.certificate.as_ref().is_none_or(|c| c.pass));
    let s = summary("run", &l.doc, l.doc.run.horizon, l.seeds, methods);
    let p = output::write_summary(&l.out, &s)?;
    info!("wrote {}", p.display());
    Ok(pass)
}

fn cmd_sweep(common: &Common) -> Result<bool> {
    let l = load(common)?;
    let mut horizons = l.doc.run.horizons.clone().unwrap_or_default();
    horizons.sort_unstable();
    horizons.dedup();
    if horizons.len() < 2 {
        return Err(CliError::Config {
            field: "run.horizons".into(),
            message: "a sweep needs at least 2 distinct horizons".into(),
        });
    }
    if horizons[0] < 1 {
        return Err(CliError::Config {
            field: "run.horizons".into(),
            message: "horizons must be at least 1".into(),
        });
    }
    // Validate every horizon before running any.
    let plans: Vec<(u64, Vec<RunConfig>)> = horizons
        .iter()
        .map(|&h| Ok((h, build_runs(&l.doc, h)?)))
        .collect::<Result<_>>()?;
    let mut points: Vec<Vec<(f64, f64)>> = vec![Vec::new(); plans[0].1.len()];
    let mut meta = Vec::new();
    for (h, runs) in &plans {
        let dir = l.out.join(format!("T{h}"));
        let methods = summarize(runs, l.seeds, &dir, false, None)?;
        for (i, m) in methods.iter().enumerate() {
            points[i].push((*h as f64, m.avg_rsf_mean));
        }
        if meta.is_empty() {
            meta = methods
                .iter()
                .map(|m| (m.label.clone(), m.class.clone(), m.schedule.clone()))
                .collect();
        }
        output::write_summary(&dir, &summary("sweep", &l.doc, *h, l.seeds, methods))?;
    }
    let fits = meta
        .into_iter()
        .zip(&points)
        .map(|((label, class, schedule), pts)| {
            let fit = rate_fit(pts).map_err(CliError::Runtime)?;
            info!("{label}: slope {:.4}, r2 {:.4}", fit.slope, fit.r2);
            Ok(RateFitRecord {
                label,
                class,
                schedule,
                seeds: l.seeds,
                fit,
            })
        })
        .collect::<Result<_>>()?;
    let report = RateFitReport {
        schema_version: SCHEMA_VERSION,
        horizons,
        fits,
    };
    write_json(&l.out.join("ratefit.json"), &report)?;
    Ok(true)
}

fn cmd_certify(common: &Common) -> Result<bool> {
    let l = load(common)?;
    let runs = build_runs(&l.doc, l.doc.run.horizon)?;
    let s = slack(&l.doc);
    let certificates = runs
        .iter()
        .map(|rc| {
            let c = certify(rc, l.seeds, s)?;
            info!(
                "{}: mean {:.6e} vs threshold {:.6e}: {}",
                rc.method.label,
                c.empirical_mean,
                c.threshold,
                if c.pass { "pass" } else { "FAIL" }
            );
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = CertificateReport {
        schema_version: SCHEMA_VERSION,
        pass: certificates.iter().all(|c| c.pass),
        certificates,
    };
    write_json(&l.out.join("certificate.json"), &report)?;
    Ok(report.pass)
}

fn cmd_verify(out: Option<PathBuf>, seeds: u64, tamper_step: Option<f64>) -> Result<bool> {
    if seeds < 1 {
        return Err(CliError::Config {
            field: "--seeds".into(),
            message: "seeds must be at least 1".into(),
        });
    }
    let out = out
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let opts = VerifyOptions {
        tamper_step,
        martingale_seeds: seeds,
        ..VerifyOptions::standard()
    };
    let report = verify_suite(&opts)?;
    for e in &report.entries {
        eprintln!(
            "{} {:<26} {:<26} {:<28} margin {:+.3e}",
            if e.pass { "pass" } else { "FAIL" },
            e.lemma,
            e.problem,
            e.method,
            e.worst_margin
        );
    }
    output::write_verify_report(&out, &report)?;
    Ok(report.all_pass)
}
