use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use oplearn::config;
use oplearn::harness::{run_experiment, worker_pool};
use oplearn::output::{self, Manifest};
use oplearn::rates::{self, RatePoint, SweepVar, COVDECAY_TERMS};
use oplearn::validate::{run_suite, Fault, Suite, ValidateOptions};
use oplearn_core::spectra::TruthKind;
use serde_json::json;

#[derive(Parser)]
#[command(name = "oplearn", version, about = "Rates of Bayesian linear operator learning")]
struct Cli {
    /// Experiment file, or the name of a shipped config.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<String>,
    /// Output directory for CSV, JSON and manifest files.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed; overrides the seeds in the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Share of the smallest sample sizes left out of rate fits.
    #[arg(long, global = true, value_name = "F")]
    fit_drop_fraction: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predicted rate exponents, singly, as a sweep, or as a published table.
    Rates {
        #[arg(long, default_value = "neg_laplacian")]
        truth: String,
        #[arg(long, default_value_t = 4.5)]
        alpha: f64,
        #[arg(long, default_value_t = 4.5)]
        alpha_prime: f64,
        #[arg(long, default_value_t = 0.0)]
        z: f64,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        /// Swept parameter: alpha, alpha_prime or z.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        from: f64,
        #[arg(long, default_value_t = 8.0)]
        to: f64,
        #[arg(long, default_value_t = 76)]
        steps: usize,
        /// Theory table 1 or 2.
        #[arg(long, conflicts_with = "sweep")]
        table: Option<u8>,
    },
    /// Monte Carlo rate experiments from a config.
    Simulate {
        /// Run only the named experiments.
        #[arg(long)]
        only: Vec<String>,
    },
    /// Output-basis variance decay of a sine-basis Matérn field.
    Covdecay {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 1.5, 2.0, 3.0])]
        alpha_tilde: Vec<f64>,
        #[arg(long, default_value_t = 15.0)]
        tau: f64,
        #[arg(long, default_value_t = 1 << 15)]
        j_max: usize,
        #[arg(long, default_value_t = COVDECAY_TERMS)]
        terms: usize,
        #[arg(long, default_value_t = 1 << 8)]
        fit_min: usize,
        #[arg(long, default_value_t = 1 << 15)]
        fit_max: usize,
    },
    /// Library self-checks against independent references.
    Validate {
        /// oracle, identities, lemmas, parseval or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, hide = true, default_value = "none")]
        inject_fault: String,
    },
}

fn workers(cli: &Cli) -> usize {
    cli.workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    match &cli.command {
        Command::Rates {
            truth,
            alpha,
            alpha_prime,
            z,
            beta,
            sweep,
            from,
            to,
            steps,
            table,
        } => {
            let truth = TruthKind::parse(truth).with_context(|| format!("unknown truth `{truth}`"))?;
            let base = RatePoint {
                truth,
                alpha: *alpha,
                alpha_prime: *alpha_prime,
                z: *z,
                beta: *beta,
            };
            let (var, rows) = match (sweep, table) {
                (Some(v), _) => {
                    let var = SweepVar::parse(v).with_context(|| format!("unknown sweep variable `{v}`"))?;
                    (var, rates::sweep(base, var, *from, *to, *steps)?)
                }
                (None, Some(t)) => (SweepVar::Z, rates::theory_table(*t)?),
                (None, None) => (
                    SweepVar::Z,
                    vec![rates::SweepRow {
                        point: base,
                        value: *z,
                        prediction: base.prediction()?,
                    }],
                ),
            };
            let csv = rates::sweep_csv(var, &rows)?;
            emit(cli, "rates", "rates.csv", &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { only } => {
            let spec = cli.config.as_deref().context("simulate needs --config")?;
            let out = cli.out.as_ref().context("simulate needs --out")?;
            let (mut cfgs, source) = config::load(spec)?;
            if !only.is_empty() {
                cfgs.retain(|c| only.contains(&c.name));
                if cfgs.is_empty() {
                    bail!("no experiment matches --only {}", only.join(","));
                }
            }
            for c in &mut cfgs {
                if let Some(s) = cli.seed {
                    c.seed = s;
                }
                if let Some(f) = cli.fit_drop_fraction {
                    c.fit_drop_fraction = f;
                }
            }
            let pool = worker_pool(workers(cli))?;
            let seed = cfgs[0].seed;
            let mut manifest = Manifest::new(out, "simulate")?.with_config(spec, &source, seed);
            let mut reports = Vec::with_capacity(cfgs.len());
            for c in &cfgs {
                let r = run_experiment(c, &pool)?;
                println!(
                    "{:<36} theory {:.3}  fitted {:.3} ± {:.3}  (N {}..{})",
                    c.name, r.theory.exponent, r.fit.exponent, r.fit.stderr, r.fit.n_min, r.fit.n_max
                );
                manifest.write_report(&r)?;
                reports.push(r);
            }
            manifest.write("summary.csv", &output::summary_csv(&reports))?;
            let summary: Vec<_> = reports.iter().map(output::report_json).collect();
            manifest.write_json("summary.json", &json!({ "schema": output::SUMMARY_SCHEMA, "reports": summary }))?;
            manifest.finish()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Covdecay {
            alpha_tilde,
            tau,
            j_max,
            terms,
            fit_min,
            fit_max,
        } => {
            let pool = worker_pool(workers(cli))?;
            let mut results = Vec::new();
            for a in alpha_tilde {
                let d = rates::covdecay(*a, *tau, *j_max, *terms, (*fit_min, *fit_max), &pool)?;
                println!(
                    "alpha_tilde {:<5} fitted {:.3}  predicted {:.3}",
                    a,
                    d.fitted_exponent,
                    d.predicted_exponent()
                );
                results.push(d);
            }
            if let Some(out) = &cli.out {
                let mut m = Manifest::new(out, "covdecay")?;
                for d in &results {
                    m.write(&format!("covdecay_alpha{}.csv", d.alpha_tilde), &rates::covdecay_csv(d))?;
                }
                let fits: Vec<_> = results
                    .iter()
                    .map(|d| {
                        json!({
                            "alpha_tilde": d.alpha_tilde,
                            "tau": d.tau,
                            "terms": d.terms,
                            "fit_range": [d.fit_range.0, d.fit_range.1],
                            "fitted_exponent": d.fitted_exponent,
                            "predicted_exponent": d.predicted_exponent(),
                        })
                    })
                    .collect();
                m.write_json("covdecay.json", &json!({ "schema": rates::COVDECAY_SCHEMA, "fits": fits }))?;
                m.finish()?;
            } else {
                for d in &results {
                    print!("{}", rates::covdecay_csv(d));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate {
            suite,
            instances,
            inject_fault,
        } => {
            let suites: Vec<Suite> = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                vec![Suite::parse(suite).with_context(|| format!("unknown suite `{suite}`"))?]
            };
            let opts = ValidateOptions {
                seed: cli.seed.unwrap_or(0),
                instances: *instances,
                fault: Fault::parse(inject_fault).with_context(|| format!("unknown fault `{inject_fault}`"))?,
                ..ValidateOptions::default()
            };
            let mut checks = Vec::new();
            for s in suites {
                for c in run_suite(s, &opts)? {
                    println!("{c}");
                    checks.push(c);
                }
            }
            let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.to_string()).collect();
            if let Some(out) = &cli.out {
                let mut m = Manifest::new(out, "validate")?;
                let rows: Vec<_> = checks
                    .iter()
                    .map(|c| {
                        json!({
                            "suite": c.suite.name(), "name": c.name, "passed": c.passed,
                            "observed": c.observed, "tolerance": c.tolerance, "detail": c.detail,
                        })
                    })
                    .collect();
                m.write_json("validate.json", &json!({ "schema": "oplearn.validate.v1", "checks": rows }))?;
                m.finish()?;
            }
            if failed.is_empty() {
                println!("all {} checks passed", checks.len());
                Ok(ExitCode::SUCCESS)
            } else {
                println!("failed: {}", failed.join(", "));
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

/// Writes `contents` under `--out` with a manifest, or prints it.
fn emit(cli: &Cli, command: &str, name: &str, contents: &str) -> anyhow::Result<()> {
    match &cli.out {
        Some(dir) => {
            let mut m = Manifest::new(dir, command)?;
            m.write(name, contents)?;
            m.finish()?;
        }
        None => print!("{contents}"),
    }
    Ok(())
}
