mod config;
mod manifest;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use fairmle::dataset::{simulate_masked, simulate};
use fairmle::effects::{estimate, PseFunctional};
use fairmle::eval::{run_replications, Failure, RowSummary};
use fairmle::train::{fit, Method};
use fairmle::{Dataset, DgpSpec, Estimator, Experiment, Graph, TrainConfig};

use crate::config::ConfigFile;
use crate::manifest::{default_path, sha256_file, InputHash, RunManifest};

const DEFAULT_SEED: u64 = 1;

#[derive(Parser, Debug)]
#[command(name = "fairmle", version, about = "Fair prediction under path-specific effect constraints")]
struct Cli {
    /// Flat key=value file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Where to write the run manifest.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a dataset from one of the simulation processes and write it as CSV.
    Simulate {
        #[arg(long)]
        variant: Option<Graph>,
        #[arg(long)]
        n: Option<usize>,
        /// Fraction of outcomes removed completely at random.
        #[arg(long)]
        missing: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one procedure to a CSV dataset and print a JSON summary.
    Fit {
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        estimator: Option<Estimator>,
        /// Half-width of the symmetric effect band.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a replication study and print the summary table.
    Reproduce {
        /// table1, table2 or sim3.
        experiment: String,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n: Option<usize>,
        /// Size of the fresh sample used for the divergence estimates.
        #[arg(long)]
        eval_n: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
        /// JSON results file; defaults to `<experiment>.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A fit that finished without meeting its convergence criterion.
#[derive(Debug)]
struct NotConverged(String);

impl std::fmt::Display for NotConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} did not converge", self.0)
    }
}

impl std::error::Error for NotConverged {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NotConverged>().is_some() {
        return 1;
    }
    match err.downcast_ref::<fairmle::Error>() {
        Some(e) if e.is_numerical() => 1,
        _ => 2,
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("FAIRMLE_SEED") {
        Ok(v) => Ok(Some(v.trim().parse().context("FAIRMLE_SEED must be an unsigned integer")?)),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(cfg: &ConfigFile, flag: Option<u64>) -> Result<u64> {
    Ok(match cfg.resolve(flag, "seed")? {
        Some(s) => s,
        None => env_seed()?.unwrap_or(DEFAULT_SEED),
    })
}

#[derive(Serialize)]
struct FitSummary {
    method: Method,
    estimator: Estimator,
    effect: f64,
    pse: f64,
    loglik: f64,
    converged: bool,
    iterations: usize,
    constraint_residual: f64,
    n: usize,
    predicted_rows: usize,
    coefficients: BTreeMap<String, Vec<f64>>,
    sigma: f64,
}

#[derive(Serialize)]
struct SeTriple {
    effect: f64,
    loglik: f64,
    kl: f64,
    mse: f64,
}

#[derive(Serialize)]
struct RowJson<'a> {
    label: &'a str,
    method: Method,
    estimator: Estimator,
    effect: f64,
    loglik: f64,
    kl: f64,
    mse: f64,
    se: SeTriple,
    reps: usize,
    seed: u64,
    failures: &'a [Failure],
}

#[derive(Serialize)]
struct ReproduceJson<'a> {
    experiment: &'a str,
    graph: Graph,
    n: usize,
    eval_n: usize,
    reps: usize,
    seed: u64,
    kl_scope: fairmle::KlScope,
    rows: Vec<RowJson<'a>>,
}

fn cmd_simulate(
    cfg: &ConfigFile,
    manifest: Option<&Path>,
    variant: Option<Graph>,
    n: Option<usize>,
    missing: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let variant = cfg.resolve(variant, "variant")?.unwrap_or(Graph::OneMediator);
    let n = cfg.resolve(n, "n")?.unwrap_or(5000);
    let missing = cfg.resolve(missing, "missing")?.unwrap_or(0.2);
    let seed = resolve_seed(cfg, seed)?;
    let out = match cfg.resolve(out.map(|p| p.display().to_string()), "out")? {
        Some(p) => PathBuf::from(p),
        None => bail!("--out is required"),
    };
    let spec = DgpSpec::new(variant, n, seed).with_missing(missing);
    let ds = if missing > 0.0 { simulate_masked(&spec)?.0 } else { simulate(&spec)? };
    ds.save_csv(&out)?;

    let mut echo = BTreeMap::new();
    echo.insert("variant".into(), variant.to_string());
    echo.insert("n".into(), n.to_string());
    echo.insert("missing".into(), missing.to_string());
    echo.insert("out".into(), out.display().to_string());
    let m = RunManifest::new("simulate", echo, Some(seed), Vec::new());
    m.write(&manifest.map(Path::to_path_buf).unwrap_or_else(|| default_path(Some(&out), "simulate")))?;
    eprintln!("wrote {} rows ({} outcomes missing) to {}", ds.n(), ds.n() - ds.observed_count(), out.display());
    Ok(())
}

fn cmd_fit(
    cfg: &ConfigFile,
    manifest: Option<&Path>,
    method: Option<Method>,
    estimator: Option<Estimator>,
    epsilon: Option<f64>,
    input: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let method = cfg.resolve(method, "method")?.unwrap_or(Method::M0);
    let estimator = cfg.resolve(estimator, "estimator")?.unwrap_or(Estimator::GFormula);
    let epsilon = cfg.resolve(epsilon, "epsilon")?.unwrap_or(0.05);
    let input = match cfg.resolve(input.map(|p| p.display().to_string()), "in")? {
        Some(p) => PathBuf::from(p),
        None => bail!("--in is required"),
    };
    let out = cfg.resolve(out.map(|p| p.display().to_string()), "out")?.map(PathBuf::from);
    if !(epsilon >= 0.0) {
        bail!("--epsilon must be non-negative");
    }
    let ds = Dataset::load_csv(&input).with_context(|| format!("loading {}", input.display()))?;
    let config = TrainConfig::new(method, ds.graph())
        .with_estimator(estimator)
        .with_epsilon(-epsilon, epsilon);
    let result = fit(&ds, &config)?;

    let pse = match &result.reparam {
        Some(r) => r.pse_of(),
        None => {
            let f = PseFunctional::new(ds.graph(), config.paths, Estimator::GFormula)?
                .with_weights(result.x_weights(ds.n()));
            estimate(&ds, &result.params, &f)?.value
        }
    };
    let p = &result.params;
    let mut coefficients = BTreeMap::new();
    coefficients.insert("a".to_string(), p.a.coef.clone());
    coefficients.insert("m".to_string(), p.m.coef.clone());
    if let Some(l) = &p.l {
        coefficients.insert("l".to_string(), l.coef.clone());
    }
    coefficients.insert("y".to_string(), p.y.coef.clone());
    let summary = FitSummary {
        method,
        estimator: result.estimator,
        effect: result.effect_at_fit,
        pse,
        loglik: result.loglik,
        converged: result.diagnostics.converged,
        iterations: result.diagnostics.iterations,
        constraint_residual: result.diagnostics.constraint_residual,
        n: ds.n(),
        predicted_rows: result.predictions.len(),
        coefficients,
        sigma: p.y.sigma,
    };
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    match &out {
        Some(path) => std::fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(json.as_bytes())?,
    }

    let mut echo = BTreeMap::new();
    echo.insert("method".into(), method.to_string());
    echo.insert("estimator".into(), estimator.to_string());
    echo.insert("epsilon".into(), epsilon.to_string());
    echo.insert("in".into(), input.display().to_string());
    let inputs = vec![InputHash { path: input.display().to_string(), sha256: sha256_file(&input)? }];
    let m = RunManifest::new("fit", echo, None, inputs);
    m.write(&manifest.map(Path::to_path_buf).unwrap_or_else(|| default_path(out.as_deref(), "fit")))?;

    if !result.diagnostics.converged {
        return Err(NotConverged(format!("{method} fit")).into());
    }
    Ok(())
}

fn fmt_cell(v: f64, se: f64) -> String {
    if se.is_finite() {
        format!("{v:>9.3} ({se:.3})")
    } else {
        format!("{v:>9.3}        ")
    }
}

fn print_table(name: &str, rows: &[RowSummary]) {
    println!("{name}");
    println!(
        "{:<24} {:>17} {:>17} {:>17} {:>17} {:>5}",
        "procedure", "effect", "loglik", "KL", "MSE", "reps"
    );
    for r in rows {
        println!(
            "{:<24} {} {} {} {} {:>5}{}",
            r.label,
            fmt_cell(r.mean.effect, r.se.effect),
            fmt_cell(r.mean.loglik, r.se.loglik),
            fmt_cell(r.mean.kl, r.se.kl),
            fmt_cell(r.mean.mse, r.se.mse),
            r.reps,
            if r.failures.is_empty() { String::new() } else { format!("  [{} failed]", r.failures.len()) }
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_reproduce(
    cfg: &ConfigFile,
    manifest: Option<&Path>,
    experiment: &str,
    reps: Option<usize>,
    seed: Option<u64>,
    n: Option<usize>,
    eval_n: Option<usize>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let reps = cfg.resolve(reps, "reps")?.unwrap_or(100);
    let seed = resolve_seed(cfg, seed)?;
    let mut exp = Experiment::by_name(experiment, reps, seed)?;
    if let Some(n) = cfg.resolve(n, "n")? {
        exp.n = n;
    }
    if let Some(e) = cfg.resolve(eval_n, "eval-n")? {
        exp.eval_n = e;
    }
    let jobs = cfg.resolve(jobs, "jobs")?;
    let out = cfg
        .resolve(out.map(|p| p.display().to_string()), "out")?
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(format!("{experiment}.json")));

    let rows = match jobs {
        Some(j) if j > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .context("building the worker pool")?
            .install(|| run_replications(&exp))?,
        Some(_) => bail!("--jobs must be positive"),
        None => run_replications(&exp)?,
    };

    let body = ReproduceJson {
        experiment: &exp.name,
        graph: exp.graph,
        n: exp.n,
        eval_n: exp.eval_n,
        reps: exp.reps,
        seed,
        kl_scope: exp.scope,
        rows: rows
            .iter()
            .map(|r| RowJson {
                label: &r.label,
                method: r.method,
                estimator: r.estimator,
                effect: r.mean.effect,
                loglik: r.mean.loglik,
                kl: r.mean.kl,
                mse: r.mean.mse,
                se: SeTriple { effect: r.se.effect, loglik: r.se.loglik, kl: r.se.kl, mse: r.se.mse },
                reps: r.reps,
                seed,
                failures: &r.failures,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&body)? + "\n";
    std::fs::write(&out, &json).with_context(|| format!("writing {}", out.display()))?;
    print_table(&format!("{} (reps={}, seed={}, n={})", exp.name, exp.reps, seed, exp.n), &rows);

    let mut echo = BTreeMap::new();
    echo.insert("experiment".into(), experiment.to_string());
    echo.insert("reps".into(), reps.to_string());
    echo.insert("n".into(), exp.n.to_string());
    echo.insert("eval-n".into(), exp.eval_n.to_string());
    echo.insert("out".into(), out.display().to_string());
    let mut m = RunManifest::new("reproduce", echo, Some(seed), Vec::new());
    m.results = Some(serde_json::from_str(&json)?);
    m.write(&manifest.map(Path::to_path_buf).unwrap_or_else(|| default_path(Some(&out), "reproduce")))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let manifest = cli.manifest.as_deref();
    match cli.command {
        Command::Simulate { variant, n, missing, seed, out } => cmd_simulate(&cfg, manifest, variant, n, missing, seed, out),
        Command::Fit { method, estimator, epsilon, input, out } => {
            cmd_fit(&cfg, manifest, method, estimator, epsilon, input, out)
        }
        Command::Reproduce { experiment, reps, seed, n, eval_n, jobs, out } => {
            cmd_reproduce(&cfg, manifest, &experiment, reps, seed, n, eval_n, jobs, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
