//! `logitmc` command line: simulate / fit / summarize / compare / bench.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error,
//! 4 benchmark error. Failures print one machine-parsable line to stderr:
//! `logitmc: error exit=<code> kind=<kind>: <message>`.

mod bench;
mod compare;
mod manifest;
mod runner;
mod summary;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use logitmc::data::{
    generate, read_chain, read_draws_csv, write_chain, write_ensemble, write_synthetic,
    SyntheticSpec,
};
use logitmc::error::Error;

use manifest::{ChainSection, DataSection, Method, ParamsSection, PriorSection, RunManifest,
    SyntheticSection, MANIFEST_VERSION};
use runner::{load_dataset, run_method, FitResult, RunTotals};
use summary::SummaryReport;

#[derive(Parser)]
#[command(name = "logitmc", version, about = "MCMC samplers for Bayesian logistic classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sparse classification dataset.
    Simulate(SimulateArgs),
    /// Run one sampling method and write draws, metadata, and a summary.
    Fit(Box<FitArgs>),
    /// Recompute the summary of a written chain.
    Summarize(SummarizeArgs),
    /// Compare two or more runs coefficient by coefficient.
    Compare(CompareArgs),
    /// Time manifests and report iterations per second.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of rows.
    #[arg(long)]
    n: usize,
    /// Slope coefficients, comma separated (intercept is calibrated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Vec<f64>,
    /// Target success fraction in (0, 1).
    #[arg(long)]
    sparsity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output stem: writes <out>.csv, <out>.schema.toml, <out>.truth.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Manifest file; flags override its fields.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// mh | parallel-mh | subsample | two-stage | consensus | consensus-two-stage
    #[arg(long)]
    method: Option<String>,
    /// Dataset CSV (requires --schema).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Schema TOML for --data.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    synthetic_n: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    synthetic_beta: Option<Vec<f64>>,
    #[arg(long)]
    synthetic_sparsity: Option<f64>,
    #[arg(long)]
    synthetic_seed: Option<u64>,
    /// Isotropic prior variance (covariance = variance x identity).
    #[arg(long)]
    prior_variance: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Initial coefficients, comma separated (default: zero vector).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    init: Option<Vec<f64>>,
    /// Isotropic proposal variance.
    #[arg(long)]
    scale: Option<f64>,
    /// Enable burn-in proposal adaptation.
    #[arg(long)]
    adapt: Option<bool>,
    #[arg(long)]
    target_acceptance: Option<f64>,
    /// Subsample size (absolute count per chain).
    #[arg(long)]
    a: Option<usize>,
    /// Subsample size as a fraction of the sampled class.
    #[arg(long)]
    a_frac: Option<f64>,
    /// Partition count for consensus methods.
    #[arg(long)]
    p: Option<usize>,
    /// Redraw the subsample every k iterations (0 = fixed).
    #[arg(long)]
    refresh: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Abort ingestion on unknown categorical levels.
    #[arg(long)]
    strict_levels: bool,
    /// Output stem for draws/meta/summary files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Chain stem (expects <stem>.draws.csv and <stem>.meta.txt).
    #[arg(long)]
    chain: PathBuf,
    /// Output stem for the summary (defaults to the chain stem).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Draws CSV files to compare (two or more).
    #[arg(long = "draws", required = true)]
    draws: Vec<PathBuf>,
    /// Output stem: writes <out>.compare.csv and <out>.density.csv.
    #[arg(long)]
    out: PathBuf,
    /// Shared histogram bins per coefficient.
    #[arg(long, default_value_t = 50)]
    bins: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Manifest files to time (one or more).
    #[arg(long = "manifest", required = true)]
    manifests: Vec<PathBuf>,
    /// Timed repetitions per manifest (median reported, minimum 3).
    #[arg(long, default_value_t = 3)]
    repeat: usize,
    /// Output stem: writes <out>.bench.csv.
    #[arg(long)]
    out: PathBuf,
}

fn error_category(err: &Error) -> (i32, &'static str) {
    match err {
        Error::Config(_) => (1, "usage"),
        Error::Dimension(_)
        | Error::InvalidDataset(_)
        | Error::Ingestion(_)
        | Error::Schema(_)
        | Error::Parse { .. }
        | Error::Io(_)
        | Error::DegenerateOutcome(_)
        | Error::InsufficientDraws(_)
        | Error::Generation(_)
        | Error::Combination(_) => (2, "data"),
        Error::NonFinite { .. }
        | Error::NotPositiveDefinite(_)
        | Error::Numerical(_)
        | Error::Initialization(_)
        | Error::EssUndefined(_) => (3, "numerical"),
        Error::Benchmark(_) => (4, "benchmark"),
        Error::Partition { source, .. } => error_category(source),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            if matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                print!("{err}");
                std::process::exit(0);
            }
            eprintln!("logitmc: error exit=1 kind=usage: {err}");
            std::process::exit(1);
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Summarize(args) => cmd_summarize(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Bench(args) => cmd_bench(&args),
    };
    if let Err(err) = result {
        let (code, kind) = error_category(&err);
        eprintln!("logitmc: error exit={code} kind={kind}: {err}");
        std::process::exit(code);
    }
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut os = stem.as_os_str().to_owned();
    os.push(suffix);
    PathBuf::from(os)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let spec = SyntheticSpec {
        n: args.n,
        true_beta: args.beta.clone(),
        sparsity_target: args.sparsity,
        seed: args.seed,
    };
    let outcome = generate(&spec)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let (data_path, schema_path, truth_path) = write_synthetic(&outcome, &args.out)?;
    println!(
        "wrote {} ({} rows, realized success fraction {:.4})",
        data_path.display(),
        outcome.dataset.n_rows(),
        outcome.realized_fraction
    );
    println!("wrote {}", schema_path.display());
    println!("wrote {}", truth_path.display());
    Ok(())
}

fn build_fit_manifest(args: &FitArgs) -> Result<RunManifest, Error> {
    let mut manifest = match &args.manifest {
        Some(path) => RunManifest::load(path)?,
        None => {
            let method = args
                .method
                .as_deref()
                .ok_or_else(|| Error::Config("--method (or --manifest) is required".into()))?;
            RunManifest {
                version: MANIFEST_VERSION,
                method: Method::parse(method)?,
                data: DataSection::default(),
                prior: PriorSection::default(),
                chain: ChainSection::default(),
                params: ParamsSection::default(),
                workers: 1,
                output: None,
                strict_levels: false,
            }
        }
    };
    if let Some(method) = &args.method {
        manifest.method = Method::parse(method)?;
    }
    if let Some(path) = &args.data {
        manifest.data.file = Some(path.clone());
        manifest.data.synthetic = None;
    }
    if let Some(path) = &args.schema {
        manifest.data.schema = Some(path.clone());
    }
    if args.synthetic_n.is_some()
        || args.synthetic_beta.is_some()
        || args.synthetic_sparsity.is_some()
    {
        let n = args
            .synthetic_n
            .ok_or_else(|| Error::Config("--synthetic-n is required for synthetic data".into()))?;
        let beta = args.synthetic_beta.clone().unwrap_or_default();
        let sparsity = args.synthetic_sparsity.ok_or_else(|| {
            Error::Config("--synthetic-sparsity is required for synthetic data".into())
        })?;
        manifest.data.synthetic = Some(SyntheticSection {
            n,
            beta,
            sparsity,
            seed: args.synthetic_seed.unwrap_or(0),
        });
        manifest.data.file = None;
    }
    if let Some(v) = args.prior_variance {
        manifest.prior.variance = v;
    }
    if let Some(v) = args.iterations {
        manifest.chain.iterations = v;
    }
    if let Some(v) = args.burnin {
        manifest.chain.burnin = v;
    }
    if let Some(v) = args.thin {
        manifest.chain.thinning = v;
    }
    if let Some(v) = args.seed {
        manifest.chain.seed = v;
    }
    if let Some(init) = &args.init {
        manifest.chain.init = Some(init.clone());
    }
    if let Some(v) = args.scale {
        manifest.chain.scale = v;
    }
    if let Some(v) = args.adapt {
        manifest.chain.adapt = v;
    }
    if let Some(v) = args.target_acceptance {
        manifest.chain.target_acceptance = v;
    }
    if let Some(v) = args.a {
        manifest.params.a = Some(v);
    }
    if let Some(v) = args.a_frac {
        manifest.params.a_frac = Some(v);
    }
    if let Some(v) = args.p {
        manifest.params.p = Some(v);
    }
    if let Some(v) = args.refresh {
        manifest.params.refresh = v;
    }
    if let Some(v) = args.workers {
        manifest.workers = v;
    }
    if args.strict_levels {
        manifest.strict_levels = true;
    }
    if let Some(out) = &args.out {
        manifest.output = Some(out.clone());
    }
    Ok(manifest)
}

fn cmd_fit(args: &FitArgs) -> Result<(), Error> {
    let manifest = build_fit_manifest(args)?;
    manifest.validate()?;
    let stem = manifest
        .output
        .clone()
        .ok_or_else(|| Error::Config("--out (or manifest output) is required".into()))?;
    if let Some(parent) = stem.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let dataset = load_dataset(&manifest)?;
    let names = dataset.feature_names().to_vec();
    let started = Instant::now();
    let result = run_method(&manifest, &dataset)?;
    let elapsed = started.elapsed().as_secs_f64();

    match &result {
        FitResult::Chain(chain) => write_chain(chain, &names, &stem)?,
        FitResult::Ensemble(ensemble) => write_ensemble(ensemble, &names, &stem)?,
    }
    let report = SummaryReport::from_draws(
        manifest.method.as_str(),
        &result.combined_draws().view(),
        &names,
        result.totals(),
    )?;
    report.write_csv(&with_suffix(&stem, ".summary.csv"))?;
    print!("{}", report.render());
    println!(
        "kept {} draws in {:.2}s; artifacts at {}.*",
        result.combined_draws().nrows(),
        elapsed,
        stem.display()
    );
    Ok(())
}

fn cmd_summarize(args: &SummarizeArgs) -> Result<(), Error> {
    let (chain, names) = read_chain(&args.chain)?;
    let totals = RunTotals {
        stage1_proposals: chain.stage1_proposals,
        stage1_promotions: chain.stage1_promotions,
        stage2_accepts: chain.stage2_accepts,
        exact_evals: chain.exact_evals,
        approx_evals: chain.approx_evals,
        iterations_per_second: chain.iterations_per_second(),
    };
    let report = SummaryReport::from_draws(&chain.method_tag, &chain.draws.view(), &names, totals)?;
    let out = args.out.clone().unwrap_or_else(|| args.chain.clone());
    report.write_csv(&with_suffix(&out, ".summary.csv"))?;
    print!("{}", report.render());
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<(), Error> {
    let mut inputs = Vec::with_capacity(args.draws.len());
    for path in &args.draws {
        let (draws, names) = read_draws_csv(path)?;
        let label = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string())
            .trim_end_matches(".draws.csv")
            .to_string();
        inputs.push(compare::ComparisonInput {
            label,
            draws,
            names,
        });
    }
    let comparison = compare::compare(&inputs, args.bins)?;
    comparison.write_table_csv(&with_suffix(&args.out, ".compare.csv"))?;
    comparison.write_density_csv(&with_suffix(&args.out, ".density.csv"))?;
    print!("{}", comparison.render());
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Error> {
    let manifests = args
        .manifests
        .iter()
        .map(|p| RunManifest::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = bench::run_bench(&manifests, args.repeat)?;
    bench::write_bench_csv(&rows, args.repeat, &with_suffix(&args.out, ".bench.csv"))?;
    print!("{}", bench::render(&rows));
    Ok(())
}
