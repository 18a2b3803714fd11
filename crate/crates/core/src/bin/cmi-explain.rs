use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cmi_explain::error::{Error, ErrorKind, Result};
use cmi_explain::experiment::{self, ExperimentConfig};
use cmi_explain::io::{self, ModelSpec};
use cmi_explain::mi::{self, serialize_nats, MiEntry};
use cmi_explain::model::{ExplanationSupport, GaussianModel, SampleSet, RNG_NAME};
use cmi_explain::regression::{PathPoint, SolverConfig, SparseFit};
use cmi_explain::search::{self, SearchResult};
use cmi_explain::subsets::ENUMERATION_LIMIT;
use cmi_explain::xml::{self, Method};

const SCHEMA_VERSION: u32 = 1;
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "cmi-explain", version, propagate_version = true)]
#[command(about = "Feature-subset explanations of linear predictions, personalized to a user summary")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a Gaussian model and write samples.csv plus truth.json.
    Synth(SynthArgs),
    /// Select an explanation from a sample CSV; writes explanation.json.
    Explain(ExplainArgs),
    /// Conditional MI of every support up to size s; writes mi_table.csv.
    MiTable(MiTableArgs),
    /// Run the image patch experiment; writes report.json, mask.pgm, mi_table.csv.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true))]
struct SynthArgs {
    /// Model TOML with cov_x ("identity", {diag = [..]} or rows), w and v.
    #[arg(long, group = "source")]
    model: Option<PathBuf>,
    /// Draw a random model of this dimension instead.
    #[arg(long, group = "source")]
    n: Option<usize>,
    /// Eigenvalue range of a random model's covariance.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.5, 2.0])]
    spectrum: Vec<f64>,
    /// Explanation sparsity for the analytic optimum (capped at n).
    #[arg(long, default_value_t = 2)]
    s: usize,
    /// Number of samples.
    #[arg(long)]
    m: usize,
    /// Include the full MI table in truth.json.
    #[arg(long)]
    table: bool,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    s: usize,
    /// auto, l0_exhaustive, omp or lasso_path.
    #[arg(long, default_value = "auto")]
    method: Method,
    /// Subtract column means before fitting (for data that is not zero-mean).
    #[arg(long)]
    center: bool,
    /// Solver settings TOML (tol, max_sweeps, path_points, path_ratio, standardize, fixed_alpha).
    #[arg(long)]
    solver: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true))]
struct MiTableArgs {
    /// Analytic moments of a model TOML.
    #[arg(long, group = "source")]
    model: Option<PathBuf>,
    /// Empirical moments of a sample CSV.
    #[arg(long, group = "source")]
    samples: Option<PathBuf>,
    #[arg(long)]
    s: usize,
    /// Center sample columns before forming moments.
    #[arg(long, requires = "samples")]
    center: bool,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Experiment TOML; relative image paths resolve against its directory.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Serialize)]
struct ModelJson {
    cov_x: Vec<Vec<f64>>,
    w: Vec<f64>,
    v: Vec<f64>,
}

impl From<&GaussianModel> for ModelJson {
    fn from(g: &GaussianModel) -> Self {
        let c = g.cov_x();
        Self {
            cov_x: (0..g.n()).map(|i| c.row(i).iter().copied().collect()).collect(),
            w: g.w().iter().copied().collect(),
            v: g.v().iter().copied().collect(),
        }
    }
}

#[derive(Serialize)]
struct TruthJson {
    schema_version: u32,
    tool_version: &'static str,
    rng: &'static str,
    seed: u64,
    n: usize,
    m: usize,
    s: usize,
    model: ModelJson,
    optimal: SearchResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    mi_table: Option<Vec<MiEntry>>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct ExplainJson<'a> {
    schema_version: u32,
    tool_version: &'static str,
    samples: &'a Path,
    m: usize,
    n: usize,
    s: usize,
    centered: bool,
    method: Method,
    solver: &'a SolverConfig,
    support: &'a ExplanationSupport,
    fit: &'a SparseFit,
    rss: f64,
    #[serde(serialize_with = "serialize_nats")]
    mi_nats: f64,
    cond_var: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_path: Option<&'a Vec<PathPoint>>,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Io { path: path.into(), source: std::io::Error::other(e) })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<Vec<PathBuf>> {
    let model = match (&args.model, args.n) {
        (Some(path), _) => ModelSpec::load(path)?.build()?,
        (None, Some(n)) => GaussianModel::random(n, (args.spectrum[0], args.spectrum[1]), cli.seed)?,
        (None, None) => unreachable!("clap requires a source"),
    };
    let n = model.n();
    let s = args.s.min(n);
    // the sample stream is kept apart from the one that drew a random model
    let samples = model.sample(args.m, cli.seed.wrapping_add(1))?;
    let moments = model.analytic_moments();
    let mut warnings = Vec::new();
    let optimal = if n <= ENUMERATION_LIMIT {
        search::optimal_support_exhaustive(&moments, s)?
    } else {
        let msg = format!(
            "{}; reporting the greedy support",
            Error::DimensionTooLarge { n, limit: ENUMERATION_LIMIT }
        );
        log::warn!("{msg}");
        warnings.push(msg);
        search::optimal_support_greedy(&moments, s)?
    };
    let mi_table = match (args.table, n <= ENUMERATION_LIMIT) {
        (true, true) => Some(mi::mi_table(&moments, s)?),
        (true, false) => {
            let msg = format!(
                "{}; MI table omitted",
                Error::DimensionTooLarge { n, limit: ENUMERATION_LIMIT }
            );
            log::warn!("{msg}");
            warnings.push(msg);
            None
        }
        _ => None,
    };
    create_out(&cli.out)?;
    let csv_path = cli.out.join("samples.csv");
    io::write_samples_csv(&samples, &csv_path)?;
    let truth_path = cli.out.join("truth.json");
    let truth = TruthJson {
        schema_version: SCHEMA_VERSION,
        tool_version: VERSION,
        rng: RNG_NAME,
        seed: cli.seed,
        n,
        m: args.m,
        s,
        model: (&model).into(),
        optimal,
        mi_table,
        warnings,
    };
    write_json(&truth, &truth_path)?;
    Ok(vec![csv_path, truth_path])
}

fn load_samples(path: &Path, center: bool) -> Result<SampleSet> {
    let samples = io::load_samples_csv(path)?;
    Ok(if center { samples.centered() } else { samples })
}

fn explain(cli: &Cli, args: &ExplainArgs) -> Result<Vec<PathBuf>> {
    let solver = match &args.solver {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            toml::from_str::<SolverConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => SolverConfig::default(),
    };
    solver.validate()?;
    let samples = load_samples(&args.samples, args.center)?;
    let explanation = xml::xml_fit(&samples, args.s, args.method, &solver)?;
    let moments = samples.empirical_moments()?;
    let mi = mi::conditional_mi_default(&moments, explanation.support())?;
    create_out(&cli.out)?;
    let path = cli.out.join("explanation.json");
    let report = ExplainJson {
        schema_version: SCHEMA_VERSION,
        tool_version: VERSION,
        samples: &args.samples,
        m: samples.m(),
        n: samples.n(),
        s: args.s,
        centered: args.center,
        method: explanation.method,
        solver: &solver,
        support: explanation.support(),
        fit: &explanation.fit,
        rss: explanation.fit.rss,
        mi_nats: mi.nats,
        cond_var: mi.denominator_var,
        lambda_path: explanation.path.as_ref(),
    };
    write_json(&report, &path)?;
    Ok(vec![path])
}

fn mi_table(cli: &Cli, args: &MiTableArgs) -> Result<Vec<PathBuf>> {
    let moments = match (&args.model, &args.samples) {
        (Some(path), _) => ModelSpec::load(path)?.build()?.analytic_moments(),
        (None, Some(path)) => load_samples(path, args.center)?.empirical_moments()?,
        (None, None) => unreachable!("clap requires a source"),
    };
    let table = mi::mi_table(&moments, args.s)?;
    create_out(&cli.out)?;
    let path = cli.out.join("mi_table.csv");
    let file = fs::File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    mi::write_mi_table_csv(&table, file)?;
    Ok(vec![path])
}

fn run_experiment(cli: &Cli, args: &ExperimentArgs) -> Result<Vec<PathBuf>> {
    let config = ExperimentConfig::load(&args.config)?;
    let run = experiment::run_experiment(&config)?;
    if run.report.degenerate {
        log::warn!("prediction has no variance beyond the user summary; explanation is empty");
    }
    experiment::write_outputs(&run, &cli.out)
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Explain(a) => explain(cli, a),
        Command::MiTable(a) => mi_table(cli, a),
        Command::Experiment(a) => run_experiment(cli, a),
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Solver => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(inner) = source {
                if !msg.contains(&inner.to_string()) {
                    msg.push_str(&format!(": {inner}"));
                }
                source = inner.source();
            }
            eprintln!("{msg}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
