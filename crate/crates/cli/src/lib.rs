//! Command-line front end for `gibbslab`.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use gibbslab::convexity::{certify_model, Verdict as PsdVerdict};
use gibbslab::graph::{sample_er, sample_interpolated, Density, Hypergraph, InterpolationPoint};
use gibbslab::harness::{
    append_jsonl, read_jsonl, replay, write_csv, ConcentrationConfig, ConvergenceConfig, EndpointConfig, Experiment,
    ExperimentRecord, InterpolationConfig, ModelRef, MomentsConfig, Verdict,
};
use gibbslab::model::{build_model, ModelSpec, ParamValue, Params};
use gibbslab::partition::{log_z_exact, log_z_mc, state_space, Instance, LogZRow, Method, DEFAULT_STATE_CAP};
use gibbslab::SeedStream;
use serde::Deserialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "GIBBSLAB_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "gibbslab", version, about = "Gibbs models on sparse random hypergraphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Model inspection.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
    /// Sample a graph and print it as JSON.
    Gen(GenArgs),
    /// Log-partition function of one seeded instance.
    Logz(LogzArgs),
    /// PSD certificate for the model's pairwise kernel.
    Certify(ModelArgs),
    /// Interpolation monotonicity experiment.
    Interpolate(InterpolateArgs),
    /// Exact replica moment inequality on a small base graph.
    Moments(MomentsArgs),
    /// Concentration of log Z / N across sizes.
    Concentrate(ConcentrateArgs),
    /// Superadditivity table and Fekete extrapolate.
    Converge(ConvergeArgs),
    /// Disjoint-union endpoint check.
    Endpoint(EndpointArgs),
    /// Re-run every record of a JSON-lines file and compare results.
    Replay(ReplayArgs),
}

#[derive(Subcommand, Debug)]
enum ModelAction {
    /// Print the fully resolved model as JSON.
    Show(ModelArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct ModelArgs {
    /// JSON file with {"model": name, "params": {...}, "seed": integer}.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    /// Half-width of the truncated real line (Gaussian partition model).
    #[arg(long)]
    l: Option<f64>,
    #[arg(long)]
    cells: Option<f64>,
    /// Any other parameter as `name=value` or `name=v1,v2,...`.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    extra: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct Output {
    /// Append the record to this JSON-lines file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the record as CSV to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "1")]
    c: Density,
    /// Arity used when no model is given.
    #[arg(long, default_value_t = 2)]
    arity: usize,
    /// Interpolation step `t`; needs `--n1`.
    #[arg(long, requires = "n1")]
    t: Option<usize>,
    #[arg(long)]
    n1: Option<usize>,
}

#[derive(Args, Debug)]
struct LogzArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Use this graph instead of sampling `G(N,c)`.
    #[arg(long, conflicts_with_all = ["n", "c"])]
    graph: Option<PathBuf>,
    #[arg(long, required_unless_present = "graph")]
    n: Option<usize>,
    #[arg(long)]
    c: Option<Density>,
    #[arg(long, conflicts_with = "samples")]
    exact: bool,
    /// Monte Carlo samples; enables importance sampling.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug)]
struct InterpolateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: Output,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    n1: usize,
    #[arg(long, default_value = "1")]
    c: Density,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long)]
    uncoupled: bool,
    #[arg(long, default_value_t = 3.0)]
    threshold_se: f64,
    /// Run even when the model is not certified (report-only verdict).
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct MomentsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: Output,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    n1: usize,
    #[arg(long, default_value_t = 1)]
    r: usize,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 2)]
    base_edges: usize,
}

#[derive(Args, Debug)]
struct ConcentrateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: Output,
    #[arg(long = "n-list", value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    #[arg(long, default_value = "1")]
    c: Density,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = -0.3, allow_hyphen_values = true)]
    max_slope: f64,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: Output,
    #[arg(long = "n-list", value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    #[arg(long, default_value = "1")]
    c: Density,
    #[arg(long, default_value_t = 500)]
    samples: usize,
}

#[derive(Args, Debug)]
struct EndpointArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: Output,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    n1: usize,
    #[arg(long, default_value = "1")]
    c: Density,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 3.0)]
    threshold_se: f64,
    #[arg(long, default_value_t = 1e-3)]
    significance: f64,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// JSON-lines file of experiment records.
    input: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    model: String,
    #[serde(default)]
    params: Params,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Debug)]
struct CliError(String);

impl From<gibbslab::Error> for CliError {
    fn from(e: gibbslab::Error) -> Self {
        CliError(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

impl ModelArgs {
    fn resolve(&self) -> CliResult<(ModelRef, u64)> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
                let cfg: ConfigFile = serde_json::from_str(&text)
                    .map_err(|e| CliError(format!("{}: {e}", path.display())))?;
                Some(cfg)
            }
            None => None,
        };
        let name = match (&self.model, &file) {
            (Some(name), _) => name.clone(),
            (None, Some(cfg)) => cfg.model.clone(),
            (None, None) => return Err(CliError("a model is required (--model or --config)".into())),
        };
        let mut params = file.as_ref().map(|c| c.params.clone()).unwrap_or_default();
        let flags = [
            ("lambda", self.lambda),
            ("q", self.q),
            ("beta", self.beta),
            ("h", self.h),
            ("k", self.k),
            ("l", self.l),
            ("cells", self.cells),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                params.insert(key.into(), ParamValue::Number(v));
            }
        }
        for raw in &self.extra {
            let (key, value) = parse_param(raw)?;
            params.insert(key, value);
        }
        let seed = self.seed.or(file.and_then(|c| c.seed)).unwrap_or(0);
        Ok((ModelRef::new(&name, params), seed))
    }

    fn build(&self) -> CliResult<(Arc<ModelSpec>, u64)> {
        let (model, seed) = self.resolve()?;
        let spec = build_model(&model.name, &model.params)?;
        Ok((Arc::new(spec), seed))
    }

    fn given(&self) -> bool {
        self.model.is_some() || self.config.is_some()
    }
}

fn parse_param(raw: &str) -> CliResult<(String, ParamValue)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError(format!("--param expects NAME=VALUE, got `{raw}`")))?;
    let numbers: Result<Vec<f64>, _> = value.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let parsed = match numbers {
        Ok(v) if v.len() == 1 && !value.contains(',') => ParamValue::Number(v[0]),
        Ok(v) => ParamValue::List(v),
        Err(_) => ParamValue::Text(value.to_string()),
    };
    Ok((key.to_string(), parsed))
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string(value).map_err(|e| CliError(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn emit(records: &[ExperimentRecord], output: &Output) -> CliResult<i32> {
    for record in records {
        print_json(record)?;
        if let Some(path) = &output.out {
            append_jsonl(path, record)?;
        }
    }
    if let Some(path) = &output.csv {
        write_csv(records, fs::File::create(path)?)?;
    }
    Ok(if records.iter().any(|r| r.verdict == Verdict::Fail) {
        EXIT_FAIL
    } else {
        EXIT_OK
    })
}

fn run_experiment(exp: Experiment, output: &Output) -> CliResult<i32> {
    let record = exp.run()?;
    eprintln!("{}: {:?}", record.experiment, record.verdict);
    emit(&[record], output)
}

fn gen(args: &GenArgs) -> CliResult<i32> {
    let (k, seed) = if args.model.given() {
        let (model, seed) = args.model.build()?;
        (model.arity(), seed)
    } else {
        (args.arity, args.model.seed.unwrap_or(0))
    };
    let stream = SeedStream::new(seed);
    let graph = match (args.t, args.n1) {
        (Some(t), Some(n1)) => {
            let m = args.c.edge_count(args.n);
            let n2 = args.n.checked_sub(n1).ok_or_else(|| CliError("--n1 exceeds --n".into()))?;
            let point = InterpolationPoint::at_step(t, n1, n2, m).map_err(|e| CliError(e.to_string()))?;
            sample_interpolated(args.n, &args.c, k, point, stream)?
        }
        _ => sample_er(args.n, &args.c, k, stream)?,
    };
    println!("{}", graph.to_json());
    Ok(EXIT_OK)
}

fn logz(args: &LogzArgs) -> CliResult<i32> {
    let (model, seed) = args.model.build()?;
    let stream = SeedStream::new(seed);
    let graph = match (&args.graph, args.n) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<Hypergraph>(&text)
                .map_err(|e| CliError(format!("{}: {e}", path.display())))?
        }
        (None, Some(n)) => {
            let c = args.c.clone().unwrap_or_else(|| "1".parse().expect("literal density"));
            sample_er(n, &c, model.arity(), stream.child(gibbslab::seed::tags::GRAPH))?
        }
        (None, None) => return Err(CliError("--n or --graph is required".into())),
    };
    let instance = Instance::draw(model, graph, stream)?;
    let too_big = state_space(instance.states(), instance.n_nodes()) > DEFAULT_STATE_CAP;
    let row = match args.samples {
        Some(samples) => mc_row(&instance, samples, seed)?,
        None if args.exact || !too_big => LogZRow {
            logz: log_z_exact(&instance)?,
            se: None,
            method: Method::Exact,
            seed,
        },
        None => mc_row(&instance, 100_000, seed)?,
    };
    print_json(&row)?;
    Ok(EXIT_OK)
}

fn mc_row(instance: &Instance, samples: usize, seed: u64) -> CliResult<LogZRow> {
    let est = log_z_mc(instance, samples, SeedStream::new(seed).child(gibbslab::seed::tags::AUX))?;
    Ok(LogZRow {
        logz: gibbslab::ExtReal::from_log(est.log_z),
        se: Some(est.std_error),
        method: Method::Mc,
        seed,
    })
}

fn certify(args: &ModelArgs) -> CliResult<i32> {
    let (model, _) = args.build()?;
    let cert = certify_model(&model)?;
    match &cert.verdict {
        PsdVerdict::PsdForAlpha(alpha) => println!("PsdForAlpha({alpha})"),
        PsdVerdict::NoAlphaExists => println!("NoAlphaExists"),
        PsdVerdict::Inconclusive(reason) => println!("Inconclusive({reason})"),
    }
    print_json(&cert)?;
    Ok(EXIT_OK)
}

fn replay_file(args: &ReplayArgs) -> CliResult<i32> {
    let records = read_jsonl(&args.input)?;
    let mut rerun = Vec::with_capacity(records.len());
    let mut mismatches = 0;
    for record in &records {
        let again = replay(record)?;
        if !again.same_results(record) {
            eprintln!("{}: results differ from the stored record", record.experiment);
            mismatches += 1;
        }
        rerun.push(again);
    }
    let code = emit(&rerun, &args.output)?;
    Ok(if mismatches > 0 { EXIT_FAIL } else { code })
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Model {
            action: ModelAction::Show(args),
        } => {
            let (model, _) = args.build()?;
            let text = serde_json::to_string_pretty(&*model).map_err(|e| CliError(e.to_string()))?;
            println!("{text}");
            Ok(EXIT_OK)
        }
        Command::Gen(args) => gen(&args),
        Command::Logz(args) => logz(&args),
        Command::Certify(args) => certify(&args),
        Command::Interpolate(a) => {
            let (model, seed) = a.model.resolve()?;
            let cfg = InterpolationConfig {
                model,
                n: a.n,
                n1: a.n1,
                c: a.c,
                samples: a.samples,
                seed,
                coupled: !a.uncoupled,
                threshold_se: a.threshold_se,
                force: a.force,
            };
            run_experiment(Experiment::Interpolation(cfg), &a.output)
        }
        Command::Moments(a) => {
            let (model, seed) = a.model.resolve()?;
            let cfg = MomentsConfig {
                model,
                n: a.n,
                n1: a.n1,
                r: a.r,
                alpha: a.alpha,
                base_edges: a.base_edges,
                seed,
            };
            run_experiment(Experiment::Moments(cfg), &a.output)
        }
        Command::Concentrate(a) => {
            let (model, seed) = a.model.resolve()?;
            let cfg = ConcentrationConfig {
                model,
                n_list: a.n_list,
                c: a.c,
                samples: a.samples,
                seed,
                max_slope: a.max_slope,
            };
            run_experiment(Experiment::Concentration(cfg), &a.output)
        }
        Command::Converge(a) => {
            let (model, seed) = a.model.resolve()?;
            let cfg = ConvergenceConfig {
                model,
                n_list: a.n_list,
                c: a.c,
                samples: a.samples,
                seed,
            };
            run_experiment(Experiment::Convergence(cfg), &a.output)
        }
        Command::Endpoint(a) => {
            let (model, seed) = a.model.resolve()?;
            let cfg = EndpointConfig {
                model,
                n: a.n,
                n1: a.n1,
                c: a.c,
                samples: a.samples,
                seed,
                threshold_se: a.threshold_se,
                significance: a.significance,
            };
            run_experiment(Experiment::Endpoint(cfg), &a.output)
        }
        Command::Replay(args) => replay_file(&args),
    }
}

fn configure_workers() -> CliResult<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError(format!("{WORKERS_ENV} must be a positive integer, got `{raw}`")))?;
    // a second call in the same process finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Runs the command line `argv` (including the program name) and returns
/// the process exit status.
pub fn cli_run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = configure_workers().and_then(|_| dispatch(cli));
    let _ = io::stdout().flush();
    match result {
        Ok(code) => code,
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}
