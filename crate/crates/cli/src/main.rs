mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use grou::benchmark::{monte_carlo_study, Scenario, StudyConfig, TripletSource};
use grou::estimate::{estimate_drift, estimate_triplet, RidgePolicy, ThresholdPolicy};
use grou::forecast::{rolling_forecast_with, Horizon};
use grou::graph::weight_matrices;
use grou::io::{
    create, fmt_f64, read_json, read_path_file, write_forecast_csv, write_forecast_table_csv, write_header,
    write_mrc_csv, write_path_csv, write_study_csv, EstimationReport, TruthSidecar,
};
use grou::model::{build_companion, ModelShape};
use grou::mrc::{ingest_prices, rolling_mrc, IngestReport};
use grou::pipeline::run_pipeline;
use grou::selection::{joint_network_model_search, select_model};
use grou::simulate::{make_uniform_grids, simulate_path, InitState};
use grou::GrouError;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "grou",
    version,
    about = "Graph Ornstein-Uhlenbeck processes on network edges"
)]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; falls back to the config, then to GROU_SEED, then to 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path: graph, parameters, noise and grid to a path CSV and a truth sidecar.
    Simulate(SimulateArgs),
    /// Fit a graph-structured drift to a path CSV.
    Estimate(EstimateArgs),
    /// One-step conditional forecasts from a fitted model.
    Forecast(ForecastArgs),
    /// Monte Carlo forecast comparison of the benchmark models.
    Benchmark(BenchmarkArgs),
    /// Choose an order, or a network and an order, for edge series or prices.
    Select(SelectArgs),
    /// Rolling pre-averaged covariance of a price CSV as edge series.
    Mrc(MrcArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Truth sidecar path (default: `<out>.truth.json`).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    mesh: Option<f64>,
    #[arg(long)]
    coarse_ratio: Option<usize>,
    #[arg(long)]
    stream: Option<u64>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Stages per lag, e.g. `1,1` for grOU(2,[1,1]).
    #[arg(long, value_parser = parse_shape)]
    shape: Option<ModelShape>,
    /// Use the configured noise as the known triplet instead of estimating it.
    #[arg(long)]
    known_noise: bool,
    /// `auto` or a fixed ridge.
    #[arg(long, value_parser = parse_ridge)]
    ridge: Option<RidgePolicy>,
    /// Override the coarse grid recorded in the path header.
    #[arg(long)]
    coarse_ratio: Option<usize>,
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output of `estimate`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// First forecast origin (fine index).
    #[arg(long, default_value_t = 0)]
    from: usize,
    /// `fine`, `coarse` or a step length.
    #[arg(long, value_parser = parse_horizon)]
    horizon: Option<Horizon>,
    #[arg(long)]
    coarse_ratio: Option<usize>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    out: PathBuf,
    /// Per-path metrics, one row per path and model.
    #[arg(long)]
    per_path: Option<PathBuf>,
    #[arg(long)]
    n_paths: Option<usize>,
    /// Jump variance of the built-in design (ignored with a `study` block).
    #[arg(long)]
    jump_variance: Option<f64>,
    /// `correct` or `missing:<edge>`.
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
}

#[derive(Args)]
struct SelectArgs {
    /// Edge series CSV (path format).
    #[arg(long, conflicts_with = "prices", required_unless_present = "prices")]
    input: Option<PathBuf>,
    /// Price CSV; runs the full rolling-covariance pipeline.
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Forecast table CSV (price pipeline only).
    #[arg(long, requires = "prices")]
    table: Option<PathBuf>,
    /// Vertices of the universe when searching networks over edge series.
    #[arg(long)]
    n_vertices: Option<usize>,
    #[arg(long)]
    coarse_ratio: Option<usize>,
}

#[derive(Args)]
struct MrcArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the series as a path CSV.
    #[arg(long)]
    path_out: Option<PathBuf>,
    /// Bin width in seconds.
    #[arg(long)]
    frequency: Option<f64>,
    #[arg(long)]
    window: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Emit correlations instead of covariances.
    #[arg(long)]
    corr: bool,
}

fn parse_shape(s: &str) -> Result<ModelShape, String> {
    let r = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    ModelShape::new(r).map_err(|e| e.to_string())
}

fn parse_ridge(s: &str) -> Result<RidgePolicy, String> {
    match s {
        "auto" => Ok(RidgePolicy::Auto),
        x => x.parse().map(RidgePolicy::Fixed).map_err(|e| format!("`{x}`: {e}")),
    }
}

fn parse_horizon(s: &str) -> Result<Horizon, String> {
    match s {
        "fine" => Ok(Horizon::FineStep),
        "coarse" => Ok(Horizon::CoarseStep),
        x => x.parse().map(Horizon::Fixed).map_err(|e| format!("`{x}`: {e}")),
    }
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    match s.split_once(':') {
        None if s == "correct" => Ok(Scenario::Correct),
        Some(("missing", e)) => e
            .parse()
            .map(|edge| Scenario::MissingEdge { edge })
            .map_err(|e| format!("missing edge: {e}")),
        _ => Err(format!("`{s}`: expected `correct` or `missing:<edge>`")),
    }
}

enum CliError {
    Usage(String),
    Lib { module: &'static str, err: GrouError },
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib { err, .. } if err.is_usage() => 1,
            CliError::Lib { .. } => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "cli: {m}"),
            CliError::Lib { module, err } => write!(f, "{module}: {err}"),
        }
    }
}

trait At<T> {
    fn at(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> At<T> for grou::Result<T> {
    fn at(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|err| CliError::Lib { module, err })
    }
}

type Run = Result<(), CliError>;

fn header(command: &str, seed: u64, cfg: &RunConfig) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": cfg,
    })
}

fn write_doc(path: &Path, header: Value, key: &str, body: impl serde::Serialize) -> Run {
    let mut w = create(path).at("cli")?;
    let doc = json!({ "header": header, key: body });
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Usage(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Lib {
        module: "cli",
        err: GrouError::Format(format!("{}: {e}", path.display())),
    })
}

fn finish<W: Write>(mut w: W, path: &Path) -> Run {
    w.flush().map_err(|e| CliError::Lib {
        module: "cli",
        err: GrouError::Format(format!("{}: {e}", path.display())),
    })
}

fn simulate(args: SimulateArgs, mut cfg: RunConfig, seed: u64) -> Run {
    if let Some(t) = args.t_end {
        cfg.grid.t_end = t;
    }
    if let Some(m) = args.mesh {
        cfg.grid.mesh_fine = m;
    }
    if let Some(r) = args.coarse_ratio {
        cfg.grid.coarse_ratio = r;
    }
    if let Some(s) = args.stream {
        cfg.stream = s;
    }
    let graph = cfg.graph_or_default().at("edge-graph")?;
    let params = cfg.params_or_default().at("grou-model")?;
    let noise = cfg.noise_or_default(graph.k()).at("levy-noise")?;
    let weights = weight_matrices(&graph, params.shape().max_stage().max(1)).at("edge-graph")?;
    let system = build_companion(&params, &weights).at("grou-model")?;
    let grid = make_uniform_grids(cfg.grid.t_end, cfg.grid.mesh_fine, cfg.grid.coarse_ratio).at("path-simulator")?;
    let path = simulate_path(&system, &noise, &grid, &InitState::Stationary, seed, cfg.stream).at("path-simulator")?;

    cfg.graph = Some(graph);
    cfg.params = Some(params);
    cfg.noise = Some(noise);
    let mut w = create(&args.out).at("cli")?;
    write_path_csv(&mut w, &path, &header("simulate", seed, &cfg)).at("cli")?;
    finish(w, &args.out)?;
    let truth_path = args.truth.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".truth.json");
        p.into()
    });
    let truth = path.truth.as_ref().map(TruthSidecar::from);
    grou::io::write_json(&truth_path, &truth).at("cli")?;
    log::info!("simulated {} points on {} edges", path.len(), path.k());
    Ok(())
}

fn estimate(args: EstimateArgs, mut cfg: RunConfig, seed: u64) -> Run {
    let path = read_path_file(&args.input, args.coarse_ratio).at("cli")?;
    let graph = cfg.graph_or_default().at("edge-graph")?;
    let shape = match (args.shape, &cfg.shape) {
        (Some(s), _) => s,
        (None, Some(s)) => s.clone(),
        (None, None) => cfg.params_or_default().at("grou-model")?.shape().clone(),
    };
    if let Some(r) = args.ridge {
        cfg.fit.ridge = r;
    }
    if args.known_noise {
        let noise = cfg.noise_or_default(path.k()).at("levy-noise")?;
        if cfg.fit.threshold == ThresholdPolicy::default_for(grou::estimate::Activity::Finite) {
            cfg.fit.threshold = ThresholdPolicy::for_noise(&noise);
        }
        cfg.fit.triplet = TripletSource::Known { spec: noise };
    }
    let weights = weight_matrices(&graph, shape.max_stage().max(1)).at("edge-graph")?;
    let triplet = match &cfg.fit.triplet {
        TripletSource::Known { spec } => spec.clone(),
        TripletSource::Estimated => estimate_triplet(&path, &cfg.fit.threshold, shape.l).at("drift-estimator")?,
    };
    let result =
        estimate_drift(&path, &weights, &shape, &triplet, &cfg.fit.threshold, cfg.fit.ridge).at("drift-estimator")?;
    let report = EstimationReport::new(&result, &path.labels).at("drift-estimator")?;

    cfg.graph = Some(graph);
    cfg.shape = Some(shape);
    write_doc(&args.out, header("estimate", seed, &cfg), "report", &report)
}

#[derive(serde::Deserialize)]
struct FitFile {
    report: EstimationReport,
}

fn forecast(args: ForecastArgs, mut cfg: RunConfig, seed: u64) -> Run {
    let path = read_path_file(&args.input, args.coarse_ratio).at("cli")?;
    let fit: FitFile = read_json(&args.fit).at("cli")?;
    let system = fit.report.system().at("grou-model")?;
    if let Some(h) = args.horizon {
        cfg.fit.horizon = h;
    }
    if args.from > path.len() {
        return Err(CliError::Usage(format!(
            "--from {} beyond path of length {}",
            args.from,
            path.len()
        )));
    }
    let rf = rolling_forecast_with(
        &path,
        &system,
        &fit.report.triplet,
        cfg.fit.horizon,
        args.from..path.len(),
    )
    .at("forecaster")?;
    let mut w = create(&args.out).at("cli")?;
    let mut h = header("forecast", seed, &cfg);
    h["fit"] = json!(args.fit.display().to_string());
    write_forecast_csv(&mut w, &path, &rf, &h).at("cli")?;
    finish(w, &args.out)
}

fn benchmark(args: BenchmarkArgs, mut cfg: RunConfig, seed: u64) -> Run {
    let mut study = match cfg.study.take() {
        Some(s) => {
            if args.jump_variance.is_some() {
                return Err(CliError::Usage(
                    "--jump-variance only applies to the built-in design".into(),
                ));
            }
            s
        }
        None => StudyConfig::predictive(args.jump_variance.unwrap_or(10.0), 1000, seed).at("benchmark-suite")?,
    };
    if let Some(n) = args.n_paths {
        study.n_paths = n;
    }
    if let Some(s) = args.scenario {
        study.scenario = s;
    }
    study.seed = seed;
    let table = monte_carlo_study(&study).at("benchmark-suite")?;
    cfg.study = Some(study);
    let h = header("benchmark", seed, &cfg);
    let mut w = create(&args.out).at("cli")?;
    write_study_csv(&mut w, &table, &h).at("cli")?;
    finish(w, &args.out)?;
    if let Some(p) = args.per_path {
        let mut w = create(&p).at("cli")?;
        write_header(&mut w, &h).at("cli")?;
        let io = |e: std::io::Error| CliError::Lib {
            module: "cli",
            err: GrouError::Format(e.to_string()),
        };
        writeln!(w, "path,model,rmse,dir_acc").map_err(io)?;
        for (i, reports) in table.per_path.iter().enumerate() {
            for r in reports {
                writeln!(w, "{i},{},{},{}", r.model.name(), fmt_f64(r.rmse), fmt_f64(r.dir_acc)).map_err(io)?;
            }
        }
        finish(w, &p)?;
    }
    Ok(())
}

fn ingest(input: &Path, cfg: &RunConfig) -> Result<IngestReport, CliError> {
    let report = ingest_prices(input, &cfg.ingest).at("mrc-pipeline")?;
    if report.bad_rows > 0 {
        log::warn!(
            "{}: skipped {} malformed rows of {}",
            input.display(),
            report.bad_rows,
            report.rows_read
        );
    }
    Ok(report)
}

fn select(args: SelectArgs, mut cfg: RunConfig, seed: u64) -> Run {
    cfg.search.seed = seed;
    if let Some(prices) = &args.prices {
        let ingested = ingest(prices, &cfg)?;
        let (_, report) = run_pipeline(&ingested.prices, &cfg.pipeline()).at("mrc-pipeline")?;
        let h = header("select", seed, &cfg);
        if let Some(t) = &args.table {
            let mut w = create(t).at("cli")?;
            write_forecast_table_csv(&mut w, &report.table, &h).at("cli")?;
            finish(w, t)?;
        }
        return write_doc(&args.out, h, "pipeline", &report);
    }
    let input = args.input.as_ref().expect("clap requires --input or --prices");
    let path = read_path_file(input, args.coarse_ratio).at("cli")?;
    if let Some(graph) = cfg.graph.clone() {
        let outcome = select_model(&path, &graph, &cfg.search.shapes, &cfg.search.selection).at("model-selection")?;
        return write_doc(&args.out, header("select", seed, &cfg), "selection", &outcome);
    }
    let n = match args.n_vertices {
        Some(n) => n,
        None => {
            let k = path.k();
            let n = ((1.0 + (1.0 + 8.0 * k as f64).sqrt()) / 2.0).round() as usize;
            if n * (n - 1) / 2 != k {
                return Err(CliError::Usage(format!(
                    "{k} series are not the pairs of any vertex set; pass --n-vertices or a graph"
                )));
            }
            n
        }
    };
    let outcome = joint_network_model_search(&path, n, &cfg.search).at("model-selection")?;
    write_doc(&args.out, header("select", seed, &cfg), "search", &outcome)
}

fn mrc(args: MrcArgs, mut cfg: RunConfig, seed: u64) -> Run {
    if let Some(f) = args.frequency {
        cfg.ingest.frequency = f;
    }
    if let Some(w) = args.window {
        cfg.rolling.window = w;
    }
    if let Some(s) = args.step {
        cfg.rolling.step = s;
    }
    if args.corr {
        cfg.mrc.is_corr = true;
    }
    let ingested = ingest(&args.input, &cfg)?;
    let r = &cfg.rolling;
    let series = rolling_mrc(&ingested.prices, &cfg.mrc, r.window, r.step, r.min_obs).at("mrc-pipeline")?;
    let h = header("mrc", seed, &cfg);
    let mut w = create(&args.out).at("cli")?;
    write_mrc_csv(&mut w, &series, &h).at("cli")?;
    finish(w, &args.out)?;
    if let Some(p) = &args.path_out {
        let path = series
            .to_path(r.mesh.unwrap_or(r.step / 3600.0), r.coarse_ratio)
            .at("mrc-pipeline")?;
        let mut w = create(p).at("cli")?;
        write_path_csv(&mut w, &path, &h).at("cli")?;
        finish(w, p)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Run {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p).at("cli")?,
        None => RunConfig::default(),
    };
    let env_seed = match std::env::var("GROU_SEED") {
        Ok(s) => Some(
            s.trim()
                .parse::<u64>()
                .map_err(|e| CliError::Usage(format!("GROU_SEED=`{s}`: {e}")))?,
        ),
        Err(_) => None,
    };
    let seed = cli.seed.or(cfg.seed).or(env_seed).unwrap_or(0);
    let threads = cli.threads.or(cfg.threads);
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let cfg = RunConfig {
        seed: Some(seed),
        threads: None,
        ..cfg
    };
    match cli.command {
        Command::Simulate(a) => simulate(a, cfg, seed),
        Command::Estimate(a) => estimate(a, cfg, seed),
        Command::Forecast(a) => forecast(a, cfg, seed),
        Command::Benchmark(a) => benchmark(a, cfg, seed),
        Command::Select(a) => select(a, cfg, seed),
        Command::Mrc(a) => mrc(a, cfg, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
