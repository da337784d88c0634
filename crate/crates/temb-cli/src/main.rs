//! Command-line front end: embed point sets, audit distortions, run the
//! classification and tube experiments, and evaluate sizing formulas.
//!
//! Exit codes: 0 on success, 2 for usage/config problems, 3 when the
//! constraint solver reports an infeasible system, 1 otherwise.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use temb::bench::{
    run_experiment, run_tube_experiment, write_curves_csv, write_report_json, ExperimentConfig,
    TubeConfig,
};
use temb::data::{
    load_desk_dataset, read_csv_matrix, sample_manifold, write_csv_matrix, ManifoldKind,
};
use temb::embed::{FittedEmbedder, Strategy};
use temb::jl::{
    convex_hull_distortion, embedding_distortion, inner_product_distortion, map_distortion,
    unit_secants, EmbeddingMap,
};
use temb::solver::SolverOptions;
use temb::theory::{
    complexity_alpha, complexity_beta, embed_dim_manifold, embed_dim_width, mc_gaussian_width,
    secant_width_bound, ManifoldParams,
};

#[derive(Parser)]
#[command(
    name = "temb",
    version,
    about = "Terminal embeddings of finite point sets: fit, audit, and benchmark"
)]
struct Cli {
    /// Worker threads (0 keeps the library default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed query points against a train set.
    Embed(EmbedArgs),
    /// Run the compressive classification protocol on the image corpus.
    Classify(ClassifyArgs),
    /// Audit distortions of a seeded Gaussian map on a point set.
    Distort(DistortArgs),
    /// Run the noisy two-circle distance experiment.
    Tube(TubeArgs),
    /// Evaluate manifold complexity and embedding-dimension formulas.
    Theory(TheoryArgs),
    /// Estimate the Gaussian width of a point set by Monte Carlo.
    Width(WidthArgs),
    /// Sample a synthetic manifold to CSV.
    GenData(GenDataArgs),
}

#[derive(Args)]
struct EmbedArgs {
    /// Train points, one CSV row per point.
    #[arg(long)]
    train: PathBuf,
    /// Query points, same width as the train rows.
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value = "TERMINAL_NONLINEAR")]
    strategy: Strategy,
    /// Target dimension of the linear map (output has m + 1 columns).
    #[arg(long, default_value_t = 16)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Constraint slack scale.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Where to write the embedded queries (CSV).
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON file of per-query solver outcomes.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for report.json and curves.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated list of map dimensions.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',')]
    strategy: Option<Vec<Strategy>>,
    /// Zero out the timing column for byte-reproducible outputs.
    #[arg(long)]
    no_timings: bool,
    /// Full-scale preset: 600 train and 100 test rows per class.
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct DistortArgs {
    /// Points to audit, one CSV row per point.
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value_t = 16)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Random convex-hull samples on top of the vertex sweep.
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

#[derive(Args)]
struct TubeArgs {
    /// JSON tube config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Where to write the JSON report (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    /// Intrinsic dimension of the model manifold.
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    volume: f64,
    #[arg(long, default_value_t = 0.0)]
    boundary_volume: f64,
    #[arg(long)]
    reach: f64,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// Absolute constant in the dimension bounds.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Failure probability in the width-based bound.
    #[arg(long, default_value_t = 0.5)]
    prob: f64,
}

#[derive(Args)]
struct WidthArgs {
    /// Points whose width to estimate, one CSV row per point.
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.5)]
    prob: f64,
}

#[derive(Args)]
struct GenDataArgs {
    /// circle | sphere | swiss-roll | sparse-union
    #[arg(long)]
    kind: String,
    #[arg(long)]
    n: usize,
    /// Ambient dimension.
    #[arg(long)]
    ambient: usize,
    /// Uniform ball-noise radius.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Circle center, comma-separated coordinates.
    #[arg(long, value_delimiter = ',')]
    center: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2)]
    intrinsic_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    height: f64,
    #[arg(long, default_value_t = 3)]
    sparsity: usize,
    #[arg(long, default_value_t = 4)]
    subspaces: usize,
}

fn load_json_config<T: serde::de::DeserializeOwned>(path: &PathBuf) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let parsed = serde_json::from_str(&text).map_err(temb::Error::Serde)?;
    Ok(parsed)
}

fn cmd_embed(args: EmbedArgs) -> anyhow::Result<()> {
    let train = read_csv_matrix(&args.train)?;
    let queries = read_csv_matrix(&args.queries)?;
    let embedder = FittedEmbedder::fit(
        args.strategy,
        train,
        args.m,
        args.seed,
        args.epsilon,
        SolverOptions::default(),
    )?;
    let mut out = ndarray::Array2::zeros((queries.nrows(), embedder.output_dim()));
    let mut stats = Vec::with_capacity(queries.nrows());
    for (i, q) in queries.rows().into_iter().enumerate() {
        let (row, s) = embedder.embed_with_stats(q)?;
        out.row_mut(i).assign(&row);
        stats.push(s);
    }
    write_csv_matrix(&args.out, &out)?;
    if let Some(path) = args.stats {
        write_report_json(&path, &stats)?;
    }
    eprintln!(
        "embedded {} queries with {} into dimension {}",
        queries.nrows(),
        args.strategy,
        embedder.output_dim()
    );
    Ok(())
}

fn cmd_classify(args: ClassifyArgs) -> anyhow::Result<()> {
    let mut config: ExperimentConfig = match &args.config {
        Some(path) => load_json_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(m) = args.m {
        config.m_list = m;
    }
    if let Some(epsilon) = args.epsilon {
        config.epsilon = epsilon;
    }
    if let Some(strategies) = args.strategy {
        config.strategies = strategies;
    }
    if args.no_timings {
        config.record_timings = false;
    }
    if args.full {
        config.per_class_train = 600;
        config.per_class_test = 100;
    }
    let (corpus, provenance) = load_desk_dataset()?;
    let report = run_experiment(&config, &corpus, &provenance)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_report_json(&args.out.join("report.json"), &report)?;
    write_curves_csv(&args.out.join("curves.csv"), &report.records)?;
    for r in &report.records {
        eprintln!(
            "{} m={}: accuracy {:.2}%, nonlinearity {:.2}%",
            r.strategy, r.m, r.accuracy, r.mean_nonlinearity
        );
    }
    eprintln!("wrote {}", args.out.join("curves.csv").display());
    Ok(())
}

fn cmd_distort(args: DistortArgs) -> anyhow::Result<()> {
    let points = read_csv_matrix(&args.points)?;
    let map = EmbeddingMap::gaussian(args.m, points.ncols(), args.seed)?;
    let secants = unit_secants(&points, 0.0)?;
    let report = serde_json::json!({
        "points": points.nrows(),
        "ambient_dim": points.ncols(),
        "m": args.m,
        "seed": args.seed,
        "secant_count": secants.nrows(),
        "secant_map_distortion": map_distortion(&map, &secants)?,
        "pairwise_distortion": embedding_distortion(&map, &points)?,
        "inner_product_distortion": inner_product_distortion(&map, &points)?,
        "convex_hull_distortion":
            convex_hull_distortion(&map, &secants, args.samples, args.seed)?,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_tube(args: TubeArgs) -> anyhow::Result<()> {
    let mut config: TubeConfig = match &args.config {
        Some(path) => load_json_config(path)?,
        None => TubeConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(m) = args.m {
        config.m = m;
    }
    if let Some(epsilon) = args.epsilon {
        config.epsilon = epsilon;
    }
    let report = run_tube_experiment(&config)?;
    match args.out {
        Some(path) => write_report_json(&path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    eprintln!(
        "accuracy {:.2}%, {} distance violations over {} pairs",
        report.accuracy, report.violations, report.pairs_checked
    );
    Ok(())
}

fn cmd_theory(args: TheoryArgs) -> anyhow::Result<()> {
    let params = ManifoldParams {
        intrinsic_dim: args.dim,
        volume: args.volume,
        boundary_volume: args.boundary_volume,
        reach: args.reach,
    };
    let alpha = complexity_alpha(&params)?;
    let beta = complexity_beta(alpha, args.dim)?;
    let width = secant_width_bound(beta, args.dim)?;
    let m_manifold = embed_dim_manifold(beta, args.dim, args.epsilon, args.c)?;
    let m_width = embed_dim_width(width, args.epsilon, args.c, args.prob)?;
    let report = serde_json::json!({
        "params": params,
        "epsilon": args.epsilon,
        "c": args.c,
        "prob": args.prob,
        "alpha": alpha,
        "beta": beta,
        "secant_width_bound": width,
        "embed_dim_manifold": m_manifold,
        "embed_dim_width": m_width,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_width(args: WidthArgs) -> anyhow::Result<()> {
    let points = read_csv_matrix(&args.points)?;
    let width = mc_gaussian_width(&points.view(), args.trials, args.seed)?;
    let m = embed_dim_width(width.max(0.0), args.epsilon, args.c, args.prob)?;
    let report = serde_json::json!({
        "points": points.nrows(),
        "trials": args.trials,
        "seed": args.seed,
        "width": width,
        "epsilon": args.epsilon,
        "c": args.c,
        "prob": args.prob,
        "embed_dim_width": m,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_gen_data(args: GenDataArgs) -> anyhow::Result<()> {
    let kind = match args.kind.as_str() {
        "circle" => ManifoldKind::Circle {
            radius: args.radius,
            center: args.center.unwrap_or_default(),
        },
        "sphere" => ManifoldKind::Sphere {
            radius: args.radius,
            intrinsic_dim: args.intrinsic_dim,
        },
        "swiss-roll" => ManifoldKind::SwissRoll { height: args.height },
        "sparse-union" => ManifoldKind::SparseUnion {
            sparsity: args.sparsity,
            n_subspaces: args.subspaces,
        },
        other => {
            return Err(temb::Error::InvalidConfig(format!(
                "unknown manifold kind {other:?}; expected circle, sphere, swiss-roll, \
                 or sparse-union"
            ))
            .into())
        }
    };
    let points = sample_manifold(&kind, args.n, args.ambient, args.delta, args.seed)?;
    write_csv_matrix(&args.out, &points)?;
    eprintln!("wrote {} x {} points to {}", points.nrows(), points.ncols(), args.out.display());
    Ok(())
}

/// 2 for config problems, 3 for infeasible constraint systems, 1 else.
fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<temb::Error>() {
            return match e {
                temb::Error::Infeasible { .. } | temb::Error::StructurallyInfeasible { .. } => 3,
                temb::Error::InvalidConfig(_) | temb::Error::Serde(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Embed(args) => cmd_embed(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Distort(args) => cmd_distort(args),
        Command::Tube(args) => cmd_tube(args),
        Command::Theory(args) => cmd_theory(args),
        Command::Width(args) => cmd_width(args),
        Command::GenData(args) => cmd_gen_data(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
