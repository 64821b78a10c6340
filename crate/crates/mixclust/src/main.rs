//! Command-line entry points: fit one model, grid-search over models,
//! simulate replicate datasets, and score clusterings.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use mixclust::em::{FitConfig, InitMethod};
use mixclust::error::Error;
use mixclust::latent::derive_seed;
use mixclust::par::{map_indexed, with_jobs};
use mixclust::params::CovModel;
use mixclust::simulate::GeneratorSpec;

#[derive(Parser)]
#[command(
    name = "mixclust",
    version,
    about = "Model-based clustering of mixed continuous, ordinal and nominal data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one covariance structure with a fixed number of clusters
    Fit(FitArgs),
    /// Fit a grid of models and cluster counts and pick the best BIC
    Select(SelectArgs),
    /// Draw replicate datasets from a generator specification
    Simulate(SimulateArgs),
    /// Compare two partitions (adjusted Rand index and cross-tabulation)
    Score(ScoreArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Data CSV (header row, cells per the schema)
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON declaring each column's kind
    #[arg(long)]
    schema: PathBuf,
    /// Covariance structure: EII, VII, EEI, VEI, EVI or VVI
    #[arg(long)]
    model: CovModel,
    /// Number of clusters
    #[arg(long = "G", visible_alias = "g")]
    g: usize,
    /// Maximum EM iterations
    #[arg(long, default_value_t = 500)]
    iters: usize,
    /// Monte Carlo draws per (cluster, nominal variable) per iteration
    #[arg(long, default_value_t = 2000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Initial partition method: kmeans, hierarchical or random
    #[arg(long, default_value = "kmeans")]
    init: InitMethod,
    /// Convergence window (running-mean length, in iterations)
    #[arg(long, default_value_t = 100)]
    window: usize,
    /// Relative tolerance on windowed parameter means
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    /// True labels CSV; when given, the fit is scored against it
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output path prefix
    #[arg(long, default_value = "fit")]
    out: PathBuf,
    /// Also write responsibilities into the result JSON
    #[arg(long, default_value_t = false)]
    store_tau: bool,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Comma-separated covariance structures (default: all six)
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<CovModel>>,
    #[arg(long, default_value_t = 1)]
    gmin: usize,
    #[arg(long, default_value_t = 4)]
    gmax: usize,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 2000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "kmeans")]
    init: InitMethod,
    #[arg(long, default_value_t = 100)]
    window: usize,
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    #[arg(long, default_value = "select")]
    out: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Generator specification JSON
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 1)]
    n_replicates: usize,
    /// Master seed override (default: the seed inside the spec)
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "sim")]
    out_dir: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    /// First label CSV (one label per row, optional header)
    #[arg(long)]
    labels_a: PathBuf,
    /// Second label CSV
    #[arg(long)]
    labels_b: PathBuf,
    /// Optional JSON output path
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Fit(args) => run(cmd_fit(&args)),
        Command::Select(args) => run(cmd_select(&args)),
        Command::Simulate(args) => run(cmd_simulate(&args)),
        Command::Score(args) => run(cmd_score(&args)),
    };
    std::process::exit(code);
}

fn run(result: mixclust::Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit 2 for usage/validation problems, 1 for runtime failures.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidSchema(_)
        | Error::UnknownColumn(_)
        | Error::MissingColumn(_)
        | Error::OutOfRangeCode { .. }
        | Error::NonNumericCell { .. }
        | Error::MissingCell { .. }
        | Error::DegenerateLevel { .. }
        | Error::InvalidParameter(_)
        | Error::LengthMismatch(_, _)
        | Error::Json(_) => 2,
        _ => 1,
    }
}

fn sha256_file(path: &Path) -> mixclust::Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn write_manifest(
    path: &Path,
    command: &str,
    config: serde_json::Value,
    seed: u64,
    inputs: &[&Path],
    started: Instant,
) -> mixclust::Result<()> {
    let mut hashes = serde_json::Map::new();
    for input in inputs {
        hashes.insert(
            input.display().to_string(),
            serde_json::Value::String(sha256_file(input)?),
        );
    }
    let manifest = serde_json::json!({
        "command": command,
        "config": config,
        "seed": seed,
        "input_sha256": hashes,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn read_labels(path: &Path) -> mixclust::Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<usize>() {
            Ok(v) => out.push(v),
            Err(_) if idx == 0 => {} // header row
            Err(_) => {
                return Err(Error::InvalidParameter(format!(
                    "{}: line {} is not a label: '{line}'",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{}: no labels found",
            path.display()
        )));
    }
    Ok(out)
}

fn write_labels(path: &Path, labels: &[usize]) -> mixclust::Result<()> {
    let mut text = String::from("label\n");
    for l in labels {
        text.push_str(&format!("{l}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> mixclust::Result<()> {
    let started = Instant::now();
    let data = mixclust::load_dataset(&args.data, &args.schema)?;
    let layout = mixclust::build_layout(&data.schema);
    let config = FitConfig {
        model: args.model,
        n_clusters: args.g,
        max_iters: args.iters,
        mc_samples: args.mc_samples,
        seed: args.seed,
        init: args.init,
        window: args.window,
        tolerance: args.tol,
        averaging_window: args.window,
        store_tau: args.store_tau,
    };
    let result = with_jobs(args.jobs, || mixclust::fit(&data, &config))?;

    let mut json = result.to_json_value(&layout);
    if let Some(labels_path) = &args.labels {
        let truth = read_labels(labels_path)?;
        let ari = mixclust::adjusted_rand(&result.assignments, &truth)?;
        let (table, _, _) = mixclust::cross_tab(&truth, &result.assignments);
        json["score"] = serde_json::json!({"ari": ari, "cross_tab": table});
        println!("ARI vs provided labels: {ari:.4}");
    }
    fs::write(
        with_suffix(&args.out, ".json"),
        serde_json::to_string_pretty(&json)?,
    )?;
    let trace = fs::File::create(with_suffix(&args.out, "_trace.csv"))?;
    result.write_trace_csv(trace)?;
    let mut inputs: Vec<&Path> = vec![&args.data, &args.schema];
    if let Some(l) = &args.labels {
        inputs.push(l);
    }
    write_manifest(
        &with_suffix(&args.out, "_manifest.json"),
        "fit",
        serde_json::to_value(&config)?,
        args.seed,
        &inputs,
        started,
    )?;
    println!(
        "{} G={}: loglik {:.3}, BIC {:.3}, {} iterations, converged: {}",
        args.model, args.g, result.approx_loglik, result.bic, result.iterations, result.converged
    );
    Ok(())
}

fn cmd_select(args: &SelectArgs) -> mixclust::Result<()> {
    let started = Instant::now();
    if args.gmin < 1 || args.gmin > args.gmax {
        return Err(Error::InvalidParameter(format!(
            "invalid cluster range {}..={}",
            args.gmin, args.gmax
        )));
    }
    let data = mixclust::load_dataset(&args.data, &args.schema)?;
    let layout = mixclust::build_layout(&data.schema);
    let models = args
        .models
        .clone()
        .unwrap_or_else(|| CovModel::ALL.to_vec());
    let g_values: Vec<usize> = (args.gmin..=args.gmax).collect();
    let mut base = FitConfig::new(models[0], g_values[0]);
    base.max_iters = args.iters;
    base.mc_samples = args.mc_samples;
    base.seed = args.seed;
    base.init = args.init;
    base.window = args.window;
    base.tolerance = args.tol;
    base.averaging_window = args.window;

    let report = with_jobs(args.jobs, || {
        mixclust::grid_search(&data, &models, &g_values, &base)
    })?;

    print!("{}", report.format_table());
    let best = report.best_cell();
    println!("selected: {} with G={}", best.model, best.n_clusters);

    fs::write(
        with_suffix(&args.out, ".json"),
        serde_json::to_string_pretty(&report.to_json_value(&layout))?,
    )?;
    fs::write(with_suffix(&args.out, "_bic.txt"), report.format_table())?;
    write_manifest(
        &with_suffix(&args.out, "_manifest.json"),
        "select",
        serde_json::json!({
            "models": models,
            "g_values": g_values,
            "base": serde_json::to_value(&base)?,
        }),
        args.seed,
        &[&args.data, &args.schema],
        started,
    )?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> mixclust::Result<()> {
    let started = Instant::now();
    let text = fs::read_to_string(&args.spec)?;
    let spec = GeneratorSpec::from_json(&text)?;
    let master = args.seed.unwrap_or(spec.seed);
    if args.n_replicates == 0 {
        return Err(Error::InvalidParameter(
            "need at least one replicate".into(),
        ));
    }
    fs::create_dir_all(&args.out_dir)?;

    let replicates = with_jobs(args.jobs, || {
        map_indexed(args.n_replicates, |r| {
            let mut rep = spec.clone();
            rep.seed = if args.n_replicates == 1 && args.seed.is_none() {
                master
            } else {
                derive_seed(master, r as u64, 4, 0)
            };
            mixclust::simulate(&rep)
        })
    });

    let schema_json = serde_json::json!({ "columns": spec.schema });
    fs::write(
        args.out_dir.join("schema.json"),
        serde_json::to_string_pretty(&schema_json)?,
    )?;
    for (r, rep) in replicates.into_iter().enumerate() {
        let (data, labels) = rep?;
        let file = fs::File::create(args.out_dir.join(format!("rep_{r:03}.csv")))?;
        data.write_csv(file)?;
        write_labels(&args.out_dir.join(format!("rep_{r:03}_labels.csv")), &labels)?;
    }
    write_manifest(
        &args.out_dir.join("manifest.json"),
        "simulate",
        serde_json::json!({
            "spec": args.spec.display().to_string(),
            "n_replicates": args.n_replicates,
        }),
        master,
        &[&args.spec],
        started,
    )?;
    println!(
        "wrote {} replicate(s) of N={} to {}",
        args.n_replicates,
        spec.n,
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_score(args: &ScoreArgs) -> mixclust::Result<()> {
    let a = read_labels(&args.labels_a)?;
    let b = read_labels(&args.labels_b)?;
    let ari = mixclust::adjusted_rand(&a, &b)?;
    let (table, rows, cols) = mixclust::cross_tab(&a, &b);
    println!("ARI: {ari:.4}");
    println!("cross-tabulation (rows: {}, cols: {}):", args.labels_a.display(), args.labels_b.display());
    print!("      ");
    for c in &cols {
        print!("{c:>7}");
    }
    println!();
    for (i, r) in rows.iter().enumerate() {
        print!("{r:>6}");
        for j in 0..cols.len() {
            print!("{:>7}", table[i][j]);
        }
        println!();
    }
    if let Some(out) = &args.out {
        let json = serde_json::json!({
            "ari": ari,
            "cross_tab": table,
            "row_labels": rows,
            "col_labels": cols,
        });
        fs::write(out, serde_json::to_string_pretty(&json)?)?;
    }
    Ok(())
}
