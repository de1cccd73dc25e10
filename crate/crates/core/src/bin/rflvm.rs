use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use rflvm::config::{pairs_to_ini, parse_ini};
use rflvm::data::{
    generate_s_curve_raw, make_holdout_mask, read_labels, read_mask, read_matrix, s_curve_labels, sample_gp_observations,
    standardize_columns, write_labels, write_mask, write_matrix, write_report, write_text, EmissionOptions, ObservationMatrix,
};
use rflvm::engine::{Model, PosteriorTrace, RunConfig};
use rflvm::error::{Error, ErrorClass};
use rflvm::eval::{affine_align_r2, heldout_mse, knn_cv_accuracy, EvalReport, KnnOptions};
use rflvm::likelihoods::LikelihoodKind;
use rflvm::rng::RngStreams;
use rflvm::selfcheck::run_selfcheck;
use rflvm::tracefile::{diagnostics_csv, write_trace};

#[derive(Parser)]
#[command(name = "rflvm", version, about = "Random feature latent variable models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an S-curve GP dataset.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler on a dataset.
    Fit(FitArgs),
    /// Compute r2, mse or knn reports.
    Evaluate(EvaluateArgs),
    /// Run the invariant battery.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    j: usize,
    /// Latent dimension; the S-curve is two-dimensional.
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value = "gaussian")]
    kind: String,
    #[arg(long, default_value_t = 1.0)]
    lengthscale: f64,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of entries held out (0 disables the mask).
    #[arg(long, default_value_t = 0.0)]
    holdout: f64,
    #[arg(long, default_value_t = 10)]
    trials: u64,
    #[arg(long, short, default_value = "data")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset directory written by `simulate` (Y.csv, optional mask.csv and trials.csv).
    #[arg(long, default_value = "data")]
    data: PathBuf,
    #[arg(long, short, default_value = "fit")]
    out: PathBuf,
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thinning: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k0: Option<usize>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any configuration key, as key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// r2, mse or knn.
    metric: String,
    /// Ground truth: X_true for r2, Y for mse.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Estimated latents (r2, knn) or predictions (mse); repeatable for replicates.
    #[arg(long = "estimate")]
    estimates: Vec<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 1)]
    neighbours: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; printed to stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn require(path: &Path) -> rflvm::Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(usage(format!("missing input file {}", path.display())))
    }
}

fn simulate(args: &SimulateArgs) -> rflvm::Result<()> {
    let kind: LikelihoodKind = args.kind.parse()?;
    if args.d != 2 {
        return Err(usage("the S-curve generator has latent dimension 2"));
    }
    if !(0.0..1.0).contains(&args.holdout) {
        return Err(usage("holdout must lie in [0, 1)"));
    }
    if args.n < 2 || args.j == 0 {
        return Err(usage("need n >= 2 and j >= 1"));
    }
    let streams = RngStreams::new(args.seed);
    let mut rng = streams.stream("simulate");
    let (mut x, t) = generate_s_curve_raw(args.n, args.noise, &mut rng)?;
    standardize_columns(&mut x);
    let options = EmissionOptions { lengthscale: args.lengthscale, trials: args.trials, ..Default::default() };
    let (obs, truth) = sample_gp_observations(&x, args.j, kind, &options, &mut rng)?;
    fs::create_dir_all(&args.out)?;
    write_matrix(&args.out.join("Y.csv"), obs.y())?;
    write_matrix(&args.out.join("x_true.csv"), &truth.x_true)?;
    write_matrix(&args.out.join("f_true.csv"), &truth.f_true)?;
    write_labels(&args.out.join("labels.csv"), &s_curve_labels(&t))?;
    if let Some(trials) = obs.trials() {
        write_matrix(&args.out.join("trials.csv"), trials)?;
    }
    if args.holdout > 0.0 {
        let mask = make_holdout_mask(args.n, args.j, args.holdout, &mut streams.stream("holdout"))?;
        write_mask(&args.out.join("mask.csv"), &mask)?;
    }
    let echo = vec![
        ("kind".to_string(), kind.to_string()),
        ("n".to_string(), args.n.to_string()),
        ("j".to_string(), args.j.to_string()),
        ("d".to_string(), args.d.to_string()),
        ("lengthscale".to_string(), args.lengthscale.to_string()),
        ("noise".to_string(), args.noise.to_string()),
        ("seed".to_string(), args.seed.to_string()),
        ("holdout".to_string(), args.holdout.to_string()),
        ("trials".to_string(), args.trials.to_string()),
    ];
    write_text(&args.out.join("config.ini"), &pairs_to_ini(&echo))?;
    eprintln!("wrote {}x{} {} dataset to {}", args.n, args.j, kind, args.out.display());
    Ok(())
}

fn effective_config(args: &FitArgs) -> rflvm::Result<RunConfig> {
    let mut pairs = match &args.config {
        Some(path) => parse_ini(&fs::read_to_string(require(path)?)?)?,
        None => Vec::new(),
    };
    let mut flag = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((k.to_string(), v));
        }
    };
    flag("kind", args.kind.clone());
    flag("iterations", args.iterations.map(|v| v.to_string()));
    flag("burn_in", args.burn_in.map(|v| v.to_string()));
    flag("thinning", args.thinning.map(|v| v.to_string()));
    flag("m", args.m.map(|v| v.to_string()));
    flag("d", args.d.map(|v| v.to_string()));
    flag("k0", args.k0.map(|v| v.to_string()));
    flag("alpha0", args.alpha0.map(|v| v.to_string()));
    flag("seed", args.seed.map(|v| v.to_string()));
    for s in &args.sets {
        let (k, v) = s.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{s}'")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    RunConfig::from_pairs(&pairs)
}

fn load_dataset(dir: &Path, kind: LikelihoodKind) -> rflvm::Result<ObservationMatrix> {
    let y = read_matrix(require(&dir.join("Y.csv"))?)?;
    let mask_path = dir.join("mask.csv");
    let mask = if mask_path.exists() { Some(read_mask(&mask_path)?) } else { None };
    let trials_path = dir.join("trials.csv");
    let trials = if kind == LikelihoodKind::Binomial && trials_path.exists() { Some(read_matrix(&trials_path)?) } else { None };
    let labels_path = dir.join("labels.csv");
    let labels = if labels_path.exists() { Some(read_labels(&labels_path)?) } else { None };
    ObservationMatrix::from_parts(y, kind, mask, labels, trials)
}

fn write_fit_outputs(dir: &Path, trace: &PosteriorTrace, cfg: &RunConfig, chain: usize) -> rflvm::Result<()> {
    fs::create_dir_all(dir)?;
    write_text(&dir.join("config.ini"), &pairs_to_ini(&cfg.to_pairs()))?;
    write_trace(&dir.join("trace.txt"), trace, cfg, chain)?;
    write_matrix(&dir.join("x_mean.csv"), &trace.x_mean)?;
    write_text(&dir.join("diagnostics.csv"), &diagnostics_csv(trace))?;
    if let Some(p) = &trace.prediction_mean {
        write_matrix(&dir.join("predictions.csv"), p)?;
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct ChainSummary {
    chain: usize,
    seed: u64,
    records: usize,
    mean_log_likelihood: f64,
    mean_mh_acceptance: f64,
    clamp_events: u64,
    digest: String,
}

#[derive(serde::Serialize)]
struct MergedReport {
    chains: Vec<ChainSummary>,
    config: Vec<(String, String)>,
}

fn summarize(chain: usize, cfg: &RunConfig, trace: &PosteriorTrace) -> ChainSummary {
    let n = trace.records.len().max(1) as f64;
    ChainSummary {
        chain,
        seed: cfg.seed,
        records: trace.records.len(),
        mean_log_likelihood: trace.records.iter().map(|r| r.log_likelihood).sum::<f64>() / n,
        mean_mh_acceptance: trace.records.iter().map(|r| r.mh_acceptance).sum::<f64>() / n,
        clamp_events: trace.diagnostics.iter().map(|d| d.clamp_events).sum(),
        digest: format!("{:016x}", trace.digest()),
    }
}

fn fit(args: &FitArgs) -> rflvm::Result<()> {
    if args.chains == 0 {
        return Err(usage("--chains must be at least 1"));
    }
    let cfg = effective_config(args)?;
    let obs = load_dataset(&args.data, cfg.kind)?;
    fs::create_dir_all(&args.out)?;
    write_text(&args.out.join("config.ini"), &pairs_to_ini(&cfg.to_pairs()))?;
    let chain_configs: Vec<RunConfig> =
        (0..args.chains).map(|c| RunConfig { seed: cfg.seed.wrapping_add(c as u64), ..cfg.clone() }).collect();
    let quiet = args.quiet || args.chains > 1;
    let results: Vec<rflvm::Result<PosteriorTrace>> = std::thread::scope(|scope| {
        let handles: Vec<_> = chain_configs
            .iter()
            .map(|c| {
                let obs = &obs;
                scope.spawn(move || {
                    let every = (c.iterations / 20).max(1);
                    Model::new(c.clone())?.run_with(obs, |d, _| {
                        if !quiet && d.iteration % every == 0 {
                            eprintln!(
                                "iter {:>6}  ll {:>14.4}  mh {:.3}  K {:>3}  alpha {:.3}",
                                d.iteration, d.log_likelihood, d.mh_acceptance, d.num_clusters, d.alpha
                            );
                        }
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain worker panicked")).collect()
    });
    let mut summaries = Vec::new();
    for (c, (result, ccfg)) in results.into_iter().zip(&chain_configs).enumerate() {
        let trace = result?;
        let dir = if args.chains == 1 { args.out.clone() } else { args.out.join(format!("chain-{c}")) };
        write_fit_outputs(&dir, &trace, ccfg, c)?;
        summaries.push(summarize(c, ccfg, &trace));
    }
    if args.chains > 1 {
        write_report(&args.out.join("merged.json"), &MergedReport { chains: summaries, config: cfg.to_pairs() })?;
    }
    eprintln!("wrote fit outputs to {}", args.out.display());
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> rflvm::Result<()> {
    if args.estimates.is_empty() {
        return Err(usage("evaluate needs at least one --estimate file"));
    }
    let estimates: Vec<DMatrix<f64>> =
        args.estimates.iter().map(|p| read_matrix(require(p)?)).collect::<rflvm::Result<_>>()?;
    let echo = vec![
        ("metric".to_string(), args.metric.clone()),
        ("truth".to_string(), args.truth.as_ref().map_or(String::new(), |p| p.display().to_string())),
        ("estimates".to_string(), args.estimates.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(";")),
        ("mask".to_string(), args.mask.as_ref().map_or(String::new(), |p| p.display().to_string())),
        ("labels".to_string(), args.labels.as_ref().map_or(String::new(), |p| p.display().to_string())),
        ("folds".to_string(), args.folds.to_string()),
        ("neighbours".to_string(), args.neighbours.to_string()),
        ("repeats".to_string(), args.repeats.to_string()),
        ("seed".to_string(), args.seed.to_string()),
    ];
    let report = match args.metric.as_str() {
        "r2" => {
            let truth = read_matrix(require(args.truth.as_deref().ok_or_else(|| usage("r2 needs --truth"))?)?)?;
            let values = estimates.iter().map(|e| affine_align_r2(&truth, e).map(|f| f.r2)).collect::<rflvm::Result<_>>()?;
            EvalReport::from_values("r2", values, echo)?
        }
        "mse" => {
            let truth = read_matrix(require(args.truth.as_deref().ok_or_else(|| usage("mse needs --truth"))?)?)?;
            let mask = read_mask(require(args.mask.as_deref().ok_or_else(|| usage("mse needs --mask"))?)?)?;
            let values = estimates.iter().map(|e| heldout_mse(&truth, e, &mask)).collect::<rflvm::Result<_>>()?;
            EvalReport::from_values("mse", values, echo)?
        }
        "knn" => {
            let labels = read_labels(require(args.labels.as_deref().ok_or_else(|| usage("knn needs --labels"))?)?)?;
            let options = KnnOptions { folds: args.folds, neighbours: args.neighbours, repeats: args.repeats };
            let mut rng = RngStreams::new(args.seed).stream("knn");
            let mut values = Vec::new();
            for e in &estimates {
                values.extend(knn_cv_accuracy(e, &labels, options, &mut rng)?.values);
            }
            EvalReport::from_values("knn", values, echo)?
        }
        other => return Err(usage(format!("unknown metric '{other}' (supported: r2, mse, knn)"))),
    };
    match &args.out {
        Some(path) => write_report(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    eprintln!("{}: mean {} (se {})", report.metric, report.mean, report.standard_error);
    Ok(())
}

fn selfcheck(seed: u64) -> rflvm::Result<bool> {
    let report = run_selfcheck(seed);
    for c in &report.checks {
        println!("{:<20} {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    if !report.passed() {
        eprintln!("selfcheck failed: {}", report.failures().join(", "));
    }
    Ok(report.passed())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numeric => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Fit(a) => fit(a).map(|_| true),
        Command::Evaluate(a) => evaluate(a).map(|_| true),
        Command::Selfcheck { seed } => selfcheck(*seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
