use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gols::analysis::uniform_grid;
use gols::harness::{
    emit_outputs, run_repeated, write_scan_outputs, ExperimentConfig, ExperimentData, ReferencePoint,
    ScanSetup,
};
use gols::model::hidden_units_heuristic;
use gols::{Error, Result};

#[derive(Parser)]
#[command(name = "gols", version, about = "GOLS-I learning rates for mini-batch MLP training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with one or more optimizers and write loss curves.
    Train(Box<TrainArgs>),
    /// Directional scans and SNN-GPP / local-minimum densities.
    Scan(ScanArgs),
    /// Write a reference point file for `scan --reference`.
    Reference {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        #[arg(long = "direction-scale", default_value = "sum")]
        direction_scale: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the hidden-unit heuristic for a dataset shape.
    Heuristic {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1.5)]
        cr: f64,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// key = value file; flags given here override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    /// comma-separated list, e.g. sgd,adam
    #[arg(long)]
    optimizer: Option<String>,
    /// golsi, small, medium, large or a constant
    #[arg(long)]
    step: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    /// full, static, dynamic or epoch
    #[arg(long = "batch-mode")]
    batch_mode: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "hidden-layers")]
    hidden_layers: Option<String>,
    #[arg(long = "hidden-units")]
    hidden_units: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    /// mse or ce
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    beta1: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long)]
    history: Option<String>,
    #[arg(long = "log-every")]
    log_every: Option<String>,
    #[arg(long = "paper-literal")]
    paper_literal: bool,
    #[arg(long = "standard-bias-correction")]
    standard_bias_correction: bool,
    /// evaluate F'(0) afresh instead of reusing the accepted probe
    #[arg(long = "fresh-derivative")]
    fresh_derivative: bool,
    #[arg(long = "halt-on-nan")]
    halt_on_nan: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// dataset manifest; taken from `--reference` when omitted
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long = "grid-start", default_value_t = 0.0)]
    grid_start: f64,
    #[arg(long = "grid-step", default_value_t = 0.002)]
    grid_step: f64,
    #[arg(long = "grid-count", default_value_t = 101)]
    grid_count: usize,
    #[arg(long = "batch-sizes", value_delimiter = ',', default_value = "10,38,76")]
    batch_sizes: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// reference point file; otherwise the seed's initial point after `--warmup` iterations
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    warmup: usize,
    /// mean or sum: which full-batch error the steepest descent direction belongs to
    #[arg(long = "direction-scale", default_value = "sum")]
    direction_scale: String,
    #[arg(long = "hidden-layers", default_value_t = 1)]
    hidden_layers: usize,
    #[arg(long, default_value = "mse")]
    loss: String,
    #[arg(long, default_value = "scan_out")]
    out: PathBuf,
}

fn train_configs(args: TrainArgs) -> Result<Vec<ExperimentConfig>> {
    let mut base = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let pairs = [
        ("dataset", &args.dataset),
        ("step", &args.step),
        ("iters", &args.iters),
        ("batch", &args.batch),
        ("batch-mode", &args.batch_mode),
        ("runs", &args.runs),
        ("seed", &args.seed),
        ("hidden-layers", &args.hidden_layers),
        ("hidden-units", &args.hidden_units),
        ("activation", &args.activation),
        ("loss", &args.loss),
        ("beta1", &args.beta1),
        ("momentum", &args.momentum),
        ("history", &args.history),
        ("log-every", &args.log_every),
    ];
    for (key, value) in pairs {
        if let Some(v) = value {
            base.apply(key, v)?;
        }
    }
    base.paper_literal |= args.paper_literal;
    base.standard_bias_correction |= args.standard_bias_correction;
    base.reuse_derivative &= !args.fresh_derivative;
    base.halt_on_nan |= args.halt_on_nan;
    if let Some(out) = args.out {
        base.out = Some(out);
    }
    if base.dataset.as_os_str().is_empty() {
        return Err(Error::Config("no dataset given".into()));
    }
    let kinds = match &args.optimizer {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<Vec<_>>>()?,
        None => vec![base.optimizer],
    };
    let configs: Vec<ExperimentConfig> = kinds
        .into_iter()
        .map(|optimizer| ExperimentConfig { optimizer, ..base.clone() })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

fn train(args: TrainArgs) -> Result<()> {
    let configs = train_configs(args)?;
    let data = ExperimentData::load(&configs[0].dataset)?;
    let mut results = Vec::new();
    for cfg in &configs {
        let rep = run_repeated(cfg, &data)?;
        println!(
            "{}: initial train {:.6}, final train {:.6}, mean k {:.3}",
            cfg.label(),
            rep.curves.initial_train,
            rep.mean_final_train(),
            rep.mean_k()
        );
        results.push(rep);
    }
    let out = configs[0].out.clone().unwrap_or_else(|| PathBuf::from("train_out"));
    for path in emit_outputs(&results, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn scan(args: ScanArgs) -> Result<()> {
    let reference = args.reference.as_deref().map(ReferencePoint::load).transpose()?;
    let dataset = match (&args.dataset, &reference) {
        (Some(d), _) => d.clone(),
        (None, Some(r)) => r.dataset.clone(),
        (None, None) => return Err(Error::Config("scan needs --dataset or --reference".into())),
    };
    let data = ExperimentData::load(&dataset)?;
    let cfg = ExperimentConfig {
        dataset,
        hidden_layers: args.hidden_layers,
        loss: args.loss.parse()?,
        ..ExperimentConfig::default()
    };
    cfg.validate()?;
    let setup = match &reference {
        Some(r) => r.setup(&cfg, &data)?,
        None => ScanSetup::from_warmup(&cfg, &data, args.seed, args.warmup, args.direction_scale.parse()?)?,
    };
    let grid = uniform_grid(args.grid_start, args.grid_step, args.grid_count);
    let studies = setup.study(&grid, &args.batch_sizes, args.runs, args.seed)?;
    for s in &studies {
        println!(
            "|B|={} ({}): SNN-GPP bins {}, local-min bins {}",
            s.batch_size,
            s.mode,
            s.snngpp.occupied_bins(),
            s.local_min.occupied_bins()
        );
    }
    for path in write_scan_outputs(&studies, &args.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn reference(dataset: PathBuf, seed: u64, warmup: usize, scale: &str, out: PathBuf) -> Result<()> {
    let data = ExperimentData::load(&dataset)?;
    let cfg = ExperimentConfig {
        dataset,
        ..ExperimentConfig::default()
    };
    ReferencePoint::generate(&cfg, &data, seed, warmup, scale.parse()?)?.save(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => train(*args),
        Command::Scan(args) => scan(args),
        Command::Reference {
            dataset,
            seed,
            warmup,
            direction_scale,
            out,
        } => reference(dataset, seed, warmup, &direction_scale, out),
        Command::Heuristic { m, d, k, cr } => {
            println!("{}", hidden_units_heuristic(m, d, k, cr));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
