use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hotspot_core::data::{records_of, SurveyDataset};
use hotspot_core::evaluation::{
    kmeans_curves, nn_curves, run_sweep, split_samples, topic_curves, CurveSet, EvalSettings, SplitRegime,
    Strategy, SweepConfig, DEFAULT_HOTSPOTS, DEFAULT_TARGET_COUNT,
};
use hotspot_core::grid::{GridConfig, DEFAULT_CELL_SIZE_M};
use hotspot_core::io::{
    load_counts_csv, load_latlon_csv, load_model, save_model, write_counts_csv, write_field_csv,
    write_hotspots_csv, write_json, write_pr_csv,
};
use hotspot_core::prediction::{extract_hotspots, median_smooth, HotspotConfig};
use hotspot_core::synth::{generate_synthetic, SynthSpec};
use hotspot_core::topic::{batch_train, Hyperparameters, Initialization, TrainedModel, DEFAULT_INIT_TOPICS};
use hotspot_core::{evaluation, Error, Result};

#[derive(Parser)]
#[command(name = "hotspot", version, about = "Community-model hotspot prediction for survey count data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a community model and write its snapshot.
    Train(TrainArgs),
    /// Predict a target taxon's field and hotspots on new samples.
    Predict(PredictArgs),
    /// Score one strategy on a train/test split.
    Evaluate(EvaluateArgs),
    /// Grid search over hyperparameters and smoothing widths.
    Sweep(SweepArgs),
    /// Write a synthetic survey.
    Synth(SynthArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Counts CSV with projected coordinates, or lat/lon with --ref-lat.
    #[arg(long)]
    input: PathBuf,
    /// Read `lat_deg,lon_deg` columns and project about this latitude.
    #[arg(long)]
    ref_lat: Option<f64>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 1e-5)]
    gamma: f64,
    /// Spatial cell side, meters.
    #[arg(long, default_value_t = DEFAULT_CELL_SIZE_M)]
    cell_size: f64,
    /// Temporal cell side, seconds; 0 ignores time.
    #[arg(long, default_value_t = 0.0)]
    cell_time: f64,
    #[arg(long, default_value_t = 1)]
    depth: u32,
    #[arg(long, default_value_t = 100)]
    sweeps: usize,
    /// Communities of the uniform start; 0 starts from one online pass.
    #[arg(long, default_value_t = DEFAULT_INIT_TOPICS)]
    init_topics: usize,
}

impl ModelArgs {
    fn hyperparameters(&self) -> Result<Hyperparameters> {
        Hyperparameters::new(self.alpha, self.beta, self.gamma)
    }

    fn grid(&self) -> Result<GridConfig> {
        GridConfig::new(self.cell_size, self.cell_time, self.depth)
    }

    fn settings(&self) -> Result<EvalSettings> {
        Ok(EvalSettings {
            grid: self.grid()?,
            train_sweeps: self.sweeps,
            init: Initialization::from_topic_count(self.init_topics),
            ..EvalSettings::default()
        })
    }
}

#[derive(Args)]
struct SeedArg {
    #[arg(long, env = "HOTSPOT_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Train on the training part of this split only.
    #[arg(long)]
    regime: Option<SplitRegime>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out_model: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    target_taxon: usize,
    /// Median-filter square side, meters.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Hotspot threshold on the smoothed probability.
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    #[arg(long, default_value_t = 20)]
    test_sweeps: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out_field: PathBuf,
    #[arg(long)]
    out_hotspots: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    regime: SplitRegime,
    #[arg(long)]
    strategy: Strategy,
    /// Comma-separated taxon ids; defaults to the most frequent taxa.
    #[arg(long, value_delimiter = ',')]
    targets: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_HOTSPOTS)]
    n_hotspots: usize,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Trained snapshot: scored directly by `topic`, its K reused by `kmeans`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Cluster count for `kmeans`.
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    train: ModelArgs,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out_pr: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    regime: SplitRegime,
    /// JSON grid; defaults to the standard grid.
    #[arg(long)]
    grid_file: Option<PathBuf>,
    /// Evaluate at most this many configurations, chosen by seed.
    #[arg(long)]
    budget: Option<usize>,
    #[command(flatten)]
    train: ModelArgs,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out_report: PathBuf,
    /// Curves of the best settings per strategy.
    #[arg(long)]
    out_pr: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON spec; defaults to the standard fixture.
    #[arg(long)]
    spec_file: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out_csv: PathBuf,
    /// Generating distributions and fixture statistics.
    #[arg(long)]
    out_truth: Option<PathBuf>,
}

fn load(input: &InputArgs) -> Result<SurveyDataset> {
    let (dataset, report) = match input.ref_lat {
        Some(lat) => load_latlon_csv(&input.input, lat)?,
        None => load_counts_csv(&input.input)?,
    };
    if report.dropped_empty > 0 {
        eprintln!("dropped {} rows with no detections", report.dropped_empty);
    }
    Ok(dataset)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

fn train_model(
    dataset: &SurveyDataset,
    samples: &[hotspot_core::data::SampleDistribution],
    args: &ModelArgs,
    seed: u64,
) -> Result<TrainedModel> {
    let h = args.hyperparameters()?;
    let out = batch_train(
        &records_of(samples),
        dataset.vocab_size(),
        &h,
        args.grid()?,
        args.sweeps,
        Initialization::from_topic_count(args.init_topics),
        seed,
    )?;
    out.state.freeze(h, dataset.vocab_names.clone())
}

fn train(args: TrainArgs) -> Result<()> {
    let dataset = load(&args.input)?;
    let samples = match args.regime {
        Some(regime) => split_samples(&dataset.samples, regime)?.0,
        None => dataset.samples.clone(),
    };
    let model = train_model(&dataset, &samples, &args.model, args.seed.seed)?;
    save_model(&model, &args.out_model)?;
    println!("trained K={} on {} observations", model.num_topics(), model.n_observations);
    Ok(())
}

fn check_vocab(model: &TrainedModel, dataset: &SurveyDataset) -> Result<()> {
    if model.vocab_names != dataset.vocab_names {
        return Err(Error::input("input taxa do not match the model vocabulary"));
    }
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let dataset = load(&args.input)?;
    check_vocab(&model, &dataset)?;
    let config = HotspotConfig {
        sigma_m: args.sigma,
        tau: args.tau,
        target_taxon: args.target_taxon,
    };
    config.validate()?;
    let raw = evaluation::topic_raw_field(&model, &dataset.samples, args.target_taxon, args.test_sweeps, args.seed.seed)?;
    let field = median_smooth(&raw, args.sigma, &model.grid);
    let hotspots = extract_hotspots(&field, args.tau);
    write_field_csv(&field, &args.out_field)?;
    write_hotspots_csv(&hotspots, &args.out_hotspots)?;
    println!("{} cells, {} hotspots", field.len(), hotspots.len());
    Ok(())
}

fn default_targets(dataset: &SurveyDataset, targets: Vec<usize>) -> Vec<usize> {
    if targets.is_empty() {
        dataset.taxa_by_frequency().into_iter().take(DEFAULT_TARGET_COUNT).collect()
    } else {
        targets
    }
}

fn check_targets(targets: &[usize], vocab_size: usize) -> Result<()> {
    match targets.iter().find(|&&v| v >= vocab_size) {
        Some(v) => Err(Error::input(format!(
            "taxon id out of range: {v} (vocabulary has {vocab_size} taxa)"
        ))),
        None => Ok(()),
    }
}

fn print_curves(label: &str, curves: &CurveSet, names: &[String]) {
    println!("{label} auc={:.6}", curves.auc);
    for (v, auc) in &curves.per_taxon_auc {
        println!("  {} auc={auc:.6}", names[*v]);
    }
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let dataset = load(&args.input)?;
    let targets = default_targets(&dataset, args.targets);
    check_targets(&targets, dataset.vocab_size())?;
    let settings = EvalSettings {
        n_hotspots: args.n_hotspots,
        ..args.train.settings()?
    };
    let (train, test) = split_samples(&dataset.samples, args.regime)?;
    let seed = args.seed.seed;
    let model = match &args.model {
        Some(path) => {
            let m = load_model(path)?;
            check_vocab(&m, &dataset)?;
            Some(m)
        }
        None => None,
    };
    let fitted = |model: Option<TrainedModel>| -> Result<TrainedModel> {
        match model {
            Some(m) => Ok(m),
            None => train_model(&dataset, &train, &args.train, seed),
        }
    };
    let (curves, label) = match args.strategy {
        Strategy::Topic => {
            let m = fitted(model)?;
            let c = topic_curves(&m, &test, &targets, args.sigma, &settings, seed)?;
            (c, format!("topic K={}", m.num_topics()))
        }
        Strategy::Nn => (nn_curves(&train, &test, &targets, args.sigma, &settings)?, "nn".to_string()),
        Strategy::Kmeans => {
            let (k, source) = match (args.k, model) {
                (Some(k), _) => (k, "flag"),
                (None, Some(m)) => (m.num_topics(), "model"),
                (None, None) => (fitted(None)?.num_topics(), "trained model"),
            };
            if k == 0 {
                return Err(Error::input("k must be at least 1"));
            }
            let c = kmeans_curves(&train, &test, &targets, k, args.sigma, &settings, seed)?;
            (c, format!("kmeans K={k} (from {source})"))
        }
    };
    write_pr_csv(&[(args.strategy, &curves)], &dataset.vocab_names, &args.out_pr)?;
    print_curves(&label, &curves, &dataset.vocab_names);
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let dataset = load(&args.input)?;
    let mut config = match &args.grid_file {
        Some(path) => read_json::<SweepConfig>(path)?,
        None => SweepConfig::standard(Vec::new()),
    };
    config.target_taxa = default_targets(&dataset, config.target_taxa);
    let settings = args.train.settings()?;
    let strategies = [Strategy::Topic, Strategy::Nn, Strategy::Kmeans];
    let report = run_sweep(&dataset, args.regime, &config, &settings, &strategies, args.seed.seed, args.budget)?;
    write_json(&report, &args.out_report)?;
    if let Some(path) = &args.out_pr {
        let curves: Vec<(Strategy, &CurveSet)> = report.best_curves.iter().map(|(s, c)| (*s, c)).collect();
        write_pr_csv(&curves, &dataset.vocab_names, path)?;
    }
    let b = &report.best;
    println!(
        "best topic alpha={} beta={} gamma={} sigma={} K={} auc={:.6}",
        b.alpha, b.beta, b.gamma, b.sigma, b.k_learned, b.auc
    );
    for s in &report.best_baselines {
        println!("best {} sigma={} auc={:.6}", s.strategy, s.sigma, s.auc);
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct Truth<'a> {
    phi: &'a [Vec<f64>],
    theta: &'a [Vec<f64>],
    stats: &'a hotspot_core::synth::FixtureStats,
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = match &args.spec_file {
        Some(path) => read_json::<SynthSpec>(path)?,
        None => SynthSpec::standard(args.seed.seed),
    };
    let out = generate_synthetic(&spec)?;
    write_counts_csv(&out.dataset, &args.out_csv)?;
    if let Some(path) = &args.out_truth {
        write_json(
            &Truth {
                phi: &out.phi,
                theta: &out.theta,
                stats: &out.stats,
            },
            path,
        )?;
    }
    println!(
        "{} samples, {} detections",
        out.dataset.samples.len(),
        out.dataset.records.len()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
