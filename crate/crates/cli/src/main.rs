mod grid;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use acpl_core::data::holdout_split;
use acpl_core::report::{write_json, write_run_dir, write_seed_run};
use acpl_core::trainer::{comparison_csv, AblationSetup};
use acpl_core::{
    generate_synthetic, load_csv_auto, run_ablation, run_acpl, split_pools, write_csv, AcplError, BaseLearner,
    DataPools, Dataset, ErrorClass, ExperimentConfig, LabelledEntry, SyntheticSpec, UnlabelledEntry,
};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "acpl", version, about = "Semi-supervised training with anti-curriculum pseudo-labelling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset from a JSON class specification.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one model and write a run directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        label_fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a grid of variants over several seeds and write a comparison table.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// info-asp, strategies, components, baselines, or a grid file.
        #[arg(long, default_value = "info-asp")]
        grid: String,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
}

#[derive(clap::Args)]
struct Common {
    /// Training CSV. Rows with empty label columns go to the unlabelled pool.
    #[arg(long)]
    data: PathBuf,
    /// Held-out test CSV; a stratified split of the training data is used otherwise.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set k=20. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Run(AcplError),
}

impl From<AcplError> for Failure {
    fn from(e: AcplError) -> Self {
        match &e {
            AcplError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Run(e),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match init_workers().and_then(|()| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            })
        }
    }
}

fn init_workers() -> CliResult<()> {
    let Ok(raw) = std::env::var("ACPL_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("ACPL_WORKERS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Generate { spec, out, seed } => generate(&spec, &out, seed),
        Command::Train {
            common,
            label_fraction,
            seed,
        } => train(&common, label_fraction, seed),
        Command::Ablate { common, grid, seeds } => ablate(&common, &grid, &seeds),
    }
}

fn generate(spec_path: &Path, out: &Path, seed: u64) -> CliResult<()> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| AcplError::io(spec_path, e))?;
    let spec: SyntheticSpec = serde_json::from_str(&text).map_err(|e| AcplError::Spec(e.to_string()))?;
    let ds = generate_synthetic(&spec, seed)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| AcplError::io(parent, e))?;
    }
    write_csv(out, &ds)?;
    eprintln!("wrote {} samples to {}", ds.len(), out.display());
    Ok(())
}

fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for o in &common.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    Ok(cfg)
}

fn input_paths(common: &Common) -> Vec<&Path> {
    let mut paths = vec![common.data.as_path()];
    paths.extend(common.test.as_deref());
    paths.extend(common.config.as_deref());
    paths
}

/// Training data and test entries. Partly labelled files keep their own split.
struct Inputs {
    train: Dataset,
    test: Vec<LabelledEntry>,
    partial: bool,
}

fn load_inputs(common: &Common, cfg: &ExperimentConfig, seed: u64) -> CliResult<Inputs> {
    let data = load_csv_auto(&common.data, cfg.task_kind)?;
    let partial = data.samples.iter().any(|s| s.label.is_none());
    let (train, test) = match &common.test {
        Some(path) => {
            let test = load_csv_auto(path, cfg.task_kind)?;
            if test.num_classes != data.num_classes || (!test.is_empty() && test.dim() != data.dim()) {
                return Err(AcplError::Schema("test file does not match the training data layout".into()).into());
            }
            (data, test.labelled_entries()?)
        }
        None if partial => (data, Vec::new()),
        None => holdout_split(&data, cfg.test_fraction, seed)?,
    };
    Ok(Inputs { train, test, partial })
}

fn pools_from_partial(ds: &Dataset) -> CliResult<DataPools> {
    let mut labelled = Vec::new();
    let mut unlabelled = Vec::new();
    for s in &ds.samples {
        match &s.label {
            Some(label) => labelled.push(LabelledEntry {
                id: s.id,
                features: s.features.clone(),
                label: label.clone(),
            }),
            None => unlabelled.push(UnlabelledEntry::new(s.id, s.features.clone(), None)),
        }
    }
    Ok(DataPools::new(labelled, unlabelled, ds.num_classes, ds.task_kind, ds.dim())?)
}

fn train(common: &Common, label_fraction: Option<f64>, seed: Option<u64>) -> CliResult<()> {
    let mut cfg = load_config(common)?;
    if let Some(f) = label_fraction {
        cfg.labelled_fraction = f;
    }
    if let Some(s) = seed {
        cfg.acpl = cfg.acpl.with_seed(s);
    }
    cfg.validate()?;
    let seed = cfg.acpl.seed;
    RunManifest::new("train", &cfg.to_kv(), vec![seed], &input_paths(common), &common.out)?.write(&common.out)?;

    let inputs = load_inputs(common, &cfg, seed)?;
    let pools = if inputs.partial {
        pools_from_partial(&inputs.train)?
    } else {
        split_pools(&inputs.train, cfg.labelled_fraction, cfg.stratified, seed)?
    };
    let arch = cfg.architecture(inputs.train.dim(), inputs.train.num_classes);
    let learner = BaseLearner::new(arch, cfg.acpl.train.weight_init, seed)?;
    let outcome = run_acpl(pools, learner, &cfg.acpl, &inputs.test)?;
    write_run_dir(&common.out, &cfg, &outcome)?;

    let auc = outcome
        .metrics
        .as_ref()
        .and_then(|m| m.macro_auc)
        .map_or("n/a".to_string(), |a| format!("{a:.4}"));
    eprintln!(
        "{} stages, stop: {:?}, test macro AUC {auc}, output in {}",
        outcome.records.len(),
        outcome.stop_reason,
        common.out.display()
    );
    Ok(())
}

fn ablate(common: &Common, grid_name: &str, seeds: &[u64]) -> CliResult<()> {
    if seeds.is_empty() {
        return Err(Failure::Usage("--seeds needs at least one seed".into()));
    }
    let cfg = load_config(common)?;
    cfg.validate()?;
    let variants = grid::resolve(grid_name, &cfg)?;
    let mut inputs = input_paths(common);
    if !grid::BUILT_IN.contains(&grid_name) {
        inputs.push(Path::new(grid_name));
    }
    RunManifest::new("ablate", &cfg.to_kv(), seeds.to_vec(), &inputs, &common.out)?.write(&common.out)?;

    let loaded = load_inputs(common, &cfg, cfg.acpl.seed)?;
    if loaded.partial {
        return Err(AcplError::Split("ablation needs a fully labelled training file".into()).into());
    }
    let setup = AblationSetup {
        train: &loaded.train,
        test: &loaded.test,
        labelled_fraction: cfg.labelled_fraction,
        stratified: cfg.stratified,
        arch: cfg.architecture(loaded.train.dim(), loaded.train.num_classes),
    };
    let rows = run_ablation(&variants, &setup, seeds)?;

    std::fs::write(common.out.join("comparison.csv"), comparison_csv(&rows))
        .map_err(|e| AcplError::io(common.out.join("comparison.csv"), e))?;
    write_json(&common.out.join("config.json"), &cfg)?;
    for row in &rows {
        for run in &row.runs {
            write_seed_run(&common.out.join(&row.variant).join(format!("seed{}", run.seed)), run)?;
        }
        eprintln!(
            "{:<20} auc {:.4} ± {:.4}  f1 {:.4}",
            row.variant, row.mean_auc, row.std_auc, row.mean_f1
        );
    }
    Ok(())
}
