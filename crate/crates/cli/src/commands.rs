//! Command implementations. Each returns the JSON summary line it prints.

use std::path::{Path, PathBuf};

use bfnn_core::experiment::{
    emit_csv, emit_plot, gain_at_target_se, read_csv, run_sweep, EvalReport, Method, ModelSet,
    ReportMeta,
};
use bfnn_core::nn::{
    count_flops, count_params, load_model, model_hash, save_model, train, TrainCondition,
};
use bfnn_core::rng::derive_seed;
use bfnn_core::{
    generate_dataset, sha256_hex, BfnnModel, ChannelDataset, EstimateSet, TrainingSet,
};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::{CliError, Command, Overrides};

pub const SPLITS: [&str; 3] = ["train", "val", "test"];
pub const DATASET_EXT: &str = "bfds";

pub fn dispatch(cmd: Command) -> Result<String, CliError> {
    let summary = match cmd {
        Command::Gen {
            opts,
            out,
            count_scale,
        } => gen(&opts, &out, count_scale)?,
        Command::Estimate { opts, data, out } => estimate(&opts, &data, &out)?,
        Command::Train {
            opts,
            train,
            val,
            train_est,
            val_est,
            perfect_csi,
            out,
            history,
        } => {
            let inputs = TrainInputs {
                train,
                val,
                train_est,
                val_est,
                perfect_csi,
            };
            train_cmd(&opts, &inputs, &out, history.as_deref())?
        }
        Command::Eval {
            opts,
            models,
            data,
            csv,
            svg,
            manifest,
            methods,
            allow_mixed,
        } => {
            let outputs = EvalOutputs { csv, svg, manifest };
            eval(&opts, &models, &data, &outputs, &methods, allow_mixed)?
        }
        Command::Flops { model, n_t, params } => flops(model.as_deref(), n_t, params)?,
        Command::Report {
            csv,
            svg,
            target_se,
        } => report(&csv, svg.as_deref(), target_se)?,
    };
    Ok(summary.to_string())
}

/// Loaded configuration: hash of the file (before flag overrides) and the effective values.
pub struct Loaded {
    pub config: RunConfig,
    pub config_hash: String,
}

pub fn load_config(opts: &Overrides) -> Result<Loaded, CliError> {
    let base = RunConfig::load(opts.config.as_deref())?;
    let config_hash = base.hash();
    let mut config = base;
    if let Some(p) = opts.pnr_db {
        config.estimator.pnr_db = p;
        config.sweep.pnr_list_db = vec![p];
    }
    if let Some(l) = opts.l_est {
        config.estimator.l_est = l;
        config.sweep.l_est_list = vec![l];
    }
    if let Some(g) = opts.grid_size {
        config.estimator.grid_size = g;
        config.sweep.grid_size = g;
    }
    if let Some(lr) = opts.lr {
        config.train.learning_rate = lr;
    }
    if let Some(b) = opts.batch_size {
        config.train.batch_size = b;
    }
    if let Some(e) = opts.epochs {
        config.train.epochs = e;
    }
    config.validate()?;
    Ok(Loaded {
        config,
        config_hash,
    })
}

pub fn split_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.{DATASET_EXT}"))
}

fn pnr_json(p: f64) -> Value {
    if p.is_finite() {
        json!(p)
    } else {
        json!("inf")
    }
}

fn gen(opts: &Overrides, out: &Path, count_scale: f64) -> Result<Value, CliError> {
    if !(count_scale.is_finite() && count_scale > 0.0) {
        return Err(CliError::Config(format!(
            "count scale must be positive, got {count_scale}"
        )));
    }
    let Loaded {
        config,
        config_hash,
    } = load_config(opts)?;
    let master = opts.seed.unwrap_or(config.seeds.data);
    let counts = config.counts.scaled(count_scale);
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    for (i, (split, count)) in SPLITS
        .iter()
        .zip([counts.train, counts.val, counts.test])
        .enumerate()
    {
        let mut ds = generate_dataset(&config.channel, derive_seed(master, i as u64), count)?;
        ds.provenance = Some(config_hash.clone());
        let path = split_path(out, split);
        ds.save(&path)?;
        files
            .push(json!({"split": split, "path": path, "count": count, "hash": ds.content_hash()}));
    }
    Ok(json!({"command": "gen", "config_hash": config_hash, "seed": master, "files": files}))
}

fn estimate(opts: &Overrides, data: &Path, out: &Path) -> Result<Value, CliError> {
    let Loaded {
        config,
        config_hash,
    } = load_config(opts)?;
    let ds = ChannelDataset::load(data)?;
    let seed = opts.seed.unwrap_or(config.seeds.estimate);
    let mut set = EstimateSet::generate(&ds, &config.estimator, seed)?;
    set.provenance = Some(config_hash.clone());
    set.save(out)?;
    Ok(json!({
        "command": "estimate",
        "config_hash": config_hash,
        "pnr_db": pnr_json(config.estimator.pnr_db),
        "l_est": config.estimator.l_est,
        "count": set.estimates.len(),
        "seed": seed,
        "path": out,
        "hash": set.content_hash(),
    }))
}

pub struct TrainInputs {
    pub train: PathBuf,
    pub val: PathBuf,
    pub train_est: Option<PathBuf>,
    pub val_est: Option<PathBuf>,
    pub perfect_csi: bool,
}

fn training_set(
    ds: &ChannelDataset,
    est_path: Option<&Path>,
    perfect: bool,
    config: &RunConfig,
    stream: u64,
) -> Result<TrainingSet, CliError> {
    if perfect {
        return Ok(TrainingSet::perfect_csi(ds)?);
    }
    let set = match est_path {
        Some(p) => {
            let set = EstimateSet::load(p)?;
            set.check_aligned(ds)?;
            set
        }
        None => EstimateSet::generate(
            ds,
            &config.estimator,
            derive_seed(config.seeds.estimate, stream),
        )?,
    };
    Ok(TrainingSet::from_estimates(ds, &set.estimates)?)
}

fn train_cmd(
    opts: &Overrides,
    inputs: &TrainInputs,
    out: &Path,
    history: Option<&Path>,
) -> Result<Value, CliError> {
    let Loaded {
        mut config,
        config_hash,
    } = load_config(opts)?;
    if let Some(s) = opts.seed {
        config.train.seed = s;
    }
    let train_ds = ChannelDataset::load(&inputs.train)?;
    let val_ds = ChannelDataset::load(&inputs.val)?;
    if train_ds.n_t() != val_ds.n_t() {
        return Err(CliError::Data(format!(
            "train n_t {} vs val n_t {}",
            train_ds.n_t(),
            val_ds.n_t()
        )));
    }
    let train_set = training_set(
        &train_ds,
        inputs.train_est.as_deref(),
        inputs.perfect_csi,
        &config,
        0,
    )?;
    let val_set = training_set(
        &val_ds,
        inputs.val_est.as_deref(),
        inputs.perfect_csi,
        &config,
        1,
    )?;

    let mut model = BfnnModel::new(train_ds.n_t(), config.seeds.init)?;
    model.meta.config_hash = Some(config_hash.clone());
    model.meta.condition = (!inputs.perfect_csi).then_some(TrainCondition {
        pnr_db: config.estimator.pnr_db,
        l_est: config.estimator.l_est,
    });
    let outcome = train(model, &train_set, &val_set, &config.train)?;
    save_model(&outcome.model, out)?;
    if let Some(h) = history {
        std::fs::write(
            h,
            serde_json::to_string_pretty(&outcome.history)
                .map_err(|e| CliError::Internal(e.to_string()))?,
        )?;
    }
    let best = outcome
        .best_epoch
        .and_then(|e| outcome.history.iter().find(|r| r.epoch == e))
        .map(|r| r.val_loss);
    Ok(json!({
        "command": "train",
        "config_hash": config_hash,
        "epochs": config.train.epochs,
        "best_epoch": outcome.best_epoch,
        "best_val_se": best.map(|l| -l),
        "perfect_csi": inputs.perfect_csi,
        "path": out,
        "hash": model_hash(&outcome.model),
    }))
}

pub struct EvalOutputs {
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

fn eval(
    opts: &Overrides,
    model_paths: &[PathBuf],
    data: &Path,
    outputs: &EvalOutputs,
    methods: &[String],
    allow_mixed: bool,
) -> Result<Value, CliError> {
    let Loaded {
        mut config,
        config_hash,
    } = load_config(opts)?;
    if let Some(s) = opts.seed {
        config.sweep.seeds.estimate = s;
    }
    if !methods.is_empty() {
        config.sweep.methods = methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<_, _>>()?;
    }
    if config.sweep.methods.contains(&Method::Bfnn) && model_paths.is_empty() {
        return Err(CliError::Config(
            "method bfnn needs at least one --model".into(),
        ));
    }
    let ds = ChannelDataset::load(data)?;
    let models = model_paths
        .iter()
        .map(load_model)
        .collect::<Result<Vec<_>, _>>()?;

    let mut origins: Vec<Option<String>> = vec![ds.provenance.clone()];
    for m in &models {
        if !origins.contains(&m.meta.config_hash) {
            origins.push(m.meta.config_hash.clone());
        }
    }
    if origins.len() > 1 && !allow_mixed {
        return Err(CliError::Data(format!(
            "inputs come from different configurations {origins:?}; pass --allow-mixed to accept"
        )));
    }

    config.sweep.test_count = config.sweep.test_count.min(ds.len());
    let report = run_sweep(&config.sweep, &ModelSet::new(models)?, &ds)?;
    emit_csv(&report, &outputs.csv)?;
    let csv_hash = sha256_hex(&std::fs::read(&outputs.csv)?);
    if let Some(svg) = &outputs.svg {
        emit_plot(&report, svg)?;
    }
    if let Some(path) = &outputs.manifest {
        let manifest = json!({
            "config_hash": config_hash,
            "config": config,
            "dataset": {"path": data, "hash": report.meta.dataset_hash},
            "models": model_paths.iter().zip(&report.meta.model_hashes)
                .map(|(p, h)| json!({"path": p, "hash": h})).collect::<Vec<_>>(),
            "estimate_seed": config.sweep.seeds.estimate,
            "csv": {"path": outputs.csv, "hash": csv_hash},
        });
        std::fs::write(
            path,
            serde_json::to_string_pretty(&manifest)
                .map_err(|e| CliError::Internal(e.to_string()))?,
        )?;
    }
    Ok(json!({
        "command": "eval",
        "config_hash": config_hash,
        "rows": report.rows.len(),
        "test_count": config.sweep.test_count,
        "csv": outputs.csv,
        "csv_hash": csv_hash,
        "mixed": origins.len() > 1,
    }))
}

fn flops(model: Option<&Path>, n_t: usize, params: bool) -> Result<Value, CliError> {
    let model = match model {
        Some(p) => load_model(p)?,
        None => BfnnModel::new(n_t, 0)?,
    };
    if params {
        for row in count_params(&model) {
            eprintln!("{:<8} {:>6} {:>8}", row.layer, row.output_dim, row.params);
        }
    }
    Ok(json!(count_flops(&model)))
}

fn report(csv: &Path, svg: Option<&Path>, target_se: f64) -> Result<Value, CliError> {
    let rows = read_csv(std::fs::File::open(csv)?)?;
    let report = EvalReport {
        rows,
        meta: ReportMeta {
            dataset_hash: String::new(),
            model_hashes: vec![],
            spec: Default::default(),
        },
    };
    if let Some(path) = svg {
        emit_plot(&report, path)?;
    }
    let mut conditions: Vec<TrainCondition> = Vec::new();
    for r in &report.rows {
        let c = TrainCondition {
            pnr_db: r.pnr_db,
            l_est: r.l_est,
        };
        if !conditions.contains(&c) {
            conditions.push(c);
        }
    }
    let gains: Vec<Value> = conditions
        .iter()
        .map(|&c| {
            let g =
                gain_at_target_se(&report, Method::Bfnn, Method::EgtOnEstimate, target_se, c).ok();
            json!({"pnr_db": pnr_json(c.pnr_db), "l_est": c.l_est, "gain_db": g})
        })
        .collect();
    Ok(
        json!({"command": "report", "rows": report.rows.len(), "target_se": target_se, "gains": gains}),
    )
}
