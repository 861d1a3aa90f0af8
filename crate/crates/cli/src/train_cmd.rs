//! `hno train`: one run directory per config.

use std::fs;
use std::io::Write;
use std::path::Path;

use hno::data::{Dataset, Metadata};
use hno::deeponet::build_model;
use hno::train::{load_checkpoint, train, MetricLog, TrainConfig, TrainData, TrainState};

use crate::config::{prepare, RunConfig};
use crate::fail::{runtime, usage, CliResult, Failure};

pub const RESOLVED: &str = "config.toml";
pub const METRICS: &str = "metrics.csv";
pub const TIMING_LOG: &str = "train.log";

/// Checkpoint metadata keys describing how inputs were prepared.
pub const META_COORDS: &str = "data.coordinates";
pub const META_TIMES: &str = "data.time_index";

pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    if !path.exists() {
        return Err(Failure::Usage(format!(
            "dataset {} does not exist",
            path.display()
        )));
    }
    Dataset::read(path).map_err(usage(&format!("reading dataset {}", path.display())))
}

pub fn run(config: &Path, resume: bool, stop_after: Option<usize>) -> CliResult<()> {
    let cfg = RunConfig::read(config)?;
    let d = read_dataset(&cfg.data.path)?;
    let p = prepare(&cfg, d)?;
    let out = &cfg.output;
    let resolved_text = p.resolved.to_toml();
    fs::create_dir_all(out).map_err(runtime(&format!("creating {}", out.display())))?;
    let resolved_path = out.join(RESOLVED);
    let mut log = MetricLog::new(p.data.output_channels.clone());
    let (mut model, mut state) = if resume {
        let old =
            fs::read_to_string(&resolved_path).map_err(usage("resume: reading previous config"))?;
        if old != resolved_text {
            return Err(Failure::Usage(format!(
                "resume: resolved config differs from {}",
                resolved_path.display()
            )));
        }
        let ck =
            load_checkpoint(out.join("last.hno")).map_err(usage("resume: loading last.hno"))?;
        if ck.model.config() != &p.model {
            return Err(Failure::Usage(
                "resume: checkpoint model differs from config".into(),
            ));
        }
        if let Ok(text) = fs::read_to_string(out.join(METRICS)) {
            let old = MetricLog::from_csv(&text).map_err(usage("resume: reading metrics"))?;
            log.rows = old
                .rows
                .into_iter()
                .filter(|r| r.epoch <= ck.state.epoch)
                .collect();
        }
        (ck.model, ck.state)
    } else {
        fs::write(&resolved_path, &resolved_text).map_err(runtime("writing resolved config"))?;
        for stale in [TIMING_LOG, METRICS, "best.hno", "last.hno"] {
            let _ = fs::remove_file(out.join(stale));
        }
        let m = build_model(&p.model, cfg.train.seed).map_err(usage("building model"))?;
        let tc = train_config(&cfg, None);
        let s = TrainState::new(&m, &tc);
        (m, s)
    };
    let data = TrainData::new(&p.data, p.val.as_ref()).map_err(usage("encoding data"))?;
    let mut meta = Metadata::new();
    meta.set("run.name", &cfg.name);
    meta.set(META_COORDS, p.resolved.data.coordinates.unwrap_or(false));
    meta.set(META_TIMES, hno::data::container::join(&p.time_index));
    let mut timing = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out.join(TIMING_LOG))
        .map_err(runtime("opening train.log"))?;
    let last = stop_after.map_or(state.total_epochs, |s| s.min(state.total_epochs));
    // One epoch per call so the CSV on disk always matches last.hno.
    while state.epoch < last {
        let mut tc = train_config(&cfg, Some(state.epoch + 1));
        tc.meta = meta.clone();
        let rows = train(&mut model, &data, &mut state, &tc).map_err(runtime("training"))?;
        for r in &rows.rows {
            writeln!(timing, "epoch {} seconds {:.3}", r.epoch, r.seconds)
                .map_err(runtime("writing train.log"))?;
        }
        log.extend(rows).map_err(runtime("training"))?;
        fs::write(out.join(METRICS), log.to_csv()).map_err(runtime("writing metrics"))?;
    }
    if let Some(r) = log.rows.last() {
        println!(
            "{}: epoch {}/{} train_rel {:.4} val_rel {}",
            cfg.name,
            r.epoch,
            state.total_epochs,
            r.train_rel,
            r.val_rel.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    Ok(())
}

fn train_config(cfg: &RunConfig, stop_after: Option<usize>) -> TrainConfig {
    TrainConfig {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        lr: cfg.train.lr,
        weight_decay: cfg.train.weight_decay,
        seed: cfg.train.seed,
        checkpoint_dir: Some(cfg.output.clone()),
        stop_after,
        meta: Metadata::new(),
    }
}
