//! Run configuration files.

use std::path::{Path, PathBuf};

use hno::data::{log_time_sample, Dataset, NormMode, Normalizer};
use hno::deeponet::ModelConfig;
use hno::experiments::{darcy_model, transient_model, with_coordinates, Arch};
use serde::{Deserialize, Serialize};

use crate::fail::{usage, CliResult, Failure};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    /// Directory for the resolved config, metrics and checkpoints.
    pub output: PathBuf,
    pub data: DataSection,
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    /// The held-out samples of the dataset.
    Test,
    /// The trailing `holdout` fraction of the training samples.
    Holdout,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Statistics stored in the dataset file.
    Dataset,
    Meanstd,
    UnitGaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    /// Keep this many log-spaced report steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_select: Option<usize>,
    #[serde(default = "default_validation")]
    pub validation: Validation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout: Option<f64>,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    /// Append normalised x and y channels to the inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<bool>,
}

fn default_validation() -> Validation {
    Validation::Test
}

fn default_normalization() -> Normalization {
    Normalization::Dataset
}

/// Either a named preset or a full model configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `fno-mlp`, `fno-kan`, `kan`, `mlp` (Darcy models) or `transient`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ModelConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Seeds both initialisation and shuffling.
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 200,
            batch_size: 8,
            lr: 1e-3,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(usage(&format!("reading config {}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(usage("parsing config"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialise")
    }
}

/// Training-ready data plus the settings that produced it.
pub struct Prepared {
    pub data: Dataset,
    pub val: Option<Dataset>,
    pub resolved: RunConfig,
    pub model: ModelConfig,
    /// Report steps kept from the file.
    pub time_index: Vec<usize>,
}

/// Applies time sampling, coordinates and normalisation, resolves the model
/// and checks it against the data.
pub fn prepare(cfg: &RunConfig, d: Dataset) -> CliResult<Prepared> {
    let bad = |m: String| Failure::Usage(format!("config: {m}"));
    let preset = match &cfg.model.preset {
        Some(p) => Some(p.as_str()),
        None => None,
    };
    let arch = match preset {
        None | Some("transient") => None,
        Some(p) => Some(p.parse::<Arch>().map_err(usage("config"))?),
    };
    let mut resolved = cfg.clone();
    let time_index = match cfg.data.n_select {
        Some(s) if s != d.n_t() => log_time_sample(d.n_t(), s).map_err(usage("time sampling"))?,
        _ => (0..d.n_t()).collect(),
    };
    let mut d = if time_index.len() == d.n_t() {
        d
    } else {
        d.select_times(&time_index)
            .map_err(usage("time sampling"))?
    };
    resolved.data.n_select = Some(time_index.len());
    let coords = cfg
        .data
        .coordinates
        .unwrap_or(matches!(arch, Some(a) if !a.has_fno()));
    resolved.data.coordinates = Some(coords);
    if coords {
        d = with_coordinates(&d).map_err(usage("coordinates"))?;
    }
    let mode = match cfg.data.normalization {
        Normalization::Dataset => None,
        Normalization::Meanstd => Some(NormMode::MeanStd),
        Normalization::UnitGaussian => Some(NormMode::UnitGaussian),
    };
    if let Some(mode) = mode {
        let tr = d.train();
        d.input_norm = Some(Normalizer::fit(mode, &tr.inputs, 1).map_err(usage("normalization"))?);
        d.target_norm =
            Some(Normalizer::fit(mode, &tr.targets, 1).map_err(usage("normalization"))?);
    }
    let grid = d.grid();
    let model = match (&cfg.model.config, preset, arch) {
        (Some(m), None, _) => m.clone(),
        (None, Some("transient"), _) => transient_model(
            grid,
            d.n_t(),
            d.input_channels.len(),
            d.output_channels.len(),
        ),
        (None, Some(_), Some(a)) => {
            if d.n_t() != 1 || grid[0] != grid[1] || grid[2] != 1 {
                return Err(bad(format!(
                    "preset `{a}` expects a square 2-D field with one step, data grid {grid:?} with {} steps",
                    d.n_t()
                )));
            }
            darcy_model(a, grid[0])
        }
        (Some(_), Some(_), _) => {
            return Err(bad(
                "model: give either `preset` or `config`, not both".into()
            ))
        }
        _ => return Err(bad("model: need `preset` or `config`".into())),
    };
    model.validate().map_err(usage("model"))?;
    let want_in = [
        model.n_c_in,
        model.extents[0],
        model.extents[1],
        model.extents[2],
    ];
    let have_in = &d.inputs.shape()[1..];
    let want_out = [model.n_c_out, model.n_t];
    let have_out = &d.targets.shape()[1..3];
    if have_in != want_in || have_out != want_out {
        return Err(bad(format!(
            "model expects inputs {want_in:?} and targets [C, T] = {want_out:?}, data has inputs {have_in:?} and targets {have_out:?}"
        )));
    }
    resolved.model = ModelSection {
        preset: None,
        config: Some(model.clone()),
    };
    let (data, val) = match cfg.data.validation {
        Validation::Test => {
            let te = d.test();
            (d.train(), (!te.is_empty()).then_some(te))
        }
        Validation::None => (d.train(), None),
        Validation::Holdout => {
            let f = cfg
                .data
                .holdout
                .ok_or_else(|| bad("data: validation = \"holdout\" needs `holdout`".into()))?;
            if !(0.0..1.0).contains(&f) {
                return Err(bad(format!("data: holdout {f} must lie in [0, 1)")));
            }
            let tr = d.train();
            let n_val = (tr.len() as f64 * f).round() as usize;
            if n_val >= tr.len() {
                return Err(bad(format!("data: holdout {f} leaves no training samples")));
            }
            let cut = tr.len() - n_val;
            let head = tr.select(&(0..cut).collect::<Vec<_>>());
            let tail = tr.select(&(cut..tr.len()).collect::<Vec<_>>());
            (head, (n_val > 0).then_some(tail))
        }
    };
    if cfg.data.validation != Validation::Holdout && cfg.data.holdout.is_some() {
        return Err(bad("data: `holdout` needs validation = \"holdout\"".into()));
    }
    if data.is_empty() {
        return Err(bad("data: no training samples".into()));
    }
    if cfg.train.batch_size == 0 || cfg.train.batch_size > data.len() {
        return Err(bad(format!(
            "train: batch size {} for {} training samples",
            cfg.train.batch_size,
            data.len()
        )));
    }
    Ok(Prepared {
        data,
        val,
        resolved,
        model,
        time_index,
    })
}
