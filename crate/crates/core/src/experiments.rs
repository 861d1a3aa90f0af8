//! Desk-scale experiment definitions shared by the CLI and the acceptance
//! suite: the four hybrid architectures on Darcy flow and the transient
//! well-pattern problem.

use std::fmt;
use std::str::FromStr;

use crate::data::{Dataset, WellRole};
use crate::deeponet::{
    build_model, BranchConfig, BranchLayout, HybridModel, ModelConfig, TrunkConfig,
};
use crate::nn::{FnoConfig, KanConfig, MlpConfig};
use crate::tensor::{Activation, Tensor};
use crate::train::{
    channel_errors, linf_err, mean_sample_relative_l2, predict_decoded, train, MetricLog,
    TrainConfig, TrainData, TrainState,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arch {
    FnoMlp,
    FnoKan,
    Kan,
    Mlp,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::FnoMlp, Arch::FnoKan, Arch::Kan, Arch::Mlp];

    pub fn has_fno(self) -> bool {
        matches!(self, Arch::FnoMlp | Arch::FnoKan)
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::FnoMlp => "fno-mlp",
            Arch::FnoKan => "fno-kan",
            Arch::Kan => "kan",
            Arch::Mlp => "mlp",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown architecture `{s}`")))
    }
}

/// Appends normalised `x` and `y` coordinate channels to the inputs
/// (pointwise branches cannot otherwise tell cells apart).
pub fn with_coordinates(d: &Dataset) -> Result<Dataset> {
    let s = d.inputs.shape().to_vec();
    let (n, c, nx, ny, nz) = (s[0], s[1], s[2], s[3], s[4]);
    let coord = |len: usize, i: usize| {
        if len > 1 {
            i as f64 / (len - 1) as f64
        } else {
            0.0
        }
    };
    let extra = Tensor::from_fn(&[n, 2, nx, ny, nz], |i| {
        if i[1] == 0 {
            coord(nx, i[2])
        } else {
            coord(ny, i[3])
        }
    });
    let mut out = d.clone();
    out.inputs = Tensor::concat(&[d.inputs.clone(), extra], 1)?;
    out.input_channels
        .extend(["x".to_string(), "y".to_string()]);
    if let Some(norm) = &mut out.input_norm {
        norm.mean.extend([0.0, 0.0]);
        norm.std.extend([1.0, 1.0]);
    }
    debug_assert!(c + 2 == out.inputs.shape()[1]);
    Ok(out)
}

fn kan(hidden: &[usize], grid: usize, bound: f64) -> KanConfig {
    KanConfig {
        grid_bound: bound,
        ..KanConfig::new(hidden, grid, 3)
    }
}

/// Darcy models on an `n x n` grid; pointwise branches see whole rows of
/// `(k, x, y)`.
pub fn darcy_model(arch: Arch, n: usize) -> ModelConfig {
    let fno = FnoConfig {
        width: 16,
        modes: vec![8, 8, 1],
        n_blocks: 1,
        lifting_hidden: vec![],
        projection_hidden: vec![32],
        coord_features: true,
        activation: Activation::Tanh,
    };
    let (branch, layout, c_in) = match arch {
        Arch::FnoMlp | Arch::FnoKan => (BranchConfig::Fno(fno), BranchLayout::Channels, 1),
        Arch::Kan => (
            BranchConfig::Kan(kan(&[32], 5, 2.0)),
            BranchLayout::ChannelsByRow,
            3,
        ),
        Arch::Mlp => (
            BranchConfig::Mlp(MlpConfig::new(&[64, 64], Activation::Tanh)),
            BranchLayout::ChannelsByRow,
            3,
        ),
    };
    let trunk = match arch {
        Arch::FnoKan | Arch::Kan => TrunkConfig::Kan(kan(&[8], 5, 1.0)),
        Arch::FnoMlp | Arch::Mlp => TrunkConfig::Mlp(MlpConfig::new(&[16], Activation::Silu)),
    };
    ModelConfig {
        branch,
        trunk,
        n_c_in: c_in,
        n_c_out: 1,
        n_t: 1,
        extents: [n, n, 1],
        layout,
        trunk_out: None,
        branch_out: None,
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub arch: Arch,
    pub seed: u64,
    /// Mean over held-out samples of the per-sample relative 2-norm.
    pub rel: f64,
    /// Mean over held-out samples of the per-sample max deviation.
    pub linf: f64,
    pub params: usize,
    pub log: MetricLog,
    pub model: HybridModel,
}

pub fn darcy_inputs(arch: Arch, d: &Dataset) -> Result<Dataset> {
    if arch.has_fno() {
        Ok(d.clone())
    } else {
        with_coordinates(d)
    }
}

/// Trains on `d.train()` and scores on `d.test()`.
pub fn run_darcy(arch: Arch, d: &Dataset, seed: u64, cfg: &TrainConfig) -> Result<RunResult> {
    run_darcy_model(arch, &darcy_model(arch, d.grid()[0]), d, seed, cfg)
}

/// [`run_darcy`] with an explicit model configuration.
pub fn run_darcy_model(
    arch: Arch,
    model_cfg: &ModelConfig,
    d: &Dataset,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<RunResult> {
    let d = darcy_inputs(arch, d)?;
    let mut model = build_model(model_cfg, seed)?;
    let (tr, te) = (d.train(), d.test());
    let data = TrainData::new(&tr, Some(&te))?;
    let mut state = TrainState::new(&model, cfg);
    let log = train(&mut model, &data, &mut state, cfg)?;
    let val = data.val.as_ref().ok_or(Error::EmptyData)?;
    let pred = predict_decoded(&model, val, &data.target_norm, cfg.batch_size)?;
    let rel = mean_sample_relative_l2(&pred, &te.targets)?;
    let mut linf = 0.0;
    for s in 0..te.len() {
        linf += linf_err(&pred.index_axis0(s), &te.targets.index_axis0(s))?;
    }
    Ok(RunResult {
        arch,
        seed,
        rel,
        linf: linf / te.len() as f64,
        params: model.params().count(),
        log,
        model,
    })
}

/// Transient model: FNO branch over `(logk, rate, producers)` with a
/// tanh MLP trunk over the sampled report times.
pub fn transient_model(grid: [usize; 3], n_t: usize, n_c_in: usize, n_c_out: usize) -> ModelConfig {
    ModelConfig {
        branch: BranchConfig::Fno(FnoConfig {
            width: 16,
            modes: vec![6, 6, 2],
            n_blocks: 3,
            lifting_hidden: vec![],
            projection_hidden: vec![64],
            coord_features: true,
            activation: Activation::Silu,
        }),
        trunk: TrunkConfig::Mlp(MlpConfig::new(&[32, 32], Activation::Tanh)),
        n_c_in,
        n_c_out,
        n_t,
        extents: grid,
        layout: BranchLayout::Channels,
        trunk_out: None,
        branch_out: None,
    }
}

#[derive(Clone, Debug)]
pub struct TransientResult {
    /// Relative 2-norm of each saturation channel over the validation set.
    pub saturation_rel: Vec<f64>,
    /// Relative 2-norm of all extracted producer series, pooled.
    pub producer_rel: f64,
    /// Largest `|s_w + s_o - 1|` of the domain averages over samples and steps.
    pub phase_dev: f64,
    pub log: MetricLog,
    pub model: HybridModel,
    pub prediction: Tensor,
}

/// Trains on `train`, validates on `val`; both already time-sampled.
pub fn run_transient(
    train_set: &Dataset,
    val_set: &Dataset,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<TransientResult> {
    let grid = train_set.grid();
    let mc = transient_model(
        grid,
        train_set.n_t(),
        train_set.input_channels.len(),
        train_set.output_channels.len(),
    );
    let mut model = build_model(&mc, seed)?;
    let data = TrainData::new(train_set, Some(val_set))?;
    let mut state = TrainState::new(&model, cfg);
    let log = train(&mut model, &data, &mut state, cfg)?;
    let val = data.val.as_ref().ok_or(Error::EmptyData)?;
    let pred = predict_decoded(&model, val, &data.target_norm, cfg.batch_size)?;
    let ce = channel_errors(&pred, &val_set.targets)?;
    let saturation_rel = ["sw", "so"]
        .iter()
        .map(|c| val_set.channel(c).map(|i| ce[i].rel))
        .collect::<Result<Vec<_>>>()?;
    let (mut num, mut den, mut phase_dev) = (0.0, 0.0, 0.0f64);
    for s in 0..val_set.len() {
        let (p, t) = (pred.index_axis0(s), val_set.targets.index_axis0(s));
        for w in val_set
            .wells
            .iter()
            .filter(|w| w.role == WellRole::Producer)
        {
            let a = crate::data::bitmask_extract(&p, w)?;
            let b = crate::data::bitmask_extract(&t, w)?;
            num += a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            den += b.iter().map(|y| y * y).sum::<f64>();
        }
        for pb in crate::train::phase_balance(&p, &val_set.output_channels)? {
            phase_dev = phase_dev.max((pb.total - 1.0).abs());
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(TransientResult {
        saturation_rel,
        producer_rel: (num / den).sqrt(),
        phase_dev,
        log,
        model,
        prediction: pred,
    })
}
