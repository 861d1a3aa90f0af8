//! Model and optimiser state in the HNO1 container.

use std::path::Path;

use crate::data::{Container, Metadata, Payload, Record};
use crate::deeponet::{build_model, HybridModel, ModelConfig};
use crate::tensor::Tensor;
use crate::{Error, Result};

use super::optim::AdamW;
use super::TrainState;

pub const CONFIG_RECORD: &str = "config";

pub fn model_config_to_toml(cfg: &ModelConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::InvalidConfig(e.to_string()))
}

pub fn model_config_from_toml(s: &str) -> Result<ModelConfig> {
    toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))
}

/// `param/<name>`, `opt/m/<name>`, `opt/v/<name>`, the model config as TOML
/// text and a `meta` record holding the scalar state plus `extra`.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &HybridModel,
    state: &TrainState,
    extra: &Metadata,
) -> Result<()> {
    let mut c = Container::new();
    let p = model.params();
    for (name, t) in p.iter() {
        c.push(Record::f64(format!("param/{name}"), t))?;
    }
    for (k, (name, _)) in p.iter().enumerate() {
        c.push(Record::f64(format!("opt/m/{name}"), &state.opt.m[k]))?;
        c.push(Record::f64(format!("opt/v/{name}"), &state.opt.v[k]))?;
    }
    c.push(Record::text(
        CONFIG_RECORD,
        model_config_to_toml(model.config())?,
    ))?;
    let mut m = extra.clone();
    m.set("epoch", state.epoch);
    m.set("total_epochs", state.total_epochs);
    m.set("lr0", format!("{:?}", state.lr0));
    m.set("seed", state.seed);
    m.set("best", format!("{:?}", state.best));
    m.set("opt.step", state.opt.step);
    m.set("opt.weight_decay", format!("{:?}", state.opt.weight_decay));
    m.set("opt.beta1", format!("{:?}", state.opt.beta1));
    m.set("opt.beta2", format!("{:?}", state.opt.beta2));
    m.set("opt.eps", format!("{:?}", state.opt.eps));
    c.set_metadata(&m);
    c.write(path)
}

pub struct Checkpoint {
    pub model: HybridModel,
    pub state: TrainState,
    pub meta: Metadata,
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let c = Container::read(path)?;
    let cfg = match &c.get(CONFIG_RECORD)?.payload {
        Payload::Text(s) => model_config_from_toml(s)?,
        _ => return Err(Error::CorruptRecord("config is not text".into())),
    };
    let mut model = build_model(&cfg, 0)?;
    let ids: Vec<_> = model.params().ids().collect();
    let mut m = Vec::with_capacity(ids.len());
    let mut v = Vec::with_capacity(ids.len());
    for id in ids {
        let name = model.params().name(id).to_string();
        let t = c.tensor(&format!("param/{name}"))?;
        if t.shape() != model.params().get(id).shape() {
            return Err(Error::shape(
                "load_checkpoint",
                model.params().get(id).shape(),
                t.shape(),
            ));
        }
        model.params_mut().set(id, t);
        let moment = |kind: &str| -> Result<Tensor> {
            let t = c.tensor(&format!("opt/{kind}/{name}"))?;
            if t.shape() != model.params().get(id).shape() {
                return Err(Error::CorruptRecord(format!("opt/{kind}/{name}: shape")));
            }
            Ok(t)
        };
        m.push(moment("m")?);
        v.push(moment("v")?);
    }
    let meta = c.metadata()?;
    let opt = AdamW {
        beta1: meta.parse("opt.beta1")?,
        beta2: meta.parse("opt.beta2")?,
        eps: meta.parse("opt.eps")?,
        weight_decay: meta.parse("opt.weight_decay")?,
        step: meta.parse("opt.step")?,
        m,
        v,
    };
    let state = TrainState {
        opt,
        epoch: meta.parse("epoch")?,
        total_epochs: meta.parse("total_epochs")?,
        lr0: meta.parse("lr0")?,
        seed: meta.parse("seed")?,
        best: meta.parse("best")?,
    };
    Ok(Checkpoint { model, state, meta })
}
