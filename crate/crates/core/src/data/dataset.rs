//! In-memory operator-learning dataset and its HNO1 encoding.

use std::path::Path;

use super::container::{join, Container, Metadata, Record};
use super::normalize::Normalizer;
use super::wells::WellMask;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: String,
    /// `[N, C_in, Nx, Ny, Nz]`
    pub inputs: Tensor,
    /// `[N, C_out, T, Nx, Ny, Nz]`
    pub targets: Tensor,
    /// Report times in days, one per target step.
    pub times: Vec<f64>,
    pub input_channels: Vec<String>,
    pub output_channels: Vec<String>,
    pub wells: Vec<WellMask>,
    /// Leading samples meant for training; the rest are held out.
    pub n_train: usize,
    pub input_norm: Option<Normalizer>,
    pub target_norm: Option<Normalizer>,
}

impl Dataset {
    pub fn new(
        kind: impl Into<String>,
        inputs: Tensor,
        targets: Tensor,
        times: Vec<f64>,
        input_channels: Vec<String>,
        output_channels: Vec<String>,
    ) -> Result<Self> {
        let n = inputs.shape().first().copied().unwrap_or(0);
        let d = Dataset {
            kind: kind.into(),
            inputs,
            targets,
            times,
            input_channels,
            output_channels,
            wells: Vec::new(),
            n_train: n,
            input_norm: None,
            target_norm: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let (i, t) = (self.inputs.shape(), self.targets.shape());
        let ok = i.len() == 5
            && t.len() == 6
            && i[0] == t[0]
            && i[2..] == t[3..]
            && i[1] == self.input_channels.len()
            && t[1] == self.output_channels.len()
            && t[2] == self.times.len()
            && self.n_train <= i[0];
        if !ok {
            return Err(Error::shape("dataset", i, t));
        }
        for w in &self.wells {
            w.check_grid(self.grid())?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn grid(&self) -> [usize; 3] {
        let s = self.inputs.shape();
        [s[2], s[3], s[4]]
    }

    pub fn n_t(&self) -> usize {
        self.times.len()
    }

    pub fn channel(&self, name: &str) -> Result<usize> {
        self.output_channels
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_axis0(idx),
            targets: self.targets.select_axis0(idx),
            n_train: idx.len(),
            ..self.clone()
        }
    }

    pub fn train(&self) -> Dataset {
        self.select(&(0..self.n_train).collect::<Vec<_>>())
    }

    pub fn test(&self) -> Dataset {
        self.select(&(self.n_train..self.len()).collect::<Vec<_>>())
    }

    /// Keep the given report steps.
    pub fn select_times(&self, idx: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            targets: self.targets.select(2, idx)?,
            times: idx.iter().map(|&i| self.times[i]).collect(),
            ..self.clone()
        })
    }

    pub fn to_container(&self) -> Result<Container> {
        self.validate()?;
        let mut c = Container::new();
        c.push(Record::f64("inputs", &self.inputs))?;
        c.push(Record::f64("targets", &self.targets))?;
        let mut m = Metadata::new();
        m.set("kind", &self.kind);
        m.set("grid", join(&self.grid()));
        m.set(
            "times",
            self.times
                .iter()
                .map(|t| format!("{t:?}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        m.set("input_channels", self.input_channels.join(","));
        m.set("output_channels", self.output_channels.join(","));
        m.set("n_train", self.n_train);
        for w in &self.wells {
            m.set(format!("well.{}", w.name), w);
        }
        if let Some(n) = &self.input_norm {
            m.set("normalizer.inputs", n.to_text());
        }
        if let Some(n) = &self.target_norm {
            m.set("normalizer.targets", n.to_text());
        }
        c.set_metadata(&m);
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let m = c.metadata()?;
        let names = |k: &str| -> Result<Vec<String>> { m.parse_list(k) };
        let wells = m
            .with_prefix("well.")
            .map(|(_, v)| v.parse())
            .collect::<Result<Vec<WellMask>>>()?;
        let norm = |k: &str| m.get(k).map(Normalizer::from_text).transpose();
        let d = Dataset {
            kind: m.require("kind")?.to_string(),
            inputs: c.tensor("inputs")?,
            targets: c.tensor("targets")?,
            times: m.parse_list("times")?,
            input_channels: names("input_channels")?,
            output_channels: names("output_channels")?,
            wells,
            n_train: m.parse("n_train")?,
            input_norm: norm("normalizer.inputs")?,
            target_norm: norm("normalizer.targets")?,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::normalize::NormMode;
    use crate::data::wells::WellRole;

    #[test]
    fn container_round_trip_and_splits() {
        let inputs = Tensor::from_fn(&[4, 2, 3, 2, 1], |i| {
            (i[0] * 7 + i[1] * 3 + i[2]) as f64 * 0.1
        });
        let targets = Tensor::from_fn(&[4, 1, 3, 3, 2, 1], |i| (i[0] + i[2] * i[3]) as f64 / 3.0);
        let mut d = Dataset::new(
            "test",
            inputs,
            targets,
            vec![1.0, 2.5, 1.0 / 3.0],
            vec!["a".into(), "b".into()],
            vec!["p".into()],
        )
        .unwrap();
        d.n_train = 3;
        d.wells
            .push(WellMask::vertical("W1", WellRole::Producer, 2, 1, 1, 0).unwrap());
        d.input_norm = Some(Normalizer::fit(NormMode::MeanStd, &d.inputs, 1).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.hno");
        d.write(&p).unwrap();
        let back = Dataset::read(&p).unwrap();
        assert_eq!(back, d);
        assert_eq!(d.train().len(), 3);
        assert_eq!(d.test().len(), 1);
        assert_eq!(d.test().inputs.data(), d.inputs.index_axis0(3).data());
        let dt = d.select_times(&[0, 2]).unwrap();
        assert_eq!(dt.targets.shape(), &[4, 1, 2, 3, 2, 1]);
        assert_eq!(dt.times, vec![1.0, 1.0 / 3.0]);
        assert_eq!(d.channel("p").unwrap(), 0);
        assert!(d.channel("q").is_err());
    }
}
