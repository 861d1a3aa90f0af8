//! Per-channel standardisation.

use std::fmt;
use std::str::FromStr;

use crate::tensor::Tensor;
use crate::{Error, Result};

pub const STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// `σ = max(std, ε)`.
    MeanStd,
    /// `σ = std + ε`, as in the usual unit-Gaussian normaliser.
    UnitGaussian,
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormMode::MeanStd => "meanstd",
            NormMode::UnitGaussian => "unit_gaussian",
        })
    }
}

impl FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meanstd" => Ok(NormMode::MeanStd),
            "unit_gaussian" => Ok(NormMode::UnitGaussian),
            _ => Err(Error::InvalidConfig(format!("unknown normalizer `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mode: NormMode,
    pub axis: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Statistics per index of `axis`, pooled over every other axis
    /// (population variance).
    pub fn fit(mode: NormMode, data: &Tensor, axis: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        if axis >= data.rank() {
            return Err(Error::AxisOutOfRange {
                axis,
                rank: data.rank(),
            });
        }
        let c = data.shape()[axis];
        let inner: usize = data.shape()[axis + 1..].iter().product();
        let per = (data.len() / c) as f64;
        let mut mean = vec![0.0; c];
        for (i, v) in data.data().iter().enumerate() {
            mean[(i / inner) % c] += v;
        }
        mean.iter_mut().for_each(|m| *m /= per);
        let mut var = vec![0.0; c];
        for (i, v) in data.data().iter().enumerate() {
            let ch = (i / inner) % c;
            var[ch] += (v - mean[ch]).powi(2);
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / per).sqrt();
                match mode {
                    NormMode::MeanStd => s.max(STD_FLOOR),
                    NormMode::UnitGaussian => s + STD_FLOOR,
                }
            })
            .collect();
        Ok(Normalizer {
            mode,
            axis,
            mean,
            std,
        })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &Tensor) -> Result<(usize, usize)> {
        if self.axis >= x.rank() || x.shape()[self.axis] != self.channels() {
            return Err(Error::shape("normalizer", x.shape(), &[self.channels()]));
        }
        Ok((self.channels(), x.shape()[self.axis + 1..].iter().product()))
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let (c, inner) = self.check(x)?;
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let ch = (i / inner) % c;
                (v - self.mean[ch]) / self.std[ch]
            })
            .collect();
        Tensor::new(x.shape(), data)
    }

    pub fn decode(&self, x: &Tensor) -> Result<Tensor> {
        let (c, inner) = self.check(x)?;
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let ch = (i / inner) % c;
                v * self.std[ch] + self.mean[ch]
            })
            .collect();
        Tensor::new(x.shape(), data)
    }

    /// `mode;axis;m0,m1,..;s0,s1,..` with shortest round-trip float text.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "{};{};{};{}",
            self.mode,
            self.axis,
            join(&self.mean),
            join(&self.std)
        )
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let bad = || Error::Metadata(format!("bad normalizer `{s}`"));
        let p: Vec<&str> = s.trim().split(';').collect();
        if p.len() != 4 {
            return Err(bad());
        }
        let list = |t: &str| -> Result<Vec<f64>> {
            t.split(',').map(|x| x.parse().map_err(|_| bad())).collect()
        };
        let (mean, std) = (list(p[2])?, list(p[3])?);
        if mean.len() != std.len() {
            return Err(bad());
        }
        Ok(Normalizer {
            mode: p[0].parse()?,
            axis: p[1].parse().map_err(|_| bad())?,
            mean,
            std,
        })
    }
}
