//! Bit-mask embedding of per-well scalar series into spatial tensors.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WellRole {
    Injector,
    Producer,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WellMask {
    pub name: String,
    pub role: WellRole,
    pub cells: Vec<[usize; 3]>,
    /// Channel of the embedded tensor the well writes to and reads from.
    pub channel: usize,
}

impl WellMask {
    pub fn new(
        name: impl Into<String>,
        role: WellRole,
        cells: Vec<[usize; 3]>,
        channel: usize,
    ) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.contains(|c: char| c.is_whitespace() || c == ';') {
            return Err(Error::InvalidMask(format!("bad well name `{name}`")));
        }
        if cells.is_empty() {
            return Err(Error::InvalidMask(format!("{name}: no cells")));
        }
        let unique: HashSet<_> = cells.iter().collect();
        if unique.len() != cells.len() {
            return Err(Error::InvalidMask(format!("{name}: duplicate cells")));
        }
        Ok(WellMask {
            name,
            role,
            cells,
            channel,
        })
    }

    /// A vertical well through every layer of column `(i, j)`.
    pub fn vertical(
        name: impl Into<String>,
        role: WellRole,
        i: usize,
        j: usize,
        nz: usize,
        channel: usize,
    ) -> Result<Self> {
        Self::new(name, role, (0..nz).map(|k| [i, j, k]).collect(), channel)
    }

    pub fn check_grid(&self, grid: [usize; 3]) -> Result<()> {
        for &cell in &self.cells {
            if (0..3).any(|a| cell[a] >= grid[a]) {
                return Err(Error::CellOutOfGrid { cell, grid });
            }
        }
        Ok(())
    }
}

impl fmt::Display for WellRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WellRole::Injector => "injector",
            WellRole::Producer => "producer",
        })
    }
}

impl FromStr for WellRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "injector" => Ok(WellRole::Injector),
            "producer" => Ok(WellRole::Producer),
            _ => Err(Error::InvalidMask(format!("unknown role `{s}`"))),
        }
    }
}

/// `name;role;channel;i,j,k i,j,k ...`
impl fmt::Display for WellMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{};{};{};", self.name, self.role, self.channel)?;
        for (n, c) in self.cells.iter().enumerate() {
            if n > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{},{},{}", c[0], c[1], c[2])?;
        }
        Ok(())
    }
}

impl FromStr for WellMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidMask(s.to_string());
        let parts: Vec<&str> = s.trim().split(';').collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        let channel = parts[2].parse().map_err(|_| bad())?;
        let cells = parts[3]
            .split_whitespace()
            .map(|c| {
                let v: Vec<usize> = c
                    .split(',')
                    .map(|x| x.parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                <[usize; 3]>::try_from(v).map_err(|_| bad())
            })
            .collect::<Result<Vec<_>>>()?;
        WellMask::new(parts[0], parts[1].parse()?, cells, channel)
    }
}

/// Zero tensor `[C, n_t, Nx, Ny, Nz]` (`C` = highest target channel + 1)
/// with every cell of well `w` holding `series[w][t]`. Length-one series are
/// repeated over time.
pub fn bitmask_embed(
    series: &[Vec<f64>],
    masks: &[WellMask],
    grid: [usize; 3],
    n_t: usize,
) -> Result<Tensor> {
    let channels = masks.iter().map(|m| m.channel + 1).max().unwrap_or(0);
    bitmask_embed_channels(series, masks, grid, n_t, channels)
}

pub fn bitmask_embed_channels(
    series: &[Vec<f64>],
    masks: &[WellMask],
    grid: [usize; 3],
    n_t: usize,
    channels: usize,
) -> Result<Tensor> {
    if series.len() != masks.len() {
        return Err(Error::InvalidMask(format!(
            "{} series for {} wells",
            series.len(),
            masks.len()
        )));
    }
    let mut taken = HashSet::new();
    for (s, m) in series.iter().zip(masks) {
        m.check_grid(grid)?;
        if m.channel >= channels {
            return Err(Error::InvalidMask(format!(
                "{}: channel {} of {channels}",
                m.name, m.channel
            )));
        }
        if s.len() != n_t && s.len() != 1 {
            return Err(Error::InvalidMask(format!(
                "{}: series length {} for {n_t} steps",
                m.name,
                s.len()
            )));
        }
        for c in &m.cells {
            if !taken.insert((m.channel, *c)) {
                return Err(Error::InvalidMask(format!("{}: cell {c:?} shared", m.name)));
            }
        }
    }
    let [nx, ny, nz] = grid;
    let plane = nx * ny * nz;
    let mut out = vec![0.0; channels * n_t * plane];
    for (s, m) in series.iter().zip(masks) {
        for t in 0..n_t {
            let v = if s.len() == 1 { s[0] } else { s[t] };
            let base = (m.channel * n_t + t) * plane;
            for c in &m.cells {
                out[base + (c[0] * ny + c[1]) * nz + c[2]] = v;
            }
        }
    }
    Tensor::new(&[channels, n_t, nx, ny, nz], out)
}

/// Per-step mean of the mask's cells in channel `mask.channel` of a
/// `[C, T, Nx, Ny, Nz]` field.
pub fn bitmask_extract(field: &Tensor, mask: &WellMask) -> Result<Vec<f64>> {
    if field.rank() != 5 || mask.channel >= field.shape()[0] {
        return Err(Error::shape(
            "bitmask_extract",
            field.shape(),
            &[mask.channel + 1, 0, 0, 0, 0],
        ));
    }
    let s = field.shape();
    let grid = [s[2], s[3], s[4]];
    mask.check_grid(grid)?;
    let plane = grid.iter().product::<usize>();
    let n = mask.cells.len() as f64;
    Ok((0..s[1])
        .map(|t| {
            let base = (mask.channel * s[1] + t) * plane;
            let at = |c: &[usize; 3]| field.data()[base + (c[0] * grid[1] + c[1]) * grid[2] + c[2]];
            // offset from the first cell so equal cells give back their value exactly
            let first = at(&mask.cells[0]);
            first + mask.cells.iter().map(|c| at(c) - first).sum::<f64>() / n
        })
        .collect())
}
