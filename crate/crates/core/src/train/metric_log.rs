//! Per-epoch metrics and their CSV form.

use std::fmt::Write;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_mse: f64,
    pub train_rel: f64,
    pub val_mse: Option<f64>,
    pub val_rel: Option<f64>,
    /// Validation relative 2-norm per output channel.
    pub val_rel_channels: Vec<f64>,
    /// Steps dropped because of a non-finite gradient.
    pub skipped_steps: usize,
    /// Wall clock; kept out of the CSV so reruns stay byte-identical.
    pub seconds: f64,
}

impl MetricRow {
    /// Equality of everything except wall-clock time.
    pub fn same_values(&self, other: &MetricRow) -> bool {
        MetricRow {
            seconds: 0.0,
            ..self.clone()
        } == MetricRow {
            seconds: 0.0,
            ..other.clone()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricLog {
    pub channels: Vec<String>,
    pub rows: Vec<MetricRow>,
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

impl MetricLog {
    pub fn new(channels: Vec<String>) -> Self {
        MetricLog {
            channels,
            rows: Vec::new(),
        }
    }

    /// Rows must arrive in increasing epoch order.
    pub fn push(&mut self, row: MetricRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.epoch <= last.epoch {
                return Err(Error::InvalidCounts(format!(
                    "epoch {} after {}",
                    row.epoch, last.epoch
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, other: MetricLog) -> Result<()> {
        for r in other.rows {
            self.push(r)?;
        }
        Ok(())
    }

    fn has_val(&self) -> bool {
        self.rows.first().is_some_and(|r| r.val_mse.is_some())
    }

    pub fn header(&self) -> String {
        let mut h = String::from("epoch,lr,train_mse,");
        if self.has_val() {
            h.push_str("val_mse,train_rel,val_rel");
            for c in &self.channels {
                write!(h, ",val_rel_{c}").unwrap();
            }
        } else {
            h.push_str("train_rel");
        }
        h.push_str(",skipped_steps");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header();
        s.push('\n');
        let val = self.has_val();
        for r in &self.rows {
            write!(s, "{},{},{},", r.epoch, num(r.lr), num(r.train_mse)).unwrap();
            if val {
                write!(
                    s,
                    "{},{},{}",
                    num(r.val_mse.unwrap_or(f64::NAN)),
                    num(r.train_rel),
                    num(r.val_rel.unwrap_or(f64::NAN))
                )
                .unwrap();
                for v in &r.val_rel_channels {
                    write!(s, ",{}", num(*v)).unwrap();
                }
            } else {
                s.push_str(&num(r.train_rel));
            }
            writeln!(s, ",{}", r.skipped_steps).unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::EmptyData)?;
        let cols: Vec<&str> = header.split(',').collect();
        let val = cols.get(3) == Some(&"val_mse");
        let channels: Vec<String> = cols
            .iter()
            .filter_map(|c| c.strip_prefix("val_rel_"))
            .map(str::to_string)
            .collect();
        let mut log = MetricLog::new(channels);
        for (n, line) in lines.enumerate() {
            let bad = || Error::Metadata(format!("metrics row {}: `{line}`", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(bad());
            }
            let p = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            let row = if val {
                MetricRow {
                    epoch: f[0].parse().map_err(|_| bad())?,
                    lr: p(1)?,
                    train_mse: p(2)?,
                    val_mse: Some(p(3)?),
                    train_rel: p(4)?,
                    val_rel: Some(p(5)?),
                    val_rel_channels: (6..f.len() - 1).map(p).collect::<Result<_>>()?,
                    skipped_steps: f[f.len() - 1].parse().map_err(|_| bad())?,
                    seconds: 0.0,
                }
            } else {
                MetricRow {
                    epoch: f[0].parse().map_err(|_| bad())?,
                    lr: p(1)?,
                    train_mse: p(2)?,
                    train_rel: p(3)?,
                    val_mse: None,
                    val_rel: None,
                    val_rel_channels: Vec::new(),
                    skipped_steps: f[4].parse().map_err(|_| bad())?,
                    seconds: 0.0,
                }
            };
            log.push(row).map_err(|_| bad())?;
        }
        Ok(log)
    }
}
