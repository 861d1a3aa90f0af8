//! `hno plot`: training curves from a metrics CSV.

use std::fs;
use std::path::Path;

use hno::train::moving_average;

use crate::fail::{runtime, usage, CliResult, Failure};
use crate::svg::{color, Chart, Series};

/// A numeric CSV: the first column is the x axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Failure::Usage("metrics CSV: empty file".into()))?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        if columns.len() < 2 {
            return Err(Failure::Usage(format!(
                "metrics CSV: need an x column and at least one metric, header is `{header}`"
            )));
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let bad =
                |why: &str| Failure::Usage(format!("metrics CSV row {}: {why}: `{line}`", i + 1));
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != columns.len() {
                return Err(bad(&format!(
                    "{} fields, expected {}",
                    cells.len(),
                    columns.len()
                )));
            }
            let row = cells
                .iter()
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad("not a number"))?;
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }
}

/// One chart per metric column: the raw trace, faint, under its trailing
/// moving average over `window` rows.
pub fn charts(t: &Table, window: usize) -> Vec<(String, Chart)> {
    let xs = t.column(0);
    (1..t.columns.len())
        .map(|k| {
            let name = &t.columns[k];
            let ys = t.column(k);
            let mut c = Chart::new(name.clone(), t.columns[0].clone(), name.clone());
            c.log_y = name.contains("mse") || name.contains("rel");
            let mut raw = Series::new("raw", xs.clone(), ys.clone(), color(0));
            raw.opacity = 0.35;
            c.series.push(raw);
            let avg = moving_average(&ys, window);
            c.series.push(Series::new(
                format!("moving average ({window})"),
                xs.clone(),
                avg,
                color(0),
            ));
            (name.clone(), c)
        })
        .collect()
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn run(csv: &Path, out: &Path, window: usize) -> CliResult<()> {
    if window == 0 {
        return Err(Failure::Usage("plot: window must be at least 1".into()));
    }
    let text = fs::read_to_string(csv).map_err(usage(&format!("reading {}", csv.display())))?;
    let table = Table::parse(&text)?;
    fs::create_dir_all(out).map_err(runtime(&format!("creating {}", out.display())))?;
    for (name, chart) in charts(&table, window) {
        let path = out.join(format!("{}.svg", file_stem(&name)));
        fs::write(&path, chart.render())
            .map_err(runtime(&format!("writing {}", path.display())))?;
        println!("{}", path.display());
    }
    Ok(())
}
