//! `hno eval`: error tables, per-well series and phase balance of a
//! checkpoint on a dataset.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hno::data::{Dataset, Normalizer, WellRole};
use hno::deeponet::normalized_times;
use hno::experiments::with_coordinates;
use hno::train::{
    channel_errors, load_checkpoint, phase_balance, predict_decoded, ChannelErrors, Split,
};
use hno::Tensor;

use crate::fail::{runtime, usage, CliResult, Failure};
use crate::svg::{color, Chart, Series};
use crate::train_cmd::{read_dataset, META_COORDS, META_TIMES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Subset {
    All,
    Train,
    Test,
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn run(
    checkpoint: &Path,
    dataset: &Path,
    dir: &Path,
    subset: Subset,
    batch: usize,
) -> CliResult<()> {
    let ck = load_checkpoint(checkpoint).map_err(usage(&format!(
        "loading checkpoint {}",
        checkpoint.display()
    )))?;
    let d = read_dataset(dataset)?;
    let d = match subset {
        Subset::All => d,
        Subset::Train => d.train(),
        Subset::Test => d.test(),
    };
    if d.is_empty() {
        return Err(Failure::Usage(format!(
            "dataset {} has no {subset:?} samples",
            dataset.display()
        )));
    }
    let cfg = ck.model.config().clone();
    let mut d = d;
    if d.n_t() != cfg.n_t {
        if ck.meta.get(META_TIMES).is_some() {
            let idx: Vec<usize> = ck
                .meta
                .parse_list(META_TIMES)
                .map_err(usage("checkpoint metadata"))?;
            if idx.iter().all(|&i| i < d.n_t()) && !idx.is_empty() {
                d = d.select_times(&idx).map_err(usage("time sampling"))?;
            } else {
                log::warn!("stored report steps `{idx:?}` do not fit {} steps", d.n_t());
            }
        }
    }
    let raw = d.clone();
    if ck.meta.get(META_COORDS) == Some("true") {
        d = with_coordinates(&d).map_err(usage("coordinates"))?;
    }
    let want_in = [cfg.n_c_in, cfg.extents[0], cfg.extents[1], cfg.extents[2]];
    let want_out = [cfg.n_c_out, cfg.n_t];
    let have_in = &d.inputs.shape()[1..];
    let have_out = &d.targets.shape()[1..3];
    if have_in != want_in || have_out != want_out {
        return Err(Failure::Usage(format!(
            "shape incompatible: checkpoint expects inputs {want_in:?} and targets [C, T] = {want_out:?}, dataset has inputs {have_in:?} and targets {have_out:?}"
        )));
    }
    let norm = |key: &str| -> CliResult<Normalizer> {
        let text = ck.meta.require(key).map_err(usage("checkpoint metadata"))?;
        Normalizer::from_text(text).map_err(usage("checkpoint metadata"))
    };
    let (inorm, tnorm) = (norm("normalizer.inputs")?, norm("normalizer.targets")?);
    let split = Split {
        v: inorm.encode(&d.inputs).map_err(usage("encoding inputs"))?,
        xi: normalized_times(&d.times, d.len()),
        y: tnorm
            .encode(&d.targets)
            .map_err(usage("encoding targets"))?,
    };
    let pred =
        predict_decoded(&ck.model, &split, &tnorm, batch.max(1)).map_err(runtime("prediction"))?;
    let errs = write_report(dir, &pred, &raw)?;
    for (c, e) in raw.output_channels.iter().zip(&errs) {
        println!(
            "{c}: mse {:.4e} rel_l2 {:.4e} linf {:.4e}",
            e.mse, e.rel, e.linf
        );
    }
    let mut out = raw;
    out.targets = pred;
    out.write(dir.join("predictions.hno"))
        .map_err(runtime("writing predictions"))?;
    Ok(())
}

/// Writes `errors.csv`, one `well_<name>.csv/.svg` per producer and, when
/// both saturations are present, `phase_balance.csv/.svg`.
pub fn write_report(dir: &Path, pred: &Tensor, truth: &Dataset) -> CliResult<Vec<ChannelErrors>> {
    fs::create_dir_all(dir).map_err(runtime(&format!("creating {}", dir.display())))?;
    let write = |name: &str, text: String| {
        fs::write(dir.join(name), text).map_err(runtime(&format!("writing {name}")))
    };
    let errs = channel_errors(pred, &truth.targets).map_err(runtime("errors"))?;
    let mut csv = String::from("channel,mse,rel_l2,linf\n");
    for (c, e) in truth.output_channels.iter().zip(&errs) {
        writeln!(csv, "{c},{},{},{}", num(e.mse), num(e.rel), num(e.linf)).unwrap();
    }
    write("errors.csv", csv)?;

    let n = truth.len();
    let steps: Vec<f64> = truth.times.clone();
    for w in truth.wells.iter().filter(|w| w.role == WellRole::Producer) {
        let mut series = Vec::with_capacity(n);
        for s in 0..n {
            let p = hno::data::bitmask_extract(&pred.index_axis0(s), w)
                .map_err(runtime("well extraction"))?;
            let t = hno::data::bitmask_extract(&truth.targets.index_axis0(s), w)
                .map_err(runtime("well extraction"))?;
            series.push((p, t));
        }
        let mut csv = String::from("step,time");
        for s in 0..n {
            write!(csv, ",s{s}_pred,s{s}_true").unwrap();
        }
        csv.push('\n');
        for (k, t) in steps.iter().enumerate() {
            write!(csv, "{k},{}", num(*t)).unwrap();
            for (p, q) in &series {
                write!(csv, ",{},{}", num(p[k]), num(q[k])).unwrap();
            }
            csv.push('\n');
        }
        write(&format!("well_{}.csv", w.name), csv)?;
        let mut chart = Chart::new(
            format!("{} ({})", w.name, truth.output_channels[w.channel]),
            "time",
            "rate",
        );
        for (s, (p, q)) in series.iter().enumerate() {
            chart.series.push(Series::new(
                format!("s{s} pred"),
                steps.clone(),
                p.clone(),
                color(s),
            ));
            let mut t = Series::new(format!("s{s} true"), steps.clone(), q.clone(), color(s));
            t.dashed = true;
            chart.series.push(t);
        }
        write(&format!("well_{}.svg", w.name), chart.render())?;
    }

    let has = |c: &str| truth.output_channels.iter().any(|x| x == c);
    if has("sw") && has("so") {
        let mut totals = Vec::with_capacity(n);
        for s in 0..n {
            let pb = phase_balance(&pred.index_axis0(s), &truth.output_channels)
                .map_err(runtime("phase balance"))?;
            totals.push(pb);
        }
        let mut csv = String::from("step,time,max_dev");
        for s in 0..n {
            write!(csv, ",s{s}_water,s{s}_oil,s{s}_total").unwrap();
        }
        csv.push('\n');
        for (k, t) in steps.iter().enumerate() {
            let dev = totals
                .iter()
                .map(|pb| (pb[k].total - 1.0).abs())
                .fold(0.0, f64::max);
            write!(csv, "{k},{},{}", num(*t), num(dev)).unwrap();
            for pb in &totals {
                write!(
                    csv,
                    ",{},{},{}",
                    num(pb[k].water),
                    num(pb[k].oil),
                    num(pb[k].total)
                )
                .unwrap();
            }
            csv.push('\n');
        }
        write("phase_balance.csv", csv)?;
        let mut chart = Chart::new("phase balance", "time", "mean saturation");
        for (s, pb) in totals.iter().enumerate() {
            let series = Series::new(
                format!("s{s} total"),
                steps.clone(),
                pb.iter().map(|b| b.total).collect(),
                color(s),
            );
            chart.series.push(series);
        }
        write("phase_balance.svg", chart.render())?;
    }
    Ok(errs)
}
