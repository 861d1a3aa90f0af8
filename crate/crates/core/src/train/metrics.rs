//! Losses, error norms and reporting transforms.

use crate::tensor::{Tape, Tensor, Var};
use crate::{Error, Result};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

/// Mean over samples (axis 0) of each sample's mean squared deviation.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    same_shape("mse_loss", pred, target)?;
    if pred.rank() == 0 {
        return Ok((pred.item() - target.item()).powi(2));
    }
    let n = pred.shape()[0];
    if n == 0 || pred.is_empty() {
        return Err(Error::EmptyData);
    }
    let per = pred.len() / n;
    let total: f64 = pred
        .data()
        .chunks(per)
        .zip(target.data().chunks(per))
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / per as f64)
        .sum();
    Ok(total / n as f64)
}

/// Differentiable global mean of squared deviations.
pub fn mse_loss_var(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let d = tape.sub(pred, target)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean(sq))
}

pub fn relative_l2(pred: &Tensor, target: &Tensor) -> Result<f64> {
    same_shape("relative_l2", pred, target)?;
    let den = target.norm();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(num / den)
}

pub fn linf_err(pred: &Tensor, target: &Tensor) -> Result<f64> {
    same_shape("linf_err", pred, target)?;
    Ok(pred.max_abs_diff(target))
}

/// Mean over samples of each sample's relative 2-norm.
pub fn mean_sample_relative_l2(pred: &Tensor, target: &Tensor) -> Result<f64> {
    same_shape("mean_sample_relative_l2", pred, target)?;
    let n = pred.shape()[0];
    let mut acc = 0.0;
    for s in 0..n {
        acc += relative_l2(&pred.index_axis0(s), &target.index_axis0(s))?;
    }
    Ok(acc / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelErrors {
    pub mse: f64,
    pub rel: f64,
    pub linf: f64,
}

/// Errors per index of axis 1 (the channel axis of batched fields).
pub fn channel_errors(pred: &Tensor, target: &Tensor) -> Result<Vec<ChannelErrors>> {
    same_shape("channel_errors", pred, target)?;
    if pred.rank() < 2 {
        return Err(Error::AxisOutOfRange {
            axis: 1,
            rank: pred.rank(),
        });
    }
    (0..pred.shape()[1])
        .map(|c| {
            let p = pred.select(1, &[c])?;
            let t = target.select(1, &[c])?;
            Ok(ChannelErrors {
                mse: mse_loss(&p, &t)?,
                rel: relative_l2(&p, &t)?,
                linf: linf_err(&p, &t)?,
            })
        })
        .collect()
}

/// Trailing mean; the first `window - 1` entries average what is available.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    for (i, &x) in series.iter().enumerate() {
        acc += x;
        if i >= w {
            acc -= series[i - w];
        }
        out.push(if w == 1 {
            x
        } else {
            acc / (i + 1).min(w) as f64
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseBalance {
    pub water: f64,
    pub oil: f64,
    pub total: f64,
}

/// Domain-averaged saturations per step of one sample `[C, T, Nx, Ny, Nz]`
/// (uniform cells).
pub fn phase_balance(pred: &Tensor, channels: &[String]) -> Result<Vec<PhaseBalance>> {
    let find = |name: &str| {
        channels
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    };
    let (w, o) = (find("sw")?, find("so")?);
    if pred.rank() != 5 || pred.shape()[0] != channels.len() {
        return Err(Error::shape(
            "phase_balance",
            pred.shape(),
            &[channels.len()],
        ));
    }
    let n_t = pred.shape()[1];
    let plane: usize = pred.shape()[2..].iter().product();
    let avg = |c: usize, t: usize| {
        let base = (c * n_t + t) * plane;
        pred.data()[base..base + plane].iter().sum::<f64>() / plane as f64
    };
    Ok((0..n_t)
        .map(|t| {
            let (water, oil) = (avg(w, t), avg(o, t));
            PhaseBalance {
                water,
                oil,
                total: water + oil,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn mse_cases() {
        let t = random(&[3, 2, 4], 0);
        assert_eq!(mse_loss(&t, &t).unwrap(), 0.0);
        let shifted = t.map(|v| v + 0.5);
        assert!((mse_loss(&shifted, &t).unwrap() - 0.25).abs() < 1e-15);
        let p = random(&[4, 3, 5], 1);
        let q = random(&[4, 3, 5], 2);
        // two-loop reference: mean over samples of mean over query points
        let mut outer = 0.0;
        for s in 0..4 {
            let mut inner = 0.0;
            for c in 0..3 {
                for j in 0..5 {
                    inner += (p.at(&[s, c, j]) - q.at(&[s, c, j])).powi(2);
                }
            }
            outer += inner / 15.0;
        }
        assert!((mse_loss(&p, &q).unwrap() - outer / 4.0).abs() < 1e-12);
        let mut tape = Tape::new();
        let (a, b) = (tape.leaf(p.clone()), tape.constant(q.clone()));
        let l = mse_loss_var(&mut tape, a, b).unwrap();
        assert!((tape.value(l).item() - outer / 4.0).abs() < 1e-12);
        assert!(mse_loss(&p, &t).is_err());
    }

    #[test]
    fn relative_and_linf() {
        let t = random(&[5, 7], 3);
        assert_eq!(relative_l2(&t, &t).unwrap(), 0.0);
        assert_eq!(relative_l2(&Tensor::zeros(&[5, 7]), &t).unwrap(), 1.0);
        assert_eq!(relative_l2(&t.scale(2.0), &t).unwrap(), 1.0);
        let p = random(&[5, 7], 4);
        let r = relative_l2(&p, &t).unwrap();
        assert!((relative_l2(&p.scale(3.5), &t.scale(3.5)).unwrap() - r).abs() < 1e-14);
        assert!(matches!(
            relative_l2(&t, &Tensor::zeros(&[5, 7])),
            Err(Error::ZeroReference)
        ));
        let d = Tensor::new(&[3], vec![1.0, -4.0, 2.0]).unwrap();
        assert_eq!(linf_err(&d, &Tensor::zeros(&[3])).unwrap(), 4.0);
        let ce = channel_errors(
            &p.reshape(&[5, 7, 1]).unwrap(),
            &t.reshape(&[5, 7, 1]).unwrap(),
        )
        .unwrap();
        assert_eq!(ce.len(), 7);
    }

    #[test]
    fn moving_average_cases() {
        assert_eq!(
            moving_average(&[1.0, 2.0, 3.0, 4.0], 2),
            vec![1.0, 1.5, 2.5, 3.5]
        );
        let s = [3.0, -1.0, 8.5];
        assert_eq!(moving_average(&s, 1), s.to_vec());
        assert_eq!(moving_average(&[2.0; 6], 4), vec![2.0; 6]);
        assert_eq!(moving_average(&[], 3), Vec::<f64>::new());
    }

    #[test]
    fn phase_balance_cases() {
        let ch: Vec<String> = ["sw", "so", "wopr"].iter().map(|s| s.to_string()).collect();
        let f = Tensor::from_fn(&[3, 2, 2, 2, 1], |i| match i[0] {
            0 => 0.3,
            1 => 0.7,
            _ => 9.0,
        });
        for pb in phase_balance(&f, &ch).unwrap() {
            assert!((pb.water - 0.3).abs() < 1e-15);
            assert!((pb.oil - 0.7).abs() < 1e-15);
            assert!((pb.total - 1.0).abs() < 1e-15);
        }
        let g = random(&[3, 2, 2, 2, 1], 5);
        let lin = phase_balance(&f.scale(2.0).add(&g).unwrap(), &ch).unwrap();
        let (pf, pg) = (
            phase_balance(&f, &ch).unwrap(),
            phase_balance(&g, &ch).unwrap(),
        );
        for t in 0..2 {
            assert!((lin[t].water - (2.0 * pf[t].water + pg[t].water)).abs() < 1e-12);
        }
        assert!(matches!(
            phase_balance(&f, &["sw".into(), "x".into(), "y".into()]),
            Err(Error::MissingChannel(_))
        ));
    }
}
