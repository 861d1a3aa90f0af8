//! Synthetic dataset generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::darcy::solve_darcy;
use super::dataset::Dataset;
use super::grf::{grf_to_permeability, GrfSampler};
use super::normalize::{NormMode, Normalizer};
use super::wells::{bitmask_embed_channels, WellMask, WellRole};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Worker count from `HNO_THREADS`, else the machine's parallelism.
pub fn worker_count() -> usize {
    std::env::var("HNO_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// `f(0..n)` in order, split over worker threads.
pub fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = worker_count().min(n.max(1));
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                s.spawn(move || {
                    (w * chunk..((w + 1) * chunk).min(n))
                        .map(f)
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Independent stream per sample.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index as u64);
    r
}

/// `n_train + n_test` two-phase permeabilities and their pressure fields on
/// an `n x n` node grid; normalisers are fitted on the training part.
pub fn gen_darcy(n_train: usize, n_test: usize, n: usize, seed: u64) -> Result<Dataset> {
    let sampler = GrfSampler::new(n, n)?;
    let total = n_train + n_test;
    if total == 0 {
        return Err(Error::EmptyData);
    }
    let pairs = par_map(total, |i| {
        let k = grf_to_permeability(&sampler.sample(&mut sample_rng(seed, i)));
        solve_darcy(&k, 1.0).map(|p| (k, p))
    });
    let mut ks = Vec::with_capacity(total * n * n);
    let mut ps = Vec::with_capacity(total * n * n);
    for r in pairs {
        let (k, p) = r?;
        ks.extend_from_slice(k.data());
        ps.extend_from_slice(p.data());
    }
    let mut d = Dataset::new(
        "darcy",
        Tensor::new(&[total, 1, n, n, 1], ks)?,
        Tensor::new(&[total, 1, 1, n, n, 1], ps)?,
        vec![0.0],
        vec!["k".into()],
        vec!["p".into()],
    )?;
    d.n_train = n_train;
    fit_normalizers(&mut d)?;
    Ok(d)
}

pub fn fit_normalizers(d: &mut Dataset) -> Result<()> {
    let tr = d.train();
    d.input_norm = Some(Normalizer::fit(NormMode::MeanStd, &tr.inputs, 1)?);
    d.target_norm = Some(Normalizer::fit(NormMode::MeanStd, &tr.targets, 1)?);
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransientSpec {
    pub grid: [usize; 3],
    /// Producers; one injector sits at the grid centre.
    pub n_wells: usize,
    /// Report steps, evenly spaced up to `t_end` days.
    pub n_t: usize,
    pub n_samples: usize,
    pub rate: (f64, f64),
    pub t_end: f64,
    pub residual_oil: f64,
}

impl TransientSpec {
    pub fn new(grid: [usize; 3], n_wells: usize, n_t: usize, n_samples: usize) -> Self {
        TransientSpec {
            grid,
            n_wells,
            n_t,
            n_samples,
            rate: (4000.0, 6000.0),
            t_end: 1000.0,
            residual_oil: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [nx, ny, nz] = self.grid;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if nx < 4 || ny < 4 || nz < 1 {
            return bad(format!("grid {:?} too small (need >= 4x4x1)", self.grid));
        }
        if self.n_wells == 0 || self.n_wells > 8 {
            return bad(format!("wells must be in 1..=8, got {}", self.n_wells));
        }
        if self.n_t == 0 || self.n_samples == 0 {
            return bad("need at least one step and one sample".into());
        }
        if !(self.rate.0 > 0.0 && self.rate.1 >= self.rate.0) {
            return bad(format!("rate range {:?}", self.rate));
        }
        if !(self.t_end > 0.0 && (0.0..1.0).contains(&self.residual_oil)) {
            return bad("t_end must be positive and residual oil in [0, 1)".into());
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        (1..=self.n_t)
            .map(|j| self.t_end * j as f64 / self.n_t as f64)
            .collect()
    }

    pub fn injector(&self) -> WellMask {
        let [nx, ny, nz] = self.grid;
        WellMask::vertical("INJ", WellRole::Injector, nx / 2, ny / 2, nz, 1).expect("valid")
    }

    /// Producers at the corners, then edge midpoints, one cell in from the
    /// boundary.
    pub fn producers(&self) -> Vec<WellMask> {
        let [nx, ny, nz] = self.grid;
        let (a, b, c, d) = (1, nx - 2, 1, ny - 2);
        let spots = [
            (a, c),
            (b, d),
            (a, d),
            (b, c),
            (a, ny / 2),
            (b, ny / 2),
            (nx / 2, c),
            (nx / 2, d),
        ];
        spots[..self.n_wells]
            .iter()
            .enumerate()
            .map(|(w, &(i, j))| {
                WellMask::vertical(format!("PROD{}", w + 1), WellRole::Producer, i, j, nz, 2)
                    .expect("valid")
            })
            .collect()
    }
}

pub const TRANSIENT_INPUTS: [&str; 3] = ["logk", "rate", "producers"];
pub const TRANSIENT_OUTPUTS: [&str; 3] = ["sw", "so", "wopr"];

/// Water saturation of a radial flood from one vertical injector.
///
/// The front sits where the injected volume `q t` fills a disc, reached
/// sooner through permeable cells (distance scaled by `k^-1/4`), and is
/// smeared over a width growing with the front radius.
pub struct Plume<'a> {
    pub spec: &'a TransientSpec,
    /// Normalised log-permeability `[Nx, Ny, Nz]`.
    pub logk: &'a Tensor,
}

impl Plume<'_> {
    pub fn front_radius(&self, q: f64, t: f64) -> f64 {
        let [nx, ny, _] = self.spec.grid;
        let q_mid = 0.5 * (self.spec.rate.0 + self.spec.rate.1);
        0.6 * nx.max(ny) as f64 * (q * t / (q_mid * self.spec.t_end)).sqrt()
    }

    pub fn saturation(&self, q: f64, t: f64) -> Tensor {
        let [nx, ny, nz] = self.spec.grid;
        let (ci, cj) = ((nx / 2) as f64, (ny / 2) as f64);
        let r = self.front_radius(q, t);
        let width = 1.0 + 0.1 * r;
        let smax = 1.0 - self.spec.residual_oil;
        Tensor::from_fn(&[nx, ny, nz], |ix| {
            let d = ((ix[0] as f64 - ci).powi(2) + (ix[1] as f64 - cj).powi(2)).sqrt();
            let d_eff = d * (-0.25 * self.logk.at(ix)).exp();
            smax / (1.0 + ((d_eff - r) / width).exp())
        })
    }
}

/// Desk-scale two-phase stand-in: per sample a layered log-normal
/// permeability and an injection rate `q ~ U(rate)`; targets are water and
/// oil saturations and per-producer oil rates `q / n_wells * (1 - s_w)`.
pub fn gen_transient_synthetic(spec: &TransientSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let [nx, ny, nz] = spec.grid;
    let cells = nx * ny * nz;
    let sampler = GrfSampler::new(nx, ny)?;
    let times = spec.times();
    let inj = spec.injector();
    let prods = spec.producers();
    let prod_mask = {
        let ones = vec![vec![1.0]; prods.len()];
        bitmask_embed_channels(&ones, &prods, spec.grid, 1, 3)?
    };
    let samples = par_map(spec.n_samples, |s| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rng = sample_rng(seed, s);
        let q = rng.gen_range(spec.rate.0..=spec.rate.1);
        let mut logk = vec![0.0; cells];
        for k in 0..nz {
            let g = sampler.sample(&mut rng);
            let sd = (g.data().iter().map(|v| v * v).sum::<f64>() / g.len() as f64).sqrt();
            for (c, v) in g.data().iter().enumerate() {
                logk[c * nz + k] = v / sd.max(1e-300);
            }
        }
        let logk = Tensor::new(&[nx, ny, nz], logk)?;
        let plume = Plume { spec, logk: &logk };
        let mut input = logk.data().to_vec();
        let rate = bitmask_embed_channels(&[vec![q]], &[inj.clone()], spec.grid, 1, 2)?;
        input.extend_from_slice(&rate.data()[cells..]);
        input.extend_from_slice(&prod_mask.data()[2 * cells..]);
        let n_t = times.len();
        let mut sw = Vec::with_capacity(n_t * cells);
        let mut series = vec![Vec::with_capacity(n_t); prods.len()];
        for &t in &times {
            let s = plume.saturation(q, t);
            for (w, p) in prods.iter().enumerate() {
                let mean = p.cells.iter().map(|c| s.at(c)).sum::<f64>() / p.cells.len() as f64;
                series[w].push(q / prods.len() as f64 * (1.0 - mean));
            }
            sw.extend_from_slice(s.data());
        }
        let mut out = sw.clone();
        out.extend(sw.iter().map(|s| 1.0 - s));
        let wopr = bitmask_embed_channels(&series, &prods, spec.grid, n_t, 3)?;
        out.extend_from_slice(&wopr.data()[2 * n_t * cells..]);
        Ok((input, out))
    });
    let mut inputs = Vec::with_capacity(spec.n_samples * 3 * cells);
    let mut targets = Vec::with_capacity(spec.n_samples * 3 * times.len() * cells);
    for r in samples {
        let (i, t) = r?;
        inputs.extend(i);
        targets.extend(t);
    }
    let mut d = Dataset::new(
        "transient",
        Tensor::new(&[spec.n_samples, 3, nx, ny, nz], inputs)?,
        Tensor::new(&[spec.n_samples, 3, times.len(), nx, ny, nz], targets)?,
        times,
        TRANSIENT_INPUTS.iter().map(|s| s.to_string()).collect(),
        TRANSIENT_OUTPUTS.iter().map(|s| s.to_string()).collect(),
    )?;
    d.wells = std::iter::once(inj).chain(prods).collect();
    Ok(d)
}

/// Injection rate of each sample, read back from the rate channel.
pub fn injection_rates(d: &Dataset) -> Result<Vec<f64>> {
    let inj = d
        .wells
        .iter()
        .find(|w| w.role == WellRole::Injector)
        .ok_or_else(|| Error::InvalidMask("no injector".into()))?;
    let c = d
        .input_channels
        .iter()
        .position(|c| c == "rate")
        .ok_or_else(|| Error::MissingChannel("rate".into()))?;
    let cell = inj.cells[0];
    Ok((0..d.len())
        .map(|s| d.inputs.at(&[s, c, cell[0], cell[1], cell[2]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::wells::bitmask_extract;

    fn small() -> TransientSpec {
        TransientSpec::new([12, 10, 3], 4, 8, 6)
    }

    #[test]
    fn darcy_counts_and_determinism() {
        let a = gen_darcy(3, 2, 9, 4).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a.n_train, 3);
        assert_eq!(a.inputs.shape(), &[5, 1, 9, 9, 1]);
        assert_eq!(a.targets.shape(), &[5, 1, 1, 9, 9, 1]);
        let b = gen_darcy(3, 2, 9, 4).unwrap();
        assert_eq!(
            a.to_container().unwrap().to_bytes().unwrap(),
            b.to_container().unwrap().to_bytes().unwrap()
        );
        // per-sample streams do not depend on how many samples are drawn
        let c = gen_darcy(1, 0, 9, 4).unwrap();
        assert_eq!(
            c.inputs.index_axis0(0).data(),
            a.inputs.index_axis0(0).data()
        );
        assert!(gen_darcy(1, 1, 2, 0).is_err());
    }

    #[test]
    fn transient_closure_bounds_and_wells() {
        let spec = small();
        let d = gen_transient_synthetic(&spec, 3).unwrap();
        assert_eq!(d.targets.shape(), &[6, 3, 8, 12, 10, 3]);
        assert_eq!(d.wells.len(), 5);
        let plane = 8 * 12 * 10 * 3;
        for s in 0..6 {
            let t = d.targets.index_axis0(s);
            let (sw, so) = (&t.data()[..plane], &t.data()[plane..2 * plane]);
            for (a, b) in sw.iter().zip(so) {
                assert_eq!(a + b, 1.0);
                assert!((0.0..=1.0).contains(a) && (0.0..=1.0).contains(b));
            }
        }
        let rates = injection_rates(&d).unwrap();
        assert!(rates.iter().all(|q| (4000.0..=6000.0).contains(q)));
        let mut sorted = rates.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        assert_eq!(sorted.len(), rates.len());
        // producer series live in the wopr channel
        let t0 = d.targets.index_axis0(0);
        for w in d.wells.iter().filter(|w| w.role == WellRole::Producer) {
            let s = bitmask_extract(&t0, w).unwrap();
            assert_eq!(s.len(), 8);
            assert!(s.iter().all(|&v| v > 0.0 && v <= rates[0] / 4.0));
            assert!(s.windows(2).all(|p| p[1] <= p[0]));
        }
        let again = gen_transient_synthetic(&spec, 3).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn doubling_rate_raises_integrated_saturation() {
        let spec = small();
        let [nx, ny, nz] = spec.grid;
        let sampler = GrfSampler::new(nx, ny).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let mut v = Vec::new();
            for _ in 0..nz {
                v.extend(sampler.sample(&mut rng).scale(30.0).into_vec());
            }
            let logk = Tensor::new(&[nz, nx, ny], v)
                .unwrap()
                .permute(&[1, 2, 0])
                .unwrap();
            let plume = Plume {
                spec: &spec,
                logk: &logk,
            };
            let q = rng.gen_range(spec.rate.0..spec.rate.1);
            for t in spec.times() {
                let lo = plume.saturation(q, t).sum();
                let hi = plume.saturation(2.0 * q, t).sum();
                assert!(hi > lo, "t={t}: {hi} <= {lo}");
            }
        }
    }

    #[test]
    fn validation() {
        let mut s = small();
        s.n_wells = 0;
        assert!(gen_transient_synthetic(&s, 0).is_err());
        let mut s = small();
        s.grid = [3, 8, 1];
        assert!(s.validate().is_err());
    }

    #[test]
    fn par_map_keeps_order() {
        assert_eq!(
            par_map(10, |i| i * i),
            (0..10).map(|i| i * i).collect::<Vec<_>>()
        );
    }
}
