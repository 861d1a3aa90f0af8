//! `hno`: data generation, training, evaluation, equivalence studies and
//! plotting for hybrid DeepONet surrogates.

mod config;
mod fail;
mod plot;
mod report;
mod svg;
mod train_cmd;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hno::data::{gen_darcy, gen_transient_synthetic, TransientSpec};
use hno::equiv::{
    convergence_study, random_shallow_mlp, Direction, ExplicitKan, Target, Univariate,
    DEFAULT_SAMPLES,
};
use hno::Activation;

use fail::{runtime, usage, CliResult, Failure};

#[derive(Parser, Debug)]
#[command(name = "hno", version, about = "Hybrid DeepONet neural operators")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Random two-phase permeabilities and their Darcy pressure fields.
    GenDarcy {
        #[arg(long, default_value_t = 300)]
        n_train: usize,
        #[arg(long, default_value_t = 60)]
        n_test: usize,
        /// Nodes per side.
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthetic injector/producer saturation trajectories.
    GenTransient {
        /// `nx,ny,nz`.
        #[arg(long, value_delimiter = ',', default_values_t = [24, 24, 4])]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 25)]
        n_samples: usize,
        /// Report steps.
        #[arg(long, default_value_t = 40)]
        nt: usize,
        /// Producer wells.
        #[arg(long, default_value_t = 4)]
        wells: usize,
        /// Samples kept for training; the rest are held out.
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains the model described by a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from `last.hno` in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop once this many epochs are complete.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Error tables, well series and phase balance of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        report_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = report::Subset::All)]
        split: report::Subset,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
    },
    /// Sup-error convergence of the MLP/KAN conversions.
    Equiv {
        /// `mlp_to_kan` or `kan_to_mlp`.
        #[arg(long)]
        direction: String,
        /// Comma-separated, ascending capacities.
        #[arg(long, value_delimiter = ',', required = true)]
        sweep: Vec<usize>,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        /// Target activation: tanh, silu or identity.
        #[arg(long, default_value = "tanh")]
        activation: String,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV report path.
        #[arg(long)]
        out: PathBuf,
    },
    /// One SVG per metric column of a CSV.
    Plot {
        #[arg(long)]
        metrics_csv: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        window: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::GenDarcy {
            n_train,
            n_test,
            grid,
            seed,
            out,
        } => {
            if grid < 4 {
                return Err(Failure::Usage(format!("gen-darcy: grid {grid} is below 4")));
            }
            if n_train + n_test == 0 {
                return Err(Failure::Usage("gen-darcy: no samples requested".into()));
            }
            let d = gen_darcy(n_train, n_test, grid, seed).map_err(runtime("gen-darcy"))?;
            write(&d, &out)?;
            println!(
                "{}: {} samples ({} train, {} test) on {grid}x{grid}",
                out.display(),
                d.len(),
                n_train,
                n_test
            );
            Ok(())
        }
        Cmd::GenTransient {
            grid,
            n_samples,
            nt,
            wells,
            n_train,
            seed,
            out,
        } => {
            let grid: [usize; 3] = grid.try_into().map_err(|g| {
                Failure::Usage(format!("gen-transient: grid needs nx,ny,nz, got {g:?}"))
            })?;
            let spec = TransientSpec::new(grid, wells, nt, n_samples);
            spec.validate().map_err(usage("gen-transient"))?;
            let mut d = gen_transient_synthetic(&spec, seed).map_err(runtime("gen-transient"))?;
            if let Some(n) = n_train {
                if n > n_samples {
                    return Err(Failure::Usage(format!(
                        "gen-transient: n-train {n} exceeds {n_samples} samples"
                    )));
                }
                d.n_train = n;
            }
            hno::data::generate::fit_normalizers(&mut d).map_err(runtime("gen-transient"))?;
            write(&d, &out)?;
            let rates =
                hno::data::generate::injection_rates(&d).map_err(runtime("gen-transient"))?;
            let (lo, hi) = rates
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| {
                    (a.min(r), b.max(r))
                });
            println!(
                "{}: {} samples, {} steps, {} wells, grid {:?}, rates {lo:.1}..{hi:.1}",
                out.display(),
                d.len(),
                d.n_t(),
                d.wells.len(),
                spec.grid
            );
            Ok(())
        }
        Cmd::Train {
            config,
            resume,
            stop_after,
        } => train_cmd::run(&config, resume, stop_after),
        Cmd::Eval {
            checkpoint,
            dataset,
            report_dir,
            split,
            batch_size,
        } => report::run(&checkpoint, &dataset, &report_dir, split, batch_size),
        Cmd::Equiv {
            direction,
            sweep,
            epsilon,
            activation,
            samples,
            seed,
            out,
        } => equiv(
            &direction,
            &sweep,
            epsilon,
            &activation,
            samples,
            seed,
            &out,
        ),
        Cmd::Plot {
            metrics_csv,
            out,
            window,
        } => plot::run(&metrics_csv, &out, window),
    }
}

fn write(d: &hno::data::Dataset, out: &Path) -> CliResult<()> {
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(runtime(&format!("creating {}", dir.display())))?;
    }
    d.write(out)
        .map_err(runtime(&format!("writing {}", out.display())))
}

const SQUARE: [(f64, f64); 2] = [(-1.0, 1.0), (-1.0, 1.0)];

/// Fixed two-input KAN of width 5: affine edges for the identity case,
/// smooth ones otherwise.
fn target_kan(act: Activation) -> ExplicitKan {
    let affine = |slope: f64, offset: f64| Univariate::Affine { slope, offset };
    if act == Activation::Identity {
        let inner = (0..5)
            .map(|i| {
                let a = 0.3 + 0.2 * i as f64;
                vec![affine(a, -0.1 * i as f64), affine(1.0 - a, 0.05)]
            })
            .collect();
        let outer = (0..5).map(|i| affine(0.5 - 0.2 * i as f64, 0.1)).collect();
        return ExplicitKan::new(inner, outer, 0.2).expect("fixed shape");
    }
    let inner = (0..5)
        .map(|i| {
            let f = 1.0 + 0.5 * i as f64;
            vec![
                Univariate::func(move |x| (f * x).sin()),
                Univariate::func(move |x| (x - 0.2 * f).powi(2)),
            ]
        })
        .collect();
    let outer = (0..5)
        .map(|i| {
            let c = 0.4 - 0.15 * i as f64;
            Univariate::func(move |u| (u + c).tanh())
        })
        .collect();
    ExplicitKan::new(inner, outer, 0.1).expect("fixed shape")
}

fn equiv(
    direction: &str,
    sweep: &[usize],
    eps: f64,
    activation: &str,
    samples: usize,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    let dir: Direction = direction.parse().map_err(usage("equiv"))?;
    let act: Activation = activation.parse().map_err(usage("equiv"))?;
    if sweep.is_empty() || sweep.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::Usage(format!(
            "equiv: sweep {sweep:?} must be nonempty and strictly ascending"
        )));
    }
    if !(eps >= 0.0) {
        return Err(Failure::Usage(format!(
            "equiv: epsilon {eps} must be non-negative"
        )));
    }
    let target = match dir {
        Direction::MlpToKan => Target::Mlp {
            params: random_shallow_mlp(2, 5, act, seed),
            order: 3,
        },
        Direction::KanToMlp => Target::Kan {
            kan: target_kan(act),
            act,
        },
    };
    let r = convergence_study(&target, sweep, &SQUARE, eps, samples).map_err(usage("equiv"))?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(runtime("equiv"))?;
    }
    std::fs::write(out, r.to_csv()).map_err(runtime(&format!("writing {}", out.display())))?;
    println!("{}", r.verdict());
    Ok(())
}
