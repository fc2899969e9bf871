//! The two 2D studies: ensembles against a gridded target.

use std::fmt::Write as _;
use std::path::Path;

use log::info;
use nslang_core::diagnostics::{bin_samples, build_target_grid, target_coverage, tv_distance_grid, wasserstein2_grid};
use nslang_core::imageio::sci;
use nslang_core::kernels::{run_ensemble, Init, KernelKind};
use nslang_core::State;

use crate::config::{ExperimentConfig, InitSpec};
use crate::output::write_file;
use crate::schedule::{plateau_points, snapshot_schedule};
use crate::{HarnessError, Result};

/// Bins of padding used when checking that the grid holds the target.
const COVERAGE_PAD: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceRow {
    pub kernel: KernelKind,
    pub tau: f64,
    pub iteration: usize,
    pub w2: f64,
    pub tv: f64,
    pub clamp_rate: f64,
    pub inner_iters: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlateauRow {
    pub kernel: KernelKind,
    pub tau: f64,
    pub iterations: usize,
    pub w2: f64,
    pub tv: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Exp2dReport {
    pub distances: Vec<DistanceRow>,
    pub plateau: Vec<PlateauRow>,
}

impl Exp2dReport {
    pub fn plateau_w2(&self, kernel: KernelKind, tau: f64) -> Option<f64> {
        self.plateau
            .iter()
            .find(|r| r.kernel == kernel && r.tau == tau)
            .map(|r| r.w2)
    }

    pub fn distances_csv(&self) -> String {
        let mut s = String::from("kernel,tau,iteration,w2,tv,clamp_rate,inner_iters\n");
        for r in &self.distances {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.kernel,
                sci(r.tau),
                r.iteration,
                sci(r.w2),
                sci(r.tv),
                sci(r.clamp_rate),
                sci(r.inner_iters)
            );
        }
        s
    }

    pub fn plateau_csv(&self) -> String {
        let mut s = String::from("kernel,tau,iterations,plateau_w2,plateau_tv\n");
        for r in &self.plateau {
            let _ = writeln!(s, "{},{},{},{},{}", r.kernel, sci(r.tau), r.iterations, sci(r.w2), sci(r.tv));
        }
        s
    }
}

fn chain_init(init: &InitSpec) -> Result<Init> {
    Ok(match init {
        InitSpec::Zero => Init::Zero,
        InitSpec::Gaussian { mean, std } => Init::Gaussian {
            mean: State::from(mean.clone()),
            std: *std,
        },
        InitSpec::Data => return Err(HarnessError::Config("init = data needs an imaging experiment".into())),
    })
}

/// Run every (kernel, tau) ensemble; writes `distances.csv`, `plateau.csv`
/// and `target_grid.csv` when `out` is given.
pub fn run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Exp2dReport> {
    cfg.validate()?;
    let model = cfg.model_2d();
    let coverage = target_coverage(&model, &cfg.grid, COVERAGE_PAD)?;
    if coverage < cfg.min_coverage {
        return Err(HarnessError::Config(format!(
            "grid holds only {coverage:.9} of the target mass (need {})",
            cfg.min_coverage
        )));
    }
    let target = build_target_grid(&model, &cfg.grid)?;
    if let Some(dir) = out {
        let mut buf = Vec::new();
        target.write_csv(&mut buf)?;
        write_file(&dir.join("target_grid.csv"), &buf)?;
    }
    let init = chain_init(&cfg.init)?;

    let mut report = Exp2dReport::default();
    for &tau in &cfg.taus {
        let last = cfg.iterations_for(tau);
        let schedule = snapshot_schedule(last, cfg.plateau_snapshots);
        let plateau = plateau_points(last, cfg.plateau_snapshots);
        for &kernel in &cfg.kernels {
            // same seed for every kernel: curves share their random numbers
            let chain = cfg.chain_config(kernel, tau).with_init(init.clone());
            let ens = run_ensemble(&chain, &model, cfg.n_chains, &schedule)?;
            let (mut pw, mut pt, mut np) = (0.0, 0.0, 0usize);
            for (s, &k) in ens.iterations.iter().enumerate() {
                let binned = bin_samples(&ens.snapshots[s], &cfg.grid)?;
                let w2 = wasserstein2_grid(&binned.measure, &target)?;
                let tv = tv_distance_grid(&binned.measure, &target)?;
                if plateau.contains(&k) {
                    pw += w2;
                    pt += tv;
                    np += 1;
                }
                report.distances.push(DistanceRow {
                    kernel,
                    tau,
                    iteration: k,
                    w2,
                    tv,
                    clamp_rate: binned.clamp_rate(cfg.n_chains),
                    inner_iters: ens.inner_iterations[s],
                });
            }
            let np = np.max(1) as f64;
            let row = PlateauRow {
                kernel,
                tau,
                iterations: last,
                w2: pw / np,
                tv: pt / np,
            };
            info!(
                "{} tau={:e}: plateau w2={:.4} tv={:.4} ({} prox failures)",
                kernel, tau, row.w2, row.tv, ens.prox_failures
            );
            report.plateau.push(row);
        }
    }
    if let Some(dir) = out {
        write_file(&dir.join("distances.csv"), report.distances_csv().as_bytes())?;
        write_file(&dir.join("plateau.csv"), report.plateau_csv().as_bytes())?;
    }
    Ok(report)
}
