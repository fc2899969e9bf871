//! Denoising and deconvolution runs against a MALA reference.

use std::fmt::Write as _;
use std::path::Path;

use log::info;
use nslang_core::diagnostics::{reference_error, MomentAccumulator};
use nslang_core::imageio::{self, sci, GrayImage};
use nslang_core::kernels::{run_chain, ChainConfig, Init, KernelKind, Observer};
use nslang_core::operators::{ConvOp, ImageShape, LinearOp};
use nslang_core::{RngStream, State};

use crate::config::{Experiment, ExperimentConfig, InitSpec};
use crate::output::write_file;
use crate::schedule::log_schedule;
use crate::{HarnessError, Result};

/// Stream reserved for the synthetic observation noise.
const NOISE_STREAM: u64 = u64::MAX;
/// Reference chain `s` runs on stream `REFERENCE_STREAM + s`.
const REFERENCE_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorPoint {
    pub k: usize,
    pub mean_l2: f64,
    pub var_l2: f64,
}

#[derive(Clone, Debug)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct KernelRun {
    pub kernel: KernelKind,
    pub tau: f64,
    pub moments: Moments,
    pub errors: Vec<ErrorPoint>,
    pub acceptance: Option<f64>,
    pub prox_failures: usize,
}

impl KernelRun {
    pub fn final_error(&self) -> Option<&ErrorPoint> {
        self.errors.last()
    }

    pub fn error_at(&self, k: usize) -> Option<&ErrorPoint> {
        self.errors.iter().find(|e| e.k == k)
    }
}

#[derive(Clone, Debug)]
pub struct ImagingReport {
    pub shape: ImageShape,
    pub clean: Vec<f64>,
    pub observed: Vec<f64>,
    /// Pooled over all reference seeds.
    pub reference: Moments,
    pub reference_seeds: Vec<Moments>,
    pub reference_acceptance: Vec<f64>,
    pub runs: Vec<KernelRun>,
}

impl ImagingReport {
    pub fn run(&self, kernel: KernelKind, tau: f64) -> Option<&KernelRun> {
        self.runs.iter().find(|r| r.kernel == kernel && r.tau == tau)
    }

    /// Mean and variance errors between reference seeds `0` and `1`.
    pub fn reference_spread(&self) -> Option<(f64, f64)> {
        let (a, b) = (self.reference_seeds.first()?, self.reference_seeds.get(1)?);
        reference_error(&a.mean, &a.var, &b.mean, &b.var).ok()
    }

    pub fn moments_error_csv(&self) -> String {
        let mut s = String::from("kernel,tau,k,mean_l2,var_l2\n");
        for r in &self.runs {
            for e in &r.errors {
                let _ = writeln!(s, "{},{},{},{},{}", r.kernel, sci(r.tau), e.k, sci(e.mean_l2), sci(e.var_l2));
            }
        }
        s
    }

    pub fn reference_csv(&self) -> String {
        let mut s = String::from("seed_index,acceptance,mean_l2_to_pooled,var_l2_to_pooled\n");
        for (i, m) in self.reference_seeds.iter().enumerate() {
            let (a, b) = reference_error(&m.mean, &m.var, &self.reference.mean, &self.reference.var)
                .expect("shapes agree");
            let _ = writeln!(s, "{},{},{},{}", i, sci(self.reference_acceptance[i]), sci(a), sci(b));
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("kernel,tau,final_mean_l2,final_var_l2,acceptance,prox_failures\n");
        for r in &self.runs {
            let e = r.final_error().cloned().unwrap_or(ErrorPoint {
                k: 0,
                mean_l2: f64::NAN,
                var_l2: f64::NAN,
            });
            let acc = r.acceptance.map(sci).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.kernel,
                sci(r.tau),
                sci(e.mean_l2),
                sci(e.var_l2),
                acc,
                r.prox_failures
            );
        }
        if let Some((m, v)) = self.reference_spread() {
            let _ = writeln!(s, "reference_spread,,{},{},,", sci(m), sci(v));
        }
        s
    }
}

/// Running moments compared with a fixed reference at chosen sample counts.
struct ErrorTrace<'a> {
    acc: MomentAccumulator,
    checkpoints: Vec<usize>,
    next: usize,
    reference: &'a Moments,
    points: Vec<ErrorPoint>,
}

impl Observer for ErrorTrace<'_> {
    fn observe(&mut self, _iteration: usize, state: &[f64]) {
        self.acc.update(state);
        let n = self.acc.count() as usize;
        if self.next < self.checkpoints.len() && self.checkpoints[self.next] == n {
            self.next += 1;
            let var = self.acc.variance().expect("checkpoints start at 2");
            let (mean_l2, var_l2) =
                reference_error(self.acc.mean(), &var, &self.reference.mean, &self.reference.var)
                    .expect("shapes agree");
            self.points.push(ErrorPoint { k: n, mean_l2, var_l2 });
        }
    }
}

/// Piecewise-constant test image: a bright block, a disk, a dark ellipse
/// and a row of small squares on a grey background.
pub fn phantom(shape: ImageShape) -> GrayImage {
    let (r, c) = (shape.rows as f64, shape.cols as f64);
    let mut data = vec![0.3; shape.len()];
    for i in 0..shape.rows {
        for j in 0..shape.cols {
            let (u, v) = ((i as f64 + 0.5) / r, (j as f64 + 0.5) / c);
            let px = &mut data[i * shape.cols + j];
            if (0.1..0.45).contains(&u) && (0.1..0.4).contains(&v) {
                *px = 0.8;
            }
            if (u - 0.65).powi(2) + (v - 0.3).powi(2) < 0.18 * 0.18 {
                *px = 0.55;
            }
            if ((u - 0.4) / 0.3).powi(2) + ((v - 0.72) / 0.15).powi(2) < 1.0 {
                *px = 0.05;
            }
            if (0.85..0.93).contains(&u) && ((v * 10.0).fract() < 0.5) && v > 0.5 {
                *px = 1.0;
            }
        }
    }
    GrayImage { shape, data }
}

/// Clean image, cropped.
pub fn load_clean(cfg: &ExperimentConfig) -> Result<GrayImage> {
    let path = cfg
        .image
        .as_ref()
        .ok_or_else(|| HarnessError::Config("imaging experiments need 'image'".into()))?;
    let img = imageio::read_pgm(path)?;
    let shape = cfg.crop_shape(img.shape)?;
    Ok(img.crop(shape.rows, shape.cols)?)
}

/// `y = A(clean) + sigma * noise`, `A` the identity or the 5x5 blur.
pub fn synthesize_observation(cfg: &ExperimentConfig, clean: &GrayImage) -> Vec<f64> {
    let mut y = if cfg.experiment == Experiment::Deconv {
        let k = ConvOp::gaussian(clean.shape);
        let mut out = vec![0.0; clean.shape.len()];
        k.apply(&clean.data, &mut out);
        out
    } else {
        clean.data.clone()
    };
    let mut rng = RngStream::new(cfg.noise_seed(), NOISE_STREAM);
    for v in &mut y {
        *v += cfg.sigma * rng.normal();
    }
    y
}

fn chain_init(cfg: &ExperimentConfig, y: &[f64]) -> Result<Init> {
    Ok(match &cfg.init {
        InitSpec::Zero => Init::Zero,
        InitSpec::Data => Init::Point(State::from(y.to_vec())),
        InitSpec::Gaussian { mean, std } => {
            if mean.len() != y.len() {
                return Err(HarnessError::Config("init_mean length must match the image".into()));
            }
            Init::Gaussian {
                mean: State::from(mean.clone()),
                std: *std,
            }
        }
    })
}

/// Full imaging experiment; writes images and CSVs when `out` is given.
pub fn run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ImagingReport> {
    cfg.validate()?;
    let clean = load_clean(cfg)?;
    let shape = clean.shape;
    let y = synthesize_observation(cfg, &clean);
    let model = cfg.imaging_model(y.clone(), shape)?;
    let init = chain_init(cfg, &y)?;

    let mut pooled = MomentAccumulator::new(model.dim());
    let mut seeds = Vec::new();
    let mut acceptance = Vec::new();
    for s in 0..cfg.reference_seeds {
        let chain = ChainConfig::new(KernelKind::Mala, cfg.reference_tau())
            .with_iterations(cfg.mala_burnin, cfg.mala_samples)
            .with_seed(cfg.seed, REFERENCE_STREAM + s as u64)
            .with_init(init.clone());
        let mut acc = MomentAccumulator::new(model.dim());
        let summary = run_chain(&chain, &model, &mut [&mut acc])?;
        pooled.merge(&acc)?;
        let (mean, var) = acc.finalize()?;
        let rate = summary.acceptance_rate.unwrap_or(f64::NAN);
        info!("reference seed {s}: acceptance {rate:.3}");
        seeds.push(Moments { mean, var });
        acceptance.push(rate);
    }
    let (mean, var) = pooled.finalize()?;
    let reference = Moments { mean, var };

    let checkpoints: Vec<usize> = log_schedule(cfg.samples).into_iter().filter(|&k| k >= 2).collect();
    let mut runs = Vec::new();
    for &tau in &cfg.taus {
        for &kernel in &cfg.kernels {
            let chain = cfg
                .chain_config(kernel, tau)
                .with_iterations(cfg.burnin, cfg.samples)
                .with_init(init.clone());
            let mut trace = ErrorTrace {
                acc: MomentAccumulator::new(model.dim()),
                checkpoints: checkpoints.clone(),
                next: 0,
                reference: &reference,
                points: Vec::new(),
            };
            let summary = run_chain(&chain, &model, &mut [&mut trace])?;
            let (mean, var) = trace.acc.finalize()?;
            if let Some(e) = trace.points.last() {
                info!("{kernel} tau={tau:e}: final mean error {:.3e}", e.mean_l2);
            }
            runs.push(KernelRun {
                kernel,
                tau,
                moments: Moments { mean, var },
                errors: trace.points,
                acceptance: summary.acceptance_rate,
                prox_failures: summary.prox_failures,
            });
        }
    }

    let report = ImagingReport {
        shape,
        clean: clean.data,
        observed: y,
        reference,
        reference_seeds: seeds,
        reference_acceptance: acceptance,
        runs,
    };
    if let Some(dir) = out {
        write_outputs(&report, dir)?;
    }
    Ok(report)
}

fn write_outputs(r: &ImagingReport, dir: &Path) -> Result<()> {
    let pgm = |name: &str, data: &[f64]| -> Result<()> {
        let img = GrayImage::new(r.shape, data.to_vec())?;
        Ok(imageio::write_pgm(dir.join(name), &img)?)
    };
    let csv = |name: &str, data: &[f64]| -> Result<()> { Ok(imageio::write_csv_matrix(dir.join(name), r.shape, data)?) };
    pgm("clean.pgm", &r.clean)?;
    pgm("observed.pgm", &r.observed)?;
    csv("observed.csv", &r.observed)?;
    pgm("mean_mala.pgm", &r.reference.mean)?;
    csv("mean_mala.csv", &r.reference.mean)?;
    csv("var_mala.csv", &r.reference.var)?;
    for run in &r.runs {
        let tag = format!("{}_{:e}", run.kernel, run.tau);
        pgm(&format!("mean_{tag}.pgm"), &run.moments.mean)?;
        csv(&format!("mean_{tag}.csv"), &run.moments.mean)?;
        csv(&format!("var_{tag}.csv"), &run.moments.var)?;
    }
    write_file(&dir.join("moments_error.csv"), r.moments_error_csv().as_bytes())?;
    write_file(&dir.join("reference.csv"), r.reference_csv().as_bytes())?;
    write_file(&dir.join("summary.csv"), r.summary_csv().as_bytes())?;
    Ok(())
}
