//! Flat `key = value` experiment configuration.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use nslang_core::diagnostics::GridSpec;
use nslang_core::imageio;
use nslang_core::kernels::{ChainConfig, KernelKind};
use nslang_core::operators::ImageShape;
use nslang_core::potentials::{mixed_norm_model, mixed_norm_op_model, ImagingPotential};
use nslang_core::prox::PdSolverConfig;
use nslang_core::PotentialModel;

use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Exp2dPlain,
    Exp2dOp,
    Denoise,
    Deconv,
    Props,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Exp2dPlain => "exp2d-plain",
            Experiment::Exp2dOp => "exp2d-op",
            Experiment::Denoise => "denoise",
            Experiment::Deconv => "deconv",
            Experiment::Props => "props",
        }
    }

    pub fn is_2d(self) -> bool {
        matches!(self, Experiment::Exp2dPlain | Experiment::Exp2dOp)
    }

    pub fn is_imaging(self) -> bool {
        matches!(self, Experiment::Denoise | Experiment::Deconv)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        Ok(match s.trim() {
            "exp2d-plain" => Experiment::Exp2dPlain,
            "exp2d-op" => Experiment::Exp2dOp,
            "denoise" => Experiment::Denoise,
            "deconv" => Experiment::Deconv,
            "props" => Experiment::Props,
            other => return Err(HarnessError::Config(format!("unknown experiment '{other}'"))),
        })
    }
}

/// Initial law of the chains.
#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    Zero,
    /// The observed image (imaging experiments only).
    Data,
    Gaussian { mean: Vec<f64>, std: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub taus: Vec<f64>,
    pub kernels: Vec<KernelKind>,
    pub myula_lambda: Option<f64>,
    pub pd_tol: f64,
    pub pd_max_iters: usize,
    pub init: InitSpec,

    // 2D studies
    pub n_chains: usize,
    /// Physical time `k * tau` covered by the snapshot schedule.
    pub horizon: f64,
    pub plateau_snapshots: usize,
    pub theta: f64,
    pub x0: [f64; 2],
    pub grid: GridSpec,
    pub min_coverage: f64,

    // imaging
    pub image: Option<PathBuf>,
    /// Side of the top-left square crop; 0 keeps the whole image.
    pub crop: usize,
    pub sigma: f64,
    pub delta: f64,
    pub burnin: usize,
    pub samples: usize,
    pub noise_seed: Option<u64>,
    /// Step size of the reference chain; the first entry of `taus` when unset.
    /// MALA targets the exact posterior at any step, so this only moves its
    /// efficiency.
    pub mala_tau: Option<f64>,
    pub mala_burnin: usize,
    pub mala_samples: usize,
    pub reference_seeds: usize,

    // property suite
    pub probes: usize,
    pub inject_m: Option<f64>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut cfg = Self {
            experiment,
            seed: 1,
            taus: vec![1e-1, 1e-2, 1e-3, 1e-4],
            kernels: vec![KernelKind::Explicit, KernelKind::SemiImplicit, KernelKind::Myula],
            myula_lambda: None,
            pd_tol: PdSolverConfig::DEFAULT_STOP_TOL,
            pd_max_iters: PdSolverConfig::DEFAULT_MAX_ITERS,
            init: InitSpec::Zero,
            n_chains: 2000,
            horizon: 10.0,
            plateau_snapshots: 5,
            theta: 5.0,
            x0: [0.0, 1.0],
            grid: GridSpec::square(-2.5, 2.5, 60).expect("valid grid"),
            min_coverage: 1.0 - 1e-6,
            image: None,
            crop: 64,
            sigma: 0.05,
            delta: 0.0,
            burnin: 50_000,
            samples: 50_000,
            noise_seed: None,
            mala_tau: None,
            mala_burnin: 200_000,
            mala_samples: 200_000,
            reference_seeds: 2,
            probes: 10_000,
            inject_m: None,
        };
        match experiment {
            Experiment::Exp2dOp => {
                cfg.kernels = vec![KernelKind::Explicit, KernelKind::Myula];
                // the law is only confined across the diagonal
                cfg.grid = GridSpec::square(-4.0, 5.0, 60).expect("valid grid");
            }
            Experiment::Denoise | Experiment::Deconv => {
                cfg.taus = vec![1e-5];
                cfg.kernels = vec![KernelKind::Explicit, KernelKind::Myula];
                cfg.init = InitSpec::Data;
                // about 30% acceptance; the TV kinks make larger steps mix badly
                cfg.mala_tau = Some(3e-6);
                if experiment == Experiment::Denoise {
                    cfg.theta = 30.0;
                } else {
                    cfg.theta = 20.0;
                    cfg.delta = 1e-3;
                }
            }
            _ => {}
        }
        cfg
    }

    /// Parse `key = value` lines on top of the experiment defaults.
    pub fn parse(experiment: Experiment, text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::defaults(experiment);
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(ln, format!("expected 'key = value', got '{line}'")))?;
            cfg.set(key.trim(), value.trim()).map_err(|msg| cfg_err(ln, msg))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "experiment" => {
                let e: Experiment = v.parse().map_err(|e: HarnessError| e.to_string())?;
                if e != self.experiment {
                    return Err(format!("config is for '{e}', not '{}'", self.experiment));
                }
            }
            "seed" => self.seed = num(v)?,
            "tau" | "taus" => self.taus = list(v)?,
            "kernel" | "kernels" => {
                self.kernels = v
                    .split(',')
                    .map(|s| s.parse::<KernelKind>().map_err(|e| e.to_string()))
                    .collect::<Result<_, _>>()?
            }
            "myula_lambda" => self.myula_lambda = Some(num(v)?),
            "pd_tol" => self.pd_tol = num(v)?,
            "pd_max_iters" => self.pd_max_iters = num(v)?,
            "init" => {
                self.init = match v {
                    "zero" => InitSpec::Zero,
                    "data" => InitSpec::Data,
                    _ => return Err(format!("init must be zero, data or set via init_mean/init_std, got '{v}'")),
                }
            }
            "init_mean" | "init_std" => {
                let (mut mean, mut std) = match &self.init {
                    InitSpec::Gaussian { mean, std } => (mean.clone(), *std),
                    _ => (vec![0.0, 0.0], 1.0),
                };
                if key == "init_mean" {
                    mean = list(v)?;
                } else {
                    std = num(v)?;
                }
                self.init = InitSpec::Gaussian { mean, std };
            }
            "n_chains" => self.n_chains = num(v)?,
            "horizon" => self.horizon = num(v)?,
            "plateau_snapshots" => self.plateau_snapshots = num(v)?,
            "theta" => self.theta = num(v)?,
            "x0" => self.x0 = pair(v)?,
            "grid_lo" => self.grid.lo = pair(v)?,
            "grid_hi" => self.grid.hi = pair(v)?,
            "grid_resolution" => self.grid.resolution = num(v)?,
            "min_coverage" => self.min_coverage = num(v)?,
            "image" => self.image = Some(PathBuf::from(v)),
            "crop" => self.crop = num(v)?,
            "sigma" => self.sigma = num(v)?,
            "delta" => self.delta = num(v)?,
            "burnin" => self.burnin = num(v)?,
            "samples" => self.samples = num(v)?,
            "noise_seed" => self.noise_seed = Some(num(v)?),
            "mala_tau" => self.mala_tau = Some(num(v)?),
            "mala_burnin" => self.mala_burnin = num(v)?,
            "mala_samples" => self.mala_samples = num(v)?,
            "reference_seeds" => self.reference_seeds = num(v)?,
            "probes" => self.probes = num(v)?,
            "inject_m" => self.inject_m = Some(num(v)?),
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Chain counts and iteration budgets used for the published figures.
    pub fn apply_full_scale(&mut self) {
        self.n_chains = 10_000;
        self.crop = 0;
        self.burnin = 500_000;
        self.samples = 500_000;
        let reference = if self.experiment == Experiment::Deconv { 1_000_000 } else { 500_000 };
        self.mala_burnin = reference;
        self.mala_samples = reference;
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed.unwrap_or(self.seed)
    }

    pub fn reference_tau(&self) -> f64 {
        self.mala_tau.unwrap_or(self.taus[0])
    }

    pub fn pd_solver(&self, norm_sq: f64) -> PdSolverConfig {
        PdSolverConfig::for_norm_sq(norm_sq)
            .with_tol(self.pd_tol)
            .with_max_iters(self.pd_max_iters)
    }

    pub fn chain_config(&self, kernel: KernelKind, tau: f64) -> ChainConfig {
        let mut c = ChainConfig::new(kernel, tau).with_seed(self.seed, 0);
        c.myula_lambda = self.myula_lambda;
        c
    }

    /// Model of a 2D study.
    pub fn model_2d(&self) -> PotentialModel {
        match self.experiment {
            Experiment::Exp2dOp => mixed_norm_op_model(self.theta, self.x0, Some(self.pd_solver(2.0))),
            _ => mixed_norm_model(self.theta, self.x0),
        }
    }

    /// Number of kernel steps that covers `horizon` at step `tau`.
    pub fn iterations_for(&self, tau: f64) -> usize {
        ((self.horizon / tau).round() as usize).max(1)
    }

    /// Every parameter check that can run before any sampling.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.experiment == Experiment::Props {
            if self.probes == 0 {
                return bad("probes must be >= 1".into());
            }
            return Ok(());
        }
        if self.taus.is_empty() {
            return bad("tau list is empty".into());
        }
        if self.kernels.is_empty() {
            return bad("kernel list is empty".into());
        }
        if !(self.pd_tol > 0.0) || self.pd_max_iters == 0 {
            return bad("pd_tol must be positive and pd_max_iters >= 1".into());
        }
        if self.experiment == Experiment::Exp2dOp && self.kernels.contains(&KernelKind::SemiImplicit) {
            return bad("exp2d-op runs explicit and myula only".into());
        }
        if self.experiment.is_2d() {
            if self.n_chains == 0 {
                return bad("n_chains must be >= 1".into());
            }
            if !(self.horizon > 0.0) {
                return bad("horizon must be positive".into());
            }
            GridSpec::new(self.grid.lo, self.grid.hi, self.grid.resolution)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            if self.init == InitSpec::Data {
                return bad("init = data needs an imaging experiment".into());
            }
            if let InitSpec::Gaussian { mean, std } = &self.init {
                if mean.len() != 2 || !(*std >= 0.0) {
                    return bad("init_mean needs two entries and init_std >= 0".into());
                }
            }
            let model = self.model_2d();
            self.check_kernels(&model, &self.taus)?;
        }
        if self.experiment.is_imaging() {
            if !(self.sigma > 0.0) || self.theta < 0.0 || self.delta < 0.0 {
                return bad("need sigma > 0, theta >= 0, delta >= 0".into());
            }
            if self.experiment == Experiment::Deconv && !(self.delta > 0.0) {
                return bad("deconvolution needs delta > 0 for strong convexity".into());
            }
            if self.samples < 2 || self.mala_samples < 2 || self.reference_seeds == 0 {
                return bad("need samples >= 2, mala_samples >= 2, reference_seeds >= 1".into());
            }
            let path = self
                .image
                .as_ref()
                .ok_or_else(|| HarnessError::Config("imaging experiments need 'image'".into()))?;
            let img = imageio::read_pgm(path)
                .map_err(|e| HarnessError::Config(format!("cannot load {}: {e}", path.display())))?;
            let shape = self.crop_shape(img.shape)?;
            // only m and L matter here; the data term's center does not
            let probe = self
                .imaging_model(vec![0.0; shape.len()], shape)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            let mut taus = self.taus.clone();
            taus.push(self.reference_tau());
            self.check_kernels(&probe, &taus)?;
        }
        Ok(())
    }

    fn check_kernels(&self, model: &PotentialModel, taus: &[f64]) -> Result<(), HarnessError> {
        for &tau in taus {
            for &k in &self.kernels {
                self.chain_config(k, tau)
                    .validate(model)
                    .map_err(|e| HarnessError::Config(format!("{k} at tau={tau}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn imaging_model(&self, y: Vec<f64>, shape: ImageShape) -> nslang_core::Result<PotentialModel> {
        let spec = if self.experiment == Experiment::Deconv {
            ImagingPotential::deconvolution(y, shape, self.sigma, self.theta, self.delta)
        } else {
            ImagingPotential::denoising(y, shape, self.sigma, self.theta)
        };
        spec.with_solver(self.pd_solver(8.0)).build()
    }

    pub fn crop_shape(&self, full: ImageShape) -> Result<ImageShape, HarnessError> {
        if self.crop == 0 {
            return Ok(full);
        }
        if self.crop > full.rows || self.crop > full.cols {
            return Err(HarnessError::Config(format!(
                "crop {} exceeds image size {}x{}",
                self.crop, full.rows, full.cols
            )));
        }
        Ok(ImageShape::new(self.crop, self.crop))
    }

    /// Canonical listing of every resolved parameter.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let fmt_list = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "program = nslang {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "experiment = {}", self.experiment);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "taus = {}", fmt_list(&self.taus));
        let kernels: Vec<&str> = self.kernels.iter().map(|k| k.name()).collect();
        let _ = writeln!(s, "kernels = {}", kernels.join(", "));
        match self.myula_lambda {
            Some(l) => {
                let _ = writeln!(s, "myula_lambda = {l:e}");
            }
            None => {
                let _ = writeln!(s, "myula_lambda = tau/(1-L*tau)");
            }
        }
        let _ = writeln!(s, "pd_tol = {:e}", self.pd_tol);
        let _ = writeln!(s, "pd_max_iters = {}", self.pd_max_iters);
        let init = match &self.init {
            InitSpec::Zero => "zero".to_string(),
            InitSpec::Data => "data".to_string(),
            InitSpec::Gaussian { mean, std } => format!("gaussian mean=({}) std={std:e}", fmt_list(mean)),
        };
        let _ = writeln!(s, "init = {init}");
        let _ = writeln!(s, "theta = {:e}", self.theta);
        if self.experiment.is_2d() {
            let _ = writeln!(s, "n_chains = {}", self.n_chains);
            let _ = writeln!(s, "horizon = {:e}", self.horizon);
            let _ = writeln!(s, "plateau_snapshots = {}", self.plateau_snapshots);
            let _ = writeln!(s, "x0 = {}", fmt_list(&self.x0));
            let _ = writeln!(s, "grid_lo = {}", fmt_list(&self.grid.lo));
            let _ = writeln!(s, "grid_hi = {}", fmt_list(&self.grid.hi));
            let _ = writeln!(s, "grid_resolution = {}", self.grid.resolution);
            let _ = writeln!(s, "min_coverage = {:e}", self.min_coverage);
        }
        if self.experiment.is_imaging() {
            let image = self.image.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            let _ = writeln!(s, "image = {image}");
            let _ = writeln!(s, "crop = {}", self.crop);
            let _ = writeln!(s, "sigma = {:e}", self.sigma);
            let _ = writeln!(s, "delta = {:e}", self.delta);
            let _ = writeln!(s, "burnin = {}", self.burnin);
            let _ = writeln!(s, "samples = {}", self.samples);
            let _ = writeln!(s, "noise_seed = {}", self.noise_seed());
            let _ = writeln!(s, "mala_tau = {:e}", self.reference_tau());
            let _ = writeln!(s, "mala_burnin = {}", self.mala_burnin);
            let _ = writeln!(s, "mala_samples = {}", self.mala_samples);
            let _ = writeln!(s, "reference_seeds = {}", self.reference_seeds);
        }
        if self.experiment == Experiment::Props {
            let _ = writeln!(s, "probes = {}", self.probes);
            if let Some(m) = self.inject_m {
                let _ = writeln!(s, "inject_m = {m:e}");
            }
        }
        s
    }
}

fn cfg_err(ln: usize, msg: String) -> HarnessError {
    HarnessError::Config(format!("line {}: {msg}", ln + 1))
}

fn num<T: FromStr>(v: &str) -> Result<T, String> {
    v.trim().parse::<T>().map_err(|_| format!("cannot parse '{v}'"))
}

fn list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(num).collect()
}

fn pair(v: &str) -> Result<[f64; 2], String> {
    let l = list(v)?;
    <[f64; 2]>::try_from(l.as_slice()).map_err(|_| format!("expected two numbers, got '{v}'"))
}
