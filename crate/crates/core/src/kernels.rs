//! Markov transition kernels and chain drivers.
//!
//! * explicit: `x - tau dU(x) + sqrt(2 tau) W`
//! * semi-implicit: `prox_{tau G}(x - tau grad F(x) + sqrt(2 tau) W)`
//! * MYULA: `(1 - tau/lambda) x - tau grad F(x) + (tau/lambda) prox_{lambda G}(x) + sqrt(2 tau) W`
//! * MALA: the explicit proposal with a Metropolis-Hastings correction
//!
//! [`Transition`] holds the per-chain buffers and advances a state in
//! place; the free `*_step` functions are allocating one-shot wrappers.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::potential::PotentialModel;
use crate::prox::{ProxScratch, ProxStatus};
use crate::state::{dist, norm};
use crate::{Error, Result, RngStream, State};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelKind {
    Explicit,
    SemiImplicit,
    Myula,
    Mala,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Explicit => "explicit",
            KernelKind::SemiImplicit => "semi_implicit",
            KernelKind::Myula => "myula",
            KernelKind::Mala => "mala",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "explicit" => Ok(KernelKind::Explicit),
            "semi_implicit" | "semi-implicit" | "implicit" => Ok(KernelKind::SemiImplicit),
            "myula" => Ok(KernelKind::Myula),
            "mala" => Ok(KernelKind::Mala),
            other => Err(Error::InvalidConfig(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Initial distribution of a chain.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Init {
    /// Point mass at the origin.
    #[default]
    Zero,
    Point(State),
    /// `mean + std * N(0, I)`, drawn from the chain's own stream.
    Gaussian { mean: State, std: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    pub tau: f64,
    pub burnin: usize,
    pub samples: usize,
    pub seed: u64,
    pub stream_id: u64,
    pub kernel: KernelKind,
    /// Moreau-Yosida parameter; `tau / (1 - L tau)` when unset.
    pub myula_lambda: Option<f64>,
    pub init: Init,
}

impl ChainConfig {
    pub fn new(kernel: KernelKind, tau: f64) -> Self {
        Self {
            tau,
            burnin: 0,
            samples: 1,
            seed: 0,
            stream_id: 0,
            kernel,
            myula_lambda: None,
            init: Init::Zero,
        }
    }

    pub fn with_iterations(mut self, burnin: usize, samples: usize) -> Self {
        self.burnin = burnin;
        self.samples = samples;
        self
    }

    pub fn with_seed(mut self, seed: u64, stream_id: u64) -> Self {
        self.seed = seed;
        self.stream_id = stream_id;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    /// The Moreau-Yosida parameter MYULA uses under this config.
    pub fn lambda(&self, lipschitz: f64) -> f64 {
        self.myula_lambda
            .unwrap_or(self.tau / (1.0 - lipschitz * self.tau))
    }

    pub fn validate(&self, model: &PotentialModel) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("step size must be positive, got {}", self.tau));
        }
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        let (m, l) = (model.strong_convexity(), model.lipschitz());
        match self.kernel {
            KernelKind::Explicit | KernelKind::Mala => {}
            KernelKind::SemiImplicit => {
                if !model.has_prox() {
                    return bad("semi-implicit kernel needs a prox of G".into());
                }
                let limit = (m + l) / (m * l);
                if self.tau >= limit {
                    return bad(format!("semi-implicit needs tau < (m+L)/(mL) = {limit}"));
                }
            }
            KernelKind::Myula => {
                if !model.has_prox() {
                    return bad("MYULA needs a prox of G".into());
                }
                if self.myula_lambda.is_none() && l * self.tau >= 1.0 {
                    return bad(format!("default lambda needs tau < 1/L = {}", 1.0 / l));
                }
                let lambda = self.lambda(l);
                if !(lambda > 0.0) {
                    return bad(format!("lambda must be positive, got {lambda}"));
                }
                let limit = lambda / (lambda * l + 1.0);
                if self.tau > limit * (1.0 + 1e-12) {
                    return bad(format!("MYULA needs tau <= lambda/(lambda L + 1) = {limit}"));
                }
            }
        }
        let d = model.dim();
        match &self.init {
            Init::Point(p) | Init::Gaussian { mean: p, .. } if p.dim() != d => Err(Error::ShapeMismatch {
                expected: d,
                found: p.dim(),
            }),
            _ => Ok(()),
        }
    }

    pub fn initial_state(&self, d: usize, rng: &mut RngStream) -> State {
        match &self.init {
            Init::Zero => State::zeros(d),
            Init::Point(p) => p.clone(),
            Init::Gaussian { mean, std } => {
                let mut s = mean.clone();
                for v in s.iter_mut() {
                    *v += std * rng.normal();
                }
                s
            }
        }
    }
}

/// One-step contraction bound `sqrt(1 - tau m L / (m + L))` of the coupled
/// semi-implicit kernel. Holds for `tau <= 2 / (m + L)`, where the gradient
/// step alone already contracts by `sqrt(1 - 2 tau m L / (m + L))`.
pub fn semi_implicit_contraction_bound(tau: f64, m: f64, l: f64) -> f64 {
    (1.0 - tau * m * l / (m + l)).sqrt()
}

/// Side information of one kernel application.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub accepted: Option<bool>,
    pub prox: Option<ProxStatus>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelOutput {
    pub next: State,
    pub accepted: Option<bool>,
    pub prox: Option<ProxStatus>,
}

/// A kernel bound to a model and step size, with its scratch buffers.
pub struct Transition<'a> {
    model: &'a PotentialModel,
    kind: KernelKind,
    tau: f64,
    lambda: f64,
    noise_scale: f64,
    noise: Vec<f64>,
    drift: Vec<f64>,
    work: Vec<f64>,
    proposal: Vec<f64>,
    prox_scratch: ProxScratch,
    // MALA cache: point, U, dU
    cached_at: Vec<f64>,
    cached_value: f64,
    cached_grad: Vec<f64>,
    cache_valid: bool,
}

impl<'a> Transition<'a> {
    pub fn new(model: &'a PotentialModel, cfg: &ChainConfig) -> Result<Self> {
        cfg.validate(model)?;
        Ok(Self::unchecked(model, cfg.kernel, cfg.tau, cfg.lambda(model.lipschitz())))
    }

    fn unchecked(model: &'a PotentialModel, kind: KernelKind, tau: f64, lambda: f64) -> Self {
        let d = model.dim();
        Self {
            model,
            kind,
            tau,
            lambda,
            noise_scale: (2.0 * tau).sqrt(),
            noise: vec![0.0; d],
            drift: vec![0.0; d],
            work: vec![0.0; d],
            proposal: vec![0.0; d],
            prox_scratch: ProxScratch::default(),
            cached_at: vec![0.0; d],
            cached_value: 0.0,
            cached_grad: vec![0.0; d],
            cache_valid: false,
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Advance `x` with fresh noise from `rng`. MALA additionally draws one
    /// uniform for the accept test.
    pub fn step(&mut self, x: &mut [f64], rng: &mut RngStream) -> Result<StepInfo> {
        let mut noise = std::mem::take(&mut self.noise);
        rng.fill_normal(&mut noise);
        let log_u = if self.kind == KernelKind::Mala {
            rng.uniform().ln()
        } else {
            0.0
        };
        let out = self.step_with_noise(x, &noise, log_u);
        self.noise = noise;
        out
    }

    /// Advance `x` with the given standard normal vector `noise`; `log_u`
    /// is the log of the uniform used by the MALA accept test.
    pub fn step_with_noise(&mut self, x: &mut [f64], noise: &[f64], log_u: f64) -> Result<StepInfo> {
        let (tau, s) = (self.tau, self.noise_scale);
        match self.kind {
            KernelKind::Explicit => {
                self.model.subgrad_u(x, &mut self.drift, &mut self.work);
                for i in 0..x.len() {
                    x[i] = x[i] - tau * self.drift[i] + s * noise[i];
                }
                Ok(StepInfo::default())
            }
            KernelKind::SemiImplicit => {
                self.model.grad_f(x, &mut self.drift);
                for i in 0..x.len() {
                    self.work[i] = x[i] - tau * self.drift[i] + s * noise[i];
                }
                let st = self.model.prox_g(&self.work, tau, x, &mut self.prox_scratch)?;
                Ok(StepInfo {
                    accepted: None,
                    prox: Some(st),
                })
            }
            KernelKind::Myula => {
                let ratio = tau / self.lambda;
                self.model.grad_f(x, &mut self.drift);
                let st = self.model.prox_g(x, self.lambda, &mut self.work, &mut self.prox_scratch)?;
                for i in 0..x.len() {
                    x[i] = (1.0 - ratio) * x[i] - tau * self.drift[i] + ratio * self.work[i] + s * noise[i];
                }
                Ok(StepInfo {
                    accepted: None,
                    prox: Some(st),
                })
            }
            KernelKind::Mala => {
                if !self.cache_valid || self.cached_at.as_slice() != &*x {
                    self.cached_at.copy_from_slice(x);
                    self.cached_value = self.model.value(x);
                    self.model.subgrad_u(x, &mut self.cached_grad, &mut self.work);
                    self.cache_valid = true;
                }
                for i in 0..x.len() {
                    self.proposal[i] = x[i] - tau * self.cached_grad[i] + s * noise[i];
                }
                let uy = self.model.value(&self.proposal);
                self.model.subgrad_u(&self.proposal, &mut self.drift, &mut self.work);
                let log_alpha = mala_log_ratio_parts(
                    tau,
                    x,
                    self.cached_value,
                    &self.cached_grad,
                    &self.proposal,
                    uy,
                    &self.drift,
                );
                let accepted = log_u < log_alpha;
                if accepted {
                    x.copy_from_slice(&self.proposal);
                    self.cached_at.copy_from_slice(&self.proposal);
                    self.cached_value = uy;
                    std::mem::swap(&mut self.cached_grad, &mut self.drift);
                }
                Ok(StepInfo {
                    accepted: Some(accepted),
                    prox: None,
                })
            }
        }
    }
}

// log [pi(y) q(x|y)] - log [pi(x) q(y|x)] with q(b|a) = N(b; a - tau dU(a), 2 tau I)
fn mala_log_ratio_parts(tau: f64, x: &[f64], ux: f64, gx: &[f64], y: &[f64], uy: f64, gy: &[f64]) -> f64 {
    let mut back = 0.0;
    let mut fwd = 0.0;
    for i in 0..x.len() {
        let b = x[i] - y[i] + tau * gy[i];
        let f = y[i] - x[i] + tau * gx[i];
        back += b * b;
        fwd += f * f;
    }
    ux - uy - (back - fwd) / (4.0 * tau)
}

/// Log Metropolis-Hastings ratio for moving from `x` to `y` under the
/// explicit-scheme proposal.
pub fn mala_log_ratio(model: &PotentialModel, tau: f64, x: &[f64], y: &[f64]) -> f64 {
    let d = model.dim();
    let (mut gx, mut gy, mut work) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    model.subgrad_u(x, &mut gx, &mut work);
    model.subgrad_u(y, &mut gy, &mut work);
    mala_log_ratio_parts(tau, x, model.value(x), &gx, y, model.value(y), &gy)
}

fn one_step(
    kind: KernelKind,
    x: &State,
    model: &PotentialModel,
    tau: f64,
    lambda: Option<f64>,
    rng: &mut RngStream,
) -> Result<KernelOutput> {
    let mut cfg = ChainConfig::new(kind, tau);
    cfg.myula_lambda = lambda;
    let mut t = Transition::new(model, &cfg)?;
    let mut next = x.clone();
    let info = t.step(&mut next, rng)?;
    Ok(KernelOutput {
        next,
        accepted: info.accepted,
        prox: info.prox,
    })
}

pub fn explicit_step(x: &State, model: &PotentialModel, tau: f64, rng: &mut RngStream) -> Result<KernelOutput> {
    one_step(KernelKind::Explicit, x, model, tau, None, rng)
}

pub fn semi_implicit_step(x: &State, model: &PotentialModel, tau: f64, rng: &mut RngStream) -> Result<KernelOutput> {
    one_step(KernelKind::SemiImplicit, x, model, tau, None, rng)
}

pub fn myula_step(
    x: &State,
    model: &PotentialModel,
    tau: f64,
    lambda: Option<f64>,
    rng: &mut RngStream,
) -> Result<KernelOutput> {
    one_step(KernelKind::Myula, x, model, tau, lambda, rng)
}

pub fn mala_step(x: &State, model: &PotentialModel, tau: f64, rng: &mut RngStream) -> Result<KernelOutput> {
    one_step(KernelKind::Mala, x, model, tau, None, rng)
}

/// Receives post-burn-in states from [`run_chain`]; `iteration` counts
/// kernel applications since the start of the chain.
pub trait Observer {
    fn observe(&mut self, iteration: usize, state: &[f64]);
}

/// Adapts a closure into an [`Observer`].
pub struct FnObserver<F>(pub F);

impl<F: FnMut(usize, &[f64])> Observer for FnObserver<F> {
    fn observe(&mut self, iteration: usize, state: &[f64]) {
        (self.0)(iteration, state)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSummary {
    pub final_state: State,
    pub steps: usize,
    pub acceptance_rate: Option<f64>,
    pub prox_failures: usize,
    pub prox_iterations: u64,
}

#[derive(Default)]
struct StepTally {
    accepted: usize,
    proposals: usize,
    prox_failures: usize,
    prox_iterations: u64,
}

impl StepTally {
    fn record(&mut self, info: &StepInfo) {
        if let Some(a) = info.accepted {
            self.proposals += 1;
            self.accepted += a as usize;
        }
        if let Some(p) = info.prox {
            self.prox_iterations += p.iterations as u64;
            self.prox_failures += !p.converged as usize;
        }
    }

    fn acceptance_rate(&self) -> Option<f64> {
        (self.proposals > 0).then(|| self.accepted as f64 / self.proposals as f64)
    }
}

fn checked_step(
    t: &mut Transition<'_>,
    x: &mut State,
    rng: &mut RngStream,
    iteration: usize,
    last_norm: &mut f64,
) -> Result<StepInfo> {
    let info = t.step(x, rng)?;
    if !x.is_finite() {
        return Err(Error::NonFinite {
            iteration,
            last_norm: *last_norm,
        });
    }
    *last_norm = x.norm();
    Ok(info)
}

/// Run `burnin + samples` kernel steps, feeding every post-burn-in state to
/// all observers.
pub fn run_chain(
    cfg: &ChainConfig,
    model: &PotentialModel,
    observers: &mut [&mut dyn Observer],
) -> Result<ChainSummary> {
    let mut t = Transition::new(model, cfg)?;
    let mut rng = RngStream::new(cfg.seed, cfg.stream_id);
    let mut x = cfg.initial_state(model.dim(), &mut rng);
    let mut tally = StepTally::default();
    let mut last_norm = x.norm();
    let total = cfg.burnin + cfg.samples;
    for k in 1..=total {
        let info = checked_step(&mut t, &mut x, &mut rng, k, &mut last_norm)?;
        tally.record(&info);
        if k > cfg.burnin {
            for obs in observers.iter_mut() {
                obs.observe(k, &x);
            }
        }
    }
    Ok(ChainSummary {
        final_state: x,
        steps: total,
        acceptance_rate: tally.acceptance_rate(),
        prox_failures: tally.prox_failures,
        prox_iterations: tally.prox_iterations,
    })
}

/// States of all chains at the requested iterations.
#[derive(Clone, Debug)]
pub struct EnsembleRun {
    pub dim: usize,
    pub n_chains: usize,
    /// Sorted, deduplicated snapshot iterations.
    pub iterations: Vec<usize>,
    /// `snapshots[s]` is row-major `n_chains x dim` at `iterations[s]`.
    pub snapshots: Vec<Vec<f64>>,
    /// Mean inner prox iterations per chain step, accumulated up to each
    /// snapshot (0 for kernels without an iterative prox).
    pub inner_iterations: Vec<f64>,
    /// Per-chain acceptance rates (MALA only).
    pub acceptance: Vec<Option<f64>>,
    pub prox_failures: usize,
}

struct ChainTrace {
    snaps: Vec<Vec<f64>>,
    inner: Vec<u64>,
    acceptance: Option<f64>,
    prox_failures: usize,
}

/// Run `n_chains` independent chains, chain `c` on stream `c`, up to the
/// largest requested iteration. Iteration 0 is the initial state.
pub fn run_ensemble(
    cfg: &ChainConfig,
    model: &PotentialModel,
    n_chains: usize,
    snapshot_iters: &[usize],
) -> Result<EnsembleRun> {
    if n_chains == 0 {
        return Err(Error::InvalidConfig("need at least one chain".into()));
    }
    cfg.validate(model)?;
    let mut iterations = snapshot_iters.to_vec();
    iterations.sort_unstable();
    iterations.dedup();
    let total = iterations.last().copied().unwrap_or(0);
    let d = model.dim();

    let traces: Vec<ChainTrace> = (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let run = || -> Result<ChainTrace> {
                let mut t = Transition::new(model, cfg)?;
                let mut rng = RngStream::new(cfg.seed, c as u64);
                let mut x = cfg.initial_state(d, &mut rng);
                let mut last_norm = x.norm();
                let mut tally = StepTally::default();
                let mut snaps = Vec::with_capacity(iterations.len());
                let mut inner = Vec::with_capacity(iterations.len());
                let mut next = 0;
                for k in 0..=total {
                    if k > 0 {
                        let info = checked_step(&mut t, &mut x, &mut rng, k, &mut last_norm)?;
                        tally.record(&info);
                    }
                    while next < iterations.len() && iterations[next] == k {
                        snaps.push(x.to_vec());
                        inner.push(tally.prox_iterations);
                        next += 1;
                    }
                }
                Ok(ChainTrace {
                    snaps,
                    inner,
                    acceptance: tally.acceptance_rate(),
                    prox_failures: tally.prox_failures,
                })
            };
            run().map_err(|e| Error::Chain {
                chain: c,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut snapshots = vec![Vec::with_capacity(n_chains * d); iterations.len()];
    let mut inner_iterations = vec![0.0; iterations.len()];
    for tr in &traces {
        for (s, snap) in tr.snaps.iter().enumerate() {
            snapshots[s].extend_from_slice(snap);
            inner_iterations[s] += tr.inner[s] as f64;
        }
    }
    for (s, &k) in iterations.iter().enumerate() {
        inner_iterations[s] = if k == 0 {
            0.0
        } else {
            inner_iterations[s] / (n_chains as f64 * k as f64)
        };
    }
    Ok(EnsembleRun {
        dim: d,
        n_chains,
        acceptance: traces.iter().map(|t| t.acceptance).collect(),
        prox_failures: traces.iter().map(|t| t.prox_failures).sum(),
        iterations,
        snapshots,
        inner_iterations,
    })
}

/// Two chains driven by identical noise; returns `|X_k - Y_k|` for
/// `k = 0..=n`.
pub fn run_coupled_pair(
    cfg: &ChainConfig,
    model: &PotentialModel,
    x0: &State,
    y0: &State,
    n: usize,
) -> Result<Vec<f64>> {
    let d = model.dim();
    if x0.dim() != d || y0.dim() != d {
        return Err(Error::ShapeMismatch {
            expected: d,
            found: if x0.dim() != d { x0.dim() } else { y0.dim() },
        });
    }
    let mut tx = Transition::new(model, cfg)?;
    let mut ty = Transition::new(model, cfg)?;
    let mut rng = RngStream::new(cfg.seed, cfg.stream_id);
    let (mut x, mut y) = (x0.clone(), y0.clone());
    let mut noise = vec![0.0; d];
    let mut out = Vec::with_capacity(n + 1);
    out.push(dist(&x, &y));
    for k in 1..=n {
        rng.fill_normal(&mut noise);
        let log_u = if cfg.kernel == KernelKind::Mala {
            rng.uniform().ln()
        } else {
            0.0
        };
        tx.step_with_noise(&mut x, &noise, log_u)?;
        ty.step_with_noise(&mut y, &noise, log_u)?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite {
                iteration: k,
                last_norm: norm(&x).max(norm(&y)),
            });
        }
        out.push(dist(&x, &y));
    }
    Ok(out)
}
