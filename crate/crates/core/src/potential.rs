//! The potential interface `U = F + G` and probe-based contract checks.

use crate::prox::{ProxScratch, ProxStatus};
use crate::state::{dist, dot, norm};
use crate::{Error, Result, RngStream};

/// Smooth, strongly convex part `F` with Lipschitz gradient.
pub trait SmoothPart: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Strong convexity modulus `m > 0`.
    fn strong_convexity(&self) -> f64;
    /// Lipschitz constant `L >= m` of the gradient.
    fn lipschitz(&self) -> f64;
}

/// How the proximal map of a [`NonSmoothPart`] is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProxKind {
    None,
    ClosedForm,
    Iterative,
}

/// Convex, possibly non-differentiable part `G`.
pub trait NonSmoothPart: Send + Sync {
    /// Fixed input dimension, if the part has one.
    fn dim(&self) -> Option<usize> {
        None
    }
    fn value(&self, x: &[f64]) -> f64;
    /// One element of the subdifferential. At kinks the element of minimal
    /// norm among the natural candidates is returned.
    fn subgradient(&self, x: &[f64], out: &mut [f64]);
    /// `C` with `|dG(x)| <= C (1 + |x|)` for the selection above.
    fn growth_constant(&self) -> f64;
    fn prox_kind(&self) -> ProxKind {
        ProxKind::None
    }
    /// `prox_{weight * G}(x)` written to `out`.
    fn prox(
        &self,
        _x: &[f64],
        _weight: f64,
        _out: &mut [f64],
        _scratch: &mut ProxScratch,
    ) -> Result<ProxStatus> {
        Err(Error::NoProx)
    }
}

/// `G = 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPart;

impl NonSmoothPart for ZeroPart {
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn subgradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn growth_constant(&self) -> f64 {
        0.0
    }
    fn prox_kind(&self) -> ProxKind {
        ProxKind::ClosedForm
    }
    fn prox(&self, x: &[f64], _w: f64, out: &mut [f64], _s: &mut ProxScratch) -> Result<ProxStatus> {
        out.copy_from_slice(x);
        Ok(ProxStatus::exact())
    }
}

/// `U = F + G` together with its declared curvature constants.
pub struct PotentialModel {
    f: Box<dyn SmoothPart>,
    g: Box<dyn NonSmoothPart>,
    declared_m: f64,
    growth: f64,
}

impl PotentialModel {
    pub fn new(f: impl SmoothPart + 'static, g: impl NonSmoothPart + 'static) -> Result<Self> {
        Self::from_boxed(Box::new(f), Box::new(g))
    }

    pub fn from_boxed(f: Box<dyn SmoothPart>, g: Box<dyn NonSmoothPart>) -> Result<Self> {
        let d = f.dim();
        if let Some(dg) = g.dim() {
            if dg != d {
                return Err(Error::ShapeMismatch { expected: d, found: dg });
            }
        }
        let zero = vec![0.0; d];
        let mut grad0 = vec![0.0; d];
        f.gradient(&zero, &mut grad0);
        let growth = f.value(&zero).abs()
            + g.value(&zero).abs()
            + norm(&grad0)
            + 0.5 * f.lipschitz()
            + 2.0 * g.growth_constant();
        let declared_m = f.strong_convexity();
        Ok(Self {
            f,
            g,
            declared_m,
            growth,
        })
    }

    /// Replace the declared strong convexity modulus (used to exercise the
    /// convexity check with a deliberately wrong constant).
    pub fn with_declared_m(mut self, m: f64) -> Self {
        self.declared_m = m;
        self
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn smooth(&self) -> &dyn SmoothPart {
        self.f.as_ref()
    }

    pub fn nonsmooth(&self) -> &dyn NonSmoothPart {
        self.g.as_ref()
    }

    pub fn strong_convexity(&self) -> f64 {
        self.declared_m
    }

    pub fn lipschitz(&self) -> f64 {
        self.f.lipschitz()
    }

    /// `C` with `|U(x)| <= C (1 + |x|^2)`, derived from `F(0)`, `G(0)`,
    /// `grad F(0)`, `L` and the subgradient growth constant.
    pub fn quadratic_growth_constant(&self) -> f64 {
        self.growth
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.f.value(x) + self.g.value(x)
    }

    pub fn grad_f(&self, x: &[f64], out: &mut [f64]) {
        self.f.gradient(x, out);
    }

    /// `grad F(x) + dG(x)`; `scratch` must have length `dim`.
    pub fn subgrad_u(&self, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        self.f.gradient(x, out);
        self.g.subgradient(x, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += s;
        }
    }

    pub fn has_prox(&self) -> bool {
        self.g.prox_kind() != ProxKind::None
    }

    pub fn prox_g(
        &self,
        x: &[f64],
        weight: f64,
        out: &mut [f64],
        scratch: &mut ProxScratch,
    ) -> Result<ProxStatus> {
        self.g.prox(x, weight, out, scratch)
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Shape-checked `U(x)`.
    pub fn potential_value(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        Ok(self.value(x))
    }

    /// Shape-checked `grad F(x)`.
    pub fn potential_grad_f(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let mut out = vec![0.0; x.len()];
        self.grad_f(x, &mut out);
        Ok(out)
    }

    /// Shape-checked `grad F(x) + dG(x)`.
    pub fn potential_subgrad_u(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let mut out = vec![0.0; x.len()];
        let mut scratch = vec![0.0; x.len()];
        self.subgrad_u(x, &mut out, &mut scratch);
        Ok(out)
    }
}

/// Outcome of one probe-based check: pass iff the observed statistic is on
/// the right side of `bound` (see the individual check for the direction).
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub observed: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CheckOutcome {
    pub fn at_least(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            bound,
            pass: observed >= bound,
        }
    }

    pub fn at_most(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            bound,
            pass: observed <= bound,
        }
    }
}

pub const PROBE_HALF_WIDTH: f64 = 10.0;
pub const PROBE_TOL: f64 = 1e-9;

fn probe(rng: &mut RngStream, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = PROBE_HALF_WIDTH * (2.0 * rng.uniform() - 1.0);
    }
}

#[derive(Clone, Debug)]
pub struct ConvexityReport {
    /// Smallest `(<dU(x) - dU(y), x - y> - m |x - y|^2) / |x - y|^2`.
    pub min_gap: f64,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
    pub pass: bool,
}

/// Strong monotonicity of `dU` with the declared modulus on random pairs in
/// `[-10, 10]^d`. The gap is normalised by `|x - y|^2` and compared
/// against `-1e-9`.
pub fn check_convexity(model: &PotentialModel, probes: usize, rng: &mut RngStream) -> ConvexityReport {
    assert!(probes >= 1);
    let d = model.dim();
    let m = model.strong_convexity();
    let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
    let (mut gx, mut gy, mut scratch) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut min_gap = f64::INFINITY;
    let mut worst_pair = None;
    for _ in 0..probes {
        probe(rng, &mut x);
        probe(rng, &mut y);
        model.subgrad_u(&x, &mut gx, &mut scratch);
        model.subgrad_u(&y, &mut gy, &mut scratch);
        let dsq: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        if dsq == 0.0 {
            continue;
        }
        let inner: f64 = (0..d).map(|i| (gx[i] - gy[i]) * (x[i] - y[i])).sum();
        let gap = inner / dsq - m;
        if gap < min_gap {
            min_gap = gap;
            if gap < -PROBE_TOL {
                worst_pair = Some((x.clone(), y.clone()));
            }
        }
    }
    ConvexityReport {
        min_gap,
        pass: min_gap >= -PROBE_TOL,
        worst_pair,
    }
}

/// Monotonicity with modulus `m` and Lipschitz bound `L` for `grad F`.
pub fn check_smooth_part(f: &dyn SmoothPart, probes: usize, rng: &mut RngStream) -> Vec<CheckOutcome> {
    let d = f.dim();
    let (m, l) = (f.strong_convexity(), f.lipschitz());
    let (mut x, mut y, mut gx, mut gy) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut min_gap = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    for _ in 0..probes {
        probe(rng, &mut x);
        probe(rng, &mut y);
        f.gradient(&x, &mut gx);
        f.gradient(&y, &mut gy);
        let dxy = dist(&x, &y);
        let inner: f64 = (0..d).map(|i| (gx[i] - gy[i]) * (x[i] - y[i])).sum();
        min_gap = min_gap.min(inner / (dxy * dxy) - m);
        max_ratio = max_ratio.max(dist(&gx, &gy) / dxy);
    }
    vec![
        CheckOutcome::at_least("smooth monotonicity gap", min_gap, -PROBE_TOL),
        CheckOutcome::at_most("smooth gradient lipschitz ratio", max_ratio, l * (1.0 + PROBE_TOL)),
    ]
}

/// Subgradient inequality, linear growth and, when a prox exists,
/// nonexpansiveness and norm reduction of `prox_{weight G}`.
/// `prox_tol` is the accuracy of the prox (0 for closed forms).
pub fn check_nonsmooth_part(
    g: &dyn NonSmoothPart,
    d: usize,
    probes: usize,
    weight: f64,
    prox_tol: f64,
    rng: &mut RngStream,
) -> Vec<CheckOutcome> {
    let c = g.growth_constant();
    let (mut x, mut y, mut sx) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let (mut px, mut py) = (vec![0.0; d], vec![0.0; d]);
    let mut scratch = ProxScratch::default();
    let mut min_subgrad_gap = f64::INFINITY;
    let mut max_growth: f64 = 0.0;
    let mut max_expansion = f64::NEG_INFINITY;
    let mut max_norm_gain = f64::NEG_INFINITY;
    let has_prox = g.prox_kind() != ProxKind::None;
    for _ in 0..probes {
        probe(rng, &mut x);
        probe(rng, &mut y);
        g.subgradient(&x, &mut sx);
        let (gx, gy) = (g.value(&x), g.value(&y));
        let lin: f64 = (0..d).map(|i| sx[i] * (y[i] - x[i])).sum();
        let scale = 1.0 + gx.abs() + gy.abs() + lin.abs();
        min_subgrad_gap = min_subgrad_gap.min((gy - gx - lin) / scale);
        max_growth = max_growth.max(norm(&sx) / (1.0 + norm(&x)));
        if has_prox {
            scratch.reset();
            g.prox(&x, weight, &mut px, &mut scratch).expect("prox");
            scratch.reset();
            g.prox(&y, weight, &mut py, &mut scratch).expect("prox");
            max_expansion = max_expansion.max(dist(&px, &py) - dist(&x, &y));
            max_norm_gain = max_norm_gain.max(norm(&px) - norm(&x));
        }
    }
    let mut out = vec![
        CheckOutcome::at_least("subgradient inequality gap", min_subgrad_gap, -PROBE_TOL),
        CheckOutcome::at_most("subgradient linear growth", max_growth, c * (1.0 + PROBE_TOL)),
    ];
    if has_prox {
        let slack = PROBE_TOL + prox_tol * (d as f64).sqrt();
        out.push(CheckOutcome::at_most("prox nonexpansive excess", max_expansion, slack));
        out.push(CheckOutcome::at_most("prox norm reduction excess", max_norm_gain, slack));
    }
    out
}

/// `|U(x)| <= C (1 + |x|^2)` on random probes.
pub fn check_quadratic_growth(model: &PotentialModel, probes: usize, rng: &mut RngStream) -> CheckOutcome {
    let mut x = vec![0.0; model.dim()];
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        probe(rng, &mut x);
        worst = worst.max(model.value(&x).abs() / (1.0 + dot(&x, &x)));
    }
    CheckOutcome::at_most(
        "potential quadratic growth",
        worst,
        model.quadratic_growth_constant(),
    )
}
