//! Concrete potentials: quadratic data terms, the mixed norm, separable and
//! operator-composed penalties, anisotropic TV, and the assembled 2D,
//! denoising and deconvolution models.

use crate::operators::{ConvOp, DiffOp2D, GradOp2DImage, ImageShape, LinearOp};
use crate::potential::{NonSmoothPart, PotentialModel, ProxKind, SmoothPart};
use crate::prox::{primal_dual_prox, prox_mixed_norm, soft_threshold, PdSolverConfig, ProxScratch, ProxStatus};
use crate::{Error, Result};

/// `|t|_*`: `t` for `t >= 0`, `(2/3)|t|^{3/2}` for `t < 0`.
#[inline]
pub fn mixed_norm_value(t: f64) -> f64 {
    if t >= 0.0 {
        t
    } else {
        let a = -t;
        2.0 / 3.0 * a * a.sqrt()
    }
}

/// Minimal-norm subgradient of `|t|_*` (0 at the kink).
#[inline]
pub fn mixed_norm_subgrad(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -(-t).sqrt()
    } else {
        0.0
    }
}

/// A convex scalar function applied componentwise.
pub trait ScalarPenalty: Send + Sync {
    fn value(&self, t: f64) -> f64;
    fn subgrad(&self, t: f64) -> f64;
    /// `argmin_z w g(z) + (z - t)^2 / 2`.
    fn prox(&self, t: f64, w: f64) -> f64;
    /// `(a, b)` with `|g'(t)| <= a + b |t|`.
    fn growth(&self) -> (f64, f64);
    /// `prox_{sigma (w g)^*}(v)` through the Moreau identity.
    fn dual_prox(&self, v: f64, w: f64, sigma: f64) -> f64 {
        v - sigma * self.prox(v / sigma, w / sigma)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AbsPenalty;

impl ScalarPenalty for AbsPenalty {
    fn value(&self, t: f64) -> f64 {
        t.abs()
    }
    fn subgrad(&self, t: f64) -> f64 {
        if t > 0.0 {
            1.0
        } else if t < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
    fn prox(&self, t: f64, w: f64) -> f64 {
        soft_threshold(t, w)
    }
    fn growth(&self) -> (f64, f64) {
        (1.0, 0.0)
    }
    // projection onto [-w, w]
    fn dual_prox(&self, v: f64, w: f64, _sigma: f64) -> f64 {
        v.clamp(-w, w)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MixedPenalty;

impl ScalarPenalty for MixedPenalty {
    fn value(&self, t: f64) -> f64 {
        mixed_norm_value(t)
    }
    fn subgrad(&self, t: f64) -> f64 {
        mixed_norm_subgrad(t)
    }
    fn prox(&self, t: f64, w: f64) -> f64 {
        prox_mixed_norm(t, w)
    }
    // sqrt|t| <= (1 + |t|) / 2
    fn growth(&self) -> (f64, f64) {
        (1.0, 0.5)
    }
}

/// `theta * sum_i g(x_i)`.
#[derive(Clone, Copy, Debug)]
pub struct Separable<P> {
    penalty: P,
    theta: f64,
    dim: usize,
}

pub type MixedNorm = Separable<MixedPenalty>;
pub type L1Norm = Separable<AbsPenalty>;

impl<P: ScalarPenalty> Separable<P> {
    pub fn with_penalty(penalty: P, theta: f64, dim: usize) -> Self {
        assert!(theta >= 0.0);
        Self { penalty, theta, dim }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

impl MixedNorm {
    /// `theta (|x1|_* + |x2|_*)` on R^2.
    pub fn new(theta: f64) -> Self {
        Self::with_penalty(MixedPenalty, theta, 2)
    }
}

impl L1Norm {
    /// `theta |x|_1` on R (use [`Separable::with_penalty`] for other sizes).
    pub fn new(theta: f64) -> Self {
        Self::with_penalty(AbsPenalty, theta, 1)
    }

    pub fn with_dim(theta: f64, dim: usize) -> Self {
        Self::with_penalty(AbsPenalty, theta, dim)
    }
}

impl<P: ScalarPenalty> NonSmoothPart for Separable<P> {
    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.theta * x.iter().map(|&t| self.penalty.value(t)).sum::<f64>()
    }
    fn subgradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(x) {
            *o = self.theta * self.penalty.subgrad(t);
        }
    }
    fn growth_constant(&self) -> f64 {
        let (a, b) = self.penalty.growth();
        self.theta * (a * (self.dim as f64).sqrt()).max(b)
    }
    fn prox_kind(&self) -> ProxKind {
        ProxKind::ClosedForm
    }
    fn prox(&self, x: &[f64], weight: f64, out: &mut [f64], _s: &mut ProxScratch) -> Result<ProxStatus> {
        let w = weight * self.theta;
        for (o, &t) in out.iter_mut().zip(x) {
            *o = self.penalty.prox(t, w);
        }
        Ok(ProxStatus::exact())
    }
}

/// `theta * sum_i g((Kx)_i)`. The subgradient uses the chain rule
/// `K^T dg(Kx)`; the prox is computed by the primal-dual solver.
#[derive(Clone, Debug)]
pub struct Composed<P, K> {
    penalty: P,
    op: K,
    theta: f64,
    pd: PdSolverConfig,
}

/// Anisotropic total variation `theta |Kx|_{1,1}`.
pub type TotalVariation = Composed<AbsPenalty, GradOp2DImage>;
/// `theta |x2 - x1|_*` on R^2.
pub type MixedNormOfDiff = Composed<MixedPenalty, DiffOp2D>;

impl<P: ScalarPenalty, K: LinearOp> Composed<P, K> {
    pub fn new(penalty: P, op: K, theta: f64) -> Self {
        let pd = PdSolverConfig::for_norm_sq(op.norm_sq_bound());
        Self { penalty, op, theta, pd }
    }

    pub fn with_solver(mut self, pd: PdSolverConfig) -> Self {
        self.pd = pd;
        self
    }

    pub fn solver(&self) -> &PdSolverConfig {
        &self.pd
    }

    pub fn op(&self) -> &K {
        &self.op
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

impl TotalVariation {
    pub fn tv(shape: ImageShape, theta: f64) -> Self {
        Self::new(AbsPenalty, GradOp2DImage::new(shape), theta)
    }
}

impl MixedNormOfDiff {
    pub fn mixed_of_diff(theta: f64) -> Self {
        Self::new(MixedPenalty, DiffOp2D, theta)
    }
}

impl<P: ScalarPenalty, K: LinearOp> NonSmoothPart for Composed<P, K> {
    fn dim(&self) -> Option<usize> {
        Some(self.op.in_dim())
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut kx = vec![0.0; self.op.out_dim()];
        self.op.apply(x, &mut kx);
        self.theta * kx.iter().map(|&t| self.penalty.value(t)).sum::<f64>()
    }

    fn subgradient(&self, x: &[f64], out: &mut [f64]) {
        let mut kx = vec![0.0; self.op.out_dim()];
        self.op.apply(x, &mut kx);
        for v in kx.iter_mut() {
            *v = self.theta * self.penalty.subgrad(*v);
        }
        self.op.apply_adjoint(&kx, out);
    }

    fn growth_constant(&self) -> f64 {
        let (a, b) = self.penalty.growth();
        let knorm = self.op.norm_sq_bound().sqrt();
        self.theta * knorm * (a * (self.op.out_dim() as f64).sqrt()).max(b * knorm)
    }

    fn prox_kind(&self) -> ProxKind {
        ProxKind::Iterative
    }

    fn prox(&self, x: &[f64], weight: f64, out: &mut [f64], scratch: &mut ProxScratch) -> Result<ProxStatus> {
        Ok(primal_dual_prox(
            &self.op,
            &self.penalty,
            x,
            weight * self.theta,
            &self.pd,
            out,
            scratch,
        ))
    }
}

/// `theta * TV(x)` for a row-major image.
pub fn tv_value(x: &[f64], shape: ImageShape, theta: f64) -> Result<f64> {
    if x.len() != shape.len() {
        return Err(Error::ShapeMismatch {
            expected: shape.len(),
            found: x.len(),
        });
    }
    Ok(TotalVariation::tv(shape, theta).value(x))
}

/// `(precision / 2) |x - center|^2`.
#[derive(Clone, Debug)]
pub struct IsotropicQuadratic {
    center: Vec<f64>,
    precision: f64,
}

impl IsotropicQuadratic {
    pub fn new(center: Vec<f64>, precision: f64) -> Self {
        assert!(precision > 0.0);
        Self { center, precision }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }
}

impl SmoothPart for IsotropicQuadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.precision
            * x.iter()
                .zip(&self.center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = self.precision * (a - c);
        }
    }
    fn strong_convexity(&self) -> f64 {
        self.precision
    }
    fn lipschitz(&self) -> f64 {
        self.precision
    }
}

/// `(x - c)^T P (x - c) / 2` for a symmetric positive definite `P`.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    center: Vec<f64>,
    precision: Vec<f64>,
    m: f64,
    l: f64,
}

impl QuadraticForm {
    /// `precision` is row-major `d x d`.
    pub fn new(center: Vec<f64>, precision: Vec<f64>) -> Result<Self> {
        let d = center.len();
        if precision.len() != d * d {
            return Err(Error::ShapeMismatch {
                expected: d * d,
                found: precision.len(),
            });
        }
        let mat = nalgebra::DMatrix::from_row_slice(d, d, &precision);
        if (&mat - mat.transpose()).amax() > 1e-12 * mat.amax() {
            return Err(Error::InvalidConfig("precision matrix is not symmetric".into()));
        }
        let eig = mat.symmetric_eigen().eigenvalues;
        let (m, l) = (eig.min(), eig.max());
        if !(m > 0.0) {
            return Err(Error::InvalidConfig("precision matrix is not positive definite".into()));
        }
        Ok(Self { center, precision, m, l })
    }

    /// Gaussian with the given mean and covariance.
    pub fn gaussian(mean: Vec<f64>, covariance: &[f64]) -> Result<Self> {
        let d = mean.len();
        let cov = nalgebra::DMatrix::from_row_slice(d, d, covariance);
        let inv = cov
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("singular covariance".into()))?;
        let inv = (&inv + inv.transpose()) * 0.5;
        let rows: Vec<f64> = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| inv[(i, j)]).collect();
        Self::new(mean, rows)
    }
}

impl SmoothPart for QuadraticForm {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            let di = x[i] - self.center[i];
            for j in 0..d {
                acc += di * self.precision[i * d + j] * (x[j] - self.center[j]);
            }
        }
        0.5 * acc
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..d)
                .map(|j| self.precision[i * d + j] * (x[j] - self.center[j]))
                .sum();
        }
    }
    fn strong_convexity(&self) -> f64 {
        self.m
    }
    fn lipschitz(&self) -> f64 {
        self.l
    }
}

/// `|k * x - y|^2 / (2 sigma^2) + delta |x|^2`. The declared strong
/// convexity is `2 delta`, ignoring the (possibly singular) blur Hessian.
#[derive(Clone, Debug)]
pub struct BlurredData {
    op: ConvOp,
    y: Vec<f64>,
    sigma: f64,
    delta: f64,
}

impl BlurredData {
    pub fn new(op: ConvOp, y: Vec<f64>, sigma: f64, delta: f64) -> Result<Self> {
        if y.len() != op.in_dim() {
            return Err(Error::ShapeMismatch {
                expected: op.in_dim(),
                found: y.len(),
            });
        }
        if !(sigma > 0.0 && delta > 0.0) {
            return Err(Error::InvalidConfig("deconvolution needs sigma > 0 and delta > 0".into()));
        }
        Ok(Self { op, y, sigma, delta })
    }

    pub fn op(&self) -> &ConvOp {
        &self.op
    }
}

impl SmoothPart for BlurredData {
    fn dim(&self) -> usize {
        self.y.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let mut kx = vec![0.0; x.len()];
        self.op.apply(x, &mut kx);
        let fit: f64 = kx.iter().zip(&self.y).map(|(a, b)| (a - b) * (a - b)).sum();
        let ridge: f64 = x.iter().map(|a| a * a).sum();
        fit / (2.0 * self.sigma * self.sigma) + self.delta * ridge
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut r = vec![0.0; x.len()];
        self.op.apply(x, &mut r);
        for (ri, yi) in r.iter_mut().zip(&self.y) {
            *ri -= yi;
        }
        self.op.apply_adjoint(&r, out);
        let s2 = self.sigma * self.sigma;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = *o / s2 + 2.0 * self.delta * xi;
        }
    }
    fn strong_convexity(&self) -> f64 {
        2.0 * self.delta
    }
    fn lipschitz(&self) -> f64 {
        self.op.norm_sq_bound() / (self.sigma * self.sigma) + 2.0 * self.delta
    }
}

/// Default anchor of the 2D experiments.
pub const ANCHOR_2D: [f64; 2] = [0.0, 1.0];

/// `F = |x - x0|^2 / 2` on R^2 (`m = L = 1`).
pub fn quadratic_2d(x0: [f64; 2]) -> IsotropicQuadratic {
    IsotropicQuadratic::new(x0.to_vec(), 1.0)
}

/// `|x - x0|^2 / 2 + theta (|x1|_* + |x2|_*)`.
pub fn mixed_norm_model(theta: f64, x0: [f64; 2]) -> PotentialModel {
    PotentialModel::new(quadratic_2d(x0), MixedNorm::new(theta)).expect("dimensions agree")
}

/// `|x - x0|^2 / 2 + theta |x2 - x1|_*`.
pub fn mixed_norm_op_model(theta: f64, x0: [f64; 2], pd: Option<PdSolverConfig>) -> PotentialModel {
    let mut g = MixedNormOfDiff::mixed_of_diff(theta);
    if let Some(pd) = pd {
        g = g.with_solver(pd);
    }
    PotentialModel::new(quadratic_2d(x0), g).expect("dimensions agree")
}

/// Parameters of the imaging posteriors: denoising when `blur` is false,
/// deconvolution with the 5x5 Gaussian blur and ridge weight `delta`
/// otherwise.
#[derive(Clone, Debug)]
pub struct ImagingPotential {
    pub y: Vec<f64>,
    pub shape: ImageShape,
    pub sigma: f64,
    pub theta: f64,
    pub delta: f64,
    pub blur: bool,
    pub pd: PdSolverConfig,
}

impl ImagingPotential {
    pub fn denoising(y: Vec<f64>, shape: ImageShape, sigma: f64, theta: f64) -> Self {
        Self {
            y,
            shape,
            sigma,
            theta,
            delta: 0.0,
            blur: false,
            pd: PdSolverConfig::image_tv(),
        }
    }

    pub fn deconvolution(y: Vec<f64>, shape: ImageShape, sigma: f64, theta: f64, delta: f64) -> Self {
        Self {
            y,
            shape,
            sigma,
            theta,
            delta,
            blur: true,
            pd: PdSolverConfig::image_tv(),
        }
    }

    pub fn with_solver(mut self, pd: PdSolverConfig) -> Self {
        self.pd = pd;
        self
    }

    pub fn build(&self) -> Result<PotentialModel> {
        if self.y.len() != self.shape.len() {
            return Err(Error::ShapeMismatch {
                expected: self.shape.len(),
                found: self.y.len(),
            });
        }
        if !(self.sigma > 0.0) || self.theta < 0.0 {
            return Err(Error::InvalidConfig("need sigma > 0 and theta >= 0".into()));
        }
        let g = TotalVariation::tv(self.shape, self.theta).with_solver(self.pd);
        if self.blur {
            let f = BlurredData::new(ConvOp::gaussian(self.shape), self.y.clone(), self.sigma, self.delta)?;
            PotentialModel::new(f, g)
        } else {
            let f = IsotropicQuadratic::new(self.y.clone(), 1.0 / (self.sigma * self.sigma));
            PotentialModel::new(f, g)
        }
    }
}
