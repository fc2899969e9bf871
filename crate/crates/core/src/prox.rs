//! Proximal maps `prox_phi(x) = argmin_z phi(z) + |z - x|^2 / 2`.
//!
//! Closed forms cover the l1 norm and the mixed norm `|t|_*`; everything
//! composed with a linear operator goes through the primal-dual solver
//! [`primal_dual_prox`].

use crate::operators::{GradOp2DImage, ImageShape, LinearOp};
use crate::potential::NonSmoothPart;
use crate::potentials::{AbsPenalty, ScalarPenalty};
use crate::{Error, Result};

/// Outcome of one prox evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ProxStatus {
    /// Inner solver iterations; 0 for closed forms.
    pub iterations: usize,
    pub converged: bool,
}

impl ProxStatus {
    pub fn exact() -> Self {
        Self {
            iterations: 0,
            converged: true,
        }
    }
}

/// Caller-owned buffers for iterative proxes. `dual` persists between calls
/// and warm-starts the next solve.
#[derive(Clone, Debug, Default)]
pub struct ProxScratch {
    pub dual: Vec<f64>,
    bufs: [Vec<f64>; 4],
}

impl ProxScratch {
    pub fn reset(&mut self) {
        self.dual.clear();
    }
}

/// Soft thresholding, the prox of `w |.|`.
#[inline]
pub fn soft_threshold(t: f64, w: f64) -> f64 {
    if t > w {
        t - w
    } else if t < -w {
        t + w
    } else {
        0.0
    }
}

/// Componentwise soft thresholding: `prox_{w |.|_1}(x)`.
pub fn prox_l1(x: &[f64], w: f64) -> Vec<f64> {
    assert!(w >= 0.0, "prox weight must be nonnegative");
    x.iter().map(|&t| soft_threshold(t, w)).collect()
}

/// Prox of `w |.|_*` where `|t|_* = t` for `t >= 0` and `(2/3)|t|^{3/2}`
/// otherwise.
///
/// The subdifferential at 0 is `[0, 1]`, so the minimiser is 0 exactly when
/// `t` lies in `[0, w]`. Above that it is the shifted linear branch; for
/// `t < 0` the optimality condition `z - t - w sqrt(-z) = 0` gives
/// `z = -s^2` with `s^2 + w s + t = 0`.
pub fn prox_mixed_norm(t: f64, w: f64) -> f64 {
    debug_assert!(w >= 0.0);
    if t > w {
        t - w
    } else if t >= 0.0 {
        0.0
    } else {
        // positive root of s^2 + w s + t, in the cancellation-free form
        let s = -2.0 * t / (w + (w * w - 4.0 * t).sqrt());
        -s * s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdSolverConfig {
    pub max_iters: usize,
    /// Stop once the max-norm change of the primal iterate drops below this.
    pub stop_tol: f64,
    pub primal_step: f64,
    pub dual_step: f64,
}

impl PdSolverConfig {
    pub const DEFAULT_MAX_ITERS: usize = 2000;
    pub const DEFAULT_STOP_TOL: f64 = 1e-4;

    /// Equal primal and dual steps `1 / |K|`.
    pub fn for_norm_sq(norm_sq: f64) -> Self {
        let step = 1.0 / norm_sq.sqrt();
        Self {
            max_iters: Self::DEFAULT_MAX_ITERS,
            stop_tol: Self::DEFAULT_STOP_TOL,
            primal_step: step,
            dual_step: step,
        }
    }

    pub fn image_tv() -> Self {
        Self::for_norm_sq(8.0)
    }

    pub fn with_tol(mut self, stop_tol: f64) -> Self {
        self.stop_tol = stop_tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self, norm_sq: f64) -> Result<()> {
        if !(self.stop_tol > 0.0) {
            return Err(Error::InvalidConfig("pd stop_tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("pd max_iters must be positive".into()));
        }
        if !(self.primal_step > 0.0 && self.dual_step > 0.0) {
            return Err(Error::InvalidConfig("pd steps must be positive".into()));
        }
        if self.primal_step * self.dual_step * norm_sq > 1.0 + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "pd step product {} exceeds 1/|K|^2 = {}",
                self.primal_step * self.dual_step,
                1.0 / norm_sq
            )));
        }
        Ok(())
    }
}

impl Default for PdSolverConfig {
    fn default() -> Self {
        Self::image_tv()
    }
}

/// Primal-dual (Chambolle-Pock) solve of
/// `min_z  w * sum_i g((Kz)_i) + |z - x|^2 / 2`.
///
/// The dual iterate lives in `scratch.dual` and is reused as a warm start
/// when its length matches `K`'s output dimension. With `w == 0` the input
/// is returned unchanged.
pub fn primal_dual_prox(
    op: &dyn LinearOp,
    penalty: &dyn ScalarPenalty,
    x: &[f64],
    w: f64,
    cfg: &PdSolverConfig,
    out: &mut [f64],
    scratch: &mut ProxScratch,
) -> ProxStatus {
    let (n, m) = (op.in_dim(), op.out_dim());
    debug_assert_eq!(x.len(), n);
    if w == 0.0 {
        out.copy_from_slice(x);
        return ProxStatus::exact();
    }
    if scratch.dual.len() != m {
        scratch.dual.clear();
        scratch.dual.resize(m, 0.0);
    }
    let [kz, ktp, z, zbar] = &mut scratch.bufs;
    kz.resize(m, 0.0);
    ktp.resize(n, 0.0);
    z.clear();
    z.extend_from_slice(x);
    zbar.clear();
    zbar.extend_from_slice(x);
    let p = &mut scratch.dual;
    let (tau, sigma) = (cfg.primal_step, cfg.dual_step);
    let mut status = ProxStatus {
        iterations: 0,
        converged: false,
    };
    for it in 1..=cfg.max_iters {
        op.apply(zbar, kz);
        for (pi, ki) in p.iter_mut().zip(kz.iter()) {
            *pi = penalty.dual_prox(*pi + sigma * ki, w, sigma);
        }
        op.apply_adjoint(p, ktp);
        let mut change: f64 = 0.0;
        for i in 0..n {
            let next = (z[i] - tau * ktp[i] + tau * x[i]) / (1.0 + tau);
            change = change.max((next - z[i]).abs());
            zbar[i] = 2.0 * next - z[i];
            z[i] = next;
        }
        status.iterations = it;
        if change < cfg.stop_tol {
            status.converged = true;
            break;
        }
    }
    out.copy_from_slice(z);
    status
}

#[derive(Clone, Debug)]
pub struct PdOutcome {
    pub z: Vec<f64>,
    pub status: ProxStatus,
}

/// Prox of `w * TV` (anisotropic, forward differences) for an image.
pub fn prox_tv_pd(x: &[f64], shape: ImageShape, w: f64, cfg: &PdSolverConfig) -> Result<PdOutcome> {
    if x.len() != shape.len() {
        return Err(Error::ShapeMismatch {
            expected: shape.len(),
            found: x.len(),
        });
    }
    if w < 0.0 {
        return Err(Error::InvalidConfig("prox weight must be nonnegative".into()));
    }
    let op = GradOp2DImage::new(shape);
    cfg.validate(op.norm_sq_bound())?;
    let mut z = vec![0.0; x.len()];
    let status = primal_dual_prox(&op, &AbsPenalty, x, w, cfg, &mut z, &mut ProxScratch::default());
    if !status.converged {
        log::warn!("tv prox stopped after {} iterations without converging", status.iterations);
    }
    Ok(PdOutcome { z, status })
}

/// Gradient of the Moreau envelope `G^lambda`: `(x - prox_{lambda G}(x)) / lambda`.
pub fn moreau_grad(
    g: &dyn NonSmoothPart,
    x: &[f64],
    lambda: f64,
    scratch: &mut ProxScratch,
) -> Result<(Vec<f64>, ProxStatus)> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidConfig("moreau parameter must be positive".into()));
    }
    let mut p = vec![0.0; x.len()];
    let status = g.prox(x, lambda, &mut p, scratch)?;
    let grad = x.iter().zip(&p).map(|(a, b)| (a - b) / lambda).collect();
    Ok((grad, status))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{L1Norm, MixedPenalty};

    #[test]
    fn l1_examples() {
        assert_eq!(prox_l1(&[2.0, 0.3, -2.0], 0.5), vec![1.5, 0.0, -1.5]);
        assert_eq!(prox_l1(&[1.25, -0.5], 0.0), vec![1.25, -0.5]);
    }

    #[test]
    fn mixed_examples() {
        assert_eq!(prox_mixed_norm(2.0, 0.5), 1.5);
        let s = (-1.0 + 5f64.sqrt()) / 2.0;
        assert!((prox_mixed_norm(-1.0, 1.0) + s * s).abs() < 1e-15);
        assert!((prox_mixed_norm(-1.0, 1.0) + 0.381966).abs() < 1e-6);
        for w in [0.0, 0.1, 3.0] {
            assert_eq!(prox_mixed_norm(0.0, w), 0.0);
        }
        // inside [0, w] the kink captures t
        assert_eq!(prox_mixed_norm(0.3, 0.5), 0.0);
    }

    #[test]
    fn mixed_first_order_condition() {
        for &(t, w) in &[(-3.0, 0.7), (-1e-6, 2.0), (-50.0, 0.01), (0.01, 0.001)] {
            let z = prox_mixed_norm(t, w);
            let g = if z > 0.0 { 1.0 } else { -(-z).sqrt() };
            assert!((z - t + w * g).abs() < 1e-12 * (1.0 + t.abs()), "t={t} w={w} z={z}");
        }
    }

    #[test]
    fn cfg_validation() {
        assert!(PdSolverConfig::image_tv().validate(8.0).is_ok());
        let bad = PdSolverConfig {
            primal_step: 1.0,
            dual_step: 1.0,
            ..PdSolverConfig::image_tv()
        };
        assert!(bad.validate(8.0).is_err());
        assert!(PdSolverConfig::image_tv().with_tol(0.0).validate(8.0).is_err());
    }

    #[test]
    fn tv_prox_trivial_cases() {
        let shape = ImageShape::new(4, 4);
        let c = vec![0.25; 16];
        let out = prox_tv_pd(&c, shape, 0.3, &PdSolverConfig::image_tv()).unwrap();
        assert!(out.z.iter().all(|v| (v - 0.25).abs() < 1e-12));
        assert!(out.status.converged);
        let x: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        let same = prox_tv_pd(&x, shape, 0.0, &PdSolverConfig::image_tv()).unwrap();
        assert_eq!(same.z, x);
    }

    #[test]
    fn tv_prox_flags_non_convergence() {
        let shape = ImageShape::new(8, 8);
        let x: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 / 11.0).collect();
        let cfg = PdSolverConfig::image_tv().with_max_iters(2).with_tol(1e-12);
        let out = prox_tv_pd(&x, shape, 0.2, &cfg).unwrap();
        assert!(!out.status.converged);
        assert_eq!(out.status.iterations, 2);
    }

    #[test]
    fn moreau_grad_abs() {
        let (g, _) = moreau_grad(&L1Norm::new(1.0), &[3.0], 1.0, &mut ProxScratch::default()).unwrap();
        assert_eq!(g, vec![1.0]);
        let (g0, _) = moreau_grad(&L1Norm::new(1.0), &[0.0], 0.5, &mut ProxScratch::default()).unwrap();
        assert_eq!(g0, vec![0.0]);
        assert!(moreau_grad(&L1Norm::new(1.0), &[0.0], 0.0, &mut ProxScratch::default()).is_err());
    }

    #[test]
    fn mixed_dual_prox_is_moreau_consistent() {
        // prox_{sigma f*}(v) + sigma prox_{f/sigma}(v/sigma) = v
        let pen = MixedPenalty;
        for &(v, w, s) in &[(0.3, 0.5, 0.7), (-4.0, 2.0, 0.3), (9.0, 0.1, 1.0)] {
            let dual = pen.dual_prox(v, w, s);
            let primal = prox_mixed_norm(v / s, w / s);
            assert!((dual + s * primal - v).abs() < 1e-12);
        }
    }
}
