//! Slow reference solvers used to cross-check the library's prox maps.

use nslang_core::operators::ImageShape;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimisation of `w g(z) + (z - t)^2 / 2` for a convex `g`
/// minimised at 0, so the answer lies between 0 and `t`.
///
/// `dg(a, b)` must return `g(a) - g(b)`. Comparisons use the difference
/// directly, which keeps them accurate well below `sqrt(eps)`.
pub fn golden_section_prox(dg: impl Fn(f64, f64) -> f64, t: f64, w: f64) -> f64 {
    let (mut lo, mut hi) = (t.min(0.0), t.max(0.0));
    let diff = |a: f64, b: f64| w * dg(a, b) + 0.5 * (a - b) * (a + b - 2.0 * t);
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    for _ in 0..400 {
        if hi - lo <= 1e-15 * (1.0 + t.abs()) {
            break;
        }
        if diff(c, d) < 0.0 {
            hi = d;
            d = c;
            c = hi - INV_PHI * (hi - lo);
        } else {
            lo = c;
            c = d;
            d = lo + INV_PHI * (hi - lo);
        }
    }
    0.5 * (lo + hi)
}

/// `|a| - |b|`.
pub fn abs_difference(a: f64, b: f64) -> f64 {
    if a >= 0.0 && b >= 0.0 {
        a - b
    } else if a <= 0.0 && b <= 0.0 {
        b - a
    } else {
        a.abs() - b.abs()
    }
}

/// `|a|_* - |b|_*` for `|t|_* = t` (t >= 0), `(2/3)|t|^{3/2}` (t < 0).
pub fn mixed_norm_difference(a: f64, b: f64) -> f64 {
    if a >= 0.0 && b >= 0.0 {
        a - b
    } else if a < 0.0 && b < 0.0 {
        // (2/3)(p^{3/2} - q^{3/2}) = (2/3)(p - q)(p + sqrt(pq) + q)/(sqrt p + sqrt q)
        let (p, q) = (-a, -b);
        let (sp, sq) = (p.sqrt(), q.sqrt());
        2.0 / 3.0 * (p - q) * (p + sp * sq + q) / (sp + sq)
    } else {
        let g = |t: f64| if t >= 0.0 { t } else { 2.0 / 3.0 * (-t).powf(1.5) };
        g(a) - g(b)
    }
}

fn grad(x: &[f64], s: ImageShape, out: &mut [f64]) {
    let n = s.len();
    for i in 0..s.rows {
        for j in 0..s.cols {
            let k = i * s.cols + j;
            out[k] = if i + 1 < s.rows { x[k + s.cols] - x[k] } else { 0.0 };
            out[n + k] = if j + 1 < s.cols { x[k + 1] - x[k] } else { 0.0 };
        }
    }
}

fn grad_adjoint(p: &[f64], s: ImageShape, out: &mut [f64]) {
    let n = s.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..s.rows {
        for j in 0..s.cols {
            let k = i * s.cols + j;
            if i + 1 < s.rows {
                out[k + s.cols] += p[k];
                out[k] -= p[k];
            }
            if j + 1 < s.cols {
                out[k + 1] += p[n + k];
                out[k] -= p[n + k];
            }
        }
    }
}

/// Prox of `w * TV` (anisotropic, forward differences, zero past the
/// border) by projected gradient on the box-constrained dual
/// `min_{|p|_inf <= 1} |x - w D^T p|^2 / 2`.
pub fn tv_prox_projected_gradient(x: &[f64], shape: ImageShape, w: f64, iters: usize) -> Vec<f64> {
    let n = shape.len();
    assert_eq!(x.len(), n);
    if w == 0.0 {
        return x.to_vec();
    }
    let mut p = vec![0.0; 2 * n];
    let mut z = vec![0.0; n];
    let mut dz = vec![0.0; 2 * n];
    // |D|^2 <= 8
    let step = 1.0 / (8.0 * w);
    for _ in 0..iters {
        grad_adjoint(&p, shape, &mut z);
        for k in 0..n {
            z[k] = x[k] - w * z[k];
        }
        grad(&z, shape, &mut dz);
        for (pi, g) in p.iter_mut().zip(&dz) {
            *pi = (*pi + step * g).clamp(-1.0, 1.0);
        }
    }
    grad_adjoint(&p, shape, &mut z);
    (0..n).map(|k| x[k] - w * z[k]).collect()
}
