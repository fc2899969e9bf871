//! Linear operators used inside the non-smooth parts and the deconvolution
//! forward model. Images are stored row-major: pixel `(i, j)` of an
//! `rows x cols` image sits at `i * cols + j`.

use crate::{Error, Result};

pub trait LinearOp: Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_adjoint(&self, p: &[f64], out: &mut [f64]);
    /// Upper bound on the squared operator norm.
    fn norm_sq_bound(&self) -> f64;

    /// Shape-checked [`LinearOp::apply`].
    fn apply_checked(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.in_dim(),
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.out_dim()];
        self.apply(x, &mut out);
        Ok(out)
    }

    /// Shape-checked [`LinearOp::apply_adjoint`].
    fn apply_adjoint_checked(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.out_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.out_dim(),
                found: p.len(),
            });
        }
        let mut out = vec![0.0; self.in_dim()];
        self.apply_adjoint(p, &mut out);
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageShape {
    pub rows: usize,
    pub cols: usize,
}

impl ImageShape {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `Kx = x2 - x1` from R^2 to R.
#[derive(Clone, Copy, Debug, Default)]
pub struct DiffOp2D;

impl LinearOp for DiffOp2D {
    fn in_dim(&self) -> usize {
        2
    }
    fn out_dim(&self) -> usize {
        1
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[1] - x[0];
    }
    fn apply_adjoint(&self, p: &[f64], out: &mut [f64]) {
        out[0] = -p[0];
        out[1] = p[0];
    }
    fn norm_sq_bound(&self) -> f64 {
        2.0
    }
}

/// Forward differences with zero at the far boundary. The output stores the
/// vertical field `(Kx)^1` in the first `rows * cols` entries and the
/// horizontal field `(Kx)^2` in the second half.
#[derive(Clone, Copy, Debug)]
pub struct GradOp2DImage {
    shape: ImageShape,
}

impl GradOp2DImage {
    pub fn new(shape: ImageShape) -> Self {
        Self { shape }
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }
}

impl LinearOp for GradOp2DImage {
    fn in_dim(&self) -> usize {
        self.shape.len()
    }

    fn out_dim(&self) -> usize {
        2 * self.shape.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let ImageShape { rows, cols } = self.shape;
        let n = rows * cols;
        let (vert, horiz) = out.split_at_mut(n);
        for i in 0..rows {
            for j in 0..cols {
                let k = i * cols + j;
                vert[k] = if i + 1 < rows { x[k + cols] - x[k] } else { 0.0 };
                horiz[k] = if j + 1 < cols { x[k + 1] - x[k] } else { 0.0 };
            }
        }
    }

    fn apply_adjoint(&self, p: &[f64], out: &mut [f64]) {
        let ImageShape { rows, cols } = self.shape;
        let n = rows * cols;
        let (vert, horiz) = p.split_at(n);
        for i in 0..rows {
            for j in 0..cols {
                let k = i * cols + j;
                let mut v = 0.0;
                if i + 1 < rows {
                    v -= vert[k];
                }
                if i > 0 {
                    v += vert[k - cols];
                }
                if j + 1 < cols {
                    v -= horiz[k];
                }
                if j > 0 {
                    v += horiz[k - 1];
                }
                out[k] = v;
            }
        }
    }

    fn norm_sq_bound(&self) -> f64 {
        8.0
    }
}

pub const BLUR_SIZE: usize = 5;

/// 5x5 Gaussian stencil with standard deviation 1, normalised to sum 1.
pub fn gaussian_kernel_5x5() -> [[f64; BLUR_SIZE]; BLUR_SIZE] {
    let mut k = [[0.0; BLUR_SIZE]; BLUR_SIZE];
    let half = (BLUR_SIZE / 2) as f64;
    let mut total = 0.0;
    for (a, row) in k.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let (da, db) = (a as f64 - half, b as f64 - half);
            *v = (-(da * da + db * db) / 2.0).exp();
            total += *v;
        }
    }
    for row in k.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    k
}

/// Convolution with a 5x5 stencil and replicate-edge boundary. The adjoint
/// scatters each output back onto the clamped input pixels it read, so it
/// is exact including the boundary.
#[derive(Clone, Debug)]
pub struct ConvOp {
    shape: ImageShape,
    kernel: [[f64; BLUR_SIZE]; BLUR_SIZE],
    norm_sq: f64,
}

impl ConvOp {
    pub fn gaussian(shape: ImageShape) -> Self {
        Self::with_kernel(shape, gaussian_kernel_5x5())
    }

    pub fn with_kernel(shape: ImageShape, kernel: [[f64; BLUR_SIZE]; BLUR_SIZE]) -> Self {
        let mut op = Self {
            shape,
            kernel,
            norm_sq: f64::INFINITY,
        };
        op.norm_sq = op.estimate_norm_sq();
        op
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn kernel(&self) -> &[[f64; BLUR_SIZE]; BLUR_SIZE] {
        &self.kernel
    }

    // Power iteration on K^T K, padded by a small relative margin so the
    // result is an upper bound in practice.
    fn estimate_norm_sq(&self) -> f64 {
        let n = self.shape.len();
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
        let mut kv = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= nv);
            self.apply(&v, &mut kv);
            self.apply_adjoint(&kv, &mut w);
            let next: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
            std::mem::swap(&mut v, &mut w);
            if (next - lambda).abs() <= 1e-12 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda * (1.0 + 1e-6)
    }

    #[inline]
    fn clamp(v: isize, len: usize) -> usize {
        v.clamp(0, len as isize - 1) as usize
    }
}

impl LinearOp for ConvOp {
    fn in_dim(&self) -> usize {
        self.shape.len()
    }

    fn out_dim(&self) -> usize {
        self.shape.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let ImageShape { rows, cols } = self.shape;
        let half = (BLUR_SIZE / 2) as isize;
        for i in 0..rows {
            for j in 0..cols {
                let mut acc = 0.0;
                for (a, krow) in self.kernel.iter().enumerate() {
                    let si = Self::clamp(i as isize - (a as isize - half), rows);
                    for (b, kv) in krow.iter().enumerate() {
                        let sj = Self::clamp(j as isize - (b as isize - half), cols);
                        acc += kv * x[si * cols + sj];
                    }
                }
                out[i * cols + j] = acc;
            }
        }
    }

    fn apply_adjoint(&self, p: &[f64], out: &mut [f64]) {
        let ImageShape { rows, cols } = self.shape;
        let half = (BLUR_SIZE / 2) as isize;
        out.fill(0.0);
        for i in 0..rows {
            for j in 0..cols {
                let pv = p[i * cols + j];
                for (a, krow) in self.kernel.iter().enumerate() {
                    let si = Self::clamp(i as isize - (a as isize - half), rows);
                    for (b, kv) in krow.iter().enumerate() {
                        let sj = Self::clamp(j as isize - (b as isize - half), cols);
                        out[si * cols + sj] += kv * pv;
                    }
                }
            }
        }
    }

    fn norm_sq_bound(&self) -> f64 {
        self.norm_sq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;

    fn random_vec(rng: &mut RngStream, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.normal()).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    // Oracle: build the dense matrix of the operator column by column and
    // compare <Kx, p> against the explicit double sum x^T K^T p.
    fn adjoint_gap_dense(op: &dyn LinearOp, rng: &mut RngStream) -> f64 {
        let (n, m) = (op.in_dim(), op.out_dim());
        let mut dense = vec![0.0; n * m];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; m];
        for c in 0..n {
            e.fill(0.0);
            e[c] = 1.0;
            op.apply(&e, &mut col);
            for r in 0..m {
                dense[r * n + c] = col[r];
            }
        }
        let x = random_vec(rng, n);
        let p = random_vec(rng, m);
        let mut ktp = vec![0.0; n];
        op.apply_adjoint(&p, &mut ktp);
        let mut double_sum = 0.0;
        for r in 0..m {
            for c in 0..n {
                double_sum += p[r] * dense[r * n + c] * x[c];
            }
        }
        (double_sum - dot(&x, &ktp)).abs()
    }

    #[test]
    fn diff_op_values() {
        let mut out = [0.0];
        DiffOp2D.apply(&[3.0, 5.0], &mut out);
        assert_eq!(out[0], 2.0);
    }

    #[test]
    fn grad_of_constant_is_zero() {
        let op = GradOp2DImage::new(ImageShape::new(4, 5));
        let x = vec![0.7; 20];
        let p = op.apply_checked(&x).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_layout() {
        // [[0, 1], [0, 1]]
        let op = GradOp2DImage::new(ImageShape::new(2, 2));
        let p = op.apply_checked(&[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn adjoints_match_double_sum() {
        let mut rng = RngStream::new(5, 0);
        let ops: Vec<Box<dyn LinearOp>> = vec![
            Box::new(DiffOp2D),
            Box::new(GradOp2DImage::new(ImageShape::new(6, 7))),
            Box::new(GradOp2DImage::new(ImageShape::new(1, 8))),
            Box::new(ConvOp::gaussian(ImageShape::new(7, 6))),
        ];
        for op in &ops {
            for _ in 0..5 {
                assert!(adjoint_gap_dense(op.as_ref(), &mut rng) < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let op = GradOp2DImage::new(ImageShape::new(3, 3));
        assert!(matches!(op.apply_checked(&[0.0; 8]), Err(Error::ShapeMismatch { .. })));
        assert!(op.apply_adjoint_checked(&[0.0; 9]).is_err());
    }

    #[test]
    fn grad_norm_bound() {
        let op = GradOp2DImage::new(ImageShape::new(12, 12));
        let mut rng = RngStream::new(9, 0);
        let mut v = random_vec(&mut rng, 144);
        let mut kv = vec![0.0; 288];
        let mut w = vec![0.0; 144];
        let mut lambda = 0.0;
        for _ in 0..500 {
            let nv = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|a| *a /= nv);
            op.apply(&v, &mut kv);
            op.apply_adjoint(&kv, &mut w);
            lambda = dot(&w, &v);
            std::mem::swap(&mut v, &mut w);
        }
        assert!(lambda <= 8.0, "{lambda}");
    }

    #[test]
    fn kernel_normalised_and_symmetric() {
        let k = gaussian_kernel_5x5();
        let total: f64 = k.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(k[0][1], k[1][0]);
        assert!(k[2][2] > k[2][1]);
    }

    #[test]
    fn conv_preserves_constant() {
        let op = ConvOp::gaussian(ImageShape::new(9, 11));
        let y = op.apply_checked(&vec![0.4; 99]).unwrap();
        assert!(y.iter().all(|v| (v - 0.4).abs() < 1e-15));
        // constant images are fixed points, so |K|^2 >= 1
        assert!(op.norm_sq_bound() >= 1.0);
    }
}
