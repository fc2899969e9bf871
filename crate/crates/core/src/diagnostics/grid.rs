use std::io::Write;

use crate::imageio::sci;
use crate::potential::PotentialModel;
use crate::{Error, Result};

const MASS_TOL: f64 = 1e-12;

/// Axis-aligned box in R^2 split into `resolution x resolution` bins.
///
/// Bin `(i, j)` covers `[lo0 + i h0, lo0 + (i+1) h0) x [lo1 + j h1, ...)`
/// and has flat index `i * resolution + j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub resolution: usize,
}

impl GridSpec {
    pub fn new(lo: [f64; 2], hi: [f64; 2], resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidConfig(format!("grid resolution must be >= 2, got {resolution}")));
        }
        for a in 0..2 {
            if !(lo[a].is_finite() && hi[a].is_finite() && lo[a] < hi[a]) {
                return Err(Error::InvalidConfig(format!(
                    "bad grid bounds on axis {a}: [{}, {}]",
                    lo[a], hi[a]
                )));
            }
        }
        Ok(Self { lo, hi, resolution })
    }

    /// Same box on both axes.
    pub fn square(lo: f64, hi: f64, resolution: usize) -> Result<Self> {
        Self::new([lo, lo], [hi, hi], resolution)
    }

    pub fn n_bins(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.resolution as f64
    }

    pub fn center(&self, idx: usize) -> [f64; 2] {
        let (i, j) = (idx / self.resolution, idx % self.resolution);
        [
            self.lo[0] + (i as f64 + 0.5) * self.width(0),
            self.lo[1] + (j as f64 + 0.5) * self.width(1),
        ]
    }

    fn axis_bin(&self, axis: usize, v: f64) -> (usize, bool) {
        let t = (v - self.lo[axis]) / self.width(axis);
        if !(t >= 0.0) {
            (0, true)
        } else if t >= self.resolution as f64 {
            (self.resolution - 1, v > self.hi[axis])
        } else {
            (t as usize, false)
        }
    }

    /// Flat bin index of `p`, clamping to the edge bins; the flag reports
    /// whether `p` was outside the box.
    pub fn locate(&self, p: [f64; 2]) -> (usize, bool) {
        let (i, ci) = self.axis_bin(0, p[0]);
        let (j, cj) = self.axis_bin(1, p[1]);
        (i * self.resolution + j, ci || cj)
    }

    fn is_same(&self, other: &GridSpec) -> bool {
        self == other
    }
}

/// Probability measure carried by the bin centers of a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    spec: GridSpec,
    weights: Vec<f64>,
}

impl GridMeasure {
    /// Wrap already-normalized weights.
    pub fn from_weights(spec: GridSpec, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != spec.n_bins() {
            return Err(Error::ShapeMismatch {
                expected: spec.n_bins(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Format("grid weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Unnormalized(total));
        }
        Ok(Self { spec, weights })
    }

    /// Normalize nonnegative raw masses.
    pub fn normalized(spec: GridSpec, mut raw: Vec<f64>) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::EmptyMeasure);
        }
        raw.iter_mut().for_each(|w| *w /= total);
        Self::from_weights(spec, raw)
    }

    pub fn point_mass(spec: GridSpec, idx: usize) -> Self {
        let mut weights = vec![0.0; spec.n_bins()];
        weights[idx] = 1.0;
        Self { spec, weights }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mean(&self) -> [f64; 2] {
        let mut m = [0.0; 2];
        for (idx, &w) in self.weights.iter().enumerate() {
            let c = self.spec.center(idx);
            m[0] += w * c[0];
            m[1] += w * c[1];
        }
        m
    }

    /// Indices and weights of the nonzero bins.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().copied().enumerate().filter(|&(_, w)| w > 0.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin,center_x,center_y,weight")?;
        for (idx, &wt) in self.weights.iter().enumerate() {
            let c = self.spec.center(idx);
            writeln!(w, "{idx},{},{},{}", sci(c[0]), sci(c[1]), sci(wt))?;
        }
        Ok(())
    }

    pub(crate) fn check_compatible(&self, other: &GridMeasure) -> Result<()> {
        if !self.spec.is_same(&other.spec) {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

fn gibbs_weights(model: &PotentialModel, spec: &GridSpec) -> Result<Vec<f64>> {
    if model.dim() != 2 {
        return Err(Error::ShapeMismatch {
            expected: 2,
            found: model.dim(),
        });
    }
    let u: Vec<f64> = (0..spec.n_bins()).map(|i| model.value(&spec.center(i))).collect();
    let u_min = u.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    if !u_min.is_finite() {
        return Err(Error::EmptyMeasure);
    }
    // shifting by the minimum keeps exp in range; the shift cancels on normalizing
    Ok(u.into_iter().map(|v| (-(v - u_min)).exp()).collect())
}

/// Histogram of `exp(-U)` evaluated at the bin centers, normalized on the box.
pub fn build_target_grid(model: &PotentialModel, spec: &GridSpec) -> Result<GridMeasure> {
    let w = gibbs_weights(model, spec)?;
    GridMeasure::normalized(*spec, w).map_err(|e| match e {
        Error::Unnormalized(_) => Error::EmptyMeasure,
        e => e,
    })
}

/// Fraction of the target mass that falls inside `spec`, estimated on a
/// box enlarged by `pad` bins per side at the same bin width.
pub fn target_coverage(model: &PotentialModel, spec: &GridSpec, pad: usize) -> Result<f64> {
    let h = [spec.width(0), spec.width(1)];
    let big = GridSpec::new(
        [spec.lo[0] - pad as f64 * h[0], spec.lo[1] - pad as f64 * h[1]],
        [spec.hi[0] + pad as f64 * h[0], spec.hi[1] + pad as f64 * h[1]],
        spec.resolution + 2 * pad,
    )?;
    let w = gibbs_weights(model, &big)?;
    let total: f64 = w.iter().sum();
    let r = big.resolution;
    let inside: f64 = w
        .iter()
        .enumerate()
        .filter(|(idx, _)| {
            let (i, j) = (idx / r, idx % r);
            (pad..pad + spec.resolution).contains(&i) && (pad..pad + spec.resolution).contains(&j)
        })
        .map(|(_, v)| v)
        .sum();
    Ok(inside / total)
}

#[derive(Clone, Debug)]
pub struct Binned {
    pub measure: GridMeasure,
    /// Points that fell outside the box and were assigned to an edge bin.
    pub clamped: usize,
}

impl Binned {
    pub fn clamp_rate(&self, n_points: usize) -> f64 {
        self.clamped as f64 / n_points as f64
    }
}

/// Empirical histogram of row-major `n x 2` points.
pub fn bin_samples(points: &[f64], spec: &GridSpec) -> Result<Binned> {
    if points.len() % 2 != 0 {
        return Err(Error::ShapeMismatch {
            expected: 2,
            found: points.len() % 2,
        });
    }
    let n = points.len() / 2;
    if n == 0 {
        return Err(Error::EmptyMeasure);
    }
    let mut counts = vec![0.0; spec.n_bins()];
    let mut clamped = 0;
    for p in points.chunks_exact(2) {
        let (idx, c) = spec.locate([p[0], p[1]]);
        counts[idx] += 1.0;
        clamped += c as usize;
    }
    if clamped > 0 {
        log::debug!("{clamped} of {n} samples outside the grid box were clamped");
    }
    let inv = 1.0 / n as f64;
    counts.iter_mut().for_each(|c| *c *= inv);
    let measure = GridMeasure::normalized(*spec, counts)?;
    Ok(Binned { measure, clamped })
}

/// `0.5 * sum |p_i - q_i|` over the shared grid.
pub fn tv_distance_grid(p: &GridMeasure, q: &GridMeasure) -> Result<f64> {
    p.check_compatible(q)?;
    Ok(0.5 * p.weights.iter().zip(&q.weights).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::ZeroPart;
    use crate::potentials::{mixed_norm_model, IsotropicQuadratic, ANCHOR_2D};
    use crate::RngStream;

    fn quad(center: [f64; 2]) -> PotentialModel {
        PotentialModel::new(IsotropicQuadratic::new(center.to_vec(), 1.0), ZeroPart).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(GridSpec::square(0.0, 1.0, 1).is_err());
        assert!(GridSpec::square(1.0, 1.0, 4).is_err());
        assert!(GridSpec::new([0.0, 0.0], [1.0, f64::NAN], 4).is_err());
    }

    #[test]
    fn locate_and_centers() {
        let g = GridSpec::square(0.0, 4.0, 4).unwrap();
        assert_eq!(g.locate([0.5, 3.5]), (3, false));
        assert_eq!(g.center(3), [0.5, 3.5]);
        assert_eq!(g.locate([-1.0, 1.0]), (1, true));
        assert_eq!(g.locate([9.0, 9.0]), (15, true));
        assert_eq!(g.locate([4.0, 0.0]), (12, false));
        assert!(g.locate([f64::NAN, 0.0]).1);
    }

    #[test]
    fn target_mode_and_mass() {
        let spec = GridSpec::square(-5.0, 5.0, 50).unwrap();
        let t = build_target_grid(&quad([0.0, 0.0]), &spec).unwrap();
        assert!((t.total_mass() - 1.0).abs() < 1e-12);
        let (argmax, _) = t
            .weights()
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &w)| if w > acc.1 { (i, w) } else { acc });
        let c = spec.center(argmax);
        assert!(c[0].abs() <= spec.width(0) && c[1].abs() <= spec.width(1));
    }

    #[test]
    fn target_mean_near_anchor() {
        let spec = GridSpec::square(-5.0, 6.0, 60).unwrap();
        let m = build_target_grid(&quad(ANCHOR_2D), &spec).unwrap().mean();
        let h = spec.width(0);
        assert!(m[0].abs() < h && (m[1] - 1.0).abs() < h, "{m:?}");
    }

    #[test]
    fn coverage_of_standard_box() {
        let model = mixed_norm_model(5.0, ANCHOR_2D);
        let spec = GridSpec::square(-2.5, 2.5, 60).unwrap();
        let c = target_coverage(&model, &spec, 60).unwrap();
        assert!(c >= 1.0 - 1e-6, "{c}");
        let narrow = GridSpec::square(-0.5, 0.5, 20).unwrap();
        assert!(target_coverage(&model, &narrow, 40).unwrap() < 0.9);
    }

    #[test]
    fn single_point_bins_to_one() {
        let spec = GridSpec::square(-1.0, 1.0, 5).unwrap();
        let b = bin_samples(&[0.0, 0.0], &spec).unwrap();
        assert_eq!(b.clamped, 0);
        assert_eq!(b.measure.weights()[12], 1.0);
        assert!(bin_samples(&[], &spec).is_err());
    }

    #[test]
    fn clamp_count_matches_outside_points() {
        let spec = GridSpec::square(-1.0, 1.0, 5).unwrap();
        let pts = [0.0, 0.0, 5.0, 0.0, 0.0, -7.0, 0.3, 0.2, 2.0, 2.0];
        let b = bin_samples(&pts, &spec).unwrap();
        assert_eq!(b.clamped, 3);
        assert!((b.measure.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_histogram_binomial_band() {
        let spec = GridSpec::square(0.0, 1.0, 10).unwrap();
        let n = 1_000_000;
        let mut rng = RngStream::new(11, 0);
        let pts: Vec<f64> = (0..2 * n).map(|_| rng.uniform()).collect();
        let b = bin_samples(&pts, &spec).unwrap();
        let p = 1.0 / 100.0;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        let worst = b.measure.weights().iter().map(|w| (w - p).abs()).fold(0.0, f64::max);
        assert!(worst < 5.0 * sd, "{worst} vs {}", 5.0 * sd);
    }

    #[test]
    fn tv_examples() {
        let spec = GridSpec::square(0.0, 1.0, 2).unwrap();
        let p = GridMeasure::from_weights(spec, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let q = GridMeasure::point_mass(spec, 0);
        let r = GridMeasure::point_mass(spec, 3);
        assert_eq!(tv_distance_grid(&p, &p).unwrap(), 0.0);
        assert_eq!(tv_distance_grid(&q, &r).unwrap(), 1.0);
        assert_eq!(tv_distance_grid(&p, &q).unwrap(), 0.5);
        let other = GridMeasure::point_mass(GridSpec::square(0.0, 2.0, 2).unwrap(), 0);
        assert!(matches!(tv_distance_grid(&p, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn weights_validated() {
        let spec = GridSpec::square(0.0, 1.0, 2).unwrap();
        assert!(matches!(
            GridMeasure::from_weights(spec, vec![0.5, 0.4, 0.0, 0.0]),
            Err(Error::Unnormalized(_))
        ));
        assert!(GridMeasure::from_weights(spec, vec![1.5, -0.5, 0.0, 0.0]).is_err());
        assert!(GridMeasure::from_weights(spec, vec![1.0]).is_err());
        assert!(matches!(GridMeasure::normalized(spec, vec![0.0; 4]), Err(Error::EmptyMeasure)));
    }

    #[test]
    fn csv_layout() {
        let spec = GridSpec::square(0.0, 1.0, 2).unwrap();
        let mut buf = Vec::new();
        GridMeasure::point_mass(spec, 1).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "bin,center_x,center_y,weight");
        assert_eq!(lines[2], "1,2.500000000e-01,7.500000000e-01,1.000000000e+00");
        assert_eq!(lines.len(), 5);
    }
}
