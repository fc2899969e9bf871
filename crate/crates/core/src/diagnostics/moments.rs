use crate::kernels::Observer;
use crate::{Error, Result};

/// Per-coordinate running mean and sum of squared deviations (Welford),
/// mergeable with Chan's pairwise update.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn update(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim(), "observation dimension");
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn try_update(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        self.update(x);
        Ok(())
    }

    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.dim() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    /// Unbiased per-coordinate variance.
    pub fn variance(&self) -> Result<Vec<f64>> {
        if self.count < 2 {
            return Err(Error::TooFewObservations {
                needed: 2,
                have: self.count,
            });
        }
        let denom = (self.count - 1) as f64;
        Ok(self.m2.iter().map(|s| s / denom).collect())
    }

    /// `(mean, unbiased variance)`.
    pub fn finalize(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.mean.clone(), self.variance()?))
    }
}

impl Observer for MomentAccumulator {
    fn observe(&mut self, _iteration: usize, state: &[f64]) {
        self.update(state);
    }
}

/// Means of consecutive non-overlapping batches, for Monte Carlo standard
/// errors of a time average along one correlated chain.
#[derive(Clone, Debug)]
pub struct BatchMeans {
    batch_len: usize,
    filled: usize,
    sum: Vec<f64>,
    batches: MomentAccumulator,
}

impl BatchMeans {
    pub fn new(dim: usize, batch_len: usize) -> Self {
        assert!(batch_len >= 1);
        Self {
            batch_len,
            filled: 0,
            sum: vec![0.0; dim],
            batches: MomentAccumulator::new(dim),
        }
    }

    pub fn update(&mut self, x: &[f64]) {
        for (s, v) in self.sum.iter_mut().zip(x) {
            *s += v;
        }
        self.filled += 1;
        if self.filled == self.batch_len {
            let inv = 1.0 / self.batch_len as f64;
            let mean: Vec<f64> = self.sum.iter().map(|s| s * inv).collect();
            self.batches.update(&mean);
            self.sum.iter_mut().for_each(|s| *s = 0.0);
            self.filled = 0;
        }
    }

    pub fn n_batches(&self) -> u64 {
        self.batches.count()
    }

    /// Mean over completed batches.
    pub fn mean(&self) -> &[f64] {
        self.batches.mean()
    }

    /// Standard error of the overall mean, `sd(batch means) / sqrt(batches)`.
    pub fn std_error(&self) -> Result<Vec<f64>> {
        let b = self.n_batches() as f64;
        Ok(self.batches.variance()?.into_iter().map(|v| (v / b).sqrt()).collect())
    }
}

impl Observer for BatchMeans {
    fn observe(&mut self, _iteration: usize, state: &[f64]) {
        self.update(state);
    }
}

/// L2 errors of an estimated mean and variance against a reference,
/// normalized by `sqrt(d)`.
pub fn reference_error(est_mean: &[f64], est_var: &[f64], ref_mean: &[f64], ref_var: &[f64]) -> Result<(f64, f64)> {
    let d = ref_mean.len();
    for v in [est_mean, est_var, ref_var] {
        if v.len() != d {
            return Err(Error::ShapeMismatch {
                expected: d,
                found: v.len(),
            });
        }
    }
    if d == 0 {
        return Err(Error::ShapeMismatch { expected: 1, found: 0 });
    }
    let l2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = (d as f64).sqrt();
    Ok((l2(est_mean, ref_mean) / scale, l2(est_var, ref_var) / scale))
}
