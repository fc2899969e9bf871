use std::ops::{Deref, DerefMut};

/// A point in R^d, the state of one chain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct State(Vec<f64>);

impl State {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for State {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<&[f64]> for State {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

impl Deref for State {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for State {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    let n = dot(a, a).sqrt();
    if n.is_finite() {
        return n;
    }
    // overflow of the squares: rescale by the largest entry
    let s = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !s.is_finite() || s == 0.0 {
        return s;
    }
    s * a.iter().map(|v| (v / s) * (v / s)).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
