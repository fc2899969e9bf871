//! Seeded, splittable random streams.
//!
//! Every chain owns one [`RngStream`] keyed by `(seed, stream_id)`. The
//! underlying generator is ChaCha8, which is counter based: the stream id
//! selects an independent keystream for the same seed, so chain `i` of an
//! ensemble is reproducible regardless of how chains are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::State;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.inner.gen();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Standard normal draw (Marsaglia polar method, second value cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.inner.gen::<f64>() - 1.0;
            let v = 2.0 * self.inner.gen::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * factor);
                return u * factor;
            }
        }
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for z in out.iter_mut() {
            *z = self.normal();
        }
    }
}

/// `d` independent standard normal draws.
///
/// # Panics
/// If `d == 0`.
pub fn draw_normal(rng: &mut RngStream, d: usize) -> State {
    assert!(d >= 1, "dimension must be positive");
    let mut out = vec![0.0; d];
    rng.fill_normal(&mut out);
    State::from(out)
}
