//! Reproducible per-replicate random streams and the exact samplers the
//! simulations need.
//!
//! Replicate `i` of a run seeded with `s` draws from ChaCha8 keyed by `s`
//! with stream id `i`. ChaCha is counter based, so substreams never overlap
//! and a replicate's draws do not depend on which worker ran it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type StreamRng = ChaCha8Rng;

/// Identifies the random substream for one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    pub master_seed: u64,
    pub replicate_index: u64,
}

impl SeedStream {
    pub fn new(master_seed: u64, replicate_index: u64) -> Self {
        Self {
            master_seed,
            replicate_index,
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.replicate_index);
        rng
    }
}

/// Runs `f` once per replicate index in `0..replicates`, in parallel, and
/// returns the results in index order.
pub fn map_replicates<T, F>(master_seed: u64, replicates: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(SeedStream, &mut StreamRng) -> T + Sync + Send,
{
    (0..replicates)
        .into_par_iter()
        .map(|i| {
            let stream = SeedStream::new(master_seed, i as u64);
            let mut rng = stream.rng();
            f(stream, &mut rng)
        })
        .collect()
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<R, F>(threads: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// Uniform on the half-open interval `(lo, hi]`.
pub fn uniform_left_open<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    hi - (hi - lo) * u
}

const INVERSION_LIMIT: f64 = 10.0;

/// Exact Poisson variate: sequential inversion below mean 10, Hörmann's
/// PTRS transformed rejection above.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        0
    } else if mean < INVERSION_LIMIT {
        poisson_inversion(rng, mean)
    } else {
        poisson_ptrs(rng, mean)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    // mean < 10 keeps p well above underflow
    while u >= cdf {
        k += 1;
        p *= mean / k as f64;
        let next = cdf + p;
        if next == cdf {
            break;
        }
        cdf = next;
    }
    k
}

fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        if us <= 0.0 {
            continue;
        }
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// `ln k!`: exact summation for small `k`, Stirling series otherwise.
pub fn ln_factorial(k: u64) -> f64 {
    if k < 16 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x + 0.5) * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// Number of failures before the first success in Bernoulli(`p`) trials.
pub fn geometric_failures<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    if p <= 0.0 {
        return u64::MAX;
    }
    let u: f64 = rng.random();
    let g = ((-u).ln_1p() / (-p).ln_1p()).floor();
    if g >= u64::MAX as f64 {
        u64::MAX
    } else {
        g as u64
    }
}
