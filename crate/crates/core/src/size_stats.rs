//! Cascade-tree size moments: closed-form predictions, Monte Carlo
//! estimates, and the scaled size `σ = e^{-x} S`.
//!
//! Two sets of reference values are carried side by side. `exact_moment`
//! and [`PAPER_SCALED_MOMENTS`] are the published predictions. The
//! `geometric_*` functions follow from the size being a Yule process in
//! `x` (extending the interval by `dx` adds a vertex linked from any of
//! the `S` current vertices with probability `S dx`), so `S(x)` is
//! geometric on `{1, 2, ...}` with success probability `e^{-x}`. The two
//! agree for `p ≤ 2` and differ from `p = 3` on.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::grid::fmt_f64;
use crate::mc::{self, McError};
use crate::stats::{block_jackknife_se, mean_se};

/// Published limits `M_0..M_5` of the scaled size distribution.
pub const PAPER_SCALED_MOMENTS: [f64; 6] = [1.0, 1.0, 2.0, 15.0 / 4.0, 34.0 / 3.0, 25.0];
pub const MAX_ORDER: u32 = 5;
pub const JACKKNIFE_BLOCK: usize = 100;
pub const MIN_SCALED_X: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SizeError {
    #[error("moment order {0} is not supported")]
    UnsupportedOrder(u32),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Sampling(#[from] McError),
}

/// Published closed forms for `⟨S^p(x)⟩`, `p ∈ {1, 2, 3}`.
pub fn exact_moment(x: f64, p: u32) -> Result<f64, SizeError> {
    let ex = x.exp();
    match p {
        1 => Ok(ex),
        2 => Ok(2.0 * ex * ex - ex),
        3 => Ok(3.75 * ex.powi(3) - 2.75 * ex - 1.5 * x * ex),
        _ => Err(SizeError::UnsupportedOrder(p)),
    }
}

fn eulerian_row(p: u32) -> Vec<f64> {
    let mut row = vec![1.0];
    for n in 1..=p as usize {
        let mut next = vec![0.0; n];
        for (m, slot) in next.iter_mut().enumerate() {
            let keep = if m < row.len() { (m + 1) as f64 * row[m] } else { 0.0 };
            let shift = if m >= 1 && m - 1 < row.len() { (n - m) as f64 * row[m - 1] } else { 0.0 };
            *slot = keep + shift;
        }
        row = next;
    }
    row
}

/// `E[S^p]` for `S` geometric on `{1, 2, ...}` with success probability
/// `e^{-x}`: `e^{px} A_p(1 - e^{-x})` with `A_p` the Eulerian polynomial.
pub fn geometric_moment(x: f64, p: u32) -> f64 {
    if p == 0 {
        return 1.0;
    }
    let q = -(-x).exp_m1();
    let poly = eulerian_row(p).iter().rev().fold(0.0, |acc, a| acc * q + a);
    (p as f64 * x).exp() * poly
}

/// Scaled-size moment `lim e^{-px} E[S^p] = p!` under the geometric law.
pub fn geometric_scaled_moment(p: u32) -> f64 {
    (1..=p).map(f64::from).product()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeMomentReport {
    pub x: f64,
    pub p: u32,
    /// Published closed form, for `p ≤ 3`.
    pub exact: Option<f64>,
    pub geometric_law: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub replicates: usize,
}

impl SizeMomentReport {
    /// `|estimate - exact| / std_error`, when both exist.
    pub fn z_exact(&self) -> Option<f64> {
        self.exact.map(|e| z(self.estimate, e, self.std_error))
    }

    pub fn z_geometric(&self) -> f64 {
        z(self.estimate, self.geometric_law, self.std_error)
    }
}

fn z(est: f64, target: f64, se: f64) -> f64 {
    if se == 0.0 {
        if est == target {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (est - target).abs() / se
    }
}

fn check_order(p_max: u32) -> Result<(), SizeError> {
    if (1..=MAX_ORDER).contains(&p_max) {
        Ok(())
    } else {
        Err(SizeError::UnsupportedOrder(p_max))
    }
}

/// Sample moments `⟨S^p⟩`, `p = 1..=p_max`, from given sizes.
pub fn moments_from_sizes(x: f64, sizes: &[u64], p_max: u32) -> Result<Vec<SizeMomentReport>, SizeError> {
    check_order(p_max)?;
    Ok((1..=p_max)
        .map(|p| {
            let powers: Vec<f64> = sizes.iter().map(|&s| (s as f64).powi(p as i32)).collect();
            let e = mean_se(&powers);
            SizeMomentReport {
                x,
                p,
                exact: exact_moment(x, p).ok(),
                geometric_law: geometric_moment(x, p),
                estimate: e.mean,
                std_error: e.std_error,
                replicates: sizes.len(),
            }
        })
        .collect())
}

pub fn mc_moments(
    x: f64,
    replicates: usize,
    master_seed: u64,
    node_cap: u64,
    p_max: u32,
) -> Result<Vec<SizeMomentReport>, SizeError> {
    check_order(p_max)?;
    if replicates < 100 {
        return Err(SizeError::InvalidParameter(format!(
            "need at least 100 replicates, got {replicates}"
        )));
    }
    let sizes = mc::size_sample(x, replicates, master_seed, node_cap)?;
    moments_from_sizes(x, &sizes, p_max)
}

/// Uniform bins on `[0, sigma_max)` plus an overflow bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub sigma_max: f64,
    pub counts: Vec<u64>,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(bins: usize, sigma_max: f64) -> Self {
        Self {
            sigma_max,
            counts: vec![0; bins.max(1)],
            overflow: 0,
        }
    }

    pub fn bin_width(&self) -> f64 {
        self.sigma_max / self.counts.len() as f64
    }

    pub fn add(&mut self, sigma: f64) {
        let b = (sigma / self.bin_width()).floor();
        if b >= 0.0 && (b as usize) < self.counts.len() {
            self.counts[b as usize] += 1;
        } else {
            self.overflow += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }

    /// `sigma_lo,sigma_hi,count`; the overflow row has `sigma_hi = inf`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "sigma_lo,sigma_hi,count")?;
        let w = self.bin_width();
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{},{c}", fmt_f64(i as f64 * w), fmt_f64((i + 1) as f64 * w))?;
        }
        writeln!(out, "{},inf,{}", fmt_f64(self.sigma_max), self.overflow)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledMoment {
    pub p: u32,
    pub estimate: f64,
    pub std_error: f64,
    pub jackknife_se: f64,
    pub paper_limit: f64,
    pub geometric_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledSizeReport {
    pub x: f64,
    pub replicates: usize,
    pub histogram: Histogram,
    /// `M_0..M_5`.
    pub moments: Vec<ScaledMoment>,
    pub variance: f64,
}

impl ScaledSizeReport {
    pub fn moment(&self, p: u32) -> &ScaledMoment {
        &self.moments[p as usize]
    }
}

pub fn scaled_from_sizes(x: f64, sizes: &[u64], bins: usize, sigma_max: f64) -> Result<ScaledSizeReport, SizeError> {
    if sizes.len() < 2 * JACKKNIFE_BLOCK {
        return Err(SizeError::InvalidParameter(format!(
            "need at least {} replicates for the block jackknife, got {}",
            2 * JACKKNIFE_BLOCK,
            sizes.len()
        )));
    }
    if !(sigma_max > 0.0) {
        return Err(SizeError::InvalidParameter(format!("sigma_max must be positive, got {sigma_max}")));
    }
    let scale = (-x).exp();
    let sigmas: Vec<f64> = sizes.iter().map(|&s| s as f64 * scale).collect();
    let mut histogram = Histogram::new(bins, sigma_max);
    for &s in &sigmas {
        histogram.add(s);
    }
    let moments = (0..=MAX_ORDER)
        .map(|p| {
            if p == 0 {
                return ScaledMoment {
                    p,
                    estimate: 1.0,
                    std_error: 0.0,
                    jackknife_se: 0.0,
                    paper_limit: PAPER_SCALED_MOMENTS[0],
                    geometric_limit: 1.0,
                };
            }
            let powers: Vec<f64> = sigmas.iter().map(|s| s.powi(p as i32)).collect();
            let e = mean_se(&powers);
            ScaledMoment {
                p,
                estimate: e.mean,
                std_error: e.std_error,
                jackknife_se: block_jackknife_se(&powers, JACKKNIFE_BLOCK).expect("two blocks"),
                paper_limit: PAPER_SCALED_MOMENTS[p as usize],
                geometric_limit: geometric_scaled_moment(p),
            }
        })
        .collect::<Vec<_>>();
    let variance = {
        let m1 = moments[1].estimate;
        let n = sigmas.len() as f64;
        sigmas.iter().map(|s| (s - m1).powi(2)).sum::<f64>() / (n - 1.0)
    };
    Ok(ScaledSizeReport {
        x,
        replicates: sizes.len(),
        histogram,
        moments,
        variance,
    })
}

pub fn scaled_distribution(
    x: f64,
    replicates: usize,
    master_seed: u64,
    node_cap: u64,
    bins: usize,
    sigma_max: f64,
) -> Result<ScaledSizeReport, SizeError> {
    if x < MIN_SCALED_X {
        return Err(SizeError::InvalidParameter(format!(
            "scaled moments need x >= {MIN_SCALED_X}, got {x}"
        )));
    }
    let sizes = mc::size_sample(x, replicates, master_seed, node_cap)?;
    scaled_from_sizes(x, &sizes, bins, sigma_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::DEFAULT_NODE_CAP;

    #[test]
    fn exact_moments_at_zero() {
        for p in 1..=3 {
            assert!((exact_moment(0.0, p).unwrap() - 1.0).abs() < 1e-15);
        }
        assert_eq!(exact_moment(1.0, 4), Err(SizeError::UnsupportedOrder(4)));
    }

    #[test]
    fn exact_moment_values() {
        let e = std::f64::consts::E;
        assert!((exact_moment(1.0, 2).unwrap() - (2.0 * e * e - e)).abs() < 1e-12);
        assert!((exact_moment(1.0, 2).unwrap() - 12.059_83).abs() < 1e-5);
        assert!((exact_moment(2.0, 3).unwrap() - 1470.3709).abs() < 1e-4);
    }

    #[test]
    fn geometric_moments_brute_force() {
        // Σ_k k^p (1-q) q^{k-1} summed directly
        for &x in &[0.0f64, 0.5, 1.0, 2.0] {
            let p0 = (-x).exp();
            let q = 1.0 - p0;
            for p in 0..=5u32 {
                let direct: f64 = (1..20_000)
                    .map(|k| (k as f64).powi(p as i32) * p0 * q.powi(k - 1))
                    .sum();
                let closed = geometric_moment(x, p);
                assert!((closed - direct).abs() <= 1e-9 * direct, "x={x} p={p}: {closed} vs {direct}");
            }
        }
    }

    #[test]
    fn geometric_agrees_with_published_low_orders() {
        for &x in &[0.3, 1.0, 2.5] {
            for p in 1..=2 {
                let (a, b) = (geometric_moment(x, p), exact_moment(x, p).unwrap());
                assert!((a - b).abs() < 1e-12 * b);
            }
        }
        assert_eq!(geometric_scaled_moment(3), 6.0);
        assert_eq!(geometric_scaled_moment(5), 120.0);
    }

    #[test]
    fn moments_at_zero_are_one() {
        let reports = mc_moments(0.0, 200, 1, DEFAULT_NODE_CAP, 5).unwrap();
        for r in reports {
            assert_eq!(r.estimate, 1.0);
            assert_eq!(r.std_error, 0.0);
        }
    }

    #[test]
    fn mc_moments_rejects_bad_arguments() {
        assert!(matches!(mc_moments(1.0, 50, 1, 10, 2), Err(SizeError::InvalidParameter(_))));
        assert!(matches!(mc_moments(1.0, 500, 1, 10, 6), Err(SizeError::UnsupportedOrder(6))));
        assert!(matches!(
            mc_moments(10.0, 500, 1, 10, 2),
            Err(SizeError::Sampling(McError::Censored { .. }))
        ));
        assert!(scaled_distribution(2.0, 500, 1, 10, 10, 10.0).is_err());
    }

    #[test]
    fn histogram_mass_and_overflow() {
        let mut h = Histogram::new(4, 2.0);
        for s in [0.0, 0.49, 0.5, 1.99, 2.0, 7.0] {
            h.add(s);
        }
        assert_eq!(h.counts, vec![2, 1, 0, 1]);
        assert_eq!(h.overflow, 2);
        assert_eq!(h.total(), 6);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().last().unwrap().ends_with(",inf,2"));
    }

    #[test]
    fn scaled_report_normalization() {
        let sizes: Vec<u64> = (1..=400).collect();
        let r = scaled_from_sizes(1.0, &sizes, 10, 200.0).unwrap();
        assert_eq!(r.moment(0).estimate, 1.0);
        assert_eq!(r.histogram.total(), 400);
        assert_eq!(r.moments.len(), 6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(6))]

            #[test]
            fn low_order_moments_match_within_four_se(seed in any::<u64>()) {
                for x in [1.0, 2.0, 3.0] {
                    let reports = mc_moments(x, 20_000, seed, DEFAULT_NODE_CAP, 3).unwrap();
                    for r in &reports {
                        prop_assert!(r.z_geometric() < 4.0, "x={} p={} z={}", x, r.p, r.z_geometric());
                        if r.p <= 2 {
                            prop_assert!(r.z_exact().unwrap() < 4.0, "x={} p={} z={}", x, r.p, r.z_exact().unwrap());
                        }
                    }
                }
            }
        }
    }
}
