//! Sample means, standard errors and block jackknife.
//!
//! Everything here folds in slice order, so results are bit-identical for
//! identical inputs.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Sample mean and `sd / sqrt(n)` (unbiased variance).
pub fn mean_se(values: &[f64]) -> Estimate {
    let n = values.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            std_error: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate { mean, std_error: 0.0 };
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Estimate {
        mean,
        std_error: (ss / (n - 1) as f64 / n as f64).sqrt(),
    }
}

/// Delete-a-block jackknife standard error of the sample mean.
///
/// Consecutive blocks of `block` values; a short trailing block is merged
/// into the previous one. Needs at least two blocks.
pub fn block_jackknife_se(values: &[f64], block: usize) -> Option<f64> {
    let block = block.max(1);
    let nblocks = values.len() / block;
    if nblocks < 2 {
        return None;
    }
    let mut sums = Vec::with_capacity(nblocks);
    let mut lens = Vec::with_capacity(nblocks);
    for b in 0..nblocks {
        let end = if b + 1 == nblocks { values.len() } else { (b + 1) * block };
        let chunk = &values[b * block..end];
        sums.push(chunk.iter().sum::<f64>());
        lens.push(chunk.len());
    }
    let total: f64 = sums.iter().sum();
    let n = values.len();
    let loo: Vec<f64> = sums
        .iter()
        .zip(&lens)
        .map(|(s, l)| (total - s) / (n - l) as f64)
        .collect();
    let g = nblocks as f64;
    let center = loo.iter().sum::<f64>() / g;
    let ss: f64 = loo.iter().map(|t| (t - center).powi(2)).sum();
    Some(((g - 1.0) / g * ss).sqrt())
}
