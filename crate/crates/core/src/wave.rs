//! Traveling-wave observables of the height recurrence: front velocity
//! fits, the dispersion relation `a e^{-av} = 1` and its extremal
//! velocity, co-moving profiles, tail fits and the fixed-point residual.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::grid::{write_xy_csv, GridError, GridFunction, GridSpec};
use crate::recurrence::RecurrenceRun;

pub const MIN_FIT_POINTS: usize = 10;
pub const DEFAULT_PROFILE_WINDOW: (f64, f64) = (-20.0, 20.0);
pub const AHEAD_WINDOW: (f64, f64) = (5.0, 15.0);
pub const BEHIND_WINDOW: (f64, f64) = (-5.0, -1.5);
/// Tail values at or below this are dropped from log fits.
pub const NOISE_FLOOR: f64 = 1e-12;
const DOUBLE_ROOT_TOL: f64 = 1e-9;
const LEFT_TRUNCATION_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("fit window [{lo}, {hi}] has {points} points, need at least {min}")]
    WindowTooSmall { lo: usize, hi: usize, points: usize, min: usize },
    #[error("fit window [{lo}, {hi}] lies outside the trace")]
    WindowOutsideTrace { lo: usize, hi: usize },
    #[error("least-squares design matrix is singular")]
    Singular,
    #[error("front at {front} leaves less than {needed} of domain on one side of [{x_min}, {x_max}]")]
    Margin { front: f64, needed: f64, x_min: f64, x_max: f64 },
    #[error("tail window [{lo}, {hi}] has fewer than 2 points above the noise floor")]
    EmptyTail { lo: f64, hi: f64 },
    #[error("left truncation of the profile window contributes {0:e}, above the 1e-6 budget")]
    LeftTruncation(f64),
    #[error("velocity must be positive, got {0}")]
    BadVelocity(f64),
}

/// Front positions `x_f(n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontTrace {
    pub entries: Vec<(usize, f64)>,
}

impl FrontTrace {
    pub fn from_run(run: &RecurrenceRun) -> Self {
        Self {
            entries: run.fronts.iter().copied().enumerate().collect(),
        }
    }

    pub fn from_fn(ns: impl IntoIterator<Item = usize>, f: impl Fn(f64) -> f64) -> Self {
        Self {
            entries: ns.into_iter().map(|n| (n, f(n as f64))).collect(),
        }
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].1 > w[0].1)
    }

    /// Finite-difference velocity `(x_f(b) - x_f(a)) / (b - a)`.
    pub fn mean_velocity(&self, a: usize, b: usize) -> Option<f64> {
        let at = |n| self.entries.iter().find(|e| e.0 == n).map(|e| e.1);
        Some((at(b)? - at(a)?) / (b as f64 - a as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityFit {
    pub v: f64,
    /// Coefficient of `ln n`; zero when fitted without the log term.
    pub b: f64,
    pub c0: f64,
    pub residual_rms: f64,
    pub window: (usize, usize),
}

/// Least squares of `x_f(n)` on `{n, ln n, 1}` (or `{n, 1}`) for `n` in the
/// inclusive window.
pub fn fit_velocity(trace: &FrontTrace, window: (usize, usize), with_log: bool) -> Result<VelocityFit, WaveError> {
    let (lo, hi) = window;
    if lo > hi {
        return Err(WaveError::WindowOutsideTrace { lo, hi });
    }
    let pts: Vec<(f64, f64)> = trace
        .entries
        .iter()
        .filter(|(n, _)| (lo..=hi).contains(n))
        .map(|&(n, x)| (n as f64, x))
        .collect();
    if pts.is_empty() {
        return Err(WaveError::WindowOutsideTrace { lo, hi });
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(WaveError::WindowTooSmall {
            lo,
            hi,
            points: pts.len(),
            min: MIN_FIT_POINTS,
        });
    }
    if with_log && pts.iter().any(|p| p.0 < 1.0) {
        return Err(WaveError::Singular);
    }
    let cols = if with_log { 3 } else { 2 };
    let design = DMatrix::from_fn(pts.len(), cols, |i, j| match (j, with_log) {
        (0, _) => pts[i].0,
        (1, true) => pts[i].0.ln(),
        _ => 1.0,
    });
    let rhs = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let coef = least_squares(&design, &rhs)?;
    let fitted = &design * &coef;
    let residual_rms = ((rhs - fitted).norm_squared() / pts.len() as f64).sqrt();
    let (b, c0) = if with_log { (coef[1], coef[2]) } else { (0.0, coef[1]) };
    Ok(VelocityFit {
        v: coef[0],
        b,
        c0,
        residual_rms,
        window,
    })
}

fn least_squares(design: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, WaveError> {
    // column scaling keeps the SVD rank test meaningful when n and 1 differ by orders of magnitude
    let scales: Vec<f64> = design.column_iter().map(|c| c.norm().max(f64::MIN_POSITIVE)).collect();
    let mut scaled = design.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = scaled.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    if sv.min() <= 1e-10 * smax {
        return Err(WaveError::Singular);
    }
    let mut coef = svd.solve(rhs, 0.0).map_err(|_| WaveError::Singular)?;
    for (j, s) in scales.iter().enumerate() {
        coef[j] /= s;
    }
    Ok(coef)
}

/// `E[H(x)] ≈ αx + β ln x + γ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeightLawFit {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub residual_rms: f64,
}

/// Least squares of `(x, E[H(x)])` pairs on `{x, ln x, 1}`; needs three
/// distinct positive abscissae.
pub fn fit_height_law(samples: &[(f64, f64)]) -> Result<HeightLawFit, WaveError> {
    if samples.len() < 3 || samples.iter().any(|s| !(s.0 > 0.0)) {
        return Err(WaveError::Singular);
    }
    let design = DMatrix::from_fn(samples.len(), 3, |i, j| match j {
        0 => samples[i].0,
        1 => samples[i].0.ln(),
        _ => 1.0,
    });
    let rhs = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let coef = least_squares(&design, &rhs)?;
    let residual_rms = ((rhs - &design * &coef).norm_squared() / samples.len() as f64).sqrt();
    Ok(HeightLawFit {
        alpha: coef[0],
        beta: coef[1],
        gamma: coef[2],
        residual_rms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RootKind {
    None,
    Double,
    Pair,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionSolution {
    pub v: f64,
    pub kind: RootKind,
    /// Positive roots `a` in increasing order.
    pub roots: Vec<f64>,
}

fn dispersion_residual(a: f64, v: f64) -> f64 {
    a * (-a * v).exp() - 1.0
}

/// Bisection to machine precision on a bracket with a sign change.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let f_lo_neg = f(lo) < 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < 0.0) == f_lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Positive roots of `a e^{-av} = 1`.
///
/// `a e^{-av}` peaks at `a = 1/v` with value `1/(ev)`: no root above
/// `v = 1/e`, a double root at it, two roots below.
pub fn dispersion_roots(v: f64) -> Result<DispersionSolution, WaveError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(WaveError::BadVelocity(v));
    }
    let peak_at = 1.0 / v;
    let peak = peak_at * (-1.0f64).exp();
    if (peak - 1.0).abs() <= DOUBLE_ROOT_TOL {
        return Ok(DispersionSolution {
            v,
            kind: RootKind::Double,
            roots: vec![peak_at],
        });
    }
    if peak < 1.0 {
        return Ok(DispersionSolution {
            v,
            kind: RootKind::None,
            roots: vec![],
        });
    }
    let f = |a: f64| dispersion_residual(a, v);
    let lower = bisect(0.0, peak_at, f);
    let mut hi = 2.0 * peak_at;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    let upper = bisect(peak_at, hi, f);
    Ok(DispersionSolution {
        v,
        kind: RootKind::Pair,
        roots: vec![lower, upper],
    })
}

/// Velocity as a function of decay rate, `v(a) = ln(a)/a`.
pub fn velocity_of_decay(a: f64) -> f64 {
    a.ln() / a
}

/// Extremal velocity: maximizes `ln(a)/a` through the root of its
/// derivative `(1 - ln a)/a²`. Returns `(v, a)`.
pub fn selected_velocity() -> (f64, f64) {
    let a = bisect(1.0, 10.0, |a: f64| -(1.0 - a.ln()));
    (velocity_of_decay(a), a)
}

/// Front-centered profile `Π(ξ) = P_n(x_f + ξ)` with the integrals
/// `L = ∫_{-∞}^0 (1-Π)` and `R = ∫_0^∞ Π` over the window.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveProfile {
    pub front: f64,
    pub level: f64,
    pub pi: GridFunction,
    pub l: f64,
    pub r: f64,
    /// Estimated `∫` of `1-Π` left of the window, from `1-Π ∝ e^{eξ}`.
    pub l_tail_bound: f64,
    /// Estimated `∫` of `Π` right of the window, from `Π ∝ e^{-ξ}`.
    pub r_tail_bound: f64,
}

impl WaveProfile {
    pub fn value_at(&self, xi: f64) -> Option<f64> {
        self.pi.value_at(xi)
    }

    pub fn window(&self) -> (f64, f64) {
        (self.pi.spec().x_min(), self.pi.spec().x_max())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_xy_csv(
            out,
            ("xi", "pi"),
            self.pi.spec().xs().zip(self.pi.values().iter().copied()),
        )
    }
}

pub fn extract_profile(p_n: &GridFunction, level: f64) -> Result<WaveProfile, WaveError> {
    extract_profile_in(p_n, level, DEFAULT_PROFILE_WINDOW)
}

pub fn extract_profile_in(p_n: &GridFunction, level: f64, window: (f64, f64)) -> Result<WaveProfile, WaveError> {
    let front = p_n.find_crossing(level)?;
    let spec = p_n.spec();
    let needed = window.0.abs().max(window.1.abs());
    if front + window.0 < spec.x_min() || front + window.1 > spec.x_max() {
        return Err(WaveError::Margin {
            front,
            needed,
            x_min: spec.x_min(),
            x_max: spec.x_max(),
        });
    }
    let mut pi = p_n.resample_shifted(front, window)?;
    let zero = pi.spec().index_of(0.0).ok_or(WaveError::Margin {
        front,
        needed,
        x_min: spec.x_min(),
        x_max: spec.x_max(),
    })?;
    let mut values = pi.into_values();
    // the crossing is where the interpolant equals the level by definition
    values[zero] = level;
    let grid_spec = GridSpec::window(window.0, window.1, spec.h())?;
    pi = GridFunction::from_values(grid_spec, values)?;

    let cumulative_phi = pi.map(|p| 1.0 - p).cumulative_integral();
    let cumulative_pi = pi.cumulative_integral();
    let l = cumulative_phi.values()[zero];
    let r = cumulative_pi.values().last().unwrap() - cumulative_pi.values()[zero];
    let first = pi.values()[0];
    let last = *pi.values().last().unwrap();
    Ok(WaveProfile {
        front,
        level,
        pi,
        l,
        r,
        l_tail_bound: (1.0 - first) / std::f64::consts::E,
        r_tail_bound: last,
    })
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailSide {
    Ahead,
    Behind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub side: TailSide,
    pub slope: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub points: usize,
}

pub fn tail_fit(profile: &WaveProfile, side: TailSide) -> Result<TailFit, WaveError> {
    let window = match side {
        TailSide::Ahead => AHEAD_WINDOW,
        TailSide::Behind => BEHIND_WINDOW,
    };
    tail_fit_in(profile, side, window)
}

/// Straight-line fit of `ln Π` (ahead) or `ln(1-Π)` (behind) over `window`.
pub fn tail_fit_in(profile: &WaveProfile, side: TailSide, window: (f64, f64)) -> Result<TailFit, WaveError> {
    let (lo, hi) = window;
    let pts: Vec<(f64, f64)> = profile
        .pi
        .spec()
        .xs()
        .zip(profile.pi.values())
        .filter(|(xi, _)| *xi >= lo - 1e-12 && *xi <= hi + 1e-12)
        .map(|(xi, &p)| {
            (
                xi,
                match side {
                    TailSide::Ahead => p,
                    TailSide::Behind => 1.0 - p,
                },
            )
        })
        .filter(|&(_, t)| t > NOISE_FLOOR)
        .map(|(xi, t)| (xi, t.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(WaveError::EmptyTail { lo, hi });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(WaveError::EmptyTail { lo, hi });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(TailFit {
        side,
        slope,
        intercept,
        window,
        r_squared,
        points: pts.len(),
    })
}

/// `sup |Π(ξ - v) - exp(-ξ - L + ∫₀^ξ Π)|` over window points with
/// `ξ - v` still inside the window.
pub fn wave_equation_residual(profile: &WaveProfile, v: f64) -> Result<f64, WaveError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(WaveError::BadVelocity(v));
    }
    if profile.l_tail_bound >= LEFT_TRUNCATION_TOL {
        return Err(WaveError::LeftTruncation(profile.l_tail_bound));
    }
    let spec = profile.pi.spec();
    let zero = spec.index_of(0.0).expect("profile grid contains 0");
    let cumulative = profile.pi.cumulative_integral();
    let origin = cumulative.values()[zero];
    let lo = spec.x_min();
    let mut sup: f64 = 0.0;
    for (i, xi) in spec.xs().enumerate() {
        if xi - v < lo {
            continue;
        }
        let lhs = profile.pi.value_at(xi - v).expect("inside window");
        let rhs = (-xi - profile.l + cumulative.values()[i] - origin).exp();
        sup = sup.max((lhs - rhs).abs());
    }
    Ok(sup)
}

/// Relation between the ahead tail amplitude and the profile integrals:
/// `Π(ξ) ≈ e^{R - L - v} e^{-ξ}` far ahead.
pub fn ahead_amplitude_prediction(profile: &WaveProfile, v: f64) -> f64 {
    (profile.r - profile.l - v).exp()
}
