//! Iteration of the height-CDF recurrence
//! `P_n(x) = exp[-x + ∫₀ˣ P_{n-1}(y) dy]`, front tracking and mean height.
//!
//! The iteration carries the complement `Q_n = 1 - P_n` alongside `P_n`
//! and evaluates the recurrence as `P_n = exp(-∫₀ˣ Q_{n-1})`. The two forms
//! are identical algebraically, but far behind the front `Q_n` is many
//! orders of magnitude below machine epsilon; the `-x + ∫P` form rounds it
//! away and the recurrence amplifies that rounding like `e^x`, stalling
//! the front near `x ≈ 30`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{fmt_f64, GridError, GridFunction, GridSpec, UNDERFLOW_FLOOR};

pub const DEFAULT_H: f64 = 1e-3;
pub const DEFAULT_MARGIN: f64 = 40.0;
pub const DEFAULT_FRONT_LEVEL: f64 = 0.5;
pub const DEFAULT_POINT_BUDGET: usize = 50_000_000;
/// Largest `1 - P_{n_max}(x)` accepted when truncating the mean-height sum.
pub const MEAN_HEIGHT_TOLERANCE: f64 = 1e-12;

const PAR_MIN_LEN: usize = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecurrenceError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("n_max must be at least 1")]
    NoIterations,
    #[error("front level must lie in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("grid of {points} points exceeds the budget of {budget}")]
    PointBudget { points: usize, budget: usize },
    #[error("x = {x} lies outside the computed domain [0, {x_max}]")]
    OutOfDomain { x: f64, x_max: f64 },
    #[error("mean height at x = {x} not converged after n = {n_max}: 1 - P_n(x) = {residual:e}")]
    NotConverged { x: f64, n_max: usize, residual: f64 },
}

/// `P_0(x) = e^{-x}`: the root is terminal with probability `e^{-x}`.
pub fn seed_p0(spec: GridSpec) -> GridFunction {
    GridFunction::from_fn(spec, |x| flush((-x).exp()))
}

fn seed_q0(spec: GridSpec) -> GridFunction {
    GridFunction::from_fn(spec, |x| -(-x).exp_m1())
}

/// `P_1(x) = exp[-x + 1 - e^{-x}]`.
pub fn closed_form_p1(x: f64) -> f64 {
    // 1 - e^{-x} written as -expm1(-x) keeps precision near x = 0
    (-x - (-x).exp_m1()).exp()
}

fn flush(v: f64) -> f64 {
    if v < UNDERFLOW_FLOOR {
        0.0
    } else {
        v
    }
}

/// One application of the recurrence to a height CDF.
pub fn step(p_prev: &GridFunction) -> GridFunction {
    let q_prev = p_prev.map(|p| 1.0 - p);
    step_complement(&q_prev).0
}

/// One step on the complement: returns `(P_n, 1 - P_n)` given `1 - P_{n-1}`.
pub fn step_complement(q_prev: &GridFunction) -> (GridFunction, GridFunction) {
    let spec = *q_prev.spec();
    let c = q_prev.cumulative_integral().into_values();
    let (p, q): (Vec<f64>, Vec<f64>) = c
        .par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|&c| (flush((-c).exp()), flush(-(-c).exp_m1())))
        .unzip();
    (
        GridFunction::from_values(spec, p).expect("same grid"),
        GridFunction::from_values(spec, q).expect("same grid"),
    )
}

/// One iterate of the recurrence.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub n: usize,
    pub cdf: GridFunction,
    pub complement: GridFunction,
}

/// Infinite iterator over `P_0, P_1, ...` on a fixed grid.
pub struct Iterates {
    spec: GridSpec,
    n: usize,
    prev_complement: Option<GridFunction>,
}

impl Iterates {
    pub fn new(spec: GridSpec) -> Self {
        Self {
            spec,
            n: 0,
            prev_complement: None,
        }
    }
}

impl Iterator for Iterates {
    type Item = Iterate;

    fn next(&mut self) -> Option<Iterate> {
        let (cdf, complement) = match &self.prev_complement {
            None => (seed_p0(self.spec), seed_q0(self.spec)),
            Some(q) => step_complement(q),
        };
        let it = Iterate {
            n: self.n,
            cdf,
            complement: complement.clone(),
        };
        self.prev_complement = Some(complement);
        self.n += 1;
        Some(it)
    }
}

#[derive(Debug, Clone)]
pub struct RecurrenceConfig {
    pub n_max: usize,
    pub h: f64,
    pub store: BTreeSet<usize>,
    pub front_level: f64,
    /// Domain length beyond the leading-order front `n_max / e`.
    pub margin: f64,
    pub point_budget: usize,
}

impl RecurrenceConfig {
    pub fn new(n_max: usize) -> Self {
        Self {
            n_max,
            h: DEFAULT_H,
            store: BTreeSet::new(),
            front_level: DEFAULT_FRONT_LEVEL,
            margin: DEFAULT_MARGIN,
            point_budget: DEFAULT_POINT_BUDGET,
        }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn storing(mut self, ns: impl IntoIterator<Item = usize>) -> Self {
        self.store.extend(ns);
        self
    }

    pub fn x_max(&self) -> f64 {
        self.n_max as f64 / std::f64::consts::E + self.margin
    }
}

/// Output of [`run`]: front trace, selected profiles, and the running sum
/// `Σ_n (1 - P_n)` needed for the mean height.
#[derive(Debug, Clone)]
pub struct RecurrenceRun {
    pub spec: GridSpec,
    pub n_max: usize,
    pub front_level: f64,
    pub profiles: BTreeMap<usize, GridFunction>,
    pub fronts: Vec<f64>,
    height_tail_sum: GridFunction,
    final_complement: GridFunction,
}

pub fn run(config: &RecurrenceConfig) -> Result<RecurrenceRun, RecurrenceError> {
    if config.n_max < 1 {
        return Err(RecurrenceError::NoIterations);
    }
    if !(config.front_level > 0.0 && config.front_level < 1.0) {
        return Err(RecurrenceError::BadLevel(config.front_level));
    }
    let x_max = config.x_max();
    let points = (x_max / config.h).floor() as usize + 1;
    if points > config.point_budget {
        return Err(RecurrenceError::PointBudget {
            points,
            budget: config.point_budget,
        });
    }
    let spec = GridSpec::new(x_max, config.h)?;

    let mut fronts = Vec::with_capacity(config.n_max + 1);
    let mut profiles = BTreeMap::new();
    let mut tail_sum = vec![0.0; spec.count()];
    let mut final_complement = None;
    for it in Iterates::new(spec).take(config.n_max + 1) {
        fronts.push(it.cdf.find_crossing(config.front_level)?);
        for (acc, q) in tail_sum.iter_mut().zip(it.complement.values()) {
            *acc += q;
        }
        if config.store.contains(&it.n) {
            profiles.insert(it.n, it.cdf);
        }
        if it.n == config.n_max {
            final_complement = Some(it.complement);
        }
    }

    Ok(RecurrenceRun {
        spec,
        n_max: config.n_max,
        front_level: config.front_level,
        profiles,
        fronts,
        height_tail_sum: GridFunction::from_values(spec, tail_sum)?,
        final_complement: final_complement.expect("n_max iterate reached"),
    })
}

impl RecurrenceRun {
    /// Mean height `E[H(x)] = Σ_{n≥0} (1 - P_n(x))`, truncated at `n_max`.
    pub fn mean_height(&self, x: f64) -> Result<f64, RecurrenceError> {
        let out_of_domain = || RecurrenceError::OutOfDomain {
            x,
            x_max: self.spec.x_max(),
        };
        let residual = self.final_complement.value_at(x).ok_or_else(out_of_domain)?;
        if residual >= MEAN_HEIGHT_TOLERANCE {
            return Err(RecurrenceError::NotConverged {
                x,
                n_max: self.n_max,
                residual,
            });
        }
        self.height_tail_sum.value_at(x).ok_or_else(out_of_domain)
    }

    /// `1 - P_{n_max}(x)`.
    pub fn final_residual(&self, x: f64) -> Option<f64> {
        self.final_complement.value_at(x)
    }

    pub fn write_fronts_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,x_front")?;
        for (n, x) in self.fronts.iter().enumerate() {
            writeln!(out, "{n},{}", fmt_f64(*x))?;
        }
        Ok(())
    }
}
