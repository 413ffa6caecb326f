//! Uniform-grid functions: trapezoid prefix integrals, level crossings and
//! shifted resampling.
//!
//! Grid point `i` sits at `(offset + i) * h` for an integer `offset`, so a
//! grid over `[0, x_max]` has offset zero and windows that straddle the
//! origin (co-moving frames) hit `0.0` exactly.

use std::io::{self, Write};

use thiserror::Error;

/// Values smaller than this are flushed to zero.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

const SNAP_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidSpec(String),
    #[error("value count {got} does not match grid point count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("level {level} is not crossed (function spans [{min}, {max}])")]
    NoCrossing { level: f64, min: f64, max: f64 },
    #[error("window [{lo}, {hi}] with shift {shift} leaves the domain [{x_min}, {x_max}]")]
    Domain {
        lo: f64,
        hi: f64,
        shift: f64,
        x_min: f64,
        x_max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    offset: i64,
    h: f64,
    count: usize,
}

impl GridSpec {
    /// Grid over `[0, x_max]` with `floor(x_max / h) + 1` points.
    pub fn new(x_max: f64, h: f64) -> Result<Self, GridError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(GridError::InvalidSpec(format!("spacing must be positive, got {h}")));
        }
        if !(x_max >= 0.0 && x_max.is_finite()) {
            return Err(GridError::InvalidSpec(format!("x_max must be non-negative, got {x_max}")));
        }
        let count = (x_max / h + SNAP_EPS).floor() as usize + 1;
        Self::from_parts(0, h, count)
    }

    /// Grid over the multiples of `h` that fall in `[lo, hi]`.
    pub fn window(lo: f64, hi: f64, h: f64) -> Result<Self, GridError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(GridError::InvalidSpec(format!("spacing must be positive, got {h}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(GridError::InvalidSpec(format!("bad window [{lo}, {hi}]")));
        }
        let first = (lo / h - SNAP_EPS).ceil() as i64;
        let last = (hi / h + SNAP_EPS).floor() as i64;
        if last < first {
            return Err(GridError::InvalidSpec(format!("window [{lo}, {hi}] holds no grid point")));
        }
        Self::from_parts(first, h, (last - first + 1) as usize)
    }

    fn from_parts(offset: i64, h: f64, count: usize) -> Result<Self, GridError> {
        if count < 2 {
            return Err(GridError::InvalidSpec(format!("need at least 2 points, got {count}")));
        }
        Ok(Self { offset, h, count })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn x(&self, i: usize) -> f64 {
        (self.offset + i as i64) as f64 * self.h
    }

    pub fn x_min(&self) -> f64 {
        self.x(0)
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.count - 1)
    }

    /// Index of the grid point at `x`, if `x` is (within rounding) a grid point.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let k = (x / self.h).round() as i64 - self.offset;
        if k < 0 || k as usize >= self.count {
            return None;
        }
        let i = k as usize;
        ((self.x(i) - x).abs() <= 1e-9 * self.h.max(x.abs() * self.h)).then_some(i)
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.x(i))
    }
}

/// Real-valued function sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != spec.count {
            return Err(GridError::LengthMismatch {
                expected: spec.count,
                got: values.len(),
            });
        }
        Ok(Self { spec, values })
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        let values = spec.xs().map(f).collect();
        Self { spec, values }
    }

    pub fn constant(spec: GridSpec, value: f64) -> Self {
        Self {
            spec,
            values: vec![value; spec.count],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            spec: self.spec,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Linear interpolation at `x`; `None` outside the grid.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        let t = x / self.spec.h - self.spec.offset as f64;
        let last = (self.spec.count - 1) as f64;
        if !(t >= -SNAP_EPS && t <= last + SNAP_EPS) {
            return None;
        }
        let t = t.clamp(0.0, last);
        let i = (t.floor() as usize).min(self.spec.count - 2);
        let frac = t - i as f64;
        let (a, b) = (self.values[i], self.values[i + 1]);
        Some(a + frac * (b - a))
    }

    /// Running trapezoid integral from the first grid point.
    ///
    /// The prefix sum is sequential, so the result does not depend on thread
    /// scheduling.
    pub fn cumulative_integral(&self) -> GridFunction {
        let half_h = 0.5 * self.spec.h;
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        out.push(acc);
        for w in self.values.windows(2) {
            acc += half_h * (w[0] + w[1]);
            out.push(acc);
        }
        GridFunction {
            spec: self.spec,
            values: out,
        }
    }

    /// Trapezoid integral over the whole grid.
    pub fn integral(&self) -> f64 {
        let inner: f64 = self.values[1..self.values.len() - 1].iter().sum();
        self.spec.h * (inner + 0.5 * (self.values[0] + self.values[self.values.len() - 1]))
    }

    /// Position where the piecewise-linear interpolant of a non-increasing
    /// function falls to `level`.
    pub fn find_crossing(&self, level: f64) -> Result<f64, GridError> {
        let first = self.values[0];
        let last = *self.values.last().expect("grid has at least two points");
        if !(first > level && level > last) {
            return Err(GridError::NoCrossing {
                level,
                min: last,
                max: first,
            });
        }
        // first index whose value is at or below the level
        let i = self.values.partition_point(|&v| v > level);
        let (above, below) = (self.values[i - 1], self.values[i]);
        let frac = (above - level) / (above - below);
        Ok(self.spec.x(i - 1) + frac * self.spec.h)
    }

    /// Samples `f(xi + shift)` on the grid points of `window`, keeping the
    /// source spacing.
    pub fn resample_shifted(&self, shift: f64, window: (f64, f64)) -> Result<GridFunction, GridError> {
        let (lo, hi) = window;
        let domain_err = || GridError::Domain {
            lo,
            hi,
            shift,
            x_min: self.spec.x_min(),
            x_max: self.spec.x_max(),
        };
        let tol = SNAP_EPS * self.spec.h;
        if lo + shift < self.spec.x_min() - tol || hi + shift > self.spec.x_max() + tol {
            return Err(domain_err());
        }
        let spec = GridSpec::window(lo, hi, self.spec.h)?;
        let values = spec
            .xs()
            .map(|xi| self.value_at(xi + shift).ok_or_else(domain_err))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GridFunction { spec, values })
    }

    /// Checks the invariants of a cumulative distribution in `x`: values in
    /// `[0, 1]`, one at the left end, non-increasing.
    pub fn is_probability_profile(&self) -> bool {
        self.values[0] == 1.0
            && self.values.iter().all(|v| (0.0..=1.0).contains(v))
            && self.values.windows(2).all(|w| w[1] <= w[0])
    }

    /// `x,value` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W, header: (&str, &str)) -> io::Result<()> {
        write_xy_csv(out, header, self.spec.xs().zip(self.values.iter().copied()))
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_xy_csv<W: Write>(
    mut out: W,
    header: (&str, &str),
    rows: impl Iterator<Item = (f64, f64)>,
) -> io::Result<()> {
    writeln!(out, "{},{}", header.0, header.1)?;
    for (x, v) in rows {
        writeln!(out, "{},{}", fmt_f64(x), fmt_f64(v))?;
    }
    Ok(())
}
