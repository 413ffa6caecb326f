//! Truncated power series with exact rational coefficients.
//!
//! Used to expand the height CDF around `x = 0`: iterating the recurrence
//! on series reproduces `P_n = 1 - x^{n+1}/(n+1)! + ...` coefficient by
//! coefficient, with no floating point anywhere.

use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeriesError {
    #[error("formal exponential needs a zero constant term, got {0}")]
    NonZeroConstant(BigRational),
    #[error("expected constant term 1, got {0}")]
    NotACdfSeries(BigRational),
}

/// `c_0 + c_1 x + ... + c_K x^K + O(x^{K+1})`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesPoly {
    coeffs: Vec<BigRational>,
}

fn rat(n: i64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl SeriesPoly {
    /// Builds a series of order `coeffs.len() - 1`.
    ///
    /// # Panics
    /// If `coeffs` is empty.
    pub fn new(coeffs: Vec<BigRational>) -> Self {
        assert!(!coeffs.is_empty(), "a series has at least a constant term");
        Self { coeffs }
    }

    pub fn from_ratios(order: usize, terms: &[(usize, i64, u64)]) -> Self {
        let mut s = Self::zero(order);
        for &(k, n, d) in terms {
            if k <= order {
                s.coeffs[k] = rat(n, d);
            }
        }
        s
    }

    pub fn zero(order: usize) -> Self {
        Self {
            coeffs: vec![BigRational::zero(); order + 1],
        }
    }

    pub fn one(order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = BigRational::one();
        s
    }

    /// The monomial `x`, truncated at `order`.
    pub fn x(order: usize) -> Self {
        let mut s = Self::zero(order);
        if order >= 1 {
            s.coeffs[1] = BigRational::one();
        }
        s
    }

    /// Expansion of `e^{-x}`, i.e. of `P_0`.
    pub fn exp_neg_x(order: usize) -> Self {
        let mut coeffs = Vec::with_capacity(order + 1);
        let mut c = BigRational::one();
        for k in 0..=order {
            if k > 0 {
                c = -c / BigRational::from_integer(BigInt::from(k));
            }
            coeffs.push(c.clone());
        }
        Self { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    /// Coefficient of `x^k`; `None` beyond the truncation order.
    pub fn coeff(&self, k: usize) -> Option<&BigRational> {
        self.coeffs.get(k)
    }

    pub fn truncate(&self, order: usize) -> Self {
        let mut coeffs: Vec<_> = self.coeffs.iter().take(order + 1).cloned().collect();
        coeffs.resize(order + 1, BigRational::zero());
        Self { coeffs }
    }

    /// `∫₀ˣ`: shifts `c_k` to `c_k/(k+1)` at degree `k+1`, raising the order by one.
    pub fn integrate(&self) -> Self {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(BigRational::zero());
        for (k, c) in self.coeffs.iter().enumerate() {
            coeffs.push(c / BigRational::from_integer(BigInt::from(k + 1)));
        }
        Self { coeffs }
    }

    /// Formal exponential via `k E_k = Σ_{j=1..k} j g_j E_{k-j}`.
    pub fn exp(&self) -> Result<Self, SeriesError> {
        if !self.coeffs[0].is_zero() {
            return Err(SeriesError::NonZeroConstant(self.coeffs[0].clone()));
        }
        let order = self.order();
        let mut e: Vec<BigRational> = Vec::with_capacity(order + 1);
        e.push(BigRational::one());
        for k in 1..=order {
            let mut acc = BigRational::zero();
            for j in 1..=k {
                if self.coeffs[j].is_zero() || e[k - j].is_zero() {
                    continue;
                }
                acc += BigRational::from_integer(BigInt::from(j)) * &self.coeffs[j] * &e[k - j];
            }
            e.push(acc / BigRational::from_integer(BigInt::from(k)));
        }
        Ok(Self { coeffs: e })
    }

    /// Horner evaluation in double precision.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c.to_f64().unwrap_or(f64::NAN))
    }

    /// Largest `k ≥ 1` below which every coefficient `c_1..c_k` vanishes.
    pub fn vanishing_prefix(&self) -> usize {
        self.coeffs[1..].iter().take_while(|c| c.is_zero()).count()
    }

    pub fn to_records(&self) -> Vec<CoefficientRecord> {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| CoefficientRecord {
                k,
                numerator: c.numer().to_string(),
                denominator: c.denom().to_string(),
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.to_records()).expect("records serialize")
    }
}

/// One exported coefficient; numerator and denominator are decimal strings
/// of arbitrary length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoefficientRecord {
    pub k: usize,
    pub numerator: String,
    pub denominator: String,
}

impl Add for &SeriesPoly {
    type Output = SeriesPoly;
    fn add(self, rhs: &SeriesPoly) -> SeriesPoly {
        let order = self.order().min(rhs.order());
        SeriesPoly {
            coeffs: (0..=order).map(|k| &self.coeffs[k] + &rhs.coeffs[k]).collect(),
        }
    }
}

impl Sub for &SeriesPoly {
    type Output = SeriesPoly;
    fn sub(self, rhs: &SeriesPoly) -> SeriesPoly {
        let order = self.order().min(rhs.order());
        SeriesPoly {
            coeffs: (0..=order).map(|k| &self.coeffs[k] - &rhs.coeffs[k]).collect(),
        }
    }
}

impl Neg for &SeriesPoly {
    type Output = SeriesPoly;
    fn neg(self) -> SeriesPoly {
        SeriesPoly {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

impl Mul for &SeriesPoly {
    type Output = SeriesPoly;
    fn mul(self, rhs: &SeriesPoly) -> SeriesPoly {
        let order = self.order().min(rhs.order());
        let mut out = SeriesPoly::zero(order);
        for (i, a) in self.coeffs.iter().enumerate().take(order + 1) {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate().take(order + 1 - i) {
                out.coeffs[i + j] += a * b;
            }
        }
        out
    }
}

/// `P_n = exp(-x + ∫₀ˣ P_{n-1})` on series, truncated at `p_prev`'s order.
pub fn recurrence_series_step(p_prev: &SeriesPoly) -> Result<SeriesPoly, SeriesError> {
    if !p_prev.coeffs[0].is_one() {
        return Err(SeriesError::NotACdfSeries(p_prev.coeffs[0].clone()));
    }
    let order = p_prev.order();
    let exponent = &p_prev.integrate().truncate(order) - &SeriesPoly::x(order);
    exponent.exp()
}

/// Expansion of `P_n` to the given order.
pub fn height_cdf_series(n: usize, order: usize) -> Result<SeriesPoly, SeriesError> {
    let mut p = SeriesPoly::exp_neg_x(order);
    for _ in 0..n {
        p = recurrence_series_step(&p)?;
    }
    Ok(p)
}

/// Truncation order used when expanding `P_n` without an explicit order.
pub fn default_order(n: usize) -> usize {
    n + 6
}

pub fn factorial(n: u32) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * k)
}

fn ln_biguint(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits <= 1000 {
        return v.to_f64().expect("fits in f64").ln();
    }
    let shift = bits - 64;
    let top = (v >> shift).to_f64().expect("64-bit mantissa");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Leading-order front from the two-term expansion: solves
/// `x_f^{n+1} = (n+1)!/2` using an exact factorial and a single root.
pub fn front_estimate_from_series(n: u32) -> f64 {
    let fact = factorial(n + 1);
    ((ln_biguint(&fact) - std::f64::consts::LN_2) / f64::from(n + 1)).exp()
}

/// Exact value `(n+1)!/2` as a rational, for callers that want to check the
/// root extraction.
pub fn front_estimate_power(n: u32) -> BigRational {
    BigRational::new(BigInt::from(factorial(n + 1)), BigInt::from(2))
}

/// `|c|` as f64, for remainder bounds.
pub fn abs_f64(c: &BigRational) -> f64 {
    c.abs().to_f64().unwrap_or(f64::INFINITY)
}
