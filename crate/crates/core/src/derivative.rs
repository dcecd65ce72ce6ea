//! Order-ℓ discrete derivatives of a counting function.
//!
//! The order-ℓ derivative with step δ is the alternating-binomial sum
//!
//! ```text
//! Δ^(ℓ) N(t) = Σ_{j=0..ℓ} (-1)^(ℓ-j) C(ℓ,j) N(t + (j-ℓ+1)δ)
//! ```
//!
//! so the stencil covers `[t-(ℓ-1)δ, t+δ]` and exactly one evaluation point
//! lies after `t`. A rate jump at `t0` therefore shows its leading stencil
//! response at `t0` itself.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::process::CountingFunction;

/// Largest supported derivative order.
pub const MAX_ORDER: usize = 20;

/// Absolute slack on window bounds, scaled by the horizon magnitude.
const WINDOW_EPS: f64 = 1e-9;

/// Binomial weights and step for one derivative order.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeStencil {
    order: usize,
    delta: f64,
    coefficients: Vec<i64>,
}

impl DerivativeStencil {
    pub fn new(order: usize, delta: f64) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::param(format!(
                "derivative order must be in 1..={MAX_ORDER}, got {order}"
            )));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::param("delta must be positive"));
        }
        Ok(Self {
            order,
            delta,
            coefficients: alternating_binomials(order),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `coefficients[j] = (-1)^(ℓ-j) C(ℓ, j)`.
    pub fn coefficients(&self) -> &[i64] {
        &self.coefficients
    }

    /// Offset of evaluation point `j` relative to `t`, in time units.
    pub fn offset(&self, j: usize) -> f64 {
        (j as f64 - self.order as f64 + 1.0) * self.delta
    }

    /// Smallest `t` the stencil reaches back from, relative to the window origin.
    pub fn lookback(&self) -> f64 {
        (self.order as f64 - 1.0) * self.delta
    }

    /// Valid evaluation range `[origin + (ℓ-1)δ, horizon - δ]` for `n`.
    pub fn valid_range<N: CountingFunction + ?Sized>(&self, n: &N) -> (f64, f64) {
        (n.origin() + self.lookback(), n.horizon() - self.delta)
    }

    /// Applies the stencil to `n` at `t` without checking the window.
    pub fn apply_unchecked<N: CountingFunction + ?Sized>(&self, n: &N, t: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(j, &c)| c as f64 * n.count(t + self.offset(j)))
            .sum()
    }

    /// Applies the stencil to `n` at `t`, rejecting windows outside `n`'s observation range.
    pub fn apply<N: CountingFunction + ?Sized>(&self, n: &N, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::OutOfRange(format!("t={t} is not finite")));
        }
        let (lo, hi) = self.valid_range(n);
        let slack = WINDOW_EPS * (1.0 + hi.abs().min(1e12));
        if t < lo - slack {
            return Err(Error::OutOfRange(format!(
                "t={t} < origin + (ℓ-1)δ = {lo} (order {}, δ={})",
                self.order, self.delta
            )));
        }
        if t > hi + slack {
            return Err(Error::OutOfRange(format!(
                "t + δ = {} exceeds horizon {}",
                t + self.delta,
                n.horizon()
            )));
        }
        Ok(self.apply_unchecked(n, t))
    }
}

fn alternating_binomials(order: usize) -> Vec<i64> {
    let mut c = vec![0i64; order + 1];
    let mut binom: i64 = 1;
    for (j, slot) in c.iter_mut().enumerate() {
        let sign = if (order - j) % 2 == 0 { 1 } else { -1 };
        *slot = sign * binom;
        // C(ℓ, j+1) = C(ℓ, j) (ℓ-j) / (j+1), exact in i64 for ℓ <= 20
        binom = binom * (order - j) as i64 / (j as i64 + 1);
    }
    c
}

/// Order-`order` discrete derivative of `n` at `t` with step `delta`.
pub fn discrete_derivative<N: CountingFunction + ?Sized>(
    n: &N,
    order: usize,
    delta: f64,
    t: f64,
) -> Result<f64> {
    DerivativeStencil::new(order, delta)?.apply(n, t)
}

/// Stencil values over an evenly spaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeProfile {
    pub order: usize,
    pub delta: f64,
    pub grid_step: f64,
    /// `(t, Δ^(order) N(t))` in increasing `t`.
    pub points: Vec<(f64, f64)>,
    /// Set when the clipped window contained no grid point.
    pub empty_window: bool,
}

impl DerivativeProfile {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    /// Writes a `t,value` CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,value\n");
        for (t, v) in &self.points {
            out.push_str(&format!("{t},{v}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Grid `lo, lo+step, ...` up to `hi` (inclusive within rounding).
pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if !(hi >= lo) {
        return Vec::new();
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

/// Evaluates the stencil on a grid of step `grid_step` over `window`,
/// clipped to the stencil's valid range.
pub fn derivative_profile<N: CountingFunction + ?Sized>(
    n: &N,
    stencil: &DerivativeStencil,
    grid_step: f64,
    window: (f64, f64),
) -> Result<DerivativeProfile> {
    if !(grid_step > 0.0) || !grid_step.is_finite() {
        return Err(Error::param("grid step must be positive"));
    }
    let (valid_lo, valid_hi) = stencil.valid_range(n);
    let lo = window.0.max(valid_lo);
    let hi = window.1.min(valid_hi);
    let points: Vec<(f64, f64)> = grid(lo, hi, grid_step)
        .into_iter()
        .map(|t| (t, stencil.apply_unchecked(n, t)))
        .collect();
    if points.is_empty() {
        log::warn!(
            "empty derivative window: requested [{}, {}], valid [{valid_lo}, {valid_hi}]",
            window.0,
            window.1
        );
    }
    Ok(DerivativeProfile {
        order: stencil.order(),
        delta: stencil.delta(),
        grid_step,
        empty_window: points.is_empty(),
        points,
    })
}

/// Result of applying an order-(ℓ+1) stencil to a polynomial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annihilation {
    /// Stencil output.
    pub value: f64,
    /// Largest weighted summand magnitude, the scale of floating cancellation.
    pub max_summand: f64,
}

impl Annihilation {
    /// True when `|value| <= rel_tol * max_summand`.
    pub fn within(&self, rel_tol: f64) -> bool {
        self.value.abs() <= rel_tol * self.max_summand
    }
}

/// Evaluates a polynomial given in ascending coefficient order.
pub fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Applies the order-(`ell`+1) stencil to the polynomial `poly_coeffs`
/// (ascending order) at `t`. Polynomials of degree at most `ell` map to zero
/// up to rounding.
pub fn annihilation_check(
    ell: usize,
    delta: f64,
    poly_coeffs: &[f64],
    t: f64,
) -> Result<Annihilation> {
    let stencil = DerivativeStencil::new(ell + 1, delta)?;
    let mut value = 0.0;
    let mut max_summand = 0.0f64;
    for (j, &c) in stencil.coefficients().iter().enumerate() {
        let term = c as f64 * eval_poly(poly_coeffs, t + stencil.offset(j));
        value += term;
        max_summand = max_summand.max(term.abs());
    }
    Ok(Annihilation { value, max_summand })
}
