//! Critical shear strengths: the smallest `α` above which the one-square and
//! two-square growth budgets close.

use crate::error::{Error, Result};
use crate::maps::l_ratio;

pub const DEFAULT_ETA: f64 = 0.25;
pub const BRACKET: (f64, f64) = (2.01, 50.0);
pub const DEFAULT_TOL: f64 = 1e-6;
const MONOTONE_GRID: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    SingleSquare,
    DoubleSquare,
}

impl System {
    pub fn name(self) -> &'static str {
        match self {
            System::SingleSquare => "single",
            System::DoubleSquare => "double",
        }
    }
}

/// Left-hand side of a growth budget: a finite value, or `Infeasible` where
/// the spacing bound degenerates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lhs {
    Value(f64),
    Infeasible,
}

impl Lhs {
    /// `+∞` for infeasible α, so that `lhs < 1` reads naturally.
    pub fn or_inf(self) -> f64 {
        match self {
            Lhs::Value(v) => v,
            Lhs::Infeasible => f64::INFINITY,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 2.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("criticality needs α > 2, got {alpha}")))
    }
}

/// One-square budget with a general slack `η` on the first-shear length;
/// the condition is `lhs < 1`.
pub fn single_square_lhs_eta(alpha: f64, eta: f64) -> Result<Lhs> {
    check_alpha(alpha)?;
    let l = l_ratio(alpha);
    let denom = 1.0 - (1.0 + 2.0 * eta) / (alpha + l);
    if denom <= 0.0 {
        return Ok(Lhs::Infeasible);
    }
    Ok(Lhs::Value(2.0 / (alpha + l) + 3.0 / (2.0 * alpha + l) + 2.0 / (alpha * denom)))
}

pub fn single_square_lhs(alpha: f64) -> Result<Lhs> {
    single_square_lhs_eta(alpha, DEFAULT_ETA)
}

/// Same budget with an explicit thin-segment length in place of its bound.
pub fn single_square_lhs_explicit(alpha: f64, lv_gamma: f64) -> Result<Lhs> {
    check_alpha(alpha)?;
    let l = l_ratio(alpha);
    let denom = 1.0 - 2.0 * lv_gamma;
    if denom <= 0.0 {
        return Ok(Lhs::Infeasible);
    }
    Ok(Lhs::Value(2.0 / (alpha + l) + 3.0 / (2.0 * alpha + l) + 2.0 / (alpha * denom)))
}

pub fn double_square_lhs(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(2.0 / (alpha + l_ratio(alpha)) + 2.0 / alpha)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalityResult {
    pub system: System,
    pub alpha_star: f64,
    pub residual: f64,
    pub bracket: (f64, f64),
    pub eta: f64,
}

fn lhs_of(system: System, alpha: f64, eta: f64) -> f64 {
    match system {
        System::SingleSquare => single_square_lhs_eta(alpha, eta).map(Lhs::or_inf).unwrap_or(f64::INFINITY),
        System::DoubleSquare => double_square_lhs(alpha).unwrap_or(f64::INFINITY),
    }
}

/// Checks strict decrease on the grid wherever the lhs is finite.
pub fn is_monotone_decreasing(system: System, eta: f64, lo: f64, hi: f64, n: usize) -> bool {
    let mut prev = f64::INFINITY;
    for i in 0..=n {
        let a = lo + (hi - lo) * i as f64 / n as f64;
        let v = lhs_of(system, a, eta);
        if v.is_finite() {
            if !(v < prev) {
                return false;
            }
            prev = v;
        }
    }
    true
}

pub fn solve_critical(system: System, tol: f64) -> Result<CriticalityResult> {
    solve_critical_eta(system, DEFAULT_ETA, tol)
}

/// Bisection for `lhs(α) = 1` on the fixed bracket.
pub fn solve_critical_eta(system: System, eta: f64, tol: f64) -> Result<CriticalityResult> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    if !(eta >= 0.0) {
        return Err(Error::Parameter(format!("eta must be non-negative, got {eta}")));
    }
    let (lo0, hi0) = BRACKET;
    if !is_monotone_decreasing(system, eta, lo0, hi0, MONOTONE_GRID) {
        return Err(Error::NoRoot(lo0, hi0));
    }
    let f = |a: f64| lhs_of(system, a, eta) - 1.0;
    let (mut lo, mut hi) = (lo0, hi0);
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::NoRoot(lo0, hi0));
    }
    while hi - lo > tol.min(1e-9) {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha_star = 0.5 * (lo + hi);
    Ok(CriticalityResult { system, alpha_star, residual: f(alpha_star).abs(), bracket: (lo0, hi0), eta })
}

/// `max(α₁, α₂)`: the shear strength beyond which both cases close.
pub fn optimal_constant(eta: f64, tol: f64) -> Result<f64> {
    let a = solve_critical_eta(System::SingleSquare, eta, tol)?;
    let b = solve_critical_eta(System::DoubleSquare, eta, tol)?;
    Ok(a.alpha_star.max(b.alpha_star))
}
