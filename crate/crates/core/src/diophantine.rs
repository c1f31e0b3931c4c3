//! Simultaneous rational approximation in the sense of Dirichlet.
//!
//! For reals `alpha_1..alpha_m` and `Q > 1` there is a common denominator
//! `1 <= q < Q^m` with `max_i |alpha_i - p_i/q| < 1/(qQ)`. The search here is a
//! plain scan over `q`, which is fast enough for `Q^m` up to about `1e7`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper limit on `ceil(Q^m)`.
pub const DEFAULT_SEARCH_CAP: u64 = 10_000_000;

/// Residuals below this are treated as exact hits.
pub const ZERO_RESIDUAL: f64 = 1e-14;

/// Output of the Dirichlet search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalApproximation {
    pub q: u64,
    pub p: Vec<i64>,
    pub gamma: Vec<f64>,
    pub s: Vec<i8>,
    #[serde(rename = "Q")]
    pub big_q: f64,
}

/// Result of [`verify_approx`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub valid: bool,
    /// `max_i q * Q * gamma_i`; strictly below one for a valid approximation.
    pub worst: f64,
}

/// `ceil(Q^m)` as an integer, saturating far above any sensible cap.
pub fn denominator_bound(big_q: f64, m: usize) -> u64 {
    let v = big_q.powi(m as i32).ceil();
    if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        v as u64
    }
}

fn residual_sign(alpha: f64, p: i64, q: u64) -> (f64, i8) {
    let diff = alpha - p as f64 / q as f64;
    let gamma = diff.abs();
    let s = if gamma < ZERO_RESIDUAL {
        0
    } else if diff > 0.0 {
        1
    } else {
        -1
    };
    (gamma, s)
}

/// Smallest `q` with `max_i |alpha_i - round(q alpha_i)/q| < 1/(qQ)`.
///
/// Numerators are rounded half to even. `cap` bounds `ceil(Q^m)`.
pub fn simultaneous_approx(alphas: &[f64], big_q: f64, cap: u64) -> Result<RationalApproximation> {
    if alphas.is_empty() {
        return Err(Error::InvalidInput("need at least one number to approximate".into()));
    }
    if !(big_q > 1.0) || !big_q.is_finite() {
        return Err(Error::InvalidInput(format!("Q must be a finite real > 1, got {big_q}")));
    }
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::InvalidInput(format!("alpha {a} lies outside [0, 1]")));
    }
    let bound = denominator_bound(big_q, alphas.len());
    if bound > cap {
        return Err(Error::CapExceeded { needed: bound, cap });
    }

    let mut p = vec![0i64; alphas.len()];
    for q in 1..bound {
        let qf = q as f64;
        let limit = 1.0 / (qf * big_q);
        let mut ok = true;
        for (pi, &a) in p.iter_mut().zip(alphas) {
            let num = (qf * a).round_ties_even();
            if (a - num / qf).abs() >= limit {
                ok = false;
                break;
            }
            *pi = num as i64;
        }
        if ok {
            let (gamma, s) = alphas
                .iter()
                .zip(&p)
                .map(|(&a, &pi)| residual_sign(a, pi, q))
                .unzip();
            return Ok(RationalApproximation { q, p, gamma, s, big_q });
        }
    }
    Err(Error::NoApproximation { bound })
}

/// Checks every invariant of `approx` against `alphas` and `Q`.
pub fn verify_approx(approx: &RationalApproximation, alphas: &[f64], big_q: f64) -> Result<Certificate> {
    let m = alphas.len();
    for len in [approx.p.len(), approx.gamma.len(), approx.s.len()] {
        if len != m {
            return Err(Error::DimensionMismatch { expected: m, got: len });
        }
    }
    let q = approx.q;
    let mut valid = q >= 1 && big_q > 1.0 && q < denominator_bound(big_q, m);
    let mut worst = 0.0f64;
    if q == 0 {
        return Ok(Certificate { valid: false, worst: f64::INFINITY });
    }
    for i in 0..m {
        let (gamma, s) = residual_sign(alphas[i], approx.p[i], q);
        worst = worst.max(q as f64 * big_q * gamma);
        if gamma >= 1.0 / (q as f64 * big_q) {
            valid = false;
        }
        if (0.0..=1.0).contains(&alphas[i]) && !(0..=q as i64).contains(&approx.p[i]) {
            valid = false;
        }
        if s != approx.s[i] || (approx.gamma[i] - gamma).abs() > 1e-12 {
            valid = false;
        }
    }
    Ok(Certificate { valid, worst })
}
