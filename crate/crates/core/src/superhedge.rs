//! Pricing convex payoffs by superhedging with long positions in the
//! efficient options.
//!
//! The cheapest dominating portfolio admits a closed form: its weights come
//! from forward slope differences of the payoff, and the same price is a
//! positive combination of payoff values at the efficient strikes. Both
//! evaluations are computed and must agree.

use serde::{Deserialize, Serialize};

use crate::efficient::EfficientCurve;
use crate::error::{Error, Result};
use crate::payoff::ConvexPayoff;

/// Non-negativity slack for the computed coefficients before clamping.
const COEF_TOL: f64 = 1e-12;

/// Price of a superhedged payoff with both sides of the duality.
///
/// `price = sum_i w[i] * q(j_i) = sum_{i=1..I} b[i-1] * f(j_i) + b[I] * asymptotic_slope`,
/// with all coefficients non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperhedgeResult {
    pub price: f64,
    /// Portfolio weights per efficient strike, `w[0..=I]`.
    pub w: Vec<f64>,
    /// Dual coefficients `b_1..b_{I+1}` (so `b[I]` multiplies the
    /// asymptotic slope and equals the last efficient price).
    pub b: Vec<f64>,
}

impl SuperhedgeResult {
    /// Re-evaluate the price from the weight side.
    pub fn price_from_weights(&self, eff: &EfficientCurve) -> f64 {
        self.w
            .iter()
            .zip(eff.prices())
            .map(|(w, q)| w * q)
            .sum()
    }

    /// Re-evaluate the price from the dual side.
    pub fn price_from_duals(&self, f: &impl ConvexPayoff, eff: &EfficientCurve) -> f64 {
        let j = eff.strikes();
        let mut acc = 0.0;
        for i in 1..j.len() {
            acc += self.b[i - 1] * f.value(j[i]);
        }
        acc + self.b[j.len() - 1] * f.asymptotic_slope()
    }
}

fn chord_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    (0..xs.len() - 1)
        .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
        .collect()
}

/// Dual coefficients of an efficient curve: `b_{i+1} = D_{i+1}(q) - D_i(q)`
/// for `i < I` with `D_I(q) = 0`, and `b_{I+1} = q(j_I)`.
///
/// These do not depend on the payoff and can be reused across evaluations.
pub fn dual_coefficients(eff: &EfficientCurve) -> Result<Vec<f64>> {
    let j = eff.strikes();
    let q = eff.prices();
    let last = eff.last_index();
    let mut slopes = chord_slopes(j, q);
    slopes.push(0.0); // D_I(q) = 0
    let mut b = Vec::with_capacity(last + 1);
    for i in 0..last {
        let v = slopes[i + 1] - slopes[i];
        if v < -COEF_TOL {
            return Err(Error::InconsistentCurve(format!(
                "negative dual coefficient {v} at strike {}",
                j[i + 1]
            )));
        }
        b.push(v.max(0.0));
    }
    b.push(q[last]);
    Ok(b)
}

/// Superhedge a convex payoff against an efficient curve.
///
/// Requires an unbounded underlying, so the terminal weight is
/// `asymptotic_slope - D_{I-1}(f)`; a payoff whose asymptotic slope falls
/// below its last chord slope is not admissible.
pub fn superhedge_price(f: &impl ConvexPayoff, eff: &EfficientCurve) -> Result<SuperhedgeResult> {
    let j = eff.strikes();
    let last = eff.last_index();
    let slope_inf = f.asymptotic_slope();

    let fj: Vec<f64> = j.iter().map(|&k| f.value(k)).collect();
    let df = chord_slopes(j, &fj);

    let mut w = Vec::with_capacity(last + 1);
    if last == 0 {
        w.push(slope_inf);
    } else {
        w.push(df[0]);
        for i in 1..last {
            w.push(df[i] - df[i - 1]);
        }
        w.push(slope_inf - df[last - 1]);
    }
    if let Some(&wl) = w.last() {
        if wl < -COEF_TOL {
            return Err(Error::NotInGamma(format!(
                "asymptotic slope {slope_inf} below the last chord slope {}",
                slope_inf - wl
            )));
        }
    }
    for (i, v) in w.iter_mut().enumerate() {
        if *v < -COEF_TOL {
            return Err(Error::InconsistentCurve(format!(
                "negative weight {v} at strike {}",
                j[i]
            )));
        }
        *v = v.max(0.0);
    }

    let b = dual_coefficients(eff)?;
    let price = w.iter().zip(eff.prices()).map(|(w, q)| w * q).sum();

    Ok(SuperhedgeResult { price, w, b })
}
