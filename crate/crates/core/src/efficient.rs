//! The efficient strike set: quotes whose ask equals their superhedging
//! price, together with the piecewise-linear CALL function through them and
//! the step measure it implies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quotes::QuoteCurve;

/// Strikes priced efficiently by the market, with their asks.
///
/// Strikes start at 0, prices are positive and non-increasing, and the
/// chord slopes are non-decreasing (the curve is convex). Every point is a
/// point of the source curve and no source point lies below the
/// interpolant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficientCurve {
    strikes: Vec<f64>,
    prices: Vec<f64>,
    source: QuoteCurve,
}

impl EfficientCurve {
    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    /// Index of the last efficient strike (`I`); the curve has `I + 1` points.
    pub fn last_index(&self) -> usize {
        self.strikes.len() - 1
    }

    pub fn source(&self) -> &QuoteCurve {
        &self.source
    }

    /// The efficient CALL function: linear interpolation between efficient
    /// strikes, constant at the last efficient price beyond it.
    pub fn q0_at(&self, k: f64) -> f64 {
        let (j, q) = (&self.strikes, &self.prices);
        let last = self.last_index();
        if k >= j[last] {
            return q[last];
        }
        // j[0] = 0 <= k < j[last]
        let i = match j.binary_search_by(|x| x.total_cmp(&k)) {
            Ok(i) => return q[i],
            Err(i) => i - 1,
        };
        let t = (k - j[i]) / (j[i + 1] - j[i]);
        q[i] * (1.0 - t) + q[i + 1] * t
    }

    /// View the efficient points as a quote curve of their own.
    pub fn as_quote_curve(&self) -> QuoteCurve {
        QuoteCurve::new(
            self.strikes.clone(),
            self.prices.clone(),
            self.source.maturity,
            self.source.observed_at,
            self.source.spot_hint,
        )
        .expect("efficient points form a valid curve")
    }
}

/// Compute the efficient strike set of a quote curve.
///
/// The efficient points are exactly the quotes lying on the greatest
/// convex, non-increasing minorant of the scatter: a lower convex hull
/// truncated at the first non-negative chord slope. Quotes sitting exactly
/// on a hull chord are efficient (their ask equals the superhedge price)
/// and are retained.
pub fn efficient_set(curve: &QuoteCurve) -> Result<EfficientCurve> {
    let ks = curve.strikes();
    let qs = curve.asks();
    if ks.len() < 2 {
        return Err(Error::InsufficientStrikes {
            needed: 2,
            found: ks.len(),
        });
    }

    // Lower convex hull by monotone chain; cross < 0 means the middle point
    // lies strictly below the chord of its neighbours, so the chain keeps
    // points that sit exactly on a chord.
    let mut hull: Vec<usize> = Vec::with_capacity(ks.len());
    for i in 0..ks.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (ks[b] - ks[a]) * (qs[i] - qs[a]) - (qs[b] - qs[a]) * (ks[i] - ks[a]);
            if cross < 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }

    // Drop the suffix where the hull starts rising; slopes of a convex chain
    // are non-decreasing, so a positive slope never recovers.
    let mut end = 1;
    while end < hull.len() {
        let (a, b) = (hull[end - 1], hull[end]);
        if qs[b] > qs[a] {
            break;
        }
        end += 1;
    }
    hull.truncate(end);

    let strikes: Vec<f64> = hull.iter().map(|&i| ks[i]).collect();
    let prices: Vec<f64> = hull.iter().map(|&i| qs[i]).collect();
    debug_assert_eq!(strikes[0], 0.0);

    Ok(EfficientCurve {
        strikes,
        prices,
        source: curve.clone(),
    })
}

/// A non-increasing step function `t -> nu(x > t)`: constant levels on the
/// intervals between efficient strikes, 0 beyond the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvival {
    /// Interval endpoints `j_0 < j_1 < ... < j_I`.
    pub bounds: Vec<f64>,
    /// `levels[i]` holds on `(bounds[i], bounds[i+1]]`.
    pub levels: Vec<f64>,
}

impl StepSurvival {
    pub fn survival(&self, t: f64) -> f64 {
        let last = *self.bounds.last().unwrap();
        if t > last {
            return 0.0;
        }
        // Level on (bounds[i], bounds[i+1]]; at or below bounds[0], the first
        // level applies by closure.
        match self
            .bounds
            .iter()
            .rposition(|&b| b < t)
        {
            Some(i) => self.levels[i],
            None => self.levels.first().copied().unwrap_or(0.0),
        }
    }

    /// Exact integral of the survival function over `[t, infinity)`.
    pub fn integrate_tail(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.levels.len() {
            let (lo, hi) = (self.bounds[i], self.bounds[i + 1]);
            if t >= hi {
                continue;
            }
            acc += self.levels[i] * (hi - lo.max(t));
        }
        acc
    }

    /// Point masses of the measure: the level drops at each interior bound
    /// plus the terminal drop to 0, located at the bounds `j_1 ... j_I`.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.levels.len());
        for i in 0..self.levels.len() {
            let next = self.levels.get(i + 1).copied().unwrap_or(0.0);
            let mass = self.levels[i] - next;
            if mass > 0.0 {
                out.push((self.bounds[i + 1], mass));
            }
        }
        out
    }
}

/// The step measure implied by the efficient CALL function: on each
/// interval between efficient strikes the survival level is the negated
/// chord slope of the prices.
pub fn nu0(eff: &EfficientCurve) -> StepSurvival {
    let j = eff.strikes();
    let q = eff.prices();
    let levels: Vec<f64> = (0..j.len().saturating_sub(1))
        .map(|i| (q[i] - q[i + 1]) / (j[i + 1] - j[i]))
        .collect();
    StepSurvival {
        bounds: j.to_vec(),
        levels,
    }
}
