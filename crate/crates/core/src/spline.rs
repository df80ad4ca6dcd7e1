//! Shape-constrained cubic-spline smoothing of the CALL payoff kink.
//!
//! The smoothed payoff is 0 left of `k - h`, slope-1 linear right of
//! `k + h`, and in between the unique convex, monotone, twice continuously
//! differentiable cubic spline that trades closeness to the kink against
//! curvature. One reference fit at bandwidth `REFERENCE_BANDWIDTH` is
//! rescaled to any `(k, h)`; the rescaling is exact because the smoothing
//! weight grows as the cube of the bandwidth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::payoff::ConvexPayoff;
use crate::qp::{solve_qp, QpProblem, QpSolution};

/// Knot count used throughout unless configured otherwise.
pub const DEFAULT_KNOT_INTERVALS: usize = 10;

/// Bandwidth of the reference fit; the smoothing weight equals 1 there.
pub const REFERENCE_BANDWIDTH: f64 = 10.0;

/// Smoothing weight as a function of bandwidth: `(0.1 h)^3`.
pub fn smoothing_weight(h: f64) -> f64 {
    (0.1 * h).powi(3)
}

/// A smoothed CALL payoff at strike `k` with half-width `h`, stored as a
/// cubic spline in the local coordinate `u = x - k` on `[-h, h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplinePayoff {
    pub k: f64,
    pub h: f64,
    /// Local knot abscissae `-h + 2ih/N`.
    ts: Vec<f64>,
    /// Values at the knots.
    vals: Vec<f64>,
    /// Second derivatives at the knots.
    d2s: Vec<f64>,
}

impl SplinePayoff {
    pub fn knots(&self) -> &[f64] {
        &self.ts
    }

    pub fn knot_values(&self) -> &[f64] {
        &self.vals
    }

    pub fn knot_second_derivs(&self) -> &[f64] {
        &self.d2s
    }

    pub fn knot_intervals(&self) -> usize {
        self.ts.len() - 1
    }

    fn interval_of(&self, u: f64) -> usize {
        let n = self.knot_intervals();
        let step = (self.ts[n] - self.ts[0]) / n as f64;
        (((u - self.ts[0]) / step) as usize).min(n - 1)
    }

    /// Payoff in the local coordinate `u = x - k`.
    pub fn value_local(&self, u: f64) -> f64 {
        if u <= -self.h {
            return 0.0;
        }
        if u >= self.h {
            return u;
        }
        let i = self.interval_of(u);
        let (a, b) = (self.ts[i], self.ts[i + 1]);
        let d = b - a;
        let al = (b - u) / d;
        let be = (u - a) / d;
        let v = al * self.vals[i]
            + be * self.vals[i + 1]
            + d * d / 6.0
                * ((al * al * al - al) * self.d2s[i] + (be * be * be - be) * self.d2s[i + 1]);
        v.max(0.0)
    }

    /// First derivative in the local coordinate; lies in `[0, 1]`.
    pub fn slope_local(&self, u: f64) -> f64 {
        if u <= -self.h {
            return 0.0;
        }
        if u >= self.h {
            return 1.0;
        }
        let i = self.interval_of(u);
        let (a, b) = (self.ts[i], self.ts[i + 1]);
        let d = b - a;
        let al = (b - u) / d;
        let be = (u - a) / d;
        let s = (self.vals[i + 1] - self.vals[i]) / d
            + d / 6.0
                * ((1.0 - 3.0 * al * al) * self.d2s[i] + (3.0 * be * be - 1.0) * self.d2s[i + 1]);
        s.clamp(0.0, 1.0)
    }

    /// Second derivative in the local coordinate; non-negative, 0 outside
    /// `(-h, h)`.
    pub fn curvature_local(&self, u: f64) -> f64 {
        if u <= -self.h || u >= self.h {
            return 0.0;
        }
        let i = self.interval_of(u);
        let (a, b) = (self.ts[i], self.ts[i + 1]);
        let d = b - a;
        let c = (b - u) / d * self.d2s[i] + (u - a) / d * self.d2s[i + 1];
        c.max(0.0)
    }
}

impl ConvexPayoff for SplinePayoff {
    fn value(&self, x: f64) -> f64 {
        self.value_local(x - self.k)
    }

    fn deriv(&self, x: f64) -> f64 {
        self.slope_local(x - self.k)
    }

    fn second_deriv(&self, x: f64) -> f64 {
        self.curvature_local(x - self.k)
    }

    fn asymptotic_slope(&self) -> f64 {
        1.0
    }
}

/// Fit the smoothing spline at strike 0 and bandwidth `h` by solving the
/// constrained quadratic program directly.
///
/// Decision variables are the knot values and knot second derivatives,
/// linked by the first-derivative continuity relations of a cubic spline.
/// Convexity is a bound on the knot second derivatives (the second
/// derivative is piecewise linear, so knot non-negativity is enough) and
/// the boundary conditions pin value and slope at both ends.
pub fn fit_spline(n: usize, h: f64) -> Result<SplinePayoff> {
    if n < 2 {
        return Err(Error::validation("N", format!("need at least 2 intervals, got {n}")));
    }
    if !(h > 0.0) {
        return Err(Error::validation("h", format!("bandwidth must be positive, got {h}")));
    }

    let lambda = smoothing_weight(h);
    let step = 2.0 * h / n as f64;
    let ts: Vec<f64> = (0..=n).map(|i| -h + step * i as f64).collect();
    let ys: Vec<f64> = ts.iter().map(|&t| t.max(0.0)).collect();

    let dim = 2 * (n + 1);
    let gi = |i: usize| i; // value variables
    let si = |i: usize| n + 1 + i; // second-derivative variables

    let mut g = vec![vec![0.0; dim]; dim];
    let mut c = vec![0.0; dim];
    for i in 0..=n {
        g[gi(i)][gi(i)] = 2.0;
        c[gi(i)] = -2.0 * ys[i];
    }
    // curvature energy: sum over intervals of step/3 (s_i^2 + s_i s_{i+1} + s_{i+1}^2)
    for i in 0..n {
        g[si(i)][si(i)] += 2.0 * lambda * step / 3.0;
        g[si(i + 1)][si(i + 1)] += 2.0 * lambda * step / 3.0;
        g[si(i)][si(i + 1)] += lambda * step / 3.0;
        g[si(i + 1)][si(i)] += lambda * step / 3.0;
    }

    let mut a_eq: Vec<Vec<f64>> = Vec::new();
    let mut b_eq: Vec<f64> = Vec::new();
    let mut eq = |row: Vec<f64>, rhs: f64| {
        a_eq.push(row);
        b_eq.push(rhs);
    };

    let unit = |idx: usize| {
        let mut r = vec![0.0; dim];
        r[idx] = 1.0;
        r
    };
    eq(unit(gi(0)), 0.0); // g(-h) = 0
    eq(unit(gi(n)), h); // g(h) = h
    eq(unit(si(0)), 0.0); // g''(-h) = 0
    eq(unit(si(n)), 0.0); // g''(h) = 0

    // slope at the left end: (g1 - g0)/step - step(2 s0 + s1)/6 = 0
    let mut row = vec![0.0; dim];
    row[gi(1)] = 1.0 / step;
    row[gi(0)] = -1.0 / step;
    row[si(0)] = -step / 3.0;
    row[si(1)] = -step / 6.0;
    eq(row, 0.0);

    // slope at the right end: (gN - gN-1)/step + step(s_{N-1} + 2 sN)/6 = 1
    let mut row = vec![0.0; dim];
    row[gi(n)] = 1.0 / step;
    row[gi(n - 1)] = -1.0 / step;
    row[si(n - 1)] = step / 6.0;
    row[si(n)] = step / 3.0;
    eq(row, 1.0);

    // first-derivative continuity at interior knots
    for i in 1..n {
        let mut row = vec![0.0; dim];
        row[gi(i + 1)] += 1.0 / step;
        row[gi(i)] += -2.0 / step;
        row[gi(i - 1)] += 1.0 / step;
        row[si(i - 1)] += -step / 6.0;
        row[si(i)] += -2.0 * step / 3.0;
        row[si(i + 1)] += -step / 6.0;
        eq(row, 0.0);
    }

    let mut a_in: Vec<Vec<f64>> = Vec::new();
    let mut b_in: Vec<f64> = Vec::new();
    for i in 1..n {
        a_in.push(unit(si(i))); // convexity
        b_in.push(0.0);
    }
    for i in 1..n {
        // 0 <= right-sided slope at knot i <= 1
        let mut row = vec![0.0; dim];
        row[gi(i + 1)] = 1.0 / step;
        row[gi(i)] = -1.0 / step;
        row[si(i)] = -step / 3.0;
        row[si(i + 1)] = -step / 6.0;
        a_in.push(row.clone());
        b_in.push(0.0);
        a_in.push(row.into_iter().map(|v| -v).collect());
        b_in.push(-1.0);
    }

    let problem = QpProblem {
        g,
        c,
        a_eq,
        b_eq,
        a_in,
        b_in,
    };
    let QpSolution { x, iterations, .. } = solve_qp(&problem).map_err(|e| match e {
        Error::Solver(msg) => Error::Solver(format!("spline fit (N={n}, h={h}): {msg}")),
        other => other,
    })?;
    let _ = iterations;

    let vals = x[..=n].to_vec();
    let d2s = x[n + 1..].to_vec();
    Ok(SplinePayoff {
        k: 0.0,
        h,
        ts,
        vals,
        d2s,
    })
}

/// Fit the reference spline: strike 0, `n` knot intervals, bandwidth `h0`.
pub fn fit_reference_spline(n: usize, h0: f64) -> Result<SplinePayoff> {
    fit_spline(n, h0)
}

/// Rescale and translate a fitted spline to strike `k` and bandwidth `h`.
///
/// No new optimization runs: the fit at one bandwidth maps onto every other
/// by scaling both axes by `h/h0`.
pub fn spline_payoff(reference: &SplinePayoff, k: f64, h: f64) -> Result<SplinePayoff> {
    if !(h > 0.0) {
        return Err(Error::validation("h", format!("bandwidth must be positive, got {h}")));
    }
    let ratio = h / reference.h;
    Ok(SplinePayoff {
        k,
        h,
        ts: reference.ts.iter().map(|t| t * ratio).collect(),
        vals: reference.vals.iter().map(|v| v * ratio).collect(),
        d2s: reference.d2s.iter().map(|s| s / ratio).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn reference() -> SplinePayoff {
        fit_reference_spline(DEFAULT_KNOT_INTERVALS, REFERENCE_BANDWIDTH).unwrap()
    }

    #[test]
    fn boundary_conditions_hold_exactly() {
        let g = reference();
        assert_abs_diff_eq!(g.value_local(-10.0), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(g.value_local(10.0), 10.0, epsilon = 1e-10);
        assert_abs_diff_eq!(g.slope_local(-10.0 + 1e-12), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g.slope_local(10.0 - 1e-12), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g.curvature_local(-10.0 + 1e-12), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn symmetry_at_knots() {
        let g = reference();
        for i in 0..=g.knot_intervals() {
            let t = g.knots()[i];
            if t >= 0.0 {
                assert_abs_diff_eq!(
                    g.value_local(t) - g.value_local(-t),
                    t,
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn shape_constraints_on_a_fine_grid() {
        let g = reference();
        let mut prev_slope = 0.0;
        for i in 0..=4000 {
            let u = -10.0 + 20.0 * i as f64 / 4000.0;
            let v = g.value_local(u);
            let s = g.slope_local(u);
            let c = g.curvature_local(u);
            assert!(v >= 0.0);
            assert!(v >= u.max(0.0) - 1e-9, "spline below the kink at {u}: {v}");
            assert!((0.0..=1.0).contains(&s));
            assert!(c >= 0.0);
            assert!(s >= prev_slope - 1e-9, "slope not monotone at {u}");
            prev_slope = s;
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let g = reference();
        let eps = 1e-6;
        for &u in &[-9.5, -4.1, -0.3, 0.0, 0.7, 3.9, 9.2] {
            let fd = (g.value_local(u + eps) - g.value_local(u - eps)) / (2.0 * eps);
            assert_abs_diff_eq!(fd, g.slope_local(u), epsilon = 1e-6);
            let fd2 = (g.slope_local(u + eps) - g.slope_local(u - eps)) / (2.0 * eps);
            assert_abs_diff_eq!(fd2, g.curvature_local(u), epsilon = 1e-5);
        }
    }

    #[test]
    fn rescaling_matches_a_direct_fit() {
        let reference = reference();
        for &h in &[2.0, 5.0, 28.0] {
            let scaled = spline_payoff(&reference, 0.0, h).unwrap();
            let direct = fit_spline(DEFAULT_KNOT_INTERVALS, h).unwrap();
            for i in 0..=scaled.knot_intervals() {
                let a = scaled.knot_values()[i];
                let b = direct.knot_values()[i];
                assert!(
                    (a - b).abs() <= 1e-6 * b.abs().max(1e-3),
                    "knot {i} at h={h}: rescaled {a} vs direct {b}"
                );
            }
        }
    }

    #[test]
    fn translation_is_exact() {
        let reference = reference();
        let at_100 = spline_payoff(&reference, 100.0, 10.0).unwrap();
        let at_107 = spline_payoff(&reference, 107.0, 10.0).unwrap();
        for i in 0..=60 {
            let x = 85.0 + i as f64 * 0.5;
            assert_abs_diff_eq!(at_107.value(x), at_100.value(x - 7.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn monotone_in_bandwidth() {
        let reference = reference();
        let g2 = spline_payoff(&reference, 100.0, 2.0).unwrap();
        let g5 = spline_payoff(&reference, 100.0, 5.0).unwrap();
        let g10 = spline_payoff(&reference, 100.0, 10.0).unwrap();
        for i in 0..=600 {
            let x = 85.0 + i as f64 * 0.05;
            let kink = (x - 100.0f64).max(0.0);
            assert!(g2.value(x) >= kink - 1e-10);
            assert!(g5.value(x) >= g2.value(x) - 1e-10);
            assert!(g10.value(x) >= g5.value(x) - 1e-10);
        }
    }

    #[test]
    fn sup_gap_is_linear_in_bandwidth() {
        let reference = reference();
        let gap_ref = reference.value_local(0.0);
        for &h in &[1.0, 2.5, 7.0] {
            let g = spline_payoff(&reference, 50.0, h).unwrap();
            let mut sup = 0.0f64;
            for i in 0..=2000 {
                let x = 50.0 - 1.5 * h + 3.0 * h * i as f64 / 2000.0;
                sup = sup.max(g.value(x) - (x - 50.0f64).max(0.0));
            }
            let law = gap_ref * h / REFERENCE_BANDWIDTH;
            assert!(
                (sup - law).abs() <= 1e-6 * law,
                "h={h}: sup gap {sup} vs scaling law {law}"
            );
            assert_abs_diff_eq!(g.value(50.0), sup, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(fit_spline(1, 10.0).is_err());
        assert!(fit_spline(10, 0.0).is_err());
        let r = reference();
        assert!(spline_payoff(&r, 100.0, -1.0).is_err());
    }
}
