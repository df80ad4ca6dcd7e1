//! A small dense linear-programming oracle for superhedge prices.
//!
//! Kept deliberately independent of the closed-form recursions: the
//! domination constraints are solved as a plain LP by a two-phase simplex.
//! Intended for tests and cross-checks on modest strike counts.

use crate::efficient::EfficientCurve;
use crate::error::{Error, Result};
use crate::payoff::ConvexPayoff;

/// Minimize `c.x` subject to `A x >= b`, `x >= 0` (all `b >= 0`).
///
/// Dense two-phase simplex with Bland's rule. Returns the optimal value and
/// an optimal point.
pub fn simplex_min(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    let m = a.len();
    let n = c.len();
    assert!(a.iter().all(|row| row.len() == n));
    assert_eq!(b.len(), m);
    assert!(b.iter().all(|&v| v >= 0.0));

    let scale = c
        .iter()
        .chain(b.iter())
        .chain(a.iter().flatten())
        .fold(1.0f64, |s, &v| s.max(v.abs()));
    let eps = 1e-11 * scale;

    // columns: n structural, m surplus, m artificial, then rhs
    let ncols = n + 2 * m;
    let mut t = vec![vec![0.0f64; ncols + 1]; m];
    for (i, row) in a.iter().enumerate() {
        t[i][..n].copy_from_slice(row);
        t[i][n + i] = -1.0;
        t[i][n + m + i] = 1.0;
        t[i][ncols] = b[i];
    }
    let mut basis: Vec<usize> = (n + m..n + 2 * m).collect();

    let pivot = |t: &mut Vec<Vec<f64>>, cost: &mut Vec<f64>, r: usize, col: usize| {
        let p = t[r][col];
        for v in t[r].iter_mut() {
            *v /= p;
        }
        for i in 0..t.len() {
            if i != r && t[i][col].abs() > 0.0 {
                let f = t[i][col];
                for j in 0..=ncols {
                    t[i][j] -= f * t[r][j];
                }
            }
        }
        let f = cost[col];
        if f != 0.0 {
            for j in 0..=ncols {
                cost[j] -= f * t[r][j];
            }
        }
    };

    let run = |t: &mut Vec<Vec<f64>>,
               cost: &mut Vec<f64>,
               basis: &mut Vec<usize>,
               allow: &dyn Fn(usize) -> bool|
     -> Result<()> {
        for _ in 0..10_000 {
            // Bland: smallest-index entering column with negative reduced cost
            let entering = (0..ncols).find(|&j| allow(j) && cost[j] < -eps);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..t.len() {
                if t[i][col] > eps {
                    let ratio = t[i][ncols] / t[i][col];
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - eps || (ratio < lr + eps && basis[i] < basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Infeasible("objective unbounded below".into()));
            };
            pivot(t, cost, r, col);
            basis[r] = col;
        }
        Err(Error::Solver("simplex iteration limit".into()))
    };

    // Phase 1: minimize the artificial total.
    let mut cost1 = vec![0.0f64; ncols + 1];
    for j in n + m..n + 2 * m {
        cost1[j] = 1.0;
    }
    for i in 0..m {
        for j in 0..=ncols {
            cost1[j] -= t[i][j];
        }
    }
    run(&mut t, &mut cost1, &mut basis, &|_| true)?;
    if -cost1[ncols] > 1e-7 * scale {
        return Err(Error::Infeasible(format!(
            "phase-1 residual {}",
            -cost1[ncols]
        )));
    }
    // Pivot any leftover artificial out of the basis where possible.
    for r in 0..m {
        if basis[r] >= n + m {
            if let Some(col) = (0..n + m).find(|&j| t[r][j].abs() > eps) {
                pivot(&mut t, &mut cost1, r, col);
                basis[r] = col;
            }
        }
    }

    // Phase 2 on the original objective, artificial columns barred.
    let mut cost2 = vec![0.0f64; ncols + 1];
    cost2[..n].copy_from_slice(c);
    for (r, &bi) in basis.iter().enumerate() {
        let f = cost2[bi];
        if f != 0.0 {
            for j in 0..=ncols {
                cost2[j] -= f * t[r][j];
            }
        }
    }
    run(&mut t, &mut cost2, &mut basis, &|j| j < n + m)?;

    let mut x = vec![0.0f64; n];
    for (r, &bi) in basis.iter().enumerate() {
        if bi < n {
            x[bi] = t[r][ncols];
        }
    }
    let value = c.iter().zip(&x).map(|(c, x)| c * x).sum();
    Ok((value, x))
}

/// Cheapest long-only portfolio of the quoted options dominating the payoff.
///
/// Domination of a convex payoff by a piecewise-linear portfolio payoff only
/// needs checking at the quoted strikes plus the asymptotic slope, which
/// turns the superhedge into a finite LP.
pub fn superhedge_lp(
    strikes: &[f64],
    prices: &[f64],
    f: &impl ConvexPayoff,
) -> Result<f64> {
    assert_eq!(strikes.len(), prices.len());
    let n = strikes.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut rhs: Vec<f64> = Vec::with_capacity(n);
    for m in 1..n {
        rows.push(
            strikes
                .iter()
                .map(|&ki| (strikes[m] - ki).max(0.0))
                .collect(),
        );
        rhs.push(f.value(strikes[m]));
    }
    rows.push(vec![1.0; n]);
    rhs.push(f.asymptotic_slope());
    let (value, _) = simplex_min(prices, &rows, &rhs)?;
    Ok(value)
}

/// LP price of a payoff against the efficient curve; the testing oracle for
/// the closed-form superhedge.
pub fn lp_oracle(f: &impl ConvexPayoff, eff: &EfficientCurve) -> Result<f64> {
    superhedge_lp(eff.strikes(), eff.prices(), f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::efficient::efficient_set;
    use crate::payoff::{OptionPayoff, PortfolioPayoff};
    use crate::quotes::QuoteCurve;
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;

    fn eff4() -> EfficientCurve {
        let c = QuoteCurve::new(
            vec![0.0, 100.0, 110.0, 120.0],
            vec![100.0, 12.0, 9.0, 8.0],
            NaiveDate::from_ymd_opt(2010, 11, 20).unwrap(),
            None,
            None,
        )
        .unwrap();
        efficient_set(&c).unwrap()
    }

    #[test]
    fn simplex_solves_a_known_lp() {
        // min x + 2y s.t. x + y >= 2, x >= 0.5 -> optimum at (2, 0)
        let (v, x) = simplex_min(
            &[1.0, 2.0],
            &[vec![1.0, 1.0], vec![1.0, 0.0]],
            &[2.0, 0.5],
        )
        .unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn traded_option_is_its_own_hedge() {
        let eff = eff4();
        for (i, &k) in eff.strikes().iter().enumerate() {
            let v = lp_oracle(&OptionPayoff::new(k), &eff).unwrap();
            assert_abs_diff_eq!(v, eff.prices()[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn strangle_matches_the_closed_form() {
        let f = PortfolioPayoff::new(vec![(1.0, 105.0), (1.0, 115.0)]);
        let v = lp_oracle(&f, &eff4()).unwrap();
        assert_abs_diff_eq!(v, 19.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_payoff_costs_nothing() {
        let v = lp_oracle(&PortfolioPayoff::default(), &eff4()).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_on_the_full_quote_set_identifies_efficiency() {
        // 110 quotes above its chord: the LP on all quotes prices it lower.
        let c = QuoteCurve::new(
            vec![0.0, 100.0, 110.0, 120.0],
            vec![100.0, 12.0, 11.0, 8.0],
            NaiveDate::from_ymd_opt(2010, 11, 20).unwrap(),
            None,
            None,
        )
        .unwrap();
        let v = superhedge_lp(c.strikes(), c.asks(), &OptionPayoff::new(110.0)).unwrap();
        assert_abs_diff_eq!(v, 10.0, epsilon = 1e-9);
        let eff = efficient_set(&c).unwrap();
        assert_abs_diff_eq!(eff.q0_at(110.0), v, epsilon = 1e-9);
    }
}
