//! Brute-force cross-check of the spline fit.
//!
//! The same program — least squares against the kink plus a curvature
//! penalty, over convex monotone cubic splines that leave the smoothing
//! window linearly — is assembled here through a fine grid of step
//! `h/1000`: the curvature profile is hat-interpolated from its coarse
//! knot values, the payoff is rebuilt by summing curvature ramps, and the
//! integrals become Riemann sums. The resulting bound-constrained QP is
//! solved by exhaustive enumeration of active bound subsets, so no
//! active-set logic is shared with the production solver.

use nalgebra::{DMatrix, DVector};
use superhedge::spline::{fit_spline, smoothing_weight};

struct FineGridFit {
    grid: Vec<f64>,
    curvature: Vec<f64>,
    step: f64,
}

impl FineGridFit {
    fn value(&self, t: f64) -> f64 {
        self.curvature
            .iter()
            .zip(&self.grid)
            .map(|(c, &tj)| c * self.step * (t - tj).max(0.0))
            .sum()
    }
}

fn solve_fine_grid(n: usize, h: f64) -> FineGridFit {
    assert!(n >= 4 && n <= 12, "enumeration oracle sized for small N");
    let lambda = smoothing_weight(h);
    let m = 2000usize;
    let step = 2.0 * h / m as f64;
    let grid: Vec<f64> = (0..=m).map(|j| -h + step * j as f64).collect();

    let coarse: Vec<f64> = (0..=n).map(|i| -h + 2.0 * h * i as f64 / n as f64).collect();
    let coarse_step = 2.0 * h / n as f64;
    // hat function of interior coarse knot v evaluated at t
    let hat = |v: usize, t: f64| -> f64 {
        (1.0 - (t - coarse[v]).abs() / coarse_step).max(0.0)
    };

    let nv = n - 1; // interior coarse curvatures; the boundary ones are 0
    let taus = &coarse;
    let ys: Vec<f64> = taus.iter().map(|&t| t.max(0.0)).collect();

    // fit matrix: value of the rebuilt payoff at each coarse knot per unit
    // of interior curvature
    let mut a = vec![vec![0.0f64; nv]; n + 1];
    for (row, &tau) in taus.iter().enumerate() {
        for v in 0..nv {
            let mut acc = 0.0;
            for &tj in &grid {
                acc += hat(v + 1, tj) * step * (tau - tj).max(0.0);
            }
            a[row][v] = acc;
        }
    }
    // terminal slope and terminal value per unit of interior curvature
    let mut e = vec![vec![0.0f64; nv]; 2];
    for v in 0..nv {
        let mut slope = 0.0;
        let mut val = 0.0;
        for &tj in &grid {
            let w = hat(v + 1, tj) * step;
            slope += w;
            val += w * (h - tj);
        }
        e[0][v] = slope;
        e[1][v] = val;
    }
    let e_rhs = [1.0, h];

    // ridge: lambda * sum_j c(t_j)^2 * step
    let mut r = vec![vec![0.0f64; nv]; nv];
    for v in 0..nv {
        for w in 0..nv {
            let mut acc = 0.0;
            for &tj in &grid {
                acc += hat(v + 1, tj) * hat(w + 1, tj);
            }
            r[v][w] = lambda * step * acc;
        }
    }

    // quadratic form: |y - A s|^2 + s'Rs
    let g = DMatrix::from_fn(nv, nv, |i, j| {
        let mut acc = 2.0 * r[i][j];
        for row in 0..=n {
            acc += 2.0 * a[row][i] * a[row][j];
        }
        acc
    });
    let lin = DVector::from_fn(nv, |i, _| {
        let mut acc = 0.0;
        for row in 0..=n {
            acc -= 2.0 * a[row][i] * ys[row];
        }
        acc
    });
    let objective = |s: &DVector<f64>| -> f64 {
        let mut obj = 0.0;
        for row in 0..=n {
            let mut fit = 0.0;
            for v in 0..nv {
                fit += a[row][v] * s[v];
            }
            obj += (ys[row] - fit) * (ys[row] - fit);
        }
        for v in 0..nv {
            for w in 0..nv {
                obj += s[v] * r[v][w] * s[w];
            }
        }
        obj
    };

    // enumerate every subset of active bounds; keep the best feasible point
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << nv) {
        let mut rows: Vec<Vec<f64>> = e.clone();
        let mut rhs: Vec<f64> = e_rhs.to_vec();
        for v in 0..nv {
            if mask & (1 << v) != 0 {
                let mut unit = vec![0.0; nv];
                unit[v] = 1.0;
                rows.push(unit);
                rhs.push(0.0);
            }
        }
        let nc = rows.len();
        let dim = nv + nc;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        kkt.view_mut((0, 0), (nv, nv)).copy_from(&g);
        for (ci, row) in rows.iter().enumerate() {
            for v in 0..nv {
                kkt[(nv + ci, v)] = row[v];
                kkt[(v, nv + ci)] = row[v];
            }
        }
        let mut b = DVector::<f64>::zeros(dim);
        for v in 0..nv {
            b[v] = -lin[v];
        }
        for (ci, &rv) in rhs.iter().enumerate() {
            b[nv + ci] = rv;
        }
        let Some(sol) = kkt.lu().solve(&b) else {
            continue;
        };
        let s = DVector::from_fn(nv, |v, _| sol[v]);
        if (0..nv).any(|v| s[v] < -1e-10) {
            continue;
        }
        let obj = objective(&s);
        if best.as_ref().map_or(true, |(bv, _)| obj < *bv) {
            best = Some((obj, s));
        }
    }
    let (_, s) = best.expect("some active subset is feasible");

    let curvature: Vec<f64> = grid
        .iter()
        .map(|&tj| (0..nv).map(|v| s[v] * hat(v + 1, tj)).sum())
        .collect();
    FineGridFit {
        grid,
        curvature,
        step,
    }
}

#[test]
fn fine_grid_oracle_agrees_at_the_kink() {
    for (n, h) in [(10usize, 10.0f64), (6, 5.0)] {
        let oracle = solve_fine_grid(n, h);
        let production = fit_spline(n, h).unwrap();
        let v_oracle = oracle.value(0.0);
        let v_prod = production.value_local(0.0);
        assert!(
            (v_oracle - v_prod).abs() <= 1e-4 * h,
            "N={n}, h={h}: oracle {v_oracle} vs production {v_prod}"
        );
    }
}

#[test]
fn fine_grid_oracle_agrees_at_the_knots() {
    let n = 10;
    let h = 10.0;
    let oracle = solve_fine_grid(n, h);
    let production = fit_spline(n, h).unwrap();
    for i in 0..=n {
        let t = -h + 2.0 * h * i as f64 / n as f64;
        let a = oracle.value(t);
        let b = production.value_local(t);
        assert!(
            (a - b).abs() <= 1e-4 * h,
            "knot {t}: oracle {a} vs production {b}"
        );
    }
}
