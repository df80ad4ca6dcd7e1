//! Dense active-set solver for small strictly convex quadratic programs.
//!
//! Minimizes `0.5 x'Gx + c'x` subject to `A_eq x = b_eq` and `A in x >= b_in`,
//! with `G` positive definite. The working set starts from the
//! equality-constrained minimum and exchanges one inequality at a time, so
//! termination is exact up to linear-algebra roundoff.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct QpProblem {
    /// Symmetric positive definite Hessian, row-major `n x n`.
    pub g: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_in: Vec<Vec<f64>>,
    pub b_in: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Indices of inequality constraints active at the solution.
    pub active: Vec<usize>,
}

fn solve_kkt(
    g: &DMatrix<f64>,
    c: &DVector<f64>,
    rows: &[&[f64]],
    rhs: &[f64],
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = g.nrows();
    let m = rows.len();
    let dim = n + m;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(g);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            kkt[(n + i, j)] = v;
            kkt[(j, n + i)] = v;
        }
    }
    let mut b = DVector::<f64>::zeros(dim);
    for j in 0..n {
        b[j] = -c[j];
    }
    for i in 0..m {
        b[n + i] = rhs[i];
    }
    let sol = kkt.lu().solve(&b)?;
    let x = DVector::from_iterator(n, (0..n).map(|j| sol[j]));
    // Multipliers y with Gx + c = A'y; the KKT block carries -y.
    let y = DVector::from_iterator(m, (0..m).map(|i| -sol[n + i]));
    Some((x, y))
}

pub fn solve_qp(p: &QpProblem) -> Result<QpSolution> {
    let n = p.c.len();
    assert!(p.g.len() == n && p.g.iter().all(|r| r.len() == n));
    let g = DMatrix::from_fn(n, n, |i, j| p.g[i][j]);
    let c = DVector::from_column_slice(&p.c);

    let scale = p
        .g
        .iter()
        .flatten()
        .chain(p.c.iter())
        .chain(p.b_eq.iter())
        .chain(p.b_in.iter())
        .fold(1.0f64, |s, &v| s.max(v.abs()));
    let tol = 1e-10 * scale;

    let mut active: Vec<usize> = Vec::new();
    let max_iter = 50 + 10 * (p.a_in.len() + 1);

    for iteration in 0..max_iter {
        let mut rows: Vec<&[f64]> = p.a_eq.iter().map(|r| r.as_slice()).collect();
        let mut rhs: Vec<f64> = p.b_eq.clone();
        for &i in &active {
            rows.push(&p.a_in[i]);
            rhs.push(p.b_in[i]);
        }

        let Some((x, y)) = solve_kkt(&g, &c, &rows, &rhs) else {
            return Err(Error::Solver(format!(
                "singular KKT system at iteration {iteration} with {} active constraints",
                active.len()
            )));
        };

        // Drop the most negative multiplier among active inequalities.
        let neq = p.a_eq.len();
        let mut drop: Option<(usize, f64)> = None;
        for pos in 0..active.len() {
            let mu = y[neq + pos];
            if mu < -tol && drop.map_or(true, |(_, worst)| mu < worst) {
                drop = Some((pos, mu));
            }
        }
        if let Some((pos, _)) = drop {
            active.remove(pos);
            continue;
        }

        // Add the most violated inactive inequality.
        let mut add: Option<(usize, f64)> = None;
        for (i, row) in p.a_in.iter().enumerate() {
            if active.contains(&i) {
                continue;
            }
            let viol = p.b_in[i] - row.iter().zip(x.iter()).map(|(a, x)| a * x).sum::<f64>();
            if viol > tol && add.map_or(true, |(_, worst)| viol > worst) {
                add = Some((i, viol));
            }
        }
        match add {
            Some((i, _)) => active.push(i),
            None => {
                return Ok(QpSolution {
                    x: x.iter().copied().collect(),
                    iterations: iteration + 1,
                    active,
                })
            }
        }
    }
    Err(Error::Solver(format!(
        "active-set iteration limit {max_iter} reached"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    #[test]
    fn unconstrained_minimum() {
        let p = QpProblem {
            g: identity(2),
            c: vec![1.0, -2.0],
            ..Default::default()
        };
        let s = solve_qp(&p).unwrap();
        assert_abs_diff_eq!(s.x[0], -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.x[1], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn single_inequality_becomes_active() {
        // min 0.5x^2 + 0.5y^2 + x  s.t. x + 2y >= 1 -> (-0.6, 0.8)
        let p = QpProblem {
            g: identity(2),
            c: vec![1.0, 0.0],
            a_in: vec![vec![1.0, 2.0]],
            b_in: vec![1.0],
            ..Default::default()
        };
        let s = solve_qp(&p).unwrap();
        assert_abs_diff_eq!(s.x[0], -0.6, epsilon = 1e-10);
        assert_abs_diff_eq!(s.x[1], 0.8, epsilon = 1e-10);
        assert_eq!(s.active, vec![0]);
    }

    #[test]
    fn equality_plus_bounds() {
        // min 0.5|x|^2 s.t. x0 + x1 + x2 = 1, x >= 0.4 each where binding
        let p = QpProblem {
            g: identity(3),
            c: vec![0.0; 3],
            a_eq: vec![vec![1.0, 1.0, 1.0]],
            b_eq: vec![1.0],
            a_in: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            b_in: vec![0.4, 0.0, 0.0],
        };
        let s = solve_qp(&p).unwrap();
        assert_abs_diff_eq!(s.x[0], 0.4, epsilon = 1e-10);
        assert_abs_diff_eq!(s.x[1], 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(s.x[2], 0.3, epsilon = 1e-10);
    }

    #[test]
    fn inactive_constraints_stay_inactive() {
        let p = QpProblem {
            g: identity(2),
            c: vec![-2.0, -2.0],
            a_in: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            b_in: vec![0.0, 0.0],
            ..Default::default()
        };
        let s = solve_qp(&p).unwrap();
        assert_abs_diff_eq!(s.x[0], 2.0, epsilon = 1e-10);
        assert!(s.active.is_empty());
    }

    #[test]
    fn matches_exhaustive_active_set_enumeration() {
        // Random-ish SPD problem with bounds, checked against brute force
        // over all active subsets.
        let g = vec![
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ];
        let c = vec![-1.0, -4.0, 2.5];
        let a_in = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![-1.0, -1.0, -1.0], // x0+x1+x2 <= 1.8
        ];
        let b_in = vec![0.0, 0.0, 0.0, -1.8];
        let p = QpProblem {
            g: g.clone(),
            c: c.clone(),
            a_in: a_in.clone(),
            b_in: b_in.clone(),
            ..Default::default()
        };
        let s = solve_qp(&p).unwrap();

        let gm = DMatrix::from_fn(3, 3, |i, j| g[i][j]);
        let cv = DVector::from_column_slice(&c);
        let obj = |x: &DVector<f64>| 0.5 * (x.transpose() * &gm * x)[(0, 0)] + cv.dot(x);
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0..16u32 {
            let rows: Vec<&[f64]> = (0..4)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| a_in[i].as_slice())
                .collect();
            let rhs: Vec<f64> = (0..4)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| b_in[i])
                .collect();
            if let Some((x, _)) = solve_kkt(&gm, &cv, &rows, &rhs) {
                let feasible = a_in
                    .iter()
                    .zip(&b_in)
                    .all(|(row, &b)| {
                        row.iter().zip(x.iter()).map(|(a, x)| a * x).sum::<f64>() >= b - 1e-9
                    });
                if feasible {
                    let v = obj(&x);
                    if best.as_ref().map_or(true, |(bv, _)| v < *bv) {
                        best = Some((v, x));
                    }
                }
            }
        }
        let (bv, bx) = best.unwrap();
        let sv = {
            let x = DVector::from_column_slice(&s.x);
            obj(&x)
        };
        assert_abs_diff_eq!(sv, bv, epsilon = 1e-8);
        for i in 0..3 {
            assert_abs_diff_eq!(s.x[i], bx[i], epsilon = 1e-7);
        }
    }
}
