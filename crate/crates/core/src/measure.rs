//! The smooth CALL function built from superhedge prices of a smoothed
//! payoff family, and the measure implicit in it: bubble component,
//! survival function, density where defined, and tail risk measures.

use serde::{Deserialize, Serialize};

use crate::density::{density_payoff, DensityPayoff, KernelId};
use crate::efficient::{EfficientCurve, StepSurvival};
use crate::error::{Error, Result};
use crate::quotes::{mesh, MeshStats};
use crate::spline::{fit_spline, spline_payoff, SplinePayoff, DEFAULT_KNOT_INTERVALS};

/// Which payoff-smoothing family to price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SmootherKind {
    Spline { intervals: usize },
    Density { kernel: KernelId },
}

impl Default for SmootherKind {
    fn default() -> Self {
        SmootherKind::Spline {
            intervals: DEFAULT_KNOT_INTERVALS,
        }
    }
}

/// Bandwidth given directly or as a multiple of the quote mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    /// `h = delta * M` with `M` the mesh of the quoted strikes.
    Delta(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherSpec {
    pub kind: SmootherKind,
    pub bandwidth: Bandwidth,
}

/// The smoothed payoff shape in the local coordinate `u = x - k`,
/// shared by every strike through translation.
#[derive(Debug, Clone)]
pub(crate) enum LocalShape {
    Spline(SplinePayoff),
    Density(DensityPayoff),
}

impl LocalShape {
    pub(crate) fn value(&self, u: f64) -> f64 {
        match self {
            LocalShape::Spline(s) => s.value_local(u),
            LocalShape::Density(d) => d.value_local(u),
        }
    }

    pub(crate) fn slope(&self, u: f64) -> f64 {
        match self {
            LocalShape::Spline(s) => s.slope_local(u),
            LocalShape::Density(d) => d.slope_local(u),
        }
    }

    pub(crate) fn curvature(&self, u: f64) -> f64 {
        match self {
            LocalShape::Spline(s) => s.curvature_local(u),
            LocalShape::Density(d) => d.curvature_local(u),
        }
    }

    /// Width beyond which the shape is numerically indistinguishable from
    /// the raw kink.
    fn tail_halfwidth(&self, h: f64) -> f64 {
        match self {
            LocalShape::Spline(_) => h,
            LocalShape::Density(_) => 10.0 * h,
        }
    }
}

/// The estimator `k -> q(k)` obtained by superhedging the smoothed payoff
/// at every strike, in closed form from the dual coefficients of the
/// efficient curve.
#[derive(Debug, Clone)]
pub struct SmoothCallCurve {
    eff: EfficientCurve,
    spec: SmootherSpec,
    h: f64,
    shape: LocalShape,
    /// Dual coefficients at the positive efficient strikes.
    b: Vec<f64>,
    /// Price limit for large strikes: the last efficient ask.
    beta: f64,
}

/// Build the smooth CALL curve for an efficient set.
///
/// `mesh_stats` is only consulted for [`Bandwidth::Delta`]; when absent it
/// is computed from the source quote curve.
pub fn smooth_call_curve(
    eff: &EfficientCurve,
    spec: &SmootherSpec,
    mesh_stats: Option<&MeshStats>,
) -> Result<SmoothCallCurve> {
    let h = match spec.bandwidth {
        Bandwidth::Absolute(h) => {
            if !(h > 0.0) {
                return Err(Error::validation("h", format!("must be positive, got {h}")));
            }
            h
        }
        Bandwidth::Delta(delta) => {
            if !(delta > 0.0) {
                return Err(Error::validation(
                    "delta",
                    format!("must be positive, got {delta}"),
                ));
            }
            let m = match mesh_stats {
                Some(stats) => stats.mesh_all,
                None => mesh(eff.source(), None)?.mesh_all,
            };
            delta * m
        }
    };

    let shape = match spec.kind {
        SmootherKind::Spline { intervals } => {
            let reference = fit_spline(intervals, crate::spline::REFERENCE_BANDWIDTH)?;
            LocalShape::Spline(spline_payoff(&reference, 0.0, h)?)
        }
        SmootherKind::Density { kernel } => LocalShape::Density(density_payoff(0.0, h, kernel)?),
    };

    let b_all = crate::superhedge::dual_coefficients(eff)?;
    let last = eff.last_index();
    let beta = b_all[last];
    let b = b_all[..last].to_vec();

    Ok(SmoothCallCurve {
        eff: eff.clone(),
        spec: *spec,
        h,
        shape,
        b,
        beta,
    })
}

impl SmoothCallCurve {
    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn spec(&self) -> &SmootherSpec {
        &self.spec
    }

    pub fn efficient(&self) -> &EfficientCurve {
        &self.eff
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Dual coefficients at the positive efficient strikes.
    pub fn dual_coefficients(&self) -> &[f64] {
        &self.b
    }

    /// True when the bandwidth reaches below the first positive efficient
    /// strike; evaluations for `k < h` then price payoffs that no longer
    /// vanish at 0 and should be read with care.
    pub fn low_strike_warning(&self) -> bool {
        self.eff.strikes().get(1).is_some_and(|&j1| self.h >= j1)
    }

    /// The smooth CALL price at strike `k`.
    pub fn value(&self, k: f64) -> f64 {
        let j = self.eff.strikes();
        let mut acc = self.beta;
        for (i, &bi) in self.b.iter().enumerate() {
            acc += bi * self.shape.value(j[i + 1] - k);
        }
        acc
    }

    /// First derivative in the strike.
    pub fn derivative(&self, k: f64) -> f64 {
        let j = self.eff.strikes();
        let mut acc = 0.0;
        for (i, &bi) in self.b.iter().enumerate() {
            acc -= bi * self.shape.slope(j[i + 1] - k);
        }
        acc
    }

    /// Second derivative in the strike: the implied density candidate.
    pub fn second_derivative(&self, k: f64) -> f64 {
        let j = self.eff.strikes();
        let mut acc = 0.0;
        for (i, &bi) in self.b.iter().enumerate() {
            acc += bi * self.shape.curvature(j[i + 1] - k);
        }
        acc
    }
}

/// Adaptive Simpson quadrature with an absolute tolerance.
pub(crate) fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            return left + right + err / 15.0;
        }
        rec(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1)
            + rec(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1)
    }
    if a >= b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(a, fa, b, fb, fm);
    rec(f, a, fa, b, fb, fm, whole, tol, 48)
}

#[derive(Debug, Clone)]
enum SurvivalRepr {
    Step(StepSurvival),
    Smooth {
        shape: LocalShape,
        b: Vec<f64>,
        centers: Vec<f64>,
        h: f64,
    },
    /// Piecewise-linear survival through `(xs, values)`, constant at
    /// `values[0]` to the left, 0 beyond the last point.
    PiecewiseLinear { xs: Vec<f64>, values: Vec<f64> },
}

/// The measure implicit in a CALL function: `q(t) = beta + int_t^inf nu(x>z) dz`.
#[derive(Debug, Clone)]
pub struct ImpliedMeasure {
    pub beta: f64,
    /// Window carrying the informative mass: first and last positive
    /// efficient strike for estimator-backed measures.
    pub support_hint: (f64, f64),
    repr: SurvivalRepr,
    quad_scale: f64,
}

/// Extract the implied measure from a smooth CALL curve: survival is the
/// negated strike derivative and the density its derivative in turn.
pub fn implied_survival(curve: &SmoothCallCurve) -> ImpliedMeasure {
    let j = curve.eff.strikes();
    let centers = j[1..].to_vec();
    let support = (
        centers.first().copied().unwrap_or(0.0),
        centers.last().copied().unwrap_or(0.0),
    );
    let quad_scale = curve.eff.prices()[0];
    ImpliedMeasure {
        beta: curve.beta,
        support_hint: support,
        repr: SurvivalRepr::Smooth {
            shape: curve.shape.clone(),
            b: curve.b.clone(),
            centers,
            h: curve.h,
        },
        quad_scale,
    }
}

impl ImpliedMeasure {
    /// Wrap the step measure of an efficient curve.
    pub fn from_step(nu: StepSurvival, beta: f64) -> Self {
        let bounds = &nu.bounds;
        let support = (bounds.get(1).copied().unwrap_or(0.0), *bounds.last().unwrap());
        let quad_scale = beta + nu.integrate_tail(0.0);
        ImpliedMeasure {
            beta,
            support_hint: support,
            repr: SurvivalRepr::Step(nu),
            quad_scale,
        }
    }

    /// A measure with piecewise-linear survival (constant density between
    /// nodes); used for synthetic inputs.
    pub fn from_piecewise_linear(xs: Vec<f64>, values: Vec<f64>, beta: f64) -> Result<Self> {
        if xs.len() != values.len() || xs.len() < 2 {
            return Err(Error::validation("survival", "need matching lists of length >= 2"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("survival", "abscissae must increase"));
        }
        if values.windows(2).any(|w| w[1] > w[0] + 1e-12) || values.iter().any(|&v| v < 0.0) {
            return Err(Error::validation("survival", "values must be non-negative and non-increasing"));
        }
        let support = (xs[0], *xs.last().unwrap());
        let quad_scale = (values[0] * (xs[xs.len() - 1] - xs[0]) + beta).max(1.0);
        Ok(ImpliedMeasure {
            beta,
            support_hint: support,
            repr: SurvivalRepr::PiecewiseLinear { xs, values },
            quad_scale,
        })
    }

    /// `nu(x > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        match &self.repr {
            SurvivalRepr::Step(nu) => nu.survival(t),
            SurvivalRepr::Smooth {
                shape, b, centers, ..
            } => b
                .iter()
                .zip(centers)
                .map(|(bi, &ji)| bi * shape.slope(ji - t))
                .sum(),
            SurvivalRepr::PiecewiseLinear { xs, values } => {
                let last = *xs.last().unwrap();
                if t >= last {
                    return 0.0;
                }
                if t <= xs[0] {
                    return values[0];
                }
                let i = xs.partition_point(|&x| x <= t) - 1;
                let w = (t - xs[i]) / (xs[i + 1] - xs[i]);
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }

    /// Density of the measure where it exists.
    pub fn density(&self, x: f64) -> Option<f64> {
        match &self.repr {
            SurvivalRepr::Step(_) => None,
            SurvivalRepr::Smooth {
                shape, b, centers, ..
            } => Some(
                b.iter()
                    .zip(centers)
                    .map(|(bi, &ji)| bi * shape.curvature(ji - x))
                    .sum(),
            ),
            SurvivalRepr::PiecewiseLinear { xs, values } => {
                if x < xs[0] || x >= *xs.last().unwrap() {
                    return Some(0.0);
                }
                let i = xs.partition_point(|&v| v <= x) - 1;
                Some((values[i] - values[i + 1]) / (xs[i + 1] - xs[i]))
            }
        }
    }

    fn upper_limit(&self) -> f64 {
        match &self.repr {
            SurvivalRepr::Step(nu) => *nu.bounds.last().unwrap(),
            SurvivalRepr::Smooth {
                centers, shape, h, ..
            } => centers.last().copied().unwrap_or(0.0) + shape.tail_halfwidth(*h),
            SurvivalRepr::PiecewiseLinear { xs, .. } => *xs.last().unwrap(),
        }
    }

    /// `int_a^b nu(x > z) dz`, exact for step and piecewise-linear
    /// representations, adaptive quadrature otherwise.
    fn survival_integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match &self.repr {
            SurvivalRepr::Step(nu) => nu.integrate_tail(a) - nu.integrate_tail(b),
            SurvivalRepr::Smooth { .. } => {
                let tol = 1e-9 * self.quad_scale;
                adaptive_simpson(&|z| self.survival(z), a, b, tol)
            }
            SurvivalRepr::PiecewiseLinear { xs, .. } => {
                // trapezoid over each linear piece, exact
                let mut nodes: Vec<f64> = vec![a];
                nodes.extend(xs.iter().copied().filter(|&x| x > a && x < b));
                nodes.push(b);
                nodes
                    .windows(2)
                    .map(|w| 0.5 * (self.survival(w[0]) + self.survival(w[1])) * (w[1] - w[0]))
                    .sum()
            }
        }
    }

    /// Price reconstruction `beta + int_t^inf nu(x > z) dz`.
    pub fn reconstruct_price(&self, t: f64) -> f64 {
        let hi = self.upper_limit();
        self.beta + self.survival_integral(t, hi)
    }

    /// `int_{(a, b]} x dnu(x)` by parts, with the same quadrature rules.
    fn partial_mean(&self, a: f64, b: f64) -> f64 {
        match &self.repr {
            SurvivalRepr::Step(nu) => nu
                .atoms()
                .iter()
                .filter(|(x, _)| *x > a && *x <= b)
                .map(|(x, m)| x * m)
                .sum(),
            _ => a * self.survival(a) - b * self.survival(b) + self.survival_integral(a, b),
        }
    }
}

/// Free-function form of [`ImpliedMeasure::reconstruct_price`].
pub fn reconstruct_price(measure: &ImpliedMeasure, t: f64) -> f64 {
    measure.reconstruct_price(t)
}

/// Value-at-risk and conditional value-at-risk per confidence level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskReport {
    pub levels: Vec<f64>,
    pub var: Vec<f64>,
    pub cvar: Vec<f64>,
    pub position_price: f64,
}

/// Tail risk of a long position priced at `position_price` under the
/// measure conditioned on `window` (default: the support hint).
///
/// For each level `a`: the quantile `Q_a` of the conditional distribution
/// (left-continuous inverse; atoms by the step-jump convention),
/// `VaR = position_price - Q_a` and `CVaR = position_price - E[X | X <= Q_a]`.
pub fn var_cvar(
    measure: &ImpliedMeasure,
    position_price: f64,
    levels: &[f64],
    window: Option<(f64, f64)>,
) -> Result<RiskReport> {
    if !(position_price > 0.0) {
        return Err(Error::validation(
            "position_price",
            format!("must be positive, got {position_price}"),
        ));
    }
    if levels.is_empty() {
        return Err(Error::validation("levels", "need at least one level"));
    }
    for &a in levels {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::validation(
                "levels",
                format!("levels must lie in (0, 1], got {a}"),
            ));
        }
    }
    let (lo, hi) = window.unwrap_or(measure.support_hint);
    if !(hi > lo) {
        return Err(Error::validation("window", "upper edge must exceed the lower"));
    }
    let s_lo = measure.survival(lo);
    let s_hi = measure.survival(hi);
    // For a step measure the survival steps are left-continuous, so the
    // window mass comes from the atoms in (lo, hi] directly.
    let mass = match &measure.repr {
        SurvivalRepr::Step(nu) => nu
            .atoms()
            .iter()
            .filter(|(x, _)| *x > lo && *x <= hi)
            .map(|(_, m)| m)
            .sum(),
        _ => s_lo - s_hi,
    };
    if mass <= 1e-14 * measure.quad_scale.max(1.0) {
        return Err(Error::DegenerateMeasure);
    }

    let mut var = Vec::with_capacity(levels.len());
    let mut cvar = Vec::with_capacity(levels.len());
    for &alpha in levels {
        let (q, tail_mass) = match &measure.repr {
            SurvivalRepr::Step(nu) => {
                let atoms: Vec<(f64, f64)> = nu
                    .atoms()
                    .into_iter()
                    .filter(|(x, _)| *x > lo && *x <= hi)
                    .collect();
                let mut cum = 0.0;
                let mut q = hi;
                for &(x, m) in &atoms {
                    cum += m;
                    if cum >= alpha * mass - 1e-15 * mass {
                        q = x;
                        break;
                    }
                }
                if cum < alpha * mass - 1e-15 * mass {
                    q = hi;
                }
                let included: f64 = atoms
                    .iter()
                    .filter(|(x, _)| *x <= q)
                    .map(|(_, m)| m)
                    .sum();
                (q, included)
            }
            _ => {
                // survival is continuous: solve S(q) = S(lo) - alpha * mass
                let target = s_lo - alpha * mass;
                let (mut a, mut b) = (lo, hi);
                for _ in 0..128 {
                    let m = 0.5 * (a + b);
                    if measure.survival(m) > target {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let q = 0.5 * (a + b);
                (q, alpha * mass)
            }
        };
        let conditional_mean = measure.partial_mean(lo, q) / tail_mass;
        var.push(position_price - q);
        cvar.push(position_price - conditional_mean);
    }

    Ok(RiskReport {
        levels: levels.to_vec(),
        var,
        cvar,
        position_price,
    })
}
