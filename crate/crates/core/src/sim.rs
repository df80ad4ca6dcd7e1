//! Simulation experiments: a Black–Scholes-with-smile market, uniform
//! microstructure noise, a seeded Monte Carlo harness with per-strike
//! summaries, and a log-normal-mixture density-extraction experiment.

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bs::{bs_call, bs_survival, implied_vol, norm_cdf, norm_pdf};
use crate::efficient::efficient_set;
use crate::error::{Error, Result};
use crate::measure::{smooth_call_curve, Bandwidth, SmootherKind, SmootherSpec};
use crate::quotes::{mesh, moneyness_class, Moneyness, MoneynessEdges, QuoteCurve};

/// Ground-truth market: Black–Scholes prices under a strike-dependent
/// volatility, on a fixed strike grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmileModel {
    pub spot: f64,
    pub rate: f64,
    pub tau: f64,
    pub dividend: f64,
    pub strikes: Vec<f64>,
    /// Volatility at `vol_anchor`.
    pub vol_base: f64,
    /// Linear change of volatility per unit of strike.
    pub vol_slope: f64,
    pub vol_anchor: f64,
}

impl Default for SmileModel {
    fn default() -> Self {
        SmileModel {
            spot: 1365.0,
            rate: 0.04,
            tau: 0.25,
            dividend: 0.0,
            strikes: (0..25).map(|i| 1000.0 + 28.0 * i as f64).collect(),
            vol_base: 0.40,
            vol_slope: -0.20 / 700.0,
            vol_anchor: 1000.0,
        }
    }
}

impl SmileModel {
    /// Same market with an equally spaced strike grid of the given step.
    pub fn with_grid(lo: f64, hi: f64, step: f64) -> Self {
        let n = ((hi - lo) / step).round() as usize;
        SmileModel {
            strikes: (0..=n).map(|i| lo + step * i as f64).collect(),
            ..Default::default()
        }
    }

    pub fn vol(&self, strike: f64) -> f64 {
        self.vol_base + self.vol_slope * (strike - self.vol_anchor)
    }

    /// Model CALL price; the strike-0 price is the underlying itself.
    pub fn price(&self, strike: f64) -> f64 {
        if strike == 0.0 {
            return self.spot;
        }
        bs_call(self.spot, strike, self.rate, self.tau, self.vol(strike))
    }

    /// True survival `nu(x > k)`, including the smile term:
    /// `-dC/dk = e^{-r tau} Phi(d2) - vega * dvol/dk`.
    pub fn survival(&self, strike: f64) -> f64 {
        let base = bs_survival(self.spot, strike, self.rate, self.tau, self.vol(strike));
        let v = self.vol(strike);
        let sig = v * self.tau.sqrt();
        let d1 = ((self.spot / strike).ln() + (self.rate + 0.5 * v * v) * self.tau) / sig;
        let vega = self.spot * norm_pdf(d1) * self.tau.sqrt();
        base - vega * self.vol_slope
    }

    /// True risk-neutral density, as the second strike derivative of the
    /// price (central differences; the price is smooth).
    pub fn density(&self, strike: f64) -> f64 {
        let e = 0.5;
        (self.price(strike - e) - 2.0 * self.price(strike) + self.price(strike + e)) / (e * e)
    }

    fn synthetic_maturity(&self) -> NaiveDate {
        let days = (self.tau * 365.25).round() as i64;
        NaiveDate::from_ymd_opt(2000, 1, 1).unwrap() + chrono::Duration::days(days)
    }
}

/// Illiquidity multiplier applied to the half-spread.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum Illiquidity {
    /// `1 + mult * |e^{r tau} k / spot - 1|`: 1 at the forward money,
    /// growing into both wings.
    ForwardDistance { mult: f64 },
    Constant(f64),
}

/// Uniform ask noise sized by spread and illiquidity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Basis spread as a fraction of the option price.
    pub spread_rate: f64,
    pub spread_floor: f64,
    pub spread_cap: f64,
    pub illiquidity: Illiquidity,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            spread_rate: 0.05,
            spread_floor: 0.50,
            spread_cap: 3.00,
            illiquidity: Illiquidity::ForwardDistance { mult: 5.0 },
        }
    }
}

impl NoiseModel {
    /// Uniform noise with a fixed radius at every strike.
    pub fn constant_radius(radius: f64) -> Self {
        NoiseModel {
            spread_rate: 0.0,
            spread_floor: 2.0 * radius,
            spread_cap: 2.0 * radius,
            illiquidity: Illiquidity::Constant(1.0),
        }
    }

    pub fn illiquidity_factor(&self, model: &SmileModel, strike: f64) -> f64 {
        match self.illiquidity {
            Illiquidity::ForwardDistance { mult } => {
                1.0 + mult * ((model.rate * model.tau).exp() * strike / model.spot - 1.0).abs()
            }
            Illiquidity::Constant(c) => c,
        }
    }

    pub fn spread(&self, price: f64) -> f64 {
        (self.spread_rate * price).clamp(self.spread_floor, self.spread_cap)
    }

    /// Half-width of the uniform noise at a strike.
    pub fn radius(&self, model: &SmileModel, strike: f64, price: f64) -> f64 {
        self.illiquidity_factor(model, strike) * self.spread(price) / 2.0
    }
}

/// Floor applied to simulated asks; noise can exceed far-OTM prices.
const MIN_SIMULATED_ASK: f64 = 0.01;

fn noisy_curve(model: &SmileModel, noise: &NoiseModel, rng: &mut ChaCha8Rng) -> QuoteCurve {
    let mut strikes = Vec::with_capacity(model.strikes.len() + 1);
    let mut asks = Vec::with_capacity(model.strikes.len() + 1);
    strikes.push(0.0);
    asks.push(model.spot);
    for &k in &model.strikes {
        let price = model.price(k);
        let r = noise.radius(model, k, price);
        let eps = if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        strikes.push(k);
        asks.push((price + eps).max(MIN_SIMULATED_ASK));
    }
    QuoteCurve::new(
        strikes,
        asks,
        model.synthetic_maturity(),
        None,
        Some(model.spot),
    )
    .expect("simulated curve is valid")
}

fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Draw one noisy quote curve; deterministic in `(model, noise, seed)`.
pub fn simulate_curve(model: &SmileModel, noise: &NoiseModel, seed: u64) -> QuoteCurve {
    noisy_curve(model, noise, &mut stream_rng(seed, 0))
}

/// Monte Carlo parameters: one smoother family, several bandwidth
/// multipliers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McParams {
    pub kind: SmootherKind,
    pub deltas: Vec<f64>,
    pub edges: MoneynessEdges,
    /// When set, per-simulation implied densities are averaged on this grid
    /// and compared against the model density.
    pub density_grid: Option<DensityGrid>,
}

impl Default for McParams {
    fn default() -> Self {
        McParams {
            kind: SmootherKind::default(),
            deltas: vec![5.0, 10.0],
            edges: MoneynessEdges::default(),
            density_grid: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DensityGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl DensityGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step).round() as usize;
        (0..=n).map(|i| self.lo + self.step * i as f64).collect()
    }
}

/// Per-strike summaries of one simulated quantity across simulations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantityStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub q025: Vec<f64>,
    pub q050: Vec<f64>,
    pub q950: Vec<f64>,
    pub q975: Vec<f64>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < n {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[n - 1]
    }
}

fn summarize(columns: &[Vec<f64>]) -> QuantityStats {
    let mut out = QuantityStats {
        mean: Vec::new(),
        sd: Vec::new(),
        min: Vec::new(),
        max: Vec::new(),
        q025: Vec::new(),
        q050: Vec::new(),
        q950: Vec::new(),
        q975: Vec::new(),
    };
    for col in columns {
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        out.mean.push(mean);
        out.sd.push(var.sqrt());
        out.min.push(sorted[0]);
        out.max.push(*sorted.last().unwrap());
        out.q025.push(quantile(&sorted, 0.025));
        out.q050.push(quantile(&sorted, 0.05));
        out.q950.push(quantile(&sorted, 0.95));
        out.q975.push(quantile(&sorted, 0.975));
    }
    out
}

/// Share of inefficient quotes per moneyness bucket, in percent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InefficiencyReport {
    pub bucket_labels: Vec<String>,
    pub bucket_counts: Vec<usize>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub total_mean: f64,
    pub total_min: f64,
    pub total_max: f64,
    /// Fraction of simulations whose total rate reaches 40% (the grid
    /// granularity is 4 points per strike, so the threshold is inclusive).
    pub share_above_40pct: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityReport {
    pub xs: Vec<f64>,
    pub average: Vec<f64>,
    pub model: Vec<f64>,
    /// Trapezoid integral of the squared gap between the across-simulation
    /// average density and the model density.
    pub mise: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaReport {
    pub delta: f64,
    pub bandwidth: f64,
    pub price: QuantityStats,
    pub implied_vol: QuantityStats,
    pub survival: QuantityStats,
    /// Mean squared pricing error over all positive strikes.
    pub mse: f64,
    /// Mean squared pricing error excluding the lowest strike.
    pub mse_compat: f64,
    /// Implied-vol evaluations clamped at a no-arbitrage bound.
    pub vol_clamped: usize,
    pub density: Option<DensityReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MCReport {
    pub sims: usize,
    pub master_seed: u64,
    pub strikes: Vec<f64>,
    pub true_prices: Vec<f64>,
    pub inefficiency: InefficiencyReport,
    pub per_delta: Vec<DeltaReport>,
}

struct SimOutcome {
    inefficient: Vec<bool>,
    // per delta, per strike
    prices: Vec<Vec<f64>>,
    vols: Vec<Vec<f64>>,
    vol_clamps: Vec<usize>,
    survivals: Vec<Vec<f64>>,
    densities: Option<Vec<Vec<f64>>>,
}

fn implied_vol_clamped(price: f64, spot: f64, strike: f64, rate: f64, tau: f64) -> (f64, bool) {
    let lower = (spot - strike * (-rate * tau).exp()).max(0.0);
    if price <= lower + 1e-12 * spot {
        return (0.0, true);
    }
    if price >= spot {
        let v = implied_vol(spot * (1.0 - 1e-12), spot, strike, rate, tau).unwrap_or(10.0);
        return (v, true);
    }
    (implied_vol(price, spot, strike, rate, tau).unwrap_or(0.0), false)
}

/// Run the Monte Carlo study: draw noisy curves, rebuild the estimator on
/// each, and aggregate per-strike summaries, inefficiency rates, pricing
/// MSE and (optionally) average implied densities.
///
/// Per-simulation randomness comes from independent counter-indexed streams
/// of the master seed, so the report is bitwise reproducible regardless of
/// the parallel schedule.
pub fn run_mc(
    model: &SmileModel,
    noise: &NoiseModel,
    params: &McParams,
    sims: usize,
    master_seed: u64,
) -> Result<MCReport> {
    if sims == 0 {
        return Err(Error::validation("sims", "need at least one simulation"));
    }
    for &d in &params.deltas {
        if !(d > 0.0) {
            return Err(Error::validation("delta", format!("must be positive, got {d}")));
        }
    }

    let strikes = model.strikes.clone();
    let true_prices: Vec<f64> = strikes.iter().map(|&k| model.price(k)).collect();
    let grid_curve = simulate_curve(model, &NoiseModel::constant_radius(0.0), 0);
    let mesh_stats = mesh(&grid_curve, None)?;

    let specs: Vec<SmootherSpec> = params
        .deltas
        .iter()
        .map(|&d| SmootherSpec {
            kind: params.kind,
            bandwidth: Bandwidth::Delta(d),
        })
        .collect();
    // Fail early on an invalid smoother configuration.
    {
        let eff = efficient_set(&grid_curve)?;
        for spec in &specs {
            smooth_call_curve(&eff, spec, Some(&mesh_stats))?;
        }
    }

    let density_xs = params.density_grid.map(|g| g.points());

    let outcomes: Vec<Result<SimOutcome>> = (0..sims as u64)
        .into_par_iter()
        .map(|s| -> Result<SimOutcome> {
            let curve = noisy_curve(model, noise, &mut stream_rng(master_seed, s));
            let eff = efficient_set(&curve)?;
            let inefficient: Vec<bool> = strikes
                .iter()
                .map(|&k| !eff.strikes().contains(&k))
                .collect();

            let mut prices = Vec::with_capacity(specs.len());
            let mut vols = Vec::with_capacity(specs.len());
            let mut vol_clamps = Vec::with_capacity(specs.len());
            let mut survivals = Vec::with_capacity(specs.len());
            let mut densities = density_xs.as_ref().map(|_| Vec::with_capacity(specs.len()));
            for spec in &specs {
                let curve = smooth_call_curve(&eff, spec, Some(&mesh_stats))?;
                let p: Vec<f64> = strikes.iter().map(|&k| curve.value(k)).collect();
                let mut clamps = 0usize;
                let v: Vec<f64> = strikes
                    .iter()
                    .zip(&p)
                    .map(|(&k, &price)| {
                        let (vol, clamped) =
                            implied_vol_clamped(price, model.spot, k, model.rate, model.tau);
                        clamps += clamped as usize;
                        vol
                    })
                    .collect();
                let nu: Vec<f64> = strikes.iter().map(|&k| -curve.derivative(k)).collect();
                if let (Some(xs), Some(dens)) = (density_xs.as_ref(), densities.as_mut()) {
                    dens.push(xs.iter().map(|&x| curve.second_derivative(x)).collect());
                }
                prices.push(p);
                vols.push(v);
                vol_clamps.push(clamps);
                survivals.push(nu);
            }
            Ok(SimOutcome {
                inefficient,
                prices,
                vols,
                vol_clamps,
                survivals,
                densities,
            })
        })
        .collect();

    let mut sims_data = Vec::with_capacity(sims);
    for o in outcomes {
        sims_data.push(o?);
    }

    // moneyness buckets of the grid
    let buckets: Vec<Moneyness> = strikes
        .iter()
        .map(|&k| moneyness_class(model.spot, k, model.rate, model.tau, &params.edges))
        .collect();
    let bucket_counts: Vec<usize> = Moneyness::ALL
        .iter()
        .map(|m| buckets.iter().filter(|b| *b == m).count())
        .collect();

    let mut bucket_rates: Vec<Vec<f64>> = vec![Vec::with_capacity(sims); 5];
    let mut total_rates: Vec<f64> = Vec::with_capacity(sims);
    for sd in &sims_data {
        let mut per_bucket = [0usize; 5];
        let mut total = 0usize;
        for (i, &ineff) in sd.inefficient.iter().enumerate() {
            if ineff {
                let b = Moneyness::ALL.iter().position(|&m| m == buckets[i]).unwrap();
                per_bucket[b] += 1;
                total += 1;
            }
        }
        for (b, &cnt) in bucket_counts.iter().enumerate() {
            if cnt > 0 {
                bucket_rates[b].push(100.0 * per_bucket[b] as f64 / cnt as f64);
            }
        }
        total_rates.push(100.0 * total as f64 / strikes.len() as f64);
    }
    let fold_stats = |v: &[f64]| -> (f64, f64, f64) {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (mean, min, max)
    };
    let mut ineff = InefficiencyReport {
        bucket_labels: Moneyness::ALL.iter().map(|m| m.label().to_string()).collect(),
        bucket_counts: bucket_counts.clone(),
        mean: Vec::new(),
        min: Vec::new(),
        max: Vec::new(),
        total_mean: 0.0,
        total_min: 0.0,
        total_max: 0.0,
        share_above_40pct: 0.0,
    };
    for rates in &bucket_rates {
        if rates.is_empty() {
            ineff.mean.push(f64::NAN);
            ineff.min.push(f64::NAN);
            ineff.max.push(f64::NAN);
        } else {
            let (mean, min, max) = fold_stats(rates);
            ineff.mean.push(mean);
            ineff.min.push(min);
            ineff.max.push(max);
        }
    }
    let (tm, tl, th) = fold_stats(&total_rates);
    ineff.total_mean = tm;
    ineff.total_min = tl;
    ineff.total_max = th;
    ineff.share_above_40pct =
        total_rates.iter().filter(|&&r| r > 40.0).count() as f64 / sims as f64;

    let mut per_delta = Vec::with_capacity(specs.len());
    for (di, spec) in specs.iter().enumerate() {
        let columns = |pick: &dyn Fn(&SimOutcome) -> &Vec<f64>| -> Vec<Vec<f64>> {
            (0..strikes.len())
                .map(|ki| sims_data.iter().map(|sd| pick(sd)[ki]).collect())
                .collect()
        };
        let price_cols = columns(&|sd| &sd.prices[di]);
        let vol_cols = columns(&|sd| &sd.vols[di]);
        let surv_cols = columns(&|sd| &sd.survivals[di]);

        let mut sq = 0.0;
        let mut sq_compat = 0.0;
        for (ki, col) in price_cols.iter().enumerate() {
            let truth = true_prices[ki];
            let s: f64 = col.iter().map(|p| (p - truth) * (p - truth)).sum();
            sq += s;
            if ki > 0 {
                sq_compat += s;
            }
        }
        let mse = sq / (sims as f64 * strikes.len() as f64);
        let mse_compat = sq_compat / (sims as f64 * (strikes.len() - 1) as f64);

        let density = density_xs.as_ref().map(|xs| {
            let mut average = vec![0.0f64; xs.len()];
            for sd in &sims_data {
                let d = &sd.densities.as_ref().unwrap()[di];
                for (a, &v) in average.iter_mut().zip(d) {
                    *a += v;
                }
            }
            for a in average.iter_mut() {
                *a /= sims as f64;
            }
            let model_density: Vec<f64> = xs.iter().map(|&x| model.density(x)).collect();
            let step = params.density_grid.unwrap().step;
            let mise = trapezoid_sq_gap(&average, &model_density, step);
            DensityReport {
                xs: xs.clone(),
                average,
                model: model_density,
                mise,
            }
        });

        let bandwidth = match spec.bandwidth {
            Bandwidth::Delta(d) => d * mesh_stats.mesh_all,
            Bandwidth::Absolute(h) => h,
        };
        per_delta.push(DeltaReport {
            delta: params.deltas[di],
            bandwidth,
            price: summarize(&price_cols),
            implied_vol: summarize(&vol_cols),
            survival: summarize(&surv_cols),
            mse,
            mse_compat,
            vol_clamped: sims_data.iter().map(|sd| sd.vol_clamps[di]).sum(),
            density,
        });
    }

    Ok(MCReport {
        sims,
        master_seed,
        strikes,
        true_prices,
        inefficiency: ineff,
        per_delta,
    })
}

fn trapezoid_sq_gap(a: &[f64], b: &[f64], step: f64) -> f64 {
    let sq: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).collect();
    let mut acc = 0.0;
    for w in sq.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * step;
    }
    acc
}

/// Sup over `eval_points` of the empirical mean squared pricing error,
/// estimated over `sims` independent noisy curves.
pub fn empirical_sup_mse(
    model: &SmileModel,
    noise: &NoiseModel,
    spec: &SmootherSpec,
    eval_points: &[f64],
    sims: usize,
    master_seed: u64,
) -> Result<f64> {
    let grid_curve = simulate_curve(model, &NoiseModel::constant_radius(0.0), 0);
    let mesh_stats = mesh(&grid_curve, None)?;
    let truth: Vec<f64> = eval_points.iter().map(|&k| model.price(k)).collect();
    let sq_sums: Vec<Result<Vec<f64>>> = (0..sims as u64)
        .into_par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let curve = noisy_curve(model, noise, &mut stream_rng(master_seed, s));
            let eff = efficient_set(&curve)?;
            let sc = smooth_call_curve(&eff, spec, Some(&mesh_stats))?;
            Ok(eval_points
                .iter()
                .zip(&truth)
                .map(|(&k, &t)| {
                    let e = sc.value(k) - t;
                    e * e
                })
                .collect())
        })
        .collect();
    let mut acc = vec![0.0f64; eval_points.len()];
    for r in sq_sums {
        for (a, v) in acc.iter_mut().zip(r?) {
            *a += v;
        }
    }
    Ok(acc
        .into_iter()
        .map(|s| s / sims as f64)
        .fold(0.0, f64::max))
}

/// Risk-neutral log-normal mixture: exact CALL prices and density.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureModel {
    pub spot: f64,
    pub rate: f64,
    pub tau: f64,
    /// Instantaneous drift per component.
    pub drifts: Vec<f64>,
    pub vols: Vec<f64>,
    pub weights: Vec<f64>,
    pub strikes: Vec<f64>,
    /// Kernel bandwidth used for the density extraction.
    pub bandwidth: f64,
    /// Densities are conditioned (renormalized) on this interval.
    pub interval: (f64, f64),
}

impl Default for MixtureModel {
    fn default() -> Self {
        MixtureModel {
            spot: 1365.0,
            rate: 0.04,
            tau: 0.25,
            drifts: vec![0.027, 0.033, 0.049],
            vols: vec![0.3, 0.1, 0.4],
            weights: vec![0.2, 0.3, 0.5],
            strikes: (0..25).map(|i| 1000.0 + 28.0 * i as f64).collect(),
            bandwidth: 20.0,
            interval: (1050.0, 1650.0),
        }
    }
}

impl MixtureModel {
    pub fn validate(&self) -> Result<()> {
        if self.drifts.len() != self.vols.len() || self.drifts.len() != self.weights.len() {
            return Err(Error::validation("weights", "component lists must have equal length"));
        }
        if self.weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::validation("weights", "weights must be positive"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::validation("weights", format!("weights must sum to 1, got {total}")));
        }
        Ok(())
    }

    /// Discounted expected CALL payoff under the mixture.
    pub fn price(&self, strike: f64) -> f64 {
        let df = (-self.rate * self.tau).exp();
        if strike <= 0.0 {
            let fwd: f64 = self
                .weights
                .iter()
                .zip(&self.drifts)
                .map(|(a, mu)| a * (mu * self.tau).exp())
                .sum();
            return df * self.spot * fwd;
        }
        let mut acc = 0.0;
        for ((&a, &mu), &sig) in self.weights.iter().zip(&self.drifts).zip(&self.vols) {
            let s = sig * self.tau.sqrt();
            let d1 = ((self.spot / strike).ln() + (mu + 0.5 * sig * sig) * self.tau) / s;
            let d2 = d1 - s;
            acc += a * (self.spot * (mu * self.tau).exp() * norm_cdf(d1) - strike * norm_cdf(d2));
        }
        df * acc
    }

    /// Discounted mixture density at an underlying level.
    pub fn density(&self, x: f64) -> f64 {
        let df = (-self.rate * self.tau).exp();
        let mut acc = 0.0;
        for ((&a, &mu), &sig) in self.weights.iter().zip(&self.drifts).zip(&self.vols) {
            let s = sig * self.tau.sqrt();
            let m = self.spot.ln() + (mu - 0.5 * sig * sig) * self.tau;
            acc += a * norm_pdf((x.ln() - m) / s) / (x * s);
        }
        df * acc
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureOutcome {
    pub strikes: Vec<f64>,
    pub prices: Vec<f64>,
    pub xs: Vec<f64>,
    /// Conditional extracted density on the interval.
    pub extracted: Vec<f64>,
    /// Conditional model density on the interval.
    pub model: Vec<f64>,
    pub mise: f64,
}

/// Price the mixture exactly on the strike grid, extract the implied
/// density with the normal kernel, and compare conditional densities on
/// the model interval.
pub fn mixture_experiment(model: &MixtureModel, grid_step: f64) -> Result<MixtureOutcome> {
    model.validate()?;
    if !(grid_step > 0.0) {
        return Err(Error::validation("grid_step", "must be positive"));
    }

    let mut strikes = vec![0.0];
    strikes.extend(&model.strikes);
    let prices: Vec<f64> = strikes.iter().map(|&k| model.price(k)).collect();
    let curve = QuoteCurve::new(
        strikes.clone(),
        prices.clone(),
        NaiveDate::from_ymd_opt(2000, 4, 1).unwrap(),
        None,
        Some(model.spot),
    )?;
    let eff = efficient_set(&curve)?;
    let spec = SmootherSpec {
        kind: SmootherKind::Density {
            kernel: crate::density::KernelId::Normal,
        },
        bandwidth: Bandwidth::Absolute(model.bandwidth),
    };
    let smooth = smooth_call_curve(&eff, &spec, None)?;

    let (lo, hi) = model.interval;
    let n = ((hi - lo) / grid_step).round() as usize;
    let xs: Vec<f64> = (0..=n).map(|i| lo + grid_step * i as f64).collect();
    let extracted_raw: Vec<f64> = xs.iter().map(|&x| smooth.second_derivative(x)).collect();
    let model_raw: Vec<f64> = xs.iter().map(|&x| model.density(x)).collect();

    let normalize = |v: &[f64]| -> Vec<f64> {
        let mut mass = 0.0;
        for w in v.windows(2) {
            mass += 0.5 * (w[0] + w[1]) * grid_step;
        }
        v.iter().map(|x| x / mass).collect()
    };
    let extracted = normalize(&extracted_raw);
    let model_cond = normalize(&model_raw);
    let mise = trapezoid_sq_gap(&extracted, &model_cond, grid_step);

    Ok(MixtureOutcome {
        strikes,
        prices,
        xs,
        extracted,
        model: model_cond,
        mise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn illiquidity_is_one_at_the_forward_money() {
        let model = SmileModel::default();
        let noise = NoiseModel::default();
        let k = model.spot * (-model.rate * model.tau).exp();
        assert_abs_diff_eq!(noise.illiquidity_factor(&model, k), 1.0, epsilon = 1e-12);
        // deepest-ITM end of the grid carries the largest multiplier
        let worst = noise.illiquidity_factor(&model, 1000.0);
        assert!((worst - 2.3).abs() < 0.01, "got {worst}");
    }

    #[test]
    fn spread_floor_and_cap_bind() {
        let noise = NoiseModel::default();
        assert_eq!(noise.spread(378.0), 3.0);
        assert_eq!(noise.spread(0.9), 0.5);
        assert_abs_diff_eq!(noise.spread(20.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_radius_noise_reproduces_the_model() {
        let model = SmileModel::default();
        let curve = simulate_curve(&model, &NoiseModel::constant_radius(0.0), 7);
        for (k, a) in curve.strikes().iter().zip(curve.asks()).skip(1) {
            assert_eq!(*a, model.price(*k));
        }
        assert_eq!(curve.spot(), model.spot);
    }

    #[test]
    fn simulation_is_deterministic_in_the_seed() {
        let model = SmileModel::default();
        let noise = NoiseModel::default();
        let a = simulate_curve(&model, &noise, 42);
        let b = simulate_curve(&model, &noise, 42);
        assert_eq!(a.asks(), b.asks());
        let c = simulate_curve(&model, &noise, 43);
        assert_ne!(a.asks(), c.asks());
    }

    #[test]
    fn noise_stays_within_the_radius() {
        let model = SmileModel::default();
        let noise = NoiseModel::default();
        for seed in 0..20 {
            let curve = simulate_curve(&model, &noise, seed);
            for (k, a) in curve.strikes().iter().zip(curve.asks()).skip(1) {
                let p = model.price(*k);
                let r = noise.radius(&model, *k, p);
                assert!((a - p).abs() <= r + 1e-12, "strike {k}: |{a} - {p}| > {r}");
            }
        }
    }

    #[test]
    fn single_sim_report_matches_the_pipeline() {
        let model = SmileModel::default();
        let noise = NoiseModel::default();
        let params = McParams {
            deltas: vec![5.0],
            ..Default::default()
        };
        let report = run_mc(&model, &noise, &params, 1, 99).unwrap();

        let curve = simulate_curve(&model, &noise, 99);
        let eff = efficient_set(&curve).unwrap();
        let stats = mesh(&curve, None).unwrap();
        let spec = SmootherSpec {
            kind: SmootherKind::default(),
            bandwidth: Bandwidth::Delta(5.0),
        };
        let sc = smooth_call_curve(&eff, &spec, Some(&stats)).unwrap();
        for (i, &k) in model.strikes.iter().enumerate() {
            assert_eq!(report.per_delta[0].price.mean[i], sc.value(k));
            assert_eq!(report.per_delta[0].price.min[i], report.per_delta[0].price.max[i]);
        }
    }

    #[test]
    fn mc_report_is_reproducible_and_bands_nest() {
        let model = SmileModel::default();
        let noise = NoiseModel::default();
        let params = McParams {
            deltas: vec![5.0],
            ..Default::default()
        };
        let a = run_mc(&model, &noise, &params, 64, 7).unwrap();
        let b = run_mc(&model, &noise, &params, 64, 7).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let d = &a.per_delta[0];
        for i in 0..a.strikes.len() {
            assert!(d.price.min[i] <= d.price.q025[i]);
            assert!(d.price.q025[i] <= d.price.q050[i]);
            assert!(d.price.q050[i] <= d.price.q950[i]);
            assert!(d.price.q950[i] <= d.price.q975[i]);
            assert!(d.price.q975[i] <= d.price.max[i]);
        }
        assert!(a.inefficiency.total_mean >= 0.0 && a.inefficiency.total_mean <= 100.0);
    }

    #[test]
    fn deterministic_gaps_shrink_with_delta() {
        // Noiseless quotes: the estimator dominates the truth and tightens
        // as the bandwidth falls.
        let model = SmileModel::default();
        let curve = simulate_curve(&model, &NoiseModel::constant_radius(0.0), 0);
        let eff = efficient_set(&curve).unwrap();
        let stats = mesh(&curve, None).unwrap();
        let build = |delta: f64| {
            let spec = SmootherSpec {
                kind: SmootherKind::default(),
                bandwidth: Bandwidth::Delta(delta),
            };
            smooth_call_curve(&eff, &spec, Some(&stats)).unwrap()
        };
        let (c2, c5, c10) = (build(2.0), build(5.0), build(10.0));
        let mut sup_nu = [0.0f64; 3];
        for &k in &model.strikes {
            let truth = model.price(k);
            let g2 = c2.value(k) - truth;
            let g5 = c5.value(k) - truth;
            let g10 = c10.value(k) - truth;
            assert!(g2 >= -1e-9, "estimator below truth at {k}");
            assert!(g2 <= g5 + 1e-9 && g5 <= g10 + 1e-9);

            let v = |c: &crate::measure::SmoothCallCurve| {
                implied_vol_clamped(c.value(k), model.spot, k, model.rate, model.tau).0
            };
            let truth_vol = model.vol(k);
            let (v2, v5, v10) = (v(&c2), v(&c5), v(&c10));
            assert!(v2 - truth_vol >= -1e-7);
            assert!(v2 <= v5 + 1e-7 && v5 <= v10 + 1e-7);

            for (i, c) in [&c2, &c5, &c10].into_iter().enumerate() {
                let gap = (-c.derivative(k) - model.survival(k)).abs();
                assert!(gap.is_finite());
                // Away from the first strike: the chord from strike 0 puts
                // an irreducible kink there that no bandwidth removes.
                if (1300.0..=1600.0).contains(&k) {
                    sup_nu[i] = sup_nu[i].max(gap);
                }
            }
        }
        assert!(
            sup_nu[0] <= sup_nu[1] + 1e-9 && sup_nu[1] <= sup_nu[2] + 1e-9,
            "interior survival gap grew as delta fell: {sup_nu:?}"
        );
    }

    #[test]
    fn mixture_prices_are_convex_and_decreasing() {
        let model = MixtureModel::default();
        let p: Vec<f64> = model.strikes.iter().map(|&k| model.price(k)).collect();
        for w in p.windows(2) {
            assert!(w[1] < w[0]);
        }
        for w in p.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] > 0.0);
        }
        // every exact quote is efficient
        let out = mixture_experiment(&model, 1.0).unwrap();
        assert_eq!(out.strikes.len(), 26);
    }

    #[test]
    fn degenerate_mixture_extraction_sharpens_with_bandwidth() {
        let single = MixtureModel {
            drifts: vec![0.04],
            vols: vec![0.2],
            weights: vec![1.0],
            ..Default::default()
        };
        let wide = mixture_experiment(
            &MixtureModel {
                bandwidth: 40.0,
                ..single.clone()
            },
            1.0,
        )
        .unwrap();
        let tight = mixture_experiment(
            &MixtureModel {
                bandwidth: 20.0,
                ..single
            },
            1.0,
        )
        .unwrap();
        assert!(tight.mise < wide.mise, "{} !< {}", tight.mise, wide.mise);
    }

    #[test]
    fn mixture_validation_rejects_bad_weights() {
        let bad = MixtureModel {
            weights: vec![0.5, 0.2, 0.2],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn smile_price_range_matches_the_market_setup() {
        let model = SmileModel::default();
        let lo = model.price(1000.0);
        let hi = model.price(1672.0);
        assert!((lo - 378.0).abs() < 3.0);
        assert!((0.5..2.0).contains(&hi));
        assert_abs_diff_eq!(model.vol(1000.0), 0.40, epsilon = 1e-12);
        assert_abs_diff_eq!(model.vol(1700.0), 0.20, epsilon = 1e-12);
    }
}
