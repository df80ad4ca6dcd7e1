//! Black–Scholes pricing, survival function and implied volatility.

use crate::error::{Error, Result};

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal distribution function, accurate to machine precision.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Black–Scholes CALL price with continuous rate `rate` and maturity `tau` in years.
///
/// Degenerate inputs fall back to the deterministic limit
/// `max(spot - strike*exp(-rate*tau), 0)`.
pub fn bs_call(spot: f64, strike: f64, rate: f64, tau: f64, vol: f64) -> f64 {
    let df = (-rate * tau).exp();
    if strike <= 0.0 {
        return spot;
    }
    if vol <= 0.0 || tau <= 0.0 || spot <= 0.0 {
        return (spot - strike * df).max(0.0);
    }
    let sig = vol * tau.sqrt();
    let d1 = ((spot / strike).ln() + (rate + 0.5 * vol * vol) * tau) / sig;
    let d2 = d1 - sig;
    spot * norm_cdf(d1) - strike * df * norm_cdf(d2)
}

/// Discounted risk-neutral survival `P(X > strike)` in the Black–Scholes model,
/// i.e. `exp(-rate*tau) * Phi(d2)`.
pub fn bs_survival(spot: f64, strike: f64, rate: f64, tau: f64, vol: f64) -> f64 {
    let df = (-rate * tau).exp();
    if strike <= 0.0 {
        return df;
    }
    if vol <= 0.0 || tau <= 0.0 {
        return if spot > strike * df { df } else { 0.0 };
    }
    let sig = vol * tau.sqrt();
    let d2 = ((spot / strike).ln() + (rate - 0.5 * vol * vol) * tau) / sig;
    df * norm_cdf(d2)
}

const VOL_LO: f64 = 1e-12;
const VOL_HI: f64 = 10.0;
const VOL_TOL: f64 = 1e-10;

/// Volatility implicit in a CALL price, by safeguarded Newton/bisection.
///
/// The price must lie strictly inside the no-arbitrage bounds
/// `(spot - strike*exp(-rate*tau))^+ < price < spot`.
pub fn implied_vol(price: f64, spot: f64, strike: f64, rate: f64, tau: f64) -> Result<f64> {
    let lower = (spot - strike * (-rate * tau).exp()).max(0.0);
    if price <= lower {
        return Err(Error::NoSolution(format!(
            "price {price} at or below the lower bound {lower}"
        )));
    }
    if price >= spot {
        return Err(Error::NoSolution(format!(
            "price {price} at or above the upper bound {spot}"
        )));
    }

    let mut lo = VOL_LO;
    let mut hi = VOL_HI;
    // Newton from a mid-range start, falling back to bisection when a step
    // leaves the bracket or vega degenerates.
    let mut v = 0.5;
    for _ in 0..200 {
        let f = bs_call(spot, strike, rate, tau, v) - price;
        if f.abs() < 1e-14 * spot {
            return Ok(v);
        }
        if f > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let sig = v * tau.sqrt();
        let d1 = ((spot / strike).ln() + (rate + 0.5 * v * v) * tau) / sig;
        let vega = spot * norm_pdf(d1) * tau.sqrt();
        let newton = v - f / vega;
        v = if vega > 1e-12 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < VOL_TOL {
            return Ok(0.5 * (lo + hi));
        }
    }
    Ok(0.5 * (lo + hi))
}
