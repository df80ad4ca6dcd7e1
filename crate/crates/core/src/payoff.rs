//! Convex payoffs: non-negative convex functions of the underlying with
//! value 0 at 0 and a finite asymptotic slope. These are the claims the
//! superhedging functional can price.

/// An evaluable convex payoff with first and second derivatives.
pub trait ConvexPayoff {
    /// Payoff value at underlying level `x >= 0`.
    fn value(&self, x: f64) -> f64;

    /// First derivative. Non-decreasing where defined.
    fn deriv(&self, x: f64) -> f64;

    /// Second derivative; 0 by convention where the payoff is piecewise
    /// linear (e.g. away from a raw option kink).
    fn second_deriv(&self, x: f64) -> f64;

    /// `lim value(n)/n` as `n` grows: the slope of the payoff at infinity.
    fn asymptotic_slope(&self) -> f64;
}

impl<T: ConvexPayoff + ?Sized> ConvexPayoff for &T {
    fn value(&self, x: f64) -> f64 {
        (**self).value(x)
    }
    fn deriv(&self, x: f64) -> f64 {
        (**self).deriv(x)
    }
    fn second_deriv(&self, x: f64) -> f64 {
        (**self).second_deriv(x)
    }
    fn asymptotic_slope(&self) -> f64 {
        (**self).asymptotic_slope()
    }
}

/// The raw CALL payoff `(x - strike)^+`.
#[derive(Debug, Clone, Copy)]
pub struct OptionPayoff {
    pub strike: f64,
}

impl OptionPayoff {
    pub fn new(strike: f64) -> Self {
        OptionPayoff { strike }
    }
}

impl ConvexPayoff for OptionPayoff {
    fn value(&self, x: f64) -> f64 {
        (x - self.strike).max(0.0)
    }

    fn deriv(&self, x: f64) -> f64 {
        if x > self.strike {
            1.0
        } else {
            0.0
        }
    }

    // Undefined at the kink itself; 0 almost everywhere.
    fn second_deriv(&self, _x: f64) -> f64 {
        0.0
    }

    fn asymptotic_slope(&self) -> f64 {
        1.0
    }
}

/// A non-negative combination of CALL payoffs, `sum_i weight_i (x - k_i)^+`.
#[derive(Debug, Clone, Default)]
pub struct PortfolioPayoff {
    pub legs: Vec<(f64, f64)>, // (weight, strike)
}

impl PortfolioPayoff {
    pub fn new(legs: Vec<(f64, f64)>) -> Self {
        PortfolioPayoff { legs }
    }
}

impl ConvexPayoff for PortfolioPayoff {
    fn value(&self, x: f64) -> f64 {
        self.legs.iter().map(|&(w, k)| w * (x - k).max(0.0)).sum()
    }

    fn deriv(&self, x: f64) -> f64 {
        self.legs
            .iter()
            .filter(|&&(_, k)| x > k)
            .map(|&(w, _)| w)
            .sum()
    }

    fn second_deriv(&self, _x: f64) -> f64 {
        0.0
    }

    fn asymptotic_slope(&self) -> f64 {
        self.legs.iter().map(|&(w, _)| w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn option_payoff_basics() {
        let g = OptionPayoff::new(105.0);
        assert_eq!(g.value(100.0), 0.0);
        assert_eq!(g.value(110.0), 5.0);
        assert_eq!(g.deriv(100.0), 0.0);
        assert_eq!(g.deriv(110.0), 1.0);
        assert_eq!(g.asymptotic_slope(), 1.0);
    }

    #[test]
    fn portfolio_adds_legs() {
        let f = PortfolioPayoff::new(vec![(1.0, 105.0), (1.0, 115.0)]);
        assert_eq!(f.value(120.0), 15.0 + 5.0);
        assert_eq!(f.asymptotic_slope(), 2.0);
        assert_eq!(f.deriv(110.0), 1.0);
        assert_eq!(f.deriv(120.0), 2.0);
    }
}
