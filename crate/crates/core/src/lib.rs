//! Non-parametric estimation of the CALL price function by superhedging.
//!
//! Starting from a cross-section of CALL ask quotes (including the
//! underlying as the strike-0 quote), the crate
//!
//! * extracts the efficient strikes, whose asks equal their superhedging
//!   price, and the piecewise-linear CALL function through them;
//! * prices arbitrary convex payoffs in closed form, with the hedge
//!   weights and the dual coefficients exposed;
//! * smooths the option kink with shape-constrained cubic splines or
//!   density kernels and prices the smoothed family, giving a convex,
//!   decreasing, twice differentiable CALL curve;
//! * reads the implied measure off that curve (bubble component, survival
//!   function, density) and computes VaR/CVaR from it;
//! * reproduces the simulation studies: smile market, microstructure
//!   noise, Monte Carlo confidence bands, and the log-normal-mixture
//!   density extraction.

pub mod bs;
pub mod cli;
pub mod density;
pub mod efficient;
pub mod error;
pub mod lp;
pub mod measure;
pub mod payoff;
pub mod qp;
pub mod quotes;
pub mod sim;
pub mod spline;
pub mod superhedge;

pub use efficient::{efficient_set, nu0, EfficientCurve, StepSurvival};
pub use error::{Error, Result};
pub use measure::{
    implied_survival, reconstruct_price, smooth_call_curve, var_cvar, Bandwidth, ImpliedMeasure,
    RiskReport, SmoothCallCurve, SmootherKind, SmootherSpec,
};
pub use payoff::{ConvexPayoff, OptionPayoff, PortfolioPayoff};
pub use quotes::{
    load_quotes, mesh, moneyness_class, LoadOptions, MeshStats, Moneyness, MoneynessEdges,
    OptionQuote, QuoteCurve,
};
pub use superhedge::{superhedge_price, SuperhedgeResult};
