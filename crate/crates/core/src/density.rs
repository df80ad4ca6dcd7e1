//! Payoff smoothing by a probability density kernel.
//!
//! Convolving the CALL kink with a zero-mean density gives a smooth convex
//! payoff whose derivatives are the kernel's distribution and density
//! functions; prices built from it carry a risk-neutral density in closed
//! form.

use serde::{Deserialize, Serialize};

use crate::bs::{norm_cdf, norm_pdf};
use crate::error::{Error, Result};
use crate::payoff::ConvexPayoff;

/// A smoothing kernel: a probability density with zero mean and a finite
/// absolute first moment.
pub trait Kernel: Send + Sync {
    fn pdf(&self, u: f64) -> f64;
    fn cdf(&self, u: f64) -> f64;
    /// `int_{-inf}^{z} u pdf(u) du`, in closed form or via a registered
    /// quadrature of matching accuracy.
    fn partial_first_moment(&self, z: f64) -> f64;
    fn id(&self) -> KernelId;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelId {
    Normal,
}

impl std::fmt::Display for KernelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelId::Normal => write!(f, "normal"),
        }
    }
}

impl std::str::FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" | "gaussian" => Ok(KernelId::Normal),
            other => Err(Error::Config(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Standard normal kernel; the partial first moment is `-pdf(z)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalKernel;

impl Kernel for NormalKernel {
    fn pdf(&self, u: f64) -> f64 {
        norm_pdf(u)
    }

    fn cdf(&self, u: f64) -> f64 {
        norm_cdf(u)
    }

    fn partial_first_moment(&self, z: f64) -> f64 {
        -norm_pdf(z)
    }

    fn id(&self) -> KernelId {
        KernelId::Normal
    }
}

pub fn kernel_by_id(id: KernelId) -> &'static dyn Kernel {
    match id {
        KernelId::Normal => &NormalKernel,
    }
}

/// The kernel-smoothed CALL payoff at strike `k` with bandwidth `h`:
/// `Phi((x-k)/h) (x-k) - h * int_{-inf}^{(x-k)/h} u phi(u) du`.
#[derive(Debug, Clone, Copy)]
pub struct DensityPayoff {
    pub k: f64,
    pub h: f64,
    pub kernel: KernelId,
}

impl DensityPayoff {
    pub fn value_local(&self, u: f64) -> f64 {
        let kern = kernel_by_id(self.kernel);
        let z = u / self.h;
        (kern.cdf(z) * u - self.h * kern.partial_first_moment(z)).max(0.0)
    }

    pub fn slope_local(&self, u: f64) -> f64 {
        kernel_by_id(self.kernel).cdf(u / self.h)
    }

    pub fn curvature_local(&self, u: f64) -> f64 {
        kernel_by_id(self.kernel).pdf(u / self.h) / self.h
    }
}

impl ConvexPayoff for DensityPayoff {
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

/// Build a kernel-smoothed payoff.
pub fn density_payoff(k: f64, h: f64, kernel: KernelId) -> Result<DensityPayoff> {
    if !(h > 0.0) {
        return Err(Error::validation("h", format!("bandwidth must be positive, got {h}")));
    }
    Ok(DensityPayoff { k, h, kernel })
}
