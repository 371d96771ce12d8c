//! Hierarchical negative-binomial model for reporting-delay counts.
//!
//! Each cell count follows `NB(p, r)` with pmf
//! `Γ(k + r) / (Γ(r) k!) · p^r (1 − p)^k`, mean `r(1 − p)/p` and variance
//! `r(1 − p)/p²`. Both parameters vary with origin period `t` and relative
//! delay `d/D`:
//!
//! ```text
//! logit p = α0 + α1·t + α2·d/D
//! log r   = β0 + β1·t + β2·d/D
//! ```
//!
//! Every coefficient has a `N(0, σ²)` prior with its own scale, and every
//! scale has a standard exponential prior.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::special::{inv_logit, ln_gamma, ln_rising, softplus};
use crate::triangle::ReportingTriangle;

/// The six regression coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
}

impl Coefficients {
    /// The generating values of the reference synthetic study.
    pub const REFERENCE: Coefficients = Coefficients {
        alpha: [-1.5, -0.01, 0.8],
        beta: [1.5, 0.01, -1.8],
    };

    pub fn to_array(self) -> [f64; 6] {
        let [a0, a1, a2] = self.alpha;
        let [b0, b1, b2] = self.beta;
        [a0, a1, a2, b0, b1, b2]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            alpha: [v[0], v[1], v[2]],
            beta: [v[3], v[4], v[5]],
        }
    }

    /// Linear predictor of `logit p` at `(t, d)`.
    pub fn eta_p(&self, t: usize, d: usize, max_delay: usize) -> f64 {
        let [a0, a1, a2] = self.alpha;
        a0 + a1 * t as f64 + a2 * d as f64 / max_delay as f64
    }

    /// Linear predictor of `log r` at `(t, d)`.
    pub fn eta_r(&self, t: usize, d: usize, max_delay: usize) -> f64 {
        let [b0, b1, b2] = self.beta;
        b0 + b1 * t as f64 + b2 * d as f64 / max_delay as f64
    }

    pub fn link_p(&self, t: usize, d: usize, max_delay: usize) -> f64 {
        inv_logit(self.eta_p(t, d, max_delay))
    }

    pub fn link_r(&self, t: usize, d: usize, max_delay: usize) -> Result<f64> {
        let eta = self.eta_r(t, d, max_delay);
        let r = eta.exp();
        if !r.is_finite() {
            return Err(Error::numerical(format!(
                "log r linear predictor {eta} overflows at (t={t}, d={d})"
            )));
        }
        Ok(r)
    }

    pub fn cell(&self, t: usize, d: usize, max_delay: usize) -> Result<CellParams> {
        CellParams::new(self.link_p(t, d, max_delay), self.link_r(t, d, max_delay)?)
    }
}

/// The full 12-dimensional parameter vector: coefficients plus the prior
/// scale of each coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub coef: Coefficients,
    pub sigma_alpha: [f64; 3],
    pub sigma_beta: [f64; 3],
}

impl ModelParams {
    pub const DIM: usize = 12;

    /// Column names, in `to_array` order.
    pub const NAMES: [&'static str; 12] = [
        "alpha0", "alpha1", "alpha2", "beta0", "beta1", "beta2", "sigma_a0", "sigma_a1", "sigma_a2", "sigma_b0",
        "sigma_b1", "sigma_b2",
    ];

    pub fn new(coef: Coefficients, sigma_alpha: [f64; 3], sigma_beta: [f64; 3]) -> Self {
        Self {
            coef,
            sigma_alpha,
            sigma_beta,
        }
    }

    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out[..6].copy_from_slice(&self.coef.to_array());
        out[6..9].copy_from_slice(&self.sigma_alpha);
        out[9..].copy_from_slice(&self.sigma_beta);
        out
    }

    pub fn from_array(v: &[f64; 12]) -> Self {
        Self {
            coef: Coefficients::from_array([v[0], v[1], v[2], v[3], v[4], v[5]]),
            sigma_alpha: [v[6], v[7], v[8]],
            sigma_beta: [v[9], v[10], v[11]],
        }
    }

    pub fn scales_positive(&self) -> bool {
        self.sigma_alpha.iter().chain(&self.sigma_beta).all(|&s| s > 0.0)
    }

    pub fn link_p(&self, t: usize, d: usize, max_delay: usize) -> f64 {
        self.coef.link_p(t, d, max_delay)
    }

    pub fn link_r(&self, t: usize, d: usize, max_delay: usize) -> Result<f64> {
        self.coef.link_r(t, d, max_delay)
    }
}

/// Negative-binomial cell parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    p: f64,
    r: f64,
}

impl CellParams {
    pub fn new(p: f64, r: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("NB probability {p} outside (0, 1)")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::invalid(format!("NB size {r} must be positive and finite")));
        }
        Ok(Self { p, r })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn mean(&self) -> f64 {
        self.r * (1.0 - self.p) / self.p
    }

    pub fn variance(&self) -> f64 {
        self.r * (1.0 - self.p) / (self.p * self.p)
    }
}

/// `log P(n = k)` under `NB(p, r)`.
pub fn nb_logpmf(k: u64, cell: CellParams) -> f64 {
    let CellParams { p, r } = cell;
    let tail = if k == 0 { 0.0 } else { k as f64 * (-p).ln_1p() };
    ln_rising(r, k) - ln_gamma(k as f64 + 1.0) + r * p.ln() + tail
}

/// Same as [`nb_logpmf`] but parametrised by the two linear predictors, which
/// stays finite when `p` rounds to 0 or 1.
pub(crate) fn nb_logpmf_linear(k: u64, eta_p: f64, eta_r: f64, ln_k_fact: f64) -> f64 {
    let r = eta_r.exp();
    let log_p = -softplus(-eta_p);
    let log_1mp = -softplus(eta_p);
    ln_rising(r, k) - ln_k_fact + r * log_p + k as f64 * log_1mp
}

pub(crate) fn ln_normal(x: f64, sd: f64) -> f64 {
    -0.5 * (2.0 * PI).ln() - sd.ln() - 0.5 * (x / sd) * (x / sd)
}

/// Log prior density: normal coefficients with exponential(1) scales.
/// Any nonpositive scale gives `−∞`.
pub fn log_prior(params: &ModelParams) -> f64 {
    if !params.scales_positive() {
        return f64::NEG_INFINITY;
    }
    let pairs = params
        .coef
        .alpha
        .iter()
        .zip(&params.sigma_alpha)
        .chain(params.coef.beta.iter().zip(&params.sigma_beta));
    pairs.map(|(&c, &s)| ln_normal(c, s) - s).sum()
}

/// Sum of cell log-pmfs over the observed cells of `tri`.
pub fn log_likelihood(params: &ModelParams, tri: &ReportingTriangle) -> f64 {
    let d_max = tri.max_delay();
    tri.observed_cells()
        .map(|(t, d, k)| {
            let eta_p = params.coef.eta_p(t, d, d_max);
            let eta_r = params.coef.eta_r(t, d, d_max);
            nb_logpmf_linear(k, eta_p, eta_r, ln_gamma(k as f64 + 1.0))
        })
        .sum()
}

/// Unnormalised log posterior.
pub fn log_posterior(params: &ModelParams, tri: &ReportingTriangle) -> f64 {
    let prior = log_prior(params);
    if prior == f64::NEG_INFINITY {
        return prior;
    }
    prior + log_likelihood(params, tri)
}
