//! One configuration type covering every method, used by the simulation
//! harness and the command line.

use serde::{Deserialize, Serialize};

use crate::baselines::{factorize_baseline_observed, BaselineOptions, DELTA_FLOOR};
use crate::error::Result;
use crate::init::Init;
use crate::linalg::Matrix;
use crate::result::{FactorizationResult, IterationObserver, Method};
use crate::sonmf::{factorize_binary_observed, factorize_continuous_observed, BinaryOptions, ContinuousOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub method: Method,
    pub k: usize,
    pub max_iters: usize,
    pub epsilon: f64,
    /// Initial Cayley step; `None` picks 0.5 for continuous and 2 for binary
    /// SONMF.
    pub tau: Option<f64>,
    /// Newton step for binary SONMF.
    pub eta: f64,
    pub init: Init,
    pub max_halvings: usize,
    pub delta_floor: f64,
    pub lognmf_step: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            method: Method::Sonmf,
            k: 10,
            max_iters: 500,
            epsilon: 1e-4,
            tau: None,
            eta: 0.05,
            init: Init::Svd,
            max_halvings: 40,
            delta_floor: DELTA_FLOOR,
            lognmf_step: 0.001,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn new(method: Method, k: usize) -> Self {
        FitConfig { method, k, ..Default::default() }
    }

    pub fn continuous_options(&self) -> ContinuousOptions {
        ContinuousOptions {
            k: self.k,
            max_iters: self.max_iters,
            epsilon: self.epsilon,
            tau_init: self.tau.unwrap_or(0.5),
            max_halvings: self.max_halvings,
            seed: self.seed,
        }
    }

    pub fn binary_options(&self) -> BinaryOptions {
        BinaryOptions {
            k: self.k,
            max_iters: self.max_iters,
            epsilon: self.epsilon,
            eta: self.eta,
            tau_init: self.tau.unwrap_or(2.0),
            max_halvings: self.max_halvings,
            seed: self.seed,
        }
    }

    pub fn baseline_options(&self) -> BaselineOptions {
        BaselineOptions {
            method: self.method,
            k: self.k,
            max_iters: self.max_iters,
            epsilon: self.epsilon,
            delta_floor: self.delta_floor,
            lognmf_step: self.lognmf_step,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Sonmf => self.continuous_options().validate(),
            Method::SonmfBinary => self.binary_options().validate(),
            _ => self.baseline_options().validate(),
        }
    }
}

pub fn fit(x: &Matrix, cfg: &FitConfig) -> Result<FactorizationResult> {
    fit_observed(x, cfg, &mut |_, _, _| {})
}

pub fn fit_observed(x: &Matrix, cfg: &FitConfig, observer: &mut IterationObserver<'_>) -> Result<FactorizationResult> {
    match cfg.method {
        Method::Sonmf => factorize_continuous_observed(x, &cfg.continuous_options(), cfg.init, observer),
        Method::SonmfBinary => factorize_binary_observed(x, &cfg.binary_options(), cfg.init, observer),
        _ => factorize_baseline_observed(x, &cfg.baseline_options(), observer),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_defaults_follow_the_variant() {
        let cfg = FitConfig::new(Method::Sonmf, 3);
        assert_eq!(cfg.continuous_options().tau_init, 0.5);
        assert_eq!(cfg.binary_options().tau_init, 2.0);
        let cfg = FitConfig { tau: Some(1.0), ..cfg };
        assert_eq!(cfg.binary_options().tau_init, 1.0);
    }

    #[test]
    fn dispatch_records_method() {
        let x = Matrix::from_shape_fn((6, 5), |(i, j)| ((i + j) % 2) as f64);
        for method in Method::ALL {
            let cfg = FitConfig { max_iters: 3, ..FitConfig::new(method, 2) };
            assert_eq!(fit(&x, &cfg).unwrap().method, method);
        }
    }
}
