use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

/// Every factorizer the toolkit provides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "sonmf")]
    Sonmf,
    #[serde(rename = "sonmf-binary")]
    SonmfBinary,
    #[serde(rename = "nmf")]
    Nmf,
    #[serde(rename = "onmf")]
    Onmf,
    #[serde(rename = "semi")]
    Semi,
    #[serde(rename = "lognmf")]
    Lognmf,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Sonmf, Method::SonmfBinary, Method::Nmf, Method::Onmf, Method::Semi, Method::Lognmf];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sonmf => "sonmf",
            Method::SonmfBinary => "sonmf-binary",
            Method::Nmf => "nmf",
            Method::Onmf => "onmf",
            Method::Semi => "semi",
            Method::Lognmf => "lognmf",
        }
    }

    /// Methods fitted under the Bernoulli likelihood.
    pub fn is_binary(self) -> bool {
        matches!(self, Method::SonmfBinary | Method::Lognmf)
    }

    /// Methods that keep F exactly on the Stiefel manifold.
    pub fn is_orthonormal(self) -> bool {
        matches!(self, Method::Sonmf | Method::SonmfBinary)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown method '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// `0 <= C(i-1) - C(i) <= epsilon`.
    Threshold,
    MaxIters,
    /// The F line search exhausted its halvings and the state stopped moving.
    Stalled,
}

/// Output of any factorizer: `X ≈ F Gᵀ`.
#[derive(Debug, Clone, Serialize)]
pub struct FactorizationResult {
    pub method: Method,
    /// p×k.
    #[serde(skip)]
    pub f: Matrix,
    /// n×k.
    #[serde(skip)]
    pub g: Matrix,
    /// Objective after each iteration; entry 0 is the initial state. Raw
    /// Frobenius objective for continuous methods, total negative
    /// log-likelihood for binary ones.
    pub objective_trace: Vec<f64>,
    /// `‖FᵀF − I‖²_F` per recorded iteration (SONMF variants only).
    pub orthogonality_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub elapsed_seconds: f64,
    /// Accepted F line-search steps (SONMF variants only).
    pub accepted_steps: usize,
}

impl FactorizationResult {
    /// Trace divided by the number of entries `n·p`: the average residual
    /// for continuous methods, the mean cost for binary ones.
    pub fn mean_trace(&self) -> Vec<f64> {
        let entries = (self.f.nrows() * self.g.nrows()) as f64;
        self.objective_trace.iter().map(|v| v / entries).collect()
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace always holds the initial objective")
    }
}

/// Callback invoked with `(iteration, F, G)` for the initial state
/// (iteration 0) and after every completed iteration.
pub type IterationObserver<'a> = dyn FnMut(usize, &Matrix, &Matrix) + 'a;

/// Checks the stopping rule `0 <= (previous - current) / entries <= epsilon`,
/// i.e. on the per-entry objective.
pub(crate) fn reached_threshold(previous: f64, current: f64, entries: usize, epsilon: f64) -> bool {
    let decrease = (previous - current) / entries as f64;
    (0.0..=epsilon).contains(&decrease)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("svd".parse::<Method>().is_err());
    }

    #[test]
    fn threshold_rule() {
        assert!(reached_threshold(1.0, 1.0, 1, 1e-4));
        assert!(reached_threshold(1.0, 0.99995, 1, 1e-4));
        assert!(!reached_threshold(1.0, 0.9, 1, 1e-4));
        assert!(!reached_threshold(1.0, 1.1, 1, 1e-4));
        assert!(reached_threshold(100.0, 90.0, 1000, 1e-2));
    }
}
