//! Semi-orthogonal nonnegative matrix factorization and the baselines,
//! metrics, simulations and text pipeline built around it.
//!
//! Every factorizer approximates a p×n matrix X by `F Gᵀ` with F p×k and
//! G n×k. The SONMF variants keep `FᵀF = I` exactly and `G ≥ 0`.

pub mod baselines;
pub mod error;
pub mod fit;
pub mod init;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod result;
pub mod simulation;
pub mod sonmf;
pub mod textpipe;

pub use baselines::{factorize_baseline, BaselineOptions};
pub use error::{Error, Result};
pub use fit::{fit, fit_observed, FitConfig};
pub use init::Init;
pub use linalg::{Matrix, RandomLaw, SvdTruncation};
pub use metrics::{MetricsRecord, Truth};
pub use result::{FactorizationResult, IterationObserver, Method, Termination};
pub use simulation::{ScenarioKind, ScenarioSpec, StudyConfig, TrialSummary};
pub use sonmf::{factorize_binary, factorize_continuous, BinaryOptions, ContinuousOptions};
pub use textpipe::{BagOfWords, Document, TopicSummary, Weighting};
