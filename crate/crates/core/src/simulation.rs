//! Seeded synthetic scenarios and multi-trial study runners.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_observed, FitConfig};
use crate::init::Init;
use crate::linalg::{random_matrix_from, Matrix, RandomLaw};
use crate::metrics::{average_residual, probability_error, MetricsRecord, Truth};
use crate::result::Method;
use crate::sonmf::binary::cost_unchecked;
use crate::sonmf::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// F ~ U(0,1), G ~ U(0,2).
    Cont1,
    /// Nonnegative orthonormal F with disjoint row blocks, G ~ U(0,2).
    Cont2,
    /// Orthonormal F, G ~ U(0,2).
    Cont3,
    /// F ~ N(0,1), G ~ U(0,1), Bernoulli draws from noisy `σ(FGᵀ)`.
    Binary,
    /// `Cont3` with a true rank below the fitted rank.
    RankDeficient,
}

impl ScenarioKind {
    pub fn is_binary(self) -> bool {
        self == ScenarioKind::Binary
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: ScenarioKind,
    #[serde(default = "default_dim")]
    pub p: usize,
    #[serde(default = "default_dim")]
    pub n: usize,
    /// Rank used when fitting.
    pub k: usize,
    /// Rank of the generating factors; defaults to `k`, or 15 for the
    /// rank-deficient scenario.
    #[serde(default)]
    pub true_rank: Option<usize>,
    /// Standard deviation of the additive noise; defaults to 0.3, or 0.1
    /// for binary data.
    #[serde(default)]
    pub noise_sd: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_dim() -> usize {
    500
}

pub const RANK_DEFICIENT_TRUE_RANK: usize = 15;

impl ScenarioSpec {
    pub fn new(scenario: ScenarioKind, p: usize, n: usize, k: usize, seed: u64) -> Self {
        ScenarioSpec { scenario, p, n, k, true_rank: None, noise_sd: None, seed }
    }

    pub fn true_rank(&self) -> usize {
        self.true_rank.unwrap_or(match self.scenario {
            ScenarioKind::RankDeficient => RANK_DEFICIENT_TRUE_RANK,
            _ => self.k,
        })
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd.unwrap_or(if self.scenario.is_binary() { 0.1 } else { 0.3 })
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.true_rank();
        if self.p == 0 || self.n == 0 {
            return Err(Error::InvalidParameter(format!("dimensions must be positive, got {}x{}", self.p, self.n)));
        }
        if self.k == 0 || r == 0 || r > self.p.min(self.n) || self.k > self.p.min(self.n) {
            return Err(Error::InvalidParameter(format!(
                "ranks (fit {}, true {r}) must lie in [1, {}]",
                self.k,
                self.p.min(self.n)
            )));
        }
        let sd = self.noise_sd();
        if !(sd >= 0.0 && sd.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise_sd must be nonnegative, got {sd}")));
        }
        Ok(())
    }

    fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A generated data matrix with the factors behind it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub x: Matrix,
    pub f_true: Matrix,
    pub g_true: Matrix,
    /// Bernoulli parameters `σ(F Gᵀ)` for binary scenarios.
    pub p_true: Option<Matrix>,
}

impl Scenario {
    pub fn truth(&self) -> Truth<'_> {
        Truth { f: Some(&self.f_true), g: Some(&self.g_true), p: self.p_true.as_ref() }
    }

    /// Value a fit would reach by recovering the truth: the per-entry noise
    /// energy for continuous data, the mean cost under `P` for binary data.
    pub fn reference_level(&self) -> f64 {
        match &self.p_true {
            Some(_) => cost_unchecked(&self.x, &self.f_true, &self.g_true) / self.x.len() as f64,
            None => average_residual(&self.x, &self.f_true, &self.g_true).unwrap_or(f64::NAN),
        }
    }
}

/// Draws F, then G, then the noise, then (binary only) the Bernoulli
/// uniforms, all from one generator seeded by `spec.seed`.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let (p, n, r) = (spec.p, spec.n, spec.true_rank());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = RandomLaw::Uniform { low: 0.0, high: 1.0 };
    let f_true = match spec.scenario {
        ScenarioKind::Cont1 => random_matrix_from(&mut rng, p, r, unit)?,
        ScenarioKind::Cont2 => block_orthonormal(&mut rng, p, r)?,
        ScenarioKind::Cont3 | ScenarioKind::RankDeficient => {
            random_matrix_from(&mut rng, p, r, RandomLaw::Orthonormal)?
        }
        ScenarioKind::Binary => random_matrix_from(&mut rng, p, r, RandomLaw::Normal { mean: 0.0, sd: 1.0 })?,
    };
    let g_high = if spec.scenario.is_binary() { 1.0 } else { 2.0 };
    let g_true = random_matrix_from(&mut rng, n, r, RandomLaw::Uniform { low: 0.0, high: g_high })?;
    let noise = random_matrix_from(&mut rng, p, n, RandomLaw::Normal { mean: 0.0, sd: spec.noise_sd() })?;
    let signal = f_true.dot(&g_true.t());

    if !spec.scenario.is_binary() {
        return Ok(Scenario { x: signal + noise, f_true, g_true, p_true: None });
    }
    let p_true = signal.mapv(sigmoid);
    let mut x = &p_true + &noise;
    x.mapv_inplace(|q| if rng.random::<f64>() < q.clamp(0.0, 1.0) { 1.0 } else { 0.0 });
    Ok(Scenario { x, f_true, g_true, p_true: Some(p_true) })
}

/// Contiguous row blocks, one per column, filled with U(0,1) and
/// normalised: nonnegative with exactly orthonormal columns.
fn block_orthonormal(rng: &mut ChaCha8Rng, p: usize, r: usize) -> Result<Matrix> {
    let mut f = random_matrix_from(rng, p, r, RandomLaw::Uniform { low: 0.0, high: 1.0 })?;
    let (base, extra) = (p / r, p % r);
    let mut start = 0;
    for c in 0..r {
        let len = base + usize::from(c < extra);
        for i in 0..p {
            if i < start || i >= start + len {
                f[[i, c]] = 0.0;
            }
        }
        let mut col = f.column_mut(c);
        let norm = col.dot(&col).sqrt();
        col.mapv_inplace(|v| v / norm);
        start += len;
    }
    Ok(f)
}

/// One configuration compared in a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyArm {
    pub label: String,
    pub fit: FitConfig,
}

impl StudyArm {
    pub fn method(method: Method, base: &FitConfig) -> Self {
        StudyArm { label: method.name().to_string(), fit: FitConfig { method, ..*base } }
    }
}

/// Trial means of every metric for one arm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub average_residual: Option<f64>,
    pub mean_cost: Option<f64>,
    pub orthogonal_residual: f64,
    pub eps_f: Option<f64>,
    pub eps_g: Option<f64>,
    pub eps_p: Option<f64>,
    pub sparsity_f_pct: f64,
    pub sparsity_g_pct: f64,
    pub iterations: f64,
    /// Trials that never met the threshold count their full iteration total.
    pub iterations_to_threshold: f64,
    pub elapsed_seconds: f64,
}

impl MeanMetrics {
    fn from_records(records: &[MetricsRecord]) -> Self {
        let n = records.len() as f64;
        let mean = |f: &dyn Fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        let mean_opt = |f: &dyn Fn(&MetricsRecord) -> Option<f64>| -> Option<f64> {
            records.iter().map(f).collect::<Option<Vec<_>>>().map(|v| v.iter().sum::<f64>() / n)
        };
        MeanMetrics {
            average_residual: mean_opt(&|r| r.average_residual),
            mean_cost: mean_opt(&|r| r.mean_cost),
            orthogonal_residual: mean(&|r| r.orthogonal_residual),
            eps_f: mean_opt(&|r| r.eps_f),
            eps_g: mean_opt(&|r| r.eps_g),
            eps_p: mean_opt(&|r| r.eps_p),
            sparsity_f_pct: mean(&|r| r.sparsity_f_pct),
            sparsity_g_pct: mean(&|r| r.sparsity_g_pct),
            iterations: mean(&|r| r.iterations as f64),
            iterations_to_threshold: mean(&|r| r.iterations_to_threshold.unwrap_or(r.iterations) as f64),
            elapsed_seconds: mean(&|r| r.elapsed_seconds),
        }
    }

    /// Average residual for continuous arms, mean cost for binary ones.
    pub fn fit_value(&self) -> f64 {
        self.average_residual.or(self.mean_cost).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub label: String,
    pub config: FitConfig,
    pub mean: MeanMetrics,
    pub records: Vec<MetricsRecord>,
    /// Per-iteration mean of the per-entry objective, each trial padded to
    /// `max_iters + 1` points with its final value.
    pub mean_trace: Vec<f64>,
    /// Per-iteration mean of `‖P − σ(FGᵀ)‖²_F` when the truth is known.
    pub mean_eps_p_trace: Option<Vec<f64>>,
    /// Largest `‖FᵀF − I‖²_F` seen at any iteration of any trial.
    pub max_orthogonality: f64,
    /// Trials whose run stopped on the epsilon rule.
    pub threshold_stops: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub spec: ScenarioSpec,
    pub trials: usize,
    /// Mean over trials of [`Scenario::reference_level`].
    pub reference_level: f64,
    pub arms: Vec<ArmSummary>,
}

impl TrialSummary {
    pub fn arm(&self, label: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.label == label)
    }

    /// Long-format CSV `iteration,method,value` of the mean objective traces.
    pub fn trace_csv(&self) -> String {
        long_csv(self.arms.iter().map(|a| (a.label.as_str(), a.mean_trace.as_slice())))
    }

    /// Same layout for the probability-error traces; empty body when no
    /// arm has one.
    pub fn eps_p_csv(&self) -> String {
        long_csv(self.arms.iter().filter_map(|a| a.mean_eps_p_trace.as_deref().map(|t| (a.label.as_str(), t))))
    }
}

fn long_csv<'a>(series: impl Iterator<Item = (&'a str, &'a [f64])>) -> String {
    let mut out = String::from("iteration,method,value\n");
    for (label, trace) in series {
        for (i, v) in trace.iter().enumerate() {
            out.push_str(&format!("{i},{label},{v:e}\n"));
        }
    }
    out
}

struct ArmTrial {
    record: MetricsRecord,
    trace: Vec<f64>,
    eps_p: Option<Vec<f64>>,
    max_orthogonality: f64,
    threshold_stop: bool,
}

fn check_pairing(spec: &ScenarioSpec, method: Method) -> Result<()> {
    if method.is_binary() != spec.scenario.is_binary() {
        let kind = if spec.scenario.is_binary() { "binary" } else { "continuous" };
        return Err(Error::InvalidParameter(format!("{method} cannot run on the {kind} scenario")));
    }
    Ok(())
}

fn pad(mut trace: Vec<f64>, len: usize) -> Vec<f64> {
    let last = *trace.last().expect("nonempty trace");
    trace.resize(len.max(trace.len()), last);
    trace
}

fn run_arm(scenario: &Scenario, arm: &StudyArm, trial_seed: u64) -> Result<ArmTrial> {
    let cfg = FitConfig { seed: arm.fit.seed.wrapping_add(trial_seed), ..arm.fit };
    let mut eps_p = scenario.p_true.as_ref().map(|_| Vec::with_capacity(cfg.max_iters + 1));
    let mut observer = |_: usize, f: &Matrix, g: &Matrix| {
        if let (Some(trace), Some(p)) = (eps_p.as_mut(), scenario.p_true.as_ref()) {
            trace.push(probability_error(p, f, g).unwrap_or(f64::NAN));
        }
    };
    let fit = fit_observed(&scenario.x, &cfg, &mut observer)?;
    let record = MetricsRecord::evaluate(&scenario.x, &fit, scenario.truth())?;
    let len = cfg.max_iters + 1;
    Ok(ArmTrial {
        record,
        trace: pad(fit.mean_trace(), len),
        eps_p: eps_p.map(|t| pad(t, len)),
        max_orthogonality: fit.orthogonality_trace.iter().copied().fold(0.0, f64::max),
        threshold_stop: fit.termination == crate::result::Termination::Threshold,
    })
}

/// Runs every arm on `trials` scenarios seeded `spec.seed + i`. Within a
/// trial all arms see the same X. Up to `jobs` trials run concurrently;
/// aggregation follows trial order, so the summary does not depend on
/// `jobs`.
pub fn run_trials(spec: &ScenarioSpec, arms: &[StudyArm], trials: usize, jobs: usize) -> Result<TrialSummary> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if arms.is_empty() {
        return Err(Error::InvalidParameter("no methods to run".into()));
    }
    for arm in arms {
        check_pairing(spec, arm.fit.method)?;
        FitConfig { k: spec.k, ..arm.fit }.validate()?;
    }
    let arms: Vec<StudyArm> =
        arms.iter().map(|a| StudyArm { label: a.label.clone(), fit: FitConfig { k: spec.k, ..a.fit } }).collect();

    let one_trial = |i: usize| -> Result<(f64, Vec<ArmTrial>)> {
        let trial_seed = spec.seed.wrapping_add(i as u64);
        let scenario = generate_scenario(&spec.with_seed(trial_seed))?;
        let runs = arms.iter().map(|arm| run_arm(&scenario, arm, trial_seed)).collect::<Result<Vec<_>>>()?;
        log::info!("trial {i} done");
        Ok((scenario.reference_level(), runs))
    };
    let results: Vec<(f64, Vec<ArmTrial>)> = if jobs <= 1 {
        (0..trials).map(one_trial).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        pool.install(|| (0..trials).into_par_iter().map(one_trial).collect::<Result<_>>())?
    };

    let reference_level = results.iter().map(|(r, _)| r).sum::<f64>() / trials as f64;
    let summaries = arms
        .iter()
        .enumerate()
        .map(|(a, arm)| {
            let runs: Vec<&ArmTrial> = results.iter().map(|(_, r)| &r[a]).collect();
            let records: Vec<MetricsRecord> = runs.iter().map(|r| r.record.clone()).collect();
            let mean_eps_p_trace =
                runs.iter().map(|r| r.eps_p.as_deref()).collect::<Option<Vec<_>>>().map(|traces| mean_traces(&traces));
            ArmSummary {
                label: arm.label.clone(),
                config: arm.fit,
                mean: MeanMetrics::from_records(&records),
                mean_trace: mean_traces(&runs.iter().map(|r| r.trace.as_slice()).collect::<Vec<_>>()),
                mean_eps_p_trace,
                max_orthogonality: runs.iter().map(|r| r.max_orthogonality).fold(0.0, f64::max),
                threshold_stops: runs.iter().filter(|r| r.threshold_stop).count(),
                records,
            }
        })
        .collect();
    Ok(TrialSummary { spec: *spec, trials, reference_level, arms: summaries })
}

fn mean_traces(traces: &[&[f64]]) -> Vec<f64> {
    let len = traces[0].len();
    (0..len).map(|i| traces.iter().map(|t| t[i]).sum::<f64>() / traces.len() as f64).collect()
}

/// Continuous SONMF from each starting point.
pub fn run_init_study(
    spec: &ScenarioSpec,
    base: &FitConfig,
    inits: &[Init],
    trials: usize,
    jobs: usize,
) -> Result<TrialSummary> {
    if spec.scenario.is_binary() {
        return Err(Error::InvalidParameter("the init study needs a continuous scenario".into()));
    }
    let arms: Vec<StudyArm> = inits
        .iter()
        .map(|&init| StudyArm {
            label: init_label(init).to_string(),
            fit: FitConfig { method: Method::Sonmf, init, ..*base },
        })
        .collect();
    run_trials(spec, &arms, trials, jobs)
}

pub fn init_label(init: Init) -> &'static str {
    match init {
        Init::Svd => "svd",
        Init::Kmeans => "kmeans",
        Init::Random => "random",
    }
}

/// Binary SONMF under each Newton step size.
pub fn run_step_size_study(
    spec: &ScenarioSpec,
    base: &FitConfig,
    etas: &[f64],
    trials: usize,
    jobs: usize,
) -> Result<TrialSummary> {
    if !spec.scenario.is_binary() {
        return Err(Error::InvalidParameter("the step-size study needs the binary scenario".into()));
    }
    let arms: Vec<StudyArm> = etas
        .iter()
        .map(|&eta| StudyArm {
            label: format!("eta={eta}"),
            fit: FitConfig { method: Method::SonmfBinary, eta, ..*base },
        })
        .collect();
    run_trials(spec, &arms, trials, jobs)
}

/// What a study compares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Study {
    Methods { methods: Vec<Method> },
    Init { inits: Vec<Init> },
    StepSize { etas: Vec<f64> },
}

/// A complete simulation request, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: ScenarioSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub study: Study,
    /// Shared fit settings; method, rank and init are set per arm.
    #[serde(default)]
    pub fit: FitConfig,
}

fn default_trials() -> usize {
    1
}

impl StudyConfig {
    pub fn run(&self, jobs: usize) -> Result<TrialSummary> {
        match &self.study {
            Study::Methods { methods } => {
                let arms: Vec<StudyArm> = methods.iter().map(|&m| StudyArm::method(m, &self.fit)).collect();
                run_trials(&self.scenario, &arms, self.trials, jobs)
            }
            Study::Init { inits } => run_init_study(&self.scenario, &self.fit, inits, self.trials, jobs),
            Study::StepSize { etas } => run_step_size_study(&self.scenario, &self.fit, etas, self.trials, jobs),
        }
    }
}
