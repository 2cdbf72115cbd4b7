use std::fmt::Write as _;
use std::fs;

use serde::Serialize;
use sonmf_core::io::{read_matrix, to_matrix_market};
use sonmf_core::metrics::MetricsRecord;
use sonmf_core::simulation::StudyConfig;
use sonmf_core::textpipe::{
    build_bag_of_words, features_csv, inverse_document_frequency, project_features, read_corpus, render_topics,
    split_indices, topic_summary, vectorize_with_vocabulary, weight_matrix, weight_with_idf, Tokenizer,
};
use sonmf_core::{fit, Document, FactorizationResult, FitConfig, Method, Termination, Truth, Weighting};

use crate::args::{Cli, Command, FactorizeArgs, SimulateArgs, TextpipeArgs};
use crate::error::CliError;
use crate::manifest::{unix_ms, FileDigest, OutDir, RunManifest, TerminationInfo};

pub fn run(cli: &Cli, argv: &[String]) -> Result<RunManifest, CliError> {
    match &cli.command {
        Command::Factorize(args) => factorize(args, argv),
        Command::Simulate(args) => simulate(args, argv),
        Command::Textpipe(args) => textpipe(args, argv),
    }
}

fn to_json(value: &impl Serialize) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(value).map_err(|e| CliError::Invalid(e.to_string()))
}

fn trace_csv(fit: &FactorizationResult) -> String {
    let entries = (fit.f.nrows() * fit.g.nrows()) as f64;
    let mut out = String::from("iteration,objective,mean,orthogonality\n");
    for (i, (obj, orth)) in fit.objective_trace.iter().zip(&fit.orthogonality_trace).enumerate() {
        let _ = writeln!(out, "{i},{obj:e},{:e},{orth:e}", obj / entries);
    }
    out
}

fn termination(fit: &FactorizationResult) -> TerminationInfo {
    TerminationInfo { reason: fit.termination, iterations: fit.iterations, accepted_steps: fit.accepted_steps }
}

/// SONMF runs whose very first line search failed produced nothing usable.
fn check_progress(fit: &FactorizationResult) -> Result<(), CliError> {
    if fit.method.is_orthonormal() && fit.termination == Termination::Stalled && fit.accepted_steps == 0 {
        return Err(CliError::Numerical(format!(
            "{} stalled before accepting any step; try a smaller --tau",
            fit.method
        )));
    }
    Ok(())
}

fn write_factors(out: &mut OutDir, fit: &FactorizationResult) -> Result<(), CliError> {
    out.write("f.mtx", to_matrix_market(&fit.f))?;
    out.write("g.mtx", to_matrix_market(&fit.g))?;
    out.write("trace.csv", trace_csv(fit))
}

fn manifest(command: &str, argv: &[String], config: serde_json::Value, seed: u64, started: u128) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        argv: argv.to_vec(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        seed,
        inputs: Vec::new(),
        outputs: Vec::new(),
        metrics: Vec::new(),
        termination: None,
        started_unix_ms: started,
        finished_unix_ms: started,
    }
}

pub fn factorize(args: &FactorizeArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let started = unix_ms();
    let x = read_matrix(&args.input)?;
    let cfg = args.fit.resolve(FitConfig::default());
    cfg.validate()?;
    log::info!("factorizing {}x{} with {} at rank {}", x.nrows(), x.ncols(), cfg.method, cfg.k);
    let result = fit(&x, &cfg)?;
    let record = MetricsRecord::evaluate(&x, &result, Truth::default())?;

    let mut out = OutDir::create(&args.out)?;
    write_factors(&mut out, &result)?;
    let mut m = manifest("factorize", argv, to_json(&cfg)?, cfg.seed, started);
    m.inputs.push(FileDigest::of_file(&args.input)?);
    m.metrics.push(record);
    m.termination = Some(termination(&result));
    let m = out.finish(m)?;
    check_progress(&result)?;
    Ok(m)
}

fn means_csv(summary: &sonmf_core::TrialSummary) -> String {
    let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
    let mut out = String::from(
        "label,method,fit,orthogonal_residual,eps_f,eps_g,eps_p,sparsity_f_pct,sparsity_g_pct,iterations,iterations_to_threshold,elapsed_seconds\n",
    );
    for arm in &summary.arms {
        let m = &arm.mean;
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{},{},{},{},{},{},{},{}",
            arm.label,
            arm.config.method,
            m.fit_value(),
            m.orthogonal_residual,
            opt(m.eps_f),
            opt(m.eps_g),
            opt(m.eps_p),
            m.sparsity_f_pct,
            m.sparsity_g_pct,
            m.iterations,
            m.iterations_to_threshold,
            m.elapsed_seconds
        );
    }
    out
}

pub fn simulate(args: &SimulateArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let started = unix_ms();
    let text = fs::read_to_string(&args.config).map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    let mut cfg: StudyConfig =
        toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", args.config.display())))?;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.scenario.seed = s;
    }
    let summary = cfg.run(args.jobs.max(1))?;

    let mut out = OutDir::create(&args.out)?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Invalid(e.to_string()))?;
    out.write("summary.json", json)?;
    out.write("means.csv", means_csv(&summary))?;
    out.write("trace.csv", summary.trace_csv())?;
    if summary.arms.iter().any(|a| a.mean_eps_p_trace.is_some()) {
        out.write("eps_p.csv", summary.eps_p_csv())?;
    }
    let mut m = manifest("simulate", argv, to_json(&cfg)?, cfg.scenario.seed, started);
    m.inputs.push(FileDigest::of_file(&args.config)?);
    m.metrics = summary.arms.iter().flat_map(|a| a.records.iter().cloned()).collect();
    out.finish(m)
}

#[derive(Serialize)]
struct TextpipeConfig<'a> {
    weighting: Weighting,
    min_doc_freq: usize,
    test_split: f64,
    top_terms: usize,
    fit: &'a FitConfig,
}

#[derive(Serialize)]
struct BagStats {
    terms: usize,
    documents: usize,
    nonzeros: usize,
    weighting: Weighting,
    test_documents: usize,
    dropped_test_terms: usize,
}

/// Fit defaults for text: 200 iterations, a 1e-5 stopping rule and the
/// smaller logistic step that keeps logNMF stable on sparse corpora.
pub fn text_defaults(weighting: Weighting) -> FitConfig {
    let method = if weighting == Weighting::Binary { Method::SonmfBinary } else { Method::Sonmf };
    FitConfig { max_iters: 200, epsilon: 1e-5, lognmf_step: 0.0005, ..FitConfig::new(method, 10) }
}

pub fn textpipe(args: &TextpipeArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let started = unix_ms();
    let docs = read_corpus(&args.corpus)?;
    let cfg = args.fit.resolve(text_defaults(args.weighting));
    cfg.validate()?;
    let (train_idx, test_idx) = split_indices(docs.len(), args.test_split, cfg.seed)?;
    let pick = |idx: &[usize]| -> Vec<Document> { idx.iter().map(|&i| docs[i].clone()).collect() };
    let (train, test) = (pick(&train_idx), pick(&test_idx));

    let tokenizer = Tokenizer::english();
    let bow = build_bag_of_words(&train, args.min_doc_freq, &tokenizer)?;
    let idf = inverse_document_frequency(&bow);
    let x = weight_matrix(&bow, args.weighting);
    log::info!("bag of words: {} terms x {} documents", x.nrows(), x.ncols());
    let result = fit(&x, &cfg)?;
    let record = MetricsRecord::evaluate(&x, &result, Truth::default())?;
    let topics = topic_summary(&result.f, &bow.vocabulary, args.top_terms)?;

    let mut out = OutDir::create(&args.out)?;
    write_factors(&mut out, &result)?;
    out.write("topics.txt", render_topics(&topics, args.top_terms))?;
    out.write("vocabulary.txt", bow.vocabulary.join("\n") + "\n")?;
    out.write("features_train.csv", features_csv(&train, &project_features(&x, &result.f)?)?)?;
    let mut dropped = 0;
    if !test.is_empty() {
        let (test_bow, unseen) = vectorize_with_vocabulary(&test, &bow.vocabulary, &tokenizer)?;
        dropped = unseen;
        let x_test = match args.weighting {
            Weighting::Tfidf => weight_with_idf(&test_bow.counts, &idf),
            other => weight_matrix(&test_bow, other),
        };
        out.write("features_test.csv", features_csv(&test, &project_features(&x_test, &result.f)?)?)?;
    }
    let stats = BagStats {
        terms: x.nrows(),
        documents: x.ncols(),
        nonzeros: bow.counts.iter().filter(|&&c| c > 0.0).count(),
        weighting: args.weighting,
        test_documents: test.len(),
        dropped_test_terms: dropped,
    };
    out.write("bow.json", serde_json::to_string_pretty(&stats).map_err(|e| CliError::Invalid(e.to_string()))?)?;

    let config = TextpipeConfig {
        weighting: args.weighting,
        min_doc_freq: args.min_doc_freq,
        test_split: args.test_split,
        top_terms: args.top_terms,
        fit: &cfg,
    };
    let mut m = manifest("textpipe", argv, to_json(&config)?, cfg.seed, started);
    m.inputs.push(FileDigest::of_file(&args.corpus)?);
    m.metrics.push(record);
    m.termination = Some(termination(&result));
    let m = out.finish(m)?;
    check_progress(&result)?;
    Ok(m)
}
