//! Bag-of-words construction, term weighting, projection onto a fitted
//! basis and signed topic summaries.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A common English stopword list.
pub const ENGLISH_STOPWORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Raw,
    Tfidf,
    Binary,
}

impl std::str::FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "raw" => Ok(Weighting::Raw),
            "tfidf" => Ok(Weighting::Tfidf),
            "binary" => Ok(Weighting::Binary),
            other => Err(format!("unknown weighting '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub label: Option<String>,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document { id: id.into(), label: None, text: text.into() }
    }
}

/// Lowercases, splits on anything that is not a letter, drops stopwords
/// and stems what remains.
pub struct Tokenizer {
    stopwords: BTreeSet<String>,
    stemmer: Stemmer,
}

impl Tokenizer {
    pub fn new<S: AsRef<str>>(stopwords: &[S]) -> Self {
        Tokenizer {
            stopwords: stopwords.iter().map(|s| s.as_ref().to_lowercase()).collect(),
            stemmer: Stemmer::create(Algorithm::English),
        }
    }

    /// Built-in English stopwords.
    pub fn english() -> Self {
        Tokenizer::new(ENGLISH_STOPWORDS)
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        let lowered: String = text.to_lowercase().chars().filter(|&c| c != '\'' && c != '’').collect();
        lowered
            .split(|c: char| !c.is_alphabetic())
            .filter(|w| !w.is_empty() && !self.stopwords.contains(*w))
            .map(|w| self.stemmer.stem(w).into_owned())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BagOfWords {
    /// Sorted, unique terms; row `i` of `counts` belongs to `vocabulary[i]`.
    pub vocabulary: Vec<String>,
    /// Terms × documents.
    pub counts: Matrix,
    pub weighting: Weighting,
    pub doc_ids: Vec<String>,
}

impl BagOfWords {
    /// Number of documents containing each term.
    pub fn document_frequency(&self) -> Array1<f64> {
        self.counts.rows().into_iter().map(|r| r.iter().filter(|&&c| c > 0.0).count() as f64).collect()
    }

    /// Terms kept and documents seen.
    pub fn shape(&self) -> (usize, usize) {
        self.counts.dim()
    }
}

fn count_tokens(tokenizer: &Tokenizer, docs: &[Document]) -> Vec<HashMap<String, usize>> {
    docs.iter()
        .map(|d| {
            let mut counts = HashMap::new();
            for t in tokenizer.tokens(&d.text) {
                *counts.entry(t).or_insert(0) += 1;
            }
            counts
        })
        .collect()
}

fn assemble(vocabulary: Vec<String>, per_doc: &[HashMap<String, usize>], docs: &[Document]) -> BagOfWords {
    let index: HashMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut counts = Matrix::zeros((vocabulary.len(), docs.len()));
    for (j, doc) in per_doc.iter().enumerate() {
        for (term, &c) in doc {
            if let Some(&i) = index.get(term.as_str()) {
                counts[[i, j]] = c as f64;
            }
        }
    }
    BagOfWords { vocabulary, counts, weighting: Weighting::Raw, doc_ids: docs.iter().map(|d| d.id.clone()).collect() }
}

/// Raw term counts over the terms that occur in at least `min_doc_freq`
/// documents.
pub fn build_bag_of_words(docs: &[Document], min_doc_freq: usize, tokenizer: &Tokenizer) -> Result<BagOfWords> {
    if docs.is_empty() {
        return Err(Error::Empty("corpus has no documents".into()));
    }
    let per_doc = count_tokens(tokenizer, docs);
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in &per_doc {
        for term in doc.keys() {
            *df.entry(term.as_str()).or_insert(0) += 1;
        }
    }
    let vocabulary: Vec<String> =
        df.into_iter().filter(|&(_, d)| d >= min_doc_freq.max(1)).map(|(t, _)| t.to_string()).collect();
    if vocabulary.is_empty() {
        return Err(Error::Empty("no term survives tokenization and the document-frequency cut".into()));
    }
    Ok(assemble(vocabulary, &per_doc, docs))
}

/// Counts `docs` against a fixed vocabulary, dropping unseen terms.
/// Returns the bag and the number of dropped distinct terms.
pub fn vectorize_with_vocabulary(
    docs: &[Document],
    vocabulary: &[String],
    tokenizer: &Tokenizer,
) -> Result<(BagOfWords, usize)> {
    if docs.is_empty() {
        return Err(Error::Empty("corpus has no documents".into()));
    }
    let per_doc = count_tokens(tokenizer, docs);
    let known: BTreeSet<&str> = vocabulary.iter().map(String::as_str).collect();
    let unseen: BTreeSet<&str> =
        per_doc.iter().flat_map(|d| d.keys()).map(String::as_str).filter(|t| !known.contains(t)).collect();
    if !unseen.is_empty() {
        log::warn!("dropping {} terms absent from the training vocabulary", unseen.len());
    }
    let dropped = unseen.len();
    Ok((assemble(vocabulary.to_vec(), &per_doc, docs), dropped))
}

/// `ln(n / df)` per term, 0 for terms that never occur.
pub fn inverse_document_frequency(bow: &BagOfWords) -> Array1<f64> {
    let n = bow.counts.ncols() as f64;
    bow.document_frequency().mapv(|df| if df > 0.0 { (n / df).ln() } else { 0.0 })
}

/// Weighted copy of the raw counts: indicators for `Binary`,
/// `count · ln(n / df)` for `Tfidf`.
pub fn weight_matrix(bow: &BagOfWords, scheme: Weighting) -> Matrix {
    match scheme {
        Weighting::Tfidf => weight_with_idf(&bow.counts, &inverse_document_frequency(bow)),
        _ => apply_simple(&bow.counts, scheme),
    }
}

fn apply_simple(counts: &Matrix, scheme: Weighting) -> Matrix {
    match scheme {
        Weighting::Binary => counts.mapv(|c| if c > 0.0 { 1.0 } else { 0.0 }),
        _ => counts.clone(),
    }
}

/// Tf-idf with externally supplied idf, so held-out documents reuse the
/// training weights.
pub fn weight_with_idf(counts: &Matrix, idf: &Array1<f64>) -> Matrix {
    let mut out = counts.clone();
    for (mut row, &w) in out.rows_mut().into_iter().zip(idf.iter()) {
        row.mapv_inplace(|c| c * w);
    }
    out
}

/// Document features `XᵀF`, one row per column of X.
pub fn project_features(x: &Matrix, f: &Matrix) -> Result<Matrix> {
    if x.nrows() != f.nrows() {
        return Err(Error::Shape(format!("X has {} terms but F has {} rows", x.nrows(), f.nrows())));
    }
    Ok(x.t().dot(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic: usize,
    /// Largest positive weights, descending.
    pub positive: Vec<(String, f64)>,
    /// Most negative weights, ascending.
    pub negative: Vec<(String, f64)>,
    /// Fewer than `m` terms were available on at least one side.
    pub short: bool,
}

/// The `m` most positive and `m` most negative terms of each column of F.
pub fn topic_summary(f: &Matrix, vocabulary: &[String], m: usize) -> Result<Vec<TopicSummary>> {
    if f.nrows() != vocabulary.len() {
        return Err(Error::Shape(format!(
            "F has {} rows but the vocabulary has {} terms",
            f.nrows(),
            vocabulary.len()
        )));
    }
    let summaries = f
        .columns()
        .into_iter()
        .enumerate()
        .map(|(topic, col)| {
            let mut pos: Vec<(String, f64)> =
                col.iter().zip(vocabulary).filter(|(&w, _)| w > 0.0).map(|(&w, t)| (t.clone(), w)).collect();
            let mut neg: Vec<(String, f64)> =
                col.iter().zip(vocabulary).filter(|(&w, _)| w < 0.0).map(|(&w, t)| (t.clone(), w)).collect();
            pos.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            neg.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
            let short = pos.len() < m || neg.len() < m;
            pos.truncate(m);
            neg.truncate(m);
            TopicSummary { topic, positive: pos, negative: neg, short }
        })
        .collect();
    Ok(summaries)
}

/// Plain-text rendering: a heading per topic, then `+ term weight` and
/// `- term weight` lines, with a marker line for each short side.
pub fn render_topics(topics: &[TopicSummary], m: usize) -> String {
    let mut out = String::new();
    for t in topics {
        let _ = writeln!(out, "# topic {}", t.topic + 1);
        for (sign, side) in [('+', &t.positive), ('-', &t.negative)] {
            for (term, w) in side.iter() {
                let _ = writeln!(out, "{sign} {term} {w:.6}");
            }
            if side.len() < m {
                let _ = writeln!(out, "{sign} (short: {} of {m})", side.len());
            }
        }
    }
    out
}

/// Reads a corpus: `label,text` records for `.csv` files (an optional
/// `label,text` header is skipped), otherwise one document per nonblank
/// line. Documents are numbered from 0 in file order.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    let text = std::fs::read_to_string(path)?;
    let is_csv = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_labelled_csv(&text)
    } else {
        Ok(text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| Document::new(i.to_string(), l))
            .collect())
    }
}

pub fn parse_labelled_csv(text: &str) -> Result<Vec<Document>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut docs = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse { line: line + 1, message: e.to_string() })?;
        if record.len() != 2 {
            return Err(Error::Parse {
                line: line + 1,
                message: format!("expected label,text but got {} fields", record.len()),
            });
        }
        if line == 0 && &record[0] == "label" && &record[1] == "text" {
            continue;
        }
        docs.push(Document {
            id: docs.len().to_string(),
            label: Some(record[0].to_string()),
            text: record[1].to_string(),
        });
    }
    Ok(docs)
}

/// Seeded shuffle of `0..n`; the first `round(n · fraction)` indices form
/// the test set. Both halves are returned sorted.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("test fraction must lie in [0, 1), got {fraction}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n as f64 * fraction).round() as usize;
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// CSV with header `doc_id,label,f1..fk`, one row per document.
pub fn features_csv(docs: &[Document], features: &Matrix) -> Result<String> {
    if docs.len() != features.nrows() {
        return Err(Error::Shape(format!("{} documents but {} feature rows", docs.len(), features.nrows())));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["doc_id".to_string(), "label".to_string()];
    header.extend((1..=features.ncols()).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for (doc, row) in docs.iter().zip(features.rows()) {
        let mut rec = vec![doc.id.clone(), doc.label.clone().unwrap_or_default()];
        rec.extend(row.iter().map(|v| format!("{v:.16e}")));
        w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn docs(texts: &[&str]) -> Vec<Document> {
        texts.iter().enumerate().map(|(i, t)| Document::new(i.to_string(), *t)).collect()
    }

    #[test]
    fn hand_counted_document() {
        let tok = Tokenizer::new(&["on", "the"]);
        let bow = build_bag_of_words(&docs(&["fell on the ice, fell hard"]), 1, &tok).unwrap();
        assert_eq!(bow.vocabulary, ["fell", "hard", "ice"]);
        assert_eq!(bow.counts.column(0).to_vec(), [2.0, 1.0, 1.0]);
    }

    #[test]
    fn digits_punctuation_and_stemming() {
        let tok = Tokenizer::english();
        assert_eq!(tok.tokens("Falling 3 times!! The patient's knees"), ["fall", "time", "patient", "knee"]);
    }

    #[test]
    fn duplicate_documents_have_equal_columns() {
        let bow = build_bag_of_words(
            &docs(&["knee pain swelling", "hip fracture", "knee pain swelling"]),
            1,
            &Tokenizer::english(),
        )
        .unwrap();
        assert_eq!(bow.counts.column(0), bow.counts.column(2));
    }

    #[test]
    fn empty_inputs_error() {
        let tok = Tokenizer::english();
        assert!(matches!(build_bag_of_words(&[], 1, &tok), Err(Error::Empty(_))));
        assert!(matches!(build_bag_of_words(&docs(&["the and of", "123"]), 1, &tok), Err(Error::Empty(_))));
    }

    #[test]
    fn min_doc_freq_removes_rare_terms() {
        let bow =
            build_bag_of_words(&docs(&["alpha beta", "alpha gamma", "delta alpha beta"]), 2, &Tokenizer::english())
                .unwrap();
        assert_eq!(bow.vocabulary, ["alpha", "beta"]);
        assert!(bow.document_frequency().iter().all(|&d| d >= 2.0));
    }

    #[test]
    fn tfidf_examples() {
        let bow = BagOfWords {
            vocabulary: vec!["a".into(), "b".into()],
            counts: array![[3.0, 1.0], [2.0, 0.0]],
            weighting: Weighting::Raw,
            doc_ids: vec!["0".into(), "1".into()],
        };
        let w = weight_matrix(&bow, Weighting::Tfidf);
        assert_eq!(w.row(0).to_vec(), [0.0, 0.0]);
        assert!((w[[1, 0]] - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(w[[1, 1]], 0.0);
        assert_eq!(weight_matrix(&bow, Weighting::Binary), array![[1.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn test_documents_use_training_vocabulary() {
        let tok = Tokenizer::english();
        let train = build_bag_of_words(&docs(&["knee pain", "hip pain"]), 1, &tok).unwrap();
        let (test, dropped) =
            vectorize_with_vocabulary(&docs(&["knee wrist", "elbow"]), &train.vocabulary, &tok).unwrap();
        assert_eq!(test.vocabulary, train.vocabulary);
        assert_eq!(dropped, 2);
        assert_eq!(test.counts.column(0).sum(), 1.0);
        assert_eq!(test.counts.column(1).sum(), 0.0);
    }

    #[test]
    fn projection_examples() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [0.0, 1.0]];
        assert_eq!(project_features(&x, &Matrix::eye(3)).unwrap(), x.t().to_owned());
        assert!(project_features(&x, &Matrix::eye(2)).is_err());
    }

    #[test]
    fn topic_summary_examples() {
        let vocab: Vec<String> = ["ankle", "hip", "knee"].iter().map(|s| s.to_string()).collect();
        let f = array![[-0.5, 0.2], [0.8, 0.2], [0.1, 0.3]];
        let topics = topic_summary(&f, &vocab, 1).unwrap();
        assert_eq!(topics[0].positive, [("hip".to_string(), 0.8)]);
        assert_eq!(topics[0].negative, [("ankle".to_string(), -0.5)]);
        assert!(!topics[0].short);
        assert!(topics[1].negative.is_empty() && topics[1].short);
        // Ties break alphabetically.
        let t = topic_summary(&f, &vocab, 3).unwrap();
        assert_eq!(t[1].positive.iter().map(|p| p.0.as_str()).collect::<Vec<_>>(), ["knee", "ankle", "hip"]);
        assert!(topic_summary(&f, &vocab[..2], 1).is_err());
    }

    #[test]
    fn rendered_topics_flag_short_sides() {
        let vocab: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let topics = topic_summary(&array![[1.0], [0.5]], &vocab, 2).unwrap();
        assert_eq!(render_topics(&topics, 2), "# topic 1\n+ a 1.000000\n+ b 0.500000\n- (short: 0 of 2)\n");
    }

    #[test]
    fn labelled_csv_with_header_and_quotes() {
        let docs = parse_labelled_csv("label,text\nfall,\"slipped, fell\"\nburn,hot water\n").unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].label.as_deref(), Some("fall"));
        assert_eq!(docs[0].text, "slipped, fell");
        assert_eq!(docs[1].id, "1");
        assert!(parse_labelled_csv("only one field\n").is_err());
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (train, test) = split_indices(20, 0.2, 5).unwrap();
        assert_eq!(test.len(), 4);
        assert_eq!(train.len(), 16);
        assert!(test.iter().all(|i| !train.contains(i)));
        assert_eq!(split_indices(20, 0.2, 5).unwrap(), (train, test));
        assert!(split_indices(5, 1.0, 0).is_err());
    }

    #[test]
    fn features_csv_header() {
        let mut d = docs(&["x", "y"]);
        d[1].label = Some("burn".into());
        let text = features_csv(&d, &array![[1.0, -2.0], [0.5, 0.0]]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "doc_id,label,f1,f2");
        assert!(lines[2].starts_with("1,burn,5.0000000000000000e-1,"));
    }

    proptest! {
        #[test]
        fn projection_is_linear(seed in 0u64..1000) {
            use crate::linalg::{random_matrix, RandomLaw};
            let law = RandomLaw::Uniform { low: 0.0, high: 3.0 };
            let x1 = random_matrix(7, 5, law, seed).unwrap();
            let x2 = random_matrix(7, 5, law, seed + 1).unwrap();
            let f = random_matrix(7, 2, RandomLaw::Orthonormal, seed + 2).unwrap();
            let lhs = project_features(&(&x1 + &x2), &f).unwrap();
            let rhs = project_features(&x1, &f).unwrap() + project_features(&x2, &f).unwrap();
            prop_assert!((lhs - rhs).iter().all(|v| v.abs() < 1e-12));
        }

        #[test]
        fn vocabulary_ignores_document_order(perm_seed in 0u64..1000) {
            let texts = ["knee pain fall", "hip fracture fall", "burn hot water", "knee swelling"];
            let mut shuffled = texts.to_vec();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
            let tok = Tokenizer::english();
            let a = build_bag_of_words(&docs(&texts), 1, &tok).unwrap();
            let b = build_bag_of_words(&docs(&shuffled), 1, &tok).unwrap();
            prop_assert_eq!(&a.vocabulary, &b.vocabulary);
            prop_assert_eq!(a.document_frequency(), b.document_frequency());
        }
    }
}
