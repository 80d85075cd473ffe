//! Clinical efficacy scoring, reference baselines, and the end-to-end
//! evaluation driver that produces the NLG and clinical score artifacts.

use crate::corpus::{dedupe_sentences, read_parsed_reports, CorpusError, ParsedReport};
use crate::labeler::{
    label_report, load_ruleset, FindingCategory, LabelVector, LabelerError, MentionLabel,
};
use crate::metrics::{evaluate_nlg, MetricReport, MetricsError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum EvalError {
    #[error("inputs must be non-empty")]
    EmptyInput,
    #[error("inputs must have equal length: {generated} generated vs {truth} truth")]
    LengthMismatch { generated: usize, truth: usize },
    #[error("id {0:?} has no counterpart in the truth set")]
    IdMismatch(String),
    #[error("duplicate report id {0:?}")]
    DuplicateId(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("train embedding set is empty")]
    EmptyTrainSet,
    #[error("embeddings CSV row {row}: {message}")]
    EmbeddingCsv { row: usize, message: String },
    #[error("{path}: {source}")]
    Corpus {
        path: PathBuf,
        #[source]
        source: CorpusError,
    },
    #[error("{path}: {source}")]
    Rules {
        path: PathBuf,
        #[source]
        source: LabelerError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binary outcome per category after collapsing the four-way mention label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOutcome {
    Pos,
    Neg,
}

/// How uncertain mentions binarize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertainPolicy {
    /// Uncertain counts as positive (screening posture, the default).
    #[default]
    Pos,
    /// Uncertain counts as negative.
    Neg,
}

/// Total mapping from mention labels to binary outcomes: Positive is Pos,
/// Negative and Absent are Neg, Uncertain follows the policy flag.
pub fn binarize(label: MentionLabel, policy: UncertainPolicy) -> BinaryOutcome {
    match label {
        MentionLabel::Positive => BinaryOutcome::Pos,
        MentionLabel::Negative | MentionLabel::Absent => BinaryOutcome::Neg,
        MentionLabel::Uncertain => match policy {
            UncertainPolicy::Pos => BinaryOutcome::Pos,
            UncertainPolicy::Neg => BinaryOutcome::Neg,
        },
    }
}

/// Per-category confusion counts; the four cells sum to the report count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    fn observe(&mut self, predicted: BinaryOutcome, actual: BinaryOutcome) {
        match (predicted, actual) {
            (BinaryOutcome::Pos, BinaryOutcome::Pos) => self.tp += 1,
            (BinaryOutcome::Pos, BinaryOutcome::Neg) => self.fp += 1,
            (BinaryOutcome::Neg, BinaryOutcome::Neg) => self.tn += 1,
            (BinaryOutcome::Neg, BinaryOutcome::Pos) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// tp / (tp + fp), defined as 0 when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio_or_zero(self.tp, self.tp + self.fp)
    }

    /// tp / (tp + fn), defined as 0 when nothing is actually positive.
    pub fn recall(&self) -> f64 {
        ratio_or_zero(self.tp, self.tp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        ratio_or_zero(self.tp + self.tn, self.total())
    }
}

fn ratio_or_zero(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

/// One evaluated category: counts plus derived scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryScores {
    pub category: FindingCategory,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

/// Aggregated clinical scores: macro averages over categories and micro
/// values from pooled counts. Zero denominators score 0 by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalScores {
    pub accuracy_macro: f64,
    pub precision_macro: f64,
    pub precision_micro: f64,
    pub recall_macro: f64,
    pub recall_micro: f64,
    pub per_category: Vec<CategoryScores>,
}

impl ClinicalScores {
    /// Aggregates arbitrary named confusion counts; macro averages weight
    /// every entry equally, micro pools the raw counts.
    pub fn from_counts(counts: &[(FindingCategory, ConfusionCounts)]) -> ClinicalScores {
        let per_category: Vec<CategoryScores> = counts
            .iter()
            .map(|&(category, counts)| CategoryScores {
                category,
                counts,
                precision: counts.precision(),
                recall: counts.recall(),
                accuracy: counts.accuracy(),
            })
            .collect();
        let n = per_category.len().max(1) as f64;
        let pooled = counts.iter().fold(ConfusionCounts::default(), |mut acc, (_, c)| {
            acc.tp += c.tp;
            acc.fp += c.fp;
            acc.tn += c.tn;
            acc.fn_ += c.fn_;
            acc
        });
        ClinicalScores {
            accuracy_macro: per_category.iter().map(|c| c.accuracy).sum::<f64>() / n,
            precision_macro: per_category.iter().map(|c| c.precision).sum::<f64>() / n,
            precision_micro: pooled.precision(),
            recall_macro: per_category.iter().map(|c| c.recall).sum::<f64>() / n,
            recall_micro: pooled.recall(),
            per_category,
        }
    }
}

/// Scores generated label vectors against ground truth, aligned by id.
pub fn clinical_scores(
    generated: &[(String, LabelVector)],
    truth: &[(String, LabelVector)],
    policy: UncertainPolicy,
) -> Result<ClinicalScores, EvalError> {
    if generated.is_empty() || truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if generated.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            generated: generated.len(),
            truth: truth.len(),
        });
    }
    let mut truth_by_id: BTreeMap<&str, &LabelVector> = BTreeMap::new();
    for (id, vector) in truth {
        if truth_by_id.insert(id.as_str(), vector).is_some() {
            return Err(EvalError::DuplicateId(id.clone()));
        }
    }
    let mut counts: Vec<(FindingCategory, ConfusionCounts)> = FindingCategory::ALL
        .iter()
        .map(|&c| (c, ConfusionCounts::default()))
        .collect();
    let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
    for (id, vector) in generated {
        if seen.insert(id.as_str(), ()).is_some() {
            return Err(EvalError::DuplicateId(id.clone()));
        }
        let truth_vector = truth_by_id
            .get(id.as_str())
            .ok_or_else(|| EvalError::IdMismatch(id.clone()))?;
        for (slot, &category) in counts.iter_mut().zip(&FindingCategory::ALL) {
            slot.1.observe(
                binarize(vector.get(category), policy),
                binarize(truth_vector.get(category), policy),
            );
        }
    }
    Ok(ClinicalScores::from_counts(&counts))
}

/// The baseline that predicts Negative for every category of every report,
/// NoFinding included.
pub fn major_class(truth: &[(String, LabelVector)]) -> Vec<(String, LabelVector)> {
    truth
        .iter()
        .map(|(id, _)| (id.clone(), LabelVector::all(MentionLabel::Negative)))
        .collect()
}

/// An id paired with a fixed-length embedding vector of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Squared Euclidean distance; monotone with the true distance.
fn distance_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Returns the train record closest to the query in Euclidean distance.
/// Ties take the lexicographically lowest id.
pub fn nearest_neighbor<'a>(
    query: &EmbeddingRecord,
    train: &'a [EmbeddingRecord],
) -> Result<&'a EmbeddingRecord, EvalError> {
    if train.is_empty() {
        return Err(EvalError::EmptyTrainSet);
    }
    let mut best: Option<(&EmbeddingRecord, f64)> = None;
    for record in train {
        if record.vector.len() != query.vector.len() {
            return Err(EvalError::DimensionMismatch {
                expected: query.vector.len(),
                got: record.vector.len(),
            });
        }
        let d = distance_sq(&query.vector, &record.vector);
        let closer = match best {
            None => true,
            Some((champion, best_d)) => {
                d < best_d || (d == best_d && record.id < champion.id)
            }
        };
        if closer {
            best = Some((record, d));
        }
    }
    Ok(best.expect("train set is non-empty").0)
}

/// Convenience for the retrieval baseline: returns the train report whose
/// embedding is nearest to the query.
pub fn retrieve_report<'a>(
    query: &EmbeddingRecord,
    train: &[EmbeddingRecord],
    train_reports: &'a [ParsedReport],
) -> Result<&'a ParsedReport, EvalError> {
    let neighbor = nearest_neighbor(query, train)?;
    train_reports
        .iter()
        .find(|r| r.id == neighbor.id)
        .ok_or_else(|| EvalError::IdMismatch(neighbor.id.clone()))
}

/// Reads an embedding CSV with header `id,v0,...,v{D-1}`. Every vector must
/// have the same dimensionality and only finite entries.
pub fn read_embeddings_csv<R: Read>(reader: R) -> Result<Vec<EmbeddingRecord>, EvalError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let dim = {
        let headers = csv.headers().map_err(|e| EvalError::EmbeddingCsv {
            row: 0,
            message: e.to_string(),
        })?;
        let fields: Vec<&str> = headers.iter().collect();
        if fields.first() != Some(&"id") {
            return Err(EvalError::EmbeddingCsv {
                row: 0,
                message: "first column must be `id`".into(),
            });
        }
        for (i, field) in fields[1..].iter().enumerate() {
            if *field != format!("v{i}") {
                return Err(EvalError::EmbeddingCsv {
                    row: 0,
                    message: format!("expected column v{i}, got {field:?}"),
                });
            }
        }
        fields.len() - 1
    };
    let mut records = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record.map_err(|e| EvalError::EmbeddingCsv {
            row: i + 1,
            message: e.to_string(),
        })?;
        if record.len() != dim + 1 {
            return Err(EvalError::EmbeddingCsv {
                row: i + 1,
                message: format!("expected {} fields, got {}", dim + 1, record.len()),
            });
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(EvalError::EmbeddingCsv {
                row: i + 1,
                message: "empty id".into(),
            });
        }
        let mut vector = Vec::with_capacity(dim);
        for cell in record.iter().skip(1) {
            let value: f64 = cell.trim().parse().map_err(|_| EvalError::EmbeddingCsv {
                row: i + 1,
                message: format!("bad number {cell:?}"),
            })?;
            if !value.is_finite() {
                return Err(EvalError::EmbeddingCsv {
                    row: i + 1,
                    message: format!("non-finite entry {value}"),
                });
            }
            vector.push(value);
        }
        records.push(EmbeddingRecord { id, vector });
    }
    Ok(records)
}

/// Options within the evaluation config file; all fields default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub u_as: UncertainPolicy,
    pub dedupe: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            u_as: UncertainPolicy::Pos,
            dedupe: true,
        }
    }
}

impl EvalOptions {
    pub fn from_json_str(data: &str) -> Result<EvalOptions, serde_json::Error> {
        serde_json::from_str(data)
    }
}

/// Everything [`run_evaluation`] needs: input paths, output directory,
/// and scoring options.
#[derive(Debug, Clone)]
pub struct EvalRunConfig {
    pub generated: PathBuf,
    pub truth: PathBuf,
    pub rules: PathBuf,
    pub out_dir: PathBuf,
    pub options: EvalOptions,
}

/// In-memory results mirrored to the output files.
#[derive(Debug, Clone)]
pub struct EvalOutputs {
    pub metrics: MetricReport,
    pub scores: ClinicalScores,
}

fn read_reports_file(path: &Path) -> Result<Vec<ParsedReport>, EvalError> {
    let file = std::fs::File::open(path).map_err(|e| EvalError::Corpus {
        path: path.to_path_buf(),
        source: CorpusError::Io(e),
    })?;
    read_parsed_reports(std::io::BufReader::new(file)).map_err(|source| EvalError::Corpus {
        path: path.to_path_buf(),
        source,
    })
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), EvalError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

fn per_category_csv(scores: &ClinicalScores) -> String {
    let mut out = String::from("category,count,precision,recall,accuracy\n");
    for row in &scores.per_category {
        let positives = row.counts.tp + row.counts.fn_;
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            row.category.display_name(),
            positives,
            row.precision,
            row.recall,
            row.accuracy
        ));
    }
    out
}

#[derive(Serialize)]
struct ClinicalScoresFile {
    accuracy_macro: f64,
    precision_macro: f64,
    precision_micro: f64,
    recall_macro: f64,
    recall_micro: f64,
}

/// End-to-end evaluation: read both corpora, dedupe the generated side,
/// label both sides, compute NLG metrics and clinical scores, and write
/// `nlg_metrics.json`, `clinical_scores.json`, and `per_category.csv`.
///
/// All validation happens before any file is written and each file lands
/// via a temp-file rename, so a failing run leaves no partial outputs.
pub fn run_evaluation(config: &EvalRunConfig) -> Result<EvalOutputs, EvalError> {
    let generated = read_reports_file(&config.generated)?;
    let truth = read_reports_file(&config.truth)?;
    if generated.is_empty() || truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let rules = load_ruleset(&config.rules)
        .map_err(|source| EvalError::Rules {
            path: config.rules.clone(),
            source,
        })?
        .rules;

    let generated: Vec<ParsedReport> = if config.options.dedupe {
        generated.iter().map(dedupe_sentences).collect()
    } else {
        generated
    };

    // align truth to the generated ids; every generated id must resolve
    let mut truth_by_id: BTreeMap<&str, &ParsedReport> = BTreeMap::new();
    for report in &truth {
        if truth_by_id.insert(report.id.as_str(), report).is_some() {
            return Err(EvalError::DuplicateId(report.id.clone()));
        }
    }
    let mut truth_aligned = Vec::with_capacity(generated.len());
    for report in &generated {
        let matched = truth_by_id
            .get(report.id.as_str())
            .ok_or_else(|| EvalError::IdMismatch(report.id.clone()))?;
        truth_aligned.push((*matched).clone());
    }

    let metrics = evaluate_nlg(&generated, &truth_aligned)?;

    let label_side = |reports: &[ParsedReport]| -> Vec<(String, LabelVector)> {
        reports
            .iter()
            .map(|r| (r.id.clone(), label_report(r, &rules)))
            .collect()
    };
    let scores = clinical_scores(
        &label_side(&generated),
        &label_side(&truth_aligned),
        config.options.u_as,
    )?;

    std::fs::create_dir_all(&config.out_dir)?;
    let metrics_json = {
        let mut s = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
        s.push('\n');
        s
    };
    let scores_json = {
        let file = ClinicalScoresFile {
            accuracy_macro: scores.accuracy_macro,
            precision_macro: scores.precision_macro,
            precision_micro: scores.precision_micro,
            recall_macro: scores.recall_macro,
            recall_micro: scores.recall_micro,
        };
        let mut s = serde_json::to_string_pretty(&file).expect("scores serialize");
        s.push('\n');
        s
    };
    write_atomic(&config.out_dir, "nlg_metrics.json", metrics_json.as_bytes())?;
    write_atomic(&config.out_dir, "clinical_scores.json", scores_json.as_bytes())?;
    write_atomic(
        &config.out_dir,
        "per_category.csv",
        per_category_csv(&scores).as_bytes(),
    )?;

    Ok(EvalOutputs { metrics, scores })
}
