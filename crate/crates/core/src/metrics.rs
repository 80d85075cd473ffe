//! Exact corpus-level NLG metrics: BLEU-1..4, ROUGE-L, and CIDEr-D.
//!
//! All computations iterate collections in deterministic order so repeated
//! runs produce bit-identical results.

use crate::corpus::ParsedReport;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Highest n-gram order used by BLEU and CIDEr-D.
pub const NGRAM_MAX: usize = 4;

/// Gaussian length-penalty width used by CIDEr-D.
pub const CIDER_SIGMA: f64 = 6.0;

#[derive(Error, Debug)]
pub enum MetricsError {
    #[error("metric computed over an empty pair list")]
    EmptyCorpus,
    #[error("BLEU order must be in 1..=4, got {0}")]
    InvalidOrder(usize),
    #[error("references must be non-empty")]
    EmptyReferences,
    #[error("IDF is degenerate: fewer than 2 distinct reference documents")]
    DegenerateIdf,
    #[error("generated id {0:?} not present in the truth corpus")]
    IdMismatch(String),
    #[error("duplicate report id {0:?}")]
    DuplicateId(String),
}

/// A candidate token sequence with one or more reference sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedPair {
    candidate: Vec<String>,
    references: Vec<Vec<String>>,
}

impl TokenizedPair {
    pub fn new(
        candidate: Vec<String>,
        references: Vec<Vec<String>>,
    ) -> Result<TokenizedPair, MetricsError> {
        if references.is_empty() {
            return Err(MetricsError::EmptyReferences);
        }
        Ok(TokenizedPair {
            candidate,
            references,
        })
    }

    pub fn candidate(&self) -> &[String] {
        &self.candidate
    }

    pub fn references(&self) -> &[Vec<String>] {
        &self.references
    }
}

/// The six corpus-level scores reported by [`evaluate_nlg`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider_d: f64,
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], u64> {
    let mut counts = BTreeMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Reference length closest to the candidate length; ties pick the shorter.
fn closest_ref_len(candidate_len: usize, references: &[Vec<String>]) -> usize {
    let mut best = references[0].len();
    for r in &references[1..] {
        let len = r.len();
        let diff = len.abs_diff(candidate_len);
        let best_diff = best.abs_diff(candidate_len);
        if diff < best_diff || (diff == best_diff && len < best) {
            best = len;
        }
    }
    best
}

/// Corpus-level BLEU-1 through BLEU-`n_max`.
///
/// Clipped n-gram matches and totals are pooled over the corpus; BLEU-k is
/// the geometric mean of orders 1..=k times the brevity penalty
/// `exp(1 - r/c)` applied when the candidate corpus is shorter than the
/// effective reference length. No smoothing: a zero corpus precision at any
/// contributing order makes that BLEU-k zero.
pub fn bleu(pairs: &[TokenizedPair], n_max: usize) -> Result<Vec<f64>, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    if !(1..=NGRAM_MAX).contains(&n_max) {
        return Err(MetricsError::InvalidOrder(n_max));
    }

    let mut clipped = vec![0u64; n_max];
    let mut totals = vec![0u64; n_max];
    let mut candidate_len = 0u64;
    let mut reference_len = 0u64;

    for pair in pairs {
        let candidate = pair.candidate();
        candidate_len += candidate.len() as u64;
        reference_len += closest_ref_len(candidate.len(), pair.references()) as u64;
        for n in 1..=n_max {
            let cand_counts = ngram_counts(candidate, n);
            if cand_counts.is_empty() {
                continue;
            }
            let mut max_ref: BTreeMap<&[String], u64> = BTreeMap::new();
            for reference in pair.references() {
                for (gram, count) in ngram_counts(reference, n) {
                    let entry = max_ref.entry(gram).or_insert(0);
                    *entry = (*entry).max(count);
                }
            }
            for (gram, count) in cand_counts {
                totals[n - 1] += count;
                clipped[n - 1] += count.min(max_ref.get(gram).copied().unwrap_or(0));
            }
        }
    }

    if candidate_len == 0 {
        return Ok(vec![0.0; n_max]);
    }
    let brevity = if candidate_len < reference_len {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    } else {
        1.0
    };

    let mut scores = Vec::with_capacity(n_max);
    for k in 1..=n_max {
        let mut log_sum = 0.0;
        let mut zero = false;
        for n in 1..=k {
            if clipped[n - 1] == 0 || totals[n - 1] == 0 {
                zero = true;
                break;
            }
            log_sum += (clipped[n - 1] as f64 / totals[n - 1] as f64).ln();
        }
        scores.push(if zero {
            0.0
        } else {
            brevity * (log_sum / k as f64).exp()
        });
    }
    Ok(scores)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(row[j])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

fn lcs_f_measure(candidate: &[String], reference: &[String], beta: f64) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(candidate, reference) as f64;
    let precision = lcs / candidate.len() as f64;
    let recall = lcs / reference.len() as f64;
    let denom = recall + beta * beta * precision;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta * beta) * recall * precision / denom
    }
}

/// ROUGE-L with the default `beta = 1` (symmetric harmonic mean).
pub fn rouge_l(pairs: &[TokenizedPair]) -> Result<f64, MetricsError> {
    rouge_l_beta(pairs, 1.0)
}

/// ROUGE-L: per-pair LCS F-measure, best reference per pair, averaged over
/// the corpus.
pub fn rouge_l_beta(pairs: &[TokenizedPair], beta: f64) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let sum: f64 = pairs
        .iter()
        .map(|pair| {
            pair.references()
                .iter()
                .map(|r| lcs_f_measure(pair.candidate(), r, beta))
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(sum / pairs.len() as f64)
}

/// Document-frequency table for CIDEr-D, built from reference documents.
///
/// One document is the full reference set of one pair. The table is immutable
/// once built and can score arbitrarily many candidate/reference pairs.
#[derive(Debug, Clone)]
pub struct CiderIdf {
    doc_count: usize,
    df: BTreeMap<Vec<String>, u64>,
    sigma: f64,
}

type TfIdfVecs = [BTreeMap<Vec<String>, f64>; NGRAM_MAX];

impl CiderIdf {
    /// Builds the table from reference documents, each a list of token
    /// sequences. Fails when fewer than two distinct documents exist, since
    /// every document frequency would saturate and all weights collapse.
    pub fn from_documents(documents: &[Vec<Vec<String>>]) -> Result<CiderIdf, MetricsError> {
        let distinct: BTreeSet<Vec<Vec<String>>> = documents
            .iter()
            .map(|d| {
                let mut sorted = d.clone();
                sorted.sort();
                sorted
            })
            .collect();
        if distinct.len() < 2 {
            return Err(MetricsError::DegenerateIdf);
        }
        let mut df: BTreeMap<Vec<String>, u64> = BTreeMap::new();
        for document in documents {
            let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
            for caption in document {
                for n in 1..=NGRAM_MAX {
                    if caption.len() >= n {
                        for gram in caption.windows(n) {
                            seen.insert(gram.to_vec());
                        }
                    }
                }
            }
            for gram in seen {
                *df.entry(gram).or_insert(0) += 1;
            }
        }
        Ok(CiderIdf {
            doc_count: documents.len(),
            df,
            sigma: CIDER_SIGMA,
        })
    }

    /// Builds the table from the reference side of a pair corpus.
    pub fn from_pairs(pairs: &[TokenizedPair]) -> Result<CiderIdf, MetricsError> {
        let documents: Vec<Vec<Vec<String>>> =
            pairs.iter().map(|p| p.references().to_vec()).collect();
        CiderIdf::from_documents(&documents)
    }

    /// Overrides the Gaussian length-penalty width (default 6).
    pub fn with_sigma(mut self, sigma: f64) -> CiderIdf {
        self.sigma = sigma;
        self
    }

    fn idf(&self, gram: &[String]) -> f64 {
        let df = self.df.get(gram).copied().unwrap_or(0).max(1);
        (self.doc_count as f64).ln() - (df as f64).ln()
    }

    fn tfidf(&self, tokens: &[String]) -> (TfIdfVecs, [f64; NGRAM_MAX]) {
        let mut vecs: TfIdfVecs = Default::default();
        let mut norms = [0.0; NGRAM_MAX];
        for n in 1..=NGRAM_MAX {
            for (gram, count) in ngram_counts(tokens, n) {
                let weight = count as f64 * self.idf(gram);
                vecs[n - 1].insert(gram.to_vec(), weight);
            }
            norms[n - 1] = vecs[n - 1].values().map(|w| w * w).sum::<f64>().sqrt();
        }
        (vecs, norms)
    }

    /// CIDEr-D score of one pair against this table, in `[0, 10]`.
    ///
    /// Per reference: clipped cosine similarity of TF-IDF vectors for each
    /// order, times the Gaussian length penalty; averaged over orders and
    /// references, scaled by 10.
    pub fn score_pair(&self, pair: &TokenizedPair) -> f64 {
        let (cand_vecs, cand_norms) = self.tfidf(pair.candidate());
        let mut total = 0.0;
        for reference in pair.references() {
            let (ref_vecs, ref_norms) = self.tfidf(reference);
            let delta = pair.candidate().len() as f64 - reference.len() as f64;
            let penalty = (-delta * delta / (2.0 * self.sigma * self.sigma)).exp();
            let mut over_orders = 0.0;
            for n in 0..NGRAM_MAX {
                if cand_norms[n] == 0.0 || ref_norms[n] == 0.0 {
                    continue;
                }
                let dot: f64 = cand_vecs[n]
                    .iter()
                    .filter_map(|(gram, &cw)| {
                        ref_vecs[n].get(gram).map(|&rw| cw.min(rw) * rw)
                    })
                    .sum();
                over_orders += penalty * dot / (cand_norms[n] * ref_norms[n]);
            }
            total += over_orders / NGRAM_MAX as f64;
        }
        10.0 * total / pair.references().len() as f64
    }
}

/// Corpus CIDEr-D: IDF from the reference side, mean pair score.
pub fn cider_d(pairs: &[TokenizedPair]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let idf = CiderIdf::from_pairs(pairs)?;
    let sum: f64 = pairs.iter().map(|p| idf.score_pair(p)).sum();
    Ok(sum / pairs.len() as f64)
}

/// Pairs generated reports with ground truth by id and computes all metrics.
/// Reports are flattened to token sequences (sentences joined in order).
pub fn evaluate_nlg(
    generated: &[ParsedReport],
    truth: &[ParsedReport],
) -> Result<MetricReport, MetricsError> {
    if generated.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut truth_tokens: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for report in truth {
        if truth_tokens
            .insert(report.id.as_str(), report.flat_tokens())
            .is_some()
        {
            return Err(MetricsError::DuplicateId(report.id.clone()));
        }
    }
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut pairs = Vec::with_capacity(generated.len());
    for report in generated {
        if !seen.insert(report.id.as_str()) {
            return Err(MetricsError::DuplicateId(report.id.clone()));
        }
        let reference = truth_tokens
            .get(report.id.as_str())
            .ok_or_else(|| MetricsError::IdMismatch(report.id.clone()))?;
        pairs.push(TokenizedPair::new(
            report.flat_tokens(),
            vec![reference.clone()],
        )?);
    }
    let b = bleu(&pairs, NGRAM_MAX)?;
    Ok(MetricReport {
        bleu1: b[0],
        bleu2: b[1],
        bleu3: b[2],
        bleu4: b[3],
        rouge_l: rouge_l(&pairs)?,
        cider_d: cider_d(&pairs)?,
    })
}
