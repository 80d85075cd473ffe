//! A toy hierarchical generator: at each step a sentence template is drawn
//! from a softmax over a fixed bank and a Bernoulli stop signal decides
//! whether generation ends. The policy is trained with REINFORCE using the
//! combined clinical/NLG advantage; the NLG part is self-critical against
//! the greedy decode and the clinical part uses per-category EMA baselines.

use crate::corpus::{ParsedReport, Sentence, ViewPosition};
use crate::labeler::{label_report, RuleSet};
use crate::metrics::{CiderIdf, MetricsError};
use crate::reward::{
    combined_advantage, update_baselines, CcrTerms, EmaBaselines, RewardConfig, RewardError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum PolicyError {
    #[error("sentence bank must be non-empty")]
    EmptyBank,
    #[error("invalid policy parameters: {0}")]
    InvalidPolicy(String),
    #[error("invalid training options: {0}")]
    InvalidOptions(String),
    #[error("non-finite policy parameters detected at training step {step}")]
    NonFinite { step: usize },
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Ordered bank of sentence templates the policy chooses from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceBank {
    templates: Vec<Sentence>,
}

impl SentenceBank {
    pub fn new(templates: Vec<Sentence>) -> Result<SentenceBank, PolicyError> {
        if templates.is_empty() {
            return Err(PolicyError::EmptyBank);
        }
        Ok(SentenceBank { templates })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, index: usize) -> &Sentence {
        &self.templates[index]
    }

    pub fn templates(&self) -> &[Sentence] {
        &self.templates
    }
}

/// Policy parameters: per-step template logits and per-step stop logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct ToyPolicy {
    template_logits: Vec<Vec<f64>>,
    stop_logits: Vec<f64>,
}

#[derive(Serialize, Deserialize, Clone)]
struct PolicyFile {
    template_logits: Vec<Vec<f64>>,
    stop_logits: Vec<f64>,
}

impl From<ToyPolicy> for PolicyFile {
    fn from(policy: ToyPolicy) -> PolicyFile {
        PolicyFile {
            template_logits: policy.template_logits,
            stop_logits: policy.stop_logits,
        }
    }
}

impl TryFrom<PolicyFile> for ToyPolicy {
    type Error = String;

    fn try_from(file: PolicyFile) -> Result<ToyPolicy, String> {
        ToyPolicy::new(file.template_logits, file.stop_logits).map_err(|e| e.to_string())
    }
}

impl ToyPolicy {
    pub fn new(
        template_logits: Vec<Vec<f64>>,
        stop_logits: Vec<f64>,
    ) -> Result<ToyPolicy, PolicyError> {
        if template_logits.is_empty() {
            return Err(PolicyError::InvalidPolicy("max_steps must be at least 1".into()));
        }
        if template_logits.len() != stop_logits.len() {
            return Err(PolicyError::InvalidPolicy(format!(
                "{} template rows vs {} stop logits",
                template_logits.len(),
                stop_logits.len()
            )));
        }
        let bank_size = template_logits[0].len();
        if bank_size == 0 {
            return Err(PolicyError::InvalidPolicy("bank size must be at least 1".into()));
        }
        if template_logits.iter().any(|row| row.len() != bank_size) {
            return Err(PolicyError::InvalidPolicy("ragged template logits".into()));
        }
        let policy = ToyPolicy {
            template_logits,
            stop_logits,
        };
        if !policy.is_finite() {
            return Err(PolicyError::InvalidPolicy("non-finite logits".into()));
        }
        Ok(policy)
    }

    /// All-zero logits: uniform template choice, stop probability one half.
    pub fn uniform(max_steps: usize, bank_size: usize) -> Result<ToyPolicy, PolicyError> {
        ToyPolicy::new(vec![vec![0.0; bank_size]; max_steps], vec![0.0; max_steps])
    }

    pub fn max_steps(&self) -> usize {
        self.stop_logits.len()
    }

    pub fn bank_size(&self) -> usize {
        self.template_logits[0].len()
    }

    pub fn template_logits(&self) -> &[Vec<f64>] {
        &self.template_logits
    }

    pub fn stop_logits(&self) -> &[f64] {
        &self.stop_logits
    }

    pub fn is_finite(&self) -> bool {
        self.template_logits
            .iter()
            .flatten()
            .chain(&self.stop_logits)
            .all(|v| v.is_finite())
    }

    fn descend(&mut self, gradient: &PolicyGradient, lr: f64) {
        for (row, grad_row) in self.template_logits.iter_mut().zip(&gradient.template) {
            for (v, g) in row.iter_mut().zip(grad_row) {
                *v -= lr * g;
            }
        }
        for (v, g) in self.stop_logits.iter_mut().zip(&gradient.stop) {
            *v -= lr * g;
        }
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("policy serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(data: &str) -> Result<ToyPolicy, PolicyError> {
        serde_json::from_str(data).map_err(|e| PolicyError::InvalidPolicy(e.to_string()))
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - max - log_sum).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).iter().map(|l| l.exp()).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln sigma(x)` when `stop`, else `ln (1 - sigma(x))`.
fn log_prob_stop_decision(logit: f64, stop: bool) -> f64 {
    if stop {
        -softplus(-logit)
    } else {
        -softplus(logit)
    }
}

fn draw_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// One sampled decision: the chosen template, the stop outcome, and the
/// log-probabilities of both taken decisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryStep {
    pub template: usize,
    pub stop: bool,
    pub log_prob_template: f64,
    pub log_prob_stop: f64,
}

/// A sampled generation: the decision sequence and the realized report.
/// The last step either stopped or the step limit was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub report: ParsedReport,
}

impl Trajectory {
    /// Sum of the taken decisions' log-probabilities.
    pub fn log_prob(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.log_prob_template + s.log_prob_stop)
            .sum()
    }
}

fn realize(bank: &SentenceBank, templates: &[usize], id: &str) -> ParsedReport {
    ParsedReport {
        id: id.to_string(),
        sentences: templates.iter().map(|&t| bank.get(t).clone()).collect(),
        view: ViewPosition::Unknown,
    }
}

/// Samples one trajectory from the policy. A stop decision is drawn at every
/// taken step, including the final one when the step limit forces the end.
pub fn sample(policy: &ToyPolicy, bank: &SentenceBank, seed: u64) -> Trajectory {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    sample_with_rng(policy, bank, &mut rng)
}

fn sample_with_rng<R: Rng>(policy: &ToyPolicy, bank: &SentenceBank, rng: &mut R) -> Trajectory {
    debug_assert_eq!(policy.bank_size(), bank.len());
    let mut steps = Vec::new();
    let mut templates = Vec::new();
    for i in 0..policy.max_steps() {
        let log_probs = log_softmax(&policy.template_logits[i]);
        let probs: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
        let template = draw_categorical(rng, &probs);
        let stop_logit = policy.stop_logits[i];
        let stop = rng.gen::<f64>() < sigmoid(stop_logit);
        steps.push(TrajectoryStep {
            template,
            stop,
            log_prob_template: log_probs[template],
            log_prob_stop: log_prob_stop_decision(stop_logit, stop),
        });
        templates.push(template);
        if stop {
            break;
        }
    }
    Trajectory {
        steps,
        report: realize(bank, &templates, "sampled"),
    }
}

/// Greedy decode: argmax template per step (ties take the lowest index),
/// stopping when the stop probability strictly exceeds one half.
pub fn greedy_decode(policy: &ToyPolicy, bank: &SentenceBank) -> ParsedReport {
    let mut templates = Vec::new();
    for i in 0..policy.max_steps() {
        let row = &policy.template_logits[i];
        let mut best = 0;
        for (j, &logit) in row.iter().enumerate() {
            if logit > row[best] {
                best = j;
            }
        }
        templates.push(best);
        if policy.stop_logits[i] > 0.0 {
            break;
        }
    }
    realize(bank, &templates, "greedy")
}

/// Beam search over template sequences, scored by trajectory log-probability
/// (template choices plus taken stop decisions). Ties prefer longer
/// sequences, then lower template indices.
pub fn beam_decode(policy: &ToyPolicy, bank: &SentenceBank, width: usize) -> ParsedReport {
    #[derive(Clone)]
    struct Beam {
        templates: Vec<usize>,
        log_prob: f64,
        finished: bool,
    }

    let width = width.max(1);
    let mut beams = vec![Beam {
        templates: Vec::new(),
        log_prob: 0.0,
        finished: false,
    }];
    for i in 0..policy.max_steps() {
        let log_probs = log_softmax(&policy.template_logits[i]);
        let stop_logit = policy.stop_logits[i];
        let last_step = i + 1 == policy.max_steps();
        let mut next = Vec::new();
        for beam in &beams {
            if beam.finished {
                next.push(beam.clone());
                continue;
            }
            for (t, &lp) in log_probs.iter().enumerate() {
                for stop in [false, true] {
                    let mut templates = beam.templates.clone();
                    templates.push(t);
                    next.push(Beam {
                        templates,
                        log_prob: beam.log_prob
                            + lp
                            + log_prob_stop_decision(stop_logit, stop),
                        finished: stop || last_step,
                    });
                }
            }
        }
        next.sort_by(|a, b| {
            b.log_prob
                .total_cmp(&a.log_prob)
                .then(b.templates.len().cmp(&a.templates.len()))
                .then(a.templates.cmp(&b.templates))
        });
        next.truncate(width);
        beams = next;
        if beams.iter().all(|b| b.finished) {
            break;
        }
    }
    realize(bank, &beams[0].templates, "beam")
}

/// Gradient over policy parameters, same shape as the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    pub template: Vec<Vec<f64>>,
    pub stop: Vec<f64>,
}

impl PolicyGradient {
    pub fn zeros(max_steps: usize, bank_size: usize) -> PolicyGradient {
        PolicyGradient {
            template: vec![vec![0.0; bank_size]; max_steps],
            stop: vec![0.0; max_steps],
        }
    }

    pub fn add(&mut self, other: &PolicyGradient) {
        for (row, other_row) in self.template.iter_mut().zip(&other.template) {
            for (v, o) in row.iter_mut().zip(other_row) {
                *v += o;
            }
        }
        for (v, o) in self.stop.iter_mut().zip(&other.stop) {
            *v += o;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.template.iter_mut().flatten() {
            *v *= factor;
        }
        for v in self.stop.iter_mut() {
            *v *= factor;
        }
    }
}

/// Analytic REINFORCE gradient of the surrogate loss
/// `-advantage * sum_i (log p(template_i) + log p(stop_i))`
/// with respect to the policy logits. Steps not taken contribute zero.
pub fn reinforce_gradient(
    policy: &ToyPolicy,
    trajectory: &Trajectory,
    advantage: f64,
) -> PolicyGradient {
    let mut gradient = PolicyGradient::zeros(policy.max_steps(), policy.bank_size());
    for (i, step) in trajectory.steps.iter().enumerate() {
        let probs = softmax(&policy.template_logits[i]);
        for (j, &p) in probs.iter().enumerate() {
            let indicator = if j == step.template { 1.0 } else { 0.0 };
            gradient.template[i][j] = -advantage * (indicator - p);
        }
        let taken = if step.stop { 1.0 } else { 0.0 };
        gradient.stop[i] = -advantage * (taken - sigmoid(policy.stop_logits[i]));
    }
    gradient
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic per-rollout seed, so batches can run in any order or in
/// parallel without changing results.
pub fn rollout_seed(seed: u64, step: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed).wrapping_add(step)).wrapping_add(index))
}

/// Reference documents for the training-time IDF context: every bank
/// template counts as one document, plus the truth report as another.
pub fn build_training_idf(
    bank: &SentenceBank,
    truth: &ParsedReport,
) -> Result<CiderIdf, MetricsError> {
    let mut documents: Vec<Vec<Vec<String>>> = bank
        .templates()
        .iter()
        .map(|t| vec![t.tokens().to_vec()])
        .collect();
    documents.push(vec![truth.flat_tokens()]);
    CiderIdf::from_documents(&documents)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 500,
            batch: 32,
            lr: 0.1,
            seed: 0,
        }
    }
}

/// Batch-mean rewards observed at one training step, before the update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub nlg_mean: f64,
    pub ccr_mean: f64,
    pub total_mean: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: ToyPolicy,
    pub trace: Vec<TraceRow>,
    pub baselines: EmaBaselines,
}

/// REINFORCE training loop.
///
/// Each step: decode the greedy baseline, sample a batch (rollout seeds
/// derived from `(seed, step, index)`), compute the combined advantage per
/// sample against the current EMA baselines, descend on the averaged
/// gradient, then update the EMA baselines once with the batch-mean clinical
/// terms. The trace records batch-mean rewards per step.
pub fn train(
    mut policy: ToyPolicy,
    truth: &ParsedReport,
    bank: &SentenceBank,
    rules: &RuleSet,
    cfg: &RewardConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome, PolicyError> {
    if policy.bank_size() != bank.len() {
        return Err(PolicyError::InvalidPolicy(format!(
            "policy expects a bank of {}, got {}",
            policy.bank_size(),
            bank.len()
        )));
    }
    if opts.steps == 0 || opts.batch == 0 {
        return Err(PolicyError::InvalidOptions(
            "steps and batch must be at least 1".into(),
        ));
    }
    if !opts.lr.is_finite() || opts.lr < 0.0 {
        return Err(PolicyError::InvalidOptions(format!(
            "learning rate must be finite and non-negative, got {}",
            opts.lr
        )));
    }
    cfg.validate()?;

    let idf = build_training_idf(bank, truth)?;
    let labels_truth = label_report(truth, rules);
    let mut baselines = EmaBaselines::new();
    let mut trace = Vec::with_capacity(opts.steps);

    for step in 0..opts.steps {
        let greedy = greedy_decode(&policy, bank);
        let mut gradient = PolicyGradient::zeros(policy.max_steps(), policy.bank_size());
        let mut nlg_sum = 0.0;
        let mut ccr_sum = 0.0;
        let mut term_sums = [0.0; crate::labeler::FindingCategory::COUNT];

        for index in 0..opts.batch {
            let rollout = sample(
                &policy,
                bank,
                rollout_seed(opts.seed, step as u64, index as u64),
            );
            let labels_generated = label_report(&rollout.report, rules);
            let bundle = combined_advantage(
                &rollout.report,
                &greedy,
                truth,
                &labels_generated,
                &labels_truth,
                &baselines,
                cfg,
                &idf,
            );
            gradient.add(&reinforce_gradient(&policy, &rollout, bundle.combined_advantage));
            nlg_sum += bundle.nlg_reward;
            ccr_sum += bundle.ccr_total;
            for (category, term) in bundle.ccr_terms.iter() {
                term_sums[category.index()] += term;
            }
        }

        let scale = 1.0 / opts.batch as f64;
        gradient.scale(scale);
        policy.descend(&gradient, opts.lr);
        if !policy.is_finite() {
            return Err(PolicyError::NonFinite { step });
        }

        let mean_terms = CcrTerms::from_fn(|c| term_sums[c.index()] * scale);
        baselines = update_baselines(&baselines, &mean_terms, cfg.gamma);

        let nlg_mean = nlg_sum * scale;
        let ccr_mean = ccr_sum * scale;
        trace.push(TraceRow {
            step,
            nlg_mean,
            ccr_mean,
            total_mean: nlg_mean + cfg.lambda * ccr_mean,
        });
    }

    Ok(TrainOutcome {
        policy,
        trace,
        baselines,
    })
}
