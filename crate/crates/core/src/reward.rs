//! The clinically coherent reward: mention labels induce distributions over
//! the binary disease state, and the per-category reward is the inner
//! product of those distributions between a generated report and its ground
//! truth. Per-category EMA baselines and the greedy-decode NLG baseline
//! combine into a single weighted advantage.

use crate::corpus::ParsedReport;
use crate::labeler::{FindingCategory, LabelVector, MentionLabel};
use crate::metrics::{CiderIdf, MetricsError, TokenizedPair};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum RewardError {
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Probability over the binary disease state, stored as `p_pos`;
/// `p_neg` is its exact complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDistribution {
    p_pos: f64,
}

impl StateDistribution {
    pub fn p_pos(self) -> f64 {
        self.p_pos
    }

    pub fn p_neg(self) -> f64 {
        1.0 - self.p_pos
    }
}

/// Reward hyperparameters.
///
/// `beta_u` is the positive-state probability assigned to an uncertain
/// mention; `gamma` the EMA momentum; `lambda` the weight of the clinical
/// term against the NLG term. `include_no_finding` controls whether the
/// derived NoFinding category participates in the clinical sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub beta_u: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub include_no_finding: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            beta_u: 0.5,
            gamma: 0.95,
            lambda: 10.0,
            include_no_finding: true,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(0.0..=1.0).contains(&self.beta_u) {
            return Err(RewardError::InvalidConfig(format!(
                "beta_u must be in [0, 1], got {}",
                self.beta_u
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(RewardError::InvalidConfig(format!(
                "gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(RewardError::InvalidConfig(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn from_json_str(data: &str) -> Result<RewardConfig, RewardError> {
        let cfg: RewardConfig = serde_json::from_str(data)
            .map_err(|e| RewardError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-category reward terms in canonical category order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcrTerms {
    values: [f64; FindingCategory::COUNT],
}

impl CcrTerms {
    pub fn from_fn(f: impl Fn(FindingCategory) -> f64) -> CcrTerms {
        let mut values = [0.0; FindingCategory::COUNT];
        for category in FindingCategory::ALL {
            values[category.index()] = f(category);
        }
        CcrTerms { values }
    }

    pub fn get(&self, category: FindingCategory) -> f64 {
        self.values[category.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (FindingCategory, f64)> + '_ {
        FindingCategory::ALL.iter().map(|&c| (c, self.get(c)))
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Per-category running means of the clinical reward terms.
///
/// A category's baseline is unset until first observed; the first update
/// initializes it to the observed term rather than decaying from zero.
/// Single writer; reads are safe between updates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmaBaselines {
    values: [Option<f64>; FindingCategory::COUNT],
}

impl EmaBaselines {
    pub fn new() -> EmaBaselines {
        EmaBaselines::default()
    }

    /// Baselines pre-seeded with explicit values for every category.
    pub fn from_terms(terms: &CcrTerms) -> EmaBaselines {
        EmaBaselines {
            values: terms.values.map(Some),
        }
    }

    pub fn get(&self, category: FindingCategory) -> Option<f64> {
        self.values[category.index()]
    }
}

/// Maps a mention label to its induced disease-state distribution:
/// Positive reads as certainly diseased, Negative and Absent as certainly
/// healthy, Uncertain as positive with probability `beta_u`.
pub fn state_dist(label: MentionLabel, beta_u: f64) -> StateDistribution {
    let p_pos = match label {
        MentionLabel::Positive => 1.0,
        MentionLabel::Negative | MentionLabel::Absent => 0.0,
        MentionLabel::Uncertain => beta_u,
    };
    StateDistribution { p_pos }
}

/// Inner product of the state distributions induced by two labels.
/// Symmetric in its arguments and bounded in `[0, 1]`.
pub fn ccr_term(generated: MentionLabel, truth: MentionLabel, beta_u: f64) -> f64 {
    let g = state_dist(generated, beta_u);
    let t = state_dist(truth, beta_u);
    g.p_pos() * t.p_pos() + g.p_neg() * t.p_neg()
}

/// Per-category clinical reward and its sum over categories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcrReward {
    pub terms: CcrTerms,
    pub total: f64,
}

/// Computes every category term plus the total, in `[0, 14]`.
/// When `include_no_finding` is off, the NoFinding term is forced to zero.
pub fn ccr_reward(generated: &LabelVector, truth: &LabelVector, cfg: &RewardConfig) -> CcrReward {
    let mut values = [0.0; FindingCategory::COUNT];
    for category in FindingCategory::ALL {
        if category == FindingCategory::NoFinding && !cfg.include_no_finding {
            continue;
        }
        values[category.index()] =
            ccr_term(generated.get(category), truth.get(category), cfg.beta_u);
    }
    let terms = CcrTerms { values };
    CcrReward {
        terms,
        total: terms.total(),
    }
}

/// One EMA step per category: `r_bar <- gamma * r_bar + (1 - gamma) * r`.
/// Unset categories are initialized to the observed term. Returns a new
/// value; the input is never mutated.
pub fn update_baselines(baselines: &EmaBaselines, terms: &CcrTerms, gamma: f64) -> EmaBaselines {
    let mut values = baselines.values;
    for (category, term) in terms.iter() {
        let slot = &mut values[category.index()];
        *slot = Some(match *slot {
            Some(prev) => gamma * prev + (1.0 - gamma) * term,
            None => term,
        });
    }
    EmaBaselines { values }
}

fn pair_against(report: &ParsedReport, truth: &ParsedReport) -> TokenizedPair {
    TokenizedPair::new(report.flat_tokens(), vec![truth.flat_tokens()])
        .expect("single reference is non-empty")
}

/// Self-critical NLG advantage: candidate reward minus the reward of the
/// greedily decoded report, both CIDEr-D against the same truth under a
/// prebuilt IDF context.
pub fn nlg_advantage(
    sampled: &ParsedReport,
    greedy: &ParsedReport,
    truth: &ParsedReport,
    idf: &CiderIdf,
) -> f64 {
    idf.score_pair(&pair_against(sampled, truth)) - idf.score_pair(&pair_against(greedy, truth))
}

/// All reward pieces for one sampled report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardBundle {
    #[serde(serialize_with = "serialize_terms")]
    pub ccr_terms: CcrTerms,
    pub ccr_total: f64,
    pub nlg_reward: f64,
    pub nlg_baseline_reward: f64,
    pub combined_advantage: f64,
}

fn serialize_terms<S: serde::Serializer>(terms: &CcrTerms, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(FindingCategory::COUNT))?;
    for (category, value) in terms.iter() {
        map.serialize_entry(category.display_name(), &value)?;
    }
    map.end()
}

/// Assembles the combined advantage:
/// `(nlg - nlg_baseline) + lambda * sum_t (ccr_t - baseline_t)`.
///
/// A category whose EMA baseline is still unset contributes zero advantage,
/// matching initialization-to-first-observation. Baselines are not updated
/// here; callers sequence [`update_baselines`] afterwards.
#[allow(clippy::too_many_arguments)]
pub fn combined_advantage(
    sampled: &ParsedReport,
    greedy: &ParsedReport,
    truth: &ParsedReport,
    labels_generated: &LabelVector,
    labels_truth: &LabelVector,
    baselines: &EmaBaselines,
    cfg: &RewardConfig,
    idf: &CiderIdf,
) -> RewardBundle {
    let ccr = ccr_reward(labels_generated, labels_truth, cfg);
    let nlg_reward = idf.score_pair(&pair_against(sampled, truth));
    let nlg_baseline_reward = idf.score_pair(&pair_against(greedy, truth));
    let clinical_advantage: f64 = ccr
        .terms
        .iter()
        .map(|(category, term)| term - baselines.get(category).unwrap_or(term))
        .sum();
    RewardBundle {
        ccr_terms: ccr.terms,
        ccr_total: ccr.total,
        nlg_reward,
        nlg_baseline_reward,
        combined_advantage: (nlg_reward - nlg_baseline_reward) + cfg.lambda * clinical_advantage,
    }
}
