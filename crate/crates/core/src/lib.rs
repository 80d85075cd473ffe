//! Evaluation and reward toolkit for radiology report generation.
//!
//! The crate covers the full desk-scale stack:
//!
//! - [`corpus`] - report ingestion: section extraction, tokenization,
//!   sentence splitting, vocabulary building, duplicate-sentence removal.
//! - [`labeler`] - rule-based finding annotation: phrase patterns plus
//!   negation/uncertainty cue scoping over 14 finding categories.
//! - [`metrics`] - corpus-level NLG metrics: BLEU-1..4, ROUGE-L, CIDEr-D.
//! - [`reward`] - the clinically coherent reward over disease-state
//!   distributions, per-category EMA baselines, and the combined advantage
//!   with a greedy-decode NLG baseline.
//! - [`policy`] - a toy hierarchical generator (softmax template choice plus
//!   Bernoulli stop signal) trained with REINFORCE on the combined reward.
//! - [`eval`] - clinical efficacy scoring (macro/micro precision, recall,
//!   accuracy), reference baselines, and the end-to-end evaluation driver.

pub mod corpus;
pub mod eval;
pub mod labeler;
pub mod metrics;
pub mod policy;
pub mod reward;
