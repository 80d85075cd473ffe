//! Acceptance suite. Each criterion runs as one test and prints a single
//! `criterion N: PASS` line; a failing assertion names the criterion.
//!
//! 1. NLG metrics agree with an independent brute-force oracle to 1e-9.
//! 2. The 16-entry clinical reward term table is exact at beta_u = 0.5.
//! 3. EMA baselines follow the geometric-decay closed form to 1e-12.
//! 4. The REINFORCE estimator matches the enumerated exact gradient.
//! 5. Toy SCST training reproduces the truth report (labels and CIDEr-D).
//! 6. NLG-only vs clinical-dominant training trade off in both directions.
//! 7. Thirty curated sentences produce their pinned label vectors.
//! 8. The major-class baseline scores exactly the negative prevalence.
//! 9. The end-to-end evaluation reproduces byte-identical golden outputs.

mod oracle;

use radreport::corpus::{ParsedReport, Sentence, ViewPosition};
use radreport::labeler::{
    default_ruleset, label_report, FindingCategory, LabelVector, MentionLabel,
};
use radreport::metrics::{bleu, cider_d, rouge_l, TokenizedPair};
use radreport::policy::{
    build_training_idf, greedy_decode, reinforce_gradient, rollout_seed, sample, train,
    SentenceBank, ToyPolicy, TrainOptions,
};
use radreport::reward::{
    ccr_reward, combined_advantage, update_baselines, CcrTerms, EmaBaselines, RewardConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

fn toks(text: &str) -> Vec<String> {
    text.split_whitespace().map(String::from).collect()
}

fn pair(candidate: &str, references: &[&str]) -> TokenizedPair {
    TokenizedPair::new(toks(candidate), references.iter().map(|r| toks(r)).collect()).unwrap()
}

fn report(id: &str, texts: &[&str]) -> ParsedReport {
    ParsedReport {
        id: id.into(),
        sentences: texts
            .iter()
            .map(|t| Sentence::from_text(t).expect("sentence tokenizes"))
            .collect(),
        view: ViewPosition::Unknown,
    }
}

fn hand_corpus() -> Vec<TokenizedPair> {
    vec![
        pair("the lungs are clear and expanded .", &["the lungs are clear and expanded ."]),
        pair(
            "there is no acute cardiopulmonary process .",
            &["there is no acute cardiopulmonary process ."],
        ),
        pair(
            "heart size is normal .",
            &["heart size is normal .", "the heart is within normal limits ."],
        ),
        pair("the the the the", &["the cat"]),
        pair("", &["no pleural effusion ."]),
        pair("a b", &["a b c d"]),
        pair("x y z", &["no pneumothorax ."]),
        pair(
            "there is mild pleural effusion .",
            &["there is no pleural effusion ."],
        ),
        pair(
            "heart size is normal .",
            &["heart size is enlarged .", "heart size is normal ."],
        ),
        pair("clear are lungs the", &["the lungs are clear"]),
        pair(
            "the heart is enlarged with moderate cardiomegaly noted today .",
            &["moderate cardiomegaly ."],
        ),
        pair("a b c", &["a b", "a b c d"]),
        pair(
            "no focal consolidation pneumothorax or effusion .",
            &["no focal consolidation , pneumothorax or large effusion ."],
        ),
        pair("measures 3.5 cm .", &["measures 4 cm ."]),
        pair("very very large effusion .", &["very large effusion ."]),
        pair("stable", &["stable"]),
        pair("DATE exam compared to prior .", &["exam compared to DATE prior ."]),
        pair(
            "the lungs are clear .",
            &["the lungs are clear . no effusion ."],
        ),
        pair(
            "no pneumothorax .",
            &["no pneumothorax .", "pneumothorax absent .", "no ptx"],
        ),
        pair(
            "bilateral pleural effusions with compressive atelectasis .",
            &["small bilateral pleural effusions and atelectasis ."],
        ),
    ]
}

#[test]
fn criterion_1_metric_oracle_equivalence() {
    let start = Instant::now();
    let pairs = hand_corpus();
    assert_eq!(pairs.len(), 20, "criterion 1: corpus must have 20 pairs");

    let ours = bleu(&pairs, 4).expect("criterion 1: bleu computes");
    for k in 1..=4 {
        let reference = oracle::bleu(&pairs, k);
        assert!(
            (ours[k - 1] - reference).abs() < 1e-9,
            "criterion 1: BLEU-{k} {} vs oracle {reference}",
            ours[k - 1]
        );
    }
    let ours_rouge = rouge_l(&pairs).expect("criterion 1: rouge computes");
    let oracle_rouge = oracle::rouge_l(&pairs);
    assert!(
        (ours_rouge - oracle_rouge).abs() < 1e-9,
        "criterion 1: ROUGE-L {ours_rouge} vs oracle {oracle_rouge}"
    );
    let ours_cider = cider_d(&pairs).expect("criterion 1: cider computes");
    let oracle_cider = oracle::cider_d(&pairs);
    assert!(
        (ours_cider - oracle_cider).abs() < 1e-9,
        "criterion 1: CIDEr-D {ours_cider} vs oracle {oracle_cider}"
    );

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 5.0,
        "criterion 1: took {elapsed:?}, budget 5s"
    );
    println!(
        "criterion 1: PASS - BLEU-1..4, ROUGE-L, CIDEr-D match the oracle on 20 pairs \
         within 1e-9 ({elapsed:?})"
    );
}

#[test]
fn criterion_2_ccr_truth_table() {
    use MentionLabel::{Absent, Negative, Positive, Uncertain};
    let expected = [
        (Positive, Positive, 1.0),
        (Positive, Negative, 0.0),
        (Positive, Uncertain, 0.5),
        (Positive, Absent, 0.0),
        (Negative, Positive, 0.0),
        (Negative, Negative, 1.0),
        (Negative, Uncertain, 0.5),
        (Negative, Absent, 1.0),
        (Uncertain, Positive, 0.5),
        (Uncertain, Negative, 0.5),
        (Uncertain, Uncertain, 0.5),
        (Uncertain, Absent, 0.5),
        (Absent, Positive, 0.0),
        (Absent, Negative, 1.0),
        (Absent, Uncertain, 0.5),
        (Absent, Absent, 1.0),
    ];
    for (generated, truth, value) in expected {
        let got = radreport::reward::ccr_term(generated, truth, 0.5);
        assert_eq!(
            got, value,
            "criterion 2: term({generated:?}, {truth:?}) = {got}, expected {value}"
        );
    }
    println!("criterion 2: PASS - all 16 label combinations match the analytic table exactly");
}

#[test]
fn criterion_3_ema_closed_form() {
    for (start, target) in [(0.0, 1.0), (0.5, 0.7), (1.0, 0.25)] {
        let constant = CcrTerms::from_fn(|_| target);
        let mut baselines = EmaBaselines::from_terms(&CcrTerms::from_fn(|_| start));
        for k in 1..=100i32 {
            baselines = update_baselines(&baselines, &constant, 0.95);
            let value = baselines.get(FindingCategory::Edema).unwrap();
            let expected = 0.95f64.powi(k) * (start - target).abs();
            assert!(
                ((target - value).abs() - expected).abs() < 1e-12,
                "criterion 3: k={k} start={start} target={target}: \
                 |r - r_bar| = {} vs {expected}",
                (target - value).abs()
            );
        }
    }
    println!(
        "criterion 3: PASS - |r_bar_k - r| = 0.95^k |r_bar_0 - r| within 1e-12 for k <= 100"
    );
}

/// Fixed toy instance for the gradient check: 3 templates, 2 steps.
struct GradientFixture {
    bank: SentenceBank,
    truth: ParsedReport,
    policy: ToyPolicy,
    cfg: RewardConfig,
}

fn gradient_fixture() -> GradientFixture {
    let bank = SentenceBank::new(vec![
        Sentence::from_text("there is moderate cardiomegaly .").unwrap(),
        Sentence::from_text("no pleural effusion .").unwrap(),
        Sentence::from_text("the lungs are clear .").unwrap(),
    ])
    .unwrap();
    let truth = report(
        "truth",
        &["there is moderate cardiomegaly .", "no pleural effusion ."],
    );
    let policy = ToyPolicy::new(
        vec![vec![0.3, -0.1, 0.2], vec![-0.2, 0.4, 0.1]],
        vec![0.1, -0.3],
    )
    .unwrap();
    let cfg = RewardConfig {
        lambda: 2.0,
        ..RewardConfig::default()
    };
    GradientFixture {
        bank,
        truth,
        policy,
        cfg,
    }
}

fn softmax_probs(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn criterion_4_gradient_estimator() {
    let start = Instant::now();
    let fx = gradient_fixture();
    let rules = default_ruleset();
    let idf = build_training_idf(&fx.bank, &fx.truth).unwrap();
    let labels_truth = label_report(&fx.truth, rules);

    let p0 = softmax_probs(&fx.policy.template_logits()[0]);
    let p1 = softmax_probs(&fx.policy.template_logits()[1]);
    let s0 = sigmoid(fx.policy.stop_logits()[0]);
    let s1 = sigmoid(fx.policy.stop_logits()[1]);

    // every trajectory of the 2-step, 3-template policy
    let mut trajectories: Vec<(Vec<usize>, Vec<bool>, f64)> = Vec::new();
    for (t0, &p_first) in p0.iter().enumerate() {
        trajectories.push((vec![t0], vec![true], p_first * s0));
        for (t1, &p_second) in p1.iter().enumerate() {
            for d1 in [true, false] {
                let stop_p = if d1 { s1 } else { 1.0 - s1 };
                trajectories.push((
                    vec![t0, t1],
                    vec![false, d1],
                    p_first * (1.0 - s0) * p_second * stop_p,
                ));
            }
        }
    }
    let total_probability: f64 = trajectories.iter().map(|t| t.2).sum();
    assert!(
        (total_probability - 1.0).abs() < 1e-12,
        "criterion 4: enumeration must cover the whole trajectory space"
    );

    // exact gradient of E[combined reward] and the per-category mean terms
    let realize = |templates: &[usize]| -> ParsedReport {
        ParsedReport {
            id: "enum".into(),
            sentences: templates.iter().map(|&t| fx.bank.get(t).clone()).collect(),
            view: ViewPosition::Unknown,
        }
    };
    let mut exact_template = [[0.0f64; 3]; 2];
    let mut exact_stop = [0.0f64; 2];
    let mut mean_terms = [0.0f64; FindingCategory::COUNT];
    for (templates, stops, probability) in &trajectories {
        let realized = realize(templates);
        let labels = label_report(&realized, rules);
        let ccr = ccr_reward(&labels, &labels_truth, &fx.cfg);
        let nlg = idf.score_pair(
            &TokenizedPair::new(realized.flat_tokens(), vec![fx.truth.flat_tokens()]).unwrap(),
        );
        let reward = nlg + fx.cfg.lambda * ccr.total;
        for (category, term) in ccr.terms.iter() {
            mean_terms[category.index()] += probability * term;
        }
        for (i, (&template, &stop)) in templates.iter().zip(stops).enumerate() {
            let probs = if i == 0 { &p0 } else { &p1 };
            for (j, &p) in probs.iter().enumerate() {
                let indicator = if j == template { 1.0 } else { 0.0 };
                exact_template[i][j] += probability * reward * (indicator - p);
            }
            let sigma = if i == 0 { s0 } else { s1 };
            let taken = if stop { 1.0 } else { 0.0 };
            exact_stop[i] += probability * reward * (taken - sigma);
        }
    }

    // the last step's stop decision never changes the realized report, so
    // its exact gradient coordinate is structurally zero; a relative bound
    // is meaningless there and an absolute one is asserted instead
    assert!(
        exact_stop[1].abs() < 1e-12,
        "criterion 4: final-step stop coordinate should be structurally zero"
    );

    // Monte-Carlo REINFORCE mean over 10^5 seeded samples with constant
    // baselines (enumerated means) and the fixed greedy NLG baseline
    let baselines = EmaBaselines::from_terms(&CcrTerms::from_fn(|c| mean_terms[c.index()]));
    let greedy = greedy_decode(&fx.policy, &fx.bank);
    let samples = 100_000u64;
    let mut mc_template = [[0.0f64; 3]; 2];
    let mut mc_stop = [0.0f64; 2];
    for index in 0..samples {
        let rollout = sample(&fx.policy, &fx.bank, rollout_seed(12345, 0, index));
        let labels = label_report(&rollout.report, rules);
        let bundle = combined_advantage(
            &rollout.report,
            &greedy,
            &fx.truth,
            &labels,
            &labels_truth,
            &baselines,
            &fx.cfg,
            &idf,
        );
        let gradient = reinforce_gradient(&fx.policy, &rollout, bundle.combined_advantage);
        for i in 0..2 {
            for (slot, g) in mc_template[i].iter_mut().zip(&gradient.template[i]) {
                // reinforce_gradient returns the loss gradient; negate to
                // estimate the reward gradient the enumeration computes
                *slot -= g;
            }
            mc_stop[i] -= gradient.stop[i];
        }
    }
    let scale = 1.0 / samples as f64;
    for row in &mut mc_template {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    for v in &mut mc_stop {
        *v *= scale;
    }

    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..3 {
            let relative = (mc_template[i][j] - exact_template[i][j]).abs()
                / exact_template[i][j].abs();
            worst = worst.max(relative);
            assert!(
                relative < 0.05,
                "criterion 4: template[{i}][{j}] exact {} vs mc {} (rel {relative})",
                exact_template[i][j],
                mc_template[i][j]
            );
        }
    }
    let relative = (mc_stop[0] - exact_stop[0]).abs() / exact_stop[0].abs();
    worst = worst.max(relative);
    assert!(
        relative < 0.05,
        "criterion 4: stop[0] exact {} vs mc {} (rel {relative})",
        exact_stop[0],
        mc_stop[0]
    );
    assert!(
        mc_stop[1].abs() < 0.01,
        "criterion 4: stop[1] estimate {} should be near its exact zero",
        mc_stop[1]
    );

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "criterion 4: took {elapsed:?}, budget 30s"
    );
    println!(
        "criterion 4: PASS - Monte-Carlo gradient within 5% of the enumerated exact \
         gradient on every informative coordinate (worst {worst:.4}); the structurally \
         zero final-stop coordinate stays below 0.01 ({elapsed:?})"
    );
}

/// Bank and truth for the training criteria: ten templates, the first three
/// are the truth's sentences and each carries a positive finding.
fn training_fixture() -> (SentenceBank, ParsedReport) {
    let texts = [
        "there is moderate cardiomegaly .",
        "there is a chest tube .",
        "there is mild pulmonary edema .",
        "no pleural effusion .",
        "no pneumothorax .",
        "the lungs are clear .",
        "possible pneumonia .",
        "mild pleural effusion .",
        "no focal consolidation .",
        "healed rib fractures are noted .",
    ];
    let bank = SentenceBank::new(
        texts
            .iter()
            .map(|t| Sentence::from_text(t).unwrap())
            .collect(),
    )
    .unwrap();
    let truth = report("truth", &texts[..3]);
    (bank, truth)
}

#[test]
fn criterion_5_toy_scst_training() {
    let start = Instant::now();
    let (bank, truth) = training_fixture();
    assert_eq!(bank.len(), 10, "criterion 5: bank must have 10 templates");
    let rules = default_ruleset();
    let cfg = RewardConfig::default();
    assert_eq!(cfg.lambda, 10.0);
    let opts = TrainOptions {
        steps: 500,
        batch: 32,
        lr: 0.1,
        seed: 0,
    };
    let policy = ToyPolicy::uniform(4, bank.len()).unwrap();
    let outcome = train(policy, &truth, &bank, rules, &cfg, &opts).unwrap();

    let greedy = greedy_decode(&outcome.policy, &bank);
    let labels_generated = label_report(&greedy, rules);
    let labels_truth = label_report(&truth, rules);
    let ccr = ccr_reward(&labels_generated, &labels_truth, &cfg);
    assert_eq!(
        ccr.total, 14.0,
        "criterion 5: final greedy CCR total {} != 14.0",
        ccr.total
    );
    assert_eq!(
        labels_generated, labels_truth,
        "criterion 5: final greedy label vector differs from the truth"
    );

    let idf = build_training_idf(&bank, &truth).unwrap();
    let cider = idf.score_pair(
        &TokenizedPair::new(greedy.flat_tokens(), vec![truth.flat_tokens()]).unwrap(),
    );
    assert!(
        cider >= 9.0,
        "criterion 5: final greedy CIDEr-D {cider} < 9.0"
    );

    let first = outcome.trace.first().unwrap().total_mean;
    let last = outcome.trace.last().unwrap().total_mean;
    assert!(
        last > first,
        "criterion 5: mean total reward did not improve ({first} -> {last})"
    );

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "criterion 5: took {elapsed:?}, budget 60s"
    );
    println!(
        "criterion 5: PASS - greedy report reproduces the truth labels (CCR 14.0) with \
         CIDEr-D {cider:.3} >= 9.0; mean total reward {first:.2} -> {last:.2} ({elapsed:?})"
    );
}

#[test]
fn criterion_6_ablation_direction() {
    let bank = SentenceBank::new(vec![
        Sentence::from_text("mild pleural effusion .").unwrap(),
        Sentence::from_text("the lungs are clear .").unwrap(),
    ])
    .unwrap();
    let truth = report("truth", &["no pleural effusion ."]);
    let rules = default_ruleset();
    let idf = build_training_idf(&bank, &truth).unwrap();
    let labels_truth = label_report(&truth, rules);

    let run = |lambda: f64, seed: u64| -> (f64, f64, usize) {
        let cfg = RewardConfig {
            lambda,
            ..RewardConfig::default()
        };
        let opts = TrainOptions {
            steps: 300,
            batch: 16,
            lr: 0.2,
            seed,
        };
        let policy = ToyPolicy::uniform(1, bank.len()).unwrap();
        let outcome = train(policy, &truth, &bank, rules, &cfg, &opts).unwrap();
        assert!(
            outcome.trace.last().unwrap().total_mean >= outcome.trace.first().unwrap().total_mean,
            "criterion 6: training regressed for lambda={lambda} seed={seed}"
        );
        let greedy = greedy_decode(&outcome.policy, &bank);
        let labels = label_report(&greedy, rules);
        let ccr = ccr_reward(&labels, &labels_truth, &RewardConfig::default());
        let cider = idf.score_pair(
            &TokenizedPair::new(greedy.flat_tokens(), vec![truth.flat_tokens()]).unwrap(),
        );
        let agreement = FindingCategory::ALL
            .iter()
            .filter(|&&c| labels.get(c) == labels_truth.get(c))
            .count();
        (cider, ccr.total, agreement)
    };

    for seed in 0..5u64 {
        let (cider_nlg, ccr_nlg, _) = run(0.0, seed);
        let (cider_clinical, ccr_clinical, agreement) = run(100.0, seed);
        assert!(
            cider_nlg >= cider_clinical,
            "criterion 6: seed {seed}: NLG-only CIDEr-D {cider_nlg} < \
             clinical-dominant {cider_clinical}"
        );
        assert!(
            ccr_clinical >= ccr_nlg,
            "criterion 6: seed {seed}: clinical-dominant CCR {ccr_clinical} < \
             NLG-only {ccr_nlg}"
        );
        // the clinical-dominant decode agrees with the truth labels on at
        // least 13 of 14 categories (the truth's lone Negative may read as
        // Absent, which maps to the same disease state)
        assert!(
            agreement >= 13,
            "criterion 6: seed {seed}: clinical-dominant labels agree on only \
             {agreement}/14 categories"
        );
    }
    println!(
        "criterion 6: PASS - across 5 seeds, NLG-only training wins on CIDEr-D while \
         clinical-dominant training wins on CCR"
    );
}

/// One pinned suite entry: (sentence, category overrides, NoFinding-is-positive).
type SuiteEntry = (&'static str, Vec<(FindingCategory, MentionLabel)>, bool);

/// The 30-sentence labeler suite with its pinned label vectors.
fn labeler_suite() -> Vec<SuiteEntry> {
    use FindingCategory::*;
    use MentionLabel::*;
    vec![
        ("no pleural effusion", vec![(PleuralEffusion, Negative)], true),
        ("mild pleural effusion", vec![(PleuralEffusion, Positive)], false),
        ("possible pneumonia", vec![(Pneumonia, Uncertain)], false),
        ("the lungs are clear", vec![], true),
        ("there is no pneumothorax", vec![(Pneumothorax, Negative)], true),
        ("cardiomegaly is moderate", vec![(Cardiomegaly, Positive)], false),
        ("heart size is enlarged", vec![(Cardiomegaly, Positive)], false),
        (
            "the cardiomediastinal silhouette is enlarged",
            vec![(EnlargedCardiomediastinum, Positive)],
            false,
        ),
        ("no evidence of fracture", vec![(Fracture, Negative)], true),
        ("patient is comfortable", vec![], true),
        ("bibasilar atelectasis is mild", vec![(Atelectasis, Positive)], false),
        ("collapse of the left lobe", vec![(Atelectasis, Positive)], false),
        ("suspicious for consolidation", vec![(Consolidation, Uncertain)], false),
        ("pneumothorax is absent", vec![(Pneumothorax, Negative)], true),
        ("the effusion has resolved", vec![(PleuralEffusion, Negative)], true),
        (
            "there is a small left apical pneumothorax",
            vec![(Pneumothorax, Positive)],
            false,
        ),
        ("cannot exclude pneumonia", vec![(Pneumonia, Uncertain)], false),
        (
            "no focal consolidation , pneumothorax or large pleural effusion",
            vec![
                (Consolidation, Negative),
                (Pneumothorax, Negative),
                (PleuralEffusion, Negative),
            ],
            true,
        ),
        ("there is mild pulmonary edema", vec![(Edema, Positive)], false),
        ("vascular congestion has resolved", vec![(Edema, Negative)], true),
        ("a right picc line is in place", vec![(SupportDevices, Positive)], false),
        (
            "the endotracheal tube terminates 3 cm above the carina",
            vec![(SupportDevices, Positive)],
            false,
        ),
        ("lungs are free of infiltrates", vec![(AirspaceOpacity, Negative)], true),
        (
            "questionable opacity in the right lower lobe",
            vec![(AirspaceOpacity, Uncertain)],
            false,
        ),
        (
            "nodular opacity may represent a lung lesion",
            vec![(LungLesion, Uncertain), (AirspaceOpacity, Uncertain)],
            false,
        ),
        ("negative for pneumonia or infectious process", vec![(Pneumonia, Negative)], true),
        (
            "pleural thickening is noted on the right",
            vec![(PleuralOther, Positive)],
            false,
        ),
        (
            "stable fibrothorax without new effusion",
            vec![(PleuralOther, Positive), (PleuralEffusion, Negative)],
            false,
        ),
        (
            "resolution of the airspace opacity",
            vec![(AirspaceOpacity, Negative)],
            true,
        ),
        ("DATE exam shows clear lungs", vec![], true),
    ]
}

#[test]
fn criterion_7_labeler_suite() {
    let suite = labeler_suite();
    assert_eq!(suite.len(), 30, "criterion 7: suite must have 30 sentences");
    let rules = default_ruleset();
    for (text, overrides, no_finding_positive) in suite {
        let single = report("s", &[text]);
        let got = label_report(&single, rules);
        let mut expected = LabelVector::all(MentionLabel::Absent);
        for (category, label) in overrides {
            expected.set(category, label);
        }
        expected.set(
            FindingCategory::NoFinding,
            if no_finding_positive {
                MentionLabel::Positive
            } else {
                MentionLabel::Negative
            },
        );
        assert_eq!(got, expected, "criterion 7: {text:?}");
    }
    println!("criterion 7: PASS - all 30 curated sentences produce their pinned label vectors");
}

#[test]
fn criterion_8_major_class_identity() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let reports = 2000usize;
    let truth: Vec<(String, LabelVector)> = (0..reports)
        .map(|i| {
            let mut vector = LabelVector::all(MentionLabel::Negative);
            for category in FindingCategory::ALL {
                if rng.gen::<f64>() < 0.167 {
                    vector.set(category, MentionLabel::Positive);
                }
            }
            (format!("r{i:05}"), vector)
        })
        .collect();

    let predictions = radreport::eval::major_class(&truth);
    let scores = radreport::eval::clinical_scores(
        &predictions,
        &truth,
        radreport::eval::UncertainPolicy::Pos,
    )
    .unwrap();

    // exact identity with the measured negative prevalence
    let mut prevalence_sum = 0.0;
    for category in FindingCategory::ALL {
        let negatives = truth
            .iter()
            .filter(|(_, v)| v.get(category) == MentionLabel::Negative)
            .count();
        prevalence_sum += negatives as f64 / reports as f64;
    }
    let measured = prevalence_sum / FindingCategory::COUNT as f64;
    assert!(
        (scores.accuracy_macro - measured).abs() < 1e-12,
        "criterion 8: accuracy_macro {} != measured negative prevalence {measured}",
        scores.accuracy_macro
    );
    assert!(
        (scores.accuracy_macro - 0.833).abs() <= 0.01,
        "criterion 8: accuracy_macro {} outside 0.833 +/- 0.01",
        scores.accuracy_macro
    );
    assert_eq!(scores.precision_macro, 0.0, "criterion 8: zero convention");
    println!(
        "criterion 8: PASS - major-class accuracy_macro {:.4} equals the measured negative \
         prevalence exactly and sits within 0.833 +/- 0.01",
        scores.accuracy_macro
    );
}

fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/golden")
        .join(name)
}

#[test]
fn criterion_9_golden_evaluation_run() {
    let out_dir = tempfile::tempdir().unwrap();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_radreport"))
        .args([
            "evaluate",
            "--generated",
            fixture_path("generated.jsonl").to_str().unwrap(),
            "--truth",
            fixture_path("truth.jsonl").to_str().unwrap(),
            "--rules",
            fixture_path("rules.json").to_str().unwrap(),
            "--config",
            fixture_path("eval_config.json").to_str().unwrap(),
            "--out-dir",
            out_dir.path().to_str().unwrap(),
        ])
        .stderr(std::process::Stdio::null())
        .status()
        .expect("criterion 9: evaluate runs");
    assert!(status.success(), "criterion 9: evaluate exited nonzero");

    for name in ["nlg_metrics.json", "clinical_scores.json", "per_category.csv"] {
        let got = std::fs::read(out_dir.path().join(name))
            .unwrap_or_else(|e| panic!("criterion 9: missing output {name}: {e}"));
        let expected = std::fs::read(fixture_path("expected").join(name))
            .unwrap_or_else(|e| panic!("criterion 9: missing golden {name}: {e}"));
        assert_eq!(
            got, expected,
            "criterion 9: {name} differs from the golden file"
        );
    }
    println!(
        "criterion 9: PASS - evaluate reproduced byte-identical golden outputs for all \
         three artifacts"
    );
}

#[test]
fn evaluation_failure_leaves_no_partial_outputs() {
    // a generated id missing from the truth set must exit nonzero and write
    // nothing
    let out_dir = tempfile::tempdir().unwrap();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_radreport"))
        .args([
            "evaluate",
            "--generated",
            fixture_path("generated.jsonl").to_str().unwrap(),
            "--truth",
            fixture_path("truth_missing_id.jsonl").to_str().unwrap(),
            "--rules",
            fixture_path("rules.json").to_str().unwrap(),
            "--config",
            fixture_path("eval_config.json").to_str().unwrap(),
            "--out-dir",
            out_dir.path().to_str().unwrap(),
        ])
        .stderr(std::process::Stdio::null())
        .status()
        .expect("evaluate runs");
    assert!(!status.success());
    let leftovers: Vec<_> = std::fs::read_dir(out_dir.path())
        .map(|entries| entries.flatten().map(|e| e.file_name()).collect())
        .unwrap_or_default();
    assert!(leftovers.is_empty(), "partial outputs written: {leftovers:?}");
}
