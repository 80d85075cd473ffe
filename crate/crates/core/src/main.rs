use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use radreport::corpus::{
    build_vocabulary, parse_report, read_parsed_reports, read_raw_reports, write_parsed_reports,
    ParsedReport, SectionLexicon, Sentence,
};
use radreport::eval::{
    run_evaluation, EvalOptions, EvalRunConfig, UncertainPolicy,
};
use radreport::labeler::{
    default_ruleset, label_report, load_ruleset, read_labels_csv, write_labels_csv, LabelVector,
};
use radreport::metrics::{evaluate_nlg, CiderIdf};
use radreport::policy::{
    beam_decode, greedy_decode, train, SentenceBank, ToyPolicy, TrainOptions,
};
use radreport::reward::{ccr_reward, update_baselines, EmaBaselines, RewardConfig};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "radreport",
    about = "Evaluation and reward toolkit for radiology report generation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus ingestion utilities
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
    /// Label parsed reports with the rule-based annotator
    Label(LabelArgs),
    /// Score generated reports against ground truth with NLG metrics
    Score(ScoreArgs),
    /// Compute clinically coherent reward bundles per report
    Reward(RewardArgs),
    /// Train the toy template policy with REINFORCE
    TrainToy(TrainToyArgs),
    /// End-to-end evaluation: NLG metrics plus clinical scores
    Evaluate(EvaluateArgs),
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Parse raw reports into findings sentences and build a vocabulary
    Parse(CorpusParseArgs),
}

#[derive(Args)]
struct CorpusParseArgs {
    /// Raw reports, JSON lines: {"id", "text", "view"}
    #[arg(long = "in")]
    input: PathBuf,
    /// Parsed output, JSON lines: {"id", "sentences", "view"}
    #[arg(long)]
    out: PathBuf,
    /// Minimum token frequency kept in the vocabulary
    #[arg(long)]
    min_count: usize,
    /// Also write the vocabulary as JSON
    #[arg(long)]
    vocab_out: Option<PathBuf>,
}

#[derive(Args)]
struct LabelArgs {
    /// Parsed reports, JSON lines
    #[arg(long = "in")]
    input: PathBuf,
    /// Rule set JSON
    #[arg(long)]
    rules: PathBuf,
    /// Output labels CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Generated reports, JSON lines
    #[arg(long)]
    generated: PathBuf,
    /// Ground-truth reports, JSON lines
    #[arg(long)]
    truth: PathBuf,
    /// Output metrics JSON
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RewardArgs {
    /// Generated reports, JSON lines
    #[arg(long)]
    generated: PathBuf,
    /// Ground-truth reports, JSON lines
    #[arg(long)]
    truth: PathBuf,
    /// Labels CSV for the generated reports
    #[arg(long)]
    labels_gen: PathBuf,
    /// Labels CSV for the ground-truth reports
    #[arg(long)]
    labels_true: PathBuf,
    /// Reward config JSON: {"beta_u", "gamma", "lambda"}
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct TrainToyArgs {
    /// Sentence bank, JSON lines: {"text": "..."}
    #[arg(long)]
    bank: PathBuf,
    /// Ground-truth report, JSON lines with exactly one parsed report
    #[arg(long)]
    truth: PathBuf,
    /// Reward config JSON
    #[arg(long)]
    config: PathBuf,
    /// Training steps
    #[arg(long)]
    steps: usize,
    /// Rollouts per step
    #[arg(long)]
    batch: usize,
    /// Learning rate
    #[arg(long)]
    lr: f64,
    /// Master seed
    #[arg(long)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Maximum sentences the policy can emit
    #[arg(long, default_value_t = 4)]
    max_steps: usize,
    /// Decode mode for the final report
    #[arg(long, value_enum, default_value_t = DecodeMode::Greedy)]
    decode: DecodeMode,
    /// Beam width for beam decoding
    #[arg(long, default_value_t = 4)]
    beam_size: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecodeMode {
    Greedy,
    Beam,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Generated reports, JSON lines
    #[arg(long)]
    generated: PathBuf,
    /// Ground-truth reports, JSON lines
    #[arg(long)]
    truth: PathBuf,
    /// Rule set JSON
    #[arg(long)]
    rules: PathBuf,
    /// Evaluation options JSON: {"u_as", "dedupe"}
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out_dir: PathBuf,
    /// Override how uncertain labels binarize
    #[arg(long, value_enum)]
    u_as: Option<UncertainArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum UncertainArg {
    Pos,
    Neg,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Corpus {
            command: CorpusCommand::Parse(args),
        } => corpus_parse(args),
        Command::Label(args) => label(args),
        Command::Score(args) => score(args),
        Command::Reward(args) => reward(args),
        Command::TrainToy(args) => train_toy(args),
        Command::Evaluate(args) => evaluate(args),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn read_parsed(path: &Path) -> Result<Vec<ParsedReport>> {
    read_parsed_reports(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn read_labels(path: &Path) -> Result<Vec<(String, LabelVector)>> {
    read_labels_csv(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn corpus_parse(args: CorpusParseArgs) -> Result<()> {
    let raws = read_raw_reports(open(&args.input)?)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let lexicon = SectionLexicon::default();
    let mut parsed = Vec::new();
    let mut skipped = 0usize;
    for raw in &raws {
        match parse_report(raw, &lexicon) {
            Some(report) => parsed.push(report),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        eprintln!("skipped {skipped} report(s) without a findings section");
    }
    let out = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_parsed_reports(BufWriter::new(out), &parsed)?;
    eprintln!("wrote {} parsed report(s) to {}", parsed.len(), args.out.display());

    if let Some(vocab_out) = &args.vocab_out {
        let vocab = build_vocabulary(&parsed, args.min_count)?;
        std::fs::write(vocab_out, vocab.to_json_string())
            .with_context(|| format!("writing {}", vocab_out.display()))?;
        eprintln!("vocabulary: {} token(s) at min_count {}", vocab.len(), args.min_count);
    }
    Ok(())
}

fn label(args: LabelArgs) -> Result<()> {
    let reports = read_parsed(&args.input)?;
    let load = load_ruleset(&args.rules)
        .with_context(|| format!("loading {}", args.rules.display()))?;
    for warning in &load.warnings {
        eprintln!("warning: {warning}");
    }
    let rows: Vec<(String, LabelVector)> = reports
        .iter()
        .map(|r| (r.id.clone(), label_report(r, &load.rules)))
        .collect();
    let out = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_labels_csv(BufWriter::new(out), &rows)?;
    eprintln!("labeled {} report(s)", rows.len());
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let generated = read_parsed(&args.generated)?;
    let truth = read_parsed(&args.truth)?;
    let metrics = evaluate_nlg(&generated, &truth)?;
    let mut json = serde_json::to_string_pretty(&metrics)?;
    json.push('\n');
    std::fs::write(&args.out, &json).with_context(|| format!("writing {}", args.out.display()))?;
    print!("{json}");
    Ok(())
}

fn reward(args: RewardArgs) -> Result<()> {
    let generated = read_parsed(&args.generated)?;
    let truth = read_parsed(&args.truth)?;
    let labels_gen: BTreeMap<String, LabelVector> = read_labels(&args.labels_gen)?.into_iter().collect();
    let labels_true: BTreeMap<String, LabelVector> = read_labels(&args.labels_true)?.into_iter().collect();
    let cfg = RewardConfig::from_json_str(
        &std::fs::read_to_string(&args.config)
            .with_context(|| format!("reading {}", args.config.display()))?,
    )?;

    let truth_by_id: BTreeMap<&str, &ParsedReport> =
        truth.iter().map(|r| (r.id.as_str(), r)).collect();
    let documents: Vec<Vec<Vec<String>>> =
        truth.iter().map(|r| vec![r.flat_tokens()]).collect();
    let idf = CiderIdf::from_documents(&documents)
        .context("building the IDF context from the truth corpus")?;

    // No greedy-decode corpus exists on this path, so the NLG baseline is
    // zero; the EMA baselines stream over the reports in file order.
    let mut baselines = EmaBaselines::new();
    let mut report_values = Vec::new();
    let mut sums = (0.0f64, 0.0f64, 0.0f64);
    for report in &generated {
        let truth_report = truth_by_id
            .get(report.id.as_str())
            .with_context(|| format!("report {:?} missing from the truth corpus", report.id))?;
        let gen_labels = labels_gen
            .get(&report.id)
            .with_context(|| format!("report {:?} missing from --labels-gen", report.id))?;
        let true_labels = labels_true
            .get(&report.id)
            .with_context(|| format!("report {:?} missing from --labels-true", report.id))?;

        let ccr = ccr_reward(gen_labels, true_labels, &cfg);
        let pair = radreport::metrics::TokenizedPair::new(
            report.flat_tokens(),
            vec![truth_report.flat_tokens()],
        )?;
        let nlg_reward = idf.score_pair(&pair);
        let clinical_advantage: f64 = ccr
            .terms
            .iter()
            .map(|(category, term)| term - baselines.get(category).unwrap_or(term))
            .sum();
        let bundle = radreport::reward::RewardBundle {
            ccr_terms: ccr.terms,
            ccr_total: ccr.total,
            nlg_reward,
            nlg_baseline_reward: 0.0,
            combined_advantage: nlg_reward + cfg.lambda * clinical_advantage,
        };
        baselines = update_baselines(&baselines, &ccr.terms, cfg.gamma);

        sums.0 += bundle.ccr_total;
        sums.1 += bundle.nlg_reward;
        sums.2 += bundle.combined_advantage;
        let mut value = serde_json::to_value(bundle)?;
        value
            .as_object_mut()
            .expect("bundle serializes to an object")
            .insert("id".into(), serde_json::json!(report.id));
        report_values.push(value);
    }
    let n = generated.len().max(1) as f64;
    let output = serde_json::json!({
        "reports": report_values,
        "aggregate": {
            "mean_ccr_total": sums.0 / n,
            "mean_nlg_reward": sums.1 / n,
            "mean_combined_advantage": sums.2 / n,
        },
    });
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}

#[derive(Deserialize)]
struct BankLine {
    text: String,
}

fn train_toy(args: TrainToyArgs) -> Result<()> {
    let bank_file = std::fs::read_to_string(&args.bank)
        .with_context(|| format!("reading {}", args.bank.display()))?;
    let mut templates = Vec::new();
    for (i, line) in bank_file.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: BankLine = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", args.bank.display(), i + 1))?;
        let sentence = Sentence::from_text(&entry.text)
            .with_context(|| format!("{}:{}: template has no tokens", args.bank.display(), i + 1))?;
        templates.push(sentence);
    }
    let bank = SentenceBank::new(templates)?;

    let truth_reports = read_parsed(&args.truth)?;
    if truth_reports.len() != 1 {
        bail!(
            "{} must contain exactly one report, got {}",
            args.truth.display(),
            truth_reports.len()
        );
    }
    let truth = &truth_reports[0];

    let cfg = RewardConfig::from_json_str(
        &std::fs::read_to_string(&args.config)
            .with_context(|| format!("reading {}", args.config.display()))?,
    )?;
    let policy = ToyPolicy::uniform(args.max_steps, bank.len())?;
    let opts = TrainOptions {
        steps: args.steps,
        batch: args.batch,
        lr: args.lr,
        seed: args.seed,
    };
    let outcome = train(policy, truth, &bank, default_ruleset(), &cfg, &opts)?;

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("policy.json"), outcome.policy.to_json_string())?;

    let mut trace_csv = String::from("step,nlg_mean,ccr_mean,total_mean\n");
    for row in &outcome.trace {
        trace_csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            row.step, row.nlg_mean, row.ccr_mean, row.total_mean
        ));
    }
    std::fs::write(args.out.join("reward_trace.csv"), trace_csv)?;

    let decoded = match args.decode {
        DecodeMode::Greedy => greedy_decode(&outcome.policy, &bank),
        DecodeMode::Beam => beam_decode(&outcome.policy, &bank, args.beam_size),
    };
    let out = File::create(args.out.join("greedy_report.jsonl"))?;
    write_parsed_reports(BufWriter::new(out), std::slice::from_ref(&decoded))?;

    let last = outcome.trace.last().expect("at least one step");
    eprintln!(
        "trained {} step(s); final mean total reward {:.4}",
        outcome.trace.len(),
        last.total_mean
    );
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", serde_json::to_string(&decoded)?)?;
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut options = EvalOptions::from_json_str(
        &std::fs::read_to_string(&args.config)
            .with_context(|| format!("reading {}", args.config.display()))?,
    )
    .with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(u_as) = args.u_as {
        options.u_as = match u_as {
            UncertainArg::Pos => UncertainPolicy::Pos,
            UncertainArg::Neg => UncertainPolicy::Neg,
        };
    }
    let outputs = run_evaluation(&EvalRunConfig {
        generated: args.generated,
        truth: args.truth,
        rules: args.rules,
        out_dir: args.out_dir.clone(),
        options,
    })?;
    eprintln!(
        "wrote nlg_metrics.json, clinical_scores.json, per_category.csv to {}",
        args.out_dir.display()
    );
    eprintln!(
        "cider_d {:.4}, accuracy_macro {:.4}",
        outputs.metrics.cider_d, outputs.scores.accuracy_macro
    );
    Ok(())
}
