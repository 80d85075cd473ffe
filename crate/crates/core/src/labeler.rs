//! Rule-based finding annotation: phrase patterns plus negation and
//! uncertainty cue scoping, producing one of four outcomes per finding
//! category for each report.
//!
//! The rule data is transparent and file-configurable; a bundled default
//! rule set ships with the crate (see [`default_ruleset`]). A cue affects a
//! matched phrase when it lies within `window` tokens on its side of the
//! match, inside the same sentence. Precedence at a single match site is
//! uncertainty over negation over a positive reading.

use crate::corpus::{tokenize, ParsedReport, Sentence};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::LazyLock;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum LabelerError {
    #[error("invalid rule set:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("labels CSV row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The fourteen finding categories, in their stable serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FindingCategory {
    NoFinding,
    EnlargedCardiomediastinum,
    Cardiomegaly,
    LungLesion,
    AirspaceOpacity,
    Edema,
    Consolidation,
    Pneumonia,
    Atelectasis,
    Pneumothorax,
    PleuralEffusion,
    PleuralOther,
    Fracture,
    SupportDevices,
}

impl FindingCategory {
    pub const COUNT: usize = 14;

    pub const ALL: [FindingCategory; FindingCategory::COUNT] = [
        FindingCategory::NoFinding,
        FindingCategory::EnlargedCardiomediastinum,
        FindingCategory::Cardiomegaly,
        FindingCategory::LungLesion,
        FindingCategory::AirspaceOpacity,
        FindingCategory::Edema,
        FindingCategory::Consolidation,
        FindingCategory::Pneumonia,
        FindingCategory::Atelectasis,
        FindingCategory::Pneumothorax,
        FindingCategory::PleuralEffusion,
        FindingCategory::PleuralOther,
        FindingCategory::Fracture,
        FindingCategory::SupportDevices,
    ];

    pub fn index(self) -> usize {
        FindingCategory::ALL
            .iter()
            .position(|c| *c == self)
            .expect("category is in ALL")
    }

    /// Human-readable name as used in label CSV headers.
    pub fn display_name(self) -> &'static str {
        match self {
            FindingCategory::NoFinding => "No Finding",
            FindingCategory::EnlargedCardiomediastinum => "Enlarged Cardiomediastinum",
            FindingCategory::Cardiomegaly => "Cardiomegaly",
            FindingCategory::LungLesion => "Lung Lesion",
            FindingCategory::AirspaceOpacity => "Airspace Opacity",
            FindingCategory::Edema => "Edema",
            FindingCategory::Consolidation => "Consolidation",
            FindingCategory::Pneumonia => "Pneumonia",
            FindingCategory::Atelectasis => "Atelectasis",
            FindingCategory::Pneumothorax => "Pneumothorax",
            FindingCategory::PleuralEffusion => "Pleural Effusion",
            FindingCategory::PleuralOther => "Pleural Other",
            FindingCategory::Fracture => "Fracture",
            FindingCategory::SupportDevices => "Support Devices",
        }
    }

    pub fn from_display_name(name: &str) -> Option<FindingCategory> {
        FindingCategory::ALL
            .iter()
            .copied()
            .find(|c| c.display_name() == name)
    }

    /// Variant name as used for rule-file keys (e.g. `PleuralEffusion`).
    pub fn key_name(self) -> String {
        serde_json::to_value(self)
            .expect("category serializes")
            .as_str()
            .expect("category is a string")
            .to_string()
    }

    fn from_key_name(name: &str) -> Option<FindingCategory> {
        serde_json::from_value(serde_json::Value::String(name.to_string())).ok()
    }
}

impl fmt::Display for FindingCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Outcome of labeling one category in a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum MentionLabel {
    Positive,
    Negative,
    Uncertain,
    #[default]
    Absent,
}

impl MentionLabel {
    /// Aggregation precedence: Positive > Uncertain > Negative > Absent.
    fn rank(self) -> u8 {
        match self {
            MentionLabel::Positive => 3,
            MentionLabel::Uncertain => 2,
            MentionLabel::Negative => 1,
            MentionLabel::Absent => 0,
        }
    }

    /// CSV cell in the CheXpert export convention.
    pub fn to_csv_cell(self) -> &'static str {
        match self {
            MentionLabel::Positive => "1.0",
            MentionLabel::Negative => "0.0",
            MentionLabel::Uncertain => "-1.0",
            MentionLabel::Absent => "",
        }
    }

    pub fn from_csv_cell(cell: &str) -> Option<MentionLabel> {
        let cell = cell.trim();
        if cell.is_empty() {
            return Some(MentionLabel::Absent);
        }
        let value = cell.parse::<f64>().ok()?;
        if value == 1.0 {
            Some(MentionLabel::Positive)
        } else if value == 0.0 {
            Some(MentionLabel::Negative)
        } else if value == -1.0 {
            Some(MentionLabel::Uncertain)
        } else {
            None
        }
    }
}

/// Per-report outcome over all fourteen categories. Total by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelVector {
    labels: [MentionLabel; FindingCategory::COUNT],
}

impl Default for LabelVector {
    fn default() -> Self {
        LabelVector::all(MentionLabel::Absent)
    }
}

impl LabelVector {
    pub fn all(label: MentionLabel) -> LabelVector {
        LabelVector {
            labels: [label; FindingCategory::COUNT],
        }
    }

    pub fn get(&self, category: FindingCategory) -> MentionLabel {
        self.labels[category.index()]
    }

    pub fn set(&mut self, category: FindingCategory, label: MentionLabel) {
        self.labels[category.index()] = label;
    }

    pub fn iter(&self) -> impl Iterator<Item = (FindingCategory, MentionLabel)> + '_ {
        FindingCategory::ALL.iter().map(|&c| (c, self.get(c)))
    }
}

/// One token-sequence pattern; `*` matches exactly one arbitrary token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenPattern {
    items: Vec<PatternItem>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum PatternItem {
    Literal(String),
    Wildcard,
}

impl TokenPattern {
    /// Parses a pattern through the corpus tokenizer.
    pub fn parse(text: &str) -> Result<TokenPattern, String> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(format!("pattern {text:?} has no tokens"));
        }
        let items = tokens
            .into_iter()
            .map(|t| {
                if t == "*" {
                    PatternItem::Wildcard
                } else {
                    PatternItem::Literal(t)
                }
            })
            .collect();
        Ok(TokenPattern { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn matches_at(&self, tokens: &[String], start: usize) -> bool {
        if start + self.items.len() > tokens.len() {
            return false;
        }
        self.items.iter().zip(&tokens[start..]).all(|(item, tok)| {
            match item {
                PatternItem::Literal(lit) => lit == tok,
                PatternItem::Wildcard => true,
            }
        })
    }
}

impl fmt::Display for TokenPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self
            .items
            .iter()
            .map(|i| match i {
                PatternItem::Literal(l) => l.as_str(),
                PatternItem::Wildcard => "*",
            })
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// A literal cue phrase (negation or uncertainty marker).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CuePhrase {
    tokens: Vec<String>,
}

impl CuePhrase {
    pub fn parse(text: &str) -> Result<CuePhrase, String> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(format!("cue {text:?} has no tokens"));
        }
        Ok(CuePhrase { tokens })
    }

    fn occurrences(&self, tokens: &[String]) -> Vec<(usize, usize)> {
        if self.tokens.len() > tokens.len() {
            return Vec::new();
        }
        (0..=tokens.len() - self.tokens.len())
            .filter(|&i| tokens[i..i + self.tokens.len()] == self.tokens[..])
            .map(|i| (i, i + self.tokens.len()))
            .collect()
    }
}

impl fmt::Display for CuePhrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// Phrase patterns per category plus cue lists and the scope window length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    window: usize,
    pre_neg: Vec<CuePhrase>,
    post_neg: Vec<CuePhrase>,
    uncertain: Vec<CuePhrase>,
    patterns: BTreeMap<FindingCategory, Vec<TokenPattern>>,
}

impl RuleSet {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn patterns(&self, category: FindingCategory) -> &[TokenPattern] {
        self.patterns.get(&category).map_or(&[], Vec::as_slice)
    }
}

/// Result of loading a rule file: the rules plus non-fatal warnings
/// (currently duplicate patterns, which are kept).
#[derive(Debug, Clone)]
pub struct RuleSetLoad {
    pub rules: RuleSet,
    pub warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RuleSetFile {
    window: usize,
    pre_neg: Vec<String>,
    post_neg: Vec<String>,
    uncertain: Vec<String>,
    patterns: BTreeMap<String, Vec<String>>,
}

fn parse_cues(field: &str, raw: &[String], errors: &mut Vec<String>) -> Vec<CuePhrase> {
    if raw.is_empty() {
        errors.push(format!("{field}: cue list must be non-empty"));
    }
    raw.iter()
        .filter_map(|c| match CuePhrase::parse(c) {
            Ok(cue) => Some(cue),
            Err(e) => {
                errors.push(format!("{field}: {e}"));
                None
            }
        })
        .collect()
}

impl RuleSet {
    /// Parses and validates a rule file, enumerating every violation.
    pub fn from_json_str(data: &str) -> Result<RuleSetLoad, LabelerError> {
        let file: RuleSetFile = serde_json::from_str(data)?;
        let mut errors = Vec::new();
        let mut warnings = Vec::new();

        if file.window == 0 {
            errors.push("window must be at least 1".to_string());
        }
        let pre_neg = parse_cues("pre_neg", &file.pre_neg, &mut errors);
        let post_neg = parse_cues("post_neg", &file.post_neg, &mut errors);
        let uncertain = parse_cues("uncertain", &file.uncertain, &mut errors);

        let mut patterns: BTreeMap<FindingCategory, Vec<TokenPattern>> = BTreeMap::new();
        for (key, raw_patterns) in &file.patterns {
            let Some(category) = FindingCategory::from_key_name(key) else {
                errors.push(format!("patterns: unknown category {key:?}"));
                continue;
            };
            if category == FindingCategory::NoFinding {
                errors.push(
                    "patterns: NoFinding is derived from the other categories and must not have patterns"
                        .to_string(),
                );
                continue;
            }
            let mut parsed = Vec::new();
            for raw in raw_patterns {
                match TokenPattern::parse(raw) {
                    Ok(p) => {
                        if parsed.contains(&p) {
                            warnings.push(format!(
                                "patterns: duplicate pattern {p} for {key} (kept)"
                            ));
                        }
                        parsed.push(p);
                    }
                    Err(e) => errors.push(format!("patterns ({key}): {e}")),
                }
            }
            patterns.insert(category, parsed);
        }
        for category in FindingCategory::ALL {
            if category == FindingCategory::NoFinding {
                continue;
            }
            if patterns.get(&category).is_none_or(Vec::is_empty) {
                errors.push(format!(
                    "patterns: category {} needs at least one pattern",
                    category.key_name()
                ));
            }
        }

        if !errors.is_empty() {
            return Err(LabelerError::Validation(errors));
        }
        Ok(RuleSetLoad {
            rules: RuleSet {
                window: file.window,
                pre_neg,
                post_neg,
                uncertain,
                patterns,
            },
            warnings,
        })
    }

    /// Canonical JSON form; `from_json_str(to_json_string(rs))` restores `rs`.
    pub fn to_json_string(&self) -> String {
        let file = RuleSetFile {
            window: self.window,
            pre_neg: self.pre_neg.iter().map(CuePhrase::to_string).collect(),
            post_neg: self.post_neg.iter().map(CuePhrase::to_string).collect(),
            uncertain: self.uncertain.iter().map(CuePhrase::to_string).collect(),
            patterns: self
                .patterns
                .iter()
                .map(|(c, ps)| {
                    (
                        c.key_name(),
                        ps.iter().map(TokenPattern::to_string).collect(),
                    )
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("rule set serializes");
        s.push('\n');
        s
    }
}

/// Loads and validates a rule set from a JSON file.
pub fn load_ruleset(path: &Path) -> Result<RuleSetLoad, LabelerError> {
    let data = std::fs::read_to_string(path)?;
    RuleSet::from_json_str(&data)
}

/// Writes a rule set in its canonical JSON form.
pub fn save_ruleset(path: &Path, rules: &RuleSet) -> Result<(), LabelerError> {
    std::fs::write(path, rules.to_json_string())?;
    Ok(())
}

static DEFAULT_RULESET: LazyLock<RuleSet> = LazyLock::new(|| {
    RuleSet::from_json_str(include_str!("../data/default_rules.json"))
        .expect("bundled rule file is valid")
        .rules
});

/// The rule set bundled with the crate: all fourteen categories covered.
pub fn default_ruleset() -> &'static RuleSet {
    &DEFAULT_RULESET
}

/// Labels every pattern occurrence in one sentence.
///
/// Each match yields one `(category, label)` entry: Uncertain when an
/// uncertainty cue is in scope, else Negative when a negation cue is in
/// scope, else Positive. A cue is in scope when at most `window` word tokens
/// lie between it and the match on its side; punctuation tokens do not
/// consume scope. Cue scope never crosses sentence boundaries.
pub fn label_sentence(
    sentence: &Sentence,
    rules: &RuleSet,
) -> Vec<(FindingCategory, MentionLabel)> {
    let tokens = sentence.tokens();
    let pre_neg: Vec<(usize, usize)> = rules
        .pre_neg
        .iter()
        .flat_map(|c| c.occurrences(tokens))
        .collect();
    let post_neg: Vec<(usize, usize)> = rules
        .post_neg
        .iter()
        .flat_map(|c| c.occurrences(tokens))
        .collect();
    let uncertain: Vec<(usize, usize)> = rules
        .uncertain
        .iter()
        .flat_map(|c| c.occurrences(tokens))
        .collect();

    // prefix[i] = number of word tokens among tokens[..i]
    let mut prefix = vec![0usize; tokens.len() + 1];
    for (i, token) in tokens.iter().enumerate() {
        let is_word = token.chars().next().is_some_and(char::is_alphanumeric);
        prefix[i + 1] = prefix[i] + usize::from(is_word);
    }
    let words_between = |from: usize, to: usize| prefix[to] - prefix[from];

    let window = rules.window;
    let before = |cues: &[(usize, usize)], m0: usize| {
        cues.iter()
            .any(|&(_, c1)| c1 <= m0 && words_between(c1, m0) <= window)
    };
    let after = |cues: &[(usize, usize)], m1: usize| {
        cues.iter()
            .any(|&(c0, _)| c0 >= m1 && words_between(m1, c0) <= window)
    };

    let mut mentions = Vec::new();
    for category in FindingCategory::ALL {
        for pattern in rules.patterns(category) {
            for start in 0..tokens.len() {
                if !pattern.matches_at(tokens, start) {
                    continue;
                }
                let (m0, m1) = (start, start + pattern.len());
                let label = if before(&uncertain, m0) || after(&uncertain, m1) {
                    MentionLabel::Uncertain
                } else if before(&pre_neg, m0) || after(&post_neg, m1) {
                    MentionLabel::Negative
                } else {
                    MentionLabel::Positive
                };
                mentions.push((category, label));
            }
        }
    }
    mentions
}

/// Aggregates sentence-level mentions into a total label vector.
///
/// Per category the highest-precedence mention wins
/// (Positive > Uncertain > Negative > Absent). NoFinding is derived: Positive
/// iff every other category is Absent or Negative and the report has at least
/// one sentence, else Negative.
pub fn label_report(report: &ParsedReport, rules: &RuleSet) -> LabelVector {
    let mut vector = LabelVector::default();
    for sentence in &report.sentences {
        for (category, label) in label_sentence(sentence, rules) {
            if label.rank() > vector.get(category).rank() {
                vector.set(category, label);
            }
        }
    }
    let clean = FindingCategory::ALL.iter().all(|&c| {
        c == FindingCategory::NoFinding
            || matches!(
                vector.get(c),
                MentionLabel::Absent | MentionLabel::Negative
            )
    });
    let no_finding = if clean && !report.sentences.is_empty() {
        MentionLabel::Positive
    } else {
        MentionLabel::Negative
    };
    vector.set(FindingCategory::NoFinding, no_finding);
    vector
}

/// Writes label rows in the CheXpert export convention: id then fourteen
/// columns valued 1.0 / 0.0 / -1.0 / blank.
pub fn write_labels_csv<W: Write>(
    writer: W,
    rows: &[(String, LabelVector)],
) -> Result<(), LabelerError> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend(FindingCategory::ALL.iter().map(|c| c.display_name().to_string()));
    csv.write_record(&header)
        .map_err(|e| LabelerError::Csv { row: 0, message: e.to_string() })?;
    for (i, (id, vector)) in rows.iter().enumerate() {
        let mut record = vec![id.clone()];
        record.extend(
            FindingCategory::ALL
                .iter()
                .map(|&c| vector.get(c).to_csv_cell().to_string()),
        );
        csv.write_record(&record)
            .map_err(|e| LabelerError::Csv { row: i + 1, message: e.to_string() })?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads label rows written by [`write_labels_csv`] or a third-party file in
/// the same convention.
pub fn read_labels_csv<R: Read>(reader: R) -> Result<Vec<(String, LabelVector)>, LabelerError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    {
        let headers = csv
            .headers()
            .map_err(|e| LabelerError::Csv { row: 0, message: e.to_string() })?;
        let expected: Vec<&str> = std::iter::once("id")
            .chain(FindingCategory::ALL.iter().map(|c| c.display_name()))
            .collect();
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(LabelerError::Csv {
                row: 0,
                message: format!("unexpected header {got:?}"),
            });
        }
    }
    let mut rows = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record.map_err(|e| LabelerError::Csv {
            row: i + 1,
            message: e.to_string(),
        })?;
        if record.len() != FindingCategory::COUNT + 1 {
            return Err(LabelerError::Csv {
                row: i + 1,
                message: format!("expected {} fields, got {}", FindingCategory::COUNT + 1, record.len()),
            });
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(LabelerError::Csv {
                row: i + 1,
                message: "empty report id".into(),
            });
        }
        let mut vector = LabelVector::default();
        for (k, &category) in FindingCategory::ALL.iter().enumerate() {
            let cell = &record[k + 1];
            let label = MentionLabel::from_csv_cell(cell).ok_or_else(|| LabelerError::Csv {
                row: i + 1,
                message: format!("bad label cell {cell:?} for {category}"),
            })?;
            vector.set(category, label);
        }
        rows.push((id, vector));
    }
    Ok(rows)
}
