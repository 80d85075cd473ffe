//! Report ingestion: section extraction, tokenization, sentence splitting,
//! vocabulary building, and duplicate-sentence removal.
//!
//! All operations here are pure functions of their inputs. A built
//! [`Vocabulary`] is immutable and can be shared freely across threads.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use thiserror::Error;

/// Reserved token substituted for out-of-vocabulary words.
///
/// Contains punctuation so the tokenizer can never produce it from text.
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Error, Debug)]
pub enum CorpusError {
    #[error("line {line}: invalid JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("min_count must be at least 1")]
    InvalidMinCount,
    #[error("vocabulary file is inconsistent: {0}")]
    BadVocabulary(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Radiograph view position attached to a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ViewPosition {
    Ap,
    Pa,
    Ll,
    #[default]
    Unknown,
}

impl ViewPosition {
    fn as_json(self) -> Option<&'static str> {
        match self {
            ViewPosition::Ap => Some("AP"),
            ViewPosition::Pa => Some("PA"),
            ViewPosition::Ll => Some("LL"),
            ViewPosition::Unknown => None,
        }
    }

    fn from_json(value: Option<&str>) -> Option<ViewPosition> {
        match value {
            None => Some(ViewPosition::Unknown),
            Some("AP") => Some(ViewPosition::Ap),
            Some("PA") => Some(ViewPosition::Pa),
            Some("LL") => Some(ViewPosition::Ll),
            Some(_) => None,
        }
    }
}

impl Serialize for ViewPosition {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.as_json() {
            Some(s) => serializer.serialize_str(s),
            None => serializer.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for ViewPosition {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw: Option<String> = Option::deserialize(deserializer)?;
        ViewPosition::from_json(raw.as_deref())
            .ok_or_else(|| serde::de::Error::custom("view must be one of AP, PA, LL or null"))
    }
}

/// A report as ingested: free text plus metadata, before any parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReport {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub view: ViewPosition,
}

/// One tokenized sentence. Tokens are non-empty and contain no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    /// Builds a sentence, rejecting empty token lists and malformed tokens.
    pub fn new(tokens: Vec<String>) -> Result<Sentence, String> {
        if tokens.is_empty() {
            return Err("sentence has no tokens".into());
        }
        for t in &tokens {
            if t.is_empty() {
                return Err("sentence contains an empty token".into());
            }
            if t.chars().any(char::is_whitespace) {
                return Err(format!("token {t:?} contains whitespace"));
            }
        }
        Ok(Sentence { tokens })
    }

    /// Tokenizes `text` into a sentence; returns `None` when nothing survives.
    pub fn from_text(text: &str) -> Option<Sentence> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            None
        } else {
            Some(Sentence { tokens })
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined token text.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// A report reduced to its findings section as ordered, tokenized sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedReport {
    pub id: String,
    pub sentences: Vec<Sentence>,
    #[serde(default)]
    pub view: ViewPosition,
}

impl ParsedReport {
    /// All tokens of the report, sentences concatenated in order.
    pub fn flat_tokens(&self) -> Vec<String> {
        self.sentences
            .iter()
            .flat_map(|s| s.tokens().iter().cloned())
            .collect()
    }
}

/// Section headings recognized by [`parse_sections`], stored lowercase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionLexicon {
    headings: Vec<String>,
}

impl Default for SectionLexicon {
    fn default() -> Self {
        SectionLexicon::new(&[
            "findings",
            "impression",
            "history",
            "examination",
            "comparison",
            "indication",
            "technique",
        ])
    }
}

impl SectionLexicon {
    pub fn new(headings: &[&str]) -> SectionLexicon {
        SectionLexicon {
            headings: headings.iter().map(|h| h.to_lowercase()).collect(),
        }
    }

    pub fn headings(&self) -> &[String] {
        &self.headings
    }
}

/// Splits a report into named sections.
///
/// Plain text is scanned for `heading:` markers from the lexicon
/// (case-insensitive, at the start of the text or after whitespace). An
/// Open-I style XML payload (`<AbstractText Label="...">`) is mapped to the
/// same structure. Keys are lowercase; a section key is present iff its
/// heading occurs. When a heading occurs twice the first occurrence wins.
pub fn parse_sections(raw: &RawReport, lexicon: &SectionLexicon) -> BTreeMap<String, String> {
    if raw.text.contains("<AbstractText") {
        parse_sections_xml(&raw.text, lexicon)
    } else {
        parse_sections_plain(&raw.text, lexicon)
    }
}

fn parse_sections_plain(text: &str, lexicon: &SectionLexicon) -> BTreeMap<String, String> {
    let bytes = text.as_bytes();
    // (start of heading, end of "heading:", heading name)
    let mut marks: Vec<(usize, usize, &str)> = Vec::new();
    for heading in lexicon.headings() {
        let needle = format!("{heading}:");
        let nb = needle.as_bytes();
        if nb.is_empty() || bytes.len() < nb.len() {
            continue;
        }
        for at in 0..=bytes.len() - nb.len() {
            if !text.is_char_boundary(at) || !bytes[at..at + nb.len()].eq_ignore_ascii_case(nb) {
                continue;
            }
            let at_boundary = at == 0
                || text[..at]
                    .chars()
                    .next_back()
                    .is_some_and(char::is_whitespace);
            if at_boundary {
                marks.push((at, at + nb.len(), heading.as_str()));
            }
        }
    }
    marks.sort();
    marks.dedup();

    let mut sections = BTreeMap::new();
    for (i, &(_, body_start, heading)) in marks.iter().enumerate() {
        let body_end = marks.get(i + 1).map_or(text.len(), |&(next, _, _)| next);
        let body = text[body_start..body_end].trim().to_string();
        sections.entry(heading.to_string()).or_insert(body);
    }
    sections
}

/// Extracts `<AbstractText Label="...">body</AbstractText>` elements.
/// Self-closing elements yield an empty section body.
fn parse_sections_xml(text: &str, lexicon: &SectionLexicon) -> BTreeMap<String, String> {
    let mut sections = BTreeMap::new();
    let mut rest = text;
    while let Some(open) = rest.find("<AbstractText") {
        rest = &rest[open + "<AbstractText".len()..];
        let Some(tag_end) = rest.find('>') else { break };
        let attrs = &rest[..tag_end];
        let self_closing = attrs.trim_end().ends_with('/');
        rest = &rest[tag_end + 1..];

        let Some(label) = xml_attr(attrs, "Label") else {
            continue;
        };
        let key = label.to_lowercase();
        if !lexicon.headings().contains(&key) {
            continue;
        }

        let body = if self_closing {
            String::new()
        } else {
            match rest.find("</AbstractText>") {
                Some(close) => {
                    let body = rest[..close].trim().to_string();
                    rest = &rest[close + "</AbstractText>".len()..];
                    xml_unescape(&body)
                }
                None => break,
            }
        };
        sections.entry(key).or_insert(body);
    }
    sections
}

fn xml_attr<'a>(attrs: &'a str, name: &str) -> Option<&'a str> {
    let at = attrs.find(&format!("{name}="))?;
    let rest = &attrs[at + name.len() + 1..];
    let quote = rest.chars().next().filter(|c| *c == '"' || *c == '\'')?;
    let rest = &rest[1..];
    let end = rest.find(quote)?;
    Some(&rest[..end])
}

fn xml_unescape(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

fn is_placeholder(token: &str) -> bool {
    token.len() >= 2 && token.bytes().all(|b| b.is_ascii_uppercase())
}

/// Splits one whitespace-free word into alphanumeric runs and standalone
/// punctuation tokens. A `.` flanked by ASCII digits stays inside its run so
/// measurements like `3.5` survive as single tokens. No case folding here.
fn scan_word(word: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = word.chars().collect();
    let mut run = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphanumeric() {
            run.push(c);
        } else if c == '.'
            && run.chars().next_back().is_some_and(|p| p.is_ascii_digit())
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
        {
            run.push('.');
        } else {
            if !run.is_empty() {
                out.push(std::mem::take(&mut run));
            }
            out.push(c.to_string());
        }
        i += 1;
    }
    if !run.is_empty() {
        out.push(run);
    }
}

/// Deterministic tokenizer: splits on whitespace and punctuation, lowercases,
/// and keeps whole-uppercase anonymization placeholders (NAME, DATE, ...)
/// intact. Punctuation becomes standalone tokens; decimals stay whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut raw = Vec::new();
    for word in text.split_whitespace() {
        scan_word(word, &mut raw);
    }
    let mut out = Vec::with_capacity(raw.len());
    for token in raw {
        if is_placeholder(&token) {
            out.push(token);
            continue;
        }
        let lowered = token.to_lowercase();
        if lowered == token {
            out.push(token);
        } else {
            // Lowercasing can change segmentation (e.g. combining marks);
            // rescan so tokenize is idempotent on its own joined output.
            scan_word(&lowered, &mut out);
        }
    }
    out
}

/// Splits findings text into tokenized sentences on `.`, `!`, `?`.
/// A `.` between two ASCII digits is not a boundary. The terminator stays
/// with its sentence; trailing text without one is kept; token-less pieces
/// are dropped.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut buf = String::new();
    for (i, &c) in chars.iter().enumerate() {
        buf.push(c);
        let boundary = match c {
            '!' | '?' => true,
            '.' => {
                let prev_digit = i > 0 && chars[i - 1].is_ascii_digit();
                let next_digit = chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
                !(prev_digit && next_digit)
            }
            _ => false,
        };
        if boundary {
            sentences.extend(Sentence::from_text(&buf));
            buf.clear();
        }
    }
    sentences.extend(Sentence::from_text(&buf));
    sentences
}

/// Reduces a raw report to its findings section, sentence-split and
/// tokenized. Returns `None` when no findings heading is present, so callers
/// can skip such entries.
pub fn parse_report(raw: &RawReport, lexicon: &SectionLexicon) -> Option<ParsedReport> {
    let sections = parse_sections(raw, lexicon);
    let findings = sections.get("findings")?;
    Some(ParsedReport {
        id: raw.id.clone(),
        sentences: split_sentences(findings),
        view: raw.view,
    })
}

/// Token-to-id map built from a corpus with a minimum frequency threshold.
///
/// The unknown token always maps to id 0; the remaining tokens are assigned
/// dense ids in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: BTreeMap<String, u32>,
    tokens: Vec<String>,
    min_count: usize,
    unk_token: String,
}

impl Vocabulary {
    pub fn unk_token(&self) -> &str {
        &self.unk_token
    }

    pub fn unk_id(&self) -> u32 {
        0
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    /// Number of entries including the unknown token.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the unknown token is always present
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Encodes a token, falling back to the unknown id.
    pub fn encode_token(&self, token: &str) -> u32 {
        self.id_of(token).unwrap_or(0)
    }

    pub fn encode(&self, sentence: &Sentence) -> Vec<u32> {
        sentence
            .tokens()
            .iter()
            .map(|t| self.encode_token(t))
            .collect()
    }

    /// All tokens in id order; index 0 is the unknown token.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Counts token frequencies over the corpus and keeps tokens occurring at
/// least `min_count` times. An empty corpus yields a vocabulary holding only
/// the unknown token.
pub fn build_vocabulary(
    reports: &[ParsedReport],
    min_count: usize,
) -> Result<Vocabulary, CorpusError> {
    if min_count == 0 {
        return Err(CorpusError::InvalidMinCount);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for report in reports {
        for sentence in &report.sentences {
            for token in sentence.tokens() {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
    }
    let mut tokens = vec![UNK_TOKEN.to_string()];
    tokens.extend(
        counts
            .iter()
            .filter(|&(token, &n)| n >= min_count && *token != UNK_TOKEN)
            .map(|(token, _)| token.to_string()),
    );
    let ids = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();
    Ok(Vocabulary {
        ids,
        tokens,
        min_count,
        unk_token: UNK_TOKEN.to_string(),
    })
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    min_count: usize,
    unk_token: String,
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn to_json_string(&self) -> String {
        let file = VocabularyFile {
            min_count: self.min_count,
            unk_token: self.unk_token.clone(),
            tokens: self.tokens.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("vocabulary serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(data: &str) -> Result<Vocabulary, CorpusError> {
        let file: VocabularyFile = serde_json::from_str(data)
            .map_err(|source| CorpusError::Json { line: 1, source })?;
        if file.tokens.first().map(String::as_str) != Some(file.unk_token.as_str()) {
            return Err(CorpusError::BadVocabulary(
                "token 0 must be the unknown token".into(),
            ));
        }
        if file.min_count == 0 {
            return Err(CorpusError::InvalidMinCount);
        }
        let mut ids = BTreeMap::new();
        for (i, token) in file.tokens.iter().enumerate() {
            if ids.insert(token.clone(), i as u32).is_some() {
                return Err(CorpusError::BadVocabulary(format!(
                    "duplicate token {token:?}"
                )));
            }
        }
        Ok(Vocabulary {
            ids,
            tokens: file.tokens,
            min_count: file.min_count,
            unk_token: file.unk_token,
        })
    }
}

/// Keeps the first occurrence of each exact token sequence, preserving order
/// otherwise. Near-duplicates differing by any token are untouched.
pub fn dedupe_sentences(report: &ParsedReport) -> ParsedReport {
    let mut seen: HashSet<&Sentence> = HashSet::new();
    let sentences = report
        .sentences
        .iter()
        .filter(|s| seen.insert(s))
        .cloned()
        .collect();
    ParsedReport {
        id: report.id.clone(),
        sentences,
        view: report.view,
    }
}

fn validate_parsed(report: &ParsedReport, line: usize) -> Result<(), CorpusError> {
    if report.id.is_empty() {
        return Err(CorpusError::Invalid {
            line,
            message: "report id must be non-empty".into(),
        });
    }
    for sentence in &report.sentences {
        Sentence::new(sentence.tokens.clone()).map_err(|message| CorpusError::Invalid {
            line,
            message,
        })?;
    }
    Ok(())
}

/// Reads raw reports from JSON lines: `{"id", "text", "view"}`.
pub fn read_raw_reports<R: BufRead>(reader: R) -> Result<Vec<RawReport>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let report: RawReport =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json {
                line: i + 1,
                source,
            })?;
        if report.id.is_empty() {
            return Err(CorpusError::Invalid {
                line: i + 1,
                message: "report id must be non-empty".into(),
            });
        }
        out.push(report);
    }
    Ok(out)
}

/// Reads parsed reports from JSON lines: `{"id", "sentences", "view"}`.
pub fn read_parsed_reports<R: BufRead>(reader: R) -> Result<Vec<ParsedReport>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let report: ParsedReport =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json {
                line: i + 1,
                source,
            })?;
        validate_parsed(&report, i + 1)?;
        out.push(report);
    }
    Ok(out)
}

/// Writes parsed reports as JSON lines, one report per line.
pub fn write_parsed_reports<W: Write>(
    mut writer: W,
    reports: &[ParsedReport],
) -> Result<(), CorpusError> {
    for report in reports {
        let line = serde_json::to_string(report).expect("report serializes");
        writeln!(writer, "{line}")?;
    }
    Ok(())
}
