//! Section extraction must never panic on arbitrary report text, and must
//! never fabricate a findings section without a findings heading.

#![no_main]

use libfuzzer_sys::fuzz_target;
use radreport::corpus::{parse_report, parse_sections, RawReport, SectionLexicon, ViewPosition};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let raw = RawReport {
        id: "fuzz".into(),
        text: text.to_string(),
        view: ViewPosition::Unknown,
    };
    let lexicon = SectionLexicon::default();
    let sections = parse_sections(&raw, &lexicon);
    for key in sections.keys() {
        assert!(lexicon.headings().contains(key));
    }
    let parsed = parse_report(&raw, &lexicon);
    assert_eq!(parsed.is_some(), sections.contains_key("findings"));
});
