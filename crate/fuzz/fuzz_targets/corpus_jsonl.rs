//! JSONL corpus readers must reject malformed input with an error, never a
//! panic, and accepted parsed reports must round-trip through the writer.

#![no_main]

use libfuzzer_sys::fuzz_target;
use radreport::corpus::{read_parsed_reports, read_raw_reports, write_parsed_reports};

fuzz_target!(|data: &[u8]| {
    let _ = read_raw_reports(data);
    if let Ok(reports) = read_parsed_reports(data) {
        let mut buf = Vec::new();
        write_parsed_reports(&mut buf, &reports).expect("write to memory succeeds");
        let back = read_parsed_reports(buf.as_slice()).expect("writer output re-reads");
        assert_eq!(back, reports);
    }
});
