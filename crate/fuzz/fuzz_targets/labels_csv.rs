//! The labels CSV reader follows the CheXpert export convention; accepted
//! rows must round-trip through the writer.

#![no_main]

use libfuzzer_sys::fuzz_target;
use radreport::labeler::{read_labels_csv, write_labels_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_labels_csv(data) {
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &rows).expect("write to memory succeeds");
        let back = read_labels_csv(buf.as_slice()).expect("writer output re-reads");
        assert_eq!(back, rows);
    }
});
