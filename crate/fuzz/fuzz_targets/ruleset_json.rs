//! Rule files must validate without panicking; accepted rule sets must
//! survive a save/load round trip and label arbitrary sentences safely.

#![no_main]

use libfuzzer_sys::fuzz_target;
use radreport::corpus::Sentence;
use radreport::labeler::{label_sentence, RuleSet};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(load) = RuleSet::from_json_str(text) {
        let restored = RuleSet::from_json_str(&load.rules.to_json_string())
            .expect("canonical form re-loads");
        assert_eq!(restored.rules, load.rules);

        if let Some(sentence) = Sentence::from_text("no pleural effusion or pneumothorax .") {
            let _ = label_sentence(&sentence, &load.rules);
        }
    }
});
