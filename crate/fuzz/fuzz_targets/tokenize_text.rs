//! The tokenizer and sentence splitter must not panic, must emit only
//! well-formed tokens, and tokenize must be idempotent on its joined output.

#![no_main]

use libfuzzer_sys::fuzz_target;
use radreport::corpus::{split_sentences, tokenize};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let tokens = tokenize(text);
    for token in &tokens {
        assert!(!token.is_empty());
        assert!(!token.chars().any(char::is_whitespace));
    }
    assert_eq!(tokenize(&tokens.join(" ")), tokens);

    for sentence in split_sentences(text) {
        assert!(!sentence.tokens().is_empty());
    }
});
