//! Config and parameter files: reward config, evaluation options, policy
//! parameters, and vocabulary files must all parse or fail cleanly.

#![no_main]

use libfuzzer_sys::fuzz_target;
use radreport::corpus::Vocabulary;
use radreport::eval::EvalOptions;
use radreport::policy::ToyPolicy;
use radreport::reward::RewardConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RewardConfig::from_json_str(text) {
        assert!((0.0..=1.0).contains(&cfg.beta_u));
        assert!((0.0..1.0).contains(&cfg.gamma));
        assert!(cfg.lambda >= 0.0);
    }
    let _ = EvalOptions::from_json_str(text);
    if let Ok(policy) = ToyPolicy::from_json_str(text) {
        assert!(policy.is_finite());
        assert!(policy.max_steps() >= 1);
        assert!(policy.bank_size() >= 1);
    }
    if let Ok(vocab) = Vocabulary::from_json_str(text) {
        assert_eq!(vocab.token(0), Some(vocab.unk_token()));
    }
});
