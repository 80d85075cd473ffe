//! Embedding CSVs must parse or fail cleanly; accepted records are uniform
//! in dimension with finite entries, which the retrieval path relies on.

#![no_main]

use libfuzzer_sys::fuzz_target;
use radreport::eval::{nearest_neighbor, read_embeddings_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_embeddings_csv(data) {
        for record in &records {
            assert!(!record.id.is_empty());
            assert_eq!(record.vector.len(), records[0].vector.len());
            assert!(record.vector.iter().all(|v| v.is_finite()));
        }
        if let Some(query) = records.first() {
            let found = nearest_neighbor(query, &records).expect("uniform dims cannot fail");
            // the query is in the set, so the winner sits at distance zero
            let distance: f64 = found
                .vector
                .iter()
                .zip(&query.vector)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            assert_eq!(distance, 0.0);
        }
    }
});
