#![no_main]

//! Fuzz the modality CSV parser: arbitrary text must either parse into an
//! aligned feature/label table or produce an ingestion error, never panic.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(parsed) = inforeg::datagen::parse_modality_csv(text, "fuzz.csv") {
            // Parsed tables always satisfy the alignment invariant.
            assert_eq!(parsed.features.len(), parsed.n_rows() * parsed.n_features());
            assert!(parsed.features.iter().all(|v| v.is_finite()));
        }
    }
});
