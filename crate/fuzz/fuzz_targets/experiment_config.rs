#![no_main]

//! Fuzz the experiment config parser. Accepted configs must survive the
//! canonical round trip: serialize → reparse → equal.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = inforeg::config::ExperimentConfig::from_toml_str(text) {
            let canonical = cfg.to_canonical_toml();
            let reparsed = inforeg::config::ExperimentConfig::from_toml_str(&canonical)
                .expect("canonical form must reparse");
            assert_eq!(cfg, reparsed);
            // Sweep expansion is total on validated configs.
            let plans = cfg.expand_sweep();
            assert!(!plans.is_empty());
        }
    }
});
