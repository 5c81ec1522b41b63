#![no_main]

//! Fuzz the binary gradient-log decoder: bounds-checked reads, no panics,
//! and decode → encode → decode is the identity on accepted inputs.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(log) = inforeg::gradlog::GradLog::decode(data) {
        let bytes = log.encode();
        let again = inforeg::gradlog::GradLog::decode(&bytes).expect("re-encoded log must decode");
        assert_eq!(log, again);
    }
});
