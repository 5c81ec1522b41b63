#![no_main]

//! Fuzz the metrics CSV reader used by compare/plotdata: arbitrary text
//! either parses into a rectangular table or errors, and the typed column
//! accessors never panic on whatever parsed.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(metrics) = inforeg::trainer::parse_metrics_csv(text) {
            for row in &metrics.rows {
                assert_eq!(row.len(), metrics.header.len());
            }
            let _ = metrics.f64_column("overall_acc");
            for m in 0..metrics.n_modalities() {
                let _ = metrics.window_column(m);
                let _ = metrics.f64_column(&format!("trace_m{m}"));
            }
        }
    }
});
