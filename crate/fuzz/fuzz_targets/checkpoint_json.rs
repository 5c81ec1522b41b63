#![no_main]

//! Fuzz the checkpoint decoder. Structurally valid checkpoints must rebuild
//! into model parameters and re-serialize losslessly.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = inforeg::model::Checkpoint::from_json_slice(data) {
        if let Ok(params) = ck.into_params() {
            let json = inforeg::model::Checkpoint::from_params(&params).to_json();
            let back = inforeg::model::Checkpoint::from_json_slice(json.as_bytes())
                .expect("re-encoded checkpoint must parse")
                .into_params()
                .expect("re-encoded checkpoint must rebuild");
            assert_eq!(params.param_count(), back.param_count());
        }
    }
});
