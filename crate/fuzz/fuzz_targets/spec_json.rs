#![no_main]

//! Fuzz the JSON algebra-spec decoder. Specs that pass validation must
//! survive the pairing-table construction without panicking.

use largen::brst_cyclic::{BrstContext, CyclicAlgebraSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if src.len() > 16384 {
        return;
    }
    if let Ok(spec) = CyclicAlgebraSpec::from_json_str(src) {
        let _ = BrstContext::new(spec);
    }
});
