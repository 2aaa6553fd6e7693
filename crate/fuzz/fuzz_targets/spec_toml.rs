#![no_main]

//! Fuzz the TOML algebra-spec decoder, mirroring the JSON target.

use largen::brst_cyclic::{BrstContext, CyclicAlgebraSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if src.len() > 16384 {
        return;
    }
    if let Ok(spec) = CyclicAlgebraSpec::from_toml_str(src) {
        let _ = BrstContext::new(spec);
    }
});
