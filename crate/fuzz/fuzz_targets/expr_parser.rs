#![no_main]

//! Fuzz the operator expression parser against the main-example field
//! content. Accepted inputs must survive a print/reparse round trip.

use std::sync::OnceLock;

use largen::brst_cyclic::{builtin_eps2, BrstContext};
use largen::cli::parse_expression;
use largen::operator_algebra::{render_operator, PairingTable};
use libfuzzer_sys::fuzz_target;

fn table() -> &'static PairingTable {
    static TABLE: OnceLock<PairingTable> = OnceLock::new();
    TABLE.get_or_init(|| BrstContext::new(builtin_eps2()).unwrap().table)
}

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if src.len() > 4096 {
        return;
    }
    let t = table();
    if let Ok(x) = parse_expression(src, t) {
        let names = t.names();
        let printed = render_operator(&x, &names);
        let reparsed = parse_expression(&printed, t)
            .unwrap_or_else(|e| panic!("canonical output `{}` failed to reparse: {}", printed, e));
        assert_eq!(x, reparsed, "round trip changed the operator for `{}`", src);
    }
});
