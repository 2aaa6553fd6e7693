#![no_main]

//! Fuzz the diagram text format: two boundary words plus an edge list,
//! separated by newlines. Valid diagrams are additionally run through
//! serialization and through composition with themselves when the shapes
//! line up, cross-checking the two loop counters.

use largen::deligne_diagrams::{compose_loops_unionfind, Diagram, Word};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if src.len() > 2048 {
        return;
    }
    let mut lines = src.splitn(3, '\n');
    let (Some(bot), Some(top), Some(edges)) = (lines.next(), lines.next(), lines.next()) else {
        return;
    };
    let (Ok(bot), Ok(top)) = (Word::parse(bot), Word::parse(top)) else {
        return;
    };
    if bot.len() + top.len() > 40 {
        return;
    }
    let Ok(d) = Diagram::parse(&bot, &top, edges) else {
        return;
    };
    let _ = d.to_json();
    let _ = d.to_string();
    if bot == top {
        let (loops, _) = d.compose(&d).expect("self-composition of matching shapes");
        let oracle = compose_loops_unionfind(&d, &d).expect("union-find on matching shapes");
        assert_eq!(loops, oracle, "loop counters disagree");
    }
});
