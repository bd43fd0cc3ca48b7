//! Shadow tags on random straight-line programs compared against a separate
//! symbolic interpreter.

mod common;

use common::oracle::check_programs;

#[test]
fn shadow_tags_match_symbolic_interpreter() {
    let slots = check_programs(0x7a9_0001, 1_000).unwrap_or_else(|e| panic!("{e}"));
    assert!(slots > 1_000);
}

#[test]
fn a_second_seed_agrees_too() {
    check_programs(0x7a9_0002, 300).unwrap_or_else(|e| panic!("{e}"));
}
