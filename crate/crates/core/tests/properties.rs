//! Property suites for the tensor-train building blocks.

mod common;

use common::CASES;

#[test]
fn tt_round_trip() {
    common::tt_round_trip(CASES).unwrap();
}

#[test]
fn rank_one_kronecker_law() {
    common::rank_one_kronecker_law(CASES).unwrap();
}

#[test]
fn maxvol_dominance() {
    common::maxvol_dominance(CASES).unwrap();
}

#[test]
fn partition_of_unity() {
    common::partition_of_unity(CASES).unwrap();
}

#[test]
fn cross_exact_on_trains() {
    common::cross_exact_on_trains(CASES).unwrap();
}
