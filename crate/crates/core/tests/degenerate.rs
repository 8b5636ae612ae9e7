mod common;

use common::degenerate::{baselines_coincide, duca_vs_two_ce_learners, smu_extremes};

#[test]
fn zero_weights_and_no_buffer_reduce_to_two_ce_learners() {
    duca_vs_two_ce_learners(25, 3).unwrap();
}

#[test]
fn derpp_er_sgd_coincide_without_replay() {
    baselines_coincide(25, 4).unwrap();
}

#[test]
fn smu_extremes_freeze_or_copy() {
    smu_extremes(15, 5).unwrap();
}
