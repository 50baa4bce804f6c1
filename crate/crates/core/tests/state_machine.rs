mod support;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn stages_never_skip_and_reverts_drop_downstream_data(seed in any::<u64>()) {
        support::machine::run_sequence(seed, 60).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn locks_never_have_two_holders(seed in any::<u64>()) {
        support::locking::run(seed, 200).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn random_sequences_reach_every_final_stage() {
    let mut reached = 0;
    let mut reverts = 0;
    for seed in 0..50 {
        let cov = support::machine::run_sequence(seed, 60).unwrap();
        reached += cov.reached_final;
        reverts += cov.reverts;
    }
    assert!(reached > 0 && reverts > 0, "reached {reached}, reverts {reverts}");
}

#[test]
fn lock_interleavings_exercise_eviction_and_expiry() {
    let mut total = support::locking::Tally::default();
    for seed in 0..50 {
        let t = support::locking::run(seed, 200).unwrap();
        total.evictions += t.evictions;
        total.refused += t.refused;
        total.expiries += t.expiries;
    }
    assert!(total.evictions > 0 && total.refused > 0 && total.expiries > 0, "{total:?}");
}
