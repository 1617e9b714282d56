mod common;

use common::gradient_check;

#[test]
fn full_objective_matches_finite_differences() {
    for seed in [3, 11] {
        let check = gradient_check(seed, true, 1e-4);
        assert!(check.n_nonzero * 2 > check.n_params, "most weights should receive gradient");
        assert!(check.max_rel < 1e-3, "seed {seed}: {}", check.worst);
    }
}

#[test]
fn gradient_through_mixed_targets() {
    let check = gradient_check(7, false, 1e-4);
    assert!(check.max_rel < 1e-3, "{}", check.worst);
}

