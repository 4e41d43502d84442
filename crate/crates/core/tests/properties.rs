//! Always-on property suites for the numerical kernels.

mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn apply_matches_kronecker_oracle(input in apply_input()) {
        apply_matches_kronecker(input)?;
    }

    #[test]
    fn gram_truncate_matches_dense_eigendecomposition(input in truncate_input()) {
        gram_truncate_matches_dense(input)?;
    }

    #[test]
    fn corner_columns_stay_orthogonal_after_steps(input in system_input()) {
        columns_stay_orthogonal(input)?;
    }

    #[test]
    fn trace_drift_is_second_order_in_dt(input in system_input()) {
        drift_is_second_order(input)?;
    }

    #[test]
    fn fidelity_mixed_matches_uhlmann_oracle(input in fidelity_input()) {
        fidelity_matches_uhlmann(input)?;
    }
}
