//! Finite-difference checks of the full model loss in 64-bit.

mod common;

use common::{full_model_check, MODES};

#[test]
fn every_mode_matches_finite_differences() {
    for (i, mode) in MODES.into_iter().enumerate() {
        for seed in [11, 12] {
            let out = full_model_check(seed + 100 * i as u64, Some(mode), 40, 1e-5);
            assert!(out.report.analytic.len() >= 40, "{mode}: only {} kink-free coordinates", out.report.analytic.len());
            assert!(out.error() < 1e-4, "{mode} seed {seed}: relative error {:e}", out.error());
        }
    }
}
