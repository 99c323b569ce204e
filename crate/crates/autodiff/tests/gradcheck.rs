use proptest::prelude::*;
use tapegrad::gradcheck::{PrimitiveCase, SplitMix, PRIMITIVE_KINDS};

const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

#[test]
fn every_primitive_matches_central_differences() {
    let mut rng = SplitMix::new(0x5EED);
    for i in 0..100 {
        let case = PrimitiveCase::random(i, &mut rng);
        let report = case.check(&mut rng, STEP).unwrap();
        let err = report.relative_error();
        assert!(
            err < TOLERANCE,
            "case {i} ({:?}): relative error {err:e}",
            case.primitive
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_seeds_pass_gradient_check(seed in any::<u64>(), kind in 0..PRIMITIVE_KINDS) {
        let mut rng = SplitMix::new(seed);
        let case = PrimitiveCase::random(kind, &mut rng);
        let err = case.check(&mut rng, STEP).unwrap().relative_error();
        prop_assert!(err < TOLERANCE, "{:?}: {err:e}", case.primitive);
    }
}
