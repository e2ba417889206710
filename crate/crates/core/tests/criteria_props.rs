mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gaussian, Mat};
use singstab::criteria::{self, CheckOptions, ClaimStatus};
use singstab::exponent::SearchOptions;
use singstab::linalg::{self, Blocks};
use singstab::model::{Mode, SystemFamily};
use singstab::sampling;

fn quick() -> CheckOptions {
    CheckOptions {
        eps_grid: vec![1e-1, 1e-2],
        search: SearchOptions {
            depth: 3,
            budget: 50_000,
            forbid_self_switch: false,
        },
        n_max: 1,
        s_grid: vec![0.5],
        trend_periods: 0,
        ..CheckOptions::default()
    }
}

/// Two modes with identity `P` and `R` whose reduced matrices have the given abscissa.
fn family_with_reduced_abscissa(rng: &mut ChaCha8Rng, abscissa: f64, fast: f64, tau: f64) -> SystemFamily {
    let d = rng.random_range(2..=3);
    let l = rng.random_range(1..d);
    let modes = (0..2)
        .map(|_| {
            let m = sampling::shift_to_abscissa(&gaussian(rng, l, l, 0.5), abscissa);
            let dd = sampling::shift_to_abscissa(&gaussian(rng, d - l, d - l, 0.5), fast);
            let b = gaussian(rng, l, d - l, 0.5);
            let c = gaussian(rng, d - l, l, 0.5);
            let a = &m + &b * linalg::invert(&dd).unwrap().matrix * &c;
            let lambda = Blocks { a, b, c, d: dd }.assemble();
            Mode::new(l, Mat::identity(d, d), lambda, Mat::identity(d, d)).unwrap()
        })
        .collect();
    SystemFamily::new(modes, tau).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// A fast block that is not Hurwitz voids every theorem-based claim.
    #[test]
    fn non_hurwitz_fast_block_gates_every_claim(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = family_with_reduced_abscissa(&mut rng, -0.5, 0.4, 0.5);
        let opts = quick();
        let all: Vec<_> = criteria::necessary_check(&f, &opts).unwrap()
            .into_iter()
            .chain(criteria::sufficient_check(&f, &opts).unwrap())
            .collect();
        prop_assert!(!all.is_empty());
        for c in all {
            prop_assert_eq!(c.status, ClaimStatus::ViolatedPremise, "{}", c.claim);
        }
    }

    /// An unstable reduced mode is detected and its witness checks out.
    #[test]
    fn instability_witnesses_verify(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = family_with_reduced_abscissa(&mut rng, 0.3, -1.5, 0.5);
        let opts = quick();
        let nec = criteria::necessary_check(&f, &opts).unwrap();
        let c = nec.iter().find(|c| c.claim == "reduced-eu").unwrap();
        prop_assert_eq!(c.status, ClaimStatus::Applied, "{}", &c.justification);
        let w = c.witness.as_ref().expect("witness");
        prop_assert!(criteria::verify_witness(&f, w, &opts).unwrap());
    }

    /// The flow deviation vanishes at `t = 0` and moves continuously with `t`.
    #[test]
    fn approximation_deviation_is_continuous(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = family_with_reduced_abscissa(&mut rng, -0.5, -1.0, 0.0);
        let t_grid = [0.0, 1e-6, 0.5, 0.5 + 1e-6];
        let report = criteria::approx_validate(&f, &[1e-2], &t_grid, 0.0).unwrap();
        for mode in 0..f.len() {
            let dev: Vec<f64> = t_grid
                .iter()
                .map(|&t| report.rows.iter().find(|r| r.mode == mode && r.t == t).unwrap().deviation)
                .collect();
            prop_assert!(dev[0] <= 1e-12);
            prop_assert!(dev[1] <= 1e-3);
            prop_assert!((dev[3] - dev[2]).abs() <= 1e-3 * dev[2].max(1.0));
        }
    }
}

#[test]
fn stable_reduced_families_never_claim_instability() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let opts = quick();
    for _ in 0..5 {
        let f = family_with_reduced_abscissa(&mut rng, -1.0, -1.0, 0.5);
        let nec = criteria::necessary_check(&f, &opts).unwrap();
        let c = nec.iter().find(|c| c.claim == "reduced-eu").unwrap();
        assert_ne!(c.status, ClaimStatus::Applied, "{}", c.justification);
    }
}
