mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gaussian, Mat};
use singstab::exponent::{self, EstimateOptions, SearchOptions, Target};
use singstab::reduced::{self, GeneratorFamily, TimeGrid};
use singstab::sampling::{self, SamplingOptions};

fn pairs(seed: u64, n: usize) -> Vec<(Mat, Mat)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=3);
    (0..n)
        .map(|_| (gaussian(&mut rng, d, d, 0.7), gaussian(&mut rng, d, d, 0.6)))
        .collect()
}

fn family(seed: u64) -> GeneratorFamily {
    reduced::pair_family(&pairs(seed, 3), 0.0, TimeGrid::from_points(vec![0.3, 1.0]).unwrap(), 0.0).unwrap()
}

fn search(depth: usize, forbid: bool) -> SearchOptions {
    SearchOptions {
        depth,
        budget: u64::MAX,
        forbid_self_switch: forbid,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bounds_tighten_with_depth(seed in any::<u64>()) {
        let letters = family(seed).letters(false);
        let mut prev: Option<(f64, f64)> = None;
        for depth in 1..=5 {
            let r = exponent::search_words(&letters, &search(depth, false)).unwrap();
            prop_assert!(r.lower <= r.upper + 1e-12);
            if let Some((lo, up)) = prev {
                prop_assert!(r.lower >= lo);
                prop_assert!(r.upper <= up);
            }
            prev = Some((r.lower, r.upper));
        }
    }

    #[test]
    fn forbidding_self_switches_restricts_words(seed in any::<u64>()) {
        let letters = family(seed).letters(false);
        let free = exponent::search_words(&letters, &search(4, false)).unwrap();
        let restricted = exponent::search_words(&letters, &search(4, true)).unwrap();
        prop_assert!(restricted.lower <= free.lower);
    }

    #[test]
    fn witness_replays_to_its_rate(seed in any::<u64>()) {
        let ps = pairs(seed, 2);
        let opts = EstimateOptions {
            grid: Some(TimeGrid::from_points(vec![0.3, 1.0]).unwrap()),
            search: search(5, false),
            ..EstimateOptions::default()
        };
        let e = exponent::lambda_of_pairs(&ps, 0.3, &opts).unwrap();
        let g = reduced::pair_family(&ps, 0.3, opts.grid.clone().unwrap(), 0.0).unwrap();
        let w = e.witness.expect("a witness word");
        let replayed = w.replay(|l| g.evaluate(l.template, l.weight));
        prop_assert!((replayed - w.rate).abs() <= 1e-10 * w.rate.abs().max(1.0), "{replayed} vs {}", w.rate);
        prop_assert_eq!(w.rate.max(e.abscissa_floor), e.certified_lower);
    }

    /// The reduced-system exponent cannot grow when switching is slowed down.
    #[test]
    fn dwell_time_lowers_reduced_exponent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(2..=3);
        let f = sampling::random_family(&mut rng, 2, d, None, 0.5, &SamplingOptions::default());
        // one grid shared by both dwell times, restricted to points above each
        let points = [0.5, 1.0, 2.0, 4.0];
        let lower = |tau: f64| {
            let g = f.with_tau(tau).unwrap();
            let grid = TimeGrid::from_points(points.iter().copied().filter(|t| *t >= tau).collect()).unwrap();
            let opts = EstimateOptions { grid: Some(grid), search: search(4, false), ..EstimateOptions::default() };
            exponent::lambda_estimate(&g, Target::SigmaBar, &opts).unwrap().certified_lower
        };
        prop_assert!(lower(1.0) <= lower(0.5));
    }
}

#[test]
fn estimates_bracket_scalar_rates() {
    // one scalar pair: every word has rate exactly s + ln|r| / t
    let ps = vec![(Mat::from_element(1, 1, -0.5), Mat::from_element(1, 1, 2.0))];
    let opts = EstimateOptions {
        grid: Some(TimeGrid::single(2.0)),
        search: search(3, false),
        ..EstimateOptions::default()
    };
    let e = exponent::lambda_of_pairs(&ps, 2.0, &opts).unwrap();
    let expected = -0.5 + 2f64.ln() / 2.0;
    assert!((e.certified_lower - expected).abs() <= 1e-14);
    assert!((e.heuristic_upper - expected).abs() <= 1e-14);
}
