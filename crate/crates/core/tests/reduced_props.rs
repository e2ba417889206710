mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{full_generator, gaussian, Mat};
use singstab::exponent::{self, SearchOptions};
use singstab::linalg;
use singstab::model::SystemFamily;
use singstab::reduced::{self, FamilyKind, GeneratorOptions, JumpSetKind, TimeGrid};
use singstab::sampling::{self, SamplingOptions};

fn family(seed: u64, tau: f64) -> SystemFamily {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=4);
    let n = rng.random_range(1..=3);
    sampling::random_family(&mut rng, n, d, None, tau, &SamplingOptions::default())
}

fn options(grid: TimeGrid, n_max: usize) -> GeneratorOptions {
    GeneratorOptions {
        n_max,
        s_grid: vec![0.2, 1.0],
        ..GeneratorOptions::new(grid)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Reduced letters and jumps factor through the `l`-dimensional slow part.
    #[test]
    fn reduced_members_have_slow_rank(seed in any::<u64>()) {
        let f = family(seed, 0.5);
        let g = reduced::build_generators(&f, FamilyKind::NBar, &options(TimeGrid::from_points(vec![0.5, 2.0]).unwrap(), 0)).unwrap();
        for letter in g.letters(false) {
            let l = f.mode(letter.first_mode).l();
            prop_assert!(linalg::numerical_rank(&letter.matrix, 1e-10) <= l);
        }
        let jumps = reduced::build_jump_set(&f, JumpSetKind::RBar, &[]).unwrap();
        for member in &jumps.members {
            prop_assert!(linalg::numerical_rank(&member.matrix, 1e-10) <= f.mode(member.first_mode).l());
        }
    }

    /// Without transients the enriched family is the reduced one, bit for bit.
    #[test]
    fn enriched_without_transients_is_reduced(seed in any::<u64>()) {
        let f = family(seed, 0.5);
        let opts = options(TimeGrid::from_points(vec![0.5, 1.5]).unwrap(), 0);
        let bar = reduced::build_generators(&f, FamilyKind::NBar, &opts).unwrap();
        let tilde = reduced::build_generators(&f, FamilyKind::NTilde, &opts).unwrap();
        prop_assert_eq!(tilde.factors.len(), 1);
        let a: Vec<Mat> = bar.letters(false).into_iter().map(|l| l.matrix).collect();
        let b: Vec<Mat> = tilde.letters(false).into_iter().map(|l| l.matrix).collect();
        prop_assert_eq!(a, b);
        for to in 0..f.len() {
            for from in 0..f.len() {
                let id = reduced::TransientFactor::identity(f.d());
                prop_assert_eq!(reduced::bar_jump(&f, to, from).unwrap(), reduced::tilde_jump(&f, to, from, &id).unwrap());
            }
        }
    }

    /// Full-system letters are `R e^{t G}` with `G` formed directly.
    #[test]
    fn full_letters_match_direct_exponential(seed in any::<u64>(), t in 0.1f64..2.0) {
        let f = family(seed, 0.0);
        let eps = 0.1;
        let opts = GeneratorOptions { eps, ..options(TimeGrid::single(t), 0) };
        let g = reduced::build_generators(&f, FamilyKind::NEps, &opts).unwrap();
        for letter in g.letters(false) {
            let mode = f.mode(letter.first_mode);
            let direct = mode.r() * linalg::expm(&(full_generator(mode.l(), mode.p(), mode.lambda(), eps) * t));
            prop_assert!((&letter.matrix - &direct).amax() <= 1e-8 * direct.amax().max(1.0));
        }
    }

    /// Full-system letters approach the reduced ones as eps shrinks.
    #[test]
    fn full_letters_converge_to_reduced(seed in any::<u64>()) {
        let f = family(seed, 1.0);
        let grid = TimeGrid::single(1.0);
        let bar = reduced::build_generators(&f, FamilyKind::NBar, &options(grid.clone(), 0)).unwrap().letters(false);
        let gap = |eps: f64| {
            let g = reduced::build_generators(&f, FamilyKind::NEps, &GeneratorOptions { eps, ..options(grid.clone(), 0) }).unwrap();
            g.letters(false)
                .iter()
                .zip(&bar)
                .map(|(a, b)| (&a.matrix - &b.matrix).amax() / b.matrix.amax().max(1.0))
                .fold(0.0f64, f64::max)
        };
        let (coarse, fine) = (gap(1e-2), gap(1e-4));
        prop_assert!(fine <= coarse.max(1e-9), "{coarse} -> {fine}");
        prop_assert!(fine <= 1e-2);
    }

    /// Adding grid points can only raise the best certified rate.
    #[test]
    fn refining_the_grid_is_monotone(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(2..=3);
        let pairs: Vec<(Mat, Mat)> = (0..2).map(|_| (gaussian(&mut rng, d, d, 0.7), gaussian(&mut rng, d, d, 0.6))).collect();
        let coarse = TimeGrid::from_points(vec![0.5, 2.0]).unwrap();
        let fine = TimeGrid::from_points(vec![0.5, 1.0, 2.0]).unwrap();
        let opts = SearchOptions { depth: 4, budget: u64::MAX, forbid_self_switch: false };
        let lower = |grid: TimeGrid| {
            let g = reduced::pair_family(&pairs, 0.0, grid, 0.0).unwrap();
            exponent::search_words(&g.letters(false), &opts).unwrap().lower
        };
        prop_assert!(lower(fine) >= lower(coarse));
    }
}

#[test]
fn grid_below_dwell_time_is_rejected() {
    let f = family(7, 1.0);
    let opts = options(TimeGrid::from_points(vec![0.5, 2.0]).unwrap(), 0);
    assert!(reduced::build_generators(&f, FamilyKind::NBar, &opts).is_err());
    // the transient system runs in fast time and ignores the dwell time
    assert!(reduced::build_generators(&f, FamilyKind::NHat, &opts).is_ok());
}
