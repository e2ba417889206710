mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gaussian, spectral_radius_oracle};
use singstab::linalg::{self, Matrix};
use singstab::model::{self, Piece, SwitchingSignal, SystemFamily};
use singstab::sampling::{self, SamplingOptions};

/// Random `n x n` matrix with operator norm at most `bound`.
fn bounded(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Matrix {
    let m = gaussian(rng, n, n, 1.0);
    let norm = linalg::operator_norm(&m);
    m * (bound * rng.random::<f64>() / norm)
}

fn max_rel(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_semigroup_and_inverse(seed in any::<u64>(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = bounded(&mut rng, 4, 5.0);
        let es = linalg::expm(&(&m * s));
        let et = linalg::expm(&(&m * t));
        let est = linalg::expm(&(&m * (s + t)));
        prop_assert!(max_rel(&(&es * &et), &est) <= 1e-9);
        let inv = linalg::expm(&(&m * -t));
        prop_assert!((et * inv - Matrix::identity(4, 4)).amax() <= 1e-9);
    }

    #[test]
    fn operator_norm_is_submultiplicative(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, n, n, 1.0);
        let b = gaussian(&mut rng, n, n, 1.0);
        let lhs = linalg::operator_norm(&(&a * &b));
        prop_assert!(lhs <= linalg::operator_norm(&a) * linalg::operator_norm(&b) * (1.0 + 1e-12));
        prop_assert!(linalg::spectral_radius(&a) <= linalg::operator_norm(&a) * (1.0 + 1e-12));
    }

    #[test]
    fn spectrum_matches_reference(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, n, n, 1.0);
        let ours = linalg::spectral_radius(&a);
        let reference = spectral_radius_oracle(&a);
        prop_assert!((ours - reference).abs() <= 1e-9 * reference.max(1.0));
    }

    #[test]
    fn partition_reassembles_exactly(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = gaussian(&mut rng, n, n, 1.0);
        let l = rng.random_range(1..n);
        let blocks = linalg::block_partition(&m, l).unwrap();
        prop_assert_eq!(blocks.assemble(), m);
    }

    #[test]
    fn masks_are_complementary(d in 2usize..8, l_off in 0usize..6, eps in 1e-6f64..1.0) {
        let l = 1 + l_off % (d - 1);
        let plain = model::scaled_mask(d, l, eps, false).unwrap();
        let complement = model::scaled_mask(d, l, eps, true).unwrap();
        // E_l E_{l^c} = eps I with every product 1 * eps, so exact
        prop_assert_eq!(&plain * &complement, Matrix::identity(d, d) * eps);
    }

    #[test]
    fn abcd_reassembles_lambda_p_inverse(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(2..=5);
        let l = rng.random_range(1..d);
        let mode = sampling::random_mode(&mut rng, d, l, &SamplingOptions::default());
        let whole = mode.abcd().assemble();
        let direct = mode.lambda() * mode.p_inv();
        prop_assert!(max_rel(&whole, &direct) <= 1e-12);
    }

    #[test]
    fn admissibility_is_monotone_in_tau(durations in prop::collection::vec(0.01f64..2.0, 1..8), tau in 0.0f64..2.0, shrink in 0.0f64..1.0) {
        let signal = SwitchingSignal {
            pieces: durations.iter().enumerate().map(|(i, &d)| Piece { mode: i % 2, duration: d }).collect(),
            final_mode: durations.len() % 2,
        };
        if signal.check_admissible(2, tau, false).is_ok() {
            prop_assert!(signal.check_admissible(2, tau * shrink, false).is_ok());
        }
    }

    #[test]
    fn family_json_round_trips(seed in any::<u64>(), tau in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(2..=4);
        let n = rng.random_range(1..=3);
        let f = sampling::random_family(&mut rng, n, d, None, tau, &SamplingOptions::default());
        let back = model::parse_family(&f.to_json()).unwrap().family;
        prop_assert_eq!(back, f);
    }
}

/// Every companion matrix `[[0, 1], [-a0, -a1]]` with small integer
/// coefficients: the abscissa and Hurwitz status follow from the quadratic formula.
#[test]
fn integer_companion_matrices() {
    for a0 in -3i32..=3 {
        for a1 in -3i32..=3 {
            let m = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -a0 as f64, -a1 as f64]);
            let (a0, a1) = (a0 as f64, a1 as f64);
            let disc = a1 * a1 - 4.0 * a0;
            let expected = if disc >= 0.0 {
                (-a1 + disc.sqrt()) / 2.0
            } else {
                -a1 / 2.0
            };
            let got = linalg::spectral_abscissa(&m);
            assert!((got - expected).abs() <= 1e-7, "a0 {a0} a1 {a1}: {got} vs {expected}");
            assert_eq!(got < 0.0, a0 > 0.0 && a1 > 0.0, "Hurwitz status for a0 {a0} a1 {a1}");
        }
    }
}

#[test]
fn singular_p_is_reported_with_its_path() {
    let doc = r#"{"d": 2, "tau": 0, "modes": [
        {"l": 1, "P": [[1, 0], [0, 1]], "Lambda": [[-1, 0], [0, -1]], "R": [[1, 0], [0, 1]]},
        {"l": 1, "P": [[1, 2], [2, 4]], "Lambda": [[-1, 0], [0, -1]], "R": [[1, 0], [0, 1]]}
    ]}"#;
    let err = model::parse_family(doc).unwrap_err().to_string();
    assert!(err.contains("modes[1].P"), "{err}");
}

#[test]
fn family_rejects_mixed_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = sampling::random_mode(&mut rng, 2, 1, &SamplingOptions::default());
    let b = sampling::random_mode(&mut rng, 3, 1, &SamplingOptions::default());
    assert!(SystemFamily::new(vec![a, b], 0.0).is_err());
}
