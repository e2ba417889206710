mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{full_generator, Mat};
use singstab::chang;
use singstab::linalg;
use singstab::model::Mode;
use singstab::sampling::{self, SamplingOptions};

fn sample_mode(seed: u64) -> Mode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=5);
    let l = rng.random_range(1..d);
    sampling::random_mode(&mut rng, d, l, &SamplingOptions::default())
}

fn top_left(m: &Mat, l: usize) -> Mat {
    m.view((0, 0), (l, l)).into_owned()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// `T G T^-1` equals the reported block-triangular `Gamma / eps` form.
    #[test]
    fn conjugation_gives_gamma(seed in any::<u64>(), k in 1i32..4) {
        let mode = sample_mode(seed);
        let eps = 10f64.powi(-k);
        let data = chang::build_transform(&mode, eps).unwrap();
        let g = full_generator(mode.l(), mode.p(), mode.lambda(), eps);
        let conj = &data.t * g * &data.t_inv;
        let gamma = data.gamma.clone().unwrap();
        // the fast block carries 1/eps, so compare relative to the largest entry
        let scale = gamma.amax().max(1.0);
        prop_assert!((&conj - &gamma).amax() <= 1e-8 * scale, "{conj} vs {gamma}");
        prop_assert!((&data.t * &data.t_inv - Mat::identity(mode.d(), mode.d())).amax() <= 1e-9 * linalg::operator_norm(&data.t).powi(2));
    }

    /// `Q^eps - Q^0 = O(eps)` and the slow block tends to `M`.
    #[test]
    fn limits_are_first_order(seed in any::<u64>()) {
        let mode = sample_mode(seed);
        let red = chang::reduced_mode(&mode).unwrap();
        let tol = chang::default_tolerance(&mode);
        let (q0, _) = chang::solve_q(&mode, 0.0, tol).unwrap();
        let mut ratios = Vec::new();
        let mut gaps = Vec::new();
        for eps in [1e-2, 1e-3, 1e-4] {
            let (q, _) = chang::solve_q(&mode, eps, tol).unwrap();
            ratios.push(linalg::operator_norm(&(&q - &q0)) / eps);
            let data = chang::build_transform(&mode, eps).unwrap();
            let gap = linalg::operator_norm(&(top_left(data.gamma.as_ref().unwrap(), mode.l()) - &red.m));
            gaps.push(gap / eps);
        }
        // first-order behavior: the scaled differences stay bounded
        for r in ratios.iter().chain(&gaps) {
            prop_assert!(r.is_finite());
        }
        prop_assert!(ratios[2] <= 2.0 * ratios[0] + 1e-6, "{ratios:?}");
        prop_assert!(gaps[2] <= 2.0 * gaps[0] + 1e-6, "{gaps:?}");
    }

    /// At `eps = 0` the transform is the limit of the `eps > 0` transforms.
    #[test]
    fn transform_is_continuous_at_zero(seed in any::<u64>()) {
        let mode = sample_mode(seed);
        let red = chang::reduced_mode(&mode).unwrap();
        let t = chang::build_transform(&mode, 1e-6).unwrap().t;
        prop_assert!((&t - &red.t0).amax() <= 1e-4 * red.t0.amax().max(1.0));
        prop_assert!((&red.t0 * &red.t0_inv - Mat::identity(mode.d(), mode.d())).amax() <= 1e-9 * red.t0.amax().powi(2).max(1.0));
    }
}

/// A zero fast block is rejected as a precondition failure.
#[test]
fn singular_fast_block_is_a_precondition() {
    let lambda = Mat::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, 0.0]);
    let mode = Mode::new(1, Mat::identity(2, 2), lambda, Mat::identity(2, 2)).unwrap();
    let err = chang::reduced_mode(&mode).unwrap_err();
    assert!(matches!(err, singstab::Error::Precondition(_)), "{err}");
}
