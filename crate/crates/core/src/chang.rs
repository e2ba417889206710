//! Block-triangularizing change of coordinates for one mode.
//!
//! With `(A B; C D) = Lambda P^-1` and `L = D^-1 C + eps Q`, the map
//! `T = (I 0; L I) P` sends the mode generator to
//! `Gamma = (A - B L, B; 0, D/eps + L B)` provided `D Q = L A - L B L`.

use crate::error::{Error, Result};
use crate::linalg::{self, Blocks, Matrix};
use crate::model::Mode;

pub const MAX_FIXED_POINT_ITERATIONS: usize = 200;
const MAX_NEWTON_ITERATIONS: usize = 40;

/// Default solver tolerance for a mode: `1e-12 (1 + |Lambda|)`.
pub fn default_tolerance(mode: &Mode) -> f64 {
    1e-12 * (1.0 + linalg::operator_norm(mode.lambda()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangData {
    pub eps: f64,
    pub l: usize,
    pub q: Matrix,
    pub t: Matrix,
    pub t_inv: Matrix,
    /// Unshifted `Gamma^eps`; `None` at `eps = 0`, where the pair
    /// `(M, D)` of [`ReducedMode`] stands in for it.
    pub gamma: Option<Matrix>,
    /// `|lower-left block of T (P^-1 E^eps_{l^c} Lambda) T^-1|`.
    pub residual: f64,
    pub iterations: usize,
}

impl ChangData {
    /// `Gamma^eps + mu I`.
    pub fn gamma_shifted(&self, mu: f64) -> Option<Matrix> {
        self.gamma.as_ref().map(|g| {
            let mut g = g.clone();
            for i in 0..g.nrows() {
                g[(i, i)] += mu;
            }
            g
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMode {
    pub l: usize,
    /// `A - B D^-1 C`.
    pub m: Matrix,
    pub t0: Matrix,
    pub t0_inv: Matrix,
    /// Fast block `D`.
    pub d: Matrix,
}

impl ReducedMode {
    pub fn dim(&self) -> usize {
        self.t0.nrows()
    }

    /// `T^-1 diag(top, bottom) T`.
    pub fn conjugate_block_diag(&self, top: &Matrix, bottom: &Matrix) -> Matrix {
        &self.t0_inv * linalg::block_diag(top, bottom) * &self.t0
    }

    /// `T^-1 diag(I_l, e^{s D}) T`: the fast transient over fast time `s`.
    pub fn fast_transient(&self, s: f64) -> Matrix {
        let top = Matrix::identity(self.l, self.l);
        self.conjugate_block_diag(&top, &linalg::expm(&(&self.d * s)))
    }

    /// `T^-1 diag(e^{t M^mu}, 0) T`.
    pub fn slow_flow(&self, t: f64, mu: f64) -> Matrix {
        let n = self.dim() - self.l;
        self.conjugate_block_diag(&slow_exp(&self.m, t, mu), &Matrix::zeros(n, n))
    }
}

/// `e^{t (M + mu I)}`, with the shift applied as a scalar factor.
pub(crate) fn slow_exp(m: &Matrix, t: f64, mu: f64) -> Matrix {
    linalg::expm(&(m * t)) * (mu * t).exp()
}

fn fast_inverse(blocks: &Blocks) -> Result<Matrix> {
    linalg::invert(&blocks.d)
        .map(|inv| inv.matrix)
        .map_err(|e| match e {
            Error::Singular { rcond, .. } => Error::Precondition(format!(
                "fast block D is singular (reciprocal condition {rcond:.3e})"
            )),
            other => other,
        })
}

pub fn reduced_mode(mode: &Mode) -> Result<ReducedMode> {
    let blocks = mode.abcd();
    let d_inv = fast_inverse(&blocks)?;
    let h = &d_inv * &blocks.c;
    let m = &blocks.a - &blocks.b * &h;
    let (t0, t0_inv) = transform_pair(mode, &h);
    Ok(ReducedMode {
        l: mode.l(),
        m,
        t0,
        t0_inv,
        d: blocks.d,
    })
}

/// `T = (I 0; L I) P` and its inverse `P^-1 (I 0; -L I)`.
fn transform_pair(mode: &Mode, l_mat: &Matrix) -> (Matrix, Matrix) {
    let d = mode.d();
    let l = mode.l();
    let mut shear = Matrix::identity(d, d);
    shear.view_mut((l, 0), (d - l, l)).copy_from(l_mat);
    let mut shear_inv = Matrix::identity(d, d);
    shear_inv.view_mut((l, 0), (d - l, l)).copy_from(&(-l_mat));
    (&shear * mode.p(), mode.p_inv() * shear_inv)
}

/// `F(Q) = D Q - L A + L B L` with `L = H + eps Q`.
fn coupling_defect(b: &Blocks, h: &Matrix, eps: f64, q: &Matrix) -> (Matrix, f64) {
    let l_mat = h + q * eps;
    let f = &b.d * q - &l_mat * &b.a + &l_mat * &b.b * &l_mat;
    let scale = linalg::operator_norm(&b.d) * linalg::operator_norm(q)
        + linalg::operator_norm(&l_mat)
            * (linalg::operator_norm(&b.a)
                + linalg::operator_norm(&b.b) * linalg::operator_norm(&l_mat));
    (f, scale)
}

/// One Newton step: solve `(D + eps L B) X - eps X (A - B L) = -F`.
fn newton_step(b: &Blocks, h: &Matrix, eps: f64, q: &Matrix, f: &Matrix) -> Option<Matrix> {
    let l_mat = h + q * eps;
    let left = &b.d + &l_mat * &b.b * eps;
    let right = (&b.a - &b.b * &l_mat) * eps;
    let (n, l) = (q.nrows(), q.ncols());
    // column-major vec: vec(X Y) = (Y^T kron I) vec X, vec(L X) = (I kron L) vec X
    let sys = Matrix::identity(l, l).kronecker(&left) - right.transpose().kronecker(&Matrix::identity(n, n));
    let rhs = nalgebra::DVector::from_iterator(n * l, f.iter().map(|x| -x));
    let sol = sys.lu().solve(&rhs)?;
    Some(Matrix::from_column_slice(n, l, sol.as_slice()))
}

fn newton(b: &Blocks, h: &Matrix, eps: f64, mut q: Matrix, tol: f64) -> Option<(Matrix, usize)> {
    for it in 0..=MAX_NEWTON_ITERATIONS {
        let (f, scale) = coupling_defect(b, h, eps, &q);
        let r = linalg::operator_norm(&f);
        if !r.is_finite() {
            return None;
        }
        if accept(r, scale, tol) {
            return Some((q, it));
        }
        match newton_step(b, h, eps, &q, &f) {
            Some(step) if step.iter().all(|x| x.is_finite()) => q += step,
            _ => return None,
        }
    }
    None
}

/// The slow block `A - B L` must stay spectrally below the fast block
/// `D/eps + L B`, otherwise the solution sits on another branch.
fn separated(b: &Blocks, h: &Matrix, eps: f64, q: &Matrix) -> bool {
    let l_mat = h + q * eps;
    let slow = linalg::spectrum(&(&b.a - &b.b * &l_mat)).map(|s| s.radius);
    let fast = linalg::spectrum(&(&b.d / eps + &l_mat * &b.b))
        .map(|s| s.eigenvalues.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min));
    matches!((slow, fast), (Ok(s), Ok(f)) if s < f)
}

fn accept(res: f64, scale: f64, tol: f64) -> bool {
    res <= tol || res <= 64.0 * f64::EPSILON * scale
}

/// Solves the coupling-elimination equation for `Q^eps`.
///
/// Fixed-point iteration `Q <- D^-1 (L A - L B L)` from the closed-form
/// `eps = 0` solution, then Newton's method from the best iterate, then
/// Newton continuation along increasing `eps` from the `eps = 0` solution.
pub fn solve_q(mode: &Mode, eps: f64, tol: f64) -> Result<(Matrix, usize)> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    let blocks = mode.abcd();
    let d_inv = fast_inverse(&blocks)?;
    let h = &d_inv * &blocks.c;
    let m = &blocks.a - &blocks.b * &h;
    let q0 = &d_inv * &h * &m;
    if eps == 0.0 {
        return Ok((q0, 0));
    }

    let mut q = q0.clone();
    let (f, scale) = coupling_defect(&blocks, &h, eps, &q);
    let mut res = linalg::operator_norm(&f);
    if accept(res, scale, tol) && separated(&blocks, &h, eps, &q) {
        return Ok((q, 0));
    }
    let mut best = (res, q.clone());
    let mut stalled = 0;
    let mut iterations = 0;
    for it in 1..=MAX_FIXED_POINT_ITERATIONS {
        iterations = it;
        let l_mat = &h + &q * eps;
        q = &d_inv * (&l_mat * &blocks.a - &l_mat * &blocks.b * &l_mat);
        let (f, scale) = coupling_defect(&blocks, &h, eps, &q);
        let r = linalg::operator_norm(&f);
        if !r.is_finite() {
            break;
        }
        if accept(r, scale, tol) && separated(&blocks, &h, eps, &q) {
            return Ok((q, it));
        }
        if r < best.0 {
            best = (r, q.clone());
        }
        stalled = if r >= res { stalled + 1 } else { 0 };
        res = r;
        if stalled >= 3 {
            break;
        }
    }
    if let Some((q, it)) = newton(&blocks, &h, eps, best.1, tol) {
        if separated(&blocks, &h, eps, &q) {
            return Ok((q, iterations + it));
        }
    }

    // continuation: march eps up from zero, halving the step on failure
    let mut q = q0;
    let mut at = 0.0;
    let mut step = eps / 16.0;
    let mut halvings = 0;
    while at < eps {
        let next = (at + step).min(eps);
        match newton(&blocks, &h, next, q.clone(), tol) {
            Some((qn, it)) => {
                iterations += it;
                q = qn;
                at = next;
                step *= 1.5;
            }
            None => {
                halvings += 1;
                step /= 2.0;
                if halvings > 40 {
                    break;
                }
            }
        }
    }
    if at == eps {
        return Ok((q, iterations));
    }
    Err(Error::Convergence {
        mode: 0,
        eps,
        detail: format!("coupling equation for Q has no solution branch beyond eps = {at:.3e}"),
    })
}

/// Builds `Q`, `T`, `T^-1`, `Gamma` (for `eps > 0`) and the verification residual.
pub fn build_transform(mode: &Mode, eps: f64) -> Result<ChangData> {
    build_transform_with_tol(mode, eps, default_tolerance(mode))
}

pub fn build_transform_with_tol(mode: &Mode, eps: f64, tol: f64) -> Result<ChangData> {
    let (q, iterations) = solve_q(mode, eps, tol)?;
    let blocks = mode.abcd();
    let d_inv = fast_inverse(&blocks)?;
    let l_mat = &d_inv * &blocks.c + &q * eps;
    let (t, t_inv) = transform_pair(mode, &l_mat);
    let d = mode.d();
    let l = mode.l();

    let mask = crate::model::scaled_mask(d, l, eps, true)?;
    let conj = &t * (mode.p_inv() * mask * mode.lambda()) * &t_inv;
    let residual = linalg::operator_norm(&conj.view((l, 0), (d - l, l)).into_owned());

    let gamma = if eps > 0.0 {
        let top_left = &blocks.a - &blocks.b * &l_mat;
        let bottom_right = &blocks.d / eps + &l_mat * &blocks.b;
        let mut g = Matrix::zeros(d, d);
        g.view_mut((0, 0), (l, l)).copy_from(&top_left);
        g.view_mut((0, l), (l, d - l)).copy_from(&blocks.b);
        g.view_mut((l, l), (d - l, d - l)).copy_from(&bottom_right);
        Some(g)
    } else {
        None
    };
    Ok(ChangData {
        eps,
        l,
        q,
        t,
        t_inv,
        gamma,
        residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{self, ExampleVariant};
    use crate::sampling;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(m: &Matrix) -> f64 {
        assert_eq!(m.shape(), (1, 1));
        m[(0, 0)]
    }

    #[test]
    fn closed_form_examples() {
        let fam = builtin::example_family(0.45, ExampleVariant::Printed);
        let (q, _) = solve_q(fam.mode(0), 0.0, 1e-12).unwrap();
        assert!((scalar(&q) - 2.0).abs() <= 1e-12);
        let (q, _) = solve_q(&builtin::classic_mode(), 0.0, 1e-12).unwrap();
        assert!((scalar(&q) + 0.125).abs() <= 1e-15);
    }

    #[test]
    fn decoupled_when_b_zero() {
        let lambda = Matrix::from_row_slice(2, 2, &[-0.7, 0.0, 0.4, -3.0]);
        let mode = Mode::new(1, Matrix::identity(2, 2), lambda, Matrix::identity(2, 2)).unwrap();
        let (q, _) = solve_q(&mode, 0.0, 1e-12).unwrap();
        // D^-2 C A = (1/9)(0.4)(-0.7)
        assert!((scalar(&q) - 0.4 * -0.7 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn reduced_examples() {
        let fam = builtin::example_family(0.45, ExampleVariant::Printed);
        let red = reduced_mode(fam.mode(0)).unwrap();
        assert_eq!(scalar(&red.m), -2.0);
        assert_eq!(red.t0, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]));
        assert_eq!(scalar(&reduced_mode(&builtin::classic_mode()).unwrap().m), -0.5);

        let lambda = Matrix::from_row_slice(2, 2, &[0.3, 2.0, 0.0, -1.0]);
        let mode = Mode::new(1, Matrix::identity(2, 2), lambda, Matrix::identity(2, 2)).unwrap();
        assert_eq!(scalar(&reduced_mode(&mode).unwrap().m), 0.3);
    }

    #[test]
    fn singular_fast_block() {
        let lambda = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, 0.0]);
        let mode = Mode::new(1, Matrix::identity(2, 2), lambda, Matrix::identity(2, 2)).unwrap();
        assert!(matches!(reduced_mode(&mode), Err(Error::Precondition(_))));
        assert!(matches!(solve_q(&mode, 0.1, 1e-12), Err(Error::Precondition(_))));
    }

    #[test]
    fn classic_transform() {
        let data = build_transform(&builtin::classic_mode(), 0.1).unwrap();
        assert!(data.residual <= 1e-10);
        let g = data.gamma.as_ref().unwrap();
        assert_eq!(g[(1, 0)], 0.0);
        let shifted = data.gamma_shifted(2.0).unwrap();
        assert_eq!(shifted - g, Matrix::identity(2, 2) * 2.0);
    }

    #[test]
    fn eps_zero_gives_transform_only() {
        let data = build_transform(&builtin::classic_mode(), 0.0).unwrap();
        assert!(data.gamma.is_none());
        let red = reduced_mode(&builtin::classic_mode()).unwrap();
        assert_eq!(data.t, red.t0);
    }

    #[test]
    fn newton_fallback_beyond_contraction() {
        // eps large enough that the plain iteration is not a contraction
        let lambda = Matrix::from_row_slice(2, 2, &[2.0, 3.0, 1.0, -1.0]);
        let mode = Mode::new(1, Matrix::identity(2, 2), lambda, Matrix::identity(2, 2)).unwrap();
        match build_transform(&mode, 0.3) {
            Ok(data) => assert!(data.residual < 1e-9, "{}", data.residual),
            Err(e) => assert!(matches!(e, Error::Convergence { .. })),
        }
    }

    #[test]
    fn q_converges_linearly_in_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mode = sampling::random_mode(&mut rng, 4, 2, &Default::default());
            let (q0, _) = solve_q(&mode, 0.0, 1e-12).unwrap();
            let mut ratios = Vec::new();
            for eps in [1e-2, 1e-3, 1e-4] {
                let (q, _) = solve_q(&mode, eps, default_tolerance(&mode)).unwrap();
                ratios.push(linalg::operator_norm(&(q - &q0)) / eps);
            }
            let c = ratios.iter().cloned().fold(0.0, f64::max);
            assert!(c.is_finite());
            assert!(ratios[2] <= 2.0 * ratios[0] + 1e-6, "{ratios:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn conjugation_identity(seed in any::<u64>(), d in 2usize..=5, k in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = 1 + (seed as usize) % (d - 1);
            let mode = sampling::random_mode(&mut rng, d, l, &Default::default());
            let eps = [1e-1, 1e-2, 1e-3, 1e-4][k];
            let data = build_transform(&mode, eps).unwrap();
            let g = data.gamma.unwrap();
            let gen = mode.epsilon_generator(eps).unwrap();
            let conj = &data.t * gen * &data.t_inv;
            prop_assert!(linalg::operator_norm(&(conj - &g)) <= 1e-8 * linalg::operator_norm(&g));
        }

        #[test]
        fn top_left_tends_to_reduced(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mode = sampling::random_mode(&mut rng, 3, 1, &Default::default());
            let red = reduced_mode(&mode).unwrap();
            let b = mode.abcd().b;
            for eps in [1e-2, 1e-3, 1e-4] {
                let data = build_transform(&mode, eps).unwrap();
                let g = data.gamma.unwrap();
                let top = g.view((0, 0), (1, 1)).into_owned();
                let bound = linalg::operator_norm(&b) * linalg::operator_norm(&data.q) * eps;
                prop_assert!(linalg::operator_norm(&(top - &red.m)) <= bound * (1.0 + 1e-9) + 1e-13);
            }
        }

        #[test]
        fn transform_condition_bounded(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mode = sampling::random_mode(&mut rng, 4, 1, &Default::default());
            let conds: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&eps| linalg::invert(&build_transform(&mode, eps).unwrap().t).unwrap().condition)
                .collect();
            let c0 = linalg::invert(&reduced_mode(&mode).unwrap().t0).unwrap().condition;
            for c in conds {
                prop_assert!(c <= 10.0 * c0 + 10.0);
            }
        }
    }
}
