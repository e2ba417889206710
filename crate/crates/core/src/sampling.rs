//! Random modes and families for experiments and randomized testing.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, Blocks, Matrix};
use crate::model::{Mode, SystemFamily};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpKind {
    Identity,
    /// Gaussian matrix rescaled to the given operator norm.
    Random { norm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingOptions {
    pub identity_p: bool,
    /// Largest accepted condition number of `P` (redrawn otherwise).
    pub max_p_condition: f64,
    /// The fast block is shifted so that its spectral abscissa lies in
    /// `-fast_margin.1 ..= -fast_margin.0`.
    pub fast_margin: (f64, f64),
    pub jump: JumpKind,
    pub entry_scale: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            identity_p: false,
            max_p_condition: 1e3,
            fast_margin: (1.0, 3.0),
            jump: JumpKind::Random { norm: 1.0 },
            entry_scale: 0.5,
        }
    }
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Shift a square matrix so that its spectral abscissa equals `-margin`.
pub fn shift_to_abscissa(m: &Matrix, target: f64) -> Matrix {
    let a = linalg::spectral_abscissa(m);
    let mut out = m.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += target - a;
    }
    out
}

fn random_p<R: Rng + ?Sized>(rng: &mut R, d: usize, opts: &SamplingOptions) -> Matrix {
    if opts.identity_p {
        return Matrix::identity(d, d);
    }
    loop {
        let p = gaussian(rng, d, d, 1.0);
        if let Ok(inv) = linalg::invert(&p) {
            if inv.condition <= opts.max_p_condition {
                return p;
            }
        }
    }
}

pub fn random_jump<R: Rng + ?Sized>(rng: &mut R, d: usize, kind: JumpKind) -> Matrix {
    match kind {
        JumpKind::Identity => Matrix::identity(d, d),
        JumpKind::Random { norm } => {
            let g = gaussian(rng, d, d, 1.0);
            let n = linalg::operator_norm(&g);
            if n == 0.0 {
                g
            } else {
                g * (norm / n)
            }
        }
    }
}

/// A mode whose fast block is Hurwitz with a margin drawn from `opts.fast_margin`.
pub fn random_mode<R: Rng + ?Sized>(rng: &mut R, d: usize, l: usize, opts: &SamplingOptions) -> Mode {
    let s = opts.entry_scale;
    let (lo, hi) = opts.fast_margin;
    let margin = rng.random_range(lo..=hi);
    let blocks = Blocks {
        a: gaussian(rng, l, l, s),
        b: gaussian(rng, l, d - l, s),
        c: gaussian(rng, d - l, l, s),
        d: shift_to_abscissa(&gaussian(rng, d - l, d - l, s), -margin),
    };
    let p = random_p(rng, d, opts);
    let lambda = blocks.assemble() * &p;
    let r = random_jump(rng, d, opts.jump);
    Mode::new(l, p, lambda, r).expect("sampled mode is valid")
}

/// `n_modes` random modes of dimension `d`. With `shared_l` every mode uses
/// that split, otherwise each draws its own.
pub fn random_family<R: Rng + ?Sized>(
    rng: &mut R,
    n_modes: usize,
    d: usize,
    shared_l: Option<usize>,
    tau: f64,
    opts: &SamplingOptions,
) -> SystemFamily {
    let modes = (0..n_modes)
        .map(|_| {
            let l = shared_l.unwrap_or_else(|| rng.random_range(1..d));
            random_mode(rng, d, l, opts)
        })
        .collect();
    SystemFamily::new(modes, tau).expect("sampled family is valid")
}
