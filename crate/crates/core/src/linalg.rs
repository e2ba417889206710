//! Dense real matrix primitives: exponentials, spectra, norms, block
//! partitioning and truncation.
//!
//! Everything here works on small dense `f64` matrices (d of order 20 at
//! most). Eigenvalues go through a balanced real Schur form; the exponential
//! is the scaling-and-squaring Padé algorithm of Higham (2005).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Reciprocal-condition threshold below which a matrix is treated as singular.
pub const SINGULARITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub radius: f64,
    pub abscissa: f64,
}

impl Spectrum {
    fn from_eigenvalues(eigenvalues: Vec<Complex64>) -> Self {
        let radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let abscissa = eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        Spectrum {
            eigenvalues,
            radius,
            abscissa,
        }
    }
}

fn require_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Matrix exponential

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

/// `e^{t m}`.
pub fn mat_exp(m: &Matrix, t: f64) -> Result<Matrix> {
    require_square(m, "mat_exp")?;
    if !t.is_finite() {
        return Err(Error::NonFinite("mat_exp time".into()));
    }
    Ok(expm(&(m * t)))
}

/// Exponential of a square matrix. Panics if `a` is not square.
pub fn expm(a: &Matrix) -> Matrix {
    assert_eq!(a.nrows(), a.ncols(), "expm of a non-square matrix");
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    if n == 1 {
        return Matrix::from_element(1, 1, a[(0, 0)].exp());
    }
    let norm = one_norm(a);
    if norm == 0.0 {
        return Matrix::identity(n, n);
    }
    for (theta, coeffs) in [
        (THETA3, &PADE3[..]),
        (THETA5, &PADE5[..]),
        (THETA7, &PADE7[..]),
        (THETA9, &PADE9[..]),
    ] {
        if norm <= theta {
            return pade_low(a, coeffs);
        }
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-s);
    let mut x = pade13(&scaled);
    for _ in 0..s {
        x = &x * &x;
    }
    x
}

fn pade_solve(u: Matrix, v: Matrix) -> Matrix {
    let p = &v + &u;
    let q = &v - &u;
    // q is well conditioned for ||a|| below the theta bounds
    q.lu().solve(&p).expect("Padé denominator is nonsingular")
}

fn pade_low(a: &Matrix, b: &[f64]) -> Matrix {
    let n = a.nrows();
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    let mut u = &ident * b[1];
    let mut v = &ident * b[0];
    let mut pow = ident.clone();
    let m = b.len() - 1;
    let mut k = 2;
    while k <= m {
        pow = &pow * &a2;
        v += &pow * b[k];
        u += &pow * b[k + 1];
        k += 2;
    }
    pade_solve(a * u, v)
}

fn pade13(a: &Matrix) -> Matrix {
    let b = &PADE13;
    let n = a.nrows();
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];
    pade_solve(u, v)
}

// ---------------------------------------------------------------------------
// Spectra

/// Diagonal similarity that equalises row and column norms (Parlett-Reinsch).
fn balance(mut a: Matrix) -> Matrix {
    const RADIX: f64 = 2.0;
    const SQRDX: f64 = RADIX * RADIX;
    let n = a.nrows();
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= SQRDX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= SQRDX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= inv;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
    a
}

fn eigenvalues_2x2(a: f64, b: f64, c: f64, d: f64) -> [Complex64; 2] {
    let half_tr = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let disc = half_diff * half_diff + b * c;
    if disc >= 0.0 {
        let root = disc.sqrt();
        // avoid cancellation: larger-magnitude root first, other via det
        let big = if half_tr >= 0.0 {
            half_tr + root
        } else {
            half_tr - root
        };
        let det = a * d - b * c;
        let small = if big != 0.0 { det / big } else { 0.0 };
        [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex64::new(half_tr, im), Complex64::new(half_tr, -im)]
    }
}

fn eigenvalues(m: &Matrix) -> Vec<Complex64> {
    match m.nrows() {
        0 => Vec::new(),
        1 => vec![Complex64::new(m[(0, 0)], 0.0)],
        2 => eigenvalues_2x2(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]).to_vec(),
        _ => {
            let bal = balance(m.clone());
            bal.complex_eigenvalues().iter().copied().collect()
        }
    }
}

pub fn spectrum(m: &Matrix) -> Result<Spectrum> {
    require_square(m, "spectrum")?;
    ensure_finite(m, "spectrum input")?;
    Ok(Spectrum::from_eigenvalues(eigenvalues(m)))
}

/// Spectral radius of a square matrix. Panics if `m` is not square.
pub fn spectral_radius(m: &Matrix) -> f64 {
    assert_eq!(m.nrows(), m.ncols(), "spectral radius of a non-square matrix");
    if m.nrows() == 0 {
        return 0.0;
    }
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral abscissa of a square matrix (`-inf` for the empty matrix).
pub fn spectral_abscissa(m: &Matrix) -> f64 {
    assert_eq!(m.nrows(), m.ncols(), "spectral abscissa of a non-square matrix");
    eigenvalues(m)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest singular value.
pub fn operator_norm(m: &Matrix) -> f64 {
    match (m.nrows(), m.ncols()) {
        (0, _) | (_, 0) => 0.0,
        (1, _) | (_, 1) => m.norm(),
        (2, 2) => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            0.5 * ((a + d).hypot(b - c) + (a - d).hypot(b + c))
        }
        _ => m
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .fold(0.0, f64::max),
    }
}

// ---------------------------------------------------------------------------
// Blocks

/// The four blocks of a square matrix split after row/column `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
}

impl Blocks {
    pub fn assemble(&self) -> Matrix {
        let l = self.a.nrows();
        let n = l + self.d.nrows();
        let mut m = Matrix::zeros(n, n);
        m.view_mut((0, 0), (l, l)).copy_from(&self.a);
        m.view_mut((0, l), (l, n - l)).copy_from(&self.b);
        m.view_mut((l, 0), (n - l, l)).copy_from(&self.c);
        m.view_mut((l, l), (n - l, n - l)).copy_from(&self.d);
        m
    }
}

/// The `l x c` top-left block of `q`.
pub fn block_truncate(q: &Matrix, l: usize, c: usize) -> Result<Matrix> {
    if l > q.nrows() || c > q.ncols() {
        return Err(Error::Dimension(format!(
            "truncation to {l}x{c} exceeds {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    Ok(q.view((0, 0), (l, c)).into_owned())
}

pub fn block_partition(m: &Matrix, l: usize) -> Result<Blocks> {
    require_square(m, "block_partition")?;
    let n = m.nrows();
    if l < 1 || l + 1 > n {
        return Err(Error::Dimension(format!(
            "split index {l} out of range [1, {}]",
            n.saturating_sub(1)
        )));
    }
    Ok(Blocks {
        a: m.view((0, 0), (l, l)).into_owned(),
        b: m.view((0, l), (l, n - l)).into_owned(),
        c: m.view((l, 0), (n - l, l)).into_owned(),
        d: m.view((l, l), (n - l, n - l)).into_owned(),
    })
}

/// `diag(top, bottom)` as one square matrix.
pub fn block_diag(top: &Matrix, bottom: &Matrix) -> Matrix {
    let l = top.nrows();
    let n = l + bottom.nrows();
    let mut m = Matrix::zeros(n, n);
    m.view_mut((0, 0), (l, l)).copy_from(top);
    m.view_mut((l, l), (n - l, n - l)).copy_from(bottom);
    m
}

/// Embed `m` into the top-left corner of an `n x n` zero matrix.
pub fn embed_top_left(m: &Matrix, n: usize) -> Matrix {
    let mut out = Matrix::zeros(n, n);
    out.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    out
}

// ---------------------------------------------------------------------------
// Inversion

#[derive(Debug, Clone, PartialEq)]
pub struct Inverse {
    pub matrix: Matrix,
    /// 1-norm condition number.
    pub condition: f64,
}

pub fn invert(m: &Matrix) -> Result<Inverse> {
    require_square(m, "invert")?;
    ensure_finite(m, "invert input")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(Inverse {
            matrix: m.clone(),
            condition: 1.0,
        });
    }
    let norm = one_norm(m);
    let singular = |rcond: f64| Error::Singular {
        rcond,
        context: String::new(),
    };
    if norm == 0.0 {
        return Err(singular(0.0));
    }
    let inv = m.clone().lu().try_inverse().ok_or_else(|| singular(0.0))?;
    if !inv.iter().all(|x| x.is_finite()) {
        return Err(singular(0.0));
    }
    let condition = norm * one_norm(&inv);
    if !(1.0 / condition >= SINGULARITY_TOL) {
        return Err(singular(1.0 / condition));
    }
    Ok(Inverse {
        matrix: inv,
        condition,
    })
}

/// Numerical rank from singular values, relative to the largest one.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max.max(1.0)).count()
}
