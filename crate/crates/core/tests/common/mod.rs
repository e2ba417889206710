//! Oracles shared by the integration tests. Nothing here calls into the
//! code paths it is used to check.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub type Mat = DMatrix<f64>;

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// `(1/eps) P^-1 diag(eps I_l, I) Lambda`, formed directly.
pub fn full_generator(l: usize, p: &Mat, lambda: &Mat, eps: f64) -> Mat {
    let d = p.nrows();
    let mask = Mat::from_fn(d, d, |i, j| if i != j { 0.0 } else if i < l { 1.0 } else { 1.0 / eps });
    p.clone().try_inverse().expect("invertible P") * mask * lambda
}

/// Dormand-Prince 5(4) with local error control, for `x' = a x`.
pub fn integrate_linear(a: &Mat, x0: &[f64], t_end: f64, rtol: f64, atol: f64) -> Vec<f64> {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut x = DVector::from_column_slice(x0);
    let mut t = 0.0;
    let mut h = (t_end / 100.0).min(1e-3 / a.norm().max(1.0)).max(1e-12);
    while t < t_end {
        h = h.min(t_end - t);
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        for s in 0..7 {
            let mut xs = x.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[s][j] != 0.0 {
                    xs += kj * (h * A[s][j]);
                }
            }
            k.push(a * xs);
        }
        let mut x5 = x.clone();
        let mut err = DVector::zeros(x.len());
        for s in 0..7 {
            x5 += &k[s] * (h * B5[s]);
            err += &k[s] * (h * (B5[s] - B4[s]));
        }
        let scaled = err
            .iter()
            .zip(x.iter().zip(x5.iter()))
            .map(|(e, (u, v))| {
                let sc = atol + rtol * u.abs().max(v.abs());
                (e / sc).powi(2)
            })
            .sum::<f64>()
            / x.len() as f64;
        let e = scaled.sqrt();
        if e <= 1.0 {
            t += h;
            x = x5;
        }
        let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    x.iter().copied().collect()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// `max log rho(N_{w_k} ... N_{w_1}) / |w|` over every word of length
/// `1..=depth`, first letter applied first, weights summed left to right.
pub fn exhaustive_lower(matrices: &[Mat], weights: &[f64], depth: usize, rho: impl Fn(&Mat) -> f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut frontier: Vec<(Mat, f64)> = matrices.iter().cloned().zip(weights.iter().copied()).collect();
    for len in 1..=depth {
        for (p, w) in &frontier {
            best = best.max(rho(p).ln() / w);
        }
        if len == depth {
            break;
        }
        let mut next = Vec::with_capacity(frontier.len() * matrices.len());
        for (p, w) in &frontier {
            for (m, wm) in matrices.iter().zip(weights) {
                next.push((m * p, w + wm));
            }
        }
        frontier = next;
    }
    best
}

/// Largest eigenvalue modulus via nalgebra's complex eigenvalues.
pub fn spectral_radius_oracle(m: &Mat) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}
