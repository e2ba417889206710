//! Built-in families: the two-mode worked example (printed and swapped
//! variants) and a single-mode fixture used throughout the tests.

use crate::linalg::Matrix;
use crate::model::{Mode, SystemFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleVariant {
    /// Second mode exactly as published; its fast block is `+1`.
    Printed,
    /// Second mode with `Lambda = [[1, -1], [-1, -1]]`, giving both modes the
    /// same blocks with the roles of the variables swapped.
    Swapped,
}

impl ExampleVariant {
    pub fn name(self) -> &'static str {
        match self {
            ExampleVariant::Printed => "printed",
            ExampleVariant::Swapped => "swapped",
        }
    }
}

fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix {
    Matrix::from_row_slice(2, 2, &[a, b, c, d])
}

/// The two-mode example family with jump parameter `r` and dwell time 0.
pub fn example_family(r: f64, variant: ExampleVariant) -> SystemFamily {
    let first = Mode::new(
        1,
        Matrix::identity(2, 2),
        m2(-1.0, 1.0, -1.0, -1.0),
        m2(2.0 * r, 2.0 * r, r, r),
    )
    .expect("valid mode");
    let lambda2 = match variant {
        ExampleVariant::Printed => m2(-1.0, -1.0, 1.0, -1.0),
        ExampleVariant::Swapped => m2(1.0, -1.0, -1.0, -1.0),
    };
    let second = Mode::new(
        1,
        m2(0.0, 1.0, 1.0, 0.0),
        lambda2,
        m2(-2.0 * r, -2.0 * r, r, r),
    )
    .expect("valid mode");
    SystemFamily::new(vec![first, second], 0.0).expect("valid family")
}

/// `l = 1`, `P = I`, `Lambda = [[-1, 1], [1, -2]]`, `R = I`: blocks
/// `A = -1, B = 1, C = 1, D = -2`, reduced matrix `M = -0.5`.
pub fn classic_mode() -> Mode {
    Mode::new(
        1,
        Matrix::identity(2, 2),
        m2(-1.0, 1.0, 1.0, -2.0),
        Matrix::identity(2, 2),
    )
    .expect("valid mode")
}

pub fn classic_family(tau: f64) -> SystemFamily {
    SystemFamily::new(vec![classic_mode()], tau).expect("valid family")
}
