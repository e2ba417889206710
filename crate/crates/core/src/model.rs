//! Mode families, switching signals and the structural checks on them.
//!
//! A mode is a tuple `(l, P, Lambda, R)`: on its interval the state obeys
//! `E_l^eps P X' = Lambda X`, and when the mode is left the state jumps by `R`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Blocks, Matrix};

/// Condition number of `P` above which a warning is attached at load time.
pub const P_CONDITION_WARN: f64 = 1e8;

/// `(A B; C D) = Lambda P^-1`, split after row/column `l`.
pub type AbcdBlocks = Blocks;

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    l: usize,
    p: Matrix,
    p_inv: Matrix,
    p_condition: f64,
    lambda: Matrix,
    r: Matrix,
}

impl Mode {
    pub fn new(l: usize, p: Matrix, lambda: Matrix, r: Matrix) -> Result<Self> {
        let d = p.nrows();
        for (name, m) in [("P", &p), ("Lambda", &lambda), ("R", &r)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            linalg::ensure_finite(m, name)?;
        }
        if d < 2 || l < 1 || l > d - 1 {
            return Err(Error::Dimension(format!(
                "l = {l} out of range [1, d-1] for d = {d}"
            )));
        }
        let inv = linalg::invert(&p).map_err(|e| e.in_context("P"))?;
        Ok(Mode {
            l,
            p,
            p_inv: inv.matrix,
            p_condition: inv.condition,
            lambda,
            r,
        })
    }

    pub fn d(&self) -> usize {
        self.p.nrows()
    }
    pub fn l(&self) -> usize {
        self.l
    }
    pub fn p(&self) -> &Matrix {
        &self.p
    }
    pub fn p_inv(&self) -> &Matrix {
        &self.p_inv
    }
    pub fn p_condition(&self) -> f64 {
        self.p_condition
    }
    pub fn lambda(&self) -> &Matrix {
        &self.lambda
    }
    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn abcd(&self) -> AbcdBlocks {
        let m = &self.lambda * &self.p_inv;
        linalg::block_partition(&m, self.l).expect("l validated at construction")
    }

    /// `G = (1/eps) P^-1 E^eps_{l^c} Lambda`, so that `X' = G X` on the mode's interval.
    pub fn epsilon_generator(&self, eps: f64) -> Result<Matrix> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "eps must be positive and finite, got {eps}"
            )));
        }
        let mask = scaled_mask(self.d(), self.l, eps, true)?;
        Ok(&self.p_inv * mask * &self.lambda / eps)
    }

    /// `P^-1 E^0_{l^c} Lambda`: the first `l` rows of Lambda zeroed.
    pub fn slow_limit_matrix(&self) -> Matrix {
        let mut masked = self.lambda.clone();
        masked.rows_mut(0, self.l).fill(0.0);
        &self.p_inv * masked
    }
}

/// `E^eps_l` (ones on the first `l` diagonal entries, `eps` after) or, with
/// `complement`, `E^eps_{l^c}` (`eps` first, then ones).
pub fn scaled_mask(d: usize, l: usize, eps: f64, complement: bool) -> Result<Matrix> {
    if l < 1 || l + 1 > d {
        return Err(Error::Dimension(format!(
            "l = {l} out of range [1, d-1] for d = {d}"
        )));
    }
    let eps_ok = if complement { eps >= 0.0 } else { eps > 0.0 };
    if !eps_ok || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid eps {eps}")));
    }
    let (head, tail) = if complement { (eps, 1.0) } else { (1.0, eps) };
    Ok(Matrix::from_diagonal(&nalgebra::DVector::from_fn(d, |i, _| {
        if i < l {
            head
        } else {
            tail
        }
    })))
}

pub fn abcd_split(mode: &Mode) -> AbcdBlocks {
    mode.abcd()
}

pub fn epsilon_generator(mode: &Mode, eps: f64) -> Result<Matrix> {
    mode.epsilon_generator(eps)
}

pub fn slow_limit_matrix(mode: &Mode) -> Matrix {
    mode.slow_limit_matrix()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemFamily {
    d: usize,
    modes: Vec<Mode>,
    tau: f64,
}

impl SystemFamily {
    pub fn new(modes: Vec<Mode>, tau: f64) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::InvalidArgument("a family needs at least one mode".into()))?;
        let d = first.d();
        if let Some((i, m)) = modes.iter().enumerate().find(|(_, m)| m.d() != d) {
            return Err(Error::Dimension(format!(
                "mode {i} has dimension {}, family dimension is {d}",
                m.d()
            )));
        }
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
        }
        Ok(SystemFamily { d, modes, tau })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }
    pub fn mode(&self, i: usize) -> &Mode {
        &self.modes[i]
    }
    pub fn len(&self) -> usize {
        self.modes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        SystemFamily::new(self.modes.clone(), tau)
    }

    pub fn to_document(&self) -> FamilyDocument {
        FamilyDocument {
            d: self.d,
            tau: self.tau,
            modes: self
                .modes
                .iter()
                .map(|m| ModeDocument {
                    l: m.l,
                    p: rows_of(&m.p),
                    lambda: rows_of(&m.lambda),
                    r: rows_of(&m.r),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("family serializes")
    }
}

// ---------------------------------------------------------------------------
// D-Hurwitz check

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeHurwitz {
    pub mode: usize,
    /// Spectral abscissa of the fast block `D`.
    pub abscissa: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DHurwitzReport {
    pub modes: Vec<ModeHurwitz>,
    pub pass: bool,
}

impl DHurwitzReport {
    pub fn failing(&self) -> impl Iterator<Item = &ModeHurwitz> {
        self.modes.iter().filter(|m| !m.pass)
    }
}

pub fn d_hurwitz_check(family: &SystemFamily) -> DHurwitzReport {
    let modes: Vec<ModeHurwitz> = family
        .modes()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let abscissa = linalg::spectral_abscissa(&m.abcd().d);
            ModeHurwitz {
                mode: i,
                abscissa,
                pass: abscissa < 0.0,
            }
        })
        .collect();
    let pass = modes.iter().all(|m| m.pass);
    DHurwitzReport { modes, pass }
}

// ---------------------------------------------------------------------------
// Switching signals

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    pub mode: usize,
    pub duration: f64,
}

/// Finitely many pieces followed by `final_mode` forever. The switching
/// times are the cumulative sums of the durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSignal {
    pub pieces: Vec<Piece>,
    pub final_mode: usize,
}

impl SwitchingSignal {
    pub fn constant(mode: usize) -> Self {
        SwitchingSignal {
            pieces: Vec::new(),
            final_mode: mode,
        }
    }

    pub fn switching_times(&self) -> Vec<f64> {
        self.pieces
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p.duration;
                Some(*acc)
            })
            .collect()
    }

    /// Mode sequence including the final mode.
    pub fn modes(&self) -> impl Iterator<Item = usize> + '_ {
        self.pieces
            .iter()
            .map(|p| p.mode)
            .chain(std::iter::once(self.final_mode))
    }

    /// Checks dwell time, mode indices and (optionally) the absence of
    /// self-switches. Admissibility is monotone in `tau`.
    pub fn check_admissible(
        &self,
        n_modes: usize,
        tau: f64,
        forbid_self_switch: bool,
    ) -> Result<()> {
        for (k, m) in self.modes().enumerate() {
            if m >= n_modes {
                return Err(Error::Signal(format!(
                    "piece {k}: mode {m} out of range (family has {n_modes} modes)"
                )));
            }
        }
        let mut t = 0.0f64;
        for (k, p) in self.pieces.iter().enumerate() {
            if !(p.duration > 0.0) || !p.duration.is_finite() {
                return Err(Error::Signal(format!(
                    "piece {k}: duration {} must be positive",
                    p.duration
                )));
            }
            if p.duration < tau {
                return Err(Error::Signal(format!(
                    "piece {k}: duration {} below dwell time {tau}",
                    p.duration
                )));
            }
            let next = t + p.duration;
            if !(next > t) {
                return Err(Error::Signal(format!(
                    "piece {k}: switching times not strictly increasing"
                )));
            }
            t = next;
        }
        if forbid_self_switch {
            let modes: Vec<usize> = self.modes().collect();
            if let Some(k) = modes.windows(2).position(|w| w[0] == w[1]) {
                return Err(Error::Signal(format!(
                    "self-switch at switching time {} (mode {})",
                    k + 1,
                    modes[k]
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("signal serializes")
    }
}

pub fn parse_signal(text: &str) -> Result<SwitchingSignal> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(path, e.into_inner().to_string())
    })
}

// ---------------------------------------------------------------------------
// System file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeDocument {
    pub l: usize,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "Lambda")]
    pub lambda: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyDocument {
    pub d: usize,
    pub tau: f64,
    pub modes: Vec<ModeDocument>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFamily {
    pub family: SystemFamily,
    pub p_conditions: Vec<f64>,
    pub warnings: Vec<String>,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], d: usize, path: &str) -> Result<Matrix> {
    if rows.len() != d {
        return Err(Error::schema(
            path,
            format!("expected {d} rows, found {}", rows.len()),
        ));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::schema(
                format!("{path}[{i}]"),
                format!("expected {d} entries, found {}", row.len()),
            ));
        }
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::schema(format!("{path}[{i}][{j}]"), "non-finite entry"));
        }
    }
    Ok(Matrix::from_fn(d, d, |i, j| rows[i][j]))
}

impl FamilyDocument {
    pub fn into_family(self) -> Result<ParsedFamily> {
        let d = self.d;
        if d < 2 {
            return Err(Error::schema("d", format!("d must be at least 2, got {d}")));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::schema("tau", format!("tau must be >= 0, got {}", self.tau)));
        }
        if self.modes.is_empty() {
            return Err(Error::schema("modes", "at least one mode is required"));
        }
        let mut modes = Vec::with_capacity(self.modes.len());
        let mut warnings = Vec::new();
        for (i, md) in self.modes.into_iter().enumerate() {
            let base = format!("modes[{i}]");
            if md.l < 1 || md.l > d - 1 {
                return Err(Error::schema(
                    format!("{base}.l"),
                    format!("l = {} out of range [1, d-1] = [1, {}]", md.l, d - 1),
                ));
            }
            let p = matrix_from_rows(&md.p, d, &format!("{base}.P"))?;
            let lambda = matrix_from_rows(&md.lambda, d, &format!("{base}.Lambda"))?;
            let r = matrix_from_rows(&md.r, d, &format!("{base}.R"))?;
            let mode = Mode::new(md.l, p, lambda, r).map_err(|e| match e {
                Error::Singular { rcond, .. } => Error::schema(
                    format!("{base}.P"),
                    format!("P is singular (reciprocal condition {rcond:.3e})"),
                ),
                other => other,
            })?;
            if mode.p_condition() > P_CONDITION_WARN {
                warnings.push(format!(
                    "{base}.P: condition number {:.3e} exceeds {P_CONDITION_WARN:.0e}",
                    mode.p_condition()
                ));
            }
            modes.push(mode);
        }
        let family = SystemFamily::new(modes, self.tau)?;
        for m in d_hurwitz_check(&family).failing() {
            warnings.push(format!(
                "modes[{}]: fast block D is not Hurwitz (spectral abscissa {})",
                m.mode, m.abscissa
            ));
        }
        let p_conditions = family.modes().iter().map(Mode::p_condition).collect();
        Ok(ParsedFamily {
            family,
            p_conditions,
            warnings,
        })
    }
}

/// Parse and validate a system file.
pub fn parse_family(text: &str) -> Result<ParsedFamily> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: FamilyDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(path, e.into_inner().to_string())
    })?;
    doc.into_family()
}
