//! Stability statements evaluated as numerical checks.
//!
//! Each check gathers exponent estimates and jump-semigroup classifications
//! for a family, tests the premises of a statement, and only then emits a
//! conclusion. Claims about "every eps small enough" are never proved here;
//! the estimates on a grid of eps values are reported as a trend next to the
//! conclusion.

use std::cell::OnceCell;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::chang;
use crate::error::{Error, Result};
use crate::exponent::{
    self, Boundedness, BoundednessVerdict, EstimateOptions, ExponentEstimate, ProductWord, SearchOptions, Target,
    Verdict,
};
use crate::linalg::{self, Matrix};
use crate::model::{self, DHurwitzReport, Mode, Piece, SystemFamily};
use crate::reduced::{self, FamilyKind, JumpSetKind};
use crate::serde_ext::{extended_f64, extended_opt_f64};
use crate::simulate::{self, SimOptions};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_EPS_GRID: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
/// Smallest dwell time tried when searching for one that makes the reduced
/// system unstable.
pub const TAU_SEARCH_MIN: f64 = 1e-4;
pub const DEFAULT_TREND_PERIODS: usize = 200;
const POSITIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    /// Sorted from largest to smallest before use.
    pub eps_grid: Vec<f64>,
    pub search: SearchOptions,
    pub n_max: usize,
    pub s_grid: Vec<f64>,
    pub jump_depth: usize,
    /// Periods simulated per eps for the reduced-limit trend; 0 skips it.
    pub trend_periods: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        let base = EstimateOptions::default();
        CheckOptions {
            eps_grid: DEFAULT_EPS_GRID.to_vec(),
            search: base.search,
            n_max: base.n_max,
            s_grid: base.s_grid,
            jump_depth: base.jump_depth,
            trend_periods: DEFAULT_TREND_PERIODS,
        }
    }
}

impl CheckOptions {
    pub fn estimate(&self, eps: f64) -> EstimateOptions {
        EstimateOptions {
            eps,
            mu: 0.0,
            grid: None,
            n_max: self.n_max,
            s_grid: self.s_grid.clone(),
            search: self.search.clone(),
            jump_depth: self.jump_depth,
        }
    }

    fn sorted_eps(&self) -> Result<Vec<f64>> {
        if let Some(e) = self.eps_grid.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps {e} must be positive")));
        }
        let mut eps = self.eps_grid.clone();
        eps.sort_by(|a, b| b.total_cmp(a));
        eps.dedup();
        Ok(eps)
    }
}

// ---------------------------------------------------------------------------
// Report pieces

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimStatus {
    Applied,
    ViolatedPremise,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeMatrix {
    SlowLimit,
    Reduced,
}

/// Evidence for an instability conclusion that can be recomputed.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// A word of the target's generator family at dwell time `tau`.
    Word { target: Target, tau: f64, word: ProductWord },
    /// A single mode whose matrix has positive spectral abscissa.
    Mode {
        mode: usize,
        matrix: ModeMatrix,
        #[serde(serialize_with = "extended_f64")]
        abscissa: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conclusion {
    pub claim: String,
    pub status: ClaimStatus,
    pub justification: String,
    /// Ids of the estimates and classifications the conclusion rests on.
    pub uses: Vec<String>,
    pub witness: Option<Witness>,
    /// Agreement of the eps-grid estimates with the conclusion (a trend, not a proof).
    pub consistent_with_sweep: Option<bool>,
}

impl Conclusion {
    fn new(claim: &str, status: ClaimStatus, justification: String, uses: &[&str]) -> Self {
        Conclusion {
            claim: claim.into(),
            status,
            justification,
            uses: uses.iter().map(|s| s.to_string()).collect(),
            witness: None,
            consistent_with_sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub id: String,
    pub target: String,
    pub eps: Option<f64>,
    pub estimate: Option<ExponentEstimate>,
    pub error: Option<String>,
}

impl EstimateRecord {
    fn from_result(id: String, target: &str, eps: Option<f64>, r: Result<ExponentEstimate>) -> Self {
        let (estimate, error) = match r {
            Ok(e) => (Some(e), None),
            Err(e) => (None, Some(e.to_string())),
        };
        EstimateRecord {
            id,
            target: target.into(),
            eps,
            estimate,
            error,
        }
    }

    fn lower(&self) -> Option<f64> {
        self.estimate.as_ref().map(|e| e.certified_lower)
    }

    fn upper(&self) -> Option<f64> {
        self.estimate.as_ref().map(|e| e.heuristic_upper)
    }

    fn describe(&self) -> String {
        match (&self.estimate, &self.error) {
            (Some(e), _) => format!("{} in [{:.6}, {:.6}]", self.id, e.certified_lower, e.heuristic_upper),
            (None, Some(err)) => format!("{} failed: {err}", self.id),
            (None, None) => format!("{} missing", self.id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpClassification {
    pub id: String,
    pub kind: JumpSetKind,
    pub verdict: Option<BoundednessVerdict>,
    pub error: Option<String>,
}

impl JumpClassification {
    fn status(&self) -> Option<Boundedness> {
        self.verdict.as_ref().map(|v| v.status)
    }
}

// ---------------------------------------------------------------------------
// Memoized evidence

fn jump_id(kind: JumpSetKind) -> &'static str {
    match kind {
        JumpSetKind::R => "jumps-R",
        JumpSetKind::RBar => "jumps-R-bar",
        JumpSetKind::RTilde => "jumps-R-tilde",
    }
}

/// `eps lambda(Sigma^eps)` estimates use the flows `e^{t G^eps}` directly,
/// which needs neither an invertible fast block nor the transform.
fn eps_pairs(f: &SystemFamily, eps: f64) -> Result<Vec<(Matrix, Matrix)>> {
    f.modes()
        .iter()
        .map(|m| Ok((m.epsilon_generator(eps)?, m.r().clone())))
        .collect()
}

struct Evidence<'a> {
    f: &'a SystemFamily,
    opts: &'a CheckOptions,
    eps_grid: Vec<f64>,
    hurwitz: DHurwitzReport,
    bar: OnceCell<EstimateRecord>,
    hat: OnceCell<EstimateRecord>,
    hat_tilde: OnceCell<EstimateRecord>,
    tilde: OnceCell<EstimateRecord>,
    sweep: OnceCell<Vec<EstimateRecord>>,
    jumps: [OnceCell<JumpClassification>; 3],
}

impl<'a> Evidence<'a> {
    fn new(f: &'a SystemFamily, opts: &'a CheckOptions) -> Result<Self> {
        Ok(Evidence {
            f,
            opts,
            eps_grid: opts.sorted_eps()?,
            hurwitz: model::d_hurwitz_check(f),
            bar: OnceCell::new(),
            hat: OnceCell::new(),
            hat_tilde: OnceCell::new(),
            tilde: OnceCell::new(),
            sweep: OnceCell::new(),
            jumps: Default::default(),
        })
    }

    fn target<'s>(&'s self, cell: &'s OnceCell<EstimateRecord>, target: Target) -> &'s EstimateRecord {
        cell.get_or_init(|| {
            let r = exponent::lambda_estimate(self.f, target, &self.opts.estimate(0.0));
            EstimateRecord::from_result(target.name().into(), target.name(), None, r)
        })
    }

    fn bar(&self) -> &EstimateRecord {
        self.target(&self.bar, Target::SigmaBar)
    }

    fn hat(&self) -> &EstimateRecord {
        self.target(&self.hat, Target::SigmaHat)
    }

    fn tilde(&self) -> &EstimateRecord {
        self.target(&self.tilde, Target::SigmaTilde)
    }

    fn hat_tilde(&self) -> &EstimateRecord {
        self.hat_tilde.get_or_init(|| {
            let r = exponent::lambda_tilde_hat(self.f, &self.opts.estimate(0.0));
            EstimateRecord::from_result("sigma-hat-tilde".into(), "sigma-hat-tilde", None, r)
        })
    }

    fn sweep(&self) -> &[EstimateRecord] {
        self.sweep.get_or_init(|| {
            let f = self.f;
            let tau = f.tau();
            self.eps_grid
                .par_iter()
                .map(|&eps| {
                    let r = eps_pairs(f, eps)
                        .and_then(|pairs| exponent::lambda_of_pairs(&pairs, tau, &self.opts.estimate(eps)));
                    EstimateRecord::from_result(format!("sigma-eps@{eps}"), Target::SigmaEps.name(), Some(eps), r)
                })
                .collect()
        })
    }

    /// Estimate at the smallest eps that produced one.
    fn smallest_eps(&self) -> Option<(f64, &ExponentEstimate)> {
        self.sweep()
            .iter()
            .rev()
            .find_map(|r| Some((r.eps?, r.estimate.as_ref()?)))
    }

    fn jumps(&self, kind: JumpSetKind) -> &JumpClassification {
        let idx = match kind {
            JumpSetKind::R => 0,
            JumpSetKind::RBar => 1,
            JumpSetKind::RTilde => 2,
        };
        self.jumps[idx].get_or_init(|| {
            let factors = if kind == JumpSetKind::RTilde {
                reduced::sample_transients(self.f, self.opts.n_max, &self.opts.s_grid)
            } else {
                Ok(Vec::new())
            };
            let set = factors.and_then(|fs| reduced::build_jump_set(self.f, kind, &fs));
            match set {
                Ok(y) => JumpClassification {
                    id: jump_id(kind).into(),
                    kind,
                    verdict: Some(exponent::classify_discrete(&y, self.opts.jump_depth, &self.opts.search)),
                    error: None,
                },
                Err(e) => JumpClassification {
                    id: jump_id(kind).into(),
                    kind,
                    verdict: None,
                    error: Some(e.to_string()),
                },
            }
        })
    }

    fn hurwitz_failure(&self) -> Option<String> {
        if self.hurwitz.pass {
            return None;
        }
        let modes: Vec<String> = self
            .hurwitz
            .failing()
            .map(|m| format!("mode {} (abscissa {:.6})", m.mode, m.abscissa))
            .collect();
        Some(format!("fast block not Hurwitz for {}", modes.join(", ")))
    }
}

fn positive_witness(f: &SystemFamily, target: Target, est: &ExponentEstimate) -> Option<Witness> {
    if let Some(w) = &est.witness {
        if w.rate > POSITIVE_TOL && w.rate >= est.certified_lower - 1e-12 * (1.0 + est.certified_lower.abs()) {
            return Some(Witness::Word {
                target,
                tau: f.tau(),
                word: w.clone(),
            });
        }
    }
    // the bound came from the abscissa floor
    let (matrix, abscissas): (ModeMatrix, Vec<f64>) = match target {
        Target::SigmaBar | Target::SigmaTilde => (
            ModeMatrix::Reduced,
            f.modes()
                .iter()
                .map(|m| chang::reduced_mode(m).map_or(f64::NEG_INFINITY, |r| linalg::spectral_abscissa(&r.m)))
                .collect(),
        ),
        _ => return None,
    };
    let (mode, &abscissa) = abscissas.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    (abscissa > POSITIVE_TOL).then_some(Witness::Mode { mode, matrix, abscissa })
}

/// Recomputes a witness; true when it still shows a positive growth rate.
pub fn verify_witness(f: &SystemFamily, w: &Witness, opts: &CheckOptions) -> Result<bool> {
    match w {
        Witness::Mode { mode, matrix, abscissa } => {
            let m = f
                .modes()
                .get(*mode)
                .ok_or_else(|| Error::InvalidArgument(format!("no mode {mode}")))?;
            let a = match matrix {
                ModeMatrix::SlowLimit => linalg::spectral_abscissa(&m.slow_limit_matrix()),
                ModeMatrix::Reduced => linalg::spectral_abscissa(&chang::reduced_mode(m)?.m),
            };
            Ok(a > POSITIVE_TOL && (a - abscissa).abs() <= 1e-9 * (1.0 + a.abs()))
        }
        Witness::Word { target, tau, word } => {
            let fam = f.with_tau(*tau)?;
            let est = opts.estimate(0.0);
            let mut g = reduced::GeneratorOptions::new(reduced::TimeGrid::from_points(
                word.letters.iter().map(|l| l.weight).collect(),
            )?);
            g.n_max = est.n_max;
            g.s_grid = est.s_grid;
            let kind = target.family_kind();
            if kind == FamilyKind::NEps {
                return Err(Error::InvalidArgument("full-system words are not witnesses".into()));
            }
            let gens = reduced::build_generators(&fam, kind, &g)?;
            let rate = word.replay(|l| gens.evaluate(l.template, l.weight));
            Ok(rate > POSITIVE_TOL && (rate - word.rate).abs() <= 1e-9 * (1.0 + rate.abs()))
        }
    }
}

// ---------------------------------------------------------------------------
// Slow-limit statement

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledPoint {
    pub eps: f64,
    /// `eps` times the certified lower bound on the full system's exponent.
    #[serde(serialize_with = "extended_opt_f64")]
    pub scaled_lower: Option<f64>,
    #[serde(serialize_with = "extended_opt_f64")]
    pub scaled_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowLimitReport {
    /// `alpha(P^-1 E^0 Lambda)` per mode.
    pub slow_limit_abscissa: Vec<f64>,
    pub sup_slow_limit_abscissa: f64,
    /// Exponent of the switched system with flows `P^-1 E^0 Lambda` and jumps `R`.
    pub slow_limit_exponent: EstimateRecord,
    /// `max(0, .)` of the bounds above: where `eps lambda` should converge.
    #[serde(serialize_with = "extended_f64")]
    pub limit_lower: f64,
    #[serde(serialize_with = "extended_f64")]
    pub limit_upper: f64,
    pub sweep: Vec<ScaledPoint>,
    pub conclusions: Vec<Conclusion>,
}

fn slow_limit(ev: &Evidence) -> SlowLimitReport {
    let f = ev.f;
    let abscissas: Vec<f64> = f
        .modes()
        .iter()
        .map(|m| linalg::spectral_abscissa(&m.slow_limit_matrix()))
        .collect();
    let sup = abscissas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pairs: Vec<(Matrix, Matrix)> = f.modes().iter().map(|m| (m.slow_limit_matrix(), m.r().clone())).collect();
    let est = exponent::lambda_of_pairs(&pairs, f.tau(), &ev.opts.estimate(0.0));
    let delta = EstimateRecord::from_result("slow-limit".into(), "slow-limit", None, est);
    let limit_lower = delta.lower().map_or(0.0, |v| v.max(0.0));
    let limit_upper = delta.upper().map_or(f64::INFINITY, |v| v.max(0.0));
    let sweep: Vec<ScaledPoint> = ev
        .sweep()
        .iter()
        .map(|r| ScaledPoint {
            eps: r.eps.expect("sweep records carry eps"),
            scaled_lower: r.lower().map(|v| v * r.eps.unwrap()),
            scaled_upper: r.upper().map(|v| v * r.eps.unwrap()),
        })
        .collect();

    let mut conclusions = Vec::new();
    let worst = abscissas.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1));
    match worst {
        Some((mode, &a)) if a > POSITIVE_TOL => {
            let mut c = Conclusion::new(
                "slow-limit-instability",
                ClaimStatus::Applied,
                format!("mode {mode} has slow-limit abscissa {a:.6} > 0, so the full system is EU for every small eps"),
                &["slow-limit"],
            );
            c.witness = Some(Witness::Mode {
                mode,
                matrix: ModeMatrix::SlowLimit,
                abscissa: a,
            });
            c.consistent_with_sweep = ev.smallest_eps().map(|(_, e)| e.certified_lower > 0.0);
            conclusions.push(c);
        }
        _ => conclusions.push(Conclusion::new(
            "slow-limit-instability",
            ClaimStatus::Inconclusive,
            format!("every slow-limit abscissa is at most 0 (sup {sup:.3e})"),
            &["slow-limit"],
        )),
    }

    let distance = |p: &ScaledPoint| {
        p.scaled_lower.map(|v| {
            if v < limit_lower {
                limit_lower - v
            } else if v > limit_upper {
                v - limit_upper
            } else {
                0.0
            }
        })
    };
    let first = sweep.iter().find_map(distance);
    let last = sweep.iter().rev().find_map(distance);
    let mut trend = Conclusion::new(
        "scaled-exponent-limit",
        ClaimStatus::Applied,
        format!(
            "eps * lambda(full) should approach [{limit_lower:.6}, {limit_upper:.6}]; scaled lower bounds {}",
            sweep
                .iter()
                .map(|p| format!("{}: {}", p.eps, p.scaled_lower.map_or("n/a".into(), |v| format!("{v:.3e}"))))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        &["slow-limit"],
    );
    trend.uses.extend(ev.sweep().iter().map(|r| r.id.clone()));
    trend.consistent_with_sweep = first.zip(last).map(|(a, b)| b <= a + 1e-12);
    conclusions.push(trend);

    SlowLimitReport {
        slow_limit_abscissa: abscissas,
        sup_slow_limit_abscissa: sup,
        slow_limit_exponent: delta,
        limit_lower,
        limit_upper,
        sweep,
        conclusions,
    }
}

pub fn prop1_check(f: &SystemFamily, opts: &CheckOptions) -> Result<SlowLimitReport> {
    Ok(slow_limit(&Evidence::new(f, opts)?))
}

// ---------------------------------------------------------------------------
// Necessary conditions for stability

fn necessary(ev: &Evidence) -> Vec<Conclusion> {
    let mut out = Vec::new();
    if let Some(why) = ev.hurwitz_failure() {
        for claim in ["reduced-eu", "transient-eu", "dwell-time-eu"] {
            out.push(Conclusion::new(claim, ClaimStatus::ViolatedPremise, why.clone(), &["d-hurwitz"]));
        }
        return out;
    }
    let f = ev.f;
    let sweep_positive = || ev.smallest_eps().map(|(_, e)| e.certified_lower > 0.0);

    // reduced system EU => full system EU for small eps
    let mut premise = None;
    if f.tau() == 0.0 {
        let r = ev.jumps(JumpSetKind::R);
        let rb = ev.jumps(JumpSetKind::RBar);
        if r.status() != Some(Boundedness::Bounded) || rb.status() != Some(Boundedness::Bounded) {
            premise = Some(format!(
                "tau = 0 needs bounded jump semigroups; R: {:?}, R-bar: {:?}",
                r.status(),
                rb.status()
            ));
        }
    }
    let bar = ev.bar();
    let c = match (premise, &bar.estimate) {
        (Some(why), _) => Conclusion::new("reduced-eu", ClaimStatus::ViolatedPremise, why, &["jumps-R", "jumps-R-bar"]),
        (None, None) => Conclusion::new("reduced-eu", ClaimStatus::Inconclusive, bar.describe(), &["sigma-bar"]),
        (None, Some(e)) if e.certified_lower > 0.0 => {
            let mut c = Conclusion::new(
                "reduced-eu",
                ClaimStatus::Applied,
                format!(
                    "reduced system exponent >= {:.6} > 0, so the full system is EU for every small eps",
                    e.certified_lower
                ),
                &["sigma-bar"],
            );
            c.witness = positive_witness(f, Target::SigmaBar, e);
            c.consistent_with_sweep = sweep_positive();
            c
        }
        (None, Some(e)) => Conclusion::new(
            "reduced-eu",
            ClaimStatus::Inconclusive,
            format!("reduced system lower bound {:.6} is not positive", e.certified_lower),
            &["sigma-bar"],
        ),
    };
    out.push(c);

    // transient system EU => full system EU, growth of order 1/eps
    let r = ev.jumps(JumpSetKind::R);
    let hat = ev.hat();
    let c = if f.tau() > 0.0 {
        // instability under arbitrary switching says nothing once a dwell time is imposed
        Conclusion::new(
            "transient-eu",
            ClaimStatus::ViolatedPremise,
            format!("only covers tau = 0, got tau = {}", f.tau()),
            &[],
        )
    } else if r.status() != Some(Boundedness::Bounded) {
        Conclusion::new(
            "transient-eu",
            ClaimStatus::ViolatedPremise,
            format!("jump semigroup R not certified bounded ({:?})", r.status()),
            &["jumps-R"],
        )
    } else {
        match &hat.estimate {
            Some(e) if e.certified_lower > 0.0 => {
                let mut c = Conclusion::new(
                    "transient-eu",
                    ClaimStatus::Applied,
                    format!(
                        "transient system exponent >= {:.6} > 0, so the full system is EU with exponent of order 1/eps",
                        e.certified_lower
                    ),
                    &["jumps-R", "sigma-hat"],
                );
                c.witness = positive_witness(f, Target::SigmaHat, e);
                c.consistent_with_sweep = ev.smallest_eps().map(|(eps, e)| eps * e.certified_lower > 0.0);
                c
            }
            Some(e) => Conclusion::new(
                "transient-eu",
                ClaimStatus::Inconclusive,
                format!("transient system lower bound {:.6} is not positive", e.certified_lower),
                &["jumps-R", "sigma-hat"],
            ),
            None => Conclusion::new("transient-eu", ClaimStatus::Inconclusive, hat.describe(), &["sigma-hat"]),
        }
    };
    out.push(c);

    // unbounded R-bar semigroup => reduced system EU for some positive dwell time
    let rb = ev.jumps(JumpSetKind::RBar);
    let c = if rb.status() != Some(Boundedness::Unbounded) {
        Conclusion::new(
            "dwell-time-eu",
            ClaimStatus::ViolatedPremise,
            format!("jump semigroup R-bar not shown unbounded ({:?})", rb.status()),
            &["jumps-R-bar"],
        )
    } else {
        match dwell_time_search(f, ev.opts) {
            Some((tau, w)) => {
                let mut c = Conclusion::new(
                    "dwell-time-eu",
                    ClaimStatus::Applied,
                    format!(
                        "R-bar semigroup unbounded; the reduced system is EU at dwell time {tau} (rate {:.6})",
                        w.rate
                    ),
                    &["jumps-R-bar"],
                );
                c.witness = Some(Witness::Word {
                    target: Target::SigmaBar,
                    tau,
                    word: w,
                });
                c
            }
            None => Conclusion::new(
                "dwell-time-eu",
                ClaimStatus::Inconclusive,
                format!("no dwell time down to {TAU_SEARCH_MIN} gave a positive certified rate"),
                &["jumps-R-bar"],
            ),
        }
    };
    out.push(c);
    out
}

/// Halves the dwell time from 1 until the reduced system has a word with
/// positive rate.
fn dwell_time_search(f: &SystemFamily, opts: &CheckOptions) -> Option<(f64, ProductWord)> {
    let mut tau = 1.0;
    while tau >= TAU_SEARCH_MIN {
        if let Ok(fam) = f.with_tau(tau) {
            if let Ok(e) = exponent::lambda_estimate(&fam, Target::SigmaBar, &opts.estimate(0.0)) {
                if let Some(w) = e.witness.filter(|w| w.rate > POSITIVE_TOL) {
                    return Some((tau, w));
                }
            }
        }
        tau /= 2.0;
    }
    None
}

pub fn necessary_check(f: &SystemFamily, opts: &CheckOptions) -> Result<Vec<Conclusion>> {
    Ok(necessary(&Evidence::new(f, opts)?))
}

// ---------------------------------------------------------------------------
// Sufficient conditions for stability

fn sufficient(ev: &Evidence, trend: Option<&TrendReport>) -> Vec<Conclusion> {
    let mut out = Vec::new();
    if let Some(why) = ev.hurwitz_failure() {
        for claim in ["reduced-es", "enriched-es"] {
            out.push(Conclusion::new(claim, ClaimStatus::ViolatedPremise, why.clone(), &["d-hurwitz"]));
        }
        return out;
    }
    let f = ev.f;
    let sweep_negative = || ev.smallest_eps().map(|(_, e)| e.heuristic_upper < 0.0);

    let c = if f.tau() > 0.0 {
        let bar = ev.bar();
        match &bar.estimate {
            Some(e) if exponent::verdict(e, true) == Verdict::ES => {
                let mut c = Conclusion::new(
                    "reduced-es",
                    ClaimStatus::Applied,
                    format!(
                        "reduced system exponent <= {:.6} < 0 over the sampled time grid, so the full system is ES for every small eps",
                        e.heuristic_upper
                    ),
                    &["sigma-bar"],
                );
                c.consistent_with_sweep = sweep_negative();
                c
            }
            Some(e) => Conclusion::new(
                "reduced-es",
                ClaimStatus::Inconclusive,
                format!(
                    "reduced system upper bound {:.6} (grid certified: {}) does not show ES",
                    e.heuristic_upper, e.upper_grid_certified
                ),
                &["sigma-bar"],
            ),
            None => Conclusion::new("reduced-es", ClaimStatus::Inconclusive, bar.describe(), &["sigma-bar"]),
        }
    } else {
        Conclusion::new(
            "reduced-es",
            ClaimStatus::ViolatedPremise,
            "needs a positive dwell time".into(),
            &[],
        )
    };
    out.push(c);

    let gate = ev.hat_tilde();
    let gate_ok = gate
        .estimate
        .as_ref()
        .is_some_and(|e| e.heuristic_upper < 0.0 && e.upper_grid_certified);
    let c = if !gate_ok {
        Conclusion::new(
            "enriched-es",
            ClaimStatus::ViolatedPremise,
            format!("switching-time exponent of the transient system not certified negative: {}", gate.describe()),
            &["sigma-hat-tilde"],
        )
    } else {
        let tilde = ev.tilde();
        match &tilde.estimate {
            Some(e) if exponent::verdict(e, true) == Verdict::ES => {
                let mut c = Conclusion::new(
                    "enriched-es",
                    ClaimStatus::Applied,
                    format!(
                        "enriched system exponent <= {:.6} < 0 over the sampled transients, so the full system is ES for every small eps",
                        e.heuristic_upper
                    ),
                    &["sigma-hat-tilde", "sigma-tilde"],
                );
                c.consistent_with_sweep = sweep_negative();
                c
            }
            Some(e) => Conclusion::new(
                "enriched-es",
                ClaimStatus::Inconclusive,
                format!(
                    "enriched system upper bound {:.6} (grid certified: {}) does not show ES",
                    e.heuristic_upper, e.upper_grid_certified
                ),
                &["sigma-hat-tilde", "sigma-tilde"],
            ),
            None => Conclusion::new("enriched-es", ClaimStatus::Inconclusive, tilde.describe(), &["sigma-tilde"]),
        }
    };
    out.push(c);

    if let Some(t) = trend {
        let gaps: Vec<String> = t
            .points
            .iter()
            .map(|p| format!("{}: {}", p.eps, p.gap.map_or("n/a".into(), |g| format!("{g:.3e}"))))
            .collect();
        let mut c = Conclusion::new(
            "reduced-limit-trend",
            ClaimStatus::Applied,
            format!(
                "{}gap between simulated decay rates and the reduced lower bound {:.6}: {}",
                if t.simplified_form { "identity P and R with shared split; " } else { "" },
                t.reduced_lower,
                gaps.join(", ")
            ),
            &["sigma-bar"],
        );
        c.consistent_with_sweep = Some(t.monotone);
        out.push(c);
    }
    out
}

pub fn sufficient_check(f: &SystemFamily, opts: &CheckOptions) -> Result<Vec<Conclusion>> {
    let ev = Evidence::new(f, opts)?;
    let trend = trend_for(&ev)?;
    Ok(sufficient(&ev, trend.as_ref()))
}

// ---------------------------------------------------------------------------
// Reduced-limit trend

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendPoint {
    pub eps: f64,
    #[serde(serialize_with = "extended_opt_f64")]
    pub rate: Option<f64>,
    #[serde(serialize_with = "extended_opt_f64")]
    pub gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    #[serde(serialize_with = "extended_f64")]
    pub reduced_lower: f64,
    /// One period of the signal the full system is simulated along.
    pub period: Vec<Piece>,
    /// False when the period is a single mode held without switching.
    pub switching: bool,
    pub periods: usize,
    pub points: Vec<TrendPoint>,
    /// Gaps never grow as eps decreases.
    pub monotone: bool,
    pub all_negative: bool,
    /// Identity `P` and `R` with a common split.
    pub simplified_form: bool,
}

fn simplified_form(f: &SystemFamily) -> bool {
    let l = f.mode(0).l();
    f.modes().iter().all(|m: &Mode| {
        let id = Matrix::identity(m.d(), m.d());
        m.l() == l && m.p() == &id && m.r() == &id
    })
}

fn trend_for(ev: &Evidence) -> Result<Option<TrendReport>> {
    if ev.f.tau() <= 0.0 || !ev.hurwitz.pass || ev.opts.trend_periods == 0 {
        return Ok(None);
    }
    match &ev.bar().estimate {
        Some(e) if e.certified_lower.is_finite() => {
            Ok(Some(trend_along(ev.f, e, &ev.eps_grid, ev.opts.trend_periods)?))
        }
        _ => Ok(None),
    }
}

/// Simulates the full system along the periodic signal realizing the
/// reduced system's certified lower bound and fits its decay rate per eps.
pub fn reduced_limit_trend(f: &SystemFamily, opts: &CheckOptions) -> Result<TrendReport> {
    if f.tau() <= 0.0 {
        return Err(Error::Precondition("the reduced-limit trend needs a positive dwell time".into()));
    }
    let est = exponent::lambda_estimate(f, Target::SigmaBar, &opts.estimate(0.0))?;
    if !est.certified_lower.is_finite() {
        return Err(Error::Precondition(format!(
            "reduced system lower bound is {}",
            est.certified_lower
        )));
    }
    trend_along(f, &est, &opts.sorted_eps()?, opts.trend_periods.max(10))
}

fn trend_along(f: &SystemFamily, bar: &ExponentEstimate, eps_grid: &[f64], periods: usize) -> Result<TrendReport> {
    let lower = bar.certified_lower;
    let word = bar
        .witness
        .as_ref()
        .filter(|w| w.rate >= lower - 1e-12 * (1.0 + lower.abs()));
    let (period, switching) = match word {
        Some(w) => (
            w.letters
                .iter()
                .map(|l| Piece {
                    mode: l.template,
                    duration: l.weight,
                })
                .collect::<Vec<_>>(),
            true,
        ),
        None => {
            let (mode, _) = f
                .modes()
                .iter()
                .map(|m| chang::reduced_mode(m).map(|r| linalg::spectral_abscissa(&r.m)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty family");
            (
                vec![Piece {
                    mode,
                    duration: f.tau().max(1.0),
                }],
                false,
            )
        }
    };
    let x0 = vec![1.0; f.d()];
    let points: Vec<TrendPoint> = eps_grid
        .par_iter()
        .map(|&eps| {
            let opts = SimOptions {
                eps,
                ..Default::default()
            };
            let fit = if switching {
                simulate::periodic_decay_rate(f, &period, Target::SigmaEps, &x0, periods, &opts)
            } else {
                simulate::held_decay_rate(f, period[0].mode, period[0].duration, Target::SigmaEps, &x0, periods, &opts)
            };
            match fit {
                Ok(fit) => TrendPoint {
                    eps,
                    rate: Some(fit.rate),
                    gap: Some((fit.rate - lower).abs()),
                    error: None,
                },
                Err(e) => TrendPoint {
                    eps,
                    rate: None,
                    gap: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let gaps: Vec<Option<f64>> = points.iter().map(|p| p.gap).collect();
    let monotone = gaps.iter().all(Option::is_some)
        && gaps.windows(2).all(|w| w[1].unwrap() <= w[0].unwrap());
    let all_negative = points.iter().all(|p| p.rate.is_some_and(|r| r < 0.0));
    Ok(TrendReport {
        reduced_lower: lower,
        period,
        switching,
        periods,
        points,
        monotone,
        all_negative,
        simplified_form: simplified_form(f),
    })
}

// ---------------------------------------------------------------------------
// Complementary two-mode families

/// `[[0, I_{d-l}], [I_l, 0]]`, which swaps the first `l` and last `d - l` coordinates.
pub fn swap_matrix(d: usize, l: usize) -> Matrix {
    let mut j = Matrix::zeros(d, d);
    for i in 0..d - l {
        j[(i, l + i)] = 1.0;
    }
    for i in 0..l {
        j[(d - l + i, i)] = 1.0;
    }
    j
}

/// For each `M`, a mode with `M`'s first `l` coordinates slow, followed by
/// the mode with the roles exchanged. All jumps are the identity.
pub fn build_complementary_family(m_set: &[Matrix], l: usize, tau: f64) -> Result<SystemFamily> {
    let d = m_set
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty matrix set".into()))?
        .nrows();
    if l == 0 || l >= d {
        return Err(Error::InvalidArgument(format!("need 1 <= l <= d - 1, got l = {l}, d = {d}")));
    }
    let j = swap_matrix(d, l);
    let id = Matrix::identity(d, d);
    let mut modes = Vec::with_capacity(2 * m_set.len());
    for (i, m) in m_set.iter().enumerate() {
        if m.shape() != (d, d) {
            return Err(Error::Dimension(format!("matrix {i} is {}x{}, expected {d}x{d}", m.nrows(), m.ncols())));
        }
        modes.push(Mode::new(l, id.clone(), m.clone(), id.clone())?);
        modes.push(Mode::new(d - l, j.clone(), &j * m, id.clone())?);
    }
    SystemFamily::new(modes, tau)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub m: usize,
    pub n: usize,
    /// `rho(M11^-1 M12 N22^-1 N21)`.
    #[serde(serialize_with = "extended_opt_f64")]
    pub spectral_radius: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplementaryReport {
    /// `max(alpha(M11), alpha(M22))` over the set.
    pub max_block_abscissa: f64,
    pub diagonal_blocks_hurwitz: bool,
    pub pairs: Vec<PairCheck>,
    pub verdict: Verdict,
    pub conclusions: Vec<Conclusion>,
}

pub fn prop2_check(m_set: &[Matrix], l: usize, tau: f64) -> Result<ComplementaryReport> {
    // validates shapes and l
    build_complementary_family(m_set, l, tau)?;
    let d = m_set[0].nrows();
    let parts: Vec<linalg::Blocks> = m_set
        .iter()
        .map(|m| linalg::block_partition(m, l))
        .collect::<Result<_>>()?;
    // a positive M22 destabilizes the slow limit of the member's first mode,
    // a positive M11 that of its second
    let mut max_abscissa = f64::NEG_INFINITY;
    let mut worst_mode = 0;
    for (i, b) in parts.iter().enumerate() {
        for (a, mode) in [(linalg::spectral_abscissa(&b.d), 2 * i), (linalg::spectral_abscissa(&b.a), 2 * i + 1)] {
            if a > max_abscissa {
                max_abscissa = a;
                worst_mode = mode;
            }
        }
    }
    let hurwitz = parts
        .iter()
        .all(|b| linalg::spectral_abscissa(&b.a) < 0.0 && linalg::spectral_abscissa(&b.d) < 0.0);
    let mut pairs = Vec::new();
    for (i, bm) in parts.iter().enumerate() {
        for (k, bn) in parts.iter().enumerate() {
            let rho = linalg::invert(&bm.a).and_then(|m11| {
                let n22 = linalg::invert(&bn.d)?;
                Ok(linalg::spectral_radius(&(m11.matrix * &bm.b * n22.matrix * &bn.c)))
            });
            pairs.push(match rho {
                Ok(r) => PairCheck {
                    m: i,
                    n: k,
                    spectral_radius: Some(r),
                    error: None,
                },
                Err(e) => PairCheck {
                    m: i,
                    n: k,
                    spectral_radius: None,
                    error: Some(e.to_string()),
                },
            });
        }
    }

    let mut conclusions = Vec::new();
    let mut verdict = Verdict::Inconclusive;
    if max_abscissa > 0.0 {
        verdict = Verdict::EU;
        let mut c = Conclusion::new(
            "complementary-eu",
            ClaimStatus::Applied,
            format!(
                "member {} has a diagonal block with abscissa {max_abscissa:.6} > 0",
                worst_mode / 2
            ),
            &[],
        );
        c.witness = Some(Witness::Mode {
            mode: worst_mode,
            matrix: ModeMatrix::SlowLimit,
            abscissa: max_abscissa,
        });
        conclusions.push(c);
    } else if !hurwitz {
        conclusions.push(Conclusion::new(
            "complementary-eu",
            ClaimStatus::ViolatedPremise,
            "diagonal blocks are not all Hurwitz".into(),
            &[],
        ));
    } else if let Some(p) = pairs
        .iter()
        .filter(|p| p.spectral_radius.is_some_and(|r| r > 1.0))
        .max_by(|a, b| a.spectral_radius.unwrap().total_cmp(&b.spectral_radius.unwrap()))
    {
        verdict = Verdict::EU;
        conclusions.push(Conclusion::new(
            "complementary-eu",
            ClaimStatus::Applied,
            format!(
                "pair (M{}, N{}) has rho(M11^-1 M12 N22^-1 N21) = {:.6} > 1; the reduced jumps are unbounded, which forces EU for small enough dwell times",
                p.m,
                p.n,
                p.spectral_radius.unwrap()
            ),
            &[],
        ));
    } else {
        conclusions.push(Conclusion::new(
            "complementary-eu",
            ClaimStatus::Inconclusive,
            "no positive diagonal-block abscissa and no pair with spectral radius above 1".into(),
            &[],
        ));
    }

    if d != 2 || l != 1 {
        conclusions.push(Conclusion::new(
            "complementary-es",
            ClaimStatus::ViolatedPremise,
            format!("only available for d = 2, l = 1 (got d = {d}, l = {l})"),
            &[],
        ));
    } else if !hurwitz {
        conclusions.push(Conclusion::new(
            "complementary-es",
            ClaimStatus::ViolatedPremise,
            "needs M11 < 0 and M22 < 0 for every member".into(),
            &[],
        ));
    } else {
        let strict = parts.iter().all(|bm| {
            parts
                .iter()
                .all(|bn| (bm.b[(0, 0)] * bn.c[(0, 0)]).abs() < (bm.a[(0, 0)] * bn.d[(0, 0)]).abs())
        });
        if strict {
            verdict = Verdict::ES;
            conclusions.push(Conclusion::new(
                "complementary-es",
                ClaimStatus::Applied,
                "|M12 N21| < |M11 N22| for every pair: ES for every tau > 0 and small eps".into(),
                &[],
            ));
        } else {
            conclusions.push(Conclusion::new(
                "complementary-es",
                ClaimStatus::Inconclusive,
                "some pair has |M12 N21| >= |M11 N22|".into(),
                &[],
            ));
        }
    }
    Ok(ComplementaryReport {
        max_block_abscissa: max_abscissa,
        diagonal_blocks_hurwitz: hurwitz,
        pairs,
        verdict,
        conclusions,
    })
}

// ---------------------------------------------------------------------------
// Approximation of the transformed flow

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `t < C eps |log eps|`: the fast transient is still active.
    Short,
    Long,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxRow {
    pub mode: usize,
    pub eps: f64,
    pub t: f64,
    /// `|e^{t Gamma} - diag(e^{t M}, e^{t D / eps})|`, shifts included.
    pub deviation: f64,
    /// `min(eps, t)`.
    pub scale: f64,
    pub ratio: f64,
    pub regime: Regime,
    /// Deviation of the flow in original coordinates from its limit in the row's regime.
    pub transformed_deviation: f64,
    /// `eps` in the long regime, `eps |log eps|` in the short one.
    pub transformed_scale: f64,
    pub transformed_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproximationReport {
    pub schema_version: u32,
    pub eps_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub mu: f64,
    /// Regime split constant `C`.
    pub split_constant: f64,
    pub rows: Vec<ApproxRow>,
    /// Smallest `K` with `deviation <= K min(eps, t)` on every row.
    pub fitted_k: f64,
    pub fitted_k_long: f64,
    pub fitted_k_short: f64,
    /// `(eps, max ratio)` in grid order.
    pub ratio_by_eps: Vec<(f64, f64)>,
    /// Ratios strictly grow along decreasing eps and end above three times the first.
    pub diverging: bool,
}

fn ratio(dev: f64, scale: f64) -> f64 {
    if dev == 0.0 {
        0.0
    } else {
        dev / scale
    }
}

pub fn approx_validate(f: &SystemFamily, eps_grid: &[f64], t_grid: &[f64], mu: f64) -> Result<ApproximationReport> {
    let report = model::d_hurwitz_check(f);
    if !report.pass {
        return Err(Error::Precondition("approximation estimates need every fast block Hurwitz".into()));
    }
    if let Some(e) = eps_grid.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(Error::InvalidArgument(format!("eps {e} must lie in (0, 1)")));
    }
    if let Some(t) = t_grid.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time {t} must be finite and nonnegative")));
    }
    let min_rate = report.modes.iter().map(|m| m.abscissa.abs()).fold(f64::INFINITY, f64::min);
    let split = 2.0 * (1.0 / min_rate).max(1.0);
    let reduced: Vec<_> = f.modes().iter().map(chang::reduced_mode).collect::<Result<_>>()?;

    let work: Vec<(usize, f64)> = (0..f.len())
        .flat_map(|i| eps_grid.iter().map(move |&e| (i, e)))
        .collect();
    let chunks: Vec<Vec<ApproxRow>> = work
        .par_iter()
        .map(|&(i, eps)| -> Result<Vec<ApproxRow>> {
            let data = chang::build_transform(f.mode(i), eps)?;
            let gamma = data.gamma_shifted(mu).expect("eps > 0");
            let red = &reduced[i];
            let l = red.l;
            let n = red.dim() - l;
            let fast_scaled = &red.d / eps;
            let mut rows = Vec::with_capacity(t_grid.len());
            for &t in t_grid {
                let regime = if t < split * eps * eps.ln().abs() {
                    Regime::Short
                } else {
                    Regime::Long
                };
                let (deviation, transformed) = if t == 0.0 {
                    // both sides are the identity
                    (0.0, 0.0)
                } else {
                    let flow = linalg::expm(&(&gamma * t));
                    let slow = chang::slow_exp(&red.m, t, mu);
                    let fast = linalg::expm(&(&fast_scaled * t));
                    let deviation = linalg::operator_norm(&(&flow - linalg::block_diag(&slow, &fast)));
                    let original = &data.t_inv * &flow * &data.t;
                    let limit = match regime {
                        Regime::Long => red.conjugate_block_diag(&slow, &Matrix::zeros(n, n)),
                        Regime::Short => red.conjugate_block_diag(&Matrix::identity(l, l), &fast),
                    };
                    (deviation, linalg::operator_norm(&(original - limit)))
                };
                let scale = eps.min(t);
                let transformed_scale = match regime {
                    Regime::Long => eps,
                    Regime::Short => eps * eps.ln().abs(),
                };
                rows.push(ApproxRow {
                    mode: i,
                    eps,
                    t,
                    deviation,
                    scale,
                    ratio: ratio(deviation, scale),
                    regime,
                    transformed_deviation: transformed,
                    transformed_scale,
                    transformed_ratio: ratio(transformed, transformed_scale),
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ApproxRow> = chunks.into_iter().flatten().collect();

    let max_of = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, f64::max);
    let fitted_k = max_of(&mut rows.iter().map(|r| r.ratio));
    let fitted_k_long = max_of(&mut rows.iter().filter(|r| r.regime == Regime::Long).map(|r| r.transformed_ratio));
    let fitted_k_short = max_of(&mut rows.iter().filter(|r| r.regime == Regime::Short).map(|r| r.transformed_ratio));
    let ratio_by_eps: Vec<(f64, f64)> = eps_grid
        .iter()
        .map(|&e| (e, max_of(&mut rows.iter().filter(|r| r.eps == e).map(|r| r.ratio))))
        .collect();
    let mut by_decreasing = ratio_by_eps.clone();
    by_decreasing.sort_by(|a, b| b.0.total_cmp(&a.0));
    let diverging = by_decreasing.len() > 1
        && by_decreasing.windows(2).all(|w| w[1].1 > w[0].1)
        && by_decreasing.last().unwrap().1 > 3.0 * by_decreasing[0].1;
    Ok(ApproximationReport {
        schema_version: SCHEMA_VERSION,
        eps_grid: eps_grid.to_vec(),
        t_grid: t_grid.to_vec(),
        mu,
        split_constant: split,
        rows,
        fitted_k,
        fitted_k_long,
        fitted_k_short,
        ratio_by_eps,
        diverging,
    })
}

impl ApproximationReport {
    /// Columns `eps,t,deviation,bound,ratio` with `bound = K min(eps, t)`,
    /// followed by the per-mode and transformed columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "eps,t,deviation,bound,ratio,mode,regime,transformed_deviation,transformed_bound,transformed_ratio\n",
        );
        for r in &self.rows {
            let k_t = match r.regime {
                Regime::Long => self.fitted_k_long,
                Regime::Short => self.fitted_k_short,
            };
            let regime = match r.regime {
                Regime::Long => "long",
                Regime::Short => "short",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.eps,
                r.t,
                r.deviation,
                self.fitted_k * r.scale,
                r.ratio,
                r.mode,
                regime,
                r.transformed_deviation,
                k_t * r.transformed_scale,
                r.transformed_ratio
            );
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Full analysis

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    /// SHA-256 of the family's canonical JSON.
    pub fingerprint: String,
    pub d: usize,
    pub modes: usize,
    pub tau: f64,
    pub d_hurwitz: DHurwitzReport,
    pub jump_classifications: Vec<JumpClassification>,
    pub estimates: Vec<EstimateRecord>,
    pub slow_limit: SlowLimitReport,
    pub trend: Option<TrendReport>,
    pub conclusions: Vec<Conclusion>,
}

pub fn fingerprint(f: &SystemFamily) -> String {
    let digest = Sha256::digest(f.to_json().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs every check on one family, sharing the estimates between them.
pub fn analyze(f: &SystemFamily, opts: &CheckOptions) -> Result<AnalysisReport> {
    let ev = Evidence::new(f, opts)?;
    let slow = slow_limit(&ev);
    let mut conclusions = slow.conclusions.clone();
    conclusions.extend(necessary(&ev));
    let trend = trend_for(&ev)?;
    conclusions.extend(sufficient(&ev, trend.as_ref()));
    if ev.hurwitz.pass {
        // make sure every estimate appears in the report, used or not
        ev.bar();
        ev.hat();
        ev.hat_tilde();
        ev.tilde();
    }
    let mut jump_classifications = vec![ev.jumps(JumpSetKind::R).clone()];
    if ev.hurwitz.pass {
        jump_classifications.push(ev.jumps(JumpSetKind::RBar).clone());
        jump_classifications.push(ev.jumps(JumpSetKind::RTilde).clone());
    }
    let mut estimates: Vec<EstimateRecord> = [&ev.bar, &ev.hat, &ev.hat_tilde, &ev.tilde]
        .into_iter()
        .filter_map(|c| c.get().cloned())
        .collect();
    estimates.extend(ev.sweep().iter().cloned());
    Ok(AnalysisReport {
        schema_version: SCHEMA_VERSION,
        fingerprint: fingerprint(f),
        d: f.d(),
        modes: f.len(),
        tau: f.tau(),
        d_hurwitz: ev.hurwitz.clone(),
        jump_classifications,
        estimates,
        slow_limit: slow,
        trend,
        conclusions,
    })
}

impl AnalysisReport {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "family {} (d = {}, {} modes, tau = {})",
            &self.fingerprint[..12],
            self.d,
            self.modes,
            self.tau
        );
        for m in &self.d_hurwitz.modes {
            let _ = writeln!(
                out,
                "  mode {}: fast block abscissa {:.6} ({})",
                m.mode,
                m.abscissa,
                if m.pass { "Hurwitz" } else { "NOT Hurwitz" }
            );
        }
        for j in &self.jump_classifications {
            match (&j.verdict, &j.error) {
                (Some(v), _) => {
                    let _ = writeln!(
                        out,
                        "  {}: {:?} (best spectral radius {:.6})",
                        j.id, v.status, v.best_spectral_radius
                    );
                }
                (None, Some(e)) => {
                    let _ = writeln!(out, "  {}: {e}", j.id);
                }
                _ => {}
            }
        }
        for e in &self.estimates {
            let _ = writeln!(out, "  {}", e.describe());
        }
        let _ = writeln!(out, "conclusions:");
        for c in &self.conclusions {
            let status = match c.status {
                ClaimStatus::Applied => "applied",
                ClaimStatus::ViolatedPremise => "violated-premise",
                ClaimStatus::Inconclusive => "inconclusive",
            };
            let consistency = match c.consistent_with_sweep {
                Some(true) => " [sweep agrees]",
                Some(false) => " [sweep disagrees]",
                None => "",
            };
            let _ = writeln!(out, "  {:<24} {:<17} {}{}", c.claim, status, c.justification, consistency);
        }
        out
    }
}
