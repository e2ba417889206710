//! Maximal Lyapunov exponent bounds by search over weighted matrix words.
//!
//! For a finite alphabet of letters `(N, t)` the exponent of the generated
//! semigroup is bounded below by `log rho(N_k ... N_1) / (t_1 + ... + t_k)`
//! for any word (its periodic extension realizes that growth) and above by
//! the largest `log |N_k ... N_1| / (t_1 + ... + t_k)` over words of a fixed
//! length (submultiplicativity). Words are enumerated depth first in
//! lexicographic order with iterative deepening and branch-and-bound.

use serde::Serialize;

use crate::chang;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::SystemFamily;
use crate::reduced::{
    self, FamilyKind, GeneratorFamily, GeneratorOptions, JumpSet, JumpSetKind, Letter, TimeGrid,
    TransientFactor,
};
use crate::serde_ext::{extended_f64, extended_f64_vec};

pub const DEFAULT_DEPTH: usize = 10;
pub const DEFAULT_BUDGET: u64 = 2_000_000;
/// Tolerance for `rho > 1` (unbounded) in discrete classification.
pub const RHO_TOL: f64 = 1e-12;
const CLOSURE_CAP: usize = 4096;
const RESCALE_HI: f64 = 1e150;
const RESCALE_LO: f64 = 1e-150;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub depth: usize,
    /// Maximum number of matrix products formed.
    pub budget: u64,
    pub forbid_self_switch: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            depth: DEFAULT_DEPTH,
            budget: DEFAULT_BUDGET,
            forbid_self_switch: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordLetter {
    pub template: usize,
    pub grid_index: usize,
    pub weight: f64,
}

/// A product `N_k ... N_1`; `letters[0]` is `N_1`, applied first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductWord {
    pub letters: Vec<WordLetter>,
    pub total_time: f64,
    /// `log rho(product) / total_time`.
    #[serde(serialize_with = "extended_f64")]
    pub rate: f64,
    #[serde(skip)]
    pub product: Matrix,
    /// The true product is `product * exp(log_scale)`.
    #[serde(skip)]
    pub log_scale: f64,
}

impl ProductWord {
    /// Recomputes the rate from the letters' matrices.
    pub fn replay(&self, evaluate: impl Fn(&WordLetter) -> Matrix) -> f64 {
        let mut acc: Option<Matrix> = None;
        let mut log_scale = 0.0;
        for l in &self.letters {
            let n = evaluate(l);
            let mut p = match acc {
                None => n,
                Some(p) => n * p,
            };
            log_scale += rescale(&mut p);
            acc = Some(p);
        }
        match acc {
            Some(p) => (linalg::spectral_radius(&p).ln() + log_scale) / self.total_time,
            None => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchDiagnostics {
    pub alphabet_size: usize,
    pub evaluations: u64,
    pub pruned: u64,
    pub budget_exhausted: bool,
    /// Best `log rho / |w|` among words of each completed length.
    #[serde(serialize_with = "extended_f64_vec")]
    pub lower_by_depth: Vec<f64>,
    /// Largest `log |P| / |w|` among words of each completed length.
    #[serde(serialize_with = "extended_f64_vec")]
    pub upper_by_depth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub lower: f64,
    /// Letter indices of the best word, first applied first.
    pub witness: Option<(Vec<usize>, f64, Matrix, f64)>,
    /// `min_k upper_k` over completed depths, `+inf` if none completed.
    pub upper: f64,
    pub depth_completed: usize,
    pub diagnostics: SearchDiagnostics,
}

/// Multiplies `p` by a power of two when it drifts far from unit scale;
/// returns the natural log of the removed factor.
fn rescale(p: &mut Matrix) -> f64 {
    let m = p.amax();
    if m == 0.0 || !m.is_finite() || (RESCALE_LO..=RESCALE_HI).contains(&m) {
        return 0.0;
    }
    let e = m.log2().round() as i32;
    let factor = 2f64.powi(-e);
    *p *= factor;
    e as f64 * std::f64::consts::LN_2
}

fn log_rho(p: &Matrix, log_scale: f64) -> f64 {
    let r = linalg::spectral_radius(p);
    if r == 0.0 {
        f64::NEG_INFINITY
    } else {
        r.ln() + log_scale
    }
}

fn log_norm(p: &Matrix, log_scale: f64) -> f64 {
    let n = linalg::operator_norm(p);
    if n == 0.0 {
        f64::NEG_INFINITY
    } else {
        n.ln() + log_scale
    }
}

struct Frame {
    product: Matrix,
    log_scale: f64,
    weight: f64,
}

struct Search<'a> {
    letters: &'a [Letter],
    opts: &'a SearchOptions,
    w_min: f64,
    w_max: f64,
    evaluations: u64,
    pruned: u64,
    exhausted: bool,
    best: f64,
    best_word: Option<(Vec<usize>, f64, Matrix, f64)>,
    /// `upper_by_depth[r - 1]` for completed depths `r`.
    upper_by_depth: Vec<f64>,
    level_upper: f64,
    level_lower: f64,
    path: Vec<usize>,
}

impl Search<'_> {
    fn can_follow(&self, prev: usize, next: usize) -> bool {
        !self.opts.forbid_self_switch || self.letters[prev].last_mode != self.letters[next].first_mode
    }

    /// Upper bound on the rate of any completion of a prefix with
    /// `log |P| = log_p` and weight `w` by `r` more letters.
    fn completion_bound(&self, log_p: f64, w: f64, r: usize) -> f64 {
        let v = self.upper_by_depth[r - 1];
        if v == f64::NEG_INFINITY || log_p == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let at = |s: f64| (log_p + v * s) / (w + s);
        at(r as f64 * self.w_min).max(at(r as f64 * self.w_max))
    }

    fn run_level(&mut self, k: usize) {
        self.level_upper = f64::NEG_INFINITY;
        self.level_lower = f64::NEG_INFINITY;
        let mut stack: Vec<Frame> = Vec::with_capacity(k);
        self.path.clear();
        self.descend(k, &mut stack);
    }

    fn descend(&mut self, k: usize, stack: &mut Vec<Frame>) {
        let j = stack.len();
        for idx in 0..self.letters.len() {
            if self.exhausted {
                return;
            }
            if let Some(&prev) = self.path.last() {
                if !self.can_follow(prev, idx) {
                    continue;
                }
            }
            let letter = &self.letters[idx];
            if self.evaluations >= self.opts.budget {
                self.exhausted = true;
                return;
            }
            self.evaluations += 1;
            let (mut product, log_scale, weight) = match stack.last() {
                None => (letter.matrix.clone(), 0.0, letter.weight),
                Some(f) => (&letter.matrix * &f.product, f.log_scale, f.weight + letter.weight),
            };
            let log_scale = log_scale + rescale(&mut product);
            self.path.push(idx);
            if j + 1 == k {
                self.leaf(product, log_scale, weight);
            } else {
                let log_p = log_norm(&product, log_scale);
                let bound = self.completion_bound(log_p, weight, k - j - 1);
                let margin = 1e-12 * (1.0 + self.best.abs().min(1e300));
                let below_lower = bound < self.best - margin || bound == f64::NEG_INFINITY;
                if below_lower && bound + 1e-12 * (1.0 + bound.abs()) <= self.level_upper {
                    self.pruned += 1;
                } else {
                    stack.push(Frame {
                        product,
                        log_scale,
                        weight,
                    });
                    self.descend(k, stack);
                    stack.pop();
                }
            }
            self.path.pop();
        }
    }

    fn leaf(&mut self, product: Matrix, log_scale: f64, weight: f64) {
        let up = log_norm(&product, log_scale) / weight;
        if up > self.level_upper {
            self.level_upper = up;
        }
        let first = self.path[0];
        let last = *self.path.last().expect("nonempty");
        if !self.can_follow(last, first) {
            return;
        }
        let rate = log_rho(&product, log_scale) / weight;
        if rate > self.level_lower {
            self.level_lower = rate;
        }
        if rate > self.best {
            self.best = rate;
            self.best_word = Some((self.path.clone(), weight, product, log_scale));
        }
    }
}

/// Iterative-deepening branch-and-bound over words of length `1..=depth`.
pub fn search_words(letters: &[Letter], opts: &SearchOptions) -> Result<SearchResult> {
    if letters.is_empty() {
        return Err(Error::InvalidArgument("empty alphabet (no grid points or templates)".into()));
    }
    if opts.depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    if let Some(l) = letters.iter().find(|l| !(l.weight > 0.0)) {
        return Err(Error::InvalidArgument(format!("letter weight {} must be positive", l.weight)));
    }
    let w_min = letters.iter().map(|l| l.weight).fold(f64::INFINITY, f64::min);
    let w_max = letters.iter().map(|l| l.weight).fold(0.0, f64::max);
    let mut s = Search {
        letters,
        opts,
        w_min,
        w_max,
        evaluations: 0,
        pruned: 0,
        exhausted: false,
        best: f64::NEG_INFINITY,
        best_word: None,
        upper_by_depth: Vec::new(),
        level_upper: f64::NEG_INFINITY,
        level_lower: f64::NEG_INFINITY,
        path: Vec::new(),
    };
    let mut lower_by_depth = Vec::new();
    for k in 1..=opts.depth {
        s.run_level(k);
        if s.exhausted {
            break;
        }
        s.upper_by_depth.push(s.level_upper);
        lower_by_depth.push(s.level_lower);
    }
    let depth_completed = s.upper_by_depth.len();
    let upper = s
        .upper_by_depth
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(SearchResult {
        lower: s.best,
        witness: s.best_word,
        upper,
        depth_completed,
        diagnostics: SearchDiagnostics {
            alphabet_size: letters.len(),
            evaluations: s.evaluations,
            pruned: s.pruned,
            budget_exhausted: s.exhausted,
            lower_by_depth,
            upper_by_depth: s.upper_by_depth,
        },
    })
}

// ---------------------------------------------------------------------------
// Estimates

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentEstimate {
    #[serde(serialize_with = "extended_f64")]
    pub certified_lower: f64,
    #[serde(serialize_with = "extended_f64")]
    pub heuristic_upper: f64,
    /// True when the upper bound is valid for every word over the sampled
    /// grid (some search depth completed and the discrete premise holds).
    pub upper_grid_certified: bool,
    #[serde(serialize_with = "extended_f64")]
    pub abscissa_floor: f64,
    pub witness: Option<ProductWord>,
    pub depth_reached: usize,
    pub diagnostics: SearchDiagnostics,
    /// Present when the exponent is `+inf` because the jump semigroup is unbounded.
    pub unbounded_jumps: Option<BoundednessVerdict>,
    pub notes: Vec<String>,
}

fn witness_word(letters: &[Letter], w: Option<(Vec<usize>, f64, Matrix, f64)>) -> Option<ProductWord> {
    w.map(|(path, total_time, product, log_scale)| ProductWord {
        letters: path
            .iter()
            .map(|&i| WordLetter {
                template: letters[i].template,
                grid_index: letters[i].grid_index,
                weight: letters[i].weight,
            })
            .collect(),
        total_time,
        rate: log_rho(&product, log_scale) / total_time,
        product,
        log_scale,
    })
}

/// Bounds on `sup log rho(P) / |w|` over words of the family's members.
pub fn mu_estimate(g: &GeneratorFamily, opts: &SearchOptions) -> Result<ExponentEstimate> {
    let letters = g.letters(opts.forbid_self_switch);
    if letters.is_empty() {
        return Ok(empty_estimate(0));
    }
    let res = search_words(&letters, opts)?;
    Ok(ExponentEstimate {
        certified_lower: res.lower,
        heuristic_upper: res.upper,
        upper_grid_certified: res.depth_completed > 0,
        abscissa_floor: f64::NEG_INFINITY,
        witness: witness_word(&letters, res.witness),
        depth_reached: res.depth_completed,
        diagnostics: res.diagnostics,
        unbounded_jumps: None,
        notes: Vec::new(),
    })
}

fn empty_estimate(alphabet: usize) -> ExponentEstimate {
    ExponentEstimate {
        certified_lower: f64::NEG_INFINITY,
        heuristic_upper: f64::NEG_INFINITY,
        upper_grid_certified: true,
        abscissa_floor: f64::NEG_INFINITY,
        witness: None,
        depth_reached: 0,
        diagnostics: SearchDiagnostics {
            alphabet_size: alphabet,
            evaluations: 0,
            pruned: 0,
            budget_exhausted: false,
            lower_by_depth: Vec::new(),
            upper_by_depth: Vec::new(),
        },
        unbounded_jumps: None,
        notes: vec!["no admissible words".into()],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Target {
    #[serde(rename = "sigma-eps")]
    SigmaEps,
    #[serde(rename = "sigma-bar")]
    SigmaBar,
    #[serde(rename = "sigma-hat")]
    SigmaHat,
    #[serde(rename = "sigma-tilde")]
    SigmaTilde,
}

impl Target {
    pub fn family_kind(self) -> FamilyKind {
        match self {
            Target::SigmaEps => FamilyKind::NEps,
            Target::SigmaBar => FamilyKind::NBar,
            Target::SigmaHat => FamilyKind::NHat,
            Target::SigmaTilde => FamilyKind::NTilde,
        }
    }

    pub fn jump_set_kind(self) -> JumpSetKind {
        match self {
            Target::SigmaEps | Target::SigmaHat => JumpSetKind::R,
            Target::SigmaBar => JumpSetKind::RBar,
            Target::SigmaTilde => JumpSetKind::RTilde,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::SigmaEps => "sigma-eps",
            Target::SigmaBar => "sigma-bar",
            Target::SigmaHat => "sigma-hat",
            Target::SigmaTilde => "sigma-tilde",
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma-eps" | "eps" => Ok(Target::SigmaEps),
            "sigma-bar" | "bar" => Ok(Target::SigmaBar),
            "sigma-hat" | "hat" => Ok(Target::SigmaHat),
            "sigma-tilde" | "tilde" => Ok(Target::SigmaTilde),
            _ => Err(Error::InvalidArgument(format!("unknown target system {s:?}"))),
        }
    }
}

/// Everything an exponent computation needs besides the family.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub eps: f64,
    pub mu: f64,
    /// Time grid; `None` selects the default grid for the family's dwell time.
    pub grid: Option<TimeGrid>,
    pub n_max: usize,
    pub s_grid: Vec<f64>,
    pub search: SearchOptions,
    /// Depth used to classify the jump semigroup when `tau = 0`.
    pub jump_depth: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            eps: 0.1,
            mu: 0.0,
            grid: None,
            n_max: reduced::DEFAULT_N_MAX,
            s_grid: reduced::DEFAULT_S_GRID.to_vec(),
            search: SearchOptions::default(),
            jump_depth: 8,
        }
    }
}

impl EstimateOptions {
    fn generator_options(&self, f: &SystemFamily) -> GeneratorOptions {
        let mut g = GeneratorOptions::new(self.grid.clone().unwrap_or_else(|| TimeGrid::for_tau(f.tau())));
        g.eps = self.eps;
        g.mu = self.mu;
        g.n_max = self.n_max;
        g.s_grid = self.s_grid.clone();
        g
    }
}

/// Largest relevant spectral abscissa: `Gamma^{eps,mu}` for the full
/// system, `M + mu` for the reduced and enriched ones, `mu` for the
/// transient one.
pub fn abscissa_floor(f: &SystemFamily, target: Target, eps: f64, mu: f64) -> Result<f64> {
    let mut floor = f64::NEG_INFINITY;
    for (i, mode) in f.modes().iter().enumerate() {
        let a = match target {
            Target::SigmaEps => {
                let data = chang::build_transform(mode, eps).map_err(|e| attribute(e, i))?;
                linalg::spectral_abscissa(data.gamma.as_ref().expect("eps > 0"))
            }
            Target::SigmaBar | Target::SigmaTilde => {
                linalg::spectral_abscissa(&chang::reduced_mode(mode).map_err(|e| attribute(e, i))?.m)
            }
            Target::SigmaHat => 0.0,
        };
        floor = floor.max(a + mu);
    }
    Ok(floor)
}

fn attribute(e: Error, mode: usize) -> Error {
    match e {
        Error::Convergence { eps, detail, .. } => Error::Convergence { mode, eps, detail },
        Error::Precondition(msg) => Error::Precondition(format!("mode {mode}: {msg}")),
        other => other,
    }
}

fn transient_factors(f: &SystemFamily, target: Target, opts: &EstimateOptions) -> Result<Vec<TransientFactor>> {
    if target == Target::SigmaTilde {
        reduced::sample_transients(f, opts.n_max, &opts.s_grid)
    } else {
        Ok(Vec::new())
    }
}

/// Bounds on the maximal Lyapunov exponent of one of the four systems.
pub fn lambda_estimate(f: &SystemFamily, target: Target, opts: &EstimateOptions) -> Result<ExponentEstimate> {
    if target != Target::SigmaEps && !crate::model::d_hurwitz_check(f).pass {
        return Err(Error::Precondition(format!(
            "{} requires every fast block D to be Hurwitz",
            target.name()
        )));
    }
    let floor = abscissa_floor(f, target, opts.eps, opts.mu)?;
    let mut notes = Vec::new();
    let mut premise_ok = true;
    if f.tau() == 0.0 {
        let factors = transient_factors(f, target, opts)?;
        let jumps = reduced::build_jump_set(f, target.jump_set_kind(), &factors)?;
        let verdict = classify_discrete(&jumps, opts.jump_depth, &opts.search);
        match verdict.status {
            Boundedness::Unbounded => {
                let mut diag = empty_estimate(0).diagnostics;
                diag.alphabet_size = jumps.members.len();
                return Ok(ExponentEstimate {
                    certified_lower: f64::INFINITY,
                    heuristic_upper: f64::INFINITY,
                    upper_grid_certified: true,
                    abscissa_floor: floor,
                    witness: None,
                    depth_reached: 0,
                    diagnostics: diag,
                    unbounded_jumps: Some(verdict),
                    notes: vec![format!(
                        "tau = 0 and the {:?} jump semigroup is unbounded",
                        target.jump_set_kind()
                    )],
                });
            }
            Boundedness::Inconclusive => {
                premise_ok = false;
                notes.push("tau = 0 and boundedness of the jump semigroup is undecided; upper bound not certified".into());
            }
            Boundedness::Bounded => {}
        }
    }
    let g = reduced::build_generators(f, target.family_kind(), &opts.generator_options(f))?;
    let mut est = mu_estimate(&g, &opts.search)?;
    est.abscissa_floor = floor;
    est.certified_lower = est.certified_lower.max(floor);
    est.heuristic_upper = est.heuristic_upper.max(floor);
    est.upper_grid_certified &= premise_ok;
    if target == Target::SigmaTilde {
        notes.push(format!(
            "transient factors sampled with n_max = {} over {} fast times; bounds refer to the sampled set",
            opts.n_max,
            opts.s_grid.len()
        ));
    }
    est.notes.extend(notes);
    Ok(est)
}

/// Bounds on the exponent of the switched system with flows `S_i` and
/// jumps `R_i`, under dwell time `tau`.
pub fn lambda_of_pairs(pairs: &[(Matrix, Matrix)], tau: f64, opts: &EstimateOptions) -> Result<ExponentEstimate> {
    let floor = pairs
        .iter()
        .map(|(s, _)| linalg::spectral_abscissa(s) + opts.mu)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut premise_ok = true;
    let mut notes = Vec::new();
    if tau == 0.0 {
        let jumps = JumpSet {
            kind: JumpSetKind::R,
            members: pairs
                .iter()
                .enumerate()
                .map(|(i, (_, r))| reduced::JumpMember {
                    matrix: r.clone(),
                    first_mode: i,
                    last_mode: i,
                    internal_self_switch: false,
                })
                .collect(),
        };
        let verdict = classify_discrete(&jumps, opts.jump_depth, &opts.search);
        match verdict.status {
            Boundedness::Unbounded => {
                let mut est = empty_estimate(jumps.members.len());
                est.certified_lower = f64::INFINITY;
                est.heuristic_upper = f64::INFINITY;
                est.abscissa_floor = floor;
                est.unbounded_jumps = Some(verdict);
                est.notes = vec!["tau = 0 and the jump semigroup is unbounded".into()];
                return Ok(est);
            }
            Boundedness::Inconclusive => {
                premise_ok = false;
                notes.push("tau = 0 and boundedness of the jump semigroup is undecided; upper bound not certified".into());
            }
            Boundedness::Bounded => {}
        }
    }
    let grid = opts.grid.clone().unwrap_or_else(|| TimeGrid::for_tau(tau));
    let g = reduced::pair_family(pairs, tau, grid, opts.mu)?;
    let mut est = mu_estimate(&g, &opts.search)?;
    est.abscissa_floor = floor;
    est.certified_lower = est.certified_lower.max(floor);
    est.heuristic_upper = est.heuristic_upper.max(floor);
    est.upper_grid_certified &= premise_ok;
    est.notes.extend(notes);
    Ok(est)
}

/// The exponent of the transient system along switching times only: words
/// over the transient family with no abscissa floor.
pub fn lambda_tilde_hat(f: &SystemFamily, opts: &EstimateOptions) -> Result<ExponentEstimate> {
    if !crate::model::d_hurwitz_check(f).pass {
        return Err(Error::Precondition("every fast block D must be Hurwitz".into()));
    }
    let g = reduced::build_generators(f, FamilyKind::NHat, &opts.generator_options(f))?;
    mu_estimate(&g, &opts.search)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    ES,
    EU,
    Inconclusive,
}

/// `EU` on a positive certified lower bound; `ES` on a negative upper bound
/// only when both the estimate and the caller vouch for it.
pub fn verdict(e: &ExponentEstimate, upper_certified_by_context: bool) -> Verdict {
    if e.certified_lower > 0.0 {
        Verdict::EU
    } else if e.heuristic_upper < 0.0 && e.upper_grid_certified && upper_certified_by_context {
        Verdict::ES
    } else {
        Verdict::Inconclusive
    }
}

// ---------------------------------------------------------------------------
// Discrete semigroups

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Boundedness {
    Bounded,
    Unbounded,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// A product (member indices, first applied first) with `rho > 1`.
    GrowingProduct {
        members: Vec<usize>,
        spectral_radius: f64,
    },
    /// Every product of this length has norm at most one.
    NormContraction { length: usize, max_norm: f64 },
    /// The semigroup is finite with this many elements.
    FiniteClosure { elements: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundednessVerdict {
    pub status: Boundedness,
    pub certificate: Option<Certificate>,
    #[serde(serialize_with = "extended_f64")]
    pub best_spectral_radius: f64,
    pub depth_reached: usize,
}

impl BoundednessVerdict {
    /// Recomputes the certificate against `y`.
    pub fn verify(&self, y: &JumpSet) -> bool {
        match &self.certificate {
            None => self.status == Boundedness::Inconclusive,
            Some(Certificate::GrowingProduct { members, .. }) => {
                let p = members
                    .iter()
                    .fold(Matrix::identity(dim(y), dim(y)), |acc, &i| &y.members[i].matrix * acc);
                linalg::spectral_radius(&p) > 1.0 + RHO_TOL
            }
            Some(Certificate::NormContraction { length, .. }) => {
                let letters = unit_letters(y);
                let opts = SearchOptions {
                    depth: *length,
                    budget: u64::MAX,
                    forbid_self_switch: false,
                };
                search_words(&letters, &opts)
                    .map(|r| r.diagnostics.upper_by_depth.last().is_some_and(|u| *u <= 0.0))
                    .unwrap_or(false)
            }
            Some(Certificate::FiniteClosure { .. }) => closure_size(y, false).is_some(),
        }
    }
}

fn dim(y: &JumpSet) -> usize {
    y.members.first().map_or(0, |m| m.matrix.nrows())
}

fn unit_letters(y: &JumpSet) -> Vec<Letter> {
    y.members
        .iter()
        .enumerate()
        .map(|(i, m)| Letter {
            template: i,
            grid_index: 0,
            weight: 1.0,
            matrix: m.matrix.clone(),
            first_mode: m.first_mode,
            last_mode: m.last_mode,
        })
        .collect()
}

/// Size of the generated semigroup if it is finite (up to `1e-12` relative
/// proximity) and no larger than an internal cap.
fn closure_size(y: &JumpSet, forbid_self_switch: bool) -> Option<usize> {
    let letters = unit_letters(y);
    let key = |m: &Matrix| m.amax();
    let same = |a: &Matrix, b: &Matrix| (a - b).amax() <= 1e-12 * (1.0 + key(a).max(key(b)));
    let mut elems: Vec<(Matrix, usize, usize)> = Vec::new();
    let mut frontier: Vec<(Matrix, usize, usize)> = Vec::new();
    for l in letters.iter().filter(|l| !(forbid_self_switch && y.members[l.template].internal_self_switch)) {
        if !elems.iter().any(|e| e.1 == l.first_mode && e.2 == l.last_mode && same(&e.0, &l.matrix)) {
            elems.push((l.matrix.clone(), l.first_mode, l.last_mode));
            frontier.push((l.matrix.clone(), l.first_mode, l.last_mode));
        }
    }
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for (p, first, last) in &frontier {
            for l in &letters {
                if forbid_self_switch && (*last == l.first_mode || y.members[l.template].internal_self_switch) {
                    continue;
                }
                let m = &l.matrix * p;
                if !m.iter().all(|x| x.is_finite()) {
                    return None;
                }
                if !elems.iter().any(|e| e.1 == *first && e.2 == l.last_mode && same(&e.0, &m)) {
                    elems.push((m.clone(), *first, l.last_mode));
                    next.push((m, *first, l.last_mode));
                    if elems.len() > CLOSURE_CAP {
                        return None;
                    }
                }
            }
        }
        frontier = next;
    }
    Some(elems.len())
}

/// Decides boundedness of the semigroup generated by `y`, if a certificate
/// is found among products of length at most `depth`.
pub fn classify_discrete(y: &JumpSet, depth: usize, search: &SearchOptions) -> BoundednessVerdict {
    let mut letters = unit_letters(y);
    if search.forbid_self_switch {
        letters.retain(|l| !y.members[l.template].internal_self_switch);
    }
    let inconclusive = |best: f64, depth: usize| BoundednessVerdict {
        status: Boundedness::Inconclusive,
        certificate: None,
        best_spectral_radius: best,
        depth_reached: depth,
    };
    if letters.is_empty() {
        return BoundednessVerdict {
            status: Boundedness::Bounded,
            certificate: Some(Certificate::FiniteClosure { elements: 0 }),
            best_spectral_radius: 0.0,
            depth_reached: 0,
        };
    }
    let opts = SearchOptions {
        depth: depth.max(1),
        ..search.clone()
    };
    let res = match search_words(&letters, &opts) {
        Ok(r) => r,
        Err(_) => return inconclusive(f64::NAN, 0),
    };
    let best_rho = res.lower.exp();
    if res.lower > RHO_TOL.ln_1p() {
        let (path, ..) = res.witness.expect("positive rate has a witness");
        return BoundednessVerdict {
            status: Boundedness::Unbounded,
            certificate: Some(Certificate::GrowingProduct {
                members: path.iter().map(|&i| letters[i].template).collect(),
                spectral_radius: best_rho,
            }),
            best_spectral_radius: best_rho,
            depth_reached: res.depth_completed,
        };
    }
    if let Some(k) = res.diagnostics.upper_by_depth.iter().position(|u| *u <= 0.0) {
        return BoundednessVerdict {
            status: Boundedness::Bounded,
            certificate: Some(Certificate::NormContraction {
                length: k + 1,
                max_norm: (res.diagnostics.upper_by_depth[k] * (k + 1) as f64).exp(),
            }),
            best_spectral_radius: best_rho,
            depth_reached: res.depth_completed,
        };
    }
    if let Some(n) = closure_size(y, search.forbid_self_switch) {
        return BoundednessVerdict {
            status: Boundedness::Bounded,
            certificate: Some(Certificate::FiniteClosure { elements: n }),
            best_spectral_radius: best_rho,
            depth_reached: res.depth_completed,
        };
    }
    inconclusive(best_rho, res.depth_completed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{self, ExampleVariant};
    use crate::model::Mode;
    use crate::reduced::JumpMember;

    fn letter(i: usize, m: Matrix, w: f64) -> Letter {
        Letter {
            template: i,
            grid_index: 0,
            weight: w,
            matrix: m,
            first_mode: i,
            last_mode: i,
        }
    }

    fn jump_set(ms: Vec<Matrix>) -> JumpSet {
        JumpSet {
            kind: JumpSetKind::R,
            members: ms
                .into_iter()
                .enumerate()
                .map(|(i, matrix)| JumpMember {
                    matrix,
                    first_mode: i,
                    last_mode: i,
                    internal_self_switch: false,
                })
                .collect(),
        }
    }

    #[test]
    fn scalar_families() {
        let t = 0.7;
        let l = vec![letter(0, Matrix::identity(2, 2) * (-t as f64).exp(), t)];
        let res = search_words(&l, &SearchOptions { depth: 6, ..Default::default() }).unwrap();
        assert!((res.lower + 1.0).abs() < 1e-14);
        assert!((res.upper + 1.0).abs() < 1e-14);
        for (lo, up) in res.diagnostics.lower_by_depth.iter().zip(&res.diagnostics.upper_by_depth) {
            assert!((lo + 1.0).abs() < 1e-14 && (up + 1.0).abs() < 1e-14);
        }

        let l = vec![letter(0, Matrix::identity(2, 2) * 0.5, 1.0)];
        let res = search_words(&l, &SearchOptions::default()).unwrap();
        assert!((res.lower + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn rescaling_keeps_rates() {
        let l = vec![letter(0, Matrix::identity(2, 2) * 1e-120, 1.0)];
        let res = search_words(&l, &SearchOptions { depth: 8, ..Default::default() }).unwrap();
        assert!((res.lower - (1e-120f64).ln()).abs() < 1e-9);
        assert!(res.diagnostics.lower_by_depth.iter().all(|x| (x - (1e-120f64).ln()).abs() < 1e-9));
    }

    #[test]
    fn forbid_self_switch_needs_alternation() {
        // single letter can only be repeated, which is a self-switch
        let l = vec![letter(0, Matrix::identity(2, 2) * 2.0, 1.0)];
        let opts = SearchOptions { depth: 4, forbid_self_switch: true, ..Default::default() };
        let res = search_words(&l, &opts).unwrap();
        assert_eq!(res.lower, f64::NEG_INFINITY);
    }

    #[test]
    fn classification_examples() {
        let v = classify_discrete(&jump_set(vec![Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.1])]), 4, &SearchOptions::default());
        assert_eq!(v.status, Boundedness::Unbounded);
        assert!((v.best_spectral_radius - 2.0).abs() < 1e-12);

        let y = jump_set(vec![Matrix::identity(2, 2) * 0.9]);
        let v = classify_discrete(&y, 4, &SearchOptions::default());
        assert_eq!(v.status, Boundedness::Bounded);
        assert!(matches!(v.certificate, Some(Certificate::NormContraction { length: 1, .. })));
        assert!(v.verify(&y));

        let fam = builtin::example_family(0.45, ExampleVariant::Printed);
        let y = reduced::build_jump_set(&fam, JumpSetKind::R, &[]).unwrap();
        let v = classify_discrete(&y, 4, &SearchOptions::default());
        assert_eq!(v.status, Boundedness::Unbounded);
        assert!((v.best_spectral_radius - 1.35).abs() < 1e-12);
        assert!(v.verify(&y));
        assert_eq!(
            v.certificate,
            Some(Certificate::GrowingProduct { members: vec![0], spectral_radius: v.best_spectral_radius })
        );
    }

    #[test]
    fn alternating_threshold() {
        // with self-switches forbidden only R1 R2 (rho = 3 r^2) can repeat
        let opts = SearchOptions { forbid_self_switch: true, ..Default::default() };
        for (r, expect) in [(0.5, Boundedness::Bounded), (0.6, Boundedness::Unbounded)] {
            let fam = builtin::example_family(r, ExampleVariant::Swapped);
            let y = reduced::build_jump_set(&fam, JumpSetKind::R, &[]).unwrap();
            let v = classify_discrete(&y, 8, &opts);
            assert_eq!(v.status, expect, "r = {r}: {v:?}");
        }
    }

    #[test]
    fn identity_and_permutation_are_bounded() {
        let y = jump_set(vec![Matrix::identity(2, 2), Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])]);
        let v = classify_discrete(&y, 3, &SearchOptions::default());
        assert_eq!(v.status, Boundedness::Bounded);
        assert!(v.verify(&y));
        // a shear is unbounded but has rho = 1: no certificate either way
        let y = jump_set(vec![Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])]);
        assert_eq!(classify_discrete(&y, 6, &SearchOptions::default()).status, Boundedness::Inconclusive);
    }

    #[test]
    fn classic_bar_exponent() {
        let fam = builtin::classic_family(1.0);
        let opts = EstimateOptions {
            grid: Some(TimeGrid::log_spaced(1.0, 20.0, 6).unwrap()),
            search: SearchOptions { depth: 4, ..Default::default() },
            ..Default::default()
        };
        let est = lambda_estimate(&fam, Target::SigmaBar, &opts).unwrap();
        assert!((est.certified_lower + 0.5).abs() < 1e-12, "{}", est.certified_lower);
        // norms of the oblique projector decay only like |P|^(1/k)
        assert!(est.heuristic_upper >= -0.5 && est.heuristic_upper < -0.4, "{}", est.heuristic_upper);
        assert_eq!(verdict(&est, true), Verdict::ES);
    }

    #[test]
    fn hat_nonnegative_and_mu_shift() {
        let fam = builtin::classic_family(0.0);
        let mut opts = EstimateOptions {
            grid: Some(TimeGrid::log_spaced(0.01, 10.0, 3).unwrap()),
            search: SearchOptions { depth: 3, ..Default::default() },
            ..Default::default()
        };
        let hat = lambda_estimate(&fam, Target::SigmaHat, &opts).unwrap();
        assert!(hat.certified_lower >= 0.0);
        let base = lambda_estimate(&fam, Target::SigmaBar, &opts).unwrap();
        opts.mu = 2.0;
        let shifted = lambda_estimate(&fam, Target::SigmaBar, &opts).unwrap();
        assert!((shifted.certified_lower - base.certified_lower - 2.0).abs() < 1e-9);
        assert!((shifted.heuristic_upper - base.heuristic_upper - 2.0).abs() < 1e-9);
    }

    #[test]
    fn tilde_hat_cases() {
        let zero = Mode::new(1, Matrix::identity(2, 2), Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]), Matrix::zeros(2, 2)).unwrap();
        let fam = SystemFamily::new(vec![zero], 0.0).unwrap();
        let opts = EstimateOptions {
            search: SearchOptions { depth: 3, ..Default::default() },
            grid: Some(TimeGrid::log_spaced(0.1, 10.0, 2).unwrap()),
            ..Default::default()
        };
        let est = lambda_tilde_hat(&fam, &opts).unwrap();
        assert_eq!(est.certified_lower, f64::NEG_INFINITY);

        let plain = Mode::new(1, Matrix::identity(2, 2), Matrix::from_row_slice(2, 2, &[0.3, 0.5, 0.0, -1.0]), Matrix::identity(2, 2)).unwrap();
        let fam = SystemFamily::new(vec![plain], 0.0).unwrap();
        let est = lambda_tilde_hat(&fam, &opts).unwrap();
        assert!(est.certified_lower >= -1e-12 && est.certified_lower <= 1e-12, "{}", est.certified_lower);

        let printed = builtin::example_family(0.45, ExampleVariant::Swapped);
        let est = lambda_tilde_hat(&printed, &opts).unwrap();
        assert!(est.certified_lower > 0.0);
        let w = est.witness.as_ref().unwrap();
        assert!(w.letters.iter().all(|l| l.template == w.letters[0].template) || w.letters.len() > 1);
    }

    #[test]
    fn printed_example_rejected_for_reduced_targets() {
        let fam = builtin::example_family(0.45, ExampleVariant::Printed);
        assert!(matches!(lambda_estimate(&fam, Target::SigmaBar, &EstimateOptions::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn unbounded_jumps_give_infinity() {
        let fam = builtin::example_family(0.45, ExampleVariant::Swapped);
        let opts = EstimateOptions {
            eps: 0.1,
            grid: Some(TimeGrid::single(0.4)),
            search: SearchOptions { depth: 2, ..Default::default() },
            ..Default::default()
        };
        let est = lambda_estimate(&fam, Target::SigmaEps, &opts).unwrap();
        assert_eq!(est.certified_lower, f64::INFINITY);
        assert!(est.unbounded_jumps.is_some());
    }

    #[test]
    fn verdicts() {
        let mut e = empty_estimate(0);
        (e.certified_lower, e.heuristic_upper) = (-0.4, -0.1);
        assert_eq!(verdict(&e, true), Verdict::ES);
        assert_eq!(verdict(&e, false), Verdict::Inconclusive);
        (e.certified_lower, e.heuristic_upper) = (0.05, 0.3);
        assert_eq!(verdict(&e, true), Verdict::EU);
        (e.certified_lower, e.heuristic_upper) = (-0.2, 0.1);
        assert_eq!(verdict(&e, true), Verdict::Inconclusive);
    }
}
