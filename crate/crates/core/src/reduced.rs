//! Weighted generator families and jump sets of the auxiliary systems.
//!
//! Every family is a finite set of templates `t -> N(t)` evaluated on a time
//! grid. Products of evaluated members ("words") are what the exponent
//! engine searches over.

use serde::Serialize;

use crate::chang::{self, ReducedMode};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::SystemFamily;

pub const DEFAULT_S_GRID: [f64; 7] = [0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0];
pub const DEFAULT_N_MAX: usize = 2;
pub const DEFAULT_POINTS_PER_DECADE: usize = 24;
pub const DEFAULT_GRID_END: f64 = 50.0;
const DEDUP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FamilyKind {
    #[serde(rename = "N-eps")]
    NEps,
    #[serde(rename = "N-hat")]
    NHat,
    #[serde(rename = "N-bar")]
    NBar,
    #[serde(rename = "N-tilde")]
    NTilde,
    /// `R e^{t S}` for arbitrary `(S, R)` pairs.
    #[serde(rename = "pairs")]
    Pairs,
}

impl FamilyKind {
    pub fn label(self) -> &'static str {
        match self {
            FamilyKind::NEps => "N-eps",
            FamilyKind::NHat => "N-hat",
            FamilyKind::NBar => "N-bar",
            FamilyKind::NTilde => "N-tilde",
            FamilyKind::Pairs => "pairs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JumpSetKind {
    R,
    #[serde(rename = "R-bar")]
    RBar,
    #[serde(rename = "R-tilde")]
    RTilde,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    pub points: Vec<f64>,
}

impl TimeGrid {
    /// `per_decade` log-spaced points per decade from `lo` to `hi`, both included.
    pub fn log_spaced(lo: f64, hi: f64, per_decade: usize) -> Result<Self> {
        if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() || per_decade == 0 {
            return Err(Error::InvalidArgument(format!(
                "bad grid range [{lo}, {hi}] with {per_decade} points per decade"
            )));
        }
        let decades = (hi / lo).log10();
        let n = ((decades * per_decade as f64).ceil() as usize).max(1);
        let mut points: Vec<f64> = (0..=n)
            .map(|i| lo * 10f64.powf(decades * i as f64 / n as f64))
            .collect();
        points[0] = lo;
        points[n] = hi;
        points.dedup();
        Ok(TimeGrid { points })
    }

    /// The default grid `[max(tau, 1e-3), 50]` with 24 points per decade.
    pub fn for_tau(tau: f64) -> Self {
        let lo = tau.max(1e-3);
        let hi = DEFAULT_GRID_END.max(lo);
        Self::log_spaced(lo, hi, DEFAULT_POINTS_PER_DECADE).expect("default grid")
    }

    pub fn single(t: f64) -> Self {
        TimeGrid { points: vec![t] }
    }

    pub fn from_points(mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("time grid is empty".into()));
        }
        if let Some(t) = points.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid point {t} must be positive")));
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        Ok(TimeGrid { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.points.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.points.last().copied().unwrap_or(f64::NAN)
    }
}

/// Product of per-mode fast transients, the first recipe entry applied first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransientFactor {
    pub recipe: Vec<(usize, f64)>,
    #[serde(skip)]
    pub matrix: Matrix,
}

impl TransientFactor {
    pub fn identity(d: usize) -> Self {
        TransientFactor {
            recipe: Vec::new(),
            matrix: Matrix::identity(d, d),
        }
    }

    fn has_self_switch(&self) -> bool {
        self.recipe.windows(2).any(|w| w[0].0 == w[1].0)
    }
}

fn reduced_modes(f: &SystemFamily) -> Result<Vec<ReducedMode>> {
    f.modes()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            chang::reduced_mode(m).map_err(|e| match e {
                Error::Precondition(msg) => Error::Precondition(format!("mode {i}: {msg}")),
                other => other,
            })
        })
        .collect()
}

/// `R T^-1 diag(I, e^{s D}) T` for one mode.
fn transient_step(f: &SystemFamily, red: &[ReducedMode], mode: usize, s: f64) -> Matrix {
    f.mode(mode).r() * red[mode].fast_transient(s)
}

/// Identity plus every product of at most `n_max` transient steps with
/// modes from the family and fast times from `s_grid`, deduplicated.
pub fn sample_transients(f: &SystemFamily, n_max: usize, s_grid: &[f64]) -> Result<Vec<TransientFactor>> {
    if let Some(s) = s_grid.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("transient time {s} must be positive")));
    }
    let red = reduced_modes(f)?;
    let mut steps = Vec::new();
    for mode in 0..f.len() {
        for &s in s_grid {
            steps.push(((mode, s), transient_step(f, &red, mode, s)));
        }
    }
    let mut out = vec![TransientFactor::identity(f.d())];
    let mut frontier = vec![TransientFactor::identity(f.d())];
    for _ in 0..n_max {
        let mut next = Vec::new();
        for base in &frontier {
            for (letter, m) in &steps {
                let mut recipe = base.recipe.clone();
                recipe.push(*letter);
                next.push(TransientFactor {
                    recipe,
                    matrix: m * &base.matrix,
                });
            }
        }
        for cand in &next {
            let ends = |t: &TransientFactor| (t.recipe.first().map(|r| r.0), t.recipe.last().map(|r| r.0));
            let dup = out.iter().any(|o| {
                ends(o) == ends(cand)
                    && o.has_self_switch() == cand.has_self_switch()
                    && (&o.matrix - &cand.matrix).amax() <= DEDUP_TOL
            });
            if !dup {
                out.push(cand.clone());
            }
        }
        frontier = next;
    }
    Ok(out)
}

/// `(T_to R_from T_from^-1)` truncated to `l_to x l_from`.
pub fn bar_jump(f: &SystemFamily, to: usize, from: usize) -> Result<Matrix> {
    tilde_jump(f, to, from, &TransientFactor::identity(f.d()))
}

/// `(T_to F R_from T_from^-1)` truncated to `l_to x l_from`.
pub fn tilde_jump(f: &SystemFamily, to: usize, from: usize, factor: &TransientFactor) -> Result<Matrix> {
    let r_to = chang::reduced_mode(f.mode(to))?;
    let r_from = chang::reduced_mode(f.mode(from))?;
    let full = &r_to.t0 * &factor.matrix * f.mode(from).r() * &r_from.t0_inv;
    linalg::block_truncate(&full, r_to.l, r_from.l)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorTemplate {
    pub mode: usize,
    pub factor: Option<usize>,
    /// Mode active during the first part of the letter.
    pub first_mode: usize,
    /// Mode whose jump ends the letter.
    pub last_mode: usize,
    /// True when the letter itself contains two consecutive equal modes.
    pub internal_self_switch: bool,
}

#[derive(Debug, Clone)]
enum Recipe {
    /// `left e^{t G} right`, scaled by `e^{mu t}`.
    Flow { left: Matrix, gen: Matrix, right: Matrix },
    /// `left T^-1 diag(e^{t M}, 0) T`, scaled by `e^{mu t}`.
    Slow { left: Matrix, red: ReducedMode },
}

#[derive(Debug, Clone)]
pub struct GeneratorFamily {
    pub kind: FamilyKind,
    pub eps: Option<f64>,
    pub mu: f64,
    pub tau: f64,
    pub grid: TimeGrid,
    pub templates: Vec<GeneratorTemplate>,
    pub factors: Vec<TransientFactor>,
    recipes: Vec<Recipe>,
}

/// One evaluated member: a template at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Letter {
    pub template: usize,
    pub grid_index: usize,
    pub weight: f64,
    pub matrix: Matrix,
    pub first_mode: usize,
    pub last_mode: usize,
}

impl GeneratorFamily {
    pub fn d(&self) -> usize {
        match &self.recipes[0] {
            Recipe::Flow { right, .. } => right.ncols(),
            Recipe::Slow { red, .. } => red.dim(),
        }
    }

    pub fn evaluate(&self, template: usize, t: f64) -> Matrix {
        let scale = (self.mu * t).exp();
        match &self.recipes[template] {
            Recipe::Flow { left, gen, right } => left * linalg::expm(&(gen * t)) * right * scale,
            Recipe::Slow { left, red } => left * red.slow_flow(t, 0.0) * scale,
        }
    }

    /// All templates on all grid points, in `(template, grid index)` order.
    /// With `forbid_self_switch`, templates with an internal repeat are dropped.
    pub fn letters(&self, forbid_self_switch: bool) -> Vec<Letter> {
        let mut out = Vec::with_capacity(self.templates.len() * self.grid.len());
        for (ti, tpl) in self.templates.iter().enumerate() {
            if forbid_self_switch && tpl.internal_self_switch {
                continue;
            }
            for (gi, &t) in self.grid.points.iter().enumerate() {
                out.push(Letter {
                    template: ti,
                    grid_index: gi,
                    weight: t,
                    matrix: self.evaluate(ti, t),
                    first_mode: tpl.first_mode,
                    last_mode: tpl.last_mode,
                });
            }
        }
        out
    }
}

/// Options for [`build_generators`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorOptions {
    pub eps: f64,
    pub mu: f64,
    pub grid: TimeGrid,
    pub n_max: usize,
    pub s_grid: Vec<f64>,
}

impl GeneratorOptions {
    pub fn new(grid: TimeGrid) -> Self {
        GeneratorOptions {
            eps: 0.0,
            mu: 0.0,
            grid,
            n_max: DEFAULT_N_MAX,
            s_grid: DEFAULT_S_GRID.to_vec(),
        }
    }
}

pub fn build_generators(f: &SystemFamily, kind: FamilyKind, opts: &GeneratorOptions) -> Result<GeneratorFamily> {
    if opts.grid.is_empty() {
        return Err(Error::InvalidArgument("time grid is empty".into()));
    }
    let tau = f.tau();
    if kind != FamilyKind::NHat && opts.grid.min() < tau {
        return Err(Error::InvalidArgument(format!(
            "grid point {} below dwell time {tau}",
            opts.grid.min()
        )));
    }
    let mut templates = Vec::new();
    let mut recipes = Vec::new();
    let mut factors = Vec::new();
    let simple = |mode: usize| GeneratorTemplate {
        mode,
        factor: None,
        first_mode: mode,
        last_mode: mode,
        internal_self_switch: false,
    };
    match kind {
        FamilyKind::Pairs => {
            return Err(Error::InvalidArgument("pair families are built with pair_family".into()));
        }
        FamilyKind::NEps => {
            for (i, mode) in f.modes().iter().enumerate() {
                let data = chang::build_transform(mode, opts.eps).map_err(|e| attribute(e, i))?;
                let gen = data.gamma.ok_or_else(|| {
                    Error::InvalidArgument("N-eps needs eps > 0".into())
                })?;
                templates.push(simple(i));
                recipes.push(Recipe::Flow {
                    left: mode.r() * &data.t_inv,
                    gen,
                    right: data.t,
                });
            }
        }
        FamilyKind::NHat => {
            let red = reduced_modes(f)?;
            for (i, (mode, red)) in f.modes().iter().zip(red).enumerate() {
                let gen = linalg::block_diag(&Matrix::zeros(red.l, red.l), &red.d);
                templates.push(simple(i));
                recipes.push(Recipe::Flow {
                    left: mode.r() * &red.t0_inv,
                    gen,
                    right: red.t0.clone(),
                });
            }
        }
        FamilyKind::NBar => {
            let red = reduced_modes(f)?;
            for (i, red) in red.into_iter().enumerate() {
                templates.push(simple(i));
                recipes.push(Recipe::Slow {
                    left: f.mode(i).r().clone(),
                    red,
                });
            }
        }
        FamilyKind::NTilde => {
            let red = reduced_modes(f)?;
            factors = sample_transients(f, opts.n_max, &opts.s_grid)?;
            for (i, red) in red.into_iter().enumerate() {
                for (fi, factor) in factors.iter().enumerate() {
                    let last = factor.recipe.last().map_or(i, |r| r.0);
                    let repeat = factor.has_self_switch()
                        || factor.recipe.first().is_some_and(|r| r.0 == i);
                    templates.push(GeneratorTemplate {
                        mode: i,
                        factor: Some(fi),
                        first_mode: i,
                        last_mode: last,
                        internal_self_switch: repeat,
                    });
                    recipes.push(Recipe::Slow {
                        left: &factor.matrix * f.mode(i).r(),
                        red: red.clone(),
                    });
                }
            }
        }
    }
    Ok(GeneratorFamily {
        kind,
        eps: (kind == FamilyKind::NEps).then_some(opts.eps),
        mu: opts.mu,
        tau,
        grid: opts.grid.clone(),
        templates,
        factors,
        recipes,
    })
}

/// Letters `R_i e^{t S_i}` for the given `(S_i, R_i)` pairs, scaled by `e^{mu t}`.
pub fn pair_family(pairs: &[(Matrix, Matrix)], tau: f64, grid: TimeGrid, mu: f64) -> Result<GeneratorFamily> {
    let Some(first) = pairs.first() else {
        return Err(Error::InvalidArgument("no (generator, jump) pairs".into()));
    };
    if grid.is_empty() || grid.min() < tau {
        return Err(Error::InvalidArgument(format!("grid must be nonempty and start at or above {tau}")));
    }
    let d = first.0.nrows();
    let mut templates = Vec::new();
    let mut recipes = Vec::new();
    for (i, (gen, jump)) in pairs.iter().enumerate() {
        for m in [gen, jump] {
            if m.shape() != (d, d) {
                return Err(Error::Dimension(format!("pair {i} is not {d}x{d}")));
            }
        }
        templates.push(GeneratorTemplate {
            mode: i,
            factor: None,
            first_mode: i,
            last_mode: i,
            internal_self_switch: false,
        });
        recipes.push(Recipe::Flow {
            left: jump.clone(),
            gen: gen.clone(),
            right: Matrix::identity(d, d),
        });
    }
    Ok(GeneratorFamily {
        kind: FamilyKind::Pairs,
        eps: None,
        mu,
        tau,
        grid,
        templates,
        factors: Vec::new(),
        recipes,
    })
}

fn attribute(e: Error, mode: usize) -> Error {
    match e {
        Error::Convergence { eps, detail, .. } => Error::Convergence { mode, eps, detail },
        Error::Precondition(msg) => Error::Precondition(format!("mode {mode}: {msg}")),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpMember {
    #[serde(skip)]
    pub matrix: Matrix,
    pub first_mode: usize,
    pub last_mode: usize,
    pub internal_self_switch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpSet {
    pub kind: JumpSetKind,
    pub members: Vec<JumpMember>,
}

impl JumpSet {
    pub fn matrices(&self) -> impl Iterator<Item = &Matrix> {
        self.members.iter().map(|m| &m.matrix)
    }
}

/// `R`, `R T^-1 diag(I, 0) T`, or `F R T^-1 diag(I, 0) T` over sampled `F`.
pub fn build_jump_set(f: &SystemFamily, kind: JumpSetKind, factors: &[TransientFactor]) -> Result<JumpSet> {
    let members = match kind {
        JumpSetKind::R => f
            .modes()
            .iter()
            .enumerate()
            .map(|(i, m)| JumpMember {
                matrix: m.r().clone(),
                first_mode: i,
                last_mode: i,
                internal_self_switch: false,
            })
            .collect(),
        JumpSetKind::RBar | JumpSetKind::RTilde => {
            let red = reduced_modes(f)?;
            let identity = [TransientFactor::identity(f.d())];
            let factors = if kind == JumpSetKind::RBar { &identity[..] } else { factors };
            let mut out = Vec::new();
            for (i, red) in red.iter().enumerate() {
                let n = red.dim() - red.l;
                let proj = red.conjugate_block_diag(&Matrix::identity(red.l, red.l), &Matrix::zeros(n, n));
                let bar = f.mode(i).r() * proj;
                for factor in factors {
                    out.push(JumpMember {
                        matrix: &factor.matrix * &bar,
                        first_mode: i,
                        last_mode: factor.recipe.last().map_or(i, |r| r.0),
                        internal_self_switch: factor.has_self_switch()
                            || factor.recipe.first().is_some_and(|r| r.0 == i),
                    });
                }
            }
            out
        }
    };
    Ok(JumpSet { kind, members })
}
