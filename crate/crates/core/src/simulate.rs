//! Exact piecewise-exponential simulation along a switching signal.
//!
//! Between switching times the state moves by `e^{(t - t_k) G}` for the
//! active mode's generator; at each switching time the departing mode's jump
//! is applied. The reduced and enriched systems keep their variable-size
//! state in the leading coordinates of a `d`-vector, the rest held at zero.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::chang;
use crate::error::{Error, Result};
use crate::exponent::Target;
use crate::linalg::{self, Matrix};
use crate::model::{Piece, SwitchingSignal, SystemFamily};
use crate::reduced::{self, TransientFactor};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub mode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpEvent {
    pub t: f64,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    pub from: usize,
    pub to: usize,
}

/// Samples are ordered by time; a jump contributes two samples with the same
/// time (pre- and post-jump), never an interpolated one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub system: Target,
    pub samples: Vec<Sample>,
    pub jumps: Vec<JumpEvent>,
    pub signal: SwitchingSignal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Only used for the full system.
    pub eps: f64,
    /// Factor inserted in the enriched system's jumps.
    pub transient: Option<TransientFactor>,
    pub forbid_self_switch: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            eps: 0.1,
            transient: None,
            forbid_self_switch: false,
        }
    }
}

struct Dynamics {
    generators: Vec<Matrix>,
    /// `jumps[to][from]`
    jumps: Vec<Vec<Matrix>>,
    /// Number of active leading coordinates per mode (`d` for full-state systems).
    active: Vec<usize>,
}

fn dynamics(f: &SystemFamily, target: Target, opts: &SimOptions) -> Result<Dynamics> {
    let d = f.d();
    let n = f.len();
    match target {
        Target::SigmaEps => {
            let generators = f
                .modes()
                .iter()
                .map(|m| m.epsilon_generator(opts.eps))
                .collect::<Result<Vec<_>>>()?;
            let jumps = (0..n)
                .map(|_| f.modes().iter().map(|m| m.r().clone()).collect())
                .collect();
            Ok(Dynamics {
                generators,
                jumps,
                active: vec![d; n],
            })
        }
        Target::SigmaHat => {
            let red = f
                .modes()
                .iter()
                .map(chang::reduced_mode)
                .collect::<Result<Vec<_>>>()?;
            let generators = red
                .iter()
                .map(|r| linalg::block_diag(&Matrix::zeros(r.l, r.l), &r.d))
                .collect();
            let jumps = (0..n)
                .map(|to| {
                    (0..n)
                        .map(|from| &red[to].t0 * f.mode(from).r() * &red[from].t0_inv)
                        .collect()
                })
                .collect();
            Ok(Dynamics {
                generators,
                jumps,
                active: vec![d; n],
            })
        }
        Target::SigmaBar | Target::SigmaTilde => {
            let red = f
                .modes()
                .iter()
                .map(chang::reduced_mode)
                .collect::<Result<Vec<_>>>()?;
            let generators = red.iter().map(|r| linalg::embed_top_left(&r.m, d)).collect();
            let identity = TransientFactor::identity(d);
            let factor = match (target, &opts.transient) {
                (Target::SigmaTilde, Some(t)) => t,
                _ => &identity,
            };
            let mut jumps = Vec::with_capacity(n);
            for to in 0..n {
                let mut row = Vec::with_capacity(n);
                for from in 0..n {
                    let j = reduced::tilde_jump(f, to, from, factor)?;
                    row.push(linalg::embed_top_left(&j, d));
                }
                jumps.push(row);
            }
            Ok(Dynamics {
                generators,
                jumps,
                active: red.iter().map(|r| r.l).collect(),
            })
        }
    }
}

fn to_vec(x: &nalgebra::DVector<f64>) -> Vec<f64> {
    x.iter().copied().collect()
}

/// Simulates `target` from `x0` on `[0, t_end]`, sampling every `dt_out`.
pub fn simulate(
    f: &SystemFamily,
    signal: &SwitchingSignal,
    target: Target,
    x0: &[f64],
    t_end: f64,
    dt_out: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let d = f.d();
    if x0.len() != d {
        return Err(Error::Dimension(format!("x0 has {} entries, expected {d}", x0.len())));
    }
    if !(t_end > 0.0) || !t_end.is_finite() || !(dt_out > 0.0) || !dt_out.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need t_end > 0 and dt_out > 0, got {t_end} and {dt_out}"
        )));
    }
    // the transient system runs in fast time and is not subject to the dwell time
    let tau = if target == Target::SigmaHat { 0.0 } else { f.tau() };
    signal.check_admissible(f.len(), tau, opts.forbid_self_switch)?;
    let dyn_ = dynamics(f, target, opts)?;

    let mut intervals: Vec<(f64, f64, usize)> = Vec::new();
    let mut start = 0.0;
    for p in &signal.pieces {
        if start >= t_end {
            break;
        }
        intervals.push((start, start + p.duration, p.mode));
        start += p.duration;
    }
    if start < t_end {
        intervals.push((start, f64::INFINITY, signal.final_mode));
    }

    let first_mode = intervals[0].2;
    let mut x = nalgebra::DVector::from_column_slice(x0);
    for i in dyn_.active[first_mode]..d {
        x[i] = 0.0;
    }
    let mut samples = Vec::new();
    let mut jumps = Vec::new();
    let n_out = (t_end / dt_out + 1e-9).floor() as usize;
    let mut next_out = 0usize;

    for (k, &(t0, t1, mode)) in intervals.iter().enumerate() {
        let gen = &dyn_.generators[mode];
        let stop = t1.min(t_end);
        while next_out <= n_out {
            let t = next_out as f64 * dt_out;
            if t > stop || (t == t1 && t1 < t_end) {
                break;
            }
            let xt = linalg::expm(&(gen * (t - t0))) * &x;
            samples.push(Sample { t, x: to_vec(&xt), mode });
            next_out += 1;
        }
        if t1 >= t_end {
            let last_t = samples.last().map_or(-1.0, |s| s.t);
            if last_t < t_end {
                let xt = linalg::expm(&(gen * (t_end - t0))) * &x;
                samples.push(Sample { t: t_end, x: to_vec(&xt), mode });
            }
            break;
        }
        let before = linalg::expm(&(gen * (t1 - t0))) * &x;
        let to = intervals[k + 1].2;
        let after = &dyn_.jumps[to][mode] * &before;
        samples.push(Sample { t: t1, x: to_vec(&before), mode });
        samples.push(Sample { t: t1, x: to_vec(&after), mode: to });
        jumps.push(JumpEvent {
            t: t1,
            before: to_vec(&before),
            after: to_vec(&after),
            from: mode,
            to,
        });
        x = after;
        if (next_out as f64 * dt_out) == t1 {
            next_out += 1;
        }
    }
    Ok(Trajectory {
        system: target,
        samples,
        jumps,
        signal: signal.clone(),
    })
}

/// Flow matrix from 0 to the end of the last piece, jumps included.
pub fn flow_at_switching_times(f: &SystemFamily, signal: &SwitchingSignal, target: Target, opts: &SimOptions) -> Result<Matrix> {
    let dyn_ = dynamics(f, target, opts)?;
    let d = f.d();
    let mut phi = Matrix::identity(d, d);
    let modes: Vec<usize> = signal.modes().collect();
    for (k, p) in signal.pieces.iter().enumerate() {
        let flow = linalg::expm(&(&dyn_.generators[p.mode] * p.duration));
        phi = &dyn_.jumps[modes[k + 1]][p.mode] * flow * phi;
    }
    Ok(phi)
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::from("t");
        for i in 1..=d {
            let _ = write!(out, ",x{i}");
        }
        out.push_str(",mode\n");
        for s in &self.samples {
            let _ = write!(out, "{}", s.t);
            for v in &s.x {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", s.mode);
        }
        out
    }

    /// Two whitespace-separated columns; `None` selects time.
    pub fn to_gnuplot(&self, a: Option<usize>, b: Option<usize>) -> Result<String> {
        let d = self.dim();
        for i in [a, b].into_iter().flatten() {
            if i >= d {
                return Err(Error::Dimension(format!("coordinate {i} out of range for d = {d}")));
            }
        }
        let pick = |s: &Sample, c: Option<usize>| c.map_or(s.t, |i| s.x[i]);
        let mut out = String::new();
        let name = |c: Option<usize>| c.map_or("t".to_string(), |i| format!("x{}", i + 1));
        let _ = writeln!(out, "# {} {}", name(a), name(b));
        for s in &self.samples {
            let _ = writeln!(out, "{} {}", pick(s, a), pick(s, b));
        }
        Ok(out)
    }

    /// A minimal line plot of every coordinate against time.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (640.0, 400.0, 40.0);
        let t_max = self.samples.last().map_or(1.0, |s| s.t).max(f64::MIN_POSITIVE);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.samples {
            for v in &s.x {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        if !(hi > lo) {
            lo -= 1.0;
            hi += 1.0;
        }
        let sx = |t: f64| pad + (w - 2.0 * pad) * t / t_max;
        let sy = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / (hi - lo);
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let mut out = String::new();
        let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<path d="M{pad} {pad} V{} H{}" stroke="black" fill="none"/>"#,
            h - pad,
            w - pad
        );
        if lo < 0.0 && hi > 0.0 {
            let _ = writeln!(
                out,
                r##"<line x1="{pad}" y1="{y}" x2="{}" y2="{y}" stroke="#999" stroke-dasharray="4 3"/>"##,
                w - pad,
                y = sy(0.0)
            );
        }
        for i in 0..self.dim() {
            let mut path = String::new();
            for (k, s) in self.samples.iter().enumerate() {
                let _ = write!(path, "{}{:.2} {:.2} ", if k == 0 { "M" } else { "L" }, sx(s.t), sy(s.x[i]));
            }
            let _ = writeln!(
                out,
                r#"<path d="{}" stroke="{}" fill="none" stroke-width="1.5"/>"#,
                path.trim_end(),
                colors[i % colors.len()]
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-size="12" fill="{}">x{}</text>"#,
                w - pad + 5.0,
                pad + 14.0 * i as f64,
                colors[i % colors.len()],
                i + 1
            );
        }
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">t = {t_max}</text>"#, w - pad - 40.0, h - pad + 16.0);
        out.push_str("</svg>\n");
        out
    }
}

// ---------------------------------------------------------------------------
// Signals

/// Cycles through `modes` with equal pieces until `t_end` is covered.
pub fn make_periodic_signal(modes: &[usize], piece: f64, t_end: f64, tau: f64) -> Result<SwitchingSignal> {
    if modes.is_empty() {
        return Err(Error::InvalidArgument("no modes to cycle".into()));
    }
    if !(piece > 0.0) || !piece.is_finite() || !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("need piece > 0 and t_end > 0, got {piece}, {t_end}")));
    }
    if piece < tau {
        return Err(Error::Signal(format!("piece {piece} below dwell time {tau}")));
    }
    let count = ((t_end / piece) - 1e-9).ceil().max(1.0) as usize;
    let pieces = (0..count)
        .map(|i| Piece {
            mode: modes[i % modes.len()],
            duration: piece,
        })
        .collect();
    Ok(SwitchingSignal {
        pieces,
        final_mode: modes[count % modes.len()],
    })
}

/// Durations `tau + Exp(mean_extra)`, modes uniform (or uniform among the
/// other modes with `forbid_self_switch`), until `t_end` is covered.
pub fn make_random_signal(
    seed: u64,
    n_modes: usize,
    tau: f64,
    mean_extra: f64,
    t_end: f64,
    forbid_self_switch: bool,
) -> Result<SwitchingSignal> {
    if n_modes == 0 || (forbid_self_switch && n_modes < 2) {
        return Err(Error::InvalidArgument("not enough modes for a switching signal".into()));
    }
    if !(tau >= 0.0) || !(mean_extra > 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need tau >= 0, mean_extra > 0, t_end > 0; got {tau}, {mean_extra}, {t_end}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exp = Exp::new(1.0 / mean_extra).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let draw_mode = |rng: &mut ChaCha8Rng, prev: Option<usize>| match prev {
        Some(p) if forbid_self_switch => {
            let m = rng.random_range(0..n_modes - 1);
            if m >= p {
                m + 1
            } else {
                m
            }
        }
        _ => rng.random_range(0..n_modes),
    };
    let mut pieces = Vec::new();
    let mut total = 0.0;
    let mut prev = None;
    while total < t_end {
        let duration = tau + exp.sample(&mut rng);
        let mode = draw_mode(&mut rng, prev);
        if duration <= 0.0 {
            continue;
        }
        pieces.push(Piece { mode, duration });
        total += duration;
        prev = Some(mode);
    }
    let final_mode = draw_mode(&mut rng, prev);
    Ok(SwitchingSignal { pieces, final_mode })
}

// ---------------------------------------------------------------------------
// Decay fit

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    /// Root mean square of the log-norm residuals.
    pub residual: f64,
    pub points: usize,
}

/// Least-squares line through `(t, |x|)` on a log scale.
pub fn fit_log_linear(points: &[(f64, f64)]) -> Result<DecayFit> {
    if let Some(p) = points.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::Fit(format!("state norm is zero at t = {}", p.0)));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(t, v)| (t, v.ln())).collect();
    fit_log_norms(&logs)
}

/// Least-squares line through `(t, log |x|)` pairs.
pub fn fit_log_norms(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.len() < 10 {
        return Err(Error::Fit(format!("need at least 10 samples, have {}", points.len())));
    }
    if let Some(p) = points.iter().find(|p| !p.1.is_finite()) {
        return Err(Error::Fit(format!("log norm {} at t = {}", p.1, p.0)));
    }
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, y) in points {
        sxy += (t - mt) * (y - my);
        sxx += (t - mt) * (t - mt);
    }
    if sxx == 0.0 {
        return Err(Error::Fit("all samples at the same time".into()));
    }
    let rate = sxy / sxx;
    let intercept = my - rate * mt;
    let ss: f64 = points.iter().map(|&(t, y)| (y - intercept - rate * t).powi(2)).sum();
    Ok(DecayFit {
        rate,
        intercept,
        residual: (ss / n).sqrt(),
        points: points.len(),
    })
}

/// Decay rate along the periodic extension of `pieces`, fitted on the states
/// at period boundaries. Each period is simulated from a unit-norm state and
/// the log norms accumulated, so long horizons neither overflow nor underflow.
pub fn periodic_decay_rate(
    f: &SystemFamily,
    pieces: &[Piece],
    target: Target,
    x0: &[f64],
    periods: usize,
    opts: &SimOptions,
) -> Result<DecayFit> {
    if pieces.is_empty() {
        return Err(Error::InvalidArgument("empty period".into()));
    }
    let period: f64 = pieces.iter().map(|p| p.duration).sum();
    let signal = SwitchingSignal {
        pieces: pieces.to_vec(),
        final_mode: pieces[0].mode,
    };
    let dyn_ = dynamics(f, target, opts)?;
    let closing = &dyn_.jumps[pieces[0].mode][pieces[pieces.len() - 1].mode];
    let mut x = x0.to_vec();
    let mut log_norm = 0.0;
    let mut points = Vec::with_capacity(periods);
    for k in 1..=periods {
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Fit(format!("state norm {n} after {} periods", k - 1)));
        }
        x.iter_mut().for_each(|v| *v /= n);
        log_norm += n.ln();
        // no jump is simulated at t_end; the period's closing jump is applied here
        let tr = simulate(f, &signal, target, &x, period, period, opts)?;
        let end = nalgebra::DVector::from_column_slice(&tr.samples.last().expect("nonempty").x);
        x = to_vec(&(closing * end));
        let n_end = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        points.push((k as f64 * period, log_norm + n_end.ln()));
    }
    let skip = points.len() / 4;
    fit_log_norms(&points[skip..])
}

/// Decay rate while `mode` is held forever, fitted on chunks of length `chunk`.
pub fn held_decay_rate(
    f: &SystemFamily,
    mode: usize,
    chunk: f64,
    target: Target,
    x0: &[f64],
    chunks: usize,
    opts: &SimOptions,
) -> Result<DecayFit> {
    let signal = SwitchingSignal::constant(mode);
    let mut x = x0.to_vec();
    let mut log_norm = 0.0;
    let mut points = Vec::with_capacity(chunks);
    for k in 1..=chunks {
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Fit(format!("state norm {n} after {} chunks", k - 1)));
        }
        x.iter_mut().for_each(|v| *v /= n);
        log_norm += n.ln();
        let tr = simulate(f, &signal, target, &x, chunk, chunk, opts)?;
        x = tr.samples.last().expect("nonempty").x.clone();
        let n_end = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        points.push((k as f64 * chunk, log_norm + n_end.ln()));
    }
    let skip = points.len() / 4;
    fit_log_norms(&points[skip..])
}

pub fn fit_decay(tr: &Trajectory, window: (f64, f64)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = tr
        .samples
        .iter()
        .filter(|s| s.t >= window.0 && s.t <= window.1)
        .map(|s| (s.t, s.x.iter().map(|v| v * v).sum::<f64>().sqrt()))
        .collect();
    fit_log_linear(&pts)
}
