//! Pickands and Piterbarg constants.
//!
//! Window quantities are expectations over a uniform grid `G ∋ 0`:
//!
//! ```text
//! H_α[0,T]         = E exp( max_{t∈G} √2·B_α(t) − |t|^α )
//! P_α^a[−S1,S2]    = E exp( max_{t∈G} √2·B_α(t) − (1+a)|t|^α )
//! ```
//!
//! The grid maximum never exceeds the continuous supremum, so every grid
//! estimate is biased low relative to the continuous constant.
//!
//! Two unbiased estimators of the grid target are available:
//!
//! * [`Estimator::Crude`] averages `exp(max Z)` directly. For the Pickands
//!   window its variance grows like `exp(2T)`.
//! * [`Estimator::MixtureTilt`] samples under the mixture of the exponential
//!   tilts `e^{Z(τ)}`, `τ` drawn on the grid with weights `∝ e^{−a|τ|^α}`.
//!   Under the tilt at `τ` the path is `√2·B_α(t) + |τ|^α − |t−τ|^α`, and
//!   the likelihood-ratio-weighted sample is
//!   `W · max_k e^{Y_k} / Σ_k e^{Y_k}` with `Y_k = Z_k − a|t_k|^α` and
//!   `W = Σ_k e^{−a|t_k|^α}`. This is bounded by `W`, which keeps the
//!   variance finite for long windows.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{derive_seed, run_chunks, ExecMode};
use crate::fbm::{alpha_to_hurst, Scratch, TimeGrid, WindowSampler};
use crate::stats::RunningStats;

/// Samples whose grid supremum exceeds this abort the run.
pub const SUP_OVERFLOW_GUARD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantKind {
    PickandsWindow,
    PickandsLimit,
    PiterbargWindow,
    PiterbargLimit,
    PiterbargTwosided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Crude,
    MixtureTilt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    OneSided,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderPoint {
    /// Window length `T` (Pickands) or half-width `S` (Piterbarg).
    pub window: f64,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantEstimate {
    pub kind: ConstantKind,
    pub alpha: f64,
    pub a: Option<f64>,
    /// `[−S1, S2]`, stored as `[−S1, S2]`.
    pub window: [f64; 2],
    pub grid_step: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub estimator: Estimator,
    /// Grid maxima underestimate the continuous supremum.
    pub downward_biased: bool,
    pub ladder: Vec<LadderPoint>,
}

/// Window ladder and sampling settings for the limit constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderPolicy {
    pub windows: Vec<f64>,
    pub grid_step: f64,
    /// Samples per ladder rung.
    pub n_samples: usize,
    /// `None` picks the per-constant default: mixture tilt for Pickands,
    /// crude for Piterbarg.
    pub estimator: Option<Estimator>,
    #[serde(skip)]
    pub exec: ExecMode,
}

impl Default for LadderPolicy {
    fn default() -> Self {
        LadderPolicy {
            windows: vec![2.0, 4.0, 8.0, 16.0],
            grid_step: 0.01,
            n_samples: 20_000,
            estimator: None,
            exec: ExecMode::default(),
        }
    }
}

/// Per-call sampling options for window estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowOptions {
    pub estimator: Estimator,
    pub exec: ExecMode,
}

impl WindowOptions {
    pub fn new(estimator: Estimator) -> Self {
        WindowOptions {
            estimator,
            exec: ExecMode::default(),
        }
    }
}

/// `H_1 = 1`, `H_2 = 1/√π`; other `α` have no closed form.
pub fn exact_pickands(alpha: f64) -> Result<f64> {
    if alpha == 1.0 {
        Ok(1.0)
    } else if alpha == 2.0 {
        Ok(1.0 / std::f64::consts::PI.sqrt())
    } else {
        Err(Error::Unsupported(format!(
            "no closed form for the Pickands constant at alpha = {alpha}; estimate it with pickands_limit"
        )))
    }
}

/// `P_1^a = 1 + 1/a`, `P_2^a = ½(1 + √(1 + 1/a))`.
pub fn exact_constant(alpha: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::domain(format!("Piterbarg parameter a must be > 0, got {a}")));
    }
    if alpha == 1.0 {
        Ok(1.0 + 1.0 / a)
    } else if alpha == 2.0 {
        Ok(0.5 * (1.0 + (1.0 + 1.0 / a).sqrt()))
    } else {
        Err(Error::Unsupported(format!(
            "no closed form for the Piterbarg constant at alpha = {alpha}; estimate it with piterbarg_limit"
        )))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    alpha_to_hurst(alpha).map(|_| ())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be > 0, got {v}")))
    }
}

/// Precomputed window geometry shared by all samples of one run.
struct WindowRun {
    sampler: WindowSampler,
    /// `|t_k|^α`
    var: Vec<f64>,
    /// `a·|t_k|^α`
    penalty: Vec<f64>,
    /// `(d·h)^α` for lag `d`
    lag_pow: Vec<f64>,
    /// Cumulative tilt-mixture weights `∝ e^{−penalty}`, normalised to 1.
    cumulative: Vec<f64>,
    /// `Σ_k e^{−penalty_k}`
    total_weight: f64,
}

impl WindowRun {
    fn new(grid: TimeGrid, alpha: f64, a: f64) -> Result<Self> {
        let sampler = WindowSampler::new(grid, alpha)?;
        let var: Vec<f64> = grid.points().map(|t| t.abs().powf(alpha)).collect();
        let penalty: Vec<f64> = var.iter().map(|v| a * v).collect();
        let lag_pow = (0..grid.count()).map(|d| (d as f64 * grid.step()).powf(alpha)).collect();
        let weights: Vec<f64> = penalty.iter().map(|p| (-p).exp()).collect();
        let total_weight: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total_weight;
                acc
            })
            .collect();
        Ok(WindowRun {
            sampler,
            var,
            penalty,
            lag_pow,
            cumulative,
            total_weight,
        })
    }

    fn crude(&self, b: &[f64]) -> Result<f64> {
        let m = b
            .iter()
            .zip(&self.var)
            .zip(&self.penalty)
            .map(|((b, v), p)| std::f64::consts::SQRT_2 * b - v - p)
            .fold(f64::NEG_INFINITY, f64::max);
        guard(m)?;
        Ok(m.exp())
    }

    fn tilted<R: Rng + ?Sized>(&self, b: &[f64], rng: &mut R) -> Result<f64> {
        let u: f64 = rng.random();
        let j = self.cumulative.partition_point(|&c| c < u).min(self.cumulative.len() - 1);
        let shift = self.var[j];
        let y = |k: usize| std::f64::consts::SQRT_2 * b[k] + shift - self.lag_pow[k.abs_diff(j)] - self.penalty[k];
        let m = (0..b.len()).map(y).fold(f64::NEG_INFINITY, f64::max);
        guard(m)?;
        let denom: f64 = (0..b.len()).map(|k| (y(k) - m).exp()).sum();
        Ok(self.total_weight / denom)
    }

    fn estimate(&self, estimator: Estimator, n: usize, seed: u64, exec: ExecMode) -> Result<RunningStats> {
        let len = self.sampler.grid().count();
        let chunks = run_chunks(exec, n, seed, |_, count, rng| -> Result<RunningStats> {
            let mut scratch: Scratch = self.sampler.scratch();
            let (mut a, mut b) = (vec![0.0; len], vec![0.0; len]);
            let mut st = RunningStats::new();
            let mut left = count;
            while left > 0 {
                self.sampler.fill_pair(rng, &mut scratch, &mut a, &mut b);
                for path in [&a, &b].into_iter().take(left) {
                    let v = match estimator {
                        Estimator::Crude => self.crude(path)?,
                        Estimator::MixtureTilt => self.tilted(path, rng)?,
                    };
                    st.push(v);
                }
                left = left.saturating_sub(2);
            }
            Ok(st)
        });
        merge(chunks)
    }
}

fn guard(m: f64) -> Result<()> {
    if m > SUP_OVERFLOW_GUARD || m.is_nan() {
        Err(Error::Diagnostics(format!(
            "sampled supremum {m} exceeds {SUP_OVERFLOW_GUARD}; check alpha, a and the window"
        )))
    } else {
        Ok(())
    }
}

fn merge(chunks: Vec<Result<RunningStats>>) -> Result<RunningStats> {
    let mut total = RunningStats::new();
    for c in chunks {
        total.merge(&c?);
    }
    Ok(total)
}

/// `H_α[0,T]` with the default estimator (mixture tilt).
pub fn pickands_window(alpha: f64, horizon: f64, grid_step: f64, n_samples: usize, seed: u64) -> Result<ConstantEstimate> {
    pickands_window_with(alpha, horizon, grid_step, n_samples, seed, WindowOptions::new(Estimator::MixtureTilt))
}

pub fn pickands_window_with(
    alpha: f64,
    horizon: f64,
    grid_step: f64,
    n_samples: usize,
    seed: u64,
    opts: WindowOptions,
) -> Result<ConstantEstimate> {
    check_alpha(alpha)?;
    check_positive("window length T", horizon)?;
    check_positive("grid step", grid_step)?;
    let grid = TimeGrid::window(0.0, horizon, grid_step)?;
    let st = WindowRun::new(grid, alpha, 0.0)?.estimate(opts.estimator, n_samples, seed, opts.exec)?;
    Ok(ConstantEstimate {
        kind: ConstantKind::PickandsWindow,
        alpha,
        a: None,
        window: [0.0, horizon],
        grid_step,
        estimate: st.mean(),
        std_error: st.std_error(),
        n_samples,
        estimator: opts.estimator,
        downward_biased: true,
        ladder: Vec::new(),
    })
}

/// `P_α^a[−S1,S2]` with the default estimator (crude).
pub fn piterbarg_window(
    alpha: f64,
    a: f64,
    s1: f64,
    s2: f64,
    grid_step: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ConstantEstimate> {
    piterbarg_window_with(alpha, a, s1, s2, grid_step, n_samples, seed, WindowOptions::new(Estimator::Crude))
}

#[allow(clippy::too_many_arguments)]
pub fn piterbarg_window_with(
    alpha: f64,
    a: f64,
    s1: f64,
    s2: f64,
    grid_step: f64,
    n_samples: usize,
    seed: u64,
    opts: WindowOptions,
) -> Result<ConstantEstimate> {
    check_alpha(alpha)?;
    check_positive("Piterbarg parameter a", a)?;
    check_positive("grid step", grid_step)?;
    let grid = TimeGrid::window(s1, s2, grid_step)?;
    let st = WindowRun::new(grid, alpha, a)?.estimate(opts.estimator, n_samples, seed, opts.exec)?;
    Ok(ConstantEstimate {
        kind: ConstantKind::PiterbargWindow,
        alpha,
        a: Some(a),
        window: [-s1, s2],
        grid_step,
        estimate: st.mean(),
        std_error: st.std_error(),
        n_samples,
        estimator: opts.estimator,
        downward_biased: true,
        ladder: Vec::new(),
    })
}

fn check_ladder(policy: &LadderPolicy) -> Result<()> {
    if policy.windows.is_empty() {
        return Err(Error::domain("window ladder is empty"));
    }
    if policy.windows.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("window ladder must be strictly increasing"));
    }
    check_positive("grid step", policy.grid_step)
}

/// `H_α = lim H_α[0,T]/T`: least-squares slope of `H_α[0,T]` against `T`
/// over the ladder (a single rung reports `H_α[0,T]/T`).
pub fn pickands_limit(alpha: f64, policy: &LadderPolicy, seed: u64) -> Result<ConstantEstimate> {
    check_ladder(policy)?;
    let opts = WindowOptions {
        estimator: policy.estimator.unwrap_or(Estimator::MixtureTilt),
        exec: policy.exec,
    };
    let ladder = policy
        .windows
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let e = pickands_window_with(alpha, t, policy.grid_step, policy.n_samples, derive_seed(seed, i as u64), opts)?;
            Ok(LadderPoint {
                window: t,
                estimate: e.estimate,
                std_error: e.std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (slope, se) = fit_slope(&ladder);
    Ok(ConstantEstimate {
        kind: ConstantKind::PickandsLimit,
        alpha,
        a: None,
        window: [0.0, *policy.windows.last().unwrap()],
        grid_step: policy.grid_step,
        estimate: slope,
        std_error: se,
        n_samples: policy.n_samples * policy.windows.len(),
        estimator: opts.estimator,
        downward_biased: true,
        ladder,
    })
}

/// Ordinary least-squares slope of `estimate` on `window`, with the standard
/// error propagated from independent rung errors.
fn fit_slope(ladder: &[LadderPoint]) -> (f64, f64) {
    if ladder.len() == 1 {
        let p = ladder[0];
        return (p.estimate / p.window, p.std_error / p.window);
    }
    let n = ladder.len() as f64;
    let mean_t = ladder.iter().map(|p| p.window).sum::<f64>() / n;
    let mean_y = ladder.iter().map(|p| p.estimate).sum::<f64>() / n;
    let sxx: f64 = ladder.iter().map(|p| (p.window - mean_t).powi(2)).sum();
    let slope = ladder.iter().map(|p| (p.window - mean_t) * (p.estimate - mean_y)).sum::<f64>() / sxx;
    let var: f64 = ladder
        .iter()
        .map(|p| ((p.window - mean_t) / sxx).powi(2) * p.std_error.powi(2))
        .sum();
    (slope, var.sqrt())
}

/// `P_α^a` (one-sided, `[0,S]`) or `P̃_α^a` (two-sided, `[−S,S]`): the
/// largest-window estimate, with the ladder as a convergence diagnostic.
///
/// With the crude estimator all rungs are evaluated on prefixes (or centred
/// sub-windows) of the same sampled paths, so the ladder is nondecreasing.
pub fn piterbarg_limit(alpha: f64, a: f64, sidedness: Sidedness, policy: &LadderPolicy, seed: u64) -> Result<ConstantEstimate> {
    check_alpha(alpha)?;
    check_positive("Piterbarg parameter a", a)?;
    check_ladder(policy)?;
    let estimator = policy.estimator.unwrap_or(Estimator::Crude);
    let s_max = *policy.windows.last().unwrap();
    let left_of = |s: f64| if sidedness == Sidedness::TwoSided { s } else { 0.0 };
    let ladder = match estimator {
        Estimator::Crude => coupled_ladder(alpha, a, sidedness, policy, seed)?,
        Estimator::MixtureTilt => policy
            .windows
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let e = piterbarg_window_with(
                    alpha,
                    a,
                    left_of(s),
                    s,
                    policy.grid_step,
                    policy.n_samples,
                    derive_seed(seed, i as u64),
                    WindowOptions {
                        estimator,
                        exec: policy.exec,
                    },
                )?;
                Ok(LadderPoint {
                    window: s,
                    estimate: e.estimate,
                    std_error: e.std_error,
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let last = *ladder.last().unwrap();
    Ok(ConstantEstimate {
        kind: match sidedness {
            Sidedness::OneSided => ConstantKind::PiterbargLimit,
            Sidedness::TwoSided => ConstantKind::PiterbargTwosided,
        },
        alpha,
        a: Some(a),
        window: [-left_of(s_max), s_max],
        grid_step: policy.grid_step,
        estimate: last.estimate,
        std_error: last.std_error,
        n_samples: policy.n_samples,
        estimator,
        downward_biased: true,
        ladder,
    })
}

/// Crude estimates for every rung from one set of paths on the largest window.
fn coupled_ladder(alpha: f64, a: f64, sidedness: Sidedness, policy: &LadderPolicy, seed: u64) -> Result<Vec<LadderPoint>> {
    let h = policy.grid_step;
    let s_max = *policy.windows.last().unwrap();
    let two_sided = sidedness == Sidedness::TwoSided;
    let grid = TimeGrid::window(if two_sided { s_max } else { 0.0 }, s_max, h)?;
    let run = WindowRun::new(grid, alpha, a)?;
    let origin = run.sampler.origin();
    let half_widths = policy
        .windows
        .iter()
        .map(|&s| crate::fbm::steps_in(s, h))
        .collect::<Result<Vec<_>>>()?;
    let len = grid.count();
    let rungs = half_widths.len();
    let chunks = run_chunks(policy.exec, policy.n_samples, seed, |_, count, rng| -> Result<Vec<RunningStats>> {
        let mut scratch = run.sampler.scratch();
        let (mut pa, mut pb) = (vec![0.0; len], vec![0.0; len]);
        let mut stats = vec![RunningStats::new(); rungs];
        let mut z = vec![0.0; len];
        let mut left = count;
        while left > 0 {
            run.sampler.fill_pair(rng, &mut scratch, &mut pa, &mut pb);
            for path in [&pa, &pb].into_iter().take(left) {
                for k in 0..len {
                    z[k] = std::f64::consts::SQRT_2 * path[k] - run.var[k] - run.penalty[k];
                }
                // Expand outwards from the origin so each rung extends the previous maximum.
                let mut m = z[origin];
                let mut reach = 0;
                for (r, &w) in half_widths.iter().enumerate() {
                    for d in reach + 1..=w {
                        m = m.max(z[origin + d]);
                        if two_sided {
                            m = m.max(z[origin - d]);
                        }
                    }
                    reach = reach.max(w);
                    guard(m)?;
                    stats[r].push(m.exp());
                }
            }
            left = left.saturating_sub(2);
        }
        Ok(stats)
    });
    let mut total = vec![RunningStats::new(); rungs];
    for c in chunks {
        for (t, s) in total.iter_mut().zip(c?) {
            t.merge(&s);
        }
    }
    Ok(policy
        .windows
        .iter()
        .zip(total)
        .map(|(&s, st)| LadderPoint {
            window: s,
            estimate: st.mean(),
            std_error: st.std_error(),
        })
        .collect())
}
