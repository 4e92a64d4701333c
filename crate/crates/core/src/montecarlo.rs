//! Crude Monte Carlo for `ψ_{γ,T}(u) = P(sup_{[0,T]} W_γ > u)` and for the
//! ratio `R_{γ,T}(u) = ψ_{γ,T}(u)/ψ_{0,T}(u)`.
//!
//! Paths are exact fBm samples on a uniform grid, so estimates carry the
//! downward grid bias of the discrete supremum. Infinite horizons are
//! truncated at `T_eff = κ·u·H/(c(1−H))`.

use serde::Serialize;

use crate::asymptotics::std_normal_tail;
use crate::error::{Error, Result};
use crate::exec::{run_chunks, ExecMode};
use crate::fbm::{steps_in, FbmSampler, HurstIndex};
use crate::reflected::{reflected_suprema, Horizon, ProcessParams};
use crate::stats::normal_quantile_two_sided;

/// Largest number of grid steps per simulated path.
pub const MAX_PATH_STEPS: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McOptions {
    pub ci_level: f64,
    #[serde(skip)]
    pub exec: ExecMode,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            ci_level: 0.95,
            exec: ExecMode::default(),
        }
    }
}

/// Truncation rule for infinite horizons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonPolicy {
    pub kappa: f64,
    /// Also simulate on `[0, 2·T_eff]` (same paths) and compare.
    pub doubling_check: bool,
}

impl Default for HorizonPolicy {
    fn default() -> Self {
        HorizonPolicy {
            kappa: 4.0,
            doubling_check: true,
        }
    }
}

impl HorizonPolicy {
    /// `κ·u·H/(c(1−H))`: `κ` times the location of the variance maximizer in
    /// original time.
    pub fn effective_horizon(&self, u: f64, hurst: f64, c: f64) -> f64 {
        self.kappa * u * hurst / (c * (1.0 - hurst))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationInfo {
    pub kappa: f64,
    /// `T_eff` before rounding up to the grid.
    pub t_eff: f64,
    pub doubled_probability: Option<f64>,
    pub doubled_std_error: Option<f64>,
    /// `|p̂(2T_eff) − p̂(T_eff)| < CI half-width of p̂(T_eff)`.
    pub doubling_agrees: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    pub probability: f64,
    /// `√(p̂(1−p̂)/n)`
    pub std_error: f64,
    pub n_samples: usize,
    pub ci_level: f64,
    pub ci_half_width: f64,
    pub horizon_used: f64,
    pub grid_step: f64,
    pub params: ProcessParams,
    pub u: f64,
    /// Set when the horizon was truncated, so the target is underestimated.
    pub lower_bound: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationInfo>,
}

impl TailEstimate {
    pub fn ci(&self) -> (f64, f64) {
        (
            (self.probability - self.ci_half_width).max(0.0),
            (self.probability + self.ci_half_width).min(1.0),
        )
    }

    /// Whether `value` lies within `k` standard errors.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.probability - value).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioEstimate {
    /// `ψ̂_{γ,T}(u)`
    pub numerator: TailEstimate,
    /// `ψ̂_{0,T}(u)` from the same paths.
    pub denominator: TailEstimate,
    pub ratio: f64,
    /// Delta method on the coupled indicator pairs.
    pub std_error: f64,
}

/// Grid and reporting plan for one simulation run.
struct Plan {
    steps: usize,
    step: f64,
    /// Prefix lengths (in points) at which suprema are tallied.
    prefixes: Vec<usize>,
    gammas: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct Tally {
    /// `hits[g·m + j]`
    hits: Vec<u64>,
    /// Paths where both `gammas[0]` and `gammas[1]` exceed at the last prefix.
    joint: u64,
}

fn simulate(hurst: HurstIndex, c: f64, plan: &Plan, u: f64, n: usize, seed: u64, exec: ExecMode) -> Result<Tally> {
    if plan.steps > MAX_PATH_STEPS {
        return Err(Error::Resource {
            what: "grid points per path",
            size: plan.steps + 1,
            limit: MAX_PATH_STEPS + 1,
        });
    }
    let sampler = FbmSampler::new(plan.steps, plan.step, hurst)?;
    let m = plan.prefixes.len();
    let cells = plan.gammas.len() * m;
    let chunks = run_chunks(exec, n, seed, |_, count, rng| {
        let mut scratch = sampler.scratch();
        let (mut a, mut b) = (vec![0.0; sampler.len()], vec![0.0; sampler.len()]);
        let mut sup = vec![0.0; cells];
        let mut tally = Tally {
            hits: vec![0; cells],
            joint: 0,
        };
        let mut left = count;
        while left > 0 {
            sampler.fill_pair(rng, &mut scratch, &mut a, &mut b);
            for path in [&a, &b].into_iter().take(left) {
                reflected_suprema(path, plan.step, c, &plan.gammas, &plan.prefixes, &mut sup);
                for (h, s) in tally.hits.iter_mut().zip(&sup) {
                    *h += (*s > u) as u64;
                }
                if plan.gammas.len() >= 2 {
                    tally.joint += (sup[m - 1] > u && sup[2 * m - 1] > u) as u64;
                }
            }
            left = left.saturating_sub(2);
        }
        tally
    });
    let mut total = Tally {
        hits: vec![0; cells],
        joint: 0,
    };
    for t in chunks {
        for (a, b) in total.hits.iter_mut().zip(t.hits) {
            *a += b;
        }
        total.joint += t.joint;
    }
    Ok(total)
}

fn check_common(u: f64, n: usize, grid_step: f64, opts: &McOptions) -> Result<()> {
    if !u.is_finite() {
        return Err(Error::domain(format!("u must be finite, got {u}")));
    }
    if n == 0 {
        return Err(Error::domain("n_samples must be positive"));
    }
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(Error::domain(format!("grid step must be > 0, got {grid_step}")));
    }
    if !(opts.ci_level > 0.0 && opts.ci_level < 1.0) {
        return Err(Error::domain(format!("ci level must lie in (0, 1), got {}", opts.ci_level)));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn tail_from_hits(
    hits: u64,
    n: usize,
    opts: &McOptions,
    horizon_used: f64,
    grid_step: f64,
    params: ProcessParams,
    u: f64,
    truncation: Option<TruncationInfo>,
) -> TailEstimate {
    let p = hits as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    TailEstimate {
        probability: p,
        std_error: se,
        n_samples: n,
        ci_level: opts.ci_level,
        ci_half_width: normal_quantile_two_sided(opts.ci_level) * se,
        horizon_used,
        grid_step,
        params,
        u,
        lower_bound: truncation.is_some(),
        truncation,
    }
}

/// `ψ̂_{γ,T}(u)` for a finite horizon; `grid_step` must divide `T`.
pub fn estimate_tail(params: &ProcessParams, u: f64, n_samples: usize, grid_step: f64, seed: u64) -> Result<TailEstimate> {
    estimate_tail_with(params, u, n_samples, grid_step, seed, &McOptions::default())
}

pub fn estimate_tail_with(
    params: &ProcessParams,
    u: f64,
    n_samples: usize,
    grid_step: f64,
    seed: u64,
    opts: &McOptions,
) -> Result<TailEstimate> {
    check_common(u, n_samples, grid_step, opts)?;
    let t = finite(params)?;
    let steps = steps_in(t, grid_step)?;
    let plan = Plan {
        steps,
        step: grid_step,
        prefixes: vec![steps + 1],
        gammas: vec![params.gamma],
    };
    let tally = simulate(params.hurst, params.c, &plan, u, n_samples, seed, opts.exec)?;
    Ok(tail_from_hits(tally.hits[0], n_samples, opts, t, grid_step, *params, u, None))
}

fn finite(params: &ProcessParams) -> Result<f64> {
    params
        .horizon
        .finite()
        .ok_or_else(|| Error::domain("this estimator needs a finite horizon; use the infinite-horizon variant"))
}

/// Number of steps covering `T_eff`.
fn truncation_steps(params: &ProcessParams, u: f64, grid_step: f64, policy: &HorizonPolicy) -> Result<(f64, usize)> {
    let h = params.hurst.value();
    if params.gamma >= 1.0 {
        return Err(Error::domain(
            "γ = 1 with an infinite horizon: the workload supremum is infinite almost surely",
        ));
    }
    if h >= 1.0 {
        return Err(Error::domain(
            "H = 1 on an infinite horizon has no finite maximizer; the tail is Ψ(c) exactly",
        ));
    }
    if !(u > 0.0) {
        return Err(Error::domain(format!("the truncation rule needs u > 0, got {u}")));
    }
    if !(policy.kappa > 0.0 && policy.kappa.is_finite()) {
        return Err(Error::domain(format!("kappa must be > 0, got {}", policy.kappa)));
    }
    let t_eff = policy.effective_horizon(u, h, params.c);
    let steps = ((t_eff / grid_step) - 1e-9).ceil().max(1.0);
    if steps > MAX_PATH_STEPS as f64 {
        return Err(Error::Resource {
            what: "grid points per path",
            size: steps.min(usize::MAX as f64 / 4.0) as usize,
            limit: MAX_PATH_STEPS,
        });
    }
    Ok((t_eff, steps as usize))
}

/// `ψ̂_{γ,∞}(u)` on the truncated horizon `[0, T_eff]`, flagged as a lower
/// bound. With the doubling check the same paths are extended to
/// `2·T_eff` and both estimates are reported.
pub fn estimate_tail_infinite(
    params: &ProcessParams,
    u: f64,
    n_samples: usize,
    grid_step: f64,
    policy: &HorizonPolicy,
    seed: u64,
) -> Result<TailEstimate> {
    estimate_tail_infinite_with(params, u, n_samples, grid_step, policy, seed, &McOptions::default())
}

pub fn estimate_tail_infinite_with(
    params: &ProcessParams,
    u: f64,
    n_samples: usize,
    grid_step: f64,
    policy: &HorizonPolicy,
    seed: u64,
    opts: &McOptions,
) -> Result<TailEstimate> {
    check_common(u, n_samples, grid_step, opts)?;
    let (t_eff, steps) = truncation_steps(params, u, grid_step, policy)?;
    let mut prefixes = vec![steps + 1];
    if policy.doubling_check {
        prefixes.push(2 * steps + 1);
    }
    let plan = Plan {
        steps: *prefixes.last().unwrap() - 1,
        step: grid_step,
        prefixes,
        gammas: vec![params.gamma],
    };
    let tally = simulate(params.hurst, params.c, &plan, u, n_samples, seed, opts.exec)?;
    let horizon_used = steps as f64 * grid_step;
    let mut trunc = TruncationInfo {
        kappa: policy.kappa,
        t_eff,
        doubled_probability: None,
        doubled_std_error: None,
        doubling_agrees: None,
    };
    let mut est = tail_from_hits(tally.hits[0], n_samples, opts, horizon_used, grid_step, *params, u, Some(trunc));
    if policy.doubling_check {
        let d = tail_from_hits(tally.hits[1], n_samples, opts, 2.0 * horizon_used, grid_step, *params, u, None);
        trunc.doubled_probability = Some(d.probability);
        trunc.doubled_std_error = Some(d.std_error);
        trunc.doubling_agrees = Some((d.probability - est.probability).abs() < est.ci_half_width);
        est.truncation = Some(trunc);
    }
    Ok(est)
}

/// Coupled estimate of `ψ_{γ,T}(u)/ψ_{0,T}(u)`: both indicators come from
/// the same paths. `policy` applies only to infinite horizons (without the
/// doubling check).
pub fn estimate_ratio(
    params: &ProcessParams,
    u: f64,
    n_samples: usize,
    grid_step: f64,
    policy: &HorizonPolicy,
    seed: u64,
) -> Result<RatioEstimate> {
    estimate_ratio_with(params, u, n_samples, grid_step, policy, seed, &McOptions::default())
}

pub fn estimate_ratio_with(
    params: &ProcessParams,
    u: f64,
    n_samples: usize,
    grid_step: f64,
    policy: &HorizonPolicy,
    seed: u64,
    opts: &McOptions,
) -> Result<RatioEstimate> {
    check_common(u, n_samples, grid_step, opts)?;
    let (steps, horizon_used, trunc) = match params.horizon {
        Horizon::Finite(t) => (steps_in(t, grid_step)?, t, None),
        Horizon::Infinite => {
            let (t_eff, steps) = truncation_steps(params, u, grid_step, policy)?;
            let info = TruncationInfo {
                kappa: policy.kappa,
                t_eff,
                doubled_probability: None,
                doubled_std_error: None,
                doubling_agrees: None,
            };
            (steps, steps as f64 * grid_step, Some(info))
        }
    };
    let plan = Plan {
        steps,
        step: grid_step,
        prefixes: vec![steps + 1],
        gammas: vec![params.gamma, 0.0],
    };
    let tally = simulate(params.hurst, params.c, &plan, u, n_samples, seed, opts.exec)?;
    let free = params.with_gamma(0.0)?;
    let num = tail_from_hits(tally.hits[0], n_samples, opts, horizon_used, grid_step, *params, u, trunc);
    let den = tail_from_hits(tally.hits[1], n_samples, opts, horizon_used, grid_step, free, u, trunc);
    if tally.hits[1] == 0 {
        return Err(Error::InsufficientSamples(format!(
            "no path of the free process exceeded u = {u} in {n_samples} samples; lower u or raise n_samples"
        )));
    }
    let (pg, p0) = (num.probability, den.probability);
    let pj = tally.joint as f64 / n_samples as f64;
    let ratio = pg / p0;
    let var = (pg * (1.0 - pg) / (p0 * p0) + ratio * ratio * p0 * (1.0 - p0) / (p0 * p0) - 2.0 * ratio * (pj - pg * p0) / (p0 * p0))
        / n_samples as f64;
    Ok(RatioEstimate {
        numerator: num,
        denominator: den,
        ratio,
        std_error: var.max(0.0).sqrt(),
    })
}

/// Coupled step-halving diagnostic: the same paths are sampled at
/// `grid_step / 2` and read on both grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementCheck {
    pub coarse_step: f64,
    pub coarse: f64,
    pub fine: f64,
    /// `fine − coarse`, never negative since the coarse grid is a subset.
    pub difference: f64,
    /// CI half-width of the coarse estimate.
    pub ci_half_width: f64,
    pub agrees: bool,
}

/// Step-halving check for `ψ̂_{γ,T}(u)`. Infinite horizons use the truncated
/// horizon from `policy`.
pub fn refinement_check(
    params: &ProcessParams,
    u: f64,
    n_samples: usize,
    grid_step: f64,
    policy: &HorizonPolicy,
    seed: u64,
    opts: &McOptions,
) -> Result<RefinementCheck> {
    check_common(u, n_samples, grid_step, opts)?;
    let coarse_steps = match params.horizon {
        Horizon::Finite(t) => steps_in(t, grid_step)?,
        Horizon::Infinite => truncation_steps(params, u, grid_step, policy)?.1,
    };
    let steps = 2 * coarse_steps;
    if steps > MAX_PATH_STEPS {
        return Err(Error::Resource {
            what: "grid points per path",
            size: steps + 1,
            limit: MAX_PATH_STEPS + 1,
        });
    }
    let fine_step = grid_step / 2.0;
    let sampler = FbmSampler::new(steps, fine_step, params.hurst)?;
    let gammas = [params.gamma];
    let chunks = run_chunks(opts.exec, n_samples, seed, |_, count, rng| {
        let mut scratch = sampler.scratch();
        let (mut a, mut b) = (vec![0.0; sampler.len()], vec![0.0; sampler.len()]);
        let mut coarse = vec![0.0; coarse_steps + 1];
        let mut sup = [0.0];
        let mut hits = (0u64, 0u64);
        let mut left = count;
        while left > 0 {
            sampler.fill_pair(rng, &mut scratch, &mut a, &mut b);
            for path in [&a, &b].into_iter().take(left) {
                reflected_suprema(path, fine_step, params.c, &gammas, &[steps + 1], &mut sup);
                hits.1 += (sup[0] > u) as u64;
                for (x, v) in coarse.iter_mut().zip(path.iter().step_by(2)) {
                    *x = *v;
                }
                reflected_suprema(&coarse, grid_step, params.c, &gammas, &[coarse_steps + 1], &mut sup);
                hits.0 += (sup[0] > u) as u64;
            }
            left = left.saturating_sub(2);
        }
        hits
    });
    let (hc, hf) = chunks.into_iter().fold((0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    let n = n_samples as f64;
    let (coarse, fine) = (hc as f64 / n, hf as f64 / n);
    let ci_half_width = normal_quantile_two_sided(opts.ci_level) * (coarse * (1.0 - coarse) / n).sqrt();
    Ok(RefinementCheck {
        coarse_step: grid_step,
        coarse,
        fine,
        difference: fine - coarse,
        ci_half_width,
        agrees: fine - coarse < ci_half_width,
    })
}

/// Closed-form Brownian (`H = ½`) tail probabilities:
///
/// * `γ = 0, T = ∞`: `e^{−2cu}`
/// * `0 < γ < 1, T = ∞`: `1 − (1 − e^{−2cu})^{1/(1−γ)}`
/// * `γ = 0, T < ∞`: `Ψ((u+cT)/√T) + e^{−2cu}·Ψ((u−cT)/√T)`
pub fn exact_bm_oracles(u: f64, c: f64, gamma: f64, horizon: Horizon) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("drift c must be > 0, got {c}")));
    }
    if !u.is_finite() {
        return Err(Error::domain(format!("u must be finite, got {u}")));
    }
    if u < 0.0 {
        return Ok(1.0);
    }
    let free_inf = (-2.0 * c * u).exp();
    match (gamma, horizon) {
        (0.0, Horizon::Infinite) => Ok(free_inf),
        (g, Horizon::Infinite) if g > 0.0 && g < 1.0 => Ok(1.0 - (1.0 - free_inf).powf(1.0 / (1.0 - g))),
        (g, Horizon::Finite(t)) if g == 0.0 && t > 0.0 => {
            let s = t.sqrt();
            Ok(std_normal_tail((u + c * t) / s) + free_inf * std_normal_tail((u - c * t) / s))
        }
        _ => Err(Error::Unsupported(format!(
            "no closed-form Brownian tail for γ = {gamma}, T = {horizon}"
        ))),
    }
}

/// Tail of the degenerate case `H = 1` (`X(t) = N·t`), any `γ`:
/// `Ψ(c + u/T)` on `[0,T]` and `Ψ(c)` on the infinite horizon, for `u > 0`.
pub fn degenerate_oracle(u: f64, c: f64, horizon: Horizon) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("drift c must be > 0, got {c}")));
    }
    if !(u > 0.0) {
        return Err(Error::domain(format!("u must be > 0, got {u}")));
    }
    Ok(match horizon {
        Horizon::Finite(t) => std_normal_tail(c + u / t),
        Horizon::Infinite => std_normal_tail(c),
    })
}
