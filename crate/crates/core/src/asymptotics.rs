//! Closed-form tail asymptotics for γ-reflected fBm and for smooth Gaussian
//! fields, together with the variance function of the standardized field and
//! its maximizer.
//!
//! Every formula has the shape `prefactor · Ψ(x)`, where the prefactor holds
//! the Pickands/Piterbarg constants and any power of the argument. Constants
//! come from a [`ConstantProvider`], which knows the closed forms for
//! `α ∈ {1, 2}` and otherwise uses attached simulation estimates.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::Serialize;
use libm::erfc;
use statrs::function::gamma::gamma;

use crate::constants::{self, ConstantEstimate, ConstantKind, LadderPolicy, Sidedness};
use crate::error::{Error, Result};
use crate::exec::derive_seed;
use crate::reflected::Horizon;

/// `Ψ(x) = 1 − Φ(x)` through `erfc`, accurate far into the upper tail.
pub fn std_normal_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `ln Ψ(x)`, finite for arguments where `Ψ` itself underflows.
pub fn ln_std_normal_tail(x: f64) -> f64 {
    if x < 30.0 {
        return std_normal_tail(x).ln();
    }
    let r = 1.0 / (x * x);
    let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
    -0.5 * x * x - (x * (2.0 * PI).sqrt()).ln() + series.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Exact,
    Estimated,
}

/// One constant as it entered a formula.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantUse {
    pub name: String,
    pub value: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticValue {
    /// `prefactor · Ψ(psi_argument)`
    pub value: f64,
    /// Includes the power term `psi_argument^power_exponent` (or `u^…`).
    pub prefactor: f64,
    pub psi_argument: f64,
    pub power_exponent: f64,
    pub constants_used: Vec<ConstantUse>,
    /// Case label for the two-parameter field formula.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<&'static str>,
}

impl AsymptoticValue {
    pub(crate) fn new(prefactor: f64, psi_argument: f64, power_exponent: f64, constants_used: Vec<ConstantUse>) -> Self {
        AsymptoticValue {
            value: prefactor * std_normal_tail(psi_argument),
            prefactor,
            psi_argument,
            power_exponent,
            constants_used,
            case: None,
        }
    }

    /// `ln value`, usable where `value` underflows.
    pub fn ln_value(&self) -> f64 {
        self.prefactor.ln() + ln_std_normal_tail(self.psi_argument)
    }
}

/// A constant a formula needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ConstantRequest {
    /// `H_α`
    Pickands { alpha: f64 },
    /// `P_α^a`
    Piterbarg { alpha: f64, a: f64 },
    /// `P̃_α^a`
    PiterbargTwoSided { alpha: f64, a: f64 },
}

impl fmt::Display for ConstantRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ConstantRequest::Pickands { alpha } => write!(f, "H_{alpha}"),
            ConstantRequest::Piterbarg { alpha, a } => write!(f, "P_{alpha}^{a}"),
            ConstantRequest::PiterbargTwoSided { alpha, a } => write!(f, "P~_{alpha}^{a}"),
        }
    }
}

impl ConstantRequest {
    fn key(&self) -> Key {
        match *self {
            ConstantRequest::Pickands { alpha } => (KeyKind::Pickands, alpha.to_bits(), 0),
            ConstantRequest::Piterbarg { alpha, a } => (KeyKind::Piterbarg, alpha.to_bits(), a.to_bits()),
            ConstantRequest::PiterbargTwoSided { alpha, a } => (KeyKind::TwoSided, alpha.to_bits(), a.to_bits()),
        }
    }

    /// Closed forms: `H_1`, `H_2`, `P_1^a`, `P_2^a`, and the two-sided limits
    /// for `α = 1` (independent halves, each supremum `Exp(1+a)`) and `α = 2`
    /// (`B_2(t) = N·t`).
    pub fn exact(&self) -> Option<f64> {
        match *self {
            ConstantRequest::Pickands { alpha } => constants::exact_pickands(alpha).ok(),
            ConstantRequest::Piterbarg { alpha, a } => constants::exact_constant(alpha, a).ok(),
            ConstantRequest::PiterbargTwoSided { alpha, a } if a > 0.0 => {
                if alpha == 1.0 {
                    Some(2.0 * (1.0 + a).powi(2) / (a * (1.0 + 2.0 * a)))
                } else if alpha == 2.0 {
                    Some(((1.0 + a) / a).sqrt())
                } else {
                    None
                }
            }
            ConstantRequest::PiterbargTwoSided { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum KeyKind {
    Pickands,
    Piterbarg,
    TwoSided,
}

type Key = (KeyKind, u64, u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderMode {
    #[default]
    ExactOnly,
    SimulationBacked,
}

/// Source of Pickands and Piterbarg constants.
#[derive(Debug, Clone, Default)]
pub struct ConstantProvider {
    mode: ProviderMode,
    attached: BTreeMap<Key, ConstantEstimate>,
}

impl ConstantProvider {
    pub fn exact_only() -> Self {
        ConstantProvider::default()
    }

    pub fn simulation_backed() -> Self {
        ConstantProvider {
            mode: ProviderMode::SimulationBacked,
            attached: BTreeMap::new(),
        }
    }

    pub fn mode(&self) -> ProviderMode {
        self.mode
    }

    /// Registers a limit-constant estimate. Window estimates are rejected.
    pub fn attach(&mut self, estimate: ConstantEstimate) -> Result<()> {
        if self.mode == ProviderMode::ExactOnly {
            return Err(Error::domain("an exact-only provider does not accept estimates"));
        }
        let req = match (estimate.kind, estimate.a) {
            (ConstantKind::PickandsLimit, _) => ConstantRequest::Pickands { alpha: estimate.alpha },
            (ConstantKind::PiterbargLimit, Some(a)) => ConstantRequest::Piterbarg { alpha: estimate.alpha, a },
            (ConstantKind::PiterbargTwosided, Some(a)) => ConstantRequest::PiterbargTwoSided { alpha: estimate.alpha, a },
            (kind, _) => return Err(Error::domain(format!("cannot attach a {kind:?} estimate as a limit constant"))),
        };
        self.attached.insert(req.key(), estimate);
        Ok(())
    }

    pub fn estimates(&self) -> impl Iterator<Item = &ConstantEstimate> {
        self.attached.values()
    }

    pub fn lookup(&self, req: ConstantRequest) -> Option<ConstantUse> {
        let name = req.to_string();
        if let Some(value) = req.exact() {
            return Some(ConstantUse {
                name,
                value,
                provenance: Provenance::Exact,
            });
        }
        self.attached.get(&req.key()).map(|e| ConstantUse {
            name,
            value: e.estimate,
            provenance: Provenance::Estimated,
        })
    }

    /// Looks up every request, reporting all missing ones at once.
    pub fn lookup_all(&self, reqs: &[ConstantRequest]) -> Result<Vec<ConstantUse>> {
        let mut found = Vec::with_capacity(reqs.len());
        let mut missing = Vec::new();
        for &r in reqs {
            match self.lookup(r) {
                Some(c) => found.push(c),
                None => missing.push(r),
            }
        }
        if missing.is_empty() {
            Ok(found)
        } else {
            Err(Error::MissingConstant(missing))
        }
    }

    /// Estimates and attaches every request that has neither a closed form
    /// nor an attached estimate.
    pub fn populate(&mut self, reqs: &[ConstantRequest], policy: &LadderPolicy, seed: u64) -> Result<()> {
        let missing: Vec<ConstantRequest> = reqs.iter().copied().filter(|r| self.lookup(*r).is_none()).collect();
        if missing.is_empty() {
            return Ok(());
        }
        if self.mode == ProviderMode::ExactOnly {
            return Err(Error::MissingConstant(missing));
        }
        for (i, req) in missing.into_iter().enumerate() {
            let s = derive_seed(seed, i as u64);
            let est = match req {
                ConstantRequest::Pickands { alpha } => constants::pickands_limit(alpha, policy, s)?,
                ConstantRequest::Piterbarg { alpha, a } => constants::piterbarg_limit(alpha, a, Sidedness::OneSided, policy, s)?,
                ConstantRequest::PiterbargTwoSided { alpha, a } => {
                    constants::piterbarg_limit(alpha, a, Sidedness::TwoSided, policy, s)?
                }
            };
            log::info!("estimated {req} = {} (se {})", est.estimate, est.std_error);
            self.attach(est)?;
        }
        Ok(())
    }
}

fn check_hurst_open(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("H must lie in (0, 1), got {h}")))
    }
}

fn check_hurst_closed(h: f64) -> Result<()> {
    if h > 0.0 && h <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("H must lie in (0, 1], got {h}")))
    }
}

fn check_pos(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be > 0, got {v}")))
    }
}

fn finite_horizon(horizon: f64) -> Result<f64> {
    check_pos("horizon T", horizon)?;
    Ok(horizon)
}

/// `c^H u^{1−H} / (H^H (1−H)^{1−H})`
fn infinite_argument(u: f64, h: f64, c: f64) -> f64 {
    c.powf(h) * u.powf(1.0 - h) / (h.powf(h) * (1.0 - h).powf(1.0 - h))
}

/// `2^{½−1/(2H)} · √π/√(H(1−H))`
fn infinite_base(h: f64) -> f64 {
    2f64.powf(0.5 - 0.5 / h) * PI.sqrt() / (h * (1.0 - h)).sqrt()
}

/// Piterbarg parameter `(1−γ)/γ` attached to the reflection rate.
fn reflection_a(gamma: f64) -> f64 {
    (1.0 - gamma) / gamma
}

/// Constants needed by [`psi0_inf`].
pub fn psi0_inf_constants(hurst: f64) -> Vec<ConstantRequest> {
    vec![ConstantRequest::Pickands { alpha: 2.0 * hurst }]
}

/// Tail of the free process on the infinite horizon:
/// `ψ_{0,∞}(u) ≈ 2^{½−1/(2H)} √π/√(H(1−H)) · H_{2H} · x^{1/H−1} Ψ(x)`.
pub fn psi0_inf(u: f64, hurst: f64, c: f64, provider: &ConstantProvider) -> Result<AsymptoticValue> {
    check_hurst_open(hurst)?;
    check_pos("u", u)?;
    check_pos("drift c", c)?;
    let used = provider.lookup_all(&psi0_inf_constants(hurst))?;
    let x = infinite_argument(u, hurst, c);
    let p = 1.0 / hurst - 1.0;
    Ok(AsymptoticValue::new(infinite_base(hurst) * used[0].value * x.powf(p), x, p, used))
}

pub fn psi0_finite_constants(hurst: f64) -> Vec<ConstantRequest> {
    if hurst < 0.5 {
        vec![ConstantRequest::Pickands { alpha: 2.0 * hurst }]
    } else {
        Vec::new()
    }
}

/// Tail of the free process on `[0,T]`: `D_H · x^{(1−2H)₊/H} Ψ(x)`,
/// `x = (u+cT)/T^H`.
pub fn psi0_finite(u: f64, hurst: f64, c: f64, horizon: f64, provider: &ConstantProvider) -> Result<AsymptoticValue> {
    check_hurst_closed(hurst)?;
    check_pos("u", u)?;
    check_pos("drift c", c)?;
    let t = finite_horizon(horizon)?;
    let used = provider.lookup_all(&psi0_finite_constants(hurst))?;
    let d = if hurst < 0.5 {
        2f64.powf(-0.5 / hurst) * used[0].value / hurst
    } else if hurst == 0.5 {
        2.0
    } else {
        1.0
    };
    Ok(finite_value(d, u, hurst, c, t, used))
}

fn finite_value(d: f64, u: f64, hurst: f64, c: f64, t: f64, used: Vec<ConstantUse>) -> AsymptoticValue {
    let x = (u + c * t) / t.powf(hurst);
    let p = (1.0 - 2.0 * hurst).max(0.0) / hurst;
    AsymptoticValue::new(d * x.powf(p), x, p, used)
}

fn check_gamma_open(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("gamma must lie in (0, 1), got {gamma}")))
    }
}

pub fn psi_gamma_inf_constants(hurst: f64, gamma: f64) -> Vec<ConstantRequest> {
    vec![
        ConstantRequest::Pickands { alpha: 2.0 * hurst },
        ConstantRequest::Piterbarg {
            alpha: 2.0 * hurst,
            a: reflection_a(gamma),
        },
    ]
}

/// Tail of the γ-reflected process on the infinite horizon:
/// `W_H(u) Ψ(x)` with `W_H(u)` the [`psi0_inf`] prefactor times `P_{2H}^{(1−γ)/γ}`.
pub fn psi_gamma_inf(u: f64, hurst: f64, c: f64, gamma: f64, provider: &ConstantProvider) -> Result<AsymptoticValue> {
    check_hurst_open(hurst)?;
    check_gamma_open(gamma)?;
    check_pos("u", u)?;
    check_pos("drift c", c)?;
    let used = provider.lookup_all(&psi_gamma_inf_constants(hurst, gamma))?;
    let x = infinite_argument(u, hurst, c);
    let p = 1.0 / hurst - 1.0;
    let w = infinite_base(hurst) * used[0].value * used[1].value * x.powf(p);
    Ok(AsymptoticValue::new(w, x, p, used))
}

pub fn psi_gamma_finite_constants(hurst: f64, gamma: f64) -> Vec<ConstantRequest> {
    if hurst >= 0.5 {
        Vec::new()
    } else if gamma == 1.0 {
        vec![ConstantRequest::Pickands { alpha: 2.0 * hurst }]
    } else {
        psi_gamma_inf_constants(hurst, gamma)
    }
}

/// Tail of the γ-reflected process on `[0,T]`: `D_{H,γ} · x^{(1−2H)₊/H} Ψ(x)`.
/// `γ = 1` uses the workload-process constants `D_{H,1}`.
pub fn psi_gamma_finite(
    u: f64,
    hurst: f64,
    c: f64,
    gamma: f64,
    horizon: f64,
    provider: &ConstantProvider,
) -> Result<AsymptoticValue> {
    check_hurst_closed(hurst)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    check_pos("u", u)?;
    check_pos("drift c", c)?;
    let t = finite_horizon(horizon)?;
    let used = provider.lookup_all(&psi_gamma_finite_constants(hurst, gamma))?;
    let d = match (hurst.partial_cmp(&0.5), gamma == 1.0) {
        (Some(std::cmp::Ordering::Less), false) => 2f64.powf(-0.5 / hurst) * used[0].value * used[1].value / hurst,
        (Some(std::cmp::Ordering::Less), true) => 2f64.powf(-1.0 / hurst) * used[0].value.powi(2) / (hurst * hurst),
        (Some(std::cmp::Ordering::Equal), _) => 4.0 / (2.0 - gamma),
        _ => 1.0,
    };
    Ok(finite_value(d, u, hurst, c, t, used))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioConstant {
    pub value: f64,
    pub constants_used: Vec<ConstantUse>,
}

pub fn ratio_constant_constants(hurst: f64, gamma: f64, horizon: Horizon) -> Vec<ConstantRequest> {
    if horizon.is_infinite() || hurst < 0.5 {
        vec![ConstantRequest::Piterbarg {
            alpha: 2.0 * hurst,
            a: reflection_a(gamma),
        }]
    } else if hurst == 0.5 {
        vec![ConstantRequest::Piterbarg {
            alpha: 1.0,
            a: (2.0 - gamma) / gamma,
        }]
    } else {
        Vec::new()
    }
}

/// Limit `M_{H,γ,T}` of `ψ_{γ,T}(u)/ψ_{0,T}(u)` as `u → ∞`.
pub fn ratio_constant(hurst: f64, gamma: f64, horizon: Horizon, provider: &ConstantProvider) -> Result<RatioConstant> {
    check_hurst_open(hurst)?;
    check_gamma_open(gamma)?;
    if let Horizon::Finite(t) = horizon {
        finite_horizon(t)?;
    }
    let used = provider.lookup_all(&ratio_constant_constants(hurst, gamma, horizon))?;
    let value = used.first().map_or(1.0, |c| c.value);
    Ok(RatioConstant {
        value,
        constants_used: used,
    })
}

fn check_s_t(s: f64, t: f64) -> Result<()> {
    if s >= 0.0 && s <= t && t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("need 0 ≤ s ≤ t, got s = {s}, t = {t}")))
    }
}

fn check_gamma_closed(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::domain(format!("gamma must lie in [0, 1], got {gamma}")))
    }
}

/// `V_Z(s,t)`: standard deviation of `X(t) − γX(s)`, the square root of
/// `(1−γ)t^{2H} + (γ²−γ)s^{2H} + γ(t−s)^{2H}`.
pub fn variance_z(s: f64, t: f64, hurst: f64, gamma: f64) -> Result<f64> {
    check_s_t(s, t)?;
    check_hurst_closed(hurst)?;
    check_gamma_closed(gamma)?;
    Ok(var_z(s, t, 2.0 * hurst, gamma).max(0.0).sqrt())
}

fn var_z(s: f64, t: f64, two_h: f64, gamma: f64) -> f64 {
    (1.0 - gamma) * t.powf(two_h) + (gamma * gamma - gamma) * s.powf(two_h) + gamma * (t - s).powf(two_h)
}

/// `V_Y(s,t) = V_Z(s,t) / (1 + ct − cγs)`, the standard deviation of the
/// standardized field.
pub fn variance_y(s: f64, t: f64, hurst: f64, gamma: f64, c: f64) -> Result<f64> {
    check_pos("drift c", c)?;
    Ok(variance_z(s, t, hurst, gamma)? / (1.0 + c * t - c * gamma * s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Maximizer {
    pub s0: f64,
    pub t0: f64,
    pub value: f64,
}

/// Unique maximizer of `V_Y`: `(0, H/(c(1−H)))` with value `H^H(1−H)^{1−H}/c^H`.
pub fn maximizer_y(hurst: f64, c: f64) -> Result<Maximizer> {
    check_hurst_open(hurst)?;
    check_pos("drift c", c)?;
    Ok(Maximizer {
        s0: 0.0,
        t0: hurst / (c * (1.0 - hurst)),
        value: hurst.powf(hurst) * (1.0 - hurst).powf(1.0 - hurst) / c.powf(hurst),
    })
}

/// Local structure of a Gaussian field near its variance maximizer with
/// `1 − σ ≈ b1|s−s0|^β + b2(t−t0)²` and `1 − r ≈ a1|Δs|^β + a2|Δt|^β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct MixedField {
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
    pub beta: f64,
    pub s0_interior: bool,
    pub t0_interior: bool,
}

impl MixedField {
    fn hat_p(&self) -> ConstantRequest {
        let (alpha, a) = (self.beta, self.b1 / self.a1);
        if self.s0_interior {
            ConstantRequest::PiterbargTwoSided { alpha, a }
        } else {
            ConstantRequest::Piterbarg { alpha, a }
        }
    }

    pub fn constants(&self) -> Vec<ConstantRequest> {
        vec![self.hat_p(), ConstantRequest::Pickands { alpha: self.beta }]
    }
}

/// `P̂ · Î₂ · H_β · (√π a₂^{1/β} / (2√b₂)) · u^{2/β−1} · Ψ(u)`. The `b₃`
/// cross term does not enter the value.
pub fn field_tail_mixed(u: f64, f: &MixedField, provider: &ConstantProvider) -> Result<AsymptoticValue> {
    if !(f.beta > 1.0 && f.beta < 2.0) {
        return Err(Error::domain(format!("beta must lie in (1, 2), got {}", f.beta)));
    }
    for (n, v) in [("b1", f.b1), ("b2", f.b2), ("a1", f.a1), ("a2", f.a2)] {
        check_pos(n, v)?;
    }
    check_pos("u", u)?;
    let used = provider.lookup_all(&f.constants())?;
    let i2 = if f.t0_interior { 2.0 } else { 1.0 };
    let p = 2.0 / f.beta - 1.0;
    let pre = used[0].value * i2 * used[1].value * PI.sqrt() * f.a2.powf(1.0 / f.beta) / (2.0 * f.b2.sqrt()) * u.powf(p);
    Ok(AsymptoticValue::new(pre, u, p, used))
}

/// Two-parameter field with `1 − σ ≈ b1|s−s0|^{β1} + b2|t−t0|^{β2}` and
/// `1 − r ≈ a1|Δs|^{α1} + a2|Δt|^{α2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct TwoParamField {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub s0_interior: bool,
    pub t0_interior: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    /// `α < β`: Pickands-type factor.
    Pickands,
    /// `α = β`: Piterbarg-type factor.
    Piterbarg,
    /// `α > β`: no factor.
    Flat,
}

impl TwoParamField {
    fn coord(alpha: f64, beta: f64) -> Coord {
        if alpha < beta {
            Coord::Pickands
        } else if alpha == beta {
            Coord::Piterbarg
        } else {
            Coord::Flat
        }
    }

    fn case(&self) -> Result<&'static str> {
        use Coord::*;
        match (Self::coord(self.alpha1, self.beta1), Self::coord(self.alpha2, self.beta2)) {
            (Pickands, Pickands) => Ok("i"),
            (Pickands, Piterbarg) => Ok("ii"),
            (Piterbarg, Pickands) => Ok("ii-swapped"),
            (Piterbarg, Piterbarg) => Ok("iii"),
            (Flat, Flat) => Ok("iv"),
            (c1, c2) => Err(Error::Unsupported(format!(
                "no tail formula for alpha1 = {}, beta1 = {} ({c1:?}) with alpha2 = {}, beta2 = {} ({c2:?})",
                self.alpha1, self.beta1, self.alpha2, self.beta2
            ))),
        }
    }

    fn coordinates(&self) -> [(f64, f64, f64, f64, bool); 2] {
        [
            (self.alpha1, self.beta1, self.a1, self.b1, self.s0_interior),
            (self.alpha2, self.beta2, self.a2, self.b2, self.t0_interior),
        ]
    }

    pub fn constants(&self) -> Result<Vec<ConstantRequest>> {
        self.case()?;
        Ok(self
            .coordinates()
            .iter()
            .filter_map(|&(alpha, beta, a, b, interior)| match Self::coord(alpha, beta) {
                Coord::Pickands => Some(ConstantRequest::Pickands { alpha }),
                Coord::Piterbarg if interior => Some(ConstantRequest::PiterbargTwoSided { alpha, a: b / a }),
                Coord::Piterbarg => Some(ConstantRequest::Piterbarg { alpha, a: b / a }),
                Coord::Flat => None,
            })
            .collect())
    }
}

/// Dispatches on the four exponent regimes:
///
/// * i   (`α1<β1`, `α2<β2`): `Π_i H_{αi} a_i^{1/αi} b_i^{−1/βi} Î_i Γ(1/βi+1) u^{2/αi−2/βi} · Ψ(u)`
/// * ii  (`α1<β1`, `α2=β2`): first factor of i times `P̂_{α2}^{b2/a2}`
/// * iii (`α1=β1`, `α2=β2`): `P̂_{α1}^{b1/a1} P̂_{α2}^{b2/a2} Ψ(u)`
/// * iv  (`α1>β1`, `α2>β2`): `Ψ(u)`
///
/// The mirror image of ii (`α1=β1`, `α2<β2`) is evaluated by exchanging the
/// coordinates; it is inferred by symmetry rather than stated with the other
/// cases. Every other combination is rejected.
pub fn field_tail_two_param(u: f64, f: &TwoParamField, provider: &ConstantProvider) -> Result<AsymptoticValue> {
    for (n, v) in [
        ("alpha1", f.alpha1),
        ("alpha2", f.alpha2),
        ("beta1", f.beta1),
        ("beta2", f.beta2),
    ] {
        if !(v > 0.0 && v <= 2.0) {
            return Err(Error::domain(format!("{n} must lie in (0, 2], got {v}")));
        }
    }
    for (n, v) in [("a1", f.a1), ("a2", f.a2), ("b1", f.b1), ("b2", f.b2)] {
        check_pos(n, v)?;
    }
    check_pos("u", u)?;
    let case = f.case()?;
    let used = provider.lookup_all(&f.constants()?)?;
    let mut consts = used.iter();
    let mut prefactor = 1.0;
    let mut power = 0.0;
    for (alpha, beta, a, b, interior) in f.coordinates() {
        match TwoParamField::coord(alpha, beta) {
            Coord::Pickands => {
                let h = consts.next().expect("constant list matches case").value;
                let i_hat = if interior { 2.0 } else { 1.0 };
                let p = 2.0 / alpha - 2.0 / beta;
                prefactor *= h * a.powf(1.0 / alpha) * b.powf(-1.0 / beta) * i_hat * gamma(1.0 / beta + 1.0) * u.powf(p);
                power += p;
            }
            Coord::Piterbarg => prefactor *= consts.next().expect("constant list matches case").value,
            Coord::Flat => {}
        }
    }
    let mut v = AsymptoticValue::new(prefactor, u, power, used);
    v.case = Some(case);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact() -> ConstantProvider {
        ConstantProvider::exact_only()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn normal_tail_values() {
        assert_eq!(std_normal_tail(0.0), 0.5);
        assert!((std_normal_tail(2.0) - 0.022750131948179195).abs() < 1e-15);
        assert_eq!(std_normal_tail(f64::INFINITY), 0.0);
        assert_eq!(std_normal_tail(f64::NEG_INFINITY), 1.0);
        assert!(std_normal_tail(-40.0) == 1.0);
        // Far tail stays positive where 1 − Φ would cancel to zero.
        assert!(std_normal_tail(10.0) > 7.6e-24 && std_normal_tail(10.0) < 7.7e-24);
    }

    #[test]
    fn ln_tail_is_continuous_across_switch() {
        let below = ln_std_normal_tail(30.0 - 1e-9);
        let above = ln_std_normal_tail(30.0 + 1e-9);
        assert!((below - above).abs() < 1e-6);
        assert!(close(ln_std_normal_tail(35.0), std_normal_tail(35.0).ln(), 1e-12));
        assert!(ln_std_normal_tail(500.0).is_finite());
    }

    #[test]
    fn psi0_inf_argument_examples() {
        let v = psi0_inf(1.0, 0.5, 1.0, &exact()).unwrap();
        assert!((v.psi_argument - 2.0).abs() < 1e-15);
        let v = psi0_inf(1.0, 0.5, 4.0, &exact()).unwrap();
        assert!((v.psi_argument - 4.0).abs() < 1e-14);
        let v = psi0_inf(3.0, 0.3, 2.0, &{
            let mut p = ConstantProvider::simulation_backed();
            p.attach(fake(ConstantKind::PickandsLimit, 0.6, None, 1.5)).unwrap();
            p
        })
        .unwrap();
        let x = 2f64.powf(0.3) * 3f64.powf(0.7) / (0.3f64.powf(0.3) * 0.7f64.powf(0.7));
        assert!(close(v.psi_argument, x, 1e-14));
        assert_eq!(v.constants_used[0].provenance, Provenance::Estimated);
    }

    #[test]
    fn psi0_inf_brownian_limit() {
        // √(2π)·x·Ψ(x) with x = 2√(cu); the relative gap to e^{−2cu} is about 1/x².
        let p = exact();
        let at = |u: f64| {
            let v = psi0_inf(u, 0.5, 1.0, &p).unwrap();
            (v.ln_value() + 2.0 * u).exp()
        };
        assert!((at(5000.0) - 1.0).abs() < 1e-4);
        assert!((at(500.0) - 1.0).abs() < 1e-3);
        assert!((at(500.0) - 1.0).abs() > (at(5000.0) - 1.0).abs());
        let v = psi0_inf(3.0, 0.5, 1.0, &p).unwrap();
        let x = 2.0 * 3f64.sqrt();
        assert!(close(v.value, (2.0 * PI).sqrt() * x * std_normal_tail(x), 1e-13));
    }

    #[test]
    fn value_is_prefactor_times_tail() {
        let p = exact();
        for v in [
            psi0_inf(2.0, 0.5, 1.5, &p).unwrap(),
            psi0_finite(2.0, 0.75, 1.0, 3.0, &p).unwrap(),
            psi_gamma_finite(2.0, 0.5, 1.0, 0.3, 2.0, &p).unwrap(),
        ] {
            assert!(close(v.value, v.prefactor * std_normal_tail(v.psi_argument), 1e-12));
        }
    }

    #[test]
    fn psi0_finite_cases() {
        let p = exact();
        let v = psi0_finite(1.0, 0.5, 1.0, 4.0, &p).unwrap();
        assert_eq!(v.power_exponent, 0.0);
        assert!(close(v.value, 2.0 * std_normal_tail(5.0 / 2.0), 1e-14));
        let v = psi0_finite(1.0, 0.75, 2.0, 2.0, &p).unwrap();
        assert!(close(v.value, std_normal_tail(5.0 / 2f64.powf(0.75)), 1e-14));
        assert!(matches!(psi0_finite(1.0, 0.25, 1.0, 1.0, &p), Err(Error::MissingConstant(_))));
        let mut sim = ConstantProvider::simulation_backed();
        sim.attach(fake(ConstantKind::PickandsLimit, 0.5, None, 1.3)).unwrap();
        let v = psi0_finite(1.0, 0.25, 1.0, 1.0, &sim).unwrap();
        assert_eq!(v.power_exponent, 2.0);
        let d = 2f64.powf(-2.0) * 1.3 / 0.25;
        assert!(close(v.prefactor, d * 4.0, 1e-14));
        // H = 1 is the degenerate straight-line case.
        assert!(psi0_finite(1.0, 1.0, 1.0, 1.0, &p).is_ok());
    }

    #[test]
    fn psi_gamma_inf_brownian_form() {
        let p = exact();
        for (u, c, g) in [(1.0, 1.0, 0.5), (2.5, 0.7, 0.2), (0.3, 3.0, 0.9)] {
            let v = psi_gamma_inf(u, 0.5, c, g, &p).unwrap();
            let x = 2.0 * (c * u).sqrt();
            let simplified = 2.0 * (2.0 * PI).sqrt() * (c * u).sqrt() / (1.0 - g) * std_normal_tail(x);
            assert!(close(v.value, simplified, 1e-10), "{u} {c} {g}");
        }
    }

    #[test]
    fn psi_gamma_finite_constants_table() {
        let p = exact();
        let v = psi_gamma_finite(1.0, 0.5, 1.0, 0.5, 1.0, &p).unwrap();
        assert!(close(v.prefactor, 8.0 / 3.0, 1e-15));
        let v = psi_gamma_finite(1.0, 0.5, 1.0, 1.0, 1.0, &p).unwrap();
        assert_eq!(v.prefactor, 4.0);
        for g in [0.1, 0.5, 1.0] {
            let v = psi_gamma_finite(1.0, 0.75, 1.0, g, 2.0, &p).unwrap();
            assert_eq!(v.prefactor, 1.0);
            assert!(close(v.value, std_normal_tail(3.0 / 2f64.powf(0.75)), 1e-14));
        }
        assert!(psi_gamma_finite(1.0, 0.5, 1.0, 0.0, 1.0, &p).is_err());
    }

    #[test]
    fn half_branch_only_at_exactly_half() {
        let p = exact();
        let at = psi_gamma_finite(1.0, 0.5, 1.0, 0.5, 1.0, &p).unwrap();
        let above = psi_gamma_finite(1.0, 0.5 + 1e-12, 1.0, 0.5, 1.0, &p).unwrap();
        assert_eq!(above.prefactor, 1.0);
        assert!(at.prefactor > 2.0);
        assert!(matches!(psi_gamma_finite(1.0, 0.5 - 1e-12, 1.0, 0.5, 1.0, &p), Err(Error::MissingConstant(_))));
    }

    #[test]
    fn ratio_constant_table() {
        let p = exact();
        assert_eq!(ratio_constant(0.75, 0.3, Horizon::Finite(2.0), &p).unwrap().value, 1.0);
        assert!(close(ratio_constant(0.5, 0.5, Horizon::Finite(2.0), &p).unwrap().value, 4.0 / 3.0, 1e-15));
        assert_eq!(ratio_constant(0.5, 0.5, Horizon::Infinite, &p).unwrap().value, 2.0);
        for g in [0.1, 0.4, 0.9] {
            let v = ratio_constant(0.5, g, Horizon::Finite(1.0), &p).unwrap().value;
            assert!(close(v, 2.0 / (2.0 - g), 1e-14));
        }
        match ratio_constant(0.75, 0.5, Horizon::Infinite, &p) {
            Err(Error::MissingConstant(m)) => assert_eq!(m, vec![ConstantRequest::Piterbarg { alpha: 1.5, a: 1.0 }]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_constants_are_all_listed() {
        match psi_gamma_inf(1.0, 0.3, 1.0, 0.5, &exact()) {
            Err(Error::MissingConstant(m)) => assert_eq!(m.len(), 2),
            other => panic!("{other:?}"),
        }
        let e = psi_gamma_inf(1.0, 0.3, 1.0, 0.5, &exact()).unwrap_err().to_string();
        assert!(e.contains("H_0.6") && e.contains("P_0.6^1"), "{e}");
    }

    fn fake(kind: ConstantKind, alpha: f64, a: Option<f64>, value: f64) -> ConstantEstimate {
        ConstantEstimate {
            kind,
            alpha,
            a,
            window: [0.0, 1.0],
            grid_step: 0.01,
            estimate: value,
            std_error: 0.0,
            n_samples: 1,
            estimator: constants::Estimator::Crude,
            downward_biased: true,
            ladder: Vec::new(),
        }
    }

    #[test]
    fn provider_attach_rules() {
        let mut p = exact();
        assert!(p.attach(fake(ConstantKind::PickandsLimit, 1.5, None, 0.8)).is_err());
        let mut s = ConstantProvider::simulation_backed();
        assert!(s.attach(fake(ConstantKind::PickandsWindow, 1.5, None, 0.8)).is_err());
        s.attach(fake(ConstantKind::PiterbargTwosided, 1.5, Some(2.0), 1.7)).unwrap();
        let c = s.lookup(ConstantRequest::PiterbargTwoSided { alpha: 1.5, a: 2.0 }).unwrap();
        assert_eq!(c.value, 1.7);
        assert!(s.lookup(ConstantRequest::Piterbarg { alpha: 1.5, a: 2.0 }).is_none());
        // Closed forms win over attached estimates.
        s.attach(fake(ConstantKind::PickandsLimit, 1.0, None, 0.9)).unwrap();
        assert_eq!(s.lookup(ConstantRequest::Pickands { alpha: 1.0 }).unwrap().value, 1.0);
        assert!(matches!(
            p.populate(&[ConstantRequest::Pickands { alpha: 1.5 }], &LadderPolicy::default(), 0),
            Err(Error::MissingConstant(_))
        ));
    }

    #[test]
    fn populate_simulates_missing_constants() {
        let mut s = ConstantProvider::simulation_backed();
        let policy = LadderPolicy {
            windows: vec![1.0, 2.0],
            grid_step: 0.05,
            n_samples: 600,
            ..LadderPolicy::default()
        };
        let reqs = psi_gamma_inf_constants(0.7, 0.5);
        s.populate(&reqs, &policy, 1).unwrap();
        let v = psi_gamma_inf(2.0, 0.7, 1.0, 0.5, &s).unwrap();
        assert!(v.constants_used.iter().all(|c| c.provenance == Provenance::Estimated));
        assert_eq!(s.estimates().count(), 2);
    }

    #[test]
    fn two_sided_closed_forms() {
        let r = ConstantRequest::PiterbargTwoSided { alpha: 1.0, a: 1.0 };
        assert!(close(r.exact().unwrap(), 8.0 / 3.0, 1e-15));
        let r = ConstantRequest::PiterbargTwoSided { alpha: 2.0, a: 3.0 };
        assert!(close(r.exact().unwrap(), (4.0f64 / 3.0).sqrt(), 1e-15));
        assert!(ConstantRequest::PiterbargTwoSided { alpha: 1.5, a: 1.0 }.exact().is_none());
    }

    #[test]
    fn variance_functions() {
        for h in [0.2, 0.5, 0.8] {
            for g in [0.0, 0.3, 1.0] {
                assert!(close(variance_z(0.0, 2.0, h, g).unwrap(), 2f64.powf(h), 1e-14));
            }
            assert!(close(variance_z(0.7, 2.0, h, 0.0).unwrap(), 2f64.powf(h), 1e-14));
        }
        assert!(close(variance_y(0.0, 1.0, 0.5, 0.5, 1.0).unwrap(), 0.5, 1e-15));
        assert!(variance_y(2.0, 1.0, 0.5, 0.5, 1.0).is_err());
        assert!(variance_z(-0.1, 1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn maximizer_examples() {
        let m = maximizer_y(0.5, 1.0).unwrap();
        assert_eq!((m.s0, m.t0), (0.0, 1.0));
        assert!(close(m.value, 0.5, 1e-15));
        assert_eq!(maximizer_y(0.5, 2.0).unwrap().t0, 0.5);
        assert!(close(variance_y(0.0, m.t0, 0.5, 0.3, 1.0).unwrap(), m.value, 1e-14));
        assert!(maximizer_y(1.0, 1.0).is_err());
    }

    fn sim_provider(reqs: &[(ConstantKind, f64, Option<f64>, f64)]) -> ConstantProvider {
        let mut p = ConstantProvider::simulation_backed();
        for &(k, alpha, a, v) in reqs {
            p.attach(fake(k, alpha, a, v)).unwrap();
        }
        p
    }

    fn mixed() -> MixedField {
        MixedField {
            b1: 1.0,
            b2: 0.5,
            a1: 2.0,
            a2: 1.5,
            beta: 1.5,
            s0_interior: false,
            t0_interior: false,
        }
    }

    #[test]
    fn field_mixed_properties() {
        let p = sim_provider(&[
            (ConstantKind::PickandsLimit, 1.5, None, 0.65),
            (ConstantKind::PiterbargLimit, 1.5, Some(0.5), 2.2),
            (ConstantKind::PiterbargTwosided, 1.5, Some(0.5), 3.1),
        ]);
        let f = mixed();
        let base = field_tail_mixed(3.0, &f, &p).unwrap();
        let inner = field_tail_mixed(3.0, &MixedField { t0_interior: true, ..f }, &p).unwrap();
        assert_eq!(inner.value / base.value, 2.0);
        let doubled = field_tail_mixed(3.0, &MixedField { a2: 2.0 * f.a2, ..f }, &p).unwrap();
        assert!(close(doubled.value / base.value, 2f64.powf(1.0 / 1.5), 1e-13));
        let two = field_tail_mixed(3.0, &MixedField { s0_interior: true, ..f }, &p).unwrap();
        assert!(close(two.value / base.value, 3.1 / 2.2, 1e-13));
        let expect = 2.2 * 0.65 * PI.sqrt() * 1.5f64.powf(1.0 / 1.5) / (2.0 * 0.5f64.sqrt()) * 3f64.powf(2.0 / 1.5 - 1.0) * std_normal_tail(3.0);
        assert!(close(base.value, expect, 1e-13));
        assert!(matches!(field_tail_mixed(3.0, &f, &exact()), Err(Error::MissingConstant(_))));
        assert!(matches!(field_tail_mixed(3.0, &MixedField { beta: 2.0, ..f }, &p), Err(Error::Domain(_))));
    }

    fn two_param(alpha: [f64; 2], beta: [f64; 2]) -> TwoParamField {
        TwoParamField {
            a1: 1.0,
            a2: 1.0,
            b1: 1.0,
            b2: 1.0,
            alpha1: alpha[0],
            alpha2: alpha[1],
            beta1: beta[0],
            beta2: beta[1],
            s0_interior: false,
            t0_interior: false,
        }
    }

    #[test]
    fn two_param_cases() {
        let p = exact();
        let iv = field_tail_two_param(2.5, &two_param([2.0, 1.5], [1.0, 1.0]), &p).unwrap();
        assert_eq!(iv.case, Some("iv"));
        assert!((iv.value - std_normal_tail(2.5)).abs() < 1e-12);
        let iii = field_tail_two_param(2.5, &two_param([1.0, 1.0], [1.0, 1.0]), &p).unwrap();
        assert!(close(iii.value, 4.0 * std_normal_tail(2.5), 1e-14));
        assert!(matches!(
            field_tail_two_param(2.5, &two_param([0.5, 1.5], [1.0, 1.0]), &p),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            field_tail_two_param(2.5, &two_param([1.0, 1.5], [1.0, 1.0]), &p),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn two_param_case_i_and_gamma_reduction() {
        // α = 1 < β = 2 uses exact H_1 and Γ(3/2) = √π/2.
        let p = exact();
        let mut f = two_param([1.0, 1.0], [2.0, 2.0]);
        f.a1 = 2.0;
        f.b1 = 3.0;
        let v = field_tail_two_param(4.0, &f, &p).unwrap();
        let g = PI.sqrt() / 2.0;
        let expect = (2.0 * 3f64.powf(-0.5) * g * 4.0) * (g * 4.0) * std_normal_tail(4.0);
        assert!(close(v.value, expect, 1e-13));
        let interior = field_tail_two_param(4.0, &TwoParamField { s0_interior: true, ..f }, &p).unwrap();
        assert!(close(interior.value / v.value, 2.0, 1e-14));

        // β = 1 gives Γ(2) = 1: each factor is H_α a^{1/α} b^{−1} Î u^{2/α−2}.
        let sim = sim_provider(&[
            (ConstantKind::PickandsLimit, 0.5, None, 1.7),
            (ConstantKind::PickandsLimit, 0.8, None, 1.2),
        ]);
        let f = TwoParamField {
            a1: 1.3,
            b1: 0.4,
            a2: 0.9,
            b2: 2.0,
            t0_interior: true,
            ..two_param([0.5, 0.8], [1.0, 1.0])
        };
        let v = field_tail_two_param(3.0, &f, &sim).unwrap();
        assert_eq!(v.case, Some("i"));
        let f1 = 1.7 * 1.3f64.powf(2.0) / 0.4 * 3f64.powf(4.0 - 2.0);
        let f2 = 1.2 * 0.9f64.powf(1.25) / 2.0 * 2.0 * 3f64.powf(2.5 - 2.0);
        assert!(close(v.prefactor, f1 * f2, 1e-12));
        assert!(close(v.power_exponent, 2.5, 1e-14));
    }

    #[test]
    fn two_param_mixed_and_swapped() {
        let p = exact();
        let ii = field_tail_two_param(3.0, &two_param([1.0, 1.0], [2.0, 1.0]), &p).unwrap();
        let sw = field_tail_two_param(3.0, &two_param([1.0, 1.0], [1.0, 2.0]), &p).unwrap();
        assert_eq!(ii.case, Some("ii"));
        assert_eq!(sw.case, Some("ii-swapped"));
        assert!(close(ii.value, sw.value, 1e-14));
        let expect = (PI.sqrt() / 2.0) * 3.0 * 2.0 * std_normal_tail(3.0);
        assert!(close(ii.value, expect, 1e-13));
    }
}
