//! Gaussian random fields on `[0,S]×[0,T]` with a unique point of maximal
//! variance, sampled on a lattice by dense factorization.
//!
//! The standard deviation and correlation families are
//!
//! ```text
//! σ(s,t)        = exp(−b1|s−s0|^{βs} − b2|t−t0|^{βt} − b3|(s−s0)(t−t0)|)
//! r(s,s′,t,t′)  = exp(−a1|s−s′|^{αs} − a2|t−t′|^{αt})
//! ```
//!
//! so that `1 − σ` and `1 − r` have the local expansions used by the tail
//! formulas in [`crate::asymptotics`]. Either family can be replaced by the
//! constant 1.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{field_tail_mixed, field_tail_two_param, AsymptoticValue, ConstantProvider, MixedField, TwoParamField};
use crate::error::{Error, Result};
use crate::exec::{run_chunks, ExecMode};
use crate::linalg::{factorize, LowRankFactor};

/// Dense factorization budget.
pub const MAX_FIELD_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaSpec {
    Exponential {
        s0: f64,
        t0: f64,
        b1: f64,
        b2: f64,
        #[serde(default)]
        b3: f64,
        beta_s: f64,
        #[serde(default = "two")]
        beta_t: f64,
    },
    /// `σ ≡ 1`
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CorrelationSpec {
    Exponential { a1: f64, a2: f64, alpha_s: f64, alpha_t: f64 },
    /// `r ≡ 1`
    Constant,
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    /// `S`
    pub s_len: f64,
    /// `T`
    pub t_len: f64,
    pub sigma: SigmaSpec,
    pub correlation: CorrelationSpec,
}

impl FieldSpec {
    /// `σ` with a quadratic `t`-term and `r` with exponent `β` in both
    /// directions, maximizer at `(0, T/2)`.
    pub fn mixed(beta: f64) -> Self {
        FieldSpec {
            s_len: 1.0,
            t_len: 1.0,
            sigma: SigmaSpec::Exponential {
                s0: 0.0,
                t0: 0.5,
                b1: 1.0,
                b2: 1.0,
                b3: 0.0,
                beta_s: beta,
                beta_t: 2.0,
            },
            correlation: CorrelationSpec::Exponential {
                a1: 1.0,
                a2: 1.0,
                alpha_s: beta,
                alpha_t: beta,
            },
        }
    }

    /// `σ ≡ 1`, `r ≡ 1`: a single standard normal spread over the lattice.
    pub fn rank_one() -> Self {
        FieldSpec {
            s_len: 1.0,
            t_len: 1.0,
            sigma: SigmaSpec::Constant,
            correlation: CorrelationSpec::Constant,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: FieldSpec = toml::from_str(text).map_err(|e| Error::domain(format!("invalid field spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        pos("S", self.s_len)?;
        pos("T", self.t_len)?;
        if let SigmaSpec::Exponential {
            s0,
            t0,
            b1,
            b2,
            b3,
            beta_s,
            beta_t,
        } = self.sigma
        {
            pos("b1", b1)?;
            pos("b2", b2)?;
            exponent("beta_s", beta_s)?;
            exponent("beta_t", beta_t)?;
            if !(0.0..=self.s_len).contains(&s0) || !(0.0..=self.t_len).contains(&t0) {
                return Err(Error::domain(format!("maximizer ({s0}, {t0}) lies outside the domain")));
            }
            if !b3.is_finite() || (b3 < 0.0 && b2 + b3 / 2.0 <= 0.0) {
                return Err(Error::domain(format!("b3 = {b3} needs b2 + b3/2 > 0 (b2 = {b2})")));
            }
        }
        if let CorrelationSpec::Exponential { a1, a2, alpha_s, alpha_t } = self.correlation {
            pos("a1", a1)?;
            pos("a2", a2)?;
            exponent("alpha_s", alpha_s)?;
            exponent("alpha_t", alpha_t)?;
        }
        Ok(())
    }

    pub fn maximizer(&self) -> Option<(f64, f64)> {
        match self.sigma {
            SigmaSpec::Exponential { s0, t0, .. } => Some((s0, t0)),
            SigmaSpec::Constant => None,
        }
    }

    pub fn sigma(&self, s: f64, t: f64) -> f64 {
        match self.sigma {
            SigmaSpec::Exponential {
                s0,
                t0,
                b1,
                b2,
                b3,
                beta_s,
                beta_t,
            } => {
                let (ds, dt) = ((s - s0).abs(), (t - t0).abs());
                (-b1 * ds.powf(beta_s) - b2 * dt.powf(beta_t) - b3 * ds * dt).exp()
            }
            SigmaSpec::Constant => 1.0,
        }
    }

    pub fn correlation(&self, p: (f64, f64), q: (f64, f64)) -> f64 {
        match self.correlation {
            CorrelationSpec::Exponential { a1, a2, alpha_s, alpha_t } => {
                (-a1 * (p.0 - q.0).abs().powf(alpha_s) - a2 * (p.1 - q.1).abs().powf(alpha_t)).exp()
            }
            CorrelationSpec::Constant => 1.0,
        }
    }

    /// Tail asymptotics matching the spec's exponents: the mixed formula when
    /// `σ` is quadratic in `t` and `r` has a common exponent `β ∈ (1,2)` equal
    /// to the `s`-exponent of `σ`; otherwise the two-parameter formula, which
    /// requires `b3 = 0`. The rank-one field is a single standard normal, so
    /// its tail is exactly `Ψ(u)`.
    pub fn theory(&self, u: f64, provider: &ConstantProvider) -> Result<AsymptoticValue> {
        if let (SigmaSpec::Constant, CorrelationSpec::Constant) = (self.sigma, self.correlation) {
            return Ok(AsymptoticValue {
                case: Some("rank-one"),
                ..AsymptoticValue::new(1.0, u, 0.0, Vec::new())
            });
        }
        let (SigmaSpec::Exponential {
            s0,
            t0,
            b1,
            b2,
            b3,
            beta_s,
            beta_t,
        }, CorrelationSpec::Exponential { a1, a2, alpha_s, alpha_t }) = (self.sigma, self.correlation)
        else {
            return Err(Error::Unsupported(
                "tail asymptotics need exponential sigma and correlation with a unique maximizer".into(),
            ));
        };
        let s0_interior = s0 > 0.0 && s0 < self.s_len;
        let t0_interior = t0 > 0.0 && t0 < self.t_len;
        let mixed = beta_t == 2.0 && alpha_s == beta_s && alpha_t == beta_s && beta_s > 1.0 && beta_s < 2.0;
        if mixed {
            let f = MixedField {
                b1,
                b2,
                a1,
                a2,
                beta: beta_s,
                s0_interior,
                t0_interior,
            };
            return field_tail_mixed(u, &f, provider);
        }
        if b3 != 0.0 {
            return Err(Error::Unsupported(format!(
                "cross term b3 = {b3} is only covered when sigma is quadratic in t and all other exponents equal beta in (1,2)"
            )));
        }
        let f = TwoParamField {
            a1,
            a2,
            b1,
            b2,
            alpha1: alpha_s,
            alpha2: alpha_t,
            beta1: beta_s,
            beta2: beta_t,
            s0_interior,
            t0_interior,
        };
        field_tail_two_param(u, &f, provider)
    }
}

fn pos(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be > 0, got {v}")))
    }
}

fn exponent(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 2.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in (0, 2], got {v}")))
    }
}

/// Lattice sizes along `s` and `t` (grid points, endpoints included).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub ns: usize,
    pub nt: usize,
}

impl Resolution {
    pub fn square(n: usize) -> Self {
        Resolution { ns: n, nt: n }
    }

    pub fn points(&self) -> usize {
        self.ns * self.nt
    }
}

/// A field on a lattice with its covariance and factor.
#[derive(Debug, Clone)]
pub struct GridField {
    pub spec: FieldSpec,
    pub resolution: Resolution,
    /// Row-major over `(s, t)`: index `i·nt + j`.
    pub points: Vec<(f64, f64)>,
    pub covariance: Vec<f64>,
    factor: LowRankFactor,
}

impl GridField {
    pub fn rank(&self) -> usize {
        self.factor.rank()
    }
}

fn axis(len: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        vec![0.0]
    } else {
        (0..n).map(|k| len * k as f64 / (n - 1) as f64).collect()
    }
}

/// Checks on a mesh four times finer than the lattice that `σ ≤ 1`, with
/// equality only at the maximizer.
fn check_unique_maximum(spec: &FieldSpec, res: Resolution) -> Result<()> {
    let Some((s0, t0)) = spec.maximizer() else {
        return Ok(());
    };
    let (fs, ft) = (4 * res.ns.max(2), 4 * res.nt.max(2));
    for s in axis(spec.s_len, fs) {
        for t in axis(spec.t_len, ft) {
            let v = spec.sigma(s, t);
            let at_max = s == s0 && t == t0;
            if v > 1.0 || (v == 1.0 && !at_max) {
                return Err(Error::domain(format!(
                    "sigma({s}, {t}) = {v} violates a unique maximum 1 at ({s0}, {t0})"
                )));
            }
        }
    }
    Ok(())
}

/// Builds the lattice covariance `C_ij = σ(p_i)σ(p_j)r(p_i,p_j)` and factors it.
pub fn build_field(spec: &FieldSpec, resolution: Resolution) -> Result<GridField> {
    spec.validate()?;
    if resolution.ns == 0 || resolution.nt == 0 {
        return Err(Error::domain("lattice needs at least one point per axis"));
    }
    let n = resolution.points();
    if n > MAX_FIELD_POINTS {
        return Err(Error::Resource {
            what: "dense field factorization",
            size: n,
            limit: MAX_FIELD_POINTS,
        });
    }
    check_unique_maximum(spec, resolution)?;
    let (ss, ts) = (axis(spec.s_len, resolution.ns), axis(spec.t_len, resolution.nt));
    let points: Vec<(f64, f64)> = ss.iter().flat_map(|&s| ts.iter().map(move |&t| (s, t))).collect();
    let sig: Vec<f64> = points.iter().map(|&(s, t)| spec.sigma(s, t)).collect();
    let mut covariance = vec![0.0; n * n];
    for i in 0..n {
        covariance[i * n + i] = sig[i] * sig[i];
        for j in 0..i {
            let v = sig[i] * sig[j] * spec.correlation(points[i], points[j]);
            covariance[i * n + j] = v;
            covariance[j * n + i] = v;
        }
    }
    let factor = factorize(&covariance, n)?;
    log::debug!("field lattice {n} points, factor rank {}", factor.rank());
    Ok(GridField {
        spec: *spec,
        resolution,
        points,
        covariance,
        factor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldTailEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub u: f64,
    pub exceedances: u64,
    /// Among exceeding samples, the fraction whose lattice argmax lies within
    /// 10% of each side length of the maximizer.
    pub argmax_near_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct FieldTally {
    hits: u64,
    near: u64,
}

/// Fraction of sampled fields whose lattice maximum exceeds `u`.
pub fn estimate_field_tail(field: &GridField, u: f64, n_samples: usize, seed: u64) -> Result<FieldTailEstimate> {
    estimate_field_tail_with(field, u, n_samples, seed, ExecMode::default())
}

pub fn estimate_field_tail_with(field: &GridField, u: f64, n_samples: usize, seed: u64, exec: ExecMode) -> Result<FieldTailEstimate> {
    if n_samples == 0 {
        return Err(Error::domain("n_samples must be positive"));
    }
    if u.is_nan() {
        return Err(Error::domain("u must not be NaN"));
    }
    let near: Vec<bool> = match field.spec.maximizer() {
        Some((s0, t0)) => field
            .points
            .iter()
            .map(|&(s, t)| (s - s0).abs() <= 0.1 * field.spec.s_len && (t - t0).abs() <= 0.1 * field.spec.t_len)
            .collect(),
        None => Vec::new(),
    };
    let f = &field.factor;
    let chunks = run_chunks(exec, n_samples, seed, |_, count, rng| {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut z = vec![0.0; f.rank()];
        let mut x = vec![0.0; f.dim()];
        let mut t = FieldTally::default();
        for _ in 0..count {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            f.apply(&z, &mut x);
            let (k, m) = x
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bk, bm), (k, &v)| if v > bm { (k, v) } else { (bk, bm) });
            if m > u {
                t.hits += 1;
                if near.get(k).copied().unwrap_or(false) {
                    t.near += 1;
                }
            }
        }
        t
    });
    let total = chunks.into_iter().fold(FieldTally::default(), |a, b| FieldTally {
        hits: a.hits + b.hits,
        near: a.near + b.near,
    });
    let p = total.hits as f64 / n_samples as f64;
    Ok(FieldTailEstimate {
        probability: p,
        std_error: (p * (1.0 - p) / n_samples as f64).sqrt(),
        n_samples,
        u,
        exceedances: total.hits,
        argmax_near_fraction: (total.hits > 0 && !near.is_empty()).then(|| total.near as f64 / total.hits as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub u: f64,
    pub mc_probability: f64,
    pub mc_std_error: f64,
    pub theory: f64,
    /// `mc_probability / theory`
    pub ratio: f64,
}

/// Monte Carlo tail against the matching asymptotic formula along a ladder of
/// levels. All levels share one seed, so the MC column is nonincreasing.
pub fn compare_to_theory(
    spec: &FieldSpec,
    resolution: Resolution,
    u_ladder: &[f64],
    n_samples: usize,
    provider: &ConstantProvider,
    seed: u64,
) -> Result<Vec<ComparisonRow>> {
    let theory = u_ladder
        .iter()
        .map(|&u| spec.theory(u, provider))
        .collect::<Result<Vec<_>>>()?;
    let field = build_field(spec, resolution)?;
    u_ladder
        .iter()
        .zip(theory)
        .map(|(&u, th)| {
            let mc = estimate_field_tail(&field, u, n_samples, seed)?;
            Ok(ComparisonRow {
                u,
                mc_probability: mc.probability,
                mc_std_error: mc.std_error,
                theory: th.value,
                ratio: mc.probability / th.value,
            })
        })
        .collect()
}

/// CSV rendering of a comparison table.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("u,mc_probability,mc_std_error,theory,ratio\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.u, r.mc_probability, r.mc_std_error, r.theory, r.ratio));
    }
    out
}
