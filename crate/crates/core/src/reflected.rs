//! The γ-reflected process `W_γ(t) = X(t) − ct − γ·inf_{s≤t}(X(s) − cs)`.
//!
//! On a grid the supremum is the maximum over grid points, which never
//! exceeds the continuous-time supremum. Refining the grid can only raise it;
//! the grid step is the convergence knob.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fbm::{HurstIndex, SampledPath, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

impl Horizon {
    pub fn is_infinite(self) -> bool {
        matches!(self, Horizon::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Horizon::Finite(t) => Some(t),
            Horizon::Infinite => None,
        }
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Finite(t) => write!(f, "{t}"),
            Horizon::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Horizon::Infinite),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::domain(format!("cannot parse horizon {s:?}")))
                .map(|t| if t.is_infinite() { Horizon::Infinite } else { Horizon::Finite(t) }),
        }
    }
}

/// Finite horizons serialize as numbers, the infinite one as `"inf"`.
impl Serialize for Horizon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Horizon::Finite(t) => s.serialize_f64(*t),
            Horizon::Infinite => s.serialize_str("inf"),
        }
    }
}

/// `(H, c, γ, T)` of a γ-reflected process experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProcessParams {
    pub hurst: HurstIndex,
    pub c: f64,
    pub gamma: f64,
    pub horizon: Horizon,
}

impl ProcessParams {
    pub fn new(hurst: f64, c: f64, gamma: f64, horizon: Horizon) -> Result<Self> {
        let hurst = HurstIndex::new(hurst)?;
        check_drift(c)?;
        check_gamma(gamma)?;
        match horizon {
            Horizon::Finite(t) if !(t.is_finite() && t > 0.0) => {
                return Err(Error::domain(format!("horizon must be > 0, got {t}")));
            }
            Horizon::Infinite if gamma >= 1.0 => {
                return Err(Error::domain(
                    "γ = 1 with an infinite horizon: the workload supremum is infinite almost surely",
                ));
            }
            _ => {}
        }
        Ok(ProcessParams {
            hurst,
            c,
            gamma,
            horizon,
        })
    }

    /// Same process with a different reflection rate.
    pub fn with_gamma(self, gamma: f64) -> Result<Self> {
        Self::new(self.hurst.value(), self.c, gamma, self.horizon)
    }
}

fn check_drift(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("drift c must be > 0, got {c}")))
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::domain(format!("γ must lie in [0, 1], got {gamma}")))
    }
}

/// `W_γ` on a grid, with the running infimum of `X(t) − ct`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReflectedPath {
    pub grid: TimeGrid,
    pub w_values: Vec<f64>,
    pub running_inf: Vec<f64>,
    pub hurst: HurstIndex,
    pub c: f64,
    pub gamma: f64,
}

/// Applies the reflection map in a single forward pass.
///
/// `c` may be any finite real here (including 0); the positivity constraint
/// belongs to [`ProcessParams`].
pub fn reflect(path: &SampledPath, c: f64, gamma: f64) -> Result<ReflectedPath> {
    check_gamma(gamma)?;
    if !c.is_finite() {
        return Err(Error::domain(format!("drift c must be finite, got {c}")));
    }
    if path.grid.start() != 0.0 {
        return Err(Error::domain("reflection needs a grid starting at 0"));
    }
    let n = path.values.len();
    let mut w_values = Vec::with_capacity(n);
    let mut running_inf = Vec::with_capacity(n);
    let mut inf = f64::INFINITY;
    for (t, x) in path.iter() {
        let free = x - c * t;
        inf = inf.min(free);
        running_inf.push(inf);
        w_values.push(free - gamma * inf);
    }
    Ok(ReflectedPath {
        grid: path.grid,
        w_values,
        running_inf,
        hurst: path.hurst,
        c,
        gamma,
    })
}

/// `M_γ(T)` on the grid.
pub fn supremum(rp: &ReflectedPath) -> f64 {
    rp.w_values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `U_γ(t) = u − W_γ(t)`; ruin (`U < 0` somewhere) iff `supremum > u`.
pub fn surplus(rp: &ReflectedPath, u: f64) -> Vec<f64> {
    rp.w_values.iter().map(|w| u - w).collect()
}

/// Grid suprema of `W_γ` for several reflection rates and prefix lengths
/// from one pass over the raw path values `x[k] = X(k·step)`.
///
/// `out[g·m + j]` is the supremum for `gammas[g]` over the first
/// `prefix_lens[j]` points, `m = prefix_lens.len()`. Prefix lengths must be
/// nondecreasing and at most `x.len()`.
pub(crate) fn reflected_suprema(x: &[f64], step: f64, c: f64, gammas: &[f64], prefix_lens: &[usize], out: &mut [f64]) {
    let m = prefix_lens.len();
    debug_assert_eq!(out.len(), gammas.len() * m);
    debug_assert!(prefix_lens.last().is_none_or(|&l| l <= x.len()));
    let mut sup = vec![f64::NEG_INFINITY; gammas.len()];
    let mut inf = f64::INFINITY;
    let mut j = 0;
    let end = prefix_lens.last().copied().unwrap_or(0);
    for (k, &v) in x[..end].iter().enumerate() {
        let free = v - c * (k as f64 * step);
        inf = inf.min(free);
        for (s, &g) in sup.iter_mut().zip(gammas) {
            *s = s.max(free - g * inf);
        }
        while j < m && prefix_lens[j] == k + 1 {
            for (gi, s) in sup.iter().enumerate() {
                out[gi * m + j] = *s;
            }
            j += 1;
        }
    }
    for jj in j..m {
        for gi in 0..gammas.len() {
            out[gi * m + jj] = f64::NEG_INFINITY;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm, TimeGrid};
    use proptest::prelude::*;

    fn path(values: Vec<f64>, step: f64) -> SampledPath {
        SampledPath {
            grid: TimeGrid::new(0.0, step, values.len()).unwrap(),
            values,
            hurst: HurstIndex::new(0.5).unwrap(),
        }
    }

    #[test]
    fn hand_computed_examples() {
        let rp = reflect(&path(vec![0.0, 1.0, -1.0], 1.0), 0.0, 1.0).unwrap();
        assert_eq!(rp.running_inf, vec![0.0, 0.0, -1.0]);
        assert_eq!(rp.w_values, vec![0.0, 1.0, 0.0]);
        assert_eq!(supremum(&rp), 1.0);
        assert_eq!(surplus(&rp, 1.0), vec![1.0, 0.0, 1.0]);
        assert!(surplus(&rp, 1.0).iter().all(|&u| u >= 0.0));
        assert_eq!(surplus(&rp, 0.0), vec![-0.0, -1.0, -0.0]);

        let rp = reflect(&path(vec![0.0, 2.0, -2.0], 1.0), 0.0, 0.5).unwrap();
        assert_eq!(rp.w_values, vec![0.0, 2.0, -1.0]);
        assert_eq!(supremum(&rp), 2.0);
        let u = surplus(&rp, 1.5);
        assert_eq!(u, vec![1.5, -0.5, 2.5]);
        assert!(u.iter().any(|&x| x < 0.0) && supremum(&rp) > 1.5);
    }

    #[test]
    fn zero_path_supremum_is_attained_at_origin() {
        let rp = reflect(&path(vec![0.0; 5], 0.5), 1.0, 0.0).unwrap();
        assert_eq!(supremum(&rp), 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = path(vec![0.0, 1.0], 1.0);
        assert!(reflect(&p, 1.0, 1.5).is_err());
        assert!(reflect(&p, 1.0, -0.1).is_err());
        let shifted = SampledPath {
            grid: TimeGrid::new(1.0, 1.0, 2).unwrap(),
            ..p
        };
        assert!(reflect(&shifted, 1.0, 0.5).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ProcessParams::new(0.5, 1.0, 1.0, Horizon::Infinite).is_err());
        assert!(ProcessParams::new(0.5, 1.0, 1.0, Horizon::Finite(2.0)).is_ok());
        assert!(ProcessParams::new(0.5, 0.0, 0.5, Horizon::Finite(2.0)).is_err());
        assert!(ProcessParams::new(0.5, 1.0, 0.5, Horizon::Finite(0.0)).is_err());
        assert_eq!("inf".parse::<Horizon>().unwrap(), Horizon::Infinite);
        assert_eq!("2.5".parse::<Horizon>().unwrap(), Horizon::Finite(2.5));
    }

    #[test]
    fn fast_kernels_match_reflect() {
        let g = TimeGrid::from_horizon(4.0, 1.0 / 32.0).unwrap();
        let hurst = HurstIndex::new(0.4).unwrap();
        for seed in 0..20 {
            let p = sample_fbm(&g, hurst, seed).unwrap();
            let gammas = [0.0, 0.3, 1.0];
            let lens = [1, 33, 129];
            let mut out = [0.0; 9];
            reflected_suprema(&p.values, g.step(), 0.7, &gammas, &lens, &mut out);
            for (gi, g_) in gammas.iter().enumerate() {
                let full = reflect(&p, 0.7, *g_).unwrap();
                assert_eq!(supremum(&full), out[gi * 3 + 2]);
                for (j, len) in lens.iter().enumerate() {
                    let m = full.w_values[..*len].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    assert_eq!(m, out[gi * 3 + j]);
                }
            }
        }
    }

    fn arb_path() -> impl Strategy<Value = SampledPath> {
        (prop::collection::vec(-3.0f64..3.0, 1..40), 0.01f64..1.0).prop_map(|(mut v, step)| {
            v[0] = 0.0;
            path(v, step)
        })
    }

    proptest! {
        #[test]
        fn invariants_hold(p in arb_path(), c in 0.0f64..3.0, gamma in 0.0f64..=1.0) {
            let rp = reflect(&p, c, gamma).unwrap();
            prop_assert_eq!(rp.running_inf[0], 0.0);
            for k in 0..p.values.len() {
                let free = p.values[k] - c * p.grid.point(k);
                prop_assert!(rp.w_values[k] >= free);
                prop_assert_eq!(rp.w_values[k], free - gamma * rp.running_inf[k]);
                if k > 0 {
                    prop_assert!(rp.running_inf[k] <= rp.running_inf[k - 1]);
                }
            }
        }

        #[test]
        fn gamma_zero_is_free_process(p in arb_path(), c in 0.0f64..3.0) {
            let rp = reflect(&p, c, 0.0).unwrap();
            for (k, w) in rp.w_values.iter().enumerate() {
                prop_assert_eq!(*w, p.values[k] - c * p.grid.point(k));
            }
        }

        #[test]
        fn monotone_in_gamma_and_horizon(p in arb_path(), c in 0.0f64..3.0, g1 in 0.0f64..=1.0, g2 in 0.0f64..=1.0, cut in 1usize..40) {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let a = reflect(&p, c, lo).unwrap();
            let b = reflect(&p, c, hi).unwrap();
            for (x, y) in a.w_values.iter().zip(&b.w_values) {
                prop_assert!(x <= y);
            }
            prop_assert!(supremum(&a) <= supremum(&b));
            let cut = cut.min(p.values.len());
            let prefix = b.w_values[..cut].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(prefix <= supremum(&b));
        }

        #[test]
        fn drift_shift_bound(p in arb_path(), c in 0.0f64..3.0, delta in 0.0f64..2.0, gamma in 0.0f64..=1.0) {
            let a = reflect(&p, c, gamma).unwrap();
            let b = reflect(&p, c + delta, gamma).unwrap();
            for k in 0..p.values.len() {
                let t = p.grid.point(k);
                let drop = a.w_values[k] - b.w_values[k];
                prop_assert!(drop >= -1e-12);
                prop_assert!(drop <= delta * t * (1.0 + gamma) + 1e-12);
            }
        }
    }
}
