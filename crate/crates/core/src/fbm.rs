//! Exact sampling of fractional Brownian motion on uniform grids.
//!
//! The default route is circulant embedding of the fractional Gaussian noise
//! autocovariance: one FFT of size `2·next_pow2(n)` yields two independent
//! increment sequences (real and imaginary parts), which are cumulatively
//! summed. When the embedding is not nonnegative definite the sampler falls
//! back to a dense Cholesky factor of the path covariance.
//!
//! Two-sided fBm on `[−S1, S2]` is built from a one-sided path `B'` on
//! `[0, S1+S2]` as `B(t) = B'(t + S1) − B'(S1)`. This has exactly the
//! two-sided covariance `½(|t|^{2H} + |s|^{2H} − |t−s|^{2H})`; gluing two
//! independent halves at 0 would be wrong for `H ≠ ½`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::chunk_rng;
use crate::linalg::{self, LowRankFactor};

/// Largest number of points handled by the dense Cholesky route.
pub const MAX_DENSE_POINTS: usize = 4096;

/// Negative circulant eigenvalues smaller than this (relative to the largest)
/// are clipped to zero instead of triggering the dense fallback.
const EMBEDDING_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct HurstIndex(f64);

impl HurstIndex {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value <= 1.0 {
            Ok(HurstIndex(value))
        } else {
            Err(Error::domain(format!("Hurst index must lie in (0, 1], got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `H = 1`: the path is `N·t` for a single standard normal `N`.
    pub fn is_degenerate(self) -> bool {
        self.0 == 1.0
    }
}

/// Uniform grid `start + k·step`, `k = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    start: f64,
    step: f64,
    count: usize,
}

impl TimeGrid {
    pub fn new(start: f64, step: f64, count: usize) -> Result<Self> {
        if !(start.is_finite() && start >= 0.0) {
            return Err(Error::domain(format!("grid start must be finite and >= 0, got {start}")));
        }
        Self::unchecked_start(start, step, count)
    }

    fn unchecked_start(start: f64, step: f64, count: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::domain(format!("grid step must be finite and > 0, got {step}")));
        }
        if count == 0 {
            return Err(Error::domain("grid must contain at least one point"));
        }
        Ok(TimeGrid { start, step, count })
    }

    /// Grid `0, step, …, horizon`; `horizon` must be a multiple of `step`.
    pub fn from_horizon(horizon: f64, step: f64) -> Result<Self> {
        let n = steps_in(horizon, step)?;
        Self::new(0.0, step, n + 1)
    }

    /// Grid covering `[−s1, s2]` and containing 0; both ends must be
    /// multiples of `step`.
    pub fn window(s1: f64, s2: f64, step: f64) -> Result<Self> {
        let left = steps_in(s1, step)?;
        let right = steps_in(s2, step)?;
        Self::unchecked_start(-(left as f64 * step), step, left + right + 1)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn end(&self) -> f64 {
        self.point(self.count - 1)
    }

    pub fn point(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |k| self.point(k))
    }

    /// Index of the grid point equal to 0, if any.
    pub fn origin_index(&self) -> Option<usize> {
        if self.start == 0.0 {
            return Some(0);
        }
        let k = (-self.start / self.step).round();
        if k < 0.0 || k as usize >= self.count {
            return None;
        }
        let k = k as usize;
        (self.point(k).abs() <= 1e-9 * self.step).then_some(k)
    }
}

/// Number of grid steps in `length`, which must be a nonnegative multiple of `step`.
pub(crate) fn steps_in(length: f64, step: f64) -> Result<usize> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::domain(format!("grid step must be finite and > 0, got {step}")));
    }
    if !(length.is_finite() && length >= 0.0) {
        return Err(Error::domain(format!("length must be finite and >= 0, got {length}")));
    }
    let ratio = length / step;
    let k = ratio.round();
    if (ratio - k).abs() > 1e-6 * k.max(1.0) {
        return Err(Error::domain(format!(
            "length {length} is not a multiple of the grid step {step}"
        )));
    }
    Ok(k as usize)
}

/// A Gaussian path on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledPath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub hurst: HurstIndex,
}

impl SampledPath {
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.points().zip(self.values.iter().copied())
    }
}

/// `Cov(X_H(t), X_H(s)) = ½(t^{2H} + s^{2H} − |t−s|^{2H})` for `t, s ≥ 0`.
pub fn fbm_covariance(t: f64, s: f64, hurst: HurstIndex) -> Result<f64> {
    if !(t >= 0.0 && s >= 0.0) {
        return Err(Error::domain(format!("fBm covariance needs t, s >= 0, got ({t}, {s})")));
    }
    Ok(signed_covariance(t, s, 2.0 * hurst.value()))
}

/// Covariance of fBm indexed by the whole real line, anchored at 0.
pub(crate) fn signed_covariance(t: f64, s: f64, two_h: f64) -> f64 {
    0.5 * (t.abs().powf(two_h) + s.abs().powf(two_h) - (t - s).abs().powf(two_h))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
fn fgn_autocovariance(k: usize, two_h: f64) -> f64 {
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMethod {
    Circulant,
    Dense,
    Degenerate,
    Trivial,
}

#[derive(Clone)]
enum Method {
    /// Single-point grid.
    Trivial,
    Circulant {
        sqrt_eig: Arc<Vec<f64>>,
        fft: Arc<dyn Fft<f64>>,
    },
    Dense(Arc<LowRankFactor>),
    Degenerate,
}

/// Reusable buffers for one sampling thread.
pub struct Scratch {
    buf: Vec<Complex<f64>>,
    fft: Vec<Complex<f64>>,
    z: Vec<f64>,
    spare: Vec<f64>,
}

/// Sampler of fBm at `0, h, …, n·h`, immutable after construction.
#[derive(Clone)]
pub struct FbmSampler {
    steps: usize,
    step: f64,
    hurst: HurstIndex,
    method: Method,
}

impl fmt::Debug for FbmSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FbmSampler")
            .field("steps", &self.steps)
            .field("step", &self.step)
            .field("hurst", &self.hurst)
            .field("method", &self.method())
            .finish()
    }
}

impl FbmSampler {
    /// Circulant embedding with dense fallback; `H = 1` uses the degenerate
    /// representation `N·t`.
    pub fn new(steps: usize, step: f64, hurst: HurstIndex) -> Result<Self> {
        check_step(step)?;
        let method = if steps == 0 {
            Method::Trivial
        } else if hurst.is_degenerate() {
            Method::Degenerate
        } else if let Some(m) = circulant(steps, hurst) {
            m
        } else {
            log::info!(
                "circulant embedding not nonnegative definite for n={steps}, H={}; using Cholesky",
                hurst.value()
            );
            dense(steps, step, hurst)?
        };
        Ok(FbmSampler {
            steps,
            step,
            hurst,
            method,
        })
    }

    /// Dense Cholesky route regardless of the embedding.
    pub fn dense(steps: usize, step: f64, hurst: HurstIndex) -> Result<Self> {
        check_step(step)?;
        let method = if steps == 0 {
            Method::Trivial
        } else {
            dense(steps, step, hurst)?
        };
        Ok(FbmSampler {
            steps,
            step,
            hurst,
            method,
        })
    }

    pub fn method(&self) -> SamplerMethod {
        match self.method {
            Method::Trivial => SamplerMethod::Trivial,
            Method::Circulant { .. } => SamplerMethod::Circulant,
            Method::Dense(_) => SamplerMethod::Dense,
            Method::Degenerate => SamplerMethod::Degenerate,
        }
    }

    /// Number of path values produced, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hurst(&self) -> HurstIndex {
        self.hurst
    }

    pub fn scratch(&self) -> Scratch {
        let (m, rank) = match &self.method {
            Method::Circulant { sqrt_eig, .. } => (sqrt_eig.len(), 0),
            Method::Dense(f) => (0, f.rank()),
            _ => (0, 0),
        };
        let fft_len = match &self.method {
            Method::Circulant { fft, .. } => fft.get_inplace_scratch_len(),
            _ => 0,
        };
        Scratch {
            buf: vec![Complex::new(0.0, 0.0); m],
            fft: vec![Complex::new(0.0, 0.0); fft_len],
            z: vec![0.0; rank],
            spare: vec![0.0; self.len()],
        }
    }

    /// Draws one path into `out` (length `steps + 1`, `out[0] = 0`).
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut Scratch, out: &mut [f64]) {
        match &self.method {
            Method::Circulant { .. } => {
                let mut spare = std::mem::take(&mut scratch.spare);
                self.fill_pair(rng, scratch, out, &mut spare);
                scratch.spare = spare;
            }
            Method::Dense(f) => self.fill_dense(f, rng, &mut scratch.z, out),
            Method::Degenerate => self.fill_degenerate(rng.sample(StandardNormal), out),
            Method::Trivial => out[0] = 0.0,
        }
    }

    /// Draws two independent paths. For the circulant route both come from a
    /// single FFT.
    pub fn fill_pair<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        scratch: &mut Scratch,
        a: &mut [f64],
        b: &mut [f64],
    ) {
        debug_assert_eq!(a.len(), self.len());
        debug_assert_eq!(b.len(), self.len());
        match &self.method {
            Method::Circulant { sqrt_eig, fft } => {
                for (c, &s) in scratch.buf.iter_mut().zip(sqrt_eig.iter()) {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *c = Complex::new(re * s, im * s);
                }
                fft.process_with_scratch(&mut scratch.buf, &mut scratch.fft);
                let scale = self.step.powf(self.hurst.value());
                a[0] = 0.0;
                b[0] = 0.0;
                for k in 0..self.steps {
                    let inc = scratch.buf[k];
                    a[k + 1] = a[k] + scale * inc.re;
                    b[k + 1] = b[k] + scale * inc.im;
                }
            }
            Method::Dense(f) => {
                self.fill_dense(f, rng, &mut scratch.z, a);
                self.fill_dense(f, rng, &mut scratch.z, b);
            }
            Method::Degenerate => {
                self.fill_degenerate(rng.sample(StandardNormal), a);
                self.fill_degenerate(rng.sample(StandardNormal), b);
            }
            Method::Trivial => {
                a[0] = 0.0;
                b[0] = 0.0;
            }
        }
    }

    /// Convenience allocation of a single path.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut scratch = self.scratch();
        let mut out = vec![0.0; self.len()];
        self.fill(rng, &mut scratch, &mut out);
        out
    }

    fn fill_dense<R: Rng + ?Sized>(&self, f: &LowRankFactor, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        out[0] = 0.0;
        f.apply(z, &mut out[1..]);
    }

    fn fill_degenerate(&self, n: f64, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = n * (k as f64 * self.step);
        }
    }
}

fn check_step(step: f64) -> Result<()> {
    if step.is_finite() && step > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("grid step must be finite and > 0, got {step}")))
    }
}

fn circulant(steps: usize, hurst: HurstIndex) -> Option<Method> {
    let two_h = 2.0 * hurst.value();
    let half = steps.next_power_of_two();
    let m = 2 * half;
    let mut c = vec![Complex::new(0.0, 0.0); m];
    for (k, z) in c.iter_mut().take(half + 1).enumerate() {
        z.re = fgn_autocovariance(k, two_h);
    }
    for k in 1..half {
        c[m - k].re = c[k].re;
    }
    let fft = FftPlanner::new().plan_fft_forward(m);
    fft.process(&mut c);
    let max = c.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let min = c.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if min < -EMBEDDING_TOLERANCE * max {
        return None;
    }
    let sqrt_eig = c.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
    Some(Method::Circulant {
        sqrt_eig: Arc::new(sqrt_eig),
        fft,
    })
}

fn dense(steps: usize, step: f64, hurst: HurstIndex) -> Result<Method> {
    if steps > MAX_DENSE_POINTS {
        return Err(Error::Resource {
            what: "dense fBm factorization",
            size: steps,
            limit: MAX_DENSE_POINTS,
        });
    }
    let two_h = 2.0 * hurst.value();
    let mut cov = vec![0.0; steps * steps];
    for i in 0..steps {
        for j in 0..=i {
            let v = signed_covariance((i + 1) as f64 * step, (j + 1) as f64 * step, two_h);
            cov[i * steps + j] = v;
            cov[j * steps + i] = v;
        }
    }
    Ok(Method::Dense(Arc::new(linalg::factorize(&cov, steps)?)))
}

/// One exact fBm path on `grid` (which must start at 0), `H < 1`.
pub fn sample_fbm(grid: &TimeGrid, hurst: HurstIndex, seed: u64) -> Result<SampledPath> {
    if grid.start() != 0.0 {
        return Err(Error::domain("fBm paths are anchored at the origin; grid must start at 0"));
    }
    if hurst.is_degenerate() {
        return Err(Error::domain("H = 1 is sampled by sample_degenerate_fbm"));
    }
    let sampler = FbmSampler::new(grid.count() - 1, grid.step(), hurst)?;
    let values = sampler.sample(&mut chunk_rng(seed, 0));
    Ok(SampledPath {
        grid: *grid,
        values,
        hurst,
    })
}

/// The `H = 1` path `N·t` for a single standard normal `N`.
pub fn sample_degenerate_fbm(grid: &TimeGrid, seed: u64) -> SampledPath {
    let n: f64 = chunk_rng(seed, 0).sample(StandardNormal);
    SampledPath {
        grid: *grid,
        values: grid.points().map(|t| n * t).collect(),
        hurst: HurstIndex(1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TwoSidedMethod {
    /// `B(t) = B'(t + S1) − B'(S1)` from a one-sided circulant path.
    #[default]
    ShiftedIncrements,
    /// Dense factor of the two-sided covariance on the full window.
    Cholesky,
}

#[derive(Clone, Debug)]
enum WindowInner {
    Shifted(FbmSampler),
    Dense(Arc<LowRankFactor>),
}

/// Sampler of fBm `B_α` (Hurst index `α/2`) on a window grid containing 0,
/// anchored so that `B_α(0) = 0`.
#[derive(Clone, Debug)]
pub struct WindowSampler {
    grid: TimeGrid,
    origin: usize,
    alpha: f64,
    inner: WindowInner,
}

impl WindowSampler {
    pub fn new(grid: TimeGrid, alpha: f64) -> Result<Self> {
        Self::with_method(grid, alpha, TwoSidedMethod::default())
    }

    pub fn with_method(grid: TimeGrid, alpha: f64, method: TwoSidedMethod) -> Result<Self> {
        let hurst = alpha_to_hurst(alpha)?;
        let origin = grid
            .origin_index()
            .ok_or_else(|| Error::domain("window grid must contain the point 0"))?;
        let inner = match method {
            TwoSidedMethod::ShiftedIncrements => {
                WindowInner::Shifted(FbmSampler::new(grid.count() - 1, grid.step(), hurst)?)
            }
            TwoSidedMethod::Cholesky => {
                let pts: Vec<f64> = grid
                    .points()
                    .enumerate()
                    .filter(|&(k, _)| k != origin)
                    .map(|(_, t)| t)
                    .collect();
                let n = pts.len();
                if n > MAX_DENSE_POINTS {
                    return Err(Error::Resource {
                        what: "dense two-sided fBm factorization",
                        size: n,
                        limit: MAX_DENSE_POINTS,
                    });
                }
                let mut cov = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..=i {
                        let v = signed_covariance(pts[i], pts[j], alpha);
                        cov[i * n + j] = v;
                        cov[j * n + i] = v;
                    }
                }
                WindowInner::Dense(Arc::new(linalg::factorize(&cov, n)?))
            }
        };
        Ok(WindowSampler {
            grid,
            origin,
            alpha,
            inner,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scratch(&self) -> Scratch {
        match &self.inner {
            WindowInner::Shifted(s) => s.scratch(),
            WindowInner::Dense(f) => Scratch {
                buf: Vec::new(),
                fft: Vec::new(),
                z: vec![0.0; f.rank()],
                spare: vec![0.0; f.dim()],
            },
        }
    }

    /// Two independent draws of `B_α` on the window.
    pub fn fill_pair<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        scratch: &mut Scratch,
        a: &mut [f64],
        b: &mut [f64],
    ) {
        match &self.inner {
            WindowInner::Shifted(s) => {
                s.fill_pair(rng, scratch, a, b);
                recenter(a, self.origin);
                recenter(b, self.origin);
            }
            WindowInner::Dense(f) => {
                self.fill_dense(f, rng, scratch, a);
                self.fill_dense(f, rng, scratch, b);
            }
        }
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut Scratch, out: &mut [f64]) {
        match &self.inner {
            WindowInner::Shifted(s) => {
                s.fill(rng, scratch, out);
                recenter(out, self.origin);
            }
            WindowInner::Dense(f) => self.fill_dense(f, rng, scratch, out),
        }
    }

    fn fill_dense<R: Rng + ?Sized>(&self, f: &LowRankFactor, rng: &mut R, scratch: &mut Scratch, out: &mut [f64]) {
        for zi in scratch.z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        f.apply(&scratch.z, &mut scratch.spare);
        let o = self.origin;
        out[..o].copy_from_slice(&scratch.spare[..o]);
        out[o] = 0.0;
        out[o + 1..].copy_from_slice(&scratch.spare[o..]);
    }
}

fn recenter(path: &mut [f64], origin: usize) {
    let shift = path[origin];
    if shift != 0.0 {
        for v in path.iter_mut() {
            *v -= shift;
        }
    }
    path[origin] = 0.0;
}

pub(crate) fn alpha_to_hurst(alpha: f64) -> Result<HurstIndex> {
    if alpha > 0.0 && alpha <= 2.0 {
        HurstIndex::new(alpha / 2.0)
    } else {
        Err(Error::domain(format!("alpha must lie in (0, 2], got {alpha}")))
    }
}

/// The path `t ↦ √2·B_α(t) − (1+a)|t|^α` on a window grid containing 0.
pub fn sample_drifted_fbm(grid: &TimeGrid, alpha: f64, a: f64, seed: u64) -> Result<SampledPath> {
    let hurst = alpha_to_hurst(alpha)?;
    if !(a > 0.0) {
        return Err(Error::domain(format!("drift parameter a must be > 0, got {a}")));
    }
    let sampler = WindowSampler::new(*grid, alpha)?;
    let mut scratch = sampler.scratch();
    let mut values = vec![0.0; grid.count()];
    sampler.fill(&mut chunk_rng(seed, 0), &mut scratch, &mut values);
    for (v, t) in values.iter_mut().zip(grid.points()) {
        *v = std::f64::consts::SQRT_2 * *v - (1.0 + a) * t.abs().powf(alpha);
    }
    Ok(SampledPath {
        grid: *grid,
        values,
        hurst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RunningStats;
    use proptest::prelude::*;

    fn h(v: f64) -> HurstIndex {
        HurstIndex::new(v).unwrap()
    }

    #[test]
    fn hurst_bounds() {
        assert!(HurstIndex::new(0.0).is_err());
        assert!(HurstIndex::new(1.0001).is_err());
        assert!(HurstIndex::new(f64::NAN).is_err());
        assert!(HurstIndex::new(1.0).unwrap().is_degenerate());
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(fbm_covariance(1.0, 1.0, h(0.5)).unwrap(), 1.0);
        assert_eq!(fbm_covariance(2.0, 1.0, h(0.5)).unwrap(), 1.0);
        assert!((fbm_covariance(2.0, 1.0, h(0.75)).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(fbm_covariance(-1.0, 1.0, h(0.5)), Err(Error::Domain(_))));
    }

    #[test]
    fn grid_constructors() {
        let g = TimeGrid::from_horizon(2.0, 0.25).unwrap();
        assert_eq!(g.count(), 9);
        assert_eq!(g.end(), 2.0);
        assert!(TimeGrid::from_horizon(1.0, 0.3).is_err());
        assert!(TimeGrid::new(-1.0, 0.1, 3).is_err());
        let w = TimeGrid::window(0.5, 1.0, 0.25).unwrap();
        assert_eq!(w.count(), 7);
        assert_eq!(w.origin_index(), Some(2));
        assert_eq!(w.point(2), 0.0);
        assert_eq!(TimeGrid::new(0.5, 1.0, 3).unwrap().origin_index(), None);
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = TimeGrid::from_horizon(1.0, 1.0 / 64.0).unwrap();
        let a = sample_fbm(&g, h(0.3), 11).unwrap();
        let b = sample_fbm(&g, h(0.3), 11).unwrap();
        let c = sample_fbm(&g, h(0.3), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        assert_eq!(a.values[0], 0.0);
    }

    #[test]
    fn sample_fbm_rejects_bad_input() {
        let g = TimeGrid::new(1.0, 0.5, 4).unwrap();
        assert!(sample_fbm(&g, h(0.5), 0).is_err());
        let g = TimeGrid::from_horizon(1.0, 0.5).unwrap();
        assert!(sample_fbm(&g, h(1.0), 0).is_err());
    }

    #[test]
    fn dense_route_refuses_huge_grids() {
        match FbmSampler::dense(MAX_DENSE_POINTS + 1, 0.1, h(0.4)) {
            Err(Error::Resource { size, .. }) => assert_eq!(size, MAX_DENSE_POINTS + 1),
            other => panic!("expected resource error, got {other:?}"),
        }
    }

    #[test]
    fn circulant_is_default_for_fgn() {
        for hv in [0.1, 0.3, 0.5, 0.75, 0.95] {
            let s = FbmSampler::new(1000, 0.01, h(hv)).unwrap();
            assert_eq!(s.method(), SamplerMethod::Circulant);
        }
        assert_eq!(FbmSampler::new(10, 0.1, h(1.0)).unwrap().method(), SamplerMethod::Degenerate);
        assert_eq!(FbmSampler::new(0, 0.1, h(0.5)).unwrap().method(), SamplerMethod::Trivial);
    }

    #[test]
    fn two_point_grid_has_unit_variance() {
        let g = TimeGrid::from_horizon(1.0, 1.0).unwrap();
        let sampler = FbmSampler::new(1, 1.0, h(0.5)).unwrap();
        let mut scratch = sampler.scratch();
        let (mut a, mut b) = (vec![0.0; 2], vec![0.0; 2]);
        let mut st = RunningStats::new();
        let mut rng = chunk_rng(3, 0);
        for _ in 0..50_000 {
            sampler.fill_pair(&mut rng, &mut scratch, &mut a, &mut b);
            st.push(a[1] * a[1]);
            st.push(b[1] * b[1]);
        }
        assert_eq!(g.count(), 2);
        assert!((st.mean() - 1.0).abs() < 3.0 * st.std_error(), "{}", st.mean());
    }

    /// Empirical covariance of two grid values from both sampling routes.
    fn empirical_cov(sampler: &FbmSampler, i: usize, j: usize, n: usize, seed: u64) -> (f64, f64) {
        let mut scratch = sampler.scratch();
        let mut a = vec![0.0; sampler.len()];
        let mut rng = chunk_rng(seed, 0);
        let mut st = RunningStats::new();
        for _ in 0..n {
            sampler.fill(&mut rng, &mut scratch, &mut a);
            st.push(a[i] * a[j]);
        }
        (st.mean(), st.std_error())
    }

    #[test]
    fn dense_and_circulant_routes_agree_with_covariance() {
        let hv = h(0.3);
        let target = fbm_covariance(1.0, 0.5, hv).unwrap();
        for sampler in [
            FbmSampler::new(16, 1.0 / 16.0, hv).unwrap(),
            FbmSampler::dense(16, 1.0 / 16.0, hv).unwrap(),
        ] {
            let (m, se) = empirical_cov(&sampler, 16, 8, 40_000, 5);
            assert!((m - target).abs() < 3.5 * se, "{:?}: {m} vs {target}", sampler.method());
        }
    }

    #[test]
    fn self_similarity_of_variance() {
        for hv in [0.3, 0.5, 0.75] {
            let sampler = FbmSampler::new(8, 0.25, h(hv)).unwrap();
            let (m, se) = empirical_cov(&sampler, 8, 8, 40_000, 17);
            let target = 2f64.powf(2.0 * hv);
            assert!((m - target).abs() < 3.5 * se, "H={hv}: {m} vs {target}");
        }
    }

    #[test]
    fn covariance_matrix_is_psd() {
        for hv in [0.1, 0.5, 0.9] {
            let n = 256;
            let mut cov = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    cov[i * n + j] = fbm_covariance(i as f64 / 64.0, j as f64 / 64.0, h(hv)).unwrap();
                }
            }
            assert!(linalg::min_eigenvalue(&cov, n) >= -1e-8);
        }
    }

    #[test]
    fn degenerate_path_is_linear() {
        let g = TimeGrid::new(0.0, 1.0, 3).unwrap();
        let p = sample_degenerate_fbm(&g, 4);
        let n = p.values[1];
        assert_eq!(p.values, vec![0.0, n, 2.0 * n]);
        let g = TimeGrid::new(0.0, 0.1, 50).unwrap();
        let p = sample_degenerate_fbm(&g, 8);
        for w in p.values.windows(3) {
            assert!((w[2] - 2.0 * w[1] + w[0]).abs() < 1e-12);
        }
        let st: RunningStats = (0..20_000u64)
            .map(|s| sample_degenerate_fbm(&TimeGrid::new(0.0, 1.0, 2).unwrap(), s).values[1].powi(2))
            .collect();
        assert!((st.mean() - 1.0).abs() < 3.0 * st.std_error());
    }

    #[test]
    fn drifted_path_vanishes_at_origin() {
        let g = TimeGrid::window(1.0, 2.0, 0.125).unwrap();
        for alpha in [0.6, 1.0, 1.7, 2.0] {
            let p = sample_drifted_fbm(&g, alpha, 0.5, 1).unwrap();
            assert_eq!(p.values[g.origin_index().unwrap()], 0.0);
        }
        assert!(sample_drifted_fbm(&g, 2.5, 1.0, 1).is_err());
        assert!(sample_drifted_fbm(&g, 1.0, 0.0, 1).is_err());
        assert!(sample_drifted_fbm(&TimeGrid::new(1.0, 0.5, 3).unwrap(), 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn drifted_path_alpha_two_is_quadratic() {
        let g = TimeGrid::window(0.0, 2.0, 0.25).unwrap();
        let p = sample_drifted_fbm(&g, 2.0, 1.0, 9).unwrap();
        let slope = p.values[1] / 0.25 + 2.0 * 0.25;
        for (t, v) in p.iter() {
            assert!((v - (slope * t - 2.0 * t * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn drift_dominates_for_large_a() {
        let g = TimeGrid::window(0.0, 1.0, 0.25).unwrap();
        let small = sample_drifted_fbm(&g, 1.0, 1.0, 2).unwrap();
        let large = sample_drifted_fbm(&g, 1.0, 1e6, 2).unwrap();
        assert!(large.values[4] < small.values[4]);
        assert!(large.values[4] < -1e5);
    }

    #[test]
    fn two_sided_routes_share_cross_covariance() {
        // Cov(B(−1), B(1)) = ½(1 + 1 − 2^{2H}) for B = B_α, H = α/2.
        let alpha = 1.4;
        let target = signed_covariance(-1.0, 1.0, alpha);
        let g = TimeGrid::window(1.0, 1.0, 0.125).unwrap();
        for method in [TwoSidedMethod::ShiftedIncrements, TwoSidedMethod::Cholesky] {
            let s = WindowSampler::with_method(g, alpha, method).unwrap();
            let mut scratch = s.scratch();
            let (mut a, mut b) = (vec![0.0; g.count()], vec![0.0; g.count()]);
            let mut rng = chunk_rng(21, 0);
            let mut st = RunningStats::new();
            for _ in 0..25_000 {
                s.fill_pair(&mut rng, &mut scratch, &mut a, &mut b);
                st.push(a[0] * a[16]);
                st.push(b[0] * b[16]);
                assert_eq!(a[8], 0.0);
            }
            assert!((st.mean() - target).abs() < 3.5 * st.std_error(), "{method:?}: {} vs {target}", st.mean());
        }
    }

    proptest! {
        #[test]
        fn covariance_symmetry_and_increments(t in 0.0f64..50.0, s in 0.0f64..50.0, hv in 0.01f64..=1.0) {
            let hh = h(hv);
            let c = fbm_covariance(t, s, hh).unwrap();
            prop_assert_eq!(c, fbm_covariance(s, t, hh).unwrap());
            let var_inc = fbm_covariance(t, t, hh).unwrap() + fbm_covariance(s, s, hh).unwrap() - 2.0 * c;
            let scale = t.max(s).max(1.0).powf(2.0 * hv);
            prop_assert!((var_inc - (t - s).abs().powf(2.0 * hv)).abs() <= 1e-12 * scale);
            prop_assert!((fbm_covariance(t, t, hh).unwrap() - t.powf(2.0 * hv)).abs() <= 1e-12 * scale);
        }
    }
}
