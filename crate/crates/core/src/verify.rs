//! Acceptance harness: each criterion runs at its stated tolerance and
//! reports pass/fail with the numbers behind the verdict.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::asymptotics::{
    maximizer_y, psi0_inf, psi_gamma_inf, ratio_constant, std_normal_tail, variance_y, ConstantProvider,
};
use crate::constants::{
    exact_constant, exact_pickands, pickands_limit, piterbarg_limit, ConstantEstimate, ConstantKind, Estimator,
    LadderPolicy, Sidedness,
};
use crate::error::Result;
use crate::exec::{chunk_rng, derive_seed, ExecMode};
use crate::fbm::{fbm_covariance, FbmSampler, HurstIndex, SamplerMethod};
use crate::field::{build_field, estimate_field_tail_with, FieldSpec, Resolution, SigmaSpec};
use crate::montecarlo::{
    estimate_ratio_with, estimate_tail_infinite_with, exact_bm_oracles, refinement_check, HorizonPolicy, McOptions,
};
use crate::reflected::{reflect, reflected_suprema, supremum, Horizon, ProcessParams};
use crate::stats::RunningStats;

/// Base seed of the acceptance runs.
pub const ACCEPTANCE_SEED: u64 = 20_130_917;

pub const CRITERIA: [u8; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: Vec<String>,
    pub elapsed_secs: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<32} {} ({:.1} s)",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed_secs
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub exec: ExecMode,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            exec: ExecMode::default(),
            seed: ACCEPTANCE_SEED,
        }
    }
}

/// Collects sub-checks; the criterion passes only if all of them do.
struct Checks {
    ok: bool,
    detail: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Checks {
            ok: true,
            detail: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, msg: String) {
        self.ok &= ok;
        self.detail.push(format!("[{}] {msg}", if ok { "ok" } else { "FAIL" }));
    }

    fn note(&mut self, msg: String) {
        self.detail.push(format!("[info] {msg}"));
    }

    fn fail(&mut self, msg: String) {
        self.check(false, msg);
    }
}

fn timed(id: u8, name: &'static str, f: impl FnOnce(&mut Checks) -> Result<()>) -> CriterionReport {
    let start = Instant::now();
    let mut c = Checks::new();
    if let Err(e) = f(&mut c) {
        c.fail(format!("error: {e}"));
    }
    CriterionReport {
        id,
        name,
        passed: c.ok,
        detail: c.detail,
        elapsed_secs: start.elapsed().as_secs_f64(),
    }
}

fn runtime_check(c: &mut Checks, start: Instant, limit: Duration) {
    let el = start.elapsed();
    c.check(el < limit, format!("runtime {:.1} s < {} s", el.as_secs_f64(), limit.as_secs()));
}

pub fn run(id: u8, opts: &VerifyOptions) -> Option<CriterionReport> {
    Some(match id {
        1 => covariance_fidelity(opts),
        2 => bm_infinite_horizon(opts),
        3 => tax_identity(opts),
        4 => exact_constants(),
        5 => simulated_constants(opts),
        6 => formula_identities(opts),
        7 => maximizer_oracle(),
        8 => pathwise_properties(opts),
        9 => field_lab(opts),
        10 => asymptotic_trend(opts),
        _ => return None,
    })
}

pub fn run_all(opts: &VerifyOptions) -> Vec<CriterionReport> {
    CRITERIA.iter().filter_map(|&id| run(id, opts)).collect()
}

fn seed(opts: &VerifyOptions, id: u8) -> u64 {
    derive_seed(opts.seed, id as u64)
}

fn mc(opts: &VerifyOptions) -> McOptions {
    McOptions {
        exec: opts.exec,
        ..McOptions::default()
    }
}

/// 1. Empirical `Cov(X(2), X(1))` against the closed form.
pub fn covariance_fidelity(opts: &VerifyOptions) -> CriterionReport {
    timed(1, "covariance fidelity", |c| {
        let start = Instant::now();
        let n = 100_000;
        let step = 1.0 / 16.0;
        for (k, h) in [0.3, 0.5, 0.75].into_iter().enumerate() {
            let hurst = HurstIndex::new(h)?;
            let sampler = FbmSampler::new(32, step, hurst)?;
            c.check(sampler.method() == SamplerMethod::Circulant, format!("H={h}: circulant embedding in use"));
            let mut rng = chunk_rng(seed(opts, 1), k as u64);
            let mut scratch = sampler.scratch();
            let (mut a, mut b) = (vec![0.0; 33], vec![0.0; 33]);
            let mut prod = RunningStats::new();
            for _ in 0..n / 2 {
                sampler.fill_pair(&mut rng, &mut scratch, &mut a, &mut b);
                prod.push(a[32] * a[16]);
                prod.push(b[32] * b[16]);
            }
            let exact = fbm_covariance(2.0, 1.0, hurst)?;
            let z = (prod.mean() - exact) / prod.std_error();
            c.check(
                z.abs() <= 3.0,
                format!("H={h}: Cov = {:.5} ± {:.5}, exact {exact:.5} ({z:+.2} SE)", prod.mean(), prod.std_error()),
            );
        }
        runtime_check(c, start, Duration::from_secs(30));
        Ok(())
    })
}

fn tolerance_check(c: &mut Checks, label: &str, est: f64, se: f64, exact: f64) {
    let tol = (3.0 * se).max(0.05 * exact);
    c.check(
        (est - exact).abs() <= tol,
        format!("{label}: {est:.5} (SE {se:.5}) vs exact {exact:.6}, |diff| {:.5}, tolerance {tol:.5}", (est - exact).abs()),
    );
}

const BM_STEP: f64 = 1.0 / 1024.0;

/// 2. `ψ̂_{0,∞}(1)` for Brownian motion against `e^{−2}`.
pub fn bm_infinite_horizon(opts: &VerifyOptions) -> CriterionReport {
    timed(2, "BM infinite horizon", |c| {
        let start = Instant::now();
        let p = ProcessParams::new(0.5, 1.0, 0.0, Horizon::Infinite)?;
        let e = estimate_tail_infinite_with(&p, 1.0, 100_000, BM_STEP, &HorizonPolicy::default(), seed(opts, 2), &mc(opts))?;
        let exact = exact_bm_oracles(1.0, 1.0, 0.0, Horizon::Infinite)?;
        tolerance_check(c, "psi_0,inf(1)", e.probability, e.std_error, exact);
        truncation_note(c, &e);
        runtime_check(c, start, Duration::from_secs(120));
        refinement_note(c, &p, seed(opts, 2), opts)
    })
}

fn truncation_note(c: &mut Checks, e: &crate::montecarlo::TailEstimate) {
    if let Some(t) = e.truncation {
        c.note(format!(
            "T_eff = {} (kappa {}), doubled-horizon estimate {:.5}, doubling check {}",
            t.t_eff,
            t.kappa,
            t.doubled_probability.unwrap_or(f64::NAN),
            match t.doubling_agrees {
                Some(true) => "agrees",
                Some(false) => "disagrees",
                None => "not run",
            }
        ));
    }
}

/// Step-halving diagnostic on the acceptance grid; reported, not gated.
fn refinement_note(c: &mut Checks, p: &ProcessParams, seed: u64, opts: &VerifyOptions) -> Result<()> {
    let policy = HorizonPolicy {
        doubling_check: false,
        ..HorizonPolicy::default()
    };
    let r = refinement_check(p, 1.0, 100_000, BM_STEP, &policy, derive_seed(seed, 7), &mc(opts))?;
    c.note(format!(
        "step halving {} -> {}: {:.5} -> {:.5} (difference {:.5}, CI half-width {:.5}, {})",
        r.coarse_step,
        r.coarse_step / 2.0,
        r.coarse,
        r.fine,
        r.difference,
        r.ci_half_width,
        if r.agrees { "agrees" } else { "disagrees" }
    ));
    Ok(())
}

fn bm_ratio_exact(u: f64) -> f64 {
    let p0 = (-2.0 * u).exp();
    (1.0 - (1.0 - p0).powi(2)) / p0
}

/// 3. `ψ̂_{½,∞}(1)` against the tax identity, and the coupled ratio at `u = 1`.
pub fn tax_identity(opts: &VerifyOptions) -> CriterionReport {
    timed(3, "tax identity", |c| {
        let p = ProcessParams::new(0.5, 1.0, 0.5, Horizon::Infinite)?;
        let e = estimate_tail_infinite_with(&p, 1.0, 100_000, BM_STEP, &HorizonPolicy::default(), seed(opts, 3), &mc(opts))?;
        let exact = exact_bm_oracles(1.0, 1.0, 0.5, Horizon::Infinite)?;
        tolerance_check(c, "psi_0.5,inf(1)", e.probability, e.std_error, exact);
        truncation_note(c, &e);
        refinement_note(c, &p, seed(opts, 3), opts)?;
        let policy = HorizonPolicy {
            doubling_check: false,
            ..HorizonPolicy::default()
        };
        let r = estimate_ratio_with(&p, 1.0, 100_000, BM_STEP, &policy, derive_seed(seed(opts, 3), 1), &mc(opts))?;
        let exact = bm_ratio_exact(1.0);
        c.check(
            (r.ratio - exact).abs() <= 3.0 * r.std_error,
            format!("ratio(1) = {:.4} ± {:.4} vs exact {exact:.4}", r.ratio, r.std_error),
        );
        Ok(())
    })
}

/// 4. Closed-form constants.
pub fn exact_constants() -> CriterionReport {
    timed(4, "exact constants", |c| {
        for a in [0.5, 1.0, 3.0] {
            let p1 = exact_constant(1.0, a)?;
            let p2 = exact_constant(2.0, a)?;
            let (e1, e2) = (1.0 + 1.0 / a, 0.5 * (1.0 + (1.0 + 1.0 / a).sqrt()));
            c.check((p1 - e1).abs() <= 1e-12, format!("P_1^{a} = {p1}"));
            c.check((p2 - e2).abs() <= 1e-12, format!("P_2^{a} = {p2}"));
        }
        let h1 = exact_pickands(1.0)?;
        let h2 = exact_pickands(2.0)?;
        c.check((h1 - 1.0).abs() <= 1e-12, format!("H_1 = {h1}"));
        c.check((h2 - 1.0 / std::f64::consts::PI.sqrt()).abs() <= 1e-12, format!("H_2 = {h2}"));
        Ok(())
    })
}

fn ladder_note(c: &mut Checks, e: &ConstantEstimate) {
    let rungs: Vec<String> = e.ladder.iter().map(|p| format!("{}:{:.4}±{:.4}", p.window, p.estimate, p.std_error)).collect();
    c.note(format!("ladder {}", rungs.join(" ")));
}

/// 5. Simulated limit constants against their closed forms at the default ladder.
pub fn simulated_constants(opts: &VerifyOptions) -> CriterionReport {
    timed(5, "simulated constants", |c| {
        let policy = LadderPolicy {
            exec: opts.exec,
            ..LadderPolicy::default()
        };
        let limit = Duration::from_secs(300);
        let cases: [(&str, f64, f64); 3] = [("P_1^1", 1.0, 2.0), ("P_2^1", 2.0, 0.5 * (1.0 + 2f64.sqrt())), ("H_1", 0.0, 1.0)];
        for (k, (label, alpha, exact)) in cases.into_iter().enumerate() {
            let start = Instant::now();
            let s = derive_seed(seed(opts, 5), k as u64);
            let e = if alpha == 0.0 {
                pickands_limit(1.0, &policy, s)?
            } else {
                piterbarg_limit(alpha, 1.0, Sidedness::OneSided, &policy, s)?
            };
            c.check(
                (e.estimate - exact).abs() <= 0.1 * exact,
                format!("{label} = {:.4} ± {:.4} vs {exact:.4} ({:?} estimator)", e.estimate, e.std_error, e.estimator),
            );
            ladder_note(c, &e);
            runtime_check(c, start, limit);
        }
        Ok(())
    })
}

/// Stand-in constants for algebraic identities where every constant cancels.
fn placeholder_provider(rng: &mut ChaCha8Rng, hursts: &[f64], gammas: &[f64]) -> Result<ConstantProvider> {
    let mut p = ConstantProvider::simulation_backed();
    let est = |kind, alpha, a, v| ConstantEstimate {
        kind,
        alpha,
        a,
        window: [0.0, 0.0],
        grid_step: 0.0,
        estimate: v,
        std_error: 0.0,
        n_samples: 0,
        estimator: Estimator::Crude,
        downward_biased: false,
        ladder: Vec::new(),
    };
    for &h in hursts {
        p.attach(est(ConstantKind::PickandsLimit, 2.0 * h, None, rng.random_range(0.2..2.0)))?;
        for &g in gammas {
            p.attach(est(ConstantKind::PiterbargLimit, 2.0 * h, Some((1.0 - g) / g), rng.random_range(1.0..4.0)))?;
        }
    }
    Ok(p)
}

/// 6. Algebraic identities of the asymptotic formulas.
pub fn formula_identities(opts: &VerifyOptions) -> CriterionReport {
    timed(6, "formula identities", |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed(opts, 6));
        let triples: Vec<(f64, f64, f64)> = (0..20)
            .map(|_| (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95), rng.random_range(0.1..20.0)))
            .collect();
        let hs: Vec<f64> = triples.iter().map(|t| t.0).collect();
        let gs: Vec<f64> = triples.iter().map(|t| t.1).collect();
        let provider = placeholder_provider(&mut rng, &hs, &gs)?;
        c.note("random H use stand-in constant values; the identity holds for any value".into());
        let mut worst = 0.0f64;
        for &(h, g, u) in &triples {
            let num = psi_gamma_inf(u, h, 1.0, g, &provider)?;
            let den = psi0_inf(u, h, 1.0, &provider)?;
            let m = ratio_constant(h, g, Horizon::Infinite, &provider)?.value;
            let ratio = if den.value > 0.0 { num.value / den.value } else { (num.ln_value() - den.ln_value()).exp() };
            worst = worst.max((ratio - m).abs() / m);
        }
        c.check(worst <= 1e-10, format!("ratio identity over 20 triples: worst relative error {worst:.2e}"));

        let exact = ConstantProvider::exact_only();
        let v = psi0_inf(50.0, 0.5, 1.0, &exact)?;
        let r = v.value / (-100f64).exp();
        c.check(
            (r - 1.0).abs() <= 1e-4,
            format!("psi0_inf(50, 1/2, 1) / e^-100 = {r:.6} (|r - 1| = {:.2e}, tolerance 1e-4)", (r - 1.0).abs()),
        );

        let mut worst = 0.0f64;
        for &(_, g, u) in &triples {
            let v = psi_gamma_inf(u, 0.5, 1.0, g, &exact)?;
            let x = 2.0 * u.sqrt();
            let simple = 2.0 * (2.0 * std::f64::consts::PI).sqrt() * u.sqrt() / (1.0 - g) * std_normal_tail(x);
            worst = worst.max((v.value - simple).abs() / simple);
        }
        c.check(worst <= 1e-10, format!("H = 1/2 simplified form: worst relative error {worst:.2e}"));
        Ok(())
    })
}

/// 7. Lemma maximizer against a brute-force grid search of `V_Y`.
pub fn maximizer_oracle() -> CriterionReport {
    timed(7, "maximizer oracle", |c| {
        let res = 1e-3;
        let n = 5000;
        for (h, cc) in [(0.3, 1.0), (0.5, 1.0), (0.5, 2.0), (0.75, 1.0)] {
            let m = maximizer_y(h, cc)?;
            for g in [0.25, 0.75] {
                let (mut best, mut bs, mut bt) = (f64::NEG_INFINITY, 0.0, 0.0);
                for j in 0..=n {
                    let t = j as f64 * res;
                    for i in 0..=j {
                        let s = i as f64 * res;
                        let v = variance_y(s, t, h, g, cc)?;
                        if v > best {
                            (best, bs, bt) = (v, s, t);
                        }
                    }
                }
                let dloc = (bs - m.s0).abs().max((bt - m.t0).abs());
                let dval = (best - m.value).abs();
                c.check(
                    dloc <= 2e-3 && dval <= 1e-4,
                    format!(
                        "H={h}, c={cc}, gamma={g}: grid max {best:.6} at ({bs:.3}, {bt:.3}); lemma {:.6} at (0, {:.4})",
                        m.value, m.t0
                    ),
                );
            }
        }
        Ok(())
    })
}

/// 8. Pathwise properties on random paths.
pub fn pathwise_properties(opts: &VerifyOptions) -> CriterionReport {
    timed(8, "pathwise properties", |c| {
        let n_paths = 10_000;
        let steps = 256;
        let mut rng = ChaCha8Rng::seed_from_u64(seed(opts, 8));
        let (mut mono, mut nest, mut refine, mut determinism) = (0u32, 0u32, 0u32, 0u32);
        let samplers: Vec<FbmSampler> = [0.2, 0.5, 0.8, 1.0]
            .iter()
            .map(|&h| FbmSampler::new(steps, 1.0 / 64.0, HurstIndex::new(h).unwrap()))
            .collect::<Result<_>>()?;
        let gammas = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mut sup = [0.0; 5];
        let mut coarse_sup = [0.0; 5];
        for k in 0..n_paths {
            let sampler = &samplers[k % samplers.len()];
            let path_seed: u64 = rng.random();
            let x = sampler.sample(&mut chunk_rng(path_seed, 0));
            if x != sampler.sample(&mut chunk_rng(path_seed, 0)) {
                determinism += 1;
            }
            let cdrift = rng.random_range(0.0..3.0);
            reflected_suprema(&x, 1.0 / 64.0, cdrift, &gammas, &[x.len()], &mut sup);
            mono += sup.windows(2).filter(|w| w[1] < w[0]).count() as u32;
            let u = rng.random_range(0.0..2.0);
            nest += sup.windows(2).filter(|w| w[0] > u && w[1] <= u).count() as u32;
            let coarse: Vec<f64> = x.iter().step_by(2).copied().collect();
            reflected_suprema(&coarse, 1.0 / 32.0, cdrift, &gammas, &[coarse.len()], &mut coarse_sup);
            refine += sup.iter().zip(&coarse_sup).filter(|(f, c)| f < c).count() as u32;
        }
        // Cross-check the fast kernel against the reference reflection map.
        let g = crate::fbm::TimeGrid::from_horizon(4.0, 1.0 / 64.0)?;
        let mut kernel = 0u32;
        for s in 0..100 {
            let p = crate::fbm::sample_fbm(&g, HurstIndex::new(0.4)?, s)?;
            reflected_suprema(&p.values, g.step(), 1.0, &gammas, &[p.values.len()], &mut sup);
            for (gi, &gm) in gammas.iter().enumerate() {
                kernel += (supremum(&reflect(&p, 1.0, gm)?) != sup[gi]) as u32;
            }
        }
        c.check(mono == 0, format!("monotonicity in gamma: {mono} violations over {n_paths} paths"));
        c.check(nest == 0, format!("nested exceedance events: {nest} violations"));
        c.check(refine == 0, format!("grid refinement never lowers the supremum: {refine} violations"));
        c.check(determinism == 0, format!("determinism under seed: {determinism} violations"));
        c.check(kernel == 0, format!("fast kernel matches reflection map: {kernel} mismatches"));
        Ok(())
    })
}

/// 9. Field lab reductions and theory dichotomies.
pub fn field_lab(opts: &VerifyOptions) -> CriterionReport {
    timed(9, "field lab", |c| {
        let f = build_field(&FieldSpec::rank_one(), Resolution::square(8))?;
        let e = estimate_field_tail_with(&f, 2.0, 200_000, seed(opts, 9), opts.exec)?;
        let exact = std_normal_tail(2.0);
        c.check(
            (e.probability - exact).abs() <= 3.0 * e.std_error,
            format!("rank-1 field: {:.5} ± {:.5} vs Psi(2) = {exact:.5}", e.probability, e.std_error),
        );

        let inner = FieldSpec::mixed(1.5);
        let mut edge = inner;
        if let SigmaSpec::Exponential { ref mut t0, .. } = edge.sigma {
            *t0 = 0.0;
        }
        let mut provider = ConstantProvider::simulation_backed();
        let policy = LadderPolicy {
            windows: vec![2.0, 4.0],
            grid_step: 0.02,
            n_samples: 4000,
            exec: opts.exec,
            ..LadderPolicy::default()
        };
        let mut reqs = crate::asymptotics::MixedField {
            b1: 1.0,
            b2: 1.0,
            a1: 1.0,
            a2: 1.0,
            beta: 1.5,
            s0_interior: false,
            t0_interior: false,
        }
        .constants();
        reqs.dedup();
        provider.populate(&reqs, &policy, derive_seed(seed(opts, 9), 1))?;
        for u in [2.0, 3.0, 4.0] {
            let (a, b) = (inner.theory(u, &provider)?.value, edge.theory(u, &provider)?.value);
            c.check(a / b == 2.0, format!("u={u}: interior/boundary theory ratio = {}", a / b));
        }

        let iv = FieldSpec {
            s_len: 1.0,
            t_len: 1.0,
            sigma: SigmaSpec::Exponential {
                s0: 0.0,
                t0: 0.0,
                b1: 1.0,
                b2: 1.0,
                b3: 0.0,
                beta_s: 1.0,
                beta_t: 1.0,
            },
            correlation: crate::field::CorrelationSpec::Exponential {
                a1: 1.0,
                a2: 1.0,
                alpha_s: 2.0,
                alpha_t: 2.0,
            },
        };
        for u in [1.0, 3.0] {
            let v = iv.theory(u, &provider)?.value;
            c.check((v - std_normal_tail(u)).abs() <= 1e-12, format!("case iv at u={u}: {v:e} vs Psi(u)"));
        }
        Ok(())
    })
}

/// 10. Trend properties of the coupled ratio estimator.
pub fn asymptotic_trend(opts: &VerifyOptions) -> CriterionReport {
    timed(10, "asymptotic trend", |c| {
        let p = ProcessParams::new(0.5, 1.0, 0.5, Horizon::Infinite)?;
        let policy = HorizonPolicy {
            doubling_check: false,
            ..HorizonPolicy::default()
        };
        for (k, u) in [1.0, 2.0].into_iter().enumerate() {
            let r = estimate_ratio_with(&p, u, 100_000, BM_STEP, &policy, derive_seed(seed(opts, 10), k as u64), &mc(opts))?;
            let exact = bm_ratio_exact(u);
            c.check(
                (r.ratio - exact).abs() <= 3.0 * r.std_error,
                format!("T=inf, u={u}: ratio {:.4} ± {:.4} vs exact {exact:.4}", r.ratio, r.std_error),
            );
        }
        for h in [0.3, 0.5, 0.75] {
            let mut last = 1.0;
            let mut ok = true;
            let mut seen = Vec::new();
            for g in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let p = ProcessParams::new(h, 1.0, g, Horizon::Finite(2.0))?;
                let r = estimate_ratio_with(&p, 1.5, 20_000, 1.0 / 128.0, &policy, seed(opts, 10) ^ 0xF1, &mc(opts))?;
                ok &= r.ratio >= 1.0 && r.ratio >= last;
                last = r.ratio;
                seen.push(format!("{:.3}", r.ratio));
            }
            c.check(ok, format!("T=2, H={h}: ratios over gamma 0..1 = [{}]", seen.join(", ")));
        }
        Ok(())
    })
}
