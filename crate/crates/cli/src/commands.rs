use std::fmt::Write as _;

use grl_core::asymptotics::{
    self, psi0_finite, psi0_inf, psi_gamma_finite, psi_gamma_inf, ConstantProvider, ConstantRequest, MixedField,
    TwoParamField,
};
use grl_core::constants::{
    exact_constant, exact_pickands, pickands_limit, pickands_window_with, piterbarg_limit, piterbarg_window_with,
    ConstantEstimate, Estimator, LadderPolicy, Sidedness, WindowOptions,
};
use grl_core::exec::derive_seed;
use grl_core::fbm::{sample_degenerate_fbm, sample_fbm, HurstIndex, TimeGrid};
use grl_core::field::{compare_to_theory, comparison_csv, FieldSpec, Resolution};
use grl_core::montecarlo::{
    degenerate_oracle, estimate_ratio_with, estimate_tail_infinite_with, estimate_tail_with, exact_bm_oracles,
    HorizonPolicy, McOptions, MAX_PATH_STEPS,
};
use grl_core::reflected::{reflect, supremum, Horizon, ProcessParams};
use grl_core::verify::{self, VerifyOptions, CRITERIA};
use grl_core::{Error, ExecMode};
use serde_json::{json, Value};

use crate::args::*;
use crate::Failure;

/// A command result before the reproducibility header is attached.
pub enum Body {
    Json(Value),
    /// JSON form plus a CSV table, for tabular results.
    Table(Value, String),
}

pub struct Outcome {
    pub body: Body,
    /// Criteria that failed (verify only).
    pub failed: Vec<u8>,
}

impl From<Body> for Outcome {
    fn from(body: Body) -> Self {
        Outcome { body, failed: Vec::new() }
    }
}

pub struct Ctx {
    pub seed: u64,
    pub exec: ExecMode,
}

fn need<T: Copy>(v: Option<T>, flag: &str, what: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("{what} needs --{flag}")))
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize")
}

pub fn simulate(a: &SimulateArgs, ctx: &Ctx) -> Result<Outcome, Failure> {
    let hurst = HurstIndex::new(a.hurst)?;
    let grid = TimeGrid::from_horizon(a.horizon, a.step)?;
    if grid.count() > MAX_PATH_STEPS + 1 {
        return Err(Error::Resource {
            what: "simulated path",
            size: grid.count(),
            limit: MAX_PATH_STEPS + 1,
        }
        .into());
    }
    let mut paths = Vec::with_capacity(a.paths);
    let mut csv = String::from("path,t,x,w\n");
    for i in 0..a.paths {
        let s = derive_seed(ctx.seed, i as u64);
        let path = if hurst.is_degenerate() {
            sample_degenerate_fbm(&grid, s)
        } else {
            sample_fbm(&grid, hurst, s)?
        };
        let rp = reflect(&path, a.c, a.gamma)?;
        for ((t, x), w) in path.iter().zip(&rp.w_values) {
            let _ = writeln!(csv, "{i},{t},{x},{w}");
        }
        paths.push(json!({
            "path": i,
            "x": path.values,
            "w": rp.w_values,
            "supremum": supremum(&rp),
        }));
    }
    Ok(Body::Table(json!({ "grid": grid, "paths": paths }), csv).into())
}

fn process(a: &TailArgs) -> Result<(ProcessParams, HorizonPolicy), Failure> {
    let params = ProcessParams::new(a.hurst, a.c, a.gamma, a.horizon)?;
    let policy = HorizonPolicy {
        kappa: a.kappa,
        doubling_check: !a.no_doubling,
    };
    Ok((params, policy))
}

/// Closed-form tail where one exists (`H = ½` or `H = 1`).
fn exact_tail(a: &TailArgs, gamma: f64) -> Option<f64> {
    if a.hurst == 0.5 {
        exact_bm_oracles(a.u, a.c, gamma, a.horizon).ok()
    } else if a.hurst == 1.0 {
        degenerate_oracle(a.u, a.c, a.horizon).ok()
    } else {
        None
    }
}

pub fn tail(a: &TailArgs, ctx: &Ctx) -> Result<Outcome, Failure> {
    let (params, policy) = process(a)?;
    let opts = McOptions {
        exec: ctx.exec,
        ..McOptions::default()
    };
    let est = match a.horizon {
        Horizon::Infinite => estimate_tail_infinite_with(&params, a.u, a.n, a.step, &policy, ctx.seed, &opts)?,
        Horizon::Finite(_) => estimate_tail_with(&params, a.u, a.n, a.step, ctx.seed, &opts)?,
    };
    Ok(Body::Json(json!({ "estimate": est, "exact": exact_tail(a, a.gamma) })).into())
}

pub fn ratio(a: &TailArgs, ctx: &Ctx) -> Result<Outcome, Failure> {
    let (params, policy) = process(a)?;
    let opts = McOptions {
        exec: ctx.exec,
        ..McOptions::default()
    };
    let est = estimate_ratio_with(&params, a.u, a.n, a.step, &policy, ctx.seed, &opts)?;
    let exact = match (exact_tail(a, a.gamma), exact_tail(a, 0.0)) {
        (Some(num), Some(den)) if den > 0.0 => Some(num / den),
        _ => None,
    };
    let limit = if a.hurst < 1.0 {
        asymptotics::ratio_constant(a.hurst, a.gamma, a.horizon, &ConstantProvider::exact_only())
            .ok()
            .map(|r| r.value)
    } else {
        None
    };
    Ok(Body::Json(json!({ "estimate": est, "exact_ratio": exact, "ratio_constant": limit })).into())
}

fn estimator(e: Option<EstimatorArg>, fallback: Estimator) -> Estimator {
    match e {
        Some(EstimatorArg::Crude) => Estimator::Crude,
        Some(EstimatorArg::MixtureTilt) => Estimator::MixtureTilt,
        None => fallback,
    }
}

fn ladder_csv(e: &ConstantEstimate) -> String {
    let mut csv = String::from("window,estimate,std_error\n");
    if e.ladder.is_empty() {
        let _ = writeln!(csv, "{},{},{}", e.window[1], e.estimate, e.std_error);
    }
    for p in &e.ladder {
        let _ = writeln!(csv, "{},{},{}", p.window, p.estimate, p.std_error);
    }
    csv
}

pub fn constants(a: &ConstantsArgs, ctx: &Ctx) -> Result<Outcome, Failure> {
    let sidedness = if a.two_sided {
        Sidedness::TwoSided
    } else {
        Sidedness::OneSided
    };
    let est = match a.family {
        ConstantFamily::Exact => {
            let (req, value) = match a.a {
                None => (ConstantRequest::Pickands { alpha: a.alpha }, exact_pickands(a.alpha)?),
                Some(p) if a.two_sided => {
                    let req = ConstantRequest::PiterbargTwoSided { alpha: a.alpha, a: p };
                    let v = req.exact().ok_or_else(|| {
                        Error::Unsupported(format!("no closed form for {req}; closed forms exist for alpha 1 and 2"))
                    })?;
                    (req, v)
                }
                Some(p) => (ConstantRequest::Piterbarg { alpha: a.alpha, a: p }, exact_constant(a.alpha, p)?),
            };
            return Ok(Body::Json(json!({ "constant": req.to_string(), "value": value })).into());
        }
        ConstantFamily::Pickands => {
            let est = estimator(a.estimator, Estimator::MixtureTilt);
            match a.window {
                Some(t) => pickands_window_with(a.alpha, t, a.step, a.n, ctx.seed, opts(est, ctx))?,
                None => pickands_limit(a.alpha, &ladder(a, ctx), ctx.seed)?,
            }
        }
        ConstantFamily::Piterbarg => {
            let p = need(a.a, "a", "piterbarg")?;
            let est = estimator(a.estimator, Estimator::Crude);
            match a.window {
                Some(s) => {
                    let s1 = if a.two_sided { s } else { 0.0 };
                    piterbarg_window_with(a.alpha, p, s1, s, a.step, a.n, ctx.seed, opts(est, ctx))?
                }
                None => piterbarg_limit(a.alpha, p, sidedness, &ladder(a, ctx), ctx.seed)?,
            }
        }
    };
    let csv = ladder_csv(&est);
    Ok(Body::Table(to_json(&est), csv).into())
}

fn opts(estimator: Estimator, ctx: &Ctx) -> WindowOptions {
    WindowOptions {
        estimator,
        exec: ctx.exec,
    }
}

fn ladder(a: &ConstantsArgs, ctx: &Ctx) -> LadderPolicy {
    LadderPolicy {
        windows: a.windows.clone(),
        grid_step: a.step,
        n_samples: a.n,
        estimator: a.estimator.map(|e| estimator(Some(e), Estimator::Crude)),
        exec: ctx.exec,
    }
}

fn provider(reqs: &[ConstantRequest], simulate: bool, ladder_n: usize, ctx: &Ctx) -> Result<ConstantProvider, Failure> {
    if !simulate {
        return Ok(ConstantProvider::exact_only());
    }
    let mut p = ConstantProvider::simulation_backed();
    let policy = LadderPolicy {
        n_samples: ladder_n,
        exec: ctx.exec,
        ..LadderPolicy::default()
    };
    p.populate(reqs, &policy, ctx.seed)?;
    Ok(p)
}

fn finite_horizon(h: Horizon, what: &str) -> Result<f64, Failure> {
    h.finite()
        .ok_or_else(|| Failure::Usage(format!("{what} needs a finite --T")))
}

pub fn asymptotics(a: &AsymptoticsArgs, ctx: &Ctx) -> Result<Outcome, Failure> {
    let f = &a.field;
    let name = a.formula.name();
    let h = || need(a.hurst, "H", name);
    let u = || need(a.u, "u", name);
    let prov = |reqs: Vec<ConstantRequest>| provider(&reqs, a.simulate, a.ladder_n, ctx);
    let result = match a.formula {
        Formula::Psi0Inf => {
            let h = h()?;
            to_json(&psi0_inf(u()?, h, a.c, &prov(asymptotics::psi0_inf_constants(h))?)?)
        }
        Formula::Psi0Finite => {
            let h = h()?;
            let t = finite_horizon(a.horizon, name)?;
            to_json(&psi0_finite(u()?, h, a.c, t, &prov(asymptotics::psi0_finite_constants(h))?)?)
        }
        Formula::PsiGammaInf => {
            let h = h()?;
            let p = prov(asymptotics::psi_gamma_inf_constants(h, a.gamma))?;
            to_json(&psi_gamma_inf(u()?, h, a.c, a.gamma, &p)?)
        }
        Formula::PsiGammaFinite => {
            let h = h()?;
            let t = finite_horizon(a.horizon, name)?;
            let p = prov(asymptotics::psi_gamma_finite_constants(h, a.gamma))?;
            to_json(&psi_gamma_finite(u()?, h, a.c, a.gamma, t, &p)?)
        }
        Formula::RatioConstant => {
            let h = h()?;
            let p = prov(asymptotics::ratio_constant_constants(h, a.gamma, a.horizon))?;
            to_json(&asymptotics::ratio_constant(h, a.gamma, a.horizon, &p)?)
        }
        Formula::VarianceY => {
            let (s, t) = (need(a.s, "s", name)?, need(a.t, "t", name)?);
            json!({ "value": asymptotics::variance_y(s, t, h()?, a.gamma, a.c)? })
        }
        Formula::VarianceZ => {
            let (s, t) = (need(a.s, "s", name)?, need(a.t, "t", name)?);
            json!({ "value": asymptotics::variance_z(s, t, h()?, a.gamma)? })
        }
        Formula::MaximizerY => to_json(&asymptotics::maximizer_y(h()?, a.c)?),
        Formula::FieldMixed => {
            let m = MixedField {
                b1: need(f.b1, "b1", name)?,
                b2: need(f.b2, "b2", name)?,
                a1: need(f.a1, "a1", name)?,
                a2: need(f.a2, "a2", name)?,
                beta: need(f.beta, "beta", name)?,
                s0_interior: f.s0_interior,
                t0_interior: f.t0_interior,
            };
            to_json(&asymptotics::field_tail_mixed(u()?, &m, &prov(m.constants())?)?)
        }
        Formula::FieldTwoParam => {
            let m = TwoParamField {
                a1: need(f.a1, "a1", name)?,
                a2: need(f.a2, "a2", name)?,
                b1: need(f.b1, "b1", name)?,
                b2: need(f.b2, "b2", name)?,
                alpha1: need(f.alpha1, "alpha1", name)?,
                alpha2: need(f.alpha2, "alpha2", name)?,
                beta1: need(f.beta1, "beta1", name)?,
                beta2: need(f.beta2, "beta2", name)?,
                s0_interior: f.s0_interior,
                t0_interior: f.t0_interior,
            };
            to_json(&asymptotics::field_tail_two_param(u()?, &m, &prov(m.constants()?)?)?)
        }
    };
    Ok(Body::Json(json!({ "formula": name, "result": result })).into())
}

pub fn fieldlab(a: &FieldlabArgs, ctx: &Ctx) -> Result<Outcome, Failure> {
    let spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read field spec {}: {e}", path.display())))?;
            FieldSpec::from_toml_str(&text)?
        }
        None => match a.preset {
            Preset::Mixed => FieldSpec::mixed(a.beta),
            Preset::RankOne => FieldSpec::rank_one(),
        },
    };
    spec.validate()?;
    let u0 = *a
        .u
        .first()
        .ok_or_else(|| Failure::Usage("fieldlab needs at least one level in --u".into()))?;
    // Ask the exact provider first; a missing-constant error names what to estimate.
    let mut prov = ConstantProvider::exact_only();
    let theory = match spec.theory(u0, &prov) {
        Err(Error::MissingConstant(reqs)) if a.simulate => {
            prov = provider(&reqs, true, a.ladder_n, ctx)?;
            spec.theory(u0, &prov)?
        }
        other => other?,
    };
    let resolution = Resolution { ns: a.ns, nt: a.nt };
    let rows = compare_to_theory(&spec, resolution, &a.u, a.n, &prov, ctx.seed)?;
    let csv = comparison_csv(&rows);
    let value = json!({
        "spec": spec,
        "resolution": resolution,
        "maximizer": spec.maximizer(),
        "constants_used": theory.constants_used,
        "case": theory.case,
        "rows": rows,
    });
    Ok(Body::Table(value, csv).into())
}

pub fn verify(a: &VerifyArgs, ctx: &Ctx) -> Result<Outcome, Failure> {
    let ids = if a.criteria.is_empty() {
        CRITERIA.to_vec()
    } else {
        a.criteria.clone()
    };
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.contains(id)) {
        return Err(Failure::Usage(format!("unknown criterion {bad}; valid ids are 1-10")));
    }
    let opts = VerifyOptions {
        exec: ctx.exec,
        seed: ctx.seed,
    };
    let mut reports = Vec::new();
    for id in ids {
        let r = verify::run(id, &opts).expect("id checked above");
        eprintln!("{}", r.line());
        for d in &r.detail {
            eprintln!("    {d}");
        }
        reports.push(r);
    }
    let failed: Vec<u8> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    let mut csv = String::from("id,name,passed,elapsed_secs\n");
    for r in &reports {
        let _ = writeln!(csv, "{},{},{},{:.3}", r.id, r.name, r.passed, r.elapsed_secs);
    }
    let value = json!({ "reports": reports, "failed": failed });
    Ok(Outcome {
        body: Body::Table(value, csv),
        failed,
    })
}
