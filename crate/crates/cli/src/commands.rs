//! Subcommand implementations. Each produces a JSON report, an optional CSV
//! table, and the list of failed assertions that decides the exit status.

use ergomax_core::averages::{
    box_seminorm, exact_limit_average, ghk_seminorm, gowers_oracle, inductive_box_seminorm,
    multi_average, running_deviation, verify_dks_conditions, verify_joint_ergodicity,
    verify_weak_joint_ergodicity, weyl_mean, EigenWitness, SeminormSpec, VerifyOptions,
    DEFAULT_BUDGET, EXACT_TOL,
};
use ergomax_core::family::{
    controllable_indices, goodness_obligations, indexing_data, indexing_data_with_order,
    tuple_type, ErgodicityObligation, IndexingData, TupleState,
};
use ergomax_core::finsys::{check_obligation, check_obligation_very_good, FiniteSystem, Observable};
use ergomax_core::polyalg::IntPoly;
use ergomax_core::reduction::{
    named_policy, run_induction, InvarianceLedger, type_count_bound, verify_descendant, Descent, ReductionStep,
    StepKind, POLICY_NAMES,
};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde_json::{json, Value};

use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{fmt_f64, Table};

pub struct Outcome {
    pub report: Value,
    pub table: Option<Table>,
    pub failures: Vec<String>,
}

impl Outcome {
    fn new(report: Value) -> Self {
        Outcome {
            report,
            table: None,
            failures: Vec::new(),
        }
    }
}

pub fn big(x: &BigInt) -> Value {
    x.to_i64().map_or_else(|| Value::String(x.to_string()), Value::from)
}

fn bigs(v: &[BigInt]) -> Value {
    Value::Array(v.iter().map(big).collect())
}

fn one_based(v: &[usize]) -> Value {
    json!(v.iter().map(|x| x + 1).collect::<Vec<_>>())
}

fn complex(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn ratio(r: &Ratio<i64>) -> Value {
    Value::String(if *r.denom() == 1 { r.numer().to_string() } else { r.to_string() })
}

fn poly_strings(ps: &[IntPoly]) -> Value {
    json!(ps.iter().map(ToString::to_string).collect::<Vec<_>>())
}

fn observable(f: &Observable) -> Value {
    Value::Array(f.values.iter().map(|&z| complex(z)).collect())
}

fn obligation(o: &ErgodicityObligation) -> Value {
    json!({
        "pair": [o.pair.0 + 1, o.pair.1 + 1],
        "exps": [big(&o.exps.0), big(&o.exps.1)],
        "vector": bigs(&o.vector),
    })
}

fn eigen(w: &EigenWitness) -> Value {
    let mut v = json!({
        "alphas": w.alphas.iter().map(ratio).collect::<Vec<_>>(),
        "deviation": w.deviation,
    });
    if let Some(c) = &w.characters {
        v["characters"] = json!(c);
    }
    if let Some(c) = &w.cycles {
        v["cycles"] = json!(c);
    }
    if let Some(m) = w.mean {
        v["mean"] = complex(m);
        v["modulus"] = json!(m.norm());
    }
    v
}

fn core_err(key: &str) -> impl Fn(ergomax_core::averages::AveragesError) -> ConfigError + '_ {
    move |e| ConfigError::at(key, e)
}

fn indexing(cfg: &ExperimentConfig) -> Result<IndexingData, ConfigError> {
    let base = cfg.base()?;
    match cfg.class_order()? {
        Some(order) => indexing_data_with_order(&base, &order).map_err(|e| ConfigError::at("family.class_order", e)),
        None => Ok(indexing_data(&base)),
    }
}

fn coeffs(ps: &[IntPoly]) -> Value {
    Value::Array(ps.iter().map(|p| bigs(p.coeffs())).collect())
}

fn tuple_json(t: &TupleState, idx: &IndexingData) -> Value {
    json!({
        "eta": one_based(t.eta()),
        "rhos": coeffs(t.rhos()),
        "polys": poly_strings(t.rhos()),
        "type": tuple_type(t, idx).w,
    })
}

pub fn analyze(cfg: &ExperimentConfig) -> Result<Outcome, ConfigError> {
    let t = cfg.tuple()?;
    let idx = indexing(cfg)?;
    let w = tuple_type(&t, &idx);
    let controllable = if w.is_basic() {
        Vec::new()
    } else {
        controllable_indices(&t, &idx).map_err(|e| ConfigError::at("family", e))?
    };
    let obligations: Vec<Value> = goodness_obligations(&t, &idx).iter().map(obligation).collect();
    Ok(Outcome::new(json!({
        "command": "analyze",
        "family": poly_strings(t.base().polys()),
        "degree": idx.degree,
        "classes": idx.classes.iter().map(|c| one_based(c)).collect::<Vec<_>>(),
        "L": one_based(&idx.maxdeg),
        "K1": idx.k1,
        "K2": idx.k2,
        "K3": idx.k3,
        "eta": one_based(t.eta()),
        "type": w.w,
        "basic": w.is_basic(),
        "controllable": one_based(&controllable),
        "obligations": obligations,
        "type_count_bound": type_count_bound(&idx),
    })))
}

fn step_json(k: usize, s: &ReductionStep, ledger: &InvarianceLedger) -> Value {
    let mut v = match &s.kind {
        StepKind::TypeReduce { m, i, lambda, r, .. } => json!({
            "kind": "reduce",
            "m": m + 1,
            "i": i + 1,
            "lambda": big(lambda),
            "r": big(r),
        }),
        StepKind::Flip { set, gamma, r } => json!({
            "kind": "flip",
            "set": one_based(set),
            "gamma": big(gamma),
            "r": big(r),
        }),
    };
    v["step"] = json!(k + 1);
    v["eta"] = one_based(s.after.eta());
    v["rhos"] = coeffs(s.after.rhos());
    v["polys"] = poly_strings(s.after.rhos());
    v["type"] = json!(s.after_type.w);
    v["ledger"] = Value::Array(ledger.entries().iter().map(|e| bigs(e)).collect());
    v
}

pub fn reduce(cfg: &ExperimentConfig) -> Result<Outcome, ConfigError> {
    let base = cfg.base()?;
    let name = cfg.params.policy.clone().unwrap_or_else(|| "default".into());
    let mut np = named_policy(&name).ok_or_else(|| {
        ConfigError::at("params.policy", format!("unknown policy `{name}`; known: {}", POLICY_NAMES.join(", ")))
    })?;
    let idx = match cfg.class_order()? {
        Some(order) => indexing_data_with_order(&base, &order).map_err(|e| ConfigError::at("family.class_order", e))?,
        None => match &np.class_order {
            Some(order) => indexing_data_with_order(&base, order).map_err(|e| ConfigError::at("params.policy", e))?,
            None => indexing_data(&base),
        },
    };
    let mut out = Outcome::new(Value::Null);
    let report = match run_induction(&base, &idx, np.policy.as_mut()) {
        Ok(trace) => {
            let witness = match verify_descendant(&trace.final_state) {
                Descent::Witness { lambda, r } => json!({"lambda": big(&lambda), "r": big(&r)}),
                Descent::Refuted(reason) => {
                    out.failures.push(format!("final tuple is not a descendant: {reason}"));
                    Value::Null
                }
            };
            json!({
                "command": "reduce",
                "policy": name,
                "family": poly_strings(base.polys()),
                "classes": idx.classes.iter().map(|c| one_based(c)).collect::<Vec<_>>(),
                "types": trace.types().into_iter().map(|w| w.w).collect::<Vec<_>>(),
                "steps": trace.steps.iter().zip(&trace.ledgers).enumerate().map(|(k, (s, l))| step_json(k, s, l)).collect::<Vec<_>>(),
                "final": tuple_json(&trace.final_state, &idx),
                "witness": witness,
            })
        }
        Err(e) => {
            out.failures.push(e.to_string());
            json!({"command": "reduce", "policy": name, "error": e.to_string()})
        }
    };
    out.report = report;
    Ok(out)
}

pub fn check_goodness(cfg: &ExperimentConfig) -> Result<Outcome, ConfigError> {
    let sys = cfg.system()?;
    let t = cfg.tuple()?;
    if t.base().len() != sys.num_transforms() {
        return Err(ConfigError::at(
            "family.polys",
            format!("{} polynomials for {} transforms", t.base().len(), sys.num_transforms()),
        ));
    }
    let idx = indexing(cfg)?;
    let mut out = Outcome::new(Value::Null);
    let mut rows = Vec::new();
    for o in goodness_obligations(&t, &idx) {
        let good = check_obligation(&sys, &o);
        let very_good = check_obligation_very_good(&sys, &o);
        if !good {
            out.failures.push(format!("obligation ({}, {}) fails", o.pair.0 + 1, o.pair.1 + 1));
        }
        let mut v = obligation(&o);
        v["good"] = json!(good);
        v["very_good"] = json!(very_good);
        rows.push(v);
    }
    out.report = json!({
        "command": "check-goodness",
        "obligations": rows,
        "good": out.failures.is_empty(),
    });
    Ok(out)
}

pub fn average(cfg: &ExperimentConfig) -> Result<Outcome, ConfigError> {
    let sys = cfg.system()?;
    let t = cfg.tuple()?;
    let fns = cfg.observables(&sys, t.len())?;
    let duals = cfg.duals(&sys)?;
    let limit = exact_limit_average(&sys, &t, &fns, &duals).map_err(core_err("params"))?;
    let n = cfg.params.n.unwrap_or(limit.period);
    let avg = multi_average(&sys, &t, &fns, &duals, n).map_err(core_err("params.N"))?;
    let deviation = sys.l2_norm(&avg.value.sub(&limit.value));
    let mut table = Table::new(&["n", "deviation"]);
    for (k, d) in running_deviation(&sys, &t, &fns, &duals, n)
        .map_err(core_err("params"))?
        .into_iter()
        .enumerate()
    {
        table.rows.push(vec![(k + 1).to_string(), fmt_f64(d)]);
    }
    let mut out = Outcome::new(json!({
        "command": "average",
        "N": n,
        "period": avg.period,
        "exact": avg.exact,
        "value": observable(&avg.value),
        "l2_norm": sys.l2_norm(&avg.value),
        "integral": complex(sys.integral(&avg.value)),
        "deviation": deviation,
    }));
    out.table = Some(table);
    Ok(out)
}

pub fn seminorm(cfg: &ExperimentConfig) -> Result<Outcome, ConfigError> {
    let sys = cfg.system()?;
    let f = cfg.single_observable(&sys)?;
    let unit = cfg.params.spec.is_none();
    if unit && cfg.params.s == Some(0) {
        let v = ghk_seminorm(&sys, &f, 0, 0, 1).map_err(core_err("params"))?;
        return Ok(Outcome::new(json!({
            "command": "seminorm",
            "s": 0,
            "value": v.value,
            "exact": true,
        })));
    }
    let spec: SeminormSpec = cfg.seminorm_spec(&sys)?;
    let period = box_seminorm(&sys, &f, &spec, 1).map_err(core_err("params.spec"))?.period;
    let h = cfg.params.h.unwrap_or(period);
    let v = match cfg.params.s_prime {
        Some(sp) => inductive_box_seminorm(&sys, &f, &spec, sp, h).map_err(core_err("params.s_prime"))?,
        None => box_seminorm(&sys, &f, &spec, h).map_err(core_err("params.H"))?,
    };
    let mut report = json!({
        "command": "seminorm",
        "s": spec.s(),
        "spec": spec.vectors.iter().map(|b| bigs(b)).collect::<Vec<_>>(),
        "H": h,
        "period": v.period,
        "exact": v.exact,
        "value": v.value,
        "power": v.power,
    });
    let mut out = Outcome::new(Value::Null);
    if unit {
        let j = cfg.params.j.unwrap_or(1) - 1;
        let oracle = gowers_oracle(&sys, &f, j, spec.s());
        report["oracle"] = json!(oracle);
        let tol = cfg.params.tolerance.unwrap_or(EXACT_TOL);
        if v.exact && (oracle - v.value).abs() > tol {
            out.failures.push(format!("seminorm {} disagrees with the recursive oracle {oracle}", v.value));
        }
    }
    let mut table = Table::new(&["H", "value", "exact"]);
    for hh in 1..=h {
        let r = box_seminorm(&sys, &f, &spec, hh).map_err(core_err("params.H"))?;
        table.rows.push(vec![hh.to_string(), fmt_f64(r.value), r.exact.to_string()]);
    }
    out.report = report;
    out.table = Some(table);
    Ok(out)
}

pub fn weyl(cfg: &ExperimentConfig) -> Result<Outcome, ConfigError> {
    let base = cfg.base()?;
    let alphas = cfg.alphas()?;
    let w = weyl_mean(base.polys(), &alphas).map_err(core_err("params.alphas"))?;
    Ok(Outcome::new(json!({
        "command": "weyl",
        "family": poly_strings(base.polys()),
        "alphas": alphas.iter().map(ratio).collect::<Vec<_>>(),
        "value": complex(w.value),
        "modulus": w.value.norm(),
        "period": w.period,
        "vanishes": w.vanishes,
    })))
}

fn verify_options(cfg: &ExperimentConfig, sys: &FiniteSystem) -> Result<VerifyOptions, ConfigError> {
    Ok(VerifyOptions {
        tol: cfg.params.tolerance.unwrap_or(EXACT_TOL),
        budget: cfg.params.budget.unwrap_or(DEFAULT_BUDGET),
        test_family: cfg.test_family(sys)?,
    })
}

fn system_and_base(cfg: &ExperimentConfig) -> Result<(FiniteSystem, ergomax_core::family::BaseFamily), ConfigError> {
    let sys = cfg.system()?;
    let base = cfg.base()?;
    if base.len() != sys.num_transforms() {
        return Err(ConfigError::at(
            "family.polys",
            format!("{} polynomials for {} transforms", base.len(), sys.num_transforms()),
        ));
    }
    Ok((sys, base))
}

pub fn verify_wje(cfg: &ExperimentConfig) -> Result<Outcome, ConfigError> {
    let (sys, base) = system_and_base(cfg)?;
    let opts = verify_options(cfg, &sys)?;
    let r = verify_weak_joint_ergodicity(&sys, &base, &opts).map_err(core_err("params"))?;
    let mut out = Outcome::new(json!({
        "command": "verify-wje",
        "criterion_i": r.criterion_i,
        "failing_obligations": r.failing_obligations.iter().map(obligation).collect::<Vec<_>>(),
        "criterion_ii": r.criterion_ii,
        "failing_eigen": r.failing_eigen.iter().map(eigen).collect::<Vec<_>>(),
        "direct": r.direct,
        "direct_witness": r.direct_witness,
        "tuples_checked": r.tuples_checked,
        "period": r.period,
        "weakly_jointly_ergodic": r.verdict(),
        "agreement": r.agreement,
    }));
    if !r.agreement {
        out.failures.push("criteria verdict disagrees with the direct check".into());
    }
    Ok(out)
}

pub fn verify_je(cfg: &ExperimentConfig) -> Result<Outcome, ConfigError> {
    let (sys, base) = system_and_base(cfg)?;
    let opts = verify_options(cfg, &sys)?;
    let r = verify_joint_ergodicity(&sys, &base, &opts).map_err(core_err("params"))?;
    let mut out = Outcome::new(json!({
        "command": "verify-je",
        "ergodic": r.ergodic,
        "criterion_i": r.criterion_i,
        "failing_obligations": r.failing_obligations.iter().map(obligation).collect::<Vec<_>>(),
        "criterion_ii": r.criterion_ii,
        "failing_eigen": r.failing_eigen.iter().map(eigen).collect::<Vec<_>>(),
        "direct": r.direct,
        "direct_witness": r.direct_witness,
        "tuples_checked": r.tuples_checked,
        "period": r.period,
        "jointly_ergodic": r.verdict(),
        "agreement": r.agreement,
    }));
    if !r.agreement {
        out.failures.push("criteria verdict disagrees with the direct check".into());
    }
    Ok(out)
}

pub fn verify_dks(cfg: &ExperimentConfig) -> Result<Outcome, ConfigError> {
    let (sys, base) = system_and_base(cfg)?;
    let budget = cfg.params.budget.unwrap_or(DEFAULT_BUDGET);
    let r = verify_dks_conditions(&sys, &base, budget).map_err(core_err("params.budget"))?;
    let mut out = Outcome::new(json!({
        "command": "verify-dks",
        "cond_i": r.cond_i.iter().map(|((i, j), ok)| json!({"pair": [i + 1, j + 1], "ergodic": ok})).collect::<Vec<_>>(),
        "cond_ii": r.cond_ii,
        "jointly_ergodic": r.jointly_ergodic,
        "equivalence": r.equivalence,
    }));
    if !r.equivalence {
        out.failures.push("pairwise and product conditions disagree with joint ergodicity".into());
    }
    Ok(out)
}
