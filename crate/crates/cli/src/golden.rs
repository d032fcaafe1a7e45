//! Built-in worked examples with frozen expected values. Needs no config.

use ergomax_core::averages::{verify_weak_joint_ergodicity, weyl_mean, VerifyOptions};
use ergomax_core::family::{
    controllable_indices, indexing_data, indexing_data_with_order, tuple_type, BaseFamily, TupleState,
};
use ergomax_core::finsys::FiniteSystem;
use ergomax_core::polyalg::IntPoly;
use ergomax_core::reduction::{named_policy, run_induction, verify_descendant, StepKind};
use num_rational::Ratio;
use serde_json::{json, Value};

use crate::commands::Outcome;
use crate::report::Table;

type Check = Result<String, String>;
type Named = (&'static str, fn() -> Check);

fn fam(v: &[&[i64]]) -> BaseFamily {
    BaseFamily::from_i64(v).expect("valid family")
}

fn zb(v: &[usize]) -> Vec<usize> {
    v.iter().map(|x| x - 1).collect()
}

fn coord_translations(moduli: &[u64]) -> FiniteSystem {
    let k = moduli.len();
    let shifts: Vec<Vec<i64>> = (0..k).map(|j| (0..k).map(|i| i64::from(i == j)).collect()).collect();
    FiniteSystem::translation(moduli, &shifts).expect("valid system")
}

fn indexing() -> Check {
    let base = fam(&[&[0, 1], &[0, 1], &[1, 1], &[2, 2], &[2, 1], &[1], &[3, 1]]);
    let idx = indexing_data(&base);
    let t = TupleState::new(base.clone(), zb(&[1, 2, 3, 4, 3, 6, 2]), base.polys().to_vec()).map_err(|e| e.to_string())?;
    let w = tuple_type(&t, &idx).w;
    if w != [3, 3, 0, 0] || (idx.k1, idx.k2, idx.k3) != (5, 4, 6) {
        return Err(format!("type {w:?}, K = {:?}", (idx.k1, idx.k2, idx.k3)));
    }
    Ok("type (3,3,0,0), K = (5,4,6)".into())
}

fn nonmonic_trace() -> Check {
    let base = fam(&[&[0, 1], &[0, 3], &[0, 2], &[1, 2], &[1, 1], &[1, 1], &[1]]);
    let mut np = named_policy("paper-ex62").expect("policy");
    let order = np.class_order.clone().expect("class order");
    let idx = indexing_data_with_order(&base, &order).map_err(|e| e.to_string())?;
    let trace = run_induction(&base, &idx, np.policy.as_mut()).map_err(|e| e.to_string())?;
    let types: Vec<Vec<usize>> = trace.types().into_iter().map(|w| w.w).collect();
    if types != [vec![3, 2, 1], vec![4, 2, 0], vec![5, 1, 0], vec![6, 0, 0]] {
        return Err(format!("types {types:?}"));
    }
    let first = trace.final_state.rho(0).to_string();
    if first != "256n^2+416n" {
        return Err(format!("first iterate {first}"));
    }
    if !verify_descendant(&trace.final_state).holds() {
        return Err("final tuple is not a descendant".into());
    }
    Ok(format!("3 steps, first iterate {first}"))
}

fn flip_trace() -> Check {
    let base = fam(&[&[0, 1], &[0, 1], &[0, 1], &[0, 1], &[1, 1], &[1, 1], &[2, 1], &[2, 1]]);
    let idx = indexing_data(&base);
    let mut np = named_policy("paper-ex78").expect("policy");
    let trace = run_induction(&base, &idx, np.policy.as_mut()).map_err(|e| e.to_string())?;
    let flips: Vec<usize> = trace
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s.kind, StepKind::Flip { .. }))
        .map(|(k, _)| k + 1)
        .collect();
    let last = trace.types().last().map(|w| w.w.clone()).unwrap_or_default();
    if trace.steps.len() != 7 || flips != [5] || last != [8, 0, 0] {
        return Err(format!("{} steps, flips at {flips:?}, final type {last:?}", trace.steps.len()));
    }
    Ok("7 steps, flip at step 5, final type (8,0,0)".into())
}

fn controllability() -> Check {
    let base = fam(&[&[0, 1], &[0, 1], &[0, 1], &[0, 1], &[1, 1], &[1, 1], &[2, 1], &[2, 1]]);
    let idx = indexing_data(&base);
    let a = TupleState::new(base.clone(), zb(&[1, 2, 3, 4, 5, 1, 5, 5]), base.polys().to_vec()).map_err(|e| e.to_string())?;
    let b = TupleState::new(base.clone(), zb(&[1, 2, 3, 4, 1, 1, 5, 5]), base.polys().to_vec()).map_err(|e| e.to_string())?;
    let ca = controllable_indices(&a, &idx).map_err(|e| e.to_string())?;
    let cb = controllable_indices(&b, &idx).map_err(|e| e.to_string())?;
    if ca != zb(&[5]) || !cb.is_empty() {
        return Err(format!("controllable {ca:?} then {cb:?}"));
    }
    Ok("controllable at 5, then uncontrollable".into())
}

fn positive_wje() -> Check {
    let r = verify_weak_joint_ergodicity(&coord_translations(&[5, 7]), &fam(&[&[1], &[1]]), &VerifyOptions::default())
        .map_err(|e| e.to_string())?;
    if !(r.verdict() && r.agreement && r.direct <= 1e-9) {
        return Err(format!("verdict {}, direct {}", r.verdict(), r.direct));
    }
    Ok(format!("weakly jointly ergodic, direct {:.1e}", r.direct))
}

fn negative_goodness() -> Check {
    let r = verify_weak_joint_ergodicity(
        &coord_translations(&[7, 7, 7]),
        &fam(&[&[1], &[1], &[1]]),
        &VerifyOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    if r.criterion_i || !r.failing_obligations.iter().any(|o| o.pair == (0, 1)) || !r.agreement {
        return Err("obligation (1, 2) did not fail".into());
    }
    Ok("obligation (1, 2) fails".into())
}

fn negative_spectral() -> Check {
    let r = verify_weak_joint_ergodicity(&coord_translations(&[5, 7]), &fam(&[&[0, 1], &[1, 1]]), &VerifyOptions::default())
        .map_err(|e| e.to_string())?;
    let m = r.failing_eigen.first().and_then(|w| w.mean).map_or(f64::NAN, |z| z.norm());
    if r.criterion_ii || (m - 1.0 / 5f64.sqrt()).abs() > 1e-9 || !r.agreement {
        return Err(format!("criterion (ii) {}, witness modulus {m}", r.criterion_ii));
    }
    Ok(format!("witness modulus {m:.10}"))
}

fn gauss_mean() -> Check {
    let w = weyl_mean(&[IntPoly::from_i64(&[0, 1])], &[Ratio::new(1, 5)]).map_err(|e| e.to_string())?;
    let m = w.value.norm();
    if (m - 1.0 / 5f64.sqrt()).abs() > 1e-12 || w.vanishes {
        return Err(format!("modulus {m}"));
    }
    Ok(format!("|mean| = {m:.10} over period {}", w.period))
}

pub fn run() -> Outcome {
    let checks: [Named; 8] = [
        ("indexing", indexing),
        ("nonmonic-trace", nonmonic_trace),
        ("flip-trace", flip_trace),
        ("controllability", controllability),
        ("positive-wje", positive_wje),
        ("negative-goodness", negative_goodness),
        ("negative-spectral", negative_spectral),
        ("gauss-mean", gauss_mean),
    ];
    let mut failures = Vec::new();
    let mut table = Table::new(&["name", "pass", "detail"]);
    let rows: Vec<Value> = checks
        .iter()
        .map(|(name, f)| {
            let (pass, detail) = match f() {
                Ok(d) => (true, d),
                Err(d) => {
                    failures.push(format!("{name}: {d}"));
                    (false, d)
                }
            };
            table.rows.push(vec![name.to_string(), pass.to_string(), detail.clone()]);
            json!({"name": name, "pass": pass, "detail": detail})
        })
        .collect();
    let report = json!({
        "command": "golden",
        "checks": rows,
        "passed": checks.len() - failures.len(),
        "total": checks.len(),
    });
    Outcome {
        report,
        table: Some(table),
        failures,
    }
}
