//! Strategies and checks shared by the property tests and the acceptance run.

use proptest::prelude::*;
use proptest::test_runner::{TestCaseError, TestRng, TestRunner};
use smd_meta::analysis::analyze;
use smd_meta::effect::{effect_iv, effect_ssw, EffectCiMethod, Weighting};
use smd_meta::qstat::{q_statistic, MetaInput};
use smd_meta::smd::Study;
use smd_meta::tau2::{estimate, Tau2CiMethod, Tau2Method, Tau2Status};

pub const CASES: u32 = 10_000;

pub fn config() -> ProptestConfig {
    ProptestConfig {
        cases: CASES,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

pub fn study() -> impl Strategy<Value = Study> {
    (2u32..120, 2u32..120, -3.0..3.0f64, 0.005..2.0f64)
        .prop_filter("df >= 3", |(a, b, _, _)| a + b >= 5)
        .prop_map(|(a, b, g, v)| Study::new(a, b, g, v).unwrap())
}

pub fn meta(max_k: usize) -> impl Strategy<Value = MetaInput> {
    prop::collection::vec(study(), 2..=max_k).prop_map(|s| MetaInput::new(s).unwrap())
}

/// Inputs with one shared variance.
pub fn equal_variance() -> impl Strategy<Value = MetaInput> {
    (
        prop::collection::vec((2u32..80, -3.0..3.0f64), 2..=12),
        0.01..2.0f64,
    )
        .prop_map(|(rows, v)| {
            MetaInput::new(
                rows.into_iter()
                    .map(|(n, g)| Study::new(n, n, g, v).unwrap())
                    .collect(),
            )
            .unwrap()
        })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

pub fn q_nonincreasing(m: &MetaInput, a: f64, d: f64) -> Result<(), TestCaseError> {
    let (qa, qb) = (q_statistic(m, a), q_statistic(m, a + d));
    prop_assert!(
        qb <= qa * (1.0 + 1e-12) + 1e-300,
        "Q({a}) = {qa} < Q({}) = {qb}",
        a + d
    );
    prop_assert!(qa >= 0.0);
    Ok(())
}

pub fn shift_equivariance(m: &MetaInput, c: f64) -> Result<(), TestCaseError> {
    let s = m.shifted(c);
    for method in [
        Tau2Method::DL,
        Tau2Method::REML,
        Tau2Method::MP,
        Tau2Method::J,
    ] {
        let (t0, t1) = (estimate(m, method).unwrap(), estimate(&s, method).unwrap());
        prop_assert!(
            close(t0.value, t1.value, 1e-7),
            "{method}: {} vs {}",
            t0.value,
            t1.value
        );
        let (e0, e1) = (effect_iv(m, &t0), effect_iv(&s, &t1));
        prop_assert!(
            close(e0.value + c, e1.value, 1e-7),
            "{method}: {} + {c} vs {}",
            e0.value,
            e1.value
        );
    }
    // The corrected moment depends on the plug-in effect, so the KDB weights
    // are held fixed for the shift.
    let t = estimate(m, Tau2Method::KDB).unwrap();
    prop_assert!(close(
        effect_iv(m, &t).value + c,
        effect_iv(&s, &t).value,
        1e-9
    ));
    let (w0, w1) = (effect_ssw(m).unwrap(), effect_ssw(&s).unwrap());
    prop_assert!(close(w0.value + c, w1.value, 1e-9));
    Ok(())
}

pub fn equal_variance_collapse(m: &MetaInput) -> Result<(), TestCaseError> {
    let dl = estimate(m, Tau2Method::DL).unwrap().value;
    let mp = estimate(m, Tau2Method::MP).unwrap().value;
    let j = estimate(m, Tau2Method::J).unwrap().value;
    prop_assert!(close(dl, mp, 1e-7), "DL {dl} MP {mp}");
    prop_assert!(close(dl, j, 1e-9), "DL {dl} J {j}");
    Ok(())
}

pub fn ordered_intervals_and_flags(m: &MetaInput, level: f64) -> Result<(), TestCaseError> {
    let a = analyze(m, level).unwrap();
    for method in Tau2Method::ALL {
        let t = a
            .tau2_of(method)
            .as_ref()
            .map_err(|e| TestCaseError::fail(format!("{method}: {e}")))?;
        prop_assert!(t.value >= 0.0 && t.value.is_finite());
        prop_assert_eq!(t.is_truncated(), t.status == Tau2Status::TruncatedAtZero);
        if t.is_truncated() {
            prop_assert_eq!(t.value, 0.0);
        }
        if t.status == Tau2Status::Interior {
            prop_assert!(t.value > 0.0);
        }
    }
    for method in Tau2CiMethod::ALL {
        let ci = a
            .tau2_ci_of(method)
            .as_ref()
            .map_err(|e| TestCaseError::fail(format!("{method}: {e}")))?;
        prop_assert!(ci.lo <= ci.hi, "{method}: [{}, {}]", ci.lo, ci.hi);
        prop_assert!(ci.lo >= 0.0);
        prop_assert_eq!(ci.lo_truncated, ci.lo == 0.0, "{}", method);
        if ci.hi_truncated {
            prop_assert_eq!(ci.hi, 0.0);
            prop_assert!(ci.lo_truncated);
        }
    }
    for c in EffectCiMethod::ALL {
        let ci = a
            .effect_ci_of(c)
            .as_ref()
            .map_err(|e| TestCaseError::fail(format!("{c}: {e}")))?;
        prop_assert!(ci.lo() <= ci.hi() && ci.half_width >= 0.0);
        prop_assert_eq!(ci.degenerate, ci.half_width == 0.0);
    }
    for w in Weighting::ALL {
        prop_assert!(a.effect_of(w).as_ref().unwrap().variance > 0.0);
    }
    Ok(())
}

fn runner() -> TestRunner {
    let c = config();
    let rng = TestRng::deterministic_rng(c.rng_algorithm);
    TestRunner::new_with_rng(c, rng)
}

/// Run every suite with a fixed generator; (name, outcome) per suite.
pub fn run_all() -> Vec<(&'static str, Result<(), String>)> {
    vec![
        (
            "Q nonincreasing in tau2",
            runner()
                .run(&(meta(30), 0.0..5.0f64, 0.0..50.0f64), |(m, a, d)| {
                    q_nonincreasing(&m, a, d)
                })
                .map_err(|e| e.to_string()),
        ),
        (
            "shift equivariance of effect estimators",
            runner()
                .run(&(meta(30), -5.0..5.0f64), |(m, c)| {
                    shift_equivariance(&m, c)
                })
                .map_err(|e| e.to_string()),
        ),
        (
            "equal-variance DL = MP = J",
            runner()
                .run(&equal_variance(), |m| equal_variance_collapse(&m))
                .map_err(|e| e.to_string()),
        ),
        (
            "interval order and truncation flags",
            runner()
                .run(&(meta(10), 0.8..0.99f64), |(m, l)| {
                    ordered_intervals_and_flags(&m, l)
                })
                .map_err(|e| e.to_string()),
        ),
    ]
}
