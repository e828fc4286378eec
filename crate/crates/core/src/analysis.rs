//! Every estimator applied to one meta-analysis. The command-line `analyze`
//! and each simulation replicate go through [`analyze`].

use crate::effect::{
    ci_hksj, ci_ssw_with, ci_z, effect_iv, effect_ssw_with, EffectCiMethod, EffectInterval,
    EffectResult, Weighting,
};
use crate::error::Result;
use crate::qstat::MetaInput;
use crate::tau2::{
    check_level, ci_kdb_with, corrected_expected_q, estimate, interval, tau2_kdb_with,
    Tau2CiMethod, Tau2Interval, Tau2Method, Tau2Result,
};

#[derive(Debug, Clone)]
pub struct Analysis {
    pub level: f64,
    pub expected_q: Result<f64>,
    /// Indexed as [`Tau2Method::ALL`].
    pub tau2: [Result<Tau2Result>; 5],
    /// Indexed as [`Tau2CiMethod::ALL`].
    pub tau2_ci: [Result<Tau2Interval>; 5],
    /// Indexed as [`Weighting::ALL`].
    pub effects: [Result<EffectResult>; 6],
    /// Indexed as [`EffectCiMethod::ALL`].
    pub effect_ci: [Result<EffectInterval>; 8],
}

impl Analysis {
    pub fn tau2_of(&self, method: Tau2Method) -> &Result<Tau2Result> {
        let i = Tau2Method::ALL
            .iter()
            .position(|m| *m == method)
            .expect("listed");
        &self.tau2[i]
    }

    pub fn tau2_ci_of(&self, method: Tau2CiMethod) -> &Result<Tau2Interval> {
        let i = Tau2CiMethod::ALL
            .iter()
            .position(|m| *m == method)
            .expect("listed");
        &self.tau2_ci[i]
    }

    pub fn effect_of(&self, weighting: Weighting) -> &Result<EffectResult> {
        let i = Weighting::ALL
            .iter()
            .position(|m| *m == weighting)
            .expect("listed");
        &self.effects[i]
    }

    pub fn effect_ci_of(&self, method: EffectCiMethod) -> &Result<EffectInterval> {
        let i = EffectCiMethod::ALL
            .iter()
            .position(|m| *m == method)
            .expect("listed");
        &self.effect_ci[i]
    }
}

/// Run all five τ² estimators, five τ² intervals, six δ estimators and eight
/// δ intervals. Failures are kept per estimator.
pub fn analyze(input: &MetaInput, level: f64) -> Result<Analysis> {
    check_level("analyze", level)?;
    let expected_q = corrected_expected_q(input);
    let tau2 = Tau2Method::ALL.map(|m| match m {
        Tau2Method::KDB => expected_q.clone().and_then(|e| tau2_kdb_with(input, e)),
        m => estimate(input, m),
    });
    let tau2_ci = Tau2CiMethod::ALL.map(|m| match m {
        Tau2CiMethod::KDB => expected_q
            .clone()
            .and_then(|e| ci_kdb_with(input, e, level)),
        m => interval(input, m, level),
    });
    let pick = |m: Tau2Method| {
        let i = Tau2Method::ALL
            .iter()
            .position(|x| *x == m)
            .expect("listed");
        tau2[i].clone()
    };
    let effects = Weighting::ALL.map(|w| match w {
        Weighting::InverseVariance(m) => pick(m).map(|t| effect_iv(input, &t)),
        Weighting::EffectiveSize => pick(Tau2Method::KDB).map(|t| effect_ssw_with(input, t.value)),
    });
    let effect_ci = EffectCiMethod::ALL.map(|c| match c {
        EffectCiMethod::Z(m) => pick(m).and_then(|t| ci_z(input, &t, level)),
        EffectCiMethod::Hksj(m) => pick(m).and_then(|t| ci_hksj(input, &t, level)),
        EffectCiMethod::SswKdb => {
            pick(Tau2Method::KDB).and_then(|t| ci_ssw_with(input, t.value, level))
        }
    });
    Ok(Analysis {
        level,
        expected_q,
        tau2,
        tau2_ci,
        effects,
        effect_ci,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effect::{ci_ssw_kdb, effect_ssw};
    use crate::smd::Study;
    use crate::tau2::{ci_kdb, tau2_kdb};

    fn example() -> MetaInput {
        let rows = [
            (0.3, 10, 10),
            (0.9, 12, 8),
            (-0.1, 30, 30),
            (0.5, 5, 15),
            (1.4, 20, 20),
        ];
        MetaInput::new(
            rows.iter()
                .map(|&(g, a, b)| Study::from_g(a, b, g).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn matches_direct_calls() {
        let m = example();
        let a = analyze(&m, 0.95).unwrap();
        for (i, method) in Tau2Method::ALL.into_iter().enumerate() {
            let direct = estimate(&m, method).unwrap();
            assert_eq!(a.tau2[i].as_ref().unwrap(), &direct);
        }
        assert_eq!(
            a.tau2_of(Tau2Method::KDB).as_ref().unwrap(),
            &tau2_kdb(&m).unwrap()
        );
        for method in Tau2CiMethod::ALL {
            assert_eq!(
                a.tau2_ci_of(method).as_ref().unwrap(),
                &interval(&m, method, 0.95).unwrap()
            );
        }
        assert_eq!(
            a.tau2_ci_of(Tau2CiMethod::KDB).as_ref().unwrap(),
            &ci_kdb(&m, 0.95).unwrap()
        );
        assert_eq!(
            a.effect_of(Weighting::EffectiveSize).as_ref().unwrap(),
            &effect_ssw(&m).unwrap()
        );
        assert_eq!(
            a.effect_ci_of(EffectCiMethod::SswKdb).as_ref().unwrap(),
            &ci_ssw_kdb(&m, 0.95).unwrap()
        );
        for c in EffectCiMethod::ALL {
            assert_eq!(a.effect_ci_of(c).as_ref().unwrap().method, c);
        }
    }

    #[test]
    fn rejects_bad_level() {
        assert!(analyze(&example(), 1.5).is_err());
    }
}
