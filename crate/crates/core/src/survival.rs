//! Step functions, the Kaplan–Meier product-limit estimator and restricted integrals.

use serde::{Deserialize, Serialize};

use crate::data::{SurvivalDataset, TimeHorizon};
use crate::error::{Error, Result};

/// Right-continuous piecewise-constant function on `[0, inf)`.
///
/// The value is `initial` before the first jump time and `values[k]` on
/// `[times[k], times[k + 1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    times: Vec<f64>,
    values: Vec<f64>,
    initial: f64,
}

impl StepFunction {
    pub fn new(times: Vec<f64>, values: Vec<f64>, initial: f64) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("step function jump times must be strictly increasing"));
        }
        Ok(Self {
            times,
            values,
            initial,
        })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            times: Vec::new(),
            values: Vec::new(),
            initial: value,
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn jump_values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    /// Value of the last jump at or before `t`.
    pub fn eval(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    /// Left limit at `t`: value of the last jump strictly before `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s < t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    /// Exact integral over `[0, upper]`.
    pub fn integrate(&self, upper: f64) -> f64 {
        if upper <= 0.0 {
            return 0.0;
        }
        let mut area = 0.0;
        let mut prev = 0.0;
        let mut level = self.initial;
        for (&t, &v) in self.times.iter().zip(&self.values) {
            if t >= upper {
                break;
            }
            let t = t.max(0.0);
            area += level * (t - prev);
            prev = t;
            level = v;
        }
        area + level * (upper - prev)
    }

    /// Pointwise map of the values, keeping jump times.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            times: self.times.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            initial: f(self.initial),
        }
    }
}

/// Integral of a survival curve over `[0, tau]`, the restricted mean.
pub fn integrate_survival(f: &StepFunction, tau: TimeHorizon) -> f64 {
    f.integrate(tau.value())
}

/// Which failure type the product-limit estimator targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// Survival of the event time, `S`.
    Event,
    /// Survival of the censoring time, `1 - G` (status flipped).
    Censoring,
}

/// One distinct time with at least one target failure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskRow {
    pub time: f64,
    pub at_risk: f64,
    pub failures: f64,
}

/// Distinct failure times with risk-set sizes.
///
/// At tied times events are processed before censorings: for the censoring
/// target the events at that time are removed from the risk set first.
pub fn risk_table(times: &[f64], events: &[bool], target: Target) -> Vec<RiskRow> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut rows = Vec::new();
    let mut remaining = times.len() as f64;
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut n_event = 0.0;
        let mut n_cens = 0.0;
        let mut j = k;
        while j < order.len() && times[order[j]] == t {
            if events[order[j]] {
                n_event += 1.0;
            } else {
                n_cens += 1.0;
            }
            j += 1;
        }
        let (at_risk, failures) = match target {
            Target::Event => (remaining, n_event),
            Target::Censoring => (remaining - n_event, n_cens),
        };
        if failures > 0.0 {
            rows.push(RiskRow {
                time: t,
                at_risk,
                failures,
            });
        }
        remaining -= n_event + n_cens;
        k = j;
    }
    rows
}

/// Product-limit estimate from raw columns.
pub fn product_limit(times: &[f64], events: &[bool], target: Target) -> Result<StepFunction> {
    if times.is_empty() {
        return Err(Error::EmptyData);
    }
    if times.len() != events.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: events.len(),
        });
    }
    let rows = risk_table(times, events, target);
    let mut jt = Vec::with_capacity(rows.len());
    let mut jv = Vec::with_capacity(rows.len());
    let mut s = 1.0;
    for row in rows {
        s *= 1.0 - row.failures / row.at_risk;
        jt.push(row.time);
        jv.push(s);
    }
    StepFunction::new(jt, jv, 1.0)
}

/// Kaplan–Meier survival estimate of the event time (`Target::Event`) or of
/// the censoring time (`Target::Censoring`, returns `1 - G`).
pub fn kaplan_meier(data: &SurvivalDataset, target: Target) -> Result<StepFunction> {
    product_limit(data.times(), data.events(), target)
}

/// Fraction of the sample still at risk at `t`: `(1/n) sum 1{T_i >= t}`.
pub fn at_risk(data: &SurvivalDataset, t: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let count = data.times().iter().filter(|&&ti| ti >= t).count();
    Ok(count as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(times: &[f64], events: &[bool]) -> SurvivalDataset {
        SurvivalDataset::from_columns(times.to_vec(), events.to_vec(), vec![], 0).unwrap()
    }

    #[test]
    fn km_three_events() {
        let s = kaplan_meier(&ds(&[1.0, 2.0, 3.0], &[true; 3]), Target::Event).unwrap();
        assert!((s.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.eval(2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.eval(3.0), 0.0);
        assert_eq!(s.eval(0.5), 1.0);
    }

    #[test]
    fn km_all_censored_is_flat() {
        let s = kaplan_meier(&ds(&[1.0, 2.0, 3.0], &[false; 3]), Target::Event).unwrap();
        for t in [0.0, 1.0, 2.5, 2.999] {
            assert_eq!(s.eval(t), 1.0);
        }
        assert!(s.jump_times().is_empty());
    }

    #[test]
    fn km_empty_errors() {
        assert!(matches!(kaplan_meier(&ds(&[], &[]), Target::Event), Err(Error::EmptyData)));
    }

    #[test]
    fn censoring_km_flips_status() {
        let d = ds(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, false]);
        let g = kaplan_meier(&d, Target::Censoring).unwrap();
        // at risk for censoring at 2: {2,3,4} -> 1 - 1/3; at 4: {4} -> 0
        assert!((g.eval(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.eval(4.0), 0.0);
        assert_eq!(g.eval(1.5), 1.0);
    }

    #[test]
    fn ties_process_events_first() {
        // event and censoring at t = 1 among 3 subjects
        let d = ds(&[1.0, 1.0, 2.0], &[true, false, true]);
        let s = kaplan_meier(&d, Target::Event).unwrap();
        assert!((s.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
        let g = kaplan_meier(&d, Target::Censoring).unwrap();
        // censoring risk set at 1 excludes the tied event: 1 - 1/2
        assert!((g.eval(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eval_left_limits() {
        let f = StepFunction::new(vec![2.0], vec![0.5], 1.0).unwrap();
        assert_eq!(f.eval(2.0), 0.5);
        assert_eq!(f.eval_left(2.0), 1.0);
        assert_eq!(f.eval_left(0.0), 1.0);
        assert_eq!(f.eval(100.0), 0.5);
        assert_eq!(f.eval_left(100.0), 0.5);
    }

    #[test]
    fn integrate_constant_and_km() {
        let one = StepFunction::constant(1.0);
        assert_eq!(integrate_survival(&one, TimeHorizon::new(5.0).unwrap()), 5.0);
        let s = kaplan_meier(&ds(&[1.0, 2.0, 3.0], &[true; 3]), Target::Event).unwrap();
        let area = integrate_survival(&s, TimeHorizon::new(3.0).unwrap());
        assert!((area - 2.0).abs() < 1e-14);
    }

    #[test]
    fn integrate_fine_exponential_grid() {
        let (lambda, tau, h) = (0.3_f64, 4.0_f64, 1e-5_f64);
        let steps = (tau / h) as usize;
        // midpoint value on each cell [k h, (k + 1) h)
        let times: Vec<f64> = (1..steps).map(|k| k as f64 * h).collect();
        let values: Vec<f64> = times.iter().map(|t| (-lambda * (t + h / 2.0)).exp()).collect();
        let f = StepFunction::new(times, values, (-lambda * h / 2.0).exp()).unwrap();
        let exact = (1.0 - (-lambda * tau).exp()) / lambda;
        assert!((f.integrate(tau) - exact).abs() < 1e-4);
    }

    #[test]
    fn at_risk_counts() {
        let d = ds(&[1.0, 2.0, 3.0], &[true; 3]);
        assert!((at_risk(&d, 2.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(at_risk(&d, 0.0).unwrap(), 1.0);
        assert_eq!(at_risk(&d, 3.5).unwrap(), 0.0);
    }

    fn empirical_survival(times: &[f64], t: f64) -> f64 {
        times.iter().filter(|&&x| x > t).count() as f64 / times.len() as f64
    }

    fn arb_times() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..10.0, 1..40)
    }

    proptest! {
        #[test]
        fn km_without_censoring_is_empirical(times in arb_times()) {
            let events = vec![true; times.len()];
            let s = product_limit(&times, &events, Target::Event).unwrap();
            for &t in times.iter().chain([0.0, 5.0, 11.0].iter()) {
                prop_assert!((s.eval(t) - empirical_survival(&times, t)).abs() < 1e-12);
            }
        }

        #[test]
        fn left_limit_matches_half_gap(times in arb_times(), flags in prop::collection::vec(any::<bool>(), 40)) {
            let events: Vec<bool> = flags[..times.len()].to_vec();
            let s = product_limit(&times, &events, Target::Event).unwrap();
            let jt = s.jump_times();
            if jt.len() >= 2 {
                let gap = jt.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
                for &t in jt {
                    prop_assert_eq!(s.eval_left(t), s.eval(t - gap / 2.0));
                }
            }
        }

        #[test]
        fn integral_additive_at_jumps(times in arb_times(), flags in prop::collection::vec(any::<bool>(), 40)) {
            let events: Vec<bool> = flags[..times.len()].to_vec();
            let s = product_limit(&times, &events, Target::Event).unwrap();
            let tau = times.iter().cloned().fold(0.0, f64::max);
            for &c in s.jump_times() {
                let whole = s.integrate(tau);
                let left = s.integrate(c);
                // integral of the shifted function on [c, tau]
                let shifted = StepFunction::new(
                    s.jump_times().iter().filter(|&&t| t > c).map(|t| t - c).collect(),
                    s.jump_times().iter().zip(s.jump_values()).filter(|(t, _)| **t > c).map(|(_, v)| *v).collect(),
                    s.eval(c),
                ).unwrap();
                let right = shifted.integrate(tau - c);
                prop_assert!((whole - left - right).abs() < 1e-9);
            }
        }

        #[test]
        fn event_and_censoring_jumps_disjoint(times in prop::collection::hash_set(1u32..10_000, 1..40), flags in prop::collection::vec(any::<bool>(), 40)) {
            let times: Vec<f64> = times.into_iter().map(|t| t as f64 / 100.0).collect();
            let events: Vec<bool> = flags[..times.len()].to_vec();
            let s = product_limit(&times, &events, Target::Event).unwrap();
            let g = product_limit(&times, &events, Target::Censoring).unwrap();
            for t in s.jump_times() {
                prop_assert!(!g.jump_times().contains(t));
            }
        }
    }
}
