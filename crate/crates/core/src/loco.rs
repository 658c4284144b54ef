//! Leave-one-covariate-out variable importance.
//!
//! A [`LocoPair`] holds a model fitted with every covariate and one fitted
//! without covariate (or group) `k`, both on the same training part. Local
//! importance maps a conformal interval through
//! `t -> |t ∧ tau - mu^(-k)(z)| - |t ∧ tau - mu(z)|`. The global test checks
//! `H0: p_k <= 1/2` against `p_k > 1/2`, where `p_k` is the probability that
//! dropping `k` does not improve the absolute error given `T* <= tau`,
//! estimated on a held-out part with Kaplan–Meier IPCW weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::conformal::PredictionInterval;
use crate::data::{SurvivalDataset, TimeHorizon};
use crate::error::{Error, Result};
use crate::ipcw::{CensoringFit, DENOMINATOR_GUARD};
use crate::models::{mask_without, Learner, Predictor};
use crate::rng;
use crate::sim::SchemeConfig;
use crate::survival::{kaplan_meier, product_limit, StepFunction, Target};

/// Jitter magnitude relative to the largest `|Delta|`.
pub const JITTER_SCALE: f64 = 1e-6;

/// Full and reduced models fitted on the same training part.
pub struct LocoPair {
    full: Box<dyn Predictor>,
    reduced: Box<dyn Predictor>,
    hidden: Vec<usize>,
    tau: TimeHorizon,
}

impl LocoPair {
    /// Fits `learner` on `d1` with all covariates and without `hidden` (0-based).
    pub fn fit(
        learner: &dyn Learner,
        d1: &SurvivalDataset,
        tau: TimeHorizon,
        hidden: &[usize],
    ) -> Result<Self> {
        let full = learner.fit(d1, tau, &vec![true; d1.dim()])?;
        Self::with_full(full, learner, d1, tau, hidden)
    }

    /// Reuses an already fitted full model.
    pub fn with_full(
        full: Box<dyn Predictor>,
        learner: &dyn Learner,
        d1: &SurvivalDataset,
        tau: TimeHorizon,
        hidden: &[usize],
    ) -> Result<Self> {
        check_hidden(hidden, d1.dim())?;
        let reduced = learner.fit(d1, tau, &mask_without(d1.dim(), hidden))?;
        Ok(Self {
            full,
            reduced,
            hidden: hidden.to_vec(),
            tau,
        })
    }

    pub fn from_parts(
        full: Box<dyn Predictor>,
        reduced: Box<dyn Predictor>,
        hidden: Vec<usize>,
        tau: TimeHorizon,
    ) -> Self {
        Self {
            full,
            reduced,
            hidden,
            tau,
        }
    }

    pub fn full(&self) -> &dyn Predictor {
        self.full.as_ref()
    }

    pub fn reduced(&self) -> &dyn Predictor {
        self.reduced.as_ref()
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn tau(&self) -> TimeHorizon {
        self.tau
    }

    /// `Delta = |t - mu^(-k)(z)| - |t - mu(z)|`.
    pub fn delta(&self, t: f64, z: &[f64]) -> Result<f64> {
        Ok((t - self.reduced.predict(z)?).abs() - (t - self.full.predict(z)?).abs())
    }
}

fn check_hidden(hidden: &[usize], dim: usize) -> Result<()> {
    if hidden.is_empty() {
        return Err(Error::invalid("no covariate to leave out"));
    }
    if let Some(&k) = hidden.iter().find(|&&k| k >= dim) {
        return Err(Error::invalid(format!(
            "covariate index {k} out of range for dimension {dim}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalImportance {
    pub lower: f64,
    pub upper: f64,
}

/// Exact image of a prediction interval under
/// `t -> |t ∧ tau - mu^(-k)(z)| - |t ∧ tau - mu(z)|`.
///
/// The map is piecewise linear with kinks at the two predictions and at
/// `tau`, so its extremes are attained at the endpoints or at a kink.
pub fn local_importance(
    pair: &LocoPair,
    interval: &PredictionInterval,
    z: &[f64],
) -> Result<LocalImportance> {
    let tau = pair.tau.value();
    let m = pair.full.predict(z)?;
    let mk = pair.reduced.predict(z)?;
    let (lo, hi) = (interval.lower(), interval.upper());
    let f = |t: f64| (t.min(tau) - mk).abs() - (t.min(tau) - m).abs();
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for t in [lo, hi, m, mk, tau] {
        if (lo..=hi).contains(&t) {
            let v = f(t);
            lower = lower.min(v);
            upper = upper.max(v);
        }
    }
    Ok(LocalImportance { lower, upper })
}

/// Which side of the correction term `S(tau) / (1 - S(tau))` enters the
/// variance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceForm {
    /// `(1{T_i <= T_j} + S/(1-S)) Phi_j w_j`, the plug-in of the
    /// asymptotic variance.
    #[default]
    PlugIn,
    /// `(1{T_i <= T_j} - S/(1-S)) Phi_j w_j`, the sign as printed in the
    /// displayed estimator.
    Printed,
}

impl std::str::FromStr for VarianceForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plug-in" => Ok(VarianceForm::PlugIn),
            "printed" => Ok(VarianceForm::Printed),
            other => Err(Error::invalid(format!("unknown variance form '{other}'"))),
        }
    }
}

/// Value of the censoring-adjusted sign test on one evaluation part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub theta_hat: f64,
    pub sigma2_hat: f64,
    pub statistic: f64,
    /// Kaplan–Meier survival of the event time at `tau`.
    pub survival_at_tau: f64,
}

/// The censoring-adjusted sign test from raw indicators.
///
/// `phi[i]` is `Phi_k(T_i, Z_i)` and only matters when `T_i <= tau`;
/// `censoring` is the censoring survival `1 - G` used for the weights.
pub fn sign_test(
    times: &[f64],
    events: &[bool],
    phi: &[bool],
    censoring: &StepFunction,
    tau: TimeHorizon,
    form: VarianceForm,
) -> Result<SignTest> {
    let n = times.len();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if events.len() != n || phi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: events.len().min(phi.len()),
        });
    }
    let tau = tau.value();
    let s_tau = product_limit(times, events, Target::Event)?.eval(tau);
    let f_tau = 1.0 - s_tau;
    if f_tau <= 0.0 {
        return Err(Error::NoEffectiveEvents);
    }
    let nf = n as f64;
    let mut pw = vec![0.0; n];
    for i in 0..n {
        if times[i] <= tau && events[i] && phi[i] {
            let denom = censoring.eval_left(times[i]);
            if denom <= DENOMINATOR_GUARD {
                return Err(Error::CensoringSupportExhausted {
                    index: i,
                    survival: denom,
                });
            }
            pw[i] = 1.0 / denom;
        }
    }
    let a = pw.iter().sum::<f64>() / nf;
    let theta_hat = a / f_tau;
    let ratio = s_tau / f_tau;
    let shift = match form {
        VarianceForm::PlugIn => ratio * a,
        VarianceForm::Printed => -ratio * a,
    };

    // suffix sums over T_j >= T_i, ties included
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| times[y].total_cmp(&times[x]));
    let mut sum = 0.0;
    let mut pos = 0;
    let mut acc_pw = 0.0;
    while pos < n {
        let t = times[order[pos]];
        let mut end = pos;
        while end < n && times[order[end]] == t {
            acc_pw += pw[order[end]];
            end += 1;
        }
        if t <= tau {
            let y = end as f64 / nf;
            let b = acc_pw / nf;
            for &i in &order[pos..end] {
                let correction = if events[i] { (b + shift) / y } else { 0.0 };
                sum += (pw[i] - correction).powi(2);
            }
        }
        pos = end;
    }
    let sigma2_hat = sum / nf / (f_tau * f_tau);
    if !(sigma2_hat > 0.0) {
        return Err(Error::DegenerateStatistic);
    }
    Ok(SignTest {
        theta_hat,
        sigma2_hat,
        statistic: (nf / sigma2_hat).sqrt() * (theta_hat - 0.5),
        survival_at_tau: s_tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalTestOptions {
    /// Level of the confidence interval for `p_k`.
    pub alpha: f64,
    /// Randomize the sign of `Delta` where it is exactly zero.
    pub jitter: bool,
    pub variance: VarianceForm,
}

impl Default for GlobalTestOptions {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            jitter: false,
            variance: VarianceForm::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTestReport {
    /// Left-out covariates, 0-based.
    pub hidden: Vec<usize>,
    pub statistic: f64,
    pub p_value: f64,
    pub theta_hat: f64,
    pub sigma2_hat: f64,
    pub ci: [f64; 2],
    pub alpha: f64,
    pub jitter: bool,
    /// Jitter magnitude, zero when no jitter was applied.
    pub xi: f64,
    pub n_eval: usize,
}

/// `Phi_k` on `d2`, with the jitter magnitude actually used.
pub fn phi_indicators(
    pair: &LocoPair,
    d2: &SurvivalDataset,
    jitter: bool,
    seed: u64,
) -> Result<(Vec<bool>, f64)> {
    let tau = pair.tau.value();
    let deltas = d2
        .iter()
        .map(|(t, _, z)| if t <= tau { pair.delta(t, z) } else { Ok(0.0) })
        .collect::<Result<Vec<f64>>>()?;
    let mut xi = 0.0;
    let mut u = Vec::new();
    if jitter {
        let scale = deltas.iter().fold(0.0, |m: f64, d| m.max(d.abs()));
        xi = JITTER_SCALE * if scale > 0.0 { scale } else { 1.0 };
        let mut r = rng::stream(seed, 0);
        u = (0..d2.len()).map(|_| 2.0 * rng::uniform(&mut r) - 1.0).collect();
    }
    let phi = (0..d2.len())
        .map(|i| {
            if d2.time(i) > tau {
                false
            } else if jitter && deltas[i] == 0.0 {
                xi * u[i] >= 0.0
            } else {
                deltas[i] >= 0.0
            }
        })
        .collect();
    Ok((phi, xi))
}

/// Global test with weights from the marginal Kaplan–Meier censoring
/// estimate on `d2`.
pub fn global_test(
    pair: &LocoPair,
    d2: &SurvivalDataset,
    options: &GlobalTestOptions,
    seed: u64,
) -> Result<GlobalTestReport> {
    let censoring = kaplan_meier(d2, Target::Censoring)?;
    global_test_with_censoring(pair, d2, &censoring, options, seed)
}

/// Global test with a caller-supplied censoring survival curve, for instance
/// one fitted on pooled data.
pub fn global_test_with_censoring(
    pair: &LocoPair,
    d2: &SurvivalDataset,
    censoring: &StepFunction,
    options: &GlobalTestOptions,
    seed: u64,
) -> Result<GlobalTestReport> {
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {} outside (0, 1)", options.alpha)));
    }
    pair.tau.check_against(d2)?;
    let (phi, xi) = phi_indicators(pair, d2, options.jitter, seed)?;
    let test = sign_test(d2.times(), d2.events(), &phi, censoring, pair.tau, options.variance)?;
    let normal = Normal::standard();
    let half = (test.sigma2_hat / d2.len() as f64).sqrt() * normal.inverse_cdf(1.0 - options.alpha / 2.0);
    Ok(GlobalTestReport {
        hidden: pair.hidden.clone(),
        statistic: test.statistic,
        p_value: (1.0 - normal.cdf(test.statistic)).clamp(0.0, 1.0),
        theta_hat: test.theta_hat,
        sigma2_hat: test.sigma2_hat,
        ci: [test.theta_hat - half, test.theta_hat + half],
        alpha: options.alpha,
        jitter: options.jitter,
        xi,
        n_eval: d2.len(),
    })
}

/// Monte-Carlo value of `p_k = P(Delta >= 0 | T* <= tau)` under a scheme,
/// counting only draws with `T* <= tau`.
pub fn population_pk(pair: &LocoPair, scheme: &SchemeConfig, draws: usize, seed: u64) -> Result<f64> {
    let tau = pair.tau.value();
    let mut r = rng::stream(seed, 0);
    let (mut hits, mut total) = (0usize, 0usize);
    for _ in 0..draws {
        let z = scheme.draw_covariates(&mut r);
        let t = scheme.draw_event_time(&z, &mut r);
        if t <= tau {
            total += 1;
            if pair.delta(t, &z)? >= 0.0 {
                hits += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::NoEffectiveEvents);
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// `min(1, 2 median(p))`.
    #[default]
    Median,
    /// `min(1, 2 mean(p))`.
    Mean,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(Aggregation::Median),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::invalid(format!("unknown aggregation '{other}'"))),
        }
    }
}

pub fn aggregate_p_values(p: &[f64], how: Aggregation) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::EmptyData);
    }
    let center = match how {
        Aggregation::Median => {
            let mut s = p.to_vec();
            s.sort_by(f64::total_cmp);
            let m = s.len();
            if m % 2 == 1 {
                s[m / 2]
            } else {
                0.5 * (s[m / 2 - 1] + s[m / 2])
            }
        }
        Aggregation::Mean => p.iter().sum::<f64>() / p.len() as f64,
    };
    Ok((2.0 * center).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultisplitOptions {
    pub test: GlobalTestOptions,
    /// Share of the data in the fitting part of each split.
    pub rho: f64,
    pub aggregation: Aggregation,
    /// `Split` fits the censoring curve on each evaluation part, `Pooled`
    /// once on all data.
    pub censoring_fit: CensoringFit,
}

impl Default for MultisplitOptions {
    fn default() -> Self {
        Self {
            test: GlobalTestOptions::default(),
            rho: 0.5,
            aggregation: Aggregation::default(),
            censoring_fit: CensoringFit::Split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultisplitResult {
    /// Left-out covariates, 0-based.
    pub hidden: Vec<usize>,
    pub p_values: Vec<f64>,
    pub aggregate: f64,
}

/// Runs the global test for each covariate group over `splits` seeded random
/// splits and aggregates the p-values.
pub fn multisplit(
    data: &SurvivalDataset,
    learner: &dyn Learner,
    tau: TimeHorizon,
    groups: &[Vec<usize>],
    splits: usize,
    options: &MultisplitOptions,
    seed: u64,
) -> Result<Vec<MultisplitResult>> {
    if splits == 0 {
        return Err(Error::invalid("need at least one split"));
    }
    for g in groups {
        check_hidden(g, data.dim())?;
    }
    let n = data.len();
    let n1 = (options.rho * n as f64).floor() as usize;
    if n1 < 2 || n - n1 < 2 {
        return Err(Error::invalid(format!("split sizes {n1} and {} are too small", n - n1)));
    }
    let pooled = match options.censoring_fit {
        CensoringFit::Pooled => Some(kaplan_meier(data, Target::Censoring)?),
        CensoringFit::Split => None,
    };
    let per_split = (0..splits)
        .into_par_iter()
        .map(|s| {
            let (i1, i2) = rng::split_indices(n, n1, seed, s as u64);
            let d1 = data.subset(&i1);
            let d2 = data.subset(&i2);
            let censoring = match &pooled {
                Some(c) => c.clone(),
                None => kaplan_meier(&d2, Target::Censoring)?,
            };
            groups
                .iter()
                .enumerate()
                .map(|(k, g)| {
                    let pair = LocoPair::fit(learner, &d1, tau, g)?;
                    let jitter_seed = rng::derive_seed(seed, (s * groups.len() + k) as u64 + (1 << 32));
                    let report =
                        global_test_with_censoring(&pair, &d2, &censoring, &options.test, jitter_seed)?;
                    Ok(report.p_value)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    groups
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let p_values: Vec<f64> = per_split.iter().map(|ps| ps[k]).collect();
            Ok(MultisplitResult {
                hidden: g.clone(),
                aggregate: aggregate_p_values(&p_values, options.aggregation)?,
                p_values,
            })
        })
        .collect()
}
