//! IPCW split conformal and rank-one-out conformal prediction intervals.

use serde::{Deserialize, Serialize};

use crate::data::{SurvivalDataset, TimeHorizon};
use crate::error::{Error, Result};
use crate::ipcw::{ipcw_weights, CensoringKind, CensoringModel};
use crate::models::{Learner, Predictor};
use crate::rng;

/// Magnitude of the optional tie-breaking jitter, relative to the largest residual.
pub const TIE_JITTER: f64 = 1e-9;

/// Residuals `|T ∧ tau - mu_hat(Z)|` with their IPCW weights, kept sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedResiduals {
    residuals: Vec<f64>,
    weights: Vec<f64>,
    /// Positions of the residuals in increasing order.
    order: Vec<usize>,
    /// `cumulative[r]` is the weight of the `r + 1` smallest residuals.
    cumulative: Vec<f64>,
    /// Rank of each residual in `order`.
    rank: Vec<usize>,
}

impl WeightedResiduals {
    pub fn new(residuals: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if residuals.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: residuals.len(),
                got: weights.len(),
            });
        }
        if residuals.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::invalid("residuals must be finite and nonnegative"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let mut order: Vec<usize> = (0..residuals.len()).collect();
        order.sort_by(|&a, &b| residuals[a].total_cmp(&residuals[b]));
        let mut rank = vec![0; residuals.len()];
        let mut cumulative = Vec::with_capacity(residuals.len());
        let mut acc = 0.0;
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
            acc += weights[i];
            cumulative.push(acc);
        }
        Ok(Self {
            residuals,
            weights,
            order,
            cumulative,
            rank,
        })
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// `inf { t : sum_i 1{R_i <= t} w_i / sum_i w_i >= level }`.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        check_level(level)?;
        let total = self.total_weight();
        if total <= 0.0 {
            return Err(Error::NoEffectiveSample);
        }
        let target = level * total;
        let r = self.cumulative.partition_point(|&c| c < target);
        Ok(self.residuals[self.order[r.min(self.len() - 1)]])
    }

    /// The quantile of the weighted distribution with residual `i` removed.
    pub fn quantile_without(&self, i: usize, level: f64) -> Result<f64> {
        check_level(level)?;
        let wi = self.weights[i];
        let total = self.total_weight() - wi;
        if total <= 0.0 {
            return Err(Error::NoEffectiveSample);
        }
        let target = level * total;
        let skip = self.rank[i];
        let below = &self.cumulative[..skip];
        let r = below.partition_point(|&c| c < target);
        let above = &self.cumulative[skip + 1..];
        let r = if r < skip || above.is_empty() {
            r.min(skip.saturating_sub(1))
        } else {
            skip + 1 + above.partition_point(|&c| c - wi < target).min(above.len() - 1)
        };
        Ok(self.residuals[self.order[r]])
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level {level} outside (0, 1)")));
    }
    Ok(())
}

pub fn weighted_quantile(wr: &WeightedResiduals, level: f64) -> Result<f64> {
    wr.quantile(level)
}

/// Symmetric interval `[center - half_width, center + half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub center: f64,
    pub half_width: f64,
}

impl PredictionInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    /// Closed-interval membership.
    pub fn contains(&self, t: f64) -> bool {
        self.lower() <= t && t <= self.upper()
    }

    /// Whether the interval reaches outside `[0, tau]`.
    pub fn exceeds(&self, tau: TimeHorizon) -> bool {
        self.lower() < 0.0 || self.upper() > tau.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalOptions {
    /// Miscoverage level.
    pub alpha: f64,
    /// Share of the data used to fit the model in the split algorithm.
    pub rho: f64,
    /// Break residual ties with a tiny seeded uniform perturbation.
    pub tie_jitter: bool,
}

impl Default for ConformalOptions {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            rho: 0.5,
            tie_jitter: false,
        }
    }
}

impl ConformalOptions {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("rho {} outside (0, 1)", self.rho)));
        }
        Ok(())
    }
}

fn residuals(
    data: &SurvivalDataset,
    indices: &[usize],
    model: &dyn Predictor,
    tau: TimeHorizon,
) -> Result<Vec<f64>> {
    indices
        .iter()
        .map(|&i| Ok((data.time(i).min(tau.value()) - model.predict(data.covariates(i))?).abs()))
        .collect()
}

fn jitter(residuals: &mut [f64], seed: u64, index: u64) {
    let scale = residuals.iter().fold(0.0, |m: f64, r| m.max(*r));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut r = rng::stream(seed, index);
    for x in residuals {
        *x = (*x + TIE_JITTER * scale * (2.0 * rng::uniform(&mut r) - 1.0)).max(0.0);
    }
}

/// Output of the split algorithm: a model fitted on the first part and the
/// weighted residual quantile of the second.
pub struct SplitConformal {
    model: Box<dyn Predictor>,
    q_hat: f64,
    tau: TimeHorizon,
    fit_indices: Vec<usize>,
    calibration_indices: Vec<usize>,
}

impl SplitConformal {
    pub fn interval(&self, z: &[f64]) -> Result<PredictionInterval> {
        Ok(PredictionInterval {
            center: self.model.predict(z)?,
            half_width: self.q_hat,
        })
    }

    pub fn intervals(&self, data: &SurvivalDataset) -> Result<Vec<PredictionInterval>> {
        (0..data.len()).map(|i| self.interval(data.covariates(i))).collect()
    }

    pub fn q_hat(&self) -> f64 {
        self.q_hat
    }

    pub fn tau(&self) -> TimeHorizon {
        self.tau
    }

    pub fn model(&self) -> &dyn Predictor {
        self.model.as_ref()
    }

    /// Indices of `D1`, the part the model was fitted on.
    pub fn fit_indices(&self) -> &[usize] {
        &self.fit_indices
    }

    /// Indices of `D2`, the calibration part.
    pub fn calibration_indices(&self) -> &[usize] {
        &self.calibration_indices
    }
}

/// IPCW split conformal prediction.
///
/// `G` is fitted on all of `train`; the data are split by a seeded
/// permutation into `n1 = floor(rho n)` fitting and `n - n1` calibration
/// observations.
pub fn split_conformal(
    train: &SurvivalDataset,
    learner: &dyn Learner,
    censoring: CensoringKind,
    tau: TimeHorizon,
    options: &ConformalOptions,
    seed: u64,
) -> Result<SplitConformal> {
    options.validate()?;
    let n = train.len();
    let n1 = (options.rho * n as f64).floor() as usize;
    if n1 < 2 || n - n1 < 2 {
        return Err(Error::invalid(format!(
            "split sizes {n1} and {} are too small",
            n - n1
        )));
    }
    let g = CensoringModel::fit(train, censoring)?;
    let (fit_indices, calibration_indices) = rng::split_indices(n, n1, seed, 0);
    let d1 = train.subset(&fit_indices);
    let d2 = train.subset(&calibration_indices);
    let model = learner.fit(&d1, tau, &vec![true; train.dim()])?;
    let mut r = residuals(train, &calibration_indices, model.as_ref(), tau)?;
    if options.tie_jitter {
        jitter(&mut r, seed, 1);
    }
    let w = ipcw_weights(&d2, &g, tau)?;
    let wr = WeightedResiduals::new(r, w.weights().to_vec())?;
    let q_hat = wr.quantile(1.0 - options.alpha)?;
    Ok(SplitConformal {
        model,
        q_hat,
        tau,
        fit_indices,
        calibration_indices,
    })
}

/// IPCW rank-one-out conformal prediction: one in-sample interval per
/// training observation, in index order. `options.rho` is ignored since the
/// algorithm always uses halves.
pub fn roo_conformal(
    train: &SurvivalDataset,
    learner: &dyn Learner,
    censoring: CensoringKind,
    tau: TimeHorizon,
    options: &ConformalOptions,
    seed: u64,
) -> Result<Vec<PredictionInterval>> {
    options.validate()?;
    let n = train.len();
    if n < 4 {
        return Err(Error::invalid(format!(
            "rank-one-out conformal needs at least 4 observations, got {n}"
        )));
    }
    let g = CensoringModel::fit(train, censoring)?;
    let weights = ipcw_weights(train, &g, tau)?;
    let (first, second) = rng::split_indices(n, n / 2, seed, 0);
    let mask = vec![true; train.dim()];
    let mut out = vec![None; n];
    for (k, (fit_part, other)) in [(&first, &second), (&second, &first)].into_iter().enumerate() {
        let model = learner.fit(&train.subset(fit_part), tau, &mask)?;
        let mut r = residuals(train, other, model.as_ref(), tau)?;
        if options.tie_jitter {
            jitter(&mut r, seed, 1 + k as u64);
        }
        let wr = WeightedResiduals::new(r, weights.subset(other).weights().to_vec())?;
        for (pos, &i) in other.iter().enumerate() {
            out[i] = Some(PredictionInterval {
                center: model.predict(train.covariates(i))?,
                half_width: wr.quantile_without(pos, 1.0 - options.alpha)?,
            });
        }
    }
    Ok(out.into_iter().map(|x| x.expect("every index lies in one half")).collect())
}

/// Fraction of truths inside their (closed) intervals.
pub fn coverage_eval(intervals: &[PredictionInterval], truths: &[f64]) -> Result<f64> {
    if intervals.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: intervals.len(),
            got: truths.len(),
        });
    }
    if intervals.is_empty() {
        return Err(Error::EmptyData);
    }
    let hits = intervals
        .iter()
        .zip(truths)
        .filter(|(c, t)| c.contains(**t))
        .count();
    Ok(hits as f64 / intervals.len() as f64)
}
