//! Right-censored observations and the dataset container used throughout the crate.
//!
//! A dataset stores its columns separately: follow-up times, event flags
//! (`true` = event observed, `false` = censored) and a row-major covariate
//! matrix. Row order is stable, so row indices double as identities for
//! sample splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One right-censored record `(T, delta, Z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
}

impl Observation {
    pub fn new(time: f64, event: bool, covariates: Vec<f64>) -> Self {
        Self {
            time,
            event,
            covariates,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    events: Vec<bool>,
    covariates: Vec<f64>,
    dim: usize,
    names: Option<Vec<String>>,
}

impl SurvivalDataset {
    /// Builds a dataset from columns. `covariates` is row-major with `dim`
    /// entries per row.
    pub fn from_columns(
        times: Vec<f64>,
        events: Vec<bool>,
        covariates: Vec<f64>,
        dim: usize,
    ) -> Result<Self> {
        let n = times.len();
        if events.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: events.len(),
            });
        }
        if covariates.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                got: covariates.len(),
            });
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::invalid(format!(
                "observation {i}: time must be finite and nonnegative, got {}",
                times[i]
            )));
        }
        if let Some(j) = covariates.iter().position(|z| !z.is_finite()) {
            return Err(Error::invalid(format!(
                "observation {}: covariate {} is not finite",
                j / dim.max(1),
                j % dim.max(1)
            )));
        }
        Ok(Self {
            times,
            events,
            covariates,
            dim,
            names: None,
        })
    }

    pub fn from_observations(observations: &[Observation], dim: usize) -> Result<Self> {
        let mut times = Vec::with_capacity(observations.len());
        let mut events = Vec::with_capacity(observations.len());
        let mut covariates = Vec::with_capacity(observations.len() * dim);
        for (i, obs) in observations.iter().enumerate() {
            if obs.covariates.len() != dim {
                return Err(Error::invalid(format!(
                    "observation {i}: expected {dim} covariates, got {}",
                    obs.covariates.len()
                )));
            }
            times.push(obs.time);
            events.push(obs.event);
            covariates.extend_from_slice(&obs.covariates);
        }
        Self::from_columns(times, events, covariates, dim)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: names.len(),
            });
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn event(&self, i: usize) -> bool {
        self.events[i]
    }

    /// Covariate row `i`.
    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.dim..(i + 1) * self.dim]
    }

    pub fn observation(&self, i: usize) -> Observation {
        Observation::new(self.times[i], self.events[i], self.covariates(i).to_vec())
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, bool, &[f64])> + '_ {
        (0..self.len()).map(move |i| (self.times[i], self.events[i], self.covariates(i)))
    }

    pub fn max_time(&self) -> Option<f64> {
        self.times.iter().copied().reduce(f64::max)
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.events.iter().filter(|e| !**e).count() as f64 / self.len() as f64
    }

    /// Dataset with the event indicator flipped, so that censoring becomes the event.
    pub fn flipped(&self) -> Self {
        let mut out = self.clone();
        for e in &mut out.events {
            *e = !*e;
        }
        out
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut times = Vec::with_capacity(indices.len());
        let mut events = Vec::with_capacity(indices.len());
        let mut covariates = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            times.push(self.times[i]);
            events.push(self.events[i]);
            covariates.extend_from_slice(self.covariates(i));
        }
        Self {
            times,
            events,
            covariates,
            dim: self.dim,
            names: self.names.clone(),
        }
    }

    /// Concatenates two datasets with the same covariate dimension.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut out = self.clone();
        out.times.extend_from_slice(&other.times);
        out.events.extend_from_slice(&other.events);
        out.covariates.extend_from_slice(&other.covariates);
        Ok(out)
    }

    /// Restricted follow-up times `T_i ∧ tau`.
    pub fn restricted_times(&self, tau: TimeHorizon) -> Vec<f64> {
        self.times.iter().map(|t| t.min(tau.value())).collect()
    }
}

/// Time horizon `tau` over which restricted means are taken.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeHorizon(f64);

impl TimeHorizon {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidHorizon(format!(
                "tau must be positive and finite, got {tau}"
            )));
        }
        Ok(Self(tau))
    }

    /// Nearest-rank empirical `level` quantile of the observed times.
    pub fn from_quantile(data: &SurvivalDataset, level: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        if !(level > 0.0 && level <= 1.0) {
            return Err(Error::invalid(format!("quantile level {level} outside (0, 1]")));
        }
        Self::new(nearest_rank(data.times(), level))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Checks `tau` does not exceed the largest observed time.
    pub fn check_against(self, data: &SurvivalDataset) -> Result<Self> {
        let max = data.max_time().ok_or(Error::EmptyData)?;
        if self.0 > max {
            return Err(Error::InvalidHorizon(format!(
                "tau = {} exceeds the maximum observed time {max}",
                self.0
            )));
        }
        Ok(self)
    }
}

impl std::fmt::Display for TimeHorizon {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Nearest-rank quantile: the `ceil(level * n)`-th smallest value.
pub fn nearest_rank(values: &[f64], level: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((level * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}
