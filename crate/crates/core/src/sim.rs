//! Simulation schemes with latent event and censoring times kept alongside
//! the observed data, plus the true RMST of each scheme.
//!
//! | scheme | event time | covariates | censoring |
//! |---|---|---|---|
//! | A1 | `5.5 + 2.5 Z1 + 2.5 Z2 + U[-3, 3]` | `Z1, Z2 ~ B(0.5)` | `Exp(0.07)` |
//! | A2 | as A1 | as A1 | Cox–Weibull, `kappa = 12`, `nu = 6`, `beta = (2, 1)` |
//! | B | Cox–Weibull, `kappa = 2`, `nu = 6`, `beta = (2, 1, 0)` | `Z^k ~ U[-5, 5]`, k = 1..3 | `Exp(0.3)` |
//! | C | Cox–Weibull, `kappa = 2`, `nu = 6`, interaction score `g(Z)` | 15 mixed binary/uniform | `Exp(0.3)` |
//!
//! Scheme A uses `tau = 8.8`; schemes B and C use the nearest-rank 90th
//! percentile of the observed times of the generated sample. All draws use
//! inverse-transform sampling on a single [`crate::rng`] stream per sample,
//! in the order covariates, event time, censoring time for each subject.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{SurvivalDataset, TimeHorizon};
use crate::error::{Error, Result};
use crate::ipcw::CensoringSurvival;
use crate::models::{least_squares, Predictor};
use crate::rng::{self, uniform, uniform_open};

pub const SCHEME_A_TAU: f64 = 8.8;
/// Linear coefficients of the scheme-A event time: intercept, `Z1`, `Z2`.
pub const SCHEME_A_BETA: [f64; 3] = [5.5, 2.5, 2.5];
/// Published coefficients of the scheme-A closed-form RMST at `tau = 8.8`.
pub const SCHEME_A_RMST_COEFFICIENTS: [f64; 4] = [5.5, 2.097, 2.097, 3.16];
pub const SCHEME_A1_CENSORING_RATE: f64 = 0.07;
pub const SCHEME_A2_CENSORING: WeibullCox = WeibullCox {
    kappa: 12.0,
    nu: 6.0,
};
pub const SCHEME_A2_CENSORING_BETA: [f64; 2] = [2.0, 1.0];
pub const SCHEME_BC_EVENT: WeibullCox = WeibullCox {
    kappa: 2.0,
    nu: 6.0,
};
pub const SCHEME_B_BETA: [f64; 3] = [2.0, 1.0, 0.0];
pub const SCHEME_B_HALF_WIDTH: f64 = 5.0;
pub const SCHEME_BC_CENSORING_RATE: f64 = 0.3;
/// 1-based indices of the Bernoulli(0.4) covariates in scheme C.
pub const SCHEME_C_BINARY: [usize; 6] = [2, 4, 6, 9, 11, 12];
pub const SCHEME_C_DIM: usize = 15;
pub const HORIZON_QUANTILE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    A1,
    A2,
    B,
    C,
}

impl Scheme {
    pub fn dim(self) -> usize {
        match self {
            Scheme::A1 | Scheme::A2 => 2,
            Scheme::B => 3,
            Scheme::C => SCHEME_C_DIM,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::A1 => "A1",
            Scheme::A2 => "A2",
            Scheme::B => "B",
            Scheme::C => "C",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A1" | "A" => Ok(Scheme::A1),
            "A2" => Ok(Scheme::A2),
            "B" => Ok(Scheme::B),
            "C" => Ok(Scheme::C),
            other => Err(Error::invalid(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Weibull baseline `S0(t) = exp(-(t / kappa)^nu)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullCox {
    pub kappa: f64,
    pub nu: f64,
}

impl WeibullCox {
    /// `S(t | z) = exp(-(t / kappa)^nu * exp(lp))`.
    pub fn survival(&self, t: f64, lp: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        (-(t / self.kappa).powf(self.nu) * lp.exp()).exp()
    }

    /// Inverse transform of `u in (0, 1]`.
    pub fn quantile(&self, u: f64, lp: f64) -> f64 {
        self.kappa * (-u.ln() * (-lp).exp()).powf(1.0 / self.nu)
    }
}

/// Scheme-C log relative hazard (covariates 1-based as in the table).
pub fn scheme_c_score(z: &[f64]) -> f64 {
    let v = |k: usize| z[k - 1];
    v(3) - 3.0 * v(5) + 2.0 * v(1) * v(10) + 4.0 * v(2) * v(7) + 3.0 * v(4) * v(5)
        - 5.0 * v(6) * v(10)
        + 3.0 * v(8) * v(9)
        + v(1) * v(4)
        - 2.0 * v(6) * v(9)
        - 4.0 * v(3) * v(4)
        - v(7) * v(8)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Event-time generating parameters, with `beta` overridable for scheme B.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub scheme_b_beta: [f64; 3],
}

impl From<Scheme> for SchemeConfig {
    fn from(scheme: Scheme) -> Self {
        Self {
            scheme,
            scheme_b_beta: SCHEME_B_BETA,
        }
    }
}

impl SchemeConfig {
    pub fn draw_covariates<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.scheme {
            Scheme::A1 | Scheme::A2 => (0..2)
                .map(|_| if uniform(rng) < 0.5 { 1.0 } else { 0.0 })
                .collect(),
            Scheme::B => (0..3)
                .map(|_| SCHEME_B_HALF_WIDTH * (2.0 * uniform(rng) - 1.0))
                .collect(),
            Scheme::C => (1..=SCHEME_C_DIM)
                .map(|k| {
                    let u = uniform(rng);
                    if SCHEME_C_BINARY.contains(&k) {
                        if u < 0.4 {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        u
                    }
                })
                .collect(),
        }
    }

    /// Log relative hazard of the event time (schemes B and C).
    pub fn event_score(&self, z: &[f64]) -> f64 {
        match self.scheme {
            Scheme::B => dot(&self.scheme_b_beta, z),
            Scheme::C => scheme_c_score(z),
            Scheme::A1 | Scheme::A2 => 0.0,
        }
    }

    pub fn draw_event_time<R: Rng + ?Sized>(&self, z: &[f64], rng: &mut R) -> f64 {
        match self.scheme {
            Scheme::A1 | Scheme::A2 => {
                let eps = 6.0 * uniform(rng) - 3.0;
                SCHEME_A_BETA[0] + SCHEME_A_BETA[1] * z[0] + SCHEME_A_BETA[2] * z[1] + eps
            }
            Scheme::B | Scheme::C => {
                SCHEME_BC_EVENT.quantile(uniform_open(rng), self.event_score(z))
            }
        }
    }

    pub fn draw_censoring_time<R: Rng + ?Sized>(&self, z: &[f64], rng: &mut R) -> f64 {
        let u = uniform_open(rng);
        match self.scheme {
            Scheme::A1 => -u.ln() / SCHEME_A1_CENSORING_RATE,
            Scheme::A2 => SCHEME_A2_CENSORING.quantile(u, dot(&SCHEME_A2_CENSORING_BETA, z)),
            Scheme::B | Scheme::C => -u.ln() / SCHEME_BC_CENSORING_RATE,
        }
    }

    /// True conditional survival of the event time.
    pub fn event_survival(&self, t: f64, z: &[f64]) -> f64 {
        match self.scheme {
            Scheme::A1 | Scheme::A2 => {
                let a = SCHEME_A_BETA[0] + SCHEME_A_BETA[1] * z[0] + SCHEME_A_BETA[2] * z[1];
                ((a + 3.0 - t) / 6.0).clamp(0.0, 1.0)
            }
            Scheme::B | Scheme::C => SCHEME_BC_EVENT.survival(t, self.event_score(z)),
        }
    }

    /// True RMST `E[T* ∧ tau | Z = z]`.
    pub fn true_rmst(&self, z: &[f64], tau: f64) -> f64 {
        match self.scheme {
            Scheme::A1 | Scheme::A2 => scheme_a_rmst(z, tau),
            Scheme::B | Scheme::C => true_rmst_weibull_cox(
                self.event_score(z),
                SCHEME_BC_EVENT.kappa,
                SCHEME_BC_EVENT.nu,
                tau,
            ),
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<SimulatedSample> {
        if n == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        let dim = self.scheme.dim();
        let mut r = rng::stream(seed, 0);
        let mut times = Vec::with_capacity(n);
        let mut events = Vec::with_capacity(n);
        let mut covariates = Vec::with_capacity(n * dim);
        let mut event_times = Vec::with_capacity(n);
        let mut censoring_times = Vec::with_capacity(n);
        for _ in 0..n {
            let z = self.draw_covariates(&mut r);
            let t_star = self.draw_event_time(&z, &mut r);
            let c = self.draw_censoring_time(&z, &mut r);
            times.push(t_star.min(c));
            events.push(t_star <= c);
            covariates.extend_from_slice(&z);
            event_times.push(t_star);
            censoring_times.push(c);
        }
        let dataset = SurvivalDataset::from_columns(times, events, covariates, dim)?;
        let tau = match self.scheme {
            Scheme::A1 | Scheme::A2 => TimeHorizon::new(SCHEME_A_TAU)?,
            Scheme::B | Scheme::C => TimeHorizon::from_quantile(&dataset, HORIZON_QUANTILE)?,
        };
        Ok(SimulatedSample {
            scheme: self.clone(),
            dataset,
            event_times,
            censoring_times,
            tau,
        })
    }
}

/// Exact RMST of the scheme-A linear model with uniform noise.
pub fn scheme_a_rmst(z: &[f64], tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let a = SCHEME_A_BETA[0] + SCHEME_A_BETA[1] * z[0] + SCHEME_A_BETA[2] * z[1];
    let (lo, hi) = (a - 3.0, a + 3.0);
    if tau >= hi {
        a
    } else if tau <= lo {
        tau
    } else {
        a - (hi - tau).powi(2) / 12.0
    }
}

/// Published closed form `b00 + b01 Z1 (1 - Z2) + b10 Z2 (1 - Z1) + b11 Z1 Z2`.
pub fn scheme_a_closed_form(z: &[f64]) -> f64 {
    dot(&SCHEME_A_RMST_COEFFICIENTS, &scheme_a_design(z))
}

/// Saturated design `(1, Z1 (1 - Z2), Z2 (1 - Z1), Z1 Z2)` for binary `Z1, Z2`.
pub fn scheme_a_design(z: &[f64]) -> [f64; 4] {
    [
        1.0,
        z[0] * (1.0 - z[1]),
        z[1] * (1.0 - z[0]),
        z[0] * z[1],
    ]
}

/// `int_0^tau exp(-(t / kappa)^nu * exp(lp)) dt` by adaptive Simpson
/// quadrature to absolute tolerance `1e-8`.
pub fn true_rmst_weibull_cox(lp: f64, kappa: f64, nu: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let model = WeibullCox { kappa, nu };
    adaptive_simpson(&|t| model.survival(t, lp), 0.0, tau, 1e-8)
}

pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // seed with a few panels so narrow features are not skipped
    let panels = 8;
    let h = (b - a) / panels as f64;
    if h > 0.0 && whole.is_finite() {
        (0..panels)
            .map(|k| {
                let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
                let (flo, fhi, fmid) = (f(lo), f(hi), f(0.5 * (lo + hi)));
                let s = h / 6.0 * (flo + 4.0 * fmid + fhi);
                recurse(f, lo, hi, flo, fmid, fhi, s, tol / panels as f64, 50)
            })
            .sum()
    } else {
        whole
    }
}

/// A generated sample with its latent times.
///
/// Estimators only ever see [`SimulatedSample::dataset`].
#[derive(Debug, Clone)]
pub struct SimulatedSample {
    pub scheme: SchemeConfig,
    pub dataset: SurvivalDataset,
    /// Latent event times `T*`.
    pub event_times: Vec<f64>,
    /// Latent censoring times `C`.
    pub censoring_times: Vec<f64>,
    pub tau: TimeHorizon,
}

impl SimulatedSample {
    /// `T*_i ∧ tau`.
    pub fn restricted_event_times(&self, tau: TimeHorizon) -> Vec<f64> {
        self.event_times.iter().map(|t| t.min(tau.value())).collect()
    }

    /// True RMST of every subject.
    pub fn true_rmst(&self, tau: TimeHorizon) -> Vec<f64> {
        (0..self.dataset.len())
            .map(|i| self.scheme.true_rmst(self.dataset.covariates(i), tau.value()))
            .collect()
    }
}

pub fn generate(scheme: Scheme, n: usize, seed: u64) -> Result<SimulatedSample> {
    SchemeConfig::from(scheme).generate(n, seed)
}

pub fn gen_scheme_a(n: usize, variant: Scheme, seed: u64) -> Result<SimulatedSample> {
    match variant {
        Scheme::A1 | Scheme::A2 => generate(variant, n, seed),
        other => Err(Error::invalid(format!("{other} is not a scheme-A variant"))),
    }
}

pub fn gen_scheme_b(n: usize, seed: u64) -> Result<SimulatedSample> {
    generate(Scheme::B, n, seed)
}

pub fn gen_scheme_c(n: usize, seed: u64) -> Result<SimulatedSample> {
    generate(Scheme::C, n, seed)
}

/// The generating censoring distribution of a scheme.
#[derive(Debug, Clone, Copy)]
pub struct TrueCensoring(pub Scheme);

impl CensoringSurvival for TrueCensoring {
    fn survival(&self, t: f64, z: &[f64]) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match self.0 {
            Scheme::A1 => (-SCHEME_A1_CENSORING_RATE * t).exp(),
            Scheme::A2 => SCHEME_A2_CENSORING.survival(t, dot(&SCHEME_A2_CENSORING_BETA, z)),
            Scheme::B | Scheme::C => (-SCHEME_BC_CENSORING_RATE * t).exp(),
        }
    }

    fn survival_left(&self, t: f64, z: &[f64]) -> f64 {
        self.survival(t, z)
    }

    fn descriptor(&self) -> String {
        format!("true-{}", self.0)
    }
}

/// Least-squares fit of latent restricted event times on a fixed feature map.
///
/// With the saturated scheme-A design this is the correctly specified
/// ("oracle") RMST model.
pub struct FeatureLinear {
    dim: usize,
    features: fn(&[f64]) -> Vec<f64>,
    coefficients: Vec<f64>,
}

impl FeatureLinear {
    pub fn fit(
        data: &SurvivalDataset,
        targets: &[f64],
        features: fn(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let p = features(data.covariates(0)).len();
        let design: Vec<f64> = (0..data.len())
            .flat_map(|i| features(data.covariates(i)))
            .collect();
        let coefficients = least_squares(&design, data.len(), p, targets)?;
        Ok(Self {
            dim: data.dim(),
            features,
            coefficients,
        })
    }

    /// Oracle for scheme A: saturated design fitted on `T* ∧ tau`.
    pub fn scheme_a_oracle(sample: &SimulatedSample, tau: TimeHorizon) -> Result<Self> {
        Self::fit(
            &sample.dataset,
            &sample.restricted_event_times(tau),
            |z| scheme_a_design(z).to_vec(),
        )
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

impl Predictor for FeatureLinear {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        Ok(dot(&self.coefficients, &(self.features)(z)))
    }
}

/// The true RMST as a predictor.
pub struct TrueRmst {
    pub scheme: SchemeConfig,
    pub tau: TimeHorizon,
}

impl Predictor for TrueRmst {
    fn dim(&self) -> usize {
        self.scheme.scheme.dim()
    }

    fn predict(&self, z: &[f64]) -> Result<f64> {
        Ok(self.scheme.true_rmst(z, self.tau.value()))
    }
}
