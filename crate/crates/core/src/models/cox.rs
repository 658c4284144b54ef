//! Cox proportional hazards regression fitted by Newton–Raphson on the log
//! partial likelihood (Breslow ties), with the Breslow baseline hazard.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::survival::StepFunction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the max-norm of the score vector.
    pub gradient_tolerance: f64,
    pub max_halvings: usize,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            gradient_tolerance: 1e-8,
            max_halvings: 30,
        }
    }
}

/// Log partial likelihood on a fixed, centered design.
///
/// Rows are kept sorted by decreasing time so risk-set sums accumulate in
/// one pass.
#[derive(Debug, Clone)]
pub struct CoxObjective {
    /// Centered covariates, row-major, `p` per row, in decreasing-time order.
    x: Vec<f64>,
    times: Vec<f64>,
    events: Vec<bool>,
    p: usize,
}

/// Value, score and Hessian of the log partial likelihood.
#[derive(Debug, Clone)]
pub struct CoxEvaluation {
    pub log_likelihood: f64,
    pub gradient: Vec<f64>,
    /// Row-major `p x p`.
    pub hessian: Vec<f64>,
}

impl CoxObjective {
    /// Builds the objective from `columns` of `data`, centering each column by `means`.
    pub fn new(data: &SurvivalDataset, columns: &[usize], means: &[f64]) -> Self {
        let p = columns.len();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.sort_by(|&a, &b| data.time(b).total_cmp(&data.time(a)));
        let mut x = Vec::with_capacity(data.len() * p);
        for &i in &order {
            let z = data.covariates(i);
            x.extend(columns.iter().zip(means).map(|(&c, m)| z[c] - m));
        }
        Self {
            x,
            times: order.iter().map(|&i| data.time(i)).collect(),
            events: order.iter().map(|&i| data.event(i)).collect(),
            p,
        }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn eta(&self, i: usize, beta: &[f64]) -> f64 {
        self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    pub fn log_likelihood(&self, beta: &[f64]) -> f64 {
        let n = self.times.len();
        let mut s0 = 0.0;
        let mut ll = 0.0;
        let mut k = 0;
        while k < n {
            let t = self.times[k];
            let mut j = k;
            while j < n && self.times[j] == t {
                s0 += self.eta(j, beta).exp();
                j += 1;
            }
            let log_s0 = s0.ln();
            for i in k..j {
                if self.events[i] {
                    ll += self.eta(i, beta) - log_s0;
                }
            }
            k = j;
        }
        ll
    }

    pub fn evaluate(&self, beta: &[f64]) -> CoxEvaluation {
        let (n, p) = (self.times.len(), self.p);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p * p];
        let mut ll = 0.0;
        let mut grad = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        let mut k = 0;
        while k < n {
            let t = self.times[k];
            let mut j = k;
            while j < n && self.times[j] == t {
                let x = self.row(j);
                let w = self.eta(j, beta).exp();
                s0 += w;
                for a in 0..p {
                    s1[a] += w * x[a];
                    for b in 0..=a {
                        s2[a * p + b] += w * x[a] * x[b];
                    }
                }
                j += 1;
            }
            let deaths = (k..j).filter(|&i| self.events[i]).count();
            if deaths > 0 {
                let d = deaths as f64;
                let log_s0 = s0.ln();
                for i in k..j {
                    if self.events[i] {
                        ll += self.eta(i, beta) - log_s0;
                        for (g, xa) in grad.iter_mut().zip(self.row(i)) {
                            *g += xa;
                        }
                    }
                }
                for a in 0..p {
                    let ma = s1[a] / s0;
                    grad[a] -= d * ma;
                    for b in 0..=a {
                        let v = s2[a * p + b] / s0 - ma * s1[b] / s0;
                        hess[a * p + b] -= d * v;
                    }
                }
            }
            k = j;
        }
        for a in 0..p {
            for b in 0..a {
                hess[b * p + a] = hess[a * p + b];
            }
        }
        CoxEvaluation {
            log_likelihood: ll,
            gradient: grad,
            hessian: hess,
        }
    }
}

/// Fitted Cox model restricted to a subset of covariate columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxFit {
    columns: Vec<usize>,
    means: Vec<f64>,
    beta: Vec<f64>,
    /// Breslow cumulative baseline hazard at the centered covariates.
    baseline: StepFunction,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub log_likelihood: f64,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl CoxFit {
    pub fn fit(data: &SurvivalDataset, columns: &[usize], options: &CoxOptions) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        if let Some(&c) = columns.iter().find(|&&c| c >= data.dim()) {
            return Err(Error::invalid(format!("covariate column {c} out of range")));
        }
        let p = columns.len();
        let n = data.len() as f64;
        let means: Vec<f64> = columns
            .iter()
            .map(|&c| data.iter().map(|(_, _, z)| z[c]).sum::<f64>() / n)
            .collect();
        let objective = CoxObjective::new(data, columns, &means);
        let mut beta = vec![0.0; p];
        let mut eval = objective.evaluate(&beta);
        let mut iterations = 0;
        while max_norm(&eval.gradient) >= options.gradient_tolerance
            && iterations < options.max_iterations
        {
            iterations += 1;
            let info = DMatrix::from_row_slice(p, p, &eval.hessian).map(|v| -v);
            let chol = info.cholesky().ok_or(Error::SingularDesign)?;
            let step = chol.solve(&DVector::from_column_slice(&eval.gradient));
            let mut scale = 1.0;
            let mut accepted = None;
            // differences below this are rounding noise in the log-likelihood
            let slack = 1e-12 * (1.0 + eval.log_likelihood.abs());
            for _ in 0..=options.max_halvings {
                let candidate: Vec<f64> =
                    beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
                let ll = objective.log_likelihood(&candidate);
                if ll.is_finite() && ll >= eval.log_likelihood - slack {
                    accepted = Some(candidate);
                    break;
                }
                scale *= 0.5;
            }
            // no ascent left at working precision
            let Some(next) = accepted.filter(|c| *c != beta) else {
                break;
            };
            beta = next;
            eval = objective.evaluate(&beta);
        }
        let gradient_norm = max_norm(&eval.gradient);
        if gradient_norm >= options.gradient_tolerance {
            return Err(Error::NoConvergence {
                iterations,
                gradient_norm,
            });
        }
        let baseline = breslow(data, columns, &means, &beta)?;
        Ok(Self {
            columns: columns.to_vec(),
            means,
            beta,
            baseline,
            iterations,
            gradient_norm,
            log_likelihood: eval.log_likelihood,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn baseline_cumulative_hazard(&self) -> &StepFunction {
        &self.baseline
    }

    /// Centered linear predictor `beta . (z - mean)`.
    pub fn linear_predictor(&self, z: &[f64]) -> f64 {
        self.columns
            .iter()
            .zip(&self.means)
            .zip(&self.beta)
            .map(|((&c, m), b)| b * (z[c] - m))
            .sum()
    }

    pub fn survival(&self, t: f64, z: &[f64]) -> f64 {
        (-self.baseline.eval(t) * self.linear_predictor(z).exp()).exp()
    }

    pub fn survival_left(&self, t: f64, z: &[f64]) -> f64 {
        (-self.baseline.eval_left(t) * self.linear_predictor(z).exp()).exp()
    }

    /// Integral of `S(t | z)` over `[0, tau]`.
    pub fn restricted_mean(&self, z: &[f64], tau: f64) -> f64 {
        let risk = self.linear_predictor(z).exp();
        let mut area = 0.0;
        let mut prev = 0.0;
        let mut level = 1.0;
        for (&t, &h) in self
            .baseline
            .jump_times()
            .iter()
            .zip(self.baseline.jump_values())
        {
            if t >= tau {
                break;
            }
            area += level * (t - prev);
            prev = t;
            level = (-h * risk).exp();
        }
        area + level * (tau - prev)
    }
}

fn breslow(
    data: &SurvivalDataset,
    columns: &[usize],
    means: &[f64],
    beta: &[f64],
) -> Result<StepFunction> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.time(b).total_cmp(&data.time(a)));
    let risk: Vec<f64> = order
        .iter()
        .map(|&i| {
            let z = data.covariates(i);
            columns
                .iter()
                .zip(means)
                .zip(beta)
                .map(|((&c, m), b)| b * (z[c] - m))
                .sum::<f64>()
                .exp()
        })
        .collect();
    // increments collected from the latest time backwards
    let mut jumps = Vec::new();
    let mut s0 = 0.0;
    let mut k = 0;
    while k < order.len() {
        let t = data.time(order[k]);
        let mut j = k;
        let mut deaths = 0.0;
        while j < order.len() && data.time(order[j]) == t {
            s0 += risk[j];
            if data.event(order[j]) {
                deaths += 1.0;
            }
            j += 1;
        }
        if deaths > 0.0 {
            jumps.push((t, deaths / s0));
        }
        k = j;
    }
    jumps.reverse();
    let mut cum = 0.0;
    let mut times = Vec::with_capacity(jumps.len());
    let mut values = Vec::with_capacity(jumps.len());
    for (t, dh) in jumps {
        cum += dh;
        times.push(t);
        values.push(cum);
    }
    StepFunction::new(times, values, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_data(n: usize, p: usize, seed: u64) -> SurvivalDataset {
        let mut r = rng::stream(seed, 0);
        let mut times = Vec::new();
        let mut events = Vec::new();
        let mut z = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
            let lp: f64 = row.iter().enumerate().map(|(j, v)| (j as f64 + 1.0) * 0.5 * v).sum();
            let t = -rng::uniform_open(&mut r).ln() * (-lp).exp();
            let c = -rng::uniform_open(&mut r).ln() * 2.0;
            times.push(t.min(c));
            events.push(t <= c);
            z.extend(row);
        }
        SurvivalDataset::from_columns(times, events, z, p).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5u64 {
            let data = random_data(40, 3, seed);
            let means = vec![0.0; 3];
            let obj = CoxObjective::new(&data, &[0, 1, 2], &means);
            let mut r = rng::stream(seed, 99);
            let beta: Vec<f64> = (0..3).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
            let eval = obj.evaluate(&beta);
            let h = 1e-6;
            for a in 0..3 {
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[a] += h;
                dn[a] -= h;
                let fd = (obj.log_likelihood(&up) - obj.log_likelihood(&dn)) / (2.0 * h);
                let rel = (fd - eval.gradient[a]).abs() / eval.gradient[a].abs().max(1e-3);
                assert!(rel < 1e-4, "seed {seed} coord {a}: fd {fd} vs {}", eval.gradient[a]);
                // Hessian column by differencing the score
                let gu = obj.evaluate(&up).gradient;
                let gd = obj.evaluate(&dn).gradient;
                for b in 0..3 {
                    let fd2 = (gu[b] - gd[b]) / (2.0 * h);
                    let an = eval.hessian[b * 3 + a];
                    assert!((fd2 - an).abs() / an.abs().max(1e-3) < 1e-4);
                }
            }
        }
    }

    #[test]
    fn likelihood_increases_across_iterations() {
        let data = random_data(200, 3, 11);
        let means = vec![0.0; 3];
        let obj = CoxObjective::new(&data, &[0, 1, 2], &means);
        let fit = CoxFit::fit(&data, &[0, 1, 2], &CoxOptions::default()).unwrap();
        // replay Newton manually from zero and track the likelihood
        let mut beta = vec![0.0; 3];
        let mut last = obj.log_likelihood(&beta);
        for _ in 0..fit.iterations {
            let e = obj.evaluate(&beta);
            let info = DMatrix::from_row_slice(3, 3, &e.hessian).map(|v| -v);
            let step = info.cholesky().unwrap().solve(&DVector::from_column_slice(&e.gradient));
            let mut s = 1.0;
            loop {
                let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, d)| b + s * d).collect();
                let ll = obj.log_likelihood(&cand);
                if ll >= last {
                    beta = cand;
                    assert!(ll >= last);
                    last = ll;
                    break;
                }
                s *= 0.5;
            }
        }
        assert!(fit.gradient_norm < 1e-8);
    }

    #[test]
    fn baseline_is_nondecreasing_from_zero() {
        let data = random_data(100, 2, 5);
        let fit = CoxFit::fit(&data, &[0, 1], &CoxOptions::default()).unwrap();
        let b = fit.baseline_cumulative_hazard();
        assert_eq!(b.eval(0.0), 0.0);
        assert!(b.jump_values().windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn constant_column_is_singular() {
        let mut data = random_data(30, 2, 3);
        let rows: Vec<f64> = (0..30).flat_map(|i| [data.covariates(i)[0], 1.0]).collect();
        data = SurvivalDataset::from_columns(data.times().to_vec(), data.events().to_vec(), rows, 2)
            .unwrap();
        assert!(matches!(
            CoxFit::fit(&data, &[0, 1], &CoxOptions::default()),
            Err(Error::SingularDesign)
        ));
    }

    #[test]
    fn zero_coefficients_reduce_to_baseline() {
        let data = random_data(60, 1, 8);
        let fit = CoxFit::fit(&data, &[], &CoxOptions::default()).unwrap();
        let tau = 1.0;
        let a = fit.restricted_mean(&[0.3], tau);
        let b = fit.restricted_mean(&[-0.9], tau);
        assert_eq!(a, b);
        let surv = fit.baseline_cumulative_hazard().map(|h| (-h).exp());
        assert!((surv.integrate(tau) - a).abs() < 1e-12);
    }
}
