//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}

/// Large-sample standard error of the median, `sqrt(pi / 2) sd / sqrt(n)`.
pub fn median_se(v: &[f64]) -> f64 {
    (std::f64::consts::PI / 2.0).sqrt() * sd(v) / (v.len() as f64).sqrt()
}

/// Kolmogorov–Smirnov p-value of a sample against Uniform[0, 1], using the
/// asymptotic Kolmogorov distribution with Stephens' small-sample correction.
pub fn ks_uniform_p_value(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    let x = d * (n.sqrt() + 0.12 + 0.11 / n.sqrt());
    let tail: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            2.0 * sign * (-2.0 * k * k * x * x).exp()
        })
        .sum();
    tail.clamp(0.0, 1.0)
}

/// Sign-test estimate and variance for uncensored data with every time
/// inside the horizon, by direct double sums.
pub fn brute_sign_test(times: &[f64], phi: &[bool]) -> (f64, f64) {
    let n = times.len() as f64;
    let p: Vec<f64> = phi.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let p_hat = mean(&p);
    let mut sum = 0.0;
    for i in 0..times.len() {
        let at_risk = times.iter().filter(|&&t| t >= times[i]).count() as f64 / n;
        let inner: f64 = (0..times.len())
            .filter(|&j| times[i] <= times[j])
            .map(|j| p[j])
            .sum::<f64>()
            / n;
        sum += (p[i] - inner / at_risk).powi(2);
    }
    (p_hat, sum / n)
}
