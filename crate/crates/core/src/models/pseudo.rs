//! Jackknife pseudo-observations for the restricted mean.
//!
//! Observation `i` receives `n * theta - (n - 1) * theta_(-i)` where `theta`
//! is the area under the Kaplan–Meier curve on `[0, tau]` and `theta_(-i)`
//! is the same quantity with observation `i` removed.

use crate::data::{SurvivalDataset, TimeHorizon};
use crate::error::{Error, Result};
use crate::survival::{product_limit, risk_table, Target};

/// Above this size the leave-one-out areas are computed incrementally.
pub const INCREMENTAL_THRESHOLD: usize = 500;

pub fn pseudo_observations(train: &SurvivalDataset, tau: TimeHorizon) -> Result<Vec<f64>> {
    if train.len() > INCREMENTAL_THRESHOLD {
        pseudo_observations_incremental(train, tau)
    } else {
        pseudo_observations_refit(train, tau)
    }
}

fn check_size(train: &SurvivalDataset) -> Result<()> {
    if train.len() < 2 {
        return Err(Error::invalid(format!(
            "pseudo-observations need at least 2 observations, got {}",
            train.len()
        )));
    }
    Ok(())
}

/// Leave-one-out areas by refitting the product-limit estimator `n` times.
pub fn pseudo_observations_refit(train: &SurvivalDataset, tau: TimeHorizon) -> Result<Vec<f64>> {
    check_size(train)?;
    let n = train.len();
    let theta = product_limit(train.times(), train.events(), Target::Event)?.integrate(tau.value());
    let mut times = Vec::with_capacity(n - 1);
    let mut events = Vec::with_capacity(n - 1);
    (0..n)
        .map(|i| {
            times.clear();
            events.clear();
            for j in (0..n).filter(|&j| j != i) {
                times.push(train.time(j));
                events.push(train.event(j));
            }
            let loo = product_limit(&times, &events, Target::Event)?.integrate(tau.value());
            Ok(n as f64 * theta - (n - 1) as f64 * loo)
        })
        .collect()
}

/// Leave-one-out areas in `O(n log n)`.
///
/// Removing observation `i` shrinks the risk set at every failure time
/// before `T_i`, touches the factor at `T_i`, and leaves later factors
/// unchanged. With prefix products of the shrunken factors and a backward
/// recursion for the tail areas, each leave-one-out area costs one binary
/// search.
pub fn pseudo_observations_incremental(
    train: &SurvivalDataset,
    tau: TimeHorizon,
) -> Result<Vec<f64>> {
    check_size(train)?;
    let n = train.len();
    let tau = tau.value();
    let rows = risk_table(train.times(), train.events(), Target::Event);
    let k_max = rows.len();
    // grid[0] = 0, grid[k] = min(u_k, tau), grid[K + 1] = tau; widths[k] covers [grid[k], grid[k+1])
    let mut grid = Vec::with_capacity(k_max + 2);
    grid.push(0.0);
    grid.extend(rows.iter().map(|r| r.time.min(tau)));
    grid.push(tau);
    let widths: Vec<f64> = grid.windows(2).map(|w| w[1] - w[0]).collect();

    let hazard: Vec<f64> = rows.iter().map(|r| r.failures / r.at_risk).collect();
    let mut full = 1.0;
    let mut theta = widths[0];
    for k in 1..=k_max {
        full *= 1.0 - hazard[k - 1];
        theta += full * widths[k];
    }

    // survival with one fewer subject at risk (the removed one survives past u_k)
    let mut shrunk = vec![1.0; k_max + 1];
    let mut prefix_area = vec![widths[0]; k_max + 1];
    for k in 1..=k_max {
        let r = rows[k - 1];
        let factor = if r.at_risk > 1.0 {
            1.0 - r.failures / (r.at_risk - 1.0)
        } else {
            f64::NAN
        };
        shrunk[k] = shrunk[k - 1] * factor;
        prefix_area[k] = prefix_area[k - 1] + shrunk[k] * widths[k];
    }

    // tail[k] = sum_{k' >= k} prod_{j = k+1..k'} (1 - h_j) widths[k']
    let mut tail = vec![0.0; k_max + 2];
    for k in (1..=k_max).rev() {
        let next = if k < k_max {
            (1.0 - hazard[k]) * tail[k + 1]
        } else {
            0.0
        };
        tail[k] = widths[k] + next;
    }

    let failure_times: Vec<f64> = rows.iter().map(|r| r.time).collect();
    let out = (0..n)
        .map(|i| {
            let t = train.time(i);
            let before = failure_times.partition_point(|&u| u < t);
            let loo = if before == k_max {
                prefix_area[k_max]
            } else {
                let r = rows[before];
                let factor = if r.time == t {
                    let failures = r.failures - if train.event(i) { 1.0 } else { 0.0 };
                    if failures == 0.0 {
                        1.0
                    } else {
                        1.0 - failures / (r.at_risk - 1.0)
                    }
                } else {
                    1.0 - hazard[before]
                };
                prefix_area[before] + shrunk[before] * factor * tail[before + 1]
            };
            n as f64 * theta - (n - 1) as f64 * loo
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(times: &[f64], events: &[bool]) -> SurvivalDataset {
        SurvivalDataset::from_columns(times.to_vec(), events.to_vec(), vec![], 0).unwrap()
    }

    #[test]
    fn two_point_hand_jackknife() {
        let d = ds(&[1.0, 3.0], &[true, true]);
        let tau = TimeHorizon::new(2.0).unwrap();
        for po in [
            pseudo_observations_refit(&d, tau).unwrap(),
            pseudo_observations_incremental(&d, tau).unwrap(),
        ] {
            assert!((po[0] - 1.0).abs() < 1e-12);
            assert!((po[1] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uncensored_gives_restricted_times() {
        let times = [0.5, 1.7, 2.2, 3.9, 4.4, 6.0];
        let d = ds(&times, &[true; 6]);
        let tau = TimeHorizon::new(4.0).unwrap();
        let po = pseudo_observations(&d, tau).unwrap();
        for (p, t) in po.iter().zip(times) {
            assert!((p - t.min(4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_observations_share_theta() {
        let d = ds(&[2.0; 5], &[false, true, false, true, true]);
        let same = ds(&[2.0; 4], &[true; 4]);
        let tau = TimeHorizon::new(3.0).unwrap();
        let theta = product_limit(same.times(), same.events(), Target::Event)
            .unwrap()
            .integrate(3.0);
        for p in pseudo_observations(&same, tau).unwrap() {
            assert!((p - theta).abs() < 1e-12);
        }
        // mixed statuses at one time are not exchangeable; both paths must still agree
        let a = pseudo_observations_refit(&d, tau).unwrap();
        let b = pseudo_observations_incremental(&d, tau).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn needs_two_observations() {
        let d = ds(&[1.0], &[true]);
        assert!(pseudo_observations(&d, TimeHorizon::new(1.0).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn incremental_matches_refit(
            raw in prop::collection::vec((1u32..60, any::<bool>()), 2..60),
            tau in 0.5f64..7.0,
        ) {
            // coarse grid forces ties
            let times: Vec<f64> = raw.iter().map(|(t, _)| *t as f64 / 10.0).collect();
            let events: Vec<bool> = raw.iter().map(|(_, e)| *e).collect();
            let d = ds(&times, &events);
            let tau = TimeHorizon::new(tau).unwrap();
            let a = pseudo_observations_refit(&d, tau).unwrap();
            let b = pseudo_observations_incremental(&d, tau).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()), "{} vs {}", x, y);
            }
        }
    }
}
