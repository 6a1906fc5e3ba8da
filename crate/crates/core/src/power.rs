//! Per-BS power allocation under zero forcing.
//!
//! With `W = H^+` the SINR of user k is `p_k / sigma2` and the BS spends
//! `sum_k c_k p_k` Watts, `c_k = ||column k of H^+||^2`. The closed form fills
//! water over the effective gains `g_k = 1 / c_k` on top of the QoS floor
//! `sigma2 (2^R_min - 1)`; the oracle solves the same problem by bisection on
//! the water level with the exact trace constraint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, CMat};
use crate::precode::{rate, transmit_power, zf_costs};

/// Channel gains of one BS, descending, with the count above the rank cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenProfile {
    pub lambdas: Vec<f64>,
    pub u: usize,
}

impl EigenProfile {
    /// Builds a profile from arbitrary nonnegative gains.
    pub fn from_gains(mut gains: Vec<f64>) -> Self {
        gains.sort_by(|a, b| b.total_cmp(a));
        let top = gains.first().copied().unwrap_or(0.0);
        let u = gains.iter().filter(|&&l| l > 1e-10 * top && l > 0.0).count();
        EigenProfile { lambdas: gains, u }
    }

    fn active(&self) -> &[f64] {
        &self.lambdas[..self.u]
    }
}

/// Eigenvalues of `H H^H`.
pub fn eig_profile(h: &CMat) -> EigenProfile {
    let gram = h * h.adjoint();
    let vals = hermitian_eigenvalues(&gram)
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    EigenProfile::from_gains(vals)
}

/// Per-user effective gains `1 / ||column k of H^+||^2`, in row order.
pub fn zf_gains(h: &CMat) -> Result<Vec<f64>> {
    Ok(zf_costs(h)?.into_iter().map(|c| 1.0 / c).collect())
}

/// QoS floor power `sigma2 (2^r_min - 1)`.
pub fn floor_power(sigma2: f64, r_min: f64) -> f64 {
    sigma2 * (2f64.powf(r_min) - 1.0)
}

/// `(1/u) (P_max - sigma2 (2^R_min - 2) sum_k 1/lambda_k)` over the `u`
/// active gains.
pub fn water_level(profile: &EigenProfile, p_max: f64, sigma2: f64, r_min: f64) -> Result<f64> {
    if profile.u == 0 {
        return Err(Error::DegenerateChannel);
    }
    let inv_sum: f64 = profile.active().iter().map(|l| 1.0 / l).sum();
    Ok((p_max - sigma2 * (2f64.powf(r_min) - 2.0) * inv_sum) / profile.u as f64)
}

/// Powers in the row order of `H`, with the water level of the active users.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    pub powers: Vec<f64>,
    pub water_level: f64,
    /// Oracle only: relative violation of complementary slackness.
    pub kkt_residual: f64,
}

impl PowerSolution {
    pub fn sum_rate(&self, sigma2: f64) -> f64 {
        self.powers.iter().map(|p| rate(p / sigma2)).sum()
    }
}

fn check_inputs(h: &CMat, p_max: f64, sigma2: f64, r_min: f64) -> Result<()> {
    if h.nrows() == 0 {
        return Err(Error::InvalidArgument("no served users".into()));
    }
    if !(p_max > 0.0 && sigma2 > 0.0 && r_min >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "P_max = {p_max}, sigma2 = {sigma2}, R_min = {r_min}"
        )));
    }
    Ok(())
}

fn floor_check(costs: &[f64], floor: f64, p_max: f64) -> Result<()> {
    let required = floor * costs.iter().sum::<f64>();
    if required > p_max {
        return Err(Error::QosInfeasible {
            required,
            budget: p_max,
        });
    }
    Ok(())
}

/// Closed-form allocation `p_k = max(0, w g_k - sigma2) + sigma2 (2^R_min - 1)`.
/// Users whose water term would go negative sit at the floor and the level is
/// recomputed over the rest, so the budget is spent exactly.
pub fn allocate_power(h: &CMat, p_max: f64, sigma2: f64, r_min: f64) -> Result<PowerSolution> {
    check_inputs(h, p_max, sigma2, r_min)?;
    let costs = zf_costs(h)?;
    let floor = floor_power(sigma2, r_min);
    floor_check(&costs, floor, p_max)?;
    let gains: Vec<f64> = costs.iter().map(|c| 1.0 / c).collect();
    let k = gains.len();
    let mut active = vec![true; k];
    loop {
        let parked: f64 = (0..k).filter(|&i| !active[i]).map(|i| floor * costs[i]).sum();
        let act: Vec<f64> = (0..k).filter(|&i| active[i]).map(|i| gains[i]).collect();
        let profile = EigenProfile {
            u: act.len(),
            lambdas: act,
        };
        let w = water_level(&profile, p_max - parked, sigma2, r_min)?;
        let mut dropped = false;
        for i in 0..k {
            if active[i] && w * gains[i] - sigma2 < 0.0 {
                active[i] = false;
                dropped = true;
            }
        }
        if !dropped || active.iter().all(|a| !a) {
            let powers = (0..k)
                .map(|i| {
                    if active[i] {
                        (w * gains[i] - sigma2).max(0.0) + floor
                    } else {
                        floor
                    }
                })
                .collect();
            return Ok(PowerSolution {
                powers,
                water_level: w,
                kkt_residual: 0.0,
            });
        }
    }
}

/// Reference solution by bisection on the level `w` with
/// `p_k = max(sigma2 (2^R_min - 1), w g_k - sigma2)` and the budget evaluated
/// as `tr(H^+ P H^{+H})`.
pub fn oracle_allocate(h: &CMat, p_max: f64, sigma2: f64, r_min: f64) -> Result<PowerSolution> {
    check_inputs(h, p_max, sigma2, r_min)?;
    let costs = zf_costs(h)?;
    let floor = floor_power(sigma2, r_min);
    floor_check(&costs, floor, p_max)?;
    let powers_at = |w: f64| -> Vec<f64> {
        costs.iter().map(|c| floor.max(w / c - sigma2)).collect()
    };
    let spend = |w: f64| transmit_power(h, &powers_at(w));
    let mut lo = 0.0;
    let mut hi = costs.iter().cloned().fold(0.0, f64::max) * (p_max + sigma2) + 1e-300;
    while spend(hi)? <= p_max {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if spend(mid)? <= p_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let powers = powers_at(lo);
    let used = transmit_power(h, &powers)?;
    let all_floored = powers.iter().all(|&p| p <= floor);
    let kkt_residual = if all_floored {
        0.0
    } else {
        (p_max - used).abs() / p_max
    };
    Ok(PowerSolution {
        powers,
        water_level: lo,
        kkt_residual,
    })
}
