//! Energy efficiency, outage, CDF and coverage statistics.

use crate::config::{EnergyModel, SystemConfig};
use crate::harness::trial::TrialResult;
use crate::precode::PowerAllocation;

/// `R_sum / (eta sum p + S P_BS + K P_u + N P_n)`; the IRS term is dropped
/// when `with_irs` is false.
pub fn energy_efficiency(
    r_sum: f64,
    powers: &PowerAllocation,
    model: &EnergyModel,
    cfg: &SystemConfig,
    with_irs: bool,
) -> f64 {
    if r_sum == 0.0 {
        return 0.0;
    }
    let irs = if with_irs {
        cfg.num_elements as f64 * model.p_element
    } else {
        0.0
    };
    let consumed = model.eta * powers.total()
        + cfg.num_bs as f64 * model.p_bs
        + cfg.num_users as f64 * model.p_user
        + irs;
    r_sum / consumed
}

/// Fraction of samples at or below `r_min`. Each inner vector holds the
/// per-user mean rates of one scene.
pub fn outage_probability(samples: &[Vec<f64>], r_min: f64) -> f64 {
    let total: usize = samples.iter().map(Vec::len).sum();
    if total == 0 {
        return f64::NAN;
    }
    let hit = samples.iter().flatten().filter(|&&r| r <= r_min).count();
    hit as f64 / total as f64
}

/// Per-scene user mean rates over the feasible draws of each scene, in
/// order of first appearance.
pub fn scene_user_means<'a, I>(trials: I) -> Vec<Vec<f64>>
where
    I: IntoIterator<Item = &'a TrialResult>,
{
    let mut keys: Vec<u64> = Vec::new();
    let mut sums: Vec<(Vec<f64>, usize)> = Vec::new();
    for t in trials.into_iter().filter(|t| t.is_feasible()) {
        let idx = match keys.iter().position(|&s| s == t.seed) {
            Some(i) => i,
            None => {
                keys.push(t.seed);
                sums.push((vec![0.0; t.user_rates.len()], 0));
                keys.len() - 1
            }
        };
        let (acc, n) = &mut sums[idx];
        for (a, r) in acc.iter_mut().zip(&t.user_rates) {
            *a += r;
        }
        *n += 1;
    }
    sums.into_iter()
        .map(|(acc, n)| acc.into_iter().map(|a| a / n as f64).collect())
        .collect()
}

/// Empirical CDF points `(value, P[X <= value])`, ascending.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| (x, (i + 1) as f64 / n))
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Linear-interpolated percentile, `q` in [0, 100].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Per-BS served-user count and served-user rate, averaged over feasible
/// trials. The rate average skips trials where the BS is idle.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub mean_served: Vec<f64>,
    pub mean_user_rate: Vec<f64>,
}

pub fn coverage<'a, I>(trials: I, num_bs: usize) -> Coverage
where
    I: IntoIterator<Item = &'a TrialResult>,
{
    let mut served = vec![0.0; num_bs];
    let mut rate = vec![0.0; num_bs];
    let mut busy = vec![0usize; num_bs];
    let mut n = 0usize;
    for t in trials.into_iter().filter(|t| t.is_feasible()) {
        n += 1;
        for s in 0..num_bs {
            served[s] += t.served_counts[s] as f64;
            if t.served_counts[s] > 0 {
                rate[s] += t.bs_mean_rate[s];
                busy[s] += 1;
            }
        }
    }
    Coverage {
        mean_served: served.iter().map(|x| x / n as f64).collect(),
        mean_user_rate: rate
            .iter()
            .zip(&busy)
            .map(|(r, &b)| if b == 0 { f64::NAN } else { r / b as f64 })
            .collect(),
    }
}
