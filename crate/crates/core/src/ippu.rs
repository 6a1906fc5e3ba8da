//! Alternating optimization of IRS phases, BS powers and user association.
//!
//! Each outer iteration runs the IRS step for the assisted BS with the current
//! powers, gates on power feasibility, water-fills every BS over its served
//! users, and re-solves the association by auction on candidate rates.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assoc::{build_benefits, fra_solve, Association};
use crate::channel::{assemble_channel_matrix, ChannelSet, Geometry};
use crate::config::{distance, SystemConfig};
use crate::error::{Error, Result};
use crate::irs_opt::{f1, feasibility_check, optimize_irs_cfg, ReflectionState};
use crate::linalg::CMat;
use crate::power::{allocate_power, floor_power};
use crate::precode::{rate, transmit_power, zf_costs, PowerAllocation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IppuStatus {
    Converged,
    HitTMax,
    Infeasible,
}

impl IppuStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            IppuStatus::Converged => "converged",
            IppuStatus::HitTMax => "hit_t_max",
            IppuStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IppuResult {
    pub phi: ReflectionState,
    pub powers: PowerAllocation,
    pub assoc: Association,
    /// Sum rate at the end of each outer iteration.
    pub rate_trace: Vec<f64>,
    /// Sum rate of the initial point.
    pub initial_rate: f64,
    pub iterations: usize,
    pub status: IppuStatus,
    /// Why the run stopped as infeasible.
    pub reason: Option<String>,
    /// Auction proposals discarded because they lowered the sum rate.
    pub rejected_associations: usize,
}

impl IppuResult {
    /// Infeasible runs carry partial state that must not be reported as a solution.
    pub fn is_usable(&self) -> bool {
        self.status != IppuStatus::Infeasible
    }

    pub fn sum_rate(&self) -> f64 {
        self.rate_trace.last().copied().unwrap_or(self.initial_rate)
    }

    /// Per-user rates `log2(1 + p / sigma2)`.
    pub fn user_rates(&self, sigma2: f64) -> Vec<f64> {
        user_rates(&self.assoc.assignment, &self.powers, sigma2)
    }
}

pub fn user_rates(assignment: &[usize], powers: &PowerAllocation, sigma2: f64) -> Vec<f64> {
    assignment
        .iter()
        .enumerate()
        .map(|(k, &s)| rate(powers.get(s, k).unwrap_or(0.0) / sigma2))
        .collect()
}

/// Users per BS, ascending, for `assignment[k] = s`.
pub fn served_sets(assignment: &[usize], num_bs: usize) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); num_bs];
    for (k, &s) in assignment.iter().enumerate() {
        sets[s].push(k);
    }
    sets
}

/// Closed-form water-filling at every BS with a non-empty served set.
/// `rows(s, served)` returns the channel matrix of BS `s`.
pub fn allocate_all<F>(
    assignment: &[usize],
    num_bs: usize,
    cfg: &SystemConfig,
    rows: F,
) -> Result<(PowerAllocation, f64)>
where
    F: Fn(usize, &[usize]) -> Result<CMat>,
{
    let mut powers = PowerAllocation::new(num_bs);
    let mut total = 0.0;
    for (s, served) in served_sets(assignment, num_bs).iter().enumerate() {
        if served.is_empty() {
            continue;
        }
        let h = rows(s, served)?;
        let sol = allocate_power(&h, cfg.p_max, cfg.sigma2, cfg.r_min)?;
        for (&k, &p) in served.iter().zip(&sol.powers) {
            powers.set(s, k, p);
            total += rate(p / cfg.sigma2);
        }
    }
    Ok((powers, total))
}

fn allocate_with_phi(
    channels: &ChannelSet,
    phi: &ReflectionState,
    assignment: &[usize],
    cfg: &SystemConfig,
) -> Result<(PowerAllocation, f64)> {
    allocate_all(assignment, channels.num_bs(), cfg, |s, served| {
        assemble_channel_matrix(s, served, channels, phi)
    })
}

/// Rate user `k` would get at each BS `s`. Served users keep their current
/// rate; for any other user the BS re-runs its water-filling over its served
/// set plus that user. Pairs that cannot be served (rank loss, rate floor)
/// are NaN.
pub fn candidate_rates(
    channels: &ChannelSet,
    phi: &ReflectionState,
    assignment: &[usize],
    powers: &PowerAllocation,
    cfg: &SystemConfig,
) -> DMatrix<f64> {
    let (s_count, k_count) = (channels.num_bs(), channels.num_users());
    let sets = served_sets(assignment, s_count);
    let mut rates = DMatrix::from_element(s_count, k_count, f64::NAN);
    for s in 0..s_count {
        for k in 0..k_count {
            let value = if assignment[k] == s {
                powers.get(s, k).map(|p| rate(p / cfg.sigma2))
            } else {
                let mut set = sets[s].clone();
                let pos = set.partition_point(|&u| u < k);
                set.insert(pos, k);
                assemble_channel_matrix(s, &set, channels, phi)
                    .and_then(|h| allocate_power(&h, cfg.p_max, cfg.sigma2, cfg.r_min))
                    .ok()
                    .map(|sol| rate(sol.powers[pos] / cfg.sigma2))
            };
            if let Some(r) = value {
                if r >= cfg.r_min {
                    rates[(s, k)] = r;
                }
            }
        }
    }
    rates
}

/// Nearest-BS association, then repaired so every BS serves somebody and
/// every served set admits zero forcing under `phi`.
pub fn initial_association(
    channels: &ChannelSet,
    geom: &Geometry,
    phi: &ReflectionState,
) -> Result<Vec<usize>> {
    let (s_count, k_count) = (channels.num_bs(), channels.num_users());
    if k_count < s_count {
        return Err(Error::AssociationInfeasible("fewer users than BSs".into()));
    }
    let mut assignment: Vec<usize> = (0..k_count).map(|k| geom.nearest_bs(k)).collect();
    let dist = |s: usize, k: usize| distance(geom.bs_positions[s], geom.user_positions[k]);
    for s in 0..s_count {
        if assignment.contains(&s) {
            continue;
        }
        let counts = served_sets(&assignment, s_count);
        let donor = (0..k_count)
            .filter(|&k| counts[assignment[k]].len() >= 2)
            .min_by(|&a, &b| dist(s, a).total_cmp(&dist(s, b)))
            .expect("K >= S leaves a BS with two users");
        assignment[donor] = s;
    }
    // shed users from sets that lose rank, farthest first, to the nearest
    // BS that can take them
    for _ in 0..k_count * s_count {
        let sets = served_sets(&assignment, s_count);
        let bad = (0..s_count).find(|&s| {
            sets[s].len() > 1
                && assemble_channel_matrix(s, &sets[s], channels, phi)
                    .and_then(|h| zf_costs(&h))
                    .is_err()
        });
        let Some(s) = bad else {
            return Ok(assignment);
        };
        let k = *sets[s]
            .iter()
            .max_by(|&&a, &&b| dist(s, a).total_cmp(&dist(s, b)))
            .unwrap();
        let target = (0..s_count)
            .filter(|&t| t != s)
            .filter(|&t| {
                let mut set = sets[t].clone();
                set.push(k);
                set.sort_unstable();
                assemble_channel_matrix(t, &set, channels, phi)
                    .and_then(|h| zf_costs(&h))
                    .is_ok()
            })
            .min_by(|&a, &b| dist(a, k).total_cmp(&dist(b, k)))
            .ok_or_else(|| {
                Error::AssociationInfeasible(format!("no BS can take user {k} with full rank"))
            })?;
        assignment[k] = target;
    }
    Err(Error::AssociationInfeasible("association repair did not settle".into()))
}

/// Equal per-user powers at each BS, scaled so the BS spends exactly `P_max`.
pub fn equal_powers(
    channels: &ChannelSet,
    phi: &ReflectionState,
    assignment: &[usize],
    cfg: &SystemConfig,
) -> Result<PowerAllocation> {
    let mut powers = PowerAllocation::new(channels.num_bs());
    for (s, served) in served_sets(assignment, channels.num_bs()).iter().enumerate() {
        if served.is_empty() {
            continue;
        }
        let h = assemble_channel_matrix(s, served, channels, phi)?;
        let t = cfg.p_max / zf_costs(&h)?.iter().sum::<f64>();
        for &k in served {
            powers.set(s, k, t);
        }
    }
    Ok(powers)
}

fn total_rate(assignment: &[usize], powers: &PowerAllocation, sigma2: f64) -> f64 {
    user_rates(assignment, powers, sigma2).iter().sum()
}

/// Replaces zero powers by a small positive value so the IRS surrogate
/// stays defined.
fn positive_powers(p: &[f64]) -> Vec<f64> {
    let top = p.iter().cloned().fold(0.0, f64::max);
    let tiny = if top > 0.0 { top * 1e-9 } else { 1.0 };
    p.iter().map(|&x| x.max(tiny)).collect()
}

/// Runs the alternating loop from a random phase configuration and the
/// repaired nearest-BS association.
pub fn ippu<R: Rng + ?Sized>(
    channels: &ChannelSet,
    geom: &Geometry,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<IppuResult> {
    let phi0 = ReflectionState::random(cfg.num_elements, cfg.phase_bits, rng);
    let assignment = initial_association(channels, geom, &phi0)?;
    let powers = equal_powers(channels, &phi0, &assignment, cfg)?;
    Ok(ippu_from(channels, cfg, phi0, assignment, powers))
}

/// The loop from an explicit feasible starting point.
pub fn ippu_from(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    phi0: ReflectionState,
    assignment0: Vec<usize>,
    powers0: PowerAllocation,
) -> IppuResult {
    let s_count = channels.num_bs();
    let irs = channels.irs_bs;
    let initial_rate = total_rate(&assignment0, &powers0, cfg.sigma2);
    let mut res = IppuResult {
        phi: phi0,
        powers: powers0,
        assoc: Association::from_assignment(assignment0, s_count),
        rate_trace: Vec::new(),
        initial_rate,
        iterations: 0,
        status: IppuStatus::HitTMax,
        reason: None,
        rejected_associations: 0,
    };
    let mut previous = initial_rate;
    let infeasible = |res: &mut IppuResult, why: String| {
        res.status = IppuStatus::Infeasible;
        res.reason = Some(why);
    };
    for _ in 0..cfg.t_max {
        res.iterations += 1;
        // IRS step for the assisted BS
        let served_i = res.assoc.served(irs);
        if !served_i.is_empty() {
            let h_r = CMat::from_fn(served_i.len(), channels.num_elements(), |r, n| {
                channels.h_r[(served_i[r], n)]
            });
            let p_i: Vec<f64> = served_i
                .iter()
                .map(|&k| res.powers.get(irs, k).unwrap_or(0.0))
                .collect();
            let f1_value = if p_i.iter().any(|&p| p > 0.0) {
                let p_sfp = positive_powers(&p_i);
                match optimize_irs_cfg(&h_r, &channels.g, &p_sfp, &res.phi, cfg) {
                    Ok(out) => {
                        res.phi = out.state;
                        f1(&res.phi, &h_r, &p_i, &channels.g)
                    }
                    Err(e) => Err(e),
                }
            } else {
                f1(&res.phi, &h_r, &p_i, &channels.g)
            };
            match f1_value {
                Ok(v) if feasibility_check(v, cfg.p_max * (1.0 + 1e-9)) => {}
                Ok(v) => {
                    infeasible(&mut res, format!("IRS power {v:.6e} W exceeds P_max"));
                    break;
                }
                Err(e) => {
                    infeasible(&mut res, e.to_string());
                    break;
                }
            }
        }
        // power step
        let (powers, r_now) =
            match allocate_with_phi(channels, &res.phi, &res.assoc.assignment, cfg) {
                Ok(v) => v,
                Err(e) => {
                    infeasible(&mut res, e.to_string());
                    break;
                }
            };
        res.powers = powers;
        let mut r_sum = r_now;
        // association step
        let rates = candidate_rates(channels, &res.phi, &res.assoc.assignment, &res.powers, cfg);
        let proposal = build_benefits(&rates, cfg.r_min, cfg.benefit_scale)
            .and_then(|b| fra_solve(&b, cfg.epsilon));
        match proposal {
            Ok(assoc) => {
                if assoc.assignment != res.assoc.assignment {
                    match allocate_with_phi(channels, &res.phi, &assoc.assignment, cfg) {
                        Ok((p, r)) if r > r_sum => {
                            res.powers = p;
                            res.assoc = assoc;
                            r_sum = r;
                        }
                        _ => res.rejected_associations += 1,
                    }
                } else {
                    res.assoc = assoc;
                }
            }
            Err(e) => {
                infeasible(&mut res, e.to_string());
                break;
            }
        }
        res.rate_trace.push(r_sum);
        let delta = r_sum - previous;
        previous = r_sum;
        if delta * delta <= cfg.xi_tol {
            res.status = IppuStatus::Converged;
            break;
        }
    }
    res
}

/// Independent check of the joint constraints on a finished run: one BS per
/// user, rate floors, per-BS power budgets, phases on the grid, at least one
/// user per BS and ZF-compatible served sets. Returns the violations found.
pub fn check_constraints(
    res: &IppuResult,
    channels: &ChannelSet,
    cfg: &SystemConfig,
) -> Vec<String> {
    let mut bad = Vec::new();
    let s_count = channels.num_bs();
    let a = &res.assoc.assignment;
    if a.len() != channels.num_users() || a.iter().any(|&s| s >= s_count) {
        bad.push("assignment is not a map from users to BSs".into());
        return bad;
    }
    let floor = floor_power(cfg.sigma2, cfg.r_min);
    for (k, &s) in a.iter().enumerate() {
        match res.powers.get(s, k) {
            Some(p) if p >= 0.0 => {
                if cfg.r_min > 0.0 && p < floor * (1.0 - 1e-9) {
                    bad.push(format!("user {k} below the rate floor"));
                }
            }
            _ => bad.push(format!("user {k} has no power at its BS {s}")),
        }
    }
    for (s, m) in res.powers.per_bs.iter().enumerate() {
        if m.keys().any(|&k| a[k] != s) {
            bad.push(format!("BS {s} holds power for a user it does not serve"));
        }
    }
    if res.phi.len() != cfg.num_elements || res.phi.phase_idx.iter().any(|&i| i >= res.phi.levels()) {
        bad.push("phase configuration off the grid".into());
    }
    for (s, served) in served_sets(a, s_count).iter().enumerate() {
        if served.is_empty() {
            bad.push(format!("BS {s} serves no user"));
            continue;
        }
        let h = match assemble_channel_matrix(s, served, channels, &res.phi) {
            Ok(h) => h,
            Err(e) => {
                bad.push(e.to_string());
                continue;
            }
        };
        let p: Vec<f64> = served.iter().map(|&k| res.powers.get(s, k).unwrap_or(0.0)).collect();
        match transmit_power(&h, &p) {
            Ok(t) if t <= cfg.p_max * (1.0 + 1e-6) => {}
            Ok(t) => bad.push(format!("BS {s} spends {t:.6e} W over the budget")),
            Err(e) => bad.push(format!("BS {s}: {e}")),
        }
    }
    bad
}

/// Exhaustive joint search for tiny instances: every phase configuration and
/// every association giving each BS a user, with oracle water-filling.
/// Returns the best sum rate.
pub fn exhaustive_joint(channels: &ChannelSet, cfg: &SystemConfig) -> Result<f64> {
    let (s_count, k_count, n) = (channels.num_bs(), channels.num_users(), channels.num_elements());
    let levels = 1u64 << cfg.phase_bits;
    let too_large = || Error::InvalidArgument("joint search too large".into());
    let configs = levels.checked_pow(n as u32).ok_or_else(too_large)?;
    let assigns = (s_count as u64).checked_pow(k_count as u32).ok_or_else(too_large)?;
    if configs.checked_mul(assigns).is_none_or(|c| c > 1 << 16) {
        return Err(too_large());
    }
    let mut best = f64::NEG_INFINITY;
    for code in 0..configs {
        let mut c = code;
        let idx = (0..n)
            .map(|_| {
                let v = (c % levels) as u32;
                c /= levels;
                v
            })
            .collect();
        let phi = ReflectionState::from_indices(idx, cfg.phase_bits)?;
        for acode in 0..assigns {
            let mut c = acode;
            let assignment: Vec<usize> = (0..k_count)
                .map(|_| {
                    let v = (c % s_count as u64) as usize;
                    c /= s_count as u64;
                    v
                })
                .collect();
            let sets = served_sets(&assignment, s_count);
            if sets.iter().any(|s| s.is_empty()) {
                continue;
            }
            let mut total = 0.0;
            let mut ok = true;
            for (s, served) in sets.iter().enumerate() {
                let sol = assemble_channel_matrix(s, served, channels, &phi).and_then(|h| {
                    crate::power::oracle_allocate(&h, cfg.p_max, cfg.sigma2, cfg.r_min)
                });
                match sol {
                    Ok(sol) => total += sol.sum_rate(cfg.sigma2),
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok && total > best {
                best = total;
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::AssociationInfeasible("no feasible joint configuration".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::gen_channels;
    use crate::config::ConfigFile;
    use crate::power::oracle_allocate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(s: usize, k: usize, m: usize, n: usize, b: u32) -> SystemConfig {
        let mut file = ConfigFile {
            s,
            k,
            m,
            n,
            b,
            ..ConfigFile::default()
        };
        file.bs_positions.truncate(s);
        file.resolve().unwrap()
    }

    fn scene(cfg: &SystemConfig, seed: u64) -> (Geometry, ChannelSet, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geom = Geometry::sample(cfg, &mut rng);
        let ch = gen_channels(&geom, cfg, &mut rng).unwrap();
        (geom, ch, rng)
    }

    #[test]
    fn served_sets_partition() {
        let sets = served_sets(&[1, 0, 1, 2], 4);
        assert_eq!(sets, vec![vec![1], vec![0, 2], vec![3], vec![]]);
    }

    #[test]
    fn single_outer_pass() {
        let mut cfg = small_cfg(3, 6, 8, 8, 2);
        cfg.t_max = 1;
        let (geom, ch, mut rng) = scene(&cfg, 2);
        let res = ippu(&ch, &geom, &cfg, &mut rng).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.rate_trace.len(), 1);
        assert!(res.status != IppuStatus::HitTMax || res.iterations == cfg.t_max);
    }

    #[test]
    fn status_and_constraints() {
        let cfg = small_cfg(3, 8, 8, 16, 2);
        for seed in 0..10 {
            let (geom, ch, mut rng) = scene(&cfg, seed);
            let res = ippu(&ch, &geom, &cfg, &mut rng).unwrap();
            match res.status {
                IppuStatus::Converged => {
                    let t = &res.rate_trace;
                    let prev = if t.len() >= 2 { t[t.len() - 2] } else { res.initial_rate };
                    let d = t[t.len() - 1] - prev;
                    assert!(d * d <= cfg.xi_tol);
                }
                IppuStatus::HitTMax => assert_eq!(res.iterations, cfg.t_max),
                IppuStatus::Infeasible => assert!(res.reason.is_some()),
            }
            if res.is_usable() {
                assert!(check_constraints(&res, &ch, &cfg).is_empty(), "seed {seed}");
                let sum: f64 = res.user_rates(cfg.sigma2).iter().sum();
                assert!((sum - res.sum_rate()).abs() < 1e-9 * (1.0 + sum));
                assert_eq!(res.assoc.served_counts().iter().sum::<usize>(), cfg.num_users);
            }
        }
    }

    #[test]
    fn power_step_beats_equal_split() {
        let cfg = small_cfg(3, 8, 8, 16, 2);
        let (geom, ch, mut rng) = scene(&cfg, 4);
        let phi = ReflectionState::random(cfg.num_elements, cfg.phase_bits, &mut rng);
        let a = initial_association(&ch, &geom, &phi).unwrap();
        let eq = equal_powers(&ch, &phi, &a, &cfg).unwrap();
        let (_, r) = allocate_with_phi(&ch, &phi, &a, &cfg).unwrap();
        assert!(r >= total_rate(&a, &eq, cfg.sigma2) - 1e-9);
    }

    #[test]
    fn initial_association_covers_every_bs() {
        let cfg = small_cfg(3, 5, 8, 8, 1);
        for seed in 0..20 {
            let (geom, ch, mut rng) = scene(&cfg, seed);
            let phi = ReflectionState::random(cfg.num_elements, cfg.phase_bits, &mut rng);
            let a = initial_association(&ch, &geom, &phi).unwrap();
            assert!(served_sets(&a, 3).iter().all(|s| !s.is_empty()));
        }
    }

    #[test]
    fn candidate_rates_keep_served_values() {
        let cfg = small_cfg(3, 6, 8, 8, 2);
        let (geom, ch, mut rng) = scene(&cfg, 7);
        let phi = ReflectionState::random(cfg.num_elements, cfg.phase_bits, &mut rng);
        let a = initial_association(&ch, &geom, &phi).unwrap();
        let (p, _) = allocate_with_phi(&ch, &phi, &a, &cfg).unwrap();
        let rates = candidate_rates(&ch, &phi, &a, &p, &cfg);
        for (k, &s) in a.iter().enumerate() {
            let expect = rate(p.get(s, k).unwrap() / cfg.sigma2);
            assert_eq!(rates[(s, k)], expect);
        }
        assert!(rates.iter().all(|r| r.is_nan() || *r >= 0.0));
    }

    #[test]
    fn tiny_instances_against_joint_search() {
        let cfg = small_cfg(2, 3, 3, 3, 1);
        for seed in 0..8 {
            let (geom, ch, mut rng) = scene(&cfg, 100 + seed);
            let best = exhaustive_joint(&ch, &cfg).unwrap();
            let res = ippu(&ch, &geom, &cfg, &mut rng).unwrap();
            assert!(res.is_usable());
            assert!(res.sum_rate() <= best * (1.0 + 1e-6) + 1e-9, "seed {seed}");
            // with no rate floor the closed form is the optimum for the final point
            let mut oracle = 0.0;
            for (s, served) in served_sets(&res.assoc.assignment, 2).iter().enumerate() {
                let h = assemble_channel_matrix(s, served, &ch, &res.phi).unwrap();
                oracle += oracle_allocate(&h, cfg.p_max, cfg.sigma2, 0.0)
                    .unwrap()
                    .sum_rate(cfg.sigma2);
            }
            assert!((oracle - res.sum_rate()).abs() <= 1e-6 * (1.0 + oracle));
        }
    }

    #[test]
    fn joint_search_rejects_large_instances() {
        let cfg = small_cfg(3, 16, 32, 32, 2);
        let (_, ch, _) = scene(&cfg, 1);
        assert!(exhaustive_joint(&ch, &cfg).is_err());
    }
}
