//! Benchmark schemes: random phases with nearest-BS association, and the
//! IRS-free network with RSSI association. Both spend the full budget with
//! the closed-form water-filling.

use rand::Rng;

use crate::channel::{assemble_channel_matrix, stack_rows, ChannelSet, Geometry};
use crate::config::{distance, SystemConfig};
use crate::error::{Error, Result};
use crate::harness::trial::{Solution, TrialStatus};
use crate::ippu::served_sets;
use crate::irs_opt::ReflectionState;
use crate::linalg::CMat;
use crate::power::allocate_power;
use crate::precode::{zf_costs, PowerAllocation};

/// Largest prefix-greedy subset of `ordered` whose stacked rows keep full
/// rank. Users left out get no power.
pub fn full_rank_subset<F>(ordered: &[usize], rows: F) -> Vec<usize>
where
    F: Fn(&[usize]) -> Result<CMat>,
{
    let mut kept: Vec<usize> = Vec::new();
    for &k in ordered {
        let mut trial = kept.clone();
        trial.push(k);
        trial.sort_unstable();
        if rows(&trial).and_then(|h| zf_costs(&h)).is_ok() {
            kept = trial;
        }
    }
    kept
}

fn water_fill<F, O>(
    assignment: Vec<usize>,
    num_bs: usize,
    cfg: &SystemConfig,
    order: O,
    rows: F,
) -> Solution
where
    F: Fn(usize, &[usize]) -> Result<CMat>,
    O: Fn(usize, &mut Vec<usize>),
{
    let mut powers = PowerAllocation::new(num_bs);
    for (s, served) in served_sets(&assignment, num_bs).iter().enumerate() {
        if served.is_empty() {
            continue;
        }
        let mut ordered = served.clone();
        order(s, &mut ordered);
        let kept = full_rank_subset(&ordered, |set| rows(s, set));
        for &k in served {
            powers.set(s, k, 0.0);
        }
        if kept.is_empty() {
            continue;
        }
        let sol = rows(s, &kept).and_then(|h| allocate_power(&h, cfg.p_max, cfg.sigma2, cfg.r_min));
        match sol {
            Ok(sol) => {
                for (&k, &p) in kept.iter().zip(&sol.powers) {
                    powers.set(s, k, p);
                }
            }
            Err(_) => return Solution::infeasible(assignment.len(), num_bs, 1),
        }
    }
    if cfg.r_min > 0.0 && powers.per_bs.iter().flat_map(|m| m.values()).any(|&p| p == 0.0) {
        return Solution::infeasible(assignment.len(), num_bs, 1);
    }
    Solution {
        assignment,
        powers,
        status: TrialStatus::Done,
        iterations: 1,
    }
}

/// Random grid phases, nearest-BS association, full-power water-filling.
pub fn baseline_rpbf_nbua<R: Rng + ?Sized>(
    channels: &ChannelSet,
    geom: &Geometry,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Solution {
    let phi = ReflectionState::random(cfg.num_elements, cfg.phase_bits, rng);
    let assignment: Vec<usize> = (0..channels.num_users()).map(|k| geom.nearest_bs(k)).collect();
    let dist = |s: usize, k: usize| distance(geom.bs_positions[s], geom.user_positions[k]);
    water_fill(
        assignment,
        channels.num_bs(),
        cfg,
        |s, v| v.sort_by(|&a, &b| dist(s, a).total_cmp(&dist(s, b))),
        |s, set| assemble_channel_matrix(s, set, channels, &phi),
    )
}

/// Strongest-link association over the IRS-free channels, where the
/// assisted BS only reaches users over its blocked NLOS links.
pub fn baseline_no_irs(channels: &ChannelSet, cfg: &SystemConfig) -> Solution {
    let mats = channels.without_irs();
    let rssi = |s: usize, k: usize| mats[s].row(k).norm_squared();
    let assignment: Vec<usize> = (0..channels.num_users())
        .map(|k| {
            (0..mats.len())
                .max_by(|&a, &b| rssi(a, k).total_cmp(&rssi(b, k)).then(b.cmp(&a)))
                .expect("at least one BS")
        })
        .collect();
    water_fill(
        assignment,
        channels.num_bs(),
        cfg,
        |s, v| v.sort_by(|&a, &b| rssi(s, b).total_cmp(&rssi(s, a))),
        |s, set| stack_rows(&mats[s], set),
    )
}

pub fn baseline_pbf_uapc() -> Result<Solution> {
    Err(Error::OutOfScope("the PBF+UAPC benchmark".into()))
}

pub fn baseline_af_relay() -> Result<Solution> {
    Err(Error::OutOfScope("the AF-relay benchmark".into()))
}
