//! Oracle and property checks of the optimizers on random instances.
//!
//! Each check draws its instances from a seeded generator and returns the
//! verdict together with the measured statistics, so the same code backs the
//! `validate` command and the acceptance suite.

use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::assoc::{brute_force_assignment, check_epsilon_cs, fra_solve, BenefitMatrix};
use crate::error::Error;
use crate::harness::metrics::percentile;
use crate::irs_opt::{
    build_sfp, exhaustive_min_f1, f1, majorizer, optimize_irs, raw_sfp_trace, ReflectionState,
};
use crate::linalg::{CMat, C64};
use crate::power::{allocate_power, floor_power, oracle_allocate};
use crate::precode::{sinr, transmit_power, zf_precoder};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

/// Instance counts of every check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub identity: usize,
    pub majorizer: usize,
    pub sfp_runs: usize,
    pub exhaustive: usize,
    pub auction: usize,
    pub water_filling: usize,
    pub zero_forcing: usize,
}

impl Budget {
    pub const FULL: Budget = Budget {
        identity: 200,
        majorizer: 200,
        sfp_runs: 100,
        exhaustive: 50,
        auction: 500,
        water_filling: 200,
        zero_forcing: 200,
    };
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(s * re, s * im)
    })
}

fn powers(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(0.1..2.0)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// `|f1 - y^H B y| / f1 < 1e-8` on random `N <= 8, K <= 4, M <= 8` instances.
pub fn check_identity(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errs = Vec::new();
    let mut exact_shape = (0usize, 0usize);
    for _ in 0..instances {
        let n = rng.random_range(1..=8);
        let k = rng.random_range(1..=n.min(4));
        let m = rng.random_range(k..=8);
        let h_r = gaussian(k, n, &mut rng);
        let g = gaussian(n, m, &mut rng);
        let p = powers(k, &mut rng);
        let bits = rng.random_range(1..=3);
        let phi = ReflectionState::random(n, bits, &mut rng);
        let e = match (f1(&phi, &h_r, &p, &g), build_sfp(&h_r, &p, &g)) {
            (Ok(v), Ok(sfp)) => rel(v, sfp.quad(&phi)),
            _ => f64::INFINITY,
        };
        if k == n {
            exact_shape.0 += 1;
            if e < 1e-8 {
                exact_shape.1 += 1;
            }
        }
        errs.push(e);
    }
    let ok = errs.iter().filter(|&&e| e < 1e-8).count();
    Check {
        id: 1,
        name: "f1 equals the quadratic form",
        passed: ok == errs.len(),
        detail: format!(
            "{ok}/{} within 1e-8; rel error median {:.3e}, max {:.3e}; K = N instances {}/{} within 1e-8",
            errs.len(),
            percentile(&errs, 50.0),
            errs.iter().cloned().fold(0.0, f64::max),
            exact_shape.1,
            exact_shape.0
        ),
    }
}

/// `f2(y | y_t) >= y^H B y` and equality at `y = y_t`.
pub fn check_majorizer(pairs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_gap = f64::INFINITY;
    let mut worst_touch: f64 = 0.0;
    for _ in 0..pairs {
        let n = rng.random_range(1..=6);
        let k = rng.random_range(1..=n.min(3));
        let m = rng.random_range(k..=6);
        let h_r = gaussian(k, n, &mut rng);
        let g = gaussian(n, m, &mut rng);
        let p = powers(k, &mut rng);
        let Ok(sfp) = build_sfp(&h_r, &p, &g) else {
            worst_gap = f64::NEG_INFINITY;
            continue;
        };
        let (y, y_t) = if rng.random::<bool>() {
            let bits = rng.random_range(1..=3);
            (
                ReflectionState::random(n, bits, &mut rng).y(),
                ReflectionState::random(n, bits, &mut rng).y(),
            )
        } else {
            let y = gaussian(n * n, 1, &mut rng).column(0).into_owned();
            let y_t = gaussian(n * n, 1, &mut rng).column(0).into_owned();
            (y, y_t)
        };
        let q = sfp.quad_vec(&y);
        let scale = q.abs().max(1.0);
        worst_gap = worst_gap.min((majorizer(&y, &y_t, &sfp) - q) / scale);
        let qt = sfp.quad_vec(&y_t);
        worst_touch = worst_touch.max((majorizer(&y_t, &y_t, &sfp) - qt).abs() / qt.abs().max(1.0));
    }
    Check {
        id: 2,
        name: "majorizer bounds and touches the quadratic",
        passed: worst_gap >= -1e-9 && worst_touch <= 1e-9,
        detail: format!(
            "{pairs} pairs; min (f2 - q)/max(1,|q|) = {worst_gap:.3e}; max touch error {worst_touch:.3e}"
        ),
    }
}

fn irs_instance(n: usize, k: usize, m: usize, rng: &mut ChaCha8Rng) -> (CMat, CMat, Vec<f64>) {
    let h_r = gaussian(k, n, rng);
    let g = gaussian(n, m, rng);
    let p = powers(k, rng);
    (h_r, g, p)
}

/// Guarded SFP traces never rise; raw SFP rises are counted for reference.
pub fn check_sfp_monotone(runs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (16, 8);
    let mut bad = 0;
    let mut raw_bad = 0;
    let mut worst: f64 = 0.0;
    for r in 0..runs {
        let bits = 1 + (r % 3) as u32;
        let k = rng.random_range(2..=4);
        let (h_r, g, p) = irs_instance(n, k, m, &mut rng);
        let init = ReflectionState::random(n, bits, &mut rng);
        match optimize_irs(&h_r, &g, &p, &init, 50, 1e-4, true) {
            Ok(out) => {
                let rise = out
                    .f1_trace
                    .windows(2)
                    .map(|w| (w[1] - w[0]) / w[0])
                    .fold(f64::NEG_INFINITY, f64::max);
                worst = worst.max(rise);
                if rise > 1e-9 {
                    bad += 1;
                }
            }
            Err(_) => bad += 1,
        }
        if let Ok(trace) = raw_sfp_trace(&h_r, &g, &p, &init, 50, 1e-4) {
            if trace.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-9)) {
                raw_bad += 1;
            }
        }
    }
    Check {
        id: 3,
        name: "IRS descent is monotone",
        passed: bad == 0,
        detail: format!(
            "{bad}/{runs} runs with a rise > 1e-9 (largest relative step {worst:.3e}); unguarded SFP rose in {raw_bad}/{runs}"
        ),
    }
}

/// Final `f1` against the exhaustive grid minimum at `N <= 4, b = 1, K = M = 2`.
pub fn check_exhaustive_irs(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaps = Vec::new();
    let mut sfp_only = 0;
    for i in 0..instances {
        let n = 2 + i % 3;
        let (h_r, g, p) = irs_instance(n, 2, 2, &mut rng);
        let init = ReflectionState::random(n, 1, &mut rng);
        let best = exhaustive_min_f1(&h_r, &g, &p, 1).map(|(_, v)| v);
        let got = optimize_irs(&h_r, &g, &p, &init, 50, 1e-4, true).map(|o| o.final_f1());
        let plain = optimize_irs(&h_r, &g, &p, &init, 50, 1e-4, false).map(|o| o.final_f1());
        match (best, got) {
            (Ok(b), Ok(v)) => {
                gaps.push((v - b) / b);
                if plain.is_ok_and(|x| (x - b) / b <= 1e-9) {
                    sfp_only += 1;
                }
            }
            _ => gaps.push(f64::INFINITY),
        }
    }
    let hits = gaps.iter().filter(|&&g| g <= 1e-9).count();
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    let share = hits as f64 / gaps.len().max(1) as f64;
    Check {
        id: 4,
        name: "IRS optimum on small grids",
        passed: share >= 0.8 && max_gap <= 0.25,
        detail: format!(
            "optimum reached in {hits}/{}; gap median {:.3e}, p90 {:.3e}, max {max_gap:.3e}; SFP without refinement {sfp_only}/{}",
            gaps.len(),
            percentile(&gaps, 50.0),
            percentile(&gaps, 90.0),
            gaps.len()
        ),
    }
}

/// Auction totals against brute force, with the slackness certificate.
pub fn check_auction(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 0.2;
    let (mut exact, mut cs_ok, mut bids) = (0, 0, 0usize);
    for _ in 0..instances {
        let s = rng.random_range(2..=4);
        let k = rng.random_range(s..=10);
        let rows: Vec<Vec<i64>> = (0..s)
            .map(|_| (0..k).map(|_| rng.random_range(1..=100)).collect())
            .collect();
        let b = BenefitMatrix::dense(&rows).expect("dense benefits");
        let (Ok(a), Ok(o)) = (fra_solve(&b, eps), brute_force_assignment(&b)) else {
            continue;
        };
        if b.total(&a.assignment) == b.total(&o.assignment) {
            exact += 1;
        }
        if check_epsilon_cs(&a, &b, eps) {
            cs_ok += 1;
        }
        bids += a.bids;
    }
    Check {
        id: 5,
        name: "auction matches brute force",
        passed: exact == instances && cs_ok == instances,
        detail: format!(
            "optimal {exact}/{instances}, eps-CS {cs_ok}/{instances}, mean bids {:.1}",
            bids as f64 / instances.max(1) as f64
        ),
    }
}

/// Rows scaled from an orthonormal set.
fn orthogonal_rows(k: usize, m: usize, rng: &mut ChaCha8Rng) -> CMat {
    let q = gaussian(m, k, rng).qr().q();
    let mut h = q.adjoint();
    for mut row in h.row_iter_mut() {
        row *= C64::new(rng.random_range(0.2..3.0), 0.0);
    }
    h
}

/// Closed-form allocation: floors and budget, oracle agreement on orthogonal
/// rows, objective gap elsewhere. Even instances run without a rate floor,
/// odd ones with `R_min` in (0.1, 2].
pub fn check_water_filling(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_max = 1.0;
    let mut violations = 0;
    let mut qos_rejected = 0;
    let mut orth = [(0usize, 0usize); 2];
    let mut gaps = Vec::new();
    let mut worst_orth: f64 = 0.0;
    for i in 0..instances {
        let k = rng.random_range(1..=6);
        let m = rng.random_range(k..=8);
        let orthogonal = i % 4 < 2;
        let h = if orthogonal {
            orthogonal_rows(k, m, &mut rng)
        } else {
            gaussian(k, m, &mut rng)
        };
        let sigma2 = 10f64.powf(-rng.random_range(1.0..3.0));
        let r_min = if i % 2 == 0 { 0.0 } else { rng.random_range(0.1..=2.0) };
        let (closed, oracle) = match (
            allocate_power(&h, p_max, sigma2, r_min),
            oracle_allocate(&h, p_max, sigma2, r_min),
        ) {
            (Ok(c), Ok(o)) => (c, o),
            (Err(Error::QosInfeasible { .. }), Err(Error::QosInfeasible { .. })) => {
                qos_rejected += 1;
                continue;
            }
            _ => {
                violations += 1;
                continue;
            }
        };
        let floor = floor_power(sigma2, r_min);
        let spend = transmit_power(&h, &closed.powers).unwrap_or(f64::INFINITY);
        if closed.powers.iter().any(|&p| p < floor) || spend > p_max * (1.0 + 1e-6) {
            violations += 1;
        }
        let (rc, ro) = (closed.sum_rate(sigma2), oracle.sum_rate(sigma2));
        let gap = (ro - rc) / ro.max(f64::MIN_POSITIVE);
        if orthogonal {
            let slot = usize::from(r_min > 0.0);
            orth[slot].0 += 1;
            if gap.abs() <= 1e-6 {
                orth[slot].1 += 1;
            }
            worst_orth = worst_orth.max(gap.abs());
        } else {
            gaps.push(gap);
        }
    }
    let orth_ok = orth[0].0 == orth[0].1 && orth[1].0 == orth[1].1;
    let median_gap = percentile(&gaps, 50.0);
    Check {
        id: 6,
        name: "water-filling feasibility and optimality",
        passed: violations == 0 && orth_ok && median_gap <= 0.05,
        detail: format!(
            "constraint violations {violations}, QoS-infeasible skipped {qos_rejected}; orthogonal rows match oracle: R_min = 0 {}/{}, R_min > 0 {}/{} (worst gap {worst_orth:.3e}); general gap median {median_gap:.3e}, max {:.3e}",
            orth[0].1,
            orth[0].0,
            orth[1].1,
            orth[1].0,
            gaps.iter().cloned().fold(0.0, f64::max)
        ),
    }
}

/// `||H W - I||_F < 1e-8` and `SINR = p / sigma2` under zero forcing.
pub fn check_zero_forcing(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_res: f64 = 0.0;
    let mut worst_sinr: f64 = 0.0;
    let mut failed = 0;
    for _ in 0..instances {
        let k = rng.random_range(1..=8);
        let m = rng.random_range(k..=10);
        let h = gaussian(k, m, &mut rng);
        let Ok(pre) = zf_precoder(&h) else {
            failed += 1;
            continue;
        };
        worst_res = worst_res.max((&h * &pre.w - CMat::identity(k, k)).norm());
        let p = powers(k, &mut rng);
        let sigma2 = 10f64.powf(-rng.random_range(0.0..4.0));
        for j in 0..k {
            worst_sinr = worst_sinr.max(rel(sinr(&h, &pre.w, &p, j, sigma2), p[j] / sigma2));
        }
    }
    Check {
        id: 7,
        name: "zero forcing",
        passed: failed == 0 && worst_res < 1e-8 && worst_sinr <= 1e-6,
        detail: format!(
            "{instances} instances, precoder failures {failed}; max residual {worst_res:.3e}, max SINR rel error {worst_sinr:.3e}"
        ),
    }
}

/// All oracle checks at the given instance counts.
pub fn run_all(budget: Budget, seed: u64) -> Vec<Check> {
    vec![
        check_identity(budget.identity, seed),
        check_majorizer(budget.majorizer, seed.wrapping_add(1)),
        check_sfp_monotone(budget.sfp_runs, seed.wrapping_add(2)),
        check_exhaustive_irs(budget.exhaustive, seed.wrapping_add(3)),
        check_auction(budget.auction, seed.wrapping_add(4)),
        check_water_filling(budget.water_filling, seed.wrapping_add(5)),
        check_zero_forcing(budget.zero_forcing, seed.wrapping_add(6)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_budget_runs() {
        let b = Budget {
            identity: 5,
            majorizer: 5,
            sfp_runs: 2,
            exhaustive: 3,
            auction: 5,
            water_filling: 8,
            zero_forcing: 5,
        };
        let checks = run_all(b, 3);
        assert_eq!(checks.iter().map(|c| c.id).collect::<Vec<_>>(), (1..=7).collect::<Vec<_>>());
        for id in [2, 3, 5, 7] {
            assert!(checks[id - 1].passed, "{}", checks[id - 1]);
        }
    }

    #[test]
    fn orthogonal_rows_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = orthogonal_rows(3, 5, &mut rng);
        let gram = &h * h.adjoint();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(gram[(i, j)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn display_line() {
        let c = Check {
            id: 4,
            name: "x",
            passed: false,
            detail: "d".into(),
        };
        assert_eq!(c.to_string(), "[FAIL]  4 x: d");
    }
}
