//! Monte Carlo orchestration: trials in a worker pool, results reduced in
//! trial order, and parameter sweeps over the scenario.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, Geometry};
use crate::config::{ConfigFile, SystemConfig};
use crate::error::{Error, Result};
use crate::harness::baselines::{
    baseline_af_relay, baseline_no_irs, baseline_pbf_uapc, baseline_rpbf_nbua,
};
use crate::harness::metrics::{
    coverage, empirical_cdf, energy_efficiency, mean, outage_probability, percentile,
    scene_user_means, std_dev, Coverage,
};
use crate::harness::scenario::{gen_scenario, TrialSeed};
use crate::harness::trial::{Algorithm, Solution, TrialResult, TrialStatus};
use crate::ippu::{ippu, served_sets, user_rates};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub trials: usize,
    pub channels_per_scene: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    /// Rate thresholds of the outage curve, bits/s/Hz.
    pub outage_grid: Vec<f64>,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        MonteCarloOptions {
            trials: 200,
            channels_per_scene: 1,
            seed: 1,
            algorithms: Algorithm::RUNNABLE.to_vec(),
            outage_grid: (1..=10).map(|i| 0.5 * i as f64).collect(),
        }
    }
}

/// Runs one algorithm on already generated channels.
pub fn solve<R: Rng + ?Sized>(
    algorithm: Algorithm,
    channels: &ChannelSet,
    geom: &Geometry,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<Solution> {
    let (k, s) = (channels.num_users(), channels.num_bs());
    match algorithm {
        Algorithm::Ippu => Ok(match ippu(channels, geom, cfg, rng) {
            Ok(res) if res.is_usable() => Solution {
                assignment: res.assoc.assignment,
                powers: res.powers,
                status: res.status.into(),
                iterations: res.iterations,
            },
            Ok(res) => Solution::infeasible(k, s, res.iterations),
            Err(_) => Solution::infeasible(k, s, 0),
        }),
        Algorithm::RpbfNbua => Ok(baseline_rpbf_nbua(channels, geom, cfg, rng)),
        Algorithm::NoIrs => Ok(baseline_no_irs(channels, cfg)),
        Algorithm::PbfUapc => baseline_pbf_uapc(),
        Algorithm::AfRelay => baseline_af_relay(),
    }
}

/// Metrics of one solution.
pub fn summarize(
    seed: TrialSeed,
    algorithm: Algorithm,
    sol: &Solution,
    cfg: &SystemConfig,
) -> TrialResult {
    let (k, s) = (cfg.num_users, cfg.num_bs);
    if !sol.status.is_feasible() {
        return TrialResult {
            seed: seed.scene_seed,
            draw: seed.draw,
            algorithm,
            r_sum: f64::NAN,
            ee: f64::NAN,
            status: sol.status,
            iterations: sol.iterations,
            power: f64::NAN,
            user_rates: vec![f64::NAN; k],
            served_counts: vec![0; s],
            bs_mean_rate: vec![f64::NAN; s],
        };
    }
    let rates = user_rates(&sol.assignment, &sol.powers, cfg.sigma2);
    let r_sum: f64 = rates.iter().sum();
    let sets = served_sets(&sol.assignment, s);
    TrialResult {
        seed: seed.scene_seed,
        draw: seed.draw,
        algorithm,
        r_sum,
        ee: energy_efficiency(r_sum, &sol.powers, &cfg.energy, cfg, algorithm.uses_irs()),
        status: sol.status,
        iterations: sol.iterations,
        power: sol.powers.total(),
        served_counts: sets.iter().map(Vec::len).collect(),
        bs_mean_rate: sets
            .iter()
            .map(|set| {
                if set.is_empty() {
                    f64::NAN
                } else {
                    set.iter().map(|&u| rates[u]).sum::<f64>() / set.len() as f64
                }
            })
            .collect(),
        user_rates: rates,
    }
}

/// Every requested algorithm on the same scenario, in the given order. The
/// algorithms share the trial's algorithm stream from its start.
pub fn run_trial(
    cfg: &SystemConfig,
    seed: TrialSeed,
    algorithms: &[Algorithm],
) -> Result<Vec<TrialResult>> {
    let (geom, channels) = gen_scenario(cfg, seed)?;
    algorithms
        .iter()
        .map(|&a| {
            let sol = solve(a, &channels, &geom, cfg, &mut seed.algorithm_rng())?;
            Ok(summarize(seed, a, &sol, cfg))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub trials: usize,
    pub feasible: usize,
    pub infeasible: usize,
    /// Trials whose status is `converged`.
    pub converged: usize,
    pub mean_r_sum: f64,
    pub std_r_sum: f64,
    pub p10_r_sum: f64,
    pub p50_r_sum: f64,
    pub p90_r_sum: f64,
    pub mean_ee: f64,
    pub mean_iterations: f64,
}

impl AlgorithmSummary {
    pub fn std_error(&self) -> f64 {
        if self.feasible == 0 {
            f64::NAN
        } else {
            self.std_r_sum / (self.feasible as f64).sqrt()
        }
    }
}

/// Trials of a Monte Carlo run, in trial order then algorithm order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: SystemConfig,
    pub options: MonteCarloOptions,
    pub trials: Vec<TrialResult>,
}

impl Report {
    pub fn of(&self, algorithm: Algorithm) -> impl Iterator<Item = &TrialResult> + '_ {
        self.trials.iter().filter(move |t| t.algorithm == algorithm)
    }

    fn feasible_values(&self, algorithm: Algorithm, f: impl Fn(&TrialResult) -> f64) -> Vec<f64> {
        self.of(algorithm).filter(|t| t.is_feasible()).map(f).collect()
    }

    pub fn summary(&self, algorithm: Algorithm) -> AlgorithmSummary {
        let all: Vec<&TrialResult> = self.of(algorithm).collect();
        let r = self.feasible_values(algorithm, |t| t.r_sum);
        let ee = self.feasible_values(algorithm, |t| t.ee);
        let iters: Vec<f64> = all.iter().map(|t| t.iterations as f64).collect();
        AlgorithmSummary {
            algorithm,
            trials: all.len(),
            feasible: r.len(),
            infeasible: all.len() - r.len(),
            converged: all.iter().filter(|t| t.status == TrialStatus::Converged).count(),
            mean_r_sum: mean(&r),
            std_r_sum: std_dev(&r),
            p10_r_sum: percentile(&r, 10.0),
            p50_r_sum: percentile(&r, 50.0),
            p90_r_sum: percentile(&r, 90.0),
            mean_ee: mean(&ee),
            mean_iterations: mean(&iters),
        }
    }

    pub fn summaries(&self) -> Vec<AlgorithmSummary> {
        self.options.algorithms.iter().map(|&a| self.summary(a)).collect()
    }

    /// `(R_min, outage)` over the configured grid.
    pub fn outage_curve(&self, algorithm: Algorithm) -> Vec<(f64, f64)> {
        let samples = scene_user_means(self.of(algorithm));
        self.options
            .outage_grid
            .iter()
            .map(|&r| (r, outage_probability(&samples, r)))
            .collect()
    }

    pub fn sum_rate_cdf(&self, algorithm: Algorithm) -> Vec<(f64, f64)> {
        empirical_cdf(&self.feasible_values(algorithm, |t| t.r_sum))
    }

    pub fn coverage(&self, algorithm: Algorithm) -> Coverage {
        coverage(self.of(algorithm), self.config.num_bs)
    }
}

/// Runs `options.trials` trials of every requested algorithm. Results are
/// identical for any worker count.
pub fn run_monte_carlo(cfg: &SystemConfig, options: &MonteCarloOptions) -> Result<Report> {
    cfg.validate()?;
    if options.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if options.algorithms.is_empty() {
        return Err(Error::InvalidArgument("no algorithm selected".into()));
    }
    for &a in &options.algorithms {
        if !Algorithm::RUNNABLE.contains(&a) {
            solve_out_of_scope(a)?;
        }
    }
    let per_trial: Vec<Vec<TrialResult>> = (0..options.trials)
        .into_par_iter()
        .map(|t| {
            let seed = TrialSeed::for_trial(options.seed, t, options.channels_per_scene);
            run_trial(cfg, seed, &options.algorithms)
        })
        .collect::<Result<_>>()?;
    Ok(Report {
        config: cfg.clone(),
        options: options.clone(),
        trials: per_trial.into_iter().flatten().collect(),
    })
}

fn solve_out_of_scope(a: Algorithm) -> Result<()> {
    match a {
        Algorithm::PbfUapc => baseline_pbf_uapc().map(|_| ()),
        Algorithm::AfRelay => baseline_af_relay().map(|_| ()),
        _ => Ok(()),
    }
}

/// Scenario knobs a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Per-BS budget in dBm.
    Pmax,
    M,
    K,
    N,
    B,
    /// Rate floor in bits/s/Hz.
    Rmin,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Pmax => "Pmax",
            SweepParam::M => "M",
            SweepParam::K => "K",
            SweepParam::N => "N",
            SweepParam::B => "b",
            SweepParam::Rmin => "Rmin",
        }
    }

    /// Sets the parameter on a configuration file.
    pub fn apply(&self, file: &mut ConfigFile, value: f64) -> Result<()> {
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidArgument(format!(
                    "{} takes whole numbers, got {value}",
                    self.name()
                )))
            }
        };
        match self {
            SweepParam::Pmax => file.p_max = value,
            SweepParam::M => file.m = count()?,
            SweepParam::K => file.k = count()?,
            SweepParam::N => file.n = count()?,
            SweepParam::B => file.b = count()? as u32,
            SweepParam::Rmin => file.r_min = value,
        }
        Ok(())
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Pmax" => Ok(SweepParam::Pmax),
            "M" => Ok(SweepParam::M),
            "K" => Ok(SweepParam::K),
            "N" => Ok(SweepParam::N),
            "b" => Ok(SweepParam::B),
            "Rmin" => Ok(SweepParam::Rmin),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep parameter '{other}' (Pmax, M, K, N, b, Rmin)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: SweepParam,
    pub value: f64,
    pub summary: AlgorithmSummary,
}

/// One Monte Carlo run per value, all with the same master seed.
pub fn run_sweep(
    base: &ConfigFile,
    param: SweepParam,
    values: &[f64],
    options: &MonteCarloOptions,
) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::new();
    for &v in values {
        let mut file = base.clone();
        param.apply(&mut file, v)?;
        let report = run_monte_carlo(&file.resolve()?, options)?;
        for summary in report.summaries() {
            points.push(SweepPoint {
                param,
                value: v,
                summary,
            });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precode::PowerAllocation;

    fn small() -> (ConfigFile, SystemConfig) {
        let file = ConfigFile {
            k: 6,
            m: 8,
            n: 8,
            ..ConfigFile::default()
        };
        let cfg = file.resolve().unwrap();
        (file, cfg)
    }

    fn opts(trials: usize) -> MonteCarloOptions {
        MonteCarloOptions {
            trials,
            ..MonteCarloOptions::default()
        }
    }

    #[test]
    fn single_trial_is_one_ippu_run() {
        let (_, cfg) = small();
        let o = MonteCarloOptions {
            algorithms: vec![Algorithm::Ippu],
            ..opts(1)
        };
        let report = run_monte_carlo(&cfg, &o).unwrap();
        assert_eq!(report.trials.len(), 1);
        let seed = TrialSeed::for_trial(1, 0, 1);
        let (geom, ch) = gen_scenario(&cfg, seed).unwrap();
        let res = ippu(&ch, &geom, &cfg, &mut seed.algorithm_rng()).unwrap();
        let t = &report.trials[0];
        assert_eq!(t.r_sum, res.sum_rate());
        assert_eq!(t.iterations, res.iterations);
    }

    #[test]
    fn identical_seeds_identical_reports() {
        let (_, cfg) = small();
        let a = run_monte_carlo(&cfg, &opts(4)).unwrap();
        let b = run_monte_carlo(&cfg, &opts(4)).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(a.trials.len(), 12);
    }

    #[test]
    fn trial_invariants() {
        let (_, cfg) = small();
        let report = run_monte_carlo(&cfg, &opts(5)).unwrap();
        for t in report.trials.iter().filter(|t| t.is_feasible()) {
            let sum: f64 = t.user_rates.iter().sum();
            assert!((sum - t.r_sum).abs() <= 1e-9 * (1.0 + sum));
            assert_eq!(t.served_counts.iter().sum::<usize>(), cfg.num_users);
            assert!(t.ee >= 0.0);
        }
        for a in Algorithm::RUNNABLE {
            let curve = report.outage_curve(a);
            assert_eq!(curve.len(), 10);
            assert!(curve.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }

    #[test]
    fn infeasible_trials_carry_nan() {
        let (_, cfg) = small();
        let sol = Solution {
            assignment: vec![0; 6],
            powers: PowerAllocation::new(3),
            status: TrialStatus::Infeasible,
            iterations: 2,
        };
        let t = summarize(TrialSeed::for_trial(1, 0, 1), Algorithm::Ippu, &sol, &cfg);
        assert!(t.r_sum.is_nan() && t.user_rates.iter().all(|r| r.is_nan()));
        assert_eq!(t.served_counts, vec![0, 0, 0]);
    }

    #[test]
    fn out_of_scope_algorithms_error() {
        let (_, cfg) = small();
        let o = MonteCarloOptions {
            algorithms: vec![Algorithm::AfRelay],
            ..opts(1)
        };
        assert!(matches!(run_monte_carlo(&cfg, &o), Err(Error::OutOfScope(_))));
        assert!(run_monte_carlo(&cfg, &opts(0)).is_err());
    }

    #[test]
    fn sweep_parameters() {
        let (file, _) = small();
        let mut f = file.clone();
        SweepParam::N.apply(&mut f, 4.0).unwrap();
        assert_eq!(f.n, 4);
        assert!(SweepParam::B.apply(&mut f, 1.5).is_err());
        assert_eq!("Rmin".parse::<SweepParam>().unwrap(), SweepParam::Rmin);
        assert!("rmin".parse::<SweepParam>().is_err());
        let o = MonteCarloOptions {
            algorithms: vec![Algorithm::NoIrs],
            ..opts(2)
        };
        let pts = run_sweep(&file, SweepParam::Pmax, &[20.0, 30.0], &o).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(pts[1].summary.mean_r_sum >= pts[0].summary.mean_r_sum);
    }
}
