//! Per-trial outcome types shared by the algorithms and the report.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ippu::IppuStatus;
use crate::precode::PowerAllocation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    Ippu,
    RpbfNbua,
    NoIrs,
    PbfUapc,
    AfRelay,
}

impl Algorithm {
    /// The algorithms the simulator can run.
    pub const RUNNABLE: [Algorithm; 3] = [Algorithm::Ippu, Algorithm::RpbfNbua, Algorithm::NoIrs];

    pub fn tag(&self) -> &'static str {
        match self {
            Algorithm::Ippu => "ippu",
            Algorithm::RpbfNbua => "rpbf-nbua",
            Algorithm::NoIrs => "no-irs",
            Algorithm::PbfUapc => "pbf-uapc",
            Algorithm::AfRelay => "af-relay",
        }
    }

    pub fn uses_irs(&self) -> bool {
        !matches!(self, Algorithm::NoIrs | Algorithm::AfRelay)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "ippu" => Ok(Algorithm::Ippu),
            "rpbf-nbua" => Ok(Algorithm::RpbfNbua),
            "no-irs" => Ok(Algorithm::NoIrs),
            "pbf-uapc" => Ok(Algorithm::PbfUapc),
            "af-relay" => Ok(Algorithm::AfRelay),
            other => Err(Error::InvalidArgument(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrialStatus {
    Converged,
    HitTMax,
    /// Single-shot baselines.
    Done,
    Infeasible,
}

impl TrialStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrialStatus::Converged => "converged",
            TrialStatus::HitTMax => "hit_t_max",
            TrialStatus::Done => "done",
            TrialStatus::Infeasible => "infeasible",
        }
    }

    pub fn is_feasible(&self) -> bool {
        *self != TrialStatus::Infeasible
    }
}

impl From<IppuStatus> for TrialStatus {
    fn from(s: IppuStatus) -> Self {
        match s {
            IppuStatus::Converged => TrialStatus::Converged,
            IppuStatus::HitTMax => TrialStatus::HitTMax,
            IppuStatus::Infeasible => TrialStatus::Infeasible,
        }
    }
}

impl FromStr for TrialStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "converged" => Ok(TrialStatus::Converged),
            "hit_t_max" => Ok(TrialStatus::HitTMax),
            "done" => Ok(TrialStatus::Done),
            "infeasible" => Ok(TrialStatus::Infeasible),
            other => Err(Error::InvalidArgument(format!("unknown status '{other}'"))),
        }
    }
}

/// Association and powers produced by one algorithm on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub assignment: Vec<usize>,
    pub powers: PowerAllocation,
    pub status: TrialStatus,
    pub iterations: usize,
}

impl Solution {
    pub fn infeasible(num_users: usize, num_bs: usize, iterations: usize) -> Self {
        Solution {
            assignment: vec![0; num_users],
            powers: PowerAllocation::new(num_bs),
            status: TrialStatus::Infeasible,
            iterations,
        }
    }
}

/// One row of the per-trial table. Infeasible trials carry NaN metrics and
/// zero served counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub draw: u64,
    pub algorithm: Algorithm,
    pub r_sum: f64,
    pub ee: f64,
    pub status: TrialStatus,
    pub iterations: usize,
    /// Sum of the allocated powers, Watts.
    pub power: f64,
    pub user_rates: Vec<f64>,
    pub served_counts: Vec<usize>,
    /// Mean rate of the users each BS serves; NaN for an idle BS.
    pub bs_mean_rate: Vec<f64>,
}

impl TrialResult {
    pub fn is_feasible(&self) -> bool {
        self.status.is_feasible()
    }
}
