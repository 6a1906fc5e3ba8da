//! User association as an asymmetric multi-assignment problem: every user is
//! served by exactly one BS and every BS serves at least one user. Solved by a
//! forward-reverse auction and certified by epsilon-complementary slackness.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer benefits over the feasible pairs D. `None` marks a pair outside D.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenefitMatrix {
    num_bs: usize,
    num_users: usize,
    values: Vec<Option<i64>>,
    pub scale: u32,
}

impl BenefitMatrix {
    /// `rows[s][k]`; every row must have the same length.
    pub fn from_rows(rows: Vec<Vec<Option<i64>>>, scale: u32) -> Result<Self> {
        let num_bs = rows.len();
        if num_bs == 0 {
            return Err(Error::InvalidArgument("no base stations".into()));
        }
        let num_users = rows[0].len();
        if rows.iter().any(|r| r.len() != num_users) {
            return Err(Error::DimensionMismatch("ragged benefit rows".into()));
        }
        if rows.iter().flatten().flatten().any(|&v| v < 0) {
            return Err(Error::InvalidArgument("benefits must be >= 0".into()));
        }
        Ok(BenefitMatrix {
            num_bs,
            num_users,
            values: rows.into_iter().flatten().collect(),
            scale,
        })
    }

    /// Dense matrix with every pair feasible.
    pub fn dense(rows: &[Vec<i64>]) -> Result<Self> {
        Self::from_rows(
            rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect(),
            1,
        )
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn get(&self, s: usize, k: usize) -> Option<i64> {
        self.values[s * self.num_users + k]
    }

    /// Users reachable from BS `s`.
    pub fn users_of(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_users).filter(move |&k| self.get(s, k).is_some())
    }

    /// BSs that can serve user `k`.
    pub fn bs_of(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_bs).filter(move |&s| self.get(s, k).is_some())
    }

    pub fn max_abs(&self) -> i64 {
        self.values.iter().flatten().map(|v| v.abs()).max().unwrap_or(0)
    }

    /// Total benefit of `assignment[k] = s`, `None` if a pair is outside D.
    pub fn total(&self, assignment: &[usize]) -> Option<i64> {
        assignment
            .iter()
            .enumerate()
            .map(|(k, &s)| self.get(s, k))
            .sum()
    }

    /// Every user has a feasible BS and the BSs can be given distinct users.
    pub fn check_feasible(&self) -> Result<()> {
        if self.num_users < self.num_bs {
            return Err(Error::AssociationInfeasible(format!(
                "{} users cannot cover {} base stations",
                self.num_users, self.num_bs
            )));
        }
        for k in 0..self.num_users {
            if self.bs_of(k).next().is_none() {
                return Err(Error::AssociationInfeasible(format!("user {k} has no feasible BS")));
            }
        }
        // Kuhn's augmenting paths: match each BS to a distinct user.
        let mut owner: Vec<Option<usize>> = vec![None; self.num_users];
        for s in 0..self.num_bs {
            let mut seen = vec![false; self.num_users];
            if !self.augment(s, &mut seen, &mut owner) {
                return Err(Error::AssociationInfeasible(format!(
                    "BS {s} cannot be given a user of its own"
                )));
            }
        }
        Ok(())
    }

    fn augment(&self, s: usize, seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for k in 0..self.num_users {
            if self.get(s, k).is_none() || seen[k] {
                continue;
            }
            seen[k] = true;
            let free = match owner[k] {
                None => true,
                Some(t) => self.augment(t, seen, owner),
            };
            if free {
                owner[k] = Some(s);
                return true;
            }
        }
        false
    }
}

/// `round(scale R_{s,k} / unit)` over pairs with a finite rate of at least
/// `r_min`. The unit is `r_min`, or 1 bit/s/Hz when `r_min = 0`. Non-finite
/// rates mark pairs outside D.
pub fn build_benefits(rates: &DMatrix<f64>, r_min: f64, scale: u32) -> Result<BenefitMatrix> {
    if !(r_min >= 0.0 && r_min.is_finite()) {
        return Err(Error::InvalidArgument(format!("R_min = {r_min}")));
    }
    if scale < 1 {
        return Err(Error::InvalidArgument("benefit scale must be >= 1".into()));
    }
    let unit = if r_min > 0.0 { r_min } else { 1.0 };
    let rows = (0..rates.nrows())
        .map(|s| {
            (0..rates.ncols())
                .map(|k| {
                    let r = rates[(s, k)];
                    (r.is_finite() && r >= r_min && r >= 0.0)
                        .then(|| (scale as f64 * r / unit).round() as i64)
                })
                .collect()
        })
        .collect();
    let b = BenefitMatrix::from_rows(rows, scale)?;
    for k in 0..b.num_users() {
        if b.bs_of(k).next().is_none() {
            return Err(Error::AssociationInfeasible(format!(
                "user {k} meets the rate floor at no BS"
            )));
        }
    }
    Ok(b)
}

/// User-to-BS map with the auction duals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    /// `assignment[k]` is the BS serving user k.
    pub assignment: Vec<usize>,
    /// BS profits.
    pub pi: Vec<f64>,
    /// User prices.
    pub q: Vec<f64>,
    pub mu: f64,
    pub epsilon: f64,
    /// False for associations that did not come from the auction.
    pub has_duals: bool,
    /// Bid computations performed.
    pub bids: usize,
}

impl Association {
    /// An association with no dual information.
    pub fn from_assignment(assignment: Vec<usize>, num_bs: usize) -> Self {
        let k = assignment.len();
        Association {
            assignment,
            pi: vec![0.0; num_bs],
            q: vec![0.0; k],
            mu: 0.0,
            epsilon: 0.0,
            has_duals: false,
            bids: 0,
        }
    }

    pub fn num_bs(&self) -> usize {
        self.pi.len()
    }

    /// Users of BS `s`, ascending.
    pub fn served(&self, s: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&k| self.assignment[k] == s)
            .collect()
    }

    pub fn served_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_bs()];
        for &s in &self.assignment {
            c[s] += 1;
        }
        c
    }

    /// Each user on a valid BS and each BS serving someone.
    pub fn is_feasible(&self) -> bool {
        self.assignment.iter().all(|&s| s < self.num_bs())
            && self.served_counts().iter().all(|&c| c >= 1)
    }
}

/// How the reverse phase treats the users a BS already holds when it accepts
/// a new one at a raised profit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReverseRule {
    /// Release them whenever the profit rises; they bid again later.
    Displace,
    /// Keep every existing pair.
    Keep,
}

/// Mutable auction state shared by the two phases.
#[derive(Debug, Clone)]
pub struct AuctionState {
    pub owner: Vec<Option<usize>>,
    pub held: Vec<Vec<usize>>,
    pub pi: Vec<f64>,
    pub q: Vec<f64>,
    pub mu: f64,
    pub bids: usize,
    sentinel: f64,
    cap: usize,
}

impl AuctionState {
    /// Empty assignment, all duals zero.
    pub fn new(benefits: &BenefitMatrix, epsilon: f64) -> Self {
        let (s, k) = (benefits.num_bs(), benefits.num_users());
        let amax = benefits.max_abs() as f64;
        // stands in for -inf when only one candidate exists
        let sentinel = (s + k + 1) as f64 * (2.0 * amax + 1.0);
        let pairs = (0..s).map(|i| benefits.users_of(i).count()).sum::<usize>().max(1);
        let steps = ((4.0 * sentinel + amax) / epsilon).ceil() as usize + 2;
        AuctionState {
            owner: vec![None; k],
            held: vec![Vec::new(); s],
            pi: vec![0.0; s],
            q: vec![0.0; k],
            mu: 0.0,
            bids: 0,
            sentinel,
            cap: pairs.saturating_mul(steps).max(10_000),
        }
    }

    fn assign(&mut self, s: usize, k: usize) {
        if let Some(prev) = self.owner[k] {
            self.held[prev].retain(|&u| u != k);
        }
        self.owner[k] = Some(s);
        self.held[s].push(k);
    }

    fn release(&mut self, k: usize) {
        if let Some(prev) = self.owner[k].take() {
            self.held[prev].retain(|&u| u != k);
        }
    }

    fn tick(&mut self) -> Result<()> {
        self.bids += 1;
        if self.bids > self.cap {
            return Err(Error::AuctionStalled(self.cap));
        }
        Ok(())
    }
}

/// Best and second-best of `(index, value)` candidates; ties favour the
/// lower index. Second is `-sentinel` when there is a single candidate.
fn top_two(cands: impl Iterator<Item = (usize, f64)>, sentinel: f64) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut second = -sentinel;
    for (i, v) in cands {
        match best {
            None => best = Some((i, v)),
            Some((_, bv)) if v > bv => {
                second = bv;
                best = Some((i, v));
            }
            Some(_) => second = second.max(v),
        }
    }
    best.map(|(i, v)| (i, v, second))
}

/// Forward phase: unassociated BSs, lowest index first, bid for their best
/// user at `benefit - second_best + epsilon` until every BS holds a user.
pub fn forward_auction(
    mut state: AuctionState,
    benefits: &BenefitMatrix,
    epsilon: f64,
) -> Result<AuctionState> {
    while let Some(s) = (0..benefits.num_bs()).find(|&s| state.held[s].is_empty()) {
        state.tick()?;
        let cands = benefits
            .users_of(s)
            .map(|k| (k, benefits.get(s, k).unwrap() as f64 - state.q[k]));
        let (k, _, second) = top_two(cands, state.sentinel).ok_or_else(|| {
            Error::AssociationInfeasible(format!("BS {s} has no feasible user"))
        })?;
        let a = benefits.get(s, k).unwrap() as f64;
        let bid = a - second + epsilon;
        state.q[k] = bid;
        state.pi[s] = second - epsilon;
        state.assign(s, k);
    }
    state.mu = state.pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(state)
}

/// Reverse phase: unassigned users, lowest index first, pick the BS with the
/// largest `benefit - pi`, raise its profit by
/// `min(mu - pi_s, best - second + epsilon)` and take the remaining value as
/// their price.
pub fn reverse_auction(
    mut state: AuctionState,
    benefits: &BenefitMatrix,
    epsilon: f64,
    rule: ReverseRule,
) -> Result<Association> {
    while let Some(k) = (0..benefits.num_users()).find(|&k| state.owner[k].is_none()) {
        state.tick()?;
        let cands = benefits
            .bs_of(k)
            .map(|s| (s, benefits.get(s, k).unwrap() as f64 - state.pi[s]));
        let (s, zeta, second) = top_two(cands, state.sentinel).ok_or_else(|| {
            Error::AssociationInfeasible(format!("user {k} has no feasible BS"))
        })?;
        let delta = (state.mu - state.pi[s]).min(zeta - second + epsilon);
        state.pi[s] += delta;
        state.q[k] = zeta - delta;
        let previous = state.held[s].clone();
        state.assign(s, k);
        // a raised profit would break the equality on the pairs s already holds
        if rule == ReverseRule::Displace && delta > 0.0 {
            for j in previous {
                state.release(j);
            }
        }
    }
    let assignment = state
        .owner
        .iter()
        .map(|o| o.expect("every user assigned"))
        .collect();
    Ok(Association {
        assignment,
        pi: state.pi,
        q: state.q,
        mu: state.mu,
        epsilon,
        has_duals: true,
        bids: state.bids,
    })
}

/// Forward then reverse auction with the given reverse-phase rule.
pub fn fra_solve_with(benefits: &BenefitMatrix, epsilon: f64, rule: ReverseRule) -> Result<Association> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon}")));
    }
    benefits.check_feasible()?;
    let state = AuctionState::new(benefits, epsilon);
    let state = forward_auction(state, benefits, epsilon)?;
    reverse_auction(state, benefits, epsilon, rule)
}

/// Forward-reverse auction.
pub fn fra_solve(benefits: &BenefitMatrix, epsilon: f64) -> Result<Association> {
    fra_solve_with(benefits, epsilon, ReverseRule::Displace)
}

pub const BRUTE_FORCE_MAX_BS: usize = 5;
pub const BRUTE_FORCE_MAX_USERS: usize = 12;

/// Exhaustive maximum over all assignments that give every BS a user.
/// Enumerates in lexicographic order and keeps strict improvements, so ties
/// resolve to the lexicographically smallest assignment.
pub fn brute_force_assignment(benefits: &BenefitMatrix) -> Result<Association> {
    let (s, k) = (benefits.num_bs(), benefits.num_users());
    if s > BRUTE_FORCE_MAX_BS || k > BRUTE_FORCE_MAX_USERS {
        return Err(Error::OracleTooLarge {
            bs: s,
            users: k,
            max_bs: BRUTE_FORCE_MAX_BS,
            max_users: BRUTE_FORCE_MAX_USERS,
        });
    }
    let mut digits = vec![0usize; k];
    let mut best: Option<(i64, Vec<usize>)> = None;
    let mut counts = vec![0usize; s];
    loop {
        counts.iter_mut().for_each(|c| *c = 0);
        digits.iter().for_each(|&d| counts[d] += 1);
        if counts.iter().all(|&c| c >= 1) {
            if let Some(t) = benefits.total(&digits) {
                if best.as_ref().is_none_or(|(b, _)| t > *b) {
                    best = Some((t, digits.clone()));
                }
            }
        }
        // odometer, last user fastest
        let mut pos = k;
        loop {
            if pos == 0 {
                let (_, assignment) = best.ok_or_else(|| {
                    Error::AssociationInfeasible("no assignment covers every BS".into())
                })?;
                return Ok(Association::from_assignment(assignment, s));
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < s {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Checks `pi_s + q_k >= a_{s,k} - eps` on D, `pi_s + q_k = a_{s,k}` on
/// assigned pairs, `pi_s = max pi` for BSs serving several users, and
/// feasibility of the assignment.
pub fn check_epsilon_cs(assoc: &Association, benefits: &BenefitMatrix, epsilon: f64) -> bool {
    cs_violation(assoc, benefits, epsilon).is_none()
}

/// The first violated condition, if any.
pub fn cs_violation(assoc: &Association, benefits: &BenefitMatrix, epsilon: f64) -> Option<String> {
    let (s_count, k_count) = (benefits.num_bs(), benefits.num_users());
    if assoc.assignment.len() != k_count || assoc.pi.len() != s_count || assoc.q.len() != k_count {
        return Some("dimension mismatch".into());
    }
    if !assoc.is_feasible() {
        return Some("assignment leaves a BS empty".into());
    }
    let tol = |x: f64| 1e-9 * (1.0 + x.abs());
    for s in 0..s_count {
        for k in benefits.users_of(s) {
            let a = benefits.get(s, k).unwrap() as f64;
            let lhs = assoc.pi[s] + assoc.q[k];
            if lhs < a - epsilon - tol(a) - tol(lhs) {
                return Some(format!("pair ({s},{k}): {lhs} < {a} - eps"));
            }
        }
    }
    for (k, &s) in assoc.assignment.iter().enumerate() {
        let Some(a) = benefits.get(s, k) else {
            return Some(format!("user {k} assigned outside D"));
        };
        let a = a as f64;
        let lhs = assoc.pi[s] + assoc.q[k];
        if (lhs - a).abs() > tol(a) + tol(lhs) {
            return Some(format!("assigned pair ({s},{k}): {lhs} != {a}"));
        }
    }
    let top = assoc.pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for (s, &c) in assoc.served_counts().iter().enumerate() {
        if c > 1 && (assoc.pi[s] - top).abs() > tol(top) {
            return Some(format!("BS {s} serves {c} users at profit {} < {top}", assoc.pi[s]));
        }
    }
    None
}

/// `sum pi + sum q + (K - S) mu`.
pub fn dual_value(assoc: &Association) -> f64 {
    let extra = assoc.assignment.len() as f64 - assoc.pi.len() as f64;
    assoc.pi.iter().sum::<f64>() + assoc.q.iter().sum::<f64>() + extra * assoc.mu
}
