//! Discrete IRS phase optimization.
//!
//! The objective is the transmit power `f1(Phi) = tr((H_r Phi G)^+ P (H_r Phi G)^{+H})`
//! the assisted BS needs under zero forcing. With `Q = sqrt(P)`,
//! `H~ = Q^{-1} H_r` and `y = vec(Phi^H)` it is approximated by the quadratic
//! `y^H B y`, `B = A^H A`, `A = (H~^+)^T kron G^+`; the SFP iteration then
//! minimizes the majorizer `lambda_max ||y||^2 + y_t^H (lambda_max I - B) y_t
//! - 2 Re{y^H (lambda_max I - B) y_t}` over the phase grid.
//!
//! The quadratic equals `f1` only when `(H~ Phi G)^+ = G^+ Phi^H H~^+`, which
//! needs `K = N` or `G G^H` proportional to the identity. When `G` is rank
//! deficient the surrogate can point away from lower `f1`, so [`optimize_irs`]
//! only keeps SFP iterates that do not raise `f1` and then refines element by
//! element on `f1` itself.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, kron, pseudo_inverse, CMat, CVec, C64, RANK_TOL};
use crate::precode::transmit_power;

/// IRS phase configuration on the `2^b`-point grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReflectionState {
    pub phase_idx: Vec<u32>,
    pub bits: u32,
}

impl ReflectionState {
    pub fn zeros(n: usize, bits: u32) -> Self {
        ReflectionState {
            phase_idx: vec![0; n],
            bits,
        }
    }

    pub fn from_indices(phase_idx: Vec<u32>, bits: u32) -> Result<Self> {
        if bits == 0 || bits > 16 {
            return Err(Error::InvalidArgument(format!("{bits} phase bits")));
        }
        let levels = 1u32 << bits;
        if let Some(bad) = phase_idx.iter().find(|&&i| i >= levels) {
            return Err(Error::InvalidArgument(format!(
                "phase index {bad} outside 0..{levels}"
            )));
        }
        Ok(ReflectionState { phase_idx, bits })
    }

    pub fn random<R: Rng + ?Sized>(n: usize, bits: u32, rng: &mut R) -> Self {
        let levels = 1u32 << bits;
        ReflectionState {
            phase_idx: (0..n).map(|_| rng.random_range(0..levels)).collect(),
            bits,
        }
    }

    pub fn len(&self) -> usize {
        self.phase_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase_idx.is_empty()
    }

    pub fn levels(&self) -> u32 {
        1u32 << self.bits
    }

    pub fn phase(&self, n: usize) -> f64 {
        2.0 * PI * self.phase_idx[n] as f64 / self.levels() as f64
    }

    /// `e^{j phi_n}`.
    pub fn coefficient(&self, n: usize) -> C64 {
        C64::from_polar(1.0, self.phase(n))
    }

    pub fn coefficients(&self) -> CVec {
        CVec::from_fn(self.len(), |n, _| self.coefficient(n))
    }

    pub fn diag(&self) -> CMat {
        CMat::from_diagonal(&self.coefficients())
    }

    /// `vec(Phi^H)`: length N^2, nonzero only at slots `n (N + 1)`.
    pub fn y(&self) -> CVec {
        let n = self.len();
        let mut y = CVec::zeros(n * n);
        for i in 0..n {
            y[i * (n + 1)] = self.coefficient(i).conj();
        }
        y
    }

    /// `||Phi - other||_F^2`.
    pub fn distance_sq(&self, other: &ReflectionState) -> f64 {
        (0..self.len())
            .map(|n| (self.coefficient(n) - other.coefficient(n)).norm_sqr())
            .sum()
    }
}

/// Transmit power of the assisted BS: `transmit_power(H_r Phi G, P)`.
/// `h_r` holds one row per served user.
pub fn f1(phi: &ReflectionState, h_r: &CMat, p: &[f64], g: &CMat) -> Result<f64> {
    if h_r.ncols() != phi.len() || g.nrows() != phi.len() {
        return Err(Error::DimensionMismatch(format!(
            "H_r is {}x{}, G is {}x{}, Phi has {} elements",
            h_r.nrows(),
            h_r.ncols(),
            g.nrows(),
            g.ncols(),
            phi.len()
        )));
    }
    let reflected = CMat::from_fn(h_r.nrows(), h_r.ncols(), |k, n| h_r[(k, n)] * phi.coefficient(n));
    transmit_power(&(reflected * g), p)
}

/// Kronecker-structured quadratic of the SFP surrogate.
#[derive(Debug, Clone)]
pub struct SfpProblem {
    /// `G^+`, M x N.
    pub g_pinv: CMat,
    /// `H~^+ = (Q^{-1} H_r)^+`, N x K.
    pub h_tilde_pinv: CMat,
    /// Reduced quadratic over the diagonal slots:
    /// `R = (G^{+H} G^+) .* (H~^+ H~^{+H})^T`, so `y^H B y = v^H R v` with
    /// `v_n = e^{-j phi_n}`.
    pub r: CMat,
    /// Largest eigenvalue of `B`, `(sigma_max(H~^+) sigma_max(G^+))^2`.
    pub lambda_max: f64,
}

impl SfpProblem {
    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    /// `A = (H~^+)^T kron G^+`, size MK x N^2.
    pub fn a_matrix(&self) -> CMat {
        kron(&self.h_tilde_pinv.transpose(), &self.g_pinv)
    }

    /// Dense `B = A^H A` (N^2 x N^2). Only for small N.
    pub fn dense_b(&self) -> CMat {
        let a = self.a_matrix();
        a.adjoint() * a
    }

    /// `B x` without forming `B`: `vec(G^{+H} (G^+ X H~^+) H~^{+H})` with `x = vec(X)`.
    pub fn apply_b(&self, x: &CVec) -> CVec {
        let n = self.n();
        let xm = CMat::from_column_slice(n, n, x.as_slice());
        let inner = &self.g_pinv * xm * &self.h_tilde_pinv;
        let out = self.g_pinv.adjoint() * inner * self.h_tilde_pinv.adjoint();
        CVec::from_column_slice(out.as_slice())
    }

    /// `y^H B y` for a reflection state.
    pub fn quad(&self, phi: &ReflectionState) -> f64 {
        let v = phi.coefficients().conjugate();
        (v.adjoint() * &self.r * &v)[(0, 0)].re
    }

    /// `y^H B y` for an arbitrary N^2 vector.
    pub fn quad_vec(&self, y: &CVec) -> f64 {
        y.dotc(&self.apply_b(y)).re
    }
}

/// Builds the surrogate quadratic for served rows `h_r` and powers `p`.
pub fn build_sfp(h_r: &CMat, p: &[f64], g: &CMat) -> Result<SfpProblem> {
    if p.len() != h_r.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} powers for {} users",
            p.len(),
            h_r.nrows()
        )));
    }
    if let Some(bad) = p.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument(format!("power {bad} must be positive")));
    }
    if g.nrows() != h_r.ncols() {
        return Err(Error::DimensionMismatch("H_r and G disagree on N".into()));
    }
    let q_inv = DVector::from_iterator(p.len(), p.iter().map(|&x| C64::new(1.0 / x.sqrt(), 0.0)));
    let h_tilde = CMat::from_diagonal(&q_inv) * h_r;
    let hp = pseudo_inverse(&h_tilde, RANK_TOL);
    let gp = pseudo_inverse(g, RANK_TOL);
    if hp.rank == 0 || gp.rank == 0 {
        return Err(Error::DegenerateChannel);
    }
    let x = gp.pinv.adjoint() * &gp.pinv;
    let yg = &hp.pinv * hp.pinv.adjoint();
    let n = g.nrows();
    let r = CMat::from_fn(n, n, |i, j| x[(i, j)] * yg[(j, i)]);
    let lambda_max = (hp.pinv_norm2() * gp.pinv_norm2()).powi(2);
    Ok(SfpProblem {
        g_pinv: gp.pinv,
        h_tilde_pinv: hp.pinv,
        r,
        lambda_max,
    })
}

/// Largest eigenvalue of the dense `B`, for checking the closed form.
pub fn lambda_max_dense(sfp: &SfpProblem) -> f64 {
    hermitian_eigenvalues(&sfp.dense_b())[0]
}

/// Majorizer `f2(y | y_t)` of `y^H B y` that touches it at `y_t`.
pub fn majorizer(y: &CVec, y_t: &CVec, sfp: &SfpProblem) -> f64 {
    let lam = sfp.lambda_max;
    let c_minus_b_yt = y_t.scale(lam) - sfp.apply_b(y_t);
    lam * y.norm_squared() + y_t.dotc(&c_minus_b_yt).re - 2.0 * y.dotc(&c_minus_b_yt).re
}

/// Nearest grid index to `angle` on a `levels`-point circle, ties to the lower index.
pub fn nearest_grid_index(angle: f64, levels: u32) -> u32 {
    let step = 2.0 * PI / levels as f64;
    let a = angle.rem_euclid(2.0 * PI);
    let lo = ((a / step).floor() as u32).min(levels - 1);
    let hi = (lo + 1) % levels;
    let dist = |m: u32| {
        let d = (a - m as f64 * step).abs();
        d.min(2.0 * PI - d)
    };
    let (dl, dh) = (dist(lo), dist(hi));
    if dh < dl || (dh == dl && hi < lo) {
        hi
    } else {
        lo
    }
}

/// One SFP update: `d = (lambda_max I - B) y_t` on the diagonal slots, then each
/// `y_i = e^{j theta}` with `theta` the grid point nearest `arg(d_i)`.
/// Elements whose `d_i` vanishes keep their phase.
pub fn sfp_step(state: &ReflectionState, sfp: &SfpProblem) -> ReflectionState {
    let levels = state.levels();
    let v = state.coefficients().conjugate();
    let rv = &sfp.r * &v;
    let floor = 1e-12 * sfp.lambda_max;
    let phase_idx = (0..state.len())
        .map(|n| {
            let d = v[n] * sfp.lambda_max - rv[n];
            if d.norm() <= floor {
                return state.phase_idx[n];
            }
            // y_n = conj(e^{j phi_n}), so phi_n = -theta
            let m = nearest_grid_index(d.arg(), levels);
            (levels - m) % levels
        })
        .collect();
    ReflectionState {
        phase_idx,
        bits: state.bits,
    }
}

/// Result of [`optimize_irs`].
#[derive(Debug, Clone)]
pub struct IrsOutcome {
    pub state: ReflectionState,
    /// `f1` at the initial state and after every accepted update.
    pub f1_trace: Vec<f64>,
    /// Surrogate `y^H B y` at the same points as `f1_trace`.
    pub surrogate_trace: Vec<f64>,
    /// SFP iterations attempted.
    pub sfp_iterations: usize,
    /// True when the last SFP proposal was discarded for raising `f1`.
    pub sfp_rejected: bool,
    pub refine_sweeps: usize,
}

impl IrsOutcome {
    pub fn final_f1(&self) -> f64 {
        *self.f1_trace.last().expect("trace holds the initial value")
    }
}

fn f1_or_inf(phi: &ReflectionState, h_r: &CMat, p: &[f64], g: &CMat) -> f64 {
    f1(phi, h_r, p, g).unwrap_or(f64::INFINITY)
}

/// SFP iterations from `init` until the phase change drops below `xi_tol` or
/// `t_sfp` iterations, keeping only proposals that do not raise `f1`; then, if
/// `refine`, element-wise descent on `f1` over the grid.
pub fn optimize_irs(
    h_r: &CMat,
    g: &CMat,
    p: &[f64],
    init: &ReflectionState,
    t_sfp: usize,
    xi_tol: f64,
    refine: bool,
) -> Result<IrsOutcome> {
    let mut state = init.clone();
    let mut f = f1(&state, h_r, p, g)?;
    let sfp = build_sfp(h_r, p, g)?;
    let mut out = IrsOutcome {
        state: state.clone(),
        f1_trace: vec![f],
        surrogate_trace: vec![sfp.quad(&state)],
        sfp_iterations: 0,
        sfp_rejected: false,
        refine_sweeps: 0,
    };
    if t_sfp == 0 {
        return Ok(out);
    }
    while out.sfp_iterations < t_sfp {
        out.sfp_iterations += 1;
        let cand = sfp_step(&state, &sfp);
        let change = cand.distance_sq(&state);
        if change == 0.0 {
            break;
        }
        let fc = f1_or_inf(&cand, h_r, p, g);
        if fc > f {
            out.sfp_rejected = true;
            break;
        }
        state = cand;
        f = fc;
        out.f1_trace.push(f);
        out.surrogate_trace.push(sfp.quad(&state));
        if change < xi_tol {
            break;
        }
    }
    if refine {
        let levels = state.levels();
        while out.refine_sweeps < t_sfp {
            out.refine_sweeps += 1;
            let mut improved = false;
            for n in 0..state.len() {
                let current = state.phase_idx[n];
                let mut best = (f, current);
                for l in 0..levels {
                    if l == current {
                        continue;
                    }
                    state.phase_idx[n] = l;
                    let fl = f1_or_inf(&state, h_r, p, g);
                    if fl < best.0 * (1.0 - 1e-12) {
                        best = (fl, l);
                    }
                }
                state.phase_idx[n] = best.1;
                if best.1 != current {
                    f = best.0;
                    improved = true;
                    out.f1_trace.push(f);
                    out.surrogate_trace.push(sfp.quad(&state));
                }
            }
            if !improved {
                break;
            }
        }
    }
    out.state = state;
    Ok(out)
}

/// [`optimize_irs`] with the iteration caps and refinement flag from `cfg`.
pub fn optimize_irs_cfg(
    h_r: &CMat,
    g: &CMat,
    p: &[f64],
    init: &ReflectionState,
    cfg: &SystemConfig,
) -> Result<IrsOutcome> {
    optimize_irs(h_r, g, p, init, cfg.t_sfp, cfg.xi_tol, cfg.irs_refine)
}

/// Plain SFP iterates with no acceptance test, for diagnostics. Returns the
/// true `f1` after each iterate (infinite where the cascade loses rank).
pub fn raw_sfp_trace(
    h_r: &CMat,
    g: &CMat,
    p: &[f64],
    init: &ReflectionState,
    t_sfp: usize,
    xi_tol: f64,
) -> Result<Vec<f64>> {
    let sfp = build_sfp(h_r, p, g)?;
    let mut state = init.clone();
    let mut trace = vec![f1_or_inf(&state, h_r, p, g)];
    for _ in 0..t_sfp {
        let next = sfp_step(&state, &sfp);
        let change = next.distance_sq(&state);
        state = next;
        trace.push(f1_or_inf(&state, h_r, p, g));
        if change < xi_tol {
            break;
        }
    }
    Ok(trace)
}

/// `f1 <= P_max`.
pub fn feasibility_check(f1_value: f64, p_max: f64) -> bool {
    f1_value <= p_max
}

/// Exhaustive minimum of `f1` over all `2^(b N)` grid configurations.
pub fn exhaustive_min_f1(
    h_r: &CMat,
    g: &CMat,
    p: &[f64],
    bits: u32,
) -> Result<(ReflectionState, f64)> {
    let n = g.nrows();
    let levels = 1u64 << bits;
    let total = levels
        .checked_pow(n as u32)
        .filter(|&t| t <= 1 << 20)
        .ok_or_else(|| Error::InvalidArgument("exhaustive IRS search too large".into()))?;
    let mut best: Option<(ReflectionState, f64)> = None;
    for code in 0..total {
        let mut c = code;
        let idx = (0..n)
            .map(|_| {
                let v = (c % levels) as u32;
                c /= levels;
                v
            })
            .collect();
        let st = ReflectionState { phase_idx: idx, bits };
        let v = f1_or_inf(&st, h_r, p, g);
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((st, v));
        }
    }
    let (st, v) = best.expect("at least one configuration");
    if !v.is_finite() {
        return Err(Error::DegenerateChannel);
    }
    Ok((st, v))
}
