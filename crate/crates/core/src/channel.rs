//! mmWave channel generation: ULA steering vectors, log-distance path loss,
//! the multipath BS-IRS matrix, single-path IRS-user and BS-user rows, and
//! the cascaded per-BS channel matrices.

use std::f64::consts::PI;

use nalgebra::RowDVector;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{distance, PathLossModel, Point, SystemConfig};
use crate::error::{Error, Result};
use crate::irs_opt::ReflectionState;
use crate::linalg::{CMat, CVec, C64};

pub type CRow = RowDVector<C64>;

/// Node positions for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs_positions: Vec<Point>,
    pub irs_position: Point,
    pub user_positions: Vec<Point>,
}

impl Geometry {
    /// Drops `cfg.num_users` users uniformly in the configured disk.
    pub fn sample<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Geometry {
        let layout = &cfg.layout;
        let user_positions = (0..cfg.num_users)
            .map(|_| {
                let r = layout.user_radius * rng.random::<f64>().sqrt();
                let t = 2.0 * PI * rng.random::<f64>();
                [
                    layout.user_center[0] + r * t.cos(),
                    layout.user_center[1] + r * t.sin(),
                ]
            })
            .collect();
        Geometry {
            bs_positions: layout.bs_positions.clone(),
            irs_position: layout.irs_position,
            user_positions,
        }
    }

    /// Index of the geometrically closest BS, lowest index on ties.
    pub fn nearest_bs(&self, k: usize) -> usize {
        let u = self.user_positions[k];
        let mut best = 0;
        for s in 1..self.bs_positions.len() {
            if distance(self.bs_positions[s], u) < distance(self.bs_positions[best], u) {
                best = s;
            }
        }
        best
    }
}

/// The random channels of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS `irs_bs` to IRS, N x M.
    pub g: CMat,
    /// IRS to users, K x N (row k is user k).
    pub h_r: CMat,
    /// Direct BS-user channels, K x M, for every BS except `irs_bs` (None there).
    pub h_d: Vec<Option<CMat>>,
    /// NLOS-only BS `irs_bs` to users, K x M, for the no-IRS benchmark.
    pub blocked_direct: CMat,
    pub irs_bs: usize,
}

impl ChannelSet {
    pub fn num_users(&self) -> usize {
        self.h_r.nrows()
    }

    pub fn num_bs(&self) -> usize {
        self.h_d.len()
    }

    pub fn num_elements(&self) -> usize {
        self.g.nrows()
    }

    pub fn num_antennas(&self) -> usize {
        self.g.ncols()
    }

    /// Channel row from BS `s` to user `k` under reflection `phi`.
    pub fn user_row(&self, s: usize, k: usize, phi: &ReflectionState) -> Result<CRow> {
        if s == self.irs_bs {
            cascaded_channel(&self.h_r.row(k).into_owned(), phi, &self.g)
        } else {
            let hd = self.h_d[s]
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("no direct channel for BS {s}")))?;
            Ok(hd.row(k).into_owned())
        }
    }

    /// Copy in which BS `irs_bs` reaches its users over the blocked NLOS
    /// links instead of through the IRS.
    pub fn without_irs(&self) -> Vec<CMat> {
        (0..self.num_bs())
            .map(|s| match &self.h_d[s] {
                Some(m) => m.clone(),
                None => self.blocked_direct.clone(),
            })
            .collect()
    }
}

/// ULA response `(1/sqrt(n)) exp(j 2 pi d/lambda i sin theta)`, i = 0..n.
pub fn ula_steering(theta: f64, n: usize, d_over_lambda: f64) -> Result<CVec> {
    if !theta.is_finite() {
        return Err(Error::InvalidArgument(format!("steering angle {theta}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("array size must be >= 1".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let step = 2.0 * PI * d_over_lambda * theta.sin();
    Ok(CVec::from_fn(n, |i, _| C64::from_polar(scale, step * i as f64)))
}

/// `kappa_a + 10 kappa_b log10(d) + shadow`, in dB.
pub fn pathloss_db(distance_m: f64, model: &PathLossModel, shadow_db: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::InvalidArgument(format!("distance {distance_m} m")));
    }
    Ok(model.kappa_a + 10.0 * model.kappa_b * distance_m.log10() + shadow_db)
}

/// Draws from CN(0, 10^(-kappa/10)).
pub fn complex_gain<R: Rng + ?Sized>(kappa_db: f64, rng: &mut R) -> C64 {
    let std = (10f64.powf(-kappa_db / 10.0) / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(std * re, std * im)
}

/// Shadowed path loss at `d` followed by the complex gain draw.
fn path_gain<R: Rng + ?Sized>(d: f64, model: &PathLossModel, rng: &mut R) -> Result<C64> {
    let shadow = if model.sigma_c > 0.0 {
        Normal::new(0.0, model.sigma_c)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng)
    } else {
        0.0
    };
    Ok(complex_gain(pathloss_db(d, model, shadow)?, rng))
}

fn bearing(from: Point, to: Point) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

fn uniform_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    2.0 * PI * rng.random::<f64>()
}

/// BS-IRS channel: one LOS path at the BS-IRS distance plus `nlos_paths`
/// NLOS paths with uniformly drawn angles. Path g contributes
/// `sqrt(MN) alpha_g xi_t xi_r conj(a_N(aoa)) a_M(aod)^T`.
pub fn gen_bs_irs_channel<R: Rng + ?Sized>(
    geom: &Geometry,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<CMat> {
    let (m, n) = (cfg.num_antennas, cfg.num_elements);
    let bs = geom.bs_positions[cfg.irs_bs];
    let irs = geom.irs_position;
    let d = distance(bs, irs);
    let amp = ((m * n) as f64).sqrt() * cfg.xi_t * cfg.xi_r;
    let mut g = CMat::zeros(n, m);
    for path in 0..=cfg.nlos_paths {
        let (alpha, aoa, aod) = if path == 0 {
            let alpha = path_gain(d, &cfg.los_pl, rng)?;
            (alpha, bearing(irs, bs), bearing(bs, irs))
        } else {
            let alpha = path_gain(d, &cfg.nlos_pl, rng)?;
            let aoa = uniform_angle(rng);
            let aod = uniform_angle(rng);
            (alpha, aoa, aod)
        };
        let a_n = ula_steering(aoa, n, cfg.d_over_lambda)?.conjugate();
        let a_m = ula_steering(aod, m, cfg.d_over_lambda)?;
        g.ger(alpha * amp, &a_n, &a_m, C64::new(1.0, 0.0));
    }
    Ok(g)
}

fn single_path_row<R: Rng + ?Sized>(
    from: Point,
    to: Point,
    len: usize,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<CRow> {
    let alpha = path_gain(distance(from, to), &cfg.los_pl, rng)?;
    let a = ula_steering(bearing(from, to), len, cfg.d_over_lambda)?;
    let amp = alpha * ((len as f64).sqrt() * cfg.xi_t * cfg.xi_r);
    Ok(a.transpose() * amp)
}

/// IRS to user `k`: `sqrt(N) alpha xi_t xi_r a_N(aod)^T`.
pub fn gen_irs_user_channel<R: Rng + ?Sized>(
    geom: &Geometry,
    k: usize,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<CRow> {
    let u = *geom
        .user_positions
        .get(k)
        .ok_or_else(|| Error::InvalidArgument(format!("user {k} out of range")))?;
    single_path_row(geom.irs_position, u, cfg.num_elements, cfg, rng)
}

/// BS `j` to user `k`, single LOS path.
pub fn gen_direct_channel<R: Rng + ?Sized>(
    geom: &Geometry,
    j: usize,
    k: usize,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<CRow> {
    let u = *geom
        .user_positions
        .get(k)
        .ok_or_else(|| Error::InvalidArgument(format!("user {k} out of range")))?;
    let bs = *geom
        .bs_positions
        .get(j)
        .ok_or_else(|| Error::InvalidArgument(format!("BS {j} out of range")))?;
    single_path_row(bs, u, cfg.num_antennas, cfg, rng)
}

/// BS `irs_bs` to user `k` with only NLOS paths.
pub fn gen_blocked_direct_channel<R: Rng + ?Sized>(
    geom: &Geometry,
    k: usize,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<CRow> {
    let u = *geom
        .user_positions
        .get(k)
        .ok_or_else(|| Error::InvalidArgument(format!("user {k} out of range")))?;
    let d = distance(geom.bs_positions[cfg.irs_bs], u);
    let m = cfg.num_antennas;
    let amp = (m as f64).sqrt() * cfg.xi_t * cfg.xi_r;
    let mut row = CRow::zeros(m);
    for _ in 0..cfg.nlos_paths {
        let alpha = path_gain(d, &cfg.nlos_pl, rng)?;
        let a = ula_steering(uniform_angle(rng), m, cfg.d_over_lambda)?;
        row += a.transpose() * (alpha * amp);
    }
    Ok(row)
}

/// Draws every channel of a trial in a fixed order: G, then h_r for each
/// user, then h_d for each non-assisted BS and user, then the blocked links.
pub fn gen_channels<R: Rng + ?Sized>(
    geom: &Geometry,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<ChannelSet> {
    let (s_count, k_count) = (cfg.num_bs, cfg.num_users);
    if geom.user_positions.len() != k_count || geom.bs_positions.len() != s_count {
        return Err(Error::DimensionMismatch(
            "geometry does not match the configured S and K".into(),
        ));
    }
    let g = gen_bs_irs_channel(geom, cfg, rng)?;
    let mut h_r = CMat::zeros(k_count, cfg.num_elements);
    for k in 0..k_count {
        h_r.set_row(k, &gen_irs_user_channel(geom, k, cfg, rng)?);
    }
    let mut h_d = Vec::with_capacity(s_count);
    for j in 0..s_count {
        if j == cfg.irs_bs {
            h_d.push(None);
            continue;
        }
        let mut m = CMat::zeros(k_count, cfg.num_antennas);
        for k in 0..k_count {
            m.set_row(k, &gen_direct_channel(geom, j, k, cfg, rng)?);
        }
        h_d.push(Some(m));
    }
    let mut blocked_direct = CMat::zeros(k_count, cfg.num_antennas);
    for k in 0..k_count {
        blocked_direct.set_row(k, &gen_blocked_direct_channel(geom, k, cfg, rng)?);
    }
    Ok(ChannelSet {
        g,
        h_r,
        h_d,
        blocked_direct,
        irs_bs: cfg.irs_bs,
    })
}

/// `h_r diag(e^{j phi}) G`.
pub fn cascaded_channel(h_r: &CRow, phi: &ReflectionState, g: &CMat) -> Result<CRow> {
    let n = phi.len();
    if h_r.len() != n || g.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "h_r has {} entries, Phi {} and G {} rows",
            h_r.len(),
            n,
            g.nrows()
        )));
    }
    let weighted = CRow::from_fn(n, |_, i| h_r[i] * phi.coefficient(i));
    Ok(weighted * g)
}

/// Reflected matrix `H_r diag(e^{j phi})`, one row per user in `users`.
pub fn reflected_rows(h_r: &CMat, users: &[usize], phi: &ReflectionState) -> CMat {
    CMat::from_fn(users.len(), phi.len(), |r, n| {
        h_r[(users[r], n)] * phi.coefficient(n)
    })
}

/// Stacks the channel rows of `served` (ascending) for BS `s`.
pub fn assemble_channel_matrix(
    s: usize,
    served: &[usize],
    channels: &ChannelSet,
    phi: &ReflectionState,
) -> Result<CMat> {
    if served.is_empty() {
        return Err(Error::InvalidArgument(format!("BS {s} serves no users")));
    }
    if s >= channels.num_bs() {
        return Err(Error::InvalidArgument(format!("BS {s} out of range")));
    }
    let mut users = served.to_vec();
    users.sort_unstable();
    if s == channels.irs_bs {
        if phi.len() != channels.num_elements() {
            return Err(Error::DimensionMismatch(format!(
                "Phi has {} elements, IRS has {}",
                phi.len(),
                channels.num_elements()
            )));
        }
        Ok(reflected_rows(&channels.h_r, &users, phi) * &channels.g)
    } else {
        let hd = channels.h_d[s].as_ref().expect("direct channel present");
        Ok(hd.select_rows(users.iter()))
    }
}

/// Same as [`assemble_channel_matrix`] but over explicit per-BS matrices
/// (used by the no-IRS benchmark).
pub fn stack_rows(rows: &CMat, served: &[usize]) -> Result<CMat> {
    if served.is_empty() {
        return Err(Error::InvalidArgument("empty served set".into()));
    }
    let mut users = served.to_vec();
    users.sort_unstable();
    Ok(rows.select_rows(users.iter()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{pseudo_inverse, RANK_TOL};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_geom(cfg: &SystemConfig, seed: u64) -> Geometry {
        Geometry::sample(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn steering_broadside() {
        let a = ula_steering(0.0, 4, 0.5).unwrap();
        for z in a.iter() {
            assert!((z - C64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn steering_endfire_alternates() {
        let a = ula_steering(PI / 2.0, 2, 0.5).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((a[0] - C64::new(s, 0.0)).norm() < 1e-15);
        assert!((a[1] - C64::new(-s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_matches_scalar_loop() {
        let theta = PI / 6.0;
        let a = ula_steering(theta, 3, 0.5).unwrap();
        for n in 0..3 {
            let ph = 2.0 * PI * 0.5 * n as f64 * theta.sin();
            let expect = C64::new(ph.cos(), ph.sin()) / 3f64.sqrt();
            assert!((a[n] - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn steering_rejects_nan() {
        assert!(ula_steering(f64::NAN, 4, 0.5).is_err());
    }

    #[test]
    fn pathloss_values() {
        let los = PathLossModel::LOS;
        assert!((pathloss_db(1.0, &los, 0.0).unwrap() - 61.4).abs() < 1e-12);
        assert!((pathloss_db(100.0, &los, 0.0).unwrap() - 101.4).abs() < 1e-12);
        let nlos = PathLossModel::NLOS;
        assert!((pathloss_db(100.0, &nlos, 0.0).unwrap() - 130.4).abs() < 1e-12);
        assert!(pathloss_db(0.0, &los, 0.0).is_err());
        assert!(pathloss_db(-3.0, &los, 0.0).is_err());
    }

    #[test]
    fn complex_gain_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| complex_gain(0.0, &mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn complex_gain_vanishes_at_huge_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(complex_gain(300.0, &mut rng).norm() < 1e-10);
    }

    #[test]
    fn complex_gain_is_seeded() {
        let a = complex_gain(10.0, &mut ChaCha8Rng::seed_from_u64(3));
        let b = complex_gain(10.0, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn single_path_g_is_rank_one() {
        let mut cfg = SystemConfig::default();
        cfg.nlos_paths = 0;
        let geom = test_geom(&cfg, 1);
        let g = gen_bs_irs_channel(&geom, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(g.shape(), (32, 32));
        let sv = g.singular_values();
        let mut s: Vec<f64> = sv.iter().cloned().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        assert!(s[1] < 1e-10 * s[0]);
    }

    /// Independent scalar evaluation of the BS-IRS model with the same draw order.
    fn scalar_g(geom: &Geometry, cfg: &SystemConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<C64>> {
        let (m, n) = (cfg.num_antennas, cfg.num_elements);
        let bs = geom.bs_positions[cfg.irs_bs];
        let irs = geom.irs_position;
        let d = ((bs[0] - irs[0]).powi(2) + (bs[1] - irs[1]).powi(2)).sqrt();
        let mut out = vec![vec![C64::new(0.0, 0.0); m]; n];
        for p in 0..=cfg.nlos_paths {
            let model = if p == 0 { cfg.los_pl } else { cfg.nlos_pl };
            let shadow: f64 = Normal::new(0.0, model.sigma_c).unwrap().sample(rng);
            let kappa = model.kappa_a + 10.0 * model.kappa_b * d.log10() + shadow;
            let var = 10f64.powf(-0.1 * kappa);
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let alpha = C64::new(re, im) * (var / 2.0).sqrt();
            let (aoa, aod) = if p == 0 {
                ((bs[1] - irs[1]).atan2(bs[0] - irs[0]), (irs[1] - bs[1]).atan2(irs[0] - bs[0]))
            } else {
                let a = 2.0 * PI * rng.random::<f64>();
                let b = 2.0 * PI * rng.random::<f64>();
                (a, b)
            };
            for (r, row) in out.iter_mut().enumerate() {
                for (c, z) in row.iter_mut().enumerate() {
                    let ph_n = -PI * r as f64 * aoa.sin();
                    let ph_m = PI * c as f64 * aod.sin();
                    let an = C64::from_polar(1.0 / (n as f64).sqrt(), ph_n);
                    let am = C64::from_polar(1.0 / (m as f64).sqrt(), ph_m);
                    *z += alpha * ((m * n) as f64).sqrt() * cfg.xi_t * cfg.xi_r * an * am;
                }
            }
        }
        out
    }

    #[test]
    fn g_matches_scalar_oracle_and_golden_norm() {
        let cfg = SystemConfig::default();
        let geom = test_geom(&cfg, 11);
        let g = gen_bs_irs_channel(&geom, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let oracle = scalar_g(&geom, &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let mut fro = 0.0;
        for r in 0..32 {
            for c in 0..32 {
                assert!((g[(r, c)] - oracle[r][c]).norm() <= 1e-12 * g[(r, c)].norm().max(1e-300) + 1e-300);
                fro += oracle[r][c].norm_sqr();
            }
        }
        let fro = fro.sqrt();
        assert!((g.norm() - fro).abs() <= 1e-12 * fro);
        // golden value recorded from the scalar implementation
        let golden = GOLDEN_G_FRO;
        assert!((fro - golden).abs() <= 1e-9 * golden, "fro = {fro:e}");
    }

    const GOLDEN_G_FRO: f64 = 3.813_196_151_724_796_4e-3;

    #[test]
    fn irs_user_row_norm_identity_and_oracle() {
        let mut cfg = SystemConfig::default();
        cfg.num_elements = 2;
        let geom = test_geom(&cfg, 4);
        let row = gen_irs_user_channel(&geom, 3, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        // redraw the gain with the same stream to check the norm identity
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let irs = geom.irs_position;
        let u = geom.user_positions[3];
        let d = distance(irs, u);
        let alpha = path_gain(d, &cfg.los_pl, &mut rng).unwrap();
        let expect_norm = 2f64.sqrt() * alpha.norm() * cfg.xi_t * cfg.xi_r;
        assert!((row.norm() - expect_norm).abs() < 1e-12 * expect_norm);
        let theta = (u[1] - irs[1]).atan2(u[0] - irs[0]);
        for n in 0..2 {
            let a = C64::from_polar(1.0 / 2f64.sqrt(), PI * n as f64 * theta.sin());
            let expect = alpha * 2f64.sqrt() * cfg.xi_t * cfg.xi_r * a;
            assert!((row[n] - expect).norm() < 1e-12 * expect.norm());
        }
        let again = gen_irs_user_channel(&geom, 3, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(row, again);
    }

    #[test]
    fn direct_row_norm_identity_and_oracle() {
        let mut cfg = SystemConfig::default();
        cfg.num_antennas = 16;
        let geom = test_geom(&cfg, 4);
        let row = gen_direct_channel(&geom, 1, 2, &cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let bs = geom.bs_positions[1];
        let u = geom.user_positions[2];
        let alpha = path_gain(distance(bs, u), &cfg.los_pl, &mut rng).unwrap();
        let amp = 4.0 * cfg.xi_t * cfg.xi_r;
        assert!((row.norm() - amp * alpha.norm()).abs() < 1e-12 * amp * alpha.norm());
        let theta = (u[1] - bs[1]).atan2(u[0] - bs[0]);
        for m in 0..16 {
            let a = C64::from_polar(0.25, PI * m as f64 * theta.sin());
            assert!((row[m] - alpha * amp * a).norm() < 1e-12 * amp * alpha.norm());
        }
    }

    #[test]
    fn blocked_link_weaker_than_los_on_average() {
        let mut cfg = SystemConfig::default();
        cfg.num_antennas = 8;
        let geom = test_geom(&cfg, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (mut blocked, mut los) = (0.0, 0.0);
        for _ in 0..10_000 {
            blocked += gen_blocked_direct_channel(&geom, 0, &cfg, &mut rng).unwrap().norm_squared();
            let d = distance(geom.bs_positions[cfg.irs_bs], geom.user_positions[0]);
            let a = path_gain(d, &cfg.los_pl, &mut rng).unwrap();
            los += 8.0 * cfg.xi_t * cfg.xi_t * cfg.xi_r * cfg.xi_r * a.norm_sqr();
        }
        assert!(blocked < los);
    }

    #[test]
    fn single_nlos_path_blocked_row_is_rank_one() {
        let mut cfg = SystemConfig::default();
        cfg.nlos_paths = 1;
        let geom = test_geom(&cfg, 2);
        let row = gen_blocked_direct_channel(&geom, 0, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(row.len(), cfg.num_antennas);
        assert!(row.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        let again = gen_blocked_direct_channel(&geom, 0, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(row, again);
    }

    #[test]
    fn channel_sets_are_seed_deterministic() {
        let cfg = SystemConfig::default();
        let geom = test_geom(&cfg, 3);
        let a = gen_channels(&geom, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = gen_channels(&geom, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        let c = gen_channels(&geom, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_ne!(a.g, c.g);
        assert!(a.h_d[0].is_none() && a.h_d[1].is_some());
        assert_eq!(a.h_r.shape(), (16, 32));
        assert_eq!(a.blocked_direct.shape(), (16, 32));
    }

    #[test]
    fn cascade_identity_phases_and_scalar_case() {
        let cfg = SystemConfig::default();
        let geom = test_geom(&cfg, 3);
        let ch = gen_channels(&geom, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let phi = ReflectionState::zeros(32, 2);
        let row = ch.h_r.row(0).into_owned();
        let c = cascaded_channel(&row, &phi, &ch.g).unwrap();
        let direct = &row * &ch.g;
        assert!((c - &direct).norm() < 1e-12 * direct.norm());

        let g1 = CMat::from_row_slice(1, 3, &[C64::new(1.0, 0.0), C64::new(0.0, 2.0), C64::new(-1.0, 1.0)]);
        let h1 = CRow::from_row_slice(&[C64::new(0.5, -0.5)]);
        let phi1 = ReflectionState::from_indices(vec![1], 2).unwrap();
        let c1 = cascaded_channel(&h1, &phi1, &g1).unwrap();
        let e = C64::new(0.0, 1.0);
        for m in 0..3 {
            assert!((c1[m] - e * h1[0] * g1[(0, m)]).norm() < 1e-15);
        }
        assert!(cascaded_channel(&h1, &phi, &g1).is_err());
    }

    #[test]
    fn cascade_matches_triple_loop() {
        let cfg = SystemConfig::default();
        let geom = test_geom(&cfg, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ch = gen_channels(&geom, &cfg, &mut rng).unwrap();
        let phi = ReflectionState::random(32, 2, &mut rng);
        let row = ch.h_r.row(5).into_owned();
        let c = cascaded_channel(&row, &phi, &ch.g).unwrap();
        for m in 0..32 {
            let mut acc = C64::new(0.0, 0.0);
            for n in 0..32 {
                acc += row[n] * C64::from_polar(1.0, phi.phase(n)) * ch.g[(n, m)];
            }
            assert!((c[m] - acc).norm() <= 1e-10 * acc.norm() + 1e-300);
        }
    }

    #[test]
    fn assembled_matrices() {
        let cfg = SystemConfig::default();
        let geom = test_geom(&cfg, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ch = gen_channels(&geom, &cfg, &mut rng).unwrap();
        let phi = ReflectionState::random(32, 2, &mut rng);
        let h = assemble_channel_matrix(1, &[4], &ch, &phi).unwrap();
        assert_eq!(h.row(0), ch.h_d[1].as_ref().unwrap().row(4));
        let all: Vec<usize> = (0..16).collect();
        let h = assemble_channel_matrix(2, &all, &ch, &phi).unwrap();
        assert_eq!(&h, ch.h_d[2].as_ref().unwrap());
        let h = assemble_channel_matrix(0, &[7, 2], &ch, &phi).unwrap();
        for (r, k) in [2usize, 7].iter().enumerate() {
            let expect = cascaded_channel(&ch.h_r.row(*k).into_owned(), &phi, &ch.g).unwrap();
            assert!((h.row(r) - &expect).norm() < 1e-12 * expect.norm());
        }
        assert!(assemble_channel_matrix(0, &[], &ch, &phi).is_err());
        let p = pseudo_inverse(&h, RANK_TOL);
        assert_eq!(p.rank, 2);
    }

    #[test]
    fn users_stay_in_disk() {
        let cfg = SystemConfig::default();
        for seed in 0..20 {
            let g = test_geom(&cfg, seed);
            for u in &g.user_positions {
                assert!(distance(*u, cfg.layout.user_center) <= cfg.layout.user_radius + 1e-12);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn steering_has_unit_norm(theta in -10.0f64..10.0, n in 1usize..64, dl in 0.1f64..2.0) {
                let a = ula_steering(theta, n, dl).unwrap();
                prop_assert!((a.norm() - 1.0).abs() < 1e-12);
            }

            #[test]
            fn pathloss_increases_with_distance(d in 0.1f64..1e4, step in 1e-3f64..1e3) {
                let los = PathLossModel::LOS;
                prop_assert!(pathloss_db(d + step, &los, 0.0).unwrap() > pathloss_db(d, &los, 0.0).unwrap());
            }
        }
    }
}
