//! Scenario configuration.
//!
//! [`ConfigFile`] is the on-disk form: flat keys, powers in dBm/dBW and
//! antenna gains in dBi. [`SystemConfig`] is the resolved form used by every
//! numerical routine; all of its powers and gains are linear. The conversion
//! happens once, in [`ConfigFile::resolve`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn dbw_to_watts(dbw: f64) -> f64 {
    10f64.powf(dbw / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub type Point = [f64; 2];

pub fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Log-distance path loss `kappa_a + 10 kappa_b log10(d)` with log-normal
/// shadowing of standard deviation `sigma_c` (all in dB).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub sigma_c: f64,
}

impl PathLossModel {
    pub const LOS: PathLossModel = PathLossModel {
        kappa_a: 61.4,
        kappa_b: 2.0,
        sigma_c: 5.8,
    };
    pub const NLOS: PathLossModel = PathLossModel {
        kappa_a: 72.0,
        kappa_b: 2.92,
        sigma_c: 8.7,
    };

    fn from_triple(t: [f64; 3]) -> Self {
        PathLossModel {
            kappa_a: t[0],
            kappa_b: t[1],
            sigma_c: t[2],
        }
    }

    fn triple(&self) -> [f64; 3] {
        [self.kappa_a, self.kappa_b, self.sigma_c]
    }
}

/// Deployment layout: BS sites, the IRS site, and the disk users are dropped in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub bs_positions: Vec<Point>,
    pub irs_position: Point,
    pub user_center: Point,
    pub user_radius: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Layout {
            bs_positions: vec![[0.0, 0.0], [200.0, 200.0], [300.0, 0.0]],
            irs_position: [50.0, 100.0],
            user_center: [150.0, 50.0],
            user_radius: 30.0,
        }
    }
}

/// Circuit power model used by the energy-efficiency metric. Linear Watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    /// Amplifier inefficiency applied to the allocated transmit powers.
    pub eta: f64,
    pub p_bs: f64,
    pub p_user: f64,
    /// Per-element IRS circuit power.
    pub p_element: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            eta: 1.2,
            p_bs: dbw_to_watts(5.0),
            p_user: dbm_to_watts(10.0),
            p_element: dbm_to_watts(10.0),
        }
    }
}

/// Fully resolved scenario constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_bs: usize,
    pub num_users: usize,
    pub num_antennas: usize,
    pub num_elements: usize,
    /// IRS phase resolution in bits; the phase alphabet has `2^phase_bits` points.
    pub phase_bits: u32,
    pub carrier_freq: f64,
    pub bandwidth: f64,
    pub d_over_lambda: f64,
    /// Number of NLOS paths in the BS-IRS channel (the LOS path is extra).
    pub nlos_paths: usize,
    /// Noise power, Watts.
    pub sigma2: f64,
    /// Per-BS transmit power cap, Watts.
    pub p_max: f64,
    /// Per-user rate floor, bits/s/Hz. Zero disables the QoS constraint.
    pub r_min: f64,
    /// Transmit antenna gain, linear.
    pub xi_t: f64,
    /// Receive antenna gain, linear.
    pub xi_r: f64,
    pub los_pl: PathLossModel,
    pub nlos_pl: PathLossModel,
    pub layout: Layout,
    /// Index of the BS whose users are reachable only through the IRS.
    pub irs_bs: usize,
    pub epsilon: f64,
    pub benefit_scale: u32,
    pub xi_tol: f64,
    pub t_max: usize,
    pub t_sfp: usize,
    pub seed: u64,
    /// Follow the SFP iterations with element-wise refinement on the true power.
    pub irs_refine: bool,
    pub energy: EnergyModel,
}

impl Default for SystemConfig {
    fn default() -> Self {
        ConfigFile::default()
            .resolve()
            .expect("built-in defaults are valid")
    }
}

impl SystemConfig {
    pub fn phase_levels(&self) -> u32 {
        1u32 << self.phase_bits
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_bs < 1 {
            return bad("S must be at least 1".into());
        }
        if self.num_users < self.num_bs {
            return bad(format!("K = {} must be >= S = {}", self.num_users, self.num_bs));
        }
        if self.num_antennas < self.num_users {
            return bad(format!(
                "M = {} must be >= K = {}",
                self.num_antennas, self.num_users
            ));
        }
        if self.num_elements < 1 {
            return bad("N must be at least 1".into());
        }
        if !(1..=16).contains(&self.phase_bits) {
            return bad(format!("b = {} must lie in 1..=16", self.phase_bits));
        }
        for (name, v) in [
            ("sigma2", self.sigma2),
            ("P_max", self.p_max),
            ("xi_t", self.xi_t),
            ("xi_r", self.xi_r),
            ("epsilon", self.epsilon),
            ("d_over_lambda", self.d_over_lambda),
            ("carrier_freq", self.carrier_freq),
            ("bandwidth", self.bandwidth),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.r_min.is_finite() && self.r_min >= 0.0) {
            return bad(format!("R_min must be >= 0, got {}", self.r_min));
        }
        if !(self.xi_tol.is_finite() && self.xi_tol > 0.0) {
            return bad("xi_tol must be positive".into());
        }
        if self.benefit_scale < 1 {
            return bad("benefit_scale must be >= 1".into());
        }
        if self.layout.bs_positions.len() != self.num_bs {
            return bad(format!(
                "bs_positions lists {} sites but S = {}",
                self.layout.bs_positions.len(),
                self.num_bs
            ));
        }
        if self.irs_bs >= self.num_bs {
            return bad(format!("irs_assisted_bs = {} out of range", self.irs_bs));
        }
        if !(self.layout.user_radius.is_finite() && self.layout.user_radius >= 0.0) {
            return bad("user_radius must be >= 0".into());
        }
        let e = &self.energy;
        for (name, v) in [("eta", e.eta), ("P_BS", e.p_bs), ("P_u", e.p_user), ("P_n", e.p_element)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    /// Rate unit used to normalize association benefits. With a zero rate
    /// floor the benefit is measured in plain bits/s/Hz.
    pub fn benefit_unit(&self) -> f64 {
        if self.r_min > 0.0 {
            self.r_min
        } else {
            1.0
        }
    }
}

/// On-disk configuration. Every key is optional and falls back to the
/// built-in scenario; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub b: u32,
    pub carrier_freq: f64,
    pub bandwidth: f64,
    pub d_over_lambda: f64,
    #[serde(rename = "G_p")]
    pub g_p: usize,
    /// dBm
    pub sigma2: f64,
    /// dBm
    #[serde(rename = "P_max")]
    pub p_max: f64,
    #[serde(rename = "R_min")]
    pub r_min: f64,
    /// dBi
    pub xi_t: f64,
    /// dBi
    pub xi_r: f64,
    pub los_pl: [f64; 3],
    pub nlos_pl: [f64; 3],
    pub bs_positions: Vec<Point>,
    pub irs_position: Point,
    pub user_center: Point,
    pub user_radius: f64,
    pub irs_assisted_bs: usize,
    pub epsilon: f64,
    pub benefit_scale: u32,
    pub xi_tol: f64,
    #[serde(rename = "T_max")]
    pub t_max: usize,
    #[serde(rename = "T_sfp")]
    pub t_sfp: usize,
    pub seed: u64,
    pub irs_refine: bool,
    pub eta: f64,
    /// dBW
    #[serde(rename = "P_BS")]
    pub p_bs: f64,
    /// dBm
    #[serde(rename = "P_u")]
    pub p_u: f64,
    /// dBm
    #[serde(rename = "P_n")]
    pub p_n: f64,
}

impl Default for ConfigFile {
    fn default() -> Self {
        let layout = Layout::default();
        ConfigFile {
            s: 3,
            k: 16,
            m: 32,
            n: 32,
            b: 2,
            carrier_freq: 28e9,
            bandwidth: 500e6,
            d_over_lambda: 0.5,
            g_p: 5,
            sigma2: -65.0,
            p_max: 30.0,
            r_min: 0.0,
            xi_t: 9.82,
            xi_r: 0.0,
            los_pl: PathLossModel::LOS.triple(),
            nlos_pl: PathLossModel::NLOS.triple(),
            bs_positions: layout.bs_positions,
            irs_position: layout.irs_position,
            user_center: layout.user_center,
            user_radius: layout.user_radius,
            irs_assisted_bs: 0,
            epsilon: 0.2,
            benefit_scale: 100,
            xi_tol: 1e-4,
            t_max: 30,
            t_sfp: 50,
            seed: 1,
            irs_refine: true,
            eta: 1.2,
            p_bs: 5.0,
            p_u: 10.0,
            p_n: 10.0,
        }
    }
}

/// Key reference printed by `--help`.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("S", "number of base stations"),
    ("K", "number of single-antenna users"),
    ("M", "antennas per BS (M >= K)"),
    ("N", "IRS reflecting elements"),
    ("b", "IRS phase resolution in bits"),
    ("carrier_freq", "carrier frequency, Hz"),
    ("bandwidth", "system bandwidth, Hz"),
    ("d_over_lambda", "element spacing over wavelength"),
    ("G_p", "NLOS paths in the BS-IRS channel"),
    ("sigma2", "noise power, dBm"),
    ("P_max", "per-BS transmit power cap, dBm"),
    ("R_min", "per-user rate floor, bits/s/Hz (0 disables)"),
    ("xi_t", "transmit antenna gain, dBi"),
    ("xi_r", "receive antenna gain, dBi"),
    ("los_pl", "LOS path loss [kappa_a, kappa_b, sigma_c] in dB"),
    ("nlos_pl", "NLOS path loss [kappa_a, kappa_b, sigma_c] in dB"),
    ("bs_positions", "BS sites [[x, y], ...] in metres"),
    ("irs_position", "IRS site [x, y] in metres"),
    ("user_center", "centre of the user disk [x, y] in metres"),
    ("user_radius", "radius of the user disk, metres"),
    ("irs_assisted_bs", "0-based index of the BS served through the IRS"),
    ("epsilon", "auction bid increment"),
    ("benefit_scale", "integer scaling applied to association benefits"),
    ("xi_tol", "convergence tolerance on squared changes"),
    ("T_max", "outer iteration cap"),
    ("T_sfp", "IRS inner iteration cap"),
    ("seed", "master RNG seed"),
    ("irs_refine", "refine IRS phases element-wise after SFP (true/false)"),
    ("eta", "amplifier inefficiency for energy efficiency"),
    ("P_BS", "BS circuit power, dBW"),
    ("P_u", "user circuit power, dBm"),
    ("P_n", "per-element IRS circuit power, dBm"),
];

impl ConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self) -> Result<SystemConfig> {
        let cfg = SystemConfig {
            num_bs: self.s,
            num_users: self.k,
            num_antennas: self.m,
            num_elements: self.n,
            phase_bits: self.b,
            carrier_freq: self.carrier_freq,
            bandwidth: self.bandwidth,
            d_over_lambda: self.d_over_lambda,
            nlos_paths: self.g_p,
            sigma2: dbm_to_watts(self.sigma2),
            p_max: dbm_to_watts(self.p_max),
            r_min: self.r_min,
            xi_t: db_to_linear(self.xi_t),
            xi_r: db_to_linear(self.xi_r),
            los_pl: PathLossModel::from_triple(self.los_pl),
            nlos_pl: PathLossModel::from_triple(self.nlos_pl),
            layout: Layout {
                bs_positions: self.bs_positions.clone(),
                irs_position: self.irs_position,
                user_center: self.user_center,
                user_radius: self.user_radius,
            },
            irs_bs: self.irs_assisted_bs,
            epsilon: self.epsilon,
            benefit_scale: self.benefit_scale,
            xi_tol: self.xi_tol,
            t_max: self.t_max,
            t_sfp: self.t_sfp,
            seed: self.seed,
            irs_refine: self.irs_refine,
            energy: EnergyModel {
                eta: self.eta,
                p_bs: dbw_to_watts(self.p_bs),
                p_user: dbm_to_watts(self.p_u),
                p_element: dbm_to_watts(self.p_n),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
