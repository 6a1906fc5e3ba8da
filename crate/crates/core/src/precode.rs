//! Zero-forcing precoding, SINR/rate evaluation and transmit-power accounting.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, CMat, C64, RANK_TOL};

/// Raw pseudo-inverse precoder; column k serves row k of `source_h`.
#[derive(Debug, Clone)]
pub struct Precoder {
    pub w: CMat,
    pub source_h: CMat,
}

impl Precoder {
    /// `||w_k||^2`, the power cost per unit of post-precoding power for user k.
    pub fn column_costs(&self) -> Vec<f64> {
        self.w.column_iter().map(|c| c.norm_squared()).collect()
    }
}

/// Per-BS power maps, user index to Watts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub per_bs: Vec<BTreeMap<usize, f64>>,
}

impl PowerAllocation {
    pub fn new(num_bs: usize) -> Self {
        PowerAllocation {
            per_bs: vec![BTreeMap::new(); num_bs],
        }
    }

    pub fn set(&mut self, s: usize, k: usize, p: f64) {
        self.per_bs[s].insert(k, p);
    }

    pub fn get(&self, s: usize, k: usize) -> Option<f64> {
        self.per_bs.get(s)?.get(&k).copied()
    }

    /// Powers of BS `s` in ascending user order.
    pub fn powers_of(&self, s: usize) -> Vec<f64> {
        self.per_bs[s].values().copied().collect()
    }

    pub fn total(&self) -> f64 {
        self.per_bs.iter().flat_map(|m| m.values()).sum()
    }
}

/// `W = H^+` for a full-row-rank `H` (K_s x M, K_s <= M).
pub fn zf_precoder(h: &CMat) -> Result<Precoder> {
    let (rows, cols) = h.shape();
    if rows == 0 {
        return Err(Error::InvalidArgument("empty channel matrix".into()));
    }
    if rows > cols {
        return Err(Error::DimensionMismatch(format!(
            "{rows} users exceed {cols} antennas"
        )));
    }
    let p = pseudo_inverse(h, RANK_TOL);
    if p.rank < rows {
        return Err(Error::RankDeficient {
            rows,
            rank: p.rank,
            condition: p.condition(),
        });
    }
    Ok(Precoder {
        w: p.pinv,
        source_h: h.clone(),
    })
}

/// General SINR of row `k`: `p_k |h_k w_k|^2 / (sum_{j != k} p_j |h_k w_j|^2 + sigma2)`.
pub fn sinr(h: &CMat, w: &CMat, p: &[f64], k: usize, sigma2: f64) -> f64 {
    let hk = h.row(k);
    let mut interference = 0.0;
    let mut signal = 0.0;
    for (j, &pj) in p.iter().enumerate() {
        let g = (hk * w.column(j))[(0, 0)].norm_sqr();
        if j == k {
            signal = pj * g;
        } else {
            interference += pj * g;
        }
    }
    signal / (interference + sigma2)
}

pub fn rate(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

/// `tr(H^+ diag(p) H^{+H})`.
pub fn transmit_power(h: &CMat, p: &[f64]) -> Result<f64> {
    let pre = zf_precoder(h)?;
    if p.len() != pre.w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} powers for {} users",
            p.len(),
            pre.w.ncols()
        )));
    }
    let d = DVector::from_iterator(p.len(), p.iter().map(|&x| C64::new(x, 0.0)));
    let scaled = &pre.w * CMat::from_diagonal(&d);
    Ok((scaled * pre.w.adjoint()).trace().re)
}

/// Per-user costs `||column k of H^+||^2`; `transmit_power = sum p_k c_k`.
pub fn zf_costs(h: &CMat) -> Result<Vec<f64>> {
    Ok(zf_precoder(h)?.column_costs())
}

/// `sum_k log2(1 + p_{s(k),k} / sigma2)` over the assignment `assignment[k] = s`.
pub fn sum_rate(assignment: &[usize], powers: &PowerAllocation, sigma2: f64) -> Result<f64> {
    let mut total = 0.0;
    for (k, &s) in assignment.iter().enumerate() {
        let p = powers.get(s, k).ok_or_else(|| {
            Error::InvalidArgument(format!("no power for user {k} at BS {s}"))
        })?;
        total += rate(p / sigma2);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_h(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    fn identity_residual(h: &CMat, w: &CMat) -> f64 {
        let n = h.nrows();
        (h * w - CMat::identity(n, n)).norm()
    }

    #[test]
    fn identity_channel() {
        let h = CMat::identity(4, 4);
        let pre = zf_precoder(&h).unwrap();
        assert!((pre.w - CMat::identity(4, 4)).norm() < 1e-14);
    }

    #[test]
    fn scalar_row_inverse() {
        let mut h = CMat::zeros(1, 5);
        h[(0, 0)] = C64::new(2.0, 0.0);
        let w = zf_precoder(&h).unwrap().w;
        assert!((w[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!(w.iter().skip(1).all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn random_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_h(4, 8, &mut rng);
        let w = zf_precoder(&h).unwrap().w;
        assert!(identity_residual(&h, &w) < 1e-8);
    }

    #[test]
    fn rank_deficient_rejected() {
        let row = CMat::from_row_slice(1, 3, &[C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(2.0, 0.0)]);
        let h = CMat::from_fn(2, 3, |_, j| row[(0, j)]);
        match zf_precoder(&h) {
            Err(Error::RankDeficient { rows: 2, rank: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(zf_precoder(&random_h(4, 3, &mut ChaCha8Rng::seed_from_u64(1))).is_err());
    }

    #[test]
    fn zf_sinr_is_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_h(3, 6, &mut rng);
        let w = zf_precoder(&h).unwrap().w;
        let p = [0.3, 1.7, 0.0];
        let sigma2 = 0.01;
        for k in 0..3 {
            let g = sinr(&h, &w, &p, k, sigma2);
            let expect = p[k] / sigma2;
            assert!((g - expect).abs() <= 1e-6 * expect.max(1e-300));
        }
        assert_eq!(sinr(&h, &w, &p, 2, sigma2), 0.0);
    }

    #[test]
    fn single_user_sinr() {
        let h = CMat::from_row_slice(1, 2, &[C64::new(1.0, 1.0), C64::new(0.5, 0.0)]);
        let w = CMat::from_column_slice(2, 1, &[C64::new(0.2, 0.0), C64::new(0.0, -0.4)]);
        let hw = (&h * &w)[(0, 0)].norm_sqr();
        assert_eq!(sinr(&h, &w, &[2.0], 0, 0.5), 2.0 * hw / 0.5);
    }

    #[test]
    fn rate_values() {
        assert_eq!(rate(0.0), 0.0);
        assert_eq!(rate(1.0), 1.0);
        assert_eq!(rate(3.0), 2.0);
    }

    #[test]
    fn transmit_power_cases() {
        let p = [0.5, 1.5, 2.0];
        let i3 = CMat::identity(3, 3);
        assert!((transmit_power(&i3, &p).unwrap() - 4.0).abs() < 1e-14);
        let two = i3.scale(2.0);
        assert!((transmit_power(&two, &p).unwrap() - 1.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_h(3, 7, &mut rng);
        let c = zf_costs(&h).unwrap();
        let expect: f64 = p.iter().zip(&c).map(|(a, b)| a * b).sum();
        assert!((transmit_power(&h, &p).unwrap() - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn sum_rate_cases() {
        let sigma2 = 1e-9;
        let mut pa = PowerAllocation::new(2);
        for k in 0..4 {
            pa.set(k % 2, k, sigma2);
        }
        let assignment = [0, 1, 0, 1];
        assert!((sum_rate(&assignment, &pa, sigma2).unwrap() - 4.0).abs() < 1e-12);
        let mut one = PowerAllocation::new(1);
        one.set(0, 0, 3.0 * sigma2);
        assert!((sum_rate(&[0], &one, sigma2).unwrap() - 2.0).abs() < 1e-12);
        assert!(sum_rate(&[1, 1, 0, 1], &pa, sigma2).is_err());
    }

    #[test]
    fn sum_rate_matches_general_sinr() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = random_h(4, 8, &mut rng);
        let w = zf_precoder(&h).unwrap().w;
        let p: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        let sigma2 = 0.05;
        let mut pa = PowerAllocation::new(1);
        for (k, &pk) in p.iter().enumerate() {
            pa.set(0, k, pk);
        }
        let general: f64 = (0..4).map(|k| rate(sinr(&h, &w, &p, k, sigma2))).sum();
        let fast = sum_rate(&[0; 4], &pa, sigma2).unwrap();
        assert!((general - fast).abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        fn arb_case() -> impl Strategy<Value = (CMat, Vec<f64>)> {
            (1usize..5, 0usize..4, any::<u64>()).prop_map(|(k, extra, seed)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let h = random_h(k, k + extra, &mut rng);
                let p = (0..k).map(|_| rng.random::<f64>() * 2.0).collect();
                (h, p)
            })
        }

        proptest! {
            #[test]
            fn zf_suppresses_interference((h, p) in arb_case()) {
                let w = zf_precoder(&h).unwrap().w;
                for k in 0..h.nrows() {
                    for (j, &pj) in p.iter().enumerate() {
                        if j != k {
                            let leak = pj * (h.row(k) * w.column(j))[(0, 0)].norm_sqr();
                            prop_assert!(leak < 1e-12 * pj.max(1e-300) + 1e-300);
                        }
                    }
                }
            }

            #[test]
            fn transmit_power_is_linear((h, p) in arb_case(), alpha in 0.0f64..10.0) {
                let base = transmit_power(&h, &p).unwrap();
                let scaled: Vec<f64> = p.iter().map(|x| alpha * x).collect();
                let s = transmit_power(&h, &scaled).unwrap();
                prop_assert!((s - alpha * base).abs() <= 1e-10 * (1.0 + alpha * base));
            }

            #[test]
            fn sum_rate_monotone(p in proptest::collection::vec(0.0f64..5.0, 1..8), idx in 0usize..8, bump in 0.0f64..3.0) {
                let sigma2 = 0.1;
                let mut pa = PowerAllocation::new(1);
                for (k, &pk) in p.iter().enumerate() { pa.set(0, k, pk); }
                let assignment = vec![0; p.len()];
                let before = sum_rate(&assignment, &pa, sigma2).unwrap();
                let k = idx % p.len();
                pa.set(0, k, p[k] + bump);
                let after = sum_rate(&assignment, &pa, sigma2).unwrap();
                prop_assert!(after >= before);
            }
        }
    }
}
