//! Channel realizations, path loss and link budgets.
//!
//! A [`Drop`] is one independent Monte-Carlo realization of the three
//! Rayleigh channels (PBS→PUE, MBS→MUE, MBS→PUE) together with the link
//! budget and the MBS precoders that create the interference seen by the
//! PUE. Randomness comes from a counter-based ChaCha stream keyed by
//! `(master_seed, point_index)` with the drop index as stream id, so any drop
//! can be regenerated in isolation and parallel workers reproduce the serial
//! sequence bit for bit.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{svd, CMat, CVec, C64};

/// Antenna counts at the four nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Antennas {
    /// PBS transmit antennas.
    pub n_t0: usize,
    /// PUE receive antennas.
    pub n_r0: usize,
    /// MBS transmit antennas.
    pub n_t1: usize,
    /// MUE receive antennas; only shapes the MBS precoders.
    pub n_r1: usize,
}

impl Antennas {
    /// Antenna set with the MUE mirroring the MBS (`n_r1 = n_t1`).
    pub fn new(n_t0: usize, n_t1: usize, n_r0: usize) -> Self {
        Antennas {
            n_t0,
            n_r0,
            n_t1,
            n_r1: n_t1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r0 < 2 {
            return Err(Error::domain("PUE needs at least 2 receive antennas"));
        }
        if self.n_t0 < self.n_r0 {
            return Err(Error::domain(format!(
                "PBS antennas ({}) must not be fewer than PUE antennas ({})",
                self.n_t0, self.n_r0
            )));
        }
        if self.n_t1 < 2 || self.n_r1 < 1 || self.n_r1 > self.n_t1 {
            return Err(Error::domain(format!(
                "MBS/MUE antennas ({}, {}) need n_t1 >= 2 and 1 <= n_r1 <= n_t1",
                self.n_t1, self.n_r1
            )));
        }
        Ok(())
    }
}

impl Default for Antennas {
    fn default() -> Self {
        Antennas::new(2, 2, 2)
    }
}

/// Physical deployment of one PBS/PUE pair inside a macrocell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub n_t0: usize,
    pub n_t1: usize,
    pub n_r0: usize,
    pub p0_dbm: f64,
    pub p1_dbm: f64,
    /// PBS→PUE distance in meters.
    pub eta0_m: f64,
    /// MBS→PUE distance in meters.
    pub eta10_m: f64,
    /// Picocell radius in meters.
    pub d_m: f64,
    /// Macrocell radius in meters.
    pub big_d_m: f64,
}

impl Deployment {
    /// 300 m picocell inside a 3000 m macrocell, 23 dBm PBS and 46 dBm MBS,
    /// 2x2x2 antennas.
    pub fn reference(eta0_m: f64, eta10_m: f64) -> Self {
        Deployment {
            n_t0: 2,
            n_t1: 2,
            n_r0: 2,
            p0_dbm: 23.0,
            p1_dbm: 46.0,
            eta0_m,
            eta10_m,
            d_m: 300.0,
            big_d_m: 3000.0,
        }
    }

    pub fn antennas(&self) -> Antennas {
        Antennas::new(self.n_t0, self.n_t1, self.n_r0)
    }

    pub fn validate(&self) -> Result<()> {
        self.antennas().validate()?;
        if !(self.eta0_m > 0.0 && self.eta0_m <= self.d_m) {
            return Err(Error::domain(format!(
                "PBS distance {} m outside (0, {}]",
                self.eta0_m, self.d_m
            )));
        }
        if !(self.eta10_m > 0.0 && self.eta10_m <= self.big_d_m) {
            return Err(Error::domain(format!(
                "MBS distance {} m outside (0, {}]",
                self.eta10_m, self.big_d_m
            )));
        }
        if !self.p0_dbm.is_finite() || !self.p1_dbm.is_finite() {
            return Err(Error::domain("transmit powers must be finite"));
        }
        Ok(())
    }
}

/// Effective (path-loss included) powers and noise at the PUE.
///
/// In normalized mode all three are dimensionless with `sigma2 = 1`; in
/// deployment mode they are in milliwatts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub p0e: f64,
    pub p1e: f64,
    pub sigma2: f64,
    /// `10 log10(p1e / sigma2)`.
    pub gamma_bar_db: f64,
    /// `p0e / p1e`.
    pub xi: f64,
}

impl LinkBudget {
    pub fn from_powers(p0e: f64, p1e: f64, sigma2: f64) -> Result<Self> {
        if !(p0e > 0.0 && p1e > 0.0 && sigma2 > 0.0)
            || !(p0e.is_finite() && p1e.is_finite() && sigma2.is_finite())
        {
            return Err(Error::domain(format!(
                "link powers must be positive and finite (p0e={p0e}, p1e={p1e}, sigma2={sigma2})"
            )));
        }
        Ok(LinkBudget {
            p0e,
            p1e,
            sigma2,
            gamma_bar_db: 10.0 * (p1e / sigma2).log10(),
            xi: p0e / p1e,
        })
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Macro path loss `128.1 + 37.6 log10(d / 1000)` in dB.
pub fn path_loss_mbs(eta10_m: f64) -> Result<f64> {
    if !(eta10_m > 0.0) || !eta10_m.is_finite() {
        return Err(Error::domain(format!("MBS distance must be positive, got {eta10_m}")));
    }
    Ok(128.1 + 37.6 * (eta10_m / 1e3).log10())
}

/// Pico path loss `38 + 30 log10(d)` in dB.
pub fn path_loss_pbs(eta0_m: f64) -> Result<f64> {
    if !(eta0_m > 0.0) || !eta0_m.is_finite() {
        return Err(Error::domain(format!("PBS distance must be positive, got {eta0_m}")));
    }
    Ok(38.0 + 30.0 * eta0_m.log10())
}

pub fn budget_from_deployment(dep: &Deployment, sigma2_dbm: f64) -> Result<LinkBudget> {
    dep.validate()?;
    let p0e = dbm_to_mw(dep.p0_dbm - path_loss_pbs(dep.eta0_m)?);
    let p1e = dbm_to_mw(dep.p1_dbm - path_loss_mbs(dep.eta10_m)?);
    LinkBudget::from_powers(p0e, p1e, dbm_to_mw(sigma2_dbm))
}

/// Noise-normalized budget: `sigma2 = 1`, `p1e = 10^(γ̄/10)`, `p0e = ξ p1e`.
pub fn budget_normalized(gamma_bar_db: f64, xi: f64) -> Result<LinkBudget> {
    if !(xi > 0.0) || !xi.is_finite() || !gamma_bar_db.is_finite() {
        return Err(Error::domain(format!(
            "need finite gamma_bar_db and xi > 0 (got {gamma_bar_db}, {xi})"
        )));
    }
    let p1e = 10f64.powf(gamma_bar_db / 10.0);
    let mut b = LinkBudget::from_powers(xi * p1e, p1e, 1.0)?;
    // keep the requested values verbatim rather than their round trip
    b.gamma_bar_db = gamma_bar_db;
    b.xi = xi;
    Ok(b)
}

/// Reproducibility token of one drop: `(master_seed, point, drop)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DropSeed {
    pub master: u64,
    pub point: u64,
    pub drop: u64,
}

impl DropSeed {
    pub fn new(master: u64, point: u64, drop: u64) -> Self {
        DropSeed {
            master,
            point,
            drop,
        }
    }

    /// ChaCha8 stream keyed by `(master, point)` and selected by `drop`.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.master ^ self.point.wrapping_mul(0xD1B5_4A32_D192_ED03);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.drop);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// i.i.d. CN(0, 1) matrix: real and imaginary parts each N(0, 1/2).
pub fn rayleigh<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<CMat> {
    if rows == 0 || cols == 0 {
        return Err(Error::domain("channel dimensions must be positive"));
    }
    let entries: Vec<C64> = (0..rows * cols)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
        })
        .collect();
    CMat::from_row_slice(rows, cols, &entries)
}

/// How the MBS divides its power across its streams.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum MbsPowerSplit {
    #[default]
    Equal,
    /// Fractions of `p1e`; normalized internally.
    Weights(Vec<f64>),
}

/// Shape of the drops to generate.
#[derive(Debug, Clone, PartialEq)]
pub struct DropSpec {
    pub antennas: Antennas,
    /// Number of MBS streams, i.e. interferences at the PUE.
    pub n_streams_mbs: usize,
    pub mbs_split: MbsPowerSplit,
}

impl DropSpec {
    pub fn new(antennas: Antennas, n_streams_mbs: usize) -> Self {
        DropSpec {
            antennas,
            n_streams_mbs,
            mbs_split: MbsPowerSplit::Equal,
        }
    }

    fn shares(&self) -> Result<Vec<f64>> {
        let n = self.n_streams_mbs;
        match &self.mbs_split {
            MbsPowerSplit::Equal => Ok(vec![1.0 / n as f64; n]),
            MbsPowerSplit::Weights(w) => {
                let total: f64 = w.iter().sum();
                if w.len() != n || w.iter().any(|&x| !(x >= 0.0)) || !(total > 0.0) {
                    return Err(Error::domain(format!(
                        "MBS power weights must be {n} nonnegative values with positive sum"
                    )));
                }
                Ok(w.iter().map(|x| x / total).collect())
            }
        }
    }
}

/// One channel realization plus the budget it is evaluated under.
#[derive(Debug, Clone, PartialEq)]
pub struct Drop {
    /// PBS→PUE, `n_r0 x n_t0`.
    pub h0: CMat,
    /// MBS→MUE, `n_r1 x n_t1`.
    pub h1: CMat,
    /// MBS→PUE, `n_r0 x n_t1`.
    pub h10: CMat,
    pub budget: LinkBudget,
    /// Unit-norm MBS precoders, the leading right singular vectors of `h1`.
    pub mbs_precoders: Vec<CVec>,
    /// Effective per-stream MBS powers; they sum to `budget.p1e`.
    pub mbs_stream_powers: Vec<f64>,
    pub seed: DropSeed,
}

impl Drop {
    pub fn n_interferences(&self) -> usize {
        self.mbs_precoders.len()
    }

    /// Unit-power interference direction `h10 p_{1,n}` at the PUE.
    pub fn interference_direction(&self, n: usize) -> Result<CVec> {
        self.h10.mul_vec(&self.mbs_precoders[n])
    }

    /// Fraction of `p1e` carried by each MBS stream.
    pub fn mbs_shares(&self) -> Vec<f64> {
        self.mbs_stream_powers
            .iter()
            .map(|p| p / self.budget.p1e)
            .collect()
    }

    /// Same channels under a different budget; stream shares are preserved.
    pub fn with_budget(&self, budget: LinkBudget) -> Drop {
        let shares = self.mbs_shares();
        Drop {
            budget,
            mbs_stream_powers: shares.iter().map(|s| s * budget.p1e).collect(),
            ..self.clone()
        }
    }
}

pub fn make_drop(budget: &LinkBudget, spec: &DropSpec, seed: DropSeed) -> Result<Drop> {
    let a = spec.antennas;
    a.validate()?;
    let n = spec.n_streams_mbs;
    if n == 0 || n > a.n_t1.min(a.n_r1) {
        return Err(Error::domain(format!(
            "MBS streams must be in 1..={}, got {n}",
            a.n_t1.min(a.n_r1)
        )));
    }
    let shares = spec.shares()?;

    let mut rng = seed.rng();
    let h0 = rayleigh(a.n_r0, a.n_t0, &mut rng)?;
    let h1 = rayleigh(a.n_r1, a.n_t1, &mut rng)?;
    let h10 = rayleigh(a.n_r0, a.n_t1, &mut rng)?;

    let mbs = svd(&h1)?;
    let mbs_precoders = (0..n).map(|k| mbs.v_col(k)).collect();

    Ok(Drop {
        h0,
        h1,
        h10,
        budget: *budget,
        mbs_precoders,
        mbs_stream_powers: shares.iter().map(|s| s * budget.p1e).collect(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::inner;

    #[test]
    fn path_loss_reference_points() {
        assert_eq!(path_loss_pbs(1.0).unwrap(), 38.0);
        assert!((path_loss_mbs(1000.0).unwrap() - 128.1).abs() < 1e-12);
        assert!(path_loss_pbs(0.0).is_err());
        assert!(path_loss_mbs(-3.0).is_err());
    }

    #[test]
    fn path_loss_monotone_in_distance() {
        let d = [1.0, 10.0, 50.0, 120.0, 300.0];
        for w in d.windows(2) {
            assert!(path_loss_pbs(w[1]).unwrap() > path_loss_pbs(w[0]).unwrap());
            assert!(path_loss_mbs(w[1] * 10.0).unwrap() > path_loss_mbs(w[0] * 10.0).unwrap());
        }
    }

    #[test]
    fn deployment_budget_direct_formula() {
        let mut dep = Deployment::reference(1.0, 1000.0);
        let b = budget_from_deployment(&dep, -100.0).unwrap();
        assert!((b.p0e - 10f64.powf((23.0 - 38.0) / 10.0)).abs() < 1e-15);
        assert!((b.p1e - 10f64.powf((46.0 - 128.1) / 10.0)).abs() < 1e-18);

        dep.p0_dbm += 10.0 * 2f64.log10();
        let b2 = budget_from_deployment(&dep, -100.0).unwrap();
        assert!((b2.p0e / b.p0e - 2.0).abs() < 1e-12);
    }

    #[test]
    fn deployment_rejects_out_of_cell_distances() {
        assert!(budget_from_deployment(&Deployment::reference(301.0, 100.0), -100.0).is_err());
        assert!(budget_from_deployment(&Deployment::reference(10.0, 3001.0), -100.0).is_err());
        let mut dep = Deployment::reference(10.0, 100.0);
        dep.n_r0 = 1;
        assert!(budget_from_deployment(&dep, -100.0).is_err());
    }

    #[test]
    fn normalized_budget_values() {
        let b = budget_normalized(0.0, 1.0).unwrap();
        assert_eq!((b.p0e, b.p1e, b.sigma2), (1.0, 1.0, 1.0));

        let b = budget_normalized(5.0, 100.0).unwrap();
        assert!((b.p1e - 3.162_277_660_168_38).abs() < 1e-12);
        assert!((b.p0e - 316.227_766_016_838).abs() < 1e-9);

        let r = LinkBudget::from_powers(b.p0e, b.p1e, b.sigma2).unwrap();
        assert!((r.gamma_bar_db - 5.0).abs() < 1e-9);
        assert!((r.xi - 100.0).abs() < 1e-9 * 100.0);

        assert!(budget_normalized(5.0, 0.0).is_err());
    }

    #[test]
    fn rayleigh_is_deterministic_per_seed() {
        let s = DropSeed::new(9, 1, 2);
        let a = rayleigh(3, 2, &mut s.rng()).unwrap();
        let b = rayleigh(3, 2, &mut s.rng()).unwrap();
        assert_eq!(a, b);
        let c = rayleigh(3, 2, &mut DropSeed::new(9, 1, 3).rng()).unwrap();
        assert_ne!(a, c);
        assert!(rayleigh(0, 2, &mut s.rng()).is_err());
    }

    #[test]
    fn drop_structure_and_equal_split() {
        let b = budget_normalized(5.0, 1.0).unwrap();
        let spec = DropSpec::new(Antennas::new(2, 3, 2), 2);
        let d = make_drop(&b, &spec, DropSeed::new(1, 0, 0)).unwrap();
        assert_eq!((d.h0.rows(), d.h0.cols()), (2, 2));
        assert_eq!((d.h1.rows(), d.h1.cols()), (3, 3));
        assert_eq!((d.h10.rows(), d.h10.cols()), (2, 3));
        assert_eq!(d.mbs_stream_powers, vec![b.p1e / 2.0; 2]);
        for p in &d.mbs_precoders {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
        let cross = inner(&d.mbs_precoders[0], &d.mbs_precoders[1]).unwrap();
        assert!(cross.norm() < 1e-12);

        let again = make_drop(&b, &spec, DropSeed::new(1, 0, 0)).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn drop_rejects_too_many_streams() {
        let b = budget_normalized(0.0, 1.0).unwrap();
        let spec = DropSpec::new(Antennas::default(), 3);
        assert!(make_drop(&b, &spec, DropSeed::new(0, 0, 0)).is_err());
    }

    #[test]
    fn weighted_split_sums_to_p1e() {
        let b = budget_normalized(10.0, 1.0).unwrap();
        let mut spec = DropSpec::new(Antennas::default(), 2);
        spec.mbs_split = MbsPowerSplit::Weights(vec![3.0, 1.0]);
        let d = make_drop(&b, &spec, DropSeed::new(4, 0, 0)).unwrap();
        let total: f64 = d.mbs_stream_powers.iter().sum();
        assert!((total - b.p1e).abs() <= 1e-9 * b.p1e);
        assert!((d.mbs_stream_powers[0] - 0.75 * b.p1e).abs() < 1e-12);
    }

    #[test]
    fn with_budget_rescales_streams() {
        let b = budget_normalized(0.0, 1.0).unwrap();
        let d = make_drop(&b, &DropSpec::new(Antennas::default(), 2), DropSeed::new(2, 0, 0))
            .unwrap();
        let b2 = budget_normalized(20.0, 10.0).unwrap();
        let d2 = d.with_budget(b2);
        assert_eq!(d2.h0, d.h0);
        assert!((d2.mbs_stream_powers.iter().sum::<f64>() - b2.p1e).abs() < 1e-9 * b2.p1e);
    }
}
