//! Independent oracles shared by the integration tests.
//!
//! These rebuild the received signal vector by vector (transmit precoders,
//! steering signals, channel products, receive filter) instead of using the
//! scalar shortcuts in the library.

#![allow(dead_code)]

use steersim::channel::{budget_normalized, make_drop, Antennas, Drop, DropSeed, DropSpec};
use steersim::numkit::{inner, pinv, projector, svd, CVec};

pub fn drop_at(master: u64, d: u64, gamma: f64, xi: f64, antennas: Antennas, n: usize) -> Drop {
    let b = budget_normalized(gamma, xi).unwrap();
    make_drop(&b, &DropSpec::new(antennas, n), DropSeed::new(master, 0, d)).unwrap()
}

pub fn default_drop(master: u64, d: u64, gamma: f64, xi: f64) -> Drop {
    drop_at(master, d, gamma, xi, Antennas::default(), 1)
}

/// Post-filter powers of one stream after explicit assembly.
#[derive(Debug, Clone, Copy)]
pub struct Assembled {
    pub desired: f64,
    pub interference: f64,
    pub sigma2: f64,
    pub overhead: f64,
}

impl Assembled {
    pub fn se(&self) -> f64 {
        (1.0 + self.desired / (self.sigma2 + self.interference)).log2()
    }
}

/// Single PBS stream on the principal eigenmode; MBS stream `n` is steered
/// by `rho[n]`. Every MBS symbol is independent, so interference powers add.
pub fn assemble_single_stream(d: &Drop, rho: &[f64]) -> Assembled {
    let dec = svd(&d.h0).unwrap();
    let (p0, f0) = (dec.v_col(0), dec.u_col(0));
    let arrival = d.h0.mul_vec(&p0).unwrap();
    let proj = projector(&arrival.normalized().unwrap()).unwrap();
    let h0_pinv = pinv(&d.h0).unwrap();

    let mut overhead = 0.0;
    let mut interference = 0.0;
    for (n, &r) in rho.iter().enumerate() {
        let p1n = d.mbs_stream_powers[n];
        let i_vec = d.h10.mul_vec(&d.mbs_precoders[n]).unwrap().scale_real(p1n.sqrt());
        let steer_tx = h0_pinv
            .mul_vec(&proj.mul_vec(&i_vec).unwrap())
            .unwrap()
            .scale_real(-r);
        overhead += steer_tx.norm_sqr();
        let received = &i_vec + &d.h0.mul_vec(&steer_tx).unwrap();
        interference += inner(&f0, &received).unwrap().norm_sqr();
    }
    let desired_amp = inner(&f0, &arrival).unwrap().norm_sqr();
    Assembled {
        desired: desired_amp * (d.budget.p0e - overhead),
        interference,
        sigma2: d.budget.sigma2,
        overhead,
    }
}

/// `powers.len()` PBS streams on the leading eigenmodes, one MBS stream,
/// stream `m` steering it by `rho[m]` out of its own power.
pub fn assemble_multi_stream(d: &Drop, powers: &[f64], rho: &[f64]) -> Vec<Assembled> {
    let dec = svd(&d.h0).unwrap();
    let h0_pinv = pinv(&d.h0).unwrap();
    let m_count = powers.len();
    let i_vec = d
        .h10
        .mul_vec(&d.mbs_precoders[0])
        .unwrap()
        .scale_real(d.mbs_stream_powers[0].sqrt());

    let mut arrivals = Vec::new();
    let mut steer_rx: Vec<CVec> = Vec::new();
    let mut overheads = Vec::new();
    for m in 0..m_count {
        let arrival = d.h0.mul_vec(&dec.v_col(m)).unwrap();
        let proj = projector(&arrival.normalized().unwrap()).unwrap();
        let steer_tx = h0_pinv
            .mul_vec(&proj.mul_vec(&i_vec).unwrap())
            .unwrap()
            .scale_real(-rho[m]);
        overheads.push(steer_tx.norm_sqr());
        steer_rx.push(d.h0.mul_vec(&steer_tx).unwrap());
        arrivals.push(arrival);
    }
    // all steering signals carry the MBS symbol, so they add coherently to it
    let mut total_interference = i_vec.clone();
    for s in &steer_rx {
        total_interference = &total_interference + s;
    }
    (0..m_count)
        .map(|m| {
            let f = dec.u_col(m);
            let tx_power = |k: usize| powers[k] - overheads[k];
            let desired = inner(&f, &arrivals[m]).unwrap().norm_sqr() * tx_power(m);
            let cross: f64 = (0..m_count)
                .filter(|&k| k != m)
                .map(|k| inner(&f, &arrivals[k]).unwrap().norm_sqr() * tx_power(k))
                .sum();
            Assembled {
                desired,
                interference: cross + inner(&f, &total_interference).unwrap().norm_sqr(),
                sigma2: d.budget.sigma2,
                overhead: overheads[m],
            }
        })
        .collect()
}

/// Explicit SINR of single-interference steering by `rho`.
pub fn explicit_sinr(d: &Drop, rho: f64) -> f64 {
    let a = assemble_single_stream(d, &[rho]);
    a.desired / (a.sigma2 + a.interference)
}

/// Argmax of `f` over `{0, step, 2 step, …} ∪ {hi}` within `[0, hi]`.
pub fn grid_argmax(hi: f64, step: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = (hi / step).floor() as usize;
    let mut best = (0.0, f(0.0));
    for i in 1..=n + 1 {
        let r = (i as f64 * step).min(hi);
        let v = f(r);
        if v > best.1 {
            best = (r, v);
        }
    }
    best.0
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean.
pub fn stderr(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Scalars of single-interference steering taken from explicit vectors, so
/// that `φ(ρ)` can be evaluated cheaply on dense grids.
#[derive(Debug, Clone, Copy)]
pub struct SteeringOracle {
    pub p0e: f64,
    pub sigma2: f64,
    /// `|f0ᴴ h0 p0|²`.
    pub gain2: f64,
    /// `f0ᴴ i`, the unsteered post-filter interference amplitude.
    pub total: steersim::numkit::C64,
    /// `f0ᴴ h0 t(1)`, the post-filter amplitude of the unit steering signal.
    pub steer: steersim::numkit::C64,
    /// `‖t(1)‖²`, the transmit power of full steering.
    pub full_power: f64,
}

impl SteeringOracle {
    pub fn new(d: &Drop) -> Self {
        let dec = svd(&d.h0).unwrap();
        let (p0, f0) = (dec.v_col(0), dec.u_col(0));
        let arrival = d.h0.mul_vec(&p0).unwrap();
        let proj = projector(&arrival.normalized().unwrap()).unwrap();
        let i_vec = d
            .h10
            .mul_vec(&d.mbs_precoders[0])
            .unwrap()
            .scale_real(d.mbs_stream_powers[0].sqrt());
        let t = pinv(&d.h0)
            .unwrap()
            .mul_vec(&proj.mul_vec(&i_vec).unwrap())
            .unwrap()
            .scale_real(-1.0);
        SteeringOracle {
            p0e: d.budget.p0e,
            sigma2: d.budget.sigma2,
            gain2: inner(&f0, &arrival).unwrap().norm_sqr(),
            total: inner(&f0, &i_vec).unwrap(),
            steer: inner(&f0, &d.h0.mul_vec(&t).unwrap()).unwrap(),
            full_power: t.norm_sqr(),
        }
    }

    pub fn sinr(&self, rho: f64) -> f64 {
        let desired = (self.p0e - rho * rho * self.full_power) * self.gain2;
        let residual = (self.total + self.steer * rho).norm_sqr();
        desired / (self.sigma2 + residual)
    }

    /// Largest ρ whose steering power fits in `p0e`.
    pub fn rho_max(&self) -> f64 {
        if self.full_power == 0.0 {
            1.0
        } else {
            (self.p0e / self.full_power).sqrt().min(1.0)
        }
    }
}
