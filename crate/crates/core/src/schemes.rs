//! Interference-management schemes and their SINR/SE evaluation.
//!
//! Everything that depends only on the channel realization (eigenmodes of
//! `h0`, interference directions, in-phase coefficients, neutralization and
//! zero-forcing gains) is computed once in [`LinkGeometry`]. Evaluating a
//! scheme under a particular power budget is then scalar arithmetic, which
//! lets a sweep reuse one realization across many `(γ̄, ξ, ρ)` points.
//!
//! Received-signal conventions: the PBS sends stream `m` on `v_m` (the m-th
//! right singular vector of `h0`), the PUE filters it with `u_m`, and MBS
//! stream `n` arrives as `sqrt(p1n) h_n` with `h_n = h10 p_{1,n}`.

use serde::{Deserialize, Serialize};

use crate::channel::Drop;
use crate::error::{Error, Result};
use crate::numkit::{inner, pinv, projector, span_projector, svd, CMat, CVec, C64};

/// In-phase coefficients with `|chi|² <= DEGENERACY_TOL * ‖h‖²` are treated
/// as exactly zero.
pub const DEGENERACY_TOL: f64 = 1e-15;

/// Zero-forced gains below this fraction of the principal gain count as a
/// fully attenuated desired signal.
const ATTENUATION_TOL: f64 = 1e-24;

/// Relative slack when comparing a power overhead with its budget.
const BUDGET_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Matched filtering, no interference management.
    #[serde(rename = "MF")]
    Mf,
    /// Zero-forcing reception.
    #[serde(rename = "ZF")]
    Zf,
    /// Zero-forcing transmit beamforming.
    #[serde(rename = "ZFBF")]
    Zfbf,
    /// Interference neutralization.
    #[serde(rename = "IN")]
    In,
    /// Orthogonal interference steering (ρ = 1).
    #[serde(rename = "OIS")]
    Ois,
    /// Interference steering with a fixed factor ρ.
    #[serde(rename = "IS_FIXED")]
    IsFixed,
    /// Dynamic interference steering with the optimal factor.
    #[serde(rename = "DIS")]
    Dis,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Mf,
        Scheme::Zf,
        Scheme::Zfbf,
        Scheme::In,
        Scheme::Ois,
        Scheme::IsFixed,
        Scheme::Dis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Mf => "MF",
            Scheme::Zf => "ZF",
            Scheme::Zfbf => "ZFBF",
            Scheme::In => "IN",
            Scheme::Ois => "OIS",
            Scheme::IsFixed => "IS_FIXED",
            Scheme::Dis => "DIS",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        Scheme::ALL.into_iter().find(|sc| sc.name() == key)
    }

    /// Whether the scheme spends PBS power on a steering/neutralizing signal.
    pub fn spends_power(self) -> bool {
        matches!(
            self,
            Scheme::In | Scheme::Ois | Scheme::IsFixed | Scheme::Dis
        )
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What to do when a power-consuming scheme cannot afford its overhead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Fallback {
    #[default]
    #[serde(rename = "MF")]
    Mf,
    #[serde(rename = "ZF")]
    Zf,
}

impl Fallback {
    pub fn parse(s: &str) -> Option<Fallback> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mf" => Some(Fallback::Mf),
            "zf" => Some(Fallback::Zf),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Fallback::Mf => "mf",
            Fallback::Zf => "zf",
        }
    }
}

/// Post-filter powers of one PBS stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamOutcome {
    pub desired_power: f64,
    pub residual_interference: f64,
    pub se_bits: f64,
}

impl StreamOutcome {
    fn new(desired_power: f64, residual_interference: f64, sigma2: f64) -> Self {
        let desired_power = desired_power.max(0.0);
        let residual_interference = residual_interference.max(0.0);
        StreamOutcome {
            desired_power,
            residual_interference,
            se_bits: shannon_se(desired_power, residual_interference, sigma2),
        }
    }
}

/// `log2(1 + desired / (sigma2 + residual))`.
pub fn shannon_se(desired_power: f64, residual_interference: f64, sigma2: f64) -> f64 {
    (1.0 + desired_power / (sigma2 + residual_interference)).log2()
}

/// Outcome of applying one scheme to one drop.
///
/// `desired_power` and `residual_interference` are summed over PBS streams;
/// with a single stream `se_bits` is exactly their Shannon rate, otherwise
/// it is the sum of the per-stream rates in `streams`.
///
/// `power_overhead_e` is what the scheme *requires*. When that exceeds the
/// budget the result is infeasible and the rates come from the fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub feasible: bool,
    /// Steering factor (mean over streams/interferences when there are several).
    pub rho: Option<f64>,
    /// All steering factors, stream-major.
    pub rhos: Vec<f64>,
    pub power_overhead_e: f64,
    pub residual_interference: f64,
    pub desired_power: f64,
    pub se_bits: f64,
    pub fallback_applied: Option<Fallback>,
    /// Zero-forcing removed (numerically) all of some stream's desired signal.
    pub attenuated: bool,
    pub streams: Vec<StreamOutcome>,
}

impl SchemeResult {
    fn from_streams(scheme: Scheme, streams: Vec<StreamOutcome>, overhead: f64) -> Self {
        SchemeResult {
            scheme,
            feasible: true,
            rho: None,
            rhos: Vec::new(),
            power_overhead_e: overhead,
            residual_interference: streams.iter().map(|s| s.residual_interference).sum(),
            desired_power: streams.iter().map(|s| s.desired_power).sum(),
            se_bits: streams.iter().map(|s| s.se_bits).sum(),
            fallback_applied: None,
            attenuated: false,
            streams,
        }
    }

    fn with_rhos(mut self, rhos: Vec<f64>) -> Self {
        if !rhos.is_empty() {
            self.rho = Some(rhos.iter().sum::<f64>() / rhos.len() as f64);
        }
        self.rhos = rhos;
        self
    }

    /// Replaces the rates by those of `fallback`, keeping the identity and
    /// requirements of `self`.
    pub(crate) fn replaced_by(self, fallback: Fallback, fb: SchemeResult) -> SchemeResult {
        SchemeResult {
            residual_interference: fb.residual_interference,
            desired_power: fb.desired_power,
            se_bits: fb.se_bits,
            streams: fb.streams,
            attenuated: fb.attenuated,
            fallback_applied: Some(fallback),
            ..self
        }
    }
}

/// One PBS eigenmode: gain `λ_m`, receive filter `u_m`, precoder `v_m`.
#[derive(Debug, Clone)]
pub struct Eigenmode {
    pub gain: f64,
    pub filter: CVec,
    pub precoder: CVec,
}

/// Zero-forcing receive filter for one stream.
#[derive(Debug, Clone)]
pub struct ZfFilter {
    /// `|fᴴ h0 v_m|²`.
    pub gain2: f64,
    /// `|fᴴ h0 v_m'|²` for every stream `m'` (zero on the diagonal).
    pub stream_leak: Vec<f64>,
    /// `|fᴴ h_n|²` for every interference.
    pub interference_leak: Vec<f64>,
    pub attenuated: bool,
}

/// Transmit zero-forcing beam for a single stream.
#[derive(Debug, Clone)]
pub struct ZfbfBeam {
    pub precoder: CVec,
    pub gain2: f64,
    pub interference_leak: Vec<f64>,
    pub attenuated: bool,
}

/// Budget-independent quantities of one drop.
#[derive(Debug, Clone)]
pub struct LinkGeometry {
    pub modes: Vec<Eigenmode>,
    /// `h_n = h10 p_{1,n}`.
    pub interference: Vec<CVec>,
    /// MBS power share of each interference.
    pub shares: Vec<f64>,
    /// `chi[m][n] = u_mᴴ P_m h_n`.
    pub chi: Vec<Vec<C64>>,
    /// `‖h0⁺ P_m h_n‖²`.
    pub g_norm2: Vec<Vec<f64>>,
    /// `|u_mᴴ h_n|²`, the unsteered post-filter interference.
    pub mf_leak: Vec<Vec<f64>>,
    /// `‖h0⁺ h_n‖²`.
    pub neutralize_norm2: Vec<f64>,
    /// `|u_mᴴ (h_n − h0 h0⁺ h_n)|²`, what neutralization leaves behind.
    pub neutralize_leak: Vec<Vec<f64>>,
    pub zf: Vec<ZfFilter>,
    /// Only built for single-stream geometries.
    pub zfbf: Option<ZfbfBeam>,
}

impl LinkGeometry {
    /// Geometry for `m_streams` PBS streams.
    pub fn new(drop: &Drop, m_streams: usize) -> Result<Self> {
        let h0 = &drop.h0;
        let (n_r0, n_t0) = (h0.rows(), h0.cols());
        if m_streams == 0 || m_streams > n_r0.min(n_t0) {
            return Err(Error::domain(format!(
                "PBS streams must be in 1..={}, got {m_streams}",
                n_r0.min(n_t0)
            )));
        }
        let dec = svd(h0)?;
        let h0_pinv = pinv(h0)?;
        let lambda1 = dec.sigma[0];

        let mut modes = Vec::with_capacity(m_streams);
        for m in 0..m_streams {
            let gain = dec.sigma[m];
            if !(gain > 0.0) || gain <= 1e-12 * lambda1 {
                return Err(Error::domain(format!(
                    "h0 eigenmode {m} is degenerate (gain {gain})"
                )));
            }
            modes.push(Eigenmode {
                gain,
                filter: dec.u_col(m),
                precoder: dec.v_col(m),
            });
        }

        let interference: Vec<CVec> = (0..drop.n_interferences())
            .map(|n| drop.interference_direction(n))
            .collect::<Result<_>>()?;
        let shares = drop.mbs_shares();

        let mut chi = Vec::with_capacity(m_streams);
        let mut g_norm2 = Vec::with_capacity(m_streams);
        let mut mf_leak = Vec::with_capacity(m_streams);
        let mut neutralize_leak = Vec::with_capacity(m_streams);
        for mode in &modes {
            // desired direction at the PUE and its projector
            let desired = h0.mul_vec(&mode.precoder)?.normalized()?;
            let proj = projector(&desired)?;
            let mut chi_row = Vec::new();
            let mut g_row = Vec::new();
            let mut leak_row = Vec::new();
            for h in &interference {
                let in_phase = proj.mul_vec(h)?;
                let c = inner(&mode.filter, &in_phase)?;
                if c.norm_sqr() <= DEGENERACY_TOL * h.norm_sqr() {
                    chi_row.push(C64::new(0.0, 0.0));
                    g_row.push(0.0);
                } else {
                    chi_row.push(c);
                    g_row.push(h0_pinv.mul_vec(&in_phase)?.norm_sqr());
                }
                leak_row.push(inner(&mode.filter, h)?.norm_sqr());
            }
            chi.push(chi_row);
            g_norm2.push(g_row);
            mf_leak.push(leak_row);
        }

        let mut neutralize_norm2 = Vec::new();
        let mut residuals = Vec::new();
        for h in &interference {
            let steer = h0_pinv.mul_vec(h)?;
            neutralize_norm2.push(steer.norm_sqr());
            residuals.push(h - &h0.mul_vec(&steer)?);
        }
        for mode in &modes {
            neutralize_leak.push(
                residuals
                    .iter()
                    .map(|r| inner(&mode.filter, r).map(|z| z.norm_sqr()))
                    .collect::<Result<Vec<_>>>()?,
            );
        }

        let zf = zf_filters(h0, &modes, &interference, lambda1)?;
        let zfbf = if m_streams == 1 {
            Some(zfbf_beam(h0, &interference, lambda1)?)
        } else {
            None
        };

        Ok(LinkGeometry {
            modes,
            interference,
            shares,
            chi,
            g_norm2,
            mf_leak,
            neutralize_norm2,
            neutralize_leak,
            zf,
            zfbf,
        })
    }

    pub fn n_streams(&self) -> usize {
        self.modes.len()
    }

    pub fn n_interferences(&self) -> usize {
        self.interference.len()
    }

    pub fn mf(&self, pw: &Powers) -> SchemeResult {
        let streams = self
            .modes
            .iter()
            .enumerate()
            .map(|(m, mode)| {
                let residual: f64 = self.mf_leak[m]
                    .iter()
                    .zip(&pw.interference)
                    .map(|(l, p)| l * p)
                    .sum();
                StreamOutcome::new(pw.streams[m] * mode.gain.powi(2), residual, pw.sigma2)
            })
            .collect();
        SchemeResult::from_streams(Scheme::Mf, streams, 0.0)
    }

    pub fn zf(&self, pw: &Powers) -> SchemeResult {
        let streams = self
            .zf
            .iter()
            .enumerate()
            .map(|(m, f)| {
                let from_mbs: f64 = f
                    .interference_leak
                    .iter()
                    .zip(&pw.interference)
                    .map(|(l, p)| l * p)
                    .sum();
                let from_pbs: f64 = f.stream_leak.iter().zip(&pw.streams).map(|(l, p)| l * p).sum();
                StreamOutcome::new(pw.streams[m] * f.gain2, from_mbs + from_pbs, pw.sigma2)
            })
            .collect();
        let mut r = SchemeResult::from_streams(Scheme::Zf, streams, 0.0);
        r.attenuated = self.zf.iter().any(|f| f.attenuated);
        r
    }

    pub fn zfbf(&self, pw: &Powers, fallback: Fallback) -> Result<SchemeResult> {
        let beam = self
            .zfbf
            .as_ref()
            .ok_or_else(|| Error::domain("ZFBF is only defined for a single PBS stream"))?;
        let residual: f64 = beam
            .interference_leak
            .iter()
            .zip(&pw.interference)
            .map(|(l, p)| l * p)
            .sum();
        let stream = StreamOutcome::new(pw.p0e * beam.gain2, residual, pw.sigma2);
        let r = SchemeResult::from_streams(Scheme::Zfbf, vec![stream], 0.0);
        if beam.attenuated {
            let mut r = r;
            r.feasible = false;
            r.attenuated = true;
            return Ok(self.fall_back(r, pw, fallback));
        }
        Ok(r)
    }

    /// Interference neutralization: the PBS cancels every interference vector
    /// in full, spending `Σ p1n ‖h0⁺ h_n‖²` of its power.
    pub fn neutralize(&self, pw: &Powers, fallback: Fallback) -> SchemeResult {
        let overhead: f64 = self
            .neutralize_norm2
            .iter()
            .zip(&pw.interference)
            .map(|(g, p)| g * p)
            .sum();
        let feasible = overhead <= pw.p0e * (1.0 + BUDGET_SLACK);
        let remaining = if feasible { 1.0 - overhead / pw.p0e } else { 0.0 };
        let streams = self
            .modes
            .iter()
            .enumerate()
            .map(|(m, mode)| {
                let residual: f64 = self.neutralize_leak[m]
                    .iter()
                    .zip(&pw.interference)
                    .map(|(l, p)| l * p)
                    .sum();
                StreamOutcome::new(
                    pw.streams[m] * remaining * mode.gain.powi(2),
                    residual,
                    pw.sigma2,
                )
            })
            .collect();
        let mut r = SchemeResult::from_streams(Scheme::In, streams, overhead);
        if !feasible {
            r.feasible = false;
            r = self.fall_back(r, pw, fallback);
        }
        r
    }

    /// Steering with factor `rho[m][n]` for interference `n` on stream `m`.
    ///
    /// Each steering signal cancels `rho` of the in-phase component; its
    /// power `rho² p1n ‖g‖²` comes out of the stream's own budget.
    pub fn steer(
        &self,
        pw: &Powers,
        rho: &[Vec<f64>],
        scheme: Scheme,
        fallback: Fallback,
    ) -> Result<SchemeResult> {
        if rho.len() != self.n_streams() || rho.iter().any(|r| r.len() != self.n_interferences()) {
            return Err(Error::domain("steering factors must be a streams x interferences table"));
        }
        if rho.iter().flatten().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(Error::domain("steering factors must lie in [0, 1]"));
        }
        let mut feasible = true;
        let mut total_overhead = 0.0;
        let mut streams = Vec::with_capacity(self.n_streams());
        for (m, mode) in self.modes.iter().enumerate() {
            let mut overhead = 0.0;
            let mut residual = 0.0;
            for n in 0..self.n_interferences() {
                let r = rho[m][n];
                let p1n = pw.interference[n];
                overhead += r * r * p1n * self.g_norm2[m][n];
                residual += p1n * (1.0 - r).powi(2) * self.chi[m][n].norm_sqr();
            }
            if overhead > pw.streams[m] * (1.0 + BUDGET_SLACK) {
                feasible = false;
            }
            total_overhead += overhead;
            streams.push(StreamOutcome::new(
                (pw.streams[m] - overhead) * mode.gain.powi(2),
                residual,
                pw.sigma2,
            ));
        }
        let rhos: Vec<f64> = rho.iter().flatten().copied().collect();
        let mut r = SchemeResult::from_streams(scheme, streams, total_overhead).with_rhos(rhos);
        if scheme == Scheme::Ois {
            r.rho = None;
        }
        if !feasible {
            r.feasible = false;
            r = self.fall_back(r, pw, fallback);
        }
        Ok(r)
    }

    pub fn ois(&self, pw: &Powers, fallback: Fallback) -> SchemeResult {
        let rho = vec![vec![1.0; self.n_interferences()]; self.n_streams()];
        self.steer(pw, &rho, Scheme::Ois, fallback)
            .expect("unit steering table is well formed")
    }

    pub fn is_fixed(&self, pw: &Powers, rho: f64, fallback: Fallback) -> Result<SchemeResult> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::domain(format!("fixed steering factor must be in (0, 1], got {rho}")));
        }
        let table = vec![vec![rho; self.n_interferences()]; self.n_streams()];
        self.steer(pw, &table, Scheme::IsFixed, fallback)
    }

    pub fn fallback(&self, pw: &Powers, fallback: Fallback) -> SchemeResult {
        match fallback {
            Fallback::Mf => self.mf(pw),
            Fallback::Zf => self.zf(pw),
        }
    }

    pub(crate) fn fall_back(&self, r: SchemeResult, pw: &Powers, fallback: Fallback) -> SchemeResult {
        r.replaced_by(fallback, self.fallback(pw, fallback))
    }
}

fn zf_filters(h0: &CMat, modes: &[Eigenmode], interference: &[CVec], lambda1: f64) -> Result<Vec<ZfFilter>> {
    let n_r0 = h0.rows();
    let null = &CMat::identity(n_r0) - &span_projector(n_r0, interference)?;
    let arrivals: Vec<CVec> = modes
        .iter()
        .map(|m| h0.mul_vec(&m.precoder))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(modes.len());
    for (m, mode) in modes.iter().enumerate() {
        let w = null.mul_vec(&mode.filter)?;
        if w.norm_sqr() <= ATTENUATION_TOL {
            out.push(ZfFilter {
                gain2: 0.0,
                stream_leak: vec![0.0; modes.len()],
                interference_leak: vec![0.0; interference.len()],
                attenuated: true,
            });
            continue;
        }
        let f = w.normalized()?;
        let gain2 = inner(&f, &arrivals[m])?.norm_sqr();
        let stream_leak = arrivals
            .iter()
            .enumerate()
            .map(|(k, a)| {
                if k == m {
                    Ok(0.0)
                } else {
                    inner(&f, a).map(|z| z.norm_sqr())
                }
            })
            .collect::<Result<_>>()?;
        let interference_leak = interference
            .iter()
            .map(|h| inner(&f, h).map(|z| z.norm_sqr()))
            .collect::<Result<_>>()?;
        out.push(ZfFilter {
            gain2,
            stream_leak,
            interference_leak,
            attenuated: gain2 <= ATTENUATION_TOL * lambda1 * lambda1,
        });
    }
    Ok(out)
}

/// Best PBS beam whose received image is orthogonal to every interference:
/// maximize `‖h0 p‖` over `p` with `h_nᴴ h0 p = 0`, then match the filter to
/// `h0 p`.
fn zfbf_beam(h0: &CMat, interference: &[CVec], lambda1: f64) -> Result<ZfbfBeam> {
    let n_t0 = h0.cols();
    let allowed = if interference.iter().all(|h| h.norm_sqr() == 0.0) {
        CMat::identity(n_t0)
    } else {
        let hs = CMat::from_columns(interference)?;
        let constraint = hs.adjoint().matmul(h0)?;
        let row_space = pinv(&constraint)?.matmul(&constraint)?;
        &CMat::identity(n_t0) - &row_space
    };
    let effective = h0.matmul(&allowed)?;
    let dec = svd(&effective)?;
    let precoder = dec.v_col(0);
    let image = h0.mul_vec(&precoder)?;
    let gain2 = image.norm_sqr();
    if gain2 <= ATTENUATION_TOL * lambda1 * lambda1 {
        return Ok(ZfbfBeam {
            precoder,
            gain2: 0.0,
            interference_leak: vec![0.0; interference.len()],
            attenuated: true,
        });
    }
    let f = image.normalized()?;
    let interference_leak = interference
        .iter()
        .map(|h| inner(&f, h).map(|z| z.norm_sqr()))
        .collect::<Result<_>>()?;
    Ok(ZfbfBeam {
        precoder,
        gain2,
        interference_leak,
        attenuated: false,
    })
}

/// Power allocation a geometry is evaluated under.
#[derive(Debug, Clone, PartialEq)]
pub struct Powers {
    pub sigma2: f64,
    pub p0e: f64,
    pub p1e: f64,
    /// PBS power per desired stream; sums to `p0e`.
    pub streams: Vec<f64>,
    /// MBS power per interference; sums to `p1e`.
    pub interference: Vec<f64>,
}

impl Powers {
    /// `p0e` split equally over `m_streams`, `p1e` split by `shares`.
    pub fn equal(budget: &crate::channel::LinkBudget, m_streams: usize, shares: &[f64]) -> Self {
        Powers {
            sigma2: budget.sigma2,
            p0e: budget.p0e,
            p1e: budget.p1e,
            streams: vec![budget.p0e / m_streams as f64; m_streams],
            interference: shares.iter().map(|s| s * budget.p1e).collect(),
        }
    }

    /// Single-stream powers of a drop.
    pub fn for_drop(drop: &Drop) -> Self {
        Powers {
            sigma2: drop.budget.sigma2,
            p0e: drop.budget.p0e,
            p1e: drop.budget.p1e,
            streams: vec![drop.budget.p0e],
            interference: drop.mbs_stream_powers.clone(),
        }
    }
}

/// Vectors behind the in-phase/quadrature split of a single interference.
#[derive(Debug, Clone)]
pub struct SteeringGeometry {
    /// Unit desired direction `h0 p0 / ‖h0 p0‖` at the PUE.
    pub d_s: CVec,
    /// Received interference `sqrt(p1e) h10 p1`.
    pub i_vec: CVec,
    pub i_in: CVec,
    pub i_quad: CVec,
    /// `h0⁺ P h10 p1`.
    pub g: CVec,
    /// `f0ᴴ P h10 p1`.
    pub chi: C64,
    /// Principal receive filter `f0`.
    pub f0: CVec,
    /// Principal precoder `p0`.
    pub p0: CVec,
    pub lambda: f64,
}

pub fn geometry(drop: &Drop) -> Result<SteeringGeometry> {
    if drop.n_interferences() != 1 {
        return Err(Error::domain("steering geometry needs exactly one MBS stream"));
    }
    let dec = svd(&drop.h0)?;
    let lambda = dec.sigma[0];
    if !(lambda > 0.0) {
        return Err(Error::domain("h0 is the zero matrix"));
    }
    let p0 = dec.v_col(0);
    let f0 = dec.u_col(0);
    let d_s = drop.h0.mul_vec(&p0)?.normalized()?;
    let proj = projector(&d_s)?;
    let h = drop.interference_direction(0)?;
    let i_vec = h.scale_real(drop.budget.p1e.sqrt());
    let i_in = proj.mul_vec(&i_vec)?;
    let i_quad = &i_vec - &i_in;
    let ph = proj.mul_vec(&h)?;
    let g = pinv(&drop.h0)?.mul_vec(&ph)?;
    let chi = inner(&f0, &ph)?;
    Ok(SteeringGeometry {
        d_s,
        i_vec,
        i_in,
        i_quad,
        g,
        chi,
        f0,
        p0,
        lambda,
    })
}

fn single(drop: &Drop) -> Result<(LinkGeometry, Powers)> {
    Ok((LinkGeometry::new(drop, 1)?, Powers::for_drop(drop)))
}

/// Matched filtering with the interference left untouched.
pub fn mf(drop: &Drop) -> Result<SchemeResult> {
    let (g, pw) = single(drop)?;
    Ok(g.mf(&pw))
}

/// Zero-forcing reception.
pub fn zf_rx(drop: &Drop) -> Result<SchemeResult> {
    let (g, pw) = single(drop)?;
    Ok(g.zf(&pw))
}

/// Zero-forcing transmit beamforming.
pub fn zfbf(drop: &Drop, fallback: Fallback) -> Result<SchemeResult> {
    let (g, pw) = single(drop)?;
    g.zfbf(&pw, fallback)
}

/// Interference neutralization.
pub fn in_scheme(drop: &Drop, fallback: Fallback) -> Result<SchemeResult> {
    let (g, pw) = single(drop)?;
    Ok(g.neutralize(&pw, fallback))
}

/// Orthogonal interference steering.
pub fn ois(drop: &Drop, fallback: Fallback) -> Result<SchemeResult> {
    let (g, pw) = single(drop)?;
    Ok(g.ois(&pw, fallback))
}

/// Interference steering with a fixed factor `rho` in `(0, 1]`.
pub fn is_fixed(drop: &Drop, rho: f64, fallback: Fallback) -> Result<SchemeResult> {
    let (g, pw) = single(drop)?;
    g.is_fixed(&pw, rho, fallback)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{budget_normalized, make_drop, Antennas, DropSeed, DropSpec, LinkBudget};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn seeded(seed: u64, gamma: f64, xi: f64) -> Drop {
        let b = budget_normalized(gamma, xi).unwrap();
        make_drop(&b, &DropSpec::new(Antennas::default(), 1), DropSeed::new(seed, 0, 0)).unwrap()
    }

    /// Diagonal h0, chosen interference direction, single MBS stream.
    fn crafted(h: [C64; 2], budget: LinkBudget) -> Drop {
        Drop {
            h0: CMat::from_diagonal(&[2.0, 1.0]),
            h1: CMat::identity(2),
            h10: CMat::from_row_slice(2, 2, &[h[0], c(0.0, 0.0), h[1], c(0.0, 0.0)]).unwrap(),
            budget,
            mbs_precoders: vec![CVec::basis(2, 0)],
            mbs_stream_powers: vec![budget.p1e],
            seed: DropSeed::new(0, 0, 0),
        }
    }

    fn assert_shannon(r: &SchemeResult, sigma2: f64) {
        let want = shannon_se(r.desired_power, r.residual_interference, sigma2);
        assert!((r.se_bits - want).abs() <= 1e-12, "{r:?}");
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(Scheme::parse(s.name()), Some(s));
        }
        assert_eq!(Scheme::parse("is-fixed"), Some(Scheme::IsFixed));
        assert_eq!(Scheme::parse("nope"), None);
        assert_eq!(Fallback::parse("ZF"), Some(Fallback::Zf));
    }

    #[test]
    fn mf_without_interference_channel() {
        let b = budget_normalized(3.0, 2.0).unwrap();
        let d = crafted([c(0.0, 0.0), c(0.0, 0.0)], b);
        let r = mf(&d).unwrap();
        assert!((r.se_bits - (1.0 + b.p0e * 4.0).log2()).abs() < 1e-12);
        assert_eq!(r.residual_interference, 0.0);
    }

    #[test]
    fn mf_with_zero_pbs_power_has_zero_rate() {
        let b = LinkBudget {
            p0e: 0.0,
            p1e: 1.0,
            sigma2: 1.0,
            gamma_bar_db: 0.0,
            xi: 0.0,
        };
        let d = crafted([c(0.3, 0.1), c(-0.2, 0.5)], b);
        assert_eq!(mf(&d).unwrap().se_bits, 0.0);
    }

    #[test]
    fn mf_residual_matches_direct_filtering() {
        let d = seeded(3, 5.0, 1.0);
        let sg = geometry(&d).unwrap();
        let r = mf(&d).unwrap();
        let direct = inner(&sg.f0, &sg.i_vec).unwrap().norm_sqr();
        assert!((r.residual_interference - direct).abs() <= 1e-12 * direct.max(1.0));
        assert_shannon(&r, 1.0);
    }

    #[test]
    fn geometry_orthogonal_and_aligned_cases() {
        let b = budget_normalized(0.0, 1.0).unwrap();
        // desired direction is e1 for diag(2, 1)
        let orth = geometry(&crafted([c(0.0, 0.0), c(0.7, -0.2)], b)).unwrap();
        assert!(orth.i_in.norm() < 1e-15);
        assert_eq!(orth.chi, c(0.0, 0.0));

        let aligned = geometry(&crafted([c(0.4, 0.9), c(0.0, 0.0)], b)).unwrap();
        assert!(aligned.i_quad.norm() < 1e-15);
        assert!((aligned.i_in.norm() - aligned.i_vec.norm()).abs() < 1e-15);
    }

    #[test]
    fn geometry_pythagoras() {
        for seed in 0..50 {
            let sg = geometry(&seeded(seed, 10.0, 1.0)).unwrap();
            let lhs = sg.i_in.norm_sqr() + sg.i_quad.norm_sqr();
            assert!((lhs - sg.i_vec.norm_sqr()).abs() <= 1e-9);
            let cross = inner(&sg.i_in, &sg.i_quad).unwrap().norm();
            assert!(cross <= 1e-10 * sg.i_vec.norm_sqr());
        }
    }

    #[test]
    fn geometry_rejects_zero_h0() {
        let mut d = seeded(1, 0.0, 1.0);
        d.h0 = CMat::zeros(2, 2);
        assert!(geometry(&d).is_err());
        assert!(LinkGeometry::new(&d, 1).is_err());
    }

    #[test]
    fn zf_orthogonal_interference_costs_nothing() {
        let b = budget_normalized(5.0, 1.0).unwrap();
        let d = crafted([c(0.0, 0.0), c(1.0, 0.5)], b);
        let z = zf_rx(&d).unwrap();
        assert!((z.se_bits - (1.0 + b.p0e * 4.0).log2()).abs() < 1e-12);
        assert!(z.residual_interference <= 1e-18 * b.p1e);
    }

    #[test]
    fn zf_parallel_interference_attenuates_fully() {
        let b = budget_normalized(5.0, 1.0).unwrap();
        let d = crafted([c(0.3, -0.6), c(0.0, 0.0)], b);
        let z = zf_rx(&d).unwrap();
        assert!(z.feasible);
        assert!(z.attenuated);
        assert_eq!(z.desired_power, 0.0);
        assert_eq!(z.se_bits, 0.0);
    }

    #[test]
    fn zf_and_zfbf_null_the_interference() {
        for seed in 0..100 {
            let d = seeded(seed, 20.0, 1.0);
            let z = zf_rx(&d).unwrap();
            let zb = zfbf(&d, Fallback::Zf).unwrap();
            assert!(z.residual_interference <= 1e-15, "{z:?}");
            assert!(zb.residual_interference <= 1e-15, "{zb:?}");
            assert_shannon(&z, 1.0);
            assert_shannon(&zb, 1.0);
        }
    }

    #[test]
    fn zfbf_without_interference_is_plain_beamforming() {
        let b = budget_normalized(5.0, 1.0).unwrap();
        let d = crafted([c(0.0, 0.0), c(0.0, 0.0)], b);
        let r = zfbf(&d, Fallback::Zf).unwrap();
        assert!((r.se_bits - (1.0 + b.p0e * 4.0).log2()).abs() < 1e-12);
    }

    #[test]
    fn zfbf_never_beats_interference_free_beamforming() {
        for seed in 0..200 {
            let d = seeded(seed, 5.0, 1.0);
            let lam = svd(&d.h0).unwrap().sigma[0];
            let ceiling = (1.0 + d.budget.p0e * lam * lam).log2();
            let r = zfbf(&d, Fallback::Zf).unwrap();
            assert!(r.se_bits <= ceiling + 1e-12);
        }
    }

    #[test]
    fn zfbf_requires_single_stream_geometry() {
        let d = seeded(2, 5.0, 1.0);
        let g = LinkGeometry::new(&d, 2).unwrap();
        let pw = Powers::equal(&d.budget, 2, &d.mbs_shares());
        assert!(g.zfbf(&pw, Fallback::Mf).is_err());
    }

    #[test]
    fn in_with_no_interference_equals_mf() {
        let b = budget_normalized(5.0, 1.0).unwrap();
        let d = crafted([c(0.0, 0.0), c(0.0, 0.0)], b);
        let i = in_scheme(&d, Fallback::Zf).unwrap();
        let m = mf(&d).unwrap();
        assert_eq!(i.power_overhead_e, 0.0);
        assert!((i.se_bits - m.se_bits).abs() < 1e-12);
    }

    #[test]
    fn in_overhead_matches_least_squares_solve() {
        // 2x2 h0: solve h0 s = h directly by Cramer's rule
        for seed in 0..100 {
            let d = seeded(seed, 0.0, 1.0);
            let h = d.interference_direction(0).unwrap();
            let a = &d.h0;
            let det = a.get(0, 0) * a.get(1, 1) - a.get(0, 1) * a.get(1, 0);
            let s0 = (h.get(0) * a.get(1, 1) - a.get(0, 1) * h.get(1)) / det;
            let s1 = (a.get(0, 0) * h.get(1) - h.get(0) * a.get(1, 0)) / det;
            let want = d.budget.p1e * (s0.norm_sqr() + s1.norm_sqr());
            let r = in_scheme(&d, Fallback::Zf).unwrap();
            assert!((r.power_overhead_e - want).abs() <= 1e-9 * want.max(1.0));
            if r.feasible {
                assert!(r.residual_interference <= 1e-15);
            } else {
                assert_eq!(r.fallback_applied, Some(Fallback::Zf));
            }
            assert_shannon(&r, 1.0);
        }
    }

    #[test]
    fn ois_with_orthogonal_interference_is_free() {
        let b = budget_normalized(5.0, 1.0).unwrap();
        let d = crafted([c(0.0, 0.0), c(0.8, 0.1)], b);
        let o = ois(&d, Fallback::Mf).unwrap();
        assert_eq!(o.power_overhead_e, 0.0);
        assert_eq!(o.residual_interference, 0.0);
        assert!((o.se_bits - (1.0 + b.p0e * 4.0).log2()).abs() < 1e-12);
    }

    #[test]
    fn ois_equals_is_fixed_at_one() {
        for seed in 0..50 {
            let d = seeded(seed, 5.0, 1.0);
            let o = ois(&d, Fallback::Zf).unwrap();
            let f = is_fixed(&d, 1.0, Fallback::Zf).unwrap();
            assert_eq!(o.se_bits, f.se_bits);
            assert_eq!(o.power_overhead_e, f.power_overhead_e);
            assert_eq!(o.feasible, f.feasible);
        }
    }

    #[test]
    fn is_fixed_half_plugs_into_overhead_formula() {
        let d = seeded(8, 5.0, 10.0);
        let sg = geometry(&d).unwrap();
        let r = is_fixed(&d, 0.5, Fallback::Mf).unwrap();
        let p1e = d.budget.p1e;
        assert!((r.residual_interference - 0.25 * p1e * sg.chi.norm_sqr()).abs() < 1e-12);
        assert!((r.power_overhead_e - 0.25 * p1e * sg.g.norm_sqr()).abs() < 1e-12);
        assert_eq!(r.rho, Some(0.5));
    }

    #[test]
    fn is_fixed_rejects_out_of_range() {
        let d = seeded(1, 5.0, 1.0);
        assert!(is_fixed(&d, 0.0, Fallback::Mf).is_err());
        assert!(is_fixed(&d, 1.2, Fallback::Mf).is_err());
    }

    #[test]
    fn infeasible_steering_falls_back() {
        // tiny PBS power makes OIS unaffordable whenever chi != 0
        let d = seeded(4, 10.0, 1e-6);
        let o = ois(&d, Fallback::Mf).unwrap();
        assert!(!o.feasible);
        assert!(o.power_overhead_e > d.budget.p0e);
        assert_eq!(o.fallback_applied, Some(Fallback::Mf));
        assert_eq!(o.se_bits, mf(&d).unwrap().se_bits);
        let o = ois(&d, Fallback::Zf).unwrap();
        assert_eq!(o.se_bits, zf_rx(&d).unwrap().se_bits);
        assert_shannon(&o, 1.0);
    }

    #[test]
    fn overhead_scales_with_interference_power() {
        let d = seeded(12, 5.0, 1.0);
        let b2 = LinkBudget::from_powers(d.budget.p0e, 3.0 * d.budget.p1e, 1.0).unwrap();
        let d2 = d.with_budget(b2);
        let o1 = ois(&d, Fallback::Mf).unwrap().power_overhead_e;
        let o3 = ois(&d2, Fallback::Mf).unwrap().power_overhead_e;
        assert!((o3 - 3.0 * o1).abs() <= 1e-12 * o3);
        let n1 = in_scheme(&d, Fallback::Mf).unwrap().power_overhead_e;
        let n3 = in_scheme(&d2, Fallback::Mf).unwrap().power_overhead_e;
        assert!((n3 - 3.0 * n1).abs() <= 1e-12 * n3);
    }

    #[test]
    fn multi_stream_zf_counts_inter_stream_leakage() {
        let b = budget_normalized(10.0, 1.0).unwrap();
        let d = make_drop(&b, &DropSpec::new(Antennas::new(3, 2, 3), 1), DropSeed::new(6, 0, 0))
            .unwrap();
        let g = LinkGeometry::new(&d, 2).unwrap();
        let pw = Powers::equal(&b, 2, &d.mbs_shares());
        let r = g.zf(&pw);
        assert_eq!(r.streams.len(), 2);
        for (m, s) in r.streams.iter().enumerate() {
            let mbs: f64 = g.zf[m].interference_leak[0] * b.p1e;
            assert!(mbs <= 1e-15);
            assert!(s.residual_interference >= mbs);
            assert!((s.se_bits - shannon_se(s.desired_power, s.residual_interference, 1.0)).abs() < 1e-12);
        }
        assert!((r.se_bits - r.streams.iter().map(|s| s.se_bits).sum::<f64>()).abs() < 1e-12);
    }
}
