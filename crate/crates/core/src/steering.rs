//! Optimal steering factor.
//!
//! With one interference and PBS power `P`, steering by `ρ` gives
//!
//! ```text
//! φ(ρ) = (A − ρ² B) / (C − ρ D + ρ² E)
//! A = P λ²,  B = p1 ‖g‖² λ²,  C = p1 |χ|² + σ²,  D = 2 p1 |χ|²,  E = p1 |χ|²
//! ```
//!
//! Setting `φ'(ρ) = 0` leaves the quadratic `BD ρ² − 2(BC + AE) ρ + AD = 0`.
//! The smaller root is the maximizer; it is evaluated as
//! `AD / ((BC + AE) + √Δ)` to avoid cancellation.

use serde::{Deserialize, Serialize};

use crate::channel::Drop;
use crate::error::{Error, Result};
use crate::schemes::{Fallback, LinkGeometry, Powers, Scheme, SchemeResult};

const BUDGET_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl RhoCoefficients {
    /// Coefficients for PBS power `p0`, interference power `p1`, noise
    /// `sigma2`, eigen-gain `lambda`, in-phase power `chi2 = |χ|²` and
    /// steering norm `g2 = ‖g‖²`.
    pub fn new(p0: f64, p1: f64, sigma2: f64, lambda: f64, chi2: f64, g2: f64) -> Self {
        let l2 = lambda * lambda;
        RhoCoefficients {
            a: p0 * l2,
            b: p1 * g2 * l2,
            c: p1 * chi2 + sigma2,
            d: 2.0 * p1 * chi2,
            e: p1 * chi2,
        }
    }

    pub fn sinr(&self, rho: f64) -> f64 {
        (self.a - rho * rho * self.b) / (self.c - rho * self.d + rho * rho * self.e)
    }

    /// Discriminant `(BC + AE)² − AB D²` of the stationarity quadratic.
    pub fn delta(&self) -> f64 {
        let s = self.b * self.c + self.a * self.e;
        s * s - self.a * self.b * self.d * self.d
    }

    /// Both stationary points `(ρ₋, ρ₊)`, or `None` when `BD = 0`.
    pub fn roots(&self) -> Option<(f64, f64)> {
        if !(self.b * self.d > 0.0) {
            return None;
        }
        let s = self.b * self.c + self.a * self.e;
        let q = s + self.delta().max(0.0).sqrt();
        if !(q > 0.0) {
            return None;
        }
        Some((self.a * self.d / q, q / (self.b * self.d)))
    }

    /// Maximizer of `φ` over `[0, rho_max]`.
    pub fn solve(&self, rho_max: f64) -> RhoSolution {
        let delta = self.delta();
        match self.roots() {
            Some((minus, plus)) => {
                let clamped = minus > rho_max;
                let rho_star = minus.min(rho_max);
                RhoSolution {
                    rho_star,
                    rho_max,
                    rho_minus: minus,
                    rho_plus: plus,
                    delta,
                    sinr_at_star: self.sinr(rho_star),
                    clamped,
                    degenerate: false,
                }
            }
            None => {
                // Nothing to steer (D = 0), or steering is free (B = 0).
                let rho_star = if self.d > 0.0 { rho_max } else { 0.0 };
                RhoSolution {
                    rho_star,
                    rho_max,
                    rho_minus: rho_star,
                    rho_plus: f64::INFINITY,
                    delta,
                    sinr_at_star: self.sinr(rho_star),
                    clamped: false,
                    degenerate: true,
                }
            }
        }
    }
}

/// `φ(ρ)` for the given coefficients.
pub fn sinr_dis(coeffs: &RhoCoefficients, rho: f64) -> f64 {
    coeffs.sinr(rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoSolution {
    pub rho_star: f64,
    pub rho_max: f64,
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub delta: f64,
    pub sinr_at_star: f64,
    /// `ρ₋` exceeded the power limit and was replaced by it.
    pub clamped: bool,
    /// No in-phase interference, or steering costs nothing.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoMax {
    pub value: f64,
    /// The steering signal has zero norm, so any ρ is affordable.
    pub degenerate: bool,
}

/// Largest ρ whose steering power `ρ² p1 ‖g‖²` fits in `budget`.
pub fn rho_limit(budget: f64, p1: f64, g2: f64) -> RhoMax {
    let cost = p1 * g2;
    if !(cost > 0.0) {
        return RhoMax {
            value: 1.0,
            degenerate: true,
        };
    }
    RhoMax {
        value: (budget.max(0.0) / cost).sqrt().min(1.0),
        degenerate: false,
    }
}

fn single_interference(drop: &Drop) -> Result<(LinkGeometry, Powers)> {
    if drop.n_interferences() != 1 {
        return Err(Error::domain(format!(
            "expected one MBS stream, drop has {}",
            drop.n_interferences()
        )));
    }
    Ok((LinkGeometry::new(drop, 1)?, Powers::for_drop(drop)))
}

fn coefficients(geo: &LinkGeometry, pw: &Powers, m: usize, n: usize, p0: f64) -> RhoCoefficients {
    RhoCoefficients::new(
        p0,
        pw.interference[n],
        pw.sigma2,
        geo.modes[m].gain,
        geo.chi[m][n].norm_sqr(),
        geo.g_norm2[m][n],
    )
}

pub fn rho_max(drop: &Drop) -> Result<RhoMax> {
    let (geo, pw) = single_interference(drop)?;
    Ok(rho_limit(pw.p0e, pw.interference[0], geo.g_norm2[0][0]))
}

/// Closed-form optimal steering factor for a single-stream drop.
pub fn optimal_rho(drop: &Drop) -> Result<RhoSolution> {
    let (geo, pw) = single_interference(drop)?;
    let limit = rho_limit(pw.p0e, pw.interference[0], geo.g_norm2[0][0]);
    Ok(coefficients(&geo, &pw, 0, 0, pw.p0e).solve(limit.value))
}

/// DIS with the closed-form ρ*. Always feasible.
pub fn dis(drop: &Drop) -> Result<SchemeResult> {
    let (geo, pw) = single_interference(drop)?;
    let limit = rho_limit(pw.p0e, pw.interference[0], geo.g_norm2[0][0]);
    let sol = coefficients(&geo, &pw, 0, 0, pw.p0e).solve(limit.value);
    let mut r = geo.steer(&pw, &[vec![sol.rho_star]], Scheme::Dis, Fallback::Mf)?;
    r.rho = Some(sol.rho_star);
    Ok(r)
}

/// How a stream's PBS power is divided among the steering signals for its
/// interferences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BudgetSplit {
    #[default]
    Equal,
    /// In proportion to each interference's full steering cost `p1n ‖g‖²`.
    Proportional,
}

impl BudgetSplit {
    pub fn parse(s: &str) -> Option<BudgetSplit> {
        match s.trim().to_ascii_lowercase().as_str() {
            "equal" => Some(BudgetSplit::Equal),
            "proportional" => Some(BudgetSplit::Proportional),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BudgetSplit::Equal => "equal",
            BudgetSplit::Proportional => "proportional",
        }
    }
}

/// Per-(stream, interference) steering factors chosen independently.
#[derive(Debug, Clone, PartialEq)]
pub struct DisPlan {
    pub rho: Vec<Vec<f64>>,
    pub solutions: Vec<Vec<RhoSolution>>,
    /// Full orthogonal steering does not fit some stream's budget.
    pub power_limited: bool,
}

/// Chooses ρ for every (stream, interference) pair on its own budget.
///
/// Each pair is solved as if it were the only interference: the other
/// interferences do not enter its denominator.
pub fn plan_with_budgets(geo: &LinkGeometry, pw: &Powers, budgets: &[Vec<f64>]) -> DisPlan {
    let mut rho = Vec::with_capacity(geo.n_streams());
    let mut solutions = Vec::with_capacity(geo.n_streams());
    let mut power_limited = false;
    for m in 0..geo.n_streams() {
        let full_cost: f64 = (0..geo.n_interferences())
            .map(|n| pw.interference[n] * geo.g_norm2[m][n])
            .sum();
        power_limited |= full_cost > pw.streams[m] * (1.0 + BUDGET_SLACK);
        let row: Vec<RhoSolution> = (0..geo.n_interferences())
            .map(|n| {
                let limit = rho_limit(budgets[m][n], pw.interference[n], geo.g_norm2[m][n]);
                coefficients(geo, pw, m, n, pw.streams[m]).solve(limit.value)
            })
            .collect();
        rho.push(row.iter().map(|s| s.rho_star).collect());
        solutions.push(row);
    }
    DisPlan {
        rho,
        solutions,
        power_limited,
    }
}

/// Splits each stream's power over its interferences.
pub fn split_budgets(geo: &LinkGeometry, pw: &Powers, split: BudgetSplit) -> Vec<Vec<f64>> {
    let n = geo.n_interferences();
    (0..geo.n_streams())
        .map(|m| {
            let p = pw.streams[m];
            let costs: Vec<f64> = (0..n).map(|k| pw.interference[k] * geo.g_norm2[m][k]).collect();
            let total: f64 = costs.iter().sum();
            match split {
                BudgetSplit::Proportional if total > 0.0 => {
                    costs.iter().map(|c| p * c / total).collect()
                }
                _ => vec![p / n as f64; n],
            }
        })
        .collect()
}

pub fn plan(geo: &LinkGeometry, pw: &Powers, split: BudgetSplit) -> DisPlan {
    plan_with_budgets(geo, pw, &split_budgets(geo, pw, split))
}

fn check_budgets(budgets: &[f64], total: f64, what: &str) -> Result<()> {
    if budgets.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::domain(format!("{what} must be finite and non-negative")));
    }
    let sum: f64 = budgets.iter().sum();
    if sum > total * (1.0 + 1e-9) {
        return Err(Error::domain(format!("{what} sum to {sum}, above the PBS power {total}")));
    }
    Ok(())
}

fn interference_budgets(drop: &Drop, budgets: &[f64]) -> Result<(LinkGeometry, Powers)> {
    let n = drop.n_interferences();
    if budgets.len() != n {
        return Err(Error::domain(format!(
            "need {n} steering budgets, got {}",
            budgets.len()
        )));
    }
    check_budgets(budgets, drop.budget.p0e, "steering budgets")?;
    Ok((LinkGeometry::new(drop, 1)?, Powers::for_drop(drop)))
}

/// DIS against several MBS streams, each ρ_n chosen on its own budget.
pub fn dis_multi_interference(drop: &Drop, budgets: &[f64]) -> Result<SchemeResult> {
    let (geo, pw) = interference_budgets(drop, budgets)?;
    let p = plan_with_budgets(&geo, &pw, &[budgets.to_vec()]);
    geo.steer(&pw, &p.rho, Scheme::Dis, Fallback::Mf)
}

/// DIS for several PBS streams against one MBS stream. Stream `m` gets
/// `stream_powers[m]` and steers within it.
pub fn dis_multi_stream(drop: &Drop, stream_powers: &[f64]) -> Result<SchemeResult> {
    if drop.n_interferences() != 1 {
        return Err(Error::domain("multi-stream DIS expects one MBS stream"));
    }
    if stream_powers.is_empty() {
        return Err(Error::domain("at least one PBS stream is needed"));
    }
    check_budgets(stream_powers, drop.budget.p0e, "stream powers")?;
    let sum: f64 = stream_powers.iter().sum();
    if (sum - drop.budget.p0e).abs() > 1e-9 * drop.budget.p0e.max(f64::MIN_POSITIVE) {
        return Err(Error::domain(format!(
            "stream powers sum to {sum}, expected {}",
            drop.budget.p0e
        )));
    }
    let geo = LinkGeometry::new(drop, stream_powers.len())?;
    let mut pw = Powers::for_drop(drop);
    pw.streams = stream_powers.to_vec();
    let budgets: Vec<Vec<f64>> = stream_powers.iter().map(|&p| vec![p]).collect();
    let p = plan_with_budgets(&geo, &pw, &budgets);
    geo.steer(&pw, &p.rho, Scheme::Dis, Fallback::Mf)
}

/// SINR of a single stream steering two interferences jointly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairObjective {
    pub a: f64,
    pub b: [f64; 2],
    pub e: [f64; 2],
    pub sigma2: f64,
}

impl PairObjective {
    fn num(&self, r: [f64; 2]) -> f64 {
        self.a - self.b[0] * r[0] * r[0] - self.b[1] * r[1] * r[1]
    }

    fn den(&self, r: [f64; 2]) -> f64 {
        self.sigma2 + self.e[0] * (1.0 - r[0]).powi(2) + self.e[1] * (1.0 - r[1]).powi(2)
    }

    pub fn value(&self, r: [f64; 2]) -> f64 {
        self.num(r) / self.den(r)
    }

    pub fn gradient(&self, r: [f64; 2]) -> [f64; 2] {
        let (n, d) = (self.num(r), self.den(r));
        let g = |i: usize| {
            let ni = -2.0 * self.b[i] * r[i];
            let di = -2.0 * self.e[i] * (1.0 - r[i]);
            ni / d - n * di / (d * d)
        };
        [g(0), g(1)]
    }

    /// Second derivatives `[[φ11, φ12], [φ12, φ22]]`.
    pub fn hessian(&self, r: [f64; 2]) -> [[f64; 2]; 2] {
        let (n, d) = (self.num(r), self.den(r));
        let ni = [-2.0 * self.b[0] * r[0], -2.0 * self.b[1] * r[1]];
        let di = [-2.0 * self.e[0] * (1.0 - r[0]), -2.0 * self.e[1] * (1.0 - r[1])];
        let (d2, d3) = (d * d, d * d * d);
        let h = |i: usize, j: usize| {
            let (nij, dij) = if i == j {
                (-2.0 * self.b[i], 2.0 * self.e[i])
            } else {
                (0.0, 0.0)
            };
            nij / d - (ni[i] * di[j] + ni[j] * di[i]) / d2 - n * dij / d2 + 2.0 * n * di[i] * di[j] / d3
        };
        [[h(0, 0), h(0, 1)], [h(0, 1), h(1, 1)]]
    }

    /// One-dimensional problem with `ρ_fixed_axis` held at `value`.
    fn edge(&self, fixed_axis: usize, value: f64) -> RhoCoefficients {
        let (f, v) = (fixed_axis, 1 - fixed_axis);
        RhoCoefficients {
            a: self.a - self.b[f] * value * value,
            b: self.b[v],
            c: self.sigma2 + self.e[f] * (1.0 - value).powi(2) + self.e[v],
            d: 2.0 * self.e[v],
            e: self.e[v],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryPoint {
    pub rho: [f64; 2],
    pub sinr: f64,
    /// `φ12² − φ11 φ22 < 0` with `φ11 < 0`.
    pub is_max: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointRho {
    pub rho: [f64; 2],
    pub rho_max: [f64; 2],
    pub sinr: f64,
    pub se_bits: f64,
    /// The maximizer is an interior stationary point rather than a boundary one.
    pub interior: bool,
    pub stationary_points: Vec<StationaryPoint>,
}

impl PairObjective {
    /// Point where both partial derivatives vanish for a given SINR level:
    /// `∂φ/∂ρ_i = 0` reduces to `ρ_i = φ E_i / (B_i + φ E_i)`.
    fn stationary_at(&self, phi: f64) -> [f64; 2] {
        [0, 1].map(|i| {
            let pull = phi * self.e[i];
            if pull <= 0.0 {
                0.0
            } else {
                pull / (self.b[i] + pull)
            }
        })
    }

    /// All interior stationary points, found as the roots of the scalar
    /// equation `φ = value(stationary_at(φ))` on `(0, A/σ²]`.
    fn stationary_points(&self) -> Vec<[f64; 2]> {
        if !(self.a > 0.0 && self.sigma2 > 0.0) {
            return Vec::new();
        }
        let top = self.a / self.sigma2;
        let h = |phi: f64| self.value(self.stationary_at(phi)) - phi;
        const STEPS: i32 = 480;
        let at = |k: i32| top * 10f64.powf(-12.0 * (1.0 - k as f64 / STEPS as f64));
        let mut out = Vec::new();
        let (mut lo, mut h_lo) = (at(0), h(at(0)));
        for k in 1..=STEPS {
            let hi = at(k);
            let h_hi = h(hi);
            if h_lo == 0.0 {
                out.push(self.stationary_at(lo));
            } else if h_lo.signum() != h_hi.signum() && h_hi != 0.0 {
                let (mut a, mut b, mut ha) = (lo, hi, h_lo);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if mid <= a || mid >= b {
                        break;
                    }
                    let hm = h(mid);
                    if hm.signum() == ha.signum() {
                        a = mid;
                        ha = hm;
                    } else {
                        b = mid;
                    }
                }
                out.push(self.stationary_at(0.5 * (a + b)));
            }
            lo = hi;
            h_lo = h_hi;
        }
        if h_lo == 0.0 {
            out.push(self.stationary_at(lo));
        }
        out
    }
}

/// Jointly optimal `(ρ1, ρ2)` for two interferences on a single stream.
///
/// `budgets[n]` bounds the power of steering signal `n`, giving the box
/// `[0, ρmax1] × [0, ρmax2]`. Interior stationary points are classified with
/// the analytic Hessian (maximum when `φ12² − φ11 φ22 < 0` and `φ11 < 0`);
/// boundary candidates come from the one-dimensional closed form on every
/// edge, plus the four corners. The best candidate wins.
pub fn joint_rho_n2(drop: &Drop, budgets: &[f64]) -> Result<JointRho> {
    if drop.n_interferences() != 2 {
        return Err(Error::domain("joint steering factors need exactly two MBS streams"));
    }
    let (geo, pw) = interference_budgets(drop, budgets)?;
    let l2 = geo.modes[0].gain.powi(2);
    let obj = PairObjective {
        a: pw.p0e * l2,
        b: [0, 1].map(|n| pw.interference[n] * geo.g_norm2[0][n] * l2),
        e: [0, 1].map(|n| pw.interference[n] * geo.chi[0][n].norm_sqr()),
        sigma2: pw.sigma2,
    };
    let hi = [0, 1].map(|n| rho_limit(budgets[n], pw.interference[n], geo.g_norm2[0][n]).value);
    let mut best = ([0.0, 0.0], obj.value([0.0, 0.0]), false);
    let consider = |r: [f64; 2], interior: bool, best: &mut ([f64; 2], f64, bool)| {
        let v = obj.value(r);
        if v > best.1 {
            *best = (r, v, interior);
        }
    };

    let mut stationary: Vec<StationaryPoint> = Vec::new();
    for r in obj.stationary_points() {
        if !(0..2).all(|i| r[i] > 0.0 && r[i] < hi[i]) {
            continue;
        }
        let h = obj.hessian(r);
        let (aa, bb, cc) = (h[0][1], h[0][0], h[1][1]);
        stationary.push(StationaryPoint {
            rho: r,
            sinr: obj.value(r),
            is_max: aa * aa - bb * cc < 0.0 && bb < 0.0,
        });
    }
    for p in stationary.iter().filter(|p| p.is_max) {
        consider(p.rho, true, &mut best);
    }

    for axis in 0..2 {
        for value in [0.0, hi[axis]] {
            let free = 1 - axis;
            let sol = obj.edge(axis, value).solve(hi[free]);
            let mut r = [0.0; 2];
            r[axis] = value;
            r[free] = sol.rho_star;
            consider(r, false, &mut best);
        }
    }
    for r in [[0.0, 0.0], [hi[0], 0.0], [0.0, hi[1]], [hi[0], hi[1]]] {
        consider(r, false, &mut best);
    }

    let (rho, sinr, interior) = best;
    Ok(JointRho {
        rho,
        rho_max: hi,
        sinr,
        se_bits: (1.0 + sinr).log2(),
        interior,
        stationary_points: stationary,
    })
}
