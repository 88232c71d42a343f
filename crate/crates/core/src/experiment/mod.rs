//! Monte-Carlo sweeps over link budgets, antenna counts and schemes.
//!
//! Channel realizations are keyed by the geometry part of a point (antenna
//! counts, stream counts): every `(γ̄, ξ, ρ)` combination sees the same drops,
//! so differences along those axes are not masked by sampling noise.
//!
//! Drops are processed in fixed-size chunks that run in parallel; chunk
//! accumulators are merged in chunk order, so the output does not depend on
//! the number of worker threads.

pub mod cli;
pub mod config;
pub mod output;
pub mod selftest;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{budget_normalized, make_drop, Antennas, DropSeed, DropSpec, LinkBudget};
use crate::error::{Error, Result};
use crate::schemes::{Fallback, LinkGeometry, Powers, Scheme, SchemeResult};
use crate::steering::{plan, BudgetSplit};

pub use config::parse_spec;
pub use output::{format_g12, write_csv, write_curve_csv};

pub const DEFAULT_DROPS_PER_POINT: usize = 10_000;

/// Drops per parallel work item.
const CHUNK: usize = 64;
/// Chunks held in memory before they are folded into the total.
const BATCH: usize = 64;

/// Normalized-overhead grid `0, 0.05, …, 2` of the exceedance curve.
pub fn curve_grid() -> Vec<f64> {
    (0..=40).map(|k| k as f64 * 0.05).collect()
}

/// Whether DIS gives up steering when full orthogonal steering is out of reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DisFallback {
    /// Always steer with ρ*.
    Never,
    /// Switch to the sweep's fallback receiver when `ρ_max < 1`.
    #[default]
    PowerLimited,
}

impl DisFallback {
    pub fn parse(s: &str) -> Option<DisFallback> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "never" => Some(DisFallback::Never),
            "power_limited" => Some(DisFallback::PowerLimited),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DisFallback::Never => "never",
            DisFallback::PowerLimited => "power_limited",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axes {
    pub gamma_bar_db: Vec<f64>,
    pub xi: Vec<f64>,
    /// Steering factor for `IS_FIXED`; other schemes ignore it.
    pub rho: Vec<f64>,
    pub n_t0: Vec<usize>,
    pub n_t1: Vec<usize>,
    pub n_r0: Vec<usize>,
    pub m_streams: Vec<usize>,
    pub n_interferences: Vec<usize>,
}

impl Default for Axes {
    fn default() -> Self {
        Axes {
            gamma_bar_db: vec![10.0],
            xi: vec![1.0],
            rho: vec![0.5],
            n_t0: vec![2],
            n_t1: vec![2],
            n_r0: vec![2],
            m_streams: vec![1],
            n_interferences: vec![1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axes: Axes,
    pub schemes: Vec<Scheme>,
    pub drops_per_point: usize,
    pub master_seed: u64,
    pub fallback: Fallback,
    pub budget_split: BudgetSplit,
    pub dis_fallback: DisFallback,
    pub output_path: Option<String>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            axes: Axes::default(),
            schemes: vec![Scheme::Dis],
            drops_per_point: DEFAULT_DROPS_PER_POINT,
            master_seed: 0,
            fallback: Fallback::Zf,
            budget_split: BudgetSplit::Equal,
            dis_fallback: DisFallback::PowerLimited,
            output_path: None,
        }
    }
}

fn nonempty<T>(v: &[T], field: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::config(field, "axis must not be empty"));
    }
    Ok(())
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let a = &self.axes;
        nonempty(&a.gamma_bar_db, "gamma_bar_db")?;
        nonempty(&a.xi, "xi")?;
        nonempty(&a.rho, "rho")?;
        nonempty(&a.n_t0, "n_t0")?;
        nonempty(&a.n_t1, "n_t1")?;
        nonempty(&a.n_r0, "n_r0")?;
        nonempty(&a.m_streams, "m_streams")?;
        nonempty(&a.n_interferences, "n_interferences")?;
        if self.schemes.is_empty() {
            return Err(Error::config("schemes", "at least one scheme is required"));
        }
        if self.drops_per_point == 0 {
            return Err(Error::config("drops_per_point", "must be at least 1"));
        }
        if let Some(g) = a.gamma_bar_db.iter().find(|g| !g.is_finite()) {
            return Err(Error::config("gamma_bar_db", format!("{g} is not finite")));
        }
        if let Some(x) = a.xi.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::config("xi", format!("{x} must be positive and finite")));
        }
        if let Some(r) = a.rho.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::config("rho", format!("{r} is outside (0, 1]")));
        }
        for &n_r0 in &a.n_r0 {
            if n_r0 < 2 {
                return Err(Error::config("n_r0", "PUE needs at least 2 antennas"));
            }
            if let Some(t) = a.n_t0.iter().find(|&&t| t < n_r0) {
                return Err(Error::config(
                    "n_r0",
                    format!("{n_r0} receive antennas exceed n_t0 = {t}"),
                ));
            }
        }
        if let Some(t) = a.n_t1.iter().find(|&&t| t < 2) {
            return Err(Error::config("n_t1", format!("{t} is below 2")));
        }
        let min_dim = a.n_t0.iter().chain(&a.n_r0).min().copied().unwrap_or(0);
        if let Some(m) = a.m_streams.iter().find(|&&m| m == 0 || m > min_dim) {
            return Err(Error::config(
                "m_streams",
                format!("{m} streams do not fit {min_dim} PBS/PUE antennas"),
            ));
        }
        let min_t1 = a.n_t1.iter().min().copied().unwrap_or(0);
        if let Some(n) = a.n_interferences.iter().find(|&&n| n == 0 || n > min_t1) {
            return Err(Error::config(
                "n_interferences",
                format!("{n} MBS streams do not fit {min_t1} MBS antennas"),
            ));
        }
        Ok(())
    }

    fn geometry_points(&self) -> Vec<GeometryPoint> {
        let a = &self.axes;
        let mut out = Vec::new();
        for &n_t0 in &a.n_t0 {
            for &n_t1 in &a.n_t1 {
                for &n_r0 in &a.n_r0 {
                    for &m in &a.m_streams {
                        for &n in &a.n_interferences {
                            out.push(GeometryPoint {
                                index: out.len() as u64,
                                antennas: Antennas::new(n_t0, n_t1, n_r0),
                                m_streams: m,
                                n_interferences: n,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One aggregated output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma_bar_db: f64,
    pub xi: f64,
    pub rho: f64,
    pub n_t0: usize,
    pub n_t1: usize,
    pub n_r0: usize,
    pub m_streams: usize,
    pub n_interferences: usize,
    pub scheme: Scheme,
    pub mean_se: f64,
    pub mean_rho_star: Option<f64>,
    pub prob_overhead_exceeds: f64,
    pub prob_infeasible: f64,
    pub n_drops: usize,
    pub stderr_se: f64,
}

impl SweepRow {
    fn sort_key(&self) -> impl Ord {
        (
            float_key(self.gamma_bar_db),
            float_key(self.xi),
            float_key(self.rho),
            (self.n_t0, self.n_t1, self.n_r0, self.m_streams, self.n_interferences),
            self.scheme,
        )
    }
}

/// Integer key ordered like `f64::total_cmp`.
fn float_key(x: f64) -> i64 {
    let b = x.to_bits() as i64;
    b ^ (((b >> 63) as u64) >> 1) as i64
}

/// Exceedance curve `Prob(P_overhead / p0e > p̄)` at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub gamma_bar_db: f64,
    pub xi: f64,
    pub rho: f64,
    pub n_t0: usize,
    pub n_t1: usize,
    pub n_r0: usize,
    pub m_streams: usize,
    pub n_interferences: usize,
    pub scheme: Scheme,
    pub p_bar: f64,
    pub prob_exceeds: f64,
}

#[derive(Debug, Clone, Copy)]
struct GeometryPoint {
    index: u64,
    antennas: Antennas,
    m_streams: usize,
    n_interferences: usize,
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Neumaier) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Default)]
struct Acc {
    n: usize,
    se: Neumaier,
    se2: Neumaier,
    rho: Neumaier,
    rho_n: usize,
    exceeds: usize,
    infeasible: usize,
    curve: Vec<usize>,
}

impl Acc {
    fn new(curve_len: usize) -> Self {
        Acc {
            curve: vec![0; curve_len],
            ..Acc::default()
        }
    }

    fn push(&mut self, e: &Evaluation, p0e: f64, grid: &[f64]) {
        let se = e.result.se_bits;
        self.n += 1;
        self.se.add(se);
        self.se2.add(se * se);
        if let Some(r) = e.rho_star {
            self.rho.add(r);
            self.rho_n += 1;
        }
        let ratio = e.result.power_overhead_e / p0e;
        if ratio > 1.0 {
            self.exceeds += 1;
        }
        if !e.result.feasible {
            self.infeasible += 1;
        }
        for (c, &g) in self.curve.iter_mut().zip(grid) {
            if ratio > g {
                *c += 1;
            }
        }
    }

    fn merge(&mut self, o: &Acc) {
        self.n += o.n;
        self.se.merge(&o.se);
        self.se2.merge(&o.se2);
        self.rho.merge(&o.rho);
        self.rho_n += o.rho_n;
        self.exceeds += o.exceeds;
        self.infeasible += o.infeasible;
        for (a, b) in self.curve.iter_mut().zip(&o.curve) {
            *a += b;
        }
    }

    fn mean_se(&self) -> f64 {
        self.se.value() / self.n as f64
    }

    fn stderr_se(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.mean_se();
        let var = ((self.se2.value() - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Per-drop evaluation knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub fallback: Fallback,
    pub dis_fallback: DisFallback,
    pub budget_split: BudgetSplit,
}

impl From<&SweepSpec> for EvalOptions {
    fn from(s: &SweepSpec) -> Self {
        EvalOptions {
            fallback: s.fallback,
            dis_fallback: s.dis_fallback,
            budget_split: s.budget_split,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub result: SchemeResult,
    /// Mean optimal steering factor (DIS only).
    pub rho_star: Option<f64>,
}

/// Applies `scheme` to one geometry under one power allocation. `rho` is
/// only used by `IS_FIXED`.
pub fn evaluate(
    geo: &LinkGeometry,
    pw: &Powers,
    scheme: Scheme,
    rho: f64,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    let result = match scheme {
        Scheme::Mf => geo.mf(pw),
        Scheme::Zf => geo.zf(pw),
        Scheme::Zfbf => geo.zfbf(pw, opts.fallback)?,
        Scheme::In => geo.neutralize(pw, opts.fallback),
        Scheme::Ois => geo.ois(pw, opts.fallback),
        Scheme::IsFixed => geo.is_fixed(pw, rho, opts.fallback)?,
        Scheme::Dis => {
            let p = plan(geo, pw, opts.budget_split);
            let steered = geo.steer(pw, &p.rho, Scheme::Dis, opts.fallback)?;
            let rhos: Vec<f64> = p.rho.iter().flatten().copied().collect();
            let rho_star = rhos.iter().sum::<f64>() / rhos.len() as f64;
            let result = if opts.dis_fallback == DisFallback::PowerLimited && p.power_limited {
                geo.fall_back(steered, pw, opts.fallback)
            } else {
                steered
            };
            return Ok(Evaluation {
                result,
                rho_star: Some(rho_star),
            });
        }
    };
    Ok(Evaluation {
        result,
        rho_star: None,
    })
}

/// Channel seed for drop `drop` of a geometry point.
pub fn drop_seed(master: u64, point: u64, drop: u64) -> DropSeed {
    DropSeed::new(master, point, drop)
}

fn channel_drop(spec: &SweepSpec, gp: &GeometryPoint, d: u64) -> Result<crate::channel::Drop> {
    // the channel draw does not depend on the budget; powers are applied later
    let unit = LinkBudget::from_powers(1.0, 1.0, 1.0)?;
    make_drop(
        &unit,
        &DropSpec::new(gp.antennas, gp.n_interferences),
        drop_seed(spec.master_seed, gp.index, d),
    )
}

struct Layout {
    budgets: Vec<LinkBudget>,
    n_xi: usize,
    n_rho: usize,
    n_schemes: usize,
}

impl Layout {
    fn cell(&self, power: usize, scheme: usize, rho: usize) -> usize {
        (power * self.n_schemes + scheme) * self.n_rho + rho
    }

    fn n_cells(&self) -> usize {
        self.budgets.len() * self.n_schemes * self.n_rho
    }
}

fn accumulate_drop(
    spec: &SweepSpec,
    gp: &GeometryPoint,
    layout: &Layout,
    d: u64,
    grid: &[f64],
    acc: &mut [Acc],
) -> Result<()> {
    let drop = channel_drop(spec, gp, d)?;
    let geo = LinkGeometry::new(&drop, gp.m_streams)?;
    let opts = EvalOptions::from(spec);
    for (pi, budget) in layout.budgets.iter().enumerate() {
        let pw = Powers::equal(budget, gp.m_streams, &geo.shares);
        for (si, &scheme) in spec.schemes.iter().enumerate() {
            if scheme == Scheme::IsFixed {
                for (ri, &rho) in spec.axes.rho.iter().enumerate() {
                    let e = evaluate(&geo, &pw, scheme, rho, &opts)?;
                    check(&e.result, d)?;
                    acc[layout.cell(pi, si, ri)].push(&e, budget.p0e, grid);
                }
            } else {
                let e = evaluate(&geo, &pw, scheme, 0.0, &opts)?;
                check(&e.result, d)?;
                acc[layout.cell(pi, si, 0)].push(&e, budget.p0e, grid);
            }
        }
    }
    Ok(())
}

fn check(r: &SchemeResult, d: u64) -> Result<()> {
    if !r.se_bits.is_finite() || r.se_bits < 0.0 || !r.power_overhead_e.is_finite() {
        return Err(Error::Numerical(format!(
            "{} produced se={} overhead={} on drop {d}",
            r.scheme, r.se_bits, r.power_overhead_e
        )));
    }
    Ok(())
}

struct Aggregated {
    rows: Vec<SweepRow>,
    curve: Vec<CurvePoint>,
}

fn run(spec: &SweepSpec, with_curve: bool) -> Result<Aggregated> {
    spec.validate()?;
    let grid = if with_curve { curve_grid() } else { Vec::new() };
    let mut budgets = Vec::new();
    for &g in &spec.axes.gamma_bar_db {
        for &x in &spec.axes.xi {
            budgets.push(budget_normalized(g, x).map_err(|e| Error::config("xi", e.to_string()))?);
        }
    }
    let layout = Layout {
        budgets,
        n_xi: spec.axes.xi.len(),
        n_rho: spec.axes.rho.len(),
        n_schemes: spec.schemes.len(),
    };
    let drops = spec.drops_per_point as u64;
    let chunks: Vec<(u64, u64)> = (0..drops)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK as u64).min(drops)))
        .collect();

    let mut rows = Vec::new();
    let mut curve = Vec::new();
    for gp in spec.geometry_points() {
        let mut total = vec![Acc::new(grid.len()); layout.n_cells()];
        for batch in chunks.chunks(BATCH) {
            let partials: Vec<Result<Vec<Acc>>> = batch
                .par_iter()
                .map(|&(lo, hi)| {
                    let mut acc = vec![Acc::new(grid.len()); layout.n_cells()];
                    for d in lo..hi {
                        accumulate_drop(spec, &gp, &layout, d, &grid, &mut acc)?;
                    }
                    Ok(acc)
                })
                .collect();
            for part in partials {
                for (t, p) in total.iter_mut().zip(&part?) {
                    t.merge(p);
                }
            }
        }
        emit(spec, &gp, &layout, &total, &grid, &mut rows, &mut curve);
    }
    rows.sort_by_cached_key(|r| r.sort_key());
    curve.sort_by_cached_key(|c| {
        (
            float_key(c.gamma_bar_db),
            float_key(c.xi),
            float_key(c.rho),
            (c.n_t0, c.n_t1, c.n_r0, c.m_streams, c.n_interferences),
            c.scheme,
            float_key(c.p_bar),
        )
    });
    Ok(Aggregated { rows, curve })
}

fn emit(
    spec: &SweepSpec,
    gp: &GeometryPoint,
    layout: &Layout,
    total: &[Acc],
    grid: &[f64],
    rows: &mut Vec<SweepRow>,
    curve: &mut Vec<CurvePoint>,
) {
    let a = gp.antennas;
    for (pi, budget) in layout.budgets.iter().enumerate() {
        let gamma = spec.axes.gamma_bar_db[pi / layout.n_xi];
        let xi = spec.axes.xi[pi % layout.n_xi];
        debug_assert_eq!(budget.xi, xi);
        for (si, &scheme) in spec.schemes.iter().enumerate() {
            for (ri, &rho) in spec.axes.rho.iter().enumerate() {
                let src = if scheme == Scheme::IsFixed { ri } else { 0 };
                let acc = &total[layout.cell(pi, si, src)];
                let n = acc.n as f64;
                rows.push(SweepRow {
                    gamma_bar_db: gamma,
                    xi,
                    rho,
                    n_t0: a.n_t0,
                    n_t1: a.n_t1,
                    n_r0: a.n_r0,
                    m_streams: gp.m_streams,
                    n_interferences: gp.n_interferences,
                    scheme,
                    mean_se: acc.mean_se(),
                    mean_rho_star: (acc.rho_n > 0).then(|| acc.rho.value() / acc.rho_n as f64),
                    prob_overhead_exceeds: acc.exceeds as f64 / n,
                    prob_infeasible: acc.infeasible as f64 / n,
                    n_drops: acc.n,
                    stderr_se: acc.stderr_se(),
                });
                for (k, &p_bar) in grid.iter().enumerate() {
                    curve.push(CurvePoint {
                        gamma_bar_db: gamma,
                        xi,
                        rho,
                        n_t0: a.n_t0,
                        n_t1: a.n_t1,
                        n_r0: a.n_r0,
                        m_streams: gp.m_streams,
                        n_interferences: gp.n_interferences,
                        scheme,
                        p_bar,
                        prob_exceeds: acc.curve[k] as f64 / n,
                    });
                }
            }
        }
    }
}

/// Evaluates every point of the Cartesian product of the axes.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    Ok(run(spec, false)?.rows)
}

/// Overhead exceedance at `p̄ = 1` per point, plus the full normalized
/// exceedance curve over [`curve_grid`].
pub fn prob_overhead(spec: &SweepSpec) -> Result<(Vec<SweepRow>, Vec<CurvePoint>)> {
    if let Some(s) = spec.schemes.iter().find(|s| !s.spends_power()) {
        return Err(Error::config(
            "schemes",
            format!("{s} has no power overhead; use IN, OIS, IS_FIXED or DIS"),
        ));
    }
    let agg = run(spec, true)?;
    Ok((agg.rows, agg.curve))
}

/// Runs `f` on a dedicated pool with `threads` workers (or the global pool).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::config("threads", "must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Per-scheme results of one drop at the first value of every axis.
#[derive(Debug, Clone, Serialize)]
pub struct DropReport {
    pub seed: DropSeed,
    pub gamma_bar_db: f64,
    pub xi: f64,
    pub rho: f64,
    pub antennas: Antennas,
    pub m_streams: usize,
    pub n_interferences: usize,
    pub results: Vec<DropSchemeReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DropSchemeReport {
    pub result: SchemeResult,
    pub rho_star: Option<f64>,
}

pub fn single_drop(spec: &SweepSpec, drop_index: u64) -> Result<DropReport> {
    spec.validate()?;
    let gp = spec.geometry_points()[0];
    let (g, x, rho) = (spec.axes.gamma_bar_db[0], spec.axes.xi[0], spec.axes.rho[0]);
    let budget = budget_normalized(g, x)?;
    let drop = channel_drop(spec, &gp, drop_index)?;
    let geo = LinkGeometry::new(&drop, gp.m_streams)?;
    let pw = Powers::equal(&budget, gp.m_streams, &geo.shares);
    let opts = EvalOptions::from(spec);
    let results = spec
        .schemes
        .iter()
        .map(|&s| {
            evaluate(&geo, &pw, s, rho, &opts).map(|e| DropSchemeReport {
                result: e.result,
                rho_star: e.rho_star,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DropReport {
        seed: drop.seed,
        gamma_bar_db: g,
        xi: x,
        rho,
        antennas: gp.antennas,
        m_streams: gp.m_streams,
        n_interferences: gp.n_interferences,
        results,
    })
}
