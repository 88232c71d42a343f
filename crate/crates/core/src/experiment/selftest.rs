//! Quick oracle and invariant checks behind `steersim selftest`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{budget_normalized, make_drop, rayleigh, Antennas, Drop, DropSeed, DropSpec};
use crate::error::Result;
use crate::experiment::{run_sweep, with_threads, SweepSpec};
use crate::numkit::{inner, pinv, svd};
use crate::schemes::{self, geometry, shannon_se, Fallback, Scheme, SchemeResult};
use crate::steering::{optimal_rho, rho_max, RhoCoefficients};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

const DROPS: u64 = 200;
const SEED: u64 = 0x5e1f_7e57;

fn drops(gamma: f64, xi: f64, n: usize) -> Result<Vec<Drop>> {
    let b = budget_normalized(gamma, xi)?;
    let spec = DropSpec::new(Antennas::default(), n);
    (0..DROPS)
        .map(|d| make_drop(&b, &spec, DropSeed::new(SEED, 0, d)))
        .collect()
}

fn outcome(name: &'static str, failures: usize, total: usize, worst: f64) -> SuiteOutcome {
    SuiteOutcome {
        name,
        passed: failures == 0,
        detail: format!("{failures}/{total} violations, worst {worst:.3e}"),
    }
}

fn svd_reconstruction() -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut bad, mut worst, mut total) = (0, 0.0f64, 0);
    for _ in 0..100 {
        let (r, c) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let a = rayleigh(r, c, &mut rng)?;
        let err = (&svd(&a)?.reconstruct() - &a).frobenius_norm() / a.frobenius_norm();
        let p = pinv(&a)?;
        let penrose = (&a.matmul(&p)?.matmul(&a)? - &a).frobenius_norm() / a.frobenius_norm();
        let e = err.max(penrose);
        worst = worst.max(e);
        bad += usize::from(e > 1e-10);
        total += 1;
    }
    Ok(outcome("svd_and_pinv", bad, total, worst))
}

fn grid_argmax(k: &RhoCoefficients, hi: f64, step: f64) -> f64 {
    let n = (hi / step).floor() as usize;
    let mut best = (0.0, k.sinr(0.0));
    for i in 1..=n + 1 {
        let r = (i as f64 * step).min(hi);
        let v = k.sinr(r);
        if v > best.1 {
            best = (r, v);
        }
    }
    best.0
}

fn closed_form() -> Result<Vec<SuiteOutcome>> {
    let (mut bad_opt, mut bad_root, mut worst, mut total) = (0, 0, 0.0f64, 0);
    for (g, x) in [(0.0, 0.1), (5.0, 1.0), (20.0, 10.0), (30.0, 100.0)] {
        for d in drops(g, x, 1)? {
            let sg = geometry(&d)?;
            let sol = optimal_rho(&d)?;
            let limit = rho_max(&d)?;
            let k = RhoCoefficients::new(
                d.budget.p0e,
                d.budget.p1e,
                d.budget.sigma2,
                sg.lambda,
                sg.chi.norm_sqr(),
                sg.g.norm_sqr(),
            );
            let err = (sol.rho_star - grid_argmax(&k, limit.value, 1e-4)).abs();
            worst = worst.max(err);
            bad_opt += usize::from(err > 1e-3);
            if !sol.degenerate {
                bad_root += usize::from(!(sol.delta > 0.0 && sol.rho_plus > sol.rho_max));
            }
            total += 1;
        }
    }
    Ok(vec![
        outcome("closed_form_vs_grid", bad_opt, total, worst),
        outcome("root_rejection", bad_root, total, 0.0),
    ])
}

fn all_schemes(d: &Drop) -> Result<Vec<SchemeResult>> {
    Ok(vec![
        schemes::mf(d)?,
        schemes::zf_rx(d)?,
        schemes::zfbf(d, Fallback::Mf)?,
        schemes::in_scheme(d, Fallback::Zf)?,
        schemes::ois(d, Fallback::Mf)?,
        schemes::is_fixed(d, 0.5, Fallback::Zf)?,
        crate::steering::dis(d)?,
    ])
}

fn shannon_and_nulling() -> Result<Vec<SuiteOutcome>> {
    let (mut bad_sh, mut bad_null, mut worst, mut total) = (0, 0, 0.0f64, 0);
    for (g, x) in [(0.0, 1.0), (20.0, 0.1)] {
        for d in drops(g, x, 1)? {
            for r in all_schemes(&d)? {
                let e = (r.se_bits
                    - shannon_se(r.desired_power, r.residual_interference, d.budget.sigma2))
                .abs();
                worst = worst.max(e);
                bad_sh += usize::from(e > 1e-12);
                let nulls = matches!(r.scheme, Scheme::Zf | Scheme::Zfbf)
                    || (r.scheme == Scheme::In && r.feasible);
                if nulls && r.fallback_applied.is_none() {
                    bad_null += usize::from(r.residual_interference > 1e-15);
                }
                total += 1;
            }
        }
    }
    Ok(vec![
        outcome("shannon_form", bad_sh, total, worst),
        outcome("nulling_residual", bad_null, total, 0.0),
    ])
}

fn steered_decomposition() -> Result<SuiteOutcome> {
    let (mut bad, mut worst, mut total) = (0, 0.0f64, 0);
    for d in drops(10.0, 1.0, 1)? {
        let sg = geometry(&d)?;
        for rho in [0.25, 0.5, 0.75, 1.0] {
            // steering signal as received: -ρ sqrt(p1e) h0 g
            let st = d
                .h0
                .mul_vec(&sg.g)?
                .scale_real(-rho * d.budget.p1e.sqrt());
            let lhs = &sg.i_vec + &st;
            let rhs = &sg.i_in.scale_real(1.0 - rho) + &sg.i_quad;
            let e = (&lhs - &rhs).norm() / sg.i_vec.norm().max(1e-300);
            let leak = inner(&sg.d_s, &sg.i_quad)?.norm() / sg.i_vec.norm().max(1e-300);
            worst = worst.max(e.max(leak));
            bad += usize::from(e > 1e-9 || leak > 1e-9);
            total += 1;
        }
    }
    Ok(outcome("steered_decomposition", bad, total, worst))
}

fn determinism() -> Result<SuiteOutcome> {
    let spec = SweepSpec {
        schemes: vec![Scheme::Dis, Scheme::In, Scheme::IsFixed],
        drops_per_point: 300,
        master_seed: SEED,
        ..SweepSpec::default()
    };
    let a = with_threads(Some(1), || run_sweep(&spec))??;
    let b = with_threads(Some(4), || run_sweep(&spec))??;
    Ok(SuiteOutcome {
        name: "thread_determinism",
        passed: a == b,
        detail: format!("{} rows compared", a.len()),
    })
}

/// Runs every suite; an `Err` means a suite could not run at all.
pub fn run_all() -> Result<Vec<SuiteOutcome>> {
    let mut out = vec![svd_reconstruction()?];
    out.extend(closed_form()?);
    out.extend(shannon_and_nulling()?);
    out.push(steered_decomposition()?);
    out.push(determinism()?);
    Ok(out)
}
