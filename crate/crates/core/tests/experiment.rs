mod common;

use common::default_drop;
use steersim::experiment::{prob_overhead, run_sweep, Axes, SweepSpec};
use steersim::schemes::{Fallback, Scheme};
use steersim::steering::optimal_rho;

fn spec(schemes: Vec<Scheme>, axes: Axes, drops: usize) -> SweepSpec {
    SweepSpec {
        axes,
        schemes,
        drops_per_point: drops,
        master_seed: 11,
        ..SweepSpec::default()
    }
}

#[test]
fn stderr_shrinks_like_inverse_sqrt_of_drops() {
    let small = run_sweep(&spec(vec![Scheme::Mf], Axes::default(), 1000)).unwrap();
    let large = run_sweep(&spec(vec![Scheme::Mf], Axes::default(), 16_000)).unwrap();
    let ratio = small[0].stderr_se / large[0].stderr_se;
    // sqrt(16) = 4; allow for the spread of the sample std itself
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn is_fixed_rho_curve_peaks_near_mean_rho_star() {
    let rhos: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let axes = Axes {
        gamma_bar_db: vec![10.0],
        xi: vec![1.0],
        rho: rhos.clone(),
        ..Axes::default()
    };
    let mut s = spec(vec![Scheme::IsFixed], axes, 4000);
    s.fallback = Fallback::Mf;
    let rows = run_sweep(&s).unwrap();
    let best = rows
        .iter()
        .max_by(|a, b| a.mean_se.total_cmp(&b.mean_se))
        .unwrap()
        .rho;
    let predicted: f64 = (0..4000)
        .map(|d| optimal_rho(&default_drop(11, d, 10.0, 1.0)).unwrap().rho_star)
        .sum::<f64>()
        / 4000.0;
    assert!((best - predicted).abs() <= 0.1 + 1e-12, "argmax {best}, mean rho* {predicted}");
    // rising then falling
    let se: Vec<f64> = rows.iter().map(|r| r.mean_se).collect();
    assert!(se[0] < se.iter().cloned().fold(f64::MIN, f64::max));
}

#[test]
fn mean_rho_star_increases_with_xi() {
    let axes = Axes {
        gamma_bar_db: vec![5.0],
        xi: vec![0.1, 1.0, 10.0, 100.0],
        ..Axes::default()
    };
    let rows = run_sweep(&spec(vec![Scheme::Dis], axes, 4000)).unwrap();
    let rho: Vec<f64> = rows.iter().map(|r| r.mean_rho_star.unwrap()).collect();
    assert!(rho.windows(2).all(|w| w[1] > w[0]), "{rho:?}");
}

#[test]
fn huge_pbs_power_never_exceeds() {
    let axes = Axes {
        gamma_bar_db: vec![10.0],
        xi: vec![1e9],
        n_interferences: vec![1, 2],
        ..Axes::default()
    };
    let (rows, curve) =
        prob_overhead(&spec(vec![Scheme::In, Scheme::Ois, Scheme::Dis], axes, 2000)).unwrap();
    for r in &rows {
        assert_eq!(r.prob_overhead_exceeds, 0.0, "{:?}", r.scheme);
    }
    assert!(curve.iter().filter(|c| c.p_bar >= 1.0).all(|c| c.prob_exceeds == 0.0));
}

#[test]
fn multi_stream_and_multi_interference_points_run() {
    let axes = Axes {
        gamma_bar_db: vec![10.0],
        n_t0: vec![3],
        n_r0: vec![3],
        n_t1: vec![3],
        m_streams: vec![1, 2, 3],
        n_interferences: vec![1, 2, 3],
        ..Axes::default()
    };
    let mut s = spec(Scheme::ALL.iter().copied().filter(|&s| s != Scheme::Zfbf).collect(), axes, 200);
    s.budget_split = steersim::steering::BudgetSplit::Proportional;
    let rows = run_sweep(&s).unwrap();
    assert_eq!(rows.len(), 9 * 6);
    assert!(rows.iter().all(|r| r.mean_se.is_finite() && r.mean_se >= 0.0));
}

#[test]
fn zfbf_with_several_streams_is_a_domain_error() {
    let axes = Axes {
        n_t0: vec![3],
        n_r0: vec![3],
        m_streams: vec![2],
        ..Axes::default()
    };
    assert!(run_sweep(&spec(vec![Scheme::Zfbf], axes, 2)).is_err());
}
