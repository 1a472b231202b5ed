use netrecon::families::reference_five_node;
use netrecon::lti::{analytic_cpsd, nodal_transfer};
use netrecon::sim::{simulate, NoiseConfig, SimConfig};
use netrecon::spectral::{estimate_cpsd_matrix, select_omega0, welch_psd, SpectralConfig};
use netrecon::linalg::CMatrix;
use netrecon::{CpsdMatrix, CpsdSource, NetworkSystem, NodeDynamics};
use num_complex::Complex64;

fn reference() -> NetworkSystem {
    NetworkSystem::new(NodeDynamics::scalar_pole(1.0), reference_five_node())
}

/// Largest relative error over entries at least 5% of the largest magnitude.
fn max_rel_error(est: &CpsdMatrix, truth: &CpsdMatrix) -> f64 {
    let t = truth.values();
    let big = t.iter().map(|z| z.norm()).fold(0.0, f64::max);
    t.iter()
        .zip(est.values().iter())
        .filter(|(a, _)| a.norm() >= 0.05 * big)
        .map(|(a, b)| (a - b).norm() / a.norm())
        .fold(0.0, f64::max)
}

#[test]
fn reference_system_matches_analytic_cpsd() {
    let sys = reference();
    let dt = 0.01;
    let noise = NoiseConfig::white(1.0, 2024);
    let ts = simulate(&sys, &noise, &SimConfig::new(dt, 1 << 20)).unwrap();
    let est = estimate_cpsd_matrix(&ts, 0.5, &SpectralConfig::default()).unwrap();
    let truth = analytic_cpsd(&sys, &noise.input_psd(dt), est.omega()).unwrap();
    let err = max_rel_error(&est, &truth);
    println!("omega {} max relative error {err:.4}", est.omega());
    assert!(err <= 0.05, "max relative error {err}");
}

#[test]
fn error_shrinks_with_length() {
    let sys = reference();
    let dt = 0.01;
    for seed in [1u64, 2] {
        let noise = NoiseConfig::white(1.0, seed);
        let long = simulate(&sys, &noise, &SimConfig::new(dt, 1 << 18)).unwrap();
        let short = long.truncated(1 << 16);
        let cfg = SpectralConfig::default();
        let e_short = estimate_cpsd_matrix(&short, 0.5, &cfg).unwrap();
        let e_long = estimate_cpsd_matrix(&long, 0.5, &cfg).unwrap();
        let truth = analytic_cpsd(&sys, &noise.input_psd(dt), e_long.omega()).unwrap();
        let (a, b) = (max_rel_error(&e_short, &truth), max_rel_error(&e_long, &truth));
        println!("seed {seed}: 2^16 {a:.4}  2^18 {b:.4}");
        assert!(b < a);
    }
}

#[test]
fn auto_frequency_matches_dense_scan() {
    let sys = reference();
    let dt = 0.01;
    let ts = simulate(&sys, &NoiseConfig::white(1.0, 5), &SimConfig::new(dt, 1 << 17)).unwrap();
    let cfg = SpectralConfig::default();
    let band = 0.35 / dt;
    let chosen = select_omega0(&ts, band, &cfg, sys.node()).unwrap();
    // Independent scan over the same grid.
    let grid = welch_psd(&ts, &cfg).unwrap();
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for (k, &w) in grid.omegas.iter().enumerate().skip(2) {
        if w >= band || nodal_transfer(sys.node(), w).unwrap().norm() < 1e-6 {
            continue;
        }
        let worst = grid.psd.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
        if worst > best.1 {
            best = (w, worst);
        }
    }
    assert_eq!(chosen, best.0);
    // Low-pass nodes: the best bin sits at the low end of the band.
    assert!(chosen < 0.1 * band, "chose {chosen}");
    assert_eq!(select_omega0(&ts, band, &cfg, sys.node()).unwrap(), chosen);
}

/// The estimator is unbiased up to leakage: averaging independent runs shrinks
/// the error roughly like one over the square root of the run count.
#[test]
fn seed_average_converges_to_analytic() {
    let sys = reference();
    let dt = 0.01;
    let cfg = SpectralConfig::default();
    let seeds = 16u64;
    let mut acc = CMatrix::zeros(5, 5);
    let mut single = Vec::new();
    let mut truth = None;
    for seed in 0..seeds {
        let noise = NoiseConfig::white(1.0, 100 + seed);
        let ts = simulate(&sys, &noise, &SimConfig::new(dt, 1 << 20)).unwrap();
        let est = estimate_cpsd_matrix(&ts, 0.5, &cfg).unwrap();
        let t = analytic_cpsd(&sys, &noise.input_psd(dt), est.omega()).unwrap();
        single.push(max_rel_error(&est, &t));
        acc += est.values();
        truth = Some(t);
    }
    let t = truth.unwrap();
    let mean = CpsdMatrix::new(t.omega(), acc / Complex64::new(seeds as f64, 0.0), CpsdSource::Analytic).unwrap();
    single.sort_by(f64::total_cmp);
    let median = single[single.len() / 2];
    let averaged = max_rel_error(&mean, &t);
    println!("single-run median {median:.3}, {seeds}-run average {averaged:.3}");
    assert!(averaged < 0.5 * median);
}
