//! Randomised invariants. Systems are drawn from a seed so failures shrink to a
//! reproducible seed rather than to a matrix.

use nalgebra::{DMatrix, DVector};
use netrecon::families::{directed_laplacian, directed_sparse, nonreciprocal_ring, sample_stable, symmetric, WeightRange};
use netrecon::graph::GroundedIndex;
use netrecon::linalg::{hermitian_eigenvalues, inf_norm, max_abs};
use netrecon::lti::{analytic_cpsd, nodal_transfer, network_transfer_closed, network_transfer_direct, product_form_cpsd, FlatPsd};
use netrecon::reconstruct::{
    analytic_experiment, boolean_directed, exact_directed, exact_undirected, nonreciprocal, offdiagonal_magnitudes,
    threshold_heuristic, BranchOptions, Threshold, DEFAULT_TAU,
};
use netrecon::sim::{simulate, simulate_grounded, NoiseConfig, SimConfig};
use netrecon::spectral::{estimate_cpsd_matrix, SpectralConfig};
use netrecon::{ConnectivityMatrix, NetworkSystem, NodeDynamics};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_node(rng: &mut ChaCha8Rng) -> NodeDynamics {
    loop {
        let n = rng.random_range(1..=3);
        let a = DMatrix::from_fn(n, n, |r, c| rng.random_range(-1.0..1.0) - if r == c { 1.5 } else { 0.0 });
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if b.norm() < 0.2 || c.norm() < 0.2 {
            continue;
        }
        let node = NodeDynamics::new(a, b, c).unwrap();
        if NetworkSystem::new(node.clone(), ConnectivityMatrix::zeros(1)).stability().unwrap().hurwitz {
            return node;
        }
    }
}

fn random_system(seed: u64) -> NetworkSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let node = random_node(&mut rng);
        let n = rng.random_range(1..=8);
        let draw = |r: &mut ChaCha8Rng| {
            ConnectivityMatrix::new(DMatrix::from_fn(n, n, |_, _| {
                if r.random_bool(0.4) {
                    r.random_range(-0.6..0.6)
                } else {
                    0.0
                }
            }))
            .unwrap()
        };
        if let Ok(sys) = sample_stable(&node, 20, &mut rng, draw) {
            return sys;
        }
    }
}

fn w() -> WeightRange {
    WeightRange::new(0.3, 1.0).unwrap()
}

fn scalar() -> NodeDynamics {
    NodeDynamics::scalar_pole(1.0)
}

/// Stable directed network of scalar nodes with `2 ≤ N ≤ 10`.
fn random_directed(seed: u64) -> NetworkSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=10);
    if rng.random_bool(0.5) {
        sample_stable(&scalar(), 100, &mut rng, |r| directed_laplacian(n, 0.3, w(), r)).unwrap()
    } else {
        sample_stable(&scalar(), 100, &mut rng, |r| directed_sparse(n, 0.2, w(), r)).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn woodbury_routes_agree(seed in any::<u64>(), omega in 0.05f64..5.0) {
        let sys = random_system(seed);
        let direct = network_transfer_direct(&sys, omega).unwrap();
        let closed = network_transfer_closed(&sys, omega).unwrap();
        prop_assert!(inf_norm(&(closed - &direct)) <= 1e-9 * inf_norm(&direct));
    }

    #[test]
    fn cpsd_formulas_agree(seed in any::<u64>(), omega in 0.05f64..5.0) {
        let sys = random_system(seed);
        let a = analytic_cpsd(&sys, &FlatPsd { level: 0.7, band: 10.0 }, omega).unwrap();
        let b = product_form_cpsd(&sys, 0.7, omega).unwrap();
        prop_assert!(max_abs(&(a.values() - b.values())) <= 1e-9 * max_abs(b.values()));
    }

    #[test]
    fn analytic_cpsd_is_hermitian_positive_definite(seed in any::<u64>(), omega in 0.05f64..5.0) {
        let sys = random_system(seed);
        let s = analytic_cpsd(&sys, &FlatPsd { level: 1.0, band: 10.0 }, omega).unwrap();
        let scale = max_abs(s.values());
        prop_assert!(s.hermitian_defect() <= 1e-12 * scale);
        let eig = hermitian_eigenvalues(s.values());
        prop_assert!(eig.iter().all(|&e| e >= -1e-12 * scale), "{eig:?}");
    }

    #[test]
    fn negative_frequency_is_the_transpose(seed in any::<u64>(), omega in 0.05f64..5.0) {
        let sys = random_system(seed);
        let psd = FlatPsd { level: 1.0, band: 10.0 };
        let pos = analytic_cpsd(&sys, &psd, omega).unwrap();
        let neg = analytic_cpsd(&sys, &psd, -omega).unwrap();
        prop_assert!(max_abs(&(neg.values() - pos.values().transpose())) <= 1e-12 * max_abs(pos.values()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_directed_recovery_is_exact(seed in any::<u64>(), omega in 0.1f64..3.0) {
        let sys = random_directed(seed);
        let h = nodal_transfer(sys.node(), omega).unwrap();
        let (s, gr) = analytic_experiment(sys.connectivity(), h, 1.0, omega).unwrap();
        let exact = exact_directed(&s, &gr, 1.0, Threshold::Fixed(DEFAULT_TAU)).unwrap();
        let truth = offdiagonal_magnitudes(sys.connectivity());
        prop_assert!((exact.weights.unwrap().weights() - &truth).amax() <= 1e-8);
        prop_assert_eq!(exact.diagnostics.clamp_count, 0);
        let b = boolean_directed(&s, &gr, Threshold::Fixed(DEFAULT_TAU)).unwrap().boolean_structure.unwrap();
        let expected = truth.map(|x| x > DEFAULT_TAU);
        prop_assert_eq!(b.entries(), &expected);
    }

    #[test]
    fn recovery_is_invariant_to_frequency_and_level(seed in any::<u64>(), w1 in 0.1f64..3.0, w2 in 0.1f64..3.0, level in 0.1f64..10.0) {
        let sys = random_directed(seed);
        let recover = |omega: f64, s_w: f64| {
            let h = nodal_transfer(sys.node(), omega).unwrap();
            let (s, gr) = analytic_experiment(sys.connectivity(), h, s_w, omega).unwrap();
            exact_directed(&s, &gr, s_w, Threshold::Fixed(DEFAULT_TAU)).unwrap().weights.unwrap().weights().clone()
        };
        let base = recover(w1, 1.0);
        prop_assert!((recover(w2, 1.0) - &base).amax() <= 1e-8);
        prop_assert!((recover(w1, level) - &base).amax() <= 1e-8);
        prop_assert!((recover(w1, 2.0) - &base).amax() <= 1e-8);
    }

    #[test]
    fn nonreciprocal_agrees_with_grounding(seed in any::<u64>(), omega in 0.2f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(3..=8);
        let sys = sample_stable(&scalar(), 100, &mut rng, |r| nonreciprocal_ring(n, 0.3, w(), r)).unwrap();
        let h = nodal_transfer(sys.node(), omega).unwrap();
        let (s, gr) = analytic_experiment(sys.connectivity(), h, 1.0, omega).unwrap();
        let a = nonreciprocal(&s, h, Some(1.0), Threshold::Fixed(DEFAULT_TAU)).unwrap();
        let b = exact_directed(&s, &gr, 1.0, Threshold::Fixed(DEFAULT_TAU)).unwrap();
        prop_assert!((a.weights.unwrap().weights() - b.weights.unwrap().weights()).amax() <= 1e-8);
    }

    #[test]
    fn undirected_recovery_is_the_identity(seed in any::<u64>(), omega in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=8);
        let sys = sample_stable(&scalar(), 100, &mut rng, |r| symmetric(n, 0.4, WeightRange::new(0.05, 0.4).unwrap(), r)).unwrap();
        let h = nodal_transfer(sys.node(), omega).unwrap();
        let s = analytic_cpsd(&sys, &FlatPsd { level: 1.0, band: 10.0 }, omega).unwrap();
        let opts = BranchOptions { node: Some(scalar()), ..BranchOptions::default() };
        let rec = exact_undirected(&s, h, 1.0, &opts).unwrap();
        prop_assert!((rec.g.weights() - sys.connectivity().weights()).amax() <= 1e-8);
    }

    #[test]
    fn gap_threshold_separates_or_falls_back(vals in proptest::collection::vec(1e-6f64..1e3, 2..40), fallback in 1e-9f64..1.0) {
        let t = threshold_heuristic(&vals, fallback);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(0.0, f64::max);
        if hi / lo < 10.0 {
            prop_assert_eq!(t, fallback);
        } else {
            prop_assert!(lo < t && t < hi);
            prop_assert!(vals.iter().all(|&v| v != t));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulation_is_deterministic_and_labelled(seed in any::<u64>(), j in 1usize..=5) {
        let sys = random_directed(seed);
        let n = sys.n_nodes();
        let noise = NoiseConfig::white(1.0, seed);
        let cfg = SimConfig::new(0.01, 4096);
        prop_assert_eq!(simulate(&sys, &noise, &cfg).unwrap(), simulate(&sys, &noise, &cfg).unwrap());
        let j = GroundedIndex::new((j - 1) % n + 1).unwrap();
        let g = simulate_grounded(&sys, j, &noise, &cfg).unwrap();
        prop_assert_eq!(g.n_channels(), n - 1);
        let expected: Vec<usize> = (1..=n).filter(|&l| l != j.get()).collect();
        prop_assert_eq!(g.labels(), expected.as_slice());
    }

    #[test]
    fn estimator_is_hermitian_and_quadratic(seed in any::<u64>(), alpha in 0.1f64..10.0) {
        let sys = random_directed(seed);
        let ts = simulate(&sys, &NoiseConfig::white(1.0, seed), &SimConfig::new(0.01, 8192)).unwrap();
        let cfg = SpectralConfig { segment_length: 512, ..SpectralConfig::default() };
        let s = estimate_cpsd_matrix(&ts, 0.5, &cfg).unwrap();
        prop_assert_eq!(s.hermitian_defect(), 0.0);
        prop_assert!((0..s.n_nodes()).all(|i| s.values()[(i, i)].re >= 0.0 && s.values()[(i, i)].im == 0.0));
        let scaled = estimate_cpsd_matrix(&ts.scaled(alpha), 0.5, &cfg).unwrap();
        let expect = s.values() * num_complex::Complex64::new(alpha * alpha, 0.0);
        prop_assert!(max_abs(&(scaled.values() - &expect)) <= 1e-12 * max_abs(&expect));
    }
}
