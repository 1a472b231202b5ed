//! Random and fixed network families used by experiments and tests.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{laplacian_connectivity, ConnectivityMatrix, Eigenpair};
use crate::lti::{NetworkSystem, NodeDynamics};

/// Inclusive weight interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightRange {
    pub lo: f64,
    pub hi: f64,
}

impl WeightRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::Validation(format!("invalid weight range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

/// Erdős–Rényi directed adjacency (`adj[(to, from)]`), zero diagonal.
pub fn random_directed_adjacency<R: Rng + ?Sized>(n: usize, p: f64, w: WeightRange, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for to in 0..n {
        for from in 0..n {
            if to != from && rng.random_bool(p) {
                a[(to, from)] = w.sample(rng);
            }
        }
    }
    a
}

/// Symmetric adjacency with zero diagonal.
pub fn random_undirected_adjacency<R: Rng + ?Sized>(n: usize, p: f64, w: WeightRange, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            if rng.random_bool(p) {
                let x = w.sample(rng);
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
    }
    a
}

/// Nonnegative `G` equal to a random directed adjacency.
pub fn directed_sparse<R: Rng + ?Sized>(n: usize, p: f64, w: WeightRange, rng: &mut R) -> ConnectivityMatrix {
    ConnectivityMatrix::new(random_directed_adjacency(n, p, w, rng)).expect("finite square matrix")
}

/// `G = −L` of a random directed graph; carries the eigenpair `(0, 1)`.
pub fn directed_laplacian<R: Rng + ?Sized>(n: usize, p: f64, w: WeightRange, rng: &mut R) -> ConnectivityMatrix {
    laplacian_connectivity(&random_directed_adjacency(n, p, w, rng)).expect("valid adjacency")
}

/// `G = −L` of a random undirected graph; symmetric, eigenpair `(0, 1)`.
pub fn undirected_laplacian<R: Rng + ?Sized>(n: usize, p: f64, w: WeightRange, rng: &mut R) -> ConnectivityMatrix {
    laplacian_connectivity(&random_undirected_adjacency(n, p, w, rng)).expect("valid adjacency")
}

/// Symmetric nonnegative `G` with zero diagonal.
pub fn symmetric<R: Rng + ?Sized>(n: usize, p: f64, w: WeightRange, rng: &mut R) -> ConnectivityMatrix {
    ConnectivityMatrix::new(random_undirected_adjacency(n, p, w, rng)).expect("finite square matrix")
}

/// Directed ring `v_1 -> v_2 -> … -> v_n -> v_1` plus each remaining node pair
/// joined with probability `p` in one randomly chosen direction.
pub fn nonreciprocal_ring<R: Rng + ?Sized>(n: usize, p: f64, w: WeightRange, rng: &mut R) -> ConnectivityMatrix {
    let mut a = DMatrix::zeros(n, n);
    if n >= 2 {
        for i in 0..n {
            a[((i + 1) % n, i)] = w.sample(rng);
        }
    }
    for i in 0..n {
        for j in 0..i {
            if a[(i, j)] != 0.0 || a[(j, i)] != 0.0 {
                continue;
            }
            if rng.random_bool(p) {
                let x = w.sample(rng);
                if rng.random_bool(0.5) {
                    a[(i, j)] = x;
                } else {
                    a[(j, i)] = x;
                }
            }
        }
    }
    ConnectivityMatrix::new(a).expect("finite square matrix")
}

/// Circulant `k`-regular digraph: node `i` receives from `i+1, …, i+k (mod n)` with
/// the given weight, so `G 1 = k·weight·1`.
pub fn k_regular(n: usize, k: usize, weight: f64) -> Result<ConnectivityMatrix> {
    if k >= n {
        return Err(Error::Validation(format!("k = {k} must be below n = {n}")));
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for s in 1..=k {
            a[(i, (i + s) % n)] = weight;
        }
    }
    ConnectivityMatrix::new(a)?.with_eigenpair(Eigenpair::ones(k as f64 * weight, n))
}

/// Draw networks until the coupled system is Hurwitz.
pub fn sample_stable<R, F>(node: &NodeDynamics, retries: usize, rng: &mut R, mut draw: F) -> Result<NetworkSystem>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> ConnectivityMatrix,
{
    let mut last = f64::NAN;
    for _ in 0..retries.max(1) {
        let sys = NetworkSystem::new(node.clone(), draw(rng));
        let s = sys.stability()?;
        if s.hurwitz {
            return Ok(sys);
        }
        last = s.abscissa;
    }
    Err(Error::NotHurwitz { abscissa: last })
}

/// 5-node directed Laplacian used as the reference system for estimator checks.
pub fn reference_five_node() -> ConnectivityMatrix {
    let edges = [(0, 1, 1.0), (1, 2, 0.7), (2, 3, 0.5), (3, 4, 0.8), (4, 0, 0.6), (0, 2, 0.4)];
    laplacian_from_edges(5, &edges)
}

/// 6-node directed Laplacian (ring plus two chords, weights in {0.4, 0.7, 1.0}).
pub fn reference_six_node() -> ConnectivityMatrix {
    let edges = [
        (0, 1, 1.0),
        (1, 2, 0.7),
        (2, 3, 1.0),
        (3, 4, 0.4),
        (4, 5, 0.7),
        (5, 0, 1.0),
        (0, 3, 0.7),
        (2, 5, 0.4),
    ];
    laplacian_from_edges(6, &edges)
}

/// Laplacian connectivity from `(from, to, weight)` triples (0-based).
pub fn laplacian_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> ConnectivityMatrix {
    let mut a = DMatrix::zeros(n, n);
    for &(from, to, w) in edges {
        a[(to, from)] = w;
    }
    laplacian_connectivity(&a).expect("valid adjacency")
}
