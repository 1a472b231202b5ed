//! Stage timings for scaling studies.
//!
//! Three stages are timed separately: building the CPSD matrices
//! ("correlation"), inverting the `N+1` of them (the LU inverses only, without
//! the conditioning diagnostics), and assembling `G`. Each stage is
//! repeated until it has run for at least [`MIN_STAGE_SECONDS`] and the best of
//! [`TRIALS`] per-iteration times is kept, which is stable enough to read off
//! scaling trends on a busy machine.

use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cpsd::CpsdMatrix;
use crate::error::{Error, Result};
use crate::families::{directed_laplacian, WeightRange};
use crate::graph::GroundedIndex;
use crate::linalg::invert;
use crate::lti::{nodal_transfer, NetworkSystem, NodeDynamics};
use crate::reconstruct::{analytic_experiment, exact_from_inverses, invert_experiment, Threshold, DEFAULT_TAU};
use crate::sim::{simulate, simulate_grounded, NoiseConfig, SimConfig};
use crate::spectral::{estimate_cpsd_matrix, lag_domain_cpsd, SpectralConfig};

pub const MIN_STAGE_SECONDS: f64 = 0.05;
pub const TRIALS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostModel {
    /// Welch estimate from per-segment single-bin transforms.
    Fft,
    /// Full lag-domain cross-correlations, then one transform.
    Paper,
}

impl fmt::Display for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostModel::Fft => "fft",
            CostModel::Paper => "paper",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub mode: &'static str,
    pub cost_model: CostModel,
    pub n: usize,
    /// Series length; zero in oracle mode.
    pub len: usize,
    pub correlation_s: f64,
    pub inversion_s: f64,
    pub reconstruction_s: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "mode,cost_model,n,len,correlation_s,inversion_s,reconstruction_s";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e},{:e}",
            self.mode, self.cost_model, self.n, self.len, self.correlation_s, self.inversion_s, self.reconstruction_s
        )
    }
}

/// Best-of-trials seconds per call of `f`.
pub fn time_stage<T>(mut f: impl FnMut() -> T) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..TRIALS {
        let start = Instant::now();
        let mut iters = 0u32;
        loop {
            std::hint::black_box(f());
            iters += 1;
            let el = start.elapsed().as_secs_f64();
            if el >= MIN_STAGE_SECONDS {
                best = best.min(el / iters as f64);
                break;
            }
        }
    }
    best
}

fn invert_all(full: &CpsdMatrix, grounded: &[(GroundedIndex, CpsdMatrix)]) -> Result<()> {
    invert(full.values(), "CPSD matrix")?;
    for (_, m) in grounded {
        invert(m.values(), "grounded CPSD matrix")?;
    }
    Ok(())
}

/// Random stable directed Laplacian network with scalar unit-pole nodes.
fn bench_network(n: usize, seed: u64) -> NetworkSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = directed_laplacian(n, 0.3, WeightRange { lo: 0.3, hi: 1.0 }, &mut rng);
    NetworkSystem::new(NodeDynamics::scalar_pole(1.0), g)
}

/// Analytic CPSDs at `ω₀ = 0.5`: no simulation, all stages timed.
pub fn bench_oracle(n: usize, seed: u64) -> Result<BenchRow> {
    let sys = bench_network(n, seed);
    let omega = 0.5;
    let h = nodal_transfer(sys.node(), omega)?;
    let g = sys.connectivity();
    let (full, grounded) = analytic_experiment(g, h, 1.0, omega)?;
    let correlation_s = time_stage(|| analytic_experiment(g, h, 1.0, omega).map(|_| ()));
    let inversion_s = time_stage(|| invert_all(&full, &grounded));
    let inv = invert_experiment(&full, &grounded)?;
    let reconstruction_s = time_stage(|| exact_from_inverses(&inv, 1.0, Threshold::Fixed(DEFAULT_TAU)).map(|_| ()));
    Ok(BenchRow {
        mode: "oracle",
        cost_model: CostModel::Fft,
        n,
        len: 0,
        correlation_s,
        inversion_s,
        reconstruction_s,
    })
}

/// Estimated CPSDs from simulated series of length `len`. Simulation is not timed.
pub fn bench_estimated(n: usize, len: usize, cost_model: CostModel, spectral: &SpectralConfig, seed: u64) -> Result<BenchRow> {
    if n < 2 {
        return Err(Error::Validation("benchmark needs at least two nodes".into()));
    }
    let sys = bench_network(n, seed);
    let sim = SimConfig::new(0.01, len);
    let noise = NoiseConfig::white(1.0, seed);
    let mut series = vec![simulate(&sys, &noise, &sim)?];
    for j in GroundedIndex::all(n) {
        series.push(simulate_grounded(&sys, j, &noise, &sim)?);
    }
    let seg = spectral.segment_length.min(len);
    let spectral = SpectralConfig {
        segment_length: seg,
        ..*spectral
    };
    let omega = crate::spectral::snap_to_bin(0.5, seg, sim.dt).1.max(2.0 * std::f64::consts::PI / (seg as f64 * sim.dt));
    let estimate_all = || -> Result<Vec<CpsdMatrix>> {
        series
            .iter()
            .map(|ts| match cost_model {
                CostModel::Fft => estimate_cpsd_matrix(ts, omega, &spectral),
                CostModel::Paper => lag_domain_cpsd(ts, omega, None),
            })
            .collect()
    };
    let correlation_s = time_stage(|| estimate_all().map(|_| ()));
    let mats = estimate_all()?;
    let full = mats[0].clone();
    let grounded: Vec<_> = GroundedIndex::all(n).zip(mats.into_iter().skip(1)).collect();
    let inversion_s = time_stage(|| invert_all(&full, &grounded));
    let inv = invert_experiment(&full, &grounded)?;
    let reconstruction_s = time_stage(|| exact_from_inverses(&inv, 1.0, Threshold::Fixed(DEFAULT_TAU)).map(|_| ()));
    Ok(BenchRow {
        mode: "estimated",
        cost_model,
        n,
        len,
        correlation_s,
        inversion_s,
        reconstruction_s,
    })
}

/// Growth factor per doubling of `x`: `2^slope` of the least-squares line through
/// `(log x, log t)`.
pub fn doubling_factor(x: &[f64], t: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let lt: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let mt = lt.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&lt).map(|(a, b)| (a - mx) * (b - mt)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    2f64.powf(sxy / sxx)
}
