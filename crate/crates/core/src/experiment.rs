//! Simulation-to-CPSD driver shared by the command-line tool and the tests.
//!
//! The full run is simulated first so that an automatically chosen `ω₀` is known
//! before the grounded runs start; every series is reduced to its CPSD matrix and
//! dropped as soon as it is produced, keeping memory at one run per worker.

use log::info;
use rayon::prelude::*;

use crate::cpsd::CpsdMatrix;
use crate::error::Result;
use crate::graph::GroundedIndex;
use crate::lti::NetworkSystem;
use crate::sim::{simulate, simulate_grounded, NoiseConfig, SimConfig};
use crate::spectral::{estimate_cpsd_matrix, select_omega0, snap_to_bin, SpectralConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OmegaPolicy {
    /// Pick the bin with the best worst-channel PSD below `band`.
    Auto { band: f64 },
    Fixed(f64),
}

#[derive(Clone, Debug)]
pub struct EstimatedExperiment {
    /// Frequency the CPSDs were evaluated at (on the segment grid).
    pub omega0: f64,
    pub full: CpsdMatrix,
    pub grounded: Vec<(GroundedIndex, CpsdMatrix)>,
}

pub fn estimate_experiment(
    sys: &NetworkSystem,
    noise: &NoiseConfig,
    sim: &SimConfig,
    spectral: &SpectralConfig,
    policy: OmegaPolicy,
    with_grounded: bool,
) -> Result<EstimatedExperiment> {
    let ts = simulate(sys, noise, sim)?;
    let requested = match policy {
        OmegaPolicy::Fixed(w) => w,
        OmegaPolicy::Auto { band } => select_omega0(&ts, band, spectral, sys.node())?,
    };
    let omega0 = snap_to_bin(requested, spectral.segment_length, sim.dt).1;
    info!("omega0 = {omega0} (requested {requested})");
    let full = estimate_cpsd_matrix(&ts, omega0, spectral)?;
    drop(ts);
    let grounded = if with_grounded {
        GroundedIndex::all(sys.n_nodes())
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|j| {
                let ts = simulate_grounded(sys, j, noise, sim)?;
                Ok((j, estimate_cpsd_matrix(&ts, omega0, spectral)?))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(EstimatedExperiment {
        omega0,
        full,
        grounded,
    })
}
