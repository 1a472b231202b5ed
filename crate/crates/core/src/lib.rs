//! Topology reconstruction for networks of identical LTI nodes driven by noise.
//!
//! The pipeline is: build a network ([`graph`], [`lti`]), simulate it and its
//! grounded variants ([`sim`]), estimate CPSD matrices at one frequency
//! ([`spectral`]), and recover the connectivity ([`reconstruct`]).

pub mod bench;
pub mod cpsd;
pub mod error;
pub mod experiment;
pub mod families;
pub mod graph;
pub mod linalg;
pub mod lti;
pub mod reconstruct;
pub mod sim;
pub mod spectral;

pub use cpsd::{CpsdMatrix, CpsdSource};
pub use error::{Error, ErrorKind, Result};
pub use graph::{BooleanStructure, ConnectivityMatrix, Eigenpair, GroundedIndex};
pub use lti::{InputPsd, NetworkSystem, NodeDynamics};
pub use reconstruct::{ReconstructionResult, Threshold};
pub use sim::{NoiseConfig, SimConfig, TimeSeriesMatrix};
pub use spectral::SpectralConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
