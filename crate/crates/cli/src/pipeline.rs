//! Pipeline stages and their on-disk artifacts.
//!
//! Layout of an output directory:
//!
//! ```text
//! network.txt  node.txt                 generated system
//! series/full.bin  series/grounded_J.bin   simulated runs (and .csv with --csv)
//! cpsd/full.txt    cpsd/grounded_J.txt     CPSD matrices at omega0
//! reconstruction.txt  weights.txt  boolean.txt
//! metrics.txt  edges.csv                   comparison with the truth
//! manifest.toml                            resolved config plus run facts
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use netrecon::experiment::{estimate_experiment, OmegaPolicy};
use netrecon::families::{
    directed_laplacian, directed_sparse, k_regular, nonreciprocal_ring, reference_five_node, reference_six_node,
    sample_stable, symmetric, undirected_laplacian, WeightRange,
};
use netrecon::graph::{compare, EdgeMetrics, Recovered};
use netrecon::lti::nodal_transfer;
use netrecon::reconstruct::{
    analytic_experiment, boolean_from_inverses, exact_from_inverses, exact_undirected, input_psd_from_eigenpair,
    input_psd_from_inverse, invert_experiment, nonreciprocal, offdiagonal_magnitudes, BranchOptions, Diagnostics,
    InvertedExperiment,
};
use netrecon::sim::{simulate, simulate_grounded};
use netrecon::spectral::{estimate_cpsd_matrix, select_omega0, snap_to_bin};
use netrecon::{
    BooleanStructure, ConnectivityMatrix, CpsdMatrix, GroundedIndex, InputPsd, NetworkSystem, NodeDynamics,
    ReconstructionResult, TimeSeriesMatrix,
};

use crate::config::{
    parse_preset, ExperimentConfig, Family, GraphFamily, InputPsdChoice, Mode, OmegaChoice, OmegaSetting,
    ORACLE_DEFAULT_OMEGA,
};
use crate::error::{CliError, StageExt};

pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn network(&self) -> PathBuf {
        self.root.join("network.txt")
    }

    pub fn node(&self) -> PathBuf {
        self.root.join("node.txt")
    }

    pub fn series(&self, j: Option<GroundedIndex>, ext: &str) -> PathBuf {
        let name = match j {
            None => format!("full.{ext}"),
            Some(j) => format!("grounded_{}.{ext}", j.get()),
        };
        self.root.join("series").join(name)
    }

    pub fn cpsd(&self, j: Option<GroundedIndex>) -> PathBuf {
        let name = match j {
            None => "full.txt".to_string(),
            Some(j) => format!("grounded_{}.txt", j.get()),
        };
        self.root.join("cpsd").join(name)
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("reconstruction.txt")
    }

    pub fn weights(&self) -> PathBuf {
        self.root.join("weights.txt")
    }

    pub fn boolean(&self) -> PathBuf {
        self.root.join("boolean.txt")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.txt")
    }

    pub fn edges(&self) -> PathBuf {
        self.root.join("edges.csv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.toml")
    }

    pub fn bench(&self) -> PathBuf {
        self.root.join("bench.csv")
    }
}

pub fn write_file(stage: &'static str, path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(stage, dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(stage, path, e))
}

fn read_file(stage: &'static str, path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(stage, path, e))
}

// ---- generate ----

pub fn build_node(cfg: &ExperimentConfig) -> Result<NodeDynamics, CliError> {
    match &cfg.node.file {
        Some(path) => NodeDynamics::from_text(&read_file("generate", path)?).stage("generate"),
        None => Ok(NodeDynamics::scalar_pole(parse_preset(&cfg.node.preset)?)),
    }
}

/// The configured network, redrawn until Hurwitz for random families.
pub fn build_system(cfg: &ExperimentConfig) -> Result<NetworkSystem, CliError> {
    let node = build_node(cfg)?;
    let net = &cfg.network;
    let sys = if let Some(path) = &net.file {
        let g = ConnectivityMatrix::from_text(&read_file("generate", path)?).stage("generate")?;
        NetworkSystem::new(node, g)
    } else {
        let w = WeightRange::new(net.weight_min, net.weight_max).map_err(|e| CliError::config(e.to_string()))?;
        let (n, p) = (net.n, net.edge_probability);
        let mut rng = ChaCha8Rng::seed_from_u64(net.seed);
        let fixed = |g: netrecon::Result<ConnectivityMatrix>| -> Result<NetworkSystem, CliError> {
            Ok(NetworkSystem::new(node.clone(), g.stage("generate")?))
        };
        match (net.family, net.graph) {
            (Family::Empty, _) => fixed(Ok(ConnectivityMatrix::zeros(n)))?,
            (Family::Laplacian, GraphFamily::ReferenceFive) => fixed(Ok(reference_five_node()))?,
            (Family::Laplacian, GraphFamily::ReferenceSix) => fixed(Ok(reference_six_node()))?,
            (Family::Laplacian, GraphFamily::KRegular) => fixed(k_regular(n, net.k, net.weight_max))?,
            (Family::Laplacian, GraphFamily::Directed) => {
                sample_stable(&node, net.max_retries, &mut rng, |r| directed_laplacian(n, p, w, r)).stage("generate")?
            }
            (Family::Laplacian, GraphFamily::Undirected) => {
                sample_stable(&node, net.max_retries, &mut rng, |r| undirected_laplacian(n, p, w, r)).stage("generate")?
            }
            (Family::DirectedSparse, _) => {
                sample_stable(&node, net.max_retries, &mut rng, |r| directed_sparse(n, p, w, r)).stage("generate")?
            }
            (Family::Symmetric, _) => {
                sample_stable(&node, net.max_retries, &mut rng, |r| symmetric(n, p, w, r)).stage("generate")?
            }
            (Family::NonreciprocalRing, _) => {
                sample_stable(&node, net.max_retries, &mut rng, |r| nonreciprocal_ring(n, p, w, r)).stage("generate")?
            }
        }
    };
    sys.require_hurwitz().stage("generate")?;
    Ok(sys)
}

pub fn write_system(layout: &Layout, sys: &NetworkSystem) -> Result<(), CliError> {
    write_file("generate", &layout.network(), &sys.connectivity().to_text())?;
    write_file("generate", &layout.node(), &sys.node().to_text())
}

// ---- simulate ----

/// Simulate the full run and, when the mode needs them, every grounded run.
pub fn simulate_to_disk(cfg: &ExperimentConfig, sys: &NetworkSystem, layout: &Layout, csv: bool) -> Result<(), CliError> {
    let noise = cfg.noise_config();
    let sim = cfg.sim_config();
    let mut runs: Vec<Option<GroundedIndex>> = vec![None];
    if cfg.reconstruction.mode.needs_grounded() {
        runs.extend(GroundedIndex::all(sys.n_nodes()).map(Some));
    }
    runs.into_par_iter().try_for_each(|j| -> Result<(), CliError> {
        let ts = match j {
            None => simulate(sys, &noise, &sim),
            Some(j) => simulate_grounded(sys, j, &noise, &sim),
        }
        .stage("simulate")?;
        let path = layout.series(j, "bin");
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io("simulate", dir, e))?;
        }
        ts.save(&path).stage("simulate")?;
        if csv {
            let path = layout.series(j, "csv");
            let file = fs::File::create(&path).map_err(|e| CliError::io("simulate", &path, e))?;
            ts.write_csv(std::io::BufWriter::new(file)).stage("simulate")?;
        }
        Ok(())
    })
}

// ---- estimate ----

/// `S(ω₀)` and, when present, the grounded `S̃_j(ω₀)`.
#[derive(Clone, Debug)]
pub struct CpsdSet {
    pub omega0: f64,
    pub full: CpsdMatrix,
    pub grounded: Vec<(GroundedIndex, CpsdMatrix)>,
}

fn noise_band(cfg: &ExperimentConfig) -> f64 {
    cfg.noise_config().input_psd(cfg.simulation.dt).band_limit()
}

/// Estimate from series saved by `simulate`. Grounded files are picked up if present.
pub fn estimate_from_disk(cfg: &ExperimentConfig, node: &NodeDynamics, input: &Layout) -> Result<CpsdSet, CliError> {
    let spectral = cfg.spectral_config()?;
    let full_ts = TimeSeriesMatrix::load(&input.series(None, "bin")).stage("estimate")?;
    let requested = match cfg.omega_choice()? {
        OmegaChoice::Fixed(w) => w,
        OmegaChoice::Auto => select_omega0(&full_ts, noise_band(cfg), &spectral, node).stage("estimate")?,
    };
    let omega0 = snap_to_bin(requested, spectral.segment_length, full_ts.dt()).1;
    info!("omega0 = {omega0} (requested {requested})");
    let full = estimate_cpsd_matrix(&full_ts, omega0, &spectral).stage("estimate")?;
    let n = full_ts.n_channels();
    drop(full_ts);
    let present: Vec<GroundedIndex> = GroundedIndex::all(n).filter(|&j| input.series(Some(j), "bin").exists()).collect();
    let grounded = present
        .into_par_iter()
        .map(|j| {
            let ts = TimeSeriesMatrix::load(&input.series(Some(j), "bin")).stage("estimate")?;
            Ok((j, estimate_cpsd_matrix(&ts, omega0, &spectral).stage("estimate")?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(CpsdSet { omega0, full, grounded })
}

/// Simulate and estimate in one pass, without keeping the series.
pub fn estimate_in_memory(cfg: &ExperimentConfig, sys: &NetworkSystem) -> Result<CpsdSet, CliError> {
    let policy = match cfg.omega_choice()? {
        OmegaChoice::Fixed(w) => OmegaPolicy::Fixed(w),
        OmegaChoice::Auto => OmegaPolicy::Auto { band: noise_band(cfg) },
    };
    let exp = estimate_experiment(
        sys,
        &cfg.noise_config(),
        &cfg.sim_config(),
        &cfg.spectral_config()?,
        policy,
        cfg.reconstruction.mode.needs_grounded(),
    )
    .stage("estimate")?;
    Ok(CpsdSet {
        omega0: exp.omega0,
        full: exp.full,
        grounded: exp.grounded,
    })
}

/// Level the simulator actually injects at `omega`.
pub fn known_input_psd(cfg: &ExperimentConfig, omega: f64) -> f64 {
    cfg.noise_config().input_psd(cfg.simulation.dt).density(omega)
}

pub fn oracle_omega(cfg: &ExperimentConfig) -> Result<f64, CliError> {
    Ok(match cfg.omega_choice()? {
        OmegaChoice::Fixed(w) => w,
        OmegaChoice::Auto => ORACLE_DEFAULT_OMEGA,
    })
}

/// Analytic CPSDs driven by the configured noise level.
pub fn oracle_cpsds(cfg: &ExperimentConfig, sys: &NetworkSystem) -> Result<CpsdSet, CliError> {
    let omega0 = oracle_omega(cfg)?;
    let h = nodal_transfer(sys.node(), omega0).stage("estimate")?;
    let s_w = known_input_psd(cfg, omega0);
    let (full, grounded) = analytic_experiment(sys.connectivity(), h, s_w, omega0).stage("estimate")?;
    let grounded = if cfg.reconstruction.mode.needs_grounded() { grounded } else { Vec::new() };
    Ok(CpsdSet { omega0, full, grounded })
}

pub fn write_cpsds(layout: &Layout, set: &CpsdSet) -> Result<(), CliError> {
    write_file("estimate", &layout.cpsd(None), &set.full.to_text())?;
    for (j, m) in &set.grounded {
        write_file("estimate", &layout.cpsd(Some(*j)), &m.to_text())?;
    }
    Ok(())
}

pub fn read_cpsds(input: &Layout) -> Result<CpsdSet, CliError> {
    let full = CpsdMatrix::from_text(&read_file("reconstruct", &input.cpsd(None))?).stage("reconstruct")?;
    let mut grounded = Vec::new();
    for j in GroundedIndex::all(full.n_nodes()) {
        let path = input.cpsd(Some(j));
        if path.exists() {
            grounded.push((j, CpsdMatrix::from_text(&read_file("reconstruct", &path)?).stage("reconstruct")?));
        }
    }
    Ok(CpsdSet {
        omega0: full.omega(),
        full,
        grounded,
    })
}

// ---- reconstruct ----

/// Prior knowledge available to the reconstruction besides the CPSDs.
pub struct Priors<'a> {
    pub node: &'a NodeDynamics,
    pub eigenpair: Option<&'a netrecon::Eigenpair>,
    pub known_input_psd: f64,
}

fn resolve_input_psd(
    cfg: &ExperimentConfig,
    priors: &Priors<'_>,
    h: num_complex::Complex64,
    full: &CpsdMatrix,
    inv: Option<&InvertedExperiment>,
) -> Result<Option<f64>, CliError> {
    let from_pair = |pair: &netrecon::Eigenpair| -> Result<f64, CliError> {
        match inv {
            Some(inv) => input_psd_from_inverse(&inv.full.values, h, pair.value, &pair.vector),
            None => input_psd_from_eigenpair(full, h, pair.value, &pair.vector),
        }
        .stage("input-psd")
    };
    Ok(match cfg.input_psd_choice()? {
        InputPsdChoice::Auto => Some(match priors.eigenpair {
            Some(pair) => from_pair(pair)?,
            None => priors.known_input_psd,
        }),
        InputPsdChoice::Eigenpair => Some(from_pair(priors.eigenpair.ok_or_else(|| {
            CliError::config("reconstruction.input_psd = \"eigenpair\" but the network carries no eigenpair")
        })?)?),
        InputPsdChoice::Known => Some(priors.known_input_psd),
        InputPsdChoice::None => None,
        InputPsdChoice::Fixed(v) => Some(v),
    })
}

fn require_level(level: Option<f64>, mode: Mode) -> Result<f64, CliError> {
    level.ok_or_else(|| CliError::config(format!("mode {} needs an input PSD; input_psd = \"none\" is not allowed", mode.as_str())))
}

pub fn reconstruct(cfg: &ExperimentConfig, set: &CpsdSet, priors: &Priors<'_>) -> Result<ReconstructionResult, CliError> {
    let mode = cfg.reconstruction.mode;
    let tau = cfg.threshold_policy()?;
    let h = nodal_transfer(priors.node, set.omega0).stage("reconstruct")?;
    if mode.needs_grounded() {
        if set.grounded.len() != set.full.n_nodes() {
            return Err(CliError::config(format!(
                "mode {} needs all {} grounded CPSDs, found {}",
                mode.as_str(),
                set.full.n_nodes(),
                set.grounded.len()
            )));
        }
        let inv = invert_experiment(&set.full, &set.grounded).stage("reconstruct")?;
        match mode {
            Mode::Boolean | Mode::OracleBoolean => boolean_from_inverses(&inv, tau).stage("reconstruct"),
            _ => {
                let level = require_level(resolve_input_psd(cfg, priors, h, &set.full, Some(&inv))?, mode)?;
                exact_from_inverses(&inv, level, tau).stage("reconstruct")
            }
        }
    } else {
        let level = resolve_input_psd(cfg, priors, h, &set.full, None)?;
        match mode {
            Mode::Undirected | Mode::OracleUndirected => {
                let level = require_level(level, mode)?;
                let opts = BranchOptions {
                    node: Some(priors.node.clone()),
                    ..BranchOptions::default()
                };
                let rec = exact_undirected(&set.full, h, level, &opts).stage("reconstruct")?;
                let edge_tol = cfg.reconstruction.edge_tol;
                Ok(ReconstructionResult {
                    method: "undirected",
                    boolean_structure: Some(BooleanStructure::from_weights(rec.g.weights(), edge_tol)),
                    weights: Some(rec.g),
                    omega0: set.omega0,
                    input_psd_estimate: Some(level),
                    threshold_used: edge_tol,
                    diagnostics: Diagnostics {
                        branch_flips: rec.flips,
                        sqrt_clamped: rec.sqrt_clamped,
                        ..Diagnostics::default()
                    },
                })
            }
            _ => nonreciprocal(&set.full, h, level, tau).stage("reconstruct"),
        }
    }
}

pub fn write_result(layout: &Layout, result: &ReconstructionResult) -> Result<(), CliError> {
    write_file("reconstruct", &layout.report(), &result.to_report())?;
    if let Some(g) = &result.weights {
        write_file("reconstruct", &layout.weights(), &g.to_text())?;
    }
    if let Some(b) = &result.boolean_structure {
        write_file("reconstruct", &layout.boolean(), &b.to_text())?;
    }
    Ok(())
}

// ---- evaluate ----

/// The part of the truth a mode can see: directed methods recover `|g_ji|`.
pub fn comparable_truth(mode: Mode, truth: &ConnectivityMatrix) -> Result<ConnectivityMatrix, CliError> {
    if mode.needs_grounded() {
        ConnectivityMatrix::new(offdiagonal_magnitudes(truth)).stage("evaluate")
    } else {
        Ok(truth.clone())
    }
}

pub struct Evaluation {
    pub metrics: EdgeMetrics,
    pub recovered: DMatrix<f64>,
}

pub fn evaluate(
    cfg: &ExperimentConfig,
    truth: &ConnectivityMatrix,
    weights: Option<&ConnectivityMatrix>,
    boolean: Option<&BooleanStructure>,
) -> Result<Evaluation, CliError> {
    let truth = comparable_truth(cfg.reconstruction.mode, truth)?;
    let tol = cfg.reconstruction.edge_tol;
    let (metrics, recovered) = match (weights, boolean) {
        (Some(g), _) => (compare(&truth, Recovered::Weighted(g), tol), g.weights().clone()),
        (None, Some(b)) => (
            compare(&truth, Recovered::Boolean(b), tol),
            b.entries().map(|x| if x { 1.0 } else { 0.0 }),
        ),
        (None, None) => return Err(CliError::config("nothing to evaluate: no weights or boolean structure")),
    };
    Ok(Evaluation {
        metrics: metrics.stage("evaluate")?,
        recovered,
    })
}

pub fn write_evaluation(
    layout: &Layout,
    truth: &ConnectivityMatrix,
    eval: &Evaluation,
    extra: &[(&str, String)],
) -> Result<(), CliError> {
    let m = &eval.metrics;
    let mut out = String::new();
    let _ = writeln!(out, "f1 {}", m.f1);
    let _ = writeln!(out, "precision {}", m.precision);
    let _ = writeln!(out, "recall {}", m.recall);
    let _ = writeln!(out, "true_positives {}", m.true_positives);
    let _ = writeln!(out, "false_positives {}", m.false_positives);
    let _ = writeln!(out, "false_negatives {}", m.false_negatives);
    if let (Some(max), Some(rmse)) = (m.max_abs_error, m.rmse) {
        let _ = writeln!(out, "max_abs_error {max:e}");
        let _ = writeln!(out, "rmse {rmse:e}");
    }
    for (k, v) in extra {
        let _ = writeln!(out, "{k} {v}");
    }
    write_file("evaluate", &layout.metrics(), &out)?;

    let n = truth.n_nodes();
    let mut csv = String::from("from,to,truth,recovered\n");
    for to in 0..n {
        for from in (0..n).filter(|&f| f != to) {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                from + 1,
                to + 1,
                truth.weights()[(to, from)],
                eval.recovered[(to, from)]
            );
        }
    }
    write_file("evaluate", &layout.edges(), &csv)
}

/// Read back `weights.txt` or, failing that, `boolean.txt`.
pub fn read_recovered(input: &Layout) -> Result<(Option<ConnectivityMatrix>, Option<BooleanStructure>), CliError> {
    if input.weights().exists() {
        let g = ConnectivityMatrix::from_text(&read_file("evaluate", &input.weights())?).stage("evaluate")?;
        return Ok((Some(g), None));
    }
    let text = read_file("evaluate", &input.boolean())?;
    let g = ConnectivityMatrix::from_text(&text).stage("evaluate")?;
    Ok((None, Some(BooleanStructure::from_weights(g.weights(), 0.5))))
}

// ---- full pipeline ----

pub struct RunSummary {
    pub omega0: f64,
    pub metrics: EdgeMetrics,
}

pub fn run_pipeline(cfg: &ExperimentConfig, layout: &Layout) -> Result<RunSummary, CliError> {
    let sys = build_system(cfg)?;
    write_system(layout, &sys)?;
    let mode = cfg.reconstruction.mode;
    let set = if mode.is_oracle() {
        oracle_cpsds(cfg, &sys)?
    } else {
        estimate_in_memory(cfg, &sys)?
    };
    write_cpsds(layout, &set)?;
    let priors = Priors {
        node: sys.node(),
        eigenpair: sys.connectivity().eigenpair(),
        known_input_psd: known_input_psd(cfg, set.omega0),
    };
    let result = reconstruct(cfg, &set, &priors)?;
    write_result(layout, &result)?;
    let eval = evaluate(cfg, sys.connectivity(), result.weights.as_ref(), result.boolean_structure.as_ref())?;
    let mut extra = vec![
        ("omega0", format!("{}", set.omega0)),
        ("input_psd_true", format!("{:e}", priors.known_input_psd)),
    ];
    if let Some(level) = result.input_psd_estimate {
        extra.push(("input_psd_used", format!("{level:e}")));
    }
    write_evaluation(layout, sys.connectivity(), &eval, &extra)?;
    write_manifest(cfg, layout, Some(set.omega0), sys.n_nodes())?;
    Ok(RunSummary {
        omega0: set.omega0,
        metrics: eval.metrics,
    })
}

/// Resolved config with `ω₀` pinned to the snapped value, preceded by comment
/// lines recording versions and seeds. Loading it as a config reproduces the run.
pub fn write_manifest(cfg: &ExperimentConfig, layout: &Layout, omega0: Option<f64>, n: usize) -> Result<(), CliError> {
    let mut pinned = cfg.clone();
    pinned.output.dir = layout.root().to_path_buf();
    if let Some(w) = omega0 {
        pinned.spectral.omega0 = OmegaSetting::Fixed(w);
    }
    let mut out = String::new();
    let _ = writeln!(out, "# netrecon run manifest");
    let _ = writeln!(out, "# netrecon_version = {}", netrecon::VERSION);
    let _ = writeln!(out, "# cli_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# network_seed = {}", cfg.network.seed);
    let _ = writeln!(out, "# full_run_seed = {}", cfg.noise.seed);
    if cfg.reconstruction.mode.needs_grounded() && !cfg.reconstruction.mode.is_oracle() {
        let seeds: Vec<String> = GroundedIndex::all(n).map(|j| (cfg.noise.seed ^ j.get() as u64).to_string()).collect();
        let _ = writeln!(out, "# grounded_run_seeds = [{}]", seeds.join(", "));
    }
    if let Some(w) = omega0 {
        let _ = writeln!(out, "# omega0_snapped = {w}");
    }
    out.push('\n');
    out.push_str(&pinned.to_toml());
    write_file("manifest", &layout.manifest(), &out)
}
