//! Declarative experiment configuration (TOML). Unknown keys are rejected.
//!
//! Every field has a default, so an empty file is a valid config: a 6-node
//! reference Laplacian with unit-pole nodes, analysed in `oracle-exact-directed`
//! mode at `ω₀ = 0.5`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use netrecon::sim::Shaping;
use netrecon::spectral::{Detrend, Window};
use netrecon::{NoiseConfig, SimConfig, SpectralConfig};

use crate::error::CliError;

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSection,
    pub node: NodeSection,
    pub noise: NoiseSection,
    pub simulation: SimulationSection,
    pub spectral: SpectralSection,
    pub reconstruction: ReconstructionSection,
    pub output: OutputSection,
    pub bench: BenchSection,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    DirectedSparse,
    Laplacian,
    NonreciprocalRing,
    Symmetric,
    Empty,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFamily {
    Directed,
    Undirected,
    /// Circulant `k`-regular digraph with uniform weight `weight_max`.
    KRegular,
    ReferenceFive,
    ReferenceSix,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Connectivity matrix file; overrides the random family when set.
    pub file: Option<PathBuf>,
    pub family: Family,
    /// Graph family for `family = "laplacian"`.
    pub graph: GraphFamily,
    pub n: usize,
    pub edge_probability: f64,
    pub weight_min: f64,
    pub weight_max: f64,
    /// In-degree for `graph = "k-regular"`.
    pub k: usize,
    pub seed: u64,
    /// Redraws allowed before a non-Hurwitz family is an error.
    pub max_retries: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            file: None,
            family: Family::Laplacian,
            graph: GraphFamily::ReferenceSix,
            n: 6,
            edge_probability: 0.3,
            weight_min: 0.3,
            weight_max: 1.0,
            k: 2,
            seed: 1,
            max_retries: 100,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NodeSection {
    /// Node dynamics file; overrides `preset` when set.
    pub file: Option<PathBuf>,
    /// `"scalar-pole(a)"`: `h(s) = 1/(s + a)`.
    pub preset: String,
}

impl Default for NodeSection {
    fn default() -> Self {
        Self {
            file: None,
            preset: "scalar-pole(1)".into(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub variance: f64,
    pub seed: u64,
    /// Low-pass shaping pole (negative); white noise when absent.
    pub shaping_pole: Option<f64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            variance: 1.0,
            seed: 7,
            shaping_pole: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub dt: f64,
    pub n_samples: usize,
    /// Discarded leading samples; derived from the slowest mode when absent.
    pub burn_in: Option<usize>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            dt: 0.01,
            n_samples: 1 << 20,
            burn_in: None,
        }
    }
}

/// `"auto"` or a frequency in rad/s.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum OmegaSetting {
    Fixed(f64),
    Named(String),
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    pub segment_length: usize,
    pub overlap: f64,
    /// `"hann"` or `"rectangular"`.
    pub window: String,
    /// `"mean"` or `"none"`.
    pub detrend: String,
    pub omega0: OmegaSetting,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self {
            segment_length: 4096,
            overlap: 0.5,
            window: "hann".into(),
            detrend: "mean".into(),
            omega0: OmegaSetting::Named("auto".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Boolean,
    ExactDirected,
    Undirected,
    Nonreciprocal,
    OracleBoolean,
    OracleExactDirected,
    OracleUndirected,
    OracleNonreciprocal,
}

impl Mode {
    pub fn is_oracle(self) -> bool {
        matches!(
            self,
            Mode::OracleBoolean | Mode::OracleExactDirected | Mode::OracleUndirected | Mode::OracleNonreciprocal
        )
    }

    /// Modes that need the `N` grounded experiments.
    pub fn needs_grounded(self) -> bool {
        matches!(
            self,
            Mode::Boolean | Mode::ExactDirected | Mode::OracleBoolean | Mode::OracleExactDirected
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Boolean => "boolean",
            Mode::ExactDirected => "exact-directed",
            Mode::Undirected => "undirected",
            Mode::Nonreciprocal => "nonreciprocal",
            Mode::OracleBoolean => "oracle-boolean",
            Mode::OracleExactDirected => "oracle-exact-directed",
            Mode::OracleUndirected => "oracle-undirected",
            Mode::OracleNonreciprocal => "oracle-nonreciprocal",
        }
    }
}

/// `"gap"` or a fixed absolute threshold.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum ThresholdSetting {
    Fixed(f64),
    Named(String),
}

/// `"auto"`, `"eigenpair"`, `"known"`, `"none"` or a level.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum InputPsdSetting {
    Fixed(f64),
    Named(String),
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionSection {
    pub mode: Mode,
    pub threshold: ThresholdSetting,
    /// Used by `"gap"` when the statistics span less than a decade.
    pub threshold_fallback: f64,
    pub input_psd: InputPsdSetting,
    /// Entries above this count as edges when scoring against the truth.
    pub edge_tol: f64,
}

impl Default for ReconstructionSection {
    fn default() -> Self {
        Self {
            mode: Mode::OracleExactDirected,
            threshold: ThresholdSetting::Named("gap".into()),
            threshold_fallback: netrecon::reconstruct::DEFAULT_TAU,
            input_psd: InputPsdSetting::Named("auto".into()),
            edge_tol: netrecon::graph::DEFAULT_EDGE_TOL,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// `(N, L)` points; `L = 0` times the analytic path.
    pub sweep: Vec<(usize, usize)>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            sweep: vec![(8, 0), (16, 0), (32, 0)],
        }
    }
}

/// How `ω₀` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OmegaChoice {
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InputPsdChoice {
    /// Eigenpair when the network carries one, the injected level otherwise.
    Auto,
    Eigenpair,
    Known,
    None,
    Fixed(f64),
}

/// Frequency used by oracle runs when `omega0 = "auto"`.
pub const ORACLE_DEFAULT_OMEGA: f64 = 0.5;

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        for p in [&cfg.network.file, &cfg.node.file].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::config(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative file references are taken relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.network.file, &mut self.node.file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.omega_choice()?;
        self.threshold_policy()?;
        self.input_psd_choice()?;
        self.spectral_config()?;
        parse_preset(&self.node.preset)?;
        let n = &self.network;
        if n.file.is_none() && n.n < 2 && !matches!(n.graph, GraphFamily::ReferenceFive | GraphFamily::ReferenceSix) {
            return Err(CliError::config(format!("network.n must be at least 2, got {}", n.n)));
        }
        if !(0.0..=1.0).contains(&n.edge_probability) {
            return Err(CliError::config(format!("network.edge_probability must lie in [0, 1], got {}", n.edge_probability)));
        }
        if !(self.reconstruction.edge_tol >= 0.0) {
            return Err(CliError::config("reconstruction.edge_tol must be non-negative"));
        }
        if self.bench.sweep.iter().any(|&(n, _)| n < 2) {
            return Err(CliError::config("bench.sweep needs N >= 2 everywhere"));
        }
        Ok(())
    }

    pub fn omega_choice(&self) -> Result<OmegaChoice, CliError> {
        match &self.spectral.omega0 {
            OmegaSetting::Fixed(w) if w.is_finite() && *w > 0.0 => Ok(OmegaChoice::Fixed(*w)),
            OmegaSetting::Named(s) if s == "auto" => Ok(OmegaChoice::Auto),
            other => Err(CliError::config(format!("spectral.omega0 must be \"auto\" or a positive number, got {other:?}"))),
        }
    }

    pub fn threshold_policy(&self) -> Result<netrecon::Threshold, CliError> {
        let r = &self.reconstruction;
        match &r.threshold {
            ThresholdSetting::Fixed(t) if t.is_finite() && *t >= 0.0 => Ok(netrecon::Threshold::Fixed(*t)),
            ThresholdSetting::Named(s) if s == "gap" => Ok(netrecon::Threshold::Gap {
                fallback: r.threshold_fallback,
            }),
            other => Err(CliError::config(format!("reconstruction.threshold must be \"gap\" or a non-negative number, got {other:?}"))),
        }
    }

    pub fn input_psd_choice(&self) -> Result<InputPsdChoice, CliError> {
        match &self.reconstruction.input_psd {
            InputPsdSetting::Fixed(v) if v.is_finite() && *v > 0.0 => Ok(InputPsdChoice::Fixed(*v)),
            InputPsdSetting::Named(s) => match s.as_str() {
                "auto" => Ok(InputPsdChoice::Auto),
                "eigenpair" => Ok(InputPsdChoice::Eigenpair),
                "known" => Ok(InputPsdChoice::Known),
                "none" => Ok(InputPsdChoice::None),
                _ => Err(CliError::config(format!("unknown reconstruction.input_psd {s:?}"))),
            },
            other => Err(CliError::config(format!("reconstruction.input_psd must be positive, got {other:?}"))),
        }
    }

    pub fn spectral_config(&self) -> Result<SpectralConfig, CliError> {
        let s = &self.spectral;
        let window = match s.window.as_str() {
            "hann" => Window::Hann,
            "rectangular" => Window::Rectangular,
            w => return Err(CliError::config(format!("unknown spectral.window {w:?}"))),
        };
        let detrend = match s.detrend.as_str() {
            "mean" => Detrend::Mean,
            "none" => Detrend::None,
            d => return Err(CliError::config(format!("unknown spectral.detrend {d:?}"))),
        };
        let cfg = SpectralConfig {
            segment_length: s.segment_length,
            overlap: s.overlap,
            window,
            detrend,
        };
        cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig {
            variance: self.noise.variance,
            seed: self.noise.seed,
            shaping: match self.noise.shaping_pole {
                Some(pole) => Shaping::LowPass { pole },
                None => Shaping::None,
            },
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.simulation.dt,
            n_samples: self.simulation.n_samples,
            burn_in: self.simulation.burn_in,
        }
    }

    /// Replace both the network and the noise seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.network.seed = seed;
        self.noise.seed = seed;
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Parse `"scalar-pole(a)"` into `a`.
pub fn parse_preset(preset: &str) -> Result<f64, CliError> {
    let s = preset.trim();
    let inner = s
        .strip_prefix("scalar-pole(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| CliError::config(format!("unknown node preset {preset:?}; expected \"scalar-pole(a)\"")))?;
    let a: f64 = inner
        .trim()
        .parse()
        .map_err(|_| CliError::config(format!("bad pole in node preset {preset:?}")))?;
    if !a.is_finite() {
        return Err(CliError::config(format!("bad pole in node preset {preset:?}")));
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("[network]\ncolour = 3\n").is_err());
        assert!(ExperimentConfig::parse("[extras]\n").is_err());
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.spectral.omega0 = OmegaSetting::Fixed(0.25);
        cfg.reconstruction.threshold = ThresholdSetting::Fixed(1e-3);
        cfg.noise.shaping_pole = Some(-3.0);
        cfg.simulation.burn_in = Some(10);
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn policies() {
        let cfg = ExperimentConfig::parse("[spectral]\nomega0 = 0.7\n[reconstruction]\nthreshold = 0.01\ninput_psd = 2.5\n").unwrap();
        assert_eq!(cfg.omega_choice().unwrap(), OmegaChoice::Fixed(0.7));
        assert_eq!(cfg.threshold_policy().unwrap(), netrecon::Threshold::Fixed(0.01));
        assert_eq!(cfg.input_psd_choice().unwrap(), InputPsdChoice::Fixed(2.5));
        assert!(ExperimentConfig::parse("[spectral]\nomega0 = \"best\"\n").is_err());
        assert!(ExperimentConfig::parse("[reconstruction]\nmode = \"magic\"\n").is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(parse_preset("scalar-pole(2.5)").unwrap(), 2.5);
        assert_eq!(parse_preset(" scalar-pole( 1 ) ").unwrap(), 1.0);
        assert!(parse_preset("second-order(1)").is_err());
    }
}
