//! Sampled simulation of full and grounded networks driven by held white noise.
//!
//! Each node receives an independent Gaussian sequence `w_i[k] ~ N(0, σ²)` that is
//! held constant over every sampling interval. The network is discretised exactly
//! under that zero-order hold, so the only approximation is the held-noise input
//! itself, whose PSD is `σ² Δt sinc²(ωΔt/2)`.

use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::GroundedIndex;
use crate::linalg::inf_norm_real;
use crate::lti::{InputPsd, NetworkSystem};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Shaping {
    #[default]
    None,
    /// First-order low-pass `−p/(s − p)` (unit DC gain) with pole `p < 0`.
    LowPass { pole: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Per-sample variance σ² of the discrete Gaussian sequence.
    pub variance: f64,
    pub seed: u64,
    pub shaping: Shaping,
}

impl NoiseConfig {
    pub fn white(variance: f64, seed: u64) -> Self {
        Self {
            variance,
            seed,
            shaping: Shaping::None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::Validation(format!("noise variance must be positive, got {}", self.variance)));
        }
        if let Shaping::LowPass { pole } = self.shaping {
            if !(pole.is_finite() && pole < 0.0) {
                return Err(Error::Validation(format!("shaping pole must be negative, got {pole}")));
            }
        }
        Ok(())
    }

    /// The PSD actually injected into every node at sampling interval `dt`.
    pub fn input_psd(&self, dt: f64) -> HeldNoisePsd {
        HeldNoisePsd {
            variance: self.variance,
            dt,
            shaping: self.shaping,
        }
    }
}

/// `S_w(ω) = σ² Δt sinc²(ωΔt/2)`, times `p²/(ω² + p²)` when shaped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeldNoisePsd {
    pub variance: f64,
    pub dt: f64,
    pub shaping: Shaping,
}

impl InputPsd for HeldNoisePsd {
    fn density(&self, omega: f64) -> f64 {
        let x = 0.5 * omega * self.dt;
        let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
        let base = self.variance * self.dt * sinc * sinc;
        match self.shaping {
            Shaping::None => base,
            Shaping::LowPass { pole } => base * pole * pole / (omega * omega + pole * pole),
        }
    }

    /// Nyquist frequency `π/Δt`.
    fn band_limit(&self) -> f64 {
        std::f64::consts::PI / self.dt
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub n_samples: usize,
    /// Discarded leading samples; `None` uses `⌈10 / (|abscissa|·dt)⌉`.
    pub burn_in: Option<usize>,
}

impl SimConfig {
    pub fn new(dt: f64, n_samples: usize) -> Self {
        Self {
            dt,
            n_samples,
            burn_in: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_samples < 2 {
            return Err(Error::Validation("need at least two samples".into()));
        }
        Ok(())
    }
}

/// `ceil(10 / (|abscissa| dt))`: transients decay by `e^-10`.
pub fn default_burn_in(abscissa: f64, dt: f64) -> usize {
    (10.0 / (abscissa.abs() * dt)).ceil() as usize
}

/// Sampled outputs, one row per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesMatrix {
    dt: f64,
    n_samples: usize,
    /// Original 1-based node labels of the channels.
    labels: Vec<usize>,
    data: Vec<f64>,
}

const TS_MAGIC: &[u8; 8] = b"NRTSMAT1";

impl TimeSeriesMatrix {
    pub fn new(dt: f64, labels: Vec<usize>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} channels with {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let n_samples = rows[0].len();
        if rows.iter().any(|r| r.len() != n_samples) || n_samples == 0 {
            return Err(Error::DimensionMismatch("channels must share a positive length".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Validation(format!("dt must be positive, got {dt}")));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("time series contains non-finite samples".into()));
        }
        Ok(Self {
            dt,
            n_samples,
            labels,
            data,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.labels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: self.data.iter().map(|x| x * factor).collect(),
            ..self.clone()
        }
    }

    /// Keep only the first `len` samples of every channel.
    pub fn truncated(&self, len: usize) -> Self {
        let len = len.min(self.n_samples);
        let rows = (0..self.n_channels()).map(|i| self.channel(i)[..len].to_vec()).collect();
        Self::new(self.dt, self.labels.clone(), rows).expect("subset of a valid series")
    }

    /// Magic, `N`, `L`, `dt`, labels, then row-major little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TS_MAGIC)?;
        w.write_all(&(self.n_channels() as u64).to_le_bytes())?;
        w.write_all(&(self.n_samples as u64).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        for &l in &self.labels {
            w.write_all(&(l as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != TS_MAGIC {
            return Err(Error::Parse {
                line: 0,
                msg: "not a time-series file (bad magic)".into(),
            });
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let len = u64::from_le_bytes(next(&mut r)?) as usize;
        let dt = f64::from_le_bytes(next(&mut r)?);
        let labels = (0..n)
            .map(|_| next(&mut r).map(|b| u64::from_le_bytes(b) as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut bytes = vec![0u8; n * len * 8];
        r.read_exact(&mut bytes)?;
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let rows = flat.chunks(len.max(1)).map(<[f64]>::to_vec).collect();
        Self::new(dt, labels, rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_binary(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// `t,y<label>…` with one row per sample.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(w);
        let header: Vec<String> = self.labels.iter().map(|l| format!("y{l}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for k in 0..self.n_samples {
            write!(w, "{}", k as f64 * self.dt)?;
            for i in 0..self.n_channels() {
                write!(w, ",{}", self.data[i * self.n_samples + k])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Exact zero-order-hold pair `(Φ, Γ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Discretized {
    pub phi: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
}

/// `Φ = exp(M dt)`, `Γ = ∫₀^dt exp(M s) ds · (I⊗b)`, via one exponential of the
/// augmented matrix `[[M, B], [0, 0]]·dt`.
pub fn discretize(sys: &NetworkSystem, dt: f64) -> Result<Discretized> {
    sys.require_hurwitz()?;
    discretize_pair(&sys.state_matrix(), &sys.input_matrix(), dt)
}

pub fn discretize_pair(m: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> Result<Discretized> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Validation(format!("dt must be positive, got {dt}")));
    }
    let n = m.nrows();
    let k = b.ncols();
    let mut aug = DMatrix::zeros(n + k, n + k);
    aug.view_mut((0, 0), (n, n)).copy_from(&(m * dt));
    aug.view_mut((0, n), (n, k)).copy_from(&(b * dt));
    let e = aug.exp();
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!(
            "matrix exponential overflowed (dt·‖M‖ = {:e})",
            dt * inf_norm_real(m)
        )));
    }
    Ok(Discretized {
        phi: e.view((0, 0), (n, n)).into_owned(),
        gamma: e.view((0, n), (n, k)).into_owned(),
    })
}

/// Simulate the full network. Channel labels are `1..=N`.
pub fn simulate(sys: &NetworkSystem, noise: &NoiseConfig, cfg: &SimConfig) -> Result<TimeSeriesMatrix> {
    let labels: Vec<usize> = (1..=sys.n_nodes()).collect();
    run(sys, &labels, noise, cfg, noise.seed)
}

/// Simulate the network grounded at `j`: the reduced system on `G̃_j` with `N−1`
/// independent noise streams. Uses run seed `seed ⊕ j`.
pub fn simulate_grounded(
    sys: &NetworkSystem,
    j: GroundedIndex,
    noise: &NoiseConfig,
    cfg: &SimConfig,
) -> Result<TimeSeriesMatrix> {
    let n = sys.n_nodes();
    j.check(n)?;
    if n < 2 {
        return Err(Error::Validation("grounding needs at least two nodes".into()));
    }
    let reduced = sys.grounded(j)?;
    run(&reduced, &j.surviving_labels(n), noise, cfg, noise.seed ^ j.get() as u64)
}

/// Full run plus (optionally) every grounded run, in parallel on the current rayon pool.
pub fn simulate_experiment(
    sys: &NetworkSystem,
    noise: &NoiseConfig,
    cfg: &SimConfig,
    with_grounded: bool,
) -> Result<(TimeSeriesMatrix, Vec<(GroundedIndex, TimeSeriesMatrix)>)> {
    let n = sys.n_nodes();
    let last = if with_grounded { n } else { 0 };
    let mut runs: Vec<(usize, TimeSeriesMatrix)> = (0..=last)
        .into_par_iter()
        .map(|j| {
            let ts = if j == 0 {
                simulate(sys, noise, cfg)?
            } else {
                simulate_grounded(sys, GroundedIndex::new(j)?, noise, cfg)?
            };
            Ok((j, ts))
        })
        .collect::<Result<_>>()?;
    runs.sort_by_key(|(j, _)| *j);
    let mut it = runs.into_iter();
    let (_, full) = it.next().expect("full run present");
    let grounded = it
        .map(|(j, ts)| (GroundedIndex::new(j).expect("j >= 1"), ts))
        .collect();
    Ok((full, grounded))
}

fn run(sys: &NetworkSystem, labels: &[usize], noise: &NoiseConfig, cfg: &SimConfig, run_seed: u64) -> Result<TimeSeriesMatrix> {
    noise.validate()?;
    cfg.validate()?;
    let stability = sys.require_hurwitz()?;
    let n = sys.n_nodes();
    let m = sys.state_matrix();
    let (f, b, c) = match noise.shaping {
        Shaping::None => (m.clone(), sys.input_matrix(), sys.output_matrix()),
        Shaping::LowPass { pole } => {
            // Node inputs are the filter states: x' = M x + (I⊗b) s, s' = p s − p w.
            let dim = m.nrows();
            let mut f = DMatrix::zeros(dim + n, dim + n);
            f.view_mut((0, 0), (dim, dim)).copy_from(&m);
            f.view_mut((0, dim), (dim, n)).copy_from(&sys.input_matrix());
            f.view_mut((dim, dim), (n, n)).fill_diagonal(pole);
            let mut b = DMatrix::zeros(dim + n, n);
            b.view_mut((dim, 0), (n, n)).fill_diagonal(-pole);
            let mut c = DMatrix::zeros(n, dim + n);
            c.view_mut((0, 0), (n, dim)).copy_from(&sys.output_matrix());
            (f, b, c)
        }
    };
    let norm_dt = inf_norm_real(&f) * cfg.dt;
    if norm_dt > 0.5 {
        warn!("dt·‖M‖ = {norm_dt:.3} exceeds 0.5; the sampling interval is coarse for these dynamics");
    }
    let slowest = match noise.shaping {
        Shaping::None => stability.abscissa,
        Shaping::LowPass { pole } => stability.abscissa.max(pole),
    };
    let burn_in = cfg.burn_in.unwrap_or_else(|| default_burn_in(slowest, cfg.dt));
    let d = discretize_pair(&f, &b, cfg.dt)?;

    let dim = f.nrows();
    // Row-major copies for the inner loop.
    let phi: Vec<f64> = (0..dim).flat_map(|r| (0..dim).map(move |k| (r, k))).map(|(r, k)| d.phi[(r, k)]).collect();
    let gamma: Vec<f64> = (0..dim).flat_map(|r| (0..n).map(move |k| (r, k))).map(|(r, k)| d.gamma[(r, k)]).collect();
    let c_rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| (0..dim).filter(|&k| c[(i, k)] != 0.0).map(|k| (k, c[(i, k)])).collect())
        .collect();

    let sigma = noise.variance.sqrt();
    let mut streams: Vec<ChaCha8Rng> = labels
        .iter()
        .map(|&l| {
            let mut r = ChaCha8Rng::seed_from_u64(run_seed);
            r.set_stream(l as u64);
            r
        })
        .collect();

    let total = burn_in + cfg.n_samples;
    let mut out = vec![vec![0.0; cfg.n_samples]; n];
    let mut x = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    let mut w = vec![0.0; n];
    for k in 0..total {
        if k >= burn_in {
            let t = k - burn_in;
            for (i, row) in c_rows.iter().enumerate() {
                out[i][t] = row.iter().map(|&(idx, cv)| cv * x[idx]).sum();
            }
        }
        for (wi, rng) in w.iter_mut().zip(streams.iter_mut()) {
            let z: f64 = rng.sample(StandardNormal);
            *wi = sigma * z;
        }
        for r in 0..dim {
            let prow = &phi[r * dim..(r + 1) * dim];
            let grow = &gamma[r * n..(r + 1) * n];
            let mut acc = 0.0;
            for (p, xv) in prow.iter().zip(&x) {
                acc += p * xv;
            }
            for (g, wv) in grow.iter().zip(&w) {
                acc += g * wv;
            }
            next[r] = acc;
        }
        std::mem::swap(&mut x, &mut next);
        if k % 1024 == 0 && x.iter().any(|v| !v.is_finite() || v.abs() > 1e150) {
            return Err(Error::Numerical(format!("state overflow at step {k}")));
        }
    }
    TimeSeriesMatrix::new(cfg.dt, labels.to_vec(), out)
}
