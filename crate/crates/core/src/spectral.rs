//! Averaged-periodogram estimation of CPSD matrices at a single frequency.
//!
//! Scaling: for a segment `x[n]` with window `w[n]` the periodogram entry is
//! `dt · X_i X_j^* / Σ w²` with `X_i = Σ w[n] x_i[n] e^{-jθn}`, so the estimate is a
//! two-sided density in the same units as the analytic CPSD.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::cpsd::{CpsdMatrix, CpsdSource};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_condition, hermitian_eigenvalues, hermitian_part, invert, CMatrix};
use crate::lti::{nodal_transfer, NodeDynamics};
use crate::sim::TimeSeriesMatrix;

/// Below this many averaged segments a warning is logged.
pub const MIN_SEGMENTS: usize = 8;

/// Relative diagonal loading applied to an estimated CPSD that is not positive definite.
pub const LOADING_EPS: f64 = 1e-10;

/// Nodes with `|h(jω)|` below this are never chosen as the probing frequency.
pub const MIN_NODE_GAIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Detrend {
    None,
    #[default]
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralConfig {
    /// Power of two.
    pub segment_length: usize,
    /// In `[0, 1)`; `0` with a rectangular window is Bartlett's method.
    pub overlap: f64,
    pub window: Window,
    pub detrend: Detrend,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            segment_length: 4096,
            overlap: 0.5,
            window: Window::Hann,
            detrend: Detrend::Mean,
        }
    }
}

impl SpectralConfig {
    pub fn bartlett(segment_length: usize) -> Self {
        Self {
            segment_length,
            overlap: 0.0,
            window: Window::Rectangular,
            detrend: Detrend::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.segment_length.is_power_of_two() || self.segment_length < 2 {
            return Err(Error::Validation(format!(
                "segment length must be a power of two >= 2, got {}",
                self.segment_length
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Validation(format!("overlap must lie in [0, 1), got {}", self.overlap)));
        }
        Ok(())
    }

    fn step(&self) -> usize {
        ((self.segment_length as f64 * (1.0 - self.overlap)).round() as usize).max(1)
    }

    /// Number of whole segments that fit in `len` samples.
    pub fn segment_count(&self, len: usize) -> usize {
        if len < self.segment_length {
            0
        } else {
            (len - self.segment_length) / self.step() + 1
        }
    }

    fn window_values(&self) -> Vec<f64> {
        let m = self.segment_length;
        match self.window {
            Window::Rectangular => vec![1.0; m],
            // Periodic Hann.
            Window::Hann => (0..m).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / m as f64).cos()).collect(),
        }
    }

    /// Lowest bin clear of the DC main lobe (bin 0 for a rectangular window
    /// only; bins 0 and 1 for Hann).
    pub fn first_clear_bin(&self) -> usize {
        match self.window {
            Window::Rectangular => 1,
            Window::Hann => 2,
        }
    }
}

/// Nearest bin `k` of the grid `2πk/(M·dt)` and its angular frequency.
pub fn snap_to_bin(omega: f64, segment_length: usize, dt: f64) -> (i64, f64) {
    let spacing = 2.0 * PI / (segment_length as f64 * dt);
    let k = (omega / spacing).round() as i64;
    (k, k as f64 * spacing)
}

fn check_inputs(ts: &TimeSeriesMatrix, cfg: &SpectralConfig) -> Result<usize> {
    cfg.validate()?;
    if cfg.segment_length > ts.n_samples() {
        return Err(Error::Validation(format!(
            "segment length {} exceeds the series length {}",
            cfg.segment_length,
            ts.n_samples()
        )));
    }
    let k = cfg.segment_count(ts.n_samples());
    if k < MIN_SEGMENTS {
        warn!("only {k} segments are averaged (fewer than {MIN_SEGMENTS}); the estimate will be noisy");
    }
    Ok(k)
}

/// Windowed, detrended copy of one segment.
fn prepare_segment(x: &[f64], win: &[f64], detrend: Detrend, out: &mut [f64]) {
    let mean = match detrend {
        Detrend::None => 0.0,
        Detrend::Mean => x.iter().sum::<f64>() / x.len() as f64,
    };
    for ((o, v), w) in out.iter_mut().zip(x).zip(win) {
        *o = (v - mean) * w;
    }
}

/// Welch estimate of `S(ω₀)` at the bin nearest `ω₀`.
///
/// Each channel's per-segment DFT coefficient at the bin is computed once and the
/// `N²` cross products are formed from those.
pub fn estimate_cpsd_matrix(ts: &TimeSeriesMatrix, omega0: f64, cfg: &SpectralConfig) -> Result<CpsdMatrix> {
    let n_seg = check_inputs(ts, cfg)?;
    let dt = ts.dt();
    if omega0.abs() > PI / dt {
        return Err(Error::FrequencyRejected {
            omega: omega0,
            reason: format!("above the Nyquist frequency {}", PI / dt),
        });
    }
    let m = cfg.segment_length;
    let (k, snapped) = snap_to_bin(omega0, m, dt);
    let win = cfg.window_values();
    let theta = 2.0 * PI * k as f64 / m as f64;
    let kernel: Vec<Complex64> = (0..m).map(|n| Complex64::from_polar(1.0, -theta * n as f64)).collect();
    let step = cfg.step();

    let coeffs: Vec<Vec<Complex64>> = (0..ts.n_channels())
        .into_par_iter()
        .map(|c| {
            let x = ts.channel(c);
            let mut seg = vec![0.0; m];
            (0..n_seg)
                .map(|s| {
                    prepare_segment(&x[s * step..s * step + m], &win, cfg.detrend, &mut seg);
                    seg.iter().zip(&kernel).map(|(v, e)| e * *v).sum()
                })
                .collect()
        })
        .collect();

    let n = ts.n_channels();
    let norm = dt / (n_seg as f64 * win.iter().map(|w| w * w).sum::<f64>());
    let mut values = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let acc: Complex64 = coeffs[i].iter().zip(&coeffs[j]).map(|(a, b)| a * b.conj()).sum();
            values[(i, j)] = acc * norm;
            values[(j, i)] = (acc * norm).conj();
        }
    }
    let values = hermitian_part(&values);
    let std_error = values.norm() / (n_seg as f64).sqrt();
    CpsdMatrix::new(
        snapped,
        values,
        CpsdSource::Estimated {
            segments: n_seg,
            std_error,
            snap_distance: (snapped - omega0).abs(),
        },
    )
}

/// One-sided grid of auto-spectra, bins `0..=M/2`, used for frequency selection
/// and as a diagnostic output.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdGrid {
    pub omegas: Vec<f64>,
    /// `psd[channel][bin]`, two-sided density.
    pub psd: Vec<Vec<f64>>,
    pub segments: usize,
}

pub fn welch_psd(ts: &TimeSeriesMatrix, cfg: &SpectralConfig) -> Result<PsdGrid> {
    let n_seg = check_inputs(ts, cfg)?;
    let m = cfg.segment_length;
    let dt = ts.dt();
    let win = cfg.window_values();
    let step = cfg.step();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    let norm = dt / (n_seg as f64 * win.iter().map(|w| w * w).sum::<f64>());
    let psd = (0..ts.n_channels())
        .into_par_iter()
        .map(|c| {
            let x = ts.channel(c);
            let mut seg = vec![0.0; m];
            let mut buf = vec![Complex64::new(0.0, 0.0); m];
            let mut acc = vec![0.0; m / 2 + 1];
            for s in 0..n_seg {
                prepare_segment(&x[s * step..s * step + m], &win, cfg.detrend, &mut seg);
                for (b, v) in buf.iter_mut().zip(&seg) {
                    *b = Complex64::new(*v, 0.0);
                }
                fft.process(&mut buf);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += b.norm_sqr();
                }
            }
            acc.iter().map(|a| a * norm).collect()
        })
        .collect();
    let omegas = (0..=m / 2).map(|k| 2.0 * PI * k as f64 / (m as f64 * dt)).collect();
    Ok(PsdGrid {
        omegas,
        psd,
        segments: n_seg,
    })
}

/// Bin in `(0, Ω)` maximising the smallest per-channel PSD, skipping the DC main
/// lobe and frequencies where the node response is below [`MIN_NODE_GAIN`].
/// Ties go to the lowest bin.
pub fn select_omega0(ts: &TimeSeriesMatrix, band: f64, cfg: &SpectralConfig, node: &NodeDynamics) -> Result<f64> {
    let nyquist = PI / ts.dt();
    if !(band > 0.0) {
        return Err(Error::Validation(format!("excitation band must be positive, got {band}")));
    }
    let grid = welch_psd(ts, cfg)?;
    let limit = band.min(nyquist);
    let mut best: Option<(usize, f64)> = None;
    for k in cfg.first_clear_bin()..grid.omegas.len() {
        let w = grid.omegas[k];
        if w >= limit {
            break;
        }
        if nodal_transfer(node, w).map(|h| h.norm() < MIN_NODE_GAIN).unwrap_or(true) {
            continue;
        }
        let score = grid.psd.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((k, score));
        }
    }
    best.map(|(k, _)| grid.omegas[k]).ok_or_else(|| Error::FrequencyRejected {
        omega: band,
        reason: "no admissible frequency bin inside the excitation band".into(),
    })
}

/// `S⁻¹` with the conditioning facts needed downstream.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseCpsd {
    pub values: CMatrix,
    /// 2-norm condition number of the (possibly loaded) `S`.
    pub condition: f64,
    /// Amount added to the diagonal, if loading was needed.
    pub loading: Option<f64>,
}

/// Invert a CPSD matrix. Estimated matrices whose smallest eigenvalue is not
/// positive get `ε·trace(S)/N` added to the diagonal first.
pub fn estimate_inverse_cpsd(s: &CpsdMatrix) -> Result<InverseCpsd> {
    let n = s.n_nodes();
    let mut m = s.values().clone();
    let mut loading = None;
    if s.source().is_estimated() {
        let lambda_min = hermitian_eigenvalues(&m)[0];
        if lambda_min <= 0.0 {
            let trace: f64 = (0..n).map(|i| m[(i, i)].re).sum();
            let eps = LOADING_EPS * trace / n as f64;
            for i in 0..n {
                m[(i, i)] += eps;
            }
            warn!("estimated CPSD not positive definite (λ_min = {lambda_min:e}); loaded diagonal by {eps:e}");
            loading = Some(eps);
        }
    }
    let condition = hermitian_condition(&m);
    let values = invert(&m, "CPSD matrix")?;
    if !condition.is_finite() {
        return Err(Error::Singular(format!("CPSD matrix at omega = {} has infinite condition", s.omega())));
    }
    Ok(InverseCpsd {
        values,
        condition,
        loading,
    })
}

/// CPSD at `ω₀` from explicitly computed cross-correlations
/// `r_ij[m] = (1/L) Σ_n x_i[n+m] x_j[n]`, `|m| ≤ max_lag`, transformed at the one
/// frequency. Costs `O(L·max_lag)` per pair; `max_lag = L − 1` is the quadratic
/// textbook route and reproduces the full-length raw periodogram exactly.
pub fn lag_domain_cpsd(ts: &TimeSeriesMatrix, omega0: f64, max_lag: Option<usize>) -> Result<CpsdMatrix> {
    let len = ts.n_samples();
    let lag = max_lag.unwrap_or(len - 1).min(len - 1);
    let dt = ts.dt();
    if omega0.abs() > PI / dt {
        return Err(Error::FrequencyRejected {
            omega: omega0,
            reason: format!("above the Nyquist frequency {}", PI / dt),
        });
    }
    let n = ts.n_channels();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let theta = omega0 * dt;
    let entries: Vec<Complex64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let xi = ts.channel(i);
            let xj = ts.channel(j);
            let corr = |a: &[f64], b: &[f64], m: usize| -> f64 {
                a[m..].iter().zip(&b[..len - m]).map(|(p, q)| p * q).sum::<f64>() / len as f64
            };
            let mut acc = Complex64::new(corr(xi, xj, 0), 0.0);
            for m in 1..=lag {
                let e = Complex64::from_polar(1.0, -theta * m as f64);
                // r_ij[m] pairs with e^{-jθm}, r_ij[-m] = r_ji[m] with e^{+jθm}.
                acc += e * corr(xi, xj, m) + e.conj() * corr(xj, xi, m);
            }
            acc * dt
        })
        .collect();
    let mut values = CMatrix::zeros(n, n);
    for (&(i, j), &z) in pairs.iter().zip(&entries) {
        values[(i, j)] = z;
        values[(j, i)] = z.conj();
    }
    CpsdMatrix::new(
        omega0,
        hermitian_part(&values),
        CpsdSource::Estimated {
            segments: 1,
            std_error: values.norm(),
            snap_distance: 0.0,
        },
    )
}
