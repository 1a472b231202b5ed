//! Topology recovery from a full CPSD matrix and its grounded counterparts.
//!
//! Row `j` of `G` is read off the difference between the diagonal of `S⁻¹` and
//! that of `S̃_j⁻¹`, the inverse CPSD of the network with node `j` grounded:
//! `S_w([S⁻¹]_ii − [S̃_j⁻¹]_ii) = g_ji²`. Undirected and nonreciprocal networks
//! need only the full matrix.

use std::fmt::Write as _;

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cpsd::CpsdMatrix;
use crate::error::{Error, Result};
use crate::graph::{format_real_matrix, BooleanStructure, ConnectivityMatrix, GroundedIndex};
use crate::linalg::{hermitian_sqrt, max_abs, CMatrix};
use crate::lti::{cpsd_from_transfer, NetworkSystem, NodeDynamics};
use crate::spectral::{estimate_inverse_cpsd, InverseCpsd};

/// Default edge threshold for analytic inputs.
pub const DEFAULT_TAU: f64 = 1e-6;

/// Square-root eigenvalues in `[-SQRT_NEG_TOL, 0)` are clamped to zero.
pub const SQRT_NEG_TOL: f64 = 1e-8;

/// Largest imaginary residue tolerated in a recovered symmetric `G`.
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;

/// Smallest `|Im h⁻¹(jω₀)|` accepted by the nonreciprocal method.
pub const MIN_IM_INV_H: f64 = 1e-8;

/// Diagonal differences above `-ROUNDOFF·max_i [S⁻¹]_ii` are rounding, not noise.
pub const ROUNDOFF: f64 = 1e-12;

/// Relative frequency mismatch allowed between the full and grounded CPSDs.
const OMEGA_MATCH_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// `(j, i)` holds `[S⁻¹]_ii − [S̃_j⁻¹]_ii` (index shifted for `i > j`); zero diagonal.
    pub raw_differences: Option<DMatrix<f64>>,
    /// Statistic the edge threshold was applied to, laid out like `G`.
    pub statistic: Option<DMatrix<f64>>,
    /// Differences below `-ROUNDOFF` that were clamped to zero.
    pub clamp_count: usize,
    /// Condition numbers of `S`, then `S̃_1 … S̃_N` when grounded data were used.
    pub condition_numbers: Vec<f64>,
    /// How many inverses needed diagonal loading.
    pub loaded_inverses: usize,
    /// Square-root branch flips (undirected method only).
    pub branch_flips: usize,
    /// Eigenvalues clamped inside the matrix square root.
    pub sqrt_clamped: usize,
    /// The method cannot see self-loops; diagonals are reported as zero.
    pub diagonal_undefined: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionResult {
    pub method: &'static str,
    pub boolean_structure: Option<BooleanStructure>,
    pub weights: Option<ConnectivityMatrix>,
    pub omega0: f64,
    pub input_psd_estimate: Option<f64>,
    pub threshold_used: f64,
    pub diagnostics: Diagnostics,
}

impl ReconstructionResult {
    /// Plain-text report: scalars first, then the matrix blocks.
    pub fn to_report(&self) -> String {
        let d = &self.diagnostics;
        let mut out = String::new();
        let _ = writeln!(out, "method {}", self.method);
        let _ = writeln!(out, "omega0 {}", self.omega0);
        match self.input_psd_estimate {
            Some(s) => writeln!(out, "input_psd {s}"),
            None => writeln!(out, "input_psd none"),
        }
        .ok();
        let _ = writeln!(out, "threshold {}", self.threshold_used);
        let _ = writeln!(out, "clamp_count {}", d.clamp_count);
        let _ = writeln!(out, "loaded_inverses {}", d.loaded_inverses);
        let _ = writeln!(out, "branch_flips {}", d.branch_flips);
        let _ = writeln!(out, "sqrt_clamped {}", d.sqrt_clamped);
        let _ = writeln!(out, "diagonal_undefined {}", d.diagonal_undefined);
        let conds: Vec<String> = d.condition_numbers.iter().map(|c| format!("{c:e}")).collect();
        let _ = writeln!(out, "condition_numbers {}", conds.join(" "));
        if let Some(g) = &self.weights {
            out.push_str("[weights]\n");
            out.push_str(&format_real_matrix(g.weights()));
        }
        if let Some(b) = &self.boolean_structure {
            out.push_str("[boolean]\n");
            out.push_str(&b.to_text());
        }
        if let Some(r) = &d.raw_differences {
            out.push_str("[raw_differences]\n");
            out.push_str(&format_real_matrix(r));
        }
        if let Some(s) = &d.statistic {
            out.push_str("[statistic]\n");
            out.push_str(&format_real_matrix(s));
        }
        out
    }
}

/// `S_w(ω) = ‖u‖²(λ²|h|² − 2λ Re h + 1) / ((uᵀS⁻¹u)|h|²)`.
///
/// The `‖u‖²` factor makes the result independent of the eigenvector's scaling;
/// for unit `u` it drops out.
pub fn input_psd_from_eigenpair(s: &CpsdMatrix, h: Complex64, lambda: f64, u: &DVector<f64>) -> Result<f64> {
    let inv = estimate_inverse_cpsd(s)?;
    input_psd_from_inverse(&inv.values, h, lambda, u)
}

pub fn input_psd_from_inverse(s_inv: &CMatrix, h: Complex64, lambda: f64, u: &DVector<f64>) -> Result<f64> {
    if u.len() != s_inv.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvector of length {} for a {}-node CPSD",
            u.len(),
            s_inv.nrows()
        )));
    }
    let h2 = h.norm_sqr();
    if h2 == 0.0 || !h2.is_finite() {
        return Err(Error::Validation(format!("nodal response must be nonzero and finite, got {h}")));
    }
    let uc = u.map(|x| Complex64::new(x, 0.0));
    let q = (uc.transpose() * s_inv * &uc)[(0, 0)].re;
    if !(q > 0.0) {
        return Err(Error::Numerical(format!(
            "quadratic form uᵀS⁻¹u = {q:e} is not positive; the CPSD estimate is unusable"
        )));
    }
    let numer = lambda * lambda * h2 - 2.0 * lambda * h.re + 1.0;
    Ok(u.norm_squared() * numer / (q * h2))
}

/// Eigenpair `(0, 𝟏)` of a Laplacian connectivity: `S_w = N / ((𝟏ᵀS⁻¹𝟏)|h|²)`.
pub fn input_psd_laplacian(s: &CpsdMatrix, h: Complex64) -> Result<f64> {
    input_psd_from_eigenpair(s, h, 0.0, &DVector::from_element(s.n_nodes(), 1.0))
}

/// One recovered row of `G`.
#[derive(Clone, Debug, PartialEq)]
pub struct RowRecovery {
    /// `|g_ji|` for `i ≠ j`; entry `j` is zero.
    pub weights: DVector<f64>,
    /// Raw diagonal differences; entry `j` is zero.
    pub raw: DVector<f64>,
    pub clamped: usize,
}

/// Row `j` of `G` from `S⁻¹` and `S̃_j⁻¹`.
pub fn recover_row(s_inv: &CMatrix, grounded_inv: &CMatrix, j: GroundedIndex, s_w: f64) -> Result<RowRecovery> {
    let n = s_inv.nrows();
    j.check(n)?;
    if grounded_inv.nrows() + 1 != n || !grounded_inv.is_square() || !s_inv.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "grounded inverse is {}x{} for a {n}-node network",
            grounded_inv.nrows(),
            grounded_inv.ncols()
        )));
    }
    if !(s_w > 0.0 && s_w.is_finite()) {
        return Err(Error::Validation(format!("input PSD must be positive, got {s_w}")));
    }
    let jz = j.zero_based();
    let scale = (0..n).map(|i| s_inv[(i, i)].re.abs()).fold(0.0, f64::max);
    let mut weights = DVector::zeros(n);
    let mut raw = DVector::zeros(n);
    let mut clamped = 0;
    for i in (0..n).filter(|&i| i != jz) {
        let shifted = if i < jz { i } else { i - 1 };
        let delta = s_inv[(i, i)].re - grounded_inv[(shifted, shifted)].re;
        raw[i] = delta;
        if delta < -ROUNDOFF * scale {
            clamped += 1;
        }
        weights[i] = (s_w * delta).max(0.0).sqrt();
    }
    Ok(RowRecovery { weights, raw, clamped })
}

/// Inverses of the full and all grounded CPSDs at a common frequency.
#[derive(Clone, Debug)]
pub struct InvertedExperiment {
    pub omega0: f64,
    pub full: InverseCpsd,
    /// Index `j − 1` holds `S̃_j⁻¹`.
    pub grounded: Vec<InverseCpsd>,
}

impl InvertedExperiment {
    pub fn n_nodes(&self) -> usize {
        self.full.values.nrows()
    }

    fn diagnostics(&self) -> Diagnostics {
        let all = std::iter::once(&self.full).chain(&self.grounded);
        Diagnostics {
            condition_numbers: all.clone().map(|i| i.condition).collect(),
            loaded_inverses: all.filter(|i| i.loading.is_some()).count(),
            diagonal_undefined: true,
            ..Diagnostics::default()
        }
    }
}

/// Check the grounded set and invert everything (in parallel).
pub fn invert_experiment(s: &CpsdMatrix, grounded: &[(GroundedIndex, CpsdMatrix)]) -> Result<InvertedExperiment> {
    let n = s.n_nodes();
    if n < 2 {
        return Err(Error::Validation("grounding needs at least two nodes".into()));
    }
    let mut slots: Vec<Option<&CpsdMatrix>> = vec![None; n];
    for (j, sj) in grounded {
        j.check(n)?;
        if sj.n_nodes() + 1 != n {
            return Err(Error::DimensionMismatch(format!(
                "grounded CPSD for node {} has {} nodes, expected {}",
                j.get(),
                sj.n_nodes(),
                n - 1
            )));
        }
        if (sj.omega() - s.omega()).abs() > OMEGA_MATCH_TOL * s.omega().abs().max(1.0) {
            return Err(Error::Validation(format!(
                "grounded CPSD for node {} is at omega = {}, full CPSD at {}",
                j.get(),
                sj.omega(),
                s.omega()
            )));
        }
        if slots[j.zero_based()].replace(sj).is_some() {
            return Err(Error::Validation(format!("duplicate grounded CPSD for node {}", j.get())));
        }
    }
    let slots: Vec<&CpsdMatrix> = slots
        .into_iter()
        .enumerate()
        .map(|(k, m)| m.ok_or_else(|| Error::Validation(format!("missing grounded CPSD for node {}", k + 1))))
        .collect::<Result<_>>()?;
    let full = estimate_inverse_cpsd(s)?;
    let grounded = slots.par_iter().map(|m| estimate_inverse_cpsd(m)).collect::<Result<Vec<_>>>()?;
    Ok(InvertedExperiment {
        omega0: s.omega(),
        full,
        grounded,
    })
}

struct Rows {
    weights: DMatrix<f64>,
    raw: DMatrix<f64>,
    clamped: usize,
}

fn all_rows(inv: &InvertedExperiment, s_w: f64) -> Result<Rows> {
    let n = inv.n_nodes();
    let rows = (0..n)
        .into_par_iter()
        .map(|jz| {
            let j = GroundedIndex::new(jz + 1)?;
            recover_row(&inv.full.values, &inv.grounded[jz].values, j, s_w)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut weights = DMatrix::zeros(n, n);
    let mut raw = DMatrix::zeros(n, n);
    let mut clamped = 0;
    for (jz, r) in rows.iter().enumerate() {
        weights.set_row(jz, &r.weights.transpose());
        raw.set_row(jz, &r.raw.transpose());
        clamped += r.clamped;
    }
    if clamped > 0 {
        warn!("{clamped} negative diagonal differences clamped to zero");
    }
    Ok(Rows { weights, raw, clamped })
}

/// Edge threshold policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    /// [`threshold_heuristic`] on the off-diagonal statistics. The fallback is
    /// also a floor, so roundoff-level statistics never form edges.
    Gap { fallback: f64 },
}

impl Threshold {
    fn resolve(self, stat: &DMatrix<f64>) -> f64 {
        match self {
            Threshold::Fixed(t) => t,
            Threshold::Gap { fallback } => {
                let n = stat.nrows();
                let vals: Vec<f64> = (0..n)
                    .flat_map(|r| (0..n).filter(move |&c| c != r).map(move |c| (r, c)))
                    .map(|(r, c)| stat[(r, c)])
                    .collect();
                threshold_heuristic(&vals, fallback).max(fallback)
            }
        }
    }
}

fn structure_above(stat: &DMatrix<f64>, tau: f64) -> BooleanStructure {
    let n = stat.nrows();
    BooleanStructure::from_entries(DMatrix::from_fn(n, n, |r, c| r != c && stat[(r, c)] > tau))
        .expect("square entries")
}

/// Boolean structure: `b_ji = 1` iff the unscaled difference exceeds `τ`.
pub fn boolean_directed(s: &CpsdMatrix, grounded: &[(GroundedIndex, CpsdMatrix)], tau: Threshold) -> Result<ReconstructionResult> {
    boolean_from_inverses(&invert_experiment(s, grounded)?, tau)
}

pub fn boolean_from_inverses(inv: &InvertedExperiment, tau: Threshold) -> Result<ReconstructionResult> {
    // Any positive level works here: the weights are discarded.
    let rows = all_rows(inv, 1.0)?;
    let threshold = tau.resolve(&rows.raw);
    let mut diagnostics = inv.diagnostics();
    diagnostics.clamp_count = rows.clamped;
    diagnostics.statistic = Some(rows.raw.clone());
    diagnostics.raw_differences = Some(rows.raw.clone());
    Ok(ReconstructionResult {
        method: "boolean-directed",
        boolean_structure: Some(structure_above(&rows.raw, threshold)),
        weights: None,
        omega0: inv.omega0,
        input_psd_estimate: None,
        threshold_used: threshold,
        diagnostics,
    })
}

/// Weighted recovery: `|g_ji| = sqrt(S_w·Δ)`. Weights at or below the threshold
/// are set to zero so that the weights and the structure agree.
pub fn exact_directed(
    s: &CpsdMatrix,
    grounded: &[(GroundedIndex, CpsdMatrix)],
    s_w: f64,
    tau: Threshold,
) -> Result<ReconstructionResult> {
    exact_from_inverses(&invert_experiment(s, grounded)?, s_w, tau)
}

pub fn exact_from_inverses(inv: &InvertedExperiment, s_w: f64, tau: Threshold) -> Result<ReconstructionResult> {
    let rows = all_rows(inv, s_w)?;
    let threshold = tau.resolve(&rows.weights);
    let b = structure_above(&rows.weights, threshold);
    let kept = DMatrix::from_fn(rows.weights.nrows(), rows.weights.ncols(), |r, c| {
        if b.entries()[(r, c)] {
            rows.weights[(r, c)]
        } else {
            0.0
        }
    });
    let mut diagnostics = inv.diagnostics();
    diagnostics.clamp_count = rows.clamped;
    diagnostics.statistic = Some(rows.weights);
    diagnostics.raw_differences = Some(rows.raw);
    Ok(ReconstructionResult {
        method: "exact-directed",
        boolean_structure: Some(b),
        weights: Some(ConnectivityMatrix::new(kept)?),
        omega0: inv.omega0,
        input_psd_estimate: Some(s_w),
        threshold_used: threshold,
        diagnostics,
    })
}

/// Sign applied to the principal root in `G = Re{h⁻¹}I ± P`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    fn flipped(self) -> Self {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }

    /// `Minus` when `Re{h⁻¹} > 0`: then `G − Re{h⁻¹}I ≺ 0` for every diffusive `G`
    /// and for every `G` that is stable with a scalar first-order node.
    pub fn default_for(h: Complex64) -> Self {
        if h.inv().re > 0.0 {
            Branch::Minus
        } else {
            Branch::Plus
        }
    }
}

/// How the undirected method settles the sign of the square root.
#[derive(Clone, Debug, Default)]
pub struct BranchOptions {
    /// Start from this branch instead of [`Branch::default_for`].
    pub initial: Option<Branch>,
    /// When given, a candidate must also make the network Hurwitz with these nodes.
    pub node: Option<NodeDynamics>,
    /// Relative tolerance of the CPSD consistency check.
    pub consistency_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UndirectedRecovery {
    pub g: ConnectivityMatrix,
    pub branch: Branch,
    pub flips: usize,
    pub sqrt_clamped: usize,
    /// Largest discarded imaginary residue.
    pub imag_residue: f64,
}

/// `G = Re{h⁻¹}I ± (S⁻¹S_w − Im²{h⁻¹}I)^{1/2}` for symmetric `G`.
///
/// Both signs reproduce `S` exactly, so consistency alone cannot pick one; with
/// `options.node` set, the candidate must also yield a Hurwitz network. The
/// starting branch is tried first and flipped once if it fails.
pub fn exact_undirected(s: &CpsdMatrix, h: Complex64, s_w: f64, options: &BranchOptions) -> Result<UndirectedRecovery> {
    if h.norm() == 0.0 || !h.norm().is_finite() {
        return Err(Error::Validation(format!("nodal response must be nonzero and finite, got {h}")));
    }
    if !(s_w > 0.0 && s_w.is_finite()) {
        return Err(Error::Validation(format!("input PSD must be positive, got {s_w}")));
    }
    let n = s.n_nodes();
    let inv = estimate_inverse_cpsd(s)?;
    let hinv = h.inv();
    let m = &inv.values * Complex64::new(s_w, 0.0) - CMatrix::identity(n, n) * Complex64::new(hinv.im * hinv.im, 0.0);
    let root = hermitian_sqrt(&m, SQRT_NEG_TOL * max_abs(&m).max(1.0))?;
    let tol = options
        .consistency_tol
        .unwrap_or(if s.source().is_estimated() { f64::INFINITY } else { 1e-6 });

    let candidate = |branch: Branch| -> Result<(ConnectivityMatrix, f64)> {
        let sign = if branch == Branch::Plus { 1.0 } else { -1.0 };
        let gc = CMatrix::identity(n, n) * Complex64::new(hinv.re, 0.0) + &root.root * Complex64::new(sign, 0.0);
        let imag = gc.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let scale = gc.iter().map(|z| z.re.abs()).fold(1.0, f64::max);
        if imag > IMAG_RESIDUE_TOL * scale {
            return Err(Error::Numerical(format!("recovered G has imaginary residue {imag:e}")));
        }
        let re = gc.map(|z| z.re);
        let sym = (&re + re.transpose()) * 0.5;
        Ok((ConnectivityMatrix::new(sym)?, imag))
    };
    let admissible = |g: &ConnectivityMatrix| -> Result<bool> {
        let back = cpsd_from_transfer(g, h, s_w, s.omega())?;
        let rel = max_abs(&(back.values() - s.values())) / max_abs(s.values());
        if rel > tol {
            return Ok(false);
        }
        match &options.node {
            Some(node) => Ok(NetworkSystem::new(node.clone(), g.clone()).stability()?.hurwitz),
            None => Ok(true),
        }
    };

    let first = options.initial.unwrap_or_else(|| Branch::default_for(h));
    let mut flips = 0;
    for branch in [first, first.flipped()] {
        let (g, imag_residue) = candidate(branch)?;
        if admissible(&g)? {
            return Ok(UndirectedRecovery {
                g,
                branch,
                flips,
                sqrt_clamped: root.clamped,
                imag_residue,
            });
        }
        flips += 1;
    }
    Err(Error::Numerical(
        "neither square-root branch reproduces an admissible symmetric network".into(),
    ))
}

/// `G − Gᵀ = (S_w / Im{h⁻¹})·Im{S⁻¹}`; `g_ij` is its positive part.
///
/// The structure uses the unscaled statistic `Im{S⁻¹}_ij / Im{h⁻¹}`, so it needs no
/// input PSD; weights are produced only when `s_w` is given.
pub fn nonreciprocal(s: &CpsdMatrix, h: Complex64, s_w: Option<f64>, tau: Threshold) -> Result<ReconstructionResult> {
    let im_hinv = h.inv().im;
    if !(im_hinv.abs() >= MIN_IM_INV_H) {
        return Err(Error::FrequencyRejected {
            omega: s.omega(),
            reason: format!("|Im 1/h| = {:e} is too small for the nonreciprocal method", im_hinv.abs()),
        });
    }
    if let Some(sw) = s_w {
        if !(sw > 0.0 && sw.is_finite()) {
            return Err(Error::Validation(format!("input PSD must be positive, got {sw}")));
        }
    }
    let inv = estimate_inverse_cpsd(s)?;
    let n = s.n_nodes();
    let stat = DMatrix::from_fn(n, n, |r, c| if r == c { 0.0 } else { inv.values[(r, c)].im / im_hinv });
    let threshold = tau.resolve(&stat);
    let b = structure_above(&stat, threshold);
    let weights = match s_w {
        Some(sw) => Some(ConnectivityMatrix::new(DMatrix::from_fn(n, n, |r, c| {
            if b.entries()[(r, c)] {
                sw * stat[(r, c)]
            } else {
                0.0
            }
        }))?),
        None => None,
    };
    Ok(ReconstructionResult {
        method: "nonreciprocal",
        boolean_structure: Some(b),
        weights,
        omega0: s.omega(),
        input_psd_estimate: s_w,
        threshold_used: threshold,
        diagnostics: Diagnostics {
            statistic: Some(stat),
            condition_numbers: vec![inv.condition],
            loaded_inverses: usize::from(inv.loading.is_some()),
            diagonal_undefined: true,
            ..Diagnostics::default()
        },
    })
}

/// Geometric midpoint of the widest ratio between consecutive positive values
/// (sorted descending). Returns `fallback` when the positive values span less
/// than one decade or there are fewer than two of them.
pub fn threshold_heuristic(values: &[f64], fallback: f64) -> f64 {
    let mut pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0 && v.is_finite()).collect();
    if pos.len() < 2 {
        return fallback;
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    if pos[0] / pos[pos.len() - 1] < 10.0 {
        return fallback;
    }
    let (k, _) = pos
        .windows(2)
        .enumerate()
        .map(|(k, w)| (k, w[0] / w[1]))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    (pos[k] * pos[k + 1]).sqrt()
}

/// Analytic CPSDs of the full and every grounded network at one frequency,
/// for oracle runs.
pub fn analytic_experiment(
    g: &ConnectivityMatrix,
    h: Complex64,
    s_w: f64,
    omega: f64,
) -> Result<(CpsdMatrix, Vec<(GroundedIndex, CpsdMatrix)>)> {
    let full = cpsd_from_transfer(g, h, s_w, omega)?;
    let grounded = GroundedIndex::all(g.n_nodes())
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|j| Ok((j, cpsd_from_transfer(&g.ground(j)?, h, s_w, omega)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((full, grounded))
}

/// Off-diagonal magnitudes of `G`, the quantity the grounding method recovers.
pub fn offdiagonal_magnitudes(g: &ConnectivityMatrix) -> DMatrix<f64> {
    let w = g.weights();
    DMatrix::from_fn(w.nrows(), w.ncols(), |r, c| if r == c { 0.0 } else { w[(r, c)].abs() })
}
