//! Node and network frequency responses, stability, and the closed-form output CPSD.
//!
//! A network of `N` identical SISO nodes `(A, b, cᵀ)` coupled through `G` has
//! joint state matrix `M = I_N ⊗ A + G ⊗ b cᵀ`. Its `N×N` transfer matrix can be
//! formed two ways: by inverting the full `Nn×Nn` resolvent, or through the
//! reduced form `(I_N / h(jω) − G)⁻¹`. Both are kept; the first is the reference
//! path and the second is what the reconstruction code relies on.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::cpsd::{CpsdMatrix, CpsdSource};
use crate::error::{Error, Result};
use crate::graph::{content_lines, parse_count, parse_row, ConnectivityMatrix, GroundedIndex};
use crate::linalg::{invert, kron, to_complex, CMatrix};

/// Below this magnitude the nodal transfer function is treated as a transmission zero.
pub const TRANSMISSION_ZERO_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct NodeDynamics {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
}

impl NodeDynamics {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() || b.len() != n || c.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "node dynamics: A is {}x{}, b has {}, c has {}",
                a.nrows(),
                a.ncols(),
                b.len(),
                c.len()
            )));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Validation("node dynamics contain non-finite values".into()));
        }
        Ok(Self { a, b, c })
    }

    /// First-order node `ẋ = −a x + u`, `y = x`, i.e. `h(s) = 1/(s + a)`.
    pub fn scalar_pole(a: f64) -> Self {
        Self {
            a: DMatrix::from_element(1, 1, -a),
            b: DVector::from_element(1, 1.0),
            c: DVector::from_element(1, 1.0),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    /// `h(jω)`.
    pub fn transfer(&self, omega: f64) -> Result<Complex64> {
        nodal_transfer(self, omega)
    }

    /// `n`, n rows of A, then b, then c.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.state_dim());
        let fmt = |it: &mut dyn Iterator<Item = &f64>| -> String {
            it.map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
        };
        for row in self.a.row_iter() {
            out.push_str(&fmt(&mut row.iter()));
            out.push('\n');
        }
        out.push_str(&fmt(&mut self.b.iter()));
        out.push('\n');
        out.push_str(&fmt(&mut self.c.iter()));
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        let n = parse_count(&mut lines, "state dimension")?;
        let mut a = Vec::with_capacity(n * n);
        for r in 0..n {
            a.extend(parse_row(&mut lines, n, &format!("row {} of A", r + 1))?);
        }
        let b = parse_row(&mut lines, n, "b")?;
        let c = parse_row(&mut lines, n, "c")?;
        if let Some((line, _)) = lines.next() {
            return Err(Error::Parse {
                line,
                msg: "unexpected content after c".into(),
            });
        }
        Self::new(
            DMatrix::from_row_slice(n, n, &a),
            DVector::from_vec(b),
            DVector::from_vec(c),
        )
    }
}

/// `h(jω) = cᵀ (jωI − A)⁻¹ b`.
pub fn nodal_transfer(node: &NodeDynamics, omega: f64) -> Result<Complex64> {
    let n = node.state_dim();
    let resolvent = CMatrix::identity(n, n) * Complex64::new(0.0, omega) - to_complex(&node.a);
    let rhs = node.b.map(|x| Complex64::new(x, 0.0));
    let x = resolvent
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular(format!("node resolvent jωI − A at omega = {omega}")))?;
    let h: Complex64 = node
        .c
        .iter()
        .zip(x.iter())
        .map(|(ci, xi)| xi * *ci)
        .sum();
    if !h.re.is_finite() || !h.im.is_finite() {
        return Err(Error::Singular(format!("node resolvent at omega = {omega}")));
    }
    Ok(h)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSystem {
    node: NodeDynamics,
    g: ConnectivityMatrix,
}

/// Stability verdict with the spectral abscissa (largest real part of an eigenvalue).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stability {
    pub hurwitz: bool,
    pub abscissa: f64,
}

impl NetworkSystem {
    pub fn new(node: NodeDynamics, g: ConnectivityMatrix) -> Self {
        Self { node, g }
    }

    pub fn node(&self) -> &NodeDynamics {
        &self.node
    }

    pub fn connectivity(&self) -> &ConnectivityMatrix {
        &self.g
    }

    pub fn n_nodes(&self) -> usize {
        self.g.n_nodes()
    }

    /// `I_N ⊗ A + G ⊗ b cᵀ`.
    pub fn state_matrix(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let bc = &self.node.b * self.node.c.transpose();
        kron(&DMatrix::identity(n, n), &self.node.a) + kron(self.g.weights(), &bc)
    }

    /// `I_N ⊗ b`.
    pub fn input_matrix(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        kron(&DMatrix::identity(n, n), &DMatrix::from_column_slice(self.node.state_dim(), 1, self.node.b.as_slice()))
    }

    /// `I_N ⊗ cᵀ`.
    pub fn output_matrix(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        kron(&DMatrix::identity(n, n), &DMatrix::from_row_slice(1, self.node.state_dim(), self.node.c.as_slice()))
    }

    /// The same node dynamics coupled through `G̃_j`.
    pub fn grounded(&self, j: GroundedIndex) -> Result<Self> {
        Ok(Self {
            node: self.node.clone(),
            g: self.g.ground(j)?,
        })
    }

    pub fn stability(&self) -> Result<Stability> {
        is_hurwitz(self)
    }

    pub fn require_hurwitz(&self) -> Result<Stability> {
        let s = is_hurwitz(self)?;
        if s.hurwitz {
            Ok(s)
        } else {
            Err(Error::NotHurwitz { abscissa: s.abscissa })
        }
    }
}

/// Eigenvalues of the joint state matrix; Hurwitz iff every real part is negative.
pub fn is_hurwitz(sys: &NetworkSystem) -> Result<Stability> {
    let m = sys.state_matrix();
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("state matrix has non-finite entries".into()));
    }
    let eig = m.complex_eigenvalues();
    if eig.iter().any(|z| !z.re.is_finite()) {
        return Err(Error::Numerical("eigenvalue computation did not converge".into()));
    }
    let abscissa = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(Stability {
        hurwitz: abscissa < 0.0,
        abscissa,
    })
}

/// `H(jω) = (I⊗cᵀ)(jωI − I⊗A − G⊗bcᵀ)⁻¹(I⊗b)` from the full `Nn×Nn` resolvent.
pub fn network_transfer_direct(sys: &NetworkSystem, omega: f64) -> Result<CMatrix> {
    let m = sys.state_matrix();
    let dim = m.nrows();
    let resolvent = CMatrix::identity(dim, dim) * Complex64::new(0.0, omega) - to_complex(&m);
    let inv = invert(&resolvent, &format!("network resolvent at omega = {omega}"))?;
    Ok(to_complex(&sys.output_matrix()) * inv * to_complex(&sys.input_matrix()))
}

/// `H(jω) = (I_N / h(jω) − G)⁻¹`, needing only an `N×N` inverse.
pub fn network_transfer_closed(sys: &NetworkSystem, omega: f64) -> Result<CMatrix> {
    let h = nodal_transfer(&sys.node, omega)?;
    closed_transfer_from_h(sys.connectivity(), h, omega)
}

pub(crate) fn closed_transfer_from_h(g: &ConnectivityMatrix, h: Complex64, omega: f64) -> Result<CMatrix> {
    if h.norm() < TRANSMISSION_ZERO_TOL {
        return Err(Error::TransmissionZero {
            omega,
            magnitude: h.norm(),
        });
    }
    let n = g.n_nodes();
    let m = CMatrix::identity(n, n) * h.inv() - to_complex(g.weights());
    invert(&m, &format!("I/h - G at omega = {omega}"))
}

/// A two-sided input PSD `S_w(ω)` that is strictly positive on `(−Ω, Ω)`.
pub trait InputPsd: Send + Sync {
    fn density(&self, omega: f64) -> f64;
    /// `Ω`, the upper edge of the excitation interval.
    fn band_limit(&self) -> f64;
}

/// Constant density on a band.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatPsd {
    pub level: f64,
    pub band: f64,
}

impl InputPsd for FlatPsd {
    fn density(&self, _omega: f64) -> f64 {
        self.level
    }

    fn band_limit(&self) -> f64 {
        self.band
    }
}

/// `S_w(ω) = S_w · (I/|h|² + GᵀG − G/h* − Gᵀ/h)⁻¹` evaluated in closed form.
pub fn analytic_cpsd(sys: &NetworkSystem, noise: &dyn InputPsd, omega: f64) -> Result<CpsdMatrix> {
    if omega.abs() >= noise.band_limit() {
        return Err(Error::FrequencyRejected {
            omega,
            reason: format!("outside the excitation interval (-{0}, {0})", noise.band_limit()),
        });
    }
    let s_w = noise.density(omega);
    if s_w.is_nan() || s_w <= 0.0 {
        return Err(Error::Validation(format!("input PSD must be positive, got {s_w}")));
    }
    let h = nodal_transfer(sys.node(), omega)?;
    cpsd_from_transfer(sys.connectivity(), h, s_w, omega)
}

/// Closed-form CPSD for a known nodal response `h` and input level `s_w`.
pub fn cpsd_from_transfer(g: &ConnectivityMatrix, h: Complex64, s_w: f64, omega: f64) -> Result<CpsdMatrix> {
    if h.norm() < TRANSMISSION_ZERO_TOL {
        return Err(Error::TransmissionZero {
            omega,
            magnitude: h.norm(),
        });
    }
    let n = g.n_nodes();
    let gc = to_complex(g.weights());
    let gt = gc.transpose();
    let inner = CMatrix::identity(n, n) * Complex64::new(1.0 / h.norm_sqr(), 0.0) + &gt * &gc
        - &gc * h.conj().inv()
        - &gt * h.inv();
    let s = invert(&inner, "inner CPSD matrix (ill-conditioned network)")? * Complex64::new(s_w, 0.0);
    CpsdMatrix::new(omega, crate::linalg::hermitian_part(&s), CpsdSource::Analytic)
}

/// Product form `S_w · H(jω) H(jω)*` using the full-resolvent transfer matrix.
pub fn product_form_cpsd(sys: &NetworkSystem, s_w: f64, omega: f64) -> Result<CpsdMatrix> {
    let h = network_transfer_direct(sys, omega)?;
    let s = &h * h.adjoint() * Complex64::new(s_w, 0.0);
    CpsdMatrix::new(omega, s, CpsdSource::Analytic)
}
