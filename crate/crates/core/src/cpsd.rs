//! Cross-power spectral density matrices at a single frequency.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::content_lines;
use crate::linalg::{hermitian_defect, CMatrix};

#[derive(Clone, Debug, PartialEq)]
pub enum CpsdSource {
    Analytic,
    Estimated {
        /// Number of averaged segments (K).
        segments: usize,
        /// `‖S‖_F / √K`.
        std_error: f64,
        /// Distance between the requested and the snapped frequency.
        snap_distance: f64,
    },
}

impl CpsdSource {
    pub fn is_estimated(&self) -> bool {
        matches!(self, CpsdSource::Estimated { .. })
    }

    pub fn segments(&self) -> usize {
        match self {
            CpsdSource::Analytic => 0,
            CpsdSource::Estimated { segments, .. } => *segments,
        }
    }
}

/// `S(ω)`, with `S[(i, j)] = S_{y_i y_j}(ω) = E[Y_i(ω) Y_j(ω)^*]` (two-sided density).
#[derive(Clone, Debug, PartialEq)]
pub struct CpsdMatrix {
    omega: f64,
    values: CMatrix,
    source: CpsdSource,
}

impl CpsdMatrix {
    pub fn new(omega: f64, values: CMatrix, source: CpsdSource) -> Result<Self> {
        if !values.is_square() || values.nrows() == 0 {
            return Err(Error::DimensionMismatch("CPSD matrix must be square and non-empty".into()));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical("CPSD matrix has non-finite entries".into()));
        }
        Ok(Self {
            omega,
            values,
            source,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn values(&self) -> &CMatrix {
        &self.values
    }

    pub fn source(&self) -> &CpsdSource {
        &self.source
    }

    pub fn hermitian_defect(&self) -> f64 {
        hermitian_defect(&self.values)
    }

    /// Multiply every entry by a real factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            omega: self.omega,
            values: &self.values * Complex64::new(factor, 0.0),
            source: self.source.clone(),
        }
    }

    /// Header `N omega source K`, then N rows of `re+imj` entries.
    pub fn to_text(&self) -> String {
        let (tag, k) = match &self.source {
            CpsdSource::Analytic => ("analytic", 0),
            CpsdSource::Estimated { segments, .. } => ("estimated", *segments),
        };
        let mut out = format!("{} {} {} {}\n", self.n_nodes(), self.omega, tag, k);
        if let CpsdSource::Estimated {
            std_error,
            snap_distance,
            ..
        } = &self.source
        {
            let _ = writeln!(out, "# std_error {std_error} snap_distance {snap_distance}");
        }
        for row in self.values.row_iter() {
            let cells: Vec<String> = row.iter().map(|z| format_complex(*z)).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut std_error = 0.0;
        let mut snap_distance = 0.0;
        for line in text.lines() {
            let mut toks = line.trim().trim_start_matches('#').split_whitespace();
            if line.trim_start().starts_with('#') && toks.next() == Some("std_error") {
                let rest: Vec<&str> = toks.collect();
                if let [se, "snap_distance", sd] = rest.as_slice() {
                    std_error = se.parse().unwrap_or(0.0);
                    snap_distance = sd.parse().unwrap_or(0.0);
                }
            }
        }
        let mut lines = content_lines(text);
        let (lineno, header) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: "empty CPSD file".into(),
        })?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let bad = |msg: &str| Error::Parse {
            line: lineno,
            msg: msg.to_string(),
        };
        if h.len() != 4 {
            return Err(bad("header must be `N omega source K`"));
        }
        let n: usize = h[0].parse().map_err(|_| bad("bad N"))?;
        let omega: f64 = h[1].parse().map_err(|_| bad("bad omega"))?;
        let k: usize = h[3].parse().map_err(|_| bad("bad K"))?;
        let source = match h[2] {
            "analytic" => CpsdSource::Analytic,
            "estimated" => CpsdSource::Estimated {
                segments: k,
                std_error,
                snap_distance,
            },
            other => return Err(bad(&format!("unknown source `{other}`"))),
        };
        let mut data = Vec::with_capacity(n * n);
        for r in 0..n {
            let (ln, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: format!("missing CPSD row {}", r + 1),
            })?;
            let row: Vec<Complex64> = line
                .split_whitespace()
                .map(|t| parse_complex(t, ln))
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected {n} entries, found {}", row.len()),
                });
            }
            data.extend(row);
        }
        Self::new(omega, CMatrix::from_row_slice(n, n, &data), source)
    }
}

pub(crate) fn format_complex(z: Complex64) -> String {
    format!("{:e}{:+e}j", z.re, z.im)
}

pub(crate) fn parse_complex(tok: &str, line: usize) -> Result<Complex64> {
    let err = || Error::Parse {
        line,
        msg: format!("`{tok}` is not a complex number of the form re+imj"),
    };
    let body = tok.strip_suffix('j').ok_or_else(err)?;
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))
        .ok_or_else(err)?;
    let re: f64 = body[..split].parse().map_err(|_| err())?;
    let im: f64 = body[split..].parse().map_err(|_| err())?;
    Ok(Complex64::new(re, im))
}
