//! Connectivity matrices, grounding, Laplacian construction and topology comparison.
//!
//! Entry convention: `weights[(j, i)]` is the weight of the directed edge
//! `v_i -> v_j`, i.e. the gain with which node `j` receives the output of node `i`.
//! Every algorithm and metric in this crate uses this orientation. Node labels
//! exposed to users are 1-based; matrix indices are 0-based.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for the stored eigenpair residual.
pub const EIGENPAIR_TOL: f64 = 1e-10;

/// Default edge threshold for pipelines fed by exact (analytic) spectra.
pub const DEFAULT_EDGE_TOL: f64 = 1e-6;

/// A known eigenvalue/eigenvector pair `(λ, u)` with `G u = λ u`.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: DVector<f64>,
}

impl Eigenpair {
    pub fn new(value: f64, vector: DVector<f64>) -> Self {
        Self { value, vector }
    }

    /// `(λ, 1)`, valid for Laplacians (λ = 0) and k-regular adjacencies (λ = k).
    pub fn ones(value: f64, n: usize) -> Self {
        Self::new(value, DVector::from_element(n, 1.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityMatrix {
    weights: DMatrix<f64>,
    eigenpair: Option<Eigenpair>,
}

impl ConnectivityMatrix {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if !weights.is_square() || weights.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "connectivity matrix must be square and non-empty, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation(
                "connectivity matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            weights,
            eigenpair: None,
        })
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            weights: DMatrix::zeros(n, n),
            eigenpair: None,
        }
    }

    /// Attach an eigenpair after checking `‖G u − λ u‖ ≤ 1e-10·‖u‖·max(1, ‖G‖)`.
    pub fn with_eigenpair(mut self, pair: Eigenpair) -> Result<Self> {
        if pair.vector.len() != self.n_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "eigenvector has length {}, network has {} nodes",
                pair.vector.len(),
                self.n_nodes()
            )));
        }
        let unorm = pair.vector.norm();
        if unorm == 0.0 || !pair.value.is_finite() {
            return Err(Error::Validation("eigenpair must be finite and nonzero".into()));
        }
        let residual = (&self.weights * &pair.vector - &pair.vector * pair.value).norm();
        let bound = EIGENPAIR_TOL * unorm * self.weights.norm().max(1.0);
        if residual > bound {
            return Err(Error::Validation(format!(
                "eigenpair residual {residual:e} exceeds {bound:e}"
            )));
        }
        self.eigenpair = Some(pair);
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn eigenpair(&self) -> Option<&Eigenpair> {
        self.eigenpair.as_ref()
    }

    /// Weight of the edge `from -> to` (0-based).
    pub fn edge(&self, from: usize, to: usize) -> f64 {
        self.weights[(to, from)]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (&self.weights - self.weights.transpose()).amax() <= tol
    }

    /// Grounded matrix: row and column `j` removed, eigenpair dropped.
    pub fn ground(&self, j: GroundedIndex) -> Result<Self> {
        let n = self.n_nodes();
        j.check(n)?;
        if n < 2 {
            return Err(Error::Validation("cannot ground a single-node network".into()));
        }
        let k = j.zero_based();
        Ok(Self {
            weights: self.weights.clone().remove_row(k).remove_column(k),
            eigenpair: None,
        })
    }

    /// Plain-text form: `N`, then N rows, then an optional `eigenpair λ u…` line.
    pub fn to_text(&self) -> String {
        let mut out = format_real_matrix(&self.weights);
        if let Some(p) = &self.eigenpair {
            let _ = write!(out, "eigenpair {}", p.value);
            for u in p.vector.iter() {
                let _ = write!(out, " {u}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        let (n, weights) = parse_real_matrix(&mut lines)?;
        let mut g = Self::new(weights)?;
        if let Some((lineno, line)) = lines.next() {
            let mut toks = line.split_whitespace();
            if toks.next() != Some("eigenpair") {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("unexpected trailing content `{line}`"),
                });
            }
            let vals = parse_numbers(toks, lineno)?;
            if vals.len() != n + 1 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("eigenpair line needs {} numbers, found {}", n + 1, vals.len()),
                });
            }
            let pair = Eigenpair::new(vals[0], DVector::from_column_slice(&vals[1..]));
            g = g.with_eigenpair(pair)?;
            if let Some((lineno, _)) = lines.next() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "content after eigenpair line".into(),
                });
            }
        }
        Ok(g)
    }
}

/// 1-based index of the node whose state is pinned to zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundedIndex(usize);

impl GroundedIndex {
    pub fn new(one_based: usize) -> Result<Self> {
        if one_based == 0 {
            return Err(Error::IndexOutOfRange { index: 0, n: 0 });
        }
        Ok(Self(one_based))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn zero_based(self) -> usize {
        self.0 - 1
    }

    pub fn check(self, n: usize) -> Result<()> {
        if self.0 > n {
            Err(Error::IndexOutOfRange { index: self.0, n })
        } else {
            Ok(())
        }
    }

    /// All indices `1..=n`.
    pub fn all(n: usize) -> impl Iterator<Item = GroundedIndex> {
        (1..=n).map(GroundedIndex)
    }

    /// Original 1-based labels of the nodes that survive grounding.
    pub fn surviving_labels(self, n: usize) -> Vec<usize> {
        (1..=n).filter(|&l| l != self.0).collect()
    }
}

/// `B(G)`: 0/1 structure with zero diagonal, same orientation as [`ConnectivityMatrix`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BooleanStructure {
    entries: DMatrix<bool>,
}

impl BooleanStructure {
    pub fn empty(n: usize) -> Self {
        Self {
            entries: DMatrix::from_element(n, n, false),
        }
    }

    pub fn from_entries(entries: DMatrix<bool>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch("boolean structure must be square".into()));
        }
        if (0..entries.nrows()).any(|i| entries[(i, i)]) {
            return Err(Error::Validation(
                "boolean structure must have a zero diagonal".into(),
            ));
        }
        Ok(Self { entries })
    }

    /// Off-diagonal entries with `|g| > tol`.
    pub fn from_weights(g: &DMatrix<f64>, tol: f64) -> Self {
        let n = g.nrows();
        Self {
            entries: DMatrix::from_fn(n, n, |r, c| r != c && g[(r, c)].abs() > tol),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.entries.nrows()
    }

    /// Whether the edge `from -> to` (0-based) is present.
    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.entries[(to, from)]
    }

    pub fn set(&mut self, from: usize, to: usize, present: bool) {
        assert_ne!(from, to, "self-loops are not representable");
        self.entries[(to, from)] = present;
    }

    pub fn entries(&self) -> &DMatrix<bool> {
        &self.entries
    }

    pub fn edge_count(&self) -> usize {
        self.entries.iter().filter(|&&b| b).count()
    }

    pub fn to_text(&self) -> String {
        format_real_matrix(&self.entries.map(|b| if b { 1.0 } else { 0.0 }))
    }
}

/// Build `G = −(D − A)` from a weighted adjacency where `adjacency[(i, j)]` is the
/// weight of `v_j -> v_i` and `D` holds the row sums (weighted in-degrees).
/// The result carries the eigenpair `(0, 1)`.
pub fn laplacian_connectivity(adjacency: &DMatrix<f64>) -> Result<ConnectivityMatrix> {
    if !adjacency.is_square() || adjacency.nrows() == 0 {
        return Err(Error::DimensionMismatch("adjacency must be square and non-empty".into()));
    }
    let n = adjacency.nrows();
    for r in 0..n {
        for c in 0..n {
            let a = adjacency[(r, c)];
            if !a.is_finite() || a < 0.0 {
                return Err(Error::Validation(format!(
                    "adjacency entry ({}, {}) = {a} must be finite and nonnegative",
                    r + 1,
                    c + 1
                )));
            }
            if r == c && a != 0.0 {
                return Err(Error::Validation(format!(
                    "adjacency diagonal entry {} is {a}, expected 0",
                    r + 1
                )));
            }
        }
    }
    let mut g = adjacency.clone();
    for r in 0..n {
        let degree: f64 = adjacency.row(r).sum();
        g[(r, r)] = -degree;
    }
    ConnectivityMatrix::new(g)?.with_eigenpair(Eigenpair::ones(0.0, n))
}

/// Result of the `Tr(G²) = 0` test.
#[derive(Clone, Debug, PartialEq)]
pub struct Nonreciprocity {
    pub holds: bool,
    pub trace_g2: f64,
    pub issue: Option<String>,
}

/// `|Tr(G²)| ≤ tol` for a nonnegative, loop-free `G`.
pub fn is_nonreciprocal(g: &ConnectivityMatrix, tol: f64) -> Nonreciprocity {
    let w = g.weights();
    let n = g.n_nodes();
    let trace: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| w[(i, j)] * w[(j, i)])
        .sum();
    let issue = if (0..n).any(|i| w[(i, i)] != 0.0) {
        Some("matrix has self-loops (nonzero diagonal)".to_string())
    } else if w.iter().any(|&x| x < 0.0) {
        Some("matrix has negative entries".to_string())
    } else {
        None
    };
    Nonreciprocity {
        holds: issue.is_none() && trace.abs() <= tol,
        trace_g2: trace,
        issue,
    }
}

/// What a reconstruction produced, for comparison against ground truth.
#[derive(Clone, Copy, Debug)]
pub enum Recovered<'a> {
    Weighted(&'a ConnectivityMatrix),
    Boolean(&'a BooleanStructure),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Weighted comparisons only: errors over the true-edge positions.
    pub max_abs_error: Option<f64>,
    pub rmse: Option<f64>,
}

/// Edge-level comparison. Diagonal entries are never counted as edges.
pub fn compare(truth: &ConnectivityMatrix, recovered: Recovered<'_>, edge_tol: f64) -> Result<EdgeMetrics> {
    let n = truth.n_nodes();
    let rec_n = match recovered {
        Recovered::Weighted(g) => g.n_nodes(),
        Recovered::Boolean(b) => b.n_nodes(),
    };
    if rec_n != n {
        return Err(Error::DimensionMismatch(format!(
            "truth has {n} nodes, recovered has {rec_n}"
        )));
    }
    let truth_b = BooleanStructure::from_weights(truth.weights(), edge_tol);
    let rec_b = match recovered {
        Recovered::Weighted(g) => BooleanStructure::from_weights(g.weights(), edge_tol),
        Recovered::Boolean(b) => b.clone(),
    };
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for r in 0..n {
        for c in 0..n {
            match (truth_b.entries[(r, c)], rec_b.entries[(r, c)]) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                (false, false) => {}
            }
        }
    }
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fneg == 0 { 1.0 } else { tp as f64 / (tp + fneg) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let (max_abs_error, rmse) = match recovered {
        Recovered::Weighted(g) => {
            let errs: Vec<f64> = (0..n)
                .flat_map(|r| (0..n).map(move |c| (r, c)))
                .filter(|&(r, c)| truth_b.entries[(r, c)])
                .map(|(r, c)| (g.weights()[(r, c)] - truth.weights()[(r, c)]).abs())
                .collect();
            let max = errs.iter().copied().fold(0.0, f64::max);
            let rmse = if errs.is_empty() {
                0.0
            } else {
                (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt()
            };
            (Some(max), Some(rmse))
        }
        Recovered::Boolean(_) => (None, None),
    };
    Ok(EdgeMetrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
        precision,
        recall,
        f1,
        max_abs_error,
        rmse,
    })
}

// ---- plain-text matrix helpers (shared with other modules) ----

pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_numbers<'a>(toks: impl Iterator<Item = &'a str>, line: usize) -> Result<Vec<f64>> {
    toks.map(|t| {
        t.parse::<f64>().map_err(|_| Error::Parse {
            line,
            msg: format!("`{t}` is not a number"),
        })
    })
    .collect()
}

pub(crate) fn parse_count<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, what: &str) -> Result<usize> {
    let (lineno, line) = lines.next().ok_or(Error::Parse {
        line: 0,
        msg: format!("missing {what}"),
    })?;
    line.parse::<usize>().map_err(|_| Error::Parse {
        line: lineno,
        msg: format!("expected {what}, found `{line}`"),
    })
}

pub(crate) fn parse_row<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    len: usize,
    what: &str,
) -> Result<Vec<f64>> {
    let (lineno, line) = lines.next().ok_or(Error::Parse {
        line: 0,
        msg: format!("missing {what}"),
    })?;
    let vals = parse_numbers(line.split_whitespace(), lineno)?;
    if vals.len() != len {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("{what}: expected {len} numbers, found {}", vals.len()),
        });
    }
    Ok(vals)
}

pub(crate) fn parse_real_matrix<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<(usize, DMatrix<f64>)> {
    let n = parse_count(lines, "matrix dimension")?;
    if n == 0 {
        return Err(Error::Parse {
            line: 1,
            msg: "matrix dimension must be positive".into(),
        });
    }
    let mut data = Vec::with_capacity(n * n);
    for r in 0..n {
        data.extend(parse_row(lines, n, &format!("matrix row {}", r + 1))?);
    }
    Ok((n, DMatrix::from_row_slice(n, n, &data)))
}

pub(crate) fn format_real_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("{}\n", m.nrows());
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ground_zero_matrix() {
        let g = ConnectivityMatrix::zeros(3);
        let gt = g.ground(GroundedIndex::new(2).unwrap()).unwrap();
        assert_eq!(gt.weights(), &DMatrix::<f64>::zeros(2, 2));
    }

    #[test]
    fn ground_identity_minor() {
        let g = ConnectivityMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let gt = g.ground(GroundedIndex::new(1).unwrap()).unwrap();
        assert_eq!(gt.weights(), &DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn ground_keeps_untouched_entries() {
        let mut w = DMatrix::zeros(4, 4);
        w[(2, 1)] = 0.7; // g_32
        let g = ConnectivityMatrix::new(w).unwrap();
        let gt = g.ground(GroundedIndex::new(4).unwrap()).unwrap();
        assert_eq!(gt.n_nodes(), 3);
        assert_eq!(gt.weights()[(2, 1)], 0.7);
    }

    #[test]
    fn ground_rejects_bad_index() {
        let g = ConnectivityMatrix::zeros(3);
        assert!(matches!(
            g.ground(GroundedIndex::new(4).unwrap()),
            Err(Error::IndexOutOfRange { index: 4, n: 3 })
        ));
        assert!(GroundedIndex::new(0).is_err());
    }

    #[test]
    fn ground_drops_eigenpair() {
        let a = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.]);
        let g = laplacian_connectivity(&a).unwrap();
        assert!(g.eigenpair().is_some());
        assert!(g.ground(GroundedIndex::new(1).unwrap()).unwrap().eigenpair().is_none());
    }

    #[test]
    fn laplacian_of_pair() {
        let a = DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.]);
        let g = laplacian_connectivity(&a).unwrap();
        assert_eq!(g.weights(), &DMatrix::from_row_slice(2, 2, &[-1., 1., 1., -1.]));
        let p = g.eigenpair().unwrap();
        assert_eq!(p.value, 0.0);
        assert_eq!(p.vector, DVector::from_element(2, 1.0));
    }

    #[test]
    fn laplacian_of_empty_graph() {
        let g = laplacian_connectivity(&DMatrix::zeros(4, 4)).unwrap();
        assert_eq!(g.weights(), &DMatrix::<f64>::zeros(4, 4));
        assert_eq!(g.eigenpair().unwrap().value, 0.0);
    }

    #[test]
    fn laplacian_of_directed_cycle() {
        let a = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        let g = laplacian_connectivity(&a).unwrap();
        for i in 0..3 {
            assert_eq!(g.weights()[(i, i)], -1.0);
            assert!(g.weights().row(i).sum().abs() < 1e-15);
        }
    }

    #[test]
    fn laplacian_validation() {
        let neg = DMatrix::from_row_slice(2, 2, &[0., -1., 1., 0.]);
        assert!(matches!(laplacian_connectivity(&neg), Err(Error::Validation(_))));
        let diag = DMatrix::from_row_slice(2, 2, &[1., 1., 1., 0.]);
        assert!(matches!(laplacian_connectivity(&diag), Err(Error::Validation(_))));
    }

    #[test]
    fn nonreciprocity_examples() {
        let mut w = DMatrix::zeros(2, 2);
        w[(1, 0)] = 0.5;
        assert!(is_nonreciprocal(&ConnectivityMatrix::new(w).unwrap(), 1e-12).holds);
        let pair = ConnectivityMatrix::from_row_slice(2, &[0., 1., 1., 0.]).unwrap();
        let r = is_nonreciprocal(&pair, 1e-12);
        assert!(!r.holds);
        assert_eq!(r.trace_g2, 2.0);
        assert!(is_nonreciprocal(&ConnectivityMatrix::zeros(3), 0.0).holds);
        let looped = ConnectivityMatrix::from_row_slice(2, &[1., 0., 0., 0.]).unwrap();
        let r = is_nonreciprocal(&looped, 1e-12);
        assert!(!r.holds && r.issue.is_some());
    }

    #[test]
    fn compare_self_is_perfect() {
        let g = ConnectivityMatrix::from_row_slice(3, &[0., 0.2, 0., 0.5, 0., 0., 0., 0.9, 0.]).unwrap();
        let m = compare(&g, Recovered::Weighted(&g), 1e-6).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        assert_eq!(m.rmse, Some(0.0));
    }

    #[test]
    fn compare_empty_recovery() {
        let mut w = DMatrix::zeros(2, 2);
        w[(1, 0)] = 0.5;
        let truth = ConnectivityMatrix::new(w).unwrap();
        let m = compare(&truth, Recovered::Boolean(&BooleanStructure::empty(2)), 1e-6).unwrap();
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn compare_weight_error() {
        let mut w = DMatrix::zeros(2, 2);
        w[(1, 0)] = 0.5;
        let truth = ConnectivityMatrix::new(w.clone()).unwrap();
        w[(1, 0)] = 0.55;
        let rec = ConnectivityMatrix::new(w).unwrap();
        let m = compare(&truth, Recovered::Weighted(&rec), 1e-6).unwrap();
        assert!((m.rmse.unwrap() - 0.05).abs() < 1e-12);
        assert!((m.max_abs_error.unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn compare_dimension_mismatch() {
        let a = ConnectivityMatrix::zeros(2);
        let b = ConnectivityMatrix::zeros(3);
        assert!(compare(&a, Recovered::Weighted(&b), 1e-6).is_err());
    }

    #[test]
    fn text_format_with_eigenpair() {
        let a = DMatrix::from_row_slice(3, 3, &[0., 0.4, 0., 0., 0., 1.0, 0.7, 0., 0.]);
        let g = laplacian_connectivity(&a).unwrap();
        let text = g.to_text();
        assert!(text.starts_with("3\n"));
        assert!(text.lines().last().unwrap().starts_with("eigenpair 0"));
        assert_eq!(ConnectivityMatrix::from_text(&text).unwrap(), g);
    }

    #[test]
    fn text_format_errors() {
        assert!(matches!(
            ConnectivityMatrix::from_text("2\n1 2\n3\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(ConnectivityMatrix::from_text("2\n1 0\n0 1\neigenpair 5 1 0\n").is_err());
        assert!(ConnectivityMatrix::from_text("2\n1 0\n0 1\nbogus\n").is_err());
    }

    fn square(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        (3..=max_n).prop_flat_map(|n| {
            proptest::collection::vec(-2.0f64..2.0, n * n)
                .prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
        })
    }

    proptest! {
        #[test]
        fn double_grounding_matches_direct_deletion(w in square(7), a in 0usize..100, b in 0usize..100) {
            let n = w.nrows();
            let j = a % n + 1;
            let k = b % (n - 1) + 1;
            let g = ConnectivityMatrix::new(w.clone()).unwrap();
            let twice = g.ground(GroundedIndex::new(j).unwrap()).unwrap()
                .ground(GroundedIndex::new(k).unwrap()).unwrap();
            // k indexes the already-reduced matrix: map it back to an original label.
            let survivors = GroundedIndex::new(j).unwrap().surviving_labels(n);
            let k_orig = survivors[k - 1];
            let keep: Vec<usize> = (1..=n).filter(|&l| l != j && l != k_orig).map(|l| l - 1).collect();
            let direct = DMatrix::from_fn(n - 2, n - 2, |r, c| w[(keep[r], keep[c])]);
            prop_assert_eq!(twice.weights(), &direct);
        }

        #[test]
        fn laplacian_rows_sum_to_zero(v in proptest::collection::vec(0.0f64..3.0, 36)) {
            let mut a = DMatrix::from_row_slice(6, 6, &v);
            a.fill_diagonal(0.0);
            let g = laplacian_connectivity(&a).unwrap();
            let ones = DVector::from_element(6, 1.0);
            prop_assert!((g.weights() * ones).amax() <= 1e-12);
        }

        #[test]
        fn nonreciprocal_implies_no_mutual_edges(v in proptest::collection::vec(0.01f64..1.0, 25), mask in proptest::collection::vec(0u8..3, 25)) {
            // Sparse nonnegative matrix; mutual pairs occur but not always.
            let w = DMatrix::from_fn(5, 5, |r, c| if mask[r * 5 + c] == 0 && r != c { v[r * 5 + c] } else { 0.0 });
            let g = ConnectivityMatrix::new(w.clone()).unwrap();
            let tol = 1e-12;
            if is_nonreciprocal(&g, tol).holds {
                for r in 0..5 { for c in 0..5 { prop_assert!(w[(r, c)].min(w[(c, r)]) <= tol); } }
            }
        }
    }
}
