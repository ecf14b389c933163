//! Structural representation of hierarchical and grouped time series.
//!
//! A [`Hierarchy`] holds `n` labelled series, an `n × m` structural matrix
//! `S` with `y = S·b` for every coherent vector `y`, and the `m` rows of
//! `S` that form the basis `b`. The basis need not be the bottom level;
//! [`Hierarchy::rebase`] re-expresses the same coherent subspace in terms
//! of any invertible choice of rows.

mod basis;
mod groups;

pub use basis::{BasisCheck, BasisSelection};
pub use groups::{Dimension, GroupSpec};

use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance for the identity pattern of basis rows.
const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    labels: Vec<String>,
    s_matrix: DMatrix<f64>,
    basis: Vec<usize>,
    constraints: DMatrix<f64>,
    levels: Vec<usize>,
    level_names: Vec<String>,
}

impl Hierarchy {
    /// Builds a hierarchy from an explicit structural matrix.
    ///
    /// The rows of `s_matrix` at `basis` must form a permutation of the
    /// identity; `basis` is reordered so that `basis[j]` is the series whose
    /// row is the `j`-th unit vector.
    pub fn new(labels: Vec<String>, s_matrix: DMatrix<f64>, basis: Vec<usize>) -> Result<Self> {
        let n = labels.len();
        let levels = vec![0; n];
        Self::with_levels(labels, s_matrix, basis, levels, vec!["all".to_string()])
    }

    pub(crate) fn with_levels(
        labels: Vec<String>,
        mut s_matrix: DMatrix<f64>,
        basis: Vec<usize>,
        levels: Vec<usize>,
        level_names: Vec<String>,
    ) -> Result<Self> {
        let n = labels.len();
        let m = basis.len();
        if n == 0 {
            return Err(Error::InvalidHierarchy("no series".into()));
        }
        if s_matrix.nrows() != n {
            return Err(Error::dims(format!("{n} rows in S"), format!("{}", s_matrix.nrows())));
        }
        if s_matrix.ncols() != m {
            return Err(Error::dims(
                format!("{m} columns in S"),
                format!("{}", s_matrix.ncols()),
            ));
        }
        if m == 0 || m > n {
            return Err(Error::InvalidHierarchy(format!("basis size {m} not in 1..={n}")));
        }
        if s_matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("structural matrix".into()));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if l.is_empty() || l.contains(',') {
                return Err(Error::InvalidHierarchy(format!("bad label `{l}`")));
            }
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        check_indices(&basis, n)?;

        // Map each unit column to the basis row carrying it.
        let mut ordered = vec![usize::MAX; m];
        for &row in &basis {
            let mut unit_col = None;
            for j in 0..m {
                let v = s_matrix[(row, j)];
                if (v - 1.0).abs() <= IDENTITY_TOL {
                    if unit_col.is_some() {
                        unit_col = None;
                        break;
                    }
                    unit_col = Some(j);
                } else if v.abs() > IDENTITY_TOL {
                    unit_col = None;
                    break;
                }
            }
            match unit_col {
                Some(j) if ordered[j] == usize::MAX => ordered[j] = row,
                _ => {
                    return Err(Error::InvalidHierarchy(format!(
                        "row `{}` is not a distinct unit row of S",
                        labels[row]
                    )))
                }
            }
        }
        for (j, &row) in ordered.iter().enumerate() {
            for c in 0..m {
                s_matrix[(row, c)] = if c == j { 1.0 } else { 0.0 };
            }
        }
        if levels.len() != n {
            return Err(Error::dims(format!("{n} levels"), format!("{}", levels.len())));
        }
        let constraints = constraint_matrix(&s_matrix, &ordered);
        Ok(Self {
            labels,
            s_matrix,
            basis: ordered,
            constraints,
            levels,
            level_names,
        })
    }

    /// Builds a tree hierarchy from `parent → child` edges.
    pub fn from_edges<S: AsRef<str>>(edges: &[(S, S)]) -> Result<Self> {
        Self::from_tree::<S>(&[], edges)
    }

    /// Builds a tree hierarchy from standalone node declarations plus
    /// `parent → child` edges.
    ///
    /// Series are ordered breadth-first from the root, children in the order
    /// their edges appear; the leaves (in that order) form the basis.
    pub fn from_tree<S: AsRef<str>>(nodes: &[S], edges: &[(S, S)]) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |label: &str, order: &mut Vec<String>| -> Result<usize> {
            if label.is_empty() || label.contains(',') {
                return Err(Error::InvalidHierarchy(format!("bad label `{label}`")));
            }
            Ok(*index.entry(label.to_string()).or_insert_with(|| {
                order.push(label.to_string());
                order.len() - 1
            }))
        };
        for node in nodes {
            intern(node.as_ref(), &mut order)?;
        }
        let mut parent: Vec<Option<usize>> = Vec::new();
        let mut children: Vec<Vec<usize>> = Vec::new();
        let mut edge_set = HashSet::new();
        for (p, c) in edges {
            let (p, c) = (intern(p.as_ref(), &mut order)?, intern(c.as_ref(), &mut order)?);
            parent.resize(order.len(), None);
            children.resize(order.len(), Vec::new());
            if p == c {
                return Err(Error::Cycle(order[p].clone()));
            }
            if !edge_set.insert((p, c)) {
                return Err(Error::DuplicateLabel(format!("{}->{}", order[p], order[c])));
            }
            if let Some(existing) = parent[c] {
                return Err(Error::MultipleParents {
                    child: order[c].clone(),
                    first: order[existing].clone(),
                    second: order[p].clone(),
                });
            }
            parent[c] = Some(p);
            children[p].push(c);
        }
        let total = order.len();
        if total == 0 {
            return Err(Error::InvalidHierarchy("no nodes".into()));
        }
        parent.resize(total, None);
        children.resize(total, Vec::new());

        let roots: Vec<usize> = (0..total).filter(|&i| parent[i].is_none()).collect();
        if roots.is_empty() {
            return Err(Error::Cycle(order[0].clone()));
        }
        if roots.len() > 1 {
            return Err(Error::Disconnected(roots.iter().map(|&r| order[r].clone()).collect()));
        }

        let mut bfs = Vec::with_capacity(total);
        let mut depth = vec![0usize; total];
        let mut queue = VecDeque::from([roots[0]]);
        while let Some(node) = queue.pop_front() {
            bfs.push(node);
            for &c in &children[node] {
                depth[c] = depth[node] + 1;
                queue.push_back(c);
            }
        }
        if bfs.len() < total {
            let reached: HashSet<usize> = bfs.iter().copied().collect();
            let stuck = (0..total).find(|i| !reached.contains(i)).unwrap();
            return Err(Error::Cycle(order[stuck].clone()));
        }

        let leaves: Vec<usize> = bfs.iter().copied().filter(|&i| children[i].is_empty()).collect();
        let leaf_col: HashMap<usize, usize> = leaves.iter().enumerate().map(|(j, &l)| (l, j)).collect();
        let row_of: HashMap<usize, usize> = bfs.iter().enumerate().map(|(r, &i)| (i, r)).collect();

        let m = leaves.len();
        let mut s = DMatrix::zeros(total, m);
        // Leaves climb to every ancestor.
        for (&leaf, &col) in &leaf_col {
            let mut cur = Some(leaf);
            while let Some(node) = cur {
                s[(row_of[&node], col)] = 1.0;
                cur = parent[node];
            }
        }
        let labels: Vec<String> = bfs.iter().map(|&i| order[i].clone()).collect();
        let levels: Vec<usize> = bfs.iter().map(|&i| depth[i]).collect();
        let max_depth = levels.iter().copied().max().unwrap_or(0);
        let level_names = (0..=max_depth).map(|d| d.to_string()).collect();
        let basis = leaves.iter().map(|l| row_of[l]).collect();
        Self::with_levels(labels, s, basis, levels, level_names)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.basis.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn s_matrix(&self) -> &DMatrix<f64> {
        &self.s_matrix
    }

    /// Basis rows; `basis()[j]` is the series equal to `b_j`.
    pub fn basis(&self) -> &[usize] {
        &self.basis
    }

    pub fn basis_labels(&self) -> Vec<String> {
        self.basis.iter().map(|&i| self.labels[i].clone()).collect()
    }

    /// `(n − m) × n` matrix `A` with `A·y = 0` exactly for coherent `y`.
    pub fn constraint_matrix(&self) -> &DMatrix<f64> {
        &self.constraints
    }

    /// Level index of every series (tree depth, or aggregate group).
    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn level_names(&self) -> &[String] {
        &self.level_names
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Resolves labels to indices, rejecting unknown and repeated labels.
    pub fn indices_of<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(labels.len());
        for l in labels {
            let idx = self
                .index_of(l.as_ref())
                .ok_or_else(|| Error::UnknownLabel(l.as_ref().to_string()))?;
            if out.contains(&idx) {
                return Err(Error::DuplicateLabel(l.as_ref().to_string()));
            }
            out.push(idx);
        }
        Ok(out)
    }

    /// Maximum `|A·y|`, the coherence violation of `y`.
    pub fn coherence_residual(&self, y: &nalgebra::DVector<f64>) -> f64 {
        if self.constraints.nrows() == 0 {
            return 0.0;
        }
        linalg::max_abs_vec(&(&self.constraints * y))
    }

    /// Row sums of `|S|`: the number of basis series aggregated into each
    /// series when the basis is the bottom level.
    pub fn aggregation_counts(&self) -> Vec<f64> {
        self.s_matrix
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum())
            .collect()
    }
}

pub(crate) fn check_indices(idx: &[usize], n: usize) -> Result<()> {
    let mut seen = HashSet::new();
    for &i in idx {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        if !seen.insert(i) {
            return Err(Error::RepeatedIndex(i));
        }
    }
    Ok(())
}

/// `A = [rows e_i − S_i placed at basis columns]` for each non-basis row `i`.
fn constraint_matrix(s: &DMatrix<f64>, basis: &[usize]) -> DMatrix<f64> {
    let n = s.nrows();
    let is_basis: HashSet<usize> = basis.iter().copied().collect();
    let determined: Vec<usize> = (0..n).filter(|i| !is_basis.contains(i)).collect();
    let mut a = DMatrix::zeros(determined.len(), n);
    for (r, &i) in determined.iter().enumerate() {
        a[(r, i)] = 1.0;
        for (j, &b) in basis.iter().enumerate() {
            a[(r, b)] -= s[(i, j)];
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::figure1;

    #[test]
    fn figure1_summing_matrix() {
        let h = figure1();
        let expected = DMatrix::from_row_slice(
            7,
            4,
            &[
                1., 1., 1., 1., //
                1., 1., 0., 0., //
                0., 0., 1., 1., //
                1., 0., 0., 0., //
                0., 1., 0., 0., //
                0., 0., 1., 0., //
                0., 0., 0., 1.,
            ],
        );
        assert_eq!(h.s_matrix(), &expected);
        assert_eq!(h.labels(), ["Total", "A", "B", "AA", "AB", "BA", "BB"]);
        assert_eq!(h.basis_labels(), ["AA", "AB", "BA", "BB"]);
        assert_eq!(h.levels(), [0, 1, 1, 2, 2, 2, 2]);
        assert_eq!(linalg::max_abs(&(h.constraint_matrix() * h.s_matrix())), 0.0);
    }

    #[test]
    fn single_node() {
        let h = Hierarchy::from_tree::<&str>(&["X"], &[]).unwrap();
        assert_eq!((h.n(), h.m()), (1, 1));
        assert_eq!(h.s_matrix()[(0, 0)], 1.0);
        assert_eq!(h.constraint_matrix().nrows(), 0);
    }

    #[test]
    fn three_series() {
        let h = Hierarchy::from_edges(&[("X", "Y"), ("X", "Z")]).unwrap();
        assert_eq!(h.s_matrix(), &DMatrix::from_row_slice(3, 2, &[1., 1., 1., 0., 0., 1.]));
        assert_eq!(h.aggregation_counts(), vec![2.0, 1.0, 1.0]);
    }

    #[test]
    fn edge_errors() {
        assert!(matches!(
            Hierarchy::from_edges(&[("A", "B"), ("B", "C"), ("C", "A")]),
            Err(Error::Cycle(_))
        ));
        assert!(matches!(
            Hierarchy::from_edges(&[("T", "A"), ("A", "B"), ("B", "A")]),
            Err(Error::MultipleParents { .. })
        ));
        assert!(matches!(
            Hierarchy::from_edges(&[("T", "A"), ("T", "A")]),
            Err(Error::DuplicateLabel(_))
        ));
        assert!(matches!(
            Hierarchy::from_edges(&[("T", "A"), ("U", "B")]),
            Err(Error::Disconnected(_))
        ));
        assert!(matches!(Hierarchy::from_edges(&[("T", "T")]), Err(Error::Cycle(_))));
        // A root plus a detached cycle.
        assert!(matches!(
            Hierarchy::from_edges(&[("T", "A"), ("B", "C"), ("C", "B")]),
            Err(Error::Cycle(_))
        ));
    }

    #[test]
    fn new_accepts_permuted_identity() {
        let s = DMatrix::from_row_slice(3, 2, &[1., 1., 0., 1., 1., 0.]);
        let h = Hierarchy::new(vec!["X".into(), "Z".into(), "Y".into()], s, vec![1, 2]).unwrap();
        // Z carries column 1 and Y column 0.
        assert_eq!(h.basis(), [2, 1]);
        assert_eq!(linalg::max_abs(&(h.constraint_matrix() * h.s_matrix())), 0.0);
    }

    #[test]
    fn new_rejects_non_unit_basis_rows() {
        let s = DMatrix::from_row_slice(3, 2, &[1., 1., 1., 0., 0., 1.]);
        let labels = vec!["X".into(), "Y".into(), "Z".into()];
        assert!(Hierarchy::new(labels.clone(), s.clone(), vec![0, 1]).is_err());
        assert!(matches!(
            Hierarchy::new(labels, s, vec![1, 1]),
            Err(Error::RepeatedIndex(1))
        ));
    }
}
