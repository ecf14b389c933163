//! Grouped (cross-classified) hierarchies.

use std::collections::{HashMap, HashSet};

use itertools::Itertools;
use nalgebra::DMatrix;

use super::Hierarchy;
use crate::error::{Error, Result};

/// A categorical attribute and its admissible values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub values: Vec<String>,
}

impl Dimension {
    pub fn new<S: Into<String>>(name: S, values: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }
}

/// Grouping structure: bottom series are keyed by one value per dimension,
/// and each aggregate is a subset of dimensions (empty = Total).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupSpec {
    pub dimensions: Vec<Dimension>,
    pub bottom_keys: Vec<Vec<String>>,
    pub aggregates: Vec<Vec<String>>,
}

impl GroupSpec {
    /// Every combination of dimension values as bottom keys.
    pub fn full_cross(dimensions: Vec<Dimension>, aggregates: Vec<Vec<String>>) -> Self {
        let bottom_keys = dimensions
            .iter()
            .map(|d| d.values.clone())
            .multi_cartesian_product()
            .collect();
        Self {
            dimensions,
            bottom_keys,
            aggregates,
        }
    }
}

impl Hierarchy {
    /// Builds the hierarchy of a grouped structure.
    ///
    /// Rows are the requested aggregate levels in order (an empty subset is
    /// `Total`; other rows are labelled by their values joined with `/`),
    /// followed by the bottom series in `bottom_keys` order, which form the
    /// basis. Aggregate cells with no matching bottom series are omitted.
    pub fn from_groups(spec: &GroupSpec) -> Result<Self> {
        let dims = &spec.dimensions;
        if spec.bottom_keys.is_empty() {
            return Err(Error::InvalidGroupSpec("empty bottom set".into()));
        }
        let mut dim_index = HashMap::new();
        for (i, d) in dims.iter().enumerate() {
            if d.values.is_empty() {
                return Err(Error::InvalidGroupSpec(format!("dimension `{}` has no values", d.name)));
            }
            if dim_index.insert(d.name.as_str(), i).is_some() {
                return Err(Error::InvalidGroupSpec(format!("dimension `{}` repeated", d.name)));
            }
        }
        // Bottom keys as value positions.
        let mut bottom: Vec<Vec<usize>> = Vec::with_capacity(spec.bottom_keys.len());
        let mut seen = HashSet::new();
        for key in &spec.bottom_keys {
            if key.len() != dims.len() {
                return Err(Error::InvalidGroupSpec(format!(
                    "bottom key {key:?} has {} values for {} dimensions",
                    key.len(),
                    dims.len()
                )));
            }
            let pos: Vec<usize> = key
                .iter()
                .zip(dims)
                .map(|(v, d)| {
                    d.values
                        .iter()
                        .position(|x| x == v)
                        .ok_or_else(|| Error::InvalidGroupSpec(format!("`{v}` is not a value of `{}`", d.name)))
                })
                .collect::<Result<_>>()?;
            if !seen.insert(pos.clone()) {
                return Err(Error::InvalidGroupSpec(format!("bottom key {key:?} repeated")));
            }
            bottom.push(pos);
        }

        let mut labels = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut levels = Vec::new();
        let mut level_names = Vec::new();
        let mut done: HashSet<Vec<usize>> = HashSet::new();
        for agg in &spec.aggregates {
            let mut subset: Vec<usize> = agg
                .iter()
                .map(|name| {
                    dim_index.get(name.as_str()).copied().ok_or_else(|| {
                        Error::InvalidGroupSpec(format!("aggregate references unknown dimension `{name}`"))
                    })
                })
                .collect::<Result<_>>()?;
            subset.sort_unstable();
            subset.dedup();
            if subset.len() == dims.len() || !done.insert(subset.clone()) {
                continue;
            }
            let level = level_names.len();
            level_names.push(if subset.is_empty() {
                "Total".to_string()
            } else {
                subset.iter().map(|&d| dims[d].name.as_str()).join("+")
            });
            let cells: Vec<Vec<usize>> = if subset.is_empty() {
                vec![vec![]]
            } else {
                subset
                    .iter()
                    .map(|&d| 0..dims[d].values.len())
                    .multi_cartesian_product()
                    .collect()
            };
            for cell in cells {
                let row: Vec<f64> = bottom
                    .iter()
                    .map(|b| {
                        let hit = subset.iter().zip(&cell).all(|(&d, &v)| b[d] == v);
                        if hit {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if row.iter().all(|&x| x == 0.0) {
                    continue;
                }
                labels.push(if subset.is_empty() {
                    "Total".to_string()
                } else {
                    subset
                        .iter()
                        .zip(&cell)
                        .map(|(&d, &v)| dims[d].values[v].as_str())
                        .join("/")
                });
                rows.push(row);
                levels.push(level);
            }
        }
        let bottom_level = level_names.len();
        level_names.push("Bottom".to_string());
        let first_bottom = rows.len();
        for (j, b) in bottom.iter().enumerate() {
            labels.push(b.iter().enumerate().map(|(d, &v)| dims[d].values[v].as_str()).join("/"));
            let mut row = vec![0.0; bottom.len()];
            row[j] = 1.0;
            rows.push(row);
            levels.push(bottom_level);
        }
        let n = rows.len();
        let m = bottom.len();
        let s = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
        let basis = (first_bottom..n).collect();
        Hierarchy::with_levels(labels, s, basis, levels, level_names)
    }
}
