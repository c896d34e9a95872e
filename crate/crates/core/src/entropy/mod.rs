//! Degree-distribution graph entropy and one-dimensional structural entropy.
//!
//! All values are in bits. A component's entropy is the Shannon entropy of
//! its degree distribution `d_i / Vol`; the structural entropy of a graph is
//! the volume-weighted average over its connected components. Components
//! without edges contribute zero.

mod bounds;
mod separation;

pub use bounds::{
    connected_entropy_floor, contradiction_lower_bound, denial_upper_bound, split_entropy_ceiling,
    BoundError,
};
pub use separation::{verify_separation, SeparationReport, SeparationRow, SeparationViolation};

use thiserror::Error;

/// Absolute tolerance for entropy comparisons.
pub const EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntropyError {
    #[error("degree {0} is negative or not finite")]
    InvalidDegree(f64),
    #[error("edge endpoint {0} is out of range")]
    NodeOutOfRange(usize),
}

/// `-p log2 p`, with `0 log 0 = 0`.
#[inline]
pub(crate) fn neg_plogp(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// Entropy of one component's degree distribution.
///
/// `degrees` are incident-weight sums inside the component. Returns 0 when the
/// component has no edges.
pub fn component_entropy(degrees: &[f64]) -> Result<f64, EntropyError> {
    let mut vol = 0.0;
    for &d in degrees {
        if !(d.is_finite() && d >= 0.0) {
            return Err(EntropyError::InvalidDegree(d));
        }
        vol += d;
    }
    if vol == 0.0 {
        return Ok(0.0);
    }
    let h: f64 = degrees.iter().map(|&d| neg_plogp(d / vol)).sum();
    Ok(h.max(0.0))
}

/// One-dimensional structural entropy of a graph given as a partition into
/// components, each described by its node degrees.
pub fn structural_entropy<C: AsRef<[f64]>>(partition: &[C]) -> Result<f64, EntropyError> {
    let mut total_vol = 0.0;
    let mut weighted = 0.0;
    for component in partition {
        let degrees = component.as_ref();
        let h = component_entropy(degrees)?;
        let vol: f64 = degrees.iter().sum();
        total_vol += vol;
        weighted += vol * h;
    }
    if total_vol == 0.0 {
        return Ok(0.0);
    }
    Ok((weighted / total_vol).max(0.0))
}

/// Structural entropy of an undirected weighted multigraph on nodes
/// `0..n`. Parallel edges add up; a self-loop adds twice its weight to its
/// node's degree.
pub fn graph_structural_entropy(n: usize, edges: &[(usize, usize, f64)]) -> Result<f64, EntropyError> {
    let mut degree = vec![0.0; n];
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(u, v, w) in edges {
        if !(w.is_finite() && w >= 0.0) {
            return Err(EntropyError::InvalidDegree(w));
        }
        if u >= n || v >= n {
            return Err(EntropyError::NodeOutOfRange(u.max(v)));
        }
        degree[u] += w;
        degree[v] += w;
        let (a, b) = (root(&mut parent, u), root(&mut parent, v));
        parent[a] = b;
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for (v, &d) in degree.iter().enumerate() {
        groups.entry(root(&mut parent, v)).or_default().push(d);
    }
    structural_entropy(&groups.into_values().collect::<Vec<_>>())
}
