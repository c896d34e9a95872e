//! Entropy bounds for node removals on unit-weight graphs.
//!
//! Two families live here:
//!
//! * [`contradiction_lower_bound`] and [`denial_upper_bound`] are the closed
//!   forms for the extremal removal scenarios: a removed node linked to every
//!   survivor with a tree left behind, and a removed node of degree two whose
//!   removal strands one leaf. They only depend on a degree sequence and are
//!   what [`super::verify_separation`] compares.
//! * [`connected_entropy_floor`] and [`split_entropy_ceiling`] evaluate the
//!   same quantities for one observed removal, using the survivors' actual
//!   post-removal degrees. On the extremal scenarios they coincide with the
//!   closed forms; elsewhere they stay tight, which is what the per-event
//!   entropy classifier needs.

use thiserror::Error;

use super::neg_plogp;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("bound needs at least 2 surviving nodes, got {0}")]
    TooFewNodes(usize),
    #[error("expected {expected} degrees, got {got}")]
    DegreeCount { expected: usize, got: usize },
    #[error("degree {0} is below 1")]
    DegreeBelowOne(f64),
    #[error("volume {0} must exceed 4")]
    VolumeTooSmall(f64),
    #[error("empty degree sequence")]
    Empty,
}

/// Minimum entropy left after a contradiction removal with `n` survivors.
///
/// `degrees` are the survivors' pre-removal unit-weight degrees. In the worst
/// case the removed node touched every survivor, so each loses one edge and
/// the survivors keep `n - 1` edges:
/// `-sum ((d_i - 1) / 2(n-1)) log2 ((d_i - 1) / 2(n-1))`.
pub fn contradiction_lower_bound(n: usize, degrees: &[f64]) -> Result<f64, BoundError> {
    if n < 2 {
        return Err(BoundError::TooFewNodes(n));
    }
    if degrees.len() != n {
        return Err(BoundError::DegreeCount {
            expected: n,
            got: degrees.len(),
        });
    }
    let norm = 2.0 * (n as f64 - 1.0);
    let mut h = 0.0;
    for &d in degrees {
        if !(d >= 1.0) {
            return Err(BoundError::DegreeBelowOne(d));
        }
        h += neg_plogp((d - 1.0) / norm);
    }
    Ok(h)
}

/// Maximum entropy left after a denial removal.
///
/// `degrees` holds `d_1 ..= d_{n-1}`, the pre-removal degrees of the connected
/// survivors, with the removed node's neighbour last. `vol` is the
/// pre-removal volume; the removed node had two edges, so the survivors keep
/// `vol - 4`. Admissible inputs satisfy `vol >= 2(n-1) + 4`; only `vol <= 4`
/// is rejected here.
pub fn denial_upper_bound(degrees: &[f64], vol: f64) -> Result<f64, BoundError> {
    let (&last, rest) = degrees.split_last().ok_or(BoundError::Empty)?;
    if !(vol > 4.0) {
        return Err(BoundError::VolumeTooSmall(vol));
    }
    if !(last >= 1.0) {
        return Err(BoundError::DegreeBelowOne(last));
    }
    let norm = vol - 4.0;
    let mut h = neg_plogp((last - 1.0) / norm);
    for &d in rest {
        if !(d >= 1.0) {
            return Err(BoundError::DegreeBelowOne(d));
        }
        h += neg_plogp(d / norm);
    }
    Ok(h)
}

fn degree_entropy(degrees: &[f64]) -> (f64, f64) {
    let vol: f64 = degrees.iter().sum();
    if vol <= 0.0 {
        return (0.0, vol);
    }
    (degrees.iter().map(|&d| neg_plogp(d / vol)).sum(), vol)
}

/// Entropy the survivors must have if they are still connected.
///
/// `post_degrees` are the survivors' unit-weight degrees after the removal.
/// A connected graph on two or more nodes has no zero degree, so a zero makes
/// the hypothesis impossible and the floor is `+inf`.
pub fn connected_entropy_floor(post_degrees: &[f64]) -> f64 {
    if post_degrees.len() >= 2 && post_degrees.iter().any(|&d| d <= 0.0) {
        return f64::INFINITY;
    }
    degree_entropy(post_degrees).0
}

/// Largest entropy the survivors can have if the removal split them.
///
/// With a stranded (zero-degree) survivor the remaining edges may still form
/// one component, so the ceiling is the full degree entropy. Otherwise at
/// least two components carry edges; each has volume >= 2, which costs at
/// least `h2(2 / Vol)` bits of between-component information. Below volume 4
/// such a split cannot exist.
pub fn split_entropy_ceiling(post_degrees: &[f64]) -> f64 {
    let (h, vol) = degree_entropy(post_degrees);
    if post_degrees.iter().any(|&d| d <= 0.0) {
        return h;
    }
    if vol < 4.0 {
        return f64::NEG_INFINITY;
    }
    let p = 2.0 / vol;
    h - (neg_plogp(p) + neg_plogp(1.0 - p))
}
