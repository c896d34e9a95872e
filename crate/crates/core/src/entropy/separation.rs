//! Exhaustive check that the contradiction lower bound exceeds the denial
//! upper bound for every admissible unit-weight degree sequence.
//!
//! For `n` survivors the admissible contradiction inputs are `t + 1` for every
//! tree degree sequence `t` on `n` nodes (the removed node touched all
//! survivors and a tree remains). The admissible denial inputs come from every
//! connected graphical degree sequence `q` on `n - 1` nodes whose volume is at
//! least `2(n - 1)`, with each choice of which survivor neighboured the removed
//! node, and `vol = sum(q) + 4`.

use serde::Serialize;

use super::bounds::{contradiction_lower_bound, denial_upper_bound};
use super::EPSILON;

/// One contradiction-side degree sequence compared against the largest
/// denial-side value for the same `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationRow {
    pub n: usize,
    pub lower_degrees: Vec<u32>,
    pub lower: f64,
    /// `None` when no denial-side sequence is admissible for this `n`.
    pub upper_degrees: Option<Vec<u32>>,
    pub upper_vol: Option<u32>,
    pub upper: Option<f64>,
    pub margin: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationViolation {
    pub n: usize,
    pub lower_degrees: Vec<u32>,
    pub lower: f64,
    pub upper_degrees: Vec<u32>,
    pub upper_vol: u32,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub n_max: usize,
    pub rows: Vec<SeparationRow>,
    /// Number of (lower, upper) pairs compared.
    pub pairs_checked: usize,
    pub violations: Vec<SeparationViolation>,
}

impl SeparationReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    /// Smallest margin per `n`; `None` where the check is vacuous.
    pub fn min_margin_by_n(&self) -> Vec<(usize, Option<f64>)> {
        let mut out: Vec<(usize, Option<f64>)> = Vec::new();
        for row in &self.rows {
            match out.last_mut() {
                Some((n, m)) if *n == row.n => {
                    if let (Some(cur), Some(new)) = (*m, row.margin) {
                        *m = Some(cur.min(new));
                    }
                }
                _ => out.push((row.n, row.margin)),
            }
        }
        out
    }
}

struct DenialCase {
    degrees: Vec<u32>,
    vol: u32,
    value: f64,
}

/// Enumerates and compares every admissible pair for `n` in `2..=n_max`.
pub fn verify_separation(n_max: usize) -> SeparationReport {
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let mut pairs_checked = 0;

    for n in 2..=n_max {
        let denial: Vec<DenialCase> = denial_cases(n);
        let worst = denial
            .iter()
            .max_by(|a, b| a.value.total_cmp(&b.value));

        for t in tree_sequences(n) {
            let lower_degrees: Vec<u32> = t.iter().map(|&d| d + 1).collect();
            let as_f: Vec<f64> = lower_degrees.iter().map(|&d| d as f64).collect();
            let lower = contradiction_lower_bound(n, &as_f).expect("tree sequence is admissible");

            for case in &denial {
                pairs_checked += 1;
                if !(lower - case.value > EPSILON) {
                    violations.push(SeparationViolation {
                        n,
                        lower_degrees: lower_degrees.clone(),
                        lower,
                        upper_degrees: case.degrees.clone(),
                        upper_vol: case.vol,
                        upper: case.value,
                    });
                }
            }

            let row = match worst {
                Some(w) => {
                    let margin = lower - w.value;
                    SeparationRow {
                        n,
                        lower_degrees,
                        lower,
                        upper_degrees: Some(w.degrees.clone()),
                        upper_vol: Some(w.vol),
                        upper: Some(w.value),
                        margin: Some(margin),
                        pass: margin > EPSILON,
                    }
                }
                None => SeparationRow {
                    n,
                    lower_degrees,
                    lower,
                    upper_degrees: None,
                    upper_vol: None,
                    upper: None,
                    margin: None,
                    pass: true,
                },
            };
            rows.push(row);
        }
    }

    violations.sort_by(|a, b| {
        a.n.cmp(&b.n)
            .then((a.lower - a.upper).total_cmp(&(b.lower - b.upper)))
    });

    SeparationReport {
        n_max,
        rows,
        pairs_checked,
        violations,
    }
}

fn denial_cases(n: usize) -> Vec<DenialCase> {
    let m = n - 1;
    let min_vol = 2 * (n as u32 - 1);
    let mut out = Vec::new();
    for q in connected_graphical_sequences(m) {
        let sum: u32 = q.iter().sum();
        if sum < min_vol {
            continue;
        }
        let vol = sum + 4;
        let mut seen_values = Vec::new();
        for y in 0..q.len() {
            if seen_values.contains(&q[y]) {
                continue;
            }
            seen_values.push(q[y]);
            let mut degrees: Vec<u32> = q
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != y)
                .map(|(_, &d)| d)
                .collect();
            degrees.push(q[y] + 1);
            let as_f: Vec<f64> = degrees.iter().map(|&d| d as f64).collect();
            let value = denial_upper_bound(&as_f, vol as f64).expect("admissible denial input");
            out.push(DenialCase {
                degrees,
                vol,
                value,
            });
        }
    }
    out
}

/// Non-increasing degree sequences of trees on `n` nodes.
pub(crate) fn tree_sequences(n: usize) -> Vec<Vec<u32>> {
    if n < 2 {
        return Vec::new();
    }
    // d_i = 1 + x_i with x a partition of n - 2 into at most n parts
    let mut out = Vec::new();
    let mut current = Vec::new();
    partitions(n as u32 - 2, n as u32 - 2, n, &mut current, &mut out);
    out.into_iter()
        .map(|mut x| {
            x.resize(n, 0);
            x.into_iter().map(|v| v + 1).collect()
        })
        .collect()
}

fn partitions(rest: u32, max_part: u32, slots: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if rest == 0 {
        out.push(current.clone());
        return;
    }
    if current.len() == slots {
        return;
    }
    for part in (1..=max_part.min(rest)).rev() {
        current.push(part);
        partitions(rest - part, part, slots, current, out);
        current.pop();
    }
}

/// Non-increasing degree sequences on `m` nodes that have a connected simple
/// realisation: graphical, every degree >= 1, and volume >= 2(m - 1).
pub(crate) fn connected_graphical_sequences(m: usize) -> Vec<Vec<u32>> {
    if m < 2 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(m);
    nonincreasing(m, m as u32 - 1, &mut current, &mut out);
    out.retain(|q| {
        let sum: u32 = q.iter().sum();
        sum % 2 == 0 && sum >= 2 * (m as u32 - 1) && erdos_gallai(q)
    });
    out
}

fn nonincreasing(len: usize, max: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if current.len() == len {
        out.push(current.clone());
        return;
    }
    for v in (1..=max).rev() {
        current.push(v);
        nonincreasing(len, v, current, out);
        current.pop();
    }
}

/// Erdős–Gallai test on a non-increasing sequence.
fn erdos_gallai(seq: &[u32]) -> bool {
    let n = seq.len();
    let mut prefix = 0u64;
    for k in 1..=n {
        prefix += seq[k - 1] as u64;
        let k64 = k as u64;
        let tail: u64 = seq[k..].iter().map(|&d| (d as u64).min(k64)).sum();
        if prefix > k64 * (k64 - 1) + tail {
            return false;
        }
    }
    true
}
