//! Entity precision/recall/F1 and session aggregates.

use std::collections::BTreeMap;

use serde::Serialize;

use super::simulate::SessionMetrics;
use super::HarnessError;
use crate::corpus::EntityClass;

/// Entities of one turn, label to class.
pub type EntitySet = BTreeMap<String, EntityClass>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Prf {
    /// Undefined ratios are 0.
    pub fn from_counts(tp: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let (p, r) = (ratio(tp, predicted), ratio(tp, gold));
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        Prf {
            precision: p,
            recall: r,
            f1,
            true_positives: tp,
            predicted,
            gold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrfReport {
    pub overall: Prf,
    pub per_class: BTreeMap<EntityClass, Prf>,
}

fn counts<'a>(
    pred: impl Iterator<Item = &'a String>,
    gold: &BTreeMap<&'a String, ()>,
) -> (usize, usize) {
    let mut predicted = 0;
    let mut tp = 0;
    for l in pred {
        predicted += 1;
        if gold.contains_key(l) {
            tp += 1;
        }
    }
    (tp, predicted)
}

/// Micro-averaged over turns. Per-class scores compare class-filtered sets.
pub fn entity_prf(predicted: &[EntitySet], gold: &[EntitySet]) -> Result<PrfReport, HarnessError> {
    if predicted.len() != gold.len() {
        return Err(HarnessError::LengthMismatch {
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    let mut all = (0, 0, 0);
    let mut by_class: BTreeMap<EntityClass, (usize, usize, usize)> =
        EntityClass::ALL.iter().map(|&c| (c, (0, 0, 0))).collect();

    for (p, g) in predicted.iter().zip(gold) {
        let gold_all: BTreeMap<&String, ()> = g.keys().map(|l| (l, ())).collect();
        let (tp, np) = counts(p.keys(), &gold_all);
        all.0 += tp;
        all.1 += np;
        all.2 += g.len();
        for (&class, acc) in by_class.iter_mut() {
            let gold_c: BTreeMap<&String, ()> =
                g.iter().filter(|(_, &c)| c == class).map(|(l, _)| (l, ())).collect();
            let (tp, np) = counts(p.iter().filter(|(_, &c)| c == class).map(|(l, _)| l), &gold_c);
            acc.0 += tp;
            acc.1 += np;
            acc.2 += gold_c.len();
        }
    }
    Ok(PrfReport {
        overall: Prf::from_counts(all.0, all.1, all.2),
        per_class: by_class
            .into_iter()
            .map(|(c, (tp, np, ng))| (c, Prf::from_counts(tp, np, ng)))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub sessions: usize,
    pub mean_delta_ge: f64,
    pub success_rate: f64,
}

/// Mean ΔGE and success fraction over `(delta_ge, success)` pairs.
pub fn aggregate<I>(sessions: I) -> Result<Aggregate, HarnessError>
where
    I: IntoIterator<Item = (f64, bool)>,
{
    let (mut n, mut sum, mut ok) = (0usize, 0.0, 0usize);
    for (d, s) in sessions {
        n += 1;
        sum += d;
        ok += s as usize;
    }
    if n == 0 {
        return Err(HarnessError::EmptyInput);
    }
    Ok(Aggregate {
        sessions: n,
        mean_delta_ge: sum / n as f64,
        success_rate: ok as f64 / n as f64,
    })
}

pub fn aggregate_metrics(sessions: &[SessionMetrics]) -> Result<Aggregate, HarnessError> {
    aggregate(sessions.iter().map(|s| (s.delta_ge, s.success)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use EntityClass::{Disease, Symptom};

    fn set(items: &[(&str, EntityClass)]) -> EntitySet {
        items.iter().map(|(l, c)| (l.to_string(), *c)).collect()
    }

    #[test]
    fn two_of_three() {
        let r = entity_prf(
            &[set(&[("a", Symptom), ("b", Symptom), ("c", Symptom)])],
            &[set(&[("b", Symptom), ("c", Symptom), ("d", Symptom)])],
        )
        .unwrap();
        for v in [r.overall.precision, r.overall.recall, r.overall.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(r.per_class[&Symptom], r.overall);
        assert_eq!(r.per_class[&Disease].f1, 0.0);
    }

    #[test]
    fn identity_and_empty_prediction() {
        let g = vec![set(&[("a", Symptom), ("flu", Disease)]), set(&[])];
        let r = entity_prf(&g, &g).unwrap();
        assert_eq!((r.overall.precision, r.overall.recall, r.overall.f1), (1.0, 1.0, 1.0));
        assert_eq!(r.per_class[&Disease].f1, 1.0);

        let r = entity_prf(&[set(&[]), set(&[])], &g).unwrap();
        assert_eq!((r.overall.precision, r.overall.recall, r.overall.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_turns_contribute_nothing() {
        let p = vec![set(&[("a", Symptom)]), set(&[])];
        let g = vec![set(&[("a", Symptom)]), set(&[])];
        let one = entity_prf(&p[..1], &g[..1]).unwrap();
        assert_eq!(entity_prf(&p, &g).unwrap(), one);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            entity_prf(&[set(&[])], &[]),
            Err(HarnessError::LengthMismatch { predicted: 1, gold: 0 })
        ));
    }

    #[test]
    fn aggregates() {
        let a = aggregate([(0.2, true), (0.4, false)]).unwrap();
        assert!((a.mean_delta_ge - 0.3).abs() < 1e-12);
        let a = aggregate([(0.0, true), (0.0, false), (0.0, false), (0.0, true)]).unwrap();
        assert_eq!(a.success_rate, 0.5);
        let a = aggregate([(0.7, true)]).unwrap();
        assert_eq!((a.mean_delta_ge, a.success_rate, a.sessions), (0.7, 1.0, 1));
        assert!(matches!(aggregate_metrics(&[]), Err(HarnessError::EmptyInput)));
    }
}
