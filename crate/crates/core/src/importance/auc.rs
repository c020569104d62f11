//! Mann–Whitney AUC with midrank ties.
//!
//! MISSING ranks below every real value and ties with other MISSING entries,
//! so every column has a defined score without imputation.

use std::cmp::Ordering;

use thiserror::Error;

use crate::featurizer::Slot;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AucError {
    #[error("values and labels differ in length ({values} vs {labels})")]
    Length { values: usize, labels: usize },
    #[error("labels contain a single class ({n_pos} positive, {n_neg} negative)")]
    SingleClass { n_pos: usize, n_neg: usize },
}

fn cmp_slot<T: Scalar>(a: &Slot<T>, b: &Slot<T>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.partial_cmp(y).unwrap_or(Ordering::Equal),
    }
}

/// 1-based ranks with tied entries sharing the mean of their positions.
pub fn midranks<T: Scalar>(values: &[Slot<T>]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| cmp_slot(&values[i], &values[j]));
    let mut ranks = vec![T::zero(); values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && cmp_slot(&values[order[start]], &values[order[end]]) == Ordering::Equal {
            end += 1;
        }
        // positions start+1 ..= end
        let mid = T::from_count(start + 1 + end) / T::lit(2.0);
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
        start = end;
    }
    ranks
}

pub fn class_counts(labels: &[bool]) -> (usize, usize) {
    let n_pos = labels.iter().filter(|l| **l).count();
    (n_pos, labels.len() - n_pos)
}

/// AUC from precomputed midranks of the full label vector.
pub fn auc_from_midranks<T: Scalar>(ranks: &[T], labels: &[bool]) -> Result<T, AucError> {
    if ranks.len() != labels.len() {
        return Err(AucError::Length { values: ranks.len(), labels: labels.len() });
    }
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(AucError::SingleClass { n_pos, n_neg });
    }
    let rank_sum = ranks
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l)
        .fold(T::zero(), |acc, (r, _)| acc + *r);
    let np = T::from_count(n_pos);
    let u = rank_sum - np * (np + T::one()) / T::lit(2.0);
    Ok(u / (np * T::from_count(n_neg)))
}

/// Probability that a random positive outscores a random negative, ties counted as 1/2.
pub fn auc<T: Scalar>(values: &[Slot<T>], labels: &[bool]) -> Result<T, AucError> {
    if values.len() != labels.len() {
        return Err(AucError::Length { values: values.len(), labels: labels.len() });
    }
    auc_from_midranks(&midranks(values), labels)
}

/// Strength regardless of direction: `max(auc, 1 - auc)`.
pub fn effective<T: Scalar>(auc: T) -> T {
    auc.max(T::one() - auc)
}
