//! Isotonic regression under a total order with ties.

use std::cmp::Ordering;
use std::ops::Range;

use crate::error::{domain, Result};

/// Values paired with strictly positive weights, the input to [`pava`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSequence {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSequence {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() {
            return domain(format!(
                "values ({}) and weights ({}) differ in length",
                values.len(),
                weights.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("non-finite value in sequence");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return domain("weights must be finite and strictly positive");
        }
        Ok(Self { values, weights })
    }

    /// Unit weights.
    pub fn unweighted(values: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; values.len()];
        Self::new(values, weights)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Weighted least-squares projection onto the cone of non-decreasing sequences.
///
/// Pool-adjacent-violators with a block stack: each incoming point becomes a
/// block and is merged backwards while the previous block mean exceeds it.
/// Runs in linear time.
pub fn pava(seq: &WeightedSequence) -> Result<Vec<f64>> {
    if seq.is_empty() {
        return domain("pava on empty sequence");
    }
    Ok(pava_raw(&seq.values, &seq.weights))
}

/// Unweighted convenience wrapper around [`pava`].
pub fn pava_unit(values: &[f64]) -> Result<Vec<f64>> {
    pava(&WeightedSequence::unweighted(values.to_vec())?)
}

struct Block {
    sum: f64,
    weight: f64,
    len: usize,
    // exact input value for unmerged points, weighted mean otherwise
    level: f64,
}

/// Inputs are assumed validated: equal lengths, finite values, positive weights.
pub(crate) fn pava_raw(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut stack: Vec<Block> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let mut cur = Block {
            sum: v * w,
            weight: w,
            len: 1,
            level: v,
        };
        while let Some(prev) = stack.last() {
            if prev.level <= cur.level {
                break;
            }
            let prev = stack.pop().expect("non-empty stack");
            let sum = prev.sum + cur.sum;
            let weight = prev.weight + cur.weight;
            cur = Block {
                sum,
                weight,
                len: prev.len + cur.len,
                level: sum / weight,
            };
        }
        stack.push(cur);
    }

    let mut out = Vec::with_capacity(values.len());
    for block in &stack {
        out.extend(std::iter::repeat_n(block.level, block.len));
    }
    out
}

/// Sorting permutation induced by a reference vector, with its tie structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InducedOrdering {
    /// `permutation[r]` is the original index holding rank `r`.
    pub permutation: Vec<usize>,
    /// Ranges of ranks (positions in `permutation`) whose reference values are
    /// exactly equal. Only groups of two or more are listed.
    pub tie_groups: Vec<Range<usize>>,
}

impl InducedOrdering {
    /// All maximal runs of equal reference values, singletons included.
    pub fn level_sets(&self, reference: &[f64]) -> Vec<Range<usize>> {
        level_sets(&self.permutation, reference)
    }
}

fn level_sets(perm: &[usize], reference: &[f64]) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for r in 1..=perm.len() {
        if r == perm.len() || reference[perm[r]] != reference[perm[start]] {
            groups.push(start..r);
            start = r;
        }
    }
    groups
}

/// Stable ascending sort of indices by `reference`, grouping equal values.
pub fn induced_ordering(reference: &[f64]) -> Result<InducedOrdering> {
    if reference.is_empty() {
        return domain("induced ordering of empty reference");
    }
    if reference.iter().any(|z| z.is_nan()) {
        return domain("NaN in reference vector");
    }
    let mut permutation: Vec<usize> = (0..reference.len()).collect();
    permutation.sort_by(|&a, &b| reference[a].partial_cmp(&reference[b]).unwrap_or(Ordering::Equal));
    let tie_groups = level_sets(&permutation, reference)
        .into_iter()
        .filter(|g| g.len() > 1)
        .collect();
    Ok(InducedOrdering {
        permutation,
        tie_groups,
    })
}

/// Isotonic fit of `values` in the order induced by `reference`, together with
/// the ordering that produced it.
#[derive(Debug, Clone)]
pub struct IsoFit {
    pub ordering: InducedOrdering,
    /// Fitted values in original index order.
    pub fitted: Vec<f64>,
}

/// Least-squares fit of `values` constrained to preserve the order of
/// `reference`: `x_i <= x_j` whenever `z_i <= z_j`.
///
/// Equal reference values force equal fitted values, so each tie group is
/// pooled into one point weighted by its size before running PAVA.
pub fn iso_wrt(reference: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    Ok(iso_fit(reference, values)?.fitted)
}

pub fn iso_fit(reference: &[f64], values: &[f64]) -> Result<IsoFit> {
    if reference.len() != values.len() {
        return domain(format!(
            "reference ({}) and values ({}) differ in length",
            reference.len(),
            values.len()
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return domain("non-finite value");
    }
    let ordering = induced_ordering(reference)?;
    let groups = ordering.level_sets(reference);
    let perm = &ordering.permutation;

    let mut pooled = Vec::with_capacity(groups.len());
    let mut weights = Vec::with_capacity(groups.len());
    for g in &groups {
        let first = values[perm[g.start]];
        if g.clone().all(|r| values[perm[r]] == first) {
            pooled.push(first);
        } else {
            let sum: f64 = g.clone().map(|r| values[perm[r]]).sum();
            pooled.push(sum / g.len() as f64);
        }
        weights.push(g.len() as f64);
    }
    let levels = pava_raw(&pooled, &weights);

    let mut fitted = vec![0.0; values.len()];
    for (g, level) in groups.iter().zip(levels) {
        for r in g.clone() {
            fitted[perm[r]] = level;
        }
    }
    Ok(IsoFit { ordering, fitted })
}
