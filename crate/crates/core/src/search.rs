//! Population-level optimal explanations: minimize σ²(ŷ | u, x_𝓔) over
//! supports with |𝓔| ≤ s, either by full enumeration or greedily.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mi::{self, serialize_nats, MiValue};
use crate::model::{ExplanationSupport, JointMoments};
use crate::subsets;

/// Relative threshold (times `Var(ŷ)`) for ties and greedy early stopping.
pub const RELATIVE_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub support: ExplanationSupport,
    /// σ²(ŷ | u, x_𝓔) at `support`.
    pub objective: f64,
    pub mi: MiValue,
    pub method: SearchMethod,
}

#[derive(Serialize)]
struct SearchResultJson<'a> {
    method: SearchMethod,
    support: &'a ExplanationSupport,
    objective: f64,
    #[serde(serialize_with = "serialize_nats")]
    mi_nats: f64,
}

impl Serialize for SearchResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SearchResultJson {
            method: self.method,
            support: &self.support,
            objective: self.objective,
            mi_nats: self.mi.nats,
        }
        .serialize(s)
    }
}

fn check_budget(moments: &JointMoments, s: usize) -> Result<()> {
    if s > moments.n() {
        return Err(Error::InvalidArgument(format!(
            "sparsity {s} exceeds dimension {}",
            moments.n()
        )));
    }
    Ok(())
}

fn tolerance(moments: &JointMoments) -> f64 {
    RELATIVE_TIE_TOLERANCE * moments.prediction_variance()
}

fn finish(
    moments: &JointMoments,
    support: ExplanationSupport,
    objective: f64,
    method: SearchMethod,
) -> SearchResult {
    let num = mi::conditional_variance_on(moments, &[]);
    let mi = mi::mi_from_variances(num, objective, mi::default_floor(moments));
    SearchResult {
        support,
        objective,
        mi,
        method,
    }
}

/// Global minimizer of the conditional variance over all supports of size ≤ `s`.
///
/// Objectives within `1e-12·Var(ŷ)` of the minimum are tied; ties go to the
/// smaller support, then the lexicographically smaller one.
pub fn optimal_support_exhaustive(moments: &JointMoments, s: usize) -> Result<SearchResult> {
    let n = moments.n();
    subsets::check_enumerable(n)?;
    check_budget(moments, s)?;
    let (mask, objective) = subsets::argmin(n, s, tolerance(moments), |m| {
        mi::conditional_variance_mask(moments, m)
    });
    Ok(finish(
        moments,
        ExplanationSupport::from_mask(mask, s),
        objective,
        SearchMethod::Exhaustive,
    ))
}

/// Forward selection: repeatedly add the index with the largest variance
/// decrease, stopping once no addition improves by more than `1e-12·Var(ŷ)`.
pub fn optimal_support_greedy(moments: &JointMoments, s: usize) -> Result<SearchResult> {
    check_budget(moments, s)?;
    let threshold = tolerance(moments);
    let mut chosen: Vec<usize> = Vec::with_capacity(s);
    let mut current = mi::conditional_variance_on(moments, &[]);
    while chosen.len() < s {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..moments.n()).filter(|j| !chosen.contains(j)) {
            let mut trial = chosen.clone();
            trial.push(j);
            trial.sort_unstable();
            let value = mi::conditional_variance_on(moments, &trial);
            if best.is_none_or(|(_, b)| value < b) {
                best = Some((j, value));
            }
        }
        match best {
            Some((j, value)) if current - value > threshold => {
                chosen.push(j);
                chosen.sort_unstable();
                current = value;
            }
            _ => break,
        }
    }
    let support = ExplanationSupport::new(chosen, s, moments.n())?;
    Ok(finish(moments, support, current, SearchMethod::Greedy))
}
