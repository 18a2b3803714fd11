//! Bitmask enumeration of feature subsets with a deterministic tie-break.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest feature dimension accepted by exhaustive enumeration.
pub const ENUMERATION_LIMIT: usize = 25;

pub fn check_enumerable(n: usize) -> Result<()> {
    if n > ENUMERATION_LIMIT {
        return Err(Error::DimensionTooLarge {
            n,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// All masks over `n` bits with at most `s` bits set, in parallel.
pub fn masks_up_to(n: usize, s: usize) -> impl ParallelIterator<Item = u32> {
    debug_assert!(n <= ENUMERATION_LIMIT);
    (0u32..(1u32 << n))
        .into_par_iter()
        .filter(move |m| m.count_ones() as usize <= s)
}

/// Lexicographic order of the sorted index lists encoded by two masks.
pub fn lex_cmp(a: u32, b: u32) -> Ordering {
    let diff = a ^ b;
    if diff == 0 {
        return Ordering::Equal;
    }
    let k = diff.trailing_zeros();
    let above = if k >= 31 { 0 } else { !0u32 << (k + 1) };
    if a & (1 << k) != 0 {
        // `a` holds k; `b` continues with something larger or ends.
        if b & above != 0 {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    } else if a & above != 0 {
        Ordering::Greater
    } else {
        Ordering::Less
    }
}

/// Smaller cardinality first, then lexicographic.
pub fn tie_cmp(a: u32, b: u32) -> Ordering {
    a.count_ones()
        .cmp(&b.count_ones())
        .then_with(|| lex_cmp(a, b))
}

/// Minimizes `objective` over masks with at most `s` bits. Every mask within
/// `tol` of the minimum counts as tied; ties go to [`tie_cmp`]. The result does
/// not depend on evaluation order or thread count.
pub fn argmin<F>(n: usize, s: usize, tol: f64, objective: F) -> (u32, f64)
where
    F: Fn(u32) -> f64 + Sync,
{
    let best = masks_up_to(n, s)
        .map(&objective)
        .reduce(|| f64::INFINITY, f64::min);
    masks_up_to(n, s)
        .filter_map(|m| {
            let v = objective(m);
            (v <= best + tol).then_some((m, v))
        })
        .reduce_with(|a, b| if tie_cmp(a.0, b.0) == Ordering::Greater { b } else { a })
        .expect("the empty mask is always enumerated")
}
