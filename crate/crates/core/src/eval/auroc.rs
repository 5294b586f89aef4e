use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::{Error, Result};

/// Probability that a random hallucination score exceeds a random correct
/// score, ties counting one half (the Mann-Whitney U statistic over
/// `n_pos * n_neg`).
///
/// Orientation is fixed: larger scores mean "hallucination". A statistic that
/// moves the other way yields an AUROC below 0.5 rather than being flipped.
///
/// `2U` is accumulated as an integer, so the result is the exact rational
/// rounded once.
pub fn auroc(hallucination_scores: &[f64], correct_scores: &[f64]) -> Result<f64> {
    if hallucination_scores.is_empty() {
        return Err(Error::EmptyScores("no hallucination scores"));
    }
    if correct_scores.is_empty() {
        return Err(Error::EmptyScores("no correct scores"));
    }
    let mut all: Vec<(f64, bool)> = Vec::with_capacity(hallucination_scores.len() + correct_scores.len());
    for &s in hallucination_scores {
        all.push((s, true));
    }
    for &s in correct_scores {
        all.push((s, false));
    }
    if all.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFinite);
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        let (mut pos, mut neg) = (0u128, 0u128);
        while i < all.len() && all[i].0 == v {
            if all[i].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            i += 1;
        }
        twice_u += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
    }
    let pairs = 2 * hallucination_scores.len() as u128 * correct_scores.len() as u128;
    Ok(twice_u as f64 / pairs as f64)
}
