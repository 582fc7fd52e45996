//! Synthetic inputs shared by the benchmarks.

use std::collections::BTreeMap;

use bwslex_core::lexicon::{terms_from_surfaces, Term};

pub fn synthetic_terms(n: usize) -> Vec<Term> {
    terms_from_surfaces((0..n).map(|i| format!("term{i}")))
}

/// Distinct latent scores spread over [-1, 1) in scrambled order.
pub fn synthetic_latents(terms: &[Term]) -> BTreeMap<String, f64> {
    let n = terms.len().max(1);
    terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let rank = (i * 7919) % n;
            (t.surface.clone(), 2.0 * rank as f64 / n as f64 - 1.0)
        })
        .collect()
}
