//! Counting-procedure scores, annotator filtering and reliability.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::lexicon::ScoredLexicon;
use crate::response::{GoldKey, Response, TupleIndex};
use crate::rng;
use crate::stats;

pub const DEFAULT_MIN_GOLD_ACCURACY: f64 = 0.70;
pub const DEFAULT_SPLITS: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    best: i64,
    worst: i64,
    seen: u64,
}

fn tally<'r>(
    responses: impl IntoIterator<Item = &'r Response>,
    tuples: &TupleIndex<'_>,
) -> Result<HashMap<String, Tally>> {
    let mut counts: HashMap<String, Tally> = HashMap::new();
    for response in responses {
        let tuple = tuples.checked(response)?;
        for item in &tuple.items {
            let t = counts.entry(item.clone()).or_default();
            t.seen += 1;
            if *item == response.best {
                t.best += 1;
            } else if *item == response.worst {
                t.worst += 1;
            }
        }
    }
    Ok(counts)
}

fn lexicon_from(counts: HashMap<String, Tally>) -> ScoredLexicon {
    let mut lex = ScoredLexicon::new();
    for (term, t) in counts {
        let score = (t.best - t.worst) as f64 / t.seen as f64;
        lex.insert(term, score).expect("counting scores lie in [-1, 1]");
    }
    lex
}

/// Best-minus-worst counting procedure.
///
/// A term's score is the number of responses choosing it as best minus the
/// number choosing it as worst, divided by the number of responses whose
/// tuple contains it. Terms that appear in no annotated tuple are omitted.
pub fn score(responses: &[Response], tuples: &TupleIndex<'_>) -> Result<ScoredLexicon> {
    if responses.is_empty() {
        return Err(Error::EmptyResponses);
    }
    Ok(lexicon_from(tally(responses, tuples)?))
}

/// Share of answers matching the most frequent answer to their question.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    /// Matching answers over all answers (two per response).
    pub per_response: f64,
    /// Mean over questions of the matching share.
    pub per_question: f64,
    pub n_questions: usize,
    pub n_answers: usize,
}

/// Each tuple asks two questions (best and worst). Answers tied for the
/// most frequent all count as matching.
pub fn majority_agreement(responses: &[Response]) -> Option<Agreement> {
    let mut questions: BTreeMap<(&str, bool), BTreeMap<&str, usize>> = BTreeMap::new();
    for r in responses {
        *questions
            .entry((&r.tuple_id, true))
            .or_default()
            .entry(&r.best)
            .or_insert(0) += 1;
        *questions
            .entry((&r.tuple_id, false))
            .or_default()
            .entry(&r.worst)
            .or_insert(0) += 1;
    }
    if questions.is_empty() {
        return None;
    }
    let (mut matching, mut answers, mut share_sum) = (0usize, 0usize, 0.0);
    for counts in questions.values() {
        let top = counts.values().copied().max().unwrap_or(0);
        let total: usize = counts.values().sum();
        let hits: usize = counts.values().filter(|&&c| c == top).sum();
        matching += hits;
        answers += total;
        share_sum += hits as f64 / total as f64;
    }
    Some(Agreement {
        per_response: matching as f64 / answers as f64,
        per_question: share_sum / questions.len() as f64,
        n_questions: questions.len(),
        n_answers: answers,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub per_annotator_gold_accuracy: BTreeMap<String, f64>,
    pub discarded_annotators: BTreeSet<String>,
    /// Annotators who answered no check questions; kept.
    pub no_gold_annotators: BTreeSet<String>,
    pub threshold: f64,
    pub majority_agreement: Option<Agreement>,
    pub kept_responses: usize,
    pub discarded_responses: usize,
}

/// Drops every response of annotators whose gold accuracy is below `threshold`.
///
/// Each answered gold question grades two answers, best and worst.
pub fn filter_annotators(
    responses: &[Response],
    tuples: &TupleIndex<'_>,
    gold: &GoldKey,
    threshold: f64,
) -> Result<(Vec<Response>, QualityReport)> {
    let mut graded: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    let mut annotators: BTreeSet<&str> = BTreeSet::new();
    for r in responses {
        tuples.resolve(r)?;
        annotators.insert(&r.annotator_id);
        if let Some(answer) = gold.get(&r.tuple_id) {
            let g = graded.entry(&r.annotator_id).or_default();
            g.0 += u64::from(r.best == answer.expected_best) + u64::from(r.worst == answer.expected_worst);
            g.1 += 2;
        }
    }

    let per_annotator_gold_accuracy: BTreeMap<String, f64> = graded
        .iter()
        .map(|(a, (correct, total))| (a.to_string(), *correct as f64 / *total as f64))
        .collect();
    let discarded_annotators: BTreeSet<String> = per_annotator_gold_accuracy
        .iter()
        .filter(|(_, &acc)| acc < threshold)
        .map(|(a, _)| a.clone())
        .collect();
    let no_gold_annotators = annotators
        .iter()
        .filter(|a| !graded.contains_key(*a))
        .map(|a| a.to_string())
        .collect();

    let kept: Vec<Response> = responses
        .iter()
        .filter(|r| !discarded_annotators.contains(&r.annotator_id))
        .cloned()
        .collect();
    let report = QualityReport {
        per_annotator_gold_accuracy,
        discarded_annotators,
        no_gold_annotators,
        threshold,
        majority_agreement: majority_agreement(&kept),
        kept_responses: kept.len(),
        discarded_responses: responses.len() - kept.len(),
    };
    Ok((kept, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reliability {
    pub spearman_mean: f64,
    pub spearman_sd: f64,
    pub pearson_mean: f64,
    pub pearson_sd: f64,
    /// (spearman, pearson) for each split, in split order.
    pub per_split: Vec<(f64, f64)>,
    /// Tuples with fewer than two responses; they take part in no split.
    pub excluded_tuples: Vec<String>,
}

/// Split-half reliability averaged over `n_splits` random splits.
///
/// In every split the responses to each tuple are shuffled and cut into two
/// halves whose sizes differ by at most one. Each half is scored on its own
/// and the two score vectors are correlated over the terms scored in both.
/// Split `s` draws from stream `s` of `seed`.
pub fn split_half_reliability(
    responses: &[Response],
    tuples: &TupleIndex<'_>,
    n_splits: usize,
    seed: u64,
) -> Result<Reliability> {
    if n_splits == 0 {
        return Err(Error::InvalidArgument("n_splits must be at least 1".into()));
    }
    let mut by_tuple: BTreeMap<&str, Vec<&Response>> = BTreeMap::new();
    for r in responses {
        tuples.checked(r)?;
        by_tuple.entry(&r.tuple_id).or_default().push(r);
    }
    let excluded_tuples: Vec<String> = by_tuple
        .iter()
        .filter(|(_, rs)| rs.len() < 2)
        .map(|(id, _)| id.to_string())
        .collect();
    by_tuple.retain(|_, rs| rs.len() >= 2);
    if by_tuple.is_empty() {
        return Err(Error::EmptyResponses);
    }

    let mut per_split = Vec::with_capacity(n_splits);
    for split in 0..n_splits {
        let mut rng = rng::stream(seed, split as u64);
        let (mut first, mut second) = (Vec::new(), Vec::new());
        for group in by_tuple.values() {
            let mut shuffled = group.clone();
            shuffled.shuffle(&mut rng);
            let cut = shuffled.len() / 2;
            first.extend_from_slice(&shuffled[..cut]);
            second.extend_from_slice(&shuffled[cut..]);
        }
        let a = lexicon_from(tally(first, tuples)?);
        let b = lexicon_from(tally(second, tuples)?);
        let (xs, ys): (Vec<f64>, Vec<f64>) = a
            .iter()
            .filter_map(|(term, sa)| b.get(term).map(|sb| (sa, sb)))
            .unzip();
        let degenerate = || Error::DegenerateFit(format!("split {split} produced constant scores"));
        let rho = stats::spearman(&xs, &ys).ok_or_else(degenerate)?;
        let r = stats::pearson(&xs, &ys).ok_or_else(degenerate)?;
        per_split.push((rho, r));
    }

    let rhos: Vec<f64> = per_split.iter().map(|p| p.0).collect();
    let rs: Vec<f64> = per_split.iter().map(|p| p.1).collect();
    Ok(Reliability {
        spearman_mean: stats::mean(&rhos).unwrap(),
        spearman_sd: stats::std_dev(&rhos),
        pearson_mean: stats::mean(&rs).unwrap(),
        pearson_sd: stats::std_dev(&rs),
        per_split,
        excluded_tuples,
    })
}
