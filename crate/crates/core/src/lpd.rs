//! Least perceptible difference in sentiment.
//!
//! Best-worst responses imply pairwise preferences: in a tuple containing
//! `a` and `b`, choosing `a` as best or `b` as worst says `a` is more
//! positive than `b`. Pair agreement is then related to the score
//! difference of the pair, and the least perceptible difference is the
//! smallest difference from which the confidence lower bound on agreement
//! stays above one half.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::error::{Error, Result};
use crate::lexicon::ScoredLexicon;
use crate::response::{Response, TupleIndex};
use crate::stats;

/// Anything that maps a term to a real-valued score.
///
/// Besides [`ScoredLexicon`] this covers plain maps, whose values need not
/// lie in [-1, 1].
pub trait ScoreLookup {
    fn score_of(&self, term: &str) -> Option<f64>;
}

impl ScoreLookup for ScoredLexicon {
    fn score_of(&self, term: &str) -> Option<f64> {
        self.get(term)
    }
}

impl ScoreLookup for BTreeMap<String, f64> {
    fn score_of(&self, term: &str) -> Option<f64> {
        self.get(term).copied()
    }
}

impl ScoreLookup for HashMap<String, f64> {
    fn score_of(&self, term: &str) -> Option<f64> {
        self.get(term).copied()
    }
}

/// Score differences are snapped to this many units per score point before
/// windowing, so the curve depends only on differences and not on rounding
/// noise from the absolute scores.
pub const DIFF_UNITS: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairJudgment {
    pub hi: String,
    pub lo: String,
    pub n_hi_preferred: u64,
    pub n_lo_preferred: u64,
}

impl PairJudgment {
    pub fn total(&self) -> u64 {
        self.n_hi_preferred + self.n_lo_preferred
    }

    fn flipped(&self) -> Self {
        PairJudgment {
            hi: self.lo.clone(),
            lo: self.hi.clone(),
            n_hi_preferred: self.n_lo_preferred,
            n_lo_preferred: self.n_hi_preferred,
        }
    }
}

/// Aggregated pairwise preferences. `hi` is the lexicographically smaller
/// surface here; [`agreement_curve`] reorients pairs by score.
///
/// A response choosing `a` as best and `b` as worst counts once for `a`
/// over `b`. Every response yields five preferences.
pub fn infer_pairs(responses: &[Response], tuples: &TupleIndex<'_>) -> Result<Vec<PairJudgment>> {
    let mut counts: BTreeMap<(&str, &str), (u64, u64)> = BTreeMap::new();
    for r in responses {
        let tuple = tuples.checked(r)?;
        for k in 0..4 {
            for l in k + 1..4 {
                let (a, b) = (tuple.items[k].as_str(), tuple.items[l].as_str());
                let a_wins = if a == r.best || b == r.worst {
                    true
                } else if b == r.best || a == r.worst {
                    false
                } else {
                    continue;
                };
                let (first, second, first_wins) = if a <= b { (a, b, a_wins) } else { (b, a, !a_wins) };
                let entry = counts.entry((first, second)).or_default();
                if first_wins {
                    entry.0 += 1;
                } else {
                    entry.1 += 1;
                }
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|((hi, lo), (h, l))| PairJudgment {
            hi: hi.to_string(),
            lo: lo.to_string(),
            n_hi_preferred: h,
            n_lo_preferred: l,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveConfig {
    /// Half-width of the difference window around each grid point.
    pub window: f64,
    pub grid_step: f64,
    /// Normal quantile used for the Wilson lower bound.
    pub z: f64,
}

impl CurveConfig {
    pub fn new(window: f64, grid_step: f64, confidence: f64, two_sided: bool) -> Result<Self> {
        if !(window >= 0.0 && window.is_finite()) {
            return Err(Error::InvalidArgument(format!("window must be non-negative, got {window}")));
        }
        if !(grid_step > 0.0 && grid_step.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid step must be positive, got {grid_step}")));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::InvalidArgument(format!("confidence must lie in (0, 1), got {confidence}")));
        }
        Ok(Self {
            window,
            grid_step,
            z: stats::z_for_confidence(confidence, two_sided),
        })
    }
}

impl Default for CurveConfig {
    /// ±0.01 windows on a 0.001 grid with a one-sided 99.9% bound.
    fn default() -> Self {
        Self::new(0.01, 0.001, 0.999, false).expect("valid defaults")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementPoint {
    pub grid_index: u64,
    pub d: f64,
    /// Mean of per-pair agreement over pairs in the window.
    pub mean_agreement: f64,
    pub n_pairs: usize,
    pub n_judgments: u64,
    /// Judgments in the window that favour the higher-scored term.
    pub n_agree: u64,
    /// Wilson lower limit on the pooled judgments.
    pub lower_bound: f64,
}

impl AgreementPoint {
    pub fn pooled_agreement(&self) -> f64 {
        self.n_agree as f64 / self.n_judgments as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgreementCurve {
    pub points: Vec<AgreementPoint>,
}

struct OrientedPair {
    diff: i64,
    agree: u64,
    total: u64,
    agreement: f64,
}

fn to_units(x: f64) -> i64 {
    (x * DIFF_UNITS).round() as i64
}

/// Orients each pair so that `hi` has the higher score (ties keep the given order).
pub fn orient<S: ScoreLookup + ?Sized>(pair: &PairJudgment, scores: &S) -> Result<(PairJudgment, i64)> {
    let missing = || Error::MissingPairScore(pair.hi.clone(), pair.lo.clone());
    let s_hi = scores.score_of(&pair.hi).ok_or_else(missing)?;
    let s_lo = scores.score_of(&pair.lo).ok_or_else(missing)?;
    let diff = to_units(s_hi - s_lo);
    if diff < 0 {
        Ok((pair.flipped(), -diff))
    } else {
        Ok((pair.clone(), diff))
    }
}

/// Human agreement as a function of score difference.
///
/// Grid points whose window holds no pair with at least one judgment are omitted.
pub fn agreement_curve<S: ScoreLookup + ?Sized>(
    pairs: &[PairJudgment],
    scores: &S,
    config: &CurveConfig,
) -> Result<AgreementCurve> {
    let mut oriented = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let (p, diff) = orient(pair, scores)?;
        if p.total() == 0 {
            continue;
        }
        oriented.push(OrientedPair {
            diff,
            agree: p.n_hi_preferred,
            total: p.total(),
            agreement: p.n_hi_preferred as f64 / p.total() as f64,
        });
    }
    oriented.sort_by_key(|p| p.diff);

    let step = to_units(config.grid_step).max(1);
    let window = to_units(config.window);
    let Some(max_diff) = oriented.last().map(|p| p.diff) else {
        return Ok(AgreementCurve::default());
    };

    let mut points = Vec::new();
    for i in 0..=((max_diff + window) / step) {
        let centre = i * step;
        let from = oriented.partition_point(|p| p.diff < centre - window);
        let to = oriented.partition_point(|p| p.diff <= centre + window);
        let in_window = &oriented[from..to];
        if in_window.is_empty() {
            continue;
        }
        let n_judgments: u64 = in_window.iter().map(|p| p.total).sum();
        let n_agree: u64 = in_window.iter().map(|p| p.agree).sum();
        let mean_agreement = in_window.iter().map(|p| p.agreement).sum::<f64>() / in_window.len() as f64;
        points.push(AgreementPoint {
            grid_index: i as u64,
            d: centre as f64 / DIFF_UNITS,
            mean_agreement,
            n_pairs: in_window.len(),
            n_judgments,
            n_agree,
            lower_bound: stats::wilson_lower(n_agree, n_judgments, config.z)
                .expect("window holds judgments"),
        });
    }
    Ok(AgreementCurve { points })
}

impl AgreementCurve {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The largest grid point whose lower bound does not exceed one half.
    pub fn last_at_or_below_chance(&self) -> Option<&AgreementPoint> {
        self.points.iter().rev().find(|p| p.lower_bound <= 0.5)
    }

    /// Columns: d, mean_agreement, n_pairs, n_judgments, lower_bound.
    pub fn write_tsv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "d\tmean_agreement\tn_pairs\tn_judgments\tlower_bound")?;
        for p in &self.points {
            writeln!(
                out,
                "{:.6}\t{:.6}\t{}\t{}\t{:.6}",
                p.d, p.mean_agreement, p.n_pairs, p.n_judgments, p.lower_bound
            )?;
        }
        Ok(())
    }
}

/// Smallest grid difference from which the lower bound exceeds 0.5 at every
/// populated grid point. `None` if the last point is not above chance.
pub fn least_perceptible_difference(curve: &AgreementCurve) -> Option<f64> {
    let above = curve
        .points
        .iter()
        .rev()
        .take_while(|p| p.lower_bound > 0.5)
        .count();
    if above == 0 {
        None
    } else {
        Some(curve.points[curve.points.len() - above].d)
    }
}
