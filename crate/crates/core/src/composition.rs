//! How negators, modals and degree adverbs shift the sentiment of the words
//! they modify.
//!
//! Every phrase `mod w` in a lexicon whose content word `w` is also scored
//! becomes a [`ModifierPair`]. Pairs are summarised per modifier category
//! and per modifier chain, and two simple composition rules are tested
//! against them: polarity reversal (`score(mod w) = -score(w)`) and a fixed
//! shift toward the opposite polarity (`score(w) - sign(score(w)) * b`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lexicon::{format_score, ModifierCategory, ModifierInventory, ScoredLexicon};
use crate::stats;

pub const DEFAULT_LPD: f64 = 0.069;
pub const DEFAULT_POLARITY_THRESHOLD: f64 = 0.3;
pub const DEFAULT_MIN_PAIRS: usize = 5;

/// Slack for comparing score differences against the perceptible difference.
const DIFF_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ModifierPair {
    pub phrase: String,
    pub content: String,
    /// Full modifier chain, e.g. `would be very`.
    pub modifier_key: String,
    pub category: ModifierCategory,
    pub chain_len: usize,
    pub phrase_score: f64,
    pub content_score: f64,
    pub diff: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairBuild {
    pub pairs: Vec<ModifierPair>,
    /// (phrase, content word) where the content word has no score.
    pub missing_content: Vec<(String, String)>,
    /// Multi-word terms the inventory cannot decompose.
    pub undecomposable: Vec<String>,
}

pub fn build_pairs(lexicon: &ScoredLexicon, inventory: &ModifierInventory) -> PairBuild {
    let mut build = PairBuild::default();
    for (phrase, phrase_score) in lexicon.iter() {
        if !phrase.contains(' ') {
            continue;
        }
        let Some(dec) = inventory.decompose(phrase) else {
            build.undecomposable.push(phrase.to_string());
            continue;
        };
        let Some(content_score) = lexicon.get(&dec.content_word) else {
            build
                .missing_content
                .push((phrase.to_string(), dec.content_word.clone()));
            continue;
        };
        build.pairs.push(ModifierPair {
            phrase: phrase.to_string(),
            content: dec.content_word.clone(),
            modifier_key: dec.modifier_key(),
            category: dec.category(),
            chain_len: dec.modifier_chain.len(),
            phrase_score,
            content_score,
            diff: phrase_score - content_score,
        });
    }
    build
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    OnPositive,
    OnNegative,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::OnPositive, Polarity::OnNegative];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::OnPositive => "on_positive",
            Polarity::OnNegative => "on_negative",
        }
    }

    /// Polarity of a content word, or `None` when it is too close to neutral.
    pub fn of(content_score: f64, threshold: f64) -> Option<Polarity> {
        if content_score >= threshold {
            Some(Polarity::OnPositive)
        } else if content_score <= -threshold {
            Some(Polarity::OnNegative)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolarityFilter {
    OnPositive,
    OnNegative,
    Either,
}

impl PolarityFilter {
    pub fn admits(self, content_score: f64, threshold: f64) -> bool {
        match (self, Polarity::of(content_score, threshold)) {
            (_, None) => false,
            (PolarityFilter::Either, Some(_)) => true,
            (PolarityFilter::OnPositive, Some(p)) => p == Polarity::OnPositive,
            (PolarityFilter::OnNegative, Some(p)) => p == Polarity::OnNegative,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolarityFilter::OnPositive => "on_positive",
            PolarityFilter::OnNegative => "on_negative",
            PolarityFilter::Either => "either",
        }
    }
}

impl From<Polarity> for PolarityFilter {
    fn from(p: Polarity) -> Self {
        match p {
            Polarity::OnPositive => PolarityFilter::OnPositive,
            Polarity::OnNegative => PolarityFilter::OnNegative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupKey {
    Category(ModifierCategory),
    Modifier(String),
}

impl GroupKey {
    pub fn label(&self) -> &str {
        match self {
            GroupKey::Category(c) => c.as_str(),
            GroupKey::Modifier(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupImpactRow {
    pub group: GroupKey,
    pub category: ModifierCategory,
    pub polarity: Polarity,
    /// Signed mean difference; mean absolute difference for degree adverbs.
    pub avg_diff: f64,
    pub n_pairs: usize,
    pub n_up: usize,
    pub n_down: usize,
}

impl GroupImpactRow {
    /// Pairs whose difference is smaller than the perceptible difference.
    pub fn n_within(&self) -> usize {
        self.n_pairs - self.n_up - self.n_down
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactConfig {
    pub lpd: f64,
    pub polarity_threshold: f64,
    /// Per-modifier rows need at least this many pairs.
    pub min_pairs: usize,
    pub single_modifier_only: bool,
}

impl Default for ImpactConfig {
    fn default() -> Self {
        Self {
            lpd: DEFAULT_LPD,
            polarity_threshold: DEFAULT_POLARITY_THRESHOLD,
            min_pairs: DEFAULT_MIN_PAIRS,
            single_modifier_only: false,
        }
    }
}

fn summarise(group: GroupKey, category: ModifierCategory, polarity: Polarity, pairs: &[&ModifierPair], lpd: f64) -> GroupImpactRow {
    let diffs: Vec<f64> = pairs
        .iter()
        .map(|p| {
            if category == ModifierCategory::DegreeAdverb {
                p.diff.abs()
            } else {
                p.diff
            }
        })
        .collect();
    GroupImpactRow {
        group,
        category,
        polarity,
        avg_diff: stats::mean(&diffs).unwrap_or(f64::NAN),
        n_pairs: pairs.len(),
        n_up: pairs
            .iter()
            .filter(|p| p.diff > 0.0 && p.diff >= lpd - DIFF_TOLERANCE)
            .count(),
        n_down: pairs
            .iter()
            .filter(|p| p.diff < 0.0 && p.diff <= -lpd + DIFF_TOLERANCE)
            .count(),
    }
}

/// Category rows (always, when populated) followed by per-modifier rows.
///
/// Pairs whose content word is within `polarity_threshold` of neutral are
/// left out. Modifier rows are sorted within each (category, polarity) by
/// decreasing magnitude of the average difference.
pub fn group_impact(pairs: &[ModifierPair], config: &ImpactConfig) -> Vec<GroupImpactRow> {
    let mut by_category: BTreeMap<(ModifierCategory, Polarity), Vec<&ModifierPair>> = BTreeMap::new();
    let mut by_modifier: BTreeMap<(ModifierCategory, Polarity, &str), Vec<&ModifierPair>> = BTreeMap::new();
    for p in pairs {
        if config.single_modifier_only && p.chain_len != 1 {
            continue;
        }
        let Some(polarity) = Polarity::of(p.content_score, config.polarity_threshold) else {
            continue;
        };
        by_category.entry((p.category, polarity)).or_default().push(p);
        by_modifier
            .entry((p.category, polarity, &p.modifier_key))
            .or_default()
            .push(p);
    }

    let mut rows: Vec<GroupImpactRow> = by_category
        .into_iter()
        .map(|((c, pol), ps)| summarise(GroupKey::Category(c), c, pol, &ps, config.lpd))
        .collect();
    let mut modifier_rows: Vec<GroupImpactRow> = by_modifier
        .into_iter()
        .filter(|(_, ps)| ps.len() >= config.min_pairs)
        .map(|((c, pol, key), ps)| summarise(GroupKey::Modifier(key.to_string()), c, pol, &ps, config.lpd))
        .collect();
    modifier_rows.sort_by(|a, b| {
        (a.category, a.polarity)
            .cmp(&(b.category, b.polarity))
            .then(b.avg_diff.abs().total_cmp(&a.avg_diff.abs()))
            .then(a.group.cmp(&b.group))
    });
    rows.extend(modifier_rows);
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftScope {
    Global,
    PerCategory,
    PerModifier,
}

impl ShiftScope {
    pub fn as_str(self) -> &'static str {
        match self {
            ShiftScope::Global => "global",
            ShiftScope::PerCategory => "category",
            ShiftScope::PerModifier => "modifier",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftFit {
    pub group: String,
    pub b: f64,
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn residual_summary(residuals: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
    for r in residuals {
        abs += r.abs();
        sq += r * r;
        n += 1;
    }
    (abs / n as f64, (sq / n as f64).sqrt(), n)
}

/// Least-squares shift `b` for `phrase = content - sign(content) * b`.
fn fit_shift(group: String, pairs: &[&ModifierPair]) -> Option<ShiftFit> {
    let signs: f64 = pairs.iter().map(|p| sign(p.content_score).powi(2)).sum();
    if signs == 0.0 {
        return None;
    }
    let b = pairs
        .iter()
        .map(|p| sign(p.content_score) * (p.content_score - p.phrase_score))
        .sum::<f64>()
        / signs;
    let (mae, rmse, n) = residual_summary(
        pairs
            .iter()
            .map(|p| p.phrase_score - (p.content_score - sign(p.content_score) * b)),
    );
    Some(ShiftFit { group, b, mae, rmse, n })
}

/// Fits the fixed-shift rule per scope. Scopes without admitted pairs are omitted.
pub fn fit_fixed_shift(
    pairs: &[ModifierPair],
    scope: ShiftScope,
    filter: PolarityFilter,
    threshold: f64,
) -> Vec<ShiftFit> {
    let mut groups: BTreeMap<String, Vec<&ModifierPair>> = BTreeMap::new();
    for p in pairs.iter().filter(|p| filter.admits(p.content_score, threshold)) {
        let key = match scope {
            ShiftScope::Global => "all".to_string(),
            ShiftScope::PerCategory => p.category.as_str().to_string(),
            ShiftScope::PerModifier => p.modifier_key.clone(),
        };
        groups.entry(key).or_default().push(p);
    }
    groups
        .into_iter()
        .filter_map(|(group, ps)| fit_shift(group, &ps))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReversalEval {
    /// (phrase, phrase_score - (-content_score)).
    pub residuals: Vec<(String, f64)>,
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
}

/// Residuals of the polarity-reversal rule. Callers pass negator pairs.
pub fn evaluate_reversal(pairs: &[ModifierPair], filter: PolarityFilter, threshold: f64) -> Option<ReversalEval> {
    let residuals: Vec<(String, f64)> = pairs
        .iter()
        .filter(|p| filter.admits(p.content_score, threshold))
        .map(|p| (p.phrase.clone(), p.phrase_score - (-p.content_score)))
        .collect();
    if residuals.is_empty() {
        return None;
    }
    let (mae, rmse, n) = residual_summary(residuals.iter().map(|r| r.1));
    Some(ReversalEval { residuals, mae, rmse, n })
}

/// Ordinary least squares of phrase score on content score: (intercept, slope).
pub fn fit_group_line(pairs: &[ModifierPair]) -> Result<(f64, f64)> {
    if pairs.len() < 2 {
        return Err(Error::DegenerateFit(format!("need at least two pairs, got {}", pairs.len())));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.content_score).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.phrase_score).collect();
    stats::ols(&xs, &ys).ok_or_else(|| Error::DegenerateFit("all content scores are equal".into()))
}

/// Everything the `analyze` command reports.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionAnalysis {
    pub config: ImpactConfig,
    pub build: PairBuild,
    pub rows: Vec<GroupImpactRow>,
    pub rows_single: Vec<GroupImpactRow>,
    pub shifts: Vec<(ShiftScope, Polarity, ShiftFit)>,
    pub reversal: Vec<(Polarity, ReversalEval)>,
    /// (category, polarity, intercept, slope, n)
    pub lines: Vec<(ModifierCategory, Polarity, f64, f64, usize)>,
}

impl CompositionAnalysis {
    pub fn run(lexicon: &ScoredLexicon, inventory: &ModifierInventory, config: ImpactConfig) -> Self {
        let build = build_pairs(lexicon, inventory);
        let rows = group_impact(&build.pairs, &config);
        let rows_single = group_impact(
            &build.pairs,
            &ImpactConfig {
                single_modifier_only: true,
                ..config
            },
        );
        let th = config.polarity_threshold;

        let mut shifts = Vec::new();
        let mut reversal = Vec::new();
        let mut lines = Vec::new();
        let negators: Vec<ModifierPair> = build
            .pairs
            .iter()
            .filter(|p| p.category == ModifierCategory::Negator)
            .cloned()
            .collect();
        for polarity in Polarity::BOTH {
            let filter = PolarityFilter::from(polarity);
            for scope in [ShiftScope::PerCategory, ShiftScope::PerModifier] {
                for fit in fit_fixed_shift(&build.pairs, scope, filter, th) {
                    shifts.push((scope, polarity, fit));
                }
            }
            if let Some(eval) = evaluate_reversal(&negators, filter, th) {
                reversal.push((polarity, eval));
            }
        }
        for category in ModifierCategory::ALL {
            for polarity in Polarity::BOTH {
                let group: Vec<ModifierPair> = build
                    .pairs
                    .iter()
                    .filter(|p| p.category == category && Polarity::of(p.content_score, th) == Some(polarity))
                    .cloned()
                    .collect();
                if let Ok((a, b)) = fit_group_line(&group) {
                    lines.push((category, polarity, a, b, group.len()));
                }
            }
        }
        Self {
            config,
            build,
            rows,
            rows_single,
            shifts,
            reversal,
            lines,
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_rows(out: &mut impl Write, rows: &[GroupImpactRow], categories: bool) -> std::io::Result<()> {
    if categories {
        writeln!(out, "group\tpolarity\tavg_diff\tn_pairs\tn_up\tn_down")?;
    } else {
        writeln!(out, "modifier\tcategory\tpolarity\tavg_diff\tn_pairs\tn_up\tn_down")?;
    }
    for r in rows {
        let is_category = matches!(r.group, GroupKey::Category(_));
        if is_category != categories {
            continue;
        }
        if categories {
            write!(out, "{}\t", r.group.label())?;
        } else {
            write!(out, "{}\t{}\t", r.group.label(), r.category)?;
        }
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.polarity.as_str(),
            format_score(r.avg_diff),
            r.n_pairs,
            r.n_up,
            r.n_down
        )?;
    }
    Ok(())
}

fn text_report(a: &CompositionAnalysis) -> String {
    let mut s = String::new();
    let c = &a.config;
    let _ = writeln!(
        s,
        "modifier pairs: {} (perceptible difference {}, polarity threshold {})",
        a.build.pairs.len(),
        c.lpd,
        c.polarity_threshold
    );
    let _ = writeln!(s, "phrases without a scored content word: {}", a.build.missing_content.len());
    for (phrase, content) in &a.build.missing_content {
        let _ = writeln!(s, "  {phrase} (content word {content:?})");
    }
    let _ = writeln!(s, "phrases the inventory cannot decompose: {}", a.build.undecomposable.len());
    for phrase in &a.build.undecomposable {
        let _ = writeln!(s, "  {phrase}");
    }
    let _ = writeln!(s, "\nmodifier groups");
    for r in a.rows.iter().filter(|r| matches!(r.group, GroupKey::Category(_))) {
        let _ = writeln!(
            s,
            "  {:<14} {:<12} avg {:>7}  pairs {:>4}  up {:>4}  down {:>4}  within {:>4}",
            r.group.label(),
            r.polarity.as_str(),
            format_score(r.avg_diff),
            r.n_pairs,
            r.n_up,
            r.n_down,
            r.n_within()
        );
    }
    let _ = writeln!(s, "\nindividual modifiers (at least {} pairs)", c.min_pairs);
    for r in a.rows.iter().filter(|r| matches!(r.group, GroupKey::Modifier(_))) {
        let _ = writeln!(
            s,
            "  {:<16} {:<14} {:<12} avg {:>7}  pairs {:>4}  up {:>4}  down {:>4}",
            r.group.label(),
            r.category.as_str(),
            r.polarity.as_str(),
            format_score(r.avg_diff),
            r.n_pairs,
            r.n_up,
            r.n_down
        );
    }
    let _ = writeln!(s, "\npolarity reversal on negated phrases");
    for (pol, e) in &a.reversal {
        let _ = writeln!(s, "  {:<12} mae {:.3}  rmse {:.3}  n {}", pol.as_str(), e.mae, e.rmse, e.n);
    }
    let _ = writeln!(s, "\nfixed shift per category");
    for (scope, pol, f) in a.shifts.iter().filter(|x| x.0 == ShiftScope::PerCategory) {
        let _ = writeln!(
            s,
            "  {:<14} {:<12} b {:.3}  mae {:.3}  rmse {:.3}  n {} ({})",
            f.group,
            pol.as_str(),
            f.b,
            f.mae,
            f.rmse,
            f.n,
            scope.as_str()
        );
    }
    let _ = writeln!(s, "\ngroup lines (phrase = intercept + slope * content)");
    for (cat, pol, a0, b0, n) in &a.lines {
        let _ = writeln!(s, "  {:<14} {:<12} intercept {:.3}  slope {:.3}  n {}", cat.as_str(), pol.as_str(), a0, b0, n);
    }
    s
}

/// Writes table-shaped TSVs, scatter data and a plain-text summary into `dir`.
pub fn emit_report(analysis: &CompositionAnalysis, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let io = |name: &str| {
        let path = dir.join(name);
        move |e: std::io::Error| Error::io(path, e)
    };

    let mut f = create(dir, "groups.tsv")?;
    write_rows(&mut f, &analysis.rows, true).and_then(|_| f.flush()).map_err(io("groups.tsv"))?;

    let mut f = create(dir, "modifiers.tsv")?;
    write_rows(&mut f, &analysis.rows, false).and_then(|_| f.flush()).map_err(io("modifiers.tsv"))?;

    let mut f = create(dir, "modifiers_single.tsv")?;
    write_rows(&mut f, &analysis.rows_single, false)
        .and_then(|_| f.flush())
        .map_err(io("modifiers_single.tsv"))?;

    let mut f = create(dir, "shifts.tsv")?;
    (|| {
        writeln!(f, "scope\tgroup\tpolarity\tb\tmae\trmse\tn")?;
        for (scope, pol, fit) in &analysis.shifts {
            writeln!(
                f,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}",
                scope.as_str(),
                fit.group,
                pol.as_str(),
                fit.b,
                fit.mae,
                fit.rmse,
                fit.n
            )?;
        }
        f.flush()
    })()
    .map_err(io("shifts.tsv"))?;

    let mut f = create(dir, "reversal.tsv")?;
    (|| {
        writeln!(f, "phrase\tpolarity\tresidual")?;
        for (pol, eval) in &analysis.reversal {
            for (phrase, r) in &eval.residuals {
                writeln!(f, "{phrase}\t{}\t{:.6}", pol.as_str(), r)?;
            }
        }
        f.flush()
    })()
    .map_err(io("reversal.tsv"))?;

    let mut f = create(dir, "scatter.tsv")?;
    (|| {
        writeln!(f, "content_score\tphrase_score\tmodifier_key\tcategory")?;
        for p in &analysis.build.pairs {
            writeln!(
                f,
                "{}\t{}\t{}\t{}",
                format_score(p.content_score),
                format_score(p.phrase_score),
                p.modifier_key,
                p.category
            )?;
        }
        f.flush()
    })()
    .map_err(io("scatter.tsv"))?;

    let path = dir.join("report.txt");
    fs::write(&path, text_report(analysis)).map_err(|e| Error::io(path, e))
}
