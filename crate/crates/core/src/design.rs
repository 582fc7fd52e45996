//! Randomized 4-tuple designs for best-worst annotation.
//!
//! A design of `factor * n` tuples over `n` terms is built from `4 * factor`
//! concatenated shuffles of the term list cut into chunks of four, so every
//! term starts out in exactly `4 * factor` tuples. A seeded local search then
//! swaps single items between tuples. Swaps preserve per-term counts, and the
//! search removes repeated items within a tuple, repeated tuple sets and
//! term pairs that co-occur more often than the configured cap, while
//! spreading pair co-occurrences as evenly as it can.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{attach_path, Term};
use crate::rng;

pub const DEFAULT_PAIR_CAP: u32 = 2;

/// One annotation question: four term surfaces in presentation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tuple4 {
    pub tuple_id: String,
    pub items: [String; 4],
}

impl Tuple4 {
    pub fn contains(&self, surface: &str) -> bool {
        self.items.iter().any(|i| i == surface)
    }

    pub fn has_repeated_item(&self) -> bool {
        (0..4).any(|k| (k + 1..4).any(|l| self.items[k] == self.items[l]))
    }

    fn sorted_items(&self) -> [&str; 4] {
        let mut s = [
            self.items[0].as_str(),
            self.items[1].as_str(),
            self.items[2].as_str(),
            self.items[3].as_str(),
        ];
        s.sort_unstable();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignConfig {
    pub factor: usize,
    pub seed: u64,
    pub pair_cap: u32,
}

impl DesignConfig {
    pub fn new(factor: usize, seed: u64) -> Self {
        Self {
            factor,
            seed,
            pair_cap: DEFAULT_PAIR_CAP,
        }
    }

    pub fn with_pair_cap(mut self, pair_cap: u32) -> Self {
        self.pair_cap = pair_cap;
        self
    }
}

fn choose(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Smallest maximum pair co-occurrence any design of this size can have.
pub fn pair_cap_lower_bound(n_terms: usize, factor: usize) -> u32 {
    if n_terms < 2 {
        return 0;
    }
    let n = n_terms as u128;
    let f = factor as u128;
    let by_total = (6 * f * n).div_ceil(choose(n, 2));
    let by_term = (12 * f).div_ceil(n - 1);
    by_total.max(by_term) as u32
}

fn check_feasible(n: usize, config: &DesignConfig) -> Result<()> {
    if config.factor == 0 {
        return Err(Error::DesignInfeasible("factor must be at least 1".into()));
    }
    if n < 4 {
        return Err(Error::DesignInfeasible(format!(
            "no repeated terms within a tuple: need at least 4 distinct terms, got {n}"
        )));
    }
    let wanted = (config.factor as u128) * (n as u128);
    let available = choose(n as u128, 4);
    if available < wanted {
        return Err(Error::DesignInfeasible(format!(
            "no two tuples with the same four terms: {n} terms admit only {available} distinct 4-sets, \
             {wanted} tuples requested"
        )));
    }
    let bound = pair_cap_lower_bound(n, config.factor);
    if bound > config.pair_cap {
        return Err(Error::DesignInfeasible(format!(
            "pair co-occurrence cap {}: {n} terms with factor {} force some pair into at least {bound} tuples",
            config.pair_cap, config.factor
        )));
    }
    Ok(())
}

/// Builds `factor * terms.len()` tuples; deterministic in (terms, factor, seed).
pub fn generate_design(terms: &[Term], config: &DesignConfig) -> Result<Vec<Tuple4>> {
    let n = terms.len();
    check_feasible(n, config)?;

    let mut rng = rng::seeded(config.seed);
    let mut sequence = Vec::with_capacity(4 * config.factor * n);
    let mut order: Vec<u32> = (0..n as u32).collect();
    for _ in 0..4 * config.factor {
        order.shuffle(&mut rng);
        sequence.extend_from_slice(&order);
    }
    let blocks: Vec<[u32; 4]> = sequence
        .chunks_exact(4)
        .map(|c| [c[0], c[1], c[2], c[3]])
        .collect();

    let mut search = SwapSearch::new(blocks, config.pair_cap);
    search.repair(&mut rng)?;
    search.polish(&mut rng);

    let width = (n * config.factor).to_string().len();
    let tuples = search
        .blocks
        .into_iter()
        .enumerate()
        .map(|(i, mut block)| {
            block.shuffle(&mut rng);
            Tuple4 {
                tuple_id: format!("t{:0width$}", i + 1),
                items: block.map(|t| terms[t as usize].surface.clone()),
            }
        })
        .collect();
    Ok(tuples)
}

const HARD: i64 = 1_000_000;
const PROPOSALS_PER_TUPLE: usize = 64;
const MAX_REPAIR_ROUNDS: usize = 2_000;

type Pair = (u32, u32);

fn pair(a: u32, b: u32) -> Pair {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn block_pairs(block: &[u32; 4]) -> impl Iterator<Item = Pair> + '_ {
    (0..4).flat_map(move |k| {
        (k + 1..4)
            .filter(move |&l| block[k] != block[l])
            .map(move |l| pair(block[k], block[l]))
    })
}

fn repeats(block: &[u32; 4]) -> i64 {
    (0..4)
        .map(|k| (k + 1..4).filter(|&l| block[k] == block[l]).count() as i64)
        .sum()
}

fn sorted(block: &[u32; 4]) -> [u32; 4] {
    let mut s = *block;
    s.sort_unstable();
    s
}

struct SwapSearch {
    blocks: Vec<[u32; 4]>,
    pair_counts: HashMap<Pair, u32>,
    set_counts: HashMap<[u32; 4], u32>,
    cap: u32,
}

impl SwapSearch {
    fn new(blocks: Vec<[u32; 4]>, cap: u32) -> Self {
        let mut s = SwapSearch {
            blocks: Vec::new(),
            pair_counts: HashMap::new(),
            set_counts: HashMap::new(),
            cap,
        };
        for b in &blocks {
            s.add(b);
        }
        s.blocks = blocks;
        s
    }

    fn add(&mut self, block: &[u32; 4]) {
        for p in block_pairs(block) {
            *self.pair_counts.entry(p).or_insert(0) += 1;
        }
        *self.set_counts.entry(sorted(block)).or_insert(0) += 1;
    }

    fn remove(&mut self, block: &[u32; 4]) {
        for p in block_pairs(block) {
            let c = self.pair_counts.get_mut(&p).expect("pair counted");
            *c -= 1;
            if *c == 0 {
                self.pair_counts.remove(&p);
            }
        }
        let key = sorted(block);
        let c = self.set_counts.get_mut(&key).expect("set counted");
        *c -= 1;
        if *c == 0 {
            self.set_counts.remove(&key);
        }
    }

    fn pair_count(&self, p: &Pair) -> u32 {
        self.pair_counts.get(p).copied().unwrap_or(0)
    }

    fn pair_cost(&self, p: &Pair) -> i64 {
        let c = i64::from(self.pair_count(p));
        HARD * (c - i64::from(self.cap)).max(0) + c * (c - 1) / 2
    }

    fn set_cost(&self, key: &[u32; 4]) -> i64 {
        HARD * (i64::from(self.set_counts.get(key).copied().unwrap_or(0)) - 1).max(0)
    }

    fn is_bad(&self, t: usize) -> bool {
        let block = &self.blocks[t];
        repeats(block) > 0
            || self.set_counts[&sorted(block)] > 1
            || block_pairs(block).any(|p| self.pair_count(&p) > self.cap)
    }

    fn has_repeated_pair(&self, t: usize) -> bool {
        block_pairs(&self.blocks[t]).any(|p| self.pair_count(&p) > 1)
    }

    /// Slots implicated in a violation of tuple `t`; all slots when the whole set repeats.
    fn offending_slots(&self, t: usize) -> Vec<usize> {
        let block = &self.blocks[t];
        if self.set_counts[&sorted(block)] > 1 {
            return vec![0, 1, 2, 3];
        }
        (0..4)
            .filter(|&k| {
                (0..4).any(|l| {
                    l != k
                        && (block[k] == block[l]
                            || self.pair_count(&pair(block[k], block[l])) > self.cap)
                })
            })
            .collect()
    }

    fn swap(&mut self, a: usize, i: usize, b: usize, j: usize) {
        let (old_a, old_b) = (self.blocks[a], self.blocks[b]);
        self.remove(&old_a);
        self.remove(&old_b);
        let mut new_a = old_a;
        let mut new_b = old_b;
        std::mem::swap(&mut new_a[i], &mut new_b[j]);
        self.add(&new_a);
        self.add(&new_b);
        self.blocks[a] = new_a;
        self.blocks[b] = new_b;
    }

    fn local_cost(&self, pairs: &[Pair], sets: &[[u32; 4]], a: usize, b: usize) -> i64 {
        pairs.iter().map(|p| self.pair_cost(p)).sum::<i64>()
            + sets.iter().map(|s| self.set_cost(s)).sum::<i64>()
            + HARD * (repeats(&self.blocks[a]) + repeats(&self.blocks[b]))
    }

    /// Applies the swap if it does not increase the cost; returns the change applied.
    fn try_swap(&mut self, a: usize, i: usize, b: usize, j: usize, allow_equal: bool) -> Option<i64> {
        if a == b || self.blocks[a][i] == self.blocks[b][j] {
            return None;
        }
        let (old_a, old_b) = (self.blocks[a], self.blocks[b]);
        let mut new_a = old_a;
        let mut new_b = old_b;
        std::mem::swap(&mut new_a[i], &mut new_b[j]);

        let mut pairs: Vec<Pair> = [old_a, old_b, new_a, new_b]
            .iter()
            .flat_map(|blk| block_pairs(blk).collect::<Vec<_>>())
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let mut sets: Vec<[u32; 4]> = [old_a, old_b, new_a, new_b].iter().map(sorted).collect();
        sets.sort_unstable();
        sets.dedup();

        let before = self.local_cost(&pairs, &sets, a, b);
        self.swap(a, i, b, j);
        let after = self.local_cost(&pairs, &sets, a, b);
        let delta = after - before;
        if delta < 0 || (allow_equal && delta == 0) {
            Some(delta)
        } else {
            self.swap(a, i, b, j);
            None
        }
    }

    fn repair(&mut self, rng: &mut rng::Rng) -> Result<()> {
        let n = self.blocks.len();
        for _ in 0..MAX_REPAIR_ROUNDS {
            let bad: Vec<usize> = (0..n).filter(|&t| self.is_bad(t)).collect();
            if bad.is_empty() {
                return Ok(());
            }
            for a in bad {
                for _ in 0..PROPOSALS_PER_TUPLE {
                    if !self.is_bad(a) {
                        break;
                    }
                    let slots = self.offending_slots(a);
                    let i = slots[rng.random_range(0..slots.len())];
                    let b = rng.random_range(0..n);
                    let j = rng.random_range(0..4);
                    self.try_swap(a, i, b, j, true);
                }
            }
        }
        let remaining = (0..n).filter(|&t| self.is_bad(t)).count();
        Err(Error::DesignInfeasible(format!(
            "local search left {remaining} tuples violating the duplicate or pair-cap ({}) criteria",
            self.cap
        )))
    }

    /// Lowers repeated pair co-occurrences without breaking any hard criterion.
    fn polish(&mut self, rng: &mut rng::Rng) {
        let n = self.blocks.len();
        for _ in 0..8 {
            let targets: Vec<usize> = (0..n).filter(|&t| self.has_repeated_pair(t)).collect();
            if targets.is_empty() {
                return;
            }
            let mut improved = false;
            for a in targets {
                for _ in 0..PROPOSALS_PER_TUPLE / 4 {
                    let i = rng.random_range(0..4);
                    let b = rng.random_range(0..n);
                    let j = rng.random_range(0..4);
                    if self.try_swap(a, i, b, j, false).is_some() {
                        improved = true;
                    }
                }
            }
            if !improved {
                return;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    RepeatedItem { tuple_id: String },
    DuplicateSet { tuple_id: String, first: String },
    PairCapExceeded { a: String, b: String, count: u32 },
    UnknownItem { tuple_id: String, item: String },
    UnbalancedCounts { min: usize, max: usize },
    DuplicateTupleId { tuple_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignReport {
    pub n_terms: usize,
    pub n_tuples: usize,
    pub per_term_counts: BTreeMap<String, usize>,
    pub max_pair_cooccurrence: u32,
    pub duplicate_tuple_sets: usize,
    pub within_tuple_duplicates: usize,
    /// Per-term counts differ by exactly one somewhere.
    pub count_slack: bool,
    pub violations: Vec<Violation>,
}

impl DesignReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count_range(&self) -> (usize, usize) {
        let min = self.per_term_counts.values().copied().min().unwrap_or(0);
        let max = self.per_term_counts.values().copied().max().unwrap_or(0);
        (min, max)
    }
}

/// Recounts a design from scratch and lists every criterion it breaks.
pub fn validate_design(tuples: &[Tuple4], terms: &[Term], cap: u32) -> DesignReport {
    let mut violations = Vec::new();
    let mut per_term_counts: BTreeMap<String, usize> =
        terms.iter().map(|t| (t.surface.clone(), 0)).collect();
    let mut pair_counts: BTreeMap<(&str, &str), u32> = BTreeMap::new();
    let mut first_with_set: HashMap<[&str; 4], &str> = HashMap::new();
    let mut ids: HashMap<&str, ()> = HashMap::new();
    let mut duplicate_tuple_sets = 0;
    let mut within_tuple_duplicates = 0;

    for tuple in tuples {
        if ids.insert(&tuple.tuple_id, ()).is_some() {
            violations.push(Violation::DuplicateTupleId {
                tuple_id: tuple.tuple_id.clone(),
            });
        }
        for item in &tuple.items {
            match per_term_counts.get_mut(item) {
                Some(c) => *c += 1,
                None => {
                    violations.push(Violation::UnknownItem {
                        tuple_id: tuple.tuple_id.clone(),
                        item: item.clone(),
                    });
                    per_term_counts.insert(item.clone(), 1);
                }
            }
        }
        if tuple.has_repeated_item() {
            within_tuple_duplicates += 1;
            violations.push(Violation::RepeatedItem {
                tuple_id: tuple.tuple_id.clone(),
            });
        }
        let set = tuple.sorted_items();
        if let Some(first) = first_with_set.get(&set) {
            duplicate_tuple_sets += 1;
            violations.push(Violation::DuplicateSet {
                tuple_id: tuple.tuple_id.clone(),
                first: first.to_string(),
            });
        } else {
            first_with_set.insert(set, &tuple.tuple_id);
        }
        let mut distinct = set.to_vec();
        distinct.dedup();
        for k in 0..distinct.len() {
            for l in k + 1..distinct.len() {
                *pair_counts.entry((distinct[k], distinct[l])).or_insert(0) += 1;
            }
        }
    }

    let max_pair_cooccurrence = pair_counts.values().copied().max().unwrap_or(0);
    for (&(a, b), &count) in &pair_counts {
        if count > cap {
            violations.push(Violation::PairCapExceeded {
                a: a.to_string(),
                b: b.to_string(),
                count,
            });
        }
    }

    let min = per_term_counts.values().copied().min().unwrap_or(0);
    let max = per_term_counts.values().copied().max().unwrap_or(0);
    if max - min > 1 {
        violations.push(Violation::UnbalancedCounts { min, max });
    }

    DesignReport {
        n_terms: terms.len(),
        n_tuples: tuples.len(),
        per_term_counts,
        max_pair_cooccurrence,
        duplicate_tuple_sets,
        within_tuple_duplicates,
        count_slack: max - min == 1,
        violations,
    }
}

pub fn save_tuples(tuples: &[Tuple4], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_tuples(tuples, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_tuples(tuples: &[Tuple4], out: &mut impl Write) -> std::io::Result<()> {
    for t in tuples {
        serde_json::to_writer(&mut *out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_tuples(path: impl AsRef<Path>) -> Result<Vec<Tuple4>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tuples(BufReader::new(file)).map_err(|e| attach_path(e, path))
}

pub fn read_tuples(reader: impl BufRead) -> Result<Vec<Tuple4>> {
    read_jsonl(reader)
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Format {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}
