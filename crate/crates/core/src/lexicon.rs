//! Terms, the modifier inventory, phrase decomposition and lexicon files.

use std::collections::btree_map;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Inventory reconstructed from the modifiers discussed alongside the
/// published lexicon. Extend it by loading a custom TSV instead.
pub const BUILTIN_MODIFIERS: &str = include_str!("../data/modifiers.tsv");

/// Lowercases and collapses whitespace so that surfaces compare reliably.
pub fn normalize_surface(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub id: TermId,
    pub surface: String,
}

impl Term {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.surface.split(' ')
    }

    pub fn is_single_word(&self) -> bool {
        !self.surface.contains(' ')
    }
}

pub fn load_terms(path: impl AsRef<Path>) -> Result<Vec<Term>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_terms(BufReader::new(file)).map_err(|e| attach_path(e, path))
}

/// One term per line; blank lines are skipped and ids are assigned in file order.
pub fn read_terms(reader: impl BufRead) -> Result<Vec<Term>> {
    let mut terms = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<terms>", e))?;
        let surface = normalize_surface(&line);
        if surface.is_empty() {
            continue;
        }
        if !seen.insert(surface.clone()) {
            return Err(Error::DuplicateTerm {
                line: idx + 1,
                surface,
            });
        }
        terms.push(Term {
            id: TermId(terms.len()),
            surface,
        });
    }
    Ok(terms)
}

pub fn terms_from_surfaces<I, S>(surfaces: I) -> Vec<Term>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    surfaces
        .into_iter()
        .enumerate()
        .map(|(i, s)| Term {
            id: TermId(i),
            surface: normalize_surface(s.as_ref()),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModifierCategory {
    Negator,
    Modal,
    DegreeAdverb,
}

impl ModifierCategory {
    pub const ALL: [ModifierCategory; 3] = [
        ModifierCategory::Negator,
        ModifierCategory::Modal,
        ModifierCategory::DegreeAdverb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModifierCategory::Negator => "negator",
            ModifierCategory::Modal => "modal",
            ModifierCategory::DegreeAdverb => "degree_adverb",
        }
    }

    /// Lower value wins when a chain mixes categories.
    fn precedence(self) -> u8 {
        match self {
            ModifierCategory::Negator => 0,
            ModifierCategory::Modal => 1,
            ModifierCategory::DegreeAdverb => 2,
        }
    }
}

impl fmt::Display for ModifierCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModifierCategory {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "negator" => Ok(ModifierCategory::Negator),
            "modal" => Ok(ModifierCategory::Modal),
            "degree_adverb" => Ok(ModifierCategory::DegreeAdverb),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModifierEntry {
    pub surface: String,
    pub category: ModifierCategory,
}

impl ModifierEntry {
    pub fn new(surface: &str, category: ModifierCategory) -> Self {
        Self {
            surface: normalize_surface(surface),
            category,
        }
    }

    fn token_len(&self) -> usize {
        self.surface.split(' ').count()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ModifierInventory {
    entries: Vec<ModifierEntry>,
    by_surface: HashMap<String, usize>,
    longest: usize,
}

impl ModifierInventory {
    pub fn new(entries: Vec<ModifierEntry>) -> Result<Self> {
        let mut inv = ModifierInventory::default();
        for (i, entry) in entries.into_iter().enumerate() {
            inv.push(entry, i + 1)?;
        }
        Ok(inv)
    }

    pub fn builtin() -> Self {
        read_modifier_inventory(BUILTIN_MODIFIERS.as_bytes()).expect("builtin inventory is valid")
    }

    fn push(&mut self, entry: ModifierEntry, line: usize) -> Result<()> {
        if self.by_surface.contains_key(&entry.surface) {
            return Err(Error::DuplicateModifier {
                line,
                surface: entry.surface,
            });
        }
        self.longest = self.longest.max(entry.token_len());
        self.by_surface
            .insert(entry.surface.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[ModifierEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, surface: &str) -> Option<&ModifierEntry> {
        self.by_surface.get(surface).map(|&i| &self.entries[i])
    }

    /// Splits `phrase` into a modifier chain and a single content word.
    ///
    /// Modifiers are matched greedily from the left, longest first, always
    /// leaving at least one token for the content word. Returns `None` for
    /// single words and for phrases whose leading tokens are not fully
    /// covered by inventory entries.
    pub fn decompose(&self, phrase: &str) -> Option<PhraseDecomposition> {
        let tokens: Vec<&str> = phrase.split(' ').collect();
        if tokens.len() < 2 || tokens.iter().any(|t| t.is_empty()) {
            return None;
        }
        let mut chain = Vec::new();
        let mut pos = 0;
        while tokens.len() - pos > 1 {
            let max_len = self.longest.min(tokens.len() - pos - 1);
            let matched = (1..=max_len).rev().find_map(|len| {
                let candidate = tokens[pos..pos + len].join(" ");
                self.get(&candidate).map(|e| (len, e.clone()))
            });
            let (len, entry) = matched?;
            chain.push(entry);
            pos += len;
        }
        Some(PhraseDecomposition {
            modifier_chain: chain,
            content_word: tokens[pos].to_string(),
        })
    }
}

pub fn decompose(phrase: &Term, inventory: &ModifierInventory) -> Option<PhraseDecomposition> {
    inventory.decompose(&phrase.surface)
}

pub fn load_modifier_inventory(path: impl AsRef<Path>) -> Result<ModifierInventory> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_modifier_inventory(BufReader::new(file)).map_err(|e| attach_path(e, path))
}

/// Two tab-separated columns: surface, category.
pub fn read_modifier_inventory(reader: impl BufRead) -> Result<ModifierInventory> {
    let mut inv = ModifierInventory::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<modifiers>", e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(surface), Some(category), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::Format {
                line: line_no,
                message: "expected two tab-separated columns: surface, category".into(),
            });
        };
        let surface = normalize_surface(surface);
        if surface.is_empty() {
            return Err(Error::Format {
                line: line_no,
                message: "empty modifier surface".into(),
            });
        }
        let category = category
            .trim()
            .parse::<ModifierCategory>()
            .map_err(|value| Error::UnknownCategory {
                line: line_no,
                value,
            })?;
        inv.push(ModifierEntry { surface, category }, line_no)?;
    }
    Ok(inv)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseDecomposition {
    pub modifier_chain: Vec<ModifierEntry>,
    pub content_word: String,
}

impl PhraseDecomposition {
    /// The full chain joined by spaces, e.g. `would be very`.
    pub fn modifier_key(&self) -> String {
        self.modifier_chain
            .iter()
            .map(|m| m.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Category of the chain by precedence negator > modal > degree adverb.
    pub fn category(&self) -> ModifierCategory {
        self.modifier_chain
            .iter()
            .map(|m| m.category)
            .min_by_key(|c| c.precedence())
            .expect("decomposition always has at least one modifier")
    }

    pub fn surface(&self) -> String {
        format!("{} {}", self.modifier_key(), self.content_word)
    }
}

/// Term surface to sentiment score in [-1, 1], one entry per surface.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredLexicon {
    entries: BTreeMap<String, f64>,
}

impl ScoredLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, term: impl Into<String>, score: f64) -> Result<Option<f64>> {
        let term = term.into();
        if !(-1.0..=1.0).contains(&score) {
            return Err(Error::InvalidScore { term, value: score });
        }
        Ok(self.entries.insert(term, score))
    }

    pub fn get(&self, term: &str) -> Option<f64> {
        self.entries.get(term).copied()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.entries.contains_key(term)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Copy with every score rounded the way the lexicon file stores it.
    pub fn rounded(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), round_score(*v)))
                .collect(),
        }
    }
}

impl<'a> IntoIterator for &'a ScoredLexicon {
    type Item = (&'a String, &'a f64);
    type IntoIter = btree_map::Iter<'a, String, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

/// Three decimals, `-` sign, `.` separator; negative zero prints as `0.000`.
pub fn format_score(score: f64) -> String {
    let s = format!("{score:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

pub fn round_score(score: f64) -> f64 {
    format_score(score).parse().expect("formatted score parses")
}

pub fn save_lexicon(lex: &ScoredLexicon, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_lexicon(lex, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_lexicon(lex: &ScoredLexicon, out: &mut impl Write) -> std::io::Result<()> {
    for (term, score) in lex.iter() {
        writeln!(out, "{term}\t{}", format_score(score))?;
    }
    Ok(())
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<ScoredLexicon> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_lexicon(BufReader::new(file)).map_err(|e| attach_path(e, path))
}

pub fn read_lexicon(reader: impl BufRead) -> Result<ScoredLexicon> {
    let mut lex = ScoredLexicon::new();
    for (line_no, cols) in tsv_rows(reader, 2)? {
        let term = normalize_surface(&cols[0]);
        let value = parse_real(&cols[1], line_no)?;
        if !(-1.0..=1.0).contains(&value) {
            return Err(Error::ScoreOutOfRange {
                line: line_no,
                value,
            });
        }
        if lex.contains(&term) {
            return Err(Error::DuplicateTerm {
                line: line_no,
                surface: term,
            });
        }
        lex.entries.insert(term, value);
    }
    Ok(lex)
}

/// Reads non-blank rows with exactly `width` tab-separated columns.
pub(crate) fn tsv_rows(reader: impl BufRead, width: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<tsv>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(|c| c.trim().to_string()).collect();
        if cols.len() != width {
            return Err(Error::Format {
                line: idx + 1,
                message: format!("expected {width} tab-separated columns, found {}", cols.len()),
            });
        }
        rows.push((idx + 1, cols));
    }
    Ok(rows)
}

pub(crate) fn parse_real(raw: &str, line: usize) -> Result<f64> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Format {
            line,
            message: format!("not a finite number: {raw:?}"),
        }),
    }
}

pub(crate) fn attach_path(err: Error, path: &Path) -> Error {
    match err {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}
