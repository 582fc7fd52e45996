//! Annotator responses, gold answers and their file formats.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{read_jsonl, Tuple4};
use crate::error::{Error, Result};
use crate::lexicon::{attach_path, normalize_surface, tsv_rows};

/// One annotator's best/worst choice for one tuple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub response_id: String,
    pub annotator_id: String,
    pub tuple_id: String,
    pub best: String,
    pub worst: String,
    pub unix_ms: i64,
}

impl Response {
    /// Checks `best != worst` and that both belong to `tuple`.
    pub fn check_against(&self, tuple: &Tuple4) -> Result<()> {
        check_choice(tuple, &self.best, &self.worst).map_err(|reason| Error::InvalidResponse {
            response_id: self.response_id.clone(),
            reason,
        })
    }
}

pub(crate) fn check_choice(tuple: &Tuple4, best: &str, worst: &str) -> std::result::Result<(), String> {
    if best == worst {
        return Err("best equals worst".into());
    }
    for (role, term) in [("best", best), ("worst", worst)] {
        if !tuple.contains(term) {
            return Err(format!(
                "{role} term {term:?} is not in tuple {}",
                tuple.tuple_id
            ));
        }
    }
    Ok(())
}

/// Lookup of tuples by id.
#[derive(Debug, Clone)]
pub struct TupleIndex<'a> {
    by_id: HashMap<&'a str, &'a Tuple4>,
}

impl<'a> TupleIndex<'a> {
    pub fn new(tuples: &'a [Tuple4]) -> Self {
        Self {
            by_id: tuples.iter().map(|t| (t.tuple_id.as_str(), t)).collect(),
        }
    }

    pub fn get(&self, tuple_id: &str) -> Option<&'a Tuple4> {
        self.by_id.get(tuple_id).copied()
    }

    pub fn resolve(&self, response: &Response) -> Result<&'a Tuple4> {
        self.get(&response.tuple_id)
            .ok_or_else(|| Error::UnknownTuple(response.tuple_id.clone()))
    }

    /// Resolves and checks a response in one step.
    pub fn checked(&self, response: &Response) -> Result<&'a Tuple4> {
        let tuple = self.resolve(response)?;
        response.check_against(tuple)?;
        Ok(tuple)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldAnswer {
    pub expected_best: String,
    pub expected_worst: String,
}

/// Known answers for check questions, keyed by tuple id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldKey {
    answers: BTreeMap<String, GoldAnswer>,
}

impl GoldKey {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tuple_id: impl Into<String>, best: &str, worst: &str) -> Result<()> {
        let tuple_id = tuple_id.into();
        if best == worst {
            return Err(Error::InvalidArgument(format!(
                "gold answer for {tuple_id} has best equal to worst"
            )));
        }
        self.answers.insert(
            tuple_id,
            GoldAnswer {
                expected_best: best.to_string(),
                expected_worst: worst.to_string(),
            },
        );
        Ok(())
    }

    pub fn get(&self, tuple_id: &str) -> Option<&GoldAnswer> {
        self.answers.get(tuple_id)
    }

    pub fn contains(&self, tuple_id: &str) -> bool {
        self.answers.contains_key(tuple_id)
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &GoldAnswer)> {
        self.answers.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Every gold tuple must exist and contain both expected answers.
    pub fn check_against(&self, tuples: &TupleIndex<'_>) -> Result<()> {
        for (id, answer) in &self.answers {
            let tuple = tuples.get(id).ok_or_else(|| Error::UnknownTuple(id.clone()))?;
            check_choice(tuple, &answer.expected_best, &answer.expected_worst).map_err(|reason| {
                Error::InvalidArgument(format!("gold answer for {id}: {reason}"))
            })?;
        }
        Ok(())
    }
}

pub fn load_gold(path: impl AsRef<Path>) -> Result<GoldKey> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_gold(BufReader::new(file)).map_err(|e| attach_path(e, path))
}

/// Three tab-separated columns: tuple_id, expected_best, expected_worst.
pub fn read_gold(reader: impl BufRead) -> Result<GoldKey> {
    let mut gold = GoldKey::new();
    for (line, cols) in tsv_rows(reader, 3)? {
        let best = normalize_surface(&cols[1]);
        let worst = normalize_surface(&cols[2]);
        gold.insert(cols[0].clone(), &best, &worst)
            .map_err(|e| Error::Format {
                line,
                message: e.to_string(),
            })?;
    }
    Ok(gold)
}

pub fn write_gold(gold: &GoldKey, out: &mut impl Write) -> std::io::Result<()> {
    for (id, a) in gold.iter() {
        writeln!(out, "{id}\t{}\t{}", a.expected_best, a.expected_worst)?;
    }
    Ok(())
}

pub fn load_responses(path: impl AsRef<Path>) -> Result<Vec<Response>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_responses(BufReader::new(file)).map_err(|e| attach_path(e, path))
}

pub fn read_responses(reader: impl BufRead) -> Result<Vec<Response>> {
    read_jsonl(reader)
}

pub fn save_responses(responses: &[Response], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_responses(responses, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_responses(responses: &[Response], out: &mut impl Write) -> std::io::Result<()> {
    for r in responses {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
