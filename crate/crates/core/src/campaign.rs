//! Durable state of an annotation campaign.
//!
//! A campaign directory holds `manifest.json` (tuples, gold tuple ids and
//! settings) and `responses.jsonl`, an append-only log with one response per
//! line. Everything else is rebuilt by replaying the log on open.
//!
//! Appends happen under a single lock and are flushed and synced before a
//! submission is acknowledged. Pending assignments live in memory only: after
//! a restart, tasks that were served but never answered are free again.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::design::Tuple4;
use crate::error::{Error, Result};
use crate::response::{check_choice, Response};
use crate::rng::{mix, stable_hash};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOG_FILE: &str = "responses.jsonl";
pub const DEFAULT_TARGET: u32 = 10;
pub const DEFAULT_GOLD_RATE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    /// Responses wanted per regular tuple.
    pub target: u32,
    /// Probability that a served task is a gold tuple.
    pub gold_rate: f64,
    pub seed: u64,
    /// Keep assigning tuples that already reached the target.
    #[serde(default)]
    pub over_collect: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            target: DEFAULT_TARGET,
            gold_rate: DEFAULT_GOLD_RATE,
            seed: 0,
            over_collect: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    config: CampaignConfig,
    tuples: Vec<Tuple4>,
    gold_tuple_ids: BTreeSet<String>,
}

/// A task as handed to a client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnnotationTask {
    pub tuple_id: String,
    pub items: [String; 4],
    #[serde(skip)]
    pub is_gold_hidden: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ack {
    Recorded(Response),
    /// The (annotator, tuple) pair was already answered; holds the first record.
    Duplicate(Response),
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Progress {
    pub tuples_total: usize,
    pub tuples_complete: usize,
    /// Responses to regular tuples; gold responses are not counted.
    pub responses_total: usize,
    pub fraction_complete: f64,
    pub per_tuple: BTreeMap<String, u32>,
    pub per_annotator: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServedTask {
    pub annotator_id: String,
    pub tuple_id: String,
    pub gold: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LogRecord {
    #[serde(flatten)]
    response: Response,
    gold: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Assigned,
    Completed(usize),
}

#[derive(Debug, Default)]
struct AnnotatorState {
    tasks: HashMap<usize, Status>,
    served: u64,
    completed: u32,
}

#[derive(Debug)]
struct State {
    log: File,
    records: Vec<LogRecord>,
    completed: Vec<u32>,
    in_flight: Vec<u32>,
    annotators: BTreeMap<String, AnnotatorState>,
    served: Vec<ServedTask>,
}

#[derive(Debug)]
pub struct Campaign {
    dir: PathBuf,
    config: CampaignConfig,
    tuples: Vec<Tuple4>,
    is_gold: Vec<bool>,
    tuple_hash: Vec<u64>,
    by_id: HashMap<String, usize>,
    n_regular: usize,
    state: Mutex<State>,
}

fn sync_dir(dir: &Path) -> Result<()> {
    File::open(dir)
        .and_then(|d| d.sync_all())
        .map_err(|e| Error::io(dir, e))
}

fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

fn unit_interval(x: u64) -> f64 {
    (x >> 11) as f64 / (1u64 << 53) as f64
}

impl Campaign {
    /// Starts a new campaign in `dir`. Fails if `dir` already holds one.
    pub fn create(
        dir: impl AsRef<Path>,
        tuples: Vec<Tuple4>,
        gold_tuple_ids: BTreeSet<String>,
        config: CampaignConfig,
    ) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = Manifest {
            config,
            tuples,
            gold_tuple_ids,
        };
        check_manifest(&manifest)?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        if path.exists() {
            return Err(Error::Campaign(format!(
                "{} already holds a campaign",
                dir.display()
            )));
        }
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n")
            .and_then(|_| f.sync_all())
            .map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        sync_dir(dir)?;
        Self::from_manifest(dir, manifest)
    }

    /// Reopens an existing campaign and replays its response log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::Campaign(format!(
                "no campaign in {}",
                dir.display()
            )));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        check_manifest(&manifest)?;
        Self::from_manifest(dir, manifest)
    }

    /// Opens the campaign in `dir`, creating it if absent. An existing
    /// campaign must have been created with the same tuples, gold ids and
    /// settings.
    pub fn open_or_create(
        dir: impl AsRef<Path>,
        tuples: Vec<Tuple4>,
        gold_tuple_ids: BTreeSet<String>,
        config: CampaignConfig,
    ) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.join(MANIFEST_FILE).exists() {
            return Self::create(dir, tuples, gold_tuple_ids, config);
        }
        let campaign = Self::open(dir)?;
        let gold: BTreeSet<String> = campaign
            .tuples
            .iter()
            .zip(&campaign.is_gold)
            .filter(|(_, g)| **g)
            .map(|(t, _)| t.tuple_id.clone())
            .collect();
        if campaign.tuples != tuples || gold != gold_tuple_ids || campaign.config != config {
            return Err(Error::Campaign(format!(
                "{} holds a campaign with different tuples or settings",
                dir.display()
            )));
        }
        Ok(campaign)
    }

    fn from_manifest(dir: &Path, manifest: Manifest) -> Result<Self> {
        let Manifest {
            config,
            tuples,
            gold_tuple_ids,
        } = manifest;
        let is_gold: Vec<bool> = tuples
            .iter()
            .map(|t| gold_tuple_ids.contains(&t.tuple_id))
            .collect();
        let by_id: HashMap<String, usize> = tuples
            .iter()
            .enumerate()
            .map(|(i, t)| (t.tuple_id.clone(), i))
            .collect();
        let tuple_hash = tuples
            .iter()
            .map(|t| stable_hash(t.tuple_id.as_bytes()))
            .collect();
        let n_regular = is_gold.iter().filter(|g| !**g).count();

        let log_path = dir.join(LOG_FILE);
        let mut log = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        let records = replay_log(&mut log, &log_path)?;
        sync_dir(dir)?;

        let mut state = State {
            log,
            records: Vec::with_capacity(records.len()),
            completed: vec![0; tuples.len()],
            in_flight: vec![0; tuples.len()],
            annotators: BTreeMap::new(),
            served: Vec::new(),
        };
        let campaign_ids = &by_id;
        for (line, record) in records.into_iter().enumerate() {
            let r = &record.response;
            let corrupt = |reason: String| {
                Error::Campaign(format!("{} line {}: {reason}", log_path.display(), line + 1))
            };
            let &idx = campaign_ids
                .get(&r.tuple_id)
                .ok_or_else(|| corrupt(format!("unknown tuple {}", r.tuple_id)))?;
            check_choice(&tuples[idx], &r.best, &r.worst).map_err(&corrupt)?;
            if record.gold != is_gold[idx] {
                return Err(corrupt("gold flag disagrees with the manifest".into()));
            }
            let ann = state.annotators.entry(r.annotator_id.clone()).or_default();
            if ann.tasks.insert(idx, Status::Completed(state.records.len())).is_some() {
                return Err(corrupt(format!(
                    "second response by {} to {}",
                    r.annotator_id, r.tuple_id
                )));
            }
            ann.served += 1;
            ann.completed += 1;
            state.completed[idx] += 1;
            state.records.push(record);
        }

        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            tuples,
            is_gold,
            tuple_hash,
            by_id,
            n_regular,
            state: Mutex::new(state),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn pick(&self, state: &State, annotator: &AnnotatorState, salt: u64, gold: bool) -> Option<usize> {
        let target = self.config.target;
        (0..self.tuples.len())
            .filter(|&i| self.is_gold[i] == gold && !annotator.tasks.contains_key(&i))
            .filter_map(|i| {
                let load = state.completed[i] + state.in_flight[i];
                if !gold && !self.config.over_collect && load >= target {
                    return None;
                }
                let load = if gold { 0 } else { load };
                Some(((load, mix(salt ^ self.tuple_hash[i])), i))
            })
            .min()
            .map(|(_, i)| i)
    }

    /// Next tuple for `annotator_id`, or `None` when no regular work is left.
    ///
    /// Regular tuples are served least-loaded first, where load counts both
    /// completed and outstanding assignments, so concurrent annotators never
    /// push a tuple past its target. Ties are broken by a hash of the seed,
    /// annotator and tuple. Gold tuples are interleaved with probability
    /// `gold_rate`, decided from the seed, the annotator and how many tasks
    /// they were served before.
    pub fn next_task(&self, annotator_id: &str) -> Option<AnnotationTask> {
        let mut state = self.lock();
        let salt = mix(self.config.seed ^ stable_hash(annotator_id.as_bytes()));
        let ann = state.annotators.remove(annotator_id).unwrap_or_default();

        let regular = self.pick(&state, &ann, salt, false);
        let chosen = regular.map(|r| {
            let draw = unit_interval(mix(salt.wrapping_add(mix(ann.served))));
            if draw < self.config.gold_rate {
                self.pick(&state, &ann, salt, true).unwrap_or(r)
            } else {
                r
            }
        });

        let mut ann = ann;
        let task = chosen.map(|i| {
            ann.tasks.insert(i, Status::Assigned);
            ann.served += 1;
            state.in_flight[i] += 1;
            state.served.push(ServedTask {
                annotator_id: annotator_id.to_string(),
                tuple_id: self.tuples[i].tuple_id.clone(),
                gold: self.is_gold[i],
            });
            AnnotationTask {
                tuple_id: self.tuples[i].tuple_id.clone(),
                items: self.tuples[i].items.clone(),
                is_gold_hidden: self.is_gold[i],
            }
        });
        if !ann.tasks.is_empty() || ann.served > 0 {
            state.annotators.insert(annotator_id.to_string(), ann);
        }
        task
    }

    /// Validates and durably records a submission.
    ///
    /// `Err` is returned only for I/O failures; the record is then not
    /// acknowledged and the assignment stays open.
    pub fn submit_response(&self, annotator_id: &str, tuple_id: &str, best: &str, worst: &str) -> Result<Ack> {
        let Some(&idx) = self.by_id.get(tuple_id) else {
            return Ok(Ack::Rejected(format!("unknown tuple {tuple_id}")));
        };
        let mut guard = self.lock();
        let state = &mut *guard;
        let status = state
            .annotators
            .get(annotator_id)
            .and_then(|a| a.tasks.get(&idx).copied());
        match status {
            None => {
                return Ok(Ack::Rejected(format!(
                    "tuple {tuple_id} is not assigned to {annotator_id}"
                )))
            }
            Some(Status::Completed(k)) => return Ok(Ack::Duplicate(state.records[k].response.clone())),
            Some(Status::Assigned) => {}
        }
        if let Err(reason) = check_choice(&self.tuples[idx], best, worst) {
            return Ok(Ack::Rejected(reason));
        }

        let record = LogRecord {
            response: Response {
                response_id: format!("r{:08}", state.records.len() + 1),
                annotator_id: annotator_id.to_string(),
                tuple_id: tuple_id.to_string(),
                best: best.to_string(),
                worst: worst.to_string(),
                unix_ms: now_ms(),
            },
            gold: self.is_gold[idx],
        };
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        let log_path = self.log_path();
        if let Err(e) = state.log.write_all(&line).and_then(|_| state.log.sync_data()) {
            // drop whatever part of the line reached the file
            let _ = truncate_partial_tail(&mut state.log);
            return Err(Error::io(log_path, e));
        }

        let k = state.records.len();
        let ann = state.annotators.get_mut(annotator_id).expect("assigned annotator");
        ann.tasks.insert(idx, Status::Completed(k));
        ann.completed += 1;
        state.in_flight[idx] -= 1;
        state.completed[idx] += 1;
        state.records.push(record.clone());
        Ok(Ack::Recorded(record.response))
    }

    pub fn progress(&self) -> Progress {
        let state = self.lock();
        let target = self.config.target;
        let mut per_tuple = BTreeMap::new();
        let (mut complete, mut responses, mut capped) = (0, 0usize, 0u64);
        for (i, t) in self.tuples.iter().enumerate() {
            if self.is_gold[i] {
                continue;
            }
            let c = state.completed[i];
            per_tuple.insert(t.tuple_id.clone(), c);
            responses += c as usize;
            capped += u64::from(c.min(target));
            if c >= target {
                complete += 1;
            }
        }
        let denom = self.n_regular as f64 * f64::from(target);
        Progress {
            tuples_total: self.n_regular,
            tuples_complete: complete,
            responses_total: responses,
            fraction_complete: if denom > 0.0 { capped as f64 / denom } else { 1.0 },
            per_tuple,
            per_annotator: state
                .annotators
                .iter()
                .map(|(a, s)| (a.clone(), s.completed))
                .collect(),
        }
    }

    /// Every recorded response, in log order.
    pub fn responses(&self) -> Vec<Response> {
        self.lock().records.iter().map(|r| r.response.clone()).collect()
    }

    /// Tasks served since this process opened the campaign.
    pub fn served_tasks(&self) -> Vec<ServedTask> {
        self.lock().served.clone()
    }
}

fn check_manifest(m: &Manifest) -> Result<()> {
    let c = &m.config;
    if c.target == 0 {
        return Err(Error::Campaign("target must be at least one".into()));
    }
    if !(0.0..=1.0).contains(&c.gold_rate) {
        return Err(Error::Campaign(format!("gold rate {} is not in [0, 1]", c.gold_rate)));
    }
    let mut ids = BTreeSet::new();
    for t in &m.tuples {
        if !ids.insert(t.tuple_id.as_str()) {
            return Err(Error::Campaign(format!("duplicate tuple id {}", t.tuple_id)));
        }
    }
    if let Some(missing) = m.gold_tuple_ids.iter().find(|id| !ids.contains(id.as_str())) {
        return Err(Error::Campaign(format!("gold tuple {missing} is not among the tuples")));
    }
    if m.tuples.len() == m.gold_tuple_ids.len() {
        return Err(Error::Campaign("campaign has no regular tuples".into()));
    }
    Ok(())
}

/// Cuts the file back to its last newline. Returns the number of bytes dropped.
fn truncate_partial_tail(file: &mut File) -> std::io::Result<u64> {
    let len = file.seek(SeekFrom::End(0))?;
    let mut pos = len;
    let mut buf = [0u8; 4096];
    while pos > 0 {
        let start = pos.saturating_sub(buf.len() as u64);
        let chunk = &mut buf[..(pos - start) as usize];
        file.seek(SeekFrom::Start(start))?;
        file.read_exact(chunk)?;
        if let Some(nl) = chunk.iter().rposition(|&b| b == b'\n') {
            pos = start + nl as u64 + 1;
            break;
        }
        pos = start;
    }
    if pos < len {
        file.set_len(pos)?;
        file.sync_data()?;
    }
    file.seek(SeekFrom::End(0))?;
    Ok(len - pos)
}

fn replay_log(file: &mut File, path: &Path) -> Result<Vec<LogRecord>> {
    truncate_partial_tail(file).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    file.seek(SeekFrom::Start(0))
        .and_then(|_| file.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    file.seek(SeekFrom::End(0)).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| {
                Error::Campaign(format!("{} line {}: {e}", path.display(), n + 1))
            })
        })
        .collect()
}
