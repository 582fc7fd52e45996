//! Synthetic annotators.
//!
//! Each simulated annotator perceives an item as its latent score plus
//! Gaussian noise and picks the highest perceived item as best and the
//! lowest as worst. The noise for (annotator, tuple) comes from its own
//! ChaCha8 stream, so results do not depend on generation order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::design::Tuple4;
use crate::error::{Error, Result};
use crate::lexicon::{attach_path, normalize_surface, parse_real, tsv_rows};
use crate::response::Response;
use crate::rng;

/// First synthetic timestamp; each response adds one millisecond.
pub const SIM_EPOCH_MS: i64 = 1_451_606_400_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub latent: BTreeMap<String, f64>,
    pub n_annotators: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

pub fn annotator_id(index: usize) -> String {
    format!("sim{:02}", index + 1)
}

fn stream_id(annotator: usize, tuple: usize) -> u64 {
    ((annotator as u64) << 40) | tuple as u64
}

/// Index of the first maximum and of the first minimum among the other items.
fn extremes(perceived: &[f64; 4]) -> (usize, usize) {
    let mut best = 0;
    for k in 1..4 {
        if perceived[k] > perceived[best] {
            best = k;
        }
    }
    let mut worst = usize::from(best == 0);
    for k in 0..4 {
        if k != best && perceived[k] < perceived[worst] {
            worst = k;
        }
    }
    (best, worst)
}

/// One response per (tuple, annotator), tuple-major.
pub fn simulate(tuples: &[Tuple4], config: &SimConfig) -> Result<Vec<Response>> {
    if config.n_annotators == 0 {
        return Err(Error::InvalidArgument("need at least one annotator".into()));
    }
    if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be a finite non-negative number, got {}",
            config.noise_sigma
        )));
    }
    let latents: Vec<[f64; 4]> = tuples
        .iter()
        .map(|t| {
            let mut values = [0.0; 4];
            for (v, item) in values.iter_mut().zip(&t.items) {
                *v = *config
                    .latent
                    .get(item)
                    .ok_or_else(|| Error::MissingLatent(item.clone()))?;
            }
            Ok(values)
        })
        .collect::<Result<_>>()?;

    let total = tuples.len() * config.n_annotators;
    let width = total.to_string().len();
    let mut responses = Vec::with_capacity(total);
    for (ti, (tuple, base)) in tuples.iter().zip(&latents).enumerate() {
        for ai in 0..config.n_annotators {
            let mut rng = rng::stream(config.seed, stream_id(ai, ti));
            let mut perceived = *base;
            for v in &mut perceived {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += config.noise_sigma * z;
            }
            let (best, worst) = extremes(&perceived);
            let n = responses.len();
            responses.push(Response {
                response_id: format!("r{:0width$}", n + 1),
                annotator_id: annotator_id(ai),
                tuple_id: tuple.tuple_id.clone(),
                best: tuple.items[best].clone(),
                worst: tuple.items[worst].clone(),
                unix_ms: SIM_EPOCH_MS + n as i64,
            });
        }
    }
    Ok(responses)
}

pub fn load_latent(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_latent(BufReader::new(file)).map_err(|e| attach_path(e, path))
}

/// Two tab-separated columns: term, latent score (any finite real).
pub fn read_latent(reader: impl BufRead) -> Result<BTreeMap<String, f64>> {
    let mut latent = BTreeMap::new();
    for (line, cols) in tsv_rows(reader, 2)? {
        let term = normalize_surface(&cols[0]);
        let value = parse_real(&cols[1], line)?;
        if latent.insert(term.clone(), value).is_some() {
            return Err(Error::DuplicateTerm {
                line,
                surface: term,
            });
        }
    }
    Ok(latent)
}
