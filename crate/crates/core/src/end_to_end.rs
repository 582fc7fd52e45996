//! Whole-pipeline tests across modules.

use std::collections::{BTreeMap, BTreeSet};

use crate::campaign::{Ack, Campaign, CampaignConfig};
use crate::design::{load_tuples, save_tuples};
use crate::lexicon::terms_from_surfaces;
use crate::response::{load_responses, save_responses, TupleIndex};
use crate::scoring::{score, split_half_reliability};
use crate::sim::{simulate, SimConfig};
use crate::stats::spearman;
use crate::{
    generate_design, load_lexicon, save_lexicon, validate_design, DesignConfig, Response, Term, Tuple4,
};

/// Every 4-subset of the terms, once.
fn complete_design(terms: &[Term]) -> Vec<Tuple4> {
    let n = terms.len();
    let mut tuples = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    tuples.push(Tuple4 {
                        tuple_id: format!("t{}", tuples.len()),
                        items: [a, b, c, d].map(|i| terms[i].surface.clone()),
                    });
                }
            }
        }
    }
    tuples
}

fn spaced_latents(terms: &[Term]) -> BTreeMap<String, f64> {
    // a fixed scramble so latent order differs from name order
    terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.surface.clone(), ((i * 7) % terms.len()) as f64 / terms.len() as f64 - 0.5))
        .collect()
}

#[test]
fn complete_design_recovers_latent_order_without_noise() {
    for n in [5, 8, 12] {
        let terms = terms_from_surfaces((0..n).map(|i| format!("w{i:02}")));
        let latent = spaced_latents(&terms);
        let tuples = complete_design(&terms);
        let responses = simulate(
            &tuples,
            &SimConfig {
                latent: latent.clone(),
                n_annotators: 10,
                noise_sigma: 0.0,
                seed: 1,
            },
        )
        .unwrap();
        let lex = score(&responses, &TupleIndex::new(&tuples)).unwrap();
        let (s, l): (Vec<f64>, Vec<f64>) = lex.iter().map(|(t, v)| (v, latent[t])).unzip();
        assert_eq!(spearman(&s, &l), Some(1.0), "{n} terms");
    }
}

#[test]
fn files_round_trip_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let terms = terms_from_surfaces((0..40).map(|i| format!("term {i}")));
    let tuples = generate_design(&terms, &DesignConfig::new(2, 3)).unwrap();
    let tuples_path = dir.path().join("tuples.jsonl");
    save_tuples(&tuples, &tuples_path).unwrap();
    let tuples = load_tuples(&tuples_path).unwrap();
    assert!(validate_design(&tuples, &terms, 2).is_valid());

    let latent = spaced_latents(&terms);
    let responses = simulate(
        &tuples,
        &SimConfig {
            latent,
            n_annotators: 6,
            noise_sigma: 0.2,
            seed: 9,
        },
    )
    .unwrap();
    let responses_path = dir.path().join("responses.jsonl");
    save_responses(&responses, &responses_path).unwrap();
    assert_eq!(load_responses(&responses_path).unwrap(), responses);

    let lex = score(&responses, &TupleIndex::new(&tuples)).unwrap();
    let lex_path = dir.path().join("lexicon.tsv");
    save_lexicon(&lex, &lex_path).unwrap();
    assert_eq!(load_lexicon(&lex_path).unwrap(), lex.rounded());
    assert_eq!(lex.len(), 40);
}

#[test]
fn campaign_log_feeds_the_batch_tools() {
    let dir = tempfile::tempdir().unwrap();
    let terms = terms_from_surfaces((0..24).map(|i| format!("w{i}")));
    let mut tuples = generate_design(&terms, &DesignConfig::new(2, 1)).unwrap();
    tuples.push(Tuple4 {
        tuple_id: "gold".into(),
        items: ["w0", "w1", "w2", "w3"].map(String::from),
    });
    let gold: BTreeSet<String> = ["gold".to_string()].into();
    let config = CampaignConfig {
        target: 4,
        gold_rate: 0.2,
        seed: 2,
        over_collect: false,
    };
    let campaign = Campaign::create(dir.path(), tuples.clone(), gold, config).unwrap();
    for a in 0..6 {
        let annotator = format!("a{a}");
        while let Some(task) = campaign.next_task(&annotator) {
            let ack = campaign
                .submit_response(&annotator, &task.tuple_id, &task.items[0], &task.items[3])
                .unwrap();
            assert!(matches!(ack, Ack::Recorded(_)));
        }
    }
    let progress = campaign.progress();
    assert_eq!(progress.fraction_complete, 1.0);

    let logged: Vec<Response> = load_responses(campaign.log_path()).unwrap();
    assert_eq!(logged, campaign.responses());
    let index = TupleIndex::new(&tuples);
    let lex = score(&logged, &index).unwrap();
    assert_eq!(lex.len(), 24);
    assert!(split_half_reliability(&logged, &index, 3, 0).is_ok());
}
