use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use bwslex_cli::server;
use bwslex_core::campaign::{Campaign, CampaignConfig};
use bwslex_core::composition::{emit_report, CompositionAnalysis, ImpactConfig};
use bwslex_core::design::{load_tuples, pair_cap_lower_bound, save_tuples, DEFAULT_PAIR_CAP};
use bwslex_core::lpd::{agreement_curve, infer_pairs, least_perceptible_difference, CurveConfig};
use bwslex_core::response::{load_gold, load_responses, save_responses, TupleIndex};
use bwslex_core::scoring::{self, filter_annotators, split_half_reliability};
use bwslex_core::sim::{load_latent, simulate, SimConfig};
use bwslex_core::{
    generate_design, load_lexicon, load_modifier_inventory, load_terms, save_lexicon, validate_design,
    DesignConfig, GoldKey, ModifierInventory, Response, Tuple4,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bwslex", version, about = "Best-worst scaling tools for sentiment lexicons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a balanced 4-tuple design from a term list.
    GenTuples {
        #[arg(long)]
        terms: PathBuf,
        #[arg(long, default_value_t = 2)]
        factor: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Maximum number of tuples any two terms may share.
        #[arg(long, default_value_t = DEFAULT_PAIR_CAP)]
        pair_cap: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score terms from best/worst responses.
    Score {
        #[command(flatten)]
        input: ResponseInput,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split-half reliability of the scores.
    Reliability {
        #[command(flatten)]
        input: ResponseInput,
        #[arg(long, default_value_t = scoring::DEFAULT_SPLITS)]
        splits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Agreement curve and least perceptible difference.
    Lpd {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        tuples: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        window: f64,
        #[arg(long, default_value_t = 0.001)]
        grid: f64,
        #[arg(long, default_value_t = 0.999)]
        confidence: f64,
        #[arg(long)]
        two_sided: bool,
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Effect of negators, modals and degree adverbs on scored phrases.
    Analyze {
        #[arg(long)]
        lexicon: PathBuf,
        /// Modifier inventory TSV; the built-in inventory when omitted.
        #[arg(long)]
        modifiers: Option<PathBuf>,
        #[arg(long, default_value_t = 0.069)]
        lpd: f64,
        #[arg(long, default_value_t = 0.3)]
        pos_threshold: f64,
        #[arg(long, default_value_t = 5)]
        min_pairs: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Synthetic responses from latent scores.
    Simulate {
        #[arg(long)]
        tuples: PathBuf,
        #[arg(long)]
        latent: PathBuf,
        #[arg(long, default_value_t = 10)]
        annotators: usize,
        #[arg(long, default_value_t = 0.15)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the annotation service.
    Serve {
        #[arg(long)]
        tuples: PathBuf,
        /// Gold TSV; its tuple ids mark check questions in the tuples file.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        gold_rate: f64,
        #[arg(long, default_value_t = 10)]
        target: u32,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep assigning tuples that reached the target.
        #[arg(long)]
        over_collect: bool,
        /// Directory with the annotation UI's static files.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ResponseInput {
    #[arg(long)]
    tuples: PathBuf,
    #[arg(long)]
    responses: PathBuf,
    /// Gold TSV; annotators below the accuracy threshold are dropped.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long, default_value_t = scoring::DEFAULT_MIN_GOLD_ACCURACY)]
    min_gold_accuracy: f64,
}

impl ResponseInput {
    fn load(&self) -> Result<(Vec<Tuple4>, Vec<Response>)> {
        let tuples = load_tuples(&self.tuples)?;
        let responses = load_responses(&self.responses)?;
        Ok((tuples, responses))
    }

    /// Responses after gold filtering, if a gold file was given.
    fn filtered(&self, tuples: &[Tuple4], responses: Vec<Response>) -> Result<Vec<Response>> {
        let index = TupleIndex::new(tuples);
        let Some(path) = &self.gold else {
            return Ok(responses);
        };
        let gold = load_gold(path)?;
        gold.check_against(&index)?;
        let (kept, report) = filter_annotators(&responses, &index, &gold, self.min_gold_accuracy)?;
        eprintln!(
            "gold filter: {} annotators graded, {} discarded, {} without gold answers; {} of {} responses kept",
            report.per_annotator_gold_accuracy.len(),
            report.discarded_annotators.len(),
            report.no_gold_annotators.len(),
            report.kept_responses,
            responses.len()
        );
        for (annotator, acc) in &report.per_annotator_gold_accuracy {
            let mark = if report.discarded_annotators.contains(annotator) { " (discarded)" } else { "" };
            eprintln!("  {annotator}\t{acc:.3}{mark}");
        }
        if let Some(a) = &report.majority_agreement {
            eprintln!(
                "majority agreement: {:.3} per response, {:.3} per question",
                a.per_response, a.per_question
            );
        }
        Ok(kept)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn gen_tuples(terms: &Path, factor: usize, seed: u64, pair_cap: u32, out: &Path) -> Result<()> {
    let terms = load_terms(terms)?;
    let config = DesignConfig::new(factor, seed).with_pair_cap(pair_cap);
    let tuples = generate_design(&terms, &config).with_context(|| {
        format!(
            "the smallest pair cap these terms allow is {}",
            pair_cap_lower_bound(terms.len(), factor)
        )
    })?;
    let report = validate_design(&tuples, &terms, pair_cap);
    if !report.is_valid() {
        bail!("generated design failed validation: {:?}", report.violations);
    }
    save_tuples(&tuples, out)?;
    let (lo, hi) = report.count_range();
    println!(
        "{} tuples for {} terms; appearances per term {lo}..{hi}; max pair co-occurrence {}",
        report.n_tuples, report.n_terms, report.max_pair_cooccurrence
    );
    Ok(())
}

fn score(input: &ResponseInput, out: &Path) -> Result<()> {
    let (tuples, responses) = input.load()?;
    let kept = input.filtered(&tuples, responses)?;
    let lexicon = scoring::score(&kept, &TupleIndex::new(&tuples))?;
    save_lexicon(&lexicon, out)?;
    println!("scored {} terms from {} responses", lexicon.len(), kept.len());
    Ok(())
}

fn reliability(input: &ResponseInput, splits: usize, seed: u64) -> Result<()> {
    let (tuples, responses) = input.load()?;
    let kept = input.filtered(&tuples, responses)?;
    let rel = split_half_reliability(&kept, &TupleIndex::new(&tuples), splits, seed)?;
    println!("split\tspearman\tpearson");
    for (k, (rho, r)) in rel.per_split.iter().enumerate() {
        println!("{k}\t{rho:.4}\t{r:.4}");
    }
    println!("spearman {:.4} (sd {:.4})", rel.spearman_mean, rel.spearman_sd);
    println!("pearson  {:.4} (sd {:.4})", rel.pearson_mean, rel.pearson_sd);
    if !rel.excluded_tuples.is_empty() {
        eprintln!("{} tuples with fewer than two responses were left out", rel.excluded_tuples.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn lpd(
    lexicon: &Path,
    tuples: &Path,
    responses: &Path,
    window: f64,
    grid: f64,
    confidence: f64,
    two_sided: bool,
    curve_out: Option<&Path>,
) -> Result<()> {
    let lexicon = load_lexicon(lexicon)?;
    let tuples = load_tuples(tuples)?;
    let responses = load_responses(responses)?;
    let config = CurveConfig::new(window, grid, confidence, two_sided)?;
    let pairs = infer_pairs(&responses, &TupleIndex::new(&tuples))?;
    let curve = agreement_curve(&pairs, &lexicon, &config)?;
    if let Some(path) = curve_out {
        let mut out = create(path)?;
        curve.write_tsv(&mut out)?;
        out.flush()?;
    }
    println!("{} term pairs, {} grid points", pairs.len(), curve.points.len());
    match least_perceptible_difference(&curve) {
        Some(d) => println!("least perceptible difference: {d:.3}"),
        None => println!("least perceptible difference: none (agreement never stays above chance)"),
    }
    Ok(())
}

fn analyze(lexicon: &Path, modifiers: Option<&Path>, config: ImpactConfig, out_dir: &Path) -> Result<()> {
    let lexicon = load_lexicon(lexicon)?;
    let inventory = match modifiers {
        Some(path) => load_modifier_inventory(path)?,
        None => ModifierInventory::builtin(),
    };
    let analysis = CompositionAnalysis::run(&lexicon, &inventory, config);
    emit_report(&analysis, out_dir)?;
    println!(
        "{} modifier pairs; report written to {}",
        analysis.build.pairs.len(),
        out_dir.display()
    );
    Ok(())
}

fn simulate_cmd(tuples: &Path, latent: &Path, annotators: usize, noise: f64, seed: u64, out: &Path) -> Result<()> {
    let tuples = load_tuples(tuples)?;
    let config = SimConfig {
        latent: load_latent(latent)?,
        n_annotators: annotators,
        noise_sigma: noise,
        seed,
    };
    let responses = simulate(&tuples, &config)?;
    save_responses(&responses, out)?;
    println!("{} responses from {annotators} annotators", responses.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn serve(
    tuples: &Path,
    gold: Option<&Path>,
    config: CampaignConfig,
    host: &str,
    port: u16,
    data_dir: &Path,
    ui_dir: Option<PathBuf>,
) -> Result<()> {
    let tuples = load_tuples(tuples)?;
    let gold_ids: BTreeSet<String> = match gold {
        Some(path) => {
            let key: GoldKey = load_gold(path)?;
            key.check_against(&TupleIndex::new(&tuples))?;
            key.iter().map(|(id, _)| id.to_string()).collect()
        }
        None => BTreeSet::new(),
    };
    let campaign = Arc::new(Campaign::open_or_create(data_dir, tuples, gold_ids, config)?);
    let p = campaign.progress();
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .with_context(|| format!("invalid address {host}:{port}"))?;

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!(
            "serving {} tuples ({} responses recorded, {:.1}% complete) on http://{}",
            p.tuples_total,
            p.responses_total,
            100.0 * p.fraction_complete,
            listener.local_addr()?
        );
        axum::serve(listener, server::router(campaign, ui_dir))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenTuples {
            terms,
            factor,
            seed,
            pair_cap,
            out,
        } => gen_tuples(&terms, factor, seed, pair_cap, &out),
        Command::Score { input, out } => score(&input, &out),
        Command::Reliability { input, splits, seed } => reliability(&input, splits, seed),
        Command::Lpd {
            lexicon,
            tuples,
            responses,
            window,
            grid,
            confidence,
            two_sided,
            curve_out,
        } => lpd(
            &lexicon,
            &tuples,
            &responses,
            window,
            grid,
            confidence,
            two_sided,
            curve_out.as_deref(),
        ),
        Command::Analyze {
            lexicon,
            modifiers,
            lpd,
            pos_threshold,
            min_pairs,
            out_dir,
        } => analyze(
            &lexicon,
            modifiers.as_deref(),
            ImpactConfig {
                lpd,
                polarity_threshold: pos_threshold,
                min_pairs,
                single_modifier_only: false,
            },
            &out_dir,
        ),
        Command::Simulate {
            tuples,
            latent,
            annotators,
            noise,
            seed,
            out,
        } => simulate_cmd(&tuples, &latent, annotators, noise, seed, &out),
        Command::Serve {
            tuples,
            gold,
            gold_rate,
            target,
            port,
            host,
            data_dir,
            seed,
            over_collect,
            ui_dir,
        } => serve(
            &tuples,
            gold.as_deref(),
            CampaignConfig {
                target,
                gold_rate,
                seed,
                over_collect,
            },
            &host,
            port,
            &data_dir,
            ui_dir,
        ),
    }
}
