//! Experiment drivers. Every seed writes into its own `seed-<s>/`
//! directory under the output root.

use std::path::{Path, PathBuf};

use mbcl::batching::{batch_loss_histogram, chunked_sc_select, sc_select};
use mbcl::combinatorics::enumerate_batches;
use mbcl::geometry::{classify_configuration, gram, OracleKind, DEFAULT_CLASSIFY_TOL};
use mbcl::loss::contrastive_loss;
use mbcl::optim::{random_partition_collection, run_optimizer, Variant};
use mbcl::rng::{self, derive_seed, INIT_STREAM};
use mbcl::toy::{run_toy, ToyVariant};
use mbcl::verify;
use mbcl::{Batch, BatchCollection, EmbeddingPair};

use crate::config::{Experiment, ExperimentConfig, SelectorKind, SubsetKind};
use crate::error::{CliError, CliResult};
use crate::export::{
    batches_csv, export_gram_csv, export_trace_csv, histogram_csv, manifest, write_file,
};

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

/// Runs `experiment` for every configured seed, reporting one-line
/// summaries through `log`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    experiment: Experiment,
    log: &mut dyn FnMut(String),
) -> CliResult<()> {
    cfg.validate()?;
    if let Some(declared) = cfg.experiment {
        if declared != experiment {
            return Err(CliError::Validation(format!(
                "config declares experiment `{}` but `{}` was requested",
                declared.name(),
                experiment.name()
            )));
        }
    }
    let mut resolved = cfg.clone();
    resolved.experiment = Some(experiment);
    let text = hashed_text(&resolved);
    let root = &cfg.output_dir;

    match experiment {
        Experiment::Synthetic => synthetic(&resolved, &text, log),
        Experiment::Toy => toy(&resolved, &text, log),
        Experiment::SelectBatches => select_batches(&resolved, &text, log),
        Experiment::Histogram => histogram(&resolved, &text, log),
        Experiment::Verify => run_verify(&resolved, &text, log),
    }?;
    log(format!("outputs written under {}", root.display()));
    Ok(())
}

/// Config text behind the manifest hash. The output location and the seed
/// list are left out, so a seed's files do not depend on where they are
/// written or on which other seeds ran alongside.
fn hashed_text(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    c.seeds.clear();
    c.to_text()
}

fn write_manifest(dir: &Path, text: &str, experiment: Experiment, seed: u64) -> CliResult<()> {
    write_file(&dir.join("manifest.txt"), &manifest(text, experiment.name(), seed))
}

fn init_embedding(cfg: &ExperimentConfig, seed: u64) -> CliResult<EmbeddingPair> {
    Ok(EmbeddingPair::random(cfg.d, cfg.n, &mut rng::stream(seed, INIT_STREAM))?)
}

fn subset_collection(cfg: &ExperimentConfig) -> CliResult<BatchCollection> {
    let (n, b) = (cfg.n, cfg.b);
    Ok(match cfg.subset.kind {
        SubsetKind::AllNcb => enumerate_batches(n, b)?,
        SubsetKind::FullBatch => BatchCollection::general(vec![Batch::full(n)?])?,
        SubsetKind::Partition => BatchCollection::consecutive_partition(n, b)?,
        SubsetKind::Explicit => {
            let batches = cfg
                .explicit_batches()
                .into_iter()
                .map(|idx| Batch::new(idx, n))
                .collect::<mbcl::Result<Vec<_>>>()?;
            BatchCollection::general(batches)?
        }
    })
}

fn kind_name(kind: Option<OracleKind>) -> &'static str {
    match kind {
        Some(OracleKind::SimplexEtf) => "simplex-etf",
        Some(OracleKind::CrossPolytope) => "cross-polytope",
        None => "none",
    }
}

fn synthetic(cfg: &ExperimentConfig, text: &str, log: &mut dyn FnMut(String)) -> CliResult<()> {
    let subset = match cfg.variant()? {
        Variant::SubsetGd => Some(subset_collection(cfg)?),
        _ => None,
    };
    for &seed in &cfg.seeds {
        let dir = seed_dir(&cfg.output_dir, seed);
        let init = init_embedding(cfg, seed)?;
        let run = run_optimizer(&init, &cfg.optimizer_config(seed)?, subset.as_ref())?;
        export_trace_csv(&run.trace, &dir.join("trace.csv"))?;
        export_gram_csv(&gram(&init), &dir.join("gram_init.csv"))?;
        export_gram_csv(&gram(&run.embedding), &dir.join("gram_final.csv"))?;
        let last = run.trace.last();
        let loss = last.map_or(f64::NAN, |r| r.full_loss);
        let dist = last
            .and_then(|r| r.oracle_dist)
            .map_or_else(|| "n/a".to_string(), |d| format!("{d:.6}"));
        let class = kind_name(classify_configuration(&run.embedding, DEFAULT_CLASSIFY_TOL));
        write_file(
            &dir.join("summary.txt"),
            &format!("final_loss = {loss}\noracle_dist = {dist}\nclassification = {class}\n"),
        )?;
        write_manifest(&dir, text, Experiment::Synthetic, seed)?;
        log(format!(
            "seed {seed}: final loss {loss:.6}, oracle distance {dist}, classification {class}"
        ));
    }
    Ok(())
}

fn toy(cfg: &ExperimentConfig, text: &str, log: &mut dyn FnMut(String)) -> CliResult<()> {
    let t = &cfg.toy;
    let mut hits = String::from("seed,variant,hit_time\n");
    let mut totals = [(0usize, 0usize); 3];
    for &seed in &cfg.seeds {
        let dir = seed_dir(&cfg.output_dir, seed);
        for (v, variant) in ToyVariant::ALL.into_iter().enumerate() {
            let run = run_toy(variant, t.epsilon, t.eta, t.rho, seed, t.max_steps)?;
            export_trace_csv(&run.trace, &dir.join(format!("loss_{}.csv", variant.name())))?;
            let hit = run.hit_time.map_or_else(String::new, |h| h.to_string());
            hits.push_str(&format!("{seed},{},{hit}\n", variant.name()));
            if let Some(h) = run.hit_time {
                totals[v].0 += h;
                totals[v].1 += 1;
            }
        }
        write_manifest(&dir, text, Experiment::Toy, seed)?;
    }
    write_file(&cfg.output_dir.join("hit_times.csv"), &hits)?;
    for (variant, (sum, count)) in ToyVariant::ALL.into_iter().zip(totals) {
        let mean = if count > 0 {
            format!("{:.1}", sum as f64 / count as f64)
        } else {
            "n/a".into()
        };
        log(format!(
            "{}: reached target in {count}/{} runs, mean hit time {mean}",
            variant.name(),
            cfg.seeds.len()
        ));
    }
    Ok(())
}

fn selection(cfg: &ExperimentConfig, emb: &EmbeddingPair, seed: u64) -> CliResult<BatchCollection> {
    Ok(match cfg.selector.kind {
        SelectorKind::Random => random_partition_collection(cfg.n, cfg.b, seed)?,
        SelectorKind::Sc => sc_select(emb, cfg.b, seed)?,
        SelectorKind::ChunkedSc => chunked_sc_select(emb, cfg.b, cfg.selector.chunk_k, seed)?,
    })
}

fn batch_losses(emb: &EmbeddingPair, coll: &BatchCollection) -> CliResult<Vec<f64>> {
    Ok(coll
        .batches()
        .iter()
        .map(|b| contrastive_loss(emb, b))
        .collect::<mbcl::Result<Vec<_>>>()?)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn select_batches(cfg: &ExperimentConfig, text: &str, log: &mut dyn FnMut(String)) -> CliResult<()> {
    for &seed in &cfg.seeds {
        let dir = seed_dir(&cfg.output_dir, seed);
        let emb = init_embedding(cfg, seed)?;
        let coll = selection(cfg, &emb, seed)?;
        let losses = batch_losses(&emb, &coll)?;
        write_file(&dir.join("batches.csv"), &batches_csv(&coll, &losses)?)?;
        write_manifest(&dir, text, Experiment::SelectBatches, seed)?;
        log(format!(
            "seed {seed}: {} batches from {}, mean batch loss {:.6}",
            coll.len(),
            cfg.selector.kind.name(),
            mean(&losses)
        ));
    }
    Ok(())
}

fn histogram(cfg: &ExperimentConfig, text: &str, log: &mut dyn FnMut(String)) -> CliResult<()> {
    let bins = cfg.histogram.bins;
    for &seed in &cfg.seeds {
        let dir = seed_dir(&cfg.output_dir, seed);
        let emb = init_embedding(cfg, seed)?;
        let chosen = selection(cfg, &emb, seed)?;
        let baseline = random_partition_collection(cfg.n, cfg.b, derive_seed(seed, 1))?;
        let name = cfg.selector.kind.name();
        write_file(
            &dir.join(format!("histogram_{name}.csv")),
            &histogram_csv(&batch_loss_histogram(&emb, &chosen, bins)?)?,
        )?;
        write_file(
            &dir.join("histogram_baseline.csv"),
            &histogram_csv(&batch_loss_histogram(&emb, &baseline, bins)?)?,
        )?;
        write_manifest(&dir, text, Experiment::Histogram, seed)?;
        log(format!(
            "seed {seed}: mean batch loss {name} {:.6}, random baseline {:.6}",
            mean(&batch_losses(&emb, &chosen)?),
            mean(&batch_losses(&emb, &baseline)?)
        ));
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn run_verify(cfg: &ExperimentConfig, text: &str, log: &mut dyn FnMut(String)) -> CliResult<()> {
    let mut failed = 0;
    for &seed in &cfg.seeds {
        let dir = seed_dir(&cfg.output_dir, seed);
        let mut out = String::from("check,passed,detail\n");
        for r in verify::run_all(seed) {
            out.push_str(&format!("{},{},{}\n", r.name, r.passed, csv_field(&r.detail)));
            log(format!(
                "{} seed {seed} {}: {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.detail
            ));
            failed += usize::from(!r.passed);
        }
        write_file(&dir.join("verify.csv"), &out)?;
        write_manifest(&dir, text, Experiment::Verify, seed)?;
    }
    if failed > 0 {
        return Err(CliError::Numeric(format!("{failed} verification checks failed")));
    }
    Ok(())
}
