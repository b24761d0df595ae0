//! CSV and manifest writers. Indices are written 1-based; numbers use the
//! shortest representation that parses back to the same `f64`.

use std::fmt::Write as _;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use mbcl::geometry::GramMatrix;
use mbcl::optim::RunTrace;
use mbcl::{Batch, BatchCollection};

use crate::error::{CliError, CliResult};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

fn finite(x: f64, what: &str) -> CliResult<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Numeric(format!("non-finite {what}: {x}")))
    }
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn gram_csv(g: &GramMatrix) -> CliResult<String> {
    let m = g.matrix();
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{}", finite(m[(i, j)], "gram entry")?).ok();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn export_gram_csv(g: &GramMatrix, path: &Path) -> CliResult<()> {
    write_file(path, &gram_csv(g)?)
}

/// `(1 2);(3 4)`.
pub fn format_batches(batches: &[Batch]) -> String {
    batches
        .iter()
        .map(format_batch)
        .collect::<Vec<_>>()
        .join(";")
}

fn format_batch(batch: &Batch) -> String {
    let members: Vec<String> = batch.indices().iter().map(|i| (i + 1).to_string()).collect();
    format!("({})", members.join(" "))
}

pub fn trace_csv(t: &RunTrace) -> CliResult<String> {
    let mut out = String::from("step,full_loss,oracle_dist,batches\n");
    for r in &t.records {
        let dist = match r.oracle_dist {
            Some(d) => finite(d, "oracle distance")?.to_string(),
            None => String::new(),
        };
        writeln!(
            out,
            "{},{},{},{}",
            r.step,
            finite(r.full_loss, "loss")?,
            dist,
            format_batches(&r.selected)
        )
        .ok();
    }
    Ok(out)
}

pub fn export_trace_csv(t: &RunTrace, path: &Path) -> CliResult<()> {
    write_file(path, &trace_csv(t)?)
}

pub fn histogram_csv(bins: &[(f64, usize)]) -> CliResult<String> {
    let mut out = String::from("lower_edge,count\n");
    for &(edge, count) in bins {
        writeln!(out, "{},{count}", finite(edge, "histogram edge")?).ok();
    }
    Ok(out)
}

/// One row per batch: position, members and loss.
pub fn batches_csv(coll: &BatchCollection, losses: &[f64]) -> CliResult<String> {
    let mut out = String::from("batch,members,loss\n");
    for (pos, (batch, &loss)) in coll.batches().iter().zip(losses).enumerate() {
        writeln!(out, "{},{},{}", pos + 1, format_batch(batch), finite(loss, "batch loss")?).ok();
    }
    Ok(out)
}

/// 64-bit FNV-1a of the text, as 16 hex digits.
pub fn config_hash(text: &str) -> String {
    let mut h = FnvHasher::default();
    h.write(text.as_bytes());
    format!("{:016x}", h.finish())
}

pub fn manifest(config_text: &str, experiment: &str, seed: u64) -> String {
    format!(
        "experiment = {experiment}\nconfig_hash = fnv1a64:{}\nseed = {seed}\nversion = mbcl {ARTIFACT_VERSION}\n",
        config_hash(config_text)
    )
}
