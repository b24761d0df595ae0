//! Experiment configuration: `key = value` lines under section headers,
//! read and written as TOML.
//!
//! ```text
//! experiment = "synthetic"
//! n = 8
//! d = 16
//! b = 2
//! seeds = [0, 1, 2]
//! output_dir = "out"
//!
//! [optimizer]
//! variant = "all-ncb-gd"
//! eta = 0.5
//! steps = 500
//!
//! [subset]
//! kind = "explicit"
//! batches = [[1, 2], [3, 4], [5, 6], [7, 8]]
//! ```
//!
//! Batch indices in the file are 1-based.

use std::path::{Path, PathBuf};

use mbcl::optim::{LearningRate, OptimizerConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Synthetic,
    Toy,
    SelectBatches,
    Histogram,
    Verify,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Synthetic => "synthetic",
            Self::Toy => "toy",
            Self::SelectBatches => "select-batches",
            Self::Histogram => "histogram",
            Self::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eta {
    Constant(f64),
    Schedule(Vec<f64>),
}

impl From<&Eta> for LearningRate {
    fn from(eta: &Eta) -> Self {
        match eta {
            Eta::Constant(x) => LearningRate::Constant(*x),
            Eta::Schedule(xs) => LearningRate::Schedule(xs.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub variant: String,
    pub eta: Eta,
    pub steps: usize,
    pub k: usize,
    pub q: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            variant: Variant::AllNcBGd.name().into(),
            eta: Eta::Constant(0.5),
            steps: 500,
            k: 1,
            q: 1,
        }
    }
}

/// Collection used by `subset-gd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetKind {
    /// Every size-`b` batch.
    AllNcb,
    /// The single batch `[N]`.
    FullBatch,
    /// Consecutive groups `{1..b}, {b+1..2b}, ...`.
    Partition,
    /// The `batches` list.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsetSection {
    pub kind: SubsetKind,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub batches: Vec<Vec<usize>>,
}

impl Default for SubsetSection {
    fn default() -> Self {
        Self {
            kind: SubsetKind::Partition,
            batches: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    Random,
    Sc,
    ChunkedSc,
}

impl SelectorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Sc => "sc",
            Self::ChunkedSc => "chunked-sc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorSection {
    pub kind: SelectorKind,
    /// Clusters per chunk for `chunked-sc`.
    pub chunk_k: usize,
}

impl Default for SelectorSection {
    fn default() -> Self {
        Self {
            kind: SelectorKind::Sc,
            chunk_k: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySection {
    pub epsilon: f64,
    pub eta: f64,
    pub rho: f64,
    pub max_steps: usize,
}

impl Default for ToySection {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            eta: 0.1,
            rho: 0.05,
            max_steps: 5000,
        }
    }
}

/// The histogram study runs on synthetic random embeddings in place of a
/// trained encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramSection {
    pub bins: usize,
}

impl Default for HistogramSection {
    fn default() -> Self {
        Self { bins: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Filled from the subcommand when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub n: usize,
    pub d: usize,
    pub b: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub optimizer: OptimizerSection,
    pub subset: SubsetSection,
    pub selector: SelectorSection,
    pub toy: ToySection,
    pub histogram: HistogramSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            n: 8,
            d: 16,
            b: 2,
            seeds: vec![0],
            output_dir: PathBuf::from("out"),
            optimizer: OptimizerSection::default(),
            subset: SubsetSection::default(),
            selector: SelectorSection::default(),
            toy: ToySection::default(),
            histogram: HistogramSection::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl ExperimentConfig {
    /// Parses and validates config text.
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form; [`ExperimentConfig::parse`] reads it back
    /// unchanged.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config fields are all TOML-representable")
    }

    pub fn variant(&self) -> CliResult<Variant> {
        Variant::from_name(&self.optimizer.variant).ok_or_else(|| {
            let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
            invalid(format!(
                "unknown optimizer variant `{}` (expected one of {})",
                self.optimizer.variant,
                names.join(", ")
            ))
        })
    }

    pub fn optimizer_config(&self, seed: u64) -> CliResult<OptimizerConfig> {
        Ok(OptimizerConfig {
            eta: LearningRate::from(&self.optimizer.eta),
            steps: self.optimizer.steps,
            seed,
            variant: self.variant()?,
            batch_size: self.b,
            k: self.optimizer.k,
            q: self.optimizer.q,
        })
    }

    /// Explicit batches converted to 0-based indices.
    pub fn explicit_batches(&self) -> Vec<Vec<usize>> {
        self.subset
            .batches
            .iter()
            .map(|batch| batch.iter().map(|&i| i - 1).collect())
            .collect()
    }

    pub fn validate(&self) -> CliResult<()> {
        for (name, value) in [("n", self.n), ("d", self.d), ("b", self.b)] {
            if value == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds must list at least one seed"));
        }
        self.variant()?;
        let opt = &self.optimizer;
        if opt.steps == 0 || opt.k == 0 || opt.q == 0 {
            return Err(invalid("optimizer steps, k and q must be positive"));
        }
        if opt.q > opt.k {
            return Err(invalid(format!("q = {} exceeds k = {}", opt.q, opt.k)));
        }
        match &opt.eta {
            Eta::Constant(x) if !(x.is_finite() && *x >= 0.0) => {
                return Err(invalid(format!("eta must be finite and nonnegative, got {x}")));
            }
            Eta::Schedule(xs) => {
                if xs.len() != opt.steps {
                    return Err(invalid(format!(
                        "eta schedule has {} entries for {} steps",
                        xs.len(),
                        opt.steps
                    )));
                }
                if xs.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(invalid("eta schedule entries must be finite and nonnegative"));
                }
            }
            Eta::Constant(_) => {}
        }
        if self.subset.kind == SubsetKind::Explicit {
            if self.subset.batches.is_empty() {
                return Err(invalid("explicit subset needs a non-empty batches list"));
            }
            for (pos, batch) in self.subset.batches.iter().enumerate() {
                if batch.len() != self.b {
                    return Err(invalid(format!(
                        "explicit batch {} has {} members, expected b = {}",
                        pos + 1,
                        batch.len(),
                        self.b
                    )));
                }
                for (x, &i) in batch.iter().enumerate() {
                    if i == 0 || i > self.n {
                        return Err(invalid(format!(
                            "explicit batch {} contains {i}, outside 1..={}",
                            pos + 1,
                            self.n
                        )));
                    }
                    if batch[..x].contains(&i) {
                        return Err(invalid(format!(
                            "explicit batch {} repeats index {i}",
                            pos + 1
                        )));
                    }
                }
            }
        } else if !self.subset.batches.is_empty() {
            return Err(invalid("subset batches are only read when kind = \"explicit\""));
        }
        if self.selector.chunk_k == 0 {
            return Err(invalid("selector chunk_k must be positive"));
        }
        let toy = &self.toy;
        if ![toy.epsilon, toy.eta, toy.rho].iter().all(|x| x.is_finite()) || toy.max_steps == 0 {
            return Err(invalid("toy epsilon, eta, rho must be finite and max_steps positive"));
        }
        if self.histogram.bins == 0 {
            return Err(invalid("histogram bins must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
experiment = "synthetic"
n = 6
d = 4
b = 2
seeds = [3, 4]
output_dir = "runs/a"

[optimizer]
variant = "subset-gd"
eta = [0.5, 0.4, 0.3]
steps = 3
k = 2
q = 1

[subset]
kind = "explicit"
batches = [[1, 2], [3, 4], [5, 6]]

[selector]
kind = "chunked-sc"
chunk_k = 2

[toy]
epsilon = 0.1
eta = 0.05
rho = 0.1
max_steps = 100

[histogram]
bins = 7
"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.experiment, Some(Experiment::Synthetic));
        assert_eq!(cfg.explicit_batches(), vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
        assert_eq!(cfg.optimizer.eta, Eta::Schedule(vec![0.5, 0.4, 0.3]));
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            "n = 0",
            "seeds = []",
            "[optimizer]\nvariant = \"adam\"",
            "[optimizer]\nk = 2\nq = 3",
            "[optimizer]\neta = [0.1, 0.2]\nsteps = 3",
            "[subset]\nkind = \"explicit\"\nbatches = [[1, 9]]",
            "[subset]\nkind = \"explicit\"\nbatches = [[1, 1]]",
            "[subset]\nkind = \"explicit\"\nbatches = [[1, 2, 3]]",
            "[subset]\nkind = \"explicit\"\nbatches = [[0, 1]]",
            "[subset]\nbatches = [[1, 2]]",
            "unknown_key = 1",
            "[histogram]\nbins = 0",
        ];
        for text in bad {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}");
        }
    }
}
