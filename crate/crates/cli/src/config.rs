//! Config file model and the resolved run manifest.
//!
//! The config is one self-describing TOML file whose sections mirror the
//! engine's configuration structs; CLI flags override file values. A
//! dataset is either a pool file (with its sidecar fingerprint dimension) or
//! a synthetic generator spec.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use qpo_core::acquisition::{Policy, PolicyConfig};
use qpo_core::campaign::{CampaignConfig, SyntheticKind};
use qpo_core::surrogate::SurrogateConfig;
use qpo_core::Direction;

use crate::error::AppError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub campaign: CampaignSection,
    pub policy: PolicyConfig,
    pub surrogate: SurrogateConfig,
    pub metrics: MetricsSection,
    pub dataset: DatasetSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignSection {
    pub seed: u64,
    pub init_batch: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub objective: Direction,
    pub restarts: usize,
}

impl Default for CampaignSection {
    fn default() -> Self {
        CampaignSection {
            seed: 0,
            init_batch: 50,
            batch_size: 50,
            iterations: 10,
            objective: Direction::Max,
            restarts: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub top_k: Vec<usize>,
    pub fraction_p: Vec<f64>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection { top_k: vec![10, 100], fraction_p: vec![0.005, 0.01] }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Pool file in the delimited ingestion format.
    pub path: Option<PathBuf>,
    /// Fingerprint dimension for file ingestion (required with `path`).
    pub dimension: Option<usize>,
    /// Synthetic generator: gp-draw | sparse-linear | multimodal.
    pub kind: Option<SyntheticKind>,
    pub n: Option<usize>,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

/// Where the candidates come from, after manifest resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DatasetSpec {
    File { path: PathBuf, dimension: usize },
    Synthetic { kind: SyntheticKind, n: usize, dim: usize, seed: u64 },
}

/// A fully resolved run: dataset, output directory, and the seed x policy
/// grid to sweep.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub file: FileConfig,
    pub dataset: DatasetSpec,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub policies: Vec<Policy>,
}

impl RunManifest {
    /// Campaign config for one (policy, seed) cell of the sweep.
    pub fn campaign_config(&self, policy: Policy, seed: u64) -> CampaignConfig {
        CampaignConfig {
            seed,
            init_batch: self.file.campaign.init_batch,
            batch_size: self.file.campaign.batch_size,
            iterations: self.file.campaign.iterations,
            policy: PolicyConfig { policy, ..self.file.policy.clone() },
            objective_direction: self.file.campaign.objective,
            restarts: self.file.campaign.restarts,
            surrogate: self.file.surrogate,
            metric_ks: self.file.metrics.top_k.clone(),
            metric_ps: self.file.metrics.fraction_p.clone(),
        }
    }
}

pub fn load_file_config(path: &Path) -> Result<FileConfig, AppError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))
        .map_err(AppError::usage)?;
    let cfg: FileConfig = toml::from_str(&text)
        .with_context(|| format!("invalid config file {}", path.display()))
        .map_err(AppError::usage)?;
    Ok(cfg)
}

/// Merge the config file (if any) with CLI overrides into a validated
/// manifest.
#[allow(clippy::too_many_arguments)]
pub fn resolve_manifest(
    config_path: Option<&Path>,
    dataset_override: Option<&Path>,
    out_override: Option<&Path>,
    seeds_override: Option<&[u64]>,
    policies_override: Option<&[String]>,
) -> Result<RunManifest, AppError> {
    let file = match config_path {
        Some(p) => load_file_config(p)?,
        None => FileConfig::default(),
    };

    let dataset = resolve_dataset(&file.dataset, dataset_override)?;
    if let DatasetSpec::File { path, .. } = &dataset {
        if !path.exists() {
            return Err(AppError::data(anyhow::anyhow!(
                "dataset file {} does not exist",
                path.display()
            )));
        }
    }

    let out_dir = out_override.map(Path::to_path_buf).unwrap_or_else(|| file.output.dir.clone());

    let seeds: Vec<u64> = match seeds_override {
        Some(s) if !s.is_empty() => s.to_vec(),
        Some(_) => return Err(AppError::usage(anyhow::anyhow!("--seeds list is empty"))),
        None => vec![file.campaign.seed],
    };

    let policies: Vec<Policy> = match policies_override {
        Some(names) if !names.is_empty() => names
            .iter()
            .map(|n| n.parse::<Policy>().map_err(|e| AppError::usage(anyhow::anyhow!(e))))
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(AppError::usage(anyhow::anyhow!("--policies list is empty"))),
        None => vec![file.policy.policy],
    };

    Ok(RunManifest { file, dataset, out_dir, seeds, policies })
}

fn resolve_dataset(
    section: &DatasetSection,
    dataset_override: Option<&Path>,
) -> Result<DatasetSpec, AppError> {
    if let Some(path) = dataset_override {
        let dimension = section.dimension.ok_or_else(|| {
            AppError::usage(anyhow::anyhow!(
                "dataset.dimension must be set in the config when loading a pool file"
            ))
        })?;
        return Ok(DatasetSpec::File { path: path.to_path_buf(), dimension });
    }
    match (&section.path, section.kind) {
        (Some(path), None) => {
            let dimension = section.dimension.ok_or_else(|| {
                AppError::usage(anyhow::anyhow!(
                    "dataset.dimension is required alongside dataset.path"
                ))
            })?;
            Ok(DatasetSpec::File { path: path.clone(), dimension })
        }
        (None, Some(kind)) => {
            let n = section.n.ok_or_else(|| {
                AppError::usage(anyhow::anyhow!("dataset.n is required for synthetic pools"))
            })?;
            let dim = section.dim.ok_or_else(|| {
                AppError::usage(anyhow::anyhow!("dataset.dim is required for synthetic pools"))
            })?;
            Ok(DatasetSpec::Synthetic { kind, n, dim, seed: section.seed.unwrap_or(0) })
        }
        (Some(_), Some(_)) => Err(AppError::usage(anyhow::anyhow!(
            "dataset.path and dataset.kind are mutually exclusive"
        ))),
        (None, None) => Err(AppError::usage(anyhow::anyhow!(
            "no dataset: set dataset.path (with dimension) or dataset.kind/n/dim, or pass --dataset"
        ))),
    }
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<qpo_core::fingerprints::CandidatePool, AppError> {
    match spec {
        DatasetSpec::File { path, dimension } => {
            let file = std::fs::File::open(path)
                .with_context(|| format!("cannot open dataset {}", path.display()))
                .map_err(AppError::data)?;
            let reader = std::io::BufReader::new(file);
            qpo_core::fingerprints::load_pool(reader, *dimension)
                .map_err(|e| AppError::data(anyhow::anyhow!("{}: {e}", path.display())))
        }
        DatasetSpec::Synthetic { kind, n, dim, seed } => {
            qpo_core::campaign::synthetic_pool(*kind, *n, *dim, *seed).map_err(AppError::from)
        }
    }
}

/// Ensure there is something to iterate over and that the pool is large
/// enough for the configured campaign shape.
pub fn validate_manifest(manifest: &RunManifest, pool_len: usize) -> Result<(), AppError> {
    if manifest.seeds.is_empty() {
        return Err(AppError::usage(anyhow::anyhow!("seed list is empty")));
    }
    let c = &manifest.file.campaign;
    let need = c.init_batch + c.iterations * c.batch_size;
    if need > pool_len {
        bail_usage(format!(
            "campaign needs init_batch + iterations * batch_size = {need} candidates, pool has {pool_len}"
        ))?;
    }
    Ok(())
}

fn bail_usage(msg: String) -> Result<(), AppError> {
    Err(AppError::usage(anyhow::anyhow!(msg)))
}

#[allow(unused)]
fn _unused(_: ()) {
    let _ = bail::<()>;
}
