//! Run configuration: one JSON file describing the schema, g-trees,
//! thresholds, and per-subcommand settings. Command-line flags override
//! environment variables, which override the file.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use anondq::anonymizer::AnonymizeConfig;
use anondq::gtree::{GTree, GTreeSpec};
use anondq::info_theory::NmiConfig;
use anondq::justification::SimulationConfig;
use anondq::minimization::SensitivityConfig;
use anondq::quality::ThresholdConfig;
use anondq::tabular::{ColumnSchema, LoadOptions};
use anondq::{Error, Result};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub delimiter: Option<char>,
    pub row_id_column: Option<String>,
    #[serde(default)]
    pub columns: Vec<ColumnSchema>,
    #[serde(default)]
    pub gtrees: BTreeMap<String, GTreeSpec>,
    #[serde(default)]
    pub thresholds: Option<ThresholdConfig>,
    #[serde(default)]
    pub nmi: Option<NmiConfig>,
    #[serde(default)]
    pub anonymize: Option<AnonymizeSection>,
    #[serde(default)]
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub sensitivity: Option<SensitivitySection>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnonymizeSection {
    pub k: Option<usize>,
    pub max_suppression_frac: Option<f64>,
    pub residual_cutoff_percentile: Option<f64>,
    pub max_root_generalization_frac: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub n_generators: Option<usize>,
    pub runs_per_generator: Option<usize>,
    pub row_counts: Option<Vec<usize>>,
    pub k_values: Option<Vec<usize>>,
    pub max_qid_subset: Option<usize>,
    pub alpha: Option<f64>,
    pub min_group_size: Option<usize>,
    pub max_failure_frac: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SensitivitySection {
    pub n_min: Option<usize>,
    pub step_frac: Option<f64>,
    pub m_subsamples: Option<usize>,
    pub k: Option<usize>,
    pub max_suppression_frac: Option<f64>,
}

/// Everything a command needs, with precedence already resolved.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub file: FileConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub load_options: LoadOptions,
}

fn env_u64(name: &str) -> Option<u64> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

fn env_path(name: &str) -> Option<PathBuf> {
    std::env::var(name).ok().map(PathBuf::from)
}

pub fn env_jobs() -> Option<usize> {
    std::env::var("ANONDQ_JOBS").ok().and_then(|v| v.parse().ok())
}

impl RunConfig {
    pub fn load(config_path: Option<&Path>, seed_flag: Option<u64>, out_dir_flag: Option<&Path>) -> Result<Self> {
        let file: FileConfig = match config_path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("config file {} not found or unreadable: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        if file.columns.is_empty() {
            return Err(Error::Config("config must declare at least one column (schema not found)".to_string()));
        }

        let seed = seed_flag.or_else(|| env_u64("ANONDQ_SEED")).or(file.seed).unwrap_or(0);
        let out_dir = out_dir_flag
            .map(Path::to_path_buf)
            .or_else(|| env_path("ANONDQ_OUT_DIR"))
            .or_else(|| file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));

        let load_options = LoadOptions {
            delimiter: file.delimiter.map(|c| c as u8).unwrap_or(b','),
            row_id_column: file.row_id_column.clone().unwrap_or_else(|| "row_id".to_string()),
        };
        Ok(Self { file, seed, out_dir, load_options })
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.file.columns
    }

    pub fn thresholds(&self) -> ThresholdConfig {
        self.file.thresholds.clone().unwrap_or_default()
    }

    pub fn nmi(&self) -> NmiConfig {
        let mut nmi = self.file.nmi.clone().unwrap_or_default();
        nmi.seed = self.seed;
        nmi
    }

    pub fn gtrees(&self) -> Result<HashMap<String, GTree>> {
        let mut out = HashMap::new();
        for (column, spec) in &self.file.gtrees {
            let tree = GTree::from_spec(spec)?;
            let violations = tree.validate();
            if !violations.is_empty() {
                return Err(Error::Config(format!("g-tree for '{column}' is invalid: {violations:?}")));
            }
            out.insert(column.clone(), tree);
        }
        Ok(out)
    }

    pub fn anonymize_config(&self, k_flag: Option<usize>) -> Result<AnonymizeConfig> {
        let section = self.file.anonymize.clone().unwrap_or_default();
        let k = k_flag
            .or(section.k)
            .ok_or_else(|| Error::Config("anonymization requires k (--k or config anonymize.k)".to_string()))?;
        let mut config = AnonymizeConfig::new(k);
        if let Some(v) = section.max_suppression_frac {
            config.max_suppression_frac = v;
        }
        if let Some(v) = section.residual_cutoff_percentile {
            config.residual_cutoff_percentile = v;
        }
        config.max_root_generalization_frac = section.max_root_generalization_frac;
        Ok(config)
    }

    pub fn simulation_config(&self, alpha_flag: Option<f64>) -> SimulationConfig {
        let section = self.file.simulation.clone().unwrap_or_default();
        let mut config = SimulationConfig::desk_scale(self.seed);
        config.nmi = self.nmi();
        config.thresholds = self.thresholds();
        if let Some(v) = section.n_generators {
            config.n_generators = v;
        }
        if let Some(v) = section.runs_per_generator {
            config.runs_per_generator = v;
        }
        if let Some(v) = section.row_counts {
            config.row_counts = v;
        }
        if let Some(v) = section.k_values {
            config.k_values = v;
        }
        if let Some(v) = section.max_qid_subset {
            config.max_qid_subset = v;
        }
        if let Some(v) = alpha_flag.or(section.alpha) {
            config.alpha = v;
        }
        if let Some(v) = section.min_group_size {
            config.min_group_size = v;
        }
        if let Some(v) = section.max_failure_frac {
            config.max_failure_frac = v;
        }
        config
    }

    pub fn sensitivity_config(&self, n_flag: Option<usize>) -> Result<SensitivityConfig> {
        let section = self.file.sensitivity.clone().unwrap_or_default();
        let n_min = n_flag
            .or(section.n_min)
            .ok_or_else(|| Error::Config("minimize requires n (--n or config sensitivity.n_min)".to_string()))?;
        let k = section
            .k
            .or_else(|| self.file.anonymize.as_ref().and_then(|a| a.k))
            .ok_or_else(|| Error::Config("minimize requires k (config sensitivity.k or anonymize.k)".to_string()))?;
        let mut config = SensitivityConfig::new(n_min, k, self.seed);
        config.thresholds = self.thresholds();
        config.nmi = self.nmi();
        if let Some(v) = section.step_frac {
            config.step_frac = v;
        }
        if let Some(v) = section.m_subsamples {
            config.m_subsamples = v;
        }
        if let Some(v) = section.max_suppression_frac {
            config.max_suppression_frac = v;
        }
        Ok(config)
    }
}
