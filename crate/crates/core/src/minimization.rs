//! Quantitative data minimization: a sensitivity analysis over sub-sample
//! sizes in `[n, 2n]` finding the minimum sample size whose anonymized form
//! meets every data quality threshold.
//!
//! The analyst supplies `n` (their statistically required minimum) and a
//! table of at least `2n` rows; the analysis sweeps a ~5% step grid of
//! sizes, draws `m` pseudo-random sub-samples at each, anonymizes and
//! evaluates each one, and reports the smallest size at which all `m`
//! sub-samples pass. A dedicated fixed sub-sample at that size is then
//! re-confirmed so downstream analysis can use exactly those rows.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anonymizer::{anonymize, ensure_gtrees, to_pair, AnonymizeConfig};
use crate::error::{Error, Result};
use crate::gtree::GTree;
use crate::info_theory::{derive_seed, NmiConfig};
use crate::quality::{evaluate, MetricReport, MetricValue, ThresholdConfig};
use crate::tabular::{format_number, Table};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityConfig {
    /// The analyst's statistically required minimum sample size.
    pub n_min: usize,
    /// Relative size increment of the sweep grid.
    pub step_frac: f64,
    /// Sub-samples drawn per size.
    pub m_subsamples: usize,
    pub k: usize,
    pub thresholds: ThresholdConfig,
    pub nmi: NmiConfig,
    pub seed: u64,
    pub max_suppression_frac: f64,
}

impl SensitivityConfig {
    pub fn new(n_min: usize, k: usize, seed: u64) -> Self {
        Self {
            n_min,
            step_frac: 0.05,
            m_subsamples: 5,
            k,
            thresholds: ThresholdConfig::default(),
            nmi: NmiConfig::default(),
            seed,
            max_suppression_frac: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsampleOutcome {
    pub subsample_index: usize,
    pub passed: bool,
    pub report: MetricReport,
}

/// The fixed analysis sub-sample drawn at the minimum passing size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Confirmation {
    pub size: usize,
    pub row_ids: Vec<u64>,
    pub passed: bool,
    pub report: MetricReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub sizes: Vec<usize>,
    pub per_size: BTreeMap<usize, Vec<SubsampleOutcome>>,
    /// Smallest evaluated size at which all m sub-samples pass all
    /// thresholds; absent when no size qualifies.
    pub minimum_passing_size: Option<usize>,
    pub confirmation: Option<Confirmation>,
}

impl SensitivityReport {
    pub fn all_pass_at(&self, size: usize) -> bool {
        self.per_size
            .get(&size)
            .map(|outcomes| !outcomes.is_empty() && outcomes.iter().all(|o| o.passed))
            .unwrap_or(false)
    }
}

// The ascending ~step_frac grid over [n, 2n], always including both ends.
fn size_grid(n_min: usize, step_frac: f64) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut i = 0usize;
    loop {
        let s = ((n_min as f64) * (1.0 + step_frac * i as f64)).round() as usize;
        if s >= 2 * n_min {
            break;
        }
        sizes.push(s);
        i += 1;
    }
    sizes.push(2 * n_min);
    sizes.dedup();
    sizes
}

/// Run the sensitivity analysis over sub-sample sizes in `[n_min, 2*n_min]`.
///
/// Every size on the grid is evaluated in full (no early exit) so the
/// analyst sees the complete pass/fail curve; sub-samples are drawn without
/// replacement and the whole procedure is reproducible under a fixed seed.
pub fn sensitivity_analysis(
    table: &Table,
    quasi_ids: &[String],
    gtrees: &HashMap<String, GTree>,
    config: &SensitivityConfig,
) -> Result<SensitivityReport> {
    if config.n_min == 0 {
        return Err(Error::Precondition("n_min must be positive".to_string()));
    }
    if table.n_rows() < 2 * config.n_min {
        return Err(Error::Precondition(format!(
            "table has {} rows; sensitivity analysis needs at least 2n = {}",
            table.n_rows(),
            2 * config.n_min
        )));
    }
    if !(config.step_frac > 0.0 && config.step_frac <= 1.0) {
        return Err(Error::Precondition(format!("step_frac {} outside (0, 1]", config.step_frac)));
    }
    if config.m_subsamples == 0 {
        return Err(Error::Precondition("m_subsamples must be positive".to_string()));
    }

    let mut trees = gtrees.clone();
    ensure_gtrees(table, quasi_ids, &mut trees)?;

    let sizes = size_grid(config.n_min, config.step_frac);
    let units: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&s| (0..config.m_subsamples).map(move |j| (s, j)))
        .collect();

    let outcomes: Vec<((usize, usize), Result<SubsampleOutcome>)> = units
        .par_iter()
        .map(|&(size, j)| {
            let seed = derive_seed(config.seed, &[size as u64, j as u64]);
            let out = evaluate_subsample(table, quasi_ids, &trees, config, size, seed)
                .map(|(passed, report)| SubsampleOutcome { subsample_index: j, passed, report });
            ((size, j), out)
        })
        .collect();

    let mut per_size: BTreeMap<usize, Vec<SubsampleOutcome>> = BTreeMap::new();
    for ((size, _), out) in outcomes {
        per_size.entry(size).or_default().push(out?);
    }
    for outcomes in per_size.values_mut() {
        outcomes.sort_by_key(|o| o.subsample_index);
    }

    let minimum_passing_size = sizes
        .iter()
        .copied()
        .find(|s| per_size[s].iter().all(|o| o.passed));

    let confirmation = match minimum_passing_size {
        Some(size) => {
            // dedicated seed stream so the analysis sample is insensitive to
            // m_subsamples changes
            let seed = derive_seed(config.seed, &[0xF1_5ED, size as u64]);
            let indices = sample_indices(table.n_rows(), size, seed);
            let sub = table.select_rows(&indices)?;
            let (passed, report) = evaluate_table(&sub, quasi_ids, &trees, config)?;
            Some(Confirmation { size, row_ids: sub.row_ids().to_vec(), passed, report })
        }
        None => None,
    };

    Ok(SensitivityReport { sizes, per_size, minimum_passing_size, confirmation })
}

fn sample_indices(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = rand::seq::index::sample(&mut rng, n, size).into_vec();
    indices.sort_unstable();
    indices
}

fn evaluate_subsample(
    table: &Table,
    quasi_ids: &[String],
    trees: &HashMap<String, GTree>,
    config: &SensitivityConfig,
    size: usize,
    seed: u64,
) -> Result<(bool, MetricReport)> {
    let indices = sample_indices(table.n_rows(), size, seed);
    let sub = table.select_rows(&indices)?;
    evaluate_table(&sub, quasi_ids, trees, config)
}

fn evaluate_table(
    sub: &Table,
    quasi_ids: &[String],
    trees: &HashMap<String, GTree>,
    config: &SensitivityConfig,
) -> Result<(bool, MetricReport)> {
    let anc = AnonymizeConfig {
        k: config.k,
        max_suppression_frac: config.max_suppression_frac,
        ..AnonymizeConfig::new(config.k)
    };
    let result = anonymize(sub, quasi_ids, trees, &anc)?;
    let pair = to_pair(sub, &result)?;
    let nmi = NmiConfig { seed: derive_seed(config.seed, &[sub.n_rows() as u64]), ..config.nmi.clone() };
    let report = evaluate(&pair, &result, trees, &config.thresholds, &nmi)?;
    Ok((report.passed, report))
}

/// Write the report as a long-format plot table:
/// `size,subsample_index,metric,column,value,passed`.
///
/// Values use shortest round-trip formatting so reloading the file
/// reproduces the report exactly.
pub fn emit_sensitivity_plot_data(report: &SensitivityReport, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut out = Vec::new();
    writeln!(out, "size,subsample_index,metric,column,value,passed")?;
    for (size, outcomes) in &report.per_size {
        for o in outcomes {
            for m in &o.report.per_column {
                if let MetricValue::Applicable(v) = &m.value {
                    writeln!(
                        out,
                        "{size},{},{},{},{},{}",
                        o.subsample_index,
                        m.metric,
                        m.column,
                        format_number(*v),
                        o.passed
                    )?;
                }
            }
            for (metric, v) in &o.report.dataset_level {
                writeln!(
                    out,
                    "{size},{},{},dataset,{},{}",
                    o.subsample_index,
                    metric,
                    format_number(*v),
                    o.passed
                )?;
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
