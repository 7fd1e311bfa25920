use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;

use anondq::anonymizer::{anonymize, ensure_gtrees, reconstruct_result, to_pair};
use anondq::justification::{
    compare_metrics, evaluate_metric, run_simulation, write_curve_csv, write_label_records,
    METRIC_ONE_MINUS_ILM, DEFAULT_GRID_STEP,
};
use anondq::minimization::{emit_sensitivity_plot_data, sensitivity_analysis};
use anondq::quality::{self, evaluate};
use anondq::tabular::{align_pair, load_table, write_table, ColumnRole, Table};
use anondq::{Error, Result};

use crate::config::RunConfig;

/// Process exit codes: 0 success/pass, 1 data-quality fail (metrics only),
/// 2 usage or config error, 3 runtime error.
pub const EXIT_QUALITY_FAIL: u8 = 1;

fn ensure_out_dir(config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&config.out_dir)?;
    Ok(())
}

fn load_original(config: &RunConfig, path: &Path) -> Result<Table> {
    load_table(path, config.schema(), &config.load_options)
}

// The anonymized file never carries the sensitive attribute.
fn load_anonymized(config: &RunConfig, path: &Path) -> Result<Table> {
    let schema: Vec<_> = config
        .schema()
        .iter()
        .filter(|c| c.role != ColumnRole::SensitiveAttribute)
        .cloned()
        .collect();
    load_table(path, &schema, &config.load_options)
}

pub fn cmd_metrics(
    config: &RunConfig,
    original_path: &Path,
    anonymized_path: Option<&Path>,
    k: Option<usize>,
) -> Result<u8> {
    ensure_out_dir(config)?;
    let original = load_original(config, original_path)?;
    let quasi_ids = original.quasi_identifiers();
    let mut gtrees = config.gtrees()?;
    ensure_gtrees(&original, &quasi_ids, &mut gtrees)?;

    let (result, pair) = match (anonymized_path, k) {
        (Some(anon_path), _) => {
            let anonymized = load_anonymized(config, anon_path)?;
            let result = reconstruct_result(&original, &anonymized, &quasi_ids)?;
            let pair = align_pair(&original, &anonymized, &result.suppressed_row_ids)?;
            (result, pair)
        }
        (None, Some(_)) => {
            let anc = config.anonymize_config(k)?;
            let result = anonymize(&original, &quasi_ids, &gtrees, &anc)?;
            let pair = to_pair(&original, &result)?;
            (result, pair)
        }
        (None, None) => {
            return Err(Error::Config("metrics needs --anonymized <path> or --k <k>".to_string()));
        }
    };

    let report = evaluate(&pair, &result, &gtrees, &config.thresholds(), &config.nmi())?;

    let json_path = config.out_dir.join("report.json");
    std::fs::write(&json_path, serde_json::to_vec_pretty(&report)?)?;
    let csv_path = config.out_dir.join("report.csv");
    std::fs::write(&csv_path, report.render_flat_csv())?;

    for (metric, value) in &report.dataset_level {
        println!("{metric}: {value:.4}");
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    if report.passed {
        println!("passed: all dataset-level metrics meet their thresholds");
        println!("wrote {} and {}", json_path.display(), csv_path.display());
        Ok(0)
    } else {
        for f in &report.failures {
            println!(
                "FAIL {} ({}): {:.4} < {:.4}",
                f.metric, f.scope, f.value, f.threshold
            );
        }
        println!("wrote {} and {}", json_path.display(), csv_path.display());
        Ok(EXIT_QUALITY_FAIL)
    }
}

#[derive(Serialize)]
struct SuppressionManifest {
    k: usize,
    n_original: usize,
    n_anonymized: usize,
    n_classes: usize,
    suppressed_row_ids: BTreeSet<u64>,
}

pub fn cmd_anonymize(config: &RunConfig, input: &Path, k: Option<usize>) -> Result<u8> {
    ensure_out_dir(config)?;
    let table = load_original(config, input)?;
    let quasi_ids = table.quasi_identifiers();
    let mut gtrees = config.gtrees()?;
    ensure_gtrees(&table, &quasi_ids, &mut gtrees)?;
    let anc = config.anonymize_config(k)?;
    let result = anonymize(&table, &quasi_ids, &gtrees, &anc)?;
    let pair = to_pair(&table, &result)?;

    let out_table = config.out_dir.join("anonymized.csv");
    write_table(&pair.anonymized, &out_table, &config.load_options)?;
    let manifest = SuppressionManifest {
        k: result.k,
        n_original: table.n_rows(),
        n_anonymized: result.n_anonymized(),
        n_classes: result.classes.len(),
        suppressed_row_ids: result.suppressed_row_ids.clone(),
    };
    let out_manifest = config.out_dir.join("suppressed.json");
    std::fs::write(&out_manifest, serde_json::to_vec_pretty(&manifest)?)?;

    println!(
        "anonymized {} rows into {} classes, suppressed {}",
        result.n_anonymized(),
        result.classes.len(),
        result.suppressed_row_ids.len()
    );
    println!("wrote {} and {}", out_table.display(), out_manifest.display());
    Ok(0)
}

fn canonical_metric_name(name: &str) -> String {
    // accept the short alias used when comparing against the ILM baseline
    if name == "ilm" {
        METRIC_ONE_MINUS_ILM.to_string()
    } else {
        name.to_string()
    }
}

pub fn cmd_justify(
    config: &RunConfig,
    source_path: &Path,
    metric_names: Option<Vec<String>>,
    alpha: Option<f64>,
) -> Result<u8> {
    ensure_out_dir(config)?;
    let source = load_original(config, source_path)?;
    let sim = config.simulation_config(alpha);
    let gtrees = config.gtrees()?;
    let records = run_simulation(&source, &gtrees, &sim)?;

    let labels_path = config.out_dir.join("labels.csv");
    write_label_records(&records, &labels_path)?;
    println!("wrote {} ({} records)", labels_path.display(), records.len());

    let names: Vec<String> = metric_names
        .map(|ms| ms.into_iter().map(|m| canonical_metric_name(&m)).collect())
        .unwrap_or_else(|| {
            [
                quality::METRIC_PEARSON,
                quality::METRIC_RILM_NUMERICAL,
                quality::METRIC_RILM_CATEGORICAL,
                quality::METRIC_NMIV1,
                quality::METRIC_NMIV2,
                METRIC_ONE_MINUS_ILM,
                quality::METRIC_PCTNS,
            ]
            .iter()
            .map(|s| s.to_string())
            .collect()
        });

    let mut evaluated = Vec::new();
    for name in &names {
        match evaluate_metric(&records, name, DEFAULT_GRID_STEP) {
            Ok(eval) => {
                let json_path = config.out_dir.join(format!("evaluation_{name}.json"));
                std::fs::write(&json_path, serde_json::to_vec_pretty(&eval)?)?;
                let curve_path = config.out_dir.join(format!("curve_{name}.csv"));
                write_curve_csv(&eval, &curve_path)?;
                println!(
                    "{name}: AUC {:.4}, AP {:.4}, recommended threshold {}",
                    eval.auc,
                    eval.average_precision,
                    match eval.recommended_threshold {
                        Some(t) if eval.total_error_monotone => format!("{t:.2}"),
                        Some(t) => format!("{t:.2} (error curve not monotone; recommendation invalid)"),
                        None => "none".to_string(),
                    }
                );
                evaluated.push(name.clone());
            }
            Err(Error::Lookup(msg)) => {
                // metric not present on these records (e.g. no categorical
                // quasi-identifiers): skip unless explicitly requested
                println!("skipping {name}: {msg}");
            }
            Err(e) => return Err(e),
        }
    }
    if evaluated.is_empty() {
        return Err(Error::Evaluation("no metric could be evaluated on the simulation output".to_string()));
    }
    if evaluated.len() >= 2 {
        let comparison = compare_metrics(&records, &evaluated)?;
        let path = config.out_dir.join("comparison.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&comparison)?)?;
        for p in &comparison.pairwise {
            println!(
                "{} vs {}: dAUC {:+.4}, dAP {:+.4}{}",
                p.metric_a,
                p.metric_b,
                p.delta_auc,
                p.delta_ap,
                if p.comparable_efficacy { " (comparable efficacy)" } else { "" }
            );
        }
        println!("wrote {}", path.display());
    }
    Ok(0)
}

pub fn cmd_minimize(config: &RunConfig, input: &Path, n: Option<usize>) -> Result<u8> {
    ensure_out_dir(config)?;
    let table = load_original(config, input)?;
    let quasi_ids = table.quasi_identifiers();
    let gtrees = config.gtrees()?;
    let sens = config.sensitivity_config(n)?;
    let report = sensitivity_analysis(&table, &quasi_ids, &gtrees, &sens)?;

    let json_path = config.out_dir.join("sensitivity_report.json");
    std::fs::write(&json_path, serde_json::to_vec_pretty(&report)?)?;
    let plot_path = config.out_dir.join("plot_data.csv");
    emit_sensitivity_plot_data(&report, &plot_path)?;

    match report.minimum_passing_size {
        Some(size) => {
            println!("minimum passing sample size: {size}");
            if let Some(confirmation) = &report.confirmation {
                println!(
                    "fixed analysis sub-sample of {} rows confirmed: {}",
                    confirmation.row_ids.len(),
                    if confirmation.passed { "passes" } else { "FAILS" }
                );
            }
        }
        None => {
            println!("no size in [n, 2n] meets all thresholds; see per-size failures in the report");
        }
    }
    println!("wrote {} and {}", json_path.display(), plot_path.display());
    Ok(0)
}
