//! The four data quality metrics, per-column and dataset-level, plus
//! threshold gating.
//!
//! Per-column scores all live in [0, 1] with 1 meaning perfect preservation.
//! The dataset-level score of each metric is the minimum over its applicable
//! columns; columns with undefined metrics (constant vectors, empty
//! anonymized sets) are surfaced as warnings and never gate.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::anonymizer::AnonymizationResult;
use crate::error::{Error, Result};
use crate::gtree::GTree;
use crate::info_theory::{self, MetricOutcome, NmiConfig};
use crate::tabular::{ColumnKind, DatasetPair, Table};

/// Minimum acceptable dataset-level value per metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub pearson_min: f64,
    pub rilm_categorical_min: f64,
    /// Per-column overrides for special-case categorical quasi-identifiers.
    #[serde(default)]
    pub rilm_categorical_special: BTreeMap<String, f64>,
    pub nmiv1_min: f64,
    pub pctns_min: f64,
    /// Numerical RILM does not gate by default.
    #[serde(default)]
    pub rilm_numerical_min: Option<f64>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            pearson_min: 0.90,
            rilm_categorical_min: 0.90,
            rilm_categorical_special: BTreeMap::new(),
            nmiv1_min: 0.80,
            pctns_min: 0.99,
            rilm_numerical_min: None,
        }
    }
}

impl ThresholdConfig {
    fn validate(&self) -> Result<()> {
        let all = [self.pearson_min, self.rilm_categorical_min, self.nmiv1_min, self.pctns_min];
        for t in all
            .into_iter()
            .chain(self.rilm_numerical_min)
            .chain(self.rilm_categorical_special.values().copied())
        {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("threshold {t} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn rilm_categorical_for(&self, column: &str) -> f64 {
        self.rilm_categorical_special.get(column).copied().unwrap_or(self.rilm_categorical_min)
    }
}

/// A per-column metric value, or the reason it is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MetricValue {
    Applicable(f64),
    NotApplicable(String),
}

impl MetricValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            MetricValue::Applicable(v) => Some(*v),
            MetricValue::NotApplicable(_) => None,
        }
    }
}

pub const METRIC_PEARSON: &str = "pearson";
pub const METRIC_RILM_NUMERICAL: &str = "rilm_numerical";
pub const METRIC_RILM_CATEGORICAL: &str = "rilm_categorical";
pub const METRIC_NMIV1: &str = "nmiv1";
pub const METRIC_NMIV2: &str = "nmiv2";
pub const METRIC_PCTNS: &str = "pctns";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMetric {
    pub column: String,
    pub metric: String,
    pub value: MetricValue,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Failure {
    pub metric: String,
    /// Offending column, or `dataset` for dataset-wide gates.
    pub scope: String,
    pub value: f64,
    pub threshold: f64,
}

/// Full evaluation output: per-column values, dataset minima, gate result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_column: Vec<ColumnMetric>,
    pub dataset_level: BTreeMap<String, f64>,
    pub pctns: f64,
    pub passed: bool,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn per_column_value(&self, column: &str, metric: &str) -> Option<f64> {
        self.per_column
            .iter()
            .find(|m| m.column == column && m.metric == metric)
            .and_then(|m| m.value.value())
    }

    /// Flat delimiter-separated rendering: one row per (scope, metric, value).
    pub fn render_flat_csv(&self) -> String {
        let mut out = String::from("scope,metric,value,applicable\n");
        for m in &self.per_column {
            match &m.value {
                MetricValue::Applicable(v) => {
                    out.push_str(&format!("{},{},{},true\n", m.column, m.metric, v));
                }
                MetricValue::NotApplicable(_) => {
                    out.push_str(&format!("{},{},,false\n", m.column, m.metric));
                }
            }
        }
        for (metric, v) in &self.dataset_level {
            out.push_str(&format!("dataset,{metric},{v},true\n"));
        }
        out.push_str(&format!("dataset,passed,{},true\n", u8::from(self.passed)));
        out
    }
}

/// Pearson correlation between the aligned original and anonymized values of
/// a numerical column, floored at 0. Measures preservation of linear
/// relationships; slope and intercept of the fit are irrelevant.
pub fn pearson_rho(pair: &DatasetPair, column: &str) -> Result<MetricValue> {
    let (xs, ys) = pair.aligned_numerical(column)?;
    if xs.len() < 2 {
        return Ok(MetricValue::NotApplicable(format!("{} aligned non-missing pairs (need 2)", xs.len())));
    }
    let constant = |v: &[f64]| v.iter().all(|x| x.to_bits() == v[0].to_bits());
    if constant(&xs) || constant(&ys) {
        return Ok(MetricValue::NotApplicable("constant vector on one side".to_string()));
    }
    // correlation of a vector with itself is 1 by definition; the shortcut
    // keeps identity anonymization at exactly 1.0
    if xs.iter().zip(&ys).all(|(x, y)| x.to_bits() == y.to_bits()) {
        return Ok(MetricValue::Applicable(1.0));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return Ok(MetricValue::NotApplicable("constant vector on one side".to_string()));
    }
    Ok(MetricValue::Applicable((cov / (vx.sqrt() * vy.sqrt())).clamp(0.0, 1.0)))
}

// Shared weighted-RIL aggregation: RILM = 1 - sum(|e| * ril_e) / |A|.
fn rilm_from_classes(rils: &[(usize, f64)]) -> Option<f64> {
    let total: usize = rils.iter().map(|(w, _)| *w).sum();
    if total == 0 {
        return None;
    }
    let loss: f64 = rils.iter().map(|(w, r)| *w as f64 * r).sum::<f64>() / total as f64;
    Some((1.0 - loss).clamp(0.0, 1.0))
}

/// Numerical RILM: preservation of geometric size.
///
/// Each class's perimeter is the max - min spread of the *original* values of
/// its rows, normalized by the original column's full perimeter, weighted by
/// class size and subtracted from 1.
pub fn rilm_numerical(original: &Table, result: &AnonymizationResult, column: &str) -> Result<MetricValue> {
    let raw = original.numerical_column(column)?;
    let present: Vec<f64> = raw.iter().flatten().copied().collect();
    let perim_o = match minmax(&present) {
        Some((lo, hi)) => hi - lo,
        None => 0.0,
    };
    let idx = original.id_index();
    let mut rils = Vec::with_capacity(result.classes.len());
    for class in &result.classes {
        let vals: Vec<f64> = class
            .row_ids
            .iter()
            .filter_map(|id| idx.get(id).and_then(|&i| raw[i]))
            .collect();
        let perim_e = match minmax(&vals) {
            Some((lo, hi)) => hi - lo,
            None => 0.0,
        };
        let ril = if perim_o > 0.0 { perim_e / perim_o } else { 0.0 };
        rils.push((class.len(), ril));
    }
    match rilm_from_classes(&rils) {
        Some(v) => Ok(MetricValue::Applicable(v)),
        None => Ok(MetricValue::NotApplicable("no non-suppressed rows".to_string())),
    }
}

/// Categorical RILM: the class perimeter is the geometric size of the node
/// the class generalizes to (the lca of its original tokens; missing tokens
/// force the root), normalized by the root's size.
pub fn rilm_categorical(
    original: &Table,
    result: &AnonymizationResult,
    column: &str,
    tree: &GTree,
) -> Result<MetricValue> {
    let raw = original.categorical_column(column)?;
    for token in raw.iter().flatten() {
        tree.leaf(token)?;
    }
    let root_size = tree.root_size();
    let idx = original.id_index();
    let mut rils = Vec::with_capacity(result.classes.len());
    let mut zero_root = false;
    for class in &result.classes {
        let mut node: Option<usize> = None;
        let mut any_missing = false;
        for id in &class.row_ids {
            match idx.get(id).and_then(|&i| raw[i].as_deref()) {
                Some(t) => {
                    node = Some(match node {
                        None => tree.leaf(t)?.index,
                        Some(c) => tree.lca_with_node(t, c)?.index,
                    });
                }
                None => any_missing = true,
            }
        }
        let node_index = match node {
            Some(n) if !any_missing => n,
            _ => tree.root().index,
        };
        let size = tree.node(node_index)?.size;
        let ril = if root_size > 0.0 {
            size / root_size
        } else {
            zero_root = true;
            0.0
        };
        rils.push((class.len(), ril));
    }
    if zero_root {
        log::warn!("g-tree for '{column}' has root size 0; every RIL treated as 0");
    }
    match rilm_from_classes(&rils) {
        Some(v) => Ok(MetricValue::Applicable(v)),
        None => Ok(MetricValue::NotApplicable("no non-suppressed rows".to_string())),
    }
}

/// Fraction of records surviving suppression.
pub fn pctns(result: &AnonymizationResult, n_original: usize) -> Result<f64> {
    if n_original == 0 {
        return Err(Error::Precondition("empty original table".to_string()));
    }
    Ok(result.n_anonymized() as f64 / n_original as f64)
}

fn minmax(values: &[f64]) -> Option<(f64, f64)> {
    let mut it = values.iter();
    let first = *it.next()?;
    let mut lo = first;
    let mut hi = first;
    for &v in it {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Some((lo, hi))
}

/// Compute every applicable metric and gate the dataset against thresholds.
///
/// Numerical quasi-identifiers get Pearson, NMIv1, and numerical RILM;
/// categorical ones get categorical RILM; PCTNS is dataset-wide. Dataset
/// values are minima over applicable columns. Not-applicable columns are
/// listed with warnings but never gate.
pub fn evaluate(
    pair: &DatasetPair,
    result: &AnonymizationResult,
    gtrees: &HashMap<String, GTree>,
    thresholds: &ThresholdConfig,
    nmi_config: &NmiConfig,
) -> Result<MetricReport> {
    thresholds.validate()?;
    let original = &pair.original;
    let mut per_column = Vec::new();
    let mut warnings = Vec::new();

    for name in original.quasi_identifiers() {
        let kind = original.column_schema(&name)?.kind;
        match kind {
            ColumnKind::Numerical => {
                push_metric(&mut per_column, &mut warnings, &name, METRIC_PEARSON, pearson_rho(pair, &name)?);
                push_metric(
                    &mut per_column,
                    &mut warnings,
                    &name,
                    METRIC_RILM_NUMERICAL,
                    rilm_numerical(original, result, &name)?,
                );
                let nmi = match info_theory::nmiv1(pair, &name, nmi_config)? {
                    MetricOutcome::Applicable(s) => MetricValue::Applicable(s.value),
                    MetricOutcome::NotApplicable(r) => MetricValue::NotApplicable(r),
                };
                push_metric(&mut per_column, &mut warnings, &name, METRIC_NMIV1, nmi);
            }
            ColumnKind::Categorical => {
                let tree = gtrees.get(&name).ok_or_else(|| {
                    Error::Precondition(format!("categorical quasi-identifier '{name}' has no g-tree"))
                })?;
                push_metric(
                    &mut per_column,
                    &mut warnings,
                    &name,
                    METRIC_RILM_CATEGORICAL,
                    rilm_categorical(original, result, &name, tree)?,
                );
            }
        }
    }

    let pctns_value = pctns(result, original.n_rows())?;

    let mut dataset_level = BTreeMap::new();
    for metric in [METRIC_PEARSON, METRIC_RILM_NUMERICAL, METRIC_RILM_CATEGORICAL, METRIC_NMIV1] {
        if let Some((_, v)) = dataset_min(&per_column, metric) {
            dataset_level.insert(metric.to_string(), v);
        }
    }
    dataset_level.insert(METRIC_PCTNS.to_string(), pctns_value);

    let mut failures = Vec::new();
    if let Some((col, v)) = dataset_min(&per_column, METRIC_PEARSON) {
        if v < thresholds.pearson_min {
            failures.push(Failure {
                metric: METRIC_PEARSON.to_string(),
                scope: col,
                value: v,
                threshold: thresholds.pearson_min,
            });
        }
    }
    if let Some((col, v)) = dataset_min(&per_column, METRIC_NMIV1) {
        if v < thresholds.nmiv1_min {
            failures.push(Failure {
                metric: METRIC_NMIV1.to_string(),
                scope: col,
                value: v,
                threshold: thresholds.nmiv1_min,
            });
        }
    }
    if let Some(tmin) = thresholds.rilm_numerical_min {
        if let Some((col, v)) = dataset_min(&per_column, METRIC_RILM_NUMERICAL) {
            if v < tmin {
                failures.push(Failure {
                    metric: METRIC_RILM_NUMERICAL.to_string(),
                    scope: col,
                    value: v,
                    threshold: tmin,
                });
            }
        }
    }
    // categorical RILM gates per column so special-case thresholds apply
    for m in &per_column {
        if m.metric != METRIC_RILM_CATEGORICAL {
            continue;
        }
        if let Some(v) = m.value.value() {
            let t = thresholds.rilm_categorical_for(&m.column);
            if v < t {
                failures.push(Failure {
                    metric: METRIC_RILM_CATEGORICAL.to_string(),
                    scope: m.column.clone(),
                    value: v,
                    threshold: t,
                });
            }
        }
    }
    if pctns_value < thresholds.pctns_min {
        failures.push(Failure {
            metric: METRIC_PCTNS.to_string(),
            scope: "dataset".to_string(),
            value: pctns_value,
            threshold: thresholds.pctns_min,
        });
    }

    Ok(MetricReport {
        per_column,
        dataset_level,
        pctns: pctns_value,
        passed: failures.is_empty(),
        failures,
        warnings,
    })
}

fn push_metric(
    per_column: &mut Vec<ColumnMetric>,
    warnings: &mut Vec<String>,
    column: &str,
    metric: &str,
    value: MetricValue,
) {
    if let MetricValue::NotApplicable(reason) = &value {
        warnings.push(format!("{metric}({column}) not applicable: {reason}"));
    }
    per_column.push(ColumnMetric { column: column.to_string(), metric: metric.to_string(), value });
}

// Minimum applicable value for a metric plus the column attaining it.
fn dataset_min(per_column: &[ColumnMetric], metric: &str) -> Option<(String, f64)> {
    per_column
        .iter()
        .filter(|m| m.metric == metric)
        .filter_map(|m| m.value.value().map(|v| (m.column.clone(), v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anonymizer::{anonymize, to_pair, AnonymizeConfig};
    use crate::gtree::example_tree;
    use crate::tabular::{ColumnData, ColumnRole, ColumnSchema};

    fn example_table() -> Table {
        Table::new(
            vec![
                ColumnSchema::numerical("n_accept", ColumnRole::QuasiIdentifier),
                ColumnSchema::numerical("n_reject", ColumnRole::QuasiIdentifier),
            ],
            vec![
                ColumnData::Numerical(vec![Some(1.0), Some(1.0), Some(2.0), Some(2.0), Some(11.0)]),
                ColumnData::Numerical(vec![Some(1.0), Some(2.0), Some(1.0), Some(1.0), Some(1.0)]),
            ],
            vec![1, 2, 3, 4, 5],
        )
        .unwrap()
    }

    fn example_pair() -> (Table, AnonymizationResult, DatasetPair) {
        let table = example_table();
        let result = anonymize(
            &table,
            &["n_accept".to_string(), "n_reject".to_string()],
            &HashMap::new(),
            &AnonymizeConfig::new(2),
        )
        .unwrap();
        let pair = to_pair(&table, &result).unwrap();
        (table, result, pair)
    }

    #[test]
    fn pearson_on_example_dataset() {
        let (_, _, pair) = example_pair();
        let accept = pearson_rho(&pair, "n_accept").unwrap().value().unwrap();
        let reject = pearson_rho(&pair, "n_reject").unwrap().value().unwrap();
        assert!((accept - 1.0).abs() < 1e-12, "{accept}");
        assert!((reject - 0.58).abs() <= 0.005, "{reject}");
    }

    #[test]
    fn pearson_affine_invariance_and_floor() {
        let table = Table::new(
            vec![ColumnSchema::numerical("x", ColumnRole::QuasiIdentifier)],
            vec![ColumnData::Numerical((0..50).map(|i| Some(i as f64)).collect())],
            (0..50u64).collect(),
        )
        .unwrap();
        let scaled = Table::new(
            table.schema().to_vec(),
            vec![ColumnData::Numerical((0..50).map(|i| Some(2.0 * i as f64 + 3.0)).collect())],
            table.row_ids().to_vec(),
        )
        .unwrap();
        let pair = crate::tabular::align_pair(&table, &scaled, &Default::default()).unwrap();
        assert_eq!(pearson_rho(&pair, "x").unwrap().value().unwrap(), 1.0);

        let negated = Table::new(
            table.schema().to_vec(),
            vec![ColumnData::Numerical((0..50).map(|i| Some(-(i as f64))).collect())],
            table.row_ids().to_vec(),
        )
        .unwrap();
        let pair = crate::tabular::align_pair(&table, &negated, &Default::default()).unwrap();
        assert_eq!(pearson_rho(&pair, "x").unwrap().value().unwrap(), 0.0);
    }

    #[test]
    fn rilm_numerical_on_example_dataset() {
        let (table, result, _) = example_pair();
        let accept = rilm_numerical(&table, &result, "n_accept").unwrap().value().unwrap();
        let reject = rilm_numerical(&table, &result, "n_reject").unwrap().value().unwrap();
        assert_eq!(accept, 1.0);
        assert_eq!(reject, 0.5);
    }

    #[test]
    fn rilm_single_class_with_spread_is_zero() {
        let table = Table::new(
            vec![ColumnSchema::numerical("x", ColumnRole::QuasiIdentifier)],
            vec![ColumnData::Numerical(vec![Some(0.0), Some(1.0), Some(2.0)])],
            vec![0, 1, 2],
        )
        .unwrap();
        let result = anonymize(&table, &["x".to_string()], &HashMap::new(), &AnonymizeConfig::new(3)).unwrap();
        assert_eq!(result.classes.len(), 1);
        let v = rilm_numerical(&table, &result, "x").unwrap().value().unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn rilm_categorical_perimeter_ratios() {
        let table = Table::new(
            vec![ColumnSchema::categorical("c", ColumnRole::QuasiIdentifier)],
            vec![ColumnData::Categorical(vec![
                Some("foo".into()),
                Some("bar".into()),
                Some("test".into()),
                Some("test".into()),
            ])],
            vec![0, 1, 2, 3],
        )
        .unwrap();
        let mut gtrees = HashMap::new();
        gtrees.insert("c".to_string(), example_tree());
        let result = anonymize(&table, &["c".to_string()], &gtrees, &AnonymizeConfig::new(2)).unwrap();
        // classes {foo,bar} -> foobar (10/100 = 0.1) and {test,test} -> leaf (0)
        let v = rilm_categorical(&table, &result, "c", &gtrees["c"]).unwrap().value().unwrap();
        assert!((v - (1.0 - (2.0 * 0.1 + 2.0 * 0.0) / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn rilm_categorical_all_leaves_kept_is_one() {
        let table = Table::new(
            vec![ColumnSchema::categorical("c", ColumnRole::QuasiIdentifier)],
            vec![ColumnData::Categorical(vec![Some("foo".into()); 4])],
            vec![0, 1, 2, 3],
        )
        .unwrap();
        let mut gtrees = HashMap::new();
        gtrees.insert("c".to_string(), example_tree());
        let result = anonymize(&table, &["c".to_string()], &gtrees, &AnonymizeConfig::new(2)).unwrap();
        let v = rilm_categorical(&table, &result, "c", &gtrees["c"]).unwrap().value().unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn pctns_values() {
        let (table, result, _) = example_pair();
        assert_eq!(pctns(&result, table.n_rows()).unwrap(), 0.8);
        let none_suppressed = AnonymizationResult {
            classes: result.classes.clone(),
            suppressed_row_ids: Default::default(),
            k: 2,
        };
        assert_eq!(pctns(&none_suppressed, 4).unwrap(), 1.0);
        let all_suppressed = AnonymizationResult {
            classes: vec![],
            suppressed_row_ids: (1..=5).collect(),
            k: 2,
        };
        assert_eq!(pctns(&all_suppressed, 5).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_example_dataset_fails_on_pearson_and_pctns() {
        let (_, result, pair) = example_pair();
        let report = evaluate(
            &pair,
            &result,
            &HashMap::new(),
            &ThresholdConfig::default(),
            &NmiConfig::default(),
        )
        .unwrap();
        assert!(!report.passed);
        assert_eq!(report.dataset_level[METRIC_RILM_NUMERICAL], 0.5);
        assert_eq!(report.pctns, 0.8);
        let failed_metrics: Vec<&str> = report.failures.iter().map(|f| f.metric.as_str()).collect();
        assert!(failed_metrics.contains(&METRIC_PEARSON), "{failed_metrics:?}");
        assert!(failed_metrics.contains(&METRIC_PCTNS), "{failed_metrics:?}");
        // nmiv1 undefined on 4 aligned pairs: warned, never gates
        assert!(!failed_metrics.contains(&METRIC_NMIV1));
        assert!(report.warnings.iter().any(|w| w.contains("nmiv1")));
        let pearson_fail = report.failures.iter().find(|f| f.metric == METRIC_PEARSON).unwrap();
        assert_eq!(pearson_fail.scope, "n_reject");
    }

    #[test]
    fn evaluate_identity_pair_passes() {
        let table = Table::new(
            vec![ColumnSchema::numerical("x", ColumnRole::QuasiIdentifier)],
            vec![ColumnData::Numerical((0..40).map(|i| Some(f64::from(i % 5))).collect())],
            (0..40u64).collect(),
        )
        .unwrap();
        let result = anonymize(&table, &["x".to_string()], &HashMap::new(), &AnonymizeConfig::new(8)).unwrap();
        assert!(result.suppressed_row_ids.is_empty());
        let pair = to_pair(&table, &result).unwrap();
        // identical rows per class: anonymized == original
        assert_eq!(pair.anonymized.numerical_column("x").unwrap(), table.numerical_column("x").unwrap());
        let report = evaluate(
            &pair,
            &result,
            &HashMap::new(),
            &ThresholdConfig::default(),
            &NmiConfig::default(),
        )
        .unwrap();
        assert!(report.passed, "{:?}", report.failures);
        assert_eq!(report.dataset_level[METRIC_PEARSON], 1.0);
        assert_eq!(report.dataset_level[METRIC_RILM_NUMERICAL], 1.0);
        assert_eq!(report.pctns, 1.0);
    }

    #[test]
    fn special_rilm_threshold_applies_per_column() {
        let table = Table::new(
            vec![ColumnSchema::categorical("c", ColumnRole::QuasiIdentifier)],
            vec![ColumnData::Categorical(vec![
                Some("foo".into()),
                Some("bar".into()),
                Some("foo".into()),
                Some("bar".into()),
            ])],
            vec![0, 1, 2, 3],
        )
        .unwrap();
        let mut gtrees = HashMap::new();
        gtrees.insert("c".to_string(), example_tree());
        let result = anonymize(&table, &["c".to_string()], &gtrees, &AnonymizeConfig::new(4)).unwrap();
        let pair = to_pair(&table, &result).unwrap();
        // single class {foo,bar} generalizes to foobar: RILM = 1 - 0.1 = 0.9
        let mut thresholds = ThresholdConfig { rilm_categorical_min: 0.99, ..ThresholdConfig::default() };
        let report = evaluate(&pair, &result, &gtrees, &thresholds, &NmiConfig::default()).unwrap();
        assert!(report.failures.iter().any(|f| f.metric == METRIC_RILM_CATEGORICAL && f.scope == "c"));
        thresholds.rilm_categorical_special.insert("c".to_string(), 0.60);
        let report = evaluate(&pair, &result, &gtrees, &thresholds, &NmiConfig::default()).unwrap();
        assert!(!report.failures.iter().any(|f| f.metric == METRIC_RILM_CATEGORICAL));
    }

    #[test]
    fn flat_csv_contains_dataset_rows() {
        let (_, result, pair) = example_pair();
        let report = evaluate(
            &pair,
            &result,
            &HashMap::new(),
            &ThresholdConfig::default(),
            &NmiConfig::default(),
        )
        .unwrap();
        let csv = report.render_flat_csv();
        assert!(csv.contains("dataset,pctns,0.8,true"));
        assert!(csv.contains("n_reject,rilm_numerical,0.5,true"));
    }
}
