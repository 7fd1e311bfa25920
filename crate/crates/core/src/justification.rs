//! Empirical justification pipeline: synthetic dataset generation, batch
//! anonymization sweeps, label collection, classifier-style evaluation of
//! the quality metrics, and threshold recommendation.
//!
//! Each quality metric is treated as a classifier score predicting whether
//! an anonymized dataset is "good enough" (statistical tests agree with the
//! original). ROC/PR analysis over many simulated (original, anonymized)
//! pairs then compares metrics and recommends thresholds.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::anonymizer::{anonymize, ensure_gtrees, to_pair, AnonymizationResult, AnonymizeConfig};
use crate::error::{Error, Result};
use crate::gtree::GTree;
use crate::info_theory::{self, derive_seed, MetricOutcome, NmiConfig};
use crate::quality::{self, ThresholdConfig, METRIC_NMIV2, METRIC_PCTNS};
use crate::stat_tests::{label_pair, LabelRecord};
use crate::tabular::{ColumnData, ColumnKind, ColumnRole, Table};

pub const METRIC_ONE_MINUS_ILM: &str = "one_minus_ilm";

/// Sweep configuration for [`run_simulation`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_generators: usize,
    pub runs_per_generator: usize,
    /// Synthetic table sizes, cycled across runs; each must not exceed the
    /// source size.
    pub row_counts: Vec<usize>,
    pub k_values: Vec<usize>,
    /// Each run selects 1..=max_qid_subset quasi-identifiers uniformly.
    pub max_qid_subset: usize,
    pub alpha: f64,
    pub min_group_size: usize,
    pub seed: u64,
    pub nmi: NmiConfig,
    pub thresholds: ThresholdConfig,
    /// Simulation aborts when more than this fraction of applications fail.
    pub max_failure_frac: f64,
}

impl SimulationConfig {
    /// A configuration sized for workstation runs: 2 generators x 25 runs
    /// x 4 k-values = 200 anonymization applications.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            n_generators: 2,
            runs_per_generator: 25,
            row_counts: vec![600, 900, 1200],
            k_values: vec![2, 5, 10, 25],
            max_qid_subset: 3,
            alpha: 0.05,
            min_group_size: 30,
            seed,
            nmi: NmiConfig::default(),
            thresholds: ThresholdConfig::default(),
            max_failure_frac: 0.10,
        }
    }

    pub fn n_applications(&self) -> usize {
        self.n_generators * self.runs_per_generator * self.k_values.len()
    }
}

// Per-column marginal captured from the source.
#[derive(Debug, Clone)]
enum Marginal {
    Numerical { sorted: Vec<f64>, missing_rate: f64 },
    Categorical { tokens: Vec<String>, cumulative: Vec<f64>, missing_rate: f64 },
}

/// Parametric resampling generator: empirical per-column marginals tied
/// together by a Gaussian copula over rank-transformed latent scores.
#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    schema: Vec<crate::tabular::ColumnSchema>,
    marginals: Vec<Marginal>,
    chol: Vec<Vec<f64>>,
    base_seed: u64,
}

/// Fit a generator capturing per-column marginals and pairwise dependence.
/// Requires at least 100 source rows.
pub fn fit_generator(source: &Table, seed: u64) -> Result<SyntheticGenerator> {
    let n = source.n_rows();
    if n < 100 {
        return Err(Error::Precondition(format!("generator needs at least 100 source rows, got {n}")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let d = source.schema().len();
    let mut marginals = Vec::with_capacity(d);
    let mut latent: Vec<Vec<f64>> = Vec::with_capacity(d);

    for cs in source.schema() {
        match cs.kind {
            ColumnKind::Numerical => {
                let raw = source.numerical_column(&cs.name)?;
                let mut present: Vec<f64> = raw.iter().flatten().copied().collect();
                let missing_rate = 1.0 - present.len() as f64 / n as f64;
                // midrank transform to latent normal scores
                let ranks = midranks(raw);
                let m = present.len().max(1) as f64;
                let z: Vec<f64> = raw
                    .iter()
                    .zip(&ranks)
                    .map(|(v, r)| match v {
                        Some(_) => normal.inverse_cdf((r / (m + 1.0)).clamp(1e-9, 1.0 - 1e-9)),
                        None => 0.0,
                    })
                    .collect();
                present.sort_unstable_by(f64::total_cmp);
                marginals.push(Marginal::Numerical { sorted: present, missing_rate });
                latent.push(z);
            }
            ColumnKind::Categorical => {
                let raw = source.categorical_column(&cs.name)?;
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                let mut n_present = 0usize;
                for t in raw.iter().flatten() {
                    *counts.entry(t.as_str()).or_insert(0) += 1;
                    n_present += 1;
                }
                let missing_rate = 1.0 - n_present as f64 / n as f64;
                // stable order: by frequency descending then token
                let mut freq: Vec<(&str, usize)> = counts.into_iter().collect();
                freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
                let mut tokens = Vec::with_capacity(freq.len());
                let mut cumulative = Vec::with_capacity(freq.len());
                let mut acc = 0.0;
                let mut midpoint: HashMap<&str, f64> = HashMap::new();
                for (t, c) in &freq {
                    let p = *c as f64 / n_present.max(1) as f64;
                    midpoint.insert(t, acc + p / 2.0);
                    acc += p;
                    tokens.push((*t).to_string());
                    cumulative.push(acc);
                }
                if let Some(last) = cumulative.last_mut() {
                    *last = 1.0;
                }
                let z: Vec<f64> = raw
                    .iter()
                    .map(|v| match v {
                        Some(t) => normal.inverse_cdf(midpoint[t.as_str()].clamp(1e-9, 1.0 - 1e-9)),
                        None => 0.0,
                    })
                    .collect();
                marginals.push(Marginal::Categorical { tokens, cumulative, missing_rate });
                latent.push(z);
            }
        }
    }

    let corr = correlation_matrix(&latent);
    let chol = cholesky_with_shrinkage(corr)?;
    Ok(SyntheticGenerator { schema: source.schema().to_vec(), marginals, chol, base_seed: seed })
}

impl SyntheticGenerator {
    /// Draw a synthetic table of `n` rows. Different `run_tag`s give
    /// independent samples from the same fitted model.
    pub fn sample(&self, n: usize, run_tag: u64) -> Result<Table> {
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let d = self.schema.len();
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(self.base_seed, &[run_tag]));
        let mut columns: Vec<ColumnData> = self
            .schema
            .iter()
            .map(|cs| match cs.kind {
                ColumnKind::Numerical => ColumnData::Numerical(Vec::with_capacity(n)),
                ColumnKind::Categorical => ColumnData::Categorical(Vec::with_capacity(n)),
            })
            .collect();

        let mut raw = vec![0.0f64; d];
        for _ in 0..n {
            for slot in raw.iter_mut() {
                *slot = sample_standard_normal(&mut rng);
            }
            for (ci, marginal) in self.marginals.iter().enumerate() {
                // correlate through the Cholesky factor
                let mut z = 0.0;
                for (j, l) in self.chol[ci].iter().enumerate() {
                    z += l * raw[j];
                }
                let u = normal.cdf(z);
                let missing: bool = match marginal {
                    Marginal::Numerical { missing_rate, .. } | Marginal::Categorical { missing_rate, .. } => {
                        *missing_rate > 0.0 && rng.random::<f64>() < *missing_rate
                    }
                };
                match (&mut columns[ci], marginal) {
                    (ColumnData::Numerical(col), Marginal::Numerical { sorted, .. }) => {
                        col.push(if missing || sorted.is_empty() { None } else { Some(empirical_quantile(sorted, u)) });
                    }
                    (ColumnData::Categorical(col), Marginal::Categorical { tokens, cumulative, .. }) => {
                        if missing || tokens.is_empty() {
                            col.push(None);
                        } else {
                            let pos = cumulative.partition_point(|&c| c < u).min(tokens.len() - 1);
                            col.push(Some(tokens[pos].clone()));
                        }
                    }
                    _ => unreachable!("marginal kind matches column kind by construction"),
                }
            }
        }
        Table::new(self.schema.clone(), columns, (0..n as u64).collect())
    }
}

fn sample_standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn empirical_quantile(sorted: &[f64], u: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let pos = u.clamp(0.0, 1.0) * (m - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(m - 1);
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

// Average ranks (1-based) over non-missing entries; missing entries get 0.
fn midranks(values: &[Option<f64>]) -> Vec<f64> {
    let mut present: Vec<(f64, usize)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|x| (x, i)))
        .collect();
    present.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < present.len() {
        let mut j = i;
        while j + 1 < present.len() && present[j + 1].0 == present[i].0 {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for item in &present[i..=j] {
            ranks[item.1] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn correlation_matrix(latent: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = latent.len();
    let n = latent.first().map(|c| c.len()).unwrap_or(0) as f64;
    let means: Vec<f64> = latent.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let stds: Vec<f64> = latent
        .iter()
        .zip(&means)
        .map(|(c, m)| (c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
        .collect();
    let mut corr = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..=a {
            let v = if stds[a] > 0.0 && stds[b] > 0.0 {
                let cov = latent[a]
                    .iter()
                    .zip(&latent[b])
                    .map(|(x, y)| (x - means[a]) * (y - means[b]))
                    .sum::<f64>()
                    / n;
                (cov / (stds[a] * stds[b])).clamp(-0.999, 0.999)
            } else {
                0.0
            };
            corr[a][b] = if a == b { 1.0 } else { v };
            corr[b][a] = corr[a][b];
        }
    }
    corr
}

// Cholesky factor of the correlation matrix, shrinking towards the identity
// until positive definite.
fn cholesky_with_shrinkage(mut corr: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let d = corr.len();
    let mut lambda = 0.0;
    for _ in 0..8 {
        if let Some(l) = try_cholesky(&corr) {
            return Ok(l);
        }
        lambda = if lambda == 0.0 { 1e-6 } else { lambda * 100.0 };
        for (a, row) in corr.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = if a == b { 1.0 } else { *v * (1.0 - lambda) };
            }
        }
    }
    Err(Error::Evaluation(format!("correlation matrix of size {d} is not positive definite")))
}

fn try_cholesky(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let d = m.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = m[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 1e-12 {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

/// Dataset-level information loss baseline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IlmScore {
    /// `sum IL(e) / |A|` over numerical quasi-identifiers.
    pub raw: f64,
    /// `1 - raw / n_quasi_identifiers`, clamped into [0, 1] for
    /// comparability with the column-level metrics.
    pub normalized: f64,
}

/// The classic dataset-level ILM over the numerical quasi-identifiers in
/// `quasi_ids`, kept as the comparison baseline for numerical RILM.
pub fn ilm_dataset(original: &Table, result: &AnonymizationResult, quasi_ids: &[String]) -> Result<Option<IlmScore>> {
    let mut numeric = Vec::new();
    for name in quasi_ids {
        if original.column_schema(name)?.kind == ColumnKind::Numerical {
            numeric.push(name.clone());
        }
    }
    if numeric.is_empty() {
        return Ok(None);
    }
    let n_anon = result.n_anonymized();
    if n_anon == 0 {
        return Ok(None);
    }
    let idx = original.id_index();
    let mut perim_o = Vec::with_capacity(numeric.len());
    for name in &numeric {
        let present: Vec<f64> = original.numerical_column(name)?.iter().flatten().copied().collect();
        let p = match present.len() {
            0 => 0.0,
            _ => {
                let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            }
        };
        perim_o.push(p);
    }
    let mut total = 0.0;
    for class in &result.classes {
        let mut ril_sum = 0.0;
        for (ci, name) in numeric.iter().enumerate() {
            let raw = original.numerical_column(name)?;
            let vals: Vec<f64> = class.row_ids.iter().filter_map(|id| idx.get(id).and_then(|&i| raw[i])).collect();
            let perim_e = match vals.len() {
                0 | 1 => 0.0,
                _ => {
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    hi - lo
                }
            };
            if perim_o[ci] > 0.0 {
                ril_sum += perim_e / perim_o[ci];
            }
        }
        total += class.len() as f64 * ril_sum;
    }
    let raw = total / n_anon as f64;
    let normalized = (1.0 - raw / numeric.len() as f64).clamp(0.0, 1.0);
    Ok(Some(IlmScore { raw, normalized }))
}

/// The validation random model: `t = X + b*X*Y + c*Z` with X scaled to
/// 1000 * U[0,1] (optionally rounded to `rounding` decimal places, negative
/// for powers of ten) and Y, Z independent U[0,1]. Returns (X, t) playing
/// the roles of original and anonymized values.
pub fn gen_random_model(
    n: usize,
    b: f64,
    c: f64,
    rounding: Option<i32>,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..=1.0).contains(&b) || !(0.0..=1.0).contains(&c) {
        return Err(Error::Precondition(format!("b and c must lie in [0, 1], got b={b} c={c}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = 1000.0 * rng.random::<f64>();
        if let Some(d) = rounding {
            let f = 10f64.powi(d);
            x = (x * f).round() / f;
        }
        let y: f64 = rng.random();
        let z: f64 = rng.random();
        xs.push(x);
        ts.push(x + b * x * y + c * z);
    }
    Ok((xs, ts))
}

/// One grid point of the threshold sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
    pub recall: f64,
    /// Error-class rates among records whose score passes the threshold.
    pub type1_rate: f64,
    pub type2_rate: f64,
    pub sign_mismatch_rate: f64,
    pub n_passing: usize,
}

impl CurvePoint {
    pub fn total_error_rate(&self) -> f64 {
        self.type1_rate + self.type2_rate + self.sign_mismatch_rate
    }
}

/// Classifier-style evaluation of one metric over simulated label records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricEvaluation {
    pub metric_name: String,
    pub auc: f64,
    pub average_precision: f64,
    pub per_generator_auc: Vec<(usize, f64)>,
    pub curve: Vec<CurvePoint>,
    /// Smallest grid threshold with total error rate <= 5%, when one exists.
    pub recommended_threshold: Option<f64>,
    /// Whether the total error rate is non-increasing in the threshold; a
    /// violation invalidates the recommendation rule for this metric.
    pub total_error_monotone: bool,
    pub n_records: usize,
}

pub const RECOMMENDATION_MAX_ERROR: f64 = 0.05;
pub const DEFAULT_GRID_STEP: f64 = 0.01;

/// Evaluate `metric_name` as a classifier for label 1 over the testable
/// records carrying that score.
pub fn evaluate_metric(records: &[LabelRecord], metric_name: &str, grid_step: f64) -> Result<MetricEvaluation> {
    if !(grid_step > 0.0 && grid_step < 1.0) {
        return Err(Error::Precondition(format!("grid step {grid_step} outside (0, 1)")));
    }
    let scored: Vec<&LabelRecord> = records
        .iter()
        .filter(|r| r.testable && r.metric_scores.contains_key(metric_name))
        .collect();
    if scored.is_empty() {
        return Err(Error::Lookup(format!("no testable records carry metric '{metric_name}'")));
    }
    let n_pos = scored.iter().filter(|r| r.label == 1).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        let degenerate = if n_pos == 0 { 0 } else { 1 };
        return Err(Error::Evaluation(format!(
            "all {} records have label {degenerate}; ROC/PR undefined for '{metric_name}'",
            scored.len()
        )));
    }

    let pairs: Vec<(f64, bool)> = scored
        .iter()
        .map(|r| (r.metric_scores[metric_name], r.label == 1))
        .collect();
    let auc = roc_auc_trapezoid(&pairs);
    let average_precision = average_precision(&pairs);

    let mut per_generator_auc = Vec::new();
    let mut generators: Vec<usize> = scored.iter().map(|r| r.generator).collect();
    generators.sort_unstable();
    generators.dedup();
    for g in generators {
        let sub: Vec<(f64, bool)> = scored
            .iter()
            .filter(|r| r.generator == g)
            .map(|r| (r.metric_scores[metric_name], r.label == 1))
            .collect();
        let pos = sub.iter().filter(|(_, l)| *l).count();
        if pos > 0 && pos < sub.len() {
            per_generator_auc.push((g, roc_auc_trapezoid(&sub)));
        }
    }

    // threshold sweep over [0, 1)
    let mut curve = Vec::new();
    let steps = (1.0 / grid_step).round() as usize;
    for s in 0..steps {
        let threshold = s as f64 * grid_step;
        curve.push(curve_point(&scored, metric_name, threshold, n_pos, n_neg));
    }

    let recommended_threshold = curve
        .iter()
        .find(|p| p.n_passing > 0 && p.total_error_rate() <= RECOMMENDATION_MAX_ERROR)
        .map(|p| p.threshold);

    // Non-increasing up to the one-record quantum: with n records passing a
    // threshold, a single label-1 record leaving the denominator raises the
    // rate by ~1/n without any new error, so only increases beyond 1/n are
    // substantive violations.
    let mut total_error_monotone = true;
    let mut prev: Option<f64> = None;
    for p in &curve {
        if p.n_passing == 0 {
            continue;
        }
        let total = p.total_error_rate();
        if let Some(prev_total) = prev {
            let quantum = 1.0 / p.n_passing as f64;
            if total > prev_total + quantum.max(1e-9) {
                total_error_monotone = false;
            }
        }
        prev = Some(total);
    }

    Ok(MetricEvaluation {
        metric_name: metric_name.to_string(),
        auc,
        average_precision,
        per_generator_auc,
        curve,
        recommended_threshold,
        total_error_monotone,
        n_records: scored.len(),
    })
}

fn curve_point(scored: &[&LabelRecord], metric: &str, threshold: f64, n_pos: usize, n_neg: usize) -> CurvePoint {
    use crate::stat_tests::ErrorClass;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut passing = 0usize;
    let mut e1 = 0usize;
    let mut e2 = 0usize;
    let mut es = 0usize;
    for r in scored {
        if r.metric_scores[metric] >= threshold {
            passing += 1;
            if r.label == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            match r.error_class {
                ErrorClass::TypeI => e1 += 1,
                ErrorClass::TypeII => e2 += 1,
                ErrorClass::SignMismatch => es += 1,
                _ => {}
            }
        }
    }
    let rate = |c: usize| if passing > 0 { c as f64 / passing as f64 } else { 0.0 };
    CurvePoint {
        threshold,
        tpr: tp as f64 / n_pos as f64,
        fpr: fp as f64 / n_neg as f64,
        precision: if passing > 0 { tp as f64 / passing as f64 } else { 1.0 },
        recall: tp as f64 / n_pos as f64,
        type1_rate: rate(e1),
        type2_rate: rate(e2),
        sign_mismatch_rate: rate(es),
        n_passing: passing,
    }
}

/// Trapezoidal ROC AUC with tied scores grouped, treating higher scores as
/// predicting label 1.
pub fn roc_auc_trapezoid(pairs: &[(f64, bool)]) -> f64 {
    let n_pos = pairs.iter().filter(|(_, l)| *l).count() as f64;
    let n_neg = pairs.len() as f64 - n_pos;
    let mut sorted: Vec<(f64, bool)> = pairs.to_vec();
    sorted.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let mut auc = 0.0;
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let mut dtp = 0.0;
        let mut dfp = 0.0;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 {
                dtp += 1.0;
            } else {
                dfp += 1.0;
            }
            j += 1;
        }
        // trapezoid across the tie group
        auc += (dfp / n_neg) * (tp + dtp / 2.0) / n_pos;
        tp += dtp;
        fp += dfp;
        i = j;
    }
    let _ = fp;
    auc
}

/// Rank-statistic (Mann-Whitney, midranks for ties) formulation of the ROC
/// AUC; algebraically identical to the trapezoidal form.
pub fn roc_auc_rank(pairs: &[(f64, bool)]) -> f64 {
    let n = pairs.len();
    let n_pos = pairs.iter().filter(|(_, l)| *l).count() as f64;
    let n_neg = n as f64 - n_pos;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pairs[order[j + 1]].0 == pairs[order[i]].0 {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0;
        for &o in &order[i..=j] {
            if pairs[o].1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

/// Average precision over descending-score thresholds.
pub fn average_precision(pairs: &[(f64, bool)]) -> f64 {
    let n_pos = pairs.iter().filter(|(_, l)| *l).count() as f64;
    let mut sorted: Vec<(f64, bool)> = pairs.to_vec();
    sorted.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let mut ap = 0.0;
    let mut tp = 0.0;
    let mut seen = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let mut dtp = 0.0;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 {
                dtp += 1.0;
            }
            j += 1;
        }
        seen += (j - i) as f64;
        tp += dtp;
        let precision = tp / seen;
        let recall_delta = dtp / n_pos;
        ap += precision * recall_delta;
        i = j;
    }
    ap
}

/// Side-by-side comparison of two metrics' evaluations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub metric_a: String,
    pub metric_b: String,
    pub delta_auc: f64,
    pub delta_ap: f64,
    /// |delta AUC| and |delta AP| both under 0.05.
    pub comparable_efficacy: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub evaluations: Vec<MetricEvaluation>,
    pub pairwise: Vec<PairwiseComparison>,
}

/// Evaluate several metrics on the same records and compare them pairwise.
pub fn compare_metrics(records: &[LabelRecord], metric_names: &[String]) -> Result<ComparisonReport> {
    if metric_names.len() < 2 {
        return Err(Error::Precondition("need at least two metric names to compare".to_string()));
    }
    let mut evaluations = Vec::with_capacity(metric_names.len());
    for name in metric_names {
        evaluations.push(evaluate_metric(records, name, DEFAULT_GRID_STEP)?);
    }
    let mut pairwise = Vec::new();
    for a in 0..evaluations.len() {
        for b in (a + 1)..evaluations.len() {
            let delta_auc = evaluations[a].auc - evaluations[b].auc;
            let delta_ap = evaluations[a].average_precision - evaluations[b].average_precision;
            pairwise.push(PairwiseComparison {
                metric_a: evaluations[a].metric_name.clone(),
                metric_b: evaluations[b].metric_name.clone(),
                delta_auc,
                delta_ap,
                comparable_efficacy: delta_auc.abs() < 0.05 && delta_ap.abs() < 0.05,
            });
        }
    }
    Ok(ComparisonReport { evaluations, pairwise })
}

/// Run the full simulation sweep: for every generator x run, sample a
/// synthetic table, pick a quasi-identifier subset, anonymize at each `k`,
/// score every metric, and label each (column, group) against the
/// statistical ground truth.
///
/// Individual failed applications are logged and skipped; more than
/// `max_failure_frac` of them failing aborts with an error. Output order is
/// canonical (generator, run, k, column, group) regardless of parallelism.
pub fn run_simulation(
    source: &Table,
    gtrees: &HashMap<String, GTree>,
    config: &SimulationConfig,
) -> Result<Vec<LabelRecord>> {
    let sensitive = source
        .sensitive_column()?
        .ok_or_else(|| Error::Precondition("source table needs a sensitive-attribute column".to_string()))?;
    if config.n_generators == 0 || config.runs_per_generator == 0 || config.k_values.is_empty() {
        return Err(Error::Precondition("empty simulation grid".to_string()));
    }
    for &rc in &config.row_counts {
        if rc > source.n_rows() {
            return Err(Error::Precondition(format!(
                "row count {rc} exceeds source size {}",
                source.n_rows()
            )));
        }
    }
    let all_qids = source.quasi_identifiers();
    if all_qids.is_empty() {
        return Err(Error::Precondition("source table has no quasi-identifiers".to_string()));
    }

    let mut generators = Vec::with_capacity(config.n_generators);
    for g in 0..config.n_generators {
        generators.push(fit_generator(source, derive_seed(config.seed, &[0xF17, g as u64]))?);
    }

    let units: Vec<(usize, usize)> = (0..config.n_generators)
        .flat_map(|g| (0..config.runs_per_generator).map(move |r| (g, r)))
        .collect();

    let outcomes: Vec<(usize, usize, std::result::Result<Vec<LabelRecord>, String>)> = units
        .par_iter()
        .map(|&(g, run)| {
            let out = simulate_unit(&generators[g], gtrees, config, &all_qids, &sensitive, g, run);
            (g, run, out.map_err(|e| e.to_string()))
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = 0usize;
    for (g, run, out) in outcomes {
        match out {
            Ok(mut rs) => records.append(&mut rs),
            Err(e) => {
                log::warn!("simulation unit (generator {g}, run {run}) failed: {e}");
                failures += config.k_values.len();
            }
        }
    }
    let total_apps = config.n_applications();
    if failures as f64 > config.max_failure_frac * total_apps as f64 {
        return Err(Error::Simulation(format!(
            "{failures} of {total_apps} anonymization applications failed"
        )));
    }
    records.sort_by(|a, b| {
        (a.generator, a.run, a.k, &a.column, &a.group).cmp(&(b.generator, b.run, b.k, &b.column, &b.group))
    });
    Ok(records)
}

fn simulate_unit(
    generator: &SyntheticGenerator,
    gtrees: &HashMap<String, GTree>,
    config: &SimulationConfig,
    all_qids: &[String],
    sensitive: &str,
    g: usize,
    run: usize,
) -> Result<Vec<LabelRecord>> {
    let unit_seed = derive_seed(config.seed, &[g as u64, run as u64]);
    let n_rows = config.row_counts[run % config.row_counts.len()];
    let sampled = generator.sample(n_rows, derive_seed(unit_seed, &[2]))?;

    // quasi-identifier subset for this run
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(unit_seed, &[3]));
    let max_subset = config.max_qid_subset.clamp(1, all_qids.len());
    let subset_size = rng.random_range(1..=max_subset);
    let mut chosen: Vec<String> = all_qids.to_vec();
    chosen.shuffle(&mut rng);
    chosen.truncate(subset_size);
    chosen.sort();

    // non-selected quasi-identifiers sit out of this run entirely
    let synth = sampled.with_roles(|c| {
        if chosen.contains(&c.name) {
            ColumnRole::QuasiIdentifier
        } else if c.role == ColumnRole::SensitiveAttribute {
            ColumnRole::SensitiveAttribute
        } else {
            ColumnRole::Excluded
        }
    });

    let mut trees = gtrees.clone();
    ensure_gtrees(&synth, &chosen, &mut trees)?;

    let mut records = Vec::new();
    for &k in &config.k_values {
        let result = anonymize(&synth, &chosen, &trees, &AnonymizeConfig::new(k))?;
        let pair = to_pair(&synth, &result)?;
        let nmi = NmiConfig {
            seed: derive_seed(unit_seed, &[4, k as u64]),
            ..config.nmi.clone()
        };
        let report = quality::evaluate(&pair, &result, &trees, &config.thresholds, &nmi)?;
        let ilm = ilm_dataset(&synth, &result, &chosen)?;

        for column in &chosen {
            let mut scores = BTreeMap::new();
            for metric in [
                quality::METRIC_PEARSON,
                quality::METRIC_RILM_NUMERICAL,
                quality::METRIC_RILM_CATEGORICAL,
                quality::METRIC_NMIV1,
            ] {
                if let Some(v) = report.per_column_value(column, metric) {
                    scores.insert(metric.to_string(), v);
                }
            }
            if synth.column_schema(column)?.kind == ColumnKind::Numerical {
                if let MetricOutcome::Applicable(s) = info_theory::nmiv2(&pair, column, &nmi)? {
                    scores.insert(METRIC_NMIV2.to_string(), s.value);
                }
                if let Some(ilm) = ilm {
                    scores.insert(METRIC_ONE_MINUS_ILM.to_string(), ilm.normalized);
                }
            }
            scores.insert(METRIC_PCTNS.to_string(), report.pctns);

            let labels = label_pair(&synth, &pair.anonymized, column, sensitive, config.alpha, config.min_group_size)?;
            for mut record in labels {
                record.generator = g;
                record.run = run;
                record.k = k;
                record.n_rows = n_rows;
                record.metric_scores = scores.clone();
                record.passed_thresholds = report.passed;
                records.push(record);
            }
        }
    }
    Ok(records)
}

/// Persist label records as a flat delimiter-separated file, one row per
/// (column, group, application).
pub fn write_label_records(records: &[LabelRecord], path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let metrics = [
        quality::METRIC_PEARSON,
        quality::METRIC_RILM_NUMERICAL,
        quality::METRIC_RILM_CATEGORICAL,
        quality::METRIC_NMIV1,
        METRIC_NMIV2,
        METRIC_ONE_MINUS_ILM,
        METRIC_PCTNS,
    ];
    let mut out = Vec::new();
    write!(out, "generator,run,k,n_rows,column,group,label,error_class,testable,passed_thresholds")?;
    for m in metrics {
        write!(out, ",{m}")?;
    }
    writeln!(out)?;
    for r in records {
        write!(
            out,
            "{},{},{},{},{},{},{},{:?},{},{}",
            r.generator, r.run, r.k, r.n_rows, r.column, r.group, r.label, r.error_class, r.testable, r.passed_thresholds
        )?;
        for m in metrics {
            match r.metric_scores.get(m) {
                Some(v) => write!(out, ",{}", crate::tabular::format_number(*v))?,
                None => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write one metric's threshold sweep as a plot-ready table.
pub fn write_curve_csv(eval: &MetricEvaluation, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut out = Vec::new();
    writeln!(out, "threshold,tpr,fpr,precision,recall,type1_rate,type2_rate,sign_mismatch_rate,n_passing")?;
    for p in &eval.curve {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.threshold, p.tpr, p.fpr, p.precision, p.recall, p.type1_rate, p.type2_rate, p.sign_mismatch_rate, p.n_passing
        )?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stat_tests::ErrorClass;
    use crate::tabular::ColumnSchema;

    fn source_table(n: usize, seed: u64) -> Table {
        // numerical x correlated with group; categorical c correlated with x
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n);
        let mut cs = Vec::with_capacity(n);
        let mut gs = Vec::with_capacity(n);
        for _ in 0..n {
            let g = rng.random_range(0..3u32);
            let base: f64 = rng.random::<f64>() * 10.0 + f64::from(g) * 4.0;
            xs.push(Some(base));
            cs.push(Some(if base > 9.0 { "hi".to_string() } else { "lo".to_string() }));
            gs.push(Some(format!("g{g}")));
        }
        Table::new(
            vec![
                ColumnSchema::numerical("x", ColumnRole::QuasiIdentifier),
                ColumnSchema::categorical("c", ColumnRole::QuasiIdentifier),
                ColumnSchema::categorical("grp", ColumnRole::SensitiveAttribute),
            ],
            vec![ColumnData::Numerical(xs), ColumnData::Categorical(cs), ColumnData::Categorical(gs)],
            (0..n as u64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn generator_reproduces_marginals() {
        let source = source_table(5000, 42);
        let generator = fit_generator(&source, 7).unwrap();
        let sample = generator.sample(5000, 1).unwrap();

        let src_x: Vec<f64> = source.numerical_column("x").unwrap().iter().flatten().copied().collect();
        let smp_x: Vec<f64> = sample.numerical_column("x").unwrap().iter().flatten().copied().collect();
        let src_mean = src_x.iter().sum::<f64>() / src_x.len() as f64;
        let smp_mean = smp_x.iter().sum::<f64>() / smp_x.len() as f64;
        assert!(
            (src_mean - smp_mean).abs() / src_mean.abs() < 0.05,
            "means {src_mean} vs {smp_mean}"
        );

        for token in ["hi", "lo"] {
            let freq = |t: &Table| {
                let col = t.categorical_column("c").unwrap();
                col.iter().flatten().filter(|v| v.as_str() == token).count() as f64 / col.len() as f64
            };
            assert!((freq(&source) - freq(&sample)).abs() < 0.02, "{token}");
        }
    }

    #[test]
    fn generator_seeds_differ_but_marginals_hold() {
        let source = source_table(2000, 1);
        let g1 = fit_generator(&source, 1).unwrap().sample(500, 0).unwrap();
        let g2 = fit_generator(&source, 2).unwrap().sample(500, 0).unwrap();
        assert_ne!(
            g1.numerical_column("x").unwrap(),
            g2.numerical_column("x").unwrap()
        );
    }

    #[test]
    fn generator_preserves_dependence_direction() {
        let source = source_table(5000, 9);
        let sample = fit_generator(&source, 3).unwrap().sample(5000, 5).unwrap();
        // x and c are strongly dependent in the source; check the sampled
        // "hi" mean sits far above the "lo" mean
        let xs = sample.numerical_column("x").unwrap();
        let cs = sample.categorical_column("c").unwrap();
        let mean_of = |want: &str| {
            let vals: Vec<f64> = xs
                .iter()
                .zip(cs)
                .filter_map(|(x, c)| match (x, c) {
                    (Some(x), Some(c)) if c == want => Some(*x),
                    _ => None,
                })
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        assert!(mean_of("hi") > mean_of("lo") + 2.0);
    }

    #[test]
    fn generator_sample_zero_is_empty() {
        let source = source_table(200, 3);
        let t = fit_generator(&source, 0).unwrap().sample(0, 0).unwrap();
        assert_eq!(t.n_rows(), 0);
    }

    #[test]
    fn generator_too_small_source_errors() {
        let source = source_table(50, 3);
        assert!(matches!(fit_generator(&source, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn ilm_on_worked_example() {
        let table = Table::new(
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
        .unwrap();
        let qids = vec!["n_accept".to_string(), "n_reject".to_string()];
        let result = anonymize(&table, &qids, &HashMap::new(), &AnonymizeConfig::new(2)).unwrap();
        let ilm = ilm_dataset(&table, &result, &qids).unwrap().unwrap();
        // IL({1,2}) = 2 * (0/10 + 1/1) = 2; IL({3,4}) = 0; ILM = 2/4 = 0.5
        assert!((ilm.raw - 0.5).abs() < 1e-12);
        assert!((ilm.normalized - 0.75).abs() < 1e-12);
    }

    #[test]
    fn ilm_identity_is_zero_loss() {
        let table = Table::new(
            vec![ColumnSchema::numerical("x", ColumnRole::QuasiIdentifier)],
            vec![ColumnData::Numerical(vec![Some(1.0), Some(1.0), Some(5.0), Some(5.0)])],
            vec![0, 1, 2, 3],
        )
        .unwrap();
        let qids = vec!["x".to_string()];
        let result = anonymize(&table, &qids, &HashMap::new(), &AnonymizeConfig::new(2)).unwrap();
        let ilm = ilm_dataset(&table, &result, &qids).unwrap().unwrap();
        assert_eq!(ilm.raw, 0.0);
        assert_eq!(ilm.normalized, 1.0);
    }

    #[test]
    fn random_model_identity_when_b_c_zero() {
        let (xs, ts) = gen_random_model(1000, 0.0, 0.0, None, 5).unwrap();
        assert_eq!(xs, ts);
    }

    #[test]
    fn random_model_rounding_reduces_entropy() {
        let (x_full, _) = gen_random_model(20_000, 0.4, 0.05, None, 5).unwrap();
        let (x_r2, _) = gen_random_model(20_000, 0.4, 0.05, Some(-2), 5).unwrap();
        let h_full = info_theory::entropy_nats(&x_full);
        let h_r2 = info_theory::entropy_nats(&x_r2);
        assert!(h_full > 9.0, "{h_full}");
        assert!((h_r2 - 2.37).abs() < 0.2, "{h_r2}");
    }

    fn fake_records(scores_labels: &[(f64, u8)]) -> Vec<LabelRecord> {
        scores_labels
            .iter()
            .enumerate()
            .map(|(i, &(score, label))| LabelRecord {
                generator: i % 2,
                run: i,
                k: 2,
                n_rows: 100,
                column: "x".to_string(),
                group: "g".to_string(),
                metric_scores: BTreeMap::from([("m".to_string(), score)]),
                label,
                error_class: if label == 1 { ErrorClass::None } else { ErrorClass::TypeI },
                testable: true,
                passed_thresholds: false,
            })
            .collect()
    }

    #[test]
    fn perfect_separator_has_auc_and_ap_one() {
        let mut data = Vec::new();
        for i in 0..50 {
            data.push((0.8 + 0.001 * i as f64, 1));
            data.push((0.2 + 0.001 * i as f64, 0));
        }
        let records = fake_records(&data);
        let eval = evaluate_metric(&records, "m", 0.01).unwrap();
        assert!((eval.auc - 1.0).abs() < 1e-12);
        assert!((eval.average_precision - 1.0).abs() < 1e-12);
        // grid point 0.6 >= all positives, no negatives: errors go to zero there
        assert!(eval.recommended_threshold.is_some());
    }

    #[test]
    fn shuffled_scores_have_auc_near_half() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let data: Vec<(f64, u8)> = (0..2000)
            .map(|_| (rng.random::<f64>(), u8::from(rng.random::<f64>() < 0.5)))
            .collect();
        let records = fake_records(&data);
        let eval = evaluate_metric(&records, "m", 0.01).unwrap();
        assert!((eval.auc - 0.5).abs() < 0.05, "auc = {}", eval.auc);
    }

    #[test]
    fn trapezoid_equals_rank_formulation_with_ties() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let pairs: Vec<(f64, bool)> = (0..100)
                .map(|_| {
                    // coarse scores force ties
                    let s = (rng.random::<f64>() * 10.0).round() / 10.0;
                    (s, rng.random::<f64>() < 0.4)
                })
                .collect();
            if pairs.iter().all(|(_, l)| *l) || pairs.iter().all(|(_, l)| !*l) {
                continue;
            }
            let a = roc_auc_trapezoid(&pairs);
            let b = roc_auc_rank(&pairs);
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn single_class_labels_error_names_class() {
        let records = fake_records(&[(0.5, 1), (0.9, 1)]);
        let err = evaluate_metric(&records, "m", 0.01).unwrap_err();
        match err {
            Error::Evaluation(msg) => assert!(msg.contains("label 1"), "{msg}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_metric_is_lookup_error() {
        let records = fake_records(&[(0.5, 1), (0.9, 0)]);
        assert!(matches!(evaluate_metric(&records, "nope", 0.01), Err(Error::Lookup(_))));
    }

    #[test]
    fn compare_metric_with_itself_has_zero_delta() {
        let records = fake_records(&[(0.5, 1), (0.9, 0), (0.2, 1), (0.7, 0), (0.8, 1)]);
        let report = compare_metrics(&records, &["m".to_string(), "m".to_string()]).unwrap();
        assert_eq!(report.pairwise.len(), 1);
        assert_eq!(report.pairwise[0].delta_auc, 0.0);
        assert!(report.pairwise[0].comparable_efficacy);
    }

    #[test]
    fn recommended_threshold_matches_brute_force() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let data: Vec<(f64, u8)> = (0..600)
            .map(|_| {
                let s: f64 = rng.random();
                let p_good = 0.3 + 0.65 * s;
                (s, u8::from(rng.random::<f64>() < p_good))
            })
            .collect();
        let records = fake_records(&data);
        let eval = evaluate_metric(&records, "m", 0.01).unwrap();

        // brute-force scan of the same grid
        let mut expected = None;
        for s in 0..100 {
            let t = s as f64 * 0.01;
            let passing: Vec<&LabelRecord> = records
                .iter()
                .filter(|r| r.metric_scores["m"] >= t)
                .collect();
            if passing.is_empty() {
                continue;
            }
            let errors = passing.iter().filter(|r| r.label == 0).count();
            if errors as f64 / passing.len() as f64 <= RECOMMENDATION_MAX_ERROR {
                expected = Some(t);
                break;
            }
        }
        assert_eq!(eval.recommended_threshold, expected);
        if let Some(t) = eval.recommended_threshold {
            // smallest qualifying grid point: every smaller one fails the rule
            for p in &eval.curve {
                if p.threshold < t && p.n_passing > 0 {
                    assert!(p.total_error_rate() > RECOMMENDATION_MAX_ERROR);
                }
            }
        }
    }

    #[test]
    fn desk_scale_smoke_simulation() {
        let source = source_table(800, 99);
        let config = SimulationConfig {
            n_generators: 1,
            runs_per_generator: 4,
            row_counts: vec![300],
            k_values: vec![2, 10],
            nmi: NmiConfig { sample_size: 10_000, n_repeats: 2, ..NmiConfig::default() },
            ..SimulationConfig::desk_scale(5)
        };
        let records = run_simulation(&source, &HashMap::new(), &config).unwrap();
        assert!(!records.is_empty());
        // bookkeeping: every (generator, run, k) combination appears
        let mut combos: Vec<(usize, usize, usize)> = records.iter().map(|r| (r.generator, r.run, r.k)).collect();
        combos.sort_unstable();
        combos.dedup();
        assert_eq!(combos.len(), 8, "{combos:?}");
        // determinism
        let again = run_simulation(&source, &HashMap::new(), &config).unwrap();
        assert_eq!(serde_json::to_string(&records).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn rilm_degrades_with_k_on_average() {
        let source = source_table(600, 31);
        let config = SimulationConfig {
            n_generators: 1,
            runs_per_generator: 6,
            row_counts: vec![400],
            k_values: vec![2, 50],
            nmi: NmiConfig { sample_size: 10_000, n_repeats: 2, ..NmiConfig::default() },
            ..SimulationConfig::desk_scale(77)
        };
        let records = run_simulation(&source, &HashMap::new(), &config).unwrap();
        let mean_rilm = |k: usize| {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.k == k)
                .filter_map(|r| r.metric_scores.get(quality::METRIC_RILM_NUMERICAL))
                .copied()
                .collect();
            vals.iter().sum::<f64>() / vals.len().max(1) as f64
        };
        assert!(mean_rilm(50) <= mean_rilm(2) + 1e-9, "{} vs {}", mean_rilm(50), mean_rilm(2));
    }
}
