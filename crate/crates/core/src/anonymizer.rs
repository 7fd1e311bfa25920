//! Reference k-anonymizer: greedy micro-aggregation over a normalized
//! feature space.
//!
//! Classes of exactly `k` are formed densest-region-first: the seed of each
//! class is the remaining row closest to the centroid of the remaining rows,
//! joined by its `k - 1` nearest neighbours. Residual rows (fewer than `k`
//! left over) join their nearest class unless they sit beyond an
//! outlier-distance cutoff, in which case they are suppressed. Numerical
//! quasi-identifiers are replaced by the class mean, categorical ones by the
//! class's lowest common ancestor in the column's g-tree.
//!
//! The whole procedure is deterministic: ties in seed and neighbour selection
//! break towards the lowest row id, and no randomness is involved.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gtree::GTree;
use crate::tabular::{align_pair, ColumnData, ColumnKind, ColumnRole, DatasetPair, Table};

/// Tuning knobs for [`anonymize`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnonymizeConfig {
    /// Anonymity parameter; every equivalence class has at least `k` rows.
    pub k: usize,
    /// Upper bound on the suppressed fraction before [`Error::Budget`].
    pub max_suppression_frac: f64,
    /// Residuals farther than this percentile of within-class distances from
    /// every class centroid are suppressed instead of assigned.
    pub residual_cutoff_percentile: f64,
    /// When set, suppress any class whose categorical generalization reaches
    /// the g-tree root for more than this fraction of categorical
    /// quasi-identifiers. Off by default.
    pub max_root_generalization_frac: Option<f64>,
}

impl AnonymizeConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_suppression_frac: 1.0,
            residual_cutoff_percentile: 0.99,
            max_root_generalization_frac: None,
        }
    }
}

/// The anonymized value shared by every row of an equivalence class for one
/// quasi-identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GeneralizedValue {
    Number(f64),
    Category(String),
    Missing,
}

/// A set of at least `k` rows sharing identical anonymized quasi-identifier
/// values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceClass {
    pub row_ids: Vec<u64>,
    pub generalized_values: BTreeMap<String, GeneralizedValue>,
}

impl EquivalenceClass {
    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }
}

/// Partition of the original rows into equivalence classes plus a suppressed
/// set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnonymizationResult {
    pub classes: Vec<EquivalenceClass>,
    pub suppressed_row_ids: BTreeSet<u64>,
    pub k: usize,
}

impl AnonymizationResult {
    /// Number of non-suppressed rows.
    pub fn n_anonymized(&self) -> usize {
        self.classes.iter().map(|c| c.len()).sum()
    }
}

/// Ensure every categorical quasi-identifier has a g-tree, auto-building a
/// flat tree (root size 1.0) over the column's distinct values when absent.
pub fn ensure_gtrees(table: &Table, quasi_ids: &[String], gtrees: &mut HashMap<String, GTree>) -> Result<()> {
    for name in quasi_ids {
        let cs = table.column_schema(name)?;
        if cs.kind != ColumnKind::Categorical || gtrees.contains_key(name) {
            continue;
        }
        let values = table.categorical_column(name)?;
        let mut distinct: Vec<String> = values.iter().flatten().cloned().collect();
        distinct.sort();
        distinct.dedup();
        if distinct.is_empty() {
            distinct.push("(none)".to_string());
        }
        gtrees.insert(name.clone(), GTree::flat(&distinct, 1.0)?);
    }
    Ok(())
}

// Internal row representation in the normalized feature space.
struct FeatureSpace<'a> {
    // z-scored numerical columns, missing imputed at the mean (z = 0)
    numeric: Vec<Vec<f64>>,
    // token per row per categorical column; None = missing
    tokens: Vec<Vec<Option<&'a str>>>,
    trees: Vec<&'a GTree>,
    cat_names: Vec<&'a str>,
    num_names: Vec<&'a str>,
}

impl<'a> FeatureSpace<'a> {
    fn build(table: &'a Table, quasi_ids: &[String], gtrees: &'a HashMap<String, GTree>) -> Result<Self> {
        let mut numeric = Vec::new();
        let mut num_names = Vec::new();
        let mut tokens: Vec<Vec<Option<&str>>> = Vec::new();
        let mut trees = Vec::new();
        let mut cat_names = Vec::new();

        for name in quasi_ids {
            let cs = table.column_schema(name)?;
            match cs.kind {
                ColumnKind::Numerical => {
                    let raw = table.numerical_column(name)?;
                    let present: Vec<f64> = raw.iter().flatten().copied().collect();
                    let (mean, std) = mean_and_pop_std(&present);
                    let z = raw
                        .iter()
                        .map(|v| match v {
                            Some(x) if std > 0.0 => (x - mean) / std,
                            _ => 0.0,
                        })
                        .collect();
                    numeric.push(z);
                    num_names.push(table.column_schema(name)?.name.as_str());
                }
                ColumnKind::Categorical => {
                    let raw = table.categorical_column(name)?;
                    let tree = gtrees
                        .get(name)
                        .ok_or_else(|| Error::Precondition(format!("categorical quasi-identifier '{name}' has no g-tree")))?;
                    for v in raw.iter().flatten() {
                        tree.leaf(v)?;
                    }
                    tokens.push(raw.iter().map(|v| v.as_deref()).collect());
                    trees.push(tree);
                    cat_names.push(table.column_schema(name)?.name.as_str());
                }
            }
        }
        Ok(Self { numeric, tokens, trees, cat_names, num_names })
    }

    fn row_distance_sq(&self, a: usize, b: usize) -> f64 {
        let mut d2 = 0.0;
        for col in &self.numeric {
            let d = col[a] - col[b];
            d2 += d * d;
        }
        for (ci, col) in self.tokens.iter().enumerate() {
            let tree = self.trees[ci];
            let d = match (col[a], col[b]) {
                (Some(x), Some(y)) => tree.distance(x, y).unwrap_or(1.0),
                (None, None) => 0.0,
                _ => missing_distance(tree),
            };
            d2 += d * d;
        }
        d2
    }

    fn centroid(&self, members: &[usize]) -> Centroid {
        let n = members.len().max(1) as f64;
        let numeric = self
            .numeric
            .iter()
            .map(|col| members.iter().map(|&i| col[i]).sum::<f64>() / n)
            .collect();
        let cat_nodes = self
            .tokens
            .iter()
            .enumerate()
            .map(|(ci, col)| {
                let tree = self.trees[ci];
                let mut any_missing = false;
                let mut node: Option<usize> = None;
                for &i in members {
                    match col[i] {
                        Some(t) => {
                            let leaf = tree.leaf(t).expect("tokens validated at build").index;
                            node = Some(match node {
                                None => leaf,
                                Some(c) => tree.lca_with_node(t, c).expect("validated").index,
                            });
                        }
                        None => any_missing = true,
                    }
                }
                match node {
                    Some(n) if !any_missing => n,
                    _ => tree.root().index,
                }
            })
            .collect();
        Centroid { numeric, cat_nodes }
    }

    fn centroid_distance_sq(&self, row: usize, c: &Centroid) -> f64 {
        let mut d2 = 0.0;
        for (col, m) in self.numeric.iter().zip(&c.numeric) {
            let d = col[row] - m;
            d2 += d * d;
        }
        for (ci, col) in self.tokens.iter().enumerate() {
            let tree = self.trees[ci];
            let node = c.cat_nodes[ci];
            let d = match col[row] {
                Some(t) => {
                    let l = tree.lca_with_node(t, node).expect("validated");
                    normalized_size(tree, l.size)
                }
                None => missing_distance(tree),
            };
            d2 += d * d;
        }
        d2
    }
}

struct Centroid {
    numeric: Vec<f64>,
    cat_nodes: Vec<usize>,
}

fn missing_distance(tree: &GTree) -> f64 {
    if tree.root_size() > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn normalized_size(tree: &GTree, size: f64) -> f64 {
    if tree.root_size() > 0.0 {
        size / tree.root_size()
    } else {
        0.0
    }
}

fn mean_and_pop_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

// Nearest-rank percentile of an unsorted sample; p in (0, 1].
fn percentile(values: &mut [f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable_by(f64::total_cmp);
    let rank = ((p * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

/// Anonymize `table` on `quasi_ids` with parameter `config.k`.
///
/// Categorical quasi-identifiers must each have a g-tree in `gtrees`
/// (see [`ensure_gtrees`]). When the table has fewer than `k` rows the only
/// legal output is all rows suppressed.
pub fn anonymize(
    table: &Table,
    quasi_ids: &[String],
    gtrees: &HashMap<String, GTree>,
    config: &AnonymizeConfig,
) -> Result<AnonymizationResult> {
    if config.k < 2 {
        return Err(Error::Precondition(format!("k must be at least 2, got {}", config.k)));
    }
    if quasi_ids.is_empty() {
        return Err(Error::Precondition("at least one quasi-identifier required".to_string()));
    }
    let n = table.n_rows();
    if n < config.k {
        return Ok(AnonymizationResult {
            classes: Vec::new(),
            suppressed_row_ids: table.row_ids().iter().copied().collect(),
            k: config.k,
        });
    }

    let space = FeatureSpace::build(table, quasi_ids, gtrees)?;
    let ids = table.row_ids();

    let mut active: Vec<usize> = (0..n).collect();
    let mut classes: Vec<Vec<usize>> = Vec::new();

    while active.len() >= config.k {
        let centroid = space.centroid(&active);
        let seed = *active
            .iter()
            .min_by(|&&a, &&b| {
                space
                    .centroid_distance_sq(a, &centroid)
                    .total_cmp(&space.centroid_distance_sq(b, &centroid))
                    .then(ids[a].cmp(&ids[b]))
            })
            .expect("active is non-empty");

        let mut by_dist: Vec<(f64, u64, usize)> = active
            .iter()
            .filter(|&&i| i != seed)
            .map(|&i| (space.row_distance_sq(seed, i), ids[i], i))
            .collect();
        by_dist.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut members = vec![seed];
        members.extend(by_dist.iter().take(config.k - 1).map(|&(_, _, i)| i));
        let member_set: BTreeSet<usize> = members.iter().copied().collect();
        active.retain(|i| !member_set.contains(i));
        classes.push(members);
    }

    // Residual handling: join the nearest class unless beyond the outlier
    // cutoff derived from within-class spread.
    let centroids: Vec<Centroid> = classes.iter().map(|m| space.centroid(m)).collect();
    let mut within: Vec<f64> = classes
        .iter()
        .zip(&centroids)
        .flat_map(|(members, c)| members.iter().map(|&i| space.centroid_distance_sq(i, c).sqrt()))
        .collect();
    let cutoff = percentile(&mut within, config.residual_cutoff_percentile);

    let mut suppressed: BTreeSet<u64> = BTreeSet::new();
    let mut residuals: Vec<usize> = active;
    residuals.sort_by_key(|&i| ids[i]);
    for r in residuals {
        let nearest = centroids
            .iter()
            .enumerate()
            .map(|(ci, c)| (space.centroid_distance_sq(r, c).sqrt(), ci))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        match nearest {
            Some((d, ci)) if d <= cutoff => classes[ci].push(r),
            _ => {
                suppressed.insert(ids[r]);
            }
        }
    }

    // Materialize generalized values per class from the original cells.
    let mut result_classes = Vec::with_capacity(classes.len());
    for members in &classes {
        let mut generalized = BTreeMap::new();
        for name in &space.num_names {
            let raw = table.numerical_column(name)?;
            let vals: Vec<f64> = members.iter().filter_map(|&i| raw[i]).collect();
            let value = if vals.is_empty() {
                GeneralizedValue::Missing
            } else {
                GeneralizedValue::Number(vals.iter().sum::<f64>() / vals.len() as f64)
            };
            generalized.insert((*name).to_string(), value);
        }
        let mut root_hits = 0usize;
        for (ci, name) in space.cat_names.iter().enumerate() {
            let tree = space.trees[ci];
            let col = &space.tokens[ci];
            let mut any_missing = false;
            let mut node: Option<usize> = None;
            for &i in members {
                match col[i] {
                    Some(t) => {
                        let leaf = tree.leaf(t).expect("validated").index;
                        node = Some(match node {
                            None => leaf,
                            Some(c) => tree.lca_with_node(t, c).expect("validated").index,
                        });
                    }
                    None => any_missing = true,
                }
            }
            let node = match node {
                Some(n) if !any_missing => n,
                _ => tree.root().index,
            };
            if node == tree.root().index && tree.n_leaves() > 1 {
                root_hits += 1;
            }
            let label = tree.node(node)?.label.to_string();
            generalized.insert((*name).to_string(), GeneralizedValue::Category(label));
        }

        let over_root_budget = match config.max_root_generalization_frac {
            Some(frac) if !space.cat_names.is_empty() => {
                (root_hits as f64 / space.cat_names.len() as f64) > frac
            }
            _ => false,
        };
        if over_root_budget {
            for &i in members {
                suppressed.insert(ids[i]);
            }
            continue;
        }

        let mut row_ids: Vec<u64> = members.iter().map(|&i| ids[i]).collect();
        row_ids.sort_unstable();
        result_classes.push(EquivalenceClass { row_ids, generalized_values: generalized });
    }

    let frac = suppressed.len() as f64 / n as f64;
    if frac > config.max_suppression_frac + 1e-12 {
        return Err(Error::Budget(format!(
            "suppressed {:.4} of rows, budget {:.4}",
            frac, config.max_suppression_frac
        )));
    }

    Ok(AnonymizationResult { classes: result_classes, suppressed_row_ids: suppressed, k: config.k })
}

/// Materialize the anonymized table and alignment for `result`.
///
/// The anonymized table keeps the original's schema minus sensitive
/// columns; quasi-identifier cells are replaced by each class's generalized
/// values, all other retained columns are copied verbatim.
pub fn to_pair(table: &Table, result: &AnonymizationResult) -> Result<DatasetPair> {
    let id_index = table.id_index();
    let mut class_of_row: HashMap<u64, usize> = HashMap::new();
    for (ci, class) in result.classes.iter().enumerate() {
        if class.len() < result.k {
            return Err(Error::Contract(format!(
                "equivalence class of size {} violates k = {}",
                class.len(),
                result.k
            )));
        }
        for id in &class.row_ids {
            if !id_index.contains_key(id) {
                return Err(Error::Alignment(format!("class row id {id} absent from table")));
            }
            if class_of_row.insert(*id, ci).is_some() {
                return Err(Error::Contract(format!("row id {id} appears in two classes")));
            }
        }
    }
    for id in &result.suppressed_row_ids {
        if class_of_row.contains_key(id) {
            return Err(Error::Contract(format!("row id {id} both suppressed and classed")));
        }
    }
    if class_of_row.len() + result.suppressed_row_ids.len() != table.n_rows() {
        return Err(Error::Contract("classes and suppressed set do not partition the rows".to_string()));
    }

    let keep: Vec<usize> = (0..table.n_rows())
        .filter(|&i| !result.suppressed_row_ids.contains(&table.row_ids()[i]))
        .collect();

    let schema: Vec<_> = table
        .schema()
        .iter()
        .filter(|c| c.role != ColumnRole::SensitiveAttribute)
        .cloned()
        .collect();

    let mut columns = Vec::with_capacity(schema.len());
    for cs in &schema {
        let source = table.column_vector(&cs.name)?;
        let is_qi = cs.role == ColumnRole::QuasiIdentifier;
        let col = match source {
            ColumnData::Numerical(v) => ColumnData::Numerical(
                keep.iter()
                    .map(|&i| {
                        if is_qi {
                            match lookup_generalized(result, &class_of_row, table.row_ids()[i], &cs.name) {
                                Some(GeneralizedValue::Number(x)) => Some(*x),
                                _ => None,
                            }
                        } else {
                            v[i]
                        }
                    })
                    .collect(),
            ),
            ColumnData::Categorical(v) => ColumnData::Categorical(
                keep.iter()
                    .map(|&i| {
                        if is_qi {
                            match lookup_generalized(result, &class_of_row, table.row_ids()[i], &cs.name) {
                                Some(GeneralizedValue::Category(s)) => Some(s.clone()),
                                _ => None,
                            }
                        } else {
                            v[i].clone()
                        }
                    })
                    .collect(),
            ),
        };
        columns.push(col);
    }
    let row_ids: Vec<u64> = keep.iter().map(|&i| table.row_ids()[i]).collect();
    let anonymized = Table::new(schema, columns, row_ids)?;
    align_pair(table, &anonymized, &result.suppressed_row_ids)
}

fn lookup_generalized<'r>(
    result: &'r AnonymizationResult,
    class_of_row: &HashMap<u64, usize>,
    id: u64,
    column: &str,
) -> Option<&'r GeneralizedValue> {
    let ci = class_of_row.get(&id)?;
    result.classes[*ci].generalized_values.get(column)
}

/// Rebuild an [`AnonymizationResult`] from an already-anonymized table, as
/// when the anonymized data arrives as a file: rows sharing an identical
/// quasi-identifier tuple form one equivalence class, rows of the original
/// absent from the anonymized table are the suppressed set, and `k` is the
/// smallest observed class size.
pub fn reconstruct_result(original: &Table, anonymized: &Table, quasi_ids: &[String]) -> Result<AnonymizationResult> {
    let mut groups: BTreeMap<Vec<String>, Vec<u64>> = BTreeMap::new();
    for i in 0..anonymized.n_rows() {
        let mut key = Vec::with_capacity(quasi_ids.len());
        for name in quasi_ids {
            match anonymized.column_vector(name)? {
                ColumnData::Numerical(v) => key.push(match v[i] {
                    Some(x) => format!("{:x}", x.to_bits()),
                    None => "∅".to_string(),
                }),
                ColumnData::Categorical(v) => key.push(v[i].clone().unwrap_or_else(|| "∅".to_string())),
            }
        }
        groups.entry(key).or_default().push(anonymized.row_ids()[i]);
    }

    let anon_ids: BTreeSet<u64> = anonymized.row_ids().iter().copied().collect();
    let suppressed: BTreeSet<u64> = original
        .row_ids()
        .iter()
        .copied()
        .filter(|id| !anon_ids.contains(id))
        .collect();

    let anon_index = anonymized.id_index();
    let mut classes = Vec::with_capacity(groups.len());
    for (_, mut row_ids) in groups {
        row_ids.sort_unstable();
        let first = anon_index[&row_ids[0]];
        let mut generalized = BTreeMap::new();
        for name in quasi_ids {
            let value = match anonymized.column_vector(name)? {
                ColumnData::Numerical(v) => match v[first] {
                    Some(x) => GeneralizedValue::Number(x),
                    None => GeneralizedValue::Missing,
                },
                ColumnData::Categorical(v) => match &v[first] {
                    Some(t) => GeneralizedValue::Category(t.clone()),
                    None => GeneralizedValue::Missing,
                },
            };
            generalized.insert(name.clone(), value);
        }
        classes.push(EquivalenceClass { row_ids, generalized_values: generalized });
    }

    let k = classes.iter().map(EquivalenceClass::len).min().unwrap_or(0).max(1);
    Ok(AnonymizationResult { classes, suppressed_row_ids: suppressed, k })
}

/// Check the k-anonymity property directly on an anonymized table: grouping
/// rows by their quasi-identifier tuple yields group sizes all >= k.
pub fn verify_k_anonymity(anonymized: &Table, quasi_ids: &[String], k: usize) -> Result<bool> {
    let mut groups: HashMap<Vec<String>, usize> = HashMap::new();
    for i in 0..anonymized.n_rows() {
        let mut key = Vec::with_capacity(quasi_ids.len());
        for name in quasi_ids {
            match anonymized.column_vector(name)? {
                ColumnData::Numerical(v) => key.push(match v[i] {
                    Some(x) => format!("{:x}", x.to_bits()),
                    None => "∅".to_string(),
                }),
                ColumnData::Categorical(v) => key.push(v[i].clone().unwrap_or_else(|| "∅".to_string())),
            }
        }
        *groups.entry(key).or_insert(0) += 1;
    }
    Ok(groups.values().all(|&size| size >= k))
}
