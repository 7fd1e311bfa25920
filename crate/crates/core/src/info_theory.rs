//! Entropy and mutual-information estimation, NMI normalization, exponential
//! scaling, and the fixed-size sampling protocol.
//!
//! Mutual information uses the Kraskov k-nearest-neighbour estimator
//! (max-norm, algorithm 1) with a tiny uniform jitter to break ties.
//! Entropy uses a multiplicity-aware digamma estimator,
//!
//! ```text
//! H = psi(N) - sum_v (n_v / N) * psi(n_v + 1)
//! ```
//!
//! over the groups of exactly-equal values. On data with large tie groups it
//! converges to the discrete plug-in entropy; on all-distinct samples it
//! equals `psi(N) - psi(2)`, the same quantity the k-NN self-information
//! estimate approaches, so the `MI / H` ratios stay on one scale for both
//! continuous and rounded/discrete columns.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::tabular::DatasetPair;

/// Controls for NMI estimation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NmiConfig {
    /// Sampling kicks in when at least this many aligned pairs exist.
    pub sample_size: usize,
    /// Number of pseudo-random fixed-size samples to average over.
    pub n_repeats: usize,
    /// Neighbour count for the k-NN mutual information estimator.
    pub knn_k: usize,
    pub seed: u64,
}

impl Default for NmiConfig {
    fn default() -> Self {
        Self { sample_size: 10_000, n_repeats: 5, knn_k: 3, seed: 0 }
    }
}

/// Raw estimator outputs for one (original, anonymized) column pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MIEstimate {
    pub mi_nats: f64,
    pub h_original_nats: f64,
    pub h_anonymized_nats: f64,
    pub sample_size_used: usize,
    pub sampled: bool,
}

/// A sampled-and-scaled NMI score.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NmiScore {
    /// Mean scaled score across samples, in [0, 1].
    pub value: f64,
    /// Variance of the per-sample scaled scores (0 when unsampled).
    pub variance: f64,
    /// Mean unscaled ratio across samples.
    pub raw: f64,
    pub estimate: MIEstimate,
    pub n_repeats_used: usize,
}

/// Outcome of a metric that may be undefined for degenerate inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum MetricOutcome {
    Applicable(NmiScore),
    NotApplicable(String),
}

// Fewer aligned pairs than this and k-NN estimates are meaningless; the
// column is reported as not applicable instead.
pub const MIN_MI_POINTS: usize = 10;

/// Deterministic seed derivation; stable across platforms and releases.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = base ^ 0x9e37_79b9_7f4a_7c15;
    for &t in tags {
        state ^= t.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        state = splitmix64(state);
    }
    splitmix64(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a hash for seeding streams by column name.
pub fn hash_tag(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// Multiplicity-aware entropy estimate in nats, clamped at 0.
///
/// A constant vector has zero entropy; an all-distinct sample of size N
/// yields `psi(N) - psi(2)`.
pub fn entropy_nats(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);

    let nf = n as f64;
    let mut acc = 0.0;
    let mut run_start = 0;
    for i in 1..=n {
        if i == n || sorted[i] != sorted[run_start] {
            let m = (i - run_start) as f64;
            acc += m * digamma(m + 1.0);
            run_start = i;
        }
    }
    (digamma(nf) - acc / nf).max(0.0)
}

/// Entropy under the shared estimator config; at least 2 non-missing values
/// expected, constant vectors yield 0.
pub fn estimate_entropy(values: &[f64], _config: &NmiConfig) -> f64 {
    entropy_nats(values)
}

/// Kraskov k-NN mutual information estimate in nats, clamped at 0.
///
/// When `x` and `y` are bitwise identical the self-information shortcut
/// `MI(X, X) = H(X)` is returned directly.
pub fn estimate_mi_seeded(x: &[f64], y: &[f64], k: usize, seed: u64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < MIN_MI_POINTS {
        return Err(Error::Precondition(format!("need at least {MIN_MI_POINTS} points, got {n}")));
    }
    let k = k.clamp(1, n - 2);

    if x.iter().zip(y).all(|(a, b)| a.to_bits() == b.to_bits()) {
        return Ok(entropy_nats(x));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let xj = jitter(x, &mut rng);
    let yj = jitter(y, &mut rng);

    // points sorted by x; each carries its y
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| xj[a].total_cmp(&xj[b]));
    let sx: Vec<f64> = order.iter().map(|&i| xj[i]).collect();
    let sy: Vec<f64> = order.iter().map(|&i| yj[i]).collect();
    let mut sorted_y = yj.clone();
    sorted_y.sort_unstable_by(f64::total_cmp);

    let mut psi_sum = 0.0;
    let mut kth = vec![0.0f64; k]; // scratch: k best distances, max at [0]
    for p in 0..n {
        let eps = kth_neighbour_distance(&sx, &sy, p, k, &mut kth);
        let nx = count_within(&sx, sx[p], eps) - 1;
        let ny = count_within(&sorted_y, sy[p], eps) - 1;
        psi_sum += digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0);
    }

    let mi = digamma(k as f64) + digamma(n as f64) - psi_sum / n as f64;
    Ok(mi.max(0.0))
}

/// Spec-facing wrapper taking the shared config.
pub fn estimate_mi(x: &[f64], y: &[f64], config: &NmiConfig) -> Result<f64> {
    estimate_mi_seeded(x, y, config.knn_k, config.seed)
}

fn jitter(values: &[f64], rng: &mut ChaCha20Rng) -> Vec<f64> {
    let amp = values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64;
    let amp = amp.max(1.0) * 1e-10;
    values.iter().map(|v| v + amp * (rng.random::<f64>() - 0.5)).collect()
}

// Max-norm distance to the k-th nearest neighbour of point p, found by
// expanding outward through the x-sorted order. `kth` is caller scratch of
// length k holding the current best distances with the maximum at index 0.
fn kth_neighbour_distance(sx: &[f64], sy: &[f64], p: usize, k: usize, kth: &mut [f64]) -> f64 {
    let n = sx.len();
    let mut filled = 0usize;
    let mut left = p;
    let mut right = p + 1;
    loop {
        let gap_left = if left > 0 { sx[p] - sx[left - 1] } else { f64::INFINITY };
        let gap_right = if right < n { sx[right] - sx[p] } else { f64::INFINITY };
        if gap_left.is_infinite() && gap_right.is_infinite() {
            break;
        }
        let idx;
        let gap;
        if gap_left <= gap_right {
            left -= 1;
            idx = left;
            gap = gap_left;
        } else {
            idx = right;
            right += 1;
            gap = gap_right;
        }
        if filled == k && gap >= kth[0] {
            break;
        }
        let d = gap.max((sy[p] - sy[idx]).abs());
        if filled < k {
            kth[filled] = d;
            filled += 1;
            if filled == k {
                bubble_max_front(kth);
            }
        } else if d < kth[0] {
            kth[0] = d;
            bubble_max_front(kth);
        }
    }
    debug_assert_eq!(filled, k);
    kth[0]
}

fn bubble_max_front(kth: &mut [f64]) {
    let mut max_i = 0;
    for i in 1..kth.len() {
        if kth[i] > kth[max_i] {
            max_i = i;
        }
    }
    kth.swap(0, max_i);
}

// Number of sorted values in the open interval (center - eps, center + eps).
fn count_within(sorted: &[f64], center: f64, eps: f64) -> usize {
    let lo = sorted.partition_point(|&v| v <= center - eps);
    let hi = sorted.partition_point(|&v| v < center + eps);
    hi.saturating_sub(lo)
}

/// Exponential scaling of an unscaled NMI ratio `n` by the input entropy `e`
/// (nats): the first nat of input entropy carries the full `(1 - n)` penalty
/// and each successive nat half the previous one. Closed form of
/// `1 - (1/e) * integral_0^e 2^(-t) (1 - n) dt`, continuous at `e -> 0`
/// where the limit is `n`.
pub fn scale_nmiv1(n: f64, e: f64) -> f64 {
    let n = n.clamp(0.0, 1.0);
    if e <= 0.0 {
        return n;
    }
    let eln2 = e * std::f64::consts::LN_2;
    // (1 - 2^-e) / (e ln 2), stable near e = 0
    let avg = -(-eln2).exp_m1() / eln2;
    (1.0 - (1.0 - n) * avg).clamp(0.0, 1.0)
}

/// Which entropy normalizes the mutual information.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmiVariant {
    /// Divide by the original column's entropy: penalizes anonymization
    /// suppressing entropy.
    V1,
    /// Divide by the anonymized column's entropy: penalizes anonymization
    /// injecting entropy.
    V2,
}

/// Unscaled, unsampled NMIv1 ratio `MI / H(original)` clamped into [0, 1].
pub fn nmiv1_raw(pair: &DatasetPair, column: &str, config: &NmiConfig) -> Result<MetricOutcome> {
    raw_ratio(pair, column, config, NmiVariant::V1)
}

/// Unscaled, unsampled NMIv2 ratio `MI / H(anonymized)` clamped into [0, 1].
pub fn nmiv2_raw(pair: &DatasetPair, column: &str, config: &NmiConfig) -> Result<MetricOutcome> {
    raw_ratio(pair, column, config, NmiVariant::V2)
}

fn raw_ratio(pair: &DatasetPair, column: &str, config: &NmiConfig, variant: NmiVariant) -> Result<MetricOutcome> {
    let (xs, ys) = pair.aligned_numerical(column)?;
    if xs.len() < MIN_MI_POINTS {
        return Ok(MetricOutcome::NotApplicable(format!(
            "only {} aligned non-missing pairs (need {MIN_MI_POINTS})",
            xs.len()
        )));
    }
    let seed = derive_seed(config.seed, &[hash_tag(column)]);
    match sample_score(&xs, &ys, config, variant, seed, false)? {
        Some(score) => Ok(MetricOutcome::Applicable(score)),
        None => Ok(MetricOutcome::NotApplicable("normalizing entropy is zero".to_string())),
    }
}

/// Sampled-and-scaled NMIv1 for one numerical column.
///
/// With at least `sample_size` aligned pairs, `n_repeats` pseudo-random
/// samples of exactly `sample_size` are drawn and the per-sample scaled
/// scores averaged; smaller inputs are computed in one pass over everything.
/// The scaling entropy is estimated from the same sample as the MI.
pub fn nmiv1(pair: &DatasetPair, column: &str, config: &NmiConfig) -> Result<MetricOutcome> {
    nmi_scored(pair, column, config, NmiVariant::V1)
}

/// Sampled-and-scaled NMIv2 (anonymized-entropy divisor), same protocol.
pub fn nmiv2(pair: &DatasetPair, column: &str, config: &NmiConfig) -> Result<MetricOutcome> {
    nmi_scored(pair, column, config, NmiVariant::V2)
}

fn nmi_scored(pair: &DatasetPair, column: &str, config: &NmiConfig, variant: NmiVariant) -> Result<MetricOutcome> {
    let (xs, ys) = pair.aligned_numerical(column)?;
    nmi_scored_vecs(&xs, &ys, config, variant, hash_tag(column))
}

/// Sampling protocol over raw aligned vectors; exposed for callers that
/// build pairs without a [`DatasetPair`] (validation experiments, bindings).
pub fn nmi_scored_vecs(
    xs: &[f64],
    ys: &[f64],
    config: &NmiConfig,
    variant: NmiVariant,
    column_tag: u64,
) -> Result<MetricOutcome> {
    if xs.len() != ys.len() {
        return Err(Error::Contract(format!("length mismatch: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < MIN_MI_POINTS {
        return Ok(MetricOutcome::NotApplicable(format!(
            "only {} aligned non-missing pairs (need {MIN_MI_POINTS})",
            xs.len()
        )));
    }

    let sampled = config.sample_size > 0 && xs.len() >= config.sample_size;
    if !sampled {
        let seed = derive_seed(config.seed, &[column_tag]);
        return match sample_score(xs, ys, config, variant, seed, true)? {
            Some(score) => Ok(MetricOutcome::Applicable(score)),
            None => Ok(MetricOutcome::NotApplicable("normalizing entropy is zero".to_string())),
        };
    }

    let repeats = config.n_repeats.max(1);
    let mut scaled_values = Vec::with_capacity(repeats);
    let mut raws = Vec::with_capacity(repeats);
    let mut mi_sum = 0.0;
    let mut ho_sum = 0.0;
    let mut ha_sum = 0.0;
    for r in 0..repeats {
        let seed = derive_seed(config.seed, &[column_tag, r as u64]);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let idx = rand::seq::index::sample(&mut rng, xs.len(), config.sample_size);
        let sx: Vec<f64> = idx.iter().map(|i| xs[i]).collect();
        let sy: Vec<f64> = idx.iter().map(|i| ys[i]).collect();
        match sample_score(&sx, &sy, config, variant, derive_seed(seed, &[1]), true)? {
            Some(score) => {
                scaled_values.push(score.value);
                raws.push(score.raw);
                mi_sum += score.estimate.mi_nats;
                ho_sum += score.estimate.h_original_nats;
                ha_sum += score.estimate.h_anonymized_nats;
            }
            None => {
                return Ok(MetricOutcome::NotApplicable(
                    "normalizing entropy is zero in a sample".to_string(),
                ))
            }
        }
    }
    let m = scaled_values.len() as f64;
    let mean = scaled_values.iter().sum::<f64>() / m;
    let variance = scaled_values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    Ok(MetricOutcome::Applicable(NmiScore {
        value: mean,
        variance,
        raw: raws.iter().sum::<f64>() / m,
        estimate: MIEstimate {
            mi_nats: mi_sum / m,
            h_original_nats: ho_sum / m,
            h_anonymized_nats: ha_sum / m,
            sample_size_used: config.sample_size,
            sampled: true,
        },
        n_repeats_used: scaled_values.len(),
    }))
}

// One raw-or-scaled evaluation on a concrete sample. Returns None when the
// normalizing entropy is zero.
fn sample_score(
    xs: &[f64],
    ys: &[f64],
    config: &NmiConfig,
    variant: NmiVariant,
    seed: u64,
    scaled: bool,
) -> Result<Option<NmiScore>> {
    let h_o = entropy_nats(xs);
    let h_a = entropy_nats(ys);
    let h = match variant {
        NmiVariant::V1 => h_o,
        NmiVariant::V2 => h_a,
    };
    if h <= 0.0 {
        return Ok(None);
    }
    let mi = estimate_mi_seeded(xs, ys, config.knn_k, seed)?;
    let raw = (mi / h).clamp(0.0, 1.0);
    let value = if scaled { scale_nmiv1(raw, h) } else { raw };
    Ok(Some(NmiScore {
        value,
        variance: 0.0,
        raw,
        estimate: MIEstimate {
            mi_nats: mi,
            h_original_nats: h_o,
            h_anonymized_nats: h_a,
            sample_size_used: xs.len(),
            sampled: false,
        },
        n_repeats_used: 1,
    }))
}
