//! E-Divisive Means change-point detection.
//!
//! A series is split hierarchically: every current segment proposes the split
//! maximizing the sample energy divergence
//!
//! ```text
//! Q(X, Y; α) = mn/(m+n) · [ 2/(mn) ΣΣ|xᵢ−yⱼ|^α − C(m,2)⁻¹ Σ_{i<k}|xᵢ−xₖ|^α − C(n,2)⁻¹ Σ_{j<k}|yⱼ−yₖ|^α ]
//! ```
//!
//! the strongest proposal is tested with a permutation test restricted to its
//! own segment, and splitting stops at the first candidate that is not
//! significant. Accepted change points are then filtered by relative
//! magnitude.
//!
//! The within-sample terms are U-statistics, so the estimate can be slightly
//! negative for non-constant samples with little separation. A candidate with
//! a non-positive statistic is never significant.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{CommitId, Series};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectError {
    #[error("segment too short: divergence needs at least 2 values per side, got {0}")]
    TooShort(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid series: non-finite value at index {0}")]
    InvalidSeries(usize),
}

/// Tuning knobs for [`detect`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Exponent of the energy distance, in (0, 2].
    pub alpha: f64,
    /// A split is accepted when its permutation p-value is at most this.
    pub p_threshold: f64,
    /// Minimum |relative mean change| for a change point to be reported.
    pub magnitude_threshold: f64,
    pub permutations: usize,
    pub min_segment: usize,
    pub seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            p_threshold: 0.001,
            magnitude_threshold: 0.05,
            permutations: 999,
            min_segment: 5,
            seed: 0,
        }
    }
}

impl DetectionConfig {
    /// Smallest permutation count whose p-value floor `1/(R+1)` reaches
    /// `p_threshold`.
    pub fn min_permutations(p_threshold: f64) -> usize {
        // guard against 1/0.001 landing a hair above 1000
        ((1.0 / p_threshold) - 1e-9).ceil().max(1.0) as usize - 1
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |m: String| Err(DetectError::InvalidArgument(m));
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return bad(format!("alpha must be in (0, 2], got {}", self.alpha));
        }
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return bad(format!(
                "p_threshold must be in (0, 1), got {}",
                self.p_threshold
            ));
        }
        if !(self.magnitude_threshold >= 0.0 && self.magnitude_threshold.is_finite()) {
            return bad(format!(
                "magnitude_threshold must be finite and >= 0, got {}",
                self.magnitude_threshold
            ));
        }
        if self.min_segment < 2 {
            return bad(format!(
                "min_segment must be >= 2, got {}",
                self.min_segment
            ));
        }
        let needed = Self::min_permutations(self.p_threshold).max(1);
        if self.permutations < needed {
            return bad(format!(
                "{} permutations cannot produce a p-value <= {}; need at least {needed}",
                self.permutations, self.p_threshold
            ));
        }
        Ok(())
    }
}

/// Half-open index range `[start, end)` of a value vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start < end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Best split of a segment: `tau` is the absolute index of the first value of
/// the right part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub tau: usize,
    pub qhat: f64,
}

/// A reported change point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePoint {
    /// First index of the right segment.
    pub index: usize,
    pub before_commit: CommitId,
    pub after_commit: CommitId,
    pub qhat: f64,
    pub p_value: f64,
    /// `mean_after / mean_before - 1`; `None` when the left mean is zero.
    pub magnitude: Option<f64>,
}

/// A change point located on a bare value vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectedSplit {
    pub index: usize,
    pub qhat: f64,
    pub p_value: f64,
    pub magnitude: Option<f64>,
}

fn check_alpha(alpha: f64) -> Result<(), DetectError> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(DetectError::InvalidArgument(format!(
            "alpha must be in (0, 2], got {alpha}"
        )))
    }
}

#[inline]
fn dist(a: f64, b: f64, alpha: f64) -> f64 {
    let d = (a - b).abs();
    if alpha == 1.0 {
        d
    } else {
        d.powf(alpha)
    }
}

fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn within_sum(x: &[f64], alpha: f64) -> f64 {
    let mut terms = Vec::with_capacity(x.len() * x.len().saturating_sub(1) / 2);
    for (i, &a) in x.iter().enumerate() {
        for &b in &x[i + 1..] {
            terms.push(dist(a, b, alpha));
        }
    }
    sorted_sum(terms)
}

fn qhat_from_sums(cross: f64, within_x: f64, within_y: f64, m: usize, n: usize) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    let between = 2.0 * cross / (mf * nf);
    let wx = within_x / (mf * (mf - 1.0) / 2.0);
    let wy = within_y / (nf * (nf - 1.0) / 2.0);
    mf * nf / (mf + nf) * (between - (wx + wy))
}

/// Sample energy divergence `Q(x, y; α)` between two samples of at least two
/// values each. Exactly symmetric in its arguments.
pub fn divergence(x: &[f64], y: &[f64], alpha: f64) -> Result<f64, DetectError> {
    check_alpha(alpha)?;
    if x.len() < 2 || y.len() < 2 {
        return Err(DetectError::TooShort(x.len().min(y.len())));
    }
    // order-independent sums keep divergence(x, y) == divergence(y, x) bitwise
    let mut cross = Vec::with_capacity(x.len() * y.len());
    for &a in x {
        for &b in y {
            cross.push(dist(a, b, alpha));
        }
    }
    let cross = sorted_sum(cross);
    let (wx, wy) = (within_sum(x, alpha), within_sum(y, alpha));
    let (mf, nf) = (x.len() as f64, y.len() as f64);
    let between = 2.0 * cross / (mf * nf);
    let within = wx / (mf * (mf - 1.0) / 2.0) + wy / (nf * (nf - 1.0) / 2.0);
    Ok(mf * nf / (mf + nf) * (between - within))
}

/// Pairwise distance matrix of one segment, row-major.
struct DistanceMatrix {
    len: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    fn new(values: &[f64], alpha: f64) -> Self {
        let len = values.len();
        let mut d = vec![0.0; len * len];
        for i in 0..len {
            for j in i + 1..len {
                let v = dist(values[i], values[j], alpha);
                d[i * len + j] = v;
                d[j * len + i] = v;
            }
        }
        Self { len, d }
    }

    /// Best split (relative position, qhat) of the values taken in `order`,
    /// scanning every admissible split with O(len) incremental updates.
    fn best_split(&self, order: &[usize], min_segment: usize) -> Option<(usize, f64)> {
        let len = self.len;
        if len < 2 * min_segment {
            return None;
        }
        let row = |i: usize| &self.d[order[i] * len..order[i] * len + len];
        let first = min_segment;
        let (mut within_left, mut within_right, mut cross) = (0.0, 0.0, 0.0);
        for i in 0..len {
            let r = row(i);
            for j in i + 1..len {
                let v = r[order[j]];
                match (i < first, j < first) {
                    (true, true) => within_left += v,
                    (false, false) => within_right += v,
                    _ => cross += v,
                }
            }
        }
        let last = len - min_segment;
        let mut best: Option<(usize, f64)> = None;
        let mut tau = first;
        loop {
            let q = qhat_from_sums(cross, within_left, within_right, tau, len - tau);
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((tau, q));
            }
            if tau == last {
                break;
            }
            // move the value at `tau` from the right part to the left part
            let r = row(tau);
            let to_left: f64 = order[..tau].iter().map(|&o| r[o]).sum();
            let to_right: f64 = order[tau + 1..].iter().map(|&o| r[o]).sum();
            within_left += to_left;
            within_right -= to_right;
            cross += to_right - to_left;
            tau += 1;
        }
        best
    }
}

/// The split of `segment` maximizing the divergence between its two parts,
/// with both parts at least `min_segment` long. Ties go to the smallest tau.
pub fn best_split(
    values: &[f64],
    segment: Segment,
    config: &DetectionConfig,
) -> Option<SplitCandidate> {
    if segment.end > values.len() || segment.len() < 2 * config.min_segment.max(2) {
        return None;
    }
    let slice = &values[segment.start..segment.end];
    let matrix = DistanceMatrix::new(slice, config.alpha);
    let order: Vec<usize> = (0..slice.len()).collect();
    matrix
        .best_split(&order, config.min_segment.max(2))
        .map(|(tau, qhat)| SplitCandidate {
            tau: segment.start + tau,
            qhat,
        })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the permutation trials of one segment. Depends only on the
/// configured seed and the segment bounds, so a candidate's p-value does not
/// depend on which splits were evaluated before it.
fn segment_seed(seed: u64, segment: Segment) -> u64 {
    let h = splitmix64(seed);
    let h = splitmix64(h ^ segment.start as u64);
    splitmix64(h ^ (segment.end as u64).rotate_left(32))
}

/// Permutation p-value `(1 + #{trials with qhat ≥ observed}) / (R + 1)` for
/// the best split of `segment`.
///
/// Each trial shuffles the segment's values with its own ChaCha8 stream
/// (key derived from the seed and segment bounds, stream = trial index), so
/// trials run in parallel and the result matches sequential evaluation.
pub fn permutation_pvalue(
    values: &[f64],
    segment: Segment,
    observed_qhat: f64,
    config: &DetectionConfig,
) -> f64 {
    let trials = config.permutations.max(1);
    let min_segment = config.min_segment.max(2);
    if observed_qhat <= 0.0 || segment.end > values.len() || segment.len() < 2 * min_segment {
        return 1.0;
    }
    let matrix = DistanceMatrix::new(&values[segment.start..segment.end], config.alpha);
    let key = segment_seed(config.seed, segment);
    let exceed: usize = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(key);
            rng.set_stream(trial as u64);
            let mut order: Vec<usize> = (0..matrix.len).collect();
            order.shuffle(&mut rng);
            let (_, q) = matrix
                .best_split(&order, min_segment)
                .expect("segment length checked above");
            usize::from(q >= observed_qhat)
        })
        .sum();
    (1 + exceed) as f64 / (trials + 1) as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs hierarchical detection on raw values and applies both filters.
pub fn detect_values(
    values: &[f64],
    config: &DetectionConfig,
) -> Result<Vec<DetectedSplit>, DetectError> {
    config.validate()?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(DetectError::InvalidSeries(i));
    }
    let accepted = significant_splits(values, config);
    let mut bounds: Vec<usize> = Vec::with_capacity(accepted.len() + 2);
    bounds.push(0);
    bounds.extend(accepted.iter().map(|s| s.0));
    bounds.push(values.len());

    let mut out = Vec::new();
    for (k, &(index, qhat, p_value)) in accepted.iter().enumerate() {
        let before = mean(&values[bounds[k]..index]);
        let after = mean(&values[index..bounds[k + 2]]);
        let magnitude = (before != 0.0).then(|| after / before - 1.0);
        let keep = magnitude.is_none_or(|m| m.abs() >= config.magnitude_threshold);
        if keep {
            out.push(DetectedSplit {
                index,
                qhat,
                p_value,
                magnitude,
            });
        }
    }
    Ok(out)
}

/// Accepted (index, qhat, p) triples in index order, before the magnitude
/// filter.
fn significant_splits(values: &[f64], config: &DetectionConfig) -> Vec<(usize, f64, f64)> {
    let n = values.len();
    if n < 2 * config.min_segment {
        return Vec::new();
    }
    let mut segments = vec![Segment::new(0, n)];
    let mut proposals: Vec<Option<SplitCandidate>> = vec![best_split(values, segments[0], config)];
    let mut accepted = Vec::new();
    loop {
        // strongest proposal; ties go to the smallest tau
        let pick = proposals
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|c| (i, c)))
            .reduce(|a, b| {
                let better = b.1.qhat > a.1.qhat || (b.1.qhat == a.1.qhat && b.1.tau < a.1.tau);
                if better {
                    b
                } else {
                    a
                }
            });
        let Some((slot, cand)) = pick else { break };
        let segment = segments[slot];
        let p = permutation_pvalue(values, segment, cand.qhat, config);
        if p > config.p_threshold {
            break;
        }
        accepted.push((cand.tau, cand.qhat, p));
        let left = Segment::new(segment.start, cand.tau);
        let right = Segment::new(cand.tau, segment.end);
        segments[slot] = left;
        proposals[slot] = best_split(values, left, config);
        segments.push(right);
        proposals.push(best_split(values, right, config));
    }
    accepted.sort_by_key(|a| a.0);
    accepted
}

/// Detects change points in a stored series. Short series (fewer than
/// `2 * min_segment` points) yield no change points.
pub fn detect(series: &Series, config: &DetectionConfig) -> Result<Vec<ChangePoint>, DetectError> {
    let values = series.values();
    let points = series.points();
    Ok(detect_values(&values, config)?
        .into_iter()
        .map(|s| ChangePoint {
            index: s.index,
            before_commit: points[s.index - 1].commit.clone(),
            after_commit: points[s.index].commit.clone(),
            qhat: s.qhat,
            p_value: s.p_value,
            magnitude: s.magnitude,
        })
        .collect())
}
