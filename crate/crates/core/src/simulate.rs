//! Synthetic benchmark series with injected level shifts and outliers.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{CommitId, MeasurementPoint, ModelError, Series, Trigger};

/// Spacing of synthetic runs, matching a three-hourly CI schedule.
pub const RUN_INTERVAL_HOURS: i64 = 3;
const COMMIT_BASE: u64 = 0xc00_0000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelShift {
    pub start: usize,
    /// Level relative to `base_mean`, e.g. `0.30` for +30 %.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n_points: usize,
    pub base_mean: f64,
    pub segments: Vec<LevelShift>,
    pub noise_sigma_rel: f64,
    pub outlier_prob: f64,
    pub outlier_scale: f64,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(n_points: usize, base_mean: f64) -> Self {
        Self {
            n_points,
            base_mean,
            segments: Vec::new(),
            noise_sigma_rel: 0.0,
            outlier_prob: 0.0,
            outlier_scale: 1.0,
            seed: 0,
        }
    }

    pub fn shift(mut self, start: usize, relative: f64) -> Self {
        self.segments.push(LevelShift { start, relative });
        self
    }

    pub fn noise(mut self, sigma_rel: f64) -> Self {
        self.noise_sigma_rel = sigma_rel;
        self
    }

    pub fn outliers(mut self, prob: f64, scale: f64) -> Self {
        self.outlier_prob = prob;
        self.outlier_scale = scale;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidArgument(m.to_string()));
        if self.n_points == 0 {
            return bad("n_points must be positive");
        }
        if !(self.base_mean > 0.0 && self.base_mean.is_finite()) {
            return bad("base_mean must be positive");
        }
        if !(self.noise_sigma_rel >= 0.0 && self.noise_sigma_rel.is_finite()) {
            return bad("noise_sigma_rel must be >= 0");
        }
        if !(0.0..1.0).contains(&self.outlier_prob) {
            return bad("outlier_prob must be in [0, 1)");
        }
        if !(self.outlier_scale >= 1.0 && self.outlier_scale.is_finite()) {
            return bad("outlier_scale must be >= 1");
        }
        let mut prev: Option<usize> = None;
        for s in &self.segments {
            if s.start >= self.n_points || prev.is_some_and(|p| s.start <= p) {
                return bad("segment starts must be strictly increasing and < n_points");
            }
            if !s.relative.is_finite() || s.relative <= -1.0 {
                return bad("relative shift must be finite and > -1");
            }
            prev = Some(s.start);
        }
        Ok(())
    }

    fn shift_at(&self, i: usize) -> f64 {
        self.segments
            .iter()
            .rev()
            .find(|s| s.start <= i)
            .map_or(0.0, |s| s.relative)
    }
}

/// First synthetic run time.
pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap()
}

/// Synthetic commit for run `i`: hex `c000000 + i`.
pub fn synthetic_commit(i: usize) -> CommitId {
    CommitId::new(format!("{:07x}", COMMIT_BASE + i as u64)).expect("hex commit")
}

/// Generates the raw values of `spec` (no series bookkeeping).
pub fn simulate_values(spec: &SimSpec) -> Result<Vec<f64>, ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma_rel).expect("sigma validated");
    Ok((0..spec.n_points)
        .map(|i| {
            // both draws happen every step so the noise stream does not
            // depend on outlier_prob
            let eps = noise.sample(&mut rng);
            let u: f64 = rng.random();
            let mut v = spec.base_mean * (1.0 + spec.shift_at(i)) * (1.0 + eps);
            if u < spec.outlier_prob {
                v *= spec.outlier_scale;
            }
            v.max(0.0)
        })
        .collect())
}

/// Generates a scheduled-run series in nanoseconds, one run every three
/// hours from [`epoch`]. Negative draws are clamped to zero.
pub fn simulate(spec: &SimSpec) -> Result<Series, ModelError> {
    let values = simulate_values(spec)?;
    Series::from_points(
        None,
        values
            .into_iter()
            .enumerate()
            .map(|(i, v)| MeasurementPoint {
                commit: synthetic_commit(i),
                timestamp: epoch() + Duration::hours(RUN_INTERVAL_HOURS * i as i64),
                value: v,
                unit: "ns".into(),
                env: Default::default(),
                trigger: Trigger::Schedule,
            }),
    )
}
