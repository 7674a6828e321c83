//! Paired approximate randomization testing and significance clustering.
//!
//! The test statistic is the absolute difference between the two systems'
//! corpus scores, recomputed from summed per-segment statistics. Each trial
//! swaps every segment's pair of statistics with probability ½. The p-value is
//! `(#{d_t >= d_0} + 1) / (trials + 1)`.
//!
//! The swap decisions of trial `t` come from a ChaCha8 stream keyed by
//! `(seed, t)`, word `i / 64`, bit `i % 64` for segment `i`. Trials are
//! evaluated in parallel and the outcome does not depend on the worker count.

use std::collections::{HashMap, HashSet};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{check_stats, Direction, MetricError, MetricId, MetricReport, SegmentStats};

#[derive(Debug, Error)]
pub enum SignificanceError {
    #[error("systems have {0} and {1} segments")]
    LengthMismatch(usize, usize),
    #[error("no segments to compare")]
    Empty,
    #[error("no systems to rank")]
    NoSystems,
    #[error("duplicate system name {0:?}")]
    DuplicateSystem(String),
    #[error("report for {system} is for {found}, expected {expected}")]
    WrongMetric {
        system: String,
        found: MetricId,
        expected: MetricId,
    },
    #[error("invalid test configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtConfig {
    pub trials: u32,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for ArtConfig {
    fn default() -> Self {
        ArtConfig {
            trials: 10_000,
            alpha: 0.05,
            seed: 42,
        }
    }
}

impl ArtConfig {
    pub fn validate(&self) -> Result<(), SignificanceError> {
        if self.trials == 0 {
            return Err(SignificanceError::InvalidConfig("trials must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SignificanceError::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Systems of one metric grouped into clusters, best cluster first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRanking {
    pub metric: MetricId,
    pub clusters: Vec<Vec<String>>,
    /// p-values of adjacent pairs in ranking order (`#systems - 1` entries).
    pub p_values: Vec<f64>,
}

impl ClusterRanking {
    /// Systems in ranking order.
    pub fn order(&self) -> impl Iterator<Item = &str> {
        self.clusters.iter().flatten().map(String::as_str)
    }

    /// 1-based cluster rank of `system`.
    pub fn rank_of(&self, system: &str) -> Option<usize> {
        self.clusters
            .iter()
            .position(|c| c.iter().any(|s| s == system))
            .map(|i| i + 1)
    }
}

fn flatten(metric: MetricId, stats: &[SegmentStats]) -> Result<Vec<f64>, MetricError> {
    let mut flat = Vec::with_capacity(stats.len() * metric.stats_len());
    for s in stats {
        check_stats(metric, s)?;
        flat.extend_from_slice(&s.counts);
    }
    Ok(flat)
}

/// Two-sided paired approximate randomization test.
pub fn art_test(
    stats_a: &[SegmentStats],
    stats_b: &[SegmentStats],
    metric: MetricId,
    config: &ArtConfig,
) -> Result<f64, SignificanceError> {
    config.validate()?;
    if stats_a.len() != stats_b.len() {
        return Err(SignificanceError::LengthMismatch(stats_a.len(), stats_b.len()));
    }
    if stats_a.is_empty() {
        return Err(SignificanceError::Empty);
    }
    let k = metric.stats_len();
    let a = flatten(metric, stats_a)?;
    let b = flatten(metric, stats_b)?;

    let mut total_a = vec![0.0; k];
    let mut total_b = vec![0.0; k];
    for (seg_a, seg_b) in a.chunks_exact(k).zip(b.chunks_exact(k)) {
        for j in 0..k {
            total_a[j] += seg_a[j];
            total_b[j] += seg_b[j];
        }
    }
    // b - a per segment; swapping segment i adds it to A and removes it from B
    let delta: Vec<f64> = b.iter().zip(&a).map(|(y, x)| y - x).collect();
    let observed = (metric.score_from_counts(&total_a)? - metric.score_from_counts(&total_b)?).abs();

    let n = stats_a.len();
    let extreme = (0..config.trials)
        .into_par_iter()
        .map_init(
            || (vec![0.0; k], vec![0.0; k]),
            |(sum_a, sum_b), trial| -> Result<usize, MetricError> {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(u64::from(trial));
                sum_a.copy_from_slice(&total_a);
                sum_b.copy_from_slice(&total_b);
                let mut bits = 0u64;
                for (i, d) in delta.chunks_exact(k).enumerate().take(n) {
                    if i % 64 == 0 {
                        bits = rng.next_u64();
                    }
                    if bits & 1 == 1 {
                        for j in 0..k {
                            sum_a[j] += d[j];
                            sum_b[j] -= d[j];
                        }
                    }
                    bits >>= 1;
                }
                let stat = (metric.score_from_counts(sum_a)? - metric.score_from_counts(sum_b)?).abs();
                Ok(usize::from(stat >= observed))
            },
        )
        .try_reduce(|| 0, |x, y| Ok(x + y))?;

    Ok((extreme as f64 + 1.0) / (f64::from(config.trials) + 1.0))
}

fn by_score(a: (&str, f64), b: (&str, f64), direction: Direction) -> std::cmp::Ordering {
    let primary = match direction {
        Direction::HigherBetter => b.1.total_cmp(&a.1),
        Direction::LowerBetter => a.1.total_cmp(&b.1),
    };
    primary.then_with(|| a.0.cmp(b.0))
}

/// Orders `(name, score)` pairs best first; ties go to the smaller name.
pub fn rank_by_score<'a>(
    scores: impl IntoIterator<Item = (&'a str, f64)>,
    direction: Direction,
) -> Result<Vec<String>, SignificanceError> {
    let mut entries: Vec<(&str, f64)> = scores.into_iter().collect();
    let mut seen = HashSet::with_capacity(entries.len());
    for (name, _) in &entries {
        if !seen.insert(*name) {
            return Err(SignificanceError::DuplicateSystem(name.to_string()));
        }
    }
    entries.sort_by(|a, b| by_score(*a, *b, direction));
    Ok(entries.into_iter().map(|(n, _)| n.to_string()).collect())
}

/// Sorts systems by their corpus score on `metric`, best first.
pub fn sort_systems(reports: &[MetricReport], metric: MetricId) -> Result<Vec<String>, SignificanceError> {
    for r in reports {
        if r.metric != metric {
            return Err(SignificanceError::WrongMetric {
                system: r.system_name.clone(),
                found: r.metric,
                expected: metric,
            });
        }
    }
    rank_by_score(
        reports.iter().map(|r| (r.system_name.as_str(), r.corpus_score)),
        metric.direction(),
    )
}

/// Clusters systems by testing each adjacent pair of the ranking.
///
/// A significant difference (p < alpha) between a system and its predecessor
/// opens a new cluster; otherwise the system joins the predecessor's cluster.
pub fn cluster_systems(
    reports: &[MetricReport],
    metric: MetricId,
    config: &ArtConfig,
) -> Result<ClusterRanking, SignificanceError> {
    config.validate()?;
    let order = sort_systems(reports, metric)?;
    let by_name: HashMap<&str, &MetricReport> =
        reports.iter().map(|r| (r.system_name.as_str(), r)).collect();

    let mut names = order.into_iter();
    let first = names.next().ok_or(SignificanceError::NoSystems)?;
    let mut prev = by_name[first.as_str()];
    let mut clusters = vec![vec![first]];
    let mut p_values = Vec::new();
    for name in names {
        let this = by_name[name.as_str()];
        let p = art_test(&prev.segment_stats, &this.segment_stats, metric, config)?;
        p_values.push(p);
        if p < config.alpha {
            clusters.push(vec![name]);
        } else {
            clusters.last_mut().expect("at least one cluster").push(name);
        }
        prev = this;
    }
    Ok(ClusterRanking {
        metric,
        clusters,
        p_values,
    })
}
