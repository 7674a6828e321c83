//! Corpus- and segment-level scoring.
//!
//! Every metric takes a list of hypotheses and a list of references and
//! produces a [`MetricReport`]. Alongside the scores, each segment carries its
//! sufficient statistics ([`SegmentStats`]): summing them and calling
//! [`aggregate_from_stats`] reproduces the corpus score, which is what the
//! randomization test relies on when it reshuffles segments between systems.
//!
//! All scores are on a percentage scale. BLEU and chrF live in `[0, 100]`;
//! TER, WER and bWER are error rates and may exceed 100.

mod bleu;
mod chrf;
mod ter;
mod tokenize;
mod wer;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tokenize::tokenize_13a as tokenize;
pub use ter::ter_edits;
pub use wer::{bwer_errors, levenshtein, word_edits};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricId {
    #[serde(rename = "BLEU")]
    Bleu,
    #[serde(rename = "TER")]
    Ter,
    #[serde(rename = "CHRF")]
    Chrf,
    #[serde(rename = "WER")]
    Wer,
    #[serde(rename = "BWER")]
    Bwer,
}

impl MetricId {
    pub const ALL: [MetricId; 5] = [
        MetricId::Bleu,
        MetricId::Ter,
        MetricId::Chrf,
        MetricId::Wer,
        MetricId::Bwer,
    ];

    pub fn direction(self) -> Direction {
        match self {
            MetricId::Bleu | MetricId::Chrf => Direction::HigherBetter,
            MetricId::Ter | MetricId::Wer | MetricId::Bwer => Direction::LowerBetter,
        }
    }

    /// Lowercase name accepted on the command line.
    pub fn key(self) -> &'static str {
        match self {
            MetricId::Bleu => "bleu",
            MetricId::Ter => "ter",
            MetricId::Chrf => "chrf",
            MetricId::Wer => "wer",
            MetricId::Bwer => "bwer",
        }
    }

    /// Name used in table headers.
    pub fn label(self) -> &'static str {
        match self {
            MetricId::Bleu => "BLEU",
            MetricId::Ter => "TER",
            MetricId::Chrf => "chrF",
            MetricId::Wer => "WER",
            MetricId::Bwer => "bWER",
        }
    }

    /// Number of counts in one [`SegmentStats`] for this metric.
    pub fn stats_len(self) -> usize {
        match self {
            MetricId::Bleu => bleu::STATS_LEN,
            MetricId::Chrf => chrf::STATS_LEN,
            MetricId::Ter | MetricId::Wer | MetricId::Bwer => 2,
        }
    }

    /// Scores `hypotheses` against `references`.
    pub fn score<H: AsRef<str> + Sync, R: AsRef<str> + Sync>(
        self,
        hypotheses: &[H],
        references: &[R],
    ) -> Result<MetricReport, MetricError> {
        if hypotheses.len() != references.len() {
            return Err(MetricError::LengthMismatch {
                hypotheses: hypotheses.len(),
                references: references.len(),
            });
        }
        if hypotheses.is_empty() {
            return Err(MetricError::EmptyCorpus);
        }

        let per_segment: Vec<(Vec<f64>, f64)> = hypotheses
            .par_iter()
            .zip(references.par_iter())
            .map(|(h, r)| {
                let counts = self.segment_counts(h.as_ref(), r.as_ref());
                let score = self.segment_score(&counts);
                (counts, score)
            })
            .collect();

        let mut totals = vec![0.0; self.stats_len()];
        for (counts, _) in &per_segment {
            add_into(&mut totals, counts);
        }
        let corpus_score = self.score_from_counts(&totals)?;

        let (segment_stats, segment_scores) = per_segment
            .into_iter()
            .map(|(counts, score)| (SegmentStats { metric: self, counts }, score))
            .unzip();
        Ok(MetricReport {
            system_name: String::new(),
            metric: self,
            corpus_score,
            segment_scores,
            segment_stats,
        })
    }

    fn segment_counts(self, hyp: &str, reference: &str) -> Vec<f64> {
        match self {
            MetricId::Bleu => bleu::segment_counts(hyp, reference),
            MetricId::Ter => ter::segment_counts(hyp, reference),
            MetricId::Chrf => chrf::segment_counts(hyp, reference),
            MetricId::Wer => wer::wer_counts(hyp, reference),
            MetricId::Bwer => wer::bwer_counts(hyp, reference),
        }
    }

    fn segment_score(self, counts: &[f64]) -> f64 {
        match self {
            MetricId::Bleu => bleu::sentence_score(counts),
            MetricId::Chrf => chrf::f_score(counts),
            MetricId::Ter | MetricId::Wer | MetricId::Bwer => error_rate(counts[0], counts[1]),
        }
    }

    /// Corpus score from summed sufficient statistics.
    pub(crate) fn score_from_counts(self, totals: &[f64]) -> Result<f64, MetricError> {
        match self {
            MetricId::Bleu => Ok(bleu::corpus_score(totals)),
            MetricId::Chrf => {
                let chars: f64 = totals.chunks(3).map(|c| c[0] + c[1]).sum();
                if chars == 0.0 {
                    return Err(MetricError::UndefinedScore {
                        metric: self,
                        reason: "hypotheses and references contain no characters",
                    });
                }
                Ok(chrf::f_score(totals))
            }
            MetricId::Ter | MetricId::Wer | MetricId::Bwer => {
                if totals[1] == 0.0 {
                    return Err(MetricError::UndefinedScore {
                        metric: self,
                        reason: "references contain no words",
                    });
                }
                Ok(totals[0] / totals[1] * 100.0)
            }
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MetricId {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        MetricId::ALL
            .into_iter()
            .find(|m| m.key() == lower)
            .ok_or_else(|| MetricError::UnknownMetric(s.to_string()))
    }
}

fn error_rate(errors: f64, ref_words: f64) -> f64 {
    if ref_words > 0.0 {
        errors / ref_words * 100.0
    } else if errors > 0.0 {
        100.0
    } else {
        0.0
    }
}

fn add_into(totals: &mut [f64], counts: &[f64]) {
    for (t, c) in totals.iter_mut().zip(counts) {
        *t += c;
    }
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("{hypotheses} hypotheses for {references} references")]
    LengthMismatch { hypotheses: usize, references: usize },
    #[error("cannot score an empty corpus")]
    EmptyCorpus,
    #[error("{metric} is undefined: {reason}")]
    UndefinedScore {
        metric: MetricId,
        reason: &'static str,
    },
    #[error("statistics of different metrics cannot be aggregated ({0} and {1})")]
    MixedMetrics(MetricId, MetricId),
    #[error("{metric} statistics must have {expected} counts, found {found}")]
    MalformedStats {
        metric: MetricId,
        expected: usize,
        found: usize,
    },
    #[error("unknown metric {0:?} (supported: bleu, ter, chrf, wer, bwer)")]
    UnknownMetric(String),
}

/// Per-segment sufficient statistics.
///
/// Layouts:
/// - BLEU: `[hyp_len, ref_len, matches_1..=4, totals_1..=4]`
/// - chrF: `[hyp, ref, match]` for each character order 1..=6
/// - TER: `[edits, ref_words]`; WER: `[edits, ref_words]`; bWER: `[errors, ref_words]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub metric: MetricId,
    pub counts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub system_name: String,
    pub metric: MetricId,
    pub corpus_score: f64,
    pub segment_scores: Vec<f64>,
    pub segment_stats: Vec<SegmentStats>,
}

impl MetricReport {
    pub fn named(mut self, system_name: impl Into<String>) -> Self {
        self.system_name = system_name.into();
        self
    }
}

/// Recomputes a corpus score from per-segment statistics.
pub fn aggregate_from_stats(metric: MetricId, stats: &[SegmentStats]) -> Result<f64, MetricError> {
    if stats.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut totals = vec![0.0; metric.stats_len()];
    for s in stats {
        check_stats(metric, s)?;
        add_into(&mut totals, &s.counts);
    }
    metric.score_from_counts(&totals)
}

pub(crate) fn check_stats(metric: MetricId, stats: &SegmentStats) -> Result<(), MetricError> {
    if stats.metric != metric {
        return Err(MetricError::MixedMetrics(metric, stats.metric));
    }
    if stats.counts.len() != metric.stats_len() {
        return Err(MetricError::MalformedStats {
            metric,
            expected: metric.stats_len(),
            found: stats.counts.len(),
        });
    }
    Ok(())
}

pub fn bleu<H: AsRef<str> + Sync, R: AsRef<str> + Sync>(
    hypotheses: &[H],
    references: &[R],
) -> Result<MetricReport, MetricError> {
    MetricId::Bleu.score(hypotheses, references)
}

pub fn ter<H: AsRef<str> + Sync, R: AsRef<str> + Sync>(
    hypotheses: &[H],
    references: &[R],
) -> Result<MetricReport, MetricError> {
    MetricId::Ter.score(hypotheses, references)
}

pub fn chrf<H: AsRef<str> + Sync, R: AsRef<str> + Sync>(
    hypotheses: &[H],
    references: &[R],
) -> Result<MetricReport, MetricError> {
    MetricId::Chrf.score(hypotheses, references)
}

pub fn wer<H: AsRef<str> + Sync, R: AsRef<str> + Sync>(
    hypotheses: &[H],
    references: &[R],
) -> Result<MetricReport, MetricError> {
    MetricId::Wer.score(hypotheses, references)
}

pub fn bwer<H: AsRef<str> + Sync, R: AsRef<str> + Sync>(
    hypotheses: &[H],
    references: &[R],
) -> Result<MetricReport, MetricError> {
    MetricId::Bwer.score(hypotheses, references)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn directions() {
        assert_eq!(MetricId::Bleu.direction(), Direction::HigherBetter);
        assert_eq!(MetricId::Chrf.direction(), Direction::HigherBetter);
        for m in [MetricId::Ter, MetricId::Wer, MetricId::Bwer] {
            assert_eq!(m.direction(), Direction::LowerBetter);
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("BLEU".parse::<MetricId>().unwrap(), MetricId::Bleu);
        assert_eq!("chrF".parse::<MetricId>().unwrap(), MetricId::Chrf);
        assert_eq!(" bWER ".parse::<MetricId>().unwrap(), MetricId::Bwer);
        let err = "beer".parse::<MetricId>().unwrap_err().to_string();
        assert!(err.contains("beer") && err.contains("bleu, ter, chrf, wer, bwer"), "{err}");
    }

    #[test]
    fn length_mismatch_and_empty() {
        for m in MetricId::ALL {
            assert!(matches!(
                m.score(&["a"], &["a", "b"]),
                Err(MetricError::LengthMismatch { hypotheses: 1, references: 2 })
            ));
            let none: [&str; 0] = [];
            assert!(matches!(m.score(&none, &none), Err(MetricError::EmptyCorpus)));
        }
    }

    #[test]
    fn identical_corpora() {
        let refs = ["Der Hund bellt laut.", "Ein kurzer Satz", "x"];
        assert_eq!(bleu(&refs, &refs).unwrap().corpus_score, 100.0);
        assert_eq!(chrf(&refs, &refs).unwrap().corpus_score, 100.0);
        assert_eq!(ter(&refs, &refs).unwrap().corpus_score, 0.0);
        assert_eq!(wer(&refs, &refs).unwrap().corpus_score, 0.0);
        assert_eq!(bwer(&refs, &refs).unwrap().corpus_score, 0.0);
    }

    #[test]
    fn error_rate_examples() {
        assert_eq!(wer(&["the cat sat"], &["the cat sat"]).unwrap().corpus_score, 0.0);
        assert_eq!(wer(&["a x c"], &["a b c d"]).unwrap().corpus_score, 50.0);
        assert_eq!(wer(&["b a"], &["a b"]).unwrap().corpus_score, 100.0);
        assert_eq!(bwer(&["b a"], &["a b"]).unwrap().corpus_score, 0.0);
        assert_eq!(bwer(&["a x c"], &["a b c d"]).unwrap().corpus_score, 50.0);
        assert_eq!(ter(&["c d a b"], &["a b c d"]).unwrap().corpus_score, 25.0);
    }

    #[test]
    fn zero_reference_words() {
        assert!(matches!(
            wer(&["a"], &[""]),
            Err(MetricError::UndefinedScore { metric: MetricId::Wer, .. })
        ));
        assert!(matches!(
            bwer(&["a"], &[" "]),
            Err(MetricError::UndefinedScore { .. })
        ));
        assert!(matches!(ter(&["a"], &[""]), Err(MetricError::UndefinedScore { .. })));
        assert!(matches!(chrf(&[""], &[""]), Err(MetricError::UndefinedScore { .. })));
        // an empty reference among others just contributes nothing to TER
        let r = ter(&["a b", "stray words"], &["a b", ""]).unwrap();
        assert_eq!(r.corpus_score, 0.0);
        assert_eq!(r.segment_stats[1].counts, vec![0.0, 0.0]);
        // WER counts the stray words as insertions
        let r = wer(&["a b", "stray words"], &["a b", ""]).unwrap();
        assert_eq!(r.corpus_score, 100.0);
        assert_eq!(r.segment_scores[1], 100.0);
    }

    #[test]
    fn empty_hypotheses_score_zero_bleu() {
        let r = bleu(&["", ""], &["ein Satz", "noch einer"]).unwrap();
        assert_eq!(r.corpus_score, 0.0);
        assert!(r.segment_scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn aggregate_examples() {
        let one = bleu(&["a b c d e"], &["a b c d e"]).unwrap();
        assert_eq!(aggregate_from_stats(MetricId::Bleu, &one.segment_stats).unwrap(), 100.0);

        let stats = [
            SegmentStats { metric: MetricId::Wer, counts: vec![2.0, 4.0] },
            SegmentStats { metric: MetricId::Wer, counts: vec![0.0, 2.0] },
        ];
        let s = aggregate_from_stats(MetricId::Wer, &stats).unwrap();
        assert!((s - 100.0 / 3.0).abs() < 1e-12);

        assert!(matches!(aggregate_from_stats(MetricId::Wer, &[]), Err(MetricError::EmptyCorpus)));
        assert!(matches!(
            aggregate_from_stats(MetricId::Ter, &stats),
            Err(MetricError::MixedMetrics(MetricId::Ter, MetricId::Wer))
        ));
        let short = [SegmentStats { metric: MetricId::Bleu, counts: vec![1.0] }];
        assert!(matches!(
            aggregate_from_stats(MetricId::Bleu, &short),
            Err(MetricError::MalformedStats { .. })
        ));
    }

    fn sentence() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop::sample::select(vec!["der", "die", "Haus", "ist", "groß", ",", ".", "3.5", "nicht", "klein"]),
            1..12,
        )
        .prop_map(|w| w.join(" "))
    }

    fn corpus() -> impl Strategy<Value = Vec<(String, String)>> {
        prop::collection::vec((sentence(), sentence()), 1..8)
    }

    proptest! {
        #[test]
        fn concatenated_stats_equal_scoring_the_union(a in corpus(), b in corpus()) {
            for m in MetricId::ALL {
                let (ha, ra): (Vec<_>, Vec<_>) = a.iter().cloned().unzip();
                let (hb, rb): (Vec<_>, Vec<_>) = b.iter().cloned().unzip();
                let mut stats = m.score(&ha, &ra).unwrap().segment_stats;
                stats.extend(m.score(&hb, &rb).unwrap().segment_stats);
                let joined_h: Vec<_> = ha.iter().chain(&hb).collect();
                let joined_r: Vec<_> = ra.iter().chain(&rb).collect();
                let direct = m.score(&joined_h.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
                                     &joined_r.iter().map(|s| s.as_str()).collect::<Vec<_>>()).unwrap();
                let agg = aggregate_from_stats(m, &stats).unwrap();
                prop_assert!((agg - direct.corpus_score).abs() < 1e-9);
            }
        }

        #[test]
        fn permutation_equivariance(c in corpus(), seed in any::<u64>()) {
            let mut shuffled = c.clone();
            // deterministic Fisher-Yates driven by the seed
            let mut x = seed | 1;
            for i in (1..shuffled.len()).rev() {
                x ^= x << 13; x ^= x >> 7; x ^= x << 17;
                shuffled.swap(i, (x % (i as u64 + 1)) as usize);
            }
            for m in MetricId::ALL {
                let (h, r): (Vec<_>, Vec<_>) = c.iter().cloned().unzip();
                let (hs, rs): (Vec<_>, Vec<_>) = shuffled.iter().cloned().unzip();
                let a = m.score(&h, &r).unwrap().corpus_score;
                let b = m.score(&hs, &rs).unwrap().corpus_score;
                prop_assert!((a - b).abs() < 1e-9, "{m}: {a} vs {b}");
            }
        }

        #[test]
        fn score_ranges(c in corpus()) {
            let (h, r): (Vec<_>, Vec<_>) = c.into_iter().unzip();
            for m in MetricId::ALL {
                let rep = m.score(&h, &r).unwrap();
                match m.direction() {
                    Direction::HigherBetter => {
                        prop_assert!((0.0..=100.0).contains(&rep.corpus_score));
                        prop_assert!(rep.segment_scores.iter().all(|s| (0.0..=100.0 + 1e-9).contains(s)));
                    }
                    Direction::LowerBetter => {
                        prop_assert!(rep.corpus_score >= 0.0);
                    }
                }
                prop_assert!(rep.segment_stats.iter().all(|s| s.counts.iter().all(|&c| c >= 0.0)));
                let agg = aggregate_from_stats(m, &rep.segment_stats).unwrap();
                prop_assert!((agg - rep.corpus_score).abs() < 1e-9);
            }
        }
    }
}
