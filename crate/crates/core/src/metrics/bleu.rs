use std::collections::HashMap;

use super::tokenize::tokenize_13a;

const MAX_ORDER: usize = 4;
pub(super) const STATS_LEN: usize = 2 + 2 * MAX_ORDER;

fn ngram_counts(tokens: &[String]) -> HashMap<&[String], u32> {
    let mut counts = HashMap::new();
    for n in 1..=MAX_ORDER.min(tokens.len()) {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// `[hyp_len, ref_len, matches_1..=4, totals_1..=4]`
pub(super) fn segment_counts(hyp: &str, reference: &str) -> Vec<f64> {
    let hyp_tokens = tokenize_13a(hyp.trim_end());
    let ref_tokens = tokenize_13a(reference.trim_end());
    let ref_grams = ngram_counts(&ref_tokens);

    let mut stats = vec![0.0; STATS_LEN];
    stats[0] = hyp_tokens.len() as f64;
    stats[1] = ref_tokens.len() as f64;
    for (gram, count) in ngram_counts(&hyp_tokens) {
        let order = gram.len() - 1;
        stats[2 + MAX_ORDER + order] += f64::from(count);
        if let Some(&ref_count) = ref_grams.get(gram) {
            stats[2 + order] += f64::from(count.min(ref_count));
        }
    }
    stats
}

fn brevity_penalty(hyp_len: f64, ref_len: f64) -> f64 {
    if hyp_len >= ref_len {
        1.0
    } else if hyp_len > 0.0 {
        (1.0 - ref_len / hyp_len).exp()
    } else {
        0.0
    }
}

/// Unsmoothed corpus BLEU.
///
/// Orders for which the hypotheses contain no n-gram at all are left out of
/// the geometric mean; any order with n-grams but no match gives 0.
pub(super) fn corpus_score(stats: &[f64]) -> f64 {
    let (matches, totals) = stats[2..].split_at(MAX_ORDER);
    if matches.iter().all(|&m| m == 0.0) {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for (&m, &t) in matches.iter().zip(totals) {
        if t == 0.0 {
            break;
        }
        if m == 0.0 {
            return 0.0;
        }
        log_sum += (m / t).ln();
        orders += 1;
    }
    brevity_penalty(stats[0], stats[1]) * (log_sum / orders as f64).exp() * 100.0
}

/// Sentence BLEU with exponential-decay smoothing and effective order.
pub(super) fn sentence_score(stats: &[f64]) -> f64 {
    let (matches, totals) = stats[2..].split_at(MAX_ORDER);
    if matches.iter().all(|&m| m == 0.0) {
        return 0.0;
    }
    let mut smooth = 1.0;
    let mut log_sum = 0.0;
    let mut orders = 0;
    for (&m, &t) in matches.iter().zip(totals) {
        if t == 0.0 {
            break;
        }
        let precision = if m == 0.0 {
            smooth *= 2.0;
            1.0 / (smooth * t)
        } else {
            m / t
        };
        log_sum += precision.ln();
        orders += 1;
    }
    brevity_penalty(stats[0], stats[1]) * (log_sum / orders as f64).exp() * 100.0
}
