use std::collections::HashMap;

const CHAR_ORDER: usize = 6;
const BETA: f64 = 2.0;
pub(super) const STATS_LEN: usize = 3 * CHAR_ORDER;

fn char_ngrams(chars: &[char], n: usize) -> HashMap<&[char], u32> {
    let mut counts = HashMap::new();
    for gram in chars.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// `[hyp, ref, match]` per character order, whitespace removed.
pub(super) fn segment_counts(hyp: &str, reference: &str) -> Vec<f64> {
    let hyp_chars: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let ref_chars: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();

    let mut stats = Vec::with_capacity(STATS_LEN);
    for n in 1..=CHAR_ORDER {
        let hyp_grams = char_ngrams(&hyp_chars, n);
        let ref_grams = char_ngrams(&ref_chars, n);
        let matches: u32 = hyp_grams
            .iter()
            .filter_map(|(g, &c)| ref_grams.get(g).map(|&r| c.min(r)))
            .sum();
        stats.push(hyp_chars.len().saturating_sub(n - 1) as f64);
        stats.push(ref_chars.len().saturating_sub(n - 1) as f64);
        stats.push(f64::from(matches));
    }
    stats
}

/// chrF (β = 2) from per-order counts.
///
/// Precision and recall are averaged over the orders where both sides have
/// n-grams; orders without any are skipped.
pub(super) fn f_score(stats: &[f64]) -> f64 {
    let mut avg_prec = 0.0;
    let mut avg_rec = 0.0;
    let mut orders = 0;
    for order in stats.chunks_exact(3) {
        let (hyp, reference, matches) = (order[0], order[1], order[2]);
        if hyp > 0.0 && reference > 0.0 {
            avg_prec += matches / hyp;
            avg_rec += matches / reference;
            orders += 1;
        }
    }
    if orders == 0 {
        return 0.0;
    }
    avg_prec /= orders as f64;
    avg_rec /= orders as f64;
    if avg_prec + avg_rec == 0.0 {
        return 0.0;
    }
    let factor = BETA * BETA;
    100.0 * (1.0 + factor) * avg_prec * avg_rec / (factor * avg_prec + avg_rec)
}
