use std::collections::HashMap;

/// Word-level Levenshtein distance with unit costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=a.len()).collect();
    let mut cur = vec![0; a.len() + 1];
    for (i, y) in b.iter().enumerate() {
        cur[0] = i + 1;
        for (j, x) in a.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[a.len()]
}

/// Word edits between whitespace-split `hyp` and `reference`.
pub fn word_edits(hyp: &str, reference: &str) -> usize {
    let h: Vec<&str> = hyp.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    levenshtein(&h, &r)
}

/// Bag-of-words errors: `max(|H|, |R|) - Σ_w min(count_H(w), count_R(w))`.
pub fn bwer_errors(hyp: &str, reference: &str) -> usize {
    let mut bag: HashMap<&str, isize> = HashMap::new();
    let mut hyp_len = 0;
    for w in hyp.split_whitespace() {
        *bag.entry(w).or_default() += 1;
        hyp_len += 1;
    }
    let mut ref_len = 0;
    let mut matches = 0;
    for w in reference.split_whitespace() {
        ref_len += 1;
        if let Some(c) = bag.get_mut(w) {
            if *c > 0 {
                *c -= 1;
                matches += 1;
            }
        }
    }
    hyp_len.max(ref_len) - matches
}

pub(super) fn wer_counts(hyp: &str, reference: &str) -> Vec<f64> {
    let ref_words = reference.split_whitespace().count();
    vec![word_edits(hyp, reference) as f64, ref_words as f64]
}

pub(super) fn bwer_counts(hyp: &str, reference: &str) -> Vec<f64> {
    let ref_words = reference.split_whitespace().count();
    vec![bwer_errors(hyp, reference) as f64, ref_words as f64]
}
