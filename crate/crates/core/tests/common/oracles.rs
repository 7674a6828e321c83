//! Brute-force reference implementations used as test oracles.
#![allow(dead_code)]

use sysrank::metrics::{aggregate_from_stats, MetricId, SegmentStats};

/// Plain O(n·m) edit distance, written independently of the library.
pub fn edit_distance(a: &[&str], b: &[&str]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

fn permute(items: &mut Vec<&str>, k: usize, best: &mut usize, reference: &[&str]) {
    if k == items.len() {
        *best = (*best).min(edit_distance(items, reference));
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, best, reference);
        items.swap(k, i);
    }
}

/// Minimum edit distance over every reordering of `hyp`.
pub fn min_permutation_edits(hyp: &[&str], reference: &[&str]) -> usize {
    let mut items = hyp.to_vec();
    let mut best = usize::MAX;
    permute(&mut items, 0, &mut best, reference);
    best
}

/// Exact two-sided p-value over all 2^N swap patterns.
pub fn exact_art_p(a: &[SegmentStats], b: &[SegmentStats], metric: MetricId) -> f64 {
    let n = a.len();
    assert!(n <= 20);
    let diff = |x: &[SegmentStats], y: &[SegmentStats]| {
        (aggregate_from_stats(metric, x).unwrap() - aggregate_from_stats(metric, y).unwrap()).abs()
    };
    let observed = diff(a, b);
    let mut hits = 0u64;
    for mask in 0u32..(1 << n) {
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            if mask >> i & 1 == 1 {
                x.push(b[i].clone());
                y.push(a[i].clone());
            } else {
                x.push(a[i].clone());
                y.push(b[i].clone());
            }
        }
        if diff(&x, &y) >= observed {
            hits += 1;
        }
    }
    hits as f64 / f64::from(1u32 << n)
}
