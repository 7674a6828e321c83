//! Translation edit rate with tercom's greedy block-shift heuristic.
//!
//! The edit distance is a beam-restricted Levenshtein around the length-scaled
//! diagonal. Shifts are searched greedily: at each step every candidate block
//! move is scored and the best one is applied as long as it reduces the edit
//! distance. Candidates are ranked by (distance reduction, block length,
//! earliest hypothesis position, earliest target position).

use super::tokenize::tokenize_13a;

const MAX_SHIFT_SIZE: usize = 10;
const MAX_SHIFT_DIST: usize = 50;
const BEAM_WIDTH: i64 = 25;
const MAX_SHIFT_CANDIDATES: usize = 1000;
const INFINITY: u64 = 10_000_000_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Match,
    Sub,
    /// consumes a reference word
    Ins,
    /// consumes a hypothesis word
    Del,
    Undefined,
}

type Cell = (u64, Op);

/// `[edits, ref_words]` over 13a tokens. Empty references contribute nothing.
pub(super) fn segment_counts(hyp: &str, reference: &str) -> Vec<f64> {
    let hyp_tokens = tokenize_13a(hyp.trim_end());
    let ref_tokens = tokenize_13a(reference.trim_end());
    if ref_tokens.is_empty() {
        return vec![0.0, 0.0];
    }
    let h: Vec<&str> = hyp_tokens.iter().map(String::as_str).collect();
    let r: Vec<&str> = ref_tokens.iter().map(String::as_str).collect();
    vec![ter_edits(&h, &r) as f64, r.len() as f64]
}

/// Number of TER edits (shifts plus word edits) turning `hyp` into `reference`.
pub fn ter_edits(hyp: &[&str], reference: &[&str]) -> usize {
    if reference.is_empty() {
        return hyp.len();
    }
    let dp = BeamEditDistance::new(reference, hyp.len());
    let mut words = hyp.to_vec();
    let mut shifts = 0;
    let mut checked = 0;
    loop {
        let (delta, shifted) = best_shift(&dp, &words, &mut checked);
        if checked >= MAX_SHIFT_CANDIDATES || delta <= 0 {
            break;
        }
        shifts += 1;
        words = shifted;
    }
    let rows = dp.full(&words);
    shifts + dp.distance(&rows) as usize
}

struct BeamEditDistance<'r> {
    reference: &'r [&'r str],
    hyp_len: usize,
    ratio: f64,
    beam: i64,
}

impl<'r> BeamEditDistance<'r> {
    /// Shifts never change the hypothesis length, so one instance serves all
    /// candidates of a segment.
    fn new(reference: &'r [&'r str], hyp_len: usize) -> Self {
        let ratio = if hyp_len > 0 {
            reference.len() as f64 / hyp_len as f64
        } else {
            1.0
        };
        let beam = if (BEAM_WIDTH as f64) < ratio / 2.0 {
            (ratio / 2.0 + BEAM_WIDTH as f64).ceil() as i64
        } else {
            BEAM_WIDTH
        };
        BeamEditDistance {
            reference,
            hyp_len,
            ratio,
            beam,
        }
    }

    fn full(&self, hyp: &[&str]) -> Vec<Vec<Cell>> {
        let width = self.reference.len() + 1;
        let mut rows = vec![vec![(INFINITY, Op::Undefined); width]; self.hyp_len + 1];
        for (j, cell) in rows[0].iter_mut().enumerate() {
            *cell = (j as u64, Op::Ins);
        }
        self.fill(hyp, &mut rows, 0);
        rows
    }

    /// Recomputes rows `from + 1 ..= hyp_len`; rows up to `from` must already
    /// hold the values for `hyp`'s prefix.
    fn fill(&self, hyp: &[&str], rows: &mut [Vec<Cell>], from: usize) {
        let n_ref = self.reference.len() as i64;
        for i in from + 1..=self.hyp_len {
            let (done, rest) = rows.split_at_mut(i);
            let prev = &done[i - 1];
            let row = &mut rest[0];
            row.fill((INFINITY, Op::Undefined));

            let diag = (i as f64 * self.ratio).floor() as i64;
            let min_j = (diag - self.beam).max(0);
            let max_j = if i == self.hyp_len {
                n_ref + 1
            } else {
                (diag + self.beam).min(n_ref + 1)
            };
            for j in min_j.max(0) as usize..max_j.max(0) as usize {
                if j == 0 {
                    row[0] = (prev[0].0 + 1, Op::Del);
                    continue;
                }
                let sub = if hyp[i - 1] == self.reference[j - 1] {
                    (prev[j - 1].0, Op::Match)
                } else {
                    (prev[j - 1].0 + 1, Op::Sub)
                };
                // preference order: match/sub, then consuming a hypothesis
                // word, then consuming a reference word
                for candidate in [sub, (prev[j].0 + 1, Op::Del), (row[j - 1].0 + 1, Op::Ins)] {
                    if row[j].0 > candidate.0 {
                        row[j] = candidate;
                    }
                }
            }
        }
    }

    fn distance(&self, rows: &[Vec<Cell>]) -> u64 {
        rows[self.hyp_len][self.reference.len()].0
    }

    fn trace(&self, rows: &[Vec<Cell>]) -> Vec<Op> {
        let mut trace = Vec::new();
        let (mut i, mut j) = (self.hyp_len, self.reference.len());
        while i > 0 || j > 0 {
            let op = rows[i][j].1;
            trace.push(op);
            match op {
                Op::Match | Op::Sub => {
                    i -= 1;
                    j -= 1;
                }
                Op::Ins => j -= 1,
                Op::Del => i -= 1,
                Op::Undefined => unreachable!("edit trace left the beam"),
            }
        }
        trace.reverse();
        trace
    }
}

struct Alignment {
    /// hypothesis position aligned to each reference position (-1 before start)
    ref_to_hyp: Vec<i64>,
    ref_err: Vec<u32>,
    hyp_err: Vec<u32>,
}

/// Alignment read off the trace, seen as rewriting the reference into the
/// hypothesis (insertions and deletions swap roles).
fn alignment(trace: &[Op]) -> Alignment {
    let mut pos_hyp: i64 = -1;
    let mut a = Alignment {
        ref_to_hyp: Vec::new(),
        ref_err: Vec::new(),
        hyp_err: Vec::new(),
    };
    for op in trace {
        match op {
            Op::Match | Op::Sub => {
                let err = u32::from(*op == Op::Sub);
                pos_hyp += 1;
                a.ref_to_hyp.push(pos_hyp);
                a.hyp_err.push(err);
                a.ref_err.push(err);
            }
            // flipped: consuming a hypothesis word is an insertion
            Op::Del => {
                pos_hyp += 1;
                a.hyp_err.push(1);
            }
            Op::Ins => {
                a.ref_to_hyp.push(pos_hyp);
                a.ref_err.push(1);
            }
            Op::Undefined => unreachable!(),
        }
    }
    a
}

/// `(hyp_start, ref_start, length)` for every matching block, shortest first.
fn shifted_pairs(hyp: &[&str], reference: &[&str]) -> Vec<(usize, usize, usize)> {
    let mut pairs = Vec::new();
    for start_h in 0..hyp.len() {
        for start_r in 0..reference.len() {
            if start_r.abs_diff(start_h) > MAX_SHIFT_DIST {
                continue;
            }
            let mut length = 0;
            while hyp[start_h + length] == reference[start_r + length] && length < MAX_SHIFT_SIZE {
                length += 1;
                pairs.push((start_h, start_r, length));
                if start_h + length == hyp.len() || start_r + length == reference.len() {
                    break;
                }
            }
        }
    }
    pairs
}

/// Moves `words[start..start + length]` so that it begins at `target`.
fn perform_shift<'a>(words: &[&'a str], start: usize, length: usize, target: usize) -> Vec<&'a str> {
    let n = words.len();
    let block = &words[start..start + length];
    let mut out = Vec::with_capacity(n);
    if target < start {
        out.extend_from_slice(&words[..target]);
        out.extend_from_slice(block);
        out.extend_from_slice(&words[target..start]);
        out.extend_from_slice(&words[start + length..]);
    } else if target > start + length {
        out.extend_from_slice(&words[..start]);
        out.extend_from_slice(&words[start + length..target]);
        out.extend_from_slice(block);
        out.extend_from_slice(&words[target..]);
    } else {
        let end = (length + target).min(n);
        out.extend_from_slice(&words[..start]);
        out.extend_from_slice(&words[start + length..end]);
        out.extend_from_slice(block);
        out.extend_from_slice(&words[end..]);
    }
    out
}

fn common_prefix(a: &[&str], b: &[&str]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Finds the best single shift; returns its distance reduction and the
/// shifted words (the input words when no candidate exists).
fn best_shift<'a>(
    dp: &BeamEditDistance<'_>,
    words: &[&'a str],
    checked: &mut usize,
) -> (i64, Vec<&'a str>) {
    let base = dp.full(words);
    let pre_score = dp.distance(&base) as i64;
    let align = alignment(&dp.trace(&base));

    // scratch rows agree with `base` up to `clean_upto`
    let mut scratch = base.clone();
    let mut clean_upto = dp.hyp_len;

    type Key = (i64, usize, i64, i64);
    let mut best: Option<(Key, Vec<&'a str>)> = None;

    for (start_h, start_r, length) in shifted_pairs(words, dp.reference) {
        let hyp_end = (start_h + length).min(align.hyp_err.len());
        if align.hyp_err[start_h..hyp_end].iter().sum::<u32>() == 0 {
            continue;
        }
        let ref_end = (start_r + length).min(align.ref_err.len());
        if align.ref_err[start_r..ref_end].iter().sum::<u32>() == 0 {
            continue;
        }
        let aligned = align.ref_to_hyp[start_r];
        if start_h as i64 <= aligned && aligned < (start_h + length) as i64 {
            continue;
        }

        let mut prev_idx = -1;
        for offset in -1..length as i64 {
            let pos = start_r as i64 + offset;
            let idx = if pos == -1 {
                0
            } else if let Some(&h) = align.ref_to_hyp.get(pos as usize) {
                h + 1
            } else {
                break;
            };
            if idx == prev_idx {
                continue;
            }
            prev_idx = idx;

            let shifted = perform_shift(words, start_h, length, idx as usize);
            let prefix = common_prefix(words, &shifted);
            if clean_upto < prefix {
                for row in clean_upto + 1..=prefix {
                    scratch[row].copy_from_slice(&base[row]);
                }
            }
            dp.fill(&shifted, &mut scratch, prefix);
            clean_upto = prefix;
            let score = dp.distance(&scratch) as i64;

            let key = (pre_score - score, length, -(start_h as i64), -idx);
            *checked += 1;
            if best.as_ref().is_none_or(|(k, _)| key > *k) {
                best = Some((key, shifted));
            }
        }
        if *checked >= MAX_SHIFT_CANDIDATES {
            break;
        }
    }

    match best {
        Some(((delta, ..), shifted)) => (delta, shifted),
        None => (0, words.to_vec()),
    }
}
