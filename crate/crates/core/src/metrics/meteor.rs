use std::collections::HashMap;

const ALPHA: f64 = 0.9;
const GAMMA: f64 = 0.5;
const THETA: f64 = 3.0;

/// Search budget for the chunk-minimizing alignment; past it the best alignment found so far is used.
const SEARCH_BUDGET: usize = 200_000;

/// Exact-match unigram alignment: the most matches, and among those the fewest chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeteorAlignment {
    pub matches: usize,
    pub chunks: usize,
}

struct Search<'a> {
    hyp: &'a [&'a str],
    reference: &'a [&'a str],
    used: Vec<bool>,
    needed: HashMap<&'a str, usize>,
    hyp_left: HashMap<&'a str, usize>,
    best: usize,
    visited: usize,
}

impl Search<'_> {
    fn run(&mut self, i: usize, prev: Option<(usize, usize)>, chunks: usize) {
        self.visited += 1;
        if chunks >= self.best || self.visited > SEARCH_BUDGET {
            return;
        }
        if i == self.hyp.len() {
            self.best = chunks;
            return;
        }
        let w = self.hyp[i];
        let need = self.needed.get(w).copied().unwrap_or(0);
        *self.hyp_left.get_mut(w).expect("counted") -= 1;
        if need > 0 {
            // try continuing the current chunk first; it gives the tightest bound early
            let mut candidates: Vec<usize> =
                (0..self.reference.len()).filter(|&j| !self.used[j] && self.reference[j] == w).collect();
            if let Some((pi, pj)) = prev {
                if pi + 1 == i {
                    if let Some(pos) = candidates.iter().position(|&j| j == pj + 1) {
                        candidates.swap(0, pos);
                    }
                }
            }
            for j in candidates {
                let extends = matches!(prev, Some((pi, pj)) if pi + 1 == i && pj + 1 == j);
                self.used[j] = true;
                *self.needed.get_mut(w).expect("needed") -= 1;
                self.run(i + 1, Some((i, j)), chunks + usize::from(!extends));
                *self.needed.get_mut(w).expect("needed") += 1;
                self.used[j] = false;
            }
        }
        // leaving this token unmatched is only allowed if later copies can still fill the quota
        if self.hyp_left[w] >= need {
            self.run(i + 1, prev, chunks);
        }
        *self.hyp_left.get_mut(w).expect("counted") += 1;
    }
}

/// Computes the maximum-match, minimum-chunk alignment between `hyp` and `reference`.
pub fn align<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> MeteorAlignment {
    let hyp: Vec<&str> = hyp.iter().map(AsRef::as_ref).collect();
    let reference: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let mut hyp_counts: HashMap<&str, usize> = HashMap::new();
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for &w in &hyp {
        *hyp_counts.entry(w).or_default() += 1;
    }
    for &w in &reference {
        *ref_counts.entry(w).or_default() += 1;
    }
    let needed: HashMap<&str, usize> = hyp_counts
        .iter()
        .map(|(&w, &c)| (w, c.min(ref_counts.get(w).copied().unwrap_or(0))))
        .collect();
    let matches = needed.values().sum();
    if matches == 0 {
        return MeteorAlignment { matches: 0, chunks: 0 };
    }
    let mut search = Search {
        hyp: &hyp,
        reference: &reference,
        used: vec![false; reference.len()],
        needed,
        hyp_left: hyp_counts,
        best: usize::MAX,
        visited: 0,
    };
    search.run(0, None, 0);
    let chunks = if search.best == usize::MAX { greedy_chunks(&hyp, &reference) } else { search.best };
    MeteorAlignment { matches, chunks }
}

/// Chunks of the left-to-right first-available alignment.
fn greedy_chunks(hyp: &[&str], reference: &[&str]) -> usize {
    let mut used = vec![false; reference.len()];
    let mut prev: Option<(usize, usize)> = None;
    let mut chunks = 0;
    for (i, w) in hyp.iter().enumerate() {
        let next = prev.map(|(_, pj)| pj + 1).filter(|&j| j < reference.len() && !used[j] && reference[j] == *w);
        let Some(j) = next.or_else(|| (0..reference.len()).find(|&j| !used[j] && reference[j] == *w)) else {
            continue;
        };
        used[j] = true;
        if !matches!(prev, Some((pi, pj)) if pi + 1 == i && pj + 1 == j) {
            chunks += 1;
        }
        prev = Some((i, j));
    }
    chunks
}

/// METEOR restricted to the exact-match stage (α = 0.9, γ = 0.5, θ = 3).
pub fn meteor_lite<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> f64 {
    let a = align(hyp, reference);
    if a.matches == 0 {
        return 0.0;
    }
    let m = a.matches as f64;
    let p = m / hyp.len() as f64;
    let r = m / reference.len() as f64;
    let f_mean = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
    let penalty = GAMMA * (a.chunks as f64 / m).powf(THETA);
    f_mean * (1.0 - penalty)
}
