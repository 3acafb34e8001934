//! Comparison of eigenvalue multisets.

use num_complex::Complex64;

/// Smallest `d` such that the two multisets can be matched one to one with
/// every pair at distance at most `d`. `None` if the sizes differ.
pub fn bottleneck_distance(a: &[Complex64], b: &[Complex64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    if a.is_empty() {
        return Some(0.0);
    }
    let n = a.len();
    let dist: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| (x - y).norm()).collect()).collect();
    let mut cands: Vec<f64> = dist.iter().flatten().copied().collect();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let (mut lo, mut hi) = (0, cands.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if perfect_matching(n, &dist, cands[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(cands[lo])
}

fn perfect_matching(n: usize, dist: &[Vec<f64>], limit: f64) -> bool {
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let mut seen = vec![false; n];
        if !augment(i, dist, limit, &mut seen, &mut owner) {
            return false;
        }
    }
    true
}

fn augment(i: usize, dist: &[Vec<f64>], limit: f64, seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
    for j in 0..owner.len() {
        if dist[i][j] <= limit && !seen[j] {
            seen[j] = true;
            if owner[j].is_none_or(|k| augment(k, dist, limit, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
    }
    false
}

/// Largest modulus in the multiset.
pub fn spectral_radius(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
