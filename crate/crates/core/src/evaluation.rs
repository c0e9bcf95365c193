// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scores for a detected segmentation against simulated ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pelt::Segmentation;
use crate::simulation::GroundTruth;

/// Default matching window: a detection within `window − 1` steps matches.
pub const DEFAULT_WINDOW: usize = 10;

/// True and false positive rates, exact and within a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub tp_exact: f64,
    pub fp_exact: f64,
    pub tp_window: f64,
    pub fp_window: f64,
    /// `(true, detected)` pairs of the window matching.
    pub matched: Vec<(usize, usize)>,
    pub window: usize,
}

/// Greedy nearest-first matching. A detection `η` matches a true changepoint
/// `τ` when `|η − τ| < window`; each changepoint on either side is used at
/// most once. TP is the matched share of the truth (1 when the truth is
/// empty); FP is the unmatched detections over the `n − |truth|` positions
/// that are not changepoints.
pub fn match_rates(truth: &[usize], detected: &[usize], window: usize, n: usize) -> MatchReport {
    let exact = greedy_match(truth, detected, 1);
    let matched = greedy_match(truth, detected, window.max(1));
    let tp = |m: usize| if truth.is_empty() { 1.0 } else { m as f64 / truth.len() as f64 };
    let negatives = n.saturating_sub(truth.len());
    let fp = |m: usize| {
        if negatives == 0 {
            0.0
        } else {
            detected.len().saturating_sub(m) as f64 / negatives as f64
        }
    };
    MatchReport {
        tp_exact: tp(exact.len()),
        fp_exact: fp(exact.len()),
        tp_window: tp(matched.len()),
        fp_window: fp(matched.len()),
        matched,
        window,
    }
}

fn greedy_match(truth: &[usize], detected: &[usize], window: usize) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (i, &t) in truth.iter().enumerate() {
        for (j, &d) in detected.iter().enumerate() {
            let dist = t.abs_diff(d);
            if dist < window {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_unstable();
    let mut used_t = vec![false; truth.len()];
    let mut used_d = vec![false; detected.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_t[i] && !used_d[j] {
            used_t[i] = true;
            used_d[j] = true;
            out.push((truth[i], detected[j]));
        }
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub distance: f64,
    /// `(true, detected)` pairs of the optimal assignment.
    pub assignment: Vec<(usize, usize)>,
    pub m: usize,
    pub k: usize,
}

/// `|m − k|` plus the minimum over assignments of the smaller set into the
/// larger of `Σ |τᵢ − ηⱼ| / n`.
pub fn changepoint_distance(truth: &[usize], detected: &[usize], n: usize) -> DistanceReport {
    let (m, k) = (truth.len(), detected.len());
    let scale = n.max(1) as f64;
    let swap = m > k;
    let (rows, cols) = if swap { (detected, truth) } else { (truth, detected) };
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| r.abs_diff(c) as f64 / scale).collect())
        .collect();
    let (total, cols_of_rows) = hungarian(&cost);
    let mut assignment: Vec<(usize, usize)> = cols_of_rows
        .iter()
        .enumerate()
        .map(|(r, &c)| if swap { (cols[c], rows[r]) } else { (rows[r], cols[c]) })
        .collect();
    assignment.sort_unstable();
    DistanceReport {
        distance: m.abs_diff(k) as f64 + total,
        assignment,
        m,
        k,
    }
}

/// Minimum-cost assignment of every row to a distinct column of a
/// rectangular matrix with `rows ≤ cols`, by the shortest augmenting path
/// form of the Hungarian method. Returns the cost and each row's column.
pub fn hungarian(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let rows = cost.len();
    if rows == 0 {
        return (0.0, Vec::new());
    }
    let cols = cost[0].len();
    assert!(rows <= cols, "hungarian needs rows <= cols");
    // 1-based potentials and matching, index 0 is the virtual source.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut row_of = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; rows];
    for j in 1..=cols {
        if row_of[j] != 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    let total = col_of.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (total, col_of)
}

/// RMSE of the fitted series against the clean simulated series.
pub fn rmse_fit(truth: &GroundTruth, segmentation: &Segmentation) -> Result<f64> {
    rmse(&truth.clean, &segmentation.fitted_values())
}

/// RMSE between the true and estimated per-index γ tracks.
pub fn rmse_gamma(truth: &GroundTruth, segmentation: &Segmentation) -> Result<f64> {
    rmse(&truth.gamma_track(), &segmentation.gamma_track())
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptySeries);
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn perfect_match() {
        let r = match_rates(&[100, 300], &[100, 300], 10, 1000);
        assert_eq!((r.tp_exact, r.fp_exact, r.tp_window, r.fp_window), (1.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn window_match() {
        let r = match_rates(&[100], &[105], 10, 1000);
        assert_eq!(r.tp_window, 1.0);
        assert_eq!(r.tp_exact, 0.0);
        assert_eq!(r.fp_window, 0.0);
        assert_relative_eq!(r.fp_exact, 1.0 / 999.0);
        // The window is open: 10 steps away does not match.
        assert_eq!(match_rates(&[100], &[110], 10, 1000).tp_window, 0.0);
        assert_eq!(match_rates(&[100], &[91], 10, 1000).tp_window, 1.0);
    }

    #[test]
    fn greedy_takes_nearest_first_and_never_reuses() {
        let r = match_rates(&[100, 104], &[103], 10, 1000);
        assert_eq!(r.matched, vec![(104, 103)]);
        assert_eq!(r.tp_window, 0.5);
        let r = match_rates(&[100], &[98, 101], 10, 1000);
        assert_eq!(r.matched, vec![(100, 101)]);
        assert_relative_eq!(r.fp_window, 1.0 / 999.0);
    }

    #[test]
    fn empty_truth() {
        let r = match_rates(&[], &[], 10, 100);
        assert_eq!((r.tp_window, r.fp_window), (1.0, 0.0));
        let r = match_rates(&[], &[50], 10, 100);
        assert_relative_eq!(r.fp_window, 0.01);
    }

    #[test]
    fn distance_examples() {
        let d = changepoint_distance(&[100, 200], &[110, 190], 1000);
        assert_relative_eq!(d.distance, 0.02, epsilon = 1e-15);
        assert_eq!(d.assignment, vec![(100, 110), (200, 190)]);
        assert_eq!(changepoint_distance(&[5, 9], &[5, 9], 100).distance, 0.0);
        assert_eq!(changepoint_distance(&[], &[], 100).distance, 0.0);
        let d = changepoint_distance(&[100], &[100, 500], 1000);
        assert_relative_eq!(d.distance, 1.0);
        assert_eq!(d.assignment, vec![(100, 100)]);
        let d = changepoint_distance(&[100, 500], &[], 1000);
        assert_eq!(d.distance, 2.0);
    }

    #[test]
    fn rmse_checks_lengths() {
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert_relative_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    /// Minimum over all injections of the smaller set into the larger.
    fn brute_force(truth: &[usize], detected: &[usize], n: usize) -> f64 {
        let (small, large) = if truth.len() <= detected.len() {
            (truth, detected)
        } else {
            (detected, truth)
        };
        fn go(small: &[usize], large: &[usize], used: &mut Vec<bool>, n: f64) -> f64 {
            let Some((&first, rest)) = small.split_first() else {
                return 0.0;
            };
            let mut best = f64::INFINITY;
            for j in 0..large.len() {
                if !used[j] {
                    used[j] = true;
                    let c = first.abs_diff(large[j]) as f64 / n + go(rest, large, used, n);
                    used[j] = false;
                    best = best.min(c);
                }
            }
            best
        }
        let mut used = vec![false; large.len()];
        truth.len().abs_diff(detected.len()) as f64 + go(small, large, &mut used, n as f64)
    }

    fn index_set(max_len: usize) -> impl Strategy<Value = Vec<usize>> {
        prop::collection::btree_set(1usize..1000, 0..=max_len).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn distance_equals_brute_force(a in index_set(6), b in index_set(6)) {
            let d = changepoint_distance(&a, &b, 1000);
            let bf = brute_force(&a, &b, 1000);
            prop_assert!((d.distance - bf).abs() < 1e-12, "{} vs {}", d.distance, bf);
            let back = changepoint_distance(&b, &a, 1000);
            prop_assert!((back.distance - d.distance).abs() < 1e-12);
            prop_assert_eq!(d.distance == 0.0, a == b);
        }

        #[test]
        fn window_rates_dominate_exact(a in index_set(8), b in index_set(8)) {
            let r = match_rates(&a, &b, DEFAULT_WINDOW, 1000);
            prop_assert!(r.tp_window >= r.tp_exact);
            prop_assert!(r.fp_window <= r.fp_exact);
            for v in [r.tp_exact, r.fp_exact, r.tp_window, r.fp_window] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
