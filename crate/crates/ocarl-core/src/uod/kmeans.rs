//! Seeded k-means with k-means++ initialization.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid, ties resolving to the lowest index.
pub fn nearest(point: &[f64], centroids: &[f64], k: usize, d: usize) -> usize {
    let mut best = 0;
    let mut best_d = sq_dist(point, &centroids[..d]);
    for c in 1..k {
        let dist = sq_dist(point, &centroids[c * d..(c + 1) * d]);
        if dist < best_d {
            best_d = dist;
            best = c;
        }
    }
    best
}

/// Lloyd's algorithm over `n` points of dimension `d`, row-major.
///
/// Initialization is k-means++ with the given seed; when every remaining
/// point sits on an already-chosen centroid (so the D^2 weights vanish),
/// further centroids are drawn uniformly, which makes degenerate inputs
/// (fewer distinct points than clusters) well defined instead of an error.
/// Empty clusters keep their previous centroid. Returns centroids
/// (`k x d`) and per-point assignments.
pub fn kmeans(
    points: &[f64],
    n: usize,
    d: usize,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if k == 0 || n < k {
        return Err(Error::argument(alloc::format!(
            "k-means needs at least k={k} points, got {n}"
        )));
    }
    debug_assert_eq!(points.len(), n * d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = alloc::vec![0.0; k * d];

    // k-means++ seeding.
    let first = rng.gen_range(0..n);
    centroids[..d].copy_from_slice(&points[first * d..(first + 1) * d]);
    let mut dist2 = alloc::vec![f64::INFINITY; n];
    for c in 1..k {
        let prev = &centroids[(c - 1) * d..c * d];
        let mut total = 0.0;
        for i in 0..n {
            let dd = sq_dist(&points[i * d..(i + 1) * d], prev);
            if dd < dist2[i] {
                dist2[i] = dd;
            }
            total += dist2[i];
        }
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in dist2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids[c * d..(c + 1) * d].copy_from_slice(&points[pick * d..(pick + 1) * d]);
    }

    // Lloyd iterations until assignments stabilize. The sentinel start
    // value guarantees the first pass registers as a change.
    let mut assignment = alloc::vec![k; n];
    for _ in 0..max_iters {
        let mut changed = false;
        for i in 0..n {
            let a = nearest(&points[i * d..(i + 1) * d], &centroids, k, d);
            if a != assignment[i] {
                assignment[i] = a;
                changed = true;
            }
        }
        let mut sums = alloc::vec![0.0; k * d];
        let mut counts = alloc::vec![0u64; k];
        for i in 0..n {
            let a = assignment[i];
            counts[a] += 1;
            for j in 0..d {
                sums[a * d + j] += points[i * d + j];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            for j in 0..d {
                centroids[c * d + j] = sums[c * d + j] / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    // One final assignment pass so the labels match the returned centroids.
    for i in 0..n {
        assignment[i] = nearest(&points[i * d..(i + 1) * d], &centroids, k, d);
    }
    Ok((centroids, assignment))
}
