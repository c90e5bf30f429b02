//! Seeded k-means used to place initial inducing inputs.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sq_dist(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize, scale: &[f64]) -> f64 {
    (0..a.ncols()).map(|d| (a[(i, d)] - b[(j, d)]).powi(2) / scale[d]).sum()
}

/// k-means++ seeding followed by Lloyd iterations. Distances are divided by
/// `scale` per dimension. Returns a `k x d` matrix of centroids.
pub fn kmeans(points: &DMatrix<f64>, k: usize, scale: &[f64], seed: u64, max_iter: usize) -> DMatrix<f64> {
    let (n, d) = points.shape();
    assert!(k >= 1 && k <= n, "k must lie in 1..=n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = DMatrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centers.set_row(0, &points.row(first));
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0, scale)).collect();
    for c in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &points.row(pick));
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(points, i, &centers, c, scale));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, slot) in assign.iter_mut().enumerate() {
            let mut arg = 0;
            let mut dmin = f64::INFINITY;
            for c in 0..k {
                let dist = sq_dist(points, i, &centers, c, scale);
                if dist < dmin {
                    dmin = dist;
                    arg = c;
                }
            }
            if *slot != arg {
                *slot = arg;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = DMatrix::<f64>::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            for dd in 0..d {
                sums[(c, dd)] += points[(i, dd)];
            }
        }
        for c in 0..k {
            // An emptied cluster keeps its previous centroid.
            if counts[c] > 0 {
                for dd in 0..d {
                    centers[(c, dd)] = sums[(c, dd)] / counts[c] as f64;
                }
            }
        }
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_blobs_deterministically() {
        let mut rows = Vec::new();
        for i in 0..20 {
            let e = (i as f64) * 0.01;
            rows.extend_from_slice(&[e, -e]);
            rows.extend_from_slice(&[10.0 + e, 10.0 - e]);
        }
        let pts = DMatrix::from_row_slice(40, 2, &rows);
        let c1 = kmeans(&pts, 2, &[1.0, 1.0], 3, 100);
        let c2 = kmeans(&pts, 2, &[1.0, 1.0], 3, 100);
        assert_eq!(c1, c2);
        let mut xs: Vec<f64> = (0..2).map(|c| c1[(c, 0)]).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] - 0.095).abs() < 1e-9 && (xs[1] - 10.095).abs() < 1e-9, "{xs:?}");
    }

    #[test]
    fn k_equal_n_returns_the_points() {
        let pts = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 5.0]);
        let c = kmeans(&pts, 3, &[1.0], 0, 10);
        let mut v: Vec<f64> = c.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, vec![0.0, 1.0, 5.0]);
    }
}
