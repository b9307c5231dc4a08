//! k-means with k-means++ seeding, used for the EM initialization.

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;

use crate::dataset::ChannelDataset;
use crate::rng::RngStream;

fn sq_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

const LLOYD_ITERS: usize = 25;

fn nearest(p: &[Complex64], centers: &[Vec<Complex64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Picks `k` seeds by D^2 sampling on a random subset of at most `subset`
/// samples, then refines them with Lloyd iterations on the same subset.
/// Empty clusters keep their previous center.
pub(crate) fn kmeans_pp(ds: &ChannelDataset, k: usize, subset: usize, stream: &RngStream) -> Vec<Vec<Complex64>> {
    let mut rng = stream.rng();
    let m = ds.len();
    let mut idx: Vec<usize> = if m > subset { sample(&mut rng, m, subset).into_vec() } else { (0..m).collect() };
    idx.sort_unstable();
    let pts: Vec<&[Complex64]> = idx.iter().map(|&i| ds.sample(i)).collect();

    let first = rng.random_range(0..pts.len());
    let mut centers = vec![pts[first].to_vec()];
    let mut d2: Vec<f64> = pts.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = pts.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..pts.len())
        };
        let c = pts[pick].to_vec();
        for (d, p) in d2.iter_mut().zip(&pts) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }

    let n = ds.n_antennas();
    let mut assign = vec![usize::MAX; pts.len()];
    for _ in 0..LLOYD_ITERS {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(&pts) {
            let j = nearest(p, &centers);
            changed |= *a != j;
            *a = j;
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![Complex64::new(0.0, 0.0); n]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(&pts) {
            counts[a] += 1;
            for (s, z) in sums[a].iter_mut().zip(p.iter()) {
                *s += z;
            }
        }
        for ((c, s), &cnt) in centers.iter_mut().zip(sums).zip(&counts) {
            if cnt > 0 {
                *c = s.into_iter().map(|z| z / cnt as f64).collect();
            }
        }
    }
    centers
}
