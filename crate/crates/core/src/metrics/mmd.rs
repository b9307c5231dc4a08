//! Unbiased MMD^2 estimate with a Gaussian kernel.
//!
//! With matched sample sets `p_1..p_L`, `q_1..q_L`:
//! `MMD^2 = 1/(L(L-1)) sum_{i != j} [k(p_i,p_j) + k(q_i,q_j) - k(p_i,q_j) - k(q_i,p_j)]`,
//! where the `i = j` terms are excluded from all four kernels. Complex
//! vectors enter the kernel as stacked real vectors.

use serde::{Deserialize, Serialize};

use crate::dataset::ChannelDataset;
use crate::error::{Error, Result};
use crate::linalg::gemm_nt;
use crate::par;

/// Points used by the median heuristic.
pub const MEDIAN_SUBSAMPLE: usize = 2000;
const BLOCK_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median pairwise distance of the pooled samples.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdEstimate {
    pub value: f64,
    pub bandwidth: f64,
    pub n_samples: usize,
}

fn row_norms(rows: &[f64], d: usize) -> Vec<f64> {
    rows.chunks_exact(d).map(|r| r.iter().map(|v| v * v).sum()).collect()
}

/// Median pairwise distance over an evenly strided subsample of the pooled rows.
pub fn median_heuristic(p: &[f64], q: &[f64], d: usize) -> f64 {
    let total = (p.len() + q.len()) / d;
    let take = total.min(MEDIAN_SUBSAMPLE);
    let row = |i: usize| -> &[f64] {
        let lp = p.len() / d;
        if i < lp {
            &p[i * d..(i + 1) * d]
        } else {
            &q[(i - lp) * d..(i - lp + 1) * d]
        }
    };
    let idx: Vec<usize> = (0..take).map(|t| t * total / take).collect();
    let mut dists = Vec::with_capacity(take * (take - 1) / 2);
    for a in 0..take {
        let x = row(idx[a]);
        for &b in &idx[a + 1..] {
            let y = row(b);
            dists.push(x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt());
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    let mid = dists.len() / 2;
    let (_, &mut hi, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    if dists.len() % 2 == 1 {
        hi
    } else {
        let lo = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Squared distances between `a` rows (`ma x d`) and `b` rows (`mb x d`).
fn sq_dists(a: &[f64], an: &[f64], b: &[f64], bn: &[f64], d: usize, out: &mut [f64]) {
    let (ma, mb) = (an.len(), bn.len());
    gemm_nt(-2.0, a, b, 0.0, out, ma, d, mb);
    for i in 0..ma {
        for j in 0..mb {
            let v = &mut out[i * mb + j];
            *v = (*v + (an[i] + bn[j])).max(0.0);
        }
    }
}

pub fn mmd_unbiased(p: &ChannelDataset, q: &ChannelDataset, bandwidth: Bandwidth) -> Result<MmdEstimate> {
    if p.len() != q.len() {
        return Err(Error::InvalidArgument(format!("sample counts differ: {} vs {}", p.len(), q.len())));
    }
    if p.n_antennas() != q.n_antennas() {
        return Err(Error::InvalidArgument("sample dimensions differ".into()));
    }
    let l = p.len();
    if l < 2 {
        return Err(Error::InsufficientData { needed: 2, got: l });
    }
    let d = 2 * p.n_antennas();
    let pr = p.real_rows(0..l);
    let qr = q.real_rows(0..l);
    let gamma = match bandwidth {
        Bandwidth::Fixed(g) if g > 0.0 && g.is_finite() => g,
        Bandwidth::Fixed(g) => return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {g}"))),
        Bandwidth::Auto => {
            let m = median_heuristic(&pr, &qr, d);
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    let scale = -1.0 / (2.0 * gamma * gamma);
    let pn = row_norms(&pr, d);
    let qn = row_norms(&qr, d);

    let partials = par::map_chunks(l, BLOCK_ROWS, |r| {
        let (s, e) = (r.start, r.end);
        let rows = e - s;
        // columns j >= s; within the block only j > i contributes
        let cols = l - s;
        let mut pp = vec![0.0; rows * cols];
        let mut qq = vec![0.0; rows * cols];
        let mut pq = vec![0.0; rows * cols];
        let mut qp = vec![0.0; rows * cols];
        sq_dists(&pr[s * d..e * d], &pn[s..e], &pr[s * d..], &pn[s..], d, &mut pp);
        sq_dists(&qr[s * d..e * d], &qn[s..e], &qr[s * d..], &qn[s..], d, &mut qq);
        sq_dists(&pr[s * d..e * d], &pn[s..e], &qr[s * d..], &qn[s..], d, &mut pq);
        sq_dists(&qr[s * d..e * d], &qn[s..e], &pr[s * d..], &pn[s..], d, &mut qp);
        let mut acc = 0.0;
        for i in 0..rows {
            let mut row_acc = 0.0;
            for j in (i + 1)..cols {
                let o = i * cols + j;
                let same = (scale * pp[o]).exp() + (scale * qq[o]).exp();
                let cross = (scale * pq[o]).exp() + (scale * qp[o]).exp();
                row_acc += same - cross;
            }
            acc += row_acc;
        }
        acc
    });
    let total = 2.0 * par::tree_sum(&partials);
    Ok(MmdEstimate { value: total / (l as f64 * (l - 1) as f64), bandwidth: gamma, n_samples: l })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{fill_complex_normal, RngStream};
    use num_complex::Complex64;

    fn gauss(m: usize, n: usize, seed: u64, shift: f64) -> ChannelDataset {
        let mut rng = RngStream::new(seed, 0).rng();
        let mut v = vec![Complex64::new(0.0, 0.0); m * n];
        fill_complex_normal(&mut rng, &mut v);
        ChannelDataset::new(n, v.into_iter().map(|z| z + shift).collect()).unwrap()
    }

    /// Direct O(L^2) evaluation of the four-term sum.
    fn brute(p: &ChannelDataset, q: &ChannelDataset, gamma: f64) -> f64 {
        let k = |a: &[Complex64], b: &[Complex64]| {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
            (-d2 / (2.0 * gamma * gamma)).exp()
        };
        let l = p.len();
        let mut s = 0.0;
        for i in 0..l {
            for j in 0..l {
                if i != j {
                    s += k(p.sample(i), p.sample(j)) + k(q.sample(i), q.sample(j))
                        - k(p.sample(i), q.sample(j))
                        - k(q.sample(i), p.sample(j));
                }
            }
        }
        s / (l * (l - 1)) as f64
    }

    #[test]
    fn identical_sets_are_exactly_zero() {
        let p = gauss(700, 8, 1, 0.0);
        let e = mmd_unbiased(&p, &p.clone(), Bandwidth::Auto).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn matches_brute_force() {
        let p = gauss(300, 3, 2, 0.0);
        let q = gauss(300, 3, 3, 0.3);
        for g in [0.5, 1.7] {
            let fast = mmd_unbiased(&p, &q, Bandwidth::Fixed(g)).unwrap().value;
            let slow = brute(&p, &q, g);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn symmetric_in_arguments() {
        let p = gauss(400, 4, 4, 0.0);
        let q = gauss(400, 4, 5, 0.2);
        let a = mmd_unbiased(&p, &q, Bandwidth::Auto).unwrap();
        let b = mmd_unbiased(&q, &p, Bandwidth::Auto).unwrap();
        assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1e-12));
    }

    #[test]
    fn shift_is_detected() {
        let p = gauss(500, 4, 6, 0.0);
        let same = gauss(500, 4, 7, 0.0);
        let far = gauss(500, 4, 8, 1.0);
        let null = mmd_unbiased(&p, &same, Bandwidth::Auto).unwrap().value;
        let alt = mmd_unbiased(&p, &far, Bandwidth::Auto).unwrap().value;
        assert!(alt > 10.0 * null.abs(), "{alt} vs {null}");
    }

    #[test]
    fn argument_errors() {
        let p = gauss(10, 2, 1, 0.0);
        let q = gauss(11, 2, 1, 0.0);
        assert!(matches!(mmd_unbiased(&p, &q, Bandwidth::Auto), Err(Error::InvalidArgument(_))));
        let one = gauss(1, 2, 1, 0.0);
        assert!(matches!(mmd_unbiased(&one, &one, Bandwidth::Auto), Err(Error::InsufficientData { .. })));
        assert!(mmd_unbiased(&p, &p, Bandwidth::Fixed(0.0)).is_err());
    }

    #[test]
    fn median_of_known_points() {
        // pooled points 0, 1, 3 on a line -> distances 1, 2, 3 -> median 2
        let p = vec![0.0, 0.0, 1.0, 0.0];
        let q = vec![3.0, 0.0];
        assert_eq!(median_heuristic(&p, &q, 2), 2.0);
    }
}
