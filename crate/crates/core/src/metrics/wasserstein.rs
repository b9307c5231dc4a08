//! Wasserstein-1 distance between empirical distributions on the real line,
//! i.e. the area between the two empirical CDFs.

use crate::error::{Error, Result};

fn sorted(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("empty sample set".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("sample set has non-finite values".into()));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Mean absolute difference of order statistics; sizes must match.
pub fn wasserstein1_sorted(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("sizes differ: {} vs {}", a.len(), b.len())));
    }
    let (sa, sb) = (sorted(a)?, sorted(b)?);
    Ok(sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / sa.len() as f64)
}

/// Exact integral of `|F_a - F_b|` over the merged breakpoints.
pub fn wasserstein1_cdf_area(a: &[f64], b: &[f64]) -> Result<f64> {
    let (sa, sb) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut area = 0.0;
    let mut x_prev = sa[0].min(sb[0]);
    while i < sa.len() || j < sb.len() {
        let x = match (sa.get(i), sb.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        let fa = i as f64 / na;
        let fb = j as f64 / nb;
        area += (fa - fb).abs() * (x - x_prev);
        while i < sa.len() && sa[i] == x {
            i += 1;
        }
        while j < sb.len() && sb[j] == x {
            j += 1;
        }
        x_prev = x;
    }
    Ok(area)
}

/// W1 distance; uses the order-statistic form when sizes match.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() == b.len() {
        wasserstein1_sorted(a, b)
    } else {
        wasserstein1_cdf_area(a, b)
    }
}

/// Empirical CDF at every distinct sample value: `(value, F(value))`.
pub fn cdf_points(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    let s = sorted(values)?;
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(s.len());
    for (i, &x) in s.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => out.push((x, f)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(wasserstein1(&[1.0, 2.0, 5.0], &[5.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(wasserstein1(&[3.0, 3.0], &[5.0, 5.0]).unwrap(), 2.0);
        assert_eq!(wasserstein1_sorted(&[0.0, 1.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert_eq!(wasserstein1_cdf_area(&[0.0, 1.0], &[0.0, 3.0]).unwrap(), 1.0);
    }

    #[test]
    fn unequal_sizes_use_area() {
        // point mass at 0 vs uniform on {0, 1, 2}: (2/3) * 1 + (1/3) * 1
        let w = wasserstein1(&[0.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!((w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_rejected() {
        assert!(wasserstein1(&[], &[1.0]).is_err());
        assert!(wasserstein1_cdf_area(&[1.0], &[]).is_err());
    }

    #[test]
    fn cdf_points_merge_ties() {
        let c = cdf_points(&[2.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(c, vec![(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]);
    }

    fn vecs() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 1..40)
    }

    proptest! {
        #[test]
        fn symmetric_and_translation_equivariant(a in vecs(), b in vecs(), c in -50.0f64..50.0) {
            let w = wasserstein1(&a, &b).unwrap();
            prop_assert!((w - wasserstein1(&b, &a).unwrap()).abs() <= 1e-9 * (1.0 + w));
            let a2: Vec<f64> = a.iter().map(|x| x + c).collect();
            let b2: Vec<f64> = b.iter().map(|x| x + c).collect();
            prop_assert!((w - wasserstein1(&a2, &b2).unwrap()).abs() <= 1e-9 * (1.0 + w));
        }

        #[test]
        fn triangle_inequality(a in vecs(), b in vecs(), c in vecs()) {
            let ab = wasserstein1(&a, &b).unwrap();
            let bc = wasserstein1(&b, &c).unwrap();
            let ac = wasserstein1(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9 * (1.0 + ab + bc));
        }

        #[test]
        fn both_routes_agree(pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..60)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let s = wasserstein1_sorted(&a, &b).unwrap();
            let g = wasserstein1_cdf_area(&a, &b).unwrap();
            prop_assert!((s - g).abs() <= 1e-9 * (1.0 + s));
        }
    }
}
