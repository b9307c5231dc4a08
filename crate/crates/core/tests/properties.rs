mod common;

use chanprobe::apps::{compress_reconstruct, estimate_gmm, estimate_lmmse, fit_compressor, nmse, ObservationSet};
use chanprobe::genmod::{fit_gmm, fit_scov, gmm_responsibility, make_schedule, GmmFitConfig, GmmModel, RealGmm};
use chanprobe::linalg::{cholesky_psd, CMatrix};
use chanprobe::metrics::{build_codebook, feedback_index, mmd_unbiased, Bandwidth};
use chanprobe::synth::steering_vector;
use chanprobe::{normalize_dataset, RngStream, UraGeometry};
use common::*;
use proptest::prelude::*;

fn parts(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-3.0f64..3.0, len), prop::collection::vec(-3.0f64..3.0, len))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn normalization_keeps_feedback_indices((re, im) in parts(64 * 6), scale in 1e-3f64..1e3) {
        let data: Vec<f64> = re.iter().map(|x| x * scale).collect();
        let ds = dataset_from_parts(64, &data, &im);
        let cb = build_codebook(&UraGeometry::default(), 4, 16).unwrap();
        let out = normalize_dataset(&ds).unwrap();
        for (a, b) in ds.samples().zip(out.samples()) {
            let i = feedback_index(&cb, a).unwrap();
            let j = feedback_index(&cb, b).unwrap();
            if i != j {
                let corr = |v: &[chanprobe::Complex64], k: usize| {
                    cb.codeword(k).iter().zip(v).map(|(x, y)| x.conj() * y).sum::<chanprobe::Complex64>().norm()
                };
                prop_assert!((corr(a, i) - corr(a, j)).abs() <= 1e-12 * corr(a, i));
            }
        }
    }

    #[test]
    fn psd_factor_reconstructs(n in 1usize..24, rank in 0usize..24, seed in any::<u64>()) {
        let cov = if rank == 0 {
            CMatrix::zeros(n, n)
        } else {
            random_covariance(n, rank.min(n), 0.0, &RngStream::new(seed, 0))
        };
        let f = cholesky_psd(&cov, "c").unwrap();
        let err = f.reconstruct().sub(&cov.add_diagonal(f.loading)).frobenius_norm();
        prop_assert!(err <= 1e-8 * cov.frobenius_norm().max(1.0), "err {err}");
    }

    #[test]
    fn steering_vectors_unit_modulus(nv in 1usize..6, nh in 1usize..10, dv in 0.1f64..2.0, dh in 0.1f64..2.0,
                                     az in -7.0f64..7.0, el in -7.0f64..7.0) {
        let g = UraGeometry { n_vertical: nv, n_horizontal: nh, spacing_vertical: dv, spacing_horizontal: dh };
        let a = steering_vector(&g, az, el).unwrap();
        prop_assert_eq!(a.len(), nv * nh);
        for z in a.iter() {
            prop_assert!((z.norm() - 1.0).abs() <= 1e-12);
        }
        prop_assert!((a.norm_sqr() - (nv * nh) as f64).abs() <= 1e-9);
    }

    #[test]
    fn responsibilities_form_simplex(k in 1usize..6, seed in any::<u64>(), spread in 0.1f64..30.0) {
        let s = RngStream::new(seed, 0);
        let n = 3;
        let raw: Vec<f64> = (0..k).map(|j| 1.0 + j as f64).collect();
        let tot: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / tot).collect();
        let means = (0..k).map(|j| random_vector(n, spread, &s.index(j as u64))).collect();
        let covs = (0..k).map(|j| random_covariance(n, n, 0.1, &s.derive("c").index(j as u64))).collect();
        let m = GmmModel::new(weights, means, covs).unwrap();
        let h = random_vector(n, spread * 2.0, &s.derive("h"));
        let r = gmm_responsibility(&m, &h).unwrap();
        prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(r.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn real_gmm_round_trip(k in 1usize..4, n in 1usize..6, seed in any::<u64>()) {
        let s = RngStream::new(seed, 0);
        let means: Vec<_> = (0..k).map(|j| random_vector(n, 2.0, &s.index(j as u64))).collect();
        let covs: Vec<_> = (0..k).map(|j| random_covariance(n, n, 0.0, &s.derive("c").index(j as u64))).collect();
        let m = GmmModel::new(vec![1.0 / k as f64; k], means.clone(), covs.clone()).unwrap();
        let (mu2, c2) = RealGmm::from_complex(&m).to_complex();
        for j in 0..k {
            for (a, b) in mu2[j].iter().zip(&means[j]) {
                prop_assert!((a - b).norm() <= 1e-12);
            }
            prop_assert!(c2[j].sub(&covs[j]).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn mmd_symmetric_and_zero_on_self((re, im) in parts(4 * 30), (re2, im2) in parts(4 * 30)) {
        let p = dataset_from_parts(4, &re, &im);
        let q = dataset_from_parts(4, &re2, &im2);
        let a = mmd_unbiased(&p, &q, Bandwidth::Fixed(2.0)).unwrap().value;
        let b = mmd_unbiased(&q, &p, Bandwidth::Fixed(2.0)).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-14);
        prop_assert_eq!(mmd_unbiased(&p, &p, Bandwidth::Auto).unwrap().value, 0.0);
    }

    #[test]
    fn single_component_estimator_is_lmmse((re, im) in parts(4 * 40), snr in -10.0f64..30.0) {
        let ds = dataset_from_parts(4, &re, &im);
        let scov = fit_scov(&ds).unwrap();
        let g = fit_gmm(&ds, &GmmFitConfig::with_components(1), &RngStream::new(0, 0)).unwrap();
        let obs = ObservationSet { truth: ds.clone(), observations: ds.clone(), sigma_sq: 10f64.powf(-snr / 10.0) };
        let a = estimate_lmmse(&scov, &obs).unwrap();
        let b = estimate_gmm(&g, &obs).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).norm() <= 1e-10);
        }
    }

    #[test]
    fn compression_idempotent_and_orthonormal((re, im) in parts(8 * 40), rho in prop::sample::select(vec![1.0, 2.0, 4.0, 8.0])) {
        let ds = dataset_from_parts(8, &re, &im);
        let lc = fit_compressor(&ds, rho).unwrap();
        let r = lc.latent_dim();
        prop_assert!(lc.basis.adjoint().matmul(&lc.basis).sub(&CMatrix::identity(r)).max_abs() <= 1e-10);
        let once = compress_reconstruct(&lc, &ds).unwrap();
        let twice = compress_reconstruct(&lc, &once).unwrap();
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
        prop_assert!(nmse(&ds, &once).unwrap() >= 0.0);
    }

    #[test]
    fn schedule_invariants(t in 1usize..400, b0 in 1e-5f64..0.05, extra in 0.0f64..0.2) {
        let b1 = (b0 + extra).min(0.5);
        let s = make_schedule(t, b0, b1).unwrap();
        for i in 1..=t {
            prop_assert!(s.alpha_bar(i) < s.alpha_bar(i - 1));
            let st = s.sigmas_sq[i - 1];
            prop_assert!(st >= 0.0 && st <= 1.0 - s.alphas[i - 1] + 1e-15);
            if i >= 2 {
                let want = (1.0 - s.alphas[i - 1]) * (1.0 - s.alpha_bar(i - 1)) / (1.0 - s.alpha_bar(i));
                prop_assert!((st - want).abs() <= 1e-15);
            }
        }
        prop_assert_eq!(s.sigmas_sq[0], 0.0);
    }
}
