mod common;

use chanprobe::apps::{estimate_lmmse, nmse, observe};
use chanprobe::genmod::{
    fit_gmm, fit_scov, make_schedule, sample_diffusion, sample_gmm, sample_gmm_labeled, GmmFitConfig, GmmModel, RealGmm,
};
use chanprobe::linalg::CMatrix;
use chanprobe::metrics::{build_codebook, fingerprint, mmd_unbiased, tvd, Bandwidth};
use chanprobe::synth::{generate_rpe_split, ScenarioConfig};
use chanprobe::{NoiseConfig, RngStream};
use common::*;

fn two_blob_model(n: usize, sep: f64) -> GmmModel {
    let mut a = vec![c(0.0, 0.0); n];
    a[0] = c(sep / 2.0, 0.0);
    let b: Vec<_> = a.iter().map(|z| -z).collect();
    let cov = CMatrix::identity(n);
    GmmModel::new(vec![0.3, 0.7], vec![a, b], vec![cov.clone(), cov]).unwrap()
}

#[test]
fn em_recovers_separated_components() {
    // unit per-dimension variance 1/2 on the real axis, so 10 sigma is about 7.1
    let truth = two_blob_model(2, 10.0 * 0.5f64.sqrt());
    let ds = sample_gmm(&truth, 4000, &RngStream::new(11, 0)).unwrap();
    let fit = fit_gmm(&ds, &GmmFitConfig::with_components(2), &RngStream::new(11, 1)).unwrap();
    let lo = if fit.means[0][0].re < 0.0 { 0 } else { 1 };
    let hi = 1 - lo;
    assert!((fit.weights[lo] - 0.7).abs() <= 0.05, "{:?}", fit.weights);
    assert!((fit.weights[hi] - 0.3).abs() <= 0.05);
    for (j, t) in [(lo, 1), (hi, 0)] {
        let d: f64 = fit.means[j].iter().zip(&truth.means[t]).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        assert!(d <= 0.1, "mean error {d}");
    }
}

#[test]
fn em_log_likelihood_is_monotone() {
    let cfg = ScenarioConfig::default();
    let ds = generate_rpe_split(&cfg, 3000, "train").unwrap();
    for k in [1, 2, 8] {
        let fc = GmmFitConfig { components: k, max_iter: 30, ..GmmFitConfig::default() };
        let m = fit_gmm(&ds, &fc, &RngStream::new(5, 1)).unwrap();
        assert!(!m.fit_log.is_empty());
        for i in 1..m.fit_log.len() {
            if m.reseed_iterations.contains(&i) {
                continue;
            }
            assert!(m.fit_log[i] >= m.fit_log[i - 1] - 1e-9, "K={k} step {i}: {:?}", m.fit_log);
        }
    }
}

#[test]
fn single_component_fit_is_sample_covariance() {
    let ds = generate_rpe_split(&ScenarioConfig::default(), 1500, "train").unwrap();
    let s = fit_scov(&ds).unwrap();
    let g = fit_gmm(&ds, &GmmFitConfig::with_components(1), &RngStream::new(2, 1)).unwrap();
    assert_eq!(g.weights, vec![1.0]);
    for (a, b) in g.means[0].iter().zip(&s.mean) {
        assert!((a - b).norm() <= 1e-10);
    }
    assert!(g.covariances[0].sub(&s.covariance).max_abs() <= 1e-10);
}

#[test]
fn ancestral_samples_match_moments_and_frequencies() {
    let n = 3;
    let st = RngStream::new(8, 0);
    let cov = random_covariance(n, n, 0.2, &st.derive("c"));
    let mu = random_vector(n, 1.0, &st.derive("m"));
    let model = GmmModel::new(vec![1.0], vec![mu.clone()], vec![cov.clone()]).unwrap();
    let ds = sample_gmm(&model, 100_000, &st.derive("s")).unwrap();
    let emp = fit_scov(&ds).unwrap();
    for (a, b) in emp.mean.iter().zip(&mu) {
        assert!((a - b).norm() <= 0.02);
    }
    assert!(emp.covariance.sub(&cov).frobenius_norm() <= 0.03 * cov.frobenius_norm());

    let two = two_blob_model(2, 6.0);
    let (_, labels) = sample_gmm_labeled(&two, 20_000, &st.derive("l")).unwrap();
    let frac = labels.iter().filter(|&&l| l == 0).count() as f64 / labels.len() as f64;
    assert!((frac - 0.3).abs() <= 0.015, "{frac}");
}

#[test]
fn diffusion_reproduces_single_gaussian() {
    let n = 4;
    let st = RngStream::new(21, 0);
    let cov = random_covariance(n, n, 0.1, &st.derive("c"));
    let mu = random_vector(n, 1.0, &st.derive("m"));
    let model = GmmModel::new(vec![1.0], vec![mu.clone()], vec![cov.clone()]).unwrap();
    let sched = make_schedule(300, 1e-4, 0.04).unwrap();
    let ds = sample_diffusion(&RealGmm::from_complex(&model), &sched, 10_000, &st.derive("d")).unwrap();
    let emp = fit_scov(&ds).unwrap();
    let mu_norm: f64 = mu.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mu_err: f64 = emp.mean.iter().zip(&mu).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    assert!(mu_err <= 0.05 * mu_norm, "{mu_err} vs {mu_norm}");
    let rel = emp.covariance.sub(&cov).frobenius_norm() / cov.frobenius_norm();
    assert!(rel <= 0.10, "{rel}");
}

fn rpe_gmm(k: usize, m: usize) -> (ScenarioConfig, GmmModel) {
    let cfg = ScenarioConfig::default();
    let ds = generate_rpe_split(&cfg, m, "train").unwrap();
    let fc = GmmFitConfig { components: k, max_iter: 40, ..GmmFitConfig::default() };
    (cfg.clone(), fit_gmm(&ds, &fc, &RngStream::new(4, 1)).unwrap())
}

#[test]
fn diffusion_matches_ancestral_fingerprint() {
    let (cfg, model) = rpe_gmm(2, 4000);
    let cb = build_codebook(&cfg.geometry, 4, 16).unwrap();
    let sched = make_schedule(300, 1e-4, 0.04).unwrap();
    let a = sample_gmm(&model, 10_000, &RngStream::new(30, 2)).unwrap();
    let d = sample_diffusion(&RealGmm::from_complex(&model), &sched, 10_000, &RngStream::new(31, 2)).unwrap();
    let t = tvd(&fingerprint(&cb, &a).unwrap(), &fingerprint(&cb, &d).unwrap()).unwrap();
    assert!(t < 0.05, "{t}");
}

#[test]
fn diffusion_improves_with_more_steps() {
    let n = 3;
    let st = RngStream::new(40, 0);
    let means = vec![random_vector(n, 2.0, &st.index(0)), random_vector(n, 2.0, &st.index(1))];
    let covs = vec![random_covariance(n, n, 0.05, &st.index(2)), random_covariance(n, 1, 0.05, &st.index(3))];
    let model = GmmModel::new(vec![0.4, 0.6], means, covs).unwrap();
    let rg = RealGmm::from_complex(&model);
    let m = 3000;
    let bw = Bandwidth::Fixed(1.0);
    let score = |t: usize| -> f64 {
        (0..3u64)
            .map(|s| {
                let sched = make_schedule(t, 0.1 / t as f64, 20.0 / t as f64).unwrap();
                let a = sample_gmm(&model, m, &RngStream::new(100 + s, 2)).unwrap();
                let d = sample_diffusion(&rg, &sched, m, &RngStream::new(200 + s, 2)).unwrap();
                mmd_unbiased(&a, &d, bw).unwrap().value
            })
            .sum::<f64>()
            / 3.0
    };
    let null: f64 = (0..3u64)
        .map(|s| {
            let a = sample_gmm(&model, m, &RngStream::new(300 + s, 2)).unwrap();
            let b = sample_gmm(&model, m, &RngStream::new(400 + s, 2)).unwrap();
            mmd_unbiased(&a, &b, bw).unwrap().value.abs()
        })
        .sum::<f64>()
        / 3.0;
    let coarse = score(100);
    let fine = score(1000);
    assert!(fine <= coarse + 3.0 * null.max(1e-6), "T=100 {coarse} T=1000 {fine} null {null}");
}

#[test]
fn lmmse_matches_analytic_mse_on_gaussian_data() {
    let n = 8;
    let st = RngStream::new(50, 0);
    let cov = random_covariance(n, 3, 0.01, &st.derive("c"));
    let zero = vec![c(0.0, 0.0); n];
    let ds = gaussian_samples(&zero, &cov, 20_000, &st.derive("h"));
    let model = fit_scov(&ds).unwrap();
    let noise = NoiseConfig::from_snr_db(5.0).unwrap();
    let obs = observe(&ds, &noise, &st.derive("y")).unwrap();
    let est = estimate_lmmse(&model, &obs).unwrap();
    let got = nmse(&ds, &est).unwrap();
    // tr(C - C (C + s I)^-1 C) / N
    let f = chanprobe::linalg::cholesky_psd(&cov.add_diagonal(obs.sigma_sq), "c").unwrap();
    let want = (cov.trace().re - cov.matmul(&f.solve(&cov)).trace().re) / n as f64;
    assert!((got - want).abs() <= 0.03 * want, "{got} vs {want}");
}
