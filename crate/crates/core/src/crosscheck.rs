//! The application cross-check: fit generators on RPE training data, sample
//! them, train application models on RPE and on generated data, and score
//! every instance on the same held-out RPE test set.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::apps::{compress_reconstruct, fit_compressor, nmse, observe, MixtureEstimator};
use crate::dataset::{read_dataset, ChannelDataset};
use crate::error::{Error, Result};
use crate::genmod::{fit_gmm, fit_scov, make_schedule, sample_diffusion, sample_gmm, GmmFitConfig, GmmModel, RealGmm};
use crate::metrics::report::MMD_CONVENTION;
use crate::metrics::{
    build_codebook, fingerprint, mmd_unbiased, spectral_efficiency, tvd, wasserstein1, Bandwidth, Codebook,
    MetricReport,
};
use crate::par;
use crate::rng::RngStream;
use crate::synth::{generate_rpe_split, ScenarioConfig};
use crate::types::NoiseConfig;

/// Stream ids under the master seed.
pub const STREAM_FIT: u64 = 1;
pub const STREAM_SAMPLE: u64 = 2;
pub const STREAM_OBSERVE: u64 = 3;

/// Label of the RPE-trained reference column.
pub const RPE_SOURCE: &str = "rpe";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// CHD1 file; relative paths resolve against the plan's directory.
    File(PathBuf),
    /// Drawn from the plan's scenario with the split named after the role.
    Synthetic { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmHyper {
    pub components: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    GmmFitConfig::default().tol
}

fn default_max_iter() -> usize {
    GmmFitConfig::default().max_iter
}

fn default_t_steps() -> usize {
    DiffusionDefaults::T_STEPS
}

fn default_beta_start() -> f64 {
    DiffusionDefaults::BETA_START
}

fn default_beta_end() -> f64 {
    DiffusionDefaults::BETA_END
}

/// Default linear schedule of the diffusion generator.
pub struct DiffusionDefaults;

impl DiffusionDefaults {
    pub const T_STEPS: usize = 300;
    pub const BETA_START: f64 = 1e-4;
    pub const BETA_END: f64 = 0.04;
}

impl GmmHyper {
    pub fn fit_config(&self) -> GmmFitConfig {
        GmmFitConfig { components: self.components, tol: self.tol, max_iter: self.max_iter, ..GmmFitConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorKind {
    Scov,
    Gmm {
        #[serde(flatten)]
        gmm: GmmHyper,
    },
    Diffusion {
        #[serde(flatten)]
        gmm: GmmHyper,
        #[serde(default = "default_t_steps")]
        t_steps: usize,
        #[serde(default = "default_beta_start")]
        beta_start: f64,
        #[serde(default = "default_beta_end")]
        beta_end: f64,
    },
    /// Passes the training data through unchanged.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: GeneratorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplicationKind {
    Estimation,
    Compression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppModelKind {
    Lmmse,
    #[serde(alias = "gmm-estimator", alias = "gmm_estimator")]
    Gmm,
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplicationSpec {
    pub kind: ApplicationKind,
    pub model: AppModelKind,
    /// Mixture hyperparameters of the GMM estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gmm: Option<GmmHyper>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snr_db: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rho: Vec<f64>,
}

impl ApplicationSpec {
    pub fn label(&self) -> String {
        match (self.model, &self.gmm) {
            (AppModelKind::Lmmse, _) => "lmmse".into(),
            (AppModelKind::Gmm, Some(h)) => format!("gmm(K={})", h.components),
            (AppModelKind::Gmm, None) => "gmm".into(),
            (AppModelKind::Pca, _) => "pca".into(),
        }
    }

    fn grid(&self) -> (&'static str, &[f64]) {
        match self.kind {
            ApplicationKind::Estimation => ("snr_db", &self.snr_db),
            ApplicationKind::Compression => ("rho", &self.rho),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSuiteConfig {
    pub snr_db: f64,
    pub cb_v: usize,
    pub cb_h: usize,
    /// Samples compared from each side, capped at the test set size.
    pub n_samples: Option<usize>,
    /// Fixed MMD bandwidth; median heuristic when absent.
    pub bandwidth: Option<f64>,
}

impl Default for MetricSuiteConfig {
    fn default() -> Self {
        Self { snr_db: 20.0, cb_v: 4, cb_h: 16, n_samples: None, bandwidth: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossCheckPlan {
    pub seed: u64,
    /// Scenario for synthetic sources; its seed is replaced by `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    pub rpe_train: DatasetSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpe_val: Option<DatasetSource>,
    pub rpe_test: DatasetSource,
    pub generators: Vec<GeneratorSpec>,
    pub applications: Vec<ApplicationSpec>,
    /// Size of each generated training set; empty means the training size.
    #[serde(default)]
    pub sample_counts: Vec<usize>,
    #[serde(default)]
    pub metrics: Option<MetricSuiteConfig>,
}

impl CrossCheckPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("plan: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Reads a plan and resolves relative dataset paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut plan = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for src in [Some(&mut plan.rpe_train), plan.rpe_val.as_mut(), Some(&mut plan.rpe_test)].into_iter().flatten() {
            if let DatasetSource::File(p) = src {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let roles: Vec<(&str, &DatasetSource)> = [
            ("rpe_train", Some(&self.rpe_train)),
            ("rpe_val", self.rpe_val.as_ref()),
            ("rpe_test", Some(&self.rpe_test)),
        ]
        .into_iter()
        .filter_map(|(r, s)| s.map(|s| (r, s)))
        .collect();
        for (i, (ra, a)) in roles.iter().enumerate() {
            for (rb, b) in &roles[i + 1..] {
                if let (DatasetSource::File(pa), DatasetSource::File(pb)) = (a, b) {
                    if pa == pb {
                        return Err(Error::Config(format!("{ra} and {rb} refer to the same file {}", pa.display())));
                    }
                }
            }
            match a {
                DatasetSource::Synthetic { n } if *n == 0 => {
                    return Err(Error::Config(format!("{ra}: synthetic size must be positive")))
                }
                DatasetSource::Synthetic { .. } if self.scenario.is_none() => {
                    return Err(Error::Config(format!("{ra}: synthetic source needs a scenario")))
                }
                _ => {}
            }
        }
        if let Some(s) = &self.scenario {
            s.validate()?;
        }
        let mut ids: Vec<&str> = vec![RPE_SOURCE];
        for g in &self.generators {
            if g.id.is_empty() || g.id.contains(',') {
                return Err(Error::Config(format!("invalid generator id {:?}", g.id)));
            }
            if ids.contains(&g.id.as_str()) {
                return Err(Error::Config(format!("duplicate generator id {:?}", g.id)));
            }
            ids.push(&g.id);
            match &g.kind {
                GeneratorKind::Gmm { gmm } => check_hyper(gmm, &g.id)?,
                GeneratorKind::Diffusion { gmm, t_steps, beta_start, beta_end } => {
                    check_hyper(gmm, &g.id)?;
                    make_schedule(*t_steps, *beta_start, *beta_end)
                        .map_err(|e| Error::Config(format!("generator {}: {e}", g.id)))?;
                }
                GeneratorKind::Scov | GeneratorKind::Identity => {}
            }
        }
        for (i, a) in self.applications.iter().enumerate() {
            let ok = matches!(
                (a.kind, a.model),
                (ApplicationKind::Estimation, AppModelKind::Lmmse | AppModelKind::Gmm)
                    | (ApplicationKind::Compression, AppModelKind::Pca)
            );
            if !ok {
                return Err(Error::Config(format!(
                    "application {i}: model {:?} does not fit kind {:?}",
                    a.model, a.kind
                )));
            }
            let (name, grid) = a.grid();
            if grid.is_empty() {
                return Err(Error::Config(format!("application {i}: empty {name} grid")));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("application {i}: non-finite {name} grid point")));
            }
            if a.kind == ApplicationKind::Compression && grid.iter().any(|&r| r < 1.0) {
                return Err(Error::Config(format!("application {i}: compression factors must be >= 1")));
            }
            match (a.model, &a.gmm) {
                (AppModelKind::Gmm, Some(h)) => check_hyper(h, &format!("application {i}"))?,
                (AppModelKind::Gmm, None) => {
                    return Err(Error::Config(format!("application {i}: gmm estimator needs mixture hyperparameters")))
                }
                _ => {}
            }
        }
        if self.sample_counts.contains(&0) {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        Ok(())
    }
}

fn check_hyper(h: &GmmHyper, who: &str) -> Result<()> {
    if h.components == 0 || !(h.tol >= 0.0) {
        return Err(Error::Config(format!("{who}: need components >= 1 and tol >= 0")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseCell {
    pub application: String,
    pub source: String,
    pub grid: String,
    pub point: f64,
    pub nmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckResult {
    pub seed: u64,
    pub plan: CrossCheckPlan,
    /// Column order of the NMSE table: the RPE reference, then generated sets.
    pub sources: Vec<String>,
    pub cells: Vec<NmseCell>,
    pub metrics: Vec<MetricReport>,
    /// Whole-source failures (generator fit or sampling).
    pub source_errors: BTreeMap<String, String>,
}

impl CrossCheckResult {
    pub fn cell(&self, application: &str, source: &str, point: f64) -> Option<&NmseCell> {
        self.cells.iter().find(|c| c.application == application && c.source == source && c.point == point)
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
            + self.metrics.iter().filter(|m| m.error.is_some()).count()
    }

    /// Rows = (application, grid point), columns = sources.
    pub fn nmse_table_csv(&self) -> String {
        let mut s = String::from("application,grid,point");
        for src in &self.sources {
            let _ = write!(s, ",{src}");
        }
        s.push('\n');
        let mut rows: Vec<(&str, &str, f64)> = Vec::new();
        for c in &self.cells {
            if !rows.iter().any(|r| r.0 == c.application && r.2 == c.point) {
                rows.push((&c.application, &c.grid, c.point));
            }
        }
        for (app, grid, point) in rows {
            let _ = write!(s, "{app},{grid},{point}");
            for src in &self.sources {
                match self.cell(app, src, point) {
                    Some(NmseCell { nmse: Some(v), .. }) => {
                        let _ = write!(s, ",{v:e}");
                    }
                    Some(_) => s.push_str(",ERR"),
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn metric_table_csv(&self) -> String {
        crate::metrics::report::metric_table_csv(&self.metrics)
    }
}

/// Wall-clock seconds per stage; kept apart from the result so the result
/// stays byte-identical across runs.
pub type StageTimings = BTreeMap<String, f64>;

fn load_source(plan: &CrossCheckPlan, src: &DatasetSource, split: &str) -> Result<ChannelDataset> {
    match src {
        DatasetSource::File(p) => read_dataset(p),
        DatasetSource::Synthetic { n } => {
            let mut cfg =
                plan.scenario.clone().ok_or_else(|| Error::Config("synthetic source needs a scenario".into()))?;
            cfg.seed = plan.seed;
            generate_rpe_split(&cfg, *n, split)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FitKind {
    Scov,
    Gmm(GmmHyper),
}

/// A fitted prior on one source, shared between generators and applications.
#[derive(Debug, Clone)]
enum Fitted {
    Scov(GmmModel),
    Gmm(GmmModel),
}

impl Fitted {
    fn model(&self) -> &GmmModel {
        match self {
            Fitted::Scov(m) | Fitted::Gmm(m) => m,
        }
    }
}

struct FitCache {
    entries: Vec<((usize, FitKind), Result<Fitted>)>,
}

impl FitCache {
    fn get(&self, source: usize, kind: FitKind) -> Option<&Result<Fitted>> {
        self.entries.iter().find(|(k, _)| k.0 == source && k.1 == kind).map(|(_, v)| v)
    }

    /// Fits every missing key, in parallel over keys.
    fn fill(&mut self, keys: Vec<(usize, FitKind)>, datasets: &[Option<&ChannelDataset>], fit_stream: &RngStream) {
        let mut todo: Vec<(usize, FitKind)> = Vec::new();
        for key in keys {
            if self.get(key.0, key.1).is_none() && !todo.contains(&key) {
                todo.push(key);
            }
        }
        let results = par::map_indexed(todo.len(), |i| {
            let (src, kind) = todo[i];
            let ds = datasets[src].ok_or_else(|| Error::InvalidArgument("source unavailable".into()))?;
            match kind {
                FitKind::Scov => Ok(Fitted::Scov(GmmModel::from_scov(&fit_scov(ds)?))),
                FitKind::Gmm(h) => Ok(Fitted::Gmm(fit_gmm(ds, &h.fit_config(), fit_stream)?)),
            }
        });
        self.entries.extend(todo.into_iter().zip(results));
    }
}

fn err_text(e: &Error) -> String {
    e.to_string()
}

fn generator_fit(kind: &GeneratorKind) -> Option<FitKind> {
    match kind {
        GeneratorKind::Scov => Some(FitKind::Scov),
        GeneratorKind::Gmm { gmm } | GeneratorKind::Diffusion { gmm, .. } => Some(FitKind::Gmm(*gmm)),
        GeneratorKind::Identity => None,
    }
}

fn app_fit(app: &ApplicationSpec) -> FitKind {
    match (app.model, app.gmm) {
        (AppModelKind::Gmm, Some(h)) => FitKind::Gmm(h),
        _ => FitKind::Scov,
    }
}

fn generate(
    spec: &GeneratorSpec,
    fitted: Option<&Result<Fitted>>,
    train: &ChannelDataset,
    count: usize,
    stream: &RngStream,
) -> Result<ChannelDataset> {
    let model = || -> Result<&GmmModel> {
        match fitted {
            Some(Ok(f)) => Ok(f.model()),
            Some(Err(e)) => Err(Error::Numeric(format!("fit failed: {e}"))),
            None => Err(Error::InvalidArgument("missing fit".into())),
        }
    };
    let mut ds = match &spec.kind {
        GeneratorKind::Identity => {
            if count > train.len() {
                return Err(Error::InsufficientData { needed: count, got: train.len() });
            }
            train.head(count)
        }
        GeneratorKind::Scov | GeneratorKind::Gmm { .. } => sample_gmm(model()?, count, stream)?,
        GeneratorKind::Diffusion { t_steps, beta_start, beta_end, .. } => {
            let sched = make_schedule(*t_steps, *beta_start, *beta_end)?;
            sample_diffusion(&RealGmm::from_complex(model()?), &sched, count, stream)?
        }
    };
    ds.meta.generator = Some(spec.id.clone());
    ds.meta.seed = Some(stream.seed);
    Ok(ds)
}

/// Scores each generated set against the RPE test set: W1D of spectral
/// efficiencies at the configured SNR, codebook fingerprint TVD and MMD.
/// MMD uses the leading `min` of both set sizes.
pub fn run_metric_suite(
    rpe_test: &ChannelDataset,
    generated: &[(String, Result<ChannelDataset>)],
    codebook: &Codebook,
    noise: &NoiseConfig,
    bandwidth: Bandwidth,
    seeds: &[u64],
) -> Vec<MetricReport> {
    const MIN_SAMPLES: usize = 100;
    let reference = (|| -> Result<_> {
        if rpe_test.len() < MIN_SAMPLES {
            return Err(Error::InsufficientData { needed: MIN_SAMPLES, got: rpe_test.len() });
        }
        Ok((spectral_efficiency(rpe_test, noise).values, fingerprint(codebook, rpe_test)?))
    })();
    let rows = par::map_indexed(generated.len(), |i| {
        let (name, set) = &generated[i];
        let mut report = MetricReport {
            generator: Some(name.clone()),
            seeds: seeds.to_vec(),
            snr_db: Some(noise.snr_db()),
            codebook: Some(codebook.info()),
            mmd_convention: Some(MMD_CONVENTION.to_string()),
            ..Default::default()
        };
        let outcome = (|| -> Result<()> {
            let (se_ref, fp_ref) =
                reference.as_ref().map_err(|e| Error::InvalidArgument(format!("reference set: {e}")))?;
            let ds = set.as_ref().map_err(|e| Error::InvalidArgument(format!("generator: {e}")))?;
            report.n_samples = ds.len();
            if ds.len() < MIN_SAMPLES {
                return Err(Error::InsufficientData { needed: MIN_SAMPLES, got: ds.len() });
            }
            report.w1d = Some(wasserstein1(se_ref, &spectral_efficiency(ds, noise).values)?);
            report.tvd = Some(tvd(fp_ref, &fingerprint(codebook, ds)?)?);
            let k = rpe_test.len().min(ds.len());
            let m = mmd_unbiased(&rpe_test.head(k), &ds.head(k), bandwidth)?;
            report.mmd = Some(m.value);
            report.bandwidth = Some(m.bandwidth);
            Ok(())
        })();
        if let Err(e) = outcome {
            report.error = Some(err_text(&e));
        }
        report
    });
    rows
}

fn source_label(id: &str, count: usize, n_counts: usize) -> String {
    if n_counts > 1 {
        format!("{id}@{count}")
    } else {
        id.to_string()
    }
}

fn evaluate_cell(
    app: &ApplicationSpec,
    point: f64,
    fitted: &Result<Fitted>,
    test: &ChannelDataset,
    observations: &BTreeMap<u64, Result<crate::apps::ObservationSet>>,
    source_ds: &ChannelDataset,
) -> Result<f64> {
    match app.kind {
        ApplicationKind::Estimation => {
            let f = fitted.as_ref().map_err(|e| Error::Numeric(format!("fit failed: {e}")))?;
            let obs =
                observations[&point.to_bits()].as_ref().map_err(|e| Error::Numeric(format!("observation: {e}")))?;
            let m = f.model();
            let est = MixtureEstimator::new(&m.weights, &m.means, &m.covariances, obs.sigma_sq)?
                .estimate(&obs.observations)?;
            nmse(test, &est)
        }
        ApplicationKind::Compression => {
            let lc = fit_compressor(source_ds, point)?;
            nmse(test, &compress_reconstruct(&lc, test)?)
        }
    }
}

/// Runs the full protocol. Stage failures are recorded per cell; only
/// unreadable or inconsistent RPE datasets abort the run.
pub fn run_crosscheck(plan: &CrossCheckPlan) -> Result<(CrossCheckResult, StageTimings)> {
    plan.validate()?;
    let mut timings = StageTimings::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut StageTimings| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let train = load_source(plan, &plan.rpe_train, "train")?;
    let val = plan.rpe_val.as_ref().map(|s| load_source(plan, s, "val")).transpose()?;
    let test = load_source(plan, &plan.rpe_test, "test")?;
    let n = train.n_antennas();
    for (role, ds) in [("rpe_val", val.as_ref()), ("rpe_test", Some(&test))] {
        if let Some(ds) = ds {
            if ds.n_antennas() != n {
                return Err(Error::Config(format!("{role} has {} antennas, rpe_train has {n}", ds.n_antennas())));
            }
        }
    }
    lap("load", &mut timings);

    let fit_stream = RngStream::new(plan.seed, STREAM_FIT);
    let sample_stream = RngStream::new(plan.seed, STREAM_SAMPLE);
    let counts = if plan.sample_counts.is_empty() { vec![train.len()] } else { plan.sample_counts.clone() };

    // Source 0 is the RPE training set; generated sets follow.
    let mut cache = FitCache { entries: Vec::new() };
    let mut keys: Vec<(usize, FitKind)> =
        plan.generators.iter().filter_map(|g| generator_fit(&g.kind)).map(|k| (0, k)).collect();
    keys.extend(plan.applications.iter().filter(|a| a.kind == ApplicationKind::Estimation).map(|a| (0, app_fit(a))));
    cache.fill(keys, &[Some(&train)], &fit_stream);
    lap("fit_generators", &mut timings);

    let mut jobs: Vec<(usize, usize)> = Vec::new();
    for gi in 0..plan.generators.len() {
        for ci in 0..counts.len() {
            jobs.push((gi, ci));
        }
    }
    let labels: Vec<String> =
        jobs.iter().map(|&(g, c)| source_label(&plan.generators[g].id, counts[c], counts.len())).collect();
    let generated: Vec<Result<ChannelDataset>> = par::map_indexed(jobs.len(), |j| {
        let (gi, ci) = jobs[j];
        let spec = &plan.generators[gi];
        let fitted = generator_fit(&spec.kind).and_then(|k| cache.get(0, k));
        generate(spec, fitted, &train, counts[ci], &sample_stream.derive(&labels[j]))
    });
    lap("sample", &mut timings);

    let mut sources: Vec<String> = vec![RPE_SOURCE.to_string()];
    sources.extend(labels.iter().cloned());
    let mut source_errors = BTreeMap::new();
    for (label, g) in labels.iter().zip(&generated) {
        if let Err(e) = g {
            source_errors.insert(label.clone(), err_text(e));
        }
    }
    let datasets: Vec<Option<&ChannelDataset>> =
        std::iter::once(Some(&train)).chain(generated.iter().map(|g| g.as_ref().ok())).collect();

    // distribution metrics on the leading part of each generated set
    let metric_cfg = plan.metrics.clone().unwrap_or_default();
    let metrics = (|| -> Result<Vec<MetricReport>> {
        let cb = build_codebook(
            &plan.scenario.clone().unwrap_or_default().geometry_for(n)?,
            metric_cfg.cb_v,
            metric_cfg.cb_h,
        )?;
        let noise = NoiseConfig::from_snr_db(metric_cfg.snr_db)?;
        let bw = metric_cfg.bandwidth.map(Bandwidth::Fixed).unwrap_or(Bandwidth::Auto);
        let n_eval = metric_cfg.n_samples.unwrap_or(test.len()).min(test.len());
        let reference = test.head(n_eval);
        let sets: Vec<(String, Result<ChannelDataset>)> = labels
            .iter()
            .zip(&generated)
            .map(|(l, g)| {
                let set = match g {
                    Ok(ds) => Ok(ds.head(n_eval.min(ds.len()))),
                    Err(e) => Err(Error::InvalidArgument(err_text(e))),
                };
                (l.clone(), set)
            })
            .collect();
        Ok(run_metric_suite(&reference, &sets, &cb, &noise, bw, &[plan.seed]))
    })()
    .unwrap_or_else(|e| {
        labels
            .iter()
            .map(|l| MetricReport {
                generator: Some(l.clone()),
                error: Some(err_text(&e)),
                seeds: vec![plan.seed],
                ..Default::default()
            })
            .collect()
    });
    lap("metrics", &mut timings);

    // Application models on every generated source.
    let mut app_keys = Vec::new();
    for app in plan.applications.iter().filter(|a| a.kind == ApplicationKind::Estimation) {
        for (s, ds) in datasets.iter().enumerate().skip(1) {
            if ds.is_some() {
                app_keys.push((s, app_fit(app)));
            }
        }
    }
    cache.fill(app_keys, &datasets, &fit_stream);
    lap("fit_applications", &mut timings);

    let obs_stream = RngStream::new(plan.seed, STREAM_OBSERVE);
    let mut observations = BTreeMap::new();
    for app in plan.applications.iter().filter(|a| a.kind == ApplicationKind::Estimation) {
        for &snr in &app.snr_db {
            observations.entry(snr.to_bits()).or_insert_with(|| {
                NoiseConfig::from_snr_db(snr)
                    .and_then(|nc| observe(&test, &nc, &obs_stream.derive(&format!("snr={snr}"))))
            });
        }
    }

    let mut cell_jobs: Vec<(usize, usize, f64)> = Vec::new();
    for (ai, app) in plan.applications.iter().enumerate() {
        for s in 0..sources.len() {
            for &p in app.grid().1 {
                cell_jobs.push((ai, s, p));
            }
        }
    }
    let cells = par::map_indexed(cell_jobs.len(), |j| {
        let (ai, s, point) = cell_jobs[j];
        let app = &plan.applications[ai];
        let outcome = match datasets[s] {
            None => Err(Error::InvalidArgument(format!("source {} unavailable", sources[s]))),
            Some(ds) => {
                let fit_missing: Result<Fitted> = Err(Error::InvalidArgument("no fitted model".into()));
                let fitted = match app.kind {
                    ApplicationKind::Estimation => cache.get(s, app_fit(app)).unwrap_or(&fit_missing),
                    ApplicationKind::Compression => &fit_missing,
                };
                evaluate_cell(app, point, fitted, &test, &observations, ds)
            }
        };
        let (nmse, error) = match outcome {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(err_text(&e))),
        };
        NmseCell {
            application: app.label(),
            source: sources[s].clone(),
            grid: app.grid().0.to_string(),
            point,
            nmse,
            error,
        }
    });
    lap("evaluate", &mut timings);

    let result = CrossCheckResult { seed: plan.seed, plan: plan.clone(), sources, cells, metrics, source_errors };
    Ok((result, timings))
}

impl ScenarioConfig {
    /// Array geometry of the scenario, checked against a dataset dimension.
    fn geometry_for(&self, n: usize) -> Result<crate::types::UraGeometry> {
        if self.geometry.n_antennas() != n {
            return Err(Error::Config(format!(
                "codebook geometry has {} antennas, datasets have {n}",
                self.geometry.n_antennas()
            )));
        }
        Ok(self.geometry)
    }
}

/// Writes `result.json`, `table_nmse.csv` and `table_metrics.csv`.
pub fn write_result(result: &CrossCheckResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let outputs = [
        ("result.json", serde_json::to_string_pretty(result)? + "\n"),
        ("table_nmse.csv", result.nmse_table_csv()),
        ("table_metrics.csv", result.metric_table_csv()),
    ];
    let mut paths = Vec::new();
    for (name, text) in outputs {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        paths.push(p);
    }
    Ok(paths)
}
