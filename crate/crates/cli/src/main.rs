use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context as _;
use chanprobe::crosscheck::{run_crosscheck, write_result, CrossCheckPlan, DiffusionDefaults};
use chanprobe::genmod::{
    fit_gmm, fit_scov, make_schedule, read_model, sample_diffusion, sample_gmm, write_model, GmmFitConfig, GmmModel,
    RealGmm,
};
use chanprobe::metrics::report::{write_cdf_csv, write_fingerprint_csv, MMD_CONVENTION};
use chanprobe::metrics::{
    build_codebook, cdf_points, fingerprint, mmd_unbiased, spectral_efficiency, tvd, wasserstein1, Bandwidth,
    MetricReport,
};
use chanprobe::synth::{generate_rpe_split, ScenarioConfig};
use chanprobe::{read_dataset, write_dataset, ChannelDataset, Error, NoiseConfig, RngStream, UraGeometry};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERIC: u8 = 4;
const EXIT_PARTIAL: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "chanprobe", version, about = "Evaluate generative models of wireless channels")]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = "CHANPROBE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw channels from the synthetic propagation environment.
    Synth(SynthArgs),
    /// Fit a scov or GMM model to a dataset.
    Fit(FitArgs),
    /// Sample a fitted model (ancestral or diffusion).
    Sample(SampleArgs),
    /// Compare a generated dataset against a reference dataset.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run an application cross-check plan.
    Crosscheck(CrosscheckArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scenario JSON; defaults apply to missing fields.
    scenario: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split label; distinct labels give independent draws.
    #[arg(long, default_value = "train")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum FitKind {
    Scov,
    Gmm,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(value_enum)]
    kind: FitKind,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    components: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum SampleKind {
    Ancestral,
    Diffusion,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, value_enum, default_value_t = SampleKind::Ancestral)]
    kind: SampleKind,
    #[arg(long, default_value_t = DiffusionDefaults::T_STEPS)]
    t_steps: usize,
    #[arg(long, default_value_t = DiffusionDefaults::BETA_START)]
    beta_start: f64,
    #[arg(long, default_value_t = DiffusionDefaults::BETA_END)]
    beta_end: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct EvalCommon {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    gen: PathBuf,
    /// Prefix of the JSON report and CSV files.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// Spectral-efficiency CDFs and their Wasserstein-1 distance.
    Se {
        #[command(flatten)]
        common: EvalCommon,
        #[arg(long, default_value_t = 20.0)]
        snr_db: f64,
    },
    /// Codebook fingerprints and their total variation distance.
    Fingerprint {
        #[command(flatten)]
        common: EvalCommon,
        #[arg(long, default_value_t = 4)]
        cb_v: usize,
        #[arg(long, default_value_t = 16)]
        cb_h: usize,
        /// Array rows; the columns follow from the dataset dimension.
        #[arg(long, default_value_t = 4)]
        n_vertical: usize,
    },
    /// Unbiased MMD with a Gaussian kernel.
    Mmd {
        #[command(flatten)]
        common: EvalCommon,
        /// Fixed bandwidth; median heuristic when omitted.
        #[arg(long)]
        bandwidth: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct CrosscheckArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct RunManifest {
    tool: String,
    argv: Vec<String>,
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    threads: usize,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    timings: BTreeMap<String, f64>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn classify(e: anyhow::Error) -> Failure {
    let code = match e.downcast_ref::<Error>() {
        Some(Error::Io { .. } | Error::Decode { .. }) => EXIT_IO,
        Some(Error::InvalidArgument(_) | Error::Config(_) | Error::Json(_)) => EXIT_USAGE,
        Some(_) => EXIT_NUMERIC,
        None if e.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
        None => EXIT_USAGE,
    };
    Failure { code, error: e }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidArgument(msg.into()).into()
}

fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn hash_map(paths: &[PathBuf]) -> anyhow::Result<BTreeMap<String, String>> {
    paths.iter().map(|p| Ok((p.display().to_string(), sha256_file(p)?))).collect()
}

fn dataset_files(path: &Path) -> Vec<PathBuf> {
    let side = chanprobe::dataset::sidecar_path(path);
    if side.exists() {
        vec![path.to_path_buf(), side]
    } else {
        vec![path.to_path_buf()]
    }
}

struct Run {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    manifest: PathBuf,
    timings: BTreeMap<String, f64>,
    partial: bool,
}

fn manifest_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn load_scenario(path: Option<&Path>) -> anyhow::Result<ScenarioConfig> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io { path: p.into(), source: e })?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())).into())
        }
    }
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<Run> {
    if a.n == 0 {
        return Err(usage("--n must be positive"));
    }
    let mut cfg = load_scenario(a.scenario.as_deref())?;
    cfg.seed = a.seed;
    let t = Instant::now();
    let ds = generate_rpe_split(&cfg, a.n, &a.split).context("synth: generating channels")?;
    let gen_time = t.elapsed().as_secs_f64();
    write_dataset(&ds, &a.out).context("synth: writing dataset")?;
    Ok(Run {
        command: "synth".into(),
        config: serde_json::json!({ "scenario": cfg, "n": a.n, "split": a.split }),
        seed: Some(a.seed),
        inputs: a.scenario.iter().cloned().collect(),
        outputs: dataset_files(&a.out),
        manifest: manifest_for(&a.out),
        timings: BTreeMap::from([("generate".into(), gen_time)]),
        partial: false,
    })
}

fn cmd_fit(a: &FitArgs) -> anyhow::Result<Run> {
    let ds = read_dataset(&a.input).context("fit: reading dataset")?;
    let t = Instant::now();
    let (model, config) = match a.kind {
        FitKind::Scov => {
            (GmmModel::from_scov(&fit_scov(&ds).context("fit: scov")?), serde_json::json!({ "kind": "scov" }))
        }
        FitKind::Gmm => {
            if a.components == 0 {
                return Err(usage("--components must be positive"));
            }
            let cfg =
                GmmFitConfig { components: a.components, tol: a.tol, max_iter: a.max_iter, ..GmmFitConfig::default() };
            let m =
                fit_gmm(&ds, &cfg, &RngStream::new(a.seed, chanprobe::crosscheck::STREAM_FIT)).context("fit: EM")?;
            eprintln!(
                "fit: {} EM iterations, final mean log-likelihood {:.6}",
                m.fit_log.len(),
                m.fit_log.last().copied().unwrap_or(f64::NAN)
            );
            (m, serde_json::json!({ "kind": "gmm", "fit": cfg }))
        }
    };
    let fit_time = t.elapsed().as_secs_f64();
    write_model(&model, &a.out).context("fit: writing model")?;
    let mut config = config;
    config["fit_log"] = serde_json::json!(model.fit_log);
    config["reseed_iterations"] = serde_json::json!(model.reseed_iterations);
    Ok(Run {
        command: "fit".into(),
        config,
        seed: Some(a.seed),
        inputs: dataset_files(&a.input),
        outputs: vec![a.out.clone()],
        manifest: manifest_for(&a.out),
        timings: BTreeMap::from([("fit".into(), fit_time)]),
        partial: false,
    })
}

fn cmd_sample(a: &SampleArgs) -> anyhow::Result<Run> {
    if a.count == 0 {
        return Err(usage("--count must be positive"));
    }
    let model = read_model(&a.model).context("sample: reading model")?;
    let stream = RngStream::new(a.seed, chanprobe::crosscheck::STREAM_SAMPLE);
    let t = Instant::now();
    let mut ds = match a.kind {
        SampleKind::Ancestral => sample_gmm(&model, a.count, &stream).context("sample: ancestral")?,
        SampleKind::Diffusion => {
            let sched = make_schedule(a.t_steps, a.beta_start, a.beta_end).context("sample: schedule")?;
            sample_diffusion(&RealGmm::from_complex(&model), &sched, a.count, &stream).context("sample: diffusion")?
        }
    };
    let time = t.elapsed().as_secs_f64();
    ds.meta.seed = Some(a.seed);
    ds.meta.generator = Some(format!("{}:{}", serde_json::to_value(a.kind)?.as_str().unwrap_or(""), a.model.display()));
    write_dataset(&ds, &a.out).context("sample: writing dataset")?;
    let mut config = serde_json::json!({ "kind": a.kind, "count": a.count });
    if let SampleKind::Diffusion = a.kind {
        config["t_steps"] = a.t_steps.into();
        config["beta_start"] = a.beta_start.into();
        config["beta_end"] = a.beta_end.into();
    }
    Ok(Run {
        command: "sample".into(),
        config,
        seed: Some(a.seed),
        inputs: vec![a.model.clone()],
        outputs: dataset_files(&a.out),
        manifest: manifest_for(&a.out),
        timings: BTreeMap::from([("sample".into(), time)]),
        partial: false,
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_pair(c: &EvalCommon) -> anyhow::Result<(ChannelDataset, ChannelDataset)> {
    let r = read_dataset(&c.reference).context("eval: reading reference")?;
    let g = read_dataset(&c.gen).context("eval: reading generated set")?;
    if r.n_antennas() != g.n_antennas() {
        return Err(usage(format!("dimension mismatch: {} vs {}", r.n_antennas(), g.n_antennas())));
    }
    Ok((r, g))
}

fn write_report(path: &Path, report: &MetricReport) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(())
}

fn cmd_eval(e: &EvalCommand) -> anyhow::Result<Run> {
    let t = Instant::now();
    let (common, name) = match e {
        EvalCommand::Se { common, .. } => (common, "se"),
        EvalCommand::Fingerprint { common, .. } => (common, "fingerprint"),
        EvalCommand::Mmd { common, .. } => (common, "mmd"),
    };
    let (r, g) = read_pair(common)?;
    let mut report = MetricReport { n_samples: g.len(), ..Default::default() };
    let report_path = with_suffix(&common.out_prefix, ".json");
    let mut outputs = Vec::new();
    let config = match e {
        EvalCommand::Se { snr_db, .. } => {
            let noise = NoiseConfig::from_snr_db(*snr_db)?;
            let se_r = spectral_efficiency(&r, &noise).values;
            let se_g = spectral_efficiency(&g, &noise).values;
            report.w1d = Some(wasserstein1(&se_r, &se_g).context("eval se: W1D")?);
            report.snr_db = Some(*snr_db);
            for (tag, v) in [("ref", &se_r), ("gen", &se_g)] {
                let p = with_suffix(&common.out_prefix, &format!("_cdf_{tag}.csv"));
                write_cdf_csv(&p, &cdf_points(v)?)?;
                outputs.push(p);
            }
            serde_json::json!({ "metric": "se", "snr_db": snr_db })
        }
        EvalCommand::Fingerprint { cb_v, cb_h, n_vertical, .. } => {
            let n = r.n_antennas();
            if *n_vertical == 0 || n % n_vertical != 0 {
                return Err(usage(format!("{n} antennas do not split into {n_vertical} rows")));
            }
            let geometry =
                UraGeometry { n_vertical: *n_vertical, n_horizontal: n / n_vertical, ..UraGeometry::default() };
            let cb = build_codebook(&geometry, *cb_v, *cb_h)?;
            let fr = fingerprint(&cb, &r).context("eval fingerprint: reference")?;
            let fg = fingerprint(&cb, &g).context("eval fingerprint: generated set")?;
            report.tvd = Some(tvd(&fr, &fg)?);
            report.codebook = Some(cb.info());
            for (tag, fp) in [("ref", &fr), ("gen", &fg)] {
                let p = with_suffix(&common.out_prefix, &format!("_hist_{tag}.csv"));
                write_fingerprint_csv(&p, fp)?;
                outputs.push(p);
            }
            serde_json::json!({ "metric": "fingerprint", "cb_v": cb_v, "cb_h": cb_h, "geometry": geometry })
        }
        EvalCommand::Mmd { bandwidth, .. } => {
            let bw = bandwidth.map(Bandwidth::Fixed).unwrap_or(Bandwidth::Auto);
            let m = mmd_unbiased(&r, &g, bw).context("eval mmd")?;
            report.mmd = Some(m.value);
            report.bandwidth = Some(m.bandwidth);
            report.mmd_convention = Some(MMD_CONVENTION.into());
            serde_json::json!({ "metric": "mmd", "bandwidth": bandwidth })
        }
    };
    write_report(&report_path, &report)?;
    outputs.insert(0, report_path);
    let mut inputs = dataset_files(&common.reference);
    inputs.extend(dataset_files(&common.gen));
    Ok(Run {
        command: format!("eval {name}"),
        config,
        seed: None,
        inputs,
        outputs,
        manifest: with_suffix(&common.out_prefix, ".manifest.json"),
        timings: BTreeMap::from([("eval".into(), t.elapsed().as_secs_f64())]),
        partial: false,
    })
}

fn cmd_crosscheck(a: &CrosscheckArgs) -> anyhow::Result<Run> {
    let plan = CrossCheckPlan::load(&a.plan).context("crosscheck: loading plan")?;
    let (result, timings) = run_crosscheck(&plan).context("crosscheck")?;
    let failed = result.failed_cells();
    for c in result.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!(
            "crosscheck: cell {} / {} @ {} failed: {}",
            c.application,
            c.source,
            c.point,
            c.error.as_deref().unwrap_or("")
        );
    }
    for m in result.metrics.iter().filter(|m| m.error.is_some()) {
        eprintln!(
            "crosscheck: metrics for {} failed: {}",
            m.generator.as_deref().unwrap_or("?"),
            m.error.as_deref().unwrap_or("")
        );
    }
    let outputs = write_result(&result, &a.out).context("crosscheck: writing results")?;
    let mut inputs = vec![a.plan.clone()];
    for src in [Some(&plan.rpe_train), plan.rpe_val.as_ref(), Some(&plan.rpe_test)].into_iter().flatten() {
        if let chanprobe::crosscheck::DatasetSource::File(p) = src {
            inputs.extend(dataset_files(p));
        }
    }
    Ok(Run {
        command: "crosscheck".into(),
        config: serde_json::to_value(&plan)?,
        seed: Some(plan.seed),
        inputs,
        outputs,
        manifest: a.out.join("manifest.json"),
        timings,
        partial: failed > 0,
    })
}

fn run(cli: &Cli) -> anyhow::Result<Run> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Eval(e) => cmd_eval(e),
        Command::Crosscheck(a) => cmd_crosscheck(a),
    }
}

fn write_manifest(run: &Run, threads: usize) -> anyhow::Result<()> {
    let manifest = RunManifest {
        tool: format!("chanprobe {}", env!("CARGO_PKG_VERSION")),
        argv: std::env::args().collect(),
        command: run.command.clone(),
        config: run.config.clone(),
        seed: run.seed,
        threads,
        inputs: hash_map(&run.inputs)?,
        outputs: hash_map(&run.outputs)?,
        timings: run.timings.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&run.manifest, text).map_err(|e| Error::Io { path: run.manifest.clone(), source: e })?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be positive");
        return ExitCode::from(EXIT_USAGE);
    }
    let outcome = chanprobe::par::with_threads(cli.threads, || {
        let threads = chanprobe::par::current_threads();
        run(&cli).and_then(|r| write_manifest(&r, threads).map(|_| r))
    });
    match outcome {
        Ok(r) if r.partial => {
            eprintln!("{}: finished with failed cells; see {}", r.command, r.manifest.display());
            ExitCode::from(EXIT_PARTIAL)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            let f = classify(e);
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
