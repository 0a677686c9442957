//! `reid-rank` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or system failure, 2 validation or contract failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{load_matrix, save_matrix, Dataset, EMBEDDINGS_FILE, MANIFEST_FILE, META_DIR};
use crate::distance::{with_workers, FusionWeights};
use crate::error::{ReidError, Result};
use crate::eval::{evaluate, EvalOptions};
use crate::fusion::{fuse, FeatureMap, FusionMode};
use crate::gradcheck::{run_suite, MAX_REL_ERROR};
use crate::matrix::Matrix;
use crate::pipeline::{
    compute_distances, fuse_pair, run_pipeline, DistancePair, PipelineParams, StageToggles,
};
use crate::rerank::{rerank, track_average, RerankParams};
use crate::synth::{generate, GaussianStream, SynthConfig};

pub const DIST_QG: &str = "dist_qg.bin";
pub const DIST_ALL: &str = "dist_all.bin";
pub const FUSED_QG: &str = "fused_qg.bin";
pub const FUSED_ALL: &str = "fused_all.bin";
pub const RERANKED_QG: &str = "reranked_qg.bin";
pub const TRACK_AVG_QG: &str = "track_avg_qg.bin";
pub const FINAL_QG: &str = "final_qg.bin";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";
pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "reid-rank",
    version,
    about = "Re-identification ranking pipeline"
)]
pub struct Cli {
    /// Worker threads for distance, re-ranking and evaluation stages.
    #[arg(long, env = "REID_RANK_WORKERS", global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a dataset directory for consistency.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Compute query×gallery and joint square distance matrices.
    Dist(DistArgs),
    /// Add weighted metadata distances to a distance pair.
    FuseMeta(FuseMetaArgs),
    /// k-reciprocal re-ranking of a distance pair.
    Rerank(RerankArgs),
    /// Replace distances to each gallery track by the track mean.
    TrackAvg(TrackAvgArgs),
    /// mAP and CMC report for a query×gallery matrix.
    Eval(EvalArgs),
    /// Run every enabled stage from a config file.
    Pipeline(PipelineArgs),
    /// Write a synthetic dataset directory.
    Synth(SynthArgs),
    /// Finite-difference check of all loss gradients.
    LossCheck(LossCheckArgs),
    /// Channel-mask fusion conservation check.
    FuseDemo(FuseDemoArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    #[arg(long, conflicts_with_all = ["query", "gallery"])]
    pub dataset: Option<PathBuf>,
    #[arg(long, requires = "gallery")]
    pub query: Option<PathBuf>,
    #[arg(long, requires = "query")]
    pub gallery: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct FuseMetaArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Query×gallery base distances.
    #[arg(long)]
    pub qg: PathBuf,
    /// Joint square base distances.
    #[arg(long)]
    pub joint: PathBuf,
    /// Metadata weight, `family=value`; repeatable. Unlisted families get 0.
    #[arg(long = "gamma", value_parser = parse_gamma)]
    pub gamma: Vec<(String, f64)>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RerankFlags {
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long = "lambda")]
    pub lambda: Option<f64>,
    /// Average neighbor memberships over the k2 nearest items.
    #[arg(long)]
    pub query_expansion: bool,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long)]
    pub qg: PathBuf,
    #[arg(long)]
    pub joint: PathBuf,
    #[command(flatten)]
    pub params: RerankFlags,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TrackAvgArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub qg: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvalFlags {
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub cross_camera: bool,
    /// AI City protocol: --top-n 100 --cross-camera.
    #[arg(long)]
    pub aicity: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub qg: PathBuf,
    #[command(flatten)]
    pub eval: EvalFlags,
    /// Also write report.txt and report.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
    #[arg(long = "gamma", value_parser = parse_gamma)]
    pub gamma: Vec<(String, f64)>,
    #[command(flatten)]
    pub rerank: RerankFlags,
    #[command(flatten)]
    pub eval: EvalFlags,
    #[arg(long)]
    pub no_fuse_metadata: bool,
    #[arg(long)]
    pub no_rerank: bool,
    #[arg(long)]
    pub no_track_average: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub identities: Option<usize>,
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub intra_sigma: Option<f64>,
    #[arg(long)]
    pub inter_sep: Option<f64>,
    #[arg(long)]
    pub cameras: Option<usize>,
    #[arg(long)]
    pub track_len: Option<usize>,
    #[arg(long)]
    pub meta_fidelity: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct LossCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub batches: usize,
    #[arg(long, default_value_t = 0.3)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
}

#[derive(Debug, Args)]
pub struct FuseDemoArgs {
    /// Global feature map (rows = height·width, cols = channels).
    #[arg(long, requires = "local")]
    pub global: Option<PathBuf>,
    /// Local feature map, same layout.
    #[arg(long, requires = "global")]
    pub local: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub height: usize,
    #[arg(long, default_value_t = 4)]
    pub width: usize,
    /// Channel count for random maps.
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_gamma(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected family=value, got {s:?}"))?;
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("weight {value:?} is not a number"))?;
    if !v.is_finite() {
        return Err(format!("weight {value:?} is not finite"));
    }
    Ok((name.trim().to_string(), v))
}

/// Parses `args` (program name first) and runs the command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, args: &[std::ffi::OsString]) -> Result<()> {
    let workers = cli.workers;
    if workers == Some(0) {
        return Err(ReidError::InvalidParams("--workers must be >= 1".into()));
    }
    let go = move || -> Result<()> {
        match cli.command {
            Command::Validate { dataset } => cmd_validate(&dataset),
            Command::Dist(a) => cmd_dist(&a),
            Command::FuseMeta(a) => cmd_fuse_meta(&a),
            Command::Rerank(a) => cmd_rerank(&a),
            Command::TrackAvg(a) => cmd_track_avg(&a),
            Command::Eval(a) => cmd_eval(&a),
            Command::Pipeline(a) => cmd_pipeline(&a, workers, args),
            Command::Synth(a) => cmd_synth(&a),
            Command::LossCheck(a) => cmd_loss_check(&a),
            Command::FuseDemo(a) => cmd_fuse_demo(&a),
        }
    };
    match workers {
        Some(n) => with_workers(n, go)?,
        None => go(),
    }
}

/// Fails with "output exists" unless `force` or none of the targets exist.
fn prepare_out(out: &Path, files: &[&str], force: bool) -> Result<()> {
    if !force {
        if let Some(f) = files.iter().map(|f| out.join(f)).find(|p| p.exists()) {
            return Err(ReidError::InvalidParams(format!(
                "output exists: {} (use --force)",
                f.display()
            )));
        }
    }
    fs::create_dir_all(out)?;
    Ok(())
}

fn warn_negative(name: &str, m: &Matrix) {
    if let Some(min) = m.min_value().filter(|v| *v < 0.0) {
        eprintln!("warning: {name} has negative distances (min {min}); re-ranking assumes nonnegative values");
    }
}

fn cmd_validate(dir: &Path) -> Result<()> {
    let ds = Dataset::load_dir(dir)?;
    let report = ds.validate();
    println!(
        "{} items, embedding dim {}, metadata families: {:?}",
        ds.manifest.len(),
        ds.embeddings.cols(),
        ds.meta.families.keys().collect::<Vec<_>>()
    );
    if report.is_ok() {
        println!("ok");
        return Ok(());
    }
    for v in &report.violations {
        println!("violation: {v}");
    }
    Err(ReidError::ShapeMismatch(format!(
        "{} violation(s)",
        report.violations.len()
    )))
}

pub fn cmd_dist(a: &DistArgs) -> Result<()> {
    let (q, g) = match (&a.dataset, &a.query, &a.gallery) {
        (Some(dir), _, _) => {
            let ds = Dataset::load_dir(dir)?;
            ds.ensure_valid()?;
            (ds.query_embeddings(), ds.gallery_embeddings())
        }
        (None, Some(q), Some(g)) => (load_matrix(q)?, load_matrix(g)?),
        _ => {
            return Err(ReidError::InvalidParams(
                "give --dataset or both --query and --gallery".into(),
            ))
        }
    };
    prepare_out(&a.out.out, &[DIST_QG, DIST_ALL], a.out.force)?;
    let pair = compute_distances(&q, &g)?;
    save_matrix(&pair.query_gallery, a.out.out.join(DIST_QG))?;
    save_matrix(&pair.joint, a.out.out.join(DIST_ALL))?;
    println!(
        "wrote {}x{} and {}x{} distance matrices to {}",
        q.rows(),
        g.rows(),
        pair.joint.rows(),
        pair.joint.cols(),
        a.out.out.display()
    );
    Ok(())
}

fn cmd_fuse_meta(a: &FuseMetaArgs) -> Result<()> {
    let ds = Dataset::load_dir(&a.dataset)?;
    ds.ensure_valid()?;
    let base = DistancePair {
        query_gallery: load_matrix(&a.qg)?,
        joint: load_matrix(&a.joint)?,
    };
    prepare_out(&a.out.out, &[FUSED_QG, FUSED_ALL], a.out.force)?;
    let weights = FusionWeights {
        gamma: a.gamma.iter().cloned().collect(),
    };
    let fused = fuse_pair(&ds, &base, &weights)?;
    warn_negative("fused query-gallery matrix", &fused.query_gallery);
    save_matrix(&fused.query_gallery, a.out.out.join(FUSED_QG))?;
    save_matrix(&fused.joint, a.out.out.join(FUSED_ALL))?;
    println!("wrote fused matrices to {}", a.out.out.display());
    Ok(())
}

fn rerank_params(f: &RerankFlags, base: RerankParams) -> RerankParams {
    RerankParams {
        k1: f.k1.unwrap_or(base.k1),
        k2: f.k2.unwrap_or(base.k2),
        lambda: f.lambda.unwrap_or(base.lambda),
        query_expansion: f.query_expansion || base.query_expansion,
    }
}

fn cmd_rerank(a: &RerankArgs) -> Result<()> {
    let fused = load_matrix(&a.qg)?;
    let joint = load_matrix(&a.joint)?;
    let params = rerank_params(&a.params, RerankParams::default());
    prepare_out(&a.out.out, &[RERANKED_QG], a.out.force)?;
    warn_negative("input distance matrix", &joint);
    let out = rerank(&fused, &joint, &params)?;
    save_matrix(&out, a.out.out.join(RERANKED_QG))?;
    println!(
        "re-ranked {}x{} (k1={}, k2={}, lambda={}) -> {}",
        out.rows(),
        out.cols(),
        params.k1,
        params.k2,
        params.lambda,
        a.out.out.join(RERANKED_QG).display()
    );
    Ok(())
}

fn cmd_track_avg(a: &TrackAvgArgs) -> Result<()> {
    let ds = Dataset::load_dir(&a.dataset)?;
    let dist = load_matrix(&a.qg)?;
    prepare_out(&a.out.out, &[TRACK_AVG_QG], a.out.force)?;
    let out = track_average(&dist, &ds.manifest)?;
    save_matrix(&out, a.out.out.join(TRACK_AVG_QG))?;
    println!("wrote {}", a.out.out.join(TRACK_AVG_QG).display());
    Ok(())
}

fn eval_options(f: &EvalFlags, base: EvalOptions) -> EvalOptions {
    let mut o = if f.aicity {
        EvalOptions::aicity()
    } else {
        base
    };
    if f.top_n.is_some() {
        o.top_n = f.top_n;
    }
    o.cross_camera |= f.cross_camera;
    o
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let ds = Dataset::load_dir(&a.dataset)?;
    let dist = load_matrix(&a.qg)?;
    let options = eval_options(&a.eval, EvalOptions::default());
    if let Some(out) = &a.out {
        prepare_out(out, &[REPORT_TXT, REPORT_JSON], a.force)?;
    }
    let report = evaluate(&dist, &ds.manifest, &options)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = &a.out {
        fs::write(out.join(REPORT_TXT), &text)?;
        fs::write(out.join(REPORT_JSON), report.to_json())?;
    }
    Ok(())
}

/// Flat key-value pipeline configuration (TOML syntax).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub gamma: BTreeMap<String, f64>,
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    pub lambda: Option<f64>,
    pub query_expansion: Option<bool>,
    pub top_n: Option<usize>,
    pub cross_camera: Option<bool>,
    pub aicity: Option<bool>,
    pub fuse_metadata: Option<bool>,
    pub rerank: Option<bool>,
    pub track_average: Option<bool>,
    pub workers: Option<usize>,
}

impl PipelineConfig {
    /// Reads a config file; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ReidError::MissingFile(path.to_path_buf()),
            _ => ReidError::IoFailure(e),
        })?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| ReidError::ParseError {
            line: e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.dataset, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn params(&self) -> PipelineParams {
        let defaults = RerankParams::default();
        let mut eval = if self.aicity == Some(true) {
            EvalOptions::aicity()
        } else {
            EvalOptions::default()
        };
        if self.top_n.is_some() {
            eval.top_n = self.top_n;
        }
        if let Some(c) = self.cross_camera {
            eval.cross_camera = c;
        }
        PipelineParams {
            weights: FusionWeights {
                gamma: self.gamma.clone(),
            },
            rerank: RerankParams {
                k1: self.k1.unwrap_or(defaults.k1),
                k2: self.k2.unwrap_or(defaults.k2),
                lambda: self.lambda.unwrap_or(defaults.lambda),
                query_expansion: self.query_expansion.unwrap_or(false),
            },
            eval,
            stages: StageToggles {
                fuse_metadata: self.fuse_metadata.unwrap_or(true),
                rerank: self.rerank.unwrap_or(true),
                track_average: self.track_average.unwrap_or(true),
            },
        }
    }
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command_line: Vec<String>,
    dataset: &'a Path,
    workers: Option<usize>,
    params: &'a PipelineParams,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn dataset_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = vec![dir.join(MANIFEST_FILE), dir.join(EMBEDDINGS_FILE)];
    let meta = dir.join(META_DIR);
    if meta.is_dir() {
        let mut extra: Vec<PathBuf> = fs::read_dir(&meta)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        extra.sort();
        files.extend(extra);
    }
    Ok(files)
}

fn cmd_pipeline(
    a: &PipelineArgs,
    workers: Option<usize>,
    args: &[std::ffi::OsString],
) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let (None, Some(n)) = (workers, cfg.workers) {
        // workers from the config file still apply when no flag or env var is set
        if n == 0 {
            return Err(ReidError::InvalidParams("workers must be >= 1".into()));
        }
        return with_workers(n, || cmd_pipeline(a, Some(n), args))?;
    }
    let dataset = a.dataset.clone().or(cfg.dataset.clone()).ok_or_else(|| {
        ReidError::InvalidParams("no dataset given (config `dataset` or --dataset)".into())
    })?;
    let out = a.out.clone().or(cfg.out.clone()).ok_or_else(|| {
        ReidError::InvalidParams("no output directory given (config `out` or --out)".into())
    })?;

    let mut params = cfg.params();
    params.weights.gamma.extend(a.gamma.iter().cloned());
    params.rerank = rerank_params(&a.rerank, params.rerank);
    params.eval = eval_options(&a.eval, params.eval);
    params.stages.fuse_metadata &= !a.no_fuse_metadata;
    params.stages.rerank &= !a.no_rerank;
    params.stages.track_average &= !a.no_track_average;

    let ds = Dataset::load_dir(&dataset)?;
    let all_outputs = [
        DIST_QG,
        DIST_ALL,
        FUSED_QG,
        FUSED_ALL,
        RERANKED_QG,
        TRACK_AVG_QG,
        FINAL_QG,
        REPORT_TXT,
        REPORT_JSON,
        RUN_MANIFEST,
    ];
    prepare_out(&out, &all_outputs, a.force)?;
    // stale artifacts from a run with different toggles would be misleading
    for f in all_outputs {
        let p = out.join(f);
        if p.exists() {
            fs::remove_file(p)?;
        }
    }

    let result = run_pipeline(&ds, &params)?;
    let mut written: Vec<&str> = Vec::new();
    let mut save = |name: &'static str, m: &Matrix| -> Result<()> {
        save_matrix(m, out.join(name))?;
        written.push(name);
        Ok(())
    };
    save(DIST_QG, &result.raw.query_gallery)?;
    save(DIST_ALL, &result.raw.joint)?;
    if let Some(f) = &result.fused {
        warn_negative("fused query-gallery matrix", &f.query_gallery);
        save(FUSED_QG, &f.query_gallery)?;
        save(FUSED_ALL, &f.joint)?;
    }
    if let Some(r) = &result.reranked {
        save(RERANKED_QG, r)?;
    }
    if let Some(t) = &result.track_averaged {
        save(TRACK_AVG_QG, t)?;
    }
    save(FINAL_QG, &result.final_distances)?;
    let text = result.report.to_text();
    fs::write(out.join(REPORT_TXT), &text)?;
    fs::write(out.join(REPORT_JSON), result.report.to_json())?;
    written.push(REPORT_TXT);
    written.push(REPORT_JSON);

    let mut inputs = BTreeMap::new();
    for f in dataset_files(&dataset)? {
        inputs.insert(f.display().to_string(), sha256_file(&f)?);
    }
    let mut outputs = BTreeMap::new();
    for f in &written {
        outputs.insert(f.to_string(), sha256_file(&out.join(f))?);
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command_line: args
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect(),
        dataset: &dataset,
        workers,
        params: &params,
        inputs,
        outputs,
    };
    fs::write(
        out.join(RUN_MANIFEST),
        serde_json::to_string_pretty(&manifest).expect("plain data"),
    )?;
    println!(
        "mAP {:.6}  Rank@1 {:.6}  Rank@5 {:.6}  Rank@10 {:.6}  ({} probes excluded)",
        result.report.map,
        result.report.rank1,
        result.report.rank5,
        result.report.rank10,
        result.report.excluded_probes.len()
    );
    println!("artifacts in {}", out.display());
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        num_identities: a.identities.unwrap_or(d.num_identities),
        images_per_identity: a.images.unwrap_or(d.images_per_identity),
        dim: a.dim.unwrap_or(d.dim),
        intra_sigma: a.intra_sigma.unwrap_or(d.intra_sigma),
        inter_sep: a.inter_sep.unwrap_or(d.inter_sep),
        num_cameras: a.cameras.unwrap_or(d.num_cameras),
        track_len: a.track_len.unwrap_or(d.track_len),
        meta_fidelity: a.meta_fidelity.unwrap_or(d.meta_fidelity),
        seed: a.seed.unwrap_or(d.seed),
        meta_dims: d.meta_dims,
    };
    let ds = generate(&cfg)?;
    prepare_out(&a.out.out, &[MANIFEST_FILE, EMBEDDINGS_FILE], a.out.force)?;
    ds.save_dir(&a.out.out)?;
    fs::write(
        a.out.out.join("synth_config.json"),
        serde_json::to_string_pretty(&cfg).expect("plain data"),
    )?;
    println!(
        "wrote {} items ({} identities) to {}",
        ds.manifest.len(),
        cfg.num_identities,
        a.out.out.display()
    );
    Ok(())
}

fn cmd_loss_check(a: &LossCheckArgs) -> Result<()> {
    let checks = run_suite(a.seed, a.batches, a.margin, a.epsilon);
    let mut failed = 0;
    for c in &checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        if !c.passed() {
            failed += 1;
        }
        println!(
            "{status} {:<20} seed {:>4}  max rel err {:.3e}  resamples {}",
            c.kernel, c.seed, c.max_rel_error, c.resamples
        );
    }
    println!(
        "{} of {} checks within {MAX_REL_ERROR:e}",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        return Err(ReidError::InvalidParams(format!(
            "{failed} gradient check(s) failed"
        )));
    }
    Ok(())
}

fn cmd_fuse_demo(a: &FuseDemoArgs) -> Result<()> {
    let (global, local) = match (&a.global, &a.local) {
        (Some(g), Some(l)) => (
            FeatureMap::from_matrix(&load_matrix(g)?, a.height, a.width)?,
            FeatureMap::from_matrix(&load_matrix(l)?, a.height, a.width)?,
        ),
        _ => {
            let mut rng = GaussianStream::new(a.seed);
            let n = a.height * a.width * a.channels;
            (
                FeatureMap::new(a.height, a.width, a.channels, rng.vector(n, 1.0))?,
                FeatureMap::new(a.height, a.width, a.channels, rng.vector(n, 1.0))?,
            )
        }
    };
    let g = fuse(&global, &local, FusionMode::Glamor)?;
    let c = fuse(&global, &local, FusionMode::Counter)?;
    let total = global.add(&local)?;
    let conserved = g.add(&c)?.values() == total.values();
    let (h, w, ch) = global.shape();
    let half = ch / 2;
    let provenance = (0..h).all(|y| {
        (0..w).all(|x| {
            (0..ch).all(|k| {
                let (from_g, from_c) = if k < half {
                    (local.get(y, x, k), global.get(y, x, k))
                } else {
                    (global.get(y, x, k), local.get(y, x, k))
                };
                g.get(y, x, k).to_bits() == from_g.to_bits()
                    && c.get(y, x, k).to_bits() == from_c.to_bits()
            })
        })
    });
    println!("feature map {h}x{w}x{ch}, {half} channel(s) from the local map in glamor mode");
    println!("conservation glamor+counter == global+local: {conserved}");
    println!("channel provenance: {provenance}");
    if conserved && provenance {
        Ok(())
    } else {
        Err(ReidError::InvalidParams("fusion check failed".into()))
    }
}
