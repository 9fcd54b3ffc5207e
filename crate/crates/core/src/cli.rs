//! `bonelabel` command line: synthetic data, calibration, labeling, evaluation and the rating workflow.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{joint_calibrate, OffsetGrid};
use crate::error::{Error, Result};
use crate::io::{self, DirLock, Provenance};
use crate::labeler::{initial_labels, label_sweep, LabelConfig, LabelMask, MeshIndex};
use crate::metrics::{evaluate, label_histogram, otsu_threshold, FrameMask, IntensitySplit};
use crate::mesh::BoneMesh;
use crate::phantom::{generate_phantom, MeshKind, PhantomConfig};
use crate::rating::{self, build_rating_session, rating_stats, AppState, BlindingKey, MethodMasks, RatingFrame};
use crate::sweep::{Calibration, SweepBundle};

pub const DEFAULT_SIGMAS_MM: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug, Parser)]
#[command(name = "bonelabel", version, about = "Bone-surface labels for tracked ultrasound sweeps")]
pub struct Cli {
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config with optional `phantom`, `label`, `calibration` and `sigmas_mm` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic sweep with ground truth and a calibration recording.
    Phantom(PhantomArgs),
    /// Joint spatial and temporal probe calibration plus specimen registration.
    Calibrate(CalibrateArgs),
    /// Label every frame of a sweep against a CT bone mesh.
    Label(LabelArgs),
    /// Accuracy, completeness and F against ground-truth masks.
    Evaluate(EvaluateArgs),
    /// Rating means and pairwise signed-rank tests.
    Stats(StatsArgs),
    /// Build a blinded rating session from per-method masks.
    RateBuild(RateBuildArgs),
    /// Serve rating sessions over HTTP.
    RateServe(RateServeArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, value_parser = parse_mesh_kind)]
    pub mesh_kind: Option<MeshKind>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Speckle variance.
    #[arg(long)]
    pub speckle: Option<f64>,
    /// Tracking jitter std, mm and degrees.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Per-frame tracking error bound, degrees and mm.
    #[arg(long)]
    pub perturb: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub obs: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub sweep: PathBuf,
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub calibration: PathBuf,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub sweep: PathBuf,
    /// Directory of predicted masks.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth masks.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// Fixed intensity threshold; Otsu over ground-truth label pixels otherwise.
    #[arg(long)]
    pub threshold: Option<u8>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub key: PathBuf,
    /// Bonferroni comparison count; defaults to the number of method pairs.
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RateBuildArgs {
    #[arg(long)]
    pub sweep: PathBuf,
    /// `name=mask_dir`, at least two.
    #[arg(long = "method", required = true, value_parser = parse_method)]
    pub methods: Vec<(String, PathBuf)>,
    /// Frames sampled from the sweep; all when omitted.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long, default_value = "rater")]
    pub rater: String,
}

#[derive(Debug, Args)]
pub struct RateServeArgs {
    #[arg(long)]
    pub sessions: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Static UI bundle.
    #[arg(long)]
    pub ui: Option<PathBuf>,
}

fn parse_mesh_kind(s: &str) -> std::result::Result<MeshKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown mesh kind `{s}` (cylinder, tapered-tube, bumpy-tube, slab)"))
}

fn parse_method(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => Ok((name.to_string(), PathBuf::from(dir))),
        _ => Err(format!("expected name=dir, got `{s}`")),
    }
}

/// Optional settings file shared by all subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub phantom: PhantomConfig,
    pub label: LabelConfig,
    pub calibration: OffsetGrid,
    pub sigmas_mm: Vec<f64>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            phantom: PhantomConfig::default(),
            label: LabelConfig::default(),
            calibration: OffsetGrid::default(),
            sigmas_mm: DEFAULT_SIGMAS_MM.to_vec(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

/// Parses `args` (program name first) and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.label.seed = s;
    }
    cfg.label.workers = cli.workers;
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.as_path();
    match &cli.command {
        Command::Phantom(a) => phantom(a, &cfg, seed, out),
        Command::Calibrate(a) => calibrate(a, &cfg, out, cli.workers),
        Command::Label(a) => label(a, &cfg, out),
        Command::Evaluate(a) => evaluate_cmd(a, &cfg, out, cli.workers),
        Command::Stats(a) => stats(a, out),
        Command::RateBuild(a) => rate_build(a, seed, out),
        Command::RateServe(a) => rate_serve(a, cli.workers),
    }
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::domain(e.to_string()))?
        .install(f)
}

fn phantom(a: &PhantomArgs, cfg: &Config, seed: u64, out: &Path) -> Result<()> {
    let mut pc = cfg.phantom;
    if let Some(k) = a.mesh_kind {
        pc.mesh = k;
    }
    if let Some(n) = a.frames {
        pc.layout.frames = n;
    }
    if let Some(s) = a.speckle {
        pc.intensity.speckle_variance = s;
    }
    if let Some(j) = a.jitter {
        pc.noise.jitter_translation_mm = j;
        pc.noise.jitter_rotation_deg = j;
    }
    if let Some(p) = a.perturb {
        pc.perturb_angle_deg = p;
        pc.perturb_trans_mm = p;
    }
    std::fs::create_dir_all(out)?;
    let _lock = DirLock::acquire(out)?;
    let p = generate_phantom(&pc, seed)?;
    io::save_sweep(&p.bundle, &out.join("sweep"))?;
    io::save_mesh(&out.join("mesh.ply"), &p.mesh)?;
    io::save_ground_truth(&out.join("ground_truth.json"), &p.truth)?;
    io::save_calibration(&out.join("calibration.json"), &p.recorded_calibration)?;
    io::save_calib_obs(&out.join("calib_obs.json"), &p.calib_obs, Some(&p.registration))?;
    let truth = p.truth_masks();
    let ids: Vec<u32> = p.bundle.frames.iter().map(|f| f.id).collect();
    io::save_masks(&out.join("truth_masks"), &ids.iter().copied().zip(&truth).collect::<Vec<_>>())?;
    println!("{} frames, {} mesh triangles -> {}", ids.len(), p.mesh.triangles().len(), out.display());
    Ok(())
}

fn calibrate(a: &CalibrateArgs, cfg: &Config, out: &Path, workers: usize) -> Result<()> {
    let (obs, reg) = io::load_calib_obs(&a.obs)?;
    let res = in_pool(workers, || joint_calibrate(&obs, &cfg.calibration))?;
    let ct_from_specimen = match reg {
        Some(r) => r.solve()?.transform,
        None => crate::geometry::RigidTransform::identity(),
    };
    let c = Calibration {
        image_to_probe: res.image_to_probe,
        delta_t_ms: res.delta_t_ms,
        rms_mm: res.localization_error_mm,
        ct_from_specimen,
    };
    std::fs::create_dir_all(out)?;
    let _lock = DirLock::acquire(out)?;
    io::save_calibration(&out.join("calibration.json"), &c)?;
    println!("delta_t {:.1} ms, rms {:.4} mm", c.delta_t_ms, c.rms_mm);
    Ok(())
}

/// Hex SHA-256 of the config as serialized JSON.
pub fn config_hash(cfg: &LabelConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Tags every labeled pixel High or Low by its intensity.
pub fn assign_classes(masks: &mut [LabelMask], bundle: &SweepBundle, split: &IntensitySplit) {
    for (m, f) in masks.iter_mut().zip(&bundle.frames) {
        for i in 0..m.bits.len() {
            m.class[i] = m.bits[i].then(|| split.classify(f.image.data[i]));
        }
    }
}

fn frame_ids(bundle: &SweepBundle) -> Vec<u32> {
    bundle.frames.iter().map(|f| f.id).collect()
}

fn label(a: &LabelArgs, cfg: &Config, out: &Path) -> Result<()> {
    let mut lc = cfg.label;
    if let Some(l) = a.lambda {
        lc.lambda = l;
    }
    lc.validate()?;
    let bundle = io::load_sweep(&a.sweep)?;
    let mesh: BoneMesh = io::load_mesh(&a.mesh)?;
    let calib = io::load_calibration(&a.calibration)?;
    let index = MeshIndex::build(&mesh, lc.sample_density, lc.sample_seed);
    let mut labels = label_sweep(&bundle, &index, &calib, &lc)?;
    let initial = initial_labels(&bundle, &index, &calib, &lc)?;

    let hist = label_histogram(labels.masks.iter().zip(bundle.frames.iter().map(|f| &f.image)));
    let split = otsu_threshold(&hist).ok().map(|threshold| IntensitySplit { threshold });
    if let Some(s) = &split {
        assign_classes(&mut labels.masks, &bundle, s);
    }

    std::fs::create_dir_all(out)?;
    let _lock = DirLock::acquire(out)?;
    let ids = frame_ids(&bundle);
    io::save_masks(&out.join("masks"), &ids.iter().copied().zip(&labels.masks).collect::<Vec<_>>())?;
    io::save_masks(&out.join("initial_masks"), &ids.iter().copied().zip(&initial).collect::<Vec<_>>())?;
    io::save_refinement(&out.join("refinement.jsonl"), &labels.results)?;
    io::save_summary(&out.join("summary.json"), &labels.summary)?;
    let prov = Provenance {
        config_hash: config_hash(&lc),
        seed: lc.seed,
        gamma_mm: lc.gamma_mm,
        lambda: lc.lambda,
        alpha_max_deg: lc.alpha_max_deg,
        intensity_threshold: split.map(|s| s.threshold),
    };
    io::save_label_runs(&out.join("labels.jsonl"), &prov, &ids.iter().copied().zip(&labels.masks).collect::<Vec<_>>())?;
    let s = &labels.summary;
    println!(
        "{} frames: {} accepted, {} rejected, {} skipped",
        s.frames, s.accepted, s.rejected, s.skipped
    );
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs, cfg: &Config, out: &Path, workers: usize) -> Result<()> {
    let sigmas = a.sigmas.clone().unwrap_or_else(|| cfg.sigmas_mm.clone());
    if sigmas.is_empty() || sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::domain("sigmas must be positive"));
    }
    let bundle = io::load_sweep(&a.sweep)?;
    let ids = frame_ids(&bundle);
    let wrap = |masks: Vec<LabelMask>| -> Vec<FrameMask> {
        ids.iter().zip(masks).map(|(&frame_id, mask)| FrameMask { frame_id, mask }).collect()
    };
    let pred = wrap(io::load_masks(&a.pred, &ids)?);
    let truth = wrap(io::load_masks(&a.truth, &ids)?);
    let images: Vec<_> = bundle.frames.iter().map(|f| f.image.clone()).collect();
    let threshold = match a.threshold {
        Some(t) => t,
        None => otsu_threshold(&label_histogram(truth.iter().map(|t| &t.mask).zip(&images)))?,
    };
    let report = in_pool(workers, || evaluate(&pred, &truth, &images, &bundle.grid, &sigmas, IntensitySplit { threshold }))?;
    std::fs::create_dir_all(out)?;
    let _lock = DirLock::acquire(out)?;
    io::write_json(&out.join("eval_report.json"), &report)?;
    std::fs::write(out.join("eval_report.csv"), report.to_csv())?;
    for agg in report.aggregate.iter().filter(|a| a.class == crate::metrics::ClassFilter::All) {
        println!(
            "sigma {} mm: acc {} com {} f {}",
            agg.sigma_mm,
            fmt_opt(agg.accuracy),
            fmt_opt(agg.completeness),
            fmt_opt(agg.f1)
        );
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn stats(a: &StatsArgs, out: &Path) -> Result<()> {
    let records = rating::read_ratings(&a.ratings)?;
    let key = BlindingKey::load(&a.key)?;
    let s = rating_stats(&records, &key, a.m)?;
    std::fs::create_dir_all(out)?;
    let _lock = DirLock::acquire(out)?;
    io::write_json(&out.join("rating_stats.json"), &s)?;
    for m in &s.methods {
        println!("{}: mean {:.3} over {}", m.method, m.mean, m.n);
    }
    for c in &s.comparisons {
        match (c.p_value, c.p_adjusted, &c.error) {
            (Some(p), Some(q), _) => println!("{} vs {}: p {p:.4}, adjusted {q:.4}", c.a, c.b),
            (_, _, Some(e)) => println!("{} vs {}: {e}", c.a, c.b),
            _ => {}
        }
    }
    Ok(())
}

fn rate_build(a: &RateBuildArgs, seed: u64, out: &Path) -> Result<()> {
    let bundle = io::load_sweep(&a.sweep)?;
    let n = bundle.frames.len();
    let mut picked: Vec<usize> = match a.frames {
        Some(k) if k < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::index::sample(&mut rng, n, k).into_vec()
        }
        _ => (0..n).collect(),
    };
    picked.sort_unstable();
    let ids: Vec<u32> = picked.iter().map(|&i| bundle.frames[i].id).collect();
    let frames: Vec<RatingFrame> = picked
        .iter()
        .map(|&i| RatingFrame {
            frame_id: bundle.frames[i].id,
            image: bundle.frames[i].image.clone(),
        })
        .collect();
    let methods = a
        .methods
        .iter()
        .map(|(name, dir)| {
            let masks = io::load_masks(dir, &ids)?;
            Ok(MethodMasks {
                name: name.clone(),
                masks: ids.iter().copied().zip(masks).collect::<BTreeMap<_, _>>(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let built = build_rating_session(&frames, &methods, bundle.grid.sx, &a.rater, seed)?;
    std::fs::create_dir_all(out)?;
    let _lock = DirLock::acquire(out)?;
    let sid = built.session.session_id.clone();
    let dir = built.save(out, &out.join("keys").join(format!("{sid}.json")))?;
    println!("session {sid}: {} items -> {}", built.session.items.len(), dir.display());
    Ok(())
}

fn rate_serve(a: &RateServeArgs, workers: usize) -> Result<()> {
    let state = AppState::load(&a.sessions, a.ui.clone())?;
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    if workers > 0 {
        rt.worker_threads(workers);
    }
    let rt = rt.enable_all().build()?;
    let addr = SocketAddr::new(a.host, a.port);
    println!("serving {} session(s) on http://{addr}", state.session_ids().len());
    rt.block_on(rating::serve(state, addr))
}
