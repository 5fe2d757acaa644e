use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use morphline::asymmetry::{asymmetry_report, csv_row, CSV_HEADER};
use morphline::dataset::{
    self, list_images, load_asset, load_manifest, load_pool, write_dataset, write_png, write_sidecar,
    OriginalEntry, RunConfig, Sidecar, WriteOptions, MANIFEST_FILE,
};
use morphline::fusion::{face_merge, MergeOptions, MorphSpec, OpType, Pool};
use morphline::ga::{self, AnonymityMode, GaConfig, GaError, PoolPolicy, ScorerErrorPolicy, Scorers};
use morphline::report::{asymmetry_summary, read_asymmetry_csv, recognition_curves, rejection_curves};
use morphline::scoring::{
    ForgeryScorer, ForgeryStub, Matcher, ScorerBinding, ScoringError, SharpnessCalibration,
    DEFAULT_ANONYMITY_THRESHOLD, DEFAULT_FORGERY_THRESHOLD,
};
use morphline::synth::{synth_corpus, FaceStyle};

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_ADAPTER: u8 = 3;

#[derive(Parser)]
#[command(name = "morphline", version, about = "Genetic face-fusion dataset generator and asymmetry toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a synthetic dataset from drug and healthy face pools.
    Generate(GenerateArgs),
    /// Merge one pair of faces.
    Morph(MorphArgs),
    /// Score left/right facial asymmetry for every image in a directory.
    Asymmetry(AsymmetryArgs),
    /// Rejection and recognition curves from run manifests.
    Stats(StatsArgs),
    /// Render procedural faces with exact landmark sidecars.
    SynthCorpus(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ForgeryStubMode {
    /// Logistic of Laplacian variance.
    Sharpness,
    /// Every candidate is real.
    Accept,
    /// Every candidate is fake.
    Reject,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    OriginalsOnly,
    PreviousGeneration,
    Cumulative,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Gate,
    Posthoc,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnErrorArg {
    Abort,
    Reject,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Healthy,
    Drug,
    Symmetric,
}

#[derive(Args, Clone)]
struct LandmarkArgs {
    /// `sidecar`, `stub`, or `cmd:<command>`.
    #[arg(long, default_value = "sidecar", value_parser = parse_landmarks)]
    landmarks: LandmarkFlag,
    /// Seconds before an external adapter is killed.
    #[arg(long, default_value_t = 60)]
    adapter_timeout: u64,
}

#[derive(Clone, Debug)]
enum LandmarkFlag {
    Sidecar,
    Stub,
    Cmd(String),
}

impl LandmarkFlag {
    fn describe(&self) -> String {
        match self {
            LandmarkFlag::Sidecar => "sidecar".into(),
            LandmarkFlag::Stub => "stub".into(),
            LandmarkFlag::Cmd(c) => format!("cmd:{c}"),
        }
    }
}

fn parse_landmarks(s: &str) -> Result<LandmarkFlag, String> {
    match s {
        "sidecar" => Ok(LandmarkFlag::Sidecar),
        "stub" => Ok(LandmarkFlag::Stub),
        _ => match s.strip_prefix("cmd:") {
            Some(c) if !c.trim().is_empty() => Ok(LandmarkFlag::Cmd(c.to_string())),
            _ => Err("expected `sidecar`, `stub` or `cmd:<command>`".into()),
        },
    }
}

impl LandmarkArgs {
    fn source(&self) -> Result<dataset::LandmarkSource> {
        Ok(match &self.landmarks {
            LandmarkFlag::Sidecar => dataset::LandmarkSource::Sidecar,
            LandmarkFlag::Stub => dataset::LandmarkSource::Detector(ScorerBinding::stub()),
            LandmarkFlag::Cmd(c) => dataset::LandmarkSource::Detector(ScorerBinding::external(
                c.clone(),
                Duration::from_secs(self.adapter_timeout),
            )?),
        })
    }
}

/// Square working side length, `None` for native size.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Resolution(Option<u32>);

fn parse_resolution(s: &str) -> Result<Resolution, String> {
    if s == "native" {
        return Ok(Resolution(None));
    }
    match s.parse::<u32>() {
        Ok(n) if n >= 2 => Ok(Resolution(Some(n))),
        _ => Err("expected `native` or a side length of at least 2".into()),
    }
}

fn parse_unit(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err("expected a number in [0, 1]".into()),
    }
}

fn parse_distance(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err("expected a finite non-negative number".into()),
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    drug_dir: PathBuf,
    #[arg(long)]
    healthy_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Run alpha in tenths (10 = pure drug face).
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u8).range(0..=10))]
    alpha: u8,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    generations: u32,
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u64).range(1..))]
    max_per_gen: u64,
    #[arg(long, env = "MORPHLINE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, conflicts_with = "forgery_stub")]
    forgery_cmd: Option<String>,
    #[arg(long, value_enum, num_args = 0..=1, default_missing_value = "sharpness")]
    forgery_stub: Option<ForgeryStubMode>,
    #[arg(long, conflicts_with = "matcher_stub")]
    matcher_cmd: Option<String>,
    #[arg(long)]
    matcher_stub: bool,
    #[command(flatten)]
    landmarks: LandmarkArgs,
    #[arg(long, default_value_t = DEFAULT_FORGERY_THRESHOLD, value_parser = parse_unit)]
    forgery_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_ANONYMITY_THRESHOLD, value_parser = parse_distance)]
    anonymity_threshold: f64,
    #[arg(long, value_enum, default_value = "gate")]
    anonymity_mode: ModeArg,
    #[arg(long, value_enum, default_value = "previous-generation")]
    pool_policy: PolicyArg,
    #[arg(long, value_enum, default_value = "abort")]
    on_scorer_error: OnErrorArg,
    /// Concurrent candidate evaluations (0 = all cores). Does not change the output.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Working resolution: a square side length or `native`.
    #[arg(long, default_value = "1024", value_parser = parse_resolution)]
    resolution: Resolution,
    /// Label stored in the manifest and used to group curves.
    #[arg(long, default_value = "default")]
    cohort: String,
    /// Further identities the anonymity gate must not leak.
    #[arg(long)]
    extra_gallery_dir: Vec<PathBuf>,
    /// Store asymmetry scores in every manifest record.
    #[arg(long)]
    with_asymmetry: bool,
}

#[derive(Args)]
struct MorphArgs {
    /// Drug-side face.
    #[arg(long)]
    a: PathBuf,
    /// Healthy-side face.
    #[arg(long)]
    b: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=10))]
    alpha: u8,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    landmarks: LandmarkArgs,
}

#[derive(Args)]
struct AsymmetryArgs {
    /// Image directory, or a generated dataset containing manifest.json.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    landmarks: LandmarkArgs,
}

#[derive(Args)]
struct StatsArgs {
    /// Manifest paths or glob patterns.
    #[arg(required = true)]
    manifests: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Asymmetry CSV of the before cohort.
    #[arg(long, requires = "after")]
    before: Option<PathBuf>,
    /// Asymmetry CSV of the after cohort.
    #[arg(long, requires = "before")]
    after: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, env = "MORPHLINE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "healthy")]
    style: StyleArg,
    /// Square side length in pixels.
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u32).range(16..))]
    size: u32,
}

/// Errors that are the caller's fault rather than the input data's.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    let adapter = err.chain().any(|e| {
        e.downcast_ref::<ScoringError>().is_some_and(ScoringError::is_adapter_failure)
            || matches!(e.downcast_ref::<GaError>(), Some(GaError::Scoring(s)) if s.is_adapter_failure())
    });
    if adapter {
        EXIT_ADAPTER
    } else if err.chain().any(|e| e.is::<Usage>() || matches!(e.downcast_ref::<GaError>(), Some(GaError::InvalidConfig(_)))) {
        EXIT_USAGE
    } else {
        EXIT_INPUT
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Morph(a) => morph(a),
        Command::Asymmetry(a) => asymmetry(a),
        Command::Stats(a) => stats(a),
        Command::SynthCorpus(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn generate(args: GenerateArgs) -> Result<()> {
    let timeout = Duration::from_secs(args.landmarks.adapter_timeout);
    let (forgery, forgery_desc) = match (&args.forgery_cmd, args.forgery_stub.unwrap_or(ForgeryStubMode::Sharpness)) {
        (Some(cmd), _) => (ForgeryScorer::external(ScorerBinding::external(cmd.clone(), timeout)?), format!("cmd:{cmd}")),
        (None, ForgeryStubMode::Sharpness) => {
            let cal = SharpnessCalibration::default();
            (
                ForgeryScorer::stub(ForgeryStub::Sharpness(cal)),
                format!("stub:sharpness(center={},scale={})", cal.center, cal.scale),
            )
        }
        (None, ForgeryStubMode::Accept) => (ForgeryScorer::stub(ForgeryStub::Fixed(1.0)), "stub:accept".into()),
        (None, ForgeryStubMode::Reject) => (ForgeryScorer::stub(ForgeryStub::Fixed(0.0)), "stub:reject".into()),
    };
    let (matcher, matcher_desc) = match &args.matcher_cmd {
        Some(cmd) => (
            Matcher {
                binding: ScorerBinding::external(cmd.clone(), timeout)?,
            },
            format!("cmd:{cmd}"),
        ),
        None => (Matcher::stub(), "stub:luma16".to_string()),
    };

    let cfg = GaConfig {
        alpha: MorphSpec::Tenths(args.alpha),
        max_g: args.generations,
        max_i: args.max_per_gen as usize,
        seed: args.seed,
        forgery_threshold: args.forgery_threshold,
        anonymity_threshold: args.anonymity_threshold,
        anonymity_mode: match args.anonymity_mode {
            ModeArg::Gate => AnonymityMode::Gate,
            ModeArg::Posthoc => AnonymityMode::Posthoc,
        },
        pool_policy: match args.pool_policy {
            PolicyArg::OriginalsOnly => PoolPolicy::OriginalsOnly,
            PolicyArg::PreviousGeneration => PoolPolicy::PreviousGeneration,
            PolicyArg::Cumulative => PoolPolicy::Cumulative,
        },
        on_scorer_error: match args.on_scorer_error {
            OnErrorArg::Abort => ScorerErrorPolicy::Abort,
            OnErrorArg::Reject => ScorerErrorPolicy::Reject,
        },
        jobs: args.jobs,
        ..GaConfig::default()
    };
    cfg.validate()?;

    let source = args.landmarks.source()?;
    let drug = load_pool(&args.drug_dir, &source, args.resolution.0, Pool::DrugOriginal)?;
    let healthy = load_pool(&args.healthy_dir, &source, args.resolution.0, Pool::HealthyGan)?;
    let mut extra = Vec::new();
    for dir in &args.extra_gallery_dir {
        extra.extend(load_pool(dir, &source, args.resolution.0, Pool::DrugOriginal)?);
    }
    let mut seen = std::collections::BTreeSet::new();
    for a in drug.iter().chain(&healthy) {
        if !seen.insert(a.id.as_str()) {
            bail!("duplicate face id `{}` across the drug and healthy pools", a.id);
        }
    }

    let originals = file_entries(&args.drug_dir, &drug, Pool::DrugOriginal)?
        .into_iter()
        .chain(file_entries(&args.healthy_dir, &healthy, Pool::HealthyGan)?)
        .collect::<Vec<_>>();
    let scorers = Scorers { forgery, matcher };
    let result = ga::run_evolution(&cfg, &drug, &healthy, &extra, &scorers)?;
    let config = RunConfig {
        cohort: args.cohort,
        resolution: args.resolution.0,
        forgery_scorer: forgery_desc,
        matcher: matcher_desc,
        landmarks: args.landmarks.landmarks.describe(),
        ga: cfg,
    };
    let path = write_dataset(
        &args.out,
        config,
        &originals,
        &result,
        WriteOptions {
            with_asymmetry: args.with_asymmetry,
        },
    )?;
    for g in &result.generations {
        let s = g.state;
        eprintln!(
            "generation {}: accepted {} of {} (forgery {}, recognized {}, no face {})",
            s.generation_index, s.accepted, s.attempted, s.rejected_forgery, s.rejected_recognized, s.rejected_no_face
        );
    }
    if let Some(g) = result.terminated_early {
        eprintln!("stopped before generation {g}: no survivors to breed from");
    }
    println!("{}", path.display());
    Ok(())
}

fn file_entries(dir: &Path, assets: &[morphline::fusion::FaceAsset], pool: Pool) -> Result<Vec<OriginalEntry>> {
    let files = list_images(dir)?;
    Ok(files
        .iter()
        .zip(assets)
        .map(|(f, a)| OriginalEntry {
            id: a.id.clone(),
            pool,
            file: f.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        })
        .collect())
}

fn morph(args: MorphArgs) -> Result<()> {
    let source = args.landmarks.source()?;
    let a = load_asset(&args.a, &source, None, Pool::DrugOriginal)?;
    let b = load_asset(&args.b, &source, None, Pool::HealthyGan)?;
    let id = args
        .out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "morph".into());
    let m = face_merge(&a, &b, MorphSpec::Tenths(args.alpha), OpType::Crossover, id, MergeOptions::default())?;
    write_png(&args.out, &m.raster)?;
    let name = args.out.file_name().unwrap_or_default().to_string_lossy().into_owned();
    write_sidecar(&dataset::sidecar_path(&args.out), &Sidecar::from_landmarks(name, &m.landmarks))?;
    Ok(())
}

fn asymmetry(args: AsymmetryArgs) -> Result<()> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let manifest_path = args.dir.join(MANIFEST_FILE);
    let mut rows = 0usize;
    if manifest_path.is_file() {
        let m = load_manifest(&manifest_path)?;
        for r in &m.records {
            let asset = dataset::load_record(&manifest_path, r)?;
            let rep = asymmetry_report(&asset.raster, &asset.landmarks).with_context(|| r.file.clone())?;
            out.push_str(&csv_row(&r.id, r.generation, Some(r.alpha_tenths), &rep));
            out.push('\n');
            rows += 1;
        }
    } else {
        let source = args.landmarks.source()?;
        for f in list_images(&args.dir)? {
            let asset = load_asset(&f, &source, None, Pool::DrugOriginal)?;
            let rep = asymmetry_report(&asset.raster, &asset.landmarks).with_context(|| f.display().to_string())?;
            out.push_str(&csv_row(&asset.id, 0, None, &rep));
            out.push('\n');
            rows += 1;
        }
    }
    if rows == 0 {
        bail!("{}: no images found", args.dir.display());
    }
    std::fs::write(&args.out, out).with_context(|| args.out.display().to_string())?;
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    let mut paths = Vec::new();
    for pattern in &args.manifests {
        let matches: Vec<PathBuf> = glob::glob(pattern)
            .map_err(|e| Usage(format!("bad pattern `{pattern}`: {e}")))?
            .collect::<Result<_, _>>()?;
        if matches.is_empty() {
            bail!("`{pattern}` matched no manifest");
        }
        paths.extend(matches);
    }
    paths.sort();
    paths.dedup();
    let manifests = paths.iter().map(|p| load_manifest(p)).collect::<Result<Vec<_>, _>>()?;
    std::fs::create_dir_all(&args.out).with_context(|| args.out.display().to_string())?;
    rejection_curves(&manifests)?.write(&args.out)?;
    recognition_curves(&manifests)?.write(&args.out)?;
    if let (Some(b), Some(a)) = (&args.before, &args.after) {
        asymmetry_summary(&read_asymmetry_csv(b)?, &read_asymmetry_csv(a)?)?.write(&args.out)?;
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let (style, prefix) = match args.style {
        StyleArg::Healthy => (FaceStyle::Healthy, "healthy"),
        StyleArg::Drug => (FaceStyle::Drug, "drug"),
        StyleArg::Symmetric => (FaceStyle::Symmetric, "symmetric"),
    };
    std::fs::create_dir_all(&args.out).with_context(|| args.out.display().to_string())?;
    for (i, (img, l)) in synth_corpus(args.n, args.size, args.size, args.seed, style).into_iter().enumerate() {
        let name = format!("{prefix}_{i:03}.png");
        let png = args.out.join(&name);
        write_png(&png, &img)?;
        write_sidecar(&dataset::sidecar_path(&png), &Sidecar::from_landmarks(name, &l))?;
    }
    Ok(())
}
