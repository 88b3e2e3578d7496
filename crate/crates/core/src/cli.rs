//! The `cogcode` command-line tool.
//!
//! Every subcommand reads the run config, works inside its output
//! directory and finally refreshes `run_manifest.json` there, which lists
//! every file under the directory with its SHA-256.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{parse_config, RunConfig};
use crate::dataset::{read_corpus, write_corpus, LabeledWindow};
use crate::error::{Error, Result};
use crate::model::{batch_features, Model, CHECKPOINT_VERSION};
use crate::pipeline::{calibrate_contexts, load_corpus, run_probes, Parts};
use crate::probes::{source_frames, FeatureSource, PROBE_CSV_HEADER};
use crate::quantizer::{bitrate, dm_decode, dm_encode, StepTable, STREAM_VERSION};
use crate::trainer::{csv_header, evaluate, fit, init_state, load_checkpoint, Precision, TrainConfig};

pub const MANIFEST: &str = "run_manifest.json";
const CORPUS_DIR: &str = "corpus";
const TRAIN_DIR: &str = "train";
const PROBES_CSV: &str = "probes.csv";
const EVAL_TEST_CSV: &str = "eval_test.csv";
const QUANT_SUMMARY: &str = "quantized/summary.csv";

#[derive(Parser, Debug)]
#[command(name = "cogcode", version, about = "Two-stage contrastive predictive coding toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint to use (to resume from, for `train`); defaults to the
    /// newest one under `<out>/train`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,
    /// Restrict `probe` to Δ-modulated features.
    #[arg(long)]
    pub quantized: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceArg {
    #[value(name = "c_s")]
    Cs,
    #[value(name = "c_l")]
    Cl,
    #[value(name = "both")]
    Both,
    #[value(name = "z_s")]
    Zs,
    #[value(name = "z_l")]
    Zl,
}

impl From<SourceArg> for FeatureSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Cs => FeatureSource::Cs,
            SourceArg::Cl => FeatureSource::Cl,
            SourceArg::Both => FeatureSource::CsCl,
            SourceArg::Zs => FeatureSource::Zs,
            SourceArg::Zl => FeatureSource::Zl,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize (or cut from WAV) the corpus into <out>/corpus.
    GenData(Common),
    /// Train, writing metrics and checkpoints into <out>/train.
    Train(Common),
    /// Dump features of every window into <out>/features.
    Extract(Common),
    /// Fit and evaluate the configured probes into <out>/probes.csv.
    Probe(Common),
    /// Δ-modulate context features into <out>/quantized.
    Quantize(Common),
    /// Held-out loss and per-step accuracy into <out>/eval_test.csv.
    Eval(Common),
    /// Figure-panel CSVs into <out>/report.
    Report(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::GenData(c) => ("gen-data", c),
            Command::Train(c) => ("train", c),
            Command::Extract(c) => ("extract", c),
            Command::Probe(c) => ("probe", c),
            Command::Quantize(c) => ("quantize", c),
            Command::Eval(c) => ("eval", c),
            Command::Report(c) => ("report", c),
        }
    }
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
/// Usage errors exit with 2; failures print one `error[kind]: message`
/// line and exit with 1.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    configure_threads();
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", error_kind(&e), e.to_string().replace('\n', " | "));
            1
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("HCC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Shape(_) => "shape",
        Error::NonFinite(_) => "non-finite",
        Error::MalformedHeader(_) => "malformed-header",
        Error::UnsupportedEncoding(_) => "unsupported-encoding",
        Error::RateMismatch { .. } => "rate-mismatch",
        Error::Config(_) => "config",
        Error::VersionMismatch { .. } => "version-mismatch",
        Error::Corrupt(_) => "corrupt",
        Error::Truncated(_) => "truncated",
        Error::Checksum { .. } => "checksum",
        Error::Invalid(_) => "invalid",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    args: Common,
}

impl Ctx {
    fn corpus(&self) -> Result<Vec<LabeledWindow>> {
        let dir = self.out.join(CORPUS_DIR);
        if dir.join(crate::dataset::MANIFEST_FILE).is_file() {
            read_corpus(&dir, self.cfg.dataset.synth.sample_rate)
        } else {
            load_corpus(&self.cfg.dataset, self.cfg.model.window_len)
        }
    }

    fn checkpoint_path(&self) -> Result<PathBuf> {
        if let Some(p) = &self.args.checkpoint {
            return Ok(p.clone());
        }
        let dir = self.out.join(TRAIN_DIR);
        let newest = fs::read_dir(&dir)
            .map_err(|_| Error::invalid(format!("no checkpoint given and {} does not exist; run `train` first", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "hcck"))
            .max();
        newest.ok_or_else(|| Error::invalid(format!("no checkpoints in {}", dir.display())))
    }

    fn model(&self) -> Result<Model<f32>> {
        let model: Model<f32> = Model::load(self.checkpoint_path()?)?;
        if model.config() != &self.cfg.model {
            return Err(Error::config("checkpoint model config differs from the run config's model section"));
        }
        Ok(model)
    }
}

fn execute(cmd: &Command) -> Result<()> {
    let (name, args) = cmd.parts();
    let mut cfg = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&out)?;
    let ctx = Ctx { cfg, out, args: args.clone() };
    match cmd {
        Command::GenData(_) => gen_data(&ctx)?,
        Command::Train(_) => train(&ctx)?,
        Command::Extract(_) => extract(&ctx)?,
        Command::Probe(_) => probe(&ctx)?,
        Command::Quantize(_) => quantize(&ctx)?,
        Command::Eval(_) => eval(&ctx)?,
        Command::Report(_) => report(&ctx)?,
    }
    write_manifest(&ctx.out, name, &ctx.cfg)
}

fn gen_data(ctx: &Ctx) -> Result<()> {
    let windows = load_corpus(&ctx.cfg.dataset, ctx.cfg.model.window_len)?;
    write_corpus(ctx.out.join(CORPUS_DIR), &windows)
}

fn train(ctx: &Ctx) -> Result<()> {
    let tc = &ctx.cfg.train;
    if tc.precision == Precision::F64 {
        return train_in::<f64>(ctx, tc);
    }
    train_in::<f32>(ctx, tc)
}

fn train_in<S: crate::numerics::Real>(ctx: &Ctx, tc: &TrainConfig) -> Result<()> {
    let windows = ctx.corpus()?;
    let parts = Parts::split(&windows, ctx.cfg.dataset.split_seed);
    let train: Vec<_> = parts.train.iter().map(|w| &w.window).collect();
    let val: Vec<_> = parts.val.iter().map(|w| &w.window).collect();
    let state = match &ctx.args.checkpoint {
        Some(p) => {
            let s = load_checkpoint::<S>(p)?;
            if s.model.config() != &ctx.cfg.model {
                return Err(Error::config("checkpoint model config differs from the run config's model section"));
            }
            s
        }
        None => init_state::<S>(&ctx.cfg.model, tc)?,
    };
    fit(tc, state, &train, &val, Some(&ctx.out.join(TRAIN_DIR)))?;
    Ok(())
}

fn selected_sources(ctx: &Ctx, default: &[FeatureSource]) -> Vec<FeatureSource> {
    match ctx.args.source {
        Some(s) => vec![s.into()],
        None => default.to_vec(),
    }
}

fn file_stem(s: FeatureSource) -> &'static str {
    match s {
        FeatureSource::CsCl => "both",
        other => other.name(),
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureIndex {
    source: String,
    dim: usize,
    frames_per_window: usize,
    hop: usize,
    window_ids: Vec<usize>,
}

fn extract(ctx: &Ctx) -> Result<()> {
    let model = ctx.model()?;
    let windows = ctx.corpus()?;
    let audio: Vec<_> = windows.iter().map(|w| &w.window).collect();
    let feats = batch_features(&model, &audio)?;
    let dir = ctx.out.join("features");
    fs::create_dir_all(&dir)?;
    let default = if model.config().is_cognitive() { vec![FeatureSource::Cs, FeatureSource::Cl] } else { vec![FeatureSource::Cs] };
    for source in selected_sources(ctx, &default) {
        let mut raw = Vec::new();
        let mut index = FeatureIndex {
            source: source.name().into(),
            dim: 0,
            frames_per_window: 0,
            hop: 0,
            window_ids: windows.iter().map(|w| w.id).collect(),
        };
        for f in &feats {
            let (m, hop) = source_frames(f, source, model.config().frame_ratio())?;
            index = FeatureIndex { dim: m.last_dim(), frames_per_window: m.outer(), hop, ..index };
            for v in m.data() {
                raw.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(dir.join(format!("{}.f32", file_stem(source))), raw)?;
        fs::write(dir.join(format!("{}.json", file_stem(source))), serde_json::to_string_pretty(&index)?)?;
    }
    Ok(())
}

fn probe(ctx: &Ctx) -> Result<()> {
    let model = ctx.model()?;
    let windows = ctx.corpus()?;
    let parts = Parts::split(&windows, ctx.cfg.dataset.split_seed).capped(ctx.cfg.probes.max_windows);
    let wanted: Option<FeatureSource> = ctx.args.source.map(Into::into);
    let specs: Vec<_> = ctx
        .cfg
        .probes
        .specs
        .iter()
        .filter(|s| wanted.is_none_or(|w| s.source == w))
        .filter(|s| !ctx.args.quantized || s.quantized)
        .copied()
        .collect();
    if specs.is_empty() {
        return Err(Error::config("probes.specs: nothing matches the requested source"));
    }
    let results = run_probes(&model, &parts, &specs, &ctx.cfg.probes.options, ctx.cfg.probes.seed)?;
    let mut csv = format!("{PROBE_CSV_HEADER}\n");
    for r in &results {
        let _ = writeln!(csv, "{}", r.csv_row());
    }
    fs::write(ctx.out.join(PROBES_CSV), csv)?;
    Ok(())
}

fn quantize(ctx: &Ctx) -> Result<()> {
    let model = ctx.model()?;
    let windows = ctx.corpus()?;
    let parts = Parts::split(&windows, ctx.cfg.dataset.split_seed);
    let train_audio: Vec<_> = parts.train.iter().map(|w| &w.window).collect();
    let train_feats = batch_features(&model, &train_audio)?;
    let codecs = calibrate_contexts(&train_feats)?;
    let all_feats = batch_features(&model, &windows.iter().map(|w| &w.window).collect::<Vec<_>>())?;
    let sources = selected_sources(ctx, &ctx.cfg.quantizer.sources);
    let rate = windows.first().map_or(16000, |w| w.window.sample_rate) as f64;
    let mut summary = String::from("source,dim,frames,frame_period_ms,payload_bps,amortized_bps,rmse,max_abs_err\n");
    for source in sources {
        let (table, hop): (&StepTable, usize) = match source {
            FeatureSource::Cs => (&codecs.c_s, model.config().short_hop()),
            FeatureSource::Cl => (
                codecs.c_l.as_ref().ok_or_else(|| Error::config("quantizer.sources: c_l needs the cognitive variant"))?,
                model.config().long_hop(),
            ),
            other => return Err(Error::config(format!("quantizer.sources: {other} is not a context source"))),
        };
        let dir = ctx.out.join("quantized").join(source.name());
        fs::create_dir_all(&dir)?;
        let (mut se, mut n, mut max_err, mut frames) = (0.0f64, 0usize, 0.0f64, 0usize);
        for (w, f) in windows.iter().zip(&all_feats) {
            let x = match source {
                FeatureSource::Cs => &f.c_s.frames,
                _ => &f.c_l.as_ref().expect("cognitive model has c_l").frames,
            };
            let bs = dm_encode(x, table)?;
            let y = dm_decode(&bs)?;
            for (a, b) in x.data().iter().zip(y.data()) {
                let e = (*a as f64 - b).abs();
                se += e * e;
                max_err = max_err.max(e);
                n += 1;
            }
            frames = x.outer();
            bs.write(dir.join(format!("{:06}.hccq", w.id)))?;
        }
        let period = hop as f64 / rate;
        let d = table.dims();
        let _ = writeln!(
            summary,
            "{},{d},{frames},{},{},{},{},{}",
            source.name(),
            period * 1000.0,
            bitrate(d, period, false, frames)?,
            bitrate(d, period, true, frames)?,
            (se / n.max(1) as f64).sqrt(),
            max_err
        );
    }
    fs::write(ctx.out.join(QUANT_SUMMARY), summary)?;
    Ok(())
}

fn eval(ctx: &Ctx) -> Result<()> {
    let path = ctx.checkpoint_path()?;
    let state = load_checkpoint::<f32>(&path).or_else(|_| -> Result<_> {
        let model = Model::<f32>::load(&path)?;
        Ok(crate::trainer::TrainState::new(model, 0))
    })?;
    if state.model.config() != &ctx.cfg.model {
        return Err(Error::config("checkpoint model config differs from the run config's model section"));
    }
    let windows = ctx.corpus()?;
    let parts = Parts::split(&windows, ctx.cfg.dataset.split_seed);
    let test: Vec<_> = parts.test.iter().map(|w| &w.window).collect();
    let mut m = evaluate(&state.model, &test, &ctx.cfg.train, ctx.cfg.train.seed ^ 0x7e57)?;
    m.update = state.update;
    let k = ctx.cfg.model.pred_steps;
    fs::write(ctx.out.join(EVAL_TEST_CSV), format!("{}\n{}\n", csv_header(k, false), m.csv_row(k, false)))?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    Ok(lines
        .filter(|l| !l.is_empty())
        .map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(String::from)).collect())
        .collect())
}

fn report(ctx: &Ctx) -> Result<()> {
    let dir = ctx.out.join("report");
    fs::create_dir_all(&dir)?;
    let probes = read_csv(&ctx.out.join(PROBES_CSV))?;
    let panel = |target: &str| {
        let mut s = String::from("source,kind,pooling,dim,train_acc,test_acc\n");
        for r in probes.iter().filter(|r| r["target"] == target && !r["source"].ends_with(":dm")) {
            let _ = writeln!(s, "{},{},{},{},{},{}", r["source"], r["kind"], r["pooling"], r["dim"], r["train_acc"], r["test_acc"]);
        }
        s
    };
    fs::write(dir.join("fig2a_speaker.csv"), panel("long_attr"))?;
    fs::write(dir.join("fig2b_emotion.csv"), panel("long_attr2"))?;
    fs::write(dir.join("fig2c_phoneme.csv"), panel("short_attr"))?;

    let k = ctx.cfg.model.pred_steps;
    let mut fig2d = String::from("k,acc,upper_acc\n");
    if let Some(row) = read_csv(&ctx.out.join(EVAL_TEST_CSV))?.first() {
        for i in 1..=k {
            let _ = writeln!(fig2d, "{i},{},{}", row[&format!("acc_k{i}")], row[&format!("upper_acc_k{i}")]);
        }
    }
    fs::write(dir.join("fig2d_prediction.csv"), fig2d)?;

    let rate = ctx.cfg.dataset.synth.sample_rate as f64;
    let mut fig3 = String::from("source,target,kind,pooling,dim,payload_bps,raw_test_acc,quantized_test_acc\n");
    for q in probes.iter().filter(|r| r["source"].ends_with(":dm")) {
        let base = q["source"].trim_end_matches(":dm");
        let raw = probes
            .iter()
            .find(|r| r["source"] == base && r["target"] == q["target"] && r["kind"] == q["kind"] && r["pooling"] == q["pooling"])
            .map(|r| r["test_acc"].clone())
            .unwrap_or_default();
        let hop = match base {
            "c_l" => ctx.cfg.model.long_hop(),
            _ => ctx.cfg.model.short_hop(),
        };
        let d: usize = q["dim"].parse().map_err(|_| Error::Corrupt(format!("{PROBES_CSV}: bad dim")))?;
        let bps = bitrate(d, hop as f64 / rate, false, 0)?;
        let _ = writeln!(fig3, "{base},{},{},{},{d},{bps},{raw},{}", q["target"], q["kind"], q["pooling"], q["test_acc"]);
    }
    fs::write(dir.join("fig3_quantized.csv"), fig3)?;
    Ok(())
}

#[derive(Serialize, Deserialize, Default)]
struct Manifest {
    runs: Vec<RunEntry>,
    files: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct RunEntry {
    command: String,
    config_hash: String,
    seed: u64,
    versions: BTreeMap<String, String>,
}

fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, root, out)?;
        } else if p != root.join(MANIFEST) {
            let digest = Sha256::digest(fs::read(&p)?);
            let rel = p.strip_prefix(root).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            out.insert(rel, digest.iter().map(|b| format!("{b:02x}")).collect());
        }
    }
    Ok(())
}

fn write_manifest(out: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    let path = out.join(MANIFEST);
    let mut manifest: Manifest = match fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_default(),
        Err(_) => Manifest::default(),
    };
    let versions = BTreeMap::from([
        ("cogcode".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("checkpoint_format".to_string(), CHECKPOINT_VERSION.to_string()),
        ("bitstream_format".to_string(), STREAM_VERSION.to_string()),
    ]);
    manifest.runs.push(RunEntry { command: command.into(), config_hash: cfg.hash(), seed: cfg.train.seed, versions });
    manifest.files.clear();
    walk(out, out, &mut manifest.files)?;
    fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}
