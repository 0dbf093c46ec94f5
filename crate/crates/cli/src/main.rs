//! squashfix: stage-oriented repair toolkit for bitflip-corrupted zlib
//! SquashFS images.
//!
//! Stages communicate through JSON artifacts, so sharded repair across
//! machines needs nothing beyond a shared directory. Exit codes: 0 when
//! every corrupt unit ended with a nonempty target set, 2 when some unit
//! stayed unrepaired, 1 on operational errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use squashfix_core::content_id;
use squashfix_core::corpus::{
    self, build_image, inject_bernoulli, inject_exact, sample_text, BuildOptions, Injection, Node,
};
use squashfix_core::dump::{classify_segments, entropy_scan, strip_spare, PageGeometry};
use squashfix_core::pipeline::{
    self, assemble, build_inventory, fragment_rows, rate_report, resolve_outcomes, screen_unit,
    search_unit, ExtractedFile, PipelineOptions, UnitOutcome,
};
use squashfix_core::report::{
    render_json, render_ratio_table, InventoryReport, MergeDoc, RepairReport, ScanReport,
    SegmentRow, TargetSetReport, UnitRow, SCHEMA_VERSION,
};
use squashfix_core::search::{estimate_cost, FlipModel, Shard, TargetSet};
use squashfix_core::squashfs::{FileEntry, Unit};
use squashfix_core::stats::LengthUnit;
use squashfix_core::zlib::Inflater;

#[derive(Parser)]
#[command(name = "squashfix", version, about = "Repair bitflip-corrupted zlib SquashFS images")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Remove per-page spare (OOB) areas from a raw NAND dump.
    Strip(StripArgs),
    /// Entropy scan: label null, encrypted-like, and compressed regions.
    Scan(ScanArgs),
    /// Parse the filesystem and list files and compressed units.
    Inventory(InventoryArgs),
    /// Estimate the bitflip rate from corrupt-unit counts.
    Estimate(EstimateArgs),
    /// Search flip repairs for corrupt units; write target-set artifacts.
    Repair(RepairArgs),
    /// Combine repair artifacts across shards and apply length filters.
    Merge(MergeArgs),
    /// Write repaired trees: all_true/, all_false/, and per-file masks.
    Extract(ExtractArgs),
    /// Produce the full repair report (end-to-end when no artifacts given).
    Report(ReportArgs),
    /// Oracle verdict for one candidate extent (debug triage).
    Check(CheckArgs),
    /// Build and corrupt ground-truthed test images.
    Corpus(CorpusArgs),
}

#[derive(Args)]
struct ImageArgs {
    /// Image file (optionally a larger dump containing the filesystem).
    image: PathBuf,
    /// Byte offset of the filesystem within the file (decimal or 0x hex).
    #[arg(long, value_parser = parse_num, default_value = "0")]
    offset: u64,
    /// Byte length of the filesystem; defaults to the rest of the file.
    #[arg(long, value_parser = parse_num)]
    length: Option<u64>,
}

impl ImageArgs {
    fn load(&self) -> Result<Vec<u8>> {
        let raw = fs::read(&self.image)
            .with_context(|| format!("reading {}", self.image.display()))?;
        let start = self.offset as usize;
        if start > raw.len() {
            bail!("--offset 0x{:x} is past the end of the file ({} bytes)", self.offset, raw.len());
        }
        let end = match self.length {
            Some(l) => start
                .checked_add(l as usize)
                .filter(|e| *e <= raw.len())
                .with_context(|| format!("--length 0x{l:x} runs past the end of the file"))?,
            None => raw.len(),
        };
        Ok(raw[start..end].to_vec())
    }
}

#[derive(Args, Clone)]
struct SearchArgs {
    /// Strongest repair model; the 1-flip sweep always runs first.
    #[arg(long, value_parser = parse_model, default_value = "1flip")]
    model: FlipModel,
    /// Shard of the 2-flip space to search, as INDEX/COUNT.
    #[arg(long, value_parser = parse_shard, default_value = "0/1")]
    shard: Shard,
    /// Checkpoint directory for resumable 2-flip searches
    /// (env SQUASHFIX_CHECKPOINT_DIR when omitted).
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Worker threads for the candidate sweep (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Pause 2-flip searches after roughly this many candidates.
    #[arg(long)]
    candidate_budget: Option<u64>,
}

#[derive(Args, Clone, Copy)]
struct RateArgs {
    /// Two-sided tail probability for the rate interval.
    #[arg(long, default_value_t = 0.01)]
    tail: f64,
    /// Exponent convention for per-unit trials.
    #[arg(long, value_parser = parse_unit, default_value = "bits")]
    length_unit: LengthUnit,
}

impl SearchArgs {
    fn pipeline_options(&self, rate: RateArgs) -> PipelineOptions {
        PipelineOptions {
            model: self.model,
            shard: self.shard,
            checkpoint_dir: checkpoint_dir_from(self.checkpoint_dir.clone()),
            candidate_budget: self.candidate_budget,
            length_unit: rate.length_unit,
            tail: rate.tail,
            ..PipelineOptions::default()
        }
    }
}

#[derive(Args)]
struct StripArgs {
    /// Raw dump with spare areas.
    raw: PathBuf,
    /// Full page size including the spare area, e.g. 2112.
    #[arg(long, value_parser = parse_num)]
    page_total: u64,
    /// Data bytes per page, e.g. 2048.
    #[arg(long, value_parser = parse_num)]
    page_data: u64,
    /// Output path for the stripped image.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    img: ImageArgs,
    #[arg(long, default_value_t = squashfix_core::dump::DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = squashfix_core::dump::DEFAULT_STRIDE)]
    stride: usize,
    /// Entropy thresholds as ENCRYPTED_MIN,COMPRESSED_MEAN.
    #[arg(long, value_parser = parse_thresholds)]
    thresholds: Option<squashfix_core::dump::SegmentThresholds>,
    /// Output path (stdout when omitted).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InventoryArgs {
    #[command(flatten)]
    img: ImageArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    img: ImageArgs,
    #[command(flatten)]
    rate: RateArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RepairArgs {
    #[command(flatten)]
    img: ImageArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Directory for target-set artifacts, shared across shards.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct MergeArgs {
    #[command(flatten)]
    img: ImageArgs,
    /// Directory of `repair` artifacts.
    #[arg(long)]
    targets: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    img: ImageArgs,
    /// Directory of `repair` artifacts; searches in-process when omitted.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    /// Output directory (all_true/, all_false/, masks/).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    img: ImageArgs,
    /// Directory of `repair` artifacts; searches in-process when omitted.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    rate: RateArgs,
    /// Report path (stdout when omitted).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write repaired trees here.
    #[arg(long)]
    extract_to: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    img: ImageArgs,
    /// Decompression cap handed to the oracle.
    #[arg(long, value_parser = parse_num, default_value = "131072")]
    max_len: u64,
}

#[derive(Args)]
struct CorpusArgs {
    #[command(subcommand)]
    cmd: CorpusCmd,
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Build a deterministic text-tree image with a ground-truth manifest.
    Build {
        /// Output image path.
        #[arg(long, short)]
        out: PathBuf,
        /// Manifest path.
        #[arg(long)]
        manifest: PathBuf,
        /// Number of regular files.
        #[arg(long, default_value_t = 64)]
        files: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_parser = parse_num, default_value = "8192")]
        block_size: u64,
        /// zlib level for data and metadata.
        #[arg(long, default_value_t = 9)]
        level: u32,
    },
    /// Flip bits in an existing image, recording ground truth.
    Inject {
        /// Image to corrupt in place (or see --out).
        image: PathBuf,
        /// Manifest to append the injections to.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Per-bit flip probability (geometric-gap Bernoulli sampling).
        #[arg(long)]
        p: Option<f64>,
        /// Exact number of flips, uniformly placed.
        #[arg(long)]
        k: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Restrict flips to one unit, by inventory index.
        #[arg(long)]
        fragment: Option<usize>,
        /// Allow flips anywhere in the image, headers included.
        #[arg(long)]
        whole_image: bool,
        /// Write here instead of overwriting the input.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn parse_num(s: &str) -> Result<u64, String> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"));
    match digits {
        Some(d) => u64::from_str_radix(d, 16),
        None => s.parse(),
    }
    .map_err(|e| format!("{e}"))
}

fn parse_model(s: &str) -> Result<FlipModel, String> {
    match s {
        "1flip" => Ok(FlipModel::OneFlip),
        "2flip" => Ok(FlipModel::TwoFlip),
        _ => Err("expected 1flip or 2flip".into()),
    }
}

fn parse_shard(s: &str) -> Result<Shard, String> {
    let (i, m) = s.split_once('/').ok_or("expected INDEX/COUNT, e.g. 0/8")?;
    let index: u32 = i.trim().parse().map_err(|e| format!("{e}"))?;
    let count: u32 = m.trim().parse().map_err(|e| format!("{e}"))?;
    Shard::new(index, count).map_err(|e| e.to_string())
}

fn parse_unit(s: &str) -> Result<LengthUnit, String> {
    match s {
        "bits" => Ok(LengthUnit::Bits),
        "bytes" => Ok(LengthUnit::Bytes),
        _ => Err("expected bits or bytes".into()),
    }
}

fn parse_thresholds(s: &str) -> Result<squashfix_core::dump::SegmentThresholds, String> {
    let (a, b) = s.split_once(',').ok_or("expected ENCRYPTED_MIN,COMPRESSED_MEAN")?;
    let encrypted_min: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let compressed_mean: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if !(0.0..=1.0).contains(&encrypted_min) || !(0.0..=1.0).contains(&compressed_mean) {
        return Err("thresholds are normalized entropies in [0, 1]".into());
    }
    Ok(squashfix_core::dump::SegmentThresholds { encrypted_min, compressed_mean })
}

fn checkpoint_dir_from(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os("SQUASHFIX_CHECKPOINT_DIR").map(PathBuf::from))
}

fn init_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("initializing worker pool")?;
    }
    Ok(())
}

fn emit(out: Option<&Path>, json: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, json).with_context(|| format!("writing {}", p.display()))?;
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Strip(a) => cmd_strip(a),
        Cmd::Scan(a) => cmd_scan(a),
        Cmd::Inventory(a) => cmd_inventory(a),
        Cmd::Estimate(a) => cmd_estimate(a),
        Cmd::Repair(a) => cmd_repair(a),
        Cmd::Merge(a) => cmd_merge(a),
        Cmd::Extract(a) => cmd_extract(a),
        Cmd::Report(a) => cmd_report(a),
        Cmd::Check(a) => cmd_check(a),
        Cmd::Corpus(a) => cmd_corpus(a),
    }
}

fn cmd_strip(a: StripArgs) -> Result<bool> {
    let raw = fs::read(&a.raw).with_context(|| format!("reading {}", a.raw.display()))?;
    let geom = PageGeometry::new(a.page_total as usize, a.page_data as usize)?;
    let stripped = strip_spare(&raw, geom)?;
    eprintln!("stripped {} -> {} bytes ({} pages)", raw.len(), stripped.len(), stripped.len() / geom.data);
    fs::write(&a.out, stripped).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(true)
}

fn cmd_scan(a: ScanArgs) -> Result<bool> {
    let image = a.img.load()?;
    let scan = entropy_scan(&image, a.window, a.stride);
    let segments = classify_segments(&image, &scan, a.thresholds.unwrap_or_default());
    let doc = ScanReport {
        schema_version: SCHEMA_VERSION,
        image_len: image.len() as u64,
        window: a.window,
        stride: a.stride,
        segments: segments.iter().map(SegmentRow::from).collect(),
    };
    for s in &doc.segments {
        eprintln!("0x{:08x}..0x{:08x}  {:<10}  mean {:.4}  min {:.4}", s.start, s.end, format!("{:?}", s.kind).to_lowercase(), s.mean_entropy, s.min_entropy);
    }
    emit(a.out.as_deref(), &render_json(&doc))?;
    Ok(true)
}

fn inventory_doc(image: &[u8]) -> Result<(InventoryReport, Vec<Unit>, Vec<FileEntry>)> {
    let (sb, units, files, degraded) = build_inventory(image)?;
    let doc = InventoryReport {
        schema_version: SCHEMA_VERSION,
        image_len: image.len() as u64,
        degraded,
        superblock: sb,
        files: files.clone(),
        units: units.iter().enumerate().map(|(i, u)| UnitRow::from_unit(i, u)).collect(),
    };
    Ok((doc, units, files))
}

fn cmd_inventory(a: InventoryArgs) -> Result<bool> {
    let image = a.img.load()?;
    let (doc, units, files) = inventory_doc(&image)?;
    if doc.degraded {
        eprintln!("warning: file tree unreadable; header-scan inventory only");
    }
    eprintln!("{} files, {} units", files.len(), units.len());
    emit(a.out.as_deref(), &render_json(&doc))?;
    Ok(true)
}

fn screen_all(image: &[u8], units: &[Unit]) -> Vec<UnitOutcome> {
    let mut inf = Inflater::new();
    units.iter().map(|u| screen_unit(image, u, &mut inf)).collect()
}

fn cmd_estimate(a: EstimateArgs) -> Result<bool> {
    let image = a.img.load()?;
    let (_, units, _) = inventory_doc(&image)?;
    let outcomes = screen_all(&image, &units);
    let Some(rate) = rate_report(&units, &outcomes, a.rate.tail, a.rate.length_unit) else {
        bail!("no compressed units to estimate from");
    };
    eprintln!(
        "{} of {} units corrupt; p = {:.3e} in [{:.3e}, {:.3e}] (hoeffding t = {:.2})",
        rate.corrupted, rate.population, rate.p, rate.hoeffding.low, rate.hoeffding.high, rate.hoeffding.t
    );
    emit(a.out.as_deref(), &render_json(&rate))?;
    Ok(true)
}

fn artifact_name(id: &str, model: FlipModel, shard: Shard) -> String {
    let tag = match model {
        FlipModel::OneFlip => "1flip",
        FlipModel::TwoFlip => "2flip",
    };
    format!("{}-{}-{}of{}.json", &id[..16.min(id.len())], tag, shard.index, shard.count)
}

fn cmd_repair(a: RepairArgs) -> Result<bool> {
    init_jobs(a.search.jobs)?;
    let image = a.img.load()?;
    let (doc, units, _) = inventory_doc(&image)?;
    if doc.degraded {
        eprintln!("warning: degraded inventory; repairing without length expectations");
    }
    fs::create_dir_all(&a.out)?;
    let opts = a.search.pipeline_options(RateArgs { tail: 0.01, length_unit: LengthUnit::Bits });
    let mut inf = Inflater::new();
    let mut complete = true;
    let mut corrupt = 0usize;
    for unit in &units {
        let mut o = screen_unit(&image, unit, &mut inf);
        if !o.corrupt {
            continue;
        }
        corrupt += 1;
        let bound = estimate_cost(unit.len as usize, unit.len as usize, opts.model);
        eprintln!(
            "searching {:?} unit at 0x{:x} ({} bytes, <= {} candidates)",
            unit.kind, unit.start, unit.len, bound.candidates
        );
        let t0 = Instant::now();
        search_unit(&image, unit, &opts, &mut o)?;
        let set = TargetSet {
            model: o.model.unwrap_or(opts.model),
            prefix_limit: o.prefix_limit.unwrap_or(0),
            shard: if o.model == Some(FlipModel::TwoFlip) { opts.shard } else { Shard::default() },
            candidates_tested: o.candidates_tested,
            completed: o.completed,
            targets: o.targets.clone(),
        };
        let doc = TargetSetReport::from_set(&o.id, unit, &set);
        let path = a.out.join(artifact_name(&o.id, set.model, set.shard));
        fs::write(&path, render_json(&doc))?;
        eprintln!(
            "  {} targets, {} candidates in {:.1?} -> {}",
            set.targets.len(),
            set.candidates_tested,
            t0.elapsed(),
            path.display()
        );
        if set.targets.is_empty() {
            complete = false;
        }
    }
    eprintln!("{} corrupt units searched", corrupt);
    Ok(complete)
}

fn load_target_docs(dir: &Path) -> Result<Vec<TargetSetReport>> {
    let mut docs = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let raw = fs::read_to_string(&path)?;
        let doc: TargetSetReport = serde_json::from_str(&raw)
            .with_context(|| format!("parsing {}", path.display()))?;
        docs.push(doc);
    }
    docs.sort_by(|a, b| {
        (&a.fragment_id, a.model as u8, a.shard.index)
            .cmp(&(&b.fragment_id, b.model as u8, b.shard.index))
    });
    Ok(docs)
}

/// Builds per-unit outcomes from screening plus `repair` artifacts:
/// 1-flip docs are identical across shards (take one), 2-flip docs union.
fn outcomes_from_docs(
    image: &[u8],
    units: &[Unit],
    docs: &[TargetSetReport],
) -> Result<Vec<UnitOutcome>> {
    let mut by_id: BTreeMap<&str, Vec<&TargetSetReport>> = BTreeMap::new();
    for d in docs {
        by_id.entry(&d.fragment_id).or_default().push(d);
    }
    let mut outcomes = screen_all(image, units);
    for o in &mut outcomes {
        if !o.corrupt {
            continue;
        }
        let Some(group) = by_id.get(o.id.as_str()) else { continue };
        let ones: Vec<&TargetSetReport> =
            group.iter().copied().filter(|d| d.model == FlipModel::OneFlip).collect();
        let twos: Vec<&TargetSetReport> =
            group.iter().copied().filter(|d| d.model == FlipModel::TwoFlip).collect();
        let one_hit = ones.iter().copied().find(|d| !d.targets.is_empty());
        if let Some(doc) =
            one_hit.or_else(|| if twos.is_empty() { ones.first().copied() } else { None })
        {
            let set = doc.to_set().context("decoding target payload")?;
            o.model = Some(set.model);
            o.prefix_limit = Some(set.prefix_limit);
            o.candidates_tested = set.candidates_tested;
            o.completed = set.completed;
            o.shards_completed = 1;
            o.shard_count = 1;
            o.targets = set.targets;
            continue;
        }
        // Union the 2-flip shards; all docs must agree on the search frame.
        let mut sets = Vec::with_capacity(twos.len());
        for d in &twos {
            sets.push(d.to_set().context("decoding target payload")?);
        }
        let limit = sets[0].prefix_limit;
        if sets.iter().any(|s| s.prefix_limit != limit) {
            bail!("artifacts for unit {} disagree on the search prefix; stale directory?", o.id);
        }
        let count = twos.iter().map(|d| d.shard.count).max().unwrap_or(1);
        let mut seen = BTreeMap::new();
        for d in &twos {
            seen.insert(d.shard.index, d.completed);
        }
        let union = TargetSet::union(&sets);
        o.model = Some(FlipModel::TwoFlip);
        o.prefix_limit = Some(limit);
        o.candidates_tested = union.candidates_tested;
        o.shards_completed = seen.values().filter(|c| **c).count() as u32;
        o.shard_count = count;
        o.completed = o.shards_completed == count && seen.len() as u32 == count;
        o.targets = union.targets;
    }
    Ok(outcomes)
}

/// Shared back half of the staged path: resolve, assemble, and report.
fn staged_report(
    image: &[u8],
    targets_dir: &Path,
    model: FlipModel,
    shard: Shard,
    rate_args: RateArgs,
) -> Result<(RepairReport, Vec<ExtractedFile>)> {
    let (doc, units, files) = inventory_doc(image)?;
    let docs = load_target_docs(targets_dir)?;
    let mut outcomes = outcomes_from_docs(image, &units, &docs)?;
    resolve_outcomes(&units, &files, &mut outcomes);
    let assembly = assemble(&files, &outcomes);
    let rate = rate_report(&units, &outcomes, rate_args.tail, rate_args.length_unit);
    let fragments = fragment_rows(&units, &outcomes);
    let all_repaired = outcomes.iter().all(|o| !o.corrupt || !o.targets.is_empty());
    let report = RepairReport {
        schema_version: SCHEMA_VERSION,
        image_len: image.len() as u64,
        degraded: doc.degraded,
        model,
        shard,
        superblock: doc.superblock,
        rate,
        fragments,
        files: assembly.files,
        ambiguous: assembly.ambiguous,
        ratios: assembly.ratios,
        files_total: files.len(),
        files_corrupt: assembly.files_corrupt,
        files_repaired: assembly.files_repaired,
        all_repaired,
    };
    Ok((report, assembly.outputs))
}

fn cmd_merge(a: MergeArgs) -> Result<bool> {
    let image = a.img.load()?;
    let (_, units, files) = inventory_doc(&image)?;
    let docs = load_target_docs(&a.targets)?;
    let mut outcomes = outcomes_from_docs(&image, &units, &docs)?;
    resolve_outcomes(&units, &files, &mut outcomes);
    let mut sets = Vec::new();
    let mut complete = true;
    for (u, o) in units.iter().zip(&outcomes) {
        if !o.corrupt {
            continue;
        }
        let set = TargetSet {
            model: o.model.unwrap_or(FlipModel::OneFlip),
            prefix_limit: o.prefix_limit.unwrap_or(0),
            shard: Shard::default(),
            candidates_tested: o.candidates_tested,
            completed: o.completed,
            targets: o.targets.clone(),
        };
        eprintln!(
            "unit 0x{:x}: {} -> {} targets{}",
            u.start,
            o.targets_pre_filter,
            o.targets.len(),
            if o.escalated { " (file-sum filter)" } else { "" }
        );
        if o.targets.is_empty() {
            complete = false;
        }
        sets.push(TargetSetReport::from_set(&o.id, u, &set));
    }
    let doc = MergeDoc { schema_version: SCHEMA_VERSION, sets };
    emit(a.out.as_deref(), &render_json(&doc))?;
    Ok(complete)
}

fn dest_path(root: &Path, rel: &str) -> Result<PathBuf> {
    let mut p = root.to_path_buf();
    for comp in rel.split('/') {
        if comp.is_empty() || comp == "." || comp == ".." || comp.contains('\\') {
            bail!("refusing unsafe path from image: {rel:?}");
        }
        p.push(comp);
    }
    Ok(p)
}

fn write_outputs(dir: &Path, outputs: &[ExtractedFile]) -> Result<()> {
    for out in outputs {
        for (tree, bytes) in [("all_true", &out.all_true), ("all_false", &out.all_false)] {
            let path = dest_path(&dir.join(tree), &out.path)?;
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, bytes)?;
        }
        if out.mask.indeterminate_bits > 0 {
            let path = dest_path(&dir.join("masks"), &format!("{}.mask.json", out.path))?;
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, render_json(&out.mask))?;
        }
    }
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Result<bool> {
    init_jobs(a.search.jobs)?;
    let image = a.img.load()?;
    let rate = RateArgs { tail: 0.01, length_unit: LengthUnit::Bits };
    let (report, outputs) = match &a.targets {
        Some(dir) => staged_report(&image, dir, a.search.model, a.search.shard, rate)?,
        None => {
            let res = pipeline::run(&image, &a.search.pipeline_options(rate))?;
            (res.report, res.outputs)
        }
    };
    write_outputs(&a.out, &outputs)?;
    eprintln!(
        "extracted {} of {} files into {} (masks for {})",
        outputs.len(),
        report.files_total,
        a.out.display(),
        outputs.iter().filter(|o| o.mask.indeterminate_bits > 0).count()
    );
    Ok(report.all_repaired)
}

fn cmd_report(a: ReportArgs) -> Result<bool> {
    init_jobs(a.search.jobs)?;
    let image = a.img.load()?;
    let (report, outputs) = match &a.targets {
        Some(dir) => staged_report(&image, dir, a.search.model, a.search.shard, a.rate)?,
        None => {
            let res = pipeline::run(&image, &a.search.pipeline_options(a.rate))?;
            (res.report, res.outputs)
        }
    };
    if let Some(dir) = &a.extract_to {
        write_outputs(dir, &outputs)?;
    }
    eprintln!(
        "files: {} total, {} corrupt, {} fully repaired{}",
        report.files_total,
        report.files_corrupt,
        report.files_repaired,
        if report.degraded { " (degraded: no file tree)" } else { "" }
    );
    eprint!("{}", render_ratio_table(&report.ratios));
    if let Some(rate) = &report.rate {
        eprintln!(
            "rate: {} of {} units corrupt, p = {:.3e} in [{:.3e}, {:.3e}]",
            rate.corrupted, rate.population, rate.p, rate.hoeffding.low, rate.hoeffding.high
        );
    }
    emit(a.out.as_deref(), &render_json(&report))?;
    Ok(report.all_repaired)
}

fn cmd_check(a: CheckArgs) -> Result<bool> {
    let candidate = a.img.load()?;
    let mut inf = Inflater::new();
    let plain = inf.check(&candidate, a.max_len as usize);
    let strict = inf.check_strict(&candidate, a.max_len as usize);
    let doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "len": candidate.len(),
        "status": plain.status,
        "consumed": plain.consumed,
        "payload_len": plain.payload.as_ref().map(Vec::len),
        "payload_sha256": plain.payload.as_ref().map(|p| content_id(p)),
        "computed_checksum": plain.computed_checksum,
        "stored_checksum": plain.stored_checksum,
        "strict_status": strict.status,
        "strict_consumed": strict.consumed,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(plain.is_valid())
}

fn synth_tree(seed: u64, files: usize) -> Vec<Node> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut root = Vec::new();
    let mut docs = Vec::new();
    let mut lib = Vec::new();
    for i in 0..files {
        let size = rng.gen_range(600..16_000);
        let node = Node::file(&format!("file_{i:03}.txt"), sample_text(seed ^ (i as u64 + 1), size));
        if i % 5 == 0 {
            docs.push(node);
        } else if i % 7 == 0 {
            lib.push(node);
        } else {
            root.push(node);
        }
    }
    if !docs.is_empty() {
        root.push(Node::dir("docs", docs));
    }
    if !lib.is_empty() {
        root.push(Node::dir("lib", lib));
    }
    root.push(Node::symlink("latest", "file_001.txt"));
    root
}

fn cmd_corpus(a: CorpusArgs) -> Result<bool> {
    match a.cmd {
        CorpusCmd::Build { out, manifest, files, seed, block_size, level } => {
            let tree = synth_tree(seed, files);
            let opts = BuildOptions {
                block_size: block_size as u32,
                level,
                ..BuildOptions::default()
            };
            let built = build_image(&tree, &opts)?;
            eprintln!(
                "{} bytes, {} files, {} fragments",
                built.bytes.len(),
                built.manifest.files.len(),
                built.manifest.fragment_count
            );
            fs::write(&out, &built.bytes)?;
            fs::write(&manifest, render_json(&built.manifest))?;
            Ok(true)
        }
        CorpusCmd::Inject { image, manifest, p, k, seed, fragment, whole_image, out } => {
            let mut bytes = fs::read(&image).with_context(|| format!("reading {}", image.display()))?;
            let regions: Vec<(u64, u64)> = if whole_image {
                vec![(0, bytes.len() as u64)]
            } else {
                let (_, units, _) = inventory_doc(&bytes)?;
                let chosen: Vec<&Unit> = match fragment {
                    Some(idx) => {
                        let u = units.get(idx).with_context(|| format!("no unit {idx}"))?;
                        vec![u]
                    }
                    None => units.iter().collect(),
                };
                chosen.iter().map(|u| (u.start, u.len as u64)).collect()
            };
            let bits = match (p, k) {
                (Some(p), None) => inject_bernoulli(&mut bytes, p, seed, &regions)?,
                (None, Some(k)) => inject_exact(&mut bytes, k as usize, seed, &regions)?,
                _ => bail!("exactly one of --p or --k is required"),
            };
            eprintln!("{} flips injected over {} regions", bits.len(), regions.len());
            if let Some(mpath) = manifest {
                let raw = fs::read_to_string(&mpath)?;
                let mut m: corpus::Manifest = serde_json::from_str(&raw)?;
                m.injections.extend(bits.iter().map(|&b| Injection::from_bit(b)));
                fs::write(&mpath, render_json(&m))?;
            }
            fs::write(out.as_deref().unwrap_or(&image), &bytes)?;
            Ok(true)
        }
    }
}
