//! End-to-end repair driver: inventory, screening, rate estimation,
//! search, filtering, merge, and extraction over one image.
//!
//! Per-unit failures never abort a run; they are recorded and reflected in
//! the exit policy (`all_repaired`). Only an unreadable superblock is fatal.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::merge::{merge_targets, subset_sum_filter, TernaryBuffer};
use crate::report::{
    AmbiguityRow, Bound, FileReport, FileStatus, FragmentReport, MaskReport, RateReport,
    RatioLevel, Ratios, RepairReport, SCHEMA_VERSION,
};
use crate::search::{
    prefix_limit, repair_1flip, repair_2flip, FlipModel, SearchConfig, SearchError, Shard, Target,
};
use crate::squashfs::{
    fragment_units, parse_image, scan_metadata_units, FileEntry, FilePart, SquashError, Superblock,
    Unit, UnitKind,
};
use crate::stats::{
    bytes_per_flip, expected_k_flip_count, rate_interval, solve_rate, variance_t, LengthUnit,
};
use crate::zlib::{Inflater, VerdictStatus};
use crate::{content_id, flip_bit};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("superblock: {0}")]
    Superblock(SquashError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    /// Strongest model allowed. The cheap 1-flip sweep always runs first;
    /// 2-flip only when it comes up empty and this permits it.
    pub model: FlipModel,
    pub shard: Shard,
    pub checkpoint_dir: Option<PathBuf>,
    /// Pause 2-flip searches after roughly this many candidates.
    pub candidate_budget: Option<u64>,
    pub flush_interval: Duration,
    pub length_unit: LengthUnit,
    /// Two-sided tail probability for the rate interval.
    pub tail: f64,
    /// Metadata repair-and-reparse attempts before degrading to a
    /// header-scan inventory.
    pub max_metadata_rounds: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            model: FlipModel::OneFlip,
            shard: Shard::default(),
            checkpoint_dir: None,
            candidate_budget: None,
            flush_interval: Duration::from_secs(10),
            length_unit: LengthUnit::Bits,
            tail: 0.01,
            max_metadata_rounds: 4,
        }
    }
}

/// Everything known about one unit after screening, search, and merge.
#[derive(Debug, Clone)]
pub struct UnitOutcome {
    /// SHA-256 of the on-disk bytes as found (pre-repair). Empty when the
    /// unit lies outside the image.
    pub id: String,
    /// Strict oracle verdict status and consumed count; None for stored
    /// units, which carry no checksum.
    pub baseline: Option<(VerdictStatus, usize)>,
    pub corrupt: bool,
    pub model: Option<FlipModel>,
    pub prefix_limit: Option<usize>,
    pub shards_completed: u32,
    pub shard_count: u32,
    pub candidates_tested: u64,
    pub completed: bool,
    pub escalated: bool,
    pub targets_pre_filter: usize,
    /// Search targets; raw until `resolve_outcomes` filters them.
    pub targets: Vec<Target>,
    /// Three-valued decompressed content; None when the unit is corrupt
    /// and no usable target survived.
    pub ternary: Option<TernaryBuffer>,
}

impl UnitOutcome {
    fn empty() -> Self {
        UnitOutcome {
            id: String::new(),
            baseline: None,
            corrupt: false,
            model: None,
            prefix_limit: None,
            shards_completed: 0,
            shard_count: 0,
            candidates_tested: 0,
            completed: true,
            escalated: false,
            targets_pre_filter: 0,
            targets: Vec::new(),
            ternary: None,
        }
    }
}

/// Baseline verdict for one unit. Stored units are taken as-is; compressed
/// units are corrupt unless the strict oracle accepts them and the payload
/// length matches the format's expectation.
pub fn screen_unit(image: &[u8], unit: &Unit, inf: &mut Inflater) -> UnitOutcome {
    let mut o = UnitOutcome::empty();
    let end = unit.start + unit.len as u64;
    if end > image.len() as u64 {
        o.corrupt = true;
        return o;
    }
    let raw = &image[unit.start as usize..end as usize];
    o.id = content_id(raw);
    if !unit.compressed {
        o.ternary = Some(TernaryBuffer::from_bytes(raw));
        return o;
    }
    let v = inf.check_strict(raw, unit.max_len as usize);
    o.baseline = Some((v.status, v.consumed));
    let length_ok = match (unit.expected_len, &v.payload) {
        (Some(e), Some(p)) => p.len() == e as usize,
        (Some(_), None) => false,
        (None, _) => true,
    };
    if v.is_valid() && length_ok {
        o.ternary = Some(TernaryBuffer::from_bytes(v.payload.as_ref().unwrap()));
    } else {
        o.corrupt = true;
    }
    o
}

/// Runs the flip search for a corrupt unit and records the raw result.
/// 1-flip runs first; 2-flip only if allowed and needed.
pub fn search_unit(
    image: &[u8],
    unit: &Unit,
    opts: &PipelineOptions,
    o: &mut UnitOutcome,
) -> Result<(), SearchError> {
    let end = unit.start + unit.len as u64;
    if end > image.len() as u64 || unit.len == 0 {
        return Ok(()); // nothing searchable; stays unrepaired
    }
    let raw = &image[unit.start as usize..end as usize];
    let max_len = unit.max_len as usize;
    let mut inf = Inflater::new();
    let (_, limit) = prefix_limit(raw, max_len, &mut inf);
    o.prefix_limit = Some(limit);
    let one = match repair_1flip(raw, max_len, limit, &mut inf) {
        Ok(set) => set,
        // Valid stream with a wrong decompressed length: the flip model
        // has nothing to offer, leave it unrepaired.
        Err(SearchError::BaselineValid) => return Ok(()),
        Err(e) => return Err(e),
    };
    if !one.targets.is_empty() || opts.model == FlipModel::OneFlip {
        o.model = Some(FlipModel::OneFlip);
        o.candidates_tested = one.candidates_tested;
        o.completed = true;
        o.shards_completed = 1;
        o.shard_count = 1;
        o.targets = one.targets;
        return Ok(());
    }
    let config = SearchConfig {
        shard: opts.shard,
        checkpoint_dir: opts.checkpoint_dir.clone(),
        flush_interval: opts.flush_interval,
        candidate_budget: opts.candidate_budget,
    };
    let two = repair_2flip(raw, max_len, limit, &config)?;
    o.model = Some(FlipModel::TwoFlip);
    o.candidates_tested = one.candidates_tested + two.candidates_tested;
    o.completed = two.completed;
    o.shards_completed = u32::from(two.completed);
    o.shard_count = opts.shard.count;
    o.targets = two.targets;
    Ok(())
}

/// Applies the exact-length filter, the file-sum (subset-sum) escalation,
/// and the three-valued merge to raw search results.
pub fn resolve_outcomes(units: &[Unit], files: &[FileEntry], outcomes: &mut [UnitOutcome]) {
    // Exact-length filter. `unpinned` marks outcomes whose admissible
    // length is still open: either the filter wiped every target, or the
    // format pins no length and the targets disagree.
    let mut unpinned = vec![false; outcomes.len()];
    for (i, o) in outcomes.iter_mut().enumerate() {
        if !o.corrupt {
            continue;
        }
        o.targets_pre_filter = o.targets.len();
        if o.targets.is_empty() {
            continue;
        }
        match units[i].expected_len {
            Some(e) => {
                let keep: Vec<Target> = o
                    .targets
                    .iter()
                    .filter(|t| t.payload.len() == e as usize)
                    .cloned()
                    .collect();
                if keep.is_empty() {
                    unpinned[i] = true;
                } else {
                    o.targets = keep;
                }
            }
            None => {
                let mut lens: Vec<usize> = o.targets.iter().map(|t| t.payload.len()).collect();
                lens.sort_unstable();
                lens.dedup();
                if lens.len() > 1 && units[i].kind != UnitKind::Metadata {
                    unpinned[i] = true;
                }
            }
        }
    }

    // File-sum escalation: candidate payload lengths of unpinned units
    // must combine with the file's other part lengths to its exact size.
    for f in files {
        let mut sets: Vec<Vec<u64>> = Vec::with_capacity(f.parts.len());
        let mut open: Vec<Option<usize>> = Vec::with_capacity(f.parts.len());
        let mut involved = false;
        let mut feasible = true;
        for part in &f.parts {
            match *part {
                FilePart::Sparse { len } => {
                    sets.push(vec![len as u64]);
                    open.push(None);
                }
                FilePart::Unit { unit, offset, len } => {
                    if unpinned[unit] {
                        // The sum constraint needs the part to cover the
                        // whole candidate payload.
                        if offset != 0 {
                            feasible = false;
                            break;
                        }
                        involved = true;
                        let mut lens: Vec<u64> = outcomes[unit]
                            .targets
                            .iter()
                            .map(|t| t.payload.len() as u64)
                            .collect();
                        lens.sort_unstable();
                        lens.dedup();
                        sets.push(lens);
                        open.push(Some(unit));
                    } else {
                        if outcomes[unit].corrupt && outcomes[unit].targets.is_empty() {
                            feasible = false; // lost part, sum unresolvable
                            break;
                        }
                        sets.push(vec![len as u64]);
                        open.push(None);
                    }
                }
            }
        }
        if !involved || !feasible || sets.len() > 64 {
            continue;
        }
        for idx in open.iter().flatten() {
            outcomes[*idx].escalated = true;
        }
        let Ok(tuples) = subset_sum_filter(&sets, f.file_size) else { continue };
        for (pos, idx) in open.iter().enumerate() {
            let Some(ui) = idx else { continue };
            let allowed: BTreeSet<u64> = tuples.iter().map(|t| t[pos]).collect();
            let o = &mut outcomes[*ui];
            o.targets.retain(|t| allowed.contains(&(t.payload.len() as u64)));
            unpinned[*ui] = false;
        }
    }

    // Targets that never found an admissible length are dropped.
    for (i, o) in outcomes.iter_mut().enumerate() {
        if unpinned[i] {
            o.targets.clear();
        }
    }

    // Merge survivors into three-valued content. Equal lengths are
    // guaranteed for filtered units; unfiltered disagreements (possible
    // for metadata units) stay unmerged.
    for o in outcomes.iter_mut() {
        if o.corrupt && !o.targets.is_empty() {
            let payloads: Vec<Vec<u8>> = o.targets.iter().map(|t| t.payload.clone()).collect();
            o.ternary = merge_targets(&payloads).ok();
        }
    }
}

/// One recovered file, in both extreme variants, plus its mask.
#[derive(Debug, Clone)]
pub struct ExtractedFile {
    pub path: String,
    pub all_true: Vec<u8>,
    pub all_false: Vec<u8>,
    pub mask: MaskReport,
}

/// Extraction products and per-file accounting.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub files: Vec<FileReport>,
    pub outputs: Vec<ExtractedFile>,
    pub ambiguous: Vec<AmbiguityRow>,
    pub ratios: Ratios,
    pub files_corrupt: usize,
    pub files_repaired: usize,
}

/// Builds per-file content from resolved outcomes and accounts recovery
/// at bit, byte, and file granularity.
pub fn assemble(files: &[FileEntry], outcomes: &[UnitOutcome]) -> Assembly {
    let mut reports = Vec::with_capacity(files.len());
    let mut outputs = Vec::new();
    let mut ambiguous = Vec::new();
    let (mut bit_base, mut bit_rep, mut byte_base, mut byte_rep) = (0u64, 0u64, 0u64, 0u64);
    let (mut total_bits, mut total_bytes) = (0u64, 0u64);
    let (mut clean_files, mut determinate_files) = (0u64, 0u64);
    let (mut files_corrupt, mut files_repaired) = (0usize, 0usize);

    for f in files {
        let mut tern = TernaryBuffer::new();
        let mut lost = false;
        let mut touched = false;
        let mut baseline_bytes = 0u64;
        let mut corrupt_units: BTreeSet<usize> = BTreeSet::new();
        for part in &f.parts {
            match *part {
                FilePart::Sparse { len } => {
                    tern.push_zeros(len as usize);
                    baseline_bytes += len as u64;
                }
                FilePart::Unit { unit, offset, len } => {
                    let o = &outcomes[unit];
                    if o.corrupt {
                        touched = true;
                        corrupt_units.insert(unit);
                    } else {
                        baseline_bytes += len as u64;
                    }
                    let need = offset as usize + len as usize;
                    match &o.ternary {
                        Some(t) if t.len() >= need => tern.push_slice(t, offset as usize, len as usize),
                        _ => {
                            lost = true;
                            tern.push_unknown(len as usize);
                        }
                    }
                }
            }
        }
        let indet_bits = tern.indeterminate_bits();
        let indet_bytes = tern.indeterminate_bytes();
        let status = if lost {
            FileStatus::Lost
        } else if indet_bits > 0 {
            FileStatus::Ambiguous
        } else if touched {
            FileStatus::Repaired
        } else {
            FileStatus::Clean
        };
        let runs = tern.indeterminate_runs();

        total_bits += 8 * f.file_size;
        total_bytes += f.file_size;
        bit_base += 8 * baseline_bytes;
        byte_base += baseline_bytes;
        bit_rep += 8 * f.file_size - indet_bits as u64;
        byte_rep += f.file_size - indet_bytes as u64;
        if status == FileStatus::Clean {
            clean_files += 1;
        }
        if matches!(status, FileStatus::Clean | FileStatus::Repaired) {
            determinate_files += 1;
        }
        if touched {
            files_corrupt += 1;
            if status == FileStatus::Repaired {
                files_repaired += 1;
            }
        }

        for &ui in &corrupt_units {
            let o = &outcomes[ui];
            if o.targets.len() != 1 {
                let (ib, iby) = match &o.ternary {
                    Some(t) => (t.indeterminate_bits(), t.indeterminate_bytes()),
                    None => (0, 0),
                };
                ambiguous.push(AmbiguityRow {
                    file: f.path.clone(),
                    fragment_id: o.id.clone(),
                    n_targets: o.targets.len(),
                    indeterminate_bits: ib,
                    indeterminate_bytes: iby,
                });
            }
        }

        let (sha_t, sha_f) = if lost {
            (None, None)
        } else {
            let all_true = tern.all_true();
            let all_false = tern.all_false();
            let hashes = (Some(content_id(&all_true)), Some(content_id(&all_false)));
            outputs.push(ExtractedFile {
                path: f.path.clone(),
                all_true,
                all_false,
                mask: MaskReport {
                    schema_version: SCHEMA_VERSION,
                    path: f.path.clone(),
                    len_bytes: f.file_size,
                    indeterminate_bits: indet_bits,
                    indeterminate_bytes: indet_bytes,
                    runs: runs.clone(),
                },
            });
            hashes
        };
        reports.push(FileReport {
            path: f.path.clone(),
            size: f.file_size,
            status,
            indeterminate_bits: indet_bits,
            indeterminate_bytes: indet_bytes,
            mask_runs: runs,
            sha256_all_true: sha_t,
            sha256_all_false: sha_f,
        });
    }

    let ratios = Ratios {
        bits: RatioLevel::new(total_bits, bit_base, bit_rep),
        bytes: RatioLevel::new(total_bytes, byte_base, byte_rep),
        files: RatioLevel::new(files.len() as u64, clean_files, determinate_files),
    };
    Assembly { files: reports, outputs, ambiguous, ratios, files_corrupt, files_repaired }
}

/// Per-unit report rows, in unit (offset) order.
pub fn fragment_rows(units: &[Unit], outcomes: &[UnitOutcome]) -> Vec<FragmentReport> {
    units
        .iter()
        .zip(outcomes)
        .map(|(u, o)| {
            let (ib, iby) = match (&o.ternary, o.corrupt) {
                (Some(t), true) => (t.indeterminate_bits(), t.indeterminate_bytes()),
                (None, true) => {
                    // Lost content: unknown in full, when a length is known.
                    let e = u.expected_len.unwrap_or(0) as usize;
                    (8 * e, e)
                }
                _ => (0, 0),
            };
            let owners: BTreeSet<&str> = u.owners.iter().map(|ow| ow.path.as_str()).collect();
            FragmentReport {
                id: o.id.clone(),
                kind: u.kind,
                start: u.start,
                len: u.len,
                compressed: u.compressed,
                expected_len: u.expected_len,
                owners: owners.into_iter().map(str::to_string).collect(),
                baseline: o.baseline.map(|(s, _)| s),
                consumed: o.baseline.map(|(_, c)| c).unwrap_or(0),
                corrupt: o.corrupt,
                model: o.model,
                prefix_limit: o.prefix_limit,
                shards_completed: o.shards_completed,
                shard_count: o.shard_count,
                candidates_tested: o.candidates_tested,
                completed: o.completed,
                escalated: o.escalated,
                targets_pre_filter: o.targets_pre_filter,
                targets_post_filter: o.targets.len(),
                flip_sets: o.targets.iter().flat_map(|t| t.flip_sets.clone()).collect(),
                indeterminate_bits: ib,
                indeterminate_bytes: iby,
            }
        })
        .collect()
}

/// Corruption-rate block over the compressed units. None when the image
/// has no compressed units to estimate from.
pub fn rate_report(
    units: &[Unit],
    outcomes: &[UnitOutcome],
    tail: f64,
    unit: LengthUnit,
) -> Option<RateReport> {
    let lengths: Vec<u64> =
        units.iter().filter(|u| u.compressed).map(|u| u.len as u64).collect();
    if lengths.is_empty() {
        return None;
    }
    let corrupted = units
        .iter()
        .zip(outcomes)
        .filter(|(u, o)| u.compressed && o.corrupt)
        .count();
    let hoeff = rate_interval(&lengths, corrupted, tail, unit).ok()?;
    let tv = variance_t(&lengths, hoeff.best, tail, unit).ok()?;
    let n = lengths.len() as f64;
    let ch_low = solve_rate(&lengths, (corrupted as f64 - tv).max(0.0), unit).ok()?;
    let ch_high = solve_rate(&lengths, (corrupted as f64 + tv).min(n), unit).ok()?;
    let expected_flip_counts =
        (0..=3).map(|k| expected_k_flip_count(&lengths, hoeff.best, k, unit)).collect();
    Some(RateReport {
        population: lengths.len(),
        corrupted,
        unit,
        p: hoeff.best,
        hoeffding: Bound { t: hoeff.t, low: hoeff.low, high: hoeff.high },
        chebyshev: Bound { t: tv, low: ch_low, high: ch_high },
        expected_flip_counts,
        bytes_per_flip: if hoeff.best > 0.0 { Some(bytes_per_flip(hoeff.best, unit)) } else { None },
    })
}

/// Best-effort inventory when the file tree is unreadable: metadata blocks
/// by header scan plus the fragment table, owners unknown.
pub fn degraded_units(image: &[u8], sb: &Superblock) -> Vec<Unit> {
    let mut units = scan_metadata_units(image, sb).unwrap_or_default();
    let mut inf = Inflater::new();
    units.extend(fragment_units(image, sb, &mut inf).unwrap_or_default());
    units.sort_by_key(|u| (u.start, u.kind));
    units
}

/// Parses the image, or falls back to the degraded inventory. The bool is
/// true when degraded (no file tree available).
pub fn build_inventory(
    image: &[u8],
) -> Result<(Superblock, Vec<Unit>, Vec<FileEntry>, bool), PipelineError> {
    let sb = Superblock::parse(image).map_err(PipelineError::Superblock)?;
    match parse_image(image) {
        Ok(img) => Ok((img.superblock, img.units, img.files, false)),
        Err(_) => {
            let units = degraded_units(image, &sb);
            Ok((sb, units, Vec::new(), true))
        }
    }
}

#[derive(Debug)]
pub struct PipelineResult {
    pub report: RepairReport,
    pub outputs: Vec<ExtractedFile>,
}

/// Full run over one image. Repairs corrupt metadata blocks in place (and
/// reparses) before walking the tree; data repairs stay in the report and
/// extraction, the image itself is not rewritten.
pub fn run(image_in: &[u8], opts: &PipelineOptions) -> Result<PipelineResult, PipelineError> {
    let sb = Superblock::parse(image_in).map_err(PipelineError::Superblock)?;
    let mut image = image_in.to_vec();

    // Metadata repair loop: a corrupt metablock fails the parse with its
    // header offset; repair that unit, apply the first target's flips to
    // the image, and reparse. Bounded, and never fixes one block twice.
    let mut fixes: BTreeMap<u64, UnitOutcome> = BTreeMap::new();
    let mut degraded = false;
    let mut parsed = None;
    let mut rounds = 0;
    loop {
        match parse_image(&image) {
            Ok(img) => {
                parsed = Some(img);
                break;
            }
            Err(SquashError::CorruptMetablock { offset, .. })
                if rounds < opts.max_metadata_rounds =>
            {
                rounds += 1;
                let start = offset + 2;
                if fixes.contains_key(&start) {
                    degraded = true;
                    break;
                }
                let Ok(units) = scan_metadata_units(&image, &sb) else {
                    degraded = true;
                    break;
                };
                let Some(unit) = units.iter().find(|u| u.start == start) else {
                    degraded = true;
                    break;
                };
                let mut inf = Inflater::new();
                let mut o = screen_unit(&image, unit, &mut inf);
                if !o.corrupt {
                    degraded = true;
                    break;
                }
                search_unit(&image, unit, opts, &mut o)?;
                if o.targets.is_empty() {
                    fixes.insert(start, o);
                    degraded = true;
                    break;
                }
                o.targets_pre_filter = o.targets.len();
                let payloads: Vec<Vec<u8>> =
                    o.targets.iter().map(|t| t.payload.clone()).collect();
                o.ternary = merge_targets(&payloads).ok();
                let flips = o.targets[0].flip_sets[0].clone();
                for f in &flips {
                    flip_bit(&mut image, 8 * start as usize + *f as usize);
                }
                fixes.insert(start, o);
            }
            Err(_) => {
                degraded = true;
                break;
            }
        }
    }

    let (units, files) = match parsed {
        Some(img) => (img.units, img.files),
        None => {
            degraded = true;
            (degraded_units(&image, &sb), Vec::new())
        }
    };

    // Screen everything, then search the corrupt units. Metadata units
    // fixed above report their pre-fix state.
    let mut inf = Inflater::new();
    let mut outcomes: Vec<UnitOutcome> = Vec::with_capacity(units.len());
    for unit in &units {
        if unit.kind == UnitKind::Metadata {
            if let Some(fix) = fixes.remove(&unit.start) {
                outcomes.push(fix);
                continue;
            }
        }
        let mut o = screen_unit(&image, unit, &mut inf);
        if o.corrupt {
            search_unit(&image, unit, opts, &mut o)?;
        }
        outcomes.push(o);
    }
    // A fix for a unit the final inventory no longer lists (possible only
    // in degraded fallbacks) still belongs in the report.
    let mut units = units;
    for (start, fix) in fixes {
        units.push(Unit {
            kind: UnitKind::Metadata,
            start,
            len: 0,
            compressed: true,
            expected_len: None,
            max_len: 8192,
            owners: Vec::new(),
        });
        outcomes.push(fix);
    }

    resolve_outcomes(&units, &files, &mut outcomes);
    let assembly = assemble(&files, &outcomes);
    let rate = rate_report(&units, &outcomes, opts.tail, opts.length_unit);
    let fragments = fragment_rows(&units, &outcomes);
    let all_repaired = outcomes.iter().all(|o| !o.corrupt || !o.targets.is_empty());

    let report = RepairReport {
        schema_version: SCHEMA_VERSION,
        image_len: image_in.len() as u64,
        degraded,
        model: opts.model,
        shard: opts.shard,
        superblock: sb,
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
    Ok(PipelineResult { report, outputs: assembly.outputs })
}
