//! Report and artifact documents shared by the pipeline stages.
//!
//! Every document carries a `schema_version`, renders image offsets as hex
//! strings, and contains no timestamps or host-specific fields, so reruns
//! and checkpoint-resumed runs serialize byte-identically.

use serde::{Deserialize, Serialize};

use crate::dump::{Segment, SegmentKind};
use crate::merge::MaskRun;
use crate::search::{FlipModel, Shard, Target, TargetSet};
use crate::squashfs::{FileEntry, Superblock, Unit, UnitKind, UnitOwner};
use crate::stats::LengthUnit;
use crate::zlib::VerdictStatus;

pub const SCHEMA_VERSION: u32 = 1;

/// Offsets serialize as `0x`-prefixed hex so report entries line up with
/// hexdump views of the same image.
pub mod hex_u64 {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("0x{v:x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let raw = String::deserialize(d)?;
        let digits = raw.strip_prefix("0x").unwrap_or(&raw);
        u64::from_str_radix(digits, 16).map_err(D::Error::custom)
    }
}

/// Pretty JSON with a trailing newline; the single serializer all stages
/// use, so artifact bytes are stable across runs.
pub fn render_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Recovery counts at one granularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioLevel {
    pub total: u64,
    /// Recovered with no repair at all (baseline decompression).
    pub baseline: u64,
    /// Determinate after repair and merge.
    pub repaired: u64,
    pub baseline_ratio: f64,
    pub repaired_ratio: f64,
}

impl RatioLevel {
    pub fn new(total: u64, baseline: u64, repaired: u64) -> Self {
        // An empty population is vacuously recovered.
        let ratio = |x: u64| if total == 0 { 1.0 } else { x as f64 / total as f64 };
        RatioLevel {
            total,
            baseline,
            repaired,
            baseline_ratio: ratio(baseline),
            repaired_ratio: ratio(repaired),
        }
    }
}

/// Recovery at bit, byte, and file granularity over all regular files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub bits: RatioLevel,
    pub bytes: RatioLevel,
    pub files: RatioLevel,
}

/// One concentration bound on the corruption rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    /// Two-sided radius in corrupted-unit counts.
    pub t: f64,
    pub low: f64,
    pub high: f64,
}

/// Corruption-rate estimate over the image's compressed units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub population: usize,
    pub corrupted: usize,
    pub unit: LengthUnit,
    /// Rate that makes the expected corrupted-unit count match the
    /// observation exactly.
    pub p: f64,
    /// Distribution-free bound; holds for any flip placement.
    pub hoeffding: Bound,
    /// Variance-based bound; tighter when the tail probability is loose.
    pub chebyshev: Bound,
    /// Expected number of units carrying exactly k flips, k = 0..=3.
    pub expected_flip_counts: Vec<f64>,
    /// None when no corruption was observed (the spacing is unbounded).
    pub bytes_per_flip: Option<f64>,
}

/// Per-unit repair outcome row. Healthy units appear too, with the repair
/// fields zeroed, so the report doubles as a full inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentReport {
    /// SHA-256 of the unit's on-disk bytes as found (pre-repair).
    pub id: String,
    pub kind: UnitKind,
    #[serde(with = "hex_u64")]
    pub start: u64,
    pub len: u32,
    pub compressed: bool,
    pub expected_len: Option<u32>,
    /// Paths of files whose content touches this unit.
    pub owners: Vec<String>,
    /// None for stored units, which carry no checksum to verify.
    pub baseline: Option<VerdictStatus>,
    pub consumed: usize,
    pub corrupt: bool,
    /// Search model that produced the targets, when a search ran.
    pub model: Option<FlipModel>,
    pub prefix_limit: Option<usize>,
    pub shards_completed: u32,
    pub shard_count: u32,
    pub candidates_tested: u64,
    /// False when a candidate budget or missing shards left work undone.
    pub completed: bool,
    /// True when exact-length filtering wiped the targets and the file-sum
    /// filter was consulted.
    pub escalated: bool,
    pub targets_pre_filter: usize,
    pub targets_post_filter: usize,
    /// Flip sets of the surviving targets, in payload order.
    pub flip_sets: Vec<Vec<u32>>,
    pub indeterminate_bits: usize,
    pub indeterminate_bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileStatus {
    /// Every part decompressed at baseline.
    Clean,
    /// Needed repair and came back fully determinate.
    Repaired,
    /// Repaired with indeterminate bits remaining.
    Ambiguous,
    /// Some part's unit has no repair target; content unavailable.
    Lost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileReport {
    pub path: String,
    pub size: u64,
    pub status: FileStatus,
    /// Unknown bits, counting both merge ambiguity and lost units.
    pub indeterminate_bits: usize,
    pub indeterminate_bytes: usize,
    pub mask_runs: Vec<MaskRun>,
    /// Hashes of the two extracted variants; absent for lost files, which
    /// are not extracted.
    pub sha256_all_true: Option<String>,
    pub sha256_all_false: Option<String>,
}

/// One row per (owning file, not-uniquely-repaired unit), mirroring the
/// per-file ambiguity table the text report prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityRow {
    pub file: String,
    pub fragment_id: String,
    pub n_targets: usize,
    pub indeterminate_bits: usize,
    pub indeterminate_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub schema_version: u32,
    #[serde(with = "hex_u64")]
    pub image_len: u64,
    /// True when the file tree was unreadable and repair ran over a
    /// header-scan inventory without length filtering or extraction.
    pub degraded: bool,
    /// Strongest model the run was allowed to use.
    pub model: FlipModel,
    pub shard: Shard,
    pub superblock: Superblock,
    pub rate: Option<RateReport>,
    pub fragments: Vec<FragmentReport>,
    pub files: Vec<FileReport>,
    pub ambiguous: Vec<AmbiguityRow>,
    pub ratios: Ratios,
    pub files_total: usize,
    /// Files touching at least one corrupt unit.
    pub files_corrupt: usize,
    /// Corrupt files that came back fully determinate.
    pub files_repaired: usize,
    /// Every corrupt unit ended with a nonempty target set; drives the
    /// CLI exit code.
    pub all_repaired: bool,
}

/// Plain-text recovery table for stderr summaries.
pub fn render_ratio_table(r: &Ratios) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<6} {:>14} {:>22} {:>22}\n",
        "level", "total", "baseline", "repaired"
    ));
    for (name, l) in [("bits", &r.bits), ("bytes", &r.bytes), ("files", &r.files)] {
        out.push_str(&format!(
            "{:<6} {:>14} {:>14} ({:>6.2}%) {:>14} ({:>6.2}%)\n",
            name,
            l.total,
            l.baseline,
            100.0 * l.baseline_ratio,
            l.repaired,
            100.0 * l.repaired_ratio,
        ));
    }
    out
}

/// Entropy-scan artifact (`scan` stage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema_version: u32,
    #[serde(with = "hex_u64")]
    pub image_len: u64,
    pub window: usize,
    pub stride: usize,
    pub segments: Vec<SegmentRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    #[serde(with = "hex_u64")]
    pub start: u64,
    #[serde(with = "hex_u64")]
    pub end: u64,
    pub kind: SegmentKind,
    pub mean_entropy: f64,
    pub min_entropy: f64,
}

impl From<&Segment> for SegmentRow {
    fn from(s: &Segment) -> Self {
        SegmentRow {
            start: s.start as u64,
            end: s.end as u64,
            kind: s.kind,
            mean_entropy: s.mean_entropy,
            min_entropy: s.min_entropy,
        }
    }
}

/// Unit inventory artifact (`inventory` stage). File parts index into
/// `units` by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryReport {
    pub schema_version: u32,
    #[serde(with = "hex_u64")]
    pub image_len: u64,
    pub degraded: bool,
    pub superblock: Superblock,
    pub files: Vec<FileEntry>,
    pub units: Vec<UnitRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRow {
    pub index: usize,
    pub kind: UnitKind,
    #[serde(with = "hex_u64")]
    pub start: u64,
    pub len: u32,
    pub compressed: bool,
    pub expected_len: Option<u32>,
    pub max_len: u32,
    pub owners: Vec<UnitOwner>,
}

impl UnitRow {
    pub fn from_unit(index: usize, u: &Unit) -> Self {
        UnitRow {
            index,
            kind: u.kind,
            start: u.start,
            len: u.len,
            compressed: u.compressed,
            expected_len: u.expected_len,
            max_len: u.max_len,
            owners: u.owners.clone(),
        }
    }

    pub fn to_unit(&self) -> Unit {
        Unit {
            kind: self.kind,
            start: self.start,
            len: self.len,
            compressed: self.compressed,
            expected_len: self.expected_len,
            max_len: self.max_len,
            owners: self.owners.clone(),
        }
    }
}

/// Raw search result artifact (`repair` stage), one per (unit, shard).
/// Targets are unfiltered; length filtering happens at merge time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSetReport {
    pub schema_version: u32,
    pub fragment_id: String,
    pub kind: UnitKind,
    #[serde(with = "hex_u64")]
    pub start: u64,
    pub len: u32,
    pub model: FlipModel,
    pub prefix_limit: usize,
    pub shard: Shard,
    pub candidates_tested: u64,
    pub completed: bool,
    pub targets: Vec<TargetRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRow {
    pub payload_hex: String,
    pub flip_sets: Vec<Vec<u32>>,
}

impl TargetSetReport {
    pub fn from_set(fragment_id: &str, unit: &Unit, set: &TargetSet) -> Self {
        TargetSetReport {
            schema_version: SCHEMA_VERSION,
            fragment_id: fragment_id.to_string(),
            kind: unit.kind,
            start: unit.start,
            len: unit.len,
            model: set.model,
            prefix_limit: set.prefix_limit,
            shard: set.shard,
            candidates_tested: set.candidates_tested,
            completed: set.completed,
            targets: set
                .targets
                .iter()
                .map(|t| TargetRow { payload_hex: hex::encode(&t.payload), flip_sets: t.flip_sets.clone() })
                .collect(),
        }
    }

    pub fn to_set(&self) -> Result<TargetSet, hex::FromHexError> {
        let mut targets = Vec::with_capacity(self.targets.len());
        for t in &self.targets {
            targets.push(Target { payload: hex::decode(&t.payload_hex)?, flip_sets: t.flip_sets.clone() });
        }
        Ok(TargetSet {
            model: self.model,
            prefix_limit: self.prefix_limit,
            shard: self.shard,
            candidates_tested: self.candidates_tested,
            completed: self.completed,
            targets,
        })
    }
}

/// Consolidated post-filter target sets (`merge` stage): shard artifacts
/// unioned, length filters applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeDoc {
    pub schema_version: u32,
    pub sets: Vec<TargetSetReport>,
}

/// Per-file indeterminacy mask artifact (`extract` stage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    pub schema_version: u32,
    pub path: String,
    pub len_bytes: u64,
    pub indeterminate_bits: usize,
    pub indeterminate_bytes: usize,
    pub runs: Vec<MaskRun>,
}
