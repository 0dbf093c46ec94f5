//! Brute-force bitflip repair against the decompression oracle.
//!
//! A corrupted unit is repaired by trying flip sets: every single bit
//! (1-flip model) or every pair of bits (2-flip model), keeping the
//! candidates the oracle accepts in strict mode. Three facts keep this
//! tractable and exact:
//!
//! - Strict verdicts never examine bits at or past `8 * consumed`, so a
//!   candidate whose flips all land there reproduces the baseline verdict
//!   verbatim. Flips need only be tried inside the consumed prefix
//!   ([`prefix_limit`]), and for pairs the second flip only inside the
//!   consumed prefix of the stream with the first flip applied. Skipped
//!   candidates are provably not targets, so pruned search equals
//!   full-range search.
//! - The pair space is ranked lexicographically, so near-equal shards are
//!   contiguous first-flip ranges computed in O(1) from triangular ranks,
//!   and any union of shards is exactly the unsharded result.
//! - Work is resumable: progress is checkpointed as the next unevaluated
//!   first-flip position, and hits as flip positions, which replay cheaply.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content_id;
use crate::zlib::{Inflater, OracleVerdict};

/// First-flip positions evaluated between checkpoint opportunities.
const WAVE_OUTERS: u64 = 64;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("shard index {index} out of range for {count} shards")]
    BadShard { index: u32, count: u32 },
    #[error("search limit {limit} invalid for a {len}-byte fragment")]
    BadLimit { limit: usize, len: usize },
    #[error("fragment already passes the oracle, nothing to repair")]
    BaselineValid,
    #[error("checkpoint does not match this search ({field} differs)")]
    CheckpointMismatch { field: &'static str },
    #[error("checkpoint replay: stored flip set {flips:?} is not a valid repair")]
    CheckpointReplay { flips: Vec<u32> },
    #[error("checkpoint io: {0}")]
    CheckpointIo(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shard {
    pub index: u32,
    pub count: u32,
}

impl Default for Shard {
    fn default() -> Self {
        Shard { index: 0, count: 1 }
    }
}

impl Shard {
    pub fn new(index: u32, count: u32) -> Result<Shard, SearchError> {
        if count == 0 || index >= count {
            return Err(SearchError::BadShard { index, count });
        }
        Ok(Shard { index, count })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlipModel {
    #[serde(rename = "1flip")]
    OneFlip,
    #[serde(rename = "2flip")]
    TwoFlip,
}

/// Nominal candidate counts for budgeting and the cubic-cost model. The
/// 2-flip pair count treats both flips as confined to the limit, which is
/// where almost all of the work lands; oracle calls add the per-first-flip
/// probe and the baseline check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub candidates: u64,
    pub oracle_calls: u64,
    /// Predicted work in candidate-bytes: oracle calls times fragment length.
    pub work: f64,
}

pub fn estimate_cost(fragment_len: usize, limit: usize, model: FlipModel) -> CostEstimate {
    let bits = 8 * limit as u64;
    let (candidates, oracle_calls) = match model {
        FlipModel::OneFlip => (bits, bits + 1),
        FlipModel::TwoFlip => {
            let pairs = pair_count(bits);
            (pairs, pairs + bits + 1)
        }
    };
    CostEstimate { candidates, oracle_calls, work: oracle_calls as f64 * fragment_len as f64 }
}

/// Bytes worth searching: the baseline verdict's consumed prefix. A flip at
/// or past `8 * consumed` cannot change the verdict, so when the oracle
/// gives up early only the consumed prefix can hold a repairable flip.
pub fn prefix_limit(fragment: &[u8], max_len: usize, inf: &mut Inflater) -> (OracleVerdict, usize) {
    let verdict = inf.check_strict(fragment, max_len);
    let limit = verdict.consumed.min(fragment.len()).max(usize::from(!fragment.is_empty()));
    (verdict, limit)
}

/// C(bits, 2): pairs (i, j) with i < j < bits.
pub fn pair_count(bits: u64) -> u64 {
    (bits as u128 * (bits.saturating_sub(1)) as u128 / 2) as u64
}

/// Lexicographic rank of pair (i, j), 0-based.
pub fn pair_to_rank(bits: u64, i: u64, j: u64) -> u64 {
    debug_assert!(i < j && j < bits);
    let before = i as u128 * (bits - 1) as u128 - i as u128 * (i.saturating_sub(1)) as u128 / 2;
    (before + (j - i - 1) as u128) as u64
}

/// Inverse of [`pair_to_rank`].
pub fn rank_to_pair(bits: u64, rank: u64) -> (u64, u64) {
    debug_assert!(rank < pair_count(bits));
    let base = |i: u64| i as u128 * (bits - 1) as u128 - i as u128 * (i.saturating_sub(1)) as u128 / 2;
    // Largest i with base(i) <= rank.
    let (mut lo, mut hi) = (0u64, bits - 1);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if base(mid) <= rank as u128 {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let j = lo + 1 + (rank as u128 - base(lo)) as u64;
    (lo, j)
}

/// First-flip range [lo, hi) owned by `shard`: rank space C(limit_bits, 2)
/// is cut into near-equal slices whose boundaries snap to whole first-flip
/// positions, so every pair of one first flip belongs to exactly one shard.
pub fn shard_outer_range(limit_bits: u64, shard: Shard) -> (u64, u64) {
    let total = pair_count(limit_bits) as u128;
    let outer_of = |s: u32| -> u64 {
        if s == 0 {
            return 0;
        }
        if s >= shard.count {
            return limit_bits;
        }
        let rank = (total * s as u128 / shard.count as u128) as u64;
        if rank as u128 >= total {
            limit_bits
        } else {
            rank_to_pair(limit_bits, rank).0
        }
    };
    (outer_of(shard.index), outer_of(shard.index + 1))
}

/// One accepted repair: a decompressed payload and every flip set that
/// produced it (distinct flips can yield identical payloads).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub payload: Vec<u8>,
    pub flip_sets: Vec<Vec<u32>>,
}

/// Raw accepted candidate: (flip positions, decompressed payload).
type Hit = (Vec<u32>, Vec<u8>);

/// The outcome of one repair search (possibly one shard of one).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub model: FlipModel,
    /// Bytes searched for the first flip.
    pub prefix_limit: usize,
    pub shard: Shard,
    /// Flip-set candidates the oracle evaluated (probes excluded).
    pub candidates_tested: u64,
    /// False when a candidate budget paused the search before the shard end.
    pub completed: bool,
    /// Deduplicated by payload, ordered by earliest flip set.
    pub targets: Vec<Target>,
}

impl TargetSet {
    pub fn payloads(&self) -> Vec<&[u8]> {
        self.targets.iter().map(|t| t.payload.as_slice()).collect()
    }

    pub fn is_singleton(&self) -> bool {
        self.targets.len() == 1
    }

    /// Combines shard results into the full-search result. Panics if the
    /// sets disagree on model or limit, which only a caller bug produces.
    pub fn union(sets: &[TargetSet]) -> TargetSet {
        let first = sets.first().expect("union of no target sets");
        let mut hits: Vec<Hit> = Vec::new();
        let mut tested = 0;
        let mut completed = true;
        for s in sets {
            assert_eq!(s.model, first.model, "union across models");
            assert_eq!(s.prefix_limit, first.prefix_limit, "union across limits");
            tested += s.candidates_tested;
            completed &= s.completed;
            for t in &s.targets {
                for f in &t.flip_sets {
                    hits.push((f.clone(), t.payload.clone()));
                }
            }
        }
        TargetSet {
            model: first.model,
            prefix_limit: first.prefix_limit,
            shard: Shard::default(),
            candidates_tested: tested,
            completed,
            targets: group_hits(hits),
        }
    }
}

/// Groups raw hits by payload; canonical order is by earliest flip set.
fn group_hits(hits: Vec<Hit>) -> Vec<Target> {
    let mut by_payload: BTreeMap<Vec<u8>, Vec<Vec<u32>>> = BTreeMap::new();
    for (flips, payload) in hits {
        by_payload.entry(payload).or_default().push(flips);
    }
    let mut targets: Vec<Target> = by_payload
        .into_iter()
        .map(|(payload, mut flip_sets)| {
            flip_sets.sort();
            flip_sets.dedup();
            Target { payload, flip_sets }
        })
        .collect();
    targets.sort_by(|a, b| a.flip_sets[0].cmp(&b.flip_sets[0]));
    targets
}

/// Tries every single-bit flip in the first `limit` bytes. `limit` must be
/// at least the baseline verdict's consumed bytes (see [`prefix_limit`])
/// for the result to equal a full-range search.
pub fn repair_1flip(
    fragment: &[u8],
    max_len: usize,
    limit: usize,
    inf: &mut Inflater,
) -> Result<TargetSet, SearchError> {
    if limit == 0 || limit > fragment.len() {
        return Err(SearchError::BadLimit { limit, len: fragment.len() });
    }
    if inf.check_strict(fragment, max_len).is_valid() {
        return Err(SearchError::BaselineValid);
    }
    let mut buf = fragment.to_vec();
    let mut hits = Vec::new();
    let bits = 8 * limit as u64;
    for bit in 0..bits {
        crate::flip_bit(&mut buf, bit as usize);
        let v = inf.check_strict(&buf, max_len);
        if v.is_valid() {
            hits.push((vec![bit as u32], v.payload.expect("valid verdict carries payload")));
        }
        crate::flip_bit(&mut buf, bit as usize);
    }
    Ok(TargetSet {
        model: FlipModel::OneFlip,
        prefix_limit: limit,
        shard: Shard::default(),
        candidates_tested: bits,
        completed: true,
        targets: group_hits(hits),
    })
}

/// Knobs for the pair search. Defaults to the whole space in one shard,
/// no checkpointing, and no budget.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub shard: Shard,
    /// Directory for checkpoint files; none disables checkpointing.
    pub checkpoint_dir: Option<PathBuf>,
    /// Minimum time between checkpoint flushes.
    pub flush_interval: Duration,
    /// Pause (checkpointing if configured) after roughly this many
    /// candidates, checked between first-flip waves.
    pub candidate_budget: Option<u64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            shard: Shard::default(),
            checkpoint_dir: None,
            flush_interval: Duration::from_secs(10),
            candidate_budget: None,
        }
    }
}

/// On-disk resume state for one (fragment, shard) pair search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub fragment: String,
    pub model: FlipModel,
    pub shard: Shard,
    pub limit: usize,
    /// Next first-flip bit position to evaluate.
    pub resume_position: u64,
    pub candidates_tested: u64,
    pub hits: Vec<Vec<u32>>,
}

fn checkpoint_path(dir: &Path, fragment_id: &str, shard: Shard) -> PathBuf {
    dir.join(format!("{}-2flip-{}of{}.json", &fragment_id[..16], shard.index, shard.count))
}

fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), SearchError> {
    let tmp = path.with_extension("json.tmp");
    let body = serde_json::to_vec_pretty(ck).expect("checkpoint serializes");
    std::fs::write(&tmp, body).map_err(|e| SearchError::CheckpointIo(e.to_string()))?;
    std::fs::rename(&tmp, path).map_err(|e| SearchError::CheckpointIo(e.to_string()))
}

/// Tries every distinct pair of flips whose first flip lies in the first
/// `limit` bytes. The second flip ranges over the consumed prefix of the
/// first-flipped stream, which is exactly the set of pairs that can change
/// the verdict, so the result equals a full-range pair search whenever
/// `limit` covers the baseline verdict's consumed bytes.
pub fn repair_2flip(
    fragment: &[u8],
    max_len: usize,
    limit: usize,
    config: &SearchConfig,
) -> Result<TargetSet, SearchError> {
    if limit == 0 || limit > fragment.len() {
        return Err(SearchError::BadLimit { limit, len: fragment.len() });
    }
    Shard::new(config.shard.index, config.shard.count)?;
    let mut inf = Inflater::new();
    if inf.check_strict(fragment, max_len).is_valid() {
        return Err(SearchError::BaselineValid);
    }

    let limit_bits = 8 * limit as u64;
    let (outer_lo, outer_hi) = shard_outer_range(limit_bits, config.shard);
    let fragment_id = content_id(fragment);
    let ck_path = config.checkpoint_dir.as_ref().map(|d| checkpoint_path(d, &fragment_id, config.shard));

    // Hits carry payloads in memory; checkpoints store flip positions only
    // and replay them on load.
    let mut hits: Vec<Hit> = Vec::new();
    let mut tested: u64 = 0;
    let mut next_outer = outer_lo;
    if let Some(path) = &ck_path {
        if path.exists() {
            let body = std::fs::read(path).map_err(|e| SearchError::CheckpointIo(e.to_string()))?;
            let ck: Checkpoint =
                serde_json::from_slice(&body).map_err(|e| SearchError::CheckpointIo(e.to_string()))?;
            if ck.fragment != fragment_id {
                return Err(SearchError::CheckpointMismatch { field: "fragment" });
            }
            if ck.shard != config.shard {
                return Err(SearchError::CheckpointMismatch { field: "shard" });
            }
            if ck.limit != limit {
                return Err(SearchError::CheckpointMismatch { field: "limit" });
            }
            if ck.model != FlipModel::TwoFlip || ck.schema_version != 1 {
                return Err(SearchError::CheckpointMismatch { field: "model" });
            }
            let mut buf = fragment.to_vec();
            for flips in ck.hits {
                for &b in &flips {
                    crate::flip_bit(&mut buf, b as usize);
                }
                let v = inf.check_strict(&buf, max_len);
                for &b in &flips {
                    crate::flip_bit(&mut buf, b as usize);
                }
                if !v.is_valid() {
                    return Err(SearchError::CheckpointReplay { flips });
                }
                hits.push((flips, v.payload.expect("valid verdict carries payload")));
            }
            tested = ck.candidates_tested;
            next_outer = ck.resume_position.clamp(outer_lo, outer_hi);
        }
    }

    let make_checkpoint = |next: u64, tested: u64, hits: &[Hit]| Checkpoint {
        schema_version: 1,
        fragment: fragment_id.clone(),
        model: FlipModel::TwoFlip,
        shard: config.shard,
        limit,
        resume_position: next,
        candidates_tested: tested,
        hits: hits.iter().map(|(f, _)| f.clone()).collect(),
    };

    let mut completed = true;
    let mut last_flush = Instant::now();
    while next_outer < outer_hi {
        let wave_end = (next_outer + WAVE_OUTERS).min(outer_hi);
        let wave: Vec<(u64, Vec<Hit>)> = (next_outer..wave_end)
            .into_par_iter()
            .map_init(
                || (Inflater::new(), fragment.to_vec()),
                |(inf, buf), i| {
                    let mut found = Vec::new();
                    crate::flip_bit(buf, i as usize);
                    // The probe's consumed prefix bounds every examinable
                    // second flip for this first flip.
                    let probe = inf.check_strict(buf, max_len);
                    let j_end = (8 * probe.consumed as u64).min(8 * buf.len() as u64);
                    let mut pairs = 0u64;
                    for j in (i + 1)..j_end {
                        crate::flip_bit(buf, j as usize);
                        let v = inf.check_strict(buf, max_len);
                        if v.is_valid() {
                            found.push((
                                vec![i as u32, j as u32],
                                v.payload.expect("valid verdict carries payload"),
                            ));
                        }
                        crate::flip_bit(buf, j as usize);
                        pairs += 1;
                    }
                    crate::flip_bit(buf, i as usize);
                    (pairs, found)
                },
            )
            .collect();
        for (pairs, found) in wave {
            tested += pairs;
            hits.extend(found);
        }
        next_outer = wave_end;

        let budget_hit = config.candidate_budget.is_some_and(|b| tested >= b);
        if let Some(path) = &ck_path {
            if budget_hit || next_outer == outer_hi || last_flush.elapsed() >= config.flush_interval {
                write_checkpoint(path, &make_checkpoint(next_outer, tested, &hits))?;
                last_flush = Instant::now();
            }
        }
        if budget_hit && next_outer < outer_hi {
            completed = false;
            break;
        }
    }

    Ok(TargetSet {
        model: FlipModel::TwoFlip,
        prefix_limit: limit,
        shard: config.shard,
        candidates_tested: tested,
        completed,
        targets: group_hits(hits),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sample_text;
    use flate2::write::ZlibEncoder;
    use flate2::Compression;
    use std::io::Write as _;

    fn zlib(data: &[u8]) -> Vec<u8> {
        let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(6));
        enc.write_all(data).unwrap();
        enc.finish().unwrap()
    }

    #[test]
    fn cost_estimates_match_the_pinned_examples() {
        assert_eq!(estimate_cost(1000, 1000, FlipModel::OneFlip).candidates, 8000);
        assert_eq!(estimate_cost(1000, 1000, FlipModel::TwoFlip).candidates, 31_996_000);
        assert_eq!(estimate_cost(100, 20, FlipModel::TwoFlip).candidates, 12_720);
        let e = estimate_cost(1000, 1000, FlipModel::TwoFlip);
        assert_eq!(e.oracle_calls, 31_996_000 + 8000 + 1);
        assert!(e.work > 3.19e10);
    }

    #[test]
    fn pair_ranks_round_trip() {
        let bits = 20;
        let mut rank = 0;
        for i in 0..bits {
            for j in (i + 1)..bits {
                assert_eq!(pair_to_rank(bits, i, j), rank);
                assert_eq!(rank_to_pair(bits, rank), (i, j));
                rank += 1;
            }
        }
        assert_eq!(rank, pair_count(bits));
        assert_eq!(pair_count(0), 0);
        assert_eq!(pair_count(1), 0);
        assert_eq!(pair_count(2), 1);
        assert_eq!(rank_to_pair(2, 0), (0, 1));
    }

    #[test]
    fn shard_ranges_tile_the_outer_space() {
        for limit_bits in [2u64, 16, 160, 1021] {
            for count in [1u32, 2, 3, 8, 1000] {
                let mut expect_lo = 0;
                let mut total_pairs = 0u64;
                for index in 0..count {
                    let (lo, hi) = shard_outer_range(limit_bits, Shard { index, count });
                    assert_eq!(lo, expect_lo, "bits={limit_bits} m={count} s={index}");
                    assert!(hi >= lo);
                    expect_lo = hi;
                    total_pairs += (lo..hi).map(|i| limit_bits - 1 - i).sum::<u64>();
                }
                assert_eq!(expect_lo, limit_bits);
                assert_eq!(total_pairs, pair_count(limit_bits));
            }
        }
    }

    #[test]
    fn one_flip_round_trip_recovers_the_payload() {
        let payload = sample_text(11, 400);
        let clean = zlib(&payload);
        let mut dirty = clean.clone();
        crate::flip_bit(&mut dirty, 101);
        let mut inf = Inflater::new();
        let (verdict, limit) = prefix_limit(&dirty, 4096, &mut inf);
        assert!(!verdict.is_valid());
        assert!(101 < 8 * limit, "injected flip must sit inside the limit");
        let set = repair_1flip(&dirty, 4096, limit, &mut inf).unwrap();
        assert!(set.completed);
        assert_eq!(set.candidates_tested, 8 * limit as u64);
        assert!(set.targets.iter().any(|t| t.payload == payload));
        let hit = set.targets.iter().find(|t| t.payload == payload).unwrap();
        assert!(hit.flip_sets.contains(&vec![101]));
    }

    #[test]
    fn one_flip_cannot_fix_two_separated_flips() {
        let payload = sample_text(12, 500);
        let clean = zlib(&payload);
        let mut dirty = clean.clone();
        // Two flips in distinct mid-stream bytes.
        crate::flip_bit(&mut dirty, 8 * 60 + 3);
        crate::flip_bit(&mut dirty, 8 * 140 + 5);
        let mut inf = Inflater::new();
        let (_, limit) = prefix_limit(&dirty, 4096, &mut inf);
        let set = repair_1flip(&dirty, 4096, limit, &mut inf).unwrap();
        assert!(set.targets.is_empty());
    }

    #[test]
    fn all_zero_fragment_has_no_single_flip_repair() {
        let zeros = vec![0u8; 64];
        let mut inf = Inflater::new();
        let set = repair_1flip(&zeros, 4096, 64, &mut inf).unwrap();
        assert!(set.targets.is_empty());
    }

    #[test]
    fn valid_baseline_is_rejected() {
        let clean = zlib(&sample_text(13, 100));
        let mut inf = Inflater::new();
        match repair_1flip(&clean, 4096, clean.len(), &mut inf) {
            Err(SearchError::BaselineValid) => {}
            other => panic!("expected BaselineValid, got {other:?}"),
        }
        let cfg = SearchConfig::default();
        match repair_2flip(&clean, 4096, clean.len(), &cfg) {
            Err(SearchError::BaselineValid) => {}
            other => panic!("expected BaselineValid, got {other:?}"),
        }
    }

    #[test]
    fn prefix_limited_equals_full_range_for_one_flip() {
        let mut inf = Inflater::new();
        for seed in 0..8 {
            let payload = sample_text(100 + seed, 300);
            let mut dirty = zlib(&payload);
            let bit = (37 * (seed as usize + 1)) % (8 * dirty.len());
            crate::flip_bit(&mut dirty, bit);
            if inf.check_strict(&dirty, 4096).is_valid() {
                continue; // flip landed on a don't-care bit
            }
            let (_, limit) = prefix_limit(&dirty, 4096, &mut inf);
            let pruned = repair_1flip(&dirty, 4096, limit, &mut inf).unwrap();
            let full = repair_1flip(&dirty, 4096, dirty.len(), &mut inf).unwrap();
            assert_eq!(pruned.targets, full.targets, "seed {seed}");
        }
    }

    fn small_two_flip_case(seed: u64) -> (Vec<u8>, Vec<u8>, usize, usize) {
        let payload = sample_text(seed, 280);
        let clean = zlib(&payload);
        let b1 = 8 * 40 + 2;
        let b2 = 8 * (clean.len() / 2) + 6;
        let mut dirty = clean;
        crate::flip_bit(&mut dirty, b1);
        crate::flip_bit(&mut dirty, b2);
        (payload, dirty, b1, b2)
    }

    #[test]
    fn two_flip_round_trip_recovers_the_payload() {
        let (payload, dirty, b1, b2) = small_two_flip_case(21);
        let mut inf = Inflater::new();
        let (verdict, limit) = prefix_limit(&dirty, 4096, &mut inf);
        assert!(!verdict.is_valid());
        let set = repair_2flip(&dirty, 4096, limit, &SearchConfig::default()).unwrap();
        assert!(set.completed);
        let hit = set.targets.iter().find(|t| t.payload == payload).expect("true payload found");
        assert!(hit.flip_sets.contains(&vec![b1 as u32, b2 as u32]));
    }

    #[test]
    fn shard_union_matches_the_unsharded_search() {
        let (_, dirty, _, _) = small_two_flip_case(22);
        let mut inf = Inflater::new();
        let (_, limit) = prefix_limit(&dirty, 4096, &mut inf);
        let whole = repair_2flip(&dirty, 4096, limit, &SearchConfig::default()).unwrap();
        let mut parts = Vec::new();
        for index in 0..4 {
            let cfg = SearchConfig { shard: Shard { index, count: 4 }, ..Default::default() };
            parts.push(repair_2flip(&dirty, 4096, limit, &cfg).unwrap());
        }
        let union = TargetSet::union(&parts);
        assert_eq!(union.targets, whole.targets);
        assert_eq!(union.candidates_tested, whole.candidates_tested);
    }

    #[test]
    fn two_flip_finds_single_flip_repairs_with_a_dont_care_partner() {
        // Precondition violation on purpose: only one real flip.
        let payload = sample_text(23, 260);
        let clean = zlib(&payload);
        let mut dirty = clean.clone();
        crate::flip_bit(&mut dirty, 8 * 30 + 1);
        let mut inf = Inflater::new();
        let ones = repair_1flip(&dirty, 4096, dirty.len(), &mut inf).unwrap();
        assert!(ones.targets.iter().any(|t| t.payload == payload));
        let (_, limit) = prefix_limit(&dirty, 4096, &mut inf);
        let pairs = repair_2flip(&dirty, 4096, limit, &SearchConfig::default()).unwrap();
        // Every 1-flip payload reachable with a spare don't-care flip shows
        // up; at minimum the true payload must.
        assert!(pairs.targets.iter().any(|t| t.payload == payload));
    }

    #[test]
    fn budget_pauses_and_checkpoint_resumes_to_the_same_result() {
        let (_, dirty, _, _) = small_two_flip_case(24);
        let mut inf = Inflater::new();
        let (_, limit) = prefix_limit(&dirty, 4096, &mut inf);
        let whole = repair_2flip(&dirty, 4096, limit, &SearchConfig::default()).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let mut cfg = SearchConfig {
            shard: Shard::default(),
            checkpoint_dir: Some(dir.path().to_path_buf()),
            flush_interval: Duration::ZERO,
            candidate_budget: Some(whole.candidates_tested / 5),
        };
        let paused = repair_2flip(&dirty, 4096, limit, &cfg).unwrap();
        assert!(!paused.completed);
        assert!(paused.candidates_tested < whole.candidates_tested);

        let ck_file = std::fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
        let ck: Checkpoint = serde_json::from_slice(&std::fs::read(&ck_file).unwrap()).unwrap();
        assert_eq!(ck.schema_version, 1);
        assert!(ck.resume_position > 0);

        cfg.candidate_budget = None;
        let resumed = repair_2flip(&dirty, 4096, limit, &cfg).unwrap();
        assert!(resumed.completed);
        assert_eq!(resumed.targets, whole.targets);
        assert_eq!(resumed.candidates_tested, whole.candidates_tested);

        // Rerunning against the final checkpoint is idempotent.
        let rerun = repair_2flip(&dirty, 4096, limit, &cfg).unwrap();
        assert_eq!(rerun.targets, whole.targets);
        assert_eq!(rerun.candidates_tested, whole.candidates_tested);
    }

    #[test]
    fn checkpoint_for_a_different_fragment_is_refused() {
        let (_, dirty_a, _, _) = small_two_flip_case(25);
        let (_, dirty_b, _, _) = small_two_flip_case(26);
        let dir = tempfile::tempdir().unwrap();
        let mut inf = Inflater::new();
        let (_, limit_a) = prefix_limit(&dirty_a, 4096, &mut inf);
        let cfg = SearchConfig {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            flush_interval: Duration::ZERO,
            candidate_budget: Some(100),
            ..Default::default()
        };
        let _ = repair_2flip(&dirty_a, 4096, limit_a, &cfg).unwrap();
        // Point fragment B's search at A's checkpoint file.
        let ck_file = std::fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
        let (_, limit_b) = prefix_limit(&dirty_b, 4096, &mut inf);
        let id_b = content_id(&dirty_b);
        let path_b = checkpoint_path(dir.path(), &id_b, Shard::default());
        std::fs::rename(&ck_file, &path_b).unwrap();
        match repair_2flip(&dirty_b, 4096, limit_b, &cfg) {
            Err(SearchError::CheckpointMismatch { field: "fragment" }) => {}
            other => panic!("expected fragment mismatch, got {other:?}"),
        }
    }

    #[test]
    fn bad_arguments_are_rejected() {
        let data = vec![1u8; 10];
        let mut inf = Inflater::new();
        assert!(matches!(
            repair_1flip(&data, 100, 0, &mut inf),
            Err(SearchError::BadLimit { .. })
        ));
        assert!(matches!(
            repair_1flip(&data, 100, 11, &mut inf),
            Err(SearchError::BadLimit { .. })
        ));
        let cfg = SearchConfig { shard: Shard { index: 3, count: 3 }, ..Default::default() };
        assert!(matches!(
            repair_2flip(&data, 100, 10, &cfg),
            Err(SearchError::BadShard { index: 3, count: 3 })
        ));
        assert!(Shard::new(0, 0).is_err());
    }
}
