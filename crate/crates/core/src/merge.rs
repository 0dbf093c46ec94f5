//! Three-valued merging of ambiguous repairs.
//!
//! When the search leaves several plausible payloads for one unit and no
//! filter can break the tie, the honest output is per-bit: a bit every
//! candidate agrees on is known, a bit they disagree on is indeterminate.
//! [`TernaryBuffer`] holds exactly that, as two parallel bitmaps. Merging is
//! commutative, associative, and idempotent, so target order never matters.
//!
//! Two filters thin a target set before any merge:
//! - [`length_filter`]: a unit backed by file metadata has one expected
//!   decompressed length; candidates of any other length are wrong.
//! - [`subset_sum_filter`]: when several units of one file are ambiguous,
//!   their lengths must still sum to the file size; only length tuples that
//!   hit the total exactly are admissible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MergeError {
    #[error("cannot merge buffers of {a} and {b} bytes")]
    LengthMismatch { a: usize, b: usize },
    #[error("no target has the expected length {expected} (candidate lengths: {found:?})")]
    NoLengthMatch { expected: usize, found: Vec<usize> },
    #[error("nothing to merge")]
    EmptyTargetSet,
    #[error("subset-sum filter supports at most 64 unit positions, got {0}")]
    TooManySets(usize),
    #[error("no combination of candidate lengths sums to {total}")]
    NoAdmissibleTuple { total: u64 },
}

/// One bit of three-valued content.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trit {
    True,
    False,
    Indeterminate,
}

/// Byte buffer where each bit is true, false, or indeterminate.
///
/// Representation invariant: `value` is canonical, i.e. every indeterminate
/// bit is stored as 0. That makes structural equality coincide with logical
/// equality, which the algebraic property tests rely on.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TernaryBuffer {
    value: Vec<u8>,
    known: Vec<u8>,
}

impl TernaryBuffer {
    /// A fully known buffer.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        TernaryBuffer { value: bytes.to_vec(), known: vec![0xFF; bytes.len()] }
    }

    /// An empty buffer to append parts onto.
    pub fn new() -> Self {
        TernaryBuffer { value: Vec::new(), known: Vec::new() }
    }

    /// Appends fully known bytes.
    pub fn push_bytes(&mut self, bytes: &[u8]) {
        self.value.extend_from_slice(bytes);
        self.known.resize(self.value.len(), 0xFF);
    }

    /// Appends `len` known zero bytes (a sparse hole).
    pub fn push_zeros(&mut self, len: usize) {
        self.value.resize(self.value.len() + len, 0);
        self.known.resize(self.value.len(), 0xFF);
    }

    /// Appends a byte-aligned slice of another buffer, trits intact.
    pub fn push_slice(&mut self, src: &TernaryBuffer, offset: usize, len: usize) {
        self.value.extend_from_slice(&src.value[offset..offset + len]);
        self.known.extend_from_slice(&src.known[offset..offset + len]);
    }

    /// Appends `len` wholly indeterminate bytes (content that was lost).
    pub fn push_unknown(&mut self, len: usize) {
        self.value.resize(self.value.len() + len, 0);
        self.known.resize(self.value.len(), 0);
    }

    /// Length in bytes.
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn get(&self, bit: usize) -> Trit {
        let mask = 1u8 << (bit % 8);
        if self.known[bit / 8] & mask == 0 {
            Trit::Indeterminate
        } else if self.value[bit / 8] & mask != 0 {
            Trit::True
        } else {
            Trit::False
        }
    }

    /// Merges another buffer in: agreement is kept, disagreement and
    /// pre-existing indeterminacy both yield indeterminate.
    pub fn merge(&mut self, other: &TernaryBuffer) -> Result<(), MergeError> {
        if self.len() != other.len() {
            return Err(MergeError::LengthMismatch { a: self.len(), b: other.len() });
        }
        for i in 0..self.value.len() {
            let agree = !(self.value[i] ^ other.value[i]);
            let known = self.known[i] & other.known[i] & agree;
            self.known[i] = known;
            self.value[i] &= known;
        }
        Ok(())
    }

    /// Merges a fully known payload in.
    pub fn merge_bytes(&mut self, payload: &[u8]) -> Result<(), MergeError> {
        if self.len() != payload.len() {
            return Err(MergeError::LengthMismatch { a: self.len(), b: payload.len() });
        }
        for (i, &b) in payload.iter().enumerate() {
            let known = self.known[i] & !(self.value[i] ^ b);
            self.known[i] = known;
            self.value[i] &= known;
        }
        Ok(())
    }

    pub fn indeterminate_bits(&self) -> usize {
        self.known.iter().map(|&k| k.count_zeros() as usize).sum()
    }

    /// Bytes containing at least one indeterminate bit.
    pub fn indeterminate_bytes(&self) -> usize {
        self.known.iter().filter(|&&k| k != 0xFF).count()
    }

    pub fn fully_known(&self) -> bool {
        self.known.iter().all(|&k| k == 0xFF)
    }

    /// Resolves every indeterminate bit to 1.
    pub fn all_true(&self) -> Vec<u8> {
        self.value.iter().zip(&self.known).map(|(&v, &k)| v | !k).collect()
    }

    /// Resolves every indeterminate bit to 0.
    pub fn all_false(&self) -> Vec<u8> {
        self.value.clone()
    }

    /// The known payload when nothing is indeterminate.
    pub fn to_known_bytes(&self) -> Option<Vec<u8>> {
        self.fully_known().then(|| self.value.clone())
    }

    /// Run-length encoding of the indeterminate bit positions.
    pub fn indeterminate_runs(&self) -> Vec<MaskRun> {
        let total_bits = self.len() * 8;
        let mut runs = Vec::new();
        let mut open: Option<MaskRun> = None;
        for bit in 0..total_bits {
            let indet = self.known[bit / 8] & (1 << (bit % 8)) == 0;
            match (&mut open, indet) {
                (Some(run), true) => run.len += 1,
                (None, true) => open = Some(MaskRun { start_bit: bit, len: 1 }),
                (Some(_), false) => runs.push(open.take().unwrap()),
                (None, false) => {}
            }
        }
        if let Some(run) = open {
            runs.push(run);
        }
        runs
    }
}

/// A run of consecutive indeterminate bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRun {
    pub start_bit: usize,
    pub len: usize,
}

/// Merges a nonempty set of equal-length payloads.
pub fn merge_targets(targets: &[Vec<u8>]) -> Result<TernaryBuffer, MergeError> {
    let first = targets.first().ok_or(MergeError::EmptyTargetSet)?;
    let mut buf = TernaryBuffer::from_bytes(first);
    for t in &targets[1..] {
        buf.merge_bytes(t)?;
    }
    Ok(buf)
}

/// Keeps the targets whose payload length equals `expected`. Thinning a
/// nonempty set to nothing is an error so callers escalate instead of
/// silently dropping a unit.
pub fn length_filter(targets: &[Vec<u8>], expected: usize) -> Result<Vec<Vec<u8>>, MergeError> {
    let kept: Vec<Vec<u8>> = targets.iter().filter(|t| t.len() == expected).cloned().collect();
    if kept.is_empty() && !targets.is_empty() {
        let mut found: Vec<usize> = targets.iter().map(|t| t.len()).collect();
        found.sort_unstable();
        found.dedup();
        return Err(MergeError::NoLengthMatch { expected, found });
    }
    Ok(kept)
}

/// Expected decompressed length of the final, possibly short, piece of a
/// file: `file_size mod piece` with a full piece when it divides evenly.
pub fn tail_len(file_size: u64, piece: u64) -> u64 {
    let rem = file_size % piece;
    if rem == 0 && file_size > 0 {
        piece
    } else {
        rem
    }
}

/// All ways to pick one candidate length per position so they sum to
/// `total`. Exhaustive depth-first walk with prefix bounds; candidate sets
/// are deduplicated and sorted first so output order is deterministic
/// (lexicographic in position order). At most 64 positions.
pub fn subset_sum_filter(sets: &[Vec<u64>], total: u64) -> Result<Vec<Vec<u64>>, MergeError> {
    if sets.len() > 64 {
        return Err(MergeError::TooManySets(sets.len()));
    }
    let mut canon: Vec<Vec<u64>> = Vec::with_capacity(sets.len());
    for s in sets {
        let mut s = s.clone();
        s.sort_unstable();
        s.dedup();
        canon.push(s);
    }
    // Suffix bounds: admissible prefixes must keep total - sum within
    // [suffix_min, suffix_max] of what remains.
    let n = canon.len();
    let mut suffix_min = vec![0u64; n + 1];
    let mut suffix_max = vec![0u64; n + 1];
    for i in (0..n).rev() {
        let lo = canon[i].first().copied().unwrap_or(0);
        let hi = canon[i].last().copied().unwrap_or(0);
        suffix_min[i] = suffix_min[i + 1].saturating_add(lo);
        suffix_max[i] = suffix_max[i + 1].saturating_add(hi);
        if canon[i].is_empty() {
            // One empty position makes every tuple impossible.
            return Err(MergeError::NoAdmissibleTuple { total });
        }
    }

    let mut out = Vec::new();
    let mut tuple = vec![0u64; n];
    fn dfs(
        canon: &[Vec<u64>],
        suffix_min: &[u64],
        suffix_max: &[u64],
        remaining: u64,
        depth: usize,
        tuple: &mut Vec<u64>,
        out: &mut Vec<Vec<u64>>,
    ) {
        if depth == canon.len() {
            if remaining == 0 {
                out.push(tuple.clone());
            }
            return;
        }
        for &len in &canon[depth] {
            if len > remaining {
                break; // sorted ascending: everything after is larger
            }
            let rest = remaining - len;
            if rest < suffix_min[depth + 1] || rest > suffix_max[depth + 1] {
                continue;
            }
            tuple[depth] = len;
            dfs(canon, suffix_min, suffix_max, rest, depth + 1, tuple, out);
        }
    }
    dfs(&canon, &suffix_min, &suffix_max, total, 0, &mut tuple, &mut out);
    if out.is_empty() {
        return Err(MergeError::NoAdmissibleTuple { total });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opposite_bytes_are_fully_indeterminate() {
        let merged = merge_targets(&[vec![0x00], vec![0xFF]]).unwrap();
        assert_eq!(merged.indeterminate_bits(), 8);
        assert_eq!(merged.indeterminate_bytes(), 1);
        assert_eq!(merged.all_true(), vec![0xFF]);
        assert_eq!(merged.all_false(), vec![0x00]);
        assert!(!merged.fully_known());
    }

    #[test]
    fn merge_is_idempotent() {
        let payload = vec![0xDE, 0xAD, 0xBE, 0xEF];
        let merged = merge_targets(&[payload.clone(), payload.clone(), payload.clone()]).unwrap();
        assert!(merged.fully_known());
        assert_eq!(merged.to_known_bytes().unwrap(), payload);
        assert_eq!(merged.indeterminate_bits(), 0);
    }

    fn xorshift(state: &mut u64) -> u64 {
        *state ^= *state << 13;
        *state ^= *state >> 7;
        *state ^= *state << 17;
        *state
    }

    fn random_payloads(seed: u64, count: usize, len: usize) -> Vec<Vec<u8>> {
        let mut s = seed;
        (0..count)
            .map(|_| (0..len).map(|_| (xorshift(&mut s) >> 32) as u8).collect())
            .collect()
    }

    #[test]
    fn merge_order_is_irrelevant() {
        let payloads = random_payloads(42, 5, 33);
        let forward = merge_targets(&payloads).unwrap();
        let mut rev = payloads.clone();
        rev.reverse();
        assert_eq!(forward, merge_targets(&rev).unwrap());
        // Pairwise tree order agrees with the linear fold.
        let mut left = merge_targets(&payloads[..2]).unwrap();
        let right = merge_targets(&payloads[2..]).unwrap();
        left.merge(&right).unwrap();
        assert_eq!(forward, left);
    }

    #[test]
    fn variants_differ_exactly_on_indeterminate_bits() {
        let payloads = random_payloads(7, 4, 64);
        let merged = merge_targets(&payloads).unwrap();
        let xor_pop: usize = merged
            .all_true()
            .iter()
            .zip(merged.all_false())
            .map(|(&t, f)| (t ^ f).count_ones() as usize)
            .sum();
        assert_eq!(xor_pop, merged.indeterminate_bits());
    }

    #[test]
    fn merged_buffer_contains_every_input_at_known_bits() {
        let payloads = random_payloads(1234, 6, 50);
        let merged = merge_targets(&payloads).unwrap();
        for p in &payloads {
            for bit in 0..p.len() * 8 {
                match merged.get(bit) {
                    Trit::Indeterminate => {}
                    Trit::True => assert!(crate::get_bit(p, bit)),
                    Trit::False => assert!(!crate::get_bit(p, bit)),
                }
            }
        }
    }

    #[test]
    fn merge_rejects_length_mismatch() {
        assert_eq!(
            merge_targets(&[vec![0; 4], vec![0; 5]]),
            Err(MergeError::LengthMismatch { a: 4, b: 5 })
        );
        assert_eq!(merge_targets(&[]), Err(MergeError::EmptyTargetSet));
    }

    #[test]
    fn indeterminate_runs_round_trip() {
        let merged = merge_targets(&[vec![0b0000_0000, 0xFF], vec![0b0110_0000, 0xFF]]).unwrap();
        assert_eq!(merged.indeterminate_runs(), vec![MaskRun { start_bit: 5, len: 2 }]);
        let clean = TernaryBuffer::from_bytes(&[1, 2, 3]);
        assert!(clean.indeterminate_runs().is_empty());
    }

    #[test]
    fn length_filter_keeps_matches_and_escalates_on_wipeout() {
        let targets = vec![vec![0; 10], vec![1; 12], vec![2; 10]];
        let kept = length_filter(&targets, 10).unwrap();
        assert_eq!(kept.len(), 2);
        match length_filter(&targets, 11) {
            Err(MergeError::NoLengthMatch { expected: 11, found }) => {
                assert_eq!(found, vec![10, 12]);
            }
            other => panic!("expected escalation, got {other:?}"),
        }
        // An already empty set is not an escalation.
        assert_eq!(length_filter(&[], 10).unwrap().len(), 0);
    }

    #[test]
    fn tail_len_handles_exact_multiples() {
        assert_eq!(tail_len(10_000, 4096), 10_000 % 4096);
        assert_eq!(tail_len(8192, 4096), 4096);
        assert_eq!(tail_len(0, 4096), 0);
    }

    #[test]
    fn subset_sum_documented_cases() {
        let tuples = subset_sum_filter(&[vec![100, 200], vec![50]], 250).unwrap();
        assert_eq!(tuples, vec![vec![200, 50]]);
        assert_eq!(
            subset_sum_filter(&[vec![1, 2], vec![1, 2]], 5),
            Err(MergeError::NoAdmissibleTuple { total: 5 })
        );
    }

    #[test]
    fn subset_sum_enumerates_all_tuples_deterministically() {
        let sets = vec![vec![1, 2, 3], vec![1, 2, 3], vec![1, 2, 3]];
        let tuples = subset_sum_filter(&sets, 6).unwrap();
        assert_eq!(
            tuples,
            vec![
                vec![1, 2, 3],
                vec![1, 3, 2],
                vec![2, 1, 3],
                vec![2, 2, 2],
                vec![2, 3, 1],
                vec![3, 1, 2],
                vec![3, 2, 1],
            ]
        );
    }

    #[test]
    fn subset_sum_prunes_but_stays_exact() {
        // 20 positions with two widely spaced options each; bounds must cut
        // the search yet find the unique solution.
        let sets: Vec<Vec<u64>> = (0..20).map(|i| vec![10, 10 + (1 << i)]).collect();
        let total: u64 = 20 * 10 + (1 << 7);
        let tuples = subset_sum_filter(&sets, total).unwrap();
        assert_eq!(tuples.len(), 1);
        assert_eq!(tuples[0][7], 10 + (1 << 7));
    }

    #[test]
    fn subset_sum_caps_population() {
        let sets = vec![vec![1u64]; 65];
        assert_eq!(subset_sum_filter(&sets, 65), Err(MergeError::TooManySets(65)));
    }

    #[test]
    fn buffer_assembly_from_parts() {
        let ambiguous = merge_targets(&[vec![0xF0, 0xAA], vec![0xF3, 0xAA]]).unwrap();
        let mut out = TernaryBuffer::new();
        out.push_bytes(&[0x11]);
        out.push_zeros(2);
        out.push_slice(&ambiguous, 0, 2);
        out.push_slice(&ambiguous, 1, 1);

        assert_eq!(out.len(), 6);
        assert_eq!(out.indeterminate_bits(), 2);
        assert_eq!(out.all_false(), vec![0x11, 0x00, 0x00, 0xF0, 0xAA, 0xAA]);
        assert_eq!(out.all_true(), vec![0x11, 0x00, 0x00, 0xF3, 0xAA, 0xAA]);
        // Slicing preserves canonical storage, so equality stays logical.
        let again = {
            let mut b = TernaryBuffer::new();
            b.push_bytes(&[0x11, 0x00, 0x00]);
            b.push_slice(&ambiguous, 0, 2);
            b.push_slice(&ambiguous, 1, 1);
            b
        };
        assert_eq!(out, again);
    }
}
