//! Repair toolkit for bitflip-corrupted SquashFS images.
//!
//! NAND dumps pulled straight off a desoldered flash chip carry the raw bit
//! errors the controller's ECC would normally absorb. A gzip-compressed
//! SquashFS image in such a dump fails to unpack wherever a flipped bit lands
//! inside a compressed unit. This crate recovers those units without the ECC:
//! it re-derives every candidate original by brute-forcing one- and two-bit
//! flips against a decompression-and-checksum oracle, filters candidates with
//! metadata the filesystem itself provides (expected lengths, per-file sums),
//! and merges whatever ambiguity remains into three-valued output where every
//! bit is true, false, or indeterminate.
//!
//! Module map:
//! - [`dump`]: raw-dump preparation (spare-area stripping, entropy scan,
//!   segment classification, bitflip diffing).
//! - [`squashfs`]: read-only SquashFS v4 model; inventories every
//!   independently compressed unit and which file bytes it backs.
//! - [`zlib`]: the oracle. A from-scratch inflate that reports exactly how
//!   many input bytes it consumed before accepting or rejecting a candidate.
//! - [`search`]: exhaustive 1-flip and 2-flip candidate search with prefix
//!   pruning, deterministic sharding, and resumable checkpoints.
//! - [`stats`]: corruption-rate estimation and expected flip-count curves.
//! - [`merge`]: three-valued merging of ambiguous repairs plus the length and
//!   subset-sum filters that thin them first.
//! - [`corpus`]: ground-truthed test-image builder and seeded fault injector.
//! - [`pipeline`]: stage orchestration and the JSON artifacts between stages.
//!
//! Bit addressing is uniform across the crate: bit index `b` refers to byte
//! `b / 8`, mask `1 << (b % 8)`. Low bit first within each byte.

#![forbid(unsafe_code)]

pub mod corpus;
pub mod dump;
pub mod merge;
pub mod pipeline;
pub mod report;
pub mod search;
pub mod squashfs;
pub mod stats;
pub mod zlib;

/// Flips one bit in place. Bit `b` lives in byte `b / 8`, mask `1 << (b % 8)`.
#[inline]
pub fn flip_bit(buf: &mut [u8], bit: usize) {
    buf[bit / 8] ^= 1 << (bit % 8);
}

/// Reads the bit at index `bit` under the crate-wide addressing convention.
#[inline]
pub fn get_bit(buf: &[u8], bit: usize) -> bool {
    buf[bit / 8] & (1 << (bit % 8)) != 0
}

/// Hex SHA-256 of a byte slice. Used as the stable identity of a compressed
/// unit in reports, checkpoints, and manifests.
pub fn content_id(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
