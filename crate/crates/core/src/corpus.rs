//! Ground-truthed test images: a minimal SquashFS v4 writer and a seeded
//! bitflip injector.
//!
//! The writer produces small zlib-compressed images from an in-memory file
//! tree, deterministically: same tree, same options, same bytes. Alongside
//! the image it emits a [`Manifest`] recording every file's size and content
//! hash, so repair results can be scored against known truth. The injector
//! flips bits at seeded pseudo-random positions, either at a fixed Bernoulli
//! rate or an exact count, and reports the positions it touched.

use std::collections::HashSet;
use std::io::Write as _;

use flate2::write::ZlibEncoder;
use flate2::Compression;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content_id;

pub const DEFAULT_BLOCK_SIZE: u32 = 8192;
const METABLOCK_CAP: usize = 8192;
const NO_FRAGMENT: u32 = 0xFFFF_FFFF;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("block size {0} is not a power of two in 4096..=1048576")]
    BadBlockSize(u32),
    #[error("invalid entry name {0:?}")]
    BadName(String),
    #[error("duplicate entry {0:?}")]
    DuplicateName(String),
    #[error("directory listing for {0:?} exceeds the basic inode limit")]
    DirectoryTooLarge(String),
    #[error("injection regions overlap or run past the image")]
    BadRegions,
    #[error("cannot pick {requested} distinct bits from {available}")]
    TooManyFlips { requested: u64, available: u64 },
}

/// One node of the tree to pack.
#[derive(Debug, Clone)]
pub enum Node {
    File { name: String, content: Vec<u8> },
    Dir { name: String, children: Vec<Node> },
    Symlink { name: String, target: String },
}

impl Node {
    pub fn file(name: &str, content: impl Into<Vec<u8>>) -> Node {
        Node::File { name: name.to_string(), content: content.into() }
    }

    pub fn dir(name: &str, children: Vec<Node>) -> Node {
        Node::Dir { name: name.to_string(), children }
    }

    pub fn symlink(name: &str, target: &str) -> Node {
        Node::Symlink { name: name.to_string(), target: target.to_string() }
    }

    fn name(&self) -> &str {
        match self {
            Node::File { name, .. } | Node::Dir { name, .. } | Node::Symlink { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub block_size: u32,
    pub mod_time: u32,
    /// zlib level for data blocks and metadata, 0..=9.
    pub level: u32,
    /// Final image length is padded to a multiple of this.
    pub pad_to: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { block_size: DEFAULT_BLOCK_SIZE, mod_time: 1_000_000_000, level: 9, pad_to: 4096 }
    }
}

/// Ground truth recorded at build time, extended by the injector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub block_size: u32,
    pub fragment_count: u32,
    pub files: Vec<ManifestFile>,
    pub injections: Vec<Injection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub size: u64,
    pub sha256: String,
}

/// One injected bitflip, in image-absolute coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub bit: u64,
    pub byte: u64,
    pub mask: u8,
}

impl Injection {
    pub fn from_bit(bit: u64) -> Injection {
        Injection { bit, byte: bit / 8, mask: 1 << (bit % 8) }
    }
}

#[derive(Debug, Clone)]
pub struct BuiltImage {
    pub bytes: Vec<u8>,
    pub manifest: Manifest,
}

/// Streams a metadata table out as compressed metablocks while tracking the
/// on-disk offset of every byte appended, so inode references and directory
/// starts can be recorded before later blocks exist.
struct TableWriter {
    disk: Vec<u8>,
    open: Vec<u8>,
    level: u32,
    block_starts: Vec<u64>,
}

impl TableWriter {
    fn new(level: u32) -> TableWriter {
        TableWriter { disk: Vec::new(), open: Vec::new(), level, block_starts: Vec::new() }
    }

    /// (table-relative disk offset of the containing metablock, offset
    /// within its decompressed payload) for the next byte appended.
    fn position(&self) -> (u32, u16) {
        (self.disk.len() as u32, self.open.len() as u16)
    }

    fn append(&mut self, bytes: &[u8]) {
        self.open.extend_from_slice(bytes);
        while self.open.len() >= METABLOCK_CAP {
            let rest = self.open.split_off(METABLOCK_CAP);
            let full = std::mem::replace(&mut self.open, rest);
            self.flush_block(&full);
        }
    }

    fn flush_block(&mut self, raw: &[u8]) {
        self.block_starts.push(self.disk.len() as u64);
        let (payload, compressed) = compress_block(raw, self.level);
        let header = payload.len() as u16 | if compressed { 0 } else { 0x8000 };
        self.disk.extend_from_slice(&header.to_le_bytes());
        self.disk.extend_from_slice(&payload);
    }

    fn finish(mut self) -> (Vec<u8>, Vec<u64>) {
        if !self.open.is_empty() {
            let last = std::mem::take(&mut self.open);
            self.flush_block(&last);
        }
        (self.disk, self.block_starts)
    }
}

/// zlib-compresses one block, falling back to a stored copy when compression
/// does not help. Returns (payload, compressed_flag).
fn compress_block(data: &[u8], level: u32) -> (Vec<u8>, bool) {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(level));
    enc.write_all(data).expect("in-memory write");
    let out = enc.finish().expect("in-memory finish");
    if out.len() < data.len() {
        (out, true)
    } else {
        (data.to_vec(), false)
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.len() <= 256 && name != "." && name != ".." && !name.contains('/') && !name.contains('\0')
}

/// Data-block layout of one regular file, filled in the data pass.
struct FilePlacement {
    path: String,
    size: u64,
    blocks_start: u64,
    size_words: Vec<u32>,
    fragment: u32,
    frag_offset: u32,
    sha256: String,
}

/// Builds a SquashFS v4 image (zlib, basic inodes) from `root_children`.
pub fn build_image(root_children: &[Node], opts: &BuildOptions) -> Result<BuiltImage, CorpusError> {
    let bs = opts.block_size;
    if !bs.is_power_of_two() || !(4096..=1_048_576).contains(&bs) {
        return Err(CorpusError::BadBlockSize(bs));
    }
    validate_tree(root_children)?;

    let mut image: Vec<u8> = vec![0; 96];

    // Data pass: full blocks per file, tails collected for fragment packing.
    let mut placements: Vec<FilePlacement> = Vec::new();
    let mut tails: Vec<(usize, Vec<u8>)> = Vec::new(); // (placement index, tail bytes)
    plan_data(root_children, String::new(), bs, opts.level, &mut image, &mut placements, &mut tails);

    // Fragment pass: pack tails first-fit in order, many tails per block.
    let mut frag_entries: Vec<(u64, u32)> = Vec::new(); // (absolute start, size word)
    {
        let mut pending: Vec<u8> = Vec::new();
        let flush = |image: &mut Vec<u8>, pending: &mut Vec<u8>, entries: &mut Vec<(u64, u32)>| {
            if pending.is_empty() {
                return;
            }
            let start = image.len() as u64;
            let (payload, compressed) = compress_block(pending, opts.level);
            let word = payload.len() as u32 | if compressed { 0 } else { 0x0100_0000 };
            image.extend_from_slice(&payload);
            entries.push((start, word));
            pending.clear();
        };
        for (pi, tail) in &tails {
            if pending.len() + tail.len() > bs as usize {
                flush(&mut image, &mut pending, &mut frag_entries);
            }
            placements[*pi].fragment = frag_entries.len() as u32;
            placements[*pi].frag_offset = pending.len() as u32;
            pending.extend_from_slice(tail);
        }
        flush(&mut image, &mut pending, &mut frag_entries);
    }

    // Table pass: post-order, so child inode references exist before the
    // parent's listing and the listing position before the parent's inode.
    let inode_count = {
        let mut n = 0u32;
        count_nodes(root_children, &mut n);
        n + 1 // plus root
    };
    let mut tb = Tables {
        inode_w: TableWriter::new(opts.level),
        dir_w: TableWriter::new(opts.level),
        next_inode: 1,
        mod_time: opts.mod_time,
        placements: &placements,
        placement_cursor: 0,
    };
    let root_entries = tb.write_children(root_children)?;
    let root_ref = tb.write_dir_inode(root_entries, inode_count + 1, String::from("(root)"))?;
    debug_assert_eq!(tb.next_inode, inode_count + 1);

    let (inode_disk, _) = tb.inode_w.finish();
    let (dir_disk, _) = tb.dir_w.finish();
    let inode_table_start = image.len() as u64;
    image.extend_from_slice(&inode_disk);
    let directory_table_start = image.len() as u64;
    image.extend_from_slice(&dir_disk);

    // Fragment table: entry metablocks, then the raw pointer array.
    let fragment_table_start = if frag_entries.is_empty() {
        u64::MAX
    } else {
        let mut w = TableWriter::new(opts.level);
        for (start, word) in &frag_entries {
            w.append(&start.to_le_bytes());
            w.append(&word.to_le_bytes());
            w.append(&0u32.to_le_bytes());
        }
        let (disk, starts) = w.finish();
        let table_base = image.len() as u64;
        image.extend_from_slice(&disk);
        let ptr_at = image.len() as u64;
        for s in starts {
            image.extend_from_slice(&(table_base + s).to_le_bytes());
        }
        ptr_at
    };

    // Id table: the single id 0, same metablock-plus-pointers shape.
    let id_table_start = {
        let mut w = TableWriter::new(opts.level);
        w.append(&0u32.to_le_bytes());
        let (disk, starts) = w.finish();
        let table_base = image.len() as u64;
        image.extend_from_slice(&disk);
        let ptr_at = image.len() as u64;
        for s in starts {
            image.extend_from_slice(&(table_base + s).to_le_bytes());
        }
        ptr_at
    };

    let bytes_used = image.len() as u64;
    let flags: u16 = 0x0200 | if frag_entries.is_empty() { 0x0010 } else { 0 };
    let sb = &mut image[0..96];
    sb[0..4].copy_from_slice(&0x7371_7368u32.to_le_bytes());
    sb[4..8].copy_from_slice(&inode_count.to_le_bytes());
    sb[8..12].copy_from_slice(&opts.mod_time.to_le_bytes());
    sb[12..16].copy_from_slice(&bs.to_le_bytes());
    sb[16..20].copy_from_slice(&(frag_entries.len() as u32).to_le_bytes());
    sb[20..22].copy_from_slice(&1u16.to_le_bytes()); // zlib
    sb[22..24].copy_from_slice(&(bs.trailing_zeros() as u16).to_le_bytes());
    sb[24..26].copy_from_slice(&flags.to_le_bytes());
    sb[26..28].copy_from_slice(&1u16.to_le_bytes()); // id count
    sb[28..30].copy_from_slice(&4u16.to_le_bytes());
    sb[30..32].copy_from_slice(&0u16.to_le_bytes());
    sb[32..40].copy_from_slice(&root_ref.to_le_bytes());
    sb[40..48].copy_from_slice(&bytes_used.to_le_bytes());
    sb[48..56].copy_from_slice(&id_table_start.to_le_bytes());
    sb[56..64].copy_from_slice(&u64::MAX.to_le_bytes()); // no xattrs
    sb[64..72].copy_from_slice(&inode_table_start.to_le_bytes());
    sb[72..80].copy_from_slice(&directory_table_start.to_le_bytes());
    sb[80..88].copy_from_slice(&fragment_table_start.to_le_bytes());
    sb[88..96].copy_from_slice(&u64::MAX.to_le_bytes()); // no export table

    let padded = image.len().div_ceil(opts.pad_to) * opts.pad_to;
    image.resize(padded, 0);

    let mut files: Vec<ManifestFile> = placements
        .iter()
        .map(|p| ManifestFile { path: p.path.clone(), size: p.size, sha256: p.sha256.clone() })
        .collect();
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        schema_version: 1,
        block_size: bs,
        fragment_count: frag_entries.len() as u32,
        files,
        injections: Vec::new(),
    };
    Ok(BuiltImage { bytes: image, manifest })
}

fn validate_tree(children: &[Node]) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for node in children {
        let name = node.name();
        if !valid_name(name) {
            return Err(CorpusError::BadName(name.to_string()));
        }
        if !seen.insert(name.to_string()) {
            return Err(CorpusError::DuplicateName(name.to_string()));
        }
        if let Node::Dir { children, .. } = node {
            validate_tree(children)?;
        }
    }
    Ok(())
}

fn count_nodes(children: &[Node], n: &mut u32) {
    for node in children {
        *n += 1;
        if let Node::Dir { children, .. } = node {
            count_nodes(children, n);
        }
    }
}

/// Writes data blocks for every regular file, pre-order. Tail remainders
/// (and whole files shorter than a block) go to the fragment packer.
fn plan_data(
    children: &[Node],
    prefix: String,
    bs: u32,
    level: u32,
    image: &mut Vec<u8>,
    placements: &mut Vec<FilePlacement>,
    tails: &mut Vec<(usize, Vec<u8>)>,
) {
    for node in children {
        match node {
            Node::File { name, content } => {
                let path = join_path(&prefix, name);
                let size = content.len() as u64;
                let full_blocks = (size / bs as u64) as usize;
                let tail_len = (size % bs as u64) as usize;
                let blocks_start = image.len() as u64;
                let mut size_words = Vec::with_capacity(full_blocks);
                for b in 0..full_blocks {
                    let chunk = &content[b * bs as usize..(b + 1) * bs as usize];
                    if chunk.iter().all(|&x| x == 0) {
                        size_words.push(0); // sparse: nothing stored
                        continue;
                    }
                    let (payload, compressed) = compress_block(chunk, level);
                    let word = payload.len() as u32 | if compressed { 0 } else { 0x0100_0000 };
                    image.extend_from_slice(&payload);
                    size_words.push(word);
                }
                let pi = placements.len();
                placements.push(FilePlacement {
                    path,
                    size,
                    blocks_start,
                    size_words,
                    fragment: NO_FRAGMENT,
                    frag_offset: 0,
                    sha256: content_id(content),
                });
                if tail_len > 0 {
                    tails.push((pi, content[content.len() - tail_len..].to_vec()));
                }
            }
            Node::Dir { name, children } => {
                let path = join_path(&prefix, name);
                plan_data(children, path, bs, level, image, placements, tails);
            }
            Node::Symlink { .. } => {}
        }
    }
}

fn join_path(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}/{name}")
    }
}

/// One directory entry queued for the parent's listing.
struct PendingEntry {
    name: Vec<u8>,
    type_code: u16,
    inode_num: u32,
    block: u32,
    intra: u16,
}

struct Tables<'a> {
    inode_w: TableWriter,
    dir_w: TableWriter,
    next_inode: u32,
    mod_time: u32,
    placements: &'a [FilePlacement],
    /// Files appear in the same pre-order during both passes.
    placement_cursor: usize,
}

impl Tables<'_> {
    fn header(&self, type_code: u16, mode: u16, inode_num: u32) -> [u8; 16] {
        let mut h = [0u8; 16];
        h[0..2].copy_from_slice(&type_code.to_le_bytes());
        h[2..4].copy_from_slice(&mode.to_le_bytes());
        // uid and gid index 0, the single id table entry.
        h[8..12].copy_from_slice(&self.mod_time.to_le_bytes());
        h[12..16].copy_from_slice(&inode_num.to_le_bytes());
        h
    }

    /// Writes every child's inode (recursing into directories first) and
    /// returns the parent's pending listing entries, sorted by name.
    fn write_children(&mut self, children: &[Node]) -> Result<Vec<PendingEntry>, CorpusError> {
        // The parent's number is one past all numbers in its subtree.
        let mut subtree = 0u32;
        count_nodes(children, &mut subtree);
        let my_num = self.next_inode + subtree;

        let mut entries = Vec::with_capacity(children.len());
        for node in children {
            match node {
                Node::File { .. } => {
                    let num = self.next_inode;
                    self.next_inode += 1;
                    let p = &self.placements[self.placement_cursor];
                    self.placement_cursor += 1;
                    let (block, intra) = self.inode_w.position();
                    let mut buf = Vec::with_capacity(32 + 4 * p.size_words.len());
                    buf.extend_from_slice(&self.header(2, 0o100_644_u16, num));
                    buf.extend_from_slice(&(p.blocks_start as u32).to_le_bytes());
                    buf.extend_from_slice(&p.fragment.to_le_bytes());
                    buf.extend_from_slice(&p.frag_offset.to_le_bytes());
                    buf.extend_from_slice(&(p.size as u32).to_le_bytes());
                    for w in &p.size_words {
                        buf.extend_from_slice(&w.to_le_bytes());
                    }
                    self.inode_w.append(&buf);
                    entries.push(PendingEntry {
                        name: node.name().as_bytes().to_vec(),
                        type_code: 2,
                        inode_num: num,
                        block,
                        intra,
                    });
                }
                Node::Symlink { name, target } => {
                    let num = self.next_inode;
                    self.next_inode += 1;
                    let (block, intra) = self.inode_w.position();
                    let mut buf = Vec::with_capacity(24 + target.len());
                    buf.extend_from_slice(&self.header(3, 0o120_777_u16, num));
                    buf.extend_from_slice(&1u32.to_le_bytes());
                    buf.extend_from_slice(&(target.len() as u32).to_le_bytes());
                    buf.extend_from_slice(target.as_bytes());
                    self.inode_w.append(&buf);
                    entries.push(PendingEntry {
                        name: name.as_bytes().to_vec(),
                        type_code: 3,
                        inode_num: num,
                        block,
                        intra,
                    });
                }
                Node::Dir { name, children } => {
                    let child_entries = self.write_children(children)?;
                    let num_before = self.next_inode;
                    let rf = self.write_dir_inode(child_entries, my_num, name.clone())?;
                    debug_assert_eq!(self.next_inode, num_before + 1);
                    entries.push(PendingEntry {
                        name: name.as_bytes().to_vec(),
                        type_code: 1,
                        inode_num: num_before,
                        block: (rf >> 16) as u32,
                        intra: (rf & 0xFFFF) as u16,
                    });
                }
            }
        }
        entries.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(entries)
    }

    /// Emits the listing then the directory inode; returns the inode ref.
    fn write_dir_inode(&mut self, entries: Vec<PendingEntry>, parent_num: u32, name: String) -> Result<u64, CorpusError> {
        let num = self.next_inode;
        self.next_inode += 1;

        let (dir_block, dir_intra) = self.dir_w.position();
        let mut listing: Vec<u8> = Vec::new();
        let mut i = 0;
        while i < entries.len() {
            // One header covers a run sharing an inode metablock, with
            // number deltas representable in i16, at most 256 entries.
            let base = entries[i].inode_num;
            let block = entries[i].block;
            let mut j = i;
            while j < entries.len()
                && j - i < 256
                && entries[j].block == block
                && i16::try_from(entries[j].inode_num as i64 - base as i64).is_ok()
            {
                j += 1;
            }
            listing.extend_from_slice(&((j - i - 1) as u32).to_le_bytes());
            listing.extend_from_slice(&block.to_le_bytes());
            listing.extend_from_slice(&base.to_le_bytes());
            for e in &entries[i..j] {
                listing.extend_from_slice(&e.intra.to_le_bytes());
                let delta = (e.inode_num as i64 - base as i64) as i16;
                listing.extend_from_slice(&delta.to_le_bytes());
                listing.extend_from_slice(&e.type_code.to_le_bytes());
                listing.extend_from_slice(&((e.name.len() - 1) as u16).to_le_bytes());
                listing.extend_from_slice(&e.name);
            }
            i = j;
        }
        let file_size = listing.len() + 3;
        if file_size > u16::MAX as usize {
            return Err(CorpusError::DirectoryTooLarge(name));
        }
        self.dir_w.append(&listing);

        let (block, intra) = self.inode_w.position();
        let mut buf = Vec::with_capacity(32);
        buf.extend_from_slice(&self.header(1, 0o40_755_u16, num));
        buf.extend_from_slice(&dir_block.to_le_bytes());
        buf.extend_from_slice(&2u32.to_le_bytes()); // nlink, nominal
        buf.extend_from_slice(&(file_size as u16).to_le_bytes());
        buf.extend_from_slice(&dir_intra.to_le_bytes());
        buf.extend_from_slice(&parent_num.to_le_bytes());
        self.inode_w.append(&buf);
        Ok(((block as u64) << 16) | intra as u64)
    }
}

/// Validates and flattens byte regions into a contiguous bit space.
fn region_bits(image_len: u64, regions: &[(u64, u64)]) -> Result<u64, CorpusError> {
    let mut prev_end = 0u64;
    let mut total = 0u64;
    let mut sorted: Vec<(u64, u64)> = regions.to_vec();
    sorted.sort_unstable();
    if sorted != regions {
        return Err(CorpusError::BadRegions);
    }
    for &(start, len) in regions {
        let end = start.checked_add(len).ok_or(CorpusError::BadRegions)?;
        if start < prev_end || end > image_len || len == 0 {
            return Err(CorpusError::BadRegions);
        }
        prev_end = end;
        total += len * 8;
    }
    Ok(total)
}

/// Maps an index in the concatenated region bit space to an absolute bit.
fn nth_region_bit(regions: &[(u64, u64)], mut idx: u64) -> u64 {
    for &(start, len) in regions {
        let bits = len * 8;
        if idx < bits {
            return start * 8 + idx;
        }
        idx -= bits;
    }
    unreachable!("index past region space");
}

/// Flips each bit of the given regions independently with probability `p`
/// (geometric gap sampling, so cost scales with flips, not bits). Returns
/// sorted absolute bit positions.
pub fn inject_bernoulli(
    image: &mut [u8],
    p: f64,
    seed: u64,
    regions: &[(u64, u64)],
) -> Result<Vec<u64>, CorpusError> {
    let total = region_bits(image.len() as u64, regions)?;
    // NaN falls through to the no-flip case.
    if p <= 0.0 || p.is_nan() {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut flips = Vec::new();
    if p >= 1.0 {
        for idx in 0..total {
            flips.push(nth_region_bit(regions, idx));
        }
    } else {
        let log_q = (-p).ln_1p();
        let mut pos: u64 = 0;
        loop {
            let u: f64 = rng.gen();
            let gap = ((1.0 - u).ln() / log_q).floor();
            if gap >= (total - pos) as f64 {
                break;
            }
            pos += gap as u64;
            flips.push(nth_region_bit(regions, pos));
            pos += 1;
            if pos >= total {
                break;
            }
        }
    }
    for &bit in &flips {
        crate::flip_bit(image, bit as usize);
    }
    Ok(flips)
}

/// Flips exactly `k` distinct bits chosen uniformly from the regions.
/// Returns sorted absolute bit positions.
pub fn inject_exact(
    image: &mut [u8],
    k: usize,
    seed: u64,
    regions: &[(u64, u64)],
) -> Result<Vec<u64>, CorpusError> {
    let total = region_bits(image.len() as u64, regions)?;
    if k as u64 > total {
        return Err(CorpusError::TooManyFlips { requested: k as u64, available: total });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut chosen = HashSet::with_capacity(k);
    while chosen.len() < k {
        chosen.insert(rng.gen_range(0..total));
    }
    let mut flips: Vec<u64> = chosen.into_iter().map(|idx| nth_region_bit(regions, idx)).collect();
    flips.sort_unstable();
    for &bit in &flips {
        crate::flip_bit(image, bit as usize);
    }
    Ok(flips)
}

const WORDS: &[&str] = &[
    "the", "quick", "brown", "fox", "jumps", "over", "lazy", "dog", "and", "then",
    "waits", "for", "another", "turn", "while", "rain", "falls", "on", "old", "stone",
    "walls", "near", "quiet", "rivers", "that", "carry", "leaves", "past", "small",
    "towns", "where", "people", "read", "books", "about", "distant", "ships", "slow",
    "clouds", "warm", "bread", "cold", "wind",
];

/// Deterministic filler text: repetitive English-like sentences that
/// compress well, so flipped streams exercise match-heavy deflate paths.
pub fn sample_text(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len + 64);
    while out.len() < len {
        let words = rng.gen_range(4..12);
        for w in 0..words {
            if w > 0 {
                out.push(b' ');
            }
            out.extend_from_slice(WORDS[rng.gen_range(0..WORDS.len())].as_bytes());
        }
        out.extend_from_slice(if rng.gen_range(0..6) == 0 { b".\n" } else { b". " });
    }
    out.truncate(len);
    out
}
