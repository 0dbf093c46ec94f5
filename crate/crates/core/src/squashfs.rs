//! SquashFS v4 structure parsing for zlib-compressed images.
//!
//! The parser turns a raw image into the inventory the repair stages need:
//! every independently compressed unit (data block, tail fragment block,
//! metadata block) with its on-disk extent, its expected decompressed
//! length where the format pins one down, and the files that own slices of
//! it. It reads only what the directory tree reaches, but the unit
//! inventory also covers unreferenced fragment entries and every metadata
//! block, so repair can target blocks the tree walk cannot see.
//!
//! Errors carry absolute offsets. A failed metadata decompression reports
//! the block's header offset, which is what a caller needs to aim a repair
//! at exactly that block and re-parse.

use std::collections::{BTreeMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::zlib::{Inflater, VerdictStatus};

pub const MAGIC: u32 = 0x7371_7368;
pub const SUPERBLOCK_LEN: usize = 96;
/// Metadata blocks decompress to at most this many bytes.
pub const METABLOCK_CAP: usize = 8192;
pub const NO_FRAGMENT: u32 = 0xFFFF_FFFF;
/// Fragment table entries per metadata block.
const FRAGS_PER_BLOCK: u32 = 512;
const IDS_PER_BLOCK: u32 = 2048;
const MAX_DEPTH: usize = 128;

#[derive(Debug, Error, PartialEq)]
pub enum SquashError {
    #[error("image is {0} bytes, too short for a superblock")]
    TooShort(usize),
    #[error("bad magic {found:#010x}")]
    BadMagic { found: u32 },
    #[error("unsupported version {major}.{minor}")]
    UnsupportedVersion { major: u16, minor: u16 },
    #[error("unsupported compression id {0}, only zlib images are handled")]
    UnsupportedCompression(u16),
    #[error("block size {block_size} inconsistent with log {block_log}")]
    BadBlockSize { block_size: u32, block_log: u16 },
    #[error("{what} at {offset:#x}..{end:#x} runs past the {len}-byte image")]
    OutOfBounds { what: &'static str, offset: u64, end: u64, len: u64 },
    #[error("metadata block at {offset:#x} does not decompress cleanly ({status:?})")]
    CorruptMetablock { offset: u64, status: VerdictStatus },
    #[error("metadata block at {offset:#x} is empty or oversized ({got} bytes)")]
    BadMetablockLen { offset: u64, got: usize },
    #[error("metadata blocks starting at {start:#x} do not tile the region ending at {end:#x}")]
    MisalignedTable { start: u64, end: u64 },
    #[error("inode reference {reference:#x} lands outside its table")]
    BadInodeRef { reference: u64 },
    #[error("unsupported inode type {0}")]
    BadInodeType(u16),
    #[error("inconsistent inode: {0}")]
    BadInode(String),
    #[error("malformed directory listing: {0}")]
    BadDirectory(String),
    #[error("directory {path:?} is reachable along two paths")]
    DirectoryCycle { path: String },
    #[error("directory tree nests deeper than {0} levels")]
    TooDeep(usize),
    #[error("fragment index {index} out of range, table has {count}")]
    BadFragmentIndex { index: u32, count: u32 },
    #[error("{what} record is truncated")]
    TruncatedRecord { what: &'static str },
    #[error("assembling {path:?}: unit {unit} payload has {have} bytes, need {need}")]
    AssemblyShortUnit { path: String, unit: usize, need: u64, have: usize },
    #[error("assembled {path:?} to {got} bytes, inode says {expected}")]
    AssemblySizeMismatch { path: String, expected: u64, got: u64 },
    #[error("unit at {start:#x} does not decompress cleanly ({status:?})")]
    CorruptUnit { start: u64, status: VerdictStatus },
    #[error("unit at {start:#x} decompressed to {got} bytes, expected {expected}")]
    UnitLengthMismatch { start: u64, expected: u32, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Superblock {
    pub inode_count: u32,
    pub mod_time: u32,
    pub block_size: u32,
    pub frag_count: u32,
    pub compression_id: u16,
    pub block_log: u16,
    pub flags: u16,
    pub id_count: u16,
    pub version_major: u16,
    pub version_minor: u16,
    pub root_inode_ref: u64,
    pub bytes_used: u64,
    pub id_table_start: u64,
    pub xattr_id_table_start: u64,
    pub inode_table_start: u64,
    pub directory_table_start: u64,
    pub fragment_table_start: u64,
    pub export_table_start: u64,
}

impl Superblock {
    /// Parses and validates the 96-byte superblock at the image start.
    pub fn parse(image: &[u8]) -> Result<Superblock, SquashError> {
        if image.len() < SUPERBLOCK_LEN {
            return Err(SquashError::TooShort(image.len()));
        }
        let u16_at = |i: usize| u16::from_le_bytes(image[i..i + 2].try_into().unwrap());
        let u32_at = |i: usize| u32::from_le_bytes(image[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(image[i..i + 8].try_into().unwrap());
        let sb = Superblock {
            inode_count: u32_at(4),
            mod_time: u32_at(8),
            block_size: u32_at(12),
            frag_count: u32_at(16),
            compression_id: u16_at(20),
            block_log: u16_at(22),
            flags: u16_at(24),
            id_count: u16_at(26),
            version_major: u16_at(28),
            version_minor: u16_at(30),
            root_inode_ref: u64_at(32),
            bytes_used: u64_at(40),
            id_table_start: u64_at(48),
            xattr_id_table_start: u64_at(56),
            inode_table_start: u64_at(64),
            directory_table_start: u64_at(72),
            fragment_table_start: u64_at(80),
            export_table_start: u64_at(88),
        };
        let magic = u32_at(0);
        if magic != MAGIC {
            return Err(SquashError::BadMagic { found: magic });
        }
        if (sb.version_major, sb.version_minor) != (4, 0) {
            return Err(SquashError::UnsupportedVersion {
                major: sb.version_major,
                minor: sb.version_minor,
            });
        }
        if sb.compression_id != 1 {
            return Err(SquashError::UnsupportedCompression(sb.compression_id));
        }
        let log_ok = sb.block_log < 32 && 1u32.checked_shl(sb.block_log as u32) == Some(sb.block_size);
        if !log_ok || !(4096..=1_048_576).contains(&sb.block_size) {
            return Err(SquashError::BadBlockSize { block_size: sb.block_size, block_log: sb.block_log });
        }
        Ok(sb)
    }
}

/// Reads a metadata block header: (on-disk payload length, compressed).
pub fn read_metablock_header(image: &[u8], offset: u64) -> Result<(usize, bool), SquashError> {
    let end = offset + 2;
    if end > image.len() as u64 {
        return Err(SquashError::OutOfBounds {
            what: "metadata header",
            offset,
            end,
            len: image.len() as u64,
        });
    }
    let word = u16::from_le_bytes(image[offset as usize..end as usize].try_into().unwrap());
    let len = (word & 0x7FFF) as usize;
    let compressed = word & 0x8000 == 0;
    if len == 0 || len > METABLOCK_CAP {
        return Err(SquashError::BadMetablockLen { offset, got: len });
    }
    Ok((len, compressed))
}

/// Decompresses the metadata block whose header sits at `offset`. Returns
/// the payload and the offset one past the block.
fn read_metablock(image: &[u8], offset: u64, inf: &mut Inflater) -> Result<(Vec<u8>, u64), SquashError> {
    let (len, compressed) = read_metablock_header(image, offset)?;
    let start = offset + 2;
    let end = start + len as u64;
    if end > image.len() as u64 {
        return Err(SquashError::OutOfBounds {
            what: "metadata block",
            offset: start,
            end,
            len: image.len() as u64,
        });
    }
    let raw = &image[start as usize..end as usize];
    let payload = if compressed {
        let v = inf.check(raw, METABLOCK_CAP);
        if !v.is_valid() {
            return Err(SquashError::CorruptMetablock { offset, status: v.status });
        }
        v.payload.expect("valid verdict carries payload")
    } else {
        raw.to_vec()
    };
    Ok((payload, end))
}

struct CachedBlock {
    payload: Vec<u8>,
    next_rel: u64,
}

/// Caching reader over one metadata table. Blocks are keyed by their offset
/// relative to the table start, the coordinate inode references use.
struct TableReader<'a> {
    image: &'a [u8],
    base: u64,
    cache: BTreeMap<u64, CachedBlock>,
}

impl<'a> TableReader<'a> {
    fn new(image: &'a [u8], base: u64) -> TableReader<'a> {
        TableReader { image, base, cache: BTreeMap::new() }
    }

    fn block(&mut self, rel: u64, inf: &mut Inflater) -> Result<&CachedBlock, SquashError> {
        if !self.cache.contains_key(&rel) {
            let (payload, next_abs) = read_metablock(self.image, self.base + rel, inf)?;
            self.cache.insert(rel, CachedBlock { payload, next_rel: next_abs - self.base });
        }
        Ok(&self.cache[&rel])
    }
}

/// Reads `n` bytes starting at table position `pos`, following the block
/// chain when a record straddles metadata blocks. Advances `pos`.
fn stream_read(
    tr: &mut TableReader,
    inf: &mut Inflater,
    pos: &mut (u64, usize),
    n: usize,
) -> Result<Vec<u8>, SquashError> {
    let mut out = vec![0u8; n];
    let mut written = 0;
    while written < n {
        let block = tr.block(pos.0, inf)?;
        if pos.1 > block.payload.len() {
            return Err(SquashError::BadInodeRef { reference: (pos.0 << 16) | pos.1 as u64 });
        }
        if pos.1 == block.payload.len() {
            *pos = (block.next_rel, 0);
            continue;
        }
        let take = (block.payload.len() - pos.1).min(n - written);
        out[written..written + take].copy_from_slice(&block.payload[pos.1..pos.1 + take]);
        pos.1 += take;
        written += take;
    }
    Ok(out)
}

/// Fallible little-endian reader over an exact-sized record.
struct Cursor<'a> {
    b: &'a [u8],
    i: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(b: &'a [u8], what: &'static str) -> Cursor<'a> {
        Cursor { b, i: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SquashError> {
        if self.i + n > self.b.len() {
            return Err(SquashError::TruncatedRecord { what: self.what });
        }
        let s = &self.b[self.i..self.i + n];
        self.i += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, SquashError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, SquashError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SquashError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.i == self.b.len()
    }

    fn remaining(&self) -> usize {
        self.b.len() - self.i
    }
}

#[derive(Debug)]
enum Inode {
    Dir { start_block: u32, offset: u16, listing_len: u32 },
    File { blocks_start: u64, fragment: u32, frag_offset: u32, file_size: u64, size_words: Vec<u32> },
    Symlink { target: Vec<u8> },
    Other,
}

/// Reads the inode at table position `pos` and advances past it.
fn read_inode(
    tr: &mut TableReader,
    inf: &mut Inflater,
    pos: &mut (u64, usize),
    block_size: u32,
) -> Result<Inode, SquashError> {
    let header = stream_read(tr, inf, pos, 16)?;
    let inode_type = u16::from_le_bytes(header[0..2].try_into().unwrap());
    match inode_type {
        1 => {
            let body = stream_read(tr, inf, pos, 16)?;
            let mut c = Cursor::new(&body, "directory inode");
            let start_block = c.u32()?;
            let _nlink = c.u32()?;
            let file_size = c.u16()?;
            let offset = c.u16()?;
            let _parent = c.u32()?;
            Ok(Inode::Dir { start_block, offset, listing_len: file_size.saturating_sub(3) as u32 })
        }
        8 => {
            let body = stream_read(tr, inf, pos, 24)?;
            let mut c = Cursor::new(&body, "extended directory inode");
            let _nlink = c.u32()?;
            let file_size = c.u32()?;
            let start_block = c.u32()?;
            let _parent = c.u32()?;
            let _index_count = c.u16()?;
            let offset = c.u16()?;
            let _xattr = c.u32()?;
            Ok(Inode::Dir { start_block, offset, listing_len: file_size.saturating_sub(3) })
        }
        2 | 9 => {
            let (blocks_start, fragment, frag_offset, file_size) = if inode_type == 2 {
                let body = stream_read(tr, inf, pos, 16)?;
                let mut c = Cursor::new(&body, "file inode");
                let start = c.u32()? as u64;
                let fragment = c.u32()?;
                let offset = c.u32()?;
                let size = c.u32()? as u64;
                (start, fragment, offset, size)
            } else {
                let body = stream_read(tr, inf, pos, 40)?;
                let mut c = Cursor::new(&body, "extended file inode");
                let start = c.u64()?;
                let size = c.u64()?;
                let _sparse = c.u64()?;
                let _nlink = c.u32()?;
                let fragment = c.u32()?;
                let offset = c.u32()?;
                let _xattr = c.u32()?;
                (start, fragment, offset, size)
            };
            let bs = block_size as u64;
            let block_count = if fragment == NO_FRAGMENT {
                file_size.div_ceil(bs)
            } else {
                file_size / bs
            };
            if block_count > 1 << 24 {
                return Err(SquashError::BadInode(format!(
                    "file claims {block_count} blocks for {file_size} bytes"
                )));
            }
            let raw = stream_read(tr, inf, pos, 4 * block_count as usize)?;
            let size_words = raw
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Inode::File { blocks_start, fragment, frag_offset, file_size, size_words })
        }
        3 | 10 => {
            let body = stream_read(tr, inf, pos, 8)?;
            let mut c = Cursor::new(&body, "symlink inode");
            let _nlink = c.u32()?;
            let target_size = c.u32()?;
            if target_size > 65_535 {
                return Err(SquashError::BadInode(format!("symlink target of {target_size} bytes")));
            }
            let target = stream_read(tr, inf, pos, target_size as usize)?;
            Ok(Inode::Symlink { target })
        }
        4..=7 | 11..=14 => Ok(Inode::Other),
        other => Err(SquashError::BadInodeType(other)),
    }
}

/// One parsed directory entry: a name and the child's inode reference.
struct DirEntry {
    name: String,
    inode_ref: u64,
}

fn parse_listing(listing: &[u8]) -> Result<Vec<DirEntry>, SquashError> {
    let mut c = Cursor::new(listing, "directory listing");
    let mut entries = Vec::new();
    while !c.done() {
        if c.remaining() < 12 {
            return Err(SquashError::BadDirectory("dangling header bytes".into()));
        }
        let count = c.u32()? as usize + 1;
        let start_block = c.u32()?;
        let _inode_base = c.u32()?;
        if count > 256 {
            return Err(SquashError::BadDirectory(format!("header claims {count} entries")));
        }
        for _ in 0..count {
            let offset = c.u16()?;
            let _inode_delta = c.u16()? as i16;
            let _type_code = c.u16()?;
            let name_len = c.u16()? as usize + 1;
            if name_len > 256 {
                return Err(SquashError::BadDirectory(format!("name of {name_len} bytes")));
            }
            let raw = c.take(name_len)?;
            if raw.contains(&b'/') || raw.contains(&0) || raw == b"." || raw == b".." {
                return Err(SquashError::BadDirectory(format!("illegal name {:?}", String::from_utf8_lossy(raw))));
            }
            let name = String::from_utf8_lossy(raw).into_owned();
            entries.push(DirEntry { name, inode_ref: ((start_block as u64) << 16) | offset as u64 });
        }
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct FragEntry {
    start: u64,
    size: u32,
    compressed: bool,
}

fn frag_pointers(image: &[u8], sb: &Superblock) -> Result<Vec<u64>, SquashError> {
    if sb.frag_count == 0 {
        return Ok(Vec::new());
    }
    let n = sb.frag_count.div_ceil(FRAGS_PER_BLOCK) as u64;
    let start = sb.fragment_table_start;
    let end = start + 8 * n;
    if end > image.len() as u64 {
        return Err(SquashError::OutOfBounds { what: "fragment pointer table", offset: start, end, len: image.len() as u64 });
    }
    Ok(image[start as usize..end as usize]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_fragment_table(image: &[u8], sb: &Superblock, inf: &mut Inflater) -> Result<Vec<FragEntry>, SquashError> {
    let pointers = frag_pointers(image, sb)?;
    let mut entries = Vec::with_capacity(sb.frag_count as usize);
    for (bi, &ptr) in pointers.iter().enumerate() {
        let in_block = (sb.frag_count - bi as u32 * FRAGS_PER_BLOCK).min(FRAGS_PER_BLOCK) as usize;
        let (payload, _) = read_metablock(image, ptr, inf)?;
        if payload.len() != 16 * in_block {
            return Err(SquashError::BadDirectory(format!(
                "fragment table block {bi} holds {} bytes, expected {}",
                payload.len(),
                16 * in_block
            )));
        }
        let mut c = Cursor::new(&payload, "fragment entry");
        for _ in 0..in_block {
            let start = c.u64()?;
            let word = c.u32()?;
            let _unused = c.u32()?;
            entries.push(FragEntry {
                start,
                size: word & 0x00FF_FFFF,
                compressed: word & 0x0100_0000 == 0,
            });
        }
    }
    Ok(entries)
}

/// What a compressed unit is to the filesystem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    DataBlock,
    Fragment,
    Metadata,
}

/// A file's claim on a slice of one unit's decompressed payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitOwner {
    pub path: String,
    /// Offset of the slice within the owning file.
    pub file_offset: u64,
    /// Offset of the slice within the unit's decompressed payload.
    pub slice_offset: u32,
    pub len: u32,
}

/// One independently compressed extent of the image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub kind: UnitKind,
    /// Absolute offset of the compressed payload. Metadata blocks have a
    /// 2-byte header at `start - 2`.
    pub start: u64,
    /// On-disk payload length in bytes.
    pub len: u32,
    /// False for stored (uncompressed) units, which carry no checksum.
    pub compressed: bool,
    /// Exact decompressed length when the format pins one down.
    pub expected_len: Option<u32>,
    /// Decompression cap handed to the oracle.
    pub max_len: u32,
    pub owners: Vec<UnitOwner>,
}

/// One piece of a regular file's content, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilePart {
    /// `len` bytes at `offset` within unit `unit`'s decompressed payload.
    Unit { unit: usize, offset: u32, len: u32 },
    /// A hole: `len` zero bytes, nothing stored on disk.
    Sparse { len: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub file_size: u64,
    pub parts: Vec<FilePart>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Image {
    pub superblock: Superblock,
    pub files: Vec<FileEntry>,
    pub directories: Vec<String>,
    pub symlinks: Vec<(String, String)>,
    /// All compressed units, sorted by start offset.
    pub units: Vec<Unit>,
}

/// Key for unit deduplication before indices are assigned.
type UnitKey = (u64, u32, UnitKind);

struct UnitBuild {
    compressed: bool,
    expected_len: Option<u32>,
    max_len: u32,
    owners: Vec<UnitOwner>,
}

#[derive(Debug)]
enum DraftPart {
    Unit { key: UnitKey, offset: u32, len: u32 },
    Sparse { len: u32 },
}

/// Walks the full structure of a healthy image.
pub fn parse_image(image: &[u8]) -> Result<Image, SquashError> {
    let sb = Superblock::parse(image)?;
    let mut inf = Inflater::new();
    let frag_entries = read_fragment_table(image, &sb, &mut inf)?;
    let mut tr_inode = TableReader::new(image, sb.inode_table_start);
    let mut tr_dir = TableReader::new(image, sb.directory_table_start);

    let mut units: BTreeMap<UnitKey, UnitBuild> = BTreeMap::new();
    // Inventory every fragment block up front; files referencing one later
    // attach owners and an expected length.
    for e in &frag_entries {
        units.insert(
            (e.start, e.size, UnitKind::Fragment),
            UnitBuild { compressed: e.compressed, expected_len: None, max_len: sb.block_size, owners: Vec::new() },
        );
    }

    let mut files: Vec<(String, u64, Vec<DraftPart>)> = Vec::new();
    let mut directories: Vec<String> = Vec::new();
    let mut symlinks: Vec<(String, String)> = Vec::new();

    let mut queue: VecDeque<(String, u64, usize)> = VecDeque::new();
    let mut visited_dirs: HashSet<u64> = HashSet::new();
    queue.push_back((String::new(), sb.root_inode_ref, 0));
    visited_dirs.insert(sb.root_inode_ref);

    while let Some((path, inode_ref, depth)) = queue.pop_front() {
        if depth > MAX_DEPTH {
            return Err(SquashError::TooDeep(MAX_DEPTH));
        }
        let mut pos = (inode_ref >> 16, (inode_ref & 0xFFFF) as usize);
        let inode = read_inode(&mut tr_inode, &mut inf, &mut pos, sb.block_size)?;
        let Inode::Dir { start_block, offset, listing_len } = inode else {
            return Err(SquashError::BadDirectory(format!(
                "inode for directory {path:?} is not a directory"
            )));
        };
        let listing = if listing_len == 0 {
            Vec::new()
        } else {
            let mut dpos = (start_block as u64, offset as usize);
            stream_read(&mut tr_dir, &mut inf, &mut dpos, listing_len as usize)?
        };
        for entry in parse_listing(&listing)? {
            let child_path = if path.is_empty() { entry.name.clone() } else { format!("{path}/{}", entry.name) };
            let mut cpos = (entry.inode_ref >> 16, (entry.inode_ref & 0xFFFF) as usize);
            match read_inode(&mut tr_inode, &mut inf, &mut cpos, sb.block_size)? {
                Inode::Dir { .. } => {
                    if !visited_dirs.insert(entry.inode_ref) {
                        return Err(SquashError::DirectoryCycle { path: child_path });
                    }
                    directories.push(child_path.clone());
                    queue.push_back((child_path, entry.inode_ref, depth + 1));
                }
                Inode::File { blocks_start, fragment, frag_offset, file_size, size_words } => {
                    let parts = file_parts(
                        &child_path,
                        blocks_start,
                        fragment,
                        frag_offset,
                        file_size,
                        &size_words,
                        &sb,
                        &frag_entries,
                        image.len() as u64,
                        &mut units,
                    )?;
                    files.push((child_path, file_size, parts));
                }
                Inode::Symlink { target } => {
                    symlinks.push((child_path, String::from_utf8_lossy(&target).into_owned()));
                }
                Inode::Other => {}
            }
        }
    }

    // Fragment expected lengths: with tails packed back to back, the last
    // owner's end is the block's decompressed size.
    for build in units.values_mut() {
        if !build.owners.is_empty() {
            build.expected_len = build.owners.iter().map(|o| o.slice_offset + o.len).max();
        }
    }

    for u in scan_metadata_units(image, &sb)? {
        units.insert((u.start, u.len, UnitKind::Metadata), UnitBuild {
            compressed: u.compressed,
            expected_len: u.expected_len,
            max_len: u.max_len,
            owners: Vec::new(),
        });
    }

    // Freeze unit order by on-disk position and resolve draft parts.
    let mut order: Vec<(UnitKey, UnitBuild)> = units.into_iter().collect();
    order.sort_by_key(|(k, _)| *k);
    let index: BTreeMap<UnitKey, usize> = order.iter().enumerate().map(|(i, (k, _))| (*k, i)).collect();
    let mut final_units: Vec<Unit> = order
        .into_iter()
        .map(|((start, len, kind), b)| Unit {
            kind,
            start,
            len,
            compressed: b.compressed,
            expected_len: b.expected_len,
            max_len: b.max_len,
            owners: b.owners,
        })
        .collect();
    for u in &mut final_units {
        u.owners.sort_by(|a, b| (&a.path, a.file_offset).cmp(&(&b.path, b.file_offset)));
    }

    let mut file_entries: Vec<FileEntry> = files
        .into_iter()
        .map(|(path, file_size, drafts)| FileEntry {
            path,
            file_size,
            parts: drafts
                .into_iter()
                .map(|d| match d {
                    DraftPart::Sparse { len } => FilePart::Sparse { len },
                    DraftPart::Unit { key, offset, len } => FilePart::Unit { unit: index[&key], offset, len },
                })
                .collect(),
        })
        .collect();
    file_entries.sort_by(|a, b| a.path.cmp(&b.path));
    directories.sort();
    symlinks.sort();

    Ok(Image { superblock: sb, files: file_entries, directories, symlinks, units: final_units })
}

/// Resolves one file inode into parts, registering units and owners.
#[allow(clippy::too_many_arguments)]
fn file_parts(
    path: &str,
    blocks_start: u64,
    fragment: u32,
    frag_offset: u32,
    file_size: u64,
    size_words: &[u32],
    sb: &Superblock,
    frag_entries: &[FragEntry],
    image_len: u64,
    units: &mut BTreeMap<UnitKey, UnitBuild>,
) -> Result<Vec<DraftPart>, SquashError> {
    let bs = sb.block_size as u64;
    let mut parts = Vec::with_capacity(size_words.len() + 1);
    let mut disk = blocks_start;
    let tail_len = if fragment == NO_FRAGMENT { 0 } else { file_size - size_words.len() as u64 * bs };
    for (i, &word) in size_words.iter().enumerate() {
        let is_last = i + 1 == size_words.len();
        let expected = if fragment == NO_FRAGMENT && is_last {
            (file_size - i as u64 * bs) as u32
        } else {
            sb.block_size
        };
        let on_disk = word & 0x00FF_FFFF;
        let compressed = word & 0x0100_0000 == 0;
        if on_disk == 0 {
            parts.push(DraftPart::Sparse { len: expected });
            continue;
        }
        if on_disk > sb.block_size {
            return Err(SquashError::BadInode(format!(
                "{path:?} block {i} claims {on_disk} on-disk bytes with block size {}",
                sb.block_size
            )));
        }
        let end = disk + on_disk as u64;
        if end > image_len {
            return Err(SquashError::OutOfBounds { what: "data block", offset: disk, end, len: image_len });
        }
        let key = (disk, on_disk, UnitKind::DataBlock);
        let build = units.entry(key).or_insert(UnitBuild {
            compressed,
            expected_len: Some(expected),
            max_len: sb.block_size,
            owners: Vec::new(),
        });
        build.owners.push(UnitOwner {
            path: path.to_string(),
            file_offset: i as u64 * bs,
            slice_offset: 0,
            len: expected,
        });
        parts.push(DraftPart::Unit { key, offset: 0, len: expected });
        disk = end;
    }
    if fragment != NO_FRAGMENT && tail_len > 0 {
        let entry = frag_entries.get(fragment as usize).ok_or(SquashError::BadFragmentIndex {
            index: fragment,
            count: frag_entries.len() as u32,
        })?;
        if frag_offset as u64 + tail_len > bs {
            return Err(SquashError::BadInode(format!(
                "{path:?} tail at {frag_offset}+{tail_len} exceeds block size {bs}"
            )));
        }
        let end = entry.start + entry.size as u64;
        if end > image_len {
            return Err(SquashError::OutOfBounds { what: "fragment block", offset: entry.start, end, len: image_len });
        }
        let key = (entry.start, entry.size, UnitKind::Fragment);
        let build = units.get_mut(&key).expect("fragment units are pre-seeded");
        build.owners.push(UnitOwner {
            path: path.to_string(),
            file_offset: size_words.len() as u64 * bs,
            slice_offset: frag_offset,
            len: tail_len as u32,
        });
        parts.push(DraftPart::Unit { key, offset: frag_offset, len: tail_len as u32 });
    }
    Ok(parts)
}

/// Walks `[start, end)` as a run of back-to-back metadata blocks.
fn walk_region(image: &[u8], start: u64, end: u64, units: &mut Vec<Unit>) -> Result<(), SquashError> {
    let mut offset = start;
    while offset < end {
        let (len, compressed) = read_metablock_header(image, offset)?;
        let next = offset + 2 + len as u64;
        if next > end {
            return Err(SquashError::MisalignedTable { start, end });
        }
        units.push(Unit {
            kind: UnitKind::Metadata,
            start: offset + 2,
            len: len as u32,
            compressed,
            expected_len: None,
            max_len: METABLOCK_CAP as u32,
            owners: Vec::new(),
        });
        offset = next;
    }
    Ok(())
}

/// Inventories every metadata block using headers only, so it works even
/// when block payloads are corrupt. Requires intact headers and the
/// standard table layout (inode table, then directory table, then the
/// remaining tables).
pub fn scan_metadata_units(image: &[u8], sb: &Superblock) -> Result<Vec<Unit>, SquashError> {
    let image_len = image.len() as u64;
    let mut units = Vec::new();
    if sb.directory_table_start < sb.inode_table_start {
        return Err(SquashError::MisalignedTable { start: sb.inode_table_start, end: sb.directory_table_start });
    }
    walk_region(image, sb.inode_table_start, sb.directory_table_start, &mut units)?;

    // The directory table region ends at the first later structure.
    let frag_ptrs = frag_pointers(image, sb)?;
    let mut candidates: Vec<u64> = frag_ptrs.clone();
    for t in [sb.fragment_table_start, sb.export_table_start, sb.id_table_start, sb.xattr_id_table_start] {
        if t != u64::MAX {
            candidates.push(t);
        }
    }
    candidates.push(sb.bytes_used.min(image_len));
    let dir_end = candidates
        .into_iter()
        .filter(|&c| c >= sb.directory_table_start)
        .min()
        .unwrap_or(image_len);
    walk_region(image, sb.directory_table_start, dir_end, &mut units)?;

    // Pointer-addressed table blocks: fragments, ids, optional export.
    for ptr in frag_ptrs {
        walk_one(image, ptr, &mut units)?;
    }
    if sb.id_count > 0 && sb.id_table_start != u64::MAX {
        let n = u32::from(sb.id_count).div_ceil(IDS_PER_BLOCK) as u64;
        walk_pointer_table(image, sb.id_table_start, n, "id pointer table", &mut units)?;
    }
    if sb.export_table_start != u64::MAX {
        let n = sb.inode_count.div_ceil(1024) as u64;
        walk_pointer_table(image, sb.export_table_start, n, "export pointer table", &mut units)?;
    }

    units.sort_by_key(|u| (u.start, u.len));
    units.dedup_by_key(|u| (u.start, u.len));
    Ok(units)
}

fn walk_one(image: &[u8], offset: u64, units: &mut Vec<Unit>) -> Result<(), SquashError> {
    let (len, compressed) = read_metablock_header(image, offset)?;
    let end = offset + 2 + len as u64;
    if end > image.len() as u64 {
        return Err(SquashError::OutOfBounds { what: "metadata block", offset, end, len: image.len() as u64 });
    }
    units.push(Unit {
        kind: UnitKind::Metadata,
        start: offset + 2,
        len: len as u32,
        compressed,
        expected_len: None,
        max_len: METABLOCK_CAP as u32,
        owners: Vec::new(),
    });
    Ok(())
}

fn walk_pointer_table(
    image: &[u8],
    ptr_start: u64,
    n: u64,
    what: &'static str,
    units: &mut Vec<Unit>,
) -> Result<(), SquashError> {
    let end = ptr_start + 8 * n;
    if end > image.len() as u64 {
        return Err(SquashError::OutOfBounds { what, offset: ptr_start, end, len: image.len() as u64 });
    }
    for c in image[ptr_start as usize..end as usize].chunks_exact(8) {
        walk_one(image, u64::from_le_bytes(c.try_into().unwrap()), units)?;
    }
    Ok(())
}

/// All fragment blocks as repair units, without owner information. Usable
/// when the inode or directory tables are too damaged to walk.
pub fn fragment_units(image: &[u8], sb: &Superblock, inf: &mut Inflater) -> Result<Vec<Unit>, SquashError> {
    let entries = read_fragment_table(image, sb, inf)?;
    Ok(entries
        .into_iter()
        .map(|e| Unit {
            kind: UnitKind::Fragment,
            start: e.start,
            len: e.size,
            compressed: e.compressed,
            expected_len: None,
            max_len: sb.block_size,
            owners: Vec::new(),
        })
        .collect())
}

/// Decompresses one unit from the image, enforcing the expected length.
pub fn decompress_unit(image: &[u8], unit: &Unit, inf: &mut Inflater) -> Result<Vec<u8>, SquashError> {
    let end = unit.start + unit.len as u64;
    if end > image.len() as u64 {
        return Err(SquashError::OutOfBounds { what: "unit", offset: unit.start, end, len: image.len() as u64 });
    }
    let raw = &image[unit.start as usize..end as usize];
    let payload = if unit.compressed {
        let v = inf.check(raw, unit.max_len as usize);
        if !v.is_valid() {
            return Err(SquashError::CorruptUnit { start: unit.start, status: v.status });
        }
        v.payload.expect("valid verdict carries payload")
    } else {
        raw.to_vec()
    };
    if let Some(expected) = unit.expected_len {
        if payload.len() != expected as usize {
            return Err(SquashError::UnitLengthMismatch { start: unit.start, expected, got: payload.len() });
        }
    }
    Ok(payload)
}

/// Assembles a file from decompressed unit payloads, indexed by unit id.
pub fn assemble_file(entry: &FileEntry, payloads: &[Option<Vec<u8>>]) -> Result<Vec<u8>, SquashError> {
    let mut out = Vec::with_capacity(entry.file_size as usize);
    for part in &entry.parts {
        match *part {
            FilePart::Sparse { len } => out.resize(out.len() + len as usize, 0),
            FilePart::Unit { unit, offset, len } => {
                let need = offset as u64 + len as u64;
                let payload = payloads
                    .get(unit)
                    .and_then(|p| p.as_ref())
                    .ok_or_else(|| SquashError::AssemblyShortUnit {
                        path: entry.path.clone(),
                        unit,
                        need,
                        have: 0,
                    })?;
                if need > payload.len() as u64 {
                    return Err(SquashError::AssemblyShortUnit {
                        path: entry.path.clone(),
                        unit,
                        need,
                        have: payload.len(),
                    });
                }
                out.extend_from_slice(&payload[offset as usize..(offset + len) as usize]);
            }
        }
    }
    if out.len() as u64 != entry.file_size {
        return Err(SquashError::AssemblySizeMismatch {
            path: entry.path.clone(),
            expected: entry.file_size,
            got: out.len() as u64,
        });
    }
    Ok(out)
}
