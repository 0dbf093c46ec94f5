//! Decompression oracle for zlib-wrapped deflate candidates.
//!
//! The repair search calls this oracle millions of times, each time with a
//! slightly different candidate buffer, and needs two things a stock inflate
//! library does not promise:
//!
//! 1. A total verdict. Corrupt input must never panic or hang, only classify.
//! 2. Exact consumed-byte accounting. When a candidate is rejected after the
//!    decoder examined only the first `n` bytes, any byte at offset >= `n`
//!    provably did not influence the rejection, so the search can restrict
//!    flips to the prefix. That bound is only as good as `n` is honest, so
//!    the inflate here is written from scratch and counts the bits it
//!    actually looked at.
//!
//! The decoder mirrors the acceptance rules of the canonical zlib
//! implementation: over-subscribed Huffman code sets are rejected, incomplete
//! sets are rejected except for the single one-bit-code case, an empty
//! distance set is tolerated until used, and a dynamic block must define the
//! end-of-block code. Anything the reference library inflates, this oracle
//! accepts with an identical payload; the test suite enforces that
//! differentially.

use serde::{Deserialize, Serialize};

/// Outcome classes for a candidate buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictStatus {
    /// Well-formed zlib stream whose Adler-32 trailer matches the payload.
    Valid,
    /// The 2-byte zlib header is malformed (bad method, bad check bits, or a
    /// preset-dictionary flag, which this format never uses).
    BadHeader,
    /// The deflate body is malformed or truncated.
    BadDeflate,
    /// The stream inflated cleanly but the stored checksum disagrees.
    AdlerMismatch,
    /// Decompressed output would exceed the caller's cap.
    TooLong,
}

/// What the oracle concluded about one candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleVerdict {
    pub status: VerdictStatus,
    /// Bytes of the candidate examined before the decision. For failures
    /// short of the end, bytes at index >= `consumed` were never read, so a
    /// flip there cannot change this verdict. For `Valid` /
    /// `AdlerMismatch` this is the stream length through the checksum;
    /// tolerated trailing garbage is not counted.
    pub consumed: usize,
    /// Decompressed payload, present only for `Valid`.
    pub payload: Option<Vec<u8>>,
    /// Adler-32 of the decompressed payload, when the decode got that far.
    pub computed_checksum: Option<u32>,
    /// Adler-32 stored in the trailer, when the decode got that far.
    pub stored_checksum: Option<u32>,
}

impl OracleVerdict {
    fn fail(status: VerdictStatus, consumed: usize) -> Self {
        OracleVerdict { status, consumed, payload: None, computed_checksum: None, stored_checksum: None }
    }

    pub fn is_valid(&self) -> bool {
        self.status == VerdictStatus::Valid
    }
}

/// Adler-32 over `data`. Sums are folded modulo 65521 only every `NMAX`
/// bytes, the largest stride for which the running sums fit in a `u32`.
pub fn adler32(data: &[u8]) -> u32 {
    const MOD: u32 = 65521;
    const NMAX: usize = 5552;
    let mut a: u32 = 1;
    let mut b: u32 = 0;
    for chunk in data.chunks(NMAX) {
        for &x in chunk {
            a += x as u32;
            b += a;
        }
        a %= MOD;
        b %= MOD;
    }
    (b << 16) | a
}

/// Checks one candidate with a fresh scratch buffer. For tight loops prefer
/// [`Inflater::check`], which reuses its allocations.
pub fn check_candidate(candidate: &[u8], max_len: usize) -> OracleVerdict {
    Inflater::new().check(candidate, max_len)
}

/// Like [`check_candidate`] but rejects trailing bytes after the checksum.
pub fn check_candidate_strict(candidate: &[u8], max_len: usize) -> OracleVerdict {
    Inflater::new().check_strict(candidate, max_len)
}

// ---------------------------------------------------------------------------
// Bit reader
// ---------------------------------------------------------------------------

/// Deflate failure classes carrying the byte count examined at the decision.
#[derive(Debug)]
enum Fail {
    Deflate(usize),
    TooLong(usize),
}

/// LSB-first bit reader. `peek` zero-pads past end of input so a lookup never
/// faults; `advance` is the only place end-of-input turns into an error, and
/// by then every remaining byte has been examined.
struct BitReader<'a> {
    data: &'a [u8],
    /// Next byte to load into `buf`.
    pos: usize,
    buf: u64,
    /// Valid low bits of `buf`.
    n: u32,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8]) -> Self {
        BitReader { data, pos: 0, buf: 0, n: 0 }
    }

    #[inline]
    fn refill(&mut self) {
        if self.pos + 8 <= self.data.len() {
            // Bulk path: merge a whole word. Bits at and above `n` already
            // hold the same stream content they are OR'd with, so the merge
            // is idempotent; `pos` advances by the bytes newly covered.
            let w = u64::from_le_bytes(self.data[self.pos..self.pos + 8].try_into().unwrap());
            self.buf |= w << self.n;
            self.pos += ((63 - self.n) >> 3) as usize;
            self.n |= 56;
        } else {
            while self.n <= 56 && self.pos < self.data.len() {
                self.buf |= (self.data[self.pos] as u64) << self.n;
                self.pos += 1;
                self.n += 8;
            }
        }
    }

    /// Bits [0, w) of the unread stream, zero-padded past end. w <= 32.
    #[inline]
    fn peek(&mut self, w: u32) -> usize {
        if self.n < w {
            self.refill();
        }
        (self.buf & ((1u64 << w) - 1)) as usize
    }

    /// `peek` for callers that already refilled this iteration. Safe at end
    /// of input because bits past `n` are zero on the byte-loop path.
    #[inline]
    fn peek_nofill(&self, w: u32) -> usize {
        (self.buf & ((1u64 << w) - 1)) as usize
    }

    /// Bits [skip, skip+w) without refilling. skip + w <= 57.
    #[inline]
    fn peek_after_nofill(&self, skip: u32, w: u32) -> usize {
        ((self.buf >> skip) & ((1u64 << w) - 1)) as usize
    }

    /// `take` for callers that already refilled this iteration.
    #[inline]
    fn take_nofill(&mut self, w: u32) -> Result<usize, Fail> {
        let v = self.peek_nofill(w);
        self.advance(w)?;
        Ok(v)
    }

    /// Absolute bit position of the next unread bit.
    #[inline]
    fn bit_pos(&self) -> usize {
        self.pos * 8 - self.n as usize
    }

    /// Bytes examined if the decision also inspected `probe` bits past the
    /// current position. Capped at the buffer length.
    #[inline]
    fn examined(&self, probe: u32) -> usize {
        (self.bit_pos() + probe as usize).div_ceil(8).min(self.data.len())
    }

    #[inline]
    fn advance(&mut self, w: u32) -> Result<(), Fail> {
        if self.n < w {
            self.refill();
            if self.n < w {
                // Truncated stream: everything was examined.
                return Err(Fail::Deflate(self.data.len()));
            }
        }
        self.buf >>= w;
        self.n -= w;
        Ok(())
    }

    /// Reads and consumes w bits, w <= 32.
    #[inline]
    fn take(&mut self, w: u32) -> Result<usize, Fail> {
        let v = self.peek(w);
        self.advance(w)?;
        Ok(v)
    }

    /// Drops bits up to the next byte boundary.
    fn align(&mut self) {
        let drop = self.n % 8;
        self.buf >>= drop;
        self.n -= drop;
    }

    /// Reads N whole bytes; requires byte alignment.
    fn read_bytes<const N: usize>(&mut self) -> Result<[u8; N], Fail> {
        debug_assert_eq!(self.bit_pos() % 8, 0);
        let mut out = [0u8; N];
        for slot in out.iter_mut() {
            *slot = self.take(8)? as u8;
        }
        Ok(out)
    }

    /// Bulk-copies `count` aligned bytes into `out`.
    fn copy_bytes(&mut self, count: usize, out: &mut Vec<u8>) -> Result<(), Fail> {
        debug_assert_eq!(self.bit_pos() % 8, 0);
        let mut left = count;
        while left > 0 && self.n >= 8 {
            out.push((self.buf & 0xFF) as u8);
            self.buf >>= 8;
            self.n -= 8;
            left -= 1;
        }
        if left == 0 {
            return Ok(());
        }
        // Byte-aligned with an empty bit buffer; any speculative bits merged
        // by the bulk refill are about to be bypassed, so drop them.
        debug_assert_eq!(self.n, 0);
        self.buf = 0;
        let avail = self.data.len() - self.pos;
        if left > avail {
            out.extend_from_slice(&self.data[self.pos..]);
            self.pos = self.data.len();
            return Err(Fail::Deflate(self.data.len()));
        }
        out.extend_from_slice(&self.data[self.pos..self.pos + left]);
        self.pos += left;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Canonical Huffman tables
// ---------------------------------------------------------------------------

const MAX_BITS: u32 = 15;
/// Primary lookup width. Codes longer than this go through one sub-table.
const PEEK: u32 = 9;
const INVALID: u32 = u32::MAX;
const SUBREF: u32 = 0x8000_0000;

/// Completeness policy when building a code set.
#[derive(Clone, Copy, PartialEq)]
enum Completeness {
    /// Code-length codes: must be exactly complete (or entirely empty).
    Exact,
    /// Literal/length and distance codes: a lone one-bit code is tolerated,
    /// matching what real-world compressors emit for degenerate alphabets.
    AllowLoneCode,
}

/// Two-level decode table. Primary entries resolve codes up to `PEEK` bits;
/// longer codes chain into `sub`. Entry layout: `(len << 16) | symbol` for a
/// direct hit, `SUBREF | (width << 24) | base` for a chain, `INVALID` for a
/// bit pattern no code covers.
struct Decoder {
    primary: Vec<u32>,
    sub: Vec<u32>,
    peek: u32,
    max_len: u32,
}

impl Decoder {
    fn new() -> Self {
        Decoder { primary: Vec::new(), sub: Vec::new(), peek: 0, max_len: 0 }
    }

    /// Rebuilds the table from per-symbol code lengths (0 = unused). Errors
    /// are reported as `None`; the caller maps them to a deflate failure.
    fn rebuild(&mut self, lens: &[u8], policy: Completeness) -> Option<()> {
        let mut count = [0u32; (MAX_BITS + 1) as usize];
        for &l in lens {
            count[l as usize] += 1;
        }
        let mut max_len = 0u32;
        for l in 1..=MAX_BITS {
            if count[l as usize] > 0 {
                max_len = l;
            }
        }
        self.max_len = max_len;
        if max_len == 0 {
            // No codes at all. Legal to build, fatal to use.
            return Some(());
        }

        // Kraft accounting: negative slack means over-subscribed, positive
        // slack an incomplete set.
        let mut left: i64 = 1;
        for l in 1..=MAX_BITS {
            left <<= 1;
            left -= count[l as usize] as i64;
            if left < 0 {
                return None;
            }
        }
        if left > 0 {
            let lone = count[1] == 1 && max_len == 1;
            if policy == Completeness::Exact || !lone {
                return None;
            }
        }

        // Canonical first-code per length.
        let mut next = [0u32; (MAX_BITS + 1) as usize];
        let mut code = 0u32;
        for l in 1..=MAX_BITS as usize {
            code = (code + count[l - 1]) << 1;
            next[l] = code;
        }

        self.peek = max_len.min(PEEK);
        self.primary.clear();
        self.primary.resize(1 << self.peek, INVALID);
        self.sub.clear();

        // First pass allocates one sub-table per primary prefix that hosts
        // long codes, sized by the longest code sharing the prefix.
        if max_len > self.peek {
            let mut sub_width = vec![0u32; 1 << self.peek];
            let mut scratch = next;
            for (sym, &l) in lens.iter().enumerate() {
                let l = l as u32;
                if l > self.peek {
                    let rev = reverse_bits(scratch[l as usize], l);
                    sub_width[rev as usize & ((1 << self.peek) - 1)] =
                        sub_width[rev as usize & ((1 << self.peek) - 1)].max(l - self.peek);
                }
                if l > 0 {
                    scratch[l as usize] += 1;
                }
                let _ = sym;
            }
            for (prefix, &w) in sub_width.iter().enumerate() {
                if w > 0 {
                    let base = self.sub.len() as u32;
                    self.sub.resize(self.sub.len() + (1usize << w), INVALID);
                    self.primary[prefix] = SUBREF | (w << 24) | base;
                }
            }
        }

        // Second pass fills entries, replicating each code across every bit
        // pattern that shares its prefix.
        for (sym, &l) in lens.iter().enumerate() {
            let l = l as u32;
            if l == 0 {
                continue;
            }
            let code = next[l as usize];
            next[l as usize] += 1;
            let rev = reverse_bits(code, l);
            let entry = (l << 16) | sym as u32;
            if l <= self.peek {
                let mut idx = rev as usize;
                let step = 1usize << l;
                while idx < (1 << self.peek) {
                    self.primary[idx] = entry;
                    idx += step;
                }
            } else {
                let prefix = rev as usize & ((1 << self.peek) - 1);
                let slot = self.primary[prefix];
                debug_assert_ne!(slot & SUBREF, 0);
                let width = (slot >> 24) & 0x7F;
                let base = (slot & 0x00FF_FFFF) as usize;
                let mut idx = (rev >> self.peek) as usize;
                let step = 1usize << (l - self.peek);
                while idx < (1 << width) {
                    self.sub[base + idx] = entry;
                    idx += step;
                }
            }
        }
        Some(())
    }

    /// Decodes one symbol. The bits that determined the symbol are consumed;
    /// an invalid pattern charges the full probe width to `consumed`.
    #[inline]
    fn decode(&self, br: &mut BitReader) -> Result<u32, Fail> {
        if self.max_len == 0 {
            return Err(Fail::Deflate(br.examined(0)));
        }
        br.peek(self.peek);
        self.decode_prefilled(br)
    }

    /// `decode` for loops that refill once per iteration. Requires a prior
    /// `refill` in the same iteration and a non-empty table.
    #[inline]
    fn decode_prefilled(&self, br: &mut BitReader) -> Result<u32, Fail> {
        let idx = br.peek_nofill(self.peek);
        let mut entry = self.primary[idx];
        let mut probe = self.peek;
        if entry != INVALID && entry & SUBREF != 0 {
            let width = (entry >> 24) & 0x7F;
            let base = (entry & 0x00FF_FFFF) as usize;
            let idx2 = br.peek_after_nofill(self.peek, width);
            entry = self.sub[base + idx2];
            probe += width;
        }
        if entry == INVALID {
            return Err(Fail::Deflate(br.examined(probe)));
        }
        br.advance(entry >> 16)?;
        Ok(entry & 0xFFFF)
    }
}

fn reverse_bits(code: u32, width: u32) -> u32 {
    code.reverse_bits() >> (32 - width)
}

// ---------------------------------------------------------------------------
// Deflate constants
// ---------------------------------------------------------------------------

const LEN_BASE: [u16; 29] = [
    3, 4, 5, 6, 7, 8, 9, 10, 11, 13, 15, 17, 19, 23, 27, 31, 35, 43, 51, 59, 67, 83, 99, 115, 131,
    163, 195, 227, 258,
];
const LEN_EXTRA: [u8; 29] = [
    0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0,
];
const DIST_BASE: [u16; 30] = [
    1, 2, 3, 4, 5, 7, 9, 13, 17, 25, 33, 49, 65, 97, 129, 193, 257, 385, 513, 769, 1025, 1537,
    2049, 3073, 4097, 6145, 8193, 12289, 16385, 24577,
];
const DIST_EXTRA: [u8; 30] = [
    0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13,
    13,
];
/// Transmission order of code-length code lengths in a dynamic block header.
const CLEN_ORDER: [usize; 19] = [16, 17, 18, 0, 8, 7, 9, 6, 10, 5, 11, 4, 12, 3, 13, 2, 14, 1, 15];

// ---------------------------------------------------------------------------
// Inflater
// ---------------------------------------------------------------------------

/// Reusable oracle. Owns every table and buffer the decode needs so repeated
/// checks allocate only when a candidate turns out valid.
pub struct Inflater {
    lit: Decoder,
    dist: Decoder,
    pre: Decoder,
    fixed_lit: Decoder,
    fixed_dist: Decoder,
    lens: Vec<u8>,
    out: Vec<u8>,
}

impl Default for Inflater {
    fn default() -> Self {
        Self::new()
    }
}

impl Inflater {
    pub fn new() -> Self {
        let mut fixed_lit = Decoder::new();
        let mut fixed_dist = Decoder::new();
        let mut lens = vec![0u8; 288];
        lens[0..144].fill(8);
        lens[144..256].fill(9);
        lens[256..280].fill(7);
        lens[280..288].fill(8);
        fixed_lit
            .rebuild(&lens, Completeness::Exact)
            .expect("fixed literal code set is complete");
        lens.truncate(32);
        lens.fill(5);
        fixed_dist
            .rebuild(&lens, Completeness::Exact)
            .expect("fixed distance code set is complete");
        Inflater {
            lit: Decoder::new(),
            dist: Decoder::new(),
            pre: Decoder::new(),
            fixed_lit,
            fixed_dist,
            lens: Vec::with_capacity(320),
            out: Vec::new(),
        }
    }

    /// Checks a candidate, tolerating trailing bytes after the checksum.
    pub fn check(&mut self, candidate: &[u8], max_len: usize) -> OracleVerdict {
        self.check_mode(candidate, max_len, false)
    }

    /// Checks a candidate; trailing bytes after the checksum are an error.
    pub fn check_strict(&mut self, candidate: &[u8], max_len: usize) -> OracleVerdict {
        self.check_mode(candidate, max_len, true)
    }

    fn check_mode(&mut self, candidate: &[u8], max_len: usize, strict: bool) -> OracleVerdict {
        use VerdictStatus::*;
        if candidate.len() < 2 {
            return OracleVerdict::fail(BadHeader, candidate.len());
        }
        let cmf = candidate[0];
        let flg = candidate[1];
        if cmf & 0x0F != 8 || cmf >> 4 > 7 {
            return OracleVerdict::fail(BadHeader, 1);
        }
        if !(cmf as u32 * 256 + flg as u32).is_multiple_of(31) || flg & 0x20 != 0 {
            return OracleVerdict::fail(BadHeader, 2);
        }

        let mut br = BitReader::new(candidate);
        br.advance(16).expect("header bytes are present");
        self.out.clear();

        match self.inflate_body(&mut br, max_len) {
            Err(Fail::Deflate(consumed)) => OracleVerdict::fail(BadDeflate, consumed),
            Err(Fail::TooLong(consumed)) => OracleVerdict::fail(TooLong, consumed),
            Ok(()) => {
                br.align();
                let stored = match br.read_bytes::<4>() {
                    Ok(b) => u32::from_be_bytes(b),
                    Err(Fail::Deflate(consumed)) => {
                        return OracleVerdict::fail(BadDeflate, consumed)
                    }
                    Err(Fail::TooLong(_)) => unreachable!("byte reads never hit the output cap"),
                };
                let consumed = br.bit_pos() / 8;
                let computed = adler32(&self.out);
                if computed != stored {
                    return OracleVerdict {
                        status: AdlerMismatch,
                        consumed,
                        payload: None,
                        computed_checksum: Some(computed),
                        stored_checksum: Some(stored),
                    };
                }
                if strict && consumed < candidate.len() {
                    return OracleVerdict::fail(BadDeflate, candidate.len());
                }
                OracleVerdict {
                    status: Valid,
                    consumed,
                    payload: Some(self.out.clone()),
                    computed_checksum: Some(computed),
                    stored_checksum: Some(stored),
                }
            }
        }
    }

    fn inflate_body(&mut self, br: &mut BitReader, max_len: usize) -> Result<(), Fail> {
        loop {
            let bfinal = br.take(1)?;
            let btype = br.take(2)?;
            match btype {
                0 => copy_stored(br, &mut self.out, max_len)?,
                1 => decode_block(&self.fixed_lit, &self.fixed_dist, br, &mut self.out, max_len)?,
                2 => {
                    self.read_dynamic_tables(br)?;
                    decode_block(&self.lit, &self.dist, br, &mut self.out, max_len)?;
                }
                _ => return Err(Fail::Deflate(br.examined(0))),
            }
            if bfinal == 1 {
                return Ok(());
            }
        }
    }

    /// Parses a dynamic block header into `self.lit` / `self.dist`.
    fn read_dynamic_tables(&mut self, br: &mut BitReader) -> Result<(), Fail> {
        let hlit = br.take(5)? + 257;
        let hdist = br.take(5)? + 1;
        let hclen = br.take(4)? + 4;
        if hlit > 286 || hdist > 30 {
            return Err(Fail::Deflate(br.examined(0)));
        }

        let mut clens = [0u8; 19];
        for &slot in CLEN_ORDER.iter().take(hclen) {
            clens[slot] = br.take(3)? as u8;
        }
        self.pre
            .rebuild(&clens, Completeness::Exact)
            .ok_or(Fail::Deflate(br.examined(0)))?;

        let total = hlit + hdist;
        self.lens.clear();
        while self.lens.len() < total {
            let sym = self.pre.decode(br)?;
            match sym {
                0..=15 => self.lens.push(sym as u8),
                16 => {
                    let &prev = self.lens.last().ok_or(Fail::Deflate(br.examined(0)))?;
                    let reps = 3 + br.take(2)?;
                    if self.lens.len() + reps > total {
                        return Err(Fail::Deflate(br.examined(0)));
                    }
                    self.lens.extend(std::iter::repeat_n(prev, reps));
                }
                17 | 18 => {
                    let reps = if sym == 17 { 3 + br.take(3)? } else { 11 + br.take(7)? };
                    if self.lens.len() + reps > total {
                        return Err(Fail::Deflate(br.examined(0)));
                    }
                    self.lens.extend(std::iter::repeat_n(0u8, reps));
                }
                _ => unreachable!("code-length alphabet stops at 18"),
            }
        }
        if self.lens[256] == 0 {
            // A block with no end-of-block code can never terminate.
            return Err(Fail::Deflate(br.examined(0)));
        }
        self.lit
            .rebuild(&self.lens[..hlit], Completeness::AllowLoneCode)
            .ok_or(Fail::Deflate(br.examined(0)))?;
        self.dist
            .rebuild(&self.lens[hlit..total], Completeness::AllowLoneCode)
            .ok_or(Fail::Deflate(br.examined(0)))?;
        Ok(())
    }
}

/// Stored block: realign, check LEN against its complement, bulk copy.
fn copy_stored(br: &mut BitReader, out: &mut Vec<u8>, max_len: usize) -> Result<(), Fail> {
    br.align();
    let len = u16::from_le_bytes(br.read_bytes::<2>()?) as usize;
    let nlen = u16::from_le_bytes(br.read_bytes::<2>()?) as usize;
    if len != (nlen ^ 0xFFFF) {
        return Err(Fail::Deflate(br.examined(0)));
    }
    if out.len() + len > max_len {
        return Err(Fail::TooLong(br.examined(0)));
    }
    br.copy_bytes(len, out)
}

/// Huffman-coded block body shared by the fixed and dynamic paths.
///
/// One refill per iteration covers the worst-case symbol group: a 15-bit
/// literal/length code, 5 extra length bits, a 15-bit distance code, and 13
/// extra distance bits total 48 of the >= 56 buffered bits.
fn decode_block(
    lit: &Decoder,
    dist: &Decoder,
    br: &mut BitReader,
    out: &mut Vec<u8>,
    max_len: usize,
) -> Result<(), Fail> {
    // A literal alphabet with no codes can never even reach end-of-block. An
    // empty distance alphabet is legal until the first match uses it.
    if lit.max_len == 0 {
        return Err(Fail::Deflate(br.examined(0)));
    }
    loop {
        br.refill();
        let sym = lit.decode_prefilled(br)?;
        match sym {
            0..=255 => {
                if out.len() >= max_len {
                    return Err(Fail::TooLong(br.examined(0)));
                }
                out.push(sym as u8);
            }
            256 => return Ok(()),
            257..=285 => {
                let idx = (sym - 257) as usize;
                let len = LEN_BASE[idx] as usize + br.take_nofill(LEN_EXTRA[idx] as u32)?;
                if dist.max_len == 0 {
                    return Err(Fail::Deflate(br.examined(0)));
                }
                let dsym = dist.decode_prefilled(br)? as usize;
                if dsym >= 30 {
                    return Err(Fail::Deflate(br.examined(0)));
                }
                let d = DIST_BASE[dsym] as usize + br.take_nofill(DIST_EXTRA[dsym] as u32)?;
                if d > out.len() {
                    // Back-reference into data that was never produced.
                    return Err(Fail::Deflate(br.examined(0)));
                }
                if out.len() + len > max_len {
                    return Err(Fail::TooLong(br.examined(0)));
                }
                let start = out.len() - d;
                if d >= len {
                    out.extend_from_within(start..start + len);
                } else if d == 1 {
                    let byte = out[start];
                    out.resize(out.len() + len, byte);
                } else {
                    for i in 0..len {
                        let byte = out[start + i];
                        out.push(byte);
                    }
                }
            }
            _ => return Err(Fail::Deflate(br.examined(0))),
        }
    }
}
