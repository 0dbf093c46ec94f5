//! Raw NAND dump preparation.
//!
//! A raw chip read interleaves each data page with its out-of-band spare area
//! (ECC and bookkeeping bytes). Everything downstream works on the clean data
//! stream, so the spare areas go first. After that, a windowed entropy scan
//! locates the regions worth looking at: filesystems full of compressed
//! blocks sit just below the entropy ceiling, encrypted partitions sit at it,
//! and erased flash reads as zeros.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DumpError {
    #[error("page layout invalid: {data} data bytes in {total}-byte pages")]
    BadGeometry { total: usize, data: usize },
    #[error("raw dump of {raw} bytes is not a whole number of {total}-byte pages")]
    RaggedDump { raw: usize, total: usize },
    #[error("buffers differ in length: {a} vs {b} bytes")]
    LengthMismatch { a: usize, b: usize },
}

/// Physical page layout of the raw read: `total` bytes per page on the wire,
/// of which the first `data` are payload and the rest spare area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageGeometry {
    pub total: usize,
    pub data: usize,
}

impl PageGeometry {
    pub fn new(total: usize, data: usize) -> Result<Self, DumpError> {
        if total == 0 || data == 0 || data > total {
            return Err(DumpError::BadGeometry { total, data });
        }
        Ok(PageGeometry { total, data })
    }
}

/// Payload length a raw dump will strip down to, without touching the bytes.
pub fn stripped_len(raw_len: usize, geom: PageGeometry) -> Result<usize, DumpError> {
    if !raw_len.is_multiple_of(geom.total) {
        return Err(DumpError::RaggedDump { raw: raw_len, total: geom.total });
    }
    Ok(raw_len / geom.total * geom.data)
}

/// Drops the spare area of every page, keeping the leading `geom.data` bytes.
/// The dump must be a whole number of pages; a ragged tail means the read
/// itself is suspect and deserves an error, not silent truncation.
pub fn strip_spare(raw: &[u8], geom: PageGeometry) -> Result<Vec<u8>, DumpError> {
    let out_len = stripped_len(raw.len(), geom)?;
    let mut out = Vec::with_capacity(out_len);
    for page in raw.chunks_exact(geom.total) {
        out.extend_from_slice(&page[..geom.data]);
    }
    Ok(out)
}

/// Shannon entropy of a byte window, normalized to [0, 1] (divided by the
/// 8-bit maximum). Empty windows score 0.
pub fn shannon_entropy(window: &[u8]) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    let mut counts = [0u64; 256];
    for &b in window {
        counts[b as usize] += 1;
    }
    let n = window.len() as f64;
    let mut h = 0.0;
    for &c in counts.iter() {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    h / 8.0
}

/// Result of a windowed entropy sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyScan {
    pub window: usize,
    pub stride: usize,
    /// Length of the scanned image; segments must tile exactly this span.
    pub image_len: usize,
    /// One normalized entropy per window, in offset order.
    pub values: Vec<f64>,
}

pub const DEFAULT_WINDOW: usize = 65536;
pub const DEFAULT_STRIDE: usize = 16384;

/// Sweeps `image` with windows of `window` bytes every `stride` bytes.
/// Images shorter than one window get a single whole-image window.
pub fn entropy_scan(image: &[u8], window: usize, stride: usize) -> EntropyScan {
    assert!(window > 0 && stride > 0, "window and stride must be positive");
    let starts: Vec<usize> = if image.len() < window {
        if image.is_empty() { Vec::new() } else { vec![0] }
    } else {
        (0..=image.len() - window).step_by(stride).collect()
    };
    let values: Vec<f64> = starts
        .par_iter()
        .map(|&s| shannon_entropy(&image[s..(s + window).min(image.len())]))
        .collect();
    EntropyScan { window, stride, image_len: image.len(), values }
}

/// Classification of one contiguous image region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    /// Erased or padded flash: literally all zero bytes.
    Null,
    /// At the entropy ceiling everywhere; indistinguishable from random.
    Encrypted,
    /// High mean entropy with at least one window dipping below it: the
    /// signature of concatenated compressed blocks with framing between.
    Compressed,
    Unknown,
}

/// Decision thresholds for [`classify_segments`], in normalized entropy.
/// Defaults were tuned on 64 KiB windows over NAND-scale images; narrower
/// windows need looser values.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SegmentThresholds {
    /// A run is encrypted-like when every window is at or above this.
    pub encrypted_min: f64,
    /// A run is compressed-like when the mean is at or above this and at
    /// least one window is at or below it.
    pub compressed_mean: f64,
}

impl Default for SegmentThresholds {
    fn default() -> Self {
        SegmentThresholds { encrypted_min: 0.9998, compressed_mean: 0.998 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub kind: SegmentKind,
    pub mean_entropy: f64,
    pub min_entropy: f64,
}

/// Groups scan windows into labeled segments covering `[0, image_len)`.
///
/// Each window owns its stride cell (the last cell stretches to the image
/// end), so segments tile the image without gaps or overlap even when
/// windows themselves overlap. A window is a null candidate when its bytes
/// are all zero; runs of non-null windows are then labeled from their
/// entropy profile per [`SegmentThresholds`].
pub fn classify_segments(
    image: &[u8],
    scan: &EntropyScan,
    thresholds: SegmentThresholds,
) -> Vec<Segment> {
    assert_eq!(scan.image_len, image.len(), "scan belongs to a different image");
    let nw = scan.values.len();
    if nw == 0 {
        return Vec::new();
    }
    let window_span = |w: usize| {
        let s = w * scan.stride;
        (s, (s + scan.window).min(image.len()))
    };
    let is_zero: Vec<bool> = (0..nw)
        .into_par_iter()
        .map(|w| {
            let (s, e) = window_span(w);
            image[s..e].iter().all(|&b| b == 0)
        })
        .collect();

    // Stride cells tile the image; cell w ends where cell w+1 begins.
    let cell_start = |w: usize| w * scan.stride;
    let cell_end = |w: usize| if w + 1 == nw { image.len() } else { (w + 1) * scan.stride };

    let mut segments = Vec::new();
    let mut run_start = 0usize;
    for w in 1..=nw {
        if w < nw && is_zero[w] == is_zero[run_start] {
            continue;
        }
        let vals = &scan.values[run_start..w];
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let kind = if is_zero[run_start] {
            SegmentKind::Null
        } else if min >= thresholds.encrypted_min {
            SegmentKind::Encrypted
        } else if mean >= thresholds.compressed_mean && min <= thresholds.compressed_mean {
            SegmentKind::Compressed
        } else {
            SegmentKind::Unknown
        };
        segments.push(Segment {
            start: cell_start(run_start),
            end: cell_end(w - 1),
            kind,
            mean_entropy: mean,
            min_entropy: min,
        });
        run_start = w;
    }
    segments
}

/// Bit positions (crate-wide addressing) where two equal-length buffers
/// differ. Output is sorted ascending.
pub fn diff_bitflips(a: &[u8], b: &[u8]) -> Result<Vec<usize>, DumpError> {
    if a.len() != b.len() {
        return Err(DumpError::LengthMismatch { a: a.len(), b: b.len() });
    }
    let mut flips = Vec::new();
    for (i, (&x, &y)) in a.iter().zip(b.iter()).enumerate() {
        let mut d = x ^ y;
        while d != 0 {
            let k = d.trailing_zeros() as usize;
            flips.push(i * 8 + k);
            d &= d - 1;
        }
    }
    Ok(flips)
}

/// Mean bytes between flips when comparing two copies of a region. Both
/// copies count toward the denominator, so the rate is `2 * len / flips`;
/// that is the convention used when quoting "one flip every N bytes" from a
/// two-copy diff, and it is reproduced here verbatim.
pub fn paired_bytes_per_flip(region_len: usize, flips: usize) -> Option<f64> {
    if flips == 0 {
        None
    } else {
        Some(2.0 * region_len as f64 / flips as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_spare_keeps_data_prefix_of_each_page() {
        let geom = PageGeometry::new(8, 6).unwrap();
        let mut raw = Vec::new();
        for p in 0..3u8 {
            raw.extend((0..6).map(|i| p * 10 + i));
            raw.extend([0xEE, 0xFF]); // spare
        }
        let out = strip_spare(&raw, geom).unwrap();
        assert_eq!(out.len(), 18);
        assert_eq!(&out[6..12], &[10, 11, 12, 13, 14, 15]);
        assert!(!out.contains(&0xEE));
    }

    #[test]
    fn strip_spare_rejects_ragged_dumps() {
        let geom = PageGeometry::new(2176, 2048).unwrap();
        let raw = vec![0u8; 2177];
        assert_eq!(
            strip_spare(&raw, geom),
            Err(DumpError::RaggedDump { raw: 2177, total: 2176 })
        );
    }

    #[test]
    fn nand_scale_arithmetic_without_allocation() {
        // 131072 pages of 2048+128 bytes: a 285,212,672-byte raw read strips
        // to exactly 256 MiB of payload.
        let geom = PageGeometry::new(2176, 2048).unwrap();
        assert_eq!(stripped_len(285_212_672, geom).unwrap(), 268_435_456);
        assert_eq!(268_435_456, 131_072 * 2048);
    }

    #[test]
    fn geometry_validation() {
        assert!(PageGeometry::new(0, 0).is_err());
        assert!(PageGeometry::new(2048, 2176).is_err());
        assert!(PageGeometry::new(2176, 2176).is_ok());
    }

    #[test]
    fn entropy_of_constant_window_is_zero() {
        assert_eq!(shannon_entropy(&vec![0u8; 4096]), 0.0);
        assert_eq!(shannon_entropy(&vec![0xA5u8; 512]), 0.0);
    }

    #[test]
    fn entropy_of_uniform_window_is_one() {
        let all: Vec<u8> = (0..=255).collect();
        assert!((shannon_entropy(&all) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_seeded_random_window_is_near_one() {
        let mut state = 0x0123_4567_89AB_CDEFu64;
        let buf: Vec<u8> = (0..65536)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 24) as u8
            })
            .collect();
        let h = shannon_entropy(&buf);
        assert!((0.995..=1.0).contains(&h), "h = {h}");
    }

    #[test]
    fn scan_covers_short_images_with_one_window() {
        let scan = entropy_scan(&vec![0u8; 4096], 65536, 16384);
        assert_eq!(scan.values, vec![0.0]);
        assert_eq!(entropy_scan(&[], 65536, 16384).values.len(), 0);
    }

    #[test]
    fn scan_window_count_matches_stride() {
        let img = vec![7u8; 100_000];
        let scan = entropy_scan(&img, 65536, 16384);
        // Starts at 0, 16384, 32768; 49152 + 65536 > 100000.
        assert_eq!(scan.values.len(), 3);
    }

    fn craft_scan(values: Vec<f64>, window: usize, stride: usize, len: usize) -> EntropyScan {
        EntropyScan { window, stride, image_len: len, values }
    }

    #[test]
    fn classify_splits_null_and_encrypted() {
        // Two zero windows, then two entropy-ceiling windows of ones.
        let mut img = vec![0u8; 2048];
        let mut state = 99u64;
        img.extend((0..2048).map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as u8
        }));
        let scan = craft_scan(vec![0.0, 0.0, 0.9999, 0.9999], 1024, 1024, 4096);
        let segs = classify_segments(&img, &scan, SegmentThresholds::default());
        assert_eq!(segs.len(), 2);
        assert_eq!((segs[0].start, segs[0].end, segs[0].kind), (0, 2048, SegmentKind::Null));
        assert_eq!((segs[1].start, segs[1].end, segs[1].kind), (2048, 4096, SegmentKind::Encrypted));
    }

    #[test]
    fn classify_compressed_needs_a_dip() {
        let img = vec![1u8; 4096]; // non-zero so the null label stays out
        let thr = SegmentThresholds::default();
        // Mean 0.9989 with a dip below 0.998: compressed.
        let segs = classify_segments(
            &img,
            &craft_scan(vec![0.9995, 0.9997, 0.9975, 0.9989], 1024, 1024, 4096),
            thr,
        );
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].kind, SegmentKind::Compressed);
        // Same mean but no window at or below the line: unknown.
        let segs2 = classify_segments(
            &img,
            &craft_scan(vec![0.9990, 0.9990, 0.9990, 0.9990], 1024, 1024, 4096),
            thr,
        );
        assert_eq!(segs2[0].kind, SegmentKind::Unknown);
    }

    #[test]
    fn segments_tile_the_image() {
        let img: Vec<u8> = (0..10_000).map(|i| (i % 251) as u8).collect();
        let scan = entropy_scan(&img, 2048, 512);
        let segs = classify_segments(&img, &scan, SegmentThresholds::default());
        assert_eq!(segs.first().unwrap().start, 0);
        assert_eq!(segs.last().unwrap().end, img.len());
        for pair in segs.windows(2) {
            assert_eq!(pair[0].end, pair[1].start);
        }
    }

    #[test]
    fn diff_finds_the_documented_bit() {
        let a = vec![0u8; 16];
        let mut b = a.clone();
        b[5] |= 1 << 3;
        assert_eq!(diff_bitflips(&a, &b).unwrap(), vec![43]);
        assert_eq!(diff_bitflips(&b, &a).unwrap(), vec![43]);
        assert_eq!(diff_bitflips(&a, &a).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn diff_counts_every_flip_sorted() {
        let mut state = 0xFEED_F00D_DEAD_BEEFu64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        let a: Vec<u8> = (0..500).map(|_| (rng() % 256) as u8).collect();
        let mut b = a.clone();
        let mut expected: Vec<usize> = Vec::new();
        for _ in 0..40 {
            let bit = (rng() as usize) % (a.len() * 8);
            if !expected.contains(&bit) {
                expected.push(bit);
                crate::flip_bit(&mut b, bit);
            }
        }
        expected.sort_unstable();
        assert_eq!(diff_bitflips(&a, &b).unwrap(), expected);
    }

    #[test]
    fn diff_rejects_length_mismatch() {
        assert!(matches!(
            diff_bitflips(&[0u8; 3], &[0u8; 4]),
            Err(DumpError::LengthMismatch { a: 3, b: 4 })
        ));
    }

    #[test]
    fn paired_rate_uses_both_copies() {
        // 11 flips across a pair of 1,310,720-byte regions: one flip per
        // 238,312 bytes when both copies count.
        let r = paired_bytes_per_flip(1_310_720, 11).unwrap();
        assert_eq!(r.floor() as u64, 238_312);
        assert_eq!(paired_bytes_per_flip(100, 0), None);
    }
}
