//! End-to-end acceptance checks. Each test covers one headline guarantee of
//! the toolkit and finishes with a single `PASS ...` line carrying the
//! measured numbers; run with `--nocapture` to see them. Tolerances are
//! pinned as constants next to the assertions they guard.

use std::collections::BTreeMap;
use std::io::Read as _;
use std::time::{Duration, Instant};

use flate2::write::ZlibEncoder;
use flate2::Compression;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::io::Write as _;

use squashfix_core::corpus::{build_image, inject_exact, sample_text, BuildOptions, Node};
use squashfix_core::merge::{merge_targets, TernaryBuffer, Trit};
use squashfix_core::pipeline::{self, PipelineOptions};
use squashfix_core::report::render_json;
use squashfix_core::search::{
    estimate_cost, prefix_limit, repair_1flip, repair_2flip, FlipModel, SearchConfig, Shard,
    TargetSet,
};
use squashfix_core::squashfs::{parse_image, UnitKind};
use squashfix_core::stats::{
    expected_k_flip_count, hoeffding_t, rate_interval, LengthUnit,
};
use squashfix_core::zlib::{adler32, check_candidate, Inflater, VerdictStatus};
use squashfix_core::{content_id, flip_bit};

fn zlib_deflate(data: &[u8], level: u32) -> Vec<u8> {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(level));
    enc.write_all(data).unwrap();
    enc.finish().unwrap()
}

/// Deterministic zlib stream whose compressed length is exactly `target`
/// bytes, found by scanning text lengths (and seeds, if needed).
fn stream_with_compressed_len(target: usize) -> (Vec<u8>, Vec<u8>) {
    for seed in 0..64u64 {
        let lo = target * 2;
        let hi = target * 6;
        for raw_len in lo..hi {
            let raw = sample_text(seed.wrapping_mul(31).wrapping_add(raw_len as u64), raw_len);
            let z = zlib_deflate(&raw, 9);
            if z.len() == target {
                return (z, raw);
            }
        }
    }
    panic!("no stream of compressed length {target} found");
}

/// File tree with enough bulk data and tail ends to produce many
/// compressed units of both kinds.
fn synth_tree(seed: u64, count: usize) -> Vec<Node> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut roots: Vec<Node> = Vec::new();
    let mut dirs: BTreeMap<String, Vec<Node>> = BTreeMap::new();
    for i in 0..count {
        let len = if i % 4 == 0 {
            rng.gen_range(700..3000)
        } else {
            rng.gen_range(9_000..18_000)
        };
        let body = sample_text(seed.wrapping_add(i as u64 * 7919), len);
        let name = format!("f{i:03}.txt");
        if i % 3 == 0 {
            dirs.entry(format!("d{}", i % 5)).or_default().push(Node::file(&name, body));
        } else {
            roots.push(Node::file(&name, body));
        }
    }
    for (dir, children) in dirs {
        roots.push(Node::dir(&dir, children));
    }
    roots.push(Node::symlink("first", "f001.txt"));
    roots
}

fn manifest_sha_map(manifest: &squashfix_core::corpus::Manifest) -> BTreeMap<String, String> {
    manifest.files.iter().map(|f| (f.path.clone(), f.sha256.clone())).collect()
}

/// Twenty units each corrupted by one seeded flip must come back as
/// singleton target sets matching the injected truth, with byte-identical
/// extraction, inside the time budget.
#[test]
fn single_flip_corpus_recovers_injected_fragments() {
    const MIN_UNITS: usize = 50;
    const INJECTED: usize = 20;
    const MIN_SINGLETONS: usize = 18;
    const TIME_BUDGET: Duration = Duration::from_secs(300);

    let built = build_image(&synth_tree(41, 40), &BuildOptions::default()).unwrap();
    let shas = manifest_sha_map(&built.manifest);
    let mut image = built.bytes.clone();

    let parsed = parse_image(&built.bytes).unwrap();
    let content_units: Vec<_> = parsed
        .units
        .iter()
        .filter(|u| u.compressed && u.kind != UnitKind::Metadata)
        .cloned()
        .collect();
    assert!(
        content_units.len() >= MIN_UNITS,
        "corpus too small: {} content units",
        content_units.len()
    );

    let step = content_units.len() / INJECTED;
    let mut injected: BTreeMap<u64, u64> = BTreeMap::new(); // unit start -> relative bit
    for n in 0..INJECTED {
        let u = &content_units[n * step];
        let bits = inject_exact(&mut image, 1, 1000 + n as u64, &[(u.start, u.len as u64)]).unwrap();
        injected.insert(u.start, bits[0] - 8 * u.start);
    }

    let t0 = Instant::now();
    let result = pipeline::run(&image, &PipelineOptions::default()).unwrap();
    let elapsed = t0.elapsed();
    let report = result.report;

    assert!(!report.degraded);
    let corrupt: Vec<_> = report.fragments.iter().filter(|f| f.corrupt).collect();
    assert_eq!(corrupt.len(), INJECTED);
    let singletons = corrupt.iter().filter(|f| f.targets_post_filter == 1).count();
    assert!(singletons >= MIN_SINGLETONS, "only {singletons} singleton repairs");
    // Every singleton's flip sets must include the injected truth.
    let mut truth_hits = 0usize;
    for f in &corrupt {
        assert!(f.targets_post_filter >= 1, "unit at {:#x} lost", f.start);
        if f.targets_post_filter == 1 {
            let rel = injected[&f.start] as u32;
            assert!(
                f.flip_sets.iter().any(|fs| fs == &vec![rel]),
                "unit at {:#x}: injected flip {rel} not among {:?}",
                f.start,
                f.flip_sets
            );
            truth_hits += 1;
        }
    }
    assert!(report.all_repaired);

    // Extraction is byte-identical wherever the repair is unambiguous.
    let mut verified = 0usize;
    for out in &result.outputs {
        if out.mask.indeterminate_bits == 0 {
            assert_eq!(content_id(&out.all_true), shas[&out.path], "{} differs", out.path);
            verified += 1;
        }
    }
    assert!(verified >= report.files_total - (INJECTED - MIN_SINGLETONS));
    assert!(elapsed < TIME_BUDGET, "took {elapsed:?}");

    println!(
        "PASS single-flip corpus: {units} units, {INJECTED} injected, {singletons} singletons \
         ({truth_hits} truth-checked), {verified} files byte-identical, {elapsed:?}",
        units = content_units.len()
    );
}

/// A pair of flips in a small fragment is recovered exactly; sharded
/// searches union to the unsharded result; candidate counts follow the
/// closed form and measured runtime scales cubically with stream length.
#[test]
fn pair_search_exact_recovery_sharding_and_cubic_cost() {
    const MAX_FRAGMENT: usize = 2048;
    const SLOPE_SIZES: [usize; 4] = [256, 512, 1024, 2048];
    const SLOPE_TOLERANCE: f64 = 0.3;
    const TIME_BUDGET: Duration = Duration::from_secs(1800);
    let t0 = Instant::now();

    // Exact recovery through the full pipeline.
    let built = build_image(&[Node::file("tiny.txt", sample_text(7, 700))], &BuildOptions::default())
        .unwrap();
    let shas = manifest_sha_map(&built.manifest);
    let parsed = parse_image(&built.bytes).unwrap();
    let frag = parsed
        .units
        .iter()
        .find(|u| u.kind == UnitKind::Fragment && u.compressed)
        .expect("tail-packed fragment")
        .clone();
    assert!((frag.len as usize) <= MAX_FRAGMENT, "fragment too large: {}", frag.len);

    let mut image = built.bytes.clone();
    let bits = inject_exact(&mut image, 2, 99, &[(frag.start, frag.len as u64)]).unwrap();
    let rel: Vec<u32> = bits.iter().map(|b| (b - 8 * frag.start) as u32).collect();

    let opts = PipelineOptions { model: FlipModel::TwoFlip, ..PipelineOptions::default() };
    let result = pipeline::run(&image, &opts).unwrap();
    let report = result.report;
    assert!(report.all_repaired);
    let row = report.fragments.iter().find(|f| f.start == frag.start).unwrap();
    assert!(row.corrupt);
    assert_eq!(row.model, Some(FlipModel::TwoFlip));
    assert!(row.flip_sets.iter().any(|fs| fs == &rel), "injected pair {rel:?} not recovered");
    for out in &result.outputs {
        assert_eq!(content_id(&out.all_true), shas[&out.path]);
        assert_eq!(out.all_true, out.all_false);
    }

    // Sharded searches partition the same space: eight shards union to the
    // single-shard result, candidate for candidate.
    let raw = &image[frag.start as usize..frag.start as usize + frag.len as usize];
    let mut inf = Inflater::new();
    let (_, limit) = prefix_limit(raw, frag.max_len as usize, &mut inf);
    let full = repair_2flip(raw, frag.max_len as usize, limit, &SearchConfig::default()).unwrap();
    let shards: Vec<TargetSet> = (0..8)
        .map(|i| {
            let config = SearchConfig { shard: Shard::new(i, 8).unwrap(), ..SearchConfig::default() };
            repair_2flip(raw, frag.max_len as usize, limit, &config).unwrap()
        })
        .collect();
    let union = TargetSet::union(&shards);
    assert_eq!(union.candidates_tested, full.candidates_tested);
    assert!(union.completed);
    assert_eq!(union.targets.len(), full.targets.len());
    for (a, b) in union.targets.iter().zip(&full.targets) {
        assert_eq!(a.payload, b.payload);
        assert_eq!(a.flip_sets, b.flip_sets);
    }

    // Candidate counts follow C(8L, 2) exactly.
    let pinned: [(usize, u64); 4] =
        [(256, 2_096_128), (512, 8_386_560), (1024, 33_550_336), (2048, 134_209_536)];
    for (len, expect) in pinned {
        assert_eq!(estimate_cost(len, len, FlipModel::TwoFlip).candidates, expect);
    }

    // Measured runtime over doubling stream lengths fits a cubic: the pair
    // count is quadratic and each oracle call costs another linear factor.
    // A middle shard keeps the sample representative at 1/16 of the space.
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut secs_by_len: Vec<(usize, f64)> = Vec::new();
    for len in SLOPE_SIZES {
        let (mut z, _) = stream_with_compressed_len(len);
        let trailer_bit = 8 * (z.len() - 2) + 3; // flip in the stored checksum: full prefix stays searchable
        flip_bit(&mut z, trailer_bit);
        let (_, lim) = prefix_limit(&z, 1 << 17, &mut inf);
        assert_eq!(lim, z.len(), "trailer corruption must keep the whole stream in scope");
        let config = SearchConfig { shard: Shard::new(8, 16).unwrap(), ..SearchConfig::default() };
        let t = Instant::now();
        let set = repair_2flip(&z, 1 << 17, lim, &config).unwrap();
        let dt = t.elapsed().as_secs_f64();
        assert!(set.completed);
        assert!(dt > 0.003, "sample too fast to time at {len}: {dt}s");
        points.push(((len as f64).ln(), dt.ln()));
        secs_by_len.push((len, dt));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
    assert!(
        (slope - 3.0).abs() <= SLOPE_TOLERANCE,
        "runtime slope {slope:.2} outside 3.0 +/- {SLOPE_TOLERANCE}; samples {secs_by_len:?}"
    );

    let elapsed = t0.elapsed();
    assert!(elapsed < TIME_BUDGET, "took {elapsed:?}");
    println!(
        "PASS pair search: pair {rel:?} recovered, 8-shard union == full set \
         ({} candidates), runtime slope {slope:.2}, {elapsed:?}",
        full.candidates_tested
    );
}

/// The concentration radius matches its closed form, the interval covers a
/// known true rate at the stated confidence, and per-count expectations sum
/// to the population.
#[test]
fn rate_interval_radius_coverage_and_count_conservation() {
    const TRIALS: usize = 1000;
    const MIN_COVERED: usize = 985;
    const CONSERVATION_TOL: f64 = 1e-9;

    // sqrt(n/2 * ln(2/tail)) at n=920, tail=0.01.
    let t = hoeffding_t(920, 0.01).unwrap();
    assert!((49.3..=49.5).contains(&t), "t = {t}");
    assert_eq!(t.ceil() as u64, 50);

    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    let lengths: Vec<u64> = (0..920).map(|_| rng.gen_range(1000..4000)).collect();
    let p_true: f64 = 5e-7; // per bit

    // Monte-Carlo coverage of the two-sided interval.
    let q: Vec<f64> = lengths.iter().map(|&l| 1.0 - (1.0 - p_true).powi(8 * l as i32)).collect();
    let mut covered = 0usize;
    for _ in 0..TRIALS {
        let corrupted = q.iter().filter(|&&qi| rng.gen::<f64>() < qi).count();
        let iv = rate_interval(&lengths, corrupted, 0.01, LengthUnit::Bits).unwrap();
        assert!(iv.low <= iv.best && iv.best <= iv.high);
        if iv.low <= p_true && p_true <= iv.high {
            covered += 1;
        }
    }
    assert!(covered >= MIN_COVERED, "covered {covered}/{TRIALS}");

    // Expected k-flip counts over all k partition the population.
    let total: f64 = (0..=40).map(|k| expected_k_flip_count(&lengths, p_true, k, LengthUnit::Bits)).sum();
    let err = (total - lengths.len() as f64).abs();
    assert!(err < CONSERVATION_TOL, "sum {total} off by {err}");

    println!(
        "PASS rate statistics: t(920, 0.01) = {t:.3} -> 50, coverage {covered}/{TRIALS}, \
         k-count sum error {err:.2e}"
    );
}

/// Every single-bit corruption of a 256-byte stream gets the same verdict
/// as an independent inflater, byte-for-byte on the payload, and the
/// checksum matches its published test vectors.
#[test]
fn exhaustive_flip_sweep_agrees_with_reference_inflater() {
    assert_eq!(adler32(b""), 0x0000_0001);
    assert_eq!(adler32(b"abc"), 0x024D_0127);
    assert_eq!(adler32(b"Wikipedia"), 0x11E6_0398);

    let (z, raw) = stream_with_compressed_len(256);
    let cap = 1 << 16;
    assert_eq!(check_candidate(&z, cap).payload.as_deref(), Some(&raw[..]));

    // Corrupt one mid-stream bit so the sweep contains at least one true
    // repair whose payload must survive reference re-verification.
    let corrupt_bit = 8 * 128 + 5;
    let mut z = z;
    flip_bit(&mut z, corrupt_bit);

    let candidates = 8 * z.len();
    assert_eq!(candidates, 2048);
    let mut valid = 0usize;
    let mut repaired_payload = None;
    let mut cand = z.clone();
    for bit in 0..candidates {
        flip_bit(&mut cand, bit);
        let ours = check_candidate(&cand, cap);
        match miniz_oxide::inflate::decompress_to_vec_zlib_with_limit(&cand, cap) {
            Ok(payload) => {
                assert_eq!(ours.status, VerdictStatus::Valid, "bit {bit}");
                assert_eq!(ours.payload.as_deref(), Some(&payload[..]), "bit {bit}");
                assert_eq!(ours.computed_checksum, Some(adler32(&payload)), "bit {bit}");
                assert_eq!(ours.computed_checksum, ours.stored_checksum, "bit {bit}");
                if bit == corrupt_bit {
                    repaired_payload = Some(payload);
                }
                valid += 1;
            }
            Err(_) => assert_ne!(ours.status, VerdictStatus::Valid, "bit {bit}"),
        }
        flip_bit(&mut cand, bit);
    }
    assert!(valid >= 1);
    assert_eq!(repaired_payload.as_deref(), Some(&raw[..]), "true repair must restore the payload");

    println!(
        "PASS exhaustive sweep: 2048 candidates, {valid} valid, verdicts and payloads \
         match the reference inflater"
    );
}

/// Merging candidate payloads behaves like a per-bit three-valued AND of
/// agreements: indeterminate exactly where candidates disagree, order
/// independent, and never contradicting any candidate.
#[test]
fn ternary_merge_properties_hold_on_random_target_sets() {
    const SETS: usize = 1000;

    let mut rng = ChaCha12Rng::seed_from_u64(31337);
    for round in 0..SETS {
        let len = rng.gen_range(1..=48usize);
        let k = rng.gen_range(1..=5usize);
        let targets: Vec<Vec<u8>> =
            (0..k).map(|_| (0..len).map(|_| rng.gen()).collect()).collect();

        let merged = merge_targets(&targets).unwrap();
        assert_eq!(merged.len(), len);

        // Indeterminate bits are exactly the disagreement mask.
        let mut disagree = 0usize;
        for i in 0..len {
            let mut mask = 0u8;
            for t in &targets[1..] {
                mask |= targets[0][i] ^ t[i];
            }
            disagree += mask.count_ones() as usize;
        }
        assert_eq!(merged.indeterminate_bits(), disagree, "round {round}");

        // No known bit contradicts any candidate.
        for t in &targets {
            for bit in 0..8 * len {
                let tb = squashfix_core::get_bit(t, bit);
                match merged.get(bit) {
                    Trit::True => assert!(tb, "round {round} bit {bit}"),
                    Trit::False => assert!(!tb, "round {round} bit {bit}"),
                    Trit::Indeterminate => {}
                }
            }
        }

        // Bracketing readouts agree with every candidate on known bits.
        let hi = merged.all_true();
        let lo = merged.all_false();
        for i in 0..len {
            assert_eq!(hi[i] & !lo[i], hi[i] ^ lo[i], "byte {i}: known bits must agree");
        }

        // Order independence and idempotence, via canonical equality.
        let mut shuffled = targets.clone();
        shuffled.reverse();
        shuffled.rotate_left(k / 2);
        assert_eq!(merge_targets(&shuffled).unwrap(), merged, "round {round}");
        let mut doubled = targets.clone();
        doubled.extend_from_slice(&targets);
        assert_eq!(merge_targets(&doubled).unwrap(), merged, "round {round}");

        if k == 1 {
            assert_eq!(merged.indeterminate_bits(), 0);
            assert_eq!(merged.all_true(), targets[0]);
            assert_eq!(merged.all_false(), targets[0]);
        } else {
            assert_eq!(TernaryBuffer::from_bytes(&merged.all_true()).all_true(), hi);
        }
    }

    println!("PASS ternary merge: {SETS} random target sets hold all merge invariants");
}

/// Limiting the sweep to the consumed prefix returns exactly the full-range
/// result while testing no more candidates.
#[test]
fn prefix_limited_search_equals_full_range() {
    const ONE_FLIP_CASES: usize = 100;
    const TWO_FLIP_CASES: usize = 10;

    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let mut inf = Inflater::new();
    let cap = 1 << 16;

    let mut compared = 0usize;
    let mut pruned_total = 0u64;
    let mut seed = 0u64;
    while compared < ONE_FLIP_CASES {
        seed += 1;
        let raw_len = rng.gen_range(200..900);
        let raw = sample_text(seed, raw_len);
        let mut z = zlib_deflate(&raw, 9);
        if z.len() > 256 {
            continue;
        }
        let bit = rng.gen_range(0..8 * z.len());
        flip_bit(&mut z, bit);
        let (verdict, limit) = prefix_limit(&z, cap, &mut inf);
        if verdict.is_valid() {
            continue; // flip landed harmlessly; nothing to search
        }
        let pruned = repair_1flip(&z, cap, limit, &mut inf).unwrap();
        let full = repair_1flip(&z, cap, z.len(), &mut inf).unwrap();
        assert_eq!(pruned.targets.len(), full.targets.len(), "seed {seed}");
        for (a, b) in pruned.targets.iter().zip(&full.targets) {
            assert_eq!(a.payload, b.payload, "seed {seed}");
            assert_eq!(a.flip_sets, b.flip_sets, "seed {seed}");
        }
        assert!(pruned.candidates_tested <= full.candidates_tested);
        pruned_total += full.candidates_tested - pruned.candidates_tested;
        compared += 1;
    }

    let mut two_flip_done = 0usize;
    while two_flip_done < TWO_FLIP_CASES {
        seed += 1;
        let raw = sample_text(seed, rng.gen_range(40..140));
        let mut z = zlib_deflate(&raw, 9);
        if z.len() > 96 {
            continue;
        }
        let b1 = rng.gen_range(0..8 * z.len());
        let b2 = rng.gen_range(0..8 * z.len());
        if b1 == b2 {
            continue;
        }
        flip_bit(&mut z, b1);
        flip_bit(&mut z, b2);
        let (verdict, limit) = prefix_limit(&z, cap, &mut inf);
        if verdict.is_valid() {
            continue;
        }
        let pruned = repair_2flip(&z, cap, limit, &SearchConfig::default()).unwrap();
        let full = repair_2flip(&z, cap, z.len(), &SearchConfig::default()).unwrap();
        assert_eq!(pruned.targets.len(), full.targets.len(), "seed {seed}");
        for (a, b) in pruned.targets.iter().zip(&full.targets) {
            assert_eq!(a.payload, b.payload, "seed {seed}");
            assert_eq!(a.flip_sets, b.flip_sets, "seed {seed}");
        }
        assert!(pruned.candidates_tested <= full.candidates_tested);
        two_flip_done += 1;
    }

    println!(
        "PASS prefix pruning: {ONE_FLIP_CASES} single-flip and {TWO_FLIP_CASES} pair cases \
         identical to full range, {pruned_total} candidates skipped in total"
    );
}

/// Our extractor and an independent squashfs reader must agree byte for
/// byte on a hundred-file tree.
#[test]
fn extraction_matches_reference_reader() {
    const FILES: usize = 100;

    let built = build_image(&synth_tree(77, FILES), &BuildOptions::default()).unwrap();
    let result = pipeline::run(&built.bytes, &PipelineOptions::default()).unwrap();
    assert!(result.report.all_repaired);
    assert_eq!(result.report.files_total, FILES);
    let ours: BTreeMap<String, Vec<u8>> =
        result.outputs.into_iter().map(|o| (o.path, o.all_true)).collect();

    let reader = backhand::FilesystemReader::from_reader(std::io::Cursor::new(built.bytes.clone()))
        .expect("reference reader accepts the image");
    let mut theirs: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut links = 0usize;
    for node in reader.files() {
        let path = node.fullpath.to_string_lossy().trim_start_matches('/').to_string();
        match &node.inner {
            backhand::InnerNode::File(f) => {
                let mut body = Vec::new();
                reader.file(f).reader().read_to_end(&mut body).unwrap();
                theirs.insert(path, body);
            }
            backhand::InnerNode::Symlink(s) => {
                assert_eq!(path, "first");
                assert_eq!(s.link.to_string_lossy(), "f001.txt");
                links += 1;
            }
            _ => {}
        }
    }
    assert_eq!(links, 1);
    assert_eq!(ours.len(), FILES);
    assert_eq!(theirs.len(), FILES);
    for (path, body) in &ours {
        assert_eq!(Some(body), theirs.get(path), "{path} differs");
    }

    println!("PASS reference extraction: {FILES} files byte-identical to the independent reader");
}

/// Reports are byte-stable across reruns, and a budget-paused search resumed
/// from its checkpoints converges to the exact same report.
#[test]
fn reports_are_deterministic_and_resume_safe() {
    const BUDGET: u64 = 150_000;
    const MAX_ROUNDS: usize = 200;

    let built = build_image(
        &[
            Node::file("bulk.bin", sample_text(11, 12_000)),
            Node::file("tail.txt", sample_text(12, 600)),
        ],
        &BuildOptions::default(),
    )
    .unwrap();
    let parsed = parse_image(&built.bytes).unwrap();
    let data = parsed
        .units
        .iter()
        .find(|u| u.kind == UnitKind::DataBlock && u.compressed)
        .unwrap()
        .clone();
    let frag = parsed
        .units
        .iter()
        .find(|u| u.kind == UnitKind::Fragment && u.compressed)
        .unwrap()
        .clone();

    let mut image = built.bytes.clone();
    inject_exact(&mut image, 1, 5, &[(data.start, data.len as u64)]).unwrap();
    inject_exact(&mut image, 2, 6, &[(frag.start, frag.len as u64)]).unwrap();

    let full_opts = PipelineOptions { model: FlipModel::TwoFlip, ..PipelineOptions::default() };
    let once = pipeline::run(&image, &full_opts).unwrap();
    let again = pipeline::run(&image, &full_opts).unwrap();
    let reference = render_json(&once.report);
    assert_eq!(reference, render_json(&again.report), "reports must be byte-stable");
    assert!(once.report.all_repaired);

    let dir = tempfile::tempdir().unwrap();
    let paused_opts = PipelineOptions {
        model: FlipModel::TwoFlip,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        candidate_budget: Some(BUDGET),
        flush_interval: Duration::from_millis(0),
        ..PipelineOptions::default()
    };
    let mut rounds = 0usize;
    let resumed = loop {
        rounds += 1;
        assert!(rounds <= MAX_ROUNDS, "search did not converge");
        let r = pipeline::run(&image, &paused_opts).unwrap();
        let row = r.report.fragments.iter().find(|f| f.start == frag.start).unwrap();
        if row.completed {
            break r;
        }
        assert!(!r.report.fragments.iter().all(|f| f.completed));
    };
    assert!(rounds > 1, "budget never paused the search; shrink BUDGET");
    assert_eq!(reference, render_json(&resumed.report), "resumed report differs");

    // Rerunning over the finished checkpoints is idempotent.
    let settled = pipeline::run(&image, &paused_opts).unwrap();
    assert_eq!(reference, render_json(&settled.report));

    let shas = manifest_sha_map(&built.manifest);
    for out in &resumed.outputs {
        if out.mask.indeterminate_bits == 0 {
            assert_eq!(content_id(&out.all_true), shas[&out.path]);
        }
    }

    println!(
        "PASS determinism and resume: report stable across reruns, {rounds} budgeted rounds \
         converge to the identical report"
    );
}
