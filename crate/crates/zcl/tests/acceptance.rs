//! End-to-end acceptance checks. Each test prints one status line
//! directly to stderr (bypassing libtest capture) so a plain
//! `cargo test --workspace` run shows the verdicts.

use std::io::Write as _;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zcl::cli::{
    allocate_localhost_addrs, analyze_allreduce_errors, oracle_reduce, stack_images,
    AnalyzeErrorArgs, StackArgs,
};
use zcl::collectives::{
    cprp2p_allgather, cprp2p_bcast, plain_allreduce, run_loopback_world, z_allgather,
    z_allreduce, z_bcast, z_scatter, CollectiveConfig, ReduceKind,
};
use zcl::parallel::compress_parallel;
use zcl::pgm::parse_pgm_header;
use zcl::synth::{generate_field, SyntheticKind, SyntheticSpec};
use zcl::transport::connect_tcp;
use zcl_core::stats::{
    combine_normals, coverage_fraction, fit_normal_mle, maxmin_error_variance,
    sum_error_interval_bound,
};
use zcl_core::zlite::encode_micro_block;
use zcl_core::{
    compress, compress_chunked, compress_szx, decompress, decompress_chunked, decompress_szx,
    noop_hook, resolve_error_bound, CodecKind, CodecParams, ErrorBoundSpec, FloatField,
};

fn report(ok: bool, line: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance {line}: {verdict}");
    assert!(ok, "acceptance {line}");
}

fn warn(line: &str) {
    let _ = writeln!(std::io::stderr(), "acceptance {line}");
}

fn sine_fields(n: usize, len: usize, seed: u64) -> Vec<FloatField> {
    (0..n)
        .map(|r| {
            generate_field(&SyntheticSpec::new(
                SyntheticKind::SineMix,
                len,
                seed + r as u64,
            ))
            .unwrap()
        })
        .collect()
}

fn max_abs_err(result: &[f32], reference: &[f32]) -> f64 {
    result
        .iter()
        .zip(reference)
        .map(|(a, b)| (*a as f64 - *b as f64).abs())
        .fold(0.0, f64::max)
}

#[test]
fn c01_codec_bound_property() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC01);
    let kinds = [
        SyntheticKind::Uniform,
        SyntheticKind::GaussianWalk,
        SyntheticKind::SineMix,
    ];
    // awkward lengths first, then log-uniform up to 1e6
    let fixed_lens = [1usize, 2, 31, 33, 1023, 1025, 5119, 5121, 999_983];
    let mut violations = 0usize;
    let mut cases = 0usize;
    for case in 0..1000 {
        let len = if case < fixed_lens.len() {
            fixed_lens[case]
        } else {
            let exp: f64 = rng.gen_range(0.0..6.0);
            (10f64.powf(exp) as usize).max(1)
        };
        let kind = kinds[case % kinds.len()];
        let field = generate_field(&SyntheticSpec::new(kind, len, 7000 + case as u64)).unwrap();
        let rel: f32 = 10f32.powf(-rng.gen_range(1.0f32..4.0));
        let spec = if case % 2 == 0 {
            ErrorBoundSpec::Relative(rel)
        } else {
            // absolute bound sized to the field so the quantizer stays
            // in range
            let range = field
                .values()
                .iter()
                .fold((f32::MAX, f32::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            ErrorBoundSpec::Absolute(((range.1 - range.0).max(1e-3)) * rel)
        };
        let eb = resolve_error_bound(&spec, &field).unwrap() as f64;
        let recon = if case % 3 == 0 {
            let (frame, _) = compress_szx(&field, &spec).unwrap();
            decompress_szx(&frame).unwrap()
        } else {
            let (frame, _) = compress(&field, &spec, &CodecParams::default()).unwrap();
            decompress(&frame).unwrap()
        };
        cases += 1;
        violations += field
            .values()
            .iter()
            .zip(recon.values())
            .filter(|(a, b)| (**a as f64 - **b as f64).abs() > eb)
            .count();
    }
    let elapsed = start.elapsed();
    report(
        violations == 0 && cases == 1000 && elapsed < Duration::from_secs(300),
        &format!(
            "c01 codec bound: {cases} randomized fields, {violations} violations, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Naive, independent bit-writer: a plain bool buffer instead of the
/// byte-at-a-time accumulator in the codec.
fn naive_micro_block(deltas: &[i64], micro_len: usize) -> Vec<u8> {
    let max_mag = deltas.iter().map(|d| d.unsigned_abs()).max().unwrap_or(0);
    let width = (64 - max_mag.leading_zeros()) as usize;
    let mut out = vec![width as u8];
    if width == 0 {
        return out;
    }
    let mut bits: Vec<bool> = Vec::new();
    for i in 0..micro_len {
        bits.push(deltas.get(i).is_some_and(|d| *d < 0));
    }
    while bits.len() % 8 != 0 {
        bits.push(false);
    }
    for i in 0..micro_len {
        let mag = deltas.get(i).map_or(0, |d| d.unsigned_abs());
        for b in 0..width {
            bits.push(mag >> b & 1 == 1);
        }
    }
    while bits.len() % 8 != 0 {
        bits.push(false);
    }
    for byte in bits.chunks(8) {
        out.push(
            byte.iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << i)),
        );
    }
    out
}

#[test]
fn c02_bit_exact_equivalences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC02);

    let mut micro_ok = true;
    for _ in 0..10_000 {
        let micro_len = *[8usize, 17, 32, 64].iter().nth(rng.gen_range(0..4)).unwrap();
        let take = rng.gen_range(1..=micro_len);
        let width_cap: u32 = rng.gen_range(0..=32);
        let deltas: Vec<i64> = (0..take)
            .map(|_| {
                if width_cap == 0 {
                    0
                } else {
                    let mag = rng.gen_range(0..(1u64 << width_cap)) as i64;
                    if rng.gen_bool(0.5) {
                        -mag
                    } else {
                        mag
                    }
                }
            })
            .collect();
        let mut got = Vec::new();
        encode_micro_block(&deltas, micro_len, &mut got);
        if got != naive_micro_block(&deltas, micro_len) {
            micro_ok = false;
            break;
        }
    }

    let mut parallel_ok = true;
    let mut chunked_ok = true;
    for case in 0..100u64 {
        let len = 1 + (case as usize * 7919) % 200_000;
        let field =
            generate_field(&SyntheticSpec::new(SyntheticKind::SineMix, len, 9000 + case))
                .unwrap();
        let spec = ErrorBoundSpec::Relative(1e-3);
        let params = CodecParams::default();
        let (serial, _) = compress(&field, &spec, &params).unwrap();
        for workers in [2usize, 3, 8] {
            let p = CodecParams {
                parallelism: workers,
                ..params.clone()
            };
            let (par, _) = compress_parallel(&field, &spec, &p).unwrap();
            if par.as_bytes() != serial.as_bytes() {
                parallel_ok = false;
            }
        }
        // chunk of 5120 is a multiple of the 1024 thread-block, so the
        // concatenated chunk frames reconstruct identically
        let chunk =
            compress_chunked(&field, &spec, &params, 5120, CodecKind::ZLite, &mut noop_hook())
                .unwrap();
        let whole = decompress(&serial).unwrap();
        let via_chunks = decompress_chunked(&chunk, &mut noop_hook()).unwrap();
        if whole.values() != via_chunks.values() {
            chunked_ok = false;
        }
    }

    report(
        micro_ok && parallel_ok && chunked_ok,
        &format!(
            "c02 bit-exact equivalences: micro-block oracle {micro_ok}, \
             parallel-vs-serial {parallel_ok}, chunked-vs-whole {chunked_ok}"
        ),
    );
}

#[test]
fn c03_compress_once_counters() {
    let n = 8;
    let len = (8 << 20) / 4; // 8 MiB of f32 per rank
    let cfg = CollectiveConfig {
        error_bound: ErrorBoundSpec::Relative(1e-3),
        ..CollectiveConfig::default()
    };
    let inputs = sine_fields(n, len, 0xC03);

    let z = run_loopback_world(n, |comm| z_allgather(comm, &inputs[comm.rank()], &cfg)).unwrap();
    let z_ops: Vec<u64> = z.iter().map(|(_, c)| c.compress_ops).collect();
    drop(z);
    let p2p =
        run_loopback_world(n, |comm| cprp2p_allgather(comm, &inputs[comm.rank()], &cfg)).unwrap();
    let p2p_ops: Vec<u64> = p2p.iter().map(|(_, c)| c.compress_ops).collect();
    drop(p2p);

    let root = inputs[0].clone();
    let zb = run_loopback_world(n, |comm| {
        z_bcast(comm, 0, (comm.rank() == 0).then_some(&root), &cfg)
    })
    .unwrap();
    let zb_total: u64 = zb.iter().map(|(_, c)| c.compress_ops).sum();
    let pb = run_loopback_world(n, |comm| {
        cprp2p_bcast(comm, 0, (comm.rank() == 0).then_some(&root), &cfg)
    })
    .unwrap();
    // deepest relay path for root 0, N=8 is 0 -> 4 -> 6 -> 7: one
    // compress+decompress pair per hop
    let deepest_pairs: u64 = [4usize, 6, 7].iter().map(|&r| pb[r].1.decompress_ops).sum();

    let ok = z_ops.iter().all(|&c| c == 1)
        && p2p_ops.iter().all(|&c| c == (n - 1) as u64)
        && zb_total == 1
        && deepest_pairs == 3;
    report(
        ok,
        &format!(
            "c03 compress-once counters (N=8, 8 MiB/rank): z_allgather {:?}=1, \
             cprp2p {:?}=7, z_bcast total {zb_total}=1, cprp2p deepest path {deepest_pairs}=3",
            z_ops[0], p2p_ops[0]
        ),
    );
}

#[test]
fn c04_structure_counts() {
    let cfg = CollectiveConfig {
        error_bound: ErrorBoundSpec::Relative(1e-2),
        ..CollectiveConfig::default()
    };
    let mut ok = true;
    for n in [2usize, 3, 4, 8, 16] {
        let len = 480 * 16;
        let inputs = sine_fields(n, len, 0xC04);
        let ag = run_loopback_world(n, |comm| z_allgather(comm, &inputs[comm.rank()], &cfg))
            .unwrap();
        ok &= ag.iter().all(|(_, c)| c.rounds == (n - 1) as u64);
        let root = inputs[0].clone();
        let bc = run_loopback_world(n, |comm| {
            z_bcast(comm, 0, (comm.rank() == 0).then_some(&root), &cfg)
        })
        .unwrap();
        let depth = (usize::BITS - (n - 1).leading_zeros()) as u64;
        ok &= bc.iter().all(|(_, c)| c.rounds == depth);

        let plain = run_loopback_world(n, |comm| {
            plain_allreduce(comm, &inputs[comm.rank()], ReduceKind::Sum)
        })
        .unwrap();
        let d_input = (len * 4) as u64;
        let expected = 2 * (n as u64 - 1) * d_input / n as u64;
        ok &= plain.iter().all(|(_, c)| c.data_bytes_sent == expected);
    }
    report(
        ok,
        "c04 structure counts: ring rounds N-1, binomial depth ceil(log2 N), \
         plain allreduce payload 2(N-1)/N * D",
    );
}

#[test]
fn c05_single_compression_accuracy() {
    let n = 8;
    let len = 1_000_000;
    let cfg = CollectiveConfig {
        error_bound: ErrorBoundSpec::Relative(1e-3),
        ..CollectiveConfig::default()
    };
    let inputs = sine_fields(n, len, 0xC05);
    let ebs: Vec<f64> = inputs
        .iter()
        .map(|f| resolve_error_bound(&cfg.error_bound, f).unwrap() as f64)
        .collect();

    let mut violations = 0usize;
    let ag = run_loopback_world(n, |comm| z_allgather(comm, &inputs[comm.rank()], &cfg)).unwrap();
    for (result, _) in &ag {
        for (origin, input) in inputs.iter().enumerate() {
            let slot = &result.values()[origin * len..(origin + 1) * len];
            violations += slot
                .iter()
                .zip(input.values())
                .filter(|(a, b)| (**a as f64 - **b as f64).abs() > ebs[origin])
                .count();
        }
    }
    drop(ag);

    let root = inputs[0].clone();
    let bc = run_loopback_world(n, |comm| {
        z_bcast(comm, 0, (comm.rank() == 0).then_some(&root), &cfg)
    })
    .unwrap();
    for (result, _) in &bc {
        violations += result
            .values()
            .iter()
            .zip(root.values())
            .filter(|(a, b)| (**a as f64 - **b as f64).abs() > ebs[0])
            .count();
    }
    drop(bc);

    let sc = run_loopback_world(n, |comm| {
        z_scatter(comm, 0, (comm.rank() == 0).then_some(&root), &cfg)
    })
    .unwrap();
    let chunk = len / n;
    for (r, (result, _)) in sc.iter().enumerate() {
        violations += result
            .values()
            .iter()
            .zip(&root.values()[r * chunk..(r + 1) * chunk])
            .filter(|(a, b)| (**a as f64 - **b as f64).abs() > ebs[0])
            .count();
    }

    report(
        violations == 0,
        &format!(
            "c05 single-compression accuracy (N=8, 1e6 values, rel 1e-3): \
             {violations} values beyond 1*eb across allgather/bcast/scatter"
        ),
    );
}

#[test]
fn c06_allreduce_error_vs_oracle() {
    let start = Instant::now();
    let n = 16;
    let args = AnalyzeErrorArgs {
        ranks: n,
        reduce: "sum".into(),
        bound: "rel:1e-4".into(),
        size: 100_000,
        trials: 1,
        kind: "sine_mix".into(),
        seed: 0xC06,
        out: None,
    };
    let analysis = analyze_allreduce_errors(&args).unwrap();
    let bound = n as f64 * analysis.eb_hop as f64;
    let violations = analysis.errors.iter().filter(|e| e.abs() > bound).count();
    let (_, sigma) = fit_normal_mle(&analysis.errors).unwrap();
    let coverage = coverage_fraction(&analysis.errors, 2.0 * (n as f64).sqrt() * sigma);
    let elapsed = start.elapsed();
    report(
        violations == 0 && coverage >= 0.90 && elapsed < Duration::from_secs(120),
        &format!(
            "c06 allreduce vs oracle (N=16, 1e5/rank, rel 1e-4): {violations} values \
             beyond N*eb_hop, coverage {coverage:.4} >= 0.90, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c07_theory_formula_pins() {
    let e_hat = 0.37;
    let pinned = sum_error_interval_bound(100, e_hat).unwrap();
    let ok_sum = (pinned - 20.0 / 3.0 * e_hat).abs() < 1e-12;

    let sigma = 1.7;
    let v1 = maxmin_error_variance(1, sigma).unwrap();
    let v2 = maxmin_error_variance(2, sigma).unwrap();
    let ok_small = (v1 - 0.5 * sigma * sigma).abs() < 1e-12
        && (v2 - sigma * sigma).abs() < 1e-12;
    let mut monotone = true;
    let mut prev = 0.0;
    for k in 1..=40 {
        let v = maxmin_error_variance(k, sigma).unwrap();
        monotone &= v > prev;
        prev = v;
    }
    let limit_ok =
        (maxmin_error_variance(200, sigma).unwrap() - 2.0 * sigma * sigma).abs() < 1e-9;

    let (mean, var) =
        combine_normals(&[2.0, -1.0], &[0.5, 0.25], &[3.0, 4.0]).unwrap();
    let ok_combine = (mean - 0.75).abs() < 1e-12 && (var - (4.0 * 9.0 + 16.0)).abs() < 1e-12;

    report(
        ok_sum && ok_small && monotone && limit_ok && ok_combine,
        "c07 theory pins: (20/3)e at n=100, maxmin 0.5s^2 and s^2, monotone to 2s^2, \
         combined-normal moments",
    );
}

#[test]
fn c08_maxmin_empirical_variance() {
    let mut ok = true;
    let mut detail = String::new();
    for reduce in ["max", "min"] {
        let args = AnalyzeErrorArgs {
            ranks: 16,
            reduce: reduce.into(),
            bound: "rel:1e-3".into(),
            size: 200_000,
            trials: 1,
            kind: "uniform".into(),
            seed: 0xC08,
            out: None,
        };
        let analysis = analyze_allreduce_errors(&args).unwrap();
        let ratio = analysis.measured_variance / analysis.theory_maxmin_variance;
        ok &= (0.2..=5.0).contains(&ratio);
        detail.push_str(&format!(
            " {reduce}: measured/theory {:.3} (mu {:.2e}, sigma {:.2e})",
            ratio, analysis.mu, analysis.sigma
        ));
    }
    report(
        ok,
        &format!("c08 max/min variance within [0.2, 5.0]x of theory:{detail}"),
    );
}

#[test]
fn c09_image_stacking() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("stack").to_string_lossy().into_owned();
    let args = StackArgs {
        ranks: 8,
        width: 512,
        height: 512,
        bound: "rel:1e-4".into(),
        seed: 0xC09,
        out_prefix: prefix.clone(),
    };
    let outcome = stack_images(&args).unwrap();
    let pgm = std::fs::read(format!("{prefix}.pgm")).unwrap();
    let parsed = parse_pgm_header(&pgm);
    let pgm_ok = matches!(parsed, Ok((512, 512, 255, _)));
    report(
        outcome.psnr_db >= 40.0 && pgm_ok,
        &format!(
            "c09 image stacking (N=8, 512x512, rel 1e-4): psnr {:.1} dB >= 40, pgm parses {pgm_ok}",
            outcome.psnr_db
        ),
    );
}

#[test]
fn c10_soft_performance_sanity() {
    // Non-blocking: failures here are machine-dependent and reported as
    // warnings only.
    let cores = thread::available_parallelism().map_or(1, |n| n.get());
    if cores < 4 {
        warn(&format!(
            "c10a multi-worker speedup: SKIP ({cores} cores available, needs >= 4)"
        ));
    } else {
        let len = (256 << 20) / 4;
        let field =
            generate_field(&SyntheticSpec::new(SyntheticKind::SineMix, len, 0xC10)).unwrap();
        let spec = ErrorBoundSpec::Relative(1e-3);
        let time_with = |workers: usize| {
            let params = CodecParams {
                parallelism: workers,
                ..CodecParams::default()
            };
            let t = Instant::now();
            compress_parallel(&field, &spec, &params).unwrap();
            t.elapsed().as_secs_f64()
        };
        let serial = time_with(1);
        let parallel = time_with(4);
        let speedup = serial / parallel;
        warn(&format!(
            "c10a multi-worker speedup on {cores} cores: {speedup:.2}x {}",
            if speedup >= 1.5 { "(>= 1.5, ok)" } else { "(WARN: below 1.5)" }
        ));
    }

    let n = 4;
    let len = (64 << 20) / 4;
    let inputs = sine_fields(n, len, 0xC10A);
    let cfg = CollectiveConfig {
        error_bound: ErrorBoundSpec::Relative(1e-2),
        ..CollectiveConfig::default()
    };
    let run_tcp = |plain: bool| -> Vec<u64> {
        let addrs = allocate_localhost_addrs(n).unwrap();
        let handles: Vec<_> = (0..n)
            .map(|rank| {
                let addrs = addrs.clone();
                let field = inputs[rank].clone();
                let cfg = cfg.clone();
                thread::spawn(move || {
                    let mut comm =
                        connect_tcp(rank, &addrs, Duration::from_secs(120)).unwrap();
                    if plain {
                        plain_allreduce(&mut comm, &field, ReduceKind::Sum).unwrap();
                    } else {
                        z_allreduce(&mut comm, &field, ReduceKind::Sum, &cfg).unwrap();
                    }
                    comm.barrier().unwrap();
                    comm.counters().bytes_sent
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    };
    let z_bytes: u64 = run_tcp(false).iter().sum();
    let plain_bytes: u64 = run_tcp(true).iter().sum();
    let ratio = z_bytes as f64 / plain_bytes as f64;
    let ok = ratio <= 0.5;
    warn(&format!(
        "c10b tcp payload (4 ranks, 64 MiB, rel 1e-2): z/plain bytes {ratio:.3} {}",
        if ok { "(<= 0.5, ok)" } else { "(WARN: above 0.5)" }
    ));
    report(true, "c10 soft performance sanity (non-blocking, see warnings above)");
}

#[test]
fn oracle_reduce_reference_still_exact() {
    // guard for the 64-bit oracle the criteria above depend on
    let fields = sine_fields(3, 100, 5);
    let sum = oracle_reduce(&fields, ReduceKind::Sum);
    for i in 0..100 {
        let want = fields.iter().map(|f| f.values()[i] as f64).sum::<f64>();
        assert_eq!(sum[i], want);
    }
    let maxes = oracle_reduce(&fields, ReduceKind::Max);
    assert!(maxes
        .iter()
        .enumerate()
        .all(|(i, &m)| fields.iter().any(|f| f.values()[i] as f64 == m)));
    let field = sine_fields(1, 64, 6).pop().unwrap();
    assert_eq!(max_abs_err(field.values(), field.values()), 0.0);
}
