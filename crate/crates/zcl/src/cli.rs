//! Command-line harness. Every subcommand is exposed as a `cmd_*`
//! function returning its report text, so the test suite can drive the
//! exact CLI code paths in-process.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use zcl_core::stats;
use zcl_core::{
    compress, compress_szx_with, decompress, decompress_szx, szx, CodecKind, CodecParams,
    ErrorBoundSpec, FloatField, SzxFrame,
};

use crate::collectives::{
    self, run_loopback_world, CollectiveConfig, OpCounters, ReduceKind,
};
use crate::error::{Error, Result};
use crate::parallel::compress_parallel;
use crate::pgm::write_pgm;
use crate::rawio::{load_raw_f32, save_raw_f32};
use crate::report::{
    breakdown_pcts, rows_to_csv, CodecRow, CollectiveRow, CODEC_CSV_HEADER,
    COLLECTIVE_CSV_HEADER,
};
use crate::synth::{generate_field, generate_image, SyntheticKind, SyntheticSpec};
use crate::transport::Communicator;

#[derive(Parser, Debug)]
#[command(name = "zcl", about = "Compressed collective benchmark harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Codec throughput/ratio sweep over bounds, codecs, and worker counts
    BenchCodec(BenchCodecArgs),
    /// One collective configuration with timing breakdown and counters
    BenchCollective(BenchCollectiveArgs),
    /// Allreduce error distribution vs the 64-bit oracle and the theory
    AnalyzeError(AnalyzeErrorArgs),
    /// Image stacking demo: allreduce(Sum) of per-rank images
    Stack(StackArgs),
    /// Allocate localhost ports and spawn TCP rank processes
    Launch(LaunchArgs),
}

pub fn parse_bound(s: &str) -> Result<ErrorBoundSpec> {
    let (mode, value) = s
        .split_once(':')
        .ok_or_else(|| Error::Param(format!("bound {s:?} is not rel:X or abs:X")))?;
    let value: f32 = value
        .parse()
        .map_err(|_| Error::Param(format!("bound value {value:?} is not a number")))?;
    let spec = match mode {
        "rel" => ErrorBoundSpec::Relative(value),
        "abs" => ErrorBoundSpec::Absolute(value),
        other => return Err(Error::Param(format!("bound mode {other:?} is not rel/abs"))),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn parse_codec(s: &str) -> Result<CodecKind> {
    match s {
        "zlite" => Ok(CodecKind::ZLite),
        "szx" => Ok(CodecKind::SzxBaseline),
        other => Err(Error::Param(format!("unknown codec {other:?}"))),
    }
}

fn parse_reduce(s: &str) -> Result<ReduceKind> {
    match s {
        "sum" => Ok(ReduceKind::Sum),
        "max" => Ok(ReduceKind::Max),
        "min" => Ok(ReduceKind::Min),
        other => Err(Error::Param(format!("unknown reduce kind {other:?}"))),
    }
}

fn bound_columns(spec: &ErrorBoundSpec) -> (String, f32) {
    match spec {
        ErrorBoundSpec::Relative(v) => ("rel".to_string(), *v),
        ErrorBoundSpec::Absolute(v) => ("abs".to_string(), *v),
    }
}

#[derive(Args, Debug)]
pub struct BenchCodecArgs {
    /// Synthetic field kind: constant|uniform|gaussian_walk|sine_mix
    #[arg(long, default_value = "sine_mix")]
    pub kind: String,
    /// Field size in bytes (4 bytes per value)
    #[arg(long, default_value_t = 1 << 22)]
    pub size: usize,
    /// Raw f32 input file; overrides --kind/--size
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated bounds, e.g. rel:1e-1,rel:1e-2,abs:1e-3
    #[arg(long, default_value = "rel:1e-1,rel:1e-2,rel:1e-3,rel:1e-4")]
    pub bounds: String,
    /// Comma-separated codecs: zlite,szx
    #[arg(long, default_value = "zlite,szx")]
    pub codecs: String,
    /// Comma-separated worker counts (zlite only; szx is single-worker)
    #[arg(long, default_value = "1")]
    pub workers: String,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_bench_codec(args: &BenchCodecArgs) -> Result<String> {
    let field = match &args.input {
        Some(path) => load_raw_f32(path, None)?,
        None => {
            let kind: SyntheticKind = args.kind.parse()?;
            generate_field(&SyntheticSpec::new(kind, args.size / 4, args.seed))?
        }
    };
    if args.reps == 0 {
        return Err(Error::Param("reps must be >= 1".to_string()));
    }
    let bounds: Vec<ErrorBoundSpec> = args
        .bounds
        .split(',')
        .map(parse_bound)
        .collect::<Result<_>>()?;
    let codecs: Vec<CodecKind> = args
        .codecs
        .split(',')
        .map(parse_codec)
        .collect::<Result<_>>()?;
    let workers: Vec<usize> = args
        .workers
        .split(',')
        .map(|w| {
            w.parse::<usize>()
                .map_err(|_| Error::Param(format!("bad worker count {w:?}")))
        })
        .collect::<Result<_>>()?;

    let bytes = field.len() * 4;
    let mut rows = Vec::new();
    for &codec in &codecs {
        for spec in &bounds {
            for &w in &workers {
                if codec == CodecKind::SzxBaseline && w != 1 {
                    continue;
                }
                let mut compress_s = 0.0;
                let mut decompress_s = 0.0;
                let mut ratio = 0.0;
                let mut constant_pct = 0.0;
                for rep in 0..args.warmup + args.reps {
                    let measured = rep >= args.warmup;
                    match codec {
                        CodecKind::ZLite => {
                            let params = CodecParams {
                                parallelism: w,
                                ..CodecParams::default()
                            };
                            let t0 = Instant::now();
                            let (frame, cstats) = if w == 1 {
                                compress(&field, spec, &params)?
                            } else {
                                compress_parallel(&field, spec, &params)?
                            };
                            let ct = t0.elapsed().as_secs_f64();
                            let t0 = Instant::now();
                            let _ = decompress(&frame)?;
                            if measured {
                                compress_s += ct;
                                decompress_s += t0.elapsed().as_secs_f64();
                                ratio = cstats.ratio;
                                constant_pct = cstats.constant_block_fraction * 100.0;
                            }
                        }
                        CodecKind::SzxBaseline => {
                            let t0 = Instant::now();
                            let (frame, cstats) =
                                compress_szx_with(&field, spec, szx::DEFAULT_BLOCK_LEN)?;
                            let ct = t0.elapsed().as_secs_f64();
                            let bytes_frame = frame.into_bytes();
                            let frame = SzxFrame::from_bytes(bytes_frame)?;
                            let t0 = Instant::now();
                            let _ = decompress_szx(&frame)?;
                            if measured {
                                compress_s += ct;
                                decompress_s += t0.elapsed().as_secs_f64();
                                ratio = cstats.ratio;
                                constant_pct = cstats.constant_block_fraction * 100.0;
                            }
                        }
                    }
                }
                let reps = args.reps as f64;
                let (mode, bound) = bound_columns(spec);
                rows.push(
                    CodecRow {
                        codec: match codec {
                            CodecKind::ZLite => "zlite".to_string(),
                            CodecKind::SzxBaseline => "szx".to_string(),
                        },
                        mode: if w == 1 { "serial".to_string() } else { format!("parallel{w}") },
                        rel_or_abs: mode,
                        bound,
                        workers: w,
                        compress_throughput_gbs: bytes as f64 * reps / compress_s / 1e9,
                        decompress_throughput_gbs: bytes as f64 * reps / decompress_s / 1e9,
                        ratio,
                        constant_block_pct: constant_pct,
                    }
                    .to_csv(),
                );
            }
        }
    }
    let csv = rows_to_csv(CODEC_CSV_HEADER, &rows);
    if let Some(out) = &args.out {
        std::fs::write(out, &csv)?;
    }
    Ok(csv)
}

#[derive(Args, Debug)]
pub struct BenchCollectiveArgs {
    #[arg(long, default_value = "loopback")]
    pub backend: String,
    #[arg(long, default_value_t = 4)]
    pub ranks: usize,
    /// allgather|bcast|scatter|reduce-scatter|allreduce
    #[arg(long, default_value = "allreduce")]
    pub collective: String,
    /// z|cprp2p|plain
    #[arg(long, default_value = "z")]
    pub variant: String,
    /// Per-rank data size in bytes
    #[arg(long, default_value_t = 1 << 20)]
    pub size: usize,
    #[arg(long, default_value = "rel:1e-3")]
    pub bound: String,
    #[arg(long, default_value = "zlite")]
    pub codec: String,
    #[arg(long, default_value = "sine_mix")]
    pub kind: String,
    #[arg(long, default_value = "sum")]
    pub reduce: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// TCP only: this process's rank
    #[arg(long)]
    pub rank: Option<usize>,
    /// TCP only: address file, one host:port per line, line index = rank
    #[arg(long)]
    pub addrs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub struct CollectiveOutcome {
    pub result: FloatField,
    pub counters: OpCounters,
    pub transport: crate::transport::TransportCounters,
}

/// Run one collective at one rank; the shared dispatch for both backends.
pub fn run_collective_at_rank(
    comm: &mut Communicator,
    args: &BenchCollectiveArgs,
) -> Result<CollectiveOutcome> {
    let n = comm.world_size();
    let kind: SyntheticKind = args.kind.parse()?;
    let values = args.size / 4;
    let cfg = CollectiveConfig {
        error_bound: parse_bound(&args.bound)?,
        codec: parse_codec(&args.codec)?,
        ..CollectiveConfig::default()
    };
    let reduce = parse_reduce(&args.reduce)?;
    let local = generate_field(&SyntheticSpec::new(
        kind,
        values,
        args.seed.wrapping_add(comm.rank() as u64),
    ))?;
    let root_field = if comm.rank() == 0 {
        // bcast/scatter source covers world_size chunks
        Some(generate_field(&SyntheticSpec::new(
            kind,
            values * n,
            args.seed,
        ))?)
    } else {
        None
    };
    let before = comm.counters();
    let (result, counters) = match (args.collective.as_str(), args.variant.as_str()) {
        ("allgather", "z") => collectives::z_allgather(comm, &local, &cfg)?,
        ("allgather", "cprp2p") => collectives::cprp2p_allgather(comm, &local, &cfg)?,
        ("allgather", "plain") => collectives::plain_allgather(comm, &local)?,
        ("bcast", "z") => collectives::z_bcast(comm, 0, root_field.as_ref(), &cfg)?,
        ("bcast", "cprp2p") => collectives::cprp2p_bcast(comm, 0, root_field.as_ref(), &cfg)?,
        ("bcast", "plain") => collectives::plain_bcast(comm, 0, root_field.as_ref())?,
        ("scatter", "z") => collectives::z_scatter(comm, 0, root_field.as_ref(), &cfg)?,
        ("scatter", "plain") => collectives::plain_scatter(comm, 0, root_field.as_ref())?,
        ("reduce-scatter", "z") => collectives::z_reduce_scatter(comm, &local, reduce, &cfg)?,
        ("allreduce", "z") => collectives::z_allreduce(comm, &local, reduce, &cfg)?,
        ("allreduce", "cprp2p") => collectives::cprp2p_allreduce(comm, &local, reduce, &cfg)?,
        ("allreduce", "plain") => collectives::plain_allreduce(comm, &local, reduce)?,
        (c, v) => {
            return Err(Error::Param(format!(
                "no {v:?} variant of collective {c:?}"
            )));
        }
    };
    let after = comm.counters();
    Ok(CollectiveOutcome {
        result,
        counters,
        transport: crate::transport::TransportCounters {
            bytes_sent: after.bytes_sent - before.bytes_sent,
            bytes_received: after.bytes_received - before.bytes_received,
            messages_sent: after.messages_sent - before.messages_sent,
            messages_received: after.messages_received - before.messages_received,
        },
    })
}

fn outcome_row(args: &BenchCollectiveArgs, n: usize, c: &OpCounters) -> CollectiveRow {
    let (compress_pct, commu_pct, comput_pct, other_pct) = breakdown_pcts(
        c.total_seconds,
        c.compress_seconds,
        c.comm_seconds,
        c.compute_seconds,
    );
    CollectiveRow {
        collective: args.collective.clone(),
        variant: args.variant.clone(),
        backend: args.backend.clone(),
        n,
        data_bytes: args.size as u64,
        total_s: c.total_seconds,
        compress_pct,
        commu_pct,
        comput_pct,
        other_pct,
        compress_ops: c.compress_ops,
        decompress_ops: c.decompress_ops,
        rounds: c.rounds,
        payload_sent: c.data_bytes_sent,
        payload_received: c.data_bytes_received,
    }
}

pub fn cmd_bench_collective(args: &BenchCollectiveArgs) -> Result<String> {
    let rows = match args.backend.as_str() {
        "loopback" => {
            let outcomes = run_loopback_world(args.ranks, |comm| {
                run_collective_at_rank(comm, args)
            })?;
            outcomes
                .iter()
                .enumerate()
                .map(|(rank, o)| {
                    let mut row = outcome_row(args, args.ranks, &o.counters);
                    row.variant = format!("{}@r{rank}", row.variant);
                    row.to_csv()
                })
                .collect::<Vec<_>>()
        }
        "tcp" => {
            let rank = args
                .rank
                .ok_or_else(|| Error::Param("tcp backend needs --rank".to_string()))?;
            let addrs_path = args
                .addrs
                .as_ref()
                .ok_or_else(|| Error::Param("tcp backend needs --addrs".to_string()))?;
            let addrs = read_addrs(addrs_path)?;
            let mut comm =
                crate::transport::connect_tcp(rank, &addrs, crate::transport::DEFAULT_TIMEOUT)?;
            let outcome = run_collective_at_rank(&mut comm, args)?;
            let mut row = outcome_row(args, addrs.len(), &outcome.counters);
            row.variant = format!("{}@r{rank}", row.variant);
            vec![row.to_csv()]
        }
        other => return Err(Error::Param(format!("unknown backend {other:?}"))),
    };
    let csv = rows_to_csv(COLLECTIVE_CSV_HEADER, &rows);
    if let Some(out) = &args.out {
        std::fs::write(out, &csv)?;
    }
    Ok(csv)
}

#[derive(Args, Debug)]
pub struct AnalyzeErrorArgs {
    #[arg(long, default_value_t = 16)]
    pub ranks: usize,
    #[arg(long, default_value = "sum")]
    pub reduce: String,
    #[arg(long, default_value = "rel:1e-4")]
    pub bound: String,
    /// Values per rank
    #[arg(long, default_value_t = 100_000)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value = "sine_mix")]
    pub kind: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exact 64-bit elementwise reduction over all rank fields.
pub fn oracle_reduce(fields: &[FloatField], kind: ReduceKind) -> Vec<f64> {
    let len = fields[0].len();
    let mut acc: Vec<f64> = fields[0].values().iter().map(|&v| v as f64).collect();
    for field in &fields[1..] {
        for (a, &v) in acc.iter_mut().zip(field.values()) {
            let v = v as f64;
            match kind {
                ReduceKind::Sum => *a += v,
                ReduceKind::Max => *a = a.max(v),
                ReduceKind::Min => *a = a.min(v),
            }
        }
    }
    debug_assert_eq!(acc.len(), len);
    acc
}

pub struct ErrorAnalysis {
    pub errors: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub coverage_sigma: f64,
    pub coverage_bound: f64,
    pub eb_hop: f32,
    pub measured_variance: f64,
    pub theory_maxmin_variance: f64,
}

pub fn analyze_allreduce_errors(args: &AnalyzeErrorArgs) -> Result<ErrorAnalysis> {
    let kind: SyntheticKind = args.kind.parse()?;
    let reduce = parse_reduce(&args.reduce)?;
    let cfg = CollectiveConfig {
        error_bound: parse_bound(&args.bound)?,
        ..CollectiveConfig::default()
    };
    let n = args.ranks;
    let mut errors: Vec<f64> = Vec::new();
    let mut eb_hop = 0.0f32;
    for trial in 0..args.trials.max(1) {
        let fields: Vec<FloatField> = (0..n)
            .map(|r| {
                generate_field(&SyntheticSpec::new(
                    kind,
                    args.size,
                    args.seed
                        .wrapping_add(trial as u64 * 1000)
                        .wrapping_add(r as u64),
                ))
            })
            .collect::<Result<_>>()?;
        let oracle = oracle_reduce(&fields, reduce);
        let outcomes = run_loopback_world(n, |comm| {
            collectives::z_allreduce(comm, &fields[comm.rank()], reduce, &cfg)
        })?;
        let (result, counters) = &outcomes[0];
        eb_hop = eb_hop.max(counters.max_eb_abs);
        errors.extend(
            result
                .values()
                .iter()
                .zip(&oracle)
                .map(|(&got, &want)| got as f64 - want),
        );
    }
    let (mu, sigma) = stats::fit_normal_mle(&errors)?;
    let nn = n as u64;
    let coverage_sigma = if sigma > 0.0 {
        stats::coverage_fraction(&errors, stats::sum_error_interval_sigma(nn, sigma)?)
    } else {
        1.0
    };
    let coverage_bound =
        stats::coverage_fraction(&errors, stats::sum_error_interval_bound(nn, eb_hop as f64)?);
    let measured_variance = sigma * sigma;
    let per_value_sigma = stats::sigma_from_bound(eb_hop as f64);
    let theory_maxmin_variance = stats::maxmin_error_variance(nn, per_value_sigma)?;
    Ok(ErrorAnalysis {
        errors,
        mu,
        sigma,
        coverage_sigma,
        coverage_bound,
        eb_hop,
        measured_variance,
        theory_maxmin_variance,
    })
}

pub fn cmd_analyze_error(args: &AnalyzeErrorArgs) -> Result<String> {
    let analysis = analyze_allreduce_errors(args)?;
    // 64-bin histogram CSV
    let lo = analysis.errors.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = analysis
        .errors
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let bins = 64usize;
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0u64; bins];
    for &e in &analysis.errors {
        let b = (((e - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let rows: Vec<String> = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| format!("{},{},{}", lo + b as f64 * width, lo + (b + 1) as f64 * width, c))
        .collect();
    let csv = rows_to_csv("bin_lo,bin_hi,count", &rows);
    if let Some(out) = &args.out {
        std::fs::write(out, &csv)?;
    }
    let summary = format!(
        "ranks={} reduce={} eb_hop={:.3e} mu={:.3e} sigma={:.3e} \
         coverage_2sqrtN_sigma={:.4} coverage_bound_interval={:.4} \
         measured_var={:.3e} theory_maxmin_var={:.3e}\n{csv}",
        args.ranks,
        args.reduce,
        analysis.eb_hop,
        analysis.mu,
        analysis.sigma,
        analysis.coverage_sigma,
        analysis.coverage_bound,
        analysis.measured_variance,
        analysis.theory_maxmin_variance,
    );
    Ok(summary)
}

#[derive(Args, Debug)]
pub struct StackArgs {
    #[arg(long, default_value_t = 8)]
    pub ranks: usize,
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    #[arg(long, default_value_t = 512)]
    pub height: usize,
    #[arg(long, default_value = "rel:1e-4")]
    pub bound: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Writes <prefix>.f32 and <prefix>.pgm
    #[arg(long, default_value = "stack")]
    pub out_prefix: String,
}

pub struct StackOutcome {
    pub stacked: FloatField,
    pub psnr_db: f64,
    pub nrmse: f64,
    pub raw_path: PathBuf,
    pub pgm_path: PathBuf,
}

pub fn stack_images(args: &StackArgs) -> Result<StackOutcome> {
    let cfg = CollectiveConfig {
        error_bound: parse_bound(&args.bound)?,
        ..CollectiveConfig::default()
    };
    let n = args.ranks;
    let images: Vec<FloatField> = (0..n)
        .map(|r| generate_image(args.width, args.height, args.seed.wrapping_add(r as u64)))
        .collect::<Result<_>>()?;
    let outcomes = run_loopback_world(n, |comm| {
        collectives::z_allreduce(comm, &images[comm.rank()], ReduceKind::Sum, &cfg)
    })?;
    let (stacked, _) = &outcomes[0];
    let oracle: Vec<f32> = oracle_reduce(&images, ReduceKind::Sum)
        .into_iter()
        .map(|v| v as f32)
        .collect();
    let psnr_db = stats::psnr(stacked.values(), &oracle)?;
    let nrmse = stats::nrmse(stacked.values(), &oracle)?;
    let raw_path = PathBuf::from(format!("{}.f32", args.out_prefix));
    let pgm_path = PathBuf::from(format!("{}.pgm", args.out_prefix));
    save_raw_f32(&raw_path, stacked)?;
    write_pgm(&pgm_path, stacked, args.width, args.height)?;
    Ok(StackOutcome {
        stacked: stacked.clone(),
        psnr_db,
        nrmse,
        raw_path,
        pgm_path,
    })
}

pub fn cmd_stack(args: &StackArgs) -> Result<String> {
    let outcome = stack_images(args)?;
    Ok(format!(
        "stacked {}x{} across {} ranks: psnr_db={:.2} nrmse={:.3e} raw={} pgm={}",
        args.width,
        args.height,
        args.ranks,
        outcome.psnr_db,
        outcome.nrmse,
        outcome.raw_path.display(),
        outcome.pgm_path.display(),
    ))
}

#[derive(Args, Debug)]
pub struct LaunchArgs {
    #[arg(long, default_value_t = 4)]
    pub ranks: usize,
    /// Existing address file; omitted = allocate localhost ports
    #[arg(long)]
    pub addrs: Option<PathBuf>,
    /// Where to write the allocated address file
    #[arg(long, default_value = "addrs.txt")]
    pub addrs_out: PathBuf,
    /// Print per-rank commands instead of spawning processes
    #[arg(long, default_value_t = false)]
    pub print_only: bool,
    /// Arguments passed through to each rank's bench-collective
    #[arg(last = true)]
    pub bench_args: Vec<String>,
}

pub fn read_addrs(path: &std::path::Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let addrs: Vec<String> = text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    let mut seen = std::collections::HashSet::new();
    for addr in &addrs {
        if !seen.insert(addr.clone()) {
            return Err(Error::Param(format!("duplicate address {addr:?}")));
        }
    }
    if addrs.len() < 2 {
        return Err(Error::Param("address file needs at least 2 entries".to_string()));
    }
    Ok(addrs)
}

/// Bind ephemeral localhost ports, one per rank.
pub fn allocate_localhost_addrs(ranks: usize) -> Result<Vec<String>> {
    if ranks < 2 {
        return Err(Error::Param("ranks must be >= 2".to_string()));
    }
    (0..ranks)
        .map(|_| {
            let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
            Ok(format!("127.0.0.1:{}", listener.local_addr()?.port()))
        })
        .collect()
}

pub fn cmd_launch(args: &LaunchArgs) -> Result<String> {
    let addrs = match &args.addrs {
        Some(path) => read_addrs(path)?,
        None => {
            let addrs = allocate_localhost_addrs(args.ranks)?;
            std::fs::write(&args.addrs_out, addrs.join("\n") + "\n")?;
            addrs
        }
    };
    if addrs.len() != args.ranks {
        return Err(Error::Param(format!(
            "{} addresses for {} ranks",
            addrs.len(),
            args.ranks
        )));
    }
    let addrs_file = args.addrs.clone().unwrap_or_else(|| args.addrs_out.clone());
    let exe = std::env::current_exe()?;
    let mut lines = Vec::new();
    let mut children = Vec::new();
    for rank in 0..args.ranks {
        let mut cmd_line = vec![
            exe.display().to_string(),
            "bench-collective".to_string(),
            "--backend".to_string(),
            "tcp".to_string(),
            "--rank".to_string(),
            rank.to_string(),
            "--addrs".to_string(),
            addrs_file.display().to_string(),
        ];
        cmd_line.extend(args.bench_args.iter().cloned());
        lines.push(cmd_line.join(" "));
        if !args.print_only {
            let child = std::process::Command::new(&exe)
                .args(&cmd_line[1..])
                .spawn()
                .map_err(|e| Error::Transport(format!("spawn rank {rank}: {e}")))?;
            children.push((rank, child));
        }
    }
    for (rank, mut child) in children {
        let status = child
            .wait()
            .map_err(|e| Error::Transport(format!("wait rank {rank}: {e}")))?;
        if !status.success() {
            return Err(Error::Transport(format!("rank {rank} exited with {status}")));
        }
    }
    Ok(lines.join("\n"))
}

pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::BenchCodec(args) => cmd_bench_codec(args),
        Command::BenchCollective(args) => cmd_bench_collective(args),
        Command::AnalyzeError(args) => cmd_analyze_error(args),
        Command::Stack(args) => cmd_stack(args),
        Command::Launch(args) => cmd_launch(args),
    }
}
