//! Compression-enabled collectives (the Z- family), per-hop-compression
//! baselines (CPRP2P), and uncompressed references, all instrumented with
//! operation counters.
//!
//! Schedules are shared across the three families and differ only in
//! codec placement:
//! - ring collectives (allgather, reduce-scatter, allreduce phases) run
//!   exactly N-1 rounds, sending to rank+1 and receiving from rank-1;
//! - bcast and scatter use the binomial tree, depth ceil(log2 N).
//!
//! Z data-movement collectives compress once and relay compressed bytes;
//! Z reduce-scatter compresses per hop but overlaps codec work with
//! transfers through chunk-boundary progress hooks. CPRP2P variants
//! compress before every send and decompress after every receive.

use std::time::Instant;

use zcl_core::{
    compress_chunk_bytes, compress_chunked, decompress_chunk_bytes, decompress_chunked,
    noop_hook, resolve_error_bound, ChunkedFrame, CodecKind, CodecParams, ErrorBoundSpec,
    FloatField, HookSignal,
};

use crate::error::{Error, Result};
use crate::transport::Communicator;

pub const DEFAULT_CHUNK_LEN: usize = 5120;
pub const DEFAULT_PIPELINE_SEGMENT_BYTES: usize = 65536;

#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveConfig {
    pub error_bound: ErrorBoundSpec,
    pub codec: CodecKind,
    pub chunk_len: usize,
    pub pipeline_segment_bytes: usize,
    /// Ranks keep their own original (or locally reduced) data instead of
    /// decoding their own compressed bytes. Set false for cross-rank
    /// bitwise agreement.
    pub self_exact: bool,
    pub params: CodecParams,
}

impl Default for CollectiveConfig {
    fn default() -> Self {
        CollectiveConfig {
            error_bound: ErrorBoundSpec::default(),
            codec: CodecKind::ZLite,
            chunk_len: DEFAULT_CHUNK_LEN,
            pipeline_segment_bytes: DEFAULT_PIPELINE_SEGMENT_BYTES,
            self_exact: true,
            params: CodecParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Max,
    Min,
}

/// Per-rank accounting for one collective call. Byte fields count data
/// payload only (compressed or raw field bytes), excluding size-exchange
/// prologues and transport framing; full traffic is available from
/// [`Communicator::counters`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OpCounters {
    pub compress_ops: u64,
    pub decompress_ops: u64,
    pub rounds: u64,
    pub data_bytes_sent: u64,
    pub data_bytes_received: u64,
    /// Absolute hop bound actually used (max across ranks where exchanged).
    pub max_eb_abs: f32,
    pub compress_seconds: f64,
    pub comm_seconds: f64,
    pub compute_seconds: f64,
    pub total_seconds: f64,
}

fn f32s_to_bytes(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn bytes_to_f32s(bytes: &[u8]) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Transport(format!(
            "payload of {} bytes is not a whole number of f32s",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn reduce_into(kind: ReduceKind, acc: &mut [f32], other: &[f32]) {
    debug_assert_eq!(acc.len(), other.len());
    match kind {
        ReduceKind::Sum => {
            for (a, b) in acc.iter_mut().zip(other) {
                *a += *b;
            }
        }
        ReduceKind::Max => {
            for (a, b) in acc.iter_mut().zip(other) {
                *a = a.max(*b);
            }
        }
        ReduceKind::Min => {
            for (a, b) in acc.iter_mut().zip(other) {
                *a = a.min(*b);
            }
        }
    }
}

/// Ring allgather of one fixed-size record per rank; N-1 rounds.
fn ring_allgather_records(comm: &mut Communicator, mine: Vec<u8>) -> Result<Vec<Vec<u8>>> {
    let n = comm.world_size();
    let r = comm.rank();
    let next = (r + 1) % n;
    let prev = (r + n - 1) % n;
    let mut records: Vec<Option<Vec<u8>>> = vec![None; n];
    records[r] = Some(mine);
    for t in 0..n - 1 {
        let send_origin = (r + n - t) % n;
        let recv_origin = (r + n - 1 - t) % n;
        let out = records[send_origin].clone().expect("origin already held");
        let sh = comm.isend(next, out).map_err(|e| e.in_round(r, t))?;
        let rh = comm.irecv(prev).map_err(|e| e.in_round(r, t))?;
        let got = comm.wait(rh).map_err(|e| e.in_round(r, t))?.unwrap();
        comm.wait(sh).map_err(|e| e.in_round(r, t))?;
        records[recv_origin] = Some(got);
    }
    Ok(records.into_iter().map(|o| o.unwrap()).collect())
}

/// Send `out` to `next` while receiving exactly `in_len` bytes from
/// `prev`, both split at `seg`-byte pipeline segments.
fn exchange_segmented(
    comm: &mut Communicator,
    next: usize,
    prev: usize,
    out: &[u8],
    in_len: usize,
    seg: usize,
) -> Result<Vec<u8>> {
    let seg = seg.max(1);
    let out_segs: Vec<&[u8]> = out.chunks(seg).collect();
    let in_segs = in_len.div_ceil(seg);
    let mut incoming = Vec::with_capacity(in_len);
    for i in 0..out_segs.len().max(in_segs) {
        let rh = if i < in_segs { Some(comm.irecv(prev)?) } else { None };
        let sh = if i < out_segs.len() {
            Some(comm.isend(next, out_segs[i].to_vec())?)
        } else {
            None
        };
        if let Some(h) = rh {
            incoming.extend_from_slice(&comm.wait(h)?.expect("completed recv"));
        }
        if let Some(h) = sh {
            comm.wait(h)?;
        }
    }
    if incoming.len() != in_len {
        return Err(Error::Transport(format!(
            "expected {in_len} payload bytes, received {}",
            incoming.len()
        )));
    }
    Ok(incoming)
}

/// Ring allgather of one pre-compressed frame per rank. `own_values` fills
/// this rank's slot when `self_exact`; otherwise the own frame is decoded
/// like any other.
fn ring_allgather_frames(
    comm: &mut Communicator,
    own_frame: Vec<u8>,
    own_values: &[f32],
    cfg: &CollectiveConfig,
    counters: &mut OpCounters,
) -> Result<FloatField> {
    let n = comm.world_size();
    let r = comm.rank();
    let next = (r + 1) % n;
    let prev = (r + n - 1) % n;

    // prologue: element count + compressed size per rank
    let mut record = Vec::with_capacity(12);
    record.extend_from_slice(&(own_values.len() as u64).to_le_bytes());
    record.extend_from_slice(&(own_frame.len() as u32).to_le_bytes());
    let records = ring_allgather_records(comm, record)?;
    let mut sizes = vec![0usize; n];
    for (origin, rec) in records.iter().enumerate() {
        let len = u64::from_le_bytes(rec[0..8].try_into().unwrap()) as usize;
        if len != own_values.len() {
            return Err(Error::Param(format!(
                "rank {origin} holds {len} values, rank {r} holds {}",
                own_values.len()
            )));
        }
        sizes[origin] = u32::from_le_bytes(rec[8..12].try_into().unwrap()) as usize;
    }

    let mut frames: Vec<Option<Vec<u8>>> = vec![None; n];
    frames[r] = Some(own_frame);
    let comm_t0 = Instant::now();
    for t in 0..n - 1 {
        let send_origin = (r + n - t) % n;
        let recv_origin = (r + n - 1 - t) % n;
        let out = frames[send_origin].clone().expect("origin already held");
        let got = exchange_segmented(
            comm,
            next,
            prev,
            &out,
            sizes[recv_origin],
            cfg.pipeline_segment_bytes,
        )
        .map_err(|e| e.in_round(r, t))?;
        counters.data_bytes_sent += out.len() as u64;
        counters.data_bytes_received += got.len() as u64;
        frames[recv_origin] = Some(got);
        counters.rounds += 1;
    }
    counters.comm_seconds += comm_t0.elapsed().as_secs_f64();

    let decompress_t0 = Instant::now();
    let mut values: Vec<f32> = Vec::with_capacity(own_values.len() * n);
    for (origin, frame) in frames.into_iter().enumerate() {
        let frame = frame.unwrap();
        if origin == r && cfg.self_exact {
            values.extend_from_slice(own_values);
        } else {
            let field = decompress_chunked(&ChunkedFrame::from_bytes(frame)?, &mut noop_hook())?;
            counters.decompress_ops += 1;
            values.extend_from_slice(field.values());
        }
    }
    counters.compress_seconds += decompress_t0.elapsed().as_secs_f64();
    Ok(FloatField::new(values)?)
}

/// All ranks contribute equal-length fields; result is the rank-major
/// concatenation. Each rank compresses its contribution exactly once.
pub fn z_allgather(
    comm: &mut Communicator,
    local: &FloatField,
    cfg: &CollectiveConfig,
) -> Result<(FloatField, OpCounters)> {
    let total_t0 = Instant::now();
    let mut counters = OpCounters::default();
    let eb = resolve_error_bound(&cfg.error_bound, local)?;
    counters.max_eb_abs = eb;
    let compress_t0 = Instant::now();
    let frame = compress_chunked(
        local,
        &ErrorBoundSpec::Absolute(eb),
        &cfg.params,
        cfg.chunk_len,
        cfg.codec,
        &mut noop_hook(),
    )?;
    counters.compress_ops = 1;
    counters.compress_seconds += compress_t0.elapsed().as_secs_f64();
    let result =
        ring_allgather_frames(comm, frame.into_bytes(), local.values(), cfg, &mut counters)?;
    counters.total_seconds = total_t0.elapsed().as_secs_f64();
    Ok((result, counters))
}

/// CPRP2P allgather: the same ring, but every relay decompresses the
/// incoming chunk and re-compresses it before forwarding.
pub fn cprp2p_allgather(
    comm: &mut Communicator,
    local: &FloatField,
    cfg: &CollectiveConfig,
) -> Result<(FloatField, OpCounters)> {
    let total_t0 = Instant::now();
    let n = comm.world_size();
    let r = comm.rank();
    let next = (r + 1) % n;
    let prev = (r + n - 1) % n;
    let mut counters = OpCounters::default();
    let eb = resolve_error_bound(&cfg.error_bound, local)?;
    counters.max_eb_abs = eb;

    let mut slots: Vec<Option<Vec<f32>>> = vec![None; n];
    slots[r] = Some(local.values().to_vec());
    let mut forward = local.values().to_vec();
    for t in 0..n - 1 {
        let recv_origin = (r + n - 1 - t) % n;
        let compress_t0 = Instant::now();
        let (out, _) = compress_chunk_bytes(
            &forward,
            eb,
            &cfg.params,
            cfg.codec,
        )?;
        counters.compress_ops += 1;
        counters.compress_seconds += compress_t0.elapsed().as_secs_f64();
        let comm_t0 = Instant::now();
        let sh = comm.isend(next, out.clone()).map_err(|e| e.in_round(r, t))?;
        let rh = comm.irecv(prev).map_err(|e| e.in_round(r, t))?;
        let got = comm.wait(rh).map_err(|e| e.in_round(r, t))?.unwrap();
        comm.wait(sh).map_err(|e| e.in_round(r, t))?;
        counters.comm_seconds += comm_t0.elapsed().as_secs_f64();
        counters.data_bytes_sent += out.len() as u64;
        counters.data_bytes_received += got.len() as u64;
        counters.rounds += 1;
        let decompress_t0 = Instant::now();
        let values = decompress_chunk_bytes(&got)?;
        counters.decompress_ops += 1;
        counters.compress_seconds += decompress_t0.elapsed().as_secs_f64();
        slots[recv_origin] = Some(values.clone());
        forward = values;
    }
    let mut out_values = Vec::with_capacity(local.len() * n);
    for slot in slots {
        out_values.extend_from_slice(&slot.expect("all origins received"));
    }
    counters.total_seconds = total_t0.elapsed().as_secs_f64();
    Ok((FloatField::new(out_values)?, counters))
}

/// Uncompressed ring allgather reference.
pub fn plain_allgather(
    comm: &mut Communicator,
    local: &FloatField,
) -> Result<(FloatField, OpCounters)> {
    let total_t0 = Instant::now();
    let n = comm.world_size();
    let r = comm.rank();
    let next = (r + 1) % n;
    let prev = (r + n - 1) % n;
    let mut counters = OpCounters::default();
    let mut slots: Vec<Option<Vec<u8>>> = vec![None; n];
    slots[r] = Some(f32s_to_bytes(local.values()));
    let comm_t0 = Instant::now();
    for t in 0..n - 1 {
        let send_origin = (r + n - t) % n;
        let recv_origin = (r + n - 1 - t) % n;
        let out = slots[send_origin].clone().unwrap();
        counters.data_bytes_sent += out.len() as u64;
        let sh = comm.isend(next, out).map_err(|e| e.in_round(r, t))?;
        let rh = comm.irecv(prev).map_err(|e| e.in_round(r, t))?;
        let got = comm.wait(rh).map_err(|e| e.in_round(r, t))?.unwrap();
        comm.wait(sh).map_err(|e| e.in_round(r, t))?;
        counters.data_bytes_received += got.len() as u64;
        slots[recv_origin] = Some(got);
        counters.rounds += 1;
    }
    counters.comm_seconds += comm_t0.elapsed().as_secs_f64();
    let mut values = Vec::with_capacity(local.len() * n);
    for slot in slots {
        values.extend_from_slice(&bytes_to_f32s(&slot.unwrap())?);
    }
    counters.total_seconds = total_t0.elapsed().as_secs_f64();
    Ok((FloatField::new(values)?, counters))
}

/// Binomial-tree plan: the parent this rank receives from (None at root)
/// and the children it sends to, in send order, using relative ranks.
fn binomial_plan(relrank: usize, n: usize) -> (Option<(usize, usize)>, Vec<(usize, usize)>) {
    // parent: (rel parent, mask at receive); children: (rel child, mask)
    let mut mask = 1usize;
    let mut parent = None;
    while mask < n {
        if relrank & mask != 0 {
            parent = Some((relrank - mask, mask));
            break;
        }
        mask <<= 1;
    }
    let mut children = Vec::new();
    let mut m = mask >> 1;
    if parent.is_none() {
        // root: highest power of two below n
        m = 1;
        while m < n {
            m <<= 1;
        }
        m >>= 1;
    }
    while m > 0 {
        if relrank + m < n {
            children.push((relrank + m, m));
        }
        m >>= 1;
    }
    (parent, children)
}

pub fn binomial_depth(n: usize) -> u64 {
    let mut depth = 0u64;
    let mut reach = 1usize;
    while reach < n {
        reach <<= 1;
        depth += 1;
    }
    depth
}

/// Root compresses once; the compressed bytes are relayed along the
/// binomial tree with no intermediate codec work.
pub fn z_bcast(
    comm: &mut Communicator,
    root: usize,
    field_at_root: Option<&FloatField>,
    cfg: &CollectiveConfig,
) -> Result<(FloatField, OpCounters)> {
    let total_t0 = Instant::now();
    let n = comm.world_size();
    let r = comm.rank();
    if root >= n {
        return Err(Error::Param(format!("root {root} out of range")));
    }
    let relrank = (r + n - root) % n;
    let (parent, children) = binomial_plan(relrank, n);
    let mut counters = OpCounters::default();
    counters.rounds = binomial_depth(n);

    let bytes = if r == root {
        let field = field_at_root
            .ok_or_else(|| Error::Param("root must supply the field".to_string()))?;
        let eb = resolve_error_bound(&cfg.error_bound, field)?;
        counters.max_eb_abs = eb;
        let compress_t0 = Instant::now();
        let (bytes, _) = compress_chunk_bytes(field.values(), eb, &cfg.params, cfg.codec)?;
        counters.compress_ops = 1;
        counters.compress_seconds += compress_t0.elapsed().as_secs_f64();
        bytes
    } else {
        let (rel_parent, _) = parent.expect("non-root has a parent");
        let src = (rel_parent + root) % n;
        let comm_t0 = Instant::now();
        let got = comm.recv(src).map_err(|e| e.in_round(r, 0))?;
        counters.comm_seconds += comm_t0.elapsed().as_secs_f64();
        counters.data_bytes_received += got.len() as u64;
        got
    };
    let comm_t0 = Instant::now();
    for (rel_child, _) in &children {
        let dst = (rel_child + root) % n;
        counters.data_bytes_sent += bytes.len() as u64;
        comm.send(dst, bytes.clone()).map_err(|e| e.in_round(r, 0))?;
    }
    counters.comm_seconds += comm_t0.elapsed().as_secs_f64();

    let result = if r == root && cfg.self_exact {
        field_at_root.unwrap().clone()
    } else {
        let decompress_t0 = Instant::now();
        let values = decompress_chunk_bytes(&bytes)?;
        counters.decompress_ops += 1;
        counters.compress_seconds += decompress_t0.elapsed().as_secs_f64();
        FloatField::new(values)?
    };
    counters.total_seconds = total_t0.elapsed().as_secs_f64();
    Ok((result, counters))
}

/// CPRP2P bcast: every hop decompresses on receive and re-compresses
/// before each send, so codec work grows with tree depth.
pub fn cprp2p_bcast(
    comm: &mut Communicator,
    root: usize,
    field_at_root: Option<&FloatField>,
    cfg: &CollectiveConfig,
) -> Result<(FloatField, OpCounters)> {
    let total_t0 = Instant::now();
    let n = comm.world_size();
    let r = comm.rank();
    if root >= n {
        return Err(Error::Param(format!("root {root} out of range")));
    }
    let relrank = (r + n - root) % n;
    let (parent, children) = binomial_plan(relrank, n);
    let mut counters = OpCounters::default();
    counters.rounds = binomial_depth(n);

    let (values, eb) = if r == root {
        let field = field_at_root
            .ok_or_else(|| Error::Param("root must supply the field".to_string()))?;
        let eb = resolve_error_bound(&cfg.error_bound, field)?;
        (field.values().to_vec(), eb)
    } else {
        let (rel_parent, _) = parent.expect("non-root has a parent");
        let src = (rel_parent + root) % n;
        let comm_t0 = Instant::now();
        let mut got = comm.recv(src).map_err(|e| e.in_round(r, 0))?;
        counters.comm_seconds += comm_t0.elapsed().as_secs_f64();
        counters.data_bytes_received += got.len() as u64;
        let eb = f32::from_le_bytes(got[0..4].try_into().unwrap());
        let frame = got.split_off(4);
        let decompress_t0 = Instant::now();
        let values = decompress_chunk_bytes(&frame)?;
        counters.decompress_ops += 1;
        counters.compress_seconds += decompress_t0.elapsed().as_secs_f64();
        (values, eb)
    };
    counters.max_eb_abs = eb;
    for (rel_child, _) in &children {
        let dst = (rel_child + root) % n;
        let compress_t0 = Instant::now();
        let (frame, _) = compress_chunk_bytes(&values, eb, &cfg.params, cfg.codec)?;
        counters.compress_ops += 1;
        counters.compress_seconds += compress_t0.elapsed().as_secs_f64();
        let mut msg = Vec::with_capacity(4 + frame.len());
        msg.extend_from_slice(&eb.to_le_bytes());
        msg.extend_from_slice(&frame);
        counters.data_bytes_sent += msg.len() as u64;
        let comm_t0 = Instant::now();
        comm.send(dst, msg).map_err(|e| e.in_round(r, 0))?;
        counters.comm_seconds += comm_t0.elapsed().as_secs_f64();
    }
    counters.total_seconds = total_t0.elapsed().as_secs_f64();
    Ok((FloatField::new(values)?, counters))
}

/// Uncompressed binomial bcast reference.
pub fn plain_bcast(
    comm: &mut Communicator,
    root: usize,
    field_at_root: Option<&FloatField>,
) -> Result<(FloatField, OpCounters)> {
    let total_t0 = Instant::now();
    let n = comm.world_size();
    let r = comm.rank();
    if root >= n {
        return Err(Error::Param(format!("root {root} out of range")));
    }
    let relrank = (r + n - root) % n;
    let (parent, children) = binomial_plan(relrank, n);
    let mut counters = OpCounters::default();
    counters.rounds = binomial_depth(n);
    let bytes = if r == root {
        let field = field_at_root
            .ok_or_else(|| Error::Param("root must supply the field".to_string()))?;
        f32s_to_bytes(field.values())
    } else {
        let (rel_parent, _) = parent.expect("non-root has a parent");
        let src = (rel_parent + root) % n;
        let got = comm.recv(src).map_err(|e| e.in_round(r, 0))?;
        counters.data_bytes_received += got.len() as u64;
        got
    };
    for (rel_child, _) in &children {
        let dst = (rel_child + root) % n;
        counters.data_bytes_sent += bytes.len() as u64;
        comm.send(dst, bytes.clone()).map_err(|e| e.in_round(r, 0))?;
    }
    counters.total_seconds = total_t0.elapsed().as_secs_f64();
    Ok((FloatField::new(bytes_to_f32s(&bytes)?)?, counters))
}

/// Root compresses each rank's chunk independently and the binomial tree
/// forwards only the compressed chunks of each receiver's subtree,
/// steered by a 4-byte-per-chunk size index.
pub fn z_scatter(
    comm: &mut Communicator,
    root: usize,
    field_at_root: Option<&FloatField>,
    cfg: &CollectiveConfig,
) -> Result<(FloatField, OpCounters)> {
    let total_t0 = Instant::now();
    let n = comm.world_size();
    let r = comm.rank();
    if root >= n {
        return Err(Error::Param(format!("root {root} out of range")));
    }
    let relrank = (r + n - root) % n;
    let (parent, children) = binomial_plan(relrank, n);
    let mut counters = OpCounters::default();
    counters.rounds = binomial_depth(n);

    // frames held in relative-rank order; subtree of rel x spans
    // [x, x + mask) clipped to n
    let mut frames: Vec<Option<Vec<u8>>> = vec![None; n];
    let mut own_values: Option<Vec<f32>> = None;
    if r == root {
        let field = field_at_root
            .ok_or_else(|| Error::Param("root must supply the field".to_string()))?;
        if field.len() % n != 0 {
            return Err(Error::Param(format!(
                "field length {} is not divisible by {n} ranks",
                field.len()
            )));
        }
        let eb = resolve_error_bound(&cfg.error_bound, field)?;
        counters.max_eb_abs = eb;
        let chunk = field.len() / n;
        let compress_t0 = Instant::now();
        for rel in 0..n {
            let abs = (rel + root) % n;
            let slice = &field.values()[abs * chunk..(abs + 1) * chunk];
            let (bytes, _) = compress_chunk_bytes(slice, eb, &cfg.params, cfg.codec)?;
            counters.compress_ops += 1;
            frames[rel] = Some(bytes);
        }
        counters.compress_seconds += compress_t0.elapsed().as_secs_f64();
        own_values = Some(field.values()[r * chunk..(r + 1) * chunk].to_vec());
    } else {
        let (rel_parent, mask) = parent.expect("non-root has a parent");
        let src = (rel_parent + root) % n;
        let span = (relrank + mask).min(n) - relrank;
        let comm_t0 = Instant::now();
        let index_bytes = comm.recv(src).map_err(|e| e.in_round(r, 0))?;
        let payload = comm.recv(src).map_err(|e| e.in_round(r, 0))?;
        counters.comm_seconds += comm_t0.elapsed().as_secs_f64();
        counters.data_bytes_received += payload.len() as u64;
        if index_bytes.len() != span * 4 {
            return Err(Error::Transport(format!(
                "expected {span}-entry size index, got {} bytes",
                index_bytes.len()
            )));
        }
        let mut at = 0usize;
        for i in 0..span {
            let size =
                u32::from_le_bytes(index_bytes[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
            let Some(bytes) = payload.get(at..at + size) else {
                return Err(Error::Transport(
                    "subtree payload shorter than its size index".to_string(),
                ));
            };
            frames[relrank + i] = Some(bytes.to_vec());
            at += size;
        }
        if at != payload.len() {
            return Err(Error::Transport(
                "subtree payload longer than its size index".to_string(),
            ));
        }
    }

    for (rel_child, mask) in &children {
        let dst = (rel_child + root) % n;
        let span = (rel_child + mask).min(n) - rel_child;
        let mut index_bytes = Vec::with_capacity(span * 4);
        let mut payload = Vec::new();
        for i in 0..span {
            let bytes = frames[rel_child + i].as_ref().expect("subtree frame held");
            index_bytes.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            payload.extend_from_slice(bytes);
        }
        counters.data_bytes_sent += payload.len() as u64;
        let comm_t0 = Instant::now();
        comm.send(dst, index_bytes).map_err(|e| e.in_round(r, 0))?;
        comm.send(dst, payload).map_err(|e| e.in_round(r, 0))?;
        counters.comm_seconds += comm_t0.elapsed().as_secs_f64();
    }

    let result = if let (true, Some(values)) = (cfg.self_exact, own_values) {
        FloatField::new(values)?
    } else {
        let decompress_t0 = Instant::now();
        let bytes = frames[relrank].as_ref().expect("own frame held");
        let values = decompress_chunk_bytes(bytes)?;
        counters.decompress_ops += 1;
        counters.compress_seconds += decompress_t0.elapsed().as_secs_f64();
        FloatField::new(values)?
    };
    counters.total_seconds = total_t0.elapsed().as_secs_f64();
    Ok((result, counters))
}

/// Uncompressed binomial scatter reference.
pub fn plain_scatter(
    comm: &mut Communicator,
    root: usize,
    field_at_root: Option<&FloatField>,
) -> Result<(FloatField, OpCounters)> {
    let total_t0 = Instant::now();
    let n = comm.world_size();
    let r = comm.rank();
    if root >= n {
        return Err(Error::Param(format!("root {root} out of range")));
    }
    let relrank = (r + n - root) % n;
    let (parent, children) = binomial_plan(relrank, n);
    let mut counters = OpCounters::default();
    counters.rounds = binomial_depth(n);
    let mut chunks: Vec<Option<Vec<u8>>> = vec![None; n];
    if r == root {
        let field = field_at_root
            .ok_or_else(|| Error::Param("root must supply the field".to_string()))?;
        if field.len() % n != 0 {
            return Err(Error::Param(format!(
                "field length {} is not divisible by {n} ranks",
                field.len()
            )));
        }
        let chunk = field.len() / n;
        for rel in 0..n {
            let abs = (rel + root) % n;
            chunks[rel] = Some(f32s_to_bytes(&field.values()[abs * chunk..(abs + 1) * chunk]));
        }
    } else {
        let (rel_parent, mask) = parent.expect("non-root has a parent");
        let src = (rel_parent + root) % n;
        let span = (relrank + mask).min(n) - relrank;
        let payload = comm.recv(src).map_err(|e| e.in_round(r, 0))?;
        counters.data_bytes_received += payload.len() as u64;
        if payload.len() % span != 0 {
            return Err(Error::Transport("uneven subtree payload".to_string()));
        }
        let each = payload.len() / span;
        for i in 0..span {
            chunks[relrank + i] = Some(payload[i * each..(i + 1) * each].to_vec());
        }
    }
    for (rel_child, mask) in &children {
        let dst = (rel_child + root) % n;
        let span = (rel_child + mask).min(n) - rel_child;
        let mut payload = Vec::new();
        for i in 0..span {
            payload.extend_from_slice(chunks[rel_child + i].as_ref().unwrap());
        }
        counters.data_bytes_sent += payload.len() as u64;
        comm.send(dst, payload).map_err(|e| e.in_round(r, 0))?;
    }
    let own = chunks[relrank].take().unwrap();
    counters.total_seconds = total_t0.elapsed().as_secs_f64();
    Ok((FloatField::new(bytes_to_f32s(&own)?)?, counters))
}

/// Exchange each rank's resolved absolute bound and take the maximum, so
/// every hop of a reduction uses one common grid.
fn exchange_max_eb(comm: &mut Communicator, eb: f32) -> Result<f32> {
    let records = ring_allgather_records(comm, eb.to_le_bytes().to_vec())?;
    let mut max_eb = eb;
    for rec in records {
        max_eb = max_eb.max(f32::from_le_bytes(rec[0..4].try_into().unwrap()));
    }
    Ok(max_eb)
}

/// Ring reduce-scatter: N-1 steps, each compressing the outgoing partial
/// chunk while polling the outstanding receive and decompressing the
/// incoming chunk while polling the outstanding send. Rank r ends owning
/// chunk r, fully reduced.
pub fn z_reduce_scatter(
    comm: &mut Communicator,
    local: &FloatField,
    kind: ReduceKind,
    cfg: &CollectiveConfig,
) -> Result<(FloatField, OpCounters)> {
    let total_t0 = Instant::now();
    let n = comm.world_size();
    let r = comm.rank();
    let next = (r + 1) % n;
    let prev = (r + n - 1) % n;
    if local.len() % n != 0 {
        return Err(Error::Param(format!(
            "field length {} is not divisible by {n} ranks",
            local.len()
        )));
    }
    let chunk = local.len() / n;
    let mut counters = OpCounters::default();
    let eb = resolve_error_bound(&cfg.error_bound, local)?;
    let eb = exchange_max_eb(comm, eb)?;
    counters.max_eb_abs = eb;
    let spec = ErrorBoundSpec::Absolute(eb);

    let chunk_slice = |c: usize| &local.values()[c * chunk..(c + 1) * chunk];
    // step 0 sends the local chunk of rank r-1; each later step forwards
    // the partial reduced at the previous step
    let mut outgoing: Vec<f32> = chunk_slice((r + n - 1) % n).to_vec();
    for s in 0..n - 1 {
        let c_recv = (r + 2 * n - 2 - s) % n;
        let mut recv_h = comm.irecv(prev).map_err(|e| e.in_round(r, s))?;

        let compress_t0 = Instant::now();
        let out_field = FloatField::new(outgoing.clone())?;
        let mut hook = || {
            comm.progress(&mut recv_h);
            HookSignal::Continue
        };
        let frame = compress_chunked(
            &out_field,
            &spec,
            &cfg.params,
            cfg.chunk_len,
            cfg.codec,
            &mut hook,
        )
        .map_err(|e| Error::from(e).in_round(r, s))?;
        counters.compress_ops += 1;
        counters.compress_seconds += compress_t0.elapsed().as_secs_f64();

        let out_bytes = frame.into_bytes();
        counters.data_bytes_sent += out_bytes.len() as u64;
        let mut send_h = comm.isend(next, out_bytes).map_err(|e| e.in_round(r, s))?;
        let comm_t0 = Instant::now();
        let got = comm.wait(recv_h).map_err(|e| e.in_round(r, s))?.unwrap();
        counters.comm_seconds += comm_t0.elapsed().as_secs_f64();
        counters.data_bytes_received += got.len() as u64;

        let decompress_t0 = Instant::now();
        let mut hook = || {
            comm.progress(&mut send_h);
            HookSignal::Continue
        };
        let incoming =
            decompress_chunked(&ChunkedFrame::from_bytes(got)?, &mut hook)
                .map_err(|e| Error::from(e).in_round(r, s))?;
        counters.decompress_ops += 1;
        counters.compress_seconds += decompress_t0.elapsed().as_secs_f64();
        let comm_t0 = Instant::now();
        comm.wait(send_h).map_err(|e| e.in_round(r, s))?;
        counters.comm_seconds += comm_t0.elapsed().as_secs_f64();

        let compute_t0 = Instant::now();
        let mut reduced = incoming.values().to_vec();
        if reduced.len() != chunk {
            return Err(Error::Transport(format!(
                "expected chunk of {chunk} values, received {}",
                reduced.len()
            )));
        }
        reduce_into(kind, &mut reduced, chunk_slice(c_recv));
        counters.compute_seconds += compute_t0.elapsed().as_secs_f64();
        outgoing = reduced;
        counters.rounds += 1;
    }
    counters.total_seconds = total_t0.elapsed().as_secs_f64();
    Ok((FloatField::new(outgoing)?, counters))
}

fn merge_counters(a: &mut OpCounters, b: &OpCounters) {
    a.compress_ops += b.compress_ops;
    a.decompress_ops += b.decompress_ops;
    a.rounds += b.rounds;
    a.data_bytes_sent += b.data_bytes_sent;
    a.data_bytes_received += b.data_bytes_received;
    a.max_eb_abs = a.max_eb_abs.max(b.max_eb_abs);
    a.compress_seconds += b.compress_seconds;
    a.comm_seconds += b.comm_seconds;
    a.compute_seconds += b.compute_seconds;
}

/// Reduce-scatter followed by an allgather of the owned chunks; the
/// reduced chunk is compressed once more for the allgather phase.
pub fn z_allreduce(
    comm: &mut Communicator,
    local: &FloatField,
    kind: ReduceKind,
    cfg: &CollectiveConfig,
) -> Result<(FloatField, OpCounters)> {
    let total_t0 = Instant::now();
    let (owned, mut counters) = z_reduce_scatter(comm, local, kind, cfg)?;
    let spec = ErrorBoundSpec::Absolute(counters.max_eb_abs);
    let compress_t0 = Instant::now();
    let frame = compress_chunked(
        &owned,
        &spec,
        &cfg.params,
        cfg.chunk_len,
        cfg.codec,
        &mut noop_hook(),
    )?;
    counters.compress_ops += 1;
    counters.compress_seconds += compress_t0.elapsed().as_secs_f64();
    let mut ag_counters = OpCounters::default();
    let result =
        ring_allgather_frames(comm, frame.into_bytes(), owned.values(), cfg, &mut ag_counters)?;
    merge_counters(&mut counters, &ag_counters);
    counters.total_seconds = total_t0.elapsed().as_secs_f64();
    Ok((result, counters))
}

/// z_allreduce(Sum) scaled by 1/N.
pub fn z_allreduce_average(
    comm: &mut Communicator,
    local: &FloatField,
    cfg: &CollectiveConfig,
) -> Result<(FloatField, OpCounters)> {
    let n = comm.world_size() as f32;
    let (summed, counters) = z_allreduce(comm, local, ReduceKind::Sum, cfg)?;
    let values: Vec<f32> = summed.values().iter().map(|v| v / n).collect();
    Ok((FloatField::new(values)?, counters))
}

/// CPRP2P allreduce: the same two ring phases, but with plain compressed
/// frames per hop and per-hop recompression in the allgather phase.
pub fn cprp2p_allreduce(
    comm: &mut Communicator,
    local: &FloatField,
    kind: ReduceKind,
    cfg: &CollectiveConfig,
) -> Result<(FloatField, OpCounters)> {
    let total_t0 = Instant::now();
    let n = comm.world_size();
    let r = comm.rank();
    let next = (r + 1) % n;
    let prev = (r + n - 1) % n;
    if local.len() % n != 0 {
        return Err(Error::Param(format!(
            "field length {} is not divisible by {n} ranks",
            local.len()
        )));
    }
    let chunk = local.len() / n;
    let mut counters = OpCounters::default();
    let eb = resolve_error_bound(&cfg.error_bound, local)?;
    let eb = exchange_max_eb(comm, eb)?;
    counters.max_eb_abs = eb;

    let chunk_slice = |c: usize| &local.values()[c * chunk..(c + 1) * chunk];
    let mut outgoing: Vec<f32> = chunk_slice((r + n - 1) % n).to_vec();
    for s in 0..n - 1 {
        let c_recv = (r + 2 * n - 2 - s) % n;
        let (out, _) = compress_chunk_bytes(&outgoing, eb, &cfg.params, cfg.codec)?;
        counters.compress_ops += 1;
        counters.data_bytes_sent += out.len() as u64;
        let sh = comm.isend(next, out).map_err(|e| e.in_round(r, s))?;
        let got = comm.recv(prev).map_err(|e| e.in_round(r, s))?;
        comm.wait(sh).map_err(|e| e.in_round(r, s))?;
        counters.data_bytes_received += got.len() as u64;
        let mut reduced = decompress_chunk_bytes(&got)?;
        counters.decompress_ops += 1;
        reduce_into(kind, &mut reduced, chunk_slice(c_recv));
        outgoing = reduced;
        counters.rounds += 1;
    }

    // per-hop recompressing allgather of the owned chunks
    let mut slots: Vec<Option<Vec<f32>>> = vec![None; n];
    slots[r] = Some(outgoing.clone());
    let mut forward = outgoing;
    for t in 0..n - 1 {
        let recv_origin = (r + n - 1 - t) % n;
        let (out, _) = compress_chunk_bytes(&forward, eb, &cfg.params, cfg.codec)?;
        counters.compress_ops += 1;
        counters.data_bytes_sent += out.len() as u64;
        let sh = comm.isend(next, out).map_err(|e| e.in_round(r, t))?;
        let got = comm.recv(prev).map_err(|e| e.in_round(r, t))?;
        comm.wait(sh).map_err(|e| e.in_round(r, t))?;
        counters.data_bytes_received += got.len() as u64;
        let values = decompress_chunk_bytes(&got)?;
        counters.decompress_ops += 1;
        slots[recv_origin] = Some(values.clone());
        forward = values;
        counters.rounds += 1;
    }
    let mut out_values = Vec::with_capacity(local.len());
    for slot in slots {
        out_values.extend_from_slice(&slot.unwrap());
    }
    counters.total_seconds = total_t0.elapsed().as_secs_f64();
    Ok((FloatField::new(out_values)?, counters))
}

/// Uncompressed ring allreduce reference: reduce-scatter then allgather,
/// raw bytes. Per-rank payload is exactly 2(N-1)/N of the input bytes.
pub fn plain_allreduce(
    comm: &mut Communicator,
    local: &FloatField,
    kind: ReduceKind,
) -> Result<(FloatField, OpCounters)> {
    let total_t0 = Instant::now();
    let n = comm.world_size();
    let r = comm.rank();
    let next = (r + 1) % n;
    let prev = (r + n - 1) % n;
    if local.len() % n != 0 {
        return Err(Error::Param(format!(
            "field length {} is not divisible by {n} ranks",
            local.len()
        )));
    }
    let chunk = local.len() / n;
    let mut counters = OpCounters::default();
    let chunk_slice = |c: usize| &local.values()[c * chunk..(c + 1) * chunk];

    let mut outgoing: Vec<f32> = chunk_slice((r + n - 1) % n).to_vec();
    for s in 0..n - 1 {
        let c_recv = (r + 2 * n - 2 - s) % n;
        let out = f32s_to_bytes(&outgoing);
        counters.data_bytes_sent += out.len() as u64;
        let sh = comm.isend(next, out).map_err(|e| e.in_round(r, s))?;
        let got = comm.recv(prev).map_err(|e| e.in_round(r, s))?;
        comm.wait(sh).map_err(|e| e.in_round(r, s))?;
        counters.data_bytes_received += got.len() as u64;
        let compute_t0 = Instant::now();
        let mut reduced = bytes_to_f32s(&got)?;
        reduce_into(kind, &mut reduced, chunk_slice(c_recv));
        counters.compute_seconds += compute_t0.elapsed().as_secs_f64();
        outgoing = reduced;
        counters.rounds += 1;
    }

    let mut slots: Vec<Option<Vec<u8>>> = vec![None; n];
    slots[r] = Some(f32s_to_bytes(&outgoing));
    for t in 0..n - 1 {
        let send_origin = (r + n - t) % n;
        let recv_origin = (r + n - 1 - t) % n;
        let out = slots[send_origin].clone().unwrap();
        counters.data_bytes_sent += out.len() as u64;
        let sh = comm.isend(next, out).map_err(|e| e.in_round(r, t))?;
        let got = comm.recv(prev).map_err(|e| e.in_round(r, t))?;
        comm.wait(sh).map_err(|e| e.in_round(r, t))?;
        counters.data_bytes_received += got.len() as u64;
        slots[recv_origin] = Some(got);
        counters.rounds += 1;
    }
    let mut values = Vec::with_capacity(local.len());
    for slot in slots {
        values.extend_from_slice(&bytes_to_f32s(&slot.unwrap())?);
    }
    counters.total_seconds = total_t0.elapsed().as_secs_f64();
    Ok((FloatField::new(values)?, counters))
}

/// Run one closure per rank over a fresh loopback world; results are
/// returned in rank order. This is the harness used by tests and the
/// loopback CLI path.
pub fn run_loopback_world<T, F>(world_size: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Communicator) -> Result<T> + Sync,
{
    let comms = crate::transport::loopback_world(world_size)?;
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = comms
            .into_iter()
            .map(|mut comm| scope.spawn(move || f(&mut comm)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rank worker panicked"))
            .collect()
    })
}
