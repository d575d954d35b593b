//! Nonblocking point-to-point byte transport with two backends: a
//! deterministic in-process loopback fabric and length-framed TCP.
//!
//! Receives are matched by source rank and FIFO order only; there are no
//! tags. One logical rank worker owns each [`Communicator`] and is the
//! only caller allowed to poll its handles. Counters account payload
//! bytes (frame prefixes excluded) and update when a handle completes.
//!
//! TCP wire format: handshake `ZCW1` + 4-byte LE rank in each direction,
//! then data frames of 8-byte LE length + payload. A configurable
//! max-message-size guard (default 1 GiB) catches corrupted prefixes.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

pub const TCP_MAGIC: [u8; 4] = *b"ZCW1";
pub const DEFAULT_MAX_MESSAGE: usize = 1 << 30;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TransportCounters {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub messages_sent: u64,
    pub messages_received: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandleKind {
    Send,
    Recv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HandleStatus {
    Pending,
    Complete,
    Failed(String),
}

/// Inbox shared between a producer (loopback sender or TCP reader
/// thread) and the owning rank worker.
#[derive(Default)]
struct InboxState {
    queue: VecDeque<Vec<u8>>,
    failed: Option<String>,
}

type Inbox = Arc<(Mutex<InboxState>, Condvar)>;

/// Completion slot a TCP writer thread fills after the frame is on the
/// wire.
struct SendDone {
    state: Mutex<Option<std::result::Result<(), String>>>,
    cv: Condvar,
}

pub struct MessageHandle {
    kind: HandleKind,
    peer: usize,
    status: HandleStatus,
    payload_len: usize,
    bytes: Option<Vec<u8>>,
    done: Option<Arc<SendDone>>,
}

impl MessageHandle {
    pub fn kind(&self) -> HandleKind {
        self.kind
    }

    pub fn peer(&self) -> usize {
        self.peer
    }

    pub fn status(&self) -> &HandleStatus {
        &self.status
    }

    /// Received payload, once a Recv handle is Complete.
    pub fn take_bytes(&mut self) -> Option<Vec<u8>> {
        self.bytes.take()
    }
}

struct LoopbackFabric {
    // indexed dst * world_size + src
    inboxes: Vec<Inbox>,
}

struct TcpPeer {
    to_writer: mpsc::Sender<(Vec<u8>, Arc<SendDone>)>,
}

struct TcpEndpoint {
    peers: Vec<Option<TcpPeer>>,
    inboxes: Vec<Inbox>,
    // keep threads' streams alive until drop
    _streams: Vec<TcpStream>,
}

enum Endpoint {
    Loopback(Arc<LoopbackFabric>),
    Tcp(TcpEndpoint),
}

pub struct Communicator {
    rank: usize,
    world_size: usize,
    counters: TransportCounters,
    max_message: usize,
    timeout: Duration,
    endpoint: Endpoint,
}

/// All communicators of an in-process world, sharing one fabric.
pub fn loopback_world(world_size: usize) -> Result<Vec<Communicator>> {
    if world_size < 2 {
        return Err(Error::Param("world_size must be >= 2".to_string()));
    }
    let fabric = Arc::new(LoopbackFabric {
        inboxes: (0..world_size * world_size)
            .map(|_| Arc::new((Mutex::new(InboxState::default()), Condvar::new())))
            .collect(),
    });
    Ok((0..world_size)
        .map(|rank| Communicator {
            rank,
            world_size,
            counters: TransportCounters::default(),
            max_message: DEFAULT_MAX_MESSAGE,
            timeout: DEFAULT_TIMEOUT,
            endpoint: Endpoint::Loopback(fabric.clone()),
        })
        .collect())
}

fn handshake_write(stream: &mut TcpStream, rank: usize) -> Result<()> {
    let mut buf = [0u8; 8];
    buf[0..4].copy_from_slice(&TCP_MAGIC);
    buf[4..8].copy_from_slice(&(rank as u32).to_le_bytes());
    stream.write_all(&buf)?;
    Ok(())
}

fn handshake_read(stream: &mut TcpStream) -> Result<usize> {
    let mut buf = [0u8; 8];
    stream.read_exact(&mut buf)?;
    if buf[0..4] != TCP_MAGIC {
        return Err(Error::Transport(format!(
            "handshake magic mismatch: {:02x?}",
            &buf[0..4]
        )));
    }
    Ok(u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize)
}

fn spawn_peer_threads(
    stream: TcpStream,
    inbox: Inbox,
    max_message: usize,
) -> Result<(TcpPeer, TcpStream)> {
    let (tx, rx) = mpsc::channel::<(Vec<u8>, Arc<SendDone>)>();
    let mut write_half = stream.try_clone()?;
    std::thread::spawn(move || {
        while let Ok((bytes, done)) = rx.recv() {
            let mut frame = Vec::with_capacity(8 + bytes.len());
            frame.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            frame.extend_from_slice(&bytes);
            let outcome = write_half
                .write_all(&frame)
                .map_err(|e| format!("send failed: {e}"));
            *done.state.lock().unwrap() = Some(outcome.clone());
            done.cv.notify_all();
            if outcome.is_err() {
                break;
            }
        }
    });
    let mut read_half = stream.try_clone()?;
    std::thread::spawn(move || {
        loop {
            let mut len_buf = [0u8; 8];
            let fail = |inbox: &Inbox, why: String| {
                inbox.0.lock().unwrap().failed = Some(why);
                inbox.1.notify_all();
            };
            if let Err(e) = read_half.read_exact(&mut len_buf) {
                fail(&inbox, format!("peer disconnected: {e}"));
                return;
            }
            let len = u64::from_le_bytes(len_buf) as usize;
            if len > max_message {
                fail(
                    &inbox,
                    format!("frame length {len} exceeds max message size {max_message}"),
                );
                return;
            }
            let mut payload = vec![0u8; len];
            if let Err(e) = read_half.read_exact(&mut payload) {
                fail(&inbox, format!("truncated frame: {e}"));
                return;
            }
            inbox.0.lock().unwrap().queue.push_back(payload);
            inbox.1.notify_all();
        }
    });
    Ok((TcpPeer { to_writer: tx }, stream))
}

/// Establish all-to-all TCP connectivity for one rank. `addrs[i]` is the
/// `host:port` of rank i; this rank binds `addrs[rank]`, dials every
/// lower rank, and accepts every higher rank.
pub fn connect_tcp(rank: usize, addrs: &[String], timeout: Duration) -> Result<Communicator> {
    let world_size = addrs.len();
    if world_size < 2 {
        return Err(Error::Param("world_size must be >= 2".to_string()));
    }
    if rank >= world_size {
        return Err(Error::Param(format!(
            "rank {rank} out of range for world size {world_size}"
        )));
    }
    let listener = TcpListener::bind(&addrs[rank])
        .map_err(|e| Error::Transport(format!("bind {}: {e}", addrs[rank])))?;
    let inboxes: Vec<Inbox> = (0..world_size)
        .map(|_| Arc::new((Mutex::new(InboxState::default()), Condvar::new())))
        .collect();
    let mut peers: Vec<Option<TcpPeer>> = (0..world_size).map(|_| None).collect();
    let mut streams = Vec::new();

    // Dial lower ranks, retrying until their listener is up.
    for peer in 0..rank {
        let deadline = Instant::now() + timeout;
        let mut stream = loop {
            match TcpStream::connect(&addrs[peer]) {
                Ok(s) => break s,
                Err(e) => {
                    if Instant::now() >= deadline {
                        return Err(Error::Timeout(format!(
                            "connecting rank {peer} at {}: {e}",
                            addrs[peer]
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(20));
                }
            }
        };
        stream.set_nodelay(true).ok();
        handshake_write(&mut stream, rank)?;
        let got = handshake_read(&mut stream)?;
        if got != peer {
            return Err(Error::Transport(format!(
                "dialed rank {peer} but peer identified as {got}"
            )));
        }
        let (p, s) = spawn_peer_threads(stream, inboxes[peer].clone(), DEFAULT_MAX_MESSAGE)?;
        peers[peer] = Some(p);
        streams.push(s);
    }

    // Accept higher ranks; poll non-blocking so the deadline holds even
    // if a peer never dials in.
    listener
        .set_nonblocking(true)
        .map_err(|e| Error::Transport(e.to_string()))?;
    let mut pending = world_size - rank - 1;
    let deadline = Instant::now() + timeout;
    while pending > 0 {
        let (mut stream, _) = match listener.accept() {
            Ok(pair) => pair,
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(Error::Timeout(format!(
                        "rank {rank}: {pending} peers never connected"
                    )));
                }
                std::thread::sleep(Duration::from_millis(5));
                continue;
            }
            Err(e) => return Err(Error::Transport(format!("accept: {e}"))),
        };
        stream
            .set_nonblocking(false)
            .map_err(|e| Error::Transport(e.to_string()))?;
        stream.set_nodelay(true).ok();
        let got = handshake_read(&mut stream)?;
        if got <= rank || got >= world_size {
            return Err(Error::Transport(format!(
                "unexpected peer rank {got} dialing rank {rank}"
            )));
        }
        if peers[got].is_some() {
            return Err(Error::Transport(format!(
                "rank collision: two peers claim rank {got}"
            )));
        }
        handshake_write(&mut stream, rank)?;
        let (p, s) = spawn_peer_threads(stream, inboxes[got].clone(), DEFAULT_MAX_MESSAGE)?;
        peers[got] = Some(p);
        streams.push(s);
        pending -= 1;
    }

    Ok(Communicator {
        rank,
        world_size,
        counters: TransportCounters::default(),
        max_message: DEFAULT_MAX_MESSAGE,
        timeout,
        endpoint: Endpoint::Tcp(TcpEndpoint {
            peers,
            inboxes,
            _streams: streams,
        }),
    })
}

impl Communicator {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn world_size(&self) -> usize {
        self.world_size
    }

    pub fn counters(&self) -> TransportCounters {
        self.counters
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    fn check_peer(&self, peer: usize) -> Result<()> {
        if peer >= self.world_size {
            return Err(Error::Param(format!(
                "peer rank {peer} out of range for world size {}",
                self.world_size
            )));
        }
        if peer == self.rank {
            return Err(Error::Param("self messaging is not supported".to_string()));
        }
        Ok(())
    }

    pub fn isend(&mut self, dest: usize, bytes: Vec<u8>) -> Result<MessageHandle> {
        self.check_peer(dest)?;
        if bytes.len() > self.max_message {
            return Err(Error::Param(format!(
                "message of {} bytes exceeds max message size {}",
                bytes.len(),
                self.max_message
            )));
        }
        let payload_len = bytes.len();
        let done = match &self.endpoint {
            Endpoint::Loopback(fabric) => {
                // delivery is immediate; the handle completes on first poll
                let inbox = &fabric.inboxes[dest * self.world_size + self.rank];
                inbox.0.lock().unwrap().queue.push_back(bytes);
                inbox.1.notify_all();
                None
            }
            Endpoint::Tcp(ep) => {
                let done = Arc::new(SendDone {
                    state: Mutex::new(None),
                    cv: Condvar::new(),
                });
                let peer = ep.peers[dest]
                    .as_ref()
                    .expect("all-to-all connectivity was established");
                peer.to_writer
                    .send((bytes, done.clone()))
                    .map_err(|_| Error::Transport(format!("writer for rank {dest} is gone")))?;
                Some(done)
            }
        };
        Ok(MessageHandle {
            kind: HandleKind::Send,
            peer: dest,
            status: HandleStatus::Pending,
            payload_len,
            bytes: None,
            done,
        })
    }

    pub fn irecv(&mut self, src: usize) -> Result<MessageHandle> {
        self.check_peer(src)?;
        Ok(MessageHandle {
            kind: HandleKind::Recv,
            peer: src,
            status: HandleStatus::Pending,
            payload_len: 0,
            bytes: None,
            done: None,
        })
    }

    fn inbox(&self, src: usize) -> &Inbox {
        match &self.endpoint {
            Endpoint::Loopback(fabric) => &fabric.inboxes[self.rank * self.world_size + src],
            Endpoint::Tcp(ep) => &ep.inboxes[src],
        }
    }

    /// Advance a handle without blocking; idempotent once terminal.
    pub fn progress(&mut self, handle: &mut MessageHandle) -> HandleStatus {
        if handle.status != HandleStatus::Pending {
            return handle.status.clone();
        }
        match handle.kind {
            HandleKind::Send => match &handle.done {
                None => {
                    // loopback: enqueued at isend time
                    handle.status = HandleStatus::Complete;
                    self.counters.bytes_sent += handle.payload_len as u64;
                    self.counters.messages_sent += 1;
                }
                Some(done) => {
                    let state = done.state.lock().unwrap();
                    match &*state {
                        None => {}
                        Some(Ok(())) => {
                            handle.status = HandleStatus::Complete;
                            self.counters.bytes_sent += handle.payload_len as u64;
                            self.counters.messages_sent += 1;
                        }
                        Some(Err(e)) => handle.status = HandleStatus::Failed(e.clone()),
                    }
                }
            },
            HandleKind::Recv => {
                let inbox = self.inbox(handle.peer).clone();
                let mut state = inbox.0.lock().unwrap();
                if let Some(bytes) = state.queue.pop_front() {
                    self.counters.bytes_received += bytes.len() as u64;
                    self.counters.messages_received += 1;
                    handle.bytes = Some(bytes);
                    handle.status = HandleStatus::Complete;
                } else if let Some(why) = &state.failed {
                    handle.status = HandleStatus::Failed(why.clone());
                }
            }
        }
        handle.status.clone()
    }

    /// Block until the handle is terminal; Recv yields the payload.
    pub fn wait(&mut self, mut handle: MessageHandle) -> Result<Option<Vec<u8>>> {
        let deadline = Instant::now() + self.timeout;
        loop {
            match self.progress(&mut handle) {
                HandleStatus::Complete => return Ok(handle.take_bytes()),
                HandleStatus::Failed(why) => return Err(Error::Transport(why)),
                HandleStatus::Pending => {}
            }
            let remain = deadline
                .checked_duration_since(Instant::now())
                .ok_or_else(|| {
                    Error::Timeout(format!(
                        "rank {}: wait on {:?} from/to {} timed out",
                        self.rank, handle.kind, handle.peer
                    ))
                })?;
            match handle.kind {
                HandleKind::Recv => {
                    let inbox = self.inbox(handle.peer).clone();
                    let state = inbox.0.lock().unwrap();
                    if state.queue.is_empty() && state.failed.is_none() {
                        let _ = inbox.1.wait_timeout(state, remain).unwrap();
                    }
                }
                HandleKind::Send => match &handle.done {
                    None => {}
                    Some(done) => {
                        let state = done.state.lock().unwrap();
                        if state.is_none() {
                            let _ = done.cv.wait_timeout(state, remain).unwrap();
                        }
                    }
                },
            }
        }
    }

    /// isend + wait.
    pub fn send(&mut self, dest: usize, bytes: Vec<u8>) -> Result<()> {
        let handle = self.isend(dest, bytes)?;
        self.wait(handle)?;
        Ok(())
    }

    /// irecv + wait.
    pub fn recv(&mut self, src: usize) -> Result<Vec<u8>> {
        let handle = self.irecv(src)?;
        Ok(self.wait(handle)?.expect("completed recv carries payload"))
    }

    /// Dissemination barrier: ceil(log2 N) rounds of one-byte exchanges.
    /// A rank that never enters is detected by the communicator timeout.
    pub fn barrier(&mut self) -> Result<()> {
        let n = self.world_size;
        let mut step = 1;
        while step < n {
            let to = (self.rank + step) % n;
            let from = (self.rank + n - step) % n;
            let send = self.isend(to, vec![0u8])?;
            let recv = self.irecv(from)?;
            self.wait(send)?;
            self.wait(recv)?;
            step <<= 1;
        }
        Ok(())
    }
}
