//! Two-party message transport with cost accounting.
//!
//! A [`Wire`] wraps either an in-process queue pair or a TCP stream behind
//! one framing format: `[u32 payload_len][u64 depth][u16 stage_id][payload]`,
//! little-endian. Byte counts are computed from the frame format in both
//! modes, so an in-process run and a TCP run of the same protocol produce
//! identical ledgers.
//!
//! Depth stamps implement the round metric described in [`crate::ledger`].

use crate::ledger::{CostLedger, PartyLedger, TranscriptShape};
use crate::{Error, Result};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::Duration;

/// Fixed per-message framing overhead, counted in both modes.
pub const FRAME_HEADER_BYTES: u64 = 4 + 8 + 2;

const DEADLOCK_GRACE_MS: u64 = 200;
const TCP_TIMEOUT_SECS: u64 = 60;

struct Frame {
    depth: u64,
    stage_id: u16,
    payload: Vec<u8>,
}

struct DeadlockMonitor {
    blocked: [AtomicBool; 2],
    queued: [AtomicUsize; 2],
    deadlocked: AtomicBool,
}

enum ChannelImpl {
    InProc {
        tx: Sender<Frame>,
        rx: Receiver<Frame>,
        monitor: Arc<DeadlockMonitor>,
        me: usize,
    },
    Tcp {
        stream: TcpStream,
    },
}

impl ChannelImpl {
    fn send(&mut self, frame: Frame) -> Result<()> {
        match self {
            ChannelImpl::InProc {
                tx, monitor, me, ..
            } => {
                monitor.queued[1 - *me].fetch_add(1, Ordering::SeqCst);
                tx.send(frame).map_err(|_| Error::ChannelClosed)
            }
            ChannelImpl::Tcp { stream } => {
                let mut buf = Vec::with_capacity(frame.payload.len() + 14);
                buf.extend_from_slice(&(frame.payload.len() as u32).to_le_bytes());
                buf.extend_from_slice(&frame.depth.to_le_bytes());
                buf.extend_from_slice(&frame.stage_id.to_le_bytes());
                buf.extend_from_slice(&frame.payload);
                stream.write_all(&buf)?;
                stream.flush()?;
                Ok(())
            }
        }
    }

    fn recv(&mut self, stage: &str) -> Result<Frame> {
        match self {
            ChannelImpl::InProc {
                rx, monitor, me, ..
            } => {
                let mut blocked_ms = 0u64;
                loop {
                    match rx.recv_timeout(Duration::from_millis(10)) {
                        Ok(frame) => {
                            monitor.queued[*me].fetch_sub(1, Ordering::SeqCst);
                            monitor.blocked[*me].store(false, Ordering::SeqCst);
                            return Ok(frame);
                        }
                        Err(RecvTimeoutError::Timeout) => {
                            monitor.blocked[*me].store(true, Ordering::SeqCst);
                            let peer_blocked = monitor.blocked[1 - *me].load(Ordering::SeqCst);
                            let nothing_in_flight = monitor.queued[0].load(Ordering::SeqCst) == 0
                                && monitor.queued[1].load(Ordering::SeqCst) == 0;
                            if monitor.deadlocked.load(Ordering::SeqCst) {
                                return Err(Error::Deadlock {
                                    stage: stage.to_string(),
                                });
                            }
                            if peer_blocked && nothing_in_flight {
                                blocked_ms += 10;
                                if blocked_ms >= DEADLOCK_GRACE_MS {
                                    monitor.deadlocked.store(true, Ordering::SeqCst);
                                    return Err(Error::Deadlock {
                                        stage: stage.to_string(),
                                    });
                                }
                            } else {
                                blocked_ms = 0;
                            }
                        }
                        Err(RecvTimeoutError::Disconnected) => {
                            return if monitor.deadlocked.load(Ordering::SeqCst) {
                                Err(Error::Deadlock {
                                    stage: stage.to_string(),
                                })
                            } else {
                                Err(Error::ChannelClosed)
                            };
                        }
                    }
                }
            }
            ChannelImpl::Tcp { stream } => {
                let mut header = [0u8; 14];
                stream.read_exact(&mut header).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut
                    {
                        Error::Deadlock {
                            stage: stage.to_string(),
                        }
                    } else {
                        Error::ChannelClosed
                    }
                })?;
                let len = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
                let depth = u64::from_le_bytes(header[4..12].try_into().unwrap());
                let stage_id = u16::from_le_bytes(header[12..14].try_into().unwrap());
                let mut payload = vec![0u8; len];
                stream
                    .read_exact(&mut payload)
                    .map_err(|_| Error::ChannelClosed)?;
                Ok(Frame {
                    depth,
                    stage_id,
                    payload,
                })
            }
        }
    }
}

/// One party's accounted endpoint of the two-party channel.
pub struct Wire {
    chan: ChannelImpl,
    pub party: u8,
    pub ledger: PartyLedger,
    pub shape: TranscriptShape,
    stage_stack: Vec<String>,
    stage_ids: HashMap<String, u16>,
    recv_horizon: u64,
    watermark: u64,
}

impl Wire {
    fn new(chan: ChannelImpl, party: u8) -> Self {
        let mut wire = Wire {
            chan,
            party,
            ledger: PartyLedger::default(),
            shape: TranscriptShape::default(),
            stage_stack: Vec::new(),
            stage_ids: HashMap::new(),
            recv_horizon: 0,
            watermark: 0,
        };
        wire.push_stage("init");
        wire
    }

    pub fn push_stage(&mut self, label: &str) {
        let full = match self.stage_stack.last() {
            Some(top) if label.is_empty() => top.clone(),
            Some(top) => format!("{top}.{label}"),
            None => label.to_string(),
        };
        let next_id = self.stage_ids.len() as u16;
        self.stage_ids.entry(full.clone()).or_insert(next_id);
        self.stage_stack.push(full);
    }

    pub fn pop_stage(&mut self) {
        self.stage_stack.pop();
        debug_assert!(!self.stage_stack.is_empty());
    }

    pub fn stage(&self) -> &str {
        self.stage_stack
            .last()
            .map(|s| s.as_str())
            .unwrap_or("init")
    }

    fn stage_id(&self) -> u16 {
        self.stage_ids[self.stage()]
    }

    fn bump_watermark(&mut self, depth: u64) {
        if depth > self.watermark {
            let stage = self.stage().to_string();
            self.ledger.stats_mut(&stage).rounds += depth - self.watermark;
            self.watermark = depth;
        }
    }

    /// Send one message in the current stage.
    pub fn send(&mut self, payload: &[u8]) -> Result<()> {
        let depth = self.recv_horizon + 1;
        self.bump_watermark(depth);
        let stage = self.stage().to_string();
        {
            let stats = self.ledger.stats_mut(&stage);
            stats.bytes += payload.len() as u64 + FRAME_HEADER_BYTES;
            stats.msgs += 1;
        }
        self.shape.record(&stage, true, payload.len());
        self.chan.send(Frame {
            depth,
            stage_id: self.stage_id(),
            payload: payload.to_vec(),
        })
    }

    /// Receive one message; checks the peer is in the same stage.
    pub fn recv(&mut self) -> Result<Vec<u8>> {
        let stage = self.stage().to_string();
        let frame = self.chan.recv(&stage)?;
        if frame.stage_id != self.stage_id() {
            return Err(Error::Protocol {
                stage,
                msg: format!(
                    "stage desync: peer sent stage id {}, expected {}",
                    frame.stage_id,
                    self.stage_id()
                ),
            });
        }
        self.recv_horizon = self.recv_horizon.max(frame.depth);
        self.bump_watermark(frame.depth);
        self.shape.record(&stage, false, frame.payload.len());
        Ok(frame.payload)
    }

    /// Receive and insist on an exact payload length.
    pub fn recv_exact(&mut self, expected: usize) -> Result<Vec<u8>> {
        let payload = self.recv()?;
        if payload.len() != expected {
            return Err(Error::MessageShape {
                stage: self.stage().to_string(),
                expected,
                got: payload.len(),
            });
        }
        Ok(payload)
    }

    /// Simultaneous exchange: both parties send, then receive. One round.
    pub fn exchange(&mut self, payload: &[u8]) -> Result<Vec<u8>> {
        self.send(payload)?;
        self.recv_exact(payload.len())
    }

    /// Uncounted exchange for post-protocol metadata (ledger merging).
    pub fn exchange_meta(&mut self, payload: &[u8]) -> Result<Vec<u8>> {
        let depth = self.recv_horizon + 1;
        self.chan.send(Frame {
            depth,
            stage_id: self.stage_id(),
            payload: payload.to_vec(),
        })?;
        let frame = self.chan.recv("meta")?;
        self.recv_horizon = self.recv_horizon.max(frame.depth);
        Ok(frame.payload)
    }

    /// Merge ledgers across parties; both sides end with identical state.
    pub fn merged_ledger(&mut self) -> Result<CostLedger> {
        let mine = serde_json::to_vec(&self.ledger).expect("ledger serializes");
        let theirs = self.exchange_meta(&mine)?;
        let peer: PartyLedger = serde_json::from_slice(&theirs).map_err(|e| Error::Protocol {
            stage: "meta".into(),
            msg: format!("bad peer ledger: {e}"),
        })?;
        let (p0, p1) = if self.party == 0 {
            (self.ledger.clone(), peer)
        } else {
            (peer, self.ledger.clone())
        };
        Ok(CostLedger::merged(p0, p1))
    }
}

impl Wire {
    /// Run `f` inside a nested stage label.
    pub fn scoped<T>(&mut self, label: &str, f: impl FnOnce(&mut Wire) -> T) -> T {
        self.push_stage(label);
        let out = f(self);
        self.pop_stage();
        out
    }
}

/// Execution mode for the protocol harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    InProcess,
    Tcp,
}

fn inproc_pair() -> (ChannelImpl, ChannelImpl) {
    let (tx0, rx1) = std::sync::mpsc::channel();
    let (tx1, rx0) = std::sync::mpsc::channel();
    let monitor = Arc::new(DeadlockMonitor {
        blocked: [AtomicBool::new(false), AtomicBool::new(false)],
        queued: [AtomicUsize::new(0), AtomicUsize::new(0)],
        deadlocked: AtomicBool::new(false),
    });
    (
        ChannelImpl::InProc {
            tx: tx0,
            rx: rx0,
            monitor: Arc::clone(&monitor),
            me: 0,
        },
        ChannelImpl::InProc {
            tx: tx1,
            rx: rx1,
            monitor,
            me: 1,
        },
    )
}

fn tcp_pair() -> Result<(ChannelImpl, ChannelImpl)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let connector = std::thread::spawn(move || TcpStream::connect(addr));
    let (server, _) = listener.accept()?;
    let client = connector.join().expect("connector thread")?;
    for s in [&server, &client] {
        s.set_nodelay(true)?;
        s.set_read_timeout(Some(Duration::from_secs(TCP_TIMEOUT_SECS)))?;
    }
    Ok((
        ChannelImpl::Tcp { stream: server },
        ChannelImpl::Tcp { stream: client },
    ))
}

/// Wrap an already-connected TCP stream (used by the CLI in two-process mode).
pub fn wire_from_stream(stream: TcpStream, party: u8) -> Result<Wire> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(Duration::from_secs(TCP_TIMEOUT_SECS)))?;
    Ok(Wire::new(ChannelImpl::Tcp { stream }, party))
}

/// Run a two-party protocol to completion and merge the cost ledgers.
///
/// Both closures run concurrently, one per party. Outputs and the ledger
/// are deterministic functions of (inputs, seeds) in both modes.
pub fn run_protocol<T0, T1, F0, F1>(mode: Mode, f0: F0, f1: F1) -> Result<(T0, T1, CostLedger)>
where
    T0: Send,
    T1: Send,
    F0: FnOnce(&mut Wire) -> Result<T0> + Send,
    F1: FnOnce(&mut Wire) -> Result<T1> + Send,
{
    let (c0, c1) = match mode {
        Mode::InProcess => inproc_pair(),
        Mode::Tcp => tcp_pair()?,
    };
    let mut w0 = Wire::new(c0, 0);
    let mut w1 = Wire::new(c1, 1);

    let (r0, r1) = std::thread::scope(|scope| {
        let h0 = scope.spawn(move || {
            let out = f0(&mut w0)?;
            Ok::<_, Error>((out, w0))
        });
        let h1 = scope.spawn(move || {
            let out = f1(&mut w1)?;
            Ok::<_, Error>((out, w1))
        });
        (
            h0.join().expect("party 0 panicked"),
            h1.join().expect("party 1 panicked"),
        )
    });
    let (out0, w0) = r0?;
    let (out1, w1) = r1?;
    let ledger = CostLedger::merged(w0.ledger, w1.ledger);
    Ok((out0, out1, ledger))
}

/// Like [`run_protocol`] but also returns each party's transcript shape.
pub fn run_protocol_traced<T0, T1, F0, F1>(
    mode: Mode,
    f0: F0,
    f1: F1,
) -> Result<(T0, T1, CostLedger, [TranscriptShape; 2])>
where
    T0: Send,
    T1: Send,
    F0: FnOnce(&mut Wire) -> Result<T0> + Send,
    F1: FnOnce(&mut Wire) -> Result<T1> + Send,
{
    let (c0, c1) = match mode {
        Mode::InProcess => inproc_pair(),
        Mode::Tcp => tcp_pair()?,
    };
    let mut w0 = Wire::new(c0, 0);
    let mut w1 = Wire::new(c1, 1);

    let (r0, r1) = std::thread::scope(|scope| {
        let h0 = scope.spawn(move || {
            let out = f0(&mut w0)?;
            Ok::<_, Error>((out, w0))
        });
        let h1 = scope.spawn(move || {
            let out = f1(&mut w1)?;
            Ok::<_, Error>((out, w1))
        });
        (
            h0.join().expect("party 0 panicked"),
            h1.join().expect("party 1 panicked"),
        )
    });
    let (out0, w0) = r0?;
    let (out1, w1) = r1?;
    let ledger = CostLedger::merged(w0.ledger, w1.ledger);
    Ok((out0, out1, ledger, [w0.shape, w1.shape]))
}
