//! Socket transport for multi-process runs.
//!
//! Every frame is a 4-byte big-endian payload length followed by that many
//! bytes of UTF-8 JSON encoding one [`WireMessage`]. A worker opens two
//! connections: a control connection that starts with `Join` and carries
//! assignments, completions and heartbeats, and a data connection that
//! carries `Fetch` requests, each answered by `PartitionData` or
//! `FetchError` before the next request is sent.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::data_service::{DataStore, PartitionPayload};
use crate::error::{Error, Result};
use crate::model::{Entity, MatchTask, PartitionId};
use crate::strategy::MatchStrategy;

use super::protocol::{CoordinatorLink, FromWorker, ToWorker, WorkerDescriptor, WorkerLink};
use super::worker::{run_worker, KillSwitch, PartitionSource, WorkerContext};
use super::{CoordinatorHandle, Inbound};

/// Frames larger than this are rejected as corrupt.
pub const MAX_FRAME_LEN: u32 = 1 << 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Join {
        descriptor: WorkerDescriptor,
    },
    Welcome {
        strategy: MatchStrategy,
        heartbeat_interval_ms: u64,
    },
    Assign {
        task: MatchTask,
    },
    Shutdown,
    Worker {
        message: FromWorker,
    },
    Fetch {
        partition_id: PartitionId,
    },
    PartitionData {
        partition_id: PartitionId,
        entities: Vec<Entity>,
    },
    FetchError {
        partition_id: PartitionId,
        message: String,
    },
}

pub fn write_frame<W: Write>(w: &mut W, msg: &WireMessage) -> Result<()> {
    let body = serde_json::to_vec(msg).map_err(|e| Error::Transport(e.to_string()))?;
    let len = u32::try_from(body.len())
        .ok()
        .filter(|l| *l <= MAX_FRAME_LEN)
        .ok_or_else(|| Error::Transport(format!("frame of {} bytes is too large", body.len())))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&body)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `None` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<WireMessage>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME_LEN {
        return Err(Error::Transport(format!("frame length {len} exceeds limit")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    serde_json::from_slice(&body)
        .map(Some)
        .map_err(|e| Error::Transport(format!("bad frame: {e}")))
}

struct StreamWriter(Mutex<BufWriter<TcpStream>>);

impl StreamWriter {
    fn new(stream: &TcpStream) -> Result<Self> {
        Ok(Self(Mutex::new(BufWriter::new(stream.try_clone()?))))
    }

    fn send(&self, msg: &WireMessage) -> Result<()> {
        write_frame(&mut *self.0.lock(), msg)
    }
}

impl WorkerLink for StreamWriter {
    fn send(&self, msg: ToWorker) -> Result<()> {
        let wire = match msg {
            ToWorker::Assign(task) => WireMessage::Assign { task },
            ToWorker::Shutdown => WireMessage::Shutdown,
        };
        StreamWriter::send(self, &wire)
    }
}

impl CoordinatorLink for StreamWriter {
    fn send(&self, msg: FromWorker) -> Result<()> {
        StreamWriter::send(self, &WireMessage::Worker { message: msg })
    }
}

/// Accepts worker connections for a coordinator and serves partition
/// fetches from the store.
pub struct TcpServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: JoinHandle<()>,
}

impl TcpServer {
    pub fn start(
        listener: TcpListener,
        coordinator: CoordinatorHandle,
        store: Arc<DataStore>,
        strategy: MatchStrategy,
        heartbeat_interval: Duration,
    ) -> Result<Self> {
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let welcome = WireMessage::Welcome {
            strategy,
            heartbeat_interval_ms: heartbeat_interval.as_millis() as u64,
        };
        let accept = {
            let stop = stop.clone();
            thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, peer)) => {
                            let coordinator = coordinator.clone();
                            let store = store.clone();
                            let welcome = welcome.clone();
                            thread::spawn(move || {
                                if let Err(e) = serve_connection(stream, coordinator, &store, &welcome) {
                                    log::warn!("connection from {peer}: {e}");
                                }
                            });
                        }
                        Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                            thread::sleep(Duration::from_millis(10));
                        }
                        Err(e) => {
                            log::warn!("accept failed: {e}");
                            thread::sleep(Duration::from_millis(10));
                        }
                    }
                }
            })
        };
        Ok(Self { addr, stop, accept })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting; established connections end when their peers
    /// disconnect.
    pub fn stop(self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.accept.join();
    }
}

fn serve_connection(
    stream: TcpStream,
    coordinator: CoordinatorHandle,
    store: &DataStore,
    welcome: &WireMessage,
) -> Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let writer = StreamWriter::new(&stream)?;
    let mut reader = BufReader::new(stream);
    match read_frame(&mut reader)? {
        Some(WireMessage::Join { descriptor }) => {
            let worker_id = descriptor.worker_id.clone();
            writer.send(welcome)?;
            coordinator.join(descriptor, Box::new(writer))?;
            loop {
                match read_frame(&mut reader) {
                    Ok(Some(WireMessage::Worker { message })) => {
                        if coordinator.send(Inbound::Worker(message)).is_err() {
                            return Ok(());
                        }
                    }
                    Ok(Some(other)) => log::warn!("unexpected frame from {worker_id}: {other:?}"),
                    Ok(None) | Err(_) => {
                        let _ = coordinator.send(Inbound::Disconnected { worker_id });
                        return Ok(());
                    }
                }
            }
        }
        Some(first @ WireMessage::Fetch { .. }) => {
            let mut next = Some(first);
            while let Some(msg) = next {
                let WireMessage::Fetch { partition_id } = msg else {
                    return Err(Error::Transport("expected a fetch request".into()));
                };
                let reply = match store.fetch_partition(&partition_id) {
                    Ok(payload) => WireMessage::PartitionData {
                        partition_id,
                        entities: payload.iter().map(|e| Entity::clone(e)).collect(),
                    },
                    Err(e) => WireMessage::FetchError {
                        partition_id,
                        message: e.to_string(),
                    },
                };
                writer.send(&reply)?;
                next = read_frame(&mut reader)?;
            }
            Ok(())
        }
        Some(other) => Err(Error::Transport(format!("unexpected first frame {other:?}"))),
        None => Ok(()),
    }
}

/// Fetches partitions over a dedicated data connection, one request at a
/// time.
struct RemoteSource {
    conn: Mutex<(BufReader<TcpStream>, BufWriter<TcpStream>)>,
}

impl PartitionSource for RemoteSource {
    fn fetch_partition(&self, id: &PartitionId) -> Result<PartitionPayload> {
        let mut conn = self.conn.lock();
        let (reader, writer) = &mut *conn;
        write_frame(
            writer,
            &WireMessage::Fetch {
                partition_id: id.clone(),
            },
        )?;
        match read_frame(reader)? {
            Some(WireMessage::PartitionData { entities, .. }) => {
                Ok(entities.into_iter().map(Arc::new).collect::<Vec<_>>().into())
            }
            Some(WireMessage::FetchError { message, .. }) => Err(Error::Transport(message)),
            other => Err(Error::Transport(format!("unexpected fetch reply {other:?}"))),
        }
    }
}

/// Connects to a coordinator and works until it sends `Shutdown` or the
/// connection drops.
pub fn run_tcp_worker<A: ToSocketAddrs>(
    addr: A,
    descriptor: WorkerDescriptor,
    kill: KillSwitch,
) -> Result<()> {
    let addr = addr
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| Error::Transport("coordinator address did not resolve".into()))?;
    let control = TcpStream::connect(addr)?;
    control.set_nodelay(true)?;
    let writer = Arc::new(StreamWriter::new(&control)?);
    let mut reader = BufReader::new(control.try_clone()?);
    writer.send(&WireMessage::Join {
        descriptor: descriptor.clone(),
    })?;
    let (strategy, heartbeat_ms) = match read_frame(&mut reader)? {
        Some(WireMessage::Welcome {
            strategy,
            heartbeat_interval_ms,
        }) => (strategy, heartbeat_interval_ms),
        Some(WireMessage::Shutdown) => {
            return Err(Error::DuplicateWorker(descriptor.worker_id));
        }
        other => return Err(Error::Transport(format!("expected welcome, got {other:?}"))),
    };

    let data = TcpStream::connect(addr)?;
    data.set_nodelay(true)?;
    let source = RemoteSource {
        conn: Mutex::new((BufReader::new(data.try_clone()?), BufWriter::new(data))),
    };

    let (tx, rx) = crossbeam_channel::unbounded();
    let inbox = thread::spawn(move || loop {
        match read_frame(&mut reader) {
            Ok(Some(WireMessage::Assign { task })) => {
                if tx.send(ToWorker::Assign(task)).is_err() {
                    break;
                }
            }
            Ok(Some(WireMessage::Shutdown)) => {
                let _ = tx.send(ToWorker::Shutdown);
                break;
            }
            Ok(Some(other)) => log::warn!("unexpected frame {other:?}"),
            Ok(None) | Err(_) => break,
        }
    });

    let ctx = WorkerContext {
        descriptor,
        strategy: Arc::new(strategy),
        source: Arc::new(source),
        link: writer,
        heartbeat_interval: Duration::from_millis(heartbeat_ms.max(1)),
        kill,
    };
    run_worker(ctx, rx);
    let _ = control.shutdown(Shutdown::Both);
    let _ = inbox.join();
    Ok(())
}
