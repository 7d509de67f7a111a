//! Byte transports underneath the protocol: an in-process channel pair for
//! single-process runs and tests, and a TCP stream for one-process-per-party
//! deployments. Both move whole frames; on the stream each frame is
//! prefixed with its 4-byte big-endian length. Byte accounting everywhere
//! includes that prefix, so cost reports are identical across transports.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::wire::MAX_FRAME_BYTES;
use crate::error::{Error, Result};

/// Frame-oriented, blocking, time-limited duplex pipe.
pub trait Transport: Send {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()>;
    /// Blocks until a frame arrives or the transport's receive deadline
    /// passes (timeout is a transport error).
    fn recv_frame(&mut self) -> Result<Vec<u8>>;
}

/// Bytes a frame occupies on the stream: payload plus length prefix.
pub fn frame_wire_bytes(frame_len: usize) -> u64 {
    frame_len as u64 + 4
}

/// In-process transport over mpsc channels.
pub struct ChannelTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    timeout: Duration,
}

/// A connected pair of in-process transports.
pub fn channel_pair(timeout: Duration) -> (ChannelTransport, ChannelTransport) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        ChannelTransport {
            tx: tx_a,
            rx: rx_a,
            timeout,
        },
        ChannelTransport {
            tx: tx_b,
            rx: rx_b,
            timeout,
        },
    )
}

impl Transport for ChannelTransport {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        if frame.len() > MAX_FRAME_BYTES {
            return Err(Error::transport(format!(
                "frame of {} bytes exceeds the limit",
                frame.len()
            )));
        }
        self.tx
            .send(frame)
            .map_err(|_| Error::transport("peer hung up"))
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        match self.rx.recv_timeout(self.timeout) {
            Ok(frame) => Ok(frame),
            Err(RecvTimeoutError::Timeout) => Err(Error::transport(format!(
                "timed out after {:?} waiting for a frame",
                self.timeout
            ))),
            Err(RecvTimeoutError::Disconnected) => Err(Error::transport("peer hung up")),
        }
    }
}

/// TCP transport with the 4-byte big-endian length prefix on every frame.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream, timeout: Duration) -> Result<Self> {
        stream
            .set_read_timeout(Some(timeout))
            .map_err(|e| Error::transport(format!("set_read_timeout: {e}")))?;
        stream
            .set_write_timeout(Some(timeout))
            .map_err(|e| Error::transport(format!("set_write_timeout: {e}")))?;
        stream
            .set_nodelay(true)
            .map_err(|e| Error::transport(format!("set_nodelay: {e}")))?;
        Ok(TcpTransport { stream })
    }

    /// Connects, retrying until the deadline so the peer may start later.
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self> {
        let deadline = Instant::now() + timeout;
        let addrs: Vec<SocketAddr> = addr
            .to_socket_addrs()
            .map_err(|e| Error::transport(format!("resolve {addr}: {e}")))?
            .collect();
        if addrs.is_empty() {
            return Err(Error::transport(format!("{addr} resolves to nothing")));
        }
        loop {
            match TcpStream::connect_timeout(&addrs[0], Duration::from_secs(2)) {
                Ok(stream) => return TcpTransport::new(stream, timeout),
                Err(e) => {
                    if Instant::now() >= deadline {
                        return Err(Error::transport(format!("connect {addr}: {e}")));
                    }
                    std::thread::sleep(Duration::from_millis(50));
                }
            }
        }
    }

    /// Binds, accepts a single peer, and returns the transport along with
    /// the locally bound address (useful with port 0).
    pub fn accept_one(bind: &str, timeout: Duration) -> Result<(Self, SocketAddr)> {
        let listener = BoundListener::bind(bind)?;
        let local = listener.local_addr()?;
        let transport = listener.accept(timeout)?;
        Ok((transport, local))
    }
}

/// A bound-but-not-yet-accepted listener, so the chosen port (with a `:0`
/// bind) can be published before the peer connects.
pub struct BoundListener {
    listener: TcpListener,
}

impl BoundListener {
    pub fn bind(bind: &str) -> Result<Self> {
        let listener =
            TcpListener::bind(bind).map_err(|e| Error::transport(format!("bind {bind}: {e}")))?;
        Ok(BoundListener { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.listener
            .local_addr()
            .map_err(|e| Error::transport(format!("local_addr: {e}")))
    }

    pub fn accept(&self, timeout: Duration) -> Result<TcpTransport> {
        let (stream, _) = self
            .listener
            .accept()
            .map_err(|e| Error::transport(format!("accept: {e}")))?;
        TcpTransport::new(stream, timeout)
    }
}

impl Transport for TcpTransport {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        if frame.len() > MAX_FRAME_BYTES {
            return Err(Error::transport(format!(
                "frame of {} bytes exceeds the limit",
                frame.len()
            )));
        }
        let len = (frame.len() as u32).to_be_bytes();
        self.stream
            .write_all(&len)
            .and_then(|_| self.stream.write_all(&frame))
            .and_then(|_| self.stream.flush())
            .map_err(|e| Error::transport(format!("send: {e}")))
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        let mut len_buf = [0u8; 4];
        self.stream
            .read_exact(&mut len_buf)
            .map_err(|e| Error::transport(format!("recv length: {e}")))?;
        let len = u32::from_be_bytes(len_buf) as usize;
        if len > MAX_FRAME_BYTES {
            return Err(Error::transport(format!("incoming frame of {len} bytes too large")));
        }
        let mut frame = vec![0u8; len];
        self.stream
            .read_exact(&mut frame)
            .map_err(|e| Error::transport(format!("recv body: {e}")))?;
        Ok(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// One recorded frame, as seen by the recording side.
#[derive(Debug, Clone)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub frame: Vec<u8>,
}

pub type TranscriptLog = Arc<Mutex<Vec<TranscriptEntry>>>;

pub fn new_transcript_log() -> TranscriptLog {
    Arc::new(Mutex::new(Vec::new()))
}

/// Wraps a transport and appends every frame (both directions) to a log.
/// Used by the alignment audit and the cost-accounting checks.
pub struct RecordingTransport<T: Transport> {
    inner: T,
    log: TranscriptLog,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, log: TranscriptLog) -> Self {
        RecordingTransport { inner, log }
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        self.log.lock().unwrap().push(TranscriptEntry {
            direction: Direction::Sent,
            frame: frame.clone(),
        });
        self.inner.send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        let frame = self.inner.recv_frame()?;
        self.log.lock().unwrap().push(TranscriptEntry {
            direction: Direction::Received,
            frame: frame.clone(),
        });
        Ok(frame)
    }
}
