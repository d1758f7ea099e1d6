//! Source-to-target model transfer over a plain TCP stream.
//!
//! A frame is a 4-byte big-endian body length, one type byte, then the body.
//! A session is exactly `Hello → Hello`, `ModelRequest → ModelPayload`; any
//! other order gets an `ErrorReply` and the connection is closed. The payload
//! body is the model envelope as stored on disk, so the only bytes that leave
//! the source are framing plus generator parameters.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use ftca_core::tabgen::GeneratorModel;
use serde::{Deserialize, Serialize};

use crate::envelope::deserialize_model;
use crate::error::{FtcaError, NetError, Result};

pub const MAX_BODY: usize = 64 * 1024 * 1024;
pub const TIMEOUT_ENV: &str = "FTCA_TIMEOUT_SECS";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
/// How long the server waits on a silent peer before dropping it.
pub const SESSION_IDLE: Duration = Duration::from_secs(5);
pub const HELLO_BODY: &[u8] = b"ftca/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum MessageType {
    Hello = 0x01,
    ModelRequest = 0x02,
    ModelPayload = 0x03,
    ErrorReply = 0x04,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(MessageType::Hello),
            0x02 => Some(MessageType::ModelRequest),
            0x03 => Some(MessageType::ModelPayload),
            0x04 => Some(MessageType::ErrorReply),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub kind: MessageType,
    pub body: Vec<u8>,
}

impl WireMessage {
    pub fn new(kind: MessageType, body: impl Into<Vec<u8>>) -> Self {
        WireMessage {
            kind,
            body: body.into(),
        }
    }

    pub fn error(text: &str) -> Self {
        Self::new(MessageType::ErrorReply, text.as_bytes())
    }

    pub fn frame_len(&self) -> usize {
        5 + self.body.len()
    }
}

pub fn encode_frame(msg: &WireMessage) -> Result<Vec<u8>, NetError> {
    if msg.body.len() > MAX_BODY {
        return Err(NetError::FrameTooLarge(msg.body.len()));
    }
    let mut out = Vec::with_capacity(msg.frame_len());
    out.extend_from_slice(&(msg.body.len() as u32).to_be_bytes());
    out.push(msg.kind as u8);
    out.extend_from_slice(&msg.body);
    Ok(out)
}

/// Decodes the first frame of `bytes`, returning it and the bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(WireMessage, usize), NetError> {
    if bytes.len() < 5 {
        return Err(NetError::IncompleteFrame);
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if len > MAX_BODY {
        return Err(NetError::FrameTooLarge(len));
    }
    let kind = MessageType::from_byte(bytes[4])
        .ok_or_else(|| NetError::Protocol(format!("unknown message type 0x{:02x}", bytes[4])))?;
    if bytes.len() < 5 + len {
        return Err(NetError::IncompleteFrame);
    }
    Ok((WireMessage::new(kind, &bytes[5..5 + len]), 5 + len))
}

/// Reads exactly one frame. A clean end of stream before the first byte is
/// reported as `Ok(None)`.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<WireMessage>, NetError> {
    let mut head = [0u8; 5];
    let mut got = 0;
    while got < head.len() {
        match r.read(&mut head[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(NetError::IncompleteFrame),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes([head[0], head[1], head[2], head[3]]) as usize;
    if len > MAX_BODY {
        return Err(NetError::FrameTooLarge(len));
    }
    let kind = MessageType::from_byte(head[4])
        .ok_or_else(|| NetError::Protocol(format!("unknown message type 0x{:02x}", head[4])))?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => NetError::IncompleteFrame,
        _ => NetError::Io(e),
    })?;
    Ok(Some(WireMessage { kind, body }))
}

pub fn write_frame<W: Write>(w: &mut W, msg: &WireMessage) -> Result<usize, NetError> {
    let bytes = encode_frame(msg)?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(bytes.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub direction: Direction,
    pub kind: MessageType,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub peer: String,
    pub started_ms: u128,
    pub finished_ms: u128,
    pub messages: Vec<MessageRecord>,
    pub bytes_in: usize,
    pub bytes_out: usize,
    pub payload_served: bool,
    pub outcome: String,
}

/// Append-only record of every session. With a file attached, each record is
/// also written as one JSON line.
#[derive(Debug, Default)]
pub struct TransferLog {
    records: Mutex<Vec<SessionRecord>>,
    sink: Option<Mutex<BufWriter<File>>>,
}

impl TransferLog {
    pub fn in_memory() -> Self {
        TransferLog::default()
    }

    pub fn with_file(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| FtcaError::file(path, e))?;
        Ok(TransferLog {
            records: Mutex::new(Vec::new()),
            sink: Some(Mutex::new(BufWriter::new(file))),
        })
    }

    pub fn append(&self, record: SessionRecord) {
        if let Some(sink) = &self.sink {
            let mut w = sink.lock().unwrap_or_else(|p| p.into_inner());
            let line = serde_json::to_string(&record).expect("record serializes");
            if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                log::error!("transfer log write failed: {e}");
            }
        }
        self.records
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(record);
    }

    pub fn records(&self) -> Vec<SessionRecord> {
        self.records
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

struct Session<'a> {
    stream: &'a mut TcpStream,
    record: &'a mut SessionRecord,
}

impl Session<'_> {
    fn recv(&mut self) -> Result<Option<WireMessage>, NetError> {
        let msg = read_frame(self.stream)?;
        if let Some(m) = &msg {
            self.record.bytes_in += m.frame_len();
            self.record.messages.push(MessageRecord {
                direction: Direction::In,
                kind: m.kind,
                bytes: m.frame_len(),
            });
        }
        Ok(msg)
    }

    fn send(&mut self, msg: &WireMessage) -> Result<(), NetError> {
        let n = write_frame(self.stream, msg)?;
        self.record.bytes_out += n;
        self.record.messages.push(MessageRecord {
            direction: Direction::Out,
            kind: msg.kind,
            bytes: n,
        });
        Ok(())
    }

    fn expect(&mut self, kind: MessageType) -> Result<bool, NetError> {
        match self.recv() {
            Ok(Some(m)) if m.kind == kind => Ok(true),
            Ok(Some(_)) => {
                self.send(&WireMessage::error("handshake"))?;
                self.record.outcome = "handshake".into();
                Ok(false)
            }
            Ok(None) => {
                self.record.outcome = "closed".into();
                Ok(false)
            }
            Err(NetError::FrameTooLarge(_)) => {
                self.send(&WireMessage::error("frame too large"))?;
                self.record.outcome = "frame too large".into();
                Ok(false)
            }
            Err(NetError::Protocol(p)) => {
                self.send(&WireMessage::error("protocol"))?;
                self.record.outcome = p;
                Ok(false)
            }
            Err(e) => Err(e),
        }
    }
}

fn handle(mut stream: TcpStream, payload: &[u8], log: &TransferLog) {
    let _ = stream.set_read_timeout(Some(SESSION_IDLE));
    let _ = stream.set_write_timeout(Some(SESSION_IDLE));
    let mut record = SessionRecord {
        peer: stream
            .peer_addr()
            .map(|a| a.to_string())
            .unwrap_or_default(),
        started_ms: now_ms(),
        finished_ms: 0,
        messages: Vec::new(),
        bytes_in: 0,
        bytes_out: 0,
        payload_served: false,
        outcome: String::new(),
    };
    let mut s = Session {
        stream: &mut stream,
        record: &mut record,
    };
    let result = (|| -> Result<(), NetError> {
        if !s.expect(MessageType::Hello)? {
            return Ok(());
        }
        s.send(&WireMessage::new(MessageType::Hello, HELLO_BODY))?;
        if !s.expect(MessageType::ModelRequest)? {
            return Ok(());
        }
        s.send(&WireMessage::new(MessageType::ModelPayload, payload))?;
        s.record.payload_served = true;
        s.record.outcome = "served".into();
        Ok(())
    })();
    if let Err(e) = result {
        record.outcome = e.to_string();
    }
    record.finished_ms = now_ms();
    log::info!("session {} ended: {}", record.peer, record.outcome);
    log.append(record);
    let _ = stream.shutdown(Shutdown::Both);
}

/// A running source node. Dropping the handle stops accepting connections.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    log: Arc<TransferLog>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn log(&self) -> &Arc<TransferLog> {
        &self.log
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

/// Validates the model file, binds, and serves it from a background thread.
pub fn serve_source(bind: &str, model_path: &Path, log: Arc<TransferLog>) -> Result<ServerHandle> {
    let bytes = std::fs::read(model_path).map_err(|e| FtcaError::file(model_path, e))?;
    deserialize_model(&bytes)?;
    serve_bytes(bind, bytes, log)
}

/// Serves already-validated envelope bytes.
pub fn serve_bytes(bind: &str, payload: Vec<u8>, log: Arc<TransferLog>) -> Result<ServerHandle> {
    if payload.len() > MAX_BODY {
        return Err(NetError::FrameTooLarge(payload.len()).into());
    }
    let listener = TcpListener::bind(bind).map_err(|e| NetError::Connect {
        addr: bind.to_string(),
        source: e,
    })?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let payload = Arc::new(payload);
    let accept = {
        let stop = Arc::clone(&stop);
        let log = Arc::clone(&log);
        thread::spawn(move || {
            for conn in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let payload = Arc::clone(&payload);
                        let log = Arc::clone(&log);
                        thread::spawn(move || handle(stream, &payload, &log));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        })
    };
    log::info!("serving model on {addr}");
    Ok(ServerHandle {
        addr,
        stop,
        accept: Some(accept),
        log,
    })
}

/// Client timeout: `FTCA_TIMEOUT_SECS` if set to a positive number, else 10 s.
pub fn client_timeout() -> Duration {
    std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|s| *s > 0.0 && s.is_finite())
        .map(Duration::from_secs_f64)
        .unwrap_or(DEFAULT_TIMEOUT)
}

/// Runs one session and returns the raw envelope bytes.
pub fn fetch_envelope(server: &str, timeout: Duration) -> Result<Vec<u8>, NetError> {
    let connect_err = |source: io::Error| NetError::Connect {
        addr: server.to_string(),
        source,
    };
    let addrs: Vec<SocketAddr> = server.to_socket_addrs().map_err(connect_err)?.collect();
    let mut last = io::Error::new(io::ErrorKind::AddrNotAvailable, "no address resolved");
    let mut stream = None;
    for a in &addrs {
        match TcpStream::connect_timeout(a, timeout) {
            Ok(s) => {
                stream = Some(s);
                break;
            }
            Err(e) => last = e,
        }
    }
    let mut stream = stream.ok_or_else(|| connect_err(last))?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;

    let reply = |stream: &mut TcpStream, want: MessageType| -> Result<WireMessage, NetError> {
        match read_frame(stream)? {
            Some(m) if m.kind == want => Ok(m),
            Some(m) if m.kind == MessageType::ErrorReply => Err(NetError::Remote(
                String::from_utf8_lossy(&m.body).into_owned(),
            )),
            Some(m) => Err(NetError::Protocol(format!(
                "expected {want:?}, got {:?}",
                m.kind
            ))),
            None => Err(NetError::Protocol(format!(
                "connection closed while waiting for {want:?}"
            ))),
        }
    };
    write_frame(
        &mut stream,
        &WireMessage::new(MessageType::Hello, HELLO_BODY),
    )?;
    reply(&mut stream, MessageType::Hello)?;
    write_frame(
        &mut stream,
        &WireMessage::new(MessageType::ModelRequest, Vec::new()),
    )?;
    let payload = reply(&mut stream, MessageType::ModelPayload)?;
    Ok(payload.body)
}

pub fn fetch_model_with(server: &str, timeout: Duration) -> Result<GeneratorModel, NetError> {
    let bytes = fetch_envelope(server, timeout)?;
    Ok(deserialize_model(&bytes)?)
}

pub fn fetch_model(server: &str) -> Result<GeneratorModel, NetError> {
    fetch_model_with(server, client_timeout())
}
