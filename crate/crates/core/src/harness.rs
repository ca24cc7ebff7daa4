//! Two-process split inference.
//!
//! The client owns the vocabulary, the candidate table and the embedding
//! rows: it sanitizes text, looks the sanitized tokens up in its local
//! embedding table and ships only the sanitized token ids to the server.
//! The server runs a small stand-in for the remaining model layers and
//! answers with output ids. Every client call returns a per-phase
//! [`TimingBreakdown`].

use std::io::{BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{
    Frame, FrameBody, InferenceRequest, InferenceResponse, ERR_BAD_TOKEN, ERR_MALFORMED_FRAME,
    ERR_UNEXPECTED_FRAME, ERR_UNSUPPORTED_VERSION, OOV_TOKEN_ID, PROTOCOL_VERSION,
};
use crate::rng::RngStream;
use crate::sanitizer::{SanitizedDocument, Sanitizer};
use crate::store::{EmbeddingStore, TokenId};

const IO_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Echo,
    Linear,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "echo" => Ok(ModelKind::Echo),
            "linear" => Ok(ModelKind::Linear),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// Server-side stand-in model.
#[derive(Debug, Clone)]
pub enum ToyModel {
    /// Output ids equal input ids.
    Echo,
    /// Maps each id's embedding through a fixed random matrix and returns the
    /// vocabulary entry with the largest dot product against the result.
    Linear {
        store: Arc<EmbeddingStore>,
        weights: Vec<f64>,
    },
}

impl ToyModel {
    pub fn new(kind: ModelKind, store: Arc<EmbeddingStore>) -> Self {
        match kind {
            ModelKind::Echo => ToyModel::Echo,
            ModelKind::Linear => {
                let d = store.dim();
                let mut rng = ChaCha8Rng::seed_from_u64(0x11_AE_A2);
                let weights = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
                ToyModel::Linear { store, weights }
            }
        }
    }

    pub fn vocab_len(&self) -> Option<usize> {
        match self {
            ToyModel::Echo => None,
            ToyModel::Linear { store, .. } => Some(store.len()),
        }
    }

    pub fn forward(&self, ids: &[TokenId]) -> Vec<TokenId> {
        match self {
            ToyModel::Echo => ids.to_vec(),
            ToyModel::Linear { store, weights } => {
                let d = store.dim();
                ids.iter()
                    .map(|&id| {
                        if id == OOV_TOKEN_ID {
                            return id;
                        }
                        let v = store.vector(id);
                        let h: Vec<f64> = weights
                            .chunks_exact(d)
                            .map(|row| row.iter().zip(v).map(|(w, x)| w * x).sum())
                            .collect();
                        let mut best = (0, f64::NEG_INFINITY);
                        for t in store.tokens() {
                            let s: f64 =
                                store.vector(t.id).iter().zip(&h).map(|(a, b)| a * b).sum();
                            if s > best.1 {
                                best = (t.id, s);
                            }
                        }
                        best.0
                    })
                    .collect()
            }
        }
    }
}

pub struct Server {
    listener: TcpListener,
    model: Arc<ToyModel>,
    vocab_len: usize,
}

impl Server {
    pub fn bind(
        addr: impl ToSocketAddrs,
        store: Arc<EmbeddingStore>,
        kind: ModelKind,
    ) -> Result<Self> {
        let listener =
            TcpListener::bind(addr).map_err(|e| Error::Transport(format!("cannot bind: {e}")))?;
        let vocab_len = store.len();
        Ok(Self {
            listener,
            model: Arc::new(ToyModel::new(kind, store)),
            vocab_len,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Serves connections on the current thread until the process exits.
    pub fn run(self) -> Result<()> {
        let stop = Arc::new(AtomicBool::new(false));
        self.accept_loop(&stop);
        Ok(())
    }

    /// Serves on a background thread; stop it with [`ServerHandle::shutdown`].
    pub fn spawn(self) -> Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::spawn(move || self.accept_loop(&flag));
        Ok(ServerHandle {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    fn accept_loop(&self, stop: &AtomicBool) {
        for conn in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let model = self.model.clone();
            let vocab_len = self.vocab_len;
            std::thread::spawn(move || {
                let _ = handle_connection(stream, &model, vocab_len);
            });
        }
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_inner();
        }
    }
}

fn handle_connection(stream: TcpStream, model: &ToyModel, vocab_len: usize) -> Result<()> {
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream.try_clone()?);
    loop {
        let frame = match Frame::read_from(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(()),
            Err(e) => {
                let _ = Frame::error(ERR_MALFORMED_FRAME, e.to_string()).write_to(&mut writer);
                let _ = stream.shutdown(Shutdown::Both);
                return Err(e);
            }
        };
        let reply = answer(frame, model, vocab_len);
        let fatal = matches!(reply.body, FrameBody::Error(_));
        reply.write_to(&mut writer)?;
        if fatal {
            let _ = stream.shutdown(Shutdown::Both);
            return Ok(());
        }
    }
}

/// Server logic for one frame, separate from the socket for testing.
pub fn answer(frame: Frame, model: &ToyModel, vocab_len: usize) -> Frame {
    if frame.version != PROTOCOL_VERSION {
        return Frame::error(
            ERR_UNSUPPORTED_VERSION,
            format!("unsupported protocol version {}", frame.version),
        );
    }
    let req = match frame.body {
        FrameBody::Request(r) => r,
        other => {
            return Frame::error(
                ERR_UNEXPECTED_FRAME,
                format!("expected a request, got frame type {}", other.type_code()),
            )
        }
    };
    if let Some(&bad) = req
        .token_ids
        .iter()
        .find(|&&id| id != OOV_TOKEN_ID && id as usize >= vocab_len)
    {
        return Frame::error(ERR_BAD_TOKEN, format!("token id {bad} out of range"));
    }
    let (output_ids, micros) = if req.token_ids.is_empty() {
        (Vec::new(), 0)
    } else {
        let start = Instant::now();
        let out = model.forward(&req.token_ids);
        (out, start.elapsed().as_micros() as u64)
    };
    Frame::new(FrameBody::Response(InferenceResponse {
        session_id: req.session_id,
        output_ids,
        server_compute_micros: micros,
    }))
}

/// Per-phase wall-clock durations in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingBreakdown {
    pub sanitize_us: f64,
    pub embed_us: f64,
    pub serialize_us: f64,
    pub network_round_trip_us: f64,
    pub server_compute_us: f64,
    pub total_us: f64,
}

impl TimingBreakdown {
    pub fn phases(&self) -> [(&'static str, f64); 5] {
        [
            ("sanitize", self.sanitize_us),
            ("embed", self.embed_us),
            ("serialize", self.serialize_us),
            ("network_round_trip", self.network_round_trip_us),
            ("server_compute", self.server_compute_us),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct InferenceOutcome {
    pub response: InferenceResponse,
    pub timing: TimingBreakdown,
    pub document: SanitizedDocument,
    /// Exact bytes of the request frame that went on the wire.
    pub request_frame: Vec<u8>,
}

impl InferenceOutcome {
    pub fn transmitted_ids(&self) -> Vec<TokenId> {
        self.document.output_ids(OOV_TOKEN_ID)
    }

    pub fn report(&self) -> ClientReport {
        ClientReport {
            session_id: self.response.session_id,
            transmitted_ids: self.transmitted_ids(),
            output_ids: self.response.output_ids.clone(),
            sanitized_text: self.document.text.clone(),
            timing: self.timing,
        }
    }
}

/// JSON timing report written by the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub session_id: u64,
    pub transmitted_ids: Vec<TokenId>,
    pub output_ids: Vec<TokenId>,
    pub sanitized_text: String,
    pub timing: TimingBreakdown,
}

fn micros(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

pub struct Client {
    sanitizer: Arc<Sanitizer>,
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs, sanitizer: Arc<Sanitizer>) -> Result<Self> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| Error::Transport(format!("cannot connect: {e}")))?;
        stream.set_read_timeout(Some(IO_TIMEOUT))?;
        stream.set_write_timeout(Some(IO_TIMEOUT))?;
        stream.set_nodelay(true)?;
        Ok(Self {
            sanitizer,
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        })
    }

    /// Sanitize `text` on `rng`, embed locally, send the sanitized ids and
    /// wait for the server's answer.
    pub fn infer(
        &mut self,
        text: &str,
        session_id: u64,
        rng: &mut RngStream,
    ) -> Result<InferenceOutcome> {
        let t0 = Instant::now();
        let document = self.sanitizer.sanitize_document(text, rng);
        let ids = document.output_ids(OOV_TOKEN_ID);
        let t1 = Instant::now();

        // Client-side embedding layer; the rows never leave this process.
        let store = self.sanitizer.store();
        let mut hidden = Vec::with_capacity(ids.len() * store.dim());
        for &id in &ids {
            if id != OOV_TOKEN_ID {
                hidden.extend_from_slice(store.vector(id));
            } else {
                hidden.extend(std::iter::repeat_n(0.0, store.dim()));
            }
        }
        std::hint::black_box(&hidden);
        let t2 = Instant::now();

        let request_frame = Frame::request(session_id, ids).encode();
        let t3 = Instant::now();

        let io_err = |e: std::io::Error| Error::Transport(e.to_string());
        std::io::Write::write_all(&mut self.writer, &request_frame).map_err(io_err)?;
        let reply = Frame::read_from(&mut self.reader)
            .map_err(|e| match e {
                Error::Io(e) => io_err(e),
                other => other,
            })?
            .ok_or_else(|| Error::Transport("server closed the connection".into()))?;
        let t4 = Instant::now();

        let response = match reply.body {
            FrameBody::Response(r) => r,
            FrameBody::Error(e) => {
                return Err(Error::Remote {
                    code: e.code,
                    msg: e.message,
                })
            }
            FrameBody::Request(_) => {
                return Err(Error::Protocol("server sent a request frame".into()))
            }
        };
        if response.session_id != session_id {
            return Err(Error::Protocol(format!(
                "response for session {} on request {}",
                response.session_id, session_id
            )));
        }
        let timing = TimingBreakdown {
            sanitize_us: micros(t1 - t0),
            embed_us: micros(t2 - t1),
            serialize_us: micros(t3 - t2),
            network_round_trip_us: micros(t4 - t3),
            server_compute_us: response.server_compute_micros as f64,
            total_us: micros(t4 - t0),
        };
        Ok(InferenceOutcome {
            response,
            timing,
            document,
            request_frame,
        })
    }

    /// Send a pre-built request; used to probe the server's error handling.
    pub fn send_raw(&mut self, frame: &Frame) -> Result<Frame> {
        frame.write_to(&mut self.writer)?;
        Frame::read_from(&mut self.reader)?
            .ok_or_else(|| Error::Transport("server closed the connection".into()))
    }
}

/// One-shot connect, infer and disconnect.
pub fn client_infer(
    addr: impl ToSocketAddrs,
    text: &str,
    sanitizer: Arc<Sanitizer>,
    session_id: u64,
    rng: &mut RngStream,
) -> Result<InferenceOutcome> {
    Client::connect(addr, sanitizer)?.infer(text, session_id, rng)
}

/// The request the server would see for `doc`.
pub fn request_for(doc: &SanitizedDocument, session_id: u64) -> InferenceRequest {
    InferenceRequest {
        session_id,
        token_ids: doc.output_ids(OOV_TOKEN_ID),
    }
}
