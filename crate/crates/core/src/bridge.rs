//! Framed wire protocol for attaching external manipulation models, over a
//! stdio pipe to a child process or a TCP socket.
//!
//! Frame layout (all integers little-endian):
//!
//! ```text
//! "GRSP" | version u8 (0x01) | type u8 | payload length u32 | payload
//! ```
//!
//! Message types: 0x01 HELLO, 0x02 HELLO_ACK, 0x10 FORWARD_REQ,
//! 0x11 FORWARD_RESP, 0x20 VJP_REQ, 0x21 VJP_RESP, 0x7F ERROR.
//!
//! Tensors travel as `dtype u8 (0x01 = f32) | rank u8 | dims u32×rank |
//! row-major f32 data`. A VJP_REQ carries two tensors back-to-back
//! (point, cotangent); an ERROR payload is a UTF-8 message.
//!
//! Handshake: the serving side (which owns the model) sends HELLO first —
//! four f32 values (H, W, C, range-width code); zeros mean "any dims".
//! A range-width code of 1 declares the unit range [0,1]; any other width w
//! declares the zero-centered range [-w/2, w/2]. The client validates magic
//! and version and answers HELLO_ACK.
//!
//! A connection is single-in-flight: one request at a time. Parallelism
//! comes from opening more connections.

use crate::error::{Error, Result};
use crate::image::{ImageTensor, PixelRange};
use crate::models::{DimsSpec, ManipulationModel};
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

pub const MAGIC: [u8; 4] = *b"GRSP";
pub const VERSION: u8 = 0x01;
pub const DTYPE_F32: u8 = 0x01;

/// Frames larger than this are treated as protocol violations.
pub const MAX_PAYLOAD: u32 = 256 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Hello = 0x01,
    HelloAck = 0x02,
    ForwardReq = 0x10,
    ForwardResp = 0x11,
    VjpReq = 0x20,
    VjpResp = 0x21,
    Error = 0x7F,
}

impl MsgType {
    fn from_byte(b: u8) -> Result<MsgType> {
        Ok(match b {
            0x01 => MsgType::Hello,
            0x02 => MsgType::HelloAck,
            0x10 => MsgType::ForwardReq,
            0x11 => MsgType::ForwardResp,
            0x20 => MsgType::VjpReq,
            0x21 => MsgType::VjpResp,
            0x7F => MsgType::Error,
            other => return Err(Error::Protocol(format!("unknown message type {other:#04x}"))),
        })
    }
}

/// One decoded frame.
#[derive(Debug, Clone)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

pub fn write_frame(w: &mut impl Write, msg_type: MsgType, payload: &[u8]) -> Result<()> {
    if payload.len() > MAX_PAYLOAD as usize {
        return Err(Error::Protocol(format!("payload too large: {}", payload.len())));
    }
    let mut header = [0u8; 10];
    header[..4].copy_from_slice(&MAGIC);
    header[4] = VERSION;
    header[5] = msg_type as u8;
    header[6..10].copy_from_slice(&(payload.len() as u32).to_le_bytes());
    w.write_all(&header).map_err(io_model)?;
    w.write_all(payload).map_err(io_model)?;
    w.flush().map_err(io_model)?;
    Ok(())
}

fn io_model(e: std::io::Error) -> Error {
    Error::Model(format!("bridge transport failure: {e}"))
}

pub fn read_frame(r: &mut impl Read) -> Result<Frame> {
    let mut header = [0u8; 10];
    r.read_exact(&mut header).map_err(io_model)?;
    if header[..4] != MAGIC {
        return Err(Error::Protocol(format!("bad magic {:02x?}", &header[..4])));
    }
    if header[4] != VERSION {
        return Err(Error::Protocol(format!(
            "version mismatch: peer {} vs local {VERSION}",
            header[4]
        )));
    }
    let msg_type = MsgType::from_byte(header[5])?;
    let len = u32::from_le_bytes([header[6], header[7], header[8], header[9]]);
    if len > MAX_PAYLOAD {
        return Err(Error::Protocol(format!("oversized payload {len}")));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(io_model)?;
    Ok(Frame { msg_type, payload })
}

/// Serializes a tensor as f32; values are truncated to f32 on the wire.
pub fn encode_tensor(t: &ImageTensor) -> Vec<u8> {
    let (h, w, c) = t.shape();
    let mut out = Vec::with_capacity(2 + 12 + 4 * t.len());
    out.push(DTYPE_F32);
    out.push(3); // rank: H, W, C
    for dim in [h, w, c] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Decodes one tensor starting at `offset`, advancing it past the tensor.
pub fn decode_tensor(payload: &[u8], offset: &mut usize, range: PixelRange) -> Result<ImageTensor> {
    let need = |n: usize, offset: usize| -> Result<()> {
        if payload.len() < offset + n {
            Err(Error::Protocol("truncated tensor payload".into()))
        } else {
            Ok(())
        }
    };
    need(2, *offset)?;
    let dtype = payload[*offset];
    let rank = payload[*offset + 1];
    *offset += 2;
    if dtype != DTYPE_F32 {
        return Err(Error::Protocol(format!("unsupported dtype {dtype:#04x}")));
    }
    if rank != 3 {
        return Err(Error::Protocol(format!("expected rank-3 tensor, got rank {rank}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        need(4, *offset)?;
        *d = u32::from_le_bytes(payload[*offset..*offset + 4].try_into().unwrap()) as usize;
        *offset += 4;
    }
    let count = dims[0]
        .checked_mul(dims[1])
        .and_then(|n| n.checked_mul(dims[2]))
        .ok_or_else(|| Error::Protocol("tensor dims overflow".into()))?;
    need(4 * count, *offset)?;
    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        let at = *offset + 4 * i;
        let bits = u32::from_le_bytes(payload[at..at + 4].try_into().unwrap());
        data.push(f32::from_bits(bits) as f64);
    }
    *offset += 4 * count;
    ImageTensor::new(dims[0], dims[1], dims[2], data, range)
        .map_err(|e| Error::Protocol(format!("invalid tensor on wire: {e}")))
}

fn decode_range_code(code: f32) -> PixelRange {
    if code == 1.0 {
        PixelRange::UNIT
    } else {
        PixelRange::symmetric(code as f64 / 2.0)
    }
}

fn encode_hello(dims: DimsSpec, range: PixelRange) -> Vec<u8> {
    let (h, w, c) = match dims {
        DimsSpec::Any => (0, 0, 0),
        DimsSpec::Channels(c) => (0, 0, c),
        DimsSpec::Fixed { height, width, channels } => (height, width, channels),
    };
    let mut payload = Vec::with_capacity(16);
    for v in [h as f32, w as f32, c as f32, range.width() as f32] {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    payload
}

fn decode_hello(payload: &[u8]) -> Result<(DimsSpec, PixelRange)> {
    if payload.len() != 16 {
        return Err(Error::Protocol(format!("HELLO payload must be 16 bytes, got {}", payload.len())));
    }
    let read_f32 = |i: usize| f32::from_le_bytes(payload[4 * i..4 * i + 4].try_into().unwrap());
    let (h, w, c) = (read_f32(0) as usize, read_f32(1) as usize, read_f32(2) as usize);
    let code = read_f32(3);
    if code.is_nan() || code <= 0.0 {
        return Err(Error::Protocol(format!("bad range-width code {code}")));
    }
    let dims = if h == 0 && w == 0 && c == 0 {
        DimsSpec::Any
    } else if h == 0 && w == 0 {
        DimsSpec::Channels(c)
    } else {
        DimsSpec::Fixed { height: h, width: w, channels: c }
    };
    Ok((dims, decode_range_code(code)))
}

/// Where a remote model lives.
#[derive(Debug, Clone)]
pub enum BridgeEndpoint {
    /// TCP address, e.g. "127.0.0.1:9000".
    Tcp(String),
    /// Child process speaking the protocol on its stdio.
    ChildProcess { program: String, args: Vec<String> },
}

struct Connection {
    reader: Box<dyn Read + Send>,
    writer: Box<dyn Write + Send>,
    /// Keeps a child-process server alive for the connection's lifetime.
    child: Option<Child>,
    broken: bool,
}

impl Connection {
    fn request(&mut self, msg_type: MsgType, payload: &[u8], expect: MsgType) -> Result<Frame> {
        if self.broken {
            return Err(Error::Model("bridge connection closed after protocol error".into()));
        }
        let outcome = (|| {
            write_frame(&mut self.writer, msg_type, payload)?;
            let frame = read_frame(&mut self.reader)?;
            match frame.msg_type {
                t if t == expect => Ok(frame),
                MsgType::Error => Err(Error::Model(format!(
                    "remote model error: {}",
                    String::from_utf8_lossy(&frame.payload)
                ))),
                other => Err(Error::Protocol(format!(
                    "expected {expect:?}, got {other:?}"
                ))),
            }
        })();
        if matches!(outcome, Err(Error::Protocol(_))) {
            // Framing is lost; nothing further can be trusted on this pipe.
            self.broken = true;
        }
        outcome
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// A remote model attached over the bridge. Forward and VJP are remote
/// calls; gradients come from the remote side.
pub struct BridgeModel {
    name: String,
    dims: DimsSpec,
    range: PixelRange,
    conn: Mutex<Connection>,
}

/// Connects, performs the handshake, and wraps the remote model.
pub fn connect(endpoint: &BridgeEndpoint) -> Result<BridgeModel> {
    let (reader, writer, child, name): (Box<dyn Read + Send>, Box<dyn Write + Send>, _, _) =
        match endpoint {
            BridgeEndpoint::Tcp(addr) => {
                let sock_addr = addr
                    .to_socket_addrs()
                    .map_err(|e| Error::Model(format!("cannot resolve {addr}: {e}")))?
                    .next()
                    .ok_or_else(|| Error::Model(format!("no address for {addr}")))?;
                let stream = TcpStream::connect_timeout(&sock_addr, Duration::from_secs(10))
                    .map_err(|e| Error::Model(format!("cannot connect to {addr}: {e}")))?;
                stream
                    .set_read_timeout(Some(Duration::from_secs(120)))
                    .and_then(|_| stream.set_write_timeout(Some(Duration::from_secs(120))))
                    .map_err(io_model)?;
                let reader = stream.try_clone().map_err(io_model)?;
                (
                    Box::new(BufReader::new(reader)) as Box<dyn Read + Send>,
                    Box::new(BufWriter::new(stream)) as Box<dyn Write + Send>,
                    None,
                    format!("bridge({addr})"),
                )
            }
            BridgeEndpoint::ChildProcess { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(|e| Error::Model(format!("cannot spawn {program}: {e}")))?;
                let stdout = child.stdout.take().expect("piped stdout");
                let stdin = child.stdin.take().expect("piped stdin");
                (
                    Box::new(BufReader::new(stdout)) as Box<dyn Read + Send>,
                    Box::new(BufWriter::new(stdin)) as Box<dyn Write + Send>,
                    Some(child),
                    format!("bridge({program})"),
                )
            }
        };

    let mut conn = Connection { reader, writer, child, broken: false };

    // Server speaks first: HELLO with declared dims and range.
    let hello = read_frame(&mut conn.reader)?;
    if hello.msg_type != MsgType::Hello {
        return Err(Error::Protocol(format!(
            "handshake expected HELLO, got {:?}",
            hello.msg_type
        )));
    }
    let (dims, range) = decode_hello(&hello.payload)?;
    write_frame(&mut conn.writer, MsgType::HelloAck, &[])?;

    Ok(BridgeModel { name, dims, range, conn: Mutex::new(conn) })
}

impl BridgeModel {
    fn checked_response_tensor(
        &self,
        frame: &Frame,
        request_shape: (usize, usize, usize),
    ) -> Result<ImageTensor> {
        let mut offset = 0;
        let tensor = decode_tensor(&frame.payload, &mut offset, self.range)?;
        if offset != frame.payload.len() {
            return Err(Error::Protocol("trailing bytes after tensor".into()));
        }
        if tensor.shape() != request_shape {
            return Err(Error::Shape(format!(
                "server returned dims {:?} for request dims {:?}",
                tensor.shape(),
                request_shape
            )));
        }
        Ok(tensor)
    }
}

impl ManipulationModel for BridgeModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn input_dims(&self) -> DimsSpec {
        self.dims
    }

    fn output_range(&self) -> PixelRange {
        self.range
    }

    fn forward(&self, x: &ImageTensor) -> Result<ImageTensor> {
        let mut conn = self.conn.lock().expect("bridge mutex poisoned");
        let frame = conn.request(MsgType::ForwardReq, &encode_tensor(x), MsgType::ForwardResp)?;
        drop(conn);
        self.checked_response_tensor(&frame, x.shape())
    }

    fn vjp(&self, x: &ImageTensor, cotangent: &ImageTensor) -> Result<ImageTensor> {
        if !x.same_shape(cotangent) {
            return Err(Error::shape_mismatch("vjp cotangent", x.shape(), cotangent.shape()));
        }
        let mut payload = encode_tensor(x);
        payload.extend_from_slice(&encode_tensor(cotangent));
        let mut conn = self.conn.lock().expect("bridge mutex poisoned");
        let frame = conn.request(MsgType::VjpReq, &payload, MsgType::VjpResp)?;
        drop(conn);
        self.checked_response_tensor(&frame, x.shape())
    }
}

/// Serves a model over one already-established byte stream. Sends HELLO,
/// waits for HELLO_ACK, then answers requests until EOF. Malformed input
/// gets an ERROR frame and closes the connection with the protocol error.
pub fn serve_connection(
    model: &dyn ManipulationModel,
    mut reader: impl Read,
    mut writer: impl Write,
) -> Result<()> {
    write_frame(
        &mut writer,
        MsgType::Hello,
        &encode_hello(model.input_dims(), model.output_range()),
    )?;
    let ack = read_frame(&mut reader)?;
    if ack.msg_type != MsgType::HelloAck {
        let msg = format!("expected HELLO_ACK, got {:?}", ack.msg_type);
        let _ = write_frame(&mut writer, MsgType::Error, msg.as_bytes());
        return Err(Error::Protocol(msg));
    }

    loop {
        let frame = match read_frame(&mut reader) {
            Ok(f) => f,
            Err(Error::Model(_)) => return Ok(()), // EOF / peer gone
            Err(e) => {
                let _ = write_frame(&mut writer, MsgType::Error, e.to_string().as_bytes());
                return Err(e);
            }
        };
        let input_range = PixelRange::UNIT;
        let outcome: Result<(MsgType, Vec<u8>)> = (|| match frame.msg_type {
            MsgType::ForwardReq => {
                let mut offset = 0;
                let x = decode_tensor(&frame.payload, &mut offset, input_range)?;
                let y = model.forward(&x)?;
                Ok((MsgType::ForwardResp, encode_tensor(&y)))
            }
            MsgType::VjpReq => {
                let mut offset = 0;
                let x = decode_tensor(&frame.payload, &mut offset, input_range)?;
                let cot = decode_tensor(&frame.payload, &mut offset, input_range)?;
                let out = model.vjp(&x, &cot)?;
                Ok((MsgType::VjpResp, encode_tensor(&out)))
            }
            other => Err(Error::Protocol(format!("unexpected request {other:?}"))),
        })();
        match outcome {
            Ok((msg_type, payload)) => write_frame(&mut writer, msg_type, &payload)?,
            Err(Error::Protocol(msg)) => {
                let _ = write_frame(&mut writer, MsgType::Error, msg.as_bytes());
                return Err(Error::Protocol(msg));
            }
            Err(e) => {
                // Model-level failure: report it, keep serving.
                write_frame(&mut writer, MsgType::Error, e.to_string().as_bytes())?;
            }
        }
    }
}

/// Serves a model on stdio (the child-process transport).
pub fn serve_stdio(model: &dyn ManipulationModel) -> Result<()> {
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    serve_connection(model, stdin, BufWriter::new(stdout))
}

/// Accepts TCP connections one at a time and serves each until it closes.
pub fn serve_tcp(model: &dyn ManipulationModel, listener: &std::net::TcpListener) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream.map_err(io_model)?;
        let reader = stream.try_clone().map_err(io_model)?;
        // Per-connection errors end that connection, not the server.
        let _ = serve_connection(model, BufReader::new(reader), BufWriter::new(stream));
    }
    Ok(())
}
