//! Wire format shared with external prediction backends.
//!
//! All integers and floats are little-endian. A request is `"ZP3B"`, `u32`
//! version, `u8` kind, `u32` step, `u32` condition count, then the tensors
//! (the noisy image first). A reply is `"ZP3R"`, `u32` status, then one
//! tensor. A tensor is `u32` height, width, channels followed by the `f32`
//! values in row-major, channel-last order.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::image::{Domain, Image};

pub const REQUEST_MAGIC: &[u8; 4] = b"ZP3B";
pub const REPLY_MAGIC: &[u8; 4] = b"ZP3R";
pub const PROTOCOL_VERSION: u32 = 1;
pub const STATUS_OK: u32 = 0;

/// Largest tensor accepted from the wire, in elements.
const MAX_ELEMENTS: u64 = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum RequestKind {
    Mvd = 0,
    Hf = 1,
    /// Perceptual loss: tensors are `[render, target]`; the reply packs the
    /// loss followed by its gradient with respect to the render.
    Lpips = 2,
}

impl TryFrom<u8> for RequestKind {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Self::Mvd),
            1 => Ok(Self::Hf),
            2 => Ok(Self::Lpips),
            _ => Err(Error::Protocol(format!("unknown request kind {v}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(height: u32, width: u32, channels: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() as u64 != height as u64 * width as u64 * channels as u64 {
            return Err(Error::invalid("tensor data length does not match its dimensions"));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn from_image(img: &Image) -> Self {
        Self {
            height: img.height() as u32,
            width: img.width() as u32,
            channels: img.channels() as u32,
            data: img.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_image(&self, domain: Domain) -> Result<Image> {
        Image::from_vec(
            self.width as usize,
            self.height as usize,
            self.channels as usize,
            domain,
            self.data.iter().map(|&v| v as f64).collect(),
        )
    }

    pub fn shape(&self) -> (u32, u32, u32) {
        (self.height, self.width, self.channels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub kind: RequestKind,
    pub t: u32,
    /// Noisy image followed by condition images.
    pub tensors: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reply {
    pub status: u32,
    pub tensor: Tensor,
}

fn put_tensor(buf: &mut Vec<u8>, t: &Tensor) {
    buf.extend_from_slice(&t.height.to_le_bytes());
    buf.extend_from_slice(&t.width.to_le_bytes());
    buf.extend_from_slice(&t.channels.to_le_bytes());
    for v in &t.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_request(req: &Request) -> Result<Vec<u8>> {
    if req.tensors.is_empty() {
        return Err(Error::invalid("request needs at least the noisy image"));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(REQUEST_MAGIC);
    buf.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
    buf.push(req.kind as u8);
    buf.extend_from_slice(&req.t.to_le_bytes());
    buf.extend_from_slice(&((req.tensors.len() - 1) as u32).to_le_bytes());
    for t in &req.tensors {
        put_tensor(&mut buf, t);
    }
    Ok(buf)
}

pub fn encode_reply(reply: &Reply) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(REPLY_MAGIC);
    buf.extend_from_slice(&reply.status.to_le_bytes());
    put_tensor(&mut buf, &reply.tensor);
    buf
}

fn protocol_io(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Protocol("truncated message".into())
    } else {
        Error::Io(e)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(protocol_io)?;
    Ok(u32::from_le_bytes(b))
}

fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let (height, width, channels) = (read_u32(r)?, read_u32(r)?, read_u32(r)?);
    let n = height as u64 * width as u64 * channels as u64;
    if n > MAX_ELEMENTS {
        return Err(Error::Protocol(format!("tensor of {n} elements exceeds the limit")));
    }
    let mut bytes = vec![0u8; n as usize * 4];
    r.read_exact(&mut bytes).map_err(protocol_io)?;
    let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(Tensor { height, width, channels, data })
}

/// Reads the leading magic, returning `false` on a clean end of stream.
fn read_magic<R: Read>(r: &mut R, expected: &[u8; 4]) -> Result<bool> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut magic[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => return Err(Error::Protocol("truncated message".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Io(e)),
        }
    }
    if &magic != expected {
        return Err(Error::Protocol(format!("bad magic {magic:?}")));
    }
    Ok(true)
}

/// Reads one request, or `None` if the stream ended between messages.
pub fn read_request<R: Read>(r: &mut R) -> Result<Option<Request>> {
    if !read_magic(r, REQUEST_MAGIC)? {
        return Ok(None);
    }
    let version = read_u32(r)?;
    if version != PROTOCOL_VERSION {
        return Err(Error::Protocol(format!("unsupported protocol version {version}")));
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind).map_err(protocol_io)?;
    let kind = RequestKind::try_from(kind[0])?;
    let t = read_u32(r)?;
    let n_condition = read_u32(r)?;
    let tensors = (0..=n_condition).map(|_| read_tensor(r)).collect::<Result<_>>()?;
    Ok(Some(Request { kind, t, tensors }))
}

pub fn read_reply<R: Read>(r: &mut R) -> Result<Option<Reply>> {
    if !read_magic(r, REPLY_MAGIC)? {
        return Ok(None);
    }
    let status = read_u32(r)?;
    let tensor = read_tensor(r)?;
    Ok(Some(Reply { status, tensor }))
}

pub fn decode_request(bytes: &[u8]) -> Result<Request> {
    let mut r = bytes;
    let req = read_request(&mut r)?.ok_or_else(|| Error::Protocol("empty request".into()))?;
    if !r.is_empty() {
        return Err(Error::Protocol(format!("{} trailing bytes after request", r.len())));
    }
    Ok(req)
}

pub fn decode_reply(bytes: &[u8]) -> Result<Reply> {
    let mut r = bytes;
    let reply = read_reply(&mut r)?.ok_or_else(|| Error::Protocol("empty reply".into()))?;
    if !r.is_empty() {
        return Err(Error::Protocol(format!("{} trailing bytes after reply", r.len())));
    }
    Ok(reply)
}

pub fn write_reply<W: Write>(w: &mut W, reply: &Reply) -> io::Result<()> {
    w.write_all(&encode_reply(reply))?;
    w.flush()
}
