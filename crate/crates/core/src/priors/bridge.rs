//! Client side of the external backend bridge.

use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::protocol::{self, Reply, Request, RequestKind, Tensor, STATUS_OK};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::image::{Domain, Image};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BridgeTransport {
    /// A long-lived child process speaking the protocol over stdin/stdout.
    StdioSubprocess {
        program: PathBuf,
        #[serde(default)]
        args: Vec<String>,
    },
    /// Request and reply files exchanged through a watched directory.
    DirectoryHandoff { dir: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    #[serde(flatten)]
    pub transport: BridgeTransport,
    pub timeout_secs: f64,
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs > 0.0) || !self.timeout_secs.is_finite() {
            return Err(Error::invalid("bridge timeout must be positive"));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

struct Subprocess {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    replies: Receiver<Result<Reply>>,
}

impl Subprocess {
    fn spawn(program: &PathBuf, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend(format!("failed to start {}: {e}", program.display())))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let msg = match protocol::read_reply(&mut reader) {
                    Ok(Some(reply)) => Ok(reply),
                    Ok(None) => Err(Error::Backend("backend closed its output".into())),
                    Err(e) => Err(e),
                };
                let stop = msg.is_err();
                if tx.send(msg).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, replies: rx })
    }
}

impl Drop for Subprocess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One connection to a backend; requests are serialized through it.
pub struct BridgeClient {
    cfg: BridgeConfig,
    process: Mutex<Option<Subprocess>>,
    counter: AtomicU64,
}

impl std::fmt::Debug for BridgeClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeClient").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl BridgeClient {
    pub fn connect(cfg: BridgeConfig) -> Result<Self> {
        cfg.validate()?;
        let process = match &cfg.transport {
            BridgeTransport::StdioSubprocess { program, args } => Some(Subprocess::spawn(program, args)?),
            BridgeTransport::DirectoryHandoff { dir } => {
                if !dir.is_dir() {
                    return Err(Error::invalid(format!("bridge directory {} does not exist", dir.display())));
                }
                None
            }
        };
        Ok(Self {
            cfg,
            process: Mutex::new(process),
            counter: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &BridgeConfig {
        &self.cfg
    }

    /// Sends one request and waits for the matching reply.
    pub fn request(&self, req: &Request) -> Result<Tensor> {
        let bytes = protocol::encode_request(req)?;
        let reply = match &self.cfg.transport {
            BridgeTransport::StdioSubprocess { program, args } => self.via_stdio(program, args, &bytes)?,
            BridgeTransport::DirectoryHandoff { dir } => self.via_directory(dir, &bytes)?,
        };
        if reply.status != STATUS_OK {
            return Err(Error::Backend(format!("backend returned status {}", reply.status)));
        }
        Ok(reply.tensor)
    }

    fn via_stdio(&self, program: &PathBuf, args: &[String], bytes: &[u8]) -> Result<Reply> {
        let mut guard = self.process.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(Subprocess::spawn(program, args)?);
        }
        let proc = guard.as_mut().expect("spawned above");
        let sent = proc.stdin.write_all(bytes).and_then(|_| proc.stdin.flush());
        if let Err(e) = sent {
            *guard = None;
            return Err(Error::Backend(format!("failed to send request: {e}")));
        }
        match proc.replies.recv_timeout(self.cfg.timeout()) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => {
                *guard = None;
                Err(e)
            }
            Err(RecvTimeoutError::Timeout) => {
                // The stream position is unknown after a timeout; start over.
                *guard = None;
                Err(Error::BridgeTimeout(self.cfg.timeout()))
            }
            Err(RecvTimeoutError::Disconnected) => {
                *guard = None;
                Err(Error::Backend("backend reader stopped".into()))
            }
        }
    }

    fn via_directory(&self, dir: &std::path::Path, bytes: &[u8]) -> Result<Reply> {
        let id = format!("{}_{:08}", std::process::id(), self.counter.fetch_add(1, Ordering::Relaxed));
        let tmp = dir.join(format!(".req_{id}.bin.tmp"));
        let req_path = dir.join(format!("req_{id}.bin"));
        let rep_path = dir.join(format!("rep_{id}.bin"));
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, &req_path)?;

        let deadline = Instant::now() + self.cfg.timeout();
        loop {
            if rep_path.exists() {
                // A backend writing in place may not be done yet; retry truncated reads.
                let data = std::fs::read(&rep_path)?;
                match protocol::decode_reply(&data) {
                    Ok(reply) => {
                        let _ = std::fs::remove_file(&rep_path);
                        let _ = std::fs::remove_file(&req_path);
                        return Ok(reply);
                    }
                    Err(Error::Protocol(msg)) if msg.contains("truncated") && Instant::now() < deadline => {}
                    Err(e) => {
                        let _ = std::fs::remove_file(&rep_path);
                        let _ = std::fs::remove_file(&req_path);
                        return Err(e);
                    }
                }
            }
            if Instant::now() >= deadline {
                let _ = std::fs::remove_file(&req_path);
                return Err(Error::BridgeTimeout(self.cfg.timeout()));
            }
            thread::sleep(Duration::from_millis(5));
        }
    }
}

/// Queries the backend for an epsilon prediction, checking that the reply
/// has the shape of `x_t` and only finite values.
pub fn bridge_predict(
    client: &BridgeClient,
    kind: RequestKind,
    x_t: &Image,
    t: usize,
    conditions: &[Tensor],
) -> Result<Image> {
    let mut tensors = Vec::with_capacity(conditions.len() + 1);
    tensors.push(Tensor::from_image(x_t));
    tensors.extend_from_slice(conditions);
    let reply = client.request(&Request { kind, t: t as u32, tensors })?;
    let expected = (x_t.height() as u32, x_t.width() as u32, x_t.channels() as u32);
    if reply.shape() != expected {
        return Err(Error::Protocol(format!("reply shape {:?}, expected {expected:?}", reply.shape())));
    }
    if reply.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Backend("backend returned non-finite values".into()));
    }
    reply.to_image(Domain::Sampling)
}

/// Perceptual loss and its gradient with respect to `render`, computed by the
/// backend.
pub fn bridge_lpips(client: &BridgeClient, render: &Image, target: &Image) -> Result<(f64, Image)> {
    render.ensure_same_shape(target, "bridge perceptual loss")?;
    let req = Request {
        kind: RequestKind::Lpips,
        t: 0,
        tensors: vec![Tensor::from_image(render), Tensor::from_image(target)],
    };
    let reply = client.request(&req)?;
    let n = render.data().len();
    if reply.shape() != (1, 1 + n as u32, 1) {
        return Err(Error::Protocol(format!("perceptual reply shape {:?}", reply.shape())));
    }
    if reply.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Backend("backend returned non-finite values".into()));
    }
    let grad = Image::from_vec(
        render.width(),
        render.height(),
        render.channels(),
        render.domain(),
        reply.data[1..].iter().map(|&v| v as f64).collect(),
    )?;
    Ok((reply.data[0] as f64, grad))
}

/// A bridge bound to one target view and its condition images.
pub struct BridgePredictor {
    pub(crate) client: std::sync::Arc<BridgeClient>,
    pub(crate) kind: RequestKind,
    pub(crate) conditions: Vec<Tensor>,
}

impl super::NoisePredictor for BridgePredictor {
    fn predict(&self, x_t: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
        sched.check_t(t)?;
        bridge_predict(&self.client, self.kind, x_t, t, &self.conditions)
    }
}
