//! Minimal bridge backend used for testing.
//!
//! Usage: `zp3-echo-backend [--mode echo|zero|bad-dims|nan|silent] [--dir DIR]`
//!
//! Without `--dir` it serves requests on stdin/stdout; with `--dir` it polls
//! the directory for request files. Perceptual requests get a mean absolute
//! difference and its sign gradient.

use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use zp3_core::priors::protocol::{
    decode_request, encode_reply, read_request, write_reply, Reply, Request, RequestKind, Tensor, STATUS_OK,
};

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Echo,
    Zero,
    BadDims,
    Nan,
    Silent,
}

fn respond(mode: Mode, req: &Request) -> Option<Reply> {
    let x = &req.tensors[0];
    let tensor = match (mode, req.kind) {
        (Mode::Silent, _) => return None,
        (_, RequestKind::Lpips) if req.tensors.len() == 2 => {
            let (a, b) = (&req.tensors[0].data, &req.tensors[1].data);
            let n = a.len() as f32;
            let mut data = vec![a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f32>() / n];
            data.extend(a.iter().zip(b).map(|(p, q)| (p - q).signum() / n));
            Tensor::new(1, data.len() as u32, 1, data).ok()?
        }
        (Mode::BadDims, _) => Tensor::new(1, 1, 1, vec![0.0]).ok()?,
        (Mode::Nan, _) => Tensor { data: vec![f32::NAN; x.data.len()], ..x.clone() },
        (Mode::Zero, _) => Tensor { data: vec![0.0; x.data.len()], ..x.clone() },
        (Mode::Echo, _) => x.clone(),
    };
    Some(Reply { status: STATUS_OK, tensor })
}

fn serve_stdio(mode: Mode) -> io::Result<()> {
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());
    loop {
        let req = match read_request(&mut input) {
            Ok(Some(req)) => req,
            Ok(None) => return Ok(()),
            Err(e) => {
                eprintln!("zp3-echo-backend: {e}");
                return Ok(());
            }
        };
        match respond(mode, &req) {
            Some(reply) => {
                write_reply(&mut output, &reply)?;
                output.flush()?;
            }
            None => std::thread::sleep(Duration::from_secs(3600)),
        }
    }
}

fn serve_dir(mode: Mode, dir: &Path) -> io::Result<()> {
    loop {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
            let Some(id) = name.strip_prefix("req_") else { continue };
            let rep = dir.join(format!("rep_{id}"));
            if rep.exists() {
                continue;
            }
            let Ok(bytes) = std::fs::read(&path) else { continue };
            let Ok(req) = decode_request(&bytes) else { continue };
            if let Some(reply) = respond(mode, &req) {
                let tmp = dir.join(format!(".rep_{id}.tmp"));
                std::fs::write(&tmp, encode_reply(&reply))?;
                std::fs::rename(&tmp, &rep)?;
            }
        }
        std::thread::sleep(Duration::from_millis(2));
    }
}

fn main() {
    let mut mode = Mode::Echo;
    let mut dir: Option<PathBuf> = None;
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        match (arg.as_str(), args.next()) {
            ("--mode", Some(m)) => {
                mode = match m.as_str() {
                    "echo" => Mode::Echo,
                    "zero" => Mode::Zero,
                    "bad-dims" => Mode::BadDims,
                    "nan" => Mode::Nan,
                    "silent" => Mode::Silent,
                    other => {
                        eprintln!("unknown mode {other}");
                        std::process::exit(2);
                    }
                }
            }
            ("--dir", Some(d)) => dir = Some(d.into()),
            _ => {
                eprintln!("usage: zp3-echo-backend [--mode MODE] [--dir DIR]");
                std::process::exit(2);
            }
        }
    }
    let result = match dir {
        Some(d) => serve_dir(mode, &d),
        None => serve_stdio(mode),
    };
    if let Err(e) = result {
        eprintln!("zp3-echo-backend: {e}");
        std::process::exit(1);
    }
}
