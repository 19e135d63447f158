//! Binary cloud format and PLY export.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::gaussian::{Gaussian3D, GaussianCloud, Params, PARAM_COUNT};

const MAGIC: &[u8; 4] = b"ZP3G";
const VERSION: u32 = 1;

pub fn write_cloud<W: Write>(cloud: &GaussianCloud, mut w: W) -> Result<()> {
    let count = u32::try_from(cloud.len()).map_err(|_| Error::invalid("cloud too large to serialize"))?;
    let mut buf = Vec::with_capacity(12 + cloud.len() * PARAM_COUNT * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    for g in &cloud.gaussians {
        for v in g.to_params() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_cloud<R: Read>(mut r: R) -> Result<GaussianCloud> {
    let mut header = [0u8; 12];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(Error::Protocol("not a ZP3G cloud file".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Protocol(format!("unsupported cloud version {version}")));
    }
    let count = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != count * PARAM_COUNT * 4 {
        return Err(Error::Protocol(format!(
            "cloud body has {} bytes, expected {}",
            body.len(),
            count * PARAM_COUNT * 4
        )));
    }
    let gaussians = body
        .chunks_exact(PARAM_COUNT * 4)
        .map(|chunk| {
            let mut p: Params = [0.0; PARAM_COUNT];
            for (v, b) in p.iter_mut().zip(chunk.chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().unwrap()) as f64;
            }
            Gaussian3D::from_params(&p)
        })
        .collect();
    Ok(GaussianCloud::new(gaussians))
}

pub fn save_cloud(cloud: &GaussianCloud, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    write_cloud(cloud, &mut bytes)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_cloud(path: &Path) -> Result<GaussianCloud> {
    let bytes = std::fs::read(path)?;
    read_cloud(bytes.as_slice())
}

/// Binary little-endian PLY in the layout common 3DGS viewers expect:
/// `f_dc_*` then `f_rest_*` grouped by channel, logit opacity, log scales and
/// a `(w, x, y, z)` quaternion.
pub fn write_ply<W: Write>(cloud: &GaussianCloud, mut w: W) -> Result<()> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header += &format!("element vertex {}\n", cloud.len());
    let mut props: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    props.extend((0..24).map(|i| format!("f_rest_{i}")));
    props.push("opacity".into());
    props.extend((0..3).map(|i| format!("scale_{i}")));
    props.extend((0..4).map(|i| format!("rot_{i}")));
    for p in &props {
        header += &format!("property float {p}\n");
    }
    header += "end_header\n";
    w.write_all(header.as_bytes())?;

    let mut buf = Vec::with_capacity(cloud.len() * props.len() * 4);
    let mut put = |v: f64| buf.extend_from_slice(&(v as f32).to_le_bytes());
    for g in &cloud.gaussians {
        g.position.iter().for_each(|&v| put(v));
        (0..3).for_each(|_| put(0.0));
        g.sh[0].iter().for_each(|&v| put(v));
        for c in 0..3 {
            for k in 1..9 {
                put(g.sh[k][c]);
            }
        }
        put(g.opacity_logit);
        g.log_scale.iter().for_each(|&v| put(v));
        g.rotation.iter().for_each(|&v| put(v));
    }
    w.write_all(&buf)?;
    Ok(())
}
