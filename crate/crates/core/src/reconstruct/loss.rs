use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::priors::{bridge_lpips, BridgeClient};

/// Perceptual term of the composite loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perceptual {
    /// Mean L1 over a 3-level half-resolution pyramid.
    #[default]
    MultiscaleL1,
    /// Delegated to a bridge backend.
    BridgeLpips,
    None,
}

impl Perceptual {
    pub fn label(self) -> &'static str {
        match self {
            Perceptual::MultiscaleL1 => "multiscale-l1",
            Perceptual::BridgeLpips => "lpips",
            Perceptual::None => "none",
        }
    }
}

pub const PYRAMID_LEVELS: usize = 3;

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_mask(img: &Image, mask: Option<&Image>) -> Result<()> {
    if let Some(m) = mask {
        if m.channels() != 1 || m.width() != img.width() || m.height() != img.height() {
            return Err(Error::invalid("loss mask must be single-channel and match the image size"));
        }
    }
    Ok(())
}

fn weight_at(mask: Option<&Image>, pixel: usize) -> f64 {
    mask.map_or(1.0, |m| m.data()[pixel])
}

// Weighted mean absolute error and its gradient; an all-zero weight gives zero.
fn l1(render: &Image, target: &Image, mask: Option<&Image>) -> (f64, Image) {
    let c = render.channels();
    let total: f64 = match mask {
        Some(m) => m.data().iter().sum::<f64>() * c as f64,
        None => render.data().len() as f64,
    };
    let mut grad = render.filled_like(0.0);
    if total <= 0.0 {
        return (0.0, grad);
    }
    let mut loss = 0.0;
    for (i, ((r, t), g)) in render.data().iter().zip(target.data()).zip(grad.data_mut()).enumerate() {
        let w = weight_at(mask, i / c);
        loss += w * (r - t).abs();
        *g = w * sign(r - t) / total;
    }
    (loss / total, grad)
}

// Adjoint of `Image::downsample2` for an image of the given size.
fn upsample2_adjoint(g: &Image, width: usize, height: usize) -> Image {
    let mut out = Image::zeros(width, height, g.channels(), g.domain());
    for y in 0..g.height() {
        for x in 0..g.width() {
            for c in 0..g.channels() {
                let v = 0.25 * g.get(x, y, c);
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    out.set(2 * x + dx, 2 * y + dy, c, v);
                }
            }
        }
    }
    out
}

pub(crate) fn multiscale_l1(render: &Image, target: &Image, mask: Option<&Image>) -> (f64, Image) {
    let mut r = render.clone();
    let mut t = target.clone();
    let mut m = mask.cloned();
    let mut sizes = Vec::new();
    let mut level_grads = Vec::new();
    let mut loss = 0.0;
    for _ in 0..PYRAMID_LEVELS {
        if r.width() < 2 || r.height() < 2 {
            break;
        }
        sizes.push((r.width(), r.height()));
        r = r.downsample2();
        t = t.downsample2();
        m = m.map(|m| m.downsample2());
        let (l, g) = l1(&r, &t, m.as_ref());
        loss += l;
        level_grads.push(g);
    }
    let n = level_grads.len();
    if n == 0 {
        return (0.0, render.filled_like(0.0));
    }
    // Fold gradients back up from the coarsest level.
    let mut acc: Option<Image> = None;
    for (g, &(w, h)) in level_grads.iter().zip(&sizes).rev() {
        let here = match acc {
            Some(a) => g.zip_map(&a, |x, y| x + y).expect("same level size"),
            None => g.clone(),
        };
        acc = Some(upsample2_adjoint(&here, w, h));
    }
    let scale = 1.0 / n as f64;
    (loss * scale, acc.expect("at least one level").map(|v| v * scale))
}

/// `L1(render, target)` over the mask plus `lambda` times the perceptual
/// term, with the gradient of the total with respect to `render`.
///
/// The mask weights pixels (all channels); `None` means full frame.
pub fn composite_loss(
    render: &Image,
    target: &Image,
    mask: Option<&Image>,
    lambda: f64,
    perceptual: Perceptual,
    bridge: Option<&BridgeClient>,
) -> Result<(f64, Image)> {
    render.ensure_same_shape(target, "composite_loss")?;
    check_mask(render, mask)?;
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    let (mut loss, mut grad) = l1(render, target, mask);
    if lambda == 0.0 {
        return Ok((loss, grad));
    }
    let (p, pg) = match perceptual {
        Perceptual::None => return Ok((loss, grad)),
        Perceptual::MultiscaleL1 => multiscale_l1(render, target, mask),
        Perceptual::BridgeLpips => {
            let client = bridge.ok_or_else(|| Error::invalid("bridge-lpips needs a configured bridge"))?;
            bridge_lpips(client, render, target)?
        }
    };
    loss += lambda * p;
    for (g, d) in grad.data_mut().iter_mut().zip(pg.data()) {
        *g += lambda * d;
    }
    Ok((loss, grad))
}

/// Mean squared error over masked pixels, with its gradient.
pub fn masked_mse(render: &Image, target: &Image, mask: Option<&Image>) -> Result<(f64, Image)> {
    render.ensure_same_shape(target, "masked_mse")?;
    check_mask(render, mask)?;
    let c = render.channels();
    let total = match mask {
        Some(m) => m.data().iter().sum::<f64>() * c as f64,
        None => render.data().len() as f64,
    };
    let mut grad = render.filled_like(0.0);
    if total <= 0.0 {
        return Ok((0.0, grad));
    }
    let mut loss = 0.0;
    for (i, ((r, t), g)) in render.data().iter().zip(target.data()).zip(grad.data_mut()).enumerate() {
        let w = weight_at(mask, i / c);
        loss += w * (r - t) * (r - t);
        *g = 2.0 * w * (r - t) / total;
    }
    Ok((loss / total, grad))
}
