//! Tiled front-to-back compositing and its analytic backward pass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Domain, Image};
use crate::math::{self, Vec3};
use crate::views::Camera;

use super::gaussian::{layout, GaussianCloud, Params, PARAM_COUNT};
use super::project::{conic, geometry, geometry_backward};
use super::sh::{sh_backward, sh_eval_masked};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderOptions {
    /// Per-splat contributions below this alpha are skipped.
    pub alpha_min: f64,
    /// Compositing stops before transmittance would fall below this value.
    pub transmittance_min: f64,
    /// Added to the diagonal of every 2D covariance, in squared pixels.
    pub dilation: f64,
    /// Gaussians at or closer than this camera depth are culled.
    pub near: f64,
    pub tile_size: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            alpha_min: 1.0 / 255.0,
            transmittance_min: 1e-4,
            dilation: 0.3,
            near: 0.01,
            tile_size: 16,
        }
    }
}

impl RenderOptions {
    /// No skipping and no early termination, which makes the image a smooth
    /// function of every parameter.
    pub fn smooth() -> Self {
        Self {
            alpha_min: 0.0,
            transmittance_min: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    /// RGB in the pixel domain, over transparent black.
    pub color: Image,
    /// Accumulated opacity, one channel.
    pub alpha: Image,
    /// Expected camera depth of the visible surface, zero where nothing was hit.
    pub depth: Image,
}

#[derive(Clone, Debug)]
struct Prepared {
    index: usize,
    mean: [f64; 2],
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
    live: [bool; 3],
    depth: f64,
    /// Inclusive pixel rectangle `[x0, y0, x1, y1]` the splat can reach.
    rect: Option<[usize; 4]>,
}

/// Forward-pass state reused by [`render_backward`].
#[derive(Clone, Debug)]
pub struct RenderContext {
    width: usize,
    height: usize,
    opts: RenderOptions,
    prepared: Vec<Prepared>,
    tiles: Vec<Vec<u32>>,
    final_t: Vec<f64>,
    n_processed: Vec<u32>,
    gaussian_count: usize,
}

impl RenderContext {
    /// Indices of Gaussians whose footprint reaches at least one pixel.
    pub fn visible(&self) -> Vec<bool> {
        let mut v = vec![false; self.gaussian_count];
        for p in &self.prepared {
            if p.rect.is_some() {
                v[p.index] = true;
            }
        }
        v
    }
}

fn pixel_rect(mean: [f64; 2], cov: [f64; 3], opacity: f64, width: usize, height: usize, opts: &RenderOptions) -> Option<[usize; 4]> {
    let (ex, ey) = if opts.alpha_min > 0.0 {
        if opacity < opts.alpha_min {
            return None;
        }
        let r2 = 2.0 * (opacity / opts.alpha_min).ln();
        let pad = |v: f64| (v * r2).sqrt() * (1.0 + 1e-6) + 1e-6;
        (pad(cov[0]), pad(cov[2]))
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let lo = |m: f64, e: f64| (m - e - 0.5).ceil();
    let hi = |m: f64, e: f64| (m + e - 0.5).floor();
    let (x0, x1) = (lo(mean[0], ex).max(0.0), hi(mean[0], ex).min(width as f64 - 1.0));
    let (y0, y1) = (lo(mean[1], ey).max(0.0), hi(mean[1], ey).min(height as f64 - 1.0));
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some([x0 as usize, y0 as usize, x1 as usize, y1 as usize])
}

fn prepare(cloud: &GaussianCloud, cam: &Camera, width: usize, height: usize, opts: &RenderOptions) -> Vec<Prepared> {
    let center = cam.center();
    let mut prepared: Vec<Prepared> = cloud
        .gaussians
        .par_iter()
        .enumerate()
        .filter_map(|(index, g)| {
            let geo = geometry(g, cam, width, height, opts)?;
            let conic = conic(geo.splat.cov)?;
            let opacity = g.opacity();
            let dir = math::normalize(math::sub(g.position, center));
            let (color, live) = sh_eval_masked(&g.sh, dir);
            Some(Prepared {
                index,
                mean: geo.splat.mean,
                conic,
                opacity,
                color,
                live,
                depth: geo.splat.depth,
                rect: pixel_rect(geo.splat.mean, geo.splat.cov, opacity, width, height, opts),
            })
        })
        .collect();
    prepared.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    prepared
}

#[inline]
fn splat_alpha(p: &Prepared, x: f64, y: f64) -> (f64, f64, f64) {
    let dx = x - p.mean[0];
    let dy = y - p.mean[1];
    let power = -0.5 * (p.conic[0] * dx * dx + 2.0 * p.conic[1] * dx * dy + p.conic[2] * dy * dy);
    (p.opacity * power.exp(), dx, dy)
}

#[derive(Clone, Copy, Default)]
struct PixelResult {
    color: [f64; 3],
    transmittance: f64,
    depth: f64,
    processed: u32,
}

fn composite<'a>(entries: impl Iterator<Item = &'a Prepared>, x: f64, y: f64, opts: &RenderOptions) -> PixelResult {
    let mut out = PixelResult {
        transmittance: 1.0,
        ..PixelResult::default()
    };
    for p in entries {
        let (alpha, _, _) = splat_alpha(p, x, y);
        if alpha < opts.alpha_min {
            out.processed += 1;
            continue;
        }
        let next_t = out.transmittance * (1.0 - alpha);
        if next_t < opts.transmittance_min {
            break;
        }
        let w = alpha * out.transmittance;
        for c in 0..3 {
            out.color[c] += p.color[c] * w;
        }
        out.depth += p.depth * w;
        out.transmittance = next_t;
        out.processed += 1;
    }
    out
}

fn check_size(width: usize, height: usize, opts: &RenderOptions) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("render size must be at least 1x1"));
    }
    if opts.tile_size == 0 {
        return Err(Error::invalid("tile size must be positive"));
    }
    Ok(())
}

fn assemble(width: usize, height: usize, px: impl Iterator<Item = (usize, usize, PixelResult)>) -> RenderOutput {
    let mut color = Image::zeros(width, height, 3, Domain::Pixel);
    let mut alpha = Image::zeros(width, height, 1, Domain::Pixel);
    let mut depth = Image::zeros(width, height, 1, Domain::Pixel);
    for (x, y, r) in px {
        for c in 0..3 {
            color.set(x, y, c, r.color[c]);
        }
        let a = 1.0 - r.transmittance;
        alpha.set(x, y, 0, a);
        depth.set(x, y, 0, if a > 0.0 { r.depth / a } else { 0.0 });
    }
    RenderOutput { color, alpha, depth }
}

/// Renders with default options.
pub fn render(cloud: &GaussianCloud, cam: &Camera, width: usize, height: usize) -> Result<RenderOutput> {
    render_with(cloud, cam, width, height, &RenderOptions::default())
}

pub fn render_with(cloud: &GaussianCloud, cam: &Camera, width: usize, height: usize, opts: &RenderOptions) -> Result<RenderOutput> {
    render_forward(cloud, cam, width, height, opts).map(|(out, _)| out)
}

/// Tiled forward pass, also returning the state needed for gradients.
pub fn render_forward(
    cloud: &GaussianCloud,
    cam: &Camera,
    width: usize,
    height: usize,
    opts: &RenderOptions,
) -> Result<(RenderOutput, RenderContext)> {
    check_size(width, height, opts)?;
    let prepared = prepare(cloud, cam, width, height, opts);
    let ts = opts.tile_size;
    let (tiles_x, tiles_y) = (width.div_ceil(ts), height.div_ceil(ts));
    let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (k, p) in prepared.iter().enumerate() {
        if let Some([x0, y0, x1, y1]) = p.rect {
            for ty in y0 / ts..=y1 / ts {
                for tx in x0 / ts..=x1 / ts {
                    tiles[ty * tiles_x + tx].push(k as u32);
                }
            }
        }
    }

    let per_tile: Vec<Vec<(usize, usize, PixelResult)>> = tiles
        .par_iter()
        .enumerate()
        .map(|(tile, list)| {
            let (tx, ty) = (tile % tiles_x, tile / tiles_x);
            let mut out = Vec::with_capacity(ts * ts);
            for y in ty * ts..((ty + 1) * ts).min(height) {
                for x in tx * ts..((tx + 1) * ts).min(width) {
                    let entries = list.iter().map(|&k| &prepared[k as usize]);
                    out.push((x, y, composite(entries, x as f64 + 0.5, y as f64 + 0.5, opts)));
                }
            }
            out
        })
        .collect();

    let mut final_t = vec![1.0; width * height];
    let mut n_processed = vec![0; width * height];
    for &(x, y, r) in per_tile.iter().flatten() {
        final_t[y * width + x] = r.transmittance;
        n_processed[y * width + x] = r.processed;
    }
    let output = assemble(width, height, per_tile.into_iter().flatten());
    let ctx = RenderContext {
        width,
        height,
        opts: opts.clone(),
        prepared,
        tiles,
        final_t,
        n_processed,
        gaussian_count: cloud.len(),
    };
    Ok((output, ctx))
}

/// Brute-force renderer: every pixel walks the full depth-sorted list with no
/// tiling or footprint culling.
pub fn render_reference(cloud: &GaussianCloud, cam: &Camera, width: usize, height: usize, opts: &RenderOptions) -> Result<RenderOutput> {
    check_size(width, height, opts)?;
    let prepared = prepare(cloud, cam, width, height, opts);
    let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| {
        (x, y, composite(prepared.iter(), x as f64 + 0.5, y as f64 + 0.5, opts))
    });
    Ok(assemble(width, height, pixels))
}

/// Gradients of a scalar loss with respect to every Gaussian.
#[derive(Clone, Debug)]
pub struct RenderGradients {
    /// One entry per Gaussian in the flat parameter layout.
    pub params: Vec<Params>,
    /// Norm of the gradient with respect to the projected center in
    /// normalized device coordinates; the densification statistic.
    pub screen_grad: Vec<f64>,
    /// Whether each Gaussian's footprint reached the image.
    pub visible: Vec<bool>,
}

// dmean(2), dconic(3, full-matrix convention), dopacity, dcolor(3)
const ACC: usize = 9;

/// Backward pass for the color (and optionally alpha) outputs of the forward
/// pass that produced `ctx`.
pub fn render_backward(
    cloud: &GaussianCloud,
    cam: &Camera,
    ctx: &RenderContext,
    d_color: &Image,
    d_alpha: Option<&Image>,
) -> Result<RenderGradients> {
    let (width, height) = (ctx.width, ctx.height);
    if d_color.width() != width || d_color.height() != height || d_color.channels() != 3 {
        return Err(Error::invalid("color gradient does not match the rendered image"));
    }
    if let Some(a) = d_alpha {
        if a.width() != width || a.height() != height || a.channels() != 1 {
            return Err(Error::invalid("alpha gradient does not match the rendered image"));
        }
    }
    if cloud.len() != ctx.gaussian_count {
        return Err(Error::invalid("cloud changed since the forward pass"));
    }
    let opts = &ctx.opts;
    let ts = opts.tile_size;
    let tiles_x = width.div_ceil(ts);

    let per_tile: Vec<Vec<[f64; ACC]>> = ctx
        .tiles
        .par_iter()
        .enumerate()
        .map(|(tile, list)| {
            let mut acc = vec![[0.0; ACC]; list.len()];
            if list.is_empty() {
                return acc;
            }
            let (tx, ty) = (tile % tiles_x, tile / tiles_x);
            let mut replay: Vec<(usize, f64, f64)> = Vec::new();
            for y in ty * ts..((ty + 1) * ts).min(height) {
                for x in tx * ts..((tx + 1) * ts).min(width) {
                    let pix = y * width + x;
                    let g_c = [d_color.get(x, y, 0), d_color.get(x, y, 1), d_color.get(x, y, 2)];
                    let g_a = d_alpha.map_or(0.0, |a| a.get(x, y, 0));
                    if g_c == [0.0; 3] && g_a == 0.0 {
                        continue;
                    }
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    replay.clear();
                    let mut t = 1.0;
                    for (pos, &k) in list[..ctx.n_processed[pix] as usize].iter().enumerate() {
                        let (alpha, _, _) = splat_alpha(&ctx.prepared[k as usize], px, py);
                        if alpha < opts.alpha_min {
                            continue;
                        }
                        replay.push((pos, alpha, t));
                        t *= 1.0 - alpha;
                    }
                    debug_assert!(t == ctx.final_t[pix]);

                    let mut behind = [0.0; 3];
                    let mut behind_a = 0.0;
                    for &(pos, alpha, t) in replay.iter().rev() {
                        let p = &ctx.prepared[list[pos] as usize];
                        let a = &mut acc[pos];
                        let mut d_alpha_k = g_a * t * (1.0 - behind_a);
                        for c in 0..3 {
                            a[6 + c] += g_c[c] * alpha * t;
                            d_alpha_k += g_c[c] * t * (p.color[c] - behind[c]);
                            behind[c] = p.color[c] * alpha + (1.0 - alpha) * behind[c];
                        }
                        behind_a = alpha + (1.0 - alpha) * behind_a;

                        let (_, dx, dy) = splat_alpha(p, px, py);
                        let d_power = d_alpha_k * alpha;
                        a[0] += d_power * (p.conic[0] * dx + p.conic[1] * dy);
                        a[1] += d_power * (p.conic[1] * dx + p.conic[2] * dy);
                        a[2] += d_power * -0.5 * dx * dx;
                        a[3] += d_power * -0.5 * dx * dy;
                        a[4] += d_power * -0.5 * dy * dy;
                        a[5] += d_alpha_k * alpha / p.opacity;
                    }
                }
            }
            acc
        })
        .collect();

    let mut screen = vec![[0.0; ACC]; ctx.prepared.len()];
    for (list, acc) in ctx.tiles.iter().zip(&per_tile) {
        for (&k, a) in list.iter().zip(acc) {
            let s = &mut screen[k as usize];
            for i in 0..ACC {
                s[i] += a[i];
            }
        }
    }

    let center = cam.center();
    let per_gaussian: Vec<(usize, Params, f64)> = ctx
        .prepared
        .par_iter()
        .zip(&screen)
        .filter(|(_, s)| s.iter().any(|v| *v != 0.0))
        .map(|(p, s)| {
            let g = &cloud.gaussians[p.index];
            let geo = geometry(g, cam, width, height, opts).expect("projected in forward pass");
            let q = p.conic;
            let gq = [[s[2], s[3]], [s[3], s[4]]];
            let qm = [[q[0], q[1]], [q[1], q[2]]];
            // dL/dcov = -Q G Q
            let mut d_cov = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    let mut v = 0.0;
                    for a in 0..2 {
                        for b in 0..2 {
                            v += qm[i][a] * gq[a][b] * qm[b][j];
                        }
                    }
                    d_cov[i][j] = -v;
                }
            }
            let d_mean = [s[0], s[1]];
            let (mut d_pos, d_log_scale, d_rot) = geometry_backward(g, cam, &geo, d_mean, d_cov);

            let offset = math::sub(g.position, center);
            let dist = math::norm(offset);
            let dir = math::scale(offset, 1.0 / dist);
            let (d_sh, d_dir) = sh_backward(&g.sh, dir, p.live, [s[6], s[7], s[8]]);
            let radial = math::dot(dir, d_dir);
            let d_pos_dir: Vec3 = std::array::from_fn(|i| (d_dir[i] - dir[i] * radial) / dist);
            d_pos = math::add(d_pos, d_pos_dir);

            let mut out = [0.0; PARAM_COUNT];
            out[layout::POSITION..layout::POSITION + 3].copy_from_slice(&d_pos);
            out[layout::LOG_SCALE..layout::LOG_SCALE + 3].copy_from_slice(&d_log_scale);
            out[layout::ROTATION..layout::ROTATION + 4].copy_from_slice(&d_rot);
            out[layout::OPACITY] = s[5] * p.opacity * (1.0 - p.opacity);
            for (k, coeff) in d_sh.iter().enumerate() {
                out[layout::SH + 3 * k..layout::SH + 3 * k + 3].copy_from_slice(coeff);
            }
            let ndc = [s[0] * 0.5 * width as f64, s[1] * 0.5 * height as f64];
            (p.index, out, (ndc[0] * ndc[0] + ndc[1] * ndc[1]).sqrt())
        })
        .collect();

    let mut params = vec![[0.0; PARAM_COUNT]; cloud.len()];
    let mut screen_grad = vec![0.0; cloud.len()];
    for (i, g, s) in per_gaussian {
        params[i] = g;
        screen_grad[i] = s;
    }
    Ok(RenderGradients {
        params,
        screen_grad,
        visible: ctx.visible(),
    })
}
