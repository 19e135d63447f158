//! Image-quality metrics and the visible/invisible evaluation protocol.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::wrap_degrees;
use crate::priors::{bridge_lpips, BridgeClient};
use crate::reconstruct::{multiscale_l1, Observation, Perceptual};
use crate::splat::{render_with, GaussianCloud, RenderOptions};

pub const PSNR_CAP: f64 = 99.0;

fn check_pair(a: &Image, b: &Image, mask: Option<&Image>) -> Result<()> {
    a.ensure_same_shape(b, "metric")?;
    if let Some(m) = mask {
        if m.channels() != 1 || m.width() != a.width() || m.height() != a.height() {
            return Err(Error::invalid("metric mask must be single-channel and match the images"));
        }
    }
    Ok(())
}

/// Peak signal-to-noise ratio for images in `[0, 1]`, over the pixels where
/// `mask > 0.5`; capped at 99 dB.
pub fn psnr(a: &Image, b: &Image, mask: Option<&Image>) -> Result<f64> {
    check_pair(a, b, mask)?;
    let c = a.channels();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        if mask.is_none_or(|m| m.data()[i / c] > 0.5) {
            sum += (x - y) * (x - y);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("psnr mask selects no pixels"));
    }
    let mse = sum / n as f64;
    Ok(if mse <= 0.0 { PSNR_CAP } else { (10.0 * (1.0 / mse).log10()).min(PSNR_CAP) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03 }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size).map(|i| (-((i as f64 - half).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

// SSIM map over window centers fully inside the image; `(x0, y0)` of the
// top-left window and the map dimensions.
fn ssim_map(a: &Image, b: &Image, c: usize, p: &SsimParams) -> (Vec<f64>, usize, usize) {
    let g = gaussian_window(p.window, p.sigma);
    let (w, h) = (a.width(), a.height());
    let (mw, mh) = (w - p.window + 1, h - p.window + 1);
    let (c1, c2) = ((p.k1).powi(2), (p.k2).powi(2));
    let mut out = Vec::with_capacity(mw * mh);
    for y in 0..mh {
        for x in 0..mw {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (j, gy) in g.iter().enumerate() {
                for (i, gx) in g.iter().enumerate() {
                    let wgt = gx * gy;
                    let (va, vb) = (a.get(x + i, y + j, c), b.get(x + i, y + j, c));
                    ma += wgt * va;
                    mb += wgt * vb;
                    saa += wgt * va * va;
                    sbb += wgt * vb * vb;
                    sab += wgt * va * vb;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            out.push(((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)));
        }
    }
    (out, mw, mh)
}

/// Mean structural similarity with a Gaussian window, computed per channel
/// and averaged. With a mask, only windows centered on masked pixels count.
pub fn ssim_with(a: &Image, b: &Image, mask: Option<&Image>, p: &SsimParams) -> Result<f64> {
    check_pair(a, b, mask)?;
    if p.window == 0 || !(p.sigma > 0.0) {
        return Err(Error::invalid("ssim needs a positive window and sigma"));
    }
    if a.width() < p.window || a.height() < p.window {
        return Err(Error::invalid(format!(
            "ssim window {} larger than the {}x{} image",
            p.window,
            a.width(),
            a.height()
        )));
    }
    let half = p.window / 2;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..a.channels() {
        let (map, mw, _) = ssim_map(a, b, c, p);
        for (k, v) in map.iter().enumerate() {
            let (x, y) = (k % mw + half, k / mw + half);
            if mask.is_none_or(|m| m.get(x, y, 0) > 0.5) {
                total += v;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::invalid("ssim mask selects no window centers"));
    }
    Ok(total / count as f64)
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with(a, b, None, &SsimParams::default())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Visible,
    Invisible,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Visible => "visible",
            Region::Invisible => "invisible",
        }
    }
}

/// Visible iff `azimuth` lies in the closed arc from `range.0` to `range.1`
/// (counter-clockwise, wrapping through 360).
pub fn classify_region(azimuth: f64, range: (f64, f64)) -> Region {
    let span = range.1 - range.0;
    let offset = wrap_degrees(azimuth - range.0);
    if span >= 360.0 || offset <= span + 1e-9 || offset >= 360.0 - 1e-9 {
        Region::Visible
    } else {
        Region::Invisible
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub view_id: String,
    pub azimuth: f64,
    pub elevation: f64,
    pub region: Region,
    pub psnr: f64,
    pub ssim: f64,
    pub perceptual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub perceptual: f64,
}

impl Aggregate {
    fn of<'a>(rows: impl Iterator<Item = &'a MetricRow>) -> Self {
        let (mut n, mut p, mut s, mut l) = (0, 0.0, 0.0, 0.0);
        for r in rows {
            n += 1;
            p += r.psnr;
            s += r.ssim;
            l += r.perceptual;
        }
        let d = n as f64;
        if n == 0 {
            return Self { count: 0, psnr: f64::NAN, ssim: f64::NAN, perceptual: f64::NAN };
        }
        Self { count: n, psnr: p / d, ssim: s / d, perceptual: l / d }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Name of the perceptual column.
    pub perceptual_label: String,
    pub masked: bool,
    pub rows: Vec<MetricRow>,
    pub visible: Aggregate,
    pub invisible: Aggregate,
    pub total: Aggregate,
}

impl MetricReport {
    pub fn from_rows(mut rows: Vec<MetricRow>, perceptual_label: &str, masked: bool) -> Self {
        rows.sort_by(|a, b| a.view_id.cmp(&b.view_id));
        Self {
            perceptual_label: perceptual_label.to_string(),
            masked,
            visible: Aggregate::of(rows.iter().filter(|r| r.region == Region::Visible)),
            invisible: Aggregate::of(rows.iter().filter(|r| r.region == Region::Invisible)),
            total: Aggregate::of(rows.iter()),
            rows,
        }
    }

    /// One row per view followed by `mean_visible`, `mean_invisible` and
    /// `mean_total`.
    pub fn to_csv(&self) -> String {
        let mut s = format!("view,azimuth,elevation,region,psnr,ssim,{}\n", self.perceptual_label);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6},{:.6}",
                r.view_id,
                r.azimuth,
                r.elevation,
                r.region.as_str(),
                r.psnr,
                r.ssim,
                r.perceptual
            );
        }
        for (name, a) in [("visible", &self.visible), ("invisible", &self.invisible), ("total", &self.total)] {
            let _ = writeln!(s, "mean_{name},,,{name},{:.6},{:.6},{:.6}", a.psnr, a.ssim, a.perceptual);
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let label = &self.perceptual_label;
        let _ = writeln!(
            s,
            "{:<24} {:>8} {:>6} {:<9} {:>8} {:>7} {:>14}",
            "view", "azimuth", "elev", "region", "psnr", "ssim", label
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<24} {:>8.1} {:>6.1} {:<9} {:>8.3} {:>7.4} {:>14.5}",
                r.view_id,
                r.azimuth,
                r.elevation,
                r.region.as_str(),
                r.psnr,
                r.ssim,
                r.perceptual
            );
        }
        for (name, a) in [("visible", &self.visible), ("invisible", &self.invisible), ("total", &self.total)] {
            let _ = writeln!(
                s,
                "{:<24} {:>8} {:>6} {:<9} {:>8.3} {:>7.4} {:>14.5}",
                format!("mean ({} views)", a.count),
                "",
                "",
                name,
                a.psnr,
                a.ssim,
                a.perceptual
            );
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// Score every pixel instead of the foreground mask only.
    pub full_frame: bool,
    pub background: [f64; 3],
    pub render: RenderOptions,
    pub ssim: SsimParams,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { full_frame: false, background: [1.0; 3], render: RenderOptions::default(), ssim: SsimParams::default() }
    }
}

/// Renders every ground-truth view and scores it. Views are named by index.
pub fn evaluate(
    cloud: &GaussianCloud,
    ground_truth: &[Observation],
    observed_range: (f64, f64),
    opts: &EvalOptions,
) -> Result<MetricReport> {
    let named: Vec<(String, &Observation)> =
        ground_truth.iter().enumerate().map(|(i, o)| (format!("view_{i:03}"), o)).collect();
    evaluate_named(cloud, &named, observed_range, opts, None)
}

/// As [`evaluate`] with explicit view ids; the perceptual column uses the
/// bridge when one is given.
pub fn evaluate_named(
    cloud: &GaussianCloud,
    ground_truth: &[(String, &Observation)],
    observed_range: (f64, f64),
    opts: &EvalOptions,
    bridge: Option<&BridgeClient>,
) -> Result<MetricReport> {
    if ground_truth.is_empty() {
        return Err(Error::invalid("evaluation needs at least one ground-truth view"));
    }
    let rows = ground_truth
        .par_iter()
        .map(|(id, o)| {
            let out = render_with(cloud, &o.camera, o.width(), o.height(), &opts.render)?;
            let img = out.color.composite_over(&out.alpha, opts.background)?.clamped(0.0, 1.0);
            let mask = (!opts.full_frame).then_some(&o.mask);
            let perceptual = match bridge {
                Some(client) => bridge_lpips(client, &img, &o.image)?.0,
                None => multiscale_l1(&img, &o.image, mask).0,
            };
            Ok(MetricRow {
                view_id: id.clone(),
                azimuth: o.view_spec.azimuth,
                elevation: o.view_spec.elevation,
                region: classify_region(o.view_spec.azimuth, observed_range),
                psnr: psnr(&img, &o.image, mask)?,
                ssim: ssim_with(&img, &o.image, mask, &opts.ssim)?,
                perceptual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let label = if bridge.is_some() { Perceptual::BridgeLpips } else { Perceptual::MultiscaleL1 }.label();
    Ok(MetricReport::from_rows(rows, label, !opts.full_frame))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Domain;

    fn img(w: usize, h: usize, v: f64) -> Image {
        Image::filled(w, h, 3, Domain::Pixel, v)
    }

    fn checkerboard(n: usize) -> Image {
        let mut out = img(n, n, 0.0);
        for y in 0..n {
            for x in 0..n {
                for c in 0..3 {
                    out.set(x, y, c, ((x / 2 + y / 2) % 2) as f64);
                }
            }
        }
        out
    }

    #[test]
    fn psnr_values() {
        let a = img(4, 4, 0.5);
        assert_eq!(psnr(&a, &a, None).unwrap(), 99.0);
        assert!((psnr(&a, &img(4, 4, 0.6), None).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&img(4, 4, 0.0), &img(4, 4, 1.0), None).unwrap().abs() < 1e-12);
    }

    #[test]
    fn psnr_mask() {
        let a = img(4, 4, 0.5);
        let mut b = img(4, 4, 0.6);
        let mut mask = Image::zeros(4, 4, 1, Domain::Pixel);
        assert!(psnr(&a, &b, Some(&mask)).is_err());
        mask.set(1, 1, 0, 1.0);
        b.set(0, 0, 0, 0.0);
        assert!((psnr(&a, &b, Some(&mask)).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &img(4, 3, 0.5), None).is_err());
    }

    #[test]
    fn ssim_values() {
        let a = checkerboard(16);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let inv = a.map(|v| 1.0 - v);
        assert!(ssim(&a, &inv).unwrap() < 0.2);
        assert!((ssim(&img(12, 12, 0.3), &img(12, 12, 0.3)).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim(&img(10, 16, 0.3), &img(10, 16, 0.3)).is_err());
    }

    #[test]
    fn ssim_is_symmetric() {
        let a = checkerboard(14);
        let b = a.map(|v| 0.3 + 0.5 * v * v);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn regions() {
        assert_eq!(classify_region(45.0, (0.0, 90.0)), Region::Visible);
        assert_eq!(classify_region(90.0, (0.0, 90.0)), Region::Visible);
        assert_eq!(classify_region(180.0, (0.0, 90.0)), Region::Invisible);
        assert_eq!(classify_region(350.0, (-30.0, 30.0)), Region::Visible);
        assert_eq!(classify_region(40.0, (-30.0, 30.0)), Region::Invisible);
        assert_eq!(classify_region(200.0, (0.0, 360.0)), Region::Visible);
    }

    #[test]
    fn aggregates_and_csv() {
        let row = |id: &str, region, p| MetricRow {
            view_id: id.into(),
            azimuth: 0.0,
            elevation: 0.0,
            region,
            psnr: p,
            ssim: 1.0,
            perceptual: 0.0,
        };
        let r = MetricReport::from_rows(
            vec![row("b", Region::Invisible, 10.0), row("a", Region::Visible, 20.0), row("c", Region::Invisible, 14.0)],
            "multiscale-l1",
            true,
        );
        assert_eq!(r.rows[0].view_id, "a");
        assert_eq!(r.visible.psnr, 20.0);
        assert_eq!(r.invisible.psnr, 12.0);
        let weighted = (r.visible.psnr * 1.0 + r.invisible.psnr * 2.0) / 3.0;
        assert!((r.total.psnr - weighted).abs() < 1e-12);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3 + 3);
        assert!(csv.starts_with("view,azimuth,elevation,region,psnr,ssim,multiscale-l1\n"));
        assert!(r.to_table().contains("invisible"));
    }

    #[test]
    fn empty_ground_truth_rejected() {
        let cloud = GaussianCloud::default();
        assert!(evaluate(&cloud, &[], (0.0, 90.0), &EvalOptions::default()).is_err());
    }
}
