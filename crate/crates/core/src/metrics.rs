//! Depth and next-frame quality metrics.

use crate::error::{Error, Result};
use crate::tensor::{bilinear_resize, Tensor};

/// PSNR reported for a perfect reconstruction.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl DepthMetrics {
    pub const NAMES: [&'static str; 7] = ["abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3"];

    pub fn values(&self) -> [f64; 7] {
        [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
        ]
    }

    /// Arithmetic mean of each field.
    pub fn mean(items: &[DepthMetrics]) -> Option<DepthMetrics> {
        let n = items.len() as f64;
        (!items.is_empty()).then(|| {
            let mut acc = [0.0; 7];
            for m in items {
                for (a, v) in acc.iter_mut().zip(m.values()) {
                    *a += v;
                }
            }
            let [abs_rel, sq_rel, rmse, rmse_log, delta1, delta2, delta3] = acc.map(|v| v / n);
            DepthMetrics {
                abs_rel,
                sq_rel,
                rmse,
                rmse_log,
                delta1,
                delta2,
                delta3,
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthEvalOptions {
    pub min_depth: f64,
    pub max_depth: f64,
    pub median_scaling: bool,
}

impl Default for DepthEvalOptions {
    fn default() -> Self {
        Self {
            min_depth: 0.1,
            max_depth: 80.0,
            median_scaling: true,
        }
    }
}

impl DepthEvalOptions {
    /// Ground truth inside the open interval `(min_depth, max_depth)`; this
    /// drops sky pixels, which sit exactly at the far plane.
    pub fn default_mask(&self, gt: &[f32]) -> Vec<bool> {
        gt.iter()
            .map(|&g| (g as f64) > self.min_depth && (g as f64) < self.max_depth)
            .collect()
    }
}

/// Metrics for one depth map. `pred` is resized bilinearly to the ground
/// truth extents when they differ; both are `[1,1,H,W]`. Without a mask the
/// default validity range is used.
pub fn depth_metrics(
    pred: &Tensor<f32>,
    gt: &Tensor<f32>,
    mask: Option<&[bool]>,
    opts: &DepthEvalOptions,
) -> Result<DepthMetrics> {
    let (_, _, gh, gw) = gt.dims4()?;
    let pred = if pred.shape() != gt.shape() {
        bilinear_resize(pred, gh, gw)?
    } else {
        pred.clone()
    };
    let owned;
    let mask = match mask {
        Some(m) => m,
        None => {
            owned = opts.default_mask(gt.data());
            &owned
        }
    };
    if mask.len() != gt.numel() {
        return Err(Error::invalid(
            "depth_metrics",
            format!("mask has {} entries for {} pixels", mask.len(), gt.numel()),
        ));
    }
    let mut p = Vec::new();
    let mut g = Vec::new();
    for ((&pv, &gv), &m) in pred.data().iter().zip(gt.data()).zip(mask) {
        if m {
            p.push(pv as f64);
            g.push(gv as f64);
        }
    }
    if p.is_empty() {
        return Err(Error::invalid("depth_metrics", "empty validity mask"));
    }
    if p.iter().chain(&g).any(|v| !v.is_finite()) || g.iter().any(|&v| v <= 0.0) {
        return Err(Error::invalid("depth_metrics", "depth values must be finite and ground truth positive"));
    }
    if opts.median_scaling {
        let ratio = median(&g) / median(&p);
        if ratio.is_finite() && ratio > 0.0 {
            p.iter_mut().for_each(|v| *v *= ratio);
        }
    }
    for v in &mut p {
        *v = v.clamp(opts.min_depth, opts.max_depth);
    }
    Ok(raw_depth_metrics(&p, &g))
}

/// The seven error statistics on already scaled and masked pixel lists.
pub fn raw_depth_metrics(p: &[f64], g: &[f64]) -> DepthMetrics {
    let n = p.len() as f64;
    let mut m = DepthMetrics::default();
    let mut sq = 0.0;
    let mut sq_log = 0.0;
    for (&p, &g) in p.iter().zip(g) {
        let d = p - g;
        m.abs_rel += d.abs() / g;
        m.sq_rel += d * d / g;
        sq += d * d;
        let dl = p.ln() - g.ln();
        sq_log += dl * dl;
        let ratio = (p / g).max(g / p);
        m.delta1 += (ratio < 1.25) as u8 as f64;
        m.delta2 += (ratio < 1.25f64.powi(2)) as u8 as f64;
        m.delta3 += (ratio < 1.25f64.powi(3)) as u8 as f64;
    }
    m.abs_rel /= n;
    m.sq_rel /= n;
    m.rmse = (sq / n).sqrt();
    m.rmse_log = (sq_log / n).sqrt();
    m.delta1 /= n;
    m.delta2 /= n;
    m.delta3 /= n;
    m
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    if s.len().is_multiple_of(2) {
        0.5 * (s[mid - 1] + s[mid])
    } else {
        s[mid]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrameMetrics {
    pub model_error: f64,
    pub copy_error: f64,
    pub improvement: f64,
    pub ssim: f64,
    pub psnr: f64,
}

impl FrameMetrics {
    pub const NAMES: [&'static str; 4] = ["model_error", "improvement", "ssim", "psnr"];
}

/// `10 log10(1 / mse)` for unit-range images, capped at [`PSNR_CAP`].
pub fn psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
}

/// Mean SSIM over all 8x8 windows (stride 1) and channels of two `[1,C,H,W]`
/// or `[C,H,W]` images. Windows shrink to the image size for smaller inputs.
pub fn ssim(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape("ssim", a.shape(), b.shape()));
    }
    let (c, h, w) = match a.shape() {
        [1, c, h, w] | [c, h, w] => (*c, *h, *w),
        s => return Err(Error::invalid("ssim", format!("expected one image, got shape {s:?}"))),
    };
    let (wh, ww) = (SSIM_WINDOW.min(h), SSIM_WINDOW.min(w));
    let area = (wh * ww) as f64;
    let (ad, bd) = (a.data(), b.data());
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        let base = ch * h * w;
        for y0 in 0..=h - wh {
            for x0 in 0..=w - ww {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for y in y0..y0 + wh {
                    for x in x0..x0 + ww {
                        let va = ad[base + y * w + x] as f64;
                        let vb = bd[base + y * w + x] as f64;
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                let (ma, mb) = (sa / area, sb / area);
                let va = (saa / area - ma * ma).max(0.0);
                let vb = (sbb / area - mb * mb).max(0.0);
                let cov = sab / area - ma * mb;
                total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Next-frame metrics over sequences of `[1,3,H,W]` images. Step `t` of
/// `preds` is the prediction for `actuals[t]`; the first `max(skip, 1)`
/// steps of every sequence are not scored.
pub fn frame_metrics(preds: &[Vec<Tensor<f32>>], actuals: &[Vec<Tensor<f32>>], skip: usize) -> Result<FrameMetrics> {
    if preds.len() != actuals.len() {
        return Err(Error::invalid(
            "frame_metrics",
            format!("{} predicted vs {} actual sequences", preds.len(), actuals.len()),
        ));
    }
    let skip = skip.max(1);
    let (mut abs_sum, mut copy_sum, mut pixels) = (0.0, 0.0, 0usize);
    let (mut ssim_sum, mut psnr_sum, mut frames) = (0.0, 0.0, 0usize);
    for (ps, xs) in preds.iter().zip(actuals) {
        if ps.len() != xs.len() {
            return Err(Error::invalid(
                "frame_metrics",
                format!("sequence lengths differ: {} predicted vs {} actual", ps.len(), xs.len()),
            ));
        }
        for t in skip..xs.len() {
            let (p, x, prev) = (&ps[t], &xs[t], &xs[t - 1]);
            if p.shape() != x.shape() || prev.shape() != x.shape() {
                return Err(Error::shape("frame_metrics", p.shape(), x.shape()));
            }
            let mut sq = 0.0;
            for ((&pv, &xv), &qv) in p.data().iter().zip(x.data()).zip(prev.data()) {
                let d = (pv - xv) as f64;
                abs_sum += d.abs();
                sq += d * d;
                copy_sum += ((qv - xv) as f64).abs();
            }
            pixels += x.numel();
            psnr_sum += psnr(sq / x.numel() as f64);
            ssim_sum += ssim(p, x)?;
            frames += 1;
        }
    }
    if frames == 0 {
        return Err(Error::invalid("frame_metrics", "no scored steps"));
    }
    let model_error = abs_sum / pixels as f64;
    let copy_error = copy_sum / pixels as f64;
    Ok(FrameMetrics {
        model_error,
        copy_error,
        improvement: copy_error / model_error,
        ssim: ssim_sum / frames as f64,
        psnr: psnr_sum / frames as f64,
    })
}

/// Mean absolute difference between consecutive frames over the steps
/// `max(skip, 1)..` of every sequence.
pub fn copy_last_frame_baseline(sequences: &[Vec<Tensor<f32>>], skip: usize) -> Result<f64> {
    let skip = skip.max(1);
    let (mut sum, mut n) = (0.0, 0usize);
    for seq in sequences {
        for t in skip..seq.len() {
            if seq[t].shape() != seq[t - 1].shape() {
                return Err(Error::shape("copy_last_frame_baseline", seq[t - 1].shape(), seq[t].shape()));
            }
            sum += seq[t]
                .data()
                .iter()
                .zip(seq[t - 1].data())
                .map(|(a, b)| ((a - b) as f64).abs())
                .sum::<f64>();
            n += seq[t].numel();
        }
    }
    if n == 0 {
        return Err(Error::invalid("copy_last_frame_baseline", "sequences need at least two frames"));
    }
    Ok(sum / n as f64)
}
