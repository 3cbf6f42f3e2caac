//! Training objective: weighted prediction errors, supervised depth L1, and
//! an image-gated depth smoothness term.

use crate::error::{Error, Result};
use crate::pcnet::StepOutput;
use crate::tensor::{Graph, Scalar, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    /// One weight per block, bottom to top.
    pub levels: Vec<f64>,
    /// One weight per time step; the first must be 0.
    pub timesteps: Vec<f64>,
    pub depth: f64,
    pub smoothness: f64,
    /// Depth targets lag the frames by one step.
    pub depth_delay: bool,
}

impl LossWeights {
    /// Defaults for a sequence of `steps` frames.
    pub fn standard(steps: usize) -> Self {
        let mut timesteps = vec![1.0; steps];
        if let Some(first) = timesteps.first_mut() {
            *first = 0.0;
        }
        Self {
            levels: vec![1.0, 0.1, 0.1, 0.1, 0.1, 0.0],
            timesteps,
            depth: 1.0,
            smoothness: 0.5,
            depth_delay: false,
        }
    }

    /// Only the prediction-error terms.
    pub fn prednet_only(steps: usize) -> Self {
        Self {
            depth: 0.0,
            smoothness: 0.0,
            ..Self::standard(steps)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .levels
            .iter()
            .chain(&self.timesteps)
            .chain([&self.depth, &self.smoothness]);
        for &v in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss weights must be finite and >= 0, got {v}")));
            }
        }
        if self.timesteps.first().is_some_and(|&w| w != 0.0) {
            return Err(Error::Config("the first time step must have weight 0".into()));
        }
        Ok(())
    }
}

/// Per-step depth targets for frame-aligned ground truth. With `delay`,
/// step `t` targets frame `t - 1` and step 0 has no target.
pub fn align_depth_targets<T: Scalar>(gt: &[Tensor<T>], delay: bool) -> Vec<Option<Tensor<T>>> {
    if delay {
        std::iter::once(None)
            .chain(gt.iter().take(gt.len().saturating_sub(1)).cloned().map(Some))
            .collect()
    } else {
        gt.iter().cloned().map(Some).collect()
    }
}

/// Mean over pixels of `|dx d| exp(-|dx I|) + |dy d| exp(-|dy I|)` with
/// image differences averaged over channels. `d` is `[N,1,H,W]`, `rgb` is
/// `[N,C,H,W]` and carries no gradient.
pub fn smoothness<T: Scalar>(g: &mut Graph<T>, d: Var, rgb: &Tensor<T>) -> Result<Var> {
    let (n, c, h, w) = rgb.dims4()?;
    let ds = g.shape(d).to_vec();
    if ds != [n, 1, h, w] {
        return Err(Error::shape("smoothness", &ds, &[n, 1, h, w]));
    }
    let mut total = None;
    for horizontal in [true, false] {
        let gate = image_gate(rgb, n, c, h, w, horizontal)?;
        let gate = g.constant(gate);
        let dd = g.diff(d, horizontal)?;
        let mag = g.abs(dd)?;
        let gated = g.mul(mag, gate)?;
        let m = g.mean(gated);
        total = Some(match total {
            None => m,
            Some(t) => g.add(t, m)?,
        });
    }
    Ok(total.expect("two directions"))
}

fn image_gate<T: Scalar>(rgb: &Tensor<T>, n: usize, c: usize, h: usize, w: usize, horizontal: bool) -> Result<Tensor<T>> {
    let x = rgb.data();
    let hw = h * w;
    let cs = T::from_usize(c).unwrap();
    let mut out = vec![T::zero(); n * hw];
    for i in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let next = if horizontal && xx + 1 < w {
                    Some(y * w + xx + 1)
                } else if !horizontal && y + 1 < h {
                    Some((y + 1) * w + xx)
                } else {
                    None
                };
                let mut acc = T::zero();
                if let Some(j) = next {
                    for ch in 0..c {
                        let base = (i * c + ch) * hw;
                        acc = acc + (x[base + j] - x[base + y * w + xx]).abs();
                    }
                }
                out[i * hw + y * w + xx] = (-(acc / cs)).exp();
            }
        }
    }
    Tensor::new(&[n, 1, h, w], out)
}

/// Weighted objective over an unrolled sequence.
///
/// `frames[t]` is the input of step `t` (`[N,3F,H,W]`), `depth_targets[t]`
/// the ground truth the step's depth prediction is scored against
/// (`[N,F,H,W]`). With `F > 1` only the newest packed frame contributes to
/// the bottom error, depth and smoothness terms.
pub fn training_loss<T: Scalar>(
    g: &mut Graph<T>,
    outputs: &[StepOutput],
    frames: &[Tensor<T>],
    depth_targets: &[Option<Tensor<T>>],
    w: &LossWeights,
) -> Result<Var> {
    w.validate()?;
    let steps = outputs.len();
    if steps == 0 || frames.len() != steps || w.timesteps.len() < steps {
        return Err(Error::invalid(
            "training_loss",
            format!(
                "{steps} outputs, {} frames, {} time-step weights",
                frames.len(),
                w.timesteps.len()
            ),
        ));
    }
    let needs_depth = w.depth > 0.0 || w.smoothness > 0.0;
    let mut total: Option<Var> = None;
    let mut push = |g: &mut Graph<T>, term: Var, weight: f64| -> Result<()> {
        if weight == 0.0 {
            return Ok(());
        }
        let scaled = g.scale(term, T::from_f64_lossy(weight));
        total = Some(match total {
            None => scaled,
            Some(t) => g.add(t, scaled)?,
        });
        Ok(())
    };

    for (t, out) in outputs.iter().enumerate() {
        let lt = w.timesteps[t];
        if lt == 0.0 {
            continue;
        }
        let (_, packed_ch, _, _) = frames[t].dims4()?;
        let packed = packed_ch / 3;
        for (l, e) in out.errors.iter().enumerate() {
            let (Some(e), Some(&wl)) = (e, w.levels.get(l)) else { continue };
            let e = if l == 0 && packed > 1 {
                newest_error_channels(g, *e, packed)?
            } else {
                *e
            };
            let m = g.mean(e);
            push(g, m, lt * wl)?;
        }
        if !needs_depth {
            continue;
        }
        let depth = out
            .depth
            .ok_or_else(|| Error::invalid("training_loss", "depth terms weighted but network predicts no depth"))?;
        let target = depth_targets
            .get(t)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::invalid("training_loss", format!("missing depth target for weighted step {t}")))?;
        let depth_ch = g.shape(depth)[1];
        let newest = if depth_ch > 1 {
            g.slice_channels(depth, depth_ch - 1, 1)?
        } else {
            depth
        };
        let tgt = if target.shape()[1] > 1 {
            target.channels(target.shape()[1] - 1, 1)?
        } else {
            target.clone()
        };
        if w.depth > 0.0 {
            let tv = g.constant(tgt);
            let diff = g.sub(newest, tv)?;
            let abs = g.abs(diff)?;
            let m = g.mean(abs);
            push(g, m, lt * w.depth)?;
        }
        if w.smoothness > 0.0 {
            let src = if w.depth_delay { t - 1 } else { t };
            let rgb = frames[src].channels(3 * (packed - 1), 3)?;
            let s = smoothness(g, newest, &rgb)?;
            push(g, s, lt * w.smoothness)?;
        }
    }
    match total {
        Some(t) => Ok(t),
        None => {
            let z = g.constant(Tensor::scalar(T::zero()));
            Ok(z)
        }
    }
}

/// Positive and negative error channels belonging to the newest of
/// `packed` frames in a bottom-level error tensor.
fn newest_error_channels<T: Scalar>(g: &mut Graph<T>, e: Var, packed: usize) -> Result<Var> {
    let half = 3 * packed;
    let pos = g.slice_channels(e, half - 3, 3)?;
    let neg = g.slice_channels(e, 2 * half - 3, 3)?;
    g.concat_channels(&[pos, neg])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcnet::{NetConfig, NetMode, PreludeNet};

    fn img(n: usize, c: usize, h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Tensor<f64> {
        let mut d = Vec::new();
        for _ in 0..n * c {
            for y in 0..h {
                for x in 0..w {
                    d.push(f(y, x));
                }
            }
        }
        Tensor::new(&[n, c, h, w], d).unwrap()
    }

    #[test]
    fn smoothness_of_constant_depth_is_zero() {
        let mut g = Graph::new();
        let d = g.param(img(1, 1, 4, 5, |_, _| 3.0));
        let rgb = img(1, 3, 4, 5, |y, x| (y * x) as f64 * 0.1);
        let s = smoothness(&mut g, d, &rgb).unwrap();
        assert_eq!(g.value(s).data(), &[0.0]);
    }

    #[test]
    fn smoothness_of_ramp_on_flat_image() {
        // d = slope * x, gate = 1: |dx d| = slope except the replicated last
        // column, |dy d| = 0, so the mean is slope * (W - 1) / W.
        let (h, w, slope) = (3, 6, 0.7);
        let mut g = Graph::new();
        let d = g.param(img(1, 1, h, w, |_, x| slope * x as f64));
        let rgb = img(1, 3, h, w, |_, _| 0.4);
        let s = smoothness(&mut g, d, &rgb).unwrap();
        let expected = slope * (w - 1) as f64 / w as f64;
        assert!((g.value(s).data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn depth_edge_on_image_edge_scores_lower() {
        let (h, w) = (4, 8);
        let depth = img(1, 1, h, w, |_, x| if x < 4 { 2.0 } else { 9.0 });
        let edged = img(1, 3, h, w, |_, x| if x < 4 { 0.0 } else { 1.0 });
        let flat = img(1, 3, h, w, |_, _| 0.5);
        let mut g = Graph::new();
        let d = g.constant(depth);
        let on_edge = smoothness(&mut g, d, &edged).unwrap();
        let on_flat = smoothness(&mut g, d, &flat).unwrap();
        assert!(g.value(on_edge).data()[0] < g.value(on_flat).data()[0]);
        assert!(smoothness(&mut g, d, &img(1, 3, h, w - 1, |_, _| 0.0)).is_err());
    }

    #[test]
    fn delayed_targets_shift_by_one() {
        let gt: Vec<Tensor<f64>> = (0..3).map(|i| Tensor::full(&[1, 1, 1, 1], i as f64)).collect();
        let aligned = align_depth_targets(&gt, true);
        assert!(aligned[0].is_none());
        assert_eq!(aligned[1].as_ref().unwrap().data(), &[0.0]);
        assert_eq!(aligned[2].as_ref().unwrap().data(), &[1.0]);
        assert_eq!(align_depth_targets(&gt, false).len(), 3);
    }

    fn tiny_net() -> PreludeNet<f64> {
        PreludeNet::new(
            NetConfig {
                mode: NetMode::PreludeNet,
                widths: [2, 3, 4],
                frames: 1,
                kernel: 3,
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn first_step_does_not_contribute() {
        let net = tiny_net();
        let frames = vec![img(1, 3, 8, 8, |y, x| ((y + x) % 3) as f64 / 3.0), img(1, 3, 8, 8, |y, _| y as f64 / 8.0)];
        let gt = vec![Tensor::full(&[1, 1, 8, 8], 5.0), Tensor::full(&[1, 1, 8, 8], 7.0)];
        let loss_for = |frames: &[Tensor<f64>], gt: &[Tensor<f64>]| {
            let mut g = Graph::new();
            let (_, outs) = net.run_sequence(&mut g, frames).unwrap();
            let targets = align_depth_targets(gt, false);
            let l = training_loss(&mut g, &outs, frames, &targets, &LossWeights::standard(2)).unwrap();
            g.value(l).data()[0]
        };
        let base = loss_for(&frames, &gt);
        // Zeroing frame 0's depth target leaves the loss unchanged.
        let gt_zeroed = vec![Tensor::full(&[1, 1, 8, 8], 0.0), gt[1].clone()];
        assert_eq!(base, loss_for(&frames, &gt_zeroed));
        // A missing weighted target is rejected.
        let mut g = Graph::new();
        let (_, outs) = net.run_sequence(&mut g, &frames).unwrap();
        let targets = vec![Some(gt[0].clone()), None];
        assert!(training_loss(&mut g, &outs, &frames, &targets, &LossWeights::standard(2)).is_err());
    }

    #[test]
    fn zero_depth_weights_reduce_to_prediction_error() {
        let net = tiny_net();
        let frames = vec![img(1, 3, 8, 8, |_, x| x as f64 / 8.0); 3];
        let mut g = Graph::new();
        let (_, outs) = net.run_sequence(&mut g, &frames).unwrap();
        let l = training_loss(&mut g, &outs, &frames, &[None, None, None], &LossWeights::prednet_only(3)).unwrap();
        let mut manual = 0.0;
        for o in &outs[1..] {
            for (e, wl) in o.errors.iter().zip(&LossWeights::standard(3).levels) {
                if let Some(e) = e {
                    manual += wl * g.value(*e).mean();
                }
            }
        }
        assert!((g.value(l).data()[0] - manual).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonzero_first_step_weight() {
        let mut w = LossWeights::standard(3);
        w.timesteps[0] = 1.0;
        assert!(w.validate().is_err());
        w.timesteps[0] = 0.0;
        w.depth = -1.0;
        assert!(w.validate().is_err());
    }
}
