//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every function returns an RGBA byte buffer of `width * height * 4`
//! bytes, ready for `ImageData`.

use wasm_bindgen::prelude::*;

use preludenet::pcnet::error_unit;
use preludenet::scenegen::{self, Camera, LightingMode, RenderedFrame, SceneConfig, FAR_PLANE};
use preludenet::tensor::{Graph, Tensor};

fn js_err(e: preludenet::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn render(seed: u64, mode: &str, level: u32, frame: usize, width: usize, height: usize) -> Result<RenderedFrame, JsError> {
    let mode: LightingMode = mode.parse().map_err(js_err)?;
    let lighting = scenegen::lighting_from_level(mode, level).map_err(js_err)?;
    let camera = Camera::new(width, height).map_err(js_err)?;
    let scene = scenegen::generate_scene(seed, &SceneConfig::default()).map_err(js_err)?;
    let pose = scene
        .trajectory
        .get(frame)
        .ok_or_else(|| JsError::new(&format!("frame {frame} outside 0..{}", scene.trajectory.len())))?;
    scenegen::render_frame(&scene, pose, &lighting, &camera).map_err(js_err)
}

fn rgba(rgb: &Tensor<f32>) -> Vec<u8> {
    let plane = rgb.numel() / 3;
    let d = rgb.data();
    let mut out = Vec::with_capacity(plane * 4);
    for p in 0..plane {
        for c in 0..3 {
            out.push((d[c * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        out.push(255);
    }
    out
}

/// Frames per generated world.
#[wasm_bindgen]
pub fn frame_count() -> usize {
    SceneConfig::default().frames
}

/// The lit RGB frame of world `seed` at lighting `level` (1 to 10).
#[wasm_bindgen]
pub fn render_scene(seed: u64, mode: &str, level: u32, frame: usize, width: usize, height: usize) -> Result<Vec<u8>, JsError> {
    Ok(rgba(&render(seed, mode, level, frame, width, height)?.rgb))
}

/// Inverse-depth colormap: near is warm, far (and sky) is dark.
#[wasm_bindgen]
pub fn render_depth(seed: u64, frame: usize, width: usize, height: usize) -> Result<Vec<u8>, JsError> {
    let depth = render(seed, "illumination", 5, frame, width, height)?.depth;
    Ok(depth_colormap(depth.data()))
}

pub fn depth_colormap(depth: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(depth.len() * 4);
    for &d in depth {
        // 1/d mapped so the 1 m floor of the visible range is fully bright.
        let x = (1.0 / d.max(1.0)).clamp(0.0, 1.0) - 1.0 / FAR_PLANE as f32;
        let x = (x / (1.0 - 1.0 / FAR_PLANE as f32)).sqrt();
        let r = (1.5 * x).min(1.0);
        let g = (1.5 * x - 0.4).clamp(0.0, 1.0);
        let b = (0.4 - x).max(0.0) + 0.6 * (x - 0.7).max(0.0);
        for v in [r, g, b] {
            out.push((v * 255.0).round() as u8);
        }
        out.push(255);
    }
    out
}

/// Error-unit response to frame `frame` given frame `frame - 1` as the
/// prediction: red where the image got brighter, blue where it got darker,
/// averaged over colour channels and scaled by `gain`.
#[wasm_bindgen]
pub fn error_map(
    seed: u64,
    mode: &str,
    level: u32,
    frame: usize,
    width: usize,
    height: usize,
    gain: f32,
) -> Result<Vec<u8>, JsError> {
    if frame == 0 {
        return Err(JsError::new("frame 0 has no predecessor"));
    }
    let actual = render(seed, mode, level, frame, width, height)?.rgb;
    let previous = render(seed, mode, level, frame - 1, width, height)?.rgb;
    let mut g = Graph::<f32>::new();
    let (a, p) = (g.constant(actual), g.constant(previous));
    let e = error_unit(&mut g, a, p).map_err(js_err)?;
    Ok(error_rgba(g.value(e), gain))
}

/// `[1,6,H,W]` error tensor to RGBA: channels 0..3 (positive half) in red,
/// 3..6 (negative half) in blue.
pub fn error_rgba(e: &Tensor<f32>, gain: f32) -> Vec<u8> {
    let plane = e.numel() / 6;
    let d = e.data();
    let half = |p: usize, base: usize| (0..3).map(|c| d[(base + c) * plane + p]).sum::<f32>() / 3.0;
    let mut out = Vec::with_capacity(plane * 4);
    for p in 0..plane {
        let pos = (half(p, 0) * gain).min(1.0);
        let neg = (half(p, 3) * gain).min(1.0);
        for v in [pos, 0.0, neg] {
            out.push((v * 255.0).round() as u8);
        }
        out.push(255);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffers_have_rgba_size() {
        assert_eq!(render_scene(1, "shadows", 4, 0, 16, 8).unwrap().len(), 16 * 8 * 4);
        assert_eq!(render_depth(1, 2, 16, 8).unwrap().len(), 16 * 8 * 4);
        assert_eq!(error_map(1, "illumination", 4, 3, 16, 8, 4.0).unwrap().len(), 16 * 8 * 4);
    }

    #[test]
    fn colormap_orders_near_brighter_than_far() {
        let px = depth_colormap(&[1.0, 10.0, FAR_PLANE as f32]);
        assert!(px[0] > px[4] && px[4] > px[8]);
        assert_eq!(px[8], 0);
    }

    #[test]
    fn error_colours_follow_sign() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::new(&[1, 3, 1, 2], vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap());
        let p = g.constant(Tensor::new(&[1, 3, 1, 2], vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap());
        let e = error_unit(&mut g, a, p).unwrap();
        assert_eq!(error_rgba(g.value(e), 1.0), vec![255, 0, 0, 255, 0, 0, 255, 255]);
    }
}
