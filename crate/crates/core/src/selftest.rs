//! Fixed-answer checks of the metrics, file formats, error unit and
//! renderer, runnable from the command line.

use crate::dataio::{decode_checkpoint, decode_pfm, decode_ppm, encode_checkpoint, encode_pfm, encode_ppm};
use crate::error::Result;
use crate::metrics::{depth_metrics, psnr, raw_depth_metrics, ssim, DepthEvalOptions};
use crate::pcnet::error_unit;
use crate::scenegen::{self, vec3, Camera, LightingMode, Pose};
use crate::tensor::{bilinear_resize, Graph, ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        name,
        passed,
        detail: detail.into(),
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn depth_hand_example() -> Result<Outcome> {
    let p = Tensor::new(&[1, 1, 1, 2], vec![2.0, 4.0])?;
    let g = Tensor::new(&[1, 1, 1, 2], vec![1.0, 4.0])?;
    let opts = DepthEvalOptions {
        median_scaling: false,
        ..Default::default()
    };
    let m = depth_metrics(&p, &g, None, &opts)?;
    let want = [0.5, 0.5, 0.5f64.sqrt(), 2f64.ln() / 2f64.sqrt(), 0.5, 0.5, 0.5];
    let ok = m.values().iter().zip(want).all(|(a, b)| close(*a, b, 1e-6));
    Ok(outcome("depth metrics pred=[2,4] gt=[1,4]", ok, format!("{:?}", m.values())))
}

/// Exact threshold oracle on integer depths: `max(p,g)/min(p,g) < (5/4)^k`
/// iff `4^k max < 5^k min`.
pub fn delta_oracle(p: &[u64], g: &[u64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (&p, &g) in p.iter().zip(g) {
        let (hi, lo) = (p.max(g) as u128, p.min(g) as u128);
        for (k, o) in out.iter_mut().enumerate() {
            let e = k as u32 + 1;
            if 4u128.pow(e) * hi < 5u128.pow(e) * lo {
                *o += 1.0;
            }
        }
    }
    out.map(|c| c / p.len() as f64)
}

fn delta_boundaries() -> Result<Outcome> {
    // Exact ratio boundaries 5/4, 25/16 and 125/64, plus points just inside.
    let mut p: Vec<u64> = vec![5, 25, 125, 4, 16, 64, 7, 64];
    let mut g: Vec<u64> = vec![4, 16, 64, 5, 25, 125, 7, 51];
    let mut state = 0x2545_f491_4f6c_dd1du64;
    for _ in 0..500 {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        p.push(1 + state % 200);
        g.push(1 + (state >> 20) % 200);
    }
    let pf: Vec<f64> = p.iter().map(|&v| v as f64).collect();
    let gf: Vec<f64> = g.iter().map(|&v| v as f64).collect();
    let m = raw_depth_metrics(&pf, &gf);
    let want = delta_oracle(&p, &g);
    let got = [m.delta1, m.delta2, m.delta3];
    Ok(outcome(
        "delta thresholds vs exact integer oracle",
        got == want,
        format!("got {got:?}, oracle {want:?}"),
    ))
}

fn psnr_example() -> Outcome {
    let v = psnr(0.01);
    outcome("psnr(mse=0.01) = 20 dB", close(v, 20.0, 1e-6), format!("{v}"))
}

fn ssim_identity() -> Result<Outcome> {
    let a = Tensor::new(&[1, 3, 8, 12], (0..288).map(|i| ((i * 29) % 31) as f32 / 31.0).collect())?;
    let v = ssim(&a, &a)?;
    Ok(outcome("ssim(x, x) = 1", close(v, 1.0, 1e-9), format!("{v}")))
}

fn ppm_bytes() -> Result<Outcome> {
    let b = encode_ppm(&Tensor::zeros(&[1, 3, 2, 2]))?;
    let ok = b.len() == 23 && &b[..11] == b"P6\n2 2\n255\n" && b[11..].iter().all(|&v| v == 0);
    let back = decode_ppm(&b)?;
    Ok(outcome("ppm 2x2 black: 11-byte header + 12 zeros", ok && back.sum() == 0.0, format!("{} bytes", b.len())))
}

fn pfm_bytes() -> Result<Outcome> {
    let t = Tensor::full(&[1, 1, 1, 1], 1.5f32);
    let b = encode_pfm(&t)?;
    let ok = b[b.len() - 4..] == 1.5f32.to_le_bytes() && decode_pfm(&b)? == t;
    Ok(outcome("pfm 1x1 payload is little-endian 1.5", ok, format!("{:?}", &b[b.len() - 4..])))
}

fn checkpoint_roundtrip() -> Result<Outcome> {
    let mut p = ParamStore::new();
    p.insert("x.weight", Tensor::new(&[2, 1, 1, 1], vec![0.5f32, -1.25])?);
    p.insert("x.bias", Tensor::new(&[2], vec![3.0f32, 0.0])?);
    let a = encode_checkpoint(&p)?;
    let b = encode_checkpoint(&decode_checkpoint(&a)?)?;
    let mut bad = a.clone();
    let mid = bad.len() / 2;
    bad[mid] ^= 0x40;
    let rejected = decode_checkpoint(&bad).is_err();
    Ok(outcome("checkpoint round trip and corruption", a == b && rejected, ""))
}

fn error_unit_examples() -> Result<Outcome> {
    let mut g = Graph::<f32>::new();
    let t = |v: f32| Tensor::full(&[1, 1, 1, 1], v);
    let (a, ah) = (g.constant(t(1.0)), g.constant(t(0.0)));
    let e1 = error_unit(&mut g, a, ah)?;
    let (a, ah) = (g.constant(t(0.0)), g.constant(t(2.0)));
    let e2 = error_unit(&mut g, a, ah)?;
    let ok = g.value(e1).data() == [1.0, 0.0] && g.value(e2).data() == [0.0, 2.0];
    Ok(outcome("error unit [1]/[0] and [0]/[2]", ok, ""))
}

fn bilinear_example() -> Result<Outcome> {
    let x = Tensor::new(&[1, 1, 1, 2], vec![0.0f64, 1.0])?;
    let y = bilinear_resize(&x, 1, 4)?;
    let ok = y.data().iter().zip([0.0, 0.25, 0.75, 1.0]).all(|(a, b)| close(*a, b, 1e-12));
    Ok(outcome("bilinear [0,1] -> [0,0.25,0.75,1]", ok, format!("{:?}", y.data())))
}

fn renderer_geometry() -> Result<Outcome> {
    let pose = Pose::new(vec3(0.0, 1.5, 0.0), vec3(0.0, -1.0, 0.0), vec3(0.0, 0.0, 1.0))?;
    let cam = Camera::new(64, 32)?;
    let ray = cam.ray(&pose, 32.0, 16.0);
    let t = scenegen::intersect_ground(&ray, scenegen::FAR_PLANE).unwrap_or(f64::NAN);
    let world = scenegen::generate_scene(3, &scenegen::SceneConfig::default())?;
    let p = &world.trajectory[4];
    let l1 = scenegen::lighting_from_level(LightingMode::Illumination, 1)?;
    let l10 = scenegen::lighting_from_level(LightingMode::Illumination, 10)?;
    let same = scenegen::render_frame(&world, p, &l1, &cam)?.depth == scenegen::render_frame(&world, p, &l10, &cam)?.depth;
    Ok(outcome(
        "renderer: straight-down depth 1.5, depth independent of lighting",
        close(t, 1.5, 1e-5) && same,
        format!("center depth {t}"),
    ))
}

pub fn run() -> Result<Vec<Outcome>> {
    Ok(vec![
        depth_hand_example()?,
        delta_boundaries()?,
        psnr_example(),
        ssim_identity()?,
        ppm_bytes()?,
        pfm_bytes()?,
        checkpoint_roundtrip()?,
        error_unit_examples()?,
        bilinear_example()?,
        renderer_geometry()?,
    ])
}
