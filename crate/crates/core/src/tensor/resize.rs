use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Source coordinate pair and blend weight for one output index under the
/// half-pixel-centre convention.
fn taps(i: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let src = ((i as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5).clamp(0.0, (in_len - 1) as f64);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, src - lo as f64)
}

/// Bilinear resampling of every `h x w` plane of a rank-4 tensor to
/// `out_h x out_w`. Forward only.
pub fn bilinear_resize<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    if out_h < 1 || out_w < 1 {
        return Err(Error::invalid(
            "bilinear_resize",
            format!("output extent must be >= 1, got {out_h}x{out_w}"),
        ));
    }
    let (n, c, h, w) = x.dims4()?;
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let rows: Vec<_> = (0..out_h).map(|i| taps(i, h, out_h)).collect();
    let cols: Vec<_> = (0..out_w).map(|j| taps(j, w, out_w)).collect();
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    for plane in x.data().chunks_exact(h * w) {
        for &(y0, y1, fy) in &rows {
            for &(x0, x1, fx) in &cols {
                let at = |yy: usize, xx: usize| plane[yy * w + xx].as_f64();
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push(T::from_f64_lossy(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    Tensor::new(&[n, c, out_h, out_w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let x = Tensor::<f32>::new(&[1, 1, 2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(bilinear_resize(&x, 2, 3).unwrap(), x);
    }

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::<f64>::full(&[1, 1, 3, 5], 2.5);
        let y = bilinear_resize(&x, 7, 11).unwrap();
        assert!(y.data().iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn half_pixel_convention_on_two_samples() {
        let x = Tensor::<f64>::new(&[1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
        let y = bilinear_resize(&x, 1, 4).unwrap();
        assert_eq!(y.data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn rejects_empty_output() {
        let x = Tensor::<f32>::zeros(&[1, 1, 2, 2]);
        assert!(bilinear_resize(&x, 0, 2).is_err());
    }
}
