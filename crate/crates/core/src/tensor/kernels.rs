//! Slice-level kernels behind the graph ops. Loops run in a fixed order so
//! results are bitwise reproducible.

use super::Scalar;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn hw(&self) -> usize {
        self.h * self.w
    }
}

/// Unfolds one `c x h x w` sample into `(c*k*k) x (h*w)` patch columns with
/// zero padding `k / 2`.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * hw;
                let dst = &mut cols[row..row + hw];
                let dx = kx as isize - pad;
                // valid output columns: 0 <= ox + dx < w
                let x0 = (-dx).max(0) as usize;
                let x1 = ((w as isize) - dx).min(w as isize).max(0) as usize;
                for oy in 0..h {
                    let sy = oy as isize + ky as isize - pad;
                    let out_row = &mut dst[oy * w..(oy + 1) * w];
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    out_row[..x0].fill(T::zero());
                    out_row[x1..].fill(T::zero());
                    let s0 = (x0 as isize + dx) as usize;
                    out_row[x0..x1].copy_from_slice(&src_row[s0..s0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch columns back into `dx`.
fn col2im_add<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, dx: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * hw;
                let src = &cols[row..row + hw];
                let dxs = kx as isize - pad;
                let x0 = (-dxs).max(0) as usize;
                let x1 = ((w as isize) - dxs).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for oy in 0..h {
                    let sy = oy as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s0 = (x0 as isize + dxs) as usize;
                    let dst = &mut plane[sy as usize * w + s0..sy as usize * w + s0 + (x1 - x0)];
                    for (d, s) in dst.iter_mut().zip(&src[oy * w + x0..oy * w + x1]) {
                        *d = *d + *s;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(
    x: &[T],
    d: Dims,
    weight: &[T],
    cout: usize,
    k: usize,
    bias: &[T],
    out: &mut [T],
) {
    let hw = d.hw();
    let ckk = d.c * k * k;
    let mut cols = if k == 1 { Vec::new() } else { vec![T::zero(); ckk * hw] };
    for i in 0..d.n {
        let xs = &x[i * d.c * hw..(i + 1) * d.c * hw];
        let os = &mut out[i * cout * hw..(i + 1) * cout * hw];
        for (co, plane) in os.chunks_exact_mut(hw).enumerate() {
            plane.fill(bias[co]);
        }
        let src = if k == 1 {
            xs
        } else {
            im2col(xs, d.c, d.h, d.w, k, &mut cols);
            &cols
        };
        T::gemm(cout, ckk, hw, weight, false, src, false, T::one(), os);
    }
}

/// Accumulates gradients of a same-padded convolution. Any of the output
/// buffers may be skipped by passing `None`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &[T],
    d: Dims,
    weight: &[T],
    cout: usize,
    k: usize,
    gout: &[T],
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    let hw = d.hw();
    let ckk = d.c * k * k;
    let mut cols = if k == 1 { Vec::new() } else { vec![T::zero(); ckk * hw] };
    let mut gcols = if k == 1 || gx.is_none() {
        Vec::new()
    } else {
        vec![T::zero(); ckk * hw]
    };
    for i in 0..d.n {
        let xs = &x[i * d.c * hw..(i + 1) * d.c * hw];
        let go = &gout[i * cout * hw..(i + 1) * cout * hw];
        if let Some(gb) = gb.as_deref_mut() {
            for (co, plane) in go.chunks_exact(hw).enumerate() {
                gb[co] = gb[co] + plane.iter().copied().sum::<T>();
            }
        }
        if let Some(gw) = gw.as_deref_mut() {
            let src = if k == 1 {
                xs
            } else {
                im2col(xs, d.c, d.h, d.w, k, &mut cols);
                &cols
            };
            T::gemm(cout, hw, ckk, go, false, src, true, T::one(), gw);
        }
        if let Some(gx) = gx.as_deref_mut() {
            let gxs = &mut gx[i * d.c * hw..(i + 1) * d.c * hw];
            if k == 1 {
                T::gemm(ckk, cout, hw, weight, true, go, false, T::one(), gxs);
            } else {
                T::gemm(ckk, cout, hw, weight, true, go, false, T::zero(), &mut gcols);
                col2im_add(&gcols, d.c, d.h, d.w, k, gxs);
            }
        }
    }
}

/// 2x2 max pooling; returns the flat input index of each selected element.
/// Ties go to the first element in row-major window order.
pub(crate) fn maxpool2_forward<T: Scalar>(x: &[T], d: Dims, out: &mut [T]) -> Vec<u32> {
    let (oh, ow) = (d.h / 2, d.w / 2);
    let mut argmax = vec![0u32; d.n * d.c * oh * ow];
    for p in 0..d.n * d.c {
        let base = p * d.hw();
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * d.w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * d.w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                let o = (p * oh + oy) * ow + ox;
                out[o] = x[best];
                argmax[o] = best as u32;
            }
        }
    }
    argmax
}

pub(crate) fn upsample2_forward<T: Scalar>(x: &[T], d: Dims, out: &mut [T]) {
    let ow = d.w * 2;
    for p in 0..d.n * d.c {
        let src = &x[p * d.hw()..(p + 1) * d.hw()];
        let dst = &mut out[p * 4 * d.hw()..(p + 1) * 4 * d.hw()];
        for y in 0..d.h {
            for xx in 0..d.w {
                let v = src[y * d.w + xx];
                let o = 2 * y * ow + 2 * xx;
                dst[o] = v;
                dst[o + 1] = v;
                dst[o + ow] = v;
                dst[o + ow + 1] = v;
            }
        }
    }
}

pub(crate) fn upsample2_backward<T: Scalar>(gout: &[T], d: Dims, gx: &mut [T]) {
    let ow = d.w * 2;
    for p in 0..d.n * d.c {
        let src = &gout[p * 4 * d.hw()..(p + 1) * 4 * d.hw()];
        let dst = &mut gx[p * d.hw()..(p + 1) * d.hw()];
        for y in 0..d.h {
            for xx in 0..d.w {
                let o = 2 * y * ow + 2 * xx;
                let s = src[o] + src[o + 1] + src[o + ow] + src[o + ow + 1];
                dst[y * d.w + xx] = dst[y * d.w + xx] + s;
            }
        }
    }
}

/// Keeps the top-left element of every 2x2 block.
pub(crate) fn downsample2_forward<T: Scalar>(x: &[T], d: Dims, out: &mut [T]) {
    let (oh, ow) = (d.h / 2, d.w / 2);
    for p in 0..d.n * d.c {
        for oy in 0..oh {
            for ox in 0..ow {
                out[(p * oh + oy) * ow + ox] = x[p * d.hw() + 2 * oy * d.w + 2 * ox];
            }
        }
    }
}

pub(crate) fn downsample2_backward<T: Scalar>(gout: &[T], d: Dims, gx: &mut [T]) {
    let (oh, ow) = (d.h / 2, d.w / 2);
    for p in 0..d.n * d.c {
        for oy in 0..oh {
            for ox in 0..ow {
                let i = p * d.hw() + 2 * oy * d.w + 2 * ox;
                gx[i] = gx[i] + gout[(p * oh + oy) * ow + ox];
            }
        }
    }
}

/// Forward difference along `x` (`horizontal`) or `y`; the last column/row
/// is zero, matching edge replication.
pub(crate) fn diff_forward<T: Scalar>(x: &[T], d: Dims, horizontal: bool, out: &mut [T]) {
    for p in 0..d.n * d.c {
        let b = p * d.hw();
        for y in 0..d.h {
            for xx in 0..d.w {
                let i = b + y * d.w + xx;
                out[i] = if horizontal && xx + 1 < d.w {
                    x[i + 1] - x[i]
                } else if !horizontal && y + 1 < d.h {
                    x[i + d.w] - x[i]
                } else {
                    T::zero()
                };
            }
        }
    }
}

pub(crate) fn diff_backward<T: Scalar>(gout: &[T], d: Dims, horizontal: bool, gx: &mut [T]) {
    for p in 0..d.n * d.c {
        let b = p * d.hw();
        for y in 0..d.h {
            for xx in 0..d.w {
                let i = b + y * d.w + xx;
                let g = gout[i];
                if horizontal && xx + 1 < d.w {
                    gx[i + 1] = gx[i + 1] + g;
                    gx[i] = gx[i] - g;
                } else if !horizontal && y + 1 < d.h {
                    gx[i + d.w] = gx[i + d.w] + g;
                    gx[i] = gx[i] - g;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct-summation reference convolution.
    fn conv_naive(x: &[f64], d: Dims, wt: &[f64], cout: usize, k: usize, b: &[f64]) -> Vec<f64> {
        let p = (k / 2) as isize;
        let mut out = vec![0.0; d.n * cout * d.hw()];
        for n in 0..d.n {
            for co in 0..cout {
                for y in 0..d.h as isize {
                    for xx in 0..d.w as isize {
                        let mut s = b[co];
                        for ci in 0..d.c {
                            for ky in 0..k as isize {
                                for kx in 0..k as isize {
                                    let (sy, sx) = (y + ky - p, xx + kx - p);
                                    if sy < 0 || sx < 0 || sy >= d.h as isize || sx >= d.w as isize {
                                        continue;
                                    }
                                    let xi = ((n * d.c + ci) * d.h + sy as usize) * d.w + sx as usize;
                                    let wi = ((co * d.c + ci) * k + ky as usize) * k + kx as usize;
                                    s += x[xi] * wt[wi];
                                }
                            }
                        }
                        out[((n * cout + co) * d.h + y as usize) * d.w + xx as usize] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct_summation() {
        for &(k, h, w) in &[(3usize, 4usize, 5usize), (5, 3, 2), (1, 2, 3), (3, 1, 1)] {
            let d = Dims { n: 2, c: 3, h, w };
            let cout = 4;
            let x: Vec<f64> = (0..d.n * d.c * d.hw()).map(|i| (i as f64 * 0.713).sin()).collect();
            let wt: Vec<f64> = (0..cout * d.c * k * k).map(|i| (i as f64 * 0.331).cos()).collect();
            let b = [0.1, -0.2, 0.3, 0.0];
            let mut out = vec![0.0; d.n * cout * d.hw()];
            conv2d_forward(&x, d, &wt, cout, k, &b, &mut out);
            let want = conv_naive(&x, d, &wt, cout, k, &b);
            for (a, e) in out.iter().zip(&want) {
                assert!((a - e).abs() < 1e-12, "k={k} {a} vs {e}");
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, h, w, k) = (2, 3, 4, 3);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..c * k * k * h * w).map(|i| (i as f64 * 0.5).cos()).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, c, h, w, k, &mut cols);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im_add(&y, c, h, w, k, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
