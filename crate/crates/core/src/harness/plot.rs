use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MARGIN: usize = 12;

/// Rasterizes `(x, y)` points as a polyline with square markers on a white
/// background with black axes. Returns `[1,3,height,width]`.
pub fn line_chart(points: &[(f64, f64)], width: usize, height: usize) -> Result<Tensor<f32>> {
    if points.len() < 2 || points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("line_chart", "need at least two finite points"));
    }
    if width < 4 * MARGIN || height < 4 * MARGIN {
        return Err(Error::invalid("line_chart", format!("canvas {width}x{height} too small")));
    }
    let plane = width * height;
    let mut px = vec![1.0f32; 3 * plane];
    let mut put = |x: i64, y: i64, rgb: [f32; 3]| {
        if (0..width as i64).contains(&x) && (0..height as i64).contains(&y) {
            let i = y as usize * width + x as usize;
            for c in 0..3 {
                px[c * plane + i] = rgb[c];
            }
        }
    };
    let (x0, x1) = bounds(points.iter().map(|p| p.0));
    let (y0, y1) = bounds(points.iter().map(|p| p.1));
    let (left, right) = (MARGIN as f64, (width - MARGIN) as f64);
    let (top, bottom) = (MARGIN as f64, (height - MARGIN) as f64);
    let to_px = |(x, y): (f64, f64)| {
        (
            (left + (x - x0) / (x1 - x0) * (right - left)).round() as i64,
            (bottom - (y - y0) / (y1 - y0) * (bottom - top)).round() as i64,
        )
    };
    let black = [0.0; 3];
    for x in MARGIN - 2..=width - MARGIN {
        put(x as i64, bottom as i64 + 2, black);
    }
    for y in MARGIN..=height - MARGIN + 2 {
        put(left as i64 - 2, y as i64, black);
    }
    for &p in points {
        let (x, _) = to_px(p);
        for d in 3..6 {
            put(x, bottom as i64 + d, black);
        }
    }
    let blue = [0.1, 0.3, 0.8];
    for w in points.windows(2) {
        let (mut ax, mut ay) = to_px(w[0]);
        let (bx, by) = to_px(w[1]);
        // Bresenham.
        let (dx, dy) = ((bx - ax).abs(), -(by - ay).abs());
        let (sx, sy) = ((bx - ax).signum(), (by - ay).signum());
        let mut err = dx + dy;
        loop {
            put(ax, ay, blue);
            if ax == bx && ay == by {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                ax += sx;
            }
            if e2 <= dx {
                err += dx;
                ay += sy;
            }
        }
    }
    for &p in points {
        let (x, y) = to_px(p);
        for dy in -2..=2 {
            for dx in -2..=2 {
                put(x + dx, y + dy, [0.8, 0.1, 0.1]);
            }
        }
    }
    Tensor::new(&[1, 3, height, width], px)
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
