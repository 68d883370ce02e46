//! Brute-force Canny used as an oracle by several test targets.

use cage_core::imaging::{direction_step, CannyParams, RasterImage, MIN_GRADIENT, NMS_RELATIVE_TOLERANCE};

fn clamp_get(data: &[f64], w: i64, h: i64, x: i64, y: i64) -> f64 {
    data[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize]
}

/// Direct implementation: 2-D Gaussian, Sobel, suppression with the same
/// tie rule, hysteresis by fixed-point iteration.
pub fn reference_canny(img: &RasterImage, p: &CannyParams) -> Vec<bool> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let gray: Vec<f64> = img
        .as_bytes()
        .chunks_exact(3)
        .map(|c| 0.299 * f64::from(c[0]) + 0.587 * f64::from(c[1]) + 0.114 * f64::from(c[2]))
        .collect();
    let radius = (3.0 * p.sigma).ceil() as i64;
    let mut k2 = Vec::new();
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            k2.push((-((dx * dx + dy * dy) as f64) / (2.0 * p.sigma * p.sigma)).exp());
        }
    }
    let sum: f64 = k2.iter().sum();
    let mut blur = vec![0.0; gray.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            let mut i = 0;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    acc += k2[i] / sum * clamp_get(&gray, w, h, x + dx, y + dy);
                    i += 1;
                }
            }
            blur[(y * w + x) as usize] = acc;
        }
    }
    let mut mag = vec![0.0; blur.len()];
    let mut dir = vec![0.0; blur.len()];
    for y in 0..h {
        for x in 0..w {
            let g = |dx, dy| clamp_get(&blur, w, h, x + dx, y + dy);
            let gx = (g(1, -1) + 2.0 * g(1, 0) + g(1, 1)) - (g(-1, -1) + 2.0 * g(-1, 0) + g(-1, 1));
            let gy = (g(-1, 1) + 2.0 * g(0, 1) + g(1, 1)) - (g(-1, -1) + 2.0 * g(0, -1) + g(1, -1));
            mag[(y * w + x) as usize] = (gx * gx + gy * gy).sqrt();
            dir[(y * w + x) as usize] = gy.atan2(gx);
        }
    }
    let max = mag.iter().copied().fold(0.0, f64::max);
    if max <= MIN_GRADIENT {
        return vec![false; mag.len()];
    }
    let tol = NMS_RELATIVE_TOLERANCE * max;
    let at = |x: i64, y: i64| if x < 0 || y < 0 || x >= w || y >= h { 0.0 } else { mag[(y * w + x) as usize] };
    let mut thin = vec![0.0; mag.len()];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let (dx, dy) = direction_step(dir[i]);
            if mag[i] > tol && mag[i] >= at(x - dx, y - dy) - tol && mag[i] > at(x + dx, y + dy) + tol {
                thin[i] = mag[i];
            }
        }
    }
    let (lo, hi) = (p.low * max, p.high * max);
    let mut edge: Vec<bool> = thin.iter().map(|m| *m > 0.0 && *m >= hi).collect();
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                if edge[i] || !(thin[i] > 0.0 && thin[i] >= lo) {
                    continue;
                }
                let touches = (-1..=1).any(|dy: i64| {
                    (-1..=1).any(|dx: i64| {
                        let (nx, ny) = (x + dx, y + dy);
                        (dx, dy) != (0, 0) && nx >= 0 && ny >= 0 && nx < w && ny < h && edge[(ny * w + nx) as usize]
                    })
                });
                if touches {
                    edge[i] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return edge;
        }
    }
}

pub fn rectangle() -> RasterImage {
    RasterImage::from_fn(40, 32, |x, y| {
        if (10..30).contains(&x) && (8..24).contains(&y) {
            [200, 180, 90]
        } else {
            [30, 40, 50]
        }
    })
}
