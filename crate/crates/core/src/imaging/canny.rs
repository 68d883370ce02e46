use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{EdgeMap, GrayImage, ImagingError, RasterImage};

/// Parameters of the edge extractor. Thresholds are fractions of the
/// maximum gradient magnitude in the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low: 0.1,
            high: 0.3,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(ImagingError::InvalidSigma(self.sigma));
        }
        if !(self.low > 0.0 && self.low < self.high && self.high <= 1.0) {
            return Err(ImagingError::InvalidThresholds {
                low: self.low,
                high: self.high,
            });
        }
        Ok(())
    }
}

/// Sampled Gaussian of radius `ceil(3 sigma)`, normalized to unit sum.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage, ImagingError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ImagingError::InvalidSigma(sigma));
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let (w, h) = (img.width(), img.height());
    let horizontal = GrayImage::from_fn(w, h, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * img.get_clamped(x as i64 + i as i64 - r, y as i64))
            .sum()
    });
    Ok(GrayImage::from_fn(w, h, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * horizontal.get_clamped(x as i64, y as i64 + i as i64 - r))
            .sum()
    }))
}

/// Per-pixel Sobel response.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub width: u32,
    pub height: u32,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// `atan2(gy, gx)` in radians; `y` grows downwards.
    pub direction: Vec<f64>,
}

impl Gradients {
    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// 3x3 Sobel gradients with clamp-to-edge borders.
pub fn sobel_gradients(img: &GrayImage) -> Result<Gradients, ImagingError> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(ImagingError::TooSmall {
            width: w,
            height: h,
            min: 3,
        });
    }
    let n = w as usize * h as usize;
    let mut gx = Vec::with_capacity(n);
    let mut gy = Vec::with_capacity(n);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let (mut sx, mut sy) = (0.0, 0.0);
            for (j, (row_x, row_y)) in SOBEL_X.iter().zip(SOBEL_Y.iter()).enumerate() {
                for i in 0..3 {
                    let v = img.get_clamped(x + i as i64 - 1, y + j as i64 - 1);
                    sx += row_x[i] * v;
                    sy += row_y[i] * v;
                }
            }
            gx.push(sx);
            gy.push(sy);
        }
    }
    let magnitude = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let direction = gx.iter().zip(&gy).map(|(a, b)| b.atan2(*a)).collect();
    Ok(Gradients {
        width: w,
        height: h,
        gx,
        gy,
        magnitude,
        direction,
    })
}

/// Quantizes a gradient direction to the 0/45/90/135 degree bins and returns
/// the pixel step `(dx, dy)` pointing along the gradient.
pub fn direction_step(radians: f64) -> (i64, i64) {
    let mut deg = radians.to_degrees() % 180.0;
    if deg < 0.0 {
        deg += 180.0;
    }
    if !(22.5..157.5).contains(&deg) {
        (1, 0)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Relative tolerance for magnitude comparisons during suppression. Exact
/// ties (symmetric edge profiles) are resolved towards the pixel further
/// along the gradient step.
pub const NMS_RELATIVE_TOLERANCE: f64 = 1e-9;

/// Non-maximum suppression. Returns the thinned magnitudes (0 where
/// suppressed) and the maximum magnitude of the input.
pub fn non_maximum_suppression(grad: &Gradients) -> (Vec<f64>, f64) {
    let max = grad.magnitude.iter().copied().fold(0.0, f64::max);
    let tol = NMS_RELATIVE_TOLERANCE * max;
    let (w, h) = (grad.width as i64, grad.height as i64);
    let at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            grad.magnitude[(y * w + x) as usize]
        }
    };
    let mut out = vec![0.0; grad.magnitude.len()];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let m = grad.magnitude[i];
            if m <= tol {
                continue;
            }
            let (dx, dy) = direction_step(grad.direction[i]);
            let ahead = at(x + dx, y + dy);
            let behind = at(x - dx, y - dy);
            if m >= behind - tol && m > ahead + tol {
                out[i] = m;
            }
        }
    }
    (out, max)
}

/// Double-threshold hysteresis on thinned magnitudes. Weak pixels survive
/// only when 8-connected (through other weak pixels) to a strong one.
pub fn hysteresis(
    width: u32,
    height: u32,
    thinned: &[f64],
    low_abs: f64,
    high_abs: f64,
) -> EdgeMap {
    let mut edges = EdgeMap::empty(width, height);
    let (w, h) = (width as i64, height as i64);
    let candidate = |i: usize| thinned[i] > 0.0 && thinned[i] >= low_abs;
    let mut queue = VecDeque::new();
    for (i, &m) in thinned.iter().enumerate() {
        if m > 0.0 && m >= high_abs {
            let (x, y) = ((i as i64 % w) as u32, (i as i64 / w) as u32);
            edges.set(x, y, true);
            queue.push_back((x as i64, y as i64));
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if (dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let j = (ny * w + nx) as usize;
                if candidate(j) && !edges.get(nx as u32, ny as u32) {
                    edges.set(nx as u32, ny as u32, true);
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    edges
}

/// Largest gradient magnitude (in gray levels) still treated as a flat
/// image. Blurring a constant image leaves rounding noise near 1e-14.
pub const MIN_GRADIENT: f64 = 1e-6;

/// Grayscale, blur, Sobel, 4-bin non-maximum suppression, hysteresis.
pub fn canny(img: &RasterImage, params: &CannyParams) -> Result<EdgeMap, ImagingError> {
    params.validate()?;
    let gray = img.to_gray();
    let blurred = gaussian_blur(&gray, params.sigma)?;
    let grad = sobel_gradients(&blurred)?;
    let (thinned, max) = non_maximum_suppression(&grad);
    if max <= MIN_GRADIENT {
        return Ok(EdgeMap::empty(img.width(), img.height()));
    }
    Ok(hysteresis(
        img.width(),
        img.height(),
        &thinned,
        params.low * max,
        params.high * max,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_const(w: u32, h: u32, v: f64) -> GrayImage {
        GrayImage::from_fn(w, h, |_, _| v)
    }

    #[test]
    fn kernel_is_normalized_with_expected_radius() {
        let k = gaussian_kernel(1.4);
        assert_eq!(k.len(), 2 * 5 + 1);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k[0], k[10]);
    }

    #[test]
    fn blur_keeps_constant_images() {
        let img = gray_const(20, 15, 87.5);
        let out = gaussian_blur(&img, 2.0).unwrap();
        for v in out.data() {
            assert!((v - 87.5).abs() < 1e-9);
        }
    }

    #[test]
    fn blur_of_impulse_is_the_outer_product_kernel() {
        let sigma = 1.0;
        let n = 31;
        let c = n / 2;
        let img = GrayImage::from_fn(n, n, |x, y| if x == c && y == c { 1.0 } else { 0.0 });
        let out = gaussian_blur(&img, sigma).unwrap();
        // Analytic sampled Gaussian, normalized over radius 3.
        let g = |d: i64| (-(d * d) as f64 / 2.0).exp();
        let z: f64 = (-3..=3).map(g).sum();
        for dy in -4i64..=4 {
            for dx in -4i64..=4 {
                let expected = if dx.abs() <= 3 && dy.abs() <= 3 {
                    g(dx) * g(dy) / (z * z)
                } else {
                    0.0
                };
                let got = out.get((c as i64 + dx) as u32, (c as i64 + dy) as u32);
                assert!((got - expected).abs() < 1e-12, "offset ({dx},{dy})");
            }
        }
    }

    #[test]
    fn blur_preserves_interior_mass() {
        let img = GrayImage::from_fn(64, 64, |x, y| {
            if (20..44).contains(&x) && (24..40).contains(&y) {
                200.0
            } else {
                0.0
            }
        });
        let out = gaussian_blur(&img, 1.4).unwrap();
        let before: f64 = img.data().iter().sum();
        let after: f64 = out.data().iter().sum();
        assert!((before - after).abs() / before < 0.005);
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        assert!(gaussian_blur(&gray_const(4, 4, 1.0), 0.0).is_err());
    }

    #[test]
    fn sobel_on_ramp() {
        let img = GrayImage::from_fn(9, 7, |x, _| x as f64);
        let g = sobel_gradients(&img).unwrap();
        for y in 1..6 {
            for x in 1..8 {
                let i = g.index(x, y);
                assert_eq!(g.gx[i], 8.0);
                assert_eq!(g.gy[i], 0.0);
                assert_eq!(g.magnitude[i], 8.0);
            }
        }
    }

    #[test]
    fn sobel_constant_is_zero() {
        let g = sobel_gradients(&gray_const(5, 5, 42.0)).unwrap();
        assert!(g.magnitude.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn sobel_transpose_swaps_components() {
        let img = GrayImage::from_fn(8, 6, |x, y| ((x * 7 + y * 3) % 11) as f64 * (x as f64 + 1.0));
        let a = sobel_gradients(&img).unwrap();
        let b = sobel_gradients(&img.transpose()).unwrap();
        for y in 0..6 {
            for x in 0..8 {
                let i = a.index(x, y);
                let j = b.index(y, x);
                assert!((a.gx[i] - b.gy[j]).abs() < 1e-12);
                assert!((a.gy[i] - b.gx[j]).abs() < 1e-12);
                assert!((a.magnitude[i] - b.magnitude[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sobel_needs_three_pixels() {
        assert!(matches!(
            sobel_gradients(&gray_const(2, 5, 0.0)),
            Err(ImagingError::TooSmall { .. })
        ));
    }

    #[test]
    fn direction_bins() {
        use std::f64::consts::PI;
        assert_eq!(direction_step(0.0), (1, 0));
        assert_eq!(direction_step(PI), (1, 0));
        assert_eq!(direction_step(PI / 4.0), (1, 1));
        assert_eq!(direction_step(-3.0 * PI / 4.0), (1, 1));
        assert_eq!(direction_step(PI / 2.0), (0, 1));
        assert_eq!(direction_step(-PI / 2.0), (0, 1));
        assert_eq!(direction_step(3.0 * PI / 4.0), (-1, 1));
    }

    #[test]
    fn threshold_validation() {
        let bad = [(0.0, 0.3), (0.3, 0.3), (0.4, 0.3), (0.1, 1.5)];
        for (low, high) in bad {
            let p = CannyParams { low, high, ..Default::default() };
            assert!(p.validate().is_err(), "{low} {high}");
        }
        assert!(CannyParams::default().validate().is_ok());
    }

    #[test]
    fn constant_image_has_no_edges() {
        let img = RasterImage::filled(64, 64, [128, 128, 128]);
        let e = canny(&img, &CannyParams::default()).unwrap();
        assert_eq!(e.count(), 0);
    }

    #[test]
    fn horizontal_step_gives_one_row() {
        let img = RasterImage::from_fn(48, 48, |_, y| if y < 20 { [0; 3] } else { [255; 3] });
        let e = canny(&img, &CannyParams::default()).unwrap();
        assert!(e.count() > 0);
        for (x, y) in e.set_pixels() {
            assert!((19..=21).contains(&y), "edge at ({x},{y})");
        }
        for x in 0..48 {
            let n = (0..48).filter(|y| e.get(x, *y)).count();
            assert_eq!(n, 1, "column {x}");
        }
    }
}
