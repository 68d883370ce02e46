use std::io::Cursor;
use std::ops::Deref;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma, Rgb};

use super::ImagingError;

/// 8-bit RGB raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyRaster);
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImagingError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut img = Self::filled(width, height, [0, 0, 0]);
        for y in 0..height {
            for x in 0..width {
                img.put(x, y, f(x, y));
            }
        }
        img
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.offset(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fills the axis-aligned rectangle, clipped to the raster.
    pub fn fill_rect(&mut self, x: i64, y: i64, w: i64, h: i64, rgb: [u8; 3]) {
        let x0 = x.clamp(0, self.width as i64) as u32;
        let y0 = y.clamp(0, self.height as i64) as u32;
        let x1 = (x + w).clamp(0, self.width as i64) as u32;
        let y1 = (y + h).clamp(0, self.height as i64) as u32;
        for yy in y0..y1 {
            for xx in x0..x1 {
                self.put(xx, yy, rgb);
            }
        }
    }

    /// Copies the `w` x `h` block at `(sx, sy)` of `src` to `(dx, dy)` here.
    /// Pixels falling outside either raster are skipped.
    pub fn blit(&mut self, src: &RasterImage, sx: i64, sy: i64, w: i64, h: i64, dx: i64, dy: i64) {
        for j in 0..h {
            for i in 0..w {
                let (fx, fy, tx, ty) = (sx + i, sy + j, dx + i, dy + j);
                if fx < 0 || fy < 0 || fx >= src.width as i64 || fy >= src.height as i64 {
                    continue;
                }
                if tx < 0 || ty < 0 || tx >= self.width as i64 || ty >= self.height as i64 {
                    continue;
                }
                self.put(tx as u32, ty as u32, src.get(fx as u32, fy as u32));
            }
        }
    }

    /// Luma conversion with weights 0.299 / 0.587 / 0.114, values in `[0, 255]`.
    pub fn to_gray(&self) -> GrayImage {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, ImagingError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| ImagingError::Decode(e.to_string()))?
            .into_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw())
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let buf: ImageBuffer<Rgb<u8>, &[u8]> =
            ImageBuffer::from_raw(self.width, self.height, self.data.as_slice())
                .expect("raster length checked at construction");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)
            .expect("PNG encoding into memory cannot fail");
        out.into_inner()
    }

    pub fn read_png(path: &Path) -> Result<Self, ImagingError> {
        let bytes = std::fs::read(path).map_err(|e| ImagingError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::decode_png(&bytes).map_err(|e| match e {
            ImagingError::Decode(msg) => ImagingError::DecodeFile {
                path: path.to_path_buf(),
                message: msg,
            },
            other => other,
        })
    }

    pub fn write_png(&self, path: &Path) -> Result<(), ImagingError> {
        std::fs::write(path, self.encode_png()).map_err(|e| ImagingError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

/// Single-channel floating point raster.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyRaster);
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(ImagingError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f64) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Clamp-to-edge access.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let x = x.clamp(0, self.width as i64 - 1) as u32;
        let y = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(x, y)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }
}

/// Binary per-pixel raster shared by [`EdgeMap`] and [`RegionMask`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Bitmap {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, ImagingError> {
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(ImagingError::DataLength {
                expected,
                actual: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Coordinates of set pixels in row-major order.
    pub fn set_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    /// 1-channel PNG, 255 for set pixels.
    pub fn encode_png(&self) -> Vec<u8> {
        let raw: Vec<u8> = self.bits.iter().map(|b| if *b { 255 } else { 0 }).collect();
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(self.width, self.height, raw).expect("bitmap length invariant");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)
            .expect("PNG encoding into memory cannot fail");
        out.into_inner()
    }

    /// Any non-zero luma counts as set.
    pub fn decode_png(bytes: &[u8]) -> Result<Self, ImagingError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| ImagingError::Decode(e.to_string()))?
            .into_luma8();
        let (w, h) = img.dimensions();
        let bits = img.into_raw().into_iter().map(|v| v != 0).collect();
        Self::from_bits(w, h, bits)
    }
}

macro_rules! bitmap_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub struct $name(Bitmap);

        impl $name {
            pub fn empty(width: u32, height: u32) -> Self {
                Self(Bitmap::empty(width, height))
            }

            pub fn from_bitmap(bitmap: Bitmap) -> Self {
                Self(bitmap)
            }

            pub fn into_bitmap(self) -> Bitmap {
                self.0
            }

            pub fn set(&mut self, x: u32, y: u32, v: bool) {
                self.0.set(x, y, v)
            }

            pub fn decode_png(bytes: &[u8]) -> Result<Self, ImagingError> {
                Bitmap::decode_png(bytes).map(Self)
            }
        }

        impl Deref for $name {
            type Target = Bitmap;

            fn deref(&self) -> &Bitmap {
                &self.0
            }
        }
    };
}

bitmap_newtype!(
    /// Binary edge raster produced by [`canny`](super::canny).
    EdgeMap
);
bitmap_newtype!(
    /// Binary preservation mask; set pixels are shielded from stylization.
    RegionMask
);
