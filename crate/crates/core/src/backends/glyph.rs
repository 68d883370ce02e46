//! Machine-readable label glyphs.
//!
//! A label is drawn as a strip of 2 px wide columns, 20 px tall: a magenta
//! start column, one column per UTF-8 byte, a checksum column (byte sum mod
//! 256) and a magenta end column. Byte columns have black guard cells at the
//! top and bottom and eight data cells in between, most significant bit
//! first, black for 1. Any recoloring of the strip makes it unreadable,
//! which is what the mock OCR relies on.

use crate::geometry::BBox;
use crate::imaging::RasterImage;
use crate::metrics::OcrToken;

pub const CELL: u32 = 2;
pub const ROWS: u32 = 10;
pub const GLYPH_HEIGHT: u32 = CELL * ROWS;
pub const MARKER: [u8; 3] = [255, 0, 255];
const BLACK: [u8; 3] = [0, 0, 0];
const WHITE: [u8; 3] = [255, 255, 255];
/// Longest encodable label in bytes.
pub const MAX_BYTES: usize = 255;

pub fn glyph_width(text: &str) -> u32 {
    CELL * (text.len() as u32 + 3)
}

fn column_cells(byte: u8) -> [bool; ROWS as usize] {
    let mut cells = [false; ROWS as usize];
    cells[0] = true;
    cells[ROWS as usize - 1] = true;
    for bit in 0..8 {
        cells[1 + bit] = byte & (0x80 >> bit) != 0;
    }
    cells
}

/// Draws `text` with its top-left corner at `(x, y)` and returns the box it
/// occupies. Pixels falling outside the image are clipped.
pub fn draw_label(img: &mut RasterImage, x: i64, y: i64, text: &str) -> BBox {
    let bytes = text.as_bytes();
    assert!(bytes.len() <= MAX_BYTES, "label too long for glyph encoding");
    let checksum = bytes.iter().fold(0u8, |a, b| a.wrapping_add(*b));
    let cell = i64::from(CELL);
    let mut cx = x;
    img.fill_rect(cx, y, cell, i64::from(GLYPH_HEIGHT), MARKER);
    cx += cell;
    for byte in bytes.iter().copied().chain(std::iter::once(checksum)) {
        for (row, on) in column_cells(byte).iter().enumerate() {
            let rgb = if *on { BLACK } else { WHITE };
            img.fill_rect(cx, y + row as i64 * cell, cell, cell, rgb);
        }
        cx += cell;
    }
    img.fill_rect(cx, y, cell, i64::from(GLYPH_HEIGHT), MARKER);
    BBox::new(x as f64, y as f64, f64::from(glyph_width(text)), f64::from(GLYPH_HEIGHT))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Marker,
    Black,
    White,
    Other,
}

fn classify(rgb: [u8; 3]) -> Class {
    let hi = |v: u8| v >= 192;
    let lo = |v: u8| v < 64;
    match rgb {
        [r, g, b] if hi(r) && lo(g) && hi(b) => Class::Marker,
        [r, g, b] if lo(r) && lo(g) && lo(b) => Class::Black,
        [r, g, b] if hi(r) && hi(g) && hi(b) => Class::White,
        _ => Class::Other,
    }
}

fn cell_class(img: &RasterImage, x: u32, y: u32) -> Class {
    let first = classify(img.get(x, y));
    for dy in 0..CELL {
        for dx in 0..CELL {
            if classify(img.get(x + dx, y + dy)) != first {
                return Class::Other;
            }
        }
    }
    first
}

fn marker_column(img: &RasterImage, x: u32, y: u32) -> bool {
    (0..ROWS).all(|r| cell_class(img, x, y + r * CELL) == Class::Marker)
}

fn read_column(img: &RasterImage, x: u32, y: u32) -> Option<u8> {
    let mut byte = 0u8;
    for row in 0..ROWS {
        let on = match cell_class(img, x, y + row * CELL) {
            Class::Black => true,
            Class::White => false,
            _ => return None,
        };
        match row {
            0 | 9 if !on => return None,
            0 | 9 => {}
            _ => byte = (byte << 1) | u8::from(on),
        }
    }
    Some(byte)
}

fn read_at(img: &RasterImage, x: u32, y: u32) -> Option<(String, u32)> {
    let mut bytes = Vec::new();
    let mut cx = x + CELL;
    loop {
        if cx + CELL > img.width() || bytes.len() > MAX_BYTES + 1 {
            return None;
        }
        if marker_column(img, cx, y) {
            break;
        }
        bytes.push(read_column(img, cx, y)?);
        cx += CELL;
    }
    let checksum = bytes.pop()?;
    if bytes.is_empty() || bytes.iter().fold(0u8, |a, b| a.wrapping_add(*b)) != checksum {
        return None;
    }
    let text = String::from_utf8(bytes).ok()?;
    Some((text, cx + CELL - x))
}

/// Finds every intact glyph, in reading order (top to bottom, then left to
/// right).
pub fn decode_labels(img: &RasterImage) -> Vec<OcrToken> {
    let (w, h) = img.dimensions();
    let mut found = Vec::new();
    if w < CELL * 4 || h < GLYPH_HEIGHT {
        return found;
    }
    let mut claimed: Vec<BBox> = Vec::new();
    for y in 0..=h - GLYPH_HEIGHT {
        let mut x = 0;
        while x + CELL * 4 <= w {
            let starts = classify(img.get(x, y)) == Class::Marker
                && (x == 0 || classify(img.get(x - 1, y)) != Class::Marker)
                && (y == 0 || classify(img.get(x, y - 1)) != Class::Marker);
            if starts && marker_column(img, x, y) {
                let inside = claimed
                    .iter()
                    .any(|b| f64::from(x) >= b.x && f64::from(x) < b.right() && f64::from(y) < b.bottom() && f64::from(y) >= b.y);
                if !inside {
                    if let Some((text, width)) = read_at(img, x, y) {
                        let bbox = BBox::new(f64::from(x), f64::from(y), f64::from(width), f64::from(GLYPH_HEIGHT));
                        claimed.push(bbox);
                        found.push(OcrToken { text, bbox });
                        x += width;
                        continue;
                    }
                }
            }
            x += 1;
        }
    }
    found
}
