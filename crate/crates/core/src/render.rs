//! Drawing helpers for visualizing query results on frames: box outlines in
//! stable per-track colors, a hand-rolled 5x7 bitmap font for labels, and the
//! shared color-name palette.

use image::RgbImage;

use crate::geometry::Rect2D;

/// RGB for a color word; unknown words render white.
pub fn color_rgb(name: &str) -> [u8; 3] {
    match name {
        "black" => [25, 25, 25],
        "white" => [240, 240, 240],
        "red" => [220, 50, 47],
        "blue" => [38, 108, 220],
        "silver" => [190, 195, 200],
        "green" => [60, 160, 70],
        "yellow" => [228, 200, 30],
        "gray" => [128, 128, 128],
        _ => [255, 255, 255],
    }
}

/// Saturated palette cycled by track id for box outlines.
const TRACK_PALETTE: [[u8; 3]; 8] = [
    [255, 99, 71],
    [50, 205, 130],
    [65, 150, 255],
    [255, 200, 40],
    [200, 110, 255],
    [0, 210, 210],
    [255, 140, 0],
    [240, 90, 170],
];

pub fn track_color(track_id: u64) -> [u8; 3] {
    TRACK_PALETTE[(track_id % TRACK_PALETTE.len() as u64) as usize]
}

/// Each glyph is 7 rows of 5 pixels, bit 4 leftmost.
fn glyph(c: char) -> [u8; 7] {
    match c {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ',' => [0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '#' => [0x0A, 0x1F, 0x0A, 0x0A, 0x0A, 0x1F, 0x0A],
        _ => [0; 7],
    }
}

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;
/// Horizontal advance per character, including one pixel of spacing.
pub const CHAR_ADVANCE: u32 = GLYPH_W + 1;

fn put_safe(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, image::Rgb(color));
    }
}

/// Draw uppercase text at (x, y), top-left anchored. Lowercase input is
/// uppercased; characters without a glyph advance silently.
pub fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: [u8; 3]) {
    let mut cx = x;
    for ch in text.chars() {
        let g = glyph(ch.to_ascii_uppercase());
        for (row, bits) in g.iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - col)) != 0 {
                    put_safe(img, cx + col as i64, y + row as i64, color);
                }
            }
        }
        cx += CHAR_ADVANCE as i64;
    }
}

/// Outline a rectangle with the given border thickness, clipped to the image.
pub fn draw_rect_border(img: &mut RgbImage, rect: &Rect2D, color: [u8; 3], thickness: u32) {
    let x0 = rect.x_min.floor() as i64;
    let y0 = rect.y_min.floor() as i64;
    let x1 = rect.x_max.ceil() as i64;
    let y1 = rect.y_max.ceil() as i64;
    let t = thickness as i64;
    for dy in 0..t {
        for x in x0..=x1 {
            put_safe(img, x, y0 + dy, color);
            put_safe(img, x, y1 - dy, color);
        }
    }
    for dx in 0..t {
        for y in y0..=y1 {
            put_safe(img, x0 + dx, y, color);
            put_safe(img, x1 - dx, y, color);
        }
    }
}

/// Draw one frame's matches: a query banner across the top and an outlined,
/// id-labeled box per matched track.
pub fn annotate_frame(img: &mut RgbImage, query_text: &str, boxes: &[(u64, Rect2D)]) {
    let banner = format!("QUERY: {query_text}");
    // Dark strip behind the banner for contrast.
    let strip_h = (GLYPH_H + 8).min(img.height());
    for y in 0..strip_h {
        for x in 0..img.width() {
            let p = img.get_pixel(x, y).0;
            img.put_pixel(
                x,
                y,
                image::Rgb([p[0] / 3, p[1] / 3, p[2] / 3]),
            );
        }
    }
    draw_text(img, 4, 4, &banner, [255, 255, 255]);
    for (track_id, rect) in boxes {
        let color = track_color(*track_id);
        draw_rect_border(img, rect, color, 2);
        let label = format!("#{track_id}");
        draw_text(img, rect.x_min as i64 + 3, rect.y_min as i64 + 3, &label, color);
    }
}
