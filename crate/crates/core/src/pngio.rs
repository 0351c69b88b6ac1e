//! Grayscale PNG export/import for images in [0, 1].

use crate::error::{Error, Result};
use crate::raster::Image;
use std::path::Path;

/// Writes an image as 8-bit grayscale PNG with round-half-up quantization.
pub fn save_gray_png(img: &Image, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img
        .pixels
        .iter()
        .map(|&v| ((v as f64 * 255.0 + 0.5).floor() as i64).clamp(0, 255) as u8)
        .collect();
    let gray = image::GrayImage::from_raw(img.width, img.height, bytes)
        .expect("buffer matches dimensions");
    gray.save(path)
        .map_err(|e| Error::config(format!("png write failed: {e}")))?;
    Ok(())
}

/// Reads an 8-bit grayscale PNG back into [0, 1] pixels.
pub fn load_gray_png(path: &Path) -> Result<Image> {
    let img = image::open(path)
        .map_err(|e| Error::config(format!("png read failed: {e}")))?
        .into_luma8();
    Ok(Image {
        width: img.width(),
        height: img.height(),
        pixels: img.as_raw().iter().map(|&b| b as f32 / 255.0).collect(),
    })
}

/// Tiles images of equal size into a grid PNG, row-major, `cols` per row.
pub fn save_grid_png(images: &[&Image], cols: u32, path: &Path) -> Result<()> {
    if images.is_empty() {
        return Err(Error::config("no images to tile"));
    }
    let (w, h) = (images[0].width, images[0].height);
    if images.iter().any(|i| i.width != w || i.height != h) {
        return Err(Error::config("grid tiles must share a resolution"));
    }
    let cols = cols.max(1);
    let rows = (images.len() as u32).div_ceil(cols);
    let pad = 2u32;
    let mut canvas = Image::zeros(cols * (w + pad) + pad, rows * (h + pad) + pad);
    for (idx, img) in images.iter().enumerate() {
        let gx = (idx as u32 % cols) * (w + pad) + pad;
        let gy = (idx as u32 / cols) * (h + pad) + pad;
        for y in 0..h {
            for x in 0..w {
                canvas.set(gx + x, gy + y, img.get(x, y));
            }
        }
    }
    save_gray_png(&canvas, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_quantizes_half_up() {
        let img = Image {
            width: 3,
            height: 1,
            pixels: vec![0.0, 0.5, 1.0],
        };
        let dir = std::env::temp_dir().join("idsprites-png-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.png");
        save_gray_png(&img, &path).unwrap();
        let back = load_gray_png(&path).unwrap();
        // 0.5 * 255 = 127.5 rounds half-up to 128.
        assert_eq!(back.pixels[0], 0.0);
        assert_eq!(back.pixels[1], 128.0 / 255.0);
        assert_eq!(back.pixels[2], 1.0);
    }
}
