//! Rendering, ground-truth affine matrices, and differentiable warping.
//!
//! Coordinates are normalized to [-1, 1]^2 with x right and y down; positive
//! orientation turns clockwise on screen. A shape with latents z is placed by
//! p -> s*R(phi)*p + t with t = (2*pos - 1). The same 2x3 matrix, used as the
//! warp's output-to-input sampling map, pulls the rendered input back into
//! canonical pose, so `latents_to_matrix` is the ground truth the regressor
//! learns to predict.

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::shapegen::ShapeSpec;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Ratio between the darkened half's intensity and the body intensity.
pub const DARK_FACTOR: f64 = 0.4;

/// One factor-of-variation assignment plus the class id.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Latents {
    pub class_id: u32,
    /// Body tint in (0, 1].
    pub color: f64,
    pub scale: f64,
    /// Orientation in [0, 2*pi).
    pub orientation: f64,
    /// Horizontal position in [0, 1]; 0.5 is the frame center.
    pub pos_x: f64,
    pub pos_y: f64,
}

impl Latents {
    /// Canonical pose: scale 1, orientation 0, centered.
    pub fn canonical(class_id: u32, color: f64) -> Latents {
        Latents {
            class_id,
            color,
            scale: 1.0,
            orientation: 0.0,
            pos_x: 0.5,
            pos_y: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) {
            return Err(Error::config("scale must be > 0"));
        }
        if !(0.0..2.0 * PI).contains(&self.orientation) {
            return Err(Error::config("orientation must be in [0, 2*pi)"));
        }
        if !(0.0..=1.0).contains(&self.pos_x) || !(0.0..=1.0).contains(&self.pos_y) {
            return Err(Error::config("positions must be in [0, 1]"));
        }
        if !(self.color > 0.0 && self.color <= 1.0) {
            return Err(Error::config("color must be in (0, 1]"));
        }
        Ok(())
    }

    /// Frame translation (2*pos_x - 1, 2*pos_y - 1).
    pub fn translation(&self) -> Point {
        Point::new(2.0 * self.pos_x - 1.0, 2.0 * self.pos_y - 1.0)
    }
}

/// 2x3 sampling matrix [a11 a12 b1; a21 a22 b2] on normalized coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMatrix {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub b1: f64,
    pub b2: f64,
}

impl AffineMatrix {
    pub const IDENTITY: AffineMatrix = AffineMatrix {
        a11: 1.0,
        a12: 0.0,
        a21: 0.0,
        a22: 1.0,
        b1: 0.0,
        b2: 0.0,
    };

    /// Entries in row-major order [a11, a12, b1, a21, a22, b2].
    pub fn entries(&self) -> [f64; 6] {
        [self.a11, self.a12, self.b1, self.a21, self.a22, self.b2]
    }

    pub fn from_entries(e: [f64; 6]) -> AffineMatrix {
        AffineMatrix {
            a11: e[0],
            a12: e[1],
            b1: e[2],
            a21: e[3],
            a22: e[4],
            b2: e[5],
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            self.a11 * p.x + self.a12 * p.y + self.b1,
            self.a21 * p.x + self.a22 * p.y + self.b2,
        )
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Matrix of the composite lookup `self.apply(other.apply(o))`, so that
    /// warping with `other` then `self` equals one warp with the composite on
    /// interior pixels.
    pub fn compose(&self, other: &AffineMatrix) -> AffineMatrix {
        AffineMatrix {
            a11: self.a11 * other.a11 + self.a12 * other.a21,
            a12: self.a11 * other.a12 + self.a12 * other.a22,
            b1: self.a11 * other.b1 + self.a12 * other.b2 + self.b1,
            a21: self.a21 * other.a11 + self.a22 * other.a21,
            a22: self.a21 * other.a12 + self.a22 * other.a22,
            b2: self.a21 * other.b1 + self.a22 * other.b2 + self.b2,
        }
    }

    pub fn inverse(&self) -> Result<AffineMatrix> {
        let det = self.det();
        if det.abs() < 1e-9 {
            return Err(Error::config(format!("matrix is singular: det {det:.3e}")));
        }
        let (a11, a12, a21, a22) = (
            self.a22 / det,
            -self.a12 / det,
            -self.a21 / det,
            self.a11 / det,
        );
        Ok(AffineMatrix {
            a11,
            a12,
            a21,
            a22,
            b1: -(a11 * self.b1 + a12 * self.b2),
            b2: -(a21 * self.b1 + a22 * self.b2),
        })
    }
}

/// Single-channel image, row-major f32 pixels in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<f32>,
}

impl Image {
    pub fn zeros(width: u32, height: u32) -> Image {
        Image {
            width,
            height,
            pixels: vec![0.0; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.pixels[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f32) {
        self.pixels[(y * self.width + x) as usize] = v;
    }

    /// Normalized coordinate of a pixel center.
    #[inline]
    pub fn pixel_center(&self, x: u32, y: u32) -> Point {
        Point::new(
            (2.0 * x as f64 + 1.0) / self.width as f64 - 1.0,
            (2.0 * y as f64 + 1.0) / self.height as f64 - 1.0,
        )
    }

    /// Mean squared pixel difference.
    pub fn mse(&self, other: &Image) -> f64 {
        assert_eq!(self.pixels.len(), other.pixels.len());
        let sum: f64 = self
            .pixels
            .iter()
            .zip(other.pixels.iter())
            .map(|(a, b)| {
                let d = *a as f64 - *b as f64;
                d * d
            })
            .sum();
        sum / self.pixels.len() as f64
    }

    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.pixels.len(), other.pixels.len());
        let sum: f64 = self
            .pixels
            .iter()
            .zip(other.pixels.iter())
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum();
        sum / self.pixels.len() as f64
    }

    /// Average-pool by an integer factor; width and height must divide evenly.
    pub fn downsample(&self, factor: u32) -> Image {
        assert!(factor >= 1 && self.width % factor == 0 && self.height % factor == 0);
        if factor == 1 {
            return self.clone();
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = Image::zeros(w, h);
        let inv = 1.0 / (factor * factor) as f64;
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f64;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += self.get(x * factor + dx, y * factor + dy) as f64;
                    }
                }
                out.set(x, y, (acc * inv) as f32);
            }
        }
        out
    }
}

/// Ground-truth sampling matrix [s*R(phi) | t] for latents z.
pub fn latents_to_matrix(z: &Latents) -> AffineMatrix {
    let (s, c) = z.orientation.sin_cos();
    let t = z.translation();
    AffineMatrix {
        a11: z.scale * c,
        a12: -z.scale * s,
        a21: z.scale * s,
        a22: z.scale * c,
        b1: t.x,
        b2: t.y,
    }
}

/// Renders a canonical shape at the given latents.
///
/// The placed outline is filled with the even-odd scanline rule at
/// `supersample` times the target resolution and box-downsampled. The half of
/// the shape with positive local y is darkened to `DARK_FACTOR * color` to
/// make orientation identifiable. Geometry outside the frame is clipped.
pub fn render(shape: &ShapeSpec, z: &Latents, resolution: u32, supersample: u32) -> Result<Image> {
    z.validate()?;
    if resolution == 0 || supersample == 0 {
        return Err(Error::config("resolution and supersample must be >= 1"));
    }
    let t = z.translation();
    let reach = z.scale * (2.0f64.sqrt() / 2.0) * shape.max_radius() + t.x.abs().max(t.y.abs());
    if reach > 1.0 + 1e-9 {
        return Err(Error::FrameViolation(format!(
            "scale {} at position ({}, {}) reaches {:.3} past the frame",
            z.scale, z.pos_x, z.pos_y, reach
        )));
    }

    let grid = resolution * supersample;
    let gridf = grid as f64;
    let (sin_phi, cos_phi) = z.orientation.sin_cos();

    // Placed outline in supersample pixel coordinates ([-1,1] -> [0, grid]).
    let placed: Vec<(f64, f64)> = shape
        .outline
        .iter()
        .map(|&p| {
            let q = Point::new(
                z.scale * (cos_phi * p.x - sin_phi * p.y) + t.x,
                z.scale * (sin_phi * p.x + cos_phi * p.y) + t.y,
            );
            ((q.x + 1.0) * gridf / 2.0, (q.y + 1.0) * gridf / 2.0)
        })
        .collect();

    let body = z.color as f32;
    let dark = (DARK_FACTOR * z.color) as f32;
    let mut buf = vec![0.0f32; (grid * grid) as usize];
    let mut crossings: Vec<f64> = Vec::with_capacity(16);
    for row in 0..grid {
        let y = row as f64 + 0.5;
        crossings.clear();
        for w in placed.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if (y0 <= y && y < y1) || (y1 <= y && y < y0) {
                crossings.push(x0 + (y - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));
        for pair in crossings.chunks_exact(2) {
            let lo = (pair[0] - 0.5).ceil().max(0.0) as i64;
            let hi = ((pair[1] - 0.5).ceil() as i64 - 1).min(grid as i64 - 1);
            for col in lo..=hi {
                // Local-frame y of this sample center decides the dark half.
                let nx = (2.0 * (col as f64 + 0.5)) / gridf - 1.0;
                let ny = (2.0 * y) / gridf - 1.0;
                let local_y = -sin_phi * (nx - t.x) + cos_phi * (ny - t.y);
                buf[(row * grid) as usize + col as usize] =
                    if local_y > 0.0 { dark } else { body };
            }
        }
    }

    let full = Image {
        width: grid,
        height: grid,
        pixels: buf,
    };
    Ok(full.downsample(supersample))
}

#[inline]
fn clamp_coord(v: f64, max_index: f64) -> (f64, bool) {
    if v < 0.0 {
        (0.0, true)
    } else if v > max_index {
        (max_index, true)
    } else {
        (v, false)
    }
}

/// Bilinear sample at continuous pixel coordinates with border padding.
/// Returns the value and its derivatives w.r.t. px and py (zero on clamped
/// axes).
#[inline]
fn bilinear(img: &Image, px: f64, py: f64) -> (f64, f64, f64) {
    let (px, cx) = clamp_coord(px, img.width as f64 - 1.0);
    let (py, cy) = clamp_coord(py, img.height as f64 - 1.0);
    let x0 = px.floor();
    let y0 = py.floor();
    let fx = px - x0;
    let fy = py - y0;
    let x0 = x0 as u32;
    let y0 = y0 as u32;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let v00 = img.get(x0, y0) as f64;
    let v10 = img.get(x1, y0) as f64;
    let v01 = img.get(x0, y1) as f64;
    let v11 = img.get(x1, y1) as f64;
    let value = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
    let dpx = if cx {
        0.0
    } else {
        (1.0 - fy) * (v10 - v00) + fy * (v11 - v01)
    };
    let dpy = if cy {
        0.0
    } else {
        (1.0 - fx) * (v01 - v00) + fx * (v11 - v10)
    };
    (value, dpx, dpy)
}

/// Mean squared error between `warp(img, m)` and `target`, evaluated in f64
/// before any f32 rounding. This is the exact loss `warp_grad` differentiates.
pub fn warp_mse(img: &Image, m: &AffineMatrix, target: &Image) -> f64 {
    assert_eq!(img.width, target.width);
    assert_eq!(img.height, target.height);
    let wf = img.width as f64;
    let hf = img.height as f64;
    let mut sum = 0.0;
    for y in 0..img.height {
        for x in 0..img.width {
            let o = img.pixel_center(x, y);
            let u = m.apply(o);
            let px = (u.x + 1.0) * wf / 2.0 - 0.5;
            let py = (u.y + 1.0) * hf / 2.0 - 0.5;
            let (v, _, _) = bilinear(img, px, py);
            let d = v - target.get(x, y) as f64;
            sum += d * d;
        }
    }
    sum / (img.width * img.height) as f64
}

/// Resamples `img` through the 2x3 lookup matrix with border padding: each
/// output pixel center o takes the bilinear sample of `img` at M*[o; 1].
pub fn warp(img: &Image, m: &AffineMatrix) -> Image {
    let mut out = Image::zeros(img.width, img.height);
    let wf = img.width as f64;
    let hf = img.height as f64;
    for y in 0..img.height {
        for x in 0..img.width {
            let o = img.pixel_center(x, y);
            let u = m.apply(o);
            let px = (u.x + 1.0) * wf / 2.0 - 0.5;
            let py = (u.y + 1.0) * hf / 2.0 - 0.5;
            let (v, _, _) = bilinear(img, px, py);
            out.set(x, y, v as f32);
        }
    }
    out
}

/// Analytic gradient of mse(warp(img, m), target) with respect to the six
/// matrix entries, in `entries()` order. Bilinear kinks (sample coordinates on
/// the pixel grid) carry the interior one-sided derivative.
pub fn warp_grad(img: &Image, m: &AffineMatrix, target: &Image) -> [f64; 6] {
    assert_eq!(img.width, target.width);
    assert_eq!(img.height, target.height);
    let wf = img.width as f64;
    let hf = img.height as f64;
    let n = (img.width * img.height) as f64;
    let mut g = [0.0f64; 6];
    for y in 0..img.height {
        for x in 0..img.width {
            let o = img.pixel_center(x, y);
            let u = m.apply(o);
            let px = (u.x + 1.0) * wf / 2.0 - 0.5;
            let py = (u.y + 1.0) * hf / 2.0 - 0.5;
            let (v, dpx, dpy) = bilinear(img, px, py);
            let r = 2.0 * (v - target.get(x, y) as f64) / n;
            let dux = r * dpx * wf / 2.0;
            let duy = r * dpy * hf / 2.0;
            g[0] += dux * o.x;
            g[1] += dux * o.y;
            g[2] += dux;
            g[3] += duy * o.x;
            g[4] += duy * o.y;
            g[5] += duy;
        }
    }
    g
}
