//! Procedural closed-shape sampling and canonicalization.
//!
//! Shapes start as regular polygons on the unit circle, get their polar
//! coordinates perturbed, and are flattened through either the polygon itself
//! (order 1) or a closed uniform Catmull-Rom spline (order 3). Canonical form
//! places the area centroid at the origin and scales the bounding box's longer
//! side to 1.

use crate::error::{Error, Result};
use crate::geom::{Bbox, Point};
use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplineOrder {
    Linear,
    Cubic,
}

impl SplineOrder {
    pub fn as_u8(self) -> u8 {
        match self {
            SplineOrder::Linear => 1,
            SplineOrder::Cubic => 3,
        }
    }

    pub fn from_u8(v: u8) -> Option<SplineOrder> {
        match v {
            1 => Some(SplineOrder::Linear),
            3 => Some(SplineOrder::Cubic),
            _ => None,
        }
    }
}

/// Generator parameters. Validated on construction; `sample_shape` assumes a
/// valid config and cannot fail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub vertex_min: u32,
    pub vertex_max: u32,
    /// Multiplicative radial jitter half-range, in [0, 1): r *= U[1-a, 1+a].
    pub radial_noise: f64,
    /// Additive angular jitter as a fraction of half the nominal gap, in
    /// [0, 1): phi += U[-b, b] * (2*pi/n) / 2. Keeps vertices angularly ordered.
    pub angular_noise: f64,
    pub spline_orders: Vec<SplineOrder>,
    pub samples_per_segment: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            vertex_min: 3,
            vertex_max: 8,
            radial_noise: 0.25,
            angular_noise: 0.5,
            spline_orders: vec![SplineOrder::Linear, SplineOrder::Cubic],
            samples_per_segment: 64,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vertex_min < 3 {
            return Err(Error::config("vertex_min must be >= 3"));
        }
        if self.vertex_max < self.vertex_min {
            return Err(Error::config("vertex_max must be >= vertex_min"));
        }
        if !(0.0..1.0).contains(&self.radial_noise) {
            return Err(Error::config("radial_noise must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.angular_noise) {
            return Err(Error::config("angular_noise must be in [0, 1)"));
        }
        if self.spline_orders.is_empty() {
            return Err(Error::config("spline_orders must be non-empty"));
        }
        if self.samples_per_segment < 1 {
            return Err(Error::config("samples_per_segment must be >= 1"));
        }
        Ok(())
    }
}

/// A procedurally generated closed shape in canonical form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub control_vertices: Vec<Point>,
    pub spline_order: SplineOrder,
    /// Flattened closed outline; first point equals last point exactly.
    pub outline: Vec<Point>,
    pub centroid: Point,
    pub bbox: Bbox,
}

impl ShapeSpec {
    /// Absolute shoelace area of the outline.
    pub fn area(&self) -> f64 {
        shoelace(&self.outline).0.abs()
    }

    /// Largest distance from the centroid to an outline point.
    pub fn max_radius(&self) -> f64 {
        self.outline
            .iter()
            .map(|p| (*p - self.centroid).norm())
            .fold(0.0, f64::max)
    }
}

/// Winding of a closed outline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Winding {
    CounterClockwise,
    Clockwise,
}

/// Area centroid and absolute area of a closed outline, with winding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionMass {
    pub centroid: Point,
    pub area: f64,
    pub winding: Winding,
}

fn shoelace(outline: &[Point]) -> (f64, Point) {
    let mut a2 = 0.0; // twice the signed area
    let mut cx = 0.0;
    let mut cy = 0.0;
    for w in outline.windows(2) {
        let (p, q) = (w[0], w[1]);
        let cross = p.x * q.y - q.x * p.y;
        a2 += cross;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    let area = 0.5 * a2;
    if area.abs() < f64::MIN_POSITIVE {
        return (area, Point::ZERO);
    }
    (area, Point::new(cx / (6.0 * area), cy / (6.0 * area)))
}

/// Signed-area centroid of a closed outline (Green's theorem).
///
/// The outline must be closed (first == last). Self-intersection is not
/// checked; the rasterizer's even-odd rule defines the region in that case.
pub fn centroid_area(outline: &[Point]) -> Result<RegionMass> {
    if outline.len() < 4 || outline.first() != outline.last() {
        return Err(Error::degenerate("outline must be closed with >= 3 distinct points"));
    }
    let (signed, centroid) = shoelace(outline);
    if signed.abs() < 1e-12 {
        return Err(Error::degenerate(format!("area {signed:.3e} below 1e-12")));
    }
    Ok(RegionMass {
        centroid,
        area: signed.abs(),
        winding: if signed > 0.0 {
            Winding::CounterClockwise
        } else {
            Winding::Clockwise
        },
    })
}

/// Flattens control vertices into a closed polyline.
///
/// Order 1 subdivides each polygon edge into `samples_per_segment` equal
/// steps; order 3 samples a closed uniform Catmull-Rom spline through the
/// vertices. Closure is exact: the first point is pushed again at the end.
pub fn flatten_spline(
    control_vertices: &[Point],
    order: SplineOrder,
    samples_per_segment: u32,
) -> Result<Vec<Point>> {
    if control_vertices.len() < 3 {
        return Err(Error::degenerate(format!(
            "{} control vertices, need >= 3",
            control_vertices.len()
        )));
    }
    let n = control_vertices.len();
    let steps = samples_per_segment.max(1) as usize;
    let mut outline = Vec::with_capacity(n * steps + 1);
    match order {
        SplineOrder::Linear => {
            for k in 0..n {
                let p0 = control_vertices[k];
                let p1 = control_vertices[(k + 1) % n];
                for i in 0..steps {
                    let t = i as f64 / steps as f64;
                    outline.push(p0 + (p1 - p0) * t);
                }
            }
        }
        SplineOrder::Cubic => {
            for k in 0..n {
                let p0 = control_vertices[(k + n - 1) % n];
                let p1 = control_vertices[k];
                let p2 = control_vertices[(k + 1) % n];
                let p3 = control_vertices[(k + 2) % n];
                for i in 0..steps {
                    let t = i as f64 / steps as f64;
                    outline.push(catmull_rom(p0, p1, p2, p3, t));
                }
            }
        }
    }
    let first = outline[0];
    outline.push(first);
    Ok(outline)
}

/// Uniform Catmull-Rom segment between p1 and p2; exact at t = 0 (returns p1).
fn catmull_rom(p0: Point, p1: Point, p2: Point, p3: Point, t: f64) -> Point {
    let t2 = t * t;
    let t3 = t2 * t;
    let c0 = p1 * 2.0;
    let c1 = (p2 - p0) * t;
    let c2 = (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2;
    let c3 = ((p1 - p2) * 3.0 + p3 - p0) * t3;
    (c0 + c1 + c2 + c3) * 0.5
}

/// Centers the area centroid at the origin and scales the bounding box's
/// longer side to exactly 1. Idempotent up to floating-point noise.
pub fn canonicalize(shape: ShapeSpec) -> Result<ShapeSpec> {
    let mass = centroid_area(&shape.outline)?;
    let c = mass.centroid;
    let centered: Vec<Point> = shape.outline.iter().map(|&p| p - c).collect();
    let bbox = Bbox::from_points(&centered).expect("outline is non-empty");
    let side = bbox.max_side();
    if side < 1e-12 {
        return Err(Error::degenerate("bounding box collapsed"));
    }
    let s = 1.0 / side;
    let outline: Vec<Point> = centered.into_iter().map(|p| p * s).collect();
    let control_vertices: Vec<Point> = shape
        .control_vertices
        .iter()
        .map(|&p| (p - c) * s)
        .collect();
    let mass = centroid_area(&outline)?;
    let bbox = Bbox::from_points(&outline).expect("outline is non-empty");
    Ok(ShapeSpec {
        control_vertices,
        spline_order: shape.spline_order,
        outline,
        centroid: mass.centroid,
        bbox,
    })
}

/// Samples a random closed shape and returns it in canonical form.
///
/// Vertex count is uniform over [vertex_min, vertex_max]; vertex k starts at
/// polar (1, 2*pi*k/n) counter-clockwise from angle 0, radius is scaled by
/// U[1-radial_noise, 1+radial_noise] and angle offset by
/// U[-angular_noise, angular_noise] * (pi/n). Draw order (vertex count, then
/// per-vertex radius and angle, then spline order) is part of the contract.
pub fn sample_shape(seed: u64, cfg: &GenConfig) -> ShapeSpec {
    debug_assert!(cfg.validate().is_ok());
    let mut rng = SplitMix64::new(seed);
    let n = rng.uniform_u64(cfg.vertex_min as u64, cfg.vertex_max as u64) as usize;
    let mut vertices = Vec::with_capacity(n);
    for k in 0..n {
        let radial = rng.uniform(1.0 - cfg.radial_noise, 1.0 + cfg.radial_noise);
        let angular = rng.uniform(-cfg.angular_noise, cfg.angular_noise) * PI / n as f64;
        let phi = 2.0 * PI * k as f64 / n as f64 + angular;
        vertices.push(Point::new(radial * phi.cos(), radial * phi.sin()));
    }
    let order = cfg.spline_orders[rng.uniform_usize(0, cfg.spline_orders.len() - 1)];
    let outline = flatten_spline(&vertices, order, cfg.samples_per_segment)
        .expect("n >= 3 by config validation");
    let shape = ShapeSpec {
        control_vertices: vertices,
        spline_order: order,
        outline,
        centroid: Point::ZERO,
        bbox: Bbox {
            min_x: 0.0,
            min_y: 0.0,
            max_x: 0.0,
            max_y: 0.0,
        },
    };
    canonicalize(shape).expect("noise bounds keep the sampled outline non-degenerate")
}
