//! Benchmark stream assembly: per-task shape sets, full factor grids,
//! train/val/test splits, the bounded class-balanced accumulated test set,
//! and dataset files.
//!
//! Every task is a pure function of (StreamConfig, task index): shape seeds
//! are derived per (master_seed, task, shape), so task t can be regenerated
//! without touching tasks before it. Samples are stored as render recipes
//! (shape + latents) and rendered lazily; dataset files support both recipe
//! and eager pixel payloads.

use crate::error::{Error, FormatError, Result};
use crate::format;
use crate::geom::Point;
use crate::raster::{render, Image, Latents};
use crate::reservoir::BalancedReservoir;
use crate::rng::{derive_seed, SplitMix64};
use crate::shapegen::{sample_shape, GenConfig, ShapeSpec, SplineOrder};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

const DATASET_MAGIC: &[u8; 4] = b"IDSP";
const DATASET_VERSION: u16 = 1;

const TAG_SHAPE: u64 = 0x5348_4150; // "SHAP"
const TAG_SPLIT: u64 = 0x53_504C_54; // "SPLT"

/// Grid sizes per factor of variation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorValues {
    pub scale: u32,
    pub orientation: u32,
    pub pos_x: u32,
    pub pos_y: u32,
}

impl FactorValues {
    pub fn uniform(k: u32) -> FactorValues {
        FactorValues {
            scale: k,
            orientation: k,
            pos_x: k,
            pos_y: k,
        }
    }

    pub fn product(&self) -> usize {
        self.scale as usize * self.orientation as usize * self.pos_x as usize * self.pos_y as usize
    }
}

/// Value ranges per factor. Scale and positions are sampled on inclusive
/// grids; orientation on an endpoint-exclusive grid so 0 and 2*pi never both
/// appear.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorRanges {
    pub scale: (f64, f64),
    pub orientation: (f64, f64),
    pub pos_x: (f64, f64),
    pub pos_y: (f64, f64),
}

impl Default for FactorRanges {
    fn default() -> Self {
        FactorRanges {
            scale: (0.5, 1.0),
            orientation: (0.0, 2.0 * PI),
            pos_x: (0.25, 0.75),
            pos_y: (0.25, 0.75),
        }
    }
}

/// Inclusive grid: k evenly spaced values with both endpoints; k = 1 gives
/// the midpoint.
pub fn grid_inclusive(lo: f64, hi: f64, k: u32) -> Vec<f64> {
    if k == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

/// Endpoint-exclusive grid: k values starting at lo with spacing
/// (hi - lo) / k; k = 1 gives lo.
pub fn grid_exclusive(lo: f64, hi: f64, k: u32) -> Vec<f64> {
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / k as f64)
        .collect()
}

/// Generator parameters for a whole benchmark stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub num_tasks: u32,
    pub shapes_per_task: u32,
    pub values_per_factor: FactorValues,
    #[serde(default)]
    pub ranges: FactorRanges,
    #[serde(default)]
    pub gen: GenConfig,
    #[serde(default = "default_resolution")]
    pub resolution: u32,
    #[serde(default = "default_supersample")]
    pub supersample: u32,
    /// Fixed body tint applied to every sample.
    #[serde(default = "default_color")]
    pub color: f64,
    /// (train, val, test), non-negative, summing to 1.
    pub split_ratios: (f64, f64, f64),
    /// Upper bound on the accumulated test set.
    pub test_cap: usize,
    pub master_seed: u64,
}

fn default_resolution() -> u32 {
    64
}

fn default_supersample() -> u32 {
    2
}

fn default_color() -> f64 {
    1.0
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_tasks < 1 || self.shapes_per_task < 1 {
            return Err(Error::config("num_tasks and shapes_per_task must be >= 1"));
        }
        let k = &self.values_per_factor;
        if k.scale < 1 || k.orientation < 1 || k.pos_x < 1 || k.pos_y < 1 {
            return Err(Error::config("every factor needs at least one value"));
        }
        self.gen.validate()?;
        if self.resolution < 1 || self.supersample < 1 {
            return Err(Error::config("resolution and supersample must be >= 1"));
        }
        if !(self.color > 0.0 && self.color <= 1.0) {
            return Err(Error::config("color must be in (0, 1]"));
        }
        let (a, b, c) = self.split_ratios;
        if a < 0.0 || b < 0.0 || c < 0.0 {
            return Err(Error::config("split ratios must be non-negative"));
        }
        if ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(Error::config("split ratios must sum to 1"));
        }
        let task_test = (self.samples_per_task() as f64 * c).round() as usize;
        if self.test_cap < task_test {
            return Err(Error::config(format!(
                "test_cap {} below one task's test share {}",
                self.test_cap, task_test
            )));
        }
        Ok(())
    }

    pub fn samples_per_task(&self) -> usize {
        self.shapes_per_task as usize * self.values_per_factor.product()
    }

    pub fn scale_grid(&self) -> Vec<f64> {
        grid_inclusive(self.ranges.scale.0, self.ranges.scale.1, self.values_per_factor.scale)
    }

    pub fn orientation_grid(&self) -> Vec<f64> {
        grid_exclusive(
            self.ranges.orientation.0,
            self.ranges.orientation.1,
            self.values_per_factor.orientation,
        )
    }

    pub fn pos_x_grid(&self) -> Vec<f64> {
        grid_inclusive(self.ranges.pos_x.0, self.ranges.pos_x.1, self.values_per_factor.pos_x)
    }

    pub fn pos_y_grid(&self) -> Vec<f64> {
        grid_inclusive(self.ranges.pos_y.0, self.ranges.pos_y.1, self.values_per_factor.pos_y)
    }

    /// Seed for shape `i` of task `t`.
    pub fn shape_seed(&self, t: u32, i: u32) -> u64 {
        derive_seed(self.master_seed, &[TAG_SHAPE, t as u64, i as u64])
    }

    /// Seed for task `t`'s split shuffle.
    pub fn split_seed(&self, t: u32) -> u64 {
        derive_seed(self.master_seed, &[TAG_SPLIT, t as u64])
    }
}

/// One sample: a render recipe and optionally its eager pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub shape: Arc<ShapeSpec>,
    pub latents: Latents,
    pub pixels: Option<Image>,
}

impl Sample {
    pub fn class_id(&self) -> u32 {
        self.latents.class_id
    }

    /// Eager pixels if present, otherwise a fresh render.
    pub fn image(&self, resolution: u32, supersample: u32) -> Result<Image> {
        match &self.pixels {
            Some(px) => Ok(px.clone()),
            None => render(&self.shape, &self.latents, resolution, supersample),
        }
    }
}

/// One task's shapes, samples, and canonical exemplars.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset {
    pub task_index: u32,
    pub first_class_id: u32,
    pub resolution: u32,
    pub supersample: u32,
    pub color: f64,
    pub shapes: Vec<Arc<ShapeSpec>>,
    pub shape_seeds: Vec<u64>,
    /// Factor grids the samples enumerate (scale, orientation, pos_x, pos_y).
    pub grids: [Vec<f64>; 4],
    pub ranges: FactorRanges,
    /// Shape-major enumeration over scale, orientation, pos_x, pos_y.
    pub samples: Vec<Sample>,
    /// Canonical render per class, in class-id order.
    pub exemplars: Vec<(u32, Image)>,
}

impl TaskDataset {
    pub fn class_ids(&self) -> Vec<u32> {
        (0..self.shapes.len() as u32)
            .map(|i| self.first_class_id + i)
            .collect()
    }

    pub fn shape_for_class(&self, class_id: u32) -> Option<&Arc<ShapeSpec>> {
        let idx = class_id.checked_sub(self.first_class_id)? as usize;
        self.shapes.get(idx)
    }

    pub fn render_sample(&self, index: usize) -> Result<Image> {
        self.samples[index].image(self.resolution, self.supersample)
    }

    /// True when every sample carries eager pixels.
    pub fn is_materialized(&self) -> bool {
        self.samples.iter().all(|s| s.pixels.is_some())
    }

    /// Renders every sample into its `pixels` slot.
    pub fn materialize(&mut self) -> Result<()> {
        use rayon::prelude::*;
        let (res, ss) = (self.resolution, self.supersample);
        let rendered: Vec<Image> = self
            .samples
            .par_iter()
            .map(|s| s.image(res, ss))
            .collect::<Result<_>>()?;
        for (s, img) in self.samples.iter_mut().zip(rendered) {
            s.pixels = Some(img);
        }
        Ok(())
    }
}

/// Builds task `t`: fresh shapes under derived seeds, globally unique
/// consecutive class ids, and the full factor-grid product per shape.
pub fn make_task(cfg: &StreamConfig, t: u32) -> TaskDataset {
    assert!(t < cfg.num_tasks, "task index {t} out of range");
    debug_assert!(cfg.validate().is_ok());
    let n = cfg.shapes_per_task;
    let first_class_id = t * n;
    let shape_seeds: Vec<u64> = (0..n).map(|i| cfg.shape_seed(t, i)).collect();
    let shapes: Vec<Arc<ShapeSpec>> = shape_seeds
        .iter()
        .map(|&seed| Arc::new(sample_shape(seed, &cfg.gen)))
        .collect();

    let grids = [
        cfg.scale_grid(),
        cfg.orientation_grid(),
        cfg.pos_x_grid(),
        cfg.pos_y_grid(),
    ];
    let mut samples = Vec::with_capacity(cfg.samples_per_task());
    for (i, shape) in shapes.iter().enumerate() {
        let class_id = first_class_id + i as u32;
        for &scale in &grids[0] {
            for &orientation in &grids[1] {
                for &pos_x in &grids[2] {
                    for &pos_y in &grids[3] {
                        samples.push(Sample {
                            shape: Arc::clone(shape),
                            latents: Latents {
                                class_id,
                                color: cfg.color,
                                scale,
                                orientation,
                                pos_x,
                                pos_y,
                            },
                            pixels: None,
                        });
                    }
                }
            }
        }
    }

    let exemplars: Vec<(u32, Image)> = shapes
        .iter()
        .enumerate()
        .map(|(i, shape)| {
            let class_id = first_class_id + i as u32;
            let img = render(
                shape,
                &Latents::canonical(class_id, cfg.color),
                cfg.resolution,
                cfg.supersample,
            )
            .expect("canonical pose always fits the frame");
            (class_id, img)
        })
        .collect();

    TaskDataset {
        task_index: t,
        first_class_id,
        resolution: cfg.resolution,
        supersample: cfg.supersample,
        color: cfg.color,
        shapes,
        shape_seeds,
        grids,
        ranges: cfg.ranges,
        samples,
        exemplars,
    }
}

/// Disjoint, exhaustive sample-index partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle split. Val and test sizes are the ratios rounded to
/// nearest; train takes the remainder. With `demand_nonempty`, a positive
/// ratio that rounds to an empty part is a config error.
pub fn split(
    ds: &TaskDataset,
    ratios: (f64, f64, f64),
    seed: u64,
    demand_nonempty: bool,
) -> Result<SplitIndices> {
    let (r_train, r_val, r_test) = ratios;
    if r_train < 0.0 || r_val < 0.0 || r_test < 0.0 {
        return Err(Error::config("split ratios must be non-negative"));
    }
    if ((r_train + r_val + r_test) - 1.0).abs() > 1e-9 {
        return Err(Error::config("split ratios must sum to 1"));
    }
    let n = ds.samples.len();
    let n_val = (n as f64 * r_val).round() as usize;
    let n_test = (n as f64 * r_test).round() as usize;
    if n_val + n_test > n {
        return Err(Error::config("val and test shares exceed the sample count"));
    }
    let n_train = n - n_val - n_test;
    if demand_nonempty {
        for (ratio, size, name) in [
            (r_train, n_train, "train"),
            (r_val, n_val, "val"),
            (r_test, n_test, "test"),
        ] {
            if ratio > 0.0 && size == 0 {
                return Err(Error::config(format!("{name} split is empty at ratio {ratio}")));
            }
        }
    }
    let mut indices: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut indices);
    let val = indices[n_train..n_train + n_val].to_vec();
    let test = indices[n_train + n_val..].to_vec();
    let mut train = indices;
    train.truncate(n_train);
    Ok(SplitIndices { train, val, test })
}

/// Bounded class-balanced accumulated test set.
#[derive(Clone, Debug)]
pub struct TestAccumulator {
    reservoir: BalancedReservoir<Sample>,
}

impl TestAccumulator {
    pub fn new(capacity: usize, seed: u64) -> TestAccumulator {
        TestAccumulator {
            reservoir: BalancedReservoir::new(capacity, seed),
        }
    }

    /// Folds a task's test split in; below capacity this is a union, above it
    /// the per-class reservoir evicts down to quota.
    pub fn add_task_split(&mut self, ds: &TaskDataset, test_indices: &[usize]) {
        self.reservoir.add_batch(
            test_indices
                .iter()
                .map(|&i| (ds.samples[i].class_id(), ds.samples[i].clone())),
        );
    }

    pub fn len(&self) -> usize {
        self.reservoir.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reservoir.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.reservoir.classes()
    }

    pub fn count_for(&self, class_id: u32) -> usize {
        self.reservoir.count_for(class_id)
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.reservoir.iter().map(|(_, s)| s)
    }

    /// Max minus min per-class count over classes still represented.
    pub fn balance_spread(&self) -> usize {
        let mut counts = std::collections::BTreeMap::new();
        for (c, _) in self.reservoir.iter() {
            *counts.entry(c).or_insert(0usize) += 1;
        }
        match (counts.values().max(), counts.values().min()) {
            (Some(max), Some(min)) => max - min,
            _ => 0,
        }
    }
}

fn write_point(w: &mut format::Writer, p: Point) {
    w.f64(p.x);
    w.f64(p.y);
}

fn read_point(r: &mut format::Reader) -> std::result::Result<Point, FormatError> {
    Ok(Point::new(r.f64()?, r.f64()?))
}

fn write_shape(w: &mut format::Writer, shape: &ShapeSpec) {
    w.u8(shape.spline_order.as_u8());
    w.u32(shape.control_vertices.len() as u32);
    for &p in &shape.control_vertices {
        write_point(w, p);
    }
    w.u32(shape.outline.len() as u32);
    for &p in &shape.outline {
        write_point(w, p);
    }
    write_point(w, shape.centroid);
    w.f64(shape.bbox.min_x);
    w.f64(shape.bbox.min_y);
    w.f64(shape.bbox.max_x);
    w.f64(shape.bbox.max_y);
}

fn read_shape(r: &mut format::Reader) -> std::result::Result<ShapeSpec, FormatError> {
    let order = SplineOrder::from_u8(r.u8()?)
        .ok_or_else(|| FormatError::Malformed("unknown spline order".into()))?;
    let n_ctrl = r.u32()? as usize;
    let mut control_vertices = Vec::with_capacity(n_ctrl);
    for _ in 0..n_ctrl {
        control_vertices.push(read_point(r)?);
    }
    let n_outline = r.u32()? as usize;
    let mut outline = Vec::with_capacity(n_outline);
    for _ in 0..n_outline {
        outline.push(read_point(r)?);
    }
    let centroid = read_point(r)?;
    let bbox = crate::geom::Bbox {
        min_x: r.f64()?,
        min_y: r.f64()?,
        max_x: r.f64()?,
        max_y: r.f64()?,
    };
    Ok(ShapeSpec {
        control_vertices,
        spline_order: order,
        outline,
        centroid,
        bbox,
    })
}

fn write_image(w: &mut format::Writer, img: &Image) {
    w.u32(img.width);
    w.u32(img.height);
    for &v in &img.pixels {
        w.f32(v);
    }
}

fn read_image(r: &mut format::Reader) -> std::result::Result<Image, FormatError> {
    let width = r.u32()?;
    let height = r.u32()?;
    let n = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| FormatError::Malformed("image size overflow".into()))?;
    let mut pixels = Vec::with_capacity(n);
    for _ in 0..n {
        pixels.push(r.f32()?);
    }
    Ok(Image {
        width,
        height,
        pixels,
    })
}

/// Sidecar manifest written next to every dataset file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task_index: u32,
    pub class_ids: Vec<u32>,
    pub shape_seeds: Vec<u64>,
    pub resolution: u32,
    pub supersample: u32,
    pub color: f64,
    pub values_per_factor: FactorValues,
    pub ranges: FactorRanges,
    pub payload_kind: u8,
    pub num_samples: usize,
}

/// Writes a task dataset plus its JSON manifest sidecar.
///
/// Payload kind is inferred: recipe (0) when no sample carries pixels, eager
/// (1) when all do. Mixed payloads are rejected.
pub fn write_dataset(ds: &TaskDataset, path: &Path) -> Result<()> {
    let eager = ds.samples.iter().filter(|s| s.pixels.is_some()).count();
    let kind: u8 = if eager == 0 {
        0
    } else if eager == ds.samples.len() {
        1
    } else {
        return Err(Error::config("dataset mixes recipe and pixel samples"));
    };

    let mut w = format::Writer::new();
    w.u8(kind);
    w.u32(ds.task_index);
    w.u32(ds.first_class_id);
    w.u32(ds.shapes.len() as u32);
    w.u32(ds.resolution);
    w.u32(ds.supersample);
    w.f64(ds.color);
    let k = [
        ds.grids[0].len() as u32,
        ds.grids[1].len() as u32,
        ds.grids[2].len() as u32,
        ds.grids[3].len() as u32,
    ];
    for v in k {
        w.u32(v);
    }
    for (lo, hi) in [
        ds.ranges.scale,
        ds.ranges.orientation,
        ds.ranges.pos_x,
        ds.ranges.pos_y,
    ] {
        w.f64(lo);
        w.f64(hi);
    }
    for &seed in &ds.shape_seeds {
        w.u64(seed);
    }
    for shape in &ds.shapes {
        write_shape(&mut w, shape);
    }
    if kind == 1 {
        w.u64(ds.samples.len() as u64);
        for s in &ds.samples {
            write_image(&mut w, s.pixels.as_ref().expect("kind 1 has pixels"));
        }
        w.u64(ds.exemplars.len() as u64);
        for (_, img) in &ds.exemplars {
            write_image(&mut w, img);
        }
    }
    format::write_file(path, DATASET_MAGIC, DATASET_VERSION, &w.into_bytes())?;

    let manifest = DatasetManifest {
        task_index: ds.task_index,
        class_ids: ds.class_ids(),
        shape_seeds: ds.shape_seeds.clone(),
        resolution: ds.resolution,
        supersample: ds.supersample,
        color: ds.color,
        values_per_factor: FactorValues {
            scale: k[0],
            orientation: k[1],
            pos_x: k[2],
            pos_y: k[3],
        },
        ranges: ds.ranges,
        payload_kind: kind,
        num_samples: ds.samples.len(),
    };
    let manifest_path = path.with_extension("json");
    std::fs::write(manifest_path, serde_json::to_string_pretty(&manifest).expect("serializable"))?;
    Ok(())
}

/// Reads a dataset file. All parameters come from the header; recipe payloads
/// re-render exemplars, pixel payloads restore them byte-for-byte.
pub fn read_dataset(path: &Path) -> Result<TaskDataset> {
    let payload = format::read_file(path, DATASET_MAGIC, DATASET_VERSION)?;
    let mut r = format::Reader::new(&payload);
    let kind = r.u8()?;
    if kind > 1 {
        return Err(FormatError::Malformed(format!("unknown payload kind {kind}")).into());
    }
    let task_index = r.u32()?;
    let first_class_id = r.u32()?;
    let n_shapes = r.u32()? as usize;
    let resolution = r.u32()?;
    let supersample = r.u32()?;
    let color = r.f64()?;
    let k: Vec<u32> = (0..4).map(|_| r.u32()).collect::<std::result::Result<_, _>>()?;
    let mut range_pairs = [(0.0, 0.0); 4];
    for pair in range_pairs.iter_mut() {
        *pair = (r.f64()?, r.f64()?);
    }
    let ranges = FactorRanges {
        scale: range_pairs[0],
        orientation: range_pairs[1],
        pos_x: range_pairs[2],
        pos_y: range_pairs[3],
    };
    let mut shape_seeds = Vec::with_capacity(n_shapes);
    for _ in 0..n_shapes {
        shape_seeds.push(r.u64()?);
    }
    let mut shapes = Vec::with_capacity(n_shapes);
    for _ in 0..n_shapes {
        shapes.push(Arc::new(read_shape(&mut r)?));
    }

    let grids = [
        grid_inclusive(ranges.scale.0, ranges.scale.1, k[0]),
        grid_exclusive(ranges.orientation.0, ranges.orientation.1, k[1]),
        grid_inclusive(ranges.pos_x.0, ranges.pos_x.1, k[2]),
        grid_inclusive(ranges.pos_y.0, ranges.pos_y.1, k[3]),
    ];

    let mut samples = Vec::new();
    for (i, shape) in shapes.iter().enumerate() {
        let class_id = first_class_id + i as u32;
        for &scale in &grids[0] {
            for &orientation in &grids[1] {
                for &pos_x in &grids[2] {
                    for &pos_y in &grids[3] {
                        samples.push(Sample {
                            shape: Arc::clone(shape),
                            latents: Latents {
                                class_id,
                                color,
                                scale,
                                orientation,
                                pos_x,
                                pos_y,
                            },
                            pixels: None,
                        });
                    }
                }
            }
        }
    }

    let exemplars: Vec<(u32, Image)>;
    if kind == 1 {
        let n_samples = r.u64()? as usize;
        if n_samples != samples.len() {
            return Err(FormatError::Malformed(format!(
                "header implies {} samples, payload has {n_samples}",
                samples.len()
            ))
            .into());
        }
        for s in samples.iter_mut() {
            s.pixels = Some(read_image(&mut r)?);
        }
        let n_ex = r.u64()? as usize;
        if n_ex != n_shapes {
            return Err(FormatError::Malformed("exemplar count mismatch".into()).into());
        }
        let mut ex = Vec::with_capacity(n_ex);
        for i in 0..n_ex {
            ex.push((first_class_id + i as u32, read_image(&mut r)?));
        }
        exemplars = ex;
    } else {
        exemplars = shapes
            .iter()
            .enumerate()
            .map(|(i, shape)| {
                let class_id = first_class_id + i as u32;
                let img = render(
                    shape,
                    &Latents::canonical(class_id, color),
                    resolution,
                    supersample,
                )
                .expect("canonical pose always fits the frame");
                (class_id, img)
            })
            .collect();
    }
    if r.remaining() != 0 {
        return Err(FormatError::Malformed(format!("{} trailing bytes", r.remaining())).into());
    }

    Ok(TaskDataset {
        task_index,
        first_class_id,
        resolution,
        supersample,
        color,
        shapes,
        shape_seeds,
        grids,
        ranges,
        samples,
        exemplars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config() -> StreamConfig {
        StreamConfig {
            num_tasks: 3,
            shapes_per_task: 1,
            values_per_factor: FactorValues::uniform(2),
            ranges: FactorRanges::default(),
            gen: GenConfig::default(),
            resolution: 16,
            supersample: 2,
            color: 1.0,
            split_ratios: (0.5, 0.25, 0.25),
            test_cap: 100,
            master_seed: 7,
        }
    }

    #[test]
    fn sample_counts_match_grid_product() {
        let cfg = tiny_config();
        let ds = make_task(&cfg, 0);
        assert_eq!(ds.samples.len(), 16);

        let full = StreamConfig {
            num_tasks: 1,
            shapes_per_task: 10,
            values_per_factor: FactorValues::uniform(8),
            test_cap: 50_000,
            ..tiny_config()
        };
        assert_eq!(full.samples_per_task(), 40_960);
    }

    #[test]
    fn make_task_is_deterministic_and_classes_unique() {
        let cfg = StreamConfig {
            shapes_per_task: 3,
            ..tiny_config()
        };
        let a = make_task(&cfg, 1);
        let b = make_task(&cfg, 1);
        assert_eq!(a, b);
        assert_eq!(a.class_ids(), vec![3, 4, 5]);
        let t0 = make_task(&cfg, 0);
        assert!(t0.class_ids().iter().all(|c| !a.class_ids().contains(c)));
    }

    #[test]
    fn latents_lie_exactly_on_the_grid() {
        let cfg = tiny_config();
        let ds = make_task(&cfg, 0);
        for s in &ds.samples {
            assert!(ds.grids[0].contains(&s.latents.scale));
            assert!(ds.grids[1].contains(&s.latents.orientation));
            assert!(ds.grids[2].contains(&s.latents.pos_x));
            assert!(ds.grids[3].contains(&s.latents.pos_y));
        }
    }

    #[test]
    fn split_sizes_follow_rounding_rule() {
        // 40,960 samples at 98:1:1 -> val and test round to 410 each.
        let n = 40_960usize;
        let n_val = (n as f64 * 0.01).round() as usize;
        assert_eq!(n_val, 410);
        assert_eq!(n - 2 * n_val, 40_140);

        let cfg = tiny_config();
        let ds = make_task(&cfg, 0);
        let s = split(&ds, (0.5, 0.25, 0.25), 3, true).unwrap();
        assert_eq!(s.train.len(), 8);
        assert_eq!(s.val.len(), 4);
        assert_eq!(s.test.len(), 4);
        // Disjoint and exhaustive.
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn split_everything_to_train() {
        let cfg = tiny_config();
        let ds = make_task(&cfg, 0);
        let s = split(&ds, (1.0, 0.0, 0.0), 3, true).unwrap();
        assert_eq!(s.train.len(), 16);
        assert!(s.val.is_empty() && s.test.is_empty());
    }

    #[test]
    fn split_is_deterministic() {
        let cfg = tiny_config();
        let ds = make_task(&cfg, 0);
        assert_eq!(
            split(&ds, (0.5, 0.25, 0.25), 11, true).unwrap(),
            split(&ds, (0.5, 0.25, 0.25), 11, true).unwrap()
        );
    }

    #[test]
    fn empty_demanded_split_is_config_error() {
        let cfg = tiny_config();
        let ds = make_task(&cfg, 0); // 16 samples
        let err = split(&ds, (0.98, 0.01, 0.01), 3, true);
        assert!(matches!(err, Err(Error::Config(_))));
        // Without the demand it degrades gracefully.
        let s = split(&ds, (0.98, 0.01, 0.01), 3, false).unwrap();
        assert_eq!(s.train.len(), 16);
    }

    #[test]
    fn accumulator_unions_below_capacity() {
        let cfg = tiny_config();
        let mut acc = TestAccumulator::new(100, 1);
        for t in 0..2 {
            let ds = make_task(&cfg, t);
            let s = split(&ds, (0.5, 0.25, 0.25), cfg.split_seed(t), true).unwrap();
            acc.add_task_split(&ds, &s.test);
        }
        assert_eq!(acc.len(), 8);
        assert_eq!(acc.classes(), 2);
    }

    #[test]
    fn accumulator_balances_at_capacity() {
        let cfg = StreamConfig {
            num_tasks: 5,
            shapes_per_task: 2,
            test_cap: 12,
            ..tiny_config()
        };
        let mut acc = TestAccumulator::new(cfg.test_cap, 1);
        for t in 0..cfg.num_tasks {
            let ds = make_task(&cfg, t);
            let s = split(&ds, cfg.split_ratios, cfg.split_seed(t), true).unwrap();
            acc.add_task_split(&ds, &s.test);
        }
        assert!(acc.len() <= 12);
        assert!(acc.balance_spread() <= 1, "spread {}", acc.balance_spread());
        // Newest classes are represented.
        assert!(acc.count_for(8) >= 1);
        assert!(acc.count_for(9) >= 1);
    }

    #[test]
    fn recipe_dataset_round_trips() {
        let cfg = tiny_config();
        let ds = make_task(&cfg, 0);
        let dir = std::env::temp_dir().join("idsprites-stream-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("task_recipe.idsp");
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(ds, back);
        // Manifest sidecar exists and parses.
        let manifest: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("json")).unwrap())
                .unwrap();
        assert_eq!(manifest.task_index, 0);
        assert_eq!(manifest.num_samples, 16);
        assert_eq!(manifest.payload_kind, 0);
    }

    #[test]
    fn pixel_dataset_round_trips() {
        let cfg = tiny_config();
        let mut ds = make_task(&cfg, 1);
        ds.materialize().unwrap();
        let dir = std::env::temp_dir().join("idsprites-stream-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("task_pixels.idsp");
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn header_is_the_authority_for_parameters() {
        let cfg = StreamConfig {
            resolution: 32,
            ..tiny_config()
        };
        let ds = make_task(&cfg, 0);
        let dir = std::env::temp_dir().join("idsprites-stream-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("task_res32.idsp");
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.resolution, 32);
        assert_eq!(back.exemplars[0].1.width, 32);
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let cfg = tiny_config();
        let ds = make_task(&cfg, 0);
        let dir = std::env::temp_dir().join("idsprites-stream-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("task_corrupt.idsp");
        write_dataset(&ds, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(Error::Format(FormatError::BadMagic))
        ));
    }
}
