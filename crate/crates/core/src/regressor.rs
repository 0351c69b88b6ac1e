//! Pose regression: an analytic moment-based estimator and a small trainable
//! MLP with hand-rolled reverse-mode gradients and Adam.
//!
//! Both predict the 2x3 normalization matrix for an input image. The analytic
//! path binarizes the image, reads translation from the foreground centroid,
//! scale from the mass fraction, and orientation from the bright-half marker
//! offset; it serves as the oracle-grade reference. The MLP regresses the six
//! matrix entries directly from an average-pooled input and is trained with
//! MSE against ground-truth matrices.
//!
//! Determinism: forward, backward, and Adam are bit-stable under any rayon
//! thread count because parallelism only splits disjoint output rows; every
//! accumulation runs in a fixed order.

use crate::error::{Error, FormatError, Result};
use crate::format;
use crate::raster::{latents_to_matrix, AffineMatrix, Image, Latents, DARK_FACTOR};
use crate::rng::{derive_seed, SplitMix64};
use crate::stream::{SplitIndices, TaskDataset};
use rayon::prelude::*;

const CHECKPOINT_MAGIC: &[u8; 4] = b"IDSN";
const CHECKPOINT_VERSION: u16 = 1;

// ---------------------------------------------------------------------------
// Batched matrices
// ---------------------------------------------------------------------------

/// Row-major batch matrix: `rows` samples of `cols` features.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Mat {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            assert_eq!(r.len(), cols);
            data.extend(r);
        }
        Mat {
            rows: n,
            cols,
            data,
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

// ---------------------------------------------------------------------------
// TinyNet
// ---------------------------------------------------------------------------

/// Fully connected layer, weights stored out x in row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub inp: usize,
    pub out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Small MLP: rectifier on hidden layers, linear output by default. Setting
/// `relu_output` rectifies the last layer too (used as a feature body by the
/// classifier baselines).
#[derive(Clone, Debug, PartialEq)]
pub struct TinyNet {
    pub sizes: Vec<usize>,
    pub layers: Vec<DenseLayer>,
    pub relu_output: bool,
}

/// Uniform init in +-sqrt(6 / (fan_in + fan_out)).
fn init_layer(inp: usize, out: usize, rng: &mut SplitMix64) -> DenseLayer {
    let bound = (6.0 / (inp + out) as f64).sqrt();
    let w = (0..inp * out).map(|_| rng.uniform(-bound, bound)).collect();
    let b = vec![0.0; out];
    DenseLayer { inp, out, w, b }
}

impl TinyNet {
    /// Builds a net with the given layer sizes, e.g. [1024, 256, 64, 6].
    pub fn new(sizes: &[usize], seed: u64) -> TinyNet {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let mut rng = SplitMix64::new(seed);
        let layers = sizes
            .windows(2)
            .map(|w| init_layer(w[0], w[1], &mut rng))
            .collect();
        TinyNet {
            sizes: sizes.to_vec(),
            layers,
            relu_output: false,
        }
    }

    pub fn with_relu_output(mut self) -> TinyNet {
        self.relu_output = true;
        self
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn relu_at(&self, layer_idx: usize) -> bool {
        layer_idx + 1 < self.layers.len() || self.relu_output
    }

    /// Forward pass keeping every activation for the backward pass.
    /// `trace[0]` is the input; `trace[k+1]` the output of layer k.
    pub fn forward_trace(&self, input: &Mat) -> Vec<Mat> {
        assert_eq!(input.cols, self.input_size());
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(input.clone());
        for (li, layer) in self.layers.iter().enumerate() {
            let x = trace.last().unwrap();
            let mut y = Mat::zeros(x.rows, layer.out);
            let relu = self.relu_at(li);
            y.data
                .par_chunks_mut(layer.out)
                .zip(x.data.par_chunks(layer.inp))
                .for_each(|(y_row, x_row)| {
                    for (j, y_j) in y_row.iter_mut().enumerate() {
                        let w_row = &layer.w[j * layer.inp..(j + 1) * layer.inp];
                        let mut acc = layer.b[j];
                        for (w, x) in w_row.iter().zip(x_row.iter()) {
                            acc += w * x;
                        }
                        *y_j = if relu { acc.max(0.0) } else { acc };
                    }
                });
            trace.push(y);
        }
        trace
    }

    /// Forward pass returning only the outputs.
    pub fn forward(&self, input: &Mat) -> Mat {
        self.forward_trace(input).pop().unwrap()
    }

    /// Reverse-mode pass. `d_out` is dLoss/dOutput; returns parameter
    /// gradients and dLoss/dInput.
    pub fn backward(&self, trace: &[Mat], d_out: &Mat) -> (NetGrads, Mat) {
        let mut grads = NetGrads::zeros_like(self);
        let mut delta = d_out.clone();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let y = &trace[li + 1];
            let x = &trace[li];
            // Rectifier mask folds into delta.
            if self.relu_at(li) {
                for (d, y) in delta.data.iter_mut().zip(y.data.iter()) {
                    if *y <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let g = &mut grads.layers[li];
            // dW[j][k] = sum_b delta[b][j] * x[b][k]; rows are disjoint, batch
            // order fixed inside each row.
            g.w.par_chunks_mut(layer.inp)
                .enumerate()
                .for_each(|(j, w_row)| {
                    for b in 0..delta.rows {
                        let d = delta.data[b * layer.out + j];
                        if d != 0.0 {
                            let x_row = x.row(b);
                            for (w, xv) in w_row.iter_mut().zip(x_row.iter()) {
                                *w += d * xv;
                            }
                        }
                    }
                });
            for (j, gb) in g.b.iter_mut().enumerate() {
                let mut acc = 0.0;
                for b in 0..delta.rows {
                    acc += delta.data[b * layer.out + j];
                }
                *gb = acc;
            }
            // dX = delta * W, per-sample rows are disjoint.
            let mut dx = Mat::zeros(delta.rows, layer.inp);
            dx.data
                .par_chunks_mut(layer.inp)
                .zip(delta.data.par_chunks(layer.out))
                .for_each(|(dx_row, d_row)| {
                    for (j, &d) in d_row.iter().enumerate() {
                        if d != 0.0 {
                            let w_row = &layer.w[j * layer.inp..(j + 1) * layer.inp];
                            for (dx, w) in dx_row.iter_mut().zip(w_row.iter()) {
                                *dx += d * w;
                            }
                        }
                    }
                });
            delta = dx;
        }
        (grads, delta)
    }
}

/// Parameter gradients shaped like a TinyNet.
#[derive(Clone, Debug)]
pub struct NetGrads {
    pub layers: Vec<DenseLayer>,
}

impl NetGrads {
    pub fn zeros_like(net: &TinyNet) -> NetGrads {
        NetGrads {
            layers: net
                .layers
                .iter()
                .map(|l| DenseLayer {
                    inp: l.inp,
                    out: l.out,
                    w: vec![0.0; l.w.len()],
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam state; moment vectors mirror the net's parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub params: AdamParams,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &TinyNet, params: AdamParams) -> AdamState {
        let shapes: Vec<usize> = net
            .layers
            .iter()
            .flat_map(|l| [l.w.len(), l.b.len()])
            .collect();
        AdamState {
            step: 0,
            params,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One Adam update over every parameter of the net.
pub fn adam_step(net: &mut TinyNet, grads: &NetGrads, state: &mut AdamState) {
    state.step += 1;
    let p = state.params;
    let bc1 = 1.0 - p.beta1.powi(state.step as i32);
    let bc2 = 1.0 - p.beta2.powi(state.step as i32);
    let mut slot = 0;
    for (layer, grad) in net.layers.iter_mut().zip(grads.layers.iter()) {
        for (values, gvalues) in [(&mut layer.w, &grad.w), (&mut layer.b, &grad.b)] {
            let m = &mut state.m[slot];
            let v = &mut state.v[slot];
            for i in 0..values.len() {
                let g = gvalues[i];
                m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g;
                v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                values[i] -= p.learning_rate * m_hat / (v_hat.sqrt() + p.epsilon);
            }
            slot += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// MSE over batch and output entries, with gradients for every parameter.
pub fn loss_and_grad(net: &TinyNet, inputs: &Mat, targets: &Mat) -> (f64, NetGrads) {
    assert!(inputs.rows > 0, "batch must be non-empty");
    assert_eq!(inputs.rows, targets.rows);
    assert_eq!(targets.cols, net.output_size());
    let trace = net.forward_trace(inputs);
    let out = trace.last().unwrap();
    let n = (out.rows * out.cols) as f64;
    let mut mse = 0.0;
    let mut d_out = Mat::zeros(out.rows, out.cols);
    for i in 0..out.data.len() {
        let diff = out.data[i] - targets.data[i];
        mse += diff * diff;
        d_out.data[i] = 2.0 * diff / n;
    }
    mse /= n;
    let (grads, _) = net.backward(&trace, &d_out);
    (mse, grads)
}

// ---------------------------------------------------------------------------
// Image-to-input plumbing
// ---------------------------------------------------------------------------

/// Average-pools an image down to `side` x `side` and flattens to f64.
/// The image's sides must be divisible by the target side.
pub fn pool_input(img: &Image, side: u32) -> Vec<f64> {
    assert!(img.width % side == 0 && img.height % side == 0, "pooling must divide evenly");
    let pooled = img.downsample(img.width / side);
    pooled.pixels.iter().map(|&v| v as f64).collect()
}

/// Ground-truth regression target: the six matrix entries for latents z.
pub fn matrix_target(z: &Latents) -> [f64; 6] {
    latents_to_matrix(z).entries()
}

/// Net output row interpreted as a sampling matrix.
pub fn output_to_matrix(row: &[f64]) -> AffineMatrix {
    AffineMatrix::from_entries([row[0], row[1], row[2], row[3], row[4], row[5]])
}

// ---------------------------------------------------------------------------
// Task training
// ---------------------------------------------------------------------------

/// Trains the regressor on one task's train split with seeded per-epoch
/// shuffles. Returns the per-epoch mean batch MSE.
pub fn train_on_task(
    net: &mut TinyNet,
    adam: &mut AdamState,
    ds: &TaskDataset,
    split: &SplitIndices,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    assert!(batch_size > 0);
    let side = (net.input_size() as f64).sqrt() as u32;
    // Render + pool once per task; recipes make this cheap to redo per task.
    let prepared: Vec<(Vec<f64>, [f64; 6])> = split
        .train
        .par_iter()
        .map(|&i| {
            let img = ds.render_sample(i)?;
            Ok((pool_input(&img, side), matrix_target(&ds.samples[i].latents)))
        })
        .collect::<Result<_>>()?;

    let mut log = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    for epoch in 0..epochs {
        let mut rng = SplitMix64::new(derive_seed(seed, &[ds.task_index as u64, epoch as u64]));
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let inputs = Mat::from_rows(chunk.iter().map(|&i| prepared[i].0.clone()).collect());
            let targets = Mat::from_rows(chunk.iter().map(|&i| prepared[i].1.to_vec()).collect());
            let (mse, grads) = loss_and_grad(net, &inputs, &targets);
            adam_step(net, &grads, adam);
            epoch_loss += mse;
            batches += 1;
        }
        log.push(if batches > 0 { epoch_loss / batches as f64 } else { 0.0 });
    }
    Ok(log)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Writes a net checkpoint: sizes, flags, and f64 parameters, CRC-checked.
pub fn save_checkpoint(net: &TinyNet, path: &std::path::Path) -> Result<()> {
    let mut w = format::Writer::new();
    w.u8(net.relu_output as u8);
    w.u32(net.sizes.len() as u32);
    for &s in &net.sizes {
        w.u64(s as u64);
    }
    for layer in &net.layers {
        for &v in layer.w.iter().chain(layer.b.iter()) {
            w.f64(v);
        }
    }
    format::write_file(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, &w.into_bytes())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<TinyNet> {
    let payload = format::read_file(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let mut r = format::Reader::new(&payload);
    let relu_output = r.u8()? != 0;
    let n_sizes = r.u32()? as usize;
    if n_sizes < 2 {
        return Err(FormatError::Malformed("need at least two layer sizes".into()).into());
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(r.u64()? as usize);
    }
    let mut layers = Vec::with_capacity(n_sizes - 1);
    for w in sizes.windows(2) {
        let (inp, out) = (w[0], w[1]);
        let mut weights = Vec::with_capacity(inp * out);
        for _ in 0..inp * out {
            weights.push(r.f64()?);
        }
        let mut biases = Vec::with_capacity(out);
        for _ in 0..out {
            biases.push(r.f64()?);
        }
        layers.push(DenseLayer {
            inp,
            out,
            w: weights,
            b: biases,
        });
    }
    if r.remaining() != 0 {
        return Err(FormatError::Malformed("trailing checkpoint bytes".into()).into());
    }
    Ok(TinyNet {
        sizes,
        layers,
        relu_output,
    })
}

// ---------------------------------------------------------------------------
// Analytic estimator
// ---------------------------------------------------------------------------

/// Per-shape calibration measured from a canonical exemplar render: the
/// foreground fraction of the frame, the unit direction from the mass
/// centroid to the bright-half centroid, and the intensity principal axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalStats {
    pub mass_fraction: f64,
    pub marker_dir: (f64, f64),
    /// Principal axis of the intensity distribution, in (-pi/2, pi/2].
    pub axis: f64,
    /// Normalized eigenvalue spread of the intensity covariance; near zero
    /// the axis is meaningless and the marker alone sets the angle.
    pub anisotropy: f64,
}

impl CanonicalStats {
    /// Measures both statistics from an exemplar image. The measured mass
    /// fraction shares the binarization bias of the observed image, so scale
    /// estimates against it are bias-cancelled; prefer this over the exact
    /// shoelace fraction.
    pub fn measure(exemplar: &Image, estimator: &AnalyticEstimator) -> Result<CanonicalStats> {
        let m = moments(exemplar, estimator)?;
        let len = (m.marker.0.powi(2) + m.marker.1.powi(2)).sqrt();
        if len * exemplar.width as f64 / 2.0 < 0.25 {
            return Err(Error::AmbiguousOrientation(len * exemplar.width as f64 / 2.0));
        }
        Ok(CanonicalStats {
            mass_fraction: m.fraction,
            marker_dir: (m.marker.0 / len, m.marker.1 / len),
            axis: m.axis,
            anisotropy: m.anisotropy,
        })
    }

    /// Same, but with the mass fraction overridden by the recipe's exact
    /// shoelace area (canonical frame has area 4). Exact in area but not
    /// bias-cancelled against binarized observations.
    pub fn measure_with_shape(
        exemplar: &Image,
        shape: &crate::shapegen::ShapeSpec,
        estimator: &AnalyticEstimator,
    ) -> Result<CanonicalStats> {
        let stats = CanonicalStats::measure(exemplar, estimator)?;
        Ok(CanonicalStats {
            mass_fraction: shape.area() / 4.0,
            ..stats
        })
    }
}

/// Pose estimate before matrix assembly; class is unknown by construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseEstimate {
    pub color: f64,
    pub scale: f64,
    pub orientation: f64,
    pub pos_x: f64,
    pub pos_y: f64,
}

/// Closed-form pose estimator from binarized image moments.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AnalyticEstimator {
    /// Expected bright-half intensity (the body color).
    pub body_intensity: f64,
    /// Expected dark/bright ratio of the orientation marker.
    pub dark_ratio: f64,
    /// Fallback canonical mass fraction when no calibration is supplied.
    pub canonical_fraction: Option<f64>,
}

impl Default for AnalyticEstimator {
    fn default() -> Self {
        AnalyticEstimator {
            body_intensity: 1.0,
            dark_ratio: DARK_FACTOR,
            canonical_fraction: None,
        }
    }
}

struct Moments {
    fraction: f64,
    centroid: (f64, f64),
    marker: (f64, f64),
    mean_bright: f64,
    axis: f64,
    anisotropy: f64,
}

/// Binarized foreground moments plus intensity-weighted second moments, all
/// in normalized coordinates. The intensity distribution is an affine
/// pushforward of the canonical one (the dark half rotates with the shape),
/// so its principal axis turns by exactly the pose orientation.
fn moments(img: &Image, est: &AnalyticEstimator) -> Result<Moments> {
    let fg_thresh = (0.5 * est.dark_ratio * est.body_intensity) as f32;
    let bright_thresh = (est.body_intensity * (1.0 + est.dark_ratio) / 2.0) as f32;
    let mut fg = 0usize;
    let (mut cx, mut cy) = (0.0f64, 0.0f64);
    let mut bright = 0usize;
    let (mut bx, mut by) = (0.0f64, 0.0f64);
    let mut bright_sum = 0.0f64;
    let mut mass = 0.0f64;
    let (mut ix, mut iy) = (0.0f64, 0.0f64);
    for y in 0..img.height {
        for x in 0..img.width {
            let v = img.get(x, y);
            if v <= 0.0 {
                continue;
            }
            let p = img.pixel_center(x, y);
            let vf = v as f64;
            mass += vf;
            ix += vf * p.x;
            iy += vf * p.y;
            if v > fg_thresh {
                fg += 1;
                cx += p.x;
                cy += p.y;
                if v > bright_thresh {
                    bright += 1;
                    bx += p.x;
                    by += p.y;
                    bright_sum += vf;
                }
            }
        }
    }
    if fg < 20 {
        return Err(Error::InsufficientMass(fg));
    }
    let centroid = (cx / fg as f64, cy / fg as f64);
    if bright == 0 {
        return Err(Error::AmbiguousOrientation(0.0));
    }
    let bright_c = (bx / bright as f64, by / bright as f64);

    // Intensity-weighted central second moments.
    let (icx, icy) = (ix / mass, iy / mass);
    let (mut mu20, mut mu02, mut mu11) = (0.0f64, 0.0f64, 0.0f64);
    for y in 0..img.height {
        for x in 0..img.width {
            let v = img.get(x, y) as f64;
            if v <= 0.0 {
                continue;
            }
            let p = img.pixel_center(x, y);
            let (dx, dy) = (p.x - icx, p.y - icy);
            mu20 += v * dx * dx;
            mu02 += v * dy * dy;
            mu11 += v * dx * dy;
        }
    }
    let spread = ((mu20 - mu02).powi(2) + (2.0 * mu11).powi(2)).sqrt();
    let anisotropy = spread / (mu20 + mu02).max(f64::MIN_POSITIVE);
    let axis = 0.5 * f64::atan2(2.0 * mu11, mu20 - mu02);

    Ok(Moments {
        fraction: fg as f64 / (img.width * img.height) as f64,
        centroid,
        marker: (bright_c.0 - centroid.0, bright_c.1 - centroid.1),
        mean_bright: bright_sum / bright as f64,
        axis,
        anisotropy,
    })
}

/// Absolute circular distance between two angles.
fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

impl AnalyticEstimator {
    /// Estimate with explicit per-shape calibration (the reference path).
    /// The marker-direction bias cancels against the exemplar, and the
    /// calibrated principal axis refines the angle; the marker then only
    /// picks the half-turn.
    pub fn estimate_calibrated(
        &self,
        img: &Image,
        stats: &CanonicalStats,
    ) -> Result<(PoseEstimate, AffineMatrix)> {
        self.estimate_inner(
            img,
            stats.mass_fraction,
            stats.marker_dir,
            Some((stats.axis, stats.anisotropy)),
        )
    }

    /// Estimate with the configured fallback fraction and the ideal canonical
    /// marker direction (0, -1).
    pub fn estimate(&self, img: &Image) -> Result<(PoseEstimate, AffineMatrix)> {
        let fraction = self.canonical_fraction.ok_or_else(|| {
            Error::config("analytic estimator needs canonical_fraction or per-shape stats")
        })?;
        self.estimate_inner(img, fraction, (0.0, -1.0), None)
    }

    fn estimate_inner(
        &self,
        img: &Image,
        canonical_fraction: f64,
        marker_dir: (f64, f64),
        canonical_axis: Option<(f64, f64)>,
    ) -> Result<(PoseEstimate, AffineMatrix)> {
        let m = moments(img, self)?;
        let marker_len = (m.marker.0.powi(2) + m.marker.1.powi(2)).sqrt();
        // 0.25 px in normalized units is 0.5 / width.
        if marker_len < 0.5 / img.width as f64 {
            return Err(Error::AmbiguousOrientation(marker_len * img.width as f64 / 2.0));
        }
        let scale = (m.fraction / canonical_fraction).sqrt();
        // Angle of the observed marker relative to this shape's canonical one;
        // atan2(x, -y) measures clockwise-from-up in y-down coordinates.
        let observed = f64::atan2(m.marker.0, -m.marker.1);
        let canonical = f64::atan2(marker_dir.0, -marker_dir.1);
        let marker_angle = (observed - canonical).rem_euclid(2.0 * std::f64::consts::PI);
        const MIN_ANISOTROPY: f64 = 1e-3;
        let orientation = match canonical_axis {
            Some((axis0, aniso0)) if aniso0 > MIN_ANISOTROPY && m.anisotropy > MIN_ANISOTROPY => {
                let half_turn = (m.axis - axis0).rem_euclid(std::f64::consts::PI);
                let other = half_turn + std::f64::consts::PI;
                if circular_distance(half_turn, marker_angle)
                    <= circular_distance(other, marker_angle)
                {
                    half_turn
                } else {
                    other
                }
            }
            _ => marker_angle,
        };
        let pose = PoseEstimate {
            color: m.mean_bright,
            scale,
            orientation,
            pos_x: (m.centroid.0 + 1.0) / 2.0,
            pos_y: (m.centroid.1 + 1.0) / 2.0,
        };
        let matrix = latents_to_matrix(&Latents {
            class_id: 0,
            color: pose.color.clamp(f64::MIN_POSITIVE, 1.0),
            scale: pose.scale,
            orientation: pose.orientation,
            pos_x: pose.pos_x.clamp(0.0, 1.0),
            pos_y: pose.pos_y.clamp(0.0, 1.0),
        });
        Ok((pose, matrix))
    }
}
