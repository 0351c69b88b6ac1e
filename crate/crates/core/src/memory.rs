//! Exemplar memory: one canonical image per class, nearest-neighbor
//! classification of normalized inputs, the distance-ratio novelty rule, and
//! precision-recall evaluation of that rule.
//!
//! Memory edits are explicit: adding a class stores its exemplar, removing a
//! class erases everything the model knows about it. Classification scans
//! classes in id order, so ties break toward the lowest class id and the
//! outcome is independent of insertion order.

use crate::error::{Error, Result};
use crate::raster::Image;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

/// class id -> canonical exemplar, plus the insertion-order log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExemplarBuffer {
    exemplars: BTreeMap<u32, Image>,
    insertion_log: Vec<u32>,
}

/// Mean squared pixel distance; the metric behind lookup and novelty.
fn distance(a: &Image, b: &Image) -> f64 {
    a.mse(b)
}

impl ExemplarBuffer {
    pub fn new() -> ExemplarBuffer {
        ExemplarBuffer::default()
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn contains(&self, class_id: u32) -> bool {
        self.exemplars.contains_key(&class_id)
    }

    pub fn class_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.exemplars.keys().copied()
    }

    pub fn get(&self, class_id: u32) -> Option<&Image> {
        self.exemplars.get(&class_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &Image)> {
        self.exemplars.iter().map(|(&c, img)| (c, img))
    }

    pub fn insertion_log(&self) -> &[u32] {
        &self.insertion_log
    }

    /// Stores a class exemplar. Re-adding an existing class is an error
    /// unless `replace` is set.
    pub fn add_exemplar(&mut self, class_id: u32, exemplar: Image, replace: bool) -> Result<()> {
        if !replace && self.exemplars.contains_key(&class_id) {
            return Err(Error::DuplicateClass(class_id));
        }
        if let Some((_, existing)) = self.exemplars.iter().next() {
            if existing.width != exemplar.width || existing.height != exemplar.height {
                return Err(Error::config("exemplar resolution mismatch"));
            }
        }
        self.exemplars.insert(class_id, exemplar);
        self.insertion_log.push(class_id);
        Ok(())
    }

    /// Erases a class from memory.
    pub fn remove_class(&mut self, class_id: u32) -> Result<()> {
        self.exemplars
            .remove(&class_id)
            .map(|_| ())
            .ok_or(Error::MissingClass(class_id))?;
        self.insertion_log.retain(|&c| c != class_id);
        Ok(())
    }

    /// Nearest exemplar by mean squared distance; ties break to the lowest
    /// class id.
    pub fn classify(&self, normalized: &Image) -> Result<(u32, f64)> {
        let mut best: Option<(u32, f64)> = None;
        for (&class, exemplar) in &self.exemplars {
            let d = distance(normalized, exemplar);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((class, d));
            }
        }
        best.ok_or(Error::EmptyBuffer)
    }

    /// Two smallest distances, for the novelty rule.
    fn two_best(&self, normalized: &Image) -> Result<(u32, f64, u32, f64)> {
        if self.exemplars.len() < 2 {
            return Err(Error::TooFewClasses(self.exemplars.len()));
        }
        let mut first: Option<(u32, f64)> = None;
        let mut second: Option<(u32, f64)> = None;
        for (&class, exemplar) in &self.exemplars {
            let d = distance(normalized, exemplar);
            if first.is_none_or(|(_, fd)| d < fd) {
                second = first;
                first = Some((class, d));
            } else if second.is_none_or(|(_, sd)| d < sd) {
                second = Some((class, d));
            }
        }
        let (c1, d1) = first.unwrap();
        let (c2, d2) = second.unwrap();
        Ok((c1, d1, c2, d2))
    }

    /// Distance-ratio novelty rule: novel when the best match is not
    /// significantly better than the runner-up, d1 > sigma * d2.
    pub fn detect_novel(&self, normalized: &Image, sigma: f64) -> Result<NoveltyDecision> {
        if sigma < 0.0 {
            return Err(Error::config("sigma must be >= 0"));
        }
        let (c1, d1, _, d2) = self.two_best(normalized)?;
        Ok(NoveltyDecision {
            is_novel: d1 > sigma * d2,
            best_class: c1,
            d1,
            d2,
            sigma,
        })
    }

    /// Raw distance pair without a sigma decision, for sigma sweeps.
    pub fn novelty_distances(&self, normalized: &Image) -> Result<(f64, f64)> {
        let (_, d1, _, d2) = self.two_best(normalized)?;
        Ok((d1, d2))
    }

    /// Writes exemplars as `<class_id>.png` plus an `index.json` sidecar.
    pub fn export_png(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        #[derive(Serialize)]
        struct IndexEntry {
            class_id: u32,
            file: String,
        }
        let mut index = Vec::new();
        for (&class, exemplar) in &self.exemplars {
            let name = format!("{class}.png");
            crate::pngio::save_gray_png(exemplar, &dir.join(&name))?;
            index.push(IndexEntry {
                class_id: class,
                file: name,
            });
        }
        std::fs::write(
            dir.join("index.json"),
            serde_json::to_string_pretty(&index).expect("serializable"),
        )?;
        Ok(())
    }
}

/// Outcome of the novelty rule for one input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoveltyDecision {
    pub is_novel: bool,
    pub best_class: u32,
    pub d1: f64,
    pub d2: f64,
    pub sigma: f64,
}

/// One point of a precision-recall sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub sigma: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision-recall curve over a sigma grid with trapezoidal AUC.
#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub auc: f64,
}

/// Sweeps the novelty rule over a sigma grid.
///
/// `samples` carries (d1, d2, truly_novel) per input. Precision of an empty
/// prediction set is defined as 1 (declaring everything seen is vacuously
/// precise); declaring everything novel has recall 1. AUC is the trapezoid
/// over recall-sorted points.
pub fn pr_curve(samples: &[(f64, f64, bool)], sigmas: &[f64]) -> Result<PrCurve> {
    let positives = samples.iter().filter(|s| s.2).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClassGroundTruth);
    }
    let mut points = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for &(d1, d2, novel) in samples {
            if d1 > sigma * d2 {
                if novel {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = tp as f64 / positives as f64;
        points.push(PrPoint {
            sigma,
            precision,
            recall,
        });
    }
    // Trapezoid over the achievable curve: at tied recalls only the best
    // precision is on the envelope, the rest are dominated sweep points.
    // Recall is non-negative, so its bit pattern orders numerically.
    let mut envelope: BTreeMap<u64, f64> = BTreeMap::new();
    for p in &points {
        let key = p.recall.to_bits();
        let e = envelope.entry(key).or_insert(p.precision);
        *e = e.max(p.precision);
    }
    let env: Vec<(f64, f64)> = envelope
        .into_iter()
        .map(|(bits, prec)| (f64::from_bits(bits), prec))
        .collect();
    let mut auc = 0.0;
    for w in env.windows(2) {
        auc += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    Ok(PrCurve { points, auc })
}

/// Default sigma grid: 101 points linear in [0, 1].
pub fn default_sigma_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

impl PrCurve {
    /// CSV with columns sigma, precision, recall.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma,precision,recall\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.sigma, p.precision, p.recall));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Self-contained SVG of the curve.
    pub fn write_svg(&self, path: &Path) -> Result<()> {
        let series: Vec<(f64, f64)> = self.points.iter().map(|p| (p.recall, p.precision)).collect();
        let svg = crate::plot::line_chart(
            &[("novelty".to_string(), series)],
            "recall",
            "precision",
            &format!("precision-recall (AUC {:.3})", self.auc),
        );
        std::fs::write(path, svg)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{render, warp, Latents};
    use crate::regressor::{AnalyticEstimator, CanonicalStats};
    use crate::rng::{derive_seed, SplitMix64};
    use crate::shapegen::{sample_shape, GenConfig};

    fn exemplar(tag: u64) -> Image {
        let shape = sample_shape(derive_seed(31, &[tag]), &GenConfig::default());
        render(&shape, &Latents::canonical(0, 1.0), 32, 2).unwrap()
    }

    fn filled_buffer(n: u64) -> ExemplarBuffer {
        let mut buf = ExemplarBuffer::new();
        for c in 0..n {
            buf.add_exemplar(c as u32, exemplar(c), false).unwrap();
        }
        buf
    }

    #[test]
    fn add_then_remove_restores_original() {
        let mut buf = filled_buffer(3);
        let original = buf.clone();
        buf.add_exemplar(7, exemplar(7), false).unwrap();
        buf.remove_class(7).unwrap();
        assert_eq!(buf.iter().collect::<Vec<_>>(), original.iter().collect::<Vec<_>>());
    }

    #[test]
    fn removed_class_is_never_predicted() {
        let mut buf = filled_buffer(4);
        let erased = exemplar(2);
        buf.remove_class(2).unwrap();
        let (class, _) = buf.classify(&erased).unwrap();
        assert_ne!(class, 2);
    }

    #[test]
    fn buffer_size_tracks_adds() {
        let buf = filled_buffer(10);
        assert_eq!(buf.len(), 10);
    }

    #[test]
    fn duplicate_add_and_missing_remove_error() {
        let mut buf = filled_buffer(2);
        assert!(matches!(
            buf.add_exemplar(1, exemplar(1), false),
            Err(Error::DuplicateClass(1))
        ));
        buf.add_exemplar(1, exemplar(5), true).unwrap();
        assert!(matches!(buf.remove_class(9), Err(Error::MissingClass(9))));
    }

    #[test]
    fn stored_exemplar_classifies_to_its_class_at_distance_zero() {
        let buf = filled_buffer(5);
        let (class, d) = buf.classify(buf.get(3).unwrap()).unwrap();
        assert_eq!(class, 3);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn single_class_buffer_always_answers_it() {
        let buf = filled_buffer(1);
        let (class, _) = buf.classify(&exemplar(9)).unwrap();
        assert_eq!(class, 0);
    }

    #[test]
    fn empty_buffer_is_an_error() {
        let buf = ExemplarBuffer::new();
        assert!(matches!(buf.classify(&exemplar(0)), Err(Error::EmptyBuffer)));
    }

    #[test]
    fn classification_ignores_insertion_order() {
        let mut forward = ExemplarBuffer::new();
        for c in 0..6u32 {
            forward.add_exemplar(c, exemplar(c as u64), false).unwrap();
        }
        let mut backward = ExemplarBuffer::new();
        for c in (0..6u32).rev() {
            backward.add_exemplar(c, exemplar(c as u64), false).unwrap();
        }
        let probe = exemplar(17);
        assert_eq!(forward.classify(&probe).unwrap(), backward.classify(&probe).unwrap());
    }

    /// End-to-end: render, analytic normalization, warp, nearest exemplar.
    #[test]
    fn full_pipeline_accuracy_over_fifty_classes() {
        let est = AnalyticEstimator::default();
        let mut buf = ExemplarBuffer::new();
        let mut shapes = Vec::new();
        let mut stats = Vec::new();
        for c in 0..50u32 {
            let shape = sample_shape(derive_seed(47, &[c as u64]), &GenConfig::default());
            let ex = render(&shape, &Latents::canonical(c, 1.0), 64, 2).unwrap();
            stats.push(CanonicalStats::measure(&ex, &est).unwrap());
            buf.add_exemplar(c, ex, false).unwrap();
            shapes.push(shape);
        }
        let mut rng = SplitMix64::new(4747);
        let mut correct = 0;
        let total = 200;
        for i in 0..total {
            let c = (i % 50) as u32;
            let z = Latents {
                class_id: c,
                color: 1.0,
                scale: rng.uniform(0.5, 1.0),
                orientation: rng.uniform(0.0, 2.0 * std::f64::consts::PI),
                pos_x: rng.uniform(0.25, 0.75),
                pos_y: rng.uniform(0.25, 0.75),
            };
            let img = render(&shapes[c as usize], &z, 64, 2).unwrap();
            let (_, m) = est.estimate_calibrated(&img, &stats[c as usize]).unwrap();
            let normalized = warp(&img, &m);
            let (pred, _) = buf.classify(&normalized).unwrap();
            if pred == c {
                correct += 1;
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc >= 0.95, "pipeline accuracy {acc}");
    }

    #[test]
    fn novelty_trivial_cases() {
        let buf = filled_buffer(3);
        // Exact exemplar: d1 = 0, any positive sigma keeps it seen.
        let d = buf.detect_novel(buf.get(1).unwrap(), 0.5).unwrap();
        assert!(!d.is_novel);
        assert_eq!(d.best_class, 1);
        assert_eq!(d.d1, 0.0);
        assert!(d.d1 <= d.d2);
        // Sigma zero flags anything with d1 > 0 as novel.
        let d = buf.detect_novel(&exemplar(11), 0.0).unwrap();
        assert!(d.is_novel);
    }

    #[test]
    fn novelty_needs_two_classes() {
        let buf = filled_buffer(1);
        assert!(matches!(
            buf.detect_novel(&exemplar(2), 0.5),
            Err(Error::TooFewClasses(1))
        ));
    }

    #[test]
    fn novelty_recall_is_monotone_in_sigma() {
        let buf = filled_buffer(6);
        let mut flagged_at = Vec::new();
        for sigma_cents in [0, 25, 50, 75, 100] {
            let sigma = sigma_cents as f64 / 100.0;
            let mut flagged = 0;
            for tag in 20..40u64 {
                if buf.detect_novel(&exemplar(tag), sigma).unwrap().is_novel {
                    flagged += 1;
                }
            }
            flagged_at.push(flagged);
        }
        for w in flagged_at.windows(2) {
            assert!(w[1] <= w[0], "novel count must not grow with sigma: {flagged_at:?}");
        }
    }

    #[test]
    fn novelty_is_scale_consistent() {
        let buf = filled_buffer(4);
        let probe = exemplar(9);
        let base = buf.detect_novel(&probe, 0.6).unwrap();
        let alpha = 0.5f32;
        let mut scaled_buf = ExemplarBuffer::new();
        for (c, img) in buf.iter() {
            let scaled = Image {
                width: img.width,
                height: img.height,
                pixels: img.pixels.iter().map(|&v| v * alpha).collect(),
            };
            scaled_buf.add_exemplar(c, scaled, false).unwrap();
        }
        let scaled_probe = Image {
            width: probe.width,
            height: probe.height,
            pixels: probe.pixels.iter().map(|&v| v * alpha).collect(),
        };
        let scaled = scaled_buf.detect_novel(&scaled_probe, 0.6).unwrap();
        assert_eq!(base.is_novel, scaled.is_novel);
        let a2 = (alpha as f64) * (alpha as f64);
        assert!((scaled.d1 - base.d1 * a2).abs() < 1e-9);
        assert!((scaled.d2 - base.d2 * a2).abs() < 1e-9);
    }

    #[test]
    fn classification_commutes_with_pixel_permutation() {
        let buf = filled_buffer(5);
        let probe = exemplar(13);
        let (base_class, base_d) = buf.classify(&probe).unwrap();
        // One fixed permutation applied to probe and every exemplar.
        let n = probe.pixels.len();
        let mut perm: Vec<usize> = (0..n).collect();
        SplitMix64::new(5).shuffle(&mut perm);
        let apply = |img: &Image| Image {
            width: img.width,
            height: img.height,
            pixels: perm.iter().map(|&i| img.pixels[i]).collect(),
        };
        let mut permuted = ExemplarBuffer::new();
        for (c, img) in buf.iter() {
            permuted.add_exemplar(c, apply(img), false).unwrap();
        }
        let (class, d) = permuted.classify(&apply(&probe)).unwrap();
        assert_eq!(class, base_class);
        assert!((d - base_d).abs() < 1e-12);
    }

    #[test]
    fn perfectly_separated_ratios_give_unit_auc() {
        // Novel inputs have ratio 0.9, seen inputs 0.1.
        let mut samples = Vec::new();
        for i in 0..50 {
            samples.push((0.9, 1.0, true));
            samples.push((0.1, 1.0, false));
            let _ = i;
        }
        let curve = pr_curve(&samples, &default_sigma_grid()).unwrap();
        assert!((curve.auc - 1.0).abs() < 1e-9, "auc {}", curve.auc);
    }

    #[test]
    fn random_scores_give_auc_near_prevalence() {
        let mut rng = SplitMix64::new(321);
        let mut samples = Vec::new();
        let prevalence = 0.3;
        for _ in 0..10_000 {
            let novel = rng.next_f64() < prevalence;
            samples.push((rng.next_f64(), 1.0, novel));
        }
        let curve = pr_curve(&samples, &default_sigma_grid()).unwrap();
        let measured = samples.iter().filter(|s| s.2).count() as f64 / samples.len() as f64;
        assert!(
            (curve.auc - measured).abs() < 0.05,
            "auc {} vs prevalence {measured}",
            curve.auc
        );
    }

    #[test]
    fn single_class_ground_truth_is_an_error() {
        let samples = vec![(0.5, 1.0, true), (0.2, 1.0, true)];
        assert!(matches!(
            pr_curve(&samples, &default_sigma_grid()),
            Err(Error::SingleClassGroundTruth)
        ));
    }

    #[test]
    fn export_writes_pngs_and_index() {
        let buf = filled_buffer(3);
        let dir = std::env::temp_dir().join("idsprites-memory-export");
        let _ = std::fs::remove_dir_all(&dir);
        buf.export_png(&dir).unwrap();
        for c in 0..3 {
            assert!(dir.join(format!("{c}.png")).exists());
        }
        let index: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("index.json")).unwrap()).unwrap();
        assert_eq!(index.as_array().unwrap().len(), 3);
        // PNG round trip stays close to the stored exemplar.
        let back = crate::pngio::load_gray_png(&dir.join("0.png")).unwrap();
        assert!(back.mean_abs_diff(buf.get(0).unwrap()) < 1.0 / 255.0);
    }
}
