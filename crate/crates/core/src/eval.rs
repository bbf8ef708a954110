//! Depth accuracy, projected-label segmentation metrics and gradient
//! support analysis.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::camera::Camera;
use crate::geometry::LabeledMesh;
use crate::image::Image;
use crate::render::{rasterize, NO_LABEL};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CameraDepth {
    pub mae: f64,
    pub compared: usize,
    /// Fraction of the image where both depths are defined.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthReport {
    pub cameras: Vec<CameraDepth>,
    /// Mean of the per-camera errors over cameras with any overlap.
    pub mean_mae: f64,
}

impl DepthReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("camera,mae,compared,coverage\n");
        for (c, d) in self.cameras.iter().enumerate() {
            let _ = writeln!(out, "{c},{},{},{}", d.mae, d.compared, d.coverage);
        }
        out
    }
}

/// Mean absolute difference of the two meshes' depth maps, per camera.
pub fn depth_mae(
    mesh_a: &LabeledMesh,
    mesh_b: &LabeledMesh,
    cameras: &[Camera],
) -> Result<DepthReport> {
    let per_camera: Vec<CameraDepth> = cameras
        .par_iter()
        .map(|camera| {
            let a = rasterize(mesh_a, camera);
            let b = rasterize(mesh_b, camera);
            let (mut sum, mut n) = (0.0, 0usize);
            for (da, db) in a.depth.iter().zip(&b.depth) {
                if da.is_finite() && db.is_finite() {
                    sum += (da - db).abs();
                    n += 1;
                }
            }
            CameraDepth {
                mae: if n > 0 { sum / n as f64 } else { 0.0 },
                compared: n,
                coverage: n as f64 / (camera.width * camera.height) as f64,
            }
        })
        .collect();
    let overlapping: Vec<&CameraDepth> = per_camera.iter().filter(|d| d.compared > 0).collect();
    if overlapping.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let mean_mae = overlapping.iter().map(|d| d.mae).sum::<f64>() / overlapping.len() as f64;
    Ok(DepthReport {
        cameras: per_camera,
        mean_mae,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegReport {
    /// `confusion[truth][predicted]` pixel counts.
    pub confusion: Vec<Vec<usize>>,
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f: f64,
}

impl SegReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f_score,support\n");
        for (l, c) in self.classes.iter().enumerate() {
            let _ = writeln!(
                out,
                "{l},{},{},{},{}",
                c.precision, c.recall, c.f_score, c.support
            );
        }
        let _ = writeln!(
            out,
            "macro,{},{},{},{}",
            self.macro_precision,
            self.macro_recall,
            self.macro_f,
            self.classes.iter().map(|c| c.support).sum::<usize>()
        );
        let _ = writeln!(out, "accuracy,{},,,", self.accuracy);
        out
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Compares predicted and true label images. Pixels unlabeled in either
/// image are ignored. Macro averages run over the classes present in truth.
pub fn segmentation_metrics(predicted: &[Image<u8>], truth: &[Image<u8>]) -> Result<SegReport> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted images for {} truth images",
            predicted.len(),
            truth.len()
        )));
    }
    let mut classes = 0usize;
    for (k, (p, t)) in predicted.iter().zip(truth).enumerate() {
        if !p.same_size(t) {
            return Err(Error::DimensionMismatch(format!(
                "label image {k} sizes differ"
            )));
        }
        for &v in p.data.iter().chain(&t.data) {
            if v != NO_LABEL {
                classes = classes.max(v as usize + 1);
            }
        }
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (p, t) in predicted.iter().zip(truth) {
        for (&pv, &tv) in p.data.iter().zip(&t.data) {
            if pv != NO_LABEL && tv != NO_LABEL {
                confusion[tv as usize][pv as usize] += 1;
            }
        }
    }
    let total: usize = confusion.iter().flatten().sum();
    let trace: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let per_class: Vec<ClassMetrics> = (0..classes)
        .map(|c| {
            let support: usize = confusion[c].iter().sum();
            let predicted_c: usize = confusion.iter().map(|row| row[c]).sum();
            let tp = confusion[c][c] as f64;
            let precision = if predicted_c > 0 {
                tp / predicted_c as f64
            } else {
                0.0
            };
            let recall = if support > 0 {
                tp / support as f64
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f_score: harmonic(precision, recall),
                support,
            }
        })
        .collect();
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.support > 0).collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if present.is_empty() {
            0.0
        } else {
            present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64
        }
    };
    let macro_precision = mean(|c| c.precision);
    let macro_recall = mean(|c| c.recall);
    Ok(SegReport {
        accuracy: if total > 0 {
            trace as f64 / total as f64
        } else {
            0.0
        },
        macro_f: harmonic(macro_precision, macro_recall),
        macro_precision,
        macro_recall,
        classes: per_class,
        confusion,
    })
}

/// Pixels with a 4-neighbor of a different label; unlabeled pixels never
/// form a boundary.
pub fn label_boundary(labels: &Image<u8>) -> Image<u8> {
    let (w, h) = (labels.width, labels.height);
    Image::from_fn(w, h, |x, y| {
        let v = *labels.get(x, y);
        if v == NO_LABEL {
            return 0;
        }
        let differs = |nx: usize, ny: usize| {
            let u = *labels.get(nx, ny);
            u != NO_LABEL && u != v
        };
        let edge = (x > 0 && differs(x - 1, y))
            || (x + 1 < w && differs(x + 1, y))
            || (y > 0 && differs(x, y - 1))
            || (y + 1 < h && differs(x, y + 1));
        u8::from(edge)
    })
}

/// Exact 1-D squared distance transform of a sampled function.
fn distance_transform_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![f64::INFINITY; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut k = 0usize;
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        return d;
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let intersect = |p: usize| {
            ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
        };
        let mut s = intersect(v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
    d
}

/// Euclidean distance from every pixel to the nearest non-zero pixel of
/// `seeds`; infinite when there is none.
pub fn boundary_distance(seeds: &Image<u8>) -> Image<f64> {
    let (w, h) = (seeds.width, seeds.height);
    let mut grid: Vec<f64> = seeds
        .data
        .iter()
        .map(|&s| if s != 0 { 0.0 } else { f64::INFINITY })
        .collect();
    let mut column = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            column[y] = grid[y * w + x];
        }
        let d = distance_transform_1d(&column);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        let d = distance_transform_1d(&grid[y * w..(y + 1) * w]);
        grid[y * w..(y + 1) * w].copy_from_slice(&d);
    }
    Image {
        width: w,
        height: h,
        data: grid.into_iter().map(f64::sqrt).collect(),
    }
}

/// Fraction of contributing pixels farther than `far_threshold` from the
/// true label boundary of their view. No contributions give 0.
pub fn gradient_support_analysis(
    support: &[Image<u8>],
    truth_labels: &[Image<u8>],
    far_threshold: f64,
) -> Result<f64> {
    if support.len() != truth_labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} support masks for {} label images",
            support.len(),
            truth_labels.len()
        )));
    }
    let counts: Vec<(usize, usize)> = support
        .par_iter()
        .zip(truth_labels)
        .map(|(s, t)| {
            let dist = boundary_distance(&label_boundary(t));
            let mut far = 0;
            let mut total = 0;
            for (&on, &d) in s.data.iter().zip(&dist.data) {
                if on != 0 {
                    total += 1;
                    if d > far_threshold {
                        far += 1;
                    }
                }
            }
            (far, total)
        })
        .collect();
    let far: usize = counts.iter().map(|c| c.0).sum();
    let total: usize = counts.iter().map(|c| c.1).sum();
    Ok(if total == 0 {
        0.0
    } else {
        far as f64 / total as f64
    })
}
