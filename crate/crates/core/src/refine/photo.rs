//! Multi-view photo-consistency gradient.

use rayon::prelude::*;

use super::zncc::windowed_zncc;
use super::{distribute, RefineConfig, Snapshot, TermGradient, TermPart};
use crate::camera::Camera;
use crate::geometry::{GradientField, LabeledMesh};
use crate::image::Image;
use crate::render::reproject_point;
use crate::{Error, Result};

/// Pairs sharing less than this fraction of view `i` are skipped.
const MIN_PAIR_OVERLAP: f64 = 0.01;

/// Ordered camera pairs `(i, j)`, `i != j`, in lexicographic order.
pub(crate) fn pair_list(count: usize) -> Vec<(usize, usize)> {
    (0..count)
        .flat_map(|i| (0..count).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

/// Where each pixel of view `i` lands in view `j`.
pub(crate) struct PairSamples {
    pub valid: Vec<bool>,
    pub target: Vec<[f64; 2]>,
    pub count: usize,
}

impl PairSamples {
    pub fn new(snap: &Snapshot, i: usize, j: usize, grazing: f64) -> Self {
        let samples = &snap.samples[i];
        let mut valid = vec![false; samples.len()];
        let mut target = vec![[0.0; 2]; samples.len()];
        let mut count = 0;
        for (k, sample) in samples.iter().enumerate() {
            let Some(s) = sample else { continue };
            if s.is_grazing(grazing) {
                continue;
            }
            if let Some(pj) = reproject_point(&s.point, &snap.cameras[j], &snap.views[j], snap.mesh)
            {
                valid[k] = true;
                target[k] = pj;
                count += 1;
            }
        }
        PairSamples {
            valid,
            target,
            count,
        }
    }

    pub fn enough_overlap(&self, camera: &Camera) -> bool {
        self.count as f64 >= MIN_PAIR_OVERLAP * (camera.width * camera.height) as f64
    }

    pub fn sample(&self, image: &Image<f64>) -> Vec<f64> {
        self.valid
            .iter()
            .zip(&self.target)
            .map(|(&ok, p)| if ok { image.bilinear(p[0], p[1]) } else { 0.0 })
            .collect()
    }
}

/// Chain rule from per-pixel sample derivatives `dE/db` in view `i` to the
/// vertices: the sample at pixel `x` moves with the depth along the ray of
/// `x`, which moves with the facet's vertices along its normal.
pub(crate) fn accumulate_pair(
    snap: &Snapshot,
    i: usize,
    j: usize,
    pair: &PairSamples,
    image_j: &Image<f64>,
    sample_gradient: &[f64],
) -> (GradientField, Vec<bool>) {
    let mut field = GradientField::zeros(snap.mesh.vertex_count());
    let mut support = vec![false; pair.valid.len()];
    let camera_j = &snap.cameras[j];
    for (k, sample) in snap.samples[i].iter().enumerate() {
        let de_db = sample_gradient[k];
        if !pair.valid[k] || de_db == 0.0 {
            continue;
        }
        let Some(s) = sample else { continue };
        let p = pair.target[k];
        let (_, grad) = image_j.bilinear_with_gradient(p[0], p[1]);
        let flow_2d = camera_j.projection_jacobian(&s.point) * s.ray;
        let flow = de_db * (grad[0] * flow_2d[0] + grad[1] * flow_2d[1]) / s.cos;
        if flow != 0.0 {
            distribute(&mut field, snap.mesh, s, flow);
            support[k] = true;
        }
    }
    (field, support)
}

pub(crate) fn photometric_with(
    snap: &Snapshot,
    images: &[Image<f64>],
    config: &RefineConfig,
) -> TermGradient {
    let pairs = pair_list(snap.cameras.len());
    let parts: Vec<Option<TermPart>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let pair = PairSamples::new(snap, i, j, config.grazing_threshold);
            if !pair.enough_overlap(&snap.cameras[i]) {
                log::warn!(
                    "cameras {i} and {j} barely overlap ({} pixels), pair skipped",
                    pair.count
                );
                return None;
            }
            let samples = pair.sample(&images[j]);
            let zncc = windowed_zncc(
                &images[i],
                &samples,
                &pair.valid,
                config.window_radius,
                true,
            );
            let (field, support) = accumulate_pair(snap, i, j, &pair, &images[j], &zncc.gradient);
            Some(TermPart {
                field,
                energy: zncc.energy,
                support,
            })
        })
        .collect();
    let mut term = TermGradient::empty(snap.mesh.vertex_count(), snap.cameras);
    for (&(i, _), part) in pairs.iter().zip(parts) {
        if let Some(part) = part {
            term.absorb(i, part);
        }
    }
    term
}

/// Photo-consistency gradient summed over all ordered camera pairs.
pub fn photometric_gradient(
    mesh: &LabeledMesh,
    cameras: &[Camera],
    images: &[Image<f64>],
    config: &RefineConfig,
) -> Result<TermGradient> {
    config.validate()?;
    mesh.validate()?;
    if images.len() != cameras.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} images for {} cameras",
            images.len(),
            cameras.len()
        )));
    }
    for (k, (image, camera)) in images.iter().zip(cameras).enumerate() {
        if image.width != camera.width || image.height != camera.height {
            return Err(Error::DimensionMismatch(format!(
                "image {k} does not match its camera"
            )));
        }
    }
    let snap = Snapshot::new(mesh, cameras);
    Ok(photometric_with(&snap, images, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, perturb_mesh, SceneSpec, TextureKind};

    #[test]
    fn pair_list_is_ordered() {
        assert_eq!(
            pair_list(3),
            vec![(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
        );
        assert!(pair_list(1).is_empty());
    }

    #[test]
    fn single_camera_gives_zero_field() {
        let s = generate_scene(&SceneSpec {
            width: 32,
            height: 32,
            grid: 4,
            ..SceneSpec::default()
        })
        .unwrap();
        let g = photometric_gradient(
            &s.mesh,
            &s.cameras[..1],
            &s.images[..1],
            &RefineConfig::default(),
        )
        .unwrap();
        assert_eq!(g.field.max_norm(), 0.0);
        assert_eq!(g.energy, 0.0);
    }

    #[test]
    fn flat_images_give_zero_field() {
        let s = generate_scene(&SceneSpec {
            width: 32,
            height: 32,
            grid: 4,
            ..SceneSpec::default()
        })
        .unwrap();
        let flat: Vec<Image<f64>> = s
            .images
            .iter()
            .map(|i| Image::filled(i.width, i.height, 90.0))
            .collect();
        let mesh = perturb_mesh(&s.mesh, 0.02, 1);
        let g = photometric_gradient(&mesh, &s.cameras, &flat, &RefineConfig::default()).unwrap();
        assert_eq!(g.field.max_norm(), 0.0);
    }

    #[test]
    fn truth_is_a_near_stationary_point() {
        // fronto-parallel plane seen from cameras translated by whole pixels,
        // so the reprojected textures agree exactly at the truth
        let s =
            crate::synth::fronto_parallel_rig(64, 3, TextureKind::ValueNoise { frequency: 6.0 }, 7);
        let config = RefineConfig::default();
        let at_truth = photometric_gradient(&s.mesh, &s.cameras, &s.images, &config).unwrap();
        let edge = s.mesh.mean_edge_length();
        let mut perturbed = s.mesh.clone();
        for (k, p) in perturbed.vertices.iter_mut().enumerate() {
            p.z += 0.05 * edge * if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        let off = photometric_gradient(&perturbed, &s.cameras, &s.images, &config).unwrap();
        assert!(off.field.max_norm() > 0.0);
        assert!(
            at_truth.field.max_norm() <= 1e-3 * off.field.max_norm(),
            "{} vs {}",
            at_truth.field.max_norm(),
            off.field.max_norm()
        );
        assert!(at_truth.energy < off.energy);
    }
}
