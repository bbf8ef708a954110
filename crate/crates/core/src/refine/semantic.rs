//! Semantic gradients: the gated single-view term and the pairwise baseline.

use rayon::prelude::*;

use super::photo::{accumulate_pair, pair_list, PairSamples};
use super::{distribute, RefineConfig, Snapshot, TermGradient, TermPart};
use crate::camera::Camera;
use crate::geometry::{GradientField, LabeledMesh};
use crate::image::{
    blurred_mask_at, box_sum, gaussian_blur, window_is_homogeneous, GaussianKernel, Image,
};
use crate::render::{render_label_masks, RenderedView, SemanticMaskSet};
use crate::{Error, Result};

/// Gated squared difference of two binary windows: the number of
/// disagreeing pixels, or 0 when `window_3d` holds a single value.
pub fn ssd_sem_error(window_2d: &[u8], window_3d: &[u8]) -> f64 {
    assert_eq!(
        window_2d.len(),
        window_3d.len(),
        "SSD windows differ in size"
    );
    let has_one = window_3d.iter().any(|&v| v != 0);
    let has_zero = window_3d.contains(&0);
    if !(has_one && has_zero) {
        return 0.0;
    }
    window_2d
        .iter()
        .zip(window_3d)
        .map(|(&a, &b)| {
            let d = f64::from(u8::from(a != 0)) - f64::from(u8::from(b != 0));
            d * d
        })
        .sum()
}

/// 1 where the in-image window of `mask` contains both values, else 0.
pub(crate) fn chi_gate(mask: &Image<u8>, radius: usize) -> Image<f64> {
    let ones = box_sum(&mask.map(|&v| f64::from(u8::from(v != 0))), radius);
    let area = box_sum(&Image::filled(mask.width, mask.height, 1.0), radius);
    Image::from_fn(mask.width, mask.height, |x, y| {
        let s = *ones.get(x, y);
        f64::from(u8::from(s > 0.5 && s < area.get(x, y) - 0.5))
    })
}

/// Mesh-independent parts of the single-view term for one camera and label,
/// frozen at the rendering they were computed from.
pub(crate) struct SingleViewLabel {
    /// Rendered binary mask of the label.
    pub rendered: Image<u8>,
    /// Blurred input mask.
    pub target: Image<f64>,
    /// Number of gated windows covering each pixel.
    pub weight: Image<f64>,
}

pub(crate) struct SingleViewCamera {
    pub labels: Vec<SingleViewLabel>,
}

impl SingleViewCamera {
    pub fn new(
        view: &RenderedView,
        mesh: &LabeledMesh,
        masks: &[Image<u8>],
        radius: usize,
        kernel: &GaussianKernel,
    ) -> Self {
        let labels = render_label_masks(view, mesh)
            .into_iter()
            .zip(masks)
            .filter_map(|(rendered, mask)| {
                // a label the view does not render has no mixed window
                if rendered.data.iter().all(|&v| v == 0) {
                    return None;
                }
                let weight = box_sum(&chi_gate(&rendered, radius), radius);
                if weight.data.iter().all(|&c| c == 0.0) {
                    return None;
                }
                Some(SingleViewLabel {
                    rendered,
                    target: gaussian_blur(&mask.to_f64(), kernel),
                    weight,
                })
            })
            .collect();
        SingleViewCamera { labels }
    }
}

fn single_view_camera(
    snap: &Snapshot,
    camera: usize,
    masks: &[Image<u8>],
    config: &RefineConfig,
    kernel: &GaussianKernel,
) -> TermPart {
    let view = &snap.views[camera];
    let cam = &snap.cameras[camera];
    let samples = &snap.samples[camera];
    let prepared = SingleViewCamera::new(view, snap.mesh, masks, config.window_radius, kernel);
    let mut field = GradientField::zeros(snap.mesh.vertex_count());
    let mut support = vec![false; view.width * view.height];
    let mut energy = 0.0;
    for label in &prepared.labels {
        let blurred = gaussian_blur(&label.rendered.to_f64(), kernel);
        for y in 0..view.height {
            for x in 0..view.width {
                let k = y * view.width + x;
                let c = label.weight.data[k];
                if c == 0.0 {
                    continue;
                }
                let diff = blurred.data[k] - label.target.data[k];
                energy += c * diff * diff;
                let de_ds = 2.0 * c * diff;
                if de_ds == 0.0 {
                    continue;
                }
                let Some(s) = &samples[k] else { continue };
                if s.is_grazing(config.grazing_threshold) {
                    continue;
                }
                if window_is_homogeneous(&label.rendered, x, y, kernel.radius) {
                    continue;
                }
                let (_, grad) =
                    blurred_mask_at(&label.rendered, kernel, (x, y), [x as f64, y as f64]);
                let shift = cam.projection_jacobian(&s.point) * s.normal;
                // the rendered pattern moves with the surface: S(y) = M(y - u)
                let flow = -de_ds * (grad[0] * shift[0] + grad[1] * shift[1]);
                if flow != 0.0 {
                    distribute(&mut field, snap.mesh, s, flow);
                    support[k] = true;
                }
            }
        }
    }
    TermPart {
        field,
        energy,
        support,
    }
}

pub(crate) fn single_view_with(
    snap: &Snapshot,
    masks: &SemanticMaskSet,
    config: &RefineConfig,
) -> TermGradient {
    let kernel = GaussianKernel::new(config.mask_blur_sigma);
    let parts: Vec<TermPart> = (0..snap.cameras.len())
        .into_par_iter()
        .map(|c| single_view_camera(snap, c, &masks.masks[c], config, &kernel))
        .collect();
    let mut term = TermGradient::empty(snap.mesh.vertex_count(), snap.cameras);
    for (c, part) in parts.into_iter().enumerate() {
        term.absorb(c, part);
    }
    term
}

fn check_masks(mesh: &LabeledMesh, cameras: &[Camera], masks: &SemanticMaskSet) -> Result<()> {
    mesh.validate()?;
    masks.validate_dimensions(cameras)?;
    if masks.label_count() < mesh.label_count {
        return Err(Error::DimensionMismatch(format!(
            "masks for {} labels, mesh has {}",
            masks.label_count(),
            mesh.label_count
        )));
    }
    Ok(())
}

/// Each view's masks against the mesh's own label rendering in that view,
/// restricted to windows that straddle a rendered label boundary.
pub fn semantic_gradient_single_view(
    mesh: &LabeledMesh,
    cameras: &[Camera],
    masks: &SemanticMaskSet,
    config: &RefineConfig,
) -> Result<TermGradient> {
    config.validate()?;
    check_masks(mesh, cameras, masks)?;
    let snap = Snapshot::new(mesh, cameras);
    Ok(single_view_with(&snap, masks, config))
}

/// Baseline: view `j`'s blurred masks warped into view `i` through the mesh
/// and compared with view `i`'s blurred masks, with no gate.
pub fn semantic_gradient_pairwise(
    mesh: &LabeledMesh,
    cameras: &[Camera],
    masks: &SemanticMaskSet,
    config: &RefineConfig,
) -> Result<TermGradient> {
    config.validate()?;
    check_masks(mesh, cameras, masks)?;
    let snap = Snapshot::new(mesh, cameras);
    let kernel = GaussianKernel::new(config.mask_blur_sigma);
    let labels = mesh.label_count;
    let blurred: Vec<Vec<Image<f64>>> = masks
        .masks
        .par_iter()
        .map(|per_label| {
            per_label[..labels]
                .iter()
                .map(|m| gaussian_blur(&m.to_f64(), &kernel))
                .collect()
        })
        .collect();
    let pairs = pair_list(cameras.len());
    let parts: Vec<Option<TermPart>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let pair = PairSamples::new(&snap, i, j, config.grazing_threshold);
            if !pair.enough_overlap(&cameras[i]) {
                log::warn!(
                    "cameras {i} and {j} barely overlap ({} pixels), pair skipped",
                    pair.count
                );
                return None;
            }
            let (w, h) = (cameras[i].width, cameras[i].height);
            let valid = Image {
                width: w,
                height: h,
                data: pair.valid.iter().map(|&v| f64::from(u8::from(v))).collect(),
            };
            let windows = box_sum(&valid, config.window_radius);
            let mut field = GradientField::zeros(mesh.vertex_count());
            let mut support = vec![false; w * h];
            let mut energy = 0.0;
            for l in 0..labels {
                let empty = |m: &Image<u8>| m.data.iter().all(|&v| v == 0);
                if empty(&masks.masks[i][l]) && empty(&masks.masks[j][l]) {
                    continue;
                }
                let reference = &blurred[i][l];
                let warped = pair.sample(&blurred[j][l]);
                let mut de_db = vec![0.0; w * h];
                for k in 0..w * h {
                    if !pair.valid[k] {
                        continue;
                    }
                    let diff = warped[k] - reference.data[k];
                    energy += windows.data[k] * diff * diff;
                    de_db[k] = 2.0 * windows.data[k] * diff;
                }
                let (f, s) = accumulate_pair(&snap, i, j, &pair, &blurred[j][l], &de_db);
                field.add_scaled(&f, 1.0);
                support.iter_mut().zip(s).for_each(|(a, b)| *a |= b);
            }
            Some(TermPart {
                field,
                energy,
                support,
            })
        })
        .collect();
    let mut term = TermGradient::empty(mesh.vertex_count(), cameras);
    for (&(i, _), part) in pairs.iter().zip(parts) {
        if let Some(part) = part {
            term.absorb(i, part);
        }
    }
    Ok(term)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneSpec};

    #[test]
    fn ssd_examples() {
        let w3 = [0, 1, 1, 0, 1, 0, 0, 1, 1];
        assert_eq!(ssd_sem_error(&w3, &w3), 0.0);
        assert_eq!(ssd_sem_error(&[0, 1, 0, 1], &[1; 4]), 0.0);
        let w2 = [1, 1, 0, 0, 1, 0, 0, 1, 0];
        assert_eq!(ssd_sem_error(&w2, &w3), 3.0);
    }

    #[test]
    fn chi_gate_marks_mixed_windows() {
        let mask = Image::from_fn(10, 1, |x, _| u8::from(x >= 5));
        let chi = chi_gate(&mask, 2);
        let expected = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        assert_eq!(chi.data, expected);
    }

    fn scene() -> crate::synth::Scene {
        generate_scene(&SceneSpec {
            width: 48,
            height: 48,
            grid: 6,
            ..SceneSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn consistent_masks_give_zero_gradient() {
        let s = scene();
        let g =
            semantic_gradient_single_view(&s.mesh, &s.cameras, &s.masks, &RefineConfig::default())
                .unwrap();
        assert_eq!(g.field.max_norm(), 0.0);
        assert_eq!(g.energy, 0.0);
    }

    #[test]
    fn displaced_label_boundary_gives_boundary_flow() {
        let s = scene();
        let mut mesh = s.mesh.clone();
        // move the label boundary one grid column
        let centroids: Vec<f64> = (0..mesh.facet_count())
            .map(|f| mesh.facet_points(f).iter().map(|p| p.x).sum::<f64>() / 3.0)
            .collect();
        let step = 2.0 / 6.0;
        for (f, cx) in centroids.iter().enumerate() {
            mesh.labels[f] = usize::from(*cx >= step);
        }
        let config = RefineConfig::default();
        let g = semantic_gradient_single_view(&mesh, &s.cameras, &s.masks, &config).unwrap();
        assert!(g.field.max_norm() > 0.0);
        assert!(g.energy > 0.0);
        let far = config.window_radius as f64 + 3.0 * config.mask_blur_sigma;
        for (c, support) in g.support.iter().enumerate() {
            let rendered = crate::render::render_label_image(
                &crate::render::rasterize(&mesh, &s.cameras[c]),
                &mesh,
            );
            let dist = crate::eval::boundary_distance(&crate::eval::label_boundary(&rendered));
            for (k, &on) in support.data.iter().enumerate() {
                if on != 0 {
                    assert!(
                        dist.data[k] <= far,
                        "camera {c} pixel {k} at {}",
                        dist.data[k]
                    );
                }
            }
        }
    }
}
