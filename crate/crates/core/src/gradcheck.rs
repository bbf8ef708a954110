//! Finite-difference checks of the analytic refinement gradients.
//!
//! Each term is compared against central differences of a scalar energy in
//! which the discrete structure (pixel-to-facet assignment, validity, gate
//! and rendered masks) is frozen at the evaluation point, so the energy is
//! smooth in the vertex positions.

use std::fmt;

use crate::camera::Camera;
use crate::geometry::{build_adjacency, facet_normal, membrane_energy, GradientField, LabeledMesh};
use crate::image::{blurred_mask_at, gaussian_blur, window_is_homogeneous, GaussianKernel, Image};
use crate::refine::{
    pair_list, photometric_with, single_view_with, windowed_zncc, PairSamples, RefineConfig,
    SingleViewCamera, Snapshot,
};
use crate::render::SemanticMaskSet;
use crate::synth::{camera_ring, grid_plane, render_scene, Scene, SceneSpec, TextureKind};
use crate::{Result, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    /// Finite-difference step as a fraction of the mean edge length.
    pub step_fraction: f64,
    pub tolerance: f64,
    /// Vertices with a smaller analytic gradient are not compared.
    pub min_norm: f64,
    /// Blur applied to the images before the photometric check.
    pub photo_blur_sigma: f64,
    /// Negative control: flip the analytic gradients.
    pub break_sign: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            step_fraction: 1e-4,
            tolerance: 1e-2,
            min_norm: 1e-8,
            photo_blur_sigma: 1.0,
            break_sign: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TermStatus {
    Skipped,
    Checked {
        max_relative_error: f64,
        vertices: usize,
        passed: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermCheck {
    pub name: &'static str,
    pub status: TermStatus,
}

impl fmt::Display for TermCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.status {
            TermStatus::Skipped => write!(f, "{:<8} skipped", self.name),
            TermStatus::Checked {
                max_relative_error,
                vertices,
                passed,
            } => write!(
                f,
                "{:<8} {} max relative error {:.3e} over {} vertices",
                self.name,
                if *passed { "pass" } else { "FAIL" },
                max_relative_error,
                vertices
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub terms: Vec<TermCheck>,
}

impl GradcheckReport {
    /// True when no checked term failed.
    pub fn passed(&self) -> bool {
        self.terms
            .iter()
            .all(|t| !matches!(t.status, TermStatus::Checked { passed: false, .. }))
    }
}

/// A two-triangle quad with one label per triangle, filling every view,
/// and an evaluation mesh displaced from it so every residual is non-zero.
pub fn gradcheck_scene(size: usize, seed: u64) -> Result<(Scene, LabeledMesh)> {
    let spec = SceneSpec {
        width: size,
        height: size,
        ..SceneSpec::default()
    };
    spec.validate()?;
    let mesh = grid_plane(1, 1.0, 1.0, 0.0, true);
    let cameras = camera_ring(&spec)?;
    let scene = render_scene(
        mesh,
        cameras,
        TextureKind::ValueNoise { frequency: 4.0 },
        None,
        seed,
    );
    let mut moved = scene.mesh.clone();
    let offsets = [
        Vec3::new(0.02, -0.01, 0.03),
        Vec3::new(-0.015, 0.02, -0.02),
        Vec3::new(0.01, 0.015, 0.025),
        Vec3::new(-0.02, -0.01, -0.015),
    ];
    for (p, o) in moved.vertices.iter_mut().zip(offsets) {
        *p += o;
    }
    Ok((scene, moved))
}

fn compare(
    name: &'static str,
    mesh: &LabeledMesh,
    analytic: &GradientField,
    energy: impl Fn(&[Vec3]) -> f64,
    options: &GradcheckOptions,
) -> TermCheck {
    let h = options.step_fraction * mesh.mean_edge_length();
    let sign = if options.break_sign { -1.0 } else { 1.0 };
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut vertices = mesh.vertices.clone();
    for v in 0..mesh.vertex_count() {
        let g = sign * analytic[v];
        if g.norm() <= options.min_norm {
            continue;
        }
        let mut fd = Vec3::zeros();
        for axis in 0..3 {
            let base = vertices[v][axis];
            vertices[v][axis] = base + h;
            let plus = energy(&vertices);
            vertices[v][axis] = base - h;
            let minus = energy(&vertices);
            vertices[v][axis] = base;
            fd[axis] = (plus - minus) / (2.0 * h);
        }
        let error = (g - fd).norm() / g.norm().max(fd.norm());
        log::debug!(
            "{name} vertex {v}: analytic {:?} numeric {:?}",
            g.as_slice(),
            fd.as_slice()
        );
        worst = worst.max(error);
        checked += 1;
    }
    TermCheck {
        name,
        status: TermStatus::Checked {
            max_relative_error: worst,
            vertices: checked,
            passed: checked > 0 && worst < options.tolerance,
        },
    }
}

/// Photometric energy with pixel-to-facet assignment and validity frozen:
/// each pixel's ray is intersected with its facet's current plane.
fn frozen_photo_energy(
    snap: &Snapshot,
    images: &[Image<f64>],
    config: &RefineConfig,
    vertices: &[Vec3],
) -> f64 {
    let mut total = 0.0;
    for (i, j) in pair_list(snap.cameras.len()) {
        let pair = PairSamples::new(snap, i, j, config.grazing_threshold);
        if !pair.enough_overlap(&snap.cameras[i]) {
            continue;
        }
        let (cam_i, cam_j): (&Camera, &Camera) = (&snap.cameras[i], &snap.cameras[j]);
        let w = cam_i.width;
        let samples: Vec<f64> = snap.samples[i]
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let (true, Some(s)) = (pair.valid[k], s) else {
                    return 0.0;
                };
                let ids = snap.mesh.facets[s.facet];
                let points = [vertices[ids[0]], vertices[ids[1]], vertices[ids[2]]];
                let Some(n) = facet_normal(&points) else {
                    return 0.0;
                };
                let (x, y) = ((k % w) as f64, (k / w) as f64);
                let Some(depth) = cam_i.plane_depth(x, y, &n, &points[0]) else {
                    return 0.0;
                };
                let p = cam_i.unproject(x, y, depth);
                let Ok((pj, _)) = cam_j.project(&p) else {
                    return 0.0;
                };
                images[j].bilinear(pj[0], pj[1])
            })
            .collect();
        total += windowed_zncc(
            &images[i],
            &samples,
            &pair.valid,
            config.window_radius,
            false,
        )
        .energy;
    }
    total
}

/// Single-view semantic energy with the rendered masks, gate weights and
/// pixel samples frozen; the rendered pattern is advected by the normal
/// displacement of each pixel's surface point.
fn frozen_sem_energy(
    snap: &Snapshot,
    prepared: &[SingleViewCamera],
    config: &RefineConfig,
    kernel: &GaussianKernel,
    vertices: &[Vec3],
) -> f64 {
    let mut total = 0.0;
    for (c, camera) in prepared.iter().enumerate() {
        let cam = &snap.cameras[c];
        let w = cam.width;
        let shifts: Vec<[f64; 2]> = snap.samples[c]
            .iter()
            .map(|s| {
                let Some(s) = s.filter(|s| !s.is_grazing(config.grazing_threshold)) else {
                    return [0.0; 2];
                };
                let ids = snap.mesh.facets[s.facet];
                let moved: Vec3 = (0..3).map(|k| s.bary[k] * vertices[ids[k]]).sum();
                let q = s.point + s.normal.dot(&(moved - s.point)) * s.normal;
                match (cam.project(&q), cam.project(&s.point)) {
                    (Ok((a, _)), Ok((b, _))) => [a[0] - b[0], a[1] - b[1]],
                    _ => [0.0; 2],
                }
            })
            .collect();
        for label in &camera.labels {
            let blurred = gaussian_blur(&label.rendered.to_f64(), kernel);
            for (k, &weight) in label.weight.data.iter().enumerate() {
                if weight == 0.0 {
                    continue;
                }
                let (x, y) = (k % w, k / w);
                let value = if window_is_homogeneous(&label.rendered, x, y, kernel.radius) {
                    blurred.data[k]
                } else {
                    let u = shifts[k];
                    blurred_mask_at(
                        &label.rendered,
                        kernel,
                        (x, y),
                        [x as f64 - u[0], y as f64 - u[1]],
                    )
                    .0
                };
                let diff = value - label.target.data[k];
                total += weight * diff * diff;
            }
        }
    }
    total
}

/// Checks every term with positive weight at `mesh`.
pub fn run_gradcheck(
    mesh: &LabeledMesh,
    cameras: &[Camera],
    images: &[Image<f64>],
    masks: &SemanticMaskSet,
    config: &RefineConfig,
    options: &GradcheckOptions,
) -> Result<GradcheckReport> {
    config.validate()?;
    let snap = Snapshot::new(mesh, cameras);
    let mut terms = Vec::new();

    if config.lambda_smooth > 0.0 {
        let adjacency = build_adjacency(mesh)?;
        let (field, _) = crate::refine::smoothness_gradient(mesh)?;
        // the negated umbrella is the membrane gradient divided by the degree
        let scaled = GradientField(
            field
                .iter()
                .zip(&adjacency.vertex_neighbors)
                .map(|(g, n)| g * n.len() as f64)
                .collect(),
        );
        terms.push(compare(
            "smooth",
            mesh,
            &scaled,
            |v| membrane_energy(v, &adjacency),
            options,
        ));
    } else {
        terms.push(TermCheck {
            name: "smooth",
            status: TermStatus::Skipped,
        });
    }

    if config.lambda_sem > 0.0 {
        let kernel = GaussianKernel::new(config.mask_blur_sigma);
        let analytic = single_view_with(&snap, masks, config);
        let prepared: Vec<SingleViewCamera> = (0..cameras.len())
            .map(|c| {
                SingleViewCamera::new(
                    &snap.views[c],
                    mesh,
                    &masks.masks[c],
                    config.window_radius,
                    &kernel,
                )
            })
            .collect();
        terms.push(compare(
            "semantic",
            mesh,
            &analytic.field,
            |v| frozen_sem_energy(&snap, &prepared, config, &kernel, v),
            options,
        ));
    } else {
        terms.push(TermCheck {
            name: "semantic",
            status: TermStatus::Skipped,
        });
    }

    if config.lambda_photo > 0.0 {
        let kernel = GaussianKernel::new(options.photo_blur_sigma);
        let blurred: Vec<Image<f64>> = images.iter().map(|i| gaussian_blur(i, &kernel)).collect();
        let analytic = photometric_with(&snap, &blurred, config);
        terms.push(compare(
            "photo",
            mesh,
            &analytic.field,
            |v| frozen_photo_energy(&snap, &blurred, config, v),
            options,
        ));
    } else {
        terms.push(TermCheck {
            name: "photo",
            status: TermStatus::Skipped,
        });
    }
    Ok(GradcheckReport { terms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_energies_match_the_reported_ones() {
        let (scene, mesh) = gradcheck_scene(32, 1).unwrap();
        let config = RefineConfig::default();
        let snap = Snapshot::new(&mesh, &scene.cameras);
        let kernel = GaussianKernel::new(config.mask_blur_sigma);
        let prepared: Vec<SingleViewCamera> = (0..4)
            .map(|c| {
                SingleViewCamera::new(&snap.views[c], &mesh, &scene.masks.masks[c], 3, &kernel)
            })
            .collect();
        let sem = single_view_with(&snap, &scene.masks, &config);
        let frozen = frozen_sem_energy(&snap, &prepared, &config, &kernel, &mesh.vertices);
        assert!(sem.energy > 0.0);
        assert!((sem.energy - frozen).abs() <= 1e-9 * sem.energy);
        let photo = photometric_with(&snap, &scene.images, &config);
        let frozen = frozen_photo_energy(&snap, &scene.images, &config, &mesh.vertices);
        assert!((photo.energy - frozen).abs() <= 1e-6 * photo.energy);
    }

    #[test]
    fn zero_weight_terms_are_skipped() {
        let (scene, mesh) = gradcheck_scene(24, 1).unwrap();
        let config = RefineConfig {
            lambda_photo: 0.0,
            lambda_sem: 0.0,
            ..RefineConfig::default()
        };
        let report = run_gradcheck(
            &mesh,
            &scene.cameras,
            &scene.images,
            &scene.masks,
            &config,
            &GradcheckOptions::default(),
        )
        .unwrap();
        assert_eq!(report.terms[1].status, TermStatus::Skipped);
        assert_eq!(report.terms[2].status, TermStatus::Skipped);
        assert!(report.passed());
    }
}
