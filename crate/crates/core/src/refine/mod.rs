//! Variational refinement of the mesh geometry: photometric, semantic and
//! smoothness gradients, and the coarse-to-fine descent loop.

mod photo;
mod semantic;
mod zncc;

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::camera::Camera;
use crate::geometry::{
    build_adjacency, membrane_energy, subdivide, umbrella_gradient, GradientField, LabeledMesh,
};
use crate::image::Image;
use crate::labeling::{relabel, LabelingConfig};
use crate::render::{rasterize_all, RenderedView, SemanticMaskSet};
use crate::{Error, Result, Vec3};

pub use photo::photometric_gradient;
pub(crate) use photo::{pair_list, photometric_with, PairSamples};
pub use semantic::{semantic_gradient_pairwise, semantic_gradient_single_view, ssd_sem_error};
pub(crate) use semantic::{single_view_with, SingleViewCamera};
pub use zncc::{windowed_zncc, zncc_error, zncc_error_with_gradient, WindowedResult};

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    /// Half-size of the ZNCC and SSD windows.
    pub window_radius: usize,
    /// Largest vertex move per iteration, in mean edge lengths.
    pub step_size: f64,
    pub iterations_per_level: usize,
    pub levels: usize,
    pub lambda_photo: f64,
    pub lambda_sem: f64,
    pub lambda_smooth: f64,
    pub mask_blur_sigma: f64,
    /// Pixels whose `|n . d|` is below this contribute no gradient.
    pub grazing_threshold: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            window_radius: 3,
            step_size: 0.25,
            iterations_per_level: 5,
            levels: 3,
            lambda_photo: 1.0,
            lambda_sem: 1.0,
            lambda_smooth: 0.5,
            mask_blur_sigma: 1.5,
            grazing_threshold: 0.01,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.window_radius < 1 {
            return bad("window_radius must be at least 1");
        }
        if self.iterations_per_level < 1 {
            return bad("iterations_per_level must be at least 1");
        }
        if self.levels < 1 {
            return bad("levels must be at least 1");
        }
        for (name, w) in [
            ("lambda_photo", self.lambda_photo),
            ("lambda_sem", self.lambda_sem),
            ("lambda_smooth", self.lambda_smooth),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a finite non-negative number"
                )));
            }
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be a finite non-negative number");
        }
        if !(self.mask_blur_sigma > 0.0) {
            return bad("mask_blur_sigma must be positive");
        }
        if !(self.grazing_threshold > 0.0 && self.grazing_threshold < 1.0) {
            return bad("grazing_threshold must lie in (0, 1)");
        }
        Ok(())
    }
}

/// One energy term: its gradient field, scalar energy, per-camera energy
/// and the pixels of each camera that contributed a non-zero flow.
#[derive(Debug, Clone)]
pub struct TermGradient {
    pub field: GradientField,
    pub energy: f64,
    pub per_camera: Vec<f64>,
    pub support: Vec<Image<u8>>,
}

impl TermGradient {
    pub(crate) fn empty(vertex_count: usize, cameras: &[Camera]) -> Self {
        TermGradient {
            field: GradientField::zeros(vertex_count),
            energy: 0.0,
            per_camera: vec![0.0; cameras.len()],
            support: cameras
                .iter()
                .map(|c| Image::filled(c.width, c.height, 0))
                .collect(),
        }
    }

    /// Merge the contribution of camera `camera` (deterministic order is the
    /// caller's job).
    pub(crate) fn absorb(&mut self, camera: usize, part: TermPart) {
        self.field.add_scaled(&part.field, 1.0);
        self.energy += part.energy;
        self.per_camera[camera] += part.energy;
        for (s, &p) in self.support[camera].data.iter_mut().zip(&part.support) {
            *s |= u8::from(p);
        }
    }
}

/// Contribution of one camera or camera pair.
pub(crate) struct TermPart {
    pub field: GradientField,
    pub energy: f64,
    pub support: Vec<bool>,
}

/// Per-term energies of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub photo: f64,
    pub sem: f64,
    pub smooth: f64,
    pub total: f64,
    pub photo_per_camera: Vec<f64>,
    pub sem_per_camera: Vec<f64>,
}

/// Surface point seen through one pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PixelSample {
    pub facet: usize,
    pub point: Vec3,
    pub bary: [f64; 3],
    pub normal: Vec3,
    /// Unit ray from the camera center.
    pub ray: Vec3,
    pub cos: f64,
}

impl PixelSample {
    pub fn is_grazing(&self, threshold: f64) -> bool {
        self.cos.abs() < threshold
    }
}

pub(crate) fn view_samples(
    normals: &[Option<Vec3>],
    camera: &Camera,
    view: &RenderedView,
) -> Vec<Option<PixelSample>> {
    let center = camera.center();
    let mut out = Vec::with_capacity(view.width * view.height);
    for y in 0..view.height {
        for x in 0..view.width {
            let i = y * view.width + x;
            let sample = view.facet_at(x, y).and_then(|facet| {
                let normal = normals[facet]?;
                let point = camera.unproject(x as f64, y as f64, view.depth[i]);
                let ray = (point - center).normalize();
                Some(PixelSample {
                    facet,
                    point,
                    bary: view.barycentric[i],
                    normal,
                    ray,
                    cos: normal.dot(&ray),
                })
            });
            out.push(sample);
        }
    }
    out
}

/// Adds `flow * phi_k * n` to the vertices of the sampled facet.
#[inline]
pub(crate) fn distribute(
    field: &mut GradientField,
    mesh: &LabeledMesh,
    sample: &PixelSample,
    flow: f64,
) {
    for (k, &v) in mesh.facets[sample.facet].iter().enumerate() {
        field[v] += (flow * sample.bary[k]) * sample.normal;
    }
}

/// Rendered state of the mesh shared by all terms of one evaluation.
pub(crate) struct Snapshot<'a> {
    pub mesh: &'a LabeledMesh,
    pub cameras: &'a [Camera],
    pub views: Vec<RenderedView>,
    pub samples: Vec<Vec<Option<PixelSample>>>,
}

impl<'a> Snapshot<'a> {
    pub fn new(mesh: &'a LabeledMesh, cameras: &'a [Camera]) -> Self {
        let views = rasterize_all(mesh, cameras);
        let normals = mesh.facet_normals();
        let samples = cameras
            .par_iter()
            .zip(&views)
            .map(|(camera, view)| view_samples(&normals, camera, view))
            .collect();
        Snapshot {
            mesh,
            cameras,
            views,
            samples,
        }
    }
}

/// Smoothness term: the membrane energy and the negated umbrella field.
pub fn smoothness_gradient(mesh: &LabeledMesh) -> Result<(GradientField, f64)> {
    let adjacency = build_adjacency(mesh)?;
    let field = umbrella_gradient(mesh, &adjacency).scaled(-1.0);
    Ok((field, membrane_energy(&mesh.vertices, &adjacency)))
}

/// All three terms, evaluated against one rendering of the mesh.
pub struct TermGradients {
    pub photo: Option<TermGradient>,
    pub sem: Option<TermGradient>,
    pub smooth: GradientField,
    pub smooth_energy: f64,
}

/// Evaluates the terms whose weight is positive.
pub fn term_gradients(
    mesh: &LabeledMesh,
    cameras: &[Camera],
    images: &[Image<f64>],
    masks: &SemanticMaskSet,
    config: &RefineConfig,
) -> Result<TermGradients> {
    config.validate()?;
    check_inputs(mesh, cameras, images, masks)?;
    let snapshot = Snapshot::new(mesh, cameras);
    let photo =
        (config.lambda_photo > 0.0).then(|| photo::photometric_with(&snapshot, images, config));
    let sem =
        (config.lambda_sem > 0.0).then(|| semantic::single_view_with(&snapshot, masks, config));
    let (smooth, smooth_energy) = smoothness_gradient(mesh)?;
    Ok(TermGradients {
        photo,
        sem,
        smooth,
        smooth_energy,
    })
}

fn check_inputs(
    mesh: &LabeledMesh,
    cameras: &[Camera],
    images: &[Image<f64>],
    masks: &SemanticMaskSet,
) -> Result<()> {
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

/// Weighted sum of the three term gradients and the matching report.
pub fn total_gradient(
    mesh: &LabeledMesh,
    cameras: &[Camera],
    images: &[Image<f64>],
    masks: &SemanticMaskSet,
    config: &RefineConfig,
) -> Result<(GradientField, EnergyReport)> {
    let terms = term_gradients(mesh, cameras, images, masks, config)?;
    Ok(combine(&terms, config, cameras.len()))
}

pub fn combine(
    terms: &TermGradients,
    config: &RefineConfig,
    camera_count: usize,
) -> (GradientField, EnergyReport) {
    let mut field = GradientField::zeros(terms.smooth.len());
    let zeros = vec![0.0; camera_count];
    let (photo, photo_per_camera) = match &terms.photo {
        Some(t) => {
            field.add_scaled(&t.field, config.lambda_photo);
            (t.energy, t.per_camera.clone())
        }
        None => (0.0, zeros.clone()),
    };
    let (sem, sem_per_camera) = match &terms.sem {
        Some(t) => {
            field.add_scaled(&t.field, config.lambda_sem);
            (t.energy, t.per_camera.clone())
        }
        None => (0.0, zeros),
    };
    if config.lambda_smooth > 0.0 {
        field.add_scaled(&terms.smooth, config.lambda_smooth);
    }
    let smooth = terms.smooth_energy;
    let total =
        config.lambda_photo * photo + config.lambda_sem * sem + config.lambda_smooth * smooth;
    let report = EnergyReport {
        photo,
        sem,
        smooth,
        total,
        photo_per_camera,
        sem_per_camera,
    };
    (field, report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub level: usize,
    pub iteration: usize,
    pub report: EnergyReport,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub mesh: LabeledMesh,
    pub log: Vec<IterationRecord>,
}

impl RefineOutcome {
    pub fn energy_csv(&self) -> String {
        let mut out = String::from("level,iteration,photo,sem,smooth,total\n");
        for r in &self.log {
            let e = &r.report;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.level, r.iteration, e.photo, e.sem, e.smooth, e.total
            );
        }
        out
    }

    /// Fraction of consecutive iterations within a level whose total energy
    /// did not increase.
    pub fn non_increasing_fraction(&self) -> f64 {
        let steps: Vec<bool> = self
            .log
            .windows(2)
            .filter(|w| w[0].level == w[1].level)
            .map(|w| w[1].report.total <= w[0].report.total)
            .collect();
        if steps.is_empty() {
            return 1.0;
        }
        steps.iter().filter(|&&ok| ok).count() as f64 / steps.len() as f64
    }
}

/// Vertex displacement `-step * G` with `step` chosen so the largest move is
/// `step_size` mean edge lengths.
pub fn descent_step(mesh: &mut LabeledMesh, field: &GradientField, step_size: f64) {
    let max = field.max_norm();
    if max <= 0.0 {
        return;
    }
    let scale = step_size * mesh.mean_edge_length() / max;
    for (p, g) in mesh.vertices.iter_mut().zip(field.iter()) {
        *p -= scale * g;
    }
}

fn check_finite(terms: &TermGradients, mesh: &LabeledMesh) -> Result<()> {
    let named = [
        ("photometric", terms.photo.as_ref()),
        ("semantic", terms.sem.as_ref()),
    ];
    for (name, term) in named {
        if let Some(t) = term {
            if let Some(v) = t.field.first_non_finite() {
                let worst = t
                    .per_camera
                    .iter()
                    .enumerate()
                    .find(|(_, e)| !e.is_finite())
                    .map_or_else(|| "none".to_string(), |(c, _)| c.to_string());
                return Err(Error::NonFiniteGradient {
                    vertex: v,
                    detail: format!(
                        "{name} term, vertex at {:?}, gradient {:?}, non-finite camera energy: {worst}",
                        mesh.vertices[v].as_slice(),
                        t.field[v].as_slice()
                    ),
                });
            }
        }
    }
    if let Some(v) = terms.smooth.first_non_finite() {
        return Err(Error::NonFiniteGradient {
            vertex: v,
            detail: format!(
                "smoothness term, vertex at {:?}",
                mesh.vertices[v].as_slice()
            ),
        });
    }
    Ok(())
}

/// Coarse-to-fine refinement. Each level runs `iterations_per_level`
/// descent steps and then relabels; every level but the last subdivides
/// before relabeling.
pub fn refine_loop(
    mesh: &LabeledMesh,
    cameras: &[Camera],
    images: &[Image<f64>],
    masks: &SemanticMaskSet,
    config: &RefineConfig,
    labeling: &LabelingConfig,
) -> Result<RefineOutcome> {
    config.validate()?;
    labeling.validate()?;
    run_schedule(
        mesh,
        cameras,
        images,
        masks,
        config,
        labeling,
        config.iterations_per_level,
    )
}

/// Same schedule with an explicit per-level iteration count, which may be 0.
pub fn run_schedule(
    mesh: &LabeledMesh,
    cameras: &[Camera],
    images: &[Image<f64>],
    masks: &SemanticMaskSet,
    config: &RefineConfig,
    labeling: &LabelingConfig,
    iterations: usize,
) -> Result<RefineOutcome> {
    let mut current = mesh.clone();
    let mut log = Vec::new();
    for level in 0..config.levels {
        for iteration in 0..iterations {
            let terms = term_gradients(&current, cameras, images, masks, config)?;
            check_finite(&terms, &current)?;
            let (field, report) = combine(&terms, config, cameras.len());
            log::info!(
                "level {level} iteration {iteration}: photo {:.6} sem {:.6} smooth {:.6} total {:.6}",
                report.photo,
                report.sem,
                report.smooth,
                report.total
            );
            log.push(IterationRecord {
                level,
                iteration,
                report,
            });
            descent_step(&mut current, &field, config.step_size);
        }
        if level + 1 < config.levels {
            current = subdivide(&current);
        }
        let adjacency = build_adjacency(&current)?;
        let outcome = relabel(&current, &adjacency, cameras, masks, labeling)?;
        current.labels = outcome.result.labels;
    }
    Ok(RefineOutcome { mesh: current, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneSpec};

    #[test]
    fn config_defaults() {
        let c = RefineConfig::default();
        assert_eq!(c.window_radius, 3);
        assert_eq!(c.iterations_per_level, 5);
        assert_eq!(
            (c.lambda_photo, c.lambda_sem, c.lambda_smooth),
            (1.0, 1.0, 0.5)
        );
        c.validate().unwrap();
        assert!(RefineConfig {
            window_radius: 0,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(RefineConfig {
            lambda_sem: -1.0,
            ..c
        }
        .validate()
        .is_err());
    }

    fn small_scene() -> crate::synth::Scene {
        generate_scene(&SceneSpec {
            width: 48,
            height: 48,
            grid: 6,
            ..SceneSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_weights_give_zero_field() {
        let s = small_scene();
        let config = RefineConfig {
            lambda_photo: 0.0,
            lambda_sem: 0.0,
            lambda_smooth: 0.0,
            ..RefineConfig::default()
        };
        let (g, report) =
            total_gradient(&s.mesh, &s.cameras, &s.images, &s.masks, &config).unwrap();
        assert_eq!(g.max_norm(), 0.0);
        assert_eq!(report.total, 0.0);
    }

    #[test]
    fn smoothing_only_is_the_negated_umbrella() {
        let s = small_scene();
        let mesh = crate::synth::perturb_mesh(&s.mesh, 0.02, 3);
        let config = RefineConfig {
            lambda_photo: 0.0,
            lambda_sem: 0.0,
            lambda_smooth: 1.0,
            ..RefineConfig::default()
        };
        let (g, _) = total_gradient(&mesh, &s.cameras, &s.images, &s.masks, &config).unwrap();
        let adjacency = build_adjacency(&mesh).unwrap();
        let u = umbrella_gradient(&mesh, &adjacency);
        for (a, b) in g.iter().zip(u.iter()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn total_is_the_weighted_sum() {
        let s = small_scene();
        let mesh = crate::synth::perturb_mesh(&s.mesh, 0.02, 5);
        let config = RefineConfig {
            lambda_photo: 0.7,
            lambda_sem: 1.3,
            lambda_smooth: 0.4,
            ..RefineConfig::default()
        };
        let (g, report) = total_gradient(&mesh, &s.cameras, &s.images, &s.masks, &config).unwrap();
        let photo = photometric_gradient(&mesh, &s.cameras, &s.images, &config).unwrap();
        let sem = semantic_gradient_single_view(&mesh, &s.cameras, &s.masks, &config).unwrap();
        let (smooth, smooth_energy) = smoothness_gradient(&mesh).unwrap();
        for v in 0..mesh.vertex_count() {
            let expected = 0.7 * photo.field[v] + 1.3 * sem.field[v] + 0.4 * smooth[v];
            assert!((g[v] - expected).norm() <= 1e-12 * (1.0 + expected.norm()));
        }
        let total = 0.7 * photo.energy + 1.3 * sem.energy + 0.4 * smooth_energy;
        assert!((report.total - total).abs() <= 1e-9 * total.abs());
    }

    #[test]
    fn empty_schedule_only_relabels() {
        let s = small_scene();
        let mut mesh = s.mesh.clone();
        mesh.labels[10] = 1 - mesh.labels[10];
        let config = RefineConfig {
            levels: 1,
            ..RefineConfig::default()
        };
        let labeling = LabelingConfig::default();
        let out = run_schedule(
            &mesh, &s.cameras, &s.images, &s.masks, &config, &labeling, 0,
        )
        .unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.mesh.vertices, mesh.vertices);
        let adjacency = build_adjacency(&mesh).unwrap();
        let direct = relabel(&mesh, &adjacency, &s.cameras, &s.masks, &labeling).unwrap();
        assert_eq!(out.mesh.labels, direct.result.labels);
        assert_eq!(out.mesh.labels, s.mesh.labels);
    }

    #[test]
    fn descent_step_moves_at_most_the_step() {
        let s = small_scene();
        let mut mesh = s.mesh.clone();
        let before = mesh.clone();
        let field = GradientField(
            (0..mesh.vertex_count())
                .map(|v| Vec3::new(v as f64, 1.0, -2.0))
                .collect(),
        );
        descent_step(&mut mesh, &field, 0.25);
        let limit = 0.25 * before.mean_edge_length();
        let moved = mesh
            .vertices
            .iter()
            .zip(&before.vertices)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!((moved - limit).abs() < 1e-12);
    }
}
