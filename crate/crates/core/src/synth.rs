//! Synthetic scenes with known geometry, labels, textures and masks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::camera::Camera;
use crate::eval::{boundary_distance, label_boundary};
use crate::geometry::LabeledMesh;
use crate::image::Image;
use crate::render::{rasterize, render_label_image, render_label_masks, SemanticMaskSet, NO_LABEL};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SceneKind {
    /// Square `[-1, 1]^2` in `z = 0`; label 1 where `x >= 0`.
    TwoLabelPlane,
    /// The plane with a box on it: ground 0, box sides 1, box top 2.
    PlaneWithBox,
    /// Open cylinder around the y axis, labeled by the sign of x.
    SplitCylinder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TextureKind {
    /// 3-D checkerboard with the given cell size in world units.
    Checker { cell: f64 },
    /// Smooth two-octave value noise with `frequency` lattice cells per
    /// world unit.
    ValueNoise { frequency: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub texture: TextureKind,
    pub camera_count: usize,
    /// Distance from the look-at point.
    pub camera_distance: f64,
    /// Angle between the viewing direction and the vertical, in degrees.
    pub camera_tilt_deg: f64,
    pub look_at: Vec3,
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels; `None` picks one that fills the image with
    /// the plane.
    pub focal: Option<f64>,
    /// Quads per side of the ground grid; must be even.
    pub grid: usize,
    /// Half-width in world x of a textureless band around `x = 0`.
    pub textureless_band: Option<f64>,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            kind: SceneKind::TwoLabelPlane,
            texture: TextureKind::ValueNoise { frequency: 8.0 },
            camera_count: 4,
            camera_distance: 2.5,
            camera_tilt_deg: 30.0,
            look_at: Vec3::zeros(),
            width: 128,
            height: 128,
            focal: None,
            grid: 16,
            textureless_band: None,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.camera_count < 2 {
            return bad(format!(
                "scene needs at least 2 cameras, got {}",
                self.camera_count
            ));
        }
        if self.width < 8 || self.height < 8 {
            return bad("images must be at least 8x8".into());
        }
        if self.grid < 2 || self.grid % 2 != 0 {
            return bad(format!(
                "grid must be even and at least 2, got {}",
                self.grid
            ));
        }
        if !(self.camera_distance > 0.0) {
            return bad("camera distance must be positive".into());
        }
        if !(0.0..90.0).contains(&self.camera_tilt_deg) {
            return bad("camera tilt must lie in [0, 90) degrees".into());
        }
        match self.texture {
            TextureKind::Checker { cell } if !(cell > 0.0) => {
                return bad("checker cell must be positive".into())
            }
            TextureKind::ValueNoise { frequency } if !(frequency > 0.0) => {
                return bad("noise frequency must be positive".into())
            }
            _ => {}
        }
        if let Some(f) = self.focal {
            if !(f > 0.0) {
                return bad("focal length must be positive".into());
            }
        }
        Ok(())
    }

    fn focal_length(&self) -> f64 {
        self.focal
            .unwrap_or(2.4 * self.width.min(self.height) as f64)
    }
}

/// A generated scene: truth mesh, cameras, rendered images and noise-free
/// masks. `masks.truth_labels` holds the per-pixel truth labels.
#[derive(Debug, Clone)]
pub struct Scene {
    pub mesh: LabeledMesh,
    pub cameras: Vec<Camera>,
    pub images: Vec<Image<f64>>,
    pub masks: SemanticMaskSet,
}

impl Scene {
    pub fn truth_labels(&self) -> &[Image<u8>] {
        self.masks.truth_labels.as_deref().unwrap_or(&[])
    }
}

/// Square grid of `n x n` quads over `[-hx, hx] x [-hy, hy]` at height `z`,
/// facing +z (or -z), labeled 1 where the facet centroid has `x >= 0`.
pub fn grid_plane(n: usize, hx: f64, hy: f64, z: f64, facing_up: bool) -> LabeledMesh {
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = -hx + 2.0 * hx * i as f64 / n as f64;
            let y = -hy + 2.0 * hy * j as f64 / n as f64;
            vertices.push(Vec3::new(x, y, z));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut facets = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if facing_up {
                facets.push([a, b, c]);
                facets.push([a, c, d]);
            } else {
                facets.push([a, c, b]);
                facets.push([a, d, c]);
            }
        }
    }
    let labels = facets
        .iter()
        .map(|f| usize::from(f.iter().map(|&v| vertices[v].x).sum::<f64>() >= 0.0))
        .collect();
    LabeledMesh {
        vertices,
        facets,
        labels,
        label_count: 2,
    }
}

/// Appends a quad patch spanned by `u` and `v` from `origin`, subdivided
/// `n x n`, with outward normal `u x v`.
fn push_patch(mesh: &mut LabeledMesh, origin: Vec3, u: Vec3, v: Vec3, n: usize, label: usize) {
    let base = mesh.vertices.len();
    for j in 0..=n {
        for i in 0..=n {
            mesh.vertices
                .push(origin + u * (i as f64 / n as f64) + v * (j as f64 / n as f64));
        }
    }
    let id = |i: usize, j: usize| base + j * (n + 1) + i;
    for j in 0..n {
        for i in 0..n {
            mesh.facets.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            mesh.facets.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            mesh.labels.push(label);
            mesh.labels.push(label);
        }
    }
}

fn plane_with_box(n: usize) -> LabeledMesh {
    let mut mesh = grid_plane(n, 1.0, 1.0, 0.0, true);
    mesh.labels.iter_mut().for_each(|l| *l = 0);
    mesh.label_count = 3;
    let s = 0.3;
    let h = 0.4;
    let k = (n / 4).max(1);
    let (ex, ey, ez) = (Vec3::x() * 2.0 * s, Vec3::y() * 2.0 * s, Vec3::z() * h);
    push_patch(&mut mesh, Vec3::new(-s, -s, h), ex, ey, k, 2);
    push_patch(&mut mesh, Vec3::new(-s, -s, 0.0), ex, ez, k, 1);
    push_patch(&mut mesh, Vec3::new(s, -s, 0.0), ey, ez, k, 1);
    push_patch(&mut mesh, Vec3::new(s, s, 0.0), -ex, ez, k, 1);
    push_patch(&mut mesh, Vec3::new(-s, s, 0.0), -ey, ez, k, 1);
    mesh
}

fn split_cylinder(n: usize) -> LabeledMesh {
    let radius = 0.5;
    let around = 2 * n;
    let along = n;
    let mut vertices = Vec::new();
    for j in 0..=along {
        let y = -1.0 + 2.0 * j as f64 / along as f64;
        for i in 0..around {
            let a = 2.0 * PI * (i as f64 + 0.5) / around as f64;
            vertices.push(Vec3::new(radius * a.cos(), y, radius * a.sin()));
        }
    }
    let id = |i: usize, j: usize| j * around + i % around;
    let mut facets = Vec::new();
    for j in 0..along {
        for i in 0..around {
            facets.push([id(i, j), id(i, j + 1), id(i + 1, j + 1)]);
            facets.push([id(i, j), id(i + 1, j + 1), id(i + 1, j)]);
        }
    }
    let labels = facets
        .iter()
        .map(|f| usize::from(f.iter().map(|&v| vertices[v].x).sum::<f64>() >= 0.0))
        .collect();
    LabeledMesh {
        vertices,
        facets,
        labels,
        label_count: 2,
    }
}

fn hash(x: i64, y: i64, z: i64, seed: u64) -> f64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [x, y, z] {
        h ^= v as u64;
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
        h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 29;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(p: Vec3, seed: u64) -> f64 {
    let base = p.map(f64::floor);
    let t = (p - base).map(smoothstep);
    let (bx, by, bz) = (base.x as i64, base.y as i64, base.z as i64);
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = (if dx == 1 { t.x } else { 1.0 - t.x })
                    * (if dy == 1 { t.y } else { 1.0 - t.y })
                    * (if dz == 1 { t.z } else { 1.0 - t.z });
                acc += w * hash(bx + dx, by + dy, bz + dz, seed);
            }
        }
    }
    acc
}

/// Gray value of the procedural texture at a world point.
pub fn texture_value(texture: TextureKind, band: Option<f64>, seed: u64, p: &Vec3) -> f64 {
    if band.is_some_and(|b| p.x.abs() < b) {
        return 128.0;
    }
    match texture {
        TextureKind::Checker { cell } => {
            let q = p / cell + Vec3::repeat(0.25);
            let parity = (q.x.floor() + q.y.floor() + q.z.floor()) as i64;
            if parity.rem_euclid(2) == 0 {
                60.0
            } else {
                190.0
            }
        }
        TextureKind::ValueNoise { frequency } => {
            let v = (value_noise(p * frequency, seed)
                + 0.5 * value_noise(p * (2.0 * frequency), seed ^ 1))
                / 1.5;
            30.0 + 195.0 * v
        }
    }
}

const BACKGROUND: f64 = 0.0;

fn render_texture(
    mesh: &LabeledMesh,
    camera: &Camera,
    texture: TextureKind,
    band: Option<f64>,
    seed: u64,
) -> Image<f64> {
    let view = rasterize(mesh, camera);
    Image::from_fn(camera.width, camera.height, |x, y| {
        match view.point_at(camera, x, y) {
            Some(p) => texture_value(texture, band, seed, &p)
                .round()
                .clamp(0.0, 255.0),
            None => BACKGROUND,
        }
    })
}

/// Renders images, masks and truth label images of `mesh`.
pub fn render_scene(
    mesh: LabeledMesh,
    cameras: Vec<Camera>,
    texture: TextureKind,
    band: Option<f64>,
    seed: u64,
) -> Scene {
    let rendered: Vec<(Image<f64>, Vec<Image<u8>>, Image<u8>)> = cameras
        .par_iter()
        .map(|camera| {
            let view = rasterize(&mesh, camera);
            let image = render_texture(&mesh, camera, texture, band, seed);
            (
                image,
                render_label_masks(&view, &mesh),
                render_label_image(&view, &mesh),
            )
        })
        .collect();
    let mut images = Vec::new();
    let mut masks = Vec::new();
    let mut labels = Vec::new();
    for (i, m, l) in rendered {
        images.push(i);
        masks.push(m);
        labels.push(l);
    }
    Scene {
        mesh,
        cameras,
        images,
        masks: SemanticMaskSet {
            masks,
            truth_labels: Some(labels),
        },
    }
}

/// Cameras on a ring around `look_at`, tilted from the vertical.
pub fn camera_ring(spec: &SceneSpec) -> Result<Vec<Camera>> {
    let tilt = spec.camera_tilt_deg.to_radians();
    (0..spec.camera_count)
        .map(|k| {
            let azimuth = 2.0 * PI * k as f64 / spec.camera_count as f64 + PI / 4.0;
            let dir = Vec3::new(
                tilt.sin() * azimuth.cos(),
                tilt.sin() * azimuth.sin(),
                tilt.cos(),
            );
            let eye = spec.look_at + spec.camera_distance * dir;
            let up = if tilt.sin() < 1e-6 {
                Vec3::y()
            } else {
                Vec3::z()
            };
            Camera::look_at(
                eye,
                spec.look_at,
                up,
                spec.focal_length(),
                spec.width,
                spec.height,
            )
        })
        .collect()
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mesh = match spec.kind {
        SceneKind::TwoLabelPlane => grid_plane(spec.grid, 1.0, 1.0, 0.0, true),
        SceneKind::PlaneWithBox => plane_with_box(spec.grid),
        SceneKind::SplitCylinder => split_cylinder(spec.grid),
    };
    mesh.validate()?;
    let cameras = camera_ring(spec)?;
    Ok(render_scene(
        mesh,
        cameras,
        spec.texture,
        spec.textureless_band,
        spec.seed,
    ))
}

/// Fronto-parallel plane at depth 2 seen by cameras translated along x so
/// that the disparity between neighbors is exactly 4 pixels.
pub fn fronto_parallel_rig(size: usize, count: usize, texture: TextureKind, seed: u64) -> Scene {
    let focal = size as f64;
    let depth = 2.0;
    let baseline = 4.0 * depth / focal;
    let mesh = grid_plane(8, 2.5, 1.5, depth, false);
    let c = (size as f64 - 1.0) / 2.0;
    let cameras = (0..count)
        .map(|k| {
            Camera::new(
                focal,
                focal,
                c,
                c,
                nalgebra::Matrix3::identity(),
                Vec3::new(-(k as f64) * baseline, 0.0, 0.0),
                size,
                size,
            )
            .expect("valid rig camera")
        })
        .collect();
    render_scene(mesh, cameras, texture, None, seed)
}

/// Blob corruption of semantic masks.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// Fraction of each view's pixels to relabel.
    pub rate: f64,
    /// Blob radius range in pixels.
    pub radius_min: f64,
    pub radius_max: f64,
    /// Blobs and flips stay this many pixels away from true label
    /// boundaries; 0 disables the guard.
    pub guard_band: f64,
    /// Upper bound on blobs per view.
    pub max_blobs: usize,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            rate: 0.05,
            radius_min: 3.0,
            radius_max: 8.0,
            guard_band: 0.0,
            max_blobs: 10_000,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::InvalidConfig(format!(
                "noise rate must lie in [0, 1], got {}",
                self.rate
            )));
        }
        if !(self.radius_min > 0.0 && self.radius_max >= self.radius_min) {
            return Err(Error::InvalidConfig(
                "blob radius range must be positive and ordered".into(),
            ));
        }
        if !(self.guard_band >= 0.0) {
            return Err(Error::InvalidConfig(
                "guard band must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

fn corrupt_view(
    labels: &Image<u8>,
    label_count: usize,
    guard: Option<&Image<f64>>,
    noise: &NoiseSpec,
    camera: usize,
) -> Image<u8> {
    let (w, h) = (labels.width, labels.height);
    let eligible: Vec<usize> = (0..w * h)
        .filter(|&k| labels.data[k] != NO_LABEL)
        .filter(|&k| guard.is_none_or(|d| d.data[k] > noise.guard_band))
        .collect();
    let target = ((noise.rate * (w * h) as f64).round() as usize).min(eligible.len());
    let mut out = labels.clone();
    if target == 0 || label_count < 2 {
        return out;
    }
    let mut is_eligible = vec![false; w * h];
    eligible.iter().for_each(|&k| is_eligible[k] = true);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    rng.set_stream(camera as u64 + 1);
    let mut flipped = 0;
    for _ in 0..noise.max_blobs {
        if flipped >= target {
            break;
        }
        let center = eligible[rng.gen_range(0..eligible.len())];
        let (cx, cy) = ((center % w) as f64, (center / w) as f64);
        let radius = rng.gen_range(noise.radius_min..=noise.radius_max);
        let shift = rng.gen_range(1..label_count);
        let r = radius.ceil() as i64;
        'blob: for dy in -r..=r {
            for dx in -r..=r {
                if (dx * dx + dy * dy) as f64 > radius * radius {
                    continue;
                }
                let (x, y) = (cx as i64 + dx, cy as i64 + dy);
                if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                    continue;
                }
                let k = y as usize * w + x as usize;
                if !is_eligible[k] || out.data[k] != labels.data[k] {
                    continue;
                }
                out.data[k] = ((labels.data[k] as usize + shift) % label_count) as u8;
                flipped += 1;
                if flipped >= target {
                    break 'blob;
                }
            }
        }
    }
    out
}

/// Relabels blobs of pixels in every view. Each view uses its own random
/// stream; the pristine labels are kept as the truth labels.
pub fn corrupt_masks(masks: &SemanticMaskSet, noise: &NoiseSpec) -> Result<SemanticMaskSet> {
    noise.validate()?;
    if noise.rate == 0.0 {
        return Ok(masks.clone());
    }
    let label_count = masks.label_count();
    let corrupted: Vec<Vec<Image<u8>>> = (0..masks.camera_count())
        .into_par_iter()
        .map(|c| {
            let labels = masks.label_image(c);
            let guard = (noise.guard_band > 0.0).then(|| {
                let truth = masks.truth_labels.as_ref().map_or(&labels, |t| &t[c]);
                boundary_distance(&label_boundary(truth))
            });
            let noisy = corrupt_view(&labels, label_count, guard.as_ref(), noise, c);
            (0..label_count)
                .map(|l| {
                    let keep_uncovered = |k: usize| masks.masks[c][l].data[k];
                    Image::from_fn(noisy.width, noisy.height, |x, y| {
                        let k = y * noisy.width + x;
                        if noisy.data[k] == NO_LABEL {
                            keep_uncovered(k)
                        } else {
                            u8::from(noisy.data[k] as usize == l)
                        }
                    })
                })
                .collect()
        })
        .collect();
    Ok(SemanticMaskSet {
        masks: corrupted,
        truth_labels: masks.truth_labels.clone().or_else(|| {
            Some(
                (0..masks.camera_count())
                    .map(|c| masks.label_image(c))
                    .collect(),
            )
        }),
    })
}

/// Displaces every vertex along its normal by a smooth random field whose
/// largest magnitude is `amplitude` times the bounding-box diagonal.
pub fn perturb_mesh(mesh: &LabeledMesh, amplitude: f64, seed: u64) -> LabeledMesh {
    let mut out = mesh.clone();
    let diagonal = mesh.bbox_diagonal();
    if amplitude <= 0.0 || diagonal <= 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(Vec3, f64, f64)> = (0..4)
        .map(|_| {
            let dir = loop {
                let v = Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                if v.norm() > 0.1 && v.norm() <= 1.0 {
                    break v.normalize();
                }
            };
            let frequency = rng.gen_range(1.0..3.0) * 2.0 * PI / diagonal;
            (
                dir * frequency,
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.5..1.0),
            )
        })
        .collect();
    let field: Vec<f64> = mesh
        .vertices
        .iter()
        .map(|p| {
            waves
                .iter()
                .map(|(k, phase, a)| a * (k.dot(p) + phase).sin())
                .sum()
        })
        .collect();
    let peak = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return out;
    }
    let scale = amplitude * diagonal / peak;
    let normals = mesh.vertex_normals();
    for ((p, n), f) in out.vertices.iter_mut().zip(&normals).zip(&field) {
        *p += (scale * f) * n;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_adjacency;
    use crate::render::reproject_point;

    fn small() -> SceneSpec {
        SceneSpec {
            width: 64,
            height: 64,
            grid: 8,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn scenes_are_valid_manifolds() {
        for kind in [
            SceneKind::TwoLabelPlane,
            SceneKind::PlaneWithBox,
            SceneKind::SplitCylinder,
        ] {
            let s = generate_scene(&SceneSpec { kind, ..small() }).unwrap();
            s.mesh.validate().unwrap();
            build_adjacency(&s.mesh).unwrap();
            s.masks.validate(&s.cameras).unwrap();
            assert!(s
                .images
                .iter()
                .all(|i| i.data.iter().any(|&v| v != BACKGROUND)));
        }
    }

    #[test]
    fn plane_fills_every_image() {
        let s = generate_scene(&SceneSpec::default()).unwrap();
        for c in &s.cameras {
            assert_eq!(rasterize(&s.mesh, c).covered_count(), c.width * c.height);
        }
    }

    #[test]
    fn masks_agree_across_views() {
        let s = generate_scene(&small()).unwrap();
        let views = crate::render::rasterize_all(&s.mesh, &s.cameras);
        let labels = s.truth_labels();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let (mut agree, mut total) = (0, 0);
                for y in 0..64 {
                    for x in 0..64 {
                        let Some(p) = views[i].point_at(&s.cameras[i], x, y) else {
                            continue;
                        };
                        let Some(pj) = reproject_point(&p, &s.cameras[j], &views[j], &s.mesh)
                        else {
                            continue;
                        };
                        // the exact label of the world point in both views
                        let f = views[i].facet_at(x, y).unwrap();
                        total += 1;
                        let (nx, ny) = (pj[0].round() as usize, pj[1].round() as usize);
                        let fj = views[j].facet_at(nx, ny).unwrap();
                        if s.mesh.labels[f] == s.mesh.labels[fj]
                            || *labels[j].get(nx, ny) == s.mesh.labels[f] as u8
                        {
                            agree += 1;
                        }
                    }
                }
                // nearest-pixel lookups can only disagree along the boundary
                assert!(agree as f64 >= 0.97 * total as f64);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scene(&small()).unwrap();
        let b = generate_scene(&small()).unwrap();
        assert_eq!(a.images, b.images);
        assert_eq!(a.masks, b.masks);
        let other = generate_scene(&SceneSpec { seed: 9, ..small() }).unwrap();
        assert_ne!(a.images, other.images);
    }

    #[test]
    fn textureless_band_is_flat() {
        let v = texture_value(
            TextureKind::ValueNoise { frequency: 8.0 },
            Some(0.2),
            0,
            &Vec3::new(0.1, 0.3, 0.0),
        );
        assert_eq!(v, 128.0);
    }

    #[test]
    fn zero_rate_is_identity() {
        let s = generate_scene(&small()).unwrap();
        let out = corrupt_masks(
            &s.masks,
            &NoiseSpec {
                rate: 0.0,
                ..NoiseSpec::default()
            },
        )
        .unwrap();
        assert_eq!(out, s.masks);
    }

    #[test]
    fn corruption_hits_the_rate_per_view() {
        let labels = Image::from_fn(200, 200, |x, _| u8::from(x >= 100));
        let masks = SemanticMaskSet {
            masks: vec![
                (0..2)
                    .map(|l| labels.map(|&v| u8::from(v as usize == l)))
                    .collect(),
                (0..2)
                    .map(|l| labels.map(|&v| u8::from(v as usize == l)))
                    .collect(),
            ],
            truth_labels: None,
        };
        let noise = NoiseSpec {
            rate: 0.05,
            guard_band: 6.0,
            seed: 3,
            ..NoiseSpec::default()
        };
        let out = corrupt_masks(&masks, &noise).unwrap();
        let mut flipped_sets = Vec::new();
        for c in 0..2 {
            let noisy = out.label_image(c);
            let flipped: Vec<usize> = (0..40_000)
                .filter(|&k| noisy.data[k] != labels.data[k])
                .collect();
            assert!((1600..=2400).contains(&flipped.len()), "{}", flipped.len());
            // the guard band keeps flips off the boundary
            assert!(flipped.iter().all(|&k| k % 200 <= 92 || k % 200 >= 107));
            flipped_sets.push(flipped);
        }
        assert_ne!(flipped_sets[0], flipped_sets[1]);
    }

    #[test]
    fn perturbation_contract() {
        let s = generate_scene(&small()).unwrap();
        assert_eq!(perturb_mesh(&s.mesh, 0.0, 1), s.mesh);
        let a = 0.02;
        let p = perturb_mesh(&s.mesh, a, 1);
        let diag = s.mesh.bbox_diagonal();
        let moves: Vec<f64> = p
            .vertices
            .iter()
            .zip(&s.mesh.vertices)
            .map(|(x, y)| (x - y).norm())
            .collect();
        let max = moves.iter().cloned().fold(0.0, f64::max);
        assert!(max <= a * diag + 1e-9);
        assert!(moves.iter().sum::<f64>() / moves.len() as f64 > 0.0);
        assert_eq!(p.labels, s.mesh.labels);
    }
}
