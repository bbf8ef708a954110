//! Software z-buffer rasterization and everything derived from the buffers:
//! label masks, cross-view reprojection and vertex visibility.

use rayon::prelude::*;

use crate::camera::Camera;
use crate::geometry::{facet_normal, LabeledMesh};
use crate::image::Image;
use crate::{Error, Result, Vec3};

/// Facet-ID sentinel for pixels that see no facet.
pub const NO_FACET: u32 = u32::MAX;
/// Label-image sentinel for pixels that see no facet.
pub const NO_LABEL: u8 = u8::MAX;
/// Relative depth tolerance of every occlusion test.
pub const OCCLUSION_TOLERANCE: f64 = 1e-3;

/// Depth, facet-ID and perspective-correct barycentric buffers of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub width: usize,
    pub height: usize,
    /// Camera-frame z, `+inf` where nothing is hit.
    pub depth: Vec<f64>,
    pub facet: Vec<u32>,
    /// Weights of the hit facet's vertices, in the facet's stored order.
    pub barycentric: Vec<[f64; 3]>,
}

impl RenderedView {
    fn empty(width: usize, height: usize) -> Self {
        RenderedView {
            width,
            height,
            depth: vec![f64::INFINITY; width * height],
            facet: vec![NO_FACET; width * height],
            barycentric: vec![[0.0; 3]; width * height],
        }
    }

    #[inline]
    pub fn facet_at(&self, x: usize, y: usize) -> Option<usize> {
        let f = self.facet[y * self.width + x];
        (f != NO_FACET).then_some(f as usize)
    }

    pub fn coverage(&self) -> Image<u8> {
        Image {
            width: self.width,
            height: self.height,
            data: self
                .facet
                .iter()
                .map(|&f| u8::from(f != NO_FACET))
                .collect(),
        }
    }

    pub fn covered_count(&self) -> usize {
        self.facet.iter().filter(|&&f| f != NO_FACET).count()
    }

    /// World point seen at pixel `(x, y)`.
    pub fn point_at(&self, camera: &Camera, x: usize, y: usize) -> Option<Vec3> {
        let i = y * self.width + x;
        (self.facet[i] != NO_FACET).then(|| camera.unproject(x as f64, y as f64, self.depth[i]))
    }
}

/// Edge function of `p` against the directed edge `a -> b`, evaluated with
/// the lower-indexed vertex first so that two facets sharing an edge see
/// exact negatives of each other.
#[inline]
fn edge_function(s: &[[f64; 2]; 3], ids: &[usize; 3], a: usize, b: usize, p: [f64; 2]) -> f64 {
    let (lo, hi, sign) = if ids[a] < ids[b] {
        (a, b, 1.0)
    } else {
        (b, a, -1.0)
    };
    let (sa, sb) = (s[lo], s[hi]);
    sign * ((sb[0] - sa[0]) * (p[1] - sa[1]) - (sb[1] - sa[1]) * (p[0] - sa[0]))
}

/// Top-left tie rule for pixels exactly on an edge. Antisymmetric in the
/// edge direction, so a shared edge is owned by exactly one facet.
#[inline]
fn owns_edge(s: &[[f64; 2]; 3], a: usize, b: usize) -> bool {
    let dx = s[b][0] - s[a][0];
    let dy = s[b][1] - s[a][1];
    dy > 0.0 || (dy == 0.0 && dx < 0.0)
}

/// Nearest front-facing facet per pixel. Back-facing facets, degenerate
/// facets and facets with a vertex behind the camera are skipped.
pub fn rasterize(mesh: &LabeledMesh, camera: &Camera) -> RenderedView {
    let (w, h) = (camera.width, camera.height);
    let mut view = RenderedView::empty(w, h);
    let center = camera.center();

    for (fi, ids) in mesh.facets.iter().enumerate() {
        let points = mesh.facet_points(fi);
        let Some(normal) = facet_normal(&points) else {
            continue;
        };
        if normal.dot(&(points[0] - center)) >= 0.0 {
            continue;
        }
        let q = points.map(|p| camera.to_camera(&p));
        if q.iter().any(|q| q.z <= crate::camera::DEPTH_EPSILON) {
            continue;
        }
        let mut s = q.map(|q| camera.project_camera_point(&q));
        let mut z = q.map(|q| q.z);
        let mut ids = *ids;
        // slot k of the working triangle holds original vertex order[k]
        let mut order = [0usize, 1, 2];
        let mut area = edge_function(&s, &ids, 0, 1, s[2]);
        if area == 0.0 {
            continue;
        }
        if area < 0.0 {
            s.swap(1, 2);
            z.swap(1, 2);
            ids.swap(1, 2);
            order.swap(1, 2);
            area = -area;
        }

        let min_x = s
            .iter()
            .map(|p| p[0])
            .fold(f64::INFINITY, f64::min)
            .ceil()
            .max(0.0);
        let max_x = s
            .iter()
            .map(|p| p[0])
            .fold(f64::NEG_INFINITY, f64::max)
            .floor()
            .min((w - 1) as f64);
        let min_y = s
            .iter()
            .map(|p| p[1])
            .fold(f64::INFINITY, f64::min)
            .ceil()
            .max(0.0);
        let max_y = s
            .iter()
            .map(|p| p[1])
            .fold(f64::NEG_INFINITY, f64::max)
            .floor()
            .min((h - 1) as f64);
        if min_x > max_x || min_y > max_y {
            continue;
        }
        let edges = [(1usize, 2usize), (2, 0), (0, 1)];
        let owned = edges.map(|(a, b)| owns_edge(&s, a, b));

        for py in min_y as usize..=max_y as usize {
            for px in min_x as usize..=max_x as usize {
                let p = [px as f64, py as f64];
                let mut lambda = [0.0; 3];
                let mut inside = true;
                for (k, &(a, b)) in edges.iter().enumerate() {
                    let e = edge_function(&s, &ids, a, b, p);
                    if e < 0.0 || (e == 0.0 && !owned[k]) {
                        inside = false;
                        break;
                    }
                    lambda[k] = e / area;
                }
                if !inside {
                    continue;
                }
                let inv_z: f64 = (0..3).map(|k| lambda[k] / z[k]).sum();
                let depth = 1.0 / inv_z;
                let i = py * w + px;
                if depth < view.depth[i] {
                    view.depth[i] = depth;
                    view.facet[i] = fi as u32;
                    let mut bary = [0.0; 3];
                    for k in 0..3 {
                        bary[order[k]] = lambda[k] / z[k] * depth;
                    }
                    view.barycentric[i] = bary;
                }
            }
        }
    }
    view
}

/// Rasterize the mesh into every camera, in camera order.
pub fn rasterize_all(mesh: &LabeledMesh, cameras: &[Camera]) -> Vec<RenderedView> {
    cameras.par_iter().map(|c| rasterize(mesh, c)).collect()
}

/// One binary mask per label: 1 where the visible facet carries that label.
pub fn render_label_masks(view: &RenderedView, mesh: &LabeledMesh) -> Vec<Image<u8>> {
    let mut masks = vec![Image::filled(view.width, view.height, 0u8); mesh.label_count];
    for (i, &f) in view.facet.iter().enumerate() {
        if f != NO_FACET {
            masks[mesh.labels[f as usize]].data[i] = 1;
        }
    }
    masks
}

/// Per-pixel label of the visible facet, `NO_LABEL` where uncovered.
pub fn render_label_image(view: &RenderedView, mesh: &LabeledMesh) -> Image<u8> {
    Image {
        width: view.width,
        height: view.height,
        data: view
            .facet
            .iter()
            .map(|&f| {
                if f == NO_FACET {
                    NO_LABEL
                } else {
                    mesh.labels[f as usize] as u8
                }
            })
            .collect(),
    }
}

/// Per camera, per label binary masks (values 0/1), plus optional
/// ground-truth label images used only for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMaskSet {
    pub masks: Vec<Vec<Image<u8>>>,
    pub truth_labels: Option<Vec<Image<u8>>>,
}

impl SemanticMaskSet {
    pub fn label_count(&self) -> usize {
        self.masks.first().map_or(0, Vec::len)
    }

    pub fn camera_count(&self) -> usize {
        self.masks.len()
    }

    /// Check dimensions against the cameras and that masks are disjoint.
    pub fn validate(&self, cameras: &[Camera]) -> Result<()> {
        self.validate_dimensions(cameras)?;
        for (ci, masks) in self.masks.iter().enumerate() {
            let n = masks.first().map_or(0, |m| m.data.len());
            for i in 0..n {
                if masks.iter().filter(|m| m.data[i] != 0).count() > 1 {
                    return Err(Error::DimensionMismatch(format!(
                        "camera {ci}: pixel {i} belongs to more than one label"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn validate_dimensions(&self, cameras: &[Camera]) -> Result<()> {
        if self.masks.len() != cameras.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} mask sets for {} cameras",
                self.masks.len(),
                cameras.len()
            )));
        }
        for (ci, (masks, cam)) in self.masks.iter().zip(cameras).enumerate() {
            for (l, m) in masks.iter().enumerate() {
                if m.width != cam.width || m.height != cam.height {
                    return Err(Error::DimensionMismatch(format!(
                        "mask of camera {ci}, label {l} is {}x{}, image is {}x{}",
                        m.width, m.height, cam.width, cam.height
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per-pixel label implied by the masks, `NO_LABEL` where none is set.
    pub fn label_image(&self, camera: usize) -> Image<u8> {
        let masks = &self.masks[camera];
        let first = &masks[0];
        Image::from_fn(first.width, first.height, |x, y| {
            masks
                .iter()
                .position(|m| *m.get(x, y) != 0)
                .map_or(NO_LABEL, |l| l as u8)
        })
    }
}

fn occluded(
    view: &RenderedView,
    mesh: &LabeledMesh,
    camera: &Camera,
    px: [f64; 2],
    depth: f64,
    pixel: (usize, usize),
) -> bool {
    let Some(g) = view.facet_at(pixel.0, pixel.1) else {
        return false;
    };
    let points = mesh.facet_points(g);
    let Some(normal) = facet_normal(&points) else {
        return false;
    };
    match camera.plane_depth(px[0], px[1], &normal, &points[0]) {
        Some(surface) => surface < depth * (1.0 - OCCLUSION_TOLERANCE),
        None => false,
    }
}

/// Where a world point lands in camera `j`, if it projects inside the
/// bilinear support and nothing in `view_j` occludes it.
pub fn reproject_point(
    point: &Vec3,
    camera_j: &Camera,
    view_j: &RenderedView,
    mesh: &LabeledMesh,
) -> Option<[f64; 2]> {
    let (px, depth) = camera_j.project(point).ok()?;
    let slack = 1e-6;
    if px[0] < -slack
        || px[1] < -slack
        || px[0] > (camera_j.width - 1) as f64 + slack
        || px[1] > (camera_j.height - 1) as f64 + slack
    {
        return None;
    }
    let nx = (px[0].round().max(0.0) as usize).min(camera_j.width - 1);
    let ny = (px[1].round().max(0.0) as usize).min(camera_j.height - 1);
    if occluded(view_j, mesh, camera_j, px, depth, (nx, ny)) {
        return None;
    }
    Some([
        px[0].clamp(0.0, (camera_j.width - 1) as f64),
        px[1].clamp(0.0, (camera_j.height - 1) as f64),
    ])
}

/// Image `j` warped into camera `i` through the mesh, with its validity mask.
pub fn reproject_image(
    image_j: &Image<f64>,
    camera_j: &Camera,
    view_i: &RenderedView,
    mesh: &LabeledMesh,
    camera_i: &Camera,
) -> (Image<f64>, Image<u8>) {
    let view_j = rasterize(mesh, camera_j);
    reproject_image_with_view(image_j, camera_j, &view_j, view_i, mesh, camera_i)
}

pub fn reproject_image_with_view(
    image_j: &Image<f64>,
    camera_j: &Camera,
    view_j: &RenderedView,
    view_i: &RenderedView,
    mesh: &LabeledMesh,
    camera_i: &Camera,
) -> (Image<f64>, Image<u8>) {
    let (w, h) = (view_i.width, view_i.height);
    let mut values = Image::filled(w, h, 0.0);
    let mut valid = Image::filled(w, h, 0u8);
    for y in 0..h {
        for x in 0..w {
            let Some(point) = view_i.point_at(camera_i, x, y) else {
                continue;
            };
            if let Some(pj) = reproject_point(&point, camera_j, view_j, mesh) {
                values.set(x, y, image_j.bilinear(pj[0], pj[1]));
                valid.set(x, y, 1);
            }
        }
    }
    (values, valid)
}

/// For every vertex, the cameras that see it unoccluded.
pub fn vertex_visibility(mesh: &LabeledMesh, cameras: &[Camera]) -> Vec<Vec<usize>> {
    let views = rasterize_all(mesh, cameras);
    vertex_visibility_with_views(mesh, cameras, &views)
}

pub fn vertex_visibility_with_views(
    mesh: &LabeledMesh,
    cameras: &[Camera],
    views: &[RenderedView],
) -> Vec<Vec<usize>> {
    let mut incident = vec![Vec::new(); mesh.vertex_count()];
    for (f, ids) in mesh.facets.iter().enumerate() {
        for &v in ids {
            incident[v].push(f);
        }
    }
    let normals = mesh.facet_normals();
    let per_camera: Vec<Vec<bool>> = cameras
        .par_iter()
        .zip(views)
        .map(|(camera, view)| {
            let center = camera.center();
            mesh.vertices
                .iter()
                .enumerate()
                .map(|(v, p)| {
                    let Ok((px, depth)) = camera.project(p) else {
                        return false;
                    };
                    let Some(pixel) = view_pixel(view, px) else {
                        return false;
                    };
                    match view.facet_at(pixel.0, pixel.1) {
                        Some(g) if incident[v].contains(&g) => true,
                        Some(_) => !occluded(view, mesh, camera, px, depth, pixel),
                        None => incident[v]
                            .iter()
                            .any(|&f| normals[f].is_some_and(|n| n.dot(&(p - center)) < 0.0)),
                    }
                })
                .collect()
        })
        .collect();
    (0..mesh.vertex_count())
        .map(|v| (0..cameras.len()).filter(|&c| per_camera[c][v]).collect())
        .collect()
}

fn view_pixel(view: &RenderedView, px: [f64; 2]) -> Option<(usize, usize)> {
    let x = px[0].round();
    let y = px[1].round();
    if x < 0.0 || y < 0.0 || x >= view.width as f64 || y >= view.height as f64 {
        return None;
    }
    Some((x as usize, y as usize))
}
