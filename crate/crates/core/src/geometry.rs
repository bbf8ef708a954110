//! Indexed triangle meshes with per-facet semantic labels.

use std::collections::HashMap;
use std::ops::{Index, IndexMut};

use nalgebra::Vector3;

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Squared-area threshold below which a facet has no defined normal.
pub const DEGENERATE_AREA_SQ: f64 = 1e-12;

/// Triangle mesh stored as an indexed face set. Facets are counter-clockwise
/// when seen from outside, and every facet carries one semantic label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMesh {
    pub vertices: Vec<Vec3>,
    pub facets: Vec<[usize; 3]>,
    pub labels: Vec<usize>,
    pub label_count: usize,
}

impl LabeledMesh {
    pub fn new(
        vertices: Vec<Vec3>,
        facets: Vec<[usize; 3]>,
        labels: Vec<usize>,
        label_count: usize,
    ) -> Result<Self> {
        let mesh = LabeledMesh {
            vertices,
            facets,
            labels,
            label_count,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.facets.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} facets",
                self.labels.len(),
                self.facets.len()
            )));
        }
        let n = self.vertices.len();
        for (fi, f) in self.facets.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(Error::VertexOutOfRange {
                        facet: fi,
                        vertex: v,
                        vertex_count: n,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateFacet(fi));
            }
        }
        for (fi, &l) in self.labels.iter().enumerate() {
            if l >= self.label_count {
                return Err(Error::LabelOutOfRange {
                    facet: fi,
                    label: l,
                    label_count: self.label_count,
                });
            }
        }
        Ok(())
    }

    pub fn facet_count(&self) -> usize {
        self.facets.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn facet_points(&self, facet: usize) -> [Vec3; 3] {
        let [a, b, c] = self.facets[facet];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unit normal by the right-hand rule on the stored vertex order.
    pub fn facet_normal(&self, facet: usize) -> Result<Vec3> {
        facet_normal(&self.facet_points(facet)).ok_or(Error::DegenerateFacet(facet))
    }

    pub fn facet_area(&self, facet: usize) -> f64 {
        let [a, b, c] = self.facet_points(facet);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.facet_count()).map(|f| self.facet_area(f)).sum()
    }

    /// Normals for every facet; degenerate facets get `None`.
    pub fn facet_normals(&self) -> Vec<Option<Vec3>> {
        (0..self.facet_count())
            .map(|f| facet_normal(&self.facet_points(f)))
            .collect()
    }

    /// Unweighted mean of incident facet normals, normalized.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::zeros(); self.vertex_count()];
        for (f, n) in self.facet_normals().into_iter().enumerate() {
            if let Some(n) = n {
                for &v in &self.facets[f] {
                    acc[v] += n;
                }
            }
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    n
                }
            })
            .collect()
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
        )
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bounding_box()
            .map(|(lo, hi)| (hi - lo).norm())
            .unwrap_or(0.0)
    }

    /// Mean length over unique edges.
    pub fn mean_edge_length(&self) -> f64 {
        let edges = unique_edges(&self.facets);
        if edges.is_empty() {
            return 0.0;
        }
        let total: f64 = edges
            .iter()
            .map(|&(a, b)| (self.vertices[a] - self.vertices[b]).norm())
            .sum();
        total / edges.len() as f64
    }
}

pub fn facet_normal(points: &[Vec3; 3]) -> Option<Vec3> {
    let cross = (points[1] - points[0]).cross(&(points[2] - points[0]));
    let norm_sq = cross.norm_squared();
    if 0.25 * norm_sq < DEGENERATE_AREA_SQ {
        return None;
    }
    Some(cross / norm_sq.sqrt())
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Unique undirected edges in first-encounter order.
pub fn unique_edges(facets: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut seen = HashMap::new();
    let mut edges = Vec::new();
    for f in facets {
        for k in 0..3 {
            let key = edge_key(f[k], f[(k + 1) % 3]);
            if seen.insert(key, ()).is_none() {
                edges.push(key);
            }
        }
    }
    edges
}

/// Derived connectivity; rebuild whenever the facet list changes.
#[derive(Debug, Clone)]
pub struct AdjacencyIndex {
    /// Edge-sharing neighbors per facet, ascending.
    pub facet_neighbors: Vec<Vec<usize>>,
    /// 1-ring per vertex, ascending.
    pub vertex_neighbors: Vec<Vec<usize>>,
    /// Incident facets per vertex, ascending.
    pub vertex_facets: Vec<Vec<usize>>,
    /// Unique undirected edges `(a, b)` with `a < b`.
    pub edges: Vec<(usize, usize)>,
    /// Adjacent facet pairs `(f, g)` with `f < g`, each listed once.
    pub facet_pairs: Vec<(usize, usize)>,
}

pub fn build_adjacency(mesh: &LabeledMesh) -> Result<AdjacencyIndex> {
    let nv = mesh.vertex_count();
    let nf = mesh.facet_count();
    let mut edge_facets: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut edges = Vec::new();
    let mut vertex_facets = vec![Vec::new(); nv];
    for (fi, f) in mesh.facets.iter().enumerate() {
        for k in 0..3 {
            vertex_facets[f[k]].push(fi);
            let key = edge_key(f[k], f[(k + 1) % 3]);
            let slot = edge_facets.entry(key).or_default();
            if slot.is_empty() {
                edges.push(key);
            }
            slot.push(fi);
            if slot.len() > 2 {
                return Err(Error::NonManifoldEdge(key.0, key.1));
            }
        }
    }

    let mut facet_neighbors = vec![Vec::new(); nf];
    let mut vertex_neighbors = vec![Vec::new(); nv];
    let mut facet_pairs = Vec::new();
    for &(a, b) in &edges {
        vertex_neighbors[a].push(b);
        vertex_neighbors[b].push(a);
        let fs = &edge_facets[&(a, b)];
        if let [f, g] = fs[..] {
            facet_neighbors[f].push(g);
            facet_neighbors[g].push(f);
            facet_pairs.push((f.min(g), f.max(g)));
        }
    }
    for list in facet_neighbors
        .iter_mut()
        .chain(vertex_neighbors.iter_mut())
        .chain(vertex_facets.iter_mut())
    {
        list.sort_unstable();
        list.dedup();
    }
    facet_pairs.sort_unstable();
    facet_pairs.dedup();

    Ok(AdjacencyIndex {
        facet_neighbors,
        vertex_neighbors,
        vertex_facets,
        edges,
        facet_pairs,
    })
}

/// One 3-vector per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField(pub Vec<Vec3>);

impl GradientField {
    pub fn zeros(n: usize) -> Self {
        GradientField(vec![Vec3::zeros(); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec3> {
        self.0.iter()
    }

    pub fn add_scaled(&mut self, other: &GradientField, weight: f64) {
        assert_eq!(self.len(), other.len(), "gradient fields differ in length");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b * weight;
        }
    }

    pub fn scaled(&self, weight: f64) -> GradientField {
        GradientField(self.0.iter().map(|g| g * weight).collect())
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|g| g.norm()).fold(0.0, f64::max)
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.0
            .iter()
            .position(|g| !(g.x.is_finite() && g.y.is_finite() && g.z.is_finite()))
    }
}

impl Index<usize> for GradientField {
    type Output = Vec3;
    fn index(&self, i: usize) -> &Vec3 {
        &self.0[i]
    }
}

impl IndexMut<usize> for GradientField {
    fn index_mut(&mut self, i: usize) -> &mut Vec3 {
        &mut self.0[i]
    }
}

/// Uniform umbrella operator: mean of the 1-ring minus the vertex position.
pub fn umbrella_gradient(mesh: &LabeledMesh, adjacency: &AdjacencyIndex) -> GradientField {
    let field = mesh
        .vertices
        .iter()
        .zip(&adjacency.vertex_neighbors)
        .enumerate()
        .map(|(v, (x, ring))| {
            if ring.is_empty() {
                log::debug!("isolated vertex {v} has no umbrella neighbors");
                return Vec3::zeros();
            }
            let sum = ring
                .iter()
                .fold(Vec3::zeros(), |acc, &n| acc + mesh.vertices[n]);
            sum / ring.len() as f64 - x
        })
        .collect();
    GradientField(field)
}

/// Membrane energy `1/2 * sum over edges |Xa - Xb|^2`.
///
/// Its gradient at vertex v is `-deg(v) * umbrella(v)`, so the umbrella field
/// is the degree-preconditioned descent direction of this energy.
pub fn membrane_energy(vertices: &[Vec3], adjacency: &AdjacencyIndex) -> f64 {
    adjacency
        .edges
        .iter()
        .map(|&(a, b)| 0.5 * (vertices[a] - vertices[b]).norm_squared())
        .sum()
}

/// Global 1-to-4 midpoint subdivision. Children inherit the parent label.
pub fn subdivide(mesh: &LabeledMesh) -> LabeledMesh {
    let mut vertices = mesh.vertices.clone();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut facets = Vec::with_capacity(mesh.facet_count() * 4);
    let mut labels = Vec::with_capacity(mesh.facet_count() * 4);

    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
        *midpoints.entry(edge_key(a, b)).or_insert_with(|| {
            vertices.push((vertices[a] + vertices[b]) * 0.5);
            vertices.len() - 1
        })
    };

    for (f, &[a, b, c]) in mesh.facets.iter().enumerate() {
        let ab = midpoint(a, b, &mut vertices);
        let bc = midpoint(b, c, &mut vertices);
        let ca = midpoint(c, a, &mut vertices);
        facets.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        labels.extend(std::iter::repeat_n(mesh.labels[f], 4));
    }

    LabeledMesh {
        vertices,
        facets,
        labels,
        label_count: mesh.label_count,
    }
}
