//! Facet labeling as a Markov random field.
//!
//! The probability of a labeling is the product over facets of a data term
//! sampled from the 2D masks at the facet's vertices, a class-normal prior
//! estimated from the current mesh, and a Potts-style pairwise term over
//! edge-adjacent facets. Everything here works with negative log
//! probabilities, so lower energy means a more probable labeling.

use std::fmt::Write as _;

use crate::camera::Camera;
use crate::geometry::{AdjacencyIndex, LabeledMesh};
use crate::render::SemanticMaskSet;
use crate::{Error, Result, Vec3};

/// Largest search space `solve_bruteforce` accepts.
pub const BRUTEFORCE_LIMIT: f64 = 1e7;
/// Maximum number of ICM sweeps.
pub const MAX_ICM_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelingConfig {
    /// Floor of the per-vertex data term.
    pub beta: f64,
    /// Weight of the class-normal prior.
    pub mu: f64,
    /// Pairwise probability for equal neighbor labels.
    pub smooth_same: f64,
    /// Pairwise probability for differing neighbor labels.
    pub smooth_diff: f64,
    /// Floor on the per-class angular deviation, radians.
    pub min_angle_variance: f64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            beta: 0.1,
            mu: 1.5,
            smooth_same: 0.8,
            smooth_diff: 0.2,
            min_angle_variance: 0.05,
        }
    }
}

impl LabelingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.mu > 0.0) {
            return bad("mu must be positive");
        }
        if !(0.0 < self.smooth_diff
            && self.smooth_diff < self.smooth_same
            && self.smooth_same < 1.0)
        {
            return bad("smoothness probabilities must satisfy 0 < diff < same < 1");
        }
        if !(self.min_angle_variance > 0.0) {
            return bad("min_angle_variance must be positive");
        }
        Ok(())
    }

    fn pairwise_cost(&self, a: usize, b: usize) -> f64 {
        if a == b {
            -self.smooth_same.ln()
        } else {
            -self.smooth_diff.ln()
        }
    }
}

/// `P_data` per facet and label.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTermTable {
    pub facet_count: usize,
    pub label_count: usize,
    values: Vec<f64>,
}

impl DataTermTable {
    pub fn from_values(facet_count: usize, label_count: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), facet_count * label_count);
        DataTermTable {
            facet_count,
            label_count,
            values,
        }
    }

    #[inline]
    pub fn get(&self, facet: usize, label: usize) -> f64 {
        self.values[facet * self.label_count + label]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `facet,label,value` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("facet,label,value\n");
        for f in 0..self.facet_count {
            for l in 0..self.label_count {
                let _ = writeln!(out, "{f},{l},{}", self.get(f, l));
            }
        }
        out
    }
}

/// Per-vertex data term `max(beta, nu / 3)` for every label, where `nu` is
/// the fraction of cameras seeing the vertex whose mask for that label is set
/// at the vertex's nearest pixel. Vertices seen by no camera get `beta`.
pub fn vertex_data_terms(
    mesh: &LabeledMesh,
    cameras: &[Camera],
    masks: &SemanticMaskSet,
    visibility: &[Vec<usize>],
    config: &LabelingConfig,
) -> Result<Vec<Vec<f64>>> {
    masks.validate_dimensions(cameras)?;
    if visibility.len() != mesh.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "visibility for {} vertices, mesh has {}",
            visibility.len(),
            mesh.vertex_count()
        )));
    }
    let labels = mesh.label_count;
    Ok(mesh
        .vertices
        .iter()
        .zip(visibility)
        .map(|(p, seen)| {
            if seen.is_empty() {
                return vec![config.beta; labels];
            }
            let mut hits = vec![0usize; labels];
            for &c in seen {
                let Ok((px, _)) = cameras[c].project(p) else {
                    continue;
                };
                let Some((x, y)) = masks.masks[c][0].nearest(px[0], px[1]) else {
                    continue;
                };
                for (l, hit) in hits.iter_mut().enumerate() {
                    if masks.masks[c].get(l).is_some_and(|m| *m.get(x, y) != 0) {
                        *hit += 1;
                    }
                }
            }
            hits.iter()
                .map(|&h| config.beta.max(h as f64 / seen.len() as f64 / 3.0))
                .collect()
        })
        .collect())
}

/// Facet data term: product of the three per-vertex terms. Facets none of
/// whose vertices is seen get `beta` for every label.
pub fn compute_data_term(
    mesh: &LabeledMesh,
    cameras: &[Camera],
    masks: &SemanticMaskSet,
    visibility: &[Vec<usize>],
    config: &LabelingConfig,
) -> Result<DataTermTable> {
    let per_vertex = vertex_data_terms(mesh, cameras, masks, visibility, config)?;
    let labels = mesh.label_count;
    let mut values = Vec::with_capacity(mesh.facet_count() * labels);
    for f in &mesh.facets {
        if f.iter().all(|&v| visibility[v].is_empty()) {
            values.extend(std::iter::repeat_n(config.beta, labels));
            continue;
        }
        for l in 0..labels {
            values.push(f.iter().map(|&v| per_vertex[v][l]).product());
        }
    }
    Ok(DataTermTable::from_values(
        mesh.facet_count(),
        labels,
        values,
    ))
}

/// Mean normal and angular spread of one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassPrior {
    pub mean_normal: Vec3,
    /// Squared radians.
    pub angle_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassNormalStats {
    /// `None` for labels without support or with a vanishing normal sum.
    pub priors: Vec<Option<ClassPrior>>,
    pub support: Vec<usize>,
}

fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

pub fn compute_class_normal_stats(mesh: &LabeledMesh, config: &LabelingConfig) -> ClassNormalStats {
    let normals = mesh.facet_normals();
    let mut sums = vec![Vec3::zeros(); mesh.label_count];
    let mut support = vec![0usize; mesh.label_count];
    for (f, n) in normals.iter().enumerate() {
        if let Some(n) = n {
            sums[mesh.labels[f]] += n;
            support[mesh.labels[f]] += 1;
        }
    }
    let floor = config.min_angle_variance * config.min_angle_variance;
    let priors = sums
        .iter()
        .enumerate()
        .map(|(l, sum)| {
            if support[l] == 0 {
                return None;
            }
            if sum.norm() < 1e-9 {
                log::warn!("label {l}: facet normals cancel out, normal prior disabled");
                return None;
            }
            let mean = sum.normalize();
            let squared: f64 = normals
                .iter()
                .zip(&mesh.labels)
                .filter(|(_, &fl)| fl == l)
                .filter_map(|(n, _)| n.map(|n| angle_between(&n, &mean).powi(2)))
                .sum();
            Some(ClassPrior {
                mean_normal: mean,
                angle_variance: (squared / support[l] as f64).max(floor),
            })
        })
        .collect();
    ClassNormalStats { priors, support }
}

/// `mu * exp(-angle^2 / (2 a^2))`, or 1 where the class prior is disabled.
pub fn norm_term(
    stats: &ClassNormalStats,
    facet_normal: &Vec3,
    label: usize,
    config: &LabelingConfig,
) -> f64 {
    match stats.priors.get(label).copied().flatten() {
        Some(prior) => {
            let angle = angle_between(facet_normal, &prior.mean_normal);
            config.mu * (-angle * angle / (2.0 * prior.angle_variance)).exp()
        }
        None => 1.0,
    }
}

/// Unary and pairwise costs of one labeling problem, ready for the solvers.
#[derive(Debug, Clone)]
pub struct LabelingProblem {
    pub label_count: usize,
    /// `-ln P_data - ln P_norm`, row-major by facet.
    pub unary: Vec<f64>,
    pub neighbors: Vec<Vec<usize>>,
    pub pairs: Vec<(usize, usize)>,
    same_cost: f64,
    diff_cost: f64,
}

impl LabelingProblem {
    pub fn new(
        mesh: &LabeledMesh,
        adjacency: &AdjacencyIndex,
        data: &DataTermTable,
        stats: &ClassNormalStats,
        config: &LabelingConfig,
    ) -> Self {
        let labels = mesh.label_count;
        let normals = mesh.facet_normals();
        let mut unary = Vec::with_capacity(mesh.facet_count() * labels);
        for (f, n) in normals.iter().enumerate() {
            for l in 0..labels {
                let p_norm = n.map_or(1.0, |n| norm_term(stats, &n, l, config));
                unary.push(-data.get(f, l).ln() - p_norm.ln());
            }
        }
        LabelingProblem {
            label_count: labels,
            unary,
            neighbors: adjacency.facet_neighbors.clone(),
            pairs: adjacency.facet_pairs.clone(),
            same_cost: config.pairwise_cost(0, 0),
            diff_cost: config.pairwise_cost(0, 1),
        }
    }

    pub fn facet_count(&self) -> usize {
        self.neighbors.len()
    }

    #[inline]
    fn unary(&self, facet: usize, label: usize) -> f64 {
        self.unary[facet * self.label_count + label]
    }

    #[inline]
    fn pairwise(&self, a: usize, b: usize) -> f64 {
        if a == b {
            self.same_cost
        } else {
            self.diff_cost
        }
    }

    pub fn energy(&self, labels: &[usize]) -> f64 {
        let unary: f64 = labels
            .iter()
            .enumerate()
            .map(|(f, &l)| self.unary(f, l))
            .sum();
        let pairwise: f64 = self
            .pairs
            .iter()
            .map(|&(a, b)| self.pairwise(labels[a], labels[b]))
            .sum();
        unary + pairwise
    }

    /// Energy terms that involve `facet` when it takes `label`.
    pub fn local_energy(&self, labels: &[usize], facet: usize, label: usize) -> f64 {
        self.unary(facet, label)
            + self.neighbors[facet]
                .iter()
                .map(|&g| self.pairwise(label, labels[g]))
                .sum::<f64>()
    }

    /// Per-facet argmin of the unary cost, smallest label on ties.
    pub fn unary_argmin(&self) -> Vec<usize> {
        (0..self.facet_count())
            .map(|f| {
                let mut best = 0;
                for l in 1..self.label_count {
                    if self.unary(f, l) < self.unary(f, best) {
                        best = l;
                    }
                }
                best
            })
            .collect()
    }

    /// True if no single-facet change lowers the energy.
    pub fn is_local_optimum(&self, labels: &[usize]) -> bool {
        (0..self.facet_count()).all(|f| {
            let current = self.local_energy(labels, f, labels[f]);
            (0..self.label_count).all(|l| self.local_energy(labels, f, l) >= current - 1e-12)
        })
    }
}

/// Negative log of the labeling probability.
pub fn labeling_energy(
    mesh: &LabeledMesh,
    adjacency: &AdjacencyIndex,
    data: &DataTermTable,
    stats: &ClassNormalStats,
    labels: &[usize],
    config: &LabelingConfig,
) -> f64 {
    LabelingProblem::new(mesh, adjacency, data, stats, config).energy(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcmResult {
    pub labels: Vec<usize>,
    pub sweeps: usize,
    pub initial_energy: f64,
    pub energy: f64,
}

/// Iterated conditional modes over facets in index order. A facet only
/// changes label when that strictly lowers the energy; among equally good
/// labels the smallest index is chosen.
pub fn icm(problem: &LabelingProblem, init: Vec<usize>) -> IcmResult {
    let mut labels = init;
    let initial_energy = problem.energy(&labels);
    let mut sweeps = 0;
    while sweeps < MAX_ICM_SWEEPS {
        sweeps += 1;
        let mut changed = false;
        for f in 0..problem.facet_count() {
            let current = problem.local_energy(&labels, f, labels[f]);
            let mut best = 0;
            let mut best_energy = problem.local_energy(&labels, f, 0);
            for l in 1..problem.label_count {
                let e = problem.local_energy(&labels, f, l);
                if e < best_energy {
                    best = l;
                    best_energy = e;
                }
            }
            if best_energy >= current - 1e-12 {
                continue;
            }
            if best != labels[f] {
                labels[f] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let energy = problem.energy(&labels);
    IcmResult {
        labels,
        sweeps,
        initial_energy,
        energy,
    }
}

pub fn solve_icm(
    mesh: &LabeledMesh,
    adjacency: &AdjacencyIndex,
    data: &DataTermTable,
    stats: &ClassNormalStats,
    init_labels: Option<&[usize]>,
    config: &LabelingConfig,
) -> IcmResult {
    let problem = LabelingProblem::new(mesh, adjacency, data, stats, config);
    let init = init_labels.map_or_else(|| problem.unary_argmin(), <[usize]>::to_vec);
    icm(&problem, init)
}

/// Exhaustive search. The first labeling in lexicographic order (facet 0
/// most significant) that reaches the minimum is returned.
pub fn bruteforce(problem: &LabelingProblem) -> Result<Vec<usize>> {
    let n = problem.facet_count();
    let l = problem.label_count;
    let space = (l as f64).powi(n as i32);
    if space > BRUTEFORCE_LIMIT {
        return Err(Error::InstanceTooLarge(space));
    }
    let mut labels = vec![0usize; n];
    let mut best = labels.clone();
    let mut best_energy = problem.energy(&labels);
    'outer: loop {
        // odometer increment, last facet fastest
        let mut k = n;
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            labels[k] += 1;
            if labels[k] < l {
                break;
            }
            labels[k] = 0;
        }
        let e = problem.energy(&labels);
        if e < best_energy - 1e-12 {
            best_energy = e;
            best.copy_from_slice(&labels);
        }
    }
    Ok(best)
}

pub fn solve_bruteforce(
    mesh: &LabeledMesh,
    adjacency: &AdjacencyIndex,
    data: &DataTermTable,
    stats: &ClassNormalStats,
    config: &LabelingConfig,
) -> Result<Vec<usize>> {
    bruteforce(&LabelingProblem::new(mesh, adjacency, data, stats, config))
}

/// Full relabeling pass: visibility, data term, class statistics, and ICM
/// started from the mesh's current labels.
#[derive(Debug, Clone)]
pub struct RelabelOutcome {
    pub data: DataTermTable,
    pub stats: ClassNormalStats,
    pub result: IcmResult,
}

pub fn relabel(
    mesh: &LabeledMesh,
    adjacency: &AdjacencyIndex,
    cameras: &[Camera],
    masks: &SemanticMaskSet,
    config: &LabelingConfig,
) -> Result<RelabelOutcome> {
    config.validate()?;
    let visibility = crate::render::vertex_visibility(mesh, cameras);
    let data = compute_data_term(mesh, cameras, masks, &visibility, config)?;
    let stats = compute_class_normal_stats(mesh, config);
    let result = solve_icm(mesh, adjacency, &data, &stats, Some(&mesh.labels), config);
    Ok(RelabelOutcome {
        data,
        stats,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_adjacency;
    use crate::image::Image;
    use nalgebra::Matrix3;

    fn strip(n: usize) -> LabeledMesh {
        // zig-zag strip of n facets in the z = 0 plane
        let mut vertices = Vec::new();
        for i in 0..(n / 2 + 2) {
            vertices.push(Vec3::new(i as f64, 0.0, 0.0));
            vertices.push(Vec3::new(i as f64, 1.0, 0.0));
        }
        let mut facets = Vec::new();
        for k in 0..n {
            let i = k / 2;
            let (a, b, c, d) = (2 * i, 2 * i + 2, 2 * i + 3, 2 * i + 1);
            facets.push(if k % 2 == 0 { [a, b, c] } else { [a, c, d] });
        }
        LabeledMesh::new(vertices, facets, vec![0; n], 2).unwrap()
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = LabelingConfig::default();
        assert_eq!(
            (c.beta, c.mu, c.smooth_same, c.smooth_diff),
            (0.1, 1.5, 0.8, 0.2)
        );
        c.validate().unwrap();
        let bad = LabelingConfig {
            smooth_diff: 0.9,
            ..c.clone()
        };
        assert!(bad.validate().is_err());
        let bad = LabelingConfig { beta: 1.0, ..c };
        assert!(bad.validate().is_err());
    }

    fn one_vertex_setup(cameras: usize, set_in: usize) -> Vec<f64> {
        let cam = Camera::new(
            10.0,
            10.0,
            2.0,
            2.0,
            Matrix3::identity(),
            Vec3::zeros(),
            5,
            5,
        )
        .unwrap();
        let mesh = LabeledMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 1.0),
                Vec3::new(0.1, 0.0, 1.0),
                Vec3::new(0.0, 0.1, 1.0),
            ],
            vec![[0, 2, 1]],
            vec![0],
            2,
        )
        .unwrap();
        let masks = SemanticMaskSet {
            masks: (0..cameras)
                .map(|c| {
                    let on = Image::filled(5, 5, u8::from(c < set_in));
                    let off = on.map(|&v| 1 - v);
                    vec![on, off]
                })
                .collect(),
            truth_labels: None,
        };
        let cams = vec![cam; cameras];
        let visibility = vec![(0..cameras).collect::<Vec<_>>(); 3];
        let terms = vertex_data_terms(
            &mesh,
            &cams,
            &masks,
            &visibility,
            &LabelingConfig::default(),
        )
        .unwrap();
        terms[0].clone()
    }

    #[test]
    fn vertex_data_term_examples() {
        assert!((one_vertex_setup(4, 4)[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(one_vertex_setup(4, 0)[0], 0.1);
        assert!((one_vertex_setup(2, 1)[0] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn invisible_facets_get_beta() {
        let mesh = strip(2);
        let masks = SemanticMaskSet {
            masks: vec![],
            truth_labels: None,
        };
        let visibility = vec![vec![]; mesh.vertex_count()];
        let table =
            compute_data_term(&mesh, &[], &masks, &visibility, &LabelingConfig::default()).unwrap();
        assert!(table.values().iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn mismatched_masks_are_rejected() {
        let cam = Camera::new(
            10.0,
            10.0,
            2.0,
            2.0,
            Matrix3::identity(),
            Vec3::zeros(),
            5,
            5,
        )
        .unwrap();
        let mesh = strip(2);
        let masks = SemanticMaskSet {
            masks: vec![vec![Image::filled(4, 5, 0u8), Image::filled(4, 5, 0u8)]],
            truth_labels: None,
        };
        let visibility = vec![vec![0]; mesh.vertex_count()];
        assert!(matches!(
            compute_data_term(
                &mesh,
                &[cam],
                &masks,
                &visibility,
                &LabelingConfig::default()
            ),
            Err(Error::DimensionMismatch(_))
        ));
    }

    fn tilted_pair(angle_deg: f64) -> LabeledMesh {
        // two disjoint facets with normals rotated by +-angle about the y axis
        let a = angle_deg.to_radians();
        let facet = |sign: f64, offset: f64| {
            let rot = nalgebra::Rotation3::from_axis_angle(&Vec3::y_axis(), sign * a);
            [
                rot * Vec3::new(0.0, 0.0, 0.0) + Vec3::new(offset, 0.0, 0.0),
                rot * Vec3::new(1.0, 0.0, 0.0) + Vec3::new(offset, 0.0, 0.0),
                rot * Vec3::new(0.0, 1.0, 0.0) + Vec3::new(offset, 0.0, 0.0),
            ]
        };
        let mut vertices = facet(1.0, 0.0).to_vec();
        vertices.extend_from_slice(&facet(-1.0, 5.0));
        LabeledMesh::new(vertices, vec![[0, 1, 2], [3, 4, 5]], vec![1, 1], 2).unwrap()
    }

    #[test]
    fn class_stats_examples() {
        let config = LabelingConfig::default();
        let stats = compute_class_normal_stats(&tilted_pair(0.0), &config);
        let prior = stats.priors[1].unwrap();
        assert!((prior.mean_normal - Vec3::z()).norm() < 1e-12);
        assert!((prior.angle_variance - 0.0025).abs() < 1e-15);
        assert!(stats.priors[0].is_none());
        assert_eq!(stats.support, vec![0, 2]);

        let stats = compute_class_normal_stats(&tilted_pair(10.0), &config);
        let prior = stats.priors[1].unwrap();
        assert!((prior.mean_normal - Vec3::z()).norm() < 1e-12);
        assert!((prior.angle_variance - 10f64.to_radians().powi(2)).abs() < 1e-12);

        let mut single = tilted_pair(10.0);
        single.labels = vec![0, 1];
        let stats = compute_class_normal_stats(&single, &config);
        let n0 = single.facet_normal(0).unwrap();
        assert!((stats.priors[0].unwrap().mean_normal - n0).norm() < 1e-12);
        assert!((stats.priors[0].unwrap().angle_variance - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn antipodal_normals_disable_the_prior() {
        let vertices = vec![
            Vec3::zeros(),
            Vec3::x(),
            Vec3::y(),
            Vec3::new(5.0, 0.0, 0.0),
            Vec3::new(5.0, 1.0, 0.0),
            Vec3::new(6.0, 0.0, 0.0),
        ];
        let mesh = LabeledMesh::new(vertices, vec![[0, 1, 2], [3, 4, 5]], vec![0, 0], 1).unwrap();
        let stats = compute_class_normal_stats(&mesh, &LabelingConfig::default());
        assert!(stats.priors[0].is_none());
        assert_eq!(
            norm_term(&stats, &Vec3::z(), 0, &LabelingConfig::default()),
            1.0
        );
    }

    #[test]
    fn norm_term_examples() {
        let config = LabelingConfig::default();
        let stats = ClassNormalStats {
            priors: vec![
                Some(ClassPrior {
                    mean_normal: Vec3::z(),
                    angle_variance: 0.04,
                }),
                None,
            ],
            support: vec![3, 0],
        };
        assert!((norm_term(&stats, &Vec3::z(), 0, &config) - 1.5).abs() < 1e-15);
        let tilted = nalgebra::Rotation3::from_axis_angle(&Vec3::x_axis(), 0.2) * Vec3::z();
        let expected = 1.5 * (-0.5f64).exp();
        assert!((norm_term(&stats, &tilted, 0, &config) - expected).abs() < 1e-12);
        assert!((expected - 0.9098).abs() < 1e-4);
        assert_eq!(norm_term(&stats, &Vec3::z(), 1, &config), 1.0);
    }

    fn problem_from(
        mesh: &LabeledMesh,
        table: Vec<f64>,
        stats: &ClassNormalStats,
    ) -> LabelingProblem {
        let adj = build_adjacency(mesh).unwrap();
        let data = DataTermTable::from_values(mesh.facet_count(), mesh.label_count, table);
        LabelingProblem::new(mesh, &adj, &data, stats, &LabelingConfig::default())
    }

    fn flat_stats(labels: usize) -> ClassNormalStats {
        ClassNormalStats {
            priors: vec![
                Some(ClassPrior {
                    mean_normal: Vec3::z(),
                    angle_variance: 0.0025
                });
                labels
            ],
            support: vec![1; labels],
        }
    }

    #[test]
    fn energy_examples() {
        let mesh = LabeledMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
            vec![0],
            1,
        )
        .unwrap();
        let p = problem_from(&mesh, vec![1.0 / 3.0], &flat_stats(1));
        assert!((p.energy(&[0]) - (-(1.0f64 / 3.0).ln() - 1.5f64.ln())).abs() < 1e-12);

        let mesh = strip(2);
        let p = problem_from(&mesh, vec![0.2; 4], &flat_stats(2));
        let unary = 2.0 * (-(0.2f64).ln() - 1.5f64.ln());
        assert!((p.energy(&[0, 0]) - unary + 0.8f64.ln()).abs() < 1e-12);
        assert!((p.energy(&[0, 1]) - unary + 0.2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn energy_delta_is_local() {
        let mesh = strip(6);
        let table: Vec<f64> = (0..12)
            .map(|k| 0.1 + 0.02 * ((k * 7) % 11) as f64)
            .collect();
        let p = problem_from(&mesh, table, &flat_stats(2));
        let a = vec![0, 1, 1, 0, 1, 0];
        let mut b = a.clone();
        b[3] = 1;
        let delta = p.energy(&b) - p.energy(&a);
        let local = p.local_energy(&a, 3, 1) - p.local_energy(&a, 3, 0);
        assert!((delta - local).abs() < 1e-12);
    }

    #[test]
    fn isolated_facet_takes_argmax_with_low_index_ties() {
        let mesh = LabeledMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
            vec![0],
            3,
        )
        .unwrap();
        let p = problem_from(&mesh, vec![0.2, 0.3, 0.3], &flat_stats(3));
        let r = icm(&p, p.unary_argmin());
        assert_eq!(r.labels, vec![1]);
        assert_eq!(bruteforce(&p).unwrap(), vec![1]);
    }

    #[test]
    fn icm_fixed_point_takes_one_sweep() {
        let mesh = strip(6);
        let p = problem_from(&mesh, vec![0.3, 0.1].repeat(6), &flat_stats(2));
        let r = icm(&p, vec![0; 6]);
        assert_eq!((r.labels, r.sweeps), (vec![0; 6], 1));
    }

    #[test]
    fn icm_matches_bruteforce_on_hand_built_strip() {
        // left half prefers 0, right half prefers 1, facet 2 is ambiguous
        let mesh = strip(6);
        let table = vec![
            0.33, 0.1, 0.3, 0.12, 0.2, 0.21, 0.1, 0.33, 0.12, 0.3, 0.1, 0.33,
        ];
        let p = problem_from(&mesh, table, &flat_stats(2));
        let exact = bruteforce(&p).unwrap();
        let r = icm(&p, p.unary_argmin());
        assert!((r.energy - p.energy(&exact)).abs() < 1e-12);
        assert!(r.energy <= r.initial_energy);
        assert!(p.is_local_optimum(&r.labels));
    }

    #[test]
    fn bruteforce_tie_break_is_lexicographic() {
        let mesh = strip(2);
        let p = problem_from(&mesh, vec![0.2; 4], &flat_stats(2));
        assert_eq!(bruteforce(&p).unwrap(), vec![0, 0]);
    }

    #[test]
    fn bruteforce_rejects_large_instances() {
        let mesh = strip(24);
        let p = problem_from(&mesh, vec![0.2; 48], &flat_stats(2));
        assert!(matches!(bruteforce(&p), Err(Error::InstanceTooLarge(_))));
    }

    #[test]
    fn csv_export() {
        let t = DataTermTable::from_values(1, 2, vec![0.25, 0.1]);
        assert_eq!(t.to_csv(), "facet,label,value\n0,0,0.25\n0,1,0.1\n");
    }
}
