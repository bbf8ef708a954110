//! Semantic mesh refinement.
//!
//! A labeled triangle mesh is refined by gradient descent on a composite
//! photometric + single-view semantic + smoothness energy, and its facet
//! labels are re-estimated by a Markov random field whose class-normal prior
//! is measured on the mesh itself. Synthetic scenes with known ground truth
//! drive the evaluation.

pub mod camera;
pub mod eval;
pub mod geometry;
pub mod gradcheck;
pub mod image;
pub mod io;
pub mod labeling;
pub mod refine;
pub mod render;
pub mod synth;

mod error;

pub use camera::Camera;
pub use error::{Error, Result};
pub use geometry::{AdjacencyIndex, GradientField, LabeledMesh, Vec3};
pub use image::Image;
pub use labeling::LabelingConfig;
pub use refine::{EnergyReport, RefineConfig};
pub use render::{RenderedView, SemanticMaskSet};
