//! File formats and the on-disk dataset layout.
//!
//! ```text
//! root/
//!   mesh.ply            input mesh with face labels
//!   cameras.txt
//!   config.txt          optional run configuration
//!   images/NNN.pgm
//!   masks/NNN_L.pgm     camera NNN, label L; 0 or 255
//!   truth/              optional
//!     truth_mesh.ply
//!     labels/NNN.pgm    per-pixel labels, 255 where uncovered
//!     masks/NNN_L.pgm   pristine masks when the input masks are corrupted
//! ```

mod camera_file;
mod config;
mod mesh;
mod pgm;

use std::fs;
use std::path::{Path, PathBuf};

pub use camera_file::{read_cameras, write_cameras};
pub use config::RunConfig;
pub use mesh::{read_obj, read_ply, write_ply};
pub use pgm::{read_pgm, write_pgm};

use crate::camera::Camera;
use crate::geometry::LabeledMesh;
use crate::image::Image;
use crate::render::SemanticMaskSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub mesh: LabeledMesh,
    pub labels: Vec<Image<u8>>,
    pub masks: Option<Vec<Vec<Image<u8>>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub mesh: LabeledMesh,
    pub cameras: Vec<Camera>,
    pub images: Vec<Image<u8>>,
    pub masks: SemanticMaskSet,
    pub truth: Option<Truth>,
    pub config: Option<RunConfig>,
}

impl Dataset {
    pub fn images_f64(&self) -> Vec<Image<f64>> {
        self.images.iter().map(Image::to_f64).collect()
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_file(path)?)
        .map_err(|_| Error::parse(path.display().to_string(), "not UTF-8"))
}

pub fn load_mesh(path: &Path) -> Result<LabeledMesh> {
    let text = read_text(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => read_obj(&text),
        _ => read_ply(&text),
    }
}

pub fn save_mesh(path: &Path, mesh: &LabeledMesh) -> Result<()> {
    Ok(fs::write(path, write_ply(mesh))?)
}

pub fn image_path(root: &Path, camera: usize) -> PathBuf {
    root.join("images").join(format!("{camera:03}.pgm"))
}

pub fn mask_path(dir: &Path, camera: usize, label: usize) -> PathBuf {
    dir.join(format!("{camera:03}_{label}.pgm"))
}

pub fn label_path(dir: &Path, camera: usize) -> PathBuf {
    dir.join(format!("{camera:03}.pgm"))
}

fn write_masks(dir: &Path, masks: &[Vec<Image<u8>>]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (c, per_label) in masks.iter().enumerate() {
        for (l, m) in per_label.iter().enumerate() {
            fs::write(
                mask_path(dir, c, l),
                write_pgm(&m.map(|&v| if v != 0 { 255 } else { 0 })),
            )?;
        }
    }
    Ok(())
}

fn read_masks(dir: &Path, cameras: &[Camera], labels: usize) -> Result<Vec<Vec<Image<u8>>>> {
    cameras
        .iter()
        .enumerate()
        .map(|(c, cam)| {
            (0..labels)
                .map(|l| {
                    let path = mask_path(dir, c, l);
                    if !path.exists() {
                        log::warn!("{} missing, treated as empty", path.display());
                        return Ok(Image::filled(cam.width, cam.height, 0));
                    }
                    let m = read_pgm(&read_file(&path)?)?;
                    if m.width != cam.width || m.height != cam.height {
                        return Err(Error::DimensionMismatch(format!(
                            "{} does not match camera {c}",
                            path.display()
                        )));
                    }
                    Ok(m.map(|&v| u8::from(v != 0)))
                })
                .collect()
        })
        .collect()
}

/// Writes every part of the dataset under `root`, creating directories.
pub fn write_dataset(root: &Path, data: &Dataset) -> Result<()> {
    fs::create_dir_all(root.join("images"))?;
    save_mesh(&root.join("mesh.ply"), &data.mesh)?;
    fs::write(root.join("cameras.txt"), write_cameras(&data.cameras))?;
    for (c, image) in data.images.iter().enumerate() {
        fs::write(image_path(root, c), write_pgm(image))?;
    }
    write_masks(&root.join("masks"), &data.masks.masks)?;
    if let Some(config) = &data.config {
        fs::write(root.join("config.txt"), config.serialize())?;
    }
    if let Some(truth) = &data.truth {
        let dir = root.join("truth");
        fs::create_dir_all(dir.join("labels"))?;
        save_mesh(&dir.join("truth_mesh.ply"), &truth.mesh)?;
        for (c, labels) in truth.labels.iter().enumerate() {
            fs::write(label_path(&dir.join("labels"), c), write_pgm(labels))?;
        }
        if let Some(masks) = &truth.masks {
            write_masks(&dir.join("masks"), masks)?;
        }
    }
    Ok(())
}

/// Reads a dataset. Missing masks are empty; `truth/` and `config.txt` are
/// optional.
pub fn read_dataset(root: &Path) -> Result<Dataset> {
    let mesh = load_mesh(&root.join("mesh.ply"))?;
    let cameras = read_cameras(&read_text(&root.join("cameras.txt"))?)?;
    let images: Vec<Image<u8>> = (0..cameras.len())
        .map(|c| read_pgm(&read_file(&image_path(root, c))?))
        .collect::<Result<_>>()?;
    for (c, (image, cam)) in images.iter().zip(&cameras).enumerate() {
        if image.width != cam.width || image.height != cam.height {
            return Err(Error::DimensionMismatch(format!(
                "image {c} does not match its camera"
            )));
        }
    }
    if image_path(root, cameras.len()).exists() {
        return Err(Error::DimensionMismatch("more images than cameras".into()));
    }
    let truth_dir = root.join("truth");
    let truth = if truth_dir.join("truth_mesh.ply").exists() {
        let truth_mesh = load_mesh(&truth_dir.join("truth_mesh.ply"))?;
        let labels = (0..cameras.len())
            .map(|c| read_pgm(&read_file(&label_path(&truth_dir.join("labels"), c))?))
            .collect::<Result<Vec<_>>>()?;
        let masks = if truth_dir.join("masks").is_dir() {
            Some(read_masks(
                &truth_dir.join("masks"),
                &cameras,
                truth_mesh.label_count,
            )?)
        } else {
            None
        };
        Some(Truth {
            mesh: truth_mesh,
            labels,
            masks,
        })
    } else {
        None
    };
    let label_count = truth.as_ref().map_or(mesh.label_count, |t| {
        t.mesh.label_count.max(mesh.label_count)
    });
    let masks = SemanticMaskSet {
        masks: read_masks(&root.join("masks"), &cameras, label_count)?,
        truth_labels: truth.as_ref().map(|t| t.labels.clone()),
    };
    let config_path = root.join("config.txt");
    let config = if config_path.exists() {
        Some(RunConfig::parse(&read_text(&config_path)?)?)
    } else {
        None
    };
    Ok(Dataset {
        mesh,
        cameras,
        images,
        masks,
        truth,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneSpec};

    #[test]
    fn dataset_round_trip() {
        let s = generate_scene(&SceneSpec {
            width: 24,
            height: 24,
            grid: 4,
            ..SceneSpec::default()
        })
        .unwrap();
        let data = Dataset {
            mesh: s.mesh.clone(),
            cameras: s.cameras.clone(),
            images: s.images.iter().map(Image::to_u8).collect(),
            masks: s.masks.clone(),
            truth: Some(Truth {
                mesh: s.mesh.clone(),
                labels: s.truth_labels().to_vec(),
                masks: None,
            }),
            config: Some(RunConfig::default()),
        };
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &data).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), data);
        fs::remove_file(mask_path(&dir.path().join("masks"), 1, 1)).unwrap();
        let partial = read_dataset(dir.path()).unwrap();
        assert!(partial.masks.masks[1][1].data.iter().all(|&v| v == 0));
    }
}
