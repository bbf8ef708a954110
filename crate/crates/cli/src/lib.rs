//! Command implementations behind the `semesh` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use semesh_core::eval::{depth_mae, segmentation_metrics};
use semesh_core::geometry::build_adjacency;
use semesh_core::gradcheck::{gradcheck_scene, run_gradcheck, GradcheckOptions};
use semesh_core::io::{read_dataset, save_mesh, write_dataset, Dataset, RunConfig, Truth};
use semesh_core::labeling::relabel;
use semesh_core::refine::refine_loop;
use semesh_core::render::{rasterize, render_label_image};
use semesh_core::synth::{
    corrupt_masks, generate_scene, perturb_mesh, NoiseSpec, SceneKind, SceneSpec, TextureKind,
};
use semesh_core::{Error, Image};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "semesh",
    version,
    about = "Semantic mesh refinement and labeling"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset
    Synth(SynthArgs),
    /// Re-estimate facet labels from the masks
    Label(RunArgs),
    /// Refine the mesh geometry and labels
    Refine(RefineArgs),
    /// Compare a mesh against the dataset's ground truth
    Eval(EvalArgs),
    /// Check analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Plane,
    Box,
    Cylinder,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TextureArg {
    Noise,
    Checker,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "plane")]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value = "noise")]
    pub texture: TextureArg,
    /// Noise lattice cells, or checker cells, per world unit
    #[arg(long, default_value_t = 8.0)]
    pub frequency: f64,
    #[arg(long, default_value_t = 4)]
    pub cameras: usize,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long, default_value_t = 16)]
    pub grid: usize,
    /// Half-width of a textureless band around the label boundary
    #[arg(long)]
    pub band: Option<f64>,
    /// Input mesh displacement, as a fraction of the bounding-box diagonal
    #[arg(long, default_value_t = 0.0)]
    pub perturb: f64,
    /// Fraction of mask pixels to corrupt with blobs
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Keep corrupted blobs this many pixels away from true boundaries
    #[arg(long, default_value_t = 0.0)]
    pub noise_guard: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub no_sem: bool,
    #[arg(long)]
    pub no_photo: bool,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub dataset: PathBuf,
    /// Mesh to evaluate; defaults to the dataset's mesh.ply
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Image size of the check scene
    #[arg(long, default_value_t = 48)]
    pub size: usize,
    /// Flip the analytic gradients; the check must then fail
    #[arg(long)]
    pub break_sign: bool,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig(_) => EXIT_USAGE,
            Error::NonFiniteGradient { .. } | Error::EmptyOverlap => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Runs a command and returns what it prints on success.
pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Label(a) => label(&a),
        Command::Refine(a) => refine(&a),
        Command::Eval(a) => eval(&a),
        Command::Gradcheck(a) => gradcheck(&a),
    }
}

fn load_config(path: Option<&Path>, dataset: Option<&Dataset>) -> CliResult<RunConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError {
                code: EXIT_DATA,
                message: format!("{}: {e}", p.display()),
            })?;
            Ok(RunConfig::parse(&text)?)
        }
        None => Ok(dataset.and_then(|d| d.config.clone()).unwrap_or_default()),
    }
}

fn out_dir(dataset: &Path, out: Option<&PathBuf>) -> PathBuf {
    out.cloned().unwrap_or_else(|| dataset.join("out"))
}

pub fn synth(a: &SynthArgs) -> CliResult<String> {
    let mut config = load_config(a.config.as_deref(), None)?;
    config.seed = a.seed;
    let texture = match a.texture {
        TextureArg::Noise => TextureKind::ValueNoise {
            frequency: a.frequency,
        },
        TextureArg::Checker => TextureKind::Checker {
            cell: 1.0 / a.frequency,
        },
    };
    let spec = SceneSpec {
        kind: match a.kind {
            KindArg::Plane => SceneKind::TwoLabelPlane,
            KindArg::Box => SceneKind::PlaneWithBox,
            KindArg::Cylinder => SceneKind::SplitCylinder,
        },
        texture,
        camera_count: a.cameras,
        width: a.size,
        height: a.size,
        grid: a.grid,
        textureless_band: a.band,
        seed: a.seed,
        ..SceneSpec::default()
    };
    if !(a.perturb >= 0.0) {
        return Err(Error::InvalidConfig("--perturb must be non-negative".into()).into());
    }
    let scene = generate_scene(&spec)?;
    let noisy = a.noise > 0.0;
    let masks = corrupt_masks(
        &scene.masks,
        &NoiseSpec {
            rate: a.noise,
            guard_band: a.noise_guard,
            seed: a.seed,
            ..NoiseSpec::default()
        },
    )?;
    let data = Dataset {
        mesh: perturb_mesh(&scene.mesh, a.perturb, a.seed),
        cameras: scene.cameras.clone(),
        images: scene.images.iter().map(Image::to_u8).collect(),
        masks,
        truth: Some(Truth {
            mesh: scene.mesh.clone(),
            labels: scene.truth_labels().to_vec(),
            masks: noisy.then(|| scene.masks.masks.clone()),
        }),
        config: Some(config),
    };
    write_dataset(&a.out, &data)?;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "dataset {}", a.out.display());
    let _ = writeln!(
        manifest,
        "mesh.ply ({} vertices, {} facets)",
        data.mesh.vertex_count(),
        data.mesh.facet_count()
    );
    let _ = writeln!(manifest, "cameras.txt ({} cameras)", data.cameras.len());
    let _ = writeln!(manifest, "images/ ({} files)", data.images.len());
    let _ = writeln!(
        manifest,
        "masks/ ({} files)",
        data.cameras.len() * data.mesh.label_count
    );
    let _ = writeln!(
        manifest,
        "truth/ (truth_mesh.ply, {} label images{})",
        data.cameras.len(),
        if noisy { ", pristine masks" } else { "" }
    );
    let _ = writeln!(manifest, "config.txt");
    Ok(manifest)
}

pub fn label(a: &RunArgs) -> CliResult<String> {
    let data = read_dataset(&a.dataset)?;
    let config = load_config(a.config.as_deref(), Some(&data))?;
    let adjacency = build_adjacency(&data.mesh)?;
    let outcome = relabel(
        &data.mesh,
        &adjacency,
        &data.cameras,
        &data.masks,
        &config.labeling,
    )?;
    let mut mesh = data.mesh.clone();
    let changed = mesh
        .labels
        .iter()
        .zip(&outcome.result.labels)
        .filter(|(a, b)| a != b)
        .count();
    mesh.labels = outcome.result.labels.clone();
    let out = out_dir(&a.dataset, a.out.as_ref());
    fs::create_dir_all(&out)?;
    save_mesh(&out.join("labeled.ply"), &mesh)?;
    fs::write(out.join("data_term.csv"), outcome.data.to_csv())?;
    Ok(format!(
        "initial energy {}\nfinal energy {}\nsweeps {}\nchanged facets {}\nwrote {}\n",
        outcome.result.initial_energy,
        outcome.result.energy,
        outcome.result.sweeps,
        changed,
        out.join("labeled.ply").display()
    ))
}

pub fn refine(a: &RefineArgs) -> CliResult<String> {
    let data = read_dataset(&a.run.dataset)?;
    let mut config = load_config(a.run.config.as_deref(), Some(&data))?;
    if let Some(seed) = a.run.seed {
        config.seed = seed;
    }
    if a.no_sem {
        config.refine.lambda_sem = 0.0;
    }
    if a.no_photo {
        config.refine.lambda_photo = 0.0;
    }
    if let Some(levels) = a.levels {
        config.refine.levels = levels;
    }
    if let Some(iters) = a.iters {
        config.refine.iterations_per_level = iters;
    }
    config.validate()?;
    let outcome = refine_loop(
        &data.mesh,
        &data.cameras,
        &data.images_f64(),
        &data.masks,
        &config.refine,
        &config.labeling,
    )?;
    let out = out_dir(&a.run.dataset, a.run.out.as_ref());
    fs::create_dir_all(&out)?;
    save_mesh(&out.join("refined.ply"), &outcome.mesh)?;
    fs::write(out.join("energy.csv"), outcome.energy_csv())?;
    fs::write(out.join("config.txt"), config.serialize())?;
    let first = outcome.log.first().map_or(0.0, |r| r.report.total);
    let last = outcome.log.last().map_or(0.0, |r| r.report.total);
    Ok(format!(
        "iterations {}\nfirst total energy {first}\nlast total energy {last}\nwrote {}\n",
        outcome.log.len(),
        out.join("refined.ply").display()
    ))
}

pub fn eval(a: &EvalArgs) -> CliResult<String> {
    let data = read_dataset(&a.dataset)?;
    let truth = data.truth.as_ref().ok_or_else(|| CliError {
        code: EXIT_DATA,
        message: format!("{} has no truth/ directory", a.dataset.display()),
    })?;
    let candidate = match &a.mesh {
        Some(p) => semesh_core::io::load_mesh(p)?,
        None => data.mesh.clone(),
    };
    let depth = depth_mae(&candidate, &truth.mesh, &data.cameras)?;
    let predicted: Vec<Image<u8>> = data
        .cameras
        .iter()
        .map(|c| render_label_image(&rasterize(&candidate, c), &candidate))
        .collect();
    let seg = segmentation_metrics(&predicted, &truth.labels)?;
    let out = out_dir(&a.dataset, a.out.as_ref());
    fs::create_dir_all(&out)?;
    fs::write(out.join("depth.csv"), depth.to_csv())?;
    fs::write(out.join("segmentation.csv"), seg.to_csv())?;
    let summary = format!(
        "depth MAE {}\naccuracy {}\nmacro precision {}\nmacro recall {}\nmacro F {}\n",
        depth.mean_mae, seg.accuracy, seg.macro_precision, seg.macro_recall, seg.macro_f
    );
    fs::write(out.join("summary.txt"), &summary)?;
    Ok(summary)
}

pub fn gradcheck(a: &GradcheckArgs) -> CliResult<String> {
    let config = load_config(a.config.as_deref(), None)?;
    let (scene, mesh) = gradcheck_scene(a.size, a.seed)?;
    let options = GradcheckOptions {
        break_sign: a.break_sign,
        ..GradcheckOptions::default()
    };
    let report = run_gradcheck(
        &mesh,
        &scene.cameras,
        &scene.images,
        &scene.masks,
        &config.refine,
        &options,
    )?;
    let mut text = String::new();
    for term in &report.terms {
        let _ = writeln!(text, "{term}");
    }
    if report.passed() {
        Ok(text)
    } else {
        Err(CliError {
            code: EXIT_NUMERICAL,
            message: format!("{text}gradient check failed"),
        })
    }
}
