use std::path::Path;
use std::process::{Command, Output};

fn semesh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semesh")).args(args).output().expect("binary runs")
}

fn synth(dir: &Path, extra: &[&str]) {
    let out = dir.to_str().unwrap();
    let mut args = vec!["synth", "--out", out, "--size", "48", "--grid", "4", "--cameras", "3"];
    args.extend_from_slice(extra);
    let run = semesh(&args);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(semesh(&["refine"]).status.code(), Some(1));
    assert_eq!(semesh(&["bogus"]).status.code(), Some(1));
    assert_eq!(semesh(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_dataset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let run = semesh(&["label", dir.path().join("nope").to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.txt");
    std::fs::write(&config, "beta = 2\n").unwrap();
    let run = semesh(&["gradcheck", "--config", config.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn synth_label_refine_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--perturb", "0.02", "--noise", "0.05"]);
    for f in ["mesh.ply", "cameras.txt", "config.txt", "images/000.pgm", "masks/002_1.pgm", "truth/truth_mesh.ply", "truth/masks/000_0.pgm"] {
        assert!(data.join(f).exists(), "{f} missing");
    }
    let d = data.to_str().unwrap();

    let label = semesh(&["label", d]);
    assert!(label.status.success());
    let text = String::from_utf8(label.stdout).unwrap();
    let energy = |key: &str| -> f64 {
        text.lines().find_map(|l| l.strip_prefix(key)).unwrap().trim().parse().unwrap()
    };
    assert!(energy("final energy") <= energy("initial energy"));

    let refine = semesh(&["refine", d, "--levels", "1", "--iters", "2"]);
    assert!(refine.status.success(), "{}", String::from_utf8_lossy(&refine.stderr));
    let csv = std::fs::read_to_string(data.join("out/energy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let refined = data.join("out/refined.ply");
    let eval = semesh(&["eval", d, "--mesh", refined.to_str().unwrap()]);
    assert!(eval.status.success());
    for f in ["depth.csv", "segmentation.csv", "summary.txt"] {
        assert!(data.join("out").join(f).exists());
    }
}

#[test]
fn eval_without_truth_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    std::fs::remove_dir_all(dir.path().join("truth")).unwrap();
    let run = semesh(&["eval", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn gradcheck_exit_codes() {
    assert_eq!(semesh(&["gradcheck"]).status.code(), Some(0));
    assert_eq!(semesh(&["gradcheck", "--break-sign"]).status.code(), Some(3));
}
