use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eclipsenet::dataset::{EclipseDataset, Split};
use eclipsenet::neuralnet::{init_model, save_model, Activation, MlpConfig};

struct Workdir {
    dir: tempfile::TempDir,
}

impl Workdir {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), config).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_eclipsenet"))
            .current_dir(self.dir.path())
            .arg("--config")
            .arg("run.toml")
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

const SMALL: &str = r#"
seed = 3

[body]
name = "toy"
shape = "bilobed"
shape_subdivisions = 2

[mascons]
grid_n = 8

[dataset]
train_dirs = 3
valid_dirs = 2
n_uniform = 60
n_border = 120
boundary_grid = 64

[network]
hidden = [8, 8]

[train]
epochs = 3
minibatch_size = 64

[eval]
silhouette_grid = 12

[dynamics]
omega = 0.5
srp_eta = 1e-3
r0 = [2.0, 0.0, 0.2]
v0 = [0.0, 0.7, 0.0]
orbits = 0.5
boundary_grid = 64

[compare]
points = 200

[bench]
calls = 500
exhaustive_calls = 50
repeats = 1
"#;

#[test]
fn cube_grid_two_gives_eight_mascons() {
    let w = Workdir::new("[body]\nshape = \"cube\"\n[mascons]\ngrid_n = 2\npath = \"out/m.csv\"\n");
    w.ok(&["mascons"]);
    assert_eq!(data_rows(&w.path("out/m.csv")), 8);
}

#[test]
fn pipeline_runs_end_to_end() {
    let w = Workdir::new(SMALL);
    w.ok(&["mascons"]);
    w.ok(&["dataset", "--set", "dataset.csv=true"]);
    assert_eq!(data_rows(&w.path("train.csv")), 3 * 180);
    w.ok(&["train"]);
    assert_eq!(data_rows(&w.path("history.csv")), 3);
    let out = w.ok(&["eval", "--silhouette"]);
    assert!(out.contains("MSE"), "{out}");
    assert_eq!(data_rows(&w.path("eval.csv")), 2 * 180);
    assert_eq!(data_rows(&w.path("silhouette.csv")), 144);

    w.ok(&["propagate"]);
    let first = w.read("trajectory.csv");
    assert!(first.lines().count() > 10);
    w.ok(&["propagate", "--set", "dynamics.source=network"]);
    w.ok(&["propagate"]);
    assert_eq!(
        w.read("trajectory.csv"),
        first,
        "rerun must reproduce the trajectory"
    );

    w.ok(&["compare"]);
    assert_eq!(data_rows(&w.path("divergence.csv")), 200);
    assert_eq!(data_rows(&w.path("compare_timing.csv")), 2);

    w.ok(&["bench"]);
    let bench = w.read("bench.csv");
    for method in ["raytrace_bvh", "raytrace_exhaustive", "network_batched"] {
        assert!(bench.contains(method), "{bench}");
    }
}

#[test]
fn switching_off_pressure_makes_sources_agree() {
    let w = Workdir::new(SMALL);
    w.ok(&["mascons"]);
    let model = init_model(&MlpConfig::eclipse(vec![8], Activation::Sine, 1)).unwrap();
    save_model(&model, w.path("model.bin")).unwrap();
    w.ok(&[
        "compare",
        "--set",
        "dynamics.srp_eta=0",
        "--set",
        "dynamics.omega=0",
    ]);
    let worst = w
        .read("divergence.csv")
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst:e}");
}

#[test]
fn training_twice_gives_identical_history() {
    let w = Workdir::new(SMALL);
    w.ok(&["dataset"]);
    w.ok(&["train"]);
    let first = w.read("history.csv");
    let model = std::fs::read(w.path("model.bin")).unwrap();
    w.ok(&["train"]);
    assert_eq!(w.read("history.csv"), first);
    assert_eq!(std::fs::read(w.path("model.bin")).unwrap(), model);
    w.ok(&["train", "--set", "seed=4"]);
    assert_ne!(w.read("history.csv"), first);
}

#[test]
fn eval_on_empty_dataset_fails() {
    let w = Workdir::new(SMALL);
    let empty = EclipseDataset {
        body_name: "toy".into(),
        split: Split::Valid,
        seed: 0,
        n_directions: 0,
        n_uniform: 0,
        n_border: 0,
        samples: vec![],
    };
    empty.save(w.path("valid.bin")).unwrap();
    let model = init_model(&MlpConfig::eclipse(vec![8], Activation::Sine, 1)).unwrap();
    save_model(&model, w.path("model.bin")).unwrap();
    let out = w.run(&["eval"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[input]"), "{err}");
    assert!(err.contains("empty"), "{err}");
}

#[test]
fn config_errors_are_categorized() {
    let w = Workdir::new("[train]\nepochz = 3\n");
    let out = w.run(&["train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]"));

    let w = Workdir::new("[body]\nname = \"nowhere\"\n");
    let out = w.run(&["mascons"]);
    assert_eq!(out.status.code(), Some(2));

    let w = Workdir::new(SMALL);
    let out = w.run(&["train"]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "missing dataset is an input error"
    );
}

#[test]
fn synthesized_mesh_loads_as_a_body() {
    let w = Workdir::new("[body]\nname = \"bennu\"\nmesh = \"blob.obj\"\n[mascons]\ngrid_n = 6\n");
    w.ok(&[
        "synth-mesh",
        "--shape",
        "icosphere",
        "--subdivisions",
        "2",
        "--output",
        "blob.obj",
    ]);
    let obj = w.read("blob.obj");
    // Written in kilometres: the unit sphere scaled by Bennu's length.
    let first: Vec<f64> = obj.lines().next().unwrap()[2..]
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    let norm = first.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 0.5634).abs() < 1e-9, "{norm}");
    w.ok(&["mascons"]);
    assert!(data_rows(&w.path("mascons.csv")) > 50);
}
