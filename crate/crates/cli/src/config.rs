//! Run configuration: a TOML file with one table per stage, overridable
//! from the command line with `--set section.key=value`.
//!
//! Unknown tables and keys are rejected.

use std::path::PathBuf;

use serde::Deserialize;

use eclipsenet::geometry::{load_mesh, shapes, TriangleMesh};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPreset {
    pub name: &'static str,
    pub characteristic_length_km: f64,
    pub mass_kg: f64,
    pub rotation_period_hr: f64,
    pub mesh_points: usize,
    pub mascons: usize,
}

pub const PRESETS: [BodyPreset; 4] = [
    BodyPreset {
        name: "bennu",
        characteristic_length_km: 0.5634,
        mass_kg: 7.329e10,
        rotation_period_hr: 4.296,
        mesh_points: 7374,
        mascons: 75150,
    },
    BodyPreset {
        name: "itokawa",
        characteristic_length_km: 0.5607,
        mass_kg: 3.51e10,
        rotation_period_hr: 12.132,
        mesh_points: 3000,
        mascons: 100363,
    },
    BodyPreset {
        name: "67p",
        characteristic_length_km: 5.0025,
        mass_kg: 9.982e12,
        rotation_period_hr: 12.4043,
        mesh_points: 9149,
        mascons: 57259,
    },
    BodyPreset {
        name: "eros",
        characteristic_length_km: 32.6622,
        mass_kg: 6.687e15,
        rotation_period_hr: 5.270,
        mesh_points: 7374,
        mascons: 97824,
    },
];

/// Resolves `bennu`, `itokawa`, `67p` (also `67P`, `67/P`, `churyumov`)
/// and `eros`.
pub fn preset(name: &str) -> Option<&'static BodyPreset> {
    let key = name.to_ascii_lowercase().replace('/', "");
    let key = match key.as_str() {
        "churyumov" | "churyumov-gerasimenko" | "67p-cg" => "67p",
        k => k,
    };
    PRESETS.iter().find(|p| p.name == key)
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for every stochastic stage unless a stage sets its own.
    pub seed: u64,
    pub body: BodySection,
    pub mascons: MasconSection,
    pub dataset: DatasetSection,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub dynamics: DynamicsSection,
    pub compare: CompareSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BodySection {
    pub name: String,
    /// OBJ file in kilometres.
    pub mesh: Option<PathBuf>,
    /// Built-in body used instead of `mesh`: `cube`, `icosphere` or `bilobed`.
    pub shape: Option<String>,
    pub shape_subdivisions: u32,
    pub shape_seed: u64,
    /// Overrides of the preset constants; required for bodies without one.
    pub characteristic_length_km: Option<f64>,
    pub mass_kg: Option<f64>,
    pub rotation_period_hr: Option<f64>,
}

impl Default for BodySection {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            mesh: None,
            shape: None,
            shape_subdivisions: 4,
            shape_seed: 1,
            characteristic_length_km: None,
            mass_kg: None,
            rotation_period_hr: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MasconSection {
    pub grid_n: usize,
    pub path: PathBuf,
}

impl Default for MasconSection {
    fn default() -> Self {
        Self {
            grid_n: 32,
            path: "mascons.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub train_dirs: usize,
    pub valid_dirs: usize,
    pub n_uniform: usize,
    pub n_border: usize,
    pub border_sigma: f64,
    pub boundary_grid: usize,
    pub train_path: PathBuf,
    pub valid_path: PathBuf,
    /// Also write CSV copies next to the binary files.
    pub csv: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            train_dirs: 50,
            valid_dirs: 20,
            n_uniform: 1000,
            n_border: 3000,
            border_sigma: 0.05,
            boundary_grid: 256,
            train_path: "train.bin".into(),
            valid_path: "valid.bin".into(),
            csv: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub activation: String,
    pub hidden: Vec<usize>,
    pub w0: f64,
    pub init_seed: Option<u64>,
    pub raw_positions: bool,
    pub path: PathBuf,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            activation: "sine".into(),
            hidden: vec![32, 32, 32],
            w0: eclipsenet::neuralnet::DEFAULT_SINE_W0,
            init_seed: None,
            raw_positions: false,
            path: "model.bin".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub minibatch_size: usize,
    pub initial_lr: f64,
    pub epochs: usize,
    pub lr_decay: f64,
    pub decay_start_epoch: usize,
    pub decay_every: usize,
    pub shuffle_seed: Option<u64>,
    pub history_path: PathBuf,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            minibatch_size: 256,
            initial_lr: 3e-4,
            epochs: 60,
            lr_decay: 0.7,
            decay_start_epoch: 25,
            decay_every: 5,
            shuffle_seed: None,
            history_path: "history.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// `train` or `valid`.
    pub split: String,
    pub output: PathBuf,
    /// Sun direction of the silhouette grid written by `eval --silhouette`.
    pub silhouette_sun: [f64; 3],
    pub silhouette_grid: usize,
    pub silhouette_path: PathBuf,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            split: "valid".into(),
            output: "eval.csv".into(),
            silhouette_sun: [1.0, 0.0, 0.0],
            silhouette_grid: 200,
            silhouette_path: "silhouette.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    /// `raytrace` or `network`.
    pub source: String,
    pub srp_eta: f64,
    pub sun: [f64; 3],
    /// Spin rate in rad per normalized time unit; defaults to the body's
    /// rotation period.
    pub omega: Option<f64>,
    pub r0: [f64; 3],
    pub v0: [f64; 3],
    /// `v0` is measured in the non-rotating frame and converted with `−ω×r0`.
    pub v0_inertial: bool,
    /// Duration in orbital periods of a circular orbit at `|r0|`, unless
    /// `t_final` is set.
    pub orbits: f64,
    pub t_final: Option<f64>,
    pub dt_initial: f64,
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub boundary_grid: usize,
    /// Plane radius beyond which the network source reports sunlight.
    pub network_window: f64,
    pub trajectory_path: PathBuf,
    pub events_path: PathBuf,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            source: "raytrace".into(),
            srp_eta: 1e-5,
            sun: [1.0, 0.0, 0.0],
            omega: None,
            r0: [3.0, 0.0, 0.0],
            v0: [0.0, 0.577_350_269_189_625_8, 0.0],
            v0_inertial: true,
            orbits: 3.0,
            t_final: None,
            dt_initial: 1e-2,
            rtol: 1e-12,
            atol: 1e-12,
            h_max: 0.05,
            boundary_grid: 256,
            network_window: 1.0,
            trajectory_path: "trajectory.csv".into(),
            events_path: "events.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub points: usize,
    pub divergence_path: PathBuf,
    pub timing_path: PathBuf,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            points: 5000,
            divergence_path: "divergence.csv".into(),
            timing_path: "compare_timing.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub calls: usize,
    /// Calls for the exhaustive ray caster, which is far slower.
    pub exhaustive_calls: usize,
    pub repeats: usize,
    pub output: PathBuf,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            calls: 100_000,
            exhaustive_calls: 2_000,
            repeats: 3,
            output: "bench.csv".into(),
        }
    }
}

/// Body constants after applying presets and overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyConstants {
    pub name: String,
    pub characteristic_length_km: f64,
    pub mass_kg: f64,
    pub rotation_period_hr: f64,
}

impl RunConfig {
    pub fn body_constants(&self) -> Result<BodyConstants, CliError> {
        let p = preset(&self.body.name);
        let pick = |over: Option<f64>, base: Option<f64>, what: &str| {
            over.or(base).ok_or_else(|| {
                CliError::Config(format!(
                    "body `{}` has no preset; set body.{what}",
                    self.body.name
                ))
            })
        };
        let c = BodyConstants {
            name: p.map_or(self.body.name.clone(), |p| p.name.to_string()),
            characteristic_length_km: pick(
                self.body.characteristic_length_km,
                p.map(|p| p.characteristic_length_km),
                "characteristic_length_km",
            )?,
            mass_kg: pick(self.body.mass_kg, p.map(|p| p.mass_kg), "mass_kg")?,
            rotation_period_hr: pick(
                self.body.rotation_period_hr,
                p.map(|p| p.rotation_period_hr),
                "rotation_period_hr",
            )?,
        };
        for (v, what) in [
            (c.characteristic_length_km, "characteristic_length_km"),
            (c.mass_kg, "mass_kg"),
            (c.rotation_period_hr, "rotation_period_hr"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!(
                    "body.{what} = {v} must be positive"
                )));
            }
        }
        Ok(c)
    }

    /// The body mesh, normalized by its characteristic length.
    pub fn load_mesh(&self) -> Result<TriangleMesh, CliError> {
        match (&self.body.shape, &self.body.mesh) {
            (Some(_), Some(_)) => Err(CliError::Config(
                "set only one of body.shape and body.mesh".into(),
            )),
            (Some(shape), None) => {
                builtin_shape(shape, self.body.shape_subdivisions, self.body.shape_seed)
            }
            (None, Some(path)) => {
                let c = self.body_constants()?;
                Ok(load_mesh(path, c.characteristic_length_km)?)
            }
            (None, None) => Err(CliError::Config(
                "neither body.mesh nor body.shape is set".into(),
            )),
        }
    }
}

pub fn builtin_shape(name: &str, subdivisions: u32, seed: u64) -> Result<TriangleMesh, CliError> {
    if subdivisions > 7 {
        return Err(CliError::Config(format!(
            "shape subdivisions {subdivisions} is above the limit of 7"
        )));
    }
    match name {
        "cube" => Ok(shapes::cube(0.5)),
        "icosphere" => Ok(shapes::icosphere(subdivisions)),
        "bilobed" => Ok(shapes::bilobed(subdivisions, seed)),
        other => Err(CliError::Config(format!(
            "unknown shape `{other}` (cube, icosphere, bilobed)"
        ))),
    }
}

/// Parses `text`, applies `overrides` (`section.key=value`, value in TOML
/// syntax or a bare string) and validates the result.
pub fn load_config(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    for item in overrides {
        let (path, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{item}` is not key=value")))?;
        let value = parse_value(raw.trim());
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) || keys.len() > 2 {
            return Err(CliError::Config(format!("bad override key `{path}`")));
        }
        if keys.len() == 1 {
            table.insert(keys[0].to_string(), value);
        } else {
            let section = table
                .entry(keys[0].to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match section {
                toml::Value::Table(t) => {
                    t.insert(keys[1].to_string(), value);
                }
                _ => return Err(CliError::Config(format!("`{}` is not a table", keys[0]))),
            }
        }
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_body_constants() {
        let b = preset("Bennu").unwrap();
        assert_eq!(b.characteristic_length_km, 0.5634);
        assert_eq!(b.mass_kg, 7.329e10);
        let c = preset("67/P").unwrap();
        assert_eq!(c.rotation_period_hr, 12.4043);
        assert_eq!(c.characteristic_length_km, 5.0025);
        assert_eq!(c.mesh_points, 9149);
        assert_eq!(preset("eros").unwrap().mascons, 97824);
        assert_eq!(preset("itokawa").unwrap().mass_kg, 3.51e10);
        assert!(preset("vesta").is_none());
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let c = load_config(
            "[train]\nepochs = 5\n",
            &["train.epochs=7".into(), "body.name=eros".into()],
        )
        .unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.body_constants().unwrap().mass_kg, 6.687e15);
        assert!(load_config("[train]\nepochz = 5\n", &[]).is_err());
        assert!(load_config("", &["trian.epochs=5".into()]).is_err());
        assert!(load_config("", &["nonsense".into()]).is_err());
    }

    #[test]
    fn custom_body_needs_constants() {
        let c = load_config("[body]\nname = \"blob\"\n", &[]).unwrap();
        assert!(c.body_constants().is_err());
        let c = load_config(
            "[body]\nname = \"blob\"\ncharacteristic_length_km = 1.0\nmass_kg = 1e12\nrotation_period_hr = 5.0\n",
            &[],
        )
        .unwrap();
        assert_eq!(c.body_constants().unwrap().name, "blob");
    }
}
