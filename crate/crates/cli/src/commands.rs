use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eclipsenet::dataset::{build_dataset, load_dataset, EclipseDataset, SamplingConfig};
use eclipsenet::dynamics::{
    compare_trajectories, normalized_spin_rate, propagate as integrate, DynamicsConfig,
    EclipseSource, SpacecraftState, Trajectory,
};
use eclipsenet::eclipse::{EclipseOracle, ProjectionFrame};
use eclipsenet::geometry::{generate_mascons_voxel, MasconModel, Ray, TriangleMesh, Vec3};
use eclipsenet::neuralnet::{
    evaluate, infer_f, init_model, load_model, save_model, train as fit, Activation, MlpConfig,
    MlpModel, TrainConfig,
};

use crate::config::{builtin_shape, RunConfig};
use crate::error::{write_file, CliError};

/// Mass used when the body has no physical constants; only relevant for
/// CSV round trips, the dynamics work in normalized units.
const UNIT_MASS_KG: f64 = 1.0;

fn total_mass(cfg: &RunConfig) -> f64 {
    cfg.body_constants().map_or(UNIT_MASS_KG, |c| c.mass_kg)
}

fn body_label(cfg: &RunConfig) -> Result<String, CliError> {
    let name = cfg
        .body_constants()
        .map_or_else(|_| cfg.body.name.clone(), |c| c.name);
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(CliError::Config(format!(
            "body.name `{name}` must be one word"
        )));
    }
    Ok(name)
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn unit(a: [f64; 3], what: &str) -> Result<Vec3, CliError> {
    let v = vec3(a);
    let n = v.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(CliError::Config(format!("{what} must be a nonzero vector")));
    }
    Ok(v / n)
}

pub fn mascons(cfg: &RunConfig) -> Result<(), CliError> {
    let mesh = cfg.load_mesh()?;
    let t = Instant::now();
    let model = generate_mascons_voxel(&mesh, cfg.mascons.grid_n, total_mass(cfg))?;
    write_file(&cfg.mascons.path, model.to_csv())?;
    println!(
        "{} mascons from a {}^3 grid in {:.2} s -> {}",
        model.len(),
        cfg.mascons.grid_n,
        t.elapsed().as_secs_f64(),
        cfg.mascons.path.display()
    );
    Ok(())
}

pub fn dataset(cfg: &RunConfig) -> Result<(), CliError> {
    let mesh = cfg.load_mesh()?;
    let name = body_label(cfg)?;
    let d = &cfg.dataset;
    let sampling = SamplingConfig {
        n_uniform: d.n_uniform,
        n_border: d.n_border,
        border_sigma: d.border_sigma,
        boundary_grid: d.boundary_grid,
    };
    let t = Instant::now();
    let (train, valid) = build_dataset(
        &mesh,
        &name,
        d.train_dirs,
        d.valid_dirs,
        &sampling,
        cfg.seed,
    )?;
    for (set, path) in [(&train, &d.train_path), (&valid, &d.valid_path)] {
        write_file(path, set.to_bytes()?)?;
        if d.csv {
            write_file(&path.with_extension("csv"), set.to_csv())?;
        }
    }
    println!(
        "{} training and {} validation samples in {:.2} s",
        train.len(),
        valid.len(),
        t.elapsed().as_secs_f64()
    );
    Ok(())
}

fn network_config(cfg: &RunConfig) -> Result<MlpConfig, CliError> {
    let n = &cfg.network;
    let activation = Activation::parse(&n.activation).ok_or_else(|| {
        CliError::Config(format!(
            "network.activation `{}` is not sine or rectifier",
            n.activation
        ))
    })?;
    let mut m = MlpConfig::eclipse(
        n.hidden.clone(),
        activation,
        n.init_seed.unwrap_or(cfg.seed),
    );
    m.w0 = n.w0;
    m.raw_positions = n.raw_positions;
    m.validate()?;
    Ok(m)
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    let t = &cfg.train;
    TrainConfig {
        minibatch_size: t.minibatch_size,
        initial_lr: t.initial_lr,
        epochs: t.epochs,
        lr_decay: t.lr_decay,
        decay_start_epoch: t.decay_start_epoch,
        decay_every: t.decay_every,
        shuffle_seed: t.shuffle_seed.unwrap_or(cfg.seed),
    }
}

fn read_dataset(path: &Path) -> Result<EclipseDataset, CliError> {
    if !path.exists() {
        return Err(CliError::Input(format!(
            "dataset {} does not exist; run `eclipsenet dataset` first",
            path.display()
        )));
    }
    Ok(load_dataset(path)?)
}

fn read_model(path: &Path) -> Result<MlpModel, CliError> {
    if !path.exists() {
        return Err(CliError::Input(format!(
            "model {} does not exist; run `eclipsenet train` first",
            path.display()
        )));
    }
    Ok(load_model(path)?)
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let train_set = read_dataset(&cfg.dataset.train_path)?;
    let valid_set = if cfg.dataset.valid_path.exists() {
        Some(read_dataset(&cfg.dataset.valid_path)?)
    } else {
        None
    };
    let mut model = init_model(&network_config(cfg)?)?;
    let t = Instant::now();
    let history = fit(
        &mut model,
        &train_set,
        &train_config(cfg),
        valid_set.as_ref(),
    )?;
    save_model(&model, &cfg.network.path)?;
    let mut csv = String::from("epoch,lr,train_mse,valid_mse\n");
    for e in &history {
        let valid = e.valid_mse.map_or(String::new(), |v| format!("{v:e}"));
        let _ = writeln!(csv, "{},{:e},{:e},{}", e.epoch, e.lr, e.train_mse, valid);
    }
    write_file(&cfg.train.history_path, csv)?;
    if let Some(last) = history.last() {
        println!(
            "{} epochs in {:.1} s, train MSE {:.3e}{}",
            history.len(),
            t.elapsed().as_secs_f64(),
            last.train_mse,
            last.valid_mse
                .map_or(String::new(), |v| format!(", validation MSE {v:.3e}"))
        );
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig, silhouette: bool) -> Result<(), CliError> {
    let model = read_model(&cfg.network.path)?;
    let path = match cfg.eval.split.as_str() {
        "train" => &cfg.dataset.train_path,
        "valid" => &cfg.dataset.valid_path,
        other => {
            return Err(CliError::Config(format!(
                "eval.split `{other}` is not train or valid"
            )))
        }
    };
    let set = read_dataset(path)?;
    if set.is_empty() {
        return Err(CliError::Input(format!(
            "dataset {} is empty",
            path.display()
        )));
    }
    let mse = evaluate(&model, &set)?;
    let inputs: Vec<[f64; 6]> = set.samples.iter().map(|s| s.input()).collect();
    let pred = model.predict(&inputs)?;
    let mut csv = String::from("px,py,pz,sx,sy,sz,f_true,f_pred\n");
    for (s, p) in set.samples.iter().zip(&pred) {
        let (r, d) = (s.position, s.s_hat);
        let _ = writeln!(
            csv,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.x, r.y, r.z, d.x, d.y, d.z, s.f_value, p
        );
    }
    write_file(&cfg.eval.output, csv)?;
    println!(
        "{} split: {} samples, MSE {mse:.4e}",
        cfg.eval.split,
        set.len()
    );
    if silhouette {
        write_silhouette(cfg, &model)?;
    }
    Ok(())
}

/// Network and ground-truth `F` on a square grid of the projection plane.
fn write_silhouette(cfg: &RunConfig, model: &MlpModel) -> Result<(), CliError> {
    let n = cfg.eval.silhouette_grid;
    if n < 2 {
        return Err(CliError::Config(
            "eval.silhouette_grid must be at least 2".into(),
        ));
    }
    let s = unit(cfg.eval.silhouette_sun, "eval.silhouette_sun")?;
    let mesh = Arc::new(cfg.load_mesh()?);
    let oracle = EclipseOracle::new(mesh, cfg.dataset.boundary_grid)?;
    let frame = ProjectionFrame::new(s)?;
    let half = 1.5;
    let mut csv = String::from("x,y,f_true,f_pred\n");
    for i in 0..n {
        for j in 0..n {
            let x = -half + 2.0 * half * i as f64 / (n - 1) as f64;
            let y = -half + 2.0 * half * j as f64 / (n - 1) as f64;
            let r = frame.u_hat * x + frame.v_hat * y;
            let truth = oracle.eclipse_function(&r, &s)?;
            let _ = writeln!(csv, "{x:e},{y:e},{truth:e},{:e}", infer_f(model, &r, &s));
        }
    }
    write_file(&cfg.eval.silhouette_path, csv)?;
    println!(
        "silhouette grid {n}x{n} -> {}",
        cfg.eval.silhouette_path.display()
    );
    Ok(())
}

fn read_mascons(cfg: &RunConfig) -> Result<MasconModel, CliError> {
    let path = &cfg.mascons.path;
    if !path.exists() {
        return Err(CliError::Input(format!(
            "mascons {} do not exist; run `eclipsenet mascons` first",
            path.display()
        )));
    }
    Ok(MasconModel::load(path, total_mass(cfg))?)
}

fn spin_rate(cfg: &RunConfig) -> Result<f64, CliError> {
    if let Some(w) = cfg.dynamics.omega {
        return Ok(w);
    }
    let c = cfg.body_constants()?;
    Ok(normalized_spin_rate(
        c.rotation_period_hr,
        c.characteristic_length_km,
        c.mass_kg,
    ))
}

fn dynamics_config(
    cfg: &RunConfig,
    mascons: Arc<MasconModel>,
    source: &str,
) -> Result<DynamicsConfig, CliError> {
    let d = &cfg.dynamics;
    let source = match source {
        "raytrace" => {
            let mesh = Arc::new(cfg.load_mesh()?);
            EclipseSource::RayTrace(Arc::new(EclipseOracle::new(mesh, d.boundary_grid)?))
        }
        "network" => EclipseSource::Network(Arc::new(read_model(&cfg.network.path)?)),
        other => {
            return Err(CliError::Config(format!(
                "dynamics.source `{other}` is not raytrace or network"
            )))
        }
    };
    let mut c = DynamicsConfig::new(mascons, unit(d.sun, "dynamics.sun")?, source);
    c.omega = spin_rate(cfg)?;
    c.srp_eta = d.srp_eta;
    c.rtol = d.rtol;
    c.atol = d.atol;
    c.h_max = d.h_max;
    c.network_window = d.network_window;
    c.validate()?;
    Ok(c)
}

/// Initial state in the rotating frame and the final time.
fn initial_state(cfg: &RunConfig, omega: f64) -> Result<(SpacecraftState, f64), CliError> {
    let d = &cfg.dynamics;
    let r = vec3(d.r0);
    if !(r.norm() > 0.0) {
        return Err(CliError::Config("dynamics.r0 must be nonzero".into()));
    }
    let mut v = vec3(d.v0);
    if d.v0_inertial {
        v -= Vec3::new(0.0, 0.0, omega).cross(&r);
    }
    let t_final = match d.t_final {
        Some(t) => t,
        None => d.orbits * 2.0 * std::f64::consts::PI * r.norm().powf(1.5),
    };
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(CliError::Config(format!(
            "final time {t_final} must be positive"
        )));
    }
    Ok((SpacecraftState { t: 0.0, r, v }, t_final))
}

fn run_source(
    cfg: &RunConfig,
    mascons: &Arc<MasconModel>,
    source: &str,
) -> Result<(Trajectory, f64), CliError> {
    let config = dynamics_config(cfg, Arc::clone(mascons), source)?;
    let (state0, t_final) = initial_state(cfg, config.omega)?;
    let t = Instant::now();
    let traj = integrate(&state0, &config, t_final, cfg.dynamics.dt_initial)?;
    Ok((traj, t.elapsed().as_secs_f64()))
}

pub fn propagate(cfg: &RunConfig) -> Result<(), CliError> {
    let mascons = Arc::new(read_mascons(cfg)?);
    let (traj, secs) = run_source(cfg, &mascons, &cfg.dynamics.source)?;
    write_file(&cfg.dynamics.trajectory_path, traj.states_csv())?;
    write_file(&cfg.dynamics.events_path, traj.events_csv())?;
    println!(
        "{} states, {} eclipse events in {secs:.2} s ({} source)",
        traj.states.len(),
        traj.events.len(),
        cfg.dynamics.source
    );
    Ok(())
}

pub fn compare(cfg: &RunConfig) -> Result<(), CliError> {
    let mascons = Arc::new(read_mascons(cfg)?);
    let (truth, t_ray) = run_source(cfg, &mascons, "raytrace")?;
    let (net, t_net) = run_source(cfg, &mascons, "network")?;
    let div = compare_trajectories(&truth, &net, cfg.compare.points)?;
    let mut csv = String::from("t,dr\n");
    for (t, dr) in &div {
        let _ = writeln!(csv, "{t:e},{dr:e}");
    }
    write_file(&cfg.compare.divergence_path, csv)?;
    let mut timing = String::from("source,seconds,states,events\n");
    for (name, secs, tr) in [("raytrace", t_ray, &truth), ("network", t_net, &net)] {
        let _ = writeln!(
            timing,
            "{name},{secs:.6},{},{}",
            tr.states.len(),
            tr.events.len()
        );
    }
    write_file(&cfg.compare.timing_path, timing)?;
    let max_dr = div.iter().map(|p| p.1).fold(0.0, f64::max);
    println!(
        "max |dr| {max_dr:.3e}; ray tracing {t_ray:.2} s, network {t_net:.2} s; events {} vs {}",
        truth.events.len(),
        net.events.len()
    );
    Ok(())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn timed(repeats: usize, mut f: impl FnMut() -> usize) -> (f64, usize) {
    let mut times = Vec::with_capacity(repeats);
    let mut hits = 0;
    for _ in 0..repeats {
        let t = Instant::now();
        hits = std::hint::black_box(f());
        times.push(t.elapsed().as_secs_f64());
    }
    (median(times), hits)
}

pub fn bench(cfg: &RunConfig) -> Result<(), CliError> {
    let b = &cfg.bench;
    if b.calls == 0 || b.exhaustive_calls == 0 || b.repeats == 0 {
        return Err(CliError::Config("bench counts must be positive".into()));
    }
    let mesh = cfg.load_mesh()?;
    let model = read_model(&cfg.network.path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut queries = Vec::with_capacity(b.calls);
    while queries.len() < b.calls {
        let d = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let s = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if d.norm() < 0.1 || d.norm() > 1.0 || s.norm() < 0.1 || s.norm() > 1.0 {
            continue;
        }
        let r = d.normalize() * rng.random_range(1.2..4.0);
        queries.push((r, s.normalize()));
    }
    let (t_bvh, _) = timed(b.repeats, || {
        queries
            .iter()
            .filter(|(r, s)| mesh.ray_hits(&Ray::from_unit(*r, *s)))
            .count()
    });
    let n_ex = b.exhaustive_calls.min(b.calls);
    let (t_ex, _) = timed(b.repeats, || {
        queries[..n_ex]
            .iter()
            .filter(|(r, s)| mesh.ray_hits_exhaustive(&Ray::from_unit(*r, *s)))
            .count()
    });
    let inputs: Vec<[f64; 6]> = queries.iter().map(|(r, s)| model.input_for(r, s)).collect();
    let (t_net, _) = timed(b.repeats, || {
        model
            .predict(&inputs)
            .map_or(0, |p| p.iter().filter(|f| **f < 0.0).count())
    });
    let mut csv = String::from("method,calls,median_seconds,seconds_per_call\n");
    for (name, calls, secs) in [
        ("raytrace_bvh", b.calls, t_bvh),
        ("raytrace_exhaustive", n_ex, t_ex),
        ("network_batched", b.calls, t_net),
    ] {
        let _ = writeln!(csv, "{name},{calls},{secs:.6e},{:.6e}", secs / calls as f64);
        println!(
            "{name:<20} {calls:>8} calls  {:.3e} s/call",
            secs / calls as f64
        );
    }
    println!("{} triangles", mesh.triangles().len());
    write_file(&b.output, csv)
}

pub fn synth_mesh(
    cfg: &RunConfig,
    shape: &str,
    subdivisions: u32,
    seed: u64,
    output: &Path,
) -> Result<(), CliError> {
    let mesh = builtin_shape(shape, subdivisions, seed)?;
    // Written in kilometres so the file loads back with the body's
    // characteristic length.
    let scale = cfg
        .body_constants()
        .map_or(1.0, |c| c.characteristic_length_km);
    let scaled = TriangleMesh::new(mesh.vertices().to_vec(), mesh.triangles().to_vec(), scale)?;
    write_file(output, scaled.to_obj_string())?;
    println!(
        "{shape}: {} vertices, {} triangles -> {}",
        mesh.vertices().len(),
        mesh.triangles().len(),
        output.display()
    );
    Ok(())
}
