//! Spacecraft motion in the body-fixed frame rotating at `ω ẑ`:
//!
//! `r̈ = −Σ m_j (r − r_j)/|r − r_j|³ − 2ω×v − ω×(ω×r) − η ŝ(t)`
//!
//! in normalized units (`G · M_total = 1`). The solar-pressure term is
//! switched off in eclipse; switches happen only at refined events, so every
//! integrated segment has a smooth right-hand side.

mod dop853;

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::eclipse::{EclipseError, EclipseOracle};
use crate::geometry::{MasconModel, Vec3};
use crate::neuralnet::{infer_f, MlpModel};

pub use dop853::State;

/// Closest admissible approach to a mascon.
pub const MASCON_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("t = {t}: position within {MASCON_FLOOR} of mascon {index}")]
    Singularity { index: usize, t: f64 },
    #[error("t = {t}: step size underflow")]
    StepUnderflow { t: f64 },
    #[error("t = {t}: exceeded {max_steps} steps")]
    MaxSteps { t: f64, max_steps: usize },
    #[error("t = {t}: {source}")]
    Eclipse { t: f64, source: EclipseError },
    #[error("invalid dynamics configuration: {0}")]
    Config(String),
    #[error("trajectories share no time span")]
    DisjointSpans,
}

/// Where the eclipse function comes from.
#[derive(Debug, Clone)]
pub enum EclipseSource {
    /// Ray casting against the mesh.
    RayTrace(Arc<EclipseOracle>),
    Network(Arc<MlpModel>),
}

#[derive(Debug, Clone)]
pub struct DynamicsConfig {
    pub mascons: Arc<MasconModel>,
    /// Spin rate about `+z`, rad per time unit.
    pub omega: f64,
    pub srp_eta: f64,
    /// Sun direction at `t = 0`.
    pub s0: Vec3,
    pub source: EclipseSource,
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on accepted step sizes; keeps stored states dense enough
    /// for cubic interpolation.
    pub h_max: f64,
    pub max_steps: usize,
    /// Width of the final bracket around each event time.
    pub event_tolerance: f64,
    /// Radius in the projection plane beyond which the network source
    /// reports sunlight. Networks are only trained on `[-1, 1]²` and every
    /// normalized body fits inside the unit disk, so no shadow lies outside it.
    pub network_window: f64,
}

impl DynamicsConfig {
    pub fn new(mascons: Arc<MasconModel>, s0: Vec3, source: EclipseSource) -> Self {
        Self {
            mascons,
            omega: 0.0,
            srp_eta: 1e-5,
            s0,
            source,
            rtol: 1e-12,
            atol: 1e-12,
            h_max: 0.05,
            max_steps: 10_000_000,
            event_tolerance: 1e-10,
            network_window: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: String| Err(DynamicsError::Config(m));
        if (self.s0.norm() - 1.0).abs() > 1e-9 {
            return bad(format!("|s0| = {}", self.s0.norm()));
        }
        if !(self.srp_eta >= 0.0 && self.srp_eta.is_finite()) {
            return bad(format!("eta = {}", self.srp_eta));
        }
        if !self.omega.is_finite() {
            return bad("omega is not finite".into());
        }
        if !(self.network_window > 0.0) {
            return bad(format!("network window = {}", self.network_window));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.h_max > 0.0 && self.event_tolerance > 0.0) {
            return bad("tolerances and h_max must be positive".into());
        }
        Ok(())
    }

    fn omega_vec(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacecraftState {
    pub t: f64,
    pub r: Vec3,
    pub v: Vec3,
}

impl SpacecraftState {
    fn pack(&self) -> State {
        State::from_column_slice(&[self.r.x, self.r.y, self.r.z, self.v.x, self.v.y, self.v.z])
    }

    fn unpack(t: f64, y: &State) -> Self {
        Self {
            t,
            r: Vec3::new(y[0], y[1], y[2]),
            v: Vec3::new(y[3], y[4], y[5]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Entry,
    Exit,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Entry => "entry",
            EventKind::Exit => "exit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EclipseEvent {
    pub t_event: f64,
    pub kind: EventKind,
    pub r_event: Vec3,
    /// `|g|` at the event.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<SpacecraftState>,
    /// Whether solar pressure acted over the step that starts at each state.
    pub srp_on: Vec<bool>,
    pub events: Vec<EclipseEvent>,
}

impl Trajectory {
    /// CSV `t,rx,ry,rz,vx,vy,vz`.
    pub fn states_csv(&self) -> String {
        let mut out = String::from("t,rx,ry,rz,vx,vy,vz\n");
        for s in &self.states {
            let _ = writeln!(
                out,
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                s.t, s.r.x, s.r.y, s.r.z, s.v.x, s.v.y, s.v.z
            );
        }
        out
    }

    /// CSV `t,kind,rx,ry,rz,residual`.
    pub fn events_csv(&self) -> String {
        let mut out = String::from("t,kind,rx,ry,rz,residual\n");
        for e in &self.events {
            let _ = writeln!(
                out,
                "{:?},{},{:?},{:?},{:?},{:?}",
                e.t_event,
                e.kind.as_str(),
                e.r_event.x,
                e.r_event.y,
                e.r_event.z,
                e.residual
            );
        }
        out
    }

    /// Position at `t` by cubic Hermite interpolation of the stored states.
    pub fn position_at(&self, t: f64) -> Option<Vec3> {
        let first = self.states.first()?;
        let last = self.states.last()?;
        if t < first.t || t > last.t {
            return None;
        }
        let k = self.states.partition_point(|s| s.t <= t);
        if k == self.states.len() {
            return Some(last.r);
        }
        let (a, b) = (&self.states[k - 1], &self.states[k]);
        let h = b.t - a.t;
        let s = (t - a.t) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Some(a.r * h00 + a.v * (h10 * h) + b.r * h01 + b.v * (h11 * h))
    }
}

/// `ŝ(t) = R_z(−ω t) ŝ(0)`.
pub fn sun_direction(t: f64, config: &DynamicsConfig) -> Vec3 {
    let (s, c) = (-config.omega * t).sin_cos();
    let s0 = config.s0;
    Vec3::new(c * s0.x - s * s0.y, s * s0.x + c * s0.y, s0.z)
}

fn gravity(r: &Vec3, mascons: &MasconModel, t: f64) -> Result<Vec3, DynamicsError> {
    let mut a = Vec3::zeros();
    for (index, (p, m)) in mascons.positions().iter().zip(mascons.masses()).enumerate() {
        let d = r - p;
        let d2 = d.norm_squared();
        if d2 < MASCON_FLOOR * MASCON_FLOOR {
            return Err(DynamicsError::Singularity { index, t });
        }
        a -= d * (m / (d2 * d2.sqrt()));
    }
    Ok(a)
}

/// Mascon potential `−Σ m_j / |r − r_j|`.
pub fn potential(r: &Vec3, mascons: &MasconModel) -> f64 {
    -mascons
        .positions()
        .iter()
        .zip(mascons.masses())
        .map(|(p, m)| m / (r - p).norm())
        .sum::<f64>()
}

/// Total acceleration; solar pressure acts only when `in_eclipse` is false.
pub fn acceleration(
    state: &SpacecraftState,
    config: &DynamicsConfig,
    in_eclipse: bool,
) -> Result<Vec3, DynamicsError> {
    let w = config.omega_vec();
    let mut a = gravity(&state.r, &config.mascons, state.t)?;
    a -= w.cross(&state.v) * 2.0;
    a -= w.cross(&w.cross(&state.r));
    if !in_eclipse && config.srp_eta > 0.0 {
        a -= sun_direction(state.t, config) * config.srp_eta;
    }
    Ok(a)
}

fn gate(f: f64, axial: f64) -> f64 {
    if axial < 0.0 {
        f
    } else {
        f.max(axial)
    }
}

/// Signed indicator `g`: the eclipse function on the anti-Sun side, and
/// `max(F, r · ŝ)` on the Sun side. In eclipse iff `g < 0`. Network values
/// are also floored by the distance outside [`DynamicsConfig::network_window`].
pub fn eclipse_indicator(
    state: &SpacecraftState,
    config: &DynamicsConfig,
) -> Result<f64, DynamicsError> {
    let s = sun_direction(state.t, config);
    let axial = state.r.dot(&s);
    let f = match &config.source {
        EclipseSource::RayTrace(oracle) => oracle
            .eclipse_function(&state.r, &s)
            .map_err(|source| DynamicsError::Eclipse { t: state.t, source })?,
        EclipseSource::Network(model) => {
            let lateral = (state.r - s * axial).norm();
            infer_f(model, &state.r, &s).max(lateral - config.network_window)
        }
    };
    Ok(gate(f, axial))
}

/// Sign of [`eclipse_indicator`], using a single ray cast for the ray-trace
/// source.
pub fn in_eclipse(state: &SpacecraftState, config: &DynamicsConfig) -> Result<bool, DynamicsError> {
    match &config.source {
        EclipseSource::RayTrace(oracle) => {
            let s = sun_direction(state.t, config);
            if state.r.dot(&s) >= 0.0 {
                return Ok(false);
            }
            oracle
                .in_shadow(&state.r, &s)
                .map_err(|source| DynamicsError::Eclipse { t: state.t, source })
        }
        EclipseSource::Network(_) => Ok(eclipse_indicator(state, config)? < 0.0),
    }
}

/// Adaptive integration from `state0` to `t_final` with eclipse events.
pub fn propagate(
    state0: &SpacecraftState,
    config: &DynamicsConfig,
    t_final: f64,
    dt_initial: f64,
) -> Result<Trajectory, DynamicsError> {
    config.validate()?;
    if !(t_final > state0.t) {
        return Err(DynamicsError::Config(format!(
            "t_final {t_final} must exceed t0 {}",
            state0.t
        )));
    }
    if !(dt_initial > 0.0) {
        return Err(DynamicsError::Config(format!("initial step {dt_initial}")));
    }
    let mut eclipsed = in_eclipse(state0, config)?;
    let rhs = |eclipsed: bool| {
        move |t: f64, y: &State| -> Result<State, DynamicsError> {
            let s = SpacecraftState::unpack(t, y);
            let a = acceleration(&s, config, eclipsed)?;
            Ok(State::from_column_slice(&[
                s.v.x, s.v.y, s.v.z, a.x, a.y, a.z,
            ]))
        }
    };
    let mut t = state0.t;
    let mut y = state0.pack();
    let mut f = rhs(eclipsed);
    let mut k1 = f(t, &y)?;
    let mut h = dt_initial.min(config.h_max);
    let mut traj = Trajectory {
        states: vec![*state0],
        srp_on: vec![!eclipsed],
        events: Vec::new(),
    };
    let mut steps = 0usize;
    while t < t_final {
        steps += 1;
        if steps > config.max_steps {
            return Err(DynamicsError::MaxSteps {
                t,
                max_steps: config.max_steps,
            });
        }
        let last = t + h >= t_final;
        let h_try = if last { t_final - t } else { h };
        if h_try.abs() <= f64::EPSILON * t.abs().max(1.0) {
            if last {
                break;
            }
            return Err(DynamicsError::StepUnderflow { t });
        }
        let trial = dop853::trial_step(&mut f, t, &y, &k1, h_try, config.rtol, config.atol)?;
        if !(trial.err <= 1.0) {
            h = dop853::next_step(h_try, trial.err.min(1e300)).min(h_try);
            continue;
        }
        let t_new = if last { t_final } else { t + h_try };
        let candidate = SpacecraftState::unpack(t_new, &trial.y);
        if in_eclipse(&candidate, config)? != eclipsed {
            // Bisect on the step length; each probe redoes the step from t.
            let (mut lo, mut hi) = (0.0, h_try);
            let mut y_hi = trial.y;
            while hi - lo > config.event_tolerance {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let probe = dop853::trial_step(&mut f, t, &y, &k1, mid, config.rtol, config.atol)?;
                let s = SpacecraftState::unpack(t + mid, &probe.y);
                if in_eclipse(&s, config)? != eclipsed {
                    hi = mid;
                    y_hi = probe.y;
                } else {
                    lo = mid;
                }
            }
            let t_event = t + hi;
            let event_state = SpacecraftState::unpack(t_event, &y_hi);
            let residual = eclipse_indicator(&event_state, config)?.abs();
            eclipsed = !eclipsed;
            traj.events.push(EclipseEvent {
                t_event,
                kind: if eclipsed {
                    EventKind::Entry
                } else {
                    EventKind::Exit
                },
                r_event: event_state.r,
                residual,
            });
            traj.states.push(event_state);
            traj.srp_on.push(!eclipsed);
            t = t_event;
            y = y_hi;
            f = rhs(eclipsed);
            k1 = f(t, &y)?;
            continue;
        }
        t = t_new;
        y = trial.y;
        k1 = f(t, &y)?;
        traj.states.push(candidate);
        traj.srp_on.push(!eclipsed);
        h = dop853::next_step(h_try, trial.err).min(config.h_max);
    }
    Ok(traj)
}

/// `|Δr|` at `n_points` uniform times over the shared span.
pub fn compare_trajectories(
    a: &Trajectory,
    b: &Trajectory,
    n_points: usize,
) -> Result<Vec<(f64, f64)>, DynamicsError> {
    let span = |tr: &Trajectory| -> Option<(f64, f64)> {
        Some((tr.states.first()?.t, tr.states.last()?.t))
    };
    let (Some((a0, a1)), Some((b0, b1))) = (span(a), span(b)) else {
        return Err(DynamicsError::DisjointSpans);
    };
    let (t0, t1) = (a0.max(b0), a1.min(b1));
    if !(t1 >= t0) {
        return Err(DynamicsError::DisjointSpans);
    }
    let n = n_points.max(2);
    Ok((0..n)
        .map(|k| {
            let t = if k == n - 1 {
                t1
            } else {
                t0 + (t1 - t0) * k as f64 / (n - 1) as f64
            };
            let ra = a.position_at(t).expect("inside span");
            let rb = b.position_at(t).expect("inside span");
            (t, (ra - rb).norm())
        })
        .collect())
}

/// `½|v|² − ½|ω×r|² + Φ`, conserved in the rotating frame when solar
/// pressure is off.
pub fn jacobi_energy(state: &SpacecraftState, config: &DynamicsConfig) -> f64 {
    let w = config.omega_vec();
    0.5 * state.v.norm_squared() - 0.5 * w.cross(&state.r).norm_squared()
        + potential(&state.r, &config.mascons)
}

/// Normalized time unit `sqrt(L³ / (G M))` in seconds.
pub fn time_unit_seconds(characteristic_length_km: f64, mass_kg: f64) -> f64 {
    const G: f64 = 6.674_30e-11;
    let l = characteristic_length_km * 1e3;
    (l * l * l / (G * mass_kg)).sqrt()
}

/// Spin rate in rad per normalized time unit for a rotation period in hours.
pub fn normalized_spin_rate(period_hr: f64, characteristic_length_km: f64, mass_kg: f64) -> f64 {
    2.0 * std::f64::consts::PI * time_unit_seconds(characteristic_length_km, mass_kg)
        / (period_hr * 3600.0)
}
