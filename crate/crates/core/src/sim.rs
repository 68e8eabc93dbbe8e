//! Quasi-static planar-pose simulation of a four-wheeled leg-wheel robot.
//!
//! The robot has no mass. Every tick each wheel takes its commanded hub
//! phases, its axle settles onto the terrain under its sampled boundary, and
//! the body advances by the rim distance rolled at the current effective
//! radius. A wheel cannot climb faster than its own rotation lifts it, so
//! vertical faces stall the body until a leg hooks over them.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use crate::controller::{Controller, ControllerConfig, DriveCommand, DriveMode, RobotLayout};
use crate::error::{Error, Result};
use crate::kinematics::{wheel_fk, wheel_ik, FourBarConfig, HubState, Linkage, Vec2};
use crate::oscillators::N_OSC;
use crate::terrain::Terrain;

/// Boundary samples per arc.
pub const ARC_SAMPLES: usize = 64;
/// Samples around each tip cap.
pub const CAP_SAMPLES: usize = 16;

/// Steepest slope (rise per unit of rolled distance) a wheel can follow.
const MAX_GRADE: f64 = 1.0;
const RISE_EPS: f64 = 1e-9;
const BISECTIONS: usize = 30;

/// Wheel boundary generator. Points are in the wheel's own frame with the
/// axle at the origin, `x` along the wheel's own horizontal and `z` up.
#[derive(Debug, Clone)]
pub struct WheelBody {
    cfg: FourBarConfig,
    /// Outer hub phase that puts arc 0's tip straight below the axle.
    mount: f64,
    /// Arc circle center in the chord frame (origin `A`, x toward `P`).
    center_local: Vec2,
    samples_per_arc: usize,
}

fn rotate(v: Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

fn angle_of(v: Vec2) -> f64 {
    v.y.atan2(v.x)
}

impl WheelBody {
    /// Mounted for a tip held `rest_depth` below the axle, which should sit
    /// straight down at rotation `rest_theta` and hand over to the next arc
    /// half a step earlier. The linkage cannot do both with a linear motor
    /// phase, so the mount splits the difference.
    pub fn new(cfg: &FourBarConfig, rest_depth: f64, rest_theta: f64) -> Result<Self> {
        let half_step = PI / cfg.n_arcs as f64;
        let below = wheel_ik(Vec2::new(0.0, -rest_depth), cfg)?.phi_outer;
        let far = (rest_depth / half_step.cos()).min(cfg.reach_max);
        let a = -0.5 * PI - half_step;
        let handover = wheel_ik(Vec2::new(far * a.cos(), far * a.sin()), cfg)?.phi_outer;
        let mount = 0.5 * (below + handover + half_step) - rest_theta;
        // collapsed, the arc lies on the outer hub circle
        let collapsed = wheel_ik(Vec2::new(0.0, -cfg.reach_min), cfg)?;
        let Linkage { a, p, .. } = wheel_fk(collapsed, cfg)?;
        let chord = angle_of(p - a);
        let center_local = rotate(-a, -chord);
        Ok(Self {
            cfg: cfg.clone(),
            mount,
            center_local,
            samples_per_arc: ARC_SAMPLES,
        })
    }

    pub fn with_samples(mut self, per_arc: usize) -> Self {
        self.samples_per_arc = per_arc.max(2);
        self
    }

    pub fn config(&self) -> &FourBarConfig {
        &self.cfg
    }

    pub fn mount(&self) -> f64 {
        self.mount
    }

    /// Largest distance of any boundary point from the axle.
    pub fn outer_reach(&self) -> f64 {
        self.cfg.reach_max + self.cfg.tip_radius
    }

    /// Boundary points for the given hub phases.
    pub fn boundary(&self, hub: HubState) -> Result<Vec<Vec2>> {
        Ok(self.boundary_and_reach(hub)?.0)
    }

    /// Boundary points and the tip distance from the axle.
    pub fn boundary_and_reach(&self, hub: HubState) -> Result<(Vec<Vec2>, f64)> {
        let shifted = HubState::new(hub.phi_outer + self.mount, hub.phi_inner + self.mount);
        let Linkage { a, p, .. } = wheel_fk(shifted, &self.cfg)?;
        let chord = angle_of(p - a);
        let center = a + rotate(self.center_local, chord);
        let radius = self.cfg.outer_hub_da + self.cfg.tip_radius;
        let start = angle_of(a - center);
        let mut sweep = angle_of(p - center) - start;
        sweep -= 2.0 * PI * (sweep / (2.0 * PI)).round();
        let k = self.samples_per_arc;
        let mut arc: Vec<Vec2> = (0..k)
            .map(|j| {
                let t = start + sweep * j as f64 / (k - 1) as f64;
                center + Vec2::new(t.cos(), t.sin()) * radius
            })
            .collect();
        arc.extend((0..CAP_SAMPLES).map(|j| {
            let t = 2.0 * PI * j as f64 / CAP_SAMPLES as f64;
            p + Vec2::new(t.cos(), t.sin()) * self.cfg.tip_radius
        }));
        let step = self.cfg.step_angle();
        let mut out = Vec::with_capacity(arc.len() * self.cfg.n_arcs as usize);
        for n in 0..self.cfg.n_arcs {
            let rot = n as f64 * step;
            out.extend(arc.iter().map(|&q| rotate(q, rot)));
        }
        Ok((out, p.norm()))
    }
}

/// Where a wheel touches the terrain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    /// World position of the touching boundary point.
    pub point: (f64, f64, f64),
    /// Axle height that rests the wheel on the terrain.
    pub axle_z: f64,
    /// Vertical distance from the axle down to the contact.
    pub depth: f64,
}

/// Wheel plane placement: axle position and forward heading in the world.
///
/// Boundaries are given in the right-side wheel's frame, seen from outside,
/// where the own `x` points backward. Left wheels are the mirror images of
/// the right ones, so after [`gait_hub`] both sides share that frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelPlane {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl WheelPlane {
    fn world_xy(&self, q: &Vec2) -> (f64, f64) {
        let forward = -q.x;
        let (s, c) = self.yaw.sin_cos();
        (self.x + forward * c, self.y + forward * s)
    }
}

/// Motor-frame hub state of a wheel on side `side_sign`, expressed in the
/// shared right-side frame.
pub fn gait_hub(hub: HubState, side_sign: f64) -> HubState {
    HubState::from_command(side_sign * hub.phi_outer, hub.offset())
}

/// Axle height resting the sampled boundary on the terrain.
pub fn effective_contact(boundary: &[Vec2], plane: WheelPlane, terrain: &Terrain) -> Contact {
    let mut best = Contact {
        point: (plane.x, plane.y, 0.0),
        axle_z: f64::NEG_INFINITY,
        depth: 0.0,
    };
    for q in boundary {
        let (x, y) = plane.world_xy(q);
        let g = terrain.height(x, y);
        let z = g - q.y;
        if z > best.axle_z {
            best = Contact {
                point: (x, y, g),
                axle_z: z,
                depth: -q.y,
            };
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelSim {
    pub hub: HubState,
    pub axle_z: f64,
    /// Axle to contact, the rolling radius for the next step.
    pub effective_radius: f64,
    /// Axle to tip.
    pub reach: f64,
    /// Total rim distance rolled.
    pub rolled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub z: f64,
    pub pitch: f64,
    pub roll: f64,
    pub wheels: [WheelSim; N_OSC],
    pub t: f64,
    /// Total body path length.
    pub path_length: f64,
}

impl SimState {
    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.yaw, self.z, self.pitch, self.roll, self.t]
            .iter()
            .all(|v| v.is_finite())
            && self.wheels.iter().all(|w| {
                w.hub.phi_outer.is_finite() && w.hub.phi_inner.is_finite() && w.axle_z.is_finite()
            })
    }
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub layout: RobotLayout,
    pub body: WheelBody,
    pub terrain: Terrain,
}

impl Simulator {
    pub fn new(layout: RobotLayout, body: WheelBody, terrain: Terrain) -> Self {
        Self {
            layout,
            body,
            terrain,
        }
    }

    fn plane(&self, i: usize, x: f64, y: f64, yaw: f64) -> WheelPlane {
        let (bx, by) = (self.layout.wheel_x(i), self.layout.wheel_y(i));
        let (s, c) = yaw.sin_cos();
        WheelPlane {
            x: x + bx * c - by * s,
            y: y + bx * s + by * c,
            yaw,
        }
    }

    /// Settles the robot at the origin with the given hub states.
    pub fn initial_state(&self, hubs: [HubState; N_OSC]) -> Result<SimState> {
        let mut wheels = [WheelSim {
            hub: HubState::default(),
            axle_z: 0.0,
            effective_radius: 0.0,
            reach: 0.0,
            rolled: 0.0,
        }; N_OSC];
        for (i, w) in wheels.iter_mut().enumerate() {
            let (boundary, reach) =
                self.body.boundary_and_reach(gait_hub(hubs[i], self.layout.side_sign[i]))?;
            let c = effective_contact(&boundary, self.plane(i, 0.0, 0.0, 0.0), &self.terrain);
            *w = WheelSim {
                hub: hubs[i],
                axle_z: c.axle_z,
                effective_radius: c.depth,
                reach,
                rolled: 0.0,
            };
        }
        let mut state = SimState {
            x: 0.0,
            y: 0.0,
            yaw: 0.0,
            z: 0.0,
            pitch: 0.0,
            roll: 0.0,
            wheels,
            t: 0.0,
            path_length: 0.0,
        };
        self.fit_attitude(&mut state);
        Ok(state)
    }

    fn fit_attitude(&self, state: &mut SimState) {
        let z: [f64; N_OSC] = std::array::from_fn(|i| state.wheels[i].axle_z);
        let (z0, a, b) = fit_plane(&self.layout, &z);
        state.z = z0;
        state.pitch = a.atan();
        state.roll = b.atan();
    }

    /// Advances the robot to the wheel targets over `dt`.
    pub fn step(&self, state: &SimState, targets: &[HubState; N_OSC], dt: f64) -> Result<SimState> {
        if !(dt > 0.0) {
            return Err(Error::domain("simulation step must be positive"));
        }
        let mut boundaries = Vec::with_capacity(N_OSC);
        let mut reach = [0.0; N_OSC];
        for i in 0..N_OSC {
            let s = self.layout.side_sign[i];
            let (b, r) = self.body.boundary_and_reach(gait_hub(targets[i], s))?;
            boundaries.push(b);
            reach[i] = r;
        }
        let mut ds = [0.0; N_OSC];
        let mut dtheta = [0.0; N_OSC];
        for i in 0..N_OSC {
            let s = self.layout.side_sign[i];
            dtheta[i] = targets[i].phi_outer - state.wheels[i].hub.phi_outer;
            ds[i] = s * dtheta[i] * state.wheels[i].effective_radius;
        }
        let side = |sign: f64| {
            let picked: Vec<f64> = (0..N_OSC)
                .filter(|&i| self.layout.side_sign[i] == sign)
                .map(|i| ds[i])
                .collect();
            picked.iter().sum::<f64>() / picked.len() as f64
        };
        let (left, right) = (side(-1.0), side(1.0));
        let forward = 0.5 * (left + right);
        let turn = (right - left) / self.layout.track_width;
        let outer = self.body.outer_reach();
        // rotation, leg stretch and rolling up a slope are the only ways up
        let rise_cap = |i: usize, lambda: f64| {
            dtheta[i].abs() * outer
                + (reach[i] - state.wheels[i].reach).abs()
                + MAX_GRADE * (lambda * ds[i]).abs() + RISE_EPS
        };

        let pose_at = |lambda: f64| {
            let (d, dyaw) = (lambda * forward, lambda * turn);
            let mid = state.yaw + 0.5 * dyaw;
            (state.x + d * mid.cos(), state.y + d * mid.sin(), state.yaw + dyaw)
        };
        let contacts_at = |lambda: f64| -> ([Contact; N_OSC], bool) {
            let (x, y, yaw) = pose_at(lambda);
            let mut ok = true;
            let contacts = std::array::from_fn(|i| {
                let c = effective_contact(&boundaries[i], self.plane(i, x, y, yaw), &self.terrain);
                let cap = rise_cap(i, lambda);
                if c.axle_z > state.wheels[i].axle_z + cap {
                    ok = false;
                }
                c
            });
            (contacts, ok)
        };

        let (mut lambda, (mut contacts, ok)) = (1.0, contacts_at(1.0));
        if !ok {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if contacts_at(mid).1 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lambda = lo;
            contacts = contacts_at(lo).0;
        }

        let (x, y, yaw) = pose_at(lambda);
        let mut next = SimState {
            x,
            y,
            yaw,
            z: 0.0,
            pitch: 0.0,
            roll: 0.0,
            wheels: state.wheels,
            t: state.t + dt,
            path_length: state.path_length + (x - state.x).hypot(y - state.y),
        };
        for i in 0..N_OSC {
            let cap = rise_cap(i, lambda);
            let prev = state.wheels[i].axle_z;
            let axle_z = contacts[i].axle_z.min(prev + cap);
            next.wheels[i] = WheelSim {
                hub: targets[i],
                reach: reach[i],
                axle_z,
                effective_radius: (axle_z - contacts[i].point.2).max(0.0),
                rolled: state.wheels[i].rolled + (lambda * ds[i]).abs(),
            };
        }
        self.fit_attitude(&mut next);
        if !next.is_finite() {
            return Err(Error::Divergence {
                step: (next.t / dt).round() as usize,
            });
        }
        Ok(next)
    }
}

/// Least-squares plane `z = z0 + a·x + b·y` through the axle heights, in
/// body coordinates. Returns `(z0, a, b)`.
pub fn fit_plane(layout: &RobotLayout, z: &[f64; N_OSC]) -> (f64, f64, f64) {
    let mut m = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (i, &zi) in z.iter().enumerate() {
        let row = Vector3::new(1.0, layout.wheel_x(i), layout.wheel_y(i));
        m += row * row.transpose();
        rhs += row * zi;
    }
    let sol = m.lu().solve(&rhs).unwrap_or_else(Vector3::zeros);
    (sol[0], sol[1], sol[2])
}

/// One timed entry of a command schedule.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub t_start: f64,
    pub v: f64,
    pub w: f64,
    pub h: f64,
}

impl ScheduleEntry {
    pub fn command(&self) -> DriveCommand {
        DriveCommand::new(self.v, self.w, self.h)
    }
}

/// Command in force at time `t`: the latest entry that has started.
pub fn command_at(schedule: &[ScheduleEntry], t: f64) -> DriveCommand {
    schedule
        .iter()
        .take_while(|e| e.t_start <= t + 1e-9)
        .last()
        .or(schedule.first())
        .map(|e| e.command())
        .unwrap_or(DriveCommand::new(0.0, 0.0, 0.0))
}

/// Everything one trial needs.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub mode: DriveMode,
    pub controller: ControllerConfig,
    pub layout: RobotLayout,
    pub wheel: FourBarConfig,
    pub terrain: Terrain,
    pub schedule: Vec<ScheduleEntry>,
    pub duration: f64,
    /// Gait-frame oscillator phases at the start.
    pub initial_phases: [f64; N_OSC],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub z: f64,
    pub pitch: f64,
    pub roll: f64,
    /// Motor rotation and hub offset per wheel.
    pub wheels: [(f64, f64); N_OSC],
    pub cmd: DriveCommand,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialLog {
    pub dt: f64,
    pub rows: Vec<LogRow>,
}

pub const LOG_HEADER: &str = "t,x,y,yaw,z,pitch,roll,w0_theta,w0_e,w1_theta,w1_e,w2_theta,w2_e,w3_theta,w3_e,cmd_v,cmd_w,cmd_h";

/// Fixed-point rendering with 9 significant digits.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() {
            "0.00000000".into()
        } else {
            format!("{v}")
        };
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (8 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // tiny negatives can round to zero
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

impl TrialLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 200);
        out.push_str(LOG_HEADER);
        out.push('\n');
        for r in &self.rows {
            let mut fields = vec![r.t, r.x, r.y, r.yaw, r.z, r.pitch, r.roll];
            for (theta, e) in r.wheels {
                fields.push(theta);
                fields.push(e);
            }
            fields.extend([r.cmd.v, r.cmd.w, r.cmd.h]);
            let line: Vec<String> = fields.into_iter().map(fmt_sig9).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

fn log_row(state: &SimState, cmd: DriveCommand) -> LogRow {
    LogRow {
        t: state.t,
        x: state.x,
        y: state.y,
        yaw: state.yaw,
        z: state.z,
        pitch: state.pitch,
        roll: state.roll,
        wheels: state
            .wheels
            .map(|w| (w.hub.phi_outer, w.hub.phi_inner - w.hub.phi_outer)),
        cmd,
    }
}

/// Runs the closed loop of schedule, controller and simulator.
pub fn run_trial(setup: &TrialSetup) -> Result<TrialLog> {
    let dt = setup.controller.dt;
    let first = command_at(&setup.schedule, 0.0);
    let mut ctl = Controller::new(
        setup.mode,
        setup.controller.clone(),
        setup.layout.clone(),
        setup.wheel.clone(),
        first,
        setup.initial_phases,
    )
    .map_err(|e| at_time(0.0, e))?;
    let rest_depth = first.h - setup.wheel.tip_radius;
    let rest_theta = 2.0 / setup.wheel.n_arcs as f64 * setup.mode.tip_below_phase();
    let body = WheelBody::new(&setup.wheel, rest_depth, rest_theta).map_err(|e| at_time(0.0, e))?;
    let sim = Simulator::new(setup.layout.clone(), body, setup.terrain.clone());
    let mut state = sim
        .initial_state(ctl.state().targets)
        .map_err(|e| at_time(0.0, e))?;
    let ticks = if setup.duration <= 0.0 {
        0
    } else {
        (setup.duration / dt - 1e-9).ceil() as usize
    };
    let mut log = TrialLog {
        dt,
        rows: Vec::with_capacity(ticks + 1),
    };
    log.rows.push(log_row(&state, first));
    for k in 0..ticks {
        let t = k as f64 * dt;
        let cmd = command_at(&setup.schedule, t);
        let targets = ctl.tick(cmd).map_err(|e| at_time(t, e))?;
        state = sim.step(&state, &targets, dt).map_err(|e| at_time(t, e))?;
        // keep the clock on the tick grid
        state.t = (k + 1) as f64 * dt;
        log.rows.push(log_row(&state, cmd));
    }
    Ok(log)
}

fn at_time(t: f64, e: Error) -> Error {
    Error::AtTime {
        t,
        source: Box::new(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMetrics {
    pub height_mean: f64,
    pub height_sd: f64,
    pub mean_speed: f64,
    pub final_x: f64,
    pub final_y: f64,
    /// Final lateral offset over forward distance; `None` without forward
    /// travel.
    pub final_offset_norm: Option<f64>,
    /// Circle-fit radius; `None` unless the heading turned appreciably.
    pub turn_radius: Option<f64>,
}

/// Heading change (rad) below which no turning radius is fitted.
pub const MIN_TURN: f64 = 0.5;

pub fn metrics(log: &TrialLog) -> Result<TrialMetrics> {
    if log.rows.len() < 2 {
        return Err(Error::UndefinedMetrics(
            "at least two samples are needed".into(),
        ));
    }
    let n = log.rows.len() as f64;
    // summing deviations from the first sample keeps a constant log exact
    let z0 = log.rows[0].z;
    let height_mean = z0 + log.rows.iter().map(|r| r.z - z0).sum::<f64>() / n;
    let var = log
        .rows
        .iter()
        .map(|r| (r.z - height_mean).powi(2))
        .sum::<f64>()
        / n;
    let path: f64 = log
        .rows
        .windows(2)
        .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
        .sum();
    let (first, last) = (log.rows[0], log.rows[log.rows.len() - 1]);
    let duration = last.t - first.t;
    let dx = last.x - first.x;
    let turned = (last.yaw - first.yaw).abs();
    let turn_radius = if turned > MIN_TURN {
        let pts: Vec<(f64, f64)> = log.rows.iter().map(|r| (r.x, r.y)).collect();
        fit_circle(&pts).map(|(_, _, r)| r)
    } else {
        None
    };
    Ok(TrialMetrics {
        height_mean,
        height_sd: var.sqrt(),
        mean_speed: if duration > 0.0 { path / duration } else { 0.0 },
        final_x: last.x,
        final_y: last.y,
        final_offset_norm: if dx.abs() > 1e-9 {
            Some((last.y - first.y) / dx)
        } else {
            None
        },
        turn_radius,
    })
}

/// Algebraic least-squares circle. Returns `(cx, cy, r)`.
pub fn fit_circle(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if points.len() < 3 {
        return None;
    }
    // center the data for conditioning
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut m = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for &(x, y) in points {
        let (u, v) = (x - mx, y - my);
        let row = Vector3::new(u, v, 1.0);
        m += row * row.transpose();
        rhs -= row * (u * u + v * v);
    }
    let sol = m.lu().solve(&rhs)?;
    let (cu, cv) = (-0.5 * sol[0], -0.5 * sol[1]);
    let r2 = cu * cu + cv * cv - sol[2];
    if !(r2 > 0.0) || !r2.is_finite() {
        return None;
    }
    Some((cu + mx, cv + my, r2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::geometry::{wheel_geometry, ArcWheelSpec};
    use crate::terrain::TerrainFeature;

    fn body(rest_depth: f64) -> WheelBody {
        WheelBody::new(&FourBarConfig::prototype(), rest_depth, 0.0).unwrap()
    }

    fn plane() -> WheelPlane {
        WheelPlane {
            x: 0.0,
            y: 0.0,
            yaw: 0.0,
        }
    }

    #[test]
    fn mount_splits_phase_error() {
        let cfg = FourBarConfig::prototype();
        let half = PI / cfg.n_arcs as f64;
        let (depth, rest) = (0.1, 0.4);
        let b = WheelBody::new(&cfg, depth, rest).unwrap();
        let far = depth / half.cos();
        let a = -0.5 * PI - half;
        let below = wheel_ik(Vec2::new(0.0, -depth), &cfg).unwrap();
        let handover = wheel_ik(Vec2::new(far * a.cos(), far * a.sin()), &cfg).unwrap();
        // motor angles that hit each pose exactly
        let theta_below = below.phi_outer - b.mount();
        let theta_handover = handover.phi_outer - b.mount();
        assert_relative_eq!(theta_below - rest, (rest - half) - theta_handover, epsilon = 1e-12);
        let hub = HubState::from_command(theta_below, below.offset());
        let c = effective_contact(&b.boundary(hub).unwrap(), plane(), &Terrain::flat());
        assert_relative_eq!(c.axle_z, depth + cfg.tip_radius, epsilon = 1e-9);
    }

    #[test]
    fn collapsed_wheel_is_round() {
        let b = body(0.1);
        let cfg = b.config().clone();
        let (lo, _) = cfg.offset_interval().unwrap();
        let round = cfg.outer_hub_da + cfg.tip_radius;
        for k in 0..200 {
            let theta = k as f64 * 0.0314;
            let hub = HubState::from_command(theta, lo);
            let c = effective_contact(&b.boundary(hub).unwrap(), plane(), &Terrain::flat());
            assert!((c.axle_z - round).abs() < 1.5e-3, "theta {theta}: {}", c.axle_z);
        }
    }

    #[test]
    fn extended_wheel_matches_polygon_heights() {
        let b = body(0.1);
        let cfg = b.config().clone();
        let (_, hi) = cfg.offset_interval().unwrap();
        let step = cfg.step_angle();
        let heights: Vec<f64> = (0..=400)
            .map(|k| {
                let hub = HubState::from_command(k as f64 * step / 400.0, hi);
                effective_contact(&b.boundary(hub).unwrap(), plane(), &Terrain::flat()).axle_z
            })
            .collect();
        let max = heights.iter().cloned().fold(f64::MIN, f64::max);
        let min = heights.iter().cloned().fold(f64::MAX, f64::min);
        let g = wheel_geometry(ArcWheelSpec::new(5, 1.0).unwrap());
        assert_relative_eq!(max, cfg.reach_max + cfg.tip_radius, epsilon = 1e-6);
        // the tip cap rounds the polygon corners; compare the bare tip path
        let bare_min = min - cfg.tip_radius;
        assert_relative_eq!(bare_min / cfg.reach_max, g.h_min / g.h_max, epsilon = 5e-3);
    }

    fn sim_flat() -> (Simulator, SimState) {
        let layout = RobotLayout::new(0.3, 0.3, 5).unwrap();
        let b = body(0.1);
        let e = wheel_ik(Vec2::new(0.0, -0.1), b.config()).unwrap().offset();
        let sim = Simulator::new(layout, b, Terrain::flat());
        let state = sim.initial_state([HubState::from_command(0.0, e); 4]).unwrap();
        (sim, state)
    }

    #[test]
    fn zero_targets_leave_state() {
        let (sim, state) = sim_flat();
        let targets = state.wheels.map(|w| w.hub);
        let next = sim.step(&state, &targets, 0.02).unwrap();
        assert_eq!(next.x, state.x);
        assert_eq!(next.y, state.y);
        assert_eq!(next.z, state.z);
        assert_relative_eq!(next.t, 0.02);
    }

    #[test]
    fn equal_advance_drives_straight() {
        let (sim, mut state) = sim_flat();
        let e = state.wheels[0].hub.offset();
        for k in 1..=100 {
            let g = k as f64 * 0.01;
            let targets = std::array::from_fn(|i| {
                HubState::from_command(sim.layout.side_sign[i] * g, e)
            });
            state = sim.step(&state, &targets, 0.02).unwrap();
        }
        assert!(state.x > 0.05);
        assert_eq!(state.yaw, 0.0);
        assert_eq!(state.y, 0.0);
        // no slip: body path equals the rim distance rolled on each side
        for w in &state.wheels {
            assert!((w.rolled - state.path_length).abs() < 1e-9);
        }
    }

    #[test]
    fn plane_fit_recovers_tilt() {
        let layout = RobotLayout::new(0.3, 0.4, 5).unwrap();
        let z: [f64; 4] = std::array::from_fn(|i| 0.1 + 0.2 * layout.wheel_x(i) - 0.1 * layout.wheel_y(i));
        let (z0, a, b) = fit_plane(&layout, &z);
        assert_relative_eq!(z0, 0.1, epsilon = 1e-12);
        assert_relative_eq!(a, 0.2, epsilon = 1e-12);
        assert_relative_eq!(b, -0.1, epsilon = 1e-12);
    }

    #[test]
    fn circle_fit_oracle() {
        let pts: Vec<(f64, f64)> = (0..100)
            .map(|k| {
                let a = k as f64 * 0.05;
                (2.0 + a.cos(), -1.0 + a.sin())
            })
            .collect();
        let (cx, cy, r) = fit_circle(&pts).unwrap();
        assert_relative_eq!(r, 1.0, epsilon = 1e-6);
        assert_relative_eq!(cx, 2.0, epsilon = 1e-6);
        assert_relative_eq!(cy, -1.0, epsilon = 1e-6);
    }

    fn synthetic(rows: impl Iterator<Item = (f64, f64, f64, f64, f64)>) -> TrialLog {
        TrialLog {
            dt: 0.02,
            rows: rows
                .map(|(t, x, y, yaw, z)| LogRow {
                    t,
                    x,
                    y,
                    yaw,
                    z,
                    pitch: 0.0,
                    roll: 0.0,
                    wheels: [(0.0, 0.0); 4],
                    cmd: DriveCommand::new(0.0, 0.0, 0.1),
                })
                .collect(),
        }
    }

    #[test]
    fn metrics_on_synthetic_logs() {
        let straight = synthetic((0..101).map(|k| (k as f64 * 0.02, k as f64 * 0.002, 0.0, 0.0, 0.1)));
        let m = metrics(&straight).unwrap();
        assert_eq!(m.height_sd, 0.0);
        assert_eq!(m.final_offset_norm, Some(0.0));
        assert_relative_eq!(m.mean_speed, 0.1, epsilon = 1e-12);
        assert!(m.turn_radius.is_none());

        let circle = synthetic((0..300).map(|k| {
            let a = k as f64 * 0.01;
            (k as f64 * 0.02, a.sin(), 1.0 - a.cos(), a, 0.1)
        }));
        let r = metrics(&circle).unwrap().turn_radius.unwrap();
        assert!((r - 1.0).abs() < 1e-6);

        let single = synthetic(std::iter::once((0.0, 0.0, 0.0, 0.0, 0.1)));
        assert!(matches!(metrics(&single), Err(Error::UndefinedMetrics(_))));
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_sig9(0.0), "0.00000000");
        assert_eq!(fmt_sig9(1.5), "1.50000000");
        assert_eq!(fmt_sig9(-123.456), "-123.456000");
        assert_eq!(fmt_sig9(0.000123456789), "0.000123456789");
        assert_eq!(fmt_sig9(-1e-15), "-0.00000000000000100000000");
        assert_eq!(fmt_sig9(-0.0), "0.00000000");
        assert_eq!(fmt_sig9(-4e-9), "-0.00000000400000000");
        assert_eq!(fmt_sig9(1234567890.0), "1234567890");
    }

    #[test]
    fn schedule_lookup_holds_last_command() {
        let s = vec![
            ScheduleEntry { t_start: 0.0, v: 0.1, w: 0.0, h: 0.1 },
            ScheduleEntry { t_start: 2.0, v: 0.2, w: 0.0, h: 0.11 },
        ];
        assert_eq!(command_at(&s, 1.99).v, 0.1);
        assert_eq!(command_at(&s, 2.0).v, 0.2);
        assert_eq!(command_at(&s, 100.0).h, 0.11);
    }

    fn setup(mode: DriveMode, v: f64, w: f64, h: f64, duration: f64) -> TrialSetup {
        TrialSetup {
            mode,
            controller: ControllerConfig::default(),
            layout: RobotLayout::new(0.3, 0.3, 5).unwrap(),
            wheel: FourBarConfig::prototype(),
            terrain: Terrain::flat(),
            schedule: vec![ScheduleEntry { t_start: 0.0, v, w, h }],
            duration,
            initial_phases: [0.0, PI / 2.0, PI, 1.5 * PI],
        }
    }

    #[test]
    fn zero_duration_gives_one_sample() {
        let log = run_trial(&setup(DriveMode::Kuramoto, 0.1, 0.0, 0.1, 0.0)).unwrap();
        assert_eq!(log.rows.len(), 1);
    }

    #[test]
    fn trials_are_deterministic_and_evenly_sampled() {
        let s = setup(DriveMode::Hopf, 0.1, 0.05, 0.1, 2.0);
        let (a, b) = (run_trial(&s).unwrap(), run_trial(&s).unwrap());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows.len(), 101);
        for w in a.rows.windows(2) {
            assert!(w[1].t > w[0].t);
            assert!((w[1].t - w[0].t - 0.02).abs() < 1e-12);
        }
        assert!(a.to_csv().starts_with(LOG_HEADER));
    }

    #[test]
    fn direct_drive_rolls_forward() {
        let mut s = setup(DriveMode::Direct, 0.1, 0.0, 0.1, 5.0);
        s.initial_phases = [0.0; 4];
        let m = metrics(&run_trial(&s).unwrap()).unwrap();
        assert!((m.mean_speed - 0.1).abs() < 0.03, "speed {}", m.mean_speed);
        assert_eq!(m.final_y, 0.0);
    }

    #[test]
    fn climbing_a_low_step_is_gradual() {
        let mut s = setup(DriveMode::Direct, 0.1, 0.0, 0.12, 15.0);
        s.terrain = Terrain::new(vec![TerrainFeature::Step { height: 0.05, x: 0.4 }]).unwrap();
        let log = run_trial(&s).unwrap();
        let z0 = log.rows[0].z;
        let last = log.rows.last().unwrap();
        assert!(last.x > 0.7, "stalled at x = {}", last.x);
        assert!((last.z - z0 - 0.05).abs() < 0.01, "gain {}", last.z - z0);
        // a tick turns a wheel by at most ω·dt, bounding the rise
        let max_rise = log
            .rows
            .windows(2)
            .map(|w| w[1].z - w[0].z)
            .fold(0.0, f64::max);
        assert!(max_rise < 0.01, "rise {max_rise}");
    }

    #[test]
    fn errors_carry_time() {
        let mut s = setup(DriveMode::Vdp, 0.1, 0.0, 0.1, 2.0);
        s.schedule.push(ScheduleEntry { t_start: 1.0, v: 0.1, w: 0.2, h: 0.1 });
        match run_trial(&s) {
            Err(Error::AtTime { t, source }) => {
                assert!((t - 1.0).abs() < 0.03);
                assert!(matches!(*source, Error::Unsupported(_)));
            }
            other => panic!("{other:?}"),
        }
    }
}
