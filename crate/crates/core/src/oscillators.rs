//! Oscillator networks driving the four wheels: a modified Kuramoto model,
//! a phase-biased Hopf model and a coupled Van der Pol model, with the
//! output maps that turn oscillator state into wheel rotation and hub
//! offset commands.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_OSC: usize = 4;

pub type Matrix4 = [[f64; N_OSC]; N_OSC];

/// Default fixed integration step (s).
pub const DEFAULT_DT: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OscillatorModel {
    Kuramoto,
    Hopf,
    Vdp,
}

impl OscillatorModel {
    pub fn name(&self) -> &'static str {
        match self {
            OscillatorModel::Kuramoto => "kuramoto",
            OscillatorModel::Hopf => "hopf",
            OscillatorModel::Vdp => "vdp",
        }
    }
}

/// Quarter-cycle phase bias: oscillator `j` leads `i` by `(j − i)·π/2`.
pub fn quarter_cycle_bias() -> Matrix4 {
    let mut m = [[0.0; N_OSC]; N_OSC];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = 0.5 * PI * (j as f64 - i as f64);
        }
    }
    m
}

/// Counter-clockwise turning pattern for the phase-bias rate.
pub const PSI_CCW: Matrix4 = [
    [0.0, 1.0, 0.0, 1.0],
    [-1.0, 0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0, 1.0],
    [-1.0, 0.0, -1.0, 0.0],
];

/// Van der Pol walking coupling: every oscillator mildly inhibits the rest.
pub const K_WALK: Matrix4 = [
    [0.0, -0.2, -0.2, -0.2],
    [-0.2, 0.0, -0.2, -0.2],
    [-0.2, -0.2, 0.0, -0.2],
    [-0.2, -0.2, -0.2, 0.0],
];

/// Uniform all-to-all coupling weight `k` with an empty diagonal.
pub fn uniform_coupling(k: f64) -> Matrix4 {
    let mut m = [[k; N_OSC]; N_OSC];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    m
}

pub fn transpose(m: &Matrix4) -> Matrix4 {
    let mut t = [[0.0; N_OSC]; N_OSC];
    for i in 0..N_OSC {
        for j in 0..N_OSC {
            t[j][i] = m[i][j];
        }
    }
    t
}

/// Kuramoto oscillator. The offset `x` is the "d" state of the prose
/// description.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KuramotoState {
    pub phase: f64,
    pub amplitude: f64,
    pub amplitude_rate: f64,
    pub offset: f64,
    pub offset_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HopfState {
    pub x: f64,
    pub y: f64,
}

impl HopfState {
    pub fn radius(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Van der Pol oscillator, `y = ẋ`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VdpState {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub omega: [f64; N_OSC],
    pub coupling: Matrix4,
    pub phase_bias: Matrix4,
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        for i in 0..N_OSC {
            if !self.omega[i].is_finite() {
                return Err(Error::domain(format!("omega[{i}] is not finite")));
            }
            if self.coupling[i][i] != 0.0 {
                return Err(Error::domain(format!("coupling[{i}][{i}] must be zero")));
            }
            for j in 0..N_OSC {
                let (k, psi) = (self.coupling[i][j], self.phase_bias[i][j]);
                if !k.is_finite() || !psi.is_finite() {
                    return Err(Error::domain(format!("entry ({i},{j}) is not finite")));
                }
                if (psi + self.phase_bias[j][i]).abs() > 1e-12 {
                    return Err(Error::domain(format!(
                        "phase bias is not antisymmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KuramotoParams {
    pub a_r: f64,
    pub a_x: f64,
    pub amplitude: [f64; N_OSC],
    pub offset: [f64; N_OSC],
}

impl Default for KuramotoParams {
    fn default() -> Self {
        Self {
            a_r: 20.0,
            a_x: 20.0,
            amplitude: [0.0; N_OSC],
            offset: [0.0; N_OSC],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfParams {
    pub gain: [f64; N_OSC],
    pub mu: [f64; N_OSC],
}

impl Default for HopfParams {
    fn default() -> Self {
        Self {
            gain: [50.0; N_OSC],
            mu: [1.0; N_OSC],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdpParams {
    pub gain: [f64; N_OSC],
    pub p_sq: [f64; N_OSC],
}

impl Default for VdpParams {
    fn default() -> Self {
        Self {
            gain: [1.5; N_OSC],
            p_sq: [2.0; N_OSC],
        }
    }
}

/// Rotation and hub offset for one wheel, radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelCommand {
    pub theta: f64,
    pub offset: f64,
}

pub fn kuramoto_derivative(
    states: &[KuramotoState; N_OSC],
    p: &NetworkParams,
    g: &KuramotoParams,
) -> [KuramotoState; N_OSC] {
    std::array::from_fn(|i| {
        let s = &states[i];
        let coupling: f64 = (0..N_OSC)
            .filter(|&j| j != i)
            .map(|j| {
                p.coupling[i][j]
                    * states[j].amplitude
                    * (states[j].phase - s.phase - p.phase_bias[i][j]).sin()
            })
            .sum();
        KuramotoState {
            phase: p.omega[i] + coupling,
            amplitude: s.amplitude_rate,
            amplitude_rate: g.a_r * (g.a_r / 4.0 * (g.amplitude[i] - s.amplitude) - s.amplitude_rate),
            offset: s.offset_rate,
            offset_rate: g.a_x * (g.a_x / 4.0 * (g.offset[i] - s.offset) - s.offset_rate),
        }
    })
}

pub fn kuramoto_output(state: &KuramotoState, a_e: f64, n_arcs: u32) -> WheelCommand {
    WheelCommand {
        theta: 2.0 / n_arcs as f64 * state.phase,
        offset: state.amplitude * a_e * state.phase.sin().abs() + state.offset,
    }
}

pub fn hopf_derivative(
    states: &[HopfState; N_OSC],
    p: &NetworkParams,
    g: &HopfParams,
) -> [HopfState; N_OSC] {
    std::array::from_fn(|i| {
        let HopfState { x, y } = states[i];
        let radial = g.gain[i] * (g.mu[i] * g.mu[i] - (x * x + y * y));
        let w = p.omega[i];
        let (mut sx, mut sy) = (0.0, 0.0);
        for j in (0..N_OSC).filter(|&j| j != i) {
            let (sin, cos) = p.phase_bias[i][j].sin_cos();
            let k = p.coupling[i][j];
            sx += k * (cos * states[j].x - sin * states[j].y);
            sy += k * (sin * states[j].x + cos * states[j].y);
        }
        HopfState {
            x: radial * x - w * y + sx,
            y: w * x + radial * y + sy,
        }
    })
}

/// `prev_phase` is the last unwrapped phase; the returned phase is the
/// revolution of `atan2(y, x)` nearest to it.
pub fn hopf_output(
    state: &HopfState,
    a_e: f64,
    n_arcs: u32,
    prev_phase: f64,
) -> Result<WheelCommand> {
    let phase = planar_phase(state.x, state.y, prev_phase)?;
    Ok(WheelCommand {
        theta: 2.0 / n_arcs as f64 * phase,
        offset: state.radius() - 0.5 * a_e * state.x.abs(),
    })
}

pub fn vdp_derivative(
    states: &[VdpState; N_OSC],
    p: &NetworkParams,
    g: &VdpParams,
) -> [VdpState; N_OSC] {
    std::array::from_fn(|i| {
        let VdpState { x, y } = states[i];
        let activity = x
            + (0..N_OSC)
                .filter(|&j| j != i)
                .map(|j| p.coupling[i][j] * states[j].x)
                .sum::<f64>();
        let w = p.omega[i];
        VdpState {
            x: y,
            y: g.gain[i] * (g.p_sq[i] - x * x) * y - w * w * activity,
        }
    })
}

pub fn vdp_output(
    state: &VdpState,
    e_max: f64,
    a_e: f64,
    p_sq: f64,
    n_arcs: u32,
    prev_phase: f64,
) -> Result<WheelCommand> {
    let phase = planar_phase(state.x, state.y, prev_phase)?;
    Ok(WheelCommand {
        theta: 2.0 / n_arcs as f64 * phase,
        offset: e_max - a_e * state.x.abs() / (2.0 * p_sq),
    })
}

/// `raw` shifted by whole revolutions to lie within half a turn of
/// `reference`.
pub fn unwrap_near(raw: f64, reference: f64) -> f64 {
    raw + 2.0 * PI * ((reference - raw) / (2.0 * PI)).round()
}

fn planar_phase(x: f64, y: f64, prev: f64) -> Result<f64> {
    if x == 0.0 && y == 0.0 {
        return Err(Error::UndefinedPhase);
    }
    Ok(unwrap_near(y.atan2(x), prev))
}

trait OdeState: Copy {
    fn axpy(self, rate: Self, h: f64) -> Self;
    fn finite(&self) -> bool;
}

impl OdeState for KuramotoState {
    fn axpy(self, r: Self, h: f64) -> Self {
        Self {
            phase: self.phase + h * r.phase,
            amplitude: self.amplitude + h * r.amplitude,
            amplitude_rate: self.amplitude_rate + h * r.amplitude_rate,
            offset: self.offset + h * r.offset,
            offset_rate: self.offset_rate + h * r.offset_rate,
        }
    }

    fn finite(&self) -> bool {
        self.phase.is_finite()
            && self.amplitude.is_finite()
            && self.amplitude_rate.is_finite()
            && self.offset.is_finite()
            && self.offset_rate.is_finite()
    }
}

macro_rules! planar_ode_state {
    ($t:ty) => {
        impl OdeState for $t {
            fn axpy(self, r: Self, h: f64) -> Self {
                Self {
                    x: self.x + h * r.x,
                    y: self.y + h * r.y,
                }
            }

            fn finite(&self) -> bool {
                self.x.is_finite() && self.y.is_finite()
            }
        }
    };
}

planar_ode_state!(HopfState);
planar_ode_state!(VdpState);

fn combine<S: OdeState>(y: &[S; N_OSC], k: &[S; N_OSC], h: f64) -> [S; N_OSC] {
    std::array::from_fn(|i| y[i].axpy(k[i], h))
}

fn rk4<S: OdeState>(
    y: &[S; N_OSC],
    h: f64,
    f: impl Fn(&[S; N_OSC]) -> [S; N_OSC],
) -> [S; N_OSC] {
    let k1 = f(y);
    let k2 = f(&combine(y, &k1, h / 2.0));
    let k3 = f(&combine(y, &k2, h / 2.0));
    let k4 = f(&combine(y, &k3, h));
    std::array::from_fn(|i| {
        y[i].axpy(k1[i], h / 6.0)
            .axpy(k2[i], h / 3.0)
            .axpy(k3[i], h / 3.0)
            .axpy(k4[i], h / 6.0)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Oscillators {
    Kuramoto {
        states: [KuramotoState; N_OSC],
        gains: KuramotoParams,
    },
    Hopf {
        states: [HopfState; N_OSC],
        gains: HopfParams,
    },
    Vdp {
        states: [VdpState; N_OSC],
        gains: VdpParams,
    },
}

impl Oscillators {
    pub fn model(&self) -> OscillatorModel {
        match self {
            Oscillators::Kuramoto { .. } => OscillatorModel::Kuramoto,
            Oscillators::Hopf { .. } => OscillatorModel::Hopf,
            Oscillators::Vdp { .. } => OscillatorModel::Vdp,
        }
    }

    /// Two representative state components per oscillator, for tracing.
    pub fn trace_components(&self, i: usize) -> (f64, f64) {
        match self {
            Oscillators::Kuramoto { states, .. } => (states[i].amplitude, states[i].offset),
            Oscillators::Hopf { states, .. } => (states[i].x, states[i].y),
            Oscillators::Vdp { states, .. } => (states[i].x, states[i].y),
        }
    }
}

/// A network of four oscillators with continuously tracked phases.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub params: NetworkParams,
    pub oscillators: Oscillators,
    phases: [f64; N_OSC],
    steps: usize,
}

impl Network {
    pub fn new(params: NetworkParams, oscillators: Oscillators) -> Result<Self> {
        params.validate()?;
        let mut net = Self {
            params,
            oscillators,
            phases: [0.0; N_OSC],
            steps: 0,
        };
        net.phases = net.raw_phases(&[0.0; N_OSC])?;
        Ok(net)
    }

    fn raw_phases(&self, prev: &[f64; N_OSC]) -> Result<[f64; N_OSC]> {
        let mut out = [0.0; N_OSC];
        for (i, o) in out.iter_mut().enumerate() {
            *o = match &self.oscillators {
                Oscillators::Kuramoto { states, .. } => states[i].phase,
                Oscillators::Hopf { states, .. } => planar_phase(states[i].x, states[i].y, prev[i])?,
                Oscillators::Vdp { states, .. } => planar_phase(states[i].x, states[i].y, prev[i])?,
            };
        }
        Ok(out)
    }

    pub fn model(&self) -> OscillatorModel {
        self.oscillators.model()
    }

    /// Unwrapped phase per oscillator.
    pub fn phases(&self) -> [f64; N_OSC] {
        self.phases
    }

    /// Integration steps taken so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One classical RK4 step of length `dt`.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::domain("integration step must be positive"));
        }
        let p = &self.params;
        let finite = match &mut self.oscillators {
            Oscillators::Kuramoto { states, gains } => {
                *states = rk4(states, dt, |s| kuramoto_derivative(s, p, gains));
                states.iter().all(OdeState::finite)
            }
            Oscillators::Hopf { states, gains } => {
                *states = rk4(states, dt, |s| hopf_derivative(s, p, gains));
                states.iter().all(OdeState::finite)
            }
            Oscillators::Vdp { states, gains } => {
                *states = rk4(states, dt, |s| vdp_derivative(s, p, gains));
                states.iter().all(OdeState::finite)
            }
        };
        self.steps += 1;
        if !finite {
            return Err(Error::Divergence { step: self.steps });
        }
        self.phases = self.raw_phases(&self.phases)?;
        Ok(())
    }

    /// Advances by `duration` in steps of at most `dt`.
    pub fn advance(&mut self, duration: f64, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::domain("integration step must be positive"));
        }
        let n = step_count(duration, dt);
        let h = if n > 0 { duration / n as f64 } else { 0.0 };
        for _ in 0..n {
            self.step(h)?;
        }
        Ok(())
    }

    /// Output command per oscillator. `a_e` scales the rectified term; for
    /// Van der Pol `e_max` is the extension ceiling.
    pub fn outputs(
        &self,
        a_e: &[f64; N_OSC],
        e_max: &[f64; N_OSC],
        n_arcs: u32,
    ) -> Result<[WheelCommand; N_OSC]> {
        let mut out = [WheelCommand::default(); N_OSC];
        for (i, cmd) in out.iter_mut().enumerate() {
            *cmd = match &self.oscillators {
                Oscillators::Kuramoto { states, .. } => kuramoto_output(&states[i], a_e[i], n_arcs),
                Oscillators::Hopf { states, .. } => {
                    hopf_output(&states[i], a_e[i], n_arcs, self.phases[i])?
                }
                Oscillators::Vdp { states, gains } => vdp_output(
                    &states[i],
                    e_max[i],
                    a_e[i],
                    gains.p_sq[i],
                    n_arcs,
                    self.phases[i],
                )?,
            };
        }
        Ok(out)
    }
}

fn step_count(duration: f64, dt: f64) -> usize {
    if duration <= 0.0 {
        0
    } else {
        (duration / dt - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub phases: [f64; N_OSC],
    pub oscillators: Oscillators,
}

/// Fixed-step trajectory of `network`, including the initial state.
pub fn integrate(network: &Network, duration: f64, dt: f64) -> Result<Vec<TraceSample>> {
    if !(dt > 0.0) {
        return Err(Error::domain("integration step must be positive"));
    }
    if duration < dt {
        return Err(Error::domain("duration must be at least one step"));
    }
    let n = (duration / dt + 1e-9).floor() as usize;
    let mut net = network.clone();
    let mut out = Vec::with_capacity(n + 1);
    let sample = |t: f64, net: &Network| TraceSample {
        t,
        phases: net.phases(),
        oscillators: net.oscillators.clone(),
    };
    out.push(sample(0.0, &net));
    for k in 1..=n {
        net.step(dt)?;
        out.push(sample(k as f64 * dt, &net));
    }
    Ok(out)
}
