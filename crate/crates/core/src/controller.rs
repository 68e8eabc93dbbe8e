//! Differential-drive CPG controller: turns (v, w, h) commands into
//! oscillator frequencies, phase biases and extension targets, and reads
//! back per-wheel hub phase targets at a fixed rate.
//!
//! Wheels are numbered front-left, front-right, rear-left, rear-right. Each
//! wheel reports its angles in its own frame, seen from outside the robot,
//! so forward travel turns the two sides in opposite senses. The network
//! runs in a shared gait frame where forward is always positive and motor
//! angles are `θ_i = s_i · θ_gait`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{extension_bounds, ExtensionBounds, FourBarConfig, HubState};
use crate::oscillators::{
    quarter_cycle_bias, transpose, uniform_coupling, HopfParams, HopfState, KuramotoParams,
    KuramotoState, Matrix4, Network, NetworkParams, OscillatorModel, Oscillators, VdpParams,
    VdpState, K_WALK, N_OSC, PSI_CCW,
};

pub const CONTROL_DT: f64 = 0.02;

/// Kuramoto output scale. Negative, so the offset peaks at `X` on the
/// handover between arcs (`φ = 0`) and dips to `X − R` with the tip under
/// the hub (`φ = π/2`), which puts the rectifier kink at the handover where
/// the exact profile has its corner.
pub const KURAMOTO_SCALE: f64 = -1.0;
pub const SUBSTEPS: usize = 10;

/// `h` is the commanded axle height above the ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveCommand {
    pub v: f64,
    pub w: f64,
    pub h: f64,
}

impl DriveCommand {
    pub fn new(v: f64, w: f64, h: f64) -> Self {
        Self { v, w, h }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotLayout {
    /// Lateral distance between the left and right wheel planes.
    pub track_width: f64,
    pub wheelbase: f64,
    /// +1 for right-side wheels, −1 for left.
    pub side_sign: [f64; N_OSC],
    pub n_arcs: u32,
}

impl RobotLayout {
    pub fn new(track_width: f64, wheelbase: f64, n_arcs: u32) -> Result<Self> {
        let layout = Self {
            track_width,
            wheelbase,
            side_sign: [-1.0, 1.0, -1.0, 1.0],
            n_arcs,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.track_width > 0.0 && self.track_width.is_finite()) {
            return Err(Error::domain("track width must be positive"));
        }
        if !(self.wheelbase > 0.0 && self.wheelbase.is_finite()) {
            return Err(Error::domain("wheelbase must be positive"));
        }
        if self.n_arcs < 3 {
            return Err(Error::domain("wheels need at least 3 arcs"));
        }
        let right = self.side_sign.iter().filter(|&&s| s == 1.0).count();
        let left = self.side_sign.iter().filter(|&&s| s == -1.0).count();
        if right != 2 || left != 2 {
            return Err(Error::domain("layout needs two wheels on each side"));
        }
        Ok(())
    }

    /// Lever arm of the yaw term: half the track, so the two sides differ in
    /// rim speed by `w · W`.
    pub fn yaw_lever(&self) -> f64 {
        0.5 * self.track_width
    }

    /// Longitudinal offset of each wheel from the body center.
    pub fn wheel_x(&self, i: usize) -> f64 {
        if i < 2 {
            0.5 * self.wheelbase
        } else {
            -0.5 * self.wheelbase
        }
    }

    /// Lateral offset (left positive) of each wheel from the body center.
    pub fn wheel_y(&self, i: usize) -> f64 {
        -self.side_sign[i] * 0.5 * self.track_width
    }
}

/// Motor-frame target frequencies and the phase-bias rate.
pub fn steering_targets(cmd: DriveCommand, layout: &RobotLayout) -> Result<([f64; N_OSC], Matrix4)> {
    if !(cmd.h > 0.0) {
        return Err(Error::domain(format!("height must be positive, got {}", cmd.h)));
    }
    let half_n = layout.n_arcs as f64 / 2.0;
    let turn = cmd.w * layout.yaw_lever() / cmd.h;
    let omega = std::array::from_fn(|i| half_n * (turn + layout.side_sign[i] * cmd.v / cmd.h));
    let rate = 2.0 * half_n * turn;
    let psi_dot = PSI_CCW.map(|row| row.map(|v| rate * v));
    Ok((omega, psi_dot))
}

/// One exact step of `ω̇ = k_ω (ω* − ω)` over `dt`.
pub fn filter_frequency(omega: f64, target: f64, k_omega: f64, dt: f64) -> f64 {
    omega + (target - omega) * (-(-k_omega * dt).exp_m1())
}

/// Extension bounds for axle height `h`: the tip rides `r_p` below the axle
/// height on flat ground.
pub fn height_to_extension(h: f64, cfg: &FourBarConfig) -> Result<ExtensionBounds> {
    extension_bounds(h - cfg.tip_radius, cfg)
}

/// Axle heights the wheel can hold.
pub fn height_band(cfg: &FourBarConfig) -> (f64, f64) {
    (cfg.reach_min + cfg.tip_radius, cfg.reach_max + cfg.tip_radius)
}

/// Memoized [`height_to_extension`].
#[derive(Debug, Clone, Default)]
pub struct ExtensionCache {
    map: HashMap<u64, ExtensionBounds>,
}

impl ExtensionCache {
    pub fn get(&mut self, h: f64, cfg: &FourBarConfig) -> Result<ExtensionBounds> {
        if let Some(b) = self.map.get(&h.to_bits()) {
            return Ok(*b);
        }
        let b = height_to_extension(h, cfg)?;
        self.map.insert(h.to_bits(), b);
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveMode {
    Kuramoto,
    Hopf,
    Vdp,
    Direct,
}

impl DriveMode {
    pub const ALL: [DriveMode; 4] = [
        DriveMode::Direct,
        DriveMode::Kuramoto,
        DriveMode::Hopf,
        DriveMode::Vdp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DriveMode::Kuramoto => "kuramoto",
            DriveMode::Hopf => "hopf",
            DriveMode::Vdp => "vdp",
            DriveMode::Direct => "direct",
        }
    }

    /// Oscillator phase at which the model puts the tip straight below the
    /// hub with its smallest offset.
    pub fn tip_below_phase(&self) -> f64 {
        match self {
            DriveMode::Kuramoto => 0.5 * std::f64::consts::PI,
            _ => 0.0,
        }
    }

    pub fn model(&self) -> Option<OscillatorModel> {
        match self {
            DriveMode::Kuramoto => Some(OscillatorModel::Kuramoto),
            DriveMode::Hopf => Some(OscillatorModel::Hopf),
            DriveMode::Vdp => Some(OscillatorModel::Vdp),
            DriveMode::Direct => None,
        }
    }
}

impl std::str::FromStr for DriveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DriveMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown oscillator '{s}'")))
    }
}

/// Controller tunables. Defaults follow the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub k_omega: f64,
    pub dt: f64,
    pub substeps: usize,
    pub kuramoto_a_r: f64,
    pub kuramoto_a_x: f64,
    pub kuramoto_coupling: f64,
    pub hopf_gain: f64,
    pub hopf_coupling: f64,
    pub vdp_gain: f64,
    pub vdp_p_sq: f64,
    /// Multiplies the commanded frequency fed to the Van der Pol network.
    pub vdp_frequency_scale: f64,
    /// Holds all phase biases at zero so the four wheels turn in step.
    pub synchronized: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            k_omega: 5.0,
            dt: CONTROL_DT,
            substeps: SUBSTEPS,
            kuramoto_a_r: 20.0,
            kuramoto_a_x: 20.0,
            kuramoto_coupling: 1.0,
            hopf_gain: 50.0,
            hopf_coupling: 0.1,
            vdp_gain: 1.5,
            vdp_p_sq: 2.0,
            vdp_frequency_scale: 1.0,
            synchronized: false,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let positive = [
            ("controller.k_omega", self.k_omega),
            ("controller.dt", self.dt),
            ("controller.kuramoto_a_r", self.kuramoto_a_r),
            ("controller.kuramoto_a_x", self.kuramoto_a_x),
            ("controller.hopf_gain", self.hopf_gain),
            ("controller.vdp_gain", self.vdp_gain),
            ("controller.vdp_p_sq", self.vdp_p_sq),
            ("controller.vdp_frequency_scale", self.vdp_frequency_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive"));
            }
        }
        for (name, v) in [
            ("controller.kuramoto_coupling", self.kuramoto_coupling),
            ("controller.hopf_coupling", self.hopf_coupling),
        ] {
            if !v.is_finite() {
                errs.push(format!("{name} must be finite"));
            }
        }
        if self.substeps == 0 {
            errs.push("controller.substeps must be at least 1".into());
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Filtered motor-frame frequencies.
    pub omega: [f64; N_OSC],
    /// Gait-frame phase biases: wheel `j` leads wheel `i` by `psi[i][j]`.
    pub phase_bias: Matrix4,
    pub targets: [HubState; N_OSC],
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct Controller {
    mode: DriveMode,
    cfg: ControllerConfig,
    layout: RobotLayout,
    wheel: FourBarConfig,
    offset_limits: (f64, f64),
    state: ControllerState,
    network: Option<Network>,
    /// Gait phase per wheel (Van der Pol and direct drive keep their own).
    gait_phase: [f64; N_OSC],
    cache: ExtensionCache,
}

impl Controller {
    /// `initial_phases` are gait-frame oscillator phases in radians.
    pub fn new(
        mode: DriveMode,
        cfg: ControllerConfig,
        layout: RobotLayout,
        wheel: FourBarConfig,
        initial: DriveCommand,
        initial_phases: [f64; N_OSC],
    ) -> Result<Self> {
        let errs = cfg.validate();
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        layout.validate()?;
        if layout.n_arcs != wheel.n_arcs {
            return Err(Error::domain("layout and wheel disagree on the arc count"));
        }
        let offset_limits = wheel.offset_interval()?;
        let mut cache = ExtensionCache::default();
        let bounds = cache.get(initial.h, &wheel)?;
        let phase_bias = if cfg.synchronized {
            [[0.0; N_OSC]; N_OSC]
        } else {
            quarter_cycle_bias()
        };
        let network = match mode.model() {
            None => None,
            Some(model) => Some(build_network(
                model,
                &cfg,
                &phase_bias,
                &bounds,
                &initial_phases,
            )?),
        };
        let mut ctl = Self {
            mode,
            cfg,
            layout,
            wheel,
            offset_limits,
            state: ControllerState {
                omega: [0.0; N_OSC],
                phase_bias,
                targets: [HubState::default(); N_OSC],
                t: 0.0,
            },
            network,
            gait_phase: initial_phases,
            cache,
        };
        if let (DriveMode::Vdp, Some(net)) = (mode, &ctl.network) {
            // Van der Pol phase runs against the gait
            ctl.gait_phase = net.phases().map(|p| -p);
        }
        ctl.state.targets = ctl.read_targets(&bounds)?;
        Ok(ctl)
    }

    pub fn mode(&self) -> DriveMode {
        self.mode
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn network(&self) -> Option<&Network> {
        self.network.as_ref()
    }

    pub fn layout(&self) -> &RobotLayout {
        &self.layout
    }

    pub fn wheel(&self) -> &FourBarConfig {
        &self.wheel
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    /// Hub offset (rad) the wheel holds with its tip straight below the hub
    /// at axle height `h`.
    pub fn rest_offset(&mut self, h: f64) -> Result<f64> {
        Ok(self.cache.get(h, &self.wheel)?.min_offset())
    }

    pub fn extension(&mut self, h: f64) -> Result<ExtensionBounds> {
        self.cache.get(h, &self.wheel)
    }

    /// Advances one controller period and returns the hub targets.
    pub fn tick(&mut self, cmd: DriveCommand) -> Result<[HubState; N_OSC]> {
        if !(cmd.v.is_finite() && cmd.w.is_finite() && cmd.h.is_finite()) {
            return Err(Error::domain("command must be finite"));
        }
        if self.mode == DriveMode::Vdp && cmd.w != 0.0 {
            return Err(Error::Unsupported(
                "Van der Pol networks cannot generate turning commands".into(),
            ));
        }
        let dt = self.cfg.dt;
        let bounds = self.cache.get(cmd.h, &self.wheel)?;
        let (target, psi_dot) = steering_targets(cmd, &self.layout)?;
        for (w, t) in self.state.omega.iter_mut().zip(target) {
            *w = filter_frequency(*w, t, self.cfg.k_omega, dt);
        }
        if !self.cfg.synchronized {
            for (row, rate) in self.state.phase_bias.iter_mut().zip(psi_dot) {
                for (v, r) in row.iter_mut().zip(rate) {
                    *v += dt * r;
                }
            }
        }
        let gait_omega: [f64; N_OSC] =
            std::array::from_fn(|i| self.layout.side_sign[i] * self.state.omega[i]);
        let h = dt / self.cfg.substeps as f64;
        match self.mode {
            DriveMode::Direct => {
                for (p, w) in self.gait_phase.iter_mut().zip(gait_omega) {
                    // same phase units as the networks: θ = (2/N)·phase
                    *p += w * dt;
                }
            }
            DriveMode::Kuramoto | DriveMode::Hopf => {
                let net = self.network.as_mut().expect("cpg mode has a network");
                net.params.omega = gait_omega;
                net.params.phase_bias = if self.mode == DriveMode::Hopf {
                    transpose(&self.state.phase_bias)
                } else {
                    self.state.phase_bias
                };
                set_targets(&mut net.oscillators, &bounds);
                for _ in 0..self.cfg.substeps {
                    net.step(h)?;
                }
            }
            DriveMode::Vdp => {
                let net = self.network.as_mut().expect("cpg mode has a network");
                if cmd.v != 0.0 {
                    let scale = self.cfg.vdp_frequency_scale;
                    net.params.omega = gait_omega.map(|w| scale * w.abs());
                    let before = net.phases();
                    for _ in 0..self.cfg.substeps {
                        net.step(h)?;
                    }
                    let after = net.phases();
                    let dir = cmd.v.signum();
                    for i in 0..N_OSC {
                        self.gait_phase[i] -= dir * (after[i] - before[i]);
                    }
                }
            }
        }
        self.state.t += dt;
        self.state.targets = self.read_targets(&bounds)?;
        Ok(self.state.targets)
    }

    fn read_targets(&self, bounds: &ExtensionBounds) -> Result<[HubState; N_OSC]> {
        let n = self.layout.n_arcs;
        let (x, r) = (bounds.max_offset, bounds.span);
        let gait: [(f64, f64); N_OSC] = match (&self.network, self.mode) {
            (_, DriveMode::Direct) => {
                std::array::from_fn(|i| (self.gait_phase[i] * 2.0 / n as f64, x))
            }
            (Some(net), DriveMode::Kuramoto) => {
                let out = net.outputs(&[KURAMOTO_SCALE; N_OSC], &[x; N_OSC], n)?;
                out.map(|c| (c.theta, c.offset))
            }
            (Some(net), DriveMode::Hopf) => {
                let a_e = if x > 0.0 { 2.0 * r / x } else { 0.0 };
                let out = net.outputs(&[a_e; N_OSC], &[x; N_OSC], n)?;
                out.map(|c| (c.theta, c.offset))
            }
            (Some(net), DriveMode::Vdp) => {
                let a_e = r * self.cfg.vdp_p_sq.sqrt();
                let out = net.outputs(&[a_e; N_OSC], &[x; N_OSC], n)?;
                std::array::from_fn(|i| (self.gait_phase[i] * 2.0 / n as f64, out[i].offset))
            }
            (None, _) => unreachable!("cpg mode has a network"),
        };
        let (lo, hi) = self.offset_limits;
        Ok(std::array::from_fn(|i| {
            let (theta_g, e) = gait[i];
            HubState::from_command(self.layout.side_sign[i] * theta_g, e.clamp(lo, hi))
        }))
    }
}

fn set_targets(osc: &mut Oscillators, bounds: &ExtensionBounds) {
    match osc {
        Oscillators::Kuramoto { gains, .. } => {
            gains.amplitude = [bounds.span; N_OSC];
            gains.offset = [bounds.max_offset; N_OSC];
        }
        Oscillators::Hopf { gains, .. } => gains.mu = [bounds.max_offset; N_OSC],
        Oscillators::Vdp { .. } => {}
    }
}

fn build_network(
    model: OscillatorModel,
    cfg: &ControllerConfig,
    phase_bias: &Matrix4,
    bounds: &ExtensionBounds,
    phases: &[f64; N_OSC],
) -> Result<Network> {
    let (params, oscillators) = match model {
        OscillatorModel::Kuramoto => {
            let gains = KuramotoParams {
                a_r: cfg.kuramoto_a_r,
                a_x: cfg.kuramoto_a_x,
                amplitude: [bounds.span; N_OSC],
                offset: [bounds.max_offset; N_OSC],
            };
            let states = std::array::from_fn(|i| KuramotoState {
                phase: phases[i],
                amplitude: bounds.span,
                amplitude_rate: 0.0,
                offset: bounds.max_offset,
                offset_rate: 0.0,
            });
            (
                NetworkParams {
                    omega: [0.0; N_OSC],
                    coupling: uniform_coupling(cfg.kuramoto_coupling),
                    phase_bias: *phase_bias,
                },
                Oscillators::Kuramoto { states, gains },
            )
        }
        OscillatorModel::Hopf => {
            let mu = bounds.max_offset;
            let states = std::array::from_fn(|i| HopfState {
                x: mu * phases[i].cos(),
                y: mu * phases[i].sin(),
            });
            (
                NetworkParams {
                    omega: [0.0; N_OSC],
                    coupling: uniform_coupling(cfg.hopf_coupling),
                    phase_bias: transpose(phase_bias),
                },
                Oscillators::Hopf {
                    states,
                    gains: HopfParams {
                        gain: [cfg.hopf_gain; N_OSC],
                        mu: [mu; N_OSC],
                    },
                },
            )
        }
        OscillatorModel::Vdp => {
            let amp = 2.0 * cfg.vdp_p_sq.sqrt();
            let states = std::array::from_fn(|i| VdpState {
                x: amp * phases[i].cos(),
                y: -amp * phases[i].sin(),
            });
            (
                NetworkParams {
                    omega: [0.0; N_OSC],
                    coupling: K_WALK,
                    phase_bias: [[0.0; N_OSC]; N_OSC],
                },
                Oscillators::Vdp {
                    states,
                    gains: VdpParams {
                        gain: [cfg.vdp_gain; N_OSC],
                        p_sq: [cfg.vdp_p_sq; N_OSC],
                    },
                },
            )
        }
    };
    Network::new(params, oscillators)
}
