//! Scenario files, seeded batches of trials and the summary tables.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{height_band, Controller, ControllerConfig, DriveCommand, DriveMode, RobotLayout};
use crate::error::{Error, Result};
use crate::kinematics::FourBarConfig;
use crate::oscillators::{OscillatorModel, N_OSC};
use crate::sim::{fmt_sig9, metrics, run_trial, ScheduleEntry, TrialLog, TrialMetrics, TrialSetup};
use crate::terrain::{Terrain, TerrainFeature};

pub const DEFAULT_TRIALS: usize = 12;
/// The only wheel preset shipped.
pub const PROTOTYPE: &str = "prototype";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    pub track_width: f64,
    pub wheelbase: f64,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        Self {
            track_width: 0.3,
            wheelbase: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub oscillator: DriveMode,
    #[serde(default = "prototype_name")]
    pub wheel: String,
    #[serde(default)]
    pub layout: LayoutSpec,
    #[serde(default)]
    pub terrain: Vec<TerrainFeature>,
    pub schedule: Vec<ScheduleEntry>,
    /// Seconds.
    pub duration: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
    #[serde(default)]
    pub controller: ControllerConfig,
}

fn prototype_name() -> String {
    PROTOTYPE.into()
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_output() -> String {
    "results".into()
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(vec![e.message().to_string()]))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let s = Self::from_toml(&text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn wheel_config(&self) -> Result<FourBarConfig> {
        match self.wheel.as_str() {
            PROTOTYPE => Ok(FourBarConfig::prototype()),
            other => Err(Error::Validation(vec![format!("wheel: unknown preset '{other}'")])),
        }
    }

    /// Every violated field at once; turning under Van der Pol is reported
    /// separately as unsupported.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let wheel = match self.wheel_config() {
            Ok(w) => Some(w),
            Err(_) => {
                errs.push(format!("wheel: unknown preset '{}'", self.wheel));
                None
            }
        };
        for (name, v) in [
            ("layout.track_width", self.layout.track_width),
            ("layout.wheelbase", self.layout.wheelbase),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive"));
            }
        }
        for (i, f) in self.terrain.iter().enumerate() {
            errs.extend(f.validate(&format!("terrain[{i}]")));
        }
        if self.schedule.is_empty() {
            errs.push("schedule must have at least one entry".into());
        }
        let band = wheel.as_ref().map(height_band);
        let mut last = f64::NEG_INFINITY;
        for (i, e) in self.schedule.iter().enumerate() {
            if !(e.t_start.is_finite() && e.t_start >= 0.0) {
                errs.push(format!("schedule[{i}].t_start must be non-negative"));
            } else if e.t_start < last {
                errs.push(format!("schedule[{i}].t_start is earlier than the entry before"));
            }
            last = last.max(e.t_start);
            for (name, v) in [("v", e.v), ("w", e.w)] {
                if !v.is_finite() {
                    errs.push(format!("schedule[{i}].{name} must be finite"));
                }
            }
            if let Some((lo, hi)) = band {
                if !(e.h >= lo && e.h <= hi) {
                    errs.push(format!("schedule[{i}].h must lie in [{lo}, {hi}] m"));
                }
            }
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            errs.push("duration must be non-negative".into());
        }
        if self.trials < 1 {
            errs.push("trials must be at least 1".into());
        }
        if self.output.is_empty() {
            errs.push("output must name a directory".into());
        }
        errs.extend(self.controller.validate());
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        if self.oscillator == DriveMode::Vdp && self.is_turning() {
            return Err(Error::Unsupported(
                "vdp scenarios must have w = 0 in every schedule entry".into(),
            ));
        }
        Ok(())
    }

    pub fn is_turning(&self) -> bool {
        self.schedule.iter().any(|e| e.w != 0.0)
    }

    fn layout(&self, wheel: &FourBarConfig) -> Result<RobotLayout> {
        RobotLayout::new(self.layout.track_width, self.layout.wheelbase, wheel.n_arcs)
    }

    /// Trial setup for the given starting phases.
    pub fn trial_setup(&self, initial_phases: [f64; N_OSC]) -> Result<TrialSetup> {
        let wheel = self.wheel_config()?;
        Ok(TrialSetup {
            mode: self.oscillator,
            controller: self.controller.clone(),
            layout: self.layout(&wheel)?,
            wheel,
            terrain: Terrain::new(self.terrain.clone())?,
            schedule: self.schedule.clone(),
            duration: self.duration,
            initial_phases,
        })
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `k`: `splitmix64(master ⊕ splitmix64(k))`. Depends only on
/// the master seed and the index.
pub fn trial_seed(master: u64, k: usize) -> u64 {
    splitmix64(master ^ splitmix64(k as u64))
}

/// Starting phases, uniform in `[0, 2π)` per wheel. Synchronized
/// controllers start every wheel from the same draw.
pub fn initial_phases(seed: u64, synchronized: bool) -> [f64; N_OSC] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phases: [f64; N_OSC] = std::array::from_fn(|_| rng.gen_range(0.0..TAU));
    if synchronized {
        phases = [phases[0]; N_OSC];
    }
    phases
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub index: usize,
    pub seed: u64,
    pub phases: [f64; N_OSC],
    pub metrics: TrialMetrics,
}

/// Runs trial `k` of the scenario, reseeded by `master`.
pub fn run_single(scenario: &Scenario, master: u64, k: usize) -> Result<(TrialResult, TrialLog)> {
    let seed = trial_seed(master, k);
    let phases = initial_phases(seed, scenario.controller.synchronized);
    let log = run_trial(&scenario.trial_setup(phases)?)?;
    let m = metrics(&log)?;
    Ok((
        TrialResult {
            index: k,
            seed,
            phases,
            metrics: m,
        },
        log,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub oscillator: DriveMode,
    pub trials: usize,
    pub height_mean: f64,
    pub height_sd: f64,
    pub mean_speed: f64,
    pub final_offset_norm: Option<f64>,
    /// Straight runs: mean squared lateral end offset. Turning runs: mean
    /// squared distance of the end points from their centroid.
    pub final_position_variance: f64,
    pub turn_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub trials: Vec<TrialResult>,
    pub aggregate: Aggregate,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let all: Option<Vec<f64>> = v.collect();
    all.filter(|a| !a.is_empty()).map(|a| mean(a.into_iter()))
}

pub fn aggregate(mode: DriveMode, turning: bool, trials: &[TrialResult]) -> Aggregate {
    let ms = || trials.iter().map(|t| t.metrics);
    let variance = if turning {
        let cx = mean(ms().map(|m| m.final_x));
        let cy = mean(ms().map(|m| m.final_y));
        mean(ms().map(|m| (m.final_x - cx).powi(2) + (m.final_y - cy).powi(2)))
    } else {
        mean(ms().map(|m| m.final_y * m.final_y))
    };
    Aggregate {
        oscillator: mode,
        trials: trials.len(),
        height_mean: mean(ms().map(|m| m.height_mean)),
        height_sd: mean(ms().map(|m| m.height_sd)),
        mean_speed: mean(ms().map(|m| m.mean_speed)),
        final_offset_norm: mean_opt(ms().map(|m| m.final_offset_norm)),
        final_position_variance: variance,
        turn_radius: mean_opt(ms().map(|m| m.turn_radius)),
    }
}

/// All trials of a validated scenario, in parallel, returned in index order.
pub fn run_suite(scenario: &Scenario) -> Result<SuiteResult> {
    scenario.validate()?;
    let trials = (0..scenario.trials)
        .into_par_iter()
        .map(|k| run_single(scenario, scenario.seed, k).map(|(r, _)| r))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(scenario.oscillator, scenario.is_turning(), &trials);
    Ok(SuiteResult { trials, aggregate })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_sig9).unwrap_or_default()
}

pub const TRIALS_HEADER: &str = "trial,seed,phase0,phase1,phase2,phase3,height_mean,height_sd,mean_speed,final_x,final_y,final_offset_norm,turn_radius";
pub const AGGREGATE_HEADER: &str = "oscillator,trials,height_mean,height_sd,mean_speed,final_offset_norm,final_position_variance,turn_radius";

pub fn trials_csv(trials: &[TrialResult]) -> String {
    let mut out = format!("{TRIALS_HEADER}\n");
    for t in trials {
        let m = &t.metrics;
        let phases: Vec<String> = t.phases.iter().map(|&p| fmt_sig9(p)).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            t.index,
            t.seed,
            phases.join(","),
            fmt_sig9(m.height_mean),
            fmt_sig9(m.height_sd),
            fmt_sig9(m.mean_speed),
            fmt_sig9(m.final_x),
            fmt_sig9(m.final_y),
            opt(m.final_offset_norm),
            opt(m.turn_radius),
        );
    }
    out
}

pub fn aggregate_row(a: &Aggregate) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        a.oscillator.name(),
        a.trials,
        fmt_sig9(a.height_mean),
        fmt_sig9(a.height_sd),
        fmt_sig9(a.mean_speed),
        opt(a.final_offset_norm),
        fmt_sig9(a.final_position_variance),
        opt(a.turn_radius),
    )
}

pub fn aggregate_csv(a: &Aggregate) -> String {
    format!("{AGGREGATE_HEADER}\n{}\n", aggregate_row(a))
}

/// Outcome of one oscillator in a comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok(Aggregate),
    Divergence(String),
    Unsupported(String),
}

impl RowStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RowStatus::Ok(_) => "ok",
            RowStatus::Divergence(_) => "divergence",
            RowStatus::Unsupported(_) => "unsupported",
        }
    }
}

pub const COMPARE_HEADER: &str = "oscillator,status,height_mean,height_sd,mean_speed,final_offset_norm";

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<(DriveMode, RowStatus)>,
}

impl Comparison {
    pub fn get(&self, mode: DriveMode) -> Option<&RowStatus> {
        self.rows.iter().find(|(m, _)| *m == mode).map(|(_, r)| r)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{COMPARE_HEADER}\n");
        for (mode, row) in &self.rows {
            let cells = match row {
                RowStatus::Ok(a) => format!(
                    "{},{},{},{}",
                    fmt_sig9(a.height_mean),
                    fmt_sig9(a.height_sd),
                    fmt_sig9(a.mean_speed),
                    opt(a.final_offset_norm)
                ),
                _ => ",,,".into(),
            };
            let _ = writeln!(out, "{},{},{cells}", mode.name(), row.label());
        }
        out
    }
}

/// Runs the template once per oscillator. Divergence and unsupported
/// combinations become flagged rows; other errors abort.
pub fn compare_oscillators(template: &Scenario) -> Result<Comparison> {
    let mut probe = template.clone();
    probe.oscillator = DriveMode::Direct;
    probe.validate()?;
    let mut rows = Vec::new();
    for mode in DriveMode::ALL {
        let mut s = template.clone();
        s.oscillator = mode;
        let row = match run_suite(&s) {
            Ok(r) => RowStatus::Ok(r.aggregate),
            Err(e) if e.is_divergence() => RowStatus::Divergence(e.to_string()),
            Err(e) if matches!(e.root(), Error::Unsupported(_)) => {
                RowStatus::Unsupported(e.to_string())
            }
            Err(e) => return Err(e),
        };
        rows.push((mode, row));
    }
    Ok(Comparison { rows })
}

/// Uneven-terrain family: three uniform-noise and three furrowed fields.
pub fn noise_terrains() -> Vec<(String, TerrainFeature)> {
    let mut out = Vec::new();
    for (kind, anisotropy) in [("uniform", 1.0), ("furrow", 4.0)] {
        for seed in 1..=3u64 {
            out.push((
                format!("{kind}{seed}"),
                TerrainFeature::Noise {
                    seed,
                    amplitude: 0.02,
                    wavelength: 0.4,
                    anisotropy,
                },
            ));
        }
    }
    out
}

pub const VARIANCE_HEADER: &str = "terrain,oscillator,test,trials,final_position_variance";

/// Final-position variance of every terrain, oscillator and test: straight
/// runs for all three networks, turning runs for Kuramoto and Hopf.
pub fn variance_table(master_seed: u64, trials: usize, duration: f64) -> Result<String> {
    let mut jobs = Vec::new();
    for (name, feature) in noise_terrains() {
        for (test, w) in [("straight", 0.0), ("turn", 0.1)] {
            for mode in [DriveMode::Kuramoto, DriveMode::Hopf, DriveMode::Vdp] {
                if w != 0.0 && mode == DriveMode::Vdp {
                    continue;
                }
                jobs.push((
                    name.clone(),
                    test,
                    Scenario {
                        oscillator: mode,
                        wheel: PROTOTYPE.into(),
                        layout: LayoutSpec::default(),
                        terrain: vec![feature.clone()],
                        schedule: vec![ScheduleEntry {
                            t_start: 0.0,
                            v: 0.1,
                            w,
                            h: 0.1,
                        }],
                        duration,
                        trials,
                        seed: master_seed,
                        output: default_output(),
                        controller: ControllerConfig::default(),
                    },
                ));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|(name, test, s)| {
            let a = run_suite(s)?.aggregate;
            Ok(format!(
                "{name},{},{test},{},{}",
                s.oscillator.name(),
                a.trials,
                fmt_sig9(a.final_position_variance)
            ))
        })
        .collect::<Result<Vec<String>>>()?;
    let mut out = format!("{VARIANCE_HEADER}\n");
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    Ok(out)
}

pub const TRACE_HEADER: &str = "t,i,phase,theta,e,state0,state1";

/// Reference command for oscillator traces: 0.1 m/s straight at 0.1 m.
pub const TRACE_COMMAND: (f64, f64, f64) = (0.1, 0.0, 0.1);

/// Oscillator trace of `model` driving the prototype robot at the reference
/// command, sampled every `dt` from deliberately unlocked phases.
pub fn trace_csv(model: OscillatorModel, duration: f64, dt: f64) -> Result<String> {
    if !(dt > 0.0 && dt.is_finite()) || !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::Validation(vec!["duration and dt must be positive".into()]));
    }
    let mode = match model {
        OscillatorModel::Kuramoto => DriveMode::Kuramoto,
        OscillatorModel::Hopf => DriveMode::Hopf,
        OscillatorModel::Vdp => DriveMode::Vdp,
    };
    let cfg = ControllerConfig {
        dt,
        substeps: 1,
        ..Default::default()
    };
    let wheel = FourBarConfig::prototype();
    let layout = RobotLayout::new(0.3, 0.3, wheel.n_arcs)?;
    let (v, w, h) = TRACE_COMMAND;
    let cmd = DriveCommand::new(v, w, h);
    let mut ctl = Controller::new(mode, cfg, layout, wheel, cmd, [0.0, 0.5, 1.0, 1.5])?;
    let steps = (duration / dt + 1e-9).floor() as usize;
    let mut out = format!("{TRACE_HEADER}\n");
    let mut targets = ctl.state().targets;
    for k in 0..=steps {
        if k > 0 {
            targets = ctl.tick(cmd)?;
        }
        let net = ctl.network().expect("oscillator modes have a network");
        let phases = net.phases();
        for i in 0..N_OSC {
            let (s0, s1) = net.oscillators.trace_components(i);
            let _ = writeln!(
                out,
                "{},{i},{},{},{},{},{}",
                fmt_sig9(k as f64 * dt),
                fmt_sig9(phases[i]),
                fmt_sig9(targets[i].phi_outer),
                fmt_sig9(targets[i].offset()),
                fmt_sig9(s0),
                fmt_sig9(s1)
            );
        }
    }
    Ok(out)
}
