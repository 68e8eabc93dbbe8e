use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use legwheel::geometry::{design_table, design_table_csv};
use legwheel::harness::{
    aggregate_csv, compare_oscillators, run_single, run_suite, trace_csv, trials_csv, Scenario,
};
use legwheel::kinematics::{
    phase_offset_profile, planetary_torques, quasi_static_torques, FourBarConfig, HubState,
    TipLoad, Vec2,
};
use legwheel::oscillators::OscillatorModel;
use legwheel::sim::fmt_sig9;
use legwheel::{Error, Result};

#[derive(Parser)]
#[command(name = "legwheel", about = "Leg-wheel robot kinematics, CPG control and simulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Arc-wheel design table.
    Geometry {
        #[arg(long, default_value_t = 3)]
        n_min: u32,
        #[arg(long, default_value_t = 8)]
        n_max: u32,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 2)]
        decimals: u32,
    },
    /// Hub offset along a straight tip path at fixed depth.
    IkProfile {
        #[arg(long, allow_hyphen_values = true)]
        height: f64,
        #[arg(long, allow_hyphen_values = true)]
        x_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        x_max: f64,
        #[arg(long, default_value_t = 101)]
        samples: usize,
    },
    /// Hub torques for a tip load.
    Torque {
        #[arg(long, allow_hyphen_values = true)]
        fx: f64,
        #[arg(long, allow_hyphen_values = true)]
        fy: f64,
        #[arg(long, allow_hyphen_values = true)]
        phi_o: f64,
        #[arg(long, allow_hyphen_values = true)]
        phi_i: f64,
        #[arg(long)]
        planetary: bool,
    },
    /// Oscillator network trace.
    Trace {
        #[arg(long, value_parser = parse_model)]
        model: OscillatorModel,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
    /// One trial; writes the log and prints its metrics.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// All trials of a scenario.
    Suite {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// The scenario once per oscillator.
    Compare {
        #[arg(long)]
        template: PathBuf,
    },
}

fn parse_model(s: &str) -> std::result::Result<OscillatorModel, String> {
    match s {
        "kuramoto" => Ok(OscillatorModel::Kuramoto),
        "hopf" => Ok(OscillatorModel::Hopf),
        "vdp" => Ok(OscillatorModel::Vdp),
        _ => Err(format!("unknown model '{s}' (kuramoto, hopf, vdp)")),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn run(cmd: Cmd) -> Result<String> {
    match cmd {
        Cmd::Geometry {
            n_min,
            n_max,
            radius,
            decimals,
        } => Ok(design_table_csv(&design_table(n_min..=n_max, radius)?, decimals)),
        Cmd::IkProfile {
            height,
            x_min,
            x_max,
            samples,
        } => {
            let pts = phase_offset_profile(height, (x_min, x_max), samples, &FourBarConfig::prototype())?;
            let mut out = String::from("x,e,phi_O,phi_I\n");
            for p in pts {
                out += &format!(
                    "{},{},{},{}\n",
                    fmt_sig9(p.x),
                    fmt_sig9(p.offset),
                    fmt_sig9(p.phi_outer),
                    fmt_sig9(p.phi_inner)
                );
            }
            Ok(out)
        }
        Cmd::Torque {
            fx,
            fy,
            phi_o,
            phi_i,
            planetary,
        } => {
            let cfg = FourBarConfig::prototype();
            let t = quasi_static_torques(
                HubState::new(phi_o, phi_i),
                TipLoad { force: Vec2::new(fx, fy) },
                &cfg,
            )?;
            let split = if planetary {
                let gear = cfg
                    .gear
                    .ok_or_else(|| Error::Unsupported("wheel has no planetary gear".into()))?;
                let (ip, op) = planetary_torques(t.inner, t.outer, &gear);
                format!("{},{}", fmt_sig9(ip), fmt_sig9(op))
            } else {
                ",".into()
            };
            Ok(format!(
                "tau_I,tau_O,tau_Ip,tau_Op,F_L\n{},{},{split},{}\n",
                fmt_sig9(t.inner),
                fmt_sig9(t.outer),
                fmt_sig9(t.link_tension)
            ))
        }
        Cmd::Trace { model, duration, dt } => trace_csv(model, duration, dt),
        Cmd::Simulate { scenario, seed, out } => {
            let s = Scenario::load(&scenario)?;
            let (result, log) = run_single(&s, seed.unwrap_or(s.seed), 0)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&s.output));
            write(&dir, "log.csv", &log.to_csv())?;
            let table = trials_csv(std::slice::from_ref(&result));
            write(&dir, "metrics.csv", &table)?;
            Ok(table)
        }
        Cmd::Suite { scenario } => {
            let s = Scenario::load(&scenario)?;
            let r = run_suite(&s)?;
            let dir = PathBuf::from(&s.output);
            write(&dir, "trials.csv", &trials_csv(&r.trials))?;
            let agg = aggregate_csv(&r.aggregate);
            write(&dir, "aggregate.csv", &agg)?;
            Ok(agg)
        }
        Cmd::Compare { template } => {
            let text = fs::read_to_string(&template)
                .map_err(|e| Error::Io(format!("{}: {e}", template.display())))?;
            let s = Scenario::from_toml(&text)?;
            let table = compare_oscillators(&s)?.to_csv();
            write(Path::new(&s.output), "compare.csv", &table)?;
            Ok(table)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_divergence() {
                ExitCode::from(3)
            } else if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
