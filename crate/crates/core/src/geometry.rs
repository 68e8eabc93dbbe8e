//! Design-level geometry of an n-arc transformable wheel.
//!
//! The rim of a round wheel of radius `r` is split into `n` equal arcs that
//! swing out about one end to become legs. Fully extended, each leg reaches
//! `r + L_arc` from the hub and the wheel rolls like an n-spoke polygon.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use crate::error::{Error, Result};

/// Smallest and largest arc count accepted by [`design_table`].
pub const TABLE_N_MIN: u32 = 3;
pub const TABLE_N_MAX: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcWheelSpec {
    n_arcs: u32,
    radius: f64,
}

impl ArcWheelSpec {
    pub fn new(n_arcs: u32, radius: f64) -> Result<Self> {
        if n_arcs < 3 {
            return Err(Error::domain(format!(
                "an arc wheel needs at least 3 arcs, got {n_arcs}"
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::domain(format!(
                "wheel radius must be positive, got {radius}"
            )));
        }
        Ok(Self { n_arcs, radius })
    }

    pub fn n_arcs(&self) -> u32 {
        self.n_arcs
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Angle subtended by one arc, `2π / n`.
    pub fn arc_angle(&self) -> f64 {
        2.0 * PI / self.n_arcs as f64
    }
}

/// Lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryMetrics {
    pub arc_length: f64,
    pub step_length: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl GeometryMetrics {
    /// Peak-to-peak hub height variation when rolling on extended legs.
    pub fn h_span(&self) -> f64 {
        self.h_max - self.h_min
    }

    fn scaled(&self, k: f64) -> Self {
        Self {
            arc_length: self.arc_length * k,
            step_length: self.step_length * k,
            h_min: self.h_min * k,
            h_max: self.h_max * k,
        }
    }
}

pub fn wheel_geometry(spec: ArcWheelSpec) -> GeometryMetrics {
    let r = spec.radius;
    let alpha = spec.arc_angle();
    let arc_length = (2.0 * r * r * (1.0 - alpha.cos())).sqrt();
    let reach = r + arc_length;
    GeometryMetrics {
        arc_length,
        step_length: 2.0 * reach * (alpha / 2.0).sin(),
        h_min: reach * (alpha / 2.0).cos(),
        h_max: reach,
    }
}

/// One row per arc count in `n_range`, lengths for wheel radius `radius`.
///
/// An empty range yields an empty table.
pub fn design_table(
    n_range: RangeInclusive<u32>,
    radius: f64,
) -> Result<Vec<(u32, GeometryMetrics)>> {
    if n_range.is_empty() {
        return Ok(Vec::new());
    }
    if *n_range.start() < TABLE_N_MIN || *n_range.end() > TABLE_N_MAX {
        return Err(Error::domain(format!(
            "arc count range {}..={} outside [{TABLE_N_MIN}, {TABLE_N_MAX}]",
            n_range.start(),
            n_range.end()
        )));
    }
    // rejects bad radii up front
    ArcWheelSpec::new(*n_range.start(), radius)?;
    n_range
        .map(|n| {
            let unit = wheel_geometry(ArcWheelSpec::new(n, 1.0)?);
            Ok((n, unit.scaled(radius)))
        })
        .collect()
}

/// Round half away from zero at `decimals` places (round-half-up for the
/// positive table values). Decimal ties such as 1.365, which are stored a hair
/// below the tie, still round up.
pub fn round_half_up(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = value.abs() * scale * (1.0 + 4.0 * f64::EPSILON);
    (scaled + 0.5).floor() * value.signum() / scale
}

/// Renders the table as CSV with header `n,L_step,h_min,h_span`.
pub fn design_table_csv(rows: &[(u32, GeometryMetrics)], decimals: u32) -> String {
    let mut out = String::from("n,L_step,h_min,h_span\n");
    let d = decimals as usize;
    for (n, m) in rows {
        out.push_str(&format!(
            "{n},{:.d$},{:.d$},{:.d$}\n",
            round_half_up(m.step_length, decimals),
            round_half_up(m.h_min, decimals),
            round_half_up(m.h_span(), decimals),
        ));
    }
    out
}
