//! Four-bar leg-wheel mechanism: inverse and forward kinematics, the
//! phase-offset profile for a tip gliding at constant height, and
//! quasi-static hub torques.
//!
//! Joints, in the wheel frame centered on the hub axis `D` (y up):
//!
//! * `A`: arc pivot on the outer hub, `|DA|` from the center at angle `φ_O`
//! * `C`: link anchor on the inner hub, `|DC|` from the center
//! * `B`: link/arc joint, `|AB|` from `A`, rotated `α_AB` from the arc chord
//! * `P`: arc tip, `|AP|` from `A` along the arc chord
//!
//! The chain is solved as two stacked two-link arms. Both arms use the
//! negative-cosine elbow of [`two_link_ik`]; for the leg to open outward
//! with that elbow the arms are solved in the mirror image of the wheel
//! frame (y down). Hub phases are reported back in the wheel frame, where
//! the hub offset `e = φ_I − φ_O` grows as the leg extends.

use std::f64::consts::PI;

use nalgebra::Vector2;

use crate::error::{Error, IkPass, Result};

pub type Vec2 = Vector2<f64>;

/// Moment arms (m) below this are singular.
pub const SINGULAR_ARM: f64 = 1e-9;

/// Number of heights probed when a configuration is validated.
pub const VALIDATION_SAMPLES: usize = 64;

const REACH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanetaryGear {
    pub sun_teeth: u32,
    pub planet_teeth: u32,
    pub ring_teeth: u32,
}

impl PlanetaryGear {
    pub fn new(sun_teeth: u32, planet_teeth: u32, ring_teeth: u32) -> Result<Self> {
        if sun_teeth == 0 || planet_teeth == 0 || ring_teeth == 0 {
            return Err(Error::domain("gear tooth counts must be positive"));
        }
        Ok(Self {
            sun_teeth,
            planet_teeth,
            ring_teeth,
        })
    }

    /// Whether the counts close into a physical planetary set
    /// (ring = sun + 2 planet).
    pub fn is_meshing(&self) -> bool {
        self.ring_teeth == self.sun_teeth + 2 * self.planet_teeth
    }
}

/// Link lengths in meters, angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct FourBarConfig {
    pub pivot_ab: f64,
    pub outer_hub_da: f64,
    pub link_cb: f64,
    pub inner_hub_dc: f64,
    pub arc_ap: f64,
    pub tip_radius: f64,
    pub arc_mount_angle: f64,
    /// Angle of `DC` ahead of the inner hub phase. Chosen so that the hub
    /// offset reads zero when the wheel is fully collapsed.
    pub inner_hub_phase_ref: f64,
    /// Declared working band of tip distances `|DP|`.
    pub reach_min: f64,
    pub reach_max: f64,
    pub n_arcs: u32,
    pub gear: Option<PlanetaryGear>,
}

impl FourBarConfig {
    /// The prototype wheel: five arcs, collapsed when the tip sits on the
    /// outer hub circle, working up to a 125 mm tip reach.
    pub fn prototype() -> Self {
        let mut cfg = Self {
            pivot_ab: 0.015,
            outer_hub_da: 0.065,
            link_cb: 0.0453,
            inner_hub_dc: 0.028,
            arc_ap: 0.0623,
            tip_radius: 0.008,
            arc_mount_angle: 59.4_f64.to_radians(),
            inner_hub_phase_ref: 0.0,
            reach_min: 0.065,
            reach_max: 0.125,
            n_arcs: 5,
            gear: Some(PlanetaryGear {
                sun_teeth: 24,
                planet_teeth: 29,
                ring_teeth: 82,
            }),
        };
        let collapsed = wheel_ik(Vec2::new(0.0, -cfg.reach_min), &cfg)
            .expect("prototype wheel collapses")
            .offset();
        cfg.inner_hub_phase_ref = collapsed;
        cfg.validate().expect("prototype wheel is valid");
        cfg
    }

    /// Checks link lengths and that the composed IK solves across the
    /// declared band.
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("pivot_ab", self.pivot_ab),
            ("outer_hub_da", self.outer_hub_da),
            ("link_cb", self.link_cb),
            ("inner_hub_dc", self.inner_hub_dc),
            ("arc_ap", self.arc_ap),
            ("reach_min", self.reach_min),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tip_radius >= 0.0) {
            return Err(Error::domain("tip_radius must be non-negative"));
        }
        if !(self.reach_max > self.reach_min) {
            return Err(Error::domain("reach_max must exceed reach_min"));
        }
        if self.n_arcs < 3 {
            return Err(Error::domain("a leg-wheel needs at least 3 arcs"));
        }
        if !self.arc_mount_angle.is_finite() || !self.inner_hub_phase_ref.is_finite() {
            return Err(Error::domain("mechanism angles must be finite"));
        }
        for k in 0..VALIDATION_SAMPLES {
            let s = k as f64 / (VALIDATION_SAMPLES - 1) as f64;
            let h = self.reach_min + s * (self.reach_max - self.reach_min);
            wheel_ik(Vec2::new(0.0, -h), self)?;
        }
        Ok(())
    }

    /// Offsets at the collapsed and fully extended ends of the band.
    pub fn offset_interval(&self) -> Result<(f64, f64)> {
        let lo = wheel_ik(Vec2::new(0.0, -self.reach_min), self)?.offset();
        let hi = wheel_ik(Vec2::new(0.0, -self.reach_max), self)?.offset();
        Ok((lo.min(hi), lo.max(hi)))
    }

    /// Angle between adjacent arcs, `2π / n_arcs`.
    pub fn step_angle(&self) -> f64 {
        2.0 * PI / self.n_arcs as f64
    }
}

/// Outer and inner hub phases of one wheel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HubState {
    pub phi_outer: f64,
    pub phi_inner: f64,
}

impl HubState {
    pub fn new(phi_outer: f64, phi_inner: f64) -> Self {
        Self {
            phi_outer,
            phi_inner,
        }
    }

    /// Hub state for a wheel rotation `theta` and offset `e`.
    pub fn from_command(theta: f64, offset: f64) -> Self {
        Self::new(theta, theta + offset)
    }

    /// `e = φ_I − φ_O`.
    pub fn offset(&self) -> f64 {
        self.phi_inner - self.phi_outer
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipLoad {
    pub force: Vec2,
}

/// Joint positions in the wheel frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linkage {
    pub a: Vec2,
    pub b: Vec2,
    pub c: Vec2,
    pub p: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub x: f64,
    pub offset: f64,
    pub phi_outer: f64,
    pub phi_inner: f64,
}

/// Hub offsets bounding a step at a given height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionBounds {
    /// Offset with the contact furthest from the hub (`X`).
    pub max_offset: f64,
    /// `X` minus the offset with the contact directly below the hub (`R`).
    pub span: f64,
}

impl ExtensionBounds {
    pub fn min_offset(&self) -> f64 {
        self.max_offset - self.span
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubTorques {
    pub inner: f64,
    pub outer: f64,
    /// Tension in the link member.
    pub link_tension: f64,
}

#[inline]
fn unit(angle: f64) -> Vec2 {
    Vec2::new(angle.cos(), angle.sin())
}

#[inline]
fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

#[inline]
fn mirror(v: Vec2) -> Vec2 {
    Vec2::new(v.x, -v.y)
}

fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Two-link planar arm, negative-cosine elbow. Returns `(θ1, θ2)`.
pub fn two_link_ik(target: Vec2, l1: f64, l2: f64) -> Result<(f64, f64)> {
    let d2 = target.norm_squared();
    let d = d2.sqrt();
    let c = (d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !(-1.0 - REACH_TOL..=1.0 + REACH_TOL).contains(&c) {
        let deficit = if d > l1 + l2 {
            d - (l1 + l2)
        } else {
            (l1 - l2).abs() - d
        };
        return Err(Error::OutOfWorkspace {
            pass: IkPass::OuterArm,
            deficit,
        });
    }
    let theta2 = -c.clamp(-1.0, 1.0).acos();
    let theta1 =
        target.y.atan2(target.x) - (l2 * theta2.sin()).atan2(l1 + l2 * theta2.cos());
    Ok((theta1, theta2))
}

fn tag_pass(err: Error, pass: IkPass) -> Error {
    match err {
        Error::OutOfWorkspace { deficit, .. } => Error::OutOfWorkspace { pass, deficit },
        other => other,
    }
}

/// Hub phases placing the arc tip at `tip` (wheel frame, relative to `D`).
pub fn wheel_ik(tip: Vec2, cfg: &FourBarConfig) -> Result<HubState> {
    let reach = tip.norm();
    if reach < cfg.reach_min - REACH_TOL {
        return Err(Error::OutOfWorkspace {
            pass: IkPass::ExtensionBand,
            deficit: cfg.reach_min - reach,
        });
    }
    if reach > cfg.reach_max + REACH_TOL {
        return Err(Error::OutOfWorkspace {
            pass: IkPass::ExtensionBand,
            deficit: reach - cfg.reach_max,
        });
    }
    let tip_m = mirror(tip);
    let (outer, elbow) = two_link_ik(tip_m, cfg.outer_hub_da, cfg.arc_ap)
        .map_err(|e| tag_pass(e, IkPass::OuterArm))?;
    let a_m = unit(outer) * cfg.outer_hub_da;
    let b_m = a_m + unit(outer + elbow - cfg.arc_mount_angle) * cfg.pivot_ab;
    let (inner, _) = two_link_ik(b_m, cfg.inner_hub_dc, cfg.link_cb)
        .map_err(|e| tag_pass(e, IkPass::InnerArm))?;
    // back to the wheel frame: mirroring negates every angle
    let phi_outer = -outer;
    let offset = wrap_pi(outer - inner) - cfg.inner_hub_phase_ref;
    Ok(HubState::from_command(phi_outer, offset))
}

/// Joint positions for the given hub phases, on the same assembly branch
/// [`wheel_ik`] solves for.
pub fn wheel_fk(hub: HubState, cfg: &FourBarConfig) -> Result<Linkage> {
    let a = unit(hub.phi_outer) * cfg.outer_hub_da;
    let c = unit(hub.phi_inner + cfg.inner_hub_phase_ref) * cfg.inner_hub_dc;
    let b = circle_intersection(a, cfg.pivot_ab, c, cfg.link_cb, &c)?;
    let ab = b - a;
    let chord = ab.y.atan2(ab.x) - cfg.arc_mount_angle;
    let p = a + unit(chord) * cfg.arc_ap;
    Ok(Linkage { a, b, c, p })
}

/// Intersection of circles (c0, r0) and (c1, r1) lying counter-clockwise of
/// `ray` when seen from `c1`.
fn circle_intersection(c0: Vec2, r0: f64, c1: Vec2, r1: f64, ray: &Vec2) -> Result<Vec2> {
    let delta = c1 - c0;
    let d = delta.norm();
    if d < SINGULAR_ARM || d > r0 + r1 || d < (r0 - r1).abs() {
        return Err(Error::Singular(format!(
            "link circles do not intersect (separation {d:.6e} m)"
        )));
    }
    let along = (d * d + r0 * r0 - r1 * r1) / (2.0 * d);
    let half = (r0 * r0 - along * along).max(0.0).sqrt();
    let base = c0 + delta * (along / d);
    let normal = Vec2::new(-delta.y, delta.x) / d;
    let first = base + normal * half;
    let second = base - normal * half;
    if cross(ray, &(first - c1)) >= cross(ray, &(second - c1)) {
        Ok(first)
    } else {
        Ok(second)
    }
}

/// Hub offset along a horizontal tip path at depth `height` below the hub.
pub fn phase_offset_profile(
    height: f64,
    x_range: (f64, f64),
    samples: usize,
    cfg: &FourBarConfig,
) -> Result<Vec<ProfilePoint>> {
    if samples < 2 {
        return Err(Error::domain("a profile needs at least two samples"));
    }
    let (x_min, x_max) = x_range;
    if !(x_max > x_min) {
        return Err(Error::domain("profile x range must be non-empty"));
    }
    if height >= cfg.reach_max {
        return Err(Error::domain(format!(
            "height {height} m leaves a single-point workspace (max reach {} m)",
            cfg.reach_max
        )));
    }
    (0..samples)
        .map(|k| {
            let x = x_min + (x_max - x_min) * k as f64 / (samples - 1) as f64;
            let hub = wheel_ik(Vec2::new(x, -height), cfg).map_err(|e| {
                Error::ProfileUnreachable {
                    x,
                    source: Box::new(e),
                }
            })?;
            Ok(ProfilePoint {
                x,
                offset: hub.offset(),
                phi_outer: hub.phi_outer,
                phi_inner: hub.phi_inner,
            })
        })
        .collect()
}

/// Offsets at the extremes of one step taken with the tip at depth `height`.
///
/// The contact hands over to the next arc half a step either side of the
/// vertical, so the furthest contact sits at `height / cos(π / n)`, capped
/// by the mechanism's maximum reach.
pub fn extension_bounds(height: f64, cfg: &FourBarConfig) -> Result<ExtensionBounds> {
    if height < cfg.reach_min - REACH_TOL || height > cfg.reach_max + REACH_TOL {
        return Err(Error::OutOfWorkspace {
            pass: IkPass::ExtensionBand,
            deficit: if height < cfg.reach_min {
                cfg.reach_min - height
            } else {
                height - cfg.reach_max
            },
        });
    }
    let height = height.clamp(cfg.reach_min, cfg.reach_max);
    let far = (height / (PI / cfg.n_arcs as f64).cos()).min(cfg.reach_max);
    let near = wheel_ik(Vec2::new(0.0, -height), cfg)?.offset();
    let max_offset = wheel_ik(Vec2::new(0.0, -far), cfg)?.offset();
    Ok(ExtensionBounds {
        max_offset,
        span: max_offset - near,
    })
}

/// Torques the tip load exerts on the hubs, and the link tension.
///
/// Signed counter-clockwise in the wheel frame, so that
/// `τ_I δφ_I + τ_O δφ_O = F_P · δP` for any virtual hub motion.
pub fn quasi_static_torques(
    hub: HubState,
    load: TipLoad,
    cfg: &FourBarConfig,
) -> Result<HubTorques> {
    let Linkage { a, b, c, p } = wheel_fk(hub, cfg)?;
    let link = c - b;
    let link_len = link.norm();
    if link_len < SINGULAR_ARM {
        return Err(Error::Singular("link member has zero length".into()));
    }
    let l_hat = link / link_len;
    let arm = cross(&(b - a), &l_hat);
    if arm.abs() < SINGULAR_ARM {
        return Err(Error::Singular(format!(
            "link aligned with the arc pivot (moment arm {arm:.3e} m)"
        )));
    }
    let f = load.force;
    // arc moment balance about A
    let tension = -cross(&(p - a), &f) / arm;
    let on_link = l_hat * tension;
    Ok(HubTorques {
        inner: cross(&c, &(-on_link)),
        outer: cross(&a, &(on_link + f)),
        link_tension: tension,
    })
}

/// Hub torques with the planetary carrier standing in for the inner hub.
/// Returns `(τ_Ip, τ_Op)`.
pub fn planetary_torques(inner: f64, outer: f64, gear: &PlanetaryGear) -> (f64, f64) {
    let n_r = gear.planet_teeth as f64;
    let n_s = gear.sun_teeth as f64;
    let total = n_r + n_s;
    (inner * n_s / total, outer + inner * n_r / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fk_two_link(t1: f64, t2: f64, l1: f64, l2: f64) -> Vec2 {
        unit(t1) * l1 + unit(t1 + t2) * l2
    }

    /// Hand-sized symmetric mechanism with no phase reference offset.
    fn symmetric_cfg() -> FourBarConfig {
        FourBarConfig {
            inner_hub_phase_ref: 0.0,
            ..FourBarConfig::prototype()
        }
    }

    #[test]
    fn two_link_fully_extended() {
        let (t1, t2) = two_link_ik(Vec2::new(3.0, 0.0), 1.0, 2.0).unwrap();
        assert_eq!(t2, 0.0);
        assert_eq!(t1, 0.0);
    }

    #[test]
    fn two_link_quarter_turn() {
        let (t1, t2) = two_link_ik(Vec2::new(0.0, 2f64.sqrt()), 1.0, 1.0).unwrap();
        assert_relative_eq!(t1, 3.0 * PI / 4.0, epsilon = 1e-12);
        assert_relative_eq!(t2, -PI / 2.0, epsilon = 1e-12);
        let tip = fk_two_link(t1, t2, 1.0, 1.0);
        assert_relative_eq!(tip.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(tip.y, 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn two_link_out_of_reach_reports_deficit() {
        match two_link_ik(Vec2::new(3.5, 0.0), 1.0, 2.0) {
            Err(Error::OutOfWorkspace { deficit, .. }) => {
                assert_relative_eq!(deficit, 0.5, epsilon = 1e-12)
            }
            other => panic!("expected workspace error, got {other:?}"),
        }
        match two_link_ik(Vec2::new(0.25, 0.0), 1.0, 2.0) {
            Err(Error::OutOfWorkspace { deficit, .. }) => {
                assert_relative_eq!(deficit, 0.75, epsilon = 1e-12)
            }
            other => panic!("expected workspace error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn two_link_round_trip(l1 in 0.2f64..2.0, l2 in 0.2f64..2.0, s in 0.0f64..1.0, ang in -PI..PI) {
            let lo = (l1 - l2).abs();
            let d = lo + (l1 + l2 - lo) * (0.001 + 0.998 * s);
            let target = unit(ang) * d;
            let (t1, t2) = two_link_ik(target, l1, l2).unwrap();
            prop_assert!(t2 <= 0.0);
            let back = fk_two_link(t1, t2, l1, l2);
            prop_assert!((back - target).norm() <= 1e-12 * d.max(1.0));
        }

        #[test]
        fn wheel_round_trip(s in 0.0f64..=1.0, ang in -PI..PI) {
            let cfg = FourBarConfig::prototype();
            let reach = cfg.reach_min + s * (cfg.reach_max - cfg.reach_min);
            let tip = unit(ang) * reach;
            let hub = wheel_ik(tip, &cfg).unwrap();
            let link = wheel_fk(hub, &cfg).unwrap();
            prop_assert!((link.p - tip).norm() < 1e-9);
        }

        #[test]
        fn planetary_split_is_linear_and_conserving(ti in -50.0f64..50.0, to in -50.0f64..50.0, k in -3.0f64..3.0) {
            let gear = PlanetaryGear::new(24, 29, 82).unwrap();
            let (ip, op) = planetary_torques(ti, to, &gear);
            prop_assert!(((ip + op) - (ti + to)).abs() <= 1e-12 * (1.0 + ti.abs() + to.abs()));
            let (ip2, op2) = planetary_torques(k * ti, k * to, &gear);
            prop_assert!((ip2 - k * ip).abs() <= 1e-12 * (1.0 + ip.abs() * k.abs()));
            prop_assert!((op2 - k * op).abs() <= 1e-12 * (1.0 + op.abs() * k.abs()));
        }
    }

    #[test]
    fn prototype_is_valid_and_collapses_to_zero_offset() {
        let cfg = FourBarConfig::prototype();
        cfg.validate().unwrap();
        let (lo, hi) = cfg.offset_interval().unwrap();
        assert!(lo.abs() < 1e-12);
        assert!(hi > lo);
        assert!(cfg.gear.unwrap().is_meshing());
    }

    #[test]
    fn out_of_band_tip_names_the_band() {
        let cfg = FourBarConfig::prototype();
        let err = wheel_ik(Vec2::new(0.0, -0.2), &cfg).unwrap_err();
        assert!(matches!(
            err,
            Error::OutOfWorkspace {
                pass: IkPass::ExtensionBand,
                ..
            }
        ));
    }

    #[test]
    fn inner_pass_failure_is_named() {
        // a link member too short to reach joint B anywhere in the band
        let mut cfg = symmetric_cfg();
        cfg.link_cb = 0.005;
        let err = wheel_ik(Vec2::new(0.0, -0.1), &cfg).unwrap_err();
        assert!(matches!(
            err,
            Error::OutOfWorkspace {
                pass: IkPass::InnerArm,
                ..
            }
        ));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_phases_put_hub_joints_on_x_axis() {
        let cfg = symmetric_cfg();
        // that pose is locked for this mechanism, so test the joints directly
        let a = unit(0.0) * cfg.outer_hub_da;
        let c = unit(0.0 + cfg.inner_hub_phase_ref) * cfg.inner_hub_dc;
        assert_eq!(a.y, 0.0);
        assert_eq!(c.y, 0.0);
        assert!(a.x > 0.0 && c.x > 0.0);
        if let Ok(link) = wheel_fk(HubState::new(0.0, 0.0), &cfg) {
            assert_eq!(link.a, a);
            assert_eq!(link.c, c);
        }
    }

    #[test]
    fn max_extension_offset_under_hub() {
        let cfg = FourBarConfig::prototype();
        let tip = Vec2::new(0.0, -cfg.reach_max);
        let hub = wheel_ik(tip, &cfg).unwrap();
        let (_, e_max) = cfg.offset_interval().unwrap();
        assert_relative_eq!(hub.offset(), e_max, epsilon = 1e-12);
        let link = wheel_fk(hub, &cfg).unwrap();
        assert!((link.p - tip).norm() < 1e-9);
    }

    /// Bisection on the offset with forward kinematics as the only model.
    fn offset_for_reach_by_fk(reach: f64, cfg: &FourBarConfig, lo: f64, hi: f64) -> f64 {
        let tip_dist = |e: f64| wheel_fk(HubState::new(0.0, e), cfg).unwrap().p.norm();
        let (mut lo, mut hi) = (lo, hi);
        let increasing = tip_dist(hi) > tip_dist(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (tip_dist(mid) < reach) == increasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn min_extension_offset_matches_fk_bisection() {
        let cfg = FourBarConfig::prototype();
        let hub = wheel_ik(Vec2::new(0.0, -cfg.reach_min), &cfg).unwrap();
        let (e_min, e_max) = cfg.offset_interval().unwrap();
        assert!(e_max - e_min > 0.5);
        let e_oracle = offset_for_reach_by_fk(cfg.reach_min, &cfg, e_min - 0.05, e_min + 0.3);
        assert_relative_eq!(hub.offset(), e_oracle, epsilon = 1e-9);
    }

    #[test]
    fn reach_increases_with_offset() {
        let cfg = FourBarConfig::prototype();
        let (e_min, e_max) = cfg.offset_interval().unwrap();
        let mut last = 0.0;
        for k in 0..=200 {
            let e = e_min + (e_max - e_min) * k as f64 / 200.0;
            let reach = wheel_fk(HubState::new(0.3, 0.3 + e), &cfg).unwrap().p.norm();
            assert!(reach > last, "reach not monotone at e = {e}");
            last = reach;
        }
        assert_relative_eq!(last, cfg.reach_max, epsilon = 1e-9);
    }

    #[test]
    fn tip_moves_continuously_with_inner_phase() {
        let cfg = FourBarConfig::prototype();
        let hub = wheel_ik(Vec2::new(0.02, -0.09), &cfg).unwrap();
        let base = wheel_fk(hub, &cfg).unwrap().p;
        // local Lipschitz constant from a small probe
        let probe = 1e-6;
        let k_local = (wheel_fk(HubState::new(hub.phi_outer, hub.phi_inner + probe), &cfg)
            .unwrap()
            .p
            - base)
            .norm()
            / probe;
        assert!(k_local > 0.0 && k_local < 1.0);
        for delta in [1e-5, 1e-4, 1e-3] {
            let moved = wheel_fk(HubState::new(hub.phi_outer, hub.phi_inner + delta), &cfg)
                .unwrap()
                .p;
            assert!((moved - base).norm() <= 1.1 * k_local * delta);
        }
    }

    #[test]
    fn round_trip_1000_random_tips() {
        use rand::{Rng, SeedableRng};
        let cfg = FourBarConfig::prototype();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let worst = (0..1000)
            .map(|_| {
                let reach = rng.gen_range(cfg.reach_min..=cfg.reach_max);
                let tip = unit(rng.gen_range(-PI..PI)) * reach;
                let hub = wheel_ik(tip, &cfg).unwrap();
                (wheel_fk(hub, &cfg).unwrap().p - tip).norm()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "worst round trip error {worst}");
    }

    #[test]
    fn profile_is_mirror_symmetric_u() {
        let cfg = FourBarConfig::prototype();
        let h = 0.09;
        let a = 0.99 * h * (PI / 5.0).tan();
        let prof = phase_offset_profile(h, (-a, a), 201, &cfg).unwrap();
        for (l, r) in prof.iter().zip(prof.iter().rev()) {
            assert!((l.offset - r.offset).abs() < 1e-9);
        }
        let slopes: Vec<f64> = prof.windows(2).map(|w| w[1].offset - w[0].offset).collect();
        let changes = slopes
            .windows(2)
            .filter(|s| s[0].signum() != s[1].signum())
            .count();
        assert_eq!(changes, 1);
        let argmin = prof
            .iter()
            .min_by(|p, q| p.offset.total_cmp(&q.offset))
            .unwrap();
        assert!(argmin.x.abs() < 1e-12);
    }

    #[test]
    fn profile_rejects_degenerate_height() {
        let cfg = FourBarConfig::prototype();
        assert!(phase_offset_profile(cfg.reach_max, (-0.01, 0.01), 11, &cfg).is_err());
    }

    #[test]
    fn profile_reports_first_unreachable_x() {
        let cfg = FourBarConfig::prototype();
        match phase_offset_profile(0.1, (0.0, 0.2), 21, &cfg) {
            Err(Error::ProfileUnreachable { x, .. }) => {
                // first sample past sqrt(reach_max^2 - h^2) = 0.075
                assert_relative_eq!(x, 0.08, epsilon = 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn profile_repeats_every_step() {
        let cfg = FourBarConfig::prototype();
        let step = cfg.step_angle();
        for x in [-0.05, -0.02, 0.0, 0.03, 0.06] {
            let tip = Vec2::new(x, -0.09);
            let rotated = unit(tip.y.atan2(tip.x) + step) * tip.norm();
            let here = wheel_ik(tip, &cfg).unwrap();
            let next = wheel_ik(rotated, &cfg).unwrap();
            assert!((here.offset() - next.offset()).abs() < 1e-12);
            assert!((wrap_pi(next.phi_outer - here.phi_outer - step)).abs() < 1e-12);
        }
    }

    #[test]
    fn extension_bounds_at_top_of_band_is_zero_span() {
        let cfg = FourBarConfig::prototype();
        let b = extension_bounds(cfg.reach_max, &cfg).unwrap();
        assert!(b.span.abs() < 1e-12);
        assert!(extension_bounds(cfg.reach_max + 0.01, &cfg).is_err());
        assert!(extension_bounds(cfg.reach_min - 0.01, &cfg).is_err());
    }

    #[test]
    fn extension_bounds_vs_profile() {
        let cfg = FourBarConfig::prototype();
        let h = 0.09;
        let b = extension_bounds(h, &cfg).unwrap();
        assert!(b.span > 0.0 && b.max_offset.is_finite());
        let half = h * (PI / 5.0).tan();
        let prof = phase_offset_profile(h, (-half, half), 401, &cfg).unwrap();
        assert_relative_eq!(prof[0].offset, b.max_offset, epsilon = 1e-9);
        assert_relative_eq!(prof[200].offset, b.min_offset(), epsilon = 1e-9);
        // rectified-sine stand-in, sweeping the CPG phase over half a cycle
        let worst = prof
            .iter()
            .map(|p| {
                let angle = (p.x / h).atan();
                let phase = angle / (2.0 * PI / 5.0) * PI;
                let approx = b.min_offset() + b.span * phase.sin().abs();
                (approx - p.offset).abs()
            })
            .fold(0.0, f64::max);
        // the rectified sine is flat where the exact profile is steepest;
        // a little over half the span for the prototype wheel at 90 mm
        assert!(worst > 0.5 * b.span && worst < 0.6 * b.span, "worst {worst} span {}", b.span);
    }

    #[test]
    fn extension_span_ordering_across_heights() {
        let cfg = FourBarConfig::prototype();
        // once the far contact hits the reach limit the span closes up
        let spans: Vec<f64> = [0.11, 0.115, 0.12, 0.124]
            .iter()
            .map(|&h| extension_bounds(h, &cfg).unwrap().span)
            .collect();
        assert!(spans.windows(2).all(|w| w[1] < w[0]));
        let low = extension_bounds(0.07, &cfg).unwrap();
        let mid = extension_bounds(0.09, &cfg).unwrap();
        assert!(low.span < mid.span);
    }

    #[test]
    fn unloaded_arc_has_no_torque() {
        let cfg = FourBarConfig::prototype();
        let hub = wheel_ik(Vec2::new(0.01, -0.1), &cfg).unwrap();
        let t = quasi_static_torques(
            hub,
            TipLoad {
                force: Vec2::zeros(),
            },
            &cfg,
        )
        .unwrap();
        assert_eq!(t.link_tension, 0.0);
        assert_eq!(t.inner, 0.0);
        assert_eq!(t.outer, 0.0);
    }

    #[test]
    fn load_through_pivot_leaves_link_slack() {
        let cfg = FourBarConfig::prototype();
        let hub = wheel_ik(Vec2::new(0.01, -0.1), &cfg).unwrap();
        let link = wheel_fk(hub, &cfg).unwrap();
        let along = (link.p - link.a).normalize() * 12.0;
        let t = quasi_static_torques(hub, TipLoad { force: along }, &cfg).unwrap();
        assert!(t.link_tension.abs() < 1e-9);
    }

    #[test]
    fn torques_match_virtual_work() {
        use rand::{Rng, SeedableRng};
        let cfg = FourBarConfig::prototype();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let reach = rng.gen_range(cfg.reach_min + 0.002..cfg.reach_max - 0.002);
            let tip = unit(rng.gen_range(-PI..PI)) * reach;
            let hub = wheel_ik(tip, &cfg).unwrap();
            let force = Vec2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let t = quasi_static_torques(hub, TipLoad { force }, &cfg).unwrap();
            let h = 1e-6;
            let p_at = |o: f64, i: f64| {
                wheel_fk(HubState::new(hub.phi_outer + o, hub.phi_inner + i), &cfg)
                    .unwrap()
                    .p
            };
            let dp_do = (p_at(h, 0.0) - p_at(-h, 0.0)) / (2.0 * h);
            let dp_di = (p_at(0.0, h) - p_at(0.0, -h)) / (2.0 * h);
            let (d_o, d_i) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let lhs = t.inner * d_i + t.outer * d_o;
            let rhs = force.dot(&(dp_do * d_o + dp_di * d_i));
            let scale = force.norm() * (dp_do.norm() * d_o.abs() + dp_di.norm() * d_i.abs());
            assert!((lhs - rhs).abs() <= 1e-6 * scale, "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn planetary_split_values() {
        let gear = PlanetaryGear::new(24, 29, 82).unwrap();
        let (ip, op) = planetary_torques(1.0, 0.0, &gear);
        assert_relative_eq!(ip, 24.0 / 53.0, epsilon = 1e-15);
        assert_relative_eq!(op, 29.0 / 53.0, epsilon = 1e-15);
        assert_eq!(planetary_torques(0.0, 2.5, &gear), (0.0, 2.5));
    }
}
