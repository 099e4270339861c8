//! The rendezvous hybrid automaton and its linear safety properties.
//!
//! Three modes: ProxA (100 m to 1000 m, gain K1), ProxB (inside 100 m,
//! gain K2) and Passive (thrusters off). ProxA/ProxB switch urgently on an
//! octagonal approximation of the 100 m circle; both rendezvous modes may go
//! passive at any time in the clock window `[t1, t2]`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box, HalfSpace, PlanarRegion};
use crate::lqr::GainMatrix;
use crate::orbital::{cwh_matrices, OrbitalParams};

/// Separation at which ProxA hands over to ProxB, m.
pub const RANGE_THRESHOLD: f64 = 100.0;

/// State indices.
pub const X: usize = 0;
pub const Y: usize = 1;
pub const VX: usize = 2;
pub const VY: usize = 3;
pub const UX: usize = 4;
pub const UY: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeId {
    ProxA,
    ProxB,
    Passive,
}

impl ModeId {
    pub const ALL: [ModeId; 3] = [ModeId::ProxA, ModeId::ProxB, ModeId::Passive];

    pub fn as_str(self) -> &'static str {
        match self {
            ModeId::ProxA => "prox_a",
            ModeId::ProxB => "prox_b",
            ModeId::Passive => "passive",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_rendezvous(self) -> bool {
        self != ModeId::Passive
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModeId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown mode {s:?}")))
    }
}

/// Model variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// 4-dim closed-loop CWH.
    #[serde(rename = "lin_prox")]
    LinProx,
    /// 6-dim: closed-loop CWH plus thrust states driven by `d/dt(-m_c K x)`.
    #[serde(rename = "lin_prox_th_tracking")]
    LinProxThTracking,
    /// 6-dim: open-loop CWH driven by explicit thrust states.
    #[serde(rename = "lin_prox_th_explicit")]
    LinProxThExplicit,
    /// Nonlinear relative dynamics with the same switched controller.
    #[serde(rename = "nlin_prox")]
    NLinProx,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::LinProx,
        Variant::LinProxThTracking,
        Variant::LinProxThExplicit,
        Variant::NLinProx,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::LinProx => "lin_prox",
            Variant::LinProxThTracking => "lin_prox_th_tracking",
            Variant::LinProxThExplicit => "lin_prox_th_explicit",
            Variant::NLinProx => "nlin_prox",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Variant::LinProx | Variant::NLinProx => 4,
            Variant::LinProxThTracking | Variant::LinProxThExplicit => 6,
        }
    }

    pub fn has_thrust_states(self) -> bool {
        self.dim() == 6
    }

    pub fn is_linear(self) -> bool {
        self != Variant::NLinProx
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown variant {s:?}")))
    }
}

/// Spatial part of an invariant or guard.
#[derive(Debug, Clone, PartialEq)]
pub enum Spatial {
    Anywhere,
    /// Conjunction of the half-spaces.
    Inside(Vec<HalfSpace>),
    /// Outside the interior of the polytope (a disjunction of complements).
    Outside(Vec<HalfSpace>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub spatial: Spatial,
    pub clock_window: Option<(f64, f64)>,
    pub urgent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invariant {
    pub spatial: Spatial,
    pub clock_min: Option<f64>,
    pub clock_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub id: ModeId,
    /// Flow matrix of `ẋ = M x`.
    pub flow: DMatrix<f64>,
    pub invariant: Invariant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub src: ModeId,
    pub dst: ModeId,
    pub guard: Guard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridAutomaton {
    pub variant: Variant,
    pub dim: usize,
    pub modes: Vec<Mode>,
    pub transitions: Vec<Transition>,
    /// Gains (acceleration units) of ProxA and ProxB.
    pub gains: [DMatrix<f64>; 2],
    pub chaser_mass: f64,
}

impl HybridAutomaton {
    pub fn mode(&self, id: ModeId) -> &Mode {
        &self.modes[id.index()]
    }

    /// Thrust gain in newtons for a rendezvous mode.
    pub fn thrust_gain(&self, id: ModeId) -> Option<DMatrix<f64>> {
        match id {
            ModeId::ProxA => Some(&self.gains[0] * self.chaser_mass),
            ModeId::ProxB => Some(&self.gains[1] * self.chaser_mass),
            ModeId::Passive => None,
        }
    }
}

/// Octagon inscribed in the circle of `radius`, as 8 planar half-spaces
/// `cos(22.5° + k 45°) x + sin(22.5° + k 45°) y <= radius cos 22.5°`.
pub fn octagon_halfspaces(radius: f64) -> Vec<HalfSpace> {
    PlanarRegion::octagon(radius)
        .edges
        .into_iter()
        .map(|(a, b)| HalfSpace::new(DVector::from_row_slice(&a), b))
        .collect()
}

fn embed(h: &HalfSpace, dim: usize, i: usize, j: usize) -> HalfSpace {
    HalfSpace::planar(dim, i, j, h.normal[0], h.normal[1], h.offset)
}

/// The region where a property is violated.
#[derive(Debug, Clone, PartialEq)]
pub enum UnsafeSet {
    /// `normal · x >= offset` (closed) or `normal · x > offset` (open).
    HalfSpace {
        normal: DVector<f64>,
        offset: f64,
        strict: bool,
    },
    /// Conjunction `normal_i · x <= offset_i`, closed.
    Polytope(Vec<HalfSpace>),
}

impl UnsafeSet {
    pub fn contains_point(&self, x: &DVector<f64>) -> bool {
        match self {
            UnsafeSet::HalfSpace { normal, offset, strict } => {
                let v = normal.dot(x);
                if *strict {
                    v > *offset
                } else {
                    v >= *offset
                }
            }
            UnsafeSet::Polytope(hs) => hs.iter().all(|h| h.contains(x)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyProperty {
    pub name: String,
    pub scope: Vec<ModeId>,
    pub unsafe_set: UnsafeSet,
}

impl SafetyProperty {
    pub fn applies_in(&self, mode: ModeId) -> bool {
        self.scope.contains(&mode)
    }
}

/// Tunable constraint bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropertyConfig {
    /// Half-angle of the line-of-sight cone about the -x axis, degrees.
    pub los_half_angle_deg: f64,
    /// x coordinate of the base edge closing the LOS triangle, m.
    pub los_base_x_m: f64,
    /// Total speed limit in ProxB, m/s.
    pub velocity_limit_mps: f64,
    /// Per-axis thrust limit, N.
    pub thrust_limit_n: f64,
    /// Half-width of the square keep-out box around the target, m.
    pub separation_half_width_m: f64,
}

impl Default for PropertyConfig {
    fn default() -> Self {
        Self {
            los_half_angle_deg: 30.0,
            los_base_x_m: -RANGE_THRESHOLD,
            velocity_limit_mps: 0.05,
            thrust_limit_n: 10.0,
            separation_half_width_m: 0.1 / std::f64::consts::SQRT_2,
        }
    }
}

impl PropertyConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (
                "los_half_angle_deg",
                self.los_half_angle_deg > 0.0 && self.los_half_angle_deg < 90.0,
            ),
            ("los_base_x_m", self.los_base_x_m < 0.0),
            ("velocity_limit_mps", self.velocity_limit_mps > 0.0),
            ("thrust_limit_n", self.thrust_limit_n > 0.0),
            ("separation_half_width_m", self.separation_half_width_m > 0.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::config(format!("/properties/{name}"), "value out of range"));
            }
        }
        Ok(())
    }
}

/// Line-of-sight triangle as three unsafe open half-spaces over `dim` states.
pub fn los_halfspaces(cfg: &PropertyConfig, dim: usize) -> Vec<SafetyProperty> {
    let t = cfg.los_half_angle_deg.to_radians().tan();
    let mk = |name: &str, a: f64, b: f64, offset: f64| {
        let h = HalfSpace::planar(dim, X, Y, a, b, offset);
        SafetyProperty {
            name: name.into(),
            scope: vec![ModeId::ProxB],
            unsafe_set: UnsafeSet::HalfSpace {
                normal: h.normal,
                offset: h.offset,
                strict: true,
            },
        }
    };
    vec![
        // x < base
        mk("los_base", -1.0, 0.0, -cfg.los_base_x_m),
        // y > -x tan(half angle)
        mk("los_upper", t, 1.0, 0.0),
        // y < x tan(half angle)
        mk("los_lower", t, -1.0, 0.0),
    ]
}

/// Speed bound as the outward complements of an inscribed velocity octagon.
/// Its edge normals lie on the axes, so e.g. `(limit, 0)` is already unsafe.
pub fn velocity_polytope(cfg: &PropertyConfig, dim: usize) -> Vec<SafetyProperty> {
    PlanarRegion::inscribed_octagon(cfg.velocity_limit_mps, 0.0)
        .edges
        .iter()
        .enumerate()
        .map(|(k, (a, b))| {
            let h = HalfSpace::planar(dim, VX, VY, a[0], a[1], *b);
            SafetyProperty {
                name: format!("velocity_{k}"),
                scope: vec![ModeId::ProxB],
                unsafe_set: UnsafeSet::HalfSpace {
                    normal: h.normal,
                    offset: h.offset,
                    strict: true,
                },
            }
        })
        .collect()
}

/// `|u_x|, |u_y| < limit` as four closed unsafe half-spaces.
pub fn thrust_properties(cfg: &PropertyConfig, variant: Variant) -> Result<Vec<SafetyProperty>> {
    if !variant.has_thrust_states() {
        return Err(Error::config(
            "/variant",
            format!("thrust properties need thrust states; {variant} is 4-dimensional"),
        ));
    }
    let dim = variant.dim();
    let mk = |name: &str, idx: usize, sign: f64| {
        let mut normal = DVector::zeros(dim);
        normal[idx] = sign;
        SafetyProperty {
            name: name.into(),
            scope: vec![ModeId::ProxA, ModeId::ProxB],
            unsafe_set: UnsafeSet::HalfSpace {
                normal,
                offset: cfg.thrust_limit_n,
                strict: false,
            },
        }
    };
    Ok(vec![
        mk("thrust_x_max", UX, 1.0),
        mk("thrust_x_min", UX, -1.0),
        mk("thrust_y_max", UY, 1.0),
        mk("thrust_y_min", UY, -1.0),
    ])
}

/// Square keep-out box around the target, checked in Passive.
pub fn separation_property(cfg: &PropertyConfig, dim: usize) -> SafetyProperty {
    let w = cfg.separation_half_width_m;
    let hs = vec![
        HalfSpace::planar(dim, X, Y, 1.0, 0.0, w),
        HalfSpace::planar(dim, X, Y, -1.0, 0.0, w),
        HalfSpace::planar(dim, X, Y, 0.0, 1.0, w),
        HalfSpace::planar(dim, X, Y, 0.0, -1.0, w),
    ];
    SafetyProperty {
        name: "separation".into(),
        scope: vec![ModeId::Passive],
        unsafe_set: UnsafeSet::Polytope(hs),
    }
}

/// Every registered property for a variant: 3 LOS + 8 velocity + 1
/// separation, plus 4 thrust checks for the 6-dim variants.
pub fn registered_properties(cfg: &PropertyConfig, variant: Variant) -> Vec<SafetyProperty> {
    let dim = variant.dim();
    let mut props = los_halfspaces(cfg, dim);
    props.extend(velocity_polytope(cfg, dim));
    props.push(separation_property(cfg, dim));
    if variant.has_thrust_states() {
        props.extend(thrust_properties(cfg, variant).expect("6-dim variant"));
    }
    props
}

/// Interval image of `F = -m_c K x` over a 4-dim box.
pub fn initial_thrust_box(gain: &GainMatrix, m_c: f64, init: &Box) -> Result<Box> {
    thrust_interval(&gain.newton_gain(m_c), init)
}

/// Interval image of `F = -K_N x` over the first four coordinates of `b`.
pub(crate) fn thrust_interval(k_newton: &DMatrix<f64>, b: &Box) -> Result<Box> {
    if b.dim() < 4 || k_newton.ncols() != 4 {
        return Err(Error::Dimension(format!(
            "thrust box needs a 4-dim state box, got {}",
            b.dim()
        )));
    }
    let c = b.center().rows(0, 4).into_owned();
    let w = b.half_widths().rows(0, 4).into_owned();
    let center = -(k_newton * c);
    let half = k_newton.abs() * w;
    Box::new(&center - &half, &center + &half)
}

/// Flow matrices `(ProxA, ProxB, Passive)` of a variant.
pub fn variant_flows(params: &OrbitalParams, gains: (&GainMatrix, &GainMatrix), variant: Variant) -> [DMatrix<f64>; 3] {
    let lin = cwh_matrices(params);
    let m_c = params.chaser_mass();
    let closed = |g: &GainMatrix| &lin.a - &lin.b * g.newton_gain(m_c);
    match variant {
        Variant::LinProx | Variant::NLinProx => [closed(gains.0), closed(gains.1), lin.a.clone()],
        Variant::LinProxThTracking => {
            let mk = |g: &GainMatrix| {
                let acl = closed(g);
                let mut m = DMatrix::zeros(6, 6);
                m.view_mut((0, 0), (4, 4)).copy_from(&acl);
                // u̇ = -m_c K ẋ with ẋ = (A - BK) x
                m.view_mut((4, 0), (2, 4)).copy_from(&(-(g.newton_gain(m_c)) * &acl));
                m
            };
            [mk(gains.0), mk(gains.1), passive_six(&lin.a)]
        }
        Variant::LinProxThExplicit => {
            let mk = |g: &GainMatrix| {
                let kn = g.newton_gain(m_c);
                let mut m = DMatrix::zeros(6, 6);
                m.view_mut((0, 0), (4, 4)).copy_from(&lin.a);
                m.view_mut((0, 4), (4, 2)).copy_from(&lin.b);
                // u̇ = -m_c K (A x + B u)
                m.view_mut((4, 0), (2, 4)).copy_from(&(-&kn * &lin.a));
                m.view_mut((4, 4), (2, 2)).copy_from(&(-&kn * &lin.b));
                m
            };
            [mk(gains.0), mk(gains.1), passive_six(&lin.a)]
        }
    }
}

fn passive_six(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(6, 6);
    m.view_mut((0, 0), (4, 4)).copy_from(a);
    m
}

/// Assemble the three-mode rendezvous automaton.
pub fn build_rendezvous_automaton(
    params: &OrbitalParams,
    gains: (&GainMatrix, &GainMatrix),
    variant: Variant,
    t1: f64,
    t2: f64,
) -> Result<HybridAutomaton> {
    if !(t1.is_finite() && t2.is_finite() && 0.0 <= t1 && t1 <= t2) {
        return Err(Error::config("/t1_s", format!("invalid passive window [{t1}, {t2}]")));
    }
    let dim = variant.dim();
    let octagon: Vec<HalfSpace> = octagon_halfspaces(RANGE_THRESHOLD)
        .iter()
        .map(|h| embed(h, dim, X, Y))
        .collect();
    let [fa, fb, fp] = variant_flows(params, gains, variant);
    let modes = vec![
        Mode {
            id: ModeId::ProxA,
            flow: fa,
            invariant: Invariant {
                spatial: Spatial::Outside(octagon.clone()),
                clock_min: None,
                clock_max: Some(t2),
            },
        },
        Mode {
            id: ModeId::ProxB,
            flow: fb,
            invariant: Invariant {
                spatial: Spatial::Inside(octagon.clone()),
                clock_min: None,
                clock_max: Some(t2),
            },
        },
        Mode {
            id: ModeId::Passive,
            flow: fp,
            invariant: Invariant {
                spatial: Spatial::Anywhere,
                clock_min: Some(t1),
                clock_max: None,
            },
        },
    ];
    let urgent = |spatial: Spatial| Guard {
        spatial,
        clock_window: None,
        urgent: true,
    };
    let timed = || Guard {
        spatial: Spatial::Anywhere,
        clock_window: Some((t1, t2)),
        urgent: false,
    };
    let transitions = vec![
        Transition {
            src: ModeId::ProxA,
            dst: ModeId::ProxB,
            guard: urgent(Spatial::Inside(octagon.clone())),
        },
        Transition {
            src: ModeId::ProxB,
            dst: ModeId::ProxA,
            guard: urgent(Spatial::Outside(octagon)),
        },
        Transition {
            src: ModeId::ProxA,
            dst: ModeId::Passive,
            guard: timed(),
        },
        Transition {
            src: ModeId::ProxB,
            dst: ModeId::Passive,
            guard: timed(),
        },
    ];
    Ok(HybridAutomaton {
        variant,
        dim,
        modes,
        transitions,
        gains: [gains.0.k().clone(), gains.1.k().clone()],
        chaser_mass: params.chaser_mass(),
    })
}

/// Angle in radians helper for callers building sweep centres.
pub fn polar_position(radius: f64, angle_deg: f64) -> [f64; 2] {
    let a = angle_deg * PI / 180.0;
    [radius * a.cos(), radius * a.sin()]
}
