//! Star-set flowpipes through the rendezvous automaton, safety verdicts,
//! sampling-based falsification, window partitioning and the abort-time sweep.
//!
//! Semantics are discrete-time at the sample instants `t_k = k h`. At each
//! sample the urgent ProxA/ProxB switches are resolved first, then the
//! mode-scoped properties are checked, then every set advances one step.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clip_polygon, rect_polygon, Box, PlanarRegion, Polygon};
use crate::hybrid::{
    build_rendezvous_automaton, polar_position, registered_properties, thrust_interval, HybridAutomaton, ModeId,
    PropertyConfig, SafetyProperty, UnsafeSet, Variant, RANGE_THRESHOLD, UX, UY,
};
use crate::io::ScenarioFile;
use crate::lqr::{design_mode_gains_with, GainMatrix, GainRecord, ModeTuning};
use crate::numsim::{
    build_propagator, rendezvous_transition, simulate_nonlinear, ModeLogic, StepPropagator, Trajectory,
};
use crate::orbital::{OrbitalParams, StateVec};
use crate::starset::StarSet;

/// Default passive sub-window width, s.
pub const DEFAULT_WINDOW: f64 = 300.0;

/// Note attached to every Unsafe verdict.
pub const OVER_APPROXIMATION_NOTE: &str =
    "violations are intersections of an over-approximate flowpipe; confirm with falsify";

/// A verification problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: OrbitalParams,
    pub variant: Variant,
    /// Initial set: 4-dim, or full 6-dim for the thrust variants.
    pub init: Box,
    pub t1: f64,
    pub t2: f64,
    pub horizon: f64,
    pub h: f64,
    pub window: f64,
    pub tuning: ModeTuning,
    pub properties: PropertyConfig,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            params: OrbitalParams::default(),
            variant: Variant::LinProx,
            init: Box::from_center(&[-900.0, -400.0, 0.0, 0.0], &[25.0, 25.0, 0.0, 0.0]).expect("valid box"),
            t1: 7200.0,
            t2: 7500.0,
            horizon: 16200.0,
            h: 1.0,
            window: DEFAULT_WINDOW,
            tuning: ModeTuning::default(),
            properties: PropertyConfig::default(),
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::config("/step_s", "step must be positive"));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.h) {
            return Err(Error::config("/horizon_s", "horizon must be at least one step"));
        }
        if !(self.t1.is_finite() && self.t1 >= 0.0) {
            return Err(Error::config("/t1_s", "t1 must be non-negative"));
        }
        if !(self.t2.is_finite() && self.t1 <= self.t2) {
            return Err(Error::config("/t1_s", "t1 must not exceed t2"));
        }
        if self.t2 > self.horizon {
            return Err(Error::config("/t2_s", "t2 must not exceed the horizon"));
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(Error::config("/window_width_s", "window width must be positive"));
        }
        let dim = self.init.dim();
        if !(dim == 4 || dim == self.variant.dim()) {
            return Err(Error::config("/init_center", format!("initial set has {dim} dims")));
        }
        if !self.init.is_finite() {
            return Err(Error::config("/init_center", "initial set is not finite"));
        }
        self.properties.validate()?;
        initial_mode(&self.init)?;
        Ok(())
    }

    /// Number of steps covering the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.h + 1e-9).floor() as usize
    }

    /// The same scenario started from a different centre with zero velocity.
    pub fn recentred(&self, pos: [f64; 2]) -> Result<Self> {
        let hw = self.init.half_widths();
        let mut centre = vec![0.0; self.init.dim()];
        centre[0] = pos[0];
        centre[1] = pos[1];
        let init = Box::from_center(&centre, hw.as_slice())?;
        Ok(Self { init, ..self.clone() })
    }
}

/// Rendezvous mode whose invariant holds the box, by position.
pub fn initial_mode(init: &Box) -> Result<ModeId> {
    let guard = PlanarRegion::octagon(RANGE_THRESHOLD);
    let (lo, hi) = xy(init);
    if guard.contains_rect(lo, hi) {
        Ok(ModeId::ProxB)
    } else if guard.clip_rect(lo, hi).is_none() {
        Ok(ModeId::ProxA)
    } else {
        Err(Error::config(
            "/init_center",
            "initial set straddles the ProxA/ProxB guard",
        ))
    }
}

fn xy(b: &Box) -> ([f64; 2], [f64; 2]) {
    ([b.lo()[0], b.lo()[1]], [b.hi()[0], b.hi()[1]])
}

fn with_xy(b: &Box, (lo, hi): ([f64; 2], [f64; 2])) -> Box {
    b.clone().with_interval(0, lo[0], hi[0]).with_interval(1, lo[1], hi[1])
}

fn slack(b: f64) -> f64 {
    1e-9 * b.abs().max(1.0)
}

/// First detection of a property violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub property: String,
    pub mode: ModeId,
    pub pipe: String,
    pub step: usize,
    pub time_s: f64,
    pub witness_lo: Vec<f64>,
    pub witness_hi: Vec<f64>,
    /// Always true for flowpipe detections.
    pub over_approximation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Safe,
    Unsafe,
    Inconclusive,
}

/// Contiguous run of boxes of one mode within one pipe.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowpipeSegment {
    pub pipe: String,
    pub mode: ModeId,
    pub start_step: usize,
    pub boxes: Vec<Box>,
    /// Bit `i` set when property `i` fired on that box.
    pub flags: Vec<u64>,
}

impl FlowpipeSegment {
    pub fn steps(&self) -> std::ops::Range<usize> {
        self.start_step..self.start_step + self.boxes.len()
    }

    pub fn box_at(&self, step: usize) -> Option<&Box> {
        step.checked_sub(self.start_step).and_then(|i| self.boxes.get(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySummary {
    pub name: String,
    pub scope: Vec<ModeId>,
    pub first_violation_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeGains {
    pub prox_a: GainRecord,
    pub prox_b: GainRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: usize,
    pub windows: usize,
    pub rendezvous_boxes: usize,
    pub passive_boxes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub tool_version: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inconclusive_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub violations: Vec<Violation>,
    pub properties: Vec<PropertySummary>,
    pub windows: Vec<[f64; 2]>,
    pub max_abs_thrust_n: Option<f64>,
    pub thrust_margin_n: Option<f64>,
    pub gains: ModeGains,
    pub stats: RunStats,
    pub config: ScenarioFile,
    #[serde(skip)]
    pub flowpipe: Vec<FlowpipeSegment>,
}

impl VerificationReport {
    pub fn is_safe(&self) -> bool {
        self.verdict == Verdict::Safe
    }

    pub fn property_names(&self) -> Vec<String> {
        self.properties.iter().map(|p| p.name.clone()).collect()
    }

    /// Box of `mode` in the named pipe at `step`, if the pipe has one.
    pub fn box_at(&self, pipe: &str, mode: ModeId, step: usize) -> Option<&Box> {
        self.flowpipe
            .iter()
            .filter(|s| s.pipe == pipe && s.mode == mode)
            .find_map(|s| s.box_at(step))
    }

    pub fn violation(&self, property: &str) -> Option<&Violation> {
        self.violations.iter().find(|v| v.property == property)
    }
}

/// Pre-built propagators, gains and properties for one scenario.
#[derive(Debug, Clone)]
pub struct Engine {
    scenario: Scenario,
    gains: (GainMatrix, GainMatrix),
    automaton: HybridAutomaton,
    props: [StepPropagator; 3],
    properties: Vec<SafetyProperty>,
    guard: PlanarRegion,
    k_newton: [DMatrix<f64>; 2],
}

#[derive(Debug, Clone)]
enum Piece {
    Whole(StarSet),
    Region(Box),
}

#[derive(Debug, Clone, PartialEq)]
struct Hit {
    property: usize,
    mode: ModeId,
    step: usize,
    witness: Box,
}

/// Rendezvous flowpipe to the horizon.
#[derive(Debug, Clone)]
pub struct RendezvousPipe {
    boxes: [Vec<Option<Box>>; 2],
    flags: [Vec<u64>; 2],
    /// Set entering Passive at each step (both rendezvous sets, thrust zeroed).
    feed: Vec<Option<StarSet>>,
    hits: Vec<Hit>,
    max_thrust: Option<f64>,
    failure: Option<String>,
}

impl RendezvousPipe {
    pub fn is_safe(&self) -> bool {
        self.hits.is_empty() && self.failure.is_none()
    }
}

/// Passive flowpipe for one window of abort times.
#[derive(Debug, Clone)]
pub struct PassivePipe {
    window: (f64, f64),
    start_step: usize,
    boxes: Vec<Box>,
    flags: Vec<u64>,
    hits: Vec<Hit>,
    failure: Option<String>,
    /// Box hull of every set fed in over the window.
    initial_hull: Option<Box>,
}

impl PassivePipe {
    pub fn is_safe(&self) -> bool {
        self.hits.is_empty() && self.failure.is_none()
    }

    pub fn initial_hull(&self) -> Option<&Box> {
        self.initial_hull.as_ref()
    }

    pub fn name(&self) -> String {
        passive_pipe_name(self.window)
    }
}

/// Step-wise hull of a recorded chunk into `out`. Chunks arrive in order
/// of their first abort step, so `part` never starts before `out`.
fn merge_records(out: &mut PassivePipe, part: &PassivePipe) {
    debug_assert!(part.start_step >= out.start_step);
    let offset = part.start_step - out.start_step;
    for (i, (b, f)) in part.boxes.iter().zip(&part.flags).enumerate() {
        let j = offset + i;
        if j < out.boxes.len() {
            out.boxes[j] = out.boxes[j].hull(b);
            out.flags[j] |= *f;
        } else {
            out.boxes.push(b.clone());
            out.flags.push(*f);
        }
    }
}

pub fn passive_pipe_name((a, b): (f64, f64)) -> String {
    format!("passive[{a},{b}]")
}

pub const RENDEZVOUS_PIPE: &str = "rendezvous";

impl Engine {
    pub fn new(sc: &Scenario) -> Result<Self> {
        sc.validate()?;
        if !sc.variant.is_linear() {
            return Err(Error::config(
                "/variant",
                "nlin_prox supports simulation and falsification only",
            ));
        }
        Self::build(sc)
    }

    /// Engine for point simulation; accepts the nonlinear variant.
    pub fn for_simulation(sc: &Scenario) -> Result<Self> {
        sc.validate()?;
        Self::build(sc)
    }

    fn build(sc: &Scenario) -> Result<Self> {
        let gains = design_mode_gains_with(&sc.params, &sc.tuning)?;
        let automaton = build_rendezvous_automaton(&sc.params, (&gains.0, &gains.1), sc.variant, sc.t1, sc.t2)?;
        let props = [
            build_propagator(&automaton.mode(ModeId::ProxA).flow, sc.h, "prox_a")?,
            build_propagator(&automaton.mode(ModeId::ProxB).flow, sc.h, "prox_b")?,
            build_propagator(&automaton.mode(ModeId::Passive).flow, sc.h, "passive")?,
        ];
        let m_c = sc.params.chaser_mass();
        let k_newton = [gains.0.newton_gain(m_c), gains.1.newton_gain(m_c)];
        Ok(Self {
            scenario: sc.clone(),
            properties: registered_properties(&sc.properties, sc.variant),
            guard: PlanarRegion::octagon(RANGE_THRESHOLD),
            gains,
            automaton,
            props,
            k_newton,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn gains(&self) -> (&GainMatrix, &GainMatrix) {
        (&self.gains.0, &self.gains.1)
    }

    pub fn automaton(&self) -> &HybridAutomaton {
        &self.automaton
    }

    pub fn properties(&self) -> &[SafetyProperty] {
        &self.properties
    }

    fn dim(&self) -> usize {
        self.scenario.variant.dim()
    }

    fn propagator(&self, mode: ModeId) -> &StepPropagator {
        &self.props[mode.index()]
    }

    /// Initial set in the full state space.
    pub fn initial_box(&self) -> Result<Box> {
        let init = &self.scenario.init;
        if init.dim() == self.dim() {
            return Ok(init.clone());
        }
        let mode = initial_mode(init)?;
        let u = thrust_interval(&self.k_newton[mode.index()], init)?;
        let lo: Vec<f64> = init.lo().iter().chain(u.lo().iter()).copied().collect();
        let hi: Vec<f64> = init.hi().iter().chain(u.hi().iter()).copied().collect();
        Box::from_slices(&lo, &hi)
    }

    /// Thrust-state reset applied when entering `dst`: `u = -m_c K x` in a
    /// rendezvous mode and `u = 0` in Passive.
    fn reset_map(&self, dst: ModeId) -> Option<DMatrix<f64>> {
        if self.dim() != 6 {
            return None;
        }
        let mut r = DMatrix::zeros(6, 6);
        r.view_mut((0, 0), (4, 4)).fill_with_identity();
        if dst.is_rendezvous() {
            r.view_mut((4, 0), (2, 4)).copy_from(&(-&self.k_newton[dst.index()]));
        }
        Some(r)
    }

    fn reset_point(&self, dst: ModeId, x: &mut DVector<f64>) {
        if self.dim() != 6 {
            return;
        }
        let u = if dst.is_rendezvous() {
            -(&self.k_newton[dst.index()] * x.rows(0, 4))
        } else {
            DVector::zeros(2)
        };
        x.rows_mut(4, 2).copy_from(&u);
    }

    fn absorb(&self, dst: ModeId, current: Option<StarSet>, pieces: Vec<Piece>) -> Result<Option<StarSet>> {
        let reset = self.reset_map(dst);
        let mut stars = Vec::with_capacity(pieces.len() + 1);
        stars.extend(current);
        for p in pieces {
            let s = match p {
                Piece::Whole(s) => s,
                Piece::Region(b) => StarSet::from_box(&b),
            };
            stars.push(match &reset {
                Some(r) => s.transform(r)?,
                None => s,
            });
        }
        Ok(match stars.len() {
            0 => None,
            1 => stars.pop(),
            _ => {
                // Hull in (x, e) with e = u + m_c K x. Both thrust flows keep e
                // constant, so boxing in these coordinates does not decouple
                // the thrust states from the positions.
                let coords = self.merge_coordinates(dst);
                let hull = stars
                    .iter()
                    .map(|s| match &coords {
                        Some((t, _)) => s.transform(t).map(|s| s.bounding_box()),
                        None => Ok(s.bounding_box()),
                    })
                    .reduce(|a, b| Ok(a?.hull(&b?)))
                    .expect("nonempty")?;
                let star = StarSet::from_box(&hull);
                Some(match &coords {
                    Some((_, back)) => star.transform(back)?,
                    None => star,
                })
            }
        })
    }

    /// `(T, T^-1)` with `T (x, u) = (x, u + m_c K x)` for a rendezvous mode.
    fn merge_coordinates(&self, dst: ModeId) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        if self.dim() != 6 || !dst.is_rendezvous() {
            return None;
        }
        let k = &self.k_newton[dst.index()];
        let mut t = DMatrix::identity(6, 6);
        t.view_mut((4, 0), (2, 4)).copy_from(k);
        let mut back = DMatrix::identity(6, 6);
        back.view_mut((4, 0), (2, 4)).copy_from(&(-k));
        Some((t, back))
    }

    /// Polygon of the box footprint inside the ProxB invariant.
    fn inside_polygon(&self, b: &Box) -> Polygon {
        let (lo, hi) = xy(b);
        self.guard
            .edges
            .iter()
            .fold(rect_polygon(lo, hi), |p, (a, off)| clip_polygon(&p, *a, *off))
    }

    fn check(&self, mode: ModeId, star: &StarSet, bbox: &Box, footprint: Option<&Polygon>) -> u64 {
        let mut flags = 0u64;
        for (i, p) in self.properties.iter().enumerate() {
            if !p.applies_in(mode) {
                continue;
            }
            let fired = match &p.unsafe_set {
                UnsafeSet::HalfSpace { normal, offset, strict } => {
                    let test = |v: f64| {
                        if *strict {
                            v > offset + slack(*offset)
                        } else {
                            v >= *offset
                        }
                    };
                    let planar = normal.iter().skip(2).all(|c| *c == 0.0);
                    test(star.support(normal))
                        && match footprint {
                            // the mode invariant bounds the positions
                            Some(poly) if planar => {
                                let best = poly
                                    .iter()
                                    .map(|q| normal[0] * q[0] + normal[1] * q[1])
                                    .fold(f64::NEG_INFINITY, f64::max);
                                test(best)
                            }
                            _ => true,
                        }
                }
                UnsafeSet::Polytope(hs) => hs.iter().all(|h| -bbox.support(&(-&h.normal)) <= h.offset),
            };
            if fired {
                flags |= 1 << i;
            }
        }
        flags
    }

    /// Rendezvous flowpipe from the initial set to the horizon.
    pub fn rendezvous_pipe(&self) -> Result<RendezvousPipe> {
        let steps = self.scenario.steps();
        let init = self.initial_box()?;
        let mode0 = initial_mode(&init)?;
        let mut sets: [Option<StarSet>; 2] = [None, None];
        sets[mode0.index()] = Some(StarSet::from_box(&init));

        let mut pipe = RendezvousPipe {
            boxes: [Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1)],
            flags: [Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1)],
            feed: Vec::with_capacity(steps + 1),
            hits: Vec::new(),
            max_thrust: None,
            failure: None,
        };
        let mut seen = 0u64;

        for k in 0..=steps {
            // urgent switches, decided on the pre-switch sets
            let [a, b] = std::mem::take(&mut sets);
            let mut into_a = Vec::new();
            let mut into_b = Vec::new();
            let mut keep_a = None;
            let mut keep_b = None;
            if let Some(a) = a {
                let bb = a.bounding_box();
                let (lo, hi) = xy(&bb);
                if self.guard.contains_rect(lo, hi) {
                    into_b.push(Piece::Whole(a));
                } else {
                    if let Some(clip) = self.guard.clip_rect(lo, hi) {
                        into_b.push(Piece::Region(with_xy(&bb, clip)));
                    }
                    keep_a = Some(a);
                }
            }
            if let Some(b) = b {
                let bb = b.bounding_box();
                let (lo, hi) = xy(&bb);
                if self.guard.clip_rect(lo, hi).is_none() {
                    into_a.push(Piece::Whole(b));
                } else {
                    if let Some(clip) = self.guard.clip_rect_outside(lo, hi) {
                        into_a.push(Piece::Region(with_xy(&bb, clip)));
                    }
                    keep_b = Some(b);
                }
            }
            sets = [
                self.absorb(ModeId::ProxA, keep_a, into_a)?,
                self.absorb(ModeId::ProxB, keep_b, into_b)?,
            ];

            let mut feed: Option<StarSet> = None;
            for mode in [ModeId::ProxA, ModeId::ProxB] {
                let i = mode.index();
                let Some(star) = &sets[i] else {
                    pipe.boxes[i].push(None);
                    pipe.flags[i].push(0);
                    continue;
                };
                if !star.is_finite() {
                    pipe.failure = Some(format!("non-finite {mode} set at step {k}"));
                    return Ok(pipe);
                }
                let raw = star.bounding_box();
                let (lo, hi) = xy(&raw);
                // tighten to the mode invariant
                let clipped = match mode {
                    ModeId::ProxA => self.guard.clip_rect_outside(lo, hi),
                    _ => self.guard.clip_rect(lo, hi),
                }
                .map(|c| with_xy(&raw, c))
                .unwrap_or(raw);
                let footprint = (mode == ModeId::ProxB).then(|| self.inside_polygon(&clipped));
                let flags = self.check(mode, star, &clipped, footprint.as_ref());
                for p in 0..self.properties.len() {
                    if flags >> p & 1 == 1 && seen >> p & 1 == 0 {
                        seen |= 1 << p;
                        pipe.hits.push(Hit {
                            property: p,
                            mode,
                            step: k,
                            witness: clipped.clone(),
                        });
                    }
                }
                if self.dim() == 6 {
                    let m = [UX, UY]
                        .iter()
                        .map(|&j| clipped.lo()[j].abs().max(clipped.hi()[j].abs()))
                        .fold(0.0, f64::max);
                    pipe.max_thrust = Some(pipe.max_thrust.unwrap_or(0.0).max(m));
                }
                let f = match self.reset_map(ModeId::Passive) {
                    Some(r) => star.transform(&r)?,
                    None => star.clone(),
                };
                feed = Some(match feed {
                    None => f,
                    Some(g) => g.frame_hull(&f)?,
                });
                pipe.boxes[i].push(Some(clipped));
                pipe.flags[i].push(flags);
            }
            pipe.feed.push(feed);

            if k < steps {
                for mode in [ModeId::ProxA, ModeId::ProxB] {
                    let i = mode.index();
                    if let Some(s) = &sets[i] {
                        sets[i] = Some(s.propagate(self.propagator(mode))?);
                    }
                }
            }
        }
        Ok(pipe)
    }

    /// Passive flowpipe for aborts at sample times in `window`.
    ///
    /// The sets entering over the window are hulled into one parallelotope.
    /// When that hull violates a property, the abort steps are split in half
    /// and each half is redone, down to single abort steps (exact sets).
    pub fn passive_pipe(
        &self,
        rdv: &RendezvousPipe,
        window: (f64, f64),
        record: bool,
        stop_at_first: bool,
    ) -> Result<PassivePipe> {
        let h = self.scenario.h;
        let steps = self.scenario.steps();
        let ka = (window.0 / h - 1e-9).ceil().max(0.0) as usize;
        let kb = ((window.1 / h + 1e-9).floor() as usize).min(steps);
        let mut out = PassivePipe {
            window,
            start_step: ka,
            boxes: Vec::new(),
            flags: Vec::new(),
            hits: Vec::new(),
            failure: None,
            initial_hull: None,
        };
        if rdv.failure.is_some() {
            out.failure = rdv.failure.clone();
            return Ok(out);
        }
        // settle the chunk partition first
        let mut pending = vec![(ka, kb)];
        let mut chunks = Vec::new();
        while let Some((a, b)) = pending.pop() {
            let trial = self.passive_chunk(rdv, window, (a, b), false, true)?;
            if trial.failure.is_some() {
                out.failure = trial.failure;
                return Ok(out);
            }
            if trial.is_safe() || a >= b {
                let terminal_hit = !trial.is_safe();
                chunks.push((a, b));
                if terminal_hit && stop_at_first {
                    break;
                }
            } else {
                let mid = a + (b - a) / 2;
                // later half first so the earlier half pops next
                pending.push((mid + 1, b));
                pending.push((a, mid));
            }
        }
        chunks.sort_unstable();
        let mut seen = 0u64;
        for &(a, b) in &chunks {
            let part = self.passive_chunk(rdv, window, (a, b), record, stop_at_first)?;
            if let Some(f) = part.initial_hull.clone() {
                out.initial_hull = Some(match out.initial_hull {
                    None => f,
                    Some(g) => g.hull(&f),
                });
            }
            for hit in part.hits.iter().cloned() {
                let p = hit.property;
                match out.hits.iter_mut().find(|x| x.property == p) {
                    Some(x) if hit.step < x.step => *x = hit,
                    Some(_) => {}
                    None => out.hits.push(hit),
                }
                seen |= 1 << p;
            }
            if record && !part.boxes.is_empty() {
                if out.boxes.is_empty() {
                    out.start_step = part.start_step;
                }
                merge_records(&mut out, &part);
            }
            if stop_at_first && seen != 0 {
                break;
            }
        }
        out.hits.sort_by_key(|x| (x.step, x.property));
        Ok(out)
    }

    /// Passive flowpipe for one chunk of abort steps with a single hull.
    fn passive_chunk(
        &self,
        rdv: &RendezvousPipe,
        window: (f64, f64),
        (ka, kb): (usize, usize),
        record: bool,
        stop_at_first: bool,
    ) -> Result<PassivePipe> {
        let steps = self.scenario.steps();
        let mut pipe = PassivePipe {
            window,
            start_step: ka,
            boxes: Vec::new(),
            flags: Vec::new(),
            hits: Vec::new(),
            failure: None,
            initial_hull: None,
        };
        if rdv.failure.is_some() {
            pipe.failure = rdv.failure.clone();
            return Ok(pipe);
        }
        let mut current: Option<StarSet> = None;
        let mut seen = 0u64;
        for k in ka..=steps {
            if k <= kb {
                if let Some(f) = rdv.feed.get(k).and_then(Option::as_ref) {
                    let fb = f.bounding_box();
                    pipe.initial_hull = Some(match &pipe.initial_hull {
                        None => fb,
                        Some(g) => g.hull(&fb),
                    });
                    current = Some(match &current {
                        None => f.clone(),
                        Some(s) => s.frame_hull(f)?,
                    });
                }
            }
            let Some(star) = &current else {
                continue;
            };
            if !star.is_finite() {
                pipe.failure = Some(format!("non-finite passive set at step {k}"));
                return Ok(pipe);
            }
            let bbox = star.bounding_box();
            let flags = self.check(ModeId::Passive, star, &bbox, None);
            for p in 0..self.properties.len() {
                if flags >> p & 1 == 1 && seen >> p & 1 == 0 {
                    seen |= 1 << p;
                    pipe.hits.push(Hit {
                        property: p,
                        mode: ModeId::Passive,
                        step: k,
                        witness: bbox.clone(),
                    });
                }
            }
            if stop_at_first && !pipe.hits.is_empty() {
                return Ok(pipe);
            }
            if record {
                if pipe.boxes.is_empty() {
                    pipe.start_step = k;
                }
                pipe.boxes.push(bbox);
                pipe.flags.push(flags);
            }
            if k < steps {
                current = Some(star.propagate(self.propagator(ModeId::Passive))?);
            }
        }
        Ok(pipe)
    }

    fn logic(&self, passive_at: Option<f64>) -> ModeLogic {
        ModeLogic {
            gain_a: self.gains.0.k().clone(),
            gain_b: self.gains.1.k().clone(),
            guard: self.guard.clone(),
            passive_at,
        }
    }

    /// Point simulation of the automaton from `x0` (4-dim, or full-dim for the
    /// thrust variants), going passive at the first sample at or after
    /// `passive_at`.
    pub fn simulate_point(&self, x0: &DVector<f64>, passive_at: Option<f64>) -> Result<Trajectory> {
        let sc = &self.scenario;
        if x0.len() < 4 || x0.len() > self.dim() {
            return Err(Error::Dimension(format!("initial state has {} dims", x0.len())));
        }
        if sc.variant == Variant::NLinProx {
            let s = StateVec::from_slice(x0.as_slice());
            return simulate_nonlinear(&sc.params, &self.logic(passive_at), s, sc.h, sc.steps() as f64 * sc.h);
        }
        let logic = self.logic(passive_at);
        let mut x = DVector::zeros(self.dim());
        x.rows_mut(0, x0.len()).copy_from(x0);
        let mut mode = rendezvous_transition(ModeId::ProxA, self.guard.contains([x[0], x[1]]));
        if x0.len() < self.dim() {
            self.reset_point(mode, &mut x);
        }
        let mut traj = Trajectory::default();
        let steps = sc.steps();
        for k in 0..=steps {
            let t = k as f64 * sc.h;
            let next = logic.resolve(mode, [x[0], x[1]], t);
            if next != mode {
                self.reset_point(next, &mut x);
                mode = next;
            }
            traj.times.push(t);
            traj.states.push(x.clone());
            traj.modes.push(mode);
            if k < steps {
                x = self.propagator(mode).apply(&x);
            }
        }
        Ok(traj)
    }

    /// First `(property, step)` violated along a point trajectory.
    pub fn first_point_violation(&self, traj: &Trajectory) -> Option<(usize, usize)> {
        for k in 0..traj.len() {
            let mode = traj.modes[k];
            for (i, p) in self.properties.iter().enumerate() {
                if p.applies_in(mode) && p.unsafe_set.contains_point(&traj.states[k]) {
                    return Some((i, k));
                }
            }
        }
        None
    }
}

/// Contiguous cover of `[t1, t2]` by windows of width at most `w`.
pub fn partition_window(t1: f64, t2: f64, w: f64) -> Result<Vec<(f64, f64)>> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::Domain(format!("window width must be positive, got {w}")));
    }
    if !(t1.is_finite() && t2.is_finite() && t1 <= t2) {
        return Err(Error::Domain(format!("invalid window [{t1}, {t2}]")));
    }
    if t1 == t2 {
        return Ok(vec![(t1, t2)]);
    }
    let count = (((t2 - t1) / w) - 1e-9).ceil().max(1.0) as usize;
    Ok((0..count)
        .map(|i| {
            let a = t1 + i as f64 * w;
            let b = if i + 1 == count { t2 } else { t1 + (i + 1) as f64 * w };
            (a, b)
        })
        .collect())
}

fn segments(pipe: &str, mode: ModeId, boxes: &[Option<Box>], flags: &[u64]) -> Vec<FlowpipeSegment> {
    let mut out: Vec<FlowpipeSegment> = Vec::new();
    let mut open = false;
    for (k, b) in boxes.iter().enumerate() {
        match b {
            Some(b) => {
                if !open {
                    out.push(FlowpipeSegment {
                        pipe: pipe.into(),
                        mode,
                        start_step: k,
                        boxes: Vec::new(),
                        flags: Vec::new(),
                    });
                    open = true;
                }
                let seg = out.last_mut().expect("open segment");
                seg.boxes.push(b.clone());
                seg.flags.push(flags[k]);
            }
            None => open = false,
        }
    }
    out
}

fn assemble(engine: &Engine, rdv: &RendezvousPipe, passives: &[PassivePipe]) -> VerificationReport {
    let sc = engine.scenario();
    let props = engine.properties();
    let mut hits: Vec<(String, &Hit)> = rdv.hits.iter().map(|h| (RENDEZVOUS_PIPE.to_string(), h)).collect();
    for p in passives {
        hits.extend(p.hits.iter().map(|h| (p.name(), h)));
    }
    // earliest detection per property, ties broken by pipe order
    let mut first: Vec<Option<(String, &Hit)>> = vec![None; props.len()];
    for (pipe, hit) in hits {
        let slot = &mut first[hit.property];
        if slot.as_ref().is_none_or(|(_, h)| hit.step < h.step) {
            *slot = Some((pipe, hit));
        }
    }
    let violations: Vec<Violation> = first
        .iter()
        .flatten()
        .map(|(pipe, hit)| Violation {
            property: props[hit.property].name.clone(),
            mode: hit.mode,
            pipe: pipe.clone(),
            step: hit.step,
            time_s: hit.step as f64 * sc.h,
            witness_lo: hit.witness.lo().iter().copied().collect(),
            witness_hi: hit.witness.hi().iter().copied().collect(),
            over_approximation: true,
        })
        .collect();
    let failure = rdv
        .failure
        .clone()
        .or_else(|| passives.iter().find_map(|p| p.failure.clone()));
    let verdict = if failure.is_some() {
        Verdict::Inconclusive
    } else if violations.is_empty() {
        Verdict::Safe
    } else {
        Verdict::Unsafe
    };

    let mut flowpipe = segments(RENDEZVOUS_PIPE, ModeId::ProxA, &rdv.boxes[0], &rdv.flags[0]);
    flowpipe.extend(segments(RENDEZVOUS_PIPE, ModeId::ProxB, &rdv.boxes[1], &rdv.flags[1]));
    flowpipe.sort_by_key(|s| (s.start_step, s.mode));
    for p in passives {
        if !p.boxes.is_empty() {
            flowpipe.push(FlowpipeSegment {
                pipe: p.name(),
                mode: ModeId::Passive,
                start_step: p.start_step,
                boxes: p.boxes.clone(),
                flags: p.flags.clone(),
            });
        }
    }

    let properties = props
        .iter()
        .map(|p| PropertySummary {
            name: p.name.clone(),
            scope: p.scope.clone(),
            first_violation_s: violations.iter().find(|v| v.property == p.name).map(|v| v.time_s),
        })
        .collect();
    let rendezvous_boxes = rdv.boxes.iter().flatten().flatten().count();
    let passive_boxes = passives.iter().map(|p| p.boxes.len()).sum();
    VerificationReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        verdict,
        inconclusive_reason: failure,
        note: (verdict == Verdict::Unsafe).then(|| OVER_APPROXIMATION_NOTE.to_string()),
        violations,
        properties,
        windows: passives.iter().map(|p| [p.window.0, p.window.1]).collect(),
        max_abs_thrust_n: rdv.max_thrust,
        thrust_margin_n: rdv.max_thrust.map(|m| sc.properties.thrust_limit_n - m),
        gains: ModeGains {
            prox_a: engine.gains.0.record(),
            prox_b: engine.gains.1.record(),
        },
        stats: RunStats {
            steps: sc.steps(),
            windows: passives.len(),
            rendezvous_boxes,
            passive_boxes,
        },
        config: ScenarioFile::from_scenario(sc),
        flowpipe,
    }
}

fn run_windows(sc: &Scenario, windows: &[(f64, f64)]) -> Result<VerificationReport> {
    let engine = Engine::new(sc)?;
    let rdv = engine.rendezvous_pipe()?;
    let passives = windows
        .par_iter()
        .map(|w| engine.passive_pipe(&rdv, *w, true, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(&engine, &rdv, &passives))
}

/// Verify with the whole abort window aggregated into one passive pipe.
pub fn verify(sc: &Scenario) -> Result<VerificationReport> {
    run_windows(sc, &[(sc.t1, sc.t2)])
}

/// Verify with the abort window split into sub-windows of width `w`.
pub fn verify_windowed(sc: &Scenario, w: f64) -> Result<VerificationReport> {
    sc.validate()?;
    let windows = partition_window(sc.t1, sc.t2, w)?;
    run_windows(sc, &windows)
}

/// A concrete trajectory violating a property.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub sample: usize,
    pub property: String,
    pub mode: ModeId,
    pub time_s: f64,
    /// Abort time of the offending branch; `None` for the no-abort branch.
    pub passive_at_s: Option<f64>,
    pub initial_state: Vec<f64>,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalsifyOutcome {
    pub samples: usize,
    pub counterexample: Option<Counterexample>,
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Deterministic initial samples: distinct box corners, then a Halton
/// sequence over the non-degenerate coordinates.
pub fn sample_initial_states(init: &Box, count: usize) -> Vec<DVector<f64>> {
    const PRIMES: [usize; 6] = [2, 3, 5, 7, 11, 13];
    let free: Vec<usize> = (0..init.dim()).filter(|&i| init.lo()[i] < init.hi()[i]).collect();
    let mut out = Vec::with_capacity(count);
    for bits in 0..1usize << free.len() {
        if out.len() == count {
            return out;
        }
        let mut x = init.center();
        for (j, &i) in free.iter().enumerate() {
            x[i] = if bits >> j & 1 == 1 { init.hi()[i] } else { init.lo()[i] };
        }
        out.push(x);
    }
    let mut idx = 1;
    while out.len() < count {
        let mut x = init.center();
        for (j, &i) in free.iter().enumerate() {
            let u = radical_inverse(idx, PRIMES[j % PRIMES.len()]);
            x[i] = init.lo()[i] + u * (init.hi()[i] - init.lo()[i]);
        }
        out.push(x);
        idx += 1;
    }
    out
}

/// Search for a violating trajectory by simulation. Each sample runs the
/// no-abort branch to the horizon and one abort branch at a random time in
/// `[t1, t2]`.
pub fn falsify(sc: &Scenario, samples: usize, seed: u64) -> Result<FalsifyOutcome> {
    if samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let engine = Engine::for_simulation(sc)?;
    let init4 = sc.init.project(&[0, 1, 2, 3]);
    let starts = sample_initial_states(&init4, samples);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aborts: Vec<f64> = (0..samples)
        .map(|_| {
            if sc.t1 < sc.t2 {
                rng.gen_range(sc.t1..=sc.t2)
            } else {
                sc.t1
            }
        })
        .collect();

    let found = starts
        .par_iter()
        .zip(aborts.par_iter())
        .enumerate()
        .map(|(i, (x0, tp))| -> Result<Option<Counterexample>> {
            for passive_at in [None, Some(*tp)] {
                let traj = engine.simulate_point(x0, passive_at)?;
                if let Some((p, k)) = engine.first_point_violation(&traj) {
                    return Ok(Some(Counterexample {
                        sample: i,
                        property: engine.properties()[p].name.clone(),
                        mode: traj.modes[k],
                        time_s: traj.times[k],
                        passive_at_s: passive_at,
                        initial_state: x0.iter().copied().collect(),
                        trajectory: traj,
                    }));
                }
            }
            Ok(None)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FalsifyOutcome {
        samples,
        counterexample: found.into_iter().flatten().next(),
    })
}

/// Largest safe abort time for one start angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub angle_deg: f64,
    pub radius_m: f64,
    /// `None` when no tested abort horizon is safe.
    pub max_safe_t_s: Option<f64>,
}

/// Default sweep grid: every 5° and every 600 s up to the horizon.
pub fn default_sweep_grid(horizon: f64) -> (Vec<f64>, Vec<f64>) {
    let angles = (0..72).map(|i| i as f64 * 5.0).collect();
    let times = (1..)
        .map(|i| i as f64 * 600.0)
        .take_while(|t| *t <= horizon + 1e-9)
        .collect();
    (angles, times)
}

/// For each angle, the largest `T` in `t_grid` for which aborts anywhere in
/// `[0, T]` are verified safe using sub-windows of width `w`.
pub fn sweep_passive_time(
    base: &Scenario,
    angles: &[f64],
    radius: f64,
    w: f64,
    t_grid: &[f64],
) -> Result<Vec<SweepRow>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    if let Some(a) = angles.iter().find(|a| !(0.0..360.0).contains(*a)) {
        return Err(Error::Domain(format!("angle {a} outside [0, 360)")));
    }
    if let Some(t) = t_grid
        .iter()
        .find(|t| !(t.is_finite() && **t >= 0.0 && **t <= base.horizon))
    {
        return Err(Error::Domain(format!("grid time {t} outside [0, horizon]")));
    }
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    angles
        .par_iter()
        .map(|&angle| {
            let mut sc = base.recentred(polar_position(radius, angle))?;
            sc.t1 = 0.0;
            sc.t2 = t_max;
            let engine = Engine::new(&sc)?;
            let rdv = engine.rendezvous_pipe()?;
            let mut best: Option<f64> = None;
            if rdv.is_safe() {
                let mut memo: HashMap<(u64, u64), bool> = HashMap::new();
                for &t in t_grid {
                    let mut safe = true;
                    for win in partition_window(0.0, t, w)? {
                        let key = (win.0.to_bits(), win.1.to_bits());
                        let ok = match memo.get(&key) {
                            Some(ok) => *ok,
                            None => {
                                let ok = engine.passive_pipe(&rdv, win, false, true)?.is_safe();
                                memo.insert(key, ok);
                                ok
                            }
                        };
                        if !ok {
                            safe = false;
                            break;
                        }
                    }
                    if safe {
                        best = Some(best.map_or(t, |b: f64| b.max(t)));
                    }
                }
            }
            Ok(SweepRow {
                angle_deg: angle,
                radius_m: radius,
                max_safe_t_s: best,
            })
        })
        .collect()
}
