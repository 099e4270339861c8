//! Numerical propagation: matrix exponential stepping for linear flows and
//! fixed-step RK4 for the nonlinear closed loop.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::PlanarRegion;
use crate::hybrid::ModeId;
use crate::orbital::{nonlinear_field, ForceVec, OrbitalParams, StateVec};

/// `e^M` by scaling and squaring with a diagonal Padé approximant
/// (Higham 2005 degree selection).
pub fn matrix_exp(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("expm of {}x{} matrix", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow("non-finite entry in matrix exponent".into()));
    }
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);

    const THETA: [(usize, f64); 4] = [
        (3, 1.495585217958292e-2),
        (5, 2.539_398_330_063_23e-1),
        (7, 9.504178996162932e-1),
        (9, 2.097847961257068),
    ];
    const THETA_13: f64 = 5.371920351148152;

    for (degree, theta) in THETA {
        if norm1 <= theta {
            let (u, v) = pade_low(m, degree);
            return finish(u, v, 0);
        }
    }
    let squarings = ((norm1 / THETA_13).log2().ceil()).max(0.0) as u32;
    let scaled = m / 2f64.powi(squarings as i32);
    let (u, v) = pade13(&scaled);
    finish(u, v, squarings)
}

fn finish(u: DMatrix<f64>, v: DMatrix<f64>, squarings: u32) -> Result<DMatrix<f64>> {
    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::Overflow("Padé denominator is singular".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow("matrix exponential overflowed".into()));
    }
    Ok(r)
}

fn pade_coefficients(degree: usize) -> &'static [f64] {
    match degree {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        _ => unreachable!("unsupported Padé degree"),
    }
}

fn pade_low(a: &DMatrix<f64>, degree: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = pade_coefficients(degree);
    let n = a.nrows();
    let a2 = a * a;
    let mut odd = DMatrix::identity(n, n) * b[1];
    let mut even = DMatrix::identity(n, n) * b[0];
    let mut power = DMatrix::identity(n, n);
    for k in 1..=degree / 2 {
        power = &power * &a2;
        odd += &power * b[2 * k + 1];
        even += &power * b[2 * k];
    }
    (a * odd, even)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];
    (u, v)
}

/// One-step transition matrix of a linear flow.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPropagator {
    phi: DMatrix<f64>,
    h: f64,
    tag: String,
}

impl StepPropagator {
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.phi * x
    }
}

/// `Phi = e^{A h}` for the flow `ẋ = A x`.
pub fn build_propagator(a: &DMatrix<f64>, h: f64, tag: impl Into<String>) -> Result<StepPropagator> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {h}")));
    }
    Ok(StepPropagator {
        phi: matrix_exp(&(a * h))?,
        h,
        tag: tag.into(),
    })
}

/// Sampled trajectory, optionally tagged with the active mode per sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub modes: Vec<ModeId>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, t: f64, x: DVector<f64>, mode: ModeId) {
        self.times.push(t);
        self.states.push(x);
        self.modes.push(mode);
    }
}

/// `states[k] = Phi^k x0` for `k = 0..=steps`.
pub fn simulate_linear(prop: &StepPropagator, x0: &DVector<f64>, steps: usize) -> Result<Trajectory> {
    if x0.len() != prop.dim() {
        return Err(Error::Dimension(format!(
            "state {} vs propagator {}",
            x0.len(),
            prop.dim()
        )));
    }
    let mut traj = Trajectory::default();
    let mut x = x0.clone();
    for k in 0..=steps {
        let next = prop.apply(&x);
        traj.push(k as f64 * prop.h, x, ModeId::Passive);
        x = next;
    }
    // mode tags are meaningless for a single flow
    traj.modes.clear();
    Ok(traj)
}

/// Switching logic of the rendezvous controller for point simulation.
#[derive(Debug, Clone)]
pub struct ModeLogic {
    /// ProxA gain in acceleration units.
    pub gain_a: DMatrix<f64>,
    /// ProxB gain in acceleration units.
    pub gain_b: DMatrix<f64>,
    /// ProxB region; ProxA is its complement.
    pub guard: PlanarRegion,
    /// Time at which the chaser goes passive, if any.
    pub passive_at: Option<f64>,
}

impl ModeLogic {
    /// Mode after resolving urgent transitions at time `t`.
    pub fn resolve(&self, mode: ModeId, pos: [f64; 2], t: f64) -> ModeId {
        if mode == ModeId::Passive {
            return mode;
        }
        if self.passive_at.is_some_and(|tp| t >= tp) {
            return ModeId::Passive;
        }
        rendezvous_transition(mode, self.guard.contains(pos))
    }

    pub fn gain(&self, mode: ModeId) -> Option<&DMatrix<f64>> {
        match mode {
            ModeId::ProxA => Some(&self.gain_a),
            ModeId::ProxB => Some(&self.gain_b),
            ModeId::Passive => None,
        }
    }
}

/// Urgent ProxA/ProxB switching: enter ProxB on (or inside) the guard, leave
/// it once strictly outside.
pub fn rendezvous_transition(mode: ModeId, inside_guard: bool) -> ModeId {
    match (mode, inside_guard) {
        (ModeId::ProxA, true) => ModeId::ProxB,
        (ModeId::ProxB, false) => ModeId::ProxA,
        (m, _) => m,
    }
}

/// Fixed-step RK4 of the nonlinear relative dynamics under the switched
/// feedback `F = -m_c K_mode x` (zero thrust in Passive). Modes are resolved
/// at the start of every step and held for its duration.
pub fn simulate_nonlinear(
    params: &OrbitalParams,
    logic: &ModeLogic,
    x0: StateVec,
    h: f64,
    horizon: f64,
) -> Result<Trajectory> {
    if !(h > 0.0 && horizon >= h) {
        return Err(Error::Domain(format!(
            "need h > 0 and horizon >= h, got h={h}, T={horizon}"
        )));
    }
    let steps = (horizon / h).round() as usize;
    let m_c = params.chaser_mass();
    let mut traj = Trajectory::default();
    let mut s = x0;
    let mut mode = ModeId::ProxA;
    for k in 0..=steps {
        let t = k as f64 * h;
        mode = logic.resolve(mode, [s.x, s.y], t);
        traj.push(t, DVector::from_row_slice(&s.to_array()), mode);
        if k == steps {
            break;
        }
        let gain = logic.gain(mode).cloned();
        let field = |st: &StateVec| -> Result<StateVec> {
            let f = match &gain {
                Some(g) => {
                    let x = DVector::from_row_slice(&st.to_array());
                    let u = -(g * x) * m_c;
                    ForceVec::new(u[0], u[1])
                }
                None => ForceVec::default(),
            };
            nonlinear_field(params, st, &f)
        };
        s = rk4_step(&field, &s, h)?;
        if !s.is_finite() {
            return Err(Error::Overflow(format!("nonlinear state diverged at t={t}")));
        }
    }
    Ok(traj)
}

fn rk4_step<F>(f: &F, s: &StateVec, h: f64) -> Result<StateVec>
where
    F: Fn(&StateVec) -> Result<StateVec>,
{
    let axpy = |a: &StateVec, b: &StateVec, c: f64| {
        StateVec::new(a.x + c * b.x, a.y + c * b.y, a.vx + c * b.vx, a.vy + c * b.vy)
    };
    let k1 = f(s)?;
    let k2 = f(&axpy(s, &k1, 0.5 * h))?;
    let k3 = f(&axpy(s, &k2, 0.5 * h))?;
    let k4 = f(&axpy(s, &k3, h))?;
    Ok(StateVec::new(
        s.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        s.y + h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        s.vx + h / 6.0 * (k1.vx + 2.0 * k2.vx + 2.0 * k3.vx + k4.vx),
        s.vy + h / 6.0 * (k1.vy + 2.0 * k2.vy + 2.0 * k3.vy + k4.vy),
    ))
}

/// Fixed-step RK4 for a linear flow; used as an independent check of the
/// matrix-exponential propagator.
pub fn rk4_linear(a: &DMatrix<f64>, x0: &DVector<f64>, h: f64, steps: usize) -> DVector<f64> {
    let mut x = x0.clone();
    for _ in 0..steps {
        let k1 = a * &x;
        let k2 = a * (&x + &k1 * (0.5 * h));
        let k3 = a * (&x + &k2 * (0.5 * h));
        let k4 = a * (&x + &k3 * h);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqr::design_mode_gains;
    use crate::orbital::cwh_matrices;
    use proptest::prelude::*;

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    /// Truncated Taylor series with enough terms for small-norm inputs.
    fn taylor_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let mut term = DMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..60 {
            term = &term * m / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn expm_trivial_cases() {
        assert_eq!(matrix_exp(&DMatrix::zeros(3, 3)).unwrap(), DMatrix::identity(3, 3));
        let d = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.3, -2.0]));
        let e = matrix_exp(&d).unwrap();
        assert!((e[(0, 0)] - 0.3f64.exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = matrix_exp(&nil).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(rel_err(&e, &expect) < 1e-15);
    }

    #[test]
    fn expm_rotation_and_large_norm() {
        for theta in [0.01, 0.7, 3.0, 40.0] {
            let m = DMatrix::from_row_slice(2, 2, &[0.0, theta, -theta, 0.0]);
            let e = matrix_exp(&m).unwrap();
            let expect = DMatrix::from_row_slice(2, 2, &[theta.cos(), theta.sin(), -theta.sin(), theta.cos()]);
            assert!(rel_err(&e, &expect) < 1e-12, "theta {theta}: {}", rel_err(&e, &expect));
        }
        let big = DMatrix::from_row_slice(2, 2, &[-30.0, 5.0, 0.0, -20.0]);
        let e = matrix_exp(&big).unwrap();
        // upper triangular closed form
        let e11 = (-30f64).exp();
        let e22 = (-20f64).exp();
        let e12 = 5.0 * (e11 - e22) / (-30.0 + 20.0);
        assert!((e[(0, 0)] - e11).abs() <= 1e-12 * e11);
        assert!((e[(0, 1)] - e12).abs() <= 1e-12 * e12.abs());
        assert!((e[(1, 1)] - e22).abs() <= 1e-12 * e22);
    }

    #[test]
    fn expm_matches_taylor_on_each_pade_branch() {
        let base = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.1, -0.3, 0.2, 0.05, 0.4, -0.2, 0.0, 0.3, -0.1, 0.2, 0.3, -0.4, 0.0, 0.1, -0.3, 0.2,
            ],
        );
        for scale in [0.01, 0.2, 0.8, 1.8, 4.0] {
            let m = &base * scale;
            let e = matrix_exp(&m).unwrap();
            assert!(rel_err(&e, &taylor_exp(&m)) < 1e-13, "scale {scale}");
        }
    }

    #[test]
    fn expm_overflow_is_an_error() {
        let m = DMatrix::from_row_slice(1, 1, &[1000.0]);
        assert!(matches!(matrix_exp(&m), Err(Error::Overflow(_))));
        let m = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matrix_exp(&m).is_err());
    }

    #[test]
    fn propagator_basics() {
        let p = build_propagator(&DMatrix::zeros(4, 4), 3.0, "zero").unwrap();
        assert_eq!(p.phi(), &DMatrix::identity(4, 4));
        let p = build_propagator(&DMatrix::from_element(1, 1, -1.0), 1.0, "decay").unwrap();
        assert!((p.phi()[(0, 0)] - (-1f64).exp()).abs() < 1e-16);
        assert!(build_propagator(&DMatrix::zeros(2, 2), 0.0, "bad").is_err());
    }

    #[test]
    fn propagator_semigroup_on_closed_loops() {
        let params = OrbitalParams::default();
        let lin = cwh_matrices(&params);
        let (k1, k2) = design_mode_gains(&params).unwrap();
        let b_acc = &lin.b * params.chaser_mass();
        for a in [lin.a.clone(), &lin.a - &b_acc * k1.k(), &lin.a - &b_acc * k2.k()] {
            let p1 = build_propagator(&a, 1.0, "h").unwrap();
            let p2 = build_propagator(&a, 2.0, "2h").unwrap();
            let sq = p1.phi() * p1.phi();
            assert!(rel_err(&sq, p2.phi()) < 1e-12);
        }
    }

    #[test]
    fn passive_cwh_matches_fine_rk4_over_one_orbit() {
        let params = OrbitalParams::default();
        let lin = cwh_matrices(&params);
        let period = 2.0 * std::f64::consts::PI / params.mean_motion();
        let steps = (period / 10.0).ceil() as usize;
        let h = 10.0;
        let prop = build_propagator(&lin.a, h, "passive").unwrap();
        let x0 = DVector::from_row_slice(&[-100.0, 0.0, 0.0, 0.0]);
        let traj = simulate_linear(&prop, &x0, steps).unwrap();
        let oracle = rk4_linear(&lin.a, &x0, h / 100.0, steps * 100);
        let last = traj.states.last().unwrap();
        assert!((last.rows(0, 2) - oracle.rows(0, 2)).norm() < 1e-6);
    }

    #[test]
    fn zero_state_stays_zero_and_drift_line_is_fixed() {
        let params = OrbitalParams::default();
        let prop = build_propagator(&cwh_matrices(&params).a, 1.0, "passive").unwrap();
        let traj = simulate_linear(&prop, &DVector::zeros(4), 100).unwrap();
        assert!(traj.states.iter().all(|s| s.iter().all(|v| *v == 0.0)));
        let x0 = DVector::from_row_slice(&[0.0, 250.0, 0.0, 0.0]);
        let traj = simulate_linear(&prop, &x0, 20_000).unwrap();
        for s in &traj.states {
            assert!((s[1] - 250.0).abs() < 1e-9 && s[0].abs() < 1e-9);
        }
        assert_eq!(traj.times.len(), 20_001);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn simulate_linear_dimension_check() {
        let prop = build_propagator(&DMatrix::zeros(4, 4), 1.0, "z").unwrap();
        assert!(simulate_linear(&prop, &DVector::zeros(3), 3).is_err());
    }

    proptest! {
        #[test]
        fn superposition_holds(
            x in prop::collection::vec(-1000.0f64..1000.0, 4),
            v in prop::collection::vec(-50.0f64..50.0, 4),
        ) {
            let params = OrbitalParams::default();
            let lin = cwh_matrices(&params);
            let (k1, _) = design_mode_gains(&params).unwrap();
            let a = &lin.a - (&lin.b * params.chaser_mass()) * k1.k();
            let prop = build_propagator(&a, 1.0, "a").unwrap();
            let x = DVector::from_vec(x);
            let v = DVector::from_vec(v);
            let sx = simulate_linear(&prop, &x, 300).unwrap();
            let sxv = simulate_linear(&prop, &(&x + &v), 300).unwrap();
            let sv = simulate_linear(&prop, &v, 300).unwrap();
            for k in 0..sx.len() {
                let lhs = &sxv.states[k] - &sx.states[k];
                let scale = sxv.states[k].norm().max(sx.states[k].norm()).max(1.0);
                prop_assert!((lhs - &sv.states[k]).norm() <= 1e-9 * scale);
            }
        }
    }

    fn default_logic(passive_at: Option<f64>) -> (OrbitalParams, ModeLogic) {
        let params = OrbitalParams::default();
        let (k1, k2) = design_mode_gains(&params).unwrap();
        let logic = ModeLogic {
            gain_a: k1.k().clone(),
            gain_b: k2.k().clone(),
            guard: PlanarRegion::octagon(100.0),
            passive_at,
        };
        (params, logic)
    }

    #[test]
    fn nonlinear_origin_is_equilibrium_in_passive() {
        let (params, logic) = default_logic(Some(0.0));
        let traj = simulate_nonlinear(&params, &logic, StateVec::default(), 1.0, 500.0).unwrap();
        assert!(traj.states.iter().all(|s| s.iter().all(|v| *v == 0.0)));
        assert!(traj.modes.iter().all(|m| *m == ModeId::Passive));
    }

    #[test]
    fn nonlinear_rk4_is_fourth_order() {
        // stays in ProxA over the whole horizon
        let (params, logic) = default_logic(None);
        let x0 = StateVec::new(-900.0, -400.0, 0.3, -0.2);
        let horizon = 400.0;
        let end = |h: f64| {
            let t = simulate_nonlinear(&params, &logic, x0, h, horizon).unwrap();
            t.states.last().unwrap().clone()
        };
        let reference = end(2.0);
        let e1 = (end(8.0) - &reference).norm();
        let e2 = (end(4.0) - &reference).norm();
        let ratio = e1 / e2;
        // against an h/4 reference the ratio is 255/15 = 17 for a 4th-order method
        assert!(ratio > 16.0 * 0.7 && ratio < 16.0 * 1.3, "ratio {ratio}");
    }

    #[test]
    fn nonlinear_closed_loop_tracks_the_linear_model() {
        let (params, logic) = default_logic(None);
        let h = 1.0;
        let horizon = 16200.0;
        let traj = simulate_nonlinear(&params, &logic, StateVec::new(-900.0, -400.0, 0.0, 0.0), h, horizon).unwrap();
        let entry = traj.modes.iter().position(|m| *m == ModeId::ProxB).unwrap();
        assert!(traj.times[entry] < 7200.0, "entry at {}", traj.times[entry]);
        let range = |k: usize| traj.states[k].rows(0, 2).norm();
        // monotone decrease once the initial transient is over
        for k in (600..traj.len()).step_by(60) {
            assert!(range(k) <= range(k - 60) + 1e-9, "range grew at t={}", traj.times[k]);
        }

        // linear switched closed loop with identical mode logic
        let lin = cwh_matrices(&params);
        let flows = [
            &lin.a - &lin.b * (&logic.gain_a * 500.0),
            &lin.a - &lin.b * (&logic.gain_b * 500.0),
        ];
        let props: Vec<_> = flows.iter().map(|f| build_propagator(f, h, "cl").unwrap()).collect();
        let mut x = DVector::from_row_slice(&[-900.0, -400.0, 0.0, 0.0]);
        let mut mode = ModeId::ProxA;
        let mut linear_entry = None;
        for k in 0..traj.len() {
            mode = logic.resolve(mode, [x[0], x[1]], traj.times[k]);
            if mode == ModeId::ProxB && linear_entry.is_none() {
                linear_entry = Some(k);
            }
            if k == entry || k + 1 == traj.len() {
                let gap = (traj.states[k].rows(0, 2) - x.rows(0, 2)).norm();
                assert!(gap < 5.0, "position gap {gap} at t={}", traj.times[k]);
            }
            x = props[if mode == ModeId::ProxA { 0 } else { 1 }].apply(&x);
        }
        assert!(linear_entry.unwrap().abs_diff(entry) < 60);
    }
}
