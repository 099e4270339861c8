//! Planar relative-motion models in Hill's frame.
//!
//! `x` points radially outward from the Earth, `y` along the target's
//! velocity. All quantities are SI (m, s, kg, N).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gravitational parameter used by default, m³/s².
pub const DEFAULT_MU: f64 = 3.698e14;
/// Geostationary orbit radius, m.
pub const DEFAULT_ORBIT_RADIUS: f64 = 4.2164e7;
/// Chaser mass, kg.
pub const DEFAULT_CHASER_MASS: f64 = 500.0;

/// Orbital constants of the target orbit and the chaser mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalParams {
    mu: f64,
    r: f64,
    m_c: f64,
    n: f64,
}

impl OrbitalParams {
    pub fn new(mu: f64, r: f64, m_c: f64) -> Result<Self> {
        if !(m_c.is_finite() && m_c > 0.0) {
            return Err(Error::Domain(format!("chaser mass must be positive, got {m_c}")));
        }
        let n = mean_motion(mu, r)?;
        Ok(Self { mu, r, m_c, n })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn orbit_radius(&self) -> f64 {
        self.r
    }

    pub fn chaser_mass(&self) -> f64 {
        self.m_c
    }

    /// Mean motion of the target orbit, rad/s.
    pub fn mean_motion(&self) -> f64 {
        self.n
    }
}

impl Default for OrbitalParams {
    fn default() -> Self {
        Self::new(DEFAULT_MU, DEFAULT_ORBIT_RADIUS, DEFAULT_CHASER_MASS).expect("default orbital constants are valid")
    }
}

/// Angular velocity `sqrt(mu / r³)` of a circular orbit.
pub fn mean_motion(mu: f64, r: f64) -> Result<f64> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::Domain(format!("mu must be positive, got {mu}")));
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Domain(format!("orbit radius must be positive, got {r}")));
    }
    Ok((mu / (r * r * r)).sqrt())
}

/// Relative position and velocity of the chaser.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVec {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl StateVec {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.vx, self.vy]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Separation from the target, m.
    pub fn range(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Thrust vector in newtons.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceVec {
    pub fx: f64,
    pub fy: f64,
}

impl ForceVec {
    pub fn new(fx: f64, fy: f64) -> Self {
        Self { fx, fy }
    }
}

/// Continuous-time LTI model `ẋ = A x + B F` with `F` in newtons.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.nrows() {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite entry in linear model".into()));
        }
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Clohessy-Wiltshire-Hill model for the state `(x, y, ẋ, ẏ)`.
pub fn cwh_matrices(params: &OrbitalParams) -> LinearModel {
    let n = params.mean_motion();
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        0.0,         0.0, 1.0,      0.0,
        0.0,         0.0, 0.0,      1.0,
        3.0 * n * n, 0.0, 0.0,      2.0 * n,
        0.0,         0.0, -2.0 * n, 0.0,
    ]);
    let inv_m = 1.0 / params.chaser_mass();
    #[rustfmt::skip]
    let b = DMatrix::from_row_slice(4, 2, &[
        0.0,   0.0,
        0.0,   0.0,
        inv_m, 0.0,
        0.0,   inv_m,
    ]);
    LinearModel { a, b }
}

/// Time derivative of the state under the full two-body relative dynamics.
///
/// The gravity difference `mu/r² - mu (r + x)/r_c³` is evaluated through
/// `ln_1p`/`exp_m1` so that nearby states do not lose precision to
/// cancellation of two ~0.2 m/s² terms.
pub fn nonlinear_field(params: &OrbitalParams, s: &StateVec, f: &ForceVec) -> Result<StateVec> {
    let r = params.orbit_radius();
    let n = params.mean_motion();
    let m = params.chaser_mass();
    let g = params.mu() / (r * r);

    // r_c² = r² (1 + delta)
    let delta = (2.0 * r * s.x + s.x * s.x + s.y * s.y) / (r * r);
    if !(1.0 + delta > 0.0) {
        return Err(Error::Singularity);
    }
    let log_ratio = 1.5 * delta.ln_1p();
    // (r_c / r)³ and its offset from one
    let cube = log_ratio.exp();
    let cube_m1 = log_ratio.exp_m1();

    let ax = n * n * s.x + 2.0 * n * s.vy + g * (cube_m1 - s.x / r) / cube + f.fx / m;
    let ay = n * n * s.y - 2.0 * n * s.vx - g * (s.y / r) / cube + f.fy / m;
    Ok(StateVec::new(s.vx, s.vy, ax, ay))
}

/// Closed-loop system matrix `A - B K` for the thrust law `F = -K x`.
///
/// `K` here is in newtons per state unit; an LQR gain designed in
/// acceleration units converts with [`crate::lqr::GainMatrix::newton_gain`].
pub fn closed_loop_matrix(model: &LinearModel, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if model.a.nrows() != 4 || model.b.ncols() != 2 || k.nrows() != 2 || k.ncols() != 4 {
        return Err(Error::Dimension(format!(
            "closed loop needs 4x4 A, 4x2 B, 2x4 K; got {}x{}, {}x{}, {}x{}",
            model.a.nrows(),
            model.a.ncols(),
            model.b.nrows(),
            model.b.ncols(),
            k.nrows(),
            k.ncols()
        )));
    }
    Ok(&model.a - &model.b * k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqr::GainMatrix;
    use approx_eq::rel;

    mod approx_eq {
        pub fn rel(a: f64, b: f64) -> f64 {
            (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
        }
    }

    #[test]
    fn mean_motion_values() {
        let n = mean_motion(3.698e14, 4.2164e7).unwrap();
        assert!(rel(n, 7.0238e-5) < 1e-4);
        assert!(rel(n, 7.023_777_515_109_308e-5) < 1e-12);
        assert_eq!(mean_motion(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(mean_motion(4.0, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn mean_motion_rejects_bad_domain() {
        assert!(matches!(mean_motion(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(mean_motion(1.0, -1.0), Err(Error::Domain(_))));
        assert!(OrbitalParams::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn params_invariant_holds() {
        let p = OrbitalParams::default();
        let expect = (p.mu() / p.orbit_radius().powi(3)).sqrt();
        assert!(rel(p.mean_motion(), expect) < 1e-12);
    }

    #[test]
    fn cwh_entries() {
        let p = OrbitalParams::default();
        let n = p.mean_motion();
        let m = cwh_matrices(&p);
        assert!(rel(m.a[(2, 0)], 1.4800e-8) < 1e-3);
        assert_eq!(m.a[(2, 0)], 3.0 * n * n);
        assert!(rel(m.a[(2, 3)], 1.40476e-4) < 1e-5);
        assert_eq!(m.a[(3, 2)], -2.0 * n);
        assert_eq!(m.b[(2, 0)], 0.002);
        assert_eq!(m.b[(3, 1)], 0.002);
        // B columns have a single nonzero each and are orthogonal
        assert_eq!(m.b.column(0).dot(&m.b.column(1)), 0.0);
        for c in 0..2 {
            assert_eq!(m.b.column(c).iter().filter(|v| **v != 0.0).count(), 1);
        }
    }

    #[test]
    fn cwh_zero_mean_motion_is_double_integrator() {
        // n -> 0 in the limit of a huge orbit
        let p = OrbitalParams::new(1e-300, 1e100, 500.0).unwrap();
        let m = cwh_matrices(&p);
        let mut expect = DMatrix::zeros(4, 4);
        expect[(0, 2)] = 1.0;
        expect[(1, 3)] = 1.0;
        assert_eq!(m.a, expect);
    }

    #[test]
    fn cwh_a_independent_of_mass() {
        let p1 = OrbitalParams::new(DEFAULT_MU, DEFAULT_ORBIT_RADIUS, 500.0).unwrap();
        let p2 = OrbitalParams::new(DEFAULT_MU, DEFAULT_ORBIT_RADIUS, 1234.0).unwrap();
        assert_eq!(cwh_matrices(&p1).a, cwh_matrices(&p2).a);
        assert_ne!(cwh_matrices(&p1).b, cwh_matrices(&p2).b);
    }

    #[test]
    fn field_equilibrium_and_thrust() {
        let p = OrbitalParams::default();
        let d = nonlinear_field(&p, &StateVec::default(), &ForceVec::default()).unwrap();
        assert_eq!(d, StateVec::default());
        let a = 1.5e-3;
        let d = nonlinear_field(&p, &StateVec::default(), &ForceVec::new(500.0 * a, 0.0)).unwrap();
        assert_eq!(d.vx, a);
        assert_eq!(d.vy, 0.0);
    }

    #[test]
    fn field_matches_extended_precision_oracle() {
        // Term-by-term evaluation at 50 significant digits.
        let p = OrbitalParams::default();
        let d = nonlinear_field(&p, &StateVec::new(-900.0, -400.0, 0.0, 0.0), &ForceVec::default()).unwrap();
        assert!(rel(d.vx, -1.332_028_790_092_580_7e-5) < 1e-10, "{}", d.vx);
        assert!(rel(d.vy, 1.263_691_512_334_321_5e-10) < 1e-6, "{}", d.vy);

        let d = nonlinear_field(&p, &StateVec::new(-900.0, -400.0, 0.3, -0.2), &ForceVec::new(3.0, -2.0)).unwrap();
        assert!(rel(d.vx, 5.958_584_602_038_637e-3) < 1e-12);
        assert!(rel(d.vy, -4.042_142_538_721_505e-3) < 1e-12);
    }

    #[test]
    fn field_singularity() {
        let p = OrbitalParams::default();
        let s = StateVec::new(-p.orbit_radius(), 0.0, 0.0, 0.0);
        assert!(matches!(
            nonlinear_field(&p, &s, &ForceVec::default()),
            Err(Error::Singularity)
        ));
    }

    #[test]
    fn linearization_residual_is_second_order() {
        let p = OrbitalParams::default();
        let lin = cwh_matrices(&p);
        let residual = |s: StateVec| {
            let d = nonlinear_field(&p, &s, &ForceVec::default()).unwrap();
            let v = nalgebra::DVector::from_row_slice(&s.to_array());
            let l = &lin.a * v;
            let diff = nalgebra::DVector::from_row_slice(&d.to_array()) - l;
            diff.norm()
        };
        // residual / |s|² should be roughly constant as |s| shrinks
        let dirs = [(1.0, 0.0), (0.0, 1.0), (0.6, -0.8), (-0.7, -0.7)];
        for (dx, dy) in dirs {
            let r1 = residual(StateVec::new(dx, dy, 0.0, 0.0));
            let r2 = residual(StateVec::new(0.5 * dx, 0.5 * dy, 0.0, 0.0));
            let s1 = dx * dx + dy * dy;
            let c = r1 / s1;
            // Taylor constant is ~ 3 n² / r
            let bound = 10.0 * p.mean_motion().powi(2) / p.orbit_radius();
            assert!(c <= bound, "c={c} bound={bound}");
            assert!(r2 <= bound * 0.25 * s1);
        }
    }

    #[test]
    fn closed_loop_zero_gain_and_single_entry() {
        let p = OrbitalParams::default();
        let lin = cwh_matrices(&p);
        assert_eq!(closed_loop_matrix(&lin, &DMatrix::zeros(2, 4)).unwrap(), lin.a);

        let mut k = DMatrix::zeros(2, 4);
        let k11 = 0.37;
        k[(0, 0)] = k11;
        let cl = closed_loop_matrix(&lin, &k).unwrap();
        let n = p.mean_motion();
        assert!(rel(cl[(2, 0)], 3.0 * n * n - k11 / 500.0) < 1e-12);

        // an acceleration-unit gain converts to the same closed loop
        let mut kacc = DMatrix::zeros(2, 4);
        kacc[(0, 0)] = k11 / 500.0;
        let g = GainMatrix::from_k(kacc);
        let cl2 = closed_loop_matrix(&lin, &g.newton_gain(500.0)).unwrap();
        assert!(rel(cl2[(2, 0)], cl[(2, 0)]) < 1e-12);
    }

    #[test]
    fn closed_loop_matches_naive_product() {
        let p = OrbitalParams::default();
        let lin = cwh_matrices(&p);
        let vals = [0.3, -1.2, 2.5e-3, 7.0, -0.01, 4.4, 0.9, -3.3];
        let k = DMatrix::from_row_slice(2, 4, &vals);
        let cl = closed_loop_matrix(&lin, &k).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = lin.a[(i, j)];
                for l in 0..2 {
                    acc -= lin.b[(i, l)] * k[(l, j)];
                }
                assert!((cl[(i, j)] - acc).abs() <= 1e-15 * acc.abs().max(1.0));
            }
        }
    }

    #[test]
    fn closed_loop_dimension_mismatch() {
        let p = OrbitalParams::default();
        let lin = cwh_matrices(&p);
        let k = DMatrix::zeros(3, 4);
        assert!(matches!(closed_loop_matrix(&lin, &k), Err(Error::Dimension(_))));
    }
}
