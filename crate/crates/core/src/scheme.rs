//! The Lax-Friedrichs update for `u_t + H(x, t, c + u)_x = 0`, the
//! equivalent Hamilton-Jacobi update for `v_t + H(x, t, c + v_x) = h(c)`,
//! the maps between their solutions, and a monitored driver.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{locate, GridError, GridField, MeshSpec, Parity};
use crate::model::{CflEstimate, Model, ModelError};

/// Round-off allowance per step for the conserved mass.
pub const MASS_DRIFT_PER_STEP: f64 = 1e-12;
const CLOSURE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("CFL violation at (m={m}, k={k}): |H_p| = {hp} exceeds {limit}")]
    CflViolation { m: i64, k: usize, hp: f64, limit: f64 },
    #[error("mesh ratio {lambda} is not below the stability limit {cfl_limit}")]
    LambdaAboveCfl { lambda: f64, cfl_limit: f64 },
    #[error("mass drifted by {drift} after {k} steps")]
    ConservationDrift { k: usize, drift: f64 },
    #[error("level {k} has mass {mass}; the spatial summation does not close")]
    NotPeriodic { k: usize, mass: f64 },
    #[error("expected a {expected} field, got {got}")]
    WrongParity { expected: Parity, got: Parity },
    #[error("history is empty")]
    EmptyHistory,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `u_{m+1}^{k+1}` from `u_m^k` (left) and `u_{m+2}^k` (right).
#[inline]
pub fn lf_node_update(model: &Model, mesh: &MeshSpec, k: usize, m: i64, left: f64, right: f64) -> f64 {
    let t = mesh.t(k);
    let flux_right = model.flux(mesh.x(m + 2), t, right);
    let flux_left = model.flux(mesh.x(m), t, left);
    0.5 * (left + right) - 0.5 * mesh.lambda * (flux_right - flux_left)
}

/// `v_m^{k+1}` from `v_{m-1}^k` (left) and `v_{m+1}^k` (right).
#[inline]
pub fn hj_node_update(model: &Model, mesh: &MeshSpec, k: usize, m: i64, left: f64, right: f64) -> f64 {
    let slope = (right - left) / (2.0 * mesh.dx);
    0.5 * (left + right) - mesh.dt * model.flux(mesh.x(m), mesh.t(k), slope) + mesh.dt * model.h
}

fn check_parity(field: &GridField, expected: Parity) -> Result<(), SchemeError> {
    if field.parity != expected {
        return Err(SchemeError::WrongParity {
            expected,
            got: field.parity,
        });
    }
    Ok(())
}

/// Largest `|H_p(x_m, t_k, c + u_m^k)|` over an even field, with its index.
pub fn max_speed(model: &Model, u: &GridField) -> (i64, f64) {
    let mesh = u.mesh();
    let t = mesh.t(u.level);
    u.iter()
        .map(|(m, um)| (m, model.speed(mesh.x(m), t, um).abs()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
}

fn require_cfl(model: &Model, u: &GridField, limit: f64) -> Result<(), SchemeError> {
    let (m, hp) = max_speed(model, u);
    if !(hp < limit) {
        return Err(SchemeError::CflViolation {
            m,
            k: u.level,
            hp,
            limit,
        });
    }
    Ok(())
}

/// One Lax-Friedrichs step of an even field.
pub fn lf_step_u(u: &GridField, model: &Model) -> Result<GridField, SchemeError> {
    check_parity(u, Parity::Even)?;
    let mesh = *u.mesh();
    require_cfl(model, u, 1.0 / mesh.lambda)?;
    let k = u.level;
    Ok(GridField::from_fn(&mesh, Parity::Even, k + 1, |j| {
        lf_node_update(model, &mesh, k, j - 1, u.at(j - 1), u.at(j + 1))
    }))
}

/// One Hamilton-Jacobi step of an odd field.
pub fn lf_step_v(v: &GridField, model: &Model) -> Result<GridField, SchemeError> {
    check_parity(v, Parity::Odd)?;
    let mesh = *v.mesh();
    require_cfl(model, &u_from_v(v)?, 1.0 / mesh.lambda)?;
    Ok(step_v_unchecked(v, model))
}

pub(crate) fn step_v_unchecked(v: &GridField, model: &Model) -> GridField {
    let mesh = *v.mesh();
    let k = v.level;
    GridField::from_fn(&mesh, Parity::Odd, k + 1, |j| {
        hj_node_update(model, &mesh, k, j, v.at(j - 1), v.at(j + 1))
    })
}

/// `u_m^k = (v_{m+1}^k − v_{m−1}^k)/(2Δx)`.
pub fn u_from_v(v: &GridField) -> Result<GridField, SchemeError> {
    check_parity(v, Parity::Odd)?;
    let mesh = *v.mesh();
    let two_dx = 2.0 * mesh.dx;
    Ok(GridField::from_fn(&mesh, Parity::Even, v.level, |m| (v.at(m + 1) - v.at(m - 1)) / two_dx))
}

/// Spatial primitive `ṽ^k` of an even field: `ṽ_1 = u_0 Δx` on even levels,
/// `ṽ_0 = 0` on odd levels, and `ṽ_{m+1} = ṽ_{m−1} + u_m·2Δx`.
fn primitive(u: &GridField) -> Result<GridField, SchemeError> {
    let mesh = *u.mesh();
    let k = u.level;
    let mass = u.mass();
    if mass.abs() > CLOSURE_TOL {
        return Err(SchemeError::NotPeriodic { k, mass });
    }
    let two_dx = 2.0 * mesh.dx;
    let mut out = GridField::zeros(&mesh, Parity::Odd, k);
    let (start, mut acc) = if k % 2 == 0 { (1, u.at(0) * mesh.dx) } else { (0, 0.0) };
    out.set(start, acc)?;
    let mut j = start + 2;
    while j < mesh.period() {
        acc += u.at(j - 1) * two_dx;
        out.set(j, acc)?;
        j += 2;
    }
    Ok(out)
}

/// Rebuilds the Hamilton-Jacobi history from a Lax-Friedrichs history.
///
/// The spatial primitive of each level solves the Hamilton-Jacobi update up
/// to a level-dependent constant `P^k`; subtracting the accumulated
/// `(P^k − h(c))Δt` restores the exact update.
pub fn v_from_u(u_history: &[GridField], v0_at_0: f64, model: &Model) -> Result<Vec<GridField>, SchemeError> {
    let first = u_history.first().ok_or(SchemeError::EmptyHistory)?;
    let mesh = *first.mesh();
    let primitives = u_history
        .iter()
        .map(|u| {
            check_parity(u, Parity::Even)?;
            primitive(u)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Vec::with_capacity(u_history.len());
    let mut shift = v0_at_0;
    for (k, tilde) in primitives.iter().enumerate() {
        out.push(GridField::from_fn(&mesh, Parity::Odd, k, |m| tilde.at(m) + shift));
        if let Some(next) = primitives.get(k + 1) {
            let u = &u_history[k];
            let t = mesh.t(k);
            let p = if k % 2 == 0 {
                (next.at(0) - 0.5 * (tilde.at(-1) + tilde.at(1))) / mesh.dt + model.flux(mesh.x(0), t, u.at(0))
            } else {
                (next.at(1) - 0.5 * (tilde.at(0) + tilde.at(2))) / mesh.dt + model.flux(mesh.x(1), t, u.at(1))
            };
            shift -= (p - model.h) * mesh.dt;
        }
    }
    Ok(out)
}

/// Initial state of a run.
#[derive(Debug, Clone)]
pub enum InitialState {
    /// Even field at level 0; advances the conservation-law scheme.
    U(GridField),
    /// Odd field at level 0; advances the Hamilton-Jacobi scheme.
    V(GridField),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMonitor {
    pub k: usize,
    pub t: f64,
    pub mass: f64,
    pub max_hp: f64,
}

/// A completed run: histories, stability constants and per-step monitors.
///
/// Runs started from `U` keep only the `u` history; runs started from `V`
/// keep both, with `u = D_x v`.
#[derive(Debug, Clone)]
pub struct RunState {
    pub mesh: MeshSpec,
    pub model: Model,
    pub cfl: CflEstimate,
    pub u_history: Vec<GridField>,
    pub v_history: Vec<GridField>,
    pub monitors: Vec<StepMonitor>,
}

impl RunState {
    /// Step-function value `u_Δ(x, t) = u_m^k` for
    /// `(x, t) ∈ [x_m − Δx, x_m + Δx) × [t_k, t_k + Δt)`.
    pub fn u_at(&self, x: f64, t: f64) -> Option<f64> {
        let (m, k) = locate(&self.mesh, x + self.mesh.dx, t, Parity::Even);
        self.u_history.get(k).map(|u| u.at(m))
    }

    pub fn final_u(&self) -> &GridField {
        self.u_history.last().expect("a run stores at least level 0")
    }

    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.monitors[0].mass;
        self.monitors.iter().fold(0.0, |a, s| a.max((s.mass - m0).abs()))
    }

    pub fn write_monitors_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "t_k", "mass", "max_hp"])?;
        for s in &self.monitors {
            w.write_record([
                s.k.to_string(),
                format!("{:.17e}", s.t),
                format!("{:.17e}", s.mass),
                format!("{:.17e}", s.max_hp),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn monitor(model: &Model, u: &GridField, cfl: &CflEstimate, mass0: f64) -> Result<StepMonitor, SchemeError> {
    let (m, max_hp) = max_speed(model, u);
    let k = u.level;
    if max_hp > cfl.slope_bound * (1.0 + 1e-12) {
        return Err(SchemeError::CflViolation {
            m,
            k,
            hp: max_hp,
            limit: cfl.slope_bound,
        });
    }
    let mass = u.mass();
    let drift = (mass - mass0).abs();
    if drift > MASS_DRIFT_PER_STEP * k as f64 {
        return Err(SchemeError::ConservationDrift { k, drift });
    }
    Ok(StepMonitor {
        k,
        t: u.mesh().t(k),
        mass,
        max_hp,
    })
}

/// Advances either scheme to `k(t_final)`, aborting on the first step whose
/// speeds exceed `cfl.slope_bound` or whose mass drifts.
pub fn run(model: &Model, mesh: &MeshSpec, init: InitialState, t_final: f64, cfl: &CflEstimate) -> Result<RunState, SchemeError> {
    if !(mesh.lambda < cfl.cfl_limit) {
        return Err(SchemeError::LambdaAboveCfl {
            lambda: mesh.lambda,
            cfl_limit: cfl.cfl_limit,
        });
    }
    let steps = mesh.steps_to(t_final);
    let mut state = RunState {
        mesh: *mesh,
        model: model.clone(),
        cfl: *cfl,
        u_history: Vec::with_capacity(steps + 1),
        v_history: Vec::new(),
        monitors: Vec::with_capacity(steps + 1),
    };
    match init {
        InitialState::U(u0) => {
            check_parity(&u0, Parity::Even)?;
            let mass0 = u0.mass();
            state.monitors.push(monitor(model, &u0, cfl, mass0)?);
            state.u_history.push(u0);
            for _ in 0..steps {
                let next = lf_step_u(state.u_history.last().unwrap(), model)?;
                state.monitors.push(monitor(model, &next, cfl, mass0)?);
                state.u_history.push(next);
            }
        }
        InitialState::V(v0) => {
            check_parity(&v0, Parity::Odd)?;
            let u0 = u_from_v(&v0)?;
            let mass0 = u0.mass();
            state.monitors.push(monitor(model, &u0, cfl, mass0)?);
            state.u_history.push(u0);
            state.v_history.push(v0);
            for _ in 0..steps {
                let next = step_v_unchecked(state.v_history.last().unwrap(), model);
                let u = u_from_v(&next)?;
                state.monitors.push(monitor(model, &u, cfl, mass0)?);
                state.u_history.push(u);
                state.v_history.push(next);
            }
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_v0, discretize_u0, Profile};
    use crate::model::{cfl_estimate, Burgers, FnHamiltonian, QuadraticForced, SampleLattice};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn burgers() -> Model {
        Model::new(Arc::new(Burgers), 0.0, 0.0)
    }

    #[test]
    fn constant_states_are_fixed() {
        let mesh = MeshSpec::new(8, 16).unwrap();
        let u = GridField::zeros(&mesh, Parity::Even, 0);
        assert_eq!(lf_step_u(&u, &burgers()).unwrap().values(), u.values());

        let a = GridField::from_fn(&mesh, Parity::Even, 3, |_| 0.7);
        let next = lf_step_u(&a, &burgers()).unwrap();
        assert_eq!(next.level, 4);
        assert!(next.values().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn hand_evaluated_flux_step() {
        // λ = 0.25: (1 + 0)/2 − 0.125·(0 − 0.5)
        let mesh = MeshSpec::new(2, 8).unwrap();
        assert_eq!(mesh.lambda, 0.25);
        assert_eq!(lf_node_update(&burgers(), &mesh, 0, 0, 1.0, 0.0), 0.5625);
    }

    #[test]
    fn hj_step_examples() {
        let mesh = MeshSpec::new(8, 16).unwrap();
        let v = GridField::from_fn(&mesh, Parity::Odd, 0, |_| 2.0);
        assert!(lf_step_v(&v, &burgers()).unwrap().values().iter().all(|&x| x == 2.0));

        // plane wave on the universal cover: v = a·x
        let a = 0.6;
        let left = a * mesh.x(4);
        let right = a * mesh.x(6);
        let next = hj_node_update(&burgers(), &mesh, 0, 5, left, right);
        assert_abs_diff_eq!(next, a * mesh.x(5) - mesh.dt * a * a / 2.0, epsilon = 1e-15);

        let offset = Model::new(Arc::new(FnHamiltonian::new("zero", |_, _, _| 0.0)), 0.0, 1.0);
        let next = step_v_unchecked(&v, &offset);
        assert!(next.values().iter().all(|&x| (x - (2.0 + mesh.dt)).abs() < 1e-15));
    }

    #[test]
    fn u_from_v_examples() {
        let mesh = MeshSpec::new(8, 8).unwrap();
        let v = GridField::from_fn(&mesh, Parity::Odd, 0, |_| 1.5);
        assert!(u_from_v(&v).unwrap().values().iter().all(|&x| x == 0.0));

        let a = -0.4;
        let v = GridField::from_fn(&mesh, Parity::Odd, 0, |m| a * mesh.x(m));
        let u = u_from_v(&v).unwrap();
        for (m, um) in u.iter() {
            if m != 0 {
                assert_abs_diff_eq!(um, a, epsilon = 1e-14);
            }
        }

        let step = Profile::PiecewiseConstant {
            breaks: vec![0.0, 1.0 / 32.0, 17.0 / 32.0],
            values: vec![1.0, -1.0, 1.0],
        };
        let mesh = MeshSpec::new(16, 16).unwrap();
        let u0 = discretize_u0(&mesh, &step).unwrap();
        let back = u_from_v(&build_v0(&mesh, 0.0, &u0).unwrap()).unwrap();
        for (m, um) in u0.iter() {
            assert_abs_diff_eq!(back.at(m), um, epsilon = 1e-13);
        }
    }

    #[test]
    fn v_from_u_trivial_and_round_trip() {
        let mesh = MeshSpec::new(8, 16).unwrap();
        let zero = Model::new(Arc::new(FnHamiltonian::new("zero", |_, _, _| 0.0)), 0.0, 0.0);
        let u_hist: Vec<GridField> = (0..4).map(|k| GridField::zeros(&mesh, Parity::Even, k)).collect();
        for v in v_from_u(&u_hist, 0.0, &zero).unwrap() {
            assert!(v.values().iter().all(|&x| x == 0.0));
        }

        let model = Model::new(Arc::new(QuadraticForced::default()), 0.2, 0.05);
        let u0 = discretize_u0(&mesh, &Profile::smooth(|x| 0.5 * (2.0 * PI * x).sin())).unwrap();
        let mut v_hist = vec![build_v0(&mesh, 0.3, &u0).unwrap()];
        for _ in 0..10 {
            let next = lf_step_v(v_hist.last().unwrap(), &model).unwrap();
            v_hist.push(next);
        }
        let u_hist: Vec<GridField> = v_hist.iter().map(|v| u_from_v(v).unwrap()).collect();
        let rebuilt = v_from_u(&u_hist, 0.3, &model).unwrap();
        for (a, b) in rebuilt.iter().zip(&v_hist) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn one_burgers_step_from_step_data() {
        let mesh = MeshSpec::new(16, 40).unwrap();
        let step = Profile::PiecewiseConstant {
            breaks: vec![0.0, 1.0 / 32.0, 17.0 / 32.0],
            values: vec![1.0, -1.0, 1.0],
        };
        let u0 = discretize_u0(&mesh, &step).unwrap();
        let u1 = lf_step_u(&u0, &burgers()).unwrap();
        let v1 = lf_step_v(&build_v0(&mesh, 0.0, &u0).unwrap(), &burgers()).unwrap();
        let rebuilt = v_from_u(&[u0, u1], 0.0, &burgers()).unwrap();
        for (x, y) in rebuilt[1].values().iter().zip(v1.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn not_periodic_is_rejected() {
        let mesh = MeshSpec::new(4, 4).unwrap();
        let u = GridField::from_fn(&mesh, Parity::Even, 0, |_| 1.0);
        assert!(matches!(v_from_u(&[u], 0.0, &burgers()), Err(SchemeError::NotPeriodic { .. })));
    }

    #[test]
    fn cfl_violation_in_step() {
        let mesh = MeshSpec::new(4, 4).unwrap();
        let u = GridField::from_fn(&mesh, Parity::Even, 0, |m| if m == 2 { 3.0 } else { -1.0 });
        match lf_step_u(&u, &burgers()) {
            Err(SchemeError::CflViolation { m, k, hp, .. }) => {
                assert_eq!((m, k), (2, 0));
                assert_eq!(hp, 3.0);
            }
            other => panic!("expected CFL violation, got {other:?}"),
        }
    }

    fn shock_data(mesh: &MeshSpec) -> GridField {
        discretize_u0(
            mesh,
            &Profile::PiecewiseConstant {
                breaks: vec![0.0, 0.5],
                values: vec![0.5, -0.5],
            },
        )
        .unwrap()
    }

    #[test]
    fn run_examples() {
        let lattice = SampleLattice::default();
        let cfl = cfl_estimate(&Burgers, [0.0, 0.0], 1.0, 0.5, &lattice).unwrap();
        let mesh = MeshSpec::new(16, 64).unwrap();
        assert_eq!(mesh.lambda, 0.25);
        let state = run(&burgers(), &mesh, InitialState::U(shock_data(&mesh)), 0.5, &cfl).unwrap();
        assert_eq!(state.u_history.len(), 65);
        assert!(state.monitors.iter().all(|s| s.max_hp <= 2.0));
        let mut buf = Vec::new();
        state.write_monitors_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 66);

        let coarse = MeshSpec::new(16, 16).unwrap();
        assert!(matches!(
            run(&burgers(), &coarse, InitialState::U(shock_data(&coarse)), 0.5, &cfl),
            Err(SchemeError::LambdaAboveCfl { .. })
        ));

        let drift = Model::new(Arc::new(Burgers), 0.3, 0.0);
        let cfl = cfl_estimate(&Burgers, [0.3, 0.3], 1.0, 0.5, &lattice).unwrap();
        let state = run(&drift, &mesh, InitialState::U(GridField::zeros(&mesh, Parity::Even, 0)), 0.5, &cfl).unwrap();
        assert!(state.monitors.iter().all(|s| s.mass == 0.0 && s.max_hp == 0.3));
    }

    #[test]
    fn run_from_v_matches_run_from_u() {
        let model = Model::new(Arc::new(QuadraticForced::default()), 0.0, 0.0);
        let cfl = cfl_estimate(model.ham.as_ref(), [0.0, 0.0], 1.0, 0.5, &SampleLattice::default()).unwrap();
        let mesh = MeshSpec::with_ratio(32, 0.8 * cfl.cfl_limit).unwrap();
        let u0 = discretize_u0(&mesh, &Profile::smooth(|x| -(2.0 * PI * x).sin())).unwrap();
        let v0 = build_v0(&mesh, 0.0, &u0).unwrap();
        let a = run(&model, &mesh, InitialState::U(u0), 0.5, &cfl).unwrap();
        let b = run(&model, &mesh, InitialState::V(v0), 0.5, &cfl).unwrap();
        for (x, y) in a.u_history.iter().zip(&b.u_history) {
            for (p, q) in x.values().iter().zip(y.values()) {
                assert_abs_diff_eq!(p, q, epsilon = 1e-11);
            }
        }
        assert!(b.max_mass_drift() <= 1e-12 * b.monitors.len() as f64);
        assert_abs_diff_eq!(a.u_at(0.0, 0.0).unwrap(), a.u_history[0].at(0), epsilon = 0.0);
    }

    proptest! {
        #[test]
        fn commuting_square(values in proptest::collection::vec(-1.0_f64..1.0, 16), c in -0.3_f64..0.3) {
            let mesh = MeshSpec::new(16, 64).unwrap();
            let model = Model::new(Arc::new(QuadraticForced::default()), c, 0.1);
            let v = GridField::from_fn(&mesh, Parity::Odd, 3, |m| 0.05 * values[(m as usize / 2) % 16]);
            let left = u_from_v(&lf_step_v(&v, &model).unwrap()).unwrap();
            let right = lf_step_u(&u_from_v(&v).unwrap(), &model).unwrap();
            for (a, b) in left.values().iter().zip(right.values()) {
                prop_assert!((a - b).abs() < 1e-11);
            }
        }

        #[test]
        fn monotone_damping(values in proptest::collection::vec(-1.0_f64..1.0, 32)) {
            let mesh = MeshSpec::new(32, 80).unwrap();
            let u = GridField::from_fn(&mesh, Parity::Even, 0, |m| values[m as usize / 2]);
            let next = lf_step_u(&u, &burgers()).unwrap();
            let max0 = u.values().iter().copied().fold(f64::MIN, f64::max);
            let max1 = next.values().iter().copied().fold(f64::MIN, f64::max);
            prop_assert!(max1 <= max0 + 1e-15);
        }

        #[test]
        fn conservation(values in proptest::collection::vec(-1.0_f64..1.0, 16)) {
            let mesh = MeshSpec::new(16, 64).unwrap();
            let mean = values.iter().sum::<f64>() / 16.0;
            let model = Model::new(Arc::new(QuadraticForced::default()), 0.0, 0.0);
            let mut u = GridField::from_fn(&mesh, Parity::Even, 0, |m| 0.5 * (values[m as usize / 2] - mean));
            let m0 = u.mass();
            for k in 1..=40 {
                u = lf_step_u(&u, &model).unwrap();
                prop_assert!((u.mass() - m0).abs() <= 1e-12 * k as f64);
            }
        }
    }
}
