//! Exact continuum solutions used as references: the Hopf-Lax formula for
//! fluxes independent of `(x, t)`, periodic Burgers Riemann data, and a
//! shooting solver for short-time characteristics of general fluxes.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Model, ModelError};

/// Candidate points in the Hopf-Lax window.
pub const HOPF_LAX_GRID: usize = 4096;
/// Width of the golden-section bracket at termination.
pub const POLISH_TOL: f64 = 1e-12;
/// Step of the characteristic integrator.
pub const DT_ODE: f64 = 1e-4;
/// Relative gap below which two local minima count as ties.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("flux '{0}' depends on (x, t); the Hopf-Lax formula does not apply")]
    NotAutonomous(String),
    #[error("({x}, {t}) is not regular: minimizers at {y1} and {y2}")]
    NotRegular { x: f64, t: f64, y1: f64, y2: f64 },
    #[error("time must be positive, got {0}")]
    BadTime(f64),
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
    #[error("characteristics through ({x}, {t}) are not bracketed in the search window")]
    NoBracket { x: f64, t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}


/// Result of a Hopf-Lax minimization at `(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfLax {
    pub x: f64,
    pub t: f64,
    pub value: f64,
    /// Foot of the straight minimizer.
    pub y: f64,
    /// A second minimizer farther than the regularity tolerance, if any.
    pub rival: Option<f64>,
}

impl HopfLax {
    pub fn velocity(&self) -> f64 {
        (self.x - self.y) / self.t
    }

    /// `γ*(s) = y* + s (x − y*)/t`.
    pub fn minimizer(&self, s: f64) -> f64 {
        self.y + s * self.velocity()
    }
}

fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let y = 0.5 * (a + b);
    (y, f(y))
}

/// Near a smooth minimum the cost is flat to rounding over a band of width
/// `~√ε`; a few Newton steps on central differences locate the stationary
/// point well inside that band. Steps leaving `[a, b]` or raising the cost
/// beyond rounding (as at a kink) are rejected.
fn newton_polish(f: &dyn Fn(f64) -> f64, mut y: f64, a: f64, b: f64, delta: f64) -> f64 {
    for _ in 0..3 {
        let (fm, f0, fp) = (f(y - delta), f(y), f(y + delta));
        let curvature = fm - 2.0 * f0 + fp;
        if !(curvature > 0.0) {
            break;
        }
        let next = y - 0.5 * delta * (fp - fm) / curvature;
        if !(a..=b).contains(&next) || f(next) > f0 + 4.0 * f64::EPSILON * f0.abs().max(1.0) {
            break;
        }
        y = next;
    }
    y
}

/// `min_y { t L^c((x − y)/t) + v⁰(y) } + h t` over `|x − y| ≤ slope_bound·t`,
/// for a flux independent of `(x, t)`. `v0` is evaluated on the real line.
pub fn hopf_lax_value(model: &Model, v0: &(dyn Fn(f64) -> f64 + Sync), slope_bound: f64, x: f64, t: f64) -> Result<HopfLax, OracleError> {
    if !model.ham.is_autonomous() {
        return Err(OracleError::NotAutonomous(model.ham.name().to_string()));
    }
    if !(t > 0.0) {
        return Err(OracleError::BadTime(t));
    }
    let lag = model.lagrangian();
    // Fail early on a bad conjugate; afterwards evaluations are known to succeed.
    lag.eval(0.0, 0.0, 0.0)?;
    let cost = |y: f64| t * lag.eval(0.0, 0.0, (x - y) / t).unwrap_or(f64::INFINITY) + v0(y);
    let lo = x - slope_bound * t;
    let step = 2.0 * slope_bound * t / (HOPF_LAX_GRID - 1) as f64;
    let values: Vec<f64> = (0..HOPF_LAX_GRID).map(|j| cost(lo + j as f64 * step)).collect();

    // polish each discrete local minimum
    let mut minima: Vec<(f64, f64)> = Vec::new();
    for j in 0..HOPF_LAX_GRID {
        let left = if j > 0 { values[j - 1] } else { f64::INFINITY };
        let right = if j + 1 < HOPF_LAX_GRID { values[j + 1] } else { f64::INFINITY };
        if values[j] <= left && values[j] < right {
            let a = lo + (j.max(1) - 1) as f64 * step;
            let b = lo + (j + 1).min(HOPF_LAX_GRID - 1) as f64 * step;
            let (y, v) = golden_section(&cost, a, b, POLISH_TOL);
            let (y, v) = if v <= values[j] { (y, v) } else { (lo + j as f64 * step, values[j]) };
            let y = newton_polish(&cost, y, a, b, 1e-5 * slope_bound * t);
            minima.push((y, v.min(cost(y))));
        }
    }
    let best = minima
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let scale = 1.0 + best.1.abs();
    let reg_tol = 10.0 * step;
    let rival = minima
        .iter()
        .filter(|(y, v)| (v - best.1) <= TIE_TOL * scale && (y - best.0).abs() > reg_tol)
        .map(|(y, _)| *y)
        .next();
    Ok(HopfLax {
        x,
        t,
        value: best.1 + model.h * t,
        y: best.0,
        rival,
    })
}

/// `u(x, t) = L^c_ξ((x − y*)/t)` at a regular point.
pub fn hopf_lax_u(model: &Model, hl: &HopfLax) -> Result<f64, OracleError> {
    if let Some(y2) = hl.rival {
        return Err(OracleError::NotRegular {
            x: hl.x,
            t: hl.t,
            y1: hl.y,
            y2,
        });
    }
    Ok(model.lagrangian().deriv_xi(0.0, 0.0, hl.velocity())?)
}

/// Entropy solution of Burgers' equation `u_t + ((c + u)²/2)_x = 0` with a
/// single jump at `x = 1/2`: `u_left` to the left, `u_right` to the right.
pub fn riemann_burgers_u(u_left: f64, u_right: f64, c: f64, x: f64, t: f64) -> f64 {
    riemann_centered(u_left, u_right, c, 0.5, x, t)
}

fn riemann_centered(a: f64, b: f64, c: f64, x0: f64, x: f64, t: f64) -> f64 {
    let xi = x - x0;
    if a > b {
        if xi < (c + 0.5 * (a + b)) * t {
            a
        } else {
            b
        }
    } else if xi <= (c + a) * t {
        a
    } else if xi >= (c + b) * t {
        b
    } else {
        xi / t - c
    }
}

/// Zone `[lo, hi]` covered by a centred Riemann wave after time `t`.
fn wave_zone(a: f64, b: f64, c: f64, x0: f64, t: f64) -> (f64, f64) {
    if a > b {
        let s = x0 + (c + 0.5 * (a + b)) * t;
        (s, s)
    } else {
        (x0 + (c + a) * t, x0 + (c + b) * t)
    }
}

/// Periodic Burgers data `u_left` on `[0, 1/2)` and `u_right` on `[1/2, 1)`.
/// The second jump at `x = 0` produces its own wave; values are available
/// until the two waves meet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicRiemann {
    pub u_left: f64,
    pub u_right: f64,
    pub c: f64,
}

impl PeriodicRiemann {
    fn zones(&self, t: f64) -> ((f64, f64), (f64, f64)) {
        (
            wave_zone(self.u_left, self.u_right, self.c, 0.5, t),
            wave_zone(self.u_right, self.u_left, self.c, 1.0, t),
        )
    }

    /// Whether the two waves are still separated at time `t`.
    pub fn separated(&self, t: f64) -> bool {
        let (z1, z2) = self.zones(t);
        z1.1 < z2.0 && z2.1 - 1.0 < z1.0
    }

    pub fn u(&self, x: f64, t: f64) -> Result<f64, OracleError> {
        if !(t > 0.0) {
            return Err(OracleError::BadTime(t));
        }
        if !self.separated(t) {
            return Err(OracleError::Unavailable(format!("waves interact before t = {t}")));
        }
        let (z1, z2) = self.zones(t);
        let start = z2.1 - 1.0;
        let y = start + (x - start).rem_euclid(1.0);
        Ok(if y < z1.0 {
            self.u_left
        } else if y <= z1.1 {
            riemann_centered(self.u_left, self.u_right, self.c, 0.5, y, t)
        } else if y < z2.0 {
            self.u_right
        } else {
            riemann_centered(self.u_right, self.u_left, self.c, 1.0, y, t)
        })
    }

    /// Shock positions in `[0, 1)` at time `t`.
    pub fn shocks(&self, t: f64) -> Vec<f64> {
        let (z1, z2) = self.zones(t);
        let mut out = Vec::new();
        if self.u_left > self.u_right {
            out.push(z1.0.rem_euclid(1.0));
        }
        if self.u_right > self.u_left {
            out.push(z2.0.rem_euclid(1.0));
        }
        out
    }
}

/// A short-time characteristic traced forward from its foot `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotCharacteristic {
    pub y: f64,
    /// `(s, x(s), p(s))` at every integrator step.
    pub trace: Vec<(f64, f64, f64)>,
}

impl ShotCharacteristic {
    pub fn end(&self) -> (f64, f64, f64) {
        *self.trace.last().expect("trace holds the foot")
    }
}

/// Integrates `x' = H_p(x, s, p)`, `p' = −H_x(x, s, p)` from
/// `(y, c + u⁰(y))` to time `t` with the explicit midpoint rule.
pub fn shoot(model: &Model, u0: &dyn Fn(f64) -> f64, y: f64, t: f64) -> ShotCharacteristic {
    let steps = ((t / DT_ODE).ceil() as usize).max(1);
    let h = t / steps as f64;
    let ham = model.ham.as_ref();
    let mut x = y;
    let mut p = model.c + u0(y);
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push((0.0, x, p));
    for i in 0..steps {
        let s = i as f64 * h;
        let xm = x + 0.5 * h * ham.deriv_p(x, s, p);
        let pm = p - 0.5 * h * ham.deriv_x(x, s, p);
        let sm = s + 0.5 * h;
        x += h * ham.deriv_p(xm, sm, pm);
        p -= h * ham.deriv_x(xm, sm, pm);
        trace.push((s + h, x, p));
    }
    ShotCharacteristic { y, trace }
}

/// Finds the characteristic reaching `(x, t)` by bisection on its foot in
/// `[x − slope_bound·t, x + slope_bound·t]`; valid before characteristics
/// cross, where the end point is increasing in the foot.
pub fn characteristic_through(
    model: &Model,
    u0: &dyn Fn(f64) -> f64,
    slope_bound: f64,
    x: f64,
    t: f64,
) -> Result<ShotCharacteristic, OracleError> {
    if !(t > 0.0) {
        return Err(OracleError::BadTime(t));
    }
    let miss = |y: f64| shoot(model, u0, y, t).end().1 - x;
    let (mut a, mut b) = (x - slope_bound * t, x + slope_bound * t);
    if !(miss(a) <= 0.0 && miss(b) >= 0.0) {
        return Err(OracleError::NoBracket { x, t });
    }
    while b - a > 1e-13 {
        let mid = 0.5 * (a + b);
        if miss(mid) <= 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(shoot(model, u0, 0.5 * (a + b), t))
}

/// Reference solutions by kind.
#[derive(Clone)]
pub enum ExactSolution {
    HopfLax {
        model: Model,
        v0: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        slope_bound: f64,
    },
    RiemannBurgers(PeriodicRiemann),
    Prescribed {
        v: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
        u: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExactSolution::HopfLax { model, slope_bound, .. } => f
                .debug_struct("HopfLax")
                .field("flux", &model.ham.name())
                .field("slope_bound", slope_bound)
                .finish(),
            ExactSolution::RiemannBurgers(r) => f.debug_tuple("RiemannBurgers").field(r).finish(),
            ExactSolution::Prescribed { .. } => f.write_str("Prescribed"),
        }
    }
}

impl ExactSolution {
    pub fn value(&self, x: f64, t: f64) -> Result<f64, OracleError> {
        match self {
            ExactSolution::HopfLax { model, v0, slope_bound } => {
                if t == 0.0 {
                    return Ok(v0(x));
                }
                Ok(hopf_lax_value(model, v0.as_ref(), *slope_bound, x, t)?.value)
            }
            ExactSolution::RiemannBurgers(_) => Err(OracleError::Unavailable("Riemann oracle provides u only".into())),
            ExactSolution::Prescribed { v, .. } => Ok(v(x, t)),
        }
    }

    /// `u(x, t)` at a regular point.
    pub fn exact_u_at_regular_point(&self, x: f64, t: f64) -> Result<f64, OracleError> {
        match self {
            ExactSolution::HopfLax { model, v0, slope_bound } => {
                let hl = hopf_lax_value(model, v0.as_ref(), *slope_bound, x, t)?;
                hopf_lax_u(model, &hl)
            }
            ExactSolution::RiemannBurgers(r) => r.u(x, t),
            ExactSolution::Prescribed { u, .. } => Ok(u(x, t)),
        }
    }

    /// Values on a batch of `(x, t)` points, evaluated in parallel.
    pub fn values(&self, points: &[(f64, f64)]) -> Result<Vec<f64>, OracleError> {
        points.par_iter().map(|&(x, t)| self.value(x, t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Burgers, FnHamiltonian, QuadraticForced};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn burgers(c: f64) -> Model {
        Model::new(Arc::new(Burgers), c, 0.0)
    }

    fn cos_v0(y: f64) -> f64 {
        (2.0 * PI * y).cos() / (2.0 * PI)
    }

    /// Foot of the Burgers characteristic `x = y − t sin(2πy)` by bisection.
    fn cosine_foot(x: f64, t: f64) -> f64 {
        let (mut a, mut b) = (x - t - 1e-9, x + t + 1e-9);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid - t * (2.0 * PI * mid).sin() < x {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn hopf_lax_examples() {
        let hl = hopf_lax_value(&burgers(0.0), &|_| 0.0, 2.0, 0.3, 0.2).unwrap();
        assert_abs_diff_eq!(hl.value, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hl.y, 0.3, epsilon = 1e-9);

        let a = 0.7;
        let hl = hopf_lax_value(&burgers(0.0), &|y| a * y, 2.0, 0.4, 0.3).unwrap();
        assert_abs_diff_eq!(hl.value, a * 0.4 - a * a / 2.0 * 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(hl.velocity(), a, epsilon = 1e-9);
        assert_abs_diff_eq!(hopf_lax_u(&burgers(0.0), &hl).unwrap(), a, epsilon = 1e-9);

        for &(x, t) in &[(0.3, 0.1), (0.71, 0.15), (0.05, 0.12)] {
            let hl = hopf_lax_value(&burgers(0.0), &cos_v0, 2.0, x, t).unwrap();
            let y = cosine_foot(x, t);
            let exact = cos_v0(y) + (x - y).powi(2) / (2.0 * t);
            assert_abs_diff_eq!(hl.value, exact, epsilon = 1e-8);
            assert!(hl.rival.is_none());
            assert_abs_diff_eq!(hopf_lax_u(&burgers(0.0), &hl).unwrap(), -(2.0 * PI * y).sin(), epsilon = 1e-8);
        }
    }

    #[test]
    fn hopf_lax_needs_autonomous_flux() {
        let model = Model::new(Arc::new(QuadraticForced::default()), 0.0, 0.0);
        assert!(matches!(
            hopf_lax_value(&model, &|_| 0.0, 2.0, 0.0, 0.1),
            Err(OracleError::NotAutonomous(_))
        ));
        assert!(matches!(hopf_lax_value(&burgers(0.0), &|_| 0.0, 2.0, 0.0, 0.0), Err(OracleError::BadTime(_))));
    }

    #[test]
    fn shock_point_is_not_regular() {
        // v⁰ = |y − 1/2| − 1/4 near the kink gives two minimizers at x = 1/2
        let v0 = |y: f64| -((y - 0.5).abs());
        let hl = hopf_lax_value(&burgers(0.0), &v0, 2.0, 0.5, 0.2).unwrap();
        assert!(matches!(hopf_lax_u(&burgers(0.0), &hl), Err(OracleError::NotRegular { .. })));
    }

    #[test]
    fn riemann_examples() {
        assert_eq!(riemann_burgers_u(1.0, -1.0, 0.0, 0.4, 0.1), 1.0);
        assert_eq!(riemann_burgers_u(1.0, -1.0, 0.0, 0.6, 0.1), -1.0);
        assert_eq!(riemann_burgers_u(-1.0, 1.0, 0.0, 0.5, 0.2), 0.0);
        assert_abs_diff_eq!(riemann_burgers_u(-1.0, 1.0, 0.0, 0.55, 0.2), 0.25, epsilon = 1e-15);
        // moving shock with drift
        assert_eq!(riemann_burgers_u(1.0, 0.0, 0.2, 0.5 + 0.7 * 0.1 - 1e-9, 0.1), 1.0);
        assert_eq!(riemann_burgers_u(1.0, 0.0, 0.2, 0.5 + 0.7 * 0.1 + 1e-9, 0.1), 0.0);
    }

    #[test]
    fn periodic_riemann_second_wave() {
        let shock = PeriodicRiemann { u_left: 1.0, u_right: -1.0, c: 0.0 };
        assert_eq!(shock.shocks(0.25), vec![0.5]);
        assert_eq!(shock.u(0.4, 0.25).unwrap(), 1.0);
        assert_eq!(shock.u(0.6, 0.25).unwrap(), -1.0);
        // fan centred at 0: u = x/t
        assert_abs_diff_eq!(shock.u(0.1, 0.25).unwrap(), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(shock.u(0.9, 0.25).unwrap(), -0.4, epsilon = 1e-15);
        assert!(shock.u(0.2, 0.6).is_err());

        let fan = PeriodicRiemann { u_left: -1.0, u_right: 1.0, c: 0.0 };
        assert_eq!(fan.shocks(0.25), vec![0.0]);
        assert_abs_diff_eq!(fan.u(0.55, 0.2).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(fan.u(0.1, 0.2).unwrap(), -1.0);
        assert_eq!(fan.u(0.95, 0.2).unwrap(), 1.0);
    }

    #[test]
    fn periodic_riemann_matches_hopf_lax() {
        // v⁰ is the periodic primitive of the step data
        for (ul, ur) in [(1.0, -1.0), (-1.0, 1.0)] {
            let v0 = move |y: f64| {
                let z = y.rem_euclid(1.0);
                if z < 0.5 {
                    ul * z
                } else {
                    ul * 0.5 + ur * (z - 0.5)
                }
            };
            let exact = PeriodicRiemann { u_left: ul, u_right: ur, c: 0.0 };
            let model = burgers(0.0);
            let t = 0.25;
            for j in 0..40 {
                let x = (j as f64 + 0.37) / 40.0;
                if exact.shocks(t).iter().any(|s| ((x - s + 0.5).rem_euclid(1.0) - 0.5).abs() < 0.02) {
                    continue;
                }
                let hl = hopf_lax_value(&model, &v0, 2.0, x, t).unwrap();
                assert_abs_diff_eq!(hopf_lax_u(&model, &hl).unwrap(), exact.u(x, t).unwrap(), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn argmin_stays_inside_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = rng.gen_range(0.0..1.0);
            let t = rng.gen_range(0.01..0.15);
            let hl = hopf_lax_value(&burgers(0.0), &cos_v0, 2.0, x, t).unwrap();
            assert!(hl.velocity().abs() < 2.0);
        }
    }

    #[test]
    fn u_matches_central_difference() {
        let model = burgers(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for _ in 0..100 {
            let x = rng.gen_range(0.0..1.0);
            let t = rng.gen_range(0.02..0.15);
            let hl = hopf_lax_value(&model, &cos_v0, 3.0, x, t).unwrap();
            let u = hopf_lax_u(&model, &hl).unwrap();
            let plus = hopf_lax_value(&model, &cos_v0, 3.0, x + h, t).unwrap().value;
            let minus = hopf_lax_value(&model, &cos_v0, 3.0, x - h, t).unwrap().value;
            assert_abs_diff_eq!(u, (plus - minus) / (2.0 * h), epsilon = 1e-6);
        }
    }

    #[test]
    fn dynamic_programming_principle() {
        let model = burgers(0.0);
        let t = 0.12;
        let tau = 0.05;
        for j in 0..8 {
            let x = j as f64 / 8.0 + 0.03;
            let direct = hopf_lax_value(&model, &cos_v0, 2.0, x, t).unwrap().value;
            let inner = |y: f64| hopf_lax_value(&model, &cos_v0, 2.0, y, tau).unwrap().value;
            let split = (0..2001)
                .map(|i| {
                    let y = x - 2.0 * (t - tau) + i as f64 * 4.0 * (t - tau) / 2000.0;
                    (x - y).powi(2) / (2.0 * (t - tau)) + inner(y)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(split >= direct - 1e-10);
            assert!(split - direct < 1e-6);
        }
    }

    #[test]
    fn shooting_reproduces_burgers_characteristics() {
        let model = burgers(0.0);
        let u0 = |y: f64| -(2.0 * PI * y).sin();
        let shot = characteristic_through(&model, &u0, 2.0, 0.3, 0.1).unwrap();
        assert_abs_diff_eq!(shot.y, cosine_foot(0.3, 0.1), epsilon = 1e-10);
        assert_abs_diff_eq!(shot.end().2, u0(shot.y), epsilon = 1e-12);
    }

    #[test]
    fn shooting_conserves_energy_for_static_potential() {
        // H = p²/2 − A cos(2πx) is conserved along characteristics
        let model = Model::new(
            Arc::new(FnHamiltonian::new("static", |x, _, p| 0.5 * p * p - 0.1 * (2.0 * PI * x).cos())),
            0.0,
            0.0,
        );
        let shot = shoot(&model, &|y| 0.3 * (2.0 * PI * y).cos(), 0.2, 0.3);
        let energy = |x: f64, p: f64| 0.5 * p * p - 0.1 * (2.0 * PI * x).cos();
        let (_, x0, p0) = shot.trace[0];
        let (_, x1, p1) = shot.end();
        assert_abs_diff_eq!(energy(x0, p0), energy(x1, p1), epsilon = 1e-7);
    }
}
