//! Hamiltonian/Lagrangian pairs, the Legendre transform, sampled checks of
//! the convexity/growth/regularity assumptions, and the stability constants
//! that bound the admissible mesh ratio.
//!
//! A flux `H(x, t, p)` is periodic in `x` and `t` with period 1, strictly
//! convex and superlinear in `p`. Its conjugate is
//! `L(x, t, ξ) = sup_p {ξp − H(x, t, p)}` and the drift-shifted running cost is
//! `L^c(x, t, ξ) = L(x, t, ξ) − cξ`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

/// Relative step for every finite-difference fallback derivative.
pub const FD_STEP: f64 = 1e-6;
/// Step tolerance of the conjugate-momentum root search.
pub const TOL_NEWTON: f64 = 1e-12;
/// Iteration cap of the conjugate-momentum root search.
pub const MAX_ITER: usize = 100;

const MAX_BRACKET_EXPANSIONS: usize = 64;
const PERIODICITY_TOL: f64 = 1e-10;
const CURVATURE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("conjugate momentum search did not converge at (x={x}, t={t}, xi={xi}) after {iterations} iterations")]
    NoConvergence { x: f64, t: f64, xi: f64, iterations: usize },
    #[error("H_p is not increasing on [{lo}, {hi}] at (x={x}, t={t})")]
    NotConvex { x: f64, t: f64, lo: f64, hi: f64 },
    #[error("assumption {clause} violated at (x={x}, t={t}, p={p}): witness {witness}")]
    AssumptionViolated {
        clause: Clause,
        x: f64,
        t: f64,
        p: f64,
        witness: f64,
    },
    #[error("unknown Hamiltonian `{0}`")]
    UnknownHamiltonian(String),
    #[error("invalid parameter `{name}` for Hamiltonian `{model}`: {reason}")]
    BadParameter {
        model: String,
        name: String,
        reason: String,
    },
    #[error("non-finite input")]
    NonFinite,
}

/// Assumption clauses checked by [`verify_assumptions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Clause {
    /// Periodicity in `x` and `t`.
    A1,
    /// Strict convexity in `p`.
    A2,
    /// Superlinear growth in `p`.
    A3,
    /// `|L_x| ≤ α(|L| + 1)`.
    A4,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Clause::A1 => "A1 (periodicity)",
            Clause::A2 => "A2 (strict convexity)",
            Clause::A3 => "A3 (superlinearity)",
            Clause::A4 => "A4 (L_x growth)",
        };
        f.write_str(s)
    }
}

/// How the Legendre transform of a flux is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConjugateKind {
    AnalyticConjugate,
    NumericConjugate,
}

/// Maximizer and value of `sup_p {ξp − H(x, t, p)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conjugate {
    pub momentum: f64,
    pub value: f64,
}

fn fd_step(at: f64) -> f64 {
    FD_STEP * at.abs().max(1.0)
}

pub(crate) fn central_difference(f: impl Fn(f64) -> f64, at: f64) -> f64 {
    let h = fd_step(at);
    (f(at + h) - f(at - h)) / (2.0 * h)
}

/// A flux `H(x, t, p)`, periodic with period 1 in `x` and `t`.
///
/// Only [`Hamiltonian::eval`] is required; derivatives fall back to central
/// differences and the conjugate to a safeguarded Newton search.
pub trait Hamiltonian: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn eval(&self, x: f64, t: f64, p: f64) -> f64;

    fn deriv_p(&self, x: f64, t: f64, p: f64) -> f64 {
        central_difference(|q| self.eval(x, t, q), p)
    }

    fn deriv_x(&self, x: f64, t: f64, p: f64) -> f64 {
        central_difference(|y| self.eval(y, t, p), x)
    }

    fn conjugate_kind(&self) -> ConjugateKind {
        ConjugateKind::NumericConjugate
    }

    /// Closed-form conjugate, for `AnalyticConjugate` fluxes.
    fn analytic_conjugate(&self, _x: f64, _t: f64, _xi: f64) -> Option<Conjugate> {
        None
    }

    /// True when `H` does not depend on `(x, t)`.
    fn is_autonomous(&self) -> bool {
        false
    }
}

/// `H = p²/2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Burgers;

impl Hamiltonian for Burgers {
    fn name(&self) -> &str {
        "burgers"
    }
    fn eval(&self, _x: f64, _t: f64, p: f64) -> f64 {
        0.5 * p * p
    }
    fn deriv_p(&self, _x: f64, _t: f64, p: f64) -> f64 {
        p
    }
    fn deriv_x(&self, _x: f64, _t: f64, _p: f64) -> f64 {
        0.0
    }
    fn conjugate_kind(&self) -> ConjugateKind {
        ConjugateKind::AnalyticConjugate
    }
    fn analytic_conjugate(&self, _x: f64, _t: f64, xi: f64) -> Option<Conjugate> {
        Some(Conjugate {
            momentum: xi,
            value: 0.5 * xi * xi,
        })
    }
    fn is_autonomous(&self) -> bool {
        true
    }
}

/// `H = p²/2 − A·cos(2π(x − ωt))`, a travelling periodic forcing.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticForced {
    pub amplitude: f64,
    pub omega: f64,
}

impl QuadraticForced {
    fn phase(&self, x: f64, t: f64) -> f64 {
        2.0 * PI * (x - self.omega * t)
    }
}

impl Default for QuadraticForced {
    fn default() -> Self {
        Self {
            amplitude: 0.1,
            omega: 1.0,
        }
    }
}

impl Hamiltonian for QuadraticForced {
    fn name(&self) -> &str {
        "quadratic-forced"
    }
    fn eval(&self, x: f64, t: f64, p: f64) -> f64 {
        0.5 * p * p - self.amplitude * self.phase(x, t).cos()
    }
    fn deriv_p(&self, _x: f64, _t: f64, p: f64) -> f64 {
        p
    }
    fn deriv_x(&self, x: f64, t: f64, _p: f64) -> f64 {
        2.0 * PI * self.amplitude * self.phase(x, t).sin()
    }
    fn conjugate_kind(&self) -> ConjugateKind {
        ConjugateKind::AnalyticConjugate
    }
    fn analytic_conjugate(&self, x: f64, t: f64, xi: f64) -> Option<Conjugate> {
        Some(Conjugate {
            momentum: xi,
            value: 0.5 * xi * xi + self.amplitude * self.phase(x, t).cos(),
        })
    }
    fn is_autonomous(&self) -> bool {
        self.amplitude == 0.0
    }
}

/// `H = p⁴/4 + p²/2`; its conjugate has no convenient closed form.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quartic;

impl Hamiltonian for Quartic {
    fn name(&self) -> &str {
        "quartic"
    }
    fn eval(&self, _x: f64, _t: f64, p: f64) -> f64 {
        let p2 = p * p;
        0.25 * p2 * p2 + 0.5 * p2
    }
    fn deriv_p(&self, _x: f64, _t: f64, p: f64) -> f64 {
        p * p * p + p
    }
    fn deriv_x(&self, _x: f64, _t: f64, _p: f64) -> f64 {
        0.0
    }
    fn is_autonomous(&self) -> bool {
        true
    }
}

type FluxFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

/// A flux given only by a closure; every derivative and the conjugate are
/// numeric.
pub struct FnHamiltonian {
    name: String,
    eval: Box<FluxFn>,
    autonomous: bool,
}

impl FnHamiltonian {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Box::new(eval),
            autonomous: false,
        }
    }

    pub fn autonomous(mut self) -> Self {
        self.autonomous = true;
        self
    }
}

impl fmt::Debug for FnHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnHamiltonian")
            .field("name", &self.name)
            .field("autonomous", &self.autonomous)
            .finish()
    }
}

impl Hamiltonian for FnHamiltonian {
    fn name(&self) -> &str {
        &self.name
    }
    fn eval(&self, x: f64, t: f64, p: f64) -> f64 {
        (self.eval)(x, t, p)
    }
    fn is_autonomous(&self) -> bool {
        self.autonomous
    }
}

/// Builds one of the named builtin fluxes from a parameter map.
///
/// `quadratic-forced` reads `amplitude` (default 0.1) and `omega` (default 1);
/// the others take no parameters.
pub fn builtin(
    name: &str,
    params: &std::collections::BTreeMap<String, f64>,
) -> Result<Arc<dyn Hamiltonian>, ModelError> {
    let reject_unknown = |allowed: &[&str]| -> Result<(), ModelError> {
        match params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(ModelError::BadParameter {
                model: name.to_string(),
                name: k.clone(),
                reason: "unknown parameter".into(),
            }),
            None => Ok(()),
        }
    };
    match name {
        "burgers" => {
            reject_unknown(&[])?;
            Ok(Arc::new(Burgers))
        }
        "quartic" => {
            reject_unknown(&[])?;
            Ok(Arc::new(Quartic))
        }
        "quadratic-forced" => {
            reject_unknown(&["amplitude", "omega"])?;
            let d = QuadraticForced::default();
            let amplitude = params.get("amplitude").copied().unwrap_or(d.amplitude);
            let omega = params.get("omega").copied().unwrap_or(d.omega);
            if !amplitude.is_finite() || !omega.is_finite() {
                return Err(ModelError::BadParameter {
                    model: name.into(),
                    name: "amplitude/omega".into(),
                    reason: "must be finite".into(),
                });
            }
            Ok(Arc::new(QuadraticForced { amplitude, omega }))
        }
        other => Err(ModelError::UnknownHamiltonian(other.to_string())),
    }
}

/// Slope `H_p(x, t, p)`.
pub fn hamiltonian_p(ham: &dyn Hamiltonian, x: f64, t: f64, p: f64) -> Result<f64, ModelError> {
    if !(x.is_finite() && t.is_finite() && p.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    Ok(ham.deriv_p(x, t, p))
}

/// Solves `H_p(x, t, p) = ξ` by geometric bracketing followed by Newton steps
/// that fall back to bisection whenever they leave the bracket.
pub fn conjugate_momentum(ham: &dyn Hamiltonian, x: f64, t: f64, xi: f64) -> Result<f64, ModelError> {
    if !(x.is_finite() && t.is_finite() && xi.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    let g = |p: f64| ham.deriv_p(x, t, p) - xi;

    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let (mut g_lo, mut g_hi) = (g(lo), g(hi));
    if g_lo >= g_hi {
        return Err(ModelError::NotConvex { x, t, lo, hi });
    }
    let mut expansions = 0;
    while g_lo > 0.0 {
        let next = 2.0 * lo;
        let g_next = g(next);
        if g_next >= g_lo {
            return Err(ModelError::NotConvex { x, t, lo: next, hi: lo });
        }
        hi = lo;
        g_hi = g_lo;
        lo = next;
        g_lo = g_next;
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS {
            return Err(ModelError::NoConvergence { x, t, xi, iterations: expansions });
        }
    }
    while g_hi < 0.0 {
        let next = 2.0 * hi;
        let g_next = g(next);
        if g_next <= g_hi {
            return Err(ModelError::NotConvex { x, t, lo: hi, hi: next });
        }
        lo = hi;
        g_lo = g_hi;
        hi = next;
        g_hi = g_next;
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS {
            return Err(ModelError::NoConvergence { x, t, xi, iterations: expansions });
        }
    }
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }

    let mut p = 0.5 * (lo + hi);
    for _ in 0..MAX_ITER {
        let gp = g(p);
        if gp == 0.0 {
            return Ok(p);
        }
        if gp < 0.0 {
            lo = p;
        } else {
            hi = p;
        }
        let slope = central_difference(|q| ham.deriv_p(x, t, q), p);
        let newton = p - gp / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - p).abs() <= TOL_NEWTON * p.abs().max(1.0) || hi - lo <= TOL_NEWTON * p.abs().max(1.0) {
            return Ok(next);
        }
        p = next;
    }
    Err(ModelError::NoConvergence { x, t, xi, iterations: MAX_ITER })
}

/// Conjugate pair `(p*, L(x, t, ξ))` for the undrifted Lagrangian.
pub fn conjugate(ham: &dyn Hamiltonian, x: f64, t: f64, xi: f64) -> Result<Conjugate, ModelError> {
    if ham.conjugate_kind() == ConjugateKind::AnalyticConjugate {
        if let Some(c) = ham.analytic_conjugate(x, t, xi) {
            return Ok(c);
        }
    }
    let momentum = conjugate_momentum(ham, x, t, xi)?;
    Ok(Conjugate {
        momentum,
        value: xi * momentum - ham.eval(x, t, momentum),
    })
}

/// Running cost `L^c(x, t, ξ) = sup_p {ξp − H(x, t, p)} − cξ`.
pub fn legendre(ham: &dyn Hamiltonian, x: f64, t: f64, xi: f64, c: f64) -> Result<f64, ModelError> {
    Ok(conjugate(ham, x, t, xi)?.value - c * xi)
}

/// The drift-shifted Lagrangian `L^c` of a flux, with its derivatives.
#[derive(Clone, Copy)]
pub struct Lagrangian<'a> {
    ham: &'a dyn Hamiltonian,
    /// Drift parameter `c`.
    pub c: f64,
}

impl<'a> Lagrangian<'a> {
    pub fn new(ham: &'a dyn Hamiltonian, c: f64) -> Self {
        Self { ham, c }
    }

    pub fn eval(&self, x: f64, t: f64, xi: f64) -> Result<f64, ModelError> {
        legendre(self.ham, x, t, xi, self.c)
    }

    /// `L^c_ξ = p* − c`.
    pub fn deriv_xi(&self, x: f64, t: f64, xi: f64) -> Result<f64, ModelError> {
        Ok(conjugate(self.ham, x, t, xi)?.momentum - self.c)
    }

    /// `L^c_x = L_x = −H_x(x, t, p*)` by the envelope theorem.
    pub fn deriv_x(&self, x: f64, t: f64, xi: f64) -> Result<f64, ModelError> {
        if self.ham.is_autonomous() {
            return Ok(0.0);
        }
        let p = conjugate(self.ham, x, t, xi)?.momentum;
        Ok(-self.ham.deriv_x(x, t, p))
    }

    pub fn deriv_xx(&self, x: f64, t: f64, xi: f64) -> Result<f64, ModelError> {
        if self.ham.is_autonomous() {
            return Ok(0.0);
        }
        let h = fd_step(x);
        Ok((self.deriv_x(x + h, t, xi)? - self.deriv_x(x - h, t, xi)?) / (2.0 * h))
    }
}

/// A flux together with the drift `c` and the constant `h(c)` of the
/// Hamilton-Jacobi equation `v_t + H(x, t, c + v_x) = h(c)`.
#[derive(Clone, Debug)]
pub struct Model {
    pub ham: Arc<dyn Hamiltonian>,
    pub c: f64,
    pub h: f64,
}

impl Model {
    pub fn new(ham: Arc<dyn Hamiltonian>, c: f64, h: f64) -> Self {
        Self { ham, c, h }
    }

    /// `H(x, t, c + u)`.
    #[inline]
    pub fn flux(&self, x: f64, t: f64, u: f64) -> f64 {
        self.ham.eval(x, t, self.c + u)
    }

    /// `H_p(x, t, c + u)`.
    #[inline]
    pub fn speed(&self, x: f64, t: f64, u: f64) -> f64 {
        self.ham.deriv_p(x, t, self.c + u)
    }

    pub fn lagrangian(&self) -> Lagrangian<'_> {
        Lagrangian::new(self.ham.as_ref(), self.c)
    }
}

/// Sampling lattice used by the assumption and stability estimates.
///
/// Velocities are sampled through momenta: each momentum `p` on the ladder
/// contributes the velocity `ξ = H_p(x, t, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleLattice {
    pub nx: usize,
    pub nt: usize,
    pub np: usize,
    pub p_max: f64,
}

impl Default for SampleLattice {
    fn default() -> Self {
        Self {
            nx: 64,
            nt: 64,
            np: 129,
            p_max: 4.0,
        }
    }
}

impl SampleLattice {
    fn space_time(&self, autonomous: bool) -> Vec<(f64, f64)> {
        let (nx, nt) = if autonomous { (1, 1) } else { (self.nx.max(1), self.nt.max(1)) };
        let mut out = Vec::with_capacity(nx * nt);
        for i in 0..nx {
            for j in 0..nt {
                out.push((i as f64 / nx as f64, j as f64 / nt as f64));
            }
        }
        out
    }

    fn momenta(&self, extra: &[f64]) -> Vec<f64> {
        let n = self.np.max(2);
        let mut ps: Vec<f64> = (0..n)
            .map(|i| -self.p_max + 2.0 * self.p_max * i as f64 / (n - 1) as f64)
            .collect();
        ps.extend(extra.iter().copied().filter(|p| p.abs() <= self.p_max));
        ps.sort_by(f64::total_cmp);
        ps.dedup();
        ps
    }
}

/// Sampled witnesses for the flux assumptions. Every entry is a lattice
/// maximum or minimum; none of them is a proof.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub model: String,
    pub lattice: SampleLattice,
    /// Largest `|H(x+1, t, p) − H(x, t, p)|` and `|H(x, t+1, p) − H(x, t, p)|`.
    pub periodicity_defect: f64,
    /// Smallest second divided difference of `H` in `p`.
    pub min_curvature: f64,
    /// Smallest `H/|p|` at `|p| = p_max/2` and at `|p| = p_max`.
    pub growth_ratio: [f64; 2],
    /// Largest `|L_x|/(|L| + 1)` (drift `c = 0`).
    pub alpha1_hat: f64,
    pub status: &'static str,
}

/// Checks periodicity, strict convexity, superlinearity and the `L_x` growth
/// bound on a sampling lattice.
pub fn verify_assumptions(ham: &dyn Hamiltonian, lattice: &SampleLattice) -> Result<AssumptionReport, ModelError> {
    let points = lattice.space_time(ham.is_autonomous());
    let momenta = lattice.momenta(&[0.0]);
    if points.is_empty() || momenta.len() < 3 {
        return Err(ModelError::BadParameter {
            model: ham.name().into(),
            name: "lattice".into(),
            reason: "sample lattice is empty".into(),
        });
    }

    let mut periodicity_defect = 0.0_f64;
    for &(x, t) in &points {
        for &p in &momenta {
            let base = ham.eval(x, t, p);
            let scale = base.abs().max(1.0);
            for shifted in [ham.eval(x + 1.0, t, p), ham.eval(x, t + 1.0, p)] {
                let d = (shifted - base).abs();
                periodicity_defect = periodicity_defect.max(d);
                if d > PERIODICITY_TOL * scale {
                    return Err(ModelError::AssumptionViolated {
                        clause: Clause::A1,
                        x,
                        t,
                        p,
                        witness: d,
                    });
                }
            }
        }
    }

    let mut min_curvature = f64::INFINITY;
    for &(x, t) in &points {
        for w in momenta.windows(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            let left = (ham.eval(x, t, b) - ham.eval(x, t, a)) / (b - a);
            let right = (ham.eval(x, t, c) - ham.eval(x, t, b)) / (c - b);
            let curvature = 2.0 * (right - left) / (c - a);
            let slope_gain = ham.deriv_p(x, t, c) - ham.deriv_p(x, t, a);
            min_curvature = min_curvature.min(curvature);
            if curvature <= CURVATURE_TOL || slope_gain <= 0.0 {
                return Err(ModelError::AssumptionViolated {
                    clause: Clause::A2,
                    x,
                    t,
                    p: b,
                    witness: curvature,
                });
            }
        }
    }

    let half = 0.5 * lattice.p_max;
    let mut growth_ratio = [f64::INFINITY; 2];
    for &(x, t) in &points {
        for sign in [-1.0, 1.0] {
            let r_half = ham.eval(x, t, sign * half) / half;
            let r_full = ham.eval(x, t, sign * lattice.p_max) / lattice.p_max;
            growth_ratio[0] = growth_ratio[0].min(r_half);
            growth_ratio[1] = growth_ratio[1].min(r_full);
            if r_full <= r_half {
                return Err(ModelError::AssumptionViolated {
                    clause: Clause::A3,
                    x,
                    t,
                    p: sign * lattice.p_max,
                    witness: r_full - r_half,
                });
            }
        }
    }

    let alpha1_hat = alpha1_sample(ham, &points, &momenta, 0.0);

    Ok(AssumptionReport {
        model: ham.name().into(),
        lattice: *lattice,
        periodicity_defect,
        min_curvature,
        growth_ratio,
        alpha1_hat,
        status: "sampled, not proven",
    })
}

fn alpha1_sample(ham: &dyn Hamiltonian, points: &[(f64, f64)], momenta: &[f64], c: f64) -> f64 {
    if ham.is_autonomous() {
        return 0.0;
    }
    let mut best = 0.0_f64;
    for &(x, t) in points {
        for &p in momenta {
            let xi = ham.deriv_p(x, t, p);
            let l = xi * p - ham.eval(x, t, p) - c * xi;
            let lx = -ham.deriv_x(x, t, p);
            best = best.max(lx.abs() / (l.abs() + 1.0));
        }
    }
    best
}

/// Stability constants: the velocity bound `slope_bound` and the admissible
/// mesh ratio `cfl_limit = 1/slope_bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CflEstimate {
    pub c0: f64,
    pub c1: f64,
    pub r: f64,
    pub t_final: f64,
    pub l_star: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub theta: f64,
    pub slope_bound: f64,
    pub cfl_limit: f64,
}

/// Evaluates the stability constants for drifts in `[c0, c1]`, data bound `r`
/// and horizon `t_final`. All maxima over `(x, t)` are lattice maxima.
pub fn cfl_estimate(
    ham: &dyn Hamiltonian,
    c_range: [f64; 2],
    r: f64,
    t_final: f64,
    lattice: &SampleLattice,
) -> Result<CflEstimate, ModelError> {
    let [c0, c1] = c_range;
    let points = lattice.space_time(ham.is_autonomous());
    let momenta = lattice.momenta(&[0.0, c0, c1]);

    let mut inf_lc = f64::INFINITY;
    for &(x, t) in &points {
        for &p in &momenta {
            let xi = ham.deriv_p(x, t, p);
            let l = xi * p - ham.eval(x, t, p);
            inf_lc = inf_lc.min(l - c0 * xi).min(l - c1 * xi);
        }
    }
    let l_star = inf_lc.min(0.0).abs();

    let alpha1 = alpha1_sample(ham, &points, &momenta, c0).max(alpha1_sample(ham, &points, &momenta, c1));

    let mut max_l0 = f64::NEG_INFINITY;
    for &(x, t) in &points {
        max_l0 = max_l0.max(conjugate(ham, x, t, 0.0)?.value);
    }
    let alpha2 = r + t_final * max_l0;
    let alpha3 = alpha1 * ((1.0 + 2.0 * l_star) * t_final + alpha2 + r);

    let upper = c1 + 1.0 + r + alpha3;
    let lower = c0 - 1.0 - r - alpha3;
    let mut slope_bound = 0.0_f64;
    for &(x, t) in &points {
        slope_bound = slope_bound
            .max(ham.deriv_p(x, t, upper).abs())
            .max(ham.deriv_p(x, t, lower).abs());
    }

    let mut max_lxx = 0.0_f64;
    if !ham.is_autonomous() {
        let lag = Lagrangian::new(ham, 0.0);
        let n = lattice.np.max(2);
        for &(x, t) in &points {
            for i in 0..n {
                let xi = -slope_bound + 2.0 * slope_bound * i as f64 / (n - 1) as f64;
                max_lxx = max_lxx.max(lag.deriv_xx(x, t, xi)?.abs());
            }
        }
    }

    Ok(CflEstimate {
        c0,
        c1,
        r,
        t_final,
        l_star,
        alpha1,
        alpha2,
        alpha3,
        theta: t_final * max_lxx,
        slope_bound,
        cfl_limit: 1.0 / slope_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid_sup(f: impl Fn(f64) -> f64) -> f64 {
        // dense-grid maximization oracle over p in [-10, 10]
        (0..=200_000)
            .map(|i| -10.0 + 20.0 * i as f64 / 200_000.0)
            .map(f)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn legendre_examples() {
        assert_eq!(legendre(&Burgers, 0.0, 0.0, 0.0, 0.0).unwrap(), 0.0);

        let oracle = grid_sup(|p| p - 0.5 * p * p);
        assert_abs_diff_eq!(oracle, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(legendre(&Burgers, 0.0, 0.0, 1.0, 0.0).unwrap(), oracle, epsilon = 1e-9);

        let forced = FnHamiltonian::new("shifted", |_, _, p| 0.5 * p * p - 0.3);
        let oracle = grid_sup(|p| p - (0.5 * p * p - 0.3)) - 0.2;
        assert_abs_diff_eq!(oracle, 0.6, epsilon = 1e-9);
        assert_abs_diff_eq!(legendre(&forced, 0.1, 0.2, 1.0, 0.2).unwrap(), oracle, epsilon = 1e-9);
    }

    #[test]
    fn numeric_conjugate_of_quartic() {
        // H_p = p³ + p = 2 at p = 1, so L(2) = 2 − 3/4
        let c = conjugate(&Quartic, 0.0, 0.0, 2.0).unwrap();
        assert_abs_diff_eq!(c.momentum, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.value, 1.25, epsilon = 1e-12);
        let big = conjugate(&Quartic, 0.0, 0.0, -1.0e4).unwrap();
        assert_abs_diff_eq!(Quartic.deriv_p(0.0, 0.0, big.momentum), -1.0e4, epsilon = 1e-6);
    }

    #[test]
    fn slope_examples() {
        assert_eq!(hamiltonian_p(&Burgers, 0.0, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(hamiltonian_p(&Burgers, 0.0, 0.0, 2.0).unwrap(), 2.0);
        let quartic = FnHamiltonian::new("quartic-fd", |_, _, p| p.powi(4) / 4.0 + p * p / 2.0);
        assert_abs_diff_eq!(hamiltonian_p(&quartic, 0.0, 0.0, 1.0).unwrap(), 2.0, epsilon = 1e-8);
        assert_eq!(hamiltonian_p(&Burgers, f64::NAN, 0.0, 1.0), Err(ModelError::NonFinite));
    }

    #[test]
    fn conjugate_rejects_decreasing_slope() {
        let concave = FnHamiltonian::new("concave", |_, _, p| -0.5 * p * p);
        assert!(matches!(
            conjugate_momentum(&concave, 0.0, 0.0, 0.3),
            Err(ModelError::NotConvex { .. })
        ));
    }

    #[test]
    fn assumptions_burgers_and_linear() {
        let report = verify_assumptions(&Burgers, &SampleLattice::default()).unwrap();
        assert_eq!(report.alpha1_hat, 0.0);
        assert!(report.min_curvature > 0.99);

        let linear = FnHamiltonian::new("linear", |_, _, p| p);
        match verify_assumptions(&linear, &SampleLattice::default()) {
            Err(ModelError::AssumptionViolated { clause, .. }) => assert_eq!(clause, Clause::A2),
            other => panic!("expected A2 violation, got {other:?}"),
        }
    }

    #[test]
    fn assumptions_sine_potential() {
        let ham = FnHamiltonian::new("sine", |x, _, p| 0.5 * p * p - (2.0 * PI * x).sin());
        let lattice = SampleLattice { nx: 64, nt: 4, np: 65, p_max: 4.0 };
        let report = verify_assumptions(&ham, &lattice).unwrap();
        // oracle: |L_x|/(|L|+1) with L = ξ²/2 + sin(2πx) peaks at x = 0, ξ = 0
        let mut oracle = 0.0_f64;
        for i in 0..64 {
            let x = i as f64 / 64.0;
            for j in 0..=64 {
                let xi = -4.0 + 8.0 * j as f64 / 64.0;
                let l = 0.5 * xi * xi + (2.0 * PI * x).sin();
                oracle = oracle.max(2.0 * PI * (2.0 * PI * x).cos().abs() / (l.abs() + 1.0));
            }
        }
        assert!(report.alpha1_hat <= 2.0 * PI + 1e-6);
        assert_abs_diff_eq!(report.alpha1_hat, oracle, epsilon = 1e-6);
    }

    #[test]
    fn periodicity_violation_is_reported() {
        let ham = FnHamiltonian::new("drift", |x, _, p| 0.5 * p * p + x);
        match verify_assumptions(&ham, &SampleLattice { nx: 4, nt: 4, np: 9, p_max: 2.0 }) {
            Err(ModelError::AssumptionViolated { clause, .. }) => assert_eq!(clause, Clause::A1),
            other => panic!("expected A1 violation, got {other:?}"),
        }
    }

    #[test]
    fn cfl_examples() {
        let lattice = SampleLattice::default();
        let e = cfl_estimate(&Burgers, [0.0, 0.0], 1.0, 1.0, &lattice).unwrap();
        assert_eq!(e.alpha1, 0.0);
        assert_eq!(e.alpha2, 1.0);
        assert_eq!(e.alpha3, 0.0);
        assert_eq!(e.slope_bound, 2.0);
        assert_eq!(e.cfl_limit, 0.5);
        assert_eq!(e.cfl_limit * e.slope_bound, 1.0);

        let e = cfl_estimate(&Burgers, [0.0, 0.0], 0.0, 1.0, &lattice).unwrap();
        assert_eq!(e.slope_bound, 1.0);
        assert_eq!(e.cfl_limit, 1.0);

        let e = cfl_estimate(&Burgers, [-1.0, 1.0], 0.0, 1.0, &lattice).unwrap();
        assert_eq!(e.slope_bound, 2.0);
        assert_abs_diff_eq!(e.l_star, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn cfl_forced_quadratic_constants() {
        let ham = QuadraticForced { amplitude: 0.1, omega: 1.0 };
        let e = cfl_estimate(&ham, [0.0, 0.0], 1.0, 0.25, &SampleLattice::default()).unwrap();
        assert_abs_diff_eq!(e.l_star, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(e.alpha2, 1.0 + 0.25 * 0.1, epsilon = 1e-12);
        assert!(e.alpha1 > 0.0 && e.alpha1 <= 2.0 * PI * 0.1 / 0.9 + 1e-12);
        assert_abs_diff_eq!(e.slope_bound, 2.0 + e.alpha3, epsilon = 1e-12);
        // L_xx = −4π²A cos(·), the lattice hits the phase 0
        assert_abs_diff_eq!(e.theta, 0.25 * 4.0 * PI * PI * 0.1, epsilon = 1e-6);
    }

    proptest! {
        #[test]
        fn fenchel_equality(xi in -6.0_f64..6.0, x in 0.0_f64..1.0, t in 0.0_f64..1.0) {
            for ham in [&Quartic as &dyn Hamiltonian, &QuadraticForced::default()] {
                let conj = conjugate(ham, x, t, xi).unwrap();
                prop_assert!((ham.deriv_p(x, t, conj.momentum) - xi).abs() < 1e-8);
                prop_assert!((conj.value + ham.eval(x, t, conj.momentum) - xi * conj.momentum).abs() < 1e-8);
                let lag = Lagrangian::new(ham, 0.0);
                prop_assert!((lag.deriv_xi(x, t, xi).unwrap() - conj.momentum).abs() < 1e-12);
            }
        }

        #[test]
        fn legendre_is_convex_in_velocity(xi in -5.0_f64..5.0, step in 0.05_f64..1.0, x in 0.0_f64..1.0) {
            for ham in [&Quartic as &dyn Hamiltonian, &QuadraticForced::default(), &Burgers] {
                let l = |v: f64| legendre(ham, x, 0.3, v, 0.4).unwrap();
                prop_assert!(l(xi + step) - 2.0 * l(xi) + l(xi - step) >= -1e-10);
            }
        }

        #[test]
        fn lagrangian_derivatives_match_differences(xi in -3.0_f64..3.0, x in 0.0_f64..1.0, t in 0.0_f64..1.0) {
            let ham = QuadraticForced::default();
            let lag = Lagrangian::new(&ham, 0.3);
            let h = 1e-5;
            let dx = (lag.eval(x + h, t, xi).unwrap() - lag.eval(x - h, t, xi).unwrap()) / (2.0 * h);
            let dxi = (lag.eval(x, t, xi + h).unwrap() - lag.eval(x, t, xi - h).unwrap()) / (2.0 * h);
            prop_assert!((lag.deriv_x(x, t, xi).unwrap() - dx).abs() < 1e-6);
            prop_assert!((lag.deriv_xi(x, t, xi).unwrap() - dxi).abs() < 1e-6);
        }

        #[test]
        fn cfl_limit_positive(amplitude in 0.0_f64..0.3, r in 0.0_f64..2.0) {
            let ham = QuadraticForced { amplitude, omega: 1.0 };
            let lattice = SampleLattice { nx: 16, nt: 16, np: 33, p_max: 4.0 };
            prop_assert!(verify_assumptions(&ham, &lattice).is_ok());
            let e = cfl_estimate(&ham, [0.0, 0.0], r, 1.0, &lattice).unwrap();
            prop_assert!(e.cfl_limit > 0.0);
            prop_assert!(e.alpha2 >= r && e.alpha3 >= 0.0);
        }
    }
}
