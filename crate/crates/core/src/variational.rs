//! The discrete action over backward walks, its dynamic-programming value,
//! minimizing velocity fields, and what they yield: expected characteristic
//! paths and two-sided bounds on `u`.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{GridField, Parity};
use crate::model::{CflEstimate, Model, ModelError};
use crate::scheme::{self, SchemeError};
use crate::walk::{
    eta_bundle, expectation_separable, expectation_vec, occupation_probs, Cone, ConeVelocityField, Estimate,
    ExpectationMode, LevelTable, WalkError,
};

/// Largest number of velocity-carrying nodes accepted by the brute-force
/// minimizer.
pub const BRUTE_NODES_MAX: usize = 6;
/// Number of sampled `η` trajectories kept with a sampled characteristic.
pub const ETA_BUNDLE_SIZE: usize = 64;

#[derive(Debug, Error)]
pub enum VariationalError {
    #[error("cone has {nodes} nodes; brute force handles at most {max}")]
    TooLarge { nodes: usize, max: usize },
    #[error("value table has {levels} levels; the cone needs level {top}")]
    NotCovered { top: usize, levels: usize },
    #[error("expected a {expected} field at level 0")]
    BadInitialField { expected: Parity },
    #[error("resolution must be at least 2")]
    BadResolution,
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActionEvaluation {
    pub n: i64,
    pub top: usize,
    pub value: f64,
    pub std_error: f64,
    pub mode: ExpectationMode,
}

fn require_initial(field: &GridField, parity: Parity) -> Result<(), VariationalError> {
    if field.parity != parity || field.level != 0 {
        return Err(VariationalError::BadInitialField { expected: parity });
    }
    Ok(())
}

/// `L^c(x_m, t_{k−1}, ξ) Δt` on levels `1..=top` and `v⁰(x_m)` on level 0.
fn action_table(field: &ConeVelocityField, model: &Model, v0: &GridField) -> Result<LevelTable, VariationalError> {
    let cone = field.cone();
    let mesh = cone.mesh;
    let lag = model.lagrangian();
    let mut table: LevelTable = Vec::with_capacity(cone.top + 1);
    table.push(cone.level(0).map(|m| v0.at(m)).collect());
    for k in 1..=cone.top {
        let row = cone
            .level(k)
            .map(|m| {
                let xi = field.get(m, k).expect("node is in the cone");
                Ok(lag.eval(mesh.x(m), mesh.t(k - 1), xi)? * mesh.dt)
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        table.push(row);
    }
    Ok(table)
}

/// `E_μ[Σ_{0<k≤top} L^c(γ^k, t_{k−1}, ξ^k) Δt + v⁰(γ⁰)] + h(c) t_top`.
pub fn action(
    field: &ConeVelocityField,
    model: &Model,
    v0: &GridField,
    mode: ExpectationMode,
) -> Result<ActionEvaluation, VariationalError> {
    require_initial(v0, Parity::Odd)?;
    let cone = field.cone();
    let table = action_table(field, model, v0)?;
    let est = expectation_separable(field, &table, mode)?;
    Ok(ActionEvaluation {
        n: cone.n,
        top: cone.top,
        value: est.mean + model.h * cone.mesh.t(cone.top),
        std_error: est.std_error,
        mode,
    })
}

/// The value `V` on the odd grid for levels `0..=k(T)`, built level by level
/// with the same arithmetic as [`scheme::lf_step_v`].
#[derive(Debug, Clone)]
pub struct ValueTable {
    pub model: Model,
    pub history: Vec<GridField>,
    /// Largest `|ξ*|` met while building the table.
    pub max_speed: f64,
}

/// Builds `V`. Each level checks that the minimizing velocity is interior,
/// `|H_p(x_m, t_k, c + D_x V_{m+1}^k)| < 1/λ`.
pub fn value_table(model: &Model, v0: &GridField, t_final: f64, cfl: &CflEstimate) -> Result<ValueTable, VariationalError> {
    require_initial(v0, Parity::Odd)?;
    let mesh = *v0.mesh();
    if !(mesh.lambda < cfl.cfl_limit) {
        return Err(SchemeError::LambdaAboveCfl {
            lambda: mesh.lambda,
            cfl_limit: cfl.cfl_limit,
        }
        .into());
    }
    let steps = mesh.steps_to(t_final);
    let mut history = Vec::with_capacity(steps + 1);
    history.push(v0.clone());
    let mut max_speed: f64 = 0.0;
    for _ in 0..steps {
        let v = history.last().unwrap();
        let u = scheme::u_from_v(v)?;
        let (m, hp) = scheme::max_speed(model, &u);
        if !(hp < 1.0 / mesh.lambda) {
            return Err(SchemeError::CflViolation {
                m,
                k: v.level,
                hp,
                limit: 1.0 / mesh.lambda,
            }
            .into());
        }
        max_speed = max_speed.max(hp);
        let next = scheme::step_v_unchecked(v, model);
        history.push(next);
    }
    Ok(ValueTable {
        model: model.clone(),
        history,
        max_speed,
    })
}

impl ValueTable {
    pub fn levels(&self) -> usize {
        self.history.len()
    }

    pub fn value(&self, n: i64, k: usize) -> f64 {
        self.history[k].at(n)
    }

    fn covers(&self, top: usize) -> Result<(), VariationalError> {
        if top >= self.history.len() {
            return Err(VariationalError::NotCovered {
                top,
                levels: self.history.len(),
            });
        }
        Ok(())
    }
}

/// `ξ*` at node `(x_m, t_k)` of the cone: `H_p(x_m, t_{k−1}, c + D_x V_{m+1}^{k−1})`.
pub fn minimizing_field(table: &ValueTable, cone: &Cone) -> Result<ConeVelocityField, VariationalError> {
    table.covers(cone.top)?;
    let mesh = cone.mesh;
    let model = &table.model;
    let mut err = None;
    let field = ConeVelocityField::from_fn(cone, |m, k| {
        let v = &table.history[k - 1];
        let slope = (v.at(m + 1) - v.at(m - 1)) / (2.0 * mesh.dx);
        let xi = model.speed(mesh.x(m), mesh.t(k - 1), slope);
        if !(xi.abs() < 1.0 / mesh.lambda) && err.is_none() {
            err = Some(SchemeError::CflViolation {
                m,
                k: k - 1,
                hp: xi.abs(),
                limit: 1.0 / mesh.lambda,
            });
        }
        xi.clamp(-1.0 / mesh.lambda, 1.0 / mesh.lambda)
    })?;
    match err {
        Some(e) => Err(e.into()),
        None => Ok(field),
    }
}

/// Grid minimum of the action over all fields whose node values lie on a
/// `resolution`-point grid of `[−1/λ, 1/λ]`, followed by one refinement pass
/// of `resolution` points on `[ξ_best − s, ξ_best + s]`, `s` the grid spacing.
///
/// The action of a product field is minimized node by node through the
/// backward recursion `W(m, k) = min_ξ { p₊ W(m+1, k−1) + p₋ W(m−1, k−1) +
/// L^c(x_m, t_{k−1}, ξ) Δt }`, which is exact for grid-restricted fields.
/// Ties resolve to the smallest candidate.
pub fn brute_force_infimum(cone: &Cone, model: &Model, v0: &GridField, resolution: usize) -> Result<f64, VariationalError> {
    require_initial(v0, Parity::Odd)?;
    if cone.node_count() > BRUTE_NODES_MAX {
        return Err(VariationalError::TooLarge {
            nodes: cone.node_count(),
            max: BRUTE_NODES_MAX,
        });
    }
    if resolution < 2 {
        return Err(VariationalError::BadResolution);
    }
    let bound = 1.0 / cone.mesh.lambda;
    // Candidates are `-B + 2B·q/(r-1)²` for integer q, so the lattices for
    // r and 2r-1 nest bitwise and refinement never raises the result.
    let r1 = (resolution - 1) as i64;
    let den = (r1 * r1) as f64;
    let point = |q: i64| -bound + 2.0 * bound * (q as f64 / den);
    nodewise_minimum(cone, model, v0, &|objective| {
        let mut best = (f64::INFINITY, 0);
        for j in 0..=r1 {
            let q = j * r1;
            let value = objective(point(q))?;
            if value < best.0 {
                best = (value, q);
            }
        }
        let centre = best.1;
        for j in 0..=r1 {
            let q = centre - r1 + 2 * j;
            if !(0..=r1 * r1).contains(&q) {
                continue;
            }
            let value = objective(point(q))?;
            if value < best.0 {
                best = (value, q);
            }
        }
        Ok(best.0)
    })
}

type Objective<'a> = dyn Fn(f64) -> Result<f64, ModelError> + 'a;

/// Backward recursion over the cone; `search` minimizes one node's objective.
pub(crate) fn nodewise_minimum(
    cone: &Cone,
    model: &Model,
    v0: &GridField,
    search: &dyn Fn(&Objective<'_>) -> Result<f64, ModelError>,
) -> Result<f64, VariationalError> {
    let mesh = cone.mesh;
    let lag = model.lagrangian();
    let mut below: Vec<f64> = cone.level(0).map(|m| v0.at(m)).collect();
    for k in 1..=cone.top {
        let mut row = Vec::with_capacity(cone.width(k));
        for (i, m) in cone.level(k).enumerate() {
            let (w_minus, w_plus) = (below[i], below[i + 1]);
            let objective = |xi: f64| -> Result<f64, ModelError> {
                let s = (mesh.lambda * xi).clamp(-1.0, 1.0);
                let cost = lag.eval(mesh.x(m), mesh.t(k - 1), xi)? * mesh.dt;
                Ok(0.5 * (1.0 - s) * w_plus + 0.5 * (1.0 + s) * w_minus + cost)
            };
            row.push(search(&objective)?);
        }
        below = row;
    }
    Ok(below[0] + model.h * mesh.t(cone.top))
}

/// Expected minimizing walk `E[γ^k]` and its linear interpolation.
#[derive(Debug, Clone, Serialize)]
pub struct CharacteristicPath {
    pub n: i64,
    pub top: usize,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Per-level `σ̃^k` when requested.
    pub sigma: Option<Vec<f64>>,
    /// `η` trajectories of sampled paths (sampled mode only).
    pub eta_paths: Vec<Vec<f64>>,
    pub mode: ExpectationMode,
}

impl CharacteristicPath {
    /// Linear interpolation of `E[γ^k]` at `t ∈ [0, t_top]`.
    pub fn at(&self, t: f64) -> f64 {
        let last = self.times.len() - 1;
        let dt = self.times[1.min(last)] - self.times[0];
        if last == 0 || t <= self.times[0] {
            return self.mean[0];
        }
        if t >= self.times[last] {
            return self.mean[last];
        }
        let k = ((t / dt).floor() as usize).min(last - 1);
        let w = (t - self.times[k]) / dt;
        (1.0 - w) * self.mean[k] + w * self.mean[k + 1]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["k", "t_k", "mean_position"];
        if self.sigma.is_some() {
            header.push("sigma");
        }
        w.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut record = vec![k.to_string(), format!("{:.17e}", self.times[k]), format!("{:.17e}", self.mean[k])];
            if let Some(sigma) = &self.sigma {
                record.push(format!("{:.17e}", sigma[k]));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds `ξ*` on the cone and the expected walk it generates.
pub fn characteristic(
    cone: &Cone,
    table: &ValueTable,
    mode: ExpectationMode,
    with_sigma: bool,
) -> Result<CharacteristicPath, VariationalError> {
    let field = minimizing_field(table, cone)?;
    let mesh = cone.mesh;
    let top = cone.top;
    let (mean, std_error) = match mode {
        ExpectationMode::Occupation => {
            let p = occupation_probs(&field);
            let mean = (0..=top)
                .map(|k| cone.level(k).zip(&p[k]).map(|(m, pi)| pi * mesh.x(m)).sum())
                .collect();
            (mean, vec![0.0; top + 1])
        }
        _ => {
            let f = |path: &[i64], out: &mut [f64]| {
                for (o, &m) in out.iter_mut().zip(path) {
                    *o = mesh.x(m);
                }
            };
            let est: Vec<Estimate> = expectation_vec(&field, top + 1, &f, mode)?;
            (est.iter().map(|e| e.mean).collect(), est.iter().map(|e| e.std_error).collect())
        }
    };
    let sigma = if with_sigma {
        let stats = crate::walk::dispersion_stats(&field, mode)?;
        Some(stats.iter().map(|l| l.sigma).collect())
    } else {
        None
    };
    let eta_paths = match mode {
        ExpectationMode::Sampled { n_samples, seed } => eta_bundle(&field, n_samples.min(ETA_BUNDLE_SIZE), seed),
        _ => Vec::new(),
    };
    Ok(CharacteristicPath {
        n: cone.n,
        top,
        times: (0..=top).map(|k| mesh.t(k)).collect(),
        mean,
        std_error,
        sigma,
        eta_paths,
        mode,
    })
}

/// Two-sided estimate of `u_{n+1}^{top}` along the minimizing walks of the
/// neighbouring nodes `n` and `n + 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UBounds {
    pub n: i64,
    pub top: usize,
    pub lower: f64,
    pub upper: f64,
    /// `u_{n+1}^{top} = (V_{n+2} − V_n)/(2Δx)`.
    pub u: f64,
    /// `θΔx`.
    pub slack: f64,
}

impl UBounds {
    pub fn holds(&self) -> bool {
        self.lower - self.slack <= self.u && self.u <= self.upper + self.slack
    }
}

fn lx_table(field: &ConeVelocityField, model: &Model, u0: &GridField, shift: i64) -> Result<LevelTable, VariationalError> {
    let cone = field.cone();
    let mesh = cone.mesh;
    let lag = model.lagrangian();
    let mut table: LevelTable = Vec::with_capacity(cone.top + 1);
    table.push(cone.level(0).map(|m| u0.at(m + shift)).collect());
    for k in 1..=cone.top {
        let row = cone
            .level(k)
            .map(|m| {
                let xi = field.get(m, k).expect("node is in the cone");
                Ok(lag.deriv_x(mesh.x(m), mesh.t(k - 1), xi)? * mesh.dt)
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        table.push(row);
    }
    Ok(table)
}

/// Upper estimate along `ξ*` for `V_n` with `u⁰(γ⁰ + Δx)`; lower estimate
/// along `ξ̃*` for `V_{n+2}` with `u⁰(γ̃⁰ − Δx)`.
pub fn u_bounds(
    n: i64,
    top: usize,
    table: &ValueTable,
    u0: &GridField,
    cfl: &CflEstimate,
    mode: ExpectationMode,
) -> Result<UBounds, VariationalError> {
    require_initial(u0, Parity::Even)?;
    table.covers(top)?;
    let mesh = *u0.mesh();
    let left = Cone::new(&mesh, n, top)?;
    let right = Cone::new(&mesh, n + 2, top)?;
    let left_field = minimizing_field(table, &left)?;
    let right_field = minimizing_field(table, &right)?;
    let upper = expectation_separable(&left_field, &lx_table(&left_field, &table.model, u0, 1)?, mode)?.mean;
    let lower = expectation_separable(&right_field, &lx_table(&right_field, &table.model, u0, -1)?, mode)?.mean;
    let u = (table.value(n + 2, top) - table.value(n, top)) / (2.0 * mesh.dx);
    Ok(UBounds {
        n,
        top,
        lower,
        upper,
        u,
        slack: cfl.theta * mesh.dx,
    })
}
