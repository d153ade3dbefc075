//! Convergence studies along a mesh ladder.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::config::{ConfigError, DispersionField, InitialData, Resolved, StudyConfig, StudyKind};
use super::fit::{fit_rate, FitError, RateFit};
use crate::grid::{build_v0, discretize_u0, interpolate_v, GridError, GridField, MeshSpec};
use crate::model::{CflEstimate, Model};
use crate::oracle::{hopf_lax_u, hopf_lax_value, OracleError, PeriodicRiemann};
use crate::scheme::{self, InitialState, SchemeError};
use crate::variational::{characteristic, minimizing_field, value_table, VariationalError};
use crate::walk::{dispersion_stats, Cone, ConeVelocityField, WalkError};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no oracle for this study: {0}")]
    OracleUnavailable(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl StudyError {
    /// Whether the failure is a stability violation detected while running.
    pub fn is_cfl_violation(&self) -> bool {
        matches!(
            self,
            StudyError::Scheme(SchemeError::CflViolation { .. })
                | StudyError::Variational(VariationalError::Scheme(SchemeError::CflViolation { .. }))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRow {
    pub n: usize,
    pub k: usize,
    pub dx: f64,
    pub lambda: f64,
    pub error: f64,
    #[serde(skip)]
    pub runtime_s: f64,
}

/// Errors along the ladder with the fitted rate and the metadata needed to
/// re-run each row.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorTable {
    pub kind: StudyKind,
    pub model: String,
    pub c: f64,
    pub h: f64,
    pub t_final: f64,
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<ErrorRow>,
    pub fit: Option<RateFit>,
    pub fit_note: Option<String>,
}

impl ErrorTable {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    /// Whether every error is strictly below its predecessor.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "kind", "model", "c", "h", "t_final", "n", "k", "dx", "lambda", "error", "seed", "config_hash",
        ])?;
        for r in &self.rows {
            w.write_record([
                self.kind.as_str().to_string(),
                self.model.clone(),
                format!("{:.17e}", self.c),
                format!("{:.17e}", self.h),
                format!("{:.17e}", self.t_final),
                r.n.to_string(),
                r.k.to_string(),
                format!("{:.17e}", r.dx),
                format!("{:.17e}", r.lambda),
                format!("{:.17e}", r.error),
                self.seed.to_string(),
                self.config_hash.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timing_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "runtime_s"])?;
        for r in &self.rows {
            w.write_record([r.n.to_string(), format!("{:.6}", r.runtime_s)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn rate_line(&self) -> String {
        match (&self.fit, &self.fit_note) {
            (Some(f), _) => format!(
                "rate {:.4} ± {:.4} (95%, std error {:.4}) over {} meshes",
                f.rate,
                f.half_width,
                f.std_error,
                self.rows.len()
            ),
            (None, Some(note)) => format!("rate unavailable: {note}"),
            (None, None) => "rate unavailable".into(),
        }
    }
}

/// The odd node nearest to `(x, t)` at level `≥ 1`.
pub fn nearest_odd_node(mesh: &MeshSpec, x: f64, t: f64) -> (i64, usize) {
    let top = ((t / mesh.dt).round() as usize).max(1);
    let target = x / mesh.dx;
    let mut n = target.round() as i64;
    if (n + top as i64).rem_euclid(2) == 0 {
        n = if target >= n as f64 { n + 1 } else { n - 1 };
    }
    (n, top)
}

fn torus_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

struct Rung<'a> {
    config: &'a StudyConfig,
    model: &'a Model,
    cfl: &'a CflEstimate,
    mesh: MeshSpec,
}

impl Rung<'_> {
    fn initial_fields(&self) -> Result<(GridField, GridField), StudyError> {
        let u0 = discretize_u0(&self.mesh, &self.config.initial.u0())?;
        let v0 = build_v0(&self.mesh, self.config.initial.v0()(0.0), &u0)?;
        Ok((u0, v0))
    }

    fn require_hopf_lax(&self) -> Result<(), StudyError> {
        if !self.model.ham.is_autonomous() {
            return Err(StudyError::OracleUnavailable(format!(
                "flux '{}' depends on (x, t)",
                self.model.ham.name()
            )));
        }
        Ok(())
    }

    fn v_error(&self) -> Result<f64, StudyError> {
        self.require_hopf_lax()?;
        let (_, v0) = self.initial_fields()?;
        let mesh = self.mesh;
        let t_final = self.config.t_final;
        let last = mesh.steps_to(t_final);
        let state = scheme::run(self.model, &mesh, InitialState::V(v0), mesh.t(last + 1), self.cfl)?;
        let exact = self.config.initial.v0();
        let bound = self.cfl.slope_bound;
        let oracle = |x: f64, t: f64| -> Result<f64, StudyError> {
            if t == 0.0 {
                return Ok(exact(x));
            }
            Ok(hopf_lax_value(self.model, exact.as_ref(), bound, x, t)?.value)
        };
        let l = self.config.sample_lattice;
        let mut points: Vec<(f64, f64, Option<f64>)> = Vec::new();
        for j in 1..=l {
            for i in 0..l {
                points.push((i as f64 / l as f64, t_final * j as f64 / l as f64, None));
            }
        }
        for k in 1..=last {
            for (m, v) in state.v_history[k].iter() {
                points.push((mesh.x(m), mesh.t(k), Some(v)));
            }
        }
        let errors = points
            .par_iter()
            .map(|&(x, t, node)| {
                let approx = match node {
                    Some(v) => v,
                    None => interpolate_v(&state.v_history, x, t)?,
                };
                Ok((approx - oracle(x, t)?).abs())
            })
            .collect::<Result<Vec<f64>, StudyError>>()?;
        Ok(errors.into_iter().fold(0.0, f64::max))
    }

    fn u_pointwise(&self) -> Result<f64, StudyError> {
        let (u0, _) = self.initial_fields()?;
        let t = self.config.t_final;
        let state = scheme::run(self.model, &self.mesh, InitialState::U(u0), t, self.cfl)?;
        let radius = self.config.exclusion_radius();
        let riemann = match self.config.initial {
            InitialData::Riemann { u_left, u_right } => {
                if self.model.ham.name() != "burgers" {
                    return Err(StudyError::OracleUnavailable("Riemann data need the burgers flux".into()));
                }
                let exact = PeriodicRiemann {
                    u_left,
                    u_right,
                    c: self.model.c,
                };
                if !exact.separated(t) {
                    return Err(StudyError::OracleUnavailable(format!("waves interact before t = {t}")));
                }
                Some(exact)
            }
            _ => {
                self.require_hopf_lax()?;
                None
            }
        };
        let v0 = self.config.initial.v0();
        let shocks = riemann.map(|r| r.shocks(t)).unwrap_or_default();
        let count = self.config.sample_lattice * 16;
        let errors = (0..count)
            .into_par_iter()
            .map(|i| {
                let x = (i as f64 + 0.5) / count as f64;
                if shocks.iter().any(|&s| torus_distance(x, s) < radius) {
                    return Ok(0.0);
                }
                let exact = match &riemann {
                    Some(r) => r.u(x, t)?,
                    None => {
                        let hl = hopf_lax_value(self.model, v0.as_ref(), self.cfl.slope_bound, x, t)?;
                        match hopf_lax_u(self.model, &hl) {
                            Ok(u) => u,
                            Err(OracleError::NotRegular { .. }) => return Ok(0.0),
                            Err(e) => return Err(e.into()),
                        }
                    }
                };
                let approx = state.u_at(x, t).expect("t is within the run");
                Ok((approx - exact).abs())
            })
            .collect::<Result<Vec<f64>, StudyError>>()?;
        Ok(errors.into_iter().fold(0.0, f64::max))
    }

    fn point(&self) -> (i64, usize) {
        let [x, t] = self.config.point.expect("validated");
        nearest_odd_node(&self.mesh, x, t)
    }

    fn characteristic(&self) -> Result<f64, StudyError> {
        self.require_hopf_lax()?;
        let (_, v0) = self.initial_fields()?;
        let (n, top) = self.point();
        let mesh = self.mesh;
        let table = value_table(self.model, &v0, mesh.t(top), self.cfl)?;
        let cone = Cone::new(&mesh, n, top)?;
        let path = characteristic(&cone, &table, self.config.walk.mode(), false)?;
        let exact = self.config.initial.v0();
        let hl = hopf_lax_value(self.model, exact.as_ref(), self.cfl.slope_bound, mesh.x(n), mesh.t(top))?;
        Ok(path
            .times
            .iter()
            .zip(&path.mean)
            .map(|(&s, &g)| (g - hl.minimizer(s)).abs())
            .fold(0.0, f64::max))
    }

    fn dispersion(&self) -> Result<f64, StudyError> {
        let (n, top) = self.point();
        let mesh = self.mesh;
        let cone = Cone::new(&mesh, n, top)?;
        let field = match self.config.dispersion_field.unwrap_or(DispersionField::Minimizing) {
            DispersionField::Constant { value } => ConeVelocityField::constant(&cone, value)?,
            DispersionField::Minimizing => {
                let (_, v0) = self.initial_fields()?;
                let table = value_table(self.model, &v0, mesh.t(top), self.cfl)?;
                minimizing_field(&table, &cone)?
            }
        };
        let stats = dispersion_stats(&field, self.config.walk.mode())?;
        Ok(stats.iter().map(|l| l.sigma - l.bound).fold(f64::NEG_INFINITY, f64::max))
    }

    fn equivalence(&self) -> Result<f64, StudyError> {
        let (_, v0) = self.initial_fields()?;
        let t = self.config.t_final;
        let from_v = scheme::run(self.model, &self.mesh, InitialState::V(v0.clone()), t, self.cfl)?;
        let u0 = scheme::u_from_v(&v0)?;
        let from_u = scheme::run(self.model, &self.mesh, InitialState::U(u0), t, self.cfl)?;
        let mut worst: f64 = 0.0;
        for (a, b) in from_v.u_history.iter().zip(&from_u.u_history) {
            for (x, y) in a.values().iter().zip(b.values()) {
                worst = worst.max((x - y).abs());
            }
        }
        Ok(worst)
    }

    fn metric(&self) -> Result<f64, StudyError> {
        match self.config.kind {
            StudyKind::VError => self.v_error(),
            StudyKind::UPointwise => self.u_pointwise(),
            StudyKind::Characteristic => self.characteristic(),
            StudyKind::Dispersion => self.dispersion(),
            StudyKind::Equivalence => self.equivalence(),
        }
    }
}

/// Runs every rung of the ladder (in parallel) and fits the rate.
pub fn run_study(config: &StudyConfig) -> Result<ErrorTable, StudyError> {
    config.validate()?;
    let Resolved { model, cfl, meshes, .. } = config.resolve()?;
    let rows = meshes
        .par_iter()
        .map(|mesh| {
            let start = Instant::now();
            let rung = Rung {
                config,
                model: &model,
                cfl: &cfl,
                mesh: *mesh,
            };
            let error = rung.metric()?;
            Ok(ErrorRow {
                n: mesh.n,
                k: mesh.k,
                dx: mesh.dx,
                lambda: mesh.lambda,
                error,
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>, StudyError>>()?;
    let dx: Vec<f64> = rows.iter().map(|r| r.dx).collect();
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let (fit, fit_note) = match fit_rate(&dx, &errors) {
        Ok(f) => (Some(f), None),
        Err(FitError::DegenerateFit { .. }) => (None, Some("exact".to_string())),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ErrorTable {
        kind: config.kind,
        model: config.model.name.clone(),
        c: config.model.c,
        h: config.model.h,
        t_final: config.t_final,
        seed: config.seed(),
        config_hash: config.hash(),
        rows,
        fit,
        fit_note,
    })
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct StudyOutputs {
    pub table: PathBuf,
    pub timing: PathBuf,
    pub summary: PathBuf,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a StudyConfig,
    table: &'a ErrorTable,
    rate_line: String,
}

/// Writes the table CSV, a separate timing CSV, and a JSON summary into the
/// configured output directory.
pub fn write_outputs(config: &StudyConfig, table: &ErrorTable) -> Result<StudyOutputs, StudyError> {
    let dir = config.output_dir();
    fs::create_dir_all(&dir)?;
    let stem = format!("{}-{}", table.kind.as_str(), table.config_hash);
    let out = StudyOutputs {
        table: dir.join(format!("{stem}.csv")),
        timing: dir.join(format!("{stem}.timing.csv")),
        summary: dir.join(format!("{stem}.json")),
    };
    table.write_csv(fs::File::create(&out.table)?)?;
    table.write_timing_csv(fs::File::create(&out.timing)?)?;
    let summary = Summary {
        config,
        table,
        rate_line: table.rate_line(),
    };
    fs::write(&out.summary, serde_json::to_string_pretty(&summary)?)?;
    Ok(out)
}
