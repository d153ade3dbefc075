use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lfvar::grid::{build_v0, discretize_u0, write_history, GridField, MeshSpec};
use lfvar::harness::config::{DispersionField, Resolved};
use lfvar::harness::study::nearest_odd_node;
use lfvar::harness::{run_study, write_outputs, ConfigError, StudyConfig, StudyError};
use lfvar::model::{verify_assumptions, SampleLattice};
use lfvar::scheme::{self, u_from_v, v_from_u, InitialState, SchemeError};
use lfvar::variational::{characteristic, minimizing_field, value_table, VariationalError};
use lfvar::walk::{
    dispersion_stats, expectation, occupation_probs, Cone, ConeVelocityField, EnsembleReport, ExpectationMode,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "lfvar", version, about = "Lax-Friedrichs / Hamilton-Jacobi solver and convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML study configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set walk.seed=7`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Single solve on one rung of the ladder; writes fields and monitors.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Mesh size N (defaults to the finest rung).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Convergence study over the ladder; writes the error table.
    Study {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        kind: Option<String>,
    },
    /// Walk ensemble diagnostics at the configured point.
    Walk {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Expected minimizing walk through the configured point.
    Char {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Sampled assumption checks and a small invariant suite.
    Verify {
        /// Study configuration; without one the builtin burgers model is checked.
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

enum Failure {
    Validation(String),
    Cfl(String),
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) | Failure::Runtime(_) => 1,
            Failure::Cfl(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Cfl(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<StudyError> for Failure {
    fn from(e: StudyError) -> Self {
        if e.is_cfl_violation() {
            Failure::Cfl(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<SchemeError> for Failure {
    fn from(e: SchemeError) -> Self {
        StudyError::from(e).into()
    }
}

impl From<VariationalError> for Failure {
    fn from(e: VariationalError) -> Self {
        StudyError::from(e).into()
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Line of `text` where the last segment of a dotted `key` is assigned.
fn key_line(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next()?;
    text.lines().position(|line| {
        let line = line.split('#').next().unwrap_or("");
        line.trim_start().strip_prefix('[').is_some_and(|h| h.trim_end_matches(']').trim() == key)
            || line.match_indices(leaf).any(|(i, _)| {
                let before = line[..i].chars().last();
                let after = line[i + leaf.len()..].trim_start();
                !before.is_some_and(|c| c.is_alphanumeric() || c == '_') && after.starts_with('=')
            })
    })
    .map(|i| i + 1)
}

fn describe(path: &Path, text: &str, overrides: &[String], e: ConfigError) -> Failure {
    let msg = match &e {
        ConfigError::Invalid { key, .. } => {
            let from_override = overrides.iter().any(|o| o.split('=').next().map(str::trim) == Some(key.as_str()));
            match key_line(text, key) {
                _ if from_override => format!("{}: --set {key}: {e}", path.display()),
                Some(line) => format!("{}:{line}: {e}", path.display()),
                None => format!("{}: {e}", path.display()),
            }
        }
        _ => format!("{}: {e}", path.display()),
    };
    Failure::Validation(msg)
}

fn load(path: &Path, overrides: &[String]) -> Result<StudyConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    StudyConfig::from_toml_with_overrides(&text, overrides).map_err(|e| describe(path, &text, overrides, e))
}

fn resolve(config: &StudyConfig) -> Result<Resolved, Failure> {
    config.resolve().map_err(|e| Failure::Validation(e.to_string()))
}

fn pick_mesh(resolved: &Resolved, n: Option<usize>) -> Result<MeshSpec, Failure> {
    match n {
        None => Ok(*resolved.meshes.last().expect("ladder is non-empty")),
        Some(n) => resolved
            .meshes
            .iter()
            .find(|m| m.n == n)
            .copied()
            .ok_or_else(|| Failure::Validation(format!("invalid value for 'n': {n} is not on the ladder"))),
    }
}

fn initial_v(config: &StudyConfig, mesh: &MeshSpec) -> Result<GridField, Failure> {
    let u0 = discretize_u0(mesh, &config.initial.u0()).map_err(runtime)?;
    build_v0(mesh, (config.initial.v0())(0.0), &u0).map_err(runtime)
}

fn output_stem(config: &StudyConfig, command: &str, mesh: &MeshSpec) -> Result<PathBuf, Failure> {
    let dir = config.output_dir();
    fs::create_dir_all(&dir).map_err(runtime)?;
    Ok(dir.join(format!("{command}-{}-n{}", config.hash(), mesh.n)))
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut name = stem.as_os_str().to_owned();
    name.push(ext);
    PathBuf::from(name)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    fs::write(path, serde_json::to_string_pretty(value).map_err(runtime)?).map_err(runtime)
}

fn cmd_run(config: &StudyConfig, n: Option<usize>) -> Result<(), Failure> {
    let resolved = resolve(config)?;
    let mesh = pick_mesh(&resolved, n)?;
    let v0 = initial_v(config, &mesh)?;
    let state = scheme::run(&resolved.model, &mesh, InitialState::V(v0), config.t_final, &resolved.cfl)?;
    let stem = output_stem(config, "run", &mesh)?;
    let files = [".u.csv", ".v.csv", ".monitors.csv", ".u.hist", ".json"].map(|ext| with_ext(&stem, ext));
    state.final_u().write_csv(fs::File::create(&files[0]).map_err(runtime)?).map_err(runtime)?;
    let final_v = state.v_history.last().expect("V runs keep the v history");
    final_v.write_csv(fs::File::create(&files[1]).map_err(runtime)?).map_err(runtime)?;
    state.write_monitors_csv(fs::File::create(&files[2]).map_err(runtime)?).map_err(runtime)?;
    write_history(&state.u_history, fs::File::create(&files[3]).map_err(runtime)?).map_err(runtime)?;
    write_json(
        &files[4],
        &json!({
            "command": "run",
            "config_hash": config.hash(),
            "seed": config.seed(),
            "model": config.model,
            "n": mesh.n,
            "k": mesh.k,
            "lambda": mesh.lambda,
            "steps": state.u_history.len() - 1,
            "t_final": mesh.t(state.u_history.len() - 1),
            "max_mass_drift": state.max_mass_drift(),
            "cfl": state.cfl,
        }),
    )?;
    println!(
        "run N={} K={} steps={} drift={:.3e} config_hash={} seed={}",
        mesh.n,
        mesh.k,
        state.u_history.len() - 1,
        state.max_mass_drift(),
        config.hash(),
        config.seed()
    );
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_study(config: &StudyConfig) -> Result<(), Failure> {
    let table = run_study(config)?;
    let outputs = write_outputs(config, &table)?;
    for row in &table.rows {
        println!("N={:<6} K={:<6} error={:.6e}", row.n, row.k, row.error);
    }
    println!("{}", table.rate_line());
    println!("config_hash={} seed={}", table.config_hash, table.seed);
    for f in [&outputs.table, &outputs.timing, &outputs.summary] {
        println!("wrote {}", f.display());
    }
    Ok(())
}

/// Cone through the configured point on `mesh`, with the field the config
/// asks for.
fn point_field(config: &StudyConfig, resolved: &Resolved, mesh: &MeshSpec) -> Result<(Cone, ConeVelocityField, lfvar::variational::ValueTable), Failure> {
    let [x, t] = config
        .point
        .ok_or_else(|| Failure::Validation("invalid value for 'point': required by this command".into()))?;
    let (n, top) = nearest_odd_node(mesh, x, t);
    let cone = Cone::new(mesh, n, top).map_err(runtime)?;
    let v0 = initial_v(config, mesh)?;
    let table = value_table(&resolved.model, &v0, mesh.t(top), &resolved.cfl)?;
    let field = match config.dispersion_field {
        Some(DispersionField::Constant { value }) => ConeVelocityField::constant(&cone, value).map_err(runtime)?,
        _ => minimizing_field(&table, &cone)?,
    };
    Ok((cone, field, table))
}

fn cmd_walk(config: &StudyConfig, n: Option<usize>) -> Result<(), Failure> {
    let resolved = resolve(config)?;
    let mesh = pick_mesh(&resolved, n)?;
    let (_, field, _) = point_field(config, &resolved, &mesh)?;
    let report = EnsembleReport::build(&field, config.walk.mode()).map_err(runtime)?;
    let path = with_ext(&output_stem(config, "walk", &mesh)?, ".json");
    write_json(
        &path,
        &json!({
            "command": "walk",
            "config_hash": config.hash(),
            "seed": config.seed(),
            "report": report,
        }),
    )?;
    let worst = report.dispersion.iter().map(|l| l.sigma - l.bound).fold(f64::NEG_INFINITY, f64::max);
    println!(
        "walk origin=({}, {}) depth={} max(sigma - bound)={worst:.3e} config_hash={} seed={}",
        report.origin.0,
        report.origin.1,
        report.depth,
        config.hash(),
        config.seed()
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_char(config: &StudyConfig, n: Option<usize>) -> Result<(), Failure> {
    let resolved = resolve(config)?;
    let mesh = pick_mesh(&resolved, n)?;
    let (cone, _, table) = point_field(config, &resolved, &mesh)?;
    let path = characteristic(&cone, &table, config.walk.mode(), true)?;
    let stem = output_stem(config, "char", &mesh)?;
    let (csv_path, json_path) = (with_ext(&stem, ".csv"), with_ext(&stem, ".json"));
    path.write_csv(fs::File::create(&csv_path).map_err(runtime)?).map_err(runtime)?;
    write_json(
        &json_path,
        &json!({
            "command": "char",
            "config_hash": config.hash(),
            "seed": config.seed(),
            "n": path.n,
            "top": path.top,
            "x": mesh.x(path.n),
            "t": mesh.t(path.top),
            "foot": path.mean[0],
            "mode": path.mode,
        }),
    )?;
    println!(
        "char origin=({}, {}) foot={:.6} config_hash={} seed={}",
        path.n,
        path.top,
        path.mean[0],
        config.hash(),
        config.seed()
    );
    println!("wrote {}", csv_path.display());
    println!("wrote {}", json_path.display());
    Ok(())
}

const VERIFY_DEFAULT: &str = r#"
kind = "v-error"
ladder = [16]
t_final = 1.0
initial = { type = "cosine" }
"#;

fn cmd_verify(config: &StudyConfig) -> Result<(), Failure> {
    let resolved = resolve(config)?;
    let model = &resolved.model;
    let assumptions = verify_assumptions(model.ham.as_ref(), &SampleLattice::default()).map_err(|e| Failure::Validation(e.to_string()))?;

    // Equivalence of the two schemes on the coarsest rung.
    let mesh = resolved.meshes[0];
    let v0 = initial_v(config, &mesh)?;
    let steps = mesh.steps_to(config.t_final).min(64);
    let mut v = vec![v0];
    let mut u = vec![u_from_v(&v[0])?];
    for _ in 0..steps {
        v.push(scheme::lf_step_v(v.last().unwrap(), model)?);
        u.push(scheme::lf_step_u(u.last().unwrap(), model)?);
    }
    let mut equivalence = 0.0f64;
    for (vk, uk) in v.iter().zip(&u) {
        let du = u_from_v(vk)?;
        equivalence = du.values().iter().zip(uk.values()).fold(equivalence, |a, (p, q)| a.max((p - q).abs()));
    }
    let mut reconstruction = 0.0f64;
    for (a, b) in v_from_u(&u, (config.initial.v0())(0.0), model)?.iter().zip(&v) {
        reconstruction = a.values().iter().zip(b.values()).fold(reconstruction, |r, (p, q)| r.max((p - q).abs()));
    }

    // Measure and dispersion invariants on a deterministic field.
    let depth = 10.min(mesh.steps_to(config.t_final)).max(1);
    let cone = Cone::new(&mesh, depth as i64 + 1, depth).map_err(runtime)?;
    let bound = 0.9 / mesh.lambda;
    let field = ConeVelocityField::from_fn(&cone, |m, k| bound * (0.7 * m as f64 + 1.3 * k as f64).sin()).map_err(runtime)?;
    let total = expectation(&field, &|_| 1.0, ExpectationMode::Enumerated).map_err(runtime)?.mean;
    let level_sums = occupation_probs(&field)
        .iter()
        .map(|level| (level.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let dispersion = dispersion_stats(&field, ExpectationMode::Enumerated)
        .map_err(runtime)?
        .iter()
        .map(|l| (l.d.unwrap_or(0.0).powi(2) - l.sigma).max(l.sigma - l.bound))
        .fold(f64::NEG_INFINITY, f64::max);

    let invariants_hold = equivalence <= 1e-11 && reconstruction <= 1e-10 && (total - 1.0).abs() <= 1e-12 && level_sums <= 1e-12 && dispersion <= 1e-12;
    let report = json!({
        "command": "verify",
        "config_hash": config.hash(),
        "seed": config.seed(),
        "assumptions": assumptions,
        "cfl": resolved.cfl,
        "lambda": resolved.lambda,
        "invariants": {
            "mesh_n": mesh.n,
            "steps": steps,
            "equivalence_max_error": equivalence,
            "reconstruction_max_error": reconstruction,
            "measure_total_error": (total - 1.0).abs(),
            "level_sum_error": level_sums,
            "dispersion_max_excess": dispersion,
            "hold": invariants_hold,
        },
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);
    if invariants_hold {
        Ok(())
    } else {
        Err(Failure::Runtime("invariant suite failed".into()))
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, n } => cmd_run(&load(&config.config, &config.overrides)?, n),
        Command::Study { config, kind } => {
            let mut overrides = config.overrides.clone();
            if let Some(kind) = kind {
                overrides.push(format!("kind=\"{kind}\""));
            }
            let study = load(&config.config, &overrides)?;
            cmd_study(&study)
        }
        Command::Walk { config, n } => cmd_walk(&load(&config.config, &config.overrides)?, n),
        Command::Char { config, n } => cmd_char(&load(&config.config, &config.overrides)?, n),
        Command::Verify { config, overrides } => {
            let study = match config {
                Some(path) => load(&path, &overrides)?,
                None => StudyConfig::from_toml_with_overrides(VERIFY_DEFAULT, &overrides)
                    .map_err(|e| Failure::Validation(e.to_string()))?,
            };
            cmd_verify(&study)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stability_failures_exit_with_two() {
        let cfl = || SchemeError::CflViolation {
            m: 3,
            k: 7,
            hp: 2.5,
            limit: 2.0,
        };
        assert_eq!(Failure::from(cfl()).exit_code(), 2);
        assert_eq!(Failure::from(VariationalError::Scheme(cfl())).exit_code(), 2);
        let drift = SchemeError::ConservationDrift { k: 1, drift: 1.0 };
        assert_eq!(Failure::from(drift).exit_code(), 1);
    }

    #[test]
    fn key_lines() {
        let text = "kind = \"v-error\"\nladder = [16]\n\n[walk]\nn_samples = 0\nwalk_x = 1\n";
        assert_eq!(key_line(text, "ladder"), Some(2));
        assert_eq!(key_line(text, "walk.n_samples"), Some(5));
        assert_eq!(key_line(text, "walk"), Some(4));
        assert_eq!(key_line(text, "t_final"), None);
    }
}
