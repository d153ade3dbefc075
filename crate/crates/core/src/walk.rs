//! Backward random walks on the odd grid.
//!
//! A walk starts at an odd node `(x_n, t_top)` and moves one level down per
//! step, by `+Δx` with probability `(1 − λξ)/2` and by `−Δx` with probability
//! `(1 + λξ)/2`, where `ξ` is the velocity field at the current node. The
//! expected backward displacement per step is `−ξΔt`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::grid::MeshSpec;

/// Largest depth for which paths are enumerated exhaustively.
pub const ENUM_DEPTH_MAX: usize = 22;
/// Tolerance for velocities just outside `[−1/λ, 1/λ]`, which are clamped.
pub const CLAMP_TOL: f64 = 1e-14;
const SAMPLE_CHUNK: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("velocity {xi} is outside [-1/λ, 1/λ] for λ = {lambda}")]
    RangeViolation { xi: f64, lambda: f64 },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("depth {depth} exceeds the enumeration limit {max}; use sampling")]
    DepthTooLarge { depth: usize, max: usize },
    #[error("({n}, {top}) is not an odd-grid node")]
    NotOddNode { n: i64, top: usize },
    #[error("this functional is not separable over nodes; occupation mode does not apply")]
    NotSeparable,
    #[error("sampled mode needs at least one sample")]
    NoSamples,
    #[error("field shape does not match the cone")]
    ShapeMismatch,
}

/// `(p_plus, p_minus)` for a backward step of `+Δx` and `−Δx`.
pub fn transition_probs(xi: f64, lambda: f64) -> Result<(f64, f64), WalkError> {
    let s = lambda * xi;
    if !(s.abs() <= 1.0 + CLAMP_TOL) {
        return Err(WalkError::RangeViolation { xi, lambda });
    }
    let s = s.clamp(-1.0, 1.0);
    Ok((0.5 * (1.0 - s), 0.5 * (1.0 + s)))
}

/// The backward cone of an odd node: level `k` holds the `top − k + 1`
/// positions `m = n − (top − k) + 2i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cone {
    pub mesh: MeshSpec,
    pub n: i64,
    pub top: usize,
}

impl Cone {
    pub fn new(mesh: &MeshSpec, n: i64, top: usize) -> Result<Self, WalkError> {
        if (n + top as i64).rem_euclid(2) != 1 {
            return Err(WalkError::NotOddNode { n, top });
        }
        Ok(Self { mesh: *mesh, n, top })
    }

    pub fn depth(&self) -> usize {
        self.top
    }

    pub fn width(&self, k: usize) -> usize {
        self.top - k + 1
    }

    pub fn node(&self, k: usize, i: usize) -> i64 {
        self.n - (self.top - k) as i64 + 2 * i as i64
    }

    pub fn index(&self, k: usize, m: i64) -> Option<usize> {
        if k > self.top {
            return None;
        }
        let offset = m - self.node(k, 0);
        if offset < 0 || offset % 2 != 0 || offset / 2 >= self.width(k) as i64 {
            return None;
        }
        Some((offset / 2) as usize)
    }

    pub fn level(&self, k: usize) -> impl Iterator<Item = i64> + '_ {
        (0..self.width(k)).map(move |i| self.node(k, i))
    }

    /// Number of nodes carrying a velocity, levels `1..=top`.
    pub fn node_count(&self) -> usize {
        self.top * (self.top + 1) / 2
    }
}

/// Per-level node values on a cone, levels `0..=top`.
pub type LevelTable = Vec<Vec<f64>>;

/// Velocity field `ξ` on the nodes of a cone, with its transition
/// probabilities cached.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeVelocityField {
    cone: Cone,
    // xi[k][i] for k in 1..=top; xi[0] is empty.
    xi: LevelTable,
    p_plus: LevelTable,
}

impl ConeVelocityField {
    pub fn from_fn(cone: &Cone, mut f: impl FnMut(i64, usize) -> f64) -> Result<Self, WalkError> {
        let lambda = cone.mesh.lambda;
        let bound = 1.0 / lambda;
        let mut xi = vec![Vec::new()];
        let mut p_plus = vec![Vec::new()];
        for k in 1..=cone.top {
            let mut row = Vec::with_capacity(cone.width(k));
            let mut prow = Vec::with_capacity(cone.width(k));
            for m in cone.level(k) {
                let value = f(m, k);
                let (pp, _) = transition_probs(value, lambda)?;
                row.push(value.clamp(-bound, bound));
                prow.push(pp);
            }
            xi.push(row);
            p_plus.push(prow);
        }
        Ok(Self { cone: *cone, xi, p_plus })
    }

    pub fn constant(cone: &Cone, value: f64) -> Result<Self, WalkError> {
        Self::from_fn(cone, |_, _| value)
    }

    pub fn cone(&self) -> &Cone {
        &self.cone
    }

    pub fn get(&self, m: i64, k: usize) -> Option<f64> {
        if k == 0 {
            return None;
        }
        self.cone.index(k, m).map(|i| self.xi[k][i])
    }

    pub fn levels(&self) -> &LevelTable {
        &self.xi
    }

    #[inline]
    fn p_plus_at(&self, k: usize, i: usize) -> f64 {
        self.p_plus[k][i]
    }

    pub fn max_abs(&self) -> f64 {
        self.xi.iter().flatten().fold(0.0, |a: f64, &x| a.max(x.abs()))
    }
}

/// Node indices `γ^k` of a walk for `k = 0..=top`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkPath(pub Vec<i64>);

impl WalkPath {
    pub fn validate(&self, cone: &Cone) -> Result<(), WalkError> {
        let p = &self.0;
        if p.len() != cone.top + 1 {
            return Err(WalkError::InvalidPath(format!("expected {} positions, got {}", cone.top + 1, p.len())));
        }
        if p[cone.top] != cone.n {
            return Err(WalkError::InvalidPath("path does not end at the origin".into()));
        }
        for k in 0..cone.top {
            if (p[k + 1] - p[k]).abs() != 1 {
                return Err(WalkError::InvalidPath(format!("step {} -> {} is not ±Δx", k + 1, k)));
            }
        }
        Ok(())
    }

    pub fn positions(&self, mesh: &MeshSpec) -> Vec<f64> {
        self.0.iter().map(|&m| mesh.x(m)).collect()
    }
}

/// `μ(γ)`: product of the transition probabilities along the path.
pub fn path_density(field: &ConeVelocityField, path: &WalkPath) -> Result<f64, WalkError> {
    let cone = field.cone();
    path.validate(cone)?;
    let mut mu = 1.0;
    for k in (1..=cone.top).rev() {
        let i = cone.index(k, path.0[k]).expect("validated path stays in the cone");
        let pp = field.p_plus_at(k, i);
        mu *= if path.0[k - 1] == path.0[k] + 1 { pp } else { 1.0 - pp };
    }
    Ok(mu)
}

/// Occupation probabilities `p_m^k` for levels `0..=top`, by the backward
/// recursion from unit mass at the origin.
pub fn occupation_probs(field: &ConeVelocityField) -> LevelTable {
    let cone = field.cone();
    let mut out: LevelTable = vec![Vec::new(); cone.top + 1];
    out[cone.top] = vec![1.0];
    for k in (1..=cone.top).rev() {
        let mut below = vec![0.0; cone.width(k - 1)];
        for (i, &p) in out[k].iter().enumerate() {
            let pp = field.p_plus_at(k, i);
            below[i] += p * (1.0 - pp);
            below[i + 1] += p * pp;
        }
        out[k - 1] = below;
    }
    out
}

/// How expectations over walks are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExpectationMode {
    /// Exact weighted sum over all `2^top` paths.
    Enumerated,
    /// Exact sum against occupation probabilities; nodewise-separable
    /// functionals only.
    Occupation,
    /// Mean over independently drawn paths.
    Sampled { n_samples: usize, seed: u64 },
}

impl ExpectationMode {
    pub fn seed(&self) -> Option<u64> {
        match self {
            ExpectationMode::Sampled { seed, .. } => Some(*seed),
            _ => None,
        }
    }
}

/// A mean with its standard error (zero for exact modes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    fn exact(mean: f64) -> Self {
        Self { mean, std_error: 0.0, samples: 0 }
    }
}

#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Calls `visit(path, μ)` for every path of the cone, in lexicographic order
/// of backward steps (`−Δx` first).
pub fn for_each_path(field: &ConeVelocityField, mut visit: impl FnMut(&[i64], f64)) -> Result<(), WalkError> {
    let cone = field.cone();
    if cone.top > ENUM_DEPTH_MAX {
        return Err(WalkError::DepthTooLarge {
            depth: cone.top,
            max: ENUM_DEPTH_MAX,
        });
    }
    let mut path = vec![0i64; cone.top + 1];
    path[cone.top] = cone.n;
    descend(field, cone.top, 1.0, &mut path, &mut visit);
    Ok(())
}

fn descend(field: &ConeVelocityField, k: usize, mu: f64, path: &mut [i64], visit: &mut impl FnMut(&[i64], f64)) {
    if k == 0 {
        visit(path, mu);
        return;
    }
    let cone = field.cone();
    let i = cone.index(k, path[k]).expect("path stays in the cone");
    let pp = field.p_plus_at(k, i);
    path[k - 1] = path[k] - 1;
    descend(field, k - 1, mu * (1.0 - pp), path, visit);
    path[k - 1] = path[k] + 1;
    descend(field, k - 1, mu * pp, path, visit);
}

fn draw_path(field: &ConeVelocityField, rng: &mut ChaCha8Rng, path: &mut [i64]) {
    let cone = field.cone();
    path[cone.top] = cone.n;
    for k in (1..=cone.top).rev() {
        let i = cone.index(k, path[k]).expect("path stays in the cone");
        let u: f64 = rng.gen();
        path[k - 1] = if u < field.p_plus_at(k, i) { path[k] + 1 } else { path[k] - 1 };
    }
}

/// Draws `n_samples` paths and hands each to `visit`. Chunk `j` uses the
/// generator seeded with `seed` on stream `j`, so the draws do not depend on
/// the number of worker threads.
fn sampled_sums(
    field: &ConeVelocityField,
    n_samples: usize,
    seed: u64,
    dim: usize,
    f: &(dyn Fn(&[i64], &mut [f64]) + Sync),
) -> Vec<(f64, f64)> {
    let top = field.cone().top;
    let chunks = n_samples.div_ceil(SAMPLE_CHUNK);
    let partial: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let count = SAMPLE_CHUNK.min(n_samples - j * SAMPLE_CHUNK);
            let mut path = vec![0i64; top + 1];
            let mut value = vec![0.0; dim];
            let mut acc = vec![(0.0, 0.0); dim];
            for _ in 0..count {
                draw_path(field, &mut rng, &mut path);
                value.iter_mut().for_each(|v| *v = 0.0);
                f(&path, &mut value);
                for (a, &v) in acc.iter_mut().zip(&value) {
                    a.0 += v;
                    a.1 += v * v;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![(0.0, 0.0); dim];
    for chunk in partial {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.0 += c.0;
            t.1 += c.1;
        }
    }
    total
}

fn finish_sampled(sums: Vec<(f64, f64)>, n: usize) -> Vec<Estimate> {
    let nf = n as f64;
    sums.into_iter()
        .map(|(s, s2)| {
            let mean = s / nf;
            let var = if n > 1 { ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
            Estimate {
                mean,
                std_error: (var / nf).sqrt(),
                samples: n,
            }
        })
        .collect()
}

/// Expectation of a vector-valued path functional. `f` adds its values into
/// the zeroed output slice.
pub fn expectation_vec(
    field: &ConeVelocityField,
    dim: usize,
    f: &(dyn Fn(&[i64], &mut [f64]) + Sync),
    mode: ExpectationMode,
) -> Result<Vec<Estimate>, WalkError> {
    match mode {
        ExpectationMode::Enumerated => {
            let mut acc = vec![Neumaier::default(); dim];
            let mut value = vec![0.0; dim];
            for_each_path(field, |path, mu| {
                value.iter_mut().for_each(|v| *v = 0.0);
                f(path, &mut value);
                for (a, &v) in acc.iter_mut().zip(&value) {
                    a.add(mu * v);
                }
            })?;
            Ok(acc.iter().map(|a| Estimate::exact(a.value())).collect())
        }
        ExpectationMode::Occupation => Err(WalkError::NotSeparable),
        ExpectationMode::Sampled { n_samples, seed } => {
            if n_samples == 0 {
                return Err(WalkError::NoSamples);
            }
            Ok(finish_sampled(sampled_sums(field, n_samples, seed, dim, f), n_samples))
        }
    }
}

/// `E_μ[f(γ)]` for a scalar path functional.
pub fn expectation(
    field: &ConeVelocityField,
    f: &(dyn Fn(&[i64]) -> f64 + Sync),
    mode: ExpectationMode,
) -> Result<Estimate, WalkError> {
    let wrapped = |path: &[i64], out: &mut [f64]| out[0] = f(path);
    Ok(expectation_vec(field, 1, &wrapped, mode)?[0])
}

/// `E_μ[Σ_k values[k][i(γ^k)]]` for a table of node values on levels
/// `0..=top`. Every mode applies.
pub fn expectation_separable(field: &ConeVelocityField, values: &LevelTable, mode: ExpectationMode) -> Result<Estimate, WalkError> {
    let cone = *field.cone();
    if values.len() != cone.top + 1 || (0..=cone.top).any(|k| values[k].len() != cone.width(k)) {
        return Err(WalkError::ShapeMismatch);
    }
    match mode {
        ExpectationMode::Occupation => {
            let p = occupation_probs(field);
            let mut acc = Neumaier::default();
            for k in 0..=cone.top {
                for (pi, vi) in p[k].iter().zip(&values[k]) {
                    acc.add(pi * vi);
                }
            }
            Ok(Estimate::exact(acc.value()))
        }
        _ => {
            let f = |path: &[i64]| {
                (0..=cone.top)
                    .map(|k| values[k][cone.index(k, path[k]).expect("path stays in the cone")])
                    .sum::<f64>()
            };
            expectation(field, &f, mode)
        }
    }
}

/// `η^k(γ) = x_n − Σ_{k<k'≤top} ξ(γ^{k'}) Δt` for `k = 0..=top`.
pub fn eta_process(field: &ConeVelocityField, path: &WalkPath) -> Result<Vec<f64>, WalkError> {
    let cone = field.cone();
    path.validate(cone)?;
    Ok(eta_of(field, &path.0))
}

fn eta_of(field: &ConeVelocityField, path: &[i64]) -> Vec<f64> {
    let cone = field.cone();
    let dt = cone.mesh.dt;
    let mut eta = vec![0.0; cone.top + 1];
    eta[cone.top] = cone.mesh.x(cone.n);
    for k in (0..cone.top).rev() {
        let xi = field.xi[k + 1][cone.index(k + 1, path[k + 1]).expect("path stays in the cone")];
        eta[k] = eta[k + 1] - xi * dt;
    }
    eta
}

/// Draws `count` paths and returns their `η` trajectories.
pub fn eta_bundle(field: &ConeVelocityField, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = vec![0i64; field.cone().top + 1];
    (0..count)
        .map(|_| {
            draw_path(field, &mut rng, &mut path);
            eta_of(field, &path)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersionLevel {
    pub k: usize,
    pub t: f64,
    /// `E|γ^k − η^k|²`.
    pub sigma: f64,
    /// `E|γ^k − η^k|`; not available in occupation mode.
    pub d: Option<f64>,
    /// `(t_top − t_k) Δx / λ`.
    pub bound: f64,
}

/// Second and first moments of `γ^k − η^k` per level.
///
/// In occupation mode `σ̃^k` uses the martingale identity
/// `σ̃^k = Σ_{k'>k} Σ_m p_m^{k'} (Δx² − (ξ_m^{k'} Δt)²)`.
pub fn dispersion_stats(field: &ConeVelocityField, mode: ExpectationMode) -> Result<Vec<DispersionLevel>, WalkError> {
    let cone = *field.cone();
    let mesh = cone.mesh;
    let top = cone.top;
    let bound = |k: usize| (top - k) as f64 * mesh.dx * mesh.dx;
    match mode {
        ExpectationMode::Occupation => {
            let p = occupation_probs(field);
            let mut out = vec![
                DispersionLevel {
                    k: top,
                    t: mesh.t(top),
                    sigma: 0.0,
                    d: None,
                    bound: 0.0,
                };
                top + 1
            ];
            let mut sigma = 0.0;
            for k in (0..top).rev() {
                let step: f64 = p[k + 1]
                    .iter()
                    .zip(&field.xi[k + 1])
                    .map(|(pi, xi)| pi * (mesh.dx * mesh.dx - (xi * mesh.dt).powi(2)))
                    .sum();
                sigma += step;
                out[k] = DispersionLevel {
                    k,
                    t: mesh.t(k),
                    sigma,
                    d: None,
                    bound: bound(k),
                };
            }
            Ok(out)
        }
        _ => {
            let f = |path: &[i64], out: &mut [f64]| {
                let eta = eta_of(field, path);
                for k in 0..=top {
                    let dev = mesh.x(path[k]) - eta[k];
                    out[2 * k] = dev * dev;
                    out[2 * k + 1] = dev.abs();
                }
            };
            let est = expectation_vec(field, 2 * (top + 1), &f, mode)?;
            Ok((0..=top)
                .map(|k| DispersionLevel {
                    k,
                    t: mesh.t(k),
                    sigma: est[2 * k].mean,
                    d: Some(est[2 * k + 1].mean),
                    bound: bound(k),
                })
                .collect())
        }
    }
}

/// JSON summary of an ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    pub origin: (i64, usize),
    pub x: f64,
    pub t: f64,
    pub depth: usize,
    pub lambda: f64,
    pub mode: ExpectationMode,
    pub seed: Option<u64>,
    pub occupation: LevelTable,
    pub dispersion: Vec<DispersionLevel>,
}

impl EnsembleReport {
    pub fn build(field: &ConeVelocityField, mode: ExpectationMode) -> Result<Self, WalkError> {
        let cone = field.cone();
        Ok(Self {
            origin: (cone.n, cone.top),
            x: cone.mesh.x(cone.n),
            t: cone.mesh.t(cone.top),
            depth: cone.top,
            lambda: cone.mesh.lambda,
            mode,
            seed: mode.seed(),
            occupation: occupation_probs(field),
            dispersion: dispersion_stats(field, mode)?,
        })
    }
}
