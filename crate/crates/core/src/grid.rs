//! Staggered space-time lattice, periodic grid functions, initial-data
//! discretization and interpolation.
//!
//! Nodes are `(x_m, t_k) = (mΔx, kΔt)` with `Δx = 1/(2N)`, `Δt = 1/(2K)`.
//! The even grid holds the nodes with `m + k` even (conservation-law values
//! `u`), the odd grid those with `m + k` odd (Hamilton-Jacobi values `v`).
//! Indices `m` live on the universal cover; fields wrap with period `2N`.

use std::io::{self, Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for quadrature and for mean/periodicity checks.
pub const QUAD_TOL: f64 = 1e-10;

const SNAP: f64 = 1e-9;
const DUMP_MAGIC: &[u8; 4] = b"LFGF";
const DUMP_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("node (m={m}, k={k}) is not on the {parity} grid")]
    ParityMismatch { m: i64, k: usize, parity: Parity },
    #[error("initial data has mean {mean}, expected 0")]
    MeanNotZero { mean: f64 },
    #[error("closed-loop integral of the initial data is {residual}, expected 0")]
    PeriodicityBroken { residual: f64 },
    #[error("time {t} outside the stored history [0, {t_max}]")]
    OutOfRange { t: f64, t_max: f64 },
    #[error("invalid mesh: {0}")]
    BadMesh(String),
    #[error("malformed field dump: {0}")]
    BadDump(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn bit(self) -> i64 {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }
}

impl std::fmt::Display for Parity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        })
    }
}

fn snap_floor(q: f64) -> f64 {
    let r = q.round();
    if (q - r).abs() < SNAP {
        r
    } else {
        q.floor()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub n: usize,
    pub k: usize,
    pub dx: f64,
    pub dt: f64,
    pub lambda: f64,
}

impl MeshSpec {
    pub fn new(n: usize, k: usize) -> Result<Self, GridError> {
        if n == 0 || k == 0 {
            return Err(GridError::BadMesh(format!("N and K must be positive (N={n}, K={k})")));
        }
        let dx = 1.0 / (2 * n) as f64;
        let dt = 1.0 / (2 * k) as f64;
        Ok(Self { n, k, dx, dt, lambda: dt / dx })
    }

    /// The mesh with `N` fixed and the smallest `K` whose ratio does not
    /// exceed `lambda`.
    pub fn with_ratio(n: usize, lambda: f64) -> Result<Self, GridError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(GridError::BadMesh(format!("ratio must be positive, got {lambda}")));
        }
        let k = (n as f64 / lambda - SNAP).ceil().max(1.0) as usize;
        Self::new(n, k)
    }

    /// Number of spatial periods `2N` in index units.
    #[inline]
    pub fn period(&self) -> i64 {
        2 * self.n as i64
    }

    #[inline]
    pub fn x(&self, m: i64) -> f64 {
        m as f64 * self.dx
    }

    #[inline]
    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// `k(T)`: the level with `T ∈ [t_k, t_k + Δt)`.
    pub fn steps_to(&self, t: f64) -> usize {
        snap_floor(t / self.dt).max(0.0) as usize
    }

    /// Index of `m` within the `N` stored slots of a field of the given
    /// parity at level `k`.
    #[inline]
    fn slot(&self, parity: Parity, k: usize, m: i64) -> Option<usize> {
        let offset = (parity.bit() + k as i64).rem_euclid(2);
        let w = m.rem_euclid(self.period());
        if (w - offset).rem_euclid(2) != 0 {
            return None;
        }
        Some(((w - offset) / 2) as usize)
    }

    #[inline]
    fn slot_index(&self, parity: Parity, k: usize, slot: usize) -> i64 {
        let offset = (parity.bit() + k as i64).rem_euclid(2);
        offset + 2 * slot as i64
    }
}

/// Finds `(m, k)` with `t ∈ [t_k, t_k + Δt)` and, among the indices of the
/// requested grid at level `k`, `x mod 1 ∈ [x_m, x_m + 2Δx)`.
pub fn locate(mesh: &MeshSpec, x: f64, t: f64, grid: Parity) -> (i64, usize) {
    let k = mesh.steps_to(t);
    let xr = x.rem_euclid(1.0);
    let offset = (grid.bit() + k as i64).rem_euclid(2);
    let q = snap_floor((xr / mesh.dx - offset as f64) / 2.0) as i64;
    (offset + 2 * q, k)
}

/// Values on one level of the even or odd grid, periodic in `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub parity: Parity,
    pub level: usize,
    mesh: MeshSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(mesh: &MeshSpec, parity: Parity, level: usize) -> Self {
        Self {
            parity,
            level,
            mesh: *mesh,
            values: vec![0.0; mesh.n],
        }
    }

    /// Samples `f(m)` at every grid index `m ∈ [0, 2N)` of the field.
    pub fn from_fn(mesh: &MeshSpec, parity: Parity, level: usize, f: impl Fn(i64) -> f64) -> Self {
        let values = (0..mesh.n).map(|s| f(mesh.slot_index(parity, level, s))).collect();
        Self {
            parity,
            level,
            mesh: *mesh,
            values,
        }
    }

    pub fn mesh(&self) -> &MeshSpec {
        &self.mesh
    }

    pub fn get(&self, m: i64) -> Result<f64, GridError> {
        self.mesh
            .slot(self.parity, self.level, m)
            .map(|s| self.values[s])
            .ok_or(GridError::ParityMismatch {
                m,
                k: self.level,
                parity: self.parity,
            })
    }

    pub fn set(&mut self, m: i64, value: f64) -> Result<(), GridError> {
        let s = self.mesh.slot(self.parity, self.level, m).ok_or(GridError::ParityMismatch {
            m,
            k: self.level,
            parity: self.parity,
        })?;
        self.values[s] = value;
        Ok(())
    }

    /// Reads `m`, panicking on a parity mismatch. For indices derived from
    /// other on-grid indices.
    #[inline]
    pub fn at(&self, m: i64) -> f64 {
        match self.mesh.slot(self.parity, self.level, m) {
            Some(s) => self.values[s],
            None => panic!("index {m} is off the {} grid at level {}", self.parity, self.level),
        }
    }

    /// Grid indices in `[0, 2N)`, ascending.
    pub fn indices(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.mesh.n).map(|s| self.mesh.slot_index(self.parity, self.level, s))
    }

    /// `(m, value)` pairs in ascending `m`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.indices().zip(self.values.iter().copied())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `∑ value · 2Δx` over one period.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * 2.0 * self.mesh.dx
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), GridError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["m", "x_m", "value"])?;
        for (m, v) in self.iter() {
            w.write_record([m.to_string(), format!("{:.17e}", self.mesh.x(m)), format!("{v:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Writes a sequence of fields in a compact little-endian binary format.
pub fn write_history<W: Write>(fields: &[GridField], mut w: W) -> Result<(), GridError> {
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&(fields.len() as u64).to_le_bytes())?;
    for f in fields {
        w.write_all(&[f.parity.bit() as u8])?;
        w.write_all(&(f.level as u64).to_le_bytes())?;
        w.write_all(&(f.mesh.n as u64).to_le_bytes())?;
        w.write_all(&(f.mesh.k as u64).to_le_bytes())?;
        for v in &f.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_history<R: Read>(mut r: R) -> Result<Vec<GridField>, GridError> {
    fn u64_le<R: Read>(r: &mut R) -> Result<u64, GridError> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(GridError::BadDump("bad magic".into()));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    if u32::from_le_bytes(vb) != DUMP_VERSION {
        return Err(GridError::BadDump("unsupported version".into()));
    }
    let count = u64_le(&mut r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let mut pb = [0u8; 1];
        r.read_exact(&mut pb)?;
        let parity = match pb[0] {
            0 => Parity::Even,
            1 => Parity::Odd,
            b => return Err(GridError::BadDump(format!("bad parity byte {b}"))),
        };
        let level = u64_le(&mut r)? as usize;
        let n = u64_le(&mut r)? as usize;
        let k = u64_le(&mut r)? as usize;
        let mesh = MeshSpec::new(n, k).map_err(|e| GridError::BadDump(e.to_string()))?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f64::from_bits(u64_le(&mut r)?));
        }
        out.push(GridField {
            parity,
            level,
            mesh,
            values,
        });
    }
    Ok(out)
}

/// Initial datum `u⁰` on one period `[0, 1)`.
#[derive(Clone)]
pub enum Profile {
    /// A function integrated by adaptive Simpson quadrature.
    Smooth(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// `values[i]` on `[breaks[i], breaks[i+1])`, with `breaks[0] = 0` and an
    /// implicit final break at 1.
    PiecewiseConstant { breaks: Vec<f64>, values: Vec<f64> },
}

impl std::fmt::Debug for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Profile::Smooth(_) => f.write_str("Profile::Smooth(..)"),
            Profile::PiecewiseConstant { breaks, values } => f
                .debug_struct("Profile::PiecewiseConstant")
                .field("breaks", breaks)
                .field("values", values)
                .finish(),
        }
    }
}

impl Profile {
    pub fn smooth(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Profile::Smooth(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let y = x.rem_euclid(1.0);
        match self {
            Profile::Smooth(f) => f(y),
            Profile::PiecewiseConstant { breaks, values } => {
                let i = breaks.partition_point(|&b| b <= y).saturating_sub(1);
                values[i]
            }
        }
    }

    /// `∫_a^b u⁰`, for any `a ≤ b` on the universal cover.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Profile::Smooth(f) => {
                let g = |y: f64| f(y.rem_euclid(1.0));
                adaptive_simpson(&g, a, b, QUAD_TOL)
            }
            Profile::PiecewiseConstant { .. } => self.primitive(b) - self.primitive(a),
        }
    }

    /// Exact primitive `∫_0^x` of a piecewise-constant profile.
    fn primitive(&self, x: f64) -> f64 {
        let Profile::PiecewiseConstant { breaks, values } = self else {
            unreachable!("primitive is only used for piecewise-constant data")
        };
        let one_period = |y: f64| -> f64 {
            let mut acc = 0.0;
            for (i, &v) in values.iter().enumerate() {
                let lo = breaks[i];
                let hi = breaks.get(i + 1).copied().unwrap_or(1.0);
                if y <= lo {
                    break;
                }
                acc += v * (y.min(hi) - lo);
            }
            acc
        };
        let periods = x.floor();
        periods * one_period(1.0) + one_period(x - periods)
    }
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Cell averages of `u⁰` over `[x_m − Δx, x_m + Δx)` at the even nodes of
/// level 0.
pub fn discretize_u0(mesh: &MeshSpec, u0: &Profile) -> Result<GridField, GridError> {
    let mean = u0.integral(0.0, 1.0);
    if mean.abs() > QUAD_TOL {
        return Err(GridError::MeanNotZero { mean });
    }
    let dx = mesh.dx;
    let averages = GridField::from_fn(mesh, Parity::Even, 0, |m| {
        let xm = mesh.x(m);
        u0.integral(xm - dx, xm + dx) / (2.0 * dx)
    });
    // Quadrature leaves a residual mean of order QUAD_TOL; remove it so the
    // lifted v⁰ closes up exactly across the period.
    let residual = averages.mass();
    Ok(GridField::from_fn(mesh, Parity::Even, 0, |m| averages.at(m) - residual))
}

/// `v⁰_Δ(x_{m+1}) = v⁰(0) + ∫_0^{x_{m+1}} u⁰_Δ` at the odd nodes of level 0.
pub fn build_v0(mesh: &MeshSpec, v0_at_0: f64, u0: &GridField) -> Result<GridField, GridError> {
    if u0.parity != Parity::Even || u0.level != 0 {
        return Err(GridError::ParityMismatch {
            m: 0,
            k: u0.level,
            parity: u0.parity,
        });
    }
    let residual = u0.mass();
    if residual.abs() > QUAD_TOL {
        return Err(GridError::PeriodicityBroken { residual });
    }
    let two_dx = 2.0 * mesh.dx;
    let mut v = GridField::zeros(mesh, Parity::Odd, 0);
    let mut acc = u0.at(0) * mesh.dx;
    v.set(1, v0_at_0 + acc)?;
    let mut m = 3;
    while m < mesh.period() {
        acc += u0.at(m - 1) * two_dx;
        v.set(m, v0_at_0 + acc)?;
        m += 2;
    }
    Ok(v)
}

/// Linear interpolation of an odd-grid history: linear in `x` between the
/// two bracketing nodes at each of the two bracketing levels, then linear in
/// `t`.
pub fn interpolate_v(history: &[GridField], x: f64, t: f64) -> Result<f64, GridError> {
    let first = history.first().ok_or(GridError::OutOfRange { t, t_max: f64::NAN })?;
    let mesh = *first.mesh();
    let t_max = mesh.t(history.len() - 1);
    if !(0.0..=t_max + SNAP * mesh.dt).contains(&t) {
        return Err(GridError::OutOfRange { t, t_max });
    }
    let along_x = |field: &GridField| -> f64 {
        let (m, _) = locate(&mesh, x, mesh.t(field.level), field.parity);
        let xr = x.rem_euclid(1.0);
        let w = ((xr - mesh.x(m)) / (2.0 * mesh.dx)).clamp(0.0, 1.0);
        (1.0 - w) * field.at(m) + w * field.at(m + 2)
    };
    let k = mesh.steps_to(t).min(history.len() - 1);
    if k + 1 >= history.len() {
        return Ok(along_x(&history[k]));
    }
    let s = ((t - mesh.t(k)) / mesh.dt).clamp(0.0, 1.0);
    let lo = along_x(&history[k]);
    if s == 0.0 {
        return Ok(lo);
    }
    Ok((1.0 - s) * lo + s * along_x(&history[k + 1]))
}
