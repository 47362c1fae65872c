//! Explicit leapfrog scheme for the stochastic wave equation with a
//! Brownian source, Monte Carlo ensembles and boundary observations.
//!
//! Update for interior nodes `1 <= j <= M`, `1 <= n <= N`:
//!
//! ```text
//! (1 - c dt) y^{n+1} = 2 y^n - y^{n-1} + dt² (D_x² y^n + a y^n + b A_x D_x y^n)
//!                      - c dt y^n + dt (d y^n + g) ΔB^n + dt² f
//! ```
//!
//! with `ΔB^n = B(t^{n+1}) - B(t^n)`, `y^0 = y_0`, `y^1 = y_0 + dt y_1`, and
//! zero boundary values in every slice including `N+1`.

use std::io::{self, Write};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::GridFunction;
use crate::mesh::{Axis, Grid, SpaceTag, TimeTag};

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    /// `increments[n] = B(t^{n+1}) - B(t^n)` for `n = 0..=N`.
    pub increments: Vec<f64>,
    pub seed: u64,
    pub dt: f64,
}

impl BrownianPath {
    pub fn increment(&self, n: usize) -> f64 {
        self.increments[n]
    }
}

/// Independent `Normal(0, dt)` increments covering `[0, T + dt]`.
pub fn sample_brownian(n: usize, dt: f64, seed: u64) -> Result<BrownianPath> {
    if n == 0 {
        return Err(Error::invalid("N", "must be at least 1"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = dt.sqrt();
    let increments = (0..=n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    Ok(BrownianPath { increments, seed, dt })
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Seed of path `k`: the splitmix64 finaliser applied to `master + (k+1) γ`.
///
/// Injective in `k` because `γ` is odd and the finaliser is a bijection.
pub fn path_seed(master: u64, k: u64) -> u64 {
    let mut z = master.wrapping_add(k.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    /// `g` varies over `M x N`.
    #[default]
    SpaceTime,
    /// `g` depends on `x` only and is replicated in time.
    SpaceOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    /// Initial displacement on the space closure.
    pub y0: GridFunction,
    /// Initial velocity on the space closure; boundary values are ignored.
    pub y1: GridFunction,
    /// Noise intensity: on `M x N`, or a single slice over `M` in space-only mode.
    pub g: GridFunction,
    pub g_mode: SourceMode,
    /// Deterministic forcing on `M x N`.
    pub f: Option<GridFunction>,
}

impl ProblemData {
    /// Zero initial data, zero source, no forcing.
    pub fn zeros(grid: &Grid, g_mode: SourceMode) -> ProblemData {
        let closure = grid.space_axis(SpaceTag::Closure);
        let slice0 = grid.time_axis(TimeTag::Slice(0));
        let g = match g_mode {
            SourceMode::SpaceTime => GridFunction::zeros(
                *grid,
                grid.space_axis(SpaceTag::Primal),
                grid.time_axis(TimeTag::Primal),
            ),
            SourceMode::SpaceOnly => GridFunction::zeros(*grid, grid.space_axis(SpaceTag::Primal), slice0),
        };
        ProblemData {
            y0: GridFunction::zeros(*grid, closure, slice0),
            y1: GridFunction::zeros(*grid, closure, slice0),
            g,
            g_mode,
            f: None,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let closure = grid.space_axis(SpaceTag::Closure);
        let interior = grid.space_axis(SpaceTag::Primal);
        let primal_t = grid.time_axis(TimeTag::Primal);
        for (name, u) in [("y0", &self.y0), ("y1", &self.y1)] {
            if u.grid() != grid {
                return Err(Error::invalid(name, "defined on a different grid"));
            }
            if !u.space().covers(&closure) {
                return Err(Error::invalid(name, "must cover the space closure"));
            }
            if u.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(name, "non-finite value"));
            }
        }
        let t0 = self.y0.time().lo;
        let m1 = grid.m() as i64 + 1;
        let tol = 1e-12 * self.y0.max_abs().max(1.0);
        if self.y0.at(0, t0).abs() > tol || self.y0.at(m1, t0).abs() > tol {
            return Err(Error::invalid("y0", "must vanish at x = 0 and x = 1"));
        }
        let g_time_ok = match self.g_mode {
            SourceMode::SpaceTime => self.g.time().covers(&primal_t),
            SourceMode::SpaceOnly => self.g.time().len() == 1,
        };
        if self.g.grid() != grid || !self.g.space().covers(&interior) || !g_time_ok {
            return Err(Error::invalid(
                "g",
                format!("must cover M x N in {:?} mode", self.g_mode),
            ));
        }
        if self.g.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("g", "non-finite value"));
        }
        if let Some(f) = &self.f {
            if f.grid() != grid || !f.space().covers(&interior) || !f.time().covers(&primal_t) {
                return Err(Error::invalid("f", "must cover M x N"));
            }
            if f.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("f", "non-finite value"));
            }
        }
        Ok(())
    }

    /// `g` at an interior node.
    pub fn g_at(&self, j: i64, n: i64) -> f64 {
        match self.g_mode {
            SourceMode::SpaceTime => self.g.at(j, n),
            SourceMode::SpaceOnly => self.g.at(j, self.g.time().lo),
        }
    }

    pub fn f_at(&self, j: i64, n: i64) -> f64 {
        self.f.as_ref().map_or(0.0, |f| f.at(j, n))
    }

    /// Data of the difference of two solutions: `self - other`, without forcing
    /// (a common forcing cancels).
    pub fn difference(&self, other: &ProblemData) -> Result<ProblemData> {
        if self.g_mode != other.g_mode {
            return Err(Error::Coupling("source modes differ".into()));
        }
        let same_f = match (&self.f, &other.f) {
            (None, None) => true,
            (Some(a), Some(b)) => a == b,
            _ => false,
        };
        if !same_f {
            return Err(Error::Coupling("coupled datasets must share the forcing f".into()));
        }
        Ok(ProblemData {
            y0: self.y0.sub(&other.y0)?,
            y1: self.y1.sub(&other.y1)?,
            g: self.g.sub(&other.g)?,
            g_mode: self.g_mode,
            f: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeCoefficients {
    pub a: GridFunction,
    pub b: GridFunction,
    pub c: GridFunction,
    pub d: GridFunction,
}

impl SchemeCoefficients {
    /// Constant coefficients on the space closure times `t^0 .. t^N`.
    pub fn constant(grid: &Grid, a: f64, b: f64, c: f64, d: f64) -> SchemeCoefficients {
        let space = grid.space_axis(SpaceTag::Closure);
        let time = Axis::primal(0, grid.n() as i64);
        let k = |v| GridFunction::constant(*grid, space, time, v);
        SchemeCoefficients {
            a: k(a),
            b: k(b),
            c: k(c),
            d: k(d),
        }
    }

    pub fn zeros(grid: &Grid) -> SchemeCoefficients {
        Self::constant(grid, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let space = grid.space_axis(SpaceTag::Primal);
        let time = grid.time_axis(TimeTag::Primal);
        for (name, u) in [("a", &self.a), ("b", &self.b), ("c", &self.c), ("d", &self.d)] {
            if u.grid() != grid || !u.space().covers(&space) || !u.time().covers(&time) {
                return Err(Error::invalid(name, "must cover M x N"));
            }
            if u.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(name, "non-finite value"));
            }
        }
        Ok(())
    }
}

/// Dense, time-major copies of everything the stepper reads.
struct Prepared {
    grid: Grid,
    m: usize,
    n: usize,
    y0: Vec<f64>,
    y1: Vec<f64>,
    // row n-1 holds node (j, n) at column j-1
    a: Vec<f64>,
    b: Vec<f64>,
    denom: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    g: Vec<f64>,
    f: Vec<f64>,
}

impl Prepared {
    fn new(data: &ProblemData, coeffs: &SchemeCoefficients, grid: &Grid) -> Result<Prepared> {
        data.validate(grid)?;
        coeffs.validate(grid)?;
        let (m, n) = (grid.m(), grid.n());
        let dt = grid.dt();
        let t0 = data.y0.time().lo;
        let t1 = data.y1.time().lo;
        let y0 = (0..=m as i64 + 1).map(|j| data.y0.at(j, t0)).collect();
        let y1 = (0..=m as i64 + 1).map(|j| data.y1.at(j, t1)).collect();
        let table = |f: &dyn Fn(i64, i64) -> f64| {
            let mut out = Vec::with_capacity(m * n);
            for t in 1..=n as i64 {
                for j in 1..=m as i64 {
                    out.push(f(j, t));
                }
            }
            out
        };
        let c = table(&|j, t| coeffs.c.at(j, t));
        let mut denom = Vec::with_capacity(c.len());
        for (i, &cv) in c.iter().enumerate() {
            let dv = 1.0 - cv * dt;
            if dv.abs() <= 1e-12 {
                return Err(Error::SingularUpdate {
                    j: i % m + 1,
                    n: i / m + 1,
                });
            }
            denom.push(dv);
        }
        Ok(Prepared {
            grid: *grid,
            m,
            n,
            y0,
            y1,
            a: table(&|j, t| coeffs.a.at(j, t)),
            b: table(&|j, t| coeffs.b.at(j, t)),
            denom,
            c,
            d: table(&|j, t| coeffs.d.at(j, t)),
            g: table(&|j, t| data.g_at(j, t)),
            f: table(&|j, t| data.f_at(j, t)),
        })
    }

    fn solve(&self, path: &BrownianPath) -> Result<Trajectory> {
        let (m, n) = (self.m, self.n);
        if path.increments.len() < n + 1 {
            return Err(Error::invalid(
                "path",
                format!("{} increments, need {}", path.increments.len(), n + 1),
            ));
        }
        let dx = self.grid.dx();
        let dt = self.grid.dt();
        let w = m + 2;
        let r2 = dt * dt / (dx * dx);
        let dt2 = dt * dt;
        // time-major scratch: slice t at rows[t*w .. (t+1)*w]
        let mut rows = vec![0.0; (n + 2) * w];
        for j in 1..=m {
            rows[j] = self.y0[j];
            rows[w + j] = self.y0[j] + dt * self.y1[j];
        }
        for t in 1..=n {
            let db = path.increments[t];
            let (done, rest) = rows.split_at_mut((t + 1) * w);
            let prev = &done[(t - 1) * w..t * w];
            let cur = &done[t * w..(t + 1) * w];
            let next = &mut rest[..w];
            let base = (t - 1) * m;
            for j in 1..=m {
                let k = base + j - 1;
                let y = cur[j];
                let lap = cur[j + 1] - 2.0 * y + cur[j - 1];
                let grad = (cur[j + 1] - cur[j - 1]) / (2.0 * dx);
                let num = 2.0 * y - prev[j] + r2 * lap + dt2 * (self.a[k] * y + self.b[k] * grad) - self.c[k] * dt * y
                    + dt * (self.d[k] * y + self.g[k]) * db
                    + dt2 * self.f[k];
                let v = num / self.denom[k];
                if !v.is_finite() {
                    return Err(Error::BlowUp { j, n: t + 1 });
                }
                next[j] = v;
            }
        }
        let space = self.grid.space_axis(SpaceTag::Closure);
        let time = self.grid.time_axis(TimeTag::Closure);
        let y = GridFunction::from_index_fn(self.grid, space, time, |j, t| rows[t as usize * w + j as usize]);
        Ok(Trajectory {
            y,
            path: path.clone(),
            cfl_warning: dt > dx,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Values on the space closure times slices `0 .. N+1`.
    pub y: GridFunction,
    pub path: BrownianPath,
    /// Set when `dt > dx`.
    pub cfl_warning: bool,
}

impl Trajectory {
    pub fn observe(&self) -> Result<Observation> {
        observe(&self.y)
    }
}

pub fn solve(data: &ProblemData, coeffs: &SchemeCoefficients, path: &BrownianPath, grid: &Grid) -> Result<Trajectory> {
    Prepared::new(data, coeffs, grid)?.solve(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub trajectories: Vec<Trajectory>,
    pub master_seed: u64,
    pub coeffs: SchemeCoefficients,
}

impl Ensemble {
    pub fn grid(&self) -> &Grid {
        self.trajectories[0].y.grid()
    }

    pub fn paths(&self) -> usize {
        self.trajectories.len()
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.trajectories.iter().map(|t| t.path.seed).collect()
    }

    pub fn cfl_warning(&self) -> bool {
        self.trajectories.iter().any(|t| t.cfl_warning)
    }

    /// Pathwise mean, summed in path order.
    pub fn mean(&self) -> GridFunction {
        let first = &self.trajectories[0].y;
        let mut acc = vec![0.0; first.values().len()];
        for t in &self.trajectories {
            for (a, v) in acc.iter_mut().zip(t.y.values()) {
                *a += v;
            }
        }
        let k = self.paths() as f64;
        GridFunction::new(
            *first.grid(),
            first.space(),
            first.time(),
            acc.into_iter().map(|v| v / k).collect(),
        )
        .expect("same layout")
    }

    /// Standard error of the pathwise mean; zero for a single path.
    pub fn stderr(&self) -> GridFunction {
        let mean = self.mean();
        let k = self.paths();
        let mut acc = vec![0.0; mean.values().len()];
        if k > 1 {
            for t in &self.trajectories {
                for ((a, v), mu) in acc.iter_mut().zip(t.y.values()).zip(mean.values()) {
                    *a += (v - mu) * (v - mu);
                }
            }
            let kf = k as f64;
            for a in acc.iter_mut() {
                *a = (*a / (kf - 1.0)).sqrt() / kf.sqrt();
            }
        }
        GridFunction::new(*mean.grid(), mean.space(), mean.time(), acc).expect("same layout")
    }
}

/// Solves `paths` independent realisations in parallel.
///
/// Path `k` uses [`path_seed`]`(master_seed, k)`; the result does not depend
/// on the thread schedule.
pub fn run_ensemble(
    data: &ProblemData,
    coeffs: &SchemeCoefficients,
    grid: &Grid,
    paths: usize,
    master_seed: u64,
) -> Result<Ensemble> {
    if paths == 0 {
        return Err(Error::invalid("paths", "must be at least 1"));
    }
    let prep = Prepared::new(data, coeffs, grid)?;
    let trajectories = (0..paths)
        .into_par_iter()
        .map(|k| {
            let path = sample_brownian(grid.n(), grid.dt(), path_seed(master_seed, k as u64))?;
            prep.solve(&path).map_err(|e| Error::Path {
                index: k,
                source: Box::new(e),
            })
        })
        .collect::<Vec<_>>();
    // report the lowest failing index
    let trajectories = trajectories.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        trajectories,
        master_seed,
        coeffs: coeffs.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// `(y_1^n - y_0^n) / dx` for `n = 1..N`, time-only.
    pub flux: GridFunction,
    /// `y(., T)` on the space closure.
    pub terminal_y: GridFunction,
    /// `(y^{N+1} - y^N) / dt` on the space closure.
    pub terminal_v: GridFunction,
}

pub fn observe(y: &GridFunction) -> Result<Observation> {
    let grid = *y.grid();
    let n = grid.n() as i64;
    let closure_t = grid.time_axis(TimeTag::Closure);
    if !y.time().covers(&closure_t) {
        return Err(Error::IncompleteTrajectory(format!(
            "observations need slices 0..{}, have {:?}",
            n + 1,
            y.time()
        )));
    }
    let closure_x = grid.space_axis(SpaceTag::Closure);
    if !y.space().covers(&closure_x) {
        return Err(Error::MeshMismatch("trajectory must cover the space closure".into()));
    }
    let dx = grid.dx();
    let dt = grid.dt();
    let flux = GridFunction::from_index_fn(grid, Axis::primal(0, 0), grid.time_axis(TimeTag::Primal), |_, t| {
        (y.at(1, t) - y.at(0, t)) / dx
    });
    let slice = Axis::primal(n, n);
    let terminal_y = GridFunction::from_index_fn(grid, closure_x, slice, |j, _| y.at(j, n));
    let terminal_v = GridFunction::from_index_fn(grid, closure_x, slice, |j, _| (y.at(j, n + 1) - y.at(j, n)) / dt);
    Ok(Observation {
        flux,
        terminal_y,
        terminal_v,
    })
}

/// Max-abs residual of the multiplied-through scheme at every interior node,
/// relative to `scale`.
///
/// `y` must hold the full trajectory; `data.f` is included if present.
pub fn scheme_residual(
    y: &GridFunction,
    data: &ProblemData,
    coeffs: &SchemeCoefficients,
    path: &BrownianPath,
    scale: f64,
) -> Result<f64> {
    let grid = *y.grid();
    let prep = Prepared::new(data, coeffs, &grid)?;
    if !y.time().covers(&grid.time_axis(TimeTag::Closure)) {
        return Err(Error::IncompleteTrajectory("residual needs slices 0..N+1".into()));
    }
    let (m, n) = (grid.m() as i64, grid.n() as i64);
    let dx = grid.dx();
    let dt = grid.dt();
    let mut worst = 0.0f64;
    let mut check = |r: f64| worst = worst.max(r.abs());
    for j in 0..=m + 1 {
        let (y0, y1) = (prep.y0[j as usize], prep.y1[j as usize]);
        if j == 0 || j == m + 1 {
            for t in 0..=n + 1 {
                check(y.at(j, t));
            }
        } else {
            check(y.at(j, 0) - y0);
            check(y.at(j, 1) - y0 - dt * y1);
        }
    }
    for t in 1..=n {
        let db = path.increments[t as usize];
        for j in 1..=m {
            let k = (t as usize - 1) * prep.m + j as usize - 1;
            let yv = y.at(j, t);
            let lap = (y.at(j + 1, t) - 2.0 * yv + y.at(j - 1, t)) / (dx * dx);
            let grad = (y.at(j + 1, t) - y.at(j - 1, t)) / (2.0 * dx);
            let lhs = prep.denom[k] * y.at(j, t + 1);
            let rhs = 2.0 * yv - y.at(j, t - 1) + dt * dt * (lap + prep.a[k] * yv + prep.b[k] * grad)
                - prep.c[k] * dt * yv
                + dt * (prep.d[k] * yv + prep.g[k]) * db
                + dt * dt * prep.f[k];
            check(lhs - rhs);
        }
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

fn csv_err(e: io::Error) -> Error {
    Error::invalid("output", e.to_string())
}

pub fn write_trajectory_csv(traj: &Trajectory, mut w: impl Write) -> Result<()> {
    let y = &traj.y;
    let g = y.grid();
    writeln!(w, "j,x,n,t,y").map_err(csv_err)?;
    for j in y.space().indices() {
        for n in y.time().indices() {
            writeln!(w, "{},{},{},{},{}", j, g.x(j), n, g.t(n), y.at(j, n)).map_err(csv_err)?;
        }
    }
    Ok(())
}

pub fn write_flux_csv(obs: &Observation, mut w: impl Write) -> Result<()> {
    let g = obs.flux.grid();
    writeln!(w, "n,t,flux").map_err(csv_err)?;
    for n in obs.flux.time().indices() {
        writeln!(w, "{},{},{}", n, g.t(n), obs.flux.at(0, n)).map_err(csv_err)?;
    }
    Ok(())
}

pub fn write_terminal_csv(obs: &Observation, mut w: impl Write) -> Result<()> {
    let g = obs.terminal_y.grid();
    let n = obs.terminal_y.time().lo;
    writeln!(w, "j,x,terminal_y,terminal_v").map_err(csv_err)?;
    for j in obs.terminal_y.space().indices() {
        writeln!(
            w,
            "{},{},{},{}",
            j,
            g.x(j),
            obs.terminal_y.at(j, n),
            obs.terminal_v.at(j, n)
        )
        .map_err(csv_err)?;
    }
    Ok(())
}
