//! Monte Carlo evaluation of the weighted Carleman-type energy terms and of
//! the Lipschitz stability terms for coupled solution pairs.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::GridFunction;
use crate::integral::{integrate, norm, terminal_parts, Norm, Region};
use crate::mesh::{Axis, Grid, SpaceTag, TimeTag};
use crate::ops::{apply, compose, Op};
use crate::sde::{scheme_residual, Ensemble, ProblemData, SourceMode, Trajectory};
use crate::weight::{check_admissible, checked_exp, eval_weights, AdmissibilityReport, WeightParams, WeightValues};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCStatistic {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(paths)`; zero for one path.
    pub stderr: f64,
    pub paths: usize,
}

impl MCStatistic {
    pub fn from_samples(samples: &[f64]) -> MCStatistic {
        let k = samples.len();
        assert!(k > 0, "statistic of an empty sample");
        let kf = k as f64;
        let mean = samples.iter().sum::<f64>() / kf;
        let stderr = if k > 1 {
            let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (kf - 1.0)).sqrt() / kf.sqrt()
        } else {
            0.0
        };
        MCStatistic { mean, stderr, paths: k }
    }

    /// A known value with no sampling error.
    pub fn exact(value: f64, paths: usize) -> MCStatistic {
        MCStatistic {
            mean: value,
            stderr: 0.0,
            paths,
        }
    }

    /// `sqrt` of the mean, with a first-order error estimate.
    fn sqrt(self) -> MCStatistic {
        let mean = self.mean.max(0.0).sqrt();
        let stderr = if mean > 0.0 { self.stderr / (2.0 * mean) } else { 0.0 };
        MCStatistic {
            mean,
            stderr,
            paths: self.paths,
        }
    }
}

/// Named terms in a fixed order; serialises as a JSON object.
#[derive(Debug, Clone, PartialEq)]
pub struct Terms(pub Vec<(&'static str, MCStatistic)>);

impl Terms {
    pub fn get(&self, name: &str) -> Option<MCStatistic> {
        self.0.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().map(|(_, s)| s.mean).sum()
    }
}

impl Serialize for Terms {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = ser.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0 && num.is_finite() && den.is_finite()).then(|| num / den)
}

fn csv_rows(out: &mut String, terms: &Terms) {
    for (name, s) in &terms.0 {
        let _ = writeln!(out, "{name},{},{}", s.mean, s.stderr);
    }
}

fn csv_ratio(out: &mut String, name: &str, r: Option<f64>) {
    match r {
        Some(v) => {
            let _ = writeln!(out, "{name},{v},");
        }
        None => {
            let _ = writeln!(out, "{name},undefined,");
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarlemanReport {
    pub s: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub paths: usize,
    pub lhs: Terms,
    pub rhs: Terms,
    pub lhs_sum: f64,
    pub rhs_sum: f64,
    /// `lhs_sum / rhs_sum`; `None` when the right side vanishes.
    pub ratio: Option<f64>,
    pub admissibility: AdmissibilityReport,
    /// Set when the weight parameters and grid are outside the admissible regime.
    pub inadmissible: bool,
}

impl CarlemanReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("term,value,stderr\n");
        csv_rows(&mut out, &self.lhs);
        csv_rows(&mut out, &self.rhs);
        csv_ratio(&mut out, "ratio", self.ratio);
        out
    }
}

/// Samples `f` of the weights at every node of `space x time`.
fn weight_field(
    params: &WeightParams,
    grid: &Grid,
    space: Axis,
    time: Axis,
    f: impl Fn(&WeightValues) -> Result<f64>,
) -> Result<GridFunction> {
    let mut vals = Vec::with_capacity(space.len() * time.len());
    for j in space.indices() {
        let x = grid.space_coord(space.stagger, j);
        for n in time.indices() {
            let w = eval_weights(params, x, grid.time_coord(time.stagger, n))?;
            vals.push(f(&w)?);
        }
    }
    GridFunction::new(*grid, space, time, vals)
}

/// Weight fields shared by every path.
struct CarlemanWeights {
    /// `s³λ³φ³ r²` on `M x N`
    cubic: GridFunction,
    /// `sλφ r²` on `M x N`
    lin: GridFunction,
    /// `sλφ r²` on `M* x N`
    lin_dual: GridFunction,
    /// `sλφ` at `x = 0` over `N`
    flux: GridFunction,
    /// `sλ²φ` on `M* x N*`
    mixed: GridFunction,
    /// `r²` on `M x N`
    r2: GridFunction,
}

impl CarlemanWeights {
    fn new(p: &WeightParams, g: &Grid) -> Result<Self> {
        let (s, l) = (p.s, p.lambda);
        let m = g.space_axis(SpaceTag::Primal);
        let ms = g.space_axis(SpaceTag::Dual);
        let n = g.time_axis(TimeTag::Primal);
        let ns = g.time_axis(TimeTag::Dual);
        let cubic = |w: &WeightValues| Ok((s * l * w.varphi).powi(3) * w.r2()?);
        let lin = |w: &WeightValues| Ok(s * l * w.varphi * w.r2()?);
        Ok(CarlemanWeights {
            cubic: weight_field(p, g, m, n, cubic)?,
            lin: weight_field(p, g, m, n, lin)?,
            lin_dual: weight_field(p, g, ms, n, lin)?,
            flux: weight_field(p, g, Axis::primal(0, 0), n, |w| Ok(s * l * w.varphi))?,
            mixed: weight_field(p, g, ms, ns, |w| Ok(s * l * l * w.varphi))?,
            r2: weight_field(p, g, m, n, |w| w.r2())?,
        })
    }
}

fn sq(u: &GridFunction) -> GridFunction {
    u.map(|v| v * v)
}

/// `D_t D_x y` on `M* x N*`.
fn dtdx(y: &GridFunction) -> Result<GridFunction> {
    let g = y.grid();
    compose(&[Op::Dt, Op::Dx], y)?.restrict(g.space_axis(SpaceTag::Dual), g.time_axis(TimeTag::Dual))
}

/// `g` expanded onto `M x N`.
fn source_field(data: &ProblemData, grid: &Grid) -> GridFunction {
    GridFunction::from_index_fn(
        *grid,
        grid.space_axis(SpaceTag::Primal),
        grid.time_axis(TimeTag::Primal),
        |j, n| data.g_at(j, n),
    )
}

/// Per-path values of L1..L3 and R2, R3, the two squared parts of the
/// terminal norm.
fn carleman_path(w: &CarlemanWeights, y: &GridFunction) -> Result<[f64; 7]> {
    let l1 = integrate(&w.cubic.mul(&sq(y))?, Region::MxN)?;
    let fwd = apply(Op::TPlus, &sq(&apply(Op::Dt, y)?))?;
    let l2 = integrate(&w.lin.mul(&fwd)?, Region::MxN)?;
    let dx = apply(Op::Dx, y)?;
    let l3 = integrate(&w.lin_dual.mul(&sq(&dx))?, Region::MStarxN)?;
    // trace at x = 0 of |D_x y|² is the first dual value
    let tr = GridFunction::from_index_fn(*y.grid(), Axis::primal(0, 0), w.flux.time(), |_, n| dx.at(0, n).powi(2));
    let r2 = integrate(&w.flux.mul(&tr)?, Region::N)?;
    let h = y.grid().dx();
    let r3 = h * h * integrate(&w.mixed.mul(&sq(&dtdx(y)?))?, Region::MStarxNStar)?;
    let (h1, v) = terminal_parts(y)?;
    Ok([l1, l2, l3, r2, r3, h1 * h1, v * v])
}

/// `(sqrt(E a) + sqrt(E b))²` with a delta-method standard error.
fn terminal_norm_sq(a: &[f64], b: &[f64]) -> MCStatistic {
    let k = a.len();
    let sa = MCStatistic::from_samples(a);
    let sb = MCStatistic::from_samples(b);
    let (ra, rb) = (sa.mean.max(0.0).sqrt(), sb.mean.max(0.0).sqrt());
    let mean = (ra + rb).powi(2);
    let stderr = if k > 1 {
        let ga = if ra > 0.0 { (ra + rb) / ra } else { 0.0 };
        let gb = if rb > 0.0 { (ra + rb) / rb } else { 0.0 };
        let kf = k as f64;
        let cov = a.iter().zip(b).map(|(x, y)| (x - sa.mean) * (y - sb.mean)).sum::<f64>() / (kf - 1.0);
        let var = ga * ga * sa.stderr.powi(2) + gb * gb * sb.stderr.powi(2) + 2.0 * ga * gb * cov / kf;
        var.max(0.0).sqrt()
    } else {
        0.0
    };
    MCStatistic { mean, stderr, paths: k }
}

/// Every term of the weighted energy inequality, averaged over the ensemble.
///
/// `kappa` scales the terminal term by `e^{κ s}`. Reports outside the
/// admissible regime are still computed and flagged.
pub fn carleman_terms(
    ens: &Ensemble,
    params: &WeightParams,
    data: &ProblemData,
    grid: &Grid,
    kappa: f64,
) -> Result<CarlemanReport> {
    params.validate()?;
    if ens.grid() != grid {
        return Err(Error::MeshMismatch("ensemble was solved on a different grid".into()));
    }
    data.validate(grid)?;
    let admissibility = check_admissible(params, grid);
    let w = CarlemanWeights::new(params, grid)?;
    let k = ens.paths();

    let per_path = ens
        .trajectories
        .par_iter()
        .map(|t: &Trajectory| carleman_path(&w, &t.y))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let col = |i: usize| per_path.iter().map(|r| r[i]).collect::<Vec<_>>();

    // deterministic data terms
    let g = source_field(data, grid);
    let l4 = integrate(&w.lin.mul(&sq(&g))?, Region::MxN)?;
    let slice0 = grid.time_axis(TimeTag::Slice(0));
    let (s, l) = (params.s, params.lambda);
    let cubic0 = weight_field(params, grid, grid.space_axis(SpaceTag::Primal), slice0, |v| {
        Ok((s * l * v.varphi).powi(3) * v.r2()?)
    })?;
    let lin0 = |space| weight_field(params, grid, space, slice0, |v| Ok(s * l * v.varphi * v.r2()?));
    let y0 = data.y0.clone().relabel_time(slice0)?;
    let y1 = data.y1.clone().relabel_time(slice0)?;
    let l5 = integrate(&cubic0.mul(&sq(&y0))?, Region::M)?;
    let l6 = integrate(
        &lin0(grid.space_axis(SpaceTag::Dual))?.mul(&sq(&apply(Op::Dx, &y0)?))?,
        Region::MStar,
    )?;
    let l7 = integrate(&lin0(grid.space_axis(SpaceTag::Primal))?.mul(&sq(&y1))?, Region::M)?;
    let r1 = match &data.f {
        Some(f) => integrate(&w.r2.mul(&sq(f))?, Region::MxN)?,
        None => 0.0,
    };

    let scale = s.powi(3) * checked_exp(kappa * s)?;
    let xt = terminal_norm_sq(&col(5), &col(6));
    let r4 = MCStatistic {
        mean: scale * xt.mean,
        stderr: scale * xt.stderr,
        paths: k,
    };

    let lhs = Terms(vec![
        ("L1", MCStatistic::from_samples(&col(0))),
        ("L2", MCStatistic::from_samples(&col(1))),
        ("L3", MCStatistic::from_samples(&col(2))),
        ("L4", MCStatistic::exact(l4, k)),
        ("L5", MCStatistic::exact(l5, k)),
        ("L6", MCStatistic::exact(l6, k)),
        ("L7", MCStatistic::exact(l7, k)),
    ]);
    let rhs = Terms(vec![
        ("R1", MCStatistic::exact(r1, k)),
        ("R2", MCStatistic::from_samples(&col(3))),
        ("R3", MCStatistic::from_samples(&col(4))),
        ("R4", r4),
    ]);
    let (lhs_sum, rhs_sum) = (lhs.sum(), rhs.sum());
    Ok(CarlemanReport {
        s,
        lambda: l,
        kappa,
        paths: k,
        ratio: ratio(lhs_sum, rhs_sum),
        lhs,
        rhs,
        lhs_sum,
        rhs_sum,
        inadmissible: !admissibility.overall,
        admissibility,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub g_mode: SourceMode,
    pub paths: usize,
    /// `G`: source difference, `Y0`: `H1` of the displacement difference,
    /// `Y1`: `L2` of the velocity difference.
    pub lhs: Terms,
    /// `FLUX`, `XT` (unsquared) and `DTDX`.
    pub rhs: Terms,
    /// Squared terminal norm, as the middle term is printed.
    pub xt_squared: MCStatistic,
    pub lhs_sum: f64,
    pub rhs_sum: f64,
    /// Every term unsquared.
    pub ratio: Option<f64>,
    /// With the squared terminal norm in the denominator.
    pub ratio_printed: Option<f64>,
}

impl StabilityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("term,value,stderr\n");
        csv_rows(&mut out, &self.lhs);
        csv_rows(&mut out, &self.rhs);
        let _ = writeln!(out, "XT_SQ,{},{}", self.xt_squared.mean, self.xt_squared.stderr);
        csv_ratio(&mut out, "ratio", self.ratio);
        csv_ratio(&mut out, "ratio_printed", self.ratio_printed);
        out
    }
}

/// Checks that two ensembles were driven by the same noise and coefficients.
pub fn check_coupled(a: &Ensemble, b: &Ensemble) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::Coupling("ensembles live on different grids".into()));
    }
    if a.paths() != b.paths() {
        return Err(Error::Coupling(format!("{} paths vs {}", a.paths(), b.paths())));
    }
    if let Some(k) = (0..a.paths()).find(|&k| a.trajectories[k].path != b.trajectories[k].path) {
        return Err(Error::Coupling(format!("path {k} uses different Brownian increments")));
    }
    if a.coeffs != b.coeffs {
        return Err(Error::Coupling("coefficients differ".into()));
    }
    Ok(())
}

/// Per-path squared flux difference, terminal parts and scaled mixed difference.
fn stability_path(ya: &GridFunction, yb: &GridFunction) -> Result<[f64; 4]> {
    let d = ya.sub(yb)?;
    let g = *d.grid();
    let dx = apply(Op::Dx, &d)?;
    let flux = GridFunction::from_index_fn(g, Axis::primal(0, 0), g.time_axis(TimeTag::Primal), |_, n| {
        dx.at(0, n).powi(2)
    });
    let flux2 = integrate(&flux, Region::N)?;
    let (h1, v) = terminal_parts(&d)?;
    let h = g.dx();
    let mixed = integrate(&sq(&dtdx(&d)?.scale(h)), Region::MStarxNStar)?;
    Ok([flux2, h1 * h1, v * v, mixed])
}

/// Stability terms of the difference of two coupled ensembles.
pub fn stability_terms(
    ens_a: &Ensemble,
    ens_b: &Ensemble,
    data_a: &ProblemData,
    data_b: &ProblemData,
    grid: &Grid,
) -> Result<StabilityReport> {
    check_coupled(ens_a, ens_b)?;
    if ens_a.grid() != grid {
        return Err(Error::MeshMismatch("ensembles were solved on a different grid".into()));
    }
    data_a.validate(grid)?;
    data_b.validate(grid)?;
    let diff = data_a.difference(data_b)?;
    let k = ens_a.paths();

    let g_norm = match diff.g_mode {
        SourceMode::SpaceTime => norm(&diff.g, Norm::L2(Region::MxN))?,
        SourceMode::SpaceOnly => norm(&diff.g, Norm::L2(Region::M))?,
    };
    let y0 = norm(&diff.y0, Norm::H1)?;
    let y1 = norm(&diff.y1, Norm::L2(Region::M))?;

    let per_path = ens_a
        .trajectories
        .par_iter()
        .zip(ens_b.trajectories.par_iter())
        .map(|(a, b)| stability_path(&a.y, &b.y))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let col = |i: usize| per_path.iter().map(|r| r[i]).collect::<Vec<_>>();

    let flux = MCStatistic::from_samples(&col(0)).sqrt();
    let xt_squared = terminal_norm_sq(&col(1), &col(2));
    let xt = xt_squared.sqrt();
    let dtdx = MCStatistic::from_samples(&col(3)).sqrt();

    let lhs = Terms(vec![
        ("G", MCStatistic::exact(g_norm, k)),
        ("Y0", MCStatistic::exact(y0, k)),
        ("Y1", MCStatistic::exact(y1, k)),
    ]);
    let rhs = Terms(vec![("FLUX", flux), ("XT", xt), ("DTDX", dtdx)]);
    let (lhs_sum, rhs_sum) = (lhs.sum(), rhs.sum());
    let printed = flux.mean + xt_squared.mean + dtdx.mean;
    Ok(StabilityReport {
        g_mode: diff.g_mode,
        paths: k,
        ratio: ratio(lhs_sum, rhs_sum),
        ratio_printed: ratio(lhs_sum, printed),
        lhs,
        rhs,
        xt_squared,
        lhs_sum,
        rhs_sum,
    })
}

/// Largest residual, over paths and interior nodes, of the homogeneous-forcing
/// system satisfied by the difference of two coupled solutions.
///
/// Each path's residual is relative to the larger sup-norm of its two solutions.
pub fn difference_residual(
    ens_a: &Ensemble,
    ens_b: &Ensemble,
    data_a: &ProblemData,
    data_b: &ProblemData,
) -> Result<f64> {
    check_coupled(ens_a, ens_b)?;
    let diff = data_a.difference(data_b)?;
    let mut worst = 0.0f64;
    for (a, b) in ens_a.trajectories.iter().zip(&ens_b.trajectories) {
        let d = a.y.sub(&b.y)?;
        let scale = a.y.max_abs().max(b.y.max_abs());
        worst = worst.max(scheme_residual(&d, &diff, &ens_a.coeffs, &a.path, scale)?);
    }
    Ok(worst)
}

/// Minimum ensemble size for the orthogonality statistic.
pub const MARTINGALE_MIN_PATHS: usize = 100;

/// Per-path Itô sum `Σ_{n=1}^{N} Σ_{j=1}^{M} y_j^n ΔB^n dx dt`.
///
/// The integrand at step `n` only uses slices up to `n`, so each sum has
/// zero expectation.
pub fn martingale_check(ens: &Ensemble) -> Result<MCStatistic> {
    if ens.paths() < MARTINGALE_MIN_PATHS {
        return Err(Error::Precondition(format!(
            "orthogonality check needs at least {MARTINGALE_MIN_PATHS} paths, got {}",
            ens.paths()
        )));
    }
    let g = *ens.grid();
    let (m, n) = (g.m() as i64, g.n() as i64);
    let w = g.dx() * g.dt();
    let samples: Vec<f64> = ens
        .trajectories
        .iter()
        .map(|t| {
            let mut acc = 0.0;
            for step in 1..=n {
                let db = t.path.increment(step as usize);
                let col: f64 = (1..=m).map(|j| t.y.at(j, step)).sum();
                acc += col * db;
            }
            acc * w
        })
        .collect();
    Ok(MCStatistic::from_samples(&samples))
}
