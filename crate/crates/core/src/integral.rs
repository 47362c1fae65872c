//! Discrete integrals, boundary traces and norms.
//!
//! Interior space sums carry `dx`, interior time sums carry `dt`, and sums over
//! the boundary sets `{0, 1}` and `{0, T}` carry no mesh factor.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::GridFunction;
use crate::mesh::{Axis, Grid, SpaceTag, Stagger};
use crate::ops::{apply, Op};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpaceSet {
    /// `M`
    Interior,
    /// `M*`
    Dual,
    /// `M̄`
    Closure,
    /// `∂M = {0, 1}`
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TimeSet {
    /// `N`
    Interior,
    /// `N*`
    Dual,
    /// `N̄ = N ∪ {0}`
    Closure,
    /// `∂N = {0, T}`
    Boundary,
}

impl SpaceSet {
    fn points(&self, grid: &Grid) -> (Stagger, Vec<i64>, f64) {
        let m = grid.m() as i64;
        match self {
            SpaceSet::Interior => (Stagger::Primal, (1..=m).collect(), grid.dx()),
            SpaceSet::Dual => (Stagger::Dual, (0..=m).collect(), grid.dx()),
            SpaceSet::Closure => (Stagger::Primal, (0..=m + 1).collect(), grid.dx()),
            SpaceSet::Boundary => (Stagger::Primal, vec![0, m + 1], 1.0),
        }
    }
}

impl TimeSet {
    fn points(&self, grid: &Grid) -> (Stagger, Vec<i64>, f64) {
        let n = grid.n() as i64;
        match self {
            TimeSet::Interior => (Stagger::Primal, (1..=n).collect(), grid.dt()),
            TimeSet::Dual => (Stagger::Dual, (0..n).collect(), grid.dt()),
            TimeSet::Closure => (Stagger::Primal, (0..=n).collect(), grid.dt()),
            TimeSet::Boundary => (Stagger::Primal, vec![0, n], 1.0),
        }
    }
}

/// Integration domains used by the estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    M,
    MStar,
    MBar,
    BoundaryM,
    N,
    NStar,
    NBar,
    BoundaryN,
    MxN,
    MStarxN,
    MxNStar,
    MStarxNStar,
    BoundaryMxN,
    MxBoundaryN,
}

impl Region {
    pub const ALL: [Region; 14] = [
        Region::M,
        Region::MStar,
        Region::MBar,
        Region::BoundaryM,
        Region::N,
        Region::NStar,
        Region::NBar,
        Region::BoundaryN,
        Region::MxN,
        Region::MStarxN,
        Region::MxNStar,
        Region::MStarxNStar,
        Region::BoundaryMxN,
        Region::MxBoundaryN,
    ];

    pub fn parts(&self) -> (Option<SpaceSet>, Option<TimeSet>) {
        use Region::*;
        match self {
            M => (Some(SpaceSet::Interior), None),
            MStar => (Some(SpaceSet::Dual), None),
            MBar => (Some(SpaceSet::Closure), None),
            BoundaryM => (Some(SpaceSet::Boundary), None),
            N => (None, Some(TimeSet::Interior)),
            NStar => (None, Some(TimeSet::Dual)),
            NBar => (None, Some(TimeSet::Closure)),
            BoundaryN => (None, Some(TimeSet::Boundary)),
            MxN => (Some(SpaceSet::Interior), Some(TimeSet::Interior)),
            MStarxN => (Some(SpaceSet::Dual), Some(TimeSet::Interior)),
            MxNStar => (Some(SpaceSet::Interior), Some(TimeSet::Dual)),
            MStarxNStar => (Some(SpaceSet::Dual), Some(TimeSet::Dual)),
            BoundaryMxN => (Some(SpaceSet::Boundary), Some(TimeSet::Interior)),
            MxBoundaryN => (Some(SpaceSet::Interior), Some(TimeSet::Boundary)),
        }
    }

    pub fn name(&self) -> &'static str {
        use Region::*;
        match self {
            M => "M",
            MStar => "M*",
            MBar => "Mbar",
            BoundaryM => "dM",
            N => "N",
            NStar => "N*",
            NBar => "Nbar",
            BoundaryN => "dN",
            MxN => "MxN",
            MStarxN => "M*xN",
            MxNStar => "MxN*",
            MStarxNStar => "M*xN*",
            BoundaryMxN => "dMxN",
            MxBoundaryN => "MxdN",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Region> {
        Region::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::invalid("region", format!("unknown region `{s}`")))
    }
}

fn missing(u: &GridFunction, what: &str) -> Error {
    Error::MeshMismatch(format!(
        "function on {:?} x {:?} does not carry {what}",
        u.space(),
        u.time()
    ))
}

/// Sums `u` over a space set at every stored time; result is time-only.
pub fn integrate_space(u: &GridFunction, set: SpaceSet) -> Result<GridFunction> {
    let grid = *u.grid();
    let (stagger, pts, w) = set.points(&grid);
    if u.space().stagger != stagger || !pts.iter().all(|&j| u.space().contains(j)) {
        return Err(missing(u, &format!("the space set {set:?}")));
    }
    let mut out = Vec::with_capacity(u.time().len());
    for n in u.time().indices() {
        out.push(pts.iter().map(|&j| u.at(j, n)).sum::<f64>() * w);
    }
    GridFunction::new(grid, Axis::primal(0, 0), u.time(), out)
}

/// Sums `u` over a time set at every stored space point; result is space-only.
pub fn integrate_time(u: &GridFunction, set: TimeSet) -> Result<GridFunction> {
    let grid = *u.grid();
    let (stagger, pts, w) = set.points(&grid);
    if u.time().stagger != stagger || !pts.iter().all(|&n| u.time().contains(n)) {
        return Err(missing(u, &format!("the time set {set:?}")));
    }
    let mut out = Vec::with_capacity(u.space().len());
    for j in u.space().indices() {
        out.push(pts.iter().map(|&n| u.at(j, n)).sum::<f64>() * w);
    }
    GridFunction::new(grid, u.space(), Axis::primal(0, 0), out)
}

/// Discrete integral of `u` over `region`.
///
/// Space-only regions need a function with a single time slice and
/// time-only regions a function with a single space point.
pub fn integrate(u: &GridFunction, region: Region) -> Result<f64> {
    match region.parts() {
        (Some(s), None) => {
            if u.time().len() != 1 {
                return Err(missing(u, "a single time slice"));
            }
            Ok(integrate_space(u, s)?.values()[0])
        }
        (None, Some(t)) => {
            if u.space().len() != 1 {
                return Err(missing(u, "a single space point"));
            }
            Ok(integrate_time(u, t)?.values()[0])
        }
        (Some(s), Some(t)) => Ok(integrate_time(&integrate_space(u, s)?, t)?.values()[0]),
        (None, None) => unreachable!(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Left,
    Right,
}

/// Trace of a dual-mesh function on `x = 0` or `x = 1`.
///
/// The outward normal selects the nearest dual value: `s+ u` at `x = 0` and
/// `s- u` at `x = 1`. The result is a time-only function located at the
/// boundary point.
pub fn trace(u: &GridFunction, side: Side) -> Result<GridFunction> {
    if u.space().stagger != Stagger::Dual {
        return Err(Error::MeshMismatch(
            "trace needs a function on the dual space mesh".into(),
        ));
    }
    let m = u.grid().m() as i64;
    let (src, at) = match side {
        Side::Left => (0, 0),
        Side::Right => (m, m + 1),
    };
    if !u.space().contains(src) {
        return Err(Error::StencilOutOfRange {
            axis: "space",
            index: src,
        });
    }
    let vals = u.time().indices().map(|n| u.at(src, n)).collect();
    GridFunction::new(*u.grid(), Axis::primal(at, at), u.time(), vals)
}

/// The trace extended by zero to the whole primal closure (`tr = 0` where `n_x = 0`).
pub fn trace_field(u: &GridFunction) -> Result<GridFunction> {
    let left = trace(u, Side::Left)?;
    let right = trace(u, Side::Right)?;
    let grid = *u.grid();
    let m = grid.m() as i64;
    Ok(GridFunction::from_index_fn(
        grid,
        grid.space_axis(SpaceTag::Closure),
        u.time(),
        |j, n| {
            if j == 0 {
                left.at(0, n)
            } else if j == m + 1 {
                right.at(m + 1, n)
            } else {
                0.0
            }
        },
    ))
}

/// `n_x` on the primal space closure, replicated over `time`.
pub fn normal_x_field(grid: &Grid, time: Axis) -> GridFunction {
    GridFunction::from_index_fn(*grid, grid.space_axis(SpaceTag::Closure), time, |j, _| {
        grid.normal_x(j) as f64
    })
}

/// `n_t` on `t^0 .. t^N`, replicated over `space`.
pub fn normal_t_field(grid: &Grid, space: Axis) -> GridFunction {
    GridFunction::from_index_fn(*grid, space, Axis::primal(0, grid.n() as i64), |_, n| {
        grid.normal_t(n) as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Norm {
    L2(Region),
    Linf(Region),
    /// `(∫_{M*} |D_x u|² + ∫_M |u|²)^{1/2}` of a single space slice.
    H1,
    /// `(∫_N t+(|D_t u|²))^{1/2}`; over `M x N` when `u` has several space points.
    Dt,
    /// `‖u(T)‖_{H1} + ‖t+(D_t u)(T)‖_{L2(M)}`.
    Xt,
}

pub fn norm(u: &GridFunction, kind: Norm) -> Result<f64> {
    let grid = *u.grid();
    match kind {
        Norm::L2(region) => Ok(integrate(&u.map(|v| v * v), region)?.max(0.0).sqrt()),
        Norm::Linf(region) => linf(u, region),
        Norm::H1 => h1(u),
        Norm::Dt => {
            let n = grid.n() as i64;
            if u.time().stagger != Stagger::Primal || !u.time().contains(1) || !u.time().contains(n + 1) {
                return Err(Error::IncompleteTrajectory(format!(
                    "D_t norm needs slices 1..={} (got {:?})",
                    n + 1,
                    u.time()
                )));
            }
            let d = apply(Op::Dt, u)?;
            let fwd = apply(Op::TPlus, &d.map(|v| v * v))?;
            let region = if u.space().len() == 1 { Region::N } else { Region::MxN };
            Ok(integrate(&fwd, region)?.max(0.0).sqrt())
        }
        Norm::Xt => {
            let (h, v) = terminal_parts(u)?;
            Ok(h + v)
        }
    }
}

/// `‖u(., T)‖_{H1}` and `‖t+(D_t u)(., T)‖_{L2(M)}` separately.
pub fn terminal_parts(u: &GridFunction) -> Result<(f64, f64)> {
    let grid = *u.grid();
    let n = grid.n() as i64;
    if u.time().stagger != Stagger::Primal || !u.time().contains(n) || !u.time().contains(n + 1) {
        return Err(Error::IncompleteTrajectory(format!(
            "terminal norm needs slices {n} and {} (got {:?})",
            n + 1,
            u.time()
        )));
    }
    let y_t = u.slice(n)?;
    let dt = grid.dt();
    let next = u.slice(n + 1)?.relabel_time(y_t.time())?;
    let vel = next.zip_with(&y_t, |a, b| (a - b) / dt)?;
    Ok((h1(&y_t)?, norm(&vel, Norm::L2(Region::M))?))
}

fn h1(u: &GridFunction) -> Result<f64> {
    if u.time().len() != 1 {
        return Err(missing(u, "a single time slice"));
    }
    let grid = *u.grid();
    if !u.space().covers(&grid.space_axis(SpaceTag::Closure)) {
        return Err(missing(u, "the primal space closure"));
    }
    let dx = apply(Op::Dx, u)?;
    let grad = integrate(&dx.map(|v| v * v), Region::MStar)?;
    let mass = integrate(&u.map(|v| v * v), Region::M)?;
    Ok((grad + mass).max(0.0).sqrt())
}

fn linf(u: &GridFunction, region: Region) -> Result<f64> {
    let grid = *u.grid();
    let (s, t) = region.parts();
    let space_pts = match s {
        Some(set) => {
            let (st, pts, _) = set.points(&grid);
            if u.space().stagger != st {
                return Err(missing(u, &format!("the space set {set:?}")));
            }
            pts
        }
        None => u.space().indices().collect(),
    };
    let time_pts = match t {
        Some(set) => {
            let (st, pts, _) = set.points(&grid);
            if u.time().stagger != st {
                return Err(missing(u, &format!("the time set {set:?}")));
            }
            pts
        }
        None => u.time().indices().collect(),
    };
    let mut best: f64 = 0.0;
    for &j in &space_pts {
        for &n in &time_pts {
            let v = u.get(j, n).ok_or_else(|| missing(u, &format!("point ({j}, {n})")))?;
            best = best.max(v.abs());
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TimeTag;

    fn grid3() -> Grid {
        Grid::new(3, 4, 2.0).unwrap()
    }

    #[test]
    fn unit_integrals() {
        let g = grid3();
        let on = |tag| GridFunction::space_fn(g, tag, |_| 1.0);
        assert_eq!(integrate(&on(SpaceTag::Primal), Region::M).unwrap(), 0.75);
        assert_eq!(integrate(&on(SpaceTag::Dual), Region::MStar).unwrap(), 1.0);
        assert_eq!(integrate(&on(SpaceTag::Closure), Region::BoundaryM).unwrap(), 2.0);
        assert_eq!(integrate(&on(SpaceTag::Closure), Region::MBar).unwrap(), 1.25);

        let t = |tag| GridFunction::time_fn(g, tag, |_| 1.0);
        assert_eq!(integrate(&t(TimeTag::Primal), Region::N).unwrap(), 2.0);
        assert_eq!(integrate(&t(TimeTag::Dual), Region::NStar).unwrap(), 2.0);
        assert_eq!(integrate(&t(TimeTag::Closure), Region::NBar).unwrap(), 2.5);
        assert_eq!(integrate(&t(TimeTag::Closure), Region::BoundaryN).unwrap(), 2.0);
    }

    #[test]
    fn product_regions() {
        let g = grid3();
        let u = GridFunction::constant(g, g.space_axis(SpaceTag::Closure), g.time_axis(TimeTag::Closure), 1.0);
        assert_eq!(integrate(&u, Region::MxN).unwrap(), 0.75 * 2.0);
        // dt only on the space boundary, dx only on the time boundary
        assert_eq!(integrate(&u, Region::BoundaryMxN).unwrap(), 2.0 * 2.0);
        assert_eq!(integrate(&u, Region::MxBoundaryN).unwrap(), 0.75 * 2.0);
        let d = GridFunction::constant(g, g.space_axis(SpaceTag::Dual), Axis::dual(0, 4), 1.0);
        assert_eq!(integrate(&d, Region::MStarxNStar).unwrap(), 1.0 * 2.0);
        assert!(matches!(integrate(&d, Region::MxN), Err(Error::MeshMismatch(_))));
    }

    #[test]
    fn region_mismatch() {
        let g = grid3();
        let p = GridFunction::space_fn(g, SpaceTag::Primal, |_| 1.0);
        assert!(matches!(integrate(&p, Region::MStar), Err(Error::MeshMismatch(_))));
        assert!(matches!(integrate(&p, Region::MBar), Err(Error::MeshMismatch(_))));
        assert!(matches!(integrate(&p, Region::N), Err(Error::MeshMismatch(_))));
    }

    #[test]
    fn traces() {
        let g = grid3();
        let u = GridFunction::space_fn(g, SpaceTag::Dual, |x| x);
        assert_eq!(trace(&u, Side::Left).unwrap().values(), &[0.125]);
        assert_eq!(trace(&u, Side::Right).unwrap().values(), &[0.875]);
        let c = GridFunction::space_fn(g, SpaceTag::Dual, |_| 4.5);
        assert_eq!(trace(&c, Side::Left).unwrap().values(), &[4.5]);
        assert_eq!(trace(&c, Side::Right).unwrap().values(), &[4.5]);
        let p = GridFunction::space_fn(g, SpaceTag::Closure, |x| x);
        assert!(matches!(trace(&p, Side::Left), Err(Error::MeshMismatch(_))));
        let f = trace_field(&u).unwrap();
        assert_eq!(f.values(), &[0.125, 0.0, 0.0, 0.0, 0.875]);
    }

    #[test]
    fn basic_norms() {
        let g = grid3();
        let one = GridFunction::space_fn(g, SpaceTag::Primal, |_| 1.0);
        assert!((norm(&one, Norm::L2(Region::M)).unwrap() - 0.75f64.sqrt()).abs() < 1e-15);
        assert_eq!(norm(&one, Norm::Linf(Region::M)).unwrap(), 1.0);
        let x = GridFunction::space_fn(g, SpaceTag::Closure, |x| x);
        // ∫_{M*} 1 = 1 and ∫_M x² = 0.25 * (1/16 + 4/16 + 9/16) = 0.21875
        assert!((norm(&x, Norm::H1).unwrap() - 1.21875f64.sqrt()).abs() < 1e-15);
        let zero = GridFunction::zeros(g, g.space_axis(SpaceTag::Closure), g.time_axis(TimeTag::Closure));
        for kind in [Norm::L2(Region::MxN), Norm::Linf(Region::MxN), Norm::Dt, Norm::Xt] {
            assert_eq!(norm(&zero, kind).unwrap(), 0.0);
        }
        assert_eq!(norm(&zero.slice(0).unwrap(), Norm::H1).unwrap(), 0.0);
    }

    #[test]
    fn dt_norm() {
        let g = grid3();
        let c = GridFunction::time_fn(g, TimeTag::Closure, |_| 3.0);
        assert_eq!(norm(&c, Norm::Dt).unwrap(), 0.0);
        let lin = GridFunction::time_fn(g, TimeTag::Closure, |t| 2.0 * t);
        // |D_t|² = 4 on every step, integrated over N with total length T = 2
        assert!((norm(&lin, Norm::Dt).unwrap() - 8f64.sqrt()).abs() < 1e-13);
        let short = GridFunction::time_fn(g, TimeTag::Primal, |t| t);
        assert!(matches!(norm(&short, Norm::Dt), Err(Error::IncompleteTrajectory(_))));
    }

    #[test]
    fn xt_norm() {
        let g = grid3();
        let n = g.n() as i64;
        // u = t sin(pi x): terminal slice T sin(pi x), terminal forward velocity sin(pi x)
        let u = GridFunction::from_fn(
            g,
            g.space_axis(SpaceTag::Closure),
            g.time_axis(TimeTag::Closure),
            |x, t| t * (std::f64::consts::PI * x).sin(),
        );
        let (h, v) = terminal_parts(&u).unwrap();
        let s = GridFunction::space_fn(g, SpaceTag::Closure, |x| (std::f64::consts::PI * x).sin());
        let expect_v = norm(
            &s.restrict(g.space_axis(SpaceTag::Primal), s.time()).unwrap(),
            Norm::L2(Region::M),
        )
        .unwrap();
        assert!((v - expect_v).abs() < 1e-12);
        assert!((h - 2.0 * norm(&s, Norm::H1).unwrap()).abs() < 1e-12);
        assert!((norm(&u, Norm::Xt).unwrap() - (h + v)).abs() < 1e-15);
        let cut = u.restrict(u.space(), Axis::primal(0, n)).unwrap();
        assert!(matches!(norm(&cut, Norm::Xt), Err(Error::IncompleteTrajectory(_))));
    }

    #[test]
    fn region_names_parse() {
        for r in Region::ALL {
            assert_eq!(r.name().parse::<Region>().unwrap(), r);
        }
    }
}
