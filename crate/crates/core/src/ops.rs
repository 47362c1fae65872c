//! Translation, average and difference operators on staggered grid functions.
//!
//! Every operator reads its argument at `x +- dx/2` (or `t +- dt/2`), so the
//! output lives on the opposite lattice. Outputs are clipped to the physical
//! extent of the grid: primal space `[0, M+1]`, dual space `[0, M]`, primal
//! time `[0, N+1]` and dual time `[0, N]`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::function::GridFunction;
use crate::mesh::{Axis, Stagger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    /// `s+ u(x) = u(x + dx/2)`
    SPlus,
    /// `s- u(x) = u(x - dx/2)`
    SMinus,
    /// `t+ u(t) = u(t + dt/2)`
    TPlus,
    /// `t- u(t) = u(t - dt/2)`
    TMinus,
    Ax,
    Dx,
    At,
    Dt,
    /// `d_t u = t+ u - t- u`
    DtIncr,
    /// `D_x D_x`
    Dx2,
}

impl Op {
    pub const ALL: [Op; 10] = [
        Op::SPlus,
        Op::SMinus,
        Op::TPlus,
        Op::TMinus,
        Op::Ax,
        Op::Dx,
        Op::At,
        Op::Dt,
        Op::DtIncr,
        Op::Dx2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Op::SPlus => "s+",
            Op::SMinus => "s-",
            Op::TPlus => "t+",
            Op::TMinus => "t-",
            Op::Ax => "Ax",
            Op::Dx => "Dx",
            Op::At => "At",
            Op::Dt => "Dt",
            Op::DtIncr => "dt_incr",
            Op::Dx2 => "Dx2",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Op {
    type Err = Error;

    fn from_str(s: &str) -> Result<Op> {
        Op::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| Error::invalid("op", format!("unknown operator `{s}`")))
    }
}

#[derive(Clone, Copy)]
enum Dir {
    Space,
    Time,
}

/// Two-point stencil `c_plus * u(. + h/2) + c_minus * u(. - h/2)`.
#[derive(Clone, Copy)]
struct Stencil {
    plus: Option<f64>,
    minus: Option<f64>,
}

/// Index on the source lattice reached from output index `k` by a half step.
fn source_index(out: Stagger, k: i64, plus: bool) -> i64 {
    match (out, plus) {
        (Stagger::Dual, true) => k + 1,
        (Stagger::Dual, false) => k,
        (Stagger::Primal, true) => k,
        (Stagger::Primal, false) => k - 1,
    }
}

/// Output range reachable from `src` by the requested half steps.
fn output_axis(src: Axis, stencil: Stencil) -> Axis {
    let out = src.stagger.flip();
    // invert source_index on each end of the range
    let reach = |plus: bool| match (out, plus) {
        (Stagger::Dual, true) => (src.lo - 1, src.hi - 1),
        (Stagger::Dual, false) => (src.lo, src.hi),
        (Stagger::Primal, true) => (src.lo, src.hi),
        (Stagger::Primal, false) => (src.lo + 1, src.hi + 1),
    };
    let (mut lo, mut hi) = (i64::MIN, i64::MAX);
    if stencil.plus.is_some() {
        let (a, b) = reach(true);
        lo = lo.max(a);
        hi = hi.min(b);
    }
    if stencil.minus.is_some() {
        let (a, b) = reach(false);
        lo = lo.max(a);
        hi = hi.min(b);
    }
    Axis { stagger: out, lo, hi }
}

fn apply_stencil(u: &GridFunction, dir: Dir, stencil: Stencil) -> Result<GridFunction> {
    let grid = *u.grid();
    let (src, extent, axis_name) = match dir {
        Dir::Space => (u.space(), grid.space_extent(u.space().stagger.flip()), "space"),
        Dir::Time => (u.time(), grid.time_extent(u.time().stagger.flip()), "time"),
    };
    let reach = output_axis(src, stencil);
    let out = reach.intersect(&extent).ok_or(Error::StencilOutOfRange {
        axis: axis_name,
        index: if reach.lo > extent.hi { reach.lo } else { reach.hi },
    })?;
    let eval = |k: i64, other: i64| -> f64 {
        let read = |plus: bool| {
            let s = source_index(out.stagger, k, plus);
            match dir {
                Dir::Space => u.at(s, other),
                Dir::Time => u.at(other, s),
            }
        };
        let mut acc = 0.0;
        if let Some(c) = stencil.plus {
            acc += c * read(true);
        }
        if let Some(c) = stencil.minus {
            acc += c * read(false);
        }
        acc
    };
    Ok(match dir {
        Dir::Space => GridFunction::from_index_fn(grid, out, u.time(), eval),
        Dir::Time => GridFunction::from_index_fn(grid, u.space(), out, |j, n| eval(n, j)),
    })
}

/// Applies `op` and returns the result on its natural (clipped) support.
pub fn apply(op: Op, u: &GridFunction) -> Result<GridFunction> {
    let dx = u.grid().dx();
    let dt = u.grid().dt();
    let shift = |plus: bool| Stencil {
        plus: plus.then_some(1.0),
        minus: (!plus).then_some(1.0),
    };
    let avg = Stencil {
        plus: Some(0.5),
        minus: Some(0.5),
    };
    let diff = |h: f64| Stencil {
        plus: Some(1.0 / h),
        minus: Some(-1.0 / h),
    };
    match op {
        Op::SPlus => apply_stencil(u, Dir::Space, shift(true)),
        Op::SMinus => apply_stencil(u, Dir::Space, shift(false)),
        Op::TPlus => apply_stencil(u, Dir::Time, shift(true)),
        Op::TMinus => apply_stencil(u, Dir::Time, shift(false)),
        Op::Ax => apply_stencil(u, Dir::Space, avg),
        Op::Dx => apply_stencil(u, Dir::Space, diff(dx)),
        Op::At => apply_stencil(u, Dir::Time, avg),
        Op::Dt => apply_stencil(u, Dir::Time, diff(dt)),
        Op::DtIncr => apply_stencil(
            u,
            Dir::Time,
            Stencil {
                plus: Some(1.0),
                minus: Some(-1.0),
            },
        ),
        Op::Dx2 => apply(Op::Dx, &apply(Op::Dx, u)?),
    }
}

/// Applies `op` and restricts the result to `space x time`, failing with the
/// first target index whose stencil is not supported.
pub fn apply_on(op: Op, u: &GridFunction, space: Axis, time: Axis) -> Result<GridFunction> {
    apply(op, u)?.restrict(space, time)
}

/// Applies operators right to left: `compose(&[A, B], u) = A(B(u))`.
pub fn compose(ops: &[Op], u: &GridFunction) -> Result<GridFunction> {
    ops.iter().rev().try_fold(u.clone(), |acc, op| apply(*op, &acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Grid, SpaceTag, TimeTag};

    fn grid() -> Grid {
        Grid::new(7, 6, 1.5).unwrap()
    }

    fn closure_fn(g: Grid, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        GridFunction::from_fn(g, g.space_axis(SpaceTag::Closure), g.time_axis(TimeTag::Closure), f)
    }

    #[test]
    fn tags_flip() {
        let g = grid();
        let u = closure_fn(g, |x, t| x + t);
        let ax = apply(Op::Ax, &u).unwrap();
        assert_eq!(ax.space_tag(), Some(SpaceTag::Dual));
        let dxx = apply(Op::Dx, &ax).unwrap();
        assert_eq!(dxx.space_tag(), Some(SpaceTag::Primal));
        let sp = apply(Op::SPlus, &u).unwrap();
        assert_eq!(sp.space_tag(), Some(SpaceTag::Dual));
        let sm = apply(Op::SMinus, &u).unwrap();
        assert_eq!(sm.space_tag(), Some(SpaceTag::Dual));
        assert_eq!(apply(Op::SPlus, &sm).unwrap().space(), Axis::primal(0, 7));
        assert_eq!(apply(Op::SMinus, &sp).unwrap().space(), Axis::primal(1, 8));
        let dt = apply(Op::Dt, &u).unwrap();
        assert_eq!(dt.time(), Axis::dual(0, 6));
        assert_eq!(apply(Op::Dx2, &u).unwrap().space_tag(), Some(SpaceTag::Primal));
    }

    #[test]
    fn shifts_read_neighbours() {
        let g = grid();
        let u = closure_fn(g, |x, _| x);
        let sp = apply(Op::SPlus, &u).unwrap();
        let sm = apply(Op::SMinus, &u).unwrap();
        for k in 0..=7 {
            assert_eq!(sp.at(k, 0), g.x(k + 1));
            assert_eq!(sm.at(k, 0), g.x(k));
        }
    }

    #[test]
    fn dx_of_quadratic_is_exact() {
        let g = grid();
        let u = closure_fn(g, |x, _| x * x);
        let du = apply(Op::Dx, &u).unwrap();
        let au = apply(Op::Ax, &u).unwrap();
        let h = g.dx();
        for k in du.space().indices() {
            let x = g.x_half(k);
            assert!((du.at(k, 3) - 2.0 * x).abs() < 1e-13);
            assert!((au.at(k, 3) - (x * x + h * h / 4.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn dt_of_linear_time_is_one() {
        let g = grid();
        let u = GridFunction::time_fn(g, TimeTag::Closure, |t| t);
        let d = apply(Op::Dt, &u).unwrap();
        assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-13));
        let inc = apply(Op::DtIncr, &u).unwrap();
        for (a, b) in inc.values().iter().zip(d.values()) {
            assert!((a - g.dt() * b).abs() <= 1e-15);
        }
    }

    #[test]
    fn second_difference_of_quadratic() {
        let g = grid();
        let u = closure_fn(g, |x, _| 3.0 * x * x);
        let d2 = apply(Op::Dx2, &u).unwrap();
        assert!(d2.values().iter().all(|v| (v - 6.0).abs() < 1e-10));
    }

    #[test]
    fn ax_dx_commute() {
        let g = grid();
        let u = closure_fn(g, |x, t| (3.0 * x).sin() * (1.0 + t) + x.powi(5));
        let a = compose(&[Op::Ax, Op::Dx], &u).unwrap();
        let b = compose(&[Op::Dx, Op::Ax], &u).unwrap();
        assert_eq!(a.space(), b.space());
        for (p, q) in a.values().iter().zip(b.values()) {
            assert!((p - q).abs() <= 1e-13 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn stencil_out_of_range() {
        let g = grid();
        let single = GridFunction::from_fn(g, Axis::primal(3, 3), g.time_axis(TimeTag::Primal), |x, _| x);
        assert!(matches!(apply(Op::Dx, &single), Err(Error::StencilOutOfRange { .. })));
        let u = closure_fn(g, |x, _| x);
        let dual = apply(Op::Dx, &u).unwrap();
        // D_x of a dual function reaches only interior primal points
        match apply_on(Op::Dx, &dual, g.space_axis(SpaceTag::Closure), u.time()) {
            Err(Error::StencilOutOfRange { axis, index }) => {
                assert_eq!(axis, "space");
                assert_eq!(index, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn op_names_parse() {
        for op in Op::ALL {
            assert_eq!(op.name().parse::<Op>().unwrap(), op);
        }
        assert!("Dy".parse::<Op>().is_err());
    }
}
