//! Residual checks for the discrete product rules and summation-by-parts
//! formulas of the staggered calculus.
//!
//! Each identity is evaluated literally, left side and right side separately,
//! including every boundary term with its normal and mesh factor. Residuals are
//! normalised by `max(1, ‖lhs‖∞, ‖rhs‖∞)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::GridFunction;
use crate::integral::{
    integrate_space, integrate_time, normal_t_field, normal_x_field, trace_field, SpaceSet, TimeSet,
};
use crate::mesh::{Axis, Grid, SpaceTag, TimeTag};
use crate::ops::{apply, Op};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum IdentityId {
    /// `A_x(uv) = A_x u A_x v + dx²/4 D_x u D_x v`
    AverageProduct,
    /// `D_x(uv) = D_x u A_x v + A_x u D_x v`
    DifferenceProduct,
    /// `u = A_x² u - dx²/4 D_x² u`
    Reconstruction,
    /// summation by parts for `A_x`
    AverageByParts,
    /// summation by parts for `D_x`
    DifferenceByParts,
    /// `D_t(fg) = D_t f t-(g) + t+(f) D_t g`
    TimeProductForward,
    /// `D_t(fg) = D_t f t+(g) + t-(f) D_t g`
    TimeProductBackward,
    /// `2 t+(f) D_t f = D_t(f²) + dt (D_t f)²`
    TimeSquareForward,
    /// `2 t-(f) D_t f = D_t(f²) - dt (D_t f)²`
    TimeSquareBackward,
    /// `∫_N f t-(g) = ∫_{N*} t+(f) g`
    TimeShiftBackward,
    /// `∫_N f t+(g) = ∫_{N*} t-(f) g + dt ∫_{∂N} f t+(g) n_t`
    TimeShiftForward,
    /// `∫_N f D_t g = -∫_{N*} g D_t f + ∫_{∂N} f t+(g) n_t`
    TimeByParts,
    /// `∫_N t-(f) D_t g = -∫_N D_t f t+(g) + ∫_{∂N} t+(fg) n_t`
    TimeByPartsDual,
    /// half-weighted dual-time summation by parts
    TimeByPartsHalfWeighted,
}

impl IdentityId {
    pub const ALL: [IdentityId; 14] = [
        IdentityId::AverageProduct,
        IdentityId::DifferenceProduct,
        IdentityId::Reconstruction,
        IdentityId::AverageByParts,
        IdentityId::DifferenceByParts,
        IdentityId::TimeProductForward,
        IdentityId::TimeProductBackward,
        IdentityId::TimeSquareForward,
        IdentityId::TimeSquareBackward,
        IdentityId::TimeShiftBackward,
        IdentityId::TimeShiftForward,
        IdentityId::TimeByParts,
        IdentityId::TimeByPartsDual,
        IdentityId::TimeByPartsHalfWeighted,
    ];

    /// Stable label used in CSV output.
    pub fn label(&self) -> &'static str {
        use IdentityId::*;
        match self {
            AverageProduct => "average_product",
            DifferenceProduct => "difference_product",
            Reconstruction => "reconstruction",
            AverageByParts => "average_by_parts",
            DifferenceByParts => "difference_by_parts",
            TimeProductForward => "time_product_forward",
            TimeProductBackward => "time_product_backward",
            TimeSquareForward => "time_square_forward",
            TimeSquareBackward => "time_square_backward",
            TimeShiftBackward => "time_shift_backward",
            TimeShiftForward => "time_shift_forward",
            TimeByParts => "time_by_parts",
            TimeByPartsDual => "time_by_parts_dual",
            TimeByPartsHalfWeighted => "time_by_parts_half_weighted",
        }
    }

    /// Both sides of the identity for `u`, `v` on the space-time closure.
    ///
    /// Pointwise identities return the two sides as grid functions; integral
    /// identities return one value per untouched slice (a space integral per
    /// time index or a time integral per space index).
    pub fn sides(&self, u: &GridFunction, v: &GridFunction) -> Result<(GridFunction, GridFunction)> {
        use IdentityId::*;
        let grid = *u.grid();
        let dx = grid.dx();
        let dt = grid.dt();
        match self {
            AverageProduct => {
                require_space_closure(u, v)?;
                let lhs = apply(Op::Ax, &u.mul(v)?)?;
                let first = apply(Op::Ax, u)?.mul(&apply(Op::Ax, v)?)?;
                let second = apply(Op::Dx, u)?.mul(&apply(Op::Dx, v)?)?.scale(0.25 * dx * dx);
                Ok((lhs, first.add(&second)?))
            }
            DifferenceProduct => {
                require_space_closure(u, v)?;
                let lhs = apply(Op::Dx, &u.mul(v)?)?;
                let a = apply(Op::Dx, u)?.mul(&apply(Op::Ax, v)?)?;
                let b = apply(Op::Ax, u)?.mul(&apply(Op::Dx, v)?)?;
                Ok((lhs, a.add(&b)?))
            }
            Reconstruction => {
                require_space_closure(u, v)?;
                let a2 = apply(Op::Ax, &apply(Op::Ax, u)?)?;
                let d2 = apply(Op::Dx2, u)?.scale(0.25 * dx * dx);
                let rhs = a2.sub(&d2)?;
                let lhs = u.restrict(rhs.space(), rhs.time())?;
                Ok((lhs, rhs))
            }
            AverageByParts => {
                require_space_closure(u, v)?;
                average_by_parts(u, &apply(Op::SMinus, v)?)
            }
            DifferenceByParts => {
                require_space_closure(u, v)?;
                difference_by_parts(u, &apply(Op::SMinus, v)?)
            }
            TimeProductForward => {
                require_time_closure(u, v)?;
                let lhs = apply(Op::Dt, &u.mul(v)?)?;
                let a = apply(Op::Dt, u)?.mul(&apply(Op::TMinus, v)?)?;
                let b = apply(Op::TPlus, u)?.mul(&apply(Op::Dt, v)?)?;
                Ok((lhs, a.add(&b)?))
            }
            TimeProductBackward => {
                require_time_closure(u, v)?;
                let lhs = apply(Op::Dt, &u.mul(v)?)?;
                let a = apply(Op::Dt, u)?.mul(&apply(Op::TPlus, v)?)?;
                let b = apply(Op::TMinus, u)?.mul(&apply(Op::Dt, v)?)?;
                Ok((lhs, a.add(&b)?))
            }
            TimeSquareForward | TimeSquareBackward => {
                require_time_closure(u, v)?;
                let d = apply(Op::Dt, u)?;
                let (shift, sign) = if *self == TimeSquareForward {
                    (Op::TPlus, 1.0)
                } else {
                    (Op::TMinus, -1.0)
                };
                let lhs = apply(shift, u)?.mul(&d)?.scale(2.0);
                let sq = apply(Op::Dt, &u.map(|a| a * a))?;
                let rhs = sq.zip_with(&d, |a, b| a + sign * dt * b * b)?;
                Ok((lhs, rhs))
            }
            TimeShiftBackward => {
                let (f, g) = primal_and_dual(u, v)?;
                let lhs = integrate_time(&f.mul(&apply(Op::TMinus, &g)?)?, TimeSet::Interior)?;
                let rhs = integrate_time(&apply(Op::TPlus, &f)?.mul(&g)?, TimeSet::Dual)?;
                Ok((lhs, rhs))
            }
            TimeShiftForward => {
                let (f, g) = primal_and_dual(u, v)?;
                let tg = apply(Op::TPlus, &g)?;
                let lhs = integrate_time(&f.mul(&tg)?, TimeSet::Interior)?;
                let inner = integrate_time(&apply(Op::TMinus, &f)?.mul(&g)?, TimeSet::Dual)?;
                let nt = normal_t_field(&grid, f.space());
                let bnd = integrate_time(&f.mul(&tg)?.mul(&nt)?, TimeSet::Boundary)?;
                Ok((lhs, inner.zip_with(&bnd, |a, b| a + dt * b)?))
            }
            TimeByParts => {
                let (f, g) = primal_and_dual(u, v)?;
                let lhs = integrate_time(&f.mul(&apply(Op::Dt, &g)?)?, TimeSet::Interior)?;
                let inner = integrate_time(&g.mul(&apply(Op::Dt, &f)?)?, TimeSet::Dual)?;
                let nt = normal_t_field(&grid, f.space());
                let bnd = integrate_time(&f.mul(&apply(Op::TPlus, &g)?)?.mul(&nt)?, TimeSet::Boundary)?;
                Ok((lhs, bnd.sub(&inner)?))
            }
            TimeByPartsDual => {
                require_time_closure(u, v)?;
                let f = apply(Op::TMinus, u)?;
                let g = apply(Op::TMinus, v)?;
                let lhs = integrate_time(&apply(Op::TMinus, &f)?.mul(&apply(Op::Dt, &g)?)?, TimeSet::Interior)?;
                let inner = integrate_time(&apply(Op::Dt, &f)?.mul(&apply(Op::TPlus, &g)?)?, TimeSet::Interior)?;
                let nt = normal_t_field(&grid, f.space());
                let bnd = integrate_time(&apply(Op::TPlus, &f.mul(&g)?)?.mul(&nt)?, TimeSet::Boundary)?;
                Ok((lhs, bnd.sub(&inner)?))
            }
            TimeByPartsHalfWeighted => {
                let (f, g) = primal_pair(u, v)?;
                let lhs = half_weighted_dual(&apply(Op::TPlus, &f)?.mul(&apply(Op::Dt, &g)?)?)?;
                let inner = half_weighted_dual(&apply(Op::TMinus, &g)?.mul(&apply(Op::Dt, &f)?)?)?;
                let bnd = half_weighted_boundary(&f.mul(&g)?)?;
                Ok((lhs, bnd.sub(&inner)?))
            }
        }
    }

    /// Normalised max-abs difference of the two sides.
    pub fn residual(&self, u: &GridFunction, v: &GridFunction) -> Result<f64> {
        let (lhs, rhs) = self.sides(u, v)?;
        normalized_residual(&lhs, &rhs)
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for IdentityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<IdentityId> {
        IdentityId::ALL
            .into_iter()
            .find(|id| id.label() == s)
            .ok_or_else(|| Error::invalid("identity", format!("unknown identity `{s}`")))
    }
}

/// `∫_W u A_x w` against `∫_{W*} A_x u w - dx/2 ∫_{∂W} u tr(w)`, per time slice.
///
/// `u` lives on the primal closure and `w` on the dual mesh.
pub fn average_by_parts(u: &GridFunction, w: &GridFunction) -> Result<(GridFunction, GridFunction)> {
    let dx = u.grid().dx();
    let lhs = integrate_space(&u.mul(&apply(Op::Ax, w)?)?, SpaceSet::Interior)?;
    let inner = integrate_space(&apply(Op::Ax, u)?.mul(w)?, SpaceSet::Dual)?;
    let bnd = integrate_space(&u.mul(&trace_field(w)?)?, SpaceSet::Boundary)?;
    Ok((lhs, inner.zip_with(&bnd, |a, b| a - 0.5 * dx * b)?))
}

/// `∫_W u D_x w` against `-∫_{W*} D_x u w + ∫_{∂W} u tr(w) n_x`, per time slice.
pub fn difference_by_parts(u: &GridFunction, w: &GridFunction) -> Result<(GridFunction, GridFunction)> {
    let grid = *u.grid();
    let lhs = integrate_space(&u.mul(&apply(Op::Dx, w)?)?, SpaceSet::Interior)?;
    let inner = integrate_space(&apply(Op::Dx, u)?.mul(w)?, SpaceSet::Dual)?;
    let nx = normal_x_field(&grid, w.time());
    let bnd = integrate_space(&u.mul(&trace_field(w)?)?.mul(&nx)?, SpaceSet::Boundary)?;
    Ok((lhs, bnd.sub(&inner)?))
}

/// Half-weighted integral over the dual time mesh.
///
/// Trapezoidal end weighting: the first and last dual points carry `dt/2`,
/// all others `dt`. Result is space-only.
pub fn half_weighted_dual(h: &GridFunction) -> Result<GridFunction> {
    let grid = *h.grid();
    let n = grid.n() as i64;
    let dual = grid.time_axis(TimeTag::Dual);
    if !h.time().covers(&dual) {
        return Err(Error::MeshMismatch(
            "half-weighted integral needs the dual time mesh".into(),
        ));
    }
    let dt = grid.dt();
    let vals = h
        .space()
        .indices()
        .map(|j| {
            (0..n)
                .map(|k| {
                    let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                    w * h.at(j, k)
                })
                .sum::<f64>()
                * dt
        })
        .collect();
    GridFunction::new(grid, h.space(), Axis::primal(0, 0), vals)
}

/// Half-weighted boundary sum matching [`half_weighted_dual`]: each end of
/// `{0, T}` averages the boundary value with its interior neighbour, times `n_t`.
pub fn half_weighted_boundary(h: &GridFunction) -> Result<GridFunction> {
    let grid = *h.grid();
    let n = grid.n() as i64;
    if !h.time().covers(&Axis::primal(0, n)) {
        return Err(Error::MeshMismatch(
            "half-weighted boundary sum needs t^0 .. t^N".into(),
        ));
    }
    let vals = h
        .space()
        .indices()
        .map(|j| 0.5 * (h.at(j, n) + h.at(j, n - 1)) - 0.5 * (h.at(j, 0) + h.at(j, 1)))
        .collect();
    GridFunction::new(grid, h.space(), Axis::primal(0, 0), vals)
}

pub fn normalized_residual(lhs: &GridFunction, rhs: &GridFunction) -> Result<f64> {
    let diff = lhs.sub(rhs)?;
    if diff.values().len() != lhs.values().len() || diff.values().len() != rhs.values().len() {
        return Err(Error::MeshMismatch("identity sides live on different supports".into()));
    }
    let scale = 1.0f64.max(lhs.max_abs()).max(rhs.max_abs());
    Ok(diff.max_abs() / scale)
}

fn require_space_closure(u: &GridFunction, v: &GridFunction) -> Result<()> {
    let closure = u.grid().space_axis(SpaceTag::Closure);
    for f in [u, v] {
        if !f.space().covers(&closure) {
            return Err(Error::MeshMismatch(
                "space identities need the primal space closure".into(),
            ));
        }
    }
    if u.time() != v.time() {
        return Err(Error::MeshMismatch("u and v must share a time axis".into()));
    }
    Ok(())
}

fn require_time_closure(u: &GridFunction, v: &GridFunction) -> Result<()> {
    let closure = u.grid().time_axis(TimeTag::Closure);
    for f in [u, v] {
        if !f.time().covers(&closure) {
            return Err(Error::MeshMismatch("time identities need t^0 .. t^{N+1}".into()));
        }
    }
    if u.space() != v.space() {
        return Err(Error::MeshMismatch("u and v must share a space axis".into()));
    }
    Ok(())
}

/// `f` on `t^0 .. t^N`, `g = t-(v)` on `t^{1/2} .. t^{N+1/2}`.
fn primal_and_dual(u: &GridFunction, v: &GridFunction) -> Result<(GridFunction, GridFunction)> {
    require_time_closure(u, v)?;
    let n = u.grid().n() as i64;
    let f = u.restrict(u.space(), Axis::primal(0, n))?;
    let g = apply(Op::TMinus, v)?;
    Ok((f, g))
}

fn primal_pair(u: &GridFunction, v: &GridFunction) -> Result<(GridFunction, GridFunction)> {
    require_time_closure(u, v)?;
    let n = u.grid().n() as i64;
    let t = Axis::primal(0, n);
    Ok((u.restrict(u.space(), t)?, v.restrict(v.space(), t)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ResidualStatus {
    Checked(f64),
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityResidual {
    pub id: IdentityId,
    pub status: ResidualStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualTable {
    pub entries: Vec<IdentityResidual>,
}

impl ResidualTable {
    pub fn get(&self, id: IdentityId) -> Option<&ResidualStatus> {
        self.entries.iter().find(|e| e.id == id).map(|e| &e.status)
    }

    /// Largest checked residual; skipped identities are ignored.
    pub fn max_residual(&self) -> f64 {
        self.entries
            .iter()
            .filter_map(|e| match e.status {
                ResidualStatus::Checked(r) => Some(r),
                ResidualStatus::Skipped(_) => None,
            })
            .fold(0.0, f64::max)
    }

    pub fn skipped(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e.status, ResidualStatus::Skipped(_)))
            .count()
    }
}

/// Evaluates every identity on `(u, v)`.
///
/// Identities whose support requirements `u` and `v` cannot meet are
/// reported as skipped.
pub fn identity_residuals(u: &GridFunction, v: &GridFunction, grid: &Grid) -> Result<ResidualTable> {
    if grid.m() < 2 {
        return Err(Error::invalid("M", "identity stencils need M >= 2"));
    }
    if grid.n() < 2 {
        return Err(Error::invalid("N", "identity stencils need N >= 2"));
    }
    if u.grid() != grid || v.grid() != grid {
        return Err(Error::MeshMismatch("u and v must live on the given grid".into()));
    }
    let entries = IdentityId::ALL
        .into_iter()
        .map(|id| {
            let status = match id.residual(u, v) {
                Ok(r) => ResidualStatus::Checked(r),
                Err(e @ (Error::MeshMismatch(_) | Error::StencilOutOfRange { .. })) => {
                    ResidualStatus::Skipped(e.to_string())
                }
                Err(e) => return Err(e),
            };
            Ok(IdentityResidual { id, status })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualTable { entries })
}

/// Uniform `[-1, 1]` values on the space-time closure, reproducible from `seed`.
pub fn random_closure_function(grid: &Grid, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = grid.space_axis(SpaceTag::Closure);
    let time = grid.time_axis(TimeTag::Closure);
    let values = (0..space.len() * time.len())
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    GridFunction::new(*grid, space, time, values).expect("layout matches axes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closure(g: Grid, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        GridFunction::from_fn(g, g.space_axis(SpaceTag::Closure), g.time_axis(TimeTag::Closure), f)
    }

    #[test]
    fn random_pair_all_identities() {
        let g = Grid::new(8, 8, 1.0).unwrap();
        let u = random_closure_function(&g, 1);
        let v = random_closure_function(&g, 2);
        let table = identity_residuals(&u, &v, &g).unwrap();
        assert_eq!(table.entries.len(), 14);
        assert_eq!(table.skipped(), 0);
        for e in &table.entries {
            match e.status {
                ResidualStatus::Checked(r) => assert!(r <= 1e-12, "{} residual {r}", e.id),
                ResidualStatus::Skipped(ref why) => panic!("{} skipped: {why}", e.id),
            }
        }
    }

    #[test]
    fn constants_reconstruct_exactly() {
        let g = Grid::new(6, 5, 1.0).unwrap();
        let one = closure(g, |_, _| 1.0);
        assert_eq!(IdentityId::Reconstruction.residual(&one, &one).unwrap(), 0.0);
    }

    #[test]
    fn space_only_inputs_skip_time_identities() {
        let g = Grid::new(4, 4, 1.0).unwrap();
        let u = random_closure_function(&g, 3).slice(0).unwrap();
        let v = random_closure_function(&g, 4).slice(0).unwrap();
        let table = identity_residuals(&u, &v, &g).unwrap();
        for e in &table.entries {
            let is_space = matches!(
                e.id,
                IdentityId::AverageProduct
                    | IdentityId::DifferenceProduct
                    | IdentityId::Reconstruction
                    | IdentityId::AverageByParts
                    | IdentityId::DifferenceByParts
            );
            match (&e.status, is_space) {
                (ResidualStatus::Checked(r), true) => assert!(*r <= 1e-12),
                (ResidualStatus::Skipped(_), false) => {}
                other => panic!("{}: {other:?}", e.id),
            }
        }
    }

    #[test]
    fn too_small_grid() {
        let g = Grid::new(1, 4, 1.0).unwrap();
        let u = random_closure_function(&g, 0);
        assert!(matches!(
            identity_residuals(&u, &u, &g),
            Err(Error::InvalidArgument { .. })
        ));
        let g = Grid::new(4, 1, 1.0).unwrap();
        let u = random_closure_function(&g, 0);
        assert!(matches!(
            identity_residuals(&u, &u, &g),
            Err(Error::InvalidArgument { .. })
        ));
    }

    #[test]
    fn sbp_with_quadratic() {
        // M = 4, dx = 1/5: lhs = 2 dx Σ x_j² = 0.48,
        // rhs = -dx Σ x_{k+1/2}² + 1 * x_{9/2}² = -0.33 + 0.81 = 0.48
        let g = Grid::new(4, 2, 1.0).unwrap();
        let u = GridFunction::space_fn(g, SpaceTag::Closure, |x| x);
        let w = GridFunction::space_fn(g, SpaceTag::Dual, |x| x * x);
        let (lhs, rhs) = difference_by_parts(&u, &w).unwrap();
        assert!((lhs.values()[0] - 0.48).abs() <= 1e-14);
        assert!((rhs.values()[0] - 0.48).abs() <= 1e-14);
        assert!(normalized_residual(&lhs, &rhs).unwrap() <= 1e-14);
    }

    #[test]
    fn half_weighted_telescopes() {
        // the half-weighted integral of D_t h collapses onto the boundary sum
        let g = Grid::new(5, 7, 1.0).unwrap();
        let u = random_closure_function(&g, 10);
        let h = u.restrict(u.space(), Axis::primal(0, g.n() as i64)).unwrap();
        let lhs = half_weighted_dual(&apply(Op::Dt, &h).unwrap()).unwrap();
        let rhs = half_weighted_boundary(&h).unwrap();
        assert!(normalized_residual(&lhs, &rhs).unwrap() < 1e-13);
    }

    #[test]
    fn labels_parse() {
        for id in IdentityId::ALL {
            assert_eq!(id.label().parse::<IdentityId>().unwrap(), id);
        }
    }
}
