//! Uniform primal and dual meshes on `(0, 1) x (0, T)`.
//!
//! Points are addressed by lattice index. A primal index `j` sits at `j*dx`;
//! a dual index `k` sits at `(k + 1/2)*dx`. The same convention holds in time.

use serde::Serialize;

use crate::error::{Error, Result};

/// Space-time discretization with `M` interior space points and `N` time steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    m: usize,
    n: usize,
    t_final: f64,
    dx: f64,
    dt: f64,
}

impl Grid {
    /// Builds the grid with `dx = 1/(M+1)` and `dt = T/N`.
    pub fn new(m: usize, n: usize, t_final: f64) -> Result<Grid> {
        if m == 0 {
            return Err(Error::invalid("M", "must be a positive integer"));
        }
        if n == 0 {
            return Err(Error::invalid("N", "must be a positive integer"));
        }
        if t_final <= 0.0 || !t_final.is_finite() {
            return Err(Error::invalid(
                "T",
                format!("must be positive and finite, got {t_final}"),
            ));
        }
        Ok(Grid {
            m,
            n,
            t_final,
            dx: 1.0 / (m + 1) as f64,
            dt: t_final / n as f64,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Primal space coordinate `x_j`.
    pub fn x(&self, j: i64) -> f64 {
        j as f64 * self.dx
    }

    /// Dual space coordinate `x_{k+1/2}`.
    pub fn x_half(&self, k: i64) -> f64 {
        (k as f64 + 0.5) * self.dx
    }

    /// Primal time coordinate `t^n`.
    pub fn t(&self, n: i64) -> f64 {
        n as f64 * self.dt
    }

    /// Dual time coordinate `t^{n+1/2}`.
    pub fn t_half(&self, n: i64) -> f64 {
        (n as f64 + 0.5) * self.dt
    }

    pub fn space_coord(&self, stagger: Stagger, k: i64) -> f64 {
        match stagger {
            Stagger::Primal => self.x(k),
            Stagger::Dual => self.x_half(k),
        }
    }

    pub fn time_coord(&self, stagger: Stagger, k: i64) -> f64 {
        match stagger {
            Stagger::Primal => self.t(k),
            Stagger::Dual => self.t_half(k),
        }
    }

    pub fn space_axis(&self, tag: SpaceTag) -> Axis {
        let m = self.m as i64;
        match tag {
            SpaceTag::Primal => Axis::primal(1, m),
            SpaceTag::Dual => Axis::dual(0, m),
            SpaceTag::Closure => Axis::primal(0, m + 1),
        }
    }

    pub fn time_axis(&self, tag: TimeTag) -> Axis {
        let n = self.n as i64;
        match tag {
            TimeTag::Primal => Axis::primal(1, n),
            TimeTag::Dual => Axis::dual(0, n - 1),
            TimeTag::Closure => Axis::primal(0, n + 1),
            TimeTag::Slice(k) => Axis::primal(k, k),
        }
    }

    pub fn space_primal(&self) -> Vec<f64> {
        self.coords_space(self.space_axis(SpaceTag::Primal))
    }

    pub fn space_dual(&self) -> Vec<f64> {
        self.coords_space(self.space_axis(SpaceTag::Dual))
    }

    pub fn space_closure(&self) -> Vec<f64> {
        self.coords_space(self.space_axis(SpaceTag::Closure))
    }

    pub fn time_primal(&self) -> Vec<f64> {
        self.coords_time(self.time_axis(TimeTag::Primal))
    }

    pub fn time_dual(&self) -> Vec<f64> {
        self.coords_time(self.time_axis(TimeTag::Dual))
    }

    /// `t^0 .. t^{N+1}`; the last point lies one step past `T`.
    pub fn time_closure(&self) -> Vec<f64> {
        self.coords_time(self.time_axis(TimeTag::Closure))
    }

    /// Boundary points `{0, 1}` with their outward normals.
    pub fn space_boundary(&self) -> [(f64, i8); 2] {
        [(0.0, -1), (self.x(self.m as i64 + 1), 1)]
    }

    /// Boundary instants `{0, T}` with their outward normals.
    pub fn time_boundary(&self) -> [(f64, i8); 2] {
        [(0.0, -1), (self.t(self.n as i64), 1)]
    }

    /// Outward normal `n_x` at primal index `j`; zero away from the boundary.
    pub fn normal_x(&self, j: i64) -> i8 {
        if j == 0 {
            -1
        } else if j == self.m as i64 + 1 {
            1
        } else {
            0
        }
    }

    /// Outward normal `n_t` at primal time index `n`; zero away from `{0, T}`.
    pub fn normal_t(&self, n: i64) -> i8 {
        if n == 0 {
            -1
        } else if n == self.n as i64 {
            1
        } else {
            0
        }
    }

    /// Largest index range an operator output may occupy along space.
    pub(crate) fn space_extent(&self, stagger: Stagger) -> Axis {
        let m = self.m as i64;
        match stagger {
            Stagger::Primal => Axis::primal(0, m + 1),
            Stagger::Dual => Axis::dual(0, m),
        }
    }

    pub(crate) fn time_extent(&self, stagger: Stagger) -> Axis {
        let n = self.n as i64;
        match stagger {
            Stagger::Primal => Axis::primal(0, n + 1),
            Stagger::Dual => Axis::dual(0, n),
        }
    }

    fn coords_space(&self, axis: Axis) -> Vec<f64> {
        axis.indices().map(|k| self.space_coord(axis.stagger, k)).collect()
    }

    fn coords_time(&self, axis: Axis) -> Vec<f64> {
        axis.indices().map(|k| self.time_coord(axis.stagger, k)).collect()
    }
}

/// Which lattice an axis lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Stagger {
    Primal,
    Dual,
}

impl Stagger {
    pub fn flip(self) -> Stagger {
        match self {
            Stagger::Primal => Stagger::Dual,
            Stagger::Dual => Stagger::Primal,
        }
    }
}

/// Contiguous inclusive index range on one lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Axis {
    pub stagger: Stagger,
    pub lo: i64,
    pub hi: i64,
}

impl Axis {
    pub fn primal(lo: i64, hi: i64) -> Axis {
        Axis {
            stagger: Stagger::Primal,
            lo,
            hi,
        }
    }

    pub fn dual(lo: i64, hi: i64) -> Axis {
        Axis {
            stagger: Stagger::Dual,
            lo,
            hi,
        }
    }

    pub fn len(&self) -> usize {
        if self.hi < self.lo {
            0
        } else {
            (self.hi - self.lo + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn contains(&self, k: i64) -> bool {
        self.lo <= k && k <= self.hi
    }

    /// True when every index of `other` lies in `self` on the same lattice.
    pub fn covers(&self, other: &Axis) -> bool {
        self.stagger == other.stagger && (other.is_empty() || (self.lo <= other.lo && other.hi <= self.hi))
    }

    pub fn intersect(&self, other: &Axis) -> Option<Axis> {
        if self.stagger != other.stagger {
            return None;
        }
        let axis = Axis {
            stagger: self.stagger,
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        };
        (!axis.is_empty()).then_some(axis)
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<i64> {
        self.lo..=self.hi
    }

    pub(crate) fn offset(&self, k: i64) -> usize {
        (k - self.lo) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpaceTag {
    /// `M`: interior points `x_1 .. x_M`.
    Primal,
    /// `M*`: `x_{1/2} .. x_{M+1/2}`.
    Dual,
    /// `M̄`: `x_0 .. x_{M+1}`.
    Closure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TimeTag {
    /// `N`: `t^1 .. t^N`.
    Primal,
    /// `N*`: `t^{1/2} .. t^{N-1/2}`.
    Dual,
    /// `t^0 .. t^{N+1}`.
    Closure,
    /// A single primal instant.
    Slice(i64),
}

impl SpaceTag {
    pub fn classify(grid: &Grid, axis: &Axis) -> Option<SpaceTag> {
        [SpaceTag::Primal, SpaceTag::Dual, SpaceTag::Closure]
            .into_iter()
            .find(|tag| grid.space_axis(*tag) == *axis)
    }
}

impl TimeTag {
    pub fn classify(grid: &Grid, axis: &Axis) -> Option<TimeTag> {
        if let Some(tag) = [TimeTag::Primal, TimeTag::Dual, TimeTag::Closure]
            .into_iter()
            .find(|tag| grid.time_axis(*tag) == *axis)
        {
            return Some(tag);
        }
        (axis.stagger == Stagger::Primal && axis.lo == axis.hi).then_some(TimeTag::Slice(axis.lo))
    }
}
