use crate::error::{Error, Result};
use crate::mesh::{Axis, Grid, SpaceTag, Stagger, TimeTag};

/// Real values on a product of one space axis and one time axis.
///
/// Storage is space-major: `values[(j - lo_x) * nt + (n - lo_t)]`.
/// Space-only data uses a single time slice, time-only data a single space point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    space: Axis,
    time: Axis,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, space: Axis, time: Axis, values: Vec<f64>) -> Result<Self> {
        if space.is_empty() || time.is_empty() {
            return Err(Error::MeshMismatch("empty axis".into()));
        }
        if values.len() != space.len() * time.len() {
            return Err(Error::MeshMismatch(format!(
                "{} values for a {}x{} layout",
                values.len(),
                space.len(),
                time.len()
            )));
        }
        Ok(GridFunction {
            grid,
            space,
            time,
            values,
        })
    }

    /// Samples `f(x, t)` at the physical coordinates of every point.
    pub fn from_fn(grid: Grid, space: Axis, time: Axis, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(space.len() * time.len());
        for j in space.indices() {
            let x = grid.space_coord(space.stagger, j);
            for n in time.indices() {
                values.push(f(x, grid.time_coord(time.stagger, n)));
            }
        }
        GridFunction {
            grid,
            space,
            time,
            values,
        }
    }

    /// Like [`from_fn`](Self::from_fn) but receives lattice indices.
    pub fn from_index_fn(grid: Grid, space: Axis, time: Axis, f: impl Fn(i64, i64) -> f64) -> Self {
        let mut values = Vec::with_capacity(space.len() * time.len());
        for j in space.indices() {
            for n in time.indices() {
                values.push(f(j, n));
            }
        }
        GridFunction {
            grid,
            space,
            time,
            values,
        }
    }

    pub fn constant(grid: Grid, space: Axis, time: Axis, c: f64) -> Self {
        GridFunction {
            grid,
            space,
            time,
            values: vec![c; space.len() * time.len()],
        }
    }

    pub fn zeros(grid: Grid, space: Axis, time: Axis) -> Self {
        Self::constant(grid, space, time, 0.0)
    }

    /// Space-only function stored at the `t = 0` slice.
    pub fn space_fn(grid: Grid, tag: SpaceTag, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, grid.space_axis(tag), grid.time_axis(TimeTag::Slice(0)), |x, _| {
            f(x)
        })
    }

    /// Time-only function stored at the `x = 0` boundary point.
    pub fn time_fn(grid: Grid, tag: TimeTag, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, Axis::primal(0, 0), grid.time_axis(tag), |_, t| f(t))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn space(&self) -> Axis {
        self.space
    }

    pub fn time(&self) -> Axis {
        self.time
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn space_tag(&self) -> Option<SpaceTag> {
        SpaceTag::classify(&self.grid, &self.space)
    }

    pub fn time_tag(&self) -> Option<TimeTag> {
        TimeTag::classify(&self.grid, &self.time)
    }

    fn index(&self, j: i64, n: i64) -> usize {
        self.space.offset(j) * self.time.len() + self.time.offset(n)
    }

    /// Value at lattice index `(j, n)`, if stored.
    pub fn get(&self, j: i64, n: i64) -> Option<f64> {
        (self.space.contains(j) && self.time.contains(n)).then(|| self.values[self.index(j, n)])
    }

    /// Value at `(j, n)`; panics outside the stored range.
    pub fn at(&self, j: i64, n: i64) -> f64 {
        assert!(
            self.space.contains(j) && self.time.contains(n),
            "({j}, {n}) outside {:?} x {:?}",
            self.space,
            self.time
        );
        self.values[self.index(j, n)]
    }

    pub fn set(&mut self, j: i64, n: i64, v: f64) {
        let i = self.index(j, n);
        self.values[i] = v;
    }

    /// Copy restricted to the given axes, which must be covered.
    pub fn restrict(&self, space: Axis, time: Axis) -> Result<Self> {
        check_cover("space", &self.space, &space)?;
        check_cover("time", &self.time, &time)?;
        Ok(Self::from_index_fn(self.grid, space, time, |j, n| self.at(j, n)))
    }

    /// Single time slice as a space-only function.
    pub fn slice(&self, n: i64) -> Result<Self> {
        self.restrict(self.space, Axis::primal(n, n).with_stagger(self.time.stagger))
    }

    /// Single space point as a time-only function.
    pub fn column(&self, j: i64) -> Result<Self> {
        self.restrict(Axis::primal(j, j).with_stagger(self.space.stagger), self.time)
    }

    /// Same values re-labelled onto another time axis of equal length.
    pub fn relabel_time(self, time: Axis) -> Result<Self> {
        if time.len() != self.time.len() {
            return Err(Error::MeshMismatch(format!(
                "cannot relabel {:?} as {:?}",
                self.time, time
            )));
        }
        Ok(GridFunction { time, ..self })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            grid: self.grid,
            space: self.space,
            time: self.time,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Pointwise combination on the common support of two functions.
    ///
    /// Both functions must live on the same lattices; values are only
    /// produced where both are defined.
    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::MeshMismatch("functions live on different grids".into()));
        }
        let space = self.space.intersect(&other.space).ok_or_else(|| {
            Error::MeshMismatch(format!(
                "space axes {:?} and {:?} do not overlap",
                self.space, other.space
            ))
        })?;
        let time = self.time.intersect(&other.time).ok_or_else(|| {
            Error::MeshMismatch(format!("time axes {:?} and {:?} do not overlap", self.time, other.time))
        })?;
        Ok(Self::from_index_fn(self.grid, space, time, |j, n| {
            f(self.at(j, n), other.at(j, n))
        }))
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Axis {
    fn with_stagger(mut self, stagger: Stagger) -> Axis {
        self.stagger = stagger;
        self
    }
}

fn check_cover(name: &'static str, have: &Axis, want: &Axis) -> Result<()> {
    if have.stagger != want.stagger {
        return Err(Error::MeshMismatch(format!(
            "{name} axis is {:?}, requested {:?}",
            have.stagger, want.stagger
        )));
    }
    if !have.contains(want.lo) {
        return Err(Error::StencilOutOfRange {
            axis: name,
            index: want.lo,
        });
    }
    if !have.contains(want.hi) {
        return Err(Error::StencilOutOfRange {
            axis: name,
            index: want.hi,
        });
    }
    Ok(())
}
