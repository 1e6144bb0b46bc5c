//! Rectangular grids over a model's state space.
//!
//! A [`GridSpec`] is pure geometry: a list of axes, each either a continuous
//! interval split into equal half-open cells or a discrete axis with one
//! cell per value. Points are given in axis order. A [`StateMap`] ties the
//! axes to a model's state vector and fills in variables the grid omits.

use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::model::{ModelDescriptor, State};

/// Coordinates in grid-axis order. Discrete axes carry integral values.
pub type Point = SmallVec<[f64; 4]>;

/// Default upper-edge shrink, relative to the cell width.
pub const DEFAULT_RELATIVE_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("malformed grid spec at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("axis `{0}` is not a variable of the model")]
    UnknownAxis(String),
    #[error("axis `{0}` listed twice")]
    DuplicateAxis(String),
    #[error("axis `{name}`: {message}")]
    InvalidAxis { name: String, message: String },
    #[error("total cell count overflows 64 bits")]
    Overflow,
    #[error("point has non-finite coordinate on axis {0}")]
    NonFinite(usize),
    #[error("point has {found} coordinates, grid has {expected} axes")]
    Dimension { expected: usize, found: usize },
    #[error("cell id {id} exceeds the out-of-bounds id {out}")]
    IdOutOfRange { id: u64, out: u64 },
    #[error("invalid sample plan: {0}")]
    Plan(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AxisKind {
    Continuous { lower: f64, upper: f64, count: u32 },
    Discrete { cardinality: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    #[serde(flatten)]
    pub kind: AxisKind,
}

impl Axis {
    pub fn continuous(name: &str, lower: f64, upper: f64, count: u32) -> Self {
        Self {
            name: name.to_string(),
            kind: AxisKind::Continuous {
                lower,
                upper,
                count,
            },
        }
    }

    pub fn discrete(name: &str, cardinality: u32) -> Self {
        Self {
            name: name.to_string(),
            kind: AxisKind::Discrete { cardinality },
        }
    }

    pub fn count(&self) -> u32 {
        match self.kind {
            AxisKind::Continuous { count, .. } => count,
            AxisKind::Discrete { cardinality } => cardinality,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, AxisKind::Discrete { .. })
    }

    /// Cell width; 1 for discrete axes.
    pub fn width(&self) -> f64 {
        match self.kind {
            AxisKind::Continuous {
                lower,
                upper,
                count,
            } => (upper - lower) / count as f64,
            AxisKind::Discrete { .. } => 1.0,
        }
    }

    /// Domain as `[lower, upper)`; discrete axes span `[0, cardinality)`.
    pub fn bounds(&self) -> (f64, f64) {
        match self.kind {
            AxisKind::Continuous { lower, upper, .. } => (lower, upper),
            AxisKind::Discrete { cardinality } => (0.0, cardinality as f64),
        }
    }

    /// Lower edge of cell `p`; `edge(count)` is exactly the upper bound.
    /// Negative and past-the-end indices address the band outside the grid.
    pub fn edge(&self, p: i64) -> f64 {
        match self.kind {
            AxisKind::Continuous {
                lower,
                upper,
                count,
            } => {
                if p == count as i64 {
                    upper
                } else {
                    lower + p as f64 * self.width()
                }
            }
            AxisKind::Discrete { .. } => p as f64,
        }
    }

    /// Index of the cell containing `x`, or `None` outside `[lower, upper)`.
    pub fn index_of(&self, x: f64) -> Option<u32> {
        match self.kind {
            AxisKind::Continuous {
                lower,
                upper,
                count,
            } => {
                if !(x >= lower && x < upper) {
                    return None;
                }
                let mut p = (((x - lower) / self.width()).floor() as i64).clamp(0, count as i64 - 1);
                while p > 0 && self.edge(p) > x {
                    p -= 1;
                }
                while p + 1 < count as i64 && self.edge(p + 1) <= x {
                    p += 1;
                }
                Some(p as u32)
            }
            AxisKind::Discrete { cardinality } => {
                if x >= 0.0 && x < cardinality as f64 && x.fract() == 0.0 {
                    Some(x as u32)
                } else {
                    None
                }
            }
        }
    }

    fn validate(&self) -> Result<(), GridError> {
        let invalid = |message: &str| GridError::InvalidAxis {
            name: self.name.clone(),
            message: message.to_string(),
        };
        match self.kind {
            AxisKind::Continuous {
                lower,
                upper,
                count,
            } => {
                if !(lower.is_finite() && upper.is_finite()) {
                    return Err(invalid("bounds must be finite"));
                }
                if upper <= lower {
                    return Err(invalid("upper bound must exceed lower bound"));
                }
                if count == 0 {
                    return Err(invalid("cell count must be at least 1"));
                }
            }
            AxisKind::Discrete { cardinality } => {
                if cardinality == 0 {
                    return Err(invalid("cardinality must be at least 1"));
                }
            }
        }
        Ok(())
    }
}

/// Address of a grid cell: per-axis indices, or the out-of-bounds sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CellIndex {
    Inside(SmallVec<[u32; 4]>),
    Out,
}

impl CellIndex {
    pub fn inside(indices: &[u32]) -> Self {
        CellIndex::Inside(SmallVec::from_slice(indices))
    }

    pub fn is_out(&self) -> bool {
        matches!(self, CellIndex::Out)
    }
}

/// Systematic sampling parameters: `n` samples per continuous axis, with the
/// topmost sample pulled `relative_epsilon * width` below the upper edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub samples_per_axis: u32,
    pub relative_epsilon: f64,
}

impl SamplePlan {
    pub fn new(samples_per_axis: u32) -> Result<Self, GridError> {
        Self::with_epsilon(samples_per_axis, DEFAULT_RELATIVE_EPSILON)
    }

    pub fn with_epsilon(samples_per_axis: u32, relative_epsilon: f64) -> Result<Self, GridError> {
        if samples_per_axis == 0 {
            return Err(GridError::Plan("need at least one sample per axis".into()));
        }
        if !(relative_epsilon > 0.0 && relative_epsilon < 1.0) {
            return Err(GridError::Plan(
                "relative epsilon must lie in (0, 1)".into(),
            ));
        }
        Ok(Self {
            samples_per_axis,
            relative_epsilon,
        })
    }

    /// Offsets of the samples within a cell of the given width.
    pub fn offsets(&self, width: f64) -> SmallVec<[f64; 8]> {
        let n = self.samples_per_axis;
        if n == 1 {
            return SmallVec::from_slice(&[0.0]);
        }
        let delta = width / (n - 1) as f64;
        let mut out: SmallVec<[f64; 8]> = (0..n - 1).map(|q| q as f64 * delta).collect();
        out.push(width - self.relative_epsilon * width);
        out
    }
}

/// A rectangular grid: the Cartesian product of its axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridAxes", into = "GridAxes")]
pub struct GridSpec {
    axes: Vec<Axis>,
    strides: Vec<u64>,
    total: u64,
}

#[derive(Serialize, Deserialize)]
struct GridAxes {
    axes: Vec<Axis>,
}

impl TryFrom<GridAxes> for GridSpec {
    type Error = GridError;

    fn try_from(value: GridAxes) -> Result<Self, Self::Error> {
        GridSpec::new(value.axes)
    }
}

impl From<GridSpec> for GridAxes {
    fn from(value: GridSpec) -> Self {
        GridAxes { axes: value.axes }
    }
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self, GridError> {
        for (i, axis) in axes.iter().enumerate() {
            axis.validate()?;
            if axes[..i].iter().any(|a| a.name == axis.name) {
                return Err(GridError::DuplicateAxis(axis.name.clone()));
            }
        }
        let mut strides = vec![1u64; axes.len()];
        let mut total = 1u64;
        for i in (0..axes.len()).rev() {
            strides[i] = total;
            total = total
                .checked_mul(axes[i].count() as u64)
                .ok_or(GridError::Overflow)?;
        }
        // The out-of-bounds id is `total`, so it must be representable too.
        if total == u64::MAX {
            return Err(GridError::Overflow);
        }
        Ok(Self {
            axes,
            strides,
            total,
        })
    }

    /// Parses `name[lo,hi]:count` (continuous) and bare `name` (discrete)
    /// entries separated by commas, resolving discrete cardinalities from
    /// the model.
    pub fn parse(spec: &str, model: &ModelDescriptor) -> Result<Self, GridError> {
        let mut axes = Vec::new();
        for (offset, entry) in split_top_level(spec)? {
            let entry_trim = entry.trim();
            let lead = entry.len() - entry.trim_start().len();
            let at = offset + lead;
            if entry_trim.is_empty() {
                return Err(GridError::Parse {
                    offset: at,
                    message: "empty axis entry".into(),
                });
            }
            axes.push(parse_axis(entry_trim, at, model)?);
        }
        if axes.is_empty() {
            return Err(GridError::Parse {
                offset: 0,
                message: "no axes".into(),
            });
        }
        Self::new(axes)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    /// Number of in-bounds cells.
    pub fn total_cells(&self) -> u64 {
        self.total
    }

    /// Reserved id of the out-of-bounds cell.
    pub fn out_id(&self) -> u64 {
        self.total
    }

    pub fn continuous_axes(&self) -> usize {
        self.axes.iter().filter(|a| !a.is_discrete()).count()
    }

    /// Samples drawn per cell under `plan`: `n` to the number of continuous axes.
    pub fn samples_per_cell(&self, plan: &SamplePlan) -> usize {
        (plan.samples_per_axis as usize).pow(self.continuous_axes() as u32)
    }

    pub fn cell_of_point(&self, point: &[f64]) -> Result<CellIndex, GridError> {
        if point.len() != self.axes.len() {
            return Err(GridError::Dimension {
                expected: self.axes.len(),
                found: point.len(),
            });
        }
        let mut idx = SmallVec::new();
        for (i, (axis, &x)) in self.axes.iter().zip(point).enumerate() {
            if !x.is_finite() {
                return Err(GridError::NonFinite(i));
            }
            match axis.index_of(x) {
                Some(p) => idx.push(p),
                None => return Ok(CellIndex::Out),
            }
        }
        Ok(CellIndex::Inside(idx))
    }

    /// Cell id of a point, `out_id()` when outside.
    pub fn id_of_point(&self, point: &[f64]) -> Result<u64, GridError> {
        Ok(self.cell_id(&self.cell_of_point(point)?))
    }

    /// Row-major linearization, last axis fastest.
    pub fn cell_id(&self, index: &CellIndex) -> u64 {
        match index {
            CellIndex::Out => self.total,
            CellIndex::Inside(p) => self.id_of_indices(p),
        }
    }

    pub fn id_of_indices(&self, p: &[u32]) -> u64 {
        debug_assert_eq!(p.len(), self.axes.len());
        p.iter()
            .zip(&self.strides)
            .map(|(&pi, &s)| pi as u64 * s)
            .sum()
    }

    pub fn delinearize(&self, id: u64) -> Result<CellIndex, GridError> {
        if id > self.total {
            return Err(GridError::IdOutOfRange {
                id,
                out: self.total,
            });
        }
        if id == self.total {
            return Ok(CellIndex::Out);
        }
        Ok(CellIndex::Inside(self.indices_of(id)))
    }

    /// Per-axis indices of an in-bounds id.
    pub fn indices_of(&self, id: u64) -> SmallVec<[u32; 4]> {
        debug_assert!(id < self.total);
        let mut rem = id;
        self.strides
            .iter()
            .map(|&s| {
                let q = rem / s;
                rem %= s;
                q as u32
            })
            .collect()
    }

    /// Lower corner of a cell.
    pub fn lower_corner(&self, p: &[u32]) -> Point {
        self.axes
            .iter()
            .zip(p)
            .map(|(a, &pi)| a.edge(pi as i64))
            .collect()
    }

    /// Calls `f` with every systematic sample of the cell at `p`, in
    /// row-major order over the sample grid.
    ///
    /// `p` may address cells one step outside the grid (index `-1` or
    /// `count`) on continuous axes, which is how out-of-bounds bands are
    /// sampled.
    pub fn for_each_sample<F: FnMut(usize, &[f64])>(&self, p: &[i64], plan: &SamplePlan, mut f: F) {
        let per_axis: SmallVec<[SmallVec<[f64; 8]>; 4]> = self
            .axes
            .iter()
            .zip(p)
            .map(|(axis, &pi)| match axis.kind {
                AxisKind::Discrete { .. } => SmallVec::from_slice(&[pi as f64]),
                AxisKind::Continuous { .. } => {
                    let lo = axis.edge(pi);
                    let width = axis.edge(pi + 1) - lo;
                    plan.offsets(width).into_iter().map(|o| lo + o).collect()
                }
            })
            .collect();
        let dims = per_axis.len();
        let mut q: SmallVec<[usize; 4]> = SmallVec::from_elem(0, dims);
        let mut point: Point = per_axis.iter().map(|v| v[0]).collect();
        let mut k = 0usize;
        loop {
            f(k, &point);
            k += 1;
            let mut d = dims;
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                q[d] += 1;
                if q[d] < per_axis[d].len() {
                    point[d] = per_axis[d][q[d]];
                    break;
                }
                q[d] = 0;
                point[d] = per_axis[d][0];
            }
        }
    }

    /// All systematic samples of an in-bounds cell.
    pub fn sample_points(&self, p: &[u32], plan: &SamplePlan) -> Vec<Point> {
        let signed: SmallVec<[i64; 4]> = p.iter().map(|&x| x as i64).collect();
        let mut out = Vec::with_capacity(self.samples_per_cell(plan));
        self.for_each_sample(&signed, plan, |_, pt| out.push(Point::from_slice(pt)));
        out
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, axis) in self.axes.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            match axis.kind {
                AxisKind::Continuous {
                    lower,
                    upper,
                    count,
                } => write!(f, "{}[{},{}]:{}", axis.name, lower, upper, count)?,
                AxisKind::Discrete { .. } => write!(f, "{}", axis.name)?,
            }
        }
        Ok(())
    }
}

fn split_top_level(spec: &str) -> Result<Vec<(usize, &str)>, GridError> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in spec.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth < 0 {
                    return Err(GridError::Parse {
                        offset: i,
                        message: "unbalanced `]`".into(),
                    });
                }
            }
            ',' if depth == 0 => {
                out.push((start, &spec[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(GridError::Parse {
            offset: spec.len(),
            message: "unclosed `[`".into(),
        });
    }
    out.push((start, &spec[start..]));
    Ok(out)
}

fn parse_axis(entry: &str, at: usize, model: &ModelDescriptor) -> Result<Axis, GridError> {
    let err = |offset: usize, message: String| GridError::Parse {
        offset: at + offset,
        message,
    };
    let Some(open) = entry.find('[') else {
        let name = entry;
        if !name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.') {
            return Err(err(0, format!("bad axis name `{name}`")));
        }
        return match model.discrete.iter().find(|d| d.name == name) {
            Some(d) => Ok(Axis::discrete(name, d.cardinality())),
            None if model.continuous.iter().any(|c| c.name == name) => Err(err(
                0,
                format!("continuous axis `{name}` needs bounds and a count"),
            )),
            None => Err(GridError::UnknownAxis(name.to_string())),
        };
    };
    let name = entry[..open].trim();
    let close = entry
        .find(']')
        .ok_or_else(|| err(open, "missing `]`".into()))?;
    let inner = &entry[open + 1..close];
    let (lo, hi) = inner
        .split_once(',')
        .ok_or_else(|| err(open + 1, "expected `lo,hi`".into()))?;
    let lower: f64 = lo
        .trim()
        .parse()
        .map_err(|_| err(open + 1, format!("bad lower bound `{}`", lo.trim())))?;
    let upper: f64 = hi
        .trim()
        .parse()
        .map_err(|_| err(open + 1, format!("bad upper bound `{}`", hi.trim())))?;
    let rest = entry[close + 1..].trim();
    let count_str = rest
        .strip_prefix(':')
        .ok_or_else(|| err(close + 1, "expected `:count`".into()))?;
    let count: u32 = count_str
        .trim()
        .parse()
        .map_err(|_| err(close + 2, format!("bad cell count `{}`", count_str.trim())))?;
    if !model.continuous.iter().any(|c| c.name == name) {
        return Err(GridError::UnknownAxis(name.to_string()));
    }
    let axis = Axis::continuous(name, lower, upper, count);
    axis.validate()?;
    Ok(axis)
}

/// Reference from a grid axis to a coordinate of the model state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimRef {
    Continuous(usize),
    Discrete(usize),
}

/// Binds grid axes to model variables by name.
///
/// Variables the grid does not mention keep the model's initial-state value
/// when a grid point is turned into a state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMap {
    refs: Vec<DimRef>,
    initial: State,
}

impl StateMap {
    pub fn new(axes: &[Axis], model: &ModelDescriptor) -> Result<Self, GridError> {
        let mut refs = Vec::with_capacity(axes.len());
        for axis in axes {
            let r = match axis.kind {
                AxisKind::Continuous { .. } => model
                    .continuous
                    .iter()
                    .position(|c| c.name == axis.name)
                    .map(DimRef::Continuous),
                AxisKind::Discrete { cardinality } => {
                    match model.discrete.iter().position(|d| d.name == axis.name) {
                        Some(i) if model.discrete[i].cardinality() == cardinality => {
                            Some(DimRef::Discrete(i))
                        }
                        Some(_) => {
                            return Err(GridError::InvalidAxis {
                                name: axis.name.clone(),
                                message: "cardinality differs from the model".into(),
                            })
                        }
                        None => None,
                    }
                }
            };
            refs.push(r.ok_or_else(|| GridError::UnknownAxis(axis.name.clone()))?);
        }
        Ok(Self {
            refs,
            initial: model.initial.clone(),
        })
    }

    pub fn refs(&self) -> &[DimRef] {
        &self.refs
    }

    /// Grid coordinates of a state.
    pub fn project(&self, state: &State) -> Point {
        self.refs
            .iter()
            .map(|r| match *r {
                DimRef::Continuous(i) => state.continuous[i],
                DimRef::Discrete(i) => state.discrete[i] as f64,
            })
            .collect()
    }

    /// A full model state at a grid point, omitted variables taken from the
    /// initial state.
    pub fn materialize(&self, point: &[f64]) -> State {
        let mut state = self.initial.clone();
        self.materialize_into(point, &mut state);
        state
    }

    /// Overwrites the grid-tracked coordinates of `state` in place.
    pub fn materialize_into(&self, point: &[f64], state: &mut State) {
        for (r, &x) in self.refs.iter().zip(point) {
            match *r {
                DimRef::Continuous(i) => state.continuous[i] = x,
                DimRef::Discrete(i) => state.discrete[i] = x as u32,
            }
        }
    }

    pub fn initial(&self) -> &State {
        &self.initial
    }
}

/// Cell containing `state`.
pub fn cell_of(grid: &GridSpec, map: &StateMap, state: &State) -> Result<CellIndex, GridError> {
    grid.cell_of_point(&map.project(state))
}

/// Systematic samples of a cell as full model states.
pub fn sample_states(grid: &GridSpec, map: &StateMap, p: &[u32], plan: &SamplePlan) -> Vec<State> {
    grid.sample_points(p, plan)
        .iter()
        .map(|pt| map.materialize(pt))
        .collect()
}
