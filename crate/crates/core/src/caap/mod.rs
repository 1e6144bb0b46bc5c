//! Compaction of axis-aligned labeled partitionings into small decision
//! trees.
//!
//! A partitioning is described by a [`BoundsMatrix`] (the sorted split
//! values of every dimension) and a set of boxes whose corners index into
//! it. Grid shields are partitionings with one region per cell, and every
//! decision tree induces one. [`caap_pass`] greedily grows maximal
//! same-label boxes, [`regions_to_tree`] turns those boxes back into a tree,
//! and [`compact`] repeats both until the size stops improving.

mod expand;
mod tree;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::grid::Axis;
use crate::model::ActionSet;
use crate::shield::ShieldGrid;

pub use expand::{caap_pass, Coarsening, Expansion};
pub use tree::{compact, regions_to_tree, CompactOptions, Compaction, CompactionStep};

/// Index vector into the columns of a [`BoundsMatrix`].
pub type Index = SmallVec<[u32; 4]>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaapError {
    #[error("bounds row {dim} is not strictly ascending or has fewer than two entries")]
    Bounds { dim: usize },
    #[error("inconsistent tree: node {node} splits dimension {dim} at {threshold}, outside its box")]
    InconsistentTree { node: u32, dim: u32, threshold: f64 },
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("regions do not form a partitioning: {0}")]
    NotAPartitioning(String),
    #[error("domain has {domain} dimensions, bounds have {bounds}")]
    Dimension { domain: usize, bounds: usize },
}

/// Per-dimension ascending split values, bracketed by the domain bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsMatrix {
    rows: Vec<Vec<f64>>,
}

impl BoundsMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, CaapError> {
        for (dim, row) in rows.iter().enumerate() {
            if row.len() < 2 || row.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(CaapError::Bounds { dim });
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, dim: usize) -> &[f64] {
        &self.rows[dim]
    }

    pub fn dims(&self) -> usize {
        self.rows.len()
    }

    /// The point `(M[0][p_0], …, M[k-1][p_{k-1}])`.
    pub fn point(&self, p: &[u32]) -> SmallVec<[f64; 4]> {
        self.rows.iter().zip(p).map(|(r, &i)| r[i as usize]).collect()
    }
}

/// A labeled box `[p_min, p_max)` in bounds-matrix index space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Region {
    pub p_min: Index,
    pub p_max: Index,
    pub label: ActionSet,
}

impl Region {
    pub fn new(p_min: &[u32], p_max: &[u32], label: ActionSet) -> Self {
        Self {
            p_min: Index::from_slice(p_min),
            p_max: Index::from_slice(p_max),
            label,
        }
    }

    /// Volume in micro-cells.
    pub fn volume(&self) -> u64 {
        self.p_min
            .iter()
            .zip(&self.p_max)
            .map(|(&a, &b)| (b - a) as u64)
            .product()
    }

    pub fn contains(&self, p: &[u32]) -> bool {
        p.iter()
            .zip(self.p_min.iter().zip(&self.p_max))
            .all(|(&x, (&lo, &hi))| lo <= x && x < hi)
    }
}

/// Visits the linear ids of every micro-cell in `[lo, hi)`, row-major.
/// Stops early and returns `false` when `f` does.
pub(crate) fn for_each_in_box(
    strides: &[u64],
    lo: &[u32],
    hi: &[u32],
    mut f: impl FnMut(u64) -> bool,
) -> bool {
    let k = lo.len();
    if lo.iter().zip(hi).any(|(a, b)| a >= b) {
        return true;
    }
    let mut idx: Index = Index::from_slice(lo);
    loop {
        let base: u64 = idx[..k - 1]
            .iter()
            .zip(strides)
            .map(|(&i, &s)| i as u64 * s)
            .sum();
        for last in lo[k - 1]..hi[k - 1] {
            if !f(base + last as u64) {
                return false;
            }
        }
        let mut d = k - 1;
        loop {
            if d == 0 {
                return true;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < hi[d] {
                break;
            }
            idx[d] = lo[d];
        }
    }
}

/// A disjoint cover of the domain by labeled boxes, with a map from every
/// micro-cell (the cells induced by the bounds matrix) to its owner.
#[derive(Debug, Clone, PartialEq)]
pub struct Partitioning {
    domain: Vec<Axis>,
    actions: Vec<String>,
    bounds: BoundsMatrix,
    shape: Index,
    strides: SmallVec<[u64; 4]>,
    // Region boxes stored flat, `dims` entries per region.
    lo: Vec<u32>,
    hi: Vec<u32>,
    labels: Vec<ActionSet>,
    owner: Vec<u32>,
}

impl Partitioning {
    fn empty(domain: Vec<Axis>, actions: Vec<String>, bounds: BoundsMatrix) -> Result<Self, CaapError> {
        if domain.len() != bounds.dims() || domain.is_empty() {
            return Err(CaapError::Dimension {
                domain: domain.len(),
                bounds: bounds.dims(),
            });
        }
        let shape: Index = bounds.rows().iter().map(|r| (r.len() - 1) as u32).collect();
        let mut strides: SmallVec<[u64; 4]> = SmallVec::from_elem(1, shape.len());
        for d in (0..shape.len() - 1).rev() {
            strides[d] = strides[d + 1] * shape[d + 1] as u64;
        }
        let total = strides[0] * shape[0] as u64;
        Ok(Self {
            domain,
            actions,
            bounds,
            shape,
            strides,
            lo: Vec::new(),
            hi: Vec::new(),
            labels: Vec::new(),
            owner: vec![u32::MAX; total as usize],
        })
    }

    /// Builds a partitioning from explicit regions, checking that they are
    /// disjoint and cover every micro-cell.
    pub fn from_regions(
        domain: Vec<Axis>,
        actions: Vec<String>,
        bounds: BoundsMatrix,
        regions: &[Region],
    ) -> Result<Self, CaapError> {
        let mut part = Self::empty(domain, actions, bounds)?;
        for r in regions {
            part.push(r)?;
        }
        part.check_covered()?;
        Ok(part)
    }

    fn push(&mut self, r: &Region) -> Result<(), CaapError> {
        let k = self.dims();
        if r.p_min.len() != k || r.p_max.len() != k {
            return Err(CaapError::NotAPartitioning("region dimension mismatch".into()));
        }
        if r.p_min.iter().zip(&r.p_max).zip(&self.shape).any(|((&a, &b), &n)| a >= b || b > n) {
            return Err(CaapError::NotAPartitioning(format!(
                "region {:?}..{:?} is empty or out of range",
                r.p_min, r.p_max
            )));
        }
        let id = self.labels.len() as u32;
        let owner = &mut self.owner;
        let ok = for_each_in_box(&self.strides, &r.p_min, &r.p_max, |c| {
            let slot = &mut owner[c as usize];
            if *slot != u32::MAX {
                return false;
            }
            *slot = id;
            true
        });
        if !ok {
            return Err(CaapError::NotAPartitioning(format!(
                "region {:?}..{:?} overlaps another",
                r.p_min, r.p_max
            )));
        }
        self.lo.extend_from_slice(&r.p_min);
        self.hi.extend_from_slice(&r.p_max);
        self.labels.push(r.label);
        Ok(())
    }

    fn check_covered(&self) -> Result<(), CaapError> {
        match self.owner.iter().position(|&o| o == u32::MAX) {
            Some(c) => Err(CaapError::NotAPartitioning(format!(
                "micro-cell {:?} is not covered",
                self.micro_index(c as u64)
            ))),
            None => Ok(()),
        }
    }

    pub fn domain(&self) -> &[Axis] {
        &self.domain
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn bounds(&self) -> &BoundsMatrix {
        &self.bounds
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    /// Micro-cells per dimension.
    pub fn shape(&self) -> &[u32] {
        &self.shape
    }

    pub(crate) fn strides(&self) -> &[u64] {
        &self.strides
    }

    pub fn micro_cells(&self) -> u64 {
        self.owner.len() as u64
    }

    pub fn num_regions(&self) -> usize {
        self.labels.len()
    }

    pub fn region_lo(&self, r: u32) -> &[u32] {
        let k = self.dims();
        &self.lo[r as usize * k..(r as usize + 1) * k]
    }

    pub fn region_hi(&self, r: u32) -> &[u32] {
        let k = self.dims();
        &self.hi[r as usize * k..(r as usize + 1) * k]
    }

    pub fn region_label(&self, r: u32) -> ActionSet {
        self.labels[r as usize]
    }

    pub fn region(&self, r: u32) -> Region {
        Region::new(self.region_lo(r), self.region_hi(r), self.region_label(r))
    }

    pub fn regions(&self) -> impl Iterator<Item = Region> + '_ {
        (0..self.num_regions() as u32).map(|r| self.region(r))
    }

    pub fn owner(&self, micro: u64) -> u32 {
        self.owner[micro as usize]
    }

    pub fn label(&self, micro: u64) -> ActionSet {
        self.labels[self.owner[micro as usize] as usize]
    }

    pub fn micro_id(&self, p: &[u32]) -> u64 {
        p.iter().zip(&self.strides).map(|(&i, &s)| i as u64 * s).sum()
    }

    pub fn micro_index(&self, mut id: u64) -> Index {
        self.strides
            .iter()
            .map(|&s| {
                let i = id / s;
                id %= s;
                i as u32
            })
            .collect()
    }

    /// Lower corner of a micro-cell in domain coordinates.
    pub fn micro_corner(&self, id: u64) -> SmallVec<[f64; 4]> {
        self.bounds.point(&self.micro_index(id))
    }
}

fn domain_row(axis: &Axis) -> Vec<f64> {
    (0..=axis.count() as i64).map(|p| axis.edge(p)).collect()
}

/// The partitioning of a grid shield: every cell is its own region.
pub fn partitioning_of_grid(shield: &ShieldGrid) -> Result<Partitioning, CaapError> {
    let grid = shield.grid();
    let bounds = BoundsMatrix::new(grid.axes().iter().map(domain_row).collect())?;
    let mut part = Partitioning::empty(grid.axes().to_vec(), shield.actions().to_vec(), bounds)?;
    let n = grid.total_cells() as usize;
    let k = part.dims();
    part.lo.reserve(n * k);
    part.hi.reserve(n * k);
    for id in 0..n {
        let p = grid.indices_of(id as u64);
        part.lo.extend_from_slice(&p);
        part.hi.extend(p.iter().map(|&i| i + 1));
        part.owner[id] = id as u32;
    }
    part.labels = shield.cells().to_vec();
    Ok(part)
}

/// The partitioning induced by a decision tree: its bounds matrix holds
/// every threshold plus the domain bounds, and every leaf is a region.
pub fn partitioning_of_tree(tree: &DecisionTree) -> Result<Partitioning, CaapError> {
    let mut rows: Vec<Vec<f64>> = tree
        .domain()
        .iter()
        .map(|a| {
            let (lo, hi) = a.bounds();
            vec![lo, hi]
        })
        .collect();
    for (id, node) in tree.nodes().iter().enumerate() {
        if let Node::Inner { dim, threshold, .. } = *node {
            let row = &mut rows[dim as usize];
            if !(row[0] < threshold && threshold < row[1]) {
                return Err(CaapError::InconsistentTree {
                    node: id as u32,
                    dim,
                    threshold,
                });
            }
            row.push(threshold);
        }
    }
    for row in &mut rows {
        row.sort_by(f64::total_cmp);
        row.dedup();
    }
    let bounds = BoundsMatrix::new(rows)?;
    let mut part = Partitioning::empty(tree.domain().to_vec(), tree.actions().to_vec(), bounds)?;

    let lo: Index = SmallVec::from_elem(0, part.dims());
    let hi: Index = part.shape.clone();
    let mut stack = vec![(tree.root(), lo, hi)];
    while let Some((id, lo, hi)) = stack.pop() {
        match tree.nodes()[id as usize] {
            Node::Leaf(label) => part.push(&Region {
                p_min: lo,
                p_max: hi,
                label,
            })?,
            Node::Inner {
                dim,
                threshold,
                left,
                right,
            } => {
                let d = dim as usize;
                let row = part.bounds.row(d);
                let j = row.partition_point(|&x| x < threshold) as u32;
                if j <= lo[d] || j >= hi[d] {
                    return Err(CaapError::InconsistentTree {
                        node: id,
                        dim,
                        threshold,
                    });
                }
                let mut left_hi = hi.clone();
                left_hi[d] = j;
                let mut right_lo = lo.clone();
                right_lo[d] = j;
                stack.push((right, right_lo, hi));
                stack.push((left, lo, left_hi));
            }
        }
    }
    part.check_covered()?;
    Ok(part)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Go left iff `s[dim] < threshold`.
    Inner {
        dim: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf(ActionSet),
}

/// Binary decision tree over a box domain with action-set leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    domain: Vec<Axis>,
    actions: Vec<String>,
    nodes: Vec<Node>,
    root: u32,
}

impl DecisionTree {
    /// Validates that `nodes` form a single tree rooted at `root`: every
    /// node is reachable exactly once and dimensions are in range.
    pub fn new(domain: Vec<Axis>, actions: Vec<String>, nodes: Vec<Node>, root: u32) -> Result<Self, CaapError> {
        let n = nodes.len();
        if root as usize >= n {
            return Err(CaapError::MalformedTree(format!("root {root} out of range")));
        }
        let mut seen = vec![false; n];
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            let slot = seen
                .get_mut(id as usize)
                .ok_or_else(|| CaapError::MalformedTree(format!("child {id} out of range")))?;
            if *slot {
                return Err(CaapError::MalformedTree(format!("node {id} reached twice")));
            }
            *slot = true;
            match nodes[id as usize] {
                Node::Leaf(label) => {
                    if label.0 & !ActionSet::all(actions.len()).0 != 0 {
                        return Err(CaapError::MalformedTree(format!(
                            "leaf {id} uses undeclared actions"
                        )));
                    }
                }
                Node::Inner {
                    dim,
                    threshold,
                    left,
                    right,
                } => {
                    if dim as usize >= domain.len() || !threshold.is_finite() {
                        return Err(CaapError::MalformedTree(format!(
                            "node {id} has an invalid predicate"
                        )));
                    }
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(CaapError::MalformedTree(format!("node {orphan} is unreachable")));
        }
        Ok(Self {
            domain,
            actions,
            nodes,
            root,
        })
    }

    pub fn leaf(domain: Vec<Axis>, actions: Vec<String>, label: ActionSet) -> Self {
        Self {
            domain,
            actions,
            nodes: vec![Node::Leaf(label)],
            root: 0,
        }
    }

    pub fn domain(&self) -> &[Axis] {
        &self.domain
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> u32 {
        self.root
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(self.root, 1)];
        while let Some((id, d)) = stack.pop() {
            best = best.max(d);
            if let Node::Inner { left, right, .. } = self.nodes[id as usize] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        best
    }

    pub fn contains_point(&self, point: &[f64]) -> bool {
        point.len() == self.domain.len()
            && self.domain.iter().zip(point).all(|(a, &x)| {
                let (lo, hi) = a.bounds();
                lo <= x && x < hi
            })
    }

    /// Leaf label reached by `point`; points outside the domain still
    /// descend to some leaf.
    pub fn eval(&self, point: &[f64]) -> ActionSet {
        let mut id = self.root;
        loop {
            match self.nodes[id as usize] {
                Node::Leaf(label) => return label,
                Node::Inner {
                    dim,
                    threshold,
                    left,
                    right,
                } => {
                    id = if point[dim as usize] < threshold { left } else { right };
                }
            }
        }
    }
}
