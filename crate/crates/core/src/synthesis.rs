//! Shield synthesis on a grid abstraction.
//!
//! 1. [`build_transitions`] approximates the cell transition relation by
//!    simulating from systematic samples of every cell, `m` times each.
//! 2. [`initial_safe_cells`] marks cells whose samples all satisfy the
//!    property.
//! 3. [`solve_safety_game`] computes the greatest set of cells from which
//!    some action keeps every successor inside the set.
//! 4. [`extract_shield`] keeps, per safe cell, every action whose successors
//!    are all safe.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use bitvec::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::grid::{GridError, GridSpec, SamplePlan, StateMap};
use crate::model::{ActionId, ActionSet, Model, ModelError};
use crate::seeding;
use crate::shield::{ShieldError, ShieldGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error(
        "simulation left the grid: cell {cell}, action {action}, sample {sample}, repeat {repeat}"
    )]
    OutOfBounds {
        cell: u64,
        action: String,
        sample: usize,
        repeat: u32,
    },
    #[error("grid has {0} cells; transition tables hold at most 2^31")]
    TooLarge(u64),
    #[error("repeat count must be at least 1")]
    NoRepeats,
    #[error("unknown safety property `{0}`")]
    UnknownProperty(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Shield(#[from] ShieldError),
}

/// What happens to states outside the grid bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutOfBoundsMode {
    /// Reaching the out-of-bounds cell aborts synthesis.
    Error,
    AlwaysSafe,
    AlwaysUnsafe,
    /// Safe iff every sample from a one-cell band around the grid is safe.
    Auto,
}

impl FromStr for OutOfBoundsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(Self::Error),
            "safe" | "always-safe" => Ok(Self::AlwaysSafe),
            "unsafe" | "always-unsafe" => Ok(Self::AlwaysUnsafe),
            "auto" => Ok(Self::Auto),
            other => Err(format!(
                "unknown out-of-bounds mode `{other}` (expected error, safe, unsafe or auto)"
            )),
        }
    }
}

impl fmt::Display for OutOfBoundsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Error => "error",
            Self::AlwaysSafe => "always-safe",
            Self::AlwaysUnsafe => "always-unsafe",
            Self::Auto => "auto",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    pub property: String,
    pub plan: SamplePlan,
    /// Simulations per sample and action (`m`).
    pub repeats: u32,
    pub seed: u64,
    pub out_of_bounds: OutOfBoundsMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionMeta {
    pub samples_per_axis: u32,
    pub repeats: u32,
    pub seed: u64,
    pub out_of_bounds: OutOfBoundsMode,
    /// Samples outside the model's admissible domain, which contribute no
    /// successors.
    pub skipped_samples: u64,
}

/// Successor cells for every `(cell, action)` pair, the out-of-bounds cell
/// included as the last row (it only reaches itself).
///
/// Lists are sorted, deduplicated, and stored back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    grid: GridSpec,
    num_actions: usize,
    offsets: Vec<u64>,
    successors: Vec<u32>,
    meta: TransitionMeta,
}

impl TransitionTable {
    /// Builds a table from explicit successor lists; `rows(cell, action)`
    /// is queried for every in-bounds cell. Lists may be unsorted and may
    /// contain `grid.out_id()`.
    pub fn from_rows<F>(grid: GridSpec, num_actions: usize, mut rows: F) -> Result<Self, SynthesisError>
    where
        F: FnMut(u64, usize) -> Vec<u64>,
    {
        check_size(&grid, num_actions)?;
        let out = grid.out_id();
        let mut offsets = Vec::with_capacity((out as usize + 1) * num_actions + 1);
        let mut successors = Vec::new();
        offsets.push(0);
        for cell in 0..out {
            for a in 0..num_actions {
                let mut list: Vec<u32> = rows(cell, a)
                    .into_iter()
                    .map(|s| {
                        assert!(s <= out, "successor {s} beyond the out-of-bounds id");
                        s as u32
                    })
                    .collect();
                list.sort_unstable();
                list.dedup();
                successors.extend_from_slice(&list);
                offsets.push(successors.len() as u64);
            }
        }
        Ok(Self::finish(grid, num_actions, offsets, successors, TransitionMeta {
            samples_per_axis: 0,
            repeats: 0,
            seed: 0,
            out_of_bounds: OutOfBoundsMode::AlwaysUnsafe,
            skipped_samples: 0,
        }))
    }

    fn finish(
        grid: GridSpec,
        num_actions: usize,
        mut offsets: Vec<u64>,
        mut successors: Vec<u32>,
        meta: TransitionMeta,
    ) -> Self {
        let out = grid.out_id() as u32;
        for _ in 0..num_actions {
            successors.push(out);
            offsets.push(successors.len() as u64);
        }
        Self {
            grid,
            num_actions,
            offsets,
            successors,
            meta,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn meta(&self) -> &TransitionMeta {
        &self.meta
    }

    /// Rows in the table: every in-bounds cell plus the out-of-bounds cell.
    pub fn rows(&self) -> u64 {
        self.grid.out_id() + 1
    }

    pub fn successors(&self, cell: u64, action: usize) -> &[u32] {
        let row = cell as usize * self.num_actions + action;
        &self.successors[self.offsets[row] as usize..self.offsets[row + 1] as usize]
    }

    /// Total stored successor entries.
    pub fn edge_count(&self) -> usize {
        self.successors.len()
    }
}

fn check_size(grid: &GridSpec, num_actions: usize) -> Result<(), SynthesisError> {
    let rows = (grid.out_id() + 1).saturating_mul(num_actions as u64);
    if grid.out_id() >= i32::MAX as u64 || rows >= u32::MAX as u64 {
        return Err(SynthesisError::TooLarge(grid.total_cells()));
    }
    Ok(())
}

/// Bit set over cell ids, the out-of-bounds id included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafeSet {
    bits: BitVec,
}

impl SafeSet {
    pub fn empty(grid: &GridSpec) -> Self {
        Self {
            bits: bitvec![0; grid.out_id() as usize + 1],
        }
    }

    pub fn full(grid: &GridSpec) -> Self {
        Self {
            bits: bitvec![1; grid.out_id() as usize + 1],
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(u64) -> bool) -> Self {
        Self {
            bits: (0..=grid.out_id()).map(f).collect(),
        }
    }

    pub fn contains(&self, id: u64) -> bool {
        self.bits[id as usize]
    }

    pub fn set(&mut self, id: u64, safe: bool) {
        self.bits.set(id as usize, safe);
    }

    /// Number of ids tracked (in-bounds cells plus one).
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_subset_of(&self, other: &SafeSet) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter_ones().all(|i| other.bits[i])
    }
}

/// Decides whether the out-of-bounds cell counts as safe.
pub fn classify_out_of_bounds(
    grid: &GridSpec,
    map: &StateMap,
    model: &dyn Model,
    property: &str,
    mode: OutOfBoundsMode,
    plan: &SamplePlan,
) -> Result<bool, SynthesisError> {
    match mode {
        OutOfBoundsMode::Error | OutOfBoundsMode::AlwaysUnsafe => Ok(false),
        OutOfBoundsMode::AlwaysSafe => Ok(true),
        OutOfBoundsMode::Auto => {
            check_property(model, property)?;
            for (axis_idx, axis) in grid.axes().iter().enumerate() {
                if axis.is_discrete() {
                    continue;
                }
                for side in [-1i64, axis.count() as i64] {
                    let unsafe_found = (0..grid.total_cells())
                        .into_par_iter()
                        .filter_map(|id| {
                            let p = grid.indices_of(id);
                            (p[axis_idx] == 0).then_some(p)
                        })
                        .map(|p| {
                            let mut q: SmallVec<[i64; 4]> = p.iter().map(|&x| x as i64).collect();
                            q[axis_idx] = side;
                            let mut state = map.initial().clone();
                            let mut result = Ok(false);
                            grid.for_each_sample(&q, plan, |_, pt| {
                                if matches!(result, Ok(false)) {
                                    map.materialize_into(pt, &mut state);
                                    result = model.is_safe(&state, property).map(|safe| !safe);
                                }
                            });
                            result
                        })
                        .try_reduce(|| false, |a, b| Ok(a || b))?;
                    if unsafe_found {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        }
    }
}

fn check_property(model: &dyn Model, property: &str) -> Result<(), SynthesisError> {
    if model.descriptor().has_property(property) {
        Ok(())
    } else {
        Err(SynthesisError::UnknownProperty(property.to_string()))
    }
}

/// Cells all of whose samples satisfy `property`; the out-of-bounds bit
/// follows [`classify_out_of_bounds`].
pub fn initial_safe_cells(
    grid: &GridSpec,
    map: &StateMap,
    model: &dyn Model,
    property: &str,
    plan: &SamplePlan,
    mode: OutOfBoundsMode,
) -> Result<SafeSet, SynthesisError> {
    check_property(model, property)?;
    let flags: Vec<bool> = (0..grid.total_cells())
        .into_par_iter()
        .map(|id| {
            let p: SmallVec<[i64; 4]> = grid.indices_of(id).iter().map(|&x| x as i64).collect();
            let mut state = map.initial().clone();
            let mut result = Ok(true);
            grid.for_each_sample(&p, plan, |_, pt| {
                if matches!(result, Ok(true)) {
                    map.materialize_into(pt, &mut state);
                    result = model.is_safe(&state, property);
                }
            });
            result
        })
        .collect::<Result<_, ModelError>>()?;
    let out_safe = classify_out_of_bounds(grid, map, model, property, mode, plan)?;
    let mut bits: BitVec = flags.into_iter().collect();
    bits.push(out_safe);
    Ok(SafeSet { bits })
}

struct CellRows {
    lengths: SmallVec<[u32; 4]>,
    successors: Vec<u32>,
    skipped: u64,
}

/// Simulates every sample of every cell under every action `repeats` times
/// and records the cells reached.
///
/// The random stream of a simulation is derived from
/// `(seed, cell, sample, repeat)`; all actions of one sample share it, so
/// actions with identical effect yield identical successor sets.
pub fn build_transitions(
    grid: &GridSpec,
    map: &StateMap,
    model: &dyn Model,
    config: &SynthesisConfig,
) -> Result<TransitionTable, SynthesisError> {
    let num_actions = model.descriptor().num_actions();
    check_size(grid, num_actions)?;
    if config.repeats == 0 {
        return Err(SynthesisError::NoRepeats);
    }
    let out = grid.out_id();
    let per_cell: Vec<CellRows> = (0..grid.total_cells())
        .into_par_iter()
        .map(|id| simulate_cell(grid, map, model, config, num_actions, id, out))
        .collect::<Result<_, _>>()?;

    let mut offsets = Vec::with_capacity(per_cell.len() * num_actions + num_actions + 1);
    let mut successors = Vec::with_capacity(per_cell.iter().map(|c| c.successors.len()).sum());
    let mut skipped = 0;
    offsets.push(0u64);
    for cell in per_cell {
        skipped += cell.skipped;
        successors.extend_from_slice(&cell.successors);
        let mut end = *offsets.last().unwrap();
        for len in cell.lengths {
            end += len as u64;
            offsets.push(end);
        }
    }
    Ok(TransitionTable::finish(
        grid.clone(),
        num_actions,
        offsets,
        successors,
        TransitionMeta {
            samples_per_axis: config.plan.samples_per_axis,
            repeats: config.repeats,
            seed: config.seed,
            out_of_bounds: config.out_of_bounds,
            skipped_samples: skipped,
        },
    ))
}

fn simulate_cell(
    grid: &GridSpec,
    map: &StateMap,
    model: &dyn Model,
    config: &SynthesisConfig,
    num_actions: usize,
    id: u64,
    out: u64,
) -> Result<CellRows, SynthesisError> {
    let p: SmallVec<[i64; 4]> = grid.indices_of(id).iter().map(|&x| x as i64).collect();
    let mut lists: SmallVec<[Vec<u32>; 4]> = (0..num_actions).map(|_| Vec::new()).collect();
    let mut state = map.initial().clone();
    let mut skipped = 0u64;
    let mut failure: Option<SynthesisError> = None;
    grid.for_each_sample(&p, &config.plan, |k, pt| {
        if failure.is_some() {
            return;
        }
        map.materialize_into(pt, &mut state);
        for repeat in 0..config.repeats {
            let base = seeding::rng_for(config.seed, &[id, k as u64, repeat as u64]);
            for (a, list) in lists.iter_mut().enumerate() {
                let mut rng = base.clone();
                let next = match model.step(&state, ActionId(a as u8), &mut rng) {
                    Ok(outcome) => outcome.next,
                    Err(ModelError::Domain(_)) => {
                        skipped += 1;
                        continue;
                    }
                    Err(e) => {
                        failure = Some(e.into());
                        return;
                    }
                };
                let target = match grid.id_of_point(&map.project(&next)) {
                    Ok(t) => t,
                    Err(e) => {
                        failure = Some(e.into());
                        return;
                    }
                };
                if target == out && config.out_of_bounds == OutOfBoundsMode::Error {
                    failure = Some(SynthesisError::OutOfBounds {
                        cell: id,
                        action: model.descriptor().actions[a].clone(),
                        sample: k,
                        repeat,
                    });
                    return;
                }
                list.push(target as u32);
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let mut lengths = SmallVec::new();
    let mut successors = Vec::new();
    for mut list in lists {
        list.sort_unstable();
        list.dedup();
        lengths.push(list.len() as u32);
        successors.extend_from_slice(&list);
    }
    Ok(CellRows {
        lengths,
        successors,
        skipped,
    })
}

/// Greatest fixed point of the safe-cell equation, by backward propagation.
///
/// Each `(cell, action)` pair stays live while all its successors are safe.
/// When a cell turns unsafe, every pair that can reach it dies; a cell with
/// no live pair left turns unsafe in turn. Total work is linear in the
/// number of stored successor entries.
pub fn solve_safety_game(table: &TransitionTable, initial: &SafeSet) -> SafeSet {
    let rows = table.rows() as usize;
    let na = table.num_actions();
    assert_eq!(initial.len(), rows, "safe set and table cover different grids");

    // Reverse adjacency: target cell -> (cell * na + action) pairs.
    let mut in_degree = vec![0u32; rows + 1];
    for &s in &table.successors {
        in_degree[s as usize + 1] += 1;
    }
    let mut rev_offsets = Vec::with_capacity(rows + 1);
    let mut acc = 0usize;
    for d in &in_degree {
        acc += *d as usize;
        rev_offsets.push(acc);
    }
    let mut fill = rev_offsets.clone();
    let mut rev = vec![0u32; table.successors.len()];
    for pair in 0..rows * na {
        let lo = table.offsets[pair] as usize;
        let hi = table.offsets[pair + 1] as usize;
        for &s in &table.successors[lo..hi] {
            rev[fill[s as usize]] = pair as u32;
            fill[s as usize] += 1;
        }
    }

    let mut safe = initial.clone();
    let mut live: BitVec = bitvec![1; rows * na];
    let mut live_count = vec![na as u32; rows];
    let mut queue: Vec<u32> = (0..rows as u32).filter(|&c| !safe.contains(c as u64)).collect();
    while let Some(cell) = queue.pop() {
        for &pair in &rev[rev_offsets[cell as usize]..rev_offsets[cell as usize + 1]] {
            let pair = pair as usize;
            if !live[pair] {
                continue;
            }
            live.set(pair, false);
            let owner = pair / na;
            live_count[owner] -= 1;
            if live_count[owner] == 0 && safe.contains(owner as u64) {
                safe.set(owner as u64, false);
                queue.push(owner as u32);
            }
        }
    }
    safe
}

/// Most permissive shield for a fixed point `safe`.
pub fn extract_shield(
    table: &TransitionTable,
    safe: &SafeSet,
    actions: Vec<String>,
) -> Result<ShieldGrid, SynthesisError> {
    let na = table.num_actions();
    let cells: Vec<ActionSet> = (0..table.grid().total_cells())
        .into_par_iter()
        .map(|cell| {
            let mut set = ActionSet::EMPTY;
            if safe.contains(cell) {
                for a in 0..na {
                    if table
                        .successors(cell, a)
                        .iter()
                        .all(|&s| safe.contains(s as u64))
                    {
                        set.insert(ActionId(a as u8));
                    }
                }
            }
            set
        })
        .collect();
    Ok(ShieldGrid::new(table.grid().clone(), actions, cells)?)
}

/// Result of a full synthesis run.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub shield: ShieldGrid,
    pub transitions: TransitionTable,
    pub initially_safe: usize,
    pub safe: SafeSet,
    pub elapsed: Duration,
}

impl Synthesis {
    /// Whether the out-of-bounds cell ended up safe.
    pub fn out_safe(&self) -> bool {
        self.safe.contains(self.shield.grid().out_id())
    }
}

/// Runs the whole pipeline on `grid`.
pub fn synthesize(
    model: &dyn Model,
    grid: &GridSpec,
    config: &SynthesisConfig,
) -> Result<Synthesis, SynthesisError> {
    let start = Instant::now();
    let desc = model.descriptor();
    let map = StateMap::new(grid.axes(), desc)?;
    let initial = initial_safe_cells(
        grid,
        &map,
        model,
        &config.property,
        &config.plan,
        config.out_of_bounds,
    )?;
    let transitions = build_transitions(grid, &map, model, config)?;
    let safe = solve_safety_game(&transitions, &initial);
    let shield = extract_shield(&transitions, &safe, desc.actions.clone())?;
    Ok(Synthesis {
        shield,
        initially_safe: initial.count(),
        transitions,
        safe,
        elapsed: start.elapsed(),
    })
}
