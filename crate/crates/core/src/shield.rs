//! Shields: per-state sets of allowed actions, stored either as a grid or as
//! a decision tree.

use thiserror::Error;

use crate::caap::DecisionTree;
use crate::grid::{Axis, GridError, GridSpec, StateMap};
use crate::model::{ActionSet, ModelDescriptor, State};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShieldError {
    #[error("shield has {found} cells, grid has {expected}")]
    CellCount { expected: u64, found: u64 },
    #[error("shield declares {shield} actions, model has {model}")]
    ActionMismatch { shield: usize, model: usize },
    #[error("action set {mask:#x} at cell {cell} uses undeclared actions")]
    ActionRange { cell: u64, mask: u64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Most-permissive shield over a grid: one action set per cell, empty for
/// unsafe cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ShieldGrid {
    grid: GridSpec,
    actions: Vec<String>,
    cells: Vec<ActionSet>,
}

impl ShieldGrid {
    pub fn new(grid: GridSpec, actions: Vec<String>, cells: Vec<ActionSet>) -> Result<Self, ShieldError> {
        if cells.len() as u64 != grid.total_cells() {
            return Err(ShieldError::CellCount {
                expected: grid.total_cells(),
                found: cells.len() as u64,
            });
        }
        let allowed = ActionSet::all(actions.len());
        if let Some((i, bad)) = cells
            .iter()
            .enumerate()
            .find(|(_, s)| s.0 & !allowed.0 != 0)
        {
            return Err(ShieldError::ActionRange {
                cell: i as u64,
                mask: bad.0,
            });
        }
        Ok(Self {
            grid,
            actions,
            cells,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn cells(&self) -> &[ActionSet] {
        &self.cells
    }

    pub fn get(&self, id: u64) -> ActionSet {
        self.cells[id as usize]
    }

    /// Action set at a grid-coordinate point; `None` outside the grid.
    pub fn label_at_point(&self, point: &[f64]) -> Option<ActionSet> {
        let id = self.grid.id_of_point(point).ok()?;
        (id < self.grid.total_cells()).then(|| self.get(id))
    }

    /// Number of cells with a nonempty action set.
    pub fn safe_cells(&self) -> u64 {
        self.cells.iter().filter(|s| !s.is_empty()).count() as u64
    }
}

/// The two storage forms a shield can take.
#[derive(Debug, Clone, PartialEq)]
pub enum ShieldRepr {
    Grid(ShieldGrid),
    Tree(DecisionTree),
}

impl ShieldRepr {
    pub fn axes(&self) -> &[Axis] {
        match self {
            ShieldRepr::Grid(g) => g.grid().axes(),
            ShieldRepr::Tree(t) => t.domain(),
        }
    }

    pub fn actions(&self) -> &[String] {
        match self {
            ShieldRepr::Grid(g) => g.actions(),
            ShieldRepr::Tree(t) => t.actions(),
        }
    }

    /// Label at a point in axis coordinates; `None` outside the domain.
    pub fn label_at_point(&self, point: &[f64]) -> Option<ActionSet> {
        match self {
            ShieldRepr::Grid(g) => g.label_at_point(point),
            ShieldRepr::Tree(t) => t
                .contains_point(point)
                .then(|| t.eval(point)),
        }
    }
}

/// A shield bound to a model, queried with model states.
#[derive(Debug, Clone)]
pub struct Shield {
    repr: ShieldRepr,
    map: StateMap,
}

impl Shield {
    pub fn new(repr: ShieldRepr, model: &ModelDescriptor) -> Result<Self, ShieldError> {
        if repr.actions().len() != model.num_actions() {
            return Err(ShieldError::ActionMismatch {
                shield: repr.actions().len(),
                model: model.num_actions(),
            });
        }
        let map = StateMap::new(repr.axes(), model)?;
        Ok(Self { repr, map })
    }

    pub fn repr(&self) -> &ShieldRepr {
        &self.repr
    }

    pub fn map(&self) -> &StateMap {
        &self.map
    }

    /// Allowed actions at `state`; `None` when the state lies outside the
    /// shield's domain.
    pub fn allowed(&self, state: &State) -> Option<ActionSet> {
        self.repr.label_at_point(&self.map.project(state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_cell_data() {
        let g = GridSpec::new(vec![Axis::continuous("x", 0.0, 1.0, 2)]).unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            ShieldGrid::new(g.clone(), names.clone(), vec![ActionSet(1)]),
            Err(ShieldError::CellCount { .. })
        ));
        assert!(matches!(
            ShieldGrid::new(g.clone(), names.clone(), vec![ActionSet(1), ActionSet(4)]),
            Err(ShieldError::ActionRange { cell: 1, mask: 4 })
        ));
        let s = ShieldGrid::new(g, names, vec![ActionSet(1), ActionSet(0)]).unwrap();
        assert_eq!(s.label_at_point(&[0.2]), Some(ActionSet(1)));
        assert_eq!(s.label_at_point(&[0.7]), Some(ActionSet(0)));
        assert_eq!(s.label_at_point(&[1.0]), None);
        assert_eq!(s.safe_cells(), 1);
    }
}
