//! The model contract: states, actions, and a stochastic simulator that
//! advances a system to the controller's next decision point.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

/// Random stream handed to models. Fixed to a portable generator so that
/// seeded runs reproduce across platforms.
pub type SimRng = ChaCha8Rng;

/// Maximum number of actions a model may declare (action sets are `u64` masks).
pub const MAX_ACTIONS: usize = 64;

/// Hybrid system state: continuous coordinates plus discrete locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub continuous: SmallVec<[f64; 4]>,
    pub discrete: SmallVec<[u32; 2]>,
}

impl State {
    pub fn new(continuous: &[f64], discrete: &[u32]) -> Self {
        Self {
            continuous: SmallVec::from_slice(continuous),
            discrete: SmallVec::from_slice(discrete),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.continuous.iter().all(|x| x.is_finite())
    }
}

/// Index into a model's action list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId(pub u8);

impl ActionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A set of actions, stored as a bit mask over action indices.
///
/// The empty set is the "unsafe" label of a shield.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionSet(pub u64);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);

    /// The set containing the first `n` actions.
    pub fn all(n: usize) -> Self {
        debug_assert!(n <= MAX_ACTIONS);
        if n >= 64 {
            ActionSet(u64::MAX)
        } else {
            ActionSet((1u64 << n) - 1)
        }
    }

    pub fn single(a: ActionId) -> Self {
        ActionSet(1u64 << a.0)
    }

    pub fn contains(self, a: ActionId) -> bool {
        (self.0 >> a.0) & 1 == 1
    }

    pub fn insert(&mut self, a: ActionId) {
        self.0 |= 1u64 << a.0;
    }

    pub fn remove(&mut self, a: ActionId) {
        self.0 &= !(1u64 << a.0);
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = ActionId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros();
            bits &= bits - 1;
            Some(ActionId(i as u8))
        })
    }

    /// The `k`-th member in ascending index order.
    pub fn nth(self, k: usize) -> Option<ActionId> {
        self.iter().nth(k)
    }

    /// Human-readable form such as `{hit, nohit}`.
    pub fn describe(self, names: &[String]) -> String {
        let parts: Vec<&str> = self
            .iter()
            .map(|a| names.get(a.index()).map(String::as_str).unwrap_or("?"))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }
}

impl fmt::Display for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousDim {
    pub name: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteAxis {
    pub name: String,
    /// One label per value; the cardinality is `values.len()`.
    pub values: Vec<String>,
}

impl DiscreteAxis {
    pub fn cardinality(&self) -> u32 {
        self.values.len() as u32
    }
}

/// Static description of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub actions: Vec<String>,
    pub continuous: Vec<ContinuousDim>,
    pub discrete: Vec<DiscreteAxis>,
    /// Supplies values for variables the grid omits.
    pub initial: State,
    /// Suggested `[lower, upper)` per continuous dimension.
    pub recommended_bounds: Vec<(f64, f64)>,
    pub cost_variable: Option<String>,
    /// Names accepted by [`Model::is_safe`]. Every model also accepts `true`.
    pub properties: Vec<String>,
}

impl ModelDescriptor {
    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.actions
            .iter()
            .position(|a| a == name)
            .map(|i| ActionId(i as u8))
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn has_property(&self, name: &str) -> bool {
        name == TRIVIAL_PROPERTY || self.properties.iter().any(|p| p == name)
    }

    /// Checks dimension counts and discrete ranges of `state`.
    pub fn check_state(&self, state: &State) -> Result<(), ModelError> {
        if state.continuous.len() != self.continuous.len()
            || state.discrete.len() != self.discrete.len()
        {
            return Err(ModelError::Dimension {
                expected: (self.continuous.len(), self.discrete.len()),
                found: (state.continuous.len(), state.discrete.len()),
            });
        }
        if !state.is_finite() {
            return Err(ModelError::NonFinite);
        }
        for (v, axis) in state.discrete.iter().zip(&self.discrete) {
            if *v >= axis.cardinality() {
                return Err(ModelError::Domain(format!(
                    "{} = {} exceeds cardinality {}",
                    axis.name,
                    v,
                    axis.cardinality()
                )));
            }
        }
        Ok(())
    }

    pub fn check_action(&self, action: ActionId) -> Result<(), ModelError> {
        if action.index() < self.actions.len() {
            Ok(())
        } else {
            Err(ModelError::InvalidAction {
                index: action.index(),
                count: self.actions.len(),
            })
        }
    }
}

/// Property name that holds in every state.
pub const TRIVIAL_PROPERTY: &str = "true";

/// Result of simulating one controller decision.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionStepOutcome {
    pub next: State,
    pub cost: f64,
    /// Model time consumed, in seconds.
    pub elapsed: f64,
    /// An absorbing location was reached.
    pub terminal: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("action index {index} out of range (model has {count} actions)")]
    InvalidAction { index: usize, count: usize },
    #[error("state has non-finite coordinates")]
    NonFinite,
    #[error("state dimensions {found:?} do not match model dimensions {expected:?}")]
    Dimension {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("state outside the model domain: {0}")]
    Domain(String),
    #[error("unknown safety property `{0}`")]
    UnknownProperty(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("invalid model parameter: {0}")]
    Parameter(String),
}

/// A Euclidean MDP given as a simulator.
///
/// Implementations are immutable; `step` is pure given its random stream, so
/// it may be called concurrently with independent streams.
pub trait Model: Send + Sync {
    fn descriptor(&self) -> &ModelDescriptor;

    /// Applies `action` in `state` and simulates until the controller's next
    /// choice point.
    fn step(
        &self,
        state: &State,
        action: ActionId,
        rng: &mut SimRng,
    ) -> Result<DecisionStepOutcome, ModelError>;

    /// Evaluates a model-specific property; `true` is handled by [`Model::is_safe`].
    fn check_property(&self, state: &State, property: &str) -> Result<bool, ModelError>;

    fn is_safe(&self, state: &State, property: &str) -> Result<bool, ModelError> {
        if property == TRIVIAL_PROPERTY {
            return Ok(true);
        }
        self.check_property(state, property)
    }

    /// Maps a physical state into the coordinates this model exposes.
    fn transform(&self, state: &State) -> Result<State, ModelError> {
        Ok(state.clone())
    }

    fn inverse_transform(&self, state: &State) -> Result<State, ModelError> {
        Ok(state.clone())
    }
}
