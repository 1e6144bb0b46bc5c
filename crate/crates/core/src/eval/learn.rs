//! Tabular Q-learning over grid cells, with exploration and greedy choice
//! restricted to the actions a shield allows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{allowed_actions, uniform_in, EvalError, Fallback};
use crate::grid::{GridSpec, StateMap};
use crate::model::{ActionId, ActionSet, Model, State};
use crate::seeding;
use crate::shield::Shield;

/// Action values per grid cell; states outside the grid share one row.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPolicy {
    grid: GridSpec,
    map: StateMap,
    num_actions: usize,
    q: Vec<f64>,
}

impl GridPolicy {
    pub fn new(grid: GridSpec, model: &dyn Model) -> Result<Self, EvalError> {
        let desc = model.descriptor();
        let map = StateMap::new(grid.axes(), desc)
            .map_err(|e| EvalError::InvalidArgument(format!("learning grid: {e}")))?;
        let rows = grid.out_id() as usize + 1;
        Ok(Self {
            num_actions: desc.num_actions(),
            q: vec![0.0; rows * desc.num_actions()],
            grid,
            map,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn row(&self, state: &State) -> usize {
        let id = self
            .grid
            .id_of_point(&self.map.project(state))
            .unwrap_or(self.grid.out_id());
        id as usize * self.num_actions
    }

    pub fn value(&self, state: &State, action: ActionId) -> f64 {
        self.q[self.row(state) + action.index()]
    }

    /// Highest-valued action in `allowed`; ties go to the lowest index.
    pub fn greedy(&self, state: &State, allowed: ActionSet) -> ActionId {
        let row = self.row(state);
        let mut best: Option<(f64, ActionId)> = None;
        for a in allowed.iter() {
            let v = self.q[row + a.index()];
            if best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, a));
            }
        }
        best.expect("nonempty action set").1
    }

    fn max_value(&self, row: usize, allowed: ActionSet) -> f64 {
        allowed
            .iter()
            .map(|a| self.q[row + a.index()])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub property: String,
    pub episodes: u32,
    pub horizon: f64,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub fallback: Fallback,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            property: "true".into(),
            episodes: 2000,
            horizon: 120.0,
            learning_rate: 0.1,
            discount: 0.99,
            epsilon_start: 0.3,
            epsilon_end: 0.01,
            fallback: Fallback::AllowAll,
            seed: 0,
        }
    }
}

impl LearnConfig {
    /// Exploration rate for `episode`, decaying geometrically.
    pub fn epsilon(&self, episode: u32) -> f64 {
        if self.episodes <= 1 {
            return self.epsilon_start;
        }
        let frac = episode as f64 / (self.episodes - 1) as f64;
        self.epsilon_start * (self.epsilon_end / self.epsilon_start).powf(frac)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnMetrics {
    pub episode_costs: Vec<f64>,
    /// Episodes that visited a state violating the property.
    pub unsafe_episodes: u64,
    pub steps: u64,
}

/// Learns a greedy grid policy by epsilon-greedy Q-learning with reward
/// equal to the negative cost. Exploration and bootstrapping only consider
/// actions the shield allows.
pub fn learn_under_shield(
    model: &dyn Model,
    shield: Option<&Shield>,
    grid: GridSpec,
    config: &LearnConfig,
) -> Result<(GridPolicy, LearnMetrics), EvalError> {
    if !(config.horizon > 0.0) || config.episodes == 0 {
        return Err(EvalError::InvalidArgument("need a positive horizon and at least one episode".into()));
    }
    let mut policy = GridPolicy::new(grid, model)?;
    let na = policy.num_actions;
    let mut metrics = LearnMetrics {
        episode_costs: Vec::with_capacity(config.episodes as usize),
        unsafe_episodes: 0,
        steps: 0,
    };
    for episode in 0..config.episodes {
        let mut rng = seeding::rng_for(config.seed, &[episode as u64]);
        let eps = config.epsilon(episode);
        let mut state = model.descriptor().initial.clone();
        let mut safe = model.is_safe(&state, &config.property)?;
        let (mut time, mut cost) = (0.0, 0.0);
        let mut allowed = allowed_actions(shield, config.fallback, na, &state, time)?;
        while time < config.horizon {
            let action = if rng.random::<f64>() < eps {
                uniform_in(allowed, &mut rng)
            } else {
                policy.greedy(&state, allowed)
            };
            let out = model.step(&state, action, &mut rng)?;
            metrics.steps += 1;
            time += out.elapsed;
            cost += out.cost;
            safe &= model.is_safe(&out.next, &config.property)?;

            let row = policy.row(&state);
            let next_allowed = allowed_actions(shield, config.fallback, na, &out.next, time)?;
            let target = if out.terminal {
                -out.cost
            } else {
                -out.cost + config.discount * policy.max_value(policy.row(&out.next), next_allowed)
            };
            let q = &mut policy.q[row + action.index()];
            *q += config.learning_rate * (target - *q);

            state = out.next;
            allowed = next_allowed;
            if out.terminal || out.elapsed <= 0.0 {
                break;
            }
        }
        metrics.unsafe_episodes += u64::from(!safe);
        metrics.episode_costs.push(cost);
    }
    Ok((policy, metrics))
}
