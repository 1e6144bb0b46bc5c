//! Running strategies on models: single runs, batched safety and cost
//! estimates with confidence intervals, and tabular learning within a
//! shield.

mod learn;
mod stats;

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActionId, ActionSet, Model, ModelError, SimRng, State};
use crate::seeding;
use crate::shield::Shield;

pub use learn::{learn_under_shield, GridPolicy, LearnConfig, LearnMetrics};
pub use stats::{clopper_pearson, student_t_half_width};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("shield allows no action at t = {time:.3} in state {state}")]
    EmptyShield { time: f64, state: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What a shielded strategy does where the shield allows nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    #[default]
    Abort,
    AllowAll,
}

#[derive(Debug, Clone)]
pub enum Strategy {
    /// Always the same action, ignoring any shield.
    Fixed(ActionId),
    /// Uniform over the shield's actions, or over all actions without one.
    Random {
        shield: Option<Arc<Shield>>,
        fallback: Fallback,
    },
    /// Greedy in a learned table, restricted to the shield's actions.
    Policy {
        policy: Arc<GridPolicy>,
        shield: Option<Arc<Shield>>,
        fallback: Fallback,
    },
}

/// Actions a shield allows at `state`; states outside the shield's domain
/// are unconstrained.
pub(crate) fn allowed_actions(
    shield: Option<&Shield>,
    fallback: Fallback,
    num_actions: usize,
    state: &State,
    time: f64,
) -> Result<ActionSet, EvalError> {
    let all = ActionSet::all(num_actions);
    match shield.and_then(|s| s.allowed(state)) {
        None => Ok(all),
        Some(set) if !set.is_empty() => Ok(set),
        Some(_) => match fallback {
            Fallback::AllowAll => Ok(all),
            Fallback::Abort => Err(EvalError::EmptyShield {
                time,
                state: format!("{:?} {:?}", state.continuous.as_slice(), state.discrete.as_slice()),
            }),
        },
    }
}

pub(crate) fn uniform_in(set: ActionSet, rng: &mut SimRng) -> ActionId {
    set.nth(rng.random_range(0..set.len())).expect("nonempty set")
}

impl Strategy {
    pub fn choose(&self, model: &dyn Model, state: &State, time: f64, rng: &mut SimRng) -> Result<ActionId, EvalError> {
        let na = model.descriptor().num_actions();
        match self {
            Strategy::Fixed(a) => Ok(*a),
            Strategy::Random { shield, fallback } => {
                let set = allowed_actions(shield.as_deref(), *fallback, na, state, time)?;
                Ok(uniform_in(set, rng))
            }
            Strategy::Policy {
                policy,
                shield,
                fallback,
            } => {
                let set = allowed_actions(shield.as_deref(), *fallback, na, state, time)?;
                Ok(policy.greedy(state, set))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub time: f64,
    pub state: State,
    /// Action chosen at this point; `None` for the final state.
    pub action: Option<ActionId>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub safe: bool,
    pub cost: f64,
    pub steps: u64,
    pub time: f64,
    pub trace: Vec<TracePoint>,
}

/// Simulates one run from the model's initial state until `horizon`
/// seconds have elapsed or an absorbing state is reached. The run is
/// unsafe if any visited state violates `property`.
pub fn run_simulation(
    model: &dyn Model,
    strategy: &Strategy,
    property: &str,
    horizon: f64,
    rng: &mut SimRng,
    record_trace: bool,
) -> Result<RunOutcome, EvalError> {
    if !(horizon > 0.0) {
        return Err(EvalError::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let mut state = model.descriptor().initial.clone();
    let mut safe = model.is_safe(&state, property)?;
    let (mut time, mut cost, mut steps) = (0.0, 0.0, 0u64);
    let mut trace = Vec::new();
    while time < horizon {
        let action = strategy.choose(model, &state, time, rng)?;
        if record_trace {
            trace.push(TracePoint {
                time,
                state: state.clone(),
                action: Some(action),
                cost,
            });
        }
        let out = model.step(&state, action, rng)?;
        steps += 1;
        time += out.elapsed;
        cost += out.cost;
        state = out.next;
        safe &= model.is_safe(&state, property)?;
        if out.terminal || out.elapsed <= 0.0 {
            break;
        }
    }
    if record_trace {
        trace.push(TracePoint {
            time,
            state,
            action: None,
            cost,
        });
    }
    Ok(RunOutcome {
        safe,
        cost,
        steps,
        time,
        trace,
    })
}

/// Aggregate of a batch of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatistics {
    pub runs: u64,
    pub violations: u64,
    pub confidence: f64,
    /// Clopper–Pearson interval for the probability of a violation.
    pub violation_interval: (f64, f64),
    pub mean_cost: f64,
    pub cost_std_dev: f64,
    /// Student-t half-width for the mean cost; zero for a single run.
    pub cost_half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    pub property: String,
    pub runs: u64,
    pub horizon: f64,
    pub confidence: f64,
    pub seed: u64,
}

/// Runs `config.runs` independent simulations in parallel, run `i` seeded
/// from `(seed, i)`, and summarises them.
pub fn estimate(model: &dyn Model, strategy: &Strategy, config: &BatchConfig) -> Result<RunStatistics, EvalError> {
    if config.runs == 0 {
        return Err(EvalError::InvalidArgument("need at least one run".into()));
    }
    if !(config.confidence > 0.0 && config.confidence < 1.0) {
        return Err(EvalError::InvalidArgument(format!(
            "confidence must lie in (0, 1), got {}",
            config.confidence
        )));
    }
    let outcomes: Vec<(bool, f64)> = (0..config.runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeding::rng_for(config.seed, &[i]);
            run_simulation(model, strategy, &config.property, config.horizon, &mut rng, false)
                .map(|o| (o.safe, o.cost))
        })
        .collect::<Result<_, _>>()?;
    let n = config.runs;
    let violations = outcomes.iter().filter(|(safe, _)| !safe).count() as u64;
    let mean = outcomes.iter().map(|(_, c)| c).sum::<f64>() / n as f64;
    let std_dev = if n > 1 {
        (outcomes.iter().map(|(_, c)| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(RunStatistics {
        runs: n,
        violations,
        confidence: config.confidence,
        violation_interval: clopper_pearson(violations, n, config.confidence),
        mean_cost: mean,
        cost_std_dev: std_dev,
        cost_half_width: if n > 1 {
            student_t_half_width(std_dev, n, config.confidence)
        } else {
            0.0
        },
    })
}

/// [`estimate`] for the violation probability.
pub fn estimate_safety(model: &dyn Model, strategy: &Strategy, config: &BatchConfig) -> Result<RunStatistics, EvalError> {
    estimate(model, strategy, config)
}

/// [`estimate`] for the expected cost; needs at least two runs.
pub fn estimate_cost(model: &dyn Model, strategy: &Strategy, config: &BatchConfig) -> Result<RunStatistics, EvalError> {
    if config.runs < 2 {
        return Err(EvalError::InvalidArgument("a cost interval needs at least two runs".into()));
    }
    estimate(model, strategy, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{self, ParamOverrides};

    fn ball() -> Box<dyn Model> {
        models::by_name("bouncing-ball", &ParamOverrides::new()).unwrap()
    }

    #[test]
    fn short_horizon_is_one_step() {
        let m = ball();
        let mut rng = seeding::rng_for(1, &[]);
        let out = run_simulation(m.as_ref(), &Strategy::Fixed(ActionId(1)), "!Stop", 0.05, &mut rng, true).unwrap();
        assert_eq!(out.steps, 1);
        assert_eq!(out.trace.len(), 2);
        assert!((out.time - 0.1).abs() < 1e-12);
    }

    #[test]
    fn never_hitting_stops_the_ball() {
        let m = ball();
        let mut rng = seeding::rng_for(5, &[]);
        let out = run_simulation(m.as_ref(), &Strategy::Fixed(ActionId(1)), "!Stop", 120.0, &mut rng, false).unwrap();
        assert!(!out.safe);
        assert_eq!(out.cost, 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let m = ball();
        let mut rng = seeding::rng_for(5, &[]);
        assert!(run_simulation(m.as_ref(), &Strategy::Fixed(ActionId(1)), "!Stop", 0.0, &mut rng, false).is_err());
        let cfg = BatchConfig {
            property: "!Stop".into(),
            runs: 1,
            horizon: 1.0,
            confidence: 0.99,
            seed: 0,
        };
        assert!(estimate_cost(m.as_ref(), &Strategy::Fixed(ActionId(1)), &cfg).is_err());
        assert!(estimate_safety(m.as_ref(), &Strategy::Fixed(ActionId(1)), &BatchConfig { confidence: 1.0, ..cfg }).is_err());
    }

    #[test]
    fn constant_cost_has_zero_width() {
        // Hitting from the initial height costs exactly one per step.
        let m = ball();
        let cfg = BatchConfig {
            property: "true".into(),
            runs: 20,
            horizon: 0.05,
            confidence: 0.95,
            seed: 3,
        };
        let s = estimate_cost(m.as_ref(), &Strategy::Fixed(ActionId(0)), &cfg).unwrap();
        assert_eq!(s.mean_cost, 1.0);
        assert_eq!(s.cost_half_width, 0.0);
        assert_eq!(s.violations, 0);
    }

    #[test]
    fn batches_are_reproducible() {
        let m = ball();
        let strategy = Strategy::Random {
            shield: None,
            fallback: Fallback::Abort,
        };
        let cfg = BatchConfig {
            property: "!Stop".into(),
            runs: 50,
            horizon: 20.0,
            confidence: 0.99,
            seed: 11,
        };
        assert_eq!(
            estimate(m.as_ref(), &strategy, &cfg).unwrap(),
            estimate(m.as_ref(), &strategy, &cfg).unwrap()
        );
    }
}
