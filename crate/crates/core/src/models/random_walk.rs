//! Random walk: reach `x >= 1` before the clock `t` reaches 1, choosing
//! between a fast-but-expensive and a slow-but-cheap move.

use rand::Rng;

use super::{apply_overrides, ParamOverrides};
use crate::model::{
    ActionId, ContinuousDim, DecisionStepOutcome, Model, ModelDescriptor, ModelError, SimRng,
    State,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalkParams {
    pub goal: f64,
    pub deadline: f64,
    pub fast_dx_min: f64,
    pub fast_dx_max: f64,
    pub fast_dt_min: f64,
    pub fast_dt_max: f64,
    pub fast_cost: f64,
    pub slow_dx_min: f64,
    pub slow_dx_max: f64,
    pub slow_dt_min: f64,
    pub slow_dt_max: f64,
    pub slow_cost: f64,
}

impl Default for RandomWalkParams {
    fn default() -> Self {
        Self {
            goal: 1.0,
            deadline: 1.0,
            fast_dx_min: 0.15,
            fast_dx_max: 0.25,
            fast_dt_min: 0.05,
            fast_dt_max: 0.15,
            fast_cost: 3.0,
            slow_dx_min: 0.05,
            slow_dx_max: 0.15,
            slow_dt_min: 0.15,
            slow_dt_max: 0.25,
            slow_cost: 1.0,
        }
    }
}

impl RandomWalkParams {
    pub fn with_overrides(mut self, overrides: &ParamOverrides) -> Result<Self, ModelError> {
        apply_overrides(
            overrides,
            &mut [
                ("goal", &mut self.goal),
                ("deadline", &mut self.deadline),
                ("fast_dx_min", &mut self.fast_dx_min),
                ("fast_dx_max", &mut self.fast_dx_max),
                ("fast_dt_min", &mut self.fast_dt_min),
                ("fast_dt_max", &mut self.fast_dt_max),
                ("fast_cost", &mut self.fast_cost),
                ("slow_dx_min", &mut self.slow_dx_min),
                ("slow_dx_max", &mut self.slow_dx_max),
                ("slow_dt_min", &mut self.slow_dt_min),
                ("slow_dt_max", &mut self.slow_dt_max),
                ("slow_cost", &mut self.slow_cost),
            ],
        )?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let ranges = [
            (self.fast_dx_min, self.fast_dx_max),
            (self.fast_dt_min, self.fast_dt_max),
            (self.slow_dx_min, self.slow_dx_max),
            (self.slow_dt_min, self.slow_dt_max),
        ];
        if ranges.iter().any(|&(lo, hi)| !(lo > 0.0 && lo < hi)) {
            return Err(ModelError::Parameter(
                "move ranges need 0 < min < max".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RandomWalk {
    params: RandomWalkParams,
    descriptor: ModelDescriptor,
}

impl RandomWalk {
    pub fn new(params: RandomWalkParams) -> Result<Self, ModelError> {
        params.validate()?;
        let descriptor = ModelDescriptor {
            name: "random-walk".into(),
            actions: vec!["fast".into(), "slow".into()],
            continuous: vec![
                ContinuousDim {
                    name: "x".into(),
                    unit: "".into(),
                },
                ContinuousDim {
                    name: "t".into(),
                    unit: "s".into(),
                },
            ],
            discrete: vec![],
            initial: State::new(&[0.0, 0.0], &[]),
            recommended_bounds: vec![(0.0, 1.2), (0.0, 1.2)],
            cost_variable: Some("c".into()),
            properties: vec!["!Late".into(), "safe".into()],
        };
        Ok(Self { params, descriptor })
    }
}

impl Model for RandomWalk {
    fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    fn step(
        &self,
        state: &State,
        action: ActionId,
        rng: &mut SimRng,
    ) -> Result<DecisionStepOutcome, ModelError> {
        self.descriptor.check_action(action)?;
        self.descriptor.check_state(state)?;
        let (x, t) = (state.continuous[0], state.continuous[1]);
        if x >= self.params.goal {
            return Ok(DecisionStepOutcome {
                next: state.clone(),
                cost: 0.0,
                elapsed: 0.0,
                terminal: true,
            });
        }
        let p = &self.params;
        let (dx, dt, cost) = match action.0 {
            0 => (
                rng.random_range(p.fast_dx_min..p.fast_dx_max),
                rng.random_range(p.fast_dt_min..p.fast_dt_max),
                p.fast_cost,
            ),
            _ => (
                rng.random_range(p.slow_dx_min..p.slow_dx_max),
                rng.random_range(p.slow_dt_min..p.slow_dt_max),
                p.slow_cost,
            ),
        };
        let next = State::new(&[x + dx, t + dt], &[]);
        Ok(DecisionStepOutcome {
            terminal: next.continuous[0] >= p.goal,
            next,
            cost,
            elapsed: dt,
        })
    }

    fn check_property(&self, state: &State, property: &str) -> Result<bool, ModelError> {
        match property {
            "!Late" | "safe" => Ok(
                state.continuous[0] >= self.params.goal || state.continuous[1] < self.params.deadline
            ),
            other => Err(ModelError::UnknownProperty(other.to_string())),
        }
    }
}
