//! Bouncing ball that a player may hit to keep it in the air.
//!
//! Flight between decisions is integrated in closed form; ground contact is
//! found as the positive root of `p + v t - g t^2 / 2 = 0`. Each bounce
//! reverses and randomly damps the velocity; a bounce slower than
//! `stop_velocity` ends in the absorbing `Stop` location.

use rand::Rng;

use super::{apply_overrides, ParamOverrides};
use crate::model::{
    ActionId, ContinuousDim, DecisionStepOutcome, DiscreteAxis, Model, ModelDescriptor,
    ModelError, SimRng, State,
};

pub const IN_AIR: u32 = 0;
pub const STOP: u32 = 1;

const HIT: ActionId = ActionId(0);

/// Slack tolerated when the energy map is inverted at the ground.
const INVERSE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BouncingBallParams {
    pub gravity: f64,
    /// Upper end of the decision period, in seconds.
    pub period: f64,
    /// Lower end of the decision period; equal to `period` for periodic control.
    pub period_min: f64,
    pub damping_min: f64,
    pub damping_span: f64,
    pub stop_velocity: f64,
    pub hit_height: f64,
    pub hit_velocity: f64,
    pub hit_cost: f64,
    pub initial_position: f64,
    pub initial_velocity: f64,
}

impl Default for BouncingBallParams {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            period: 0.1,
            period_min: 0.1,
            damping_min: 0.85,
            damping_span: 0.10,
            stop_velocity: 1.0,
            hit_height: 4.0,
            hit_velocity: 4.0,
            hit_cost: 1.0,
            initial_position: 7.0,
            initial_velocity: 0.0,
        }
    }
}

impl BouncingBallParams {
    /// Decision period drawn uniformly from `[0.05, 0.1)`.
    pub fn nonperiodic() -> Self {
        Self {
            period_min: 0.05,
            ..Self::default()
        }
    }

    pub fn with_overrides(mut self, overrides: &ParamOverrides) -> Result<Self, ModelError> {
        apply_overrides(
            overrides,
            &mut [
                ("gravity", &mut self.gravity),
                ("period", &mut self.period),
                ("period_min", &mut self.period_min),
                ("damping_min", &mut self.damping_min),
                ("damping_span", &mut self.damping_span),
                ("stop_velocity", &mut self.stop_velocity),
                ("hit_height", &mut self.hit_height),
                ("hit_velocity", &mut self.hit_velocity),
                ("hit_cost", &mut self.hit_cost),
                ("initial_position", &mut self.initial_position),
                ("initial_velocity", &mut self.initial_velocity),
            ],
        )?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::Parameter(msg.to_string()));
        if self.gravity <= 0.0 {
            return bad("gravity must be positive");
        }
        if !(self.period_min > 0.0 && self.period_min <= self.period) {
            return bad("need 0 < period_min <= period");
        }
        if self.damping_min <= 0.0 || self.damping_span < 0.0 {
            return bad("damping must be positive");
        }
        if self.initial_position < 0.0 {
            return bad("initial_position must be non-negative");
        }
        Ok(())
    }

    fn draw_period(&self, rng: &mut SimRng) -> f64 {
        if self.period_min < self.period {
            rng.random_range(self.period_min..self.period)
        } else {
            self.period
        }
    }
}

#[derive(Debug, Clone)]
pub struct BouncingBall {
    params: BouncingBallParams,
    descriptor: ModelDescriptor,
}

fn location_axis() -> DiscreteAxis {
    DiscreteAxis {
        name: "loc".into(),
        values: vec!["InAir".into(), "Stop".into()],
    }
}

fn actions() -> Vec<String> {
    vec!["hit".into(), "nohit".into()]
}

impl BouncingBall {
    pub fn new(params: BouncingBallParams) -> Result<Self, ModelError> {
        params.validate()?;
        let name = if params.period_min < params.period {
            "bouncing-ball-nonperiodic"
        } else {
            "bouncing-ball"
        };
        let descriptor = ModelDescriptor {
            name: name.into(),
            actions: actions(),
            continuous: vec![
                ContinuousDim {
                    name: "p".into(),
                    unit: "m".into(),
                },
                ContinuousDim {
                    name: "v".into(),
                    unit: "m/s".into(),
                },
            ],
            discrete: vec![location_axis()],
            initial: State::new(&[params.initial_position, params.initial_velocity], &[IN_AIR]),
            recommended_bounds: vec![(0.0, 11.0), (-13.0, 13.0)],
            cost_variable: Some("c".into()),
            properties: vec!["!Stop".into(), "safe".into()],
        };
        Ok(Self { params, descriptor })
    }

    pub fn params(&self) -> &BouncingBallParams {
        &self.params
    }

    /// Mechanical energy per unit mass.
    pub fn energy(&self, p: f64, v: f64) -> f64 {
        self.params.gravity * p + 0.5 * v * v
    }

    /// Advances `(p, v)` in the air for `duration` seconds, bouncing on the
    /// ground. Returns the new state and the time actually spent, which is
    /// shorter than `duration` when the ball stops.
    fn fly(&self, mut p: f64, mut v: f64, duration: f64, rng: &mut SimRng) -> (State, f64) {
        let g = self.params.gravity;
        let mut left = duration;
        loop {
            let to_ground = (v + (v * v + 2.0 * g * p).sqrt()) / g;
            if to_ground >= left {
                p = (p + v * left - 0.5 * g * left * left).max(0.0);
                v -= g * left;
                return (State::new(&[p, v], &[IN_AIR]), duration);
            }
            left -= to_ground;
            let impact = v - g * to_ground;
            let damping = self.params.damping_min + self.params.damping_span * rng.random::<f64>();
            let rebound = -damping * impact;
            if rebound < self.params.stop_velocity {
                return (State::new(&[0.0, 0.0], &[STOP]), duration - left);
            }
            p = 0.0;
            v = rebound;
        }
    }
}

impl Model for BouncingBall {
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
        if state.discrete[0] == STOP {
            return Ok(DecisionStepOutcome {
                next: state.clone(),
                cost: 0.0,
                elapsed: 0.0,
                terminal: true,
            });
        }
        let p = state.continuous[0];
        let mut v = state.continuous[1];
        if p < 0.0 {
            return Err(ModelError::Domain(format!("position {p} below ground")));
        }
        let mut cost = 0.0;
        if action == HIT {
            cost = self.params.hit_cost;
            if p >= self.params.hit_height {
                v = if v >= 0.0 {
                    -self.params.hit_velocity
                } else {
                    v - self.params.hit_velocity
                };
            }
        }
        let period = self.params.draw_period(rng);
        let (next, elapsed) = self.fly(p, v, period, rng);
        let terminal = next.discrete[0] == STOP;
        Ok(DecisionStepOutcome {
            next,
            cost,
            elapsed,
            terminal,
        })
    }

    fn check_property(&self, state: &State, property: &str) -> Result<bool, ModelError> {
        match property {
            "!Stop" | "safe" => Ok(state.discrete[0] != STOP),
            other => Err(ModelError::UnknownProperty(other.to_string())),
        }
    }
}

/// The bouncing ball in energy coordinates `(e, v)` with
/// `e = g p + v^2 / 2`.
///
/// Successors are computed by mapping back to `(p, v)`, simulating, and
/// mapping forward again.
#[derive(Debug, Clone)]
pub struct BouncingBallEnergy {
    inner: BouncingBall,
    descriptor: ModelDescriptor,
}

impl BouncingBallEnergy {
    pub fn new(params: BouncingBallParams) -> Result<Self, ModelError> {
        let inner = BouncingBall::new(params)?;
        let physical = &inner.descriptor.initial;
        let e0 = inner.energy(physical.continuous[0], physical.continuous[1]);
        let descriptor = ModelDescriptor {
            name: "bouncing-ball-energy".into(),
            actions: actions(),
            continuous: vec![
                ContinuousDim {
                    name: "e".into(),
                    unit: "J/kg".into(),
                },
                ContinuousDim {
                    name: "v".into(),
                    unit: "m/s".into(),
                },
            ],
            discrete: vec![location_axis()],
            initial: State::new(&[e0, physical.continuous[1]], &[IN_AIR]),
            recommended_bounds: vec![(0.0, 100.0), (-13.0, 13.0)],
            cost_variable: Some("c".into()),
            properties: vec!["!Stop".into(), "safe".into()],
        };
        Ok(Self { inner, descriptor })
    }

    pub fn physical(&self) -> &BouncingBall {
        &self.inner
    }
}

impl Model for BouncingBallEnergy {
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
        let physical = self.inverse_transform(state)?;
        let outcome = self.inner.step(&physical, action, rng)?;
        Ok(DecisionStepOutcome {
            next: self.transform(&outcome.next)?,
            ..outcome
        })
    }

    fn check_property(&self, state: &State, property: &str) -> Result<bool, ModelError> {
        self.inner.check_property(state, property)
    }

    /// `(p, v) -> (e, v)`.
    fn transform(&self, state: &State) -> Result<State, ModelError> {
        self.inner.descriptor.check_state(state)?;
        let (p, v) = (state.continuous[0], state.continuous[1]);
        if p < 0.0 {
            return Err(ModelError::Domain(format!("position {p} below ground")));
        }
        Ok(State::new(&[self.inner.energy(p, v), v], &state.discrete))
    }

    /// `(e, v) -> (p, v)`, defined for `e >= v^2 / 2`.
    fn inverse_transform(&self, state: &State) -> Result<State, ModelError> {
        self.descriptor.check_state(state)?;
        let (e, v) = (state.continuous[0], state.continuous[1]);
        let p = (e - 0.5 * v * v) / self.inner.params.gravity;
        if p < -INVERSE_SLACK {
            return Err(ModelError::Domain(format!(
                "energy {e} below kinetic energy of velocity {v}"
            )));
        }
        Ok(State::new(&[p.max(0.0), v], &state.discrete))
    }
}
