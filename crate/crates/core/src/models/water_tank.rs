//! Water tank with a periodically varying outflow and an on/off pump.
//! Fully deterministic.

use std::f64::consts::PI;

use super::{apply_overrides, ParamOverrides};
use crate::model::{
    ActionId, ContinuousDim, DecisionStepOutcome, DiscreteAxis, Model, ModelDescriptor,
    ModelError, SimRng, State,
};

pub const PHASES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct WaterTankParams {
    pub pump_rate: f64,
    pub outflow_base: f64,
    pub outflow_amplitude: f64,
    pub low: f64,
    pub high: f64,
    pub period: f64,
    pub pump_cost: f64,
    pub initial_level: f64,
}

impl Default for WaterTankParams {
    fn default() -> Self {
        Self {
            pump_rate: 5.0,
            outflow_base: 3.0,
            outflow_amplitude: 2.0,
            low: 10.0,
            high: 90.0,
            period: 1.0,
            pump_cost: 1.0,
            initial_level: 50.0,
        }
    }
}

impl WaterTankParams {
    pub fn with_overrides(mut self, overrides: &ParamOverrides) -> Result<Self, ModelError> {
        apply_overrides(
            overrides,
            &mut [
                ("pump_rate", &mut self.pump_rate),
                ("outflow_base", &mut self.outflow_base),
                ("outflow_amplitude", &mut self.outflow_amplitude),
                ("low", &mut self.low),
                ("high", &mut self.high),
                ("period", &mut self.period),
                ("pump_cost", &mut self.pump_cost),
                ("initial_level", &mut self.initial_level),
            ],
        )?;
        Ok(self)
    }
}

#[derive(Debug, Clone)]
pub struct WaterTank {
    params: WaterTankParams,
    outflow: [f64; PHASES],
    descriptor: ModelDescriptor,
}

impl WaterTank {
    pub fn new(params: WaterTankParams) -> Result<Self, ModelError> {
        if params.low >= params.high || params.period <= 0.0 {
            return Err(ModelError::Parameter(
                "need low < high and a positive period".into(),
            ));
        }
        let mut outflow = [0.0; PHASES];
        for (k, slot) in outflow.iter_mut().enumerate() {
            *slot = params.outflow_base
                + params.outflow_amplitude * (2.0 * PI * k as f64 / PHASES as f64).sin();
        }
        let descriptor = ModelDescriptor {
            name: "water-tank".into(),
            actions: vec!["off".into(), "on".into()],
            continuous: vec![ContinuousDim {
                name: "level".into(),
                unit: "l".into(),
            }],
            discrete: vec![DiscreteAxis {
                name: "phase".into(),
                values: (0..PHASES).map(|k| format!("P{k}")).collect(),
            }],
            initial: State::new(&[params.initial_level], &[0]),
            recommended_bounds: vec![(0.0, 100.0)],
            cost_variable: Some("c".into()),
            properties: vec!["InRange".into(), "safe".into()],
        };
        Ok(Self {
            params,
            outflow,
            descriptor,
        })
    }

    pub fn outflow(&self, phase: u32) -> f64 {
        self.outflow[phase as usize % PHASES]
    }
}

impl Model for WaterTank {
    fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    fn step(
        &self,
        state: &State,
        action: ActionId,
        _rng: &mut SimRng,
    ) -> Result<DecisionStepOutcome, ModelError> {
        self.descriptor.check_action(action)?;
        self.descriptor.check_state(state)?;
        let phase = state.discrete[0];
        let pump_on = action.0 == 1;
        let inflow = if pump_on { self.params.pump_rate } else { 0.0 };
        let level = state.continuous[0] + inflow - self.outflow(phase);
        Ok(DecisionStepOutcome {
            next: State::new(&[level], &[(phase + 1) % PHASES as u32]),
            cost: if pump_on { self.params.pump_cost } else { 0.0 },
            elapsed: self.params.period,
            terminal: false,
        })
    }

    fn check_property(&self, state: &State, property: &str) -> Result<bool, ModelError> {
        match property {
            "InRange" | "safe" => {
                let level = state.continuous[0];
                Ok(level >= self.params.low && level <= self.params.high)
            }
            other => Err(ModelError::UnknownProperty(other.to_string())),
        }
    }
}
