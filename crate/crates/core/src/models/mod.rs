//! Built-in models and the by-name registry.

mod bouncing_ball;
mod random_walk;
mod water_tank;

use std::collections::BTreeMap;

pub use bouncing_ball::{BouncingBall, BouncingBallEnergy, BouncingBallParams, IN_AIR, STOP};
pub use random_walk::{RandomWalk, RandomWalkParams};
pub use water_tank::{WaterTank, WaterTankParams};

use crate::model::{Model, ModelError};

/// Flat parameter overrides, as read from a JSON config document.
pub type ParamOverrides = BTreeMap<String, f64>;

pub const MODEL_NAMES: &[&str] = &[
    "bouncing-ball",
    "bouncing-ball-nonperiodic",
    "bouncing-ball-energy",
    "random-walk",
    "water-tank",
];

/// Instantiates a built-in model by name, applying parameter overrides.
pub fn by_name(name: &str, overrides: &ParamOverrides) -> Result<Box<dyn Model>, ModelError> {
    match name {
        "bouncing-ball" => {
            let params = BouncingBallParams::default().with_overrides(overrides)?;
            Ok(Box::new(BouncingBall::new(params)?))
        }
        "bouncing-ball-nonperiodic" => {
            let params = BouncingBallParams::nonperiodic().with_overrides(overrides)?;
            Ok(Box::new(BouncingBall::new(params)?))
        }
        "bouncing-ball-energy" => {
            let params = BouncingBallParams::default().with_overrides(overrides)?;
            Ok(Box::new(BouncingBallEnergy::new(params)?))
        }
        "random-walk" => {
            let params = RandomWalkParams::default().with_overrides(overrides)?;
            Ok(Box::new(RandomWalk::new(params)?))
        }
        "water-tank" => {
            let params = WaterTankParams::default().with_overrides(overrides)?;
            Ok(Box::new(WaterTank::new(params)?))
        }
        other => Err(ModelError::UnknownModel(other.to_string())),
    }
}

/// Applies `overrides` to named fields; unknown keys are rejected.
pub(crate) fn apply_overrides(
    overrides: &ParamOverrides,
    fields: &mut [(&str, &mut f64)],
) -> Result<(), ModelError> {
    for (key, value) in overrides {
        let slot = fields
            .iter_mut()
            .find(|(name, _)| name == key)
            .ok_or_else(|| ModelError::Parameter(format!("unknown parameter `{key}`")))?;
        if !value.is_finite() {
            return Err(ModelError::Parameter(format!("`{key}` must be finite")));
        }
        *slot.1 = *value;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_knows_every_name() {
        for name in MODEL_NAMES {
            let model = by_name(name, &ParamOverrides::new()).unwrap();
            assert_eq!(model.descriptor().name, *name);
            model.descriptor().check_state(&model.descriptor().initial).unwrap();
        }
        assert!(matches!(
            by_name("boost-converter", &ParamOverrides::new()),
            Err(ModelError::UnknownModel(_))
        ));
    }

    #[test]
    fn unknown_override_rejected() {
        let mut o = ParamOverrides::new();
        o.insert("no_such_knob".into(), 1.0);
        assert!(matches!(by_name("water-tank", &o), Err(ModelError::Parameter(_))));
        let mut o = ParamOverrides::new();
        o.insert("gravity".into(), 1.62);
        assert!(by_name("bouncing-ball", &o).is_ok());
    }
}
