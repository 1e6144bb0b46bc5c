//! CSV export of simulation traces: a header row, then one row per
//! decision point.

use std::fmt::Write as _;

use gridshield::eval::TracePoint;
use gridshield::ModelDescriptor;

/// Header naming the run, time, every state variable, the chosen action
/// and the accumulated cost.
pub fn header(model: &ModelDescriptor) -> String {
    let mut cols = vec!["run".to_string(), "time".to_string()];
    cols.extend(model.continuous.iter().map(|c| c.name.clone()));
    cols.extend(model.discrete.iter().map(|d| d.name.clone()));
    cols.push("action".into());
    cols.push("cost".into());
    cols.join(",")
}

/// Rows for one run. Discrete variables and actions are written by name;
/// the final state has an empty action.
pub fn rows(model: &ModelDescriptor, run: u64, trace: &[TracePoint]) -> String {
    let mut out = String::new();
    for p in trace {
        let _ = write!(out, "{run},{}", p.time);
        for x in &p.state.continuous {
            let _ = write!(out, ",{x}");
        }
        for (axis, &v) in model.discrete.iter().zip(&p.state.discrete) {
            let name = axis.values.get(v as usize).map_or_else(|| v.to_string(), Clone::clone);
            let _ = write!(out, ",{name}");
        }
        let action = p.action.map_or("", |a| model.actions[a.index()].as_str());
        let _ = writeln!(out, ",{action},{}", p.cost);
    }
    out
}

#[cfg(test)]
mod tests {
    use gridshield::eval::{run_simulation, Strategy};
    use gridshield::models::{self, ParamOverrides};
    use gridshield::{seeding, ActionId};

    use super::*;

    #[test]
    fn one_step_trace() {
        let model = models::by_name("bouncing-ball", &ParamOverrides::new()).unwrap();
        let mut rng = seeding::rng_for(0, &[]);
        let out = run_simulation(model.as_ref(), &Strategy::Fixed(ActionId(1)), "!Stop", 0.05, &mut rng, true).unwrap();
        let d = model.descriptor();
        let text = rows(d, 7, &out.trace);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(header(d).split(',').count(), lines[0].split(',').count());
        assert!(lines[0].starts_with("7,0,"));
        assert!(lines[1].ends_with(",,0"));
    }
}
