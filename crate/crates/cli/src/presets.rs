//! Named experiment setups. Each one changes only the fields its figure
//! states; everything else keeps [`ExperimentConfig::default`].

use cffl_core::baselines::{PilotScheme, SchemeId};

use crate::config::{ExperimentConfig, Sweep, SweepVar};
use crate::HarnessError;

pub const NAMES: [&str; 9] = ["fig4", "fig5", "fig6", "theta_max", "f_max", "e_max", "tau_t", "fig8", "fig9"];

const BASELINES: [SchemeId; 4] = [SchemeId::Joint, SchemeId::Bl1, SchemeId::Bl2, SchemeId::Bl3];

fn sweep(variable: SweepVar, values: &[f64]) -> Sweep {
    Sweep { variable, values: values.to_vec() }
}

pub fn preset(name: &str) -> Result<ExperimentConfig, HarnessError> {
    let mut c = ExperimentConfig::default();
    match name {
        // outer-loop convergence on one realization stream, full 200 iterations
        "fig4" => {
            c.sweep = sweep(SweepVar::M, &[30.0, 50.0]);
            c.num_ues = 4;
            c.system.tau_t = 10;
            c.system.area_side_km = 0.5;
            c.n_realizations = 1;
            c.trace = true;
            c.long_term.early_stop_window = 0;
        }
        "fig5" => {
            c.schemes = BASELINES.to_vec();
            c.sweep = sweep(SweepVar::M, &[30.0, 50.0, 70.0, 90.0]);
            c.num_ues = 4;
        }
        "fig6" => {
            c.schemes = BASELINES.to_vec();
            c.sweep = sweep(SweepVar::K, &[2.0, 4.0, 6.0, 8.0]);
            c.num_aps = 50;
        }
        "theta_max" => {
            c.sweep = sweep(SweepVar::ThetaMax, &[-10.0, -20.0, -30.0, -40.0]);
            c.num_ues = 4;
        }
        "f_max" => {
            c.sweep = sweep(SweepVar::FMax, &[3.0e9, 2.5e9, 2.0e9, 1.5e9]);
            c.num_ues = 4;
        }
        "e_max" => {
            c.sweep = sweep(SweepVar::EMax, &[15.0, 10.0, 5.0, 2.0]);
            c.num_ues = 4;
            c.system.area_side_km = 1.0;
        }
        "tau_t" => {
            c.sweep = sweep(SweepVar::TauT, &[1.0, 4.0, 7.0, 10.0, 13.0]);
            c.num_ues = 4;
        }
        // CF with orthogonal pilots against TDMA at matched pilot energy
        "fig8" => {
            c.schemes = vec![SchemeId::Joint, SchemeId::Tdma];
            c.sweep = sweep(SweepVar::K, &[2.0, 4.0, 6.0, 8.0]);
            c.num_aps = 50;
            c.pilots = PilotScheme::Orthogonal;
            c.match_tdma_pilots = true;
        }
        "fig9" => {
            c.schemes = vec![SchemeId::Joint, SchemeId::Collocated];
            c.sweep = sweep(SweepVar::M, &[30.0, 50.0, 70.0]);
            c.num_ues = 4;
            c.system.area_side_km = 1.0;
        }
        other => {
            return Err(HarnessError::Config(format!("unknown preset {other:?}; known: {}", NAMES.join(", "))));
        }
    }
    c.preset = Some(name.to_string());
    Ok(c)
}
