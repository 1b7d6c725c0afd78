//! Fixtures shared by the benchmarks.

use cffl_core::link::LinkModel;
use cffl_core::netmodel::{PathLossParams, Scenario, SystemParams};
use cffl_core::perfmodel::FlParams;
use cffl_core::sca::ShortTermProblem;

/// Short-term problem on a generated cell-free scenario with default
/// parameters.
pub fn problem(m: usize, k: usize, seed: u64, theta: f64) -> ShortTermProblem {
    let sys = SystemParams::default();
    let sc = Scenario::generate(&sys, &PathLossParams::default(), m, k, seed).expect("scenario");
    ShortTermProblem::new(LinkModel::cell_free(&sc, &sys), &sys, &FlParams::default(), theta).expect("problem")
}
