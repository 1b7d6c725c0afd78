//! Long-term optimization of the local accuracy `theta`.
//!
//! Every outer iteration draws a fresh large-scale realization, solves the
//! short-term problem at the current `theta`, and feeds the resulting time `T`
//! and slope `dT/dtheta` into recursive surrogates `g` and `grad g`. The next
//! `theta` blends the current one with the minimizer of the proximal quadratic
//! `g + grad g (x - theta) + tau (x - theta)^2` over `[theta_min, theta_max]`.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::netmodel::substream;
use crate::perfmodel::FlParams;

/// RNG streams of the outer loop (see [`crate::netmodel::streams`] for the
/// per-realization ones).
pub mod streams {
    /// Per-draw realization seeds, consumed in order, one `u64` per draw.
    pub const DRAWS: u64 = 6;
    /// The starting `theta`, uniform on `[theta_min, theta_max]`.
    pub const THETA_INIT: u64 = 7;
}

/// `phi(n) = n^{-7/8}` for the surrogates and `pi(n) = 1/n` for `theta`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepSchedules;

impl StepSchedules {
    pub fn phi(n: usize) -> f64 {
        (n.max(1) as f64).powf(-7.0 / 8.0)
    }

    pub fn pi(n: usize) -> f64 {
        1.0 / n.max(1) as f64
    }
}

/// Slope of `T(theta) = (a + b ln(1/theta)) / (1 - theta)`.
pub fn grad_t(theta: f64, a: f64, b: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid(format!("theta must lie in (0, 1), got {theta}")));
    }
    if !(a >= 0.0 && b >= 0.0) {
        return Err(invalid("time coefficients must be nonnegative"));
    }
    let d = 1.0 - theta;
    Ok((a + b * (1.0 / theta).ln() - b * (1.0 / theta - 1.0)) / (d * d))
}

/// `T(theta)` for fixed transmission time `a` and compute coefficient `b`.
pub fn time_of_theta(theta: f64, a: f64, b: f64) -> f64 {
    (a + b * (1.0 / theta).ln()) / (1.0 - theta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongTermState {
    pub n: usize,
    pub theta: f64,
    pub g: f64,
    pub grad_g: f64,
    pub tau_prox: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl LongTermState {
    pub fn new(theta: f64, tau_prox: f64, theta_min: f64, theta_max: f64) -> Result<Self> {
        if !(0.0 < theta_min && theta_min <= theta_max && theta_max < 1.0) {
            return Err(invalid("need 0 < theta_min <= theta_max < 1"));
        }
        if !(theta_min..=theta_max).contains(&theta) {
            return Err(invalid(format!("theta {theta} outside [{theta_min}, {theta_max}]")));
        }
        if !(tau_prox > 0.0 && tau_prox.is_finite()) {
            return Err(invalid("proximal constant must be positive"));
        }
        Ok(Self { n: 0, theta, g: 0.0, grad_g: 0.0, tau_prox, theta_min, theta_max })
    }
}

/// `g <- (1 - phi) g + phi T`, and the same for `grad g`.
pub fn update_surrogate(state: &LongTermState, t_value: f64, grad_value: f64, phi: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(invalid(format!("surrogate weight must lie in [0, 1], got {phi}")));
    }
    Ok(((1.0 - phi) * state.g + phi * t_value, (1.0 - phi) * state.grad_g + phi * grad_value))
}

/// Minimizer of the proximal quadratic on the box.
pub fn solve_longterm(state: &LongTermState) -> f64 {
    (state.theta - state.grad_g / (2.0 * state.tau_prox)).clamp(state.theta_min, state.theta_max)
}

/// `(1 - pi) theta + pi theta_star`.
pub fn update_theta(state: &LongTermState, theta_star: f64, pi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(invalid(format!("blend weight must lie in [0, 1], got {pi}")));
    }
    Ok(((1.0 - pi) * state.theta + pi * theta_star).clamp(state.theta_min, state.theta_max))
}

/// What the outer loop needs from one short-term solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortTermSample {
    /// `T = T_G / (1 - theta)` at the solution.
    pub time: f64,
    /// Transmission part of `T_G`.
    pub a: f64,
    /// `nu max_k D c / f_k`, the compute time per unit `ln(1/theta)`.
    pub b: f64,
}

/// Solves the short-term problem for the realization behind `draw_seed`.
pub trait ShortTermOracle {
    fn sample(&self, draw_seed: u64, theta: f64) -> Result<ShortTermSample>;
}

impl<F: Fn(u64, f64) -> Result<ShortTermSample>> ShortTermOracle for F {
    fn sample(&self, draw_seed: u64, theta: f64) -> Result<ShortTermSample> {
        self(draw_seed, theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTermConfig {
    pub n_outer: usize,
    pub tau_prox: f64,
    /// Stop once `|theta change| <= early_stop_tol` for `early_stop_window`
    /// consecutive iterations (`0` disables).
    pub early_stop_tol: f64,
    pub early_stop_window: usize,
    /// Abort when resamples exceed this fraction of the draws.
    pub max_resample_rate: f64,
    /// Starting `theta`; drawn from the root seed when absent.
    pub theta_init: Option<f64>,
}

impl Default for LongTermConfig {
    fn default() -> Self {
        Self {
            n_outer: 200,
            tau_prox: 100.0,
            early_stop_tol: 1e-4,
            early_stop_window: 10,
            max_resample_rate: 0.2,
            theta_init: None,
        }
    }
}

impl LongTermConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_outer == 0 {
            return Err(invalid("need at least one outer iteration"));
        }
        if !(self.tau_prox > 0.0) || !(self.early_stop_tol >= 0.0) || !(0.0..=1.0).contains(&self.max_resample_rate) {
            return Err(invalid("bad long-term loop settings"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRow {
    pub n: usize,
    /// `theta` used for this iteration's short-term solve.
    pub theta: f64,
    pub time: f64,
    /// `vartheta ln(1/eps)` times the running mean of `time`.
    pub t_e_running: f64,
    /// Draws discarded in this iteration before a feasible one.
    pub resampled: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongTermOutcome {
    /// Final iterate.
    pub theta: f64,
    pub history: Vec<HistoryRow>,
    pub draws: usize,
    pub resamples: usize,
    pub stopped_early: bool,
    pub state: LongTermState,
}

/// Runs the outer loop, resampling realizations whose short-term problem
/// fails. Realization `j` (counting resamples) uses the `j`-th `u64` of the
/// `DRAWS` stream of `root_seed`.
pub fn algorithm3(
    oracle: &dyn ShortTermOracle,
    flp: &FlParams,
    cfg: &LongTermConfig,
    root_seed: u64,
) -> Result<LongTermOutcome> {
    flp.validate()?;
    cfg.validate()?;
    let theta0 = match cfg.theta_init {
        Some(t) => t,
        None => substream(root_seed, streams::THETA_INIT).random_range(flp.theta_min..=flp.theta_max),
    };
    let mut state = LongTermState::new(theta0, cfg.tau_prox, flp.theta_min, flp.theta_max)?;
    let mut draws_rng = substream(root_seed, streams::DRAWS);
    let mut history = Vec::with_capacity(cfg.n_outer);
    let (mut draws, mut resamples) = (0usize, 0usize);
    let mut sum_t = 0.0;
    let mut quiet = 0usize;
    let mut stopped_early = false;
    for n in 1..=cfg.n_outer {
        let mut resampled = 0;
        let sample = loop {
            let seed = draws_rng.next_u64();
            draws += 1;
            match oracle.sample(seed, state.theta) {
                Ok(s) => break s,
                Err(Error::InvalidInput(msg)) => return Err(Error::InvalidInput(msg)),
                Err(e) => {
                    resamples += 1;
                    resampled += 1;
                    log::warn!("outer iteration {n}: realization {seed:#x} resampled ({e})");
                    if draws >= 10 && resamples as f64 > cfg.max_resample_rate * draws as f64 {
                        return Err(Error::InfeasibleScenario(format!(
                            "{resamples} of {draws} realizations infeasible; last error: {e}"
                        )));
                    }
                    if resampled > 1000 {
                        return Err(Error::InfeasibleScenario(format!("no feasible realization found: {e}")));
                    }
                }
            }
        };
        sum_t += sample.time;
        history.push(HistoryRow {
            n,
            theta: state.theta,
            time: sample.time,
            t_e_running: flp.effective_factor() * sum_t / n as f64,
            resampled,
        });
        let grad = grad_t(state.theta, sample.a, sample.b)?;
        let (g, grad_g) = update_surrogate(&state, sample.time, grad, StepSchedules::phi(n))?;
        state.g = g;
        state.grad_g = grad_g;
        let theta_star = solve_longterm(&state);
        let next = update_theta(&state, theta_star, StepSchedules::pi(n))?;
        let change = (next - state.theta).abs();
        state.theta = next;
        state.n = n;
        quiet = if change <= cfg.early_stop_tol { quiet + 1 } else { 0 };
        if cfg.early_stop_window > 0 && quiet >= cfg.early_stop_window {
            stopped_early = true;
            break;
        }
    }
    log::debug!("outer loop done after {} iterations, theta {:.4e}, {resamples} resamples", state.n, state.theta);
    Ok(LongTermOutcome { theta: state.theta, history, draws, resamples, stopped_early, state })
}
