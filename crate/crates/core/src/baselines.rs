//! The compared schemes: the joint design, the three reduced baselines, and
//! the TDMA and collocated systems.
//!
//! Every scheme is a short-term oracle plus a rule for `theta`. Schemes with
//! an optimized `theta` run the long-term loop; the others use the dB
//! midpoint of the accuracy range. `T_e` is then measured on fresh
//! realizations shared by all schemes of the same root seed.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::link::LinkModel;
use crate::netmodel::{substream, ColocatedScenario, PathLossParams, Scenario, SystemParams};
use crate::perfmodel::FlParams;
use crate::sca::{ScaParams, ShortTermOutcome, ShortTermProblem};
use crate::two_timescale::{algorithm3, LongTermConfig, LongTermOutcome, ShortTermSample};

/// Stream of the evaluation realizations, one `u64` seed each.
pub const EVALUATION_STREAM: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SchemeId {
    Joint,
    Bl1,
    Bl2,
    Bl3,
    Tdma,
    Collocated,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] = [Self::Joint, Self::Bl1, Self::Bl2, Self::Bl3, Self::Tdma, Self::Collocated];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Joint => "JOINT",
            Self::Bl1 => "BL1",
            Self::Bl2 => "BL2",
            Self::Bl3 => "BL3",
            Self::Tdma => "TDMA",
            Self::Collocated => "COLLOCATED",
        }
    }

    /// Whether the long-term loop picks `theta`.
    pub fn optimizes_theta(self) -> bool {
        !matches!(self, Self::Bl1 | Self::Bl3)
    }

    /// Whether powers come from the SCA loop rather than the equal split.
    pub fn optimizes_power(self) -> bool {
        !matches!(self, Self::Bl1 | Self::Bl2)
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = match s.trim().to_ascii_uppercase().as_str() {
            "CF" => "JOINT".to_string(),
            "COLOCATED" => "COLLOCATED".to_string(),
            other => other.to_string(),
        };
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == up)
            .ok_or_else(|| invalid(format!("unknown scheme '{s}'")))
    }
}

/// The fixed accuracy of BL1 and BL3: the midpoint of the range in dB.
pub fn midpoint_theta(flp: &FlParams) -> f64 {
    10f64.powf(0.5 * (flp.theta_min.log10() + flp.theta_max.log10()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotScheme {
    /// Each UE picks one of `tau_t` pilots uniformly.
    #[default]
    Random,
    /// Every UE on its own pilot (needs `tau_t >= K`).
    Orthogonal,
}

/// Everything a scheme needs besides the seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeContext {
    pub sys: SystemParams,
    pub pl: PathLossParams,
    pub flp: FlParams,
    pub sca: ScaParams,
    pub num_aps: usize,
    pub num_ues: usize,
    pub pilots: PilotScheme,
    /// TDMA pilot length.
    pub tdma_tau_t: usize,
    /// TDMA pilot SNR; `None` keeps the cell-free one.
    pub tdma_rho_t: Option<f64>,
}

impl SchemeContext {
    pub fn new(sys: SystemParams, flp: FlParams, num_aps: usize, num_ues: usize) -> Self {
        Self {
            sys,
            pl: PathLossParams::default(),
            flp,
            sca: ScaParams::default(),
            num_aps,
            num_ues,
            pilots: PilotScheme::Random,
            tdma_tau_t: 1,
            tdma_rho_t: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sys.validate()?;
        self.pl.validate()?;
        self.flp.validate()?;
        self.sca.validate()?;
        if self.num_aps == 0 || self.num_ues == 0 {
            return Err(invalid("need at least one AP and one UE"));
        }
        if self.pilots == PilotScheme::Orthogonal && self.sys.tau_t < self.num_ues {
            return Err(invalid(format!(
                "orthogonal pilots need tau_t >= K, got tau_t={} K={}",
                self.sys.tau_t, self.num_ues
            )));
        }
        if self.tdma_rho_t.is_some_and(|r| !(r > 0.0)) {
            return Err(invalid("TDMA pilot SNR must be positive"));
        }
        Ok(())
    }

    /// The cell-free realization behind `seed`.
    pub fn scenario(&self, seed: u64) -> Result<Scenario> {
        let sc = Scenario::generate(&self.sys, &self.pl, self.num_aps, self.num_ues, seed)?;
        match self.pilots {
            PilotScheme::Random => Ok(sc),
            PilotScheme::Orthogonal => sc.with_orthogonal_pilots(self.sys.tau_t, self.sys.rho_t),
        }
    }

    /// Rate model of `scheme` on the realization behind `seed`. TDMA reuses
    /// the cell-free placement and shadowing with one pilot slot per UE.
    pub fn link(&self, scheme: SchemeId, seed: u64) -> Result<LinkModel> {
        match scheme {
            SchemeId::Tdma => {
                let sc = Scenario::generate(&self.sys, &self.pl, self.num_aps, self.num_ues, seed)?;
                let rho = self.tdma_rho_t.unwrap_or(self.sys.rho_t);
                let sc = sc.with_orthogonal_pilots(self.tdma_tau_t, rho)?;
                LinkModel::tdma(&sc, &self.sys, self.tdma_tau_t)
            }
            SchemeId::Collocated => {
                let sc = ColocatedScenario::generate(&self.sys, &self.pl, self.num_aps, self.num_ues, seed)?;
                Ok(LinkModel::colocated(&sc, &self.sys))
            }
            _ => Ok(LinkModel::cell_free(&self.scenario(seed)?, &self.sys)),
        }
    }

    pub fn problem(&self, scheme: SchemeId, seed: u64, theta: f64) -> Result<ShortTermProblem> {
        ShortTermProblem::new(self.link(scheme, seed)?, &self.sys, &self.flp, theta)
    }

    /// Short-term solve of `scheme` at `theta`: the SCA loop, or the closed
    /// form at equal powers for BL1/BL2.
    pub fn short_term(&self, scheme: SchemeId, seed: u64, theta: f64) -> Result<ShortTermOutcome> {
        let st = self.problem(scheme, seed, theta)?;
        if scheme.optimizes_power() {
            st.algorithm2(&self.sca, None)
        } else {
            let (w, u) = st.equal_power();
            st.fixed_power(&w, &u)
        }
    }

    pub fn sample(&self, scheme: SchemeId, seed: u64, theta: f64) -> Result<ShortTermSample> {
        let out = self.short_term(scheme, seed, theta)?;
        Ok(sample_of(&out, theta))
    }

    /// `theta` of `scheme`: the long-term loop or the fixed midpoint.
    pub fn choose_theta(&self, scheme: SchemeId, cfg: &LongTermConfig, root_seed: u64) -> Result<ThetaChoice> {
        self.validate()?;
        if !scheme.optimizes_theta() {
            return Ok(ThetaChoice { theta: midpoint_theta(&self.flp), outer: None });
        }
        let oracle = |seed: u64, theta: f64| self.sample(scheme, seed, theta);
        let outer = algorithm3(&oracle, &self.flp, cfg, root_seed)?;
        Ok(ThetaChoice { theta: outer.theta, outer: Some(outer) })
    }

    /// `T_e` of `scheme` at `theta` on one realization.
    pub fn effective_time(&self, scheme: SchemeId, seed: u64, theta: f64) -> Result<f64> {
        let out = self.short_term(scheme, seed, theta)?;
        Ok(self.flp.effective_factor() * out.time)
    }

    pub fn run(&self, scheme: SchemeId, cfg: &LongTermConfig, root_seed: u64, n_eval: usize) -> Result<SchemeRun> {
        let choice = self.choose_theta(scheme, cfg, root_seed)?;
        let t_e = evaluation_seeds(root_seed, n_eval)
            .into_iter()
            .map(|seed| self.effective_time(scheme, seed, choice.theta))
            .collect();
        Ok(SchemeRun { scheme, theta: choice.theta, outer: choice.outer, t_e })
    }
}

/// `(T, a, b)` of a short-term solution; `b` is the compute time per unit
/// of `ln(1/theta)`.
pub fn sample_of(out: &ShortTermOutcome, theta: f64) -> ShortTermSample {
    ShortTermSample {
        time: out.time,
        a: out.latency.transmission_time(),
        b: out.latency.t_c / (1.0 / theta).ln(),
    }
}

/// Seeds of the `n` evaluation realizations of `root_seed`.
pub fn evaluation_seeds(root_seed: u64, n: usize) -> Vec<u64> {
    let mut rng = substream(root_seed, EVALUATION_STREAM);
    (0..n).map(|_| rng.next_u64()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaChoice {
    pub theta: f64,
    pub outer: Option<LongTermOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRun {
    pub scheme: SchemeId,
    pub theta: f64,
    pub outer: Option<LongTermOutcome>,
    /// Per evaluation realization.
    pub t_e: Vec<Result<f64>>,
}

impl SchemeRun {
    pub fn ok_values(&self) -> Vec<f64> {
        self.t_e.iter().filter_map(|r| r.as_ref().ok().copied()).collect()
    }
}

/// Means over the realizations where both schemes succeeded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedMeans {
    pub common: usize,
    pub excluded: usize,
    pub mean_a: f64,
    pub mean_b: f64,
}

impl PairedMeans {
    pub fn ratio(&self) -> f64 {
        self.mean_a / self.mean_b
    }
}

pub fn paired_means(a: &[Result<f64>], b: &[Result<f64>]) -> Result<PairedMeans> {
    if a.len() != b.len() {
        return Err(invalid("paired comparison needs equally many realizations"));
    }
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| match (x, y) {
            (Ok(x), Ok(y)) => Some((*x, *y)),
            _ => None,
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::InfeasibleScenario("no realization feasible for both schemes".into()));
    }
    let n = pairs.len() as f64;
    Ok(PairedMeans {
        common: pairs.len(),
        excluded: a.len() - pairs.len(),
        mean_a: pairs.iter().map(|p| p.0).sum::<f64>() / n,
        mean_b: pairs.iter().map(|p| p.1).sum::<f64>() / n,
    })
}
