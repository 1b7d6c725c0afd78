//! Closed-form rate, latency, computation and energy models.
//!
//! Everything here is in SI units: bits, bit/s, seconds, joules, cycles/s.
//! Rates use `log2`; the local/global iteration counts use the natural log.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::netmodel::{db_to_linear, ColocatedScenario, Scenario, SystemParams};

/// Bits per megabyte (decimal).
pub const BITS_PER_MB: f64 = 8e6;

/// Federated-learning and device constants. All UEs share the same data size,
/// cycle count (`D_k = D`, `c_k = c`) and energy budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlParams {
    pub s_d_bits: f64,
    pub s_u_bits: f64,
    /// Local data set size `D_k` in samples.
    pub samples: f64,
    /// Processing cycles per sample `c_k`.
    pub cycles_per_sample: f64,
    pub nu: f64,
    pub vartheta: f64,
    pub eps_global: f64,
    /// Effective capacitance `alpha`; computing energy is `L (alpha/2) c D f^2`.
    pub alpha: f64,
    pub e_max_j: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl Default for FlParams {
    /// 5 MB updates, 10 MB of local data read as 1e7 samples, 20 cycles per
    /// sample, 15 J budget, 1 MHz-3 GHz processing, theta in [-60, -10] dB.
    fn default() -> Self {
        Self {
            s_d_bits: 5.0 * BITS_PER_MB,
            s_u_bits: 5.0 * BITS_PER_MB,
            samples: 1e7,
            cycles_per_sample: 20.0,
            nu: 1.0,
            vartheta: 1.0,
            eps_global: 1e-2,
            alpha: 2e-28,
            e_max_j: 15.0,
            f_min: 1e6,
            f_max: 3e9,
            theta_min: db_to_linear(-60.0),
            theta_max: db_to_linear(-10.0),
        }
    }
}

impl FlParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.theta_min && self.theta_min <= self.theta_max && self.theta_max < 1.0) {
            return Err(invalid("need 0 < theta_min <= theta_max < 1"));
        }
        if !(self.s_d_bits > 0.0 && self.s_u_bits > 0.0) {
            return Err(invalid("payload sizes must be positive"));
        }
        if !(self.f_min > 0.0 && self.f_min <= self.f_max) {
            return Err(invalid("need 0 < f_min <= f_max"));
        }
        if !(self.eps_global > 0.0 && self.eps_global < 1.0) {
            return Err(invalid("global accuracy must lie in (0, 1)"));
        }
        for (name, v) in [
            ("samples", self.samples),
            ("cycles per sample", self.cycles_per_sample),
            ("nu", self.nu),
            ("vartheta", self.vartheta),
            ("alpha", self.alpha),
            ("energy budget", self.e_max_j),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `D_k c_k`, cycles needed for one pass over the local data.
    pub fn cycles_per_pass(&self) -> f64 {
        self.samples * self.cycles_per_sample
    }

    /// `vartheta ln(1/eps)`, the factor turning `T` into `T_e`.
    pub fn effective_factor(&self) -> f64 {
        self.vartheta * (1.0 / self.eps_global).ln()
    }
}

/// One operating point: powers, frequencies, rates and local accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVars {
    /// `M x K` DL power coefficients (`1 x K` for a collocated array).
    pub eta: DMatrix<f64>,
    pub zeta: Vec<f64>,
    pub f: Vec<f64>,
    pub r_d: Vec<f64>,
    pub r_u: Vec<f64>,
    pub theta: f64,
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// Cell-free DL rates under conjugate beamforming (bit/s).
pub fn dl_rate_cf(eta: &DMatrix<f64>, sc: &Scenario, sys: &SystemParams) -> Vec<f64> {
    let (m, k) = sc.beta.shape();
    let pre = sys.payload_fraction() * sys.bandwidth_hz;
    let rho = sys.rho_d;
    let coherent = |l: usize, k: usize| -> f64 {
        (0..m).map(|mi| eta[(mi, l)].sqrt() * sc.sigma2[(mi, l)] * sc.beta[(mi, k)] / sc.beta[(mi, l)]).sum()
    };
    (0..k)
        .map(|ki| {
            let signal: f64 = (0..m).map(|mi| eta[(mi, ki)].sqrt() * sc.sigma2[(mi, ki)]).sum::<f64>();
            let num = rho * signal * signal;
            let mut den = 1.0;
            for l in 0..k {
                if l != ki && sc.pilot_corr[(l, ki)] != 0.0 {
                    let c = coherent(l, ki);
                    den += rho * c * c * sc.pilot_corr[(l, ki)];
                }
                for mi in 0..m {
                    den += rho * eta[(mi, l)] * sc.sigma2[(mi, l)] * sc.beta[(mi, ki)];
                }
            }
            pre * log2_1p(num / den)
        })
        .collect()
}

/// Cell-free UL rates under matched filtering (bit/s).
pub fn ul_rate_cf(zeta: &[f64], sc: &Scenario, sys: &SystemParams) -> Vec<f64> {
    let (m, k) = sc.beta.shape();
    let pre = sys.payload_fraction() * sys.bandwidth_hz;
    let rho = sys.rho_u;
    (0..k)
        .map(|ki| {
            let s: f64 = (0..m).map(|mi| sc.sigma2[(mi, ki)]).sum();
            let num = rho * zeta[ki] * s * s;
            let mut den = s;
            for l in 0..k {
                if l != ki && sc.pilot_corr[(ki, l)] != 0.0 {
                    let c: f64 = (0..m).map(|mi| sc.sigma2[(mi, ki)] * sc.beta[(mi, l)] / sc.beta[(mi, ki)]).sum();
                    den += rho * zeta[l] * c * c * sc.pilot_corr[(ki, l)];
                }
                den += rho * zeta[l] * (0..m).map(|mi| sc.sigma2[(mi, ki)] * sc.beta[(mi, l)]).sum::<f64>();
            }
            pre * log2_1p(num / den)
        })
        .collect()
}

fn tdma_prefactor(sys: &SystemParams, tau_tdma: usize, k: usize) -> f64 {
    (sys.tau_c - tau_tdma) as f64 / (k as f64 * sys.tau_c as f64) * sys.bandwidth_hz
}

/// Cell-free TDMA DL rates. `sc` must carry the TDMA estimate variances
/// (see [`Scenario::with_orthogonal_pilots`]); `tau_tdma` is the TDMA pilot
/// length.
pub fn dl_rate_tdma(eta: &DMatrix<f64>, sc: &Scenario, sys: &SystemParams, tau_tdma: usize) -> Vec<f64> {
    let (m, k) = sc.beta.shape();
    let pre = tdma_prefactor(sys, tau_tdma, k);
    let rho = sys.rho_d;
    (0..k)
        .map(|ki| {
            let signal: f64 = (0..m).map(|mi| eta[(mi, ki)].sqrt() * sc.sigma2[(mi, ki)]).sum();
            let den: f64 = 1.0 + (0..m).map(|mi| rho * eta[(mi, ki)] * sc.sigma2[(mi, ki)] * sc.beta[(mi, ki)]).sum::<f64>();
            pre * log2_1p(rho * signal * signal / den)
        })
        .collect()
}

pub fn ul_rate_tdma(zeta: &[f64], sc: &Scenario, sys: &SystemParams, tau_tdma: usize) -> Vec<f64> {
    let (m, k) = sc.beta.shape();
    let pre = tdma_prefactor(sys, tau_tdma, k);
    let rho = sys.rho_u;
    (0..k)
        .map(|ki| {
            let s: f64 = (0..m).map(|mi| sc.sigma2[(mi, ki)]).sum();
            let sb: f64 = (0..m).map(|mi| sc.sigma2[(mi, ki)] * sc.beta[(mi, ki)]).sum();
            pre * log2_1p(rho * zeta[ki] * s * s / (rho * zeta[ki] * sb + s))
        })
        .collect()
}

/// Collocated-array DL rates; `eta` holds one coefficient per UE.
pub fn dl_rate_colocated(eta: &[f64], sc: &ColocatedScenario, sys: &SystemParams) -> Vec<f64> {
    let k = sc.num_ues();
    let m = sc.num_antennas as f64;
    let pre = sys.payload_fraction() * sys.bandwidth_hz;
    let rho = sys.rho_d;
    (0..k)
        .map(|ki| {
            let num = rho * m * eta[ki] * sc.sigma2[ki] * sc.sigma2[ki];
            let mut den = 1.0;
            for l in 0..k {
                if l != ki {
                    let c = sc.sigma2[l] * sc.beta[ki] / sc.beta[l];
                    den += rho * m * eta[l] * c * c * sc.pilot_corr[(l, ki)];
                }
                den += rho * eta[l] * sc.sigma2[l] * sc.beta[ki];
            }
            pre * log2_1p(num / den)
        })
        .collect()
}

pub fn ul_rate_colocated(zeta: &[f64], sc: &ColocatedScenario, sys: &SystemParams) -> Vec<f64> {
    let k = sc.num_ues();
    let m = sc.num_antennas as f64;
    let pre = sys.payload_fraction() * sys.bandwidth_hz;
    let rho = sys.rho_u;
    (0..k)
        .map(|ki| {
            let num = rho * m * zeta[ki] * sc.sigma2[ki];
            let mut den = 1.0;
            for l in 0..k {
                if l != ki {
                    let r = sc.beta[l] / sc.beta[ki];
                    den += rho * zeta[l] * m * sc.sigma2[ki] * r * r * sc.pilot_corr[(ki, l)];
                }
                den += rho * zeta[l] * sc.beta[l];
            }
            pre * log2_1p(num / den)
        })
        .collect()
}

/// Local iteration count `nu ln(1/theta)`, defined on `(0, 1]`.
pub fn local_iters(theta: f64, nu: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(invalid(format!("local accuracy must lie in (0, 1], got {theta}")));
    }
    Ok(nu * (1.0 / theta).ln())
}

/// Global iteration count `vartheta ln(1/eps) / (1 - theta)`.
pub fn global_iters(theta: f64, vartheta: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid(format!("global accuracy must lie in (0, 1], got {eps}")));
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::InfeasibleEvaluation(format!("global iterations diverge at theta = {theta}")));
    }
    Ok(vartheta * (1.0 / eps).ln() / (1.0 - theta))
}

/// How per-UE wireless latencies combine within one FL iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatencyMode {
    /// All UEs are served simultaneously; the slowest one counts.
    Parallel,
    /// UEs are served in turn (TDMA); latencies add up.
    Sequential,
}

/// The five latency components of one FL iteration (seconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyTerms {
    pub t_db: f64,
    pub t_dw: f64,
    pub t_c: f64,
    pub t_uw: f64,
    pub t_ub: f64,
}

impl LatencyTerms {
    /// Per-iteration time `T_G`.
    pub fn iteration_time(&self) -> f64 {
        self.t_db + self.t_dw + self.t_c + self.t_uw + self.t_ub
    }

    /// Transmission part `a = T_G - t_C`.
    pub fn transmission_time(&self) -> f64 {
        self.t_db + self.t_dw + self.t_uw + self.t_ub
    }
}

fn check_positive(name: &str, v: &[f64]) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::InfeasibleEvaluation(format!("{name} must be positive, got {x}")));
    }
    Ok(())
}

pub fn latency_terms(r_d: &[f64], r_u: &[f64], f: &[f64], theta: f64, flp: &FlParams) -> Result<LatencyTerms> {
    latency_terms_with(r_d, r_u, f, theta, flp, LatencyMode::Parallel)
}

pub fn latency_terms_with(
    r_d: &[f64],
    r_u: &[f64],
    f: &[f64],
    theta: f64,
    flp: &FlParams,
    mode: LatencyMode,
) -> Result<LatencyTerms> {
    check_positive("DL rate", r_d)?;
    check_positive("UL rate", r_u)?;
    check_positive("frequency", f)?;
    let k = r_d.len() as f64;
    let combine = |it: &mut dyn Iterator<Item = f64>| match mode {
        LatencyMode::Parallel => it.fold(0.0, f64::max),
        LatencyMode::Sequential => it.sum(),
    };
    let l = local_iters(theta, flp.nu)?;
    let dc = flp.cycles_per_pass();
    Ok(LatencyTerms {
        t_db: k * flp.s_d_bits / r_d.iter().sum::<f64>(),
        t_dw: combine(&mut r_d.iter().map(|r| flp.s_d_bits / r)),
        t_c: f.iter().map(|fk| l * dc / fk).fold(0.0, f64::max),
        t_uw: combine(&mut r_u.iter().map(|r| flp.s_u_bits / r)),
        t_ub: k * flp.s_u_bits / r_u.iter().sum::<f64>(),
    })
}

/// Per-UE `(E_T, E_C)` in joules.
pub fn energy_terms(
    zeta: &[f64],
    r_u: &[f64],
    f: &[f64],
    theta: f64,
    flp: &FlParams,
    sys: &SystemParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_positive("UL rate", r_u)?;
    let p_ul = sys.rho_u * sys.noise_power_w;
    let l = local_iters(theta, flp.nu)?;
    let e_t = zeta.iter().zip(r_u).map(|(z, r)| p_ul * z * flp.s_u_bits / r).collect();
    let e_c = f.iter().map(|fk| l * 0.5 * flp.alpha * flp.cycles_per_pass() * fk * fk).collect();
    Ok((e_t, e_c))
}

/// `T = T_G / (1 - theta)`.
pub fn scaled_time(t_g: f64, theta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::InfeasibleEvaluation(format!("scaled time diverges at theta = {theta}")));
    }
    Ok(t_g / (1.0 - theta))
}

/// `T_e = vartheta ln(1/eps) E{T}` from per-realization samples of `T`.
pub fn effective_time(samples_t: &[f64], flp: &FlParams) -> Result<f64> {
    if samples_t.is_empty() {
        return Err(invalid("need at least one realization"));
    }
    let mean = samples_t.iter().sum::<f64>() / samples_t.len() as f64;
    Ok(flp.effective_factor() * mean)
}
