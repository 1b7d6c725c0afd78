//! Quadratic-over-affine view of the DL and UL SINRs shared by the cell-free,
//! TDMA and collocated systems.
//!
//! DL powers enter through `w`, one entry per power coefficient, scaled so
//! that every transmit-power constraint reads `sum_{i in group} w_i^2 <= 1`.
//! The DL SINR of UE `k` is `Y_k^2 / P_k` with `Y_k = a_k^T w` and
//! `P_k = sum_l (b_kl^T w)^2 + sum_i d_ki w_i^2 + 1`. UL powers enter through
//! `u = sqrt(zeta)`, with SINR `(c_k u_k)^2 / (sum_l q_kl u_l^2 + 1)`.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::netmodel::{ColocatedScenario, Scenario, SystemParams};
use crate::perfmodel::LatencyMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum SystemKind {
    CellFree,
    Tdma,
    Colocated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlTerms {
    pub upsilon: Vec<(usize, f64)>,
    pub contamination: Vec<Vec<(usize, f64)>>,
    pub diag: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UlTerms {
    pub psi: f64,
    pub xi: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    pub kind: SystemKind,
    pub num_ues: usize,
    pub num_w: usize,
    pub power_groups: Vec<Vec<usize>>,
    /// Bandwidth times payload fraction, so rate = prefactor * log2(1 + SINR).
    pub dl_prefactor: f64,
    pub ul_prefactor: f64,
    pub dl: Vec<DlTerms>,
    pub ul: Vec<UlTerms>,
    pub latency: LatencyMode,
    /// `eta[(row, col)] = factor * w_i^2` for each `w_i`.
    eta_map: Vec<(usize, usize, f64)>,
    eta_shape: (usize, usize),
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

impl LinkModel {
    /// Cell-free network; `w_{mK+k} = sigma_mk sqrt(eta_mk)`.
    pub fn cell_free(sc: &Scenario, sys: &SystemParams) -> Self {
        Self::distributed(sc, sys, SystemKind::CellFree, sys.payload_fraction() * sys.bandwidth_hz)
    }

    /// Cell-free TDMA. `sc` must carry the TDMA estimate variances.
    pub fn tdma(sc: &Scenario, sys: &SystemParams, tau_tdma: usize) -> Result<Self> {
        let k = sc.num_ues();
        if tau_tdma == 0 || tau_tdma >= sys.tau_c {
            return Err(invalid("TDMA pilot length must lie in [1, tau_c)"));
        }
        let pre = (sys.tau_c - tau_tdma) as f64 / (k as f64 * sys.tau_c as f64) * sys.bandwidth_hz;
        Ok(Self::distributed(sc, sys, SystemKind::Tdma, pre))
    }

    fn distributed(sc: &Scenario, sys: &SystemParams, kind: SystemKind, pre: f64) -> Self {
        let (m, k) = sc.beta.shape();
        let tdma = kind == SystemKind::Tdma;
        let idx = |mi: usize, ki: usize| mi * k + ki;
        let sd = sys.rho_d.sqrt();
        let sigma = sc.sigma2.map(f64::sqrt);
        let mut dl = Vec::with_capacity(k);
        let mut ul = Vec::with_capacity(k);
        for ki in 0..k {
            let upsilon = (0..m).map(|mi| (idx(mi, ki), sd * sigma[(mi, ki)])).collect();
            let mut contamination = Vec::new();
            let mut diag = Vec::new();
            for l in 0..k {
                if !tdma && l != ki && sc.pilot_corr[(l, ki)] != 0.0 {
                    let c = sc.pilot_corr[(l, ki)].sqrt();
                    contamination.push(
                        (0..m)
                            .map(|mi| (idx(mi, l), c * sd * sigma[(mi, l)] * sc.beta[(mi, ki)] / sc.beta[(mi, l)]))
                            .collect(),
                    );
                }
                if !tdma || l == ki {
                    diag.extend((0..m).map(|mi| (idx(mi, l), sys.rho_d * sc.beta[(mi, ki)])));
                }
            }
            dl.push(DlTerms { upsilon, contamination, diag });

            let s: f64 = (0..m).map(|mi| sc.sigma2[(mi, ki)]).sum();
            let mut xi = Vec::new();
            for l in 0..k {
                if tdma && l != ki {
                    continue;
                }
                let mut q = sys.rho_u * (0..m).map(|mi| sc.sigma2[(mi, ki)] * sc.beta[(mi, l)]).sum::<f64>() / s;
                if l != ki && sc.pilot_corr[(ki, l)] != 0.0 {
                    let c: f64 = (0..m).map(|mi| sc.sigma2[(mi, ki)] * sc.beta[(mi, l)] / sc.beta[(mi, ki)]).sum();
                    q += sys.rho_u * c * c * sc.pilot_corr[(ki, l)] / s;
                }
                xi.push((l, q));
            }
            ul.push(UlTerms { psi: (sys.rho_u * s).sqrt(), xi });
        }
        let power_groups = if tdma {
            (0..m * k).map(|i| vec![i]).collect()
        } else {
            (0..m).map(|mi| (0..k).map(|ki| idx(mi, ki)).collect()).collect()
        };
        let eta_map = (0..m)
            .flat_map(|mi| (0..k).map(move |ki| (mi, ki)))
            .map(|(mi, ki)| (mi, ki, 1.0 / sc.sigma2[(mi, ki)]))
            .collect();
        Self {
            kind,
            num_ues: k,
            num_w: m * k,
            power_groups,
            dl_prefactor: pre,
            ul_prefactor: pre,
            dl,
            ul,
            latency: if tdma { LatencyMode::Sequential } else { LatencyMode::Parallel },
            eta_map,
            eta_shape: (m, k),
        }
    }

    /// Collocated array of `M` antennas; `w_k = sigma_k sqrt(eta_k / M)`.
    pub fn colocated(sc: &ColocatedScenario, sys: &SystemParams) -> Self {
        let k = sc.num_ues();
        let m = sc.num_antennas as f64;
        let sd = sys.rho_d.sqrt();
        let sigma: Vec<f64> = sc.sigma2.iter().map(|s| s.sqrt()).collect();
        let mut dl = Vec::with_capacity(k);
        let mut ul = Vec::with_capacity(k);
        for ki in 0..k {
            let mut contamination = Vec::new();
            for l in 0..k {
                if l != ki && sc.pilot_corr[(l, ki)] != 0.0 {
                    let c = sc.pilot_corr[(l, ki)].sqrt() * sd * m * sigma[l] * sc.beta[ki] / sc.beta[l];
                    contamination.push(vec![(l, c)]);
                }
            }
            dl.push(DlTerms {
                upsilon: vec![(ki, sd * m * sigma[ki])],
                contamination,
                diag: (0..k).map(|l| (l, sys.rho_d * m * sc.beta[ki])).collect(),
            });
            let xi = (0..k)
                .map(|l| {
                    let mut q = sys.rho_u * sc.beta[l];
                    if l != ki {
                        let r = sc.beta[l] / sc.beta[ki];
                        q += sys.rho_u * m * sc.sigma2[ki] * r * r * sc.pilot_corr[(ki, l)];
                    }
                    (l, q)
                })
                .collect();
            ul.push(UlTerms { psi: (sys.rho_u * m * sc.sigma2[ki]).sqrt(), xi });
        }
        let pre = sys.payload_fraction() * sys.bandwidth_hz;
        Self {
            kind: SystemKind::Colocated,
            num_ues: k,
            num_w: k,
            power_groups: vec![(0..k).collect()],
            dl_prefactor: pre,
            ul_prefactor: pre,
            dl,
            ul,
            latency: LatencyMode::Parallel,
            eta_map: (0..k).map(|ki| (0, ki, m / sc.sigma2[ki])).collect(),
            eta_shape: (1, k),
        }
    }

    pub fn upsilon(&self, k: usize, w: &[f64]) -> f64 {
        self.dl[k].upsilon.iter().map(|&(i, a)| a * w[i]).sum()
    }

    pub fn pi(&self, k: usize, w: &[f64]) -> f64 {
        let t = &self.dl[k];
        let mut p = 1.0;
        for b in &t.contamination {
            let v: f64 = b.iter().map(|&(i, c)| c * w[i]).sum();
            p += v * v;
        }
        p + t.diag.iter().map(|&(i, d)| d * w[i] * w[i]).sum::<f64>()
    }

    pub fn psi(&self, k: usize, u: &[f64]) -> f64 {
        self.ul[k].psi * u[k]
    }

    pub fn xi(&self, k: usize, u: &[f64]) -> f64 {
        1.0 + self.ul[k].xi.iter().map(|&(l, q)| q * u[l] * u[l]).sum::<f64>()
    }

    pub fn dl_rates(&self, w: &[f64]) -> Vec<f64> {
        (0..self.num_ues)
            .map(|k| {
                let y = self.upsilon(k, w);
                self.dl_prefactor * log2_1p(y * y / self.pi(k, w))
            })
            .collect()
    }

    pub fn ul_rates(&self, u: &[f64]) -> Vec<f64> {
        (0..self.num_ues)
            .map(|k| {
                let y = self.psi(k, u);
                self.ul_prefactor * log2_1p(y * y / self.xi(k, u))
            })
            .collect()
    }

    /// Largest `sum_{i in group} w_i^2` over the power groups.
    pub fn max_power_load(&self, w: &[f64]) -> f64 {
        self.power_groups
            .iter()
            .map(|g| g.iter().map(|&i| w[i] * w[i]).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn eta_from_w(&self, w: &[f64]) -> DMatrix<f64> {
        let mut eta = DMatrix::zeros(self.eta_shape.0, self.eta_shape.1);
        for (i, &(r, c, s)) in self.eta_map.iter().enumerate() {
            eta[(r, c)] = s * w[i] * w[i];
        }
        eta
    }

    pub fn w_from_eta(&self, eta: &DMatrix<f64>) -> Result<Vec<f64>> {
        if eta.shape() != self.eta_shape {
            return Err(invalid("power matrix has the wrong shape"));
        }
        Ok(self.eta_map.iter().map(|&(r, c, s)| (eta[(r, c)].max(0.0) / s).sqrt()).collect())
    }

    /// Uniform load `w_i^2 = load / |group|` in every power group.
    pub fn uniform_w(&self, load: f64) -> Vec<f64> {
        let mut w = vec![0.0; self.num_w];
        for g in &self.power_groups {
            let v = (load / g.len() as f64).sqrt();
            for &i in g {
                w[i] = v;
            }
        }
        w
    }
}
