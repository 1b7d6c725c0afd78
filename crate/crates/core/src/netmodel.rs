//! Large-scale network realizations.
//!
//! APs and UEs are dropped uniformly on a `D x D` km square whose edges wrap
//! around; each AP-UE pair gets a three-slope path loss plus i.i.d. log-normal
//! shadowing, every UE picks one of `tau_t` orthogonal pilots at random, and the
//! MMSE channel-estimate variances follow from those statistics.
//!
//! # Randomness
//!
//! All draws come from `ChaCha8Rng::seed_from_u64(seed)` with a fixed stream id
//! per purpose (see [`streams`]). AP coordinates are drawn before UE
//! coordinates, `x` before `y`; shadowing is drawn row-major over `(m, k)`.
//! The generator is portable, so a `(seed, params)` pair yields the same
//! scenario on every platform.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Stream ids used with [`ChaCha8Rng::set_stream`].
pub mod streams {
    pub const PLACEMENT: u64 = 1;
    pub const SHADOWING: u64 = 2;
    pub const PILOTS: u64 = 3;
    pub const SITE: u64 = 4;
    pub const SITE_SHADOWING: u64 = 5;
}

pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Three-slope path-loss model. Distances are in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    pub l_const_db: f64,
    pub d0_km: f64,
    pub d1_km: f64,
    pub sigma_shd_db: f64,
}

impl PathLossParams {
    pub fn new(l_const_db: f64, d0_km: f64, d1_km: f64, sigma_shd_db: f64) -> Result<Self> {
        let p = Self { l_const_db, d0_km, d1_km, sigma_shd_db };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0_km > 0.0 && self.d0_km < self.d1_km) {
            return Err(invalid(format!(
                "path loss needs 0 < d0 < d1, got d0={} d1={}",
                self.d0_km, self.d1_km
            )));
        }
        if !(self.sigma_shd_db >= 0.0) {
            return Err(invalid("shadowing deviation must be >= 0"));
        }
        Ok(())
    }
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self { l_const_db: 140.7, d0_km: 0.01, d1_km: 0.05, sigma_shd_db: 8.0 }
    }
}

/// Physical-layer constants. Powers are normalized by the noise power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Samples per coherence block.
    pub tau_c: usize,
    /// Pilot length in samples.
    pub tau_t: usize,
    pub bandwidth_hz: f64,
    pub rho_d: f64,
    pub rho_u: f64,
    pub rho_t: f64,
    pub noise_power_w: f64,
    pub area_side_km: f64,
}

/// Boltzmann constant (J/K), as used for the noise-power budget.
pub const BOLTZMANN: f64 = 1.381e-23;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl SystemParams {
    /// Builds the parameter set from transmit powers in watts; the normalized
    /// SNRs are `power / noise_power_w`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_watts(
        tau_c: usize,
        tau_t: usize,
        bandwidth_hz: f64,
        p_dl_w: f64,
        p_ul_w: f64,
        p_pilot_w: f64,
        noise_power_w: f64,
        area_side_km: f64,
    ) -> Result<Self> {
        let p = Self {
            tau_c,
            tau_t,
            bandwidth_hz,
            rho_d: p_dl_w / noise_power_w,
            rho_u: p_ul_w / noise_power_w,
            rho_t: p_pilot_w / noise_power_w,
            noise_power_w,
            area_side_km,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_t >= 1 && self.tau_t < self.tau_c) {
            return Err(invalid(format!(
                "need 1 <= tau_t < tau_c, got tau_t={} tau_c={}",
                self.tau_t, self.tau_c
            )));
        }
        for (name, v) in [
            ("bandwidth", self.bandwidth_hz),
            ("rho_d", self.rho_d),
            ("rho_u", self.rho_u),
            ("rho_t", self.rho_t),
            ("noise power", self.noise_power_w),
            ("area side", self.area_side_km),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Fraction of the coherence block left for payload, `(tau_c - tau_t) / tau_c`.
    pub fn payload_fraction(&self) -> f64 {
        (self.tau_c - self.tau_t) as f64 / self.tau_c as f64
    }

    /// Transmit powers in watts, `(DL, UL, pilot)`.
    pub fn powers_w(&self) -> (f64, f64, f64) {
        (
            self.rho_d * self.noise_power_w,
            self.rho_u * self.noise_power_w,
            self.rho_t * self.noise_power_w,
        )
    }
}

impl Default for SystemParams {
    /// 200-sample blocks, 10-sample pilots, 20 MHz, 1 W / 0.2 W / 0.2 W against
    /// a -92 dBm noise floor on a 1 km square.
    fn default() -> Self {
        Self::from_watts(200, 10, 20e6, 1.0, 0.2, 0.2, dbm_to_watts(-92.0), 1.0)
            .expect("default system parameters are valid")
    }
}

/// AP and UE coordinates in km on the wrapped square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub side_km: f64,
    pub aps: Vec<[f64; 2]>,
    pub ues: Vec<[f64; 2]>,
}

impl Layout {
    pub fn distance(&self, m: usize, k: usize) -> f64 {
        wrap_distance(self.aps[m], self.ues[k], self.side_km)
    }
}

/// Shortest distance between two points on a torus of side `side`, i.e. the
/// minimum over the nine shifted copies of `b`.
pub fn wrap_distance(a: [f64; 2], b: [f64; 2], side: f64) -> f64 {
    let mut best = f64::INFINITY;
    for sx in [-1.0, 0.0, 1.0] {
        for sy in [-1.0, 0.0, 1.0] {
            let dx = a[0] - (b[0] + sx * side);
            let dy = a[1] - (b[1] + sy * side);
            best = best.min(dx.hypot(dy));
        }
    }
    best
}

/// Uniform placement of `m` APs and `k` UEs.
pub fn place_network(m: usize, k: usize, side_km: f64, seed: u64) -> Result<Layout> {
    if m == 0 || k == 0 {
        return Err(invalid("need at least one AP and one UE"));
    }
    if !(side_km > 0.0) {
        return Err(invalid("area side must be positive"));
    }
    let mut rng = substream(seed, streams::PLACEMENT);
    let mut draw = |n: usize| -> Vec<[f64; 2]> {
        (0..n)
            .map(|_| {
                let x = rng.random::<f64>() * side_km;
                let y = rng.random::<f64>() * side_km;
                [x, y]
            })
            .collect()
    };
    let aps = draw(m);
    let ues = draw(k);
    Ok(Layout { side_km, aps, ues })
}

/// Three-slope path loss in dB (a negative number).
pub fn path_loss_db(d_km: f64, p: &PathLossParams) -> Result<f64> {
    if !(d_km > 0.0) {
        return Err(invalid(format!("distance must be positive, got {d_km}")));
    }
    let l = p.l_const_db;
    let pl = if d_km > p.d1_km {
        -l - 35.0 * d_km.log10()
    } else if d_km > p.d0_km {
        -l - 15.0 * p.d1_km.log10() - 20.0 * d_km.log10()
    } else {
        -l - 15.0 * p.d1_km.log10() - 20.0 * p.d0_km.log10()
    };
    Ok(pl)
}

/// `10^(pl/10) * 10^(sigma_shd * z / 10)`.
pub fn large_scale_coeff(pl_db: f64, z: f64, sigma_shd_db: f64) -> f64 {
    10f64.powf(pl_db / 10.0) * 10f64.powf(sigma_shd_db * z / 10.0)
}

/// Independent uniform pilot choice per UE. Returns 0-based pilot indices and
/// the binary correlation matrix `|phi_k^H phi_l|^2`.
pub fn assign_pilots(k: usize, tau_t: usize, seed: u64) -> Result<(Vec<usize>, DMatrix<f64>)> {
    if tau_t == 0 {
        return Err(invalid("need at least one pilot"));
    }
    let mut rng = substream(seed, streams::PILOTS);
    let pilot_of: Vec<usize> = (0..k).map(|_| rng.random_range(0..tau_t)).collect();
    let corr = pilot_correlation(&pilot_of);
    Ok((pilot_of, corr))
}

pub fn pilot_correlation(pilot_of: &[usize]) -> DMatrix<f64> {
    let k = pilot_of.len();
    DMatrix::from_fn(k, k, |a, b| if pilot_of[a] == pilot_of[b] { 1.0 } else { 0.0 })
}

/// MMSE estimate variance for UE `k` at one AP. `beta` holds that AP's
/// coefficients towards all UEs.
pub fn mmse_variance(beta: &[f64], pilot_corr: &DMatrix<f64>, tau_t: usize, rho_t: f64, k: usize) -> f64 {
    let g = tau_t as f64 * rho_t;
    let denom: f64 = beta
        .iter()
        .enumerate()
        .map(|(l, b)| g * b * pilot_corr[(k, l)])
        .sum::<f64>()
        + 1.0;
    g * beta[k] * beta[k] / denom
}

/// One large-scale realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// `M x K` large-scale coefficients (linear).
    pub beta: DMatrix<f64>,
    /// 0-based pilot index per UE.
    pub pilot_of: Vec<usize>,
    pub pilot_corr: DMatrix<f64>,
    /// `M x K` MMSE estimate variances.
    pub sigma2: DMatrix<f64>,
    pub tau_t: usize,
    pub seed: u64,
    pub layout: Option<Layout>,
}

impl Scenario {
    /// Draws a full realization: placement, path loss, shadowing, pilots and
    /// estimate variances.
    pub fn generate(sys: &SystemParams, pl: &PathLossParams, m: usize, k: usize, seed: u64) -> Result<Self> {
        sys.validate()?;
        pl.validate()?;
        let layout = place_network(m, k, sys.area_side_km, seed)?;
        let mut shadow = substream(seed, streams::SHADOWING);
        let mut beta = DMatrix::zeros(m, k);
        for mi in 0..m {
            for ki in 0..k {
                let z: f64 = shadow.sample(StandardNormal);
                let d = layout.distance(mi, ki).max(1e-9);
                beta[(mi, ki)] = large_scale_coeff(path_loss_db(d, pl)?, z, pl.sigma_shd_db);
            }
        }
        let (pilot_of, _) = assign_pilots(k, sys.tau_t, seed)?;
        let mut s = Self::from_parts(beta, pilot_of, sys.tau_t, sys.rho_t, seed)?;
        s.layout = Some(layout);
        Ok(s)
    }

    /// Builds a scenario from explicit coefficients and pilot choices.
    pub fn from_parts(beta: DMatrix<f64>, pilot_of: Vec<usize>, tau_t: usize, rho_t: f64, seed: u64) -> Result<Self> {
        let (m, k) = beta.shape();
        if m == 0 || k == 0 || pilot_of.len() != k {
            return Err(invalid("beta must be M x K with one pilot per UE"));
        }
        if beta.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(invalid("beta must be positive and finite"));
        }
        if pilot_of.iter().any(|&p| p >= tau_t) {
            return Err(invalid("pilot index out of range"));
        }
        let pilot_corr = pilot_correlation(&pilot_of);
        let sigma2 = estimate_variances(&beta, &pilot_corr, tau_t, rho_t);
        Ok(Self { beta, pilot_of, pilot_corr, sigma2, tau_t, seed, layout: None })
    }

    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_ues(&self) -> usize {
        self.beta.ncols()
    }

    /// The same placement and shadowing with every UE on its own pilot, pilot
    /// length `tau_t` and pilot SNR `rho_t`.
    pub fn with_orthogonal_pilots(&self, tau_t: usize, rho_t: f64) -> Result<Self> {
        if tau_t == 0 {
            return Err(invalid("need at least one pilot"));
        }
        let k = self.num_ues();
        let pilot_of: Vec<usize> = (0..k).collect();
        let corr = DMatrix::identity(k, k);
        let sigma2 = estimate_variances(&self.beta, &corr, tau_t, rho_t);
        Ok(Self { pilot_of, pilot_corr: corr, sigma2, tau_t, ..self.clone() })
    }

    /// Writes the plain-text record: a header of `key,value` lines followed by
    /// `[beta]` and `[sigma2]` CSV blocks with one row per AP.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# cffl scenario v1");
        let _ = writeln!(out, "seed,{}", self.seed);
        let _ = writeln!(out, "M,{}", self.num_aps());
        let _ = writeln!(out, "K,{}", self.num_ues());
        let _ = writeln!(out, "tau_t,{}", self.tau_t);
        let pilots: Vec<String> = self.pilot_of.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(out, "pilot_of,{}", pilots.join(","));
        for (name, mat) in [("beta", &self.beta), ("sigma2", &self.sigma2)] {
            let _ = writeln!(out, "[{name}]");
            for r in 0..mat.nrows() {
                let row: Vec<String> = (0..mat.ncols()).map(|c| format!("{:.17e}", mat[(r, c)])).collect();
                let _ = writeln!(out, "{}", row.join(","));
            }
        }
        out
    }

    /// Parses a record written by [`Scenario::to_record`]. The stored `sigma2`
    /// block is kept verbatim.
    pub fn from_record(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidInput(format!("scenario record: {msg}"));
        let mut seed = None;
        let mut m = None;
        let mut k = None;
        let mut tau_t = None;
        let mut pilot_of = None;
        let mut section: Option<&str> = None;
        let mut beta_rows: Vec<Vec<f64>> = Vec::new();
        let mut sigma_rows: Vec<Vec<f64>> = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            if line == "[beta]" {
                section = Some("beta");
                continue;
            }
            if line == "[sigma2]" {
                section = Some("sigma2");
                continue;
            }
            match section {
                None => {
                    let (key, val) = line.split_once(',').ok_or_else(|| bad("malformed header line"))?;
                    let parse_usize = |v: &str| v.trim().parse::<usize>().map_err(|_| bad("bad integer"));
                    match key {
                        "seed" => seed = Some(val.trim().parse::<u64>().map_err(|_| bad("bad seed"))?),
                        "M" => m = Some(parse_usize(val)?),
                        "K" => k = Some(parse_usize(val)?),
                        "tau_t" => tau_t = Some(parse_usize(val)?),
                        "pilot_of" => {
                            pilot_of = Some(val.split(',').map(parse_usize).collect::<Result<Vec<_>>>()?)
                        }
                        _ => return Err(bad("unknown header key")),
                    }
                }
                Some(sec) => {
                    let row = line
                        .split(',')
                        .map(|v| v.trim().parse::<f64>().map_err(|_| bad("bad number")))
                        .collect::<Result<Vec<_>>>()?;
                    if sec == "beta" {
                        beta_rows.push(row)
                    } else {
                        sigma_rows.push(row)
                    }
                }
            }
        }
        let (m, k) = (m.ok_or_else(|| bad("missing M"))?, k.ok_or_else(|| bad("missing K"))?);
        let to_mat = |rows: &[Vec<f64>]| -> Result<DMatrix<f64>> {
            if rows.len() != m || rows.iter().any(|r| r.len() != k) {
                return Err(bad("matrix block has wrong shape"));
            }
            Ok(DMatrix::from_fn(m, k, |r, c| rows[r][c]))
        };
        let beta = to_mat(&beta_rows)?;
        let sigma2 = to_mat(&sigma_rows)?;
        let pilot_of = pilot_of.ok_or_else(|| bad("missing pilot_of"))?;
        if pilot_of.len() != k {
            return Err(bad("pilot_of length differs from K"));
        }
        Ok(Self {
            pilot_corr: pilot_correlation(&pilot_of),
            beta,
            pilot_of,
            sigma2,
            tau_t: tau_t.ok_or_else(|| bad("missing tau_t"))?,
            seed: seed.ok_or_else(|| bad("missing seed"))?,
            layout: None,
        })
    }
}

pub fn estimate_variances(beta: &DMatrix<f64>, pilot_corr: &DMatrix<f64>, tau_t: usize, rho_t: f64) -> DMatrix<f64> {
    let (m, k) = beta.shape();
    let mut sigma2 = DMatrix::zeros(m, k);
    let mut row = vec![0.0; k];
    for mi in 0..m {
        for (ki, r) in row.iter_mut().enumerate() {
            *r = beta[(mi, ki)];
        }
        for ki in 0..k {
            sigma2[(mi, ki)] = mmse_variance(&row, pilot_corr, tau_t, rho_t, ki);
        }
    }
    sigma2
}

/// Large-scale statistics of a single-site (collocated) array: one `beta` and
/// one estimate variance per UE, shared by all `M` antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct ColocatedScenario {
    pub num_antennas: usize,
    pub beta: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub pilot_of: Vec<usize>,
    pub pilot_corr: DMatrix<f64>,
    pub site: Option<[f64; 2]>,
}

impl ColocatedScenario {
    /// Places the array at a uniform point of the square, keeps the UE
    /// positions and pilots of `seed`'s cell-free draw, and applies fresh
    /// shadowing per UE.
    pub fn generate(sys: &SystemParams, pl: &PathLossParams, m: usize, k: usize, seed: u64) -> Result<Self> {
        let layout = place_network(m, k, sys.area_side_km, seed)?;
        let mut site_rng = substream(seed, streams::SITE);
        let site = [
            site_rng.random::<f64>() * sys.area_side_km,
            site_rng.random::<f64>() * sys.area_side_km,
        ];
        let mut shadow = substream(seed, streams::SITE_SHADOWING);
        let beta = layout
            .ues
            .iter()
            .map(|ue| {
                let z: f64 = shadow.sample(StandardNormal);
                let d = wrap_distance(site, *ue, sys.area_side_km).max(1e-9);
                Ok(large_scale_coeff(path_loss_db(d, pl)?, z, pl.sigma_shd_db))
            })
            .collect::<Result<Vec<_>>>()?;
        let (pilot_of, _) = assign_pilots(k, sys.tau_t, seed)?;
        let mut s = Self::from_parts(m, beta, pilot_of, sys.tau_t, sys.rho_t)?;
        s.site = Some(site);
        Ok(s)
    }

    pub fn from_parts(m: usize, beta: Vec<f64>, pilot_of: Vec<usize>, tau_t: usize, rho_t: f64) -> Result<Self> {
        if m == 0 || beta.is_empty() || beta.len() != pilot_of.len() {
            return Err(invalid("collocated scenario needs M >= 1 and one pilot per UE"));
        }
        if beta.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(invalid("beta must be positive and finite"));
        }
        let pilot_corr = pilot_correlation(&pilot_of);
        let sigma2 = (0..beta.len()).map(|k| mmse_variance(&beta, &pilot_corr, tau_t, rho_t, k)).collect();
        Ok(Self { num_antennas: m, beta, sigma2, pilot_of, pilot_corr, site: None })
    }

    pub fn num_ues(&self) -> usize {
        self.beta.len()
    }

    /// Equivalent cell-free scenario with `M` identical APs.
    pub fn as_cell_free(&self, tau_t: usize) -> Scenario {
        let m = self.num_antennas;
        let k = self.num_ues();
        Scenario {
            beta: DMatrix::from_fn(m, k, |_, c| self.beta[c]),
            sigma2: DMatrix::from_fn(m, k, |_, c| self.sigma2[c]),
            pilot_of: self.pilot_of.clone(),
            pilot_corr: self.pilot_corr.clone(),
            tau_t,
            seed: 0,
            layout: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_around_takes_short_way() {
        let d = wrap_distance([0.0, 0.0], [1.0 - 1e-3, 0.0], 1.0);
        assert!((d - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn placement_is_deterministic() {
        let a = place_network(30, 4, 0.5, 7).unwrap();
        let b = place_network(30, 4, 0.5, 7).unwrap();
        assert_eq!(a, b);
        let c = place_network(30, 4, 0.5, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn placement_mean_is_centered() {
        // 1000 seeds x 34 nodes x 2 coords; standard error of a U(0, D) mean.
        let side = 0.5;
        let mut sum = 0.0;
        let mut n = 0usize;
        for seed in 0..1000 {
            let l = place_network(30, 4, side, seed).unwrap();
            for p in l.aps.iter().chain(l.ues.iter()) {
                sum += p[0] + p[1];
                n += 2;
            }
        }
        let mean = sum / n as f64;
        let se = side / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - side / 2.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn path_loss_branches() {
        let p = PathLossParams::default();
        let near = path_loss_db(0.005, &p).unwrap();
        assert_eq!(near, path_loss_db(0.01, &p).unwrap());
        assert_eq!(near, path_loss_db(0.001, &p).unwrap());
        let far = path_loss_db(0.1, &p).unwrap();
        assert!((far - (-140.7 - 35.0 * 0.1f64.log10())).abs() < 1e-12);
        assert!(path_loss_db(0.0, &p).is_err());
        assert!(path_loss_db(-1.0, &p).is_err());
    }

    #[test]
    fn shadowing_coefficient() {
        assert!((large_scale_coeff(-100.0, 0.0, 8.0) - 1e-10).abs() < 1e-22);
        assert_eq!(large_scale_coeff(-100.0, 3.0, 0.0), large_scale_coeff(-100.0, 0.0, 0.0));
        let b = large_scale_coeff(-100.0, 1.0, 8.0);
        assert!((b / 10f64.powf(-9.2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_pilot_collides_everyone() {
        let (p, c) = assign_pilots(5, 1, 3).unwrap();
        assert!(p.iter().all(|&x| x == 0));
        assert!(c.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn collision_rate_matches_birthday_bound() {
        // P(some pair of 4 UEs shares one of 10 pilots) = 1 - 10*9*8*7/10^4.
        let expected = 1.0 - (10.0 * 9.0 * 8.0 * 7.0) / 1e4;
        let n = 20_000;
        let hits = (0..n)
            .filter(|&s| {
                let (p, _) = assign_pilots(4, 10, s).unwrap();
                (0..4).any(|a| (a + 1..4).any(|b| p[a] == p[b]))
            })
            .count();
        let freq = hits as f64 / n as f64;
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((freq - expected).abs() < 4.0 * se, "freq {freq} expected {expected}");
    }

    #[test]
    fn mmse_variance_limits() {
        let corr = DMatrix::identity(2, 2);
        // tau_t * rho_t = 1, beta = 1: 1 / (1 + 1).
        assert!((mmse_variance(&[1.0, 1.0], &corr, 1, 1.0, 0) - 0.5).abs() < 1e-15);
        assert!(mmse_variance(&[1.0, 1.0], &corr, 1, 1e-12, 0) < 1e-11);
        let hi = mmse_variance(&[0.3, 1.0], &corr, 10, 1e12, 0);
        assert!((hi - 0.3).abs() < 1e-10);
    }

    #[test]
    fn generated_scenario_invariants() {
        let sys = SystemParams::default();
        let s = Scenario::generate(&sys, &PathLossParams::default(), 20, 6, 11).unwrap();
        for m in 0..20 {
            for k in 0..6 {
                assert!(s.sigma2[(m, k)] > 0.0 && s.sigma2[(m, k)] <= s.beta[(m, k)]);
            }
        }
        assert_eq!(s.pilot_corr, s.pilot_corr.transpose());
        assert!((0..6).all(|k| s.pilot_corr[(k, k)] == 1.0));
        let t = Scenario::generate(&sys, &PathLossParams::default(), 20, 6, 11).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn record_round_trip() {
        let sys = SystemParams::default();
        let s = Scenario::generate(&sys, &PathLossParams::default(), 3, 2, 5).unwrap();
        let back = Scenario::from_record(&s.to_record()).unwrap();
        assert_eq!(back.beta, s.beta);
        assert_eq!(back.sigma2, s.sigma2);
        assert_eq!(back.pilot_of, s.pilot_of);
        assert!(Scenario::from_record("M,2\n").is_err());
    }
}
