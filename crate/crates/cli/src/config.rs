//! Experiment configuration.
//!
//! A config is a JSON object whose fields mirror [`ExperimentConfig`]. Any
//! subset of fields may be given, at any depth; missing fields keep the value
//! of the preset named by `preset` or, without one, of
//! [`ExperimentConfig::default`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use cffl_core::baselines::{PilotScheme, SchemeContext, SchemeId};
use cffl_core::netmodel::{db_to_linear, PathLossParams, SystemParams};
use cffl_core::perfmodel::FlParams;
use cffl_core::sca::ScaParams;
use cffl_core::two_timescale::LongTermConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::presets;
use crate::HarnessError;

/// Parameter varied across a sweep. Values are given in the unit named by
/// [`SweepVar::unit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    M,
    K,
    D,
    #[serde(rename = "tau_t")]
    TauT,
    #[serde(rename = "theta_max")]
    ThetaMax,
    #[serde(rename = "f_max")]
    FMax,
    #[serde(rename = "E_max")]
    EMax,
}

impl SweepVar {
    pub const ALL: [SweepVar; 7] =
        [Self::M, Self::K, Self::D, Self::TauT, Self::ThetaMax, Self::FMax, Self::EMax];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::M => "M",
            Self::K => "K",
            Self::D => "D",
            Self::TauT => "tau_t",
            Self::ThetaMax => "theta_max",
            Self::FMax => "f_max",
            Self::EMax => "E_max",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Self::M | Self::K | Self::TauT => "count",
            Self::D => "km",
            Self::ThetaMax => "dB",
            Self::FMax => "Hz",
            Self::EMax => "J",
        }
    }

    fn is_count(self) -> bool {
        matches!(self, Self::M | Self::K | Self::TauT)
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepVar {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarnessError::Config(format!("unknown sweep variable {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVar,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Preset the file's fields are applied on top of.
    pub preset: Option<String>,
    pub schemes: Vec<SchemeId>,
    pub sweep: Sweep,
    /// `M` and `K` outside an `M`/`K` sweep.
    pub num_aps: usize,
    pub num_ues: usize,
    pub system: SystemParams,
    pub path_loss: PathLossParams,
    pub fl: FlParams,
    pub sca: ScaParams,
    pub long_term: LongTermConfig,
    pub pilots: PilotScheme,
    /// Per sweep point: `tau_t = K` for the cell-free system and a TDMA pilot
    /// SNR of `K rho_t`, so that both systems see the same estimate variances.
    pub match_tdma_pilots: bool,
    pub tdma_tau_t: usize,
    pub tdma_rho_t: Option<f64>,
    pub n_realizations: usize,
    pub root_seed: u64,
    pub output: PathBuf,
    /// Also write the outer-loop and SCA traces.
    pub trace: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: None,
            schemes: vec![SchemeId::Joint],
            sweep: Sweep { variable: SweepVar::M, values: vec![50.0] },
            num_aps: 50,
            num_ues: 4,
            system: SystemParams::default(),
            path_loss: PathLossParams::default(),
            fl: FlParams::default(),
            sca: ScaParams::default(),
            long_term: LongTermConfig::default(),
            pilots: PilotScheme::Random,
            match_tdma_pilots: false,
            tdma_tau_t: 1,
            tdma_rho_t: None,
            n_realizations: 20,
            root_seed: 1,
            output: PathBuf::from("results.csv"),
            trace: false,
        }
    }
}

/// Overrides given on the command line, applied after the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<String>,
    pub num_aps: Option<usize>,
    pub num_ues: Option<usize>,
    pub d_km: Option<f64>,
    pub tau_t: Option<usize>,
    pub realizations: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub schemes: Option<Vec<SchemeId>>,
}

/// Copies `patch` into `base`, recursing into objects. Keys absent from
/// `base` are rejected so that typos do not pass silently.
fn merge(base: &mut Value, patch: &Value, path: &str) -> Result<(), HarnessError> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v, &here)?,
                    Some(slot) => *slot = v.clone(),
                    None => return Err(HarnessError::Config(format!("unknown field {here:?}"))),
                }
            }
            Ok(())
        }
        (b, p) => {
            *b = p.clone();
            Ok(())
        }
    }
}

impl ExperimentConfig {
    /// Builds a config from an optional JSON document and command-line
    /// overrides. The preset comes from the flags, else from the document.
    pub fn resolve(doc: Option<&str>, flags: &Overrides) -> Result<Self, HarnessError> {
        let patch: Value = match doc {
            Some(text) => serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("config file: {e}")))?,
            None => Value::Object(Default::default()),
        };
        if !patch.is_object() {
            return Err(HarnessError::Config("config file must hold a JSON object".into()));
        }
        let preset = flags.preset.clone().or_else(|| patch.get("preset").and_then(Value::as_str).map(String::from));
        let base = match &preset {
            Some(name) => presets::preset(name)?,
            None => Self::default(),
        };
        let mut value = serde_json::to_value(&base).expect("config serializes");
        merge(&mut value, &patch, "")?;
        let mut cfg: Self =
            serde_json::from_value(value).map_err(|e| HarnessError::Config(format!("config file: {e}")))?;
        cfg.preset = preset;
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Self::resolve(Some(text), &Overrides::default())
    }

    /// Applies flag overrides. A flag naming the sweep variable collapses
    /// the sweep to that single value.
    pub fn apply(&mut self, flags: &Overrides) {
        let pin = |var: SweepVar, v: f64, sweep: &mut Sweep| {
            if sweep.variable == var {
                sweep.values = vec![v];
            }
        };
        if let Some(m) = flags.num_aps {
            self.num_aps = m;
            pin(SweepVar::M, m as f64, &mut self.sweep);
        }
        if let Some(k) = flags.num_ues {
            self.num_ues = k;
            pin(SweepVar::K, k as f64, &mut self.sweep);
        }
        if let Some(d) = flags.d_km {
            self.system.area_side_km = d;
            pin(SweepVar::D, d, &mut self.sweep);
        }
        if let Some(t) = flags.tau_t {
            self.system.tau_t = t;
            pin(SweepVar::TauT, t as f64, &mut self.sweep);
        }
        if let Some(n) = flags.realizations {
            self.n_realizations = n;
        }
        if let Some(s) = flags.seed {
            self.root_seed = s;
        }
        if let Some(o) = &flags.out {
            self.output = o.clone();
        }
        if let Some(s) = &flags.schemes {
            self.schemes = s.clone();
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_realizations == 0 {
            return Err(HarnessError::Config("need at least one realization".into()));
        }
        if self.schemes.is_empty() {
            return Err(HarnessError::Config("no schemes selected".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(HarnessError::Config("sweep has no values".into()));
        }
        self.long_term.validate()?;
        for &v in &self.sweep.values {
            self.context(v)?;
        }
        Ok(())
    }

    /// Scheme context of one sweep point, validated.
    pub fn context(&self, value: f64) -> Result<SchemeContext, HarnessError> {
        let var = self.sweep.variable;
        if !value.is_finite() || (var.is_count() && (value < 1.0 || value.fract() != 0.0)) {
            return Err(HarnessError::Config(format!(
                "{var} = {value} is not a valid sweep value ({})",
                if var.is_count() { "positive integer" } else { "finite number" }
            )));
        }
        let mut ctx = SchemeContext::new(self.system, self.fl, self.num_aps, self.num_ues);
        ctx.pl = self.path_loss;
        ctx.sca = self.sca;
        ctx.pilots = self.pilots;
        ctx.tdma_tau_t = self.tdma_tau_t;
        ctx.tdma_rho_t = self.tdma_rho_t;
        match var {
            SweepVar::M => ctx.num_aps = value as usize,
            SweepVar::K => ctx.num_ues = value as usize,
            SweepVar::D => ctx.sys.area_side_km = value,
            SweepVar::TauT => ctx.sys.tau_t = value as usize,
            SweepVar::ThetaMax => ctx.flp.theta_max = db_to_linear(value),
            SweepVar::FMax => ctx.flp.f_max = value,
            SweepVar::EMax => ctx.flp.e_max_j = value,
        }
        if self.match_tdma_pilots {
            ctx.sys.tau_t = ctx.num_ues;
            ctx.tdma_rho_t = Some(ctx.num_ues as f64 * ctx.sys.rho_t);
        }
        ctx.validate().map_err(|e| HarnessError::Config(format!("{var} = {value}: {e}")))?;
        Ok(ctx)
    }
}
