//! CSV records and number formatting.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::HarnessError;

/// `x` with six significant digits, `%g` style.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..6).contains(&exp) {
        trim(&format!("{:.*}", (5 - exp) as usize, x))
    } else {
        format!("{}e{exp}", trim(mant))
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_default()
}

/// One row per scheme, sweep value and evaluation realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub realization: usize,
    pub seed: u64,
    /// Effective training time in seconds; `None` when the realization failed.
    pub t_e: Option<f64>,
    pub theta: Option<f64>,
    /// Outer iterations behind `theta` (0 when it is fixed).
    pub iterations: usize,
    /// Realizations the outer loop discarded.
    pub resamples: usize,
    pub status: String,
    pub detail: String,
    pub wall_time_s: f64,
}

impl ResultRow {
    pub const HEADER: [&'static str; 12] = [
        "scheme",
        "sweep_var",
        "sweep_value",
        "realization",
        "seed",
        "t_e_s",
        "theta",
        "iterations",
        "resamples",
        "status",
        "detail",
        "wall_time_s",
    ];

    pub fn record(&self) -> Vec<String> {
        vec![
            self.scheme.clone(),
            self.sweep_var.clone(),
            sig6(self.sweep_value),
            self.realization.to_string(),
            self.seed.to_string(),
            opt(self.t_e),
            opt(self.theta),
            self.iterations.to_string(),
            self.resamples.to_string(),
            self.status.clone(),
            self.detail.clone(),
            sig6(self.wall_time_s),
        ]
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// One outer-loop iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub scheme: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub n: usize,
    pub theta: f64,
    pub time_s: f64,
    pub t_e_running_s: f64,
    pub resampled: usize,
}

impl TraceRow {
    pub const HEADER: [&'static str; 8] =
        ["scheme", "sweep_var", "sweep_value", "n", "theta", "time_s", "t_e_running_s", "resampled"];

    pub fn record(&self) -> Vec<String> {
        vec![
            self.scheme.clone(),
            self.sweep_var.clone(),
            sig6(self.sweep_value),
            self.n.to_string(),
            sig6(self.theta),
            sig6(self.time_s),
            sig6(self.t_e_running_s),
            self.resampled.to_string(),
        ]
    }
}

/// One SCA iteration of an evaluation solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaTraceRow {
    pub scheme: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub realization: usize,
    pub iter: usize,
    pub objective: f64,
    pub max_violation: f64,
}

impl ScaTraceRow {
    pub const HEADER: [&'static str; 7] =
        ["scheme", "sweep_var", "sweep_value", "realization", "iter", "objective", "max_violation"];

    pub fn record(&self) -> Vec<String> {
        vec![
            self.scheme.clone(),
            self.sweep_var.clone(),
            sig6(self.sweep_value),
            self.realization.to_string(),
            self.iter.to_string(),
            sig6(self.objective),
            sig6(self.max_violation),
        ]
    }
}

/// Mean and standard error over the successful realizations of one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_t_e_s: Option<f64>,
    pub se_t_e_s: Option<f64>,
    pub theta: Option<f64>,
}

impl SummaryRow {
    pub const HEADER: [&'static str; 8] =
        ["scheme", "sweep_var", "sweep_value", "n_ok", "n_failed", "mean_t_e_s", "se_t_e_s", "theta"];

    pub fn from_rows(rows: &[&ResultRow]) -> Self {
        let first = rows[0];
        let ok: Vec<f64> = rows.iter().filter_map(|r| r.t_e).collect();
        let n = ok.len();
        let mean = (n > 0).then(|| ok.iter().sum::<f64>() / n as f64);
        let se = mean.map(|m| {
            if n < 2 {
                0.0
            } else {
                (ok.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
            }
        });
        Self {
            scheme: first.scheme.clone(),
            sweep_var: first.sweep_var.clone(),
            sweep_value: first.sweep_value,
            n_ok: n,
            n_failed: rows.len() - n,
            mean_t_e_s: mean,
            se_t_e_s: se,
            theta: first.theta,
        }
    }

    pub fn record(&self) -> Vec<String> {
        vec![
            self.scheme.clone(),
            self.sweep_var.clone(),
            sig6(self.sweep_value),
            self.n_ok.to_string(),
            self.n_failed.to_string(),
            opt(self.mean_t_e_s),
            opt(self.se_t_e_s),
            opt(self.theta),
        ]
    }
}

/// `dir/stem{suffix}.csv` next to `out`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    out.with_file_name(format!("{stem}{suffix}.csv"))
}

/// Writes a whole table through a temporary file and a rename.
pub fn write_table(path: &Path, header: &[&str], records: impl IntoIterator<Item = Vec<String>>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&tmp)?));
        w.write_record(header)?;
        for r in records {
            w.write_record(&r)?;
        }
        w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Appends rows as they complete, flushing after each one.
pub struct StreamWriter {
    inner: csv::Writer<File>,
}

impl StreamWriter {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut inner = csv::Writer::from_writer(File::create(path)?);
        inner.write_record(ResultRow::HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, row: &ResultRow) -> Result<(), HarnessError> {
        self.inner.write_record(row.record())?;
        self.inner.flush()?;
        Ok(())
    }
}
