use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{model_input, AnalysisRequest, Loaded, ReportError};
use crate::model::{evaluate, AnalysisMode};

/// Relative deviations beyond this magnitude are flagged.
pub const FLAG_THRESHOLD: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredResult {
    pub kernel: String,
    pub arch: String,
    pub mode: String,
    pub value_cy_per_cl: f64,
}

/// Parse a comma-separated file with the header
/// `kernel,arch,mode,value_cy_per_cl`. Lines starting with `#` are skipped.
pub fn read_measurements(text: &str) -> Result<Vec<MeasuredResult>, ReportError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| ReportError::Parse(format!("measured results: {e}")))?
        .clone();
    let expected = ["kernel", "arch", "mode", "value_cy_per_cl"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(ReportError::Parse(format!(
            "measured results: header must be `{}`",
            expected.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<MeasuredResult>().enumerate() {
        let row = rec.map_err(|e| ReportError::Parse(format!("measured results row {}: {e}", i + 1)))?;
        if !row.value_cy_per_cl.is_finite() || row.value_cy_per_cl <= 0.0 {
            return Err(ReportError::Parse(format!(
                "measured results row {}: value must be positive, got {}",
                i + 1,
                row.value_cy_per_cl
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub kernel: String,
    pub arch: String,
    pub mode: String,
    /// Reported prediction, rounded to one decimal like every printed cycle count.
    pub predicted_cy_per_cl: f64,
    pub predicted_raw_cy_per_cl: f64,
    pub measured_cy_per_cl: f64,
    /// `(measured - predicted) / predicted`
    pub deviation: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

pub fn relative_deviation(predicted: f64, measured: f64) -> f64 {
    (measured - predicted) / predicted
}

/// Compare every measurement recorded for this kernel and machine against
/// the single-core prediction of its mode.
pub fn compare(
    req: &AnalysisRequest,
    loaded: &Loaded,
    measured: &[MeasuredResult],
) -> Result<CompareReport, ReportError> {
    let kernel = req.kernel_id();
    let arch = loaded.machine.arch_name();
    let mut predictions: BTreeMap<AnalysisMode, f64> = BTreeMap::new();
    let mut rows = Vec::new();
    for m in measured
        .iter()
        .filter(|m| m.kernel == kernel && m.arch.eq_ignore_ascii_case(arch))
    {
        let mode: AnalysisMode = m
            .mode
            .parse()
            .map_err(|e: String| ReportError::Parse(format!("measured results: {e}")))?;
        if mode.needs_ports() && loaded.ports.is_none() {
            return Err(ReportError::Usage(format!(
                "comparing {mode} results needs a port table (--ports FILE)"
            )));
        }
        let predicted = match predictions.get(&mode) {
            Some(&p) => p,
            None => {
                let p = evaluate(&model_input(loaded, req, mode, 1))?.performance.cy_per_cl;
                predictions.insert(mode, p);
                p
            }
        };
        let raw = predicted;
        let predicted = (raw * 10.0).round() / 10.0;
        if predicted == 0.0 {
            return Err(ReportError::Model(format!("{mode} predicts zero cycles, deviation undefined")));
        }
        let deviation = relative_deviation(predicted, m.value_cy_per_cl);
        rows.push(CompareRow {
            kernel: kernel.clone(),
            arch: arch.to_string(),
            mode: mode.to_string(),
            predicted_cy_per_cl: predicted,
            predicted_raw_cy_per_cl: raw,
            measured_cy_per_cl: m.value_cy_per_cl,
            deviation,
            flagged: deviation.abs() > FLAG_THRESHOLD,
        });
    }
    if rows.is_empty() {
        return Err(ReportError::Parse(format!(
            "measured results contain no row for kernel `{kernel}` on `{arch}`"
        )));
    }
    Ok(CompareReport { rows })
}
