use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnalysisRequest, Loaded, ReportError};
use crate::cache;
use crate::incore::timings_from_ports;
use crate::kernel::parse_kernel;
use crate::model::{compose_ecm, transfer_cycles, EcmContributions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRange {
    /// Constant bound to every swept value. Kernels tie their inner and
    /// middle loop extents to it.
    pub variable: String,
    pub start: i64,
    pub end: i64,
    pub points: usize,
}

impl Default for SweepRange {
    fn default() -> Self {
        SweepRange {
            variable: "N".into(),
            start: 50,
            end: 2000,
            points: 100,
        }
    }
}

/// Up to `points` distinct integers, logarithmically spaced over `[start, end]`.
pub fn log_spaced(start: i64, end: i64, points: usize) -> Result<Vec<i64>, ReportError> {
    if start < 1 || end < start || points == 0 {
        return Err(ReportError::Usage(format!(
            "invalid sweep range [{start}, {end}] with {points} point(s)"
        )));
    }
    if points == 1 || start == end {
        return Ok(vec![start]);
    }
    let (a, b) = ((start as f64).ln(), (end as f64).ln());
    let mut v: Vec<i64> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as i64)
        .map(|n| n.clamp(start, end))
        .collect();
    v.dedup();
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: i64,
    pub contributions: EcmContributions,
    pub t_ecm_mem: f64,
    pub regime: String,
}

/// Maximal run of consecutive rows sharing one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub label: String,
    pub first_n: i64,
    pub last_n: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub variable: String,
    pub rows: Vec<SweepRow>,
    pub regimes: Vec<Regime>,
    pub distinct_regimes: usize,
}

impl SweepResult {
    /// Tab-separated table, one row per swept value.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let boundaries: Vec<String> = self
            .rows
            .first()
            .map(|r| r.contributions.transfers.iter().map(|t| format!("T_{}", t.boundary.replace('-', ""))).collect())
            .unwrap_or_default();
        out.push_str(&self.variable);
        out.push_str("\tT_OL\tT_nOL");
        for b in &boundaries {
            out.push('\t');
            out.push_str(b);
        }
        out.push_str("\tT_ECM\tregime\n");
        for r in &self.rows {
            out.push_str(&format!("{}\t{:.4}\t{:.4}", r.n, r.contributions.t_ol, r.contributions.t_nol));
            for t in &r.contributions.transfers {
                out.push_str(&format!("\t{:.4}", t.cycles));
            }
            out.push_str(&format!("\t{:.4}\t{}\n", r.t_ecm_mem, r.regime));
        }
        out
    }
}

pub fn sweep(req: &AnalysisRequest, loaded: &Loaded) -> Result<SweepResult, ReportError> {
    let range = &req.sweep;
    if loaded.ir.loops.len() < 2 {
        return Err(ReportError::Usage("a sweep needs a loop nest of depth 2 or more".into()));
    }
    let values = log_spaced(range.start, range.end, range.points)?;
    let machine = &loaded.machine;
    let names: Vec<String> = machine.memory_hierarchy.iter().map(|l| l.level_name.clone()).collect();
    let rows = values
        .par_iter()
        .map(|&n| -> Result<SweepRow, ReportError> {
            let ir = parse_kernel(&loaded.source.clone().with_constant(&range.variable, n))?;
            let analysis = cache::analyze(&ir, machine, req.options.cache);
            let transfers = transfer_cycles(&analysis.traffic, machine, req.options)?;
            let (t_ol, t_nol) = match &loaded.ports {
                Some(p) => {
                    let t = timings_from_ports(p, machine, &ir)?;
                    (t.t_ol_cy_per_cl, t.t_nol_cy_per_cl)
                }
                None => (0.0, 0.0),
            };
            let contributions = EcmContributions { t_ol, t_nol, transfers };
            let prediction = compose_ecm(&contributions, &names, 1);
            Ok(SweepRow {
                n,
                t_ecm_mem: prediction.in_memory(),
                contributions,
                regime: analysis.layer_conditions.label(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut regimes: Vec<Regime> = Vec::new();
    for r in &rows {
        match regimes.last_mut() {
            Some(last) if last.label == r.regime => last.last_n = r.n,
            _ => regimes.push(Regime {
                label: r.regime.clone(),
                first_n: r.n,
                last_n: r.n,
            }),
        }
    }
    let mut labels: Vec<&str> = rows.iter().map(|r| r.regime.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    Ok(SweepResult {
        variable: range.variable.clone(),
        distinct_regimes: labels.len(),
        rows,
        regimes,
    })
}
