//! ECM and Roofline model composition.
//!
//! Everything here works in cycles per cache line of work (cy/CL). The
//! [`evaluate`] entry point runs the cache predictor and the in-core model
//! for one kernel and one machine and keeps every intermediate quantity in
//! the returned [`ModelReport`], so each printed number can be re-derived
//! from the stored contributions.

mod roofline;
mod units;

pub use roofline::{compose_roofline, Roofline, RooflineRow};
pub use units::{convert_units, cycles_from_unit, Unit};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{self, CacheOptions, LayerConditionReport, TrafficProfile};
use crate::incore::{self, InCoreError, InCoreTiming, PortCycleTable};
use crate::kernel::KernelIR;
use crate::machine::{MachineDescription, MachineError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("no bandwidth measurement usable for transfers into {level}")]
    MissingBandwidth { level: String },
    #[error("traffic profile does not match the machine hierarchy: {0}")]
    Inconsistent(String),
    #[error("cannot convert zero cycles per cache line into a rate")]
    ZeroCycles,
    #[error("no memory transfer time, saturation point undefined (cache-resident)")]
    DivisionByZero,
    #[error("mode {0} needs a port-cycle table")]
    MissingPortTable(AnalysisMode),
    #[error("core count must be at least 1")]
    ZeroCores,
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    InCore(#[from] InCoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnalysisMode {
    Roofline,
    RooflinePorts,
    #[serde(rename = "ECM")]
    Ecm,
    #[serde(rename = "ECMData")]
    EcmData,
    #[serde(rename = "ECMCore")]
    EcmCore,
}

impl AnalysisMode {
    pub const ALL: [AnalysisMode; 5] = [
        AnalysisMode::Roofline,
        AnalysisMode::RooflinePorts,
        AnalysisMode::Ecm,
        AnalysisMode::EcmData,
        AnalysisMode::EcmCore,
    ];

    pub fn needs_ports(self) -> bool {
        matches!(self, AnalysisMode::RooflinePorts | AnalysisMode::Ecm | AnalysisMode::EcmCore)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisMode::Roofline => "Roofline",
            AnalysisMode::RooflinePorts => "RooflinePorts",
            AnalysisMode::Ecm => "ECM",
            AnalysisMode::EcmData => "ECMData",
            AnalysisMode::EcmCore => "ECMCore",
        }
    }
}

impl fmt::Display for AnalysisMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnalysisMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown analysis mode `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub cache: CacheOptions,
    /// Add each level's `latency_penalty_cycles` per transferred line.
    pub latency_penalties: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransferSource {
    Fixed { cycles_per_cacheline: f64 },
    Bandwidth {
        kernel: String,
        threads: u32,
        bandwidth_bytes_per_s: f64,
    },
}

/// Time to move one unit of work's lines between two adjacent levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTime {
    /// `L1-L2`, `L2-L3`, `L3-MEM`, ...
    pub boundary: String,
    pub cachelines: f64,
    pub bytes: f64,
    /// Total including `penalty_cycles`.
    pub cycles: f64,
    pub penalty_cycles: f64,
    pub source: Option<TransferSource>,
}

/// Closest benchmark signature for a line-count query.
fn stream_query(loads: f64, stores: f64) -> (u32, u32) {
    (loads.round().max(0.0) as u32, stores.round().max(0.0) as u32)
}

pub fn transfer_cycles(
    traffic: &TrafficProfile,
    machine: &MachineDescription,
    opts: ModelOptions,
) -> Result<Vec<TransferTime>, ModelError> {
    let hierarchy = &machine.memory_hierarchy;
    if traffic.levels.len() + 1 != hierarchy.len() {
        return Err(ModelError::Inconsistent(format!(
            "{} traffic levels for {} memory levels",
            traffic.levels.len(),
            hierarchy.len()
        )));
    }
    let line_bytes = f64::from(machine.cacheline_bytes);
    let clock = machine.clock_hz;
    traffic
        .levels
        .iter()
        .zip(hierarchy.windows(2))
        .map(|(t, pair)| {
            let (here, next) = (&pair[0], &pair[1]);
            if t.level != here.level_name {
                return Err(ModelError::Inconsistent(format!(
                    "traffic level {} against machine level {}",
                    t.level, here.level_name
                )));
            }
            let cachelines = t.cachelines();
            let bytes = cachelines * line_bytes;
            let penalty = if opts.latency_penalties {
                here.latency_penalty_cycles * cachelines
            } else {
                0.0
            };
            let (cycles, source) = if let Some(cy) = here.cycles_per_cacheline_transfer {
                (cachelines * cy, Some(TransferSource::Fixed { cycles_per_cacheline: cy }))
            } else if cachelines == 0.0 {
                (0.0, None)
            } else {
                let (r, w) = stream_query(t.load_cachelines, t.store_cachelines);
                let matched = machine
                    .measurements
                    .iter()
                    .filter(|m| m.level_name == next.level_name)
                    .map(|m| m.threads)
                    .min()
                    .and_then(|threads| machine.match_benchmark(&next.level_name, r, w, threads).ok())
                    .and_then(|m| machine.saturated_bandwidth(&next.level_name, &m.kernel_name))
                    .filter(|m| m.bandwidth_bytes_per_s > 0.0)
                    .ok_or_else(|| ModelError::MissingBandwidth {
                        level: next.level_name.clone(),
                    })?;
                (
                    bytes * clock / matched.bandwidth_bytes_per_s,
                    Some(TransferSource::Bandwidth {
                        kernel: matched.kernel_name.clone(),
                        threads: matched.threads,
                        bandwidth_bytes_per_s: matched.bandwidth_bytes_per_s,
                    }),
                )
            };
            Ok(TransferTime {
                boundary: format!("{}-{}", here.level_name, next.level_name),
                cachelines,
                bytes,
                cycles: cycles + penalty,
                penalty_cycles: penalty,
                source,
            })
        })
        .collect()
}

/// `{ T_OL ‖ T_nOL | T_L1L2 | T_L2L3 | T_L3Mem }`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmContributions {
    pub t_ol: f64,
    pub t_nol: f64,
    /// Adjacent-level transfers, innermost first.
    pub transfers: Vec<TransferTime>,
}

impl EcmContributions {
    pub fn new(t_ol: f64, t_nol: f64, data: &[f64]) -> Self {
        EcmContributions {
            t_ol,
            t_nol,
            transfers: data
                .iter()
                .enumerate()
                .map(|(i, &cycles)| TransferTime {
                    boundary: format!("T{i}"),
                    cachelines: 0.0,
                    bytes: 0.0,
                    cycles,
                    penalty_cycles: 0.0,
                    source: None,
                })
                .collect(),
        }
    }

    pub fn data(&self) -> Vec<f64> {
        self.transfers.iter().map(|t| t.cycles).collect()
    }

    /// Transfer time of the outermost boundary (`T_L3Mem`).
    pub fn t_mem(&self) -> f64 {
        self.transfers.last().map_or(0.0, |t| t.cycles)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Saturation {
    CacheResident,
    At { ratio: f64, cores: u32 },
}

impl Saturation {
    pub fn cores(&self) -> Option<u32> {
        match self {
            Saturation::At { cores, .. } => Some(*cores),
            Saturation::CacheResident => None,
        }
    }
}

/// `cores = ceil(single / t_mem)`, where `t_mem` is the saturated memory time.
pub fn saturation_point(single: f64, t_mem: f64) -> Result<(f64, u32), ModelError> {
    if t_mem <= 0.0 {
        return Err(ModelError::DivisionByZero);
    }
    let ratio = single / t_mem;
    // Ceiling with slack for ratios that are whole numbers up to rounding.
    let cores = ((ratio - 1e-9).ceil() as u32).max(1);
    Ok((ratio, cores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmPrediction {
    /// `(residence level, cy/CL)`: L1, L2, ..., MEM.
    pub residences: Vec<(String, f64)>,
    pub saturation: Saturation,
    /// `(cores, cy/CL)` for data in memory.
    pub multicore: Vec<(u32, f64)>,
}

impl EcmPrediction {
    pub fn in_memory(&self) -> f64 {
        self.residences.last().map_or(0.0, |r| r.1)
    }

    pub fn at_cores(&self, cores: u32) -> Option<f64> {
        self.multicore.iter().find(|(n, _)| *n == cores).map(|r| r.1)
    }
}

/// Multicore scaling for data in memory, linear until the memory transfer
/// time is reached.
pub fn multicore_cycles(single: f64, t_mem: f64, cores: u32) -> f64 {
    (single / f64::from(cores.max(1))).max(t_mem)
}

/// Prefix-max rule per residence level; `residence_names[i]` names the level
/// holding the data once `i` transfers are serialized.
pub fn compose_ecm(c: &EcmContributions, residence_names: &[String], max_cores: u32) -> EcmPrediction {
    let mut residences = Vec::with_capacity(c.transfers.len() + 1);
    let mut serial = c.t_nol;
    let names = residence_names.iter().cloned().chain((residence_names.len()..).map(|i| format!("R{i}")));
    for (i, name) in names.take(c.transfers.len() + 1).enumerate() {
        if i > 0 {
            serial += c.transfers[i - 1].cycles;
        }
        residences.push((name, c.t_ol.max(serial)));
    }
    let single = residences.last().map_or(0.0, |r| r.1);
    let t_mem = c.t_mem();
    let saturation = match saturation_point(single, t_mem) {
        Ok((ratio, cores)) => Saturation::At { ratio, cores },
        Err(_) => Saturation::CacheResident,
    };
    let multicore = (1..=max_cores.max(1))
        .map(|n| (n, multicore_cycles(single, t_mem, n)))
        .collect();
    EcmPrediction {
        residences,
        saturation,
        multicore,
    }
}

fn residence_names(machine: &MachineDescription) -> Vec<String> {
    machine.memory_hierarchy.iter().map(|l| l.level_name.clone()).collect()
}

/// Cores sharing the outermost cache, the scope of the multicore curve.
fn scaling_domain(machine: &MachineDescription) -> u32 {
    machine
        .cache_levels()
        .last()
        .map_or(machine.cores_per_socket, |l| l.cores_per_group)
        .max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub cy_per_cl: f64,
    pub unit: Unit,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    /// `(index, trip count)`, outermost first.
    pub loops: Vec<(String, i64)>,
    pub flops_per_iteration: u32,
    pub iterations_per_cacheline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmSection {
    pub contributions: EcmContributions,
    pub prediction: EcmPrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub mode: AnalysisMode,
    pub machine: String,
    pub clock_hz: f64,
    pub cores: u32,
    pub kernel: KernelSummary,
    pub traffic: TrafficProfile,
    pub layer_conditions: LayerConditionReport,
    pub incore: Option<InCoreTiming>,
    pub transfers: Vec<TransferTime>,
    pub ecm: Option<EcmSection>,
    pub roofline: Option<Roofline>,
    /// Headline value of the mode at `cores` cores.
    pub performance: Performance,
    pub warnings: Vec<String>,
}

pub struct ModelInput<'a> {
    pub ir: &'a KernelIR,
    pub machine: &'a MachineDescription,
    pub ports: Option<&'a PortCycleTable>,
    pub mode: AnalysisMode,
    pub cores: u32,
    pub unit: Unit,
    pub options: ModelOptions,
}

pub fn evaluate(input: &ModelInput<'_>) -> Result<ModelReport, ModelError> {
    let ModelInput { ir, machine, mode, cores, unit, options, .. } = *input;
    if cores == 0 {
        return Err(ModelError::ZeroCores);
    }
    let ports = match (mode.needs_ports(), input.ports) {
        (true, None) => return Err(ModelError::MissingPortTable(mode)),
        (true, Some(p)) => Some(p),
        (false, _) => None,
    };
    let analysis = cache::analyze(ir, machine, options.cache);
    let transfers = transfer_cycles(&analysis.traffic, machine, options)?;
    let port_timing = ports.map(|p| incore::timings_from_ports(p, machine, ir)).transpose()?;

    let mut ecm = None;
    let mut roofline = None;
    let (incore, headline) = match mode {
        AnalysisMode::Ecm | AnalysisMode::EcmData => {
            let timing = port_timing.filter(|_| mode == AnalysisMode::Ecm);
            let (ol, nol) = timing.map_or((0.0, 0.0), |t| (t.t_ol_cy_per_cl, t.t_nol_cy_per_cl));
            let contributions = EcmContributions {
                t_ol: ol,
                t_nol: nol,
                transfers: transfers.clone(),
            };
            let prediction = compose_ecm(&contributions, &residence_names(machine), scaling_domain(machine).max(cores));
            let value = multicore_cycles(prediction.in_memory(), contributions.t_mem(), cores);
            ecm = Some(EcmSection { contributions, prediction });
            (timing, value)
        }
        AnalysisMode::EcmCore => {
            let t = port_timing.expect("checked above");
            (Some(t), t.core_cycles() / f64::from(cores))
        }
        AnalysisMode::Roofline | AnalysisMode::RooflinePorts => {
            let timing = match port_timing {
                Some(t) if mode == AnalysisMode::RooflinePorts => t,
                _ => incore::timings_from_peak(ir, machine)?,
            };
            let single = compose_roofline(&timing, &analysis.traffic, machine, ir, 1, None)?;
            let t_mem = transfers.last().map_or(0.0, |t| t.cycles);
            let saturation = match saturation_point(single.prediction(), t_mem) {
                Ok((ratio, cores)) => Saturation::At { ratio, cores },
                Err(_) => Saturation::CacheResident,
            };
            let table = if cores == 1 {
                Roofline { saturation: Some(saturation), ..single }
            } else {
                compose_roofline(&timing, &analysis.traffic, machine, ir, cores, Some(saturation))?
            };
            let value = table.prediction();
            roofline = Some(table);
            (Some(timing), value)
        }
    };

    let performance = Performance {
        cy_per_cl: headline,
        unit,
        value: convert_units(headline, ir, machine, unit)?,
    };
    let warnings = analysis.traffic.warnings.iter().map(|w| w.to_string()).collect();
    Ok(ModelReport {
        mode,
        machine: machine.arch_name().to_string(),
        clock_hz: machine.clock_hz,
        cores,
        kernel: KernelSummary {
            loops: ir.loops.iter().map(|l| (l.index.clone(), l.trip_count())).collect(),
            flops_per_iteration: ir.flops_per_iteration.total,
            iterations_per_cacheline: incore::iterations_per_cacheline(ir, machine),
        },
        traffic: analysis.traffic,
        layer_conditions: analysis.layer_conditions,
        incore,
        transfers,
        ecm,
        roofline,
        performance,
        warnings,
    })
}
