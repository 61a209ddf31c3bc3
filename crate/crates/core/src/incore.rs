//! In-core execution time per cache line of work.
//!
//! Port-cycle tables are small TOML files holding the throughput of one
//! assembly loop body per execution port:
//!
//! ```toml
//! source = "static analyzer output, AVX build"
//! iterations_per_body = 16
//!
//! [ports]
//! "0" = 12.0
//! "1" = 19.0
//! "2D" = 16.0
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::KernelIR;
use crate::machine::{MachineDescription, MachineError, Precision};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InCoreError {
    #[error("cannot read port table {path}: {message}")]
    Io { path: String, message: String },
    #[error("port table schema error: {0}")]
    Schema(String),
    #[error("port `{0}` is not listed by the machine description")]
    UnknownPort(String),
    #[error("port table covers zero iterations per body")]
    ZeroIterations,
    #[error("port `{port}` has invalid cycle count {cycles}")]
    InvalidCycles { port: String, cycles: f64 },
    #[error(transparent)]
    Machine(#[from] MachineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortCycleTable {
    #[serde(default)]
    pub source: String,
    pub iterations_per_body: u32,
    pub ports: BTreeMap<String, f64>,
}

impl PortCycleTable {
    pub fn from_toml_str(text: &str) -> Result<Self, InCoreError> {
        let table: PortCycleTable =
            toml::from_str(text).map_err(|e| InCoreError::Schema(e.message().to_string()))?;
        if table.iterations_per_body == 0 {
            return Err(InCoreError::ZeroIterations);
        }
        for (port, &cycles) in &table.ports {
            if !cycles.is_finite() || cycles < 0.0 {
                return Err(InCoreError::InvalidCycles {
                    port: port.clone(),
                    cycles,
                });
            }
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InCoreError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| InCoreError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("port tables always serialize")
    }

    /// Same table with every port count multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut t = self.clone();
        t.ports.values_mut().for_each(|c| *c *= factor);
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InCoreMode {
    Ports,
    Peak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InCoreTiming {
    pub t_ol_cy_per_cl: f64,
    pub t_nol_cy_per_cl: f64,
    pub mode: InCoreMode,
}

impl InCoreTiming {
    pub fn core_cycles(&self) -> f64 {
        self.t_ol_cy_per_cl.max(self.t_nol_cy_per_cl)
    }
}

pub fn iterations_per_cacheline(ir: &KernelIR, machine: &MachineDescription) -> f64 {
    f64::from(machine.cacheline_bytes) / ir.element_size() as f64
}

/// Scale per-body port cycles to one cache line of work.
pub fn timings_from_ports(
    table: &PortCycleTable,
    machine: &MachineDescription,
    ir: &KernelIR,
) -> Result<InCoreTiming, InCoreError> {
    if table.iterations_per_body == 0 {
        return Err(InCoreError::ZeroIterations);
    }
    let scale = iterations_per_cacheline(ir, machine) / f64::from(table.iterations_per_body);
    let (mut ol, mut nol) = (0.0f64, 0.0f64);
    for (port, &cycles) in &table.ports {
        if machine.non_overlapping_ports.contains(port) {
            nol = nol.max(cycles);
        } else if machine.overlapping_ports.contains(port) {
            ol = ol.max(cycles);
        } else {
            return Err(InCoreError::UnknownPort(port.clone()));
        }
    }
    Ok(InCoreTiming {
        t_ol_cy_per_cl: ol * scale,
        t_nol_cy_per_cl: nol * scale,
        mode: InCoreMode::Ports,
    })
}

/// Arithmetic time at the double-precision peak; the register to L1 traffic
/// is handled as an extra bandwidth level by the Roofline model.
pub fn timings_from_peak(ir: &KernelIR, machine: &MachineDescription) -> Result<InCoreTiming, InCoreError> {
    let flops = f64::from(ir.flops_per_iteration.total) * iterations_per_cacheline(ir, machine);
    Ok(InCoreTiming {
        t_ol_cy_per_cl: machine.peak_cycles(flops, Precision::DP)?,
        t_nol_cy_per_cl: 0.0,
        mode: InCoreMode::Peak,
    })
}
