use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::incore::iterations_per_cacheline;
use crate::kernel::KernelIR;
use crate::machine::MachineDescription;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[default]
    #[serde(rename = "cy/CL")]
    CyPerCl,
    #[serde(rename = "It/s")]
    ItPerS,
    #[serde(rename = "FLOP/s")]
    FlopPerS,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::CyPerCl => "cy/CL",
            Unit::ItPerS => "It/s",
            Unit::FlopPerS => "FLOP/s",
        })
    }
}

impl FromStr for Unit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cy/CL" => Ok(Unit::CyPerCl),
            "It/s" => Ok(Unit::ItPerS),
            "FLOP/s" => Ok(Unit::FlopPerS),
            other => Err(format!("unknown unit `{other}` (expected cy/CL, It/s or FLOP/s)")),
        }
    }
}

/// Factor `k` with `value = k / cy_per_cl`, for the rate units.
fn rate_factor(ir: &KernelIR, machine: &MachineDescription, unit: Unit) -> f64 {
    let it = iterations_per_cacheline(ir, machine) * machine.clock_hz;
    match unit {
        Unit::CyPerCl => 1.0,
        Unit::ItPerS => it,
        Unit::FlopPerS => it * f64::from(ir.flops_per_iteration.total),
    }
}

pub fn convert_units(
    cy_per_cl: f64,
    ir: &KernelIR,
    machine: &MachineDescription,
    unit: Unit,
) -> Result<f64, ModelError> {
    if unit == Unit::CyPerCl {
        return Ok(cy_per_cl);
    }
    if cy_per_cl == 0.0 {
        return Err(ModelError::ZeroCycles);
    }
    Ok(rate_factor(ir, machine, unit) / cy_per_cl)
}

/// Inverse of [`convert_units`].
pub fn cycles_from_unit(
    value: f64,
    ir: &KernelIR,
    machine: &MachineDescription,
    unit: Unit,
) -> Result<f64, ModelError> {
    if unit == Unit::CyPerCl {
        return Ok(value);
    }
    if value == 0.0 {
        return Err(ModelError::ZeroCycles);
    }
    Ok(rate_factor(ir, machine, unit) / value)
}
