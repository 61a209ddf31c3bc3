use serde::{Deserialize, Serialize};

use super::{stream_query, ModelError, Saturation};
use crate::cache::TrafficProfile;
use crate::incore::{iterations_per_cacheline, InCoreMode, InCoreTiming};
use crate::kernel::{AccessKind, KernelIR};
use crate::machine::MachineDescription;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RooflineRow {
    /// `CPU`, `L1`, `L1-L2`, ...
    pub level: String,
    /// Data volume per unit of work; zero for the CPU row.
    pub bytes: f64,
    /// flop/B; `None` for the CPU row and for rows without traffic.
    pub arithmetic_intensity: Option<f64>,
    pub cycles: f64,
    pub bandwidth_bytes_per_s: Option<f64>,
    pub kernel: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roofline {
    pub threads: u32,
    pub rows: Vec<RooflineRow>,
    pub dominant: usize,
    pub saturation: Option<Saturation>,
}

impl Roofline {
    pub fn prediction(&self) -> f64 {
        self.rows[self.dominant].cycles
    }

    pub fn bottleneck(&self) -> &RooflineRow {
        &self.rows[self.dominant]
    }
}

pub fn compose_roofline(
    timing: &InCoreTiming,
    traffic: &TrafficProfile,
    machine: &MachineDescription,
    ir: &KernelIR,
    threads: u32,
    saturation: Option<Saturation>,
) -> Result<Roofline, ModelError> {
    let threads = threads.max(1);
    let n = f64::from(threads);
    let epl = iterations_per_cacheline(ir, machine);
    let flops = f64::from(ir.flops_per_iteration.total) * epl;
    let clock = machine.clock_hz;
    let line = f64::from(machine.cacheline_bytes);

    let t_core = match timing.mode {
        InCoreMode::Peak => timing.t_ol_cy_per_cl,
        InCoreMode::Ports => timing.core_cycles(),
    };
    let mut rows = vec![RooflineRow {
        level: "CPU".into(),
        bytes: 0.0,
        arithmetic_intensity: None,
        cycles: t_core / n,
        bandwidth_bytes_per_s: None,
        kernel: None,
    }];

    let mut row = |label: String, level: &str, bytes: f64, reads: u32, writes: u32| -> Result<(), ModelError> {
        if bytes == 0.0 {
            rows.push(RooflineRow {
                level: label,
                bytes,
                arithmetic_intensity: None,
                cycles: 0.0,
                bandwidth_bytes_per_s: None,
                kernel: None,
            });
            return Ok(());
        }
        let m = machine.match_benchmark(level, reads, writes, threads)?;
        rows.push(RooflineRow {
            level: label,
            bytes,
            arithmetic_intensity: Some(flops / bytes),
            cycles: bytes * clock / m.bandwidth_bytes_per_s,
            bandwidth_bytes_per_s: Some(m.bandwidth_bytes_per_s),
            kernel: Some(m.kernel_name.clone()),
        });
        Ok(())
    };

    let names: Vec<&str> = machine.memory_hierarchy.iter().map(|l| l.level_name.as_str()).collect();
    if timing.mode == InCoreMode::Peak {
        // Register to L1: every array reference moves one element per iteration.
        let refs = ir.accesses.len() as f64;
        let bytes = refs * ir.element_size() as f64 * epl;
        let sources = ir.accesses.iter().filter(|a| a.kind == AccessKind::Source).count() as u32;
        let dests = ir.accesses.iter().filter(|a| a.kind == AccessKind::Destination).count() as u32;
        row(names[0].to_string(), names[0], bytes, sources, dests)?;
    }
    for (k, t) in traffic.levels.iter().enumerate() {
        let Some(next) = names.get(k + 1) else { break };
        let (r, w) = stream_query(t.load_cachelines, t.store_cachelines);
        row(format!("{}-{}", t.level, next), next, t.cachelines() * line, r, w)?;
    }

    let mut dominant = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.cycles > rows[dominant].cycles {
            dominant = i;
        }
    }
    Ok(Roofline {
        threads,
        rows,
        dominant,
        saturation,
    })
}
