//! Hardware description files: clock, topology, execution ports, the memory
//! hierarchy and streaming microbenchmark bandwidths.

mod schema;
pub mod units;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MachineError {
    #[error("cannot read machine file {path}: {message}")]
    Io { path: String, message: String },
    #[error("machine file schema error at `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("inconsistent machine description: {0}")]
    Consistency(String),
    #[error("no bandwidth measurement for level {level} with {threads} thread(s)")]
    NoMeasurement { level: String, threads: u32 },
    #[error("machine file has no peak FLOP rate for precision {0}")]
    UnknownPrecision(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Precision {
    SP,
    DP,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::SP => "SP",
            Precision::DP => "DP",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsPerCycle {
    pub total: f64,
    pub add: f64,
    pub mul: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryLevelSpec {
    pub level_name: String,
    pub cores_per_group: u32,
    pub threads_per_group: u32,
    pub groups: u32,
    /// Absent for main memory.
    pub size_per_group_bytes: Option<u64>,
    /// Cost of moving one cache line between this level and the next one;
    /// absent where the transfer is bandwidth-based.
    pub cycles_per_cacheline_transfer: Option<f64>,
    pub bandwidth: Option<f64>,
    /// Optional per-cache-line latency penalty, only applied when enabled.
    pub latency_penalty_cycles: f64,
}

impl MemoryLevelSpec {
    pub fn is_memory(&self) -> bool {
        self.size_per_group_bytes.is_none()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub bytes: u32,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkKernelSpec {
    pub name: String,
    pub flops_per_iteration: u32,
    /// Includes read+write streams.
    pub read_streams: StreamSpec,
    /// Includes read+write streams.
    pub write_streams: StreamSpec,
    pub readwrite_streams: StreamSpec,
}

impl BenchmarkKernelSpec {
    /// Cache-line stream signature `(reads, writes)` as seen by a
    /// write-allocate hierarchy: pure write streams also load their lines.
    pub fn signature(&self) -> (u32, u32) {
        let pure_writes = self
            .write_streams
            .count
            .saturating_sub(self.readwrite_streams.count);
        (self.read_streams.count + pure_writes, self.write_streams.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthMeasurement {
    pub level_name: String,
    pub kernel_name: String,
    pub threads: u32,
    pub bandwidth_bytes_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineDescription {
    pub clock_hz: f64,
    pub cores_per_socket: u32,
    pub sockets: u32,
    pub threads_per_core: u32,
    pub cacheline_bytes: u32,
    pub micro_architecture: Option<String>,
    pub model_name: Option<String>,
    pub flops_per_cycle: BTreeMap<Precision, FlopsPerCycle>,
    pub overlapping_ports: Vec<String>,
    pub non_overlapping_ports: Vec<String>,
    /// Ordered from L1 to main memory.
    pub memory_hierarchy: Vec<MemoryLevelSpec>,
    pub benchmark_kernels: BTreeMap<String, BenchmarkKernelSpec>,
    pub measurements: Vec<BandwidthMeasurement>,
    /// Keys this crate does not interpret, kept verbatim.
    pub metadata: BTreeMap<String, serde_yaml::Value>,
}

pub fn load_machine(path: impl AsRef<Path>) -> Result<MachineDescription, MachineError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| MachineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    MachineDescription::from_yaml_str(&text)
}

impl MachineDescription {
    pub fn from_yaml_str(text: &str) -> Result<Self, MachineError> {
        let machine = schema::from_yaml(text)?;
        machine.validate()?;
        Ok(machine)
    }

    pub fn to_yaml_string(&self) -> String {
        schema::to_yaml(self)
    }

    /// Label for reports: the micro-architecture tag, or the model name.
    pub fn arch_name(&self) -> &str {
        self.micro_architecture
            .as_deref()
            .or(self.model_name.as_deref())
            .unwrap_or("unknown")
    }

    pub fn validate(&self) -> Result<(), MachineError> {
        let fail = |m: String| Err(MachineError::Consistency(m));
        if !(self.clock_hz > 0.0) {
            return fail(format!("clock must be positive, got {} Hz", self.clock_hz));
        }
        if !self.cacheline_bytes.is_power_of_two() {
            return fail(format!(
                "cache line size {} B is not a power of two",
                self.cacheline_bytes
            ));
        }
        if let Some(p) = self
            .overlapping_ports
            .iter()
            .find(|p| self.non_overlapping_ports.contains(p))
        {
            return fail(format!("port `{p}` is both overlapping and non-overlapping"));
        }
        let levels = &self.memory_hierarchy;
        if levels.len() < 2 {
            return fail("the memory hierarchy needs at least one cache level and memory".into());
        }
        let (mem, caches) = levels.split_last().unwrap();
        if !mem.is_memory() {
            return fail(format!(
                "the last level `{}` must be main memory (no size)",
                mem.level_name
            ));
        }
        if mem.cycles_per_cacheline_transfer.is_some() {
            return fail("main memory transfers are bandwidth based".into());
        }
        let mut prev: Option<&MemoryLevelSpec> = None;
        for (i, level) in caches.iter().enumerate() {
            let Some(size) = level.size_per_group_bytes else {
                return fail(format!(
                    "cache level `{}` has no size; only the last level may be memory",
                    level.level_name
                ));
            };
            if size == 0 || level.cores_per_group == 0 {
                return fail(format!("cache level `{}` is empty", level.level_name));
            }
            if let Some(p) = prev {
                if size <= p.size_per_group_bytes.unwrap() {
                    return fail(format!(
                        "{} ({size} B) is not larger than {} ({} B)",
                        level.level_name,
                        p.level_name,
                        p.size_per_group_bytes.unwrap()
                    ));
                }
            }
            let last_cache = i + 1 == caches.len();
            match level.cycles_per_cacheline_transfer {
                Some(c) if c < 0.0 => {
                    return fail(format!("{} has negative transfer cycles", level.level_name))
                }
                None if !last_cache => {
                    return fail(format!(
                        "{} needs `cycles per cacheline transfer`; only the last cache level may use measured bandwidth",
                        level.level_name
                    ))
                }
                _ => {}
            }
            prev = Some(level);
        }
        let mut names: Vec<&str> = levels.iter().map(|l| l.level_name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return fail("duplicate memory level names".into());
        }
        for k in self.benchmark_kernels.values() {
            for (what, s) in [
                ("read", k.read_streams),
                ("write", k.write_streams),
                ("read+write", k.readwrite_streams),
            ] {
                if s.count > 0 && s.bytes == 0 {
                    return fail(format!("kernel `{}` has {what} streams of 0 bytes", k.name));
                }
            }
        }
        for m in &self.measurements {
            if !(m.bandwidth_bytes_per_s > 0.0) || m.threads == 0 {
                return fail(format!(
                    "measurement {}/{}/{} threads is not positive",
                    m.level_name, m.kernel_name, m.threads
                ));
            }
            if !self.benchmark_kernels.contains_key(&m.kernel_name) {
                return fail(format!("measurement for unknown kernel `{}`", m.kernel_name));
            }
            if self.level(&m.level_name).is_none() {
                return fail(format!("measurement for unknown level `{}`", m.level_name));
            }
        }
        Ok(())
    }

    pub fn level(&self, name: &str) -> Option<&MemoryLevelSpec> {
        self.memory_hierarchy.iter().find(|l| l.level_name == name)
    }

    pub fn cache_levels(&self) -> &[MemoryLevelSpec] {
        &self.memory_hierarchy[..self.memory_hierarchy.len() - 1]
    }

    pub fn memory_level(&self) -> &MemoryLevelSpec {
        self.memory_hierarchy.last().unwrap()
    }

    pub fn peak_flops_per_cycle(&self, precision: Precision) -> Result<FlopsPerCycle, MachineError> {
        self.flops_per_cycle
            .get(&precision)
            .copied()
            .ok_or_else(|| MachineError::UnknownPrecision(precision.to_string()))
    }

    /// Arithmetic time for `flops` at the theoretical peak, in cycles.
    pub fn peak_cycles(&self, flops: f64, precision: Precision) -> Result<f64, MachineError> {
        let peak = self.peak_flops_per_cycle(precision)?;
        if flops == 0.0 {
            return Ok(0.0);
        }
        Ok(flops / peak.total)
    }

    /// Closest benchmark to a `(reads, writes)` cache-line stream query at
    /// `level` measured with exactly `threads` threads. `reads` already
    /// includes write-allocate streams. Distance is `|Δreads| + |Δwrites|`;
    /// ties go to the kernel with fewer streams, then to the smaller name.
    pub fn match_benchmark(
        &self,
        level: &str,
        reads: u32,
        writes: u32,
        threads: u32,
    ) -> Result<&BandwidthMeasurement, MachineError> {
        self.measurements
            .iter()
            .filter(|m| m.level_name == level && m.threads == threads)
            .min_by(|a, b| self.match_key(a, reads, writes).cmp(&self.match_key(b, reads, writes)))
            .ok_or_else(|| MachineError::NoMeasurement {
                level: level.to_string(),
                threads,
            })
    }

    fn match_key<'a>(
        &self,
        m: &'a BandwidthMeasurement,
        reads: u32,
        writes: u32,
    ) -> (u32, u32, &'a str) {
        let (r, w) = self.benchmark_kernels[&m.kernel_name].signature();
        (r.abs_diff(reads) + w.abs_diff(writes), r + w, &m.kernel_name)
    }

    /// Highest bandwidth measured for `kernel` at `level` over all thread counts.
    pub fn saturated_bandwidth(&self, level: &str, kernel: &str) -> Option<&BandwidthMeasurement> {
        self.measurements
            .iter()
            .filter(|m| m.level_name == level && m.kernel_name == kernel)
            .max_by(|a, b| {
                a.bandwidth_bytes_per_s
                    .partial_cmp(&b.bandwidth_bytes_per_s)
                    .unwrap_or(Ordering::Equal)
                    .then(b.threads.cmp(&a.threads))
            })
    }

    /// Same machine with every measured bandwidth multiplied by `factor`.
    pub fn with_scaled_bandwidths(&self, factor: f64) -> Self {
        let mut m = self.clone();
        for meas in &mut m.measurements {
            meas.bandwidth_bytes_per_s *= factor;
        }
        m
    }
}
