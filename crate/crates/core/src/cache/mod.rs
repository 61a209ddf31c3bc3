//! Cache-line traffic per unit of work.
//!
//! [`predict_traffic`] is the analytic predictor: every cache line touched by
//! one unit of work (the iterations producing one cache line of results) is
//! a hit in a level if the footprint of the iterations since its previous
//! use fits into that level. [`lru_oracle`] replays the exact access trace
//! through an inclusive, fully associative LRU hierarchy instead.

mod analytic;
mod oracle;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{AccessKind, IndexTerm, KernelIR};
use crate::machine::MachineDescription;

pub use analytic::{analyze, layer_conditions, predict_traffic, Analysis};
pub use oracle::{lru_oracle, OracleOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CacheError {
    #[error("trace of {accesses} accesses exceeds the simulator limit of {limit}")]
    TooLarge { accesses: u64, limit: u64 },
    #[error("the interior region of the iteration space is empty")]
    EmptyInterior,
}

/// One array reference flattened to a 1-D element offset relative to the
/// position of the same array at the loop center.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatAccess {
    pub array_name: String,
    pub linear_offset_elements: i64,
    pub is_write: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTraffic {
    /// Cache level whose misses and evicts this row counts; the transfers
    /// happen between this level and the next one outward.
    pub level: String,
    pub load_cachelines: f64,
    pub store_cachelines: f64,
    pub total_bytes: f64,
}

impl LevelTraffic {
    pub fn cachelines(&self) -> f64 {
        self.load_cachelines + self.store_cachelines
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitOfWork {
    pub iterations: u32,
    pub cachelines: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrafficWarning {
    /// The loop is too small to fill this level; the whole preceding loop
    /// footprint was used.
    UnresolvableFootprint { level: String },
    /// Innermost-loop stride larger than one cache line.
    NonContiguousStride { array: String, stride_elements: i64 },
}

impl fmt::Display for TrafficWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrafficWarning::UnresolvableFootprint { level } => write!(
                f,
                "loop too small to fill {level}; traffic uses the full loop footprint"
            ),
            TrafficWarning::NonContiguousStride {
                array,
                stride_elements,
            } => write!(
                f,
                "array `{array}` has a non-contiguous inner stride of {stride_elements} elements"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    /// One entry per cache level, L1 first.
    pub levels: Vec<LevelTraffic>,
    pub unit_of_work: UnitOfWork,
    pub warnings: Vec<TrafficWarning>,
}

impl TrafficProfile {
    pub fn level(&self, name: &str) -> Option<&LevelTraffic> {
        self.levels.iter().find(|l| l.level == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum LayerTag {
    None,
    /// Reuse across the innermost `n` loops hits.
    Dim(u32),
}

impl From<LayerTag> for String {
    fn from(t: LayerTag) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for LayerTag {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        if s == "none" {
            return Ok(LayerTag::None);
        }
        s.strip_suffix('D')
            .and_then(|n| n.parse().ok())
            .map(LayerTag::Dim)
            .ok_or_else(|| format!("invalid layer condition tag `{s}`"))
    }
}

impl fmt::Display for LayerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerTag::None => f.write_str("none"),
            LayerTag::Dim(n) => write!(f, "{n}D"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConditionReport {
    /// `(level, tag)`, L1 first.
    pub levels: Vec<(String, LayerTag)>,
}

impl LayerConditionReport {
    /// Compact regime label such as `L1:2D,L2:3D,L3:3D`.
    pub fn label(&self) -> String {
        self.levels
            .iter()
            .map(|(l, t)| format!("{l}:{t}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn tag(&self, level: &str) -> Option<LayerTag> {
        self.levels.iter().find(|(l, _)| l == level).map(|(_, t)| *t)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheOptions {
    /// Divide shared levels by `cores per group`. Off by default: a single
    /// core may use all of a shared cache.
    pub split_shared_caches: bool,
}

/// Capacity in cache lines available to one core at every cache level.
pub fn effective_capacities(machine: &MachineDescription, opts: CacheOptions) -> Vec<(String, u64)> {
    machine
        .cache_levels()
        .iter()
        .map(|l| {
            let mut bytes = l.size_per_group_bytes.unwrap_or(0);
            if opts.split_shared_caches {
                bytes /= u64::from(l.cores_per_group.max(1));
            }
            (l.level_name.clone(), bytes / u64::from(machine.cacheline_bytes))
        })
        .collect()
}

/// Affine form of one reference: `flat = constant + Σ coefs[l] · index_l`.
#[derive(Debug, Clone)]
pub(crate) struct AffineRef {
    pub array: usize,
    pub constant: i64,
    pub coefs: Vec<i64>,
    pub is_write: bool,
}

impl AffineRef {
    pub fn flat(&self, iter: &[i64]) -> i64 {
        self.constant + self.coefs.iter().zip(iter).map(|(c, i)| c * i).sum::<i64>()
    }
}

/// References in execution order plus, per array, the flat index of its
/// first reference at the loop center with all offsets removed.
pub(crate) struct AffineKernel {
    pub refs: Vec<AffineRef>,
    pub array_names: Vec<String>,
    pub array_len: Vec<i64>,
    pub origins: Vec<i64>,
    pub center: Vec<i64>,
}

/// The center is the middle of every loop, moved back in the innermost loop
/// where needed so that `unit` iterations fit before the loop end.
pub(crate) fn affine(ir: &KernelIR, unit: i64) -> AffineKernel {
    let loop_pos = |name: &str| ir.loops.iter().position(|l| l.index == name);
    let inner = ir.loops.len() - 1;
    let center: Vec<i64> = ir
        .loops
        .iter()
        .enumerate()
        .map(|(d, l)| {
            let t = l.trip_count();
            let mut p = t / 2;
            if d == inner {
                p = p.min(t - unit).max(0);
            }
            l.start + p * l.step
        })
        .collect();
    let mut array_names: Vec<String> = Vec::new();
    let mut array_len = Vec::new();
    let mut origins: Vec<i64> = Vec::new();
    let mut refs = Vec::new();
    for acc in &ir.accesses {
        let decl = ir.array(&acc.array).expect("parser guarantees declared arrays");
        let strides = decl.strides();
        let mut constant = 0;
        let mut centered = 0;
        let mut coefs = vec![0; ir.loops.len()];
        for (d, idx) in acc.indices.iter().enumerate() {
            match idx {
                IndexTerm::Direct(v) => {
                    constant += strides[d] * v;
                    centered += strides[d] * v;
                }
                IndexTerm::Relative { index, offset } => {
                    let l = loop_pos(index).expect("parser guarantees loop indices");
                    coefs[l] += strides[d];
                    constant += strides[d] * offset;
                    centered += strides[d] * center[l];
                }
            }
        }
        let array = match array_names.iter().position(|n| n == &acc.array) {
            Some(a) => a,
            None => {
                array_names.push(acc.array.clone());
                array_len.push(decl.len());
                origins.push(centered);
                array_names.len() - 1
            }
        };
        refs.push(AffineRef {
            array,
            constant,
            coefs,
            is_write: acc.kind == AccessKind::Destination,
        });
    }
    AffineKernel {
        refs,
        array_names,
        array_len,
        origins,
        center,
    }
}

pub fn flatten(ir: &KernelIR) -> Vec<FlatAccess> {
    let k = affine(ir, 1);
    k.refs
        .iter()
        .map(|r| FlatAccess {
            array_name: k.array_names[r.array].clone(),
            linear_offset_elements: r.flat(&k.center) - k.origins[r.array],
            is_write: r.is_write,
        })
        .collect()
}

pub(crate) fn elements_per_line(ir: &KernelIR, machine: &MachineDescription) -> i64 {
    (machine.cacheline_bytes as i64 / ir.element_size() as i64).max(1)
}
