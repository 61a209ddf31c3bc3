//! YAML layout of machine files. Keys follow the human-readable spelling
//! common to hardware description files (`cores per socket`, `clock`, ...).

use std::collections::BTreeMap;

use serde_yaml::{Mapping, Value};

use super::units::{format_quantity, parse_quantity};
use super::{
    BandwidthMeasurement, BenchmarkKernelSpec, FlopsPerCycle, MachineDescription, MachineError,
    MemoryLevelSpec, Precision, StreamSpec,
};

const KNOWN_KEYS: &[&str] = &[
    "clock",
    "cores per socket",
    "sockets",
    "threads per core",
    "cacheline size",
    "micro-architecture",
    "model name",
    "FLOPs per cycle",
    "overlapping ports",
    "non-overlapping ports",
    "memory hierarchy",
    "benchmarks",
];

fn schema(key: &str, message: impl Into<String>) -> MachineError {
    MachineError::Schema {
        key: key.to_string(),
        message: message.into(),
    }
}

struct Map<'a> {
    path: String,
    map: &'a Mapping,
}

impl<'a> Map<'a> {
    fn new(path: impl Into<String>, value: &'a Value) -> Result<Self, MachineError> {
        let path = path.into();
        match value {
            Value::Mapping(map) => Ok(Map { path, map }),
            _ => Err(schema(&path, "expected a mapping")),
        }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn opt(&self, k: &str) -> Option<&'a Value> {
        self.map.get(k).filter(|v| !v.is_null())
    }

    fn req(&self, k: &str) -> Result<&'a Value, MachineError> {
        self.map
            .get(k)
            .ok_or_else(|| schema(&self.key(k), "required key is missing"))
    }

    fn quantity(&self, k: &str, base: &str) -> Result<f64, MachineError> {
        quantity(&self.key(k), self.req(k)?, base)
    }

    fn opt_quantity(&self, k: &str, base: &str) -> Result<Option<f64>, MachineError> {
        self.opt(k).map(|v| quantity(&self.key(k), v, base)).transpose()
    }

    fn uint(&self, k: &str) -> Result<u32, MachineError> {
        let v = self.quantity(k, "")?;
        to_u32(&self.key(k), v)
    }

    fn string(&self, k: &str) -> Result<Option<String>, MachineError> {
        match self.opt(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(Value::Number(n)) => Ok(Some(n.to_string())),
            Some(_) => Err(schema(&self.key(k), "expected a string")),
        }
    }

    fn string_list(&self, k: &str) -> Result<Vec<String>, MachineError> {
        let key = self.key(k);
        let Value::Sequence(seq) = self.req(k)? else {
            return Err(schema(&key, "expected a list"));
        };
        seq.iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                _ => Err(schema(&key, "expected a list of port names")),
            })
            .collect()
    }
}

fn to_u32(key: &str, v: f64) -> Result<u32, MachineError> {
    if v.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&v) {
        return Err(schema(key, format!("expected a non-negative integer, got {v}")));
    }
    Ok(v as u32)
}

fn quantity(key: &str, v: &Value, base: &str) -> Result<f64, MachineError> {
    let value = match v {
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| schema(key, "number out of range"))?,
        Value::String(s) => parse_quantity(s, base).map_err(|m| schema(key, m))?,
        _ => return Err(schema(key, format!("expected a number or quantity in {base}"))),
    };
    if !value.is_finite() {
        return Err(schema(key, "value is not finite"));
    }
    Ok(value)
}

fn stream(m: &Map, k: &str) -> Result<StreamSpec, MachineError> {
    let s = Map::new(m.key(k), m.req(k)?)?;
    Ok(StreamSpec {
        bytes: to_u32(&s.key("bytes"), s.quantity("bytes", "B")?)?,
        count: s.uint("streams")?,
    })
}

pub(super) fn from_yaml(text: &str) -> Result<MachineDescription, MachineError> {
    let doc: Value = serde_yaml::from_str(text).map_err(|e| schema("<document>", e.to_string()))?;
    let root = Map::new("", &doc)?;

    let mut flops_per_cycle = BTreeMap::new();
    let fpc = Map::new("FLOPs per cycle", root.req("FLOPs per cycle")?)?;
    for (p, name) in [(Precision::SP, "SP"), (Precision::DP, "DP")] {
        if let Some(v) = fpc.opt(name) {
            let e = Map::new(fpc.key(name), v)?;
            flops_per_cycle.insert(p, FlopsPerCycle {
                total: e.quantity("total", "")?,
                add: e.quantity("ADD", "")?,
                mul: e.quantity("MUL", "")?,
            });
        }
    }

    let Value::Sequence(levels) = root.req("memory hierarchy")? else {
        return Err(schema("memory hierarchy", "expected a list of levels"));
    };
    let mut memory_hierarchy = Vec::new();
    for (i, v) in levels.iter().enumerate() {
        let l = Map::new(format!("memory hierarchy[{i}]"), v)?;
        let size = l.opt_quantity("size per group", "B")?;
        memory_hierarchy.push(MemoryLevelSpec {
            level_name: l
                .string("level")?
                .ok_or_else(|| schema(&l.key("level"), "required key is missing"))?,
            cores_per_group: l.uint("cores per group")?,
            threads_per_group: l.uint("threads per group")?,
            groups: l.uint("groups")?,
            size_per_group_bytes: size
                .map(|s| {
                    if s.fract() != 0.0 || s < 0.0 {
                        Err(schema(&l.key("size per group"), "size must be whole bytes"))
                    } else {
                        Ok(s as u64)
                    }
                })
                .transpose()?,
            cycles_per_cacheline_transfer: l.opt_quantity("cycles per cacheline transfer", "")?,
            bandwidth: l.opt_quantity("bandwidth", "B/s")?,
            latency_penalty_cycles: l.opt_quantity("latency penalty cycles", "")?.unwrap_or(0.0),
        });
    }

    let bench = Map::new("benchmarks", root.req("benchmarks")?)?;
    let kernels = Map::new(bench.key("kernels"), bench.req("kernels")?)?;
    let mut benchmark_kernels = BTreeMap::new();
    for (name, v) in kernels.map {
        let Value::String(name) = name else {
            return Err(schema(&kernels.path, "kernel names must be strings"));
        };
        let k = Map::new(kernels.key(name), v)?;
        benchmark_kernels.insert(name.clone(), BenchmarkKernelSpec {
            name: name.clone(),
            flops_per_iteration: k.uint("FLOPs per iteration")?,
            read_streams: stream(&k, "read streams")?,
            write_streams: stream(&k, "write streams")?,
            readwrite_streams: stream(&k, "read+write streams")?,
        });
    }
    let Value::Sequence(meas) = bench.req("measurements")? else {
        return Err(schema("benchmarks.measurements", "expected a list"));
    };
    let mut measurements = Vec::new();
    for (i, v) in meas.iter().enumerate() {
        let m = Map::new(format!("benchmarks.measurements[{i}]"), v)?;
        let need = |k: &str| {
            m.string(k)?
                .ok_or_else(|| schema(&m.key(k), "required key is missing"))
        };
        measurements.push(BandwidthMeasurement {
            level_name: need("level")?,
            kernel_name: need("kernel")?,
            threads: m.uint("threads")?,
            bandwidth_bytes_per_s: m.quantity("bandwidth", "B/s")?,
        });
    }

    let mut metadata = BTreeMap::new();
    for (k, v) in root.map {
        let Value::String(k) = k else {
            return Err(schema("<document>", "top-level keys must be strings"));
        };
        if !KNOWN_KEYS.contains(&k.as_str()) {
            metadata.insert(k.clone(), v.clone());
        }
    }

    Ok(MachineDescription {
        clock_hz: root.quantity("clock", "Hz")?,
        cores_per_socket: root.uint("cores per socket")?,
        sockets: root.uint("sockets")?,
        threads_per_core: root.uint("threads per core")?,
        cacheline_bytes: to_u32("cacheline size", root.quantity("cacheline size", "B")?)?,
        micro_architecture: root.string("micro-architecture")?,
        model_name: root.string("model name")?,
        flops_per_cycle,
        overlapping_ports: root.string_list("overlapping ports")?,
        non_overlapping_ports: root.string_list("non-overlapping ports")?,
        memory_hierarchy,
        benchmark_kernels,
        measurements,
        metadata,
    })
}

fn s(v: impl Into<String>) -> Value {
    Value::String(v.into())
}

fn num(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        Value::Number((v as i64).into())
    } else {
        Value::Number(v.into())
    }
}

fn opt(v: Option<Value>) -> Value {
    v.unwrap_or(Value::Null)
}

fn mapping<const N: usize>(entries: [(&str, Value); N]) -> Value {
    let mut m = Mapping::new();
    for (k, v) in entries {
        m.insert(s(k), v);
    }
    Value::Mapping(m)
}

fn stream_value(st: StreamSpec) -> Value {
    mapping([
        ("bytes", s(format_quantity(st.bytes as f64, "B"))),
        ("streams", num(st.count as f64)),
    ])
}

pub(super) fn to_yaml(m: &MachineDescription) -> String {
    let mut root = Mapping::new();
    let mut put = |k: &str, v: Value| {
        root.insert(s(k), v);
    };
    if let Some(n) = &m.model_name {
        put("model name", s(n.clone()));
    }
    if let Some(a) = &m.micro_architecture {
        put("micro-architecture", s(a.clone()));
    }
    put("clock", s(format_quantity(m.clock_hz, "Hz")));
    put("sockets", num(m.sockets as f64));
    put("cores per socket", num(m.cores_per_socket as f64));
    put("threads per core", num(m.threads_per_core as f64));
    put("cacheline size", s(format_quantity(m.cacheline_bytes as f64, "B")));
    let mut fpc = Mapping::new();
    for (p, f) in &m.flops_per_cycle {
        fpc.insert(
            s(p.to_string()),
            mapping([("total", num(f.total)), ("ADD", num(f.add)), ("MUL", num(f.mul))]),
        );
    }
    put("FLOPs per cycle", Value::Mapping(fpc));
    let ports = |p: &[String]| Value::Sequence(p.iter().map(|x| s(x.clone())).collect());
    put("overlapping ports", ports(&m.overlapping_ports));
    put("non-overlapping ports", ports(&m.non_overlapping_ports));
    put(
        "memory hierarchy",
        Value::Sequence(
            m.memory_hierarchy
                .iter()
                .map(|l| {
                    mapping([
                        ("level", s(l.level_name.clone())),
                        ("cores per group", num(l.cores_per_group as f64)),
                        ("threads per group", num(l.threads_per_group as f64)),
                        ("groups", num(l.groups as f64)),
                        (
                            "size per group",
                            opt(l.size_per_group_bytes.map(|b| s(format_quantity(b as f64, "B")))),
                        ),
                        ("cycles per cacheline transfer", opt(l.cycles_per_cacheline_transfer.map(num))),
                        ("bandwidth", opt(l.bandwidth.map(|b| s(format_quantity(b, "B/s"))))),
                        ("latency penalty cycles", num(l.latency_penalty_cycles)),
                    ])
                })
                .collect(),
        ),
    );
    let mut kernels = Mapping::new();
    for (name, k) in &m.benchmark_kernels {
        kernels.insert(
            s(name.clone()),
            mapping([
                ("FLOPs per iteration", num(k.flops_per_iteration as f64)),
                ("read streams", stream_value(k.read_streams)),
                ("read+write streams", stream_value(k.readwrite_streams)),
                ("write streams", stream_value(k.write_streams)),
            ]),
        );
    }
    let measurements = m
        .measurements
        .iter()
        .map(|x| {
            mapping([
                ("level", s(x.level_name.clone())),
                ("kernel", s(x.kernel_name.clone())),
                ("threads", num(x.threads as f64)),
                ("bandwidth", s(format_quantity(x.bandwidth_bytes_per_s, "B/s"))),
            ])
        })
        .collect();
    put(
        "benchmarks",
        mapping([("kernels", Value::Mapping(kernels)), ("measurements", Value::Sequence(measurements))]),
    );
    for (k, v) in &m.metadata {
        put(k, v.clone());
    }
    serde_yaml::to_string(&Value::Mapping(root)).expect("YAML values always serialize")
}
