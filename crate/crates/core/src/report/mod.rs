//! Command-line driver: request handling, report rendering, N-sweeps and
//! comparison against measured results.
//!
//! [`run`] turns an [`AnalysisRequest`] into an [`Output`] holding both the
//! rendered text and the versioned JSON document. Both are produced from
//! the same [`Body`] value.

pub mod cli;
mod compare;
mod render;
mod sweep;

pub use compare::{compare, read_measurements, CompareReport, CompareRow, MeasuredResult, FLAG_THRESHOLD};
pub use sweep::{log_spaced, sweep, Regime, SweepRange, SweepResult, SweepRow};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::incore::{InCoreError, PortCycleTable};
use crate::kernel::{parse_kernel, KernelError, KernelIR, KernelSource};
use crate::machine::{load_machine, MachineDescription, MachineError};
use crate::model::{evaluate, AnalysisMode, ModelError, ModelInput, ModelOptions, ModelReport, Unit};

/// Identifier of the JSON document layout.
pub const SCHEMA_NAME: &str = "kernmodel-report";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("input error: {0}")]
    Parse(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("model error: {0}")]
    Model(String),
}

impl ReportError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Usage(_) => 1,
            ReportError::Parse(_) => 2,
            ReportError::Schema(_) => 3,
            ReportError::Model(_) => 4,
        }
    }
}

impl From<KernelError> for ReportError {
    fn from(e: KernelError) -> Self {
        ReportError::Parse(e.to_string())
    }
}

impl From<MachineError> for ReportError {
    fn from(e: MachineError) -> Self {
        match e {
            MachineError::Io { .. } => ReportError::Parse(e.to_string()),
            MachineError::NoMeasurement { .. } => ReportError::Model(e.to_string()),
            _ => ReportError::Schema(e.to_string()),
        }
    }
}

impl From<InCoreError> for ReportError {
    fn from(e: InCoreError) -> Self {
        match e {
            InCoreError::Io { .. } => ReportError::Parse(e.to_string()),
            InCoreError::Machine(m) => m.into(),
            _ => ReportError::Schema(e.to_string()),
        }
    }
}

impl From<ModelError> for ReportError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::MissingPortTable(_) | ModelError::ZeroCores => ReportError::Usage(e.to_string()),
            ModelError::Machine(m) => m.into(),
            ModelError::InCore(i) => i.into(),
            _ => ReportError::Model(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Analysis(AnalysisMode),
    Compare,
    Sweep,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Analysis(m) => m.fmt(f),
            Mode::Compare => f.write_str("Compare"),
            Mode::Sweep => f.write_str("Sweep"),
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Compare" => Ok(Mode::Compare),
            "Sweep" => Ok(Mode::Sweep),
            other => other.parse().map(Mode::Analysis).map_err(|_| {
                format!(
                    "unknown mode `{other}` (expected Roofline, RooflinePorts, ECM, ECMData, ECMCore, Compare or Sweep)"
                )
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRequest {
    pub kernel_path: PathBuf,
    pub machine_path: PathBuf,
    pub mode: Mode,
    pub constants: BTreeMap<String, i64>,
    pub unit: Unit,
    pub cores: u32,
    pub ports_path: Option<PathBuf>,
    pub measured_path: Option<PathBuf>,
    pub sweep: SweepRange,
    pub options: ModelOptions,
}

impl AnalysisRequest {
    pub fn new(kernel: impl Into<PathBuf>, machine: impl Into<PathBuf>, mode: Mode) -> Self {
        AnalysisRequest {
            kernel_path: kernel.into(),
            machine_path: machine.into(),
            mode,
            constants: BTreeMap::new(),
            unit: Unit::CyPerCl,
            cores: 1,
            ports_path: None,
            measured_path: None,
            sweep: SweepRange::default(),
            options: ModelOptions::default(),
        }
    }

    pub fn constant(mut self, name: &str, value: i64) -> Self {
        self.constants.insert(name.to_string(), value);
        self
    }

    pub fn ports(mut self, path: impl Into<PathBuf>) -> Self {
        self.ports_path = Some(path.into());
        self
    }

    /// Kernel identifier used to match measured results: the file stem.
    pub fn kernel_id(&self) -> String {
        self.kernel_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    fn check(&self) -> Result<(), ReportError> {
        if self.cores == 0 {
            return Err(ReportError::Usage("--cores must be at least 1".into()));
        }
        if let Mode::Analysis(m) = self.mode {
            if m.needs_ports() && self.ports_path.is_none() {
                return Err(ReportError::Usage(format!("mode {m} needs a port table (--ports FILE)")));
            }
        }
        if self.mode == Mode::Compare && self.measured_path.is_none() {
            return Err(ReportError::Usage("mode Compare needs --measured FILE".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub kernel: String,
    pub kernel_id: String,
    pub machine: String,
    pub arch: String,
    pub mode: String,
    pub constants: BTreeMap<String, i64>,
    pub unit: Unit,
    pub cores: u32,
    pub ports: Option<String>,
    pub measured: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Body {
    Model(Box<ModelReport>),
    Sweep(SweepResult),
    Compare(CompareReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub schema: String,
    pub version: u32,
    pub request: RequestSummary,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub document: Document,
    pub text: String,
}

impl Output {
    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.document).expect("document serializes");
        s.push('\n');
        s
    }
}

fn read_text(path: &Path, what: &str) -> Result<String, ReportError> {
    std::fs::read_to_string(path)
        .map_err(|e| ReportError::Parse(format!("cannot read {what} {}: {e}", path.display())))
}

/// Parsed inputs shared by every mode.
pub struct Loaded {
    pub source: KernelSource,
    pub ir: KernelIR,
    pub machine: MachineDescription,
    pub ports: Option<PortCycleTable>,
}

pub fn load(req: &AnalysisRequest) -> Result<Loaded, ReportError> {
    let mut source = KernelSource::new(read_text(&req.kernel_path, "kernel")?);
    for (n, v) in &req.constants {
        source = source.with_constant(n, *v);
    }
    let ir = parse_kernel(&source)?;
    let machine = load_machine(&req.machine_path)?;
    let ports = req.ports_path.as_ref().map(PortCycleTable::load).transpose()?;
    Ok(Loaded { source, ir, machine, ports })
}

pub(crate) fn model_input<'a>(l: &'a Loaded, req: &AnalysisRequest, mode: AnalysisMode, cores: u32) -> ModelInput<'a> {
    ModelInput {
        ir: &l.ir,
        machine: &l.machine,
        ports: l.ports.as_ref(),
        mode,
        cores,
        unit: req.unit,
        options: req.options,
    }
}

pub fn run(req: &AnalysisRequest) -> Result<Output, ReportError> {
    req.check()?;
    let loaded = if req.mode == Mode::Sweep {
        // The swept constant need not be bound on the command line.
        let mut first = req.clone();
        first.constants.insert(req.sweep.variable.clone(), req.sweep.start);
        load(&first)?
    } else {
        load(req)?
    };
    let body = match req.mode {
        Mode::Analysis(mode) => Body::Model(Box::new(evaluate(&model_input(&loaded, req, mode, req.cores))?)),
        Mode::Sweep => Body::Sweep(sweep(req, &loaded)?),
        Mode::Compare => {
            let path = req.measured_path.as_ref().expect("checked");
            let measured = read_measurements(&read_text(path, "measured results")?)?;
            Body::Compare(compare(req, &loaded, &measured)?)
        }
    };
    let document = Document {
        schema: SCHEMA_NAME.to_string(),
        version: SCHEMA_VERSION,
        request: RequestSummary {
            kernel: req.kernel_path.display().to_string(),
            kernel_id: req.kernel_id(),
            machine: req.machine_path.display().to_string(),
            arch: loaded.machine.arch_name().to_string(),
            mode: req.mode.to_string(),
            constants: req.constants.clone(),
            unit: req.unit,
            cores: req.cores,
            ports: req.ports_path.as_ref().map(|p| p.display().to_string()),
            measured: req.measured_path.as_ref().map(|p| p.display().to_string()),
        },
        body,
    };
    let text = render::render(&document, &loaded);
    Ok(Output { document, text })
}
