use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::Parser;

use super::{run, AnalysisRequest, Mode, ReportError, SweepRange};
use crate::cache::CacheOptions;
use crate::model::{ModelOptions, Unit};

#[derive(Debug, Parser)]
#[command(name = "kernmodel", version, about = "ECM and Roofline performance models for loop kernels")]
pub struct Cli {
    /// Kernel source file.
    pub kernel: PathBuf,
    /// Machine description file (YAML).
    #[arg(short = 'm', long = "machine")]
    pub machine: PathBuf,
    /// Roofline, RooflinePorts, ECM, ECMData, ECMCore, Compare or Sweep.
    #[arg(short = 'p', long = "mode")]
    pub mode: Mode,
    /// Bind a kernel constant, e.g. `-D N 6000`. Repeatable.
    #[arg(short = 'D', long = "define", num_args = 2, value_names = ["NAME", "VALUE"], action = clap::ArgAction::Append)]
    pub define: Vec<String>,
    /// cy/CL, It/s or FLOP/s.
    #[arg(long, default_value = "cy/CL")]
    pub unit: Unit,
    #[arg(long, default_value_t = 1)]
    pub cores: u32,
    /// Port-cycle table (TOML).
    #[arg(long)]
    pub ports: Option<PathBuf>,
    /// Measured results (CSV) for Compare.
    #[arg(long)]
    pub measured: Option<PathBuf>,
    /// Write the JSON document to this path. `-` prints it to stdout in place of the text report.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, default_value = "N")]
    pub sweep_var: String,
    #[arg(long, num_args = 2, value_names = ["START", "END"], default_values = ["50", "2000"])]
    pub sweep_range: Vec<i64>,
    #[arg(long, default_value_t = 100)]
    pub sweep_points: usize,
    /// Give each core only its share of shared caches.
    #[arg(long)]
    pub split_shared_caches: bool,
    /// Add per-level latency penalties to transfer times.
    #[arg(long)]
    pub latency_penalties: bool,
}

impl Cli {
    pub fn request(&self) -> Result<AnalysisRequest, ReportError> {
        let mut req = AnalysisRequest::new(&self.kernel, &self.machine, self.mode);
        for pair in self.define.chunks(2) {
            let [name, value] = pair else {
                return Err(ReportError::Usage("-D needs NAME VALUE".into()));
            };
            let v: i64 = value
                .parse()
                .map_err(|_| ReportError::Usage(format!("-D {name}: `{value}` is not an integer")))?;
            req.constants.insert(name.clone(), v);
        }
        req.unit = self.unit;
        req.cores = self.cores;
        req.ports_path = self.ports.clone();
        req.measured_path = self.measured.clone();
        req.sweep = SweepRange {
            variable: self.sweep_var.clone(),
            start: self.sweep_range[0],
            end: self.sweep_range[1],
            points: self.sweep_points,
        };
        req.options = ModelOptions {
            cache: CacheOptions {
                split_shared_caches: self.split_shared_caches,
            },
            latency_penalties: self.latency_penalties,
        };
        Ok(req)
    }
}

/// Run the command line; returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match cli.request().and_then(|r| run(&r)) {
        Ok(out) => {
            match &cli.json {
                Some(p) if p.as_os_str() == "-" => {
                    let _ = stdout.write_all(out.json().as_bytes());
                }
                Some(p) => {
                    let _ = stdout.write_all(out.text.as_bytes());
                    if let Err(e) = std::fs::write(p, out.json()) {
                        let _ = writeln!(stderr, "error: cannot write {}: {e}", p.display());
                        return 2;
                    }
                }
                None => {
                    let _ = stdout.write_all(out.text.as_bytes());
                }
            }
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
