#![allow(dead_code)]

use std::path::PathBuf;

use kernmodel::incore::PortCycleTable;
use kernmodel::kernel::{parse_kernel, KernelIR, KernelSource};
use kernmodel::machine::{load_machine, MachineDescription};
use rand::Rng;

pub const KERNELS: [&str; 5] = ["2d-5pt", "uxx", "long-range", "kahan-ddot", "triad"];

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn source(name: &str) -> KernelSource {
    KernelSource::new(std::fs::read_to_string(fixture(&format!("kernels/{name}.c"))).unwrap())
}

pub fn kernel(name: &str, consts: &[(&str, i64)]) -> KernelIR {
    let mut src = source(name);
    for (n, v) in consts {
        src = src.with_constant(n, *v);
    }
    parse_kernel(&src).unwrap()
}

pub fn machine(arch: &str) -> MachineDescription {
    load_machine(fixture(&format!("machines/{arch}.yaml"))).unwrap()
}

pub fn ports(arch: &str, name: &str) -> PortCycleTable {
    PortCycleTable::load(fixture(&format!("ports/{arch}/{name}.toml"))).unwrap()
}

/// Sizes used for the in-memory reference predictions.
pub fn in_memory_constants(name: &str) -> Vec<(&'static str, i64)> {
    match name {
        "2d-5pt" => vec![("N", 6000), ("M", 6000)],
        "uxx" => vec![("N", 150), ("M", 150)],
        "long-range" => vec![("N", 100), ("M", 100)],
        _ => vec![("N", 100_000_000)],
    }
}

/// Random stencil-like loop nest in the accepted C subset.
pub fn random_kernel_source(rng: &mut impl Rng) -> String {
    let depth = rng.gen_range(1..=3usize);
    let idx = &["k", "j", "i"][3 - depth..];
    let dims: Vec<&str> = (0..depth).map(|d| if d == 0 && depth == 3 { "M" } else { "N" }).collect();
    let decl_dims: String = dims.iter().map(|d| format!("[{d}]")).collect();
    let arrays = rng.gen_range(1..=3usize);
    let mut text = String::new();
    for a in 0..arrays {
        text.push_str(&format!("double a{a}{decl_dims};\n"));
    }
    text.push_str("double s0, s1;\n\n");
    let halo = 2;
    for (d, ix) in idx.iter().enumerate() {
        text.push_str(&format!(
            "for(int {ix}={halo}; {ix}<{}-{halo}; ++{ix})\n",
            dims[d]
        ));
    }
    let term = |rng: &mut dyn rand::RngCore| -> String {
        match rng.gen_range(0..4) {
            0 => format!("s{}", rng.gen_range(0..2)),
            1 => format!("{}.5", rng.gen_range(0..4)),
            _ => {
                let a = rng.gen_range(0..arrays);
                let subs: String = idx
                    .iter()
                    .map(|ix| match rng.gen_range(-2i64..=2) {
                        0 => format!("[{ix}]"),
                        o if o > 0 => format!("[{ix}+{o}]"),
                        o => format!("[{ix}{o}]"),
                    })
                    .collect();
                format!("a{a}{subs}")
            }
        }
    };
    let terms = rng.gen_range(1..=5);
    let mut rhs = term(rng);
    for _ in 1..terms {
        let op = ["+", "-", "*"][rng.gen_range(0..3)];
        rhs = if rng.gen_bool(0.3) {
            format!("({rhs}) {op} {}", term(rng))
        } else {
            format!("{rhs} {op} {}", term(rng))
        };
    }
    let target = rng.gen_range(0..arrays);
    let subs: String = idx.iter().map(|ix| format!("[{ix}]")).collect();
    let op = if rng.gen_bool(0.25) { "+=" } else { "=" };
    text.push_str(&format!("  a{target}{subs} {op} {rhs};\n"));
    text
}
