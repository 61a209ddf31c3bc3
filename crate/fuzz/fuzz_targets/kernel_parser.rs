#![no_main]

use kernmodel::cache::{predict_traffic, CacheOptions};
use kernmodel::kernel::{parse_kernel, KernelSource};
use kernmodel::machine::MachineDescription;
use libfuzzer_sys::fuzz_target;

const MACHINE: &str = include_str!("../../crates/core/fixtures/machines/small.yaml");

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let src = KernelSource::new(text).with_constant("N", 24).with_constant("M", 12);
    let Ok(ir) = parse_kernel(&src) else { return };
    let printed = ir.to_source();
    let again = parse_kernel(&KernelSource::new(printed.clone())).expect("printed kernel parses");
    assert_eq!(again, ir, "{printed}");
    if ir.total_iterations() <= 1 << 16 {
        let machine = MachineDescription::from_yaml_str(MACHINE).unwrap();
        let _ = predict_traffic(&ir, &machine, CacheOptions::default());
    }
});
