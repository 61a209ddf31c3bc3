#![no_main]

use kernmodel::machine::MachineDescription;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(m) = MachineDescription::from_yaml_str(text) else { return };
    let again = MachineDescription::from_yaml_str(&m.to_yaml_string()).expect("emitted YAML loads");
    assert_eq!(again, m);
});
