#![no_main]

use kernmodel::incore::PortCycleTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(t) = PortCycleTable::from_toml_str(text) else { return };
    let again = PortCycleTable::from_toml_str(&t.to_toml_string()).expect("emitted TOML loads");
    assert_eq!(again, t);
});
