#![no_main]

use kernmodel::report::read_measurements;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = read_measurements(text) {
        assert!(rows.iter().all(|r| r.value_cy_per_cl.is_finite() && r.value_cy_per_cl > 0.0));
    }
});
