#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(sc) = doa_core::files::scenario_from_str(data) {
        let text = doa_core::files::scenario_to_string(&sc).unwrap();
        assert_eq!(doa_core::files::scenario_from_str(&text).unwrap(), sc);
    }
});
