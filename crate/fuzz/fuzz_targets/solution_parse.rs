#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(sol) = doa_core::files::solution_from_str(data) {
        let _ = sol.z_hat().unwrap();
        let _ = sol.gamma_hat().unwrap();
    }
});
