#![no_main]

use cbplab_core::frames::GridSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = GridSpec::parse(text) {
            assert_eq!(GridSpec::parse(&spec.canonical()).unwrap(), spec);
            // Building is only cheap for small grids.
            if spec.res <= 64 {
                let _ = spec.build();
            }
        }
    }
});
