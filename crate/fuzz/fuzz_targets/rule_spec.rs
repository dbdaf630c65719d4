#![no_main]

use cbplab_core::quadrature::Rule;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rule) = Rule::parse(text) {
            assert_eq!(Rule::parse(&rule.canonical()).unwrap(), rule);
        }
    }
});
