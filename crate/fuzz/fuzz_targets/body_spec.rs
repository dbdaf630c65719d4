#![no_main]

use cbplab_core::bodies::StarBody;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(body) = StarBody::parse(text) {
        // Canonical specs parse back to the same spec.
        let spec = body.spec();
        let again = StarBody::parse(&spec).expect("canonical spec parses");
        assert_eq!(again.spec(), spec);
        let mut x = vec![0.0; body.dim()];
        x[0] = 1.0;
        let _ = body.norm(&x);
    }
});
