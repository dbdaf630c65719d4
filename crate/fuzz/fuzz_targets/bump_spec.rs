#![no_main]

use cbplab_core::bodies::Bump;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let n = 2 + (n % 3) as usize;
    if let Ok(bump) = Bump::parse(text, n) {
        let again = Bump::parse(&bump.spec(), n).expect("canonical bump parses");
        assert_eq!(again.spec(), bump.spec());
        let mut x = vec![0.0; 2 * n];
        x[0] = 1.0;
        let _ = bump.eval_direction(&x);
    }
});
