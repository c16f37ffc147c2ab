#![no_main]

use cape_core::io::{read_tune_curve_csv, write_tune_curve_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(curve) = read_tune_curve_csv(data) else {
        return;
    };
    let mut out = Vec::new();
    write_tune_curve_csv(&curve, &mut out).expect("parsed curve writes");
    let again = read_tune_curve_csv(out.as_slice()).expect("written curve parses");
    assert_eq!(again.len(), curve.len());
});
