#![no_main]

use cape_core::io::{read_returns_csv, write_returns_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(panel) = read_returns_csv(data) else {
        return;
    };
    assert!(panel.returns().iter().all(|v| v.is_finite()));
    let mut out = Vec::new();
    write_returns_csv(&panel, &mut out).expect("parsed panel writes");
    let again = read_returns_csv(out.as_slice()).expect("written panel parses");
    assert_eq!(again.assets(), panel.assets());
    assert_eq!(again.n(), panel.n());
});
