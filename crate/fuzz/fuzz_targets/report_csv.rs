#![no_main]

use cape_core::io::read_report_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_report_csv(data);
});
