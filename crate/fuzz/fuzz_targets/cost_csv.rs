#![no_main]

use cape_core::io::{read_cost_csv, write_cost_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(table) = read_cost_csv(data) else {
        return;
    };
    let mut out = Vec::new();
    write_cost_csv(&table, &mut out).expect("parsed table writes");
    let again = read_cost_csv(out.as_slice()).expect("written table parses");
    assert_eq!(again, table);
});
