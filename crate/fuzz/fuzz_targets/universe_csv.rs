#![no_main]

use cape_core::io::{read_universe_csv, write_universe_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok((_, universe)) = read_universe_csv(data, 0) else {
        return;
    };
    let mut out = Vec::new();
    write_universe_csv(&universe, &mut out).expect("parsed universe writes");
    read_universe_csv(out.as_slice(), 0).expect("written universe parses");
});
